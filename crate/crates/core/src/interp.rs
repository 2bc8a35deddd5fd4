//! Piecewise Hermite interpolation on a uniform grid.

/// Quintic Hermite interpolant on `[0, 1]` from values, first and second
/// derivatives at both ends (derivatives already scaled by the cell width).
pub fn quintic(t: f64, y0: [f64; 3], y1: [f64; 3]) -> f64 {
    let t2 = t * t;
    let t3 = t2 * t;
    let t4 = t3 * t;
    let t5 = t4 * t;
    let h00 = 1.0 - 10.0 * t3 + 15.0 * t4 - 6.0 * t5;
    let h10 = t - 6.0 * t3 + 8.0 * t4 - 3.0 * t5;
    let h20 = 0.5 * (t2 - 3.0 * t3 + 3.0 * t4 - t5);
    let h01 = 10.0 * t3 - 15.0 * t4 + 6.0 * t5;
    let h11 = -4.0 * t3 + 7.0 * t4 - 3.0 * t5;
    let h21 = 0.5 * (t3 - 2.0 * t4 + t5);
    h00 * y0[0] + h10 * y0[1] + h20 * y0[2] + h01 * y1[0] + h11 * y1[1] + h21 * y1[2]
}

/// Cubic Hermite interpolant on `[0, 1]` from values and first derivatives.
pub fn cubic(t: f64, y0: [f64; 2], y1: [f64; 2]) -> f64 {
    let t2 = t * t;
    let t3 = t2 * t;
    let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
    let h10 = t3 - 2.0 * t2 + t;
    let h01 = -2.0 * t3 + 3.0 * t2;
    let h11 = t3 - t2;
    h00 * y0[0] + h10 * y0[1] + h01 * y1[0] + h11 * y1[1]
}

/// Locates `x` on the grid `x0 + k h`, `k = 0..n-1`. Returns the cell index
/// and the local coordinate in `[0, 1]`.
pub fn locate(x: f64, x0: f64, h: f64, n: usize) -> (usize, f64) {
    let u = (x - x0) / h;
    let k = (u.floor().max(0.0) as usize).min(n - 2);
    (k, (u - k as f64).clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quintic_reproduces_quintic_polynomials() {
        let p = |x: f64| {
            [
                x.powi(5) - 2.0 * x.powi(3) + x,
                5.0 * x.powi(4) - 6.0 * x * x + 1.0,
                20.0 * x.powi(3) - 12.0 * x,
            ]
        };
        for k in 0..=10 {
            let t = k as f64 / 10.0;
            assert!((quintic(t, p(0.0), p(1.0)) - p(t)[0]).abs() < 1e-14);
        }
    }

    #[test]
    fn cubic_reproduces_cubics() {
        let p = |x: f64| [3.0 * x.powi(3) - x + 2.0, 9.0 * x * x - 1.0];
        for k in 0..=10 {
            let t = k as f64 / 10.0;
            assert!((cubic(t, p(0.0), p(1.0)) - p(t)[0]).abs() < 1e-14);
        }
    }
}
