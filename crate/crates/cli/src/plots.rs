use std::fs::File;
use std::io::{BufWriter, Write};

use anyhow::Result;
use nalgebra::DVector;
use torbit_core::io::fmt_f64;
use torbit_core::model::{u_hat, Blocks};
use torbit_core::profile::ProfileEvaluator;

use crate::config::ExperimentConfig;

/// `s` values of the section curves.
pub const SECTION_S: [f64; 7] = [-3.0, -1.0, 0.0, 0.5, 1.0, 3.0, 5.0];

const SECTION_T: (f64, f64, usize) = (-0.5, 3.0, 701);
const U_POINTS: usize = 2001;

fn row<W: Write>(w: &mut W, cells: &[f64]) -> std::io::Result<()> {
    let line: Vec<String> = cells.iter().map(|&x| fmt_f64(x)).collect();
    writeln!(w, "{}", line.join(","))
}

/// Writes `plots/*.csv`; `create` opens a file relative to the output dir.
pub fn export(
    cfg: &ExperimentConfig,
    create: &mut dyn FnMut(&str) -> Result<BufWriter<File>>,
) -> Result<()> {
    let cone = &cfg.cone;
    let n = cone.dim();
    let blocks = Blocks::new(cfg.model_params()?)?;

    let mut w = create("plots/cone.csv")?;
    let coords: Vec<String> = (0..n).map(|i| format!("x{i}")).collect();
    writeln!(w, "set,index,{}", coords.join(","))?;
    let dual = cone.dual_cone_basis();
    for (set, m) in [("cone", cone.a()), ("dual", &dual)] {
        for j in 0..n {
            let col: Vec<String> = m.column(j).iter().map(|&x| fmt_f64(x)).collect();
            writeln!(w, "{set},{j},{}", col.join(","))?;
        }
    }
    let p: Vec<String> = cone.p_star().iter().map(|&x| fmt_f64(x)).collect();
    writeln!(w, "p_star,0,{}", p.join(","))?;
    w.flush()?;

    let params = blocks.params;
    let (lo, hi) = blocks.curve().support();
    let (lo, hi) = (lo - 0.05 * (hi - lo), hi + 0.05 * (hi - lo));
    let mut w = create("plots/u_hat.csv")?;
    writeln!(w, "x,u_hat,u_eps,du,d2u")?;
    for k in 0..U_POINTS {
        let x = lo + (hi - lo) * k as f64 / (U_POINTS - 1) as f64;
        let j = blocks.u(x);
        row(&mut w, &[x, u_hat(x, &params), j.value, j.d1, j.d2])?;
    }
    w.flush()?;

    let mut w = create("plots/smooth_curve.csv")?;
    blocks.curve().write_csv(&mut w, 1)?;
    w.flush()?;

    let ev = ProfileEvaluator::new(cone.clone(), blocks, cfg.c, cfg.eps_s)?;
    let mut w = create("plots/profile_sections.csv")?;
    writeln!(w, "s,t,f")?;
    let (t0, t1, m) = SECTION_T;
    for &s in &SECTION_S {
        for k in 0..m {
            let t = t0 + (t1 - t0) * k as f64 / (m - 1) as f64;
            let y = DVector::from_element(n, t);
            row(&mut w, &[s, t, ev.f_jet(s, &y).value])?;
        }
    }
    w.flush()?;
    Ok(())
}
