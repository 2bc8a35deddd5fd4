use std::path::{Path, PathBuf};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use torbit_core::cone::{ConeSpec, HomologyClass};
use torbit_core::dynamics::{check_window, Hamiltonian, MechanicalSystem, SigmaProfile, TrigTerm};
use torbit_core::model::ModelParams;
use torbit_core::orbits::integrable_orbit;
use torbit_core::profile::DEFAULT_EPS_S;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub delta: f64,
    pub eps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PotentialConfig {
    pub signature: Vec<f64>,
    pub terms: Vec<TrigTerm>,
    pub amplitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LemmaConfig {
    pub alpha: Vec<HomologyClass>,
    pub s_grid: Vec<f64>,
}

/// Everything one run needs. Missing keys in a config file take the
/// defaults of the Arnold experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub cone: ConeSpec,
    pub model: ModelConfig,
    pub c: f64,
    pub eps_s: f64,
    pub lemma: LemmaConfig,
    pub classes: Vec<HomologyClass>,
    pub windows: Vec<[f64; 2]>,
    pub potential: PotentialConfig,
    pub step: f64,
    pub leak_samples: usize,
    pub out: PathBuf,
    pub seed: u64,
}

fn class(v: &[i64]) -> HomologyClass {
    HomologyClass::new(v.to_vec()).expect("nonzero literal")
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let arnold = MechanicalSystem::arnold(0.05);
        Self {
            cone: ConeSpec::arnold(DVector::from_vec(vec![2.0, 0.0]), 100.0).expect("Arnold cone"),
            model: ModelConfig {
                delta: 1e-2,
                eps: 1e-4,
            },
            c: 3.0,
            eps_s: DEFAULT_EPS_S,
            lemma: LemmaConfig {
                alpha: vec![class(&[1, 0])],
                s_grid: vec![-5.0, -3.0, -1.0, -0.5, 0.0, 0.5, 1.0, 3.0, 5.0],
            },
            classes: vec![
                class(&[1, 0]),
                class(&[2, 1]),
                class(&[2, -1]),
                class(&[3, 1]),
            ],
            windows: vec![[0.2, 0.3], [0.45, 0.55], [0.9, 1.0]],
            potential: PotentialConfig {
                signature: arnold.signature().to_vec(),
                terms: arnold.terms().to_vec(),
                amplitude: 0.05,
            },
            step: 1e-3,
            leak_samples: 10_000,
            out: PathBuf::from("out"),
            seed: 0,
        }
    }
}

/// A config that failed validation, with the invariant it broke.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConfigError {
    pub invariant: String,
    pub detail: String,
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.invariant, self.detail)
    }
}

impl std::error::Error for ConfigError {}

fn fail(invariant: &str, detail: impl Into<String>) -> ConfigError {
    ConfigError {
        invariant: invariant.into(),
        detail: detail.into(),
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| fail("config_readable", format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| fail("config_well_formed", e.to_string()))
    }

    pub fn model_params(&self) -> Result<ModelParams, ConfigError> {
        ModelParams::new(self.model.delta, self.model.eps)
            .map_err(|e| fail("model_params", e.to_string()))
    }

    pub fn system(&self) -> Result<MechanicalSystem, ConfigError> {
        MechanicalSystem::new(
            self.potential.signature.clone(),
            self.potential.terms.clone(),
            self.potential.amplitude,
        )
        .map_err(|e| fail("potential", e.to_string()))
    }

    /// Composition height used for class `alpha`: `<p*, alpha>`.
    pub fn sigma_height(&self, alpha: &HomologyClass) -> f64 {
        self.cone.pairing(alpha)
    }

    /// Checks every module precondition the commands rely on.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let n = self.cone.dim();
        self.model_params()?;
        if !(self.c > 0.0) {
            return Err(fail("height_positive", format!("c = {}", self.c)));
        }
        if !(self.eps_s > 0.0 && self.eps_s < 0.1) {
            return Err(fail("smoothing_radius", format!("eps_s = {}", self.eps_s)));
        }
        if !(self.step > 0.0 && self.step <= 0.1) {
            return Err(fail("integrator_step", format!("step = {}", self.step)));
        }
        for a in &self.lemma.alpha {
            self.cone
                .check_existence_hypotheses(a, self.c)
                .map_err(|e| {
                    fail(
                        "existence_hypotheses: alpha in C* and <p*, alpha> <= c",
                        e.to_string(),
                    )
                })?;
        }
        if self.lemma.s_grid.iter().any(|s| !s.is_finite()) {
            return Err(fail("s_grid_finite", format!("{:?}", self.lemma.s_grid)));
        }
        let system = self.system()?;
        if system.dim() != n {
            return Err(fail(
                "potential_dimension",
                format!("{} vs cone {n}", system.dim()),
            ));
        }
        for &[lo, hi] in &self.windows {
            if !(hi > lo) {
                return Err(fail("window_nondegenerate", format!("({lo}, {hi})")));
            }
        }
        for a in &self.classes {
            if a.dim() != n {
                return Err(fail("class_dimension", format!("{a}")));
            }
            let height = self.sigma_height(a);
            for &[lo, hi] in &self.windows {
                let sigma = SigmaProfile::new(lo, hi, height.max(f64::MIN_POSITIVE))
                    .map_err(|e| fail("window_nondegenerate", e.to_string()))?;
                check_window(&system, &sigma, self.cone.p_star()).map_err(|e| {
                    fail(
                        "window_feasible: K(p*) - M > e_hi > e_lo > 0",
                        e.to_string(),
                    )
                })?;
                if !(height > 0.0) {
                    return Err(fail(
                        "sigma_height_positive",
                        format!("<p*, {a}> = {height}"),
                    ));
                }
                integrable_orbit(a, 0.5 * (lo + hi), system.signature())
                    .map_err(|e| fail("class_seedable", e.to_string()))?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_validates_and_round_trips() {
        let c = ExperimentConfig::default();
        c.validate().unwrap();
        let text = serde_json::to_string(&c).unwrap();
        let back: ExperimentConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn partial_files_fill_defaults() {
        let c: ExperimentConfig = serde_json::from_str(r#"{"c": 4.0, "seed": 9}"#).unwrap();
        assert_eq!(c.c, 4.0);
        assert_eq!(c.windows, ExperimentConfig::default().windows);
    }

    #[test]
    fn pairing_above_height_is_rejected() {
        let c = ExperimentConfig {
            lemma: LemmaConfig {
                alpha: vec![class(&[2, 1])],
                s_grid: vec![1.0],
            },
            ..Default::default()
        };
        let e = c.validate().unwrap_err();
        assert!(e.invariant.starts_with("existence_hypotheses"), "{e}");
    }

    #[test]
    fn infeasible_window_is_rejected() {
        let c = ExperimentConfig {
            windows: vec![[0.5, 1.9]],
            ..Default::default()
        };
        assert!(c
            .validate()
            .unwrap_err()
            .invariant
            .starts_with("window_feasible"));
    }
}
