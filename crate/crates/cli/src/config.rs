//! JSON run configuration.
//!
//! ```json
//! {
//!   "problem": { "alpha": 0.75, "beta": 0.25,
//!                "a": [[0.1, 0.2], [0.3, 0.4]], "b": [[0.4, 0.1], [0.2, 0.3]],
//!                "drift": "sec6_drift", "diffusion": "sec6_diffusion",
//!                "eta": [3.0, 5.0] },
//!   "grid": { "horizon": 1.0, "n_steps": 100 },
//!   "monte_carlo": { "n_paths": 1000, "seed": 42 },
//!   "experiment": { "kind": "simulate", "scheme": "em" }
//! }
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};
use smtde_core::smtde::{
    builtin_field, BrownianDriver, InitialState, MildForm, ProblemSpec, Scheme,
};
use smtde_core::Matrix;

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub alpha: f64,
    pub beta: f64,
    /// Rows of `A`.
    pub a: Vec<Vec<f64>>,
    /// Rows of `B`.
    pub b: Vec<Vec<f64>>,
    pub drift: String,
    pub diffusion: String,
    /// Defaults to the registry value for the named drift.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lip_b: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lip_sigma: Option<f64>,
    pub eta: Vec<f64>,
    /// Standard deviation of a Gaussian initial state around `eta`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta_std: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub horizon: f64,
    pub n_steps: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonteCarloConfig {
    pub n_paths: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchemeName {
    #[default]
    Em,
    Mild,
    MildLiteral,
}

impl SchemeName {
    pub fn scheme(self) -> Scheme {
        match self {
            SchemeName::Em => Scheme::EulerMaruyama,
            SchemeName::Mild => Scheme::Mild(MildForm::VariationOfConstants),
            SchemeName::MildLiteral => Scheme::Mild(MildForm::Literal),
        }
    }
}

/// Test functions for the Caputo identity check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IdentityFunction {
    /// `f(t) = t²`
    Square,
    /// `f(t) = t`
    Linear,
    /// `f(t) = 1`
    Constant,
}

fn default_n_iter() -> usize {
    4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Experiment {
    /// Tabulates the matrix Mittag-Leffler function of the problem's `A, B`.
    MlEval {
        times: Vec<f64>,
        /// Defaults to `α`.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        delta: Option<f64>,
        /// Defaults to `α - β`.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        rho: Option<f64>,
        /// Defaults to `α`.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        sigma_exp: Option<f64>,
        /// Also evaluate the permutable series (needs commuting matrices).
        #[serde(default)]
        perm: bool,
    },
    Simulate {
        #[serde(default)]
        scheme: SchemeName,
    },
    Picard {
        #[serde(default = "default_n_iter")]
        n_iter: usize,
        /// Defaults to the contraction threshold.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        omega: Option<f64>,
    },
    Separation {
        gamma: Vec<f64>,
        lambda: f64,
        #[serde(default)]
        scheme: SchemeName,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        t_min: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        bootstrap: Option<usize>,
    },
    Continuity {
        offsets: Vec<f64>,
        #[serde(default)]
        scheme: SchemeName,
    },
    CheckLemma {
        alphas: Vec<f64>,
        omegas: Vec<f64>,
        times: Vec<f64>,
        n_quad: usize,
    },
    CheckIdentity {
        function: IdentityFunction,
        alpha: f64,
        n_grid: usize,
        #[serde(default = "one")]
        horizon: f64,
    },
}

fn one() -> f64 {
    1.0
}

impl Experiment {
    pub fn name(&self) -> &'static str {
        match self {
            Experiment::MlEval { .. } => "ml-eval",
            Experiment::Simulate { .. } => "simulate",
            Experiment::Picard { .. } => "picard",
            Experiment::Separation { .. } => "separation",
            Experiment::Continuity { .. } => "continuity",
            Experiment::CheckLemma { .. } => "check-lemma",
            Experiment::CheckIdentity { .. } => "check-identity",
        }
    }

    fn needs_problem(&self) -> bool {
        !matches!(self, Experiment::CheckLemma { .. } | Experiment::CheckIdentity { .. })
    }

    fn needs_paths(&self) -> bool {
        matches!(
            self,
            Experiment::Simulate { .. }
                | Experiment::Picard { .. }
                | Experiment::Separation { .. }
                | Experiment::Continuity { .. }
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub problem: Option<ProblemConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub monte_carlo: Option<MonteCarloConfig>,
    pub experiment: Experiment,
}

/// A validated configuration with the core objects built.
#[derive(Debug, Clone)]
pub struct Plan {
    pub config: RunConfig,
    pub problem: Option<ProblemSpec>,
    pub initial: Option<InitialState>,
    pub driver: Option<BrownianDriver>,
    pub n_paths: usize,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Validation(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::Validation(format!("cannot read config {}: {e}", path.display()))
        })?;
        RunConfig::from_json(&text)
    }

    pub fn seed(&self) -> Option<u64> {
        self.monte_carlo.map(|m| m.seed)
    }

    pub fn override_seed(&mut self, seed: u64) {
        if let Some(mc) = &mut self.monte_carlo {
            mc.seed = seed;
        }
    }

    fn problem_spec(&self) -> Result<Option<ProblemSpec>, CliError> {
        let Some(pc) = &self.problem else {
            return Ok(None);
        };
        let a = Matrix::from_rows(&pc.a).map_err(CliError::validation)?;
        let b = Matrix::from_rows(&pc.b).map_err(CliError::validation)?;
        let drift = builtin_field(&pc.drift).map_err(CliError::validation)?;
        let diffusion = builtin_field(&pc.diffusion).map_err(CliError::validation)?;
        let horizon = self.grid.map_or(1.0, |g| g.horizon);
        let p = ProblemSpec::new(
            pc.alpha,
            pc.beta,
            a,
            b,
            drift.clone(),
            diffusion.clone(),
            pc.lip_b.unwrap_or(drift.lipschitz()),
            pc.lip_sigma.unwrap_or(diffusion.lipschitz()),
            horizon,
        )
        .map_err(CliError::validation)?;
        Ok(Some(p))
    }

    fn initial_state(&self) -> Result<Option<InitialState>, CliError> {
        let Some(pc) = &self.problem else {
            return Ok(None);
        };
        let s = match pc.eta_std {
            Some(std) if std > 0.0 => InitialState::Gaussian {
                mean: pc.eta.clone(),
                std,
            },
            _ => InitialState::Deterministic(pc.eta.clone()),
        };
        s.validate().map_err(CliError::validation)?;
        if s.dim() != pc.a.len() {
            return Err(CliError::Validation(format!(
                "eta has {} entries, matrices are {}x{}",
                s.dim(),
                pc.a.len(),
                pc.a.len()
            )));
        }
        Ok(Some(s))
    }

    fn check_experiment(&self, problem: Option<&ProblemSpec>) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Validation(m));
        let positive = |name: &str, v: f64| -> Result<(), CliError> {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(CliError::Validation(format!("{name} must be > 0, got {v}")))
            }
        };
        match &self.experiment {
            Experiment::MlEval { times, .. } => {
                if times.is_empty() || times.iter().any(|t| !(*t >= 0.0) || !t.is_finite()) {
                    return bad("ml-eval times must be a non-empty list of finite values >= 0".into());
                }
            }
            Experiment::Simulate { .. } => {}
            Experiment::Picard { n_iter, omega } => {
                if *n_iter < 3 {
                    return bad(format!("picard n_iter must be >= 3, got {n_iter}"));
                }
                if let Some(w) = omega {
                    positive("omega", *w)?;
                }
            }
            Experiment::Separation {
                gamma,
                lambda,
                t_min,
                bootstrap,
                ..
            } => {
                positive("lambda", *lambda)?;
                let dim = problem.map_or(0, ProblemSpec::dim);
                if gamma.len() != dim || gamma.iter().any(|v| !v.is_finite()) {
                    return bad(format!("gamma must have {dim} finite entries"));
                }
                if let Some(t) = t_min {
                    positive("t_min", *t)?;
                }
                if matches!(bootstrap, Some(b) if *b < 2) {
                    return bad("bootstrap needs at least 2 resamples".into());
                }
            }
            Experiment::Continuity { offsets, .. } => {
                if offsets.is_empty()
                    || offsets.iter().any(|o| !(*o >= 0.0) || !o.is_finite())
                    || offsets.windows(2).any(|w| w[1] >= w[0])
                {
                    return bad("offsets must be non-negative and strictly decreasing".into());
                }
            }
            Experiment::CheckLemma {
                alphas,
                omegas,
                times,
                n_quad,
            } => {
                if alphas.iter().any(|a| !(*a > 0.5 && *a < 1.0)) {
                    return bad("check-lemma alphas must lie in (1/2, 1)".into());
                }
                for v in omegas.iter().chain(times) {
                    positive("check-lemma omega/time", *v)?;
                }
                if alphas.is_empty() || omegas.is_empty() || times.is_empty() || *n_quad == 0 {
                    return bad("check-lemma needs alphas, omegas, times and n_quad > 0".into());
                }
            }
            Experiment::CheckIdentity {
                alpha,
                n_grid,
                horizon,
                ..
            } => {
                if !(*alpha > 0.0 && *alpha < 1.0) {
                    return bad(format!("check-identity alpha must lie in (0, 1), got {alpha}"));
                }
                if *n_grid < 2 {
                    return bad("check-identity needs n_grid >= 2".into());
                }
                positive("horizon", *horizon)?;
            }
        }
        Ok(())
    }

    /// Checks everything that can be checked before running.
    pub fn plan(self) -> Result<Plan, CliError> {
        let exp = &self.experiment;
        if exp.needs_problem() && self.problem.is_none() {
            return Err(CliError::Validation(format!("experiment '{}' needs a problem", exp.name())));
        }
        if exp.needs_paths() && (self.grid.is_none() || self.monte_carlo.is_none()) {
            return Err(CliError::Validation(format!(
                "experiment '{}' needs grid and monte_carlo sections",
                exp.name()
            )));
        }
        let problem = self.problem_spec()?;
        let initial = self.initial_state()?;
        self.check_experiment(problem.as_ref())?;
        let (driver, n_paths) = match (self.grid, self.monte_carlo) {
            (Some(g), Some(mc)) => {
                if mc.n_paths < 2 {
                    return Err(CliError::Validation(format!(
                        "n_paths must be >= 2, got {}",
                        mc.n_paths
                    )));
                }
                let d = BrownianDriver::new(mc.seed, g.n_steps).map_err(CliError::validation)?;
                (Some(d), mc.n_paths)
            }
            _ => (None, 0),
        };
        Ok(Plan {
            config: self,
            problem,
            initial,
            driver,
            n_paths,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SEC6: &str = r#"{
        "problem": { "alpha": 0.75, "beta": 0.25,
                     "a": [[0.1, 0.2], [0.3, 0.4]], "b": [[0.4, 0.1], [0.2, 0.3]],
                     "drift": "sec6_drift", "diffusion": "sec6_diffusion",
                     "eta": [3.0, 5.0] },
        "grid": { "horizon": 1.0, "n_steps": 100 },
        "monte_carlo": { "n_paths": 100, "seed": 42 },
        "experiment": { "kind": "simulate" }
    }"#;

    #[test]
    fn parses_and_plans() {
        let c = RunConfig::from_json(SEC6).unwrap();
        assert_eq!(c.experiment, Experiment::Simulate { scheme: SchemeName::Em });
        let plan = c.plan().unwrap();
        assert_eq!(plan.problem.unwrap().lip_b, 1.0);
        assert_eq!(plan.driver.unwrap().n_steps, 100);
    }

    #[test]
    fn round_trips() {
        let c = RunConfig::from_json(SEC6).unwrap();
        let text = serde_json::to_string(&c).unwrap();
        assert_eq!(RunConfig::from_json(&text).unwrap(), c);
    }

    #[test]
    fn rejects_unknown_fields() {
        let bad = SEC6.replace("\"seed\": 42", "\"seed\": 42, \"extra\": 1");
        assert!(matches!(RunConfig::from_json(&bad), Err(CliError::Validation(_))));
        let bad = SEC6.replace("\"kind\": \"simulate\"", "\"kind\": \"simulate\", \"lambda\": 1");
        assert!(RunConfig::from_json(&bad).is_err());
    }

    #[test]
    fn beta_message() {
        let bad = SEC6.replace("\"beta\": 0.25", "\"beta\": 0.8");
        let err = RunConfig::from_json(&bad).unwrap().plan().unwrap_err();
        assert_eq!(err.to_string(), "validation failed: beta must be < alpha");
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn parse_errors_carry_position() {
        let err = RunConfig::from_json("{\n  \"experiment\": 3\n}").unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
    }

    #[test]
    fn experiment_checks() {
        let sep = SEC6.replace(
            "{ \"kind\": \"simulate\" }",
            "{ \"kind\": \"separation\", \"gamma\": [1.0], \"lambda\": 0.75 }",
        );
        assert!(RunConfig::from_json(&sep).unwrap().plan().is_err());
        let cont = SEC6.replace(
            "{ \"kind\": \"simulate\" }",
            "{ \"kind\": \"continuity\", \"offsets\": [0.01, 0.1] }",
        );
        assert!(RunConfig::from_json(&cont).unwrap().plan().is_err());
        let lemma = r#"{ "experiment": { "kind": "check-lemma", "alphas": [0.75],
                         "omegas": [1.0], "times": [1.0], "n_quad": 100 } }"#;
        assert!(RunConfig::from_json(lemma).unwrap().plan().is_ok());
        let sim = r#"{ "experiment": { "kind": "simulate" } }"#;
        assert!(RunConfig::from_json(sim).unwrap().plan().is_err());
    }
}
