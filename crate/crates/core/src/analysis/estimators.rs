use crate::error::{Error, Result};
use crate::smtde::PathEnsemble;
use crate::specfun::ScalarMl;

/// A Monte Carlo mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MsEstimate {
    pub estimate: f64,
    pub std_error: f64,
    /// Paths that entered the estimate.
    pub n_used: usize,
}

/// Sample mean and standard error, summed serially in input order.
pub fn mean_and_se(samples: &[f64]) -> Result<MsEstimate> {
    let n = samples.len();
    if n < 2 {
        return Err(Error::invalid(format!(
            "mean-square estimate needs at least 2 usable paths, got {n}"
        )));
    }
    let nf = n as f64;
    let mean = samples.iter().sum::<f64>() / nf;
    let var = samples.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (nf - 1.0);
    Ok(MsEstimate {
        estimate: mean,
        std_error: (var / nf).sqrt(),
        n_used: n,
    })
}

fn sq_norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

fn sq_dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

fn check_index(e: &PathEnsemble, t_index: usize) -> Result<()> {
    if t_index > e.n_steps() {
        return Err(Error::invalid(format!(
            "time index {t_index} outside grid of {} steps",
            e.n_steps()
        )));
    }
    Ok(())
}

/// `E‖X(t_i)‖²` over unflagged paths (Euclidean norm).
pub fn ms_norm(e: &PathEnsemble, t_index: usize) -> Result<MsEstimate> {
    check_index(e, t_index)?;
    let samples: Vec<f64> = (0..e.n_paths())
        .filter(|&p| !e.is_flagged(p))
        .map(|p| sq_norm(e.state(p, t_index)))
        .collect();
    if samples.is_empty() && e.n_paths() > 0 {
        return Err(Error::Ensemble {
            flagged: e.n_paths(),
            total: e.n_paths(),
        });
    }
    mean_and_se(&samples)
}

/// `E‖X(t_i) - Y(t_i)‖²` over paths unflagged in both ensembles.
pub fn ms_distance(x: &PathEnsemble, y: &PathEnsemble, t_index: usize) -> Result<MsEstimate> {
    x.check_compatible(y)?;
    check_index(x, t_index)?;
    let samples: Vec<f64> = (0..x.n_paths())
        .filter(|&p| !x.is_flagged(p) && !y.is_flagged(p))
        .map(|p| sq_dist(x.state(p, t_index), y.state(p, t_index)))
        .collect();
    if samples.is_empty() && x.n_paths() > 0 {
        return Err(Error::Ensemble {
            flagged: x.n_paths(),
            total: x.n_paths(),
        });
    }
    mean_and_se(&samples)
}

/// [`ms_distance`] at every grid point.
pub fn ms_distance_series(x: &PathEnsemble, y: &PathEnsemble) -> Result<Vec<MsEstimate>> {
    (0..=x.n_steps()).map(|i| ms_distance(x, y, i)).collect()
}

/// Parameters of the weighted maximum norm
/// `sup_t E‖ξ(t)‖² / E_{2α-1}(ω t^{2α-1})`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightedNormParams {
    pub omega: f64,
    pub alpha: f64,
}

impl WeightedNormParams {
    pub fn new(omega: f64, alpha: f64) -> Result<Self> {
        if !(omega > 0.0) || !omega.is_finite() {
            return Err(Error::domain(format!("omega must be > 0, got {omega}")));
        }
        if !(alpha > 0.5 && alpha < 1.0) {
            return Err(Error::invalid(format!("alpha must lie in (1/2, 1), got {alpha}")));
        }
        Ok(WeightedNormParams { omega, alpha })
    }

    /// `ln E_{2α-1}(ω t^{2α-1})` on the given times.
    pub fn ln_weights(&self, times: &[f64]) -> Result<Vec<f64>> {
        let order = 2.0 * self.alpha - 1.0;
        let mut ml = ScalarMl::new(order)?;
        times
            .iter()
            .map(|&t| ml.ln_eval(self.omega * t.powf(order)))
            .collect()
    }
}

/// Natural log of the weighted norm of `x - y`; `-inf` when the two
/// ensembles coincide. Stays finite when the weights overflow `f64`.
pub fn ln_weighted_norm(x: &PathEnsemble, y: &PathEnsemble, w: &WeightedNormParams) -> Result<f64> {
    let d = ms_distance_series(x, y)?;
    let ln_w = w.ln_weights(&x.times())?;
    Ok(d
        .iter()
        .zip(&ln_w)
        .map(|(m, lw)| m.estimate.ln() - lw)
        .fold(f64::NEG_INFINITY, f64::max))
}

pub fn weighted_norm(x: &PathEnsemble, y: &PathEnsemble, w: &WeightedNormParams) -> Result<f64> {
    Ok(ln_weighted_norm(x, y, w)?.exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;
    use crate::smtde::*;

    fn constant_problem() -> ProblemSpec {
        let mut p = ProblemSpec::sec6(1.0).unwrap();
        p.a_mat = Matrix::zeros(2);
        p.b_mat = Matrix::zeros(2);
        p.with_fields(VectorField::zero(), VectorField::zero())
    }

    fn det(v: &[f64]) -> InitialState {
        InitialState::deterministic(v.to_vec()).unwrap()
    }

    #[test]
    fn deterministic_ensemble_has_zero_error() {
        let p = ProblemSpec::sec6(1.0).unwrap();
        let p = p.with_fields(p.drift.clone(), VectorField::zero());
        let e = simulate_em(&p, &det(&[3.0, 5.0]), &BrownianDriver::new(1, 20).unwrap(), 4).unwrap();
        let m = ms_norm(&e, 20).unwrap();
        let x = e.state(0, 20);
        assert_eq!(m.std_error, 0.0);
        assert!((m.estimate - (x[0] * x[0] + x[1] * x[1])).abs() < 1e-12 * m.estimate);
        assert_eq!(ms_norm(&e, 0).unwrap().estimate, 34.0);
        assert!(ms_norm(&e, 21).is_err());
    }

    #[test]
    fn brownian_second_moment() {
        let drv = BrownianDriver::new(77, 50).unwrap();
        let e = PathEnsemble::brownian(drv, 1.0, 10_000);
        for i in [10, 25, 50] {
            let m = ms_norm(&e, i).unwrap();
            assert!((m.estimate - e.time(i)).abs() < 3.0 * m.std_error, "{m:?}");
        }
    }

    #[test]
    fn needs_two_paths() {
        let e = PathEnsemble::brownian(BrownianDriver::new(1, 5).unwrap(), 1.0, 1);
        assert!(ms_norm(&e, 1).is_err());
    }

    #[test]
    fn weighted_norm_cases() {
        let p = constant_problem();
        let drv = BrownianDriver::new(3, 40).unwrap();
        let (x, y) = coupled_pair(&p, &det(&[3.0, 5.0]), &det(&[3.5, 5.5]), &drv, 3).unwrap();
        let w = WeightedNormParams::new(2.0, 0.75).unwrap();
        assert_eq!(weighted_norm(&x, &x, &w).unwrap(), 0.0);
        // constant difference: supremum at t = 0
        assert!((weighted_norm(&x, &y, &w).unwrap() - 0.5).abs() < 1e-15);

        let stochastic = ProblemSpec::sec6(1.0).unwrap();
        let (u, v) =
            coupled_pair(&stochastic, &det(&[3.0, 5.0]), &det(&[3.5, 5.5]), &drv, 50).unwrap();
        let mut last = f64::INFINITY;
        for omega in [0.5, 1.0, 5.0, 50.0, 1e3] {
            let wn = weighted_norm(&u, &v, &WeightedNormParams::new(omega, 0.75).unwrap()).unwrap();
            assert!(wn <= last);
            last = wn;
        }
        let sup = ms_distance_series(&u, &v)
            .unwrap()
            .iter()
            .fold(0.0f64, |m, e| m.max(e.estimate));
        assert!(weighted_norm(&u, &v, &w).unwrap() <= sup);
    }

    #[test]
    fn huge_weights_stay_in_log_space() {
        let drv = BrownianDriver::new(3, 40).unwrap();
        let p = ProblemSpec::sec6(1.0).unwrap();
        let (x, y) = coupled_pair(&p, &det(&[3.0, 5.0]), &det(&[3.5, 5.5]), &drv, 4).unwrap();
        let w = WeightedNormParams::new(600.0, 0.75).unwrap();
        let ln = ln_weighted_norm(&x, &y, &w).unwrap();
        assert!(ln.is_finite());
        assert!(WeightedNormParams::new(0.0, 0.75).is_err());
    }
}
