use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::analysis::constants::{c_const, m_sup, omega_threshold, zeta_const};
use crate::analysis::estimators::{ln_weighted_norm, mean_and_se, MsEstimate, WeightedNormParams};
use crate::error::{Error, Result};
use crate::smtde::{
    initial_iterate, map_coupled_paths, picard_apply_with, BrownianDriver, InitialState,
    MildForm, ProblemSpec, Scheme, VolterraKernel,
};

/// Constants of the contraction argument and the ratios actually observed.
#[derive(Debug, Clone, PartialEq)]
pub struct ContractionReport {
    pub m_sup: f64,
    pub omega_min: f64,
    /// ω used for the weighted norm.
    pub omega: f64,
    pub zeta: f64,
    pub c_const: f64,
    /// `ln ‖Y_{k+1} - Y_k‖²_ω` for `k = 0, 1, ...`.
    pub ln_increments: Vec<f64>,
    /// `‖Y_{k+1} - Y_k‖²_ω / ‖Y_k - Y_{k-1}‖²_ω`.
    pub iterate_ratios: Vec<f64>,
    /// First `k` with `Y_k = Y_{k-1}` exactly, if reached.
    pub converged_at: Option<usize>,
}

/// Runs `n_iter` Picard steps from `Y_0 ≡ η` with the mild operator and
/// measures successive increments in the weighted norm. `omega` defaults to
/// the threshold value.
pub fn contraction_report(
    p: &ProblemSpec,
    init: &InitialState,
    drv: &BrownianDriver,
    n_iter: usize,
    n_paths: usize,
    omega: Option<f64>,
) -> Result<ContractionReport> {
    if n_iter < 3 {
        return Err(Error::invalid(format!("need at least 3 Picard iterations, got {n_iter}")));
    }
    let m = m_sup(p)?.value;
    let omega_min = omega_threshold(p, m)?;
    let omega = omega.unwrap_or(omega_min);
    let zeta = zeta_const(p, m, omega)?;
    let c = c_const(p)?.value;
    let w = WeightedNormParams::new(omega, p.alpha)?;

    let kernel = VolterraKernel::mild(p, drv.n_steps, MildForm::default())?;
    let mut y = initial_iterate(p, init, drv, n_paths)?;
    let mut ln_increments = Vec::with_capacity(n_iter);
    let mut converged_at = None;
    for k in 1..=n_iter {
        let next = picard_apply_with(&kernel, p, init, &y)?;
        let ln_inc = ln_weighted_norm(&next, &y, &w)?;
        if ln_inc == f64::NEG_INFINITY {
            converged_at = Some(k);
            break;
        }
        ln_increments.push(ln_inc);
        y = next;
    }
    let iterate_ratios = ln_increments.windows(2).map(|v| (v[1] - v[0]).exp()).collect();
    Ok(ContractionReport {
        m_sup: m,
        omega_min,
        omega,
        zeta,
        c_const: c,
        ln_increments,
        iterate_ratios,
        converged_at,
    })
}

/// Squared distances `‖φ(t_i, η) - φ(t_i, γ)‖²` per usable path.
fn coupled_sq_distances(
    p: &ProblemSpec,
    eta: &InitialState,
    gamma: &InitialState,
    drv: &BrownianDriver,
    n_paths: usize,
    scheme: Scheme,
) -> Result<Vec<Vec<f64>>> {
    let dim = p.dim();
    let rows = map_coupled_paths(p, eta, gamma, drv, n_paths, scheme, |x, y| {
        if x.flagged || y.flagged {
            return None;
        }
        Some(
            x.values
                .chunks(dim)
                .zip(y.values.chunks(dim))
                .map(|(a, b)| a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum())
                .collect::<Vec<f64>>(),
        )
    })?;
    Ok(rows.into_iter().flatten().collect())
}

fn per_time_estimates(rows: &[Vec<f64>], n_times: usize) -> Result<Vec<MsEstimate>> {
    let mut column = vec![0.0; rows.len()];
    (0..n_times)
        .map(|i| {
            for (c, r) in column.iter_mut().zip(rows) {
                *c = r[i];
            }
            mean_and_se(&column)
        })
        .collect()
}

/// Ordinary least squares `y = a + b x`; returns `(a, b)`.
fn ols(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let b = sxy / sxx;
    (my - b * mx, b)
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

const BOOTSTRAP_SALT: u64 = 0x2545_f491_4f6c_dd1d;

/// Fit protocol for [`separation_experiment`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeparationOptions {
    pub scheme: Scheme,
    /// Start of the log-log fit window.
    pub t_min: f64,
    pub bootstrap_resamples: usize,
    /// Slack on the fitted exponent: consistent when `p ≤ α + tolerance`.
    pub tolerance: f64,
}

impl Default for SeparationOptions {
    fn default() -> Self {
        SeparationOptions {
            scheme: Scheme::EulerMaruyama,
            t_min: 1.0,
            bootstrap_resamples: 200,
            tolerance: 0.25,
        }
    }
}

/// Mean-square separation of two coupled solutions and a power-law fit
/// `d(t) = √E‖φ(t,η) - φ(t,γ)‖² ≈ κ̂^{1/2} t^{-p}` over `[t_min, T]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SeparationReport {
    pub times: Vec<f64>,
    pub ms_distance: Vec<MsEstimate>,
    pub lambda: f64,
    /// `t^λ d(t)`.
    pub scaled: Vec<f64>,
    /// First grid index inside the fit window.
    pub window_start: usize,
    pub fitted_exponent: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// Coefficient of the squared form `E‖·‖² ≈ κ̂ t^{-2p}`.
    pub kappa_hat: f64,
    pub alpha: f64,
    /// `α`, the separation threshold on λ.
    pub lambda_threshold: f64,
    /// `α/(1-α)`, the threshold appearing in its proof.
    pub lambda_threshold_proof: f64,
    /// `d(t) > 3 SE` at every window time.
    pub separated_3se: bool,
    /// `p ≤ α + tolerance`.
    pub consistent: bool,
}

pub fn separation_experiment(
    p: &ProblemSpec,
    eta: &InitialState,
    gamma: &InitialState,
    drv: &BrownianDriver,
    lambda: f64,
    n_paths: usize,
    opts: &SeparationOptions,
) -> Result<SeparationReport> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::invalid(format!("lambda must be > 0, got {lambda}")));
    }
    if eta == gamma {
        return Err(Error::Degenerate("initial states coincide".into()));
    }
    if opts.bootstrap_resamples < 2 {
        return Err(Error::invalid("bootstrap needs at least 2 resamples"));
    }
    let h = p.horizon / drv.n_steps as f64;
    let times: Vec<f64> = (0..=drv.n_steps).map(|i| i as f64 * h).collect();
    let window_start = times.iter().position(|&t| t >= opts.t_min && t > 0.0).ok_or_else(|| {
        Error::invalid(format!("fit window t >= {} is empty for T = {}", opts.t_min, p.horizon))
    })?;
    if times.len() - window_start < 3 {
        return Err(Error::invalid("fit window needs at least 3 grid points"));
    }

    let rows = coupled_sq_distances(p, eta, gamma, drv, n_paths, opts.scheme)?;
    let ms = per_time_estimates(&rows, times.len())?;
    if ms.iter().all(|m| m.estimate == 0.0) {
        return Err(Error::Degenerate("zero separation at every time".into()));
    }
    if ms[window_start..].iter().any(|m| m.estimate <= 0.0) {
        return Err(Error::Degenerate("separation vanishes inside the fit window".into()));
    }

    let log_t: Vec<f64> = times[window_start..].iter().map(|t| t.ln()).collect();
    let fit = |sums: &[f64]| {
        let log_d: Vec<f64> = sums.iter().map(|s| 0.5 * s.ln()).collect();
        ols(&log_t, &log_d)
    };
    let window_means: Vec<f64> = ms[window_start..].iter().map(|m| m.estimate).collect();
    let (intercept, slope) = fit(&window_means);

    let mut rng = ChaCha8Rng::seed_from_u64(drv.seed ^ BOOTSTRAP_SALT);
    let n = rows.len();
    let width = times.len() - window_start;
    let mut exponents = Vec::with_capacity(opts.bootstrap_resamples);
    let mut sums = vec![0.0; width];
    for _ in 0..opts.bootstrap_resamples {
        sums.fill(0.0);
        for _ in 0..n {
            let r = &rows[rng.random_range(0..n)][window_start..];
            for (s, v) in sums.iter_mut().zip(r) {
                *s += v;
            }
        }
        exponents.push(-fit(&sums).1);
    }
    exponents.sort_by(f64::total_cmp);

    let fitted_exponent = -slope;
    Ok(SeparationReport {
        scaled: times
            .iter()
            .zip(&ms)
            .map(|(t, m)| t.powf(lambda) * m.estimate.sqrt())
            .collect(),
        times,
        lambda,
        window_start,
        fitted_exponent,
        ci_low: quantile(&exponents, 0.025),
        ci_high: quantile(&exponents, 0.975),
        kappa_hat: (2.0 * intercept).exp(),
        alpha: p.alpha,
        lambda_threshold: p.alpha,
        lambda_threshold_proof: p.alpha / (1.0 - p.alpha),
        separated_3se: ms[window_start..].iter().all(|m| m.estimate > 3.0 * m.std_error),
        consistent: fitted_exponent <= p.alpha + opts.tolerance,
        ms_distance: ms,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContinuityRow {
    pub offset: f64,
    /// `sup_t E‖φ(t,η) - φ(t,γ)‖²`.
    pub sup_ms_distance: f64,
    pub std_error: f64,
    pub at_time: f64,
    /// `sup_t d² / ‖η - γ‖²`; undefined for a zero offset.
    pub ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContinuityReport {
    pub rows: Vec<ContinuityRow>,
    /// Largest over smallest defined ratio.
    pub ratio_spread: Option<f64>,
}

/// Perturbs η along `u = (1, ..., 1)/√n` by each offset and records the
/// worst mean-square distance over `[0, T]`.
pub fn continuity_experiment(
    p: &ProblemSpec,
    eta: &InitialState,
    offsets: &[f64],
    drv: &BrownianDriver,
    n_paths: usize,
    scheme: Scheme,
) -> Result<ContinuityReport> {
    if offsets.is_empty() {
        return Err(Error::invalid("no offsets given"));
    }
    if offsets.iter().any(|o| !(*o >= 0.0) || !o.is_finite()) {
        return Err(Error::invalid("offsets must be finite and >= 0"));
    }
    if offsets.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::invalid("offsets must be strictly decreasing"));
    }
    let dim = p.dim();
    let u = 1.0 / (dim as f64).sqrt();
    let h = p.horizon / drv.n_steps as f64;
    let mut rows = Vec::with_capacity(offsets.len());
    for &offset in offsets {
        let gamma = eta.shifted(&vec![offset * u; dim]);
        let dist = coupled_sq_distances(p, eta, &gamma, drv, n_paths, scheme)?;
        let ms = per_time_estimates(&dist, drv.n_steps + 1)?;
        let (i, best) = ms
            .iter()
            .enumerate()
            .fold((0, ms[0]), |acc, (i, m)| if m.estimate > acc.1.estimate { (i, *m) } else { acc });
        rows.push(ContinuityRow {
            offset,
            sup_ms_distance: best.estimate,
            std_error: best.std_error,
            at_time: i as f64 * h,
            ratio: (offset > 0.0).then(|| best.estimate / (offset * offset)),
        });
    }
    let ratios: Vec<f64> = rows.iter().filter_map(|r| r.ratio).collect();
    let ratio_spread = (!ratios.is_empty()).then(|| {
        let hi = ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lo = ratios.iter().copied().fold(f64::INFINITY, f64::min);
        hi / lo
    });
    Ok(ContinuityReport { rows, ratio_spread })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;
    use crate::smtde::VectorField;

    fn det(v: &[f64]) -> InitialState {
        InitialState::deterministic(v.to_vec()).unwrap()
    }

    fn inert(horizon: f64) -> ProblemSpec {
        let mut p = ProblemSpec::sec6(horizon).unwrap();
        p.a_mat = Matrix::zeros(2);
        p.b_mat = Matrix::zeros(2);
        p.with_fields(VectorField::zero(), VectorField::zero())
    }

    #[test]
    fn ols_and_quantile() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y: Vec<f64> = x.iter().map(|v| 2.0 - 0.5 * v).collect();
        let (a, b) = ols(&x, &y);
        assert!((a - 2.0).abs() < 1e-14 && (b + 0.5).abs() < 1e-14);
        assert_eq!(quantile(&[1.0, 2.0, 3.0], 0.5), 2.0);
        assert_eq!(quantile(&[1.0, 2.0], 0.25), 1.25);
    }

    #[test]
    fn contraction_immediate_for_inert_problem() {
        let p = inert(1.0);
        let drv = BrownianDriver::new(1, 20).unwrap();
        let r = contraction_report(&p, &det(&[3.0, 5.0]), &drv, 3, 4, None).unwrap();
        assert_eq!(r.converged_at, Some(1));
        assert!(r.iterate_ratios.is_empty());
        assert!(contraction_report(&p, &det(&[3.0, 5.0]), &drv, 2, 4, None).is_err());
    }

    #[test]
    fn contraction_sec6_ratios_below_zeta() {
        let p = ProblemSpec::sec6(1.0).unwrap();
        let drv = BrownianDriver::new(2, 50).unwrap();
        let r = contraction_report(&p, &det(&[3.0, 5.0]), &drv, 4, 50, None).unwrap();
        assert_eq!(r.zeta, 0.75);
        assert!(!r.iterate_ratios.is_empty());
        assert!(r.iterate_ratios.iter().all(|q| *q <= r.zeta + 0.1), "{r:?}");
        let doubled = contraction_report(&p, &det(&[3.0, 5.0]), &drv, 4, 50, Some(2.0 * r.omega)).unwrap();
        assert!((doubled.zeta - 0.375).abs() < 1e-15);
    }

    #[test]
    fn separation_degenerate() {
        let p = ProblemSpec::sec6(4.0).unwrap();
        let drv = BrownianDriver::new(1, 40).unwrap();
        let e = det(&[3.0, 5.0]);
        let err = separation_experiment(&p, &e, &e, &drv, 0.75, 10, &SeparationOptions::default());
        assert!(matches!(err, Err(Error::Degenerate(_))));
    }

    #[test]
    fn separation_constant_paths_fit_zero_exponent() {
        let p = inert(4.0);
        let drv = BrownianDriver::new(1, 40).unwrap();
        let r = separation_experiment(
            &p,
            &det(&[3.0, 5.0]),
            &det(&[3.5, 5.5]),
            &drv,
            0.75,
            4,
            &SeparationOptions::default(),
        )
        .unwrap();
        assert!(r.fitted_exponent.abs() < 1e-12);
        assert!((r.kappa_hat - 0.5).abs() < 1e-12);
        assert!(r.consistent);
        assert_eq!(r.window_start, 10);
        assert!((r.lambda_threshold_proof - 3.0).abs() < 1e-15);
    }

    #[test]
    fn separation_single_term_case_runs() {
        // β = 0 with A = B = 0: the single-term Caputo equation
        let mut p = ProblemSpec::sec6(4.0).unwrap();
        p.a_mat = Matrix::zeros(2);
        p.b_mat = Matrix::zeros(2);
        p.beta = 0.0;
        let drv = BrownianDriver::new(5, 80).unwrap();
        let r = separation_experiment(
            &p,
            &det(&[3.0, 5.0]),
            &det(&[3.5, 5.5]),
            &drv,
            0.75,
            200,
            &SeparationOptions::default(),
        )
        .unwrap();
        assert!(r.fitted_exponent.is_finite());
        assert!(r.ci_low <= r.fitted_exponent + 1e-9 && r.fitted_exponent <= r.ci_high + 1e-9);
    }

    #[test]
    fn continuity_inert_ratio_one() {
        let p = inert(1.0);
        let drv = BrownianDriver::new(1, 20).unwrap();
        let r = continuity_experiment(&p, &det(&[3.0, 5.0]), &[0.1, 0.01, 0.0], &drv, 3, Scheme::EulerMaruyama)
            .unwrap();
        for row in &r.rows[..2] {
            assert!((row.sup_ms_distance - row.offset * row.offset).abs() < 1e-15);
            assert!((row.ratio.unwrap() - 1.0).abs() < 1e-12);
        }
        assert_eq!(r.rows[2].sup_ms_distance, 0.0);
        assert_eq!(r.rows[2].ratio, None);
        assert!(continuity_experiment(&p, &det(&[3.0, 5.0]), &[0.1, 0.2], &drv, 3, Scheme::EulerMaruyama).is_err());
    }
}
