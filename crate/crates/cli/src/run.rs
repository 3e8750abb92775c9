use std::path::Path;

use smtde_core::analysis::{
    c_const, continuity_experiment, contraction_report, lemma25_check, m_sup, mean_and_se,
    ms_norm, omega_threshold, separation_experiment, zeta_const, SeparationOptions,
};
use smtde_core::mlmatrix::{ml_nonperm, ml_perm, MLParams, QTable};
use smtde_core::smtde::{simulate, InitialState, ProblemSpec};
use smtde_core::specfun::{caputo_identity_residual, gamma_fn, SampledFunction};
use smtde_core::Matrix;

use crate::config::{Experiment, IdentityFunction, Plan, RunConfig};
use crate::error::CliError;
use crate::output::{remove_outputs, write_outputs, Report, Row};

/// Rows and scalars produced by one experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub rows: Vec<Row>,
    pub report: Report,
}

fn entry_name(prefix: &str, i: usize, j: usize) -> String {
    format!("{prefix}[{},{}]", i + 1, j + 1)
}

fn push_matrix(rows: &mut Vec<Row>, exp: &'static str, t: f64, prefix: &str, m: &Matrix) {
    for i in 0..m.dim() {
        for j in 0..m.dim() {
            rows.push(Row::new(exp, Some(t), entry_name(prefix, i, j), m.get(i, j)));
        }
    }
}

/// 𝓜, ω at threshold, ζ there, and 𝒞.
fn fill_constants(report: &mut Report, p: &ProblemSpec) -> Result<(), CliError> {
    let m = m_sup(p).map_err(CliError::runtime)?;
    let omega = omega_threshold(p, m.value).map_err(CliError::runtime)?;
    report.m_sup = Some(m.value);
    report.omega = Some(omega);
    report.zeta = Some(zeta_const(p, m.value, omega).map_err(CliError::runtime)?);
    report.c_const = Some(c_const(p).map_err(CliError::runtime)?.value);
    report.set("m_sup_at", m.at);
    report.set("m_sup_refinement_gap", m.refinement_gap);
    Ok(())
}

fn ml_eval(
    p: &ProblemSpec,
    times: &[f64],
    rho: f64,
    sigma_exp: f64,
    delta: f64,
    perm: bool,
) -> Result<RunOutput, CliError> {
    const EXP: &str = "ml-eval";
    let params = MLParams::new(rho, sigma_exp, delta).map_err(CliError::validation)?;
    let mut q = QTable::new(p.a_mat.clone(), p.b_mat.clone()).map_err(CliError::runtime)?;
    let mut rows = Vec::new();
    let mut nonconverged = 0usize;
    let mut max_gap = 0.0f64;
    for &t in times {
        match ml_nonperm(&mut q, &params, t) {
            Ok(e) => {
                push_matrix(&mut rows, EXP, t, "E", &e.value);
                rows.push(Row::new(EXP, Some(t), "truncation_order", e.order as f64));
                rows.push(Row::new(EXP, Some(t), "tail_estimate", e.tail_estimate));
                if perm {
                    let ep = ml_perm(&p.a_mat, &p.b_mat, &params, t).map_err(CliError::runtime)?;
                    push_matrix(&mut rows, EXP, t, "E_perm", &ep.value);
                    let gap = ep.value.max_abs_diff(&e.value);
                    max_gap = max_gap.max(gap);
                    rows.push(Row::new(EXP, Some(t), "perm_max_abs_diff", gap));
                }
            }
            Err(smtde_core::Error::NonConvergence(_)) => {
                nonconverged += 1;
                rows.push(Row::flag(EXP, Some(t), "nonconverged", true));
            }
            Err(e) => return Err(CliError::runtime(e)),
        }
    }
    let mut report = Report::new(EXP);
    report.set("nonconverged", nonconverged);
    if perm {
        report.set("perm_max_abs_diff", max_gap);
    }
    Ok(RunOutput { rows, report })
}

fn check_lemma(alphas: &[f64], omegas: &[f64], times: &[f64], n_quad: usize) -> Result<RunOutput, CliError> {
    const EXP: &str = "check-lemma";
    let mut rows = Vec::new();
    let mut all_hold = true;
    for &alpha in alphas {
        for &omega in omegas {
            for &t in times {
                let c = lemma25_check(alpha, omega, t, n_quad).map_err(CliError::runtime)?;
                let tag = format!("[alpha={alpha},omega={omega}]");
                rows.push(Row::new(EXP, Some(t), format!("lhs{tag}"), c.lhs));
                rows.push(Row::new(EXP, Some(t), format!("rhs{tag}"), c.rhs));
                rows.push(Row::new(EXP, Some(t), format!("ln_lhs{tag}"), c.ln_lhs));
                rows.push(Row::new(EXP, Some(t), format!("ln_rhs{tag}"), c.ln_rhs));
                rows.push(Row::flag(EXP, Some(t), format!("holds{tag}"), c.holds));
                all_hold &= c.holds;
            }
        }
    }
    let mut report = Report::new(EXP);
    report.set("all_hold", all_hold);
    Ok(RunOutput { rows, report })
}

fn check_identity(function: IdentityFunction, alpha: f64, n_grid: usize, horizon: f64) -> Result<RunOutput, CliError> {
    const EXP: &str = "check-identity";
    let rt = CliError::runtime;
    let (f, df): (Box<dyn Fn(f64) -> f64>, Box<dyn Fn(f64) -> f64>) = match function {
        IdentityFunction::Square => {
            let g = gamma_fn(3.0 - alpha).map_err(rt)?;
            (Box::new(|t| t * t), Box::new(move |t| 2.0 * t.powf(2.0 - alpha) / g))
        }
        IdentityFunction::Linear => {
            let g = gamma_fn(2.0 - alpha).map_err(rt)?;
            (Box::new(|t| t), Box::new(move |t| t.powf(1.0 - alpha) / g))
        }
        IdentityFunction::Constant => (Box::new(|_| 1.0), Box::new(|_| 0.0)),
    };
    let fs = SampledFunction::uniform(horizon, n_grid - 1, f).map_err(rt)?;
    let dfs = SampledFunction::uniform(horizon, n_grid - 1, df).map_err(rt)?;
    let r = caputo_identity_residual(alpha, &fs, &dfs).map_err(rt)?;
    let mut report = Report::new(EXP);
    report.set("caputo_residual", r);
    Ok(RunOutput {
        rows: vec![Row::new(EXP, None, "caputo_residual", r)],
        report,
    })
}

/// Runs the planned experiment. Parallel work uses the current rayon pool.
pub fn execute(plan: &Plan) -> Result<RunOutput, CliError> {
    let exp = &plan.config.experiment;
    let name = exp.name();
    if let Experiment::CheckLemma {
        alphas,
        omegas,
        times,
        n_quad,
    } = exp
    {
        return check_lemma(alphas, omegas, times, *n_quad);
    }
    if let Experiment::CheckIdentity {
        function,
        alpha,
        n_grid,
        horizon,
    } = exp
    {
        return check_identity(*function, *alpha, *n_grid, *horizon);
    }

    let missing = || CliError::Validation(format!("experiment '{name}' needs a problem"));
    let p = plan.problem.as_ref().ok_or_else(missing)?;
    if let Experiment::MlEval {
        times,
        delta,
        rho,
        sigma_exp,
        perm,
    } = exp
    {
        return ml_eval(
            p,
            times,
            rho.unwrap_or(p.rho()),
            sigma_exp.unwrap_or(p.alpha),
            delta.unwrap_or(p.alpha),
            *perm,
        );
    }

    let init = plan.initial.as_ref().ok_or_else(missing)?;
    let drv = plan.driver.as_ref().ok_or_else(missing)?;
    let n_paths = plan.n_paths;
    let rt = CliError::runtime;
    let mut rows = Vec::new();
    let mut report = Report::new(name);
    let h = p.horizon / drv.n_steps as f64;

    match exp {
        Experiment::Simulate { scheme } => {
            let e = simulate(p, init, drv, n_paths, scheme.scheme()).map_err(rt)?;
            for i in 0..=e.n_steps() {
                let t = e.time(i);
                let m = ms_norm(&e, i).map_err(rt)?;
                rows.push(Row::new(name, Some(t), "ms_norm", m.estimate).with_se(m.std_error));
                for d in 0..e.dim() {
                    let xs: Vec<f64> = (0..e.n_paths())
                        .filter(|&k| !e.is_flagged(k))
                        .map(|k| e.state(k, i)[d])
                        .collect();
                    let m = mean_and_se(&xs).map_err(rt)?;
                    rows.push(
                        Row::new(name, Some(t), format!("mean_x{}", d + 1), m.estimate)
                            .with_se(m.std_error),
                    );
                }
            }
            fill_constants(&mut report, p)?;
            report.set("scheme", scheme.scheme().tag());
            report.set("flagged_paths", e.flagged_count());
        }
        Experiment::Picard { n_iter, omega } => {
            let r = contraction_report(p, init, drv, *n_iter, n_paths, *omega).map_err(rt)?;
            for (k, v) in r.ln_increments.iter().enumerate() {
                rows.push(Row::new(name, None, format!("ln_increment[{}]", k + 1), *v));
            }
            for (k, v) in r.iterate_ratios.iter().enumerate() {
                rows.push(Row::new(name, None, format!("ratio[{}]", k + 2), *v));
                let ln = r.ln_increments[k + 1] - r.ln_increments[k];
                rows.push(Row::new(name, None, format!("ln_ratio[{}]", k + 2), ln));
            }
            report.m_sup = Some(r.m_sup);
            report.omega = Some(r.omega);
            report.zeta = Some(r.zeta);
            report.c_const = Some(r.c_const);
            report.set("omega_min", r.omega_min);
            report.set("max_ratio", r.iterate_ratios.iter().copied().fold(0.0, f64::max));
            report.set("converged_at", r.converged_at);
        }
        Experiment::Separation {
            gamma,
            lambda,
            scheme,
            t_min,
            bootstrap,
        } => {
            let defaults = SeparationOptions::default();
            let opts = SeparationOptions {
                scheme: scheme.scheme(),
                t_min: t_min.unwrap_or(defaults.t_min),
                bootstrap_resamples: bootstrap.unwrap_or(defaults.bootstrap_resamples),
                ..defaults
            };
            let gamma = match init {
                InitialState::Deterministic(_) => InitialState::Deterministic(gamma.clone()),
                InitialState::Gaussian { std, .. } => InitialState::Gaussian {
                    mean: gamma.clone(),
                    std: *std,
                },
            };
            let r = separation_experiment(p, init, &gamma, drv, *lambda, n_paths, &opts)
                .map_err(rt)?;
            for (i, (t, m)) in r.times.iter().zip(&r.ms_distance).enumerate() {
                rows.push(Row::new(name, Some(*t), "ms_distance", m.estimate).with_se(m.std_error));
                rows.push(Row::new(name, Some(*t), "scaled_distance", r.scaled[i]));
            }
            report.fitted_exponent = Some(r.fitted_exponent);
            report.fitted_ci_low = Some(r.ci_low);
            report.fitted_ci_high = Some(r.ci_high);
            report.kappa_hat = Some(r.kappa_hat);
            report.set("lambda", r.lambda);
            report.set("lambda_threshold", r.lambda_threshold);
            report.set("lambda_threshold_proof", r.lambda_threshold_proof);
            report.set("lambda_above_threshold", r.lambda > r.lambda_threshold);
            report.set("lambda_above_threshold_proof", r.lambda > r.lambda_threshold_proof);
            report.set("fit_window_start", r.times[r.window_start]);
            report.set("separated_3se", r.separated_3se);
            report.set("consistent", r.consistent);
        }
        Experiment::Continuity { offsets, scheme } => {
            let r = continuity_experiment(p, init, offsets, drv, n_paths, scheme.scheme())
                .map_err(rt)?;
            for row in &r.rows {
                let tag = format!("[offset={}]", row.offset);
                rows.push(
                    Row::new(name, Some(row.at_time), format!("sup_ms_distance{tag}"), row.sup_ms_distance)
                        .with_se(row.std_error),
                );
                if let Some(q) = row.ratio {
                    rows.push(Row::new(name, Some(row.at_time), format!("ratio{tag}"), q));
                }
            }
            fill_constants(&mut report, p)?;
            report.set("ratio_spread", r.ratio_spread);
        }
        _ => unreachable!("handled above"),
    }
    report.set("step", h);
    Ok(RunOutput { rows, report })
}

/// Number of worker threads when `--threads` is not given.
pub fn default_threads() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

/// Loads, validates and runs a config, then writes the outputs to `out_dir`.
pub fn run(
    config_path: &Path,
    out_dir: &Path,
    threads: Option<usize>,
    seed: Option<u64>,
) -> Result<RunOutput, CliError> {
    let mut config = RunConfig::load(config_path)?;
    if let Some(s) = seed {
        config.override_seed(s);
    }
    let plan = config.plan()?;
    let threads = threads.unwrap_or_else(default_threads);
    if threads == 0 {
        return Err(CliError::Validation("--threads must be >= 1".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    let out = match pool.install(|| execute(&plan)) {
        Ok(out) => out,
        Err(e) => {
            remove_outputs(out_dir);
            return Err(e);
        }
    };
    write_outputs(out_dir, &out.rows, &out.report, &plan.config, threads)?;
    Ok(out)
}
