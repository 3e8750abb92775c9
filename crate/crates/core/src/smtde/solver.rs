use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::smtde::driver::BrownianDriver;
use crate::smtde::ensemble::{PathEnsemble, Scheme};
use crate::smtde::kernel::{MildForm, PathOutcome, VolterraKernel};
use crate::smtde::problem::{InitialState, ProblemSpec};

/// An ensemble with more than this fraction of flagged paths is an error.
pub const FLAGGED_FRACTION_LIMIT: f64 = 0.1;

fn check_flagged(flagged: usize, total: usize) -> Result<()> {
    if flagged as f64 > FLAGGED_FRACTION_LIMIT * total as f64 {
        return Err(Error::Ensemble { flagged, total });
    }
    Ok(())
}

fn check_setup(p: &ProblemSpec, init: &InitialState, n_paths: usize) -> Result<()> {
    p.validate()?;
    init.validate()?;
    if init.dim() != p.dim() {
        return Err(Error::invalid(format!(
            "initial state has dimension {}, problem has {}",
            init.dim(),
            p.dim()
        )));
    }
    if n_paths == 0 {
        return Err(Error::invalid("need at least one path"));
    }
    Ok(())
}

fn build_kernel(p: &ProblemSpec, n_steps: usize, scheme: Scheme) -> Result<VolterraKernel> {
    match scheme {
        Scheme::EulerMaruyama => VolterraKernel::euler_maruyama(p, n_steps),
        Scheme::Mild(form) => VolterraKernel::mild(p, n_steps, form),
        other => Err(Error::invalid(format!(
            "scheme '{}' cannot be simulated directly",
            other.tag()
        ))),
    }
}

/// Simulates `n_paths` paths with the given scheme. Path `i` always uses
/// stream `i` of the driver, whatever the thread count.
pub fn simulate(
    p: &ProblemSpec,
    init: &InitialState,
    drv: &BrownianDriver,
    n_paths: usize,
    scheme: Scheme,
) -> Result<PathEnsemble> {
    check_setup(p, init, n_paths)?;
    let kernel = build_kernel(p, drv.n_steps, scheme)?;
    let h = kernel.step();
    let paths = (0..n_paths as u64)
        .into_par_iter()
        .map(|id| {
            let eta = init.sample(drv.seed, id);
            let out = kernel.solve_path(p, &eta, &drv.increments(id, h))?;
            Ok((out.values, out.flagged))
        })
        .collect::<Result<Vec<_>>>()?;
    let flagged = paths.iter().filter(|(_, f)| *f).count();
    check_flagged(flagged, n_paths)?;
    Ok(PathEnsemble::from_paths(p.dim(), p.horizon, *drv, scheme, paths))
}

pub fn simulate_em(
    p: &ProblemSpec,
    init: &InitialState,
    drv: &BrownianDriver,
    n_paths: usize,
) -> Result<PathEnsemble> {
    simulate(p, init, drv, n_paths, Scheme::EulerMaruyama)
}

pub fn simulate_mild(
    p: &ProblemSpec,
    init: &InitialState,
    drv: &BrownianDriver,
    n_paths: usize,
) -> Result<PathEnsemble> {
    simulate(p, init, drv, n_paths, Scheme::Mild(MildForm::default()))
}

/// `Y_0 ≡ η`, the starting point of the Picard iteration.
pub fn initial_iterate(
    p: &ProblemSpec,
    init: &InitialState,
    drv: &BrownianDriver,
    n_paths: usize,
) -> Result<PathEnsemble> {
    check_setup(p, init, n_paths)?;
    let paths = (0..n_paths as u64)
        .map(|id| (init.sample(drv.seed, id).repeat(drv.n_steps + 1), false))
        .collect();
    Ok(PathEnsemble::from_paths(
        p.dim(),
        p.horizon,
        *drv,
        Scheme::Picard { iteration: 0 },
        paths,
    ))
}

/// Applies the Picard operator `T_η` path-wise, reusing the increments of
/// `y`'s driver.
pub fn picard_apply(p: &ProblemSpec, init: &InitialState, y: &PathEnsemble) -> Result<PathEnsemble> {
    let kernel = VolterraKernel::mild(p, y.n_steps(), MildForm::default())?;
    picard_apply_with(&kernel, p, init, y)
}

/// As [`picard_apply`] with a prebuilt mild kernel.
pub fn picard_apply_with(
    kernel: &VolterraKernel,
    p: &ProblemSpec,
    init: &InitialState,
    y: &PathEnsemble,
) -> Result<PathEnsemble> {
    check_setup(p, init, y.n_paths())?;
    if y.dim() != p.dim() || y.horizon() != p.horizon || kernel.n_steps() != y.n_steps() {
        return Err(Error::invalid(format!(
            "iterate grid (dim {}, T = {}, {} steps) does not match the problem (dim {}, T = {}, {} steps)",
            y.dim(),
            y.horizon(),
            y.n_steps(),
            p.dim(),
            p.horizon,
            kernel.n_steps()
        )));
    }
    let drv = *y.driver();
    let h = kernel.step();
    let paths = (0..y.n_paths())
        .into_par_iter()
        .map(|i| {
            let id = i as u64;
            let eta = init.sample(drv.seed, id);
            let out = if y.is_flagged(i) {
                PathOutcome {
                    values: vec![f64::NAN; y.path(i).len()],
                    flagged: true,
                }
            } else {
                kernel.apply_path(p, &eta, &drv.increments(id, h), y.path(i))?
            };
            Ok((out.values, out.flagged))
        })
        .collect::<Result<Vec<_>>>()?;
    let flagged = paths.iter().filter(|(_, f)| *f).count();
    check_flagged(flagged, y.n_paths())?;
    let iteration = match y.scheme() {
        Scheme::Picard { iteration } => iteration + 1,
        _ => 1,
    };
    Ok(PathEnsemble::from_paths(
        p.dim(),
        p.horizon,
        drv,
        Scheme::Picard { iteration },
        paths,
    ))
}

/// Solutions from `eta` and `gamma` driven by the same increments, path by
/// path (Euler–Maruyama).
pub fn coupled_pair(
    p: &ProblemSpec,
    eta: &InitialState,
    gamma: &InitialState,
    drv: &BrownianDriver,
    n_paths: usize,
) -> Result<(PathEnsemble, PathEnsemble)> {
    coupled_pair_with(p, eta, gamma, drv, n_paths, Scheme::EulerMaruyama)
}

pub fn coupled_pair_with(
    p: &ProblemSpec,
    eta: &InitialState,
    gamma: &InitialState,
    drv: &BrownianDriver,
    n_paths: usize,
    scheme: Scheme,
) -> Result<(PathEnsemble, PathEnsemble)> {
    let x = simulate(p, eta, drv, n_paths, scheme)?;
    let y = simulate(p, gamma, drv, n_paths, scheme)?;
    Ok((x, y))
}

/// Streams coupled path pairs through `f` without storing the ensembles.
/// Results come back in path order.
pub fn map_coupled_paths<T, F>(
    p: &ProblemSpec,
    eta: &InitialState,
    gamma: &InitialState,
    drv: &BrownianDriver,
    n_paths: usize,
    scheme: Scheme,
    f: F,
) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&PathOutcome, &PathOutcome) -> T + Sync,
{
    check_setup(p, eta, n_paths)?;
    check_setup(p, gamma, n_paths)?;
    let kernel = build_kernel(p, drv.n_steps, scheme)?;
    let h = kernel.step();
    let results = (0..n_paths as u64)
        .into_par_iter()
        .map(|id| {
            let dw = drv.increments(id, h);
            let x = kernel.solve_path(p, &eta.sample(drv.seed, id), &dw)?;
            let y = kernel.solve_path(p, &gamma.sample(drv.seed, id), &dw)?;
            Ok((x.flagged || y.flagged, f(&x, &y)))
        })
        .collect::<Result<Vec<_>>>()?;
    let flagged = results.iter().filter(|(fl, _)| *fl).count();
    check_flagged(flagged, n_paths)?;
    Ok(results.into_iter().map(|(_, v)| v).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;
    use crate::smtde::problem::VectorField;
    use crate::specfun::gamma_fn;

    fn sec6_deterministic(horizon: f64) -> ProblemSpec {
        let p = ProblemSpec::sec6(horizon).unwrap();
        let drift = p.drift.clone();
        p.with_fields(drift, VectorField::zero())
    }

    fn eta() -> InitialState {
        InitialState::deterministic(vec![3.0, 5.0]).unwrap()
    }

    #[test]
    fn zero_problem_is_constant() {
        let mut p = ProblemSpec::sec6(1.0).unwrap();
        p.a_mat = Matrix::zeros(2);
        p.b_mat = Matrix::zeros(2);
        let p = p.with_fields(VectorField::zero(), VectorField::zero());
        let drv = BrownianDriver::new(5, 40).unwrap();
        for scheme in [Scheme::EulerMaruyama, Scheme::Mild(MildForm::VariationOfConstants)] {
            let e = simulate(&p, &eta(), &drv, 3, scheme).unwrap();
            for i in 0..=40 {
                assert_eq!(e.state(2, i), &[3.0, 5.0]);
            }
        }
    }

    #[test]
    fn constant_drift_closed_form() {
        let mut p = ProblemSpec::sec6(2.0).unwrap();
        p.a_mat = Matrix::zeros(2);
        p.b_mat = Matrix::zeros(2);
        let p = p.with_fields(VectorField::constant_one(), VectorField::zero());
        let drv = BrownianDriver::new(1, 200).unwrap();
        let e = simulate_em(&p, &eta(), &drv, 2).unwrap();
        let g = gamma_fn(1.75).unwrap();
        for (i, t) in e.times().into_iter().enumerate() {
            let x = e.state(1, i);
            let v = t.powf(0.75) / g;
            assert!((x[0] - 3.0 - v).abs() < 1e-12 && (x[1] - 5.0 - v).abs() < 1e-12);
        }
    }

    #[test]
    fn em_mild_bit_identical_with_zero_matrices() {
        let mut p = ProblemSpec::sec6(1.0).unwrap();
        p.a_mat = Matrix::zeros(2);
        p.b_mat = Matrix::zeros(2);
        let drv = BrownianDriver::new(99, 100).unwrap();
        let a = simulate_em(&p, &eta(), &drv, 8).unwrap();
        let b = simulate_mild(&p, &eta(), &drv, 8).unwrap();
        for i in 0..8 {
            assert_eq!(a.path(i), b.path(i));
        }
    }

    #[test]
    fn causality_under_future_perturbation() {
        let p = ProblemSpec::sec6(1.0).unwrap();
        let k = VolterraKernel::euler_maruyama(&p, 50).unwrap();
        let drv = BrownianDriver::new(3, 50).unwrap();
        let dw = drv.increments(0, 0.02);
        let mut dw2 = dw.clone();
        for v in &mut dw2[30..] {
            *v += 0.5;
        }
        let x = k.solve_path(&p, &[3.0, 5.0], &dw).unwrap().values;
        let y = k.solve_path(&p, &[3.0, 5.0], &dw2).unwrap().values;
        // X_n reads increments j < n, so indices 0..=30 agree
        assert_eq!(x[..31 * 2], y[..31 * 2]);
        assert_ne!(x[31 * 2], y[31 * 2]);
    }

    #[test]
    fn picard_constant_map_without_coefficients() {
        let mut p = ProblemSpec::sec6(1.0).unwrap();
        p.a_mat = Matrix::zeros(2);
        p.b_mat = Matrix::zeros(2);
        let p = p.with_fields(VectorField::zero(), VectorField::zero());
        let drv = BrownianDriver::new(4, 20).unwrap();
        let y = simulate_em(&ProblemSpec::sec6(1.0).unwrap(), &eta(), &drv, 3).unwrap();
        let z = picard_apply(&p, &eta(), &y).unwrap();
        assert_eq!(z.scheme(), Scheme::Picard { iteration: 1 });
        for i in 0..=20 {
            assert_eq!(z.state(1, i), &[3.0, 5.0]);
        }
    }

    #[test]
    fn picard_fixed_point_of_mild_solution() {
        let p = ProblemSpec::sec6(1.0).unwrap();
        let drv = BrownianDriver::new(8, 100).unwrap();
        let x = simulate_mild(&p, &eta(), &drv, 4).unwrap();
        let z = picard_apply(&p, &eta(), &x).unwrap();
        for i in 0..4 {
            let r = x
                .path(i)
                .iter()
                .zip(z.path(i))
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            assert!(r < 1e-9, "residual {r}");
        }
    }

    #[test]
    fn picard_rejects_other_grids() {
        let p = ProblemSpec::sec6(1.0).unwrap();
        let drv = BrownianDriver::new(8, 10).unwrap();
        let y = simulate_em(&p.with_horizon(2.0).unwrap(), &eta(), &drv, 2).unwrap();
        assert!(picard_apply(&p, &eta(), &y).is_err());
    }

    #[test]
    fn coupling_with_equal_data_is_exact() {
        let p = ProblemSpec::sec6(1.0).unwrap();
        let drv = BrownianDriver::new(12, 50).unwrap();
        let (x, y) = coupled_pair(&p, &eta(), &eta(), &drv, 5).unwrap();
        assert_eq!(x, y);
        let d = map_coupled_paths(&p, &eta(), &eta(), &drv, 5, Scheme::EulerMaruyama, |a, b| {
            a.values.iter().zip(&b.values).map(|(u, v)| (u - v).abs()).sum::<f64>()
        })
        .unwrap();
        assert_eq!(d, vec![0.0; 5]);
    }

    #[test]
    fn coupled_constant_paths_keep_distance() {
        let mut p = ProblemSpec::sec6(1.0).unwrap();
        p.a_mat = Matrix::zeros(2);
        p.b_mat = Matrix::zeros(2);
        let p = p.with_fields(VectorField::zero(), VectorField::zero());
        let drv = BrownianDriver::new(1, 30).unwrap();
        let g = InitialState::deterministic(vec![3.5, 5.5]).unwrap();
        let (x, y) = coupled_pair(&p, &eta(), &g, &drv, 2).unwrap();
        for i in 0..=30 {
            let (a, b) = (x.state(0, i), y.state(0, i));
            assert_eq!((b[0] - a[0], b[1] - a[1]), (0.5, 0.5));
        }
    }

    #[test]
    fn schemes_agree_with_only_memory_term() {
        // B = 0, A != 0, no forcing: constants solve the equation
        let mut p = ProblemSpec::sec6(1.0).unwrap();
        p.b_mat = Matrix::zeros(2);
        let p = p.with_fields(VectorField::zero(), VectorField::zero());
        let drv = BrownianDriver::new(0, 1000).unwrap();
        let a = simulate_em(&p, &eta(), &drv, 1).unwrap();
        let b = simulate_mild(&p, &eta(), &drv, 1).unwrap();
        let scale = b.path(0).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let diff = a
            .path(0)
            .iter()
            .zip(b.path(0))
            .fold(0.0f64, |m, (u, v)| m.max((u - v).abs()));
        assert!(diff / scale < 5e-2, "relative discrepancy {}", diff / scale);
    }

    #[test]
    fn schemes_agree_on_deterministic_sec6() {
        let p = sec6_deterministic(1.0);
        let drv = BrownianDriver::new(0, 400).unwrap();
        let a = simulate_em(&p, &eta(), &drv, 1).unwrap();
        let b = simulate_mild(&p, &eta(), &drv, 1).unwrap();
        let end_a = a.state(0, 400);
        let end_b = b.state(0, 400);
        let rel = (end_a[0] - end_b[0]).abs().max((end_a[1] - end_b[1]).abs()) / end_b[1].abs();
        assert!(rel < 2e-2, "relative endpoint gap {rel}");
    }

    #[test]
    fn deterministic_em_converges() {
        let p = sec6_deterministic(1.0);
        let fine = 4000;
        let r = simulate_em(&p, &eta(), &BrownianDriver::new(0, fine).unwrap(), 1).unwrap();
        let mut errs = Vec::new();
        for n in [125usize, 250, 500] {
            let e = simulate_em(&p, &eta(), &BrownianDriver::new(0, n).unwrap(), 1).unwrap();
            let stride = fine / n;
            let err = (0..=n)
                .map(|i| {
                    let (u, v) = (e.state(0, i), r.state(0, i * stride));
                    (u[0] - v[0]).abs().max((u[1] - v[1]).abs())
                })
                .fold(0.0, f64::max);
            errs.push(err);
        }
        assert!(errs[0] > errs[1] && errs[1] > errs[2], "{errs:?}");
    }

    #[test]
    fn flagged_fraction_enforced() {
        assert!(check_flagged(1, 10).is_ok());
        assert!(matches!(
            check_flagged(2, 10),
            Err(Error::Ensemble {
                flagged: 2,
                total: 10
            })
        ));
    }

    #[test]
    fn ensemble_independent_of_size() {
        let p = ProblemSpec::sec6(1.0).unwrap();
        let drv = BrownianDriver::new(21, 30).unwrap();
        let small = simulate_em(&p, &eta(), &drv, 2).unwrap();
        let large = simulate_em(&p, &eta(), &drv, 5).unwrap();
        assert_eq!(small.path(1), large.path(1));
        assert!(simulate(&p, &eta(), &drv, 2, Scheme::Brownian).is_err());
    }
}
