use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::mlmatrix::{ml_nonperm, MLParams, QTable};
use crate::smtde::ProblemSpec;
use crate::specfun::{gamma_fn, rl_kernel_primitive, rgamma, ScalarMl};

/// Grid points used for suprema over `[0, T]`; the refinement pass doubles it.
pub const SUP_GRID_POINTS: usize = 1000;

/// A supremum over `[0, T]` found by grid search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSup {
    pub value: f64,
    /// Where the maximum was attained.
    pub at: f64,
    /// Relative change of the maximum when the grid is doubled.
    pub refinement_gap: f64,
}

fn grid_sup(horizon: f64, mut f: impl FnMut(f64) -> Result<f64>) -> Result<GridSup> {
    let mut scan = |points: usize| -> Result<(f64, f64)> {
        let mut best = (f64::NEG_INFINITY, 0.0);
        for i in 0..points {
            let t = horizon * i as f64 / (points - 1) as f64;
            let v = f(t)?;
            if v > best.0 {
                best = (v, t);
            }
        }
        Ok(best)
    };
    let coarse = scan(SUP_GRID_POINTS)?;
    let fine = scan(2 * SUP_GRID_POINTS)?;
    let best = if fine.0 > coarse.0 { fine } else { coarse };
    let gap = if best.0 > 0.0 {
        (fine.0 - coarse.0).abs() / best.0
    } else {
        0.0
    };
    Ok(GridSup {
        value: best.0,
        at: best.1,
        refinement_gap: gap,
    })
}

/// `𝓜 = sup_{[0,T]} ‖𝓔^{A,B}_{α-β,α,α}(t)‖`.
pub fn m_sup(p: &ProblemSpec) -> Result<GridSup> {
    p.validate()?;
    let mut q = QTable::new(p.a_mat.clone(), p.b_mat.clone())?;
    let params = MLParams::new(p.rho(), p.alpha, p.alpha)?;
    grid_sup(p.horizon, |t| Ok(ml_nonperm(&mut q, &params, t)?.value.norm()))
}

/// `sup_{[0,T]} ‖I + t^α 𝓔^{A,B}_{α-β,α,α+1}(t) B‖²`, the scalar stand-in
/// for the matrix constant `𝒞`.
pub fn c_const(p: &ProblemSpec) -> Result<GridSup> {
    p.validate()?;
    let mut q = QTable::new(p.a_mat.clone(), p.b_mat.clone())?;
    let params = MLParams::new(p.rho(), p.alpha, p.alpha + 1.0)?;
    let id = Matrix::identity(p.dim());
    grid_sup(p.horizon, |t| {
        let e = ml_nonperm(&mut q, &params, t)?.value;
        let n = (&id + &e.scale(t.powf(p.alpha)).matmul(&p.b_mat)).norm();
        Ok(n * n)
    })
}

/// `Γ(2α-1) 𝓜² (1 + L_b² T + L_σ²)`, shared by ω and ζ.
fn contraction_base(p: &ProblemSpec, m_sup: f64) -> Result<f64> {
    if !(m_sup >= 0.0) || !m_sup.is_finite() {
        return Err(Error::invalid(format!("m_sup must be finite and >= 0, got {m_sup}")));
    }
    let lip = 1.0 + p.lip_b * p.lip_b * p.horizon + p.lip_sigma * p.lip_sigma;
    Ok(gamma_fn(2.0 * p.alpha - 1.0)? * m_sup * m_sup * lip)
}

/// `4 Γ(2α-1) 𝓜² (1 + L_b² T + L_σ²)`; the Picard operator contracts in the
/// weighted norm for every ω above it.
pub fn omega_threshold(p: &ProblemSpec, m_sup: f64) -> Result<f64> {
    Ok(4.0 * contraction_base(p, m_sup)?)
}

/// `ζ = 3 Γ(2α-1) 𝓜² (1 + L_b² T + L_σ²) / ω`.
pub fn zeta_const(p: &ProblemSpec, m_sup: f64, omega: f64) -> Result<f64> {
    if !(omega > 0.0) || !omega.is_finite() {
        return Err(Error::domain(format!("omega must be > 0, got {omega}")));
    }
    // base / (4 base) is exactly 1/4, so ζ(threshold) is exactly 3/4
    Ok(3.0 * (contraction_base(p, m_sup)? / omega))
}

/// Both sides of
/// `ω/Γ(2α-1) ∫_0^t (t-r)^{2α-2} E_{2α-1}(ω r^{2α-1}) dr ≤ E_{2α-1}(ω t^{2α-1})`.
///
/// `lhs`/`rhs` may overflow to infinity; the comparison uses the logs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lemma25Check {
    pub lhs: f64,
    pub rhs: f64,
    pub ln_lhs: f64,
    pub ln_rhs: f64,
    pub holds: bool,
}

/// Relative slack allowed in [`lemma25_check`].
pub const LEMMA25_SLACK: f64 = 1e-6;

/// Evaluates the left side with `n_quad` exact-kernel product weights
/// (left-point integrand), in log space.
pub fn lemma25_check(alpha: f64, omega: f64, t: f64, n_quad: usize) -> Result<Lemma25Check> {
    if !(alpha > 0.5 && alpha < 1.0) {
        return Err(Error::invalid(format!("alpha must lie in (1/2, 1), got {alpha}")));
    }
    if !(omega > 0.0) || !omega.is_finite() {
        return Err(Error::domain(format!("omega must be > 0, got {omega}")));
    }
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::domain(format!("t must be > 0, got {t}")));
    }
    if n_quad == 0 {
        return Err(Error::invalid("quadrature needs at least one cell"));
    }
    let g = 2.0 * alpha - 1.0;
    let mut ml = ScalarMl::new(g)?;
    let h = t / n_quad as f64;
    let rg = rgamma(g + 1.0);
    let mut logs = Vec::with_capacity(n_quad);
    for j in 0..n_quad {
        // kernel mass of cell [r_j, r_{j+1}], in units of 1/Γ(γ+1)
        let upper = (n_quad - j) as f64 * h;
        let lower = (n_quad - j - 1) as f64 * h;
        let w = rl_kernel_primitive(g, rg, upper) - rl_kernel_primitive(g, rg, lower);
        let r = j as f64 * h;
        logs.push(w.ln() + ml.ln_eval(omega * r.powf(g))?);
    }
    let peak = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !peak.is_finite() {
        return Err(Error::NonConvergence("kernel bound quadrature produced no finite terms".into()));
    }
    let ln_lhs = omega.ln() + peak + logs.iter().map(|l| (l - peak).exp()).sum::<f64>().ln();
    let ln_rhs = ml.ln_eval(omega * t.powf(g))?;
    Ok(Lemma25Check {
        lhs: ln_lhs.exp(),
        rhs: ln_rhs.exp(),
        ln_lhs,
        ln_rhs,
        holds: ln_lhs <= ln_rhs + LEMMA25_SLACK.ln_1p(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::smtde::VectorField;
    use crate::specfun::ml_scalar;
    use std::f64::consts::PI;

    #[test]
    fn threshold_examples() {
        let p = ProblemSpec::sec6(1.0).unwrap();
        assert_eq!(omega_threshold(&p, 0.0).unwrap(), 0.0);
        let free = p.with_fields(VectorField::zero(), VectorField::zero());
        assert!((omega_threshold(&free, 1.0).unwrap() - 4.0 * PI.sqrt()).abs() < 1e-12);
        assert!((omega_threshold(&p, 1.0).unwrap() - 12.0 * PI.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn zeta_identity() {
        let p = ProblemSpec::sec6(1.0).unwrap();
        for m in [0.3, 1.0, 5.2661, 17.0] {
            let w = omega_threshold(&p, m).unwrap();
            assert_eq!(zeta_const(&p, m, w).unwrap(), 0.75);
            assert!((zeta_const(&p, m, 2.0 * w).unwrap() - 0.375).abs() < 1e-15);
        }
        assert!(zeta_const(&p, 1.0, 0.0).is_err());
    }

    #[test]
    fn sec6_constants() {
        let p = ProblemSpec::sec6(1.0).unwrap();
        let m = m_sup(&p).unwrap();
        // the kernel norm increases on [0, 1], so the sup sits at T
        assert!((m.at - 1.0).abs() < 1e-12);
        assert!((m.value - 5.2661).abs() < 1e-3, "{m:?}");
        assert!(m.refinement_gap < 1e-9);
        let w = omega_threshold(&p, m.value).unwrap();
        assert!((w - 589.85).abs() < 0.1, "{w}");
        let c = c_const(&p).unwrap();
        assert!(c.value >= 1.0 && c.value.is_finite());
    }

    #[test]
    fn zero_matrices_give_gamma_bound() {
        let mut p = ProblemSpec::sec6(2.0).unwrap();
        p.a_mat = Matrix::zeros(2);
        p.b_mat = Matrix::zeros(2);
        let m = m_sup(&p).unwrap();
        assert!((m.value - rgamma(0.75)).abs() < 1e-14);
        assert_eq!(c_const(&p).unwrap().value, 1.0);
    }

    #[test]
    fn lemma25_lhs_is_e_minus_one() {
        // the left side integrates to E(ω t^γ) - 1 exactly
        let (alpha, omega, t) = (0.75, 1.0, 1.0);
        let c = lemma25_check(alpha, omega, t, 10_000).unwrap();
        let e = ml_scalar(0.5, 1.0).unwrap();
        assert!((c.rhs - e).abs() < 1e-12 * e);
        assert!(((c.lhs - (e - 1.0)) / (e - 1.0)).abs() < 1e-2, "{c:?}");
        assert!(c.holds);
    }

    #[test]
    fn lemma25_small_t() {
        let c = lemma25_check(0.75, 1.0, 1e-10, 100).unwrap();
        assert!(c.lhs < 1e-4 && (c.rhs - 1.0).abs() < 1e-4 && c.holds);
        assert!(lemma25_check(0.75, 1.0, 0.0, 100).is_err());
        assert!(lemma25_check(0.5, 1.0, 1.0, 100).is_err());
    }

    #[test]
    fn lemma25_overflowing_sides() {
        let c = lemma25_check(0.6, 5.0, 2.0, 1000).unwrap();
        assert!(c.rhs.is_infinite() && c.ln_rhs.is_finite() && c.holds);
    }
}
