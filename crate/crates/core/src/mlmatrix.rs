//! Bivariate Mittag-Leffler type matrix functions.
//!
//! For matrices `A`, `B` the non-permutable function is
//!
//! ```text
//! E^{A,B}_{ρ,σ,δ}(t) = Σ_{k,m ≥ 0} Q_{k,m} t^{kρ + mσ} / Γ(kρ + mσ + δ)
//! Q_{k,0} = A^k,  Q_{0,m} = B^m,  Q_{k,m} = Σ_{l=0}^{k} A^{k-l} B Q_{l,m-1}
//! ```
//!
//! `Q_{k,m}` is the sum of all words with `k` letters `A` and `m` letters `B`;
//! when `AB = BA` it collapses to `C(k+m, m) A^k B^m`.
//!
//! Both series are summed by anti-diagonals `k + m = n` and cut once
//! [`SMALL_TERM_RUN`] consecutive anti-diagonals contribute less than
//! [`ML_MATRIX_TOL`] times the norm of the partial sum.

use crate::error::{Error, Result};
use crate::linalg::{commutator, Matrix};
use crate::specfun::{ln_gamma, rgamma, SMALL_TERM_RUN};

pub const ML_MATRIX_TOL: f64 = 1e-12;
/// Largest anti-diagonal `k + m` that is ever cached or summed.
pub const DEFAULT_MAX_ORDER: usize = 200;

/// Lazily filled table of `Q_{k,m}`, stored by anti-diagonal.
#[derive(Debug, Clone)]
pub struct QTable {
    a: Matrix,
    b: Matrix,
    max_order: usize,
    /// `diagonals[n][k] = Q_{k, n-k}`
    diagonals: Vec<Vec<Matrix>>,
    /// `a_pow_b[j] = A^j B`
    a_pow_b: Vec<Matrix>,
    a_pow: Vec<Matrix>,
}

impl QTable {
    pub fn new(a: Matrix, b: Matrix) -> Result<Self> {
        QTable::with_max_order(a, b, DEFAULT_MAX_ORDER)
    }

    pub fn with_max_order(a: Matrix, b: Matrix, max_order: usize) -> Result<Self> {
        if a.dim() != b.dim() {
            return Err(Error::invalid(format!(
                "Q table needs equal dimensions, got {} and {}",
                a.dim(),
                b.dim()
            )));
        }
        let id = Matrix::identity(a.dim());
        Ok(QTable {
            a_pow_b: vec![b.clone()],
            a_pow: vec![id],
            a,
            b,
            max_order,
            diagonals: Vec::new(),
        })
    }

    pub fn a(&self) -> &Matrix {
        &self.a
    }

    pub fn b(&self) -> &Matrix {
        &self.b
    }

    pub fn max_order(&self) -> usize {
        self.max_order
    }

    /// Highest anti-diagonal currently cached, if any.
    pub fn filled_order(&self) -> Option<usize> {
        self.diagonals.len().checked_sub(1)
    }

    /// Fills every anti-diagonal up to `order`.
    pub fn fill_to(&mut self, order: usize) -> Result<()> {
        if order > self.max_order {
            return Err(Error::TruncationBound {
                requested: order,
                limit: self.max_order,
            });
        }
        while self.diagonals.len() <= order {
            let n = self.diagonals.len();
            self.extend_powers(n);
            let diag = (0..=n).map(|k| self.compute(k, n - k)).collect();
            self.diagonals.push(diag);
        }
        Ok(())
    }

    fn extend_powers(&mut self, n: usize) {
        while self.a_pow.len() <= n {
            let next = self.a_pow.last().unwrap().matmul(&self.a);
            self.a_pow.push(next);
        }
        while self.a_pow_b.len() <= n {
            let next = self.a.matmul(self.a_pow_b.last().unwrap());
            self.a_pow_b.push(next);
        }
    }

    fn compute(&self, k: usize, m: usize) -> Matrix {
        if m == 0 {
            return self.a_pow[k].clone();
        }
        if k == 0 {
            // Q_{0,m} = B Q_{0,m-1} = B^m
            return self.b.matmul(&self.diagonals[m - 1][0]);
        }
        let mut acc = Matrix::zeros(self.a.dim());
        for l in 0..=k {
            let prev = &self.diagonals[l + m - 1][l];
            acc.add_scaled(1.0, &self.a_pow_b[k - l].matmul(prev));
        }
        acc
    }

    /// `Q_{k,m}`, filling the table as needed.
    pub fn q_coeff(&mut self, k: usize, m: usize) -> Result<&Matrix> {
        self.fill_to(k + m)?;
        Ok(&self.diagonals[k + m][k])
    }

    /// Read-only access to an already cached coefficient.
    pub fn get(&self, k: usize, m: usize) -> Option<&Matrix> {
        self.diagonals.get(k + m).map(|d| &d[k])
    }
}

/// Exponents and offset of the bivariate series.
///
/// `rho` multiplies the power of the `A` index, `sigma_exp` that of the `B`
/// index. In the mild-solution kernels `rho = α - β` and `sigma_exp = α`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MLParams {
    pub rho: f64,
    pub sigma_exp: f64,
    pub delta: f64,
}

impl MLParams {
    pub fn new(rho: f64, sigma_exp: f64, delta: f64) -> Result<Self> {
        if !(rho > 0.0) || !rho.is_finite() {
            return Err(Error::domain(format!("rho must be > 0, got {rho}")));
        }
        if !(sigma_exp > 0.0) || !sigma_exp.is_finite() {
            return Err(Error::domain(format!("sigma_exp must be > 0, got {sigma_exp}")));
        }
        if !delta.is_finite() {
            return Err(Error::domain(format!("delta must be finite, got {delta}")));
        }
        Ok(MLParams {
            rho,
            sigma_exp,
            delta,
        })
    }
}

/// Result of a truncated series evaluation.
#[derive(Debug, Clone)]
pub struct MlEval {
    pub value: Matrix,
    /// Last anti-diagonal included.
    pub order: usize,
    /// Heuristic: summed norms of the last few anti-diagonal contributions.
    pub tail_estimate: f64,
}

/// `t^x / Γ(x + δ)` with `0^0 = 1` and the reciprocal-gamma pole convention.
pub fn power_over_gamma(t: f64, x: f64, delta: f64) -> f64 {
    if t == 0.0 {
        return if x == 0.0 { rgamma(delta) } else { 0.0 };
    }
    let direct = if x == 0.0 {
        rgamma(delta)
    } else {
        t.powf(x) * rgamma(x + delta)
    };
    if direct.is_finite() && (direct != 0.0 || rgamma(x + delta) == 0.0) {
        return direct;
    }
    // t^x overflowed or Γ underflowed its reciprocal; combine in log space.
    match ln_gamma(x + delta) {
        Ok(lg) => (x * t.ln() - lg).exp(),
        Err(_) => direct,
    }
}

struct Truncation {
    run: usize,
    recent: [f64; SMALL_TERM_RUN],
}

impl Truncation {
    fn new() -> Self {
        Truncation {
            run: 0,
            recent: [0.0; SMALL_TERM_RUN],
        }
    }

    /// Records one anti-diagonal contribution; true once the series may stop.
    fn push(&mut self, n: usize, contribution: f64, partial: f64) -> bool {
        self.recent[n % SMALL_TERM_RUN] = contribution;
        if contribution <= ML_MATRIX_TOL * partial {
            self.run += 1;
        } else {
            self.run = 0;
        }
        self.run >= SMALL_TERM_RUN
    }

    fn tail(&self) -> f64 {
        self.recent.iter().sum()
    }
}

fn check_t(t: f64) -> Result<()> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::domain(format!("series argument must be finite and >= 0, got {t}")));
    }
    Ok(())
}

/// Non-permutable bivariate Mittag-Leffler matrix function at `t`.
pub fn ml_nonperm(q: &mut QTable, p: &MLParams, t: f64) -> Result<MlEval> {
    check_t(t)?;
    let dim = q.a.dim();
    let mut partial = Matrix::zeros(dim);
    let mut trunc = Truncation::new();
    for n in 0..=q.max_order {
        q.fill_to(n)?;
        let mut contribution = Matrix::zeros(dim);
        for (k, qk) in q.diagonals[n].iter().enumerate() {
            let x = k as f64 * p.rho + (n - k) as f64 * p.sigma_exp;
            let s = power_over_gamma(t, x, p.delta);
            if s != 0.0 {
                contribution.add_scaled(s, qk);
            }
        }
        partial.add_scaled(1.0, &contribution);
        if !partial.is_finite() {
            return Err(Error::NonConvergence(format!(
                "matrix Mittag-Leffler series overflowed at order {n} (t = {t})"
            )));
        }
        if trunc.push(n, contribution.norm(), partial.norm()) {
            return Ok(MlEval {
                value: partial,
                order: n,
                tail_estimate: trunc.tail(),
            });
        }
    }
    Err(Error::NonConvergence(format!(
        "matrix Mittag-Leffler series not converged after {} anti-diagonals (t = {t})",
        q.max_order
    )))
}

/// Permutable-matrix series `Σ C(k+m, m) A^k B^m t^{kρ+mσ} / Γ(kρ+mσ+δ)`,
/// returned without the `t^{δ-1}` prefactor.
pub fn ml_perm(a: &Matrix, b: &Matrix, p: &MLParams, t: f64) -> Result<MlEval> {
    check_t(t)?;
    let comm = commutator(a, b)?;
    let bound = 1e-12 * a.norm() * b.norm();
    if comm.norm() > bound {
        return Err(Error::Precondition(format!(
            "matrices do not commute: ||[A,B]|| = {:e} exceeds {bound:e}",
            comm.norm()
        )));
    }
    let dim = a.dim();
    let mut a_pow = vec![Matrix::identity(dim)];
    let mut b_pow = vec![Matrix::identity(dim)];
    let mut binom_row = vec![1.0_f64];
    let mut partial = Matrix::zeros(dim);
    let mut trunc = Truncation::new();
    for n in 0..=DEFAULT_MAX_ORDER {
        if n > 0 {
            a_pow.push(a_pow[n - 1].matmul(a));
            b_pow.push(b_pow[n - 1].matmul(b));
            let mut next = vec![1.0; n + 1];
            for i in 1..n {
                next[i] = binom_row[i - 1] + binom_row[i];
            }
            binom_row = next;
        }
        let mut contribution = Matrix::zeros(dim);
        for k in 0..=n {
            let m = n - k;
            let x = k as f64 * p.rho + m as f64 * p.sigma_exp;
            let s = power_over_gamma(t, x, p.delta);
            if s != 0.0 {
                let word = a_pow[k].matmul(&b_pow[m]);
                contribution.add_scaled(binom_row[m] * s, &word);
            }
        }
        partial.add_scaled(1.0, &contribution);
        if !partial.is_finite() {
            return Err(Error::NonConvergence(format!(
                "permutable series overflowed at order {n} (t = {t})"
            )));
        }
        if trunc.push(n, contribution.norm(), partial.norm()) {
            return Ok(MlEval {
                value: partial,
                order: n,
                tail_estimate: trunc.tail(),
            });
        }
    }
    Err(Error::NonConvergence(format!(
        "permutable series not converged after {DEFAULT_MAX_ORDER} anti-diagonals (t = {t})"
    )))
}
