//! Discrete Volterra operators on a uniform grid.
//!
//! Both schemes share one explicit form
//!
//! ```text
//! X_n = G_n η + Σ_c Σ_{j<n} W_c(n - j) · s_c(t_j, X_j, ΔW_j)
//! ```
//!
//! where each channel `c` pairs a lag-indexed weight sequence (scalar or
//! matrix) with a source evaluated at left endpoints. Because the weights
//! depend only on the lag, they are tabulated once per grid.
//!
//! Weights are stored reversed so that the inner sum over `j` is a
//! contiguous dot product.

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::mlmatrix::{ml_nonperm, MLParams, QTable};
use crate::smtde::ensemble::Scheme;
use crate::smtde::problem::ProblemSpec;
use crate::specfun::{rgamma, rl_kernel_primitive};

/// How the mild (Mittag-Leffler kernel) form treats `X` under the integral.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MildForm {
    /// `X = (I + t^α E_{α+1}(t) B) η + ∫ (t-r)^{α-1} E_α(t-r) [b dr + σ dW]`.
    #[default]
    VariationOfConstants,
    /// Additionally keeps `∫ (t-r)^{α-1} E_α(t-r) X(r) dr`, as the
    /// representation is sometimes written. Not a solution of the integral
    /// equation; kept to measure the discrepancy.
    Literal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Source {
    /// `A x`
    AX,
    /// `B x + b(t, x)`
    BXPlusDrift,
    /// `b(t, x)`
    Drift,
    /// `σ(t, x) ΔW`
    Noise,
    /// `x`
    State,
}

#[derive(Debug, Clone)]
enum Weights {
    /// `rev[N - l]` is the weight of lag `l`, `l = 1..=N`.
    Scalar(Vec<f64>),
    /// `rev[r * dim + c][N - l]` is entry `(r, c)` of the lag-`l` matrix.
    Dense(Vec<Vec<f64>>),
}

#[derive(Debug, Clone)]
struct Channel {
    source: Source,
    weights: Weights,
}

/// Result of stepping one path.
#[derive(Debug, Clone, PartialEq)]
pub struct PathOutcome {
    /// `(n_steps + 1) * dim` values, time-major.
    pub values: Vec<f64>,
    /// Set when the state became non-finite; later values are NaN.
    pub flagged: bool,
}

#[derive(Debug, Clone)]
pub struct VolterraKernel {
    dim: usize,
    n_steps: usize,
    h: f64,
    scheme: Scheme,
    init: Vec<Matrix>,
    channels: Vec<Channel>,
    a: Matrix,
    b: Matrix,
}

fn reversed_scalar(weights_by_lag: &[f64]) -> Vec<f64> {
    // weights_by_lag[l - 1] is lag l
    weights_by_lag.iter().rev().copied().collect()
}

fn reversed_dense(dim: usize, mats_by_lag: &[Matrix]) -> Vec<Vec<f64>> {
    (0..dim * dim)
        .map(|e| mats_by_lag.iter().rev().map(|m| m.as_slice()[e]).collect())
        .collect()
}

/// Unrolled dot product. The summation order is fixed, so results do not
/// depend on threading.
#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut s = [0.0f64; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        s[0] += x[0] * y[0];
        s[1] += x[1] * y[1];
        s[2] += x[2] * y[2];
        s[3] += x[3] * y[3];
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    (s[0] + s[1]) + (s[2] + s[3]) + tail
}

impl VolterraKernel {
    fn check_grid(p: &ProblemSpec, n_steps: usize) -> Result<f64> {
        p.validate()?;
        if n_steps == 0 {
            return Err(Error::invalid("grid needs at least one step"));
        }
        Ok(p.horizon / n_steps as f64)
    }

    /// Explicit product-rectangle discretisation of the Volterra form
    ///
    /// ```text
    /// X(t) = η - A t^{α-β}/Γ(α-β+1) η + A I^{α-β} X + B I^α X + I^α b
    ///        + 1/Γ(α) ∫ (t-r)^{α-1} σ dW
    /// ```
    ///
    /// Memory and drift terms use exact cell integrals of the kernel; the Itô
    /// term uses the left-point kernel value `(t_n - t_j)^{α-1}`.
    pub fn euler_maruyama(p: &ProblemSpec, n_steps: usize) -> Result<Self> {
        let h = Self::check_grid(p, n_steps)?;
        let (alpha, rho) = (p.alpha, p.rho());
        let rg_rho = rgamma(rho + 1.0);
        let rg_alpha1 = rgamma(alpha + 1.0);
        let rg_alpha = rgamma(alpha);
        let lag = |l: usize| l as f64 * h;

        let cell = |gamma: f64, rg: f64| -> Vec<f64> {
            (1..=n_steps)
                .map(|l| {
                    rl_kernel_primitive(gamma, rg, lag(l)) - rl_kernel_primitive(gamma, rg, lag(l - 1))
                })
                .collect()
        };
        let w_rho = cell(rho, rg_rho);
        let w_alpha = cell(alpha, rg_alpha1);
        let w_noise: Vec<f64> = (1..=n_steps).map(|l| lag(l).powf(alpha - 1.0) * rg_alpha).collect();

        let id = Matrix::identity(p.dim());
        let init = (0..=n_steps)
            .map(|n| &id - &p.a_mat.scale(rl_kernel_primitive(rho, rg_rho, lag(n))))
            .collect();

        Ok(VolterraKernel {
            dim: p.dim(),
            n_steps,
            h,
            scheme: Scheme::EulerMaruyama,
            init,
            channels: vec![
                Channel {
                    source: Source::AX,
                    weights: Weights::Scalar(reversed_scalar(&w_rho)),
                },
                Channel {
                    source: Source::BXPlusDrift,
                    weights: Weights::Scalar(reversed_scalar(&w_alpha)),
                },
                Channel {
                    source: Source::Noise,
                    weights: Weights::Scalar(reversed_scalar(&w_noise)),
                },
            ],
            a: p.a_mat.clone(),
            b: p.b_mat.clone(),
        })
    }

    /// Mittag-Leffler kernel form. With `F(s) = s^α E^{A,B}_{α-β,α,α+1}(s)`
    /// the drift weights are the exact cell integrals `F(lh) - F((l-1)h)`,
    /// the Itô weights are `(lh)^{α-1} E^{A,B}_{α-β,α,α}(lh)`, and the
    /// initial term is `(I + F(t_n) B) η`.
    pub fn mild(p: &ProblemSpec, n_steps: usize, form: MildForm) -> Result<Self> {
        let h = Self::check_grid(p, n_steps)?;
        let alpha = p.alpha;
        let dim = p.dim();
        let mut q = QTable::new(p.a_mat.clone(), p.b_mat.clone())?;
        let params_int = MLParams::new(p.rho(), alpha, alpha + 1.0)?;
        let params_ker = MLParams::new(p.rho(), alpha, alpha)?;

        let mut prim = Vec::with_capacity(n_steps + 1);
        let mut noise = Vec::with_capacity(n_steps);
        for l in 0..=n_steps {
            let s = l as f64 * h;
            let e_int = ml_nonperm(&mut q, &params_int, s)?.value;
            prim.push(e_int.scale(s.powf(alpha)));
            if l > 0 {
                let e_ker = ml_nonperm(&mut q, &params_ker, s)?.value;
                noise.push(e_ker.scale(s.powf(alpha - 1.0)));
            }
        }
        let drift: Vec<Matrix> = (1..=n_steps).map(|l| &prim[l] - &prim[l - 1]).collect();
        let id = Matrix::identity(dim);
        let init = prim.iter().map(|f| &id + &f.matmul(&p.b_mat)).collect();

        let mut channels = Vec::with_capacity(3);
        if form == MildForm::Literal {
            channels.push(Channel {
                source: Source::State,
                weights: Weights::Dense(reversed_dense(dim, &drift)),
            });
        }
        channels.push(Channel {
            source: Source::Drift,
            weights: Weights::Dense(reversed_dense(dim, &drift)),
        });
        channels.push(Channel {
            source: Source::Noise,
            weights: Weights::Dense(reversed_dense(dim, &noise)),
        });

        Ok(VolterraKernel {
            dim,
            n_steps,
            h,
            scheme: Scheme::Mild(form),
            init,
            channels,
            a: p.a_mat.clone(),
            b: p.b_mat.clone(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn step(&self) -> f64 {
        self.h
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    /// `G_n`, the matrix applied to η at grid index `n`.
    pub fn initial_operator(&self, n: usize) -> &Matrix {
        &self.init[n]
    }

    fn source_into(
        &self,
        source: Source,
        p: &ProblemSpec,
        t: f64,
        x: &[f64],
        dw: f64,
        out: &mut [f64],
    ) {
        match source {
            Source::AX => {
                out.fill(0.0);
                self.a.mul_vec_acc(x, out);
            }
            Source::BXPlusDrift => {
                p.drift.eval(t, x, out);
                self.b.mul_vec_acc(x, out);
            }
            Source::Drift => p.drift.eval(t, x, out),
            Source::Noise => {
                p.diffusion.eval(t, x, out);
                out.iter_mut().for_each(|v| *v *= dw);
            }
            Source::State => out.copy_from_slice(x),
        }
    }

    /// Writes the sources at grid index `j` into the per-channel buffers.
    fn record_sources(
        &self,
        p: &ProblemSpec,
        j: usize,
        x: &[f64],
        dw: f64,
        sources: &mut [Vec<Vec<f64>>],
        scratch: &mut [f64],
    ) {
        let t = j as f64 * self.h;
        for (ch, buf) in self.channels.iter().zip(sources.iter_mut()) {
            self.source_into(ch.source, p, t, x, dw, scratch);
            for (d, v) in scratch.iter().enumerate() {
                buf[d][j] = *v;
            }
        }
    }

    /// `G_n η + Σ_c Σ_{j<n} W_c(n-j) s_c(j)` into `acc`.
    fn assemble(&self, n: usize, eta: &[f64], sources: &[Vec<Vec<f64>>], acc: &mut [f64]) {
        acc.fill(0.0);
        self.init[n].mul_vec_acc(eta, acc);
        let lo = self.n_steps - n;
        for (ch, src) in self.channels.iter().zip(sources) {
            match &ch.weights {
                Weights::Scalar(rev) => {
                    let w = &rev[lo..self.n_steps];
                    for (a, s) in acc.iter_mut().zip(src) {
                        *a += dot(w, &s[..n]);
                    }
                }
                Weights::Dense(rev) => {
                    for (r, a) in acc.iter_mut().enumerate() {
                        for (c, s) in src.iter().enumerate() {
                            *a += dot(&rev[r * self.dim + c][lo..self.n_steps], &s[..n]);
                        }
                    }
                }
            }
        }
    }

    fn check_path_inputs(&self, eta: &[f64], dw: &[f64]) -> Result<()> {
        if eta.len() != self.dim {
            return Err(Error::invalid(format!(
                "initial value has dimension {}, expected {}",
                eta.len(),
                self.dim
            )));
        }
        if dw.len() != self.n_steps {
            return Err(Error::invalid(format!(
                "{} increments supplied for {} steps",
                dw.len(),
                self.n_steps
            )));
        }
        Ok(())
    }

    fn new_sources(&self) -> Vec<Vec<Vec<f64>>> {
        vec![vec![vec![0.0; self.n_steps + 1]; self.dim]; self.channels.len()]
    }

    /// Steps one path forward. `X_n` only reads `X_j` and `ΔW_j` for `j < n`.
    pub fn solve_path(&self, p: &ProblemSpec, eta: &[f64], dw: &[f64]) -> Result<PathOutcome> {
        self.check_path_inputs(eta, dw)?;
        let dim = self.dim;
        let mut values = vec![f64::NAN; (self.n_steps + 1) * dim];
        let mut sources = self.new_sources();
        let mut scratch = vec![0.0; dim];
        let mut acc = vec![0.0; dim];

        self.assemble(0, eta, &sources, &mut acc);
        values[..dim].copy_from_slice(&acc);
        for n in 1..=self.n_steps {
            let j = n - 1;
            let x_prev = values[j * dim..n * dim].to_vec();
            self.record_sources(p, j, &x_prev, dw[j], &mut sources, &mut scratch);
            self.assemble(n, eta, &sources, &mut acc);
            if acc.iter().any(|v| !v.is_finite()) {
                return Ok(PathOutcome {
                    values,
                    flagged: true,
                });
            }
            values[n * dim..(n + 1) * dim].copy_from_slice(&acc);
        }
        Ok(PathOutcome {
            values,
            flagged: false,
        })
    }

    /// Applies the operator to a given path `y` (time-major, same grid).
    pub fn apply_path(
        &self,
        p: &ProblemSpec,
        eta: &[f64],
        dw: &[f64],
        y: &[f64],
    ) -> Result<PathOutcome> {
        self.check_path_inputs(eta, dw)?;
        let dim = self.dim;
        if y.len() != (self.n_steps + 1) * dim {
            return Err(Error::invalid("input path does not match the grid"));
        }
        let mut sources = self.new_sources();
        let mut scratch = vec![0.0; dim];
        for j in 0..self.n_steps {
            self.record_sources(p, j, &y[j * dim..(j + 1) * dim], dw[j], &mut sources, &mut scratch);
        }
        let mut values = vec![f64::NAN; (self.n_steps + 1) * dim];
        let mut acc = vec![0.0; dim];
        for n in 0..=self.n_steps {
            self.assemble(n, eta, &sources, &mut acc);
            if acc.iter().any(|v| !v.is_finite()) {
                return Ok(PathOutcome {
                    values,
                    flagged: true,
                });
            }
            values[n * dim..(n + 1) * dim].copy_from_slice(&acc);
        }
        Ok(PathOutcome {
            values,
            flagged: false,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::smtde::problem::{builtin_field, VectorField};
    use crate::specfun::gamma_fn;

    fn zero_problem(alpha: f64) -> ProblemSpec {
        ProblemSpec::new(
            alpha,
            alpha / 3.0,
            Matrix::zeros(2),
            Matrix::zeros(2),
            VectorField::zero(),
            VectorField::zero(),
            0.0,
            0.0,
            1.0,
        )
        .unwrap()
    }

    #[test]
    fn dot_matches_naive() {
        let a: Vec<f64> = (0..11).map(|i| i as f64 * 0.5).collect();
        let b: Vec<f64> = (0..11).map(|i| 1.0 - i as f64).collect();
        let naive: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        assert!((dot(&a, &b) - naive).abs() < 1e-12);
        assert_eq!(dot(&[], &[]), 0.0);
    }

    #[test]
    fn constant_drift_is_exact() {
        let p = zero_problem(0.7).with_fields(VectorField::constant_one(), VectorField::zero());
        let k = VolterraKernel::euler_maruyama(&p, 64).unwrap();
        let out = k.solve_path(&p, &[1.0, -2.0], &vec![0.0; 64]).unwrap();
        let g = gamma_fn(1.7).unwrap();
        for n in 0..=64 {
            let t = n as f64 / 64.0;
            let v = t.powf(0.7) / g;
            assert!((out.values[2 * n] - (1.0 + v)).abs() < 1e-13);
            assert!((out.values[2 * n + 1] - (-2.0 + v)).abs() < 1e-13);
        }
    }

    #[test]
    fn em_and_mild_bit_identical_without_matrices() {
        let mut p = ProblemSpec::sec6(1.0).unwrap();
        p.a_mat = Matrix::zeros(2);
        p.b_mat = Matrix::zeros(2);
        let em = VolterraKernel::euler_maruyama(&p, 50).unwrap();
        let mild = VolterraKernel::mild(&p, 50, MildForm::VariationOfConstants).unwrap();
        let dw: Vec<f64> = (0..50).map(|i| ((i * 7919) % 13) as f64 * 0.01 - 0.06).collect();
        let x = em.solve_path(&p, &[3.0, 5.0], &dw).unwrap();
        let y = mild.solve_path(&p, &[3.0, 5.0], &dw).unwrap();
        assert_eq!(x, y);
    }

    #[test]
    fn literal_form_adds_memory() {
        let p = zero_problem(0.75);
        let k = VolterraKernel::mild(&p, 20, MildForm::Literal).unwrap();
        let out = k.solve_path(&p, &[1.0, 1.0], &vec![0.0; 20]).unwrap();
        assert!(out.values[40] > 1.5);
    }

    #[test]
    fn blow_up_is_flagged() {
        let p = zero_problem(0.75).with_fields(
            VectorField::new("explode", 0.0, |_, x, out| {
                out.iter_mut().zip(x).for_each(|(o, v)| *o = v * v * 1e200)
            }),
            VectorField::zero(),
        );
        let k = VolterraKernel::euler_maruyama(&p, 10).unwrap();
        let out = k.solve_path(&p, &[10.0, 10.0], &vec![0.0; 10]).unwrap();
        assert!(out.flagged);
        assert!(out.values[20].is_nan());
    }

    #[test]
    fn input_checks() {
        let p = ProblemSpec::sec6(1.0).unwrap();
        let k = VolterraKernel::euler_maruyama(&p, 10).unwrap();
        assert!(k.solve_path(&p, &[1.0], &vec![0.0; 10]).is_err());
        assert!(k.solve_path(&p, &[1.0, 2.0], &vec![0.0; 9]).is_err());
        assert!(k.apply_path(&p, &[1.0, 2.0], &vec![0.0; 10], &[0.0; 3]).is_err());
        assert!(VolterraKernel::euler_maruyama(&p, 0).is_err());
        assert!(builtin_field("sec6_drift").is_ok());
    }
}
