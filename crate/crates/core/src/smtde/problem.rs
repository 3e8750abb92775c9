use std::fmt;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

type FieldFn = dyn Fn(f64, &[f64], &mut [f64]) + Send + Sync;

/// A vector field `(t, x) -> R^n`, written into a caller-provided buffer.
#[derive(Clone)]
pub struct VectorField {
    name: String,
    dim: Option<usize>,
    lipschitz: f64,
    f: Arc<FieldFn>,
}

impl VectorField {
    pub fn new(
        name: impl Into<String>,
        lipschitz: f64,
        f: impl Fn(f64, &[f64], &mut [f64]) + Send + Sync + 'static,
    ) -> Self {
        VectorField {
            name: name.into(),
            dim: None,
            lipschitz,
            f: Arc::new(f),
        }
    }

    fn fixed_dim(mut self, dim: usize) -> Self {
        self.dim = Some(dim);
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Lipschitz constant known for the built-in fields.
    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    #[inline]
    pub fn eval(&self, t: f64, x: &[f64], out: &mut [f64]) {
        (self.f)(t, x, out)
    }

    pub fn zero() -> Self {
        VectorField::new("zero", 0.0, |_, _, out| out.fill(0.0))
    }

    pub fn constant_one() -> Self {
        VectorField::new("one", 0.0, |_, _, out| out.fill(1.0))
    }
}

impl fmt::Debug for VectorField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "VectorField({})", self.name)
    }
}

pub const BUILTIN_FIELDS: &[&str] = &["zero", "one", "identity", "sec6_drift", "sec6_diffusion"];

/// Looks up a compiled-in coefficient by name.
pub fn builtin_field(name: &str) -> Result<VectorField> {
    let field = match name {
        "zero" => VectorField::zero(),
        "one" => VectorField::constant_one(),
        "identity" => VectorField::new("identity", 1.0, |_, x, out| out.copy_from_slice(x)),
        "sec6_drift" => VectorField::new("sec6_drift", 1.0, |_, x, out| {
            out[0] = x[0].sin();
            out[1] = x[1] + 5.0;
        })
        .fixed_dim(2),
        "sec6_diffusion" => VectorField::new("sec6_diffusion", 1.0, |_, x, out| {
            out[0] = x[0] + 5.0;
            out[1] = x[1].cos();
        })
        .fixed_dim(2),
        other => {
            return Err(Error::invalid(format!(
                "unknown coefficient '{other}', expected one of {BUILTIN_FIELDS:?}"
            )))
        }
    };
    Ok(field)
}

/// Coefficients, orders and horizon of one equation.
#[derive(Debug, Clone)]
pub struct ProblemSpec {
    pub alpha: f64,
    pub beta: f64,
    /// Coefficient of the order-β Caputo term.
    pub a_mat: Matrix,
    /// Coefficient of `X`.
    pub b_mat: Matrix,
    pub drift: VectorField,
    pub diffusion: VectorField,
    pub lip_b: f64,
    pub lip_sigma: f64,
    pub horizon: f64,
}

impl ProblemSpec {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        alpha: f64,
        beta: f64,
        a_mat: Matrix,
        b_mat: Matrix,
        drift: VectorField,
        diffusion: VectorField,
        lip_b: f64,
        lip_sigma: f64,
        horizon: f64,
    ) -> Result<Self> {
        let p = ProblemSpec {
            alpha,
            beta,
            a_mat,
            b_mat,
            drift,
            diffusion,
            lip_b,
            lip_sigma,
            horizon,
        };
        p.validate()?;
        Ok(p)
    }

    /// The two-dimensional example system: α = 3/4, β = 1/4, sine/affine
    /// drift and affine/cosine diffusion, both with Lipschitz constant 1.
    pub fn sec6(horizon: f64) -> Result<Self> {
        ProblemSpec::new(
            0.75,
            0.25,
            Matrix::from_rows(&[vec![0.1, 0.2], vec![0.3, 0.4]])?,
            Matrix::from_rows(&[vec![0.4, 0.1], vec![0.2, 0.3]])?,
            builtin_field("sec6_drift")?,
            builtin_field("sec6_diffusion")?,
            1.0,
            1.0,
            horizon,
        )
    }

    pub fn dim(&self) -> usize {
        self.a_mat.dim()
    }

    pub fn with_horizon(&self, horizon: f64) -> Result<Self> {
        let mut p = self.clone();
        p.horizon = horizon;
        p.validate()?;
        Ok(p)
    }

    pub fn with_fields(&self, drift: VectorField, diffusion: VectorField) -> Self {
        ProblemSpec {
            lip_b: drift.lipschitz(),
            lip_sigma: diffusion.lipschitz(),
            drift,
            diffusion,
            ..self.clone()
        }
    }

    /// `α - β`, the exponent attached to `A` in the kernels.
    pub fn rho(&self) -> f64 {
        self.alpha - self.beta
    }

    /// Checks the order constraints. `β = 0` is accepted only when `A = 0`,
    /// which is the single-term reduction where β plays no role.
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.5 && self.alpha < 1.0) {
            return Err(Error::invalid(format!(
                "alpha must lie in (1/2, 1), got {}",
                self.alpha
            )));
        }
        if !(self.beta < self.alpha) {
            return Err(Error::invalid("beta must be < alpha"));
        }
        if !(self.beta > 0.0 || (self.beta == 0.0 && self.a_mat.is_zero())) {
            return Err(Error::invalid(format!(
                "beta must be > 0 (beta = 0 only with A = 0), got {}",
                self.beta
            )));
        }
        if self.a_mat.dim() != self.b_mat.dim() {
            return Err(Error::invalid("A and B must have the same dimension"));
        }
        for (label, field) in [("drift", &self.drift), ("diffusion", &self.diffusion)] {
            if let Some(d) = field.dim {
                if d != self.dim() {
                    return Err(Error::invalid(format!(
                        "{label} '{}' is defined for dimension {d}, problem has {}",
                        field.name,
                        self.dim()
                    )));
                }
            }
        }
        if !(self.lip_b >= 0.0 && self.lip_sigma >= 0.0) {
            return Err(Error::invalid("Lipschitz constants must be >= 0"));
        }
        if !(self.horizon > 0.0) || !self.horizon.is_finite() {
            return Err(Error::invalid(format!("horizon must be > 0, got {}", self.horizon)));
        }
        Ok(())
    }
}

const INITIAL_STATE_SALT: u64 = 0x5851_f42d_4c95_7f2d;

/// Initial value: a fixed vector or an isotropic Gaussian.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialState {
    Deterministic(Vec<f64>),
    Gaussian { mean: Vec<f64>, std: f64 },
}

impl InitialState {
    pub fn deterministic(eta: Vec<f64>) -> Result<Self> {
        let s = InitialState::Deterministic(eta);
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let (mean, std) = match self {
            InitialState::Deterministic(v) => (v, 0.0),
            InitialState::Gaussian { mean, std } => (mean, *std),
        };
        if mean.is_empty() || mean.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("initial state must be non-empty and finite"));
        }
        if !(std >= 0.0) || !std.is_finite() {
            return Err(Error::invalid("initial-state standard deviation must be finite and >= 0"));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.mean().len()
    }

    pub fn mean(&self) -> &[f64] {
        match self {
            InitialState::Deterministic(v) => v,
            InitialState::Gaussian { mean, .. } => mean,
        }
    }

    pub fn is_deterministic(&self) -> bool {
        matches!(self, InitialState::Deterministic(_))
            || matches!(self, InitialState::Gaussian { std, .. } if *std == 0.0)
    }

    /// Sample for one path. Gaussian draws come from a stream keyed by
    /// `(seed, path_id)` only, so shifted states share their noise.
    pub fn sample(&self, seed: u64, path_id: u64) -> Vec<f64> {
        match self {
            InitialState::Deterministic(v) => v.clone(),
            InitialState::Gaussian { mean, std } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed ^ INITIAL_STATE_SALT);
                rng.set_stream(path_id);
                mean.iter()
                    .map(|m| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        m + std * z
                    })
                    .collect()
            }
        }
    }

    /// Same state translated by `delta`.
    pub fn shifted(&self, delta: &[f64]) -> InitialState {
        let shift = |v: &[f64]| v.iter().zip(delta).map(|(a, d)| a + d).collect::<Vec<_>>();
        match self {
            InitialState::Deterministic(v) => InitialState::Deterministic(shift(v)),
            InitialState::Gaussian { mean, std } => InitialState::Gaussian {
                mean: shift(mean),
                std: *std,
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sec6_is_valid() {
        let p = ProblemSpec::sec6(1.0).unwrap();
        assert_eq!(p.dim(), 2);
        assert!((p.rho() - 0.5).abs() < 1e-15);
        let mut out = [0.0; 2];
        p.drift.eval(0.0, &[3.0, 5.0], &mut out);
        assert_eq!(out, [3.0f64.sin(), 10.0]);
        p.diffusion.eval(0.0, &[3.0, 5.0], &mut out);
        assert_eq!(out, [8.0, 5.0f64.cos()]);
    }

    #[test]
    fn order_constraints() {
        let p = ProblemSpec::sec6(1.0).unwrap();
        let mut q = p.clone();
        q.beta = 0.8;
        assert_eq!(q.validate().unwrap_err().to_string(), "invalid input: beta must be < alpha");
        q.beta = 0.75;
        assert!(q.validate().is_err());
        q.beta = 0.0;
        assert!(q.validate().is_err());
        q.a_mat = Matrix::zeros(2);
        assert!(q.validate().is_ok());
        let mut q = p.clone();
        q.alpha = 0.5;
        assert!(q.validate().is_err());
        q.alpha = 1.0;
        assert!(q.validate().is_err());
        assert!(p.with_horizon(0.0).is_err());
    }

    #[test]
    fn field_dimension_checked() {
        let mut p = ProblemSpec::sec6(1.0).unwrap();
        p.a_mat = Matrix::zeros(3);
        p.b_mat = Matrix::zeros(3);
        assert!(p.validate().is_err());
        assert!(builtin_field("nope").is_err());
    }

    #[test]
    fn gaussian_sampling_is_keyed_and_shift_coupled() {
        let g = InitialState::Gaussian {
            mean: vec![1.0, 2.0],
            std: 0.5,
        };
        assert_eq!(g.sample(7, 3), g.sample(7, 3));
        assert_ne!(g.sample(7, 3), g.sample(7, 4));
        let s = g.shifted(&[0.1, -0.2]);
        let (x, y) = (g.sample(7, 3), s.sample(7, 3));
        assert!((y[0] - x[0] - 0.1).abs() < 1e-15 && (y[1] - x[1] + 0.2).abs() < 1e-15);
        assert!(InitialState::deterministic(vec![f64::NAN]).is_err());
    }
}
