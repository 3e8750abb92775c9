use crate::error::{Error, Result};
use crate::smtde::driver::BrownianDriver;
use crate::smtde::kernel::MildForm;

/// Which scheme produced an ensemble.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    EulerMaruyama,
    Mild(MildForm),
    /// Output of `iteration` applications of the Picard operator.
    Picard { iteration: usize },
    /// The Brownian motion itself, `X(t) = W(t)`.
    Brownian,
}

impl Scheme {
    pub fn tag(&self) -> String {
        match self {
            Scheme::EulerMaruyama => "em".into(),
            Scheme::Mild(MildForm::VariationOfConstants) => "mild".into(),
            Scheme::Mild(MildForm::Literal) => "mild-literal".into(),
            Scheme::Picard { iteration } => format!("picard-{iteration}"),
            Scheme::Brownian => "brownian".into(),
        }
    }
}

/// `n_paths` trajectories on the grid `t_i = i h`, `i = 0..=n_steps`.
///
/// Values are stored path-major: `values[(p * (n_steps + 1) + i) * dim + d]`.
/// A path whose state stopped being finite is flagged; its remaining
/// entries are NaN.
#[derive(Debug, Clone, PartialEq)]
pub struct PathEnsemble {
    dim: usize,
    horizon: f64,
    driver: BrownianDriver,
    scheme: Scheme,
    values: Vec<f64>,
    flagged: Vec<bool>,
}

impl PathEnsemble {
    pub(crate) fn from_paths(
        dim: usize,
        horizon: f64,
        driver: BrownianDriver,
        scheme: Scheme,
        paths: Vec<(Vec<f64>, bool)>,
    ) -> Self {
        let len = (driver.n_steps + 1) * dim;
        let mut values = Vec::with_capacity(paths.len() * len);
        let mut flagged = Vec::with_capacity(paths.len());
        for (v, f) in paths {
            debug_assert_eq!(v.len(), len);
            values.extend_from_slice(&v);
            flagged.push(f);
        }
        PathEnsemble {
            dim,
            horizon,
            driver,
            scheme,
            values,
            flagged,
        }
    }

    /// Ensemble of the driver's Brownian paths `W(t_i)`.
    pub fn brownian(driver: BrownianDriver, horizon: f64, n_paths: usize) -> Self {
        let h = horizon / driver.n_steps as f64;
        let paths = (0..n_paths as u64)
            .map(|p| {
                let mut w = Vec::with_capacity(driver.n_steps + 1);
                w.push(0.0);
                let mut acc = 0.0;
                for dw in driver.increments(p, h) {
                    acc += dw;
                    w.push(acc);
                }
                (w, false)
            })
            .collect();
        PathEnsemble::from_paths(1, horizon, driver, Scheme::Brownian, paths)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_paths(&self) -> usize {
        self.flagged.len()
    }

    pub fn n_steps(&self) -> usize {
        self.driver.n_steps
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn step(&self) -> f64 {
        self.horizon / self.driver.n_steps as f64
    }

    pub fn time(&self, i: usize) -> f64 {
        i as f64 * self.step()
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.n_steps()).map(|i| self.time(i)).collect()
    }

    pub fn driver(&self) -> &BrownianDriver {
        &self.driver
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn path(&self, p: usize) -> &[f64] {
        let len = (self.n_steps() + 1) * self.dim;
        &self.values[p * len..(p + 1) * len]
    }

    pub fn state(&self, p: usize, i: usize) -> &[f64] {
        &self.path(p)[i * self.dim..(i + 1) * self.dim]
    }

    pub fn is_flagged(&self, p: usize) -> bool {
        self.flagged[p]
    }

    pub fn flagged_count(&self) -> usize {
        self.flagged.iter().filter(|f| **f).count()
    }

    /// Errors unless `other` lives on the same grid, dimension and path count.
    pub fn check_compatible(&self, other: &PathEnsemble) -> Result<()> {
        if self.dim != other.dim
            || self.n_steps() != other.n_steps()
            || self.horizon != other.horizon
            || self.n_paths() != other.n_paths()
        {
            return Err(Error::invalid(format!(
                "ensembles differ: dim {}/{}, steps {}/{}, horizon {}/{}, paths {}/{}",
                self.dim,
                other.dim,
                self.n_steps(),
                other.n_steps(),
                self.horizon,
                other.horizon,
                self.n_paths(),
                other.n_paths()
            )));
        }
        Ok(())
    }
}
