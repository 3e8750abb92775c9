use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// Scalar Brownian increments on a uniform grid.
///
/// Each path reads its own ChaCha stream selected by `path_id`, so the
/// increments of a path do not depend on how many paths are simulated or
/// on the order in which they are computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BrownianDriver {
    pub seed: u64,
    pub n_steps: usize,
}

impl BrownianDriver {
    pub fn new(seed: u64, n_steps: usize) -> Result<Self> {
        if n_steps == 0 {
            return Err(Error::invalid("driver needs at least one step"));
        }
        Ok(BrownianDriver { seed, n_steps })
    }

    /// `ΔW_j ~ N(0, h)` for `j = 0..n_steps`.
    pub fn increments(&self, path_id: u64, h: f64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(path_id);
        let sd = h.sqrt();
        (0..self.n_steps)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                sd * z
            })
            .collect()
    }
}
