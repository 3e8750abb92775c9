//! Caputo stochastic multi-term equations
//!
//! ```text
//! ᶜD^α X - A ᶜD^β X - B X = b(t, X) + σ(t, X) dW/dt,   X(0) = η
//! ```
//!
//! solved on a uniform grid either from the Volterra integral form
//! (explicit Euler–Maruyama) or from the Mittag-Leffler kernel form.

mod driver;
mod ensemble;
mod kernel;
mod problem;
mod solver;

pub use driver::BrownianDriver;
pub use ensemble::{PathEnsemble, Scheme};
pub use kernel::{MildForm, PathOutcome, VolterraKernel};
pub use problem::{builtin_field, InitialState, ProblemSpec, VectorField, BUILTIN_FIELDS};
pub use solver::{
    coupled_pair, coupled_pair_with, initial_iterate, map_coupled_paths, picard_apply,
    picard_apply_with, simulate, simulate_em, simulate_mild, FLAGGED_FRACTION_LIMIT,
};
