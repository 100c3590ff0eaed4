//! Dense matrices, a reverse-mode tape, Adam, and the seeded RNG.

mod adam;
mod backend;
mod matrix;
pub mod ops;
mod rng;
mod tape;

pub use adam::Adam;
pub use backend::{Backend, Eager};
pub use matrix::Matrix;
pub use ops::{categorical_ce, elementwise_bce};
pub use rng::{derive_seed, seed_sweep, splitmix64, Rng, DEFAULT_SEED, RNG_VERSION};
pub use tape::{Gradients, NodeId, Tape};

/// Glorot-uniform `rows×cols` matrix, `fan_in = cols`, `fan_out = rows`.
pub fn glorot_uniform(rows: usize, cols: usize, rng: &mut Rng) -> Matrix {
    let bound = (6.0 / (rows + cols).max(1) as f64).sqrt();
    Matrix::from_fn(rows, cols, |_, _| rng.uniform_range(-bound, bound))
}
