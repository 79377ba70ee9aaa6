//! Seeded random streams.
//!
//! Every stochastic operation takes a `u64` seed. Independent sub-tasks
//! (per-class generation, per-stage training) draw from separate ChaCha
//! streams of the same seed so their outputs do not depend on execution order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use ndarray::Array2;

pub type Rng = ChaCha8Rng;

pub fn seeded(seed: u64, stream: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// `rows × cols` matrix of standard normal draws.
pub fn standard_normal<R: rand::Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || StandardNormal.sample(rng))
}
