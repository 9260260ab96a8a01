//! Counter-based random streams.
//!
//! Every random draw in the crate comes from a ChaCha8 generator keyed by a
//! 64-bit seed and positioned on a stream index. Sample `k` of an experiment
//! with master seed `m` always reads from `stream(m, k)`, so a parallel run
//! produces the same numbers as a sequential one regardless of how samples are
//! distributed over workers. Independent sub-experiments derive their own
//! master seed with [`derive_seed`].

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::C64;

/// SplitMix64 finalizer.
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives the master seed of a labelled sub-experiment.
pub fn derive_seed(master: u64, label: u64) -> u64 {
    mix64(master ^ mix64(label.wrapping_add(0x9e37_79b9_7f4a_7c15)))
}

/// The generator for sample `index` under `master`.
pub fn stream(master: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(index);
    rng
}

/// Standard complex Gaussian: E|z|^2 = 1, real and imaginary parts N(0, 1/2).
pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

pub fn complex_normal_vec<R: Rng + ?Sized>(rng: &mut R, len: usize) -> DVector<C64> {
    DVector::from_fn(len, |_, _| complex_normal(rng))
}

/// Uniform point on the unit sphere of C^len.
pub fn unit_sphere<R: Rng + ?Sized>(rng: &mut R, len: usize) -> DVector<C64> {
    loop {
        let v = complex_normal_vec(rng, len);
        let norm = v.norm();
        if norm > 1e-12 {
            return v / C64::from(norm);
        }
    }
}
