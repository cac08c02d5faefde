//! Seeded randomness.
//!
//! Every random draw in the crate goes through [`seeded`], which returns a
//! ChaCha8 stream generator. ChaCha8 output is fixed by its algorithm, so a
//! seed reproduces the same stream on every platform.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub type Rng = ChaCha8Rng;

pub fn seeded(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn standard_normal_vec(rng: &mut Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| StandardNormal.sample(rng)).collect()
}

/// Uniform sample from the Euclidean ball of the given radius: a normalized
/// Gaussian direction scaled by `radius * u^(1/n)`.
pub fn uniform_in_ball(rng: &mut Rng, center: &[f64], radius: f64) -> Vec<f64> {
    use rand::Rng as _;
    let n = center.len();
    let mut dir = standard_normal_vec(rng, n);
    let norm = crate::linalg::norm(&dir);
    let u: f64 = rng.random();
    let scale = radius * u.powf(1.0 / n as f64) / norm;
    for (d, c) in dir.iter_mut().zip(center) {
        *d = c + scale * *d;
    }
    dir
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_stream() {
        let a = standard_normal_vec(&mut seeded(11), 16);
        let b = standard_normal_vec(&mut seeded(11), 16);
        assert_eq!(a, b);
        let c = standard_normal_vec(&mut seeded(12), 16);
        assert_ne!(a, c);
    }

    #[test]
    fn ball_samples_stay_inside() {
        let mut rng = seeded(3);
        let center = [1.0, -2.0, 0.5];
        for _ in 0..1000 {
            let p = uniform_in_ball(&mut rng, &center, 0.25);
            let d = crate::linalg::norm(&crate::linalg::sub(&p, &center));
            assert!(d <= 0.25 + 1e-15);
        }
    }
}
