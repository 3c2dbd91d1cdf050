use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::geometry::Vec3;

/// Uniform directions on the unit sphere from a ChaCha8 stream: z = 1 − 2u₁,
/// φ = 2πu₂. Each direction consumes two draws, so a longer request with the
/// same seed extends a shorter one.
pub fn sample_sphere_rays(count: usize, seed: u64) -> Vec<Vec3> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let u1: f64 = rng.gen();
            let u2: f64 = rng.gen();
            let z = 1.0 - 2.0 * u1;
            let r = (1.0 - z * z).max(0.0).sqrt();
            let phi = TAU * u2;
            Vec3::new(r * phi.cos(), r * phi.sin(), z).normalized()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn count_and_norm() {
        let rays = sample_sphere_rays(2000, 7);
        assert_eq!(rays.len(), 2000);
        assert!(rays.iter().all(|d| (d.norm() - 1.0).abs() < 1e-12));
    }

    #[test]
    fn mean_is_near_zero() {
        let rays = sample_sphere_rays(2000, 7);
        let mean = rays.iter().fold(Vec3::ZERO, |a, &d| a + d) / 2000.0;
        assert!(mean.norm() < 0.05, "{}", mean.norm());
    }

    #[test]
    fn prefix_consistent_and_seeded() {
        let a = sample_sphere_rays(100, 3);
        let b = sample_sphere_rays(300, 3);
        assert_eq!(a[..], b[..100]);
        assert_ne!(a, sample_sphere_rays(100, 4));
    }
}
