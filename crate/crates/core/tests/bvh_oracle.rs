mod common;

use common::{linear_nearest, random_triangles, random_unit};
use emtrace::bvh::{Bvh, UpdateThresholds};
use emtrace::geometry::{RigidTransform, Vec3};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn check_rays(bvh: &Bvh, tris: &[emtrace::scene::Triangle], seed: u64, rays: usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..rays {
        let o = Vec3::new(
            rng.gen_range(-25.0..25.0),
            rng.gen_range(-25.0..25.0),
            rng.gen_range(-25.0..25.0),
        );
        let d = random_unit(&mut rng);
        let got = bvh
            .intersect_nearest(tris, o, d, 1e9)
            .unwrap()
            .map(|h| (h.triangle_id, h.t));
        let want = linear_nearest(tris, o, d, 1e9);
        match (got, want) {
            (None, None) => {}
            (Some((ig, tg)), Some((iw, tw))) => {
                assert_eq!(ig, iw, "ray {o:?} {d:?}");
                assert!((tg - tw).abs() <= 1e-9 * tw.abs().max(1.0));
            }
            other => panic!("mismatch {other:?} for ray {o:?} {d:?}"),
        }
    }
}

#[test]
fn nearest_matches_linear_scan() {
    for seed in 0..3 {
        let tris = random_triangles(seed, 400);
        let bvh = Bvh::build(&tris);
        bvh.check_invariants(tris.len()).unwrap();
        check_rays(&bvh, &tris, 100 + seed, 3000);
    }
}

#[test]
fn refit_and_rebuild_keep_queries_exact() {
    let mut tris = random_triangles(7, 600);
    let mut bvh = Bvh::build(&tris);
    let moved: Vec<u32> = (0..600).step_by(7).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for step in 0..6 {
        let t = RigidTransform::translation(Vec3::new(
            rng.gen_range(-4.0..4.0),
            rng.gen_range(-4.0..4.0),
            rng.gen_range(-4.0..4.0),
        ));
        for &i in &moved {
            tris[i as usize] = tris[i as usize].transformed(&t);
        }
        bvh.maintain(&tris, &moved, &UpdateThresholds::default())
            .unwrap();
        bvh.check_invariants(tris.len()).unwrap();
        check_rays(&bvh, &tris, 200 + step, 1500);
    }
}

#[test]
fn occlusion_matches_linear_scan() {
    let tris = random_triangles(11, 300);
    let bvh = Bvh::build(&tris);
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..2000 {
        let a = Vec3::new(
            rng.gen_range(-25.0..25.0),
            rng.gen_range(-25.0..25.0),
            rng.gen_range(-25.0..25.0),
        );
        let b = Vec3::new(
            rng.gen_range(-25.0..25.0),
            rng.gen_range(-25.0..25.0),
            rng.gen_range(-25.0..25.0),
        );
        let len = a.distance(b);
        let d = (b - a) / len;
        let hit = linear_nearest(&tris, a, d, len * (1.0 - 1e-6));
        // the linear oracle's near cutoff is absolute; skip the ambiguous sliver
        if hit.is_some_and(|(_, t)| t < len * 1e-6 + 1e-6) {
            continue;
        }
        assert_eq!(
            bvh.occluded(&tris, a, b, &[]),
            hit.is_some(),
            "{a:?} -> {b:?}"
        );
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn build_invariants(seed in any::<u64>(), n in 0usize..300) {
        let tris = random_triangles(seed, n);
        let bvh = Bvh::build(&tris);
        prop_assert!(bvh.check_invariants(tris.len()).is_ok());
        prop_assert_eq!(bvh.primitive_count(), n);
        for t in &tris {
            prop_assert!(bvh.root_bounds().contains(&t.bounds()));
        }
    }

    #[test]
    fn refit_contains_moved_geometry(seed in any::<u64>(), dx in -10.0f64..10.0, stride in 1usize..9) {
        let mut tris = random_triangles(seed, 200);
        let mut bvh = Bvh::build(&tris);
        let moved: Vec<u32> = (0..200u32).step_by(stride).collect();
        let t = RigidTransform::rotation_about(Vec3::Z, dx / 10.0)
            .then(&RigidTransform::translation(Vec3::new(dx, 0.0, -dx)));
        for &i in &moved {
            tris[i as usize] = tris[i as usize].transformed(&t);
        }
        bvh.refit(&tris, &moved).unwrap();
        prop_assert!(bvh.check_invariants(tris.len()).is_ok());
        for t in &tris {
            prop_assert!(bvh.root_bounds().contains(&t.bounds()));
        }
    }

    #[test]
    fn empty_refit_is_identity(seed in any::<u64>()) {
        let tris = random_triangles(seed, 120);
        let mut bvh = Bvh::build(&tris);
        let before = bvh.to_csv();
        bvh.refit(&tris, &[]).unwrap();
        prop_assert_eq!(before, bvh.to_csv());
    }
}
