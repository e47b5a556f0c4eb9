use proptest::prelude::*;

use rect_core::index::sq_dist;
use rect_core::measure::{DiscreteMeasure, Region, SignedMeasure};

fn cloud(max: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (1..max).prop_flat_map(|len| {
        (
            prop::collection::vec(-2.0f64..2.0, len * 2),
            prop::collection::vec(0.0f64..3.0, len),
        )
    })
}

fn measure(coords: Vec<f64>, weights: Vec<f64>) -> DiscreteMeasure {
    DiscreteMeasure::new(coords, weights, 1, 2, 1e-3).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ball_mass_is_monotone_in_radius(
        (c, w) in cloud(300),
        x in prop::array::uniform2(-2.5f64..2.5),
        r1 in 0.0f64..3.0,
        dr in 0.0f64..2.0,
    ) {
        let mu = measure(c, w);
        let a = mu.ball_mass(&x, r1).unwrap();
        let b = mu.ball_mass(&x, r1 + dr).unwrap();
        prop_assert!(a <= b);
    }

    #[test]
    fn index_agrees_with_brute_force_bit_exactly(
        (c, w) in cloud(600),
        queries in prop::collection::vec((prop::array::uniform2(-2.5f64..2.5), 0.0f64..2.0), 16),
    ) {
        let mu = measure(c, w);
        for (x, r) in queries {
            let fast = mu.ball_mass(&x, r).unwrap();
            let slow = mu.ball_mass_brute(&x, r).unwrap();
            prop_assert_eq!(fast.to_bits(), slow.to_bits());
        }
    }

    #[test]
    fn ball_mass_is_additive_over_unions(
        (c1, w1) in cloud(200),
        (c2, w2) in cloud(200),
        x in prop::array::uniform2(-2.0f64..2.0),
        r in 0.0f64..2.0,
    ) {
        let a = measure(c1.clone(), w1.clone());
        let b = measure(c2.clone(), w2.clone());
        let both = measure([c1, c2].concat(), [w1, w2].concat());
        let sum = a.ball_mass(&x, r).unwrap() + b.ball_mass(&x, r).unwrap();
        let joint = both.ball_mass(&x, r).unwrap();
        // The joint value is the correctly rounded exact sum; the split one
        // adds one more rounding.
        prop_assert!((joint - sum).abs() <= 2.0 * f64::EPSILON * joint.max(1e-300));
    }

    #[test]
    fn power_of_two_scaling_is_exact(
        (c, w) in cloud(200),
        k in -8i32..8,
        x in prop::array::uniform2(-2.0f64..2.0),
        r in 0.0f64..2.0,
    ) {
        let mu = measure(c, w);
        let s = 2f64.powi(k);
        let scaled = mu.scaled(s).unwrap();
        prop_assert_eq!(scaled.ball_mass(&x, r).unwrap(), s * mu.ball_mass(&x, r).unwrap());
    }

    #[test]
    fn general_scaling_is_correctly_rounded(
        (c, w) in cloud(200),
        s in 0.01f64..100.0,
        x in prop::array::uniform2(-2.0f64..2.0),
        r in 0.0f64..2.0,
    ) {
        let mu = measure(c, w);
        let scaled = mu.scaled(s).unwrap();
        let a = scaled.ball_mass(&x, r).unwrap();
        let b = s * mu.ball_mass(&x, r).unwrap();
        prop_assert!((a - b).abs() <= 4.0 * f64::EPSILON * a.abs().max(1e-300));
    }

    #[test]
    fn restriction_to_a_ball_keeps_exactly_the_inside(
        (c, w) in cloud(300),
        x in prop::array::uniform2(-2.0f64..2.0),
        r in 0.0f64..2.0,
    ) {
        let mu = measure(c, w);
        let sub = mu.restrict(&Region::Ball { center: x.to_vec(), radius: r }).unwrap();
        prop_assert_eq!(sub.total_mass(), mu.ball_mass(&x, r).unwrap());
        prop_assert_eq!(sub.resolution(), mu.resolution());
        for p in sub.points() {
            prop_assert!(sq_dist(p, &x) <= r * r);
        }
    }

    #[test]
    fn signed_ball_mass_matches_sign_summed_count(
        atoms in prop::collection::vec((prop::array::uniform2(-1.0f64..1.0), -2.0f64..2.0), 100),
        x in prop::array::uniform2(-1.0f64..1.0),
        r in 0.0f64..1.5,
    ) {
        let pts: Vec<Vec<f64>> = atoms.iter().map(|(p, _)| p.to_vec()).collect();
        let masses: Vec<f64> = atoms.iter().map(|a| a.1).collect();
        let nu = SignedMeasure::from_atoms(&pts, &masses, 1, 2, 1e-3).unwrap();
        let brute: f64 = atoms
            .iter()
            .filter(|(p, _)| sq_dist(p, &x) <= r * r)
            .map(|a| a.1)
            .sum();
        prop_assert!((nu.signed_ball_mass(&x, r).unwrap() - brute).abs() <= 1e-12);
        let tv: f64 = masses.iter().map(|m| m.abs()).sum();
        prop_assert!((nu.total_variation() - tv).abs() <= 1e-12);
    }
}

#[test]
fn thousand_random_queries_on_a_large_cloud() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
    let coords: Vec<f64> = (0..40_000).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let weights: Vec<f64> = (0..20_000).map(|_| rng.gen_range(0.0..1.0)).collect();
    let mu = measure(coords, weights);
    for _ in 0..1000 {
        let x = [rng.gen_range(-1.2..1.2), rng.gen_range(-1.2..1.2)];
        let r = rng.gen_range(0.0..1.0);
        let fast = mu.ball_mass(&x, r).unwrap();
        let slow = mu.ball_mass_brute(&x, r).unwrap();
        assert!((fast - slow).abs() <= 1e-12 * slow.max(1.0));
    }
}
