use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rect_core::generators::{cantor4, circle, lipschitz_graph, Profile, DEFAULT_POINT_BUDGET};
use rect_core::tangent::{blowup, blowup_trace, flatness_beta2, hausdorff_one_sided, DEFAULT_WINDOW};

#[test]
fn blowups_compose() {
    let g = lipschitz_graph(1, 2, Profile::Sinusoid { amplitude: 0.1 }, 1.0, 1e-4, None).unwrap();
    let mu = &g.measure;
    let x = mu.point(5000).to_vec();
    let (r, s) = (0.2, 0.25);
    let outer = blowup(mu, &x, r, DEFAULT_WINDOW).unwrap();
    let y = outer.measure.point(outer.measure.len() / 3).to_vec();
    let twice = blowup(&outer.normalized_measure().unwrap(), &y, s, 1.0).unwrap();
    let z: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a + r * b).collect();
    let direct = blowup(mu, &z, r * s, 1.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..200 {
        let c = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
        let rho = rng.gen_range(0.01..1.0);
        let a = twice.ball_mass(&c, rho).unwrap();
        let b = direct.ball_mass(&c, rho).unwrap();
        assert!((a - b).abs() <= 1e-12, "{a} vs {b}");
    }
}

// The corner (0, 0) is the fixed point of the contraction onto the first
// quarter square, so quartering the radius and adding one generation gives
// back the same blowup.
#[test]
fn cantor_blowups_are_self_similar() {
    let origin = [0.0, 0.0];
    let fine = cantor4(8, DEFAULT_POINT_BUDGET).unwrap();
    let coarse = cantor4(7, DEFAULT_POINT_BUDGET).unwrap();
    for j in 1..=3 {
        let a = blowup(&fine.measure, &origin, 0.25f64.powi(j + 1), 1.0).unwrap();
        let b = blowup(&coarse.measure, &origin, 0.25f64.powi(j), 1.0).unwrap();
        assert_eq!(a.measure.len(), b.measure.len());
        assert!(hausdorff_one_sided(&a.measure, &b.measure) <= 1e-9);
        assert!(hausdorff_one_sided(&b.measure, &a.measure) <= 1e-9);
        let (na, nb) = (a.normalized_measure().unwrap(), b.normalized_measure().unwrap());
        for rho in [0.1, 0.3, 0.7] {
            let pa = na.ball_mass(&[0.2, 0.2], rho).unwrap();
            let pb = nb.ball_mass(&[0.2, 0.2], rho).unwrap();
            assert!((pa - pb).abs() <= 1e-12, "{pa} vs {pb}");
        }
    }
}

#[test]
fn circle_flatness_is_linear_in_the_radius() {
    let g = circle(1.0, 200_000).unwrap();
    let mu = &g.measure;
    let x = mu.point(777).to_vec();
    let mut ratios = Vec::new();
    let mut r = 0.02;
    while r <= 0.2 + 1e-12 {
        let b = blowup(mu, &x, r, DEFAULT_WINDOW).unwrap();
        ratios.push(flatness_beta2(&b, 1).unwrap().beta2 / r);
        r *= 1.25;
    }
    let lo = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = ratios.iter().copied().fold(0.0, f64::max);
    assert!(hi / lo <= 2.0, "{ratios:?}");
}

#[test]
fn flatness_is_rotation_invariant() {
    let g = lipschitz_graph(1, 2, Profile::Sinusoid { amplitude: 0.1 }, 1.0, 1e-4, None).unwrap();
    let mu = &g.measure;
    let i = 3000;
    let x = mu.point(i).to_vec();
    let base = flatness_beta2(&blowup(mu, &x, 0.1, DEFAULT_WINDOW).unwrap(), 1).unwrap().beta2;
    for angle in [0.3f64, 1.1, 2.5] {
        let (s, c) = angle.sin_cos();
        let rot = mu
            .map_points(|p| vec![c * p[0] - s * p[1], s * p[0] + c * p[1]], mu.resolution())
            .unwrap();
        let xr = rot.point(i).to_vec();
        let beta = flatness_beta2(&blowup(&rot, &xr, 0.1, DEFAULT_WINDOW).unwrap(), 1).unwrap().beta2;
        assert!((beta - base).abs() <= 1e-9 * base.max(1e-12), "{beta} vs {base}");
    }
}

#[test]
fn graph_flatness_decays_linearly_and_cantor_does_not() {
    let graph = lipschitz_graph(1, 2, Profile::Sinusoid { amplitude: 0.1 }, 1.0, 1e-5, None).unwrap();
    let radii: Vec<f64> = (0..6).map(|k| 0.1 * 0.5f64.powi(k)).collect();
    let x = graph.measure.point(30_000).to_vec();
    let t = blowup_trace(&graph.measure, &x, &radii, DEFAULT_WINDOW, 16, 1).unwrap();
    let slope = t.log_slope.unwrap();
    assert!((0.7..=1.3).contains(&slope), "graph slope {slope}");

    let dust = cantor4(9, DEFAULT_POINT_BUDGET).unwrap();
    let radii: Vec<f64> = (1..6).map(|k| 0.5 * 0.25f64.powi(k)).collect();
    let x = dust.measure.point(12_345).to_vec();
    let t = blowup_trace(&dust.measure, &x, &radii, DEFAULT_WINDOW, 16, 1).unwrap();
    assert!(t.rows.iter().all(|row| row.beta2 >= 0.05), "{:?}", t.rows);
    assert!(t.log_slope.unwrap().abs() <= 0.1, "{:?}", t.log_slope);
}
