use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};
use she_core::fractal::experiments::translation_count_ks;
use she_core::fractal::{dim_estimate, dim_estimate_auto, CantorSpec, PointCloud};

/// Graph `{(x, B(x))}` of a Brownian path on `[0, 1]` at `2^{-16}` spacing,
/// built by summing independent increments.
fn brownian_graph(seed: u64) -> PointCloud {
    let n = 1usize << 16;
    let h = 1.0 / n as f64;
    let mut g = rand_xoshiro::Xoshiro256PlusPlus::seed_from_u64(seed);
    let mut b = 0.0;
    let mut pts = Vec::with_capacity(2 * (n + 1));
    pts.extend([0.0, 0.0]);
    for i in 1..=n {
        let z: f64 = StandardNormal.sample(&mut g);
        b += h.sqrt() * z;
        pts.extend([i as f64 * h, b]);
    }
    PointCloud::new(2, pts, "brownian graph").unwrap()
}

#[test]
fn brownian_graph_has_dimension_three_halves() {
    let slopes: Vec<f64> = (0..5).map(|s| dim_estimate_auto(&brownian_graph(s)).unwrap().slope).collect();
    let mean = slopes.iter().sum::<f64>() / slopes.len() as f64;
    assert!((mean - 1.5).abs() <= 0.1, "{slopes:?}");
}

#[test]
fn fixed_window_matches_auto_window_on_segment() {
    let pts: Vec<f64> = (0..1 << 14).flat_map(|i| [i as f64 / (1 << 14) as f64, 0.5]).collect();
    let cloud = PointCloud::new(2, pts, "segment").unwrap();
    let fixed = dim_estimate(&cloud, 3, 9).unwrap();
    let auto = dim_estimate_auto(&cloud).unwrap();
    assert!((fixed.slope - 1.0).abs() < 0.02 && (auto.slope - 1.0).abs() < 0.05);
}

#[test]
fn counts_are_translation_invariant() {
    let set = CantorSpec::middle_thirds(8, -1.0, 1.0);
    let r = translation_count_ks(0.5, 2, &set, 0.37, 6, 256, 200, 4).unwrap();
    assert!(r.indistinguishable, "{r:?}");
}
