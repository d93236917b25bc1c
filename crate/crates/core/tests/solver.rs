use she_core::heat_kernel::variance_of_h_modes;
use she_core::spde::experiments::{modulus_percentile, weak_consistency_scan};
use she_core::spde::{solve, Coefficients, DiffusionSpec, DriftSpec, InitialData, Scheme, Solver, SolverConfig};
use she_core::{par, stats};

fn run_to_end(cfg: &SolverConfig, coeffs: &Coefficients) -> Vec<f64> {
    let (n, dt) = cfg.steps();
    let mut s = Solver::new(cfg, coeffs).unwrap();
    for _ in 0..n {
        s.step(dt);
    }
    s.grid_values().to_vec()
}

#[test]
fn additive_variance_matches_truncated_series() {
    let (j, t, reps) = (64, 0.25, 500);
    let coeffs = Coefficients::additive(2);
    let base = SolverConfig {
        p: 2,
        n_sites: j,
        dt: 1e-4,
        t_end: t,
        ..SolverConfig::default()
    };
    let samples: Vec<[f64; 2]> = par::map(reps, 0, |rep| {
        let v = run_to_end(&SolverConfig { replica: rep as u64, ..base.clone() }, &coeffs);
        [v[0], v[1]]
    });
    let squares: Vec<f64> = samples.iter().flat_map(|s| s.iter().map(|x| x * x)).collect();
    let (emp, se) = stats::mean_se(&squares);
    let exact = variance_of_h_modes(t, j / 2);
    assert!((emp - exact).abs() < 4.0 * se, "empirical {emp} vs {exact} (se {se})");
}

#[test]
fn weak_error_shrinks_with_dt() {
    let rows = weak_consistency_scan(64, 0.1, &[4e-3, 1e-3, 2.5e-4], 400, 5, 0).unwrap();
    for w in rows.windows(2) {
        assert!(w[1].ks_coupled < w[0].ks_coupled, "{rows:?}");
        let gap = |r: &she_core::spde::experiments::WeakConsistencyRow| (r.variance_semi_implicit - r.variance_exact).abs();
        assert!(gap(&w[1]) < gap(&w[0]), "{rows:?}");
    }
}

/// Standard normal grid noise indexed by `(step, coordinate, site)`.
fn noise_value(step: u64, c: usize, site: usize) -> f64 {
    use rand::SeedableRng;
    use rand_distr::Distribution;
    let key = step.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ ((c as u64) << 40) ^ site as u64;
    let mut g = rand_xoshiro::SplitMix64::seed_from_u64(key);
    rand_distr::StandardNormal.sample(&mut g)
}

#[test]
fn solutions_commute_with_grid_shifts() {
    let (j, k, p) = (128usize, 17usize, 2usize);
    let coeffs = Coefficients::from_specs(p, &DriftSpec::Saturating, &DiffusionSpec::SinScaled { amp: 0.5 });
    let u0: Vec<f64> = (0..j * p).map(|i| ((i * 37 % 11) as f64 - 5.0) / 3.0).collect();
    let mut shifted = vec![0.0; j * p];
    for i in 0..j {
        let src = (i + j - k) % j;
        shifted[p * i..p * i + p].copy_from_slice(&u0[p * src..p * src + p]);
    }
    let run = |values: Vec<f64>, offset: usize| {
        let cfg = SolverConfig {
            p,
            n_sites: j,
            dt: 1e-4,
            t_end: 0.02,
            initial: InitialData::Grid { values },
            scheme: Scheme::SemiImplicit,
            ..SolverConfig::default()
        };
        let solver = Solver::new(&cfg, &coeffs).unwrap().with_custom_noise(move |step, c, out: &mut [f64]| {
            for (i, o) in out.iter_mut().enumerate() {
                *o = noise_value(step, c, (i + j - offset) % j);
            }
        });
        let (n, dt) = cfg.steps();
        let mut s = solver;
        for _ in 0..n {
            s.step(dt);
        }
        s.grid_values().to_vec()
    };
    let a = run(u0, 0);
    let b = run(shifted, k);
    for i in 0..j {
        let src = (i + j - k) % j;
        for c in 0..p {
            let (x, y) = (b[p * i + c], a[p * src + c]);
            assert!((x - y).abs() < 1e-12, "site {i}: {x} vs {y}");
        }
    }
}

#[test]
fn modulus_percentile_stable_under_refinement() {
    let coeffs = Coefficients::from_specs(1, &DriftSpec::Saturating, &DiffusionSpec::SinScaled { amp: 0.5 });
    let q = |j: usize| {
        let h = 2.0 / j as f64;
        let base = SolverConfig {
            p: 1,
            n_sites: j,
            dt: h * h / 4.0,
            t_end: 0.05,
            scheme: Scheme::ExponentialIntegrator,
            seed: 9,
            ..SolverConfig::default()
        };
        modulus_percentile(&base, &coeffs, 100, 0.9, 4, 0).unwrap()
    };
    let (coarse, fine) = (q(64), q(128));
    let ratio = fine / coarse;
    assert!(coarse.is_finite() && fine.is_finite());
    assert!((0.67..=1.5).contains(&ratio), "99th percentiles {coarse} and {fine}");
}

#[test]
fn trajectory_records_requested_frames() {
    let coeffs = Coefficients::additive(1);
    let cfg = SolverConfig {
        n_sites: 32,
        dt: 1e-3,
        t_end: 0.01,
        record_every: 5,
        ..SolverConfig::default()
    };
    let tr = solve(&cfg, &coeffs).unwrap();
    assert_eq!(tr.field.times.len(), 3);
    assert_eq!(tr.diagnostics.len(), 11);
    assert!(tr.blow_up.is_none());
}
