//! Monte Carlo experiments on solver ensembles: the coupled linearization
//! error, increment moment scaling, the moment bound for stochastic
//! convolutions, weak consistency and the modulus of continuity.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use super::coefficients::Coefficients;
use super::solver::{InitialData, Scheme, Solver, SolverConfig, SolverError};
use crate::gaussian_field::{default_n_modes, sample_coeffs_at};
use crate::heat_kernel::{variance_of_h, SeriesTruncation};
use crate::par;
use crate::stats::{self, LinearFit};
use crate::torus::{parabolic_dist, SpaceTimePoint};

/// Smallest even integer `>= max(x, 4)`.
fn even_at_least(x: f64) -> usize {
    let j = x.max(4.0).ceil() as usize;
    j + j % 2
}

/// `(E X^k)^{1/k}` with a delta-method standard error.
fn moment_root(xs: &[f64], k: u32) -> (f64, f64) {
    let powered: Vec<f64> = xs.iter().map(|x| x.powi(k as i32)).collect();
    let (m, se) = stats::mean_se(&powered);
    let root = m.powf(1.0 / k as f64);
    (root, root * se / (k as f64 * m))
}

// ---------------------------------------------------------------------------
// Linearization error

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LinearizationConfig {
    pub p: usize,
    pub t_grid: Vec<f64>,
    pub n_replicas: usize,
    pub seed: u64,
    /// Moments `k` whose `k`-th root is regressed on `t`; the first is the
    /// headline statistic (`k = 1`, the mean sup error, by default).
    pub moments: Vec<u32>,
    /// Grid sites per `√t` of length: `J = 2 · sites_per_sqrt_t / √t`,
    /// rounded up to an even integer.
    pub sites_per_sqrt_t: f64,
    pub steps_per_run: usize,
    pub scheme: Scheme,
    pub initial: InitialData,
    pub threads: usize,
}

impl Default for LinearizationConfig {
    fn default() -> Self {
        Self {
            p: 2,
            t_grid: stats::logspace(1e-4, 1e-2, 5),
            n_replicas: 200,
            seed: 0,
            moments: vec![1, 2, 4],
            sites_per_sqrt_t: 8.0,
            steps_per_run: 64,
            scheme: Scheme::ExponentialIntegrator,
            initial: InitialData::Zero,
            threads: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearizationRow {
    pub t: f64,
    pub n_sites: usize,
    pub dt: f64,
    pub mean_error: f64,
    pub max_error: f64,
    /// `(E err^k)^{1/k}` and its standard error, one entry per moment.
    pub moment_roots: Vec<(u32, f64, f64)>,
    /// Root mean square of the error at the single site `x = -1`.
    pub site_rms: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearizationReport {
    pub rows: Vec<LinearizationRow>,
    /// Log-log slope of `(E err^k)^{1/k}` against `t`, per moment. Empty
    /// when `σ` is constant (the error is then pure rounding).
    pub slopes: Vec<(u32, LinearFit)>,
    /// Log-log slope of [`LinearizationRow::site_rms`]; separates the
    /// pointwise rate from the extra growth of the supremum over `x`.
    pub site_slope: Option<LinearFit>,
    pub constant_sigma: bool,
}

/// For each `t`, runs the solver for `u` and for `H` (`b ≡ 0`, `σ ≡ I`) on
/// the same noise and records `sup_x ‖u(t,x) - (𝒢_t u_0)(x) - σ(u_0(x)) H(t,x)‖`.
pub fn linearization_error_scan(cfg: &LinearizationConfig, coeffs: &Coefficients) -> Result<LinearizationReport, SolverError> {
    let p = cfg.p;
    let constant_sigma = coeffs.constant_diffusion.is_some();
    let mut rows = Vec::new();
    for &t in &cfg.t_grid {
        let j = even_at_least(2.0 * cfg.sites_per_sqrt_t / t.sqrt());
        let base = SolverConfig {
            p,
            n_sites: j,
            dt: t / cfg.steps_per_run as f64,
            t_end: t,
            initial: cfg.initial.clone(),
            scheme: cfg.scheme,
            seed: cfg.seed,
            ..SolverConfig::default()
        };
        let (n_steps, dt) = base.steps();
        // Deterministic part 𝒢_t u_0 and the frozen diffusion σ(u_0(x)).
        let mut heat = Solver::new(&base, &Coefficients::from_specs(p, &super::DriftSpec::Zero, &super::DiffusionSpec::Zero))?;
        let u0 = heat.grid_values().to_vec();
        for _ in 0..n_steps {
            heat.step(dt);
        }
        let g_u0 = heat.grid_values().to_vec();
        let frozen: Vec<Vec<f64>> = u0.chunks(p).map(|v| coeffs.eval_diffusion(v)).collect();

        let errors: Vec<Result<(f64, f64), SolverError>> = par::map(cfg.n_replicas, cfg.threads, |rep| {
            let c = SolverConfig {
                replica: rep as u64,
                ..base.clone()
            };
            let mut u = Solver::new(&c, coeffs)?;
            let zero_init = SolverConfig {
                initial: InitialData::Zero,
                ..c.clone()
            };
            let mut h = Solver::new(&zero_init, &Coefficients::additive(p))?;
            for _ in 0..n_steps {
                u.step(dt);
                h.step(dt);
            }
            let (uv, hv) = (u.grid_values().to_vec(), h.grid_values().to_vec());
            let mut worst: f64 = 0.0;
            let mut at_site = 0.0;
            for s in 0..j {
                let m = &frozen[s];
                let mut e2 = 0.0;
                for r in 0..p {
                    let lin: f64 = (0..p).map(|q| m[r * p + q] * hv[s * p + q]).sum();
                    let e = uv[s * p + r] - g_u0[s * p + r] - lin;
                    e2 += e * e;
                }
                worst = worst.max(e2.sqrt());
                if s == 0 {
                    at_site = e2;
                }
            }
            Ok((worst, at_site))
        });
        let errors: Vec<(f64, f64)> = errors.into_iter().collect::<Result<_, _>>()?;
        let site_rms = (errors.iter().map(|e| e.1).sum::<f64>() / errors.len() as f64).sqrt();
        let errors: Vec<f64> = errors.into_iter().map(|e| e.0).collect();
        let moment_roots = cfg
            .moments
            .iter()
            .map(|&k| {
                let (m, se) = moment_root(&errors, k);
                (k, m, se)
            })
            .collect();
        rows.push(LinearizationRow {
            t,
            n_sites: j,
            dt,
            mean_error: errors.iter().sum::<f64>() / errors.len() as f64,
            max_error: errors.iter().copied().fold(0.0, f64::max),
            moment_roots,
            site_rms,
        });
    }
    let lt: Vec<f64> = rows.iter().map(|r| r.t.ln()).collect();
    let site_slope = if constant_sigma {
        None
    } else {
        stats::linear_fit(&lt, &rows.iter().map(|r| r.site_rms.ln()).collect::<Vec<_>>())
    };
    let slopes = if constant_sigma {
        Vec::new()
    } else {
        cfg.moments
            .iter()
            .enumerate()
            .filter_map(|(i, &k)| {
                let ly: Vec<f64> = rows.iter().map(|r| r.moment_roots[i].1.ln()).collect();
                stats::linear_fit(&lt, &ly).map(|f| (k, f))
            })
            .collect()
    };
    Ok(LinearizationReport {
        rows,
        slopes,
        site_slope,
        constant_sigma,
    })
}

// ---------------------------------------------------------------------------
// Increment moments

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IncrementConfig {
    pub p: usize,
    pub n_sites: usize,
    pub t: f64,
    pub dt: f64,
    pub n_replicas: usize,
    pub seed: u64,
    pub scheme: Scheme,
    pub initial: InitialData,
    /// Time lags `t - r`, all below `t`.
    pub time_lags: Vec<f64>,
    /// Number of (log-spaced) spatial separations in `[8h, 0.25]`.
    pub n_space_lags: usize,
    pub threads: usize,
}

impl Default for IncrementConfig {
    fn default() -> Self {
        Self {
            p: 2,
            n_sites: 1024,
            t: 0.5,
            dt: 1e-3,
            n_replicas: 200,
            seed: 0,
            scheme: Scheme::ExponentialIntegrator,
            initial: InitialData::Zero,
            time_lags: stats::logspace(1e-5, 1e-2, 8),
            n_space_lags: 8,
            threads: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IncrementRow {
    pub lag: f64,
    pub mean_square: f64,
    pub std_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IncrementReport {
    pub space: Vec<IncrementRow>,
    pub time: Vec<IncrementRow>,
    pub slope_space: Option<LinearFit>,
    pub slope_time: Option<LinearFit>,
}

fn mean_square_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>()
}

/// Ensemble estimates of `E‖u(t,x) - u(t,z)‖²` against `dist(x, z)` and of
/// `E‖u(t,x) - u(r,x)‖²` against `t - r`, each averaged over all grid sites.
pub fn increment_moment_scan(cfg: &IncrementConfig, coeffs: &Coefficients) -> Result<IncrementReport, SolverError> {
    let (j, p) = (cfg.n_sites, cfg.p);
    let h = 2.0 / j as f64;
    let mut lags: Vec<usize> = stats::logspace(8.0, 0.25 / h, cfg.n_space_lags.max(2))
        .into_iter()
        .map(|m| m.round() as usize)
        .collect();
    lags.dedup();
    let mut tl = cfg.time_lags.clone();
    tl.sort_by(|a, b| b.total_cmp(a));
    if tl.first().is_some_and(|&l| l >= cfg.t) {
        return Err(SolverError::Invalid("time lags must be smaller than t".into()));
    }
    let per_rep: Vec<Result<(Vec<f64>, Vec<f64>), SolverError>> = par::map(cfg.n_replicas, cfg.threads, |rep| {
        let c = SolverConfig {
            p,
            n_sites: j,
            dt: cfg.dt,
            t_end: cfg.t,
            initial: cfg.initial.clone(),
            scheme: cfg.scheme,
            seed: cfg.seed,
            replica: rep as u64,
            ..SolverConfig::default()
        };
        let mut s = Solver::new(&c, coeffs)?;
        let advance = |s: &mut Solver, target: f64| {
            while s.time() < target * (1.0 - 1e-13) {
                let remaining = target - s.time();
                let n = (remaining / cfg.dt).ceil().max(1.0);
                s.step(remaining / n);
            }
        };
        let mut snaps = Vec::with_capacity(tl.len());
        for &lag in &tl {
            advance(&mut s, cfg.t - lag);
            snaps.push(s.grid_values().to_vec());
        }
        advance(&mut s, cfg.t);
        let last = s.grid_values().to_vec();
        let time: Vec<f64> = snaps.iter().map(|f| mean_square_diff(&last, f) / j as f64).collect();
        let space: Vec<f64> = lags
            .iter()
            .map(|&m| {
                let mut acc = 0.0;
                for x in 0..j {
                    let z = (x + m) % j;
                    acc += mean_square_diff(&last[x * p..(x + 1) * p], &last[z * p..(z + 1) * p]);
                }
                acc / j as f64
            })
            .collect();
        Ok((space, time))
    });
    let per_rep: Vec<(Vec<f64>, Vec<f64>)> = per_rep.into_iter().collect::<Result<_, _>>()?;
    let rows = |lag_values: Vec<f64>, pick: &dyn Fn(&(Vec<f64>, Vec<f64>)) -> &Vec<f64>| -> Vec<IncrementRow> {
        lag_values
            .iter()
            .enumerate()
            .map(|(i, &lag)| {
                let xs: Vec<f64> = per_rep.iter().map(|r| pick(r)[i]).collect();
                let (m, se) = stats::mean_se(&xs);
                IncrementRow {
                    lag,
                    mean_square: m,
                    std_error: se,
                }
            })
            .collect()
    };
    let space = rows(lags.iter().map(|&m| m as f64 * h).collect(), &|r| &r.0);
    let time = rows(tl.clone(), &|r| &r.1);
    let fit = |rs: &[IncrementRow]| {
        let (x, y): (Vec<f64>, Vec<f64>) = rs
            .iter()
            .filter(|r| r.mean_square > 0.0)
            .map(|r| (r.lag.ln(), r.mean_square.ln()))
            .unzip();
        stats::linear_fit(&x, &y)
    };
    Ok(IncrementReport {
        slope_space: fit(&space),
        slope_time: fit(&time),
        space,
        time,
    })
}

// ---------------------------------------------------------------------------
// Moment bound for the stochastic convolution

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BdgRow {
    pub k: u32,
    pub empirical: f64,
    pub std_error: f64,
    /// `(4kp ∫_0^t ∫ G² · ℳ(σ)²)^{k/2}`.
    pub bound: f64,
    /// Exact Gaussian moment when `σ ≡ I`.
    pub exact: Option<f64>,
    pub holds: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BdgReport {
    pub t: f64,
    pub p: usize,
    pub n_replicas: usize,
    pub variance_integral: f64,
    pub sup_sigma: f64,
    pub rows: Vec<BdgRow>,
}

fn bdg_rows(norms: &[f64], ks: &[u32], p: usize, v: f64, sup_sigma: f64, exact: bool) -> Vec<BdgRow> {
    ks.iter()
        .map(|&k| {
            let powered: Vec<f64> = norms.iter().map(|x| x.powi(k as i32)).collect();
            let (m, se) = stats::mean_se(&powered);
            let bound = (4.0 * k as f64 * p as f64 * v * sup_sigma * sup_sigma).powf(k as f64 / 2.0);
            // E‖X‖^k for X ~ N(0, v I_p).
            let exact = exact.then(|| {
                let (a, kf) = (p as f64 / 2.0, k as f64 / 2.0);
                (2.0 * v).powf(kf) * (ln_gamma(a + kf) - ln_gamma(a)).exp()
            });
            BdgRow {
                k,
                empirical: m,
                std_error: se,
                bound,
                exact,
                holds: m <= bound + 3.0 * se,
            }
        })
        .collect()
}

/// `σ ≡ I`: the stochastic convolution at `(t, 0)` is `H(t, 0)`, drawn from
/// the exact spectral sampler. `ℳ(I) = √p`.
pub fn bdg_bound_check_additive(t: f64, p: usize, ks: &[u32], n_replicas: usize, seed: u64, threads: usize) -> BdgReport {
    let n_modes = default_n_modes(t);
    let norms = par::map(n_replicas, threads, |rep| {
        let coeffs = sample_coeffs_at(t, p, n_modes, seed, rep as u64);
        coeffs
            .iter()
            .map(|c| {
                // x = 0: every cosine equals one, every sine vanishes.
                let v = c[0] * std::f64::consts::FRAC_1_SQRT_2 + (1..=n_modes).map(|n| c[2 * n - 1]).sum::<f64>();
                v * v
            })
            .sum::<f64>()
            .sqrt()
    });
    let v = variance_of_h(t, SeriesTruncation::default()).expect("t > 0");
    let sup = (p as f64).sqrt();
    BdgReport {
        t,
        p,
        n_replicas,
        variance_integral: v,
        sup_sigma: sup,
        rows: bdg_rows(&norms, ks, p, v, sup, true),
    }
}

/// Bounded `σ`, `b ≡ 0`, `u_0 ≡ 0`: the solution is the stochastic
/// convolution itself; uses `‖u(t, -1)‖` from a solver ensemble.
pub fn bdg_bound_check_solver(
    base: &SolverConfig,
    coeffs: &Coefficients,
    ks: &[u32],
    n_replicas: usize,
    threads: usize,
) -> Result<BdgReport, SolverError> {
    let sup = coeffs
        .sup_diffusion
        .ok_or_else(|| SolverError::Invalid("σ must be bounded".into()))?;
    if !coeffs.zero_drift {
        return Err(SolverError::Invalid("the check needs b ≡ 0".into()));
    }
    let p = base.p;
    let norms: Vec<Result<f64, SolverError>> = par::map(n_replicas, threads, |rep| {
        let c = SolverConfig {
            replica: rep as u64,
            initial: InitialData::Zero,
            ..base.clone()
        };
        let (n, dt) = c.steps();
        let mut s = Solver::new(&c, coeffs)?;
        for _ in 0..n {
            s.step(dt);
        }
        Ok(s.grid_values()[..p].iter().map(|x| x * x).sum::<f64>().sqrt())
    });
    let norms: Vec<f64> = norms.into_iter().collect::<Result<_, _>>()?;
    let v = variance_of_h(base.t_end, SeriesTruncation::default()).map_err(|e| SolverError::Invalid(e.to_string()))?;
    Ok(BdgReport {
        t: base.t_end,
        p,
        n_replicas,
        variance_integral: v,
        sup_sigma: sup,
        rows: bdg_rows(&norms, ks, p, v, sup, false),
    })
}

// ---------------------------------------------------------------------------
// Weak consistency

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeakConsistencyRow {
    pub dt: f64,
    /// Two-sample KS distance between the semi-implicit values and the
    /// exact-in-law values driven by the same noise.
    pub ks_coupled: f64,
    pub variance_semi_implicit: f64,
    pub variance_exact: f64,
}

/// `σ ≡ I`, `b ≡ 0`: compares the semi-implicit single-point law at
/// `(t, -1)` with the exponential-integrator law (exact for the `J`-site
/// truncation) on identical noise, for each `dt`.
pub fn weak_consistency_scan(
    n_sites: usize,
    t: f64,
    dts: &[f64],
    n_replicas: usize,
    seed: u64,
    threads: usize,
) -> Result<Vec<WeakConsistencyRow>, SolverError> {
    let coeffs = Coefficients::additive(1);
    dts.iter()
        .map(|&dt| {
            let pairs: Vec<Result<(f64, f64), SolverError>> = par::map(n_replicas, threads, |rep| {
                let run = |scheme| -> Result<f64, SolverError> {
                    let c = SolverConfig {
                        p: 1,
                        n_sites,
                        dt,
                        t_end: t,
                        scheme,
                        seed,
                        replica: rep as u64,
                        ..SolverConfig::default()
                    };
                    let (n, h) = c.steps();
                    let mut s = Solver::new(&c, &coeffs)?;
                    for _ in 0..n {
                        s.step(h);
                    }
                    Ok(s.grid_values()[0])
                };
                Ok((run(Scheme::SemiImplicit)?, run(Scheme::ExponentialIntegrator)?))
            });
            let pairs: Vec<(f64, f64)> = pairs.into_iter().collect::<Result<_, _>>()?;
            let (a, b): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            let var = |xs: &[f64]| xs.iter().map(|x| x * x).sum::<f64>() / xs.len() as f64;
            Ok(WeakConsistencyRow {
                dt,
                ks_coupled: stats::ks_two_sample(&a, &b),
                variance_semi_implicit: var(&a),
                variance_exact: var(&b),
            })
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Modulus of continuity

/// `max ‖u(t,x) - u(s,z)‖ / ρ((t,x),(s,z))^exponent` over pairs of recorded
/// grid points whose time and site indices differ by at most `window`.
pub fn holder_quotient_max(field: &crate::gaussian_field::FieldSample, exponent: f64, window: usize) -> f64 {
    let (nt, ns) = (field.times.len(), field.sites.len());
    let mut best: f64 = 0.0;
    for ti in 0..nt {
        for si in 0..ns {
            let a = field.point(ti, si);
            let pa = SpaceTimePoint::new(field.times[ti], field.sites[si].coord());
            for tj in ti..nt.min(ti + window + 1) {
                for dsi in 0..=window.min(ns / 2) {
                    if tj == ti && dsi == 0 {
                        continue;
                    }
                    let sj = (si + dsi) % ns;
                    let b = field.point(tj, sj);
                    let rho = parabolic_dist(pa, SpaceTimePoint::new(field.times[tj], field.sites[sj].coord()));
                    let d = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
                    best = best.max(d / rho.powf(exponent));
                }
            }
        }
    }
    best
}

/// Per-replica Hölder quotients of solver trajectories recorded at every
/// step; returns the ensemble 99th percentile.
pub fn modulus_percentile(
    base: &SolverConfig,
    coeffs: &Coefficients,
    n_replicas: usize,
    exponent: f64,
    window: usize,
    threads: usize,
) -> Result<f64, SolverError> {
    let q: Vec<Result<f64, SolverError>> = par::map(n_replicas, threads, |rep| {
        let c = SolverConfig {
            replica: rep as u64,
            record_every: 1,
            ..base.clone()
        };
        let tr = super::solver::solve(&c, coeffs)?;
        Ok(holder_quotient_max(&tr.field, exponent, window))
    });
    let q: Vec<f64> = q.into_iter().collect::<Result<_, _>>()?;
    Ok(stats::quantile(&q, 0.99))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spde::{DiffusionSpec, DriftSpec};
    use crate::torus::TorusPoint;

    #[test]
    fn constant_sigma_linearization_is_exact() {
        let coeffs = Coefficients::from_specs(2, &DriftSpec::Zero, &DiffusionSpec::Constant { scale: 0.7 });
        let cfg = LinearizationConfig {
            t_grid: vec![1e-3, 1e-2],
            n_replicas: 4,
            steps_per_run: 16,
            ..LinearizationConfig::default()
        };
        let r = linearization_error_scan(&cfg, &coeffs).unwrap();
        assert!(r.constant_sigma && r.slopes.is_empty());
        for row in &r.rows {
            assert!(row.max_error < 10.0 * row.dt, "{row:?}");
        }
    }

    #[test]
    fn gaussian_moment_formula() {
        // p = 1, k = 4: E X⁴ = 3 v².
        let rows = bdg_rows(&[1.0, 2.0], &[4], 1, 0.5, 1.0, true);
        assert!((rows[0].exact.unwrap() - 0.75).abs() < 1e-12);
        // p = 2, k = 2: E‖X‖² = 2v.
        let rows = bdg_rows(&[1.0, 2.0], &[2], 2, 0.5, 1.0, true);
        assert!((rows[0].exact.unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn additive_bdg_small_ensemble() {
        let r = bdg_bound_check_additive(0.25, 2, &[2, 4], 400, 1, 1);
        for row in &r.rows {
            assert!(row.holds, "{row:?}");
            let exact = row.exact.unwrap();
            assert!((row.empirical - exact).abs() < 5.0 * row.std_error, "{row:?}");
        }
    }

    #[test]
    fn holder_quotient_of_linear_field() {
        // u(t, x) = x on a grid: quotient is |Δx| / |Δx|^{1/2·e}.
        let sites: Vec<TorusPoint> = (0..8).map(|i| TorusPoint::new(-0.5 + 0.125 * i as f64)).collect();
        let values: Vec<f64> = sites.iter().map(|s| s.coord()).collect();
        let f = crate::gaussian_field::FieldSample {
            times: vec![0.0],
            sites,
            p: 1,
            values,
            seed: 0,
            replica: 0,
            n_modes: 0,
            tail_variance_bound: 0.0,
        };
        let q = holder_quotient_max(&f, 1.0, 2);
        // Site indices wrap, so the last and first sites (0.875 apart on the
        // torus) are neighbours and give the largest quotient √0.875.
        assert!((q - 0.875f64.sqrt()).abs() < 1e-12);
        let q = holder_quotient_max(&f, 0.0, 1);
        assert!((q - 0.875).abs() < 1e-12);
    }
}
