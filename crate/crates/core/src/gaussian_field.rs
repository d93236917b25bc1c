//! The additive-noise solution `H` of `∂_t H = ∂_x² H + ξ`, `H(0) = 0`.
//!
//! In the real Fourier basis each coordinate of `H` is
//! `A_0(t)/√2 + Σ_n A_n(t) cos(πnx) + B_n(t) sin(πnx)`, where `A_0` is a
//! Brownian motion and every other coefficient is an independent
//! Ornstein–Uhlenbeck process with rate `π²n²` driven by unit noise. Those
//! transitions are Gaussian with known moments, so [`SpectralState::evolve`]
//! is exact in law for any step size; the only approximation is keeping
//! finitely many modes.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::heat_kernel::{self, CovarianceModel, HeatKernelError};
use crate::rng::{self, ModeStreams};
use crate::spectral::{self, GridTransform};
use crate::torus::{parabolic_dist, satisfies_greedy_order, torus_dist, SpaceTimePoint, TorusPoint};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FieldError {
    #[error(transparent)]
    Kernel(#[from] HeatKernelError),
    #[error("invalid request: {0}")]
    Invalid(String),
    #[error("points are not in greedy order")]
    NotGreedyOrdered,
}

pub type Result<T> = std::result::Result<T, FieldError>;

/// Mode count that resolves the `√t` variance regime at time `t_min`:
/// `max(64, ceil(8/√t_min))`.
pub fn default_n_modes(t_min: f64) -> usize {
    if t_min <= 0.0 {
        return 64;
    }
    64usize.max((8.0 / t_min.sqrt()).ceil() as usize)
}

/// Variance of `H_1(t, x)` carried by the discarded modes `n > N`, bounded by
/// `Σ_{n>N} 1/(2π²n²) <= 1/(2π²N)`.
pub fn tail_variance_bound(n_modes: usize) -> f64 {
    if n_modes == 0 {
        f64::INFINITY
    } else {
        1.0 / (2.0 * PI * PI * n_modes as f64)
    }
}

#[inline]
pub(crate) fn ou_factors(n: usize, dt: f64) -> (f64, f64) {
    let l = PI * PI * (n * n) as f64;
    let decay = (-l * dt).exp();
    let sd = (-(-2.0 * l * dt).exp_m1() / (2.0 * l)).sqrt();
    (decay, sd)
}

/// Per-slot `(decay, noise sd)` for one step; slot 0 is the Brownian mode.
fn step_factors(n_slots: usize, dt: f64) -> Vec<(f64, f64)> {
    (0..n_slots)
        .map(|k| {
            if k == 0 {
                (1.0, dt.sqrt())
            } else {
                ou_factors(spectral::slot_frequency(k), dt)
            }
        })
        .collect()
}

/// Exact spectral state of `H` with `n_modes` frequencies and `p`
/// independent coordinates.
#[derive(Clone, Debug)]
pub struct SpectralState {
    n_modes: usize,
    p: usize,
    t: f64,
    coeffs: Vec<Vec<f64>>,
    streams: Vec<ModeStreams>,
    cached: Option<(f64, Vec<(f64, f64)>)>,
}

impl SpectralState {
    /// The zero state at `t = 0` for replica `replica` of run `seed`.
    pub fn new(n_modes: usize, p: usize, seed: u64, replica: u64) -> Self {
        let slots = spectral::slots_for_modes(n_modes);
        Self {
            n_modes,
            p,
            t: 0.0,
            coeffs: vec![vec![0.0; slots]; p],
            streams: (0..p)
                .map(|c| ModeStreams::new(seed, replica, c as u64, slots))
                .collect(),
            cached: None,
        }
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    /// All slots of coordinate `c`, in the order of [`crate::spectral`].
    pub fn coeffs(&self, c: usize) -> &[f64] {
        &self.coeffs[c]
    }

    pub fn coeffs_mut(&mut self, c: usize) -> &mut [f64] {
        &mut self.coeffs[c]
    }

    /// `A_0, ..., A_N` of coordinate `c`.
    pub fn cosine_coeffs(&self, c: usize) -> Vec<f64> {
        (0..=self.n_modes)
            .map(|n| self.coeffs[c][spectral::cos_slot(n)])
            .collect()
    }

    /// `B_1, ..., B_N` of coordinate `c`.
    pub fn sine_coeffs(&self, c: usize) -> Vec<f64> {
        (1..=self.n_modes)
            .map(|n| self.coeffs[c][spectral::sin_slot(n)])
            .collect()
    }

    /// Advances every mode by the exact OU / Brownian transition over `dt`.
    ///
    /// # Panics
    /// If `dt` is not positive.
    pub fn evolve(&mut self, dt: f64) {
        assert!(dt > 0.0, "evolve needs dt > 0, got {dt}");
        let slots = spectral::slots_for_modes(self.n_modes);
        let stale = !matches!(&self.cached, Some((d, _)) if *d == dt);
        if stale {
            self.cached = Some((dt, step_factors(slots, dt)));
        }
        let factors = &self.cached.as_ref().expect("filled above").1;
        for (coeffs, streams) in self.coeffs.iter_mut().zip(self.streams.iter_mut()) {
            for (k, (a, &(decay, sd))) in coeffs.iter_mut().zip(factors).enumerate() {
                *a = decay * *a + sd * streams.normal(k);
            }
        }
        self.t += dt;
    }

    /// Values at arbitrary sites, laid out site-major (`out[i * p + c]`).
    pub fn render(&self, sites: &[TorusPoint]) -> Vec<f64> {
        let xs: Vec<f64> = sites.iter().map(|s| s.coord()).collect();
        let mut col = vec![0.0; xs.len()];
        let mut out = vec![0.0; xs.len() * self.p];
        for c in 0..self.p {
            spectral::evaluate_at(&self.coeffs[c], &xs, &mut col);
            for (i, v) in col.iter().enumerate() {
                out[i * self.p + c] = *v;
            }
        }
        out
    }

    /// Values on the uniform grid of `transform.len()` sites, site-major.
    pub fn render_grid(&self, transform: &mut GridTransform, out: &mut [f64]) {
        let j = transform.len();
        let mut col = vec![0.0; j];
        for c in 0..self.p {
            transform.synthesize(&self.coeffs[c], &mut col);
            for (i, v) in col.iter().enumerate() {
                out[i * self.p + c] = *v;
            }
        }
    }
}

/// Variance of a single mode coefficient at time `t`: `t` for `A_0`,
/// `(1 - e^{-2π²n²t})/(2π²n²)` otherwise.
pub fn mode_variance(n: usize, t: f64) -> f64 {
    if n == 0 {
        t
    } else {
        let l = PI * PI * (n * n) as f64;
        -(-2.0 * l * t).exp_m1() / (2.0 * l)
    }
}

/// A sampled field on a `(time × site)` grid with `p` coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldSample {
    pub times: Vec<f64>,
    pub sites: Vec<TorusPoint>,
    pub p: usize,
    /// `values[(ti * sites.len() + si) * p + c]`.
    pub values: Vec<f64>,
    pub seed: u64,
    pub replica: u64,
    pub n_modes: usize,
    /// Variance of the discarded modes, see [`tail_variance_bound`].
    pub tail_variance_bound: f64,
}

impl FieldSample {
    #[inline]
    pub fn get(&self, ti: usize, si: usize, c: usize) -> f64 {
        self.values[(ti * self.sites.len() + si) * self.p + c]
    }

    /// The `p`-vector at `(times[ti], sites[si])`.
    pub fn point(&self, ti: usize, si: usize) -> &[f64] {
        let start = (ti * self.sites.len() + si) * self.p;
        &self.values[start..start + self.p]
    }

    /// All site vectors at time index `ti`, site-major.
    pub fn frame(&self, ti: usize) -> &[f64] {
        let w = self.sites.len() * self.p;
        &self.values[ti * w..(ti + 1) * w]
    }
}

fn uniform_grid_size(sites: &[TorusPoint]) -> Option<usize> {
    let j = sites.len();
    if j < 2 || j % 2 != 0 {
        return None;
    }
    sites
        .iter()
        .enumerate()
        .all(|(i, s)| s.coord() == -1.0 + 2.0 * i as f64 / j as f64)
        .then_some(j)
}

/// Exact-in-law joint sample of the `n_modes`-truncated field at the
/// requested times and sites (replica 0 of `seed`).
pub fn sample_grid(
    times: &[f64],
    sites: &[TorusPoint],
    p: usize,
    n_modes: usize,
    seed: u64,
) -> Result<FieldSample> {
    sample_grid_replica(times, sites, p, n_modes, seed, 0)
}

/// As [`sample_grid`], for an arbitrary replica index.
pub fn sample_grid_replica(
    times: &[f64],
    sites: &[TorusPoint],
    p: usize,
    n_modes: usize,
    seed: u64,
    replica: u64,
) -> Result<FieldSample> {
    if times.windows(2).any(|w| w[1] < w[0]) {
        return Err(FieldError::Invalid("times must be sorted".into()));
    }
    if times.first().is_some_and(|&t| t < 0.0) {
        return Err(FieldError::Invalid("times must be nonnegative".into()));
    }
    let mut state = SpectralState::new(n_modes, p, seed, replica);
    let mut transform = uniform_grid_size(sites).map(GridTransform::new);
    let w = sites.len() * p;
    let mut values = vec![0.0; times.len() * w];
    for (ti, &t) in times.iter().enumerate() {
        if t > state.time() {
            state.evolve(t - state.time());
        }
        let frame = &mut values[ti * w..(ti + 1) * w];
        if state.time() == 0.0 {
            continue;
        }
        match transform.as_mut() {
            Some(tr) => state.render_grid(tr, frame),
            None => frame.copy_from_slice(&state.render(sites)),
        }
    }
    Ok(FieldSample {
        times: times.to_vec(),
        sites: sites.to_vec(),
        p,
        values,
        seed,
        replica,
        n_modes,
        tail_variance_bound: tail_variance_bound(n_modes),
    })
}

/// `H(t, 0)` at many times, tracking only the cosine modes (the sine modes
/// vanish at the origin). Pathwise identical to the full sampler at `x = 0`.
/// Returns `values[ti * p + c]`.
pub fn sample_time_series_at_origin(
    times: &[f64],
    p: usize,
    n_modes: usize,
    seed: u64,
    replica: u64,
) -> Result<Vec<f64>> {
    if times.windows(2).any(|w| w[1] < w[0]) || times.first().is_some_and(|&t| t < 0.0) {
        return Err(FieldError::Invalid("times must be sorted and nonnegative".into()));
    }
    let mut out = vec![0.0; times.len() * p];
    let sqrt_half = std::f64::consts::FRAC_1_SQRT_2;
    for c in 0..p {
        let mut streams: Vec<_> = (0..=n_modes)
            .map(|n| {
                rng::stream(
                    seed,
                    &[rng::tag::MODE_NOISE, replica, c as u64, spectral::cos_slot(n) as u64],
                )
            })
            .collect();
        let mut a = vec![0.0; n_modes + 1];
        let mut now = 0.0;
        let mut cache: Option<(f64, Vec<(f64, f64)>)> = None;
        for (ti, &t) in times.iter().enumerate() {
            if t > now {
                let dt = t - now;
                if !matches!(&cache, Some((d, _)) if *d == dt) {
                    let f = (0..=n_modes)
                        .map(|n| if n == 0 { (1.0, dt.sqrt()) } else { ou_factors(n, dt) })
                        .collect();
                    cache = Some((dt, f));
                }
                let f = &cache.as_ref().expect("filled above").1;
                for ((v, s), &(decay, sd)) in a.iter_mut().zip(streams.iter_mut()).zip(f) {
                    *v = decay * *v + sd * rng::normal(s);
                }
                now = t;
            }
            out[ti * p + c] = a[0] * sqrt_half + a[1..].iter().sum::<f64>();
        }
    }
    Ok(out)
}

/// Sample of the field at a single time `t` (one exact transition from 0),
/// rendered on the uniform grid of `j` sites. Returns site-major values.
/// Draws one normal per slot straight from its stream, so nothing but the
/// coefficients is held in memory.
pub fn sample_uniform_grid_at(
    t: f64,
    j: usize,
    p: usize,
    n_modes: usize,
    seed: u64,
    replica: u64,
) -> Vec<f64> {
    let mut transform = GridTransform::new(j);
    let slots = spectral::slots_for_modes(n_modes);
    let mut coeffs = vec![0.0; slots];
    let mut col = vec![0.0; j];
    let mut out = vec![0.0; j * p];
    for c in 0..p {
        for (k, a) in coeffs.iter_mut().enumerate() {
            let sd = mode_variance(spectral::slot_frequency(k), t).sqrt();
            *a = sd * rng::one_shot_mode_normal(seed, replica, c as u64, k as u64);
        }
        transform.synthesize(&coeffs, &mut col);
        for (i, v) in col.iter().enumerate() {
            out[i * p + c] = *v;
        }
    }
    out
}

/// Spectral coefficients of the field at time `t` (one exact transition),
/// coordinate-major: `out[c][slot]`. Pathwise equal to
/// [`sample_uniform_grid_at`] before rendering.
pub fn sample_coeffs_at(t: f64, p: usize, n_modes: usize, seed: u64, replica: u64) -> Vec<Vec<f64>> {
    let slots = spectral::slots_for_modes(n_modes);
    (0..p)
        .map(|c| {
            (0..slots)
                .map(|k| {
                    let sd = mode_variance(spectral::slot_frequency(k), t).sqrt();
                    sd * rng::one_shot_mode_normal(seed, replica, c as u64, k as u64)
                })
                .collect()
        })
        .collect()
}

/// Target value `H_1(target)` conditioned on `H_1` at the conditioners.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditioningProblem {
    pub target: SpaceTimePoint,
    pub conditioners: Vec<SpaceTimePoint>,
    /// Coordinate index; the coordinates are i.i.d., so this only labels.
    pub coordinate: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionalVariance {
    pub value: f64,
    /// Some Gram eigenvalues were clipped by the pseudo-inverse.
    pub degenerate: bool,
    pub clipped: usize,
}

fn canonical_cmp(a: &SpaceTimePoint, b: &SpaceTimePoint) -> std::cmp::Ordering {
    a.t.total_cmp(&b.t).then(a.x.coord().total_cmp(&b.x.coord()))
}

/// Covariance matrix of `H_1` at the given points.
pub fn gram_matrix(points: &[SpaceTimePoint], model: &CovarianceModel) -> Result<DMatrix<f64>> {
    let m = points.len();
    let mut g = DMatrix::zeros(m, m);
    for i in 0..m {
        for j in i..m {
            let c = model.covariance(points[i].t, points[i].x, points[j].t, points[j].x)?;
            g[(i, j)] = c;
            g[(j, i)] = c;
        }
    }
    Ok(g)
}

/// `Var(target) - cᵀ Σ⁺ c`, with `Σ⁺` the eigenvalue-clipped
/// pseudo-inverse of the conditioner Gram matrix (eigenvalues below
/// `1e-12 · trace` are dropped and the result is flagged).
pub fn conditional_variance(
    problem: &ConditioningProblem,
    model: &CovarianceModel,
) -> Result<ConditionalVariance> {
    let target = problem.target;
    if !(target.t > 0.0) {
        return Err(FieldError::Invalid("target time must be positive".into()));
    }
    let var = model.variance(target.t)?;
    let mut cond = problem.conditioners.clone();
    cond.sort_by(canonical_cmp);
    if cond.is_empty() {
        return Ok(ConditionalVariance {
            value: var,
            degenerate: false,
            clipped: 0,
        });
    }
    let gram = gram_matrix(&cond, model)?;
    let mut c = DVector::zeros(cond.len());
    for (i, s) in cond.iter().enumerate() {
        c[i] = model.covariance(target.t, target.x, s.t, s.x)?;
    }
    let trace = gram.trace();
    let eig = SymmetricEigen::new(gram);
    let cutoff = 1e-12 * trace;
    let mut explained = 0.0;
    let mut clipped = 0;
    for (k, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda <= cutoff {
            clipped += 1;
            continue;
        }
        let proj = eig.eigenvectors.column(k).dot(&c);
        explained += proj * proj / lambda;
    }
    Ok(ConditionalVariance {
        value: (var - explained).max(0.0),
        degenerate: clipped > 0,
        clipped,
    })
}

/// Denominator of the local nondeterminism ratio:
/// `min(√t, min_j (|t - t_j|^{1/2} + dist(x, x_j)))`.
pub fn slnd_scale(target: SpaceTimePoint, conditioners: &[SpaceTimePoint]) -> f64 {
    conditioners
        .iter()
        .map(|s| (target.t - s.t).abs().sqrt() + torus_dist(target.x, s.x))
        .fold(target.t.sqrt(), f64::min)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlndConfig {
    /// Times are drawn from `[t_max/10, t_max]`.
    pub t_max: f64,
    pub m_max: usize,
    pub n_configs: usize,
    pub seed: u64,
    /// Smallest local offset used when placing conditioners near the target,
    /// in units of `|Δt|^{1/2}` and `dist`.
    pub min_separation: f64,
}

impl Default for SlndConfig {
    fn default() -> Self {
        Self {
            t_max: 1.0,
            m_max: 8,
            n_configs: 200,
            seed: 0,
            min_separation: 1e-3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlndRow {
    pub m: usize,
    pub target: SpaceTimePoint,
    pub scale: f64,
    pub conditional_variance: f64,
    pub ratio: f64,
    pub degenerate: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlndReport {
    pub rows: Vec<SlndRow>,
    pub min_ratio: f64,
    pub max_ratio: f64,
    pub skipped: usize,
}

/// Random conditioning configurations: half of the conditioners are spread
/// uniformly, the rest sit at log-uniform parabolic offsets from the target
/// between `min_separation` and `0.3`, so both the local and the global
/// regime of the ratio are exercised.
pub fn slnd_configurations(cfg: &SlndConfig) -> Vec<ConditioningProblem> {
    use rand::Rng;
    let mut rng = rng::stream(cfg.seed, &[rng::tag::CONFIGURATION, 0x736c6e64]);
    let lo = cfg.t_max / 10.0;
    let log_min = cfg.min_separation.ln();
    let log_max = 0.3f64.ln();
    (0..cfg.n_configs)
        .map(|_| {
            let t = rng.gen_range(lo..=cfg.t_max);
            let x = rng.gen_range(-1.0..1.0);
            let m = rng.gen_range(0..=cfg.m_max);
            let target = SpaceTimePoint::new(t, x);
            let conditioners = (0..m)
                .map(|_| {
                    if rng.gen_bool(0.5) {
                        SpaceTimePoint::new(rng.gen_range(lo..=cfg.t_max), rng.gen_range(-1.0..1.0))
                    } else {
                        let sep = rng.gen_range(log_min..log_max).exp();
                        let share: f64 = rng.gen_range(0.0..1.0);
                        let dt = (sep * share).powi(2) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
                        let dx = sep * (1.0 - share) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
                        SpaceTimePoint::new((t + dt).clamp(lo, cfg.t_max), x + dx)
                    }
                })
                .collect();
            ConditioningProblem {
                target,
                conditioners,
                coordinate: 0,
            }
        })
        .collect()
}

/// Conditional variance over `min(√t, min_j(|t - t_j|^{1/2} + dist))` for
/// every configuration of [`slnd_configurations`].
pub fn slnd_ratio_scan(cfg: &SlndConfig, model: &CovarianceModel) -> Result<SlndReport> {
    let mut rows = Vec::with_capacity(cfg.n_configs);
    let mut skipped = 0;
    for problem in slnd_configurations(cfg) {
        let scale = slnd_scale(problem.target, &problem.conditioners);
        if scale == 0.0 {
            skipped += 1;
            continue;
        }
        let cv = conditional_variance(&problem, model)?;
        rows.push(SlndRow {
            m: problem.conditioners.len(),
            target: problem.target,
            scale,
            conditional_variance: cv.value,
            ratio: cv.value / scale,
            degenerate: cv.degenerate,
        });
    }
    let min_ratio = rows.iter().map(|r| r.ratio).fold(f64::INFINITY, f64::min);
    let max_ratio = rows.iter().map(|r| r.ratio).fold(f64::NEG_INFINITY, f64::max);
    Ok(SlndReport {
        rows,
        min_ratio,
        max_ratio,
        skipped,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmallBallReport {
    pub n_points: usize,
    pub eps: f64,
    pub mc_probability: f64,
    pub mc_std_error: f64,
    /// `Π_i 2ε / √(2π · condvar_i)` with `condvar_i` the variance of the
    /// `i`-th point given all earlier ones.
    pub bound: f64,
    pub conditional_variances: Vec<f64>,
    pub holds: bool,
}

/// Monte Carlo estimate of `P{max_i |H_1(s_i)| <= ε}` against the product
/// of conditional density bounds. Points must already be greedy-ordered.
pub fn small_ball_product_check(
    points: &[SpaceTimePoint],
    eps: f64,
    n_mc: usize,
    seed: u64,
) -> Result<SmallBallReport> {
    if !(eps > 0.0) {
        return Err(FieldError::Invalid("eps must be positive".into()));
    }
    if points.iter().any(|s| !(s.t > 0.0)) {
        return Err(FieldError::Invalid("all times must be positive".into()));
    }
    let order: Vec<usize> = (0..points.len()).collect();
    if !satisfies_greedy_order(points, &order) {
        return Err(FieldError::NotGreedyOrdered);
    }
    let model = CovarianceModel::default();
    let mut cond_vars = Vec::with_capacity(points.len());
    let mut bound = 1.0;
    for i in 0..points.len() {
        let cv = conditional_variance(
            &ConditioningProblem {
                target: points[i],
                conditioners: points[..i].to_vec(),
                coordinate: 0,
            },
            &model,
        )?;
        bound *= 2.0 * eps / (2.0 * PI * cv.value).sqrt();
        cond_vars.push(cv.value);
    }
    let gram = gram_matrix(points, &model)?;
    let n = points.len();
    let chol = nalgebra::Cholesky::new(gram.clone())
        .or_else(|| nalgebra::Cholesky::new(gram + DMatrix::identity(n, n) * 1e-14))
        .ok_or_else(|| FieldError::Invalid("covariance is not positive definite".into()))?;
    let l = chol.l();
    let mut rng = rng::stream(seed, &[rng::tag::MONTE_CARLO, n as u64]);
    let mut z = DVector::zeros(n);
    let mut hits = 0usize;
    for _ in 0..n_mc {
        for v in z.iter_mut() {
            *v = rng::normal(&mut rng);
        }
        let h = &l * &z;
        if h.iter().all(|v| v.abs() <= eps) {
            hits += 1;
        }
    }
    let prob = hits as f64 / n_mc as f64;
    let se = (prob * (1.0 - prob) / n_mc as f64).sqrt();
    Ok(SmallBallReport {
        n_points: n,
        eps,
        mc_probability: prob,
        mc_std_error: se,
        bound,
        conditional_variances: cond_vars,
        holds: prob <= bound + 3.0 * se,
    })
}

/// Largest ratio `Cov / (max(√t, t) e^{-dist²/8t})` over a grid; a finite
/// value confirms the Gaussian decay of the spatial covariance.
pub fn covariance_decay_constant(t_grid: &[f64], dist_grid: &[f64]) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for &t in t_grid {
        for &d in dist_grid {
            let r = heat_kernel::covariance_decay_ratio(t, TorusPoint::new(0.0), TorusPoint::new(d))?;
            worst = worst.max(r);
        }
    }
    Ok(worst)
}

/// Parabolic distances between consecutive points of an ordering; small
/// helper for reporting greedy configurations.
pub fn consecutive_parabolic_gaps(points: &[SpaceTimePoint]) -> Vec<f64> {
    points.windows(2).map(|w| parabolic_dist(w[1], w[0])).collect()
}
