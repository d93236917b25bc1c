//! Heat kernel of `∂_t - ∂_x²` on the torus and the closed-form second
//! moments of the additive-noise solution `H`.
//!
//! Every quantity has two independent representations:
//! the image sum of planar Gaussians
//! `G_r(a, b) = (4πr)^{-1/2} Σ_n exp(-(a - b + 2n)² / 4r)`
//! and the Fourier series `G_r(a, b) = 1/2 + Σ_{n≥1} cos(πn(a-b)) e^{-π²n²r}`.
//! The image sum converges fast for small `r`, the Fourier series for large
//! `r`; [`kernel`] switches at `r = 1/π²`.
//!
//! The moments of `H` all reduce to the helper
//! `S(a, δ) = Σ_{n≥1} cos(πnδ) e^{-π²n²a} / (2π²n²)`, which is summed in
//! Fourier space for large `a` and through its time-integrated image form
//! for small `a`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::quadrature::{self, QuadOptions, QuadratureError};
use crate::torus::{torus_dist, TorusPoint};

const PI2: f64 = PI * PI;

/// Above this time the Fourier series is cheaper than the image sum.
pub const REPRESENTATION_SWITCH: f64 = 1.0 / PI2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HeatKernelError {
    #[error("series did not reach tolerance: {terms_used} terms, tail bound {tail_bound:e}")]
    TruncationFailure { terms_used: usize, tail_bound: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
    #[error("sup bound violated at t = {t}: sup = {sup}, allowed [{lower}, {upper}]")]
    BoundViolation {
        t: f64,
        sup: f64,
        lower: f64,
        upper: f64,
    },
}

pub type Result<T> = std::result::Result<T, HeatKernelError>;

/// Stopping rule for a series evaluation. `terms_used` and `tail_bound` are
/// filled in on the copy returned with each value.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeriesTruncation {
    pub abs_tol: f64,
    pub max_terms: usize,
    #[serde(default)]
    pub terms_used: usize,
    #[serde(default)]
    pub tail_bound: f64,
}

impl Default for SeriesTruncation {
    fn default() -> Self {
        Self {
            abs_tol: 1e-13,
            max_terms: 100_000,
            terms_used: 0,
            tail_bound: 0.0,
        }
    }
}

impl SeriesTruncation {
    pub fn with_tol(abs_tol: f64) -> Self {
        Self {
            abs_tol,
            ..Self::default()
        }
    }
}

/// A series value together with the truncation that produced it.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SeriesValue {
    pub value: f64,
    pub trunc: SeriesTruncation,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Representation {
    ImageSum,
    Fourier,
}

impl Representation {
    pub fn preferred(r: f64) -> Self {
        if r < REPRESENTATION_SWITCH {
            Representation::ImageSum
        } else {
            Representation::Fourier
        }
    }
}

/// Planar Gaussian kernel `φ_r(x) = (4πr)^{-1/2} e^{-x²/4r}`.
#[inline]
pub fn phi(r: f64, x: f64) -> f64 {
    (-x * x / (4.0 * r)).exp() / (4.0 * PI * r).sqrt()
}

fn check_time(r: f64) -> Result<()> {
    if r > 0.0 && r.is_finite() {
        Ok(())
    } else {
        Err(HeatKernelError::InvalidArgument(format!(
            "time must be positive and finite, got {r}"
        )))
    }
}

/// Sums `terms(1), terms(2), ...` until `tail(n)` (a bound on everything
/// after term `n`) drops below the tolerance.
fn sum_series(
    trunc: SeriesTruncation,
    mut term: impl FnMut(usize) -> f64,
    mut tail: impl FnMut(usize) -> f64,
) -> Result<(f64, SeriesTruncation)> {
    let mut acc = 0.0;
    let mut n = 0usize;
    loop {
        let bound = tail(n);
        if bound <= trunc.abs_tol {
            return Ok((
                acc,
                SeriesTruncation {
                    terms_used: n,
                    tail_bound: bound,
                    ..trunc
                },
            ));
        }
        if n >= trunc.max_terms {
            return Err(HeatKernelError::TruncationFailure {
                terms_used: n,
                tail_bound: bound,
            });
        }
        n += 1;
        acc += term(n);
    }
}

/// Bound on `Σ_{n>N} e^{-π²n²r}`.
fn fourier_tail(r: f64, n: usize) -> f64 {
    let m = (n + 1) as f64;
    (-PI2 * m * m * r).exp() / (1.0 - (-PI2 * r * (2.0 * m + 1.0)).exp())
}

/// Image-sum representation of `G_r(a, b)`.
pub fn kernel_image_sum(
    r: f64,
    a: TorusPoint,
    b: TorusPoint,
    trunc: SeriesTruncation,
) -> Result<SeriesValue> {
    check_time(r)?;
    let d = torus_dist(a, b);
    image_sum_at(r, d, trunc)
}

fn image_sum_at(r: f64, d: f64, trunc: SeriesTruncation) -> Result<SeriesValue> {
    // Images d + 2n with |n| > N lie at distance >= 2N + 1 from the origin;
    // successive squared gaps grow, so a geometric majorant bounds the tail.
    let (rest, t) = sum_series(
        trunc,
        |n| {
            let s = 2.0 * n as f64;
            phi(r, d + s) + phi(r, d - s)
        },
        |n| {
            let m = 2.0 * n as f64 + 1.0;
            2.0 * phi(r, m) / (1.0 - (-(m + 1.0) / r).exp())
        },
    )?;
    Ok(SeriesValue {
        value: phi(r, d) + rest,
        trunc: t,
    })
}

/// Fourier representation of `G_r(a, b)`.
pub fn kernel_fourier(
    r: f64,
    a: TorusPoint,
    b: TorusPoint,
    trunc: SeriesTruncation,
) -> Result<SeriesValue> {
    check_time(r)?;
    let d = torus_dist(a, b);
    fourier_at(r, d, trunc)
}

fn fourier_at(r: f64, d: f64, trunc: SeriesTruncation) -> Result<SeriesValue> {
    let (rest, t) = sum_series(
        trunc,
        |n| {
            let n = n as f64;
            (PI * n * d).cos() * (-PI2 * n * n * r).exp()
        },
        |n| fourier_tail(r, n),
    )?;
    Ok(SeriesValue {
        value: 0.5 + rest,
        trunc: t,
    })
}

/// `G_r(a, b)` through the faster representation for this `r`.
pub fn kernel_with(r: f64, a: TorusPoint, b: TorusPoint, trunc: SeriesTruncation) -> Result<SeriesValue> {
    match Representation::preferred(r) {
        Representation::ImageSum => kernel_image_sum(r, a, b, trunc),
        Representation::Fourier => kernel_fourier(r, a, b, trunc),
    }
}

/// `G_r(a, b)` with the default truncation.
///
/// # Panics
/// If `r` is not positive and finite.
pub fn kernel(r: f64, a: TorusPoint, b: TorusPoint) -> f64 {
    kernel_with(r, a, b, SeriesTruncation::default())
        .expect("kernel: invalid time")
        .value
}

/// `G_r` as a function of the separation `d = dist(a, b)` only.
pub fn kernel_at_dist(r: f64, d: f64) -> f64 {
    kernel(r, TorusPoint::new(0.0), TorusPoint::new(d))
}

/// `∫_0^a φ_s(v) ds`.
fn phi_time_integral(a: f64, v: f64) -> f64 {
    let v = v.abs();
    (a / PI).sqrt() * (-v * v / (4.0 * a)).exp() - 0.5 * v * libm::erfc(v / (2.0 * a.sqrt()))
}

/// `S(a, δ) = Σ_{n≥1} cos(πnδ) e^{-π²n²a} / (2π²n²)` for `a >= 0`.
pub fn s_helper(a: f64, delta: f64, trunc: SeriesTruncation) -> Result<SeriesValue> {
    if !(a >= 0.0 && a.is_finite()) {
        return Err(HeatKernelError::InvalidArgument(format!(
            "S helper needs a >= 0, got {a}"
        )));
    }
    let delta = torus_dist(TorusPoint::new(0.0), TorusPoint::new(delta));
    let b0 = 1.0 / 12.0 - delta / 4.0 + delta * delta / 8.0;
    if a == 0.0 {
        return Ok(SeriesValue {
            value: b0,
            trunc: SeriesTruncation {
                terms_used: 0,
                tail_bound: 0.0,
                ..trunc
            },
        });
    }
    if a < REPRESENTATION_SWITCH {
        // S(a) = S(0) + a/4 - (1/2) ∫_0^a G_s(0, δ) ds, with the kernel
        // integrated image by image.
        let (rest, t) = sum_series(
            trunc,
            |n| {
                let s = 2.0 * n as f64;
                phi_time_integral(a, delta + s) + phi_time_integral(a, delta - s)
            },
            |n| {
                let m = 2.0 * n as f64 + 1.0;
                (a / PI).sqrt() * (-m * m / (4.0 * a)).exp()
                    / (1.0 - (-(m + 1.0) / a).exp())
            },
        )?;
        let integral = phi_time_integral(a, delta) + rest;
        Ok(SeriesValue {
            value: b0 + a / 4.0 - 0.5 * integral,
            trunc: t,
        })
    } else {
        let (value, t) = sum_series(
            trunc,
            |n| {
                let n = n as f64;
                (PI * n * delta).cos() * (-PI2 * n * n * a).exp() / (2.0 * PI2 * n * n)
            },
            |n| {
                let m = (n + 1) as f64;
                fourier_tail(a, n) / (2.0 * PI2 * m * m)
            },
        )?;
        Ok(SeriesValue { value, trunc: t })
    }
}

fn s_val(a: f64, delta: f64, trunc: SeriesTruncation) -> Result<f64> {
    Ok(s_helper(a, delta, trunc)?.value)
}

/// Finite-mode version of [`s_helper`]: the sum stops at `n = n_modes`.
pub fn s_helper_modes(a: f64, delta: f64, n_modes: usize) -> f64 {
    (1..=n_modes)
        .map(|n| {
            let n = n as f64;
            (PI * n * delta).cos() * (-PI2 * n * n * a).exp() / (2.0 * PI2 * n * n)
        })
        .sum()
}

/// `Var H_1(t, x) = t/2 + Σ_{n≥1} (1 - e^{-2π²n²t}) / (2π²n²)`.
pub fn variance_of_h(t: f64, trunc: SeriesTruncation) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(HeatKernelError::InvalidArgument(format!("negative time {t}")));
    }
    if t == 0.0 {
        return Ok(0.0);
    }
    Ok(t / 2.0 + 1.0 / 12.0 - s_val(2.0 * t, 0.0, trunc)?)
}

/// Variance of `H_1` restricted to the modes `n <= n_modes`.
pub fn variance_of_h_modes(t: f64, n_modes: usize) -> f64 {
    t / 2.0
        + (1..=n_modes)
            .map(|n| {
                let l = PI2 * (n * n) as f64;
                -(-2.0 * l * t).exp_m1() / (2.0 * l)
            })
            .sum::<f64>()
}

/// `Cov[H_1(t, x), H_1(s, y)]`.
pub fn covariance_of_h(
    t: f64,
    x: TorusPoint,
    s: f64,
    y: TorusPoint,
    trunc: SeriesTruncation,
) -> Result<f64> {
    if !(t >= 0.0 && s >= 0.0) {
        return Err(HeatKernelError::InvalidArgument(format!(
            "negative time in ({t}, {s})"
        )));
    }
    let (lo, hi) = if s <= t { (s, t) } else { (t, s) };
    if lo == 0.0 {
        return Ok(0.0);
    }
    let d = torus_dist(x, y);
    Ok(lo / 2.0 + s_val(hi - lo, d, trunc)? - s_val(hi + lo, d, trunc)?)
}

/// Covariance of `H_1` restricted to the modes `n <= n_modes`.
pub fn covariance_of_h_modes(t: f64, x: TorusPoint, s: f64, y: TorusPoint, n_modes: usize) -> f64 {
    let (lo, hi) = if s <= t { (s, t) } else { (t, s) };
    if lo <= 0.0 {
        return 0.0;
    }
    let d = torus_dist(x, y);
    lo / 2.0 + s_helper_modes(hi - lo, d, n_modes) - s_helper_modes(hi + lo, d, n_modes)
}

/// Which covariance to use for `H`: the full series, or the law of a
/// sampler keeping only frequencies `n <= N`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum CovarianceModel {
    Exact(SeriesTruncation),
    Modes(usize),
}

impl Default for CovarianceModel {
    fn default() -> Self {
        CovarianceModel::Exact(SeriesTruncation::default())
    }
}

impl CovarianceModel {
    pub fn covariance(&self, t: f64, x: TorusPoint, s: f64, y: TorusPoint) -> Result<f64> {
        match *self {
            CovarianceModel::Exact(tr) => covariance_of_h(t, x, s, y, tr),
            CovarianceModel::Modes(n) => Ok(covariance_of_h_modes(t, x, s, y, n)),
        }
    }

    pub fn variance(&self, t: f64) -> Result<f64> {
        match *self {
            CovarianceModel::Exact(tr) => variance_of_h(t, tr),
            CovarianceModel::Modes(n) => Ok(variance_of_h_modes(t, n)),
        }
    }
}

/// `∫_0^t ∫_T [G_s(x, y) - G_s(z, y)]² dy ds`, which equals
/// `E[(H_1(t, x) - H_1(t, z))²]`.
pub fn spatial_increment_energy(
    t: f64,
    x: TorusPoint,
    z: TorusPoint,
    trunc: SeriesTruncation,
) -> Result<f64> {
    check_time(t)?;
    let d = torus_dist(x, z);
    if d == 0.0 {
        return Ok(0.0);
    }
    Ok(d / 2.0 - d * d / 4.0 - 2.0 * s_val(2.0 * t, 0.0, trunc)? + 2.0 * s_val(2.0 * t, d, trunc)?)
}

/// Finite-mode version of [`spatial_increment_energy`].
pub fn spatial_increment_energy_modes(t: f64, d: f64, n_modes: usize) -> f64 {
    (1..=n_modes)
        .map(|n| {
            let nf = n as f64;
            let l = PI2 * nf * nf;
            -(-2.0 * l * t).exp_m1() / l * (1.0 - (PI * nf * d).cos())
        })
        .sum()
}

/// `∫_0^r ∫_T [G_{t-s}(x, y) - G_{r-s}(x, y)]² dy ds` for `0 < r < t`.
pub fn temporal_increment_energy(r: f64, t: f64, trunc: SeriesTruncation) -> Result<f64> {
    if !(r > 0.0 && t >= r) {
        return Err(HeatKernelError::InvalidArgument(format!(
            "temporal increment needs 0 < r <= t, got r = {r}, t = {t}"
        )));
    }
    let tau = t - r;
    if tau == 0.0 {
        return Ok(0.0);
    }
    let s0 = |a: f64| s_val(a, 0.0, trunc);
    // Expansion of (1 - e^{-2λr})(1 - e^{-λτ})² / (2λ) into pure exponentials.
    Ok(s0(0.0)? - 2.0 * s0(tau)? + s0(2.0 * tau)? - s0(2.0 * r)? + 2.0 * s0(2.0 * r + tau)?
        - s0(2.0 * r + 2.0 * tau)?)
}

/// Finite-mode version of [`temporal_increment_energy`].
pub fn temporal_increment_energy_modes(r: f64, t: f64, n_modes: usize) -> f64 {
    (1..=n_modes)
        .map(|n| {
            let l = PI2 * (n * n) as f64;
            let a = -(-l * (t - r)).exp_m1();
            -(-2.0 * l * r).exp_m1() / (2.0 * l) * a * a
        })
        .sum()
}

/// Second moment of the temporal increment `H_1(t, x) - H_1(r, x)`; adds the
/// fresh noise over `(r, t]` to [`temporal_increment_energy`].
pub fn temporal_increment_variance(r: f64, t: f64, trunc: SeriesTruncation) -> Result<f64> {
    Ok(temporal_increment_energy(r, t, trunc)? + variance_of_h(t - r, trunc)?)
}

/// Result of checking `(1/4) max(t^{-1/2}, 1) <= sup G_t <= 2 max(t^{-1/2}, 1)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SupBoundRow {
    pub t: f64,
    pub sup: f64,
    pub lower: f64,
    pub upper: f64,
    /// The kernel decreased monotonically in the separation on a probe grid.
    pub monotone: bool,
}

/// Checks the two-sided sup bound for each time; the sup is attained on the
/// diagonal, which is confirmed by probing the decay in the separation.
pub fn kernel_sup_bounds_check(t_grid: &[f64]) -> Result<Vec<SupBoundRow>> {
    let mut rows = Vec::with_capacity(t_grid.len());
    for &t in t_grid {
        check_time(t)?;
        let sup = kernel_at_dist(t, 0.0);
        let m = t.powf(-0.5).max(1.0);
        let mut prev = sup;
        let mut monotone = true;
        for k in 1..=64 {
            let g = kernel_at_dist(t, k as f64 / 64.0);
            if g > prev * (1.0 + 1e-12) {
                monotone = false;
            }
            prev = g;
        }
        let row = SupBoundRow {
            t,
            sup,
            lower: 0.25 * m,
            upper: 2.0 * m,
            monotone,
        };
        if !(row.lower <= sup && sup <= row.upper) || !monotone {
            return Err(HeatKernelError::BoundViolation {
                t,
                sup,
                lower: row.lower,
                upper: row.upper,
            });
        }
        rows.push(row);
    }
    Ok(rows)
}

/// `∫_0^t ds ∫_T dy G_s(0, y)² ((t - s)^{q/2} + dist(y, 0)^q)` by nested
/// adaptive quadrature. Returns the integral and its ratio to `t^{(1+q)/2}`.
pub fn parabolic_weight_integral(t: f64, q: f64, abs_tol: f64) -> Result<(f64, f64)> {
    check_time(t)?;
    if !(q > 0.0 && q <= 1.0) {
        return Err(HeatKernelError::InvalidArgument(format!(
            "q must lie in (0, 1], got {q}"
        )));
    }
    let outer = QuadOptions::abs(abs_tol);
    // Time weight: ∫_T G_s(0, y)² dy = G_{2s}(0, 0).
    let time_part = quadrature::integrate_sqrt_singular(
        |s| kernel_at_dist(2.0 * s, 0.0) * (t - s).max(0.0).powf(q / 2.0),
        t,
        outer,
    )?
    .value;
    // Space weight, integrand symmetric in y.
    let mut inner_err: Option<QuadratureError> = None;
    let space_part = quadrature::integrate_sqrt_singular(
        |s| {
            let width = (s.sqrt() * 8.0).min(1.0);
            let inner = quadrature::integrate_piecewise(
                |y| {
                    let g = kernel_at_dist(s, y);
                    g * g * y.powf(q)
                },
                &[0.0, width, 1.0],
                QuadOptions {
                    abs_tol: abs_tol * 0.1,
                    rel_tol: 1e-12,
                    max_intervals: 2000,
                },
            );
            match inner {
                Ok(r) => 2.0 * r.value,
                Err(e) => {
                    inner_err.get_or_insert(e);
                    0.0
                }
            }
        },
        t,
        outer,
    )?
    .value;
    if let Some(e) = inner_err {
        return Err(e.into());
    }
    let value = time_part + space_part;
    Ok((value, value / t.powf((1.0 + q) / 2.0)))
}

/// `Var H_1(t)` as `∫_0^t G_{2s}(0, 0) ds`, with the kernel evaluated by its
/// image sum. Independent of the Fourier closed form in [`variance_of_h`].
pub fn variance_of_h_by_quadrature(t: f64, abs_tol: f64) -> Result<f64> {
    if t == 0.0 {
        return Ok(0.0);
    }
    check_time(t)?;
    let trunc = SeriesTruncation::with_tol(1e-15);
    let mut err = None;
    let r = quadrature::integrate_sqrt_singular(
        |s| match image_sum_at(2.0 * s, 0.0, trunc) {
            Ok(v) => v.value,
            Err(e) => {
                err.get_or_insert(e);
                0.0
            }
        },
        t,
        QuadOptions {
            abs_tol,
            rel_tol: 0.0,
            max_intervals: 4000,
        },
    )?;
    if let Some(e) = err {
        return Err(e);
    }
    Ok(r.value)
}

/// `Cov[H_1(t, x), H_1(t, z)] / (max(√t, t) e^{-dist²/8t})`.
pub fn covariance_decay_ratio(t: f64, x: TorusPoint, z: TorusPoint) -> Result<f64> {
    check_time(t)?;
    let d = torus_dist(x, z);
    let c = covariance_of_h(t, x, t, z, SeriesTruncation::default())?;
    Ok(c / (t.sqrt().max(t) * (-d * d / (8.0 * t)).exp()))
}

/// Breakpoints on `[c - 1, c + 1]` that bracket peaks of width `√r` at the
/// given centers (shifted into the window).
fn peak_breaks(c: f64, peaks: &[f64], r: f64) -> Vec<f64> {
    let (lo, hi) = (c - 1.0, c + 1.0);
    let w = r.sqrt();
    let mut b = vec![lo, hi];
    for &p in peaks {
        let p = lo + (p - lo).rem_euclid(2.0);
        for k in [-16.0, -4.0, -1.0, 0.0, 1.0, 4.0, 16.0] {
            for shift in [-2.0, 0.0, 2.0] {
                let x = p + shift + k * w;
                if x > lo && x < hi {
                    b.push(x);
                }
            }
        }
    }
    b.sort_by(f64::total_cmp);
    b.dedup();
    b
}

fn quad_opts(abs_tol: f64) -> QuadOptions {
    QuadOptions {
        abs_tol,
        rel_tol: 0.0,
        max_intervals: 4000,
    }
}

/// `∫_T G_r(x, y) dy - 1` by adaptive quadrature of the Fourier series.
pub fn conservation_error(r: f64, x: TorusPoint, abs_tol: f64) -> Result<f64> {
    check_time(r)?;
    let trunc = SeriesTruncation::with_tol(abs_tol * 1e-3);
    let c = x.coord();
    let mut err = None;
    let q = quadrature::integrate_piecewise(
        |y| match kernel_fourier(r, x, TorusPoint::new(y), trunc) {
            Ok(v) => v.value,
            Err(e) => {
                err.get_or_insert(e);
                0.0
            }
        },
        &peak_breaks(c, &[c], r),
        quad_opts(abs_tol),
    )?;
    if let Some(e) = err {
        return Err(e);
    }
    Ok(q.value - 1.0)
}

/// `∫_T G_s(x, y) G_t(y, z) dy - G_{s+t}(x, z)` by adaptive quadrature.
pub fn chapman_kolmogorov_error(s: f64, t: f64, x: TorusPoint, z: TorusPoint, abs_tol: f64) -> Result<f64> {
    check_time(s)?;
    check_time(t)?;
    let trunc = SeriesTruncation::with_tol(abs_tol * 1e-3);
    let c = x.coord();
    let mut err = None;
    let mut eval = |r: f64, a: f64, b: f64| match kernel_with(r, TorusPoint::new(a), TorusPoint::new(b), trunc) {
        Ok(v) => v.value,
        Err(e) => {
            err.get_or_insert(e);
            0.0
        }
    };
    let q = quadrature::integrate_piecewise(
        |y| eval(s, c, y) * eval(t, y, z.coord()),
        &peak_breaks(c, &[c, z.coord()], s.min(t)),
        quad_opts(abs_tol),
    )?;
    let target = eval(s + t, c, z.coord());
    if let Some(e) = err {
        return Err(e);
    }
    Ok(q.value - target)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tp(x: f64) -> TorusPoint {
        TorusPoint::new(x)
    }
    fn tr() -> SeriesTruncation {
        SeriesTruncation::default()
    }

    #[test]
    fn equilibrium_and_short_time() {
        let v = kernel_image_sum(50.0, tp(0.0), tp(0.3), tr()).unwrap().value;
        assert!((v - 0.5).abs() < 1e-12);
        let v = kernel_fourier(50.0, tp(0.0), tp(0.3), tr()).unwrap().value;
        assert!((v - 0.5).abs() < 1e-12);
        // Off-lattice images contribute about 2 e^{-1/(4r)} / sqrt(4πr) ~ 1e-10.
        let r = 0.01;
        let v = kernel_image_sum(r, tp(0.0), tp(0.0), tr()).unwrap().value;
        let leading = 1.0 / (0.04 * PI).sqrt();
        assert!((v - leading).abs() <= 2.1 * (-1.0 / (4.0 * r)).exp() * leading);
    }

    #[test]
    fn kernel_symmetric_exactly() {
        for &(a, b) in &[(0.1, -0.7), (0.95, -0.95), (0.0, 0.5)] {
            for r in [1e-3, 0.05, 2.0] {
                let ab = kernel_image_sum(r, tp(a), tp(b), tr()).unwrap().value;
                let ba = kernel_image_sum(r, tp(b), tp(a), tr()).unwrap().value;
                assert_eq!(ab, ba);
            }
        }
    }

    #[test]
    fn truncation_metadata() {
        let v = kernel_fourier(0.5, tp(0.0), tp(0.2), tr()).unwrap();
        assert!(v.trunc.tail_bound <= 1e-13);
        assert!(v.trunc.terms_used >= 1 && v.trunc.terms_used < 10);
        let tight = SeriesTruncation {
            abs_tol: 1e-13,
            max_terms: 2,
            ..tr()
        };
        assert!(matches!(
            kernel_fourier(1e-4, tp(0.0), tp(0.0), tight),
            Err(HeatKernelError::TruncationFailure { terms_used: 2, .. })
        ));
        assert!(kernel_image_sum(0.0, tp(0.0), tp(0.0), tr()).is_err());
    }

    #[test]
    fn duality_on_fixed_grid() {
        for r in [0.01, 0.1, 1.0, 2.0] {
            for k in 0..100 {
                let a = -1.0 + 0.02 * k as f64;
                let b = 0.37 * k as f64;
                let i = kernel_image_sum(r, tp(a), tp(b), tr()).unwrap().value;
                let f = kernel_fourier(r, tp(a), tp(b), tr()).unwrap().value;
                assert!((i - f).abs() < 1e-10, "r={r} a={a} b={b}");
            }
        }
    }

    #[test]
    fn kernel_laws_by_quadrature() {
        for r in [1e-4, 0.003, 0.2, 5.0] {
            assert!(conservation_error(r, tp(0.9), 1e-12).unwrap().abs() < 1e-10, "r={r}");
        }
        for (s, t, x, z) in [(1e-4, 2e-4, 0.95, -0.97), (0.01, 0.3, 0.1, 0.6), (2.0, 1e-3, -0.5, 0.5)] {
            let e = chapman_kolmogorov_error(s, t, tp(x), tp(z), 1e-11).unwrap();
            assert!(e.abs() < 1e-8, "s={s} t={t}: {e}");
        }
    }

    #[test]
    fn s_helper_branches_agree() {
        // Both branches evaluated on either side of the switch.
        for &a in &[0.05, 0.09, 0.2] {
            for &d in &[0.0, 0.3, 1.0] {
                let f = s_helper_modes(a, d, 400);
                let s = s_helper(a, d, tr()).unwrap().value;
                assert!((f - s).abs() < 1e-12, "a={a} d={d}: {f} vs {s}");
            }
        }
        assert!((s_helper(0.0, 0.0, tr()).unwrap().value - 1.0 / 12.0).abs() < 1e-16);
    }

    #[test]
    fn variance_examples() {
        assert_eq!(variance_of_h(0.0, tr()).unwrap(), 0.0);
        let v = variance_of_h(1.0, tr()).unwrap();
        // Truncated sums undershoot by at most 1/(2π²N).
        let series = variance_of_h_modes(1.0, 1000);
        assert!(v >= series && v - series <= 1.0 / (2.0 * PI2 * 1000.0));
        assert!((v - 0.58333).abs() < 1e-4);
        let q = variance_of_h_by_quadrature(1.0, 1e-11).unwrap();
        assert!((v - q).abs() < 1e-10);
        for t in [1e-4, 1e-5, 1e-6] {
            let ratio = variance_of_h(t, tr()).unwrap() / t.sqrt();
            assert!((ratio - 1.0 / (2.0 * PI).sqrt()).abs() < 0.004);
        }
    }

    #[test]
    fn covariance_examples() {
        for t in [0.01, 0.3, 2.0] {
            let c = covariance_of_h(t, tp(0.4), t, tp(0.4), tr()).unwrap();
            assert!((c - variance_of_h(t, tr()).unwrap()).abs() < 1e-12);
            assert_eq!(covariance_of_h(t, tp(0.4), 0.0, tp(-0.1), tr()).unwrap(), 0.0);
        }
        let c1 = covariance_of_h(0.3, tp(0.1), 0.7, tp(-0.6), tr()).unwrap();
        let c2 = covariance_of_h(0.7, tp(-0.6), 0.3, tp(0.1), tr()).unwrap();
        assert_eq!(c1, c2);
        let m = covariance_of_h_modes(0.3, tp(0.1), 0.7, tp(-0.6), 2000);
        assert!((c1 - m).abs() < 1e-8);
        let ratio = covariance_decay_ratio(0.01, tp(0.0), tp(0.5)).unwrap();
        assert!(ratio.is_finite() && ratio > 0.0 && ratio < 10.0);
    }

    #[test]
    fn increment_energies_match_series() {
        let e = spatial_increment_energy(0.1, tp(0.0), tp(0.25), tr()).unwrap();
        let m = spatial_increment_energy_modes(0.1, 0.25, 20_000);
        assert!((e - m).abs() < 1e-5);
        assert_eq!(spatial_increment_energy(0.1, tp(0.3), tp(0.3), tr()).unwrap(), 0.0);
        let e = temporal_increment_energy(0.2, 0.3, tr()).unwrap();
        let m = temporal_increment_energy_modes(0.2, 0.3, 2000);
        assert!(e >= m && e - m <= 1.0 / (2.0 * PI2 * 2000.0));
        assert_eq!(temporal_increment_energy(0.2, 0.2, tr()).unwrap(), 0.0);
    }

    #[test]
    fn sup_bounds_known_points() {
        let rows = kernel_sup_bounds_check(&[1e-4, 1.0, 100.0]).unwrap();
        assert!(rows[0].sup >= 25.0 && rows[0].sup <= 200.0);
        assert!(rows[1].sup >= 0.25 && rows[1].sup <= 2.0);
        assert!((rows[2].sup - 0.5).abs() < 1e-12);
    }

    #[test]
    fn parabolic_integral_is_positive_and_bounded() {
        for q in [0.25, 0.5, 1.0] {
            for t in [1e-3, 1e-2, 1.0] {
                let (v, ratio) = parabolic_weight_integral(t, q, 1e-10).unwrap();
                assert!(v > 0.0);
                assert!(ratio < 5.0, "t={t} q={q} ratio={ratio}");
            }
        }
    }

    proptest! {
        #[test]
        fn kernel_duality(r in 1e-3f64..10.0, a in -1.0f64..1.0, b in -1.0f64..1.0) {
            let i = kernel_image_sum(r, tp(a), tp(b), tr()).unwrap().value;
            let f = kernel_fourier(r, tp(a), tp(b), tr()).unwrap().value;
            prop_assert!((i - f).abs() < 1e-10);
            prop_assert!(i > 0.0);
        }

        #[test]
        fn increment_identity(t in 1e-3f64..3.0, x in -1.0f64..1.0, z in -1.0f64..1.0) {
            let e = spatial_increment_energy(t, tp(x), tp(z), tr()).unwrap();
            let v = variance_of_h(t, tr()).unwrap();
            let c = covariance_of_h(t, tp(x), t, tp(z), tr()).unwrap();
            prop_assert!((e - (2.0 * v - 2.0 * c)).abs() < 1e-10);
        }
    }
}
