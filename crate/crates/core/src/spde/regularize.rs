//! The non-degenerate modification `σ_{r,N}` of a diffusion coefficient.
//!
//! With `Λ(r) = {v : λ(v) <= r}` and `d_r(v)` the distance from `v ∈ Λ(r)` to
//! `∂Λ(r) = {λ = r}` (zero outside `Λ(r)`),
//!
//! ```text
//! σ_r(v)     = σ(v) + d_r(v) I   on Λ(r),   σ(v) elsewhere,
//! σ_{r,N}(v) = σ_r(v)            for ‖v‖ <= N,   σ_r(vN/‖v‖) otherwise,
//! λ(v; N, r) = λ(v) + d_r(v)²    on B(0, N) ∩ Λ(r).
//! ```
//!
//! `d_r` has no closed form in general. It is estimated by marching along a
//! fixed set of directions (the signed coordinate axes plus random unit
//! vectors) until `λ > r`, then bisecting. The minimum over directions is an
//! upper bound on the true distance; it is exact whenever the nearest
//! boundary point lies along a probed direction, as for diagonal `σ`.
//!
//! `λ(v; N, r)` is the displayed quantity above. It is not, in general, the
//! smallest eigenvalue of `σ_{r,N}(v)ᵀσ_{r,N}(v)`: for `σ = diag(v₁, 1)` and
//! `v₁ = -d_r(v)` the matrix `σ_r(v)` is singular. Both are reported.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::coefficients::{lambda_of_matrix, random_unit, retract, DiffusionFn, LipschitzReport};
use crate::rng;

#[derive(Debug, Error, PartialEq)]
pub enum RegularizeError {
    #[error("level set {{λ = r}} not found: Λ(r) is {0}")]
    EmptyBoundary(&'static str),
    #[error("invalid regularization parameter: {0}")]
    Invalid(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelSetProbe {
    /// Random directions in addition to the `2p` signed axes.
    pub n_directions: usize,
    /// Rays are followed up to this length.
    pub max_radius: f64,
    /// Bisection tolerance on the crossing distance.
    pub tol: f64,
    /// Points of `B(0, N)` used to detect an empty `Λ(r)` and to validate.
    pub n_validation: usize,
    pub seed: u64,
}

impl Default for LevelSetProbe {
    fn default() -> Self {
        Self {
            n_directions: 16,
            max_radius: 1e3,
            tol: 1e-6,
            n_validation: 2000,
            seed: 0,
        }
    }
}

/// `σ_{r,N}` together with the probe used for `d_r`.
#[derive(Clone)]
pub struct RegularizedSigma {
    sigma: DiffusionFn,
    p: usize,
    r: f64,
    n: f64,
    directions: Vec<Vec<f64>>,
    probe: LevelSetProbe,
    /// False for the fallback `σ_N` used when `∂Λ(r)` is empty.
    has_boundary: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegularizationReport {
    pub n_points: usize,
    /// Fraction of validation points of `B(0, N)` lying in `Λ(r)`.
    pub inside_fraction: f64,
    /// `inf λ(v; N, r)` over the validation points.
    pub min_lambda_nr: f64,
    /// `inf λ(σ_{r,N}(v))` over the validation points.
    pub min_matrix_lambda: f64,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn ball_points(p: usize, n: f64, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut g = rng::stream(seed, &[rng::tag::PROBE, 0x6261_6c6c]);
    let mut pts = vec![vec![0.0; p]];
    for _ in 1..count {
        let u = random_unit(&mut g, p);
        let rad = n * g.gen::<f64>().powf(1.0 / p as f64);
        pts.push(u.into_iter().map(|x| x * rad).collect());
    }
    pts
}

impl RegularizedSigma {
    fn build(sigma: &DiffusionFn, p: usize, r: f64, n: f64, probe: &LevelSetProbe, has_boundary: bool) -> Self {
        let mut directions = Vec::with_capacity(2 * p + probe.n_directions);
        for i in 0..p {
            for s in [1.0, -1.0] {
                let mut e = vec![0.0; p];
                e[i] = s;
                directions.push(e);
            }
        }
        let mut g = rng::stream(probe.seed, &[rng::tag::PROBE, 0x6469_72]);
        directions.extend((0..probe.n_directions).map(|_| random_unit(&mut g, p)));
        Self {
            sigma: sigma.clone(),
            p,
            r,
            n,
            directions,
            probe: probe.clone(),
            has_boundary,
        }
    }

    /// The fallback `σ_N` (no regularization, `d_r ≡ 0`).
    pub fn truncation_only(sigma: &DiffusionFn, p: usize, n: f64) -> Self {
        Self::build(sigma, p, 0.0, n, &LevelSetProbe::default(), false)
    }

    pub fn has_boundary(&self) -> bool {
        self.has_boundary
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn radius(&self) -> f64 {
        self.n
    }

    /// `λ(v)` of the unmodified `σ`.
    pub fn lambda(&self, v: &[f64]) -> f64 {
        let mut m = vec![0.0; self.p * self.p];
        (self.sigma)(v, &mut m);
        lambda_of_matrix(&m, self.p)
    }

    /// Distance along `dir` from `v` to the first point with `λ > r`.
    fn crossing(&self, v: &[f64], dir: &[f64], limit: f64) -> Option<f64> {
        let at = |s: f64| -> Vec<f64> { v.iter().zip(dir).map(|(a, d)| a + s * d).collect() };
        let mut lo = 0.0;
        let mut s = self.probe.tol.min(limit);
        loop {
            if self.lambda(&at(s)) > self.r {
                break;
            }
            if s >= limit {
                return None;
            }
            lo = s;
            s = (s * 1.25).min(limit);
        }
        let mut hi = s;
        while hi - lo > self.probe.tol {
            let mid = 0.5 * (lo + hi);
            if self.lambda(&at(mid)) > self.r {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Some(0.5 * (lo + hi))
    }

    /// `d_r(v)`: zero outside `Λ(r)`, otherwise the probed distance to
    /// `{λ = r}`; `None` when no probe ray leaves `Λ(r)`.
    pub fn try_d_r(&self, v: &[f64]) -> Option<f64> {
        if !self.has_boundary || self.lambda(v) > self.r {
            return Some(0.0);
        }
        let mut best: Option<f64> = None;
        for dir in &self.directions {
            let limit = best.unwrap_or(self.probe.max_radius);
            if let Some(s) = self.crossing(v, dir, limit) {
                best = Some(best.map_or(s, |b| b.min(s)));
            }
        }
        best
    }

    pub fn d_r(&self, v: &[f64]) -> f64 {
        self.try_d_r(v).unwrap_or(self.probe.max_radius)
    }

    /// `σ_r(v)` written into `out`.
    pub fn eval_sigma_r(&self, v: &[f64], out: &mut [f64]) {
        (self.sigma)(v, out);
        let d = self.d_r(v);
        if d > 0.0 {
            for i in 0..self.p {
                out[i * self.p + i] += d;
            }
        }
    }

    /// `σ_{r,N}(v)` written into `out`.
    pub fn eval(&self, v: &[f64], out: &mut [f64]) {
        match retract(v, self.n) {
            Some(w) => self.eval_sigma_r(&w, out),
            None => self.eval_sigma_r(v, out),
        }
    }

    /// `λ(v; N, r)` as displayed in the module docs.
    pub fn lambda_nr(&self, v: &[f64]) -> f64 {
        let w = retract(v, self.n).unwrap_or_else(|| v.to_vec());
        let d = self.d_r(&w);
        self.lambda(&w) + d * d
    }

    /// Smallest eigenvalue of `σ_{r,N}(v)ᵀσ_{r,N}(v)`.
    pub fn matrix_lambda(&self, v: &[f64]) -> f64 {
        let mut m = vec![0.0; self.p * self.p];
        self.eval(v, &mut m);
        lambda_of_matrix(&m, self.p)
    }

    pub fn into_diffusion(self) -> DiffusionFn {
        let me = Arc::new(self);
        Arc::new(move |v: &[f64], out: &mut [f64]| me.eval(v, out))
    }

    /// Probes `λ(·; N, r)` and `λ(σ_{r,N}(·))` on random points of `B(0, N)`.
    pub fn validate(&self, n_points: usize, seed: u64) -> RegularizationReport {
        let pts = ball_points(self.p, self.n, n_points.max(1), seed);
        let mut inside = 0usize;
        let (mut min_nr, mut min_m) = (f64::INFINITY, f64::INFINITY);
        for v in &pts {
            if self.lambda(v) <= self.r {
                inside += 1;
            }
            min_nr = min_nr.min(self.lambda_nr(v));
            min_m = min_m.min(self.matrix_lambda(v));
        }
        RegularizationReport {
            n_points: pts.len(),
            inside_fraction: inside as f64 / pts.len() as f64,
            min_lambda_nr: min_nr,
            min_matrix_lambda: min_m,
        }
    }
}

/// Builds `σ_{r,N}`. Fails with [`RegularizeError::EmptyBoundary`] when no
/// probe point of `B(0, N)` lies in `Λ(r)` (regularization unnecessary) or
/// when `Λ(r)` has no reachable boundary (e.g. `σ ≡ 0`).
pub fn regularize_sigma(
    sigma: &DiffusionFn,
    p: usize,
    r: f64,
    n: f64,
    probe: &LevelSetProbe,
) -> Result<RegularizedSigma, RegularizeError> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(RegularizeError::Invalid(format!("r must be positive, got {r}")));
    }
    if !(n > 0.0 && n.is_finite()) {
        return Err(RegularizeError::Invalid(format!("N must be positive, got {n}")));
    }
    let reg = RegularizedSigma::build(sigma, p, r, n, probe, true);
    let pts = ball_points(p, n, probe.n_validation.max(1), probe.seed);
    let inside: Vec<&Vec<f64>> = pts.iter().filter(|v| reg.lambda(v) <= r).collect();
    if inside.is_empty() {
        return Err(RegularizeError::EmptyBoundary("empty on B(0, N)"));
    }
    if inside.len() == pts.len() && reg.try_d_r(inside[0]).is_none() {
        return Err(RegularizeError::EmptyBoundary("everything"));
    }
    Ok(reg)
}

/// [`regularize_sigma`], falling back to the plain truncation `σ_N` when the
/// boundary is empty. The error, if any, is returned alongside.
pub fn regularize_sigma_or_truncate(
    sigma: &DiffusionFn,
    p: usize,
    r: f64,
    n: f64,
    probe: &LevelSetProbe,
) -> (RegularizedSigma, Option<RegularizeError>) {
    match regularize_sigma(sigma, p, r, n, probe) {
        Ok(reg) => (reg, None),
        Err(e @ RegularizeError::EmptyBoundary(_)) => (RegularizedSigma::truncation_only(sigma, p, n), Some(e)),
        Err(e) => (RegularizedSigma::truncation_only(sigma, p, n), Some(e)),
    }
}

/// Difference quotients `|d_r(v) - d_r(w)| / ‖v - w‖` on random pairs within
/// `scale` of the origin, separated by at least `1e-3`.
pub fn d_r_lipschitz_check(reg: &RegularizedSigma, n_pairs: usize, scale: f64, seed: u64) -> LipschitzReport {
    let mut g = rng::stream(seed, &[rng::tag::PROBE, 0x646c]);
    let p = reg.p;
    let mut max_q: f64 = 0.0;
    for _ in 0..n_pairs {
        let v: Vec<f64> = (0..p).map(|_| g.gen_range(-scale..scale)).collect();
        let dir = random_unit(&mut g, p);
        let len = g.gen_range((1e-3f64).ln()..scale.ln()).exp();
        let w: Vec<f64> = v.iter().zip(&dir).map(|(a, d)| a + len * d).collect();
        let q = (reg.d_r(&v) - reg.d_r(&w)).abs() / norm(&v.iter().zip(&w).map(|(a, b)| a - b).collect::<Vec<_>>());
        max_q = max_q.max(q);
    }
    LipschitzReport {
        n_pairs,
        max_ratio: max_q,
        max_quotient: max_q,
        declared: 1.0,
        passed: max_q <= 1.0 + 1e-6,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spde::coefficients::{Coefficients, DiffusionSpec, DriftSpec};

    fn diag_first() -> DiffusionFn {
        Coefficients::from_specs(2, &DriftSpec::Zero, &DiffusionSpec::DiagFirst).diffusion
    }

    fn fine_probe() -> LevelSetProbe {
        LevelSetProbe {
            tol: 1e-12,
            n_validation: 500,
            ..LevelSetProbe::default()
        }
    }

    #[test]
    fn elliptic_sigma_has_empty_boundary() {
        let id = Coefficients::additive(2).diffusion;
        let e = regularize_sigma(&id, 2, 0.4, 5.0, &LevelSetProbe::default()).err();
        assert_eq!(e, Some(RegularizeError::EmptyBoundary("empty on B(0, N)")));
        let (fallback, err) = regularize_sigma_or_truncate(&id, 2, 0.4, 5.0, &LevelSetProbe::default());
        assert!(err.is_some() && !fallback.has_boundary());
        let mut m = [0.0; 4];
        fallback.eval(&[10.0, 3.0], &mut m);
        assert_eq!(m, [1.0, 0.0, 0.0, 1.0]);
        let zero = Coefficients::from_specs(1, &DriftSpec::Zero, &DiffusionSpec::Zero).diffusion;
        let e = regularize_sigma(&zero, 1, 0.1, 1.0, &LevelSetProbe::default()).err();
        assert_eq!(e, Some(RegularizeError::EmptyBoundary("everything")));
    }

    #[test]
    fn diag_first_distance_is_brute_force_value() {
        let reg = regularize_sigma(&diag_first(), 2, 0.01, 2.0, &fine_probe()).unwrap();
        // Λ(0.01) = {|v₁| <= 0.1}; d_r = 0.1 - |v₁| there.
        for v1 in [-0.09, -0.03, 0.0, 0.02, 0.0999] {
            let d = reg.d_r(&[v1, 0.7]);
            assert!((d - (0.1 - f64::abs(v1))).abs() < 1e-10, "v1={v1}: {d}");
        }
        assert_eq!(reg.d_r(&[0.5, 0.0]), 0.0);
        let mut m = [0.0; 4];
        reg.eval(&[0.04, 0.3], &mut m);
        assert!((m[0] - 0.1).abs() < 1e-10 && (m[3] - 1.06).abs() < 1e-10);
        let report = reg.validate(500, 1);
        assert!(report.inside_fraction > 0.0);
        assert!(report.min_lambda_nr > 0.0, "{report:?}");
        // inf over |v₁| <= 0.1 of v₁² + (0.1 - |v₁|)² is 0.005, at |v₁| = 0.05.
        assert!(report.min_lambda_nr >= 0.005 - 1e-9);
    }

    #[test]
    fn agrees_with_sigma_outside_level_set_and_inside_ball() {
        let s = diag_first();
        let reg = regularize_sigma(&s, 2, 0.01, 2.0, &LevelSetProbe::default()).unwrap();
        let (mut a, mut b) = ([0.0; 4], [0.0; 4]);
        for v in [[0.5, 1.0], [-1.2, 0.3], [0.11, -1.5]] {
            reg.eval(&v, &mut a);
            s(&v, &mut b);
            assert_eq!(a, b);
        }
        // Outside the ball the retracted point is used.
        reg.eval(&[3.0, 4.0], &mut a);
        s(&[1.2, 1.6], &mut b);
        assert_eq!(a, b);
    }

    #[test]
    fn d_r_is_one_lipschitz() {
        let reg = regularize_sigma(&diag_first(), 2, 0.01, 2.0, &fine_probe()).unwrap();
        let rep = d_r_lipschitz_check(&reg, 400, 0.2, 3);
        assert!(rep.passed, "{rep:?}");
        assert!(rep.max_quotient > 0.5);
    }

    #[test]
    fn displayed_lambda_differs_from_matrix_lambda() {
        let reg = regularize_sigma(&diag_first(), 2, 0.01, 2.0, &fine_probe()).unwrap();
        let v = [-0.05, 0.0];
        assert!((reg.lambda_nr(&v) - (0.0025 + 0.0025)).abs() < 1e-10);
        assert!(reg.matrix_lambda(&v) < 1e-18);
    }
}
