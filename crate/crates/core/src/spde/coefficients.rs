//! Drift and diffusion coefficients, their truncations and the smallest
//! singular value function `λ`.
//!
//! Matrix norms are Hilbert–Schmidt (Frobenius) throughout, so for instance
//! `ℳ(I) = √p` and `lip((1 + a sin v₁) I) = |a| √p`.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::rng;

/// `b: ℝ^p → ℝ^p`, writing into the output slice.
pub type DriftFn = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;
/// `σ: ℝ^p → ℝ^{p×p}`, writing a row-major matrix into the output slice.
pub type DiffusionFn = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;

/// Drift and diffusion with their declared regularity constants.
///
/// Evaluators must be reentrant: ensembles call them from several threads.
#[derive(Clone)]
pub struct Coefficients {
    pub p: usize,
    pub drift: DriftFn,
    pub diffusion: DiffusionFn,
    pub lip_drift: f64,
    pub lip_diffusion: f64,
    /// `ℳ(b)` when finite.
    pub sup_drift: Option<f64>,
    /// `ℳ(σ)` when finite.
    pub sup_diffusion: Option<f64>,
    /// Set when `b ≡ 0`; lets the solver skip the drift transform.
    pub zero_drift: bool,
    /// Set when `σ` does not depend on the state (row-major matrix).
    pub constant_diffusion: Option<Vec<f64>>,
    pub name: String,
}

impl fmt::Debug for Coefficients {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Coefficients")
            .field("name", &self.name)
            .field("p", &self.p)
            .field("lip_drift", &self.lip_drift)
            .field("lip_diffusion", &self.lip_diffusion)
            .field("sup_drift", &self.sup_drift)
            .field("sup_diffusion", &self.sup_diffusion)
            .finish()
    }
}

/// Named drift fixtures.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DriftSpec {
    Zero,
    /// `b(v) = rate · v`.
    Linear { rate: f64 },
    /// `b(v) = -v / (1 + ‖v‖)`.
    Saturating,
    /// `b(v) = v`.
    Identity,
}

/// Named diffusion fixtures.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DiffusionSpec {
    Zero,
    Identity,
    /// `σ(v) = scale · I`.
    Constant { scale: f64 },
    /// `σ(v) = (1 + amp · sin v₁) I`.
    SinScaled { amp: f64 },
    /// `σ(v) = diag(v₁, 1, ..., 1)`; degenerate on `{v₁ = 0}`.
    DiagFirst,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn identity(p: usize, scale: f64) -> Vec<f64> {
    let mut m = vec![0.0; p * p];
    for i in 0..p {
        m[i * p + i] = scale;
    }
    m
}

impl Coefficients {
    pub fn from_specs(p: usize, drift: &DriftSpec, diffusion: &DiffusionSpec) -> Self {
        let sp = (p as f64).sqrt();
        let (drift_fn, lip_drift, sup_drift, zero_drift): (DriftFn, f64, Option<f64>, bool) = match *drift {
            DriftSpec::Zero => (Arc::new(|_: &[f64], out: &mut [f64]| out.fill(0.0)), 0.0, Some(0.0), true),
            DriftSpec::Linear { rate } => (
                Arc::new(move |v: &[f64], out: &mut [f64]| {
                    for (o, x) in out.iter_mut().zip(v) {
                        *o = rate * x;
                    }
                }),
                rate.abs(),
                (rate == 0.0).then_some(0.0),
                rate == 0.0,
            ),
            DriftSpec::Saturating => (
                Arc::new(|v: &[f64], out: &mut [f64]| {
                    let s = 1.0 / (1.0 + norm(v));
                    for (o, x) in out.iter_mut().zip(v) {
                        *o = -x * s;
                    }
                }),
                1.0,
                Some(1.0),
                false,
            ),
            DriftSpec::Identity => (
                Arc::new(|v: &[f64], out: &mut [f64]| out.copy_from_slice(v)),
                1.0,
                None,
                false,
            ),
        };
        let (diff_fn, lip_diffusion, sup_diffusion, constant): (DiffusionFn, f64, Option<f64>, Option<Vec<f64>>) =
            match *diffusion {
                DiffusionSpec::Zero => {
                    let m = vec![0.0; p * p];
                    (constant_fn(m.clone()), 0.0, Some(0.0), Some(m))
                }
                DiffusionSpec::Identity => {
                    let m = identity(p, 1.0);
                    (constant_fn(m.clone()), 0.0, Some(sp), Some(m))
                }
                DiffusionSpec::Constant { scale } => {
                    let m = identity(p, scale);
                    (constant_fn(m.clone()), 0.0, Some(scale.abs() * sp), Some(m))
                }
                DiffusionSpec::SinScaled { amp } => (
                    Arc::new(move |v: &[f64], out: &mut [f64]| {
                        let p = v.len();
                        out.fill(0.0);
                        let s = 1.0 + amp * v[0].sin();
                        for i in 0..p {
                            out[i * p + i] = s;
                        }
                    }),
                    amp.abs() * sp,
                    Some((1.0 + amp.abs()) * sp),
                    None,
                ),
                DiffusionSpec::DiagFirst => (
                    Arc::new(|v: &[f64], out: &mut [f64]| {
                        let p = v.len();
                        out.fill(0.0);
                        out[0] = v[0];
                        for i in 1..p {
                            out[i * p + i] = 1.0;
                        }
                    }),
                    1.0,
                    None,
                    None,
                ),
            };
        Self {
            p,
            drift: drift_fn,
            diffusion: diff_fn,
            lip_drift,
            lip_diffusion,
            sup_drift,
            sup_diffusion,
            zero_drift,
            constant_diffusion: constant,
            name: format!("{drift:?}/{diffusion:?}"),
        }
    }

    /// `b ≡ 0`, `σ ≡ I`: the additive case whose solution is `H`.
    pub fn additive(p: usize) -> Self {
        Self::from_specs(p, &DriftSpec::Zero, &DiffusionSpec::Identity)
    }

    pub fn eval_drift(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.p];
        (self.drift)(v, &mut out);
        out
    }

    pub fn eval_diffusion(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.p * self.p];
        (self.diffusion)(v, &mut out);
        out
    }
}

fn constant_fn(m: Vec<f64>) -> DiffusionFn {
    Arc::new(move |_: &[f64], out: &mut [f64]| out.copy_from_slice(&m))
}

/// Radial retraction `v ↦ v N/‖v‖` outside the closed ball `B(0, N)`.
pub fn retract(v: &[f64], n: f64) -> Option<Vec<f64>> {
    let r = norm(v);
    (r > n).then(|| v.iter().map(|x| x * n / r).collect())
}

/// `b_N(v) = b(v)` for `‖v‖ <= N` and `b(vN/‖v‖)` otherwise.
///
/// `ℳ(b_N)` is estimated by sampling `‖b‖` on the ball (radial shells along
/// random directions) and recorded as `sup_drift`.
pub fn truncate_drift(coeffs: &Coefficients, n: f64, seed: u64) -> Coefficients {
    assert!(n > 0.0, "truncation radius must be positive");
    let inner = coeffs.drift.clone();
    let drift: DriftFn = Arc::new(move |v: &[f64], out: &mut [f64]| match retract(v, n) {
        Some(w) => inner(&w, out),
        None => inner(v, out),
    });
    let p = coeffs.p;
    let mut rng = rng::stream(seed, &[rng::tag::PROBE, 0x6472]);
    let mut sup: f64 = 0.0;
    let mut out = vec![0.0; p];
    for _ in 0..2000 {
        let dir = random_unit(&mut rng, p);
        for k in 0..=16 {
            let v: Vec<f64> = dir.iter().map(|d| d * n * k as f64 / 16.0).collect();
            drift(&v, &mut out);
            sup = sup.max(norm(&out));
        }
    }
    Coefficients {
        drift,
        sup_drift: Some(sup),
        name: format!("{} | b_N(N={n})", coeffs.name),
        ..coeffs.clone()
    }
}

/// Applies the same radial retraction to the diffusion.
pub fn truncate_diffusion(diffusion: DiffusionFn, n: f64) -> DiffusionFn {
    Arc::new(move |v: &[f64], out: &mut [f64]| match retract(v, n) {
        Some(w) => diffusion(&w, out),
        None => diffusion(v, out),
    })
}

pub(crate) fn random_unit<R: Rng + ?Sized>(rng: &mut R, p: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..p).map(|_| rng::normal(rng)).collect();
        let r = norm(&v);
        if r > 1e-12 {
            return v.into_iter().map(|x| x / r).collect();
        }
    }
}

/// `λ(M) = min_{‖x‖=1} ‖Mx‖²`, the smallest eigenvalue of `MᵀM`, for a
/// row-major square matrix.
pub fn lambda_of_matrix(m: &[f64], p: usize) -> f64 {
    if p == 1 {
        return m[0] * m[0];
    }
    let a = DMatrix::from_row_slice(p, p, m);
    let g = a.transpose() * &a;
    SymmetricEigen::new(g).eigenvalues.min().max(0.0)
}

/// `λ(v)` for the diffusion `σ`.
pub fn smallest_singular_value(sigma: &DiffusionFn, v: &[f64]) -> f64 {
    let p = v.len();
    let mut m = vec![0.0; p * p];
    sigma(v, &mut m);
    lambda_of_matrix(&m, p)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LipschitzReport {
    pub n_pairs: usize,
    /// Largest observed difference quotient divided by the declared constant
    /// (0 when the declared constant is 0 and nothing moved).
    pub max_ratio: f64,
    pub max_quotient: f64,
    pub declared: f64,
    pub passed: bool,
}

/// Random pairs `(v, w)` with `v` in a box of half-width `scale` and `w` at a
/// log-uniform distance from `v`.
fn random_pairs(seed: u64, stream_tag: u64, p: usize, n_pairs: usize, scale: f64) -> Vec<(Vec<f64>, Vec<f64>)> {
    let mut rng = rng::stream(seed, &[rng::tag::PROBE, stream_tag]);
    (0..n_pairs)
        .map(|_| {
            let v: Vec<f64> = (0..p).map(|_| rng.gen_range(-scale..scale)).collect();
            let dir = random_unit(&mut rng, p);
            let r = rng.gen_range(-6.0f64..0.5).exp();
            let w = v.iter().zip(&dir).map(|(a, d)| a + r * d).collect();
            (v, w)
        })
        .collect()
}

fn quotient_report(quotients: impl Iterator<Item = f64>, n_pairs: usize, declared: f64, slack: f64) -> LipschitzReport {
    let max_quotient = quotients.fold(0.0, f64::max);
    let max_ratio = if declared > 0.0 {
        max_quotient / declared
    } else if max_quotient == 0.0 {
        0.0
    } else {
        f64::INFINITY
    };
    LipschitzReport {
        n_pairs,
        max_ratio,
        max_quotient,
        declared,
        passed: max_ratio <= slack,
    }
}

/// Sampled difference quotients of a vector map against a declared constant.
pub fn drift_lipschitz_check(drift: &DriftFn, p: usize, declared: f64, n_pairs: usize, scale: f64, seed: u64) -> LipschitzReport {
    let pairs = random_pairs(seed, 0x6c62, p, n_pairs, scale);
    let (mut a, mut b) = (vec![0.0; p], vec![0.0; p]);
    let q = pairs.iter().map(|(v, w)| {
        drift(v, &mut a);
        drift(w, &mut b);
        let num: f64 = a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
        let den: f64 = v.iter().zip(w).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
        num / den
    });
    let q: Vec<f64> = q.collect();
    quotient_report(q.into_iter(), n_pairs, declared, 1.01)
}

/// Sampled difference quotients of `σ` in Frobenius norm.
pub fn diffusion_lipschitz_check(sigma: &DiffusionFn, p: usize, declared: f64, n_pairs: usize, scale: f64, seed: u64) -> LipschitzReport {
    let pairs = random_pairs(seed, 0x6c73, p, n_pairs, scale);
    let (mut a, mut b) = (vec![0.0; p * p], vec![0.0; p * p]);
    let q: Vec<f64> = pairs
        .iter()
        .map(|(v, w)| {
            sigma(v, &mut a);
            sigma(w, &mut b);
            let num: f64 = a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
            let den: f64 = v.iter().zip(w).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
            num / den
        })
        .collect();
    quotient_report(q.into_iter(), n_pairs, declared, 1.01)
}

/// Checks `|√λ(v) - √λ(w)| <= lip(σ) ‖v - w‖` on random pairs; pairs
/// concentrate near the origin so degenerate sets such as `{v₁ = 0}` are hit.
pub fn sqrt_lambda_lipschitz_check(sigma: &DiffusionFn, p: usize, lip_sigma: f64, n_pairs: usize, seed: u64) -> LipschitzReport {
    let mut pairs = random_pairs(seed, 0x736c, p, n_pairs / 2, 3.0);
    pairs.extend(random_pairs(seed, 0x736d, p, n_pairs - n_pairs / 2, 0.05));
    let q: Vec<f64> = pairs
        .iter()
        .map(|(v, w)| {
            let a = smallest_singular_value(sigma, v).sqrt();
            let b = smallest_singular_value(sigma, w).sqrt();
            let den: f64 = v.iter().zip(w).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
            (a - b).abs() / den
        })
        .collect();
    quotient_report(q.into_iter(), n_pairs, lip_sigma, 1.0 + 1e-6)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lambda_examples() {
        let id = Coefficients::from_specs(2, &DriftSpec::Zero, &DiffusionSpec::Identity);
        assert!((smallest_singular_value(&id.diffusion, &[0.3, -1.0]) - 1.0).abs() < 1e-14);
        assert!((lambda_of_matrix(&[2.0, 0.0, 0.0, 3.0], 2) - 4.0).abs() < 1e-13);
        assert_eq!(lambda_of_matrix(&[0.0; 4], 2), 0.0);
        let diag = Coefficients::from_specs(2, &DriftSpec::Zero, &DiffusionSpec::DiagFirst);
        assert!((smallest_singular_value(&diag.diffusion, &[0.05, 7.0]) - 0.0025).abs() < 1e-15);
    }

    #[test]
    fn truncation_retracts() {
        let c = Coefficients::from_specs(3, &DriftSpec::Identity, &DiffusionSpec::Zero);
        let t = truncate_drift(&c, 1.0, 0);
        assert_eq!(t.eval_drift(&[3.0, 0.0, 0.0]), vec![1.0, 0.0, 0.0]);
        let v = [0.2, -0.3, 0.1];
        assert_eq!(t.eval_drift(&v), c.eval_drift(&v));
        assert!((t.sup_drift.unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn declared_constants_hold() {
        for p in [1usize, 2, 4] {
            for drift in [DriftSpec::Zero, DriftSpec::Linear { rate: -1.5 }, DriftSpec::Saturating, DriftSpec::Identity] {
                for diff in [
                    DiffusionSpec::Zero,
                    DiffusionSpec::Identity,
                    DiffusionSpec::SinScaled { amp: 0.5 },
                    DiffusionSpec::DiagFirst,
                ] {
                    let c = Coefficients::from_specs(p, &drift, &diff);
                    let d = drift_lipschitz_check(&c.drift, p, c.lip_drift, 500, 4.0, 1);
                    assert!(d.passed, "{drift:?}: {d:?}");
                    let s = diffusion_lipschitz_check(&c.diffusion, p, c.lip_diffusion, 500, 4.0, 2);
                    assert!(s.passed, "{diff:?}: {s:?}");
                }
            }
        }
    }

    #[test]
    fn truncated_drift_lipschitz_not_larger() {
        let c = Coefficients::from_specs(2, &DriftSpec::Linear { rate: 2.0 }, &DiffusionSpec::Zero);
        let t = truncate_drift(&c, 0.5, 3);
        let r = drift_lipschitz_check(&t.drift, 2, c.lip_drift, 2000, 2.0, 4);
        assert!(r.passed, "{r:?}");
    }

    #[test]
    fn sqrt_lambda_checks() {
        let c = Coefficients::from_specs(2, &DriftSpec::Zero, &DiffusionSpec::Identity);
        let r = sqrt_lambda_lipschitz_check(&c.diffusion, 2, 0.0, 200, 0);
        assert_eq!(r.max_ratio, 0.0);
        assert!(r.passed);
        for p in [1usize, 3] {
            let c = Coefficients::from_specs(p, &DriftSpec::Zero, &DiffusionSpec::SinScaled { amp: 0.5 });
            let r = sqrt_lambda_lipschitz_check(&c.diffusion, p, c.lip_diffusion, 2000, 1);
            assert!(r.passed, "{r:?}");
        }
        let c = Coefficients::from_specs(2, &DriftSpec::Zero, &DiffusionSpec::DiagFirst);
        let r = sqrt_lambda_lipschitz_check(&c.diffusion, 2, c.lip_diffusion, 2000, 2);
        assert!(r.passed, "{r:?}");
    }
}
