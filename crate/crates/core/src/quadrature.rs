//! Globally adaptive Gauss–Kronrod (7/15) quadrature.
//!
//! Used as an independent oracle for the series evaluators and for the
//! nested integrals that have no closed form.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuadratureError {
    #[error("quadrature did not converge: estimate {estimate}, error {error} after {intervals} intervals")]
    NotConverged {
        estimate: f64,
        error: f64,
        intervals: usize,
    },
    #[error("integrand returned a non-finite value at {0}")]
    NonFinite(f64),
}

#[derive(Clone, Copy, Debug)]
pub struct QuadOptions {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_intervals: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        Self {
            abs_tol: 1e-9,
            rel_tol: 0.0,
            max_intervals: 2000,
        }
    }
}

impl QuadOptions {
    pub fn abs(abs_tol: f64) -> Self {
        Self {
            abs_tol,
            ..Self::default()
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadResult {
    pub value: f64,
    pub error: f64,
    pub intervals: usize,
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_225,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];
// Gauss weights for the odd Kronrod nodes XGK[1], XGK[3], XGK[5], XGK[7].
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn gk15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> Result<Segment, QuadratureError> {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    if !fc.is_finite() {
        return Err(QuadratureError::NonFinite(c));
    }
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for i in 0..7 {
        let x1 = c - h * XGK[i];
        let x2 = c + h * XGK[i];
        let (f1, f2) = (f(x1), f(x2));
        if !f1.is_finite() {
            return Err(QuadratureError::NonFinite(x1));
        }
        if !f2.is_finite() {
            return Err(QuadratureError::NonFinite(x2));
        }
        kronrod += WGK[i] * (f1 + f2);
        if i % 2 == 1 {
            gauss += WG[i / 2] * (f1 + f2);
        }
    }
    Ok(Segment {
        a,
        b,
        value: kronrod * h,
        error: ((kronrod - gauss) * h).abs(),
    })
}

/// Integrates `f` over `[a, b]`, bisecting the worst interval until the
/// summed error estimate is below `max(abs_tol, rel_tol * |I|)`.
pub fn integrate<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    opts: QuadOptions,
) -> Result<QuadResult, QuadratureError> {
    if a == b {
        return Ok(QuadResult {
            value: 0.0,
            error: 0.0,
            intervals: 0,
        });
    }
    if a > b {
        let r = integrate(f, b, a, opts)?;
        return Ok(QuadResult {
            value: -r.value,
            ..r
        });
    }
    let mut heap = BinaryHeap::new();
    let first = gk15(&mut f, a, b)?;
    let (mut total, mut err) = (first.value, first.error);
    heap.push(first);
    loop {
        if err <= opts.abs_tol.max(opts.rel_tol * total.abs()) {
            return Ok(QuadResult {
                value: total,
                error: err,
                intervals: heap.len(),
            });
        }
        if heap.len() >= opts.max_intervals {
            return Err(QuadratureError::NotConverged {
                estimate: total,
                error: err,
                intervals: heap.len(),
            });
        }
        let worst = heap.pop().expect("heap is never empty");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // Interval can no longer be split in floating point.
            return Err(QuadratureError::NotConverged {
                estimate: total,
                error: err,
                intervals: heap.len() + 1,
            });
        }
        let left = gk15(&mut f, worst.a, mid)?;
        let right = gk15(&mut f, mid, worst.b)?;
        total += left.value + right.value - worst.value;
        err += left.error + right.error - worst.error;
        heap.push(left);
        heap.push(right);
        // Re-sum occasionally to stop cancellation drift in the running totals.
        if heap.len() % 64 == 0 {
            total = heap.iter().map(|s| s.value).sum();
            err = heap.iter().map(|s| s.error).sum();
        }
    }
}

/// Integrates over `[0, t]` an integrand with an integrable `s^{-1/2}`
/// singularity at the origin, via the substitution `s = w²`.
pub fn integrate_sqrt_singular<F: FnMut(f64) -> f64>(
    mut f: F,
    t: f64,
    opts: QuadOptions,
) -> Result<QuadResult, QuadratureError> {
    integrate(|w| 2.0 * w * f(w * w), 0.0, t.sqrt(), opts)
}

/// Sums the integral over consecutive breakpoints; useful when the
/// integrand has kinks or sharp peaks at known locations.
pub fn integrate_piecewise<F: FnMut(f64) -> f64>(
    mut f: F,
    breaks: &[f64],
    opts: QuadOptions,
) -> Result<QuadResult, QuadratureError> {
    let pieces = breaks.len().saturating_sub(1).max(1) as f64;
    let sub = QuadOptions {
        abs_tol: opts.abs_tol / pieces,
        ..opts
    };
    let mut out = QuadResult {
        value: 0.0,
        error: 0.0,
        intervals: 0,
    };
    for w in breaks.windows(2) {
        let r = integrate(&mut f, w[0], w[1], sub)?;
        out.value += r.value;
        out.error += r.error;
        out.intervals += r.intervals;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomials_are_exact() {
        let r = integrate(|x| x.powi(5) - 3.0 * x * x, -1.0, 2.0, QuadOptions::abs(1e-14)).unwrap();
        assert!((r.value - (64.0 / 6.0 - 1.0 / 6.0 - 9.0)).abs() < 1e-13);
        assert_eq!(r.intervals, 1);
    }

    #[test]
    fn smooth_and_peaked_integrands() {
        let r = integrate(f64::sin, 0.0, std::f64::consts::PI, QuadOptions::abs(1e-12)).unwrap();
        assert!((r.value - 2.0).abs() < 1e-12);
        let eps: f64 = 1e-4;
        let r = integrate(
            |x| (-x * x / (4.0 * eps)).exp() / (4.0 * std::f64::consts::PI * eps).sqrt(),
            -1.0,
            1.0,
            QuadOptions::abs(1e-11),
        )
        .unwrap();
        assert!((r.value - 1.0).abs() < 1e-11);
    }

    #[test]
    fn reversed_limits_flip_sign() {
        let r = integrate(|x| x, 1.0, 0.0, QuadOptions::default()).unwrap();
        assert!((r.value + 0.5).abs() < 1e-14);
    }

    #[test]
    fn sqrt_singularity() {
        let r = integrate_sqrt_singular(|s| 1.0 / s.sqrt(), 0.25, QuadOptions::abs(1e-13)).unwrap();
        assert!((r.value - 1.0).abs() < 1e-13);
    }

    #[test]
    fn reports_failure() {
        let opts = QuadOptions {
            abs_tol: 1e-15,
            rel_tol: 0.0,
            max_intervals: 3,
        };
        assert!(matches!(
            integrate(|x: f64| x.abs().sqrt().sin(), -1.0, 1.0, opts),
            Err(QuadratureError::NotConverged { .. })
        ));
        assert!(matches!(
            integrate(|x| 1.0 / x, 0.0, 1.0, QuadOptions::default()),
            Err(QuadratureError::NonFinite(_)) | Err(QuadratureError::NotConverged { .. })
        ));
    }
}
