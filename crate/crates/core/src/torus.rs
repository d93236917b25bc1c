//! Geometry of the circle `T = [-1, 1)` (addition mod 2), the parabolic
//! space-time metric, anisotropic product metrics and dyadic lattices.

use std::fmt;
use std::ops::{Add, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default upper bound on the number of points a lattice may contain.
pub const DEFAULT_LATTICE_CAP: usize = 1 << 24;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TorusError {
    #[error("lattice would hold {size} points, above the cap of {cap}")]
    CapExceeded { size: u128, cap: usize },
    #[error("points {0} and {1} coincide")]
    DuplicatePoints(usize, usize),
    #[error("invalid lattice parameter: {0}")]
    InvalidParameter(String),
}

/// Reduces a real number to its representative in `[-1, 1)`.
pub fn wrap(x: f64) -> f64 {
    if (-1.0..1.0).contains(&x) {
        return x;
    }
    let y = (x + 1.0).rem_euclid(2.0) - 1.0;
    // rem_euclid can round up to exactly 2.0 for tiny negative inputs
    if y >= 1.0 {
        -1.0
    } else {
        y
    }
}

/// A point of the torus, always stored in canonical form.
#[derive(Clone, Copy, Debug, Default, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(from = "f64", into = "f64")]
pub struct TorusPoint(f64);

impl TorusPoint {
    pub fn new(x: f64) -> Self {
        Self(wrap(x))
    }

    #[inline]
    pub fn coord(self) -> f64 {
        self.0
    }

    #[inline]
    pub fn dist(self, other: TorusPoint) -> f64 {
        torus_dist(self, other)
    }
}

impl From<f64> for TorusPoint {
    fn from(x: f64) -> Self {
        Self::new(x)
    }
}

impl From<TorusPoint> for f64 {
    fn from(p: TorusPoint) -> f64 {
        p.0
    }
}

impl Add for TorusPoint {
    type Output = TorusPoint;
    fn add(self, rhs: TorusPoint) -> TorusPoint {
        TorusPoint::new(self.0 + rhs.0)
    }
}

impl Sub for TorusPoint {
    type Output = TorusPoint;
    fn sub(self, rhs: TorusPoint) -> TorusPoint {
        TorusPoint::new(self.0 - rhs.0)
    }
}

impl Add<f64> for TorusPoint {
    type Output = TorusPoint;
    fn add(self, rhs: f64) -> TorusPoint {
        TorusPoint::new(self.0 + rhs)
    }
}

impl fmt::Display for TorusPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// Arc-length distance on the torus of circumference 2; lies in `[0, 1]`.
#[inline]
pub fn torus_dist(a: TorusPoint, b: TorusPoint) -> f64 {
    let d = (a.0 - b.0).abs();
    d.min(2.0 - d)
}

/// A space-time point `(t, x)` with `t >= 0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpaceTimePoint {
    pub t: f64,
    pub x: TorusPoint,
}

impl SpaceTimePoint {
    pub fn new(t: f64, x: f64) -> Self {
        debug_assert!(t >= 0.0, "negative time {t}");
        Self {
            t,
            x: TorusPoint::new(x),
        }
    }
}

/// The parabolic metric `|s - t|^{1/4} + dist(x, y)^{1/2}`.
#[inline]
pub fn parabolic_dist(a: SpaceTimePoint, b: SpaceTimePoint) -> f64 {
    (a.t - b.t).abs().powf(0.25) + torus_dist(a.x, b.x).sqrt()
}

/// One coordinate axis of an anisotropic product metric.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricAxis {
    /// Hölder-type exponent in `(0, 1]`.
    pub exponent: f64,
    /// Torus axes measure separation with [`torus_dist`].
    pub periodic: bool,
}

/// `d(s, s') = sum_j |s_j - s'_j|^{alpha_j}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnisotropicMetric {
    pub axes: Vec<MetricAxis>,
}

impl AnisotropicMetric {
    pub fn new(axes: Vec<MetricAxis>) -> Result<Self, TorusError> {
        for a in &axes {
            if !(a.exponent > 0.0 && a.exponent <= 1.0) {
                return Err(TorusError::InvalidParameter(format!(
                    "metric exponent {} outside (0, 1]",
                    a.exponent
                )));
            }
        }
        Ok(Self { axes })
    }

    /// The space-time metric with a Euclidean time axis and a torus space axis.
    pub fn parabolic() -> Self {
        Self {
            axes: vec![
                MetricAxis {
                    exponent: 0.25,
                    periodic: false,
                },
                MetricAxis {
                    exponent: 0.5,
                    periodic: true,
                },
            ],
        }
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn dist(&self, a: &[f64], b: &[f64]) -> f64 {
        debug_assert_eq!(a.len(), self.axes.len());
        self.axes
            .iter()
            .zip(a.iter().zip(b))
            .map(|(ax, (&x, &y))| {
                let d = if ax.periodic {
                    torus_dist(TorusPoint::new(x), TorusPoint::new(y))
                } else {
                    (x - y).abs()
                };
                d.powf(ax.exponent)
            })
            .sum()
    }
}

fn lattice_spacing(n: u32, delta: f64, alpha: f64) -> Result<f64, TorusError> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(TorusError::InvalidParameter(format!(
            "alpha {alpha} outside (0, 1]"
        )));
    }
    if !(delta >= 0.0) {
        return Err(TorusError::InvalidParameter(format!(
            "delta {delta} is negative"
        )));
    }
    let exponent = n as f64 * (1.0 + delta) / alpha;
    let spacing = (-exponent).exp2();
    if spacing == 0.0 || !spacing.is_finite() {
        return Err(TorusError::InvalidParameter(format!(
            "spacing 2^-{exponent} is not representable"
        )));
    }
    Ok(spacing)
}

/// Integer range `[lo, hi]` of multipliers `j` with `j * spacing` in the
/// half-open torus window `[-1, 1)`.
fn torus_multipliers(spacing: f64) -> (i64, i64) {
    let lo = (-1.0 / spacing).ceil() as i64;
    let mut hi = (1.0 / spacing).ceil() as i64 - 1;
    while (hi + 1) as f64 * spacing < 1.0 {
        hi += 1;
    }
    while hi as f64 * spacing >= 1.0 {
        hi -= 1;
    }
    (lo, hi)
}

/// The lattice `T ∩ { j 2^{-n(1+delta)/alpha} : j ∈ Z }`, sorted ascending.
pub fn spatial_lattice(
    n: u32,
    delta: f64,
    alpha: f64,
    cap: usize,
) -> Result<Vec<TorusPoint>, TorusError> {
    let spacing = lattice_spacing(n, delta, alpha)?;
    let (lo, hi) = torus_multipliers(spacing);
    let size = (hi - lo + 1) as u128;
    if size > cap as u128 {
        return Err(TorusError::CapExceeded { size, cap });
    }
    Ok((lo..=hi).map(|j| TorusPoint(j as f64 * spacing)).collect())
}

/// Number of points [`spatial_lattice`] would return, without building it.
pub fn spatial_lattice_len(n: u32, delta: f64, alpha: f64) -> Result<u128, TorusError> {
    let spacing = lattice_spacing(n, delta, alpha)?;
    let (lo, hi) = torus_multipliers(spacing);
    Ok((hi - lo + 1) as u128)
}

/// Extent of one axis of the box handed to [`product_lattice`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum AxisRange {
    /// Closed interval `[lo, hi]`.
    Interval(f64, f64),
    /// The whole torus `[-1, 1)`.
    Torus,
}

/// Cartesian product of per-axis dyadic lattices restricted to a box.
///
/// Points are returned row-major, one `Vec` per point, ordered
/// lexicographically with the first axis varying slowest.
pub fn product_lattice(
    n: u32,
    delta: f64,
    metric: &AnisotropicMetric,
    bounds: &[AxisRange],
    cap: usize,
) -> Result<Vec<Vec<f64>>, TorusError> {
    if bounds.len() != metric.dim() {
        return Err(TorusError::InvalidParameter(format!(
            "box has {} axes, metric has {}",
            bounds.len(),
            metric.dim()
        )));
    }
    let mut axes: Vec<Vec<f64>> = Vec::with_capacity(bounds.len());
    let mut size: u128 = 1;
    for (ax, range) in metric.axes.iter().zip(bounds) {
        let spacing = lattice_spacing(n, delta, ax.exponent)?;
        let (lo, hi) = match *range {
            AxisRange::Torus => torus_multipliers(spacing),
            AxisRange::Interval(a, b) => {
                if a > b {
                    return Err(TorusError::InvalidParameter(format!(
                        "empty interval [{a}, {b}]"
                    )));
                }
                ((a / spacing).ceil() as i64, (b / spacing).floor() as i64)
            }
        };
        let count = if hi >= lo { (hi - lo + 1) as u128 } else { 0 };
        size = size.saturating_mul(count);
        if size > cap as u128 {
            return Err(TorusError::CapExceeded { size, cap });
        }
        axes.push((lo..=hi).map(|j| j as f64 * spacing).collect());
    }
    let mut out = Vec::with_capacity(size as usize);
    let mut idx = vec![0usize; axes.len()];
    if size == 0 {
        return Ok(out);
    }
    loop {
        out.push(idx.iter().zip(&axes).map(|(&i, a)| a[i]).collect());
        let mut k = axes.len();
        loop {
            if k == 0 {
                return Ok(out);
            }
            k -= 1;
            idx[k] += 1;
            if idx[k] < axes[k].len() {
                break;
            }
            idx[k] = 0;
        }
    }
}

/// Orders points so that each point's immediate predecessor is its nearest
/// predecessor in the parabolic metric:
/// `rho(s_i, s_{i-1}) <= rho(s_i, s_j)` for all `j < i`.
///
/// The lowest-index point is placed last; earlier positions are filled by
/// repeatedly taking the nearest remaining point (ties go to the lowest
/// index).
pub fn greedy_order(points: &[SpaceTimePoint]) -> Result<Vec<usize>, TorusError> {
    for i in 0..points.len() {
        for j in (i + 1)..points.len() {
            if points[i].t == points[j].t && points[i].x == points[j].x {
                return Err(TorusError::DuplicatePoints(i, j));
            }
        }
    }
    if points.is_empty() {
        return Ok(Vec::new());
    }
    let mut remaining: Vec<usize> = (1..points.len()).collect();
    let mut reversed = vec![0usize];
    let mut current = 0usize;
    while !remaining.is_empty() {
        let (pos, _) = remaining
            .iter()
            .enumerate()
            .map(|(pos, &j)| (pos, parabolic_dist(points[current], points[j])))
            .fold((usize::MAX, f64::INFINITY), |best, cand| {
                if cand.1 < best.1 {
                    cand
                } else {
                    best
                }
            });
        current = remaining.remove(pos);
        reversed.push(current);
    }
    reversed.reverse();
    Ok(reversed)
}

/// Brute-force check of the greedy-order property for an ordering.
pub fn satisfies_greedy_order(points: &[SpaceTimePoint], order: &[usize]) -> bool {
    for i in 1..order.len() {
        let si = points[order[i]];
        let prev = parabolic_dist(si, points[order[i - 1]]);
        for &j in &order[..i] {
            if prev > parabolic_dist(si, points[j]) {
                return false;
            }
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tp(x: f64) -> TorusPoint {
        TorusPoint::new(x)
    }

    #[test]
    fn torus_dist_examples() {
        assert_eq!(torus_dist(tp(0.0), tp(0.0)), 0.0);
        assert!((torus_dist(tp(0.9), tp(-0.9)) - 0.2).abs() < 1e-15);
        assert_eq!(torus_dist(tp(-0.5), tp(0.25)), 0.75);
    }

    #[test]
    fn wrap_is_half_open() {
        assert_eq!(wrap(1.0), -1.0);
        assert_eq!(wrap(-1.0), -1.0);
        assert_eq!(wrap(3.5), -0.5);
        assert_eq!(wrap(-1e-18 - 1.0), wrap(-1e-18 - 1.0));
        assert!((-1.0..1.0).contains(&wrap(-1.0 - 1e-17)));
        assert_eq!((tp(0.75) + tp(0.5)).coord(), -0.75);
    }

    #[test]
    fn parabolic_dist_examples() {
        let a = SpaceTimePoint::new(1.0, 0.0);
        assert_eq!(parabolic_dist(a, a), 0.0);
        let b = SpaceTimePoint::new(1.0001, 0.0);
        assert!((parabolic_dist(a, b) - 0.1).abs() < 1e-6);
        let c = SpaceTimePoint::new(0.5, 0.9);
        let d = SpaceTimePoint::new(0.5, -0.9);
        assert!((parabolic_dist(c, d) - 0.2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn spatial_lattice_examples() {
        let l = spatial_lattice(1, 1.0, 0.5, DEFAULT_LATTICE_CAP).unwrap();
        assert_eq!(l.len(), 32);
        assert_eq!(l[1].coord() - l[0].coord(), 1.0 / 16.0);
        assert_eq!(l[0].coord(), -1.0);

        let l = spatial_lattice(0, 0.5, 1.0, DEFAULT_LATTICE_CAP).unwrap();
        assert_eq!(l, vec![tp(-1.0), tp(0.0)]);
        let l = spatial_lattice(1, 0.5, 1.0, DEFAULT_LATTICE_CAP).unwrap();
        let s = (-1.5f64).exp2();
        let coords: Vec<f64> = l.iter().map(|p| p.coord()).collect();
        assert_eq!(coords, vec![-2.0 * s, -s, 0.0, s, 2.0 * s]);

        // Enumerated oracle: multiples of 2^-12 in [-1, 1).
        let l = spatial_lattice(2, 0.5, 0.25, DEFAULT_LATTICE_CAP).unwrap();
        let oracle = (-10_000i64..10_000)
            .map(|j| j as f64 / 4096.0)
            .filter(|x| (-1.0..1.0).contains(x))
            .count();
        assert_eq!(oracle, 8192);
        assert_eq!(l.len(), oracle);
        assert_eq!(spatial_lattice_len(2, 0.5, 0.25).unwrap(), 8192);
    }

    #[test]
    fn spatial_lattice_cap() {
        let err = spatial_lattice(8, 0.5, 0.5, DEFAULT_LATTICE_CAP).unwrap_err();
        assert!(matches!(err, TorusError::CapExceeded { size, .. } if size == 1 << 25));
        assert!(spatial_lattice(1, 0.0, 1.0, 3).is_err());
    }

    #[test]
    fn spacing_exact_for_integer_exponent() {
        for n in 0..6 {
            let l = spatial_lattice(n, 1.0, 0.5, DEFAULT_LATTICE_CAP).unwrap();
            let s = (-(4.0 * n as f64)).exp2();
            for w in l.windows(2) {
                assert_eq!(w[1].coord() - w[0].coord(), s);
            }
        }
    }

    #[test]
    fn product_lattice_examples() {
        let metric = AnisotropicMetric::new(vec![
            MetricAxis {
                exponent: 0.25,
                periodic: false,
            },
            MetricAxis {
                exponent: 0.5,
                periodic: true,
            },
        ])
        .unwrap();
        let pts = product_lattice(
            1,
            0.0,
            &metric,
            &[AxisRange::Interval(0.0, 1.0), AxisRange::Torus],
            DEFAULT_LATTICE_CAP,
        )
        .unwrap();
        assert_eq!(pts.len(), 17 * 8);
        assert_eq!(pts[0], vec![0.0, -1.0]);
        assert_eq!(pts.last().unwrap(), &vec![1.0, 0.75]);

        let one = AnisotropicMetric::new(vec![MetricAxis {
            exponent: 1.0,
            periodic: false,
        }])
        .unwrap();
        let pts =
            product_lattice(1, 0.0, &one, &[AxisRange::Interval(0.0, 1.0)], 100).unwrap();
        assert_eq!(pts, vec![vec![0.0], vec![0.5], vec![1.0]]);

        let pts =
            product_lattice(1, 0.0, &one, &[AxisRange::Interval(0.5, 0.5)], 100).unwrap();
        assert_eq!(pts, vec![vec![0.5]]);
        let pts =
            product_lattice(1, 0.0, &one, &[AxisRange::Interval(0.3, 0.3)], 100).unwrap();
        assert!(pts.is_empty());
    }

    #[test]
    fn greedy_order_small_cases() {
        let p = [SpaceTimePoint::new(0.3, 0.1)];
        assert_eq!(greedy_order(&p).unwrap(), vec![0]);
        let p = [SpaceTimePoint::new(0.3, 0.1), SpaceTimePoint::new(0.5, -0.4)];
        let o = greedy_order(&p).unwrap();
        assert!(satisfies_greedy_order(&p, &o));
        let dup = [SpaceTimePoint::new(0.3, 0.1), SpaceTimePoint::new(0.3, 0.1)];
        assert_eq!(
            greedy_order(&dup).unwrap_err(),
            TorusError::DuplicatePoints(0, 1)
        );
    }

    #[test]
    fn anisotropic_metric_wraps_periodic_axes() {
        let m = AnisotropicMetric::parabolic();
        let d = m.dist(&[0.0, 0.9], &[0.0001, -0.9]);
        assert!((d - (0.1 + 0.2f64.sqrt())).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn torus_metric_axioms(a in -5.0f64..5.0, b in -5.0f64..5.0, c in -5.0f64..5.0) {
            let (a, b, c) = (tp(a), tp(b), tp(c));
            let ab = torus_dist(a, b);
            prop_assert!((0.0..=1.0).contains(&ab));
            prop_assert_eq!(ab, torus_dist(b, a));
            prop_assert!(ab <= torus_dist(a, c) + torus_dist(c, b) + 1e-15);
            prop_assert!(torus_dist(a, a) == 0.0);
        }

        #[test]
        fn parabolic_metric_axioms(
            t in proptest::collection::vec(0.0f64..2.0, 3),
            x in proptest::collection::vec(-1.0f64..1.0, 3),
        ) {
            let p: Vec<_> = t.iter().zip(&x).map(|(&t, &x)| SpaceTimePoint::new(t, x)).collect();
            let ab = parabolic_dist(p[0], p[1]);
            prop_assert_eq!(ab, parabolic_dist(p[1], p[0]));
            prop_assert!(ab <= parabolic_dist(p[0], p[2]) + parabolic_dist(p[2], p[1]) + 1e-12);
            prop_assert_eq!(ab == 0.0, p[0] == p[1]);
        }

        #[test]
        fn greedy_order_always_verifies(
            pts in proptest::collection::vec((0.0f64..1.0, -1.0f64..1.0), 1..12)
        ) {
            let p: Vec<_> = pts.iter().map(|&(t, x)| SpaceTimePoint::new(t, x)).collect();
            match greedy_order(&p) {
                Ok(o) => {
                    let mut sorted = o.clone();
                    sorted.sort_unstable();
                    prop_assert_eq!(sorted, (0..p.len()).collect::<Vec<_>>());
                    prop_assert!(satisfies_greedy_order(&p, &o));
                }
                Err(TorusError::DuplicatePoints(..)) => {}
                Err(e) => prop_assert!(false, "{e}"),
            }
        }
    }
}
