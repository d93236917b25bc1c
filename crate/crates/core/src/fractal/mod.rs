//! Box-counting dimension, Cantor sets and lattice hit counts.
//!
//! Hausdorff dimension is estimated by the box-counting (upper Minkowski)
//! surrogate: the least-squares slope of `log₂ #{occupied cells of side
//! 2^{-j}}` against `j` over a window of dyadic scales.

pub mod counting;
pub mod experiments;

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::stats;
use crate::torus::AnisotropicMetric;

#[derive(Debug, Error, PartialEq)]
pub enum FractalError {
    #[error("scale window [{j_min}, {j_max}] spans fewer than 3 octaves")]
    WindowTooNarrow { j_min: u32, j_max: u32 },
    #[error("invalid point cloud: {0}")]
    InvalidCloud(String),
    #[error("invalid Cantor specification: {0}")]
    InvalidCantor(String),
    #[error("field sites do not match the lattice F_n^δ: {0}")]
    LatticeMismatch(String),
    #[error("configuration mismatch: {0}")]
    ConfigMismatch(String),
}

pub type Result<T> = std::result::Result<T, FractalError>;

/// Points in `ℝ^dim`, stored point-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointCloud {
    dim: usize,
    points: Vec<f64>,
    pub tag: String,
}

impl PointCloud {
    pub fn new(dim: usize, points: Vec<f64>, tag: impl Into<String>) -> Result<Self> {
        if dim == 0 {
            return Err(FractalError::InvalidCloud("dimension must be positive".into()));
        }
        if points.is_empty() || points.len() % dim != 0 {
            return Err(FractalError::InvalidCloud(format!(
                "{} coordinates do not form a nonempty set of {dim}-vectors",
                points.len()
            )));
        }
        if let Some(i) = points.iter().position(|v| !v.is_finite()) {
            return Err(FractalError::InvalidCloud(format!("non-finite coordinate at index {i}")));
        }
        Ok(Self {
            dim,
            points,
            tag: tag.into(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.points.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.points.chunks(self.dim)
    }

    pub fn coords(&self) -> &[f64] {
        &self.points
    }

    /// Diagonal of the bounding box, an upper bound on the diameter.
    pub fn diameter_bound(&self) -> f64 {
        (0..self.dim)
            .map(|c| {
                let (lo, hi) = self
                    .iter()
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p[c]), hi.max(p[c])));
                (hi - lo) * (hi - lo)
            })
            .sum::<f64>()
            .sqrt()
    }

    /// Image under a map into `ℝ^out_dim`.
    pub fn map(&self, out_dim: usize, f: impl Fn(&[f64], &mut [f64])) -> Result<Self> {
        let mut out = vec![0.0; self.len() * out_dim];
        for (p, o) in self.iter().zip(out.chunks_mut(out_dim)) {
            f(p, o);
        }
        Self::new(out_dim, out, format!("f({})", self.tag))
    }
}

/// Number of distinct cells `Π_c [k_c s_c, (k_c + 1) s_c)` (offset by
/// `origin`) that contain a point, for per-axis sides `sides`.
fn count_cells(points: &[f64], dim: usize, sides: &[f64], origin: &[f64]) -> usize {
    let n = points.len() / dim;
    let index = |p: &[f64], c: usize| ((p[c] - origin[c]) / sides[c]).floor() as i64;
    // Pack into one word when every index fits in its share of 64 bits.
    let bits = (64 / dim as u32).min(63);
    if bits >= 8 {
        let (lo, hi) = (-(1i64 << (bits - 1)), (1i64 << (bits - 1)) - 1);
        let mut keys = Vec::with_capacity(n);
        let mut fits = true;
        'outer: for p in points.chunks(dim) {
            let mut key = 0u64;
            for c in 0..dim {
                let k = index(p, c);
                if k < lo || k > hi {
                    fits = false;
                    break 'outer;
                }
                key = (key << bits) | ((k - lo) as u64);
            }
            keys.push(key);
        }
        if fits {
            keys.sort_unstable();
            keys.dedup();
            return keys.len();
        }
    }
    let set: HashSet<Vec<i64>> = points
        .chunks(dim)
        .map(|p| (0..dim).map(|c| index(p, c)).collect())
        .collect();
    set.len()
}

/// Occupied cells of the grid `2^{-j} ℤ^p` (half-open cells).
pub fn box_count(cloud: &PointCloud, j: u32) -> usize {
    let side = (-(j as f64)).exp2();
    count_cells(&cloud.points, cloud.dim, &vec![side; cloud.dim], &vec![0.0; cloud.dim])
}

/// Occupied cells of side `side` of the grid anchored at `origin`.
pub fn box_count_at(cloud: &PointCloud, side: f64, origin: &[f64]) -> usize {
    count_cells(&cloud.points, cloud.dim, &vec![side; cloud.dim], origin)
}

/// Occupied anisotropic cells `Π_i [0, 2^{-j/α_i})`: the cells matching
/// balls of radius `2^{-j}` in `d(s, s') = Σ |s_i - s'_i|^{α_i}`.
pub fn anisotropic_box_count(points: &[f64], j: u32, metric: &AnisotropicMetric) -> usize {
    let dim = metric.dim();
    let sides: Vec<f64> = metric.axes.iter().map(|a| (-(j as f64) / a.exponent).exp2()).collect();
    count_cells(points, dim, &sides, &vec![0.0; dim])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DimensionEstimate {
    pub slope: f64,
    /// 95% confidence half-width of the slope.
    pub ci_half_width: f64,
    pub slope_se: f64,
    pub j_min: u32,
    pub j_max: u32,
    /// `(j, occupied cells)` for every scale in the window.
    pub counts: Vec<(u32, usize)>,
    pub n_points: usize,
}

fn fit_counts(counts: Vec<(u32, usize)>, j_min: u32, j_max: u32, n_points: usize) -> Result<DimensionEstimate> {
    if j_max < j_min + 3 {
        return Err(FractalError::WindowTooNarrow { j_min, j_max });
    }
    let x: Vec<f64> = counts.iter().map(|&(j, _)| j as f64).collect();
    let y: Vec<f64> = counts.iter().map(|&(_, c)| (c as f64).log2()).collect();
    let fit = stats::linear_fit(&x, &y).expect("window has at least four scales");
    Ok(DimensionEstimate {
        slope: fit.slope,
        ci_half_width: fit.ci_half_width,
        slope_se: fit.slope_se,
        j_min,
        j_max,
        counts,
        n_points,
    })
}

/// Least-squares slope of `log₂ box_count` against `j` on `[j_min, j_max]`.
pub fn dim_estimate(cloud: &PointCloud, j_min: u32, j_max: u32) -> Result<DimensionEstimate> {
    if j_max < j_min + 3 {
        return Err(FractalError::WindowTooNarrow { j_min, j_max });
    }
    let counts = (j_min..=j_max).map(|j| (j, box_count(cloud, j))).collect();
    fit_counts(counts, j_min, j_max, cloud.len())
}

/// Coarsest octave resolving the set: `max(0, ceil(-log₂ diam))`.
fn coarse_scale(diam: f64) -> u32 {
    if diam > 0.0 {
        (-diam.log2()).ceil().max(0.0) as u32
    } else {
        0
    }
}

/// Automatic window: skip the two coarsest octaves after the set's own
/// scale, stop at the last scale whose count is at most 10% of the sample.
pub fn auto_window(cloud: &PointCloud) -> Result<(u32, u32)> {
    let j_min = coarse_scale(cloud.diameter_bound()) + 2;
    let limit = cloud.len() / 10;
    let mut j_max = j_min;
    let mut j = j_min;
    while j < 60 && box_count(cloud, j) <= limit {
        j_max = j;
        j += 1;
    }
    if box_count(cloud, j_min) > limit || j_max < j_min + 3 {
        return Err(FractalError::WindowTooNarrow { j_min, j_max });
    }
    Ok((j_min, j_max))
}

pub fn dim_estimate_auto(cloud: &PointCloud) -> Result<DimensionEstimate> {
    let (a, b) = auto_window(cloud)?;
    dim_estimate(cloud, a, b)
}

/// Slope of `log₂` anisotropic counts against `j` on `[j_min, j_max]`.
pub fn anisotropic_dim_estimate(points: &[f64], metric: &AnisotropicMetric, j_min: u32, j_max: u32) -> Result<DimensionEstimate> {
    if j_max < j_min + 3 {
        return Err(FractalError::WindowTooNarrow { j_min, j_max });
    }
    let counts = (j_min..=j_max)
        .map(|j| (j, anisotropic_box_count(points, j, metric)))
        .collect();
    fit_counts(counts, j_min, j_max, points.len() / metric.dim())
}

/// Self-similar Cantor set in `[lo, hi]`: each interval keeps its two end
/// pieces of relative length `ratio`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CantorSpec {
    pub depth: u32,
    pub ratio: f64,
    pub lo: f64,
    pub hi: f64,
}

impl CantorSpec {
    pub fn middle_thirds(depth: u32, lo: f64, hi: f64) -> Self {
        Self {
            depth,
            ratio: 1.0 / 3.0,
            lo,
            hi,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.ratio > 0.0 && self.ratio < 0.5) {
            return Err(FractalError::InvalidCantor(format!("ratio {} not in (0, 1/2)", self.ratio)));
        }
        if !(self.hi > self.lo) {
            return Err(FractalError::InvalidCantor("empty base interval".into()));
        }
        if self.depth > 30 {
            return Err(FractalError::InvalidCantor(format!("depth {} too large", self.depth)));
        }
        Ok(())
    }

    /// `log 2 / log(1/ratio)`.
    pub fn theoretical_dimension(&self) -> f64 {
        std::f64::consts::LN_2 / (1.0 / self.ratio).ln()
    }

    /// Midpoints of the `2^depth` intervals of generation `depth`, sorted.
    pub fn generate(&self) -> Result<Vec<f64>> {
        self.validate()?;
        let mut lefts = vec![self.lo];
        let mut len = self.hi - self.lo;
        for _ in 0..self.depth {
            let piece = len * self.ratio;
            lefts = lefts.iter().flat_map(|&a| [a, a + len - piece]).collect();
            len = piece;
        }
        Ok(lefts.into_iter().map(|a| a + 0.5 * len).collect())
    }

    /// The generated set as a one-dimensional cloud.
    pub fn cloud(&self) -> Result<PointCloud> {
        PointCloud::new(1, self.generate()?, format!("cantor(r={}, depth={})", self.ratio, self.depth))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HolderImageReport {
    pub alpha: f64,
    pub source: DimensionEstimate,
    pub image: DimensionEstimate,
    /// `source.slope / α + source CI / α + image CI`.
    pub bound: f64,
    pub holds: bool,
}

/// Checks `dim f(F) <= dim F / α` for an `α`-Hölder map `f`, with the
/// combined confidence half-widths as tolerance. Both windows are chosen
/// automatically.
pub fn lipschitz_image_upper_check(
    source: &PointCloud,
    out_dim: usize,
    f: impl Fn(&[f64], &mut [f64]),
    alpha: f64,
) -> Result<HolderImageReport> {
    let image = source.map(out_dim, f)?;
    let s = dim_estimate_auto(source)?;
    let i = dim_estimate_auto(&image)?;
    let bound = s.slope / alpha + s.ci_half_width / alpha + i.ci_half_width;
    Ok(HolderImageReport {
        alpha,
        holds: i.slope <= bound,
        source: s,
        image: i,
        bound,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::torus::MetricAxis;
    use proptest::prelude::*;

    #[test]
    fn box_count_examples() {
        let single = PointCloud::new(2, vec![0.3, 0.7], "pt").unwrap();
        for j in 0..20 {
            assert_eq!(box_count(&single, j), 1);
        }
        let corners = PointCloud::new(2, vec![0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 1.0, 1.0], "corners").unwrap();
        assert_eq!(box_count(&corners, 0), 4);
        assert!(PointCloud::new(2, vec![0.0], "bad").is_err());
        assert!(PointCloud::new(1, vec![f64::NAN], "bad").is_err());
    }

    #[test]
    fn uniform_square_fills_all_cells() {
        let mut g = crate::rng::stream(4, &[]);
        use rand::Rng;
        let pts: Vec<f64> = (0..2 * 65536).map(|_| g.gen::<f64>()).collect();
        let c = PointCloud::new(2, pts, "unif").unwrap();
        assert_eq!(box_count(&c, 5), 1024);
    }

    #[test]
    fn segment_has_dimension_one() {
        let n = 1 << 14;
        let pts: Vec<f64> = (0..n).flat_map(|i| [i as f64 / n as f64, 0.0]).collect();
        let c = PointCloud::new(2, pts, "segment").unwrap();
        let e = dim_estimate(&c, 3, 9).unwrap();
        assert!((e.slope - 1.0).abs() < 0.05, "{e:?}");
    }

    #[test]
    fn cantor_dimension_and_self_consistency() {
        let spec = CantorSpec::middle_thirds(12, 0.0, 1.0);
        let cloud = spec.cloud().unwrap();
        assert_eq!(cloud.len(), 4096);
        for k in 0..=12 {
            let side = 3f64.powi(-(k as i32));
            assert_eq!(box_count_at(&cloud, side, &[0.0]), 1 << k, "k={k}");
        }
        // Dyadic cells do not align with triadic intervals, so the fit carries
        // a log-periodic bias that depends on the base interval: about 0.678
        // on the torus [-1, 1], 0.707 on [0, 1] (numpy oracle agrees).
        let torus = CantorSpec::middle_thirds(12, -1.0, 1.0).cloud().unwrap();
        let e = dim_estimate(&torus, 3, 8).unwrap();
        assert!((e.slope - spec.theoretical_dimension()).abs() < 0.05, "{e:?}");
        assert!((dim_estimate(&cloud, 3, 8).unwrap().slope - 0.7069).abs() < 1e-3);
        assert!(CantorSpec { ratio: 0.5, ..spec.clone() }.generate().is_err());
    }

    #[test]
    fn window_checks() {
        let c = CantorSpec::middle_thirds(6, 0.0, 1.0).cloud().unwrap();
        assert_eq!(dim_estimate(&c, 3, 5).err(), Some(FractalError::WindowTooNarrow { j_min: 3, j_max: 5 }));
        // 64 points: the 10% saturation rule leaves no usable window.
        assert!(matches!(auto_window(&c), Err(FractalError::WindowTooNarrow { .. })));
    }

    #[test]
    fn isolated_points_saturate() {
        let c = PointCloud::new(1, vec![0.1, 0.4, 0.8], "three").unwrap();
        let fine = dim_estimate(&c, 20, 26).unwrap();
        assert!(fine.slope.abs() < 1e-12);
    }

    #[test]
    fn anisotropic_counts() {
        let metric = AnisotropicMetric::new(vec![
            MetricAxis { exponent: 0.25, periodic: false },
            MetricAxis { exponent: 0.5, periodic: true },
        ])
        .unwrap();
        assert_eq!(anisotropic_box_count(&[0.3, 0.2], 3, &metric), 1);
        // Time segment at fixed x: 2^{4j} cells.
        let n = 1 << 16;
        let seg: Vec<f64> = (0..n).flat_map(|i| [i as f64 / n as f64, 0.1]).collect();
        for j in 1..=3 {
            assert_eq!(anisotropic_box_count(&seg, j, &metric), 1 << (4 * j));
        }
        let e = anisotropic_dim_estimate(&seg, &metric, 0, 3).unwrap();
        assert!((e.slope - 4.0).abs() < 1e-12);
        // Dense rectangle [0,1)²: 2^{4j} · 2^{2j} cells.
        let m = 256;
        let rect: Vec<f64> = (0..m * m)
            .flat_map(|k| [(k / m) as f64 / m as f64, (k % m) as f64 / m as f64])
            .collect();
        assert_eq!(anisotropic_box_count(&rect, 1, &metric), 64);
        assert_eq!(anisotropic_box_count(&rect, 2, &metric), 4096);
    }

    #[test]
    fn holder_image_checks() {
        let src = CantorSpec::middle_thirds(12, 0.1, 1.0).cloud().unwrap();
        let id = lipschitz_image_upper_check(&src, 1, |x, o| o[0] = x[0], 1.0).unwrap();
        assert!(id.holds);
        assert!((id.image.slope - id.source.slope).abs() < 1e-12);
        let emb = lipschitz_image_upper_check(&src, 2, |x, o| {
            o[0] = x[0];
            o[1] = 0.0;
        }, 1.0)
        .unwrap();
        assert!(emb.holds && (emb.image.slope - emb.source.slope).abs() < 0.05);
        let sqrt = lipschitz_image_upper_check(&src, 1, |x, o| o[0] = x[0].sqrt(), 0.5).unwrap();
        assert!(sqrt.holds, "{sqrt:?}");
    }

    proptest! {
        #[test]
        fn counts_monotone_in_scale(pts in proptest::collection::vec(-4.0f64..4.0, 2..400), j in 0u32..12) {
            let n = pts.len() / 2 * 2;
            let c = PointCloud::new(2, pts[..n].to_vec(), "p").unwrap();
            let a = box_count(&c, j);
            let b = box_count(&c, j + 1);
            prop_assert!(b >= a && b <= 4 * a);
        }
    }
}
