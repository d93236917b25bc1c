//! Lattice hit counts `N_n^δ(t, B(ν, r)) = #{y ∈ F_n^δ : u(t, y) ∈ B(ν, r)}`
//! with `F_n^δ = T ∩ 2^{-2n(1+δ)} Z` (the `α = 1/2` lattice).

use serde::{Deserialize, Serialize};

use super::{FractalError, Result};
use crate::gaussian_field::FieldSample;
use crate::rng;
use crate::torus;

/// `(spacing, |F_n^δ|)` of the `α = 1/2` lattice.
pub fn lattice_shape(n: u32, delta: f64) -> Result<(f64, usize)> {
    let len = torus::spatial_lattice_len(n, delta, 0.5).map_err(|e| FractalError::LatticeMismatch(e.to_string()))?;
    let spacing = (-(2.0 * n as f64 * (1.0 + delta))).exp2();
    Ok((spacing, len as usize))
}

/// When `F_n^δ` is a uniform grid `-1 + 2i/J` (spacing dividing 1 dyadically),
/// its size `J`.
pub fn lattice_as_uniform_grid(n: u32, delta: f64) -> Option<usize> {
    let (spacing, len) = lattice_shape(n, delta).ok()?;
    let j = (2.0 / spacing).round();
    (j == len as f64 && (2.0 / j - spacing).abs() <= 1e-15 * spacing && len % 2 == 0).then_some(len)
}

/// Closed ball test `‖z - ν‖ <= r`.
#[inline]
fn in_ball(z: &[f64], nu: &[f64], r: f64) -> bool {
    let r2 = r * r;
    let mut acc = 0.0;
    for (a, b) in z.iter().zip(nu) {
        acc += (a - b) * (a - b);
        if acc > r2 {
            return false;
        }
    }
    true
}

/// Number of site-major `p`-vectors in the closed ball `B(ν, r)`.
pub fn count_in_ball(values: &[f64], p: usize, nu: &[f64], r: f64) -> usize {
    values.chunks(p).filter(|z| in_ball(z, nu, r)).count()
}

/// `N_n^δ(t, B(ν, r))` for frame `ti` of a field sampled on `F_n^δ`.
pub fn count_lattice_hits(field: &FieldSample, ti: usize, n: u32, delta: f64, nu: &[f64], radius: f64) -> Result<usize> {
    let (spacing, len) = lattice_shape(n, delta)?;
    if field.sites.len() != len {
        return Err(FractalError::LatticeMismatch(format!(
            "{} sites, lattice has {len}",
            field.sites.len()
        )));
    }
    let lattice = torus::spatial_lattice(n, delta, 0.5, len).map_err(|e| FractalError::LatticeMismatch(e.to_string()))?;
    if let Some((i, _)) = field
        .sites
        .iter()
        .zip(&lattice)
        .enumerate()
        .find(|(_, (a, b))| (a.coord() - b.coord()).abs() > 1e-9 * spacing)
    {
        return Err(FractalError::LatticeMismatch(format!("site {i} is off the lattice")));
    }
    if nu.len() != field.p {
        return Err(FractalError::LatticeMismatch(format!("center has dimension {}, field {}", nu.len(), field.p)));
    }
    if ti >= field.times.len() {
        return Err(FractalError::LatticeMismatch(format!("frame {ti} out of range")));
    }
    Ok(count_in_ball(field.frame(ti), field.p, nu, radius))
}

fn cell_of(z: &[f64], side: f64, out: &mut [i64]) {
    for (o, v) in out.iter_mut().zip(z) {
        *o = (v / side).floor() as i64;
    }
}

fn cell_hash(cell: &[i64]) -> u64 {
    cell.iter().fold(0x9e37_79b9_7f4a_7c15, |h, &k| rng::mix64(h ^ k as u64))
}

/// Points bucketed by a hash of their cell in `side · Z^p`, sorted by hash.
/// Collisions only cost extra distance checks.
pub struct BallIndex<'a> {
    values: &'a [f64],
    p: usize,
    side: f64,
    entries: Vec<(u64, u32)>,
}

impl<'a> BallIndex<'a> {
    pub fn new(values: &'a [f64], p: usize, side: f64) -> Self {
        assert!(values.len() / p <= u32::MAX as usize);
        let mut cell = vec![0i64; p];
        let mut entries: Vec<(u64, u32)> = values
            .chunks(p)
            .enumerate()
            .map(|(i, z)| {
                cell_of(z, side, &mut cell);
                (cell_hash(&cell), i as u32)
            })
            .collect();
        entries.sort_unstable();
        Self { values, p, side, entries }
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.values[i * self.p..(i + 1) * self.p]
    }

    fn bucket(&self, h: u64) -> &[(u64, u32)] {
        let lo = self.entries.partition_point(|e| e.0 < h);
        let hi = self.entries.partition_point(|e| e.0 <= h);
        &self.entries[lo..hi]
    }

    /// Points in the closed ball `B(ν, r)`; needs `r <= side`.
    pub fn count(&self, nu: &[f64], r: f64) -> usize {
        assert!(r <= self.side, "radius {r} exceeds the index cell side {}", self.side);
        let p = self.p;
        let lo: Vec<i64> = nu.iter().map(|v| ((v - r) / self.side).floor() as i64).collect();
        let hi: Vec<i64> = nu.iter().map(|v| ((v + r) / self.side).floor() as i64).collect();
        let mut cell = lo.clone();
        let mut seen: Vec<u64> = Vec::new();
        let mut total = 0;
        loop {
            let h = cell_hash(&cell);
            if !seen.contains(&h) {
                seen.push(h);
                total += self
                    .bucket(h)
                    .iter()
                    .filter(|&&(_, i)| in_ball(self.point(i as usize), nu, r))
                    .count();
            }
            let mut k = 0;
            loop {
                if k == p {
                    return total;
                }
                if cell[k] < hi[k] {
                    cell[k] += 1;
                    break;
                }
                cell[k] = lo[k];
                k += 1;
            }
        }
    }

    /// One representative point index from each of the `k` fullest cells.
    pub fn densest_cells(&self, k: usize) -> Vec<usize> {
        let mut runs: Vec<(usize, usize)> = Vec::new();
        let mut start = 0;
        for i in 1..=self.entries.len() {
            if i == self.entries.len() || self.entries[i].0 != self.entries[start].0 {
                runs.push((i - start, start));
                start = i;
            }
        }
        runs.sort_unstable_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
        runs.iter()
            .take(k)
            .map(|&(len, s)| self.entries[s + len / 2].1 as usize)
            .collect()
    }
}

/// Nearest point of the mesh `2^{-2n}/√p · Z^p`.
pub fn round_to_mesh(z: &[f64], n: u32) -> Vec<f64> {
    let step = (-2.0 * n as f64).exp2() / (z.len() as f64).sqrt();
    z.iter().map(|v| (v / step).round() * step).collect()
}

/// Largest `N(B(ν, r))` over the scanned centers: field values in the
/// densest cells, their roundings to the `2^{-2n}/√p` mesh, and
/// `n_random` field values picked uniformly.
pub fn max_count_over_centers(values: &[f64], p: usize, n: u32, r: f64, n_dense: usize, n_random: usize, seed: u64) -> (usize, usize) {
    let index = BallIndex::new(values, p, r);
    let mut centers: Vec<Vec<f64>> = Vec::new();
    for i in index.densest_cells(n_dense) {
        let z = index.point(i).to_vec();
        centers.push(round_to_mesh(&z, n));
        centers.push(z);
    }
    let n_points = values.len() / p;
    let mut g = rng::stream(seed, &[rng::tag::CENTERS, n as u64]);
    use rand::Rng;
    for _ in 0..n_random {
        let i = g.gen_range(0..n_points);
        centers.push(index.point(i).to_vec());
    }
    let best = centers.iter().map(|nu| index.count(nu, r)).max().unwrap_or(0);
    (best, centers.len())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CountingRow {
    pub n: u32,
    pub t: f64,
    pub replica: u64,
    pub lattice_size: usize,
    pub max_count: usize,
    pub n_centers: usize,
    /// `log₂` of the bound `2^{2npδ}`.
    pub log2_bound: f64,
    /// The bound is at least `|F_n^δ|`, so it holds for every field.
    pub vacuous: bool,
    pub holds: bool,
}
