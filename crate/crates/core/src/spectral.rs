//! Real Fourier series on the torus and their fast evaluation.
//!
//! A field with `N` modes is stored as `2N + 1` real coefficients in slot
//! order `[A_0, A_1, B_1, A_2, B_2, ..., A_N, B_N]` and represents
//!
//! ```text
//! f(x) = A_0/√2 + Σ_{n=1}^{N} A_n cos(πnx) + B_n sin(πnx).
//! ```
//!
//! On the uniform grid `x_j = -1 + 2j/J` the sine of the Nyquist frequency
//! `n = J/2` vanishes, so a grid field is described by exactly `J` slots
//! with slot `J - 1` holding `A_{J/2}`.

use std::f64::consts::{FRAC_1_SQRT_2, PI, SQRT_2};
use std::sync::Arc;

use realfft::num_complex::Complex;
use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};

/// Number of slots used by a field with `n_modes` frequencies.
#[inline]
pub fn slots_for_modes(n_modes: usize) -> usize {
    2 * n_modes + 1
}

/// Slot of `A_n`.
#[inline]
pub fn cos_slot(n: usize) -> usize {
    if n == 0 {
        0
    } else {
        2 * n - 1
    }
}

/// Slot of `B_n`, `n >= 1`.
#[inline]
pub fn sin_slot(n: usize) -> usize {
    2 * n
}

/// Frequency carried by a slot.
#[inline]
pub fn slot_frequency(k: usize) -> usize {
    (k + 1) / 2
}

/// Uniform grid `x_j = -1 + 2j/J`.
pub fn uniform_grid(j: usize) -> Vec<f64> {
    (0..j).map(|i| -1.0 + 2.0 * i as f64 / j as f64).collect()
}

/// Evaluates a coefficient vector at arbitrary sites by direct summation,
/// using a rotation recurrence for `(cos πnx, sin πnx)`.
pub fn evaluate_at(coeffs: &[f64], sites: &[f64], out: &mut [f64]) {
    let n_modes = slot_frequency(coeffs.len().saturating_sub(1));
    for (o, &x) in out.iter_mut().zip(sites) {
        let (s1, c1) = (PI * x).sin_cos();
        let (mut c, mut s) = (1.0f64, 0.0f64);
        let mut acc = coeffs.first().copied().unwrap_or(0.0) * FRAC_1_SQRT_2;
        for n in 1..=n_modes {
            if n % 256 == 0 {
                // Re-anchor the recurrence to stop rounding drift.
                let (sn, cn) = (PI * n as f64 * x).sin_cos();
                c = cn;
                s = sn;
            } else {
                let cn = c * c1 - s * s1;
                s = s * c1 + c * s1;
                c = cn;
            }
            acc += coeffs[2 * n - 1] * c;
            if let Some(b) = coeffs.get(2 * n) {
                acc += b * s;
            }
        }
        *o = acc;
    }
}

/// FFT plans for moving between `J` grid values and spectral coefficients.
///
/// Synthesis accepts any number of modes: frequencies above `J/2` are
/// rendered on a grid refined by a power of two and then subsampled, which
/// is exact at the grid sites.
pub struct GridTransform {
    j: usize,
    r2c: Arc<dyn RealToComplex<f64>>,
    c2r: Arc<dyn ComplexToReal<f64>>,
    planner: RealFftPlanner<f64>,
    spectrum: Vec<Complex<f64>>,
    real: Vec<f64>,
    scratch_fwd: Vec<Complex<f64>>,
    scratch_inv: Vec<Complex<f64>>,
}

impl GridTransform {
    /// # Panics
    /// If `j` is odd or smaller than 2.
    pub fn new(j: usize) -> Self {
        assert!(j >= 2 && j % 2 == 0, "grid size must be even, got {j}");
        let mut planner = RealFftPlanner::<f64>::new();
        let r2c = planner.plan_fft_forward(j);
        let c2r = planner.plan_fft_inverse(j);
        let scratch_fwd = r2c.make_scratch_vec();
        let scratch_inv = c2r.make_scratch_vec();
        Self {
            j,
            spectrum: r2c.make_output_vec(),
            real: r2c.make_input_vec(),
            r2c,
            c2r,
            planner,
            scratch_fwd,
            scratch_inv,
        }
    }

    pub fn len(&self) -> usize {
        self.j
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Grid values of the field with the given slot coefficients. Accepts
    /// any odd-or-even slot count; missing slots are zero.
    pub fn synthesize(&mut self, coeffs: &[f64], out: &mut [f64]) {
        self.synthesize_scaled(coeffs, out, FRAC_1_SQRT_2);
    }

    /// Like [`GridTransform::synthesize`] but slot 0 holds the mean
    /// `A_0/√2` itself, so constant fields round-trip exactly.
    pub fn synthesize_mean(&mut self, coeffs: &[f64], out: &mut [f64]) {
        self.synthesize_scaled(coeffs, out, 1.0);
    }

    fn synthesize_scaled(&mut self, coeffs: &[f64], out: &mut [f64], zero_scale: f64) {
        assert_eq!(out.len(), self.j);
        let max_freq = slot_frequency(coeffs.len().saturating_sub(1));
        if max_freq <= self.j / 2 {
            Self::fill_spectrum(coeffs, &mut self.spectrum, zero_scale);
            self.c2r
                .process_with_scratch(&mut self.spectrum, out, &mut self.scratch_inv)
                .expect("spectrum is Hermitian by construction");
            return;
        }
        let mut factor = 2;
        while max_freq > self.j * factor / 2 {
            factor *= 2;
        }
        let m = self.j * factor;
        let c2r = self.planner.plan_fft_inverse(m);
        let mut spectrum = c2r.make_input_vec();
        let mut fine = c2r.make_output_vec();
        Self::fill_spectrum(coeffs, &mut spectrum, zero_scale);
        c2r.process(&mut spectrum, &mut fine)
            .expect("spectrum is Hermitian by construction");
        for (o, v) in out.iter_mut().zip(fine.iter().step_by(factor)) {
            *o = *v;
        }
    }

    fn fill_spectrum(coeffs: &[f64], spectrum: &mut [Complex<f64>], zero_scale: f64) {
        let m = 2 * (spectrum.len() - 1);
        spectrum.fill(Complex::new(0.0, 0.0));
        if let Some(&a0) = coeffs.first() {
            spectrum[0] = Complex::new(a0 * zero_scale, 0.0);
        }
        let n_modes = slot_frequency(coeffs.len().saturating_sub(1));
        for n in 1..=n_modes {
            let a = coeffs[2 * n - 1];
            let b = coeffs.get(2 * n).copied().unwrap_or(0.0);
            let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
            if 2 * n == m {
                // Nyquist bin: the sine part vanishes on the grid.
                spectrum[n] = Complex::new(a * sign, 0.0);
            } else {
                spectrum[n] = Complex::new(0.5 * a * sign, -0.5 * b * sign);
            }
        }
    }

    /// Spectral coefficients (`J` slots) of grid values. Inverse of
    /// [`GridTransform::synthesize`] restricted to `J` slots.
    pub fn analyze(&mut self, values: &[f64], coeffs: &mut [f64]) {
        self.analyze_scaled(values, coeffs, SQRT_2);
    }

    /// Inverse of [`GridTransform::synthesize_mean`].
    pub fn analyze_mean(&mut self, values: &[f64], coeffs: &mut [f64]) {
        self.analyze_scaled(values, coeffs, 1.0);
    }

    fn analyze_scaled(&mut self, values: &[f64], coeffs: &mut [f64], zero_scale: f64) {
        assert_eq!(values.len(), self.j);
        assert_eq!(coeffs.len(), self.j);
        self.real.copy_from_slice(values);
        self.r2c
            .process_with_scratch(&mut self.real, &mut self.spectrum, &mut self.scratch_fwd)
            .expect("buffer sizes match the plan");
        let inv_j = 1.0 / self.j as f64;
        coeffs[0] = zero_scale * self.spectrum[0].re * inv_j;
        let half = self.j / 2;
        for n in 1..half {
            let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
            let x = self.spectrum[n] * (sign * inv_j);
            coeffs[2 * n - 1] = 2.0 * x.re;
            coeffs[2 * n] = -2.0 * x.im;
        }
        let sign = if half % 2 == 0 { 1.0 } else { -1.0 };
        coeffs[self.j - 1] = sign * self.spectrum[half].re * inv_j;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_coeffs(len: usize, seed: u64) -> Vec<f64> {
        let mut s = crate::rng::stream(seed, &[]);
        (0..len).map(|_| crate::rng::normal(&mut s)).collect()
    }

    #[test]
    fn slot_layout() {
        assert_eq!(cos_slot(0), 0);
        assert_eq!(cos_slot(3), 5);
        assert_eq!(sin_slot(3), 6);
        assert_eq!(slot_frequency(5), 3);
        assert_eq!(slot_frequency(6), 3);
        assert_eq!(slots_for_modes(4), 9);
    }

    #[test]
    fn single_modes() {
        let mut t = GridTransform::new(16);
        let grid = uniform_grid(16);
        let mut out = vec![0.0; 16];
        let mut c = vec![0.0; 7];
        c[cos_slot(1)] = 1.0;
        t.synthesize(&c, &mut out);
        for (o, x) in out.iter().zip(&grid) {
            assert!((o - (PI * x).cos()).abs() < 1e-14);
        }
        let mut c = vec![0.0; 7];
        c[sin_slot(3)] = 1.0;
        t.synthesize(&c, &mut out);
        for (o, x) in out.iter().zip(&grid) {
            assert!((o - (3.0 * PI * x).sin()).abs() < 1e-14);
        }
        t.synthesize(&[0.0; 7], &mut out);
        assert!(out.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn fft_matches_direct_sum() {
        for (j, slots) in [(16, 16), (16, 9), (32, 129), (8, 8)] {
            let c = random_coeffs(slots, j as u64);
            let grid = uniform_grid(j);
            let mut direct = vec![0.0; j];
            evaluate_at(&c, &grid, &mut direct);
            let mut fast = vec![0.0; j];
            GridTransform::new(j).synthesize(&c, &mut fast);
            for (a, b) in direct.iter().zip(&fast) {
                assert!((a - b).abs() < 1e-11, "j={j} slots={slots}");
            }
        }
    }

    #[test]
    fn analysis_inverts_synthesis() {
        for j in [4, 8, 64, 256] {
            let c = random_coeffs(j, 99);
            let mut t = GridTransform::new(j);
            let mut v = vec![0.0; j];
            t.synthesize(&c, &mut v);
            let mut back = vec![0.0; j];
            t.analyze(&v, &mut back);
            for (a, b) in c.iter().zip(&back) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn mean_convention_keeps_constants_exact() {
        let mut t = GridTransform::new(64);
        let mut c = vec![0.0; 64];
        c[0] = 0.7;
        let mut v = vec![0.0; 64];
        t.synthesize_mean(&c, &mut v);
        assert!(v.iter().all(|&x| x == 0.7));
        let mut back = vec![0.0; 64];
        let r = random_coeffs(64, 3);
        t.synthesize_mean(&r, &mut v);
        t.analyze_mean(&v, &mut back);
        for (a, b) in r.iter().zip(&back) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn recurrence_resync_keeps_accuracy() {
        let c = random_coeffs(2 * 2000 + 1, 5);
        let x = [0.123_456_7];
        let mut rec = [0.0];
        evaluate_at(&c, &x, &mut rec);
        let mut direct = c[0] * FRAC_1_SQRT_2;
        for n in 1..=2000 {
            let (s, co) = (PI * n as f64 * x[0]).sin_cos();
            direct += c[2 * n - 1] * co + c[2 * n] * s;
        }
        assert!((rec[0] - direct).abs() < 1e-10);
    }
}
