//! Spectral time stepping for `∂_t u = ∂_x² u + b(u) + σ(u) ξ` on a uniform
//! grid of `J` sites.
//!
//! The state lives in `J` spectral slots (see [`crate::spectral`]) with one
//! change: slot 0 stores the spatial mean `A_0/√2`, which keeps constant
//! fields exact. Drift and diffusion are evaluated on the grid.
//!
//! With spectral noise, step `m` draws one standard normal `Z_k` per slot
//! from the same per-slot streams as [`crate::gaussian_field::SpectralState`]
//! and uses `ΔW = √dt Σ_k Z_k φ_k` with `{φ_k}` orthonormal on the grid
//! (the Nyquist cosine carries an extra `1/√2`). Per site this is
//! `N(0, dt/h)`, i.e. discrete space-time white noise.

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::coefficients::{lambda_of_matrix, Coefficients};
use crate::gaussian_field::{tail_variance_bound, FieldSample};
use crate::rng::{self, ModeStreams};
use crate::spectral::{self, GridTransform};
use crate::torus::TorusPoint;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("invalid solver configuration: {0}")]
    Invalid(String),
    #[error("non-finite or exploding state at t = {t}")]
    BlowUp { t: f64, partial: Box<Trajectory> },
}

pub type Result<T> = std::result::Result<T, SolverError>;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    /// `û ← D(û + dt b̂ + n̂)` with the exact heat multiplier
    /// `D = e^{-π²n²dt}`.
    #[default]
    SemiImplicit,
    /// `û ← Dû + (1 - D)/λ b̂ + √((1 - D²)/(2λ dt)) n̂`: exact for the
    /// linear part, so with constant `σ` and `b ≡ 0` every resolved mode
    /// follows the exact Ornstein–Uhlenbeck transition.
    ExponentialIntegrator,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseKind {
    /// Per-slot streams shared with the exact sampler of `H`.
    #[default]
    Spectral,
    /// Independent `N(0, dt/h)` per site, coordinate and step.
    GridSites,
}

/// `u_0` on the torus.
#[derive(Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialData {
    Zero,
    Constant { value: Vec<f64> },
    /// `u_0(x)_c = amplitude[c] · cos(π · frequency · x)`.
    Cosine { amplitude: Vec<f64>, frequency: usize },
    /// Site-major grid values (`J · p` entries).
    Grid { values: Vec<f64> },
    #[serde(skip)]
    Function(Arc<dyn Fn(f64, &mut [f64]) + Send + Sync>),
}

impl fmt::Debug for InitialData {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Zero => write!(f, "Zero"),
            Self::Constant { value } => write!(f, "Constant({value:?})"),
            Self::Cosine { amplitude, frequency } => write!(f, "Cosine({amplitude:?}, {frequency})"),
            Self::Grid { values } => write!(f, "Grid({} values)", values.len()),
            Self::Function(_) => write!(f, "Function"),
        }
    }
}

impl InitialData {
    fn grid_values(&self, j: usize, p: usize) -> Result<Vec<f64>> {
        let xs = spectral::uniform_grid(j);
        let mut out = vec![0.0; j * p];
        match self {
            Self::Zero => {}
            Self::Constant { value } => {
                check_len(value.len(), p, "constant initial value")?;
                for site in out.chunks_mut(p) {
                    site.copy_from_slice(value);
                }
            }
            Self::Cosine { amplitude, frequency } => {
                check_len(amplitude.len(), p, "cosine amplitudes")?;
                for (site, x) in out.chunks_mut(p).zip(&xs) {
                    let c = (PI * *frequency as f64 * x).cos();
                    for (o, a) in site.iter_mut().zip(amplitude) {
                        *o = a * c;
                    }
                }
            }
            Self::Grid { values } => {
                check_len(values.len(), j * p, "grid initial data")?;
                out.copy_from_slice(values);
            }
            Self::Function(f) => {
                for (site, &x) in out.chunks_mut(p).zip(&xs) {
                    f(x, site);
                }
            }
        }
        if out.iter().any(|v| !v.is_finite()) {
            return Err(SolverError::Invalid("initial data is not finite on the grid".into()));
        }
        Ok(out)
    }
}

fn check_len(got: usize, want: usize, what: &str) -> Result<()> {
    if got == want {
        Ok(())
    } else {
        Err(SolverError::Invalid(format!("{what}: expected {want} entries, got {got}")))
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SolverConfig {
    pub p: usize,
    /// Grid size `J` (even, at least 4); spacing `h = 2/J`.
    pub n_sites: usize,
    pub dt: f64,
    pub t_end: f64,
    pub initial: InitialData,
    pub scheme: Scheme,
    pub noise: NoiseKind,
    pub seed: u64,
    pub replica: u64,
    /// Keep only noise frequencies `<= noise_modes` (all `J` slots when unset).
    pub noise_modes: Option<usize>,
    /// Record a frame every this many steps (0: initial and final only).
    pub record_every: usize,
    /// `N` in the stopping time `T_{r,N}`.
    pub stop_radius: Option<f64>,
    /// `r` in the stopping time `T_{r,N}`; enables `λ` tracking.
    pub stop_lambda: Option<f64>,
    /// Compute `min_x λ(u(t, x))` every step even without `stop_lambda`.
    pub track_lambda: bool,
    /// `sup_x ‖u‖` above this counts as blow-up.
    pub blow_up_threshold: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            p: 1,
            n_sites: 256,
            dt: 1e-4,
            t_end: 0.1,
            initial: InitialData::Zero,
            scheme: Scheme::SemiImplicit,
            noise: NoiseKind::Spectral,
            seed: 0,
            replica: 0,
            noise_modes: None,
            record_every: 0,
            stop_radius: None,
            stop_lambda: None,
            track_lambda: false,
            blow_up_threshold: 1e12,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(SolverError::Invalid(m));
        if self.p == 0 {
            return bad("p must be positive".into());
        }
        if self.n_sites < 4 || self.n_sites % 2 != 0 {
            return bad(format!("n_sites must be even and >= 4, got {}", self.n_sites));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return bad(format!("t_end must be nonnegative, got {}", self.t_end));
        }
        Ok(())
    }

    /// Number of steps and the step actually used so that the last step
    /// lands on `t_end`.
    pub fn steps(&self) -> (usize, f64) {
        if self.t_end == 0.0 {
            return (0, self.dt);
        }
        let n = (self.t_end / self.dt * (1.0 - 1e-12)).ceil().max(1.0) as usize;
        (n, self.t_end / n as f64)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepDiagnostics {
    pub t: f64,
    pub sup_norm: f64,
    pub min_lambda: Option<f64>,
}

/// First grid times at which the stopping conditions hold.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StoppingFlags {
    /// First `t` with `sup_x ‖u(t, x)‖ >= N`.
    pub radius_time: Option<f64>,
    /// First `t` with `min_x λ(u(t, x)) <= r`.
    pub lambda_time: Option<f64>,
}

impl StoppingFlags {
    /// `T_{r,N}` on the time grid (`None`: not reached).
    pub fn stopping_time(&self) -> Option<f64> {
        match (self.radius_time, self.lambda_time) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Trajectory {
    pub field: FieldSample,
    /// One entry per grid time, starting with `t = 0`.
    pub diagnostics: Vec<StepDiagnostics>,
    pub stopping: StoppingFlags,
    pub dt_used: f64,
    pub scheme: Scheme,
    pub blow_up: Option<f64>,
}

/// Per-slot multipliers `(decay, drift, noise)`.
fn step_factors(scheme: Scheme, j: usize, dt: f64) -> Vec<(f64, f64, f64)> {
    (0..j)
        .map(|k| {
            let n = spectral::slot_frequency(k);
            let l = PI * PI * (n * n) as f64;
            let d = (-l * dt).exp();
            match scheme {
                Scheme::SemiImplicit => (d, d * dt, d),
                Scheme::ExponentialIntegrator if n == 0 => (1.0, dt, 1.0),
                Scheme::ExponentialIntegrator => (d, -(-l * dt).exp_m1() / l, (-(-2.0 * l * dt).exp_m1() / (2.0 * l * dt)).sqrt()),
            }
        })
        .collect()
}

enum Noise {
    Spectral(Vec<ModeStreams>),
    GridSites(Vec<Vec<rand_xoshiro::SplitMix64>>),
    Custom(Box<dyn FnMut(u64, usize, &mut [f64]) + Send>),
}

/// A single trajectory, stepped explicitly.
pub struct Solver {
    cfg: SolverConfig,
    coeffs: Coefficients,
    j: usize,
    p: usize,
    t: f64,
    steps_taken: u64,
    /// Mean-convention slots per coordinate.
    hat: Vec<Vec<f64>>,
    /// Site-major grid values, valid when `grid_fresh`.
    grid: Vec<f64>,
    grid_fresh: bool,
    transform: GridTransform,
    noise: Noise,
    factors: Option<(f64, Vec<(f64, f64, f64)>)>,
    col: Vec<f64>,
    z: Vec<Vec<f64>>,
    dw_grid: Vec<Vec<f64>>,
    dw_hat: Vec<Vec<f64>>,
    forcing: Vec<f64>,
    forcing_hat: Vec<Vec<f64>>,
    mat: Vec<f64>,
    vec_out: Vec<f64>,
}

impl Solver {
    pub fn new(cfg: &SolverConfig, coeffs: &Coefficients) -> Result<Self> {
        cfg.validate()?;
        if coeffs.p != cfg.p {
            return Err(SolverError::Invalid(format!(
                "coefficients have p = {}, config has p = {}",
                coeffs.p, cfg.p
            )));
        }
        let (j, p) = (cfg.n_sites, cfg.p);
        let noise = match cfg.noise {
            NoiseKind::Spectral => Noise::Spectral(
                (0..p)
                    .map(|c| ModeStreams::new(cfg.seed, cfg.replica, c as u64, j))
                    .collect(),
            ),
            NoiseKind::GridSites => Noise::GridSites(
                (0..p)
                    .map(|c| {
                        (0..j as u64)
                            .map(|s| rng::stream(cfg.seed, &[rng::tag::GRID_NOISE, cfg.replica, c as u64, s]))
                            .collect()
                    })
                    .collect(),
            ),
        };
        let mut solver = Self {
            cfg: cfg.clone(),
            coeffs: coeffs.clone(),
            j,
            p,
            t: 0.0,
            steps_taken: 0,
            hat: vec![vec![0.0; j]; p],
            grid: vec![0.0; j * p],
            grid_fresh: true,
            transform: GridTransform::new(j),
            noise,
            factors: None,
            col: vec![0.0; j],
            z: vec![vec![0.0; j]; p],
            dw_grid: vec![vec![0.0; j]; p],
            dw_hat: vec![vec![0.0; j]; p],
            forcing: vec![0.0; j * p],
            forcing_hat: vec![vec![0.0; j]; p],
            mat: vec![0.0; p * p],
            vec_out: vec![0.0; p],
        };
        solver.set_initial(&cfg.initial)?;
        Ok(solver)
    }

    /// Replaces the noise by a caller-supplied generator of standard normal
    /// grid values: `f(step, coordinate, out)` fills `out[site]`, and the
    /// increment is `√(dt/h) · out`.
    pub fn with_custom_noise(mut self, f: impl FnMut(u64, usize, &mut [f64]) + Send + 'static) -> Self {
        self.noise = Noise::Custom(Box::new(f));
        self
    }

    fn set_initial(&mut self, init: &InitialData) -> Result<()> {
        let (j, p) = (self.j, self.p);
        self.grid = init.grid_values(j, p)?;
        match init {
            InitialData::Zero => {}
            InitialData::Constant { value } => {
                for (h, v) in self.hat.iter_mut().zip(value) {
                    h.fill(0.0);
                    h[0] = *v;
                }
            }
            _ => {
                for c in 0..p {
                    for (s, v) in self.col.iter_mut().enumerate() {
                        *v = self.grid[s * p + c];
                    }
                    self.transform.analyze_mean(&self.col, &mut self.hat[c]);
                }
            }
        }
        self.grid_fresh = true;
        Ok(())
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn n_sites(&self) -> usize {
        self.j
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn steps_taken(&self) -> u64 {
        self.steps_taken
    }

    /// Mean-convention slots of coordinate `c` (slot 0 is the spatial mean).
    pub fn mean_coeffs(&self, c: usize) -> &[f64] {
        &self.hat[c]
    }

    /// Slots of coordinate `c` in the convention of [`crate::spectral`]
    /// (slot 0 holds `A_0`).
    pub fn coeffs(&self, c: usize) -> Vec<f64> {
        let mut v = self.hat[c].clone();
        v[0] *= std::f64::consts::SQRT_2;
        v
    }

    fn refresh_grid(&mut self) {
        if self.grid_fresh {
            return;
        }
        for c in 0..self.p {
            self.transform.synthesize_mean(&self.hat[c], &mut self.col);
            for (s, v) in self.col.iter().enumerate() {
                self.grid[s * self.p + c] = *v;
            }
        }
        self.grid_fresh = true;
    }

    /// Site-major grid values at the current time.
    pub fn grid_values(&mut self) -> &[f64] {
        self.refresh_grid();
        &self.grid
    }

    pub fn diagnostics(&mut self, with_lambda: bool) -> StepDiagnostics {
        self.refresh_grid();
        let p = self.p;
        let sup_norm = self
            .grid
            .chunks(p)
            .map(|v| v.iter().map(|x| x * x).sum::<f64>().sqrt())
            .fold(0.0, f64::max);
        let min_lambda = with_lambda.then(|| {
            let mut m = vec![0.0; p * p];
            self.grid
                .chunks(p)
                .map(|v| {
                    (self.coeffs.diffusion)(v, &mut m);
                    lambda_of_matrix(&m, p)
                })
                .fold(f64::INFINITY, f64::min)
        });
        StepDiagnostics {
            t: self.t,
            sup_norm: if self.grid.iter().all(|v| v.is_finite()) { sup_norm } else { f64::NAN },
            min_lambda,
        }
    }

    fn draw_noise(&mut self, dt: f64, need_grid: bool, need_hat: bool) {
        let (j, p) = (self.j, self.p);
        let sdt = dt.sqrt();
        let cutoff = self.cfg.noise_modes.map(|n| spectral::slots_for_modes(n).min(j)).unwrap_or(j);
        match &mut self.noise {
            Noise::Spectral(streams) => {
                for c in 0..p {
                    let z = &mut self.z[c];
                    streams[c].fill(z);
                    let h = &mut self.dw_hat[c];
                    for k in 0..j {
                        h[k] = if k < cutoff { sdt * z[k] } else { 0.0 };
                    }
                    h[0] *= FRAC_1_SQRT_2;
                    h[j - 1] *= FRAC_1_SQRT_2;
                    if need_grid {
                        self.transform.synthesize_mean(&self.dw_hat[c], &mut self.dw_grid[c]);
                    }
                }
            }
            Noise::GridSites(streams) => {
                let scale = (dt * j as f64 / 2.0).sqrt();
                for c in 0..p {
                    for (o, s) in self.dw_grid[c].iter_mut().zip(streams[c].iter_mut()) {
                        *o = scale * rng::normal(s);
                    }
                }
                self.filter_grid_noise(cutoff, need_hat);
            }
            Noise::Custom(f) => {
                let scale = (dt * j as f64 / 2.0).sqrt();
                for c in 0..p {
                    f(self.steps_taken, c, &mut self.dw_grid[c]);
                    for v in self.dw_grid[c].iter_mut() {
                        *v *= scale;
                    }
                }
                self.filter_grid_noise(cutoff, need_hat);
            }
        }
    }

    fn filter_grid_noise(&mut self, cutoff: usize, need_hat: bool) {
        if cutoff == self.j && !need_hat {
            return;
        }
        for c in 0..self.p {
            self.transform.analyze_mean(&self.dw_grid[c], &mut self.dw_hat[c]);
            if cutoff < self.j {
                self.dw_hat[c][cutoff..].fill(0.0);
                self.transform.synthesize_mean(&self.dw_hat[c], &mut self.dw_grid[c]);
            }
        }
    }

    /// Advances by one step of size `dt`.
    pub fn step(&mut self, dt: f64) {
        let (j, p) = (self.j, self.p);
        if !matches!(&self.factors, Some((d, _)) if *d == dt) {
            self.factors = Some((dt, step_factors(self.cfg.scheme, j, dt)));
        }
        let constant = self.coeffs.constant_diffusion.clone();
        let zero_noise = constant.as_ref().is_some_and(|m| m.iter().all(|&x| x == 0.0));
        let zero_drift = self.coeffs.zero_drift;

        if !zero_drift || constant.is_none() {
            self.refresh_grid();
        }
        if !zero_noise {
            self.draw_noise(dt, constant.is_none(), constant.is_some());
        }

        // Drift transform.
        if !zero_drift {
            for (site, out) in self.grid.chunks(p).zip(self.forcing.chunks_mut(p)) {
                (self.coeffs.drift)(site, out);
            }
            for c in 0..p {
                for (s, v) in self.col.iter_mut().enumerate() {
                    *v = self.forcing[s * p + c];
                }
                self.transform.analyze_mean(&self.col, &mut self.forcing_hat[c]);
            }
        }
        // Noise transform, reusing `dw_hat` for σ(u)ΔW.
        if !zero_noise {
            match &constant {
                Some(m) => {
                    let mut out = vec![vec![0.0; j]; p];
                    for (r, o) in out.iter_mut().enumerate() {
                        for (c, dw) in self.dw_hat.iter().enumerate() {
                            let a = m[r * p + c];
                            if a != 0.0 {
                                for (x, y) in o.iter_mut().zip(dw) {
                                    *x += a * y;
                                }
                            }
                        }
                    }
                    self.dw_hat = out;
                }
                None => {
                    let mut prod = vec![0.0; j * p];
                    for s in 0..j {
                        (self.coeffs.diffusion)(&self.grid[s * p..(s + 1) * p], &mut self.mat);
                        for r in 0..p {
                            let mut acc = 0.0;
                            for c in 0..p {
                                acc += self.mat[r * p + c] * self.dw_grid[c][s];
                            }
                            self.vec_out[r] = acc;
                        }
                        prod[s * p..(s + 1) * p].copy_from_slice(&self.vec_out);
                    }
                    for c in 0..p {
                        for (s, v) in self.col.iter_mut().enumerate() {
                            *v = prod[s * p + c];
                        }
                        self.transform.analyze_mean(&self.col, &mut self.dw_hat[c]);
                    }
                }
            }
        }

        let factors = &self.factors.as_ref().expect("set above").1;
        for c in 0..p {
            let h = &mut self.hat[c];
            for (k, &(d, fb, fw)) in factors.iter().enumerate() {
                let mut v = d * h[k];
                if !zero_drift {
                    v += fb * self.forcing_hat[c][k];
                }
                if !zero_noise {
                    v += fw * self.dw_hat[c][k];
                }
                h[k] = v;
            }
        }
        self.t += dt;
        self.steps_taken += 1;
        self.grid_fresh = false;
    }

    fn is_finite(&self) -> bool {
        self.hat.iter().all(|h| h.iter().all(|v| v.is_finite()))
    }
}

/// Runs a full trajectory.
pub fn solve(config: &SolverConfig, coeffs: &Coefficients) -> Result<Trajectory> {
    let solver = Solver::new(config, coeffs)?;
    run(solver, config)
}

/// Runs a prepared solver (e.g. one with custom noise) to `config.t_end`.
pub fn run(mut solver: Solver, config: &SolverConfig) -> Result<Trajectory> {
    let (n_steps, dt) = config.steps();
    let with_lambda = config.track_lambda || config.stop_lambda.is_some();
    let (j, p) = (solver.j, solver.p);
    let mut times = vec![0.0];
    let mut values = solver.grid_values().to_vec();
    let mut diagnostics = vec![solver.diagnostics(with_lambda)];
    let mut stopping = StoppingFlags::default();
    let update_flags = |stopping: &mut StoppingFlags, d: &StepDiagnostics| {
        if let Some(n) = config.stop_radius {
            if stopping.radius_time.is_none() && d.sup_norm >= n {
                stopping.radius_time = Some(d.t);
            }
        }
        if let (Some(r), Some(l)) = (config.stop_lambda, d.min_lambda) {
            if stopping.lambda_time.is_none() && l <= r {
                stopping.lambda_time = Some(d.t);
            }
        }
    };
    update_flags(&mut stopping, &diagnostics[0]);
    let mut blow_up = None;
    for m in 1..=n_steps {
        solver.step(dt);
        if m == n_steps {
            // Land exactly on t_end regardless of accumulated rounding.
            solver.t = config.t_end;
        }
        let d = solver.diagnostics(with_lambda);
        let exploded = !solver.is_finite() || !d.sup_norm.is_finite() || d.sup_norm > config.blow_up_threshold;
        update_flags(&mut stopping, &d);
        diagnostics.push(d);
        let record = exploded || m == n_steps || (config.record_every > 0 && m % config.record_every == 0);
        if record {
            times.push(solver.t);
            values.extend_from_slice(solver.grid_values());
        }
        if exploded {
            blow_up = Some(solver.t);
            break;
        }
    }
    let sites: Vec<TorusPoint> = spectral::uniform_grid(j).into_iter().map(TorusPoint::new).collect();
    let traj = Trajectory {
        field: FieldSample {
            times,
            sites,
            p,
            values,
            seed: config.seed,
            replica: config.replica,
            n_modes: j / 2,
            tail_variance_bound: tail_variance_bound(j / 2),
        },
        diagnostics,
        stopping,
        dt_used: dt,
        scheme: config.scheme,
        blow_up,
    };
    match blow_up {
        Some(t) => Err(SolverError::BlowUp { t, partial: Box::new(traj) }),
        None => Ok(traj),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian_field::SpectralState;
    use crate::spde::coefficients::{DiffusionSpec, DriftSpec};

    fn cfg(p: usize, j: usize, dt: f64, t_end: f64) -> SolverConfig {
        SolverConfig {
            p,
            n_sites: j,
            dt,
            t_end,
            ..SolverConfig::default()
        }
    }

    #[test]
    fn constants_are_fixed_points() {
        let coeffs = Coefficients::from_specs(2, &DriftSpec::Zero, &DiffusionSpec::Zero);
        for scheme in [Scheme::SemiImplicit, Scheme::ExponentialIntegrator] {
            let c = SolverConfig {
                initial: InitialData::Constant { value: vec![0.7, -1.3] },
                scheme,
                record_every: 1,
                ..cfg(2, 32, 1e-3, 0.05)
            };
            let tr = solve(&c, &coeffs).unwrap();
            assert_eq!(tr.field.times.len(), 51);
            for ti in 0..tr.field.times.len() {
                for si in 0..32 {
                    assert_eq!(tr.field.point(ti, si), &[0.7, -1.3]);
                }
            }
        }
    }

    #[test]
    fn linear_decay_ode() {
        let coeffs = Coefficients::from_specs(1, &DriftSpec::Linear { rate: -1.0 }, &DiffusionSpec::Zero);
        for (scheme, dt) in [(Scheme::SemiImplicit, 1e-3), (Scheme::ExponentialIntegrator, 1e-3)] {
            let c = SolverConfig {
                initial: InitialData::Constant { value: vec![1.0] },
                scheme,
                ..cfg(1, 16, dt, 1.0)
            };
            let tr = solve(&c, &coeffs).unwrap();
            let last = tr.field.times.len() - 1;
            let want = (-1.0f64).exp();
            for si in 0..16 {
                let err = (tr.field.get(last, si, 0) - want).abs();
                assert!(err < 2.0 * dt, "{scheme:?}: err {err}");
            }
        }
    }

    #[test]
    fn cosine_initial_data_decays_by_heat_multiplier() {
        let coeffs = Coefficients::from_specs(1, &DriftSpec::Zero, &DiffusionSpec::Zero);
        let c = SolverConfig {
            initial: InitialData::Cosine { amplitude: vec![2.0], frequency: 3 },
            ..cfg(1, 64, 1e-3, 0.01)
        };
        let tr = solve(&c, &coeffs).unwrap();
        let decay = (-9.0 * PI * PI * 0.01f64).exp();
        for (si, x) in spectral::uniform_grid(64).iter().enumerate() {
            let want = 2.0 * decay * (3.0 * PI * x).cos();
            assert!((tr.field.get(1, si, 0) - want).abs() < 1e-12);
        }
    }

    #[test]
    fn exponential_integrator_matches_exact_sampler_pathwise() {
        let j = 32;
        let coeffs = Coefficients::additive(2);
        let c = SolverConfig {
            scheme: Scheme::ExponentialIntegrator,
            seed: 11,
            replica: 3,
            ..cfg(2, j, 0.01, 0.1)
        };
        let mut solver = Solver::new(&c, &coeffs).unwrap();
        let mut exact = SpectralState::new(j / 2 - 1, 2, 11, 3);
        for _ in 0..10 {
            solver.step(0.01);
            exact.evolve(0.01);
        }
        for coord in 0..2 {
            let a = solver.coeffs(coord);
            let b = exact.coeffs(coord);
            for k in 0..j - 1 {
                assert!((a[k] - b[k]).abs() < 1e-12, "slot {k}: {} vs {}", a[k], b[k]);
            }
        }
    }

    #[test]
    fn diffusion_scaling_is_pathwise_linear() {
        let base = SolverConfig {
            scheme: Scheme::ExponentialIntegrator,
            seed: 5,
            ..cfg(2, 64, 1e-3, 0.02)
        };
        let h = solve(&base, &Coefficients::additive(2)).unwrap();
        let scaled = Coefficients::from_specs(2, &DriftSpec::Zero, &DiffusionSpec::Constant { scale: 0.5 });
        let u = solve(&base, &scaled).unwrap();
        let last = h.field.times.len() - 1;
        for (a, b) in u.field.frame(last).iter().zip(h.field.frame(last)) {
            assert!((a - 0.5 * b).abs() < 1e-13);
        }
    }

    #[test]
    fn general_path_agrees_with_constant_fast_path() {
        // Same σ ≡ I routed through the grid evaluation path.
        let mut general = Coefficients::additive(2);
        general.constant_diffusion = None;
        let base = SolverConfig {
            seed: 9,
            ..cfg(2, 32, 1e-3, 0.01)
        };
        let a = solve(&base, &Coefficients::additive(2)).unwrap();
        let b = solve(&base, &general).unwrap();
        for (x, y) in a.field.values.iter().zip(&b.field.values) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn blow_up_is_flagged() {
        let coeffs = Coefficients::from_specs(1, &DriftSpec::Linear { rate: 2000.0 }, &DiffusionSpec::Zero);
        let c = SolverConfig {
            initial: InitialData::Constant { value: vec![1.0] },
            blow_up_threshold: 1e6,
            ..cfg(1, 8, 0.01, 1.0)
        };
        match solve(&c, &coeffs) {
            Err(SolverError::BlowUp { t, partial }) => {
                assert!(t < 1.0);
                assert_eq!(partial.blow_up, Some(t));
            }
            other => panic!("expected blow-up, got {other:?}"),
        }
    }

    #[test]
    fn stopping_flags_fire_on_first_crossing() {
        let coeffs = Coefficients::from_specs(1, &DriftSpec::Linear { rate: 1.0 }, &DiffusionSpec::DiagFirst);
        let c = SolverConfig {
            initial: InitialData::Constant { value: vec![1.0] },
            stop_radius: Some(1.5),
            stop_lambda: Some(0.5),
            noise_modes: Some(0),
            ..cfg(1, 8, 0.01, 1.0)
        };
        let tr = solve(&c, &coeffs).unwrap();
        let first = tr.diagnostics.iter().find(|d| d.sup_norm >= 1.5).map(|d| d.t);
        assert_eq!(tr.stopping.radius_time, first);
        let first_l = tr.diagnostics.iter().find(|d| d.min_lambda.unwrap() <= 0.5).map(|d| d.t);
        assert_eq!(tr.stopping.lambda_time, first_l);
        assert!(tr.stopping.stopping_time().is_some());
    }

    #[test]
    fn invalid_configs_rejected() {
        let coeffs = Coefficients::additive(1);
        assert!(solve(&cfg(1, 6, 1e-3, 0.1), &coeffs).is_ok());
        assert!(solve(&cfg(1, 5, 1e-3, 0.1), &coeffs).is_err());
        assert!(solve(&cfg(1, 8, 0.0, 0.1), &coeffs).is_err());
        assert!(solve(&cfg(2, 8, 1e-3, 0.1), &coeffs).is_err());
    }
}
