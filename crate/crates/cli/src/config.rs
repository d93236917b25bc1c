//! Experiment configuration files (TOML, schema version 1).
//!
//! ```toml
//! schema_version = 1
//! experiment = "kernel"
//! seed = 7
//! n_replicas = 100        # optional
//! threads = 0             # 0: all cores
//! out = "runs/kernel"     # optional
//!
//! [tolerances]
//! max_abs_diff = 1e-10
//!
//! [params]
//! r_min = 1e-3
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use she_core::fractal::experiments::{FieldSource, ImageKind, SpatialSet};
use she_core::spde::{DiffusionSpec, DriftSpec, InitialData, NoiseKind, Scheme};
use she_core::stats;

use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

pub const EXPERIMENTS: [&str; 10] = [
    "kernel",
    "variance",
    "covariance",
    "sample-h",
    "slnd",
    "solve",
    "linearize",
    "moments",
    "dimension",
    "counts",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub experiment: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_replicas: Option<usize>,
    #[serde(default)]
    pub threads: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub tolerances: BTreeMap<String, f64>,
    #[serde(default)]
    pub params: toml::Table,
}

impl ExperimentConfig {
    pub fn new(experiment: &str) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            experiment: experiment.into(),
            seed: 0,
            n_replicas: None,
            threads: 0,
            out: None,
            tolerances: BTreeMap::new(),
            params: toml::Table::new(),
        }
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: Self = toml::from_str(text).map_err(|e| CliError::ConfigParse(e.to_string()))?;
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(CliError::ConfigParse(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                cfg.schema_version
            )));
        }
        if !EXPERIMENTS.contains(&cfg.experiment.as_str()) {
            return Err(CliError::UnknownExperiment(cfg.experiment));
        }
        cfg.check_params()?;
        Ok(cfg)
    }

    /// Parses `[params]` into the experiment's parameter type.
    fn check_params(&self) -> Result<(), CliError> {
        match self.experiment.as_str() {
            "kernel" => self.params::<KernelParams>().map(drop),
            "variance" => self.params::<VarianceParams>().map(drop),
            "covariance" => self.params::<CovarianceParams>().map(drop),
            "sample-h" => self.params::<SampleHParams>().map(drop),
            "slnd" => self.params::<SlndParams>().map(drop),
            "solve" => self.params::<SolveParams>().map(drop),
            "linearize" => self.params::<LinearizeParams>().map(drop),
            "moments" => self.params::<MomentsParams>().map(drop),
            "dimension" => self.params::<DimensionParams>().map(drop),
            "counts" => self.params::<CountsParams>().map(drop),
            other => Err(CliError::UnknownExperiment(other.into())),
        }
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::ConfigParse(m) => CliError::ConfigParse(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configs serialize")
    }

    /// The config without `out` and `threads`, which do not affect results.
    pub fn canonical(&self) -> Self {
        Self {
            out: None,
            threads: 0,
            ..self.clone()
        }
    }

    /// SHA-256 of the canonical serialization, hex encoded.
    pub fn hash(&self) -> String {
        Sha256::digest(self.canonical().to_toml().as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    /// Typed parameters; unknown keys are rejected with their name.
    pub fn params<T: DeserializeOwned>(&self) -> Result<T, CliError> {
        toml::Value::Table(self.params.clone())
            .try_into()
            .map_err(|e: toml::de::Error| CliError::ConfigParse(format!("[params] of {}: {e}", self.experiment)))
    }

    pub fn tolerance(&self, name: &str, default: f64) -> f64 {
        self.tolerances.get(name).copied().unwrap_or(default)
    }

    pub fn replicas(&self, default: usize) -> usize {
        self.n_replicas.unwrap_or(default)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KernelParams {
    pub r_min: f64,
    pub r_max: f64,
    pub n_samples: usize,
}

impl Default for KernelParams {
    fn default() -> Self {
        Self {
            r_min: 1e-3,
            r_max: 10.0,
            n_samples: 1000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VarianceParams {
    pub t_min: f64,
    pub t_max: f64,
    pub n_t: usize,
    pub small_t: f64,
}

impl Default for VarianceParams {
    fn default() -> Self {
        Self {
            t_min: 1e-4,
            t_max: 10.0,
            n_t: 40,
            small_t: 1e-6,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CovarianceParams {
    pub t: f64,
    pub s: f64,
    pub n_dist: usize,
    /// Also tabulate the covariance of the sampler with this many modes.
    pub n_modes: Option<usize>,
}

impl Default for CovarianceParams {
    fn default() -> Self {
        Self {
            t: 0.5,
            s: 0.5,
            n_dist: 41,
            n_modes: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SampleHParams {
    pub times: Vec<f64>,
    pub n_sites: usize,
    pub p: usize,
    /// Defaults to half the grid size.
    pub n_modes: Option<usize>,
    pub replica: u64,
}

impl Default for SampleHParams {
    fn default() -> Self {
        Self {
            times: vec![0.25, 0.5, 1.0],
            n_sites: 256,
            p: 1,
            n_modes: None,
            replica: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SlndParams {
    pub t_max: f64,
    pub m_max: usize,
    pub n_configs: usize,
    pub min_separation: f64,
    /// Covariance of the sampler with this many modes; the full series when
    /// unset.
    pub n_modes: Option<usize>,
}

impl Default for SlndParams {
    fn default() -> Self {
        Self {
            t_max: 1.0,
            m_max: 8,
            n_configs: 200,
            min_separation: 1e-3,
            n_modes: None,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveParams {
    pub p: usize,
    pub n_sites: usize,
    pub dt: f64,
    pub t_end: f64,
    pub scheme: Scheme,
    pub noise: NoiseKind,
    pub drift: DriftSpec,
    pub diffusion: DiffusionSpec,
    pub initial: InitialData,
    pub record_every: usize,
    pub stop_radius: Option<f64>,
    pub stop_lambda: Option<f64>,
    pub replica: u64,
}

impl Default for SolveParams {
    fn default() -> Self {
        Self {
            p: 1,
            n_sites: 256,
            dt: 1e-4,
            t_end: 0.1,
            scheme: Scheme::SemiImplicit,
            noise: NoiseKind::Spectral,
            drift: DriftSpec::Zero,
            diffusion: DiffusionSpec::Identity,
            initial: InitialData::Zero,
            record_every: 0,
            stop_radius: None,
            stop_lambda: None,
            replica: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinearizeParams {
    pub p: usize,
    pub t_min: f64,
    pub t_max: f64,
    pub n_t: usize,
    pub moments: Vec<u32>,
    pub sites_per_sqrt_t: f64,
    pub steps_per_run: usize,
    pub scheme: Scheme,
    pub drift: DriftSpec,
    pub diffusion: DiffusionSpec,
}

impl Default for LinearizeParams {
    fn default() -> Self {
        Self {
            p: 2,
            t_min: 1e-4,
            t_max: 1e-2,
            n_t: 5,
            moments: vec![1, 2, 4],
            sites_per_sqrt_t: 8.0,
            steps_per_run: 64,
            scheme: Scheme::ExponentialIntegrator,
            drift: DriftSpec::Zero,
            diffusion: DiffusionSpec::SinScaled { amp: 0.25 },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MomentsParams {
    pub p: usize,
    pub n_sites: usize,
    pub t: f64,
    pub dt: f64,
    pub scheme: Scheme,
    pub drift: DriftSpec,
    pub diffusion: DiffusionSpec,
    pub time_lags: Vec<f64>,
    pub n_space_lags: usize,
    /// Orders of the moment bound check at `(t, -1)`; needs `b ≡ 0` and a
    /// bounded `σ`, skipped otherwise.
    pub bdg_ks: Vec<u32>,
}

impl Default for MomentsParams {
    fn default() -> Self {
        Self {
            p: 2,
            n_sites: 1024,
            t: 0.5,
            dt: 1e-3,
            scheme: Scheme::ExponentialIntegrator,
            drift: DriftSpec::Zero,
            diffusion: DiffusionSpec::Identity,
            time_lags: stats::logspace(1e-5, 1e-2, 8),
            n_space_lags: 8,
            bdg_ks: vec![2, 4, 8],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DimensionParams {
    pub kind: ImageKind,
    pub p: usize,
    /// Simulation grid size; for Cantor and interval sets with the additive
    /// source it also fixes the mode count `J/2` of the direct evaluation.
    pub n_sites: usize,
    pub source: FieldSource,
    pub window: Option<(u32, u32)>,
}

impl Default for DimensionParams {
    fn default() -> Self {
        Self {
            kind: ImageKind::FixedTimeSpatial {
                t: 0.5,
                set: SpatialSet::Torus,
            },
            p: 2,
            n_sites: 1 << 18,
            source: FieldSource::Additive { n_modes: None },
            window: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CountsParams {
    pub p: usize,
    pub n_min: u32,
    pub n_max: u32,
    pub delta: f64,
    pub times: Vec<f64>,
    pub n_dense: usize,
    pub n_random: usize,
    pub max_modes: usize,
    pub source: FieldSource,
    pub solver_sites: usize,
}

impl Default for CountsParams {
    fn default() -> Self {
        Self {
            p: 4,
            n_min: 2,
            n_max: 5,
            delta: 0.5,
            times: vec![0.5],
            n_dense: 16,
            n_random: 16,
            max_modes: 1 << 12,
            source: FieldSource::Additive { n_modes: None },
            solver_sites: 1 << 12,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let text = r#"
schema_version = 1
experiment = "dimension"
seed = 7
n_replicas = 3

[tolerances]
slope_min = 1.7

[params]
p = 2
n_sites = 4096
kind = { kind = "fixed-time-spatial", t = 0.5, set = { kind = "cantor", depth = 8, ratio = 0.3333333333333333, lo = -1.0, hi = 1.0 } }
"#;
        let cfg = ExperimentConfig::parse(text).unwrap();
        let again = ExperimentConfig::parse(&cfg.to_toml()).unwrap();
        assert_eq!(cfg, again);
        assert_eq!(cfg.hash(), again.hash());
        let p: DimensionParams = cfg.params().unwrap();
        assert_eq!(p.n_sites, 4096);
        assert!(matches!(p.kind, ImageKind::FixedTimeSpatial { set: SpatialSet::Cantor(_), .. }));
    }

    #[test]
    fn diagnostics_name_the_problem() {
        let e = ExperimentConfig::parse("schema_version = 1\nexperiment = \"kernel\"\nseed = \"x\"\n").unwrap_err();
        assert!(matches!(&e, CliError::ConfigParse(m) if m.contains("line 3")), "{e}");
        let e = ExperimentConfig::parse("schema_version = 1\nexperiment = \"nope\"\n").unwrap_err();
        assert!(matches!(e, CliError::UnknownExperiment(_)));
        let e = ExperimentConfig::parse("schema_version = 2\nexperiment = \"kernel\"\n").unwrap_err();
        assert!(matches!(e, CliError::ConfigParse(_)));
        let e = ExperimentConfig::parse("schema_version = 1\nexperiment = \"kernel\"\n[params]\nr_mni = 1.0\n").unwrap_err();
        assert!(e.to_string().contains("r_mni"), "{e}");
    }

    #[test]
    fn shipped_configs_parse() {
        let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
        let mut n = 0;
        for entry in std::fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.extension().is_some_and(|e| e == "toml") {
                let cfg = ExperimentConfig::load(&path).unwrap_or_else(|e| panic!("{e}"));
                assert_eq!(ExperimentConfig::parse(&cfg.to_toml()).unwrap(), cfg);
                n += 1;
            }
        }
        assert!(n >= 5);
    }
}
