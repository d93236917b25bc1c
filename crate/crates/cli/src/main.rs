use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use she_cli::config::ExperimentConfig;
use she_cli::experiments::{default_out, execute};
use she_cli::manifest::{build_report, read_manifests};
use she_cli::{exit, CliError};

#[derive(Parser)]
#[command(name = "she", version, about = "Stochastic heat equation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags with a config-file equivalent; flags win.
#[derive(Args, Clone, Default)]
struct Overrides {
    /// Master seed (`seed`).
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (`out`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Replica count (`n_replicas`).
    #[arg(long)]
    replicas: Option<usize>,
    /// Worker threads, 0 for all cores (`threads`).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args, Clone, Default)]
struct Common {
    /// Experiment config (TOML); defaults are used without one.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Subcommand)]
enum Command {
    /// Image sum vs Fourier series of the heat kernel.
    Kernel(Common),
    /// Variance of H by series and by quadrature.
    Variance(Common),
    /// Covariance of H against distance.
    Covariance(Common),
    /// Exact spectral sample of H on a grid.
    SampleH(Common),
    /// Conditional-variance ratios over random configurations.
    Slnd(Common),
    /// One solver trajectory.
    Solve(Common),
    /// Linearization error scan.
    Linearize(Common),
    /// Increment moments and the moment bound.
    Moments(Common),
    /// Box-counting dimension of an image set.
    Dimension(Common),
    /// Lattice hit counts.
    Counts(Common),
    /// Run the experiment named in a config file.
    Run {
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Summarize run manifests.
    Report {
        manifests: Vec<PathBuf>,
        /// Directory for `report.csv` and `report_checks.csv`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn resolve(experiment: Option<&str>, config: Option<&PathBuf>, o: &Overrides) -> Result<ExperimentConfig, CliError> {
    let mut cfg = match config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::new(experiment.expect("subcommands name their experiment")),
    };
    if let Some(name) = experiment {
        if cfg.experiment != name {
            return Err(CliError::ConfigParse(format!(
                "config is for experiment `{}`, not `{name}`",
                cfg.experiment
            )));
        }
    }
    if let Some(s) = o.seed {
        cfg.seed = s;
    }
    if let Some(out) = &o.out {
        cfg.out = Some(out.clone());
    }
    if let Some(r) = o.replicas {
        cfg.n_replicas = Some(r);
    }
    if let Some(t) = o.threads {
        cfg.threads = t;
    }
    Ok(cfg)
}

fn run_config(cfg: ExperimentConfig) -> Result<i32, CliError> {
    let out = cfg.out.clone().unwrap_or_else(|| default_out(&cfg.experiment));
    let manifest = execute(&cfg, &out)?;
    for c in &manifest.checks {
        println!(
            "{} {} = {} (target {})",
            if c.passed { "ok  " } else { "FAIL" },
            c.name,
            she_cli::output::fmt_f64(c.measured),
            c.target
        );
    }
    println!(
        "{} {} -> {} ({:.2} s)",
        if manifest.passed { "PASS" } else { "FAIL" },
        manifest.experiment,
        out.join("manifest.ndjson").display(),
        manifest.wall_time_secs
    );
    Ok(if manifest.passed { exit::PASS } else { exit::ASSERTION_FAILED })
}

fn report(paths: &[PathBuf], out: Option<&PathBuf>) -> Result<i32, CliError> {
    let mut manifests = Vec::new();
    for p in paths {
        manifests.extend(read_manifests(p)?);
    }
    let r = build_report(manifests)?;
    if let Some(dir) = out {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
        for (name, body) in [("report.csv", &r.summary_csv), ("report_checks.csv", &r.checks_csv)] {
            let path = dir.join(name);
            std::fs::write(&path, body).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        }
    } else {
        print!("{}", r.summary_csv);
    }
    print!("{}", r.text);
    Ok(if r.all_passed { exit::PASS } else { exit::ASSERTION_FAILED })
}

fn dispatch(cli: Cli) -> Result<i32, CliError> {
    let (name, common) = match cli.command {
        Command::Run { config, overrides } => return run_config(resolve(None, Some(&config), &overrides)?),
        Command::Report { manifests, out } => return report(&manifests, out.as_ref()),
        Command::Kernel(c) => ("kernel", c),
        Command::Variance(c) => ("variance", c),
        Command::Covariance(c) => ("covariance", c),
        Command::SampleH(c) => ("sample-h", c),
        Command::Slnd(c) => ("slnd", c),
        Command::Solve(c) => ("solve", c),
        Command::Linearize(c) => ("linearize", c),
        Command::Moments(c) => ("moments", c),
        Command::Dimension(c) => ("dimension", c),
        Command::Counts(c) => ("counts", c),
    };
    run_config(resolve(Some(name), common.config.as_ref(), &common.overrides)?)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit::ERROR as u8)
        }
    }
}
