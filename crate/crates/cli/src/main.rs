mod config;
mod experiments;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::Parser;
use log::error;
use serde::Serialize;

use config::{DetectorKind, Experiment, RunConfig};

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] apsk_nlpn::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl RunError {
    fn exit_code(&self) -> u8 {
        match self {
            RunError::Config(_) => 2,
            RunError::Core(apsk_nlpn::Error::Io(_)) | RunError::Io(_) | RunError::Csv(_) => 1,
            RunError::Core(_) => 3,
        }
    }
}

/// Runs one experiment and writes its CSV tables plus `manifest.json`.
#[derive(Debug, Parser)]
#[command(name = "apsk", version, about)]
struct Args {
    /// JSON configuration file; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    experiment: Option<Experiment>,
    /// Constellation order.
    #[arg(long = "M")]
    m: Option<usize>,
    /// Fiber length in km.
    #[arg(long = "L-km")]
    length_km: Option<f64>,
    /// Number of amplified spans.
    #[arg(long = "N")]
    spans: Option<usize>,
    #[arg(long, allow_negative_numbers = true)]
    pmin_dbm: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pmax_dbm: Option<f64>,
    #[arg(long)]
    pstep_db: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    detector: Option<DetectorKind>,
    /// Restrict partition sweeps to uniform radii (`true` or `false`).
    #[arg(long)]
    uniform_only: Option<bool>,
    #[arg(long)]
    max_rings: Option<usize>,
    /// Worker thread cap.
    #[arg(long)]
    threads: Option<usize>,
}

impl Args {
    fn resolve(&self) -> Result<RunConfig, RunError> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::from_file(path)?,
            None => RunConfig::default(),
        };
        if let Some(v) = self.experiment {
            cfg.experiment = v;
        }
        if let Some(v) = self.m {
            cfg.m = v;
        }
        if let Some(v) = self.length_km {
            cfg.length_km = v;
        }
        if let Some(v) = self.spans {
            cfg.spans = v;
        }
        if let Some(v) = self.pmin_dbm {
            cfg.pmin_dbm = v;
        }
        if let Some(v) = self.pmax_dbm {
            cfg.pmax_dbm = v;
        }
        if let Some(v) = self.pstep_db {
            cfg.pstep_db = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = &self.out {
            cfg.out = v.clone();
        }
        if let Some(v) = self.detector {
            cfg.detector = v;
        }
        if let Some(v) = self.uniform_only {
            cfg.uniform_only = v;
        }
        if self.max_rings.is_some() {
            cfg.max_rings = self.max_rings;
        }
        if self.threads.is_some() {
            cfg.threads = self.threads;
        }
        Ok(cfg)
    }
}

#[derive(Debug, Serialize)]
struct Versions {
    apsk_cli: &'static str,
    apsk_nlpn: &'static str,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    schema_version: u32,
    status: &'static str,
    error: Option<String>,
    config: &'a RunConfig,
    seed: u64,
    versions: Versions,
    started_unix_s: u64,
    wall_time_s: f64,
    outputs: Vec<String>,
}

fn write_manifest(dir: &Path, manifest: &Manifest) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    let text = serde_json::to_string_pretty(manifest).map_err(std::io::Error::other)?;
    std::fs::write(dir.join("manifest.json"), text + "\n")
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args = Args::parse();
    let cfg = match args.resolve().and_then(|c| c.validate().map(|_| c)) {
        Ok(c) => c,
        Err(e) => {
            error!("{e}");
            return ExitCode::from(e.exit_code());
        }
    };
    if let Some(n) = cfg.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            error!("cannot size the worker pool: {e}");
        }
    }
    let started = Instant::now();
    let started_unix_s = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let result = experiments::run(&cfg);
    let (status, err, outputs, code) = match &result {
        Ok(paths) => ("ok", None, paths.clone(), 0),
        Err(e) => ("failed", Some(e.to_string()), Vec::new(), e.exit_code()),
    };
    let manifest = Manifest {
        schema_version: MANIFEST_SCHEMA_VERSION,
        status,
        error: err,
        config: &cfg,
        seed: cfg.seed,
        versions: Versions {
            apsk_cli: env!("CARGO_PKG_VERSION"),
            apsk_nlpn: apsk_nlpn::VERSION,
        },
        started_unix_s,
        wall_time_s: started.elapsed().as_secs_f64(),
        outputs: outputs
            .iter()
            .filter_map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
            .collect(),
    };
    if let Err(e) = write_manifest(&cfg.out, &manifest) {
        error!("cannot write manifest: {e}");
        return ExitCode::from(1);
    }
    if let Err(e) = &result {
        error!("{e}");
    }
    ExitCode::from(code)
}
