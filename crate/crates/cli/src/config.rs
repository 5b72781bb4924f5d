use std::path::{Path, PathBuf};

use apsk_nlpn::metrics::montecarlo::MIN_SAMPLES_PER_SYMBOL;
use apsk_nlpn::optimize::OptimizerSettings;
use clap::ValueEnum;
use serde::{Deserialize, Serialize};

use crate::RunError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum Experiment {
    Scatter,
    SepSweep,
    PartitionSweep,
    JointSweep,
    RadiusTrace,
    LabelingStudy,
}

impl Experiment {
    fn optimizes(self) -> bool {
        matches!(
            self,
            Experiment::PartitionSweep | Experiment::JointSweep | Experiment::RadiusTrace | Experiment::LabelingStudy
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum DetectorKind {
    /// Two-stage detector, SEP by quadrature.
    Ts,
    /// Maximum-likelihood detector, SEP by simulation.
    Ml,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub experiment: Experiment,
    pub m: usize,
    pub length_km: f64,
    pub spans: usize,
    pub pmin_dbm: f64,
    pub pmax_dbm: f64,
    pub pstep_db: f64,
    pub seed: u64,
    pub out: PathBuf,
    pub detector: DetectorKind,
    pub uniform_only: bool,
    pub max_rings: Option<usize>,
    pub threads: Option<usize>,
    /// Ring sizes for experiments on a fixed partition.
    pub partition: Option<Vec<usize>>,
    /// Fiber lengths for scatter plots; empty means `length_km` only.
    pub scatter_lengths_km: Vec<f64>,
    pub scatter_samples: usize,
    pub mc_samples_per_symbol: usize,
    pub optimizer: OptimizerSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            experiment: Experiment::SepSweep,
            m: 4,
            length_km: 7000.0,
            spans: apsk_nlpn::channel::DEFAULT_SPANS,
            pmin_dbm: -15.0,
            pmax_dbm: 5.0,
            pstep_db: 0.5,
            seed: 1,
            out: PathBuf::from("out"),
            detector: DetectorKind::Ts,
            uniform_only: true,
            max_rings: None,
            threads: None,
            partition: None,
            scatter_lengths_km: Vec::new(),
            scatter_samples: 2000,
            mc_samples_per_symbol: MIN_SAMPLES_PER_SYMBOL,
            optimizer: OptimizerSettings::default(),
        }
    }
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self, RunError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| RunError::Config(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| RunError::Config(format!("{}: {e}", path.display())))
    }

    /// Powers from `pmin_dbm` to `pmax_dbm` inclusive in `pstep_db` steps.
    pub fn powers_dbm(&self) -> Vec<f64> {
        if !(self.pstep_db > 0.0) || !(self.pmax_dbm >= self.pmin_dbm) || !self.pmin_dbm.is_finite() {
            return Vec::new();
        }
        let n = ((self.pmax_dbm - self.pmin_dbm) / self.pstep_db + 1e-9).floor() as usize + 1;
        (0..n)
            .map(|i| ((self.pmin_dbm + i as f64 * self.pstep_db) * 1e9).round() / 1e9)
            .collect()
    }

    pub fn optimizer_settings(&self) -> OptimizerSettings {
        OptimizerSettings {
            seed: self.seed,
            ..self.optimizer
        }
    }

    /// Ring sizes for fixed-partition experiments.
    pub fn ring_sizes(&self) -> Vec<usize> {
        if let Some(l) = &self.partition {
            return l.clone();
        }
        match self.experiment {
            Experiment::RadiusTrace | Experiment::LabelingStudy if self.m % 4 == 0 && self.m > 4 => {
                vec![4; self.m / 4]
            }
            _ => vec![self.m],
        }
    }

    pub fn validate(&self) -> Result<(), RunError> {
        let bad = |msg: String| Err(RunError::Config(msg));
        if self.powers_dbm().is_empty() {
            return bad(format!(
                "empty power grid: {} to {} dBm in steps of {} dB",
                self.pmin_dbm, self.pmax_dbm, self.pstep_db
            ));
        }
        if !(self.length_km > 0.0) || !self.length_km.is_finite() {
            return bad(format!("fiber length must be positive, got {}", self.length_km));
        }
        if self.spans == 0 {
            return bad("span count must be at least 1".into());
        }
        if self.m == 0 {
            return bad("constellation order must be positive".into());
        }
        if self.experiment.optimizes() && ![2, 4, 8, 16].contains(&self.m) {
            return bad(format!("M = {} is not one of 2, 4, 8, 16", self.m));
        }
        if let Some(l) = &self.partition {
            if l.is_empty() || l.contains(&0) {
                return bad(format!("partition {l:?} has an empty ring"));
            }
            if l.iter().sum::<usize>() != self.m {
                return bad(format!("partition {l:?} does not sum to M = {}", self.m));
            }
            if l.as_slice() == [1] {
                return bad("a lone origin point is not a constellation".into());
            }
        }
        if self.max_rings == Some(0) {
            return bad("max_rings must be at least 1".into());
        }
        if self.threads == Some(0) {
            return bad("threads must be at least 1".into());
        }
        if self.experiment == Experiment::Scatter && self.scatter_samples == 0 {
            return bad("scatter_samples must be positive".into());
        }
        if self.scatter_lengths_km.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
            return bad("scatter lengths must be positive".into());
        }
        if self.detector == DetectorKind::Ml && self.mc_samples_per_symbol < MIN_SAMPLES_PER_SYMBOL {
            return bad(format!(
                "at least {MIN_SAMPLES_PER_SYMBOL} samples per symbol are needed"
            ));
        }
        self.optimizer.validate().map_err(|e| RunError::Config(e.to_string()))?;
        if self.experiment == Experiment::LabelingStudy {
            let l = self.ring_sizes();
            if l.len() < 2 || l.iter().any(|&n| n != l[0]) || !l.len().is_power_of_two() || !l[0].is_power_of_two() {
                return bad(format!("labeling study needs a rectangular partition, got {l:?}"));
            }
        }
        Ok(())
    }
}
