//! On-disk cache of Monte-Carlo harmonics tables.

use std::collections::hash_map::DefaultHasher;
use std::fs;
use std::hash::{Hash, Hasher};
use std::path::{Path, PathBuf};

use log::{debug, warn};
use serde::{Deserialize, Serialize};

use super::harmonics::{estimate_harmonics, EstimatorConfig, PhaseHarmonics};
use crate::channel::ChannelParams;
use crate::error::Result;

/// Bumped whenever the estimator or record layout changes.
pub const CACHE_VERSION: u32 = 1;

/// Everything an estimated table depends on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarmonicsKey {
    pub version: u32,
    pub input_amplitude: f64,
    pub noise_variance: f64,
    pub nonlinear_scale: f64,
    pub params: ChannelParams,
    pub r_grid: Vec<f64>,
    pub config: EstimatorConfig,
    pub seed: u64,
}

impl HarmonicsKey {
    pub fn new(r0: f64, params: &ChannelParams, r_grid: &[f64], config: &EstimatorConfig, seed: u64) -> Self {
        HarmonicsKey {
            version: CACHE_VERSION,
            input_amplitude: r0,
            noise_variance: params.noise_variance(),
            nonlinear_scale: params.nonlinear_scale(),
            params: *params,
            r_grid: r_grid.to_vec(),
            config: *config,
            seed,
        }
    }

    fn file_name(&self) -> String {
        let text = serde_json::to_string(self).unwrap_or_default();
        let mut h = DefaultHasher::new();
        text.hash(&mut h);
        format!("harmonics-{:016x}.json", h.finish())
    }
}

#[derive(Serialize, Deserialize)]
struct Record {
    key: HarmonicsKey,
    harmonics: PhaseHarmonics,
}

/// Directory of JSON records, one per key.
#[derive(Debug, Clone)]
pub struct HarmonicsCache {
    dir: PathBuf,
}

impl HarmonicsCache {
    pub fn new(dir: impl AsRef<Path>) -> Result<Self> {
        fs::create_dir_all(dir.as_ref())?;
        Ok(HarmonicsCache {
            dir: dir.as_ref().to_path_buf(),
        })
    }

    pub fn path_for(&self, key: &HarmonicsKey) -> PathBuf {
        self.dir.join(key.file_name())
    }

    /// Stored table for `key`, if present and recorded under the same key.
    pub fn load(&self, key: &HarmonicsKey) -> Option<PhaseHarmonics> {
        let path = self.path_for(key);
        let text = fs::read_to_string(&path).ok()?;
        match serde_json::from_str::<Record>(&text) {
            Ok(rec) if rec.key == *key => {
                let mut h = rec.harmonics;
                h.build_interpolants();
                Some(h)
            }
            Ok(_) => {
                debug!("stale cache record {}", path.display());
                None
            }
            Err(e) => {
                warn!("unreadable cache record {}: {e}", path.display());
                None
            }
        }
    }

    pub fn store(&self, key: &HarmonicsKey, harmonics: &PhaseHarmonics) -> Result<()> {
        let rec = Record {
            key: key.clone(),
            harmonics: harmonics.clone(),
        };
        let path = self.path_for(key);
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, serde_json::to_vec(&rec)?)?;
        fs::rename(tmp, path)?;
        Ok(())
    }

    /// Loads the table or estimates and stores it.
    pub fn estimate(
        &self,
        r0: f64,
        params: &ChannelParams,
        r_grid: Vec<f64>,
        config: &EstimatorConfig,
        seed: u64,
    ) -> Result<PhaseHarmonics> {
        let key = HarmonicsKey::new(r0, params, &r_grid, config, seed);
        if let Some(h) = self.load(&key) {
            return Ok(h);
        }
        let h = estimate_harmonics(r0, params, r_grid, config, seed)?;
        self.store(&key, &h)?;
        Ok(h)
    }
}
