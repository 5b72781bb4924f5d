//! Monte-Carlo transition matrices from simulated channel uses.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{EvaluationMethod, TransitionMatrix};
use crate::channel::{sample_channel, ChannelParams};
use crate::constellation::RingLayout;
use crate::detection::Detector;
use crate::error::{Error, Result};

/// Smallest accepted sample count per transmitted symbol.
pub const MIN_SAMPLES_PER_SYMBOL: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    pub samples_per_symbol: usize,
    pub seed: u64,
    /// Independent RNG streams per symbol.
    pub shards: usize,
}

impl Default for McConfig {
    fn default() -> Self {
        McConfig {
            samples_per_symbol: 100_000,
            seed: 1,
            shards: 8,
        }
    }
}

/// Stream id of shard `s` for symbol `i`; distinct for every pair.
pub fn stream_id(symbol: usize, shard: usize) -> u64 {
    ((symbol as u64) << 20) | shard as u64
}

/// Empirical decision counts of `detector` over channel samples.
pub fn transition_matrix_mc(
    layout: &RingLayout,
    detector: &dyn Detector,
    params: &ChannelParams,
    cfg: &McConfig,
) -> Result<TransitionMatrix> {
    if cfg.samples_per_symbol < MIN_SAMPLES_PER_SYMBOL {
        return Err(Error::InsufficientSamples(format!(
            "{} samples per symbol (< {MIN_SAMPLES_PER_SYMBOL})",
            cfg.samples_per_symbol
        )));
    }
    let m = layout.order();
    let shards = cfg.shards.max(1);
    let jobs: Vec<(usize, usize)> = (0..m).flat_map(|i| (0..shards).map(move |s| (i, s))).collect();
    let counts: Vec<(usize, Vec<u64>)> = jobs
        .par_iter()
        .map(|&(i, s)| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(stream_id(i, s));
            let n = cfg.samples_per_symbol / shards + usize::from(s < cfg.samples_per_symbol % shards);
            let x = layout.symbols[i];
            let mut c = vec![0u64; m];
            for _ in 0..n {
                let y = sample_channel(x, params, &mut rng).y;
                c[detector.detect(y)] += 1;
            }
            (i, c)
        })
        .collect();
    let mut totals = vec![0u64; m * m];
    for (i, c) in counts {
        for (j, v) in c.into_iter().enumerate() {
            totals[i * m + j] += v;
        }
    }
    let n = cfg.samples_per_symbol as f64;
    let probs = totals.into_iter().map(|c| c as f64 / n).collect();
    TransitionMatrix::new(m, probs, EvaluationMethod::MonteCarlo, cfg.samples_per_symbol)
}

/// Wilson score interval for `successes` out of `n` at normal quantile `z`.
pub fn wilson_interval(successes: u64, n: u64, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let nf = n as f64;
    let p = successes as f64 / nf;
    let z2 = z * z;
    let denom = 1.0 + z2 / nf;
    let centre = (p + z2 / (2.0 * nf)) / denom;
    let half = z * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::model::{exact_models, ModelGrid};
    use crate::channel::dbm_to_watts;
    use crate::constellation::ApskSpec;
    use crate::detection::{map_thresholds, TwoStageDetector};

    #[test]
    fn wilson_interval_brackets_estimate() {
        let (lo, hi) = wilson_interval(30, 1000, 1.96);
        assert!(lo < 0.03 && 0.03 < hi);
        let (lo, hi) = wilson_interval(0, 1000, 1.96);
        assert_eq!(lo, 0.0);
        assert!(hi > 0.0 && hi < 0.01);
    }

    #[test]
    fn high_snr_linear_channel_is_nearly_identity() {
        let params = ChannelParams::new(100.0, 10).unwrap().linear();
        let spec = ApskSpec::uniform(&[4], dbm_to_watts(-5.0)).unwrap();
        let layout = spec.layout();
        let t = map_thresholds(&layout, params.noise_variance()).unwrap();
        let models = exact_models(&layout.radii(), &params, &ModelGrid::default()).unwrap();
        let det = TwoStageDetector::new(layout.clone(), t, models).unwrap();
        let cfg = McConfig {
            samples_per_symbol: 10_000,
            seed: 3,
            shards: 2,
        };
        let tm = transition_matrix_mc(&layout, &det, &params, &cfg).unwrap();
        assert_eq!(tm.row_sum_deviation() < 1e-12, true);
        for i in 0..4 {
            assert_eq!(tm.get(i, i), 1.0);
        }
    }

    #[test]
    fn rejects_small_sample_counts() {
        let params = ChannelParams::new(100.0, 10).unwrap();
        let spec = ApskSpec::uniform(&[2], 1e-3).unwrap();
        let layout = spec.layout();
        let t = map_thresholds(&layout, params.noise_variance()).unwrap();
        let models = exact_models(&layout.radii(), &params, &ModelGrid::default()).unwrap();
        let det = TwoStageDetector::new(layout.clone(), t, models).unwrap();
        let cfg = McConfig {
            samples_per_symbol: 100,
            ..McConfig::default()
        };
        assert!(matches!(
            transition_matrix_mc(&layout, &det, &params, &cfg),
            Err(Error::InsufficientSamples(_))
        ));
    }
}
