use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use apsk_nlpn::channel::{dbm_to_watts, sample_channel, ChannelParams};
use apsk_nlpn::constellation::{enumerate_partitions, ApskSpec, RingLayout};
use apsk_nlpn::detection::{map_thresholds, MlDetector};
use apsk_nlpn::labeling::{exhaustive_labeling_search, gray_rectangular, proposed_phase_offsets, MAX_EXHAUSTIVE_ORDER};
use apsk_nlpn::metrics::reference::qam16_layout;
use apsk_nlpn::metrics::{bep, sep, sep_standard_error, transition_matrix_mc, transition_matrix_ts, McConfig};
use apsk_nlpn::optimize::{optimize_radii, power_sweep, SepEvaluator, SweepMode};
use log::info;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{DetectorKind, Experiment, RunConfig};
use crate::RunError;

pub fn run(cfg: &RunConfig) -> Result<Vec<PathBuf>, RunError> {
    std::fs::create_dir_all(&cfg.out)?;
    match cfg.experiment {
        Experiment::Scatter => scatter(cfg),
        Experiment::SepSweep => sep_sweep(cfg),
        Experiment::PartitionSweep => {
            let mode = if cfg.uniform_only {
                SweepMode::UniformPartition
            } else {
                SweepMode::Joint
            };
            optimization_sweep(cfg, mode, "partition_sweep.csv")
        }
        Experiment::JointSweep => optimization_sweep(cfg, SweepMode::Joint, "joint_sweep.csv"),
        Experiment::RadiusTrace => radius_trace(cfg),
        Experiment::LabelingStudy => labeling_study(cfg),
    }
}

fn channel(cfg: &RunConfig, length_km: f64) -> Result<ChannelParams, RunError> {
    Ok(ChannelParams::new(length_km, cfg.spans)?)
}

fn writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>, RunError> {
    Ok(csv::Writer::from_writer(BufWriter::new(File::create(path)?)))
}

fn sci(v: f64) -> String {
    format!("{v:e}")
}

fn joined(values: &[f64]) -> String {
    values.iter().map(|&v| sci(v)).collect::<Vec<_>>().join(",")
}

fn dashed(l: &[usize]) -> String {
    l.iter().map(|n| n.to_string()).collect::<Vec<_>>().join("-")
}

fn scatter_layout(cfg: &RunConfig, p: f64) -> Result<RingLayout, RunError> {
    if cfg.m == 16 && cfg.partition.is_none() {
        Ok(qam16_layout(p)?)
    } else {
        Ok(ApskSpec::uniform(&cfg.ring_sizes(), p)?.layout())
    }
}

fn scatter(cfg: &RunConfig) -> Result<Vec<PathBuf>, RunError> {
    let lengths = if cfg.scatter_lengths_km.is_empty() {
        vec![cfg.length_km]
    } else {
        cfg.scatter_lengths_km.clone()
    };
    let mut outputs = Vec::new();
    let mut stream = 0;
    for &km in &lengths {
        let params = channel(cfg, km)?;
        for dbm in cfg.powers_dbm() {
            let layout = scatter_layout(cfg, dbm_to_watts(dbm))?;
            let path = cfg.out.join(format!("scatter_p{dbm}dBm_l{km}km.csv"));
            let mut w = writer(&path)?;
            w.write_record(["symbol", "x_re", "x_im", "y_re", "y_im"])?;
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(stream);
            stream += 1;
            for (i, &x) in layout.symbols.iter().enumerate() {
                for _ in 0..cfg.scatter_samples {
                    let y = sample_channel(x, &params, &mut rng).y;
                    w.write_record([i.to_string(), sci(x.re), sci(x.im), sci(y.re), sci(y.im)])?;
                }
            }
            w.flush()?;
            info!("wrote {}", path.display());
            outputs.push(path);
        }
    }
    Ok(outputs)
}

fn sep_sweep(cfg: &RunConfig) -> Result<Vec<PathBuf>, RunError> {
    let params = channel(cfg, cfg.length_km)?;
    let partitions: Vec<Vec<usize>> = match &cfg.partition {
        Some(l) => vec![l.clone()],
        None => enumerate_partitions(cfg.m, cfg.max_rings)
            .into_iter()
            .filter(|l| l.as_slice() != [1])
            .collect(),
    };
    let evaluator = SepEvaluator::new(&params, cfg.optimizer.grid, cfg.optimizer.quadrature)?;
    let path = cfg.out.join("sep_sweep.csv");
    let mut w = writer(&path)?;
    w.write_record(["P_dBm", "l", "r", "sep", "sep_stderr", "method"])?;
    for dbm in cfg.powers_dbm() {
        let p = dbm_to_watts(dbm);
        for l in &partitions {
            let spec = ApskSpec::uniform(l, p)?;
            let (value, stderr, method) = match cfg.detector {
                DetectorKind::Ts => (evaluator.sep(&spec)?, 0.0, "quadrature"),
                DetectorKind::Ml => {
                    let layout = spec.layout();
                    let ml = MlDetector::new(layout.clone(), evaluator.models(&layout)?)?;
                    let mc = McConfig {
                        samples_per_symbol: cfg.mc_samples_per_symbol,
                        seed: cfg.seed,
                        ..Default::default()
                    };
                    let t = transition_matrix_mc(&layout, &ml, &params, &mc)?;
                    (sep(&t), sep_standard_error(&t), "monte_carlo")
                }
            };
            w.write_record([
                dbm.to_string(),
                dashed(l),
                joined(spec.radii()),
                sci(value),
                sci(stderr),
                method.into(),
            ])?;
        }
        w.flush()?;
        info!("{dbm} dBm done");
    }
    Ok(vec![path])
}

fn optimization_sweep(cfg: &RunConfig, mode: SweepMode, name: &str) -> Result<Vec<PathBuf>, RunError> {
    let params = channel(cfg, cfg.length_km)?;
    let settings = cfg.optimizer_settings();
    let path = cfg.out.join(name);
    let file = BufWriter::new(File::create(&path)?);
    power_sweep(cfg.m, &params, &cfg.powers_dbm(), mode, cfg.max_rings, &settings, file)?;
    Ok(vec![path])
}

fn radius_trace(cfg: &RunConfig) -> Result<Vec<PathBuf>, RunError> {
    let params = channel(cfg, cfg.length_km)?;
    let settings = cfg.optimizer_settings();
    let l = cfg.ring_sizes();
    let path = cfg.out.join("radius_trace.csv");
    let mut w = writer(&path)?;
    w.write_record(["P_dBm", "l", "r_normalized", "r", "sep", "converged"])?;
    for dbm in cfg.powers_dbm() {
        let res = optimize_radii(&l, dbm_to_watts(dbm), &params, &settings)?;
        w.write_record([
            dbm.to_string(),
            dashed(&l),
            joined(&res.spec.normalized_radii()),
            joined(res.spec.radii()),
            sci(res.sep),
            res.converged.to_string(),
        ])?;
        w.flush()?;
        info!("{dbm} dBm: SEP {:e}", res.sep);
    }
    Ok(vec![path])
}

fn labeling_study(cfg: &RunConfig) -> Result<Vec<PathBuf>, RunError> {
    let params = channel(cfg, cfg.length_km)?;
    let settings = cfg.optimizer_settings();
    let l = cfg.ring_sizes();
    let m = cfg.m;
    let bits = m.trailing_zeros() as f64;
    let path = cfg.out.join("labeling_study.csv");
    let mut w = writer(&path)?;
    w.write_record([
        "P_dBm",
        "r",
        "phi",
        "sep",
        "bep_gray_zero_offset",
        "bep_gray_proposed_offset",
        "sep_over_bits",
        "bep_exhaustive",
    ])?;
    let mut gray = None;
    for dbm in cfg.powers_dbm() {
        let res = optimize_radii(&l, dbm_to_watts(dbm), &params, &settings)?;
        let layout = res.spec.layout();
        let thresholds = map_thresholds(&layout, params.noise_variance())?;
        let models = SepEvaluator::new(&params, settings.grid, settings.quadrature)?.models(&layout)?;
        let phi = proposed_phase_offsets(&res.spec, &thresholds, &models)?;
        let turned = res.spec.with_phase_offsets(&phi)?;
        let labels = gray_rectangular(&res.spec)?;
        let plain = transition_matrix_ts(&layout, &thresholds, &models, &settings.quadrature)?;
        let rotated = transition_matrix_ts(&turned.layout(), &thresholds, &models, &settings.quadrature)?;
        let best = if m <= MAX_EXHAUSTIVE_ORDER {
            sci(exhaustive_labeling_search(&rotated)?.1)
        } else {
            String::new()
        };
        w.write_record([
            dbm.to_string(),
            joined(res.spec.radii()),
            joined(&phi),
            sci(sep(&rotated)),
            sci(bep(&plain, &labels)?),
            sci(bep(&rotated, &labels)?),
            sci(sep(&rotated) / bits),
            best,
        ])?;
        w.flush()?;
        gray = Some(labels);
    }
    let mut outputs = vec![path];
    if let Some(labels) = gray {
        let lab_path = cfg.out.join("labeling.csv");
        labels.write_csv(BufWriter::new(File::create(&lab_path)?))?;
        outputs.push(lab_path);
    }
    Ok(outputs)
}
