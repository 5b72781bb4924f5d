//! Constellation optimization under two-stage detection: Nelder–Mead over
//! ring radii, exhaustive partition search and joint search, plus power
//! sweeps.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::io::Write;
use std::sync::{Arc, Mutex};

use log::{debug, info};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytic::exact::SpanKernel;
use crate::analytic::model::{ModelGrid, RingModel};
use crate::channel::{dbm_to_watts, ChannelParams};
use crate::constellation::{build_apsk, enumerate_partitions, uniform_radii, ApskSpec, RingLayout, RADIUS_TOLERANCE};
use crate::detection::map_thresholds;
use crate::error::{Error, Result};
use crate::metrics::reference::{sep_awgn_ml, sep_qam16_ts};
use crate::metrics::{csv_error, first_stage_error, sep_two_stage, QuadratureConfig};

/// SEP values closer than this are treated as equal when ranking partitions.
pub const SEP_TIE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NelderMeadConfig {
    pub reflection: f64,
    pub expansion: f64,
    pub contraction: f64,
    pub shrink: f64,
    /// Stop when `(f_max - f_min) ≤ tolerance · f_min`.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Starting points, the uniform radius vector being the first.
    pub starts: usize,
    /// Half-width of the uniform jitter applied to log-increments.
    pub jitter: f64,
    /// Initial simplex edge in log-increment units.
    pub initial_step: f64,
}

impl NelderMeadConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.reflection > 0.0
            && self.expansion > 1.0
            && self.contraction > 0.0
            && self.contraction < 1.0
            && self.shrink > 0.0
            && self.shrink < 1.0
            && self.tolerance >= 0.0
            && self.max_iterations > 0
            && self.starts > 0
            && self.jitter >= 0.0
            && self.initial_step > 0.0;
        if !ok {
            return Err(Error::InvalidParameter(format!("invalid simplex settings {self:?}")));
        }
        Ok(())
    }
}

impl Default for NelderMeadConfig {
    fn default() -> Self {
        NelderMeadConfig {
            reflection: 1.0,
            expansion: 2.0,
            contraction: 0.5,
            shrink: 0.5,
            tolerance: 1e-4,
            max_iterations: 400,
            starts: 8,
            jitter: 0.5,
            initial_step: 0.25,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerSettings {
    pub nelder_mead: NelderMeadConfig,
    pub grid: ModelGrid,
    pub quadrature: QuadratureConfig,
    /// Amplitude cache step in units of `√P`.
    pub cache_step: f64,
    pub seed: u64,
    /// Joint search only radius-optimizes this many of the best
    /// uniform-radius partitions; `None` optimizes every partition.
    pub shortlist: Option<usize>,
}

impl OptimizerSettings {
    pub fn validate(&self) -> Result<()> {
        self.nelder_mead.validate()?;
        self.grid.validate()?;
        self.quadrature.validate()?;
        if !(self.cache_step > 0.0 && self.cache_step.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "cache step must be positive, got {}",
                self.cache_step
            )));
        }
        if self.shortlist == Some(0) {
            return Err(Error::InvalidParameter(
                "shortlist must keep at least one partition".into(),
            ));
        }
        Ok(())
    }
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        OptimizerSettings {
            nelder_mead: NelderMeadConfig::default(),
            grid: ModelGrid::default(),
            quadrature: QuadratureConfig::default(),
            cache_step: 1e-3,
            seed: 0,
            shortlist: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationResult {
    pub spec: ApskSpec,
    pub sep: f64,
    pub evaluations: usize,
    pub converged: bool,
    pub restarts_used: usize,
}

/// Outcome of one Nelder–Mead run.
#[derive(Debug, Clone)]
pub struct SimplexOutcome {
    pub x: Vec<f64>,
    pub value: f64,
    pub evaluations: usize,
    pub converged: bool,
}

/// Nelder–Mead minimisation; non-finite objective values count as `+∞`.
pub fn nelder_mead<F: FnMut(&[f64]) -> f64>(mut f: F, start: &[f64], cfg: &NelderMeadConfig) -> SimplexOutcome {
    let n = start.len();
    let mut evaluations = 0;
    let mut eval = |x: &[f64]| {
        evaluations += 1;
        let v = f(x);
        if v.is_finite() {
            v
        } else {
            f64::INFINITY
        }
    };
    if n == 0 {
        let value = eval(start);
        return SimplexOutcome {
            x: Vec::new(),
            value,
            evaluations,
            converged: true,
        };
    }
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    simplex.push((start.to_vec(), eval(start)));
    for i in 0..n {
        let mut x = start.to_vec();
        x[i] += cfg.initial_step;
        let v = eval(&x);
        simplex.push((x, v));
    }
    let mut converged = false;
    for _ in 0..cfg.max_iterations {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let (best, worst) = (simplex[0].1, simplex[n].1);
        if worst - best <= cfg.tolerance * best.abs() || worst == best {
            converged = true;
            break;
        }
        let mut centroid = vec![0.0; n];
        for (x, _) in &simplex[..n] {
            for (c, xi) in centroid.iter_mut().zip(x) {
                *c += xi / n as f64;
            }
        }
        let along = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&simplex[n].0)
                .map(|(c, w)| c + t * (c - w))
                .collect()
        };
        let xr = along(cfg.reflection);
        let fr = eval(&xr);
        if fr < simplex[0].1 {
            let xe = along(cfg.reflection * cfg.expansion);
            let fe = eval(&xe);
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
            continue;
        }
        let (xc, fc) = if fr < worst {
            let x = along(cfg.reflection * cfg.contraction);
            let v = eval(&x);
            (x, v)
        } else {
            let x = along(-cfg.contraction);
            let v = eval(&x);
            (x, v)
        };
        if fc < fr.min(worst) {
            simplex[n] = (xc, fc);
            continue;
        }
        let anchor = simplex[0].0.clone();
        for entry in simplex.iter_mut().skip(1) {
            let x: Vec<f64> = anchor
                .iter()
                .zip(&entry.0)
                .map(|(a, x)| a + cfg.shrink * (x - a))
                .collect();
            let v = eval(&x);
            *entry = (x, v);
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (x, value) = simplex.swap_remove(0);
    SimplexOutcome {
        x,
        value,
        evaluations,
        converged,
    }
}

/// Number of free radius parameters: `K - 1`, or `K - 2` with a point at
/// the origin.
pub fn free_dimension(l: &[usize]) -> usize {
    let k = l.len();
    if l.first() == Some(&1) {
        k.saturating_sub(2)
    } else {
        k.saturating_sub(1)
    }
}

/// Radii from log-increments relative to the first nonzero radius,
/// projected onto average power `p`.
pub fn radii_from_increments(l: &[usize], x: &[f64], p: f64) -> Vec<f64> {
    let origin = l[0] == 1;
    let mut r = Vec::with_capacity(l.len());
    let mut acc = 0.0;
    if origin {
        r.push(0.0);
    }
    acc += 1.0;
    r.push(acc);
    for xi in x {
        acc += xi.exp();
        r.push(acc);
    }
    let m: usize = l.iter().sum();
    let power: f64 = l.iter().zip(&r).map(|(&n, &ri)| n as f64 * ri * ri).sum::<f64>() / m as f64;
    let scale = (p / power).sqrt();
    r.iter().map(|ri| ri * scale).collect()
}

/// Inverse of [`radii_from_increments`] up to the power scale.
pub fn increments_from_radii(l: &[usize], r: &[f64]) -> Vec<f64> {
    let first = if l[0] == 1 { 1 } else { 0 };
    let base = r[first] - if first == 1 { r[0] } else { 0.0 };
    (first + 1..r.len()).map(|k| ((r[k] - r[k - 1]) / base).ln()).collect()
}

/// Ring models keyed by amplitude snapped to a fixed grid.
#[derive(Debug)]
pub struct ModelCache {
    kernel: Arc<SpanKernel>,
    grid: ModelGrid,
    step: f64,
    models: Mutex<HashMap<i64, Arc<RingModel>>>,
}

impl ModelCache {
    pub fn new(kernel: Arc<SpanKernel>, grid: ModelGrid, step: f64) -> Self {
        ModelCache {
            kernel,
            grid,
            step,
            models: Mutex::new(HashMap::new()),
        }
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn snap(&self, r: f64) -> f64 {
        (r / self.step).round() * self.step
    }

    pub fn len(&self) -> usize {
        self.models.lock().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Model for the snapped amplitude of `r`.
    pub fn get(&self, r: f64) -> Result<Arc<RingModel>> {
        let key = (r / self.step).round() as i64;
        if let Some(m) = self.models.lock().expect("cache lock").get(&key) {
            return Ok(m.clone());
        }
        let model = Arc::new(RingModel::exact(
            self.kernel.clone(),
            key as f64 * self.step,
            &self.grid,
        )?);
        self.models
            .lock()
            .expect("cache lock")
            .entry(key)
            .or_insert_with(|| model.clone());
        Ok(model)
    }
}

/// Evaluates TS SEP of constellations on one channel.
#[derive(Debug, Clone)]
pub struct SepEvaluator {
    params: ChannelParams,
    kernel: Arc<SpanKernel>,
    grid: ModelGrid,
    quadrature: QuadratureConfig,
}

impl SepEvaluator {
    pub fn new(params: &ChannelParams, grid: ModelGrid, quadrature: QuadratureConfig) -> Result<Self> {
        grid.validate()?;
        quadrature.validate()?;
        Ok(SepEvaluator {
            params: params.clone(),
            kernel: SpanKernel::new(params)?,
            grid,
            quadrature,
        })
    }

    pub fn params(&self) -> &ChannelParams {
        &self.params
    }

    pub fn kernel(&self) -> &Arc<SpanKernel> {
        &self.kernel
    }

    /// Ring models at the exact radii of `layout`.
    pub fn models(&self, layout: &RingLayout) -> Result<Vec<Arc<RingModel>>> {
        layout
            .radii()
            .par_iter()
            .map(|&r| {
                RingModel::exact(self.kernel.clone(), r, &self.grid)
                    .map(Arc::new)
                    .map_err(|e| Error::Numerical(format!("ring model at r = {r}: {e}")))
            })
            .collect()
    }

    pub fn sep(&self, spec: &ApskSpec) -> Result<f64> {
        let layout = spec.layout();
        let thresholds = map_thresholds(&layout, self.params.noise_variance())?;
        let models = self.models(&layout)?;
        Ok(sep_two_stage(&layout, &thresholds, &models, &self.quadrature))
    }

    /// SEP with every radius snapped to the cache grid; `None` when snapping
    /// merges rings.
    pub fn sep_cached(&self, l: &[usize], r: &[f64], cache: &ModelCache) -> Result<Option<f64>> {
        let snapped: Vec<f64> = r.iter().map(|&x| cache.snap(x)).collect();
        if snapped.windows(2).any(|w| w[1] <= w[0]) || (l[0] > 1 && snapped[0] <= 0.0) {
            return Ok(None);
        }
        let phi = vec![0.0; l.len()];
        let spec = build_apsk(l, &snapped, &phi, RADIUS_TOLERANCE)?;
        let layout = spec.layout();
        let thresholds = map_thresholds(&layout, self.params.noise_variance())?;
        let models = snapped.iter().map(|&x| cache.get(x)).collect::<Result<Vec<_>>>()?;
        Ok(Some(sep_two_stage(&layout, &thresholds, &models, &self.quadrature)))
    }

    /// Radius-stage lower bound `(1/M) Σ_k l_k P_k^(e) ≤ SEP`.
    pub fn first_stage_bound(&self, spec: &ApskSpec) -> Result<f64> {
        let layout = spec.layout();
        let sigma2 = self.params.noise_variance();
        let thresholds = map_thresholds(&layout, sigma2)?;
        let m = spec.order() as f64;
        Ok((0..layout.ring_count())
            .map(|k| layout.rings[k].len() as f64 * first_stage_error(k, &layout, &thresholds, sigma2))
            .sum::<f64>()
            / m)
    }
}

fn single_origin(m: usize) -> Result<OptimizationResult> {
    debug_assert_eq!(m, 1);
    Ok(OptimizationResult {
        spec: ApskSpec::new(&[1], &[0.0], &[0.0])?,
        sep: 0.0,
        evaluations: 0,
        converged: true,
        restarts_used: 0,
    })
}

/// Minimises TS SEP over the radii of partition `l` at average power `p`.
pub fn optimize_radii(
    l: &[usize],
    p: f64,
    params: &ChannelParams,
    settings: &OptimizerSettings,
) -> Result<OptimizationResult> {
    let evaluator = SepEvaluator::new(params, settings.grid, settings.quadrature)?;
    let cache = ModelCache::new(evaluator.kernel.clone(), settings.grid, settings.cache_step * p.sqrt());
    optimize_radii_with(l, p, &evaluator, &cache, settings)
}

/// [`optimize_radii`] with a shared evaluator and amplitude cache.
pub fn optimize_radii_with(
    l: &[usize],
    p: f64,
    evaluator: &SepEvaluator,
    cache: &ModelCache,
    settings: &OptimizerSettings,
) -> Result<OptimizationResult> {
    settings.validate()?;
    if l == [1] {
        return single_origin(1);
    }
    let r_uniform = uniform_radii(l, p)?;
    let phi = vec![0.0; l.len()];
    let uniform = build_apsk(l, &r_uniform, &phi, RADIUS_TOLERANCE)?;
    let uniform_sep = evaluator.sep(&uniform)?;
    let dim = free_dimension(l);
    if dim == 0 {
        return Ok(OptimizationResult {
            spec: uniform,
            sep: uniform_sep,
            evaluations: 1,
            converged: true,
            restarts_used: 0,
        });
    }
    let nm = &settings.nelder_mead;
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
    let x_uniform = increments_from_radii(l, &r_uniform);
    let starts: Vec<Vec<f64>> = (0..nm.starts.max(1))
        .map(|s| {
            if s == 0 {
                x_uniform.clone()
            } else {
                x_uniform
                    .iter()
                    .map(|x| x + rng.random_range(-nm.jitter..=nm.jitter))
                    .collect()
            }
        })
        .collect();
    let mut failure: Option<Error> = None;
    let mut best: Option<SimplexOutcome> = None;
    let mut evaluations = 1;
    let mut all_converged = true;
    for start in &starts {
        let outcome = nelder_mead(
            |x| {
                let r = radii_from_increments(l, x, p);
                match evaluator.sep_cached(l, &r, cache) {
                    Ok(Some(v)) => v,
                    Ok(None) => f64::INFINITY,
                    Err(e) => {
                        failure.get_or_insert(e);
                        f64::INFINITY
                    }
                }
            },
            start,
            nm,
        );
        evaluations += outcome.evaluations;
        all_converged &= outcome.converged;
        if best.as_ref().is_none_or(|b| outcome.value < b.value) {
            best = Some(outcome);
        }
    }
    if let Some(e) = failure {
        return Err(e);
    }
    let best = best.expect("at least one start");
    let r = radii_from_increments(l, &best.x, p);
    let spec = build_apsk(l, &r, &phi, RADIUS_TOLERANCE)?;
    let sep = evaluator.sep(&spec)?;
    evaluations += 1;
    debug!("{l:?} at {p:e} W: SEP {sep:e} (uniform {uniform_sep:e}) after {evaluations} evaluations");
    let (spec, sep) = if sep <= uniform_sep {
        (spec, sep)
    } else {
        (uniform, uniform_sep)
    };
    Ok(OptimizationResult {
        spec,
        sep,
        evaluations,
        converged: all_converged,
        restarts_used: starts.len() - 1,
    })
}

/// `a` strictly better than `b`: lower SEP beyond [`SEP_TIE`], then fewer
/// rings, then lexicographically smaller partition.
fn ranks_before(a: (&[usize], f64), b: (&[usize], f64)) -> bool {
    if (a.1 - b.1).abs() > SEP_TIE {
        return a.1 < b.1;
    }
    match a.0.len().cmp(&b.0.len()) {
        Ordering::Less => true,
        Ordering::Greater => false,
        Ordering::Equal => a.0 < b.0,
    }
}

/// The `keep` best partitions of `m` under uniform radii, best first.
///
/// Partitions are visited in increasing order of the radius-stage lower
/// bound and the scan stops once the bound exceeds the `keep`-th best SEP.
pub fn rank_uniform_partitions(
    m: usize,
    p: f64,
    evaluator: &SepEvaluator,
    max_rings: Option<usize>,
    keep: usize,
) -> Result<(Vec<(ApskSpec, f64)>, usize)> {
    let partitions: Vec<Vec<usize>> = enumerate_partitions(m, max_rings)
        .into_iter()
        .filter(|l| l.as_slice() != [1])
        .collect();
    let mut bounded: Vec<(ApskSpec, f64)> = partitions
        .par_iter()
        .map(|l| {
            let r = uniform_radii(l, p)?;
            let spec = build_apsk(l, &r, &vec![0.0; l.len()], RADIUS_TOLERANCE)?;
            let bound = evaluator.first_stage_bound(&spec)?;
            Ok((spec, bound))
        })
        .collect::<Result<Vec<_>>>()?;
    bounded.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.ring_sizes().cmp(b.0.ring_sizes())));
    let keep = keep.max(1);
    let mut ranked: Vec<(ApskSpec, f64)> = Vec::new();
    let mut evaluated = 0;
    for (spec, bound) in bounded {
        if ranked.len() >= keep && bound > ranked[keep - 1].1 + SEP_TIE {
            break;
        }
        let sep = evaluator.sep(&spec)?;
        evaluated += 1;
        let pos = ranked
            .iter()
            .position(|(s, v)| ranks_before((spec.ring_sizes(), sep), (s.ring_sizes(), *v)))
            .unwrap_or(ranked.len());
        ranked.insert(pos, (spec, sep));
        ranked.truncate(keep);
    }
    Ok((ranked, evaluated))
}

/// Best partition of `m` points at power `p`. With `uniform_only` every
/// partition uses uniform radii; otherwise this is [`joint_optimize`].
pub fn optimize_partition(
    m: usize,
    p: f64,
    params: &ChannelParams,
    uniform_only: bool,
    max_rings: Option<usize>,
    settings: &OptimizerSettings,
) -> Result<OptimizationResult> {
    settings.validate()?;
    if m == 0 {
        return Err(Error::InvalidParameter("constellation order must be positive".into()));
    }
    if !uniform_only {
        return joint_optimize(m, p, params, max_rings, settings);
    }
    if m == 1 {
        return single_origin(m);
    }
    let evaluator = SepEvaluator::new(params, settings.grid, settings.quadrature)?;
    let (mut ranked, evaluated) = rank_uniform_partitions(m, p, &evaluator, max_rings, 1)?;
    info!("M = {m} at {p:e} W: {evaluated} partitions evaluated");
    let (spec, sep) = ranked.remove(0);
    Ok(OptimizationResult {
        spec,
        sep,
        evaluations: evaluated,
        converged: true,
        restarts_used: 0,
    })
}

/// Radius optimization for every partition (or the shortlist), keeping the
/// global best.
pub fn joint_optimize(
    m: usize,
    p: f64,
    params: &ChannelParams,
    max_rings: Option<usize>,
    settings: &OptimizerSettings,
) -> Result<OptimizationResult> {
    settings.validate()?;
    if m == 0 {
        return Err(Error::InvalidParameter("constellation order must be positive".into()));
    }
    if m == 1 {
        return single_origin(m);
    }
    let evaluator = SepEvaluator::new(params, settings.grid, settings.quadrature)?;
    let cache = ModelCache::new(evaluator.kernel.clone(), settings.grid, settings.cache_step * p.sqrt());
    let mut evaluations = 0;
    let candidates: Vec<Vec<usize>> = match settings.shortlist {
        Some(keep) => {
            let (ranked, evaluated) = rank_uniform_partitions(m, p, &evaluator, max_rings, keep)?;
            evaluations += evaluated;
            ranked.into_iter().map(|(s, _)| s.ring_sizes().to_vec()).collect()
        }
        None => enumerate_partitions(m, max_rings)
            .into_iter()
            .filter(|l| l.as_slice() != [1])
            .collect(),
    };
    let mut best: Option<OptimizationResult> = None;
    let mut converged = true;
    let mut restarts = 0;
    for l in candidates {
        let result = optimize_radii_with(&l, p, &evaluator, &cache, settings)?;
        evaluations += result.evaluations;
        converged &= result.converged;
        restarts += result.restarts_used;
        let better = match &best {
            None => true,
            Some(b) => ranks_before((result.spec.ring_sizes(), result.sep), (b.spec.ring_sizes(), b.sep)),
        };
        if better {
            best = Some(result);
        }
    }
    let mut best = best.expect("at least one partition");
    best.evaluations = evaluations;
    best.converged = converged;
    best.restarts_used = restarts;
    Ok(best)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepMode {
    UniformPartition,
    Joint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub p_dbm: f64,
    pub result: OptimizationResult,
    /// 16-QAM under TS detection, only for `M = 16`.
    pub sep_ref_qam16_ts: Option<f64>,
    pub sep_ref_awgn_ml: f64,
}

pub const SWEEP_HEADER: [&str; 6] = ["P_dBm", "l", "r", "sep", "sep_ref_qam16_ts", "sep_ref_awgn_ml"];

/// Optimizes at every power of `p_dbm` and streams CSV rows to `sink`.
#[allow(clippy::too_many_arguments)]
pub fn power_sweep<W: Write>(
    m: usize,
    params: &ChannelParams,
    p_dbm: &[f64],
    mode: SweepMode,
    max_rings: Option<usize>,
    settings: &OptimizerSettings,
    sink: W,
) -> Result<Vec<SweepRow>> {
    if p_dbm.is_empty() {
        return Err(Error::InvalidParameter("empty power grid".into()));
    }
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(SWEEP_HEADER).map_err(csv_error)?;
    let mut rows = Vec::with_capacity(p_dbm.len());
    for &dbm in p_dbm {
        let p = dbm_to_watts(dbm);
        let result = match mode {
            SweepMode::UniformPartition => optimize_partition(m, p, params, true, max_rings, settings)?,
            SweepMode::Joint => joint_optimize(m, p, params, max_rings, settings)?,
        };
        let qam = if m == 16 {
            Some(sep_qam16_ts(p, params, &settings.grid, &settings.quadrature)?)
        } else {
            None
        };
        let awgn = sep_awgn_ml(m, p, params.noise_variance())?;
        let row = SweepRow {
            p_dbm: dbm,
            result,
            sep_ref_qam16_ts: qam,
            sep_ref_awgn_ml: awgn,
        };
        w.write_record(sweep_record(&row)).map_err(csv_error)?;
        w.flush()?;
        rows.push(row);
    }
    Ok(rows)
}

/// CSV fields of one sweep row.
pub fn sweep_record(row: &SweepRow) -> Vec<String> {
    let spec = &row.result.spec;
    vec![
        format!("{}", row.p_dbm),
        spec.ring_sizes()
            .iter()
            .map(|n| n.to_string())
            .collect::<Vec<_>>()
            .join("-"),
        spec.radii()
            .iter()
            .map(|r| format!("{r:e}"))
            .collect::<Vec<_>>()
            .join(","),
        format!("{:e}", row.result.sep),
        row.sep_ref_qam16_ts.map(|v| format!("{v:e}")).unwrap_or_default(),
        format!("{:e}", row.sep_ref_awgn_ml),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nelder_mead_finds_quadratic_minimum() {
        let out = nelder_mead(
            |x| (x[0] - 1.0).powi(2) + 2.0 * (x[1] + 0.5).powi(2) + 1.0,
            &[0.0, 0.0],
            &NelderMeadConfig {
                tolerance: 1e-12,
                ..Default::default()
            },
        );
        assert!(out.converged);
        assert!(
            (out.x[0] - 1.0).abs() < 1e-4 && (out.x[1] + 0.5).abs() < 1e-4,
            "{:?}",
            out.x
        );
    }

    #[test]
    fn nelder_mead_rejects_non_finite_values() {
        let out = nelder_mead(
            |x| {
                if x[0] < 0.3 {
                    f64::NAN
                } else {
                    (x[0] - 1.0).powi(2)
                }
            },
            &[0.5],
            &NelderMeadConfig {
                tolerance: 1e-10,
                ..Default::default()
            },
        );
        assert!((out.x[0] - 1.0).abs() < 1e-3);
    }

    #[test]
    fn increments_round_trip_and_power() {
        for l in [vec![4, 4, 4, 4], vec![1, 5, 10], vec![3, 1]] {
            let x: Vec<f64> = (0..free_dimension(&l)).map(|i| 0.1 * i as f64 - 0.2).collect();
            let r = radii_from_increments(&l, &x, 2.5);
            let m: usize = l.iter().sum();
            let p: f64 = l.iter().zip(&r).map(|(&n, ri)| n as f64 * ri * ri).sum::<f64>() / m as f64;
            assert!((p - 2.5).abs() < 1e-12);
            let back = increments_from_radii(&l, &r);
            for (a, b) in back.iter().zip(&x) {
                assert!((a - b).abs() < 1e-12);
            }
        }
        assert_eq!(free_dimension(&[1, 3]), 0);
        assert_eq!(free_dimension(&[4]), 0);
        assert_eq!(free_dimension(&[1, 3, 4]), 1);
    }

    #[test]
    fn uniform_increments_are_zero() {
        let l = [4, 4, 4, 4];
        let r = uniform_radii(&l, 1.0).unwrap();
        assert!(increments_from_radii(&l, &r).iter().all(|x| x.abs() < 1e-12));
        let l = [1, 6, 9];
        let r = uniform_radii(&l, 1.0).unwrap();
        assert!(increments_from_radii(&l, &r).iter().all(|x| x.abs() < 1e-12));
    }

    #[test]
    fn fixed_partitions_skip_the_search() {
        let params = ChannelParams::new(7000.0, 100).unwrap();
        let s = OptimizerSettings::default();
        let p = dbm_to_watts(-8.0);
        let res = optimize_radii(&[1, 3], p, &params, &s).unwrap();
        assert_eq!(res.spec.radii()[0], 0.0);
        assert!((res.spec.radii()[1] - (4.0 * p / 3.0).sqrt()).abs() < 1e-15);
        let res = optimize_radii(&[4], p, &params, &s).unwrap();
        assert!((res.spec.radii()[0] - p.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn tie_break_prefers_fewer_rings_then_lexicographic() {
        assert!(ranks_before((&[2], 0.1), (&[1, 1], 0.1)));
        assert!(ranks_before((&[1, 3], 0.1), (&[3, 1], 0.1 + 1e-9)));
        assert!(ranks_before((&[1, 1], 0.05), (&[2], 0.1)));
    }

    #[test]
    fn cache_reuses_snapped_amplitudes() {
        let params = ChannelParams::new(7000.0, 100).unwrap();
        let kernel = SpanKernel::new(&params).unwrap();
        let cache = ModelCache::new(kernel, ModelGrid::default(), 1e-5);
        let a = cache.get(0.01).unwrap();
        let b = cache.get(0.01 + 2e-6).unwrap();
        assert!(Arc::ptr_eq(&a, &b));
        assert_eq!(cache.len(), 1);
    }
}
