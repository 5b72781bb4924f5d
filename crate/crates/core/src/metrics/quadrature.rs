//! Polar quadrature of the postcompensated density over annular sectors.
//!
//! The phase integral over each decision arc is done in closed form from the
//! Fourier series, so only the radius needs numerical integration. The
//! constant term of the series integrates to the exact Rice mass of each
//! decision band; the harmonic terms are integrated with composite
//! Gauss–Legendre on panels split at every threshold.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{EvaluationMethod, TransitionMatrix};
use crate::analytic::harmonics::Harmonics;
use crate::analytic::model::RingModel;
use crate::analytic::rice::{rice_density, rice_tail};
use crate::constellation::{Ring, RingLayout};
use crate::detection::{check_models, ThresholdSet};
use crate::error::{Error, Result};
use crate::numeric::GaussLegendre;

/// Radial integration settings; widths are in units of `σ/√2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureConfig {
    pub nodes_per_panel: usize,
    /// Largest panel width.
    pub panel_width: f64,
    /// Integration range around the transmitted radius.
    pub half_width: f64,
    /// Extra breakpoints at `r0 ± core_width`.
    pub core_width: f64,
}

impl QuadratureConfig {
    pub fn validate(&self) -> Result<()> {
        let widths = [self.panel_width, self.half_width];
        if self.nodes_per_panel == 0 || widths.iter().any(|w| !(*w > 0.0 && w.is_finite())) || !(self.core_width >= 0.0)
        {
            return Err(Error::InvalidParameter(format!("invalid quadrature settings {self:?}")));
        }
        Ok(())
    }
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        QuadratureConfig {
            nodes_per_panel: 16,
            panel_width: 1.0,
            half_width: 10.0,
            core_width: 6.0,
        }
    }
}

impl QuadratureConfig {
    /// Same ranges with twice the nodes per panel.
    pub fn refined(&self) -> Self {
        QuadratureConfig {
            nodes_per_panel: 2 * self.nodes_per_panel,
            ..*self
        }
    }
}

struct RadialNode {
    r: f64,
    weight: f64,
    band: usize,
}

fn radial_nodes(r0: f64, sigma2: f64, thresholds: &ThresholdSet, cfg: &QuadratureConfig) -> Vec<RadialNode> {
    let s = (sigma2 / 2.0).sqrt();
    let lo = (r0 - cfg.half_width * s).max(0.0);
    let hi = r0 + cfg.half_width * s;
    let mut edges = vec![lo, hi, r0 - cfg.core_width * s, r0 + cfg.core_width * s];
    edges.extend(thresholds.values().iter().copied());
    edges.retain(|&e| e >= lo && e <= hi);
    edges.sort_by(f64::total_cmp);
    edges.dedup_by(|a, b| (*a - *b).abs() <= 1e-14 * b.abs().max(1e-300));
    let rule = GaussLegendre::cached(cfg.nodes_per_panel);
    let mut nodes = Vec::new();
    for w in edges.windows(2) {
        let (a, b) = (w[0], w[1]);
        if b <= a {
            continue;
        }
        let band = thresholds.ring_of_radius(0.5 * (a + b));
        let pieces = ((b - a) / (cfg.panel_width * s)).ceil().max(1.0) as usize;
        let width = (b - a) / pieces as f64;
        for p in 0..pieces {
            let pa = a + p as f64 * width;
            for (r, weight) in rule.mapped(pa, pa + width) {
                nodes.push(RadialNode { r, weight, band });
            }
        }
    }
    nodes
}

fn band_masses(r0: f64, sigma2: f64, thresholds: &ThresholdSet) -> Vec<f64> {
    let tails: Vec<f64> = thresholds.values().iter().map(|&m| rice_tail(m, r0, sigma2)).collect();
    tails.windows(2).map(|w| (w[0] - w[1]).max(0.0)).collect()
}

/// Harmonic part of `Pr[compensated angle - θ_i ∈ [lo, hi]]` per unit density:
/// `(1/π) Σ_m Im{d_m (e^{jm hi} - e^{jm lo})} / m` with rotation `shift`.
#[inline]
fn arc_series(demod: &[Complex64], shift: f64, lo: f64, hi: f64) -> f64 {
    let z_hi = Complex64::from_polar(1.0, shift + hi);
    let z_lo = Complex64::from_polar(1.0, shift + lo);
    let (mut p_hi, mut p_lo) = (z_hi, z_lo);
    let mut acc = 0.0;
    for (m, d) in demod.iter().enumerate() {
        acc += (d * (p_hi - p_lo)).im / (m + 1) as f64;
        p_hi *= z_hi;
        p_lo *= z_lo;
    }
    acc / PI
}

fn demodulated(model: &RingModel, r: f64, out: &mut Vec<Complex64>) -> f64 {
    let w = model.weights(r);
    out.clear();
    out.extend((1..=model.max_order()).map(|m| model.demodulated_at(&w, m)));
    model.angle_at(&w)
}

fn uniform_arcs(ring: &Ring) -> bool {
    let arcs = ring.arcs();
    arcs.iter()
        .all(|&(a, b)| (a - arcs[0].0).abs() < 1e-12 && (b - arcs[0].1).abs() < 1e-12)
}

/// Full TS transition matrix by polar quadrature.
pub fn transition_matrix_ts(
    layout: &RingLayout,
    thresholds: &ThresholdSet,
    models: &[Arc<RingModel>],
    cfg: &QuadratureConfig,
) -> Result<TransitionMatrix> {
    cfg.validate()?;
    check_models(layout, models)?;
    if thresholds.ring_count() != layout.ring_count() {
        return Err(Error::Dimension("threshold count does not match ring count".into()));
    }
    let m = layout.order();
    let sigma2 = models[0].noise_variance();
    let arcs: Vec<Vec<(f64, f64)>> = layout.rings.iter().map(|r| r.arcs()).collect();
    let mut probs = vec![0.0; m * m];
    for (k, ring) in layout.rings.iter().enumerate() {
        let model = &models[k];
        let masses = band_masses(ring.radius, sigma2, thresholds);
        let nodes = radial_nodes(ring.radius, sigma2, thresholds, cfg);
        // per node: demodulated moments, relative rotation, weighted density
        let prepared: Vec<(Vec<Complex64>, f64, f64)> = if model.max_order() == 0 {
            Vec::new()
        } else {
            nodes
                .iter()
                .map(|node| {
                    let mut demod = Vec::new();
                    let own_angle = demodulated(model, node.r, &mut demod);
                    let det_angle = models[node.band].correction_angle(node.r);
                    let f = rice_density(node.r, ring.radius, sigma2) * node.weight;
                    (demod, det_angle - own_angle, f)
                })
                .collect()
        };
        for (i_local, &theta_i) in ring.phases.iter().enumerate() {
            let row = &mut probs[(ring.start + i_local) * m..(ring.start + i_local + 1) * m];
            for (kd, det) in layout.rings.iter().enumerate() {
                for (j, &(a, b)) in arcs[kd].iter().enumerate() {
                    row[det.start + j] = masses[kd] * (a + b) / (2.0 * PI);
                }
            }
            for (node, (demod, rel, f)) in nodes.iter().zip(&prepared) {
                let det = &layout.rings[node.band];
                let shift = rel - theta_i;
                for (j, (&theta_j, &(a, b))) in det.phases.iter().zip(&arcs[node.band]).enumerate() {
                    row[det.start + j] += f * arc_series(demod, shift + theta_j, -a, b);
                }
            }
        }
    }
    for p in probs.iter_mut() {
        *p = p.clamp(0.0, 1.0);
    }
    let t = TransitionMatrix::new(m, probs, EvaluationMethod::Quadrature, 0)?;
    let dev = t.row_sum_deviation();
    if dev > 1e-4 {
        return Err(Error::Numerical(format!("transition rows deviate from one by {dev:e}")));
    }
    Ok(t)
}

/// Per-symbol probabilities of a correct TS decision, `P_{i→i}`.
pub fn correct_decision_probabilities(
    layout: &RingLayout,
    thresholds: &ThresholdSet,
    models: &[Arc<RingModel>],
    cfg: &QuadratureConfig,
) -> Vec<f64> {
    let sigma2 = models[0].noise_variance();
    let mut out = vec![0.0; layout.order()];
    let mut demod = Vec::new();
    for (k, ring) in layout.rings.iter().enumerate() {
        let model = &models[k];
        let (lo, hi) = thresholds.band(k);
        let mass = (rice_tail(lo, ring.radius, sigma2) - rice_tail(hi, ring.radius, sigma2)).max(0.0);
        let arcs = ring.arcs();
        let symmetric = uniform_arcs(ring);
        let count = if symmetric { 1 } else { ring.len() };
        let mut harmonic = vec![0.0; count];
        if model.max_order() > 0 && ring.len() > 1 {
            let nodes = radial_nodes(ring.radius, sigma2, thresholds, cfg);
            for node in nodes.iter().filter(|n| n.band == k) {
                demodulated(model, node.r, &mut demod);
                let f = rice_density(node.r, ring.radius, sigma2) * node.weight;
                for (h, &(a, b)) in harmonic.iter_mut().zip(&arcs) {
                    *h += f * arc_series(&demod, 0.0, -a, b);
                }
            }
        }
        for i in 0..ring.len() {
            let src = if symmetric { 0 } else { i };
            let (a, b) = arcs[i];
            out[ring.start + i] = (mass * (a + b) / (2.0 * PI) + harmonic[src]).clamp(0.0, 1.0);
        }
    }
    out
}

/// SEP under TS detection from the diagonal of the transition matrix only.
/// No consistency checks; the caller pairs models with rings.
pub fn sep_two_stage(
    layout: &RingLayout,
    thresholds: &ThresholdSet,
    models: &[Arc<RingModel>],
    cfg: &QuadratureConfig,
) -> f64 {
    let diag = correct_decision_probabilities(layout, thresholds, models, cfg);
    (1.0 - diag.iter().sum::<f64>() / layout.order() as f64).max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::model::{exact_models, ModelGrid};
    use crate::channel::{dbm_to_watts, ChannelParams};
    use crate::constellation::ApskSpec;
    use crate::detection::map_thresholds;
    use crate::metrics::sep;

    fn setup(l: &[usize], dbm: f64, length: f64) -> (RingLayout, ThresholdSet, Vec<Arc<RingModel>>) {
        let params = ChannelParams::new(length, 100).unwrap();
        let spec = ApskSpec::uniform(l, dbm_to_watts(dbm)).unwrap();
        let layout = spec.layout();
        let t = map_thresholds(&layout, params.noise_variance()).unwrap();
        let models = exact_models(&layout.radii(), &params, &ModelGrid::default()).unwrap();
        (layout, t, models)
    }

    #[test]
    fn rows_sum_to_one_and_diagonal_matches_fast_path() {
        let (layout, t, models) = setup(&[1, 5, 10], -6.0, 5500.0);
        let cfg = QuadratureConfig::default();
        let tm = transition_matrix_ts(&layout, &t, &models, &cfg).unwrap();
        assert!(tm.row_sum_deviation() < 1e-6, "{}", tm.row_sum_deviation());
        let fast = sep_two_stage(&layout, &t, &models, &cfg);
        assert!((fast - sep(&tm)).abs() < 1e-12);
    }

    #[test]
    fn diagonal_is_constant_within_a_ring() {
        let (layout, t, models) = setup(&[4, 4, 4, 4], -3.0, 7000.0);
        let tm = transition_matrix_ts(&layout, &t, &models, &QuadratureConfig::default()).unwrap();
        for ring in &layout.rings {
            for i in ring.start..ring.start + ring.len() {
                assert!((tm.get(i, i) - tm.get(ring.start, ring.start)).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn refinement_changes_sep_very_little() {
        let (layout, t, models) = setup(&[4, 12], -2.0, 5500.0);
        let cfg = QuadratureConfig::default();
        let a = sep_two_stage(&layout, &t, &models, &cfg);
        let b = sep_two_stage(&layout, &t, &models, &cfg.refined());
        assert!((a - b).abs() < 1e-7, "{a} vs {b}");
    }
}
