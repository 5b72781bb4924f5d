//! APSK signal sets: rings of equally spaced points with per-ring radius and
//! phase offset, indexed ring-major from the innermost ring.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance under which two radii count as equal.
pub const RADIUS_TOLERANCE: f64 = 1e-9;

/// Points per ring, innermost first.
pub type RingPartition = Vec<usize>;

/// A validated APSK constellation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ApskDocument", into = "ApskDocument")]
pub struct ApskSpec {
    l: Vec<usize>,
    r: Vec<f64>,
    phi: Vec<f64>,
    power: f64,
    symbols: Vec<Complex64>,
}

/// JSON form `{l, r, phi, P}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ApskDocument {
    pub l: Vec<usize>,
    pub r: Vec<f64>,
    pub phi: Vec<f64>,
    #[serde(rename = "P")]
    pub power: f64,
}

impl TryFrom<ApskDocument> for ApskSpec {
    type Error = Error;

    fn try_from(doc: ApskDocument) -> Result<Self> {
        let spec = build_apsk(&doc.l, &doc.r, &doc.phi, RADIUS_TOLERANCE)?;
        if (spec.power - doc.power).abs() > 1e-9 * doc.power.abs().max(spec.power) {
            return Err(Error::InvalidParameter(format!(
                "stated power {} disagrees with radii ({})",
                doc.power, spec.power
            )));
        }
        Ok(spec)
    }
}

impl From<ApskSpec> for ApskDocument {
    fn from(spec: ApskSpec) -> Self {
        ApskDocument {
            l: spec.l,
            r: spec.r,
            phi: spec.phi,
            power: spec.power,
        }
    }
}

/// Builds a constellation from ring sizes, radii and phase offsets.
///
/// Radii closer than `tolerance` (relative) count as equal and are rejected.
pub fn build_apsk(l: &[usize], r: &[f64], phi: &[f64], tolerance: f64) -> Result<ApskSpec> {
    if l.is_empty() {
        return Err(Error::Dimension("at least one ring is required".into()));
    }
    if r.len() != l.len() || phi.len() != l.len() {
        return Err(Error::Dimension(format!(
            "{} ring sizes, {} radii, {} phase offsets",
            l.len(),
            r.len(),
            phi.len()
        )));
    }
    if let Some(k) = l.iter().position(|&n| n == 0) {
        return Err(Error::InvalidParameter(format!("ring {k} has no points")));
    }
    if r.iter().chain(phi).any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("radii and phase offsets must be finite".into()));
    }
    if r[0] < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "radius must be nonnegative, got {}",
            r[0]
        )));
    }
    for k in 0..r.len() - 1 {
        if r[k + 1] - r[k] <= tolerance * r[k + 1].abs() {
            return Err(Error::NonIncreasingRadii {
                index: k,
                prev: r[k],
                next: r[k + 1],
            });
        }
    }
    if l[0] == 1 && r[0] != 0.0 {
        return Err(Error::OriginRule(r[0]));
    }
    if l[0] > 1 && r[0] == 0.0 {
        return Err(Error::InvalidParameter(
            "a ring with several points cannot have radius zero".into(),
        ));
    }
    let m: usize = l.iter().sum();
    let mut symbols = Vec::with_capacity(m);
    for ((&n, &radius), &offset) in l.iter().zip(r).zip(phi) {
        for j in 0..n {
            let angle = 2.0 * PI * j as f64 / n as f64 + offset;
            symbols.push(Complex64::from_polar(radius, angle));
        }
    }
    let power = l.iter().zip(r).map(|(&n, &x)| n as f64 * x * x).sum::<f64>() / m as f64;
    Ok(ApskSpec {
        l: l.to_vec(),
        r: r.to_vec(),
        phi: phi.to_vec(),
        power,
        symbols,
    })
}

impl ApskSpec {
    /// Same as [`build_apsk`] with the default tolerance.
    pub fn new(l: &[usize], r: &[f64], phi: &[f64]) -> Result<Self> {
        build_apsk(l, r, phi, RADIUS_TOLERANCE)
    }

    /// Uniform radii at power `p` with zero phase offsets.
    pub fn uniform(l: &[usize], p: f64) -> Result<Self> {
        let r = uniform_radii(l, p)?;
        Self::new(l, &r, &vec![0.0; l.len()])
    }

    pub fn ring_sizes(&self) -> &[usize] {
        &self.l
    }

    pub fn radii(&self) -> &[f64] {
        &self.r
    }

    pub fn phase_offsets(&self) -> &[f64] {
        &self.phi
    }

    pub fn power(&self) -> f64 {
        self.power
    }

    pub fn symbols(&self) -> &[Complex64] {
        &self.symbols
    }

    pub fn ring_count(&self) -> usize {
        self.l.len()
    }

    pub fn order(&self) -> usize {
        self.symbols.len()
    }

    /// Copy with different phase offsets.
    pub fn with_phase_offsets(&self, phi: &[f64]) -> Result<Self> {
        build_apsk(&self.l, &self.r, phi, RADIUS_TOLERANCE)
    }

    /// Ring-level view used by detectors and metrics.
    pub fn layout(&self) -> RingLayout {
        let mut rings = Vec::with_capacity(self.l.len());
        let mut start = 0;
        for ((&n, &radius), &offset) in self.l.iter().zip(&self.r).zip(&self.phi) {
            let phases = (0..n).map(|j| 2.0 * PI * j as f64 / n as f64 + offset).collect();
            rings.push(Ring { radius, phases, start });
            start += n;
        }
        RingLayout {
            rings,
            symbols: self.symbols.clone(),
        }
    }

    /// Radii divided by `√P`.
    pub fn normalized_radii(&self) -> Vec<f64> {
        let s = self.power.sqrt();
        self.r.iter().map(|x| x / s).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Radii `Δ, 2Δ, …` (or `0, Δ, 2Δ, …` when the innermost ring is a single
/// point) with average power `p`.
pub fn uniform_radii(l: &[usize], p: f64) -> Result<Vec<f64>> {
    if !(p > 0.0) || !p.is_finite() {
        return Err(Error::InvalidParameter(format!("power must be positive, got {p}")));
    }
    if l.is_empty() || l.contains(&0) {
        return Err(Error::InvalidParameter("ring sizes must be positive".into()));
    }
    let m: usize = l.iter().sum();
    let origin = l[0] == 1;
    let steps: Vec<f64> = (0..l.len())
        .map(|k| if origin { k as f64 } else { (k + 1) as f64 })
        .collect();
    let weighted: f64 = l.iter().zip(&steps).map(|(&n, &s)| n as f64 * s * s).sum();
    if weighted == 0.0 {
        // single point at the origin carries no power
        return Err(Error::InvalidParameter(
            "a lone origin point cannot carry positive power".into(),
        ));
    }
    let delta = (p * m as f64 / weighted).sqrt();
    Ok(steps.iter().map(|s| s * delta).collect())
}

/// Scales all radii so the average power becomes `p_new`.
pub fn rescale_power(spec: &ApskSpec, p_new: f64) -> Result<ApskSpec> {
    if !(p_new > 0.0) || !p_new.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "target power must be positive, got {p_new}"
        )));
    }
    if spec.power == 0.0 {
        return Err(Error::InvalidParameter(
            "cannot rescale a zero-power constellation".into(),
        ));
    }
    let scale = (p_new / spec.power).sqrt();
    let r: Vec<f64> = spec.r.iter().map(|x| x * scale).collect();
    build_apsk(&spec.l, &r, &spec.phi, RADIUS_TOLERANCE)
}

/// All compositions of `m` into at most `max_rings` positive parts, in
/// lexicographic order.
pub fn enumerate_partitions(m: usize, max_rings: Option<usize>) -> Vec<RingPartition> {
    let cap = max_rings.unwrap_or(m).min(m);
    let mut out = Vec::new();
    if m == 0 || cap == 0 {
        return out;
    }
    let mut current = Vec::with_capacity(cap);
    compose(m, cap, &mut current, &mut out);
    out
}

fn compose(remaining: usize, cap: usize, current: &mut Vec<usize>, out: &mut Vec<RingPartition>) {
    if remaining == 0 {
        out.push(current.clone());
        return;
    }
    if current.len() == cap {
        return;
    }
    for first in 1..=remaining {
        current.push(first);
        compose(remaining - first, cap, current, out);
        current.pop();
    }
}

/// One ring of a layout: radius and the absolute phases of its symbols in
/// index order.
#[derive(Debug, Clone, PartialEq)]
pub struct Ring {
    pub radius: f64,
    pub phases: Vec<f64>,
    /// Index of the ring's first symbol.
    pub start: usize,
}

impl Ring {
    pub fn len(&self) -> usize {
        self.phases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phases.is_empty()
    }

    /// Nearest-phase decision arcs: for each symbol, the offsets `(a, b)`
    /// such that its decision arc is `[θ_j - a, θ_j + b]`.
    pub fn arcs(&self) -> Vec<(f64, f64)> {
        let n = self.phases.len();
        if n == 1 {
            return vec![(PI, PI)];
        }
        let mut order: Vec<usize> = (0..n).collect();
        let key = |i: usize| self.phases[i].rem_euclid(2.0 * PI);
        order.sort_by(|&a, &b| key(a).total_cmp(&key(b)));
        let mut arcs = vec![(0.0, 0.0); n];
        for (pos, &i) in order.iter().enumerate() {
            let prev = order[(pos + n - 1) % n];
            let next = order[(pos + 1) % n];
            let gap_prev = (key(i) - key(prev)).rem_euclid(2.0 * PI);
            let gap_next = (key(next) - key(i)).rem_euclid(2.0 * PI);
            arcs[i] = (0.5 * gap_prev, 0.5 * gap_next);
        }
        arcs
    }

    /// Index within the ring of the symbol whose phase is nearest to
    /// `angle`; ties go to the lower index.
    pub fn nearest_phase(&self, angle: f64) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (j, &p) in self.phases.iter().enumerate() {
            let d = (angle - p).rem_euclid(2.0 * PI);
            let d = d.min(2.0 * PI - d);
            if d < best_d {
                best_d = d;
                best = j;
            }
        }
        best
    }
}

/// Ring-level description of any constellation whose symbols lie on
/// concentric circles, ring-major from the innermost.
#[derive(Debug, Clone, PartialEq)]
pub struct RingLayout {
    pub rings: Vec<Ring>,
    pub symbols: Vec<Complex64>,
}

impl RingLayout {
    /// Groups arbitrary points into rings by modulus.
    pub fn from_points(points: &[Complex64], tolerance: f64) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Dimension("no points".into()));
        }
        let mut order: Vec<usize> = (0..points.len()).collect();
        order.sort_by(|&a, &b| {
            points[a].norm().total_cmp(&points[b].norm()).then(
                points[a]
                    .arg()
                    .rem_euclid(2.0 * PI)
                    .total_cmp(&points[b].arg().rem_euclid(2.0 * PI)),
            )
        });
        let mut rings: Vec<Ring> = Vec::new();
        let mut symbols = Vec::with_capacity(points.len());
        for &i in &order {
            let p = points[i];
            let radius = p.norm();
            let phase = if radius == 0.0 {
                0.0
            } else {
                p.arg().rem_euclid(2.0 * PI)
            };
            match rings.last_mut() {
                Some(ring) if (radius - ring.radius).abs() <= tolerance * radius.max(ring.radius) => {
                    ring.phases.push(phase);
                }
                _ => rings.push(Ring {
                    radius,
                    phases: vec![phase],
                    start: symbols.len(),
                }),
            }
            symbols.push(p);
        }
        if rings[0].radius == 0.0 && rings[0].len() > 1 {
            return Err(Error::InvalidParameter("repeated point at the origin".into()));
        }
        Ok(RingLayout { rings, symbols })
    }

    pub fn order(&self) -> usize {
        self.symbols.len()
    }

    pub fn ring_count(&self) -> usize {
        self.rings.len()
    }

    pub fn radii(&self) -> Vec<f64> {
        self.rings.iter().map(|r| r.radius).collect()
    }

    pub fn ring_sizes(&self) -> Vec<usize> {
        self.rings.iter().map(|r| r.len()).collect()
    }

    /// Ring holding symbol `i`.
    pub fn ring_of(&self, i: usize) -> usize {
        self.rings
            .iter()
            .rposition(|r| r.start <= i)
            .expect("symbol index within layout")
    }

    pub fn power(&self) -> f64 {
        self.symbols.iter().map(|s| s.norm_sqr()).sum::<f64>() / self.symbols.len() as f64
    }
}
