//! Binary labelings: reflected Gray codes, ordered direct products, the
//! phase-offset rule for rectangular APSK and exhaustive labeling search.

use std::f64::consts::PI;
use std::io::{Read, Write};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytic::harmonics::Harmonics;
use crate::analytic::model::RingModel;
use crate::constellation::ApskSpec;
use crate::detection::ThresholdSet;
use crate::error::{Error, Result};
use crate::metrics::{csv_error, TransitionMatrix};

/// Largest constellation accepted by [`exhaustive_labeling_search`].
pub const MAX_EXHAUSTIVE_ORDER: usize = 8;

/// `M × m` binary matrix; row `i` is the label of symbol `i`, stored as an
/// integer whose most significant of `m` bits is the first column.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Labeling {
    bits: usize,
    codes: Vec<u32>,
}

impl Labeling {
    /// Validates that `codes` uses every `bits`-bit word exactly once.
    pub fn new(bits: usize, codes: Vec<u32>) -> Result<Self> {
        if bits > 16 {
            return Err(Error::Labeling(format!("{bits} bits per symbol is not supported")));
        }
        let size = 1usize << bits;
        if codes.len() != size {
            return Err(Error::Labeling(format!("{} rows for {bits} bits", codes.len())));
        }
        let mut seen = vec![false; size];
        for &c in &codes {
            let c = c as usize;
            if c >= size || seen[c] {
                return Err(Error::Labeling(format!("label {c} repeated or out of range")));
            }
            seen[c] = true;
        }
        Ok(Labeling { bits, codes })
    }

    /// Parses rows of `'0'`/`'1'` characters.
    pub fn from_rows<S: AsRef<str>>(rows: &[S]) -> Result<Self> {
        let bits = rows.first().map(|r| r.as_ref().trim().len()).unwrap_or(0);
        let mut codes = Vec::with_capacity(rows.len());
        for row in rows {
            let row = row.as_ref().trim();
            if row.len() != bits {
                return Err(Error::Labeling("rows of unequal length".into()));
            }
            let mut c = 0u32;
            for ch in row.chars() {
                c = (c << 1)
                    | match ch {
                        '0' => 0,
                        '1' => 1,
                        other => return Err(Error::Labeling(format!("invalid bit '{other}'"))),
                    };
            }
            codes.push(c);
        }
        Self::new(bits, codes)
    }

    /// Binary reflected Gray code of order `m`, built by repeated reflection
    /// of `(0, 1)ᵀ`.
    pub fn brgc(m: usize) -> Self {
        let mut codes = vec![0u32];
        for b in 0..m {
            let mut next = codes.clone();
            next.extend(codes.iter().rev().map(|c| c | (1 << b)));
            codes = next;
        }
        Labeling { bits: m, codes }
    }

    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }

    pub fn bits_per_symbol(&self) -> usize {
        self.bits
    }

    pub fn code(&self, i: usize) -> u32 {
        self.codes[i]
    }

    pub fn codes(&self) -> &[u32] {
        &self.codes
    }

    /// Hamming distance between the labels of symbols `i` and `j`.
    pub fn distance(&self, i: usize, j: usize) -> u32 {
        (self.codes[i] ^ self.codes[j]).count_ones()
    }

    pub fn row_string(&self, i: usize) -> String {
        (0..self.bits)
            .rev()
            .map(|b| if (self.codes[i] >> b) & 1 == 1 { '1' } else { '0' })
            .collect()
    }

    /// `symbol,bits` lines with a header.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["symbol", "bits"]).map_err(csv_error)?;
        for i in 0..self.len() {
            w.write_record([i.to_string(), self.row_string(i)]).map_err(csv_error)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let mut rows: Vec<(usize, String)> = Vec::new();
        for rec in r.records() {
            let rec = rec.map_err(csv_error)?;
            let idx = rec
                .get(0)
                .and_then(|s| s.trim().parse::<usize>().ok())
                .ok_or_else(|| Error::Labeling("bad symbol index".into()))?;
            let bits = rec.get(1).ok_or_else(|| Error::Labeling("missing bits".into()))?;
            rows.push((idx, bits.trim().to_string()));
        }
        rows.sort_by_key(|r| r.0);
        if rows.iter().enumerate().any(|(i, r)| r.0 != i) {
            return Err(Error::Labeling("symbol indices must be 0..M-1".into()));
        }
        let strings: Vec<String> = rows.into_iter().map(|r| r.1).collect();
        Self::from_rows(&strings)
    }
}

/// Ordered direct product: the row for pair `(i, j)` is `(a_i, b_j)` at
/// position `q·i + j` (zero-based), outer index `i`.
pub fn direct_product(a: &Labeling, b: &Labeling) -> Labeling {
    let mut codes = Vec::with_capacity(a.len() * b.len());
    for &ca in &a.codes {
        for &cb in &b.codes {
            codes.push((ca << b.bits) | cb);
        }
    }
    Labeling {
        bits: a.bits + b.bits,
        codes,
    }
}

/// `B_{log2 K} ⊗ B_{log2 l}` for rectangular APSK with `K` rings of `l` points.
pub fn gray_rectangular(spec: &ApskSpec) -> Result<Labeling> {
    let l = spec.ring_sizes();
    let k = l.len();
    let per = l[0];
    if k < 2 || l.iter().any(|&n| n != per) || !k.is_power_of_two() || !per.is_power_of_two() {
        return Err(Error::Labeling(format!("{l:?} is not a rectangular APSK partition")));
    }
    let radius = Labeling::brgc(k.trailing_zeros() as usize);
    let phase = Labeling::brgc(per.trailing_zeros() as usize);
    Ok(direct_product(&radius, &phase))
}

/// Phase offsets aligning the decision arcs of adjacent rings at their
/// common threshold: `φ_1 = 0`,
/// `φ_i = θ_c(μ_{i-1}, r_{i-1}) - θ_c(μ_{i-1}, r_i) + φ_{i-1}`,
/// reported in `[0, 2π)`.
pub fn proposed_phase_offsets(
    spec: &ApskSpec,
    thresholds: &ThresholdSet,
    models: &[Arc<RingModel>],
) -> Result<Vec<f64>> {
    let k = spec.ring_count();
    let l = spec.ring_sizes();
    if k < 2 || l.iter().any(|&n| n != l[0]) {
        return Err(Error::InvalidParameter(
            "phase-offset rule needs a rectangular spec with K ≥ 2".into(),
        ));
    }
    if models.len() != k {
        return Err(Error::HarmonicsMismatch(format!(
            "{} ring models for {k} rings",
            models.len()
        )));
    }
    if thresholds.ring_count() != k {
        return Err(Error::Dimension("threshold count does not match ring count".into()));
    }
    let unwrapped = phase_offset_recurrence(thresholds, models);
    Ok(unwrapped.into_iter().map(|p| p.rem_euclid(2.0 * PI)).collect())
}

/// Unwrapped recurrence values, `φ_i` as a running sum of angle differences.
pub fn phase_offset_recurrence(thresholds: &ThresholdSet, models: &[Arc<RingModel>]) -> Vec<f64> {
    let mu = thresholds.values();
    let mut phi = vec![0.0; models.len()];
    for i in 1..models.len() {
        let m = mu[i];
        phi[i] = models[i - 1].correction_angle(m) - models[i].correction_angle(m) + phi[i - 1];
    }
    phi
}

fn weighted_distance(codes: &[u32], w: &[f64], m: usize) -> f64 {
    let mut acc = 0.0;
    for i in 0..m {
        for j in i + 1..m {
            acc += (codes[i] ^ codes[j]).count_ones() as f64 * w[i * m + j];
        }
    }
    acc
}

/// Minimises the BEP over all labelings of `t`'s symbols.
///
/// Labels are fixed up to the BEP-preserving maps `c ↦ Pc ⊕ v` (bit-column
/// permutation `P`, complement pattern `v`): symbol 0 gets the zero word and
/// the unit words appear in increasing bit order along the symbol index.
pub fn exhaustive_labeling_search(t: &TransitionMatrix) -> Result<(Labeling, f64)> {
    search(t, true)
}

/// Same search without symmetry pruning.
pub fn exhaustive_labeling_search_unpruned(t: &TransitionMatrix) -> Result<(Labeling, f64)> {
    search(t, false)
}

fn search(t: &TransitionMatrix, prune: bool) -> Result<(Labeling, f64)> {
    let m = t.order();
    if m > MAX_EXHAUSTIVE_ORDER {
        return Err(Error::Labeling(format!(
            "exhaustive search refused for M = {m} > {MAX_EXHAUSTIVE_ORDER}"
        )));
    }
    if !m.is_power_of_two() || m < 2 {
        return Err(Error::Labeling(format!("M = {m} is not a power of two ≥ 2")));
    }
    let bits = m.trailing_zeros() as usize;
    let mut w = vec![0.0; m * m];
    for i in 0..m {
        for j in i + 1..m {
            w[i * m + j] = t.get(i, j) + t.get(j, i);
        }
    }
    let scale = 1.0 / (bits as f64 * m as f64);
    let firsts: Vec<u32> = if prune { vec![0] } else { (0..m as u32).collect() };
    let best = firsts
        .par_iter()
        .filter_map(|&first| {
            let mut codes = vec![0u32; m];
            codes[0] = first;
            let mut used = vec![false; m];
            used[first as usize] = true;
            let mut best: Option<(f64, Vec<u32>)> = None;
            dfs(1, &mut codes, &mut used, bits, prune, &w, m, &mut best);
            best
        })
        .reduce_with(|a, b| better(a, b))
        .expect("at least one labeling");
    let labeling = Labeling::new(bits, best.1)?;
    Ok((labeling, best.0 * scale))
}

fn better(a: (f64, Vec<u32>), b: (f64, Vec<u32>)) -> (f64, Vec<u32>) {
    match a.0.total_cmp(&b.0) {
        std::cmp::Ordering::Less => a,
        std::cmp::Ordering::Greater => b,
        std::cmp::Ordering::Equal => {
            if a.1 <= b.1 {
                a
            } else {
                b
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn dfs(
    pos: usize,
    codes: &mut Vec<u32>,
    used: &mut Vec<bool>,
    bits: usize,
    prune: bool,
    w: &[f64],
    m: usize,
    best: &mut Option<(f64, Vec<u32>)>,
) {
    if pos == m {
        let cost = weighted_distance(codes, w, m);
        let candidate = (cost, codes.clone());
        *best = Some(match best.take() {
            None => candidate,
            Some(b) => better(b, candidate),
        });
        return;
    }
    for c in 0..m as u32 {
        if used[c as usize] {
            continue;
        }
        if prune && c.count_ones() == 1 {
            // unit words must appear in increasing bit order
            let b = c.trailing_zeros();
            if (0..b).any(|lower| !used[1usize << lower]) {
                continue;
            }
        }
        let _ = bits;
        used[c as usize] = true;
        codes[pos] = c;
        dfs(pos + 1, codes, used, bits, prune, w, m, best);
        used[c as usize] = false;
    }
}
