//! Transition probabilities, symbol and bit error probabilities.

pub mod montecarlo;
pub mod quadrature;
pub mod reference;

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::analytic::rice::rice_tail;
use crate::constellation::RingLayout;
use crate::detection::ThresholdSet;
use crate::error::{Error, Result};
use crate::labeling::Labeling;

pub use montecarlo::{transition_matrix_mc, wilson_interval, McConfig};
pub use quadrature::{sep_two_stage, transition_matrix_ts, QuadratureConfig};

/// How a transition matrix was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvaluationMethod {
    Quadrature,
    MonteCarlo,
}

/// `P_{i→j}`, row = transmitted symbol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionMatrix {
    order: usize,
    probs: Vec<f64>,
    pub method: EvaluationMethod,
    /// Samples per transmitted symbol; zero for quadrature.
    pub sample_count: usize,
}

impl TransitionMatrix {
    pub fn new(order: usize, probs: Vec<f64>, method: EvaluationMethod, sample_count: usize) -> Result<Self> {
        if probs.len() != order * order {
            return Err(Error::Dimension(format!(
                "{} entries for a {order}x{order} matrix",
                probs.len()
            )));
        }
        if probs.iter().any(|p| !p.is_finite()) {
            return Err(Error::Numerical("non-finite transition probability".into()));
        }
        Ok(TransitionMatrix {
            order,
            probs,
            method,
            sample_count,
        })
    }

    pub fn identity(order: usize) -> Self {
        let mut probs = vec![0.0; order * order];
        for i in 0..order {
            probs[i * order + i] = 1.0;
        }
        TransitionMatrix {
            order,
            probs,
            method: EvaluationMethod::Quadrature,
            sample_count: 0,
        }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.probs[i * self.order + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.probs[i * self.order..(i + 1) * self.order]
    }

    /// Largest deviation of a row sum from one.
    pub fn row_sum_deviation(&self) -> f64 {
        (0..self.order)
            .map(|i| (self.row(i).iter().sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// Ring-level error of the radius stage for transmitted ring `k`.
    pub fn ring_error(&self, layout: &RingLayout, k: usize) -> f64 {
        let ring = &layout.rings[k];
        let (lo, hi) = (ring.start, ring.start + ring.len());
        let mut err = 0.0;
        for i in lo..hi {
            let inside: f64 = self.row(i)[lo..hi].iter().sum();
            err += 1.0 - inside;
        }
        err / ring.len() as f64
    }

    /// One line per transmitted symbol, no header.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
        for i in 0..self.order {
            w.write_record(self.row(i).iter().map(|p| format!("{p:e}")))
                .map_err(csv_error)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R, method: EvaluationMethod, sample_count: usize) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new().has_headers(false).from_reader(reader);
        let mut probs = Vec::new();
        let mut rows = 0;
        for rec in r.records() {
            let rec = rec.map_err(csv_error)?;
            for field in rec.iter() {
                probs.push(
                    field
                        .trim()
                        .parse::<f64>()
                        .map_err(|e| Error::InvalidParameter(format!("bad probability '{field}': {e}")))?,
                );
            }
            rows += 1;
        }
        Self::new(rows, probs, method, sample_count)
    }
}

pub(crate) fn csv_error(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

/// `1 - (1/M) Σ_i P_{i→i}`.
pub fn sep(t: &TransitionMatrix) -> f64 {
    let m = t.order();
    let hit: f64 = (0..m).map(|i| t.get(i, i)).sum();
    (1.0 - hit / m as f64).max(0.0)
}

/// Binomial standard error of a Monte-Carlo SEP estimate.
pub fn sep_standard_error(t: &TransitionMatrix) -> f64 {
    let n = (t.sample_count * t.order()) as f64;
    if n == 0.0 {
        return 0.0;
    }
    let p = sep(t);
    (p * (1.0 - p) / n).sqrt()
}

/// Probability that the radius stage misses ring `k`:
/// `1 - (Q1(ρ_k, ρ̃_{k-1}) - Q1(ρ_k, ρ̃_k))` with `ρ = √2 r / σ`.
pub fn first_stage_error(k: usize, layout: &RingLayout, thresholds: &ThresholdSet, sigma2: f64) -> f64 {
    let (lo, hi) = thresholds.band(k);
    let r0 = layout.rings[k].radius;
    let inside = rice_tail(lo, r0, sigma2) - rice_tail(hi, r0, sigma2);
    (1.0 - inside).clamp(0.0, 1.0)
}

/// Average bit error probability `(1/(mM)) Σ_{i≠j} d_H(c_i, c_j) P_{i→j}`.
pub fn bep(t: &TransitionMatrix, labeling: &Labeling) -> Result<f64> {
    let m = t.order();
    if labeling.len() != m {
        return Err(Error::Dimension(format!(
            "labeling has {} rows for {m} symbols",
            labeling.len()
        )));
    }
    let bits = labeling.bits_per_symbol() as f64;
    let mut acc = 0.0;
    for i in 0..m {
        for j in 0..m {
            if i != j {
                acc += labeling.distance(i, j) as f64 * t.get(i, j);
            }
        }
    }
    Ok(acc / (bits * m as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constellation::ApskSpec;
    use crate::detection::map_thresholds;

    #[test]
    fn identity_has_zero_sep() {
        let t = TransitionMatrix::identity(8);
        assert_eq!(sep(&t), 0.0);
        assert_eq!(t.row_sum_deviation(), 0.0);
    }

    #[test]
    fn binary_bep_equals_sep() {
        let t = TransitionMatrix::new(2, vec![0.9, 0.1, 0.3, 0.7], EvaluationMethod::Quadrature, 0).unwrap();
        let lab = Labeling::brgc(1);
        assert!((bep(&t, &lab).unwrap() - sep(&t)).abs() < 1e-15);
    }

    #[test]
    fn csv_round_trip() {
        let t = TransitionMatrix::new(2, vec![0.75, 0.25, 1e-9, 1.0 - 1e-9], EvaluationMethod::Quadrature, 0).unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let back = TransitionMatrix::read_csv(buf.as_slice(), EvaluationMethod::Quadrature, 0).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn single_ring_has_no_first_stage_error() {
        let spec = ApskSpec::new(&[4], &[1.0], &[0.0]).unwrap();
        let layout = spec.layout();
        let t = map_thresholds(&layout, 0.2).unwrap();
        assert_eq!(first_stage_error(0, &layout, &t, 0.2), 0.0);
    }

    #[test]
    fn dimension_mismatch_in_bep() {
        let t = TransitionMatrix::identity(4);
        assert!(bep(&t, &Labeling::brgc(3)).is_err());
    }
}
