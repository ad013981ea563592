//! Presentation-attack-detection metrics.
//!
//! Scores are spoof probabilities. A record is decided spoof iff
//! `score >= threshold`. Spoof is the positive class of the ROC, so
//! `TPR = 1 - APCER` and `FPR = BPCER`. FAR (attacks accepted) equals APCER
//! and FRR (bona fide rejected) equals BPCER.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::data::Label;
use crate::error::{Error, Result};

/// FPR targets reported by default.
pub const DEFAULT_FPR_TARGETS: [f64; 3] = [1e-1, 1e-2, 1e-3];

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRecord {
    pub id: String,
    pub label: Label,
    pub score: f64,
}

impl ScoreRecord {
    pub fn new(id: impl Into<String>, label: Label, score: f64) -> Result<Self> {
        let id = id.into();
        if !(score.is_finite() && (0.0..=1.0).contains(&score)) {
            return Err(Error::data(format!(
                "score {score} of {id:?} outside [0, 1]"
            )));
        }
        Ok(ScoreRecord { id, label, score })
    }
}

/// Scores split by class, each sorted ascending.
struct Sorted {
    live: Vec<f64>,
    spoof: Vec<f64>,
}

impl Sorted {
    fn new(records: &[ScoreRecord]) -> Result<Self> {
        let mut live = Vec::new();
        let mut spoof = Vec::new();
        for r in records {
            if !r.score.is_finite() {
                return Err(Error::data(format!("score of {:?} is not finite", r.id)));
            }
            match r.label {
                Label::Live => live.push(r.score),
                Label::Spoof => spoof.push(r.score),
            }
        }
        if live.is_empty() || spoof.is_empty() {
            return Err(Error::data(format!(
                "metrics need both classes (live {}, spoof {})",
                live.len(),
                spoof.len()
            )));
        }
        live.sort_by(f64::total_cmp);
        spoof.sort_by(f64::total_cmp);
        Ok(Sorted { live, spoof })
    }

    /// `(spoof decided live, live decided spoof)` at `threshold`.
    fn errors(&self, threshold: f64) -> (usize, usize) {
        let missed = self.spoof.partition_point(|&s| s < threshold);
        let rejected = self.live.len() - self.live.partition_point(|&s| s < threshold);
        (missed, rejected)
    }

    fn rates(&self, threshold: f64) -> (f64, f64) {
        let (m, r) = self.errors(threshold);
        (
            m as f64 / self.spoof.len() as f64,
            r as f64 / self.live.len() as f64,
        )
    }

    /// Distinct scores in ascending order.
    fn candidates(&self) -> Vec<f64> {
        let mut all: Vec<f64> = self.live.iter().chain(&self.spoof).copied().collect();
        all.sort_by(f64::total_cmp);
        all.dedup();
        all
    }
}

/// `(APCER, BPCER)` at `threshold`.
pub fn apcer_bpcer(records: &[ScoreRecord], threshold: f64) -> Result<(f64, f64)> {
    Ok(Sorted::new(records)?.rates(threshold))
}

pub fn acer(apcer: f64, bpcer: f64) -> f64 {
    (apcer + bpcer) / 2.0
}

pub fn hter(frr: f64, far: f64) -> f64 {
    (frr + far) / 2.0
}

/// `(FAR, FRR)` at `threshold`.
pub fn far_frr(records: &[ScoreRecord], threshold: f64) -> Result<(f64, f64)> {
    apcer_bpcer(records, threshold)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RocPoint {
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

/// Operating points at every distinct score plus `+inf` (nothing decided
/// spoof), by ascending threshold.
pub fn roc_points(records: &[ScoreRecord]) -> Result<Vec<RocPoint>> {
    let s = Sorted::new(records)?;
    let mut thresholds = s.candidates();
    thresholds.push(f64::INFINITY);
    Ok(thresholds
        .into_iter()
        .map(|t| {
            let (apcer, bpcer) = s.rates(t);
            RocPoint {
                threshold: t,
                fpr: bpcer,
                tpr: 1.0 - apcer,
            }
        })
        .collect())
}

/// Highest TPR over operating points with `FPR <= target`, per target.
/// A target no operating point satisfies yields 0.
pub fn tpr_at_fpr(records: &[ScoreRecord], targets: &[f64]) -> Result<Vec<f64>> {
    for &t in targets {
        if !(t > 0.0 && t < 1.0) {
            return Err(Error::arg(format!("FPR target {t} outside (0, 1)")));
        }
    }
    let roc = roc_points(records)?;
    Ok(targets
        .iter()
        .map(|&target| {
            roc.iter()
                .filter(|p| p.fpr <= target)
                .fold(0.0, |best: f64, p| best.max(p.tpr))
        })
        .collect())
}

/// Threshold among the distinct scores minimizing `|FAR - FRR|` (lowest
/// threshold on ties) and the EER `(FAR + FRR) / 2` there.
pub fn eer_threshold(records: &[ScoreRecord]) -> Result<(f64, f64)> {
    let s = Sorted::new(records)?;
    let (ns, nl) = (s.spoof.len() as u128, s.live.len() as u128);
    let mut best: Option<(u128, f64)> = None;
    for t in s.candidates() {
        let (m, r) = s.errors(t);
        // |m/ns - r/nl| compared exactly in integers
        let gap = (m as u128 * nl).abs_diff(r as u128 * ns);
        if best.is_none_or(|(g, _)| gap < g) {
            best = Some((gap, t));
        }
    }
    let (_, threshold) = best.expect("both classes present");
    let (far, frr) = s.rates(threshold);
    Ok((threshold, hter(frr, far)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub threshold: f64,
    pub apcer: f64,
    pub bpcer: f64,
    pub acer: f64,
    pub hter: f64,
    /// `(FPR target, TPR)` pairs.
    pub tpr_at_fpr: Vec<(f64, f64)>,
}

pub fn metrics_report(
    records: &[ScoreRecord],
    threshold: f64,
    fpr_targets: &[f64],
) -> Result<MetricsReport> {
    let (apcer, bpcer) = apcer_bpcer(records, threshold)?;
    let tprs = tpr_at_fpr(records, fpr_targets)?;
    Ok(MetricsReport {
        threshold,
        apcer,
        bpcer,
        acer: acer(apcer, bpcer),
        hter: hter(bpcer, apcer),
        tpr_at_fpr: fpr_targets.iter().copied().zip(tprs).collect(),
    })
}
