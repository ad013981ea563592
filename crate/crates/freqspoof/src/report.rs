//! CSV score files, metric reports and training logs.
//!
//! Floats are written with Rust's shortest round-trip formatting, so reading
//! a file back yields the exact values.

use std::fs;
use std::path::Path;

use freqspoof_core::eval::{MetricsReport, RocPoint, ScoreRecord};
use freqspoof_core::training::{EpochLog, StepLog};

use crate::error::{Error, Result};

pub const SCORES_HEADER: &str = "id,label,score";

pub fn scores_csv(records: &[ScoreRecord]) -> String {
    let mut out = format!("{SCORES_HEADER}\n");
    for r in records {
        out.push_str(&format!("{},{},{}\n", r.id, r.label, r.score));
    }
    out
}

pub fn parse_scores(text: &str, origin: &str) -> Result<Vec<ScoreRecord>> {
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());
    match lines.next() {
        Some((_, h)) if h.trim() == SCORES_HEADER => {}
        _ => {
            return Err(Error::Data(format!(
                "{origin}: expected header {SCORES_HEADER:?}"
            )))
        }
    }
    let mut out = Vec::new();
    for (n, line) in lines {
        let bad = |msg: String| Error::Data(format!("{origin}:{}: {msg}", n + 1));
        let fields: Vec<&str> = line.trim().split(',').collect();
        let [id, label, score] = fields[..] else {
            return Err(bad(format!("expected 3 fields, got {}", fields.len())));
        };
        let label = label.parse().map_err(|e| bad(format!("{e}")))?;
        let score: f64 = score
            .parse()
            .map_err(|e| bad(format!("score {score:?}: {e}")))?;
        out.push(ScoreRecord::new(id, label, score).map_err(|e| bad(e.to_string()))?);
    }
    if out.is_empty() {
        return Err(Error::Data(format!("{origin}: no scores")));
    }
    Ok(out)
}

pub fn read_scores(path: &Path) -> Result<Vec<ScoreRecord>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_scores(&text, &path.display().to_string())
}

/// `key=value` lines; TPR entries are keyed `tpr@fpr=<target>`.
pub fn report_text(r: &MetricsReport) -> String {
    let mut out = format!(
        "threshold={}\napcer={}\nbpcer={}\nacer={}\nhter={}\n",
        r.threshold, r.apcer, r.bpcer, r.acer, r.hter
    );
    for (target, tpr) in &r.tpr_at_fpr {
        out.push_str(&format!("tpr@fpr={target}={tpr}\n"));
    }
    out
}

pub fn roc_csv(points: &[RocPoint]) -> String {
    let mut out = String::from("threshold,fpr,tpr\n");
    for p in points {
        out.push_str(&format!("{},{},{}\n", p.threshold, p.fpr, p.tpr));
    }
    out
}

pub fn epoch_csv(epochs: &[EpochLog]) -> String {
    let mut out = String::from("epoch,lr_spatial,lr_freq,loss,acer\n");
    for e in epochs {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            e.epoch, e.lr_spatial, e.lr_freq, e.loss, e.acer
        ));
    }
    out
}

pub fn step_csv(steps: &[StepLog]) -> String {
    let mut out = String::from("epoch,step,lr_spatial,lr_freq,loss,spatial_frozen\n");
    for s in steps {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            s.epoch, s.step, s.lr_spatial, s.lr_freq, s.loss, s.spatial_frozen
        ));
    }
    out
}
