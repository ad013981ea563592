//! Two-phase optimization and split evaluation.
//!
//! The spatial stream follows a cosine decay from `lr_spatial`; everything
//! else ramps linearly from zero to `lr_freq` over the warmup epochs and then
//! holds. Rates are interpolated per step with progress
//! `t = step / (total_steps - 1)`, so the first step sees `t = 0` and the last
//! `t = 1`. Once the cosine rate falls below `freeze_ratio * lr_spatial` the
//! spatial group is no longer updated.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::Label;
use crate::error::{Error, Result};
use crate::eval::{
    acer, eer_threshold, metrics_report, MetricsReport, ScoreRecord, DEFAULT_FPR_TARGETS,
};
use crate::model::{spoof_probabilities, total_loss, Batch, EncodedSequence, Network};
use crate::scalar::Scalar;
use crate::tensor::{lr_at, sgd_step, LrSchedule, ParamStore, Tape};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub warmup_epochs: usize,
    pub lr_spatial: f64,
    pub lr_freq: f64,
    pub wd_spatial: f64,
    pub wd_freq: f64,
    pub batch_size: usize,
    pub seq_len: usize,
    pub seed: u64,
    pub lambda_depth: f64,
    /// The spatial group freezes once its rate drops below this fraction of
    /// `lr_spatial`.
    pub freeze_ratio: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 10,
            warmup_epochs: 5,
            lr_spatial: 0.3,
            lr_freq: 0.03,
            wd_spatial: 1e-4,
            wd_freq: 1e-5,
            batch_size: 16,
            seq_len: 10,
            seed: 0,
            lambda_depth: 1.0,
            freeze_ratio: 1e-5,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.warmup_epochs > self.epochs {
            return Err(Error::arg(format!(
                "warmup_epochs {} exceeds epochs {}",
                self.warmup_epochs, self.epochs
            )));
        }
        let rates = [
            ("lr_spatial", self.lr_spatial),
            ("lr_freq", self.lr_freq),
            ("wd_spatial", self.wd_spatial),
            ("wd_freq", self.wd_freq),
            ("lambda_depth", self.lambda_depth),
            ("freeze_ratio", self.freeze_ratio),
        ];
        for (name, v) in rates {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::arg(format!(
                    "{name} must be finite and >= 0, got {v}"
                )));
            }
        }
        if self.batch_size == 0 {
            return Err(Error::arg("batch_size must be >= 1"));
        }
        if self.seq_len == 0 {
            return Err(Error::arg("seq_len must be >= 1"));
        }
        Ok(())
    }

    fn spatial_schedule(&self) -> Result<Option<LrSchedule>> {
        if self.lr_spatial == 0.0 {
            return Ok(None);
        }
        LrSchedule::cosine(self.lr_spatial, self.epochs).map(Some)
    }

    fn freq_schedule(&self) -> Result<Option<LrSchedule>> {
        if self.lr_freq == 0.0 {
            return Ok(None);
        }
        LrSchedule::warmup_hold(self.lr_freq, self.epochs, self.warmup_epochs).map(Some)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Group {
    /// SpatialConvNet backbone and depth head.
    Spatial,
    /// FreqTempNet, TemporalConvNet, fusion and classifier.
    Freq,
}

pub fn group_of(name: &str) -> Result<Group> {
    let prefix = name.split('.').next().unwrap_or("");
    match prefix {
        "spatial" => Ok(Group::Spatial),
        "freq" | "temporal" | "fusion" => Ok(Group::Freq),
        _ => Err(Error::arg(format!(
            "parameter {name:?} belongs to no optimizer group"
        ))),
    }
}

/// Store indices of the spatial and frequency groups. Fails on any name
/// outside the known prefixes.
pub fn partition_parameters<T: Scalar>(params: &ParamStore<T>) -> Result<(Vec<usize>, Vec<usize>)> {
    let mut spatial = Vec::new();
    let mut freq = Vec::new();
    for (i, p) in params.iter().enumerate() {
        match group_of(&p.name)? {
            Group::Spatial => spatial.push(i),
            Group::Freq => freq.push(i),
        }
    }
    Ok((spatial, freq))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepLog {
    pub epoch: usize,
    pub step: usize,
    pub lr_spatial: f64,
    pub lr_freq: f64,
    pub loss: f64,
    pub spatial_frozen: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    /// Rates at the first step of the epoch.
    pub lr_spatial: f64,
    pub lr_freq: f64,
    /// Mean loss per sequence.
    pub loss: f64,
    /// ACER at threshold 0.5 over the scores seen during the epoch.
    pub acer: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    pub steps: Vec<StepLog>,
    pub epochs: Vec<EpochLog>,
}

/// Per-step rates `(lr_spatial, lr_freq)` for `total_steps` steps.
pub fn step_rates(config: &TrainConfig, total_steps: usize) -> Result<Vec<(f64, f64)>> {
    let spatial = config.spatial_schedule()?;
    let freq = config.freq_schedule()?;
    let at = |s: &Option<LrSchedule>, t: f64| s.as_ref().map_or(Ok(0.0), |s| lr_at(s, t));
    (0..total_steps)
        .map(|step| {
            let t = if total_steps > 1 {
                step as f64 / (total_steps - 1) as f64
            } else {
                0.0
            };
            Ok((at(&spatial, t)?, at(&freq, t)?))
        })
        .collect()
}

/// Deterministic epoch order: a ChaCha8 shuffle seeded by `seed` and `epoch`.
fn epoch_order(n: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng =
        ChaCha8Rng::seed_from_u64(seed ^ (epoch as u64).wrapping_mul(0xA076_1D64_78BD_642F));
    order.shuffle(&mut rng);
    order
}

/// Trains `network` in place on `train`, calling `on_step` with the updated
/// network after every step.
pub fn train<T: Scalar>(
    config: &TrainConfig,
    network: &mut Network<T>,
    train: &[EncodedSequence],
    mut on_step: impl FnMut(&StepLog, &Network<T>),
) -> Result<TrainLog> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::data("training split is empty"));
    }
    if config.seq_len != network.config.seq_len {
        return Err(Error::arg(format!(
            "train seq_len {} differs from network seq_len {}",
            config.seq_len, network.config.seq_len
        )));
    }
    let (spatial_idx, _) = partition_parameters(&network.params)?;
    let mut is_spatial = alloc::vec![false; network.params.len()];
    for i in spatial_idx {
        is_spatial[i] = true;
    }

    let steps_per_epoch = train.len().div_ceil(config.batch_size);
    let rates = step_rates(config, config.epochs * steps_per_epoch)?;
    let freeze_below = config.freeze_ratio * config.lr_spatial;
    let mut log = TrainLog::default();
    let mut step = 0;
    for epoch in 0..config.epochs {
        let order = epoch_order(train.len(), config.seed, epoch);
        let mut loss_sum = 0.0;
        let mut scores = Vec::with_capacity(train.len());
        let first = rates[step];
        for chunk in order.chunks(config.batch_size) {
            let items: Vec<&EncodedSequence> = chunk.iter().map(|&i| &train[i]).collect();
            let batch = Batch::<T>::new(&items, &network.config)?;
            let (lr_s, lr_f) = rates[step];

            let mut tape = Tape::new();
            let bound = network.bind(&mut tape);
            let out = network.forward(&mut tape, &bound, &batch)?;
            let target = tape.constant(batch.depth.clone());
            let loss = total_loss(
                &mut tape,
                out.depth,
                target,
                out.logits,
                &batch.labels,
                config.lambda_depth,
            )?;
            let loss_value = tape.scalar(loss).as_f64();
            if !loss_value.is_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite loss {loss_value} at epoch {epoch} step {step} \
                     (lr_spatial {lr_s:e}, lr_freq {lr_f:e})"
                )));
            }
            tape.backward(loss)?;
            let probs = spoof_probabilities(tape.value(out.logits))?;
            for (item, p) in items.iter().zip(probs) {
                scores.push((item.label, p));
            }
            for (p, &v) in network.params.iter_mut().zip(bound.vars()) {
                match tape.grad(v) {
                    Some(g) => p.grad.data_mut().copy_from_slice(g),
                    None => p.zero_grad(),
                }
            }

            let frozen = lr_s < freeze_below || config.lr_spatial == 0.0;
            let params = network.params.as_mut_slice();
            let (spatial, freq): (Vec<_>, Vec<_>) = params
                .iter_mut()
                .enumerate()
                .partition(|(i, _)| is_spatial[*i]);
            if frozen {
                spatial.into_iter().for_each(|(_, p)| p.zero_grad());
            } else {
                sgd_step(spatial.into_iter().map(|(_, p)| p), lr_s, config.wd_spatial)?;
            }
            sgd_step(freq.into_iter().map(|(_, p)| p), lr_f, config.wd_freq)?;

            let entry = StepLog {
                epoch,
                step,
                lr_spatial: lr_s,
                lr_freq: lr_f,
                loss: loss_value,
                spatial_frozen: frozen,
            };
            on_step(&entry, network);
            log.steps.push(entry);
            loss_sum += loss_value * items.len() as f64;
            step += 1;
        }
        log.epochs.push(EpochLog {
            epoch,
            lr_spatial: first.0,
            lr_freq: first.1,
            loss: loss_sum / train.len() as f64,
            acer: labeled_acer(&scores, 0.5),
        });
    }
    Ok(log)
}

/// ACER at `threshold` over `(label, score)` pairs; classes that are absent
/// contribute an error rate of zero.
fn labeled_acer(scores: &[(Label, f64)], threshold: f64) -> f64 {
    let rate = |label: Label, wrong: fn(f64, f64) -> bool| {
        let of: Vec<f64> = scores
            .iter()
            .filter(|s| s.0 == label)
            .map(|s| s.1)
            .collect();
        if of.is_empty() {
            0.0
        } else {
            of.iter().filter(|&&s| wrong(s, threshold)).count() as f64 / of.len() as f64
        }
    };
    let apcer = rate(Label::Spoof, |s, t| s < t);
    let bpcer = rate(Label::Live, |s, t| s >= t);
    acer(apcer, bpcer)
}

/// Spoof probability of every sequence, in input order.
pub fn score_sequences<T: Scalar>(
    network: &Network<T>,
    sequences: &[EncodedSequence],
    batch_size: usize,
) -> Result<Vec<ScoreRecord>> {
    let mut out = Vec::with_capacity(sequences.len());
    for chunk in sequences.chunks(batch_size.max(1)) {
        let items: Vec<&EncodedSequence> = chunk.iter().collect();
        let batch = Batch::<T>::new(&items, &network.config)?;
        let mut tape = Tape::new();
        let bound = network.bind(&mut tape);
        let logits = network.forward(&mut tape, &bound, &batch)?.logits;
        for (item, p) in items.iter().zip(spoof_probabilities(tape.value(logits))?) {
            if !p.is_finite() {
                return Err(Error::Numeric(format!("non-finite score for {}", item.id)));
            }
            out.push(ScoreRecord::new(item.id.clone(), item.label, p)?);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub enum ThresholdPolicy {
    Fixed(f64),
    /// Threshold at the equal error rate of these validation scores.
    EerOn(Vec<ScoreRecord>),
}

impl ThresholdPolicy {
    pub fn threshold(&self) -> Result<f64> {
        match self {
            ThresholdPolicy::Fixed(t) => Ok(*t),
            ThresholdPolicy::EerOn(val) => eer_threshold(val).map(|(t, _)| t),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub report: MetricsReport,
    pub scores: Vec<ScoreRecord>,
}

/// Metrics of `scores` at the threshold chosen by `policy`.
pub fn evaluate_scores(scores: Vec<ScoreRecord>, policy: &ThresholdPolicy) -> Result<Evaluation> {
    if scores.is_empty() {
        return Err(Error::data("evaluation split is empty"));
    }
    let threshold = policy.threshold()?;
    let report = metrics_report(&scores, threshold, &DEFAULT_FPR_TARGETS)?;
    Ok(Evaluation { report, scores })
}

/// Scores `split` with `network` and reports metrics under `policy`.
pub fn evaluate_split<T: Scalar>(
    network: &Network<T>,
    split: &[EncodedSequence],
    policy: &ThresholdPolicy,
    batch_size: usize,
) -> Result<Evaluation> {
    if split.is_empty() {
        return Err(Error::data("evaluation split is empty"));
    }
    evaluate_scores(score_sequences(network, split, batch_size)?, policy)
}

/// Names of the parameters in `group`, in store order.
pub fn group_names<T: Scalar>(params: &ParamStore<T>, group: Group) -> Result<Vec<String>> {
    let mut out = Vec::new();
    for p in params.iter() {
        if group_of(&p.name)? == group {
            out.push(p.name.clone());
        }
    }
    Ok(out)
}
