//! Command-line driver.
//!
//! All randomness comes from `--seed`: it seeds the toy generator, the block
//! mask of `transfer`, network initialization and the epoch shuffle.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use freqspoof_core::data::{luma, resize_bilinear, Label, RgbImage, Split, ToyConfig};
use freqspoof_core::eval::{
    eer_threshold, metrics_report, roc_points, ScoreRecord, DEFAULT_FPR_TARGETS,
};
use freqspoof_core::model::{encode_sequence, EncodedSequence, Network, NetworkConfig};
use freqspoof_core::spectral::{
    fft2d, log_magnitude, sample_block_mask, to_spectrum_image, transfer_spoof_pattern, BlockMask,
    ComplexSpectrum, MaskParams, Plane,
};
use freqspoof_core::training::{evaluate_scores, score_sequences, train, ThresholdPolicy};
use freqspoof_core::Tensor;

use crate::config::RunConfig;
use crate::dataset::{load_split, read_manifest, write_toy_dataset, MANIFEST_FILE};
use crate::error::{Error, Result};
use crate::image_io::{read_png, write_gray_png, write_png};
use crate::report::{epoch_csv, read_scores, report_text, roc_csv, scores_csv, step_csv};
use crate::{checkpoint, fstn};

#[derive(Debug, Parser)]
#[command(
    name = "freqspoof",
    version,
    about = "Frequency/spatial/temporal face anti-spoofing"
)]
pub struct Cli {
    /// Seed for every random component [default: 0, or the config file's]
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// key=value config file; flags take precedence
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the seeded toy dataset (PNG frames plus manifest.tsv)
    SynthData(SynthArgs),
    /// Write the luma spectrum image of a PNG
    Spectrum(SpectrumArgs),
    /// Transplant high-frequency spectrum blocks of a spoof image into a live one
    Transfer(TransferArgs),
    /// Train a network on the train split of a dataset
    Train(TrainArgs),
    /// Score a split with a checkpoint and report metrics
    Eval(EvalArgs),
    /// Recompute metrics from a scores CSV
    Metrics(MetricsArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 96)]
    pub live: usize,
    #[arg(long, default_value_t = 96)]
    pub spoof: usize,
    #[arg(long, default_value_t = 3)]
    pub frames: usize,
    #[arg(long, default_value_t = 64)]
    pub size: usize,
    /// Sequences per class in the val split
    #[arg(long, default_value_t = 16)]
    pub val: usize,
    /// Sequences per class in the test split
    #[arg(long, default_value_t = 16)]
    pub test: usize,
}

#[derive(Debug, Args)]
pub struct SpectrumArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Spectrum image PNG
    #[arg(long)]
    pub out: PathBuf,
    /// Resize to SIZE x SIZE first
    #[arg(long)]
    pub size: Option<usize>,
    /// Also write the normalized spectrum as a 1 x H x W FSTN tensor
    #[arg(long)]
    pub tensor: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TransferArgs {
    #[arg(long)]
    pub live: PathBuf,
    #[arg(long)]
    pub spoof: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Fraction of eligible blocks to replace; 0 replaces nothing
    #[arg(long, default_value_t = MaskParams::DEFAULT_FRACTION)]
    pub blocks: f64,
    /// Block side in pixels [default: 16 per 256 px]
    #[arg(long)]
    pub block_size: Option<usize>,
    /// Protected low-frequency radius as a fraction of min(H, W) / 2
    #[arg(long, default_value_t = MaskParams::DEFAULT_EXCLUSION)]
    pub exclusion: f64,
    /// Resize both inputs to SIZE x SIZE first
    #[arg(long)]
    pub size: Option<usize>,
    /// Write spectrum images, log-magnitude tensors and the mask here
    #[arg(long)]
    pub dump_spectra: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Dataset directory or manifest file
    #[arg(long)]
    pub data: PathBuf,
    /// Checkpoint directory; epoch and step logs are written next to it
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub warmup_epochs: Option<usize>,
    #[arg(long)]
    pub lr_spatial: Option<f64>,
    #[arg(long)]
    pub lr_freq: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub seq_len: Option<usize>,
    #[arg(long)]
    pub image_size: Option<usize>,
    #[arg(long)]
    pub width_multiplier: Option<f64>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SplitArg {
    Train,
    Val,
    Test,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Split {
        match s {
            SplitArg::Train => Split::Train,
            SplitArg::Val => Split::Val,
            SplitArg::Test => Split::Test,
        }
    }
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Dataset directory or manifest file
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, value_enum, default_value = "test")]
    pub split: SplitArg,
    /// `eer` (equal error rate on the val split) or a number in [0, 1]
    #[arg(long, default_value = "eer")]
    pub threshold: String,
    /// Directory for scores.csv, report.txt and roc.csv
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub batch_size: Option<usize>,
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    /// CSV with header id,label,score
    #[arg(long)]
    pub scores: PathBuf,
    /// `eer` (equal error rate of these scores) or a number in [0, 1]
    #[arg(long, default_value = "0.5")]
    pub threshold: String,
    /// Also write the report to this file
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Removes everything a failed command created.
#[derive(Default)]
struct OutputGuard {
    files: Vec<PathBuf>,
    /// Directories with the entries they held before the run, or `None` if
    /// the run created them.
    dirs: Vec<(PathBuf, Option<BTreeSet<PathBuf>>)>,
    committed: bool,
}

impl OutputGuard {
    /// Call right before writing `path`.
    fn file(&mut self, path: &Path) -> PathBuf {
        self.files.push(path.to_path_buf());
        path.to_path_buf()
    }

    /// Creates `dir` if needed and remembers what it held.
    fn dir(&mut self, dir: &Path) -> Result<()> {
        let before = if dir.is_dir() {
            let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
            Some(entries.filter_map(|e| e.ok().map(|e| e.path())).collect())
        } else {
            None
        };
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.dirs.push((dir.to_path_buf(), before));
        Ok(())
    }

    fn commit(mut self) {
        self.committed = true;
    }
}

impl Drop for OutputGuard {
    fn drop(&mut self) {
        if self.committed {
            return;
        }
        for f in self.files.iter().rev() {
            let _ = fs::remove_file(f);
        }
        for (dir, before) in self.dirs.iter().rev() {
            match before {
                None => {
                    let _ = fs::remove_dir_all(dir);
                }
                Some(keep) => {
                    let Ok(entries) = fs::read_dir(dir) else {
                        continue;
                    };
                    for e in entries.flatten() {
                        let p = e.path();
                        if !keep.contains(&p) {
                            let _ = if p.is_dir() {
                                fs::remove_dir_all(&p)
                            } else {
                                fs::remove_file(&p)
                            };
                        }
                    }
                }
            }
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &cli.config {
        cfg.apply_file(path)?;
    }
    if let Some(seed) = cli.seed {
        cfg.train.seed = seed;
    }
    let mut guard = OutputGuard::default();
    match cli.command {
        Command::SynthData(a) => synth_data(&a, &cfg, &mut guard)?,
        Command::Spectrum(a) => spectrum(&a, &mut guard)?,
        Command::Transfer(a) => transfer(&a, &cfg, &mut guard)?,
        Command::Train(a) => train_cmd(&a, cfg, &mut guard)?,
        Command::Eval(a) => eval_cmd(&a, &cfg, &mut guard)?,
        Command::Metrics(a) => metrics_cmd(&a, &mut guard)?,
    }
    guard.commit();
    Ok(())
}

fn write_text(guard: &mut OutputGuard, path: &Path, text: &str) -> Result<()> {
    let path = guard.file(path);
    fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

fn synth_data(a: &SynthArgs, cfg: &RunConfig, guard: &mut OutputGuard) -> Result<()> {
    let toy = ToyConfig::new(a.live, a.spoof, a.frames, a.size, cfg.train.seed)
        .with_splits(a.val, a.test);
    guard.dir(&a.out)?;
    let manifest = write_toy_dataset(&a.out, &toy)?;
    println!("manifest {}", a.out.join(MANIFEST_FILE).display());
    for split in [Split::Train, Split::Val, Split::Test] {
        let (mut live, mut spoof) = (0, 0);
        for e in manifest.split(split) {
            match e.label {
                Label::Live => live += 1,
                Label::Spoof => spoof += 1,
            }
        }
        println!("{split}: {live} live, {spoof} spoof");
    }
    Ok(())
}

fn load_image(path: &Path, size: Option<usize>) -> Result<RgbImage> {
    let img = read_png(path)?;
    Ok(match size {
        Some(0) => return Err(Error::Config("--size must be >= 1".into())),
        Some(s) => resize_bilinear(&img, s, s),
        None => img,
    })
}

fn spectrum(a: &SpectrumArgs, guard: &mut OutputGuard) -> Result<()> {
    let img = load_image(&a.input, a.size)?;
    let spec = to_spectrum_image(&fft2d(&luma(&img))?);
    write_gray_png(&guard.file(&a.out), spec.height, spec.width, &spec.values)?;
    if let Some(path) = &a.tensor {
        let values = spec.values.iter().map(|&v| v as f32).collect();
        let t = Tensor::new(&[1, spec.height, spec.width], values)?;
        fstn::save(&guard.file(path), &t)?;
    }
    println!(
        "spectrum {}x{} -> {}",
        spec.height,
        spec.width,
        a.out.display()
    );
    Ok(())
}

/// Centered spectrum of `live` with the masked coefficients taken from `spoof`.
fn replaced_spectrum(live: &Plane, spoof: &Plane, region: &[bool]) -> Result<ComplexSpectrum> {
    let donor = fft2d(spoof)?.centered();
    let mut s = fft2d(live)?.centered();
    for (i, &take) in region.iter().enumerate() {
        if take {
            s.re[i] = donor.re[i];
            s.im[i] = donor.im[i];
        }
    }
    Ok(s)
}

fn logmag_tensor(planes: &[Plane]) -> Result<Tensor<f32>> {
    let (h, w) = (planes[0].height, planes[0].width);
    let data = planes
        .iter()
        .flat_map(|p| p.data.iter().map(|&v| v as f32))
        .collect();
    Ok(Tensor::new(&[planes.len(), h, w], data)?)
}

fn transfer(a: &TransferArgs, cfg: &RunConfig, guard: &mut OutputGuard) -> Result<()> {
    let live = load_image(&a.live, a.size)?;
    let spoof = load_image(&a.spoof, a.size)?;
    if (live.height, live.width) != (spoof.height, spoof.width) {
        return Err(Error::Data(format!(
            "live image is {}x{} but spoof image is {}x{}; pass --size to resize both",
            live.height, live.width, spoof.height, spoof.width
        )));
    }
    let (h, w) = (live.height, live.width);
    let block_size = a
        .block_size
        .unwrap_or(MaskParams::for_size(h.min(w)).block_size);
    if !(0.0..=1.0).contains(&a.blocks) {
        return Err(Error::Config(format!(
            "--blocks {} outside [0, 1]",
            a.blocks
        )));
    }
    let mask = if a.blocks == 0.0 {
        BlockMask::empty(h, w, block_size)
    } else {
        let params = MaskParams {
            block_size,
            replace_fraction: a.blocks,
            exclusion_radius: a.exclusion,
        };
        sample_block_mask(cfg.train.seed, h, w, &params)?
    };
    let planes = (0..3)
        .map(|c| transfer_spoof_pattern(&live.channel(c), &spoof.channel(c), &mask))
        .collect::<freqspoof_core::Result<Vec<_>>>()?;
    let out = RgbImage::from_planes(&planes)?;
    write_png(&guard.file(&a.out), &out)?;
    println!(
        "transfer: {} of {} blocks replaced -> {}",
        mask.selected.len(),
        (h / block_size) * (w / block_size),
        a.out.display()
    );

    if let Some(dir) = &a.dump_spectra {
        guard.dir(dir)?;
        let region = mask.region();
        let (ll, sl) = (luma(&live), luma(&spoof));
        let images = [
            ("live_spectrum.png", to_spectrum_image(&fft2d(&ll)?)),
            ("spoof_spectrum.png", to_spectrum_image(&fft2d(&sl)?)),
            (
                "transferred_spectrum.png",
                to_spectrum_image(&replaced_spectrum(&ll, &sl, &region)?),
            ),
        ];
        for (name, s) in &images {
            write_gray_png(&guard.file(&dir.join(name)), s.height, s.width, &s.values)?;
        }
        let mut live_lm = Vec::new();
        let mut out_lm = Vec::new();
        for c in 0..3 {
            let (lc, sc) = (live.channel(c), spoof.channel(c));
            live_lm.push(log_magnitude(&fft2d(&lc)?));
            out_lm.push(log_magnitude(&replaced_spectrum(&lc, &sc, &region)?));
        }
        fstn::save(
            &guard.file(&dir.join("live_logmag.fstn")),
            &logmag_tensor(&live_lm)?,
        )?;
        fstn::save(
            &guard.file(&dir.join("transferred_logmag.fstn")),
            &logmag_tensor(&out_lm)?,
        )?;
        let mask_px: Vec<f64> = region.iter().map(|&m| if m { 1.0 } else { 0.0 }).collect();
        write_gray_png(&guard.file(&dir.join("mask.png")), h, w, &mask_px)?;
        println!("spectra written to {}", dir.display());
    }
    Ok(())
}

fn manifest_path(data: &Path) -> PathBuf {
    if data.is_dir() {
        data.join(MANIFEST_FILE)
    } else {
        data.to_path_buf()
    }
}

fn load_encoded(data: &Path, split: Split, net: &NetworkConfig) -> Result<Vec<EncodedSequence>> {
    let (root, manifest) = read_manifest(&manifest_path(data))?;
    let seqs = load_split(&root, &manifest, split, net.seq_len, net.image_size)?;
    if seqs.is_empty() {
        return Err(Error::Data(format!(
            "{} has no {split} sequences",
            data.display()
        )));
    }
    seqs.iter()
        .map(|s| encode_sequence(s, net).map_err(Error::from))
        .collect()
}

fn train_cmd(a: &TrainArgs, mut cfg: RunConfig, guard: &mut OutputGuard) -> Result<()> {
    let t = &mut cfg.train;
    t.epochs = a.epochs.unwrap_or(t.epochs);
    t.warmup_epochs = a.warmup_epochs.unwrap_or(t.warmup_epochs);
    t.lr_spatial = a.lr_spatial.unwrap_or(t.lr_spatial);
    t.lr_freq = a.lr_freq.unwrap_or(t.lr_freq);
    t.batch_size = a.batch_size.unwrap_or(t.batch_size);
    t.seq_len = a.seq_len.unwrap_or(t.seq_len);
    cfg.image_size = a.image_size.unwrap_or(cfg.image_size);
    cfg.width_multiplier = a.width_multiplier.unwrap_or(cfg.width_multiplier);
    cfg.validate()?;
    let net_cfg = cfg.network()?;
    let data = load_encoded(&a.data, Split::Train, &net_cfg)?;
    let mut net = Network::<f32>::new(net_cfg, cfg.train.seed)?;
    guard.dir(&a.out)?;
    let log = train(&cfg.train, &mut net, &data, |s, _| {
        if s.step == 0 || (s.step + 1) % 10 == 0 {
            eprintln!("epoch {} step {} loss {:.4}", s.epoch, s.step, s.loss);
        }
    })?;
    checkpoint::save(&a.out, &net, &cfg.entries())?;
    write_text(guard, &a.out.join("epochs.csv"), &epoch_csv(&log.epochs))?;
    write_text(guard, &a.out.join("steps.csv"), &step_csv(&log.steps))?;
    for e in &log.epochs {
        println!("epoch {} loss {} acer {}", e.epoch, e.loss, e.acer);
    }
    println!("checkpoint {}", a.out.display());
    Ok(())
}

enum ThresholdArg {
    Eer,
    Fixed(f64),
}

fn parse_threshold(s: &str) -> Result<ThresholdArg> {
    if s.eq_ignore_ascii_case("eer") {
        return Ok(ThresholdArg::Eer);
    }
    match s.parse::<f64>() {
        Ok(t) if (0.0..=1.0).contains(&t) => Ok(ThresholdArg::Fixed(t)),
        _ => Err(Error::Config(format!(
            "--threshold must be `eer` or a number in [0, 1], got {s:?}"
        ))),
    }
}

fn write_metrics(
    guard: &mut OutputGuard,
    dir: &Path,
    scores: &[ScoreRecord],
    report: &freqspoof_core::eval::MetricsReport,
) -> Result<()> {
    guard.dir(dir)?;
    write_text(guard, &dir.join("scores.csv"), &scores_csv(scores))?;
    write_text(guard, &dir.join("report.txt"), &report_text(report))?;
    write_text(guard, &dir.join("roc.csv"), &roc_csv(&roc_points(scores)?))
}

fn eval_cmd(a: &EvalArgs, cfg: &RunConfig, guard: &mut OutputGuard) -> Result<()> {
    let threshold = parse_threshold(&a.threshold)?;
    let net = checkpoint::load(&a.checkpoint)?;
    let batch = a.batch_size.unwrap_or(cfg.train.batch_size);
    if batch == 0 {
        return Err(Error::Config("--batch-size must be >= 1".into()));
    }
    let policy = match threshold {
        ThresholdArg::Fixed(t) => ThresholdPolicy::Fixed(t),
        ThresholdArg::Eer => {
            let val = load_encoded(&a.data, Split::Val, &net.config)?;
            ThresholdPolicy::EerOn(score_sequences(&net, &val, batch)?)
        }
    };
    let split = load_encoded(&a.data, a.split.into(), &net.config)?;
    let ev = evaluate_scores(score_sequences(&net, &split, batch)?, &policy)?;
    write_metrics(guard, &a.out, &ev.scores, &ev.report)?;
    print!("{}", report_text(&ev.report));
    Ok(())
}

fn metrics_cmd(a: &MetricsArgs, guard: &mut OutputGuard) -> Result<()> {
    let threshold = parse_threshold(&a.threshold)?;
    let scores = read_scores(&a.scores)?;
    let t = match threshold {
        ThresholdArg::Fixed(t) => t,
        ThresholdArg::Eer => eer_threshold(&scores)?.0,
    };
    let report = metrics_report(&scores, t, &DEFAULT_FPR_TARGETS)?;
    let text = report_text(&report);
    if let Some(out) = &a.out {
        write_text(guard, out, &text)?;
    }
    print!("{text}");
    Ok(())
}
