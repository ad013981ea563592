//! Frame directories and manifests.
//!
//! A dataset root holds `manifest.tsv` and one directory per sequence with
//! frames `frame_0000.png`, `frame_0001.png`, ... Manifest paths are relative
//! to the root.

use std::fs;
use std::path::{Path, PathBuf};

use freqspoof_core::data::{
    generate_toy_dataset, resize_bilinear, DatasetManifest, FrameSequence, Label, ManifestEntry,
    Split, ToyConfig,
};

use crate::error::{Error, Result};
use crate::image_io::{read_png, write_png};

pub const MANIFEST_FILE: &str = "manifest.tsv";

pub fn frame_name(t: usize) -> String {
    format!("frame_{t:04}.png")
}

/// Decodes the first `n` frames of `dir`, resized to `size x size`.
pub fn load_sequence(
    dir: &Path,
    n: usize,
    size: usize,
    id: &str,
    label: Label,
) -> Result<FrameSequence> {
    if n == 0 {
        return Err(Error::Config("need at least one frame per sequence".into()));
    }
    let mut frames = Vec::with_capacity(n);
    for t in 0..n {
        let path = dir.join(frame_name(t));
        if !path.is_file() {
            return Err(Error::Data(format!(
                "{}: missing frame {t} of {n} requested",
                path.display()
            )));
        }
        frames.push(resize_bilinear(&read_png(&path)?, size, size));
    }
    Ok(FrameSequence::new(id, label, frames)?)
}

/// Reads a manifest file. Returns the dataset root (its directory) too.
pub fn read_manifest(path: &Path) -> Result<(PathBuf, DatasetManifest)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let manifest = DatasetManifest::parse(&text)
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok((root, manifest))
}

pub fn load_entry(
    root: &Path,
    entry: &ManifestEntry,
    n: usize,
    size: usize,
) -> Result<FrameSequence> {
    load_sequence(&root.join(&entry.path), n, size, &entry.id, entry.label)
}

/// All sequences of `split`, in manifest order.
pub fn load_split(
    root: &Path,
    manifest: &DatasetManifest,
    split: Split,
    n: usize,
    size: usize,
) -> Result<Vec<FrameSequence>> {
    manifest
        .split(split)
        .map(|e| load_entry(root, e, n, size))
        .collect()
}

/// Generates the toy dataset under `out` (PNG tree plus manifest) and returns
/// the manifest.
pub fn write_toy_dataset(out: &Path, cfg: &ToyConfig) -> Result<DatasetManifest> {
    let ds = generate_toy_dataset(cfg)?;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut entries = Vec::with_capacity(ds.samples.len());
    for s in &ds.samples {
        let dir = out.join(&s.sequence.id);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        for (t, frame) in s.sequence.frames.iter().enumerate() {
            write_png(&dir.join(frame_name(t)), frame)?;
        }
        entries.push(ManifestEntry {
            path: s.sequence.id.clone(),
            label: s.sequence.label,
            id: s.sequence.id.clone(),
            split: s.split,
        });
    }
    let manifest = DatasetManifest::new(entries)?;
    let path = out.join(MANIFEST_FILE);
    fs::write(&path, manifest.to_text()).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}
