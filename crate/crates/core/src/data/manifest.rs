//! Dataset manifest: one tab-separated line per sequence,
//! `path<TAB>label<TAB>id<TAB>split`.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use super::Label;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::data(format!("unknown split {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    /// Sequence directory, relative to the manifest's directory.
    pub path: String,
    pub label: Label,
    pub id: String,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn new(entries: Vec<ManifestEntry>) -> Result<Self> {
        let m = DatasetManifest { entries };
        m.validate()?;
        Ok(m)
    }

    /// Ids must be unique, so no id can appear in two splits.
    pub fn validate(&self) -> Result<()> {
        let mut seen: BTreeMap<&str, Split> = BTreeMap::new();
        for e in &self.entries {
            if let Some(prev) = seen.insert(&e.id, e.split) {
                return Err(Error::data(format!(
                    "id {} listed twice ({} and {})",
                    e.id, prev, e.split
                )));
            }
        }
        Ok(())
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(move |e| e.split == split)
    }

    pub fn count(&self, split: Split, label: Label) -> usize {
        self.split(split).filter(|e| e.label == label).count()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(&format!("{}\t{}\t{}\t{}\n", e.path, e.label, e.id, e.split));
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 4 {
                return Err(Error::data(format!(
                    "manifest line {}: expected 4 tab-separated fields, got {}",
                    lineno + 1,
                    fields.len()
                )));
            }
            entries.push(ManifestEntry {
                path: fields[0].to_string(),
                label: fields[1].parse()?,
                id: fields[2].to_string(),
                split: fields[3].parse()?,
            });
        }
        Self::new(entries)
    }
}
