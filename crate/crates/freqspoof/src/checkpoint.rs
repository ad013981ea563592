//! Checkpoint directories: one FSTN file per parameter plus `checkpoint.txt`.
//!
//! The index holds `key=value` lines for `image_size`, `seq_len` and
//! `width_multiplier`, then tab-separated `echo <key> <value>` lines recording
//! the run configuration (ignored on load) and `param <name> <file>` lines in
//! parameter order.

use std::fs;
use std::path::Path;

use freqspoof_core::model::{parameter_layout, Network, NetworkConfig};
use freqspoof_core::ParamStore;

use crate::error::{Error, Result};
use crate::fstn;

pub const INDEX_FILE: &str = "checkpoint.txt";

pub fn save(dir: &Path, net: &Network<f32>, echo: &[(String, String)]) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let c = &net.config;
    let mut index = format!(
        "image_size={}\nseq_len={}\nwidth_multiplier={}\n",
        c.image_size, c.seq_len, c.width_multiplier
    );
    for (k, v) in echo {
        index.push_str(&format!("echo\t{k}\t{v}\n"));
    }
    for (i, p) in net.params.iter().enumerate() {
        let file = format!("p{i:04}.fstn");
        fstn::save(&dir.join(&file), &p.value)?;
        index.push_str(&format!("param\t{}\t{file}\n", p.name));
    }
    let path = dir.join(INDEX_FILE);
    fs::write(&path, index).map_err(|e| Error::io(&path, e))
}

pub fn load(dir: &Path) -> Result<Network<f32>> {
    let path = dir.join(INDEX_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let bad =
        |line: usize, msg: String| Error::Data(format!("{}:{}: {msg}", path.display(), line + 1));
    let (mut size, mut seq_len, mut wm) = (None, None, None);
    let mut files = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        match fields[0] {
            "echo" => continue,
            "param" if fields.len() == 3 => {
                files.push((n, fields[1].to_string(), fields[2].to_string()))
            }
            "param" => return Err(bad(n, "param line needs a name and a file".into())),
            kv => {
                let (k, v) = kv
                    .split_once('=')
                    .ok_or_else(|| bad(n, format!("unrecognized line {line:?}")))?;
                let num = |v: &str| v.parse::<usize>().map_err(|e| bad(n, format!("{k}: {e}")));
                match k {
                    "image_size" => size = Some(num(v)?),
                    "seq_len" => seq_len = Some(num(v)?),
                    "width_multiplier" => {
                        wm = Some(v.parse::<f64>().map_err(|e| bad(n, format!("{k}: {e}")))?)
                    }
                    _ => return Err(bad(n, format!("unknown key {k:?}"))),
                }
            }
        }
    }
    let missing = |k: &str| Error::Data(format!("{}: missing {k}", path.display()));
    let config = NetworkConfig::new(
        size.ok_or_else(|| missing("image_size"))?,
        seq_len.ok_or_else(|| missing("seq_len"))?,
        wm.ok_or_else(|| missing("width_multiplier"))?,
    )
    .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    let layout = parameter_layout(&config);
    if layout.len() != files.len() {
        return Err(Error::Data(format!(
            "{}: {} parameters listed, network has {}",
            path.display(),
            files.len(),
            layout.len()
        )));
    }
    let mut params = ParamStore::new();
    for ((name, dims), (n, listed, file)) in layout.into_iter().zip(files) {
        if name != listed {
            return Err(bad(n, format!("expected parameter {name}, found {listed}")));
        }
        let value = fstn::load(&dir.join(&file))?;
        if value.dims() != dims.as_slice() {
            return Err(bad(
                n,
                format!("{name} has shape {:?}, expected {dims:?}", value.dims()),
            ));
        }
        params.insert(name, value)?;
    }
    Ok(Network { config, params })
}
