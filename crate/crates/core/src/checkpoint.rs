//! Binary checkpoint format.
//!
//! ```text
//! "UMNR" | u32 version (1) | u32 count
//! per tensor: u32 name_len | name (UTF-8) | u32 rank | u32 dims.. | f64 values..
//! ```
//!
//! All integers and floats are little-endian; values are row-major. A saved
//! model also writes `<checkpoint>.vocab` (one token per line) and
//! `<checkpoint>.config` (`key = value` lines) beside the tensor file.

use std::fs;
use std::path::{Path, PathBuf};

use crate::config::{model_config_text, parse_model_config};
use crate::error::{Error, Result};
use crate::features::Vocabulary;
use crate::model::{build_variant, Model};
use crate::params::Parameters;
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"UMNR";
pub const VERSION: u32 = 1;

pub fn encode(params: &Parameters) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(params.len() as u32).to_le_bytes());
    for (name, t) in params.iter() {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
        for &d in t.shape() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Format {
                offset: self.bytes.len(),
                message: format!("truncated while reading {what}"),
            });
        }
        let slice = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")))
    }
}

pub fn decode(bytes: &[u8]) -> Result<Parameters> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4, "magic")? != MAGIC {
        return Err(Error::Format {
            offset: 0,
            message: "not a checkpoint (bad magic)".into(),
        });
    }
    let version_at = r.pos;
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(Error::Format {
            offset: version_at,
            message: format!("unsupported checkpoint version {version}"),
        });
    }
    let count = r.u32("tensor count")?;
    let mut params = Parameters::new();
    for _ in 0..count {
        let name_at = r.pos;
        let name_len = r.u32("name length")? as usize;
        let name = std::str::from_utf8(r.take(name_len, "name")?).map_err(|_| Error::Format {
            offset: name_at + 4,
            message: "tensor name is not UTF-8".into(),
        })?;
        let rank_at = r.pos;
        let rank = r.u32("rank")? as usize;
        if rank > 3 {
            return Err(Error::Format {
                offset: rank_at,
                message: format!("tensor `{name}` has rank {rank}"),
            });
        }
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.u32("dimension")? as usize);
        }
        let len: usize = shape.iter().product();
        let data_at = r.pos;
        let raw = r.take(len.saturating_mul(8), "values")?;
        let data = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
        let tensor = Tensor::new(shape, data).map_err(|e| Error::Format {
            offset: data_at,
            message: format!("tensor `{name}`: {e}"),
        })?;
        params.insert(name, tensor).map_err(|e| Error::Format {
            offset: name_at,
            message: e.to_string(),
        })?;
    }
    if r.pos != bytes.len() {
        return Err(Error::Format {
            offset: r.pos,
            message: format!("{} trailing bytes", bytes.len() - r.pos),
        });
    }
    Ok(params)
}

pub fn save_params(params: &Parameters, path: &Path) -> Result<()> {
    fs::write(path, encode(params)).map_err(|e| Error::io(path, e))
}

pub fn load_params(path: &Path) -> Result<Parameters> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes).map_err(|e| e.in_file(path))
}

fn sidecar(path: &Path, ext: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}

pub fn vocab_path(checkpoint: &Path) -> PathBuf {
    sidecar(checkpoint, "vocab")
}

pub fn config_path(checkpoint: &Path) -> PathBuf {
    sidecar(checkpoint, "config")
}

/// Write the tensors plus vocabulary and config sidecars.
pub fn save_model(model: &Model, path: &Path) -> Result<()> {
    save_params(&model.params, path)?;
    let vocab = model.vocab.tokens().join("\n") + "\n";
    let vp = vocab_path(path);
    fs::write(&vp, vocab).map_err(|e| Error::io(&vp, e))?;
    let cp = config_path(path);
    fs::write(&cp, model_config_text(&model.config)).map_err(|e| Error::io(&cp, e))
}

/// Load a model saved by [`save_model`], checking every tensor against the
/// shapes its config implies.
pub fn load_model(path: &Path) -> Result<Model> {
    let params = load_params(path)?;
    let vp = vocab_path(path);
    let vocab_text = fs::read_to_string(&vp).map_err(|e| Error::io(&vp, e))?;
    let vocab = Vocabulary::from_tokens(vocab_text.lines().map(String::from).collect()).map_err(|e| e.in_file(&vp))?;
    let cp = config_path(path);
    let config_text = fs::read_to_string(&cp).map_err(|e| Error::io(&cp, e))?;
    let config = parse_model_config(&config_text).map_err(|e| e.in_file(&cp))?;

    let expected = build_variant(config, vocab, 0)?;
    let mut diffs = Vec::new();
    for (name, t) in expected.params.iter() {
        match params.get(name) {
            None => diffs.push(format!("missing `{name}` {:?}", t.shape())),
            Some(found) if found.shape() != t.shape() => {
                diffs.push(format!("`{name}` expected {:?} found {:?}", t.shape(), found.shape()))
            }
            Some(_) => {}
        }
    }
    for name in params.names() {
        if !expected.params.contains(name) {
            diffs.push(format!("unexpected `{name}`"));
        }
    }
    if !diffs.is_empty() {
        return Err(Error::Config(format!(
            "checkpoint {} does not match its config: {}",
            path.display(),
            diffs.join("; ")
        )));
    }
    let mut ordered = Parameters::new();
    for name in expected.params.names() {
        ordered.insert(name, params.require(name)?.clone())?;
    }
    Ok(Model {
        params: ordered,
        ..expected
    })
}
