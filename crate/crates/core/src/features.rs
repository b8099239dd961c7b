//! Text and visual feature providers.
//!
//! Text: a trainable word table plus learned absolute position embeddings,
//! with `[CLS]`/`[SEP]` wrapped around every sentence.
//!
//! Visual: region-feature grids read from `<image_id>.vfeat` files:
//!
//! ```text
//! bytes 0..4   magic "VFT1"
//! bytes 4..8   rows R (u32 LE)
//! bytes 8..12  dims D (u32 LE)
//! then R*D f32 LE values, row-major
//! ```

use std::collections::HashMap;
use std::fs;
use std::io::ErrorKind;
use std::path::{Path, PathBuf};

use crate::autodiff::Var;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const PAD: &str = "[PAD]";
pub const UNK: &str = "[UNK]";
pub const CLS: &str = "[CLS]";
pub const SEP: &str = "[SEP]";
const RESERVED: [&str; 4] = [PAD, UNK, CLS, SEP];

pub const VFEAT_MAGIC: &[u8; 4] = b"VFT1";
pub const VFEAT_EXT: &str = "vfeat";
const HEADER_LEN: usize = 12;

/// Token-to-index map with the reserved tokens at indices 0..4.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Default for Vocabulary {
    fn default() -> Self {
        let tokens: Vec<String> = RESERVED.iter().map(|s| s.to_string()).collect();
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Vocabulary { tokens, index }
    }
}

impl Vocabulary {
    /// Vocabulary over every token in `sentences`, in first-seen order.
    pub fn build<'a, I, S>(sentences: I) -> Self
    where
        I: IntoIterator<Item = &'a [S]>,
        S: AsRef<str> + 'a,
    {
        let mut v = Self::default();
        for sentence in sentences {
            for tok in sentence {
                v.add(tok.as_ref());
            }
        }
        v
    }

    /// Rebuild from a saved token list, which must start with the reserved tokens.
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        if tokens.len() < RESERVED.len() || tokens.iter().zip(RESERVED).any(|(a, b)| a != b) {
            return Err(Error::contract("vocabulary must begin with [PAD] [UNK] [CLS] [SEP]"));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::contract(format!("duplicate vocabulary entry `{t}`")));
            }
        }
        Ok(Vocabulary { tokens, index })
    }

    pub fn add(&mut self, token: &str) -> usize {
        if let Some(&i) = self.index.get(token) {
            return i;
        }
        self.tokens.push(token.to_string());
        self.index.insert(token.to_string(), self.tokens.len() - 1);
        self.tokens.len() - 1
    }

    /// Index of `token`, or of `[UNK]` when unseen.
    pub fn lookup(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(1)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn unk(&self) -> usize {
        1
    }

    pub fn cls(&self) -> usize {
        2
    }

    pub fn sep(&self) -> usize {
        3
    }

    /// Index sequence `[CLS] tokens.. [SEP]`.
    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<usize> {
        let mut ids = Vec::with_capacity(tokens.len() + 2);
        ids.push(self.cls());
        ids.extend(tokens.iter().map(|t| self.lookup(t.as_ref())));
        ids.push(self.sep());
        ids
    }
}

/// Contextual text matrix `d×(n+2)`: column 0 is `[CLS]`, column `n+1` is
/// `[SEP]`. Each column is the word embedding plus, when given, the
/// position embedding for that slot.
pub fn embed_tokens<'g, S: AsRef<str>>(
    tokens: &[S],
    vocab: &Vocabulary,
    word_table: Var<'g>,
    position_table: Option<Var<'g>>,
) -> Result<Var<'g>> {
    if tokens.is_empty() {
        return Err(Error::contract("cannot embed an empty sentence"));
    }
    if word_table.rows() != vocab.len() {
        return Err(Error::shape(
            "embedding table",
            &[vocab.len(), word_table.cols()],
            &word_table.shape(),
        ));
    }
    let ids = vocab.encode(tokens);
    let mut rows = word_table.gather_rows(&ids)?;
    if let Some(pos) = position_table {
        if pos.rows() < ids.len() {
            return Err(Error::contract(format!(
                "sentence needs {} positions but the position table has {}",
                ids.len(),
                pos.rows()
            )));
        }
        let slots: Vec<usize> = (0..ids.len()).collect();
        rows = rows.add(pos.gather_rows(&slots)?)?;
    }
    rows.t()
}

/// `R×D` region features for one image.
#[derive(Debug, Clone, PartialEq)]
pub struct VisualFeatureGrid {
    values: Tensor,
}

impl VisualFeatureGrid {
    pub fn new(values: Tensor) -> Result<Self> {
        if values.shape().len() != 2 {
            return Err(Error::contract(format!(
                "visual grid must be a matrix, got {:?}",
                values.shape()
            )));
        }
        if !values.all_finite() {
            return Err(Error::contract("visual grid contains non-finite values"));
        }
        Ok(VisualFeatureGrid { values })
    }

    pub fn zeros(rows: usize, dims: usize) -> Self {
        VisualFeatureGrid {
            values: Tensor::zeros(&[rows, dims]),
        }
    }

    pub fn rows(&self) -> usize {
        self.values.rows()
    }

    pub fn dims(&self) -> usize {
        self.values.cols()
    }

    pub fn values(&self) -> &Tensor {
        &self.values
    }

    pub fn is_zero(&self) -> bool {
        self.values.data().iter().all(|&v| v == 0.0)
    }

    /// Encode in the `.vfeat` layout. Values are stored as f32.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + 4 * self.values.len());
        out.extend_from_slice(VFEAT_MAGIC);
        out.extend_from_slice(&(self.rows() as u32).to_le_bytes());
        out.extend_from_slice(&(self.dims() as u32).to_le_bytes());
        for &v in self.values.data() {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let fmt_err = |offset: usize, message: String| Error::Format { offset, message };
        if bytes.len() < 4 {
            return Err(fmt_err(0, format!("file is {} bytes, too short for magic", bytes.len())));
        }
        if &bytes[..4] != VFEAT_MAGIC {
            return Err(fmt_err(0, format!("bad magic {:?}, expected \"VFT1\"", String::from_utf8_lossy(&bytes[..4]))));
        }
        if bytes.len() < HEADER_LEN {
            return Err(fmt_err(bytes.len(), "header truncated".into()));
        }
        let rows = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes")) as usize;
        let dims = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
        if rows == 0 {
            return Err(fmt_err(4, "row count is zero".into()));
        }
        if dims == 0 {
            return Err(fmt_err(8, "dimension is zero".into()));
        }
        let expected = HEADER_LEN + 4 * rows * dims;
        if bytes.len() < expected {
            return Err(fmt_err(
                bytes.len(),
                format!("payload truncated: {rows}x{dims} grid needs {expected} bytes, file has {}", bytes.len()),
            ));
        }
        if bytes.len() > expected {
            return Err(fmt_err(expected, format!("{} trailing bytes after payload", bytes.len() - expected)));
        }
        let mut data = Vec::with_capacity(rows * dims);
        for (k, chunk) in bytes[HEADER_LEN..].chunks_exact(4).enumerate() {
            let v = f32::from_le_bytes(chunk.try_into().expect("4 bytes"));
            if !v.is_finite() {
                return Err(fmt_err(HEADER_LEN + 4 * k, "non-finite feature value".into()));
            }
            data.push(f64::from(v));
        }
        Ok(VisualFeatureGrid {
            values: Tensor::matrix(rows, dims, data)?,
        })
    }
}

pub fn feature_path(dir: &Path, image_id: &str) -> PathBuf {
    dir.join(format!("{image_id}.{VFEAT_EXT}"))
}

fn check_image_id(image_id: &str) -> Result<()> {
    if image_id.is_empty() || image_id.contains(['/', '\\']) || image_id == ".." {
        return Err(Error::contract(format!("invalid image id `{image_id}`")));
    }
    Ok(())
}

/// Load `<dir>/<image_id>.vfeat`. A missing file yields an all-zero grid of
/// `fallback` dims and a logged warning.
pub fn load_visual_features(image_id: &str, dir: &Path, fallback: (usize, usize)) -> Result<VisualFeatureGrid> {
    check_image_id(image_id)?;
    let path = feature_path(dir, image_id);
    match fs::read(&path) {
        Ok(bytes) => VisualFeatureGrid::from_bytes(&bytes).map_err(|e| e.in_file(&path)),
        Err(e) if e.kind() == ErrorKind::NotFound => {
            log::warn!("no visual features for image `{image_id}` at {}; using a zero grid", path.display());
            Ok(VisualFeatureGrid::zeros(fallback.0, fallback.1))
        }
        Err(e) => Err(Error::io(path, e)),
    }
}

pub fn write_visual_features(grid: &VisualFeatureGrid, image_id: &str, dir: &Path) -> Result<PathBuf> {
    check_image_id(image_id)?;
    let path = feature_path(dir, image_id);
    fs::write(&path, grid.to_bytes()).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

/// `V = W_uᵀ U`: column `i` of the `d×R` result is `w_uᵀ u_i`.
pub fn project_visual<'g>(grid: Var<'g>, w_u: Var<'g>) -> Result<Var<'g>> {
    if grid.cols() != w_u.rows() {
        return Err(Error::shape("project_visual", &grid.shape(), &w_u.shape()));
    }
    grid.matmul(w_u)?.t()
}
