//! Dataset files: one `IMGID:` header per sentence, then token lines.
//!
//! ```text
//! IMGID:1015799
//! RT	O
//! Denver	B-PER
//!
//! IMGID:1016001
//! ...
//! ```
//!
//! Sentences are separated by blank lines. Each starts with an `IMGID:` header
//! followed by one `token<TAB>label` line per token.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tags::Tag;

const HEADER: &str = "IMGID:";

/// One sentence with its image and BIO labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSequence {
    pub image_id: String,
    pub tokens: Vec<String>,
    pub labels: Vec<Tag>,
}

impl TokenSequence {
    pub fn new(image_id: impl Into<String>, tokens: Vec<String>, labels: Vec<Tag>) -> Result<Self> {
        let seq = TokenSequence {
            image_id: image_id.into(),
            tokens,
            labels,
        };
        seq.validate()?;
        Ok(seq)
    }

    pub fn validate(&self) -> Result<()> {
        if self.tokens.is_empty() {
            return Err(Error::contract(format!("sentence for image `{}` has no tokens", self.image_id)));
        }
        if self.tokens.len() != self.labels.len() {
            return Err(Error::contract(format!(
                "sentence for image `{}` has {} tokens but {} labels",
                self.image_id,
                self.tokens.len(),
                self.labels.len()
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Whether token lines must carry a label.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Labels {
    Required,
    /// Lines without a tab are bare tokens and get `O`.
    Optional,
}

struct Pending {
    image_id: String,
    header_line: usize,
    tokens: Vec<String>,
    labels: Vec<Tag>,
}

impl Pending {
    fn finish(self) -> Result<TokenSequence> {
        if self.tokens.is_empty() {
            return Err(Error::Parse {
                line: self.header_line,
                message: format!("sentence for image `{}` has no tokens", self.image_id),
            });
        }
        Ok(TokenSequence {
            image_id: self.image_id,
            tokens: self.tokens,
            labels: self.labels,
        })
    }
}

pub fn parse_dataset_str(text: &str, labels: Labels) -> Result<Vec<TokenSequence>> {
    let mut out = Vec::new();
    let mut current: Option<Pending> = None;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        let err = |message: String| Error::Parse { line: line_no, message };
        if line.trim().is_empty() {
            if let Some(p) = current.take() {
                out.push(p.finish()?);
            }
            continue;
        }
        if !line.contains('\t') {
            if let Some(id) = line.strip_prefix(HEADER) {
                if let Some(p) = &current {
                    return Err(err(format!(
                        "IMGID header inside the sentence that starts at line {} (missing blank line?)",
                        p.header_line
                    )));
                }
                let id = id.trim();
                if id.is_empty() {
                    return Err(err("empty image id".into()));
                }
                current = Some(Pending {
                    image_id: id.to_string(),
                    header_line: line_no,
                    tokens: Vec::new(),
                    labels: Vec::new(),
                });
                continue;
            }
        }
        let Some(p) = current.as_mut() else {
            return Err(err("token line before any IMGID header".into()));
        };
        let (token, tag) = match line.rsplit_once('\t') {
            Some((tok, label)) => {
                let tag: Tag = label.trim().parse().map_err(err)?;
                (tok, tag)
            }
            None if labels == Labels::Optional => (line, Tag::O),
            None => return Err(err(format!("expected `token<TAB>label`, got `{line}`"))),
        };
        if token.trim().is_empty() {
            return Err(err("empty token".into()));
        }
        if token.contains('\t') {
            return Err(err("more than one tab on a token line".into()));
        }
        p.tokens.push(token.to_string());
        p.labels.push(tag);
    }
    if let Some(p) = current.take() {
        out.push(p.finish()?);
    }
    Ok(out)
}

pub fn parse_dataset(path: &Path) -> Result<Vec<TokenSequence>> {
    parse_dataset_file(path, Labels::Required)
}

pub fn parse_dataset_file(path: &Path, labels: Labels) -> Result<Vec<TokenSequence>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_dataset_str(&text, labels).map_err(|e| e.in_file(path))
}

fn check_writable(seq: &TokenSequence) -> Result<()> {
    seq.validate()?;
    let bad_id = seq.image_id.trim().is_empty() || seq.image_id.contains(['\n', '\r', '\t']) || seq.image_id.trim() != seq.image_id;
    if bad_id {
        return Err(Error::contract(format!("image id `{}` cannot be written", seq.image_id.escape_debug())));
    }
    for tok in &seq.tokens {
        if tok.trim().is_empty() || tok.contains(['\n', '\r', '\t']) {
            return Err(Error::contract(format!("token `{}` cannot be written", tok.escape_debug())));
        }
    }
    Ok(())
}

/// Render sentences in the dataset format, each followed by a blank line.
pub fn format_dataset(data: &[TokenSequence]) -> Result<String> {
    let mut out = String::new();
    for seq in data {
        check_writable(seq)?;
        writeln!(out, "{HEADER}{}", seq.image_id).expect("string write");
        for (tok, tag) in seq.tokens.iter().zip(&seq.labels) {
            writeln!(out, "{tok}\t{tag}").expect("string write");
        }
        out.push('\n');
    }
    Ok(out)
}

pub fn write_dataset(data: &[TokenSequence], path: &Path) -> Result<()> {
    let text = format_dataset(data)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Write `data` with its labels replaced by `predictions`.
pub fn write_predictions(data: &[TokenSequence], predictions: &[Vec<Tag>], path: &Path) -> Result<()> {
    if data.len() != predictions.len() {
        return Err(Error::contract(format!(
            "{} sentences but {} prediction sequences",
            data.len(),
            predictions.len()
        )));
    }
    let relabeled = data
        .iter()
        .zip(predictions)
        .map(|(seq, pred)| {
            if pred.len() != seq.len() {
                return Err(Error::contract(format!(
                    "sentence for image `{}` has {} tokens but {} predicted labels",
                    seq.image_id,
                    seq.len(),
                    pred.len()
                )));
            }
            Ok(TokenSequence {
                labels: pred.clone(),
                ..seq.clone()
            })
        })
        .collect::<Result<Vec<_>>>()?;
    write_dataset(&relabeled, path)
}
