//! Cohen's kappa over a two-annotator confusion matrix.

use std::path::Path;

use crate::error::{Error, Result};

/// `K×K` counts, rows = annotator A, columns = annotator B.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    categories: Vec<String>,
    counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(categories: Vec<String>, counts: Vec<Vec<u64>>) -> Result<Self> {
        let k = categories.len();
        if k == 0 {
            return Err(Error::contract("confusion matrix needs at least one category"));
        }
        if counts.len() != k || counts.iter().any(|r| r.len() != k) {
            return Err(Error::contract(format!("confusion matrix must be {k}x{k}")));
        }
        if counts.iter().flatten().all(|&c| c == 0) {
            return Err(Error::contract("confusion matrix total is zero"));
        }
        Ok(ConfusionMatrix { categories, counts })
    }

    pub fn categories(&self) -> &[String] {
        &self.categories
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    /// Parse a CSV matrix: a header row of category names, then one integer
    /// row per category. A leading corner cell in the header and a leading
    /// label cell on each row are accepted.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let mut records = Vec::new();
        for rec in reader.records() {
            let rec = rec.map_err(|e| Error::Parse {
                line: e.position().map_or(0, |p| p.line() as usize),
                message: e.to_string(),
            })?;
            let line = rec.position().map_or(0, |p| p.line() as usize);
            if rec.iter().all(str::is_empty) {
                continue;
            }
            records.push((line, rec.iter().map(str::to_string).collect::<Vec<_>>()));
        }
        let ((header_line, header), rows) = records
            .split_first()
            .ok_or_else(|| Error::Parse { line: 1, message: "empty matrix file".into() })?;

        let mut counts = Vec::with_capacity(rows.len());
        let mut width = None;
        for (line, cells) in rows {
            let labeled = cells.first().is_some_and(|c| c.parse::<i64>().is_err());
            let numeric = if labeled { &cells[1..] } else { &cells[..] };
            let mut row = Vec::with_capacity(numeric.len());
            for cell in numeric {
                let value: i64 = cell.parse().map_err(|_| Error::Parse {
                    line: *line,
                    message: format!("`{cell}` is not an integer count"),
                })?;
                if value < 0 {
                    return Err(Error::Parse {
                        line: *line,
                        message: format!("negative count {value}"),
                    });
                }
                row.push(value as u64);
            }
            if *width.get_or_insert(row.len()) != row.len() {
                return Err(Error::Parse {
                    line: *line,
                    message: format!("row has {} counts, expected {}", row.len(), width.unwrap_or(0)),
                });
            }
            counts.push(row);
        }
        let k = width.unwrap_or(0);
        let names: Vec<String> = match header.len() {
            n if n == k => header.clone(),
            n if n == k + 1 => header[1..].to_vec(),
            n => {
                return Err(Error::Parse {
                    line: *header_line,
                    message: format!("header names {n} categories but rows have {k} counts"),
                })
            }
        };
        if counts.len() != k {
            return Err(Error::Parse {
                line: rows.last().map_or(*header_line, |(l, _)| *l),
                message: format!("matrix is not square: {} rows of {k} counts", counts.len()),
            });
        }
        ConfusionMatrix::new(names, counts).map_err(|e| Error::Parse {
            line: *header_line,
            message: e.to_string(),
        })
    }

    pub fn from_csv_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv(&text).map_err(|e| e.in_file(path))
    }

    /// Same matrix with rows and columns reordered by `order`.
    pub fn permuted(&self, order: &[usize]) -> Result<Self> {
        let k = self.categories.len();
        let mut seen = vec![false; k];
        if order.len() != k || order.iter().any(|&i| i >= k || std::mem::replace(&mut seen[i], true)) {
            return Err(Error::contract("order must be a permutation of the categories"));
        }
        Ok(ConfusionMatrix {
            categories: order.iter().map(|&i| self.categories[i].clone()).collect(),
            counts: order.iter().map(|&i| order.iter().map(|&j| self.counts[i][j]).collect()).collect(),
        })
    }
}

/// `κ = (p_o − p_e) / (1 − p_e)` with `p_o = trace/N` and
/// `p_e = Σ row_i·col_i / N²`.
pub fn cohens_kappa(m: &ConfusionMatrix) -> Result<f64> {
    let n = m.total() as f64;
    let k = m.categories.len();
    let observed = (0..k).map(|i| m.counts[i][i] as f64).sum::<f64>() / n;
    let expected = (0..k)
        .map(|i| {
            let row: u64 = m.counts[i].iter().sum();
            let col: u64 = m.counts.iter().map(|r| r[i]).sum();
            row as f64 * col as f64
        })
        .sum::<f64>()
        / (n * n);
    if expected >= 1.0 {
        return Err(Error::Domain("chance agreement is 1; kappa is undefined".into()));
    }
    Ok((observed - expected) / (1.0 - expected))
}
