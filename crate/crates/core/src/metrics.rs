//! Span extraction, exact-match span P/R/F1, and entity distribution counts.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::corpus::TokenSequence;
use crate::error::{Error, Result};
use crate::tags::{EntityType, Tag};

/// An entity of one type covering tokens `start..=end`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EntitySpan {
    pub start: usize,
    pub end: usize,
    pub kind: EntityType,
}

impl EntitySpan {
    pub fn new(kind: EntityType, start: usize, end: usize) -> Self {
        assert!(start <= end);
        EntitySpan { start, end, kind }
    }
}

impl fmt::Display for EntitySpan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({},{})", self.kind, self.start, self.end)
    }
}

/// Maximal `B-X I-X*` runs. An `I-X` that does not continue an open `X` span
/// opens a new one, as conlleval does.
pub fn extract_spans(labels: &[Tag]) -> BTreeSet<EntitySpan> {
    let mut spans = BTreeSet::new();
    let mut open: Option<(EntityType, usize)> = None;
    for (i, &tag) in labels.iter().enumerate() {
        match tag {
            Tag::O => {
                if let Some((kind, start)) = open.take() {
                    spans.insert(EntitySpan::new(kind, start, i - 1));
                }
            }
            Tag::B(kind) => {
                if let Some((k, start)) = open.take() {
                    spans.insert(EntitySpan::new(k, start, i - 1));
                }
                open = Some((kind, i));
            }
            Tag::I(kind) => match open {
                Some((k, _)) if k == kind => {}
                _ => {
                    if let Some((k, start)) = open.take() {
                        spans.insert(EntitySpan::new(k, start, i - 1));
                    }
                    open = Some((kind, i));
                }
            },
        }
    }
    if let Some((kind, start)) = open {
        spans.insert(EntitySpan::new(kind, start, labels.len() - 1));
    }
    spans
}

/// Canonical BIO encoding of non-overlapping spans over `len` tokens.
pub fn spans_to_tags(spans: &BTreeSet<EntitySpan>, len: usize) -> Vec<Tag> {
    let mut tags = vec![Tag::O; len];
    for s in spans {
        tags[s.start] = Tag::B(s.kind);
        for t in &mut tags[s.start + 1..=s.end] {
            *t = Tag::I(s.kind);
        }
    }
    tags
}

/// Precision, recall and F1 in `[0, 1]` from pooled counts.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Prf {
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
}

impl Prf {
    pub fn precision(&self) -> f64 {
        ratio(self.true_positives, self.true_positives + self.false_positives)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.true_positives, self.true_positives + self.false_negatives)
    }

    /// Harmonic mean of precision and recall; zero when both are zero.
    pub fn f1(&self) -> f64 {
        let (p, r) = (self.precision(), self.recall());
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }

    pub fn predicted(&self) -> usize {
        self.true_positives + self.false_positives
    }

    pub fn gold(&self) -> usize {
        self.true_positives + self.false_negatives
    }

    fn absorb(&mut self, other: Prf) {
        self.true_positives += other.true_positives;
        self.false_positives += other.false_positives;
        self.false_negatives += other.false_negatives;
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Micro-averaged span scores overall and per entity type.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EvaluationReport {
    pub overall: Prf,
    pub per_type: BTreeMap<EntityType, Prf>,
    pub sentences: usize,
    pub tokens: usize,
    pub correct_tokens: usize,
}

impl EvaluationReport {
    pub fn token_accuracy(&self) -> f64 {
        ratio(self.correct_tokens, self.tokens)
    }
}

/// Exact-match (type and boundaries) span scoring.
pub fn span_prf(gold: &[BTreeSet<EntitySpan>], pred: &[BTreeSet<EntitySpan>]) -> Result<EvaluationReport> {
    if gold.len() != pred.len() {
        return Err(Error::contract(format!(
            "{} gold sentences but {} predicted",
            gold.len(),
            pred.len()
        )));
    }
    let mut report = EvaluationReport {
        per_type: EntityType::ALL.iter().map(|&t| (t, Prf::default())).collect(),
        sentences: gold.len(),
        ..Default::default()
    };
    for (g, p) in gold.iter().zip(pred) {
        for kind in EntityType::ALL {
            let gs: BTreeSet<_> = g.iter().filter(|s| s.kind == kind).collect();
            let ps: BTreeSet<_> = p.iter().filter(|s| s.kind == kind).collect();
            let tp = gs.intersection(&ps).count();
            let counts = Prf {
                true_positives: tp,
                false_positives: ps.len() - tp,
                false_negatives: gs.len() - tp,
            };
            report.per_type.get_mut(&kind).expect("all types present").absorb(counts);
            report.overall.absorb(counts);
        }
    }
    Ok(report)
}

/// Span scores plus token-level counts from aligned label sequences.
pub fn evaluate_labels(gold: &[Vec<Tag>], pred: &[Vec<Tag>]) -> Result<EvaluationReport> {
    if gold.len() != pred.len() {
        return Err(Error::contract(format!(
            "{} gold sentences but {} predicted",
            gold.len(),
            pred.len()
        )));
    }
    for (i, (g, p)) in gold.iter().zip(pred).enumerate() {
        if g.len() != p.len() {
            return Err(Error::contract(format!(
                "sentence {i}: {} gold labels but {} predicted",
                g.len(),
                p.len()
            )));
        }
    }
    let gs: Vec<_> = gold.iter().map(|l| extract_spans(l)).collect();
    let ps: Vec<_> = pred.iter().map(|l| extract_spans(l)).collect();
    let mut report = span_prf(&gs, &ps)?;
    report.tokens = gold.iter().map(Vec::len).sum();
    report.correct_tokens = gold
        .iter()
        .zip(pred)
        .map(|(g, p)| g.iter().zip(p).filter(|(a, b)| a == b).count())
        .sum();
    Ok(report)
}

/// Entity counts for one data split.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitStats {
    pub name: String,
    pub sentences: usize,
    pub tokens: usize,
    counts: [usize; 4],
}

impl SplitStats {
    pub fn count(&self, kind: EntityType) -> usize {
        self.counts[kind.index()]
    }

    pub fn total_entities(&self) -> usize {
        self.counts.iter().sum()
    }
}

pub fn split_stats(name: &str, data: &[TokenSequence]) -> SplitStats {
    let mut counts = [0; 4];
    for seq in data {
        for span in extract_spans(&seq.labels) {
            counts[span.kind.index()] += 1;
        }
    }
    SplitStats {
        name: name.to_string(),
        sentences: data.len(),
        tokens: data.iter().map(TokenSequence::len).sum(),
        counts,
    }
}

pub fn dataset_stats(splits: &[(String, Vec<TokenSequence>)]) -> Vec<SplitStats> {
    splits.iter().map(|(name, data)| split_stats(name, data)).collect()
}

/// Plain-text table with one column per split.
pub fn format_stats_table(stats: &[SplitStats]) -> String {
    let mut out = format!("{:<16}", "Entity Type");
    for s in stats {
        out.push_str(&format!(" {:>12}", s.name));
    }
    out.push('\n');
    let mut row = |label: &str, f: &dyn Fn(&SplitStats) -> usize| {
        out.push_str(&format!("{label:<16}"));
        for s in stats {
            out.push_str(&format!(" {:>12}", f(s)));
        }
        out.push('\n');
    };
    for kind in EntityType::ALL {
        row(kind.as_str(), &|s| s.count(kind));
    }
    row("Total Entities", &|s| s.total_entities());
    row("Total Sentences", &|s| s.sentences);
    out
}
