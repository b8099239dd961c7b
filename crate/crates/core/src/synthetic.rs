//! Small generated corpora with matching visual features.
//!
//! [`overfit_corpus`] is a 20-sentence set with all four entity types for
//! capacity checks. [`disambiguation_corpus`] builds sentences whose only
//! entity is one ambiguous token whose type is carried by the image alone.

use std::fs;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::{write_dataset, TokenSequence};
use crate::error::{Error, Result};
use crate::features::{write_visual_features, VisualFeatureGrid};
use crate::model::Example;
use crate::params::uniform;
use crate::tags::{EntityType, Tag};
use crate::tensor::Tensor;

pub const GRID_ROWS: usize = 4;
pub const GRID_DIMS: usize = 16;

const PEOPLE: [&[&str]; 5] = [&["Ali"], &["Sara"], &["Ayesha"], &["Imran", "Khan"], &["Bilal"]];
const PLACES: [&[&str]; 4] = [&["Lahore"], &["Karachi"], &["Quetta"], &["Swat", "Valley"]];
const ORGS: [&[&str]; 4] = [&["UNICEF"], &["Nestle"], &["PIA"], &["Pak", "Army"]];
const MISC: [&[&str]; 3] = [&["Eid"], &["Urdu"], &["Ramadan"]];
const FILLERS: [&str; 12] = ["the", "today", "with", "in", "visited", "loves", "near", "about", "great", "news", "at", "and"];

fn push_entity(tokens: &mut Vec<String>, labels: &mut Vec<Tag>, words: &[&str], kind: EntityType) {
    for (i, w) in words.iter().enumerate() {
        tokens.push(w.to_string());
        labels.push(if i == 0 { Tag::B(kind) } else { Tag::I(kind) });
    }
}

fn random_grid(rng: &mut ChaCha8Rng) -> VisualFeatureGrid {
    VisualFeatureGrid::new(uniform(&[GRID_ROWS, GRID_DIMS], 1.0, rng)).expect("finite grid")
}

/// Twenty short sentences mixing fillers and entities of every type, each
/// with a random image grid.
pub fn overfit_corpus(seed: u64) -> Vec<Example> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(20);
    for i in 0..20 {
        let mut tokens = Vec::new();
        let mut labels = Vec::new();
        let entities = 1 + i % 3;
        for e in 0..entities {
            for _ in 0..rng.gen_range(0..3) {
                tokens.push(FILLERS[rng.gen_range(0..FILLERS.len())].to_string());
                labels.push(Tag::O);
            }
            let (kind, pool): (EntityType, &[&[&str]]) = match (i + e) % 4 {
                0 => (EntityType::Per, &PEOPLE),
                1 => (EntityType::Loc, &PLACES),
                2 => (EntityType::Org, &ORGS),
                _ => (EntityType::Misc, &MISC),
            };
            push_entity(&mut tokens, &mut labels, pool[rng.gen_range(0..pool.len())], kind);
        }
        tokens.push(FILLERS[rng.gen_range(0..FILLERS.len())].to_string());
        labels.push(Tag::O);
        let seq = TokenSequence::new(format!("ovf{i:02}"), tokens, labels).expect("well-formed");
        out.push(Example {
            seq,
            grid: random_grid(&mut rng),
        });
    }
    out
}

/// The ambiguous token shared by every disambiguation sentence.
pub const AMBIGUOUS: &str = "Asmara";

/// Entity types the image can select between.
pub const DISAMBIGUATION_TYPES: [EntityType; 3] = [EntityType::Per, EntityType::Loc, EntityType::Org];

const TEMPLATES: [&[&str]; 6] = [
    &["*", "is", "beautiful"],
    &["I", "saw", "*", "today"],
    &["photos", "of", "*", "here"],
    &["*", "trends", "again"],
    &["we", "love", "*"],
    &["news", "about", "*", "tonight"],
];

const SIGNATURE: f64 = 1.5;
const NOISE: f64 = 0.5;

/// Grid whose only class information is a raised block of feature columns.
fn signature_grid(kind_slot: usize, rng: &mut ChaCha8Rng) -> VisualFeatureGrid {
    let width = GRID_DIMS / DISAMBIGUATION_TYPES.len();
    let mut t: Tensor = uniform(&[GRID_ROWS, GRID_DIMS], NOISE, rng);
    for r in 0..GRID_ROWS {
        for c in kind_slot * width..(kind_slot + 1) * width {
            t.set(r, c, t.get(r, c) + SIGNATURE);
        }
    }
    VisualFeatureGrid::new(t).expect("finite grid")
}

fn disambiguation_items(prefix: &str, copies: usize, rng: &mut ChaCha8Rng) -> Vec<Example> {
    let mut out = Vec::new();
    for copy in 0..copies {
        for (t, template) in TEMPLATES.iter().enumerate() {
            for (slot, &kind) in DISAMBIGUATION_TYPES.iter().enumerate() {
                let tokens: Vec<String> = template.iter().map(|w| if *w == "*" { AMBIGUOUS } else { w }.to_string()).collect();
                let labels = template.iter().map(|w| if *w == "*" { Tag::B(kind) } else { Tag::O }).collect();
                let id = format!("{prefix}{copy}t{t}{}", kind.as_str().to_lowercase());
                out.push(Example {
                    seq: TokenSequence::new(id, tokens, labels).expect("well-formed"),
                    grid: signature_grid(slot, rng),
                });
            }
        }
    }
    out
}

/// `(train, held_out)`. Every sentence text occurs once per entity type in
/// the held-out set, so a model that ignores the image can get at most one
/// of every three entities right.
pub fn disambiguation_corpus(seed: u64, train_copies: usize) -> (Vec<Example>, Vec<Example>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let train = disambiguation_items("dtr", train_copies, &mut rng);
    let held_out = disambiguation_items("dho", 1, &mut rng);
    (train, held_out)
}

/// Write sentences to `data_file` and their grids to `features_dir`.
pub fn write_corpus(examples: &[Example], data_file: &Path, features_dir: &Path) -> Result<()> {
    fs::create_dir_all(features_dir).map_err(|e| Error::io(features_dir, e))?;
    let seqs: Vec<TokenSequence> = examples.iter().map(|e| e.seq.clone()).collect();
    write_dataset(&seqs, data_file)?;
    for e in examples {
        write_visual_features(&e.grid, &e.seq.image_id, features_dir)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::extract_spans;

    #[test]
    fn overfit_corpus_shape() {
        let data = overfit_corpus(1);
        assert_eq!(data.len(), 20);
        let mut kinds = std::collections::BTreeSet::new();
        for e in &data {
            for s in extract_spans(&e.seq.labels) {
                kinds.insert(s.kind);
            }
        }
        assert_eq!(kinds.len(), 4);
        assert_eq!(overfit_corpus(1), data);
    }

    #[test]
    fn held_out_texts_are_balanced() {
        let (train, held) = disambiguation_corpus(3, 2);
        assert_eq!(train.len(), 2 * TEMPLATES.len() * 3);
        assert_eq!(held.len(), TEMPLATES.len() * 3);
        for chunk in held.chunks(3) {
            assert!(chunk.iter().all(|e| e.seq.tokens == chunk[0].seq.tokens));
            let kinds: Vec<_> = chunk.iter().map(|e| extract_spans(&e.seq.labels).into_iter().next().unwrap().kind).collect();
            assert_eq!(kinds, DISAMBIGUATION_TYPES);
        }
    }
}
