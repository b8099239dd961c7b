//! Regenerate the synthetic corpora under `fixtures/`.
//!
//! ```text
//! cargo run -p umner --example make_fixtures
//! ```

use std::path::Path;

use umner::synthetic::{disambiguation_corpus, overfit_corpus, write_corpus};

pub const OVERFIT_SEED: u64 = 1;
pub const DISAMBIGUATION_SEED: u64 = 5;
pub const DISAMBIGUATION_COPIES: usize = 3;

fn main() -> umner::Result<()> {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let overfit = root.join("overfit");
    write_corpus(&overfit_corpus(OVERFIT_SEED), &overfit.join("train.txt"), &overfit.join("features"))?;

    let dis = root.join("disambiguation");
    let (train, held_out) = disambiguation_corpus(DISAMBIGUATION_SEED, DISAMBIGUATION_COPIES);
    write_corpus(&train, &dis.join("train.txt"), &dis.join("features"))?;
    write_corpus(&held_out, &dis.join("heldout.txt"), &dis.join("features"))?;
    println!("fixtures written under {}", root.display());
    Ok(())
}
