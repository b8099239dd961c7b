//! Mini-batch training, evaluation and prediction.

use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::autodiff::{Dropout, Graph};
use crate::corpus::TokenSequence;
use crate::error::{Error, Result};
use crate::features::{load_visual_features, Vocabulary};
use crate::metrics::{evaluate_labels, EvaluationReport};
use crate::model::{build_variant, Example, Model, ModelConfig};
use crate::optim::{Adam, AdamConfig};
use crate::tags::Tag;

// Independent RNG streams derived from the run seed.
const SHUFFLE_STREAM: u64 = 0x5348_5546;
const DROPOUT_STREAM: u64 = 0x4452_4f50;

/// Pair each sentence with its image grid. Missing feature files give a
/// zero grid (with a warning); present ones must match the configured size.
pub fn load_examples(data: Vec<TokenSequence>, features: &Path, config: &ModelConfig) -> Result<Vec<Example>> {
    let dims = (config.visual_rows, config.visual_dims);
    data.into_iter()
        .map(|seq| {
            let grid = load_visual_features(&seq.image_id, features, dims)?;
            if (grid.rows(), grid.dims()) != dims {
                return Err(Error::Config(format!(
                    "features for image `{}` are {}x{}, config expects {}x{}",
                    seq.image_id,
                    grid.rows(),
                    grid.dims(),
                    dims.0,
                    dims.1
                )));
            }
            Ok(Example { seq, grid })
        })
        .collect()
}

/// Decode every example (in parallel) and score against its labels.
pub fn evaluate(model: &Model, examples: &[Example]) -> Result<(EvaluationReport, Vec<Vec<Tag>>)> {
    if examples.is_empty() {
        return Err(Error::contract("nothing to evaluate: the data set is empty"));
    }
    let predictions = predict_all(model, examples)?;
    let gold: Vec<Vec<Tag>> = examples.iter().map(|e| e.seq.labels.clone()).collect();
    Ok((evaluate_labels(&gold, &predictions)?, predictions))
}

pub fn predict_all(model: &Model, examples: &[Example]) -> Result<Vec<Vec<Tag>>> {
    examples
        .par_iter()
        .map(|e| model.predict(&e.seq.tokens, &e.grid))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    /// Mean per-sentence training loss (dropout active).
    pub train_loss: f64,
    /// Train-set span F1 in percent, evaluation mode.
    pub train_f1: f64,
    pub val_f1: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// The selected model: best validation F1, or the last epoch without
    /// validation data.
    pub model: Model,
    pub history: Vec<EpochLog>,
    pub selected_epoch: usize,
    pub seconds: f64,
}

impl TrainOutcome {
    pub fn selected(&self) -> &EpochLog {
        &self.history[self.selected_epoch - 1]
    }
}

#[derive(Debug, Clone, Default)]
pub struct TrainOptions {
    /// Stop after the first epoch whose train F1 (percent) reaches this.
    pub target_train_f1: Option<f64>,
}

pub fn train(config: &ModelConfig, train_set: &[Example], val: Option<&[Example]>, opts: &TrainOptions) -> Result<TrainOutcome> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(Error::contract("training set is empty"));
    }
    let started = Instant::now();
    let vocab = Vocabulary::build(train_set.iter().map(|e| e.seq.tokens.as_slice()));
    let mut model = build_variant(config.clone(), vocab, config.seed)?;
    let mut adam = Adam::new(AdamConfig::with_lr(config.learning_rate));
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.seed ^ SHUFFLE_STREAM);
    let mut drop = Dropout::train(config.dropout, ChaCha8Rng::seed_from_u64(config.seed ^ DROPOUT_STREAM));

    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut history = Vec::new();
    let mut best: Option<(f64, usize, Model)> = None;
    for epoch in 1..=config.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            let batch: Vec<&Example> = chunk.iter().map(|&i| &train_set[i]).collect();
            let g = Graph::new();
            let loss = model.batch_loss(&g, &model.params, &batch, &mut drop)?;
            let value = loss.item();
            if !value.is_finite() {
                return Err(Error::Numerical(format!("loss is {value} at epoch {epoch}, batch {}", b + 1)));
            }
            loss_sum += value * batch.len() as f64;
            let grads = g.backward(loss)?.into_params();
            adam.step(&mut model.params, &grads)?;
            model
                .check_finite()
                .map_err(|e| Error::Numerical(format!("after epoch {epoch}, batch {}: {e}", b + 1)))?;
        }
        let (train_report, _) = evaluate(&model, train_set)?;
        let val_f1 = match val {
            Some(v) if !v.is_empty() => Some(evaluate(&model, v)?.0.overall.f1() * 100.0),
            _ => None,
        };
        let log = EpochLog {
            epoch,
            train_loss: loss_sum / train_set.len() as f64,
            train_f1: train_report.overall.f1() * 100.0,
            val_f1,
        };
        log::info!(
            "epoch {epoch}: loss {:.6} train F1 {:.2}{}",
            log.train_loss,
            log.train_f1,
            val_f1.map(|f| format!(" val F1 {f:.2}")).unwrap_or_default()
        );
        let reached = opts.target_train_f1.is_some_and(|t| log.train_f1 >= t);
        if let Some(f) = val_f1 {
            if best.as_ref().is_none_or(|(b, _, _)| f > *b) {
                best = Some((f, epoch, model.clone()));
            }
        }
        history.push(log);
        if reached {
            log::info!("train F1 target reached at epoch {epoch}");
            break;
        }
    }
    let (selected_epoch, model) = match best {
        Some((_, epoch, m)) => (epoch, m),
        None => (history.len(), model),
    };
    Ok(TrainOutcome {
        model,
        history,
        selected_epoch,
        seconds: started.elapsed().as_secs_f64(),
    })
}
