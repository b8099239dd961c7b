//! Plain-text metrics document written by `train` and `eval`.
//!
//! Sections are `[name]` headers followed by `key = value` lines.
//! Percentages carry two decimals.

use std::fmt::Write as _;
use std::path::Path;

use crate::config::model_config_pairs;
use crate::error::{Error, Result};
use crate::metrics::{EvaluationReport, Prf};
use crate::model::ModelConfig;
use crate::train::EpochLog;

#[derive(Debug, Clone)]
pub struct MetricsDocument {
    pub command: String,
    pub variant: String,
    pub seed: u64,
    pub parameter_count: usize,
    pub wall_clock_seconds: f64,
    pub inference_seconds: Option<f64>,
    pub data: Option<String>,
    pub report: EvaluationReport,
    pub loss_curve: Vec<EpochLog>,
    pub selected_epoch: Option<usize>,
    pub config: ModelConfig,
}

fn pct(x: f64) -> String {
    format!("{:.2}", x * 100.0)
}

fn prf_lines(out: &mut String, p: &Prf) {
    writeln!(out, "precision = {}", pct(p.precision())).expect("string write");
    writeln!(out, "recall = {}", pct(p.recall())).expect("string write");
    writeln!(out, "f1 = {}", pct(p.f1())).expect("string write");
    writeln!(out, "gold = {}", p.gold()).expect("string write");
    writeln!(out, "predicted = {}", p.predicted()).expect("string write");
    writeln!(out, "correct = {}", p.true_positives).expect("string write");
}

impl MetricsDocument {
    pub fn render(&self) -> String {
        let mut out = String::new();
        let w = &mut out;
        writeln!(w, "[run]").expect("string write");
        writeln!(w, "command = {}", self.command).expect("string write");
        writeln!(w, "variant = {}", self.variant).expect("string write");
        if let Some(d) = &self.data {
            writeln!(w, "data = {d}").expect("string write");
        }
        writeln!(w, "seed = {}", self.seed).expect("string write");
        writeln!(w, "parameters = {}", self.parameter_count).expect("string write");
        writeln!(w, "wall_clock_seconds = {:.3}", self.wall_clock_seconds).expect("string write");
        if let Some(s) = self.inference_seconds {
            writeln!(w, "inference_seconds = {s:.3}").expect("string write");
        }
        if let Some(e) = self.selected_epoch {
            writeln!(w, "selected_epoch = {e}").expect("string write");
        }
        writeln!(w, "sentences = {}", self.report.sentences).expect("string write");
        writeln!(w, "tokens = {}", self.report.tokens).expect("string write");
        writeln!(w, "token_accuracy = {}", pct(self.report.token_accuracy())).expect("string write");

        writeln!(w, "\n[overall]").expect("string write");
        prf_lines(w, &self.report.overall);
        for (kind, p) in &self.report.per_type {
            writeln!(w, "\n[type.{kind}]").expect("string write");
            prf_lines(w, p);
        }
        if !self.loss_curve.is_empty() {
            writeln!(w, "\n[epochs]").expect("string write");
            for e in &self.loss_curve {
                write!(w, "{} = loss {:.6} train_f1 {:.2}", e.epoch, e.train_loss, e.train_f1).expect("string write");
                if let Some(v) = e.val_f1 {
                    write!(w, " val_f1 {v:.2}").expect("string write");
                }
                writeln!(w).expect("string write");
            }
        }
        writeln!(w, "\n[config]").expect("string write");
        for (k, v) in model_config_pairs(&self.config) {
            writeln!(w, "{k} = {v}").expect("string write");
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.render()).map_err(|e| Error::io(path, e))
    }
}
