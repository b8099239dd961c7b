//! Multimodal named entity recognition built from scratch: a small
//! reverse-mode autodiff engine, text self-attention, cross-modal
//! transformer fusion with a visual gate, and a BiLSTM-CRF decoder, plus the
//! corpus tooling (span F1, entity statistics, Cohen's kappa) used to
//! validate datasets.

pub mod attention;
pub mod autodiff;
pub mod checkpoint;
pub mod config;
pub mod corpus;
pub mod crf;
pub mod error;
pub mod features;
pub mod gate;
pub mod gradcheck;
pub mod kappa;
pub mod lstm;
pub mod metrics;
pub mod model;
pub mod optim;
pub mod params;
pub mod report;
pub mod synthetic;
pub mod tags;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
