//! End-to-end model: embeddings, self-attention, cross-modal fusion, visual
//! gate, BiLSTM and CRF, plus the ablation variants.

use std::rc::Rc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::attention::{cmt_layer_traced, init_attention_params, AttentionParams};
use crate::autodiff::{Dropout, Fault, Graph, Var};
use crate::corpus::TokenSequence;
use crate::crf::{self, initial_transitions, viterbi_decode};
use crate::error::{Error, Result};
use crate::features::{embed_tokens, project_visual, VisualFeatureGrid, Vocabulary};
use crate::gate::{apply_gate, fuse, visual_gate};
use crate::gradcheck::{grad_check, GradCheckOptions, GradCheckReport};
use crate::lstm::{bilstm_forward, init_lstm_params, LstmDirection};
use crate::params::{uniform, xavier_uniform, Parameters};
use crate::tags::{Tag, NUM_TAGS};
use crate::tensor::Tensor;

const EMBED_INIT: f64 = 0.1;

/// Architecture and training hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    /// Model dimension `d`.
    pub d: usize,
    /// Attention heads `m`.
    pub heads: usize,
    /// LSTM hidden size `d'` per direction.
    pub lstm_hidden: usize,
    /// Visual blocks per image.
    pub visual_rows: usize,
    /// Feature size of each visual block.
    pub visual_dims: usize,
    pub dropout: f64,
    /// Maximum sequence length including `[CLS]` and `[SEP]`.
    pub max_len: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub use_self_attention: bool,
    pub use_cross_modal: bool,
    pub use_visual_gate: bool,
    pub text_only: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            d: 768,
            heads: 12,
            lstm_hidden: 768,
            visual_rows: 49,
            visual_dims: 2048,
            dropout: 0.1,
            max_len: 128,
            learning_rate: 5e-5,
            batch_size: 16,
            epochs: 30,
            seed: 42,
            use_self_attention: true,
            use_cross_modal: true,
            use_visual_gate: true,
            text_only: false,
        }
    }
}

impl ModelConfig {
    /// Small configuration used for gradient checks and fast tests.
    pub fn tiny() -> Self {
        ModelConfig {
            d: 8,
            heads: 2,
            lstm_hidden: 8,
            visual_rows: 4,
            visual_dims: 16,
            dropout: 0.1,
            max_len: 32,
            learning_rate: 1e-2,
            batch_size: 4,
            epochs: 300,
            seed: 7,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.d == 0 || self.lstm_hidden == 0 {
            return fail("model and LSTM dimensions must be positive".into());
        }
        if self.heads == 0 || !self.d.is_multiple_of(self.heads) {
            return fail(format!("{} heads do not divide model dim {}", self.heads, self.d));
        }
        if self.visual_rows == 0 || self.visual_dims == 0 {
            return fail("visual grid dimensions must be positive".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return fail(format!("dropout {} outside [0, 1)", self.dropout));
        }
        if self.max_len < 3 {
            return fail(format!("max_len {} leaves no room for tokens besides [CLS] and [SEP]", self.max_len));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return fail(format!("learning rate {} must be positive", self.learning_rate));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return fail("batch_size and epochs must be positive".into());
        }
        if self.text_only && !self.use_cross_modal {
            return fail("text_only already removes the visual pathway; do not combine it with disabling cross-modal fusion".into());
        }
        if self.text_only && !self.use_visual_gate {
            return fail("text_only already removes the visual pathway; do not combine it with disabling the visual gate".into());
        }
        Ok(())
    }

    /// Longest sentence that fits without truncation.
    pub fn max_tokens(&self) -> usize {
        self.max_len - 2
    }

    pub fn variant_name(&self) -> String {
        if self.text_only {
            return "text-only".into();
        }
        let mut removed = Vec::new();
        if !self.use_self_attention {
            removed.push("SA");
        }
        if !self.use_cross_modal {
            removed.push("MR");
        }
        if !self.use_visual_gate {
            removed.push("VG");
        }
        if removed.is_empty() {
            "full".into()
        } else {
            format!("w/o {}", removed.join("+"))
        }
    }
}

/// One sentence with its image features.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub seq: TokenSequence,
    pub grid: VisualFeatureGrid,
}

/// Intermediate values recorded by [`Model::forward_traced`].
#[derive(Debug, Default)]
pub struct ForwardTrace {
    /// Every attention weight matrix, one per head per block.
    pub attention: Vec<Rc<Tensor>>,
    /// Visual gate values when the gate is wired.
    pub gate: Option<Rc<Tensor>>,
}

#[derive(Debug, Clone)]
pub struct Model {
    pub config: ModelConfig,
    pub vocab: Vocabulary,
    pub params: Parameters,
}

/// Build the parameter set for the variant described by `config`.
pub fn build_variant(config: ModelConfig, vocab: Vocabulary, seed: u64) -> Result<Model> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = Parameters::new();
    let d = config.d;
    params.insert("embed/word", uniform(&[vocab.len(), d], EMBED_INIT, &mut rng))?;
    params.insert("embed/position", uniform(&[config.max_len, d], EMBED_INIT, &mut rng))?;
    if config.use_self_attention {
        init_attention_params(&mut params, "self_attn", d, &mut rng)?;
    }
    if !config.text_only {
        params.insert("visual/proj", xavier_uniform(config.visual_dims, d, &mut rng))?;
        if config.use_cross_modal {
            for block in ["cmt_image", "cmt_coupled", "cmt_word"] {
                init_attention_params(&mut params, block, d, &mut rng)?;
            }
        }
        if config.use_visual_gate {
            params.insert("gate/wa", xavier_uniform(d, d, &mut rng))?;
            params.insert("gate/wq", xavier_uniform(d, d, &mut rng))?;
        }
    }
    init_lstm_params(&mut params, "lstm", 2 * d, config.lstm_hidden, &mut rng)?;
    params.insert("crf/emission", xavier_uniform(NUM_TAGS, 2 * config.lstm_hidden, &mut rng))?;
    params.insert("crf/transitions", initial_transitions(NUM_TAGS))?;
    Ok(Model { config, vocab, params })
}

impl Model {
    pub fn parameter_count(&self) -> usize {
        self.params.scalar_count()
    }

    /// Number of leading tokens the model sees; longer inputs are truncated.
    pub fn visible_len(&self, n: usize) -> usize {
        n.min(self.config.max_tokens())
    }

    fn visible<'a>(&self, tokens: &'a [String]) -> &'a [String] {
        let keep = self.visible_len(tokens.len());
        if keep < tokens.len() {
            log::warn!(
                "sentence of {} tokens truncated to {} (max_len {})",
                tokens.len(),
                keep,
                self.config.max_len
            );
        }
        &tokens[..keep]
    }

    /// Emission scores `L×n` for the (possibly truncated) sentence.
    pub fn forward<'g, R: Rng>(
        &self,
        g: &'g Graph,
        params: &Parameters,
        tokens: &[String],
        grid: &VisualFeatureGrid,
        drop: &mut Dropout<R>,
    ) -> Result<Var<'g>> {
        self.forward_inner(g, params, tokens, grid, drop, None)
    }

    /// Like [`Model::forward`], recording attention and gate values.
    pub fn forward_traced<'g, R: Rng>(
        &self,
        g: &'g Graph,
        params: &Parameters,
        tokens: &[String],
        grid: &VisualFeatureGrid,
        drop: &mut Dropout<R>,
        trace: &mut ForwardTrace,
    ) -> Result<Var<'g>> {
        self.forward_inner(g, params, tokens, grid, drop, Some(trace))
    }

    fn forward_inner<'g, R: Rng>(
        &self,
        g: &'g Graph,
        params: &Parameters,
        tokens: &[String],
        grid: &VisualFeatureGrid,
        drop: &mut Dropout<R>,
        mut trace: Option<&mut ForwardTrace>,
    ) -> Result<Var<'g>> {
        let cfg = &self.config;
        let tokens = self.visible(tokens);
        let n = tokens.len();
        let positions = n + 2;

        let mut cmt = |q: Var<'g>, kv: Var<'g>, block: &str, drop: &mut Dropout<R>| -> Result<Var<'g>> {
            let p = AttentionParams::bind(g, params, block, cfg.heads)?;
            let out = cmt_layer_traced(q, kv, &p, drop)?;
            if let Some(t) = trace.as_deref_mut() {
                t.attention.extend(out.weights.iter().map(|w| w.value()));
            }
            Ok(out.output)
        };

        let word = g.param(params, "embed/word")?;
        let pos = g.param(params, "embed/position")?;
        let c = drop.apply(embed_tokens(tokens, &self.vocab, word, Some(pos))?)?;
        let r = if cfg.use_self_attention { cmt(c, c, "self_attn", drop)? } else { c };

        let h = if cfg.text_only {
            fuse(r, g.constant(Tensor::zeros(&[cfg.d, positions])))?
        } else {
            if grid.rows() != cfg.visual_rows || grid.dims() != cfg.visual_dims {
                return Err(Error::shape(
                    "visual grid",
                    &[cfg.visual_rows, cfg.visual_dims],
                    &[grid.rows(), grid.dims()],
                ));
            }
            let v = project_visual(g.constant(grid.values().clone()), g.param(params, "visual/proj")?)?;
            let (a, qv) = if cfg.use_cross_modal {
                let p = cmt(v, r, "cmt_image", drop)?;
                let a = cmt(r, p, "cmt_coupled", drop)?;
                let qv = cmt(r, v, "cmt_word", drop)?;
                (a, qv)
            } else {
                (r, v.mean_cols()?.repeat_cols(positions)?)
            };
            let b = if cfg.use_visual_gate {
                let gate = visual_gate(a, qv, g.param(params, "gate/wa")?, g.param(params, "gate/wq")?)?;
                if let Some(t) = trace {
                    t.gate = Some(gate.value());
                }
                apply_gate(gate, qv)?
            } else {
                qv
            };
            fuse(a, b)?
        };

        let fwd = LstmDirection::bind(g, params, "lstm/fwd")?;
        let bwd = LstmDirection::bind(g, params, "lstm/bwd")?;
        let states = bilstm_forward(h, &fwd, &bwd)?.slice_cols(1, n)?;
        g.param(params, "crf/emission")?.matmul(states)
    }

    /// Mean CRF negative log-likelihood over `batch`.
    pub fn batch_loss<'g, R: Rng>(
        &self,
        g: &'g Graph,
        params: &Parameters,
        batch: &[&Example],
        drop: &mut Dropout<R>,
    ) -> Result<Var<'g>> {
        if batch.is_empty() {
            return Err(Error::contract("loss of an empty batch"));
        }
        let transitions = g.param(params, "crf/transitions")?;
        let mut total: Option<Var<'g>> = None;
        for ex in batch {
            ex.seq.validate()?;
            let emissions = self.forward(g, params, &ex.seq.tokens, &ex.grid, drop)?;
            let labels: Vec<usize> = ex.seq.labels[..emissions.cols()].iter().map(|t| t.index()).collect();
            let nll = g.crf_nll(emissions, transitions, &labels, None)?;
            total = Some(match total {
                Some(t) => t.add(nll)?,
                None => nll,
            });
        }
        Ok(total.expect("nonempty batch").scale(1.0 / batch.len() as f64))
    }

    /// Evaluation-mode mean loss as a plain number.
    pub fn eval_loss(&self, batch: &[&Example]) -> Result<f64> {
        let g = Graph::new();
        Ok(self.batch_loss(&g, &self.params, batch, &mut Dropout::disabled())?.item())
    }

    /// Evaluation-mode emissions.
    pub fn emissions(&self, tokens: &[String], grid: &VisualFeatureGrid) -> Result<Tensor> {
        let g = Graph::new();
        let e = self.forward(&g, &self.params, tokens, grid, &mut Dropout::disabled())?;
        Ok((*e.value()).clone())
    }

    /// Viterbi labels for every token; positions past the length cap get `O`.
    pub fn predict(&self, tokens: &[String], grid: &VisualFeatureGrid) -> Result<Vec<Tag>> {
        if tokens.is_empty() {
            return Err(Error::contract("cannot tag an empty sentence"));
        }
        let emissions = self.emissions(tokens, grid)?;
        let transitions = self.params.require("crf/transitions")?;
        let path = viterbi_decode(&emissions, transitions)?;
        let mut tags: Vec<Tag> = path.into_iter().map(Tag::from_index).collect::<Option<_>>().ok_or_else(|| {
            Error::Numerical("decoder produced an out-of-range tag".into())
        })?;
        tags.resize(tokens.len(), Tag::O);
        Ok(tags)
    }

    /// Every parameter entry is finite, except the fixed `-inf` structural
    /// transitions.
    pub fn check_finite(&self) -> Result<()> {
        check_finite(&self.params)
    }
}

/// Step for [`tiny_grad_check`]: the smallest allowed, which keeps
/// perturbations from crossing ReLU kinks at most evaluation points.
pub const TINY_CHECK_EPS: f64 = 1e-5;

/// Gradient check of the whole assembled loss on a tiny model
/// (`d=8`, two heads, `d'=8`, a 4×16 grid, three tokens). Also returns the
/// smallest ReLU input magnitude at the evaluation point.
pub fn tiny_grad_check(seed: u64, fault: Option<Fault>) -> Result<(GradCheckReport, f64)> {
    let config = ModelConfig::tiny();
    let tokens: Vec<String> = ["Asmara", "visits", "Lahore"].map(String::from).to_vec();
    let labels = ["B-PER", "O", "B-LOC"].map(|t| t.parse().expect("valid tag")).to_vec();
    let vocab = Vocabulary::build([tokens.as_slice()]);
    let model = build_variant(config.clone(), vocab, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
    let example = Example {
        seq: TokenSequence::new("gradcheck", tokens, labels)?,
        grid: VisualFeatureGrid::new(uniform(&[config.visual_rows, config.visual_dims], 1.0, &mut rng))?,
    };
    let probe = Graph::new();
    model.batch_loss(&probe, &model.params, &[&example], &mut Dropout::disabled())?;
    let margin = probe.relu_margin().unwrap_or(f64::INFINITY);
    let report = grad_check(
        &model.params,
        |g, p| model.batch_loss(g, p, &[&example], &mut Dropout::disabled()),
        GradCheckOptions { fault, eps: TINY_CHECK_EPS, ..Default::default() },
    )?;
    Ok((report, margin))
}

pub fn check_finite(params: &Parameters) -> Result<()> {
    for (name, t) in params.iter() {
        if name == "crf/transitions" {
            let size = t.rows();
            for from in 0..size {
                for to in 0..t.cols() {
                    let v = t.get(from, to);
                    let structural = crf::is_structural(size - 2, from, to);
                    if !(v.is_finite() || (structural && v == f64::NEG_INFINITY)) {
                        return Err(Error::Numerical(format!("{name}[{from},{to}] is {v}")));
                    }
                }
            }
        } else if let Some(k) = t.data().iter().position(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!("{name} element {k} is {}", t.data()[k])));
        }
    }
    Ok(())
}
