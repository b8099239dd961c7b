//! Multi-head attention and the cross-modal transformer (CMT) layers.
//!
//! All matrices are `d × positions`: each column is one token or one visual
//! block. Softmax runs over the key axis.

use rand::Rng;

use crate::autodiff::{concat_cols, Dropout, Graph, Var};
use crate::error::{Error, Result};
use crate::params::{xavier_uniform, Parameters};
use crate::tensor::Tensor;

pub const LN_EPS: f64 = 1e-5;

/// Parameter names relative to a block prefix, in storage order.
pub const ATTENTION_PARAM_NAMES: [&str; 12] = [
    "wq", "wk", "wv", "wo", "ffn_w1", "ffn_b1", "ffn_w2", "ffn_b2", "ln1_gain", "ln1_bias", "ln2_gain", "ln2_bias",
];

/// Register the parameters of one attention block under `prefix/`.
///
/// Head projections are stored stacked: rows `i*d/m .. (i+1)*d/m` of `wq`
/// form head `i`'s `(d/m)×d` query matrix, likewise for `wk` and `wv`.
pub fn init_attention_params<R: Rng>(params: &mut Parameters, prefix: &str, d: usize, rng: &mut R) -> Result<()> {
    let hidden = 4 * d;
    let name = |n: &str| format!("{prefix}/{n}");
    for n in ["wq", "wk", "wv", "wo"] {
        params.insert(name(n), xavier_uniform(d, d, rng))?;
    }
    params.insert(name("ffn_w1"), xavier_uniform(hidden, d, rng))?;
    params.insert(name("ffn_b1"), Tensor::zeros(&[hidden]))?;
    params.insert(name("ffn_w2"), xavier_uniform(d, hidden, rng))?;
    params.insert(name("ffn_b2"), Tensor::zeros(&[d]))?;
    for ln in ["ln1", "ln2"] {
        params.insert(name(&format!("{ln}_gain")), Tensor::full(&[d], 1.0))?;
        params.insert(name(&format!("{ln}_bias")), Tensor::zeros(&[d]))?;
    }
    Ok(())
}

/// One attention block's parameters bound on a graph.
#[derive(Debug, Clone, Copy)]
pub struct AttentionParams<'g> {
    pub wq: Var<'g>,
    pub wk: Var<'g>,
    pub wv: Var<'g>,
    pub wo: Var<'g>,
    pub ffn_w1: Var<'g>,
    pub ffn_b1: Var<'g>,
    pub ffn_w2: Var<'g>,
    pub ffn_b2: Var<'g>,
    pub ln1_gain: Var<'g>,
    pub ln1_bias: Var<'g>,
    pub ln2_gain: Var<'g>,
    pub ln2_bias: Var<'g>,
    pub heads: usize,
}

impl<'g> AttentionParams<'g> {
    pub fn bind(g: &'g Graph, params: &Parameters, prefix: &str, heads: usize) -> Result<Self> {
        let p = |n: &str| g.param(params, &format!("{prefix}/{n}"));
        let bound = AttentionParams {
            wq: p("wq")?,
            wk: p("wk")?,
            wv: p("wv")?,
            wo: p("wo")?,
            ffn_w1: p("ffn_w1")?,
            ffn_b1: p("ffn_b1")?,
            ffn_w2: p("ffn_w2")?,
            ffn_b2: p("ffn_b2")?,
            ln1_gain: p("ln1_gain")?,
            ln1_bias: p("ln1_bias")?,
            ln2_gain: p("ln2_gain")?,
            ln2_bias: p("ln2_bias")?,
            heads,
        };
        bound.validate()?;
        Ok(bound)
    }

    pub fn model_dim(&self) -> usize {
        self.wq.rows()
    }

    fn validate(&self) -> Result<()> {
        let d = self.model_dim();
        if self.heads == 0 || !d.is_multiple_of(self.heads) {
            return Err(Error::Config(format!("{} heads do not divide model dim {d}", self.heads)));
        }
        for w in [self.wq, self.wk, self.wv, self.wo] {
            if w.shape() != [d, d] {
                return Err(Error::shape("attention projection", &[d, d], &w.shape()));
            }
        }
        Ok(())
    }
}

/// Output of multi-head attention plus the per-head weight matrices
/// (`queries × keys`, rows summing to one).
#[derive(Debug)]
pub struct AttentionOutput<'g> {
    pub output: Var<'g>,
    pub weights: Vec<Var<'g>>,
}

/// Multi-head cross-modal attention `MH-CA(q_src, kv_src)`.
///
/// Head `i`: `softmax([W_iQ q]ᵀ[W_iK kv] / sqrt(d/m)) · [W_iV kv]ᵀ`; heads are
/// concatenated on the feature axis and projected by `W′`. The result has
/// one column per query position.
pub fn mh_cross_attention<'g>(q_src: Var<'g>, kv_src: Var<'g>, p: &AttentionParams<'g>) -> Result<AttentionOutput<'g>> {
    let d = p.model_dim();
    if q_src.rows() != d || kv_src.rows() != d {
        return Err(Error::shape("mh_cross_attention", &q_src.shape(), &kv_src.shape()));
    }
    let dh = d / p.heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let q = p.wq.matmul(q_src)?;
    let k = p.wk.matmul(kv_src)?;
    let v = p.wv.matmul(kv_src)?;
    let mut heads = Vec::with_capacity(p.heads);
    let mut weights = Vec::with_capacity(p.heads);
    for h in 0..p.heads {
        let qh = q.slice_rows(h * dh, dh)?;
        let kh = k.slice_rows(h * dh, dh)?;
        let vh = v.slice_rows(h * dh, dh)?;
        let attn = qh.t()?.matmul(kh)?.scale(scale).softmax_rows()?;
        heads.push(attn.matmul(vh.t()?)?);
        weights.push(attn);
    }
    let joined = concat_cols(&heads)?.t()?;
    Ok(AttentionOutput {
        output: p.wo.matmul(joined)?,
        weights,
    })
}

/// Position-wise FFN: affine(d→4d), ReLU, affine(4d→d).
fn feed_forward<'g, R: Rng>(x: Var<'g>, p: &AttentionParams<'g>, drop: &mut Dropout<R>) -> Result<Var<'g>> {
    let hidden = p.ffn_w1.matmul(x)?.add_col_bias(p.ffn_b1)?.relu();
    let hidden = drop.apply(hidden)?;
    p.ffn_w2.matmul(hidden)?.add_col_bias(p.ffn_b2)
}

/// CMT layer: `P̃ = LN(q + MH-CA(q, kv))`, `P = LN(P̃ + FFN(P̃))`.
pub fn cmt_layer<'g, R: Rng>(
    q_stream: Var<'g>,
    kv_stream: Var<'g>,
    p: &AttentionParams<'g>,
    drop: &mut Dropout<R>,
) -> Result<Var<'g>> {
    Ok(cmt_layer_traced(q_stream, kv_stream, p, drop)?.output)
}

/// [`cmt_layer`] that also returns the attention weights of its MH-CA.
pub fn cmt_layer_traced<'g, R: Rng>(
    q_stream: Var<'g>,
    kv_stream: Var<'g>,
    p: &AttentionParams<'g>,
    drop: &mut Dropout<R>,
) -> Result<AttentionOutput<'g>> {
    let attention = mh_cross_attention(q_stream, kv_stream, p)?;
    let attended = drop.apply(attention.output)?;
    let mid = q_stream.add(attended)?.layer_norm_cols(p.ln1_gain, p.ln1_bias, LN_EPS)?;
    let ff = feed_forward(mid, p, drop)?;
    let ff = drop.apply(ff)?;
    Ok(AttentionOutput {
        output: mid.add(ff)?.layer_norm_cols(p.ln2_gain, p.ln2_bias, LN_EPS)?,
        weights: attention.weights,
    })
}

/// Text self-attention transformer layer: `R` from `C`.
pub fn self_attention_layer<'g, R: Rng>(c: Var<'g>, p: &AttentionParams<'g>, drop: &mut Dropout<R>) -> Result<Var<'g>> {
    cmt_layer(c, c, p, drop)
}

/// Image-aware word representations.
///
/// First CMT: visual blocks query the text, `P = CMT(V, R)` (`d×R`).
/// Coupled CMT: text queries `P`, `A = CMT(R, P)` (`d×(n+2)`), so the result
/// is aligned to token positions.
pub fn image_aware_words<'g, R: Rng>(
    r: Var<'g>,
    v: Var<'g>,
    first: &AttentionParams<'g>,
    coupled: &AttentionParams<'g>,
    drop: &mut Dropout<R>,
) -> Result<(Var<'g>, Var<'g>)> {
    let p = cmt_layer(v, r, first, drop)?;
    let a = cmt_layer(r, p, coupled, drop)?;
    Ok((a, p))
}

/// Word-aware visual representations `Qv = CMT(R, V)`.
pub fn word_aware_visual<'g, R: Rng>(r: Var<'g>, v: Var<'g>, p: &AttentionParams<'g>, drop: &mut Dropout<R>) -> Result<Var<'g>> {
    cmt_layer(r, v, p, drop)
}
