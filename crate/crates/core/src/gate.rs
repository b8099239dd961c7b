//! Visual gate and multimodal concatenation.

use crate::autodiff::{concat_rows, Var};
use crate::error::{Error, Result};

/// `g = σ(W_aᵀ A + W_qᵀ Qv)`, no bias.
pub fn visual_gate<'g>(a: Var<'g>, qv: Var<'g>, w_a: Var<'g>, w_q: Var<'g>) -> Result<Var<'g>> {
    if a.shape() != qv.shape() {
        return Err(Error::shape("visual_gate", &a.shape(), &qv.shape()));
    }
    let pre = w_a.t()?.matmul(a)?.add(w_q.t()?.matmul(qv)?)?;
    Ok(pre.sigmoid())
}

/// `B = g ⊙ Qv`.
pub fn apply_gate<'g>(g: Var<'g>, qv: Var<'g>) -> Result<Var<'g>> {
    g.mul(qv)
}

/// `h_i = [a_i; b_i]`, giving a `2d × positions` matrix.
pub fn fuse<'g>(a: Var<'g>, b: Var<'g>) -> Result<Var<'g>> {
    if a.cols() != b.cols() {
        return Err(Error::shape("fuse", &a.shape(), &b.shape()));
    }
    concat_rows(&[a, b])
}
