//! Bidirectional LSTM over column sequences.

use rand::Rng;

use crate::autodiff::{concat_cols, concat_rows, Graph, Var};
use crate::error::{Error, Result};
use crate::params::{xavier_uniform, Parameters};
use crate::tensor::Tensor;

/// Register `prefix/{fwd,bwd}/{w_ih,w_hh,b}`. Gate rows are ordered
/// input, forget, candidate, output.
pub fn init_lstm_params<R: Rng>(params: &mut Parameters, prefix: &str, input: usize, hidden: usize, rng: &mut R) -> Result<()> {
    for dir in ["fwd", "bwd"] {
        params.insert(format!("{prefix}/{dir}/w_ih"), xavier_uniform(4 * hidden, input, rng))?;
        params.insert(format!("{prefix}/{dir}/w_hh"), xavier_uniform(4 * hidden, hidden, rng))?;
        params.insert(format!("{prefix}/{dir}/b"), Tensor::zeros(&[4 * hidden]))?;
    }
    Ok(())
}

/// Weights of one LSTM direction.
#[derive(Debug, Clone, Copy)]
pub struct LstmDirection<'g> {
    pub w_ih: Var<'g>,
    pub w_hh: Var<'g>,
    pub b: Var<'g>,
}

impl<'g> LstmDirection<'g> {
    pub fn bind(g: &'g Graph, params: &Parameters, prefix: &str) -> Result<Self> {
        let dir = LstmDirection {
            w_ih: g.param(params, &format!("{prefix}/w_ih"))?,
            w_hh: g.param(params, &format!("{prefix}/w_hh"))?,
            b: g.param(params, &format!("{prefix}/b"))?,
        };
        let h = dir.hidden();
        if dir.w_ih.rows() != 4 * h || dir.w_hh.shape() != [4 * h, h] || dir.b.shape() != [4 * h] {
            return Err(Error::shape("lstm weights", &dir.w_ih.shape(), &dir.w_hh.shape()));
        }
        Ok(dir)
    }

    pub fn hidden(&self) -> usize {
        self.w_hh.cols()
    }
}

/// Run one direction over the columns of `x` with zero initial state.
/// With `reverse`, time runs right to left; outputs stay at their positions.
pub fn lstm_run<'g>(x: Var<'g>, p: &LstmDirection<'g>, reverse: bool) -> Result<Var<'g>> {
    if x.rows() != p.w_ih.cols() {
        return Err(Error::shape("lstm input", &x.shape(), &p.w_ih.shape()));
    }
    let g = x.graph();
    let h_size = p.hidden();
    let steps = x.cols();
    let projected = p.w_ih.matmul(x)?;
    let mut h = g.constant(Tensor::zeros(&[h_size, 1]));
    let mut c = g.constant(Tensor::zeros(&[h_size, 1]));
    let mut outputs = Vec::with_capacity(steps);
    let order: Vec<usize> = if reverse { (0..steps).rev().collect() } else { (0..steps).collect() };
    for t in order {
        let z = projected.slice_cols(t, 1)?.add(p.w_hh.matmul(h)?)?.add_col_bias(p.b)?;
        let i = z.slice_rows(0, h_size)?.sigmoid();
        let f = z.slice_rows(h_size, h_size)?.sigmoid();
        let cand = z.slice_rows(2 * h_size, h_size)?.tanh();
        let o = z.slice_rows(3 * h_size, h_size)?.sigmoid();
        c = f.mul(c)?.add(i.mul(cand)?)?;
        h = o.mul(c.tanh())?;
        outputs.push(h);
    }
    if reverse {
        outputs.reverse();
    }
    concat_cols(&outputs)
}

/// Per-position concatenation `[h_fwd; h_bwd]`, shape `2h × positions`.
pub fn bilstm_forward<'g>(x: Var<'g>, fwd: &LstmDirection<'g>, bwd: &LstmDirection<'g>) -> Result<Var<'g>> {
    let forward = lstm_run(x, fwd, false)?;
    let backward = lstm_run(x, bwd, true)?;
    concat_rows(&[forward, backward])
}
