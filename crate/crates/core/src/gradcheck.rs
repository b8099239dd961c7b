//! Central-difference verification of autodiff gradients.

use std::fmt;

use crate::autodiff::{Fault, Graph, Var};
use crate::error::{Error, Result};
use crate::params::Parameters;

#[derive(Debug, Clone, Copy)]
pub struct GradCheckOptions {
    /// Finite-difference step.
    pub eps: f64,
    /// Maximum relative error accepted per parameter group.
    pub tol: f64,
    /// Backward-rule corruption for negative controls.
    pub fault: Option<Fault>,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            eps: 1e-4,
            tol: 1e-4,
            fault: None,
        }
    }
}

/// Norm floor below which a group's gradient is treated as exactly zero.
const NORM_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct GroupReport {
    pub name: String,
    pub size: usize,
    /// `|analytic - numeric|_2 / max(|analytic|_2 + |numeric|_2, floor)`
    pub rel_error: f64,
    pub analytic_norm: f64,
    pub numeric_norm: f64,
    pub passed: bool,
    pub note: Option<String>,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub groups: Vec<GroupReport>,
    pub tol: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.groups.iter().all(|g| g.passed)
    }

    pub fn max_rel_error(&self) -> f64 {
        self.groups.iter().map(|g| g.rel_error).fold(0.0, f64::max)
    }
}

impl fmt::Display for GradCheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for g in &self.groups {
            write!(
                f,
                "{:<4} {:<28} n={:<5} rel_err={:.3e} |grad|={:.3e}",
                if g.passed { "ok" } else { "FAIL" },
                g.name,
                g.size,
                g.rel_error,
                g.analytic_norm
            )?;
            if let Some(note) = &g.note {
                write!(f, " ({note})")?;
            }
            writeln!(f)?;
        }
        write!(
            f,
            "{} max_rel_err={:.3e} tol={:.1e}",
            if self.passed() { "PASS" } else { "FAIL" },
            self.max_rel_error(),
            self.tol
        )
    }
}

/// Compare autodiff gradients of `build_loss` with central differences for
/// every parameter group in `params`.
pub fn grad_check<F>(params: &Parameters, build_loss: F, opts: GradCheckOptions) -> Result<GradCheckReport>
where
    F: for<'g> Fn(&'g Graph, &Parameters) -> Result<Var<'g>>,
{
    if !(1e-5..=1e-3).contains(&opts.eps) {
        return Err(Error::contract(format!("eps {} outside [1e-5, 1e-3]", opts.eps)));
    }
    let graph = Graph::with_fault(opts.fault);
    let loss = build_loss(&graph, params)?;
    let grads = graph.backward(loss)?;

    let eval = |p: &Parameters| -> Result<f64> {
        let g = Graph::new();
        Ok(build_loss(&g, p)?.item())
    };

    let mut probe = params.clone();
    let mut groups = Vec::new();
    for (name, tensor) in params.iter() {
        let analytic = grads.param(name).map(|t| t.data().to_vec()).unwrap_or_else(|| vec![0.0; tensor.len()]);
        let mut numeric = vec![0.0; tensor.len()];
        let mut note = None;
        for k in 0..tensor.len() {
            let original = tensor.data()[k];
            if !original.is_finite() {
                continue;
            }
            probe.get_mut(name).expect("cloned")
                .data_mut()[k] = original + opts.eps;
            let plus = eval(&probe)?;
            probe.get_mut(name).expect("cloned").data_mut()[k] = original - opts.eps;
            let minus = eval(&probe)?;
            probe.get_mut(name).expect("cloned").data_mut()[k] = original;
            if !plus.is_finite() || !minus.is_finite() {
                note = Some(format!("non-finite loss when perturbing element {k}"));
                break;
            }
            numeric[k] = (plus - minus) / (2.0 * opts.eps);
        }
        let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let diff: Vec<f64> = analytic.iter().zip(&numeric).map(|(a, n)| a - n).collect();
        let (an, nn) = (norm(&analytic), norm(&numeric));
        let rel_error = if note.is_some() {
            f64::INFINITY
        } else {
            norm(&diff) / (an + nn).max(NORM_FLOOR)
        };
        groups.push(GroupReport {
            name: name.to_string(),
            size: tensor.len(),
            rel_error,
            analytic_norm: an,
            numeric_norm: nn,
            passed: rel_error <= opts.tol,
            note,
        });
    }
    Ok(GradCheckReport { groups, tol: opts.tol })
}
