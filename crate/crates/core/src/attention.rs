//! Additive temporal attention over a sequence of hidden states.
//!
//! Scores are `e_t = vᵀ tanh(W_a h_t + b_a)`. In [`AttentionMode::Softmax`] the
//! weights are `softmax(e)`; in [`AttentionMode::Tanh`] they are `tanh(e_t)`
//! taken independently per time stamp, so they lie in `[-1, 1]` and carry no
//! sum constraint.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::diffcore::{ParamRef, Tape, Var};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttentionMode {
    Tanh,
    Softmax,
}

#[derive(Clone, Debug)]
pub struct AttentionHead {
    pub w_a: ParamRef,
    pub b_a: ParamRef,
    pub v: ParamRef,
    pub mode: AttentionMode,
}

impl AttentionHead {
    pub fn new<R: Rng + ?Sized>(hidden: usize, proj: usize, mode: AttentionMode, rng: &mut R) -> Self {
        let w_a = ParamRef::glorot(proj, hidden, rng);
        let v_init = ParamRef::glorot(proj, 1, rng).value().into_data();
        AttentionHead {
            w_a,
            b_a: ParamRef::zeros(&[proj]),
            v: ParamRef::new(crate::diffcore::Tensor::vector(v_init)),
            mode,
        }
    }

    /// Scores of shape `[T]`, or `[B×T]` when the hidden states are batched.
    pub fn scores(&self, tape: &mut Tape, states: &[Var]) -> Result<Var> {
        if states.is_empty() {
            return Err(Error::usage("attention over an empty sequence"));
        }
        let w = tape.param(&self.w_a);
        let b = tape.param(&self.b_a);
        let v = tape.param(&self.v);
        let mut cols = Vec::with_capacity(states.len());
        for &h in states {
            let proj = tape.matvec(w, h)?;
            let pre = tape.add_bias(proj, b)?;
            let act = tape.tanh(pre);
            cols.push(tape.dot(act, v)?);
        }
        tape.concat(&cols)
    }

    pub fn weights(&self, tape: &mut Tape, scores: Var) -> Result<Var> {
        match self.mode {
            AttentionMode::Tanh => Ok(tape.tanh(scores)),
            AttentionMode::Softmax => tape.softmax(scores),
        }
    }

    /// Scores, weights, and the weighted sum of `states`.
    pub fn forward(&self, tape: &mut Tape, states: &[Var]) -> Result<Var> {
        let e = self.scores(tape, states)?;
        let lambda = self.weights(tape, e)?;
        attended_feature(tape, states, lambda)
    }

    pub fn params(&self) -> Vec<ParamRef> {
        vec![self.w_a.clone(), self.b_a.clone(), self.v.clone()]
    }

    pub(crate) fn named_params(&self, prefix: &str) -> Vec<(String, ParamRef)> {
        vec![
            (format!("{prefix}.w_a"), self.w_a.clone()),
            (format!("{prefix}.b_a"), self.b_a.clone()),
            (format!("{prefix}.v"), self.v.clone()),
        ]
    }
}

/// `Σ_t λ_t h_t`
pub fn attended_feature(tape: &mut Tape, states: &[Var], lambda: Var) -> Result<Var> {
    if tape.value(lambda).cols() != states.len() {
        return Err(Error::dim(
            "attended_feature",
            tape.value(lambda).shape(),
            &[states.len()],
        ));
    }
    tape.weighted_sum(lambda, states)
}
