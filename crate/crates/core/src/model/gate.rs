//! Context gate: `g = σ(W_cs (c_s + c_v) + b_cs) + (c_s · W_tq t_q) 1
//! + (c_s · W_ts t_s)(c_v · W_tv t_v) 1`.

use crate::error::{Error, Result};
use crate::numeric::{add_outer, dot, matvec, sigmoid, Gradients, ParameterSet};

use super::names;
use super::ActVectors;

/// Borrowed gate weights.
#[derive(Debug, Clone, Copy)]
pub struct GateView<'a> {
    pub hidden: usize,
    pub w_cs: &'a [f64],
    pub b_cs: &'a [f64],
    pub w_tq: &'a [f64],
    pub w_ts: &'a [f64],
    pub w_tv: &'a [f64],
}

impl<'a> GateView<'a> {
    pub fn new(params: &'a ParameterSet, hidden: usize) -> Result<Self> {
        let view = GateView {
            hidden,
            w_cs: params.data(names::GATE_W_CS)?,
            b_cs: params.data(names::GATE_B_CS)?,
            w_tq: params.data(names::GATE_W_TQ)?,
            w_ts: params.data(names::GATE_W_TS)?,
            w_tv: params.data(names::GATE_W_TV)?,
        };
        let hh = hidden * hidden;
        if [view.w_cs, view.w_tq, view.w_ts, view.w_tv].iter().any(|w| w.len() != hh)
            || view.b_cs.len() != hidden
        {
            return Err(Error::Shape(format!("gate parameters do not match H={hidden}")));
        }
        Ok(view)
    }
}

/// `W_tq t_q`, `W_ts t_s`, `W_tv t_v`, computed once per turn.
#[derive(Debug, Clone, Default)]
pub struct ActProjection {
    pub request: Option<Vec<f64>>,
    pub confirm_slot: Option<Vec<f64>>,
    pub confirm_value: Option<Vec<f64>>,
}

pub fn project_acts(view: &GateView, acts: &ActVectors) -> Result<ActProjection> {
    let h = view.hidden;
    let project = |w: &[f64], t: &Option<Vec<f64>>| -> Result<Option<Vec<f64>>> {
        match t {
            None => Ok(None),
            Some(t) if t.len() != h => Err(Error::Shape(format!("act vector of length {} for H={h}", t.len()))),
            Some(t) => {
                let mut out = vec![0.0; h];
                matvec(w, t, &mut out);
                Ok(Some(out))
            }
        }
    };
    Ok(ActProjection {
        request: project(view.w_tq, &acts.request)?,
        confirm_slot: project(view.w_ts, &acts.confirm_slot)?,
        confirm_value: project(view.w_tv, &acts.confirm_value)?,
    })
}

/// `σ(W_cs (c_s + c_v) + b_cs)`; depends only on the candidate.
pub fn relevance_gate(view: &GateView, cs: &[f64], cv: Option<&[f64]>) -> Vec<f64> {
    let h = view.hidden;
    let sum: Vec<f64> = match cv {
        Some(cv) => cs.iter().zip(cv).map(|(a, b)| a + b).collect(),
        None => cs.to_vec(),
    };
    let mut z = vec![0.0; h];
    matvec(view.w_cs, &sum, &mut z);
    z.iter().zip(view.b_cs).map(|(z, b)| sigmoid(z + b)).collect()
}

/// Scalar gate terms for one candidate under one turn's acts.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ActTerms {
    /// `c_s · W_tq t_q`
    pub request: f64,
    /// `c_s · W_ts t_s`
    pub slot_match: f64,
    /// `c_v · W_tv t_v`
    pub value_match: f64,
}

impl ActTerms {
    pub fn total(&self) -> f64 {
        self.request + self.slot_match * self.value_match
    }
}

pub fn act_terms(proj: &ActProjection, cs: &[f64], cv: Option<&[f64]>) -> ActTerms {
    let request = proj.request.as_ref().map_or(0.0, |q| dot(cs, q));
    let (slot_match, value_match) = match (&proj.confirm_slot, &proj.confirm_value) {
        (Some(s), Some(v)) => (dot(cs, s), cv.map_or(0.0, |cv| dot(cv, v))),
        _ => (0.0, 0.0),
    };
    ActTerms {
        request,
        slot_match,
        value_match,
    }
}

/// Full gate vector for `(c_s, c_v, a_t)`.
pub fn context_gate(
    params: &ParameterSet,
    hidden: usize,
    cs: &[f64],
    cv: Option<&[f64]>,
    acts: &ActVectors,
) -> Result<Vec<f64>> {
    let view = GateView::new(params, hidden)?;
    if cs.len() != hidden || cv.is_some_and(|v| v.len() != hidden) {
        return Err(Error::Shape(format!("candidate vectors must have length {hidden}")));
    }
    let proj = project_acts(&view, acts)?;
    let g1 = relevance_gate(&view, cs, cv);
    let extra = act_terms(&proj, cs, cv).total();
    Ok(g1.into_iter().map(|v| v + extra).collect())
}

/// `dW_cs += dz (c_s + c_v)^T`, `db_cs += dz` with `dz = dg ⊙ g1 ⊙ (1 - g1)`,
/// where `dg` is the gate-output gradient summed over every use of the
/// candidate.
pub fn relevance_backward(
    hidden: usize,
    cs: &[f64],
    cv: Option<&[f64]>,
    g1: &[f64],
    dg: &[f64],
    grads: &mut Gradients,
) {
    let h = hidden;
    let dz: Vec<f64> = dg.iter().zip(g1).map(|(d, s)| d * s * (1.0 - s)).collect();
    let sum: Vec<f64> = match cv {
        Some(cv) => cs.iter().zip(cv).map(|(a, b)| a + b).collect(),
        None => cs.to_vec(),
    };
    add_outer(grads.slot(names::GATE_W_CS, h * h), &dz, &sum, 1.0);
    for (b, d) in grads.slot(names::GATE_B_CS, h).iter_mut().zip(&dz) {
        *b += d;
    }
}

/// Collects the act-weight gradients of one turn across candidates so each
/// act matrix receives a single outer product.
#[derive(Debug, Clone)]
pub struct ActGradients {
    request: Vec<f64>,
    slot: Vec<f64>,
    value: Vec<f64>,
}

impl ActGradients {
    pub fn new(hidden: usize) -> Self {
        ActGradients {
            request: vec![0.0; hidden],
            slot: vec![0.0; hidden],
            value: vec![0.0; hidden],
        }
    }

    /// `total` is the sum over dimensions of the gate-output gradient.
    pub fn add(&mut self, cs: &[f64], cv: Option<&[f64]>, terms: &ActTerms, total: f64) {
        if total == 0.0 {
            return;
        }
        for (u, c) in self.request.iter_mut().zip(cs) {
            *u += total * c;
        }
        if terms.value_match != 0.0 {
            let s = total * terms.value_match;
            for (u, c) in self.slot.iter_mut().zip(cs) {
                *u += s * c;
            }
        }
        if let Some(cv) = cv {
            if terms.slot_match != 0.0 {
                let s = total * terms.slot_match;
                for (u, c) in self.value.iter_mut().zip(cv) {
                    *u += s * c;
                }
            }
        }
    }

    pub fn flush(&self, acts: &ActVectors, grads: &mut Gradients) {
        let h = self.request.len();
        if let Some(tq) = &acts.request {
            add_outer(grads.slot(names::GATE_W_TQ, h * h), &self.request, tq, 1.0);
        }
        if let (Some(ts), Some(tv)) = (&acts.confirm_slot, &acts.confirm_value) {
            add_outer(grads.slot(names::GATE_W_TS, h * h), &self.slot, ts, 1.0);
            add_outer(grads.slot(names::GATE_W_TV, h * h), &self.value, tv, 1.0);
        }
    }
}
