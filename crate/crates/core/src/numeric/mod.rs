//! Dense numeric kernel: tensors, named parameter sets, batch normalization,
//! optimizers, a finite-difference gradient checker and the checkpoint archive.
//!
//! Gradients throughout the crate are hand-derived per operation; the checker in
//! [`gradcheck`] is what keeps them honest.

pub mod batchnorm;
pub mod checkpoint;
pub mod gradcheck;
pub mod optim;
pub mod params;
pub mod tensor;

pub use batchnorm::{BatchNormState, BatchStats, Mode};
pub use checkpoint::Checkpoint;
pub use gradcheck::{grad_check, GradCheckReport};
pub use optim::{Method, Optimizer, OptimizerConfig};
pub use params::{Gradients, Param, ParameterSet};
pub use tensor::{affine, Tensor};

/// Logistic function.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `out = W x` for a row-major `rows x x.len()` matrix.
#[inline]
pub fn matvec(w: &[f64], x: &[f64], out: &mut [f64]) {
    let cols = x.len();
    debug_assert_eq!(w.len(), out.len() * cols);
    for (o, row) in out.iter_mut().zip(w.chunks_exact(cols)) {
        *o = dot(row, x);
    }
}

/// `W += scale * a b^T`.
#[inline]
pub fn add_outer(w: &mut [f64], a: &[f64], b: &[f64], scale: f64) {
    let cols = b.len();
    debug_assert_eq!(w.len(), a.len() * cols);
    for (row, &ai) in w.chunks_exact_mut(cols).zip(a) {
        let s = scale * ai;
        if s == 0.0 {
            continue;
        }
        for (wij, &bj) in row.iter_mut().zip(b) {
            *wij += s * bj;
        }
    }
}

/// `out += scale * W^T y`.
#[inline]
pub fn add_matvec_transposed(w: &[f64], y: &[f64], out: &mut [f64], scale: f64) {
    let cols = out.len();
    debug_assert_eq!(w.len(), y.len() * cols);
    for (row, &yi) in w.chunks_exact(cols).zip(y) {
        let s = scale * yi;
        if s == 0.0 {
            continue;
        }
        for (o, &wij) in out.iter_mut().zip(row) {
            *o += s * wij;
        }
    }
}

pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}
