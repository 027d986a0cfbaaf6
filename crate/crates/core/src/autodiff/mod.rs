//! Dense `f64` tensors with define-by-run recording and reverse-mode
//! gradients.
//!
//! A [`Trace`] records each operation as it is evaluated. Parameters are
//! registered with [`Trace::param`]; [`Trace::backward`] sweeps the record
//! once in reverse and returns [`Gradients`] for all of them. No implicit
//! broadcasting happens except between a rank-0 scalar and a tensor.

mod sparse;
mod tensor;
mod trace;

pub use sparse::SparseMatrix;
pub use tensor::Tensor;
pub use trace::{sigmoid, softplus, Gradients, Trace, Var};

use crate::error::Result;

/// Central finite differences of a scalar function, one coordinate at a time.
///
/// Only evaluates `f`; it never touches the reverse sweep, so it serves as an
/// independent check on [`Trace::backward`].
pub fn central_difference<F>(x: &Tensor, h: f64, mut f: F) -> Result<Tensor>
where
    F: FnMut(&Tensor) -> Result<f64>,
{
    let mut probe = x.clone();
    let mut out = Tensor::zeros_like(x);
    for i in 0..x.len() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + h;
        let up = f(&probe)?;
        probe.data_mut()[i] = orig - h;
        let down = f(&probe)?;
        probe.data_mut()[i] = orig;
        out.data_mut()[i] = (up - down) / (2.0 * h);
    }
    Ok(out)
}

/// Largest element-wise relative error between two gradients.
///
/// Each term is `|a - b| / max(|a|, |b|, floor)`; `floor` keeps entries that
/// are zero up to finite-difference noise from dominating.
pub fn max_relative_error(analytic: &Tensor, numeric: &Tensor, floor: f64) -> f64 {
    analytic
        .data()
        .iter()
        .zip(numeric.data())
        .map(|(&a, &n)| (a - n).abs() / a.abs().max(n.abs()).max(floor))
        .fold(0.0, f64::max)
}
