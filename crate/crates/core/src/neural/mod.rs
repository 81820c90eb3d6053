//! Small differentiable function approximators with hand-written
//! backpropagation. Batches are row-major `Array2<f64>` with one example
//! per row.

mod dense;
mod gru;
mod optim;

pub use dense::{Activation, DenseNet, DenseTape, Head};
pub use gru::{GruCell, GruTape};
pub use optim::{Adam, AdamConfig};

use ndarray::Array2;
use rand::Rng;

use crate::error::{Error, Result};
use crate::interfaces::NamedTensor;

/// Gradients in the same order as [`Parameterized::params`].
pub type Grads = Vec<Vec<f64>>;

/// Anything with an ordered list of named, flat parameter tensors.
pub trait Parameterized {
    /// Tensor names and shapes, in parameter order.
    fn layout(&self) -> Vec<(String, Vec<usize>)>;
    fn params(&self) -> Vec<&[f64]>;
    fn params_mut(&mut self) -> Vec<&mut [f64]>;

    fn num_params(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    fn to_tensors(&self, prefix: &str) -> Vec<NamedTensor> {
        self.layout()
            .into_iter()
            .zip(self.params())
            .map(|((name, shape), data)| NamedTensor::new(format!("{prefix}{name}"), shape, data.to_vec()))
            .collect()
    }

    /// Loads tensors produced by [`Parameterized::to_tensors`] with the same prefix.
    fn load_tensors(&mut self, prefix: &str, tensors: &[NamedTensor]) -> Result<()> {
        let layout = self.layout();
        let mut params = self.params_mut();
        for ((name, shape), dst) in layout.iter().zip(params.iter_mut()) {
            let full = format!("{prefix}{name}");
            let t = tensors
                .iter()
                .find(|t| t.name == full)
                .ok_or_else(|| Error::Shape(format!("missing tensor '{full}'")))?;
            if &t.shape != shape || t.data.len() != dst.len() {
                return Err(Error::Shape(format!("tensor '{full}' has shape {:?}, expected {shape:?}", t.shape)));
            }
            dst.copy_from_slice(&t.data);
        }
        Ok(())
    }

    fn copy_from(&mut self, other: &Self)
    where
        Self: Sized,
    {
        for (dst, src) in self.params_mut().into_iter().zip(other.params()) {
            dst.copy_from_slice(src);
        }
    }

    fn zero_grads(&self) -> Grads {
        self.params().iter().map(|p| vec![0.0; p.len()]).collect()
    }
}

/// How a target network follows its online network.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TargetUpdate {
    /// Copy every `period` learner steps.
    Periodic { period: u64 },
    /// `target <- tau * online + (1 - tau) * target` every step.
    Polyak { tau: f64 },
}

impl Default for TargetUpdate {
    fn default() -> Self {
        TargetUpdate::Periodic { period: 100 }
    }
}

impl TargetUpdate {
    /// Applies the update after learner step number `step` (1-based).
    pub fn apply<P: Parameterized>(&self, step: u64, online: &P, target: &mut P) {
        match *self {
            TargetUpdate::Periodic { period } => {
                if period > 0 && step % period == 0 {
                    for (dst, src) in target.params_mut().into_iter().zip(online.params()) {
                        dst.copy_from_slice(src);
                    }
                }
            }
            TargetUpdate::Polyak { tau } => {
                for (dst, src) in target.params_mut().into_iter().zip(online.params()) {
                    for (d, s) in dst.iter_mut().zip(src) {
                        *d = tau * s + (1.0 - tau) * *d;
                    }
                }
            }
        }
    }
}

/// Uniform `(-1/sqrt(fan_in), 1/sqrt(fan_in))` initialisation.
pub(crate) fn init_uniform<R: Rng + ?Sized>(rng: &mut R, fan_in: usize, shape: (usize, usize)) -> Array2<f64> {
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    Array2::from_shape_fn(shape, |_| rng.gen_range(-bound..bound))
}

pub(crate) fn check_finite(x: &Array2<f64>, what: &str) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what.to_string()))
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Numerically stable softmax of one row.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
    logits.iter().map(|l| l - lse).collect()
}

/// Builds a batch from row vectors.
pub fn batch_from_rows(rows: &[Vec<f64>]) -> Result<Array2<f64>> {
    let cols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != cols) {
        return Err(Error::Shape("ragged batch rows".into()));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Array2::from_shape_vec((rows.len(), cols), flat).map_err(|e| Error::Shape(e.to_string()))
}

pub fn row_batch(row: &[f64]) -> Array2<f64> {
    Array2::from_shape_vec((1, row.len()), row.to_vec()).expect("row shape")
}
