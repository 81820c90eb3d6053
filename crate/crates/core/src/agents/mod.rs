//! Agent algorithms, their actor policies and the learner that drives them.

pub mod bc;
pub mod builder;
pub mod config;
pub mod d4pg;
pub mod dqn;
pub mod impala;
pub mod learner;
pub mod mcts;
pub mod mpo;
pub mod r2d2;
pub mod source;

use ndarray::Array2;

use crate::error::{Error, Result};

pub use builder::{AgentBuilder, PolicyRole, VecSink, INITIAL_PRIORITY};
pub use config::{AgentConfig, AlgorithmKind, Exploration, ValueTarget};
pub use learner::{Algorithm, Learner, LearnerMetrics, LearnerState, Update};
pub use source::{DatasetSource, ExperienceBatch, ExperienceSource, MixedSource, TableSource};

/// Stacks equal-length rows into a batch matrix.
pub(crate) fn stack_rows<'a>(rows: impl IntoIterator<Item = &'a [f64]>) -> Result<Array2<f64>> {
    let mut data = Vec::new();
    let mut width = None;
    let mut n = 0;
    for row in rows {
        match width {
            None => width = Some(row.len()),
            Some(w) if w != row.len() => return Err(Error::Shape(format!("row of length {} in a batch of width {w}", row.len()))),
            _ => {}
        }
        data.extend_from_slice(row);
        n += 1;
    }
    let width = width.ok_or_else(|| Error::Shape("cannot stack an empty batch".into()))?;
    Array2::from_shape_vec((n, width), data).map_err(|e| Error::Shape(e.to_string()))
}
