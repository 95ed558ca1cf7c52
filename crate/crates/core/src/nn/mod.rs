//! Small differentiable building blocks in 64-bit floating point:
//! feed-forward networks, an LSTM sequence encoder with pooling, an
//! adaptive-moment optimizer and flat-vector checkpoints.

mod adam;
mod categorical;
mod checkpoint;
mod encoder;
mod lstm;
mod mlp;

pub use adam::Adam;
pub use categorical::{entropy, log_softmax, sample_index, softmax};
pub use checkpoint::{Checkpoint, ModuleParams, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use encoder::{ContextEncoder, EncodedPools, EncoderCache};
pub use lstm::{Lstm, LstmCache};
pub use mlp::{row, stack_rows, Activation, LayerSpec, Mlp, MlpCache};

use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;

/// Named, shaped slice of a flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamBlock {
    pub name: String,
    pub shape: Vec<usize>,
}

impl ParamBlock {
    pub fn new(name: impl Into<String>, shape: Vec<usize>) -> Self {
        Self { name: name.into(), shape }
    }

    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// A module owning one flat parameter vector.
pub trait Parameterized {
    fn params(&self) -> &[f64];
    /// Replaces all parameters; invalidates caches from earlier forward passes.
    fn set_params(&mut self, params: &[f64]) -> Result<()>;
    fn layout(&self) -> Vec<ParamBlock>;

    fn param_count(&self) -> usize {
        self.params().len()
    }
}

static VERSION: AtomicU64 = AtomicU64::new(1);

/// Fresh parameter version used to detect stale forward caches.
pub(crate) fn next_version() -> u64 {
    VERSION.fetch_add(1, Ordering::Relaxed)
}

/// `count` draws from U(-1/√fan_in, 1/√fan_in).
pub(crate) fn uniform_fan_in<R: Rng + ?Sized>(fan_in: usize, count: usize, rng: &mut R) -> Vec<f64> {
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    (0..count).map(|_| rng.random_range(-bound..=bound)).collect()
}
