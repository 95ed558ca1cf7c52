use ndarray::{Array2, Array3, ArrayView2, ArrayView3, Axis};
use rand::Rng;

use crate::error::{Error, Result};

use super::{Activation, Lstm, LstmCache, Mlp, MlpCache, ParamBlock, Parameterized};

/// Recurrent context encoder with same-driver average pooling and linear
/// mean / log-std heads.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextEncoder {
    pub lstm: Lstm,
    pub mean_head: Mlp,
    pub log_std_head: Mlp,
    params: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct EncoderCache {
    lstm: LstmCache,
    mean: MlpCache,
    log_std: MlpCache,
    pools: usize,
    pool_size: usize,
}

/// Per-pool Gaussian parameters of the latent trait.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedPools {
    /// `P × latent`
    pub mean: Array2<f64>,
    /// `P × latent`
    pub log_std: Array2<f64>,
    /// Pooled hidden state, `P × H`.
    pub pooled: Array2<f64>,
}

impl ContextEncoder {
    pub fn new<R: Rng + ?Sized>(input: usize, hidden: usize, latent: usize, rng: &mut R) -> Self {
        let lstm = Lstm::new(input, hidden, rng);
        let mean_head = Mlp::new(&[hidden, latent], Activation::Linear, Activation::Linear, rng);
        let log_std_head = Mlp::new(&[hidden, latent], Activation::Linear, Activation::Linear, rng);
        Self::assemble(lstm, mean_head, log_std_head)
    }

    fn assemble(lstm: Lstm, mean_head: Mlp, log_std_head: Mlp) -> Self {
        let mut params = lstm.params().to_vec();
        params.extend_from_slice(mean_head.params());
        params.extend_from_slice(log_std_head.params());
        Self { lstm, mean_head, log_std_head, params }
    }

    /// Sets both heads to zero so every input encodes to the origin with unit variance.
    pub fn zero_heads(&mut self) {
        let zeros = vec![0.0; self.mean_head.params().len()];
        self.mean_head.set_params(&zeros).expect("same width");
        self.log_std_head.set_params(&zeros).expect("same width");
        *self = Self::assemble(self.lstm.clone(), self.mean_head.clone(), self.log_std_head.clone());
    }

    pub fn input_dim(&self) -> usize {
        self.lstm.input_dim()
    }

    pub fn hidden_dim(&self) -> usize {
        self.lstm.hidden_dim()
    }

    pub fn latent_dim(&self) -> usize {
        self.mean_head.output_dim()
    }

    /// Final hidden state of a single `T × input` sequence.
    pub fn encode_sequence(&self, sequence: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
        let (t, w) = sequence.dim();
        let seq = sequence.to_shape((t, 1, w)).map_err(|_| Error::EmptySequence)?;
        let (h, _) = self.lstm.forward(seq.view())?;
        Ok(h.into_raw_vec_and_offset().0)
    }

    /// Encodes `P` pools of `pool_size` sequences each. `sequences` is
    /// `T × (P·pool_size) × input` with the members of a pool adjacent.
    pub fn forward(&self, sequences: ArrayView3<'_, f64>, pool_size: usize) -> Result<(EncodedPools, EncoderCache)> {
        let batch = sequences.dim().1;
        if pool_size == 0 || batch % pool_size != 0 {
            return Err(Error::WidthMismatch { expected: pool_size, got: batch });
        }
        let pools = batch / pool_size;
        let (h, lstm_cache) = self.lstm.forward(sequences)?;
        let hidden = self.hidden_dim();
        let pooled = h
            .into_shape_with_order((pools, pool_size, hidden))
            .expect("shape")
            .mean_axis(Axis(1))
            .expect("nonempty pool");
        let (mean, mean_cache) = self.mean_head.forward(pooled.view())?;
        let (log_std, log_std_cache) = self.log_std_head.forward(pooled.view())?;
        Ok((
            EncodedPools { mean, log_std, pooled },
            EncoderCache { lstm: lstm_cache, mean: mean_cache, log_std: log_std_cache, pools, pool_size },
        ))
    }

    /// Gradient of all encoder parameters given gradients on the head outputs.
    pub fn backward(
        &self,
        cache: &EncoderCache,
        grad_mean: ArrayView2<'_, f64>,
        grad_log_std: ArrayView2<'_, f64>,
    ) -> Result<(Vec<f64>, Array3<f64>)> {
        let (g_mean, d_pooled_a) = self.mean_head.backward(&cache.mean, grad_mean)?;
        let (g_log_std, d_pooled_b) = self.log_std_head.backward(&cache.log_std, grad_log_std)?;
        let d_pooled = d_pooled_a + d_pooled_b;
        let hidden = self.hidden_dim();
        let scale = 1.0 / cache.pool_size as f64;
        let mut d_h = Array2::<f64>::zeros((cache.pools * cache.pool_size, hidden));
        for (b, mut row) in d_h.outer_iter_mut().enumerate() {
            row.assign(&(&d_pooled.row(b / cache.pool_size) * scale));
        }
        let (g_lstm, d_x) = self.lstm.backward(&cache.lstm, d_h.view())?;
        let mut grads = g_lstm;
        grads.extend(g_mean);
        grads.extend(g_log_std);
        Ok((grads, d_x))
    }
}

impl Parameterized for ContextEncoder {
    fn params(&self) -> &[f64] {
        &self.params
    }

    fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(Error::WidthMismatch { expected: self.params.len(), got: params.len() });
        }
        let a = self.lstm.params().len();
        let b = a + self.mean_head.params().len();
        self.lstm.set_params(&params[..a])?;
        self.mean_head.set_params(&params[a..b])?;
        self.log_std_head.set_params(&params[b..])?;
        self.params.copy_from_slice(params);
        Ok(())
    }

    fn layout(&self) -> Vec<ParamBlock> {
        let prefixed = |prefix: &str, blocks: Vec<ParamBlock>| {
            blocks.into_iter().map(move |b| ParamBlock::new(format!("{prefix}.{}", b.name), b.shape)).collect::<Vec<_>>()
        };
        let mut blocks = prefixed("lstm", self.lstm.layout());
        blocks.extend(prefixed("mean", self.mean_head.layout()));
        blocks.extend(prefixed("log_std", self.log_std_head.layout()));
        blocks
    }
}
