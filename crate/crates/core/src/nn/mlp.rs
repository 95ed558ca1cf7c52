use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{next_version, uniform_fan_in, ParamBlock, Parameterized};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    Linear,
}

impl Activation {
    fn apply(self, z: &mut Array2<f64>) {
        if self == Activation::Tanh {
            z.mapv_inplace(f64::tanh);
        }
    }

    /// Multiplies `grad` by the derivative expressed through the activation output `y`.
    fn backprop(self, y: &Array2<f64>, grad: &mut Array2<f64>) {
        if self == Activation::Tanh {
            grad.zip_mut_with(y, |g, y| *g *= 1.0 - y * y);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub input: usize,
    pub output: usize,
    pub activation: Activation,
}

impl LayerSpec {
    fn param_count(&self) -> usize {
        self.input * self.output + self.output
    }
}

/// Fully connected feed-forward network over row-major batches.
///
/// Each layer stores its weight as an `input × output` matrix followed by
/// the bias, contiguously in one flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layers: Vec<LayerSpec>,
    params: Vec<f64>,
    version: u64,
}

/// Activations recorded by [`Mlp::forward`].
#[derive(Debug, Clone)]
pub struct MlpCache {
    version: u64,
    /// Input of every layer followed by the network output.
    activations: Vec<Array2<f64>>,
}

impl Mlp {
    /// `sizes = [input, hidden.., output]`; hidden layers use `hidden`,
    /// the last layer `output`. Weights are uniform fan-in, biases zero.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], hidden: Activation, output: Activation, rng: &mut R) -> Self {
        assert!(sizes.len() >= 2, "an MLP needs at least input and output widths");
        let layers: Vec<LayerSpec> = sizes
            .windows(2)
            .enumerate()
            .map(|(k, w)| LayerSpec {
                input: w[0],
                output: w[1],
                activation: if k + 2 == sizes.len() { output } else { hidden },
            })
            .collect();
        let mut params = Vec::with_capacity(layers.iter().map(LayerSpec::param_count).sum());
        for l in &layers {
            params.extend(uniform_fan_in(l.input, l.input * l.output, rng));
            params.extend(std::iter::repeat_n(0.0, l.output));
        }
        Self { layers, params, version: next_version() }
    }

    pub fn from_layers(layers: Vec<LayerSpec>, params: Vec<f64>) -> Result<Self> {
        let expected: usize = layers.iter().map(LayerSpec::param_count).sum();
        if params.len() != expected {
            return Err(Error::WidthMismatch { expected, got: params.len() });
        }
        Ok(Self { layers, params, version: next_version() })
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].output
    }

    fn layer_views(&self, k: usize, offset: usize) -> (ArrayView2<'_, f64>, ArrayView1<'_, f64>) {
        let l = self.layers[k];
        let w = ArrayView2::from_shape((l.input, l.output), &self.params[offset..offset + l.input * l.output])
            .expect("layout");
        let b = ArrayView1::from(&self.params[offset + l.input * l.output..offset + l.param_count()]);
        (w, b)
    }

    pub fn forward(&self, input: ArrayView2<'_, f64>) -> Result<(Array2<f64>, MlpCache)> {
        if input.ncols() != self.input_dim() {
            return Err(Error::WidthMismatch { expected: self.input_dim(), got: input.ncols() });
        }
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(input.to_owned());
        let mut offset = 0;
        for (k, l) in self.layers.iter().enumerate() {
            let (w, b) = self.layer_views(k, offset);
            let mut z = activations[k].dot(&w);
            z += &b;
            l.activation.apply(&mut z);
            activations.push(z);
            offset += l.param_count();
        }
        let out = activations[self.layers.len()].clone();
        Ok((out, MlpCache { version: self.version, activations }))
    }

    /// Output without keeping a cache.
    pub fn predict(&self, input: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if input.ncols() != self.input_dim() {
            return Err(Error::WidthMismatch { expected: self.input_dim(), got: input.ncols() });
        }
        let mut x = input.to_owned();
        let mut offset = 0;
        for (k, l) in self.layers.iter().enumerate() {
            let (w, b) = self.layer_views(k, offset);
            let mut z = x.dot(&w);
            z += &b;
            l.activation.apply(&mut z);
            x = z;
            offset += l.param_count();
        }
        Ok(x)
    }

    pub fn predict_one(&self, input: &[f64]) -> Result<Vec<f64>> {
        let view = ArrayView2::from_shape((1, input.len()), input).expect("row");
        Ok(self.predict(view)?.into_raw_vec_and_offset().0)
    }

    /// Reverse pass. Returns the parameter gradient and the input gradient.
    pub fn backward(&self, cache: &MlpCache, grad_output: ArrayView2<'_, f64>) -> Result<(Vec<f64>, Array2<f64>)> {
        if cache.version != self.version {
            return Err(Error::StaleCache);
        }
        let n = self.layers.len();
        if grad_output.dim() != cache.activations[n].dim() {
            return Err(Error::WidthMismatch { expected: self.output_dim(), got: grad_output.ncols() });
        }
        let mut grads = vec![0.0; self.params.len()];
        let mut offsets = Vec::with_capacity(n);
        let mut acc = 0;
        for l in &self.layers {
            offsets.push(acc);
            acc += l.param_count();
        }
        let mut g = grad_output.to_owned();
        for k in (0..n).rev() {
            let l = self.layers[k];
            l.activation.backprop(&cache.activations[k + 1], &mut g);
            let x = &cache.activations[k];
            let gw = x.t().dot(&g);
            let gb = g.sum_axis(Axis(0));
            let o = offsets[k];
            for (dst, src) in grads[o..o + l.param_count()].iter_mut().zip(gw.iter().chain(gb.iter())) {
                *dst = *src;
            }
            let (w, _) = self.layer_views(k, o);
            g = g.dot(&w.t());
        }
        Ok((grads, g))
    }
}

impl Parameterized for Mlp {
    fn params(&self) -> &[f64] {
        &self.params
    }

    fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(Error::WidthMismatch { expected: self.params.len(), got: params.len() });
        }
        self.params.copy_from_slice(params);
        self.version = next_version();
        Ok(())
    }

    fn layout(&self) -> Vec<ParamBlock> {
        let mut blocks = Vec::with_capacity(2 * self.layers.len());
        for (k, l) in self.layers.iter().enumerate() {
            blocks.push(ParamBlock::new(format!("layer{k}.weight"), vec![l.input, l.output]));
            blocks.push(ParamBlock::new(format!("layer{k}.bias"), vec![l.output]));
        }
        blocks
    }
}

/// Convenience conversion of a row slice into a one-row batch.
pub fn row(values: &[f64]) -> Array2<f64> {
    Array2::from_shape_vec((1, values.len()), values.to_vec()).expect("row")
}

/// Stacks equal-width rows into a batch.
pub fn stack_rows(rows: &[&[f64]], width: usize) -> Result<Array2<f64>> {
    let mut data = Vec::with_capacity(rows.len() * width);
    for r in rows {
        if r.len() != width {
            return Err(Error::WidthMismatch { expected: width, got: r.len() });
        }
        data.extend_from_slice(r);
    }
    Ok(Array2::from_shape_vec((rows.len(), width), data).expect("shape"))
}
