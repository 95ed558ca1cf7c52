use ndarray::{s, Array2, Array3, ArrayView2, ArrayView3, Axis};
use rand::Rng;

use crate::error::{Error, Result};

use super::{next_version, uniform_fan_in, ParamBlock, Parameterized};

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Single-layer LSTM over batches of equal-length sequences.
///
/// Parameters: input weights `input × 4H`, recurrent weights `H × 4H` and
/// bias `4H`, with gate blocks ordered input, forget, cell, output.
#[derive(Debug, Clone, PartialEq)]
pub struct Lstm {
    input: usize,
    hidden: usize,
    params: Vec<f64>,
    version: u64,
}

#[derive(Debug, Clone)]
pub struct LstmCache {
    version: u64,
    /// Inputs flattened to `(T·B) × input`.
    inputs: Array2<f64>,
    steps: usize,
    batch: usize,
    /// Hidden and cell states, `T+1` entries of `B × H` (index 0 is the zero state).
    hs: Vec<Array2<f64>>,
    cs: Vec<Array2<f64>>,
    /// Post-activation gates per step, `B × 4H`.
    gates: Vec<Array2<f64>>,
}

impl Lstm {
    pub fn new<R: Rng + ?Sized>(input: usize, hidden: usize, rng: &mut R) -> Self {
        let mut params = Vec::with_capacity(Self::count(input, hidden));
        params.extend(uniform_fan_in(hidden, input * 4 * hidden, rng));
        params.extend(uniform_fan_in(hidden, hidden * 4 * hidden, rng));
        params.extend(std::iter::repeat_n(0.0, 4 * hidden));
        Self { input, hidden, params, version: next_version() }
    }

    fn count(input: usize, hidden: usize) -> usize {
        (input + hidden + 1) * 4 * hidden
    }

    pub fn input_dim(&self) -> usize {
        self.input
    }

    pub fn hidden_dim(&self) -> usize {
        self.hidden
    }

    fn views(&self) -> (ArrayView2<'_, f64>, ArrayView2<'_, f64>, ArrayView2<'_, f64>) {
        let g = 4 * self.hidden;
        let a = self.input * g;
        let b = a + self.hidden * g;
        (
            ArrayView2::from_shape((self.input, g), &self.params[..a]).expect("layout"),
            ArrayView2::from_shape((self.hidden, g), &self.params[a..b]).expect("layout"),
            ArrayView2::from_shape((1, g), &self.params[b..]).expect("layout"),
        )
    }

    /// Runs the cell over `sequences` shaped `T × B × input` and returns the
    /// final hidden states `B × H`.
    pub fn forward(&self, sequences: ArrayView3<'_, f64>) -> Result<(Array2<f64>, LstmCache)> {
        let (steps, batch, width) = sequences.dim();
        if steps == 0 {
            return Err(Error::EmptySequence);
        }
        if width != self.input {
            return Err(Error::WidthMismatch { expected: self.input, got: width });
        }
        let h = self.hidden;
        let (wx, wh, bias) = self.views();
        let inputs = sequences
            .to_shape((steps * batch, width))
            .map_err(|_| Error::WidthMismatch { expected: width, got: width })?
            .to_owned();
        let mut projected = inputs.dot(&wx);
        projected += &bias;

        let mut hs = Vec::with_capacity(steps + 1);
        let mut cs = Vec::with_capacity(steps + 1);
        let mut gates = Vec::with_capacity(steps);
        hs.push(Array2::zeros((batch, h)));
        cs.push(Array2::zeros((batch, h)));
        for t in 0..steps {
            let mut z = projected.slice(s![t * batch..(t + 1) * batch, ..]).to_owned();
            z += &hs[t].dot(&wh);
            z.slice_mut(s![.., 0..2 * h]).mapv_inplace(sigmoid);
            z.slice_mut(s![.., 2 * h..3 * h]).mapv_inplace(f64::tanh);
            z.slice_mut(s![.., 3 * h..]).mapv_inplace(sigmoid);
            let mut c = Array2::<f64>::zeros((batch, h));
            let mut hn = Array2::<f64>::zeros((batch, h));
            let cp = &cs[t];
            for b in 0..batch {
                for j in 0..h {
                    let (i, f, g, o) = (z[[b, j]], z[[b, h + j]], z[[b, 2 * h + j]], z[[b, 3 * h + j]]);
                    let cv = f * cp[[b, j]] + i * g;
                    c[[b, j]] = cv;
                    hn[[b, j]] = o * cv.tanh();
                }
            }
            hs.push(hn);
            cs.push(c);
            gates.push(z);
        }
        let out = hs[steps].clone();
        Ok((out, LstmCache { version: self.version, inputs, steps, batch, hs, cs, gates }))
    }

    /// Backpropagation through time from the gradient on the final hidden
    /// state. Returns the parameter gradient and the input gradient
    /// shaped like the forward input.
    pub fn backward(&self, cache: &LstmCache, grad_final: ArrayView2<'_, f64>) -> Result<(Vec<f64>, Array3<f64>)> {
        if cache.version != self.version {
            return Err(Error::StaleCache);
        }
        let (steps, batch, h) = (cache.steps, cache.batch, self.hidden);
        if grad_final.dim() != (batch, h) {
            return Err(Error::WidthMismatch { expected: h, got: grad_final.ncols() });
        }
        let (wx, wh, _) = self.views();
        let mut dz_all = Array2::<f64>::zeros((steps * batch, 4 * h));
        let mut dwh = Array2::<f64>::zeros((h, 4 * h));
        let mut dh = grad_final.to_owned();
        let mut dc = Array2::<f64>::zeros((batch, h));
        for t in (0..steps).rev() {
            let z = &cache.gates[t];
            let c = &cache.cs[t + 1];
            let c_prev = &cache.cs[t];
            let mut dz = dz_all.slice_mut(s![t * batch..(t + 1) * batch, ..]);
            for b in 0..batch {
                for j in 0..h {
                    let i = z[[b, j]];
                    let f = z[[b, h + j]];
                    let g = z[[b, 2 * h + j]];
                    let o = z[[b, 3 * h + j]];
                    let tc = c[[b, j]].tanh();
                    let dhv = dh[[b, j]];
                    let dcv = dc[[b, j]] + dhv * o * (1.0 - tc * tc);
                    dz[[b, j]] = dcv * g * i * (1.0 - i);
                    dz[[b, h + j]] = dcv * c_prev[[b, j]] * f * (1.0 - f);
                    dz[[b, 2 * h + j]] = dcv * i * (1.0 - g * g);
                    dz[[b, 3 * h + j]] = dhv * tc * o * (1.0 - o);
                    dc[[b, j]] = dcv * f;
                }
            }
            let dz = dz_all.slice(s![t * batch..(t + 1) * batch, ..]);
            dwh += &cache.hs[t].t().dot(&dz);
            dh = dz.dot(&wh.t());
        }
        let dwx = cache.inputs.t().dot(&dz_all);
        let db = dz_all.sum_axis(Axis(0));
        let dx = dz_all.dot(&wx.t());

        let mut grads = Vec::with_capacity(self.params.len());
        grads.extend(dwx.iter());
        grads.extend(dwh.iter());
        grads.extend(db.iter());
        let dx = dx.into_shape_with_order((steps, batch, self.input)).expect("shape");
        Ok((grads, dx))
    }
}

impl Parameterized for Lstm {
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
        let g = 4 * self.hidden;
        vec![
            ParamBlock::new("input_weight", vec![self.input, g]),
            ParamBlock::new("recurrent_weight", vec![self.hidden, g]),
            ParamBlock::new("bias", vec![g]),
        ]
    }
}
