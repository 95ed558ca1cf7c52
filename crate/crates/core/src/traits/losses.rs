use ndarray::{concatenate, s, Array2, Array3, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{log_softmax, ContextEncoder, Mlp, Parameterized};
use crate::ppo::PolicyNet;

/// Shaped reward `f(s, a, s', z) = g(s, a, z) + γ h(s', z) − h(s, z)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardNets {
    pub g: Mlp,
    pub h: Mlp,
    pub gamma: f64,
}

fn join(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> Array2<f64> {
    concatenate(Axis(1), &[a, b]).expect("equal row counts")
}

impl RewardNets {
    /// `f` for rows of state, one-hot action, next state and latent.
    pub fn shaped_reward(
        &self,
        state: ArrayView2<'_, f64>,
        action: ArrayView2<'_, f64>,
        next_state: ArrayView2<'_, f64>,
        z: ArrayView2<'_, f64>,
    ) -> Result<Vec<f64>> {
        let g = self.g.predict(join(join(state, action).view(), z).view())?;
        let h = self.h.predict(join(state, z).view())?;
        let h_next = self.h.predict(join(next_state, z).view())?;
        Ok((0..state.nrows()).map(|i| g[[i, 0]] + self.gamma * h_next[[i, 0]] - h[[i, 0]]).collect())
    }
}

/// Expert tuples grouped into same-driver pools.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpertBatch {
    /// Encoder input, `T × (P·pool_size) × width`, pool members adjacent.
    pub sequences: Array3<f64>,
    pub pool_size: usize,
    /// Contrastive label of each pool, if revealed.
    pub labels: Vec<Option<u32>>,
    pub state: Array2<f64>,
    /// One-hot actions.
    pub action: Array2<f64>,
    pub next_state: Array2<f64>,
    pub action_index: Vec<usize>,
    /// Pool of every tuple.
    pub pool_of: Vec<usize>,
}

impl ExpertBatch {
    pub fn pools(&self) -> usize {
        self.labels.len()
    }
}

/// Policy tuples with the latent they were generated under.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedBatch {
    pub state: Array2<f64>,
    pub action: Array2<f64>,
    pub next_state: Array2<f64>,
    pub z: Array2<f64>,
    pub action_index: Vec<usize>,
    /// Whole generated episodes as encoder input (`T × 1 × width`) with their latent.
    pub episodes: Vec<(Array3<f64>, Vec<f64>)>,
}

impl GeneratedBatch {
    pub fn len(&self) -> usize {
        self.action_index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.action_index.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub reconstruction: f64,
    pub mutual_information: f64,
    pub contrastive: f64,
    pub regularization: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { reconstruction: 1.0, mutual_information: 5.0, contrastive: 10.0, regularization: 1e-4 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossReport {
    /// Discriminator cross-entropy.
    pub l1: f64,
    /// Negative log-likelihood of the conditioning latent on generated episodes.
    pub l2: f64,
    /// Contrastive loss summed over labelled pool pairs.
    pub l3: f64,
    /// Mean KL of the pool posteriors to the unit Gaussian.
    pub l4: f64,
    pub total: f64,
    pub labeled_pairs: usize,
    /// Mean discriminator output on expert and on generated tuples.
    pub d_expert: f64,
    pub d_generated: f64,
}

impl LossReport {
    pub fn weighted(l1: f64, l2: f64, l3: f64, l4: f64, w: &LossWeights) -> f64 {
        w.reconstruction * l1 + w.mutual_information * l2 + w.contrastive * l3 + w.regularization * l4
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossGradients {
    pub encoder: Vec<f64>,
    pub g: Vec<f64>,
    pub h: Vec<f64>,
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `exp(f) / (exp(f) + π)` evaluated in log space.
pub fn discriminator_prob(f: f64, log_pi: f64) -> Result<f64> {
    if log_pi == f64::NEG_INFINITY {
        return Err(Error::ZeroProbability(0));
    }
    Ok(sigmoid(f - log_pi))
}

/// Contrastive term of one pair and its gradient with respect to `a`
/// (the gradient for `b` is the negation).
pub fn contrastive_pair(a: &[f64], b: &[f64], same: bool, margin: f64) -> (f64, Vec<f64>) {
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let d2: f64 = diff.iter().map(|d| d * d).sum();
    if same {
        return (d2, diff.iter().map(|d| 2.0 * d).collect());
    }
    let d = d2.sqrt();
    if d >= margin || d == 0.0 {
        let loss = if d >= margin { 0.0 } else { margin * margin };
        return (loss, vec![0.0; a.len()]);
    }
    let gap = margin - d;
    (gap * gap, diff.iter().map(|x| -2.0 * gap * x / d).collect())
}

/// KL(N(μ, σ²) ‖ N(0, I)) for one latent.
pub fn unit_gaussian_kl(mean: &[f64], log_std: &[f64]) -> f64 {
    mean.iter().zip(log_std).map(|(m, l)| 0.5 * (m * m + (2.0 * l).exp() - 1.0 - 2.0 * l)).sum()
}

fn gaussian_nll(z: &[f64], mean: &[f64], log_std: &[f64]) -> f64 {
    let half_log_2pi = 0.5 * (2.0 * std::f64::consts::PI).ln();
    z.iter().zip(mean).zip(log_std).map(|((z, m), l)| l + half_log_2pi + 0.5 * ((z - m) / l.exp()).powi(2)).sum()
}

/// All four losses and the gradient of their weighted sum with respect to
/// the encoder and both reward networks. `noise` (`P × latent`) drives the
/// reparameterized expert latents. Policy parameters receive no gradient,
/// but the dependence of log π on the expert latents is differentiated.
#[allow(clippy::too_many_arguments)]
pub fn discriminator_losses(
    encoder: &ContextEncoder,
    nets: &RewardNets,
    policy: &PolicyNet,
    expert: &ExpertBatch,
    generated: &GeneratedBatch,
    noise: ArrayView2<'_, f64>,
    weights: &LossWeights,
    margin: f64,
) -> Result<(LossReport, LossGradients)> {
    let pools = expert.pools();
    let latent = encoder.latent_dim();
    if expert.action_index.is_empty() || generated.is_empty() {
        return Err(Error::InsufficientData("discriminator needs expert and generated tuples".into()));
    }
    if noise.dim() != (pools, latent) {
        return Err(Error::WidthMismatch { expected: pools * latent, got: noise.len() });
    }
    let (enc, enc_cache) = encoder.forward(expert.sequences.view(), expert.pool_size)?;
    let std = enc.log_std.mapv(f64::exp);
    let z_pool = &enc.mean + &(&std * &noise);

    let n_e = expert.action_index.len();
    let n_g = generated.len();
    let mut z_rows = Array2::<f64>::zeros((n_e, latent));
    for (i, &p) in expert.pool_of.iter().enumerate() {
        z_rows.row_mut(i).assign(&z_pool.row(p));
    }
    let cat = |a: &Array2<f64>, b: &Array2<f64>| concatenate(Axis(0), &[a.view(), b.view()]).expect("same width");
    let state = cat(&expert.state, &generated.state);
    let action = cat(&expert.action, &generated.action);
    let next_state = cat(&expert.next_state, &generated.next_state);
    let z = cat(&z_rows, &generated.z);
    let actions: Vec<usize> = expert.action_index.iter().chain(&generated.action_index).copied().collect();

    let g_in = join(join(state.view(), action.view()).view(), z.view());
    let h_in = cat(&join(state.view(), z.view()), &join(next_state.view(), z.view()));
    let (g_out, g_cache) = nets.g.forward(g_in.view())?;
    let (h_out, h_cache) = nets.h.forward(h_in.view())?;
    let pi_in = join(state.view(), z.view());
    let (logits, pi_cache) = policy.net.forward(pi_in.view())?;
    let log_pi: Vec<Vec<f64>> = logits.outer_iter().map(|r| log_softmax(&r.to_vec())).collect();

    let n = n_e + n_g;
    let mut l1 = 0.0;
    let mut dx = vec![0.0; n];
    let (mut d_expert, mut d_generated) = (0.0, 0.0);
    for i in 0..n {
        let lp = log_pi[i][actions[i]];
        if lp == f64::NEG_INFINITY {
            return Err(Error::ZeroProbability(actions[i]));
        }
        let f = g_out[[i, 0]] + nets.gamma * h_out[[n + i, 0]] - h_out[[i, 0]];
        let x = f - lp;
        let d = sigmoid(x);
        if i < n_e {
            l1 += softplus(-x) / n_e as f64;
            dx[i] = (d - 1.0) / n_e as f64;
            d_expert += d / n_e as f64;
        } else {
            l1 += softplus(x) / n_g as f64;
            dx[i] = d / n_g as f64;
            d_generated += d / n_g as f64;
        }
    }
    let w1 = weights.reconstruction;
    let grad_g_out = Array2::from_shape_fn((n, 1), |(i, _)| w1 * dx[i]);
    let grad_h_out =
        Array2::from_shape_fn((2 * n, 1), |(i, _)| if i < n { -w1 * dx[i] } else { w1 * nets.gamma * dx[i - n] });
    let (g_grad, g_in_grad) = nets.g.backward(&g_cache, grad_g_out.view())?;
    let (h_grad, h_in_grad) = nets.h.backward(&h_cache, grad_h_out.view())?;

    // the policy stays frozen but log π still depends on the expert latents
    let mut grad_logits = Array2::<f64>::zeros((n_e, policy.action_count()));
    for i in 0..n_e {
        for (k, lp) in log_pi[i].iter().enumerate() {
            let onehot = if k == actions[i] { 1.0 } else { 0.0 };
            grad_logits[[i, k]] = -w1 * dx[i] * (onehot - lp.exp());
        }
    }
    let mut full_grad_logits = Array2::<f64>::zeros((n, policy.action_count()));
    full_grad_logits.slice_mut(s![..n_e, ..]).assign(&grad_logits);
    let (_, pi_in_grad) = policy.net.backward(&pi_cache, full_grad_logits.view())?;

    // gradient on each pool's latent sample
    let mut dz = Array2::<f64>::zeros((pools, latent));
    let gz0 = g_in.ncols() - latent;
    let hz0 = h_in.ncols() - latent;
    let pz0 = pi_in.ncols() - latent;
    for (i, &p) in expert.pool_of.iter().enumerate() {
        for k in 0..latent {
            dz[[p, k]] += g_in_grad[[i, gz0 + k]]
                + h_in_grad[[i, hz0 + k]]
                + h_in_grad[[n + i, hz0 + k]]
                + pi_in_grad[[i, pz0 + k]];
        }
    }

    let mut l3 = 0.0;
    let mut labeled_pairs = 0;
    for a in 0..pools {
        for b in a + 1..pools {
            if let (Some(la), Some(lb)) = (expert.labels[a], expert.labels[b]) {
                let za = z_pool.row(a).to_vec();
                let zb = z_pool.row(b).to_vec();
                let (loss, grad) = contrastive_pair(&za, &zb, la == lb, margin);
                l3 += loss;
                labeled_pairs += 1;
                for k in 0..latent {
                    dz[[a, k]] += weights.contrastive * grad[k];
                    dz[[b, k]] -= weights.contrastive * grad[k];
                }
            }
        }
    }

    let mut l4 = 0.0;
    let mut d_mean = dz.clone();
    let mut d_log_std = &dz * &(&std * &noise);
    for p in 0..pools {
        let m = enc.mean.row(p).to_vec();
        let ls = enc.log_std.row(p).to_vec();
        l4 += unit_gaussian_kl(&m, &ls) / pools as f64;
        for k in 0..latent {
            d_mean[[p, k]] += weights.regularization * m[k] / pools as f64;
            d_log_std[[p, k]] += weights.regularization * ((2.0 * ls[k]).exp() - 1.0) / pools as f64;
        }
    }
    let (mut enc_grad, _) = encoder.backward(&enc_cache, d_mean.view(), d_log_std.view())?;

    let mut l2 = 0.0;
    let episodes = generated.episodes.len();
    for (seq, zc) in &generated.episodes {
        let (e, cache) = encoder.forward(seq.view(), 1)?;
        let m = e.mean.row(0).to_vec();
        let ls = e.log_std.row(0).to_vec();
        l2 += gaussian_nll(zc, &m, &ls) / episodes as f64;
        let scale = weights.mutual_information / episodes as f64;
        let mut gm = Array2::<f64>::zeros((1, latent));
        let mut gl = Array2::<f64>::zeros((1, latent));
        for k in 0..latent {
            let inv_var = (-2.0 * ls[k]).exp();
            gm[[0, k]] = -scale * (zc[k] - m[k]) * inv_var;
            gl[[0, k]] = scale * (1.0 - (zc[k] - m[k]).powi(2) * inv_var);
        }
        let (g, _) = encoder.backward(&cache, gm.view(), gl.view())?;
        for (acc, x) in enc_grad.iter_mut().zip(g) {
            *acc += x;
        }
    }

    let total = LossReport::weighted(l1, l2, l3, l4, weights);
    if !total.is_finite() {
        return Err(Error::NonFiniteLoss(format!("l1 {l1} l2 {l2} l3 {l3} l4 {l4}")));
    }
    let report = LossReport { l1, l2, l3, l4, total, labeled_pairs, d_expert, d_generated };
    Ok((report, LossGradients { encoder: enc_grad, g: g_grad, h: h_grad }))
}

/// Number of scalar parameters touched by a discriminator step.
pub fn discriminator_param_count(encoder: &ContextEncoder, nets: &RewardNets) -> usize {
    encoder.param_count() + nets.g.param_count() + nets.h.param_count()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn balanced_discriminator_is_one_half() {
        assert_eq!(discriminator_prob(-1.3, -1.3).unwrap(), 0.5);
        assert!(discriminator_prob(800.0, -0.1).unwrap() > 1.0 - 1e-12);
        assert!(discriminator_prob(0.0, f64::NEG_INFINITY).is_err());
    }

    #[test]
    fn contrastive_pair_cases() {
        assert_eq!(contrastive_pair(&[0.3, 0.4], &[0.3, 0.4], true, 1.0).0, 0.0);
        assert_eq!(contrastive_pair(&[0.0, 0.0], &[3.0, 4.0], false, 1.0).0, 0.0);
        assert_eq!(contrastive_pair(&[0.0, 0.0], &[3.0, 4.0], true, 1.0).0, 25.0);
        let (l, _) = contrastive_pair(&[0.0, 0.0], &[0.3, 0.4], false, 1.0);
        assert!((l - 0.25).abs() < 1e-15);
    }

    #[test]
    fn standard_normal_has_zero_kl() {
        assert_eq!(unit_gaussian_kl(&[0.0, 0.0], &[0.0, 0.0]), 0.0);
        assert!(unit_gaussian_kl(&[0.5, 0.0], &[0.0, -0.3]) > 0.0);
    }

    #[test]
    fn weighted_total_uses_fixed_weights() {
        let w = LossWeights::default();
        assert_eq!(LossReport::weighted(1.0, 1.0, 1.0, 1.0, &w), 1.0 + 5.0 + 10.0 + 1e-4);
    }
}
