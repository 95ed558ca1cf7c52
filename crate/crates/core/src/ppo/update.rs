use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::{log_softmax, Adam};

use super::{PolicyNet, PpoConfig, RolloutBuffer, ValueNet};

/// Diagnostics of one policy update, averaged over processed minibatches.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PpoStats {
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
    pub epochs_run: usize,
    pub minibatches: usize,
}

fn gather(buffer: &RolloutBuffer, idx: &[usize]) -> Array2<f64> {
    let mut data = Vec::with_capacity(idx.len() * buffer.obs_dim);
    for &i in idx {
        data.extend_from_slice(buffer.observation(i));
    }
    Array2::from_shape_vec((idx.len(), buffer.obs_dim), data).expect("shape")
}

fn normalized_advantages(buffer: &RolloutBuffer, normalize: bool) -> Vec<f64> {
    if !normalize || buffer.len() < 2 {
        return buffer.advantages.clone();
    }
    let n = buffer.len() as f64;
    let mean = buffer.advantages.iter().sum::<f64>() / n;
    let var = buffer.advantages.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt() + 1e-8;
    buffer.advantages.iter().map(|a| (a - mean) / std).collect()
}

/// Clipped-surrogate policy update with an entropy bonus. Requires
/// advantages to have been computed.
pub fn ppo_update<R: Rng + ?Sized>(
    buffer: &RolloutBuffer,
    policy: &mut PolicyNet,
    opt: &mut Adam,
    config: &PpoConfig,
    rng: &mut R,
) -> Result<PpoStats> {
    let n = buffer.len();
    let mut stats = PpoStats::default();
    if n == 0 {
        return Ok(stats);
    }
    if buffer.advantages.len() != n {
        return Err(Error::InsufficientData("advantages have not been computed".into()));
    }
    let advantages = normalized_advantages(buffer, config.normalize_advantages);
    let actions = policy.action_count();
    let mut order: Vec<usize> = (0..n).collect();
    let (mut ent_sum, mut kl_sum, mut clip_sum) = (0.0, 0.0, 0.0);
    for _ in 0..config.epochs {
        order.shuffle(rng);
        let mut epoch_kl = 0.0;
        let mut epoch_batches = 0;
        for idx in order.chunks(config.minibatch) {
            let m = idx.len() as f64;
            let x = gather(buffer, idx);
            let (logits, cache) = policy.net.forward(x.view())?;
            let mut grad = Array2::<f64>::zeros((idx.len(), actions));
            let (mut ent, mut kl, mut clipped) = (0.0, 0.0, 0.0);
            for (row, &i) in idx.iter().enumerate() {
                let lp = log_softmax(&logits.row(row).to_vec());
                let a = buffer.actions[i];
                let adv = advantages[i];
                let ratio = (lp[a] - buffer.log_probs[i]).exp();
                if !ratio.is_finite() {
                    return Err(Error::Diverged(format!("non-finite probability ratio at sample {i}")));
                }
                let h = -lp.iter().map(|l| l.exp() * l).sum::<f64>();
                ent += h;
                kl += (ratio - 1.0) - ratio.ln();
                if (ratio - 1.0).abs() > config.clip {
                    clipped += 1.0;
                }
                let active = (adv >= 0.0 && ratio < 1.0 + config.clip) || (adv < 0.0 && ratio > 1.0 - config.clip);
                let surrogate = if active { ratio * adv } else { 0.0 };
                for k in 0..actions {
                    let p = lp[k].exp();
                    let onehot = if k == a { 1.0 } else { 0.0 };
                    let g_sur = -surrogate * (onehot - p);
                    let g_ent = config.entropy_coef * p * (lp[k] + h);
                    grad[[row, k]] = (g_sur + g_ent) / m;
                }
            }
            let (grads, _) = policy.net.backward(&cache, grad.view())?;
            opt.update(&mut policy.net, &grads)?;
            ent_sum += ent / m;
            kl_sum += kl / m;
            clip_sum += clipped / m;
            epoch_kl += kl / m;
            epoch_batches += 1;
            stats.minibatches += 1;
        }
        stats.epochs_run += 1;
        if epoch_kl / epoch_batches as f64 > config.kl_ceiling {
            break;
        }
    }
    let b = stats.minibatches as f64;
    stats.entropy = ent_sum / b;
    stats.approx_kl = kl_sum / b;
    stats.clip_fraction = clip_sum / b;
    Ok(stats)
}

/// Mean-squared-error regression of the value network onto the returns.
/// Returns the mean loss over processed minibatches.
pub fn value_update<R: Rng + ?Sized>(
    buffer: &RolloutBuffer,
    value: &mut ValueNet,
    opt: &mut Adam,
    config: &PpoConfig,
    rng: &mut R,
) -> Result<f64> {
    let n = buffer.len();
    if n == 0 {
        return Ok(0.0);
    }
    if buffer.returns.len() != n {
        return Err(Error::InsufficientData("returns have not been computed".into()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    let (mut loss_sum, mut batches) = (0.0, 0usize);
    for _ in 0..config.epochs {
        order.shuffle(rng);
        for idx in order.chunks(config.minibatch) {
            let m = idx.len() as f64;
            let x = gather(buffer, idx);
            let (out, cache) = value.net.forward(x.view())?;
            let mut grad = Array2::<f64>::zeros((idx.len(), 1));
            let mut loss = 0.0;
            for (row, &i) in idx.iter().enumerate() {
                let err = out[[row, 0]] - buffer.returns[i];
                loss += err * err / m;
                grad[[row, 0]] = 2.0 * err / m;
            }
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss("value regression".into()));
            }
            let (grads, _) = value.net.backward(&cache, grad.view())?;
            opt.update(&mut value.net, &grads)?;
            loss_sum += loss;
            batches += 1;
        }
    }
    Ok(loss_sum / batches as f64)
}
