use hmiway::nn::{entropy, stack_rows, Adam, Parameterized};
use hmiway::ppo::{
    collect_rollouts, compute_advantages, ppo_update, train, ActorCritic, EnvStep, Environment, PolicyNet, PpoConfig,
    RolloutBuffer, ValueNet,
};
use hmiway::Result;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Single-state bandit; only `best` pays.
struct Bandit {
    arms: usize,
    best: usize,
}

impl Environment for Bandit {
    fn observation_dim(&self) -> usize {
        1
    }
    fn action_count(&self) -> usize {
        self.arms
    }
    fn reset(&mut self, _seed: u64) -> Result<Vec<f64>> {
        Ok(vec![1.0])
    }
    fn step(&mut self, action: usize) -> Result<EnvStep> {
        let reward = if action == self.best { 1.0 } else { 0.0 };
        Ok(EnvStep { obs: vec![1.0], reward, done: true, breakdown: None })
    }
}

/// Counter that ends episodes every `length` steps.
struct Corridor {
    length: usize,
    t: usize,
}

impl Environment for Corridor {
    fn observation_dim(&self) -> usize {
        2
    }
    fn action_count(&self) -> usize {
        2
    }
    fn reset(&mut self, seed: u64) -> Result<Vec<f64>> {
        self.t = 0;
        Ok(vec![0.0, (seed % 7) as f64 / 7.0])
    }
    fn step(&mut self, action: usize) -> Result<EnvStep> {
        self.t += 1;
        let obs = vec![self.t as f64 / self.length as f64, action as f64];
        Ok(EnvStep { obs, reward: action as f64 - 0.5, done: self.t == self.length, breakdown: None })
    }
}

fn brute_force_advantages(b: &RolloutBuffer, gamma: f64, lambda: f64) -> Vec<f64> {
    let n = b.len();
    let next_value = |t: usize| if t + 1 == n { b.bootstrap_value } else { b.values[t + 1] };
    let delta = |t: usize| {
        let live = if b.dones[t] { 0.0 } else { 1.0 };
        b.rewards[t] + gamma * live * next_value(t) - b.values[t]
    };
    (0..n)
        .map(|t| {
            let mut total = 0.0;
            let mut weight = 1.0;
            for l in t..n {
                total += weight * delta(l);
                if b.dones[l] {
                    break;
                }
                weight *= gamma * lambda;
            }
            total
        })
        .collect()
}

#[test]
fn hand_computed_discounted_returns() {
    let mut b = RolloutBuffer {
        obs_dim: 1,
        obs: vec![0.0; 3],
        actions: vec![0; 3],
        log_probs: vec![0.0; 3],
        rewards: vec![1.0; 3],
        values: vec![0.0; 3],
        dones: vec![false, false, true],
        ..Default::default()
    };
    compute_advantages(&mut b, 0.5, 1.0);
    for (got, want) in b.returns.iter().zip([1.75, 1.5, 1.0]) {
        assert!((got - want).abs() < 1e-12);
    }
}

#[test]
fn zero_steps_yield_empty_buffer() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut env = Corridor { length: 5, t: 0 };
    let policy = PolicyNet::new(2, 2, &[4], &mut rng);
    let value = ValueNet::new(2, &[4], &mut rng);
    let b = collect_rollouts(&mut env, &policy, &value, 0, 1).unwrap();
    assert!(b.is_empty());
    assert!(b.episode_returns.is_empty());
}

#[test]
fn rollouts_reset_and_bootstrap() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut env = Corridor { length: 4, t: 0 };
    let policy = PolicyNet::new(2, 2, &[4], &mut rng);
    let value = ValueNet::new(2, &[4], &mut rng);
    let b = collect_rollouts(&mut env, &policy, &value, 10, 9).unwrap();
    assert_eq!(b.len(), 10);
    assert_eq!(b.episode_returns.len(), 2);
    assert_eq!(b.dones.iter().filter(|d| **d).count(), 2);
    assert!(b.dones[3] && b.dones[7] && !b.dones[9]);
    assert!(b.bootstrap_value != 0.0);
    let again = collect_rollouts(&mut env, &policy, &value, 10, 9).unwrap();
    assert_eq!(b, again);
}

#[test]
fn recorded_log_probs_match_reevaluation() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut env = Corridor { length: 7, t: 0 };
    let policy = PolicyNet::new(2, 2, &[8, 8], &mut rng);
    let value = ValueNet::new(2, &[8], &mut rng);
    let b = collect_rollouts(&mut env, &policy, &value, 50, 4).unwrap();
    let rows: Vec<&[f64]> = (0..b.len()).map(|t| b.observation(t)).collect();
    let batch = stack_rows(&rows, 2).unwrap();
    let lps = policy.batch_log_probabilities(batch.view()).unwrap();
    for t in 0..b.len() {
        assert_eq!(lps[t][b.actions[t]], b.log_probs[t]);
    }
}

fn update_with(config: &PpoConfig, advantage_scale: f64) -> (Vec<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut env = Corridor { length: 6, t: 0 };
    let mut policy = PolicyNet::new(2, 2, &[8], &mut rng);
    let value = ValueNet::new(2, &[8], &mut rng);
    let mut b = collect_rollouts(&mut env, &policy, &value, 40, 6).unwrap();
    compute_advantages(&mut b, 0.99, 0.95);
    for a in &mut b.advantages {
        *a *= advantage_scale;
    }
    let before = policy.net.params().to_vec();
    let mut opt = Adam::new(policy.net.param_count(), 1e-2);
    ppo_update(&b, &mut policy, &mut opt, config, &mut rng).unwrap();
    (before, policy.net.params().to_vec())
}

#[test]
fn zero_advantages_without_entropy_leave_policy_unchanged() {
    let config = PpoConfig { entropy_coef: 0.0, minibatch: 8, ..Default::default() };
    let (before, after) = update_with(&config, 0.0);
    assert_eq!(before, after);
}

#[test]
fn zero_clip_leaves_policy_unchanged() {
    let config = PpoConfig { clip: 0.0, entropy_coef: 0.0, minibatch: 8, ..Default::default() };
    let (before, after) = update_with(&config, 1.0);
    assert_eq!(before, after);
}

#[test]
fn clip_outside_unit_interval_is_rejected() {
    for clip in [-0.1, 1.0, 1.5] {
        assert!(PpoConfig { clip, ..Default::default() }.validate().is_err());
    }
}

#[test]
fn entropy_bonus_alone_moves_toward_uniform() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut policy = PolicyNet::new(1, 3, &[4], &mut rng);
    // skew the output bias
    let mut params = policy.net.params().to_vec();
    let n = params.len();
    params[n - 3] = 2.0;
    params[n - 1] = -1.0;
    policy.net.set_params(&params).unwrap();
    let start = entropy(&policy.probabilities(&[1.0]).unwrap());
    let mut b = RolloutBuffer {
        obs_dim: 1,
        obs: vec![1.0; 32],
        actions: (0..32).map(|i| i % 3).collect(),
        rewards: vec![0.0; 32],
        values: vec![0.0; 32],
        dones: vec![true; 32],
        ..Default::default()
    };
    b.log_probs = b.actions.iter().map(|a| policy.log_probabilities(&[1.0]).unwrap()[*a]).collect();
    compute_advantages(&mut b, 0.99, 0.95);
    let config = PpoConfig { entropy_coef: 0.5, kl_ceiling: 10.0, ..Default::default() };
    let mut opt = Adam::new(policy.net.param_count(), 1e-2);
    for _ in 0..20 {
        ppo_update(&b, &mut policy, &mut opt, &config, &mut rng).unwrap();
    }
    let end = entropy(&policy.probabilities(&[1.0]).unwrap());
    assert!(end > start, "entropy {start} -> {end}");
}

#[test]
fn bandit_converges_to_best_arm() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let config = PpoConfig { hidden: vec![8], lr: 1e-2, minibatch: 32, ..Default::default() };
    let mut env = Bandit { arms: 3, best: 2 };
    let mut model = ActorCritic::new(1, 3, &config, &mut rng);
    let curve = train(&mut env, &mut model, &config, 200 * 32, 32, 7).unwrap();
    assert_eq!(curve.len(), 200);
    let p = model.policy.probabilities(&[1.0]).unwrap();
    assert!(p[2] >= 0.95, "best-arm probability {}", p[2]);
}

#[test]
fn training_is_reproducible_and_checkpoints_round_trip() {
    let config = PpoConfig { hidden: vec![8], minibatch: 16, ..Default::default() };
    let run = || {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut env = Corridor { length: 5, t: 0 };
        let mut model = ActorCritic::new(2, 2, &config, &mut rng);
        let curve = train(&mut env, &mut model, &config, 128, 32, 3).unwrap();
        (model, curve)
    };
    let (a, ca) = run();
    let (b, cb) = run();
    assert_eq!(ca, cb);
    assert_eq!(a.policy.net.params(), b.policy.net.params());
    let restored = ActorCritic::from_checkpoint(&a.to_checkpoint().unwrap()).unwrap();
    assert_eq!(restored.policy.net.params(), a.policy.net.params());
    assert_eq!(restored.value.net.params(), a.value.net.params());
    assert_eq!(restored.policy_opt, a.policy_opt);
}

proptest! {
    #[test]
    fn gae_matches_brute_force(
        steps in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0, any::<bool>()), 1..40),
        bootstrap in -5.0f64..5.0,
        gamma in 0.5f64..1.0,
        lambda in 0.0f64..1.0,
    ) {
        let n = steps.len();
        let mut b = RolloutBuffer {
            obs_dim: 1,
            obs: vec![0.0; n],
            actions: vec![0; n],
            log_probs: vec![0.0; n],
            rewards: steps.iter().map(|s| s.0).collect(),
            values: steps.iter().map(|s| s.1).collect(),
            dones: steps.iter().map(|s| s.2).collect(),
            bootstrap_value: bootstrap,
            ..Default::default()
        };
        let oracle = brute_force_advantages(&b, gamma, lambda);
        compute_advantages(&mut b, gamma, lambda);
        for t in 0..n {
            prop_assert!((b.advantages[t] - oracle[t]).abs() < 1e-9);
            prop_assert!((b.returns[t] - b.advantages[t] - b.values[t]).abs() < 1e-12);
        }
    }
}
