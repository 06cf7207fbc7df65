//! Soft actor-critic adapted to the tree MDP: twin soft critics, a
//! squashed-Gaussian actor, entropy temperature, tree-structured replay,
//! a two-branch clamped bootstrap target, and the sign-of-Q rule that
//! turns the continuous agent into a separate/decline decision maker.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{Observation, TreeEnv};
use crate::flowsheet::Flowsheet;
use crate::nn::{
    self, adam_step, forward, gradient, init_network, sample_squashed_gaussian, soft_update,
    NetGrads, NetParams, OptimizerState, SQUASH_EPS,
};

/// The environment's action is always the four column variables.
pub const ACTION_DIM: usize = 4;

/// Bounds on the learned log temperature.
const LOG_ALPHA_MIN: f64 = -9.2; // alpha ~ 1e-4
const LOG_ALPHA_MAX: f64 = 2.3; // alpha ~ 10

/// Scale gradients down to a global norm bound.
pub fn clip_grad_norm(grads: &mut NetGrads, max_norm: f64) {
    let mut sq = 0.0;
    for layer in &grads.layers {
        sq += layer.weights.iter().map(|w| w * w).sum::<f64>();
        sq += layer.biases.iter().map(|b| b * b).sum::<f64>();
    }
    let norm = sq.sqrt();
    if norm > max_norm && norm.is_finite() {
        grads.scale(max_norm / norm);
    }
}

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("replay buffer holds {len} transitions, need {need} to sample")]
    ReplayUnderfilled { len: usize, need: usize },
    #[error("checkpoint is incompatible: {0}")]
    IncompatibleCheckpoint(String),
    #[error(transparent)]
    Net(#[from] nn::NnError),
    #[error("checkpoint serialization: {0}")]
    Serde(#[from] serde_json::Error),
}

/// One decision record: the replay unit for the tree soft-Q target. A
/// `None` branch is terminal (product, outlet, negligible or failure).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeTransition {
    pub state: Observation,
    pub action: [f64; 4],
    /// Already scaled by the problem's reward scale.
    pub reward: f64,
    pub tops_next: Option<Observation>,
    pub bottoms_next: Option<Observation>,
}

/// Hyperparameters. Defaults follow common soft actor-critic practice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AgentConfig {
    pub gamma: f64,
    pub tau: f64,
    pub lr: f64,
    pub batch_size: usize,
    pub replay_capacity: usize,
    /// Env steps with uniform actions and forced separation.
    pub warmup_steps: usize,
    /// Probability of overriding a decline during exploration.
    pub forced_separate_prob: f64,
    pub alpha_init: f64,
    pub auto_alpha: bool,
    pub target_entropy: f64,
    pub updates_per_step: usize,
    pub hidden: Vec<usize>,
    /// Upper bound on a branch's bootstrapped soft value. The tree
    /// target sums two bootstrapped branches at gamma = 1, so unchecked
    /// value estimates can double per backup; true returns are O(1) by
    /// reward-scale design, and the cap clips only divergence.
    pub value_cap: f64,
    /// Global gradient-norm clip for each network update.
    pub grad_clip: f64,
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig {
            gamma: 1.0,
            tau: 0.005,
            lr: 3e-4,
            batch_size: 128,
            replay_capacity: 100_000,
            warmup_steps: 500,
            forced_separate_prob: 0.05,
            alpha_init: 0.2,
            auto_alpha: true,
            target_entropy: -(ACTION_DIM as f64),
            updates_per_step: 1,
            hidden: vec![128, 128],
            value_cap: 5.0,
            grad_clip: 10.0,
        }
    }
}

impl AgentConfig {
    pub fn invariant_violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            v.push("agent.gamma must lie in (0, 1]".into());
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            v.push("agent.tau must lie in (0, 1]".into());
        }
        if !(self.lr > 0.0) {
            v.push("agent.lr must be positive".into());
        }
        if self.batch_size == 0 || self.replay_capacity < self.batch_size {
            v.push("agent.replay_capacity must be at least batch_size (both positive)".into());
        }
        if !(self.forced_separate_prob >= 0.0 && self.forced_separate_prob <= 1.0) {
            v.push("agent.forced_separate_prob must lie in [0, 1]".into());
        }
        if !(self.alpha_init > 0.0) {
            v.push("agent.alpha_init must be positive".into());
        }
        if self.updates_per_step == 0 {
            v.push("agent.updates_per_step must be positive".into());
        }
        if self.hidden.is_empty() || self.hidden.iter().any(|&h| h == 0) {
            v.push("agent.hidden must be nonempty positive sizes".into());
        }
        if !(self.value_cap > 0.0) {
            v.push("agent.value_cap must be positive".into());
        }
        if !(self.grad_clip > 0.0) {
            v.push("agent.grad_clip must be positive".into());
        }
        v
    }
}

/// Whether the policy explores or acts deterministically.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActionMode {
    Explore,
    Evaluate,
}

/// The separate/decline verdict plus the proposed column action.
#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    pub separate: bool,
    pub action: [f64; 4],
    /// Min of the twin online critics at (state, action).
    pub q_value: f64,
    /// True when exploration overrode the sign rule.
    pub forced: bool,
}

/// Uniform ring-buffer replay with its own deterministic sampler.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReplayBuffer {
    capacity: usize,
    storage: Vec<TreeTransition>,
    next: usize,
    rng: RngState,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, seed: u64) -> ReplayBuffer {
        ReplayBuffer {
            capacity,
            storage: Vec::new(),
            next: 0,
            rng: RngState::from_rng(&ChaCha8Rng::seed_from_u64(seed)),
        }
    }

    pub fn push(&mut self, transition: TreeTransition) {
        if self.storage.len() < self.capacity {
            self.storage.push(transition);
        } else {
            self.storage[self.next] = transition;
        }
        self.next = (self.next + 1) % self.capacity;
    }

    pub fn len(&self) -> usize {
        self.storage.len()
    }

    pub fn is_empty(&self) -> bool {
        self.storage.is_empty()
    }

    /// Uniform sample of `batch_size` indices (with replacement).
    pub fn sample_indices(&mut self, batch_size: usize) -> Result<Vec<usize>, AgentError> {
        if self.storage.len() < batch_size {
            return Err(AgentError::ReplayUnderfilled {
                len: self.storage.len(),
                need: batch_size,
            });
        }
        let mut rng = self.rng.to_rng();
        let indices = (0..batch_size)
            .map(|_| rng.gen_range(0..self.storage.len()))
            .collect();
        self.rng = RngState::from_rng(&rng);
        Ok(indices)
    }

    pub fn get(&self, index: usize) -> &TreeTransition {
        &self.storage[index]
    }
}

/// Serializable snapshot of a ChaCha stream position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RngState {
    seed: [u8; 32],
    stream: u64,
    word_pos: u128,
}

impl RngState {
    pub fn from_rng(rng: &ChaCha8Rng) -> RngState {
        RngState {
            seed: rng.get_seed(),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos(),
        }
    }

    pub fn to_rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::from_seed(self.seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(self.word_pos);
        rng
    }
}

/// Adaptive-moment update for a single scalar (the log temperature).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarAdam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    step: u64,
    m: f64,
    v: f64,
}

impl ScalarAdam {
    fn new(lr: f64) -> ScalarAdam {
        ScalarAdam { lr, beta1: 0.9, beta2: 0.999, epsilon: 1e-8, step: 0, m: 0.0, v: 0.0 }
    }

    fn step(&mut self, value: &mut f64, grad: f64) {
        if !grad.is_finite() {
            return;
        }
        self.step += 1;
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * grad;
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * grad * grad;
        let m_hat = self.m / (1.0 - self.beta1.powi(self.step as i32));
        let v_hat = self.v / (1.0 - self.beta2.powi(self.step as i32));
        *value -= self.lr * m_hat / (v_hat.sqrt() + self.epsilon);
    }
}

/// The adapted soft actor-critic agent.
#[derive(Debug, Clone)]
pub struct SacAgent {
    pub config: AgentConfig,
    obs_dim: usize,
    actor: NetParams,
    critics: [NetParams; 2],
    targets: [NetParams; 2],
    actor_opt: OptimizerState,
    critic_opts: [OptimizerState; 2],
    log_alpha: f64,
    alpha_opt: ScalarAdam,
    policy_rng: ChaCha8Rng,
    replay: ReplayBuffer,
    pub total_env_steps: usize,
    pub total_updates: usize,
    pub skipped_updates: usize,
}

impl SacAgent {
    pub fn new(obs_dim: usize, config: AgentConfig, seed: u64) -> Result<SacAgent, AgentError> {
        let mut actor_sizes = vec![obs_dim];
        actor_sizes.extend(&config.hidden);
        actor_sizes.push(2 * ACTION_DIM);
        let mut critic_sizes = vec![obs_dim + ACTION_DIM];
        critic_sizes.extend(&config.hidden);
        critic_sizes.push(1);

        let mut init_rng = ChaCha8Rng::seed_from_u64(seed);
        let actor = init_network(&actor_sizes, &mut init_rng)?;
        let critic_a = init_network(&critic_sizes, &mut init_rng)?;
        let critic_b = init_network(&critic_sizes, &mut init_rng)?;
        let targets = [critic_a.clone(), critic_b.clone()];
        let actor_opt = OptimizerState::new(&actor, config.lr);
        let critic_opts = [
            OptimizerState::new(&critic_a, config.lr),
            OptimizerState::new(&critic_b, config.lr),
        ];
        let log_alpha = config.alpha_init.ln();
        let alpha_opt = ScalarAdam::new(config.lr);
        let policy_rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9E37_79B9_7F4A_7C15);
        let replay = ReplayBuffer::new(config.replay_capacity, seed ^ 0x5851_F42D_4C95_7F2D);
        Ok(SacAgent {
            config,
            obs_dim,
            actor,
            critics: [critic_a, critic_b],
            targets,
            actor_opt,
            critic_opts,
            log_alpha,
            alpha_opt,
            policy_rng,
            replay,
            total_env_steps: 0,
            total_updates: 0,
            skipped_updates: 0,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.log_alpha.exp()
    }

    pub fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    pub fn replay_len(&self) -> usize {
        self.replay.len()
    }

    pub fn replay_push(&mut self, transition: TreeTransition) {
        self.replay.push(transition);
    }

    fn critic_input(&self, obs: &[f64], action: &[f64]) -> Vec<f64> {
        let mut x = Vec::with_capacity(obs.len() + action.len());
        x.extend_from_slice(obs);
        x.extend_from_slice(action);
        x
    }

    /// Min over the twin online critics.
    fn q_min(&self, obs: &[f64], action: &[f64]) -> f64 {
        let x = self.critic_input(obs, action);
        let q0 = nn::evaluate(&self.critics[0], &x).expect("critic shapes fixed")[0];
        let q1 = nn::evaluate(&self.critics[1], &x).expect("critic shapes fixed")[0];
        q0.min(q1)
    }

    /// Actor head outputs split into (mean, raw log_std).
    fn actor_heads(out: &[f64]) -> (&[f64], &[f64]) {
        out.split_at(ACTION_DIM)
    }

    fn draw_noise(&mut self) -> [f64; ACTION_DIM] {
        let mut eps = [0.0; ACTION_DIM];
        for e in &mut eps {
            *e = self.policy_rng.sample(StandardNormal);
        }
        eps
    }

    /// The separate/decline rule: evaluate mode squashes the actor mean
    /// and separates iff min-twin Q is nonnegative; explore mode samples,
    /// with warmup and a small forced-separation probability guarding
    /// against the all-negative cold start.
    pub fn select_action(&mut self, obs: &Observation, mode: ActionMode) -> Decision {
        match mode {
            ActionMode::Evaluate => {
                let out = nn::evaluate(&self.actor, obs.as_slice()).expect("actor shapes fixed");
                let (mean, _) = Self::actor_heads(&out);
                let mut action = [0.0; ACTION_DIM];
                for (a, m) in action.iter_mut().zip(mean) {
                    *a = m.tanh();
                }
                let q = self.q_min(obs.as_slice(), &action);
                Decision { separate: q >= 0.0, action, q_value: q, forced: false }
            }
            ActionMode::Explore => {
                if self.total_env_steps < self.config.warmup_steps {
                    let mut action = [0.0; ACTION_DIM];
                    for a in &mut action {
                        *a = self.policy_rng.gen_range(-1.0..=1.0);
                    }
                    let q = self.q_min(obs.as_slice(), &action);
                    return Decision { separate: true, action, q_value: q, forced: true };
                }
                let out = nn::evaluate(&self.actor, obs.as_slice()).expect("actor shapes fixed");
                let (mean, raw_ls) = Self::actor_heads(&out);
                let eps = self.draw_noise();
                let sample = sample_squashed_gaussian(mean, raw_ls, &eps);
                let mut action = [0.0; ACTION_DIM];
                action.copy_from_slice(&sample.action);
                let q = self.q_min(obs.as_slice(), &action);
                let force_draw: f64 = self.policy_rng.gen_range(0.0..1.0);
                let separate = q >= 0.0;
                if !separate && force_draw < self.config.forced_separate_prob {
                    Decision { separate: true, action, q_value: q, forced: true }
                } else {
                    Decision { separate, action, q_value: q, forced: false }
                }
            }
        }
    }

    /// Sample a fresh action from the current actor at `obs` and return
    /// (action, log pi).
    fn sample_policy(&mut self, obs: &[f64]) -> (Vec<f64>, f64) {
        let out = nn::evaluate(&self.actor, obs).expect("actor shapes fixed");
        let (mean, raw_ls) = Self::actor_heads(&out);
        let eps = self.draw_noise();
        let s = sample_squashed_gaussian(mean, raw_ls, &eps);
        (s.action, s.log_prob)
    }

    /// Two-branch clamped soft target:
    /// y = r + gamma * sum over present branches of
    ///     max(0, min_k targetQ_k(s', a') - alpha * log pi(a'|s'))
    /// with a' freshly sampled from the current actor. The clamp encodes
    /// that a branch whose soft value is negative would be declined and
    /// become a terminal leaf worth zero.
    pub fn compute_target(&mut self, batch: &[&TreeTransition]) -> Vec<f64> {
        let alpha = self.alpha();
        let gamma = self.config.gamma;
        let mut ys = Vec::with_capacity(batch.len());
        for t in batch {
            let mut y = t.reward;
            for branch in [&t.tops_next, &t.bottoms_next] {
                if let Some(obs) = branch {
                    let (action, log_pi) = self.sample_policy(obs.as_slice());
                    let x = self.critic_input(obs.as_slice(), &action);
                    let q0 = nn::evaluate(&self.targets[0], &x).expect("target shapes fixed")[0];
                    let q1 = nn::evaluate(&self.targets[1], &x).expect("target shapes fixed")[0];
                    let soft_value = q0.min(q1) - alpha * log_pi;
                    y += gamma * soft_value.clamp(0.0, self.config.value_cap);
                }
            }
            ys.push(y);
        }
        ys
    }

    /// One optimizer step on each twin critic toward `targets`; returns
    /// the pre-step mean squared error (averaged over batch and twins).
    pub fn update_critics(&mut self, batch: &[&TreeTransition], targets: &[f64]) -> f64 {
        assert_eq!(batch.len(), targets.len());
        let n = batch.len() as f64;
        let mut total_loss = 0.0;
        for k in 0..2 {
            let mut grads = NetGrads::zeros_like(&self.critics[k]);
            let mut loss = 0.0;
            for (t, &y) in batch.iter().zip(targets) {
                let x = self.critic_input(t.state.as_slice(), &t.action);
                let (out, cache) = forward(&self.critics[k], &x).expect("critic shapes fixed");
                let err = out[0] - y;
                loss += err * err;
                let (g, _) = gradient(&self.critics[k], &cache, &[2.0 * err / n])
                    .expect("cache fresh");
                grads.add(&g);
            }
            loss /= n;
            total_loss += loss;
            clip_grad_norm(&mut grads, self.config.grad_clip);
            if loss.is_finite() {
                if adam_step(&mut self.critics[k], &grads, &mut self.critic_opts[k]) {
                    continue;
                }
            }
            self.skipped_updates += 1;
        }
        total_loss / 2.0
    }

    /// One optimizer step on the actor minimizing
    /// mean(alpha * log pi(a|s) - min_k Q_k(s, a)) with reparameterized
    /// actions; returns the pre-step loss.
    pub fn update_actor(&mut self, batch: &[&TreeTransition]) -> f64 {
        let states: Vec<&Observation> = batch.iter().map(|t| &t.state).collect();
        let noises: Vec<[f64; ACTION_DIM]> = (0..states.len()).map(|_| self.draw_noise()).collect();
        let alpha = self.alpha();
        // Split borrows: evaluate the twin critics inside the closure.
        let critics = self.critics.clone();
        let q_fn = |obs: &[f64], action: &[f64]| -> (f64, Vec<f64>) {
            let mut x = Vec::with_capacity(obs.len() + action.len());
            x.extend_from_slice(obs);
            x.extend_from_slice(action);
            let (out0, cache0) = forward(&critics[0], &x).expect("critic shapes fixed");
            let (out1, cache1) = forward(&critics[1], &x).expect("critic shapes fixed");
            let (q, which, cache) = if out0[0] <= out1[0] {
                (out0[0], 0, cache0)
            } else {
                (out1[0], 1, cache1)
            };
            let (_, input_grad) =
                gradient(&critics[which], &cache, &[1.0]).expect("cache fresh");
            (q, input_grad[obs.len()..].to_vec())
        };
        let (loss, mut grads) = actor_loss_grads(&self.actor, &states, &noises, alpha, q_fn);
        clip_grad_norm(&mut grads, self.config.grad_clip);
        if loss.is_finite() {
            if adam_step(&mut self.actor, &grads, &mut self.actor_opt) {
                return loss;
            }
        }
        self.skipped_updates += 1;
        loss
    }

    /// Gradient step on log alpha toward the entropy target; returns the
    /// new alpha. No-op unless auto_alpha is enabled.
    pub fn update_temperature(&mut self, batch: &[&TreeTransition]) -> f64 {
        if !self.config.auto_alpha {
            return self.alpha();
        }
        let mut log_pis = Vec::with_capacity(batch.len());
        for t in batch {
            let (_, log_pi) = self.sample_policy(t.state.as_slice());
            log_pis.push(log_pi);
        }
        let grad = temperature_gradient(&log_pis, self.config.target_entropy);
        self.alpha_opt.step(&mut self.log_alpha, grad);
        // keep the temperature in a workable band
        self.log_alpha = self.log_alpha.clamp(LOG_ALPHA_MIN, LOG_ALPHA_MAX);
        self.alpha()
    }

    pub fn soft_update_targets(&mut self) {
        for k in 0..2 {
            soft_update(&mut self.targets[k], &self.critics[k], self.config.tau)
                .expect("twin shapes fixed");
        }
    }

    /// Sample a batch and run one full update round (critics, actor,
    /// temperature, target tracking). No-op while the buffer is smaller
    /// than a batch.
    pub fn maybe_update(&mut self) {
        if self.replay.len() < self.config.batch_size {
            return;
        }
        for _ in 0..self.config.updates_per_step {
            let indices = self
                .replay
                .sample_indices(self.config.batch_size)
                .expect("length checked");
            let batch: Vec<TreeTransition> =
                indices.iter().map(|&i| self.replay.get(i).clone()).collect();
            let refs: Vec<&TreeTransition> = batch.iter().collect();
            let targets = self.compute_target(&refs);
            self.update_critics(&refs, &targets);
            self.update_actor(&refs);
            self.update_temperature(&refs);
            self.soft_update_targets();
            self.total_updates += 1;
        }
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            version: 1,
            config: self.config.clone(),
            obs_dim: self.obs_dim,
            actor: self.actor.clone(),
            critics: self.critics.clone(),
            targets: self.targets.clone(),
            actor_opt: self.actor_opt.clone(),
            critic_opts: self.critic_opts.clone(),
            log_alpha: self.log_alpha,
            alpha_opt: self.alpha_opt.clone(),
            policy_rng: RngState::from_rng(&self.policy_rng),
            replay: self.replay.clone(),
            total_env_steps: self.total_env_steps,
            total_updates: self.total_updates,
            skipped_updates: self.skipped_updates,
        }
    }

    pub fn from_checkpoint(ckpt: Checkpoint) -> SacAgent {
        SacAgent {
            config: ckpt.config,
            obs_dim: ckpt.obs_dim,
            actor: ckpt.actor,
            critics: ckpt.critics,
            targets: ckpt.targets,
            actor_opt: ckpt.actor_opt,
            critic_opts: ckpt.critic_opts,
            log_alpha: ckpt.log_alpha,
            alpha_opt: ckpt.alpha_opt,
            policy_rng: ckpt.policy_rng.to_rng(),
            replay: ckpt.replay,
            total_env_steps: ckpt.total_env_steps,
            total_updates: ckpt.total_updates,
            skipped_updates: ckpt.skipped_updates,
        }
    }
}

/// Everything needed to resume training bit-compatibly.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub config: AgentConfig,
    pub obs_dim: usize,
    pub actor: NetParams,
    pub critics: [NetParams; 2],
    pub targets: [NetParams; 2],
    pub actor_opt: OptimizerState,
    pub critic_opts: [OptimizerState; 2],
    pub log_alpha: f64,
    pub alpha_opt: ScalarAdam,
    pub policy_rng: RngState,
    pub replay: ReplayBuffer,
    pub total_env_steps: usize,
    pub total_updates: usize,
    pub skipped_updates: usize,
}

/// Gradient of the temperature objective with respect to log alpha.
/// Zero exactly when the batch entropy estimate sits at the target.
pub fn temperature_gradient(log_pis: &[f64], target_entropy: f64) -> f64 {
    let mean: f64 = log_pis.iter().sum::<f64>() / log_pis.len() as f64;
    -(mean + target_entropy)
}

/// Pre-step actor loss and parameter gradients over a batch with given
/// reparameterization noise. `q_fn(state, action)` returns the critic
/// value and its gradient with respect to the action.
pub fn actor_loss_grads<F>(
    actor: &NetParams,
    states: &[&Observation],
    noises: &[[f64; ACTION_DIM]],
    alpha: f64,
    q_fn: F,
) -> (f64, NetGrads)
where
    F: Fn(&[f64], &[f64]) -> (f64, Vec<f64>),
{
    let n = states.len() as f64;
    let mut total_loss = 0.0;
    let mut grads = NetGrads::zeros_like(actor);
    for (obs, eps) in states.iter().zip(noises) {
        let (out, cache) = forward(actor, obs.as_slice()).expect("actor shapes fixed");
        let (mean, raw_ls) = out.split_at(ACTION_DIM);
        let sample = sample_squashed_gaussian(mean, raw_ls, eps);
        let (q, dq_da) = q_fn(obs.as_slice(), &sample.action);
        total_loss += alpha * sample.log_prob - q;

        // Cotangent on the actor heads. For each dimension:
        //   dL/da = alpha * 2a/(1 - a^2 + eps) - dQ/da
        //   da/du = 1 - tanh(u)^2,  du/dmean = 1,  du/dls = sigma * eps
        // plus the direct -alpha from the -log sigma density term.
        let mut cot = vec![0.0; 2 * ACTION_DIM];
        for d in 0..ACTION_DIM {
            let a = sample.action[d];
            let tanh_u = sample.pre_tanh[d].tanh();
            let da_du = 1.0 - tanh_u * tanh_u;
            let dl_da = alpha * 2.0 * a / (1.0 - a * a + SQUASH_EPS) - dq_da[d];
            let ls = raw_ls[d].clamp(nn::LOG_STD_MIN, nn::LOG_STD_MAX);
            let clamp_active = raw_ls[d] <= nn::LOG_STD_MIN || raw_ls[d] >= nn::LOG_STD_MAX;
            cot[d] = dl_da * da_du / n;
            cot[ACTION_DIM + d] = if clamp_active {
                0.0
            } else {
                (dl_da * da_du * ls.exp() * eps[d] - alpha) / n
            };
        }
        let (g, _) = gradient(actor, &cache, &cot).expect("cache fresh");
        grads.add(&g);
    }
    (total_loss / n, grads)
}

// ---------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------

/// One row of the per-episode training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingLogRow {
    pub episode: usize,
    pub steps: usize,
    pub columns_placed: usize,
    pub failures: usize,
    pub episode_return: f64,
    pub revenue_usd_per_yr: f64,
    pub tac_usd_per_yr: f64,
    pub best_return_so_far: f64,
    pub alpha: f64,
    pub wall_ms: u64,
}

/// Receives one row per finished episode.
pub trait TrainSink {
    fn on_episode(&mut self, row: &TrainingLogRow);
}

/// A sink that drops everything.
pub struct NullSink;

impl TrainSink for NullSink {
    fn on_episode(&mut self, _row: &TrainingLogRow) {}
}

impl<F: FnMut(&TrainingLogRow)> TrainSink for F {
    fn on_episode(&mut self, row: &TrainingLogRow) {
        self(row)
    }
}

/// Totals of a training run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSummary {
    pub episodes: usize,
    pub env_steps: usize,
    pub updates: usize,
    pub skipped_updates: usize,
    pub best_return: Option<f64>,
    pub best_flowsheet: Option<Flowsheet>,
    pub failures: usize,
}

/// Drives episodes of a tree environment with one agent, tracking the
/// best flowsheet seen.
pub struct Trainer<E: TreeEnv> {
    pub env: E,
    pub agent: SacAgent,
    pub episodes_done: usize,
    pub best_return: Option<f64>,
    pub best_flowsheet: Option<Flowsheet>,
    pub total_failures: usize,
    pub last_was_best: bool,
}

impl<E: TreeEnv> Trainer<E> {
    pub fn new(env: E, agent: SacAgent) -> Trainer<E> {
        Trainer {
            env,
            agent,
            episodes_done: 0,
            best_return: None,
            best_flowsheet: None,
            total_failures: 0,
            last_was_best: false,
        }
    }

    /// Resume from a checkpointed agent and counters.
    pub fn resume(env: E, agent: SacAgent, episodes_done: usize, best_return: Option<f64>,
                  best_flowsheet: Option<Flowsheet>) -> Trainer<E> {
        Trainer {
            env,
            agent,
            episodes_done,
            best_return,
            best_flowsheet,
            total_failures: 0,
            last_was_best: false,
        }
    }

    /// Run one exploration episode with learning updates after every
    /// stored transition. Declines store nothing: the target clamp
    /// already encodes the zero value of declining.
    pub fn run_episode(&mut self) -> TrainingLogRow {
        let started = Instant::now();
        let mut obs = self.env.reset();
        let mut episode_return = 0.0;
        let mut steps = 0;
        while !self.env.done() {
            let decision = self.agent.select_action(&obs, ActionMode::Explore);
            self.agent.total_env_steps += 1;
            steps += 1;
            if decision.separate {
                let out = self
                    .env
                    .step_separate(decision.action)
                    .expect("stepping only while not done");
                episode_return += out.reward;
                self.agent.replay_push(TreeTransition {
                    state: obs.clone(),
                    action: decision.action,
                    reward: out.reward,
                    tops_next: out.tops.observation().cloned(),
                    bottoms_next: out.bottoms.observation().cloned(),
                });
                self.agent.maybe_update();
            } else {
                let out = self
                    .env
                    .step_decline()
                    .expect("stepping only while not done");
                episode_return += out.reward;
            }
            if self.env.done() {
                break;
            }
            obs = self.env.current_observation().expect("episode not done");
        }

        self.episodes_done += 1;
        let stats = self.env.episode_stats();
        self.total_failures += stats.failures;
        self.last_was_best = match self.best_return {
            None => true,
            Some(best) => episode_return > best,
        };
        if self.last_was_best {
            self.best_return = Some(episode_return);
            self.best_flowsheet = self.env.flowsheet().cloned();
        }
        TrainingLogRow {
            episode: self.episodes_done,
            steps,
            columns_placed: stats.columns_placed,
            failures: stats.failures,
            episode_return,
            revenue_usd_per_yr: stats.revenue_usd_per_yr,
            tac_usd_per_yr: stats.tac_usd_per_yr,
            best_return_so_far: self.best_return.unwrap_or(episode_return),
            alpha: self.agent.alpha(),
            wall_ms: started.elapsed().as_millis() as u64,
        }
    }

    /// One deterministic episode (no exploration, no learning); returns
    /// the episode return.
    pub fn evaluate_episode(&mut self) -> f64 {
        let mut obs = self.env.reset();
        let mut episode_return = 0.0;
        while !self.env.done() {
            let decision = self.agent.select_action(&obs, ActionMode::Evaluate);
            let out = if decision.separate {
                self.env.step_separate(decision.action)
            } else {
                self.env.step_decline()
            }
            .expect("stepping only while not done");
            episode_return += out.reward;
            if self.env.done() {
                break;
            }
            obs = self.env.current_observation().expect("episode not done");
        }
        episode_return
    }

    pub fn summary(&self) -> RunSummary {
        RunSummary {
            episodes: self.episodes_done,
            env_steps: self.agent.total_env_steps,
            updates: self.agent.total_updates,
            skipped_updates: self.agent.skipped_updates,
            best_return: self.best_return,
            best_flowsheet: self.best_flowsheet.clone(),
            failures: self.total_failures,
        }
    }
}

/// Train a fresh agent on `env` for a number of episodes, feeding one
/// log row per episode to the sink.
pub fn train<E: TreeEnv, S: TrainSink>(
    env: E,
    obs_dim: usize,
    config: AgentConfig,
    episodes: usize,
    seed: u64,
    sink: &mut S,
) -> Result<RunSummary, AgentError> {
    let agent = SacAgent::new(obs_dim, config, seed)?;
    let mut trainer = Trainer::new(env, agent);
    for _ in 0..episodes {
        let row = trainer.run_episode();
        sink.on_episode(&row);
    }
    Ok(trainer.summary())
}
