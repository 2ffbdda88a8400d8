//! Proximal policy optimization for recurrent policies.
//!
//! Rollouts are gathered by a fixed set of workers, each owning an
//! environment, a recurrent state, and a per-batch RNG; workers can run in
//! parallel because results are collected in worker order and no state is
//! shared (see [`crate::exec`]). Updates replay whole worker segments so
//! the recurrent state is exact rather than approximated from stale
//! hidden snapshots.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::RlError;
use crate::exec;
use crate::nn::{ops, Adam, PolicyNet, StepCache};

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

/// Hyper-parameters for rollout collection and policy updates.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PpoConfig {
    pub lr: f64,
    /// Discount factor γ.
    pub gamma: f64,
    /// Generalized-advantage estimation mixing factor λ.
    pub lam: f64,
    /// Policy ratio clip radius ε.
    pub clip: f64,
    pub entropy_coef: f64,
    pub value_coef: f64,
    /// Optimization passes over each collected batch.
    pub epochs: usize,
    /// Worker segments per minibatch (whole segments keep the recurrent
    /// replay exact).
    pub minibatch_segments: usize,
    /// Global gradient-norm ceiling.
    pub max_grad_norm: f64,
    /// Steps collected per worker per batch.
    pub t_roll: usize,
    /// Multiplier applied to rewards as they are recorded for the update
    /// (value targets and advantages see scaled rewards; episode
    /// statistics and evaluation do not). Large raw returns otherwise let
    /// the value-error term dominate the shared trunk's clipped updates.
    pub reward_scale: f64,
}

impl Default for PpoConfig {
    fn default() -> Self {
        PpoConfig {
            lr: 2.5e-4,
            gamma: 0.99,
            lam: 0.95,
            clip: 0.2,
            entropy_coef: 0.01,
            value_coef: 0.5,
            epochs: 4,
            minibatch_segments: 2,
            max_grad_norm: 0.5,
            t_roll: 128,
            reward_scale: 1.0,
        }
    }
}

// ---------------------------------------------------------------------------
// Environment interface
// ---------------------------------------------------------------------------

/// Observation handed to the policy: raw bytes (pixels or a tiny feature
/// vector, scaled by 1/255 before entering the network) plus instruction
/// tokens.
#[derive(Clone, Debug)]
pub struct EnvObs {
    pub pixels: Vec<u8>,
    pub tokens: Vec<u16>,
}

/// Result of one environment transition.
#[derive(Clone, Debug)]
pub struct EnvStep {
    pub obs: EnvObs,
    pub reward: f64,
    pub done: bool,
    /// Whether a terminal transition ended in task success.
    pub success: bool,
}

/// A trainable environment. Implementations terminate their own episodes
/// (step caps included); the collector auto-resets after `done`.
pub trait RolloutEnv {
    fn reset(&mut self) -> EnvObs;
    fn step(&mut self, action: usize) -> EnvStep;
}

/// Converts raw observation bytes to network inputs in `[0, 1]`.
pub fn obs_to_f64(pixels: &[u8]) -> Vec<f64> {
    pixels.iter().map(|&v| v as f64 / 255.0).collect()
}

/// Summary of one completed episode.
#[derive(Clone, Copy, Debug)]
pub struct EpisodeStat {
    pub total_reward: f64,
    pub length: u32,
    pub success: bool,
}

// ---------------------------------------------------------------------------
// Generalized advantage estimation
// ---------------------------------------------------------------------------

/// Computes advantages and value targets over one segment.
///
/// `bootstrap` is the value estimate of the state following the last step,
/// used only when the segment was truncated mid-episode; `dones[t]` masks
/// all flow across episode boundaries.
pub fn compute_gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    bootstrap: f64,
    gamma: f64,
    lam: f64,
) -> (Vec<f64>, Vec<f64>) {
    let t_len = rewards.len();
    debug_assert_eq!(values.len(), t_len);
    debug_assert_eq!(dones.len(), t_len);
    let mut adv = vec![0.0; t_len];
    let mut carry = 0.0;
    for t in (0..t_len).rev() {
        let not_done = if dones[t] { 0.0 } else { 1.0 };
        let v_next = if t + 1 < t_len { values[t + 1] } else { bootstrap };
        let delta = rewards[t] + gamma * v_next * not_done - values[t];
        carry = delta + gamma * lam * not_done * carry;
        adv[t] = carry;
    }
    let ret = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    (adv, ret)
}

// ---------------------------------------------------------------------------
// Rollout collection
// ---------------------------------------------------------------------------

/// One worker's contiguous slice of experience.
#[derive(Clone, Debug)]
pub struct Segment {
    pub obs: Vec<EnvObs>,
    pub actions: Vec<usize>,
    pub logp_old: Vec<f64>,
    pub values: Vec<f64>,
    pub rewards: Vec<f64>,
    pub dones: Vec<bool>,
    /// Recurrent state entering the first step of the segment.
    pub h0: Vec<f64>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }
}

/// A batch of worker segments collected under one policy snapshot.
#[derive(Clone, Debug, Default)]
pub struct RolloutBatch {
    pub segments: Vec<Segment>,
}

struct WorkerSlot<E> {
    env: E,
    obs: EnvObs,
    h: Vec<f64>,
    ep_reward: f64,
    ep_len: u32,
    rng_seed: u64,
}

/// Owns the worker environments and their carried state between batches.
pub struct RolloutCollector<E: RolloutEnv + Send> {
    slots: Vec<WorkerSlot<E>>,
    seeder: ChaCha8Rng,
}

impl<E: RolloutEnv + Send> RolloutCollector<E> {
    pub fn new(envs: Vec<E>, seed: u64) -> Self {
        assert!(!envs.is_empty(), "need at least one worker environment");
        let slots = envs
            .into_iter()
            .map(|mut env| {
                let obs = env.reset();
                WorkerSlot { env, obs, h: Vec::new(), ep_reward: 0.0, ep_len: 0, rng_seed: 0 }
            })
            .collect();
        RolloutCollector { slots, seeder: ChaCha8Rng::seed_from_u64(seed) }
    }

    pub fn n_workers(&self) -> usize {
        self.slots.len()
    }

    /// Collects `t_roll` steps per worker and computes advantages. Also
    /// returns statistics of episodes that completed during collection,
    /// in worker order.
    pub fn collect(
        &mut self,
        policy: &PolicyNet,
        t_roll: usize,
        gamma: f64,
        lam: f64,
        reward_scale: f64,
    ) -> (RolloutBatch, Vec<EpisodeStat>) {
        // Seeds are drawn sequentially up front so the parallel map below
        // is order-free.
        for slot in &mut self.slots {
            slot.rng_seed = self.seeder.gen();
            if slot.h.is_empty() {
                slot.h = policy.initial_hidden();
            }
        }

        let results: Vec<(Segment, Vec<EpisodeStat>)> = exec::map_mut(&mut self.slots, |_, slot| {
            let mut rng = ChaCha8Rng::seed_from_u64(slot.rng_seed);
            let mut seg = Segment {
                obs: Vec::with_capacity(t_roll),
                actions: Vec::with_capacity(t_roll),
                logp_old: Vec::with_capacity(t_roll),
                values: Vec::with_capacity(t_roll),
                rewards: Vec::with_capacity(t_roll),
                dones: Vec::with_capacity(t_roll),
                h0: slot.h.clone(),
                advantages: Vec::new(),
                returns: Vec::new(),
            };
            let mut stats = Vec::new();
            for _ in 0..t_roll {
                let obs_f = obs_to_f64(&slot.obs.pixels);
                let out = policy.act_forward(&obs_f, &slot.obs.tokens, &slot.h);
                let logp = ops::log_softmax(&out.logits);
                let action = ops::sample_from_logp(&logp, &mut rng);
                let step = slot.env.step(action);

                seg.obs.push(slot.obs.clone());
                seg.actions.push(action);
                seg.logp_old.push(logp[action]);
                seg.values.push(out.value);
                seg.rewards.push(step.reward * reward_scale);
                seg.dones.push(step.done);
                slot.ep_reward += step.reward;
                slot.ep_len += 1;

                if step.done {
                    stats.push(EpisodeStat {
                        total_reward: slot.ep_reward,
                        length: slot.ep_len,
                        success: step.success,
                    });
                    slot.ep_reward = 0.0;
                    slot.ep_len = 0;
                    slot.h = policy.initial_hidden();
                    slot.obs = slot.env.reset();
                } else {
                    slot.h = out.h;
                    slot.obs = step.obs;
                }
            }
            let bootstrap = if *seg.dones.last().unwrap_or(&true) {
                0.0
            } else {
                let obs_f = obs_to_f64(&slot.obs.pixels);
                policy.act_forward(&obs_f, &slot.obs.tokens, &slot.h).value
            };
            let (adv, ret) =
                compute_gae(&seg.rewards, &seg.values, &seg.dones, bootstrap, gamma, lam);
            seg.advantages = adv;
            seg.returns = ret;
            (seg, stats)
        });

        let mut batch = RolloutBatch::default();
        let mut all_stats = Vec::new();
        for (seg, stats) in results {
            batch.segments.push(seg);
            all_stats.extend(stats);
        }
        (batch, all_stats)
    }
}

// ---------------------------------------------------------------------------
// PPO update
// ---------------------------------------------------------------------------

/// Aggregate statistics of one batch update (means over minibatches).
#[derive(Clone, Copy, Debug, Default)]
pub struct UpdateStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
    pub approx_kl: f64,
    /// Mean pre-clip global gradient norm.
    pub grad_norm: f64,
}

struct SegmentGradOut {
    grads: Vec<f64>,
    policy_loss: f64,
    value_loss: f64,
    entropy: f64,
    clipped: usize,
    kl_sum: f64,
}

/// Replays one segment under the current parameters and accumulates its
/// gradient contribution. `inv_n` is 1 / (total steps in the minibatch).
fn segment_grads(
    policy: &PolicyNet,
    seg: &Segment,
    norm_adv: &[f64],
    cfg: &PpoConfig,
    inv_n: f64,
) -> SegmentGradOut {
    let t_len = seg.len();
    let n_actions = policy.cfg().n_actions;

    // Forward replay with caches; recurrent state resets at episode ends.
    let mut caches: Vec<StepCache> = Vec::with_capacity(t_len);
    let mut logps: Vec<Vec<f64>> = Vec::with_capacity(t_len);
    let mut values: Vec<f64> = Vec::with_capacity(t_len);
    let mut obs_f: Vec<Vec<f64>> = Vec::with_capacity(t_len);
    let mut h = seg.h0.clone();
    for t in 0..t_len {
        if t > 0 && seg.dones[t - 1] {
            h = policy.initial_hidden();
        }
        let o = obs_to_f64(&seg.obs[t].pixels);
        let (out, cache) = policy.train_forward(&o, &seg.obs[t].tokens, &h);
        h = out.h;
        logps.push(ops::log_softmax(&out.logits));
        values.push(out.value);
        caches.push(cache);
        obs_f.push(o);
    }

    // Per-step loss terms and logit/value gradients.
    let mut out = SegmentGradOut {
        grads: vec![0.0; policy.layout().total()],
        policy_loss: 0.0,
        value_loss: 0.0,
        entropy: 0.0,
        clipped: 0,
        kl_sum: 0.0,
    };
    let mut dlogits: Vec<Vec<f64>> = Vec::with_capacity(t_len);
    let mut dvalues: Vec<f64> = Vec::with_capacity(t_len);
    for t in 0..t_len {
        let lp = &logps[t];
        let a = seg.actions[t];
        let adv = norm_adv[t];
        let ratio = (lp[a] - seg.logp_old[t]).exp();
        let clipped_ratio = ratio.clamp(1.0 - cfg.clip, 1.0 + cfg.clip);
        let surrogate = (ratio * adv).min(clipped_ratio * adv);
        let active = ratio * adv <= clipped_ratio * adv;
        if (ratio - 1.0).abs() > cfg.clip {
            out.clipped += 1;
        }
        out.kl_sum += seg.logp_old[t] - lp[a];

        let entropy = ops::entropy_of_logp(lp);
        let v_err = values[t] - seg.returns[t];
        out.policy_loss += -surrogate * inv_n;
        out.value_loss += cfg.value_coef * v_err * v_err * inv_n;
        out.entropy += entropy * inv_n;

        // d(total loss)/d(logit_i), all terms scaled by 1/N:
        //  - policy: −adv·ratio·(δ_ia − p_i) on the active branch,
        //  - entropy bonus: +c_e·p_i·(logp_i + H).
        let coef = if active { -adv * ratio } else { 0.0 };
        let mut dl = vec![0.0; n_actions];
        for (i, dli) in dl.iter_mut().enumerate() {
            let p_i = lp[i].exp();
            let indicator = if i == a { 1.0 } else { 0.0 };
            let policy_term = coef * (indicator - p_i);
            let entropy_term = cfg.entropy_coef * p_i * (lp[i] + entropy);
            *dli = (policy_term + entropy_term) * inv_n;
        }
        dlogits.push(dl);
        dvalues.push(2.0 * cfg.value_coef * v_err * inv_n);
    }

    // Backward through time; gradient does not cross episode boundaries.
    let mut dh = policy.initial_hidden();
    for t in (0..t_len).rev() {
        let dh_prev = policy.backward_step(
            &mut out.grads,
            &obs_f[t],
            &seg.obs[t].tokens,
            &caches[t],
            &dlogits[t],
            dvalues[t],
            &dh,
        );
        dh = if t > 0 && seg.dones[t - 1] { policy.initial_hidden() } else { dh_prev };
    }
    out
}

/// Scalar training loss and its flat parameter gradient over whole
/// segments, with no optimizer step and no advantage normalization (the
/// advantages stored in the segments are used as-is). This is the exact
/// code path [`ppo_update`] differentiates, exposed so external checks
/// can compare the analytic gradient against finite differences.
pub fn ppo_loss_grad(policy: &PolicyNet, segments: &[Segment], cfg: &PpoConfig) -> (f64, Vec<f64>) {
    let n: usize = segments.iter().map(|s| s.len()).sum();
    let inv_n = 1.0 / n.max(1) as f64;
    let mut grads = vec![0.0; policy.layout().total()];
    let mut loss = 0.0;
    for seg in segments {
        let out = segment_grads(policy, seg, &seg.advantages, cfg, inv_n);
        ops::add_acc(&mut grads, &out.grads);
        loss += out.policy_loss + out.value_loss - cfg.entropy_coef * out.entropy;
    }
    (loss, grads)
}

/// Runs `cfg.epochs` optimization passes over the batch, updating the
/// policy in place. Minibatches are whole worker segments; their order is
/// reshuffled per epoch from `rng`.
pub fn ppo_update(
    policy: &mut PolicyNet,
    adam: &mut Adam,
    batch: &RolloutBatch,
    cfg: &PpoConfig,
    update_idx: u64,
    rng: &mut ChaCha8Rng,
) -> Result<UpdateStats, RlError> {
    if batch.segments.is_empty() || batch.segments.iter().all(|s| s.is_empty()) {
        return Err(RlError::EmptyBatch);
    }

    // Batch-level advantage normalization.
    let all: Vec<f64> =
        batch.segments.iter().flat_map(|s| s.advantages.iter().copied()).collect();
    let mean = all.iter().sum::<f64>() / all.len() as f64;
    let var = all.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / all.len() as f64;
    let inv_std = 1.0 / (var.sqrt() + 1e-8);
    let norm_adv: Vec<Vec<f64>> = batch
        .segments
        .iter()
        .map(|s| s.advantages.iter().map(|a| (a - mean) * inv_std).collect())
        .collect();

    let mut stats = UpdateStats::default();
    let mut n_minibatches = 0usize;

    for _ in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..batch.segments.len()).collect();
        order.shuffle(rng);
        for chunk in order.chunks(cfg.minibatch_segments.max(1)) {
            let n_steps: usize = chunk.iter().map(|&i| batch.segments[i].len()).sum();
            if n_steps == 0 {
                continue;
            }
            let inv_n = 1.0 / n_steps as f64;

            // Per-segment gradients in parallel, combined in chunk order.
            let outs: Vec<SegmentGradOut> = exec::map_range(chunk.len(), |j| {
                let i = chunk[j];
                segment_grads(&*policy, &batch.segments[i], &norm_adv[i], cfg, inv_n)
            });

            let mut grads = vec![0.0; policy.layout().total()];
            let mut mb = UpdateStats::default();
            let mut clipped = 0usize;
            for o in outs {
                ops::add_acc(&mut grads, &o.grads);
                mb.policy_loss += o.policy_loss;
                mb.value_loss += o.value_loss;
                mb.entropy += o.entropy;
                mb.approx_kl += o.kl_sum * inv_n;
                clipped += o.clipped;
            }
            if !(mb.policy_loss + mb.value_loss).is_finite() {
                return Err(RlError::NonFinite {
                    quantity: "loss".to_string(),
                    update: update_idx,
                });
            }
            if grads.iter().any(|g| !g.is_finite()) {
                return Err(RlError::NonFinite {
                    quantity: "gradient".to_string(),
                    update: update_idx,
                });
            }

            let pre_norm = ops::clip_global_norm(&mut grads, cfg.max_grad_norm);
            adam.step(&mut policy.params, &grads);

            stats.policy_loss += mb.policy_loss;
            stats.value_loss += mb.value_loss;
            stats.entropy += mb.entropy;
            stats.approx_kl += mb.approx_kl;
            stats.clip_fraction += clipped as f64 / n_steps as f64;
            stats.grad_norm += pre_norm;
            n_minibatches += 1;
        }
    }

    let k = 1.0 / n_minibatches.max(1) as f64;
    stats.policy_loss *= k;
    stats.value_loss *= k;
    stats.entropy *= k;
    stats.approx_kl *= k;
    stats.clip_fraction *= k;
    stats.grad_norm *= k;
    Ok(stats)
}

// ---------------------------------------------------------------------------
// Trainer
// ---------------------------------------------------------------------------

/// Owns a policy, its optimizer, and a set of rollout workers.
pub struct PpoTrainer<E: RolloutEnv + Send> {
    pub policy: PolicyNet,
    pub adam: Adam,
    pub cfg: PpoConfig,
    pub collector: RolloutCollector<E>,
    pub updates_done: u64,
    pub env_steps: u64,
    rng: ChaCha8Rng,
}

impl<E: RolloutEnv + Send> PpoTrainer<E> {
    pub fn new(policy: PolicyNet, envs: Vec<E>, cfg: PpoConfig, seed: u64) -> Self {
        let adam = Adam::new(policy.params.len(), cfg.lr);
        let collector = RolloutCollector::new(envs, seed ^ 0x9e37_79b9_7f4a_7c15);
        PpoTrainer {
            policy,
            adam,
            cfg,
            collector,
            updates_done: 0,
            env_steps: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Collects one batch and applies one PPO update.
    pub fn train_step(&mut self) -> Result<(UpdateStats, Vec<EpisodeStat>), RlError> {
        let (batch, eps) =
            self.collector.collect(
            &self.policy,
            self.cfg.t_roll,
            self.cfg.gamma,
            self.cfg.lam,
            self.cfg.reward_scale,
        );
        self.env_steps += (self.cfg.t_roll * self.collector.n_workers()) as u64;
        let stats = ppo_update(
            &mut self.policy,
            &mut self.adam,
            &batch,
            &self.cfg,
            self.updates_done,
            &mut self.rng,
        )?;
        self.updates_done += 1;
        Ok((stats, eps))
    }
}

/// Runs one episode with greedy (argmax) action selection.
pub fn greedy_episode<E: RolloutEnv>(env: &mut E, policy: &PolicyNet, step_cap: usize) -> EpisodeStat {
    let mut obs = env.reset();
    let mut h = policy.initial_hidden();
    let mut stat = EpisodeStat { total_reward: 0.0, length: 0, success: false };
    for _ in 0..step_cap {
        let out = policy.act_forward(&obs_to_f64(&obs.pixels), &obs.tokens, &h);
        let step = env.step(ops::argmax(&out.logits));
        stat.total_reward += step.reward;
        stat.length += 1;
        h = out.h;
        obs = step.obs;
        if step.done {
            stat.success = step.success;
            break;
        }
    }
    stat
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------
