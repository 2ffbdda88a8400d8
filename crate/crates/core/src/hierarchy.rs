//! Two-level agent assembly.
//!
//! The low level is a navigation policy whose instruction can carry a room
//! cue ("... in the kitchen"); the high level is a policy that picks those
//! cues. Training proceeds in stages:
//!
//! 1. the navigator trains against ground-truth cues ([`SimEnv`] with
//!    [`InstructionMode::OracleEnhanced`]),
//! 2. the cue picker trains either on an abstract room-coverage task
//!    ([`AbstractEnv`]) or on the real simulator against the frozen
//!    navigator ([`MetaFrozenEnv`]),
//! 3. [`FullAgent`] runs both levels together, with an assessment gate
//!    deciding when a requested termination is allowed through.

use std::collections::VecDeque;
use std::sync::Arc;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::RlError;
use crate::exec;
use crate::floorplan::{shortest_room_path, FloorPlan, RoomId};
use crate::lang::{encode, EnhancedInstruction, Instruction, TRAIN_OBJECTS};
use crate::nn::{ops, GaNet, NetConfig, PolicyNet};
use crate::render::{render_room_center, Observation, RenderParams};
use crate::rl::{
    greedy_episode, obs_to_f64, EnvObs, EnvStep, PpoConfig, PpoTrainer, RolloutEnv,
};
use crate::simworld::{Action, EpisodeConfig, World, DEFAULT_MAX_STEPS, SUCCESS_RADIUS};

/// Steps between high-level decisions in the composed agent.
pub const META_PERIOD: u32 = 50;
/// Step cap of the abstract room-coverage task.
pub const ABSTRACT_STEP_CAP: u32 = 14;
/// Reward for entering a not-yet-visited room in the abstract task.
pub const COVER_REWARD: f64 = 0.1;
/// Penalty for any other abstract transition.
pub const COVER_PENALTY: f64 = 0.01;

/// Low-level action set: movement plus an assessment request.
pub const CONTROLLER_ACTIONS: [Action; 4] =
    [Action::Forward, Action::TurnLeft, Action::TurnRight, Action::Query];
/// Flat action set: movement plus direct termination.
pub const BASELINE_ACTIONS: [Action; 4] =
    [Action::Forward, Action::TurnLeft, Action::TurnRight, Action::Done];

// ---------------------------------------------------------------------------
// Ground-truth room cues
// ---------------------------------------------------------------------------

/// The room cue a perfect high level would give: the next non-corridor
/// room along the shortest room-graph path to the goal room (the goal room
/// itself once there, or when only the corridor separates them).
pub fn oracle_enhance(plan: &FloorPlan, current: RoomId, goal_room: RoomId) -> RoomId {
    let path = shortest_room_path(plan, current, goal_room)
        .expect("valid plans are connected");
    for &room in &path[1..] {
        if !room.is_corridor() {
            return room;
        }
    }
    goal_room
}

// ---------------------------------------------------------------------------
// Simulator-backed training environment
// ---------------------------------------------------------------------------

/// Whether instructions carry ground-truth room cues.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum InstructionMode {
    Plain,
    OracleEnhanced,
}

/// Which discrete action set the policy drives.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ActionSet {
    /// Movement + assessment request; termination is decided by the gate
    /// (ground truth during training).
    Controller,
    /// Movement + direct termination (the flat agent).
    Baseline,
}

/// Episode-generation settings for [`SimEnv`].
#[derive(Clone, Debug)]
pub struct SimEnvCfg {
    pub mode: InstructionMode,
    pub actions: ActionSet,
    pub n_distractors: usize,
    pub soft_termination: bool,
    pub max_steps: u32,
    /// Goal object types episodes draw from.
    pub goal_pool: Vec<Instruction>,
}

impl SimEnvCfg {
    /// Navigator training: ground-truth cues, gated termination.
    pub fn controller_train() -> Self {
        SimEnvCfg {
            mode: InstructionMode::OracleEnhanced,
            actions: ActionSet::Controller,
            n_distractors: 2,
            soft_termination: true,
            max_steps: DEFAULT_MAX_STEPS,
            goal_pool: TRAIN_OBJECTS.to_vec(),
        }
    }

    /// Ablation: same agent, no room cues.
    pub fn controller_plain() -> Self {
        SimEnvCfg { mode: InstructionMode::Plain, ..Self::controller_train() }
    }

    /// Flat baseline: plain instructions, self-terminating action set.
    pub fn baseline_train() -> Self {
        SimEnvCfg {
            mode: InstructionMode::Plain,
            actions: ActionSet::Baseline,
            ..Self::controller_train()
        }
    }

    /// Evaluation variant: unsuccessful termination ends the episode.
    pub fn for_eval(&self) -> Self {
        SimEnvCfg { soft_termination: false, ..self.clone() }
    }
}

/// A stream of navigation episodes over a plan set, adapted to the
/// rollout interface. Each `reset` draws a plan, a goal object, and an
/// episode seed from the environment's own RNG.
pub struct SimEnv {
    plans: Arc<Vec<FloorPlan>>,
    cfg: SimEnvCfg,
    rng: ChaCha8Rng,
    world: Option<World>,
    plain: Instruction,
    goal_room: RoomId,
    tokens: Vec<u16>,
}

impl SimEnv {
    pub fn new(plans: Arc<Vec<FloorPlan>>, cfg: SimEnvCfg, seed: u64) -> Self {
        assert!(!plans.is_empty(), "need at least one floor plan");
        assert!(!cfg.goal_pool.is_empty(), "need at least one goal object");
        SimEnv {
            plans,
            cfg,
            rng: ChaCha8Rng::seed_from_u64(seed),
            world: None,
            plain: TRAIN_OBJECTS[0],
            goal_room: RoomId::Corridor,
            tokens: Vec::new(),
        }
    }

    /// The live episode. Panics before the first `reset`.
    pub fn world(&self) -> &World {
        self.world.as_ref().expect("reset the environment first")
    }

    /// Mutable access for tests and tooling (e.g. teleporting the agent).
    pub fn world_mut(&mut self) -> &mut World {
        self.world.as_mut().expect("reset the environment first")
    }

    pub fn plain_instruction(&self) -> Instruction {
        self.plain
    }

    fn compute_tokens(&self) -> Vec<u16> {
        let world = self.world.as_ref().expect("live episode");
        let enhanced = match self.cfg.mode {
            InstructionMode::Plain => EnhancedInstruction::plain(self.plain),
            InstructionMode::OracleEnhanced => {
                let cue = oracle_enhance(world.plan(), world.current_room(), self.goal_room);
                EnhancedInstruction::with_room(self.plain, cue)
                    .expect("cue rooms are never the corridor")
            }
        };
        encode(&enhanced).0.to_vec()
    }

    fn make_obs(&self) -> EnvObs {
        EnvObs { pixels: self.world().observe().to_chw_bytes(), tokens: self.tokens.clone() }
    }
}

impl RolloutEnv for SimEnv {
    fn reset(&mut self) -> EnvObs {
        // Episode initialization can fail for pathological seeds (object
        // placement); redraw rather than die.
        for _attempt in 0..16 {
            let plan = self.plans[self.rng.gen_range(0..self.plans.len())].clone();
            let goal = self.cfg.goal_pool[self.rng.gen_range(0..self.cfg.goal_pool.len())];
            let ep = EpisodeConfig {
                goal,
                n_distractors: self.cfg.n_distractors,
                soft_termination: self.cfg.soft_termination,
                max_steps: self.cfg.max_steps,
                seed: self.rng.gen(),
            };
            match World::reset(plan, ep) {
                Ok(world) => {
                    self.plain = goal;
                    self.goal_room = world.goal_object().room;
                    self.world = Some(world);
                    self.tokens = self.compute_tokens();
                    return self.make_obs();
                }
                Err(_) => continue,
            }
        }
        panic!("could not initialize an episode in 16 attempts");
    }

    fn step(&mut self, action_idx: usize) -> EnvStep {
        let mut action = match self.cfg.actions {
            ActionSet::Controller => CONTROLLER_ACTIONS[action_idx],
            ActionSet::Baseline => BASELINE_ACTIONS[action_idx],
        };
        if action == Action::Query && self.cfg.actions == ActionSet::Controller {
            // Training-time gate: a perfect assessor turns the request
            // into termination exactly when the goal is within reach.
            let near = self.world().geodesic_to_goal() <= SUCCESS_RADIUS;
            action = if near { Action::Done } else { Action::Query };
        }
        let out = {
            let world = self.world.as_mut().expect("reset the environment first");
            world.step(action).expect("step on a live episode")
        };
        if !out.terminated && self.cfg.mode == InstructionMode::OracleEnhanced {
            // Keep the cue current; it only actually changes on room entry.
            self.tokens = self.compute_tokens();
        }
        EnvStep {
            obs: self.make_obs(),
            reward: out.reward,
            done: out.terminated,
            success: out.info.success,
        }
    }
}

/// Greedy evaluation over simulator episodes: success rate and mean
/// episode reward. Episodes are seeded individually, so repeated calls
/// see identical tasks (paired comparisons across policies).
pub fn eval_sim(
    plans: &Arc<Vec<FloorPlan>>,
    cfg: &SimEnvCfg,
    policy: &PolicyNet,
    episodes: usize,
    step_cap: usize,
    seed: u64,
) -> (f64, f64) {
    let stats = exec::map_range(episodes, |i| {
        let mut env = SimEnv::new(Arc::clone(plans), cfg.clone(), seed ^ (i as u64).wrapping_mul(0x9e3779b97f4a7c15));
        greedy_episode(&mut env, policy, step_cap)
    });
    let sr = stats.iter().filter(|s| s.success).count() as f64 / episodes as f64;
    let mean_r = stats.iter().map(|s| s.total_reward).sum::<f64>() / episodes as f64;
    (sr, mean_r)
}

// ---------------------------------------------------------------------------
// Abstract room-coverage task
// ---------------------------------------------------------------------------

/// Pre-rendered room-center views for a plan list: `views[plan][ord]` is
/// the channel-first frame seen from the center of that room, present
/// only for rooms the template has.
pub type RoomViews = Vec<Vec<Option<Vec<u8>>>>;

/// Renders every (plan, room) view once up front.
pub fn build_room_views(plans: &[FloorPlan], params: &RenderParams) -> Arc<RoomViews> {
    let views = exec::map_range(plans.len(), |i| {
        let plan = &plans[i];
        RoomId::ALL
            .iter()
            .map(|&room| {
                plan.template()
                    .room(room)
                    .map(|_| render_room_center(plan, room, params).to_chw_bytes())
            })
            .collect::<Vec<_>>()
    });
    Arc::new(views)
}

/// Can the abstracted navigator move `cur -> target` in one leg? True for
/// adjacent rooms and for hops that only transit the corridor.
fn leg_reachable(plan: &FloorPlan, cur: RoomId, target: RoomId) -> bool {
    if cur == target || plan.template().room(target).is_none() {
        return false;
    }
    plan.adjacent(cur, target)
        || (plan.adjacent(cur, RoomId::Corridor) && plan.adjacent(RoomId::Corridor, target))
}

fn nav_bit(room: RoomId) -> Option<u8> {
    RoomId::NAV.iter().position(|&r| r == room).map(|i| 1u8 << i)
}

fn template_nav_mask(plan: &FloorPlan) -> u8 {
    plan.template()
        .nav_rooms()
        .into_iter()
        .map(|r| nav_bit(r).expect("nav room"))
        .fold(0, |m, b| m | b)
}

/// Room-coverage task: episodes start in the corridor; each action names
/// a room, moving there when reachable in one leg. Entering an unvisited
/// room earns [`COVER_REWARD`]; everything else costs [`COVER_PENALTY`].
/// The episode ends once every room is visited (success) or after
/// [`ABSTRACT_STEP_CAP`] decisions. The observation is the view from the
/// current room's center; visited rooms must be remembered, not seen.
pub struct AbstractEnv {
    plans: Arc<Vec<FloorPlan>>,
    views: Arc<RoomViews>,
    rng: ChaCha8Rng,
    fixed_plan: Option<usize>,
    plan_idx: usize,
    current: RoomId,
    visited: u8,
    full_mask: u8,
    steps: u32,
    token_len: usize,
}

impl AbstractEnv {
    pub fn new(plans: Arc<Vec<FloorPlan>>, views: Arc<RoomViews>, seed: u64) -> Self {
        assert_eq!(plans.len(), views.len(), "views must be built from the same plan list");
        AbstractEnv {
            plans,
            views,
            rng: ChaCha8Rng::seed_from_u64(seed),
            fixed_plan: None,
            plan_idx: 0,
            current: RoomId::Corridor,
            visited: 0,
            full_mask: 0,
            steps: 0,
            token_len: crate::lang::TOKEN_LEN,
        }
    }

    /// Pins every episode to one plan (round-robin evaluation).
    pub fn with_fixed_plan(mut self, idx: usize) -> Self {
        assert!(idx < self.plans.len());
        self.fixed_plan = Some(idx);
        self
    }

    /// Number of distinct rooms visited so far this episode.
    pub fn visited_count(&self) -> u32 {
        self.visited.count_ones()
    }

    /// Number of rooms the current plan asks to be covered.
    pub fn room_count(&self) -> u32 {
        self.full_mask.count_ones()
    }

    fn obs(&self) -> EnvObs {
        let pixels = self.views[self.plan_idx][self.current.ord()]
            .as_ref()
            .expect("current room exists in the template")
            .clone();
        EnvObs { pixels, tokens: vec![0; self.token_len] }
    }
}

impl RolloutEnv for AbstractEnv {
    fn reset(&mut self) -> EnvObs {
        self.plan_idx = match self.fixed_plan {
            Some(i) => i,
            None => self.rng.gen_range(0..self.plans.len()),
        };
        self.current = RoomId::Corridor;
        self.visited = 0;
        self.full_mask = template_nav_mask(&self.plans[self.plan_idx]);
        self.steps = 0;
        self.obs()
    }

    fn step(&mut self, action: usize) -> EnvStep {
        let target = RoomId::NAV[action];
        let plan = &self.plans[self.plan_idx];
        let mut reward = -COVER_PENALTY;
        if leg_reachable(plan, self.current, target) {
            self.current = target;
            let bit = nav_bit(target).expect("nav target");
            if self.visited & bit == 0 {
                self.visited |= bit;
                reward = COVER_REWARD;
            }
        }
        self.steps += 1;
        let covered = self.visited == self.full_mask;
        let done = covered || self.steps >= ABSTRACT_STEP_CAP;
        EnvStep { obs: self.obs(), reward, done, success: covered }
    }
}

/// Highest achievable return of the abstract task on one plan, by
/// memoized exhaustive search over (room, visited, steps-left).
pub fn abstract_optimal_return(plan: &FloorPlan) -> f64 {
    let full = template_nav_mask(plan);
    let cap = ABSTRACT_STEP_CAP as usize;
    // memo[room_ord][visited][steps_left]
    let mut memo = vec![f64::NAN; 8 * 128 * (cap + 1)];

    fn go(plan: &FloorPlan, full: u8, cur: RoomId, visited: u8, left: usize, memo: &mut [f64]) -> f64 {
        if visited == full || left == 0 {
            return 0.0;
        }
        let key = (cur.ord() * 128 + visited as usize) * 15 + left;
        if !memo[key].is_nan() {
            return memo[key];
        }
        let mut best = f64::NEG_INFINITY;
        for &target in RoomId::NAV.iter() {
            let (reward, next, nvis) = if leg_reachable(plan, cur, target) {
                let bit = nav_bit(target).expect("nav target");
                let r = if visited & bit == 0 { COVER_REWARD } else { -COVER_PENALTY };
                (r, target, visited | bit)
            } else {
                (-COVER_PENALTY, cur, visited)
            };
            let v = reward + go(plan, full, next, nvis, left - 1, memo);
            if v > best {
                best = v;
            }
        }
        memo[key] = best;
        best
    }

    go(plan, full, RoomId::Corridor, 0, cap, &mut memo)
}

/// Greedy coverage evaluation: mean fraction of rooms covered and the
/// full-coverage rate, round-robin over the plan list.
pub fn eval_abstract_coverage(
    plans: &Arc<Vec<FloorPlan>>,
    views: &Arc<RoomViews>,
    policy: &PolicyNet,
    episodes: usize,
    seed: u64,
) -> (f64, f64) {
    let results = exec::map_range(episodes, |i| {
        let mut env = AbstractEnv::new(Arc::clone(plans), Arc::clone(views), seed + i as u64)
            .with_fixed_plan(i % plans.len());
        let mut obs = env.reset();
        let mut h = policy.initial_hidden();
        for _ in 0..ABSTRACT_STEP_CAP {
            let out = policy.act_forward(&obs_to_f64(&obs.pixels), &obs.tokens, &h);
            let step = env.step(ops::argmax(&out.logits));
            h = out.h;
            obs = step.obs;
            if step.done {
                break;
            }
        }
        (env.visited_count() as f64 / env.room_count() as f64, env.visited_count() == env.room_count())
    });
    let mean_frac = results.iter().map(|r| r.0).sum::<f64>() / episodes as f64;
    let full_rate = results.iter().filter(|r| r.1).count() as f64 / episodes as f64;
    (mean_frac, full_rate)
}

// ---------------------------------------------------------------------------
// High-level training on the real simulator with a frozen navigator
// ---------------------------------------------------------------------------

/// Settings for [`MetaFrozenEnv`].
#[derive(Clone, Debug)]
pub struct MetaFrozenCfg {
    /// Low-level steps executed per high-level decision.
    pub c: u32,
    /// Discount applied inside a decision window.
    pub gamma: f64,
    pub n_distractors: usize,
    pub max_steps: u32,
    pub goal_pool: Vec<Instruction>,
}

impl Default for MetaFrozenCfg {
    fn default() -> Self {
        MetaFrozenCfg {
            c: META_PERIOD,
            gamma: 0.99,
            n_distractors: 2,
            max_steps: DEFAULT_MAX_STEPS,
            goal_pool: TRAIN_OBJECTS.to_vec(),
        }
    }
}

/// The high-level training environment: each action names a room cue,
/// which the frozen navigator then follows for up to `c` simulator steps
/// (sampling its own actions; requests gated by ground truth). The
/// high-level reward is the discounted sum of low-level rewards in the
/// window, scaled by 1/c.
pub struct MetaFrozenEnv {
    plans: Arc<Vec<FloorPlan>>,
    controller: Arc<PolicyNet>,
    cfg: MetaFrozenCfg,
    rng: ChaCha8Rng,
    world: Option<World>,
    plain: Instruction,
    plain_tokens: Vec<u16>,
    ctrl_h: Vec<f64>,
    last_window: Vec<f64>,
}

impl MetaFrozenEnv {
    pub fn new(
        plans: Arc<Vec<FloorPlan>>,
        controller: Arc<PolicyNet>,
        cfg: MetaFrozenCfg,
        seed: u64,
    ) -> Self {
        assert!(!plans.is_empty());
        MetaFrozenEnv {
            plans,
            controller,
            cfg,
            rng: ChaCha8Rng::seed_from_u64(seed),
            world: None,
            plain: TRAIN_OBJECTS[0],
            plain_tokens: Vec::new(),
            ctrl_h: Vec::new(),
            last_window: Vec::new(),
        }
    }

    /// Low-level rewards of the most recent decision window (for
    /// verifying the window return).
    pub fn last_window_rewards(&self) -> &[f64] {
        &self.last_window
    }

    pub fn window_gamma(&self) -> f64 {
        self.cfg.gamma
    }

    pub fn window_len(&self) -> u32 {
        self.cfg.c
    }

    fn obs(&self) -> EnvObs {
        let world = self.world.as_ref().expect("live episode");
        EnvObs { pixels: world.observe().to_chw_bytes(), tokens: self.plain_tokens.clone() }
    }
}

impl RolloutEnv for MetaFrozenEnv {
    fn reset(&mut self) -> EnvObs {
        for _attempt in 0..16 {
            let plan = self.plans[self.rng.gen_range(0..self.plans.len())].clone();
            let goal = self.cfg.goal_pool[self.rng.gen_range(0..self.cfg.goal_pool.len())];
            let ep = EpisodeConfig {
                goal,
                n_distractors: self.cfg.n_distractors,
                soft_termination: false,
                max_steps: self.cfg.max_steps,
                seed: self.rng.gen(),
            };
            if let Ok(world) = World::reset(plan, ep) {
                self.plain = goal;
                self.plain_tokens = encode(&EnhancedInstruction::plain(goal)).0.to_vec();
                self.world = Some(world);
                self.ctrl_h = self.controller.initial_hidden();
                return self.obs();
            }
        }
        panic!("could not initialize an episode in 16 attempts");
    }

    fn step(&mut self, action: usize) -> EnvStep {
        let cue = RoomId::NAV[action];
        let tokens = encode(
            &EnhancedInstruction::with_room(self.plain, cue).expect("cue is never the corridor"),
        )
        .0
        .to_vec();

        let mut done = false;
        let mut success = false;
        self.last_window.clear();
        for _ in 0..self.cfg.c {
            let (pixels, near) = {
                let world = self.world.as_ref().expect("live episode");
                (world.observe().to_chw_bytes(), world.geodesic_to_goal() <= SUCCESS_RADIUS)
            };
            let out = self.controller.act_forward(&obs_to_f64(&pixels), &tokens, &self.ctrl_h);
            let logp = ops::log_softmax(&out.logits);
            let idx = ops::sample_from_logp(&logp, &mut self.rng);
            let mut act = CONTROLLER_ACTIONS[idx];
            if act == Action::Query {
                act = if near { Action::Done } else { Action::Query };
            }
            let out_step = self
                .world
                .as_mut()
                .expect("live episode")
                .step(act)
                .expect("step on a live episode");
            self.ctrl_h = out.h;
            self.last_window.push(out_step.reward);
            if out_step.terminated {
                done = true;
                success = out_step.info.success;
                break;
            }
        }
        let reward = window_return(&self.last_window, self.cfg.gamma, self.cfg.c);
        EnvStep { obs: self.obs(), reward, done, success }
    }
}

/// Discounted within-window return handed to the high-level policy: the
/// sum of γᵏ·rₖ over the window's low-level rewards, scaled by 1/c. The
/// scale uses the nominal window length `c` even when an episode ends
/// mid-window, so truncated windows are not inflated.
pub fn window_return(rewards: &[f64], gamma: f64, c: u32) -> f64 {
    let mut sum = 0.0;
    let mut disc = 1.0;
    for &r in rewards {
        sum += disc * r;
        disc *= gamma;
    }
    sum / c as f64
}

// ---------------------------------------------------------------------------
// Training driver
// ---------------------------------------------------------------------------

/// Early-stopping rule, checked against evaluation results.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub enum StopRule {
    /// Stop once the primary evaluation metric (a fraction in [0, 1])
    /// reaches this value.
    Metric(f64),
}

/// Budget and evaluation cadence for one training phase.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrainOpts {
    pub max_env_steps: u64,
    pub n_workers: usize,
    /// Environment steps between evaluations.
    pub eval_every: u64,
    pub eval_episodes: usize,
    pub eval_step_cap: usize,
    pub stop: Option<StopRule>,
    pub seed: u64,
}

impl Default for TrainOpts {
    fn default() -> Self {
        TrainOpts {
            max_env_steps: 1_000_000,
            n_workers: 8,
            eval_every: 25_000,
            eval_episodes: 40,
            eval_step_cap: DEFAULT_MAX_STEPS as usize + 10,
            stop: None,
            seed: 0,
        }
    }
}

/// One evaluation snapshot during training.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct TrainPoint {
    pub env_steps: u64,
    pub updates: u64,
    /// Primary evaluation metric in [0, 1]: success rate for navigation
    /// phases, mean covered-room fraction for coverage phases.
    pub eval_metric: f64,
    pub eval_mean_reward: f64,
    /// Success rate over the last 100 training episodes.
    pub train_window_sr: f64,
    /// Policy entropy at the latest update.
    pub entropy: f64,
}

/// Result of one training phase.
pub struct TrainOutcome {
    pub policy: PolicyNet,
    pub history: Vec<TrainPoint>,
    pub env_steps: u64,
    pub stopped_early: bool,
}

impl TrainOutcome {
    /// Latest evaluation metric (0 if nothing was evaluated).
    pub fn final_metric(&self) -> f64 {
        self.history.last().map(|p| p.eval_metric).unwrap_or(0.0)
    }
}

/// Generic phase driver: batches + updates until the step budget is
/// spent or the stop rule fires, evaluating on a fixed cadence. The
/// evaluator returns (primary metric, mean reward).
pub fn train_policy<E: RolloutEnv + Send>(
    policy: PolicyNet,
    envs: Vec<E>,
    ppo: PpoConfig,
    opts: &TrainOpts,
    mut eval_fn: impl FnMut(&PolicyNet) -> (f64, f64),
    mut log: impl FnMut(&TrainPoint),
) -> Result<TrainOutcome, RlError> {
    assert!(opts.eval_every > 0, "eval cadence must be positive");
    let mut trainer = PpoTrainer::new(policy, envs, ppo, opts.seed);
    let mut history = Vec::new();
    let mut recent: VecDeque<bool> = VecDeque::with_capacity(100);
    let mut next_eval = opts.eval_every;
    let mut stopped_early = false;

    loop {
        let (stats, eps) = trainer.train_step()?;
        for e in eps {
            if recent.len() == 100 {
                recent.pop_front();
            }
            recent.push_back(e.success);
        }

        let budget_done = trainer.env_steps >= opts.max_env_steps;
        if trainer.env_steps >= next_eval || budget_done {
            while next_eval <= trainer.env_steps {
                next_eval += opts.eval_every;
            }
            let (metric, mean_reward) = eval_fn(&trainer.policy);
            let point = TrainPoint {
                env_steps: trainer.env_steps,
                updates: trainer.updates_done,
                eval_metric: metric,
                eval_mean_reward: mean_reward,
                train_window_sr: recent.iter().filter(|&&s| s).count() as f64
                    / recent.len().max(1) as f64,
                entropy: stats.entropy,
            };
            log(&point);
            history.push(point);
            if let Some(StopRule::Metric(th)) = opts.stop {
                if metric >= th {
                    stopped_early = true;
                    break;
                }
            }
        }
        if budget_done {
            break;
        }
    }

    Ok(TrainOutcome {
        policy: trainer.policy,
        history,
        env_steps: trainer.env_steps,
        stopped_early,
    })
}

/// Trains a navigation policy (controller, ablation, or flat baseline,
/// depending on `env_cfg`) on `train_plans`, evaluating on `eval_plans`.
pub fn train_sim_policy(
    train_plans: Arc<Vec<FloorPlan>>,
    eval_plans: Arc<Vec<FloorPlan>>,
    env_cfg: SimEnvCfg,
    ppo: PpoConfig,
    opts: &TrainOpts,
    log: impl FnMut(&TrainPoint),
) -> Result<TrainOutcome, RlError> {
    let policy = PolicyNet::new(NetConfig::policy_conv(4), opts.seed);
    let mut seeder = ChaCha8Rng::seed_from_u64(opts.seed ^ 0xc0ffee);
    let envs: Vec<SimEnv> = (0..opts.n_workers)
        .map(|_| SimEnv::new(Arc::clone(&train_plans), env_cfg.clone(), seeder.gen()))
        .collect();
    let eval_cfg = env_cfg.for_eval();
    let eval_seed: u64 = seeder.gen();
    let (eval_eps, eval_cap) = (opts.eval_episodes, opts.eval_step_cap);
    let eval_fn = move |p: &PolicyNet| eval_sim(&eval_plans, &eval_cfg, p, eval_eps, eval_cap, eval_seed);
    train_policy(policy, envs, ppo, opts, eval_fn, log)
}

/// Trains a high-level policy on the abstract coverage task.
pub fn train_abstract_meta(
    train_plans: Arc<Vec<FloorPlan>>,
    eval_plans: Arc<Vec<FloorPlan>>,
    ppo: PpoConfig,
    opts: &TrainOpts,
    log: impl FnMut(&TrainPoint),
) -> Result<TrainOutcome, RlError> {
    let params = RenderParams::default();
    let train_views = build_room_views(&train_plans, &params);
    let eval_views = build_room_views(&eval_plans, &params);
    let policy = PolicyNet::new(NetConfig::policy_conv(RoomId::NAV.len()), opts.seed);
    let mut seeder = ChaCha8Rng::seed_from_u64(opts.seed ^ 0xab5);
    let envs: Vec<AbstractEnv> = (0..opts.n_workers)
        .map(|_| AbstractEnv::new(Arc::clone(&train_plans), Arc::clone(&train_views), seeder.gen()))
        .collect();
    let eval_seed: u64 = seeder.gen();
    let eval_eps = opts.eval_episodes;
    let eval_fn = move |p: &PolicyNet| {
        let (frac, _full) = eval_abstract_coverage(&eval_plans, &eval_views, p, eval_eps, eval_seed);
        (frac, frac)
    };
    train_policy(policy, envs, ppo, opts, eval_fn, log)
}

/// Trains a high-level policy on the real simulator against a frozen
/// navigator.
pub fn train_meta_frozen(
    train_plans: Arc<Vec<FloorPlan>>,
    eval_plans: Arc<Vec<FloorPlan>>,
    controller: Arc<PolicyNet>,
    cfg: MetaFrozenCfg,
    ppo: PpoConfig,
    opts: &TrainOpts,
    log: impl FnMut(&TrainPoint),
) -> Result<TrainOutcome, RlError> {
    let policy = PolicyNet::new(NetConfig::policy_conv(RoomId::NAV.len()), opts.seed);
    let mut seeder = ChaCha8Rng::seed_from_u64(opts.seed ^ 0xf00d);
    let envs: Vec<MetaFrozenEnv> = (0..opts.n_workers)
        .map(|_| {
            MetaFrozenEnv::new(Arc::clone(&train_plans), Arc::clone(&controller), cfg.clone(), seeder.gen())
        })
        .collect();
    let eval_seed: u64 = seeder.gen();
    let (eval_eps, eval_cap, ccfg, ctrl) = (opts.eval_episodes, opts.eval_step_cap, cfg.clone(), Arc::clone(&controller));
    let eval_fn = move |p: &PolicyNet| {
        let stats = exec::map_range(eval_eps, |i| {
            let mut env = MetaFrozenEnv::new(
                Arc::clone(&eval_plans),
                Arc::clone(&ctrl),
                ccfg.clone(),
                eval_seed ^ (i as u64).wrapping_mul(0x9e3779b97f4a7c15),
            );
            greedy_episode(&mut env, p, eval_cap)
        });
        let sr = stats.iter().filter(|s| s.success).count() as f64 / eval_eps as f64;
        let mean_r = stats.iter().map(|s| s.total_reward).sum::<f64>() / eval_eps as f64;
        (sr, mean_r)
    };
    train_policy(policy, envs, ppo, opts, eval_fn, log)
}

// ---------------------------------------------------------------------------
// Composition
// ---------------------------------------------------------------------------

/// Where the composed agent's room cues come from.
#[derive(Clone)]
pub enum EnhanceSource {
    /// Ground-truth next-room cue, refreshed as rooms change.
    Oracle,
    /// A trained high-level policy, consulted every [`META_PERIOD`] steps.
    Meta(PolicyNet),
    /// No cue at all (ablation).
    Plain,
}

/// How a termination request is resolved.
#[derive(Clone)]
pub enum GaGate {
    /// Ground truth: allow exactly when the goal is within reach.
    Oracle,
    /// A trained assessor: allow when its probability is at least 1/2.
    Model(GaNet),
    /// Never allow (ablation: requests become no-ops).
    Never,
}

/// Resolves a termination request into the action actually taken.
pub fn resolve_query(gate: &GaGate, world: &World, obs: &Observation, plain_tokens: &[u16]) -> Action {
    match gate {
        GaGate::Oracle => {
            if world.geodesic_to_goal() <= SUCCESS_RADIUS {
                Action::Done
            } else {
                Action::Query
            }
        }
        GaGate::Model(ga) => {
            if ga.prob(&obs.to_chw(), plain_tokens) >= 0.5 {
                Action::Done
            } else {
                Action::Query
            }
        }
        GaGate::Never => Action::Query,
    }
}

/// Anything that can drive a live episode action by action.
pub trait Agent: Send {
    /// Called once per episode before the first action.
    fn begin(&mut self, world: &World);
    /// Chooses the next action given the current view.
    fn act(&mut self, world: &World, obs: &Observation) -> Action;
}

/// The composed two-level agent: a navigator, a cue source, and a
/// termination gate.
#[derive(Clone)]
pub struct FullAgent {
    controller: PolicyNet,
    enhance: EnhanceSource,
    gate: GaGate,
    c: u32,
    // Per-episode state.
    plain: Instruction,
    plain_tokens: Vec<u16>,
    tokens: Vec<u16>,
    ctrl_h: Vec<f64>,
    meta_h: Vec<f64>,
    steps: u32,
}

impl FullAgent {
    pub fn new(controller: PolicyNet, enhance: EnhanceSource, gate: GaGate) -> Self {
        let ctrl_h = controller.initial_hidden();
        let meta_h = match &enhance {
            EnhanceSource::Meta(m) => m.initial_hidden(),
            _ => Vec::new(),
        };
        FullAgent {
            controller,
            enhance,
            gate,
            c: META_PERIOD,
            plain: TRAIN_OBJECTS[0],
            plain_tokens: Vec::new(),
            tokens: Vec::new(),
            ctrl_h,
            meta_h,
            steps: 0,
        }
    }

    /// Overrides the high-level decision period.
    pub fn with_period(mut self, c: u32) -> Self {
        assert!(c > 0);
        self.c = c;
        self
    }

    fn refresh_tokens(&mut self, world: &World, obs: &Observation) {
        match &self.enhance {
            EnhanceSource::Plain => {
                if self.tokens.is_empty() {
                    self.tokens = self.plain_tokens.clone();
                }
            }
            EnhanceSource::Oracle => {
                let cue = oracle_enhance(world.plan(), world.current_room(), world.goal_object().room);
                self.tokens = encode(
                    &EnhancedInstruction::with_room(self.plain, cue).expect("non-corridor cue"),
                )
                .0
                .to_vec();
            }
            EnhanceSource::Meta(meta) => {
                if self.steps.is_multiple_of(self.c) {
                    let out = meta.act_forward(&obs.to_chw(), &self.plain_tokens, &self.meta_h);
                    self.meta_h = out.h;
                    let cue = RoomId::NAV[ops::argmax(&out.logits)];
                    self.tokens = encode(
                        &EnhancedInstruction::with_room(self.plain, cue).expect("non-corridor cue"),
                    )
                    .0
                    .to_vec();
                }
            }
        }
    }
}

impl Agent for FullAgent {
    fn begin(&mut self, world: &World) {
        self.plain = world.config().goal;
        self.plain_tokens = encode(&EnhancedInstruction::plain(self.plain)).0.to_vec();
        self.tokens = Vec::new();
        self.ctrl_h = self.controller.initial_hidden();
        if let EnhanceSource::Meta(m) = &self.enhance {
            self.meta_h = m.initial_hidden();
        }
        self.steps = 0;
    }

    fn act(&mut self, world: &World, obs: &Observation) -> Action {
        self.refresh_tokens(world, obs);
        let out = self.controller.act_forward(&obs.to_chw(), &self.tokens, &self.ctrl_h);
        self.ctrl_h = out.h;
        self.steps += 1;
        let action = CONTROLLER_ACTIONS[ops::argmax(&out.logits)];
        if action == Action::Query {
            resolve_query(&self.gate, world, obs, &self.plain_tokens)
        } else {
            action
        }
    }
}

/// The flat single-level agent.
#[derive(Clone)]
pub struct FlatAgent {
    policy: PolicyNet,
    tokens: Vec<u16>,
    h: Vec<f64>,
}

impl FlatAgent {
    pub fn new(policy: PolicyNet) -> Self {
        let h = policy.initial_hidden();
        FlatAgent { policy, tokens: Vec::new(), h }
    }
}

impl Agent for FlatAgent {
    fn begin(&mut self, world: &World) {
        self.tokens = encode(&EnhancedInstruction::plain(world.config().goal)).0.to_vec();
        self.h = self.policy.initial_hidden();
    }

    fn act(&mut self, _world: &World, obs: &Observation) -> Action {
        let out = self.policy.act_forward(&obs.to_chw(), &self.tokens, &self.h);
        self.h = out.h;
        BASELINE_ACTIONS[ops::argmax(&out.logits)]
    }
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------
