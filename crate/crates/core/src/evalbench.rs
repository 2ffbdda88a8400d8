//! Evaluation protocols: seeded multi-run success rates with spread,
//! room coverage, failure-mode histograms, transfer evaluation on
//! held-out plans or objects, and the flat single-level baseline trainer.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{EvalError, RlError};
use crate::exec;
use crate::floorplan::FloorPlan;
use crate::hierarchy::{train_sim_policy, Agent, SimEnvCfg, TrainOpts, TrainOutcome, TrainPoint};
use crate::lang::{Instruction, TRAIN_OBJECTS};
use crate::rl::PpoConfig;
use crate::simworld::{EpisodeConfig, World, DEFAULT_MAX_STEPS};
use crate::trace::{classify_failure, room_coverage, EpisodeTrace, FailureMode, TraceRecord};

/// How many objects episodes place.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ObjectsMode {
    /// Only the goal object.
    Single,
    /// Goal plus two distractors.
    Multiple,
}

impl ObjectsMode {
    pub fn n_distractors(self) -> usize {
        match self {
            ObjectsMode::Single => 0,
            ObjectsMode::Multiple => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ObjectsMode::Single => "single",
            ObjectsMode::Multiple => "multiple",
        }
    }
}

/// Which plan regime the evaluation ran under (a report descriptor; the
/// caller supplies the matching plan list).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EnvMode {
    /// One fixed plan.
    Static,
    /// Training plans.
    Train,
    /// Held-out plans or objects.
    Holdout,
}

impl EnvMode {
    pub fn name(self) -> &'static str {
        match self {
            EnvMode::Static => "static",
            EnvMode::Train => "dynamic-train",
            EnvMode::Holdout => "dynamic-holdout",
        }
    }
}

/// Evaluation protocol settings.
#[derive(Clone, Debug)]
pub struct EvalCfg {
    pub objects: ObjectsMode,
    pub env: EnvMode,
    pub n_runs: usize,
    pub n_episodes: usize,
    pub max_steps: u32,
    pub goal_pool: Vec<Instruction>,
    pub seed: u64,
}

impl EvalCfg {
    pub fn new(objects: ObjectsMode, env: EnvMode) -> Self {
        EvalCfg {
            objects,
            env,
            n_runs: 10,
            n_episodes: 100,
            max_steps: DEFAULT_MAX_STEPS,
            goal_pool: TRAIN_OBJECTS.to_vec(),
            seed: 0,
        }
    }
}

/// Aggregated evaluation result.
#[derive(Clone, Debug)]
pub struct EvalReport {
    pub objects: ObjectsMode,
    pub env: EnvMode,
    pub n_runs: usize,
    pub n_episodes: usize,
    /// Success rate per run, in percent.
    pub per_run_sr: Vec<f64>,
    /// Mean success rate over runs, in percent.
    pub success_rate: f64,
    /// Sample standard deviation of the per-run success rates, in percent
    /// (0 for a single run).
    pub std: f64,
    /// Mean episode room coverage, in percent.
    pub room_coverage: f64,
    /// Failed-episode counts in [`FailureMode::ALL`] order.
    pub failure_histogram: [usize; 3],
}

impl EvalReport {
    pub fn failures(&self) -> usize {
        self.failure_histogram.iter().sum()
    }
}

/// Runs `n_runs x n_episodes` seeded episodes with termination taken at
/// face value (no soft relaxation) and aggregates success, coverage, and
/// failure modes. Identical configuration reproduces identical episodes,
/// so differently trained agents can be compared on paired tasks.
pub fn run_eval<A: Agent + Clone + Sync>(
    agent: &A,
    plans: &[FloorPlan],
    cfg: &EvalCfg,
) -> Result<(EvalReport, Vec<EpisodeTrace>), EvalError> {
    if plans.is_empty() || cfg.n_runs == 0 || cfg.n_episodes == 0 || cfg.goal_pool.is_empty() {
        return Err(EvalError::NoEpisodes);
    }
    let total = cfg.n_runs * cfg.n_episodes;
    let mut seeder = ChaCha8Rng::seed_from_u64(cfg.seed);
    let ep_seeds: Vec<u64> = (0..total).map(|_| seeder.gen()).collect();

    let traces: Vec<EpisodeTrace> = exec::map_range(total, |i| {
        run_episode(agent.clone(), plans, cfg, ep_seeds[i])
    });

    let mut per_run_sr = Vec::with_capacity(cfg.n_runs);
    for run in traces.chunks(cfg.n_episodes) {
        let s = run.iter().filter(|t| t.success).count();
        per_run_sr.push(s as f64 / cfg.n_episodes as f64 * 100.0);
    }
    let mean = per_run_sr.iter().sum::<f64>() / cfg.n_runs as f64;
    let std = if cfg.n_runs > 1 {
        let var = per_run_sr.iter().map(|s| (s - mean).powi(2)).sum::<f64>()
            / (cfg.n_runs - 1) as f64;
        var.sqrt()
    } else {
        0.0
    };
    let coverage = traces.iter().map(room_coverage).sum::<f64>() / total as f64;

    let mut failure_histogram = [0usize; 3];
    for t in traces.iter().filter(|t| !t.success) {
        let mode = classify_failure(t)?;
        let idx = FailureMode::ALL.iter().position(|&m| m == mode).expect("mode in ALL");
        failure_histogram[idx] += 1;
    }

    let report = EvalReport {
        objects: cfg.objects,
        env: cfg.env,
        n_runs: cfg.n_runs,
        n_episodes: cfg.n_episodes,
        per_run_sr,
        success_rate: mean,
        std,
        room_coverage: coverage,
        failure_histogram,
    };
    Ok((report, traces))
}

/// One full episode driven by the agent, logged as a trace.
fn run_episode<A: Agent>(
    mut agent: A,
    plans: &[FloorPlan],
    cfg: &EvalCfg,
    seed: u64,
) -> EpisodeTrace {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut world = 'init: {
        for _attempt in 0..16 {
            let plan = plans[rng.gen_range(0..plans.len())].clone();
            let goal = cfg.goal_pool[rng.gen_range(0..cfg.goal_pool.len())];
            let ep = EpisodeConfig {
                goal,
                n_distractors: cfg.objects.n_distractors(),
                soft_termination: false,
                max_steps: cfg.max_steps,
                seed: rng.gen(),
            };
            if let Ok(w) = World::reset(plan, ep) {
                break 'init w;
            }
        }
        panic!("could not initialize an evaluation episode in 16 attempts");
    };

    let spawn_room = world.current_room();
    agent.begin(&world);
    let mut records = Vec::new();
    let mut success = false;
    while !world.terminated() {
        let obs = world.observe();
        let action = agent.act(&world, &obs);
        let out = world.step(action).expect("step on a live episode");
        let pose = world.pose();
        records.push(TraceRecord {
            step: world.step_count(),
            action,
            reward: out.reward,
            x: pose.pos.x,
            y: pose.pos.y,
            heading_idx: pose.heading_idx,
            room: out.info.room,
            geodesic: out.info.geodesic,
            used_done: out.info.used_done,
            query_fired: out.info.query_fired,
        });
        if out.terminated {
            success = out.info.success;
        }
    }
    EpisodeTrace { spawn_room, records, success }
}

/// What a transfer evaluation holds out.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TransferMode {
    /// Plans never trained on, training object set.
    HoldoutPlans,
    /// Training plans, object set never navigated to (requires a gate
    /// retrained on that object set; navigation checkpoints untouched).
    HoldoutObjects,
}

/// Zero-shot transfer evaluation: same protocol, run on held-out plans or
/// a held-out object pool. The caller supplies the matching plan list and
/// pool for the chosen mode.
pub fn transfer_eval<A: Agent + Clone + Sync>(
    agent: &A,
    plans: &[FloorPlan],
    pool: &[Instruction],
    _mode: TransferMode,
    base: &EvalCfg,
) -> Result<(EvalReport, Vec<EpisodeTrace>), EvalError> {
    let cfg = EvalCfg {
        env: EnvMode::Holdout,
        goal_pool: pool.to_vec(),
        ..base.clone()
    };
    run_eval(agent, plans, &cfg)
}

/// Renders reports as CSV (one row per report).
pub fn reports_to_csv(reports: &[EvalReport]) -> String {
    let mut out = String::from(
        "objects,environment,runs,episodes,success_rate,std,room_coverage,detection,stuck,timeout\n",
    );
    for r in reports {
        out.push_str(&format!(
            "{},{},{},{},{:.2},{:.2},{:.2},{},{},{}\n",
            r.objects.name(),
            r.env.name(),
            r.n_runs,
            r.n_episodes,
            r.success_rate,
            r.std,
            r.room_coverage,
            r.failure_histogram[0],
            r.failure_histogram[1],
            r.failure_histogram[2],
        ));
    }
    out
}

/// Trains the flat single-level baseline: one policy over movement plus
/// direct termination, conditioned on the plain instruction only.
pub fn train_flat_baseline(
    train_plans: std::sync::Arc<Vec<FloorPlan>>,
    eval_plans: std::sync::Arc<Vec<FloorPlan>>,
    soft_termination: bool,
    ppo: PpoConfig,
    opts: &TrainOpts,
    log: impl FnMut(&TrainPoint),
) -> Result<TrainOutcome, RlError> {
    let cfg = SimEnvCfg { soft_termination, ..SimEnvCfg::baseline_train() };
    train_sim_policy(train_plans, eval_plans, cfg, ppo, opts, log)
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------
