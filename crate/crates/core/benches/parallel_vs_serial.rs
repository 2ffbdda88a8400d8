//! Wall-clock comparison of the data-parallel execution strategy against
//! the sequential reference on the three hot paths that use it: rollout
//! collection across worker environments, batched evaluation episodes,
//! and assessor forward passes. Outputs are identical in both modes (every
//! work item owns its RNG), so only time differs.
//!
//! `cargo bench -p housenav-core` measures the default (parallel) build;
//! the "serial" arms always run the sequential reference, so one run
//! yields the comparison. Building with `--no-default-features` makes the
//! "parallel" arms sequential too, which is the documented fallback.

use std::sync::Arc;
use std::time::Duration;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};

use housenav_core::exec;
use housenav_core::floorplan::{enumerate_floorplans, HouseTemplate};
use housenav_core::hierarchy::{SimEnv, SimEnvCfg};
use housenav_core::lang::{encode, EnhancedInstruction, TRAIN_OBJECTS};
use housenav_core::nn::{ops, GaNet, NetConfig, PolicyNet};
use housenav_core::rl::{greedy_episode, obs_to_f64, RolloutEnv};
use housenav_core::simworld::{EpisodeConfig, World};

const N_WORKERS: usize = 4;
const ROLL_STEPS: usize = 16;
const EVAL_EPISODES: usize = 8;
const EVAL_CAP: usize = 40;
const GA_FRAMES: usize = 96;

fn mini_cfg() -> SimEnvCfg {
    SimEnvCfg {
        n_distractors: 0,
        max_steps: EVAL_CAP as u32,
        goal_pool: TRAIN_OBJECTS.to_vec(),
        ..SimEnvCfg::controller_train()
    }
}

fn make_envs(plans: &Arc<Vec<housenav_core::floorplan::FloorPlan>>) -> Vec<SimEnv> {
    (0..N_WORKERS)
        .map(|i| {
            let mut env = SimEnv::new(Arc::clone(plans), mini_cfg(), 1000 + i as u64);
            env.reset();
            env
        })
        .collect()
}

/// One worker's share of a rollout: policy forward + simulator step.
fn roll_one(policy: &PolicyNet, env: &mut SimEnv) {
    let mut obs = env.reset();
    let mut h = policy.initial_hidden();
    for _ in 0..ROLL_STEPS {
        let out = policy.act_forward(&obs_to_f64(&obs.pixels), &obs.tokens, &h);
        let step = env.step(ops::argmax(&out.logits));
        h = out.h;
        obs = if step.done { env.reset() } else { step.obs };
    }
}

fn bench_rollout(c: &mut Criterion) {
    let plans = Arc::new(enumerate_floorplans(&HouseTemplate::mini()));
    let policy = PolicyNet::new(NetConfig::policy_conv(4), 1);
    let mut g = c.benchmark_group("rollout-collection");
    g.sample_size(10).warm_up_time(Duration::from_secs(2));
    g.bench_function("parallel", |b| {
        b.iter_batched(
            || make_envs(&plans),
            |mut envs| exec::map_mut(&mut envs, |_, env| roll_one(&policy, env)),
            BatchSize::SmallInput,
        )
    });
    g.bench_function("serial", |b| {
        b.iter_batched(
            || make_envs(&plans),
            |mut envs| exec::seq_map_mut(&mut envs, |_, env| roll_one(&policy, env)),
            BatchSize::SmallInput,
        )
    });
    g.finish();
}

fn bench_eval(c: &mut Criterion) {
    let plans = Arc::new(enumerate_floorplans(&HouseTemplate::mini()));
    let policy = PolicyNet::new(NetConfig::policy_conv(4), 2);
    let cfg = mini_cfg().for_eval();
    let episode = |i: usize| {
        let mut env = SimEnv::new(Arc::clone(&plans), cfg.clone(), 7000 + i as u64);
        greedy_episode(&mut env, &policy, EVAL_CAP).success
    };
    let mut g = c.benchmark_group("evaluation-episodes");
    g.sample_size(10).warm_up_time(Duration::from_secs(2));
    g.bench_function("parallel", |b| b.iter(|| exec::map_range(EVAL_EPISODES, episode)));
    g.bench_function("serial", |b| b.iter(|| exec::seq_map_range(EVAL_EPISODES, episode)));
    g.finish();
}

fn bench_assessor(c: &mut Criterion) {
    // Frame content is irrelevant to scoring throughput: any rendered
    // first-person view of the right shape will do.
    let plans = enumerate_floorplans(&HouseTemplate::mini());
    let frames: Vec<(Vec<f64>, Vec<u16>)> = (0..GA_FRAMES)
        .map(|i| {
            let cfg = EpisodeConfig::new(TRAIN_OBJECTS[i % TRAIN_OBJECTS.len()], 40 + i as u64);
            let world = World::reset(plans[i % plans.len()].clone(), cfg).expect("episode init");
            let tokens = encode(&EnhancedInstruction::plain(world.config().goal)).0.to_vec();
            (world.observe().to_chw(), tokens)
        })
        .collect();
    let net = GaNet::new(NetConfig::ga_conv(), 3);
    let score = |f: &(Vec<f64>, Vec<u16>)| net.prob(&f.0, &f.1);
    let mut g = c.benchmark_group("assessor-scoring");
    g.sample_size(10).warm_up_time(Duration::from_secs(2));
    g.bench_function("parallel", |b| {
        b.iter(|| exec::map_range(frames.len(), |i| score(&frames[i])))
    });
    g.bench_function("serial", |b| {
        b.iter(|| exec::seq_map_range(frames.len(), |i| score(&frames[i])))
    });
    g.finish();
}

criterion_group!(benches, bench_rollout, bench_eval, bench_assessor);
criterion_main!(benches);
