//! Subcommand implementations.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use housenav_core::ckpt::{
    self, CkptKind, CkptMeta, ComposedCkpt, ComposedSpec, EnhanceKind, GateKind,
};
use housenav_core::evalbench::{
    reports_to_csv, run_eval, train_flat_baseline, EnvMode, EvalCfg, ObjectsMode,
};
use housenav_core::floorplan::{
    default_holdout_n, enumerate_floorplans, split_plans, FloorPlan, HouseTemplate, RoomId,
};
use housenav_core::ga::{collect_ga_dataset, load_ga_dataset, save_ga_dataset, CollectCfg, GaTrainCfg};
use housenav_core::geom::Vec2;
use housenav_core::hierarchy::{
    train_abstract_meta, train_meta_frozen, train_sim_policy, Agent, EnhanceSource, FlatAgent,
    FullAgent, GaGate, MetaFrozenCfg, SimEnvCfg, StopRule, TrainOpts, TrainOutcome, TrainPoint,
};
use housenav_core::lang::{Color, Instruction, Shape, HOLDOUT_OBJECTS, TRAIN_OBJECTS};
use housenav_core::nn::NetConfig;
use housenav_core::render::Observation;
use housenav_core::simworld::{Action, EpisodeConfig, World};
use housenav_core::trace::{classify_failure, read_trace, room_coverage, write_trace, FailureMode};

use crate::ctx::Ctx;
use crate::metrics::{self, Csv};
use crate::svg::{self, Bar, BarGroup};
use crate::{CliError, CliResult};

// ---------------------------------------------------------------------------
// Shared helpers
// ---------------------------------------------------------------------------

fn house(name: &str) -> CliResult<Arc<HouseTemplate>> {
    match name {
        "standard" => Ok(HouseTemplate::standard()),
        "mini" => Ok(HouseTemplate::mini()),
        other => Err(CliError::new("usage", format!("unknown house `{other}` (standard|mini)"))),
    }
}

/// All plans plus the seeded train/holdout subsets.
fn plan_sets(
    template: &Arc<HouseTemplate>,
    seed: u64,
) -> CliResult<(Vec<FloorPlan>, Vec<FloorPlan>, Vec<FloorPlan>)> {
    let plans = enumerate_floorplans(template);
    let split = split_plans(&plans, default_holdout_n(plans.len()), seed)?;
    let pick = |ids: &[u32]| -> Vec<FloorPlan> {
        plans.iter().filter(|p| ids.binary_search(&p.plan_id()).is_ok()).cloned().collect()
    };
    let train = pick(&split.train);
    let holdout = pick(&split.holdout);
    Ok((plans, train, holdout))
}

fn train_opts(ctx: &Ctx, seed: u64) -> TrainOpts {
    let t = &ctx.cfg.training;
    TrainOpts {
        max_env_steps: t.max_env_steps,
        n_workers: t.n_workers,
        eval_every: t.eval_every,
        eval_episodes: t.eval_episodes,
        eval_step_cap: ctx.cfg.environment.max_steps,
        stop: (t.target_metric >= 0.0).then_some(StopRule::Metric(t.target_metric)),
        seed,
    }
}

fn progress(p: &TrainPoint) {
    println!(
        "steps={} updates={} eval_metric={:.3} mean_reward={:.3} window_sr={:.3} entropy={:.3}",
        p.env_steps, p.updates, p.eval_metric, p.eval_mean_reward, p.train_window_sr, p.entropy
    );
}

/// Writes a training run's checkpoint and metrics into `dir`.
fn store_training(
    ctx: &mut Ctx,
    dir: &Path,
    ckpt_name: &str,
    kind: CkptKind,
    seed: u64,
    outcome: &TrainOutcome,
) -> CliResult<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let ckpt_path = dir.join(ckpt_name);
    let meta = CkptMeta { config_hash: ctx.cfg.hash(), seed, env_steps: outcome.env_steps };
    ckpt::save_policy(&ckpt_path, kind, &outcome.policy, &meta)?;
    ctx.output(&ckpt_path);
    let metrics_path = dir.join("metrics.csv");
    metrics::write_train_metrics(&metrics_path, &outcome.history)?;
    ctx.output(&metrics_path);
    Ok(ckpt_path)
}

fn file_stem(p: &Path) -> String {
    p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| p.display().to_string())
}

// ---------------------------------------------------------------------------
// gen-floorplans
// ---------------------------------------------------------------------------

pub fn gen_floorplans(ctx: &mut Ctx, out: &Path, split_out: Option<&Path>, house_name: &str) -> CliResult<()> {
    let template = house(house_name)?;
    let plans = enumerate_floorplans(&template);
    let split = split_plans(&plans, default_holdout_n(plans.len()), ctx.cfg.seeds.data)?;

    let mut text = String::from("housenav-plans v1\n");
    text.push_str(&format!("house\t{house_name}\tplans\t{}\n", plans.len()));
    for plan in &plans {
        let adj: Vec<String> = RoomId::ALL
            .iter()
            .filter(|r| template.room(**r).is_some())
            .map(|&r| {
                let names: Vec<&str> = plan.neighbors(r).iter().map(|n| n.name()).collect();
                format!("{}:{}", r.name(), names.join("+"))
            })
            .collect();
        text.push_str(&format!("{}\t{:#06x}\t{}\n", plan.plan_id(), plan.doorway_mask(), adj.join(";")));
    }
    metrics::write_file(out, &text)?;
    ctx.output(out);

    let ids = |v: &[u32]| v.iter().map(u32::to_string).collect::<Vec<_>>().join(",");
    let split_text = format!(
        "housenav-split v1\nhouse\t{house_name}\tseed\t{}\tholdout\t{}\ntrain\t{}\nholdout\t{}\n",
        ctx.cfg.seeds.data,
        split.holdout.len(),
        ids(&split.train),
        ids(&split.holdout),
    );
    let default_split = out.with_extension("split.txt");
    let split_path = split_out.unwrap_or(&default_split);
    metrics::write_file(split_path, &split_text)?;
    ctx.output(split_path);

    println!(
        "wrote {} plans ({} train / {} holdout) to {}",
        plans.len(),
        split.train.len(),
        split.holdout.len(),
        out.display()
    );
    ctx.finish(out)
}

// ---------------------------------------------------------------------------
// Training subcommands
// ---------------------------------------------------------------------------

pub fn train_controller(ctx: &mut Ctx, out: &Path, ablation: bool, house_name: &str) -> CliResult<()> {
    let template = house(house_name)?;
    let (_, train, _) = plan_sets(&template, ctx.cfg.seeds.data)?;
    let train = Arc::new(train);
    let mut env_cfg = if ablation { SimEnvCfg::controller_plain() } else { SimEnvCfg::controller_train() };
    env_cfg.n_distractors = ctx.cfg.environment.n_distractors;
    env_cfg.soft_termination = ctx.cfg.environment.soft_termination;
    env_cfg.max_steps = ctx.cfg.environment.max_steps as u32;
    let seed = ctx.cfg.seeds.controller;
    let opts = train_opts(ctx, seed);
    let outcome =
        train_sim_policy(Arc::clone(&train), train, env_cfg, ctx.cfg.rl.clone(), &opts, progress)?;
    store_training(ctx, out, "controller.ckpt", CkptKind::Controller, seed, &outcome)?;
    println!(
        "trained {} for {} steps; final success rate {:.3}",
        if ablation { "no-cue ablation controller" } else { "controller" },
        outcome.env_steps,
        outcome.final_metric()
    );
    ctx.finish(out)
}

pub fn train_meta(
    ctx: &mut Ctx,
    out: &Path,
    scheme: Option<&str>,
    controller: Option<&Path>,
    house_name: &str,
) -> CliResult<()> {
    let scheme = scheme.unwrap_or(&ctx.cfg.hierarchy.scheme).to_string();
    let template = house(house_name)?;
    let (_, train, _) = plan_sets(&template, ctx.cfg.seeds.data)?;
    let train = Arc::new(train);
    let seed = ctx.cfg.seeds.meta;
    let opts = train_opts(ctx, seed);
    let outcome = match scheme.as_str() {
        "coverage" => train_abstract_meta(Arc::clone(&train), train, ctx.cfg.rl.clone(), &opts, progress)?,
        "frozen" => {
            let ctrl_path = controller.ok_or_else(|| {
                CliError::new("usage", "--scheme frozen requires --controller <checkpoint>")
            })?;
            let (ctrl, _) = ckpt::load_policy(ctrl_path, CkptKind::Controller)?;
            ctx.input(ctrl_path);
            let cfg = MetaFrozenCfg {
                c: ctx.cfg.hierarchy.period,
                gamma: ctx.cfg.rl.gamma,
                n_distractors: ctx.cfg.environment.n_distractors,
                max_steps: ctx.cfg.environment.max_steps as u32,
                goal_pool: TRAIN_OBJECTS.to_vec(),
            };
            train_meta_frozen(Arc::clone(&train), train, Arc::new(ctrl), cfg, ctx.cfg.rl.clone(), &opts, progress)?
        }
        other => {
            return Err(CliError::new("usage", format!("unknown scheme `{other}` (coverage|frozen)")))
        }
    };
    store_training(ctx, out, "meta.ckpt", CkptKind::Meta, seed, &outcome)?;
    println!(
        "trained {scheme}-scheme cue policy for {} steps; final metric {:.3}",
        outcome.env_steps,
        outcome.final_metric()
    );
    ctx.finish(out)
}

pub fn train_baseline(ctx: &mut Ctx, out: &Path, house_name: &str) -> CliResult<()> {
    let template = house(house_name)?;
    let (_, train, _) = plan_sets(&template, ctx.cfg.seeds.data)?;
    let train = Arc::new(train);
    let seed = ctx.cfg.seeds.baseline;
    let opts = train_opts(ctx, seed);
    let outcome = train_flat_baseline(
        Arc::clone(&train),
        train,
        ctx.cfg.environment.soft_termination,
        ctx.cfg.rl.clone(),
        &opts,
        progress,
    )?;
    store_training(ctx, out, "baseline.ckpt", CkptKind::Baseline, seed, &outcome)?;
    println!(
        "trained flat baseline for {} steps; final success rate {:.3}",
        outcome.env_steps,
        outcome.final_metric()
    );
    ctx.finish(out)
}

// ---------------------------------------------------------------------------
// Goal assessment
// ---------------------------------------------------------------------------

pub fn collect_ga_data(ctx: &mut Ctx, out: &Path, frames: Option<usize>, house_name: &str) -> CliResult<()> {
    let template = house(house_name)?;
    let (_, train, _) = plan_sets(&template, ctx.cfg.seeds.data)?;
    let cfg = CollectCfg {
        n_distractors: ctx.cfg.environment.n_distractors,
        episode_steps: ctx.cfg.ga.episode_steps as u32,
        nonqual_stride: ctx.cfg.ga.nonqual_stride as u32,
        pool: TRAIN_OBJECTS.to_vec(),
    };
    let n = frames.unwrap_or(ctx.cfg.ga.n_frames);
    let samples = collect_ga_dataset(&Arc::new(train), &cfg, n, ctx.cfg.seeds.data);
    std::fs::create_dir_all(out)?;
    save_ga_dataset(out, &samples)?;
    ctx.output(&out.join("index.tsv"));
    ctx.output(&out.join("frames"));
    let positives = samples.iter().filter(|s| s.label).count();
    println!("collected {} frames ({} positive) into {}", samples.len(), positives, out.display());
    ctx.finish(out)
}

pub fn train_ga(ctx: &mut Ctx, data: &Path, out: &Path) -> CliResult<()> {
    let samples = load_ga_dataset(data)?;
    ctx.input(&data.join("index.tsv"));
    let cfg = GaTrainCfg {
        net: NetConfig::ga_conv(),
        lr: ctx.cfg.ga.lr,
        batch: ctx.cfg.ga.batch,
        max_epochs: ctx.cfg.ga.max_epochs,
        patience: ctx.cfg.ga.patience,
        seed: ctx.cfg.seeds.ga,
    };
    let (net, report) = housenav_core::ga::train_ga(&samples, &cfg)?;
    std::fs::create_dir_all(out)?;
    let ckpt_path = out.join("ga.ckpt");
    let meta = CkptMeta { config_hash: ctx.cfg.hash(), seed: ctx.cfg.seeds.ga, env_steps: 0 };
    ckpt::save_ga(&ckpt_path, &net, &meta)?;
    ctx.output(&ckpt_path);
    let metrics_path = out.join("metrics.csv");
    metrics::write_ga_metrics(&metrics_path, &report.history)?;
    ctx.output(&metrics_path);
    println!(
        "trained classifier on {} frames ({} validation): accuracy {:.3} after {} epochs (best epoch {})",
        report.n_train, report.n_val, report.val_accuracy, report.epochs_run, report.best_epoch
    );
    ctx.finish(out)
}

// ---------------------------------------------------------------------------
// compose
// ---------------------------------------------------------------------------

pub fn compose(
    ctx: &mut Ctx,
    controller: &Path,
    meta_path: Option<&Path>,
    ga_path: Option<&Path>,
    enhance: &str,
    gate: &str,
    out: &Path,
) -> CliResult<()> {
    let enhance = EnhanceKind::from_name(enhance)
        .ok_or_else(|| CliError::new("usage", format!("unknown enhancement source `{enhance}` (oracle|meta|plain)")))?;
    let gate = GateKind::from_name(gate)
        .ok_or_else(|| CliError::new("usage", format!("unknown gate `{gate}` (oracle|model|never)")))?;
    let (ctrl, ctrl_meta) = ckpt::load_policy(controller, CkptKind::Controller)?;
    ctx.input(controller);
    let meta_policy = match meta_path {
        Some(p) => {
            let (m, _) = ckpt::load_policy(p, CkptKind::Meta)?;
            ctx.input(p);
            Some(m)
        }
        None => None,
    };
    let ga = match ga_path {
        Some(p) => {
            let (g, _) = ckpt::load_ga(p)?;
            ctx.input(p);
            Some(g)
        }
        None => None,
    };
    let spec = ComposedSpec { enhance, gate, period: ctx.cfg.hierarchy.period };
    let meta = CkptMeta { config_hash: ctx.cfg.hash(), seed: ctrl_meta.seed, env_steps: ctrl_meta.env_steps };
    ckpt::save_composed(out, &ctrl, meta_policy.as_ref(), ga.as_ref(), &spec, &meta)?;
    ctx.output(out);
    println!(
        "composed agent written to {} (enhance={}, gate={}, period={})",
        out.display(),
        spec.enhance.name(),
        spec.gate.name(),
        spec.period
    );
    ctx.finish(out)
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

/// Any evaluable agent loaded from a checkpoint.
#[derive(Clone)]
enum LoadedAgent {
    Full(Box<FullAgent>),
    Flat(Box<FlatAgent>),
}

impl Agent for LoadedAgent {
    fn begin(&mut self, world: &World) {
        match self {
            LoadedAgent::Full(a) => a.begin(world),
            LoadedAgent::Flat(a) => a.begin(world),
        }
    }

    fn act(&mut self, world: &World, obs: &Observation) -> Action {
        match self {
            LoadedAgent::Full(a) => a.act(world, obs),
            LoadedAgent::Flat(a) => a.act(world, obs),
        }
    }
}

fn load_agent(ctx: &Ctx, path: &Path) -> CliResult<LoadedAgent> {
    match ckpt::peek_kind(path)? {
        CkptKind::Composed => {
            let ComposedCkpt { controller, meta_policy, ga, spec, .. } = ckpt::load_composed(path)?;
            let enhance = match spec.enhance {
                EnhanceKind::Oracle => EnhanceSource::Oracle,
                EnhanceKind::Plain => EnhanceSource::Plain,
                EnhanceKind::Meta => EnhanceSource::Meta(
                    meta_policy.expect("load_composed validated the cue policy is present"),
                ),
            };
            let gate = match spec.gate {
                GateKind::Oracle => GaGate::Oracle,
                GateKind::Never => GaGate::Never,
                GateKind::Model => {
                    GaGate::Model(ga.expect("load_composed validated the classifier is present"))
                }
            };
            Ok(LoadedAgent::Full(Box::new(
                FullAgent::new(controller, enhance, gate).with_period(spec.period),
            )))
        }
        CkptKind::Controller => {
            let (ctrl, _) = ckpt::load_policy(path, CkptKind::Controller)?;
            Ok(LoadedAgent::Full(Box::new(
                FullAgent::new(ctrl, EnhanceSource::Oracle, GaGate::Oracle)
                    .with_period(ctx.cfg.hierarchy.period),
            )))
        }
        CkptKind::Baseline => {
            let (policy, _) = ckpt::load_policy(path, CkptKind::Baseline)?;
            Ok(LoadedAgent::Flat(Box::new(FlatAgent::new(policy))))
        }
        other => Err(CliError::new(
            "ckpt",
            format!("a `{}` checkpoint is not an executable agent", other.name()),
        )),
    }
}

#[allow(clippy::too_many_arguments)]
pub fn eval(
    ctx: &mut Ctx,
    agent_path: &Path,
    split: &str,
    objects: &str,
    pool: &str,
    out: &Path,
    house_name: &str,
) -> CliResult<()> {
    let template = house(house_name)?;
    let (all, train, holdout) = plan_sets(&template, ctx.cfg.seeds.data)?;
    let (plans, env) = match split {
        "static" => (vec![all[0].clone()], EnvMode::Static),
        "train" => (train, EnvMode::Train),
        "holdout" => (holdout, EnvMode::Holdout),
        other => {
            return Err(CliError::new("usage", format!("unknown split `{other}` (static|train|holdout)")))
        }
    };
    let objects = match objects {
        "single" => ObjectsMode::Single,
        "multiple" => ObjectsMode::Multiple,
        other => {
            return Err(CliError::new("usage", format!("unknown objects mode `{other}` (single|multiple)")))
        }
    };
    let goal_pool = match pool {
        "train" => TRAIN_OBJECTS.to_vec(),
        "holdout" => HOLDOUT_OBJECTS.to_vec(),
        other => return Err(CliError::new("usage", format!("unknown pool `{other}` (train|holdout)"))),
    };

    let agent = load_agent(ctx, agent_path)?;
    ctx.input(agent_path);
    let cfg = EvalCfg {
        objects,
        env,
        n_runs: ctx.cfg.eval.n_runs,
        n_episodes: ctx.cfg.eval.n_episodes,
        max_steps: ctx.cfg.eval.max_steps as u32,
        goal_pool,
        seed: ctx.cfg.seeds.eval,
    };
    let (report, traces) = run_eval(&agent, &plans, &cfg)?;

    std::fs::create_dir_all(out)?;
    let report_path = out.join("report.csv");
    metrics::write_file(&report_path, &reports_to_csv(std::slice::from_ref(&report)))?;
    ctx.output(&report_path);
    let trace_dir = out.join("traces");
    std::fs::create_dir_all(&trace_dir)?;
    for (i, t) in traces.iter().enumerate() {
        write_trace(&trace_dir.join(format!("ep-{i:05}.txt")), t)?;
    }
    ctx.output(&trace_dir);

    let [detection, stuck, timeout] = report.failure_histogram;
    println!(
        "{}/{}: success rate {:.1}% ± {:.1} | coverage {:.1}% | failures: detection={} stuck={} timeout={}",
        report.objects.name(),
        report.env.name(),
        report.success_rate,
        report.std,
        report.room_coverage,
        detection,
        stuck,
        timeout
    );
    ctx.finish(out)
}

// ---------------------------------------------------------------------------
// classify-failures
// ---------------------------------------------------------------------------

pub fn classify_failures(ctx: &mut Ctx, traces: &Path, out: &Path) -> CliResult<()> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(traces)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().map(|x| x == "txt").unwrap_or(false))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(CliError::new("data", format!("{}: no .txt trace files", traces.display())));
    }

    let mut text = String::from("trace,outcome,mode,room_coverage\n");
    let mut histogram = [0usize; 3];
    let mut successes = 0usize;
    for p in &paths {
        let trace = read_trace(p)?;
        ctx.input(p);
        let (outcome, mode) = if trace.success {
            successes += 1;
            ("success", String::new())
        } else {
            let m = classify_failure(&trace)?;
            histogram[FailureMode::ALL.iter().position(|&x| x == m).expect("mode listed")] += 1;
            ("failure", m.name().to_string())
        };
        text.push_str(&format!("{},{},{},{:.2}\n", file_stem(p), outcome, mode, room_coverage(&trace)));
    }
    metrics::write_file(out, &text)?;
    ctx.output(out);
    let [detection, stuck, timeout] = histogram;
    println!(
        "{} traces: {} successes, failures: detection={} stuck={} timeout={}",
        paths.len(),
        successes,
        detection,
        stuck,
        timeout
    );
    ctx.finish(out)
}

// ---------------------------------------------------------------------------
// plot
// ---------------------------------------------------------------------------

pub fn plot(ctx: &mut Ctx, kind: &str, reports: &[PathBuf], metric_files: &[PathBuf], out: &Path) -> CliResult<()> {
    let svg_text = match kind {
        "sr" | "failures" => {
            if reports.is_empty() {
                return Err(CliError::new("usage", format!("--kind {kind} needs --reports <csv>...")));
            }
            let mut groups = Vec::new();
            for path in reports {
                let csv = Csv::read(path)?;
                ctx.input(path);
                let (c_obj, c_env) = (csv.col("objects", path)?, csv.col("environment", path)?);
                for row in 0..csv.rows.len() {
                    let label = format!("{}/{}", csv.rows[row][c_obj], csv.rows[row][c_env]);
                    let bars = if kind == "sr" {
                        vec![Bar {
                            name: "success rate".to_string(),
                            value: csv.num(row, csv.col("success_rate", path)?, path)?,
                            err: csv.num(row, csv.col("std", path)?, path)?,
                        }]
                    } else {
                        FailureMode::ALL
                            .iter()
                            .map(|m| {
                                Ok(Bar {
                                    name: m.name().to_string(),
                                    value: csv.num(row, csv.col(m.name(), path)?, path)?,
                                    err: 0.0,
                                })
                            })
                            .collect::<CliResult<Vec<Bar>>>()?
                    };
                    groups.push(BarGroup { label, bars });
                }
            }
            if kind == "sr" {
                svg::bar_chart("Success rate by setting", "success rate (%)", &groups)
            } else {
                svg::bar_chart("Failure modes by setting", "failed episodes", &groups)
            }
        }
        "curves" => {
            if metric_files.is_empty() {
                return Err(CliError::new("usage", "--kind curves needs --metrics <csv>..."));
            }
            let mut series = Vec::new();
            for path in metric_files {
                let csv = Csv::read(path)?;
                ctx.input(path);
                let (cx, cy) = (csv.col("env_steps", path)?, csv.col("eval_metric", path)?);
                let pts = (0..csv.rows.len())
                    .map(|r| Ok((csv.num(r, cx, path)?, csv.num(r, cy, path)?)))
                    .collect::<CliResult<Vec<(f64, f64)>>>()?;
                series.push((file_stem(path), pts));
            }
            svg::line_chart("Training curves", "environment steps", "evaluation metric", &series)
        }
        other => {
            return Err(CliError::new("usage", format!("unknown plot kind `{other}` (sr|failures|curves)")))
        }
    };
    metrics::write_file(out, &svg_text)?;
    ctx.output(out);
    println!("wrote {}", out.display());
    ctx.finish(out)
}

// ---------------------------------------------------------------------------
// dump-obs
// ---------------------------------------------------------------------------

fn parse_goal(s: &str) -> CliResult<Instruction> {
    let words: Vec<&str> = s.split_whitespace().collect();
    let err = || CliError::new("usage", format!("goal must be `<color> <shape>`, got `{s}`"));
    if words.len() != 2 {
        return Err(err());
    }
    let color = Color::ALL.iter().copied().find(|c| c.word() == words[0]).ok_or_else(err)?;
    let shape = Shape::ALL.iter().copied().find(|h| h.word() == words[1]).ok_or_else(err)?;
    Ok(Instruction::new(color, shape))
}

#[allow(clippy::too_many_arguments)]
pub fn dump_obs(
    ctx: &mut Ctx,
    out: &Path,
    house_name: &str,
    plan_id: u32,
    goal: Option<&str>,
    seed: u64,
    x: Option<f64>,
    y: Option<f64>,
    heading: Option<u8>,
) -> CliResult<()> {
    let template = house(house_name)?;
    let plans = enumerate_floorplans(&template);
    let plan = plans
        .iter()
        .find(|p| p.plan_id() == plan_id)
        .ok_or_else(|| CliError::new("plan", format!("no plan with id {plan_id} (0..{})", plans.len())))?;
    let goal = match goal {
        Some(s) => parse_goal(s)?,
        None => TRAIN_OBJECTS[0],
    };
    let cfg = EpisodeConfig {
        goal,
        n_distractors: ctx.cfg.environment.n_distractors,
        soft_termination: false,
        max_steps: ctx.cfg.environment.max_steps as u32,
        seed,
    };
    let mut world = World::reset(plan.clone(), cfg)?;
    match (x, y, heading) {
        (None, None, None) => {}
        (Some(x), Some(y), Some(h)) => world.teleport(Vec2 { x, y }, h)?,
        _ => return Err(CliError::new("usage", "--x, --y, and --heading must be given together")),
    }
    let obs = world.observe();
    std::fs::write(out, obs.to_ppm())?;
    ctx.output(out);
    println!(
        "wrote {}x{} observation at ({:.2}, {:.2}) heading {} in {} to {}",
        obs.width,
        obs.height,
        world.pose().pos.x,
        world.pose().pos.y,
        world.pose().heading_idx,
        world.current_room().name(),
        out.display()
    );
    ctx.finish(out)
}
