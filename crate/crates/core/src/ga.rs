//! Goal assessment: a supervised binary classifier that decides, from one
//! first-person frame and an instruction, whether the instructed object
//! has been reached. The composed agent consults it to turn termination
//! requests into actual termination.
//!
//! Data comes from random walks through simulator episodes. A frame
//! *qualifies* when some instructable object is both visible (at least
//! [`VISIBLE_PIXEL_FLOOR`] rendered pixels) and near (geodesic distance
//! within the success radius). Qualifying frames are paired with the true
//! instruction and label 1 half the time, and with a random non-matching
//! instruction and label 0 otherwise; non-qualifying frames always get a
//! random instruction and label 0.

use std::path::Path;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::GaError;
use crate::exec;
use crate::floorplan::FloorPlan;
use crate::lang::{self, encode, EnhancedInstruction, Instruction, TokenSeq, TRAIN_OBJECTS};
use crate::nn::{ops, Adam, GaNet, NetConfig};
use crate::render::{render_with_visibility, Observation};
use crate::simworld::{
    build_dist_field, snap_to_walkable, Action, DistField, EpisodeConfig, World, SUCCESS_RADIUS,
};

/// Minimum rendered pixels for an object to count as visible.
pub const VISIBLE_PIXEL_FLOOR: u32 = 20;

/// One labeled frame.
#[derive(Clone, Debug)]
pub struct GaSample {
    pub obs: Observation,
    /// The instruction paired with the frame (always a plain sentence).
    pub tokens: TokenSeq,
    pub label: bool,
    /// Whether an object matching the paired instruction is visible.
    pub goal_visible: bool,
    /// Geodesic distance to the nearest object matching the paired
    /// instruction (infinite when no such object is placed).
    pub goal_distance: f64,
}

/// Dataset-collection settings.
#[derive(Clone, Debug)]
pub struct CollectCfg {
    pub n_distractors: usize,
    /// Steps per random-walk episode.
    pub episode_steps: u32,
    /// Store every k-th non-qualifying frame, spreading plain negatives
    /// across many episodes instead of exhausting the quota on the first.
    pub nonqual_stride: u32,
    /// Instructions the dataset can pair with frames.
    pub pool: Vec<Instruction>,
}

impl Default for CollectCfg {
    fn default() -> Self {
        CollectCfg {
            n_distractors: 2,
            episode_steps: 60,
            nonqual_stride: 7,
            pool: TRAIN_OBJECTS.to_vec(),
        }
    }
}

/// Per-frame ground truth about one placed object.
struct ObjectStatus {
    instruction: Instruction,
    visible: bool,
    distance: f64,
    in_pool: bool,
}

/// Ground truth for the paired instruction within a frame: visibility and
/// distance of its best (nearest) matching object.
fn instruction_status(statuses: &[ObjectStatus], instr: Instruction) -> (bool, f64) {
    let mut visible = false;
    let mut distance = f64::INFINITY;
    for s in statuses {
        if s.instruction == instr {
            visible |= s.visible;
            distance = distance.min(s.distance);
        }
    }
    (visible, distance)
}

/// Walks one episode with uniformly random movement actions, returning
/// (qualifying samples, non-qualifying samples) in step order.
fn collect_episode(
    plans: &[FloorPlan],
    cfg: &CollectCfg,
    seed: u64,
) -> (Vec<GaSample>, Vec<GaSample>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let plan = plans[rng.gen_range(0..plans.len())].clone();
    let goal = cfg.pool[rng.gen_range(0..cfg.pool.len())];
    let ep = EpisodeConfig {
        goal,
        n_distractors: cfg.n_distractors,
        soft_termination: false,
        max_steps: cfg.episode_steps,
        seed: rng.gen(),
    };
    let mut world = match World::reset(plan, ep) {
        Ok(w) => w,
        Err(_) => return (Vec::new(), Vec::new()), // unlucky placement; skip
    };

    // One geodesic field per placed object, so nearness is exact for
    // distractors too, not just the episode goal.
    let geo = Arc::clone(world.plan().geometry());
    let fields: Vec<DistField> = world
        .objects()
        .iter()
        .map(|o| build_dist_field(&geo, o.pos).expect("objects sit in walkable space"))
        .collect();
    let params = world.render_params();

    let mut qual = Vec::new();
    let mut nonqual = Vec::new();
    for step_i in 0..=cfg.episode_steps {
        let pose = world.pose();
        let (obs, vis) = render_with_visibility(world.plan(), &pose, world.objects(), &params);
        let agent_cell = snap_to_walkable(&geo, pose.pos).expect("agent on walkable cell");

        let statuses: Vec<ObjectStatus> = world
            .objects()
            .iter()
            .zip(&vis)
            .zip(&fields)
            .map(|((o, &v), f)| {
                let instruction = Instruction::new(o.color, o.shape);
                ObjectStatus {
                    instruction,
                    visible: v >= VISIBLE_PIXEL_FLOOR,
                    distance: f.at_cell(agent_cell.0, agent_cell.1),
                    in_pool: cfg.pool.contains(&instruction),
                }
            })
            .collect();

        // Qualifying objects, nearest first.
        let mut qualifying: Vec<&ObjectStatus> = statuses
            .iter()
            .filter(|s| s.in_pool && s.visible && s.distance <= SUCCESS_RADIUS)
            .collect();
        qualifying.sort_by(|a, b| a.distance.total_cmp(&b.distance));

        if let Some(best) = qualifying.first() {
            if rng.gen_bool(0.5) {
                qual.push(GaSample {
                    obs,
                    tokens: encode(&EnhancedInstruction::plain(best.instruction)),
                    label: true,
                    goal_visible: true,
                    goal_distance: best.distance,
                });
            } else {
                // A wrong-but-plausible instruction: anything in the pool
                // that no qualifying object matches (so the negative label
                // is sound).
                let wrong: Vec<Instruction> = cfg
                    .pool
                    .iter()
                    .copied()
                    .filter(|i| !qualifying.iter().any(|s| s.instruction == *i))
                    .collect();
                let instr = wrong[rng.gen_range(0..wrong.len())];
                let (goal_visible, goal_distance) = instruction_status(&statuses, instr);
                qual.push(GaSample {
                    obs,
                    tokens: encode(&EnhancedInstruction::plain(instr)),
                    label: false,
                    goal_visible,
                    goal_distance,
                });
            }
        } else if step_i % cfg.nonqual_stride == 0 {
            // Nothing is reached in this frame, so any pool instruction is
            // a sound negative.
            let instr = cfg.pool[rng.gen_range(0..cfg.pool.len())];
            let (goal_visible, goal_distance) = instruction_status(&statuses, instr);
            nonqual.push(GaSample {
                obs,
                tokens: encode(&EnhancedInstruction::plain(instr)),
                label: false,
                goal_visible,
                goal_distance,
            });
        }

        let action = [Action::Forward, Action::TurnLeft, Action::TurnRight][rng.gen_range(0..3)];
        let out = world.step(action).expect("movement on a live episode");
        if out.terminated {
            break;
        }
    }
    (qual, nonqual)
}

/// Collects `n_frames` labeled frames by random walks over `plans`,
/// half from qualifying frames (coin-labeled) and half from frames where
/// nothing is reached. Deterministic per seed, independent of the
/// execution strategy. `n_frames = 0` yields an empty dataset.
pub fn collect_ga_dataset(
    plans: &Arc<Vec<FloorPlan>>,
    cfg: &CollectCfg,
    n_frames: usize,
    seed: u64,
) -> Vec<GaSample> {
    assert!(!plans.is_empty(), "need at least one floor plan");
    assert!(cfg.pool.len() >= 2, "need at least two instructions to draw wrong pairings");
    if n_frames == 0 {
        return Vec::new();
    }
    let qual_quota = n_frames / 2;
    let nonqual_quota = n_frames - qual_quota;

    let mut seeder = ChaCha8Rng::seed_from_u64(seed);
    let mut qual: Vec<GaSample> = Vec::with_capacity(qual_quota);
    let mut nonqual: Vec<GaSample> = Vec::with_capacity(nonqual_quota);
    let batch = 32;
    let mut rounds = 0usize;
    while qual.len() < qual_quota || nonqual.len() < nonqual_quota {
        rounds += 1;
        assert!(rounds <= 100_000, "dataset collection stalled; check plan/pool configuration");
        let seeds: Vec<u64> = (0..batch).map(|_| seeder.gen()).collect();
        let results = exec::map_range(batch, |i| collect_episode(plans, cfg, seeds[i]));
        for (q, nq) in results {
            qual.extend(q);
            nonqual.extend(nq);
        }
    }
    qual.truncate(qual_quota);
    nonqual.truncate(nonqual_quota);

    let mut samples = qual;
    samples.append(&mut nonqual);
    samples.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 0x5a5a_5a5a));
    samples
}

// ---------------------------------------------------------------------------
// Disk format
// ---------------------------------------------------------------------------

/// Writes a dataset as `frames/NNNNNN.ppm` plus a tab-separated
/// `index.tsv` with columns (path, instruction text, label, distance).
pub fn save_ga_dataset(dir: &Path, samples: &[GaSample]) -> Result<(), GaError> {
    let io = |e: std::io::Error| GaError::Io(e.to_string());
    std::fs::create_dir_all(dir.join("frames")).map_err(io)?;
    let mut index = String::new();
    for (i, s) in samples.iter().enumerate() {
        let rel = format!("frames/{i:06}.ppm");
        std::fs::write(dir.join(&rel), s.obs.to_ppm()).map_err(io)?;
        let instr = lang::decode(&s.tokens).map_err(|e| GaError::Io(e.to_string()))?;
        let dist =
            if s.goal_distance.is_finite() { format!("{:.6}", s.goal_distance) } else { "inf".to_string() };
        index.push_str(&format!("{rel}\t{}\t{}\t{dist}\n", lang::format(&instr), u8::from(s.label)));
    }
    std::fs::write(dir.join("index.tsv"), index).map_err(io)
}

/// Reads a dataset written by [`save_ga_dataset`]. Frame visibility is not
/// stored on disk; loaded samples carry `goal_visible = label`.
pub fn load_ga_dataset(dir: &Path) -> Result<Vec<GaSample>, GaError> {
    let io = |e: std::io::Error| GaError::Io(e.to_string());
    let index = std::fs::read_to_string(dir.join("index.tsv")).map_err(io)?;
    let mut samples = Vec::new();
    for (lineno, line) in index.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let bad = |reason: &str| GaError::BadIndex { line: lineno + 1, reason: reason.to_string() };
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 4 {
            return Err(bad("expected 4 tab-separated columns"));
        }
        let bytes = std::fs::read(dir.join(cols[0])).map_err(io)?;
        let obs = Observation::from_ppm(&bytes).ok_or_else(|| bad("unreadable frame file"))?;
        let instr = lang::parse(cols[1]).map_err(|e| bad(&e.to_string()))?;
        let label = match cols[2] {
            "0" => false,
            "1" => true,
            _ => return Err(bad("label must be 0 or 1")),
        };
        let goal_distance = if cols[3] == "inf" {
            f64::INFINITY
        } else {
            cols[3].parse::<f64>().map_err(|_| bad("unparsable distance"))?
        };
        samples.push(GaSample {
            obs,
            tokens: encode(&instr),
            label,
            goal_visible: label,
            goal_distance,
        });
    }
    Ok(samples)
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

/// Classifier training settings.
#[derive(Clone, Debug)]
pub struct GaTrainCfg {
    pub net: NetConfig,
    pub lr: f64,
    pub batch: usize,
    pub max_epochs: usize,
    /// Epochs without a validation-accuracy improvement before stopping.
    pub patience: usize,
    pub seed: u64,
}

impl Default for GaTrainCfg {
    fn default() -> Self {
        GaTrainCfg {
            net: NetConfig::ga_conv(),
            lr: 1e-3,
            batch: 64,
            max_epochs: 30,
            patience: 3,
            seed: 0,
        }
    }
}

/// One epoch's summary.
#[derive(Clone, Copy, Debug)]
pub struct GaEpochPoint {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_accuracy: f64,
}

/// Training outcome summary.
#[derive(Clone, Debug)]
pub struct GaReport {
    pub n_train: usize,
    pub n_val: usize,
    pub epochs_run: usize,
    /// Epoch whose parameters were kept (best validation accuracy).
    pub best_epoch: usize,
    pub train_accuracy: f64,
    pub val_accuracy: f64,
    pub history: Vec<GaEpochPoint>,
}

fn accuracy(net: &GaNet, samples: &[GaSample], idx: &[usize]) -> f64 {
    if idx.is_empty() {
        return 0.0;
    }
    let correct = exec::map_chunks(idx, 64, |chunk| {
        chunk
            .iter()
            .filter(|&&i| {
                let s = &samples[i];
                assess(net, &s.obs, &s.tokens) == s.label
            })
            .count()
    })
    .into_iter()
    .sum::<usize>();
    correct as f64 / idx.len() as f64
}

/// Trains the classifier with minibatch Adam on binary cross-entropy,
/// holding out 20% of the data (at least one sample) for validation and
/// early-stopping on validation accuracy. Returns the best-epoch model.
pub fn train_ga(samples: &[GaSample], cfg: &GaTrainCfg) -> Result<(GaNet, GaReport), GaError> {
    if samples.is_empty() {
        return Err(GaError::Empty);
    }
    let positives = samples.iter().filter(|s| s.label).count();
    if positives == 0 || positives == samples.len() {
        return Err(GaError::SingleClass { positives, total: samples.len() });
    }
    assert!(cfg.batch > 0 && cfg.max_epochs > 0);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    order.shuffle(&mut rng);
    let n_val = (samples.len() / 5).max(1);
    let (train_idx, val_idx) = order.split_at(samples.len() - n_val);
    let mut train_idx = train_idx.to_vec();
    let val_idx = val_idx.to_vec();

    let mut net = GaNet::new(cfg.net.clone(), cfg.seed);
    let mut adam = Adam::new(net.params.len(), cfg.lr);
    let mut best_params = net.params.clone();
    let mut best_acc = f64::NEG_INFINITY;
    let mut best_epoch = 0;
    let mut history = Vec::new();
    let mut epochs_run = 0;

    for epoch in 0..cfg.max_epochs {
        epochs_run = epoch + 1;
        train_idx.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut loss_n = 0usize;
        for batch in train_idx.chunks(cfg.batch) {
            // Per-chunk gradient accumulation, folded in fixed chunk order
            // so results do not depend on the execution strategy.
            let chunk_results = exec::map_chunks(batch, 8, |ids| {
                let mut g = vec![0.0; net.params.len()];
                let mut loss = 0.0;
                for &i in ids {
                    let s = &samples[i];
                    let obs = s.obs.to_chw();
                    let (z, cache) = net.forward_cached(&obs, &s.tokens.0);
                    let (l, dlogit) = ops::bce_with_logits(z, if s.label { 1.0 } else { 0.0 });
                    loss += l;
                    net.backward(&mut g, &obs, &s.tokens.0, &cache, dlogit);
                }
                (g, loss)
            });
            let mut grads = vec![0.0; net.params.len()];
            for (g, l) in chunk_results {
                ops::add_acc(&mut grads, &g);
                loss_sum += l;
            }
            loss_n += batch.len();
            let inv = 1.0 / batch.len() as f64;
            for g in grads.iter_mut() {
                *g *= inv;
            }
            assert!(
                grads.iter().all(|g| g.is_finite()),
                "non-finite gradient in classifier training"
            );
            adam.step(&mut net.params, &grads);
        }

        let val_acc = accuracy(&net, samples, &val_idx);
        history.push(GaEpochPoint {
            epoch,
            train_loss: loss_sum / loss_n.max(1) as f64,
            val_accuracy: val_acc,
        });
        if val_acc > best_acc {
            best_acc = val_acc;
            best_epoch = epoch;
            best_params.copy_from_slice(&net.params);
        } else if epoch - best_epoch >= cfg.patience {
            break;
        }
    }

    net.params.copy_from_slice(&best_params);
    let report = GaReport {
        n_train: train_idx.len(),
        n_val: val_idx.len(),
        epochs_run,
        best_epoch,
        train_accuracy: accuracy(&net, samples, &train_idx),
        val_accuracy: best_acc,
        history,
    };
    Ok((net, report))
}

/// The gate decision: true when the model deems the instruction satisfied
/// (probability at least 1/2). Pure and deterministic.
pub fn assess(net: &GaNet, obs: &Observation, tokens: &TokenSeq) -> bool {
    net.prob(&obs.to_chw(), &tokens.0) >= 0.5
}

/// Instruction sensitivity: over the positive samples, re-pair each frame
/// with a random different instruction and measure how often the model
/// still says "reached" — the error rate of the flipped set.
pub fn flipped_error_rate(
    net: &GaNet,
    samples: &[GaSample],
    pool: &[Instruction],
    seed: u64,
) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let positives: Vec<&GaSample> = samples.iter().filter(|s| s.label).collect();
    if positives.is_empty() {
        return 0.0;
    }
    // Draw the flips sequentially (determinism), evaluate in parallel.
    let flips: Vec<TokenSeq> = positives
        .iter()
        .map(|s| {
            let own = lang::decode(&s.tokens).expect("stored tokens are valid").base;
            let others: Vec<Instruction> = pool.iter().copied().filter(|i| *i != own).collect();
            encode(&EnhancedInstruction::plain(others[rng.gen_range(0..others.len())]))
        })
        .collect();
    let wrong = exec::map_range(positives.len(), |i| {
        usize::from(assess(net, &positives[i].obs, &flips[i]))
    })
    .into_iter()
    .sum::<usize>();
    wrong as f64 / positives.len() as f64
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------
