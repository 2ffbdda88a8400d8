//! Episode traces: the per-step log an evaluation run leaves behind, the
//! line-oriented text format it is stored in, and the failure-mode
//! classifier that runs over failed traces.

use std::path::Path;

use crate::error::EvalError;
use crate::floorplan::RoomId;
use crate::simworld::{Action, SUCCESS_RADIUS};

/// Geodesic-change tolerance below which an agent counts as not moving.
pub const STUCK_TOLERANCE: f64 = 1e-3;
/// Window length (steps) over which "no movement" is judged.
pub const STUCK_WINDOW: usize = 10;

/// One action-step of an episode.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceRecord {
    pub step: u32,
    pub action: Action,
    pub reward: f64,
    pub x: f64,
    pub y: f64,
    pub heading_idx: u8,
    /// Room containing the agent after the action.
    pub room: RoomId,
    /// Geodesic distance to the goal after the action.
    pub geodesic: f64,
    pub used_done: bool,
    pub query_fired: bool,
}

/// A full episode log.
#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeTrace {
    /// Room the agent spawned in (before any action).
    pub spawn_room: RoomId,
    pub records: Vec<TraceRecord>,
    pub success: bool,
}

/// How a failed episode failed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FailureMode {
    /// Terminated itself in the wrong place.
    Detection,
    /// Made no geodesic progress over the final steps.
    Stuck,
    /// Ran out the step budget while still moving.
    Timeout,
}

impl FailureMode {
    pub const ALL: [FailureMode; 3] = [FailureMode::Detection, FailureMode::Stuck, FailureMode::Timeout];

    pub fn name(self) -> &'static str {
        match self {
            FailureMode::Detection => "detection",
            FailureMode::Stuck => "stuck",
            FailureMode::Timeout => "timeout",
        }
    }

    pub fn from_name(s: &str) -> Option<FailureMode> {
        FailureMode::ALL.iter().copied().find(|m| m.name() == s)
    }
}

/// Classifies a failed episode, with fixed precedence
/// Detection > Stuck > Timeout:
/// - **Detection**: the episode ended with a termination beyond the
///   success radius (the agent thought it had arrived).
/// - **Stuck**: the geodesic distance changed by at most
///   [`STUCK_TOLERANCE`] over the final [`STUCK_WINDOW`] steps. Traces too
///   short to have such a window are never Stuck.
/// - **Timeout**: everything else.
pub fn classify_failure(trace: &EpisodeTrace) -> Result<FailureMode, EvalError> {
    let last = trace.records.last().ok_or(EvalError::EmptyTrace)?;
    if last.used_done && last.geodesic > SUCCESS_RADIUS {
        return Ok(FailureMode::Detection);
    }
    let n = trace.records.len();
    if n > STUCK_WINDOW {
        let then = &trace.records[n - 1 - STUCK_WINDOW];
        if (last.geodesic - then.geodesic).abs() <= STUCK_TOLERANCE {
            return Ok(FailureMode::Stuck);
        }
    }
    Ok(FailureMode::Timeout)
}

/// Distinct non-corridor rooms entered (spawn included), as a percentage
/// of the seven rooms.
pub fn room_coverage(trace: &EpisodeTrace) -> f64 {
    let mut seen = [false; 8];
    seen[trace.spawn_room.ord()] = true;
    for r in &trace.records {
        seen[r.room.ord()] = true;
    }
    let k = RoomId::NAV.iter().filter(|r| seen[r.ord()]).count();
    k as f64 / RoomId::NAV.len() as f64 * 100.0
}

// ---------------------------------------------------------------------------
// Text format
// ---------------------------------------------------------------------------

const TRACE_HEADER: &str = "housenav-trace v1";

/// Serializes a trace to its line-oriented text form: a version header, a
/// summary line, then one tab-separated record per step.
pub fn format_trace(trace: &EpisodeTrace) -> String {
    let mut out = String::new();
    out.push_str(TRACE_HEADER);
    out.push('\n');
    out.push_str(&format!(
        "outcome\t{}\tspawn\t{}\n",
        if trace.success { "success" } else { "failure" },
        trace.spawn_room.name()
    ));
    for r in &trace.records {
        out.push_str(&format!(
            "{}\t{}\t{:.6}\t{:.4}\t{:.4}\t{}\t{}\t{:.6}\t{}\t{}\n",
            r.step,
            r.action.name(),
            r.reward,
            r.x,
            r.y,
            r.heading_idx,
            r.room.name(),
            r.geodesic,
            u8::from(r.used_done),
            u8::from(r.query_fired),
        ));
    }
    out
}

/// Parses the text form produced by [`format_trace`], validating the
/// version header, the field counts, and strictly increasing step indices.
pub fn parse_trace(text: &str) -> Result<EpisodeTrace, EvalError> {
    let mut lines = text.lines().enumerate();
    let bad = |line: usize, reason: &str| EvalError::BadTrace { line: line + 1, reason: reason.to_string() };

    let (i, header) = lines.next().ok_or_else(|| bad(0, "empty file"))?;
    if header.trim() != TRACE_HEADER {
        return Err(bad(i, "missing version header"));
    }
    let (i, summary) = lines.next().ok_or_else(|| bad(1, "missing summary line"))?;
    let cols: Vec<&str> = summary.split('\t').collect();
    if cols.len() != 4 || cols[0] != "outcome" || cols[2] != "spawn" {
        return Err(bad(i, "summary must be `outcome\\t<o>\\tspawn\\t<room>`"));
    }
    let success = match cols[1] {
        "success" => true,
        "failure" => false,
        _ => return Err(bad(i, "outcome must be success or failure")),
    };
    let spawn_room = RoomId::from_name(cols[3]).ok_or_else(|| bad(i, "unknown spawn room"))?;

    let mut records = Vec::new();
    let mut prev_step: Option<u32> = None;
    for (i, line) in lines {
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 10 {
            return Err(bad(i, "expected 10 tab-separated fields"));
        }
        let step: u32 = f[0].parse().map_err(|_| bad(i, "unparsable step"))?;
        if let Some(p) = prev_step {
            if step <= p {
                return Err(bad(i, "step indices must strictly increase"));
            }
        }
        prev_step = Some(step);
        let flag = |s: &str, what: &str| match s {
            "0" => Ok(false),
            "1" => Ok(true),
            _ => Err(bad(i, what)),
        };
        records.push(TraceRecord {
            step,
            action: Action::from_name(f[1]).ok_or_else(|| bad(i, "unknown action"))?,
            reward: f[2].parse().map_err(|_| bad(i, "unparsable reward"))?,
            x: f[3].parse().map_err(|_| bad(i, "unparsable x"))?,
            y: f[4].parse().map_err(|_| bad(i, "unparsable y"))?,
            heading_idx: f[5].parse().map_err(|_| bad(i, "unparsable heading"))?,
            room: RoomId::from_name(f[6]).ok_or_else(|| bad(i, "unknown room"))?,
            geodesic: f[7].parse().map_err(|_| bad(i, "unparsable geodesic"))?,
            used_done: flag(f[8], "used_done must be 0 or 1")?,
            query_fired: flag(f[9], "query_fired must be 0 or 1")?,
        });
    }
    Ok(EpisodeTrace { spawn_room, records, success })
}

pub fn write_trace(path: &Path, trace: &EpisodeTrace) -> Result<(), EvalError> {
    std::fs::write(path, format_trace(trace)).map_err(|e| EvalError::Io(e.to_string()))
}

pub fn read_trace(path: &Path) -> Result<EpisodeTrace, EvalError> {
    let text = std::fs::read_to_string(path).map_err(|e| EvalError::Io(e.to_string()))?;
    parse_trace(&text)
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------
