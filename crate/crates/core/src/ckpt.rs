//! Versioned model checkpoints: a JSON container holding base64-encoded
//! little-endian f64 parameter arrays keyed by tensor name, the network
//! architecture, and identity metadata (vocabulary digest, configuration
//! digest). Loading verifies version, kind, vocabulary, architecture,
//! array shapes, and finiteness before handing back a model.

use std::collections::BTreeMap;
use std::path::Path;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine as _;
use serde::{Deserialize, Serialize};

use crate::error::CkptError;
use crate::lang::vocab_hash;
use crate::nn::{GaNet, Layout, NetConfig, PolicyNet};

pub const CKPT_VERSION: u32 = 1;
const CKPT_FORMAT: &str = "housenav-ckpt";

/// What a checkpoint file contains.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CkptKind {
    /// Low-level navigation policy.
    Controller,
    /// High-level cue-picking policy.
    Meta,
    /// Flat single-level policy.
    Baseline,
    /// Goal-assessment classifier.
    Ga,
    /// A full agent: controller plus optional cue policy and gate model.
    Composed,
}

impl CkptKind {
    pub const ALL: [CkptKind; 5] = [
        CkptKind::Controller,
        CkptKind::Meta,
        CkptKind::Baseline,
        CkptKind::Ga,
        CkptKind::Composed,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CkptKind::Controller => "controller",
            CkptKind::Meta => "meta",
            CkptKind::Baseline => "baseline",
            CkptKind::Ga => "ga",
            CkptKind::Composed => "composed",
        }
    }

    pub fn from_name(s: &str) -> Option<CkptKind> {
        CkptKind::ALL.iter().copied().find(|k| k.name() == s)
    }
}

/// Provenance carried by every checkpoint.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CkptMeta {
    /// Digest of the run configuration that produced the model.
    pub config_hash: String,
    /// Master seed of the producing run.
    pub seed: u64,
    /// Environment steps consumed in training (0 where not applicable).
    pub env_steps: u64,
}

/// Where the composed agent's room cues come from (checkpoint form).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EnhanceKind {
    Oracle,
    Meta,
    Plain,
}

impl EnhanceKind {
    pub const ALL: [EnhanceKind; 3] = [EnhanceKind::Oracle, EnhanceKind::Meta, EnhanceKind::Plain];

    pub fn name(self) -> &'static str {
        match self {
            EnhanceKind::Oracle => "oracle",
            EnhanceKind::Meta => "meta",
            EnhanceKind::Plain => "plain",
        }
    }

    pub fn from_name(s: &str) -> Option<EnhanceKind> {
        Self::ALL.iter().copied().find(|k| k.name() == s)
    }
}

/// How the composed agent resolves termination requests (checkpoint form).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GateKind {
    Oracle,
    Model,
    Never,
}

impl GateKind {
    pub const ALL: [GateKind; 3] = [GateKind::Oracle, GateKind::Model, GateKind::Never];

    pub fn name(self) -> &'static str {
        match self {
            GateKind::Oracle => "oracle",
            GateKind::Model => "model",
            GateKind::Never => "never",
        }
    }

    pub fn from_name(s: &str) -> Option<GateKind> {
        Self::ALL.iter().copied().find(|k| k.name() == s)
    }
}

/// The wiring of a composed agent.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ComposedSpec {
    pub enhance: EnhanceKind,
    pub gate: GateKind,
    /// Steps between high-level decisions.
    pub period: u32,
}

/// A loaded composed checkpoint.
pub struct ComposedCkpt {
    pub controller: PolicyNet,
    pub meta_policy: Option<PolicyNet>,
    pub ga: Option<GaNet>,
    pub spec: ComposedSpec,
    pub meta: CkptMeta,
}

// ---------------------------------------------------------------------------
// JSON container
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct NetBlob {
    net: NetConfig,
    arrays: BTreeMap<String, String>,
}

#[derive(Serialize, Deserialize)]
struct ComposedBlob {
    controller: NetBlob,
    #[serde(skip_serializing_if = "Option::is_none")]
    meta_policy: Option<NetBlob>,
    #[serde(skip_serializing_if = "Option::is_none")]
    ga: Option<NetBlob>,
    enhance: String,
    gate: String,
    period: u32,
}

#[derive(Serialize, Deserialize)]
struct Container {
    format: String,
    version: u32,
    kind: String,
    vocab_hash: String,
    meta: CkptMeta,
    #[serde(skip_serializing_if = "Option::is_none")]
    net: Option<NetBlob>,
    #[serde(skip_serializing_if = "Option::is_none")]
    composed: Option<ComposedBlob>,
}

fn encode_arrays(params: &[f64], layout: &Layout) -> Result<BTreeMap<String, String>, CkptError> {
    let mut arrays = BTreeMap::new();
    for slot in layout.slots() {
        let vals = &params[slot.range()];
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(CkptError::NonFinite(slot.name.clone()));
        }
        let mut bytes = Vec::with_capacity(vals.len() * 8);
        for v in vals {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        arrays.insert(slot.name.clone(), B64.encode(&bytes));
    }
    Ok(arrays)
}

fn decode_arrays(arrays: &BTreeMap<String, String>, layout: &Layout) -> Result<Vec<f64>, CkptError> {
    for name in arrays.keys() {
        if layout.find(name).is_none() {
            return Err(CkptError::ArchMismatch(format!(
                "checkpoint carries an array `{name}` the architecture does not have"
            )));
        }
    }
    let mut params = vec![0.0f64; layout.total()];
    for slot in layout.slots() {
        let b64 = arrays.get(&slot.name).ok_or_else(|| CkptError::MissingArray(slot.name.clone()))?;
        let bytes = B64
            .decode(b64)
            .map_err(|e| CkptError::Parse(format!("array {}: {e}", slot.name)))?;
        if bytes.len() != slot.numel() * 8 {
            return Err(CkptError::ArrayLen {
                name: slot.name.clone(),
                expected: slot.numel(),
                found: bytes.len() / 8,
            });
        }
        for (i, chunk) in bytes.chunks_exact(8).enumerate() {
            let v = f64::from_le_bytes(chunk.try_into().expect("chunks_exact yields 8 bytes"));
            if !v.is_finite() {
                return Err(CkptError::NonFinite(slot.name.clone()));
            }
            params[slot.range().start + i] = v;
        }
    }
    Ok(params)
}

fn policy_blob(policy: &PolicyNet) -> Result<NetBlob, CkptError> {
    Ok(NetBlob { net: policy.cfg().clone(), arrays: encode_arrays(&policy.params, policy.layout())? })
}

fn ga_blob(ga: &GaNet) -> Result<NetBlob, CkptError> {
    Ok(NetBlob { net: ga.cfg().clone(), arrays: encode_arrays(&ga.params, ga.layout())? })
}

fn blob_to_policy(blob: &NetBlob) -> Result<PolicyNet, CkptError> {
    let probe = PolicyNet::new(blob.net.clone(), 0);
    let params = decode_arrays(&blob.arrays, probe.layout())?;
    PolicyNet::with_params(blob.net.clone(), params).map_err(|e| CkptError::ArchMismatch(e.to_string()))
}

fn blob_to_ga(blob: &NetBlob) -> Result<GaNet, CkptError> {
    let probe = GaNet::new(blob.net.clone(), 0);
    let params = decode_arrays(&blob.arrays, probe.layout())?;
    GaNet::with_params(blob.net.clone(), params).map_err(|e| CkptError::ArchMismatch(e.to_string()))
}

fn write_container(path: &Path, c: &Container) -> Result<(), CkptError> {
    let json = serde_json::to_string_pretty(c).map_err(|e| CkptError::Parse(e.to_string()))?;
    std::fs::write(path, json).map_err(|e| CkptError::Io(e.to_string()))
}

fn read_container(path: &Path, expect: CkptKind) -> Result<Container, CkptError> {
    let text = std::fs::read_to_string(path).map_err(|e| CkptError::Io(e.to_string()))?;
    let c: Container = serde_json::from_str(&text).map_err(|e| CkptError::Parse(e.to_string()))?;
    if c.format != CKPT_FORMAT {
        return Err(CkptError::Parse(format!("not a checkpoint file (format `{}`)", c.format)));
    }
    if c.version != CKPT_VERSION {
        return Err(CkptError::Version(c.version));
    }
    let kind = CkptKind::from_name(&c.kind)
        .ok_or_else(|| CkptError::Parse(format!("unknown checkpoint kind `{}`", c.kind)))?;
    if kind != expect {
        return Err(CkptError::Kind { expected: expect.name().to_string(), found: c.kind.clone() });
    }
    let want = vocab_hash();
    if c.vocab_hash != want {
        return Err(CkptError::VocabMismatch(format!(
            "checkpoint was written with vocabulary {}..., this build has {}...",
            c.vocab_hash.get(..8).unwrap_or(&c.vocab_hash),
            &want[..8]
        )));
    }
    Ok(c)
}

/// Reads only the kind field, for dispatch and error messages.
pub fn peek_kind(path: &Path) -> Result<CkptKind, CkptError> {
    let text = std::fs::read_to_string(path).map_err(|e| CkptError::Io(e.to_string()))?;
    let c: Container = serde_json::from_str(&text).map_err(|e| CkptError::Parse(e.to_string()))?;
    CkptKind::from_name(&c.kind)
        .ok_or_else(|| CkptError::Parse(format!("unknown checkpoint kind `{}`", c.kind)))
}

// ---------------------------------------------------------------------------
// Public save/load
// ---------------------------------------------------------------------------

/// Saves a policy network under one of the policy kinds.
pub fn save_policy(
    path: &Path,
    kind: CkptKind,
    policy: &PolicyNet,
    meta: &CkptMeta,
) -> Result<(), CkptError> {
    assert!(
        matches!(kind, CkptKind::Controller | CkptKind::Meta | CkptKind::Baseline),
        "save_policy stores policy kinds; use save_ga/save_composed for the others"
    );
    let c = Container {
        format: CKPT_FORMAT.to_string(),
        version: CKPT_VERSION,
        kind: kind.name().to_string(),
        vocab_hash: vocab_hash(),
        meta: meta.clone(),
        net: Some(policy_blob(policy)?),
        composed: None,
    };
    write_container(path, &c)
}

/// Loads a policy checkpoint, verifying it has the expected kind.
pub fn load_policy(path: &Path, expect: CkptKind) -> Result<(PolicyNet, CkptMeta), CkptError> {
    let c = read_container(path, expect)?;
    let blob = c.net.ok_or_else(|| CkptError::Parse("missing net block".to_string()))?;
    Ok((blob_to_policy(&blob)?, c.meta))
}

/// Saves a goal-assessment classifier.
pub fn save_ga(path: &Path, ga: &GaNet, meta: &CkptMeta) -> Result<(), CkptError> {
    let c = Container {
        format: CKPT_FORMAT.to_string(),
        version: CKPT_VERSION,
        kind: CkptKind::Ga.name().to_string(),
        vocab_hash: vocab_hash(),
        meta: meta.clone(),
        net: Some(ga_blob(ga)?),
        composed: None,
    };
    write_container(path, &c)
}

/// Loads a goal-assessment checkpoint.
pub fn load_ga(path: &Path) -> Result<(GaNet, CkptMeta), CkptError> {
    let c = read_container(path, CkptKind::Ga)?;
    let blob = c.net.ok_or_else(|| CkptError::Parse("missing net block".to_string()))?;
    Ok((blob_to_ga(&blob)?, c.meta))
}

/// Saves a composed agent. The parts required by the spec must be
/// present: a cue policy when `enhance = meta`, a classifier when
/// `gate = model`.
pub fn save_composed(
    path: &Path,
    controller: &PolicyNet,
    meta_policy: Option<&PolicyNet>,
    ga: Option<&GaNet>,
    spec: &ComposedSpec,
    meta: &CkptMeta,
) -> Result<(), CkptError> {
    check_spec_parts(spec, meta_policy.is_some(), ga.is_some())?;
    let c = Container {
        format: CKPT_FORMAT.to_string(),
        version: CKPT_VERSION,
        kind: CkptKind::Composed.name().to_string(),
        vocab_hash: vocab_hash(),
        meta: meta.clone(),
        net: None,
        composed: Some(ComposedBlob {
            controller: policy_blob(controller)?,
            meta_policy: meta_policy.map(policy_blob).transpose()?,
            ga: ga.map(ga_blob).transpose()?,
            enhance: spec.enhance.name().to_string(),
            gate: spec.gate.name().to_string(),
            period: spec.period,
        }),
    };
    write_container(path, &c)
}

fn check_spec_parts(spec: &ComposedSpec, has_meta: bool, has_ga: bool) -> Result<(), CkptError> {
    if spec.enhance == EnhanceKind::Meta && !has_meta {
        return Err(CkptError::ArchMismatch(
            "composed agent declares a learned cue policy but carries none".to_string(),
        ));
    }
    if spec.gate == GateKind::Model && !has_ga {
        return Err(CkptError::ArchMismatch(
            "composed agent declares a learned gate but carries no classifier".to_string(),
        ));
    }
    if spec.period == 0 {
        return Err(CkptError::Parse("composed period must be positive".to_string()));
    }
    Ok(())
}

/// Loads a composed checkpoint and validates its wiring.
pub fn load_composed(path: &Path) -> Result<ComposedCkpt, CkptError> {
    let c = read_container(path, CkptKind::Composed)?;
    let blob = c.composed.ok_or_else(|| CkptError::Parse("missing composed block".to_string()))?;
    let enhance = EnhanceKind::from_name(&blob.enhance)
        .ok_or_else(|| CkptError::Parse(format!("unknown enhancement source `{}`", blob.enhance)))?;
    let gate = GateKind::from_name(&blob.gate)
        .ok_or_else(|| CkptError::Parse(format!("unknown gate `{}`", blob.gate)))?;
    let spec = ComposedSpec { enhance, gate, period: blob.period };
    check_spec_parts(&spec, blob.meta_policy.is_some(), blob.ga.is_some())?;
    Ok(ComposedCkpt {
        controller: blob_to_policy(&blob.controller)?,
        meta_policy: blob.meta_policy.as_ref().map(blob_to_policy).transpose()?,
        ga: blob.ga.as_ref().map(blob_to_ga).transpose()?,
        spec,
        meta: c.meta,
    })
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------
