//! Per-run context: loads and validates the configuration, tracks every
//! file the run reads or writes, and emits the run manifest.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use housenav_core::config::{RunConfig, SeedBlock};

use crate::{CliError, CliResult};

const MANIFEST_VERSION: u32 = 1;

#[derive(serde::Serialize)]
struct Manifest {
    format: &'static str,
    version: u32,
    subcommand: &'static str,
    tool_version: &'static str,
    config_path: Option<String>,
    overrides: Vec<String>,
    config_hash: String,
    seeds: SeedBlock,
    /// Version of every file format this tool reads or writes.
    format_versions: BTreeMap<&'static str, u32>,
    started_unix: u64,
    wall_clock_secs: f64,
    inputs: Vec<String>,
    outputs: Vec<String>,
}

pub struct Ctx {
    pub cfg: RunConfig,
    subcommand: &'static str,
    config_path: Option<PathBuf>,
    overrides: Vec<String>,
    started: Instant,
    started_unix: u64,
    inputs: Vec<String>,
    outputs: Vec<String>,
}

impl Ctx {
    pub fn new(subcommand: &'static str, config: Option<&Path>, overrides: &[String]) -> CliResult<Ctx> {
        let base = match config {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::new("io", format!("{}: {e}", p.display())))?;
                RunConfig::from_toml(&text)?
            }
            None => RunConfig::default(),
        };
        let cfg = base.with_overrides(overrides)?;
        cfg.validate()?;
        Ok(Ctx {
            cfg,
            subcommand,
            config_path: config.map(Path::to_path_buf),
            overrides: overrides.to_vec(),
            started: Instant::now(),
            started_unix: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
            inputs: config.iter().map(|p| p.display().to_string()).collect(),
            outputs: Vec::new(),
        })
    }

    /// Records a file the run read.
    pub fn input(&mut self, p: &Path) {
        self.inputs.push(p.display().to_string());
    }

    /// Records a file (or directory) the run wrote.
    pub fn output(&mut self, p: &Path) {
        self.outputs.push(p.display().to_string());
    }

    /// Writes the manifest next to the run's primary output: inside `out`
    /// when it is a directory, as a `.manifest.json` sibling otherwise.
    pub fn finish(&self, out: &Path) -> CliResult<()> {
        let manifest_path = if out.is_dir() {
            out.join("manifest.json")
        } else {
            let name = out
                .file_name()
                .map(|n| format!("{}.manifest.json", n.to_string_lossy()))
                .unwrap_or_else(|| "manifest.json".to_string());
            out.with_file_name(name)
        };
        let m = Manifest {
            format: "housenav-manifest",
            version: MANIFEST_VERSION,
            subcommand: self.subcommand,
            tool_version: env!("CARGO_PKG_VERSION"),
            config_path: self.config_path.as_ref().map(|p| p.display().to_string()),
            overrides: self.overrides.clone(),
            config_hash: self.cfg.hash(),
            seeds: self.cfg.seeds.clone(),
            format_versions: BTreeMap::from([
                ("manifest", MANIFEST_VERSION),
                ("checkpoint", housenav_core::ckpt::CKPT_VERSION),
                ("plans", 1),
                ("split", 1),
                ("trace", 1),
                ("dataset-index", 1),
                ("metrics-csv", 1),
                ("report-csv", 1),
                ("plot-svg", 1),
            ]),
            started_unix: self.started_unix,
            wall_clock_secs: self.started.elapsed().as_secs_f64(),
            inputs: self.inputs.clone(),
            outputs: self.outputs.clone(),
        };
        let json = serde_json::to_string_pretty(&m).expect("manifest serializes");
        std::fs::write(&manifest_path, json)
            .map_err(|e| CliError::new("io", format!("{}: {e}", manifest_path.display())))?;
        Ok(())
    }
}
