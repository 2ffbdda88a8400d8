//! Comma-separated metrics and report files. All files written here have
//! a header row; none of the values ever contain commas, so parsing is a
//! plain split.

use std::path::Path;

use housenav_core::ga::GaEpochPoint;
use housenav_core::hierarchy::TrainPoint;

use crate::{CliError, CliResult};

pub const TRAIN_HEADER: &str = "env_steps,updates,eval_metric,eval_mean_reward,train_window_sr,entropy";
pub const GA_HEADER: &str = "epoch,train_loss,val_accuracy";

pub fn write_train_metrics(path: &Path, points: &[TrainPoint]) -> CliResult<()> {
    let mut text = String::from(TRAIN_HEADER);
    text.push('\n');
    for p in points {
        text.push_str(&format!(
            "{},{},{:.6},{:.6},{:.6},{:.6}\n",
            p.env_steps, p.updates, p.eval_metric, p.eval_mean_reward, p.train_window_sr, p.entropy
        ));
    }
    write_file(path, &text)
}

pub fn write_ga_metrics(path: &Path, points: &[GaEpochPoint]) -> CliResult<()> {
    let mut text = String::from(GA_HEADER);
    text.push('\n');
    for p in points {
        text.push_str(&format!("{},{:.6},{:.6}\n", p.epoch, p.train_loss, p.val_accuracy));
    }
    write_file(path, &text)
}

pub fn write_file(path: &Path, text: &str) -> CliResult<()> {
    std::fs::write(path, text).map_err(|e| CliError::new("io", format!("{}: {e}", path.display())))
}

/// Header-plus-rows view of one of our own CSV files.
pub struct Csv {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Csv {
    pub fn read(path: &Path) -> CliResult<Csv> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::new("io", format!("{}: {e}", path.display())))?;
        let mut lines = text.lines();
        let header: Vec<String> = lines
            .next()
            .ok_or_else(|| CliError::new("data", format!("{}: empty file", path.display())))?
            .split(',')
            .map(str::to_string)
            .collect();
        let mut rows = Vec::new();
        for (i, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let row: Vec<String> = line.split(',').map(str::to_string).collect();
            if row.len() != header.len() {
                return Err(CliError::new(
                    "data",
                    format!("{} line {}: {} fields, header has {}", path.display(), i + 2, row.len(), header.len()),
                ));
            }
            rows.push(row);
        }
        Ok(Csv { header, rows })
    }

    /// Column index by header name.
    pub fn col(&self, name: &str, path: &Path) -> CliResult<usize> {
        self.header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::new("data", format!("{}: no column `{name}`", path.display())))
    }

    pub fn num(&self, row: usize, col: usize, path: &Path) -> CliResult<f64> {
        self.rows[row][col]
            .parse::<f64>()
            .map_err(|_| {
                CliError::new(
                    "data",
                    format!("{} row {}: `{}` is not a number", path.display(), row + 2, self.rows[row][col]),
                )
            })
    }
}
