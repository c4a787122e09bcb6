//! Run configuration: network and training parameters merged from a
//! `key = value` config file and command-line overrides, resolved up front
//! and echoed verbatim into the output directory.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use lf_core::data::{make_pattern, Task, ViewPattern};
use lf_core::net::{BottleneckKernel, NetworkConfig};
use lf_core::tensor::Activation;
use lf_core::train::{Reduction, TrainConfig};

use crate::{validation, CliError};

/// Everything a command needs, fully resolved before any work starts.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub net: NetworkConfig,
    pub train: TrainConfig,
    pub task: Task,
    pub dataset: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

impl RunConfig {
    pub fn pattern(&self) -> ViewPattern {
        make_pattern(self.task)
    }

    /// Sorted `key=value` lines covering the whole resolved state.
    pub fn render_resolved(&self) -> String {
        let mut lines: Vec<String> = self
            .net
            .canonical_text()
            .lines()
            .map(|l| l.to_string())
            .collect();
        lines.push(format!("task={}", self.task.name()));
        lines.push(format!("batch_size={}", self.train.batch_size));
        lines.push(format!("patch_size={}", self.train.patch_size));
        lines.push(format!("learning_rate={}", self.train.learning_rate));
        lines.push(format!("beta1={}", self.train.beta1));
        lines.push(format!("beta2={}", self.train.beta2));
        lines.push(format!("epsilon={}", self.train.epsilon));
        lines.push(format!("iterations={}", self.train.iterations));
        lines.push(format!("seed={}", self.train.seed));
        lines.push(format!("checkpoint_every={}", self.train.checkpoint_every));
        lines.push(format!(
            "loss_reduction={}",
            match self.train.loss_reduction {
                Reduction::Mean => "mean",
                Reduction::Sum => "sum",
            }
        ));
        if let Some(p) = &self.dataset {
            lines.push(format!("dataset={}", p.display()));
        }
        if let Some(p) = &self.out {
            lines.push(format!("out={}", p.display()));
        }
        lines.sort();
        let mut out = String::new();
        for l in lines {
            let _ = writeln!(out, "{l}");
        }
        out
    }
}

fn task_dims(task: Task) -> (usize, usize, usize) {
    let p = make_pattern(task);
    (p.in_rows, p.in_cols, p.n_out())
}

/// Parse a config file: one `key = value` per line, `#` starts a comment.
pub fn parse_config_file(path: &Path) -> Result<Vec<(String, String)>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| validation(format!("cannot read config {}: {e}", path.display())))?;
    let mut entries = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            validation(format!(
                "{}:{}: expected 'key = value', got '{raw}'",
                path.display(),
                lineno + 1
            ))
        })?;
        entries.push((key.trim().to_string(), value.trim().to_string()));
    }
    Ok(entries)
}

/// Build a resolved config. `entries` are applied in order (file first,
/// then flags), except that `preset` and `task` are expanded before the
/// remaining keys so explicit keys always override preset values.
pub fn resolve(entries: &[(String, String)]) -> Result<RunConfig, CliError> {
    let mut task = Task::From2x2To8x8;
    let mut preset = "tablefit".to_string();
    for (key, value) in entries {
        match key.as_str() {
            "task" => {
                task = Task::parse(value)
                    .ok_or_else(|| validation(format!("unknown task '{value}'")))?;
            }
            "preset" => {
                preset = value.clone();
            }
            _ => {}
        }
    }
    let (u0, v0, n_out) = task_dims(task);
    let mut net = NetworkConfig::preset(&preset, u0, v0, n_out)
        .ok_or_else(|| validation(format!("unknown preset '{preset}'")))?;
    let mut train = TrainConfig::default();
    let mut dataset = None;
    let mut out = None;

    let parse_usize = |key: &str, value: &str| -> Result<usize, CliError> {
        value
            .parse::<usize>()
            .map_err(|_| validation(format!("{key} must be an unsigned integer, got '{value}'")))
    };
    let parse_u64 = |key: &str, value: &str| -> Result<u64, CliError> {
        value
            .parse::<u64>()
            .map_err(|_| validation(format!("{key} must be an unsigned integer, got '{value}'")))
    };
    let parse_f64 = |key: &str, value: &str| -> Result<f64, CliError> {
        value
            .parse::<f64>()
            .map_err(|_| validation(format!("{key} must be a number, got '{value}'")))
    };
    let parse_bool = |key: &str, value: &str| -> Result<bool, CliError> {
        match value {
            "true" | "1" | "on" => Ok(true),
            "false" | "0" | "off" => Ok(false),
            _ => Err(validation(format!("{key} must be a bool, got '{value}'"))),
        }
    };

    for (key, value) in entries {
        match key.as_str() {
            "task" | "preset" => {}
            "n_cb" => net.n_cb = parse_usize(key, value)?,
            "n_s" => net.n_s = parse_usize(key, value)?,
            "n_a" => net.n_a = parse_usize(key, value)?,
            "growth" => net.growth = parse_usize(key, value)?,
            "connect_spatial" => net.connect_spatial = parse_bool(key, value)?,
            "connect_angular" => net.connect_angular = parse_bool(key, value)?,
            "connect_image" => net.connect_image = parse_bool(key, value)?,
            "bottleneck_kernel" => {
                net.bottleneck_kernel = BottleneckKernel::parse(value).ok_or_else(|| {
                    validation(format!("bottleneck_kernel must be 1x1 or 3x3, got '{value}'"))
                })?;
            }
            "bottleneck_channels" => net.bottleneck_channels = parse_usize(key, value)?,
            "activation" => {
                net.activation = match value.as_str() {
                    "relu" => Activation::Relu,
                    "identity" => Activation::Identity,
                    _ => {
                        return Err(validation(format!(
                            "activation must be relu or identity, got '{value}'"
                        )))
                    }
                };
            }
            "batch_size" => train.batch_size = parse_usize(key, value)?,
            "patch_size" => train.patch_size = parse_usize(key, value)?,
            "learning_rate" => train.learning_rate = parse_f64(key, value)?,
            "beta1" => train.beta1 = parse_f64(key, value)?,
            "beta2" => train.beta2 = parse_f64(key, value)?,
            "epsilon" => train.epsilon = parse_f64(key, value)?,
            "iterations" => train.iterations = parse_u64(key, value)?,
            "seed" => train.seed = parse_u64(key, value)?,
            "checkpoint_every" => train.checkpoint_every = parse_u64(key, value)?,
            "loss_reduction" => {
                train.loss_reduction = match value.as_str() {
                    "mean" => Reduction::Mean,
                    "sum" => Reduction::Sum,
                    _ => {
                        return Err(validation(format!(
                            "loss_reduction must be mean or sum, got '{value}'"
                        )))
                    }
                };
            }
            "dataset" => dataset = Some(PathBuf::from(value)),
            "out" => out = Some(PathBuf::from(value)),
            _ => return Err(validation(format!("unknown config key '{key}'"))),
        }
    }

    // custom architecture edits invalidate the preset label
    let (bk, bc) = match preset.as_str() {
        "text" => (BottleneckKernel::K1x1, 96),
        _ => (BottleneckKernel::K3x3, 32),
    };
    let preset_net = NetworkConfig::preset(&preset, u0, v0, n_out).unwrap();
    if net.n_cb != preset_net.n_cb
        || net.n_s != preset_net.n_s
        || net.n_a != preset_net.n_a
        || net.growth != preset_net.growth
        || net.connect_spatial != preset_net.connect_spatial
        || net.connect_angular != preset_net.connect_angular
        || net.connect_image != preset_net.connect_image
        || net.bottleneck_kernel != bk
        || net.bottleneck_channels != bc
        || net.activation != preset_net.activation
    {
        net.preset = "custom".to_string();
    }

    net.validate().map_err(|e| validation(e))?;
    train.validate().map_err(|e| validation(e))?;
    Ok(RunConfig {
        net,
        train,
        task,
        dataset,
        out,
    })
}

/// Split repeated `--set key=value` flags into entries.
pub fn parse_overrides(sets: &[String]) -> Result<Vec<(String, String)>, CliError> {
    sets.iter()
        .map(|s| {
            s.split_once('=')
                .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                .ok_or_else(|| validation(format!("--set expects key=value, got '{s}'")))
        })
        .collect()
}
