use std::path::{Path, PathBuf};

use minibatch_sfl::algorithms::{Algorithm, LogOptions, ScheduleParams};
use minibatch_sfl::data::WeightsMode;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "MSFL_OUT_DIR";
/// Output directory when neither the config, a flag nor the environment sets one.
pub const DEFAULT_OUT_DIR: &str = "msfl-out";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    #[default]
    SyntheticClassification,
    Quadratic,
    IdxFiles,
}

/// Gaussian class clusters split into a training and a held-out part.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticSpec {
    pub dim: usize,
    pub classes: usize,
    pub per_class: usize,
    pub eval_per_class: usize,
    /// Per-coordinate noise std around the class centers.
    pub spread: f64,
    pub hidden: Vec<usize>,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            dim: 20,
            classes: 10,
            per_class: 200,
            eval_per_class: 50,
            spread: 1.0,
            hidden: vec![32, 32],
        }
    }
}

/// Per-client quadratic objectives. The non-IID ratio does not apply: each
/// client's points come from its own center.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QuadraticSpec {
    pub dim: usize,
    pub per_client: usize,
    pub noise: f64,
    pub center_spread: f64,
}

impl Default for QuadraticSpec {
    fn default() -> Self {
        Self {
            dim: 2,
            per_client: 200,
            noise: 1.0,
            center_spread: 0.1,
        }
    }
}

/// IDX image and label files. Evaluation uses the training files unless a
/// separate pair is given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IdxSpec {
    pub images: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub eval_images: Option<PathBuf>,
    pub eval_labels: Option<PathBuf>,
    pub hidden: Vec<usize>,
}

impl Default for IdxSpec {
    fn default() -> Self {
        Self {
            images: None,
            labels: None,
            eval_images: None,
            eval_labels: None,
            hidden: vec![32, 32],
        }
    }
}

/// A sweep over algorithms, non-IID ratios, cut layers and seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub task: TaskKind,
    pub algorithms: Vec<Algorithm>,
    pub clients: usize,
    pub rounds: usize,
    pub local_epochs: usize,
    pub batches_per_epoch: usize,
    pub batch_size: usize,
    pub r_values: Vec<f64>,
    pub cuts: Vec<usize>,
    pub seeds: Vec<u64>,
    /// Fixes the data draw across seeds; by default each seed draws its own.
    pub data_seed: Option<u64>,
    pub weights: WeightsMode,
    pub sfl_v2_shuffle: bool,
    pub schedule: ScheduleParams,
    /// Evaluation cadence and extra diagnostics.
    pub log: LogOptions,
    pub output_dir: Option<PathBuf>,
    /// Upper bound on worker threads; all cores by default.
    pub workers: Option<usize>,
    /// Adds a wall-time footer line, which makes reruns differ.
    pub record_wall_time: bool,
    pub synthetic: SyntheticSpec,
    pub quadratic: QuadraticSpec,
    pub idx: IdxSpec,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            task: TaskKind::default(),
            algorithms: vec![Algorithm::MinibatchSfl],
            clients: 10,
            rounds: 1,
            local_epochs: 5,
            batches_per_epoch: 1,
            batch_size: 32,
            r_values: vec![0.0],
            cuts: vec![1],
            seeds: vec![0],
            data_seed: None,
            weights: WeightsMode::default(),
            sfl_v2_shuffle: false,
            schedule: ScheduleParams::default(),
            log: LogOptions::default(),
            output_dir: None,
            workers: None,
            record_wall_time: false,
            synthetic: SyntheticSpec::default(),
            quadratic: QuadraticSpec::default(),
            idx: IdxSpec::default(),
        }
    }
}

impl ExperimentConfig {
    /// Number of model layers the task implies.
    pub fn num_layers(&self) -> usize {
        match self.task {
            TaskKind::SyntheticClassification => self.synthetic.hidden.len() + 1,
            TaskKind::Quadratic => self.quadratic.dim,
            TaskKind::IdxFiles => self.idx.hidden.len() + 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (key, list_len) in [
            ("algorithms", self.algorithms.len()),
            ("r_values", self.r_values.len()),
            ("cuts", self.cuts.len()),
            ("seeds", self.seeds.len()),
        ] {
            if list_len == 0 {
                return Err(CliError::config(key, "must not be empty"));
            }
        }
        for (key, v) in [
            ("clients", self.clients),
            ("rounds", self.rounds),
            ("local_epochs", self.local_epochs),
            ("batches_per_epoch", self.batches_per_epoch),
            ("batch_size", self.batch_size),
        ] {
            if v == 0 {
                return Err(CliError::config(key, "must be at least 1"));
            }
        }
        for (k, r) in self.r_values.iter().enumerate() {
            if !(0.0..=1.0).contains(r) {
                return Err(CliError::config(
                    format!("r_values[{k}]"),
                    format!("{r} is outside [0, 1]"),
                ));
            }
        }
        let layers = self.num_layers();
        for (k, &c) in self.cuts.iter().enumerate() {
            if c > layers {
                return Err(CliError::config(
                    format!("cuts[{k}]"),
                    format!("L_c = {c} exceeds the {layers} model layers"),
                ));
            }
        }
        if self.workers == Some(0) {
            return Err(CliError::config("workers", "must be at least 1"));
        }
        if self.log.grad_window == Some(0) {
            return Err(CliError::config("log.grad_window", "must be at least 1"));
        }
        self.schedule
            .validate()
            .map_err(|e| CliError::config("schedule", e.to_string()))?;
        match self.task {
            TaskKind::SyntheticClassification => {
                let s = &self.synthetic;
                for (key, v) in [
                    ("synthetic.dim", s.dim),
                    ("synthetic.per_class", s.per_class),
                    ("synthetic.eval_per_class", s.eval_per_class),
                ] {
                    if v == 0 {
                        return Err(CliError::config(key, "must be at least 1"));
                    }
                }
                if s.classes < 2 {
                    return Err(CliError::config("synthetic.classes", "must be at least 2"));
                }
                if !(s.spread >= 0.0 && s.spread.is_finite()) {
                    return Err(CliError::config(
                        "synthetic.spread",
                        "must be finite and nonnegative",
                    ));
                }
                check_widths("synthetic.hidden", &s.hidden)?;
            }
            TaskKind::Quadratic => {
                let q = &self.quadratic;
                if q.dim == 0 {
                    return Err(CliError::config("quadratic.dim", "must be at least 1"));
                }
                if q.per_client == 0 {
                    return Err(CliError::config(
                        "quadratic.per_client",
                        "must be at least 1",
                    ));
                }
                for (key, v) in [
                    ("quadratic.noise", q.noise),
                    ("quadratic.center_spread", q.center_spread),
                ] {
                    if !(v >= 0.0 && v.is_finite()) {
                        return Err(CliError::config(key, "must be finite and nonnegative"));
                    }
                }
            }
            TaskKind::IdxFiles => {
                if self.idx.images.is_none() {
                    return Err(CliError::config("idx.images", "is required for idx_files"));
                }
                if self.idx.labels.is_none() {
                    return Err(CliError::config("idx.labels", "is required for idx_files"));
                }
                if self.idx.eval_images.is_some() != self.idx.eval_labels.is_some() {
                    return Err(CliError::config(
                        "idx.eval_labels",
                        "eval images and labels go together",
                    ));
                }
                check_widths("idx.hidden", &self.idx.hidden)?;
            }
        }
        Ok(())
    }

    /// Removes repeated seeds, keeping first occurrences. Returns how many
    /// were dropped.
    pub fn dedupe_seeds(&mut self) -> usize {
        let before = self.seeds.len();
        let mut seen = std::collections::HashSet::new();
        self.seeds.retain(|s| seen.insert(*s));
        before - self.seeds.len()
    }

    /// Output directory: the explicit override, then the config, then
    /// [`OUT_DIR_ENV`], then [`DEFAULT_OUT_DIR`].
    pub fn resolve_out_dir(&self, flag: Option<&Path>) -> PathBuf {
        flag.map(Path::to_path_buf)
            .or_else(|| self.output_dir.clone())
            .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
    }

    /// Canonical single-line JSON of the fully resolved config.
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

fn check_widths(key: &str, widths: &[usize]) -> Result<()> {
    match widths.iter().position(|&w| w == 0) {
        Some(k) => Err(CliError::config(
            format!("{key}[{k}]"),
            "layer width must be at least 1",
        )),
        None => Ok(()),
    }
}

/// Sets a dotted `key` in `table`, creating intermediate tables. The value
/// is parsed as a TOML value and taken as a bare string if that fails.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<()> {
    let Some((key, raw)) = assignment.split_once('=') else {
        return Err(CliError::config(
            assignment,
            "override must look like key=value",
        ));
    };
    let key = key.trim();
    let raw = raw.trim();
    let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::config(key, "empty key segment"));
    }
    let mut node = table;
    for part in &parts[..parts.len() - 1] {
        let entry = node
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        node = match entry {
            toml::Value::Table(t) => t,
            _ => return Err(CliError::config(key, format!("`{part}` is not a table"))),
        };
    }
    node.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

/// A parsed config and the warnings produced while resolving it.
#[derive(Debug, Clone)]
pub struct Parsed {
    pub config: ExperimentConfig,
    pub warnings: Vec<String>,
}

/// Parses TOML text with `key=value` overrides applied on top, fills
/// defaults, deduplicates seeds and validates.
pub fn parse_config_str(text: &str, overrides: &[String]) -> Result<Parsed> {
    let mut table: toml::Table = toml::from_str(text).map_err(|e| CliError::Parse {
        path: PathBuf::from("<config>"),
        message: e.to_string(),
    })?;
    for o in overrides {
        apply_override(&mut table, o)?;
    }
    let mut config: ExperimentConfig = serde_path_to_error::deserialize(toml::Value::Table(table))
        .map_err(|e| {
            let key = e.path().to_string();
            CliError::config(key, e.into_inner().to_string())
        })?;
    let mut warnings = Vec::new();
    let dropped = config.dedupe_seeds();
    if dropped > 0 {
        warnings.push(format!("dropped {dropped} duplicate seed entries"));
    }
    config.validate()?;
    Ok(Parsed { config, warnings })
}

/// Reads and parses a config file; `None` starts from the defaults.
pub fn parse_config(path: Option<&Path>, overrides: &[String]) -> Result<Parsed> {
    let text = match path {
        Some(p) => std::fs::read_to_string(p).map_err(|e| CliError::io(p, e))?,
        None => String::new(),
    };
    parse_config_str(&text, overrides).map_err(|e| match (e, path) {
        (CliError::Parse { message, .. }, Some(p)) => CliError::Parse {
            path: p.to_path_buf(),
            message,
        },
        (e, _) => e,
    })
}
