use std::path::{Path, PathBuf};
use std::time::Instant;

use minibatch_sfl::algorithms::{run, Algorithm};
use minibatch_sfl::protocol::Evaluation;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::{CliError, Result};
use crate::runlog::{content_hash, render, write_atomic};
use crate::task::{prepare, train_config};

/// File name of the per-sweep summary.
pub const SUMMARY_FILE: &str = "summary.json";

/// One `(algorithm, r, L_c, seed)` run of a sweep. Algorithms that train
/// the whole model on clients or centrally have no cut.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub algorithm: Algorithm,
    pub r: f64,
    pub cut: Option<usize>,
    pub seed: u64,
}

impl Cell {
    pub fn file_name(&self) -> String {
        let r = format!("{}", self.r).replace('.', "p");
        match self.cut {
            Some(c) => format!("{}_r{r}_lc{c}_s{}.csv", self.algorithm, self.seed),
            None => format!("{}_r{r}_s{}.csv", self.algorithm, self.seed),
        }
    }

    /// The config narrowed to this cell alone.
    pub fn config(&self, base: &ExperimentConfig) -> ExperimentConfig {
        let mut c = base.clone();
        c.algorithms = vec![self.algorithm];
        c.r_values = vec![self.r];
        if let Some(cut) = self.cut {
            c.cuts = vec![cut];
        }
        c.seeds = vec![self.seed];
        c.output_dir = None;
        c.workers = None;
        c
    }
}

/// Cells in a fixed order: algorithm, then r, then cut, then seed.
pub fn plan_cells(cfg: &ExperimentConfig) -> Vec<Cell> {
    let mut cells = Vec::new();
    for &algorithm in &cfg.algorithms {
        let cuts: Vec<Option<usize>> = if algorithm.uses_cut() {
            cfg.cuts.iter().map(|&c| Some(c)).collect()
        } else {
            vec![None]
        };
        for &r in &cfg.r_values {
            for &cut in &cuts {
                for &seed in &cfg.seeds {
                    cells.push(Cell {
                        algorithm,
                        r,
                        cut,
                        seed,
                    });
                }
            }
        }
    }
    cells
}

/// Final metrics of one cell, or the error that aborted it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    #[serde(flatten)]
    pub cell: Cell,
    pub file: Option<String>,
    pub final_loss: Option<f64>,
    pub final_accuracy: Option<f64>,
    pub error: Option<String>,
}

/// Seed-mean final metrics of one algorithm laid out on the `r × L_c` grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricGrid {
    pub algorithm: Algorithm,
    pub r_values: Vec<f64>,
    pub cuts: Vec<Option<usize>>,
    /// Indexed `[r][cut]`; `None` when every seed of the cell failed.
    pub mean_final_loss: Vec<Vec<Option<f64>>>,
    pub mean_final_accuracy: Vec<Vec<Option<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub config_hash: String,
    pub config: ExperimentConfig,
    pub cells: Vec<CellResult>,
    pub grids: Vec<MetricGrid>,
}

impl Summary {
    pub fn failures(&self) -> usize {
        self.cells.iter().filter(|c| c.error.is_some()).count()
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }
}

fn mean(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = values.flatten().collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

fn grids(cfg: &ExperimentConfig, results: &[CellResult]) -> Vec<MetricGrid> {
    cfg.algorithms
        .iter()
        .map(|&algorithm| {
            let cuts: Vec<Option<usize>> = if algorithm.uses_cut() {
                cfg.cuts.iter().map(|&c| Some(c)).collect()
            } else {
                vec![None]
            };
            let pick = |r: f64, cut: Option<usize>| {
                results.iter().filter(move |c| {
                    c.cell.algorithm == algorithm && c.cell.r == r && c.cell.cut == cut
                })
            };
            let grid = |f: fn(&CellResult) -> Option<f64>| {
                cfg.r_values
                    .iter()
                    .map(|&r| cuts.iter().map(|&c| mean(pick(r, c).map(f))).collect())
                    .collect()
            };
            MetricGrid {
                algorithm,
                r_values: cfg.r_values.clone(),
                cuts: cuts.clone(),
                mean_final_loss: grid(|c| c.final_loss),
                mean_final_accuracy: grid(|c| c.final_accuracy),
            }
        })
        .collect()
}

fn run_cell(cfg: &ExperimentConfig, cell: &Cell, out_dir: &Path) -> Result<CellResult> {
    let start = Instant::now();
    let data = prepare(cfg, cell.r, cell.seed)?;
    let cut = cell.cut.unwrap_or(data.layers.len());
    let train = train_config(cfg, &data, cell.algorithm, cut, cell.seed);
    let eval = match &data.w_star {
        Some(w) => Evaluation::on(&data.eval).with_optimum(w),
        None => Evaluation::on(&data.eval),
    };
    let log = run(&train, &data.train, &data.shards, &eval)?;
    let wall = cfg.record_wall_time.then(|| start.elapsed().as_secs_f64());
    let file = cell.file_name();
    write_atomic(&out_dir.join(&file), &render(&cell.config(cfg), &log, wall))?;
    let last = log.last();
    Ok(CellResult {
        cell: *cell,
        file: Some(file),
        final_loss: Some(last.loss),
        final_accuracy: last.accuracy,
        error: None,
    })
}

/// Runs every cell, writes one CSV per cell and the summary, and returns
/// the summary. Training failures are recorded per cell; I/O failures abort.
pub fn run_sweep(cfg: &ExperimentConfig, out_dir: &Path) -> Result<Summary> {
    cfg.validate()?;
    std::fs::create_dir_all(out_dir).map_err(|e| CliError::io(out_dir, e))?;
    let cells = plan_cells(cfg);
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(w) = cfg.workers {
        pool = pool.num_threads(w);
    }
    let pool = pool
        .build()
        .map_err(|e| CliError::config("workers", e.to_string()))?;
    let results: Vec<CellResult> = pool.install(|| {
        cells
            .par_iter()
            .map(|cell| match run_cell(cfg, cell, out_dir) {
                Ok(r) => Ok(r),
                Err(e @ CliError::Io { .. }) => Err(e),
                Err(e) => Ok(CellResult {
                    cell: *cell,
                    file: None,
                    final_loss: None,
                    final_accuracy: None,
                    error: Some(e.to_string()),
                }),
            })
            .collect::<Result<_>>()
    })?;
    let mut config = cfg.clone();
    config.output_dir = None;
    config.workers = None;
    let summary = Summary {
        config_hash: content_hash(&config.to_json()),
        grids: grids(&config, &results),
        config,
        cells: results,
    };
    let json = serde_json::to_string_pretty(&summary).expect("summary serializes");
    write_atomic(&out_dir.join(SUMMARY_FILE), &(json + "\n"))?;
    Ok(summary)
}

/// Re-runs the single cell recorded in a run log and reports whether the
/// regenerated file is byte-identical.
pub fn replay(path: &Path) -> Result<bool> {
    let cfg = crate::runlog::read_config(path)?;
    let cells = plan_cells(&cfg);
    let [cell] = cells.as_slice() else {
        return Err(CliError::Parse {
            path: path.to_path_buf(),
            message: format!("header describes {} cells, not one", cells.len()),
        });
    };
    let dir = std::env::temp_dir().join(format!("msfl-replay-{}", std::process::id()));
    std::fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    let again = run_cell(&cfg, cell, &dir).and_then(|r| {
        let p: PathBuf = dir.join(r.file.expect("successful cells have a file"));
        std::fs::read(&p).map_err(|e| CliError::io(&p, e))
    });
    let _ = std::fs::remove_dir_all(&dir);
    let original = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(again? == original)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cells_cover_the_grid_once() {
        let mut cfg = ExperimentConfig {
            r_values: vec![0.0, 0.95],
            cuts: vec![1, 2],
            seeds: vec![0, 1, 2],
            ..ExperimentConfig::default()
        };
        assert_eq!(plan_cells(&cfg).len(), 12);
        cfg.algorithms = vec![Algorithm::MinibatchSfl, Algorithm::Fedavg];
        let cells = plan_cells(&cfg);
        assert_eq!(cells.len(), 12 + 6);
        let mut names: Vec<String> = cells.iter().map(Cell::file_name).collect();
        names.sort();
        names.dedup();
        assert_eq!(names.len(), 18);
    }

    #[test]
    fn file_names_spell_out_the_cell() {
        let c = Cell {
            algorithm: Algorithm::SflV2,
            r: 0.95,
            cut: Some(2),
            seed: 7,
        };
        assert_eq!(c.file_name(), "sfl_v2_r0p95_lc2_s7.csv");
        let c = Cell {
            algorithm: Algorithm::Fedavg,
            r: 0.0,
            cut: None,
            seed: 0,
        };
        assert_eq!(c.file_name(), "fedavg_r0_s0.csv");
    }

    #[test]
    fn grid_means_skip_failed_seeds() {
        assert_eq!(mean([Some(1.0), None, Some(3.0)].into_iter()), Some(2.0));
        assert_eq!(mean([None, None].into_iter()), None);
    }
}
