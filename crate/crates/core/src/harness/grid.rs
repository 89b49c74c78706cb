//! Declarative experiment grids: a TOML config naming tasks and strategies,
//! one metrics row per strategy.
//!
//! Cell seeds derive from `(grid seed, strategy index, task index)`, so the
//! parallel runner and the serial runner produce identical results; output
//! rows follow config order either way. Latency is wall-clock around the
//! decode calls only.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::Deserialize;
use thiserror::Error;

use crate::decode::{decode, detect_collapse, DecodeError, DecodeRun, DEFAULT_COLLAPSE_THRESHOLD};
use crate::hex::{bon_vote, hex_decode, nll_select, ExpertConfig, HexError, TieRule, VoteRecord};
use crate::policy::{PolicyConfig, PolicyKind, WithinBlock};
use crate::rng::{derive_seed, rng_from_seed};
use crate::trajectory::TrajectoryRecord;

use super::metrics::{write_metrics_csv, ItemRecord, MetricsRow};
use super::parse::parse_answer;
use super::task::{generate_tasks, Task, TaskError, TaskFamily};

#[derive(Debug, Error)]
pub enum GridError {
    #[error("config: {0}")]
    Config(String),
    #[error("tasks: specify either `family` (+ `count`) or `dir`, not both")]
    BadTaskSource,
    #[error("strategy `{strategy}`: {msg}")]
    BadStrategy { strategy: String, msg: String },
    #[error(transparent)]
    Task(#[from] TaskError),
    #[error(transparent)]
    Hex(#[from] HexError),
    #[error(transparent)]
    Decode(#[from] DecodeError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

fn default_temperature() -> f64 {
    0.9
}

fn default_seeds() -> usize {
    1
}

/// Where the grid's tasks come from: a generated family or a directory of
/// task files.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSource {
    #[serde(default)]
    pub family: Option<String>,
    #[serde(default)]
    pub count: Option<usize>,
    #[serde(default)]
    pub dir: Option<PathBuf>,
}

/// One strategy of the comparison grid.
#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StrategySpec {
    Random {
        #[serde(default = "default_temperature")]
        temperature: f64,
    },
    TopK {
        #[serde(default = "default_temperature")]
        temperature: f64,
    },
    TopKMargin {
        #[serde(default = "default_temperature")]
        temperature: f64,
    },
    SemiAr {
        block_size: usize,
        #[serde(default = "default_temperature")]
        temperature: f64,
        #[serde(default)]
        within_block: WithinBlock,
    },
    SingleBlock {
        #[serde(default = "default_temperature")]
        temperature: f64,
        #[serde(default)]
        within_block: WithinBlock,
    },
    Dynamic {
        #[serde(default = "default_temperature")]
        temperature: f64,
        #[serde(default)]
        within_block: WithinBlock,
    },
    Hex {
        #[serde(default)]
        blocks: Vec<usize>,
        #[serde(default = "default_seeds")]
        seeds: usize,
        /// Number of dynamic-block experts; replaces `blocks` when set.
        #[serde(default)]
        dynamic: usize,
        #[serde(default = "default_temperature")]
        temperature: f64,
        #[serde(default)]
        within_block: WithinBlock,
        tie: TieRule,
    },
    Bon {
        samples: usize,
        #[serde(default = "default_temperature")]
        temperature: f64,
        #[serde(default)]
        within_block: WithinBlock,
        #[serde(default)]
        tie: Option<TieRule>,
    },
    Nll {
        #[serde(default)]
        blocks: Vec<usize>,
        #[serde(default = "default_seeds")]
        seeds: usize,
        #[serde(default)]
        dynamic: usize,
        #[serde(default = "default_temperature")]
        temperature: f64,
        #[serde(default)]
        within_block: WithinBlock,
        #[serde(default)]
        length_normalized: bool,
    },
}

impl StrategySpec {
    /// Stable display name used in CSV rows and item records.
    pub fn name(&self) -> String {
        fn join(blocks: &[usize]) -> String {
            blocks
                .iter()
                .map(|b| b.to_string())
                .collect::<Vec<_>>()
                .join("-")
        }
        match self {
            StrategySpec::Random { .. } => "random".into(),
            StrategySpec::TopK { .. } => "top_k".into(),
            StrategySpec::TopKMargin { .. } => "top_k_margin".into(),
            StrategySpec::SemiAr { block_size, .. } => format!("semi_ar_b{block_size}"),
            StrategySpec::SingleBlock { .. } => "single_block".into(),
            StrategySpec::Dynamic { .. } => "dynamic".into(),
            StrategySpec::Hex {
                blocks,
                seeds,
                dynamic,
                tie,
                ..
            } => {
                if *dynamic > 0 {
                    format!("hex_dyn{dynamic}_tie_{}", tie.as_str())
                } else {
                    format!("hex_b{}_s{seeds}_tie_{}", join(blocks), tie.as_str())
                }
            }
            StrategySpec::Bon { samples, .. } => format!("bon{samples}"),
            StrategySpec::Nll {
                blocks,
                seeds,
                dynamic,
                length_normalized,
                ..
            } => {
                let norm = if *length_normalized { "_norm" } else { "" };
                if *dynamic > 0 {
                    format!("nll_dyn{dynamic}{norm}")
                } else {
                    format!("nll_b{}_s{seeds}{norm}", join(blocks), seeds = seeds)
                }
            }
        }
    }

    /// Decodes per item.
    fn decodes_per_item(&self) -> usize {
        match self {
            StrategySpec::Random { .. }
            | StrategySpec::TopK { .. }
            | StrategySpec::TopKMargin { .. }
            | StrategySpec::SemiAr { .. }
            | StrategySpec::SingleBlock { .. }
            | StrategySpec::Dynamic { .. } => 1,
            StrategySpec::Hex {
                blocks,
                seeds,
                dynamic,
                ..
            }
            | StrategySpec::Nll {
                blocks,
                seeds,
                dynamic,
                ..
            } => {
                if *dynamic > 0 {
                    *dynamic
                } else {
                    blocks.len() * seeds
                }
            }
            StrategySpec::Bon { samples, .. } => *samples,
        }
    }

    fn seeds(&self) -> usize {
        match self {
            StrategySpec::Hex { seeds, .. } | StrategySpec::Nll { seeds, .. } => *seeds,
            _ => 1,
        }
    }

    fn validate(&self, n: usize) -> Result<(), GridError> {
        let bad = |msg: String| GridError::BadStrategy {
            strategy: self.name(),
            msg,
        };
        match self {
            StrategySpec::Hex {
                blocks, dynamic, ..
            }
            | StrategySpec::Nll {
                blocks, dynamic, ..
            } => {
                if (*dynamic > 0) == !blocks.is_empty() {
                    return Err(bad("set exactly one of `blocks` and `dynamic`".into()));
                }
                if let Some(&b) = blocks.iter().find(|&&b| b == 0 || b > n) {
                    return Err(bad(format!("block size {b} is out of range for n = {n}")));
                }
            }
            StrategySpec::SemiAr { block_size, .. } => {
                if *block_size == 0 || *block_size > n {
                    return Err(bad(format!(
                        "block size {block_size} is out of range for n = {n}"
                    )));
                }
            }
            StrategySpec::Bon { samples, .. } => {
                if *samples == 0 {
                    return Err(bad("`samples` must be positive".into()));
                }
            }
            _ => {}
        }
        Ok(())
    }
}

/// A full grid description (the TOML file's contents).
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub seed: u64,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub parallel: bool,
    #[serde(default)]
    pub per_item_records: bool,
    #[serde(default)]
    pub dump_trajectories: bool,
    pub tasks: TaskSource,
    pub strategies: Vec<StrategySpec>,
}

impl GridConfig {
    /// Parse a TOML config; errors name the offending field.
    pub fn from_toml(text: &str) -> Result<Self, GridError> {
        toml::from_str(text).map_err(|e| GridError::Config(e.to_string()))
    }
}

/// Materialize the task set: generate a family or read every `*.task` file
/// in a directory (sorted by file name).
pub fn load_tasks(source: &TaskSource, seed: u64) -> Result<Vec<Task>, GridError> {
    match (&source.family, &source.dir) {
        (Some(family), None) => {
            let family: TaskFamily = family
                .parse()
                .map_err(GridError::Config)?;
            let count = source.count.ok_or(GridError::BadTaskSource)?;
            let mut rng = rng_from_seed(derive_seed(seed, &[0x7a5c]));
            Ok(generate_tasks(family, count, &mut rng))
        }
        (None, Some(dir)) => {
            let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == "task"))
                .collect();
            paths.sort();
            let mut tasks = Vec::with_capacity(paths.len());
            for p in paths {
                let text = std::fs::read_to_string(&p)?;
                tasks.push(Task::from_file_text(&text)?);
            }
            Ok(tasks)
        }
        _ => Err(GridError::BadTaskSource),
    }
}

struct ItemOutcome {
    record: ItemRecord,
    collapsed_decodes: usize,
    total_decodes: usize,
    latency_s: f64,
    trajectories: Vec<TrajectoryRecord>,
}

/// Everything one grid run produces.
#[derive(Debug)]
pub struct GridOutcome {
    pub rows: Vec<MetricsRow>,
    pub items: Vec<ItemRecord>,
    pub trajectories: Vec<TrajectoryRecord>,
    pub csv: String,
}

/// Run every strategy over every task.
pub fn run_grid(config: &GridConfig, tasks: &[Task]) -> Result<GridOutcome, GridError> {
    if let Some(task) = tasks.first() {
        for strategy in &config.strategies {
            strategy.validate(task.n())?;
        }
    }
    let mut rows = Vec::with_capacity(config.strategies.len());
    let mut items = Vec::new();
    let mut trajectories = Vec::new();

    for (si, strategy) in config.strategies.iter().enumerate() {
        let cell = |(ti, task): (usize, &Task)| -> Result<ItemOutcome, GridError> {
            let seed = derive_seed(config.seed, &[si as u64, ti as u64]);
            run_cell(strategy, task, seed, config.dump_trajectories)
        };
        let outcomes: Result<Vec<ItemOutcome>, GridError> = if config.parallel {
            tasks.par_iter().enumerate().map(cell).collect()
        } else {
            tasks.iter().enumerate().map(cell).collect()
        };
        let outcomes = outcomes?;

        let count = outcomes.len().max(1) as f64;
        let correct = outcomes.iter().filter(|o| o.record.correct).count();
        let ties = outcomes.iter().filter(|o| o.record.tie).count();
        let collapsed: usize = outcomes.iter().map(|o| o.collapsed_decodes).sum();
        let decodes: usize = outcomes.iter().map(|o| o.total_decodes).sum();
        let latency: f64 = outcomes.iter().map(|o| o.latency_s).sum();
        rows.push(MetricsRow {
            strategy: strategy.name(),
            b: strategy.decodes_per_item(),
            seeds: strategy.seeds(),
            accuracy: correct as f64 / count,
            tie_rate: ties as f64 / count,
            collapse_rate: collapsed as f64 / decodes.max(1) as f64,
            mean_latency_s: latency / count,
        });
        for mut o in outcomes {
            if config.per_item_records {
                items.push(o.record);
            }
            trajectories.append(&mut o.trajectories);
        }
    }

    let csv = write_metrics_csv(&rows);
    Ok(GridOutcome {
        rows,
        items,
        trajectories,
        csv,
    })
}

fn run_cell(
    strategy: &StrategySpec,
    task: &Task,
    seed: u64,
    dump: bool,
) -> Result<ItemOutcome, GridError> {
    let vocab = task.vocab().clone();
    let parser = |seq: &crate::seq::TokenSeq| parse_answer(seq, &vocab);
    let k = task.reveal_per_step;

    let single = |kind: PolicyKind,
                  temperature: f64,
                  within: WithinBlock|
     -> Result<ItemOutcome, GridError> {
        let policy = PolicyConfig::new(kind, k, seed).with_within_block(within);
        let run = DecodeRun::new(task.denoiser(), task.prompt, policy, temperature);
        let start = Instant::now();
        let trajectory = decode(&run)?;
        let latency_s = start.elapsed().as_secs_f64();
        let parsed = parser(&trajectory.final_tokens);
        let collapse = detect_collapse(
            &trajectory.final_tokens,
            &vocab,
            DEFAULT_COLLAPSE_THRESHOLD,
        );
        let correct = parsed.as_ref() == Some(&task.gold);
        Ok(ItemOutcome {
            record: ItemRecord {
                task_id: task.task_id.clone(),
                strategy: strategy.name(),
                winner: parsed.map(|a| a.to_string()),
                correct,
                tie: false,
                collapse: collapse.collapsed,
            },
            collapsed_decodes: collapse.collapsed as usize,
            total_decodes: 1,
            latency_s,
            trajectories: if dump {
                vec![TrajectoryRecord::from(&trajectory)]
            } else {
                Vec::new()
            },
        })
    };

    let ensemble = |record: VoteRecord,
                    winner: Option<crate::hex::Answer>,
                    latency_s: f64|
     -> ItemOutcome {
        let collapsed_decodes = record
            .candidates
            .iter()
            .filter(|c| {
                detect_collapse(c.output(), &vocab, DEFAULT_COLLAPSE_THRESHOLD).collapsed
            })
            .count();
        let total_decodes = record.candidates.len();
        let correct = winner.as_ref() == Some(&task.gold);
        let trajectories = if dump {
            record
                .candidates
                .iter()
                .map(|c| TrajectoryRecord::from(&c.trajectory))
                .collect()
        } else {
            Vec::new()
        };
        ItemOutcome {
            record: ItemRecord {
                task_id: task.task_id.clone(),
                strategy: strategy.name(),
                winner: winner.map(|a| a.to_string()),
                correct,
                tie: record.tie,
                collapse: collapsed_decodes > 0,
            },
            collapsed_decodes,
            total_decodes,
            latency_s,
            trajectories,
        }
    };

    match strategy {
        StrategySpec::Random { temperature } => {
            single(PolicyKind::Random, *temperature, WithinBlock::Confidence)
        }
        StrategySpec::TopK { temperature } => {
            single(PolicyKind::TopK, *temperature, WithinBlock::Confidence)
        }
        StrategySpec::TopKMargin { temperature } => {
            single(PolicyKind::TopKMargin, *temperature, WithinBlock::Confidence)
        }
        StrategySpec::SemiAr {
            block_size,
            temperature,
            within_block,
        } => single(
            PolicyKind::SemiAr {
                block_size: *block_size,
            },
            *temperature,
            *within_block,
        ),
        StrategySpec::SingleBlock {
            temperature,
            within_block,
        } => single(PolicyKind::SingleBlock, *temperature, *within_block),
        StrategySpec::Dynamic {
            temperature,
            within_block,
        } => single(PolicyKind::Dynamic, *temperature, *within_block),
        StrategySpec::Hex {
            blocks,
            seeds,
            dynamic,
            temperature,
            within_block,
            tie,
        } => {
            let experts = if *dynamic > 0 {
                ExpertConfig::dynamic_grid(*dynamic, *temperature, *within_block, seed)
            } else {
                ExpertConfig::grid(blocks, *seeds, *temperature, *within_block, seed)
            };
            let start = Instant::now();
            let record = hex_decode(
                task.denoiser(),
                task.prompt,
                k,
                &experts,
                parser,
                *tie,
                Some(&task.gold),
            )?;
            let latency_s = start.elapsed().as_secs_f64();
            let winner = record.winner.clone();
            Ok(ensemble(record, winner, latency_s))
        }
        StrategySpec::Bon {
            samples,
            temperature,
            within_block,
            tie,
        } => {
            let start = Instant::now();
            let record = bon_vote(
                task.denoiser(),
                task.prompt,
                k,
                *samples,
                *temperature,
                *within_block,
                seed,
                parser,
                tie.unwrap_or(TieRule::First),
                Some(&task.gold),
            )?;
            let latency_s = start.elapsed().as_secs_f64();
            let winner = record.winner.clone();
            Ok(ensemble(record, winner, latency_s))
        }
        StrategySpec::Nll {
            blocks,
            seeds,
            dynamic,
            temperature,
            within_block,
            length_normalized,
        } => {
            let experts = if *dynamic > 0 {
                ExpertConfig::dynamic_grid(*dynamic, *temperature, *within_block, seed)
            } else {
                ExpertConfig::grid(blocks, *seeds, *temperature, *within_block, seed)
            };
            let start = Instant::now();
            let record = hex_decode(
                task.denoiser(),
                task.prompt,
                k,
                &experts,
                parser,
                TieRule::First,
                Some(&task.gold),
            )?;
            let latency_s = start.elapsed().as_secs_f64();
            let winner = nll_select(&record.candidates, *length_normalized);
            Ok(ensemble(record, winner, latency_s))
        }
    }
}

/// Write `metrics.csv` (and `items.jsonl`, `trajectories.jsonl` when
/// populated) into `dir`.
pub fn write_outputs(outcome: &GridOutcome, dir: &Path) -> Result<PathBuf, GridError> {
    std::fs::create_dir_all(dir)?;
    let csv_path = dir.join("metrics.csv");
    std::fs::write(&csv_path, &outcome.csv)?;
    if !outcome.items.is_empty() {
        let mut buf = String::new();
        for item in &outcome.items {
            buf.push_str(&serde_json::to_string(item).expect("serializable record"));
            buf.push('\n');
        }
        std::fs::write(dir.join("items.jsonl"), buf)?;
    }
    if !outcome.trajectories.is_empty() {
        let mut buf = String::new();
        for t in &outcome.trajectories {
            buf.push_str(&serde_json::to_string(t).expect("serializable record"));
            buf.push('\n');
        }
        std::fs::write(dir.join("trajectories.jsonl"), buf)?;
    }
    Ok(csv_path)
}

/// Convenience wrapper: parse config text, load tasks, run.
pub fn run_grid_from_toml(text: &str) -> Result<GridOutcome, GridError> {
    let config = GridConfig::from_toml(text)?;
    let tasks = load_tasks(&config.tasks, config.seed)?;
    run_grid(&config, &tasks)
}
