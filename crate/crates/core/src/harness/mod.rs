//! Benchmark harness: task families, answer parsing, metrics, and the
//! experiment grid runner.

mod grid;
mod metrics;
mod parse;
mod task;

pub use grid::{
    load_tasks, run_grid, run_grid_from_toml, write_outputs, GridConfig, GridError, GridOutcome,
    StrategySpec, TaskSource,
};
pub use metrics::{
    strip_latency_column, write_metrics_csv, ItemRecord, MetricsRow, METRICS_HEADER,
    METRICS_SCHEMA,
};
pub use parse::{parse_answer, parse_answer_tokens};
pub use task::{
    generate_tasks, gold_answer, telephone_toy, Task, TaskError, TaskFamily,
    DISTRACTOR_TAIL_BOOST, FILLER_LEAK,
};
