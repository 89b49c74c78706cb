//! A desk-scale laboratory for masked-diffusion decoding.
//!
//! The crate decodes fixed-length token sequences against small, exactly
//! enumerable joint distributions instead of a neural denoiser. Because the
//! ground-truth conditionals are available in closed form, every inference
//! strategy — random unmasking, confidence and margin selection, semi-
//! autoregressive blocks, dynamic blocks, and block-ensemble majority voting —
//! can be checked against brute-force oracles.
//!
//! Module map:
//!
//! - [`vocab`], [`seq`], [`dist`], [`schedule`], [`trajectory`]: shared
//!   domain types (sequences, masks, distributions, reveal schedules).
//! - [`denoiser`]: the conditional model, with an exact enumerator over a
//!   factored joint and a biased variant that over-predicts the trailing
//!   filler token.
//! - [`policy`]: constructors for every unmasking policy.
//! - [`decode`]: the predict–fix–remask inference engine and the collapse
//!   detector.
//! - [`mixture`]: exact and Monte-Carlo mixture-of-experts aggregation.
//! - [`hex`]: block-ensemble decoding with majority vote, tie-breaking, and
//!   likelihood-based selection baselines.
//! - [`harness`]: synthetic task families, the answer parser, metrics, and
//!   the experiment grid runner.

pub mod decode;
pub mod denoiser;
pub mod dist;
pub mod harness;
pub mod hex;
pub mod mixture;
pub mod policy;
pub mod rng;
pub mod schedule;
pub mod seq;
pub mod stats;
pub mod trajectory;
pub mod vocab;

pub use decode::{decode, detect_collapse, CollapseReport, DecodeError, DecodeRun};
pub use denoiser::{BiasSpec, Denoiser, DenoiserError, Factor, FactorModel};
pub use dist::TokenDistribution;
pub use harness::{
    generate_tasks, parse_answer, run_grid, GridConfig, GridError, MetricsRow, Task, TaskFamily,
};
pub use hex::{bon_vote, break_tie, hex_decode, nll_select, Answer, ExpertConfig, TieRule, VoteRecord};
pub use mixture::{majority_mode, mix_exact, mix_mc, ExpertContext};
pub use policy::{PolicyConfig, PolicyError, PolicyKind, WithinBlock};
pub use schedule::{validate_schedule, Schedule, ScheduleKind, ScheduleReport};
pub use seq::TokenSeq;
pub use trajectory::{trajectory_logprob, Trajectory, TrajectoryError, TrajectoryStep};
pub use vocab::{PromptId, Token, Vocabulary};
