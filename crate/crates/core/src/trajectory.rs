//! Realized decode trajectories and their log-likelihood functional.
//!
//! A trajectory records, for every reveal step, which positions were fixed,
//! which tokens they received, and the log-probability the denoiser assigned
//! to each chosen token at that step. The total over all steps is the
//! trajectory log-likelihood used for candidate re-ranking.

use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::schedule::{Schedule, ScheduleKind};
use crate::seq::TokenSeq;
use crate::vocab::Token;

/// Tolerance for the additivity invariant on `total_logprob`.
pub const LOGPROB_TOL: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum TrajectoryError {
    #[error("trajectory is incomplete: {revealed} of {n} positions revealed")]
    Incomplete { revealed: usize, n: usize },
}

/// One reveal step: parallel arrays over the positions fixed at this step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryStep {
    pub step_index: usize,
    pub positions: Vec<usize>,
    pub tokens: Vec<Token>,
    pub logprobs: Vec<f64>,
}

/// A completed (or in-progress) decode run: the realized schedule plus the
/// tokens and per-position log-probabilities captured when each position was
/// fixed.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub kind: ScheduleKind,
    pub steps: Vec<TrajectoryStep>,
    pub final_tokens: TokenSeq,
    /// Running sum of step log-probabilities, accumulated at decode time.
    pub total_logprob: f64,
}

impl Trajectory {
    /// The realized schedule (just the position sets, in step order).
    pub fn schedule(&self) -> Schedule {
        Schedule {
            kind: self.kind,
            steps: self.steps.iter().map(|s| s.positions.clone()).collect(),
        }
    }

    /// Per-position `(position, logprob)` pairs in reveal order.
    pub fn step_logprobs(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.steps
            .iter()
            .flat_map(|s| s.positions.iter().copied().zip(s.logprobs.iter().copied()))
    }

    /// Step index at which `pos` was fixed.
    pub fn reveal_step(&self, pos: usize) -> Option<usize> {
        self.steps
            .iter()
            .position(|s| s.positions.contains(&pos))
    }
}

/// Sum of the recorded per-position log-probabilities. Errors if the
/// trajectory does not cover every position.
pub fn trajectory_logprob(trajectory: &Trajectory) -> Result<f64, TrajectoryError> {
    let n = trajectory.final_tokens.len();
    let revealed: usize = trajectory.steps.iter().map(|s| s.positions.len()).sum();
    if revealed != n || !trajectory.final_tokens.is_complete() {
        return Err(TrajectoryError::Incomplete { revealed, n });
    }
    Ok(trajectory.step_logprobs().map(|(_, lp)| lp).sum())
}

/// Serialized form: one JSON object per line, one line per trajectory. Each
/// step record carries `{step_index, positions[], tokens[], logprobs[]}` with
/// 0-based positions.
#[derive(Debug, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub kind: ScheduleKind,
    pub steps: Vec<TrajectoryStep>,
    pub total_logprob: f64,
}

impl From<&Trajectory> for TrajectoryRecord {
    fn from(t: &Trajectory) -> Self {
        Self {
            kind: t.kind,
            steps: t.steps.clone(),
            total_logprob: t.total_logprob,
        }
    }
}

/// Append `trajectory` as one line of the dump format.
pub fn write_trajectory<W: Write>(w: &mut W, trajectory: &Trajectory) -> io::Result<()> {
    let record = TrajectoryRecord::from(trajectory);
    serde_json::to_writer(&mut *w, &record)?;
    writeln!(w)
}

/// Read every trajectory record from a dump.
pub fn read_trajectories<R: BufRead>(r: R) -> io::Result<Vec<TrajectoryRecord>> {
    let mut out = Vec::new();
    for line in r.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vocab::Vocabulary;

    fn vocab() -> Vocabulary {
        Vocabulary::new(6, 0, 1, 2, 3).unwrap()
    }

    fn toy_trajectory() -> Trajectory {
        let v = vocab();
        let final_tokens = TokenSeq::complete(&v, vec![4, 5, 4]);
        Trajectory {
            kind: ScheduleKind::SemiAr,
            steps: vec![
                TrajectoryStep {
                    step_index: 0,
                    positions: vec![0, 1],
                    tokens: vec![4, 5],
                    logprobs: vec![-0.5, -0.25],
                },
                TrajectoryStep {
                    step_index: 1,
                    positions: vec![2],
                    tokens: vec![4],
                    logprobs: vec![-1.0],
                },
            ],
            final_tokens,
            total_logprob: -1.75,
        }
    }

    #[test]
    fn logprob_sums_steps() {
        let t = toy_trajectory();
        let total = trajectory_logprob(&t).unwrap();
        assert!((total - t.total_logprob).abs() < LOGPROB_TOL);
    }

    #[test]
    fn zero_logprobs_sum_to_zero() {
        let mut t = toy_trajectory();
        for s in &mut t.steps {
            for lp in &mut s.logprobs {
                *lp = 0.0;
            }
        }
        assert_eq!(trajectory_logprob(&t).unwrap(), 0.0);
    }

    #[test]
    fn incomplete_trajectory_errors() {
        let mut t = toy_trajectory();
        t.steps.pop();
        assert_eq!(
            trajectory_logprob(&t),
            Err(TrajectoryError::Incomplete { revealed: 2, n: 3 })
        );
    }

    #[test]
    fn dump_round_trips() {
        let t = toy_trajectory();
        let mut buf = Vec::new();
        write_trajectory(&mut buf, &t).unwrap();
        write_trajectory(&mut buf, &t).unwrap();
        let records = read_trajectories(buf.as_slice()).unwrap();
        assert_eq!(records.len(), 2);
        assert_eq!(records[0].steps, t.steps);
        assert_eq!(records[0].kind, t.kind);
    }
}
