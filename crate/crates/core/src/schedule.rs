//! Reveal schedules: the ordered partition of positions into steps.

use serde::{Deserialize, Serialize};

/// Which unmasking policy produced a schedule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    Random,
    TopK,
    TopKMargin,
    SemiAr,
    Dynamic,
    SingleBlock,
}

impl ScheduleKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ScheduleKind::Random => "random",
            ScheduleKind::TopK => "top_k",
            ScheduleKind::TopKMargin => "top_k_margin",
            ScheduleKind::SemiAr => "semi_ar",
            ScheduleKind::Dynamic => "dynamic",
            ScheduleKind::SingleBlock => "single_block",
        }
    }
}

/// An ordered list of position sets, one per reveal step. Confidence-driven
/// policies produce their steps lazily during decoding, but the realized
/// schedule must still partition `{0..n}`.
///
/// Positions are 0-based here and in the serialized formats.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Schedule {
    pub kind: ScheduleKind,
    pub steps: Vec<Vec<usize>>,
}

impl Schedule {
    pub fn new(kind: ScheduleKind) -> Self {
        Self {
            kind,
            steps: Vec::new(),
        }
    }

    pub fn push_step(&mut self, mut positions: Vec<usize>) {
        positions.sort_unstable();
        self.steps.push(positions);
    }

    pub fn num_steps(&self) -> usize {
        self.steps.len()
    }

    /// Step index at which `pos` was revealed, if any.
    pub fn reveal_step(&self, pos: usize) -> Option<usize> {
        self.steps.iter().position(|s| s.contains(&pos))
    }
}

/// Outcome of [`validate_schedule`]. Violations are ordinary values, not
/// errors; the report names the first offending position.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScheduleReport {
    Valid,
    /// A position revealed in more than one step.
    Duplicate { position: usize },
    /// A position never revealed.
    Missing { position: usize },
    /// A position outside `0..n`.
    OutOfRange { position: usize },
}

impl ScheduleReport {
    pub fn is_valid(self) -> bool {
        matches!(self, ScheduleReport::Valid)
    }
}

/// Check that the steps of `schedule` partition `{0..n}`: pairwise disjoint
/// and jointly exhaustive.
pub fn validate_schedule(schedule: &Schedule, n: usize) -> ScheduleReport {
    let mut seen = vec![false; n];
    for step in &schedule.steps {
        for &pos in step {
            if pos >= n {
                return ScheduleReport::OutOfRange { position: pos };
            }
            if seen[pos] {
                return ScheduleReport::Duplicate { position: pos };
            }
            seen[pos] = true;
        }
    }
    for (pos, &covered) in seen.iter().enumerate() {
        if !covered {
            return ScheduleReport::Missing { position: pos };
        }
    }
    ScheduleReport::Valid
}
