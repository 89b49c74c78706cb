//! Block-ensemble decoding: run several semi-autoregressive experts, parse
//! each output, and majority-vote the parsed answers.
//!
//! The expert list is ordered; "earliest" always means list order, and the
//! grid constructor sorts experts ascending by block size then seed, so the
//! earliest tied expert is the one with the smallest block size. Voting is a
//! deterministic fold over the ordered results: running experts in parallel
//! cannot change the record.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::decode::{decode, DecodeError, DecodeRun};
use crate::denoiser::Denoiser;
use crate::mixture::majority_mode;
use crate::policy::{PolicyConfig, PolicyKind, WithinBlock};
use crate::rng::derive_seed;
use crate::seq::TokenSeq;
use crate::trajectory::Trajectory;
use crate::vocab::{PromptId, Token};

#[derive(Debug, Error, PartialEq)]
pub enum HexError {
    #[error("expert list is empty")]
    NoExperts,
    #[error("tie rule `any` needs a gold answer")]
    GoldRequired,
    #[error(transparent)]
    Decode(#[from] DecodeError),
}

/// A parsed answer value: the token span the parser extracted.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Answer(pub Vec<Token>);

impl fmt::Display for Answer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|t| t.to_string()).collect();
        write!(f, "{}", parts.join("-"))
    }
}

/// Block structure of one expert.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockSpec {
    Fixed(usize),
    Dynamic,
}

/// One semi-AR expert of the ensemble.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpertConfig {
    pub blocks: BlockSpec,
    pub seed: u64,
    pub temperature: f64,
    pub within_block: WithinBlock,
}

impl ExpertConfig {
    pub fn policy(&self, reveal_per_step: usize) -> PolicyConfig {
        let kind = match self.blocks {
            BlockSpec::Fixed(b) => PolicyKind::SemiAr { block_size: b },
            BlockSpec::Dynamic => PolicyKind::Dynamic,
        };
        PolicyConfig::new(kind, reveal_per_step, self.seed).with_within_block(self.within_block)
    }

    /// The standard ensemble: every block size crossed with `seeds` streams,
    /// ordered ascending by block size then seed index. Per-expert seeds
    /// derive from `(base_seed, block size, seed index)`.
    pub fn grid(
        blocks: &[usize],
        seeds: usize,
        temperature: f64,
        within_block: WithinBlock,
        base_seed: u64,
    ) -> Vec<ExpertConfig> {
        let mut sorted = blocks.to_vec();
        sorted.sort_unstable();
        let mut experts = Vec::with_capacity(sorted.len() * seeds);
        for &b in &sorted {
            for s in 0..seeds {
                experts.push(ExpertConfig {
                    blocks: BlockSpec::Fixed(b),
                    seed: derive_seed(base_seed, &[b as u64, s as u64]),
                    temperature,
                    within_block,
                });
            }
        }
        experts
    }

    /// `count` dynamic-block experts, one per seed index.
    pub fn dynamic_grid(
        count: usize,
        temperature: f64,
        within_block: WithinBlock,
        base_seed: u64,
    ) -> Vec<ExpertConfig> {
        (0..count)
            .map(|s| ExpertConfig {
                blocks: BlockSpec::Dynamic,
                seed: derive_seed(base_seed, &[u64::MAX, s as u64]),
                temperature,
                within_block,
            })
            .collect()
    }
}

/// Tie resolution among answers sharing the top vote count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieRule {
    /// Earliest expert in list order (smallest block size under the grid
    /// convention).
    First,
    /// Tied answer whose best candidate has the lowest negative
    /// log-likelihood.
    Nll,
    /// Evaluation-only: the gold answer if it is among the tied candidates,
    /// otherwise earliest.
    Any,
}

impl TieRule {
    pub fn as_str(self) -> &'static str {
        match self {
            TieRule::First => "first",
            TieRule::Nll => "nll",
            TieRule::Any => "any",
        }
    }
}

/// One expert's decode, parsed and scored.
#[derive(Debug, Clone)]
pub struct Candidate {
    pub expert_index: usize,
    pub trajectory: Trajectory,
    pub parsed: Option<Answer>,
    /// Negative trajectory log-likelihood of this candidate's own decode.
    pub nll: f64,
}

impl Candidate {
    pub fn output(&self) -> &TokenSeq {
        &self.trajectory.final_tokens
    }
}

/// Outcome of one ensemble vote.
#[derive(Debug, Clone)]
pub struct VoteRecord {
    pub candidates: Vec<Candidate>,
    /// Vote counts over valid parsed answers.
    pub counts: BTreeMap<Answer, usize>,
    /// `None` when every candidate failed to parse; such records never score
    /// as correct.
    pub winner: Option<Answer>,
    pub tie: bool,
    pub tie_set: Vec<Answer>,
    pub tie_rule_applied: Option<TieRule>,
    pub selected_expert: Option<usize>,
}

impl VoteRecord {
    pub fn all_invalid(&self) -> bool {
        self.winner.is_none()
    }

    pub fn invalid_count(&self) -> usize {
        self.candidates.iter().filter(|c| c.parsed.is_none()).count()
    }
}

/// Run every expert, parse, and majority-vote. `gold` is only consulted by
/// [`TieRule::Any`].
pub fn hex_decode(
    denoiser: &dyn Denoiser,
    prompt: PromptId,
    reveal_per_step: usize,
    experts: &[ExpertConfig],
    parser: impl Fn(&TokenSeq) -> Option<Answer>,
    tie_rule: TieRule,
    gold: Option<&Answer>,
) -> Result<VoteRecord, HexError> {
    if experts.is_empty() {
        return Err(HexError::NoExperts);
    }
    if tie_rule == TieRule::Any && gold.is_none() {
        return Err(HexError::GoldRequired);
    }

    let mut candidates = Vec::with_capacity(experts.len());
    for (expert_index, expert) in experts.iter().enumerate() {
        let run = DecodeRun::new(
            denoiser,
            prompt,
            expert.policy(reveal_per_step),
            expert.temperature,
        );
        let trajectory = decode(&run)?;
        let parsed = parser(&trajectory.final_tokens);
        let nll = -trajectory.total_logprob;
        candidates.push(Candidate {
            expert_index,
            trajectory,
            parsed,
            nll,
        });
    }

    let valid: Vec<Answer> = candidates
        .iter()
        .filter_map(|c| c.parsed.clone())
        .collect();
    let mut counts = BTreeMap::new();
    for a in &valid {
        *counts.entry(a.clone()).or_insert(0usize) += 1;
    }

    let (winner, tie, tie_set, tie_rule_applied) = match majority_mode(&valid) {
        None => (None, false, Vec::new(), None),
        Some((_, tie_set)) if tie_set.len() > 1 => {
            let winner = break_tie(&tie_set, &candidates, tie_rule, gold)?;
            (Some(winner), true, tie_set, Some(tie_rule))
        }
        Some((winner, tie_set)) => (Some(winner), false, tie_set, None),
    };

    let selected_expert = winner.as_ref().map(|w| {
        let with_winner = candidates
            .iter()
            .filter(|c| c.parsed.as_ref() == Some(w));
        match tie_rule_applied {
            Some(TieRule::Nll) => {
                with_winner
                    .min_by(|a, b| a.nll.total_cmp(&b.nll).then(a.expert_index.cmp(&b.expert_index)))
                    .expect("winner has a candidate")
                    .expert_index
            }
            _ => {
                with_winner
                    .map(|c| c.expert_index)
                    .min()
                    .expect("winner has a candidate")
            }
        }
    });

    Ok(VoteRecord {
        candidates,
        counts,
        winner,
        tie,
        tie_set,
        tie_rule_applied,
        selected_expert,
    })
}

/// Resolve a tie among `tie_set` answers.
pub fn break_tie(
    tie_set: &[Answer],
    candidates: &[Candidate],
    rule: TieRule,
    gold: Option<&Answer>,
) -> Result<Answer, HexError> {
    debug_assert!(tie_set.len() >= 2);
    let earliest_expert = |answer: &Answer| -> usize {
        candidates
            .iter()
            .filter(|c| c.parsed.as_ref() == Some(answer))
            .map(|c| c.expert_index)
            .min()
            .expect("tied answers have candidates")
    };
    let by_first = |set: &[Answer]| -> Answer {
        set.iter()
            .min_by_key(|a| earliest_expert(a))
            .expect("non-empty tie set")
            .clone()
    };
    match rule {
        TieRule::First => Ok(by_first(tie_set)),
        TieRule::Nll => {
            let best_nll = |answer: &Answer| -> f64 {
                candidates
                    .iter()
                    .filter(|c| c.parsed.as_ref() == Some(answer))
                    .map(|c| c.nll)
                    .fold(f64::INFINITY, f64::min)
            };
            Ok(tie_set
                .iter()
                .min_by(|a, b| {
                    best_nll(a)
                        .total_cmp(&best_nll(b))
                        .then_with(|| earliest_expert(a).cmp(&earliest_expert(b)))
                })
                .expect("non-empty tie set")
                .clone())
        }
        TieRule::Any => {
            let gold = gold.ok_or(HexError::GoldRequired)?;
            if tie_set.contains(gold) {
                Ok(gold.clone())
            } else {
                Ok(by_first(tie_set))
            }
        }
    }
}

/// Likelihood baseline: ignore frequencies and return the parsed answer of
/// the candidate with the globally minimal NLL. The selection looks at every
/// candidate, parseable or not — confident garbage wins on likelihood — so
/// the result is `None` whenever the most likely candidate does not parse.
/// With `length_normalized`, NLLs are divided by the sequence length first.
pub fn nll_select(candidates: &[Candidate], length_normalized: bool) -> Option<Answer> {
    candidates
        .iter()
        .min_by(|a, b| {
            let score = |c: &Candidate| {
                if length_normalized {
                    c.nll / c.trajectory.final_tokens.len() as f64
                } else {
                    c.nll
                }
            };
            score(a)
                .total_cmp(&score(b))
                .then(a.expert_index.cmp(&b.expert_index))
        })
        .and_then(|c| c.parsed.clone())
}

/// Best-of-N control: the same vote over `samples` copies of the full-width
/// single-block expert, differing only in seed. This is the
/// no-schedule-diversity baseline.
pub fn bon_vote(
    denoiser: &dyn Denoiser,
    prompt: PromptId,
    reveal_per_step: usize,
    samples: usize,
    temperature: f64,
    within_block: WithinBlock,
    base_seed: u64,
    parser: impl Fn(&TokenSeq) -> Option<Answer>,
    tie_rule: TieRule,
    gold: Option<&Answer>,
) -> Result<VoteRecord, HexError> {
    let n = denoiser.seq_len();
    let experts: Vec<ExpertConfig> = (0..samples)
        .map(|s| ExpertConfig {
            blocks: BlockSpec::Fixed(n),
            seed: derive_seed(base_seed, &[n as u64, s as u64]),
            temperature,
            within_block,
        })
        .collect();
    hex_decode(
        denoiser,
        prompt,
        reveal_per_step,
        &experts,
        parser,
        tie_rule,
        gold,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn answer(tokens: &[Token]) -> Answer {
        Answer(tokens.to_vec())
    }

    fn candidate(expert_index: usize, parsed: Option<Answer>, nll: f64) -> Candidate {
        use crate::schedule::ScheduleKind;
        use crate::trajectory::TrajectoryStep;
        use crate::vocab::Vocabulary;
        let vocab = Vocabulary::new(6, 0, 2, 3, 1).unwrap();
        let trajectory = Trajectory {
            kind: ScheduleKind::SemiAr,
            steps: vec![TrajectoryStep {
                step_index: 0,
                positions: vec![0],
                tokens: vec![4],
                logprobs: vec![-nll],
            }],
            final_tokens: TokenSeq::complete(&vocab, vec![4]),
            total_logprob: -nll,
        };
        Candidate {
            expert_index,
            trajectory,
            parsed,
            nll,
        }
    }

    #[test]
    fn tie_break_by_nll() {
        let a = answer(&[42]);
        let b = answer(&[17]);
        let candidates = vec![
            candidate(0, Some(a.clone()), 3.2),
            candidate(1, Some(b.clone()), 4.1),
        ];
        let tie_set = vec![b.clone(), a.clone()];
        let won = break_tie(&tie_set, &candidates, TieRule::Nll, None).unwrap();
        assert_eq!(won, a);
    }

    #[test]
    fn tie_break_any_prefers_gold() {
        let a = answer(&[42]);
        let b = answer(&[17]);
        let candidates = vec![
            candidate(0, Some(a.clone()), 1.0),
            candidate(1, Some(b.clone()), 2.0),
        ];
        let tie_set = vec![a.clone(), b.clone()];
        let won = break_tie(&tie_set, &candidates, TieRule::Any, Some(&b)).unwrap();
        assert_eq!(won, b);
        // Gold outside the tie set falls back to earliest.
        let gold = answer(&[99]);
        let won = break_tie(&tie_set, &candidates, TieRule::Any, Some(&gold)).unwrap();
        assert_eq!(won, a);
    }

    #[test]
    fn tie_break_first_uses_expert_order() {
        let a = answer(&[42]);
        let b = answer(&[17]);
        // The B-producing expert comes first in list order.
        let candidates = vec![
            candidate(0, Some(b.clone()), 9.0),
            candidate(1, Some(a.clone()), 1.0),
        ];
        let tie_set = vec![a, b.clone()];
        let won = break_tie(&tie_set, &candidates, TieRule::First, None).unwrap();
        assert_eq!(won, b);
    }

    #[test]
    fn tie_break_any_without_gold_errors() {
        let a = answer(&[1]);
        let b = answer(&[2]);
        let candidates = vec![
            candidate(0, Some(a.clone()), 1.0),
            candidate(1, Some(b.clone()), 2.0),
        ];
        assert_eq!(
            break_tie(&[a, b], &candidates, TieRule::Any, None),
            Err(HexError::GoldRequired)
        );
    }

    #[test]
    fn nll_select_ignores_frequency() {
        let a = answer(&[42]);
        let b = answer(&[17]);
        let candidates = vec![
            candidate(0, Some(a.clone()), 5.0),
            candidate(1, Some(a.clone()), 4.0),
            candidate(2, Some(b.clone()), 1.0),
        ];
        assert_eq!(nll_select(&candidates, false), Some(b));
    }

    #[test]
    fn nll_select_falls_for_confident_garbage() {
        // The lowest-NLL candidate does not parse; likelihood selection
        // still picks it and comes back empty.
        let b = answer(&[17]);
        let candidates = vec![
            candidate(0, None, 0.1),
            candidate(1, Some(b.clone()), 4.0),
        ];
        assert_eq!(nll_select(&candidates, false), None);
        assert_eq!(nll_select(&candidates[1..], false), Some(b));
        assert_eq!(nll_select(&[], false), None);
    }

    #[test]
    fn nll_length_normalization_changes_scores_not_candidates() {
        let a = answer(&[42]);
        let b = answer(&[17]);
        // Same sequence lengths here, so normalization preserves the order.
        let candidates = vec![
            candidate(0, Some(a.clone()), 5.0),
            candidate(1, Some(b.clone()), 2.0),
        ];
        assert_eq!(nll_select(&candidates, true), Some(b));
    }

    #[test]
    fn grid_is_sorted_by_block_then_seed() {
        let experts = ExpertConfig::grid(&[8, 2, 4], 2, 0.9, WithinBlock::Confidence, 7);
        assert_eq!(experts.len(), 6);
        let blocks: Vec<usize> = experts
            .iter()
            .map(|e| match e.blocks {
                BlockSpec::Fixed(b) => b,
                BlockSpec::Dynamic => unreachable!(),
            })
            .collect();
        assert_eq!(blocks, vec![2, 2, 4, 4, 8, 8]);
        // Seeds are all distinct.
        let mut seeds: Vec<u64> = experts.iter().map(|e| e.seed).collect();
        seeds.sort_unstable();
        seeds.dedup();
        assert_eq!(seeds.len(), 6);
    }
}
