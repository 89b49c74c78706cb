//! Unmasking policies: which masked positions get fixed at each step.
//!
//! Selection is separated from sampling. Confidence-driven selectors are
//! pure functions of the per-position distributions; randomness only enters
//! through the random selector and the dynamic block generator, both fed by
//! the caller's RNG.

use std::ops::Range;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dist::TokenDistribution;
use crate::schedule::ScheduleKind;
use crate::seq::TokenSeq;

#[derive(Debug, Error, PartialEq)]
pub enum PolicyError {
    #[error("need {k} masked positions, only {available} remain")]
    NotEnoughMasked { k: usize, available: usize },
    #[error("reveal_per_step must be a positive divisor of n ({n} % {k} != 0)")]
    BadRevealPerStep { n: usize, k: usize },
    #[error("block size {b} is out of range for n = {n}")]
    BadBlockSize { b: usize, n: usize },
    #[error("block size {b} is not a multiple of reveal_per_step {k}")]
    BlockNotMultiple { b: usize, k: usize },
    #[error("truncated final block of {rem} is not a multiple of reveal_per_step {k}")]
    TailNotMultiple { rem: usize, k: usize },
}

/// Ordering rule inside the active block of a block-structured policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WithinBlock {
    /// Highest top-1 probability first (the usual low-confidence-remasking
    /// convention).
    #[default]
    Confidence,
    /// Highest (top-1 minus top-2) first.
    Margin,
    /// Uniformly random.
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum PolicyKind {
    /// Unmask k uniformly random masked positions per step.
    Random,
    /// Unmask the k highest-confidence masked positions per step.
    TopK,
    /// Unmask the k highest-margin masked positions per step.
    TopKMargin,
    /// Consecutive blocks of a fixed size, revealed left to right; the
    /// within-block rule orders reveals inside the active block.
    SemiAr { block_size: usize },
    /// Consecutive blocks with sizes drawn at decode time.
    Dynamic,
    /// One block covering the whole sequence (non-semi-AR parallel
    /// decoding, ordered by the within-block rule).
    SingleBlock,
}

/// Everything a decode run needs to know about position selection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolicyConfig {
    pub kind: PolicyKind,
    /// Tokens unmasked per step (k). T = n / k steps exactly.
    pub reveal_per_step: usize,
    #[serde(default)]
    pub within_block: WithinBlock,
    pub seed: u64,
}

impl PolicyConfig {
    pub fn new(kind: PolicyKind, reveal_per_step: usize, seed: u64) -> Self {
        Self {
            kind,
            reveal_per_step,
            within_block: WithinBlock::Confidence,
            seed,
        }
    }

    pub fn with_within_block(mut self, within_block: WithinBlock) -> Self {
        self.within_block = within_block;
        self
    }

    pub fn schedule_kind(&self) -> ScheduleKind {
        match self.kind {
            PolicyKind::Random => ScheduleKind::Random,
            PolicyKind::TopK => ScheduleKind::TopK,
            PolicyKind::TopKMargin => ScheduleKind::TopKMargin,
            PolicyKind::SemiAr { .. } => ScheduleKind::SemiAr,
            PolicyKind::Dynamic => ScheduleKind::Dynamic,
            PolicyKind::SingleBlock => ScheduleKind::SingleBlock,
        }
    }

    /// Check the divisibility invariants for a sequence of length `n`.
    pub fn validate(&self, n: usize) -> Result<(), PolicyError> {
        let k = self.reveal_per_step;
        if k == 0 || n == 0 || n % k != 0 {
            return Err(PolicyError::BadRevealPerStep { n, k });
        }
        if let PolicyKind::SemiAr { block_size: b } = self.kind {
            if b == 0 || b > n {
                return Err(PolicyError::BadBlockSize { b, n });
            }
            if b % k != 0 {
                return Err(PolicyError::BlockNotMultiple { b, k });
            }
            let rem = n % b;
            if rem % k != 0 {
                return Err(PolicyError::TailNotMultiple { rem, k });
            }
        }
        Ok(())
    }

    /// The block skeleton for block-structured kinds. Dynamic block sizes
    /// are drawn from `rng` up front, so the plan is fixed before any token
    /// is sampled.
    pub fn block_plan<R: Rng>(&self, n: usize, rng: &mut R) -> Option<Vec<Range<usize>>> {
        match self.kind {
            PolicyKind::SemiAr { block_size } => {
                Some(semi_ar_blocks(n, block_size).expect("validated block size"))
            }
            PolicyKind::SingleBlock => Some(vec![0..n]),
            PolicyKind::Dynamic => {
                let sizes = dynamic_blocks(n, self.reveal_per_step, rng);
                let mut start = 0;
                Some(
                    sizes
                        .into_iter()
                        .map(|s| {
                            let r = start..start + s;
                            start += s;
                            r
                        })
                        .collect(),
                )
            }
            _ => None,
        }
    }
}

/// Uniform sample of `k` positions without replacement, returned in
/// ascending order.
pub fn random_from<R: Rng>(
    positions: &[usize],
    k: usize,
    rng: &mut R,
) -> Result<Vec<usize>, PolicyError> {
    if positions.len() < k {
        return Err(PolicyError::NotEnoughMasked {
            k,
            available: positions.len(),
        });
    }
    let mut picked: Vec<usize> = rand::seq::index::sample(rng, positions.len(), k)
        .into_iter()
        .map(|i| positions[i])
        .collect();
    picked.sort_unstable();
    Ok(picked)
}

/// Unmask `k` uniformly random masked positions of `seq`.
pub fn next_positions_random<R: Rng>(
    seq: &TokenSeq,
    k: usize,
    rng: &mut R,
) -> Result<Vec<usize>, PolicyError> {
    random_from(&seq.masked_positions(), k, rng)
}

fn select_by_score(
    dists: &[(usize, TokenDistribution)],
    k: usize,
    score: impl Fn(&TokenDistribution) -> f64,
) -> Result<Vec<usize>, PolicyError> {
    if dists.len() < k {
        return Err(PolicyError::NotEnoughMasked {
            k,
            available: dists.len(),
        });
    }
    let mut scored: Vec<(usize, f64)> = dists.iter().map(|(p, d)| (*p, score(d))).collect();
    // Highest score first; ties go to the lower position index.
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let mut picked: Vec<usize> = scored[..k].iter().map(|(p, _)| *p).collect();
    picked.sort_unstable();
    Ok(picked)
}

/// The `k` masked positions with the largest top-1 probability.
pub fn next_positions_topk(
    dists: &[(usize, TokenDistribution)],
    k: usize,
) -> Result<Vec<usize>, PolicyError> {
    select_by_score(dists, k, |d| d.top1())
}

/// The `k` masked positions with the largest (top-1 minus top-2)
/// probability gap.
pub fn next_positions_topk_margin(
    dists: &[(usize, TokenDistribution)],
    k: usize,
) -> Result<Vec<usize>, PolicyError> {
    select_by_score(dists, k, |d| d.margin())
}

/// Consecutive blocks of size `b`, the last truncated:
/// `[(t-1)b, min(tb, n))` for `t = 1..ceil(n/b)`.
pub fn semi_ar_blocks(n: usize, b: usize) -> Result<Vec<Range<usize>>, PolicyError> {
    if b == 0 || b > n {
        return Err(PolicyError::BadBlockSize { b, n });
    }
    let mut blocks = Vec::with_capacity(n.div_ceil(b));
    let mut start = 0;
    while start < n {
        let end = (start + b).min(n);
        blocks.push(start..end);
        start = end;
    }
    Ok(blocks)
}

/// Random composition of `n` into block sizes, each a positive multiple of
/// `k`, drawn uniformly from `{k, 2k, ..., min(remaining, cap)}` until the
/// sizes sum to `n`. The default cap of `n/2` keeps single-block draws from
/// dominating; pass the cap explicitly to change the knob.
pub fn dynamic_blocks_capped<R: Rng>(n: usize, k: usize, cap: usize, rng: &mut R) -> Vec<usize> {
    assert!(k > 0 && n % k == 0, "n must be a positive multiple of k");
    let cap = ((cap / k) * k).max(k);
    let mut sizes = Vec::new();
    let mut remaining = n;
    while remaining > 0 {
        let max_size = remaining.min(cap);
        let choices = max_size / k;
        let size = k * rng.gen_range(1..=choices);
        sizes.push(size);
        remaining -= size;
    }
    sizes
}

/// [`dynamic_blocks_capped`] with the default `n/2` cap.
pub fn dynamic_blocks<R: Rng>(n: usize, k: usize, rng: &mut R) -> Vec<usize> {
    dynamic_blocks_capped(n, k, n / 2, rng)
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeSet;

    use super::*;
    use crate::rng::rng_from_seed;
    use crate::vocab::Vocabulary;

    fn dist(probs: &[f64]) -> TokenDistribution {
        let mut weights = vec![0.0];
        weights.extend_from_slice(probs);
        TokenDistribution::from_weights(&weights, 0).unwrap()
    }

    #[test]
    fn random_selection_is_forced_when_exact() {
        let vocab = Vocabulary::new(6, 0, 1, 2, 3).unwrap();
        let mut seq = TokenSeq::masked(&vocab, 4);
        seq.reveal(0, 4);
        seq.reveal(2, 4);
        let mut rng = rng_from_seed(0);
        let picked = next_positions_random(&seq, 2, &mut rng).unwrap();
        assert_eq!(picked, vec![1, 3]);
    }

    #[test]
    fn random_selection_errors_when_short() {
        let vocab = Vocabulary::new(6, 0, 1, 2, 3).unwrap();
        let seq = TokenSeq::masked(&vocab, 2);
        let mut rng = rng_from_seed(0);
        assert_eq!(
            next_positions_random(&seq, 3, &mut rng),
            Err(PolicyError::NotEnoughMasked { k: 3, available: 2 })
        );
    }

    #[test]
    fn random_pairs_are_uniform() {
        // n=6 all masked, k=2: each of the 15 unordered pairs should land
        // within 1/15 +/- 3 sigma over 1e5 draws.
        let vocab = Vocabulary::new(6, 0, 1, 2, 3).unwrap();
        let seq = TokenSeq::masked(&vocab, 6);
        let mut rng = rng_from_seed(11);
        let draws = 100_000;
        let mut counts = std::collections::HashMap::new();
        for _ in 0..draws {
            let picked = next_positions_random(&seq, 2, &mut rng).unwrap();
            *counts.entry((picked[0], picked[1])).or_insert(0u32) += 1;
        }
        assert_eq!(counts.len(), 15);
        let p = 1.0 / 15.0;
        let sigma = (p * (1.0 - p) / draws as f64).sqrt();
        for (&pair, &c) in &counts {
            let freq = c as f64 / draws as f64;
            assert!(
                (freq - p).abs() < 3.0 * sigma + 1e-12,
                "pair {pair:?}: freq {freq} vs {p}"
            );
        }
    }

    #[test]
    fn random_selection_is_seed_deterministic() {
        let vocab = Vocabulary::new(6, 0, 1, 2, 3).unwrap();
        let seq = TokenSeq::masked(&vocab, 6);
        let run = |seed| {
            let mut rng = rng_from_seed(seed);
            (0..10)
                .map(|_| next_positions_random(&seq, 2, &mut rng).unwrap())
                .collect::<Vec<_>>()
        };
        assert_eq!(run(5), run(5));
        assert_ne!(run(5), run(6));
    }

    #[test]
    fn topk_picks_highest_confidence() {
        let dists = vec![
            (0, dist(&[0.9, 0.1])),
            (1, dist(&[0.1, 0.9])), // top1 = 0.9 as well, but position 0 wins ties
            (2, dist(&[0.8, 0.2])),
        ];
        // confidences 0.9, 0.9, 0.8
        assert_eq!(next_positions_topk(&dists, 2).unwrap(), vec![0, 1]);
        let dists = vec![
            (0, dist(&[0.9, 0.1])),
            (1, dist(&[0.5, 0.5])),
            (2, dist(&[0.8, 0.2])),
        ];
        assert_eq!(next_positions_topk(&dists, 2).unwrap(), vec![0, 2]);
    }

    #[test]
    fn topk_ties_break_low() {
        let dists = vec![
            (3, dist(&[0.5, 0.5])),
            (1, dist(&[0.5, 0.5])),
            (2, dist(&[0.5, 0.5])),
        ];
        assert_eq!(next_positions_topk(&dists, 2).unwrap(), vec![1, 2]);
    }

    #[test]
    fn margin_is_top1_minus_top2() {
        // A = [0.6, 0.4] has margin 0.2; B = [0.5, 0.1, 0.4] has margin
        // 0.5 - 0.4 = 0.1, so A is selected first.
        let a = (0, dist(&[0.6, 0.4, 0.0]));
        let b = (1, dist(&[0.5, 0.1, 0.4]));
        assert_eq!(
            next_positions_topk_margin(&[a, b], 1).unwrap(),
            vec![0]
        );
    }

    #[test]
    fn point_mass_has_maximal_margin() {
        let dists = vec![
            (0, dist(&[0.6, 0.4])),
            (1, dist(&[0.0, 1.0])),
            (2, dist(&[0.7, 0.3])),
        ];
        assert_eq!(next_positions_topk_margin(&dists, 1).unwrap(), vec![1]);
    }

    #[test]
    fn semi_ar_blocks_truncate_the_tail() {
        let blocks = semi_ar_blocks(8, 3).unwrap();
        assert_eq!(blocks, vec![0..3, 3..6, 6..8]);
    }

    #[test]
    fn block_equal_to_n_is_single() {
        assert_eq!(semi_ar_blocks(8, 8).unwrap(), vec![0..8]);
    }

    #[test]
    fn block_equal_to_k_is_strict_left_to_right() {
        let blocks = semi_ar_blocks(6, 2).unwrap();
        assert_eq!(blocks, vec![0..2, 2..4, 4..6]);
    }

    #[test]
    fn validate_rejects_bad_combinations() {
        let cfg = PolicyConfig::new(PolicyKind::SemiAr { block_size: 3 }, 2, 0);
        assert_eq!(
            cfg.validate(8),
            Err(PolicyError::BlockNotMultiple { b: 3, k: 2 })
        );
        let cfg = PolicyConfig::new(PolicyKind::SemiAr { block_size: 6 }, 2, 0);
        // 8 % 6 = 2, a multiple of k = 2: fine.
        assert_eq!(cfg.validate(8), Ok(()));
        let cfg = PolicyConfig::new(PolicyKind::Random, 3, 0);
        assert_eq!(
            cfg.validate(8),
            Err(PolicyError::BadRevealPerStep { n: 8, k: 3 })
        );
    }

    #[test]
    fn dynamic_blocks_compose_n() {
        let mut rng = rng_from_seed(3);
        for _ in 0..10_000 {
            let sizes = dynamic_blocks(24, 2, &mut rng);
            assert_eq!(sizes.iter().sum::<usize>(), 24);
            assert!(sizes.iter().all(|s| s % 2 == 0 && *s > 0));
            assert!(sizes.iter().all(|s| *s <= 12), "cap exceeded: {sizes:?}");
        }
    }

    #[test]
    fn dynamic_blocks_small_case_support() {
        // n = 2k with the cap lifted: both {2k} and {k, k} must occur.
        let mut rng = rng_from_seed(4);
        let mut seen = BTreeSet::new();
        for _ in 0..200 {
            seen.insert(dynamic_blocks_capped(4, 2, 4, &mut rng));
        }
        assert!(seen.contains(&vec![4]));
        assert!(seen.contains(&vec![2, 2]));
        assert_eq!(seen.len(), 2);
    }

    #[test]
    fn dynamic_blocks_are_seed_deterministic() {
        let mut a = rng_from_seed(9);
        let mut b = rng_from_seed(9);
        for _ in 0..100 {
            assert_eq!(dynamic_blocks(16, 2, &mut a), dynamic_blocks(16, 2, &mut b));
        }
    }
}
