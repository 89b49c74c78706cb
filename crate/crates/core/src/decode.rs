//! The iterated predict–fix–remask inference engine.
//!
//! Each step issues exactly one denoiser query for all masked positions,
//! selects positions according to the policy, samples tokens for the
//! selected positions from those same distributions, and discards the rest
//! (they stay masked for the next step). Temperature shapes sampling only;
//! selection always sees the raw confidences.

use thiserror::Error;

use crate::denoiser::{Denoiser, DenoiserError};
use crate::dist::TokenDistribution;
use crate::policy::{
    next_positions_random, next_positions_topk, next_positions_topk_margin, random_from,
    PolicyConfig, PolicyError, PolicyKind, WithinBlock,
};
use crate::rng::rng_from_seed;
use crate::seq::TokenSeq;
use crate::trajectory::{Trajectory, TrajectoryStep};
use crate::vocab::{PromptId, Vocabulary};

/// Default fraction of illegitimate filler above which a sequence counts as
/// collapsed.
pub const DEFAULT_COLLAPSE_THRESHOLD: f64 = 0.5;

#[derive(Debug, Error, PartialEq)]
pub enum DecodeError {
    #[error(transparent)]
    Denoiser(#[from] DenoiserError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
}

/// One decode job: a denoiser handle plus everything that pins the run.
/// The run owns its RNG stream (seeded from the policy seed), so a
/// `(config, seed)` pair always reproduces the same trajectory.
#[derive(Clone, Copy)]
pub struct DecodeRun<'a> {
    pub denoiser: &'a dyn Denoiser,
    pub prompt: PromptId,
    pub policy: PolicyConfig,
    pub temperature: f64,
}

impl<'a> DecodeRun<'a> {
    pub fn new(
        denoiser: &'a dyn Denoiser,
        prompt: PromptId,
        policy: PolicyConfig,
        temperature: f64,
    ) -> Self {
        Self {
            denoiser,
            prompt,
            policy,
            temperature,
        }
    }
}

/// Run to completion, producing a trajectory.
pub fn decode(run: &DecodeRun) -> Result<Trajectory, DecodeError> {
    decode_with_observer(run, |_, _, _| {})
}

/// [`decode`] with a hook that sees `(step, position, distribution)` for
/// every fixed position, with the distribution the token was sampled from.
pub fn decode_with_observer(
    run: &DecodeRun,
    mut observe: impl FnMut(usize, usize, &TokenDistribution),
) -> Result<Trajectory, DecodeError> {
    let n = run.denoiser.seq_len();
    let k = run.policy.reveal_per_step;
    run.policy.validate(n)?;

    let mut rng = rng_from_seed(run.policy.seed);
    // Dynamic block sizes are drawn before any model query.
    let blocks = run.policy.block_plan(n, &mut rng);
    let mut seq = TokenSeq::masked(run.denoiser.vocab(), n);
    let mut steps = Vec::with_capacity(n / k);
    let mut total_logprob = 0.0;

    for step_index in 0..n / k {
        let dists = run.denoiser.conditionals(run.prompt, &seq)?;
        let selected = match run.policy.kind {
            PolicyKind::Random => next_positions_random(&seq, k, &mut rng)?,
            PolicyKind::TopK => next_positions_topk(&dists, k)?,
            PolicyKind::TopKMargin => next_positions_topk_margin(&dists, k)?,
            PolicyKind::SemiAr { .. } | PolicyKind::Dynamic | PolicyKind::SingleBlock => {
                let blocks = blocks.as_ref().expect("block kinds have a plan");
                // A block must be exhausted before the next one opens.
                let active = blocks
                    .iter()
                    .find(|b| dists.iter().any(|(p, _)| b.contains(p)))
                    .expect("an incomplete sequence has an active block");
                let lo = dists.partition_point(|(p, _)| *p < active.start);
                let hi = dists.partition_point(|(p, _)| *p < active.end);
                let in_block = &dists[lo..hi];
                match run.policy.within_block {
                    WithinBlock::Confidence => next_positions_topk(in_block, k)?,
                    WithinBlock::Margin => next_positions_topk_margin(in_block, k)?,
                    WithinBlock::Random => {
                        let positions: Vec<usize> = in_block.iter().map(|(p, _)| *p).collect();
                        random_from(&positions, k, &mut rng)?
                    }
                }
            }
        };

        let mut tokens = Vec::with_capacity(k);
        let mut logprobs = Vec::with_capacity(k);
        for &pos in &selected {
            let idx = dists
                .binary_search_by_key(&pos, |(p, _)| *p)
                .expect("selected positions are masked");
            let dist = &dists[idx].1;
            let token = dist.sample(run.temperature, &mut rng);
            let logprob = dist.prob(token).ln();
            observe(step_index, pos, dist);
            seq.reveal(pos, token);
            tokens.push(token);
            logprobs.push(logprob);
            total_logprob += logprob;
        }
        steps.push(TrajectoryStep {
            step_index,
            positions: selected,
            tokens,
            logprobs,
        });
    }
    debug_assert!(seq.is_complete() && seq.is_coherent());

    Ok(Trajectory {
        kind: run.policy.schedule_kind(),
        steps,
        final_tokens: seq,
        total_logprob,
    })
}

/// Collapse verdict for a completed sequence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CollapseReport {
    pub collapsed: bool,
    /// Fraction of positions holding illegitimate filler.
    pub fraction: f64,
}

/// Flag sequences flooded with the after-end filler. Filler is legitimate
/// only as a contiguous tail that directly follows an end-of-text token;
/// everything else counts toward the collapse fraction.
pub fn detect_collapse(seq: &TokenSeq, vocab: &Vocabulary, threshold: f64) -> CollapseReport {
    assert!(seq.is_complete(), "collapse detection needs a complete sequence");
    let tokens = seq.tokens();
    let n = tokens.len();
    let filler = vocab.after_eot_id();

    // Start of the maximal filler suffix (== n when there is none).
    let mut suffix_start = n;
    while suffix_start > 0 && tokens[suffix_start - 1] == filler {
        suffix_start -= 1;
    }
    let legitimate_tail =
        suffix_start < n && suffix_start > 0 && tokens[suffix_start - 1] == vocab.eot_id();

    let counted = if legitimate_tail {
        &tokens[..suffix_start]
    } else {
        &tokens[..]
    };
    let illegitimate = counted.iter().filter(|&&t| t == filler).count();
    let fraction = illegitimate as f64 / n as f64;
    CollapseReport {
        collapsed: fraction > threshold,
        fraction,
    }
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;
    use std::sync::atomic::{AtomicUsize, Ordering};

    use super::*;
    use crate::denoiser::{BiasSpec, Factor, FactorModel};
    use crate::schedule::validate_schedule;
    use crate::trajectory::trajectory_logprob;
    use crate::vocab::Token;

    fn vocab6() -> Vocabulary {
        // mask=0, marker=1, eot=2, after_eot=3, content {4, 5}
        Vocabulary::new(6, 0, 2, 3, 1).unwrap()
    }

    /// Peaked chain over 4 positions: prefers 4,5,4,5 but keeps alternatives.
    fn chain4() -> FactorModel {
        let vocab = vocab6();
        let v = vocab.size();
        let mut unary = vec![0.0; v];
        unary[4] = 3.0;
        unary[5] = 1.0;
        // pair factor preferring alternation
        let mut pair = vec![0.0; v * v];
        for a in [4usize, 5] {
            for b in [4usize, 5] {
                pair[a * v + b] = if a != b { 4.0 } else { 1.0 };
            }
        }
        let factors = vec![
            Factor::new(vec![0], unary),
            Factor::new(vec![0, 1], pair.clone()),
            Factor::new(vec![1, 2], pair.clone()),
            Factor::new(vec![2, 3], pair),
        ];
        FactorModel::new(4, vocab, BTreeMap::from([(0, factors)])).unwrap()
    }

    fn ar_policy(seed: u64) -> PolicyConfig {
        PolicyConfig::new(PolicyKind::SemiAr { block_size: 1 }, 1, seed)
    }

    #[test]
    fn greedy_ar_decodes_the_mode() {
        let model = chain4();
        let (mode, _) = model.mode(0).unwrap();
        let run = DecodeRun::new(&model, 0, ar_policy(0), 0.0);
        let t = decode(&run).unwrap();
        assert_eq!(t.final_tokens.tokens(), &mode[..]);
    }

    #[test]
    fn every_policy_realizes_a_partition() {
        let model = chain4();
        let policies = [
            PolicyConfig::new(PolicyKind::Random, 2, 7),
            PolicyConfig::new(PolicyKind::TopK, 2, 7),
            PolicyConfig::new(PolicyKind::TopKMargin, 1, 7),
            PolicyConfig::new(PolicyKind::SemiAr { block_size: 2 }, 1, 7),
            PolicyConfig::new(PolicyKind::SingleBlock, 2, 7),
            PolicyConfig::new(PolicyKind::Dynamic, 1, 7),
            PolicyConfig::new(PolicyKind::SemiAr { block_size: 2 }, 2, 7)
                .with_within_block(WithinBlock::Random),
        ];
        for policy in policies {
            let run = DecodeRun::new(&model, 0, policy, 0.9);
            let t = decode(&run).unwrap();
            let report = validate_schedule(&t.schedule(), 4);
            assert!(report.is_valid(), "{policy:?}: {report:?}");
            assert!(t.final_tokens.is_complete());
        }
    }

    #[test]
    fn trajectories_are_seed_deterministic() {
        let model = chain4();
        let policy = PolicyConfig::new(PolicyKind::Random, 1, 42);
        let a = decode(&DecodeRun::new(&model, 0, policy, 1.0)).unwrap();
        let b = decode(&DecodeRun::new(&model, 0, policy, 1.0)).unwrap();
        assert_eq!(a, b);
        let other = PolicyConfig::new(PolicyKind::Random, 1, 43);
        let c = decode(&DecodeRun::new(&model, 0, other, 1.0)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn total_logprob_is_additive() {
        let model = chain4();
        let policy = PolicyConfig::new(PolicyKind::Random, 2, 3);
        let t = decode(&DecodeRun::new(&model, 0, policy, 1.0)).unwrap();
        let total = trajectory_logprob(&t).unwrap();
        assert!((total - t.total_logprob).abs() < 1e-9);
    }

    #[test]
    fn one_denoiser_query_per_step() {
        struct Counting<'a> {
            inner: &'a FactorModel,
            calls: AtomicUsize,
        }
        impl Denoiser for Counting<'_> {
            fn vocab(&self) -> &Vocabulary {
                Denoiser::vocab(self.inner)
            }
            fn seq_len(&self) -> usize {
                self.inner.seq_len()
            }
            fn conditionals(
                &self,
                prompt: PromptId,
                seq: &TokenSeq,
            ) -> Result<Vec<(usize, TokenDistribution)>, DenoiserError> {
                self.calls.fetch_add(1, Ordering::Relaxed);
                self.inner.conditionals(prompt, seq)
            }
        }
        let model = chain4();
        let counting = Counting {
            inner: &model,
            calls: AtomicUsize::new(0),
        };
        let policy = PolicyConfig::new(PolicyKind::TopKMargin, 2, 0);
        decode(&DecodeRun::new(&counting, 0, policy, 0.9)).unwrap();
        // n / k = 4 / 2 = 2 steps, one query each.
        assert_eq!(counting.calls.load(Ordering::Relaxed), 2);
    }

    #[test]
    fn semi_ar_blocks_reveal_in_order() {
        let model = chain4();
        let policy = PolicyConfig::new(PolicyKind::SemiAr { block_size: 2 }, 1, 5)
            .with_within_block(WithinBlock::Random);
        let t = decode(&DecodeRun::new(&model, 0, policy, 1.0)).unwrap();
        let schedule = t.schedule();
        for i in 0..2usize {
            for j in 2..4usize {
                let ti = schedule.reveal_step(i).unwrap();
                let tj = schedule.reveal_step(j).unwrap();
                assert!(ti < tj, "position {i} revealed at {ti}, {j} at {tj}");
            }
        }
    }

    /// Boosted filler makes margin selection sweep from the tail toward the
    /// head.
    #[test]
    fn biased_margin_reveals_tail_first() {
        let vocab = vocab6();
        let v = vocab.size();
        let mut unary = vec![0.0; v];
        unary[3] = 0.02; // filler leak
        unary[4] = 1.0;
        unary[5] = 0.6;
        let factors = (0..6)
            .map(|p| Factor::new(vec![p], unary.clone()))
            .collect();
        let base = FactorModel::new(6, vocab, BTreeMap::from([(0, factors)])).unwrap();
        let biased = BiasSpec::new(base, 60.0);

        let policy = PolicyConfig::new(PolicyKind::TopKMargin, 1, 1);
        let t = decode(&DecodeRun::new(&biased, 0, policy, 0.0)).unwrap();
        let schedule = t.schedule();
        let times: Vec<f64> = (0..6)
            .map(|p| schedule.reveal_step(p).unwrap() as f64)
            .collect();
        // Rank correlation between position and reveal time is negative.
        let n = times.len() as f64;
        let mean_pos = (n - 1.0) / 2.0;
        let mean_t = times.iter().sum::<f64>() / n;
        let cov: f64 = times
            .iter()
            .enumerate()
            .map(|(p, &t)| (p as f64 - mean_pos) * (t - mean_t))
            .sum();
        assert!(cov < 0.0, "reveal times {times:?}");
    }

    #[test]
    fn collapse_detector_examples() {
        let vocab = vocab6();
        let ae = vocab.after_eot_id();
        let eot = vocab.eot_id();

        let all_filler = TokenSeq::complete(&vocab, vec![ae; 6]);
        let report = detect_collapse(&all_filler, &vocab, DEFAULT_COLLAPSE_THRESHOLD);
        assert!(report.collapsed);
        assert_eq!(report.fraction, 1.0);

        let legit = TokenSeq::complete(&vocab, vec![4, 5, 4, eot, ae, ae]);
        let report = detect_collapse(&legit, &vocab, DEFAULT_COLLAPSE_THRESHOLD);
        assert!(!report.collapsed);
        assert_eq!(report.fraction, 0.0);

        // Half the interior is filler with no end marker anywhere.
        let interior = TokenSeq::complete(&vocab, vec![ae, ae, ae, 4, 4, 4]);
        let report = detect_collapse(&interior, &vocab, 0.3);
        assert!(report.collapsed);
        assert_eq!(report.fraction, 0.5);

        // Filler tail without a preceding end marker is illegitimate.
        let orphan_tail = TokenSeq::complete(&vocab, vec![4, 4, 4, 4, ae, ae]);
        let report = detect_collapse(&orphan_tail, &vocab, DEFAULT_COLLAPSE_THRESHOLD);
        assert!(!report.collapsed); // 2/6 < 0.5
        assert!((report.fraction - 2.0 / 6.0).abs() < 1e-12);
    }
}
