//! Mixture-of-experts aggregation over visible-set contexts.
//!
//! A "hidden expert" is the conditional `p(x_i | x[U])` indexed by the set
//! `U` of visible positions. [`mix_exact`] marginalizes over an enumerated
//! family of contexts with caller-supplied fills; [`mix_mc`] approximates
//! the mixture by running block-schedule decodes and averaging the
//! distribution each run used when it fixed the target position. Exact
//! mixing conditions on given tokens, Monte-Carlo mixing on model-generated
//! ones; the two coincide only when the schedule dynamics pin the fills.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::decode::{decode_with_observer, DecodeError, DecodeRun};
use crate::denoiser::{Denoiser, DenoiserError, FactorModel};
use crate::dist::{TokenDistribution, PROB_SUM_TOL};
use crate::policy::PolicyConfig;
use crate::rng::derive_seed;
use crate::seq::TokenSeq;
use crate::vocab::{PromptId, Token};

#[derive(Debug, Error, PartialEq)]
pub enum MixtureError {
    #[error("expert family is empty")]
    EmptyFamily,
    #[error("context {index} has {fills} fills for {visible} visible positions")]
    FillMismatch {
        index: usize,
        visible: usize,
        fills: usize,
    },
    #[error("context {index} includes the target position {target}")]
    TargetVisible { index: usize, target: usize },
    #[error("context weights sum to {0}, expected 1")]
    WeightsNotNormalized(f64),
    #[error("every context in the family is degenerate")]
    AllDegenerate,
    #[error(transparent)]
    Denoiser(#[from] DenoiserError),
    #[error(transparent)]
    Decode(#[from] DecodeError),
}

/// One expert: the set of positions visible to it and its mixture weight.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpertContext {
    /// Visible positions, excluding the target.
    pub visible: Vec<usize>,
    /// π(U): trust placed on this expert. Uniform by default; the true
    /// gating distribution is unknown, so it stays an injectable parameter.
    pub weight: f64,
}

impl ExpertContext {
    pub fn new(visible: Vec<usize>, weight: f64) -> Self {
        Self { visible, weight }
    }

    /// Uniformly weighted family over the given visible sets.
    pub fn uniform_family(sets: Vec<Vec<usize>>) -> Vec<ExpertContext> {
        let w = 1.0 / sets.len() as f64;
        sets.into_iter().map(|v| ExpertContext::new(v, w)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixExactResult {
    pub distribution: TokenDistribution,
    /// Indices of contexts excluded for zero-weight conditioning. The
    /// remaining weights were renormalized.
    pub degenerate: Vec<usize>,
}

/// Exact mixture `p_mix(x_target = a) = sum_U pi(U) p(x_target = a | x[U])`
/// over an enumerated family. `fills[j]` supplies the token for each visible
/// position of `family[j]`, in the same order.
pub fn mix_exact(
    model: &FactorModel,
    prompt: PromptId,
    target: usize,
    family: &[ExpertContext],
    fills: &[Vec<Token>],
) -> Result<MixExactResult, MixtureError> {
    if family.is_empty() {
        return Err(MixtureError::EmptyFamily);
    }
    let weight_sum: f64 = family.iter().map(|c| c.weight).sum();
    if (weight_sum - 1.0).abs() > PROB_SUM_TOL {
        return Err(MixtureError::WeightsNotNormalized(weight_sum));
    }

    let vocab_size = Denoiser::vocab(model).size();
    let mut mixed = vec![0.0f64; vocab_size];
    let mut kept_weight = 0.0f64;
    let mut degenerate = Vec::new();

    for (index, (context, fill)) in family.iter().zip(fills).enumerate() {
        if context.visible.contains(&target) {
            return Err(MixtureError::TargetVisible { index, target });
        }
        if context.visible.len() != fill.len() {
            return Err(MixtureError::FillMismatch {
                index,
                visible: context.visible.len(),
                fills: fill.len(),
            });
        }
        let mut seq = TokenSeq::masked(Denoiser::vocab(model), model.seq_len());
        for (&pos, &tok) in context.visible.iter().zip(fill) {
            seq.reveal(pos, tok);
        }
        match model.exact_conditionals(prompt, &seq) {
            Ok(dists) => {
                let dist = dists
                    .iter()
                    .find(|(p, _)| *p == target)
                    .map(|(_, d)| d)
                    .expect("target is masked");
                for (m, &p) in mixed.iter_mut().zip(dist.probs()) {
                    *m += context.weight * p;
                }
                kept_weight += context.weight;
            }
            Err(DenoiserError::ImpossibleContext) => degenerate.push(index),
            Err(e) => return Err(e.into()),
        }
    }
    if kept_weight <= 0.0 {
        return Err(MixtureError::AllDegenerate);
    }
    for m in &mut mixed {
        *m /= kept_weight;
    }
    let distribution = TokenDistribution::from_weights(&mixed, Denoiser::vocab(model).mask_id())
        .expect("kept experts have positive weight");
    Ok(MixExactResult {
        distribution,
        degenerate,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixMcResult {
    /// Mean captured distribution, averaged uniformly over experts.
    pub mean: TokenDistribution,
    /// Per-token standard error of the stratified mean.
    pub std_err: Vec<f64>,
}

/// Monte-Carlo mixture: run `samples_per_expert` seeded decodes under each
/// expert schedule, record the conditional distribution the run sampled from
/// when it fixed `target`, and average. Seeds derive from
/// `(seed, expert index, sample index)`, so fan-out order cannot change the
/// estimate.
pub fn mix_mc(
    denoiser: &dyn Denoiser,
    prompt: PromptId,
    target: usize,
    expert_configs: &[PolicyConfig],
    temperature: f64,
    samples_per_expert: usize,
    seed: u64,
) -> Result<MixMcResult, MixtureError> {
    if expert_configs.is_empty() || samples_per_expert == 0 {
        return Err(MixtureError::EmptyFamily);
    }
    let vocab_size = denoiser.vocab().size();
    let experts = expert_configs.len() as f64;
    let mut mean = vec![0.0f64; vocab_size];
    let mut variance_of_mean = vec![0.0f64; vocab_size];

    for (e, config) in expert_configs.iter().enumerate() {
        // Per-expert running mean and M2 (Welford) per token.
        let mut e_mean = vec![0.0f64; vocab_size];
        let mut e_m2 = vec![0.0f64; vocab_size];
        for s in 0..samples_per_expert {
            let mut policy = *config;
            policy.seed = derive_seed(seed, &[e as u64, s as u64]);
            let run = DecodeRun::new(denoiser, prompt, policy, temperature);
            let mut captured: Option<TokenDistribution> = None;
            decode_with_observer(&run, |_, pos, dist| {
                if pos == target {
                    captured = Some(dist.clone());
                }
            })?;
            let captured = captured.expect("complete decode fixes every position");
            let count = (s + 1) as f64;
            for (t, &p) in captured.probs().iter().enumerate() {
                let delta = p - e_mean[t];
                e_mean[t] += delta / count;
                e_m2[t] += delta * (p - e_mean[t]);
            }
        }
        for t in 0..vocab_size {
            mean[t] += e_mean[t] / experts;
            if samples_per_expert > 1 {
                let var = e_m2[t] / (samples_per_expert - 1) as f64;
                variance_of_mean[t] += var / samples_per_expert as f64 / (experts * experts);
            }
        }
    }
    let std_err = variance_of_mean.iter().map(|v| v.sqrt()).collect();
    let mean = TokenDistribution::from_weights(&mean, denoiser.vocab().mask_id())
        .expect("captured distributions are normalized");
    Ok(MixMcResult { mean, std_err })
}

/// Most frequent value and the set of values tied at the maximal count.
/// The returned value is the earliest-appearing member of the tie set; tie
/// resolution beyond that is the caller's business.
pub fn majority_mode<T: Ord + Clone>(samples: &[T]) -> Option<(T, Vec<T>)> {
    if samples.is_empty() {
        return None;
    }
    let mut counts: BTreeMap<&T, usize> = BTreeMap::new();
    for s in samples {
        *counts.entry(s).or_insert(0) += 1;
    }
    let max = *counts.values().max().expect("non-empty");
    let tie_set: Vec<T> = counts
        .iter()
        .filter(|(_, &c)| c == max)
        .map(|(v, _)| (*v).clone())
        .collect();
    let winner = samples
        .iter()
        .find(|s| counts[s] == max)
        .expect("non-empty")
        .clone();
    Some((winner, tie_set))
}
