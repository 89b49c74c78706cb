//! The exact denoiser: a factored joint queried by enumeration.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use crate::dist::TokenDistribution;
use crate::seq::TokenSeq;
use crate::vocab::{PromptId, Token, Vocabulary};

use super::{Denoiser, DenoiserError};

/// Hard ceiling on `(vocab - 1)^(free positions)` per enumeration sweep.
pub const ENUMERATION_LIMIT: u64 = 10_000_000;

/// A non-negative weight table over a small set of positions. Tables are
/// row-major with the first scope position as the slowest index, one entry
/// per vocabulary token; entries at the mask id must be zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Factor {
    pub scope: Vec<usize>,
    pub table: Vec<f64>,
}

impl Factor {
    pub fn new(scope: Vec<usize>, table: Vec<f64>) -> Self {
        Self { scope, table }
    }

    fn lookup(&self, tokens: &[Token], vocab_size: usize) -> f64 {
        let mut idx = 0;
        for &pos in &self.scope {
            idx = idx * vocab_size + tokens[pos];
        }
        self.table[idx]
    }

    fn touches(&self, masked: &[bool]) -> bool {
        self.scope.iter().any(|&p| masked[p])
    }
}

/// A small joint distribution `w(x_1..x_n) = prod_f f(x[scope_f])`, with a
/// distinct factor set per prompt id. This is the exact minimizer of the
/// masked denoising objective: its conditionals are the true conditionals of
/// the joint, computed by summing weights over all completions of the masked
/// positions.
#[derive(Debug, Clone)]
pub struct FactorModel {
    n: usize,
    vocab: Vocabulary,
    prompts: BTreeMap<PromptId, Vec<Factor>>,
    /// Lazily computed normalizing constant per prompt.
    z: BTreeMap<PromptId, OnceLock<f64>>,
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ModelError {
    #[error("sequence length {0} exceeds the enumeration-friendly maximum of 12")]
    SequenceTooLong(usize),
    #[error("vocabulary size {0} exceeds the enumeration-friendly maximum of 16")]
    VocabTooLarge(usize),
    #[error("model must define at least one prompt")]
    NoPrompts,
    #[error("factor scope position {0} is out of range")]
    ScopeOutOfRange(usize),
    #[error("factor scope must have 1 to 3 positions, got {0}")]
    BadArity(usize),
    #[error("factor over {scope:?} has {got} weights, expected {expected}")]
    BadTableSize {
        scope: Vec<usize>,
        got: usize,
        expected: usize,
    },
    #[error("factor weights must be finite and non-negative")]
    NegativeWeight,
    #[error("factor over {0:?} has a non-zero weight at the mask id")]
    MaskWeight(Vec<usize>),
}

impl FactorModel {
    pub fn new(
        n: usize,
        vocab: Vocabulary,
        prompts: BTreeMap<PromptId, Vec<Factor>>,
    ) -> Result<Self, ModelError> {
        if n > 12 {
            return Err(ModelError::SequenceTooLong(n));
        }
        if vocab.size() > 16 {
            return Err(ModelError::VocabTooLarge(vocab.size()));
        }
        if prompts.is_empty() {
            return Err(ModelError::NoPrompts);
        }
        let v = vocab.size();
        for factors in prompts.values() {
            for f in factors {
                if f.scope.is_empty() || f.scope.len() > 3 {
                    return Err(ModelError::BadArity(f.scope.len()));
                }
                if let Some(&p) = f.scope.iter().find(|&&p| p >= n) {
                    return Err(ModelError::ScopeOutOfRange(p));
                }
                let expected = v.pow(f.scope.len() as u32);
                if f.table.len() != expected {
                    return Err(ModelError::BadTableSize {
                        scope: f.scope.clone(),
                        got: f.table.len(),
                        expected,
                    });
                }
                if f.table.iter().any(|&w| !w.is_finite() || w < 0.0) {
                    return Err(ModelError::NegativeWeight);
                }
                // Any entry whose index touches the mask id must be zero.
                let mut idx = vec![0usize; f.scope.len()];
                for (flat, &w) in f.table.iter().enumerate() {
                    let mut rem = flat;
                    for slot in idx.iter_mut().rev() {
                        *slot = rem % v;
                        rem /= v;
                    }
                    if w != 0.0 && idx.iter().any(|&t| t == vocab.mask_id()) {
                        return Err(ModelError::MaskWeight(f.scope.clone()));
                    }
                }
            }
        }
        let z = prompts.keys().map(|&p| (p, OnceLock::new())).collect();
        Ok(Self {
            n,
            vocab,
            prompts,
            z,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn prompt_ids(&self) -> impl Iterator<Item = PromptId> + '_ {
        self.prompts.keys().copied()
    }

    pub fn factors(&self, prompt: PromptId) -> Result<&[Factor], DenoiserError> {
        self.prompts
            .get(&prompt)
            .map(|f| f.as_slice())
            .ok_or(DenoiserError::UnknownPrompt(prompt))
    }

    fn check_limit(&self, free: usize) -> Result<(), DenoiserError> {
        let tokens = self.vocab.size() - 1;
        let count = (tokens as u128).pow(free as u32);
        if count > ENUMERATION_LIMIT as u128 {
            return Err(DenoiserError::EnumerationLimit {
                tokens,
                positions: free,
                limit: ENUMERATION_LIMIT,
            });
        }
        Ok(())
    }

    /// Unnormalized weight of a full assignment.
    pub fn joint_weight(&self, prompt: PromptId, tokens: &[Token]) -> Result<f64, DenoiserError> {
        let factors = self.factors(prompt)?;
        let v = self.vocab.size();
        Ok(factors.iter().map(|f| f.lookup(tokens, v)).product())
    }

    /// Normalizing constant `Z = sum_x w(x)`, computed once per prompt.
    pub fn partition(&self, prompt: PromptId) -> Result<f64, DenoiserError> {
        if let Some(cell) = self.z.get(&prompt) {
            if let Some(&z) = cell.get() {
                return Ok(z);
            }
        } else {
            return Err(DenoiserError::UnknownPrompt(prompt));
        }
        let mut z = 0.0;
        self.for_each_assignment(prompt, |_, w| z += w)?;
        let cell = &self.z[&prompt];
        Ok(*cell.get_or_init(|| z))
    }

    /// `log p(x)` of a full assignment under the normalized joint. Returns
    /// negative infinity for zero-weight assignments.
    pub fn joint_logprob(&self, prompt: PromptId, tokens: &[Token]) -> Result<f64, DenoiserError> {
        let w = self.joint_weight(prompt, tokens)?;
        let z = self.partition(prompt)?;
        Ok(w.ln() - z.ln())
    }

    /// Candidate tokens for `pos`: non-mask tokens not zeroed out by a
    /// unary factor. Skipping the others is exact — they make every
    /// assignment weight zero.
    fn position_support(&self, factors: &[Factor], pos: usize) -> Vec<Token> {
        self.vocab
            .predictable()
            .filter(|&t| {
                factors
                    .iter()
                    .all(|f| f.scope.len() != 1 || f.scope[0] != pos || f.table[t] > 0.0)
            })
            .collect()
    }

    /// Visit every full assignment with positive support (mask id and
    /// unary-zeroed tokens excluded) with its unnormalized weight. Guarded
    /// by [`ENUMERATION_LIMIT`].
    pub fn for_each_assignment(
        &self,
        prompt: PromptId,
        mut f: impl FnMut(&[Token], f64),
    ) -> Result<(), DenoiserError> {
        let factors = self.factors(prompt)?;
        self.check_limit(self.n)?;
        let free: Vec<usize> = (0..self.n).collect();
        let mut tokens = vec![0usize; self.n];
        let supports: Vec<Vec<Token>> = free
            .iter()
            .map(|&p| self.position_support(factors, p))
            .collect();
        if supports.iter().any(|s| s.is_empty()) {
            return Ok(());
        }
        let v = self.vocab.size();
        enumerate(&mut tokens, &free, &supports, &mut |t| {
            let w = factors.iter().map(|fa| fa.lookup(t, v)).product();
            f(t, w);
        });
        Ok(())
    }

    /// The highest-weight full assignment (first in enumeration order on
    /// ties) and its normalized probability.
    pub fn mode(&self, prompt: PromptId) -> Result<(Vec<Token>, f64), DenoiserError> {
        let mut best: Option<(Vec<Token>, f64)> = None;
        let mut z = 0.0;
        self.for_each_assignment(prompt, |tokens, w| {
            z += w;
            match &best {
                Some((_, bw)) if *bw >= w => {}
                _ if w > 0.0 => best = Some((tokens.to_vec(), w)),
                _ => {}
            }
        })?;
        let (tokens, w) = best.ok_or(DenoiserError::ImpossibleContext)?;
        Ok((tokens, w / z))
    }

    /// True conditional marginals for every masked position of `seq`,
    /// obtained by one enumeration sweep over all completions of the masked
    /// set.
    pub fn exact_conditionals(
        &self,
        prompt: PromptId,
        seq: &TokenSeq,
    ) -> Result<Vec<(usize, TokenDistribution)>, DenoiserError> {
        let factors = self.factors(prompt)?;
        if seq.len() != self.n {
            return Err(DenoiserError::LengthMismatch {
                got: seq.len(),
                expected: self.n,
            });
        }
        let masked = seq.masked_positions();
        if masked.is_empty() {
            return Err(DenoiserError::NothingMasked);
        }
        self.check_limit(masked.len())?;

        let mut is_masked = vec![false; self.n];
        for &p in &masked {
            is_masked[p] = true;
        }
        let v = self.vocab.size();
        let mut tokens = seq.tokens().to_vec();

        // Factors fully inside the revealed context contribute a constant.
        let (active, fixed): (Vec<&Factor>, Vec<&Factor>) =
            factors.iter().partition(|f| f.touches(&is_masked));
        let const_w: f64 = fixed.iter().map(|f| f.lookup(&tokens, v)).product();

        let mut acc = vec![vec![0.0f64; v]; masked.len()];
        let mut total = 0.0f64;
        let supports: Vec<Vec<Token>> = masked
            .iter()
            .map(|&p| self.position_support(factors, p))
            .collect();
        if supports.iter().any(|s| s.is_empty()) {
            return Err(DenoiserError::ImpossibleContext);
        }
        enumerate(&mut tokens, &masked, &supports, &mut |t| {
            let w = const_w * active.iter().map(|f| f.lookup(t, v)).product::<f64>();
            if w > 0.0 {
                total += w;
                for (j, &pos) in masked.iter().enumerate() {
                    acc[j][t[pos]] += w;
                }
            }
        });
        if total <= 0.0 {
            return Err(DenoiserError::ImpossibleContext);
        }
        let dists = masked
            .iter()
            .zip(acc)
            .map(|(&pos, weights)| {
                let dist = TokenDistribution::from_weights(&weights, self.vocab.mask_id())
                    .expect("positive total weight");
                (pos, dist)
            })
            .collect();
        Ok(dists)
    }
}

impl Denoiser for FactorModel {
    fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    fn seq_len(&self) -> usize {
        self.n
    }

    fn conditionals(
        &self,
        prompt: PromptId,
        seq: &TokenSeq,
    ) -> Result<Vec<(usize, TokenDistribution)>, DenoiserError> {
        self.exact_conditionals(prompt, seq)
    }
}

/// Odometer over assignments of `free` positions, each drawing from its own
/// candidate list. `tokens` holds the fixed context; free positions are
/// always overwritten before the callback fires.
fn enumerate(
    tokens: &mut Vec<Token>,
    free: &[usize],
    supports: &[Vec<Token>],
    f: &mut impl FnMut(&[Token]),
) {
    match free.split_first() {
        None => f(tokens),
        Some((&first, rest)) => {
            let (head, tail) = supports.split_first().expect("one list per free position");
            for &t in head {
                tokens[first] = t;
                enumerate(tokens, rest, tail, f);
            }
        }
    }
}
