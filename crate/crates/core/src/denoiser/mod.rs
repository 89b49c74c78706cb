//! Conditional denoisers over small, exactly enumerable joints.
//!
//! A denoiser answers one query: given a partially revealed sequence and a
//! prompt id, produce the conditional distribution of every masked position.
//! Two reference implementations live here: [`FactorModel`] computes the true
//! conditionals of a factored joint by brute-force enumeration, and
//! [`BiasSpec`] wraps a base model with an additive logit bonus on the
//! trailing filler token, reproducing the over-confident filler pathology of
//! trained masked-diffusion models.

mod bias;
mod factor;
pub mod file;

pub use bias::{filler_bias, BiasSpec};
pub use factor::{Factor, FactorModel, ENUMERATION_LIMIT};

use thiserror::Error;

use crate::dist::TokenDistribution;
use crate::seq::TokenSeq;
use crate::vocab::{PromptId, Vocabulary};

#[derive(Debug, Error, PartialEq)]
pub enum DenoiserError {
    #[error("unknown prompt id {0}")]
    UnknownPrompt(PromptId),
    #[error("conditioning context has zero joint weight (impossible context)")]
    ImpossibleContext,
    #[error(
        "enumeration of {tokens}^{positions} assignments exceeds the limit of {limit}"
    )]
    EnumerationLimit {
        tokens: usize,
        positions: usize,
        limit: u64,
    },
    #[error("sequence length {got} does not match model length {expected}")]
    LengthMismatch { got: usize, expected: usize },
    #[error("no masked positions to predict")]
    NothingMasked,
}

/// A conditional model `p(x_i | prompt, revealed tokens)`.
///
/// Implementations are read-only after construction and safe to query from
/// many decode runs at once; randomness always belongs to the caller.
pub trait Denoiser: Sync {
    fn vocab(&self) -> &Vocabulary;

    /// Fixed output length `n`.
    fn seq_len(&self) -> usize;

    /// Conditional distribution for every masked position of `seq`, in
    /// ascending position order.
    fn conditionals(
        &self,
        prompt: PromptId,
        seq: &TokenSeq,
    ) -> Result<Vec<(usize, TokenDistribution)>, DenoiserError>;
}
