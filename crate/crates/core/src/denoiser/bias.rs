//! The biased denoiser: exact conditionals plus a filler-token logit bonus.

use crate::dist::TokenDistribution;
use crate::seq::TokenSeq;
use crate::vocab::{PromptId, Vocabulary};

use super::factor::FactorModel;
use super::{Denoiser, DenoiserError};

/// Position/progress profile of the filler bonus: grows toward the tail and
/// shrinks as real (non-filler) tokens get revealed.
///
/// `g(i, r) = ((i + 1) / n) * 1 / (1 + r)` for 0-based position `i`, where
/// `r` counts revealed non-filler tokens.
pub fn filler_bias(position: usize, n: usize, revealed_non_filler: usize) -> f64 {
    ((position + 1) as f64 / n as f64) / (1.0 + revealed_non_filler as f64)
}

/// A base model whose conditionals get an additive logit bonus
/// `tail_boost * g(i, r)` on the after-end filler token. With
/// `tail_boost = 0` the behavior is bit-for-bit the base model's.
#[derive(Debug)]
pub struct BiasSpec {
    pub base: FactorModel,
    pub tail_boost: f64,
}

impl BiasSpec {
    pub fn new(base: FactorModel, tail_boost: f64) -> Self {
        assert!(tail_boost >= 0.0, "tail_boost must be non-negative");
        Self { base, tail_boost }
    }

    /// Exact conditionals of the base model, then the filler bonus applied
    /// per masked position and renormalized.
    pub fn biased_conditionals(
        &self,
        prompt: PromptId,
        seq: &TokenSeq,
    ) -> Result<Vec<(usize, TokenDistribution)>, DenoiserError> {
        let mut dists = self.base.exact_conditionals(prompt, seq)?;
        if self.tail_boost == 0.0 {
            return Ok(dists);
        }
        let vocab = self.base.vocab();
        let n = self.base.seq_len();
        let filler = vocab.after_eot_id();
        let revealed_non_filler = (0..seq.len())
            .filter(|&i| seq.is_revealed(i) && seq.get(i) != filler)
            .count();
        for (pos, dist) in &mut dists {
            let boost = self.tail_boost * filler_bias(*pos, n, revealed_non_filler);
            let mut weights = dist.probs().to_vec();
            weights[filler] *= boost.exp();
            *dist = TokenDistribution::from_weights(&weights, vocab.mask_id())
                .expect("boosting cannot zero a distribution");
        }
        Ok(dists)
    }
}

impl Denoiser for BiasSpec {
    fn vocab(&self) -> &Vocabulary {
        self.base.vocab()
    }

    fn seq_len(&self) -> usize {
        self.base.seq_len()
    }

    fn conditionals(
        &self,
        prompt: PromptId,
        seq: &TokenSeq,
    ) -> Result<Vec<(usize, TokenDistribution)>, DenoiserError> {
        self.biased_conditionals(prompt, seq)
    }
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use super::*;
    use crate::denoiser::factor::Factor;

    /// n=4 model where every position weakly prefers token 4 but gives the
    /// filler (id 3) some mass everywhere.
    fn leaky_model() -> FactorModel {
        let vocab = Vocabulary::new(6, 0, 2, 3, 1).unwrap();
        let mut unary = vec![0.0; 6];
        unary[3] = 0.05; // filler
        unary[4] = 1.0;
        unary[5] = 0.4;
        let factors = (0..4).map(|p| Factor::new(vec![p], unary.clone())).collect();
        FactorModel::new(4, vocab, BTreeMap::from([(0, factors)])).unwrap()
    }

    #[test]
    fn zero_boost_reduces_to_exact() {
        let spec = BiasSpec::new(leaky_model(), 0.0);
        let seq = TokenSeq::masked(spec.vocab(), 4);
        let biased = spec.biased_conditionals(0, &seq).unwrap();
        let exact = spec.base.exact_conditionals(0, &seq).unwrap();
        // Bit-for-bit identical: the boost path is skipped entirely.
        assert_eq!(biased, exact);
    }

    #[test]
    fn large_boost_floods_every_position() {
        let spec = BiasSpec::new(leaky_model(), 80.0);
        let seq = TokenSeq::masked(spec.vocab(), 4);
        for (_, d) in spec.biased_conditionals(0, &seq).unwrap() {
            assert_eq!(d.argmax(), 3);
        }
    }

    #[test]
    fn revealing_content_weakens_the_filler() {
        let spec = BiasSpec::new(leaky_model(), 6.0);
        let empty = TokenSeq::masked(spec.vocab(), 4);
        let filler_at = |dists: &[(usize, TokenDistribution)], pos: usize| {
            dists.iter().find(|(p, _)| *p == pos).unwrap().1.prob(3)
        };
        let before = spec.biased_conditionals(0, &empty).unwrap();

        let mut partial = TokenSeq::masked(spec.vocab(), 4);
        partial.reveal(0, 4);
        partial.reveal(1, 4);
        let after = spec.biased_conditionals(0, &partial).unwrap();

        // Same tail position, strictly less filler mass once content is out.
        assert!(filler_at(&after, 3) < filler_at(&before, 3));
    }

    #[test]
    fn revealed_filler_does_not_count_as_content() {
        let spec = BiasSpec::new(leaky_model(), 6.0);
        let empty = TokenSeq::masked(spec.vocab(), 4);
        let before = spec.biased_conditionals(0, &empty).unwrap();

        let mut with_filler = TokenSeq::masked(spec.vocab(), 4);
        with_filler.reveal(0, 3);
        let after = spec.biased_conditionals(0, &with_filler).unwrap();

        // r stays 0, so the bonus at a untouched position is unchanged; the
        // conditional itself is also unchanged because factors are unary.
        let probe = |dists: &[(usize, TokenDistribution)]| {
            dists.iter().find(|(p, _)| *p == 3).unwrap().1.prob(3)
        };
        assert!((probe(&before) - probe(&after)).abs() < 1e-12);
    }

    #[test]
    fn bias_profile_shape() {
        let n = 8;
        // Increasing in position.
        assert!(filler_bias(7, n, 0) > filler_bias(0, n, 0));
        // Decreasing in revealed content.
        assert!(filler_bias(5, n, 3) < filler_bias(5, n, 0));
    }
}
