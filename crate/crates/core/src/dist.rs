//! Per-position token distributions.

use rand::Rng;

use crate::vocab::Token;

/// Tolerance for the sums-to-one invariant.
pub const PROB_SUM_TOL: f64 = 1e-9;

/// A probability distribution over the vocabulary. The mask id carries
/// probability exactly zero: a denoiser only ever predicts real tokens.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenDistribution {
    probs: Vec<f64>,
}

impl TokenDistribution {
    /// Normalize non-negative `weights` into a distribution. The entry at
    /// `mask_id` must be zero. Returns `None` when every weight is zero.
    pub fn from_weights(weights: &[f64], mask_id: Token) -> Option<Self> {
        debug_assert!(weights.iter().all(|&w| w >= 0.0 && w.is_finite()));
        debug_assert_eq!(weights[mask_id], 0.0, "mask id must have zero weight");
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return None;
        }
        Some(Self {
            probs: weights.iter().map(|&w| w / total).collect(),
        })
    }

    /// A point mass at `token`.
    pub fn point_mass(len: usize, token: Token) -> Self {
        let mut probs = vec![0.0; len];
        probs[token] = 1.0;
        Self { probs }
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, token: Token) -> f64 {
        self.probs[token]
    }

    /// Highest-probability token, lowest index on ties.
    pub fn argmax(&self) -> Token {
        let mut best = 0;
        for (i, &p) in self.probs.iter().enumerate() {
            if p > self.probs[best] {
                best = i;
            }
        }
        best
    }

    /// Top-1 probability (the selection confidence).
    pub fn top1(&self) -> f64 {
        self.probs[self.argmax()]
    }

    /// Top-1 minus top-2 probability.
    pub fn margin(&self) -> f64 {
        let top = self.argmax();
        let mut second = 0.0f64;
        for (i, &p) in self.probs.iter().enumerate() {
            if i != top && p > second {
                second = p;
            }
        }
        self.probs[top] - second
    }

    /// Draw a token. With `temperature > 0` the draw follows
    /// `probs^(1/temperature)` renormalized; at `temperature == 0` it is the
    /// argmax with lowest-index tie-breaking (no randomness consumed).
    pub fn sample<R: Rng + ?Sized>(&self, temperature: f64, rng: &mut R) -> Token {
        assert!(temperature >= 0.0 && temperature.is_finite());
        if temperature == 0.0 {
            return self.argmax();
        }
        let inv = 1.0 / temperature;
        let weights: Vec<f64> = self
            .probs
            .iter()
            .map(|&p| if p > 0.0 { p.powf(inv) } else { 0.0 })
            .collect();
        let total: f64 = weights.iter().sum();
        let mut u = rng.gen::<f64>() * total;
        for (i, &w) in weights.iter().enumerate() {
            if w <= 0.0 {
                continue;
            }
            u -= w;
            if u <= 0.0 {
                return i;
            }
        }
        // Rounding can leave a sliver past the last positive weight.
        weights
            .iter()
            .rposition(|&w| w > 0.0)
            .expect("distribution has positive support")
    }

    /// Sums-to-one within tolerance and no negative entries.
    pub fn is_valid(&self, mask_id: Token) -> bool {
        let sum: f64 = self.probs.iter().sum();
        (sum - 1.0).abs() <= PROB_SUM_TOL
            && self.probs.iter().all(|&p| p >= 0.0)
            && self.probs[mask_id] == 0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn point_mass_samples_itself() {
        let d = TokenDistribution::point_mass(5, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for temp in [0.0, 0.5, 1.0, 2.0] {
            assert_eq!(d.sample(temp, &mut rng), 3);
        }
    }

    #[test]
    fn zero_temperature_is_argmax() {
        let d = TokenDistribution::from_weights(&[0.0, 0.2, 0.5, 0.3], 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(d.sample(0.0, &mut rng), 2);
    }

    #[test]
    fn argmax_breaks_ties_low() {
        let d = TokenDistribution::from_weights(&[0.0, 0.4, 0.4, 0.2], 0).unwrap();
        assert_eq!(d.argmax(), 1);
    }

    #[test]
    fn margin_of_point_mass_is_one() {
        let d = TokenDistribution::point_mass(4, 2);
        assert!((d.margin() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn uniform_pair_sampling_is_balanced() {
        // 1e5 draws of a fair coin: each side within 0.5 +/- 0.01 (>3 sigma).
        let d = TokenDistribution::from_weights(&[0.0, 1.0, 1.0], 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let n = 100_000;
        let ones = (0..n).filter(|_| d.sample(1.0, &mut rng) == 1).count();
        let freq = ones as f64 / n as f64;
        assert!((freq - 0.5).abs() < 0.01, "freq = {freq}");
    }

    #[test]
    fn temperature_sharpens() {
        let d = TokenDistribution::from_weights(&[0.0, 3.0, 1.0], 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 50_000;
        let count = |temp: f64, rng: &mut ChaCha8Rng| {
            (0..n).filter(|_| d.sample(temp, rng) == 1).count() as f64 / n as f64
        };
        let cold = count(0.5, &mut rng);
        let hot = count(2.0, &mut rng);
        assert!(cold > hot, "cold={cold} hot={hot}");
    }

    #[test]
    fn all_zero_weights_are_rejected() {
        assert!(TokenDistribution::from_weights(&[0.0, 0.0, 0.0], 0).is_none());
    }
}
