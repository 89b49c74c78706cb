//! Fixed-length token buffers with per-position reveal state.

use crate::vocab::{Token, Vocabulary};

/// A length-`n` token buffer where each position is either revealed (carries
/// a real token) or still masked (carries the mask id). The two views are
/// kept coherent: `tokens[i]` equals the mask id exactly when `revealed[i]`
/// is false.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSeq {
    tokens: Vec<Token>,
    revealed: Vec<bool>,
    mask_id: Token,
}

impl TokenSeq {
    /// A fully masked sequence of length `n`.
    pub fn masked(vocab: &Vocabulary, n: usize) -> Self {
        Self {
            tokens: vec![vocab.mask_id(); n],
            revealed: vec![false; n],
            mask_id: vocab.mask_id(),
        }
    }

    /// A fully revealed sequence. Panics if any token is the mask id.
    pub fn complete(vocab: &Vocabulary, tokens: Vec<Token>) -> Self {
        assert!(
            tokens.iter().all(|&t| t != vocab.mask_id() && t < vocab.size()),
            "complete sequences must not contain the mask id"
        );
        let n = tokens.len();
        Self {
            tokens,
            revealed: vec![true; n],
            mask_id: vocab.mask_id(),
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[Token] {
        &self.tokens
    }

    pub fn get(&self, pos: usize) -> Token {
        self.tokens[pos]
    }

    pub fn is_revealed(&self, pos: usize) -> bool {
        self.revealed[pos]
    }

    /// Fix `token` at `pos`. A position can only be revealed once, and the
    /// mask id is never a real token.
    pub fn reveal(&mut self, pos: usize, token: Token) {
        assert!(!self.revealed[pos], "position {pos} already revealed");
        assert_ne!(token, self.mask_id, "cannot reveal the mask id");
        self.tokens[pos] = token;
        self.revealed[pos] = true;
    }

    pub fn masked_positions(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| !self.revealed[i]).collect()
    }

    pub fn masked_count(&self) -> usize {
        self.revealed.iter().filter(|&&r| !r).count()
    }

    pub fn revealed_count(&self) -> usize {
        self.len() - self.masked_count()
    }

    pub fn is_complete(&self) -> bool {
        self.revealed.iter().all(|&r| r)
    }

    /// Mask/reveal coherence: `tokens[i] == mask_id` iff `revealed[i]` is
    /// false. Holds by construction; exposed so tests can assert it at every
    /// intermediate decode step.
    pub fn is_coherent(&self) -> bool {
        self.tokens
            .iter()
            .zip(&self.revealed)
            .all(|(&t, &r)| (t == self.mask_id) == !r)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vocab() -> Vocabulary {
        Vocabulary::new(6, 0, 1, 2, 3).unwrap()
    }

    #[test]
    fn masked_sequence_is_coherent() {
        let seq = TokenSeq::masked(&vocab(), 5);
        assert_eq!(seq.masked_count(), 5);
        assert!(seq.is_coherent());
        assert!(!seq.is_complete());
    }

    #[test]
    fn reveal_updates_both_views() {
        let mut seq = TokenSeq::masked(&vocab(), 3);
        seq.reveal(1, 4);
        assert_eq!(seq.get(1), 4);
        assert!(seq.is_revealed(1));
        assert_eq!(seq.masked_positions(), vec![0, 2]);
        assert!(seq.is_coherent());
    }

    #[test]
    #[should_panic(expected = "already revealed")]
    fn double_reveal_panics() {
        let mut seq = TokenSeq::masked(&vocab(), 3);
        seq.reveal(1, 4);
        seq.reveal(1, 5);
    }

    #[test]
    #[should_panic(expected = "cannot reveal the mask id")]
    fn revealing_mask_id_panics() {
        let mut seq = TokenSeq::masked(&vocab(), 3);
        seq.reveal(0, 0);
    }
}
