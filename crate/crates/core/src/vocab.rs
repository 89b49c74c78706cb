//! Vocabulary layout and reserved token ids.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Token index into a [`Vocabulary`].
pub type Token = usize;

/// Identifier selecting one conditioning context (one factor table set) of a
/// model. Prompts live outside the generated positions; they only choose
/// which joint distribution answers the conditional queries.
pub type PromptId = u32;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum VocabError {
    #[error("vocabulary size {0} is below the minimum of 4")]
    TooSmall(usize),
    #[error("special token id {id} is out of range for vocabulary size {size}")]
    IdOutOfRange { id: Token, size: usize },
    #[error("special token ids must be pairwise distinct")]
    DuplicateSpecial,
}

/// A fixed vocabulary with the four reserved ids every experiment needs:
/// the mask placeholder, the end-of-text marker, the trailing filler that
/// pads past the end marker, and the marker the parser uses to locate
/// answers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary {
    size: usize,
    mask_id: Token,
    eot_id: Token,
    after_eot_id: Token,
    answer_marker_id: Token,
}

impl Vocabulary {
    pub fn new(
        size: usize,
        mask_id: Token,
        eot_id: Token,
        after_eot_id: Token,
        answer_marker_id: Token,
    ) -> Result<Self, VocabError> {
        if size < 4 {
            return Err(VocabError::TooSmall(size));
        }
        let specials = [mask_id, eot_id, after_eot_id, answer_marker_id];
        for &id in &specials {
            if id >= size {
                return Err(VocabError::IdOutOfRange { id, size });
            }
        }
        for i in 0..specials.len() {
            for j in i + 1..specials.len() {
                if specials[i] == specials[j] {
                    return Err(VocabError::DuplicateSpecial);
                }
            }
        }
        Ok(Self {
            size,
            mask_id,
            eot_id,
            after_eot_id,
            answer_marker_id,
        })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn mask_id(&self) -> Token {
        self.mask_id
    }

    pub fn eot_id(&self) -> Token {
        self.eot_id
    }

    pub fn after_eot_id(&self) -> Token {
        self.after_eot_id
    }

    pub fn answer_marker_id(&self) -> Token {
        self.answer_marker_id
    }

    pub fn is_special(&self, tok: Token) -> bool {
        tok == self.mask_id
            || tok == self.eot_id
            || tok == self.after_eot_id
            || tok == self.answer_marker_id
    }

    /// Non-mask token ids, i.e. everything a denoiser may predict.
    pub fn predictable(&self) -> impl Iterator<Item = Token> + '_ {
        (0..self.size).filter(move |&t| t != self.mask_id)
    }
}
