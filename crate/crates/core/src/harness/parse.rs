//! Answer extraction from completed sequences.

use crate::hex::Answer;
use crate::seq::TokenSeq;
use crate::vocab::{Token, Vocabulary};

/// Extract the answer span: the tokens strictly between the last answer
/// marker and the first end-of-text token after it. Returns `None` when the
/// marker is absent, no end-of-text follows it, the span is empty, or the
/// span contains mask or filler tokens.
pub fn parse_answer(seq: &TokenSeq, vocab: &Vocabulary) -> Option<Answer> {
    debug_assert!(seq.is_complete(), "parsing needs a complete sequence");
    parse_answer_tokens(seq.tokens(), vocab)
}

/// [`parse_answer`] over a raw token slice.
pub fn parse_answer_tokens(tokens: &[Token], vocab: &Vocabulary) -> Option<Answer> {
    let marker = tokens
        .iter()
        .rposition(|&t| t == vocab.answer_marker_id())?;
    let eot_offset = tokens[marker + 1..]
        .iter()
        .position(|&t| t == vocab.eot_id())?;
    let span = &tokens[marker + 1..marker + 1 + eot_offset];
    if span.is_empty() {
        return None;
    }
    if span
        .iter()
        .any(|&t| t == vocab.mask_id() || t == vocab.after_eot_id())
    {
        return None;
    }
    Some(Answer(span.to_vec()))
}
