//! Text format for factor model definitions.
//!
//! The format is line-oriented and human-editable. `#` starts a comment,
//! blank lines are ignored, and all positions are 0-based:
//!
//! ```text
//! n 3
//! vocab 4
//! mask 0
//! eot 1
//! after_eot 2
//! marker 3
//!
//! prompt 0
//! factor 0            # unary over position 0: vocab-many weights
//! 0 1 0.5 0.25
//! factor 0 1          # pairwise: vocab^2 weights, row-major, first
//! 0 0 0 0             # scope position is the slowest index
//! 0 4 1 1
//! 0 1 4 1
//! 0 1 1 4
//! ```
//!
//! Weight entries indexed by the mask id must be zero; every `factor`
//! belongs to the most recent `prompt` section.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use thiserror::Error;

use crate::vocab::{PromptId, Token, VocabError, Vocabulary};

use super::factor::{Factor, FactorModel, ModelError};

#[derive(Debug, Error)]
pub enum FileError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("invalid model: {0}")]
    Model(#[from] ModelError),
    #[error("invalid vocabulary: {0}")]
    Vocab(#[from] VocabError),
}

fn err(line: usize, msg: impl Into<String>) -> FileError {
    FileError::Parse {
        line,
        msg: msg.into(),
    }
}

/// Is `line` a model-format directive or weight continuation? Used by task
/// files to route lines between the task header and the embedded model.
pub fn is_model_line(line: &str) -> bool {
    let trimmed = strip_comment(line);
    let mut parts = trimmed.split_whitespace();
    match parts.next() {
        None => false,
        Some(word) => {
            matches!(
                word,
                "n" | "vocab" | "mask" | "eot" | "after_eot" | "marker" | "prompt" | "factor"
            ) || word.parse::<f64>().is_ok()
        }
    }
}

fn strip_comment(line: &str) -> &str {
    match line.find('#') {
        Some(i) => &line[..i],
        None => line,
    }
    .trim()
}

struct PendingFactor {
    scope: Vec<usize>,
    needed: usize,
    weights: Vec<f64>,
    line: usize,
}

#[derive(Default)]
struct Parser {
    n: Option<usize>,
    vocab_size: Option<usize>,
    mask: Option<Token>,
    eot: Option<Token>,
    after_eot: Option<Token>,
    marker: Option<Token>,
    current_prompt: Option<PromptId>,
    prompts: BTreeMap<PromptId, Vec<Factor>>,
    pending: Option<PendingFactor>,
}

impl Parser {
    fn finish_pending(&mut self) -> Result<(), FileError> {
        if let Some(p) = self.pending.take() {
            if p.weights.len() != p.needed {
                return Err(err(
                    p.line,
                    format!(
                        "factor over {:?} has {} weights, expected {}",
                        p.scope,
                        p.weights.len(),
                        p.needed
                    ),
                ));
            }
            let prompt = self
                .current_prompt
                .ok_or_else(|| err(p.line, "factor before any prompt section"))?;
            self.prompts
                .entry(prompt)
                .or_default()
                .push(Factor::new(p.scope, p.weights));
        }
        Ok(())
    }

    fn set_field(
        field: &mut Option<usize>,
        name: &str,
        value: &str,
        line: usize,
    ) -> Result<(), FileError> {
        if field.is_some() {
            return Err(err(line, format!("duplicate `{name}` directive")));
        }
        let parsed = value
            .parse::<usize>()
            .map_err(|_| err(line, format!("`{name}` expects an integer, got `{value}`")))?;
        *field = Some(parsed);
        Ok(())
    }

    fn line(&mut self, lineno: usize, raw: &str) -> Result<(), FileError> {
        let line = strip_comment(raw);
        if line.is_empty() {
            return Ok(());
        }
        let mut parts = line.split_whitespace();
        let word = parts.next().unwrap();
        let rest: Vec<&str> = parts.collect();
        let one_arg = |rest: &[&str]| -> Result<String, FileError> {
            if rest.len() != 1 {
                return Err(err(lineno, format!("`{word}` expects exactly one value")));
            }
            Ok(rest[0].to_string())
        };
        match word {
            "n" => Self::set_field(&mut self.n, "n", &one_arg(&rest)?, lineno)?,
            "vocab" => Self::set_field(&mut self.vocab_size, "vocab", &one_arg(&rest)?, lineno)?,
            "mask" => Self::set_field(&mut self.mask, "mask", &one_arg(&rest)?, lineno)?,
            "eot" => Self::set_field(&mut self.eot, "eot", &one_arg(&rest)?, lineno)?,
            "after_eot" => {
                Self::set_field(&mut self.after_eot, "after_eot", &one_arg(&rest)?, lineno)?
            }
            "marker" => Self::set_field(&mut self.marker, "marker", &one_arg(&rest)?, lineno)?,
            "prompt" => {
                self.finish_pending()?;
                let id = one_arg(&rest)?
                    .parse::<PromptId>()
                    .map_err(|_| err(lineno, "`prompt` expects an integer id"))?;
                self.prompts.entry(id).or_default();
                self.current_prompt = Some(id);
            }
            "factor" => {
                self.finish_pending()?;
                let v = self
                    .vocab_size
                    .ok_or_else(|| err(lineno, "`factor` before `vocab`"))?;
                if rest.is_empty() {
                    return Err(err(lineno, "`factor` expects scope positions"));
                }
                let scope: Vec<usize> = rest
                    .iter()
                    .map(|s| {
                        s.parse::<usize>()
                            .map_err(|_| err(lineno, format!("bad scope position `{s}`")))
                    })
                    .collect::<Result<_, _>>()?;
                let needed = v.pow(scope.len() as u32);
                self.pending = Some(PendingFactor {
                    scope,
                    needed,
                    weights: Vec::with_capacity(needed),
                    line: lineno,
                });
            }
            _ => {
                // Weight continuation lines are bare numbers.
                let pending = self
                    .pending
                    .as_mut()
                    .ok_or_else(|| err(lineno, format!("unknown directive `{word}`")))?;
                for tok in std::iter::once(word).chain(rest) {
                    let w = tok
                        .parse::<f64>()
                        .map_err(|_| err(lineno, format!("bad weight `{tok}`")))?;
                    pending.weights.push(w);
                    if pending.weights.len() > pending.needed {
                        return Err(err(
                            lineno,
                            format!("factor has more than {} weights", pending.needed),
                        ));
                    }
                }
            }
        }
        Ok(())
    }

    fn finish(mut self) -> Result<FactorModel, FileError> {
        self.finish_pending()?;
        let missing = |name: &str| err(0, format!("missing `{name}` directive"));
        let n = self.n.ok_or_else(|| missing("n"))?;
        let size = self.vocab_size.ok_or_else(|| missing("vocab"))?;
        let vocab = Vocabulary::new(
            size,
            self.mask.ok_or_else(|| missing("mask"))?,
            self.eot.ok_or_else(|| missing("eot"))?,
            self.after_eot.ok_or_else(|| missing("after_eot"))?,
            self.marker.ok_or_else(|| missing("marker"))?,
        )?;
        Ok(FactorModel::new(n, vocab, self.prompts)?)
    }
}

/// Parse a model definition from numbered lines (1-based line numbers).
pub fn parse_model_lines<'a>(
    lines: impl IntoIterator<Item = (usize, &'a str)>,
) -> Result<FactorModel, FileError> {
    let mut parser = Parser::default();
    for (lineno, line) in lines {
        parser.line(lineno, line)?;
    }
    parser.finish()
}

/// Parse a model definition from text.
pub fn parse_model(text: &str) -> Result<FactorModel, FileError> {
    parse_model_lines(text.lines().enumerate().map(|(i, l)| (i + 1, l)))
}

/// Render a model in the text format. Output round-trips through
/// [`parse_model`].
pub fn write_model(model: &FactorModel) -> String {
    let vocab = crate::denoiser::Denoiser::vocab(model);
    let mut out = String::new();
    let _ = writeln!(out, "n {}", model.n());
    let _ = writeln!(out, "vocab {}", vocab.size());
    let _ = writeln!(out, "mask {}", vocab.mask_id());
    let _ = writeln!(out, "eot {}", vocab.eot_id());
    let _ = writeln!(out, "after_eot {}", vocab.after_eot_id());
    let _ = writeln!(out, "marker {}", vocab.answer_marker_id());
    for prompt in model.prompt_ids() {
        let _ = writeln!(out, "\nprompt {prompt}");
        for factor in model.factors(prompt).expect("listed prompt") {
            let scope: Vec<String> = factor.scope.iter().map(|p| p.to_string()).collect();
            let _ = writeln!(out, "factor {}", scope.join(" "));
            for chunk in factor.table.chunks(12) {
                let row: Vec<String> = chunk.iter().map(|w| w.to_string()).collect();
                let _ = writeln!(out, "{}", row.join(" "));
            }
        }
    }
    out
}
