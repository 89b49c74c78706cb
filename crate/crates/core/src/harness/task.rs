//! Synthetic task families with enumerable ground truth.
//!
//! Every task couples a factor model with a prompt id, a gold answer
//! computed once by enumeration, and the denoiser the task is meant to be
//! decoded with (exact, or filler-biased for the distractor family).
//!
//! Generated sequences share one layout convention: derivation content at
//! the front, then the answer marker, the answer token, the end-of-text
//! token, and a filler tail. The vocabulary is always
//! `mask=0, marker=1, eot=2, after_eot=3, content=4..`.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::Rng;
use thiserror::Error;

use crate::denoiser::file::{self, FileError};
use crate::denoiser::{BiasSpec, Denoiser, DenoiserError, Factor, FactorModel};
use crate::hex::Answer;
use crate::vocab::{PromptId, Token, Vocabulary};

use super::parse::parse_answer_tokens;

/// Boost used by generated distractor-tail tasks. Calibrated so that
/// confidence-driven single-block decoding floods the answer and end
/// positions while left-to-right revealing keeps the filler odds negligible.
pub const DISTRACTOR_TAIL_BOOST: f64 = 90.0;

/// Filler leak at the end-of-text position: base weight of the after-end
/// token there.
pub const FILLER_LEAK: f64 = 1e-9;

/// Filler leak at the answer position. Larger than [`FILLER_LEAK`] because
/// the answer column competes against the peaked answer factor rather than
/// a unit-weight end token, and the boosted filler must reach very high
/// confidence there: that is what hands likelihood-based selection its
/// near-zero-NLL garbage.
pub const ANSWER_FILLER_LEAK: f64 = 2e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskFamily {
    /// Answer forced by a chain of derivation tokens; exact denoiser.
    ChainArithmetic,
    /// Answer depends only on the prompt id; exact denoiser. Control family:
    /// every schedule should score 100%.
    KeyRecall,
    /// Chain task paired with the filler-biased denoiser.
    DistractorTail,
}

impl TaskFamily {
    pub fn as_str(self) -> &'static str {
        match self {
            TaskFamily::ChainArithmetic => "chain-arithmetic",
            TaskFamily::KeyRecall => "key-recall",
            TaskFamily::DistractorTail => "distractor-tail",
        }
    }

    pub const ALL: [TaskFamily; 3] = [
        TaskFamily::ChainArithmetic,
        TaskFamily::KeyRecall,
        TaskFamily::DistractorTail,
    ];
}

impl fmt::Display for TaskFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TaskFamily {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "chain-arithmetic" => Ok(TaskFamily::ChainArithmetic),
            "key-recall" => Ok(TaskFamily::KeyRecall),
            "distractor-tail" => Ok(TaskFamily::DistractorTail),
            other => Err(format!("unknown task family `{other}`")),
        }
    }
}

/// One benchmark item.
#[derive(Clone)]
pub struct Task {
    pub task_id: String,
    pub family: TaskFamily,
    pub prompt: PromptId,
    /// Argmax answer under the exact joint, computed by enumeration.
    pub gold: Answer,
    pub reveal_per_step: usize,
    /// Filler logit boost; 0 means the task decodes against the exact model.
    pub tail_boost: f64,
    pub model: Arc<FactorModel>,
    denoiser: Arc<dyn Denoiser + Send + Sync>,
}

impl fmt::Debug for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Task")
            .field("task_id", &self.task_id)
            .field("family", &self.family)
            .field("prompt", &self.prompt)
            .field("gold", &self.gold)
            .field("reveal_per_step", &self.reveal_per_step)
            .field("tail_boost", &self.tail_boost)
            .finish_non_exhaustive()
    }
}

#[derive(Debug, Error)]
pub enum TaskError {
    #[error(transparent)]
    File(#[from] FileError),
    #[error(transparent)]
    Denoiser(#[from] DenoiserError),
    #[error("task file is missing the `{0}` directive")]
    MissingField(&'static str),
    #[error("line {line}: {msg}")]
    Header { line: usize, msg: String },
    #[error("task has no parseable gold answer under the exact joint")]
    NoGoldAnswer,
    #[error("reveal_per_step {k} does not divide n = {n}")]
    BadRevealPerStep { n: usize, k: usize },
}

impl Task {
    /// Build a task, computing the gold answer by enumeration when `gold`
    /// is not supplied.
    pub fn new(
        task_id: String,
        family: TaskFamily,
        prompt: PromptId,
        reveal_per_step: usize,
        tail_boost: f64,
        model: FactorModel,
        gold: Option<Answer>,
    ) -> Result<Self, TaskError> {
        let n = model.seq_len();
        if reveal_per_step == 0 || n % reveal_per_step != 0 {
            return Err(TaskError::BadRevealPerStep {
                n,
                k: reveal_per_step,
            });
        }
        let gold = match gold {
            Some(g) => g,
            None => gold_answer(&model, prompt)?.ok_or(TaskError::NoGoldAnswer)?,
        };
        let model = Arc::new(model);
        let denoiser: Arc<dyn Denoiser + Send + Sync> = if tail_boost > 0.0 {
            Arc::new(BiasSpec::new(model.as_ref().clone(), tail_boost))
        } else {
            Arc::clone(&model) as Arc<dyn Denoiser + Send + Sync>
        };
        Ok(Self {
            task_id,
            family,
            prompt,
            gold,
            reveal_per_step,
            tail_boost,
            model,
            denoiser,
        })
    }

    pub fn n(&self) -> usize {
        self.model.seq_len()
    }

    /// Number of reveal steps, `T = n / k`.
    pub fn steps(&self) -> usize {
        self.n() / self.reveal_per_step
    }

    pub fn vocab(&self) -> &Vocabulary {
        Denoiser::vocab(self.model.as_ref())
    }

    /// The denoiser this task is benchmarked against: the exact model, or
    /// its biased wrapper when `tail_boost > 0`.
    pub fn denoiser(&self) -> &(dyn Denoiser + Send + Sync) {
        self.denoiser.as_ref()
    }

    /// Render as a task file (header plus embedded model definition).
    pub fn to_file_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("task {}\n", self.task_id));
        out.push_str(&format!("family {}\n", self.family));
        out.push_str(&format!("prompt_id {}\n", self.prompt));
        out.push_str(&format!("k {}\n", self.reveal_per_step));
        out.push_str(&format!("tail_boost {}\n", self.tail_boost));
        let gold: Vec<String> = self.gold.0.iter().map(|t| t.to_string()).collect();
        out.push_str(&format!("gold {}\n\n", gold.join(" ")));
        out.push_str(&file::write_model(&self.model));
        out
    }

    /// Parse a task file.
    pub fn from_file_text(text: &str) -> Result<Self, TaskError> {
        let mut task_id = None;
        let mut family = None;
        let mut prompt = None;
        let mut k = None;
        let mut tail_boost = 0.0f64;
        let mut gold: Option<Answer> = None;
        let mut model_lines: Vec<(usize, &str)> = Vec::new();

        for (idx, raw) in text.lines().enumerate() {
            let lineno = idx + 1;
            if file::is_model_line(raw) {
                model_lines.push((lineno, raw));
                continue;
            }
            let line = match raw.find('#') {
                Some(i) => &raw[..i],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            let word = parts.next().unwrap();
            let rest: Vec<&str> = parts.collect();
            let header_err = |msg: String| TaskError::Header { line: lineno, msg };
            match word {
                "task" => task_id = Some(rest.join(" ")),
                "family" => {
                    let f = rest
                        .join(" ")
                        .parse::<TaskFamily>()
                        .map_err(header_err)?;
                    family = Some(f);
                }
                "prompt_id" => {
                    let p = rest
                        .first()
                        .and_then(|s| s.parse::<PromptId>().ok())
                        .ok_or_else(|| header_err("`prompt_id` expects an integer".into()))?;
                    prompt = Some(p);
                }
                "k" => {
                    let v = rest
                        .first()
                        .and_then(|s| s.parse::<usize>().ok())
                        .ok_or_else(|| header_err("`k` expects an integer".into()))?;
                    k = Some(v);
                }
                "tail_boost" => {
                    tail_boost = rest
                        .first()
                        .and_then(|s| s.parse::<f64>().ok())
                        .ok_or_else(|| header_err("`tail_boost` expects a number".into()))?;
                }
                "gold" => {
                    let tokens: Option<Vec<Token>> =
                        rest.iter().map(|s| s.parse::<Token>().ok()).collect();
                    let tokens =
                        tokens.ok_or_else(|| header_err("`gold` expects token ids".into()))?;
                    gold = Some(Answer(tokens));
                }
                other => {
                    return Err(header_err(format!("unknown task directive `{other}`")));
                }
            }
        }

        let model = file::parse_model_lines(model_lines)?;
        Task::new(
            task_id.ok_or(TaskError::MissingField("task"))?,
            family.ok_or(TaskError::MissingField("family"))?,
            prompt.ok_or(TaskError::MissingField("prompt_id"))?,
            k.ok_or(TaskError::MissingField("k"))?,
            tail_boost,
            model,
            gold,
        )
    }
}

/// Argmax answer under the exact joint: the parsed answer value with the
/// largest total probability mass, by full enumeration.
pub fn gold_answer(
    model: &FactorModel,
    prompt: PromptId,
) -> Result<Option<Answer>, TaskError> {
    let vocab = Denoiser::vocab(model).clone();
    let mut masses: BTreeMap<Answer, f64> = BTreeMap::new();
    model.for_each_assignment(prompt, |tokens, w| {
        if w > 0.0 {
            if let Some(a) = parse_answer_tokens(tokens, &vocab) {
                *masses.entry(a).or_insert(0.0) += w;
            }
        }
    })?;
    Ok(masses
        .into_iter()
        .max_by(|a, b| a.1.total_cmp(&b.1).then_with(|| b.0.cmp(&a.0)))
        .map(|(a, _)| a))
}

// --- generators -----------------------------------------------------------

const CONTENT_START: Token = 4;

fn task_vocab(size: usize) -> Vocabulary {
    Vocabulary::new(size, 0, 2, 3, 1).expect("fixed layout is valid")
}

fn content_tokens(vocab: &Vocabulary) -> Vec<Token> {
    (CONTENT_START..vocab.size()).collect()
}

fn unary_at(pos: usize, v: usize, entries: &[(Token, f64)]) -> Factor {
    let mut table = vec![0.0; v];
    for &(t, w) in entries {
        table[t] = w;
    }
    Factor::new(vec![pos], table)
}

fn pair_at(a: usize, b: usize, v: usize, weight: impl Fn(Token, Token) -> f64) -> Factor {
    let mut table = vec![0.0; v * v];
    for x in 0..v {
        for y in 0..v {
            table[x * v + y] = weight(x, y);
        }
    }
    Factor::new(vec![a, b], table)
}

/// Generate `count` tasks of `family` with per-task randomized weights.
pub fn generate_tasks<R: Rng>(family: TaskFamily, count: usize, rng: &mut R) -> Vec<Task> {
    (0..count)
        .map(|index| {
            let task_id = format!("{family}-{index:04}");
            match family {
                TaskFamily::ChainArithmetic => chain_arithmetic_task(task_id, rng),
                TaskFamily::KeyRecall => key_recall_task(task_id, rng),
                TaskFamily::DistractorTail => distractor_tail_task(task_id, rng),
            }
        })
        .collect()
}

/// n=8 layout: derivation 0..3, marker 3, answer 4, eot 5, filler 6..8.
/// The answer is pinned to the last derivation token through a strongly
/// peaked pair factor, so greedy left-to-right decoding under the exact
/// model recovers the gold answer.
fn chain_arithmetic_task<R: Rng>(task_id: String, rng: &mut R) -> Task {
    let vocab = task_vocab(6);
    let v = vocab.size();
    let content = content_tokens(&vocab);
    let c = content.len();

    let mut factors = Vec::new();
    let peak0 = content[rng.gen_range(0..c)];
    factors.push(unary_at(
        0,
        v,
        &content
            .iter()
            .map(|&t| {
                let w = if t == peak0 {
                    2.5
                } else {
                    rng.gen_range(0.6..1.0)
                };
                (t, w)
            })
            .collect::<Vec<_>>(),
    ));
    for (a, b) in [(0usize, 1usize), (1, 2)] {
        let map: Vec<Token> = (0..c).map(|_| content[rng.gen_range(0..c)]).collect();
        let off = rng.gen_range(0.1..0.5);
        factors.push(pair_at(a, b, v, |x, y| {
            if !content.contains(&x) || !content.contains(&y) {
                0.0
            } else if y == map[x - CONTENT_START] {
                10.0
            } else {
                off
            }
        }));
    }
    // Answer forced by the last derivation token.
    let answer_map: Vec<Token> = (0..c).map(|_| content[rng.gen_range(0..c)]).collect();
    factors.push(pair_at(2, 4, v, |x, y| {
        if !content.contains(&x) || !content.contains(&y) {
            0.0
        } else if y == answer_map[x - CONTENT_START] {
            10.0
        } else {
            0.1
        }
    }));
    factors.push(unary_at(3, v, &[(vocab.answer_marker_id(), 1.0)]));
    factors.push(unary_at(5, v, &[(vocab.eot_id(), 1.0)]));
    factors.push(unary_at(6, v, &[(vocab.after_eot_id(), 1.0)]));
    factors.push(unary_at(7, v, &[(vocab.after_eot_id(), 1.0)]));

    let model = FactorModel::new(8, vocab, BTreeMap::from([(0, factors)])).expect("valid model");
    Task::new(task_id, TaskFamily::ChainArithmetic, 0, 1, 0.0, model, None)
        .expect("chain task has a gold answer")
}

/// n=6 layout: free content 0..2, marker 2, answer 3, eot 4, filler 5. The
/// answer position is a point mass selected by the prompt id, so every
/// schedule recovers it.
fn key_recall_task<R: Rng>(task_id: String, rng: &mut R) -> Task {
    let vocab = task_vocab(7);
    let v = vocab.size();
    let content = content_tokens(&vocab);

    let mut prompts = BTreeMap::new();
    for (p, &answer) in content.iter().enumerate() {
        let mut factors = Vec::new();
        for pos in 0..2 {
            factors.push(unary_at(
                pos,
                v,
                &content.iter().map(|&t| (t, 1.0)).collect::<Vec<_>>(),
            ));
        }
        factors.push(unary_at(2, v, &[(vocab.answer_marker_id(), 1.0)]));
        factors.push(unary_at(3, v, &[(answer, 1.0)]));
        factors.push(unary_at(4, v, &[(vocab.eot_id(), 1.0)]));
        factors.push(unary_at(5, v, &[(vocab.after_eot_id(), 1.0)]));
        prompts.insert(p as PromptId, factors);
    }
    let prompt = rng.gen_range(0..content.len()) as PromptId;
    let model = FactorModel::new(6, vocab, prompts).expect("valid model");
    Task::new(task_id, TaskFamily::KeyRecall, prompt, 1, 0.0, model, None)
        .expect("key-recall task has a gold answer")
}

/// n=8 layout: derivation 0..2, marker 2, answer 3, eot 4, filler 5..8.
/// The answer and end positions leak a tiny filler weight, so the biased
/// denoiser can flood them when they are queried early with little revealed
/// content; revealing left to right keeps the filler odds negligible.
fn distractor_tail_task<R: Rng>(task_id: String, rng: &mut R) -> Task {
    let vocab = task_vocab(7);
    let v = vocab.size();
    let content = content_tokens(&vocab);
    let c = content.len();
    let filler = vocab.after_eot_id();

    let mut factors = Vec::new();
    // Flat-ish opener: low confidence, low margin at position 0.
    factors.push(unary_at(
        0,
        v,
        &content
            .iter()
            .map(|&t| (t, rng.gen_range(0.7..1.0)))
            .collect::<Vec<_>>(),
    ));
    // Moderately peaked derivation chain.
    let map01: Vec<Token> = (0..c).map(|_| content[rng.gen_range(0..c)]).collect();
    let peak01 = rng.gen_range(3.0..5.0);
    factors.push(pair_at(0, 1, v, |x, y| {
        if !content.contains(&x) || !content.contains(&y) {
            0.0
        } else if y == map01[x - CONTENT_START] {
            peak01
        } else {
            1.0
        }
    }));
    // Answer forced by the second derivation token, with a filler leak.
    let answer_map: Vec<Token> = (0..c).map(|_| content[rng.gen_range(0..c)]).collect();
    let peak13 = rng.gen_range(8.0..12.0);
    factors.push(pair_at(1, 3, v, |x, y| {
        if !content.contains(&x) {
            0.0
        } else if y == filler {
            ANSWER_FILLER_LEAK
        } else if !content.contains(&y) {
            0.0
        } else if y == answer_map[x - CONTENT_START] {
            peak13
        } else {
            0.15
        }
    }));
    factors.push(unary_at(2, v, &[(vocab.answer_marker_id(), 1.0)]));
    factors.push(unary_at(4, v, &[(vocab.eot_id(), 1.0), (filler, FILLER_LEAK)]));
    for pos in 5..8 {
        factors.push(unary_at(pos, v, &[(filler, 1.0)]));
    }

    let model = FactorModel::new(8, vocab, BTreeMap::from([(0, factors)])).expect("valid model");
    Task::new(
        task_id,
        TaskFamily::DistractorTail,
        0,
        1,
        DISTRACTOR_TAIL_BOOST,
        model,
        None,
    )
    .expect("distractor task has a gold answer")
}

/// The four-position "Who invented the telephone?" analog: the answer
/// position's conditional depends strongly on which of the three preceding
/// positions are visible. Most contexts peak at the correct token (7); a
/// few do not.
pub fn telephone_toy() -> FactorModel {
    // mask=0, marker=1, eot=2, after_eot=3, The=4, inventor=5, was=6, Bell=7
    let vocab = Vocabulary::new(8, 0, 2, 3, 1).unwrap();
    let v = vocab.size();
    let the = 4;
    let inventor = 5;
    let was = 6;
    let bell = 7;
    let words = [the, inventor, was, bell];

    let w = |table: &[(Token, Token, f64)], x: Token, y: Token| -> f64 {
        if !words.contains(&x) || !words.contains(&y) {
            return 0.0;
        }
        table
            .iter()
            .find(|&&(a, b, _)| a == x && b == y)
            .map(|&(_, _, w)| w)
            .unwrap_or(0.15)
    };

    let factors = vec![
        unary_at(
            0,
            v,
            &[(the, 3.0), (inventor, 0.2), (was, 0.2), (bell, 1.8)],
        ),
        // "The inventor ..." vs the contaminating "... Bell Bell ..." opening.
        pair_at(0, 1, v, {
            let t = [
                (the, inventor, 2.2),
                (the, bell, 2.95),
                (the, was, 0.2),
                (the, the, 0.1),
                (bell, bell, 3.0),
                (bell, inventor, 0.2),
                (bell, was, 0.3),
                (inventor, was, 0.8),
            ];
            move |x, y| w(&t, x, y)
        }),
        // A real derivation continues "... was"; the garbage one repeats
        // "Bell".
        pair_at(1, 2, v, {
            let t = [
                (inventor, was, 3.5),
                (bell, bell, 2.0),
                (bell, was, 0.3),
                (the, was, 1.0),
                (was, was, 0.3),
            ];
            move |x, y| w(&t, x, y)
        }),
        // Seeing "inventor" pins the answer; seeing "Bell" early repels it.
        pair_at(1, 3, v, {
            let t = [
                (inventor, bell, 5.0),
                (inventor, was, 0.2),
                (bell, was, 5.0),
                (bell, bell, 0.05),
                (bell, the, 0.3),
                (bell, inventor, 0.3),
                (the, bell, 0.5),
                (the, was, 0.5),
                (was, bell, 0.5),
                (was, was, 0.5),
            ];
            move |x, y| w(&t, x, y)
        }),
        pair_at(2, 3, v, {
            let t = [
                (was, bell, 2.0),
                (was, was, 0.3),
                (was, the, 0.3),
                (was, inventor, 0.3),
                (bell, was, 2.0),
                (bell, bell, 0.1),
                (bell, the, 0.3),
                (bell, inventor, 0.3),
                (the, the, 0.4),
                (the, inventor, 0.4),
                (the, was, 0.4),
                (the, bell, 0.4),
                (inventor, the, 0.4),
                (inventor, inventor, 0.4),
                (inventor, was, 0.4),
                (inventor, bell, 0.4),
            ];
            move |x, y| w(&t, x, y)
        }),
        // Weak direct opener-answer link: keeps all 2^3 context
        // distributions pairwise distinct.
        pair_at(0, 3, v, move |x, y| {
            if !words.contains(&x) || !words.contains(&y) {
                0.0
            } else if x == the && y == bell {
                1.15
            } else if x == bell && y == bell {
                0.8
            } else {
                1.0
            }
        }),
    ];
    FactorModel::new(4, vocab, BTreeMap::from([(0, factors)])).expect("valid toy model")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decode::{decode, DecodeRun};
    use crate::harness::parse::parse_answer;
    use crate::policy::{PolicyConfig, PolicyKind};
    use crate::rng::rng_from_seed;

    #[test]
    fn chain_greedy_ar_is_perfect() {
        let mut rng = rng_from_seed(1);
        for task in generate_tasks(TaskFamily::ChainArithmetic, 20, &mut rng) {
            let policy = PolicyConfig::new(PolicyKind::SemiAr { block_size: 1 }, 1, 0);
            let run = DecodeRun::new(task.denoiser(), task.prompt, policy, 0.0);
            let t = decode(&run).unwrap();
            let parsed = parse_answer(&t.final_tokens, task.vocab());
            assert_eq!(parsed.as_ref(), Some(&task.gold), "{}", task.task_id);
        }
    }

    #[test]
    fn key_recall_is_schedule_invariant() {
        let mut rng = rng_from_seed(2);
        let tasks = generate_tasks(TaskFamily::KeyRecall, 10, &mut rng);
        let policies = [
            PolicyConfig::new(PolicyKind::Random, 1, 3),
            PolicyConfig::new(PolicyKind::TopKMargin, 1, 3),
            PolicyConfig::new(PolicyKind::SingleBlock, 2, 3),
            PolicyConfig::new(PolicyKind::SemiAr { block_size: 2 }, 1, 3),
        ];
        for task in &tasks {
            for policy in policies {
                let run = DecodeRun::new(task.denoiser(), task.prompt, policy, 0.9);
                let t = decode(&run).unwrap();
                let parsed = parse_answer(&t.final_tokens, task.vocab());
                assert_eq!(parsed.as_ref(), Some(&task.gold), "{}", task.task_id);
            }
        }
    }

    #[test]
    fn key_recall_gold_tracks_prompt() {
        let mut rng = rng_from_seed(5);
        let task = &generate_tasks(TaskFamily::KeyRecall, 1, &mut rng)[0];
        for prompt in task.model.prompt_ids() {
            let gold = gold_answer(&task.model, prompt).unwrap().unwrap();
            assert_eq!(gold.0, vec![CONTENT_START + prompt as usize]);
        }
    }

    #[test]
    fn task_files_round_trip() {
        let mut rng = rng_from_seed(3);
        for family in TaskFamily::ALL {
            let task = &generate_tasks(family, 1, &mut rng)[0];
            let text = task.to_file_text();
            let parsed = Task::from_file_text(&text).unwrap();
            assert_eq!(parsed.task_id, task.task_id);
            assert_eq!(parsed.family, task.family);
            assert_eq!(parsed.prompt, task.prompt);
            assert_eq!(parsed.gold, task.gold);
            assert_eq!(parsed.tail_boost, task.tail_boost);
            assert_eq!(parsed.n(), task.n());
            assert_eq!(
                parsed.model.factors(task.prompt).unwrap(),
                task.model.factors(task.prompt).unwrap()
            );
        }
    }

    #[test]
    fn generation_is_seed_deterministic() {
        let make = |seed| {
            let mut rng = rng_from_seed(seed);
            generate_tasks(TaskFamily::DistractorTail, 3, &mut rng)
                .iter()
                .map(|t| t.to_file_text())
                .collect::<Vec<_>>()
        };
        assert_eq!(make(7), make(7));
        assert_ne!(make(7), make(8));
    }

    #[test]
    fn missing_header_field_errors() {
        let mut rng = rng_from_seed(4);
        let task = &generate_tasks(TaskFamily::ChainArithmetic, 1, &mut rng)[0];
        let text = task
            .to_file_text()
            .lines()
            .filter(|l| !l.starts_with("family"))
            .collect::<Vec<_>>()
            .join("\n");
        assert!(matches!(
            Task::from_file_text(&text),
            Err(TaskError::MissingField("family"))
        ));
    }
}
