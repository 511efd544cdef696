//! Adapter for the publicly released insuranceQA (V1) file layout.
//!
//! The release ships whitespace/TAB separated files where token ids carry an
//! `idx_` prefix:
//!
//! * `vocabulary`: `idx_N<TAB>word`
//! * `answers.label.token_idx`: `answer_id<TAB>idx_a idx_b ...`
//! * `question.train.token_idx.label`: `idx_a idx_b ...<TAB>answer ids`
//! * `question.{dev,test1,test2}.label.token_idx.pool`:
//!   `truth ids<TAB>idx_a idx_b ...<TAB>pool ids`
//!
//! Question ids do not exist in the release; they are synthesized as
//! `<split>-<line>`. Columns holding question tokens are recognized by the
//! `idx_` prefix rather than by position.

use std::path::Path;

use super::io::read_text;
use super::{AnswerId, AnswerStore, Corpus, QuestionInstance, Split, SplitKind, Vocabulary};
use crate::error::CorpusError;

pub const VOCABULARY: &str = "vocabulary";
pub const ANSWERS: &str = "answers.label.token_idx";
pub const TRAIN: &str = "question.train.token_idx.label";

fn pool_file(split: &str) -> String {
    format!("question.{split}.label.token_idx.pool")
}

/// Reference corpus counts: (split, questions, answer links, question words).
pub const REFERENCE_SPLITS: [(&str, usize, usize, usize); 4] = [
    ("train", 12_887, 18_540, 92_095),
    ("dev", 1_000, 1_454, 7_158),
    ("test1", 1_800, 2_616, 12_893),
    ("test2", 1_800, 2_593, 12_905),
];
pub const REFERENCE_ANSWERS: usize = 24_981;
pub const REFERENCE_ANSWER_WORDS: usize = 2_386_749;

/// True when `dir` looks like the released layout.
pub fn is_released_layout(dir: &Path) -> bool {
    dir.join(VOCABULARY).is_file() && dir.join(ANSWERS).is_file() && dir.join(TRAIN).is_file()
}

fn strip_idx(raw: &str) -> Option<u64> {
    raw.strip_prefix("idx_").unwrap_or(raw).parse().ok()
}

fn is_token_field(field: &str) -> bool {
    field
        .split_whitespace()
        .next()
        .is_some_and(|t| t.starts_with("idx_"))
}

fn malformed(file: &str, line: usize, reason: impl Into<String>) -> CorpusError {
    CorpusError::Malformed {
        file: file.to_string(),
        line,
        reason: reason.into(),
    }
}

fn lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty())
}

fn parse_vocab(text: &str) -> Result<Vocabulary, CorpusError> {
    let mut canonical = String::with_capacity(text.len());
    for (line, rec) in lines(text) {
        let (id, word) = rec
            .split_once('\t')
            .or_else(|| rec.split_once(' '))
            .ok_or_else(|| malformed(VOCABULARY, line, "expected idx_N<TAB>word"))?;
        let id = strip_idx(id.trim()).ok_or_else(|| malformed(VOCABULARY, line, "bad token id"))?;
        canonical.push_str(&format!("{id}\t{}\n", word.trim()));
    }
    super::parse_vocabulary(&canonical, VOCABULARY)
}

fn tokens(
    vocab: &Vocabulary,
    field: &str,
    file: &str,
    line: usize,
    oov: &mut usize,
) -> Result<Vec<u32>, CorpusError> {
    field
        .split_whitespace()
        .map(|raw| {
            let id = strip_idx(raw)
                .ok_or_else(|| malformed(file, line, format!("bad token {raw:?}")))?;
            Ok(vocab.resolve_file_id(id).unwrap_or_else(|| {
                *oov += 1;
                vocab.unk_id()
            }))
        })
        .collect()
}

fn answer_ids(field: &str, file: &str, line: usize) -> Result<Vec<AnswerId>, CorpusError> {
    field
        .split_whitespace()
        .map(|s| {
            s.parse()
                .map(AnswerId)
                .map_err(|_| malformed(file, line, format!("bad answer id {s:?}")))
        })
        .collect()
}

/// Loads the released layout from `dir` into the canonical in-memory form.
pub fn load_released(dir: &Path) -> Result<Corpus, CorpusError> {
    if !is_released_layout(dir) {
        return Err(CorpusError::UnrecognizedLayout(dir.to_path_buf()));
    }
    let vocab = parse_vocab(&read_text(&dir.join(VOCABULARY))?)?;
    let mut oov = 0usize;

    let mut answers = AnswerStore::new();
    for (line, rec) in lines(&read_text(&dir.join(ANSWERS))?) {
        let (id, toks) = rec
            .split_once('\t')
            .ok_or_else(|| malformed(ANSWERS, line, "expected id<TAB>tokens"))?;
        let id = AnswerId(
            id.trim()
                .parse()
                .map_err(|_| malformed(ANSWERS, line, "bad answer id"))?,
        );
        let toks = tokens(&vocab, toks, ANSWERS, line, &mut oov)?;
        if toks.is_empty() {
            return Err(CorpusError::EmptyAnswer {
                file: ANSWERS.into(),
                line,
                id,
            });
        }
        answers
            .insert(id, toks)
            .map_err(|_| CorpusError::DuplicateAnswer {
                file: ANSWERS.into(),
                line,
                id,
            })?;
    }

    let mut splits = Vec::new();
    let mut train = Vec::new();
    for (line, rec) in lines(&read_text(&dir.join(TRAIN))?) {
        let fields: Vec<&str> = rec.split('\t').collect();
        if fields.len() != 2 {
            return Err(malformed(TRAIN, line, "expected tokens<TAB>answer ids"));
        }
        let (q, t) = if is_token_field(fields[0]) {
            (fields[0], fields[1])
        } else {
            (fields[1], fields[0])
        };
        let inst = QuestionInstance {
            qid: format!("train-{line}"),
            tokens: tokens(&vocab, q, TRAIN, line, &mut oov)?,
            truth: answer_ids(t, TRAIN, line)?,
            pool: None,
        };
        inst.validate(&answers)?;
        train.push(inst);
    }
    splits.push(Split {
        name: "train".into(),
        kind: SplitKind::Train,
        questions: train,
    });

    for (name, kind) in [
        ("dev", SplitKind::Dev),
        ("test1", SplitKind::Test),
        ("test2", SplitKind::Test),
    ] {
        let file = pool_file(name);
        let path = dir.join(&file);
        if !path.is_file() {
            continue;
        }
        let mut questions = Vec::new();
        for (line, rec) in lines(&read_text(&path)?) {
            let fields: Vec<&str> = rec.split('\t').collect();
            if fields.len() != 3 {
                return Err(malformed(&file, line, "expected truth<TAB>tokens<TAB>pool"));
            }
            let qcol = fields
                .iter()
                .position(|f| is_token_field(f))
                .ok_or_else(|| malformed(&file, line, "no question token column"))?;
            let rest: Vec<&str> = (0..3).filter(|&i| i != qcol).map(|i| fields[i]).collect();
            let inst = QuestionInstance {
                qid: format!("{name}-{line}"),
                tokens: tokens(&vocab, fields[qcol], &file, line, &mut oov)?,
                truth: answer_ids(rest[0], &file, line)?,
                pool: Some(answer_ids(rest[1], &file, line)?),
            };
            inst.validate(&answers)?;
            questions.push(inst);
        }
        splits.push(Split {
            name: name.into(),
            kind,
            questions,
        });
    }
    if oov > 0 {
        log::warn!("released corpus: {oov} out-of-vocabulary token(s) mapped to unk");
    }
    Ok(Corpus {
        vocab,
        answers,
        splits,
    })
}

/// Compares corpus statistics against the reference counts. Returns one
/// human-readable line per mismatch; empty when everything matches.
pub fn reference_mismatches(stats: &super::CorpusStats) -> Vec<String> {
    let mut out = Vec::new();
    for (name, q, a, w) in REFERENCE_SPLITS {
        match stats.split(name) {
            Some(s) => {
                for (what, got, want) in [
                    ("questions", s.questions, q),
                    ("answers", s.answers, a),
                    ("question_words", s.question_words, w),
                ] {
                    if got != want {
                        out.push(format!("{name}.{what}: {got} (expected {want})"));
                    }
                }
            }
            None => out.push(format!("{name}: missing")),
        }
    }
    if stats.unique_answers != REFERENCE_ANSWERS {
        out.push(format!(
            "answers.unique: {} (expected {REFERENCE_ANSWERS})",
            stats.unique_answers
        ));
    }
    if stats.answer_words != REFERENCE_ANSWER_WORDS {
        out.push(format!(
            "answers.words: {} (expected {REFERENCE_ANSWER_WORDS})",
            stats.answer_words
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::corpus_stats;

    fn write(dir: &Path, name: &str, text: &str) {
        std::fs::write(dir.join(name), text).unwrap();
    }

    #[test]
    fn loads_minimal_release() {
        let dir = tempfile::tempdir().unwrap();
        let d = dir.path();
        write(d, VOCABULARY, "idx_1\thow\nidx_2\tdo\nidx_3\tclaim\n");
        write(d, ANSWERS, "1\tidx_3 idx_2\n2\tidx_1\n3\tidx_2 idx_2\n");
        write(d, TRAIN, "idx_1 idx_2\t1 3\n");
        write(d, &pool_file("dev"), "2\tidx_3 idx_1\t1 2 3\n");
        let c = load_released(d).unwrap();
        assert_eq!(c.vocab.len(), 4);
        assert_eq!(c.vocab.id("how"), Some(0));
        let train = &c.split("train").unwrap().questions;
        assert_eq!(train[0].qid, "train-1");
        assert_eq!(train[0].tokens, vec![0, 1]);
        assert_eq!(train[0].truth, vec![AnswerId(1), AnswerId(3)]);
        let dev = &c.split("dev").unwrap().questions;
        assert_eq!(dev[0].tokens, vec![2, 0]);
        assert_eq!(dev[0].pool.as_ref().unwrap().len(), 3);
        let stats = corpus_stats(&c);
        assert!(!reference_mismatches(&stats).is_empty());
    }

    #[test]
    fn unrecognized_layout() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            load_released(dir.path()),
            Err(CorpusError::UnrecognizedLayout(_))
        ));
    }
}
