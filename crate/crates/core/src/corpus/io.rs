//! Canonical TAB-separated corpus files.
//!
//! * vocabulary: `id<TAB>token`
//! * answers: `answer_id<TAB>tok tok ...`
//! * train split: `qid<TAB>tok tok ...<TAB>truth truth ...`
//! * dev/test split: the train record plus `<TAB>pool pool ...`

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use log::warn;

use super::{AnswerId, AnswerStore, QuestionInstance, SplitKind, TokenId, Vocabulary};
use crate::error::CorpusError;

/// What to do with token ids that the vocabulary does not know.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum OovPolicy {
    /// Replace with the unknown token and count a warning.
    #[default]
    MapToUnk,
    Error,
}

pub(crate) fn read_text(path: &Path) -> Result<String, CorpusError> {
    std::fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn file_label(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

/// Non-empty lines with their 1-based line numbers. A trailing `\r` is
/// tolerated.
fn records(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.strip_suffix('\r').unwrap_or(l)))
        .filter(|(_, l)| !l.trim().is_empty())
}

pub fn load_vocabulary(path: &Path) -> Result<Vocabulary, CorpusError> {
    parse_vocabulary(&read_text(path)?, &file_label(path))
}

pub fn parse_vocabulary(text: &str, file: &str) -> Result<Vocabulary, CorpusError> {
    let malformed = |line, reason: &str| CorpusError::Malformed {
        file: file.to_string(),
        line,
        reason: reason.to_string(),
    };
    let mut entries: Vec<(u64, String, usize)> = Vec::new();
    let mut seen_tokens: HashMap<String, usize> = HashMap::new();
    let mut seen_ids: HashMap<u64, usize> = HashMap::new();
    for (line, rec) in records(text) {
        let (id, token) = rec
            .split_once('\t')
            .ok_or_else(|| malformed(line, "expected id<TAB>token"))?;
        let id: u64 = id
            .trim()
            .parse()
            .map_err(|_| malformed(line, "token id is not a non-negative integer"))?;
        if token.is_empty() || token.contains('\t') {
            return Err(malformed(line, "token must be non-empty and TAB-free"));
        }
        if seen_tokens.insert(token.to_string(), line).is_some() {
            return Err(CorpusError::DuplicateToken {
                file: file.to_string(),
                line,
                token: token.to_string(),
            });
        }
        if seen_ids.insert(id, line).is_some() {
            return Err(CorpusError::DuplicateTokenId {
                file: file.to_string(),
                line,
                id,
            });
        }
        entries.push((id, token.to_string(), line));
    }
    entries.sort_by_key(|e| e.0);
    let contiguous = entries.iter().enumerate().all(|(i, e)| e.0 == i as u64);
    let mut id_to_token = Vec::with_capacity(entries.len() + 1);
    let mut token_to_id = HashMap::with_capacity(entries.len() + 1);
    let mut file_ids = HashMap::new();
    for (new_id, (file_id, token, _)) in entries.into_iter().enumerate() {
        let new_id = new_id as TokenId;
        token_to_id.insert(token.clone(), new_id);
        id_to_token.push(token);
        file_ids.insert(file_id, new_id);
    }
    let vocab = Vocabulary::finish(
        id_to_token,
        token_to_id,
        if contiguous { None } else { Some(file_ids) },
    );
    Ok(vocab)
}

pub fn write_vocabulary(w: &mut dyn Write, vocab: &Vocabulary) -> std::io::Result<()> {
    for (id, token) in vocab.tokens().iter().enumerate() {
        writeln!(w, "{id}\t{token}")?;
    }
    Ok(())
}

struct TokenReader<'a> {
    vocab: &'a Vocabulary,
    policy: OovPolicy,
    file: String,
    oov: usize,
}

impl TokenReader<'_> {
    fn parse(&mut self, field: &str, line: usize) -> Result<Vec<TokenId>, CorpusError> {
        let mut out = Vec::new();
        for raw in field.split_whitespace() {
            let id: u64 = raw.parse().map_err(|_| CorpusError::Malformed {
                file: self.file.clone(),
                line,
                reason: format!("token id {raw:?} is not an integer"),
            })?;
            match self.vocab.resolve_file_id(id) {
                Some(t) => out.push(t),
                None if self.policy == OovPolicy::MapToUnk => {
                    self.oov += 1;
                    out.push(self.vocab.unk_id());
                }
                None => {
                    return Err(CorpusError::UnknownToken {
                        file: self.file.clone(),
                        line,
                        id,
                    })
                }
            }
        }
        Ok(out)
    }

    fn report(&self) {
        if self.oov > 0 {
            warn!(
                "{}: {} out-of-vocabulary token(s) mapped to unk",
                self.file, self.oov
            );
        }
    }
}

fn parse_answer_ids(field: &str, file: &str, line: usize) -> Result<Vec<AnswerId>, CorpusError> {
    field
        .split_whitespace()
        .map(|s| {
            s.parse().map(AnswerId).map_err(|_| CorpusError::Malformed {
                file: file.to_string(),
                line,
                reason: format!("answer id {s:?} is not an integer"),
            })
        })
        .collect()
}

pub fn load_answers(
    path: &Path,
    vocab: &Vocabulary,
    oov: OovPolicy,
) -> Result<AnswerStore, CorpusError> {
    parse_answers(&read_text(path)?, &file_label(path), vocab, oov)
}

pub fn parse_answers(
    text: &str,
    file: &str,
    vocab: &Vocabulary,
    oov: OovPolicy,
) -> Result<AnswerStore, CorpusError> {
    let mut reader = TokenReader {
        vocab,
        policy: oov,
        file: file.to_string(),
        oov: 0,
    };
    let mut store = AnswerStore::new();
    for (line, rec) in records(text) {
        let (id, toks) = rec.split_once('\t').unwrap_or((rec, ""));
        let id = AnswerId(id.trim().parse().map_err(|_| CorpusError::Malformed {
            file: file.to_string(),
            line,
            reason: "answer id is not an integer".into(),
        })?);
        let tokens = reader.parse(toks, line)?;
        store.insert(id, tokens).map_err(|e| match e {
            CorpusError::EmptyAnswer { id, .. } => CorpusError::EmptyAnswer {
                file: file.to_string(),
                line,
                id,
            },
            CorpusError::DuplicateAnswer { id, .. } => CorpusError::DuplicateAnswer {
                file: file.to_string(),
                line,
                id,
            },
            other => other,
        })?;
    }
    reader.report();
    Ok(store)
}

pub fn write_answers(w: &mut dyn Write, store: &AnswerStore) -> std::io::Result<()> {
    for (id, tokens) in store.iter() {
        write!(w, "{id}\t")?;
        write_joined(w, tokens.iter())?;
        writeln!(w)?;
    }
    Ok(())
}

pub fn load_split(
    path: &Path,
    kind: SplitKind,
    vocab: &Vocabulary,
    store: &AnswerStore,
    oov: OovPolicy,
) -> Result<Vec<QuestionInstance>, CorpusError> {
    parse_split(
        &read_text(path)?,
        &file_label(path),
        kind,
        vocab,
        store,
        oov,
    )
}

pub fn parse_split(
    text: &str,
    file: &str,
    kind: SplitKind,
    vocab: &Vocabulary,
    store: &AnswerStore,
    oov: OovPolicy,
) -> Result<Vec<QuestionInstance>, CorpusError> {
    let mut reader = TokenReader {
        vocab,
        policy: oov,
        file: file.to_string(),
        oov: 0,
    };
    let mut out = Vec::new();
    for (line, rec) in records(text) {
        let fields: Vec<&str> = rec.split('\t').collect();
        let expected = if kind.requires_pool() { 4 } else { 3 };
        if fields.len() != expected && !(kind == SplitKind::Train && fields.len() == 4) {
            return Err(CorpusError::Malformed {
                file: file.to_string(),
                line,
                reason: format!(
                    "expected {expected} TAB-separated fields, got {}",
                    fields.len()
                ),
            });
        }
        let qid = fields[0].trim().to_string();
        if qid.is_empty() {
            return Err(CorpusError::Malformed {
                file: file.to_string(),
                line,
                reason: "empty question id".into(),
            });
        }
        let q = QuestionInstance {
            tokens: reader.parse(fields[1], line)?,
            truth: parse_answer_ids(fields[2], file, line)?,
            pool: match fields.get(3) {
                Some(f) => Some(parse_answer_ids(f, file, line)?),
                None => None,
            },
            qid,
        };
        q.validate(store)?;
        out.push(q);
    }
    reader.report();
    Ok(out)
}

pub fn write_split(w: &mut dyn Write, questions: &[QuestionInstance]) -> std::io::Result<()> {
    for q in questions {
        write!(w, "{}\t", q.qid)?;
        write_joined(w, q.tokens.iter())?;
        write!(w, "\t")?;
        write_joined(w, q.truth.iter())?;
        if let Some(pool) = &q.pool {
            write!(w, "\t")?;
            write_joined(w, pool.iter())?;
        }
        writeln!(w)?;
    }
    Ok(())
}

fn write_joined<T: std::fmt::Display>(
    w: &mut dyn Write,
    items: impl Iterator<Item = T>,
) -> std::io::Result<()> {
    for (i, item) in items.enumerate() {
        if i > 0 {
            write!(w, " ")?;
        }
        write!(w, "{item}")?;
    }
    Ok(())
}
