//! The question/answer corpus: vocabulary, answer space, question splits,
//! candidate pools and idf statistics.
//!
//! All types here are immutable once loaded and can be shared freely
//! between threads.

mod idf;
mod io;
mod pool;
pub mod released;
mod stats;
pub mod synthetic;

use std::collections::HashMap;
use std::fmt;
use std::path::Path;

pub use idf::{compute_idf, training_documents, IdfTable};
pub use io::{
    load_answers, load_split, load_vocabulary, parse_answers, parse_split, parse_vocabulary,
    write_answers, write_split, write_vocabulary, OovPolicy,
};
pub use pool::{attach_pools, build_pool, CandidatePool};
pub use stats::{corpus_stats, CorpusStats, SplitStats};

use crate::error::CorpusError;

/// Index of a token in a [`Vocabulary`].
pub type TokenId = u32;

/// Token string reserved for out-of-vocabulary ids.
pub const UNK_TOKEN: &str = "<unk>";

/// Identifier of an answer in the answer space.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AnswerId(pub u32);

impl fmt::Display for AnswerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Bijection between token strings and contiguous ids `0..len`.
#[derive(Clone, Debug, PartialEq)]
pub struct Vocabulary {
    id_to_token: Vec<String>,
    token_to_id: HashMap<String, TokenId>,
    unk_id: TokenId,
    /// Maps ids used in the source file onto contiguous ids when the file
    /// ids had gaps or did not start at zero.
    file_ids: Option<HashMap<u64, TokenId>>,
}

impl Vocabulary {
    /// Builds a vocabulary from tokens in id order, appending the unknown
    /// token if it is not already present.
    pub fn from_tokens<I, S>(tokens: I) -> Result<Self, CorpusError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut id_to_token = Vec::new();
        let mut token_to_id = HashMap::new();
        for (line, token) in tokens.into_iter().enumerate() {
            let token = token.into();
            if token_to_id.contains_key(&token) {
                return Err(CorpusError::DuplicateToken {
                    file: "<tokens>".into(),
                    line: line + 1,
                    token,
                });
            }
            token_to_id.insert(token.clone(), id_to_token.len() as TokenId);
            id_to_token.push(token);
        }
        Ok(Self::finish(id_to_token, token_to_id, None))
    }

    fn finish(
        mut id_to_token: Vec<String>,
        mut token_to_id: HashMap<String, TokenId>,
        file_ids: Option<HashMap<u64, TokenId>>,
    ) -> Self {
        let unk_id = match token_to_id.get(UNK_TOKEN) {
            Some(&id) => id,
            None => {
                let id = id_to_token.len() as TokenId;
                id_to_token.push(UNK_TOKEN.to_string());
                token_to_id.insert(UNK_TOKEN.to_string(), id);
                id
            }
        };
        Vocabulary {
            id_to_token,
            token_to_id,
            unk_id,
            file_ids,
        }
    }

    pub fn len(&self) -> usize {
        self.id_to_token.len()
    }

    pub fn is_empty(&self) -> bool {
        self.id_to_token.is_empty()
    }

    pub fn unk_id(&self) -> TokenId {
        self.unk_id
    }

    pub fn token(&self, id: TokenId) -> Option<&str> {
        self.id_to_token.get(id as usize).map(String::as_str)
    }

    pub fn id(&self, token: &str) -> Option<TokenId> {
        self.token_to_id.get(token).copied()
    }

    pub fn tokens(&self) -> &[String] {
        &self.id_to_token
    }

    /// Resolves an id as written in the source vocabulary file.
    pub fn resolve_file_id(&self, raw: u64) -> Option<TokenId> {
        match &self.file_ids {
            Some(map) => map.get(&raw).copied(),
            None if raw < self.len() as u64 => Some(raw as TokenId),
            None => None,
        }
    }
}

/// The answer space: every answer id with its token sequence.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AnswerStore {
    ids: Vec<AnswerId>,
    tokens: Vec<Vec<TokenId>>,
    index: HashMap<AnswerId, usize>,
}

impl AnswerStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds an answer. Fails on an empty token list or a duplicate id.
    pub fn insert(&mut self, id: AnswerId, tokens: Vec<TokenId>) -> Result<(), CorpusError> {
        if tokens.is_empty() {
            return Err(CorpusError::EmptyAnswer {
                file: "<store>".into(),
                line: 0,
                id,
            });
        }
        if self.index.contains_key(&id) {
            return Err(CorpusError::DuplicateAnswer {
                file: "<store>".into(),
                line: 0,
                id,
            });
        }
        self.index.insert(id, self.ids.len());
        self.ids.push(id);
        self.tokens.push(tokens);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn contains(&self, id: AnswerId) -> bool {
        self.index.contains_key(&id)
    }

    pub fn get(&self, id: AnswerId) -> Option<&[TokenId]> {
        self.index.get(&id).map(|&i| self.tokens[i].as_slice())
    }

    /// Answer ids in load order.
    pub fn ids(&self) -> &[AnswerId] {
        &self.ids
    }

    pub fn iter(&self) -> impl Iterator<Item = (AnswerId, &[TokenId])> {
        self.ids
            .iter()
            .copied()
            .zip(self.tokens.iter().map(Vec::as_slice))
    }

    pub fn word_count(&self) -> usize {
        self.tokens.iter().map(Vec::len).sum()
    }
}

/// Which kind of split a file holds. Dev and test splits carry pools.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SplitKind {
    Train,
    Dev,
    Test,
}

impl SplitKind {
    pub fn requires_pool(self) -> bool {
        !matches!(self, SplitKind::Train)
    }
}

/// One question with its ground truth and (for dev/test) candidate pool.
#[derive(Clone, Debug, PartialEq)]
pub struct QuestionInstance {
    pub qid: String,
    pub tokens: Vec<TokenId>,
    pub truth: Vec<AnswerId>,
    pub pool: Option<Vec<AnswerId>>,
}

impl QuestionInstance {
    pub fn is_truth(&self, id: AnswerId) -> bool {
        self.truth.contains(&id)
    }

    /// Checks the instance invariants against an answer store.
    pub fn validate(&self, store: &AnswerStore) -> Result<(), CorpusError> {
        if self.tokens.is_empty() {
            return Err(CorpusError::EmptyQuestion {
                qid: self.qid.clone(),
            });
        }
        if self.truth.is_empty() {
            return Err(CorpusError::EmptyTruth {
                qid: self.qid.clone(),
            });
        }
        check_unique(&self.qid, &self.truth)?;
        for &id in &self.truth {
            if !store.contains(id) {
                return Err(CorpusError::UnknownAnswer {
                    qid: self.qid.clone(),
                    id,
                });
            }
        }
        if let Some(pool) = &self.pool {
            check_unique(&self.qid, pool)?;
            for &id in pool {
                if !store.contains(id) {
                    return Err(CorpusError::UnknownAnswer {
                        qid: self.qid.clone(),
                        id,
                    });
                }
            }
            if !self.truth.iter().all(|t| pool.contains(t)) {
                return Err(CorpusError::TruthNotInPool {
                    qid: self.qid.clone(),
                });
            }
        }
        Ok(())
    }
}

fn check_unique(qid: &str, ids: &[AnswerId]) -> Result<(), CorpusError> {
    let mut seen = std::collections::HashSet::with_capacity(ids.len());
    for &id in ids {
        if !seen.insert(id) {
            return Err(CorpusError::DuplicateCandidate {
                qid: qid.to_string(),
                id,
            });
        }
    }
    Ok(())
}

/// A named split of questions.
#[derive(Clone, Debug, PartialEq)]
pub struct Split {
    pub name: String,
    pub kind: SplitKind,
    pub questions: Vec<QuestionInstance>,
}

/// A whole corpus: vocabulary, answers and every available split.
#[derive(Clone, Debug, PartialEq)]
pub struct Corpus {
    pub vocab: Vocabulary,
    pub answers: AnswerStore,
    pub splits: Vec<Split>,
}

/// Canonical split names and kinds, in the order they are written.
pub const CANONICAL_SPLITS: [(&str, SplitKind); 4] = [
    ("train", SplitKind::Train),
    ("dev", SplitKind::Dev),
    ("test1", SplitKind::Test),
    ("test2", SplitKind::Test),
];

pub const VOCAB_FILE: &str = "vocab.tsv";
pub const ANSWERS_FILE: &str = "answers.tsv";

impl Corpus {
    pub fn split(&self, name: &str) -> Option<&Split> {
        self.splits.iter().find(|s| s.name == name)
    }

    /// Loads a canonical corpus directory (`vocab.tsv`, `answers.tsv`,
    /// and any of `train.tsv`, `dev.tsv`, `test1.tsv`, `test2.tsv`).
    pub fn load_canonical(dir: &Path, oov: OovPolicy) -> Result<Self, CorpusError> {
        let vocab = load_vocabulary(&dir.join(VOCAB_FILE))?;
        let answers = load_answers(&dir.join(ANSWERS_FILE), &vocab, oov)?;
        let mut splits = Vec::new();
        for (name, kind) in CANONICAL_SPLITS {
            let path = dir.join(format!("{name}.tsv"));
            if path.exists() {
                let questions = load_split(&path, kind, &vocab, &answers, oov)?;
                splits.push(Split {
                    name: name.to_string(),
                    kind,
                    questions,
                });
            }
        }
        Ok(Corpus {
            vocab,
            answers,
            splits,
        })
    }

    /// Writes the corpus in canonical form into `dir`.
    pub fn write_canonical(&self, dir: &Path) -> Result<(), CorpusError> {
        std::fs::create_dir_all(dir).map_err(|source| CorpusError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        write_file(&dir.join(VOCAB_FILE), |w| write_vocabulary(w, &self.vocab))?;
        write_file(&dir.join(ANSWERS_FILE), |w| write_answers(w, &self.answers))?;
        for split in &self.splits {
            let path = dir.join(format!("{}.tsv", split.name));
            write_file(&path, |w| write_split(w, &split.questions))?;
        }
        Ok(())
    }
}

fn write_file(
    path: &Path,
    f: impl FnOnce(&mut dyn std::io::Write) -> std::io::Result<()>,
) -> Result<(), CorpusError> {
    let io_err = |source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = std::fs::File::create(path).map_err(io_err)?;
    let mut w = std::io::BufWriter::new(file);
    f(&mut w).map_err(io_err)?;
    std::io::Write::flush(&mut w).map_err(io_err)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vocabulary_appends_unk() {
        let v = Vocabulary::from_tokens(["the", "cat"]).unwrap();
        assert_eq!(v.len(), 3);
        assert_eq!(v.token(v.unk_id()), Some(UNK_TOKEN));
        for (i, t) in v.tokens().iter().enumerate() {
            assert_eq!(v.id(t), Some(i as TokenId));
        }
    }

    #[test]
    fn vocabulary_keeps_existing_unk() {
        let v = Vocabulary::from_tokens(["<unk>", "cat"]).unwrap();
        assert_eq!(v.len(), 2);
        assert_eq!(v.unk_id(), 0);
    }

    #[test]
    fn store_rejects_empty_and_duplicate() {
        let mut s = AnswerStore::new();
        s.insert(AnswerId(1), vec![0]).unwrap();
        assert!(matches!(
            s.insert(AnswerId(2), vec![]),
            Err(CorpusError::EmptyAnswer { .. })
        ));
        assert!(matches!(
            s.insert(AnswerId(1), vec![1]),
            Err(CorpusError::DuplicateAnswer { .. })
        ));
        assert_eq!(s.len(), 1);
    }

    #[test]
    fn question_validation() {
        let mut s = AnswerStore::new();
        s.insert(AnswerId(1), vec![0]).unwrap();
        s.insert(AnswerId(2), vec![1]).unwrap();
        let mut q = QuestionInstance {
            qid: "q".into(),
            tokens: vec![0],
            truth: vec![AnswerId(1)],
            pool: Some(vec![AnswerId(2), AnswerId(1)]),
        };
        q.validate(&s).unwrap();
        q.pool = Some(vec![AnswerId(2)]);
        assert!(matches!(
            q.validate(&s),
            Err(CorpusError::TruthNotInPool { .. })
        ));
        q.pool = Some(vec![AnswerId(1), AnswerId(1)]);
        assert!(matches!(
            q.validate(&s),
            Err(CorpusError::DuplicateCandidate { .. })
        ));
        q.pool = None;
        q.truth = vec![AnswerId(7)];
        assert!(matches!(
            q.validate(&s),
            Err(CorpusError::UnknownAnswer { .. })
        ));
    }
}
