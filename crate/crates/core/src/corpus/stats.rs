use std::fmt;

use super::{AnswerStore, Corpus, QuestionInstance};

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SplitStats {
    pub name: String,
    pub questions: usize,
    /// Question-to-answer ground-truth links.
    pub answers: usize,
    pub question_words: usize,
}

impl SplitStats {
    pub fn of(name: &str, questions: &[QuestionInstance]) -> Self {
        SplitStats {
            name: name.to_string(),
            questions: questions.len(),
            answers: questions.iter().map(|q| q.truth.len()).sum(),
            question_words: questions.iter().map(|q| q.tokens.len()).sum(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CorpusStats {
    pub splits: Vec<SplitStats>,
    pub unique_answers: usize,
    pub answer_words: usize,
}

pub fn corpus_stats(corpus: &Corpus) -> CorpusStats {
    stats_from_parts(
        corpus
            .splits
            .iter()
            .map(|s| (s.name.as_str(), s.questions.as_slice())),
        &corpus.answers,
    )
}

pub(crate) fn stats_from_parts<'a>(
    splits: impl Iterator<Item = (&'a str, &'a [QuestionInstance])>,
    answers: &AnswerStore,
) -> CorpusStats {
    CorpusStats {
        splits: splits.map(|(n, q)| SplitStats::of(n, q)).collect(),
        unique_answers: answers.len(),
        answer_words: answers.word_count(),
    }
}

impl CorpusStats {
    pub fn split(&self, name: &str) -> Option<&SplitStats> {
        self.splits.iter().find(|s| s.name == name)
    }
}

/// Flat `key: value` report.
impl fmt::Display for CorpusStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for s in &self.splits {
            writeln!(f, "{}.questions: {}", s.name, s.questions)?;
            writeln!(f, "{}.answers: {}", s.name, s.answers)?;
            writeln!(f, "{}.question_words: {}", s.name, s.question_words)?;
        }
        writeln!(f, "answers.unique: {}", self.unique_answers)?;
        writeln!(f, "answers.words: {}", self.answer_words)
    }
}
