//! Small generated corpora with learnable question/answer overlap, used for
//! smoke tests and sanity runs.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    attach_pools, AnswerId, AnswerStore, Corpus, QuestionInstance, Split, SplitKind, Vocabulary,
};
use crate::error::CorpusError;

#[derive(Clone, Debug)]
pub struct SyntheticSpec {
    pub questions: usize,
    /// Number of word tokens; the unknown token is added on top.
    pub vocab: usize,
    pub answers: usize,
    pub pool_size: usize,
    pub answer_len: (usize, usize),
    pub question_len: (usize, usize),
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            questions: 100,
            vocab: 200,
            answers: 300,
            pool_size: 10,
            answer_len: (8, 16),
            question_len: (3, 6),
            seed: 7,
        }
    }
}

/// Generates a corpus with a single pooled `train` split.
///
/// Every answer is a random bag of words. Each question copies a few words
/// from its ground-truth answer (every tenth question has two) and adds one
/// random distractor word.
pub fn generate(spec: &SyntheticSpec) -> Result<Corpus, CorpusError> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let vocab = Vocabulary::from_tokens((0..spec.vocab).map(|i| format!("w{i}")))?;
    let words = spec.vocab as u32;

    let mut answers = AnswerStore::new();
    for a in 0..spec.answers {
        let len = rng.gen_range(spec.answer_len.0..=spec.answer_len.1);
        let toks = (0..len).map(|_| rng.gen_range(0..words)).collect();
        answers.insert(AnswerId(a as u32), toks)?;
    }

    let mut ids: Vec<AnswerId> = answers.ids().to_vec();
    ids.shuffle(&mut rng);
    let mut next = ids.into_iter();
    let mut questions = Vec::with_capacity(spec.questions);
    for q in 0..spec.questions {
        let n_truth = if q % 10 == 9 { 2 } else { 1 };
        let truth: Vec<AnswerId> = next.by_ref().take(n_truth).collect();
        if truth.is_empty() {
            break;
        }
        let source: Vec<u32> = truth
            .iter()
            .flat_map(|&a| answers.get(a).unwrap().iter().copied())
            .collect();
        let len = rng.gen_range(spec.question_len.0..=spec.question_len.1);
        let mut tokens: Vec<u32> = source.choose_multiple(&mut rng, len).copied().collect();
        tokens.insert(rng.gen_range(0..=tokens.len()), rng.gen_range(0..words));
        questions.push(QuestionInstance {
            qid: format!("syn-{q}"),
            tokens,
            truth,
            pool: None,
        });
    }
    attach_pools(&mut questions, &answers, spec.pool_size, spec.seed)?;

    Ok(Corpus {
        vocab,
        answers,
        splits: vec![Split {
            name: "train".into(),
            kind: SplitKind::Train,
            questions,
        }],
    })
}
