use std::collections::{HashMap, HashSet};

use super::{AnswerId, Corpus, TokenId};
use crate::error::CorpusError;

/// Inverse document frequencies, `idf(t) = ln(N / df(t))`.
#[derive(Clone, Debug, PartialEq)]
pub struct IdfTable {
    idf: HashMap<TokenId, f64>,
    doc_count: usize,
}

impl IdfTable {
    /// Weight of `token`. Tokens never seen use a document frequency of 1.
    pub fn idf(&self, token: TokenId) -> f64 {
        self.idf
            .get(&token)
            .copied()
            .unwrap_or_else(|| (self.doc_count as f64).ln())
    }

    pub fn doc_count(&self) -> usize {
        self.doc_count
    }
}

pub fn compute_idf<D: AsRef<[TokenId]>>(documents: &[D]) -> Result<IdfTable, CorpusError> {
    if documents.is_empty() {
        return Err(CorpusError::NoDocuments);
    }
    let mut df: HashMap<TokenId, usize> = HashMap::new();
    for doc in documents {
        let unique: HashSet<TokenId> = doc.as_ref().iter().copied().collect();
        for t in unique {
            *df.entry(t).or_default() += 1;
        }
    }
    let n = documents.len() as f64;
    Ok(IdfTable {
        idf: df
            .into_iter()
            .map(|(t, c)| (t, (n / c as f64).ln()))
            .collect(),
        doc_count: documents.len(),
    })
}

/// Documents used for idf statistics: every training question plus every
/// distinct answer linked as ground truth from the training split.
pub fn training_documents(corpus: &Corpus) -> Vec<Vec<TokenId>> {
    let Some(train) = corpus.split("train") else {
        return Vec::new();
    };
    let mut docs: Vec<Vec<TokenId>> = train.questions.iter().map(|q| q.tokens.clone()).collect();
    let mut seen: HashSet<AnswerId> = HashSet::new();
    for q in &train.questions {
        for &a in &q.truth {
            if seen.insert(a) {
                if let Some(tokens) = corpus.answers.get(a) {
                    docs.push(tokens.to_vec());
                }
            }
        }
    }
    docs
}
