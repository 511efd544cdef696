use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{AnswerId, AnswerStore, QuestionInstance};
use crate::error::CorpusError;

/// Candidate answers ranked for one question at evaluation time.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CandidatePool {
    pub qid: String,
    pub candidates: Vec<AnswerId>,
    pub pool_size: usize,
}

/// 64-bit FNV-1a, used to derive a per-question seed from the question id.
fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Builds the candidate pool for `q`: every ground-truth answer followed by
/// distinct negatives drawn uniformly without replacement from the rest of
/// the answer space.
///
/// The result depends only on `(q.qid, q.truth, store, pool_size, seed)`.
pub fn build_pool(
    q: &QuestionInstance,
    store: &AnswerStore,
    pool_size: usize,
    seed: u64,
) -> Result<CandidatePool, CorpusError> {
    if pool_size < q.truth.len() || pool_size > store.len() {
        return Err(CorpusError::PoolSize {
            pool_size,
            truth: q.truth.len(),
            answers: store.len(),
        });
    }
    let mut candidates = q.truth.clone();
    let needed = pool_size - candidates.len();
    if needed > 0 {
        let negatives: Vec<AnswerId> = store
            .ids()
            .iter()
            .copied()
            .filter(|id| !q.truth.contains(id))
            .collect();
        if negatives.len() < needed {
            return Err(CorpusError::PoolSize {
                pool_size,
                truth: q.truth.len(),
                answers: store.len(),
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ fnv1a(q.qid.as_bytes()));
        candidates.extend(
            sample(&mut rng, negatives.len(), needed)
                .into_iter()
                .map(|i| negatives[i]),
        );
    }
    Ok(CandidatePool {
        qid: q.qid.clone(),
        candidates,
        pool_size,
    })
}

/// Gives every question without a pool a seeded pool of `pool_size`.
/// Questions that already carry a pool are left untouched.
pub fn attach_pools(
    questions: &mut [QuestionInstance],
    store: &AnswerStore,
    pool_size: usize,
    seed: u64,
) -> Result<(), CorpusError> {
    for q in questions.iter_mut().filter(|q| q.pool.is_none()) {
        q.pool = Some(build_pool(q, store, pool_size, seed)?.candidates);
    }
    Ok(())
}
