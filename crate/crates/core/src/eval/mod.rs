//! Pool ranking, top-1 accuracy, the bag-of-words baseline and the
//! multi-run best-dev protocol.

use std::cmp::Ordering;
use std::collections::hash_map::Entry;
use std::collections::HashMap;
use std::fmt;
use std::path::{Path, PathBuf};

use crate::corpus::{AnswerId, AnswerStore, Corpus, IdfTable, QuestionInstance, SplitKind};
use crate::error::{CorpusError, Error, Result, SimilarityError};
use crate::layers::EmbeddingMatrix;
use crate::model::{self, Init, Model, ModelConfig, Side};
use crate::similarity::{self, MetricKind, MetricSpec};
use crate::train::{self, HyperParams, TrainHistory};

/// Candidates of one pool ordered by descending score.
#[derive(Clone, Debug, PartialEq)]
pub struct RankedPool {
    pub qid: String,
    pub candidates: Vec<AnswerId>,
    pub scores: Vec<f64>,
    pub correct: bool,
    /// 1-based position of the highest-ranked ground-truth answer.
    pub best_truth_rank: usize,
}

impl RankedPool {
    /// Sorts `scored` by descending score, ties by smaller answer id.
    pub fn from_scores(q: &QuestionInstance, mut scored: Vec<(AnswerId, f64)>) -> Self {
        scored.sort_by(|a, b| match b.1.total_cmp(&a.1) {
            Ordering::Equal => a.0.cmp(&b.0),
            o => o,
        });
        let best_truth_rank = scored
            .iter()
            .position(|(id, _)| q.is_truth(*id))
            .map_or(scored.len() + 1, |p| p + 1);
        RankedPool {
            qid: q.qid.clone(),
            correct: best_truth_rank == 1,
            candidates: scored.iter().map(|s| s.0).collect(),
            scores: scored.iter().map(|s| s.1).collect(),
            best_truth_rank,
        }
    }

    pub fn top(&self) -> Option<(AnswerId, f64)> {
        Some((*self.candidates.first()?, self.scores[0]))
    }
}

fn pool_of(q: &QuestionInstance) -> Result<&[AnswerId]> {
    q.pool
        .as_deref()
        .ok_or_else(|| CorpusError::MissingPool { qid: q.qid.clone() }.into())
}

fn answer_tokens<'a>(
    store: &'a AnswerStore,
    q: &QuestionInstance,
    id: AnswerId,
) -> Result<&'a [crate::corpus::TokenId]> {
    store.get(id).ok_or_else(|| {
        CorpusError::UnknownAnswer {
            qid: q.qid.clone(),
            id,
        }
        .into()
    })
}

/// Similarity with a zero representation ranks last instead of failing.
fn score_or_sentinel(metric: &MetricSpec, x: &[f64], y: &[f64]) -> Result<f64> {
    match similarity::score(metric, x, y) {
        Ok(s) => Ok(s),
        Err(SimilarityError::ZeroVector) => Ok(f64::NEG_INFINITY),
        Err(e) => Err(e.into()),
    }
}

/// Answer representations keyed by id, reused across questions.
#[derive(Default)]
pub struct RepCache {
    reps: HashMap<AnswerId, Vec<f64>>,
}

impl RepCache {
    pub fn new() -> Self {
        Self::default()
    }

    fn get(
        &mut self,
        model: &Model,
        id: AnswerId,
        tokens: &[crate::corpus::TokenId],
    ) -> Result<&[f64]> {
        match self.reps.entry(id) {
            Entry::Occupied(e) => Ok(e.into_mut()),
            Entry::Vacant(e) => Ok(e.insert(model.forward(tokens, Side::Answer)?.top().to_vec())),
        }
    }
}

pub fn rank_pool(model: &Model, q: &QuestionInstance, store: &AnswerStore) -> Result<RankedPool> {
    rank_pool_cached(model, q, store, &mut RepCache::new())
}

/// Ranks the pool of `q`, computing the question representation once and
/// taking answer representations from `cache`.
pub fn rank_pool_cached(
    model: &Model,
    q: &QuestionInstance,
    store: &AnswerStore,
    cache: &mut RepCache,
) -> Result<RankedPool> {
    let pool = pool_of(q)?;
    let qrep = model.forward(&q.tokens, Side::Question)?;
    let metric = &model.config().metric;
    let mut scored = Vec::with_capacity(pool.len());
    for &id in pool {
        let arep = cache.get(model, id, answer_tokens(store, q, id)?)?;
        scored.push((id, score_or_sentinel(metric, qrep.top(), arep)?));
    }
    Ok(RankedPool::from_scores(q, scored))
}

#[derive(Clone, Debug, PartialEq)]
pub struct QuestionRecord {
    pub qid: String,
    pub best_truth_rank: usize,
    pub top_answer: AnswerId,
    pub top_score: f64,
    pub correct: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub split: String,
    pub accuracy: f64,
    pub records: Vec<QuestionRecord>,
    /// Effective configuration, one `key = value` per line.
    pub config: String,
    pub checkpoint: Option<PathBuf>,
}

impl EvalReport {
    pub fn from_pools(split: &str, pools: &[RankedPool]) -> Self {
        let records: Vec<QuestionRecord> = pools
            .iter()
            .map(|p| {
                let (top_answer, top_score) = p.top().unwrap_or((AnswerId(0), f64::NEG_INFINITY));
                QuestionRecord {
                    qid: p.qid.clone(),
                    best_truth_rank: p.best_truth_rank,
                    top_answer,
                    top_score,
                    correct: p.correct,
                }
            })
            .collect();
        let correct = records.iter().filter(|r| r.correct).count();
        EvalReport {
            split: split.to_string(),
            accuracy: if records.is_empty() {
                0.0
            } else {
                correct as f64 / records.len() as f64
            },
            records,
            config: String::new(),
            checkpoint: None,
        }
    }

    pub fn correct(&self) -> usize {
        self.records.iter().filter(|r| r.correct).count()
    }

    /// The one-line summary, e.g. `dev top1=0.5`.
    pub fn summary(&self) -> String {
        format!("{} top1={}", self.split, self.accuracy)
    }
}

/// Comment lines with the config echo, a tab-separated record per
/// question, then a `summary` line.
impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "# split = {}", self.split)?;
        if let Some(ckpt) = &self.checkpoint {
            writeln!(f, "# checkpoint = {}", ckpt.display())?;
        }
        for line in self.config.lines().filter(|l| !l.trim().is_empty()) {
            writeln!(f, "# {line}")?;
        }
        writeln!(f, "qid\trank\ttop_answer\ttop_score\tcorrect")?;
        for r in &self.records {
            writeln!(
                f,
                "{}\t{}\t{}\t{}\t{}",
                r.qid, r.best_truth_rank, r.top_answer, r.top_score, r.correct as u8
            )?;
        }
        writeln!(
            f,
            "summary\tsplit={}\tquestions={}\tcorrect={}\ttop1={}",
            self.split,
            self.records.len(),
            self.correct(),
            self.accuracy
        )
    }
}

pub fn top1_accuracy(
    model: &Model,
    split: &str,
    questions: &[QuestionInstance],
    store: &AnswerStore,
) -> Result<EvalReport> {
    let mut cache = RepCache::new();
    let pools = questions
        .iter()
        .map(|q| rank_pool_cached(model, q, store, &mut cache))
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalReport::from_pools(split, &pools))
}

/// `Σ idf(t) · E[t]` over the tokens of a sequence.
pub fn bow_representation(
    tokens: &[crate::corpus::TokenId],
    emb: &EmbeddingMatrix,
    idf: &IdfTable,
) -> Vec<f64> {
    let mut rep = vec![0.0; emb.dim()];
    let mut row = vec![0.0; emb.dim()];
    for &t in tokens {
        emb.table.read_row(t as usize, &mut row);
        let w = idf.idf(t);
        for (acc, &v) in rep.iter_mut().zip(&row) {
            *acc += w * v;
        }
    }
    rep
}

/// Ranks the pool of `q` by cosine between idf-weighted embedding sums.
pub fn baseline_bow(
    q: &QuestionInstance,
    store: &AnswerStore,
    emb: &EmbeddingMatrix,
    idf: &IdfTable,
) -> Result<RankedPool> {
    let pool = pool_of(q)?;
    for &t in q
        .tokens
        .iter()
        .chain(pool.iter().flat_map(|&id| store.get(id).unwrap_or(&[])))
    {
        if t as usize >= emb.vocab_size() {
            return Err(crate::error::LayerError::TokenOutOfRange {
                id: t,
                vocab: emb.vocab_size(),
            }
            .into());
        }
    }
    let cosine = MetricSpec::new(MetricKind::Cosine);
    let qrep = bow_representation(&q.tokens, emb, idf);
    let mut scored = Vec::with_capacity(pool.len());
    for &id in pool {
        let arep = bow_representation(answer_tokens(store, q, id)?, emb, idf);
        scored.push((id, score_or_sentinel(&cosine, &qrep, &arep)?));
    }
    Ok(RankedPool::from_scores(q, scored))
}

pub fn baseline_report(
    split: &str,
    questions: &[QuestionInstance],
    store: &AnswerStore,
    emb: &EmbeddingMatrix,
    idf: &IdfTable,
) -> Result<EvalReport> {
    let pools = questions
        .iter()
        .map(|q| baseline_bow(q, store, emb, idf))
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalReport::from_pools(split, &pools))
}

/// Index of the highest dev accuracy, smallest index on ties.
pub fn choose_best(dev: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &acc) in dev.iter().enumerate() {
        if best.is_none_or(|b| acc > dev[b]) {
            best = Some(i);
        }
    }
    best
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProtocolRun {
    pub index: usize,
    pub seed: u64,
    pub dev: f64,
    pub history: TrainHistory,
    pub checkpoint: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProtocolResult {
    pub runs: Vec<ProtocolRun>,
    pub chosen: usize,
    /// Test split name and accuracy of the chosen run.
    pub test: Vec<(String, f64)>,
}

/// Table of run index, seed and dev accuracy; the chosen run also lists
/// its test accuracies.
impl fmt::Display for ProtocolResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "run\tseed\tdev")?;
        for (name, _) in &self.test {
            write!(f, "\t{name}")?;
        }
        writeln!(f, "\tchosen")?;
        for run in &self.runs {
            write!(f, "{}\t{}\t{}", run.index, run.seed, run.dev)?;
            let chosen = run.index == self.chosen;
            for (_, acc) in &self.test {
                if chosen {
                    write!(f, "\t{acc}")?;
                } else {
                    write!(f, "\t-")?;
                }
            }
            writeln!(f, "\t{}", chosen as u8)?;
        }
        Ok(())
    }
}

/// Trains `n_runs` models with seeds `hp.seed + i`, evaluates each on the
/// dev split and evaluates the best one on every test split. Checkpoints go
/// to `out_dir` as `run-<i>.ckpt` when given.
pub fn run_protocol(
    corpus: &Corpus,
    config: &ModelConfig,
    hp: &HyperParams,
    n_runs: usize,
    out_dir: Option<&Path>,
) -> Result<ProtocolResult> {
    if n_runs == 0 {
        return Err(Error::Invalid("protocol needs at least one run".into()));
    }
    let train_split = corpus
        .split("train")
        .ok_or_else(|| Error::Invalid("corpus has no train split".into()))?;
    let dev_split = corpus
        .splits
        .iter()
        .find(|s| s.kind == SplitKind::Dev)
        .ok_or_else(|| Error::Invalid("corpus has no dev split".into()))?;
    let mut runs = Vec::with_capacity(n_runs);
    let mut models = Vec::with_capacity(n_runs);
    for i in 0..n_runs {
        let seed = hp.seed.wrapping_add(i as u64);
        let run_hp = HyperParams { seed, ..hp.clone() };
        let model = Model::build(config.clone(), Init::Uniform, seed)?;
        let history = train::train(
            &model,
            &train_split.questions,
            None,
            &corpus.answers,
            &run_hp,
        )?;
        let dev = top1_accuracy(
            &model,
            &dev_split.name,
            &dev_split.questions,
            &corpus.answers,
        )?
        .accuracy;
        log::info!("run {i} seed {seed}: {} top1={dev}", dev_split.name);
        let checkpoint = match out_dir {
            Some(dir) => {
                let path = dir.join(format!("run-{i}.ckpt"));
                model::save(&model, &path)?;
                Some(path)
            }
            None => None,
        };
        runs.push(ProtocolRun {
            index: i,
            seed,
            dev,
            history,
            checkpoint,
        });
        models.push(model);
    }
    let dev: Vec<f64> = runs.iter().map(|r| r.dev).collect();
    let chosen = choose_best(&dev).expect("at least one run");
    let test = corpus
        .splits
        .iter()
        .filter(|s| s.kind == SplitKind::Test)
        .map(|s| {
            Ok((
                s.name.clone(),
                top1_accuracy(&models[chosen], &s.name, &s.questions, &corpus.answers)?.accuracy,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ProtocolResult { runs, chosen, test })
}
