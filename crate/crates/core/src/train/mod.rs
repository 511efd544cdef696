//! Hinge-ranking training with negative resampling and plain SGD.
//!
//! With more than one worker, threads update the shared parameters without
//! locks. Only the single-worker mode is reproducible bit for bit.

use std::fmt;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::KeyValues;
use crate::corpus::{AnswerId, AnswerStore, QuestionInstance, TokenId};
use crate::error::{ConfigError, CorpusError, Error, Result};
use crate::eval;
use crate::model::{zero_levels, Gradients, Model, ParamRole, Side, Trace};
use crate::similarity;

#[derive(Clone, Debug, PartialEq)]
pub struct HyperParams {
    pub learning_rate: f64,
    pub l2_weight: f64,
    pub margin: f64,
    pub max_resample: usize,
    pub epochs: usize,
    pub workers: usize,
    pub seed: u64,
    /// Loss weight per supervision tap. Empty means weight 1 for every tap.
    pub supervision_weights: Vec<f64>,
}

impl Default for HyperParams {
    fn default() -> Self {
        HyperParams {
            learning_rate: 0.01,
            l2_weight: 0.0001,
            margin: 0.009,
            max_resample: 50,
            epochs: 10,
            workers: 1,
            seed: 1,
            supervision_weights: Vec::new(),
        }
    }
}

impl HyperParams {
    pub const KEYS: [&'static str; 8] = [
        "learning_rate",
        "l2_weight",
        "margin",
        "max_resample",
        "epochs",
        "workers",
        "seed",
        "supervision_weights",
    ];

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |key: &str, value: String| {
            Err(ConfigError::InvalidValue {
                key: format!("train.{key}"),
                value,
            })
        };
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return invalid("learning_rate", self.learning_rate.to_string());
        }
        if !(self.l2_weight >= 0.0 && self.l2_weight.is_finite()) {
            return invalid("l2_weight", self.l2_weight.to_string());
        }
        if !(self.margin > 0.0 && self.margin.is_finite()) {
            return invalid("margin", self.margin.to_string());
        }
        if self.max_resample == 0 {
            return invalid("max_resample", "0".into());
        }
        if self.workers == 0 {
            return invalid("workers", "0".into());
        }
        if self
            .supervision_weights
            .iter()
            .any(|w| !(*w >= 0.0 && w.is_finite()))
        {
            return invalid(
                "supervision_weights",
                format_weights(&self.supervision_weights),
            );
        }
        Ok(())
    }

    /// Weights for a model with `taps` supervision taps.
    pub fn tap_weights(&self, taps: usize) -> Result<Vec<f64>, ConfigError> {
        if self.supervision_weights.is_empty() {
            return Ok(vec![1.0; taps]);
        }
        if self.supervision_weights.len() != taps {
            return Err(ConfigError::Inconsistent(format!(
                "{} supervision weights for {taps} taps",
                self.supervision_weights.len()
            )));
        }
        Ok(self.supervision_weights.clone())
    }

    /// Reads `train.*` keys over `self`.
    pub fn from_kv(kv: &KeyValues, base: HyperParams) -> Result<Self, ConfigError> {
        let mut hp = base;
        kv.read_into("train.learning_rate", &mut hp.learning_rate)?;
        kv.read_into("train.l2_weight", &mut hp.l2_weight)?;
        kv.read_into("train.margin", &mut hp.margin)?;
        kv.read_into("train.max_resample", &mut hp.max_resample)?;
        kv.read_into("train.epochs", &mut hp.epochs)?;
        kv.read_into("train.workers", &mut hp.workers)?;
        kv.read_into("train.seed", &mut hp.seed)?;
        if let Some(v) = kv.get("train.supervision_weights") {
            hp.supervision_weights = match v {
                "equal" | "" => Vec::new(),
                v => v
                    .split(',')
                    .map(|w| w.trim().parse())
                    .collect::<Result<_, _>>()
                    .map_err(|_| ConfigError::InvalidValue {
                        key: "train.supervision_weights".into(),
                        value: v.into(),
                    })?,
            };
        }
        Ok(hp)
    }

    pub fn write_kv(&self, kv: &mut KeyValues) {
        kv.set("train.learning_rate", &self.learning_rate.to_string());
        kv.set("train.l2_weight", &self.l2_weight.to_string());
        kv.set("train.margin", &self.margin.to_string());
        kv.set("train.max_resample", &self.max_resample.to_string());
        kv.set("train.epochs", &self.epochs.to_string());
        kv.set("train.workers", &self.workers.to_string());
        kv.set("train.seed", &self.seed.to_string());
        kv.set(
            "train.supervision_weights",
            &format_weights(&self.supervision_weights),
        );
    }
}

fn format_weights(w: &[f64]) -> String {
    if w.is_empty() {
        "equal".into()
    } else {
        w.iter().map(f64::to_string).collect::<Vec<_>>().join(",")
    }
}

pub fn hinge_loss(s_pos: f64, s_neg: f64, margin: f64) -> f64 {
    (margin - (s_pos - s_neg)).max(0.0)
}

/// Uniform draw from the answer store minus `exclude`.
pub fn sample_negative<R: Rng + ?Sized>(
    store: &AnswerStore,
    exclude: &[AnswerId],
    rng: &mut R,
) -> Result<AnswerId, CorpusError> {
    let excluded = exclude.iter().filter(|&&id| store.contains(id)).count();
    if store.len() <= excluded {
        return Err(CorpusError::ExhaustedAnswerSpace);
    }
    let ids = store.ids();
    loop {
        let id = ids[rng.gen_range(0..ids.len())];
        if !exclude.contains(&id) {
            return Ok(id);
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepOutcome {
    pub loss: f64,
    pub resamples: usize,
    pub updated: bool,
}

/// Weighted hinge loss of one (question, positive, negative) triple, summed
/// over supervision taps.
fn weighted_loss(
    model: &Model,
    weights: &[f64],
    margin: f64,
    q: &Trace,
    pos: &Trace,
    neg: &Trace,
) -> Result<(f64, Vec<bool>)> {
    let metric = &model.config().metric;
    let mut total = 0.0;
    let mut active = Vec::with_capacity(weights.len());
    for (t, &w) in weights.iter().enumerate() {
        let qv = &q.reps.levels[t];
        let sp = similarity::score(metric, qv, &pos.reps.levels[t])?;
        let sn = similarity::score(metric, qv, &neg.reps.levels[t])?;
        let l = hinge_loss(sp, sn, margin);
        active.push(l > 0.0 && w != 0.0);
        total += w * l;
    }
    Ok((total, active))
}

/// Gradient of the weighted loss given which taps are active.
fn loss_gradient(
    model: &Model,
    weights: &[f64],
    active: &[bool],
    q: &Trace,
    pos: &Trace,
    neg: &Trace,
) -> Result<Gradients> {
    let metric = &model.config().metric;
    let mut dq = zero_levels(&q.reps);
    let mut dp = zero_levels(&pos.reps);
    let mut dn = zero_levels(&neg.reps);
    for t in (0..weights.len()).filter(|&t| active[t]) {
        let w = weights[t];
        let qv = &q.reps.levels[t];
        let (_, gq_p, gp) = similarity::score_and_grad(metric, qv, &pos.reps.levels[t])?;
        let (_, gq_n, gn) = similarity::score_and_grad(metric, qv, &neg.reps.levels[t])?;
        for i in 0..qv.len() {
            dq[t][i] += w * (gq_n[i] - gq_p[i]);
            dp[t][i] -= w * gp[i];
            dn[t][i] += w * gn[i];
        }
    }
    let mut grads = Gradients::zeros(model);
    model.backward(q, &dq, &mut grads)?;
    model.backward(pos, &dp, &mut grads)?;
    model.backward(neg, &dn, &mut grads)?;
    Ok(grads)
}

/// Loss of a fixed triple and its gradient with respect to every parameter
/// (L2 term excluded).
pub fn triple_loss_and_gradient(
    model: &Model,
    q: &[TokenId],
    pos: &[TokenId],
    neg: &[TokenId],
    hp: &HyperParams,
) -> Result<(f64, Gradients)> {
    let weights = hp.tap_weights(model.config().tap_count())?;
    let qt = model.trace(q, Side::Question)?;
    let pt = model.trace(pos, Side::Answer)?;
    let nt = model.trace(neg, Side::Answer)?;
    let (loss, active) = weighted_loss(model, &weights, hp.margin, &qt, &pt, &nt)?;
    let grads = loss_gradient(model, &weights, &active, &qt, &pt, &nt)?;
    Ok((loss, grads))
}

pub fn triple_loss(
    model: &Model,
    q: &[TokenId],
    pos: &[TokenId],
    neg: &[TokenId],
    hp: &HyperParams,
) -> Result<f64> {
    let weights = hp.tap_weights(model.config().tap_count())?;
    let qt = model.trace(q, Side::Question)?;
    let pt = model.trace(pos, Side::Answer)?;
    let nt = model.trace(neg, Side::Answer)?;
    Ok(weighted_loss(model, &weights, hp.margin, &qt, &pt, &nt)?.0)
}

/// One SGD step: `p ← p − lr·(g + l2·p)` for weights and embeddings,
/// `p ← p − lr·g` for biases.
pub fn sgd_update(model: &Model, grads: &Gradients, hp: &HyperParams) {
    let (lr, l2) = (hp.learning_rate, hp.l2_weight);
    let tensors = model.tensors();
    let emb = model.embeddings();
    let dim = emb.dim();
    if l2 != 0.0 {
        for i in 0..emb.table.len() {
            let p = emb.table.get_flat(i);
            emb.table.set_flat(i, p - lr * (l2 * p));
        }
    }
    for (&tok, g) in &grads.embeddings {
        let base = tok as usize * dim;
        for (k, &gv) in g.iter().enumerate() {
            let p = emb.table.get_flat(base + k);
            emb.table.set_flat(base + k, p - lr * gv);
        }
    }
    for ((_, t, role), g) in tensors.iter().skip(1).zip(grads.dense()) {
        let decay = if *role == ParamRole::Bias { 0.0 } else { l2 };
        for (i, &gv) in g.iter().enumerate() {
            let p = t.get_flat(i);
            t.set_flat(i, p - lr * (gv + decay * p));
        }
    }
}

/// Draws negatives until one violates the margin or `max_resample` draws
/// are used; on a violation applies one SGD step.
pub fn train_step<R: Rng + ?Sized>(
    model: &Model,
    q: &QuestionInstance,
    a_pos: AnswerId,
    store: &AnswerStore,
    hp: &HyperParams,
    rng: &mut R,
) -> Result<StepOutcome> {
    if !q.is_truth(a_pos) {
        return Err(Error::Invalid(format!(
            "{a_pos} is not a ground-truth answer of {}",
            q.qid
        )));
    }
    let pos_tokens = store.get(a_pos).ok_or_else(|| CorpusError::UnknownAnswer {
        qid: q.qid.clone(),
        id: a_pos,
    })?;
    let weights = hp.tap_weights(model.config().tap_count())?;
    let qt = model.trace(&q.tokens, Side::Question)?;
    let pt = model.trace(pos_tokens, Side::Answer)?;
    for draw in 1..=hp.max_resample {
        let neg = sample_negative(store, &q.truth, rng)?;
        let nt = model.trace(store.get(neg).expect("sampled from store"), Side::Answer)?;
        let (loss, active) = weighted_loss(model, &weights, hp.margin, &qt, &pt, &nt)?;
        if loss > 0.0 {
            let grads = loss_gradient(model, &weights, &active, &qt, &pt, &nt)?;
            sgd_update(model, &grads, hp);
            return Ok(StepOutcome {
                loss,
                resamples: draw,
                updated: true,
            });
        }
    }
    Ok(StepOutcome {
        loss: 0.0,
        resamples: hp.max_resample,
        updated: false,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub mean_loss: f64,
    pub update_rate: f64,
    pub dev_top1: Option<f64>,
    pub seconds: f64,
}

impl fmt::Display for EpochRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "epoch={} mean_loss={} update_rate={} dev_top1={} seconds={:.3}",
            self.epoch,
            self.mean_loss,
            self.update_rate,
            self.dev_top1
                .map_or_else(|| "-".to_string(), |d| d.to_string()),
            self.seconds
        )
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
}

impl TrainHistory {
    pub fn final_dev(&self) -> Option<f64> {
        self.epochs.last().and_then(|e| e.dev_top1)
    }

    /// The history with wall-clock fields zeroed, for reproducibility checks.
    pub fn without_timing(&self) -> TrainHistory {
        TrainHistory {
            epochs: self
                .epochs
                .iter()
                .map(|e| EpochRecord {
                    seconds: 0.0,
                    ..e.clone()
                })
                .collect(),
        }
    }
}

impl fmt::Display for TrainHistory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for e in &self.epochs {
            writeln!(f, "{e}")?;
        }
        Ok(())
    }
}

/// Split evaluated at the end of every epoch.
pub struct DevSet<'a> {
    pub name: &'a str,
    pub questions: &'a [QuestionInstance],
}

/// Trains `model` in place for `hp.epochs` epochs over every
/// (question, ground-truth answer) link of `questions`, shuffled each epoch.
pub fn train(
    model: &Model,
    questions: &[QuestionInstance],
    dev: Option<DevSet<'_>>,
    store: &AnswerStore,
    hp: &HyperParams,
) -> Result<TrainHistory> {
    train_with(model, questions, dev, store, hp, |_| {})
}

/// [`train`] with a callback after each epoch.
pub fn train_with(
    model: &Model,
    questions: &[QuestionInstance],
    dev: Option<DevSet<'_>>,
    store: &AnswerStore,
    hp: &HyperParams,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainHistory> {
    hp.validate()?;
    hp.tap_weights(model.config().tap_count())?;
    if questions.is_empty() {
        return Err(Error::Invalid("empty training set".into()));
    }
    let pairs: Vec<(usize, AnswerId)> = questions
        .iter()
        .enumerate()
        .flat_map(|(i, q)| q.truth.iter().map(move |&a| (i, a)))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(hp.seed);
    let mut order = pairs;
    let mut history = TrainHistory::default();
    for epoch in 1..=hp.epochs {
        let start = Instant::now();
        order.shuffle(&mut rng);
        let outcomes = if hp.workers == 1 {
            run_chunk(model, questions, &order, store, hp, &mut rng)?
        } else {
            run_parallel(model, questions, &order, store, hp, &mut rng)?
        };
        let n = outcomes.len() as f64;
        let mean_loss = outcomes.iter().map(|o| o.loss).sum::<f64>() / n;
        let update_rate = outcomes.iter().filter(|o| o.updated).count() as f64 / n;
        let dev_top1 = match &dev {
            Some(d) => Some(eval::top1_accuracy(model, d.name, d.questions, store)?.accuracy),
            None => None,
        };
        let record = EpochRecord {
            epoch,
            mean_loss,
            update_rate,
            dev_top1,
            seconds: start.elapsed().as_secs_f64(),
        };
        log::info!("{record}");
        on_epoch(&record);
        history.epochs.push(record);
    }
    Ok(history)
}

fn run_chunk<R: Rng + ?Sized>(
    model: &Model,
    questions: &[QuestionInstance],
    pairs: &[(usize, AnswerId)],
    store: &AnswerStore,
    hp: &HyperParams,
    rng: &mut R,
) -> Result<Vec<StepOutcome>> {
    pairs
        .iter()
        .map(|&(qi, a)| train_step(model, &questions[qi], a, store, hp, rng))
        .collect()
}

fn run_parallel(
    model: &Model,
    questions: &[QuestionInstance],
    pairs: &[(usize, AnswerId)],
    store: &AnswerStore,
    hp: &HyperParams,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<StepOutcome>> {
    let chunk = pairs.len().div_ceil(hp.workers);
    let seeds: Vec<u64> = (0..hp.workers).map(|_| rng.next_u64()).collect();
    std::thread::scope(|scope| {
        let handles: Vec<_> = pairs
            .chunks(chunk)
            .zip(&seeds)
            .map(|(part, &seed)| {
                scope.spawn(move || {
                    let mut local = ChaCha8Rng::seed_from_u64(seed);
                    run_chunk(model, questions, part, store, hp, &mut local)
                })
            })
            .collect();
        let mut out = Vec::with_capacity(pairs.len());
        for h in handles {
            out.extend(h.join().expect("training worker panicked")?);
        }
        Ok(out)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Architecture, Init, ModelConfig};

    #[test]
    fn hinge_examples() {
        assert_eq!(hinge_loss(0.8, 0.3, 0.009), 0.0);
        assert!((hinge_loss(0.5, 0.499, 0.009) - 0.008).abs() < 1e-12);
        assert_eq!(hinge_loss(0.4, 0.4, 0.009), 0.009);
    }

    #[test]
    fn defaults() {
        let hp = HyperParams::default();
        assert_eq!(
            (hp.learning_rate, hp.l2_weight, hp.margin, hp.max_resample),
            (0.01, 0.0001, 0.009, 50)
        );
        hp.validate().unwrap();
        assert_eq!(hp.tap_weights(2).unwrap(), vec![1.0, 1.0]);
    }

    #[test]
    fn kv_roundtrip() {
        let hp = HyperParams {
            learning_rate: 0.05,
            epochs: 3,
            workers: 4,
            supervision_weights: vec![0.0, 1.0],
            ..HyperParams::default()
        };
        let mut kv = KeyValues::new();
        hp.write_kv(&mut kv);
        assert_eq!(
            HyperParams::from_kv(&kv, HyperParams::default()).unwrap(),
            hp
        );
    }

    fn store(n: u32) -> AnswerStore {
        let mut s = AnswerStore::new();
        for i in 0..n {
            s.insert(AnswerId(i), vec![i % 5, (i + 1) % 5]).unwrap();
        }
        s
    }

    #[test]
    fn negative_sampling() {
        let s = store(2);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..20 {
            assert_eq!(
                sample_negative(&s, &[AnswerId(0)], &mut rng).unwrap(),
                AnswerId(1)
            );
        }
        assert!(matches!(
            sample_negative(&s, &[AnswerId(0), AnswerId(1)], &mut rng),
            Err(CorpusError::ExhaustedAnswerSpace)
        ));
        let s = store(50);
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..10)
                .map(|_| sample_negative(&s, &[], &mut rng).unwrap())
                .collect::<Vec<_>>()
        };
        assert_eq!(draw(3), draw(3));
    }

    #[test]
    fn sgd_examples() {
        let model = Model::build(
            ModelConfig::new(Architecture::II, 5).with_sizes(2, 2, 2),
            Init::Uniform,
            0,
        )
        .unwrap();
        let before = model.clone();
        let zero = Gradients::zeros(&model);
        let hp = HyperParams {
            l2_weight: 0.0,
            ..HyperParams::default()
        };
        sgd_update(&model, &zero, &hp);
        assert_eq!(model, before);

        let w = &model.hidden_layers()[0].weight;
        w.set_flat(0, 1.0);
        sgd_update(&model, &zero, &HyperParams::default());
        assert_eq!(w.get_flat(0), 1.0 - 0.01 * 0.0001);
        assert!((w.get_flat(0) - 0.999999).abs() < 1e-15);
    }

    #[test]
    fn l2_shrinks_weights_and_spares_biases() {
        let model = Model::build(
            ModelConfig::new(Architecture::III, 5)
                .with_sizes(2, 3, 2)
                .with_post_hl(2),
            Init::Uniform,
            4,
        )
        .unwrap();
        for (_, t, role) in model.tensors() {
            if role == ParamRole::Bias {
                t.copy_from(&vec![0.5; t.len()]);
            }
        }
        let before = model.clone();
        sgd_update(&model, &Gradients::zeros(&model), &HyperParams::default());
        for ((_, a, role), (_, b, _)) in model.tensors().iter().zip(before.tensors()) {
            for i in 0..a.len() {
                let (new, old) = (a.get_flat(i), b.get_flat(i));
                if *role == ParamRole::Bias {
                    assert_eq!(new, old);
                } else if old != 0.0 {
                    assert!(new.abs() < old.abs());
                }
            }
        }
    }

    #[test]
    fn step_contract() {
        let s = store(6);
        let q = QuestionInstance {
            qid: "q".into(),
            tokens: vec![1, 2],
            truth: vec![AnswerId(0)],
            pool: None,
        };
        let model = Model::build(
            ModelConfig::new(Architecture::II, 5).with_sizes(3, 3, 3),
            Init::Uniform,
            0,
        )
        .unwrap();
        // a margin beyond the score range can never be satisfied
        let hp = HyperParams {
            margin: 3.0,
            ..HyperParams::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let out = train_step(&model, &q, AnswerId(0), &s, &hp, &mut rng).unwrap();
        assert_eq!((out.resamples, out.updated), (1, true));
        assert!(out.loss > 0.0);

        // with a tiny margin and q identical to the positive, every draw is satisfied
        let s5 = store(5);
        let q2 = QuestionInstance {
            tokens: s5.get(AnswerId(0)).unwrap().to_vec(),
            ..q.clone()
        };
        let model2 = Model::build(
            ModelConfig::new(Architecture::II, 5).with_sizes(3, 3, 3),
            Init::Uniform,
            0,
        )
        .unwrap();
        let before = model2.clone();
        let hp = HyperParams {
            margin: 1e-300,
            ..HyperParams::default()
        };
        let out = train_step(&model2, &q2, AnswerId(0), &s5, &hp, &mut rng).unwrap();
        assert_eq!((out.loss, out.resamples, out.updated), (0.0, 50, false));
        assert_eq!(model2, before);
        assert!(train_step(&model, &q, AnswerId(3), &s, &hp, &mut rng).is_err());
    }

    #[test]
    fn zero_epochs_leave_model_unchanged() {
        let s = store(6);
        let q = QuestionInstance {
            qid: "q".into(),
            tokens: vec![1, 2],
            truth: vec![AnswerId(0)],
            pool: None,
        };
        let model = Model::build(
            ModelConfig::new(Architecture::II, 5).with_sizes(3, 3, 3),
            Init::Uniform,
            0,
        )
        .unwrap();
        let before = model.clone();
        let hp = HyperParams {
            epochs: 0,
            ..HyperParams::default()
        };
        let h = train(&model, &[q], None, &s, &hp).unwrap();
        assert!(h.epochs.is_empty());
        assert_eq!(model, before);
        assert!(train(&model, &[], None, &s, &HyperParams::default()).is_err());
    }
}
