//! Independent oracles shared by the integration and acceptance tests.
#![allow(dead_code)]

use std::cmp::Ordering;

use qarank::corpus::{AnswerId, AnswerStore, QuestionInstance, TokenId};
use qarank::layers::{
    max_pool, tanh_forward, EmbeddingGrad, EmbeddingMatrix, FilterBank, HiddenLayerParams,
};
use qarank::model::{Architecture, Init, Model, ModelConfig};
use qarank::similarity::{score, score_and_grad, MetricKind, MetricSpec};
use qarank::tensor::{Matrix, SharedTensor};
use qarank::train::{triple_loss, triple_loss_and_gradient, HyperParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-5;
pub const FD_TOLERANCE: f64 = 1e-4;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_vec(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-scale..scale)).collect()
}

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_vec(rows, cols, random_vec(rng, rows * cols, 1.0))
}

/// Windows listed directly from their definition: all contiguous runs,
/// then (augmented) each run of `width + 1` positions minus one interior
/// position.
pub fn oracle_windows(len: usize, width: usize, augmented: bool) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    if len < width {
        return out;
    }
    for start in 0..=(len - width) {
        out.push((0..width).map(|k| start + k).collect());
    }
    if augmented && width >= 2 {
        for start in 0..len.saturating_sub(width) {
            for skip in 1..width {
                let mut w = Vec::new();
                for k in 0..=width {
                    if k != skip {
                        w.push(start + k);
                    }
                }
                out.push(w);
            }
        }
    }
    out
}

/// Triple-loop convolution: `out[p][f] = Σ_k Σ_r F[f][k][r] · x[win_p[k]][r]`.
pub fn oracle_conv(x: &Matrix, filters: &[Vec<Vec<f64>>], windows: &[Vec<usize>]) -> Vec<Vec<f64>> {
    windows
        .iter()
        .map(|win| {
            filters
                .iter()
                .map(|f| {
                    let mut acc = 0.0;
                    for (k, &pos) in win.iter().enumerate() {
                        for (r, &w) in f[k].iter().enumerate() {
                            acc += w * x.get(pos, r);
                        }
                    }
                    acc
                })
                .collect()
        })
        .collect()
}

/// Worst relative error of the library convolution against the oracle over
/// `instances` random draws.
pub fn conv_oracle_worst(instances: usize, seed: u64) -> f64 {
    let mut r = rng(seed);
    let mut worst: f64 = 0.0;
    for i in 0..instances {
        let d = r.gen_range(1..=8);
        let width = r.gen_range(1..=4);
        let len = r.gen_range(width..=12);
        let n = r.gen_range(1..=6);
        let augmented = i % 2 == 1;
        let x = random_matrix(&mut r, len, d);
        let filters: Vec<Vec<Vec<f64>>> = (0..n)
            .map(|_| (0..width).map(|_| random_vec(&mut r, d, 1.0)).collect())
            .collect();
        let flat: Vec<f64> = filters.iter().flatten().flatten().copied().collect();
        let bank = FilterBank::new(
            SharedTensor::from_vec(n, width * d, flat),
            width,
            d,
            augmented,
        )
        .unwrap();
        let map = bank.forward(&x).unwrap();
        let windows = oracle_windows(len, width, augmented);
        if map.windows != windows {
            return f64::INFINITY;
        }
        let expected = oracle_conv(&x, &filters, &windows);
        for (p, row) in expected.iter().enumerate() {
            for (f, &e) in row.iter().enumerate() {
                let got = map.value(f, p);
                worst = worst.max((got - e).abs() / e.abs().max(1.0));
            }
        }
    }
    worst
}

/// `‖a − b‖ / max(‖a‖, ‖b‖, 1e-7)`.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    norm(&diff) / norm(a).max(norm(b)).max(1e-7)
}

/// Central difference from values at `p - h`, `p`, `p + h`, or `None` when
/// the one-sided slopes disagree by more than curvature can explain, i.e.
/// the step crosses a kink such as a max-pooling argmax switch.
fn central_difference(down: f64, center: f64, up: f64) -> Option<f64> {
    let central = (up - down) / (2.0 * FD_STEP);
    let right = (up - center) / FD_STEP;
    let left = (center - down) / FD_STEP;
    ((right - left).abs() <= MAX_CURVATURE * FD_STEP * central.abs().max(1.0)).then_some(central)
}

/// Bound on `|f''|` (relative to `max(1, |f'|)`) accepted as smooth.
const MAX_CURVATURE: f64 = 100.0;

/// Central differences of `f` with respect to every entry of `params`.
pub fn numeric_gradient(params: &SharedTensor, mut f: impl FnMut() -> f64) -> Option<Vec<f64>> {
    (0..params.len())
        .map(|i| {
            let p = params.get_flat(i);
            let center = f();
            params.set_flat(i, p + FD_STEP);
            let up = f();
            params.set_flat(i, p - FD_STEP);
            let down = f();
            params.set_flat(i, p);
            central_difference(down, center, up)
        })
        .collect()
}

fn numeric_vec_gradient(x: &[f64], mut f: impl FnMut(&[f64]) -> f64) -> Option<Vec<f64>> {
    let mut v = x.to_vec();
    (0..x.len())
        .map(|i| {
            let p = v[i];
            let center = f(&v);
            v[i] = p + FD_STEP;
            let up = f(&v);
            v[i] = p - FD_STEP;
            let down = f(&v);
            v[i] = p;
            central_difference(down, center, up)
        })
        .collect()
}

fn matrix_tensor(m: &Matrix) -> SharedTensor {
    SharedTensor::from_vec(m.rows(), m.cols(), m.as_slice().to_vec())
}

fn weighted_sum(m: &Matrix, c: &Matrix) -> f64 {
    m.as_slice()
        .iter()
        .zip(c.as_slice())
        .map(|(a, b)| a * b)
        .sum()
}

#[derive(Clone, Debug, Default)]
pub struct CheckSummary {
    pub instances: usize,
    /// Draws rejected because a finite-difference step crossed a kink.
    pub kinks: usize,
    pub failures: usize,
    pub worst: f64,
}

impl CheckSummary {
    fn record(&mut self, err: f64) {
        self.instances += 1;
        self.worst = self.worst.max(err);
        if err.is_nan() || err > FD_TOLERANCE {
            self.failures += 1;
        }
    }

    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

impl std::fmt::Display for CheckSummary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} instances, {} failures, worst relative error {:.2e}, {} kinked draws redrawn",
            self.instances, self.failures, self.worst, self.kinks
        )
    }
}

/// Hidden layer: input, weight and bias gradients of `Σ c ⊙ tanh(Wx + b)`.
pub fn check_hidden(instances: usize, seed: u64) -> CheckSummary {
    let mut r = rng(seed);
    let mut s = CheckSummary::default();
    while s.instances < instances {
        let (len, inp, out) = (r.gen_range(1..5), r.gen_range(1..6), r.gen_range(1..6));
        let layer = HiddenLayerParams::new(
            SharedTensor::from_vec(out, inp, random_vec(&mut r, out * inp, 1.0)),
            SharedTensor::from_vec(out, 1, random_vec(&mut r, out, 0.5)),
        )
        .unwrap();
        let x = random_matrix(&mut r, len, inp);
        let c = random_matrix(&mut r, len, out);
        let z = layer.forward(&x).unwrap();
        let (mut dw, mut db) = (vec![0.0; out * inp], vec![0.0; out]);
        let dx = layer.backward(&x, &z, &c, &mut dw, &mut db);
        let xt = matrix_tensor(&x);
        let loss = |l: &HiddenLayerParams, x: &Matrix| weighted_sum(&l.forward(x).unwrap(), &c);
        let Some(nw) = numeric_gradient(&layer.weight, || loss(&layer, &x)) else {
            s.kinks += 1;
            continue;
        };
        let Some(nb) = numeric_gradient(&layer.bias, || loss(&layer, &x)) else {
            s.kinks += 1;
            continue;
        };
        let Some(nx) = numeric_gradient(&xt, || loss(&layer, &xt.to_matrix())) else {
            s.kinks += 1;
            continue;
        };
        s.record(
            relative_error(&dw, &nw)
                .max(relative_error(&db, &nb))
                .max(relative_error(dx.as_slice(), &nx)),
        );
    }
    s
}

/// Convolution (both modes): input and filter gradients of `Σ c ⊙ conv(x)`.
pub fn check_conv(instances: usize, seed: u64) -> CheckSummary {
    let mut r = rng(seed);
    let mut s = CheckSummary::default();
    while s.instances < instances {
        let i = s.instances + s.kinks;
        let (d, width, n) = (r.gen_range(1..5), r.gen_range(1..4), r.gen_range(1..5));
        let len = r.gen_range(width..width + 5);
        let bank = FilterBank::new(
            SharedTensor::from_vec(n, width * d, random_vec(&mut r, n * width * d, 1.0)),
            width,
            d,
            i % 2 == 1,
        )
        .unwrap();
        let x = random_matrix(&mut r, len, d);
        let map = bank.forward(&x).unwrap();
        let c = random_matrix(&mut r, map.window_count(), n);
        let mut df = vec![0.0; bank.filters.len()];
        let dx = bank.backward(&x, &map, &c, &mut df);
        let xt = matrix_tensor(&x);
        let loss = |x: &Matrix| weighted_sum(&bank.forward(x).unwrap().values, &c);
        let Some(nf) = numeric_gradient(&bank.filters, || loss(&x)) else {
            s.kinks += 1;
            continue;
        };
        let Some(nx) = numeric_gradient(&xt, || loss(&xt.to_matrix())) else {
            s.kinks += 1;
            continue;
        };
        s.record(relative_error(&df, &nf).max(relative_error(dx.as_slice(), &nx)));
    }
    s
}

/// Max pooling followed by tanh: gradient of `c · tanh(maxpool(M))` in `M`.
pub fn check_pool_tanh(instances: usize, seed: u64) -> CheckSummary {
    let mut r = rng(seed);
    let mut s = CheckSummary::default();
    while s.instances < instances {
        let (p, n) = (r.gen_range(1..7), r.gen_range(1..5));
        let m = random_matrix(&mut r, p, n);
        let c = random_vec(&mut r, n, 1.0);
        let fmap = |m: Matrix| qarank::layers::FeatureMap {
            windows: (0..m.rows()).map(|i| vec![i]).collect(),
            values: m,
        };
        let pooled = max_pool(&fmap(m.clone())).unwrap();
        let t = tanh_forward(&pooled.values);
        let dp = qarank::layers::tanh_backward(&t, &c);
        let dm = pooled.backward(&dp, p);
        let mt = matrix_tensor(&m);
        let Some(nm) = numeric_gradient(&mt, || {
            let pooled = max_pool(&fmap(mt.to_matrix())).unwrap();
            tanh_forward(&pooled.values)
                .iter()
                .zip(&c)
                .map(|(a, b)| a * b)
                .sum()
        }) else {
            s.kinks += 1;
            continue;
        };
        s.record(relative_error(dm.as_slice(), &nm));
    }
    s
}

/// Embedding lookup with repeated tokens and zero padding.
pub fn check_embedding(instances: usize, seed: u64) -> CheckSummary {
    let mut r = rng(seed);
    let mut s = CheckSummary::default();
    while s.instances < instances {
        let (vocab, d) = (r.gen_range(1..6), r.gen_range(1..5));
        let emb = EmbeddingMatrix::new(SharedTensor::from_vec(
            vocab,
            d,
            random_vec(&mut r, vocab * d, 1.0),
        ));
        let tokens: Vec<TokenId> = (0..r.gen_range(1..6))
            .map(|_| r.gen_range(0..vocab as u32))
            .collect();
        let min_len = r.gen_range(1..8);
        let out = emb.embed(&tokens, min_len).unwrap();
        let c = random_matrix(&mut r, out.rows(), d);
        let mut g = EmbeddingGrad::new();
        emb.backward(&tokens, &c, &mut g);
        let mut dense = vec![0.0; vocab * d];
        for (t, row) in &g {
            dense[*t as usize * d..(*t as usize + 1) * d].copy_from_slice(row);
        }
        let Some(n) = numeric_gradient(&emb.table, || {
            weighted_sum(&emb.embed(&tokens, min_len).unwrap(), &c)
        }) else {
            s.kinks += 1;
            continue;
        };
        s.record(relative_error(&dense, &n));
    }
    s
}

/// Metrics with randomized hyperparameters, differentiated through the
/// normalization.
pub fn random_metric(r: &mut ChaCha8Rng, kind: MetricKind) -> MetricSpec {
    MetricSpec::new(kind)
        .with_gamma(r.gen_range(0.3..2.0))
        .with_c(r.gen_range(0.0..1.5))
        .with_degree(r.gen_range(1..4))
}

pub fn check_metric(kind: MetricKind, instances: usize, seed: u64) -> CheckSummary {
    let mut r = rng(seed);
    let mut s = CheckSummary::default();
    while s.instances < instances {
        let metric = random_metric(&mut r, kind);
        let n = r.gen_range(2..7);
        let x = random_vec(&mut r, n, 1.0);
        let y = random_vec(&mut r, n, 1.0);
        let (_, gx, gy) = score_and_grad(&metric, &x, &y).unwrap();
        let Some(nx) = numeric_vec_gradient(&x, |v| score(&metric, v, &y).unwrap()) else {
            s.kinks += 1;
            continue;
        };
        let Some(ny) = numeric_vec_gradient(&y, |v| score(&metric, &x, v).unwrap()) else {
            s.kinks += 1;
            continue;
        };
        s.record(relative_error(&gx, &nx).max(relative_error(&gy, &ny)));
    }
    s
}

/// The small model size used by the end-to-end checks: d=4, HL 5,
/// 3 filters, vocabulary 20.
pub fn small_config(arch: Architecture) -> ModelConfig {
    let mut c = ModelConfig::new(arch, 20).with_sizes(4, 5, 3);
    if c.post_cnn_hl_size.is_some() {
        c.post_cnn_hl_size = Some(4);
    }
    c
}

fn random_tokens(r: &mut ChaCha8Rng, vocab: u32) -> Vec<TokenId> {
    (0..r.gen_range(1..7))
        .map(|_| r.gen_range(0..vocab))
        .collect()
}

fn model_numeric_gradient(model: &Model, mut f: impl FnMut() -> f64) -> Option<Vec<f64>> {
    let mut out = Vec::with_capacity(model.param_count());
    for (_, t, _) in model.tensors() {
        out.extend(numeric_gradient(t, &mut f)?);
    }
    Some(out)
}

/// End-to-end score gradient with respect to every parameter.
pub fn check_architecture(arch: Architecture, instances: usize, seed: u64) -> CheckSummary {
    let mut r = rng(seed);
    let mut s = CheckSummary::default();
    while s.instances < instances {
        let i = s.instances + s.kinks;
        let mut config = small_config(arch);
        config.metric = random_metric(&mut r, MetricKind::ALL[i % MetricKind::ALL.len()]);
        config.augmented = config.cnn_layers == 1 && i % 3 == 0;
        let model = Model::build(config, Init::Uniform, r.gen()).unwrap();
        let q = random_tokens(&mut r, 20);
        let a = random_tokens(&mut r, 20);
        let (_, grads) = model.score_gradient(&q, &a).unwrap();
        let Some(numeric) = model_numeric_gradient(&model, || model.score(&q, &a).unwrap()) else {
            s.kinks += 1;
            continue;
        };
        s.record(relative_error(&grads.to_flat(&model), &numeric));
    }
    s
}

/// Gradient of the weighted hinge loss of a fixed triple, with a margin
/// large enough to keep every tap active.
pub fn check_triple_loss(arch: Architecture, instances: usize, seed: u64) -> CheckSummary {
    let mut r = rng(seed);
    let mut s = CheckSummary::default();
    while s.instances < instances {
        let model = Model::build(small_config(arch), Init::Uniform, r.gen()).unwrap();
        let taps = model.config().tap_count();
        let hp = HyperParams {
            margin: 5.0,
            supervision_weights: (0..taps).map(|_| r.gen_range(0.1..2.0)).collect(),
            ..HyperParams::default()
        };
        let (q, pos, neg) = (
            random_tokens(&mut r, 20),
            random_tokens(&mut r, 20),
            random_tokens(&mut r, 20),
        );
        let (_, grads) = triple_loss_and_gradient(&model, &q, &pos, &neg, &hp).unwrap();
        let Some(numeric) =
            model_numeric_gradient(&model, || triple_loss(&model, &q, &pos, &neg, &hp).unwrap())
        else {
            s.kinks += 1;
            continue;
        };
        s.record(relative_error(&grads.to_flat(&model), &numeric));
    }
    s
}

/// Scores every candidate independently with [`Model::score`] and sorts by
/// descending score, ties by smaller id.
pub fn brute_force_ranking(
    model: &Model,
    q: &QuestionInstance,
    store: &AnswerStore,
) -> (Vec<AnswerId>, Vec<f64>) {
    let mut scored: Vec<(AnswerId, f64)> = q
        .pool
        .as_ref()
        .unwrap()
        .iter()
        .map(|&id| (id, model.score(&q.tokens, store.get(id).unwrap()).unwrap()))
        .collect();
    scored.sort_by(|a, b| {
        if a.1 > b.1 {
            Ordering::Less
        } else if a.1 < b.1 {
            Ordering::Greater
        } else {
            a.0 .0.cmp(&b.0 .0)
        }
    });
    scored.into_iter().unzip()
}

/// A random model, store and pooled question. Some answers are exact
/// duplicates under different ids, so pools contain tied scores.
pub fn random_pool_case(seed: u64) -> (Model, AnswerStore, QuestionInstance) {
    let mut r = rng(seed);
    let arch = Architecture::ALL[r.gen_range(0..6)];
    let mut config = small_config(arch);
    let kind = MetricKind::ALL[r.gen_range(0..9)];
    config.metric = random_metric(&mut r, kind);
    let model = Model::build(config, Init::Uniform, r.gen()).unwrap();
    let mut store = AnswerStore::new();
    let n = r.gen_range(4..12u32);
    let mut texts: Vec<Vec<TokenId>> = Vec::new();
    for i in 0..n {
        let tokens = if i > 0 && r.gen_bool(0.3) {
            texts[r.gen_range(0..texts.len())].clone()
        } else {
            random_tokens(&mut r, 20)
        };
        texts.push(tokens.clone());
        store.insert(AnswerId(i * 3 + 1), tokens).unwrap();
    }
    let mut pool: Vec<AnswerId> = store.ids().to_vec();
    use rand::seq::SliceRandom;
    pool.shuffle(&mut r);
    pool.truncate(r.gen_range(2..=pool.len()));
    let truth = vec![pool[r.gen_range(0..pool.len())]];
    let q = QuestionInstance {
        qid: format!("q{seed}"),
        tokens: random_tokens(&mut r, 20),
        truth,
        pool: Some(pool),
    };
    (model, store, q)
}
