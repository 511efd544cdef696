//! Question/answer encoders assembled from the layer primitives.
//!
//! Shared layers are a single parameter object used by both sides, so a
//! gradient step through either side updates the same weights.

mod checkpoint;
mod config;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use checkpoint::{load, load_with_config, save, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use config::{Architecture, ModelConfig};

use crate::corpus::{TokenId, Vocabulary};
use crate::error::{LayerError, Result};
use crate::layers::{
    max_pool, pad_positions, tanh_backward, tanh_forward, truncate_positions, EmbeddingGrad,
    EmbeddingMatrix, FeatureMap, FilterBank, HiddenLayerParams, PooledVector, PretrainedVectors,
};
use crate::similarity;
use crate::tensor::{Matrix, SharedTensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Side {
    Question,
    Answer,
}

impl Side {
    fn index(self) -> usize {
        match self {
            Side::Question => 0,
            Side::Answer => 1,
        }
    }
}

/// Representation vectors, one per supervision tap. The last level is the
/// one used for scoring.
#[derive(Clone, Debug, PartialEq)]
pub struct RepStack {
    pub levels: Vec<Vec<f64>>,
}

impl RepStack {
    pub fn top(&self) -> &[f64] {
        self.levels
            .last()
            .expect("rep stack has at least one level")
    }
}

/// How to initialize embeddings.
pub enum Init<'a> {
    /// Uniform in `(-0.1, 0.1)`.
    Uniform,
    /// Uniform, then overwritten by pretrained vectors of known tokens.
    Pretrained(&'a PretrainedVectors, &'a Vocabulary),
}

/// Whether a parameter tensor is subject to L2 decay.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamRole {
    Embedding,
    Weight,
    Bias,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    config: ModelConfig,
    embeddings: EmbeddingMatrix,
    /// One entry if shared, else `[question, answer]`.
    hidden: Vec<HiddenLayerParams>,
    cnn: Vec<FilterBank>,
    /// Second (always shared) convolution of architectures V and VI.
    cnn2: Option<FilterBank>,
    post: Vec<HiddenLayerParams>,
}

const EMBEDDING_INIT_BOUND: f64 = 0.1;

impl Model {
    /// Allocates and initializes parameters. Deterministic given `seed`.
    pub fn build(config: ModelConfig, init: Init<'_>, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = &config;
        let embeddings = EmbeddingMatrix::uniform(
            &mut rng,
            c.vocab_size,
            c.embedding_dim,
            EMBEDDING_INIT_BOUND,
        );
        if let Init::Pretrained(vectors, vocab) = init {
            if vocab.len() != c.vocab_size {
                return Err(LayerError::ShapeMismatch(format!(
                    "vocabulary has {} tokens, model expects {}",
                    vocab.len(),
                    c.vocab_size
                ))
                .into());
            }
            let hits = vectors.apply(vocab, &embeddings)?;
            log::info!(
                "initialized {hits} of {} embeddings from pretrained vectors",
                c.vocab_size
            );
        }
        let sides = |shared: bool| if shared { 1 } else { 2 };
        let hidden = (0..sides(c.share_hl))
            .map(|_| HiddenLayerParams::init(&mut rng, c.embedding_dim, c.hl_size))
            .collect();
        let cnn = (0..sides(c.share_cnn))
            .map(|_| {
                FilterBank::init(
                    &mut rng,
                    c.filter_count,
                    c.hl_size,
                    c.filter_width,
                    c.augmented,
                )
            })
            .collect();
        let cnn2 = (c.cnn_layers == 2).then(|| {
            FilterBank::init(
                &mut rng,
                c.filter_count,
                c.filter_count,
                c.filter_width,
                false,
            )
        });
        let post = match c.post_cnn_hl_size {
            Some(size) => (0..sides(c.share_post_hl))
                .map(|_| HiddenLayerParams::init(&mut rng, c.filter_count, size))
                .collect(),
            None => Vec::new(),
        };
        Ok(Model {
            config,
            embeddings,
            hidden,
            cnn,
            cnn2,
            post,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn embeddings(&self) -> &EmbeddingMatrix {
        &self.embeddings
    }

    pub fn hidden_layer(&self, side: Side) -> &HiddenLayerParams {
        &self.hidden[side.index().min(self.hidden.len() - 1)]
    }

    pub fn filter_bank(&self, side: Side) -> &FilterBank {
        &self.cnn[side.index().min(self.cnn.len() - 1)]
    }

    pub fn second_filter_bank(&self) -> Option<&FilterBank> {
        self.cnn2.as_ref()
    }

    pub fn post_layer(&self, side: Side) -> Option<&HiddenLayerParams> {
        if self.post.is_empty() {
            None
        } else {
            Some(&self.post[side.index().min(self.post.len() - 1)])
        }
    }

    /// Distinct hidden-layer and filter-bank objects.
    pub fn hidden_layers(&self) -> &[HiddenLayerParams] {
        &self.hidden
    }

    pub fn filter_banks(&self) -> &[FilterBank] {
        &self.cnn
    }

    pub fn post_layers(&self) -> &[HiddenLayerParams] {
        &self.post
    }

    /// Every distinct parameter tensor with a stable name, shared objects
    /// listed once.
    pub fn tensors(&self) -> Vec<(String, &SharedTensor, ParamRole)> {
        let side_name = |count: usize, i: usize| {
            if count == 1 {
                "qa"
            } else if i == 0 {
                "q"
            } else {
                "a"
            }
        };
        let mut out = vec![(
            "embeddings".to_string(),
            &self.embeddings.table,
            ParamRole::Embedding,
        )];
        for (i, h) in self.hidden.iter().enumerate() {
            let s = side_name(self.hidden.len(), i);
            out.push((format!("hl.{s}.weight"), &h.weight, ParamRole::Weight));
            out.push((format!("hl.{s}.bias"), &h.bias, ParamRole::Bias));
        }
        for (i, f) in self.cnn.iter().enumerate() {
            let s = side_name(self.cnn.len(), i);
            out.push((format!("cnn1.{s}.filters"), &f.filters, ParamRole::Weight));
        }
        if let Some(f) = &self.cnn2 {
            out.push(("cnn2.qa.filters".to_string(), &f.filters, ParamRole::Weight));
        }
        for (i, h) in self.post.iter().enumerate() {
            let s = side_name(self.post.len(), i);
            out.push((format!("post.{s}.weight"), &h.weight, ParamRole::Weight));
            out.push((format!("post.{s}.bias"), &h.bias, ParamRole::Bias));
        }
        out
    }

    /// Number of trainable scalars, counting shared objects once.
    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|(_, t, _)| t.len()).sum()
    }

    /// Encodes one token sequence, returning every supervision tap.
    pub fn forward(&self, tokens: &[TokenId], side: Side) -> Result<RepStack> {
        Ok(self.trace(tokens, side)?.reps)
    }

    /// Forward pass that keeps every activation needed by [`Model::backward`].
    pub fn trace(&self, tokens: &[TokenId], side: Side) -> Result<Trace> {
        let c = &self.config;
        let width = c.filter_width;
        let embedded = self.embeddings.embed(tokens, width)?;
        let hidden_out = self.hidden_layer(side).forward(&embedded)?;
        let map1 = self.filter_bank(side).forward(&hidden_out)?;

        let mut taps = Vec::with_capacity(c.tap_count());
        let second = match &self.cnn2 {
            Some(bank) => {
                if c.layerwise_supervision {
                    taps.push(Tap::new(&map1, None)?);
                }
                let input = pad_positions(&map1.values, width);
                let map2 = bank.forward(&input)?;
                Some((input, map2))
            }
            None => None,
        };
        let last_map = second.as_ref().map_or(&map1, |(_, m)| m);
        taps.push(Tap::new(last_map, self.post_layer(side))?);

        let reps = RepStack {
            levels: taps.iter().map(|t| t.output().to_vec()).collect(),
        };
        Ok(Trace {
            side,
            tokens: tokens.to_vec(),
            embedded,
            hidden_out,
            map1,
            second,
            taps,
            reps,
        })
    }

    /// Similarity of the top-level question and answer representations.
    pub fn score(&self, q_tokens: &[TokenId], a_tokens: &[TokenId]) -> Result<f64> {
        let q = self.forward(q_tokens, Side::Question)?;
        let a = self.forward(a_tokens, Side::Answer)?;
        self.score_reps(q.top(), a.top())
    }

    pub fn score_reps(&self, q: &[f64], a: &[f64]) -> Result<f64> {
        Ok(similarity::score(&self.config.metric, q, a)?)
    }

    /// Backpropagates per-level representation gradients through `trace`
    /// and accumulates parameter gradients into `grads`.
    pub fn backward(
        &self,
        trace: &Trace,
        dlevels: &[Vec<f64>],
        grads: &mut Gradients,
    ) -> Result<()> {
        if dlevels.len() != trace.taps.len() {
            return Err(LayerError::ShapeMismatch(format!(
                "{} level gradients for {} taps",
                dlevels.len(),
                trace.taps.len()
            ))
            .into());
        }
        let side = trace.side;
        let si = side.index();
        let last = trace.taps.len() - 1;

        // Final tap: [post-HL] <- tanh <- pool.
        let top = &trace.taps[last];
        let mut d_act = dlevels[last].clone();
        if let (Some(post), Some(post_out)) = (self.post_layer(side), &top.post_out) {
            let pi = si.min(self.post.len() - 1);
            let (gw, gb) = &mut grads.post[pi];
            let x = Matrix::from_vec(1, top.activated.len(), top.activated.clone());
            let dx = post.backward(
                &x,
                post_out,
                &Matrix::from_vec(1, d_act.len(), d_act),
                gw,
                gb,
            );
            d_act = dx.into_vec();
        }
        let d_pooled = tanh_backward(&top.activated, &d_act);

        let dmap1 = match &trace.second {
            Some((input2, map2)) => {
                let dmap2 = top.pooled.backward(&d_pooled, map2.window_count());
                let bank = self.cnn2.as_ref().expect("second layer present in trace");
                let gf = grads.cnn2.as_mut().expect("gradient slot for second layer");
                let dinput = bank.backward(input2, map2, &dmap2, gf);
                let mut dmap1 = truncate_positions(&dinput, trace.map1.window_count());
                if last > 0 {
                    let tap = &trace.taps[0];
                    let dp = tanh_backward(&tap.activated, &dlevels[0]);
                    let extra = tap.pooled.backward(&dp, trace.map1.window_count());
                    for (a, b) in dmap1.as_mut_slice().iter_mut().zip(extra.as_slice()) {
                        *a += b;
                    }
                }
                dmap1
            }
            None => top.pooled.backward(&d_pooled, trace.map1.window_count()),
        };

        let ci = si.min(self.cnn.len() - 1);
        let dhidden =
            self.cnn[ci].backward(&trace.hidden_out, &trace.map1, &dmap1, &mut grads.cnn[ci]);
        let hi = si.min(self.hidden.len() - 1);
        let (gw, gb) = &mut grads.hidden[hi];
        let dembedded =
            self.hidden[hi].backward(&trace.embedded, &trace.hidden_out, &dhidden, gw, gb);
        self.embeddings
            .backward(&trace.tokens, &dembedded, &mut grads.embeddings);
        Ok(())
    }

    /// Score together with its gradient with respect to every parameter.
    pub fn score_gradient(
        &self,
        q_tokens: &[TokenId],
        a_tokens: &[TokenId],
    ) -> Result<(f64, Gradients)> {
        let qt = self.trace(q_tokens, Side::Question)?;
        let at = self.trace(a_tokens, Side::Answer)?;
        let (s, gq, ga) =
            similarity::score_and_grad(&self.config.metric, qt.reps.top(), at.reps.top())?;
        let mut grads = Gradients::zeros(self);
        let mut dq = zero_levels(&qt.reps);
        let mut da = zero_levels(&at.reps);
        *dq.last_mut().unwrap() = gq;
        *da.last_mut().unwrap() = ga;
        self.backward(&qt, &dq, &mut grads)?;
        self.backward(&at, &da, &mut grads)?;
        Ok((s, grads))
    }

    /// Copies every parameter value from `other`, which must have the same
    /// configuration.
    pub fn copy_params_from(&self, other: &Model) -> Result<()> {
        if self.config != other.config {
            return Err(LayerError::ShapeMismatch("configurations differ".into()).into());
        }
        for ((_, dst, _), (_, src, _)) in self.tensors().iter().zip(other.tensors()) {
            dst.copy_from(&src.to_vec());
        }
        Ok(())
    }
}

pub(crate) fn zero_levels(reps: &RepStack) -> Vec<Vec<f64>> {
    reps.levels.iter().map(|l| vec![0.0; l.len()]).collect()
}

/// Pool, tanh and optional post-CNN hidden layer on top of a feature map.
#[derive(Clone, Debug)]
pub struct Tap {
    pooled: PooledVector,
    activated: Vec<f64>,
    post_out: Option<Matrix>,
}

impl Tap {
    fn new(map: &FeatureMap, post: Option<&HiddenLayerParams>) -> Result<Self> {
        let pooled = max_pool(map)?;
        let activated = tanh_forward(&pooled.values);
        let post_out = match post {
            Some(layer) => {
                Some(layer.forward(&Matrix::from_vec(1, activated.len(), activated.clone()))?)
            }
            None => None,
        };
        Ok(Tap {
            pooled,
            activated,
            post_out,
        })
    }

    fn output(&self) -> &[f64] {
        match &self.post_out {
            Some(m) => m.as_slice(),
            None => &self.activated,
        }
    }
}

/// Cached activations of one forward pass.
#[derive(Clone, Debug)]
pub struct Trace {
    side: Side,
    tokens: Vec<TokenId>,
    embedded: Matrix,
    hidden_out: Matrix,
    map1: FeatureMap,
    second: Option<(Matrix, FeatureMap)>,
    taps: Vec<Tap>,
    pub reps: RepStack,
}

/// Gradients for every parameter of a [`Model`], mirroring its layout.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub embeddings: EmbeddingGrad,
    pub hidden: Vec<(Vec<f64>, Vec<f64>)>,
    pub cnn: Vec<Vec<f64>>,
    pub cnn2: Option<Vec<f64>>,
    pub post: Vec<(Vec<f64>, Vec<f64>)>,
}

impl Gradients {
    pub fn zeros(model: &Model) -> Self {
        let layer = |h: &HiddenLayerParams| (vec![0.0; h.weight.len()], vec![0.0; h.bias.len()]);
        Gradients {
            embeddings: EmbeddingGrad::new(),
            hidden: model.hidden.iter().map(layer).collect(),
            cnn: model
                .cnn
                .iter()
                .map(|f| vec![0.0; f.filters.len()])
                .collect(),
            cnn2: model.cnn2.as_ref().map(|f| vec![0.0; f.filters.len()]),
            post: model.post.iter().map(layer).collect(),
        }
    }

    /// Dense buffers in the order of [`Model::tensors`], skipping the
    /// embedding table.
    pub fn dense(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::new();
        for (w, b) in &self.hidden {
            out.push(w);
            out.push(b);
        }
        for f in &self.cnn {
            out.push(f);
        }
        if let Some(f) = &self.cnn2 {
            out.push(f);
        }
        for (w, b) in &self.post {
            out.push(w);
            out.push(b);
        }
        out
    }

    /// Flattens to a vector over all parameters in [`Model::tensors`] order,
    /// with the embedding gradient expanded to the full table.
    pub fn to_flat(&self, model: &Model) -> Vec<f64> {
        let emb = model.embeddings();
        let mut out = vec![0.0; emb.table.len()];
        for (&t, row) in &self.embeddings {
            let base = t as usize * emb.dim();
            out[base..base + emb.dim()].copy_from_slice(row);
        }
        for d in self.dense() {
            out.extend_from_slice(d);
        }
        out
    }

    pub fn scale(&mut self, factor: f64) {
        let scale = |v: &mut Vec<f64>| v.iter_mut().for_each(|x| *x *= factor);
        self.embeddings.values_mut().for_each(scale);
        for (w, b) in self.hidden.iter_mut().chain(self.post.iter_mut()) {
            scale(w);
            scale(b);
        }
        self.cnn.iter_mut().for_each(scale);
        if let Some(f) = self.cnn2.as_mut() {
            scale(f);
        }
    }
}
