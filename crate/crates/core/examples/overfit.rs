//! Trains architecture II on a small synthetic corpus and reports train
//! top-1 after every epoch.
//!
//! Usage: `cargo run --release --example overfit [epochs] [workers]`

use qarank::corpus::synthetic::{generate, SyntheticSpec};
use qarank::model::{Architecture, Init, Model, ModelConfig};
use qarank::train::{train_with, DevSet, HyperParams};

fn main() -> qarank::Result<()> {
    let mut args = std::env::args().skip(1);
    let epochs = args.next().and_then(|a| a.parse().ok()).unwrap_or(30);
    let workers = args.next().and_then(|a| a.parse().ok()).unwrap_or(1);
    let corpus = generate(&SyntheticSpec::default())?;
    let train = &corpus
        .split("train")
        .expect("synthetic train split")
        .questions;
    let config = ModelConfig::new(Architecture::II, corpus.vocab.len()).with_sizes(100, 200, 500);
    let model = Model::build(config, Init::Uniform, 1)?;
    let hp = HyperParams {
        epochs,
        workers,
        ..HyperParams::default()
    };
    let dev = DevSet {
        name: "train",
        questions: train,
    };
    train_with(&model, train, Some(dev), &corpus.answers, &hp, |e| {
        println!("{e}")
    })?;
    Ok(())
}
