//! Verb implementations. Machine-readable output goes to files under
//! `--out`; stdout carries short summaries, stderr carries progress.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use qarank::config::KeyValues;
use qarank::corpus::released::{self, is_released_layout, load_released, reference_mismatches};
use qarank::corpus::{
    corpus_stats, load_split, Corpus, CorpusStats, SplitKind, ANSWERS_FILE, VOCAB_FILE,
};
use qarank::error::CorpusError;
use qarank::eval::{rank_pool_cached, run_protocol, top1_accuracy, RepCache};
use qarank::layers::PretrainedVectors;
use qarank::model::{self, Init, Model};
use qarank::train::{self, DevSet, TrainHistory};

use crate::failure::Failure;
use crate::settings::Settings;
use crate::{Command, Common};

pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const CONFIG_FILE: &str = "config.conf";
pub const HISTORY_FILE: &str = "history.tsv";
pub const PROTOCOL_FILE: &str = "protocol.tsv";
pub const PREDICT_FILE: &str = "predict.tsv";

pub fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Prepare { input, common } => prepare(&input, &common),
        Command::Stats { common } => stats(&common),
        Command::Train { common } => train_model(&common),
        Command::Eval {
            checkpoint,
            split,
            common,
        } => eval(&checkpoint, split, &common),
        Command::Predict {
            checkpoint,
            split,
            questions,
            text,
            common,
        } => predict(&checkpoint, split, questions.as_deref(), text, &common),
        Command::Protocol { runs, common } => protocol(runs, &common),
    }
}

fn settings(common: &Common) -> Result<Settings, Failure> {
    let mut s = Settings::load(common.config.as_deref(), &common.overrides)?;
    if let Some(dir) = &common.corpus {
        s.set("data.corpus", &dir.to_string_lossy());
    }
    Ok(s)
}

fn out_dir(common: &Common, verb: &str) -> Result<PathBuf, Failure> {
    let dir = common
        .out
        .clone()
        .ok_or_else(|| Failure::Usage(format!("{verb} needs --out")))?;
    create_dir(&dir)?;
    Ok(dir)
}

fn create_dir(dir: &Path) -> Result<(), Failure> {
    std::fs::create_dir_all(dir)
        .map_err(|e| Failure::Runtime(format!("cannot create {}: {e}", dir.display())))
}

fn write(path: &Path, contents: &str) -> Result<(), Failure> {
    std::fs::write(path, contents)
        .map_err(|e| Failure::Runtime(format!("cannot write {}: {e}", path.display())))
}

/// The effective configuration as `# key = value` comment lines.
fn echo(kv: &KeyValues) -> String {
    let mut out = String::new();
    for key in kv.keys() {
        let _ = writeln!(out, "# {key} = {}", kv.get(key).unwrap_or(""));
    }
    out
}

fn flat(kv: &KeyValues) -> String {
    kv.keys()
        .map(|k| format!("{k} = {}\n", kv.get(k).unwrap_or("")))
        .collect()
}

fn prepare(input: &Path, common: &Common) -> Result<(), Failure> {
    let s = settings(common)?;
    let oov = s.oov()?;
    let out = out_dir(common, "prepare")?;
    let released_like = [released::VOCABULARY, released::ANSWERS, released::TRAIN]
        .iter()
        .any(|f| input.join(f).is_file());
    let canonical_like = [VOCAB_FILE, ANSWERS_FILE]
        .iter()
        .any(|f| input.join(f).is_file());
    let corpus = if is_released_layout(input) || (released_like && !canonical_like) {
        let required = [released::VOCABULARY, released::ANSWERS, released::TRAIN];
        if let Some(missing) = required
            .iter()
            .map(|f| input.join(f))
            .find(|p| !p.is_file())
        {
            return Err(CorpusError::Io {
                path: missing,
                source: std::io::ErrorKind::NotFound.into(),
            }
            .into());
        }
        load_released(input)?
    } else if canonical_like {
        Corpus::load_canonical(input, oov)?
    } else {
        return Err(CorpusError::UnrecognizedLayout(input.to_path_buf()).into());
    };
    corpus.write_canonical(&out)?;
    let stats = corpus_stats(&corpus);
    print!("{}{stats}", echo(&s.kv));
    if released_like && !canonical_like {
        print_reference_check(&stats);
    }
    Ok(())
}

fn print_reference_check(stats: &CorpusStats) {
    let mismatches = reference_mismatches(stats);
    if mismatches.is_empty() {
        println!("reference: match");
    }
    for m in mismatches {
        println!("reference mismatch: {m}");
    }
}

fn stats(common: &Common) -> Result<(), Failure> {
    let s = settings(common)?;
    let corpus = s.load_corpus()?;
    let report = format!("{}{}", echo(&s.kv), corpus_stats(&corpus));
    print!("{report}");
    if common.out.is_some() {
        write(&out_dir(common, "stats")?.join("stats.txt"), &report)?;
    }
    Ok(())
}

fn history_table(kv: &KeyValues, history: &TrainHistory) -> String {
    let mut out = echo(kv);
    out.push_str("epoch\tmean_loss\tupdate_rate\tdev_top1\n");
    for e in &history.epochs {
        let dev = e
            .dev_top1
            .map_or_else(|| "-".to_string(), |d| d.to_string());
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{dev}",
            e.epoch, e.mean_loss, e.update_rate
        );
    }
    out
}

fn train_model(common: &Common) -> Result<(), Failure> {
    let s = settings(common)?;
    let hp = s.hyper_params()?;
    let each_epoch = s.eval_each_epoch()?;
    let out = out_dir(common, "train")?;
    let corpus = s.load_corpus()?;
    let config = s.model_config(corpus.vocab.len())?;
    let train_split = corpus
        .split("train")
        .ok_or_else(|| Failure::Data("corpus has no train split".into()))?;
    let pretrained = s
        .pretrained()
        .map(|p| PretrainedVectors::load(&p))
        .transpose()?;
    let init = match &pretrained {
        Some(vectors) => Init::Pretrained(vectors, &corpus.vocab),
        None => Init::Uniform,
    };
    let model = Model::build(config.clone(), init, hp.seed)?;
    let dev = corpus
        .splits
        .iter()
        .find(|split| each_epoch && split.kind == SplitKind::Dev)
        .map(|split| DevSet {
            name: &split.name,
            questions: &split.questions,
        });
    let history = train::train(&model, &train_split.questions, dev, &corpus.answers, &hp)?;

    let effective = s.effective(Some(&config), Some(&hp));
    let checkpoint = out.join(CHECKPOINT_FILE);
    model::save(&model, &checkpoint)?;
    write(&out.join(CONFIG_FILE), &effective.to_string())?;
    write(
        &out.join(HISTORY_FILE),
        &history_table(&effective, &history),
    )?;
    println!("checkpoint {}", checkpoint.display());
    if let Some(dev) = history.final_dev() {
        println!("dev top1={dev}");
    }
    Ok(())
}

fn load_model(path: &Path, corpus: &Corpus) -> Result<Model, Failure> {
    let model = model::load(path)?;
    if model.config().vocab_size != corpus.vocab.len() {
        return Err(Failure::Data(format!(
            "checkpoint {} expects a vocabulary of {} entries, corpus has {}",
            path.display(),
            model.config().vocab_size,
            corpus.vocab.len()
        )));
    }
    Ok(model)
}

fn eval(checkpoint: &Path, split: Option<String>, common: &Common) -> Result<(), Failure> {
    let mut s = settings(common)?;
    let name = split.unwrap_or_else(|| s.eval_split());
    s.set("eval.split", &name);
    let corpus = s.load_corpus()?;
    let model = load_model(checkpoint, &corpus)?;
    let split = corpus
        .split(&name)
        .ok_or_else(|| Failure::Data(format!("corpus has no split {name:?}")))?;
    let mut report = top1_accuracy(&model, &name, &split.questions, &corpus.answers)?;
    report.config = flat(&s.effective(Some(model.config()), None));
    report.checkpoint = Some(checkpoint.to_path_buf());
    if common.out.is_some() {
        write(
            &out_dir(common, "eval")?.join(format!("eval-{name}.tsv")),
            &report.to_string(),
        )?;
    }
    println!("{}", report.summary());
    Ok(())
}

fn predict(
    checkpoint: &Path,
    split: Option<String>,
    questions: Option<&Path>,
    text: bool,
    common: &Common,
) -> Result<(), Failure> {
    let mut s = settings(common)?;
    let corpus = s.load_corpus()?;
    let model = load_model(checkpoint, &corpus)?;
    let loaded;
    let questions = match questions {
        Some(path) => {
            s.set("predict.questions", &path.to_string_lossy());
            loaded = load_split(
                path,
                SplitKind::Test,
                &corpus.vocab,
                &corpus.answers,
                s.oov()?,
            )?;
            &loaded
        }
        None => {
            let name = split.unwrap_or_else(|| s.eval_split());
            s.set("eval.split", &name);
            &corpus
                .split(&name)
                .ok_or_else(|| Failure::Data(format!("corpus has no split {name:?}")))?
                .questions
        }
    };
    let mut out = echo(&s.effective(Some(model.config()), None));
    out.push_str(if text {
        "qid\tanswer\tscore\ttext\n"
    } else {
        "qid\tanswer\tscore\n"
    });
    let mut cache = RepCache::new();
    for q in questions {
        let ranked = rank_pool_cached(&model, q, &corpus.answers, &mut cache)?;
        let Some((id, score)) = ranked.top() else {
            continue;
        };
        let _ = write!(out, "{}\t{id}\t{score}", q.qid);
        if text {
            let words: Vec<&str> = corpus
                .answers
                .get(id)
                .unwrap_or_default()
                .iter()
                .map(|&t| corpus.vocab.token(t).unwrap_or("?"))
                .collect();
            let _ = write!(out, "\t{}", words.join(" "));
        }
        out.push('\n');
    }
    print!("{out}");
    if common.out.is_some() {
        write(&out_dir(common, "predict")?.join(PREDICT_FILE), &out)?;
    }
    Ok(())
}

fn protocol(runs: Option<usize>, common: &Common) -> Result<(), Failure> {
    let mut s = settings(common)?;
    if let Some(n) = runs {
        s.set("protocol.runs", &n.to_string());
    }
    let n_runs = s.protocol_runs()?;
    let hp = s.hyper_params()?;
    let out = out_dir(common, "protocol")?;
    let corpus = s.load_corpus()?;
    let config = s.model_config(corpus.vocab.len())?;
    let result = run_protocol(&corpus, &config, &hp, n_runs, Some(&out))?;
    let effective = s.effective(Some(&config), Some(&hp));
    write(&out.join(CONFIG_FILE), &effective.to_string())?;
    write(
        &out.join(PROTOCOL_FILE),
        &format!("{}{result}", echo(&effective)),
    )?;
    print!("{result}");
    Ok(())
}
