//! Layered configuration: built-in defaults, then the config file, then
//! `--set` overrides.

use std::path::{Path, PathBuf};

use qarank::config::KeyValues;
use qarank::corpus::{Corpus, OovPolicy};
use qarank::error::ConfigError;
use qarank::model::{Architecture, ModelConfig};
use qarank::train::HyperParams;

use crate::failure::Failure;

const DATA_KEYS: [&str; 3] = ["corpus", "oov", "pretrained"];
const EVAL_KEYS: [&str; 2] = ["split", "each_epoch"];
const PROTOCOL_KEYS: [&str; 1] = ["runs"];

/// Everything a command needs, resolved from the layered key-values.
pub struct Settings {
    pub kv: KeyValues,
}

impl Settings {
    pub fn load(config: Option<&Path>, overrides: &[String]) -> Result<Self, Failure> {
        let mut kv = match config {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| {
                    Failure::Usage(format!("cannot read config {}: {e}", path.display()))
                })?;
                KeyValues::parse(&text)
                    .map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?
            }
            None => KeyValues::new(),
        };
        for o in overrides {
            let (k, v) = KeyValues::parse_override(o)?;
            kv.set(&k, &v);
        }
        check_keys(&kv)?;
        Ok(Settings { kv })
    }

    pub fn set(&mut self, key: &str, value: &str) {
        self.kv.set(key, value);
    }

    pub fn corpus_dir(&self) -> Result<PathBuf, Failure> {
        self.kv
            .get("data.corpus")
            .map(PathBuf::from)
            .ok_or_else(|| Failure::Usage("no corpus given (use --corpus or data.corpus)".into()))
    }

    pub fn oov(&self) -> Result<OovPolicy, Failure> {
        match self.kv.get("data.oov").unwrap_or("unk") {
            "unk" => Ok(OovPolicy::MapToUnk),
            "error" => Ok(OovPolicy::Error),
            v => Err(invalid("data.oov", v)),
        }
    }

    pub fn pretrained(&self) -> Option<PathBuf> {
        self.kv.get("data.pretrained").map(PathBuf::from)
    }

    pub fn load_corpus(&self) -> Result<Corpus, Failure> {
        Ok(Corpus::load_canonical(&self.corpus_dir()?, self.oov()?)?)
    }

    /// Model configuration sized to `vocab_size`; architecture II unless set.
    pub fn model_config(&self, vocab_size: usize) -> Result<ModelConfig, Failure> {
        if let Some(v) = self.kv.parsed::<usize>("model.vocab_size")? {
            if v != vocab_size {
                return Err(Failure::Usage(format!(
                    "model.vocab_size = {v} but the corpus vocabulary has {vocab_size} entries"
                )));
            }
        }
        let config =
            ModelConfig::from_kv(&self.kv, ModelConfig::new(Architecture::II, vocab_size))?;
        config.validate()?;
        Ok(config)
    }

    pub fn hyper_params(&self) -> Result<HyperParams, Failure> {
        let hp = HyperParams::from_kv(&self.kv, HyperParams::default())?;
        hp.validate()?;
        Ok(hp)
    }

    pub fn eval_split(&self) -> String {
        self.kv.get("eval.split").unwrap_or("dev").to_string()
    }

    /// Whether training evaluates the dev split after every epoch.
    pub fn eval_each_epoch(&self) -> Result<bool, Failure> {
        Ok(self.kv.parsed::<bool>("eval.each_epoch")?.unwrap_or(true))
    }

    pub fn protocol_runs(&self) -> Result<usize, Failure> {
        let runs = self.kv.parsed::<usize>("protocol.runs")?.unwrap_or(1);
        if runs == 0 {
            return Err(invalid("protocol.runs", "0"));
        }
        Ok(runs)
    }

    /// The effective configuration: the given model and training settings
    /// written over the user's keys.
    pub fn effective(&self, model: Option<&ModelConfig>, hp: Option<&HyperParams>) -> KeyValues {
        let mut kv = self.kv.clone();
        if let Some(m) = model {
            m.write_kv(&mut kv);
        }
        if let Some(h) = hp {
            h.write_kv(&mut kv);
        }
        kv
    }
}

fn invalid(key: &str, value: &str) -> Failure {
    ConfigError::InvalidValue {
        key: key.into(),
        value: value.into(),
    }
    .into()
}

fn check_keys(kv: &KeyValues) -> Result<(), Failure> {
    for key in kv.keys() {
        let known = match key.split_once('.') {
            Some(("model", k)) => ModelConfig::KEYS.contains(&k),
            Some(("train", k)) => HyperParams::KEYS.contains(&k),
            Some(("data", k)) => DATA_KEYS.contains(&k),
            Some(("eval", k)) => EVAL_KEYS.contains(&k),
            Some(("protocol", k)) => PROTOCOL_KEYS.contains(&k),
            _ => false,
        };
        if !known {
            return Err(ConfigError::UnknownKey(key.to_string()).into());
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_win_over_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.conf");
        std::fs::write(&path, "[train]\nepochs = 3\nseed = 9\n").unwrap();
        let s = Settings::load(Some(&path), &["train.epochs=5".into()]).unwrap();
        let hp = s.hyper_params().unwrap();
        assert_eq!((hp.epochs, hp.seed), (5, 9));
    }

    #[test]
    fn unknown_keys_are_usage_errors() {
        let err = Settings::load(None, &["train.epoch=5".into()])
            .err()
            .unwrap();
        assert!(matches!(err, Failure::Usage(_)));
        assert!(Settings::load(None, &["nonsense".into()]).is_err());
    }

    #[test]
    fn vocab_size_follows_the_corpus() {
        let s = Settings::load(None, &["model.architecture=IV".into()]).unwrap();
        let c = s.model_config(42).unwrap();
        assert_eq!((c.architecture, c.vocab_size), (Architecture::IV, 42));
        let s = Settings::load(None, &["model.vocab_size=7".into()]).unwrap();
        assert!(s.model_config(42).is_err());
    }

    #[test]
    fn effective_config_lists_every_setting() {
        let s = Settings::load(None, &["data.corpus=/tmp/c".into()]).unwrap();
        let c = s.model_config(10).unwrap();
        let hp = s.hyper_params().unwrap();
        let kv = s.effective(Some(&c), Some(&hp));
        assert_eq!(kv.get("data.corpus"), Some("/tmp/c"));
        assert_eq!(kv.get("model.architecture"), Some("II"));
        assert_eq!(kv.get("train.epochs"), Some("10"));
    }
}
