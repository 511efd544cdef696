use std::fmt;
use std::str::FromStr;

use crate::config::KeyValues;
use crate::error::ConfigError;
use crate::similarity::MetricSpec;

/// The six network layouts.
///
/// | | hidden layer | CNN | post-CNN hidden layer | CNN layers |
/// |---|---|---|---|---|
/// | I | per side | per side | - | 1 |
/// | II | shared | shared | - | 1 |
/// | III | shared | shared | per side | 1 |
/// | IV | shared | shared | shared | 1 |
/// | V | shared | shared | - | 2 |
/// | VI | shared | shared | - | 2, pooled tap after each |
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Architecture {
    I,
    II,
    III,
    IV,
    V,
    VI,
}

impl Architecture {
    pub const ALL: [Architecture; 6] = [
        Architecture::I,
        Architecture::II,
        Architecture::III,
        Architecture::IV,
        Architecture::V,
        Architecture::VI,
    ];
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Architecture::I => "I",
            Architecture::II => "II",
            Architecture::III => "III",
            Architecture::IV => "IV",
            Architecture::V => "V",
            Architecture::VI => "VI",
        })
    }
}

impl FromStr for Architecture {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Architecture::ALL
            .into_iter()
            .find(|a| a.to_string().eq_ignore_ascii_case(s.trim()))
            .or(match s.trim() {
                "1" => Some(Architecture::I),
                "2" => Some(Architecture::II),
                "3" => Some(Architecture::III),
                "4" => Some(Architecture::IV),
                "5" => Some(Architecture::V),
                "6" => Some(Architecture::VI),
                _ => None,
            })
            .ok_or_else(|| ConfigError::InvalidValue {
                key: "model.architecture".into(),
                value: s.to_string(),
            })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub architecture: Architecture,
    pub vocab_size: usize,
    pub embedding_dim: usize,
    pub hl_size: usize,
    pub post_cnn_hl_size: Option<usize>,
    pub filter_count: usize,
    pub filter_width: usize,
    pub cnn_layers: usize,
    pub augmented: bool,
    pub share_hl: bool,
    pub share_cnn: bool,
    pub share_post_hl: bool,
    pub layerwise_supervision: bool,
    pub metric: MetricSpec,
}

impl ModelConfig {
    /// Configuration with the canonical flags of `architecture` and default
    /// sizes (embedding 100, hidden 200, 1000 filters of width 2; the
    /// post-CNN hidden layer of III/IV gets 1000 units).
    pub fn new(architecture: Architecture, vocab_size: usize) -> Self {
        let mut cfg = ModelConfig {
            architecture,
            vocab_size,
            embedding_dim: 100,
            hl_size: 200,
            post_cnn_hl_size: None,
            filter_count: 1000,
            filter_width: 2,
            cnn_layers: 1,
            augmented: false,
            share_hl: true,
            share_cnn: true,
            share_post_hl: false,
            layerwise_supervision: false,
            metric: MetricSpec::default(),
        };
        cfg.apply_architecture(architecture);
        cfg
    }

    /// Resets the sharing and depth flags to the canonical values of
    /// `architecture`. Layer sizes are kept.
    pub fn apply_architecture(&mut self, architecture: Architecture) {
        use Architecture::*;
        self.architecture = architecture;
        self.share_hl = architecture != I;
        self.share_cnn = architecture != I;
        self.cnn_layers = if matches!(architecture, V | VI) { 2 } else { 1 };
        self.layerwise_supervision = architecture == VI;
        self.share_post_hl = architecture == IV;
        match architecture {
            III | IV => {
                self.post_cnn_hl_size.get_or_insert(1000);
            }
            _ => self.post_cnn_hl_size = None,
        }
    }

    pub fn with_sizes(mut self, embedding_dim: usize, hl_size: usize, filter_count: usize) -> Self {
        self.embedding_dim = embedding_dim;
        self.hl_size = hl_size;
        self.filter_count = filter_count;
        self
    }

    pub fn with_post_hl(mut self, size: usize) -> Self {
        self.post_cnn_hl_size = Some(size);
        self
    }

    pub fn with_metric(mut self, metric: MetricSpec) -> Self {
        self.metric = metric;
        self
    }

    /// Number of representation levels `forward` returns.
    pub fn tap_count(&self) -> usize {
        if self.layerwise_supervision {
            2
        } else {
            1
        }
    }

    /// Dimension of the final representation vector.
    pub fn rep_dim(&self) -> usize {
        self.post_cnn_hl_size.unwrap_or(self.filter_count)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        use Architecture::*;
        let bad = |msg: String| Err(ConfigError::Inconsistent(msg));
        let arch = self.architecture;
        for (name, v) in [
            ("vocab_size", self.vocab_size),
            ("embedding_dim", self.embedding_dim),
            ("hl_size", self.hl_size),
            ("filter_count", self.filter_count),
            ("filter_width", self.filter_width),
        ] {
            if v == 0 {
                return bad(format!("{name} must be at least 1"));
            }
        }
        let shared = arch != I;
        if self.share_hl != shared || self.share_cnn != shared {
            return bad(format!(
                "architecture {arch} requires share_hl = share_cnn = {shared}"
            ));
        }
        let layers = if matches!(arch, V | VI) { 2 } else { 1 };
        if self.cnn_layers != layers {
            return bad(format!(
                "architecture {arch} requires cnn_layers = {layers}"
            ));
        }
        if self.layerwise_supervision != (arch == VI) {
            return bad(format!(
                "layerwise_supervision is only valid for architecture VI (got {arch})"
            ));
        }
        match (arch, self.post_cnn_hl_size) {
            (III | IV, None) | (III | IV, Some(0)) => {
                return bad(format!("architecture {arch} requires post_cnn_hl_size"))
            }
            (I | II | V | VI, Some(_)) => {
                return bad(format!("architecture {arch} has no post-CNN hidden layer"))
            }
            _ => {}
        }
        if self.share_post_hl != (arch == IV) {
            return bad(format!(
                "share_post_hl must be {} for architecture {arch}",
                arch == IV
            ));
        }
        if self.augmented && self.cnn_layers > 1 {
            return bad("augmented convolution is only supported with one CNN layer".into());
        }
        self.metric
            .validate()
            .map_err(|e| ConfigError::Inconsistent(e.to_string()))
    }

    pub const KEYS: [&'static str; 14] = [
        "architecture",
        "vocab_size",
        "embedding_dim",
        "hl_size",
        "post_cnn_hl_size",
        "filter_count",
        "filter_width",
        "cnn_layers",
        "augmented",
        "share_hl",
        "share_cnn",
        "share_post_hl",
        "layerwise_supervision",
        "metric",
    ];

    /// Reads `model.*` keys. The architecture key (if present) sets the
    /// canonical flags first; explicit flag keys then override them and are
    /// checked by [`ModelConfig::validate`].
    pub fn from_kv(kv: &KeyValues, base: ModelConfig) -> Result<Self, ConfigError> {
        let mut cfg = base;
        if let Some(arch) = kv.parsed::<Architecture>("model.architecture")? {
            cfg.apply_architecture(arch);
        }
        kv.read_into("model.vocab_size", &mut cfg.vocab_size)?;
        kv.read_into("model.embedding_dim", &mut cfg.embedding_dim)?;
        kv.read_into("model.hl_size", &mut cfg.hl_size)?;
        if let Some(v) = kv.get("model.post_cnn_hl_size") {
            cfg.post_cnn_hl_size = match v {
                "none" | "" => None,
                v => Some(v.parse().map_err(|_| ConfigError::InvalidValue {
                    key: "model.post_cnn_hl_size".into(),
                    value: v.into(),
                })?),
            };
        }
        kv.read_into("model.filter_count", &mut cfg.filter_count)?;
        kv.read_into("model.filter_width", &mut cfg.filter_width)?;
        kv.read_into("model.cnn_layers", &mut cfg.cnn_layers)?;
        kv.read_into("model.augmented", &mut cfg.augmented)?;
        kv.read_into("model.share_hl", &mut cfg.share_hl)?;
        kv.read_into("model.share_cnn", &mut cfg.share_cnn)?;
        kv.read_into("model.share_post_hl", &mut cfg.share_post_hl)?;
        kv.read_into(
            "model.layerwise_supervision",
            &mut cfg.layerwise_supervision,
        )?;
        if let Some(m) = kv.get("model.metric") {
            cfg.metric = m.parse().map_err(|_| ConfigError::InvalidValue {
                key: "model.metric".into(),
                value: m.into(),
            })?;
        }
        Ok(cfg)
    }

    pub fn write_kv(&self, kv: &mut KeyValues) {
        kv.set("model.architecture", &self.architecture.to_string());
        kv.set("model.vocab_size", &self.vocab_size.to_string());
        kv.set("model.embedding_dim", &self.embedding_dim.to_string());
        kv.set("model.hl_size", &self.hl_size.to_string());
        kv.set(
            "model.post_cnn_hl_size",
            &self
                .post_cnn_hl_size
                .map_or_else(|| "none".to_string(), |v| v.to_string()),
        );
        kv.set("model.filter_count", &self.filter_count.to_string());
        kv.set("model.filter_width", &self.filter_width.to_string());
        kv.set("model.cnn_layers", &self.cnn_layers.to_string());
        kv.set("model.augmented", &self.augmented.to_string());
        kv.set("model.share_hl", &self.share_hl.to_string());
        kv.set("model.share_cnn", &self.share_cnn.to_string());
        kv.set("model.share_post_hl", &self.share_post_hl.to_string());
        kv.set(
            "model.layerwise_supervision",
            &self.layerwise_supervision.to_string(),
        );
        kv.set("model.metric", &self.metric.to_string());
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_flags_validate() {
        for arch in Architecture::ALL {
            ModelConfig::new(arch, 10).validate().unwrap();
        }
        let vi = ModelConfig::new(Architecture::VI, 10);
        assert_eq!(vi.tap_count(), 2);
        assert_eq!(vi.cnn_layers, 2);
    }

    #[test]
    fn inconsistent_configs() {
        let mut c = ModelConfig::new(Architecture::III, 10);
        c.share_post_hl = true;
        assert!(matches!(c.validate(), Err(ConfigError::Inconsistent(_))));

        let mut c = ModelConfig::new(Architecture::II, 10);
        c.layerwise_supervision = true;
        assert!(c.validate().is_err());

        let mut c = ModelConfig::new(Architecture::V, 10);
        c.augmented = true;
        assert!(c.validate().is_err());

        let mut c = ModelConfig::new(Architecture::II, 10);
        c.filter_count = 0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn kv_roundtrip() {
        let cfg = ModelConfig::new(Architecture::IV, 50)
            .with_sizes(8, 6, 5)
            .with_post_hl(7)
            .with_metric("gesd(gamma=0.5,c=1)".parse().unwrap());
        let mut kv = KeyValues::new();
        cfg.write_kv(&mut kv);
        let back = ModelConfig::from_kv(&kv, ModelConfig::new(Architecture::I, 1)).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn architecture_names() {
        assert_eq!("vi".parse::<Architecture>().unwrap(), Architecture::VI);
        assert_eq!("3".parse::<Architecture>().unwrap(), Architecture::III);
        assert!("VII".parse::<Architecture>().is_err());
    }
}
