//! Plain-text run configuration: `[run]`, `[model]`, `[train]` and `[synth]`
//! tables, every key optional and pre-filled with the default protocol.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use spectran_core::adapter::{Activation, FusionMode, TaylorMode};
use spectran_core::dataio::{SplitRatios, SynthConfig};
use spectran_core::evalkit::EvalOptions;
use spectran_core::model::{ModelConfig, Transform};
use spectran_core::recmodel::{BackboneConfig, NUM_NEGATIVES};
use spectran_core::train::TrainConfig;
use spectran_core::{Error, Result};

pub const CONFIG_ECHO: &str = "config_echo.toml";

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub run: RunSection,
    pub model: ModelSection,
    pub train: TrainSection,
    pub synth: SynthSection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub seed: u64,
    pub deterministic: bool,
    pub out: PathBuf,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub embeddings: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub interactions: Option<PathBuf>,
    /// Split file; defaults to `splits.bin` under `out`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub splits: Option<PathBuf>,
    /// Checkpoint to evaluate or diagnose; defaults to `checkpoint.bin` under `out`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<PathBuf>,
    /// Users and items with fewer interactions are dropped before splitting.
    pub min_count: usize,
    /// Train, validation and test shares of the users.
    pub split: [f64; 3],
    /// Label for the spectral-weight report row.
    pub dataset: String,
}

impl Default for RunSection {
    fn default() -> Self {
        let r = SplitRatios::default();
        Self {
            seed: 0,
            deterministic: true,
            out: PathBuf::from("out"),
            embeddings: None,
            interactions: None,
            splits: None,
            checkpoint: None,
            min_count: 5,
            split: [r.train, r.valid, r.test],
            dataset: "synthetic".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub transform: String,
    pub fusion: String,
    pub d: usize,
    /// Attention width of the spectral transform; `d` when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    pub taylor_order: usize,
    pub taylor_mode: String,
    pub temperature: f64,
    pub blocks: usize,
    pub max_len: usize,
    pub dropout: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mlp_hidden: Option<usize>,
    pub mlp_activation: String,
}

impl Default for ModelSection {
    fn default() -> Self {
        let m = ModelConfig::default();
        let b = &m.backbone;
        Self {
            transform: m.transform.to_string(),
            fusion: m.fusion.to_string(),
            d: b.d,
            m: None,
            taylor_order: m.taylor_order,
            taylor_mode: m.taylor_mode.to_string(),
            temperature: m.temperature,
            blocks: b.blocks,
            max_len: b.max_len,
            dropout: b.dropout,
            mlp_hidden: None,
            mlp_activation: m.mlp_activation.to_string(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub lr: f64,
    pub batch_size: usize,
    pub weight_decay: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub negatives: usize,
    pub exclude_history: bool,
    pub exclude_history_negatives: bool,
    pub eval_batch_size: usize,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            lr: t.lr,
            batch_size: t.batch_size,
            weight_decay: BackboneConfig::default().weight_decay,
            max_epochs: t.max_epochs,
            patience: t.patience,
            negatives: NUM_NEGATIVES,
            exclude_history: t.eval.exclude_history,
            exclude_history_negatives: t.exclude_history_negatives,
            eval_batch_size: t.eval.batch_size,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSection {
    pub items: usize,
    pub users: usize,
    pub dim: usize,
    pub rank: usize,
    pub decay: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub leading: Option<f64>,
    pub noise: f64,
    pub min_seq_len: usize,
    pub max_seq_len: usize,
    pub preference_scale: f64,
    pub drift: f64,
}

impl Default for SynthSection {
    fn default() -> Self {
        let s = SynthConfig::default();
        Self {
            items: s.items,
            users: s.users,
            dim: s.dim,
            rank: s.rank,
            decay: s.decay,
            leading: s.leading,
            noise: s.noise,
            min_seq_len: s.min_seq_len,
            max_seq_len: s.max_seq_len,
            preference_scale: s.preference_scale,
            drift: s.drift,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("run configuration serialises")
    }

    pub fn validate(&self) -> Result<()> {
        if self.model.d == 0 {
            return Err(Error::Config("model.d must be at least 1".into()));
        }
        self.split_ratios().validate()?;
        self.model_config()?.validate()?;
        self.train_config().validate()?;
        Ok(())
    }

    pub fn split_ratios(&self) -> SplitRatios {
        let [train, valid, test] = self.run.split;
        SplitRatios { train, valid, test }
    }

    pub fn model_config(&self) -> Result<ModelConfig> {
        let m = &self.model;
        Ok(ModelConfig {
            transform: m.transform.parse::<Transform>()?,
            fusion: m.fusion.parse::<FusionMode>()?,
            backbone: BackboneConfig {
                d: m.d,
                blocks: m.blocks,
                max_len: m.max_len,
                dropout: m.dropout,
                weight_decay: self.train.weight_decay,
                ..BackboneConfig::default()
            },
            attention_dim: m.m,
            taylor_order: m.taylor_order,
            taylor_mode: m.taylor_mode.parse::<TaylorMode>()?,
            mlp_hidden: m.mlp_hidden,
            mlp_activation: m.mlp_activation.parse::<Activation>()?,
            temperature: m.temperature,
        })
    }

    pub fn train_config(&self) -> TrainConfig {
        let t = &self.train;
        TrainConfig {
            lr: t.lr,
            batch_size: t.batch_size,
            max_epochs: t.max_epochs,
            patience: t.patience,
            negatives: t.negatives,
            exclude_history_negatives: t.exclude_history_negatives,
            eval: EvalOptions {
                exclude_history: t.exclude_history,
                batch_size: t.eval_batch_size,
            },
        }
    }

    pub fn synth_config(&self) -> SynthConfig {
        let s = &self.synth;
        SynthConfig {
            items: s.items,
            users: s.users,
            dim: s.dim,
            rank: s.rank,
            decay: s.decay,
            leading: s.leading,
            noise: s.noise,
            min_seq_len: s.min_seq_len,
            max_seq_len: s.max_seq_len,
            preference_scale: s.preference_scale,
            drift: s.drift,
            seed: self.run.seed,
        }
    }

    pub fn splits_path(&self) -> PathBuf {
        self.run.splits.clone().unwrap_or_else(|| self.run.out.join("splits.bin"))
    }

    pub fn checkpoint_path(&self) -> PathBuf {
        self.run.checkpoint.clone().unwrap_or_else(|| self.run.out.join("checkpoint.bin"))
    }

    /// Whether the configured transform reads semantic embeddings.
    pub fn needs_embeddings(&self) -> Result<bool> {
        Ok(self.model_config()?.transform != Transform::None)
    }
}

/// Checks that an input file exists, naming the configuration key otherwise.
pub fn require_file(path: Option<&Path>, key: &str) -> Result<PathBuf> {
    let p = path.ok_or_else(|| Error::Config(format!("{key} is not set")))?;
    if !p.is_file() {
        return Err(Error::Config(format!("{key}: {} does not exist", p.display())));
    }
    Ok(p.to_path_buf())
}
