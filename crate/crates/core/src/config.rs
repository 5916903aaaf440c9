//! Run configuration, read from TOML.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::encoders::MteConfig;
use crate::error::{Error, Result};
use crate::events::SplitSpec;
use crate::sampling::{NegativeKind, SamplingStrategy};
use crate::tokens::Layout;

/// Which encoder blocks feed the tokens.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Variant {
    pub layout: Layout,
    pub mte: bool,
    /// Drop the calendar term and keep only `cos(ω·Δt)`.
    pub fine_only: bool,
    pub bie: bool,
    pub ste: bool,
}

impl Default for Variant {
    fn default() -> Self {
        Self {
            layout: Layout::Il,
            mte: true,
            fine_only: false,
            bie: true,
            ste: true,
        }
    }
}

impl Variant {
    /// Interaction counts only exist for a pair, so only IL carries them.
    pub fn uses_bie(&self) -> bool {
        self.bie && self.layout == Layout::Il
    }

    pub fn label(&self) -> String {
        let enc = match (self.mte, self.fine_only, self.bie, self.ste) {
            (false, _, _, _) => "-MTE",
            (true, true, _, _) => "MTE-fine",
            (true, false, false, _) => "-BIE",
            (true, false, true, false) => "-STE",
            _ => "full",
        };
        format!("{}/{enc}", self.layout.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Neighbour window length `n`.
    pub neighbors: usize,
    pub sampling: SamplingStrategy,
    pub hidden: usize,
    pub layers: usize,
    pub heads: usize,
    pub dropout: f64,
    pub d_b: usize,
    pub d_s: usize,
    pub d_tr: usize,
    pub ste_window: usize,
    pub mte: MteConfig,
    pub variant: Variant,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            neighbors: 32,
            sampling: SamplingStrategy::Recent,
            hidden: 64,
            layers: 2,
            heads: 2,
            dropout: 0.1,
            d_b: 50,
            d_s: 50,
            d_tr: 50,
            ste_window: 3,
            mte: MteConfig::default(),
            variant: Variant::default(),
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("neighbors", self.neighbors),
            ("hidden", self.hidden),
            ("layers", self.layers),
            ("heads", self.heads),
            ("d_b", self.d_b),
            ("d_s", self.d_s),
            ("d_tr", self.d_tr),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if !self.hidden.is_multiple_of(self.heads) {
            return Err(Error::Config(format!(
                "hidden width {} is not divisible by {} heads",
                self.hidden, self.heads
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if self.ste_window.is_multiple_of(2) {
            return Err(Error::Config("ste_window must be odd".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub patience: usize,
    pub batch_size: usize,
    /// Stop once validation AP reaches this value (never by default).
    pub target_val_ap: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            weight_decay: 0.0,
            epochs: 100,
            patience: 20,
            batch_size: 200,
            target_val_ap: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("learning rate {} must be positive", self.lr)));
        }
        if self.weight_decay < 0.0 {
            return Err(Error::Config("weight decay must be non-negative".into()));
        }
        if self.batch_size == 0 || self.patience == 0 {
            return Err(Error::Config("batch size and patience must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Setting {
    #[default]
    #[serde(alias = "trans")]
    Transductive,
    #[serde(alias = "ind")]
    Inductive,
}

impl std::str::FromStr for Setting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "trans" | "transductive" => Ok(Self::Transductive),
            "ind" | "inductive" => Ok(Self::Inductive),
            other => Err(Error::Config(format!("unknown setting {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub nss: NegativeKind,
    pub setting: Setting,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TraceConfig {
    pub threshold: usize,
    /// Layer to read attention from; the last one when unset.
    pub layer: Option<usize>,
    /// Epochs at which to trace (0 = before training).
    pub epochs: Vec<usize>,
}

impl Default for TraceConfig {
    fn default() -> Self {
        Self {
            threshold: 150,
            layer: None,
            epochs: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        let s = SplitSpec::default();
        Self {
            train: s.train_frac,
            val: s.val_frac,
            test: s.test_frac,
        }
    }
}

impl SplitConfig {
    pub fn spec(&self) -> Result<SplitSpec> {
        SplitSpec::new(self.train, self.val, self.test)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub split: SplitConfig,
    pub trace: TraceConfig,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config is always representable")
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()?;
        self.split.spec()?;
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serialises");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}
