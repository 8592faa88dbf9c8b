//! Run configuration: every knob of the three phases plus sweep grids.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::constraint::MorphConfig;
use crate::discriminator::CutoffPolicy;
use crate::error::{Error, Result};
use crate::losses::LossConfig;
use crate::rng::{derive_seed, stream};
use crate::segnet::train::TrainConfig;
use crate::segnet::NetworkSpec;
use crate::synth::PhantomConfig;

/// Which constraints the lesion segmenter sees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AblationMode {
    /// Dice loss only.
    Baseline,
    /// Thresholded lung prediction, no morphology, no filtering.
    RawLung,
    /// Lung+ space candidates without the discriminator.
    LungPlus,
    /// Lung+ space filtered by the discriminator.
    Full,
}

impl AblationMode {
    pub const ALL: [AblationMode; 4] = [
        AblationMode::Baseline,
        AblationMode::RawLung,
        AblationMode::LungPlus,
        AblationMode::Full,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AblationMode::Baseline => "baseline",
            AblationMode::RawLung => "raw-lung",
            AblationMode::LungPlus => "lung-plus",
            AblationMode::Full => "full",
        }
    }
}

impl std::str::FromStr for AblationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "baseline" => Ok(AblationMode::Baseline),
            "raw-lung" => Ok(AblationMode::RawLung),
            "lung-plus" => Ok(AblationMode::LungPlus),
            "full" | "constrained" => Ok(AblationMode::Full),
            other => Err(Error::config("mode", format!("unknown mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    CloseK,
    DilateK,
    Tau,
}

impl SweepAxis {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepAxis::CloseK => "close_k",
            SweepAxis::DilateK => "dilate_k",
            SweepAxis::Tau => "tau",
        }
    }
}

impl std::str::FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "close_k" => Ok(SweepAxis::CloseK),
            "dilate_k" => Ok(SweepAxis::DilateK),
            "tau" => Ok(SweepAxis::Tau),
            other => Err(Error::config("axis", format!("unknown sweep axis `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub close_k: Vec<usize>,
    pub dilate_k: Vec<usize>,
    pub tau: Vec<f64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            close_k: vec![15, 19, 25],
            dilate_k: vec![10, 15, 20],
            tau: vec![0.80, 0.90, 0.99],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    /// Which constraints phase3 trains with.
    pub mode: AblationMode,
    /// Coverage threshold for constraint labels.
    pub tau: f64,
    /// Pick λ from `loss.lambda_grid` by validation IoU; otherwise use `loss.lambda`.
    pub lambda_search: bool,
    /// Bootstrap resamples for standard errors.
    pub bootstrap: usize,
    /// Binarization threshold for predictions at evaluation time.
    pub eval_threshold: f64,
    pub network: NetworkSpec,
    pub synth: PhantomConfig,
    pub morph: MorphConfig,
    pub cutoff: CutoffPolicy,
    pub loss: LossConfig,
    pub lung_train: TrainConfig,
    pub disc_train: TrainConfig,
    pub seg_train: TrainConfig,
    pub sweep: SweepConfig,
}

// Batches of one: at lr 0.01 without momentum, batches of eight barely move
// the lesion segmenter within a few dozen epochs.
fn per_sample_training() -> TrainConfig {
    TrainConfig {
        batch_size: 1,
        ..TrainConfig::default()
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            mode: AblationMode::Full,
            tau: 0.99,
            lambda_search: true,
            bootstrap: 1000,
            eval_threshold: 0.5,
            network: NetworkSpec::default(),
            synth: PhantomConfig::default(),
            morph: MorphConfig::default(),
            cutoff: CutoffPolicy::default(),
            loss: LossConfig::default(),
            lung_train: per_sample_training(),
            disc_train: per_sample_training(),
            seg_train: per_sample_training(),
            sweep: SweepConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::ConfigParse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config is always serialisable")
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(Error::config("tau", "must lie in (0, 1]"));
        }
        if self.bootstrap == 0 {
            return Err(Error::config("bootstrap", "must be >= 1"));
        }
        if !(0.0..=1.0).contains(&self.eval_threshold) {
            return Err(Error::config("eval_threshold", "must lie in [0, 1]"));
        }
        if (self.network.height, self.network.width) != (self.synth.height, self.synth.width) {
            return Err(Error::config(
                "network.height/width",
                "must match synth.height/width",
            ));
        }
        if self.network.in_channels != 1 {
            return Err(Error::config("network.in_channels", "segmenters take one channel"));
        }
        self.network.validate()?;
        self.synth.validate()?;
        self.morph.validate()?;
        self.cutoff.validate()?;
        self.loss.validate()?;
        for (name, t) in [
            ("lung_train", &self.lung_train),
            ("disc_train", &self.disc_train),
            ("seg_train", &self.seg_train),
        ] {
            t.validate().map_err(|e| match e {
                Error::InvalidConfig { field, reason } => Error::InvalidConfig {
                    field: field.replacen("train", name, 1),
                    reason,
                },
                other => other,
            })?;
        }
        if self.sweep.close_k.is_empty() || self.sweep.dilate_k.is_empty() || self.sweep.tau.is_empty() {
            return Err(Error::config("sweep", "axis value lists must be non-empty"));
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON form (seed included).
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_string(&(self, self.seed)).expect("serialisable");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    pub fn phantom(&self) -> PhantomConfig {
        PhantomConfig {
            seed: self.seed,
            ..self.synth.clone()
        }
    }

    pub fn train_config(&self, which: u64) -> TrainConfig {
        let base = match which {
            stream::LUNG_TRAIN => &self.lung_train,
            stream::DISC_TRAIN => &self.disc_train,
            _ => &self.seg_train,
        };
        TrainConfig {
            seed: derive_seed(self.seed, which, 0),
            ..base.clone()
        }
    }
}
