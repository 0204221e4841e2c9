//! Experiment configuration: TOML on top of a named preset.
//!
//! A file only needs the keys it changes; everything else comes from the
//! preset (`desk` unless chosen otherwise). Unknown keys are rejected.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::channel::PrecoderAlgorithm;
use crate::datasets::{DatasetSource, PIXELS};
use crate::diffcore::AdamConfig;
use crate::error::{Error, Result};
use crate::training::{SnrPolicy, TrainConfig, WeightUpdate};
use crate::transceiver::{ModelDims, PassOptions, Variant};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Preset {
    /// 10k training images per user, 20 epochs.
    Desk,
    /// 60k training images per user, 200 epochs.
    Paper,
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Preset::Desk),
            "paper" => Ok(Preset::Paper),
            _ => Err(Error::config("preset", format!("unknown preset `{s}` (desk, paper)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub users: usize,
    pub tx: usize,
    pub rx: usize,
    pub block_len: usize,
    pub hidden: usize,
    /// Per-symbol transmit power `P`.
    pub power: f64,
    /// Optional cross-check of the encoder output width `2·N_t·N_B`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub symbol_width: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub epochs: usize,
    pub batch_size: usize,
    /// Training images per user, taken from the front of the train split.
    pub images: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub snr: SnrPolicy,
    pub weight_update: WeightUpdate,
    /// Write an intermediate checkpoint every this many epochs (0: final only).
    pub checkpoint_every: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrecoderSection {
    pub iterations: usize,
    pub algorithm: PrecoderAlgorithm,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    pub snr_db: Vec<f64>,
    pub trials: usize,
    /// Test images per user per trial.
    pub batch_size: usize,
    /// Test images per user to draw from.
    pub images: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub dir: PathBuf,
    /// Dataset per user; a single entry is shared by all users.
    pub users: Vec<DatasetSource>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub users: Vec<usize>,
    pub snr_db: Vec<f64>,
    pub variants: Vec<Variant>,
    pub dataset: DatasetSource,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReconstructSection {
    pub indices: Vec<usize>,
    pub snr_db: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub variants: Vec<Variant>,
    pub model: ModelSection,
    pub train: TrainSection,
    pub precoder: PrecoderSection,
    pub eval: EvalSection,
    pub data: DataSection,
    pub sweep: SweepSection,
    pub reconstruct: ReconstructSection,
}

impl ExperimentConfig {
    pub fn preset(p: Preset) -> Self {
        let desk = ExperimentConfig {
            seed: 1,
            out_dir: PathBuf::from("runs/desk"),
            variants: vec![
                Variant::Csir,
                Variant::Csitr,
                Variant::CsiFree,
                Variant::InterferenceFree,
                Variant::SemiConventional,
            ],
            model: ModelSection {
                users: 2,
                tx: 2,
                rx: 2,
                block_len: 16,
                hidden: 256,
                power: 1.0,
                symbol_width: None,
            },
            train: TrainSection {
                epochs: 20,
                batch_size: 128,
                images: 10_000,
                learning_rate: 1e-3,
                beta1: 0.9,
                beta2: 0.98,
                epsilon: 1e-8,
                snr: SnrPolicy::default(),
                weight_update: WeightUpdate::Epoch,
                checkpoint_every: 0,
            },
            precoder: PrecoderSection {
                iterations: 20,
                algorithm: PrecoderAlgorithm::MinLeakage,
            },
            eval: EvalSection {
                snr_db: vec![0.0, 5.0, 10.0, 15.0, 20.0],
                trials: 20,
                batch_size: 64,
                images: 10_000,
            },
            data: DataSection {
                dir: PathBuf::from("data"),
                users: vec![DatasetSource::Mnist, DatasetSource::FashionMnist],
            },
            sweep: SweepSection {
                users: vec![2, 3],
                snr_db: vec![0.0, 15.0],
                variants: vec![Variant::Csir, Variant::Csitr],
                dataset: DatasetSource::Mnist,
            },
            reconstruct: ReconstructSection {
                indices: vec![0, 1, 2, 3],
                snr_db: 0.0,
            },
        };
        match p {
            Preset::Desk => desk,
            Preset::Paper => ExperimentConfig {
                out_dir: PathBuf::from("runs/paper"),
                train: TrainSection {
                    epochs: 200,
                    images: 60_000,
                    ..desk.train
                },
                eval: EvalSection {
                    trials: 100,
                    ..desk.eval
                },
                sweep: SweepSection {
                    users: vec![2, 3, 4, 5],
                    ..desk.sweep
                },
                ..desk
            },
        }
    }

    /// Preset overlaid with the TOML text `overlay`.
    pub fn from_toml(preset: Preset, overlay: &str) -> Result<Self> {
        let mut base = toml::Value::try_from(Self::preset(preset)).map_err(|e| Error::config("<preset>", e.to_string()))?;
        let top: toml::Table = overlay.parse().map_err(|e: toml::de::Error| Error::config("<file>", e.to_string()))?;
        merge(&mut base, toml::Value::Table(top));
        let cfg: Self = base.try_into().map_err(|e: toml::de::Error| Error::config("<file>", e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(preset: Preset, path: Option<&Path>) -> Result<Self> {
        match path {
            Some(p) => Self::from_toml(preset, &std::fs::read_to_string(p)?),
            None => {
                let cfg = Self::preset(preset);
                cfg.validate()?;
                Ok(cfg)
            }
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical TOML form.
    pub fn hash(&self) -> String {
        Sha256::digest(self.to_toml().as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn dims(&self, users: usize) -> ModelDims {
        ModelDims {
            users,
            tx: self.model.tx,
            rx: self.model.rx,
            block_len: self.model.block_len,
            hidden: self.model.hidden,
            image_len: PIXELS,
        }
    }

    pub fn pass_options(&self) -> PassOptions {
        PassOptions {
            power: self.model.power,
            precoder_iterations: self.precoder.iterations,
            precoder_algorithm: self.precoder.algorithm,
        }
    }

    pub fn train_config(&self, variant: Variant, users: usize) -> TrainConfig {
        TrainConfig {
            variant,
            dims: self.dims(users),
            epochs: self.train.epochs,
            batch_size: self.train.batch_size,
            adam: AdamConfig {
                learning_rate: self.train.learning_rate,
                beta1: self.train.beta1,
                beta2: self.train.beta2,
                epsilon: self.train.epsilon,
            },
            train_snr: self.train.snr,
            weight_update: self.train.weight_update,
            pass: self.pass_options(),
            seed: self.seed,
        }
    }

    /// Dataset for each of `users` users.
    pub fn user_datasets(&self, users: usize) -> Result<Vec<DatasetSource>> {
        match self.data.users.len() {
            1 => Ok(vec![self.data.users[0]; users]),
            n if n == users => Ok(self.data.users.clone()),
            n => Err(Error::config("data.users", format!("{n} datasets for {users} users (give one or exactly K)"))),
        }
    }

    /// Rejects inconsistent settings, naming the offending field.
    pub fn validate(&self) -> Result<()> {
        let m = &self.model;
        let positive = [
            ("model.users", m.users),
            ("model.tx", m.tx),
            ("model.rx", m.rx),
            ("model.block_len", m.block_len),
            ("model.hidden", m.hidden),
            ("train.epochs", self.train.epochs),
            ("train.batch_size", self.train.batch_size),
            ("eval.trials", self.eval.trials),
            ("eval.batch_size", self.eval.batch_size),
        ];
        for (field, v) in positive {
            if v == 0 {
                return Err(Error::config(field, "must be at least 1"));
            }
        }
        if !(m.power > 0.0 && m.power.is_finite()) {
            return Err(Error::config("model.power", "must be positive"));
        }
        if let Some(w) = m.symbol_width {
            if w != 2 * m.tx * m.block_len {
                return Err(Error::config(
                    "model.symbol_width",
                    format!("{w} ≠ 2·N_t·N_B = {}", 2 * m.tx * m.block_len),
                ));
            }
        }
        if self.variants.is_empty() {
            return Err(Error::config("variants", "list is empty"));
        }
        if self.variants.contains(&Variant::SemiConventional) && m.tx < m.rx {
            return Err(Error::config("model.tx", "semi_conventional needs N_t ≥ N_r"));
        }
        if self.train.images < self.train.batch_size {
            return Err(Error::config(
                "train.images",
                format!("{} images cannot fill a batch of {}", self.train.images, self.train.batch_size),
            ));
        }
        if self.eval.images < self.eval.batch_size {
            return Err(Error::config(
                "eval.images",
                format!("{} images cannot fill a batch of {}", self.eval.images, self.eval.batch_size),
            ));
        }
        let adam = [
            ("train.learning_rate", self.train.learning_rate > 0.0),
            ("train.beta1", (0.0..1.0).contains(&self.train.beta1)),
            ("train.beta2", (0.0..1.0).contains(&self.train.beta2)),
            ("train.epsilon", self.train.epsilon > 0.0),
        ];
        for (field, ok) in adam {
            if !ok {
                return Err(Error::config(field, "out of range"));
            }
        }
        for (field, list) in [("eval.snr_db", &self.eval.snr_db), ("sweep.snr_db", &self.sweep.snr_db)] {
            if list.is_empty() || list.iter().any(|s| !s.is_finite()) {
                return Err(Error::config(field, "needs at least one finite SNR"));
            }
        }
        if self.sweep.users.is_empty() || self.sweep.users.contains(&0) {
            return Err(Error::config("sweep.users", "needs user counts ≥ 1"));
        }
        if let Some(i) = self.reconstruct.indices.iter().find(|&&i| i >= self.eval.images) {
            return Err(Error::config("reconstruct.indices", format!("index {i} beyond eval.images")));
        }
        self.user_datasets(m.users)?;
        let train = self.train_config(self.variants[0], m.users);
        train.validate().map_err(|e| match e {
            Error::Config { field, detail } => {
                let field = field.replacen("train_snr", "snr", 1);
                Error::config(format!("train.{field}"), detail)
            }
            other => other,
        })
    }
}

fn merge(base: &mut toml::Value, over: toml::Value) {
    match (base, over) {
        (toml::Value::Table(b), toml::Value::Table(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    // tagged enums are replaced whole so a new `kind` does not
                    // inherit the old variant's fields
                    Some(slot) if slot.is_table() && v.is_table() && !v.as_table().unwrap().contains_key("kind") => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, o) => *b = o,
    }
}
