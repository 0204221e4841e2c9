//! Joint end-to-end training of all users with dynamic loss weights.
//!
//! Every batch draws one channel realization per sample and one training
//! SNR, runs the multi-user forward pass, and takes one Adam step on all
//! users' parameters at once. The per-user weights are refreshed from the
//! detached per-user losses, by default once per epoch.

mod weights;

pub use weights::{total_loss, update_weights, LossWeights};

use std::time::Instant;

use rand::Rng as _;

use crate::channel::{noise_variance_from_snr, sample_channel};
use crate::datasets::{BatchIter, ImageSet};
use crate::diffcore::{AdamConfig, AdamState, Tape, Var};
use crate::error::{Error, Result};
use crate::rng::{self, substream};
use crate::transceiver::{bind, forward_pass, ModelDims, PassOptions, TransceiverParams, Variant};

/// Training SNR per batch.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SnrPolicy {
    /// Uniform in `[min_db, max_db]`, redrawn every batch.
    Uniform { min_db: f64, max_db: f64 },
    Fixed { snr_db: f64 },
}

impl Default for SnrPolicy {
    fn default() -> Self {
        SnrPolicy::Uniform { min_db: 0.0, max_db: 20.0 }
    }
}

impl SnrPolicy {
    pub fn draw(&self, rng: &mut rng::Rng) -> f64 {
        match *self {
            SnrPolicy::Uniform { min_db, max_db } => rng.random_range(min_db..=max_db),
            SnrPolicy::Fixed { snr_db } => snr_db,
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            SnrPolicy::Uniform { min_db, max_db } if !(min_db.is_finite() && max_db.is_finite() && min_db <= max_db) => {
                Err(Error::config("train_snr", format!("empty range [{min_db}, {max_db}]")))
            }
            SnrPolicy::Fixed { snr_db } if !snr_db.is_finite() => Err(Error::config("train_snr.snr_db", "must be finite")),
            _ => Ok(()),
        }
    }
}

/// When the loss weights are refreshed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightUpdate {
    /// From epoch-mean per-user losses.
    #[default]
    Epoch,
    /// From each batch's per-user losses.
    Batch,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub variant: Variant,
    pub dims: ModelDims,
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub train_snr: SnrPolicy,
    pub weight_update: WeightUpdate,
    pub pass: PassOptions,
    pub seed: u64,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::config("epochs", "must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size", "must be at least 1"));
        }
        if !(self.pass.power > 0.0 && self.pass.power.is_finite()) {
            return Err(Error::config("power", "must be positive"));
        }
        self.train_snr.validate()?;
        self.dims.validate(self.variant)
    }
}

/// Summary of one finished epoch (1-based).
#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Epoch-mean MSE per user.
    pub mse: Vec<f64>,
    /// Weights in force after the epoch's update.
    pub weights: Vec<f64>,
    pub seconds: f64,
}

impl EpochRecord {
    pub fn csv_header(users: usize) -> String {
        let mut cols = vec!["epoch".to_string()];
        cols.extend((1..=users).map(|k| format!("mse_{k}")));
        cols.extend((1..=users).map(|k| format!("weight_{k}")));
        cols.push("seconds".into());
        cols.join(",")
    }

    pub fn csv_row(&self) -> String {
        let mut cols = vec![self.epoch.to_string()];
        cols.extend(self.mse.iter().chain(&self.weights).map(|v| format!("{v:.8e}")));
        cols.push(format!("{:.3}", self.seconds));
        cols.join(",")
    }

    /// Epoch-mean total loss under equal weights.
    pub fn mean_mse(&self) -> f64 {
        self.mse.iter().sum::<f64>() / self.mse.len() as f64
    }
}

#[derive(Clone, Debug)]
pub struct TrainState {
    pub epoch: usize,
    pub adam: AdamState,
    pub weights: LossWeights,
    pub history: Vec<EpochRecord>,
}

/// Trains from a fresh initialization; see [`train_with`].
pub fn train(config: &TrainConfig, datasets: &[ImageSet]) -> Result<(TransceiverParams, TrainState)> {
    train_with(config, datasets, &mut |_, _| Ok(()))
}

/// Trains one variant, calling `on_epoch` after every epoch.
///
/// `datasets[k]` feeds user `k`. Random streams, all from `config.seed`:
/// init; shuffle per `(epoch, user)`; training SNR, channels and noise per
/// `(epoch, batch)`.
pub fn train_with(
    config: &TrainConfig,
    datasets: &[ImageSet],
    on_epoch: &mut dyn FnMut(&EpochRecord, &TransceiverParams) -> Result<()>,
) -> Result<(TransceiverParams, TrainState)> {
    config.validate()?;
    let dims = config.dims;
    if datasets.len() != dims.users {
        return Err(Error::Dimension(format!("{} datasets for {} users", datasets.len(), dims.users)));
    }
    let mut params = TransceiverParams::init(config.variant, dims, &mut substream(config.seed, rng::INIT, &[]))?;
    let mut state = TrainState {
        epoch: 0,
        adam: AdamState::new(config.adam, params.tensors()),
        weights: LossWeights::uniform(dims.users),
        history: Vec::with_capacity(config.epochs),
    };
    let start = Instant::now();

    for epoch in 1..=config.epochs {
        let e = epoch as u64;
        let mut iters = datasets
            .iter()
            .enumerate()
            .map(|(k, set)| BatchIter::new(set, config.batch_size, &mut substream(config.seed, rng::SHUFFLE, &[e, k as u64])))
            .collect::<Result<Vec<_>>>()?;
        let batches = iters.iter().map(BatchIter::batches).min().unwrap_or(0);
        let mut sums = vec![0.0; dims.users];

        for b in 0..batches {
            let path = [e, b as u64];
            let snr = config.train_snr.draw(&mut substream(config.seed, rng::TRAIN_SNR, &path));
            let var = noise_variance_from_snr(snr, config.pass.power);
            let mut ch_rng = substream(config.seed, rng::CHANNEL, &path);
            let channels: Vec<_> = (0..config.batch_size)
                .map(|_| sample_channel(dims.users, dims.tx, dims.rx, var, &mut ch_rng))
                .collect();

            let mut tape = Tape::new();
            let bound = bind(&mut tape, &params, true);
            let images: Vec<Var> = iters
                .iter_mut()
                .zip(datasets)
                .map(|(it, set)| {
                    let idx = it.next_indices().expect("batch count is the minimum over users");
                    tape.constant(set.gather(idx))
                })
                .collect();
            let out = forward_pass(
                &mut tape,
                &bound,
                &images,
                &channels,
                &config.pass,
                &mut substream(config.seed, rng::NOISE, &path),
            )?;
            let (loss, per_user) = total_loss(&mut tape, &images, &out.reconstructions, &state.weights)?;
            if !tape.value(loss)[0].is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch: b + 1 });
            }
            tape.backward(loss)?;
            {
                let grads: Vec<&[f64]> = bound
                    .vars()
                    .iter()
                    .map(|&v| tape.grad(v).expect("trainable leaf has a gradient"))
                    .collect();
                state.adam.step(&mut params.tensors_mut(), &grads)?;
            }
            for (s, l) in sums.iter_mut().zip(&per_user) {
                *s += l;
            }
            if config.weight_update == WeightUpdate::Batch {
                state.weights = update_weights(&state.weights, &per_user)?;
            }
        }

        let mse: Vec<f64> = sums.iter().map(|s| s / batches.max(1) as f64).collect();
        if config.weight_update == WeightUpdate::Epoch {
            state.weights = update_weights(&state.weights, &mse)?;
        }
        state.epoch = epoch;
        let record = EpochRecord {
            epoch,
            mse,
            weights: state.weights.as_slice().to_vec(),
            seconds: start.elapsed().as_secs_f64(),
        };
        log::info!("{} epoch {epoch}: {}", config.variant, record.csv_row());
        on_epoch(&record, &params)?;
        state.history.push(record);
    }
    Ok((params, state))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::PIXELS;
    use crate::transceiver::write_checkpoint;

    fn blobs(n: usize, seed: u64) -> ImageSet {
        let mut rng = substream(seed, "blobs", &[]);
        let mut px = vec![0u8; n * PIXELS];
        for i in 0..n {
            let (r, c) = (rng.random_range(4..20), rng.random_range(4..20));
            for dr in 0..6 {
                for dc in 0..6 {
                    px[i * PIXELS + (r + dr) * 28 + c + dc] = 255;
                }
            }
        }
        ImageSet::from_bytes(px, None).unwrap()
    }

    fn small_config(variant: Variant) -> TrainConfig {
        TrainConfig {
            variant,
            dims: ModelDims {
                hidden: 16,
                ..ModelDims::standard()
            },
            epochs: 2,
            batch_size: 32,
            adam: AdamConfig::default(),
            train_snr: SnrPolicy::default(),
            weight_update: WeightUpdate::Epoch,
            pass: PassOptions::default(),
            seed: 5,
        }
    }

    #[test]
    fn bookkeeping() {
        let data = [blobs(256, 1), blobs(256, 2)];
        let mut seen = Vec::new();
        let (params, state) = train_with(&small_config(Variant::Csir), &data, &mut |r, _| {
            seen.push(r.epoch);
            Ok(())
        })
        .unwrap();
        assert_eq!(seen, [1, 2]);
        assert_eq!(state.history.len(), 2);
        assert_eq!(state.weights.epoch(), 2);
        assert_eq!(state.adam.step_count(), 16);
        for r in &state.history {
            assert_eq!(r.mse.len(), 2);
            assert!((r.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        assert!(params.tensors().iter().all(|t| t.is_finite()));
    }

    #[test]
    fn same_seed_same_checkpoint() {
        let data = [blobs(96, 1), blobs(96, 2)];
        let cfg = small_config(Variant::Csitr);
        let bytes = |cfg: &TrainConfig| {
            let (p, _) = train(cfg, &data).unwrap();
            let mut b = Vec::new();
            write_checkpoint(&mut b, &p).unwrap();
            b
        };
        let a = bytes(&cfg);
        assert_eq!(a, bytes(&cfg));
        assert_ne!(a, bytes(&TrainConfig { seed: 6, ..cfg }));
    }

    #[test]
    fn batch_granularity_updates_every_step() {
        let data = [blobs(96, 1), blobs(96, 2)];
        let cfg = TrainConfig {
            weight_update: WeightUpdate::Batch,
            epochs: 1,
            ..small_config(Variant::CsiFree)
        };
        let (_, state) = train(&cfg, &data).unwrap();
        assert_eq!(state.weights.epoch(), 3);
    }

    #[test]
    fn every_tensor_moves_after_one_epoch() {
        let data = [blobs(64, 3), blobs(64, 4)];
        let cfg = TrainConfig {
            epochs: 1,
            ..small_config(Variant::SemiConventional)
        };
        let init = TransceiverParams::init(cfg.variant, cfg.dims, &mut substream(cfg.seed, rng::INIT, &[])).unwrap();
        let (p, _) = train(&cfg, &data).unwrap();
        for (i, (a, b)) in init.tensors().iter().zip(p.tensors()).enumerate() {
            assert_ne!(a.data(), b.data(), "tensor {i} never updated");
        }
    }

    #[test]
    fn rejects_mismatches() {
        let data = [blobs(64, 3)];
        assert!(train(&small_config(Variant::Csir), &data).is_err());
        let bad = TrainConfig {
            epochs: 0,
            ..small_config(Variant::Csir)
        };
        assert!(matches!(bad.validate(), Err(Error::Config { .. })));
        let data = [blobs(16, 3), blobs(16, 4)];
        assert!(train(&small_config(Variant::Csir), &data).is_err());
    }

    #[test]
    fn log_format() {
        let r = EpochRecord {
            epoch: 3,
            mse: vec![0.125, 0.5],
            weights: vec![0.2, 0.8],
            seconds: 1.5,
        };
        assert_eq!(EpochRecord::csv_header(2), "epoch,mse_1,mse_2,weight_1,weight_2,seconds");
        assert_eq!(r.csv_row(), "3,1.25000000e-1,5.00000000e-1,2.00000000e-1,8.00000000e-1,1.500");
    }
}
