use std::fmt::Write as _;

use rand::seq::index::sample;
use rayon::prelude::*;

use super::{ssim, SsimParams};
use crate::channel::{noise_variance_from_snr, sample_channel};
use crate::datasets::ImageSet;
use crate::error::{Error, Result};
use crate::rng::{self, substream};
use crate::transceiver::{reconstruct, PassOptions, TransceiverParams, Variant};

#[derive(Clone, Debug, PartialEq)]
pub struct EvalOptions {
    pub snr_db: Vec<f64>,
    pub trials: usize,
    /// Test images per user per trial.
    pub batch_size: usize,
    pub pass: PassOptions,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalRow {
    /// 1-based user index.
    pub user: usize,
    pub snr_db: f64,
    pub mean_ssim: f64,
    /// Sample standard deviation over trials (0 for one trial).
    pub std_ssim: f64,
    pub trials: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub variant: Variant,
    pub seed: u64,
    /// Free-form identifier of the evaluated parameters.
    pub checkpoint: String,
    /// Ordered by SNR, then user.
    pub rows: Vec<EvalRow>,
}

impl EvalReport {
    pub const CSV_HEADER: &'static str = "variant,user,snr_db,mean_ssim,std_ssim,trials,seed";

    pub fn to_csv(&self) -> String {
        let mut s = String::from(Self::CSV_HEADER);
        s.push('\n');
        for r in &self.rows {
            writeln!(
                s,
                "{},{},{:.8e},{:.8e},{:.8e},{},{}",
                self.variant, r.user, r.snr_db, r.mean_ssim, r.std_ssim, r.trials, self.seed
            )
            .unwrap();
        }
        s
    }

    pub fn mean_for(&self, user: usize, snr_db: f64) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.user == user && r.snr_db == snr_db)
            .map(|r| r.mean_ssim)
    }

    /// Mean SSIM over users at one SNR.
    pub fn user_average(&self, snr_db: f64) -> Option<f64> {
        let v: Vec<f64> = self.rows.iter().filter(|r| r.snr_db == snr_db).map(|r| r.mean_ssim).collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let s = if xs.len() > 1 {
        (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (m, s)
}

/// Mean and spread of per-user SSIM over `trials` draws at each SNR.
///
/// Trial `t` uses the same test images and fading at every SNR (streams
/// keyed by `t` only); noise and precoder draws are keyed by `(snr, t)`.
/// Identical seeds therefore give every variant the same conditions.
pub fn evaluate(params: &TransceiverParams, test_sets: &[ImageSet], opts: &EvalOptions) -> Result<EvalReport> {
    let dims = params.dims;
    if test_sets.len() != dims.users {
        return Err(Error::Dimension(format!("{} test sets for {} users", test_sets.len(), dims.users)));
    }
    if opts.trials == 0 {
        return Err(Error::config("trials", "must be at least 1"));
    }
    if let Some(set) = test_sets.iter().find(|s| s.len() < opts.batch_size || opts.batch_size == 0) {
        return Err(Error::config(
            "eval_batch_size",
            format!("{} images per trial from a set of {}", opts.batch_size, set.len()),
        ));
    }
    let jobs: Vec<(usize, usize)> = (0..opts.snr_db.len()).flat_map(|i| (0..opts.trials).map(move |t| (i, t))).collect();
    let params_ssim = SsimParams::default();
    let scores = jobs
        .par_iter()
        .map(|&(i, t)| -> Result<Vec<f64>> {
            let t64 = t as u64;
            let mut pick = substream(opts.seed, rng::EVAL, &[t64]);
            let images: Vec<_> = test_sets
                .iter()
                .map(|set| set.gather(&sample(&mut pick, set.len(), opts.batch_size).into_vec()))
                .collect();
            let var = noise_variance_from_snr(opts.snr_db[i], opts.pass.power);
            let mut ch = substream(opts.seed, rng::CHANNEL, &[t64]);
            let channels: Vec<_> = (0..opts.batch_size)
                .map(|_| sample_channel(dims.users, dims.tx, dims.rx, var, &mut ch))
                .collect();
            let mut noise = substream(opts.seed, rng::NOISE, &[i as u64, t64]);
            let out = reconstruct(params, &images, &channels, &opts.pass, &mut noise)?;
            images
                .iter()
                .zip(&out)
                .map(|(s, r)| {
                    let mut total = 0.0;
                    for b in 0..opts.batch_size {
                        total += ssim(s.row(b), r.row(b), &params_ssim)?;
                    }
                    Ok(total / opts.batch_size as f64)
                })
                .collect()
        })
        .collect::<Result<Vec<_>>>()?;

    let mut rows = Vec::with_capacity(opts.snr_db.len() * dims.users);
    for (i, &snr) in opts.snr_db.iter().enumerate() {
        let block = &scores[i * opts.trials..(i + 1) * opts.trials];
        for k in 0..dims.users {
            let per_trial: Vec<f64> = block.iter().map(|v| v[k]).collect();
            let (mean_ssim, std_ssim) = mean_std(&per_trial);
            rows.push(EvalRow {
                user: k + 1,
                snr_db: snr,
                mean_ssim,
                std_ssim,
                trials: opts.trials,
            });
        }
    }
    Ok(EvalReport {
        variant: params.variant,
        seed: opts.seed,
        checkpoint: String::new(),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::PIXELS;
    use crate::transceiver::ModelDims;
    use rand::Rng;

    fn noise_set(n: usize, seed: u64) -> ImageSet {
        let mut rng = substream(seed, "set", &[]);
        ImageSet::from_bytes((0..n * PIXELS).map(|_| rng.random()).collect(), None).unwrap()
    }

    fn small(variant: Variant) -> TransceiverParams {
        let dims = ModelDims {
            hidden: 12,
            ..ModelDims::standard()
        };
        let mut p = TransceiverParams::init(variant, dims, &mut substream(1, "init", &[])).unwrap();
        for t in p.tensors_mut() {
            if t.shape().len() == 1 {
                t.data_mut().fill(0.05);
            }
        }
        p
    }

    fn opts(trials: usize) -> EvalOptions {
        EvalOptions {
            snr_db: vec![0.0, 10.0, 20.0],
            trials,
            batch_size: 4,
            pass: PassOptions::default(),
            seed: 9,
        }
    }

    #[test]
    fn interference_free_is_flat_in_snr() {
        let sets = [noise_set(20, 1), noise_set(20, 2)];
        let r = evaluate(&small(Variant::InterferenceFree), &sets, &opts(3)).unwrap();
        assert_eq!(r.rows.len(), 6);
        for k in 1..=2 {
            let a = r.mean_for(k, 0.0).unwrap();
            assert_eq!(a, r.mean_for(k, 10.0).unwrap());
            assert_eq!(a, r.mean_for(k, 20.0).unwrap());
        }
    }

    #[test]
    fn deterministic_and_bounded() {
        let sets = [noise_set(20, 1), noise_set(20, 2)];
        let p = small(Variant::SemiConventional);
        let a = evaluate(&p, &sets, &opts(1)).unwrap();
        let b = evaluate(&p, &sets, &opts(1)).unwrap();
        assert_eq!(a.to_csv(), b.to_csv());
        assert!(a.rows.iter().all(|r| (-1.0..=1.0).contains(&r.mean_ssim) && r.std_ssim == 0.0));
        let csv = a.to_csv();
        assert_eq!(csv.lines().count(), 7);
        assert!(csv.lines().nth(1).unwrap().starts_with("semi_conventional,1,0.00000000e0,"));
    }

    #[test]
    fn rejects_bad_options() {
        let sets = [noise_set(3, 1), noise_set(3, 2)];
        assert!(evaluate(&small(Variant::Csir), &sets, &opts(1)).is_err());
        let sets = [noise_set(8, 1), noise_set(8, 2)];
        assert!(evaluate(&small(Variant::Csir), &sets, &opts(0)).is_err());
        assert!(evaluate(&small(Variant::Csir), &sets[..1], &opts(1)).is_err());
    }

    #[test]
    fn sample_std() {
        assert_eq!(mean_std(&[1.0, 3.0]), (2.0, 2f64.sqrt()));
        assert_eq!(mean_std(&[5.0]), (5.0, 0.0));
    }
}
