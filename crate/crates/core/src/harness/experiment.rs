use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::config::ExperimentConfig;
use super::pgm::{side_by_side, to_bytes, write_pgm};
use crate::channel::{noise_variance_from_snr, sample_channel};
use crate::datasets::{file_sha256, load_idx_images, DatasetSource, ImageSet, Split};
use crate::error::{Error, Result};
use crate::metrics::{evaluate, EvalOptions, EvalReport};
use crate::rng::substream;
use crate::training::{train_with, EpochRecord};
use crate::transceiver::{read_checkpoint, reconstruct, write_checkpoint, PassOptions, TransceiverParams, Variant};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RunMode {
    /// Train every variant from scratch.
    Train,
    /// Evaluate checkpoints left by an earlier `Train` run.
    LoadCheckpoints,
}

#[derive(Clone, Debug)]
pub struct VariantOutcome {
    pub params: TransceiverParams,
    pub report: EvalReport,
    /// Empty when loaded from a checkpoint.
    pub history: Vec<EpochRecord>,
}

#[derive(Clone, Debug)]
pub struct ExperimentOutcome {
    pub dir: PathBuf,
    pub variants: Vec<VariantOutcome>,
}

impl ExperimentOutcome {
    pub fn report(&self, v: Variant) -> Option<&EvalReport> {
        self.variants.iter().map(|o| &o.report).find(|r| r.variant == v)
    }
}

#[derive(Serialize)]
struct DatasetRecord {
    source: DatasetSource,
    split: &'static str,
    path: String,
    sha256: String,
    images: usize,
}

#[derive(Serialize)]
struct Manifest {
    package: &'static str,
    version: &'static str,
    seed: u64,
    config_sha256: String,
    datasets: Vec<DatasetRecord>,
    /// SHA-256 of each reproducible artifact, keyed by path relative to the run.
    artifacts: BTreeMap<String, String>,
}

/// Train or test images of `sources`, loading each file once.
struct Data {
    dir: PathBuf,
    loaded: BTreeMap<(DatasetSource, bool), ImageSet>,
    records: Vec<DatasetRecord>,
}

impl Data {
    fn new(dir: &Path) -> Self {
        Data {
            dir: dir.to_path_buf(),
            loaded: BTreeMap::new(),
            records: Vec::new(),
        }
    }

    fn sets(&mut self, sources: &[DatasetSource], split: Split, images: usize) -> Result<Vec<ImageSet>> {
        sources
            .iter()
            .map(|&src| {
                let key = (src, split == Split::Train);
                if !self.loaded.contains_key(&key) {
                    let path = src.image_path(&self.dir, split);
                    if !path.exists() {
                        return Err(Error::config(
                            "data.dir",
                            format!("{} not found (run `semcom fetch-data`)", path.display()),
                        ));
                    }
                    let set = load_idx_images(&path, Some(src))?.take(images);
                    self.records.push(DatasetRecord {
                        source: src,
                        split: if split == Split::Train { "train" } else { "test" },
                        path: path.display().to_string(),
                        sha256: file_sha256(&path)?,
                        images: set.len(),
                    });
                    self.loaded.insert(key, set);
                }
                let set = &self.loaded[&key];
                if set.len() < images {
                    return Err(Error::config(
                        if split == Split::Train { "train.images" } else { "eval.images" },
                        format!("{src} has only {} images", set.len()),
                    ));
                }
                Ok(set.clone())
            })
            .collect()
    }
}

fn sha256_bytes(b: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    Sha256::digest(b).iter().map(|x| format!("{x:02x}")).collect()
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<String> {
    fs::write(path, bytes)?;
    Ok(sha256_bytes(bytes))
}

pub fn eval_options(cfg: &ExperimentConfig, snr_db: &[f64]) -> EvalOptions {
    EvalOptions {
        snr_db: snr_db.to_vec(),
        trials: cfg.eval.trials,
        batch_size: cfg.eval.batch_size,
        pass: cfg.pass_options(),
        seed: cfg.seed,
    }
}

/// Trains (or loads) one variant in `dir` and evaluates it at `snr_db`.
fn run_variant(
    cfg: &ExperimentConfig,
    variant: Variant,
    users: usize,
    train: &[ImageSet],
    test: &[ImageSet],
    snr_db: &[f64],
    dir: &Path,
    mode: RunMode,
    artifacts: &mut BTreeMap<String, String>,
    rel: &str,
) -> Result<VariantOutcome> {
    fs::create_dir_all(dir)?;
    let ckpt_path = dir.join("model.ckpt");
    let (params, history) = match mode {
        RunMode::Train => {
            let tc = cfg.train_config(variant, users);
            let mut log = BufWriter::new(File::create(dir.join("train_log.csv"))?);
            writeln!(log, "{}", EpochRecord::csv_header(users))?;
            let every = cfg.train.checkpoint_every;
            let mut saved = Vec::new();
            let (params, state) = train_with(&tc, train, &mut |rec, p| {
                writeln!(log, "{}", rec.csv_row())?;
                log.flush()?;
                if every > 0 && rec.epoch % every == 0 && rec.epoch < tc.epochs {
                    let name = format!("checkpoint_epoch_{:04}.ckpt", rec.epoch);
                    let mut buf = Vec::new();
                    write_checkpoint(&mut buf, p)?;
                    saved.push((name.clone(), write_file(&dir.join(&name), &buf)?));
                }
                Ok(())
            })?;
            for (name, hash) in saved {
                artifacts.insert(format!("{rel}/{name}"), hash);
            }
            let mut buf = Vec::new();
            write_checkpoint(&mut buf, &params)?;
            artifacts.insert(format!("{rel}/model.ckpt"), write_file(&ckpt_path, &buf)?);
            (params, state.history)
        }
        RunMode::LoadCheckpoints => {
            let params = read_checkpoint(std::io::BufReader::new(File::open(&ckpt_path)?))?;
            if params.variant != variant || params.dims != cfg.dims(users) {
                return Err(Error::Checkpoint(format!(
                    "{} holds a {} model that does not match the configuration",
                    ckpt_path.display(),
                    params.variant
                )));
            }
            artifacts.insert(format!("{rel}/model.ckpt"), file_sha256(&ckpt_path)?);
            (params, Vec::new())
        }
    };
    let mut report = evaluate(&params, test, &eval_options(cfg, snr_db))?;
    report.checkpoint = artifacts[&format!("{rel}/model.ckpt")].clone();
    artifacts.insert(format!("{rel}/curve.csv"), write_file(&dir.join("curve.csv"), report.to_csv().as_bytes())?);
    log::info!("{variant}: evaluated {} rows", report.rows.len());
    Ok(VariantOutcome { params, report, history })
}

fn write_manifest(dir: &Path, cfg: &ExperimentConfig, data: Data, artifacts: BTreeMap<String, String>) -> Result<()> {
    let m = Manifest {
        package: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        seed: cfg.seed,
        config_sha256: cfg.hash(),
        datasets: data.records,
        artifacts,
    };
    let text = toml::to_string(&m).map_err(|e| Error::Checkpoint(format!("manifest: {e}")))?;
    fs::write(dir.join("manifest.toml"), text)?;
    Ok(())
}

/// Trains every configured variant, evaluates it over `eval.snr_db` and
/// writes per-variant logs, checkpoints and curves plus a manifest.
///
/// Layout under `out_dir`: `config.toml`, `manifest.toml`, `curves.csv`
/// and `<variant>/{train_log.csv, model.ckpt, curve.csv}`.
pub fn run_experiment(cfg: &ExperimentConfig, mode: RunMode) -> Result<ExperimentOutcome> {
    cfg.validate()?;
    let dir = cfg.out_dir.clone();
    fs::create_dir_all(&dir)?;
    fs::write(dir.join("config.toml"), cfg.to_toml())?;
    let users = cfg.model.users;
    let sources = cfg.user_datasets(users)?;
    let mut data = Data::new(&cfg.data.dir);
    let train = match mode {
        RunMode::Train => data.sets(&sources, Split::Train, cfg.train.images)?,
        RunMode::LoadCheckpoints => Vec::new(),
    };
    let test = data.sets(&sources, Split::Test, cfg.eval.images)?;
    let mut artifacts = BTreeMap::new();
    let mut variants = Vec::new();
    for &v in &cfg.variants {
        log::info!("variant {v}");
        variants.push(run_variant(
            cfg,
            v,
            users,
            &train,
            &test,
            &cfg.eval.snr_db,
            &dir.join(v.as_str()),
            mode,
            &mut artifacts,
            v.as_str(),
        )?);
    }
    let mut all = String::from(EvalReport::CSV_HEADER);
    all.push('\n');
    for o in &variants {
        all.extend(o.report.to_csv().lines().skip(1).map(|l| format!("{l}\n")));
    }
    artifacts.insert("curves.csv".into(), write_file(&dir.join("curves.csv"), all.as_bytes())?);
    write_manifest(&dir, cfg, data, artifacts)?;
    Ok(ExperimentOutcome { dir, variants })
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub variant: Variant,
    pub users: usize,
    pub snr_db: f64,
    /// Mean SSIM averaged over all users.
    pub mean_ssim: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepReport {
    pub seed: u64,
    pub trials: usize,
    pub rows: Vec<SweepRow>,
}

impl SweepReport {
    pub const CSV_HEADER: &'static str = "variant,users,snr_db,mean_ssim,trials,seed";

    pub fn to_csv(&self) -> String {
        let mut s = format!("{}\n", Self::CSV_HEADER);
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{:.8e},{:.8e},{},{}\n",
                r.variant, r.users, r.snr_db, r.mean_ssim, self.trials, self.seed
            ));
        }
        s
    }

    pub fn mean(&self, variant: Variant, users: usize, snr_db: f64) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.variant == variant && r.users == users && r.snr_db == snr_db)
            .map(|r| r.mean_ssim)
    }
}

/// Trains fresh models for every user count in `sweep.users` and variant in
/// `sweep.variants`, all users on `sweep.dataset`, and records the
/// user-averaged SSIM at `sweep.snr_db`. Output goes to
/// `out_dir/sweep_users/` with `sweep_users.csv` at its top.
pub fn sweep_users(cfg: &ExperimentConfig) -> Result<SweepReport> {
    cfg.validate()?;
    let root = cfg.out_dir.join("sweep_users");
    fs::create_dir_all(&root)?;
    let mut data = Data::new(&cfg.data.dir);
    let mut artifacts = BTreeMap::new();
    let mut rows = Vec::new();
    for &k in &cfg.sweep.users {
        let sources = vec![cfg.sweep.dataset; k];
        let train = data.sets(&sources, Split::Train, cfg.train.images)?;
        let test = data.sets(&sources, Split::Test, cfg.eval.images)?;
        for &v in &cfg.sweep.variants {
            log::info!("sweep K={k} {v}");
            let rel = format!("K{k}/{v}");
            let o = run_variant(cfg, v, k, &train, &test, &cfg.sweep.snr_db, &root.join(&rel), RunMode::Train, &mut artifacts, &rel)?;
            for &snr in &cfg.sweep.snr_db {
                rows.push(SweepRow {
                    variant: v,
                    users: k,
                    snr_db: snr,
                    mean_ssim: o.report.user_average(snr).expect("evaluated at this SNR"),
                });
            }
        }
    }
    let report = SweepReport {
        seed: cfg.seed,
        trials: cfg.eval.trials,
        rows,
    };
    artifacts.insert("sweep_users.csv".into(), write_file(&root.join("sweep_users.csv"), report.to_csv().as_bytes())?);
    write_manifest(&root, cfg, data, artifacts)?;
    Ok(report)
}

/// Writes `u{k}_i{idx}_{original,reconstruction,pair}.pgm` for every user
/// `k` and test index, all users transmitting image `idx` of their own set
/// over one shared fading draw per index at `snr_db`.
pub fn dump_reconstructions(
    params: &TransceiverParams,
    test: &[ImageSet],
    indices: &[usize],
    snr_db: f64,
    seed: u64,
    pass: &PassOptions,
    out: &Path,
) -> Result<Vec<PathBuf>> {
    let dims = params.dims;
    if test.len() != dims.users {
        return Err(Error::Dimension(format!("{} test sets for {} users", test.len(), dims.users)));
    }
    if let Some(&i) = indices.iter().find(|&&i| test.iter().any(|s| i >= s.len())) {
        return Err(Error::Dimension(format!("image index {i} out of range")));
    }
    if indices.is_empty() {
        return Ok(Vec::new());
    }
    fs::create_dir_all(out)?;
    let var = noise_variance_from_snr(snr_db, pass.power);
    let mut ch = substream(seed, "reconstruct-channel", &[]);
    let channels: Vec<_> = indices
        .iter()
        .map(|_| sample_channel(dims.users, dims.tx, dims.rx, var, &mut ch))
        .collect();
    let images: Vec<_> = test.iter().map(|s| s.gather(indices)).collect();
    let recon = reconstruct(params, &images, &channels, pass, &mut substream(seed, "reconstruct-noise", &[]))?;
    let mut written = Vec::new();
    for (k, (orig, rec)) in images.iter().zip(&recon).enumerate() {
        for (row, &idx) in indices.iter().enumerate() {
            let a = to_bytes(orig.row(row));
            let b = to_bytes(rec.row(row));
            let stem = format!("u{}_i{idx}", k + 1);
            for (name, w, px) in [
                ("original", 28, a.clone()),
                ("reconstruction", 28, b.clone()),
                ("pair", 56, side_by_side(&a, &b)),
            ] {
                let path = out.join(format!("{stem}_{name}.pgm"));
                write_pgm(&path, w, 28, &px)?;
                written.push(path);
            }
        }
    }
    Ok(written)
}
