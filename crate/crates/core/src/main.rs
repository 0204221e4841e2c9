use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use semcom::datasets::{fetch_source, DatasetSource, Split, load_idx_images};
use semcom::harness::{dump_reconstructions, run_experiment, sweep_users, ExperimentConfig, Preset, RunMode};
use semcom::transceiver::{read_checkpoint, Variant};
use semcom::{gradcheck, Error, Result};

#[derive(Parser)]
#[command(name = "semcom", version, about = "Learned image transmission over MIMO interference channels")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// TOML file overriding the preset.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for evaluation (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true, default_value = "desk", value_parser = ["desk", "paper"])]
    preset: String,
}

#[derive(Subcommand)]
enum Command {
    /// Train and evaluate every configured variant.
    Train,
    /// Evaluate checkpoints from an earlier `train` run.
    Evaluate,
    /// Train csir/csitr for several user counts.
    SweepUsers,
    /// Dump original and reconstructed test images as PGM.
    Reconstruct {
        /// Checkpoint to use instead of `<out>/<variant>/model.ckpt` for each variant.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        snr_db: Option<f64>,
        /// Comma-separated test indices.
        #[arg(long, value_delimiter = ',')]
        indices: Option<Vec<usize>>,
    },
    /// Download the image files into the data directory.
    FetchData {
        /// Mirror URL prefix or local directory; repeatable. Defaults to public mirrors.
        #[arg(long)]
        mirror: Vec<String>,
        /// Only this dataset.
        #[arg(long)]
        dataset: Option<String>,
    },
    /// Finite-difference check of every differentiable operation.
    Gradcheck {
        #[arg(long, default_value_t = 10)]
        points: usize,
    },
    /// Print the resolved configuration.
    ShowConfig,
}

fn load_config(g: &Global) -> Result<ExperimentConfig> {
    let preset: Preset = g.preset.parse()?;
    let mut cfg = ExperimentConfig::load(preset, g.config.as_deref())?;
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    if let Some(o) = &g.out {
        cfg.out_dir = o.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.global.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::config("threads", e.to_string()))?;
    }
    match cli.command {
        Command::Gradcheck { points } => {
            let seed = cli.global.seed.unwrap_or(1);
            let results = gradcheck::run(seed, points)?;
            let mut ok = true;
            for r in &results {
                println!("{:<22} {:>3} points  max rel err {:.3e}  {}", r.name, r.points, r.max_rel_err, if r.passed() { "ok" } else { "FAIL" });
                ok &= r.passed();
            }
            if !ok {
                return Err(Error::Numerical {
                    iteration: 0,
                    detail: format!("gradient check above tolerance {:e}", gradcheck::TOLERANCE),
                });
            }
        }
        Command::ShowConfig => print!("{}", load_config(&cli.global)?.to_toml()),
        Command::Train | Command::Evaluate => {
            let cfg = load_config(&cli.global)?;
            let mode = if matches!(cli.command, Command::Train) { RunMode::Train } else { RunMode::LoadCheckpoints };
            let out = run_experiment(&cfg, mode)?;
            for o in &out.variants {
                for &snr in &cfg.eval.snr_db {
                    println!("{:<18} {:>6.1} dB  mean SSIM {:.4}", o.report.variant, snr, o.report.user_average(snr).unwrap_or(f64::NAN));
                }
            }
            println!("wrote {}", out.dir.display());
        }
        Command::SweepUsers => {
            let cfg = load_config(&cli.global)?;
            print!("{}", sweep_users(&cfg)?.to_csv());
        }
        Command::Reconstruct { checkpoint, snr_db, indices } => {
            let cfg = load_config(&cli.global)?;
            let snr = snr_db.unwrap_or(cfg.reconstruct.snr_db);
            let indices = indices.unwrap_or_else(|| cfg.reconstruct.indices.clone());
            let paths: Vec<(Variant, PathBuf)> = match checkpoint {
                Some(p) => {
                    let params = read_checkpoint(std::io::BufReader::new(std::fs::File::open(&p)?))?;
                    vec![(params.variant, p)]
                }
                None => cfg.variants.iter().map(|&v| (v, cfg.out_dir.join(v.as_str()).join("model.ckpt"))).collect(),
            };
            for (v, path) in paths {
                let params = read_checkpoint(std::io::BufReader::new(std::fs::File::open(&path)?))?;
                let sources = cfg.user_datasets(params.dims.users)?;
                let test = sources
                    .iter()
                    .map(|s| load_idx_images(s.image_path(&cfg.data.dir, Split::Test), Some(*s)))
                    .collect::<Result<Vec<_>>>()?;
                let out = cfg.out_dir.join("reconstructions").join(v.as_str());
                let files = dump_reconstructions(&params, &test, &indices, snr, cfg.seed, &cfg.pass_options(), &out)?;
                println!("{v}: {} files in {}", files.len(), out.display());
            }
        }
        Command::FetchData { mirror, dataset } => {
            let cfg = load_config(&cli.global)?;
            let sources = match dataset {
                Some(d) => vec![d.parse::<DatasetSource>()?],
                None => vec![DatasetSource::Mnist, DatasetSource::FashionMnist],
            };
            for s in sources {
                let mirrors = if mirror.is_empty() {
                    s.default_mirrors().iter().map(|m| m.to_string()).collect()
                } else {
                    mirror.clone()
                };
                for o in fetch_source(s, &cfg.data.dir, &mirrors)? {
                    println!("{} md5 {}{}", o.path.display(), o.md5, if o.transferred { "" } else { " (already present)" });
                }
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
