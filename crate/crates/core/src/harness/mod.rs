//! Composes training and evaluation into complete experiments.

mod config;
mod experiment;
mod pgm;

pub use config::{
    DataSection, EvalSection, ExperimentConfig, ModelSection, PrecoderSection, Preset, ReconstructSection, SweepSection,
    TrainSection,
};
pub use experiment::{
    dump_reconstructions, eval_options, run_experiment, sweep_users, ExperimentOutcome, RunMode, SweepReport, SweepRow,
    VariantOutcome,
};
pub use pgm::{encode_pgm, side_by_side, to_bytes, write_pgm};
