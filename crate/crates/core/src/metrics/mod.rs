//! Image similarity and Monte-Carlo evaluation of trained transceivers.

mod evaluate;
mod ssim;

pub use evaluate::{evaluate, EvalOptions, EvalReport, EvalRow};
pub use ssim::{ssim, SsimParams};
