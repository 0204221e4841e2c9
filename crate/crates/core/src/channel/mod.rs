//! K-user flat Rayleigh MIMO interference channel.

mod complex;
mod eigen;
mod layer;
mod precoder;
mod realization;

pub use complex::ComplexMatrix;
pub use eigen::{hermitian_eigen, symmetric_eigen, EigenFailure};
pub use layer::{apply_filtered_channel, apply_interference_channel};
pub use precoder::{
    design_precoders_filters, interference_leakage, random_orthonormal, PrecoderAlgorithm, PrecoderDesign,
    PrecoderOptions, PrecoderSet,
};
pub use realization::{
    complex_gaussian, csi_len, noise_variance_from_snr, sample_channel, ChannelRealization, NoiseSpec,
};
