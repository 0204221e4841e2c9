//! MNIST-style image sets: loading, normalization and shuffled batches.
//!
//! Pixels are kept as bytes and mapped to `[−1, 1]` by `x/127.5 − 1` on the
//! way out. Labels are never read.

mod batch;
mod fetch;
mod idx;

pub use batch::{batch_iter, BatchIter};
pub use fetch::{fetch, fetch_source, file_sha256, md5_hex, FetchOutcome};
pub use idx::{encode_idx_images, load_idx_images, read_maybe_gzip, IDX_IMAGES_MAGIC};

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};

pub const SIDE: usize = 28;
pub const PIXELS: usize = SIDE * SIDE;

pub fn normalize(byte: u8) -> f64 {
    byte as f64 / 127.5 - 1.0
}

/// Inverse of [`normalize`], clamped and rounded to the nearest byte.
pub fn denormalize(x: f64) -> u8 {
    ((x + 1.0) * 127.5).round().clamp(0.0, 255.0) as u8
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetSource {
    Mnist,
    FashionMnist,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl DatasetSource {
    pub fn as_str(self) -> &'static str {
        match self {
            DatasetSource::Mnist => "mnist",
            DatasetSource::FashionMnist => "fashion_mnist",
        }
    }

    /// Standard image file name for a split.
    pub fn image_file(self, split: Split) -> &'static str {
        match split {
            Split::Train => "train-images-idx3-ubyte.gz",
            Split::Test => "t10k-images-idx3-ubyte.gz",
        }
    }

    /// `<data_dir>/<source>/<file>`.
    pub fn image_path(self, data_dir: &Path, split: Split) -> PathBuf {
        data_dir.join(self.as_str()).join(self.image_file(split))
    }

    /// Public mirrors tried in order by the fetch helper.
    pub fn default_mirrors(self) -> &'static [&'static str] {
        match self {
            DatasetSource::Mnist => &[
                "https://ossci-datasets.s3.amazonaws.com/mnist/",
                "https://storage.googleapis.com/cvdf-datasets/mnist/",
            ],
            DatasetSource::FashionMnist => &[
                "http://fashion-mnist.s3-website.eu-central-1.amazonaws.com/",
                "https://github.com/zalandoresearch/fashion-mnist/raw/master/data/fashion/",
            ],
        }
    }

    /// MD5 of the decompressed image file, where pinned.
    pub fn image_md5(self, split: Split) -> Option<&'static str> {
        match (self, split) {
            (DatasetSource::Mnist, Split::Train) => Some("6bbc9ace898e44ae57da46a324031adb"),
            (DatasetSource::Mnist, Split::Test) => Some("2646ac647ad5339dbf082846283269ea"),
            (DatasetSource::FashionMnist, _) => None,
        }
    }
}

impl fmt::Display for DatasetSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DatasetSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mnist" => Ok(DatasetSource::Mnist),
            "fashion_mnist" | "fashion-mnist" => Ok(DatasetSource::FashionMnist),
            _ => Err(Error::config("dataset", format!("unknown dataset `{s}`"))),
        }
    }
}

/// Immutable set of 28×28 grayscale images.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ImageSet {
    pixels: Vec<u8>,
    source: Option<DatasetSource>,
}

impl ImageSet {
    /// `pixels` must hold a whole number of 784-byte images.
    pub fn from_bytes(pixels: Vec<u8>, source: Option<DatasetSource>) -> Result<Self> {
        if pixels.len() % PIXELS != 0 {
            return Err(Error::Dimension(format!("{} bytes is not a multiple of {PIXELS}", pixels.len())));
        }
        Ok(ImageSet { pixels, source })
    }

    pub fn len(&self) -> usize {
        self.pixels.len() / PIXELS
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    pub fn source(&self) -> Option<DatasetSource> {
        self.source
    }

    pub fn bytes(&self) -> &[u8] {
        &self.pixels
    }

    pub fn image_bytes(&self, i: usize) -> &[u8] {
        &self.pixels[i * PIXELS..(i + 1) * PIXELS]
    }

    /// Image `i` normalized to `[−1, 1]`.
    pub fn image(&self, i: usize) -> Vec<f64> {
        self.image_bytes(i).iter().map(|&b| normalize(b)).collect()
    }

    /// First `n` images (all of them if `n` exceeds the count).
    pub fn take(&self, n: usize) -> ImageSet {
        let n = n.min(self.len());
        ImageSet {
            pixels: self.pixels[..n * PIXELS].to_vec(),
            source: self.source,
        }
    }

    /// Rows `indices` stacked into a `[len × 784]` tensor.
    pub fn gather(&self, indices: &[usize]) -> crate::diffcore::Tensor {
        let mut data = Vec::with_capacity(indices.len() * PIXELS);
        for &i in indices {
            data.extend(self.image_bytes(i).iter().map(|&b| normalize(b)));
        }
        crate::diffcore::Tensor::matrix(indices.len(), PIXELS, data).expect("row width is fixed")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn endpoints() {
        assert_eq!(normalize(0), -1.0);
        assert_eq!(normalize(255), 1.0);
        assert_eq!(denormalize(-1.0), 0);
        assert_eq!(denormalize(1.0), 255);
        assert_eq!(denormalize(3.0), 255);
    }

    #[test]
    fn take_and_gather() {
        let set = ImageSet::from_bytes((0..3 * PIXELS).map(|i| (i / PIXELS) as u8 * 100).collect(), None).unwrap();
        assert_eq!(set.take(2).len(), 2);
        assert_eq!(set.take(10).len(), 3);
        let t = set.gather(&[2, 0]);
        assert_eq!(t.shape(), [2, PIXELS]);
        assert_eq!(t.row(0)[0], normalize(200));
        assert_eq!(t.row(1)[5], -1.0);
        assert!(ImageSet::from_bytes(vec![0; 10], None).is_err());
    }

    proptest! {
        #[test]
        fn denormalize_inverts_normalize(b in any::<u8>()) {
            prop_assert_eq!(denormalize(normalize(b)), b);
            let v = normalize(b);
            prop_assert!((-1.0..=1.0).contains(&v));
        }
    }
}
