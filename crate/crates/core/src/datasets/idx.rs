//! IDX image files (`magic 0x00000803`, big-endian `count, rows, cols`,
//! then one unsigned byte per pixel), plain or gzip-compressed.

use std::fs::File;
use std::io::{BufReader, Read};
use std::path::Path;

use flate2::read::GzDecoder;

use super::{DatasetSource, ImageSet, SIDE};
use crate::error::{Error, Result};

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;

/// Reads a file fully, inflating it when it starts with the gzip magic bytes.
pub fn read_maybe_gzip(path: &Path) -> Result<Vec<u8>> {
    let mut raw = Vec::new();
    BufReader::new(File::open(path)?).read_to_end(&mut raw)?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(&raw[..]).read_to_end(&mut out).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            offset: 0,
            detail: format!("gzip stream: {e}"),
        })?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

/// Loads a 28×28 IDX image file. Byte offsets in errors refer to the
/// decompressed stream.
pub fn load_idx_images(path: impl AsRef<Path>, source: Option<DatasetSource>) -> Result<ImageSet> {
    let path = path.as_ref();
    let bytes = read_maybe_gzip(path)?;
    parse_idx_images(&bytes, path, source)
}

pub(crate) fn parse_idx_images(bytes: &[u8], path: &Path, source: Option<DatasetSource>) -> Result<ImageSet> {
    let err = |offset: usize, detail: String| Error::Parse {
        path: path.to_path_buf(),
        offset: offset as u64,
        detail,
    };
    let word = |i: usize| -> Result<u32> {
        let at = 4 * i;
        bytes
            .get(at..at + 4)
            .map(|b| u32::from_be_bytes(b.try_into().unwrap()))
            .ok_or_else(|| err(bytes.len(), format!("truncated header, need 16 bytes, have {}", bytes.len())))
    };
    let magic = word(0)?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(err(0, format!("bad magic 0x{magic:08x}, expected 0x{IDX_IMAGES_MAGIC:08x}")));
    }
    let count = word(1)? as usize;
    let (rows, cols) = (word(2)? as usize, word(3)? as usize);
    if rows != SIDE {
        return Err(err(8, format!("expected {SIDE} rows, found {rows}")));
    }
    if cols != SIDE {
        return Err(err(12, format!("expected {SIDE} columns, found {cols}")));
    }
    let need = 16 + count * SIDE * SIDE;
    if bytes.len() < need {
        return Err(err(bytes.len(), format!("truncated: {count} images need {need} bytes, file has {}", bytes.len())));
    }
    if bytes.len() > need {
        return Err(err(need, format!("{} unexpected trailing bytes", bytes.len() - need)));
    }
    Ok(ImageSet::from_bytes(bytes[16..].to_vec(), source).expect("length checked"))
}

/// Serializes images back to (uncompressed) IDX.
pub fn encode_idx_images(set: &ImageSet) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + set.bytes().len());
    for w in [IDX_IMAGES_MAGIC, set.len() as u32, SIDE as u32, SIDE as u32] {
        out.extend_from_slice(&w.to_be_bytes());
    }
    out.extend_from_slice(set.bytes());
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn header(count: u32, rows: u32, cols: u32) -> Vec<u8> {
        [IDX_IMAGES_MAGIC, count, rows, cols].iter().flat_map(|w| w.to_be_bytes()).collect()
    }

    #[test]
    fn zero_and_full_bytes_map_to_the_ends() {
        let mut b = header(2, 28, 28);
        b.extend(std::iter::repeat_n(0u8, 784));
        b.extend(std::iter::repeat_n(255u8, 784));
        let set = parse_idx_images(&b, Path::new("x"), None).unwrap();
        assert_eq!(set.len(), 2);
        assert!(set.image(0).iter().all(|&v| v == -1.0));
        assert!(set.image(1).iter().all(|&v| v == 1.0));
    }

    #[test]
    fn errors_carry_offsets() {
        let mut bad = header(1, 28, 28);
        bad[3] = 0x01;
        let e = parse_idx_images(&bad, Path::new("f"), None).unwrap_err();
        assert!(matches!(e, Error::Parse { offset: 0, .. }), "{e}");

        let e = parse_idx_images(&header(1, 27, 28), Path::new("f"), None).unwrap_err();
        assert!(matches!(e, Error::Parse { offset: 8, .. }), "{e}");
        let e = parse_idx_images(&header(1, 28, 29), Path::new("f"), None).unwrap_err();
        assert!(matches!(e, Error::Parse { offset: 12, .. }), "{e}");

        let mut short = header(2, 28, 28);
        short.extend(vec![0u8; 784 + 10]);
        let e = parse_idx_images(&short, Path::new("f"), None).unwrap_err();
        assert!(matches!(e, Error::Parse { offset: 810, .. }), "{e}");

        let e = parse_idx_images(&[0, 0, 8], Path::new("f"), None).unwrap_err();
        assert!(matches!(e, Error::Parse { offset: 3, .. }), "{e}");
    }

    #[test]
    fn gzip_is_detected() {
        let mut b = header(1, 28, 28);
        b.extend((0..784).map(|i| (i % 256) as u8));
        let dir = tempfile::tempdir().unwrap();
        let plain = dir.path().join("a-idx3-ubyte");
        std::fs::write(&plain, &b).unwrap();
        let gz = dir.path().join("a-idx3-ubyte.gz");
        let mut enc = flate2::write::GzEncoder::new(File::create(&gz).unwrap(), flate2::Compression::fast());
        enc.write_all(&b).unwrap();
        enc.finish().unwrap();
        let x = load_idx_images(&plain, None).unwrap();
        let y = load_idx_images(&gz, None).unwrap();
        assert_eq!(x.bytes(), y.bytes());
        assert_eq!(encode_idx_images(&x), b);
    }
}
