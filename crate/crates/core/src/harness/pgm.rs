use std::io::Write;
use std::path::Path;

use crate::datasets::{denormalize, SIDE};
use crate::error::{Error, Result};

/// Binary greymap (`P5`, maxval 255).
pub fn encode_pgm(width: usize, height: usize, pixels: &[u8]) -> Result<Vec<u8>> {
    if pixels.len() != width * height {
        return Err(Error::Dimension(format!("{} pixels for a {width}×{height} image", pixels.len())));
    }
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(pixels);
    Ok(out)
}

pub fn write_pgm(path: &Path, width: usize, height: usize, pixels: &[u8]) -> Result<()> {
    let bytes = encode_pgm(width, height, pixels)?;
    std::fs::File::create(path)?.write_all(&bytes)?;
    Ok(())
}

/// 28×28 bytes from values in `[−1, 1]`.
pub fn to_bytes(image: &[f64]) -> Vec<u8> {
    image.iter().map(|&x| denormalize(x)).collect()
}

/// Two 28×28 images next to each other, 56 wide.
pub fn side_by_side(left: &[u8], right: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(2 * SIDE * SIDE);
    for r in 0..SIDE {
        out.extend_from_slice(&left[r * SIDE..(r + 1) * SIDE]);
        out.extend_from_slice(&right[r * SIDE..(r + 1) * SIDE]);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_and_layout() {
        let a = vec![0u8; 784];
        let b = vec![255u8; 784];
        let pair = side_by_side(&a, &b);
        let img = encode_pgm(56, 28, &pair).unwrap();
        assert!(img.starts_with(b"P5\n56 28\n255\n"));
        assert_eq!(img.len(), 13 + 56 * 28);
        assert_eq!(&pair[26..30], &[0, 0, 255, 255]);
        assert!(encode_pgm(28, 28, &pair).is_err());
        assert_eq!(to_bytes(&[-1.0, 0.0, 1.0]), [0, 128, 255]);
    }
}
