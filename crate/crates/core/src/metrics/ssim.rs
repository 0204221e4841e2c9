use crate::error::{Error, Result};

/// Dynamic range and stabilizers for [`ssim`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SsimParams {
    pub range: f64,
    pub c1: f64,
    pub c2: f64,
}

impl SsimParams {
    /// `C1 = (0.01 L)²`, `C2 = (0.03 L)²`.
    pub fn with_range(range: f64) -> Self {
        SsimParams {
            range,
            c1: (0.01 * range).powi(2),
            c2: (0.03 * range).powi(2),
        }
    }
}

impl Default for SsimParams {
    /// `L = 2` for images in `[−1, 1]`.
    fn default() -> Self {
        Self::with_range(2.0)
    }
}

/// Structural similarity over whole-image statistics.
///
/// Inputs in `[−1, 1]` are shifted to `[0, L]` by `x + 1` before the means
/// are taken; variances and covariance use `1/N`.
pub fn ssim(a: &[f64], b: &[f64], p: &SsimParams) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::shape("ssim", &[a.len()], &[b.len()]));
    }
    if a.is_empty() {
        return Err(Error::DegenerateInput("ssim of empty images".into()));
    }
    let n = a.len() as f64;
    let shift = p.range / 2.0;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut va, mut vb, mut cov) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        va += dx * dx;
        vb += dy * dy;
        cov += dx * dy;
    }
    let (va, vb, cov) = (va / n, vb / n, cov / n);
    let (ma, mb) = (ma + shift, mb + shift);
    Ok((2.0 * ma * mb + p.c1) * (2.0 * cov + p.c2) / ((ma * ma + mb * mb + p.c1) * (va + vb + p.c2)))
}
