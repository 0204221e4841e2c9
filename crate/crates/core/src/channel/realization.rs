use std::io::{Read, Write};

use rand::Rng;
use rand_distr::StandardNormal;

use super::complex::ComplexMatrix;
use crate::error::{Error, Result};

/// One draw of the K-user MIMO interference channel: `H_kj` for every
/// receiver `k` and transmitter `j`, plus the per-entry complex noise variance.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelRealization {
    users: usize,
    tx: usize,
    rx: usize,
    links: Vec<ComplexMatrix>,
    noise_var: f64,
}

/// Transmit power constraint and SNR operating point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseSpec {
    pub power: f64,
    pub snr_db: f64,
}

impl NoiseSpec {
    pub fn noise_var(&self) -> f64 {
        noise_variance_from_snr(self.snr_db, self.power)
    }
}

/// `σ² = P · 10^(−snr_db/10)`: SNR is per complex symbol per receive antenna.
pub fn noise_variance_from_snr(snr_db: f64, power: f64) -> f64 {
    power * 10f64.powf(-snr_db / 10.0)
}

/// One circularly-symmetric `CN(0, var)` sample.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, var: f64) -> (f64, f64) {
    let s = (0.5 * var).sqrt();
    let a: f64 = rng.sample(StandardNormal);
    let b: f64 = rng.sample(StandardNormal);
    (s * a, s * b)
}

/// Flat Rayleigh draw: every entry of every `H_kj` i.i.d. `CN(0, 1)`.
pub fn sample_channel<R: Rng + ?Sized>(users: usize, tx: usize, rx: usize, noise_var: f64, rng: &mut R) -> ChannelRealization {
    let links = (0..users * users)
        .map(|_| {
            let mut m = ComplexMatrix::zeros(rx, tx);
            for r in 0..rx {
                for c in 0..tx {
                    m.set(r, c, complex_gaussian(rng, 1.0));
                }
            }
            m
        })
        .collect();
    ChannelRealization {
        users,
        tx,
        rx,
        links,
        noise_var,
    }
}

/// `2 K² N_t N_r`.
pub fn csi_len(users: usize, tx: usize, rx: usize) -> usize {
    2 * users * users * tx * rx
}

impl ChannelRealization {
    pub fn new(users: usize, tx: usize, rx: usize, links: Vec<ComplexMatrix>, noise_var: f64) -> Result<Self> {
        if users == 0 || tx == 0 || rx == 0 {
            return Err(Error::Dimension("users and antenna counts must be ≥ 1".into()));
        }
        if links.len() != users * users {
            return Err(Error::Dimension(format!("{} users need {} link matrices, got {}", users, users * users, links.len())));
        }
        if let Some(m) = links.iter().find(|m| m.rows() != rx || m.cols() != tx) {
            return Err(Error::Dimension(format!("link is {}x{}, expected {rx}x{tx}", m.rows(), m.cols())));
        }
        if !(noise_var >= 0.0) {
            return Err(Error::Dimension(format!("noise variance {noise_var} must be ≥ 0")));
        }
        Ok(Self {
            users,
            tx,
            rx,
            links,
            noise_var,
        })
    }

    /// Every direct link the identity, cross links zero (requires `tx == rx`).
    pub fn isolated_identity(users: usize, n: usize, noise_var: f64) -> Self {
        let links = (0..users * users)
            .map(|i| if i / users == i % users { ComplexMatrix::identity(n) } else { ComplexMatrix::zeros(n, n) })
            .collect();
        Self {
            users,
            tx: n,
            rx: n,
            links,
            noise_var,
        }
    }

    pub fn users(&self) -> usize {
        self.users
    }

    pub fn tx(&self) -> usize {
        self.tx
    }

    pub fn rx(&self) -> usize {
        self.rx
    }

    pub fn noise_var(&self) -> f64 {
        self.noise_var
    }

    pub fn with_noise_var(mut self, noise_var: f64) -> Self {
        self.noise_var = noise_var;
        self
    }

    /// `H_kj`: transmitter `j` to receiver `k` (0-based).
    pub fn link(&self, k: usize, j: usize) -> &ComplexMatrix {
        &self.links[k * self.users + j]
    }

    pub fn links(&self) -> &[ComplexMatrix] {
        &self.links
    }

    pub fn csi_len(&self) -> usize {
        csi_len(self.users, self.tx, self.rx)
    }

    /// For k, then j: row-major real parts of `H_kj`, then its imaginary parts.
    pub fn flatten_csi(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.csi_len());
        for m in &self.links {
            v.extend_from_slice(m.re());
            v.extend_from_slice(m.im());
        }
        v
    }

    pub fn unflatten_csi(users: usize, tx: usize, rx: usize, csi: &[f64], noise_var: f64) -> Result<Self> {
        if csi.len() != csi_len(users, tx, rx) {
            return Err(Error::Dimension(format!(
                "CSI vector has {} values, expected {}",
                csi.len(),
                csi_len(users, tx, rx)
            )));
        }
        let links = csi
            .chunks_exact(2 * tx * rx)
            .map(|chunk| ComplexMatrix::unpack(rx, tx, chunk))
            .collect::<Result<Vec<_>>>()?;
        Self::new(users, tx, rx, links, noise_var)
    }

    /// Little-endian record: `u32` K, N_t, N_r, then the `flatten_csi`
    /// vector as `f64`. The noise variance is not part of the record.
    pub fn write_record<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for d in [self.users, self.tx, self.rx] {
            w.write_all(&(d as u32).to_le_bytes())?;
        }
        for v in self.flatten_csi() {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_record<R: Read>(mut r: R, noise_var: f64) -> Result<Self> {
        let mut head = [0u8; 12];
        r.read_exact(&mut head)?;
        let dim = |i: usize| u32::from_le_bytes(head[4 * i..4 * i + 4].try_into().unwrap()) as usize;
        let (users, tx, rx) = (dim(0), dim(1), dim(2));
        let n = csi_len(users, tx, rx);
        let mut payload = vec![0u8; n * 8];
        r.read_exact(&mut payload)?;
        let csi: Vec<f64> = payload
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
            .collect();
        Self::unflatten_csi(users, tx, rx, &csi, noise_var)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;

    #[test]
    fn two_user_two_antenna_shapes() {
        let h = sample_channel(2, 2, 2, 1.0, &mut substream(1, "c", &[]));
        assert_eq!(h.links().len(), 4);
        assert!(h.links().iter().all(|m| m.rows() == 2 && m.cols() == 2));
        assert_eq!(h.flatten_csi().len(), 32);
    }

    #[test]
    fn seeded_draw_repeats() {
        let a = sample_channel(3, 2, 4, 0.5, &mut substream(9, "c", &[]));
        let b = sample_channel(3, 2, 4, 0.5, &mut substream(9, "c", &[]));
        assert_eq!(a, b);
    }

    #[test]
    fn entry_variance_is_unit() {
        let mut rng = substream(2, "c", &[]);
        let mut acc = 0.0;
        let draws = 100_000;
        for _ in 0..draws / 4 {
            let h = sample_channel(1, 2, 2, 0.0, &mut rng);
            acc += h.link(0, 0).frobenius_sq();
        }
        let var = acc / draws as f64;
        assert!((0.98..=1.02).contains(&var), "{var}");
    }

    #[test]
    fn snr_mapping() {
        assert_eq!(noise_variance_from_snr(0.0, 1.0), 1.0);
        assert!((noise_variance_from_snr(10.0, 1.0) - 0.1).abs() < 1e-15);
        assert!((noise_variance_from_snr(-10.0, 1.0) - 10.0).abs() < 1e-12);
        assert!((NoiseSpec { power: 2.0, snr_db: 3.0 }.noise_var() - 2.0 * 10f64.powf(-0.3)).abs() < 1e-15);
    }

    #[test]
    fn csi_layout_and_zero_channel() {
        let zero = ChannelRealization::new(2, 2, 2, vec![ComplexMatrix::zeros(2, 2); 4], 0.0).unwrap();
        assert!(zero.flatten_csi().iter().all(|v| *v == 0.0));

        let mut links = vec![ComplexMatrix::zeros(1, 2); 4];
        links[1].set(0, 1, (5.0, -7.0)); // H_12, entry (0,1)
        let h = ChannelRealization::new(2, 2, 1, links, 0.0).unwrap();
        let v = h.flatten_csi();
        // matrix 1 occupies [4..8): re (2 values) then im (2 values)
        assert_eq!(&v[4..8], &[0.0, 5.0, 0.0, -7.0]);
    }

    #[test]
    fn record_round_trip() {
        let h = sample_channel(2, 3, 2, 0.25, &mut substream(4, "c", &[]));
        let mut buf = Vec::new();
        h.write_record(&mut buf).unwrap();
        assert_eq!(buf.len(), 12 + 8 * 2 * 4 * 6);
        assert_eq!(&buf[..4], &2u32.to_le_bytes());
        let back = ChannelRealization::read_record(&buf[..], 0.25).unwrap();
        assert_eq!(back, h);
        assert!(ChannelRealization::read_record(&buf[..20], 0.25).is_err());
    }

    #[test]
    fn rejects_bad_construction() {
        assert!(ChannelRealization::new(2, 2, 2, vec![ComplexMatrix::zeros(2, 2); 3], 0.0).is_err());
        assert!(ChannelRealization::new(1, 2, 2, vec![ComplexMatrix::zeros(2, 2)], -1.0).is_err());
    }
}
