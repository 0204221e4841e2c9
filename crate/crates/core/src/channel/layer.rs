//! The channel as a fixed, differentiable layer on the tape.
//!
//! Channel matrices and noise are constants; gradients flow to every
//! user's transmitted symbols. Sample `b` of a batch uses `channels[b]`.

use rand::Rng;

use super::complex::ComplexMatrix;
use super::precoder::PrecoderSet;
use super::realization::{complex_gaussian, ChannelRealization};
use crate::diffcore::{MixMaps, Tape, Tensor, Var};
use crate::error::{Error, Result};

fn check_batch(tape: &Tape, xs: &[Var], channels: &[ChannelRealization], rows_in: usize, block_len: usize) -> Result<()> {
    let first = channels
        .first()
        .ok_or_else(|| Error::Dimension("empty batch of channel realizations".into()))?;
    let (k_users, nt, nr) = (first.users(), first.tx(), first.rx());
    if channels.iter().any(|h| (h.users(), h.tx(), h.rx()) != (k_users, nt, nr)) {
        return Err(Error::Dimension("channel realizations in one batch differ in shape".into()));
    }
    if xs.len() != k_users {
        return Err(Error::Dimension(format!("{} symbol blocks for {} users", xs.len(), k_users)));
    }
    let want = [channels.len(), 2 * rows_in * block_len];
    for &x in xs {
        if tape.shape(x) != want {
            return Err(Error::shape("channel input", tape.shape(x), &want));
        }
    }
    Ok(())
}

/// `rows × block_len` complex noise with `CN(0, σ²)` entries, packed.
fn noise_block<R: Rng + ?Sized>(rows: usize, block_len: usize, var: f64, rng: &mut R) -> ComplexMatrix {
    let mut n = ComplexMatrix::zeros(rows, block_len);
    if var > 0.0 {
        for r in 0..rows {
            for c in 0..block_len {
                n.set(r, c, complex_gaussian(rng, var));
            }
        }
    }
    n
}

fn mix_for_receiver(
    tape: &mut Tape,
    xs: &[Var],
    batch: usize,
    block_len: usize,
    blocks: impl Fn(usize, usize) -> ComplexMatrix,
    noise: Vec<f64>,
) -> Result<Var> {
    let k_users = xs.len();
    let mut re = Vec::new();
    let mut im = Vec::new();
    let (mut rows_out, mut rows_in) = (0, 0);
    for b in 0..batch {
        for j in 0..k_users {
            let g = blocks(b, j);
            rows_out = g.rows();
            rows_in = g.cols();
            re.extend_from_slice(g.re());
            im.extend_from_slice(g.im());
        }
    }
    let maps = MixMaps {
        batch,
        inputs: k_users,
        rows_out,
        rows_in,
        cols: block_len,
        re,
        im,
    };
    let offset = Tensor::matrix(batch, 2 * rows_out * block_len, noise)?;
    tape.mix_complex(xs, maps, Some(&offset))
}

/// `Y_k = H_kk X_k + Σ_{j≠k} H_kj X_j + N_k` for every receiver `k`.
///
/// Each `xs[j]` is `[batch × 2·N_t·block_len]` (packed complex); outputs are
/// `[batch × 2·N_r·block_len]`. Noise is drawn fresh from `rng`.
pub fn apply_interference_channel<R: Rng + ?Sized>(
    tape: &mut Tape,
    xs: &[Var],
    channels: &[ChannelRealization],
    block_len: usize,
    rng: &mut R,
) -> Result<Vec<Var>> {
    let first = channels.first().ok_or_else(|| Error::Dimension("empty batch".into()))?;
    check_batch(tape, xs, channels, first.tx(), block_len)?;
    let (k_users, nr) = (first.users(), first.rx());
    let batch = channels.len();
    (0..k_users)
        .map(|k| {
            let mut noise = Vec::with_capacity(batch * 2 * nr * block_len);
            for h in channels {
                noise.extend(noise_block(nr, block_len, h.noise_var(), rng).pack());
            }
            mix_for_receiver(tape, xs, batch, block_len, |b, j| channels[b].link(k, j).clone(), noise)
        })
        .collect()
}

/// `Y_k = U_kᴴ H_kk V_k X_k + Σ_{j≠k} U_kᴴ H_kj V_j X_j + U_kᴴ N_k`.
///
/// `precoders[b]` belongs to `channels[b]`; each `xs[j]` is
/// `[batch × 2·d·block_len]` for `d` streams.
pub fn apply_filtered_channel<R: Rng + ?Sized>(
    tape: &mut Tape,
    xs: &[Var],
    channels: &[ChannelRealization],
    precoders: &[PrecoderSet],
    block_len: usize,
    rng: &mut R,
) -> Result<Vec<Var>> {
    let first = channels.first().ok_or_else(|| Error::Dimension("empty batch".into()))?;
    if precoders.len() != channels.len() {
        return Err(Error::Dimension(format!("{} precoder sets for {} samples", precoders.len(), channels.len())));
    }
    let (k_users, nt, nr) = (first.users(), first.tx(), first.rx());
    let d = precoders[0].precoders.first().map_or(0, |v| v.cols());
    for set in precoders {
        let ok = set.precoders.len() == k_users
            && set.filters.len() == k_users
            && set.precoders.iter().all(|v| v.rows() == nt && v.cols() == d)
            && set.filters.iter().all(|u| u.rows() == nr && u.cols() == d);
        if !ok {
            return Err(Error::Dimension("precoder set does not match the channel".into()));
        }
    }
    check_batch(tape, xs, channels, d, block_len)?;
    let batch = channels.len();
    (0..k_users)
        .map(|k| {
            let mut noise = Vec::with_capacity(batch * 2 * d * block_len);
            let mut effective = Vec::with_capacity(batch * k_users);
            for (h, set) in channels.iter().zip(precoders) {
                let uh = set.filters[k].adjoint();
                noise.extend(uh.mul(&noise_block(nr, block_len, h.noise_var(), rng)).pack());
                for j in 0..k_users {
                    effective.push(uh.mul(h.link(k, j)).mul(&set.precoders[j]));
                }
            }
            mix_for_receiver(tape, xs, batch, block_len, |b, j| effective[b * k_users + j].clone(), noise)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::realization::sample_channel;
    use crate::rng::substream;

    fn random_symbols(tape: &mut Tape, batch: usize, width: usize, seed: u64) -> Var {
        let mut rng = substream(seed, "sym", &[]);
        let t = Tensor::matrix(batch, width, (0..batch * width).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        tape.param(t)
    }

    #[test]
    fn zero_input_yields_pure_noise() {
        let mut rng = substream(1, "c", &[]);
        let hs: Vec<_> = (0..3).map(|_| sample_channel(2, 2, 2, 0.5, &mut rng)).collect();
        let mut tape = Tape::new();
        let xs: Vec<Var> = (0..2).map(|_| tape.constant(Tensor::zeros(vec![3, 8]))).collect();
        let ys = apply_interference_channel(&mut tape, &xs, &hs, 2, &mut substream(5, "n", &[])).unwrap();
        // replay the noise draws
        let mut nrng = substream(5, "n", &[]);
        for &y in &ys {
            let mut want = Vec::new();
            for h in &hs {
                want.extend(noise_block(2, 2, h.noise_var(), &mut nrng).pack());
            }
            assert_eq!(tape.value(y), want.as_slice());
        }
    }

    #[test]
    fn single_user_identity_noiseless_is_transparent() {
        let hs = vec![ChannelRealization::isolated_identity(1, 2, 0.0); 4];
        let mut tape = Tape::new();
        let x = random_symbols(&mut tape, 4, 2 * 2 * 3, 2);
        let ys = apply_interference_channel(&mut tape, &[x], &hs, 3, &mut substream(0, "n", &[])).unwrap();
        assert_eq!(tape.value(ys[0]), tape.value(x));
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let hs = vec![sample_channel(2, 2, 2, 0.0, &mut substream(3, "c", &[])); 2];
        let mut tape = Tape::new();
        let x = random_symbols(&mut tape, 2, 10, 3);
        assert!(apply_interference_channel(&mut tape, &[x, x], &hs, 2, &mut substream(0, "n", &[])).is_err());
        assert!(apply_interference_channel(&mut tape, &[x], &hs, 2, &mut substream(0, "n", &[])).is_err());
    }

    #[test]
    fn filtered_identity_reduces_to_direct_link() {
        let h = sample_channel(1, 2, 2, 0.0, &mut substream(4, "c", &[]));
        let set = PrecoderSet {
            precoders: vec![ComplexMatrix::identity(2)],
            filters: vec![ComplexMatrix::identity(2)],
        };
        let mut tape = Tape::new();
        let x = random_symbols(&mut tape, 1, 2 * 2 * 5, 5);
        let ys = apply_filtered_channel(&mut tape, &[x], &[h.clone()], &[set], 5, &mut substream(0, "n", &[])).unwrap();
        let xm = ComplexMatrix::unpack(2, 5, tape.value(x)).unwrap();
        let want = h.link(0, 0).mul(&xm).pack();
        for (a, b) in tape.value(ys[0]).iter().zip(&want) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
