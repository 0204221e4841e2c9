//! Linear precoders `V_k` and receive filters `U_k` for the
//! semi-conventional baseline.
//!
//! Two alternating designs share the same reciprocal-network structure:
//!
//! * [`PrecoderAlgorithm::MinLeakage`] picks each `U_k` as the `d` least
//!   dominant eigenvectors of the interference covariance at receiver `k`,
//!   then each `V_j` the same way in the reciprocal network. Every half-step
//!   minimises the total leakage over one block with the other fixed, so the
//!   leakage sequence is non-increasing.
//! * [`PrecoderAlgorithm::MaxSinr`] picks, per stream, the dominant
//!   generalized eigenvector of the desired-signal covariance against the
//!   interference-plus-noise covariance. It usually leaks less in the end but
//!   its leakage trace is not monotone.

use rand::Rng;

use super::complex::ComplexMatrix;
use super::eigen::{hermitian_eigen, EigenFailure};
use super::realization::{complex_gaussian, ChannelRealization};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrecoderAlgorithm {
    #[default]
    MinLeakage,
    MaxSinr,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PrecoderOptions {
    /// Streams per user `d`; needs `d ≤ min(N_t, N_r)`.
    pub streams: usize,
    pub iterations: usize,
    pub algorithm: PrecoderAlgorithm,
    /// Per-symbol transmit power, used by the max-SINR covariances.
    pub power: f64,
}

/// Per-user precoder `V_k` (`N_t × d`) and receive filter `U_k` (`N_r × d`),
/// every column unit norm.
#[derive(Clone, Debug, PartialEq)]
pub struct PrecoderSet {
    pub precoders: Vec<ComplexMatrix>,
    pub filters: Vec<ComplexMatrix>,
}

#[derive(Clone, Debug)]
pub struct PrecoderDesign {
    pub set: PrecoderSet,
    /// Total interference leakage after each iteration.
    pub leakage: Vec<f64>,
}

/// `Σ_k Σ_{j≠k} ‖U_kᴴ H_kj V_j‖²_F`.
pub fn interference_leakage(h: &ChannelRealization, set: &PrecoderSet) -> f64 {
    let k_users = h.users();
    let mut total = 0.0;
    for k in 0..k_users {
        let uh = set.filters[k].adjoint();
        for j in 0..k_users {
            if j != k {
                total += uh.mul(h.link(k, j)).mul(&set.precoders[j]).frobenius_sq();
            }
        }
    }
    total
}

/// Alternating transceiver design for one channel realization.
pub fn design_precoders_filters<R: Rng + ?Sized>(
    h: &ChannelRealization,
    opts: &PrecoderOptions,
    rng: &mut R,
) -> Result<PrecoderDesign> {
    let (k_users, nt, nr, d) = (h.users(), h.tx(), h.rx(), opts.streams);
    if d == 0 || d > nt.min(nr) {
        return Err(Error::Dimension(format!("{d} streams need 1 ≤ d ≤ min(N_t={nt}, N_r={nr})")));
    }
    let mut v: Vec<ComplexMatrix> = (0..k_users).map(|_| random_orthonormal(nt, d, rng)).collect();
    let mut u: Vec<ComplexMatrix> = vec![ComplexMatrix::zeros(nr, d); k_users];
    let mut leakage = Vec::with_capacity(opts.iterations);
    let fail = |iteration: usize| move |e: EigenFailure| Error::Numerical {
        iteration,
        detail: format!("Jacobi did not converge after {} sweeps (off-diagonal {:e})", e.sweeps, e.off_diagonal),
    };

    for it in 0..opts.iterations {
        match opts.algorithm {
            PrecoderAlgorithm::MinLeakage => {
                for k in 0..k_users {
                    let q = interference_cov(nr, (0..k_users).filter(|&j| j != k).map(|j| h.link(k, j).mul(&v[j])));
                    u[k] = least_eigenvectors(&q, d).map_err(fail(it))?;
                }
                for j in 0..k_users {
                    let q = interference_cov(nt, (0..k_users).filter(|&k| k != j).map(|k| h.link(k, j).adjoint().mul(&u[k])));
                    v[j] = least_eigenvectors(&q, d).map_err(fail(it))?;
                }
            }
            PrecoderAlgorithm::MaxSinr => {
                let p = opts.power / d as f64;
                let sigma2 = h.noise_var();
                for k in 0..k_users {
                    let cov = interference_cov(nr, (0..k_users).map(|j| h.link(k, j).mul(&v[j]))).scale(p);
                    let direct = h.link(k, k).mul(&v[k]);
                    u[k] = max_sinr_filters(&cov, &direct, p, sigma2).map_err(fail(it))?;
                }
                for j in 0..k_users {
                    let cov = interference_cov(nt, (0..k_users).map(|k| h.link(k, j).adjoint().mul(&u[k]))).scale(p);
                    let direct = h.link(j, j).adjoint().mul(&u[j]);
                    v[j] = max_sinr_filters(&cov, &direct, p, sigma2).map_err(fail(it))?;
                }
            }
        }
        let set = PrecoderSet {
            precoders: v.clone(),
            filters: u.clone(),
        };
        leakage.push(interference_leakage(h, &set));
    }
    if opts.iterations == 0 {
        for uk in &mut u {
            *uk = random_orthonormal(nr, d, rng);
        }
    }
    Ok(PrecoderDesign {
        set: PrecoderSet { precoders: v, filters: u },
        leakage,
    })
}

/// `Σ_i A_i A_iᴴ` for `n × d` blocks.
fn interference_cov(n: usize, blocks: impl Iterator<Item = ComplexMatrix>) -> ComplexMatrix {
    blocks.fold(ComplexMatrix::zeros(n, n), |acc, b| acc.add(&b.gram()))
}

fn least_eigenvectors(q: &ComplexMatrix, d: usize) -> std::result::Result<ComplexMatrix, EigenFailure> {
    let (_, vecs) = hermitian_eigen(q)?;
    let mut out = ComplexMatrix::zeros(q.rows(), d);
    for c in 0..d {
        out.set_column(c, &vecs.column(c));
    }
    Ok(out)
}

/// Per-stream `B_l⁻¹ t_l`, normalized, with `B_l = σ²I + cov − p t_l t_lᴴ`.
fn max_sinr_filters(cov: &ComplexMatrix, direct: &ComplexMatrix, p: f64, sigma2: f64) -> std::result::Result<ComplexMatrix, EigenFailure> {
    let n = cov.rows();
    let d = direct.cols();
    let mut out = ComplexMatrix::zeros(n, d);
    for l in 0..d {
        let t = ComplexMatrix::new(n, 1, direct.column(l).iter().map(|z| z.0).collect(), direct.column(l).iter().map(|z| z.1).collect())
            .expect("column shape");
        let mut b = cov.add(&t.gram().scale(-p));
        for i in 0..n {
            let (re, im) = b.get(i, i);
            // tiny diagonal load keeps σ² = 0 well-posed
            b.set(i, i, (re + sigma2 + 1e-12, im));
        }
        let (vals, w) = hermitian_eigen(&b)?;
        // B⁻¹ t = W Λ⁻¹ Wᴴ t
        let mut coeff = w.adjoint().mul(&t);
        for (i, lam) in vals.iter().enumerate() {
            let (a, c) = coeff.get(i, 0);
            let inv = 1.0 / lam.max(1e-12);
            coeff.set(i, 0, (a * inv, c * inv));
        }
        let x = w.mul(&coeff);
        let norm = x.frobenius_sq().sqrt();
        let col: Vec<(f64, f64)> = x.column(0).iter().map(|z| (z.0 / norm, z.1 / norm)).collect();
        out.set_column(l, &col);
    }
    Ok(out)
}

/// `n × d` matrix with orthonormal columns from Gram-Schmidt on `CN(0,1)` draws.
pub fn random_orthonormal<R: Rng + ?Sized>(n: usize, d: usize, rng: &mut R) -> ComplexMatrix {
    let mut out = ComplexMatrix::zeros(n, d);
    let mut c = 0;
    while c < d {
        let mut z: Vec<(f64, f64)> = (0..n).map(|_| complex_gaussian(rng, 1.0)).collect();
        for p in 0..c {
            let b = out.column(p);
            let (mut cr, mut ci) = (0.0, 0.0);
            for (bb, zz) in b.iter().zip(&z) {
                cr += bb.0 * zz.0 + bb.1 * zz.1;
                ci += bb.0 * zz.1 - bb.1 * zz.0;
            }
            for (zz, bb) in z.iter_mut().zip(&b) {
                zz.0 -= cr * bb.0 - ci * bb.1;
                zz.1 -= cr * bb.1 + ci * bb.0;
            }
        }
        let norm = z.iter().map(|(a, b)| a * a + b * b).sum::<f64>().sqrt();
        if norm < 1e-8 {
            continue;
        }
        let z: Vec<(f64, f64)> = z.iter().map(|(a, b)| (a / norm, b / norm)).collect();
        out.set_column(c, &z);
        c += 1;
    }
    out
}
