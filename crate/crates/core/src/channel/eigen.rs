//! Cyclic Jacobi eigen-decomposition for small symmetric / Hermitian matrices.

use super::complex::ComplexMatrix;

const MAX_SWEEPS: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct EigenFailure {
    pub sweeps: usize,
    pub off_diagonal: f64,
}

/// Eigenpairs of a real symmetric `n × n` row-major matrix, ascending.
///
/// Returns eigenvalues and the eigenvectors as columns of a row-major matrix.
pub fn symmetric_eigen(a: &[f64], n: usize) -> Result<(Vec<f64>, Vec<f64>), EigenFailure> {
    let mut a = a.to_vec();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    let total: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let tol = 1e-15 * total.max(f64::MIN_POSITIVE);
    let mut converged = false;
    for _ in 0..MAX_SWEEPS {
        if off_norm(&a, n) <= tol {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq.abs() <= f64::MIN_POSITIVE {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    if !converged {
        let off = off_norm(&a, n);
        if off > tol * 1e3 || !off.is_finite() {
            return Err(EigenFailure {
                sweeps: MAX_SWEEPS,
                off_diagonal: off,
            });
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[i * n + i].total_cmp(&a[j * n + j]));
    let values = order.iter().map(|&i| a[i * n + i]).collect();
    let mut vecs = vec![0.0; n * n];
    for (dst, &src) in order.iter().enumerate() {
        for k in 0..n {
            vecs[k * n + dst] = v[k * n + src];
        }
    }
    Ok((values, vecs))
}

fn off_norm(a: &[f64], n: usize) -> f64 {
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += a[i * n + j] * a[i * n + j];
            }
        }
    }
    s.sqrt()
}

/// Eigenpairs of a Hermitian matrix via its real-symmetric embedding
/// `[[Re, −Im], [Im, Re]]`, ascending, eigenvectors as orthonormal columns.
pub fn hermitian_eigen(m: &ComplexMatrix) -> Result<(Vec<f64>, ComplexMatrix), EigenFailure> {
    let n = m.rows();
    assert_eq!(n, m.cols(), "hermitian_eigen needs a square matrix");
    let w = 2 * n;
    let mut emb = vec![0.0; w * w];
    for r in 0..n {
        for c in 0..n {
            // symmetrize against round-off in the input
            let (a, b) = m.get(r, c);
            let (a2, b2) = m.get(c, r);
            let (re, im) = (0.5 * (a + a2), 0.5 * (b - b2));
            emb[r * w + c] = re;
            emb[(r + n) * w + c + n] = re;
            emb[r * w + c + n] = -im;
            emb[(r + n) * w + c] = im;
        }
    }
    let (vals, vecs) = symmetric_eigen(&emb, w)?;

    // Each complex eigenvector z appears twice (as z and i·z); keep one of
    // each pair by complex Gram-Schmidt in ascending eigenvalue order.
    let candidates: Vec<Vec<(f64, f64)>> = (0..w)
        .map(|col| (0..n).map(|k| (vecs[k * w + col], vecs[(k + n) * w + col])).collect())
        .collect();
    let mut chosen: Vec<(f64, Vec<(f64, f64)>)> = Vec::with_capacity(n);
    let mut used = vec![false; w];
    for (i, z) in candidates.iter().enumerate() {
        if chosen.len() == n {
            break;
        }
        let r = residual(z, &chosen);
        if norm_sq(&r) > 0.25 {
            chosen.push((vals[i], normalize(r)));
            used[i] = true;
        }
    }
    while chosen.len() < n {
        // degenerate clusters: take the candidate with the largest residual
        let (best, r) = candidates
            .iter()
            .enumerate()
            .filter(|(i, _)| !used[*i])
            .map(|(i, z)| (i, residual(z, &chosen)))
            .max_by(|a, b| norm_sq(&a.1).total_cmp(&norm_sq(&b.1)))
            .expect("embedding has 2n candidates");
        used[best] = true;
        chosen.push((vals[best], normalize(r)));
    }
    chosen.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out = ComplexMatrix::zeros(n, n);
    let mut values = Vec::with_capacity(n);
    for (c, (val, z)) in chosen.into_iter().enumerate() {
        out.set_column(c, &z);
        values.push(val);
    }
    Ok((values, out))
}

fn residual(z: &[(f64, f64)], basis: &[(f64, Vec<(f64, f64)>)]) -> Vec<(f64, f64)> {
    let mut r = z.to_vec();
    for (_, b) in basis {
        // coefficient ⟨b, r⟩ = Σ conj(b)·r
        let (mut cr, mut ci) = (0.0, 0.0);
        for (bb, rr) in b.iter().zip(&r) {
            cr += bb.0 * rr.0 + bb.1 * rr.1;
            ci += bb.0 * rr.1 - bb.1 * rr.0;
        }
        for (rr, bb) in r.iter_mut().zip(b) {
            rr.0 -= cr * bb.0 - ci * bb.1;
            rr.1 -= cr * bb.1 + ci * bb.0;
        }
    }
    r
}

fn norm_sq(z: &[(f64, f64)]) -> f64 {
    z.iter().map(|(a, b)| a * a + b * b).sum()
}

fn normalize(mut z: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    let n = norm_sq(&z).sqrt();
    for v in &mut z {
        v.0 /= n;
        v.1 /= n;
    }
    z
}
