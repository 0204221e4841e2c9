use crate::error::{Error, Result};

/// Dense complex matrix stored as row-major real and imaginary parts.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    re: Vec<f64>,
    im: Vec<f64>,
}

impl ComplexMatrix {
    pub fn new(rows: usize, cols: usize, re: Vec<f64>, im: Vec<f64>) -> Result<Self> {
        if re.len() != rows * cols || im.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "complex {rows}x{cols} needs {} entries, got re {} / im {}",
                rows * cols,
                re.len(),
                im.len()
            )));
        }
        Ok(Self { rows, cols, re, im })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            re: vec![0.0; rows * cols],
            im: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.re[i * n + i] = 1.0;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn re(&self) -> &[f64] {
        &self.re
    }

    pub fn im(&self) -> &[f64] {
        &self.im
    }

    pub fn get(&self, r: usize, c: usize) -> (f64, f64) {
        let i = r * self.cols + c;
        (self.re[i], self.im[i])
    }

    pub fn set(&mut self, r: usize, c: usize, v: (f64, f64)) {
        let i = r * self.cols + c;
        self.re[i] = v.0;
        self.im[i] = v.1;
    }

    /// Matrix product; panics if the inner dimensions differ.
    pub fn mul(&self, rhs: &ComplexMatrix) -> ComplexMatrix {
        self.try_mul(rhs).expect("complex matmul dimensions")
    }

    pub fn try_mul(&self, rhs: &ComplexMatrix) -> Result<ComplexMatrix> {
        if self.cols != rhs.rows {
            return Err(Error::shape("complex matmul", &[self.rows, self.cols], &[rhs.rows, rhs.cols]));
        }
        let (m, k, n) = (self.rows, self.cols, rhs.cols);
        let mut out = Self::zeros(m, n);
        for i in 0..m {
            for p in 0..k {
                let (a, b) = (self.re[i * k + p], self.im[i * k + p]);
                for j in 0..n {
                    let (c, d) = (rhs.re[p * n + j], rhs.im[p * n + j]);
                    out.re[i * n + j] += a * c - b * d;
                    out.im[i * n + j] += a * d + b * c;
                }
            }
        }
        Ok(out)
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> ComplexMatrix {
        let mut out = Self::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                let (a, b) = self.get(r, c);
                out.set(c, r, (a, -b));
            }
        }
        out
    }

    pub fn add(&self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols), "complex add dimensions");
        Self {
            rows: self.rows,
            cols: self.cols,
            re: self.re.iter().zip(&rhs.re).map(|(a, b)| a + b).collect(),
            im: self.im.iter().zip(&rhs.im).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn scale(&self, s: f64) -> ComplexMatrix {
        Self {
            rows: self.rows,
            cols: self.cols,
            re: self.re.iter().map(|v| v * s).collect(),
            im: self.im.iter().map(|v| v * s).collect(),
        }
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.re.iter().chain(&self.im).map(|v| v * v).sum()
    }

    pub fn column(&self, c: usize) -> Vec<(f64, f64)> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }

    pub fn set_column(&mut self, c: usize, v: &[(f64, f64)]) {
        for (r, z) in v.iter().enumerate() {
            self.set(r, c, *z);
        }
    }

    pub fn column_norms(&self) -> Vec<f64> {
        (0..self.cols)
            .map(|c| self.column(c).iter().map(|(a, b)| a * a + b * b).sum::<f64>().sqrt())
            .collect()
    }

    /// Rank-one outer sum `A Aᴴ`.
    pub fn gram(&self) -> ComplexMatrix {
        self.mul(&self.adjoint())
    }

    /// Packs as all real parts (row-major) followed by all imaginary parts.
    pub fn pack(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(2 * self.re.len());
        v.extend_from_slice(&self.re);
        v.extend_from_slice(&self.im);
        v
    }

    /// Inverse of [`ComplexMatrix::pack`].
    pub fn unpack(rows: usize, cols: usize, packed: &[f64]) -> Result<Self> {
        if packed.len() != 2 * rows * cols {
            return Err(Error::Dimension(format!(
                "packed {rows}x{cols} complex needs {} reals, got {}",
                2 * rows * cols,
                packed.len()
            )));
        }
        let (re, im) = packed.split_at(rows * cols);
        Self::new(rows, cols, re.to_vec(), im.to_vec())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn product_matches_componentwise_rule() {
        let a = ComplexMatrix::new(1, 2, vec![1.0, 2.0], vec![3.0, -1.0]).unwrap();
        let b = ComplexMatrix::new(2, 1, vec![0.5, -2.0], vec![1.0, 4.0]).unwrap();
        let c = a.mul(&b);
        // (1+3i)(0.5+i) + (2−i)(−2+4i) = (−2.5+2.5i) + (0+10i)
        assert_eq!(c.get(0, 0), (-2.5, 12.5));
        assert!(a.try_mul(&a).is_err());
    }

    #[test]
    fn adjoint_and_pack_round_trip() {
        let a = ComplexMatrix::new(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0], vec![0.0, -1.0, 1.0, 2.0, -2.0, 0.5]).unwrap();
        assert_eq!(a.adjoint().adjoint(), a);
        assert_eq!(a.adjoint().get(2, 1), (6.0, -0.5));
        assert_eq!(ComplexMatrix::unpack(2, 3, &a.pack()).unwrap(), a);
        assert!((a.frobenius_sq() - (91.0 + 10.25)).abs() < 1e-12);
    }
}
