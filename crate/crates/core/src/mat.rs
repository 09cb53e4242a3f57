//! Small dense matrices, just enough for companion-form algebra: products,
//! an LU solver, and a spectral radius via Gelfand's formula.

/// Row-major dense matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let r = rows.len();
        let c = if r == 0 { 0 } else { rows[0].len() };
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend_from_slice(row);
        }
        Mat { rows: r, cols: c, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.rows == 0 || self.cols == 0
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn transpose(&self) -> Mat {
        let mut t = Mat::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.set(j, i, self.get(i, j));
            }
        }
        t
    }

    pub fn mul(&self, other: &Mat) -> Mat {
        assert_eq!(self.cols, other.rows, "dimension mismatch");
        let mut out = Mat::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out.data[i * out.cols + j] += a * other.get(k, j);
                }
            }
        }
        out
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, v.len(), "dimension mismatch");
        (0..self.rows)
            .map(|i| (0..self.cols).map(|j| self.get(i, j) * v[j]).sum())
            .collect()
    }

    pub fn frob_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn max_abs_diff(&self, other: &Mat) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Solve `self * x = b` by LU with partial pivoting. `None` if singular
    /// to working precision.
    pub fn solve(&self, b: &[f64]) -> Option<Vec<f64>> {
        assert_eq!(self.rows, self.cols, "square matrix required");
        assert_eq!(self.rows, b.len());
        let n = self.rows;
        let mut a = self.data.clone();
        let mut x = b.to_vec();
        for col in 0..n {
            let mut piv = col;
            let mut best = a[col * n + col].abs();
            for r in col + 1..n {
                let v = a[r * n + col].abs();
                if v > best {
                    best = v;
                    piv = r;
                }
            }
            if best < 1e-300 {
                return None;
            }
            if piv != col {
                for j in 0..n {
                    a.swap(col * n + j, piv * n + j);
                }
                x.swap(col, piv);
            }
            let d = a[col * n + col];
            for r in col + 1..n {
                let f = a[r * n + col] / d;
                if f == 0.0 {
                    continue;
                }
                a[r * n + col] = 0.0;
                for j in col + 1..n {
                    a[r * n + j] -= f * a[col * n + j];
                }
                x[r] -= f * x[col];
            }
        }
        for col in (0..n).rev() {
            let mut s = x[col];
            for j in col + 1..n {
                s -= a[col * n + j] * x[j];
            }
            x[col] = s / a[col * n + col];
        }
        Some(x)
    }

    /// Spectral radius via Gelfand's formula with repeated squaring,
    /// `lim ||A^(2^k)||_F^(1/2^k)`. The Frobenius norm dominates the
    /// spectral norm, so for symmetric positive semi-definite matrices the
    /// estimate approaches the largest eigenvalue from above at every step.
    pub fn spectral_radius(&self) -> f64 {
        assert_eq!(self.rows, self.cols);
        if self.rows == 0 {
            return 0.0;
        }
        let s0 = self.frob_norm();
        if s0 == 0.0 {
            return 0.0;
        }
        let mut b = self.clone();
        for v in &mut b.data {
            *v /= s0;
        }
        let mut log_scale = s0.ln();
        let mut pow = 1.0f64; // 2^k
        let mut est = log_scale.exp();
        for _ in 0..60 {
            let m = b.mul(&b);
            let s = m.frob_norm();
            if s == 0.0 {
                return 0.0; // nilpotent
            }
            b = m;
            for v in &mut b.data {
                *v /= s;
            }
            log_scale = 2.0 * log_scale + s.ln();
            pow *= 2.0;
            let next = (log_scale / pow).exp();
            if (next - est).abs() <= 1e-13 * next.max(1e-300) {
                return next;
            }
            est = next;
        }
        est
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solve_roundtrip() {
        let a = Mat::from_rows(&[vec![4.0, 1.0, 0.0], vec![1.0, 3.0, -1.0], vec![0.0, -1.0, 2.0]]);
        let x = vec![1.0, -2.0, 0.5];
        let b = a.mul_vec(&x);
        let xs = a.solve(&b).unwrap();
        for (u, v) in x.iter().zip(&xs) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn singular_detected() {
        let a = Mat::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0]]);
        assert!(a.solve(&[1.0, 1.0]).is_none());
    }

    #[test]
    fn spectral_radius_2x2() {
        // companion of z^2 - 0.5 z - 0.3: roots (0.5 +- sqrt(0.25 + 1.2)) / 2
        let a = Mat::from_rows(&[vec![0.5, 0.3], vec![1.0, 0.0]]);
        let expected = (0.5 + (0.25f64 + 1.2).sqrt()) / 2.0;
        assert!((a.spectral_radius() - expected).abs() < 1e-10);
    }

    #[test]
    fn spectral_radius_edge_cases() {
        assert_eq!(Mat::zeros(0, 0).spectral_radius(), 0.0);
        assert_eq!(Mat::zeros(3, 3).spectral_radius(), 0.0);
        // nilpotent
        let n = Mat::from_rows(&[vec![0.0, 1.0], vec![0.0, 0.0]]);
        assert_eq!(n.spectral_radius(), 0.0);
        // rotation-like matrix with complex eigenvalues of modulus 0.9
        let r = 0.9;
        let (c, s) = (0.6f64, 0.8f64);
        let m = Mat::from_rows(&[vec![r * c, -r * s], vec![r * s, r * c]]);
        assert!((m.spectral_radius() - 0.9).abs() < 1e-9);
    }
}
