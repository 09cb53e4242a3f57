//! Companion-form matrices and the weighted vector norm.
//!
//! The AR(p) recursion becomes first-order for the state
//! `y_t = (y_t, ..., y_{t-p+1})`. A change of coordinates `z = A x`
//! splits the state into the filtered scalar `z1 = x1 - pi_1 x2 - ...`
//! and the lagged block `z2 = (x2, ..., x_p)`, whose transition matrix
//! `Pi_1` has spectral radius below one whenever `varpi` is stable.
//!
//! The norm under which `Pi_1` contracts is built explicitly: solve the
//! discrete Lyapunov equation `P = Pi_1' P Pi_1 + I` and set
//! `||z||* = sqrt(z' P z)`. Then `||Pi_1 z||*^2 = ||z||*^2 - |z|^2`, so
//! the contraction factor `eta = sqrt(1 - 1/lambda_max(P))` is certified
//! analytically rather than sampled.

use crate::mat::Mat;
use crate::rng::Stream;

/// Margin used when deciding "strictly outside the unit circle".
pub const STABILITY_MARGIN: f64 = 1e-8;

/// Above this block size the Lyapunov equation is solved by fixed-point
/// iteration instead of the dense n^2 x n^2 linear solve.
const DIRECT_SOLVE_LIMIT: usize = 24;

const LYAPUNOV_TOL: f64 = 1e-12;

#[derive(Debug, thiserror::Error)]
pub enum CompanionError {
    #[error("Pi_1 is not a contraction: spectral radius {0} is not below 1")]
    NotContractive(f64),
    #[error("dimension mismatch: expected length {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("internal: {0}")]
    Internal(String),
}

/// State split `z = (z1, z2)` with `z1` the filtered scalar and `z2` the
/// lag block (empty when p = 1).
#[derive(Clone, Debug, PartialEq)]
pub struct ZSplit {
    pub z1: f64,
    pub z2: Vec<f64>,
}

/// Companion matrices plus the weighted-norm certificate.
#[derive(Clone, Debug)]
pub struct CompanionForm {
    pub p: usize,
    pub pi: Vec<f64>,
    /// p x p state transition of (y_t, ..., y_{t-p+1}).
    pub phi_mat: Mat,
    /// Coordinate change; `A x = (z1, x2, ..., x_p)`.
    pub a_mat: Mat,
    /// `A Phi A^{-1}`.
    pub pi_mat: Mat,
    /// Lower-right (p-1) x (p-1) block of `pi_mat`.
    pub pi1: Mat,
    /// Solution of `P = Pi_1' P Pi_1 + I`.
    pub p_norm: Mat,
    /// Certified contraction factor of `Pi_1` under the weighted norm.
    pub eta: f64,
    /// `||iota_{p-1}||*`, the weighted norm of the first unit vector.
    pub iota_star: f64,
}

/// Spectral radius of the stable block for given `pi` coefficients.
pub fn stable_block_radius(pi: &[f64]) -> f64 {
    pi1_matrix(pi).spectral_radius()
}

fn pi1_matrix(pi: &[f64]) -> Mat {
    let n = pi.len();
    let mut m = Mat::zeros(n, n);
    for (j, &pj) in pi.iter().enumerate() {
        m.set(0, j, pj);
    }
    for i in 1..n {
        m.set(i, i - 1, 1.0);
    }
    m
}

/// Solve `P = Pi_1' P Pi_1 + I` and derive the contraction factor.
///
/// For blocks up to size 24 this is a dense linear solve in the n^2
/// unknowns; larger blocks use the fixed-point iteration
/// `P <- Pi_1' P Pi_1 + I`, which converges geometrically at rate
/// `radius(Pi_1)^2`.
pub fn weighted_norm(pi1: &Mat) -> Result<(Mat, f64), CompanionError> {
    let n = pi1.rows();
    if n == 0 {
        return Ok((Mat::zeros(0, 0), 0.0));
    }
    let radius = pi1.spectral_radius();
    if radius >= 1.0 - STABILITY_MARGIN {
        return Err(CompanionError::NotContractive(radius));
    }
    let p = if n <= DIRECT_SOLVE_LIMIT {
        lyapunov_direct(pi1, n)?
    } else {
        lyapunov_iterate(pi1, n)
    };
    // symmetrize against roundoff
    let mut p_sym = Mat::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            p_sym.set(i, j, 0.5 * (p.get(i, j) + p.get(j, i)));
        }
    }
    // lambda_max via Gelfand on the SPD matrix approaches from above, so
    // eta remains a valid upper bound for the contraction ratio.
    let lambda_max = p_sym.spectral_radius();
    let eta = (1.0 - 1.0 / lambda_max).max(0.0).sqrt();
    certify_contraction(pi1, &p_sym, eta)?;
    Ok((p_sym, eta))
}

fn lyapunov_direct(pi1: &Mat, n: usize) -> Result<Mat, CompanionError> {
    // unknowns m(i,j) = i n + j; row states P_ij - sum_kl Pi1_ki Pi1_lj P_kl = I_ij
    let nn = n * n;
    let mut system = Mat::zeros(nn, nn);
    let mut rhs = vec![0.0; nn];
    for i in 0..n {
        for j in 0..n {
            let row = i * n + j;
            system.set(row, row, system.get(row, row) + 1.0);
            for k in 0..n {
                let a = pi1.get(k, i);
                if a == 0.0 {
                    continue;
                }
                for l in 0..n {
                    let col = k * n + l;
                    system.set(row, col, system.get(row, col) - a * pi1.get(l, j));
                }
            }
            rhs[row] = if i == j { 1.0 } else { 0.0 };
        }
    }
    let x = system
        .solve(&rhs)
        .ok_or_else(|| CompanionError::Internal("singular Lyapunov system".into()))?;
    let mut p = Mat::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            p.set(i, j, x[i * n + j]);
        }
    }
    Ok(p)
}

fn lyapunov_iterate(pi1: &Mat, n: usize) -> Mat {
    let pi1t = pi1.transpose();
    let mut p = Mat::identity(n);
    for _ in 0..200_000 {
        let mut next = pi1t.mul(&p).mul(pi1);
        for i in 0..n {
            next.set(i, i, next.get(i, i) + 1.0);
        }
        let delta = next.max_abs_diff(&p);
        p = next;
        if delta <= LYAPUNOV_TOL * (1.0 + p.frob_norm()) {
            break;
        }
    }
    p
}

fn certify_contraction(pi1: &Mat, p: &Mat, eta: f64) -> Result<(), CompanionError> {
    let n = pi1.rows();
    let mut rng = Stream::new(0x5eed_c0de, &[n as u64]);
    for _ in 0..10_000 {
        let z: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
        let nz = star_norm(p, &z);
        if nz == 0.0 {
            continue;
        }
        let npz = star_norm(p, &pi1.mul_vec(&z));
        if npz > eta * nz + 1e-12 * nz {
            return Err(CompanionError::Internal(format!(
                "contraction certificate violated: ratio {} > eta {}",
                npz / nz,
                eta
            )));
        }
    }
    Ok(())
}

/// `||z||* = sqrt(z' P z)`; 0 for the empty block.
pub fn star_norm(p: &Mat, z: &[f64]) -> f64 {
    let n = p.rows();
    if n == 0 {
        return 0.0;
    }
    debug_assert_eq!(z.len(), n);
    let pz = p.mul_vec(z);
    z.iter().zip(&pz).map(|(a, b)| a * b).sum::<f64>().max(0.0).sqrt()
}

/// Assemble the companion form for stable `pi` coefficients.
pub fn build_companion(pi: &[f64]) -> Result<CompanionForm, CompanionError> {
    let p = pi.len() + 1;
    // Phi: first row (pi_1 .. pi_{p-1}, 0), shifted identity below.
    let mut phi_mat = Mat::zeros(p, p);
    for (j, &pj) in pi.iter().enumerate() {
        phi_mat.set(0, j, pj);
    }
    for i in 1..p {
        phi_mat.set(i, i - 1, 1.0);
    }
    // A: identity with first row (1, -pi_1, ..., -pi_{p-1}); its inverse
    // has the signs flipped back.
    let mut a_mat = Mat::identity(p);
    let mut a_inv = Mat::identity(p);
    for (j, &pj) in pi.iter().enumerate() {
        a_mat.set(0, j + 1, -pj);
        a_inv.set(0, j + 1, pj);
    }
    let pi_mat = a_mat.mul(&phi_mat).mul(&a_inv);
    let pi1 = pi1_matrix(pi);
    // structural check: Pi = [[0, 0'], [iota, Pi_1]]
    let mut expected = Mat::zeros(p, p);
    if p > 1 {
        expected.set(1, 0, 1.0);
        for i in 0..p - 1 {
            for j in 0..p - 1 {
                expected.set(i + 1, j + 1, pi1.get(i, j));
            }
        }
    }
    if pi_mat.max_abs_diff(&expected) > 1e-10 {
        return Err(CompanionError::Internal(
            "companion similarity does not match the structural form".into(),
        ));
    }
    let (p_norm, eta) = weighted_norm(&pi1)?;
    let iota_star = if p > 1 {
        let mut iota = vec![0.0; p - 1];
        iota[0] = 1.0;
        star_norm(&p_norm, &iota)
    } else {
        0.0
    };
    Ok(CompanionForm { p, pi: pi.to_vec(), phi_mat, a_mat, pi_mat, pi1, p_norm, eta, iota_star })
}

impl CompanionForm {
    /// `z = A x` split into `(z1, z2)`.
    pub fn transform(&self, x: &[f64]) -> Result<ZSplit, CompanionError> {
        if x.len() != self.p {
            return Err(CompanionError::DimensionMismatch { expected: self.p, got: x.len() });
        }
        let mut z1 = x[0];
        for (j, &pj) in self.pi.iter().enumerate() {
            z1 -= pj * x[j + 1];
        }
        Ok(ZSplit { z1, z2: x[1..].to_vec() })
    }

    /// Weighted norm of a lag-block vector.
    pub fn star_norm(&self, z2: &[f64]) -> f64 {
        star_norm(&self.p_norm, z2)
    }

    pub fn stable_radius(&self) -> f64 {
        self.pi1.spectral_radius()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_order_degenerates() {
        let c = build_companion(&[]).unwrap();
        assert_eq!(c.p, 1);
        assert_eq!(c.a_mat.get(0, 0), 1.0);
        assert_eq!(c.pi_mat.get(0, 0), 0.0);
        assert_eq!(c.phi_mat.get(0, 0), 0.0);
        assert_eq!(c.eta, 0.0);
        assert!(c.pi1.is_empty());
        let z = c.transform(&[3.0]).unwrap();
        assert_eq!(z.z1, 3.0);
        assert!(z.z2.is_empty());
    }

    #[test]
    fn second_order_layout() {
        let c = build_companion(&[0.75]).unwrap();
        assert_eq!(c.pi1.get(0, 0), 0.75);
        assert_eq!(c.phi_mat.get(0, 0), 0.75);
        assert_eq!(c.phi_mat.get(0, 1), 0.0);
        assert_eq!(c.phi_mat.get(1, 0), 1.0);
        // scalar Lyapunov solve: P = 1 / (1 - 0.75^2) = 16/7, eta = 0.75
        assert!((c.p_norm.get(0, 0) - 16.0 / 7.0).abs() < 1e-10);
        assert!((c.eta - 0.75).abs() < 1e-9);
    }

    #[test]
    fn zero_block_norm() {
        let (p, eta) = weighted_norm(&Mat::zeros(1, 1)).unwrap();
        assert!((p.get(0, 0) - 1.0).abs() < 1e-14);
        assert_eq!(eta, 0.0);
    }

    #[test]
    fn third_order_contraction() {
        let c = build_companion(&[0.5, 0.3]).unwrap();
        assert_eq!(c.pi1.get(0, 0), 0.5);
        assert_eq!(c.pi1.get(0, 1), 0.3);
        assert_eq!(c.pi1.get(1, 0), 1.0);
        let expected = (0.5 + (0.25f64 + 1.2).sqrt()) / 2.0; // 2x2 eigenvalue oracle
        assert!((c.stable_radius() - expected).abs() < 1e-9);
        assert!(c.eta < 1.0);
        // Lyapunov residual
        let res = residual(&c.pi1, &c.p_norm);
        assert!(res < 1e-10, "residual {res}");
        // sampled contraction
        let mut rng = Stream::new(5, &[]);
        for _ in 0..10_000 {
            let z: Vec<f64> = (0..2).map(|_| rng.normal()).collect();
            let r = c.star_norm(&c.pi1.mul_vec(&z)) / c.star_norm(&z);
            assert!(r <= c.eta + 1e-12);
        }
    }

    #[test]
    fn transform_examples() {
        let c = build_companion(&[0.75]).unwrap();
        let z = c.transform(&[1.0, 1.0]).unwrap();
        assert!((z.z1 - 0.25).abs() < 1e-15);
        assert_eq!(z.z2, vec![1.0]);
        let c3 = build_companion(&[0.5, 0.3]).unwrap();
        let z3 = c3.transform(&[2.0, 1.0, -1.0]).unwrap();
        assert!((z3.z1 - 1.8).abs() < 1e-15);
        assert_eq!(z3.z2, vec![1.0, -1.0]);
        assert!(matches!(
            c3.transform(&[1.0]),
            Err(CompanionError::DimensionMismatch { expected: 3, got: 1 })
        ));
    }

    #[test]
    fn non_contractive_rejected() {
        let m = Mat::from_rows(&[vec![1.0]]);
        assert!(matches!(weighted_norm(&m), Err(CompanionError::NotContractive(_))));
    }

    #[test]
    fn norm_equivalence_with_euclidean() {
        let c = build_companion(&[0.5, 0.3]).unwrap();
        // lambda_min(P) >= 1 since P = I + Pi1' Pi1 + ..., and
        // lambda_max(P) is finite, so c^-1 |z| <= ||z||* <= c |z|.
        let lam_max = c.p_norm.spectral_radius();
        let bound = lam_max.sqrt();
        let mut rng = Stream::new(9, &[]);
        for _ in 0..1000 {
            let z: Vec<f64> = (0..2).map(|_| rng.normal()).collect();
            let euclid = z.iter().map(|x| x * x).sum::<f64>().sqrt();
            let star = c.star_norm(&z);
            assert!(star >= euclid * (1.0 - 1e-12));
            assert!(star <= bound * euclid * (1.0 + 1e-12));
        }
    }

    pub(super) fn residual(pi1: &Mat, p: &Mat) -> f64 {
        let n = pi1.rows();
        let mut lhs = pi1.transpose().mul(p).mul(pi1);
        for i in 0..n {
            lhs.set(i, i, lhs.get(i, i) + 1.0);
        }
        lhs.max_abs_diff(p)
    }
}
