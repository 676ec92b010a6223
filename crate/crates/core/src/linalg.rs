//! Dense symmetric eigendecomposition via cyclic Jacobi rotations.
//!
//! Populations here are small (tens to a few hundred subjects), so the
//! O(n^3)-per-sweep Jacobi method is plenty and fully deterministic.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Eigen-decomposition of a symmetric matrix.
pub struct SymmetricEigen {
    /// Eigenvalues in ascending order.
    pub values: Vec<f64>,
    /// Eigenvectors as columns, aligned with `values`.
    pub vectors: Tensor,
}

/// Jacobi eigendecomposition of a symmetric matrix.
///
/// Eigenvalues come back sorted ascending (ties keep their pre-sort order,
/// which is itself deterministic), eigenvectors as matching columns.
pub fn symmetric_eigen(matrix: &Tensor) -> Result<SymmetricEigen> {
    let n = matrix.rows();
    if matrix.cols() != n {
        return Err(Error::Validation(format!(
            "symmetric_eigen expects a square matrix, got {}x{}",
            matrix.rows(),
            matrix.cols()
        )));
    }
    let mut a: Vec<f64> = matrix.data().to_vec();
    for i in 0..n {
        for j in (i + 1)..n {
            if (a[i * n + j] - a[j * n + i]).abs() > 1e-9 {
                return Err(Error::Validation(
                    "symmetric_eigen: matrix is not symmetric".into(),
                ));
            }
        }
    }
    let mut v = Tensor::identity(n);
    let scale = matrix.frobenius_norm().max(1.0);
    let tol = 1e-14 * scale;
    let max_sweeps = 100;

    for sweep in 0..=max_sweeps {
        let mut off = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                off += a[i * n + j] * a[i * n + j];
            }
        }
        if off.sqrt() <= tol {
            break;
        }
        if sweep == max_sweeps {
            return Err(Error::Numerical(format!(
                "jacobi eigensolver did not converge in {max_sweeps} sweeps (off-diagonal {:.3e})",
                off.sqrt()
            )));
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                if apq.abs() <= tol / (n as f64) {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                // Rotate rows/columns p and q of A.
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
                // Accumulate the rotation into V.
                for k in 0..n {
                    let vkp = v.get(k, p);
                    let vkq = v.get(k, q);
                    v.set(k, p, c * vkp - s * vkq);
                    v.set(k, q, s * vkp + c * vkq);
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        a[i * n + i]
            .partial_cmp(&a[j * n + j])
            .unwrap()
            .then(i.cmp(&j))
    });
    let values: Vec<f64> = order.iter().map(|&i| a[i * n + i]).collect();
    let mut vectors = Tensor::zeros(n, n);
    for (col, &src) in order.iter().enumerate() {
        for row in 0..n {
            vectors.set(row, col, v.get(row, src));
        }
    }
    Ok(SymmetricEigen { values, vectors })
}

/// Largest-magnitude eigenvalue of a symmetric matrix (oracle helper).
pub fn spectral_radius(matrix: &Tensor) -> Result<f64> {
    let eig = symmetric_eigen(matrix)?;
    Ok(eig
        .values
        .iter()
        .fold(0.0_f64, |acc, &v| acc.max(v.abs())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_matrix_is_its_own_decomposition() {
        let m = Tensor::from_vec(3, 3, vec![3.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 2.0]).unwrap();
        let eig = symmetric_eigen(&m).unwrap();
        assert!((eig.values[0] - 1.0).abs() < 1e-12);
        assert!((eig.values[1] - 2.0).abs() < 1e-12);
        assert!((eig.values[2] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn reconstructs_the_input() {
        let m = Tensor::from_vec(
            4,
            4,
            vec![
                2.0, -1.0, 0.3, 0.0, -1.0, 1.5, 0.7, 0.2, 0.3, 0.7, -0.5, 1.1, 0.0, 0.2, 1.1, 0.9,
            ],
        )
        .unwrap();
        let eig = symmetric_eigen(&m).unwrap();
        // V diag(w) V^T == M
        let n = 4;
        let mut recon = Tensor::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                let mut s = 0.0;
                for k in 0..n {
                    s += eig.vectors.get(i, k) * eig.values[k] * eig.vectors.get(j, k);
                }
                recon.set(i, j, s);
            }
        }
        for (a, b) in m.data().iter().zip(recon.data()) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
    }

    #[test]
    fn rejects_asymmetric_input() {
        let m = Tensor::from_vec(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert!(symmetric_eigen(&m).is_err());
    }

    #[test]
    fn zero_matrix_yields_identity_basis() {
        let eig = symmetric_eigen(&Tensor::zeros(3, 3)).unwrap();
        assert_eq!(eig.values, vec![0.0, 0.0, 0.0]);
        assert_eq!(eig.vectors.data(), Tensor::identity(3).data());
    }
}
