//! Cyclic Jacobi eigensolver for symmetric 4×4 matrices.

use crate::error::{Error, Result};
use crate::scalar::Real;

pub const MAX_SWEEPS: usize = 100;
/// Absolute off-diagonal Frobenius norm at which iteration stops.
pub const OFF_DIAGONAL_TOLERANCE: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SymEigen4<T> {
    /// Eigenvalues in descending order.
    pub values: [T; 4],
    /// `vectors[k]` is the unit eigenvector for `values[k]`.
    pub vectors: [[T; 4]; 4],
    pub sweeps: usize,
}

pub fn off_diagonal_norm<T: Real>(a: &[[T; 4]; 4]) -> T {
    let mut s = T::zero();
    for (i, row) in a.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            if i != j {
                s += *v * *v;
            }
        }
    }
    s.sqrt()
}

/// Eigendecomposition of a symmetric 4×4 matrix.
///
/// Fails with `InvalidArgument` if `m` is not symmetric to within
/// `1e-9 · max(1, max|mᵢⱼ|)` or contains non-finite entries.
pub fn eig_sym4<T: Real>(m: &[[T; 4]; 4]) -> Result<SymEigen4<T>> {
    let mut scale = T::one();
    for row in m {
        for v in row {
            if !v.is_finite() {
                return Err(Error::invalid("matrix has non-finite entries"));
            }
            scale = scale.max(v.abs());
        }
    }
    let sym_tol = T::tol(1e-9) * scale;
    for i in 0..4 {
        for j in (i + 1)..4 {
            if (m[i][j] - m[j][i]).abs() > sym_tol {
                return Err(Error::invalid(format!(
                    "matrix is not symmetric: m[{i}][{j}]={} vs m[{j}][{i}]={}",
                    m[i][j], m[j][i]
                )));
            }
        }
    }

    // work on the symmetrized copy
    let mut a = *m;
    for i in 0..4 {
        for j in (i + 1)..4 {
            let avg = (m[i][j] + m[j][i]) / T::lit(2.0);
            a[i][j] = avg;
            a[j][i] = avg;
        }
    }
    let mut v = [[T::zero(); 4]; 4];
    for (i, row) in v.iter_mut().enumerate() {
        row[i] = T::one();
    }

    let tol = T::lit(OFF_DIAGONAL_TOLERANCE);
    let hundred = T::lit(100.0);
    let mut sweeps = 0;
    while sweeps < MAX_SWEEPS && off_diagonal_norm(&a) >= tol {
        sweeps += 1;
        for p in 0..3 {
            for q in (p + 1)..4 {
                let apq = a[p][q];
                if apq == T::zero() {
                    continue;
                }
                let g = hundred * apq.abs();
                if a[p][p].abs() + g == a[p][p].abs() && a[q][q].abs() + g == a[q][q].abs() {
                    a[p][q] = T::zero();
                    a[q][p] = T::zero();
                    continue;
                }
                rotate(&mut a, &mut v, p, q);
            }
        }
    }

    let mut order = [0usize, 1, 2, 3];
    order.sort_by(|&i, &j| {
        a[j][j]
            .partial_cmp(&a[i][i])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut values = [T::zero(); 4];
    let mut vectors = [[T::zero(); 4]; 4];
    for (k, &i) in order.iter().enumerate() {
        values[k] = a[i][i];
        for r in 0..4 {
            vectors[k][r] = v[r][i];
        }
    }
    Ok(SymEigen4 {
        values,
        vectors,
        sweeps,
    })
}

/// Applies the Jacobi rotation that annihilates `a[p][q]`.
fn rotate<T: Real>(a: &mut [[T; 4]; 4], v: &mut [[T; 4]; 4], p: usize, q: usize) {
    let one = T::one();
    let theta = (a[q][q] - a[p][p]) / (T::lit(2.0) * a[p][q]);
    let t = if theta.is_infinite() {
        one / (T::lit(2.0) * theta)
    } else {
        theta.signum() / (theta.abs() + (theta * theta + one).sqrt())
    };
    let c = one / (t * t + one).sqrt();
    let s = t * c;

    for k in 0..4 {
        let akp = a[k][p];
        let akq = a[k][q];
        a[k][p] = c * akp - s * akq;
        a[k][q] = s * akp + c * akq;
    }
    for k in 0..4 {
        let apk = a[p][k];
        let aqk = a[q][k];
        a[p][k] = c * apk - s * aqk;
        a[q][k] = s * apk + c * aqk;
    }
    a[p][q] = T::zero();
    a[q][p] = T::zero();

    for row in v.iter_mut() {
        let vp = row[p];
        let vq = row[q];
        row[p] = c * vp - s * vq;
        row[q] = s * vp + c * vq;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn reconstruct(e: &SymEigen4<f64>) -> [[f64; 4]; 4] {
        let mut r = [[0.0; 4]; 4];
        for k in 0..4 {
            for i in 0..4 {
                for j in 0..4 {
                    r[i][j] += e.values[k] * e.vectors[k][i] * e.vectors[k][j];
                }
            }
        }
        r
    }

    fn frob(a: &[[f64; 4]; 4]) -> f64 {
        a.iter().flatten().map(|v| v * v).sum::<f64>().sqrt()
    }

    #[test]
    fn diagonal_matrix() {
        let m = [
            [1.0, 0.0, 0.0, 0.0],
            [0.0, 2.0, 0.0, 0.0],
            [0.0, 0.0, 3.0, 0.0],
            [0.0, 0.0, 0.0, 4.0],
        ];
        let e = eig_sym4(&m).unwrap();
        assert_eq!(e.values, [4.0, 3.0, 2.0, 1.0]);
        for k in 0..4 {
            let axis = 3 - k;
            assert_eq!(f64::abs(e.vectors[k][axis]), 1.0);
        }
        assert_eq!(e.sweeps, 0);
    }

    #[test]
    fn rank_one_projector() {
        let q = [0.5f64, -0.5, 0.5, 0.5];
        let mut m = [[0.0; 4]; 4];
        for i in 0..4 {
            for j in 0..4 {
                m[i][j] = q[i] * q[j];
            }
        }
        let e = eig_sym4(&m).unwrap();
        assert!((e.values[0] - 1.0).abs() < 1e-12);
        for k in 1..4 {
            assert!(e.values[k].abs() < 1e-12);
        }
        let dot: f64 = (0..4).map(|i| e.vectors[0][i] * q[i]).sum();
        assert!((dot.abs() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_asymmetric() {
        let mut m = [[0.0f64; 4]; 4];
        m[0][1] = 1.0;
        assert!(matches!(eig_sym4(&m), Err(Error::InvalidArgument(_))));
    }

    proptest! {
        #[test]
        fn random_symmetric_reconstructs(entries in proptest::collection::vec(-10.0f64..10.0, 10)) {
            let mut m = [[0.0; 4]; 4];
            let mut k = 0;
            for i in 0..4 {
                for j in i..4 {
                    m[i][j] = entries[k];
                    m[j][i] = entries[k];
                    k += 1;
                }
            }
            let e = eig_sym4(&m).unwrap();
            let r = reconstruct(&e);
            let mut diff = [[0.0; 4]; 4];
            for i in 0..4 {
                for j in 0..4 {
                    diff[i][j] = r[i][j] - m[i][j];
                }
            }
            prop_assert!(frob(&diff) < 1e-9 * frob(&m).max(f64::MIN_POSITIVE));
            for a in 0..4 {
                for b in 0..4 {
                    let d: f64 = (0..4).map(|i| e.vectors[a][i] * e.vectors[b][i]).sum();
                    let want = if a == b { 1.0 } else { 0.0 };
                    prop_assert!((d - want).abs() < 1e-9);
                }
            }
            prop_assert!(e.values.windows(2).all(|w| w[0] >= w[1]));
            prop_assert!(e.sweeps <= MAX_SWEEPS);
        }
    }
}
