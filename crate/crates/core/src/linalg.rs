//! Dense helpers shared by the Poincare measurement and the elliptic solver.

use nalgebra::DMatrix;

/// Singular values and right singular vectors (columns of `v`) of `m`.
#[derive(Debug, Clone)]
pub(crate) struct RightSvd {
    pub sigma: Vec<f64>,
    pub v: DMatrix<f64>,
}

/// The library SVD is accepted only when it reconstructs `m`; the transpose
/// is tried next and one-sided Jacobi is the last resort. Some small,
/// well-conditioned matrices make the bidiagonal iteration return an
/// inconsistent factorization without reporting failure.
pub(crate) fn right_svd(m: &DMatrix<f64>) -> RightSvd {
    let scale = m.amax().max(f64::MIN_POSITIVE);
    let tol = 1e-12 * scale * (m.nrows().max(m.ncols()) as f64);
    let k = m.nrows().min(m.ncols());

    let svd = m.clone().svd(true, true);
    if let (Some(u), Some(v_t)) = (&svd.u, &svd.v_t) {
        let rec = u * DMatrix::from_diagonal(&svd.singular_values) * v_t;
        if (rec - m).amax() <= tol && m.ncols() == k {
            return RightSvd {
                sigma: svd.singular_values.iter().copied().collect(),
                v: v_t.transpose(),
            };
        }
    }
    let mt = m.transpose();
    let svd = mt.clone().svd(true, true);
    if let (Some(u), Some(v_t)) = (&svd.u, &svd.v_t) {
        let rec = u * DMatrix::from_diagonal(&svd.singular_values) * v_t;
        if (rec - &mt).amax() <= tol && m.ncols() == k {
            return RightSvd {
                sigma: svd.singular_values.iter().copied().collect(),
                v: u.clone(),
            };
        }
    }
    jacobi_svd(m)
}

/// One-sided (Hestenes) Jacobi SVD; requires `nrows >= ncols`.
pub(crate) fn jacobi_svd(m: &DMatrix<f64>) -> RightSvd {
    let (rows, n) = m.shape();
    assert!(rows >= n, "jacobi_svd needs a tall matrix");
    let mut a = m.clone();
    let mut v = DMatrix::identity(n, n);
    for _sweep in 0..80 {
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let alpha = a.column(p).norm_squared();
                let beta = a.column(q).norm_squared();
                let gamma = a.column(p).dot(&a.column(q));
                if gamma == 0.0 || gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for i in 0..rows {
                    let (x, y) = (a[(i, p)], a[(i, q)]);
                    a[(i, p)] = c * x - s * y;
                    a[(i, q)] = s * x + c * y;
                }
                for i in 0..n {
                    let (x, y) = (v[(i, p)], v[(i, q)]);
                    v[(i, p)] = c * x - s * y;
                    v[(i, q)] = s * x + c * y;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let sigma = (0..n).map(|j| a.column(j).norm()).collect();
    RightSvd { sigma, v }
}
