//! Independent reference implementations backing the test suites.
//!
//! Everything here recomputes a result through a different algorithm than
//! the library path it checks (cyclic Jacobi rotations instead of the
//! tridiagonal QR eigensolver), so agreement is evidence, not tautology.
//! Not part of the supported API.
#![doc(hidden)]

use nalgebra::DMatrix;

/// Eigen-decomposition of a symmetric matrix by the cyclic Jacobi method.
/// Returns (eigenvalues descending, eigenvectors as columns).
pub fn jacobi_eigen(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = m.nrows();
    assert_eq!(n, m.ncols(), "jacobi_eigen needs a square matrix");
    let mut a = (m + m.transpose()) * 0.5;
    let mut v = DMatrix::identity(n, n);

    for _sweep in 0..100 {
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += a[(p, q)] * a[(p, q)];
            }
        }
        if off.sqrt() < 1e-14 * (1.0 + a.norm()) {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = if theta >= 0.0 {
                    1.0 / (theta + (1.0 + theta * theta).sqrt())
                } else {
                    -1.0 / (-theta + (1.0 + theta * theta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                for r in 0..n {
                    let arp = a[(r, p)];
                    let arq = a[(r, q)];
                    a[(r, p)] = c * arp - s * arq;
                    a[(r, q)] = s * arp + c * arq;
                }
                for cidx in 0..n {
                    let apc = a[(p, cidx)];
                    let aqc = a[(q, cidx)];
                    a[(p, cidx)] = c * apc - s * aqc;
                    a[(q, cidx)] = s * apc + c * aqc;
                }
                for r in 0..n {
                    let vrp = v[(r, p)];
                    let vrq = v[(r, q)];
                    v[(r, p)] = c * vrp - s * vrq;
                    v[(r, q)] = s * vrp + c * vrq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| a[(y, y)].total_cmp(&a[(x, x)]));
    let values: Vec<f64> = order.iter().map(|&i| a[(i, i)]).collect();
    let vectors =
        DMatrix::from_columns(&order.iter().map(|&i| v.column(i)).collect::<Vec<_>>());
    (values, vectors)
}

/// PSD projection by Jacobi eigendecomposition and eigenvalue clamping.
pub fn eigen_clip_psd(m: &DMatrix<f64>) -> DMatrix<f64> {
    let (values, vectors) = jacobi_eigen(m);
    rebuild(&values.iter().map(|v| v.max(0.0)).collect::<Vec<_>>(), &vectors)
}

/// Best rank-p PSD approximation by Jacobi spectral truncation.
pub fn spectral_truncate(m: &DMatrix<f64>, p: usize) -> DMatrix<f64> {
    let (values, vectors) = jacobi_eigen(m);
    let clipped: Vec<f64> = values
        .iter()
        .enumerate()
        .map(|(i, v)| if i < p { v.max(0.0) } else { 0.0 })
        .collect();
    rebuild(&clipped, &vectors)
}

fn rebuild(values: &[f64], vectors: &DMatrix<f64>) -> DMatrix<f64> {
    let n = values.len();
    let mut scaled = vectors.clone();
    for c in 0..n {
        scaled.column_mut(c).scale_mut(values[c]);
    }
    &scaled * vectors.transpose()
}
