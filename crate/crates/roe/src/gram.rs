//! Gram-matrix utilities: distance map, PSD projection, eigen-factorization
//! and rank truncation.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

/// Eigenvalues above -PSD_TOL count as numerically non-negative.
pub const PSD_TOL: f64 = 1e-9;

/// Relative singular-value cutoff for numerical rank decisions.
pub const RANK_TOL: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum GramError {
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("non-finite entries in input matrix")]
    NonFinite,
    #[error("target rank {p} exceeds dimension {n}")]
    RankTooLarge { p: usize, n: usize },
}

/// A p×n coordinate matrix X with X'X reproducing a Gram matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    pub coords: DMatrix<f64>,
}

impl Embedding {
    pub fn p(&self) -> usize {
        self.coords.nrows()
    }

    pub fn n(&self) -> usize {
        self.coords.ncols()
    }

    pub fn gram(&self) -> DMatrix<f64> {
        self.coords.transpose() * &self.coords
    }

    /// Squared distance between embedded points a and b.
    pub fn sq_distance(&self, a: usize, b: usize) -> f64 {
        (self.coords.column(a) - self.coords.column(b)).norm_squared()
    }
}

fn check_square(m: &DMatrix<f64>) -> Result<usize, GramError> {
    if m.nrows() != m.ncols() {
        return Err(GramError::NotSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    Ok(m.nrows())
}

/// Squared-distance matrix of a Gram matrix: D_ij = g_ii - 2 g_ij + g_jj.
/// Entries in (-PSD_TOL, 0) are floating-point drift and clamp to zero.
pub fn gram_to_distance(gram: &DMatrix<f64>) -> Result<DMatrix<f64>, GramError> {
    let n = check_square(gram)?;
    let mut d = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let mut v = gram[(i, i)] - 2.0 * gram[(i, j)] + gram[(j, j)];
            if v < 0.0 && v > -PSD_TOL {
                v = 0.0;
            }
            d[(i, j)] = v;
            d[(j, i)] = v;
        }
    }
    Ok(d)
}

/// Eigen-pairs of a symmetric matrix, eigenvalues in descending order.
///
/// Each eigenvector's sign is fixed so its first nonzero component is
/// positive; exact eigenvalue ties are ordered by ascending lexicographic
/// comparison of the vectors. Keeps repeated factorizations reproducible.
pub fn sorted_symmetric_eigen(m: &DMatrix<f64>) -> Result<(DVector<f64>, DMatrix<f64>), GramError> {
    let n = check_square(m)?;
    if m.iter().any(|v| !v.is_finite()) {
        return Err(GramError::NonFinite);
    }
    let sym = (m + m.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let mut vectors = eig.eigenvectors;
    for c in 0..n {
        let mut col = vectors.column_mut(c);
        if let Some(lead) = col.iter().find(|v| **v != 0.0) {
            if *lead < 0.0 {
                col.neg_mut();
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .total_cmp(&eig.eigenvalues[a])
            .then_with(|| {
                vectors
                    .column(a)
                    .iter()
                    .zip(vectors.column(b).iter())
                    .map(|(x, y)| x.total_cmp(y))
                    .find(|o| o.is_ne())
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
    });
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let vectors = DMatrix::from_columns(&order.iter().map(|&i| vectors.column(i)).collect::<Vec<_>>());
    Ok((values, vectors))
}

/// Frobenius-nearest PSD matrix: eigendecompose, clamp negative eigenvalues
/// to zero, reassemble. The input is symmetrized first.
pub fn psd_project(m: &DMatrix<f64>) -> Result<DMatrix<f64>, GramError> {
    let (values, vectors) = sorted_symmetric_eigen(m)?;
    Ok(reassemble(&values.map(|v| v.max(0.0)), &vectors))
}

/// Top-p spectral factor: X = Λ_p^{1/2} V_p' with X'X the best rank-p PSD
/// approximation of G. Negative eigenvalues within the numerical-PSD band
/// are treated as zero.
pub fn factorize(gram: &DMatrix<f64>, p: usize) -> Result<Embedding, GramError> {
    let n = check_square(gram)?;
    if p > n {
        return Err(GramError::RankTooLarge { p, n });
    }
    let (values, vectors) = sorted_symmetric_eigen(gram)?;
    let mut coords = DMatrix::zeros(p, n);
    for r in 0..p {
        let scale = values[r].max(0.0).sqrt();
        for c in 0..n {
            coords[(r, c)] = scale * vectors[(c, r)];
        }
    }
    Ok(Embedding { coords })
}

/// Zero out the smallest n - p eigenvalues (and any negative ones among the
/// kept block): the per-iteration projection used by the baselines.
pub fn truncate_rank(gram: &DMatrix<f64>, p: usize) -> Result<DMatrix<f64>, GramError> {
    let n = check_square(gram)?;
    if p > n {
        return Err(GramError::RankTooLarge { p, n });
    }
    let (values, vectors) = sorted_symmetric_eigen(gram)?;
    let clipped = DVector::from_fn(n, |i, _| if i < p { values[i].max(0.0) } else { 0.0 });
    Ok(reassemble(&clipped, &vectors))
}

fn reassemble(values: &DVector<f64>, vectors: &DMatrix<f64>) -> DMatrix<f64> {
    let n = values.len();
    let mut scaled = vectors.clone();
    for c in 0..n {
        scaled.column_mut(c).scale_mut(values[c]);
    }
    &scaled * vectors.transpose()
}

/// Count of eigenvalues with |λ| above RANK_TOL · max|λ|.
pub fn numerical_rank(m: &DMatrix<f64>) -> Result<usize, GramError> {
    let (values, _) = sorted_symmetric_eigen(m)?;
    let max = values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if max == 0.0 {
        return Ok(0);
    }
    Ok(values.iter().filter(|v| v.abs() > RANK_TOL * max).count())
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(m: &DMatrix<f64>) -> Result<f64, GramError> {
    let (values, _) = sorted_symmetric_eigen(m)?;
    Ok(values[values.len() - 1])
}
