//! Semidefinite rank reduction: walk the constraint-preserving affine slice
//! of the PSD cone down to a boundary point of lower rank.
//!
//! Given G = UU' and constraint matrices A_c, any symmetric Δ with
//! ⟨Δ, U'A_cU⟩ = 0 for all c yields an update U(I - Δ/σ₁)U' that keeps
//! every ⟨G, A_c⟩ fixed, stays PSD, and drops the rank by the multiplicity
//! of Δ's max-magnitude eigenvalue σ₁.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::gram::{self, sorted_symmetric_eigen, PSD_TOL, RANK_TOL};
use crate::graph::ComparisonGraph;

#[derive(Debug, Error)]
pub enum RankReductionError {
    #[error("update direction has zero spectrum")]
    ZeroPivot,
    #[error("reduction step failed to decrease the rank")]
    NoProgress,
    #[error(transparent)]
    Gram(#[from] gram::GramError),
}

/// Factorized iterate G = UU' plus the edge tuples it is constrained by.
#[derive(Debug, Clone)]
pub struct RankReductionWorkspace {
    /// n×r factor, full column rank.
    factor: DMatrix<f64>,
    tuples: Vec<[usize; 4]>,
}

impl RankReductionWorkspace {
    /// Factorize a (numerically) PSD matrix, keeping eigenvalues above
    /// PSD_TOL relative to the largest. A slightly indefinite input is
    /// thereby projected onto the cone.
    pub fn from_gram(
        gram: &DMatrix<f64>,
        graph: &ComparisonGraph,
    ) -> Result<Self, RankReductionError> {
        let (values, vectors) = sorted_symmetric_eigen(gram)?;
        let lmax = values.iter().fold(0.0f64, |a, v| a.max(*v));
        let r = values
            .iter()
            .filter(|&&v| v > PSD_TOL * lmax.max(1e-300))
            .count();
        let n = gram.nrows();
        let mut factor = DMatrix::zeros(n, r);
        for c in 0..r {
            let s = values[c].sqrt();
            for row in 0..n {
                factor[(row, c)] = s * vectors[(row, c)];
            }
        }
        Ok(RankReductionWorkspace {
            factor,
            tuples: graph.edges().iter().map(|e| e.tuple()).collect(),
        })
    }

    pub fn rank(&self) -> usize {
        self.factor.ncols()
    }

    pub fn factor(&self) -> &DMatrix<f64> {
        &self.factor
    }

    pub fn gram(&self) -> DMatrix<f64> {
        &self.factor * self.factor.transpose()
    }

    /// Reduced constraint matrices U'A_cU, one per edge. Each A_c is a
    /// difference of two rank-one terms, so the reduction is two outer
    /// products of row differences of U.
    pub fn reduced_constraints(&self) -> Vec<DMatrix<f64>> {
        let r = self.rank();
        self.tuples
            .iter()
            .map(|&[i, j, l, k]| {
                let mut out = DMatrix::zeros(r, r);
                accumulate_reduced(&mut out, &self.factor, i, j, 1.0);
                accumulate_reduced(&mut out, &self.factor, l, k, -1.0);
                out
            })
            .collect()
    }

    /// Apply one update G* = U(I - Δ/σ₁)U' for a unit-Frobenius symmetric
    /// null direction Δ. Returns the new (strictly smaller) rank.
    pub fn reduce_once(&mut self, delta: &DMatrix<f64>) -> Result<usize, RankReductionError> {
        let r = self.rank();
        assert_eq!(delta.nrows(), r, "direction dimension matches factor rank");
        let (values, vectors) = sorted_symmetric_eigen(delta)?;
        // Signed eigenvalue of maximum magnitude.
        let sigma1 = values
            .iter()
            .copied()
            .max_by(|a, b| a.abs().total_cmp(&b.abs()))
            .unwrap_or(0.0);
        if sigma1.abs() < 1e-300 {
            return Err(RankReductionError::ZeroPivot);
        }
        // Eigenvalues of I - Δ/σ₁ lie in [0, 2]; those at σ₁ become zero.
        let mut keep: Vec<(usize, f64)> = Vec::with_capacity(r);
        for idx in 0..r {
            let f = 1.0 - values[idx] / sigma1;
            if f > 1e-9 {
                keep.push((idx, f));
            }
        }
        if keep.len() >= r {
            return Err(RankReductionError::NoProgress);
        }
        let mut basis = DMatrix::zeros(r, keep.len());
        for (col, &(idx, f)) in keep.iter().enumerate() {
            let s = f.sqrt();
            for row in 0..r {
                basis[(row, col)] = s * vectors[(row, idx)];
            }
        }
        self.factor = &self.factor * basis;
        Ok(self.rank())
    }
}

fn accumulate_reduced(out: &mut DMatrix<f64>, u: &DMatrix<f64>, a: usize, b: usize, sign: f64) {
    let r = out.nrows();
    // (u_a - u_b)(u_a - u_b)' from the rows of U.
    for p in 0..r {
        let dp = u[(a, p)] - u[(b, p)];
        for q in 0..r {
            let dq = u[(a, q)] - u[(b, q)];
            out[(p, q)] += sign * dp * dq;
        }
    }
}

/// A nonzero unit-Frobenius symmetric Δ with ⟨Δ, U'A_cU⟩ ≈ 0 for all c, or
/// None when the numerical null space is trivial.
///
/// The |E| × r(r+1)/2 system of scaled upper-triangle vectorizations is
/// decomposed by SVD; right singular vectors below 1e-8·σ_max span the null
/// space. Among a multi-dimensional null space the direction whose
/// max-magnitude eigenvalue has the largest multiplicity wins (bigger rank
/// drop per step), ties by first index.
pub fn find_null_direction(rank: usize, reduced: &[DMatrix<f64>]) -> Option<DMatrix<f64>> {
    if rank == 0 {
        return None;
    }
    let m = rank * (rank + 1) / 2;
    if reduced.is_empty() {
        return Some(canonical_direction(rank));
    }
    // Padding with zero rows keeps the full set of right singular vectors
    // available when |E| < m.
    let rows = reduced.len().max(m);
    let mut system = DMatrix::zeros(rows, m);
    for (row, mat) in reduced.iter().enumerate() {
        let mut col = 0;
        for b in 0..rank {
            for a in 0..=b {
                system[(row, col)] = if a == b {
                    mat[(a, b)]
                } else {
                    std::f64::consts::SQRT_2 * mat[(a, b)]
                };
                col += 1;
            }
        }
    }
    let svd = system.svd(false, true);
    let v_t = svd.v_t.expect("SVD with V requested");
    let sigma_max = svd.singular_values.iter().fold(0.0f64, |a, v| a.max(*v));
    if sigma_max == 0.0 {
        // Every direction is null: the constraints do not see U at all.
        return Some(canonical_direction(rank));
    }
    let threshold = RANK_TOL * sigma_max;
    let mut best: Option<(usize, DMatrix<f64>)> = None;
    for (idx, sigma) in svd.singular_values.iter().enumerate() {
        if *sigma >= threshold {
            continue;
        }
        let delta = unvech(rank, &v_t.row(idx).transpose());
        let mult = pivot_multiplicity(&delta);
        match &best {
            Some((best_mult, _)) if *best_mult >= mult => {}
            _ => best = Some((mult, delta)),
        }
    }
    best.map(|(_, d)| d)
}

fn canonical_direction(rank: usize) -> DMatrix<f64> {
    let mut d = DMatrix::zeros(rank, rank);
    d[(0, 0)] = 1.0;
    d
}

/// Symmetric matrix from a scaled upper-triangle vectorization; unit vector
/// in, unit Frobenius norm out.
fn unvech(rank: usize, v: &DVector<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(rank, rank);
    let mut col = 0;
    for b in 0..rank {
        for a in 0..=b {
            if a == b {
                out[(a, b)] = v[col];
            } else {
                let val = v[col] / std::f64::consts::SQRT_2;
                out[(a, b)] = val;
                out[(b, a)] = val;
            }
            col += 1;
        }
    }
    out
}

/// Multiplicity of the max-magnitude eigenvalue (the rank drop this
/// direction buys).
fn pivot_multiplicity(delta: &DMatrix<f64>) -> usize {
    let Ok((values, _)) = sorted_symmetric_eigen(delta) else {
        return 0;
    };
    let sigma1 = values
        .iter()
        .copied()
        .max_by(|a, b| a.abs().total_cmp(&b.abs()))
        .unwrap_or(0.0);
    if sigma1 == 0.0 {
        return 0;
    }
    values
        .iter()
        .filter(|v| (**v - sigma1).abs() <= 1e-9 * sigma1.abs())
        .count()
}

#[derive(Debug, Clone)]
pub struct RankReductionOutcome {
    pub gram: DMatrix<f64>,
    pub initial_rank: usize,
    pub final_rank: usize,
    /// Number of reduce_once steps taken.
    pub reductions: usize,
    /// Rank after each step, starting with the initial rank.
    pub rank_history: Vec<usize>,
    /// True when the loop stopped at rank <= p rather than on an empty
    /// null space.
    pub reached_target: bool,
}

/// Loop reduce_once until the null space is trivial or the rank is at most
/// p. Every ⟨G, A_c⟩ is preserved throughout, so any objective that sees G
/// only through the constraints is unchanged.
pub fn rank_reduce(
    gram: &DMatrix<f64>,
    graph: &ComparisonGraph,
    p: usize,
) -> Result<RankReductionOutcome, RankReductionError> {
    let mut ws = RankReductionWorkspace::from_gram(gram, graph)?;
    let initial_rank = ws.rank();
    let mut rank_history = vec![initial_rank];
    let mut reductions = 0;
    while ws.rank() > p {
        let reduced = ws.reduced_constraints();
        let Some(delta) = find_null_direction(ws.rank(), &reduced) else {
            break;
        };
        let new_rank = ws.reduce_once(&delta)?;
        rank_history.push(new_rank);
        reductions += 1;
    }
    let final_rank = ws.rank();
    Ok(RankReductionOutcome {
        gram: ws.gram(),
        initial_rank,
        final_rank,
        reductions,
        rank_history,
        reached_target: final_rank <= p,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{Annotation, ComparisonGraph, ConstraintMatrix, Pair};
    use crate::solver;
    use approx::assert_relative_eq;
    use nalgebra::DVector;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn quad(i: u32, j: u32, l: u32, k: u32) -> Annotation {
        Annotation::Quadruple { i, j, l, k }
    }

    fn valid(a: &Annotation) -> bool {
        let [i, j, l, k] = a.indices();
        i != j && l != k && Pair::new(i, j) != Pair::new(l, k)
    }

    fn random_graph(n: usize, edges: usize, rng: &mut impl Rng) -> ComparisonGraph {
        let mut anns = Vec::new();
        while anns.len() < edges {
            let i = rng.gen_range(0..n as u32);
            let j = (i + rng.gen_range(1..n as u32)) % n as u32;
            let l = rng.gen_range(0..n as u32);
            let k = (l + rng.gen_range(1..n as u32)) % n as u32;
            let a = quad(i, j, l, k);
            if valid(&a) {
                anns.push(a);
            }
        }
        ComparisonGraph::ingest(&anns, Some(n)).unwrap()
    }

    fn random_psd(n: usize, rank: usize, rng: &mut impl Rng) -> DMatrix<f64> {
        let x = DMatrix::from_fn(rank, n, |_, _| rng.gen_range(-1.0..1.0));
        x.transpose() * x
    }

    #[test]
    fn reduced_constraints_with_identity_factor_recover_a_c() {
        let graph = ComparisonGraph::ingest(
            &[quad(0, 1, 2, 3), Annotation::Triple { i: 1, j: 0, k: 3 }],
            Some(4),
        )
        .unwrap();
        // G = I has factor U = I (up to column signs, which cancel).
        let ws = RankReductionWorkspace::from_gram(&DMatrix::identity(4, 4), &graph).unwrap();
        for (mat, edge) in ws.reduced_constraints().iter().zip(graph.edges()) {
            let dense = ConstraintMatrix::for_edge(edge, 4).to_dense();
            assert!((mat - dense).norm() < 1e-9);
        }
    }

    #[test]
    fn reduced_constraint_adjoint_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let graph = random_graph(6, 8, &mut rng);
        let gram = random_psd(6, 4, &mut rng);
        let ws = RankReductionWorkspace::from_gram(&gram, &graph).unwrap();
        let u = ws.factor().clone();
        let r = ws.rank();
        let reduced = ws.reduced_constraints();
        for _ in 0..10 {
            let d = DMatrix::from_fn(r, r, |_, _| rng.gen_range(-1.0..1.0));
            let delta = (&d + d.transpose()) * 0.5;
            let lifted = &u * &delta * u.transpose();
            for (mat, edge) in reduced.iter().zip(graph.edges()) {
                let lhs = delta.dot(mat);
                let rhs = ConstraintMatrix::for_edge(edge, 6).inner(&lifted);
                assert_relative_eq!(lhs, rhs, max_relative = 1e-12, epsilon = 1e-12);
            }
        }
        // Δ = 0 zeroes every inner product.
        let zero = DMatrix::zeros(r, r);
        for mat in &reduced {
            assert_eq!(zero.dot(mat), 0.0);
        }
    }

    #[test]
    fn null_direction_without_constraints_is_canonical() {
        let delta = find_null_direction(3, &[]).unwrap();
        let mut expected = DMatrix::zeros(3, 3);
        expected[(0, 0)] = 1.0;
        assert_eq!(delta, expected);
    }

    #[test]
    fn null_direction_vanishes_when_constraints_fill_the_space() {
        // r = 2 gives a 3-dimensional symmetric space; more independent
        // constraints than that leaves only the trivial solution.
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        let graph = random_graph(5, 12, &mut rng);
        let gram = random_psd(5, 2, &mut rng);
        let ws = RankReductionWorkspace::from_gram(&gram, &graph).unwrap();
        assert_eq!(ws.rank(), 2);
        assert!(find_null_direction(2, &ws.reduced_constraints()).is_none());
    }

    #[test]
    fn null_direction_is_orthogonal_to_a_single_constraint() {
        let mut rng = ChaCha8Rng::seed_from_u64(47);
        let graph = ComparisonGraph::ingest(&[quad(0, 1, 2, 3)], Some(4)).unwrap();
        let gram = random_psd(4, 2, &mut rng);
        let ws = RankReductionWorkspace::from_gram(&gram, &graph).unwrap();
        let reduced = ws.reduced_constraints();
        let delta = find_null_direction(2, &reduced).unwrap();
        assert_relative_eq!(delta.norm(), 1.0, max_relative = 1e-9);
        assert!(delta.dot(&reduced[0]).abs() < 1e-8);
    }

    #[test]
    fn identity_direction_collapses_to_zero() {
        let graph = ComparisonGraph::ingest(&[quad(0, 1, 2, 3)], Some(4)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(53);
        let gram = random_psd(4, 3, &mut rng);
        let mut ws = RankReductionWorkspace::from_gram(&gram, &graph).unwrap();
        let r = ws.rank();
        let delta = DMatrix::identity(r, r) / (r as f64).sqrt();
        let new_rank = ws.reduce_once(&delta).unwrap();
        assert_eq!(new_rank, 0);
        assert!(ws.gram().norm() < 1e-12);
    }

    #[test]
    fn reduce_once_preserves_constraints_and_drops_rank_by_multiplicity() {
        let mut rng = ChaCha8Rng::seed_from_u64(59);
        let mut exercised = 0;
        for trial in 0..10 {
            let graph = random_graph(6, 3, &mut rng);
            let gram = random_psd(6, 6, &mut rng);
            let mut ws = RankReductionWorkspace::from_gram(&gram, &graph).unwrap();
            let before_rank = ws.rank();
            let before_vals = graph.apply_design(&ws.gram()).unwrap();
            let reduced = ws.reduced_constraints();
            let Some(delta) = find_null_direction(before_rank, &reduced) else {
                continue;
            };
            let mult = pivot_multiplicity(&delta);
            let after_rank = ws.reduce_once(&delta).unwrap();
            assert_eq!(after_rank, before_rank - mult, "trial {trial}");
            let after_vals = graph.apply_design(&ws.gram()).unwrap();
            assert!((before_vals - after_vals).amax() < 1e-8);
            assert!(crate::gram::min_eigenvalue(&ws.gram()).unwrap() >= -PSD_TOL);
            exercised += 1;
        }
        assert!(exercised > 0);
    }

    #[test]
    fn rank_reduce_respects_counting_bound() {
        // Rank-8 start, 3 constraints: the final rank r* obeys
        // r*(r*+1)/2 <= 3, i.e. r* <= 2.
        let mut rng = ChaCha8Rng::seed_from_u64(61);
        let graph = random_graph(8, 3, &mut rng);
        let gram = random_psd(8, 8, &mut rng);
        let before = graph.apply_design(&gram).unwrap();
        let outcome = rank_reduce(&gram, &graph, 1).unwrap();
        assert_eq!(outcome.initial_rank, 8);
        assert!(outcome.final_rank <= 2, "final rank {}", outcome.final_rank);
        assert!(outcome.rank_history.windows(2).all(|w| w[1] < w[0]));
        assert!(outcome.rank_history.len() <= outcome.initial_rank + 1);
        let after = graph.apply_design(&outcome.gram).unwrap();
        assert!((before - after).amax() < 1e-8);
    }

    #[test]
    fn rank_reduce_noop_at_target_rank() {
        let mut rng = ChaCha8Rng::seed_from_u64(67);
        let graph = random_graph(5, 10, &mut rng);
        let gram = random_psd(5, 2, &mut rng);
        let outcome = rank_reduce(&gram, &graph, 2).unwrap();
        assert_eq!(outcome.reductions, 0);
        assert!((outcome.gram - gram).norm() < 1e-9);
    }

    #[test]
    fn rank_reduce_preserves_objective() {
        let mut rng = ChaCha8Rng::seed_from_u64(71);
        let graph = random_graph(7, 4, &mut rng);
        let gram = random_psd(7, 7, &mut rng);
        let gamma = DVector::from_fn(graph.num_edges(), |_, _| rng.gen_range(-0.5..0.5));
        let problem = solver::RoeProblem::new(graph, 0.7, 2).unwrap();
        let before = solver::objective(&problem, &gram, &gamma);
        let outcome = rank_reduce(&gram, &problem.graph, 2).unwrap();
        assert!(outcome.reductions > 0);
        let after = solver::objective(&problem, &outcome.gram, &gamma);
        assert!((before - after).abs() < 1e-10 * (1.0 + before.abs()));
    }
}
