//! Directed comparison multigraph over object pairs.
//!
//! Vertices are unordered object pairs; a directed edge from pair (i,j) to
//! pair (l,k) aggregates every vote claiming (i,j) is the more similar pair.
//! Opposite edges may coexist — contradictions are kept, not pruned.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

/// One raw relative-similarity annotation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Annotation {
    /// Pair (i,j) judged more similar than pair (l,k).
    Quadruple { i: u32, j: u32, l: u32, k: u32 },
    /// Pair (i,j) judged more similar than pair (i,k); shorthand for the
    /// quadruple (i,j,i,k).
    Triple { i: u32, j: u32, k: u32 },
}

impl Annotation {
    pub fn indices(&self) -> [u32; 4] {
        match *self {
            Annotation::Quadruple { i, j, l, k } => [i, j, l, k],
            Annotation::Triple { i, j, k } => [i, j, i, k],
        }
    }

    pub fn max_index(&self) -> u32 {
        self.indices().into_iter().max().unwrap()
    }

    /// The same comparison with its direction flipped.
    pub fn reversed(&self) -> Annotation {
        match *self {
            Annotation::Quadruple { i, j, l, k } => Annotation::Quadruple { i: l, j: k, l: i, k: j },
            Annotation::Triple { i, j, k } => Annotation::Triple { i, j: k, k: j },
        }
    }

    fn check_degenerate(&self) -> Result<(), DegenerateKind> {
        let [i, j, l, k] = self.indices();
        if i == j {
            return Err(DegenerateKind::EqualSource);
        }
        if l == k {
            return Err(DegenerateKind::EqualTarget);
        }
        if Pair::new(i, j) == Pair::new(l, k) {
            return Err(DegenerateKind::SamePair);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DegenerateKind {
    /// i = j
    EqualSource,
    /// l = k
    EqualTarget,
    /// {i,j} = {l,k}
    SamePair,
}

impl std::fmt::Display for DegenerateKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DegenerateKind::EqualSource => write!(f, "source pair indices coincide (i = j)"),
            DegenerateKind::EqualTarget => write!(f, "target pair indices coincide (l = k)"),
            DegenerateKind::SamePair => write!(f, "source and target are the same pair"),
        }
    }
}

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("record {record}: index {found} out of range for n = {n} ({annotation:?})")]
    IndexOutOfRange {
        record: usize,
        found: u32,
        n: usize,
        annotation: Annotation,
    },
    #[error("record {record}: {kind} ({annotation:?})")]
    Degenerate {
        record: usize,
        kind: DegenerateKind,
        annotation: Annotation,
    },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

/// Unordered object pair, stored as (min, max).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Pair(pub u32, pub u32);

impl Pair {
    pub fn new(a: u32, b: u32) -> Self {
        if a <= b {
            Pair(a, b)
        } else {
            Pair(b, a)
        }
    }
}

/// All votes sharing one direction between two pair-vertices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AggregatedEdge {
    /// Source pair: the side voted more similar.
    pub source: Pair,
    /// Target pair: the side voted less similar.
    pub target_pair: Pair,
    /// Vote count w_c (always >= 1 for a stored edge).
    pub weight: u32,
    /// Direction target y_c for this row's own orientation.
    pub target: f64,
}

impl AggregatedEdge {
    /// (i, j, l, k) with both pairs in canonical order.
    pub fn tuple(&self) -> [usize; 4] {
        [
            self.source.0 as usize,
            self.source.1 as usize,
            self.target_pair.0 as usize,
            self.target_pair.1 as usize,
        ]
    }

    /// True when the two pairs share an object (triple-form comparison).
    pub fn is_triple(&self) -> bool {
        let s = self.source;
        let t = self.target_pair;
        s.0 == t.0 || s.0 == t.1 || s.1 == t.0 || s.1 == t.1
    }

    /// The shared object and the two compared ones, if triple-form.
    pub fn as_triple(&self) -> Option<(u32, u32, u32)> {
        let Pair(a, b) = self.source;
        let Pair(c, d) = self.target_pair;
        if a == c {
            Some((a, b, d))
        } else if a == d {
            Some((a, b, c))
        } else if b == c {
            Some((b, a, d))
        } else if b == d {
            Some((b, a, c))
        } else {
            None
        }
    }
}

/// Direction target assigned to every stored edge in its own orientation.
/// The fit pushes d_source - d_target toward this value; the solver scales
/// it by its margin parameter.
pub const DIRECTION_TARGET: f64 = -1.0;

/// Aggregated comparison multigraph: n objects, one row per directed edge.
#[derive(Debug, Clone)]
pub struct ComparisonGraph {
    n: usize,
    edges: Vec<AggregatedEdge>,
}

impl ComparisonGraph {
    /// Aggregate raw annotations, one vote each. See [`ComparisonGraph::ingest_counted`].
    pub fn ingest(annotations: &[Annotation], n: Option<usize>) -> Result<Self, GraphError> {
        Self::ingest_counted(annotations.iter().map(|&a| (a, 1)), n)
    }

    /// Aggregate raw annotations with per-record vote counts.
    ///
    /// Identical directed comparisons merge into one edge whose weight is the
    /// total vote count; opposing annotations produce two distinct edges.
    /// Edges are kept in first-seen order. `n` is inferred as max index + 1
    /// when not given. A record with count 0 stores nothing.
    pub fn ingest_counted(
        items: impl IntoIterator<Item = (Annotation, u32)>,
        n: Option<usize>,
    ) -> Result<Self, GraphError> {
        let mut edges: Vec<AggregatedEdge> = Vec::new();
        let mut index: HashMap<(Pair, Pair), usize> = HashMap::new();
        let mut max_seen: u32 = 0;

        for (record, (annotation, count)) in items.into_iter().enumerate() {
            if let Err(kind) = annotation.check_degenerate() {
                return Err(GraphError::Degenerate {
                    record,
                    kind,
                    annotation,
                });
            }
            let [i, j, l, k] = annotation.indices();
            if let Some(n) = n {
                for idx in [i, j, l, k] {
                    if idx as usize >= n {
                        return Err(GraphError::IndexOutOfRange {
                            record,
                            found: idx,
                            n,
                            annotation,
                        });
                    }
                }
            }
            max_seen = max_seen.max(annotation.max_index());
            if count == 0 {
                continue;
            }
            let key = (Pair::new(i, j), Pair::new(l, k));
            match index.get(&key) {
                Some(&at) => edges[at].weight += count,
                None => {
                    index.insert(key, edges.len());
                    edges.push(AggregatedEdge {
                        source: key.0,
                        target_pair: key.1,
                        weight: count,
                        target: DIRECTION_TARGET,
                    });
                }
            }
        }

        let n = n.unwrap_or(if edges.is_empty() && max_seen == 0 {
            0
        } else {
            max_seen as usize + 1
        });
        Ok(ComparisonGraph { n, edges })
    }

    /// Build directly from already-aggregated edges (used by the pruner).
    pub(crate) fn from_edges(n: usize, edges: Vec<AggregatedEdge>) -> Self {
        ComparisonGraph { n, edges }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[AggregatedEdge] {
        &self.edges
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    /// Vote-count vector w aligned with edge order.
    pub fn weights(&self) -> DVector<f64> {
        DVector::from_iterator(self.edges.len(), self.edges.iter().map(|e| e.weight as f64))
    }

    /// Direction-target vector y aligned with edge order.
    pub fn targets(&self) -> DVector<f64> {
        DVector::from_iterator(self.edges.len(), self.edges.iter().map(|e| e.target))
    }

    /// Position of an edge by its (source, target) pair key.
    pub fn edge_index(&self, source: Pair, target: Pair) -> Option<usize> {
        self.edges
            .iter()
            .position(|e| e.source == source && e.target_pair == target)
    }

    pub fn design_matrix(&self) -> DesignMatrix {
        DesignMatrix::from_graph(self)
    }

    /// Per-edge distance differences ⟨G, A_c⟩ = d_ij - d_lk.
    pub fn apply_design(&self, gram: &DMatrix<f64>) -> Result<DVector<f64>, GraphError> {
        if gram.nrows() != self.n || gram.ncols() != self.n {
            return Err(GraphError::DimensionMismatch {
                expected: self.n,
                got: gram.nrows().max(gram.ncols()),
            });
        }
        Ok(apply_design_tuples(
            self.edges.iter().map(|e| e.tuple()),
            self.edges.len(),
            gram,
        ))
    }

    /// Adjoint of [`ComparisonGraph::apply_design`]: Σ_c r_c A_c.
    pub fn apply_design_adjoint(&self, r: &DVector<f64>) -> Result<DMatrix<f64>, GraphError> {
        if r.len() != self.edges.len() {
            return Err(GraphError::DimensionMismatch {
                expected: self.edges.len(),
                got: r.len(),
            });
        }
        let mut out = DMatrix::zeros(self.n, self.n);
        for (edge, &rc) in self.edges.iter().zip(r.iter()) {
            accumulate_constraint(&mut out, edge.tuple(), rc);
        }
        Ok(out)
    }
}

fn apply_design_tuples(
    tuples: impl Iterator<Item = [usize; 4]>,
    len: usize,
    gram: &DMatrix<f64>,
) -> DVector<f64> {
    let mut out = DVector::zeros(len);
    for (row, [i, j, l, k]) in tuples.enumerate() {
        let dij = gram[(i, i)] - 2.0 * gram[(i, j)] + gram[(j, j)];
        let dlk = gram[(l, l)] - 2.0 * gram[(l, k)] + gram[(k, k)];
        out[row] = dij - dlk;
    }
    out
}

/// out += coeff * A_c for the constraint matrix of tuple (i,j,l,k).
/// Overlapping indices (triple form) accumulate correctly.
pub(crate) fn accumulate_constraint(out: &mut DMatrix<f64>, [i, j, l, k]: [usize; 4], coeff: f64) {
    out[(i, i)] += coeff;
    out[(j, j)] += coeff;
    out[(i, j)] -= coeff;
    out[(j, i)] -= coeff;
    out[(l, l)] -= coeff;
    out[(k, k)] -= coeff;
    out[(l, k)] += coeff;
    out[(k, l)] += coeff;
}

/// Sparse symmetric constraint matrix A_c with ⟨G, A_c⟩ = d_ij - d_lk.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintMatrix {
    n: usize,
    /// Nonzero entries (row, col, value), both triangles, sorted.
    entries: Vec<(usize, usize, f64)>,
}

impl ConstraintMatrix {
    pub fn for_edge(edge: &AggregatedEdge, n: usize) -> Self {
        Self::for_tuple(edge.tuple(), n)
    }

    pub fn for_annotation(annotation: &Annotation, n: usize) -> Self {
        let [i, j, l, k] = annotation.indices();
        Self::for_tuple([i as usize, j as usize, l as usize, k as usize], n)
    }

    pub fn for_tuple(tuple: [usize; 4], n: usize) -> Self {
        let mut map: HashMap<(usize, usize), f64> = HashMap::with_capacity(8);
        let [i, j, l, k] = tuple;
        for (r, c, v) in [
            (i, i, 1.0),
            (j, j, 1.0),
            (i, j, -1.0),
            (j, i, -1.0),
            (l, l, -1.0),
            (k, k, -1.0),
            (l, k, 1.0),
            (k, l, 1.0),
        ] {
            *map.entry((r, c)).or_insert(0.0) += v;
        }
        let mut entries: Vec<(usize, usize, f64)> = map
            .into_iter()
            .filter(|&(_, v)| v != 0.0)
            .map(|((r, c), v)| (r, c, v))
            .collect();
        entries.sort_by_key(|&(r, c, _)| (r, c));
        ConstraintMatrix { n, entries }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn entries(&self) -> &[(usize, usize, f64)] {
        &self.entries
    }

    /// ⟨G, A_c⟩.
    pub fn inner(&self, gram: &DMatrix<f64>) -> f64 {
        self.entries
            .iter()
            .map(|&(r, c, v)| v * gram[(r, c)])
            .sum()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.n, self.n);
        for &(r, c, v) in &self.entries {
            out[(r, c)] = v;
        }
        out
    }
}

/// The |E| x n² design operator whose row for edge c is vec(A_c).
///
/// Rows are never materialized; apply and adjoint act through the sparse
/// constraint patterns. `to_dense` exists for small-n test oracles.
#[derive(Debug, Clone)]
pub struct DesignMatrix {
    n: usize,
    tuples: Vec<[usize; 4]>,
}

impl DesignMatrix {
    pub fn from_graph(graph: &ComparisonGraph) -> Self {
        DesignMatrix {
            n: graph.n(),
            tuples: graph.edges().iter().map(|e| e.tuple()).collect(),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn num_rows(&self) -> usize {
        self.tuples.len()
    }

    /// Z · vec(G), computed row-wise.
    pub fn apply(&self, gram: &DMatrix<f64>) -> Result<DVector<f64>, GraphError> {
        if gram.nrows() != self.n || gram.ncols() != self.n {
            return Err(GraphError::DimensionMismatch {
                expected: self.n,
                got: gram.nrows().max(gram.ncols()),
            });
        }
        Ok(apply_design_tuples(
            self.tuples.iter().copied(),
            self.tuples.len(),
            gram,
        ))
    }

    /// Zᵀ · r reshaped to a symmetric n×n matrix: Σ_c r_c A_c.
    pub fn apply_adjoint(&self, r: &DVector<f64>) -> Result<DMatrix<f64>, GraphError> {
        if r.len() != self.tuples.len() {
            return Err(GraphError::DimensionMismatch {
                expected: self.tuples.len(),
                got: r.len(),
            });
        }
        let mut out = DMatrix::zeros(self.n, self.n);
        for (&tuple, &rc) in self.tuples.iter().zip(r.iter()) {
            accumulate_constraint(&mut out, tuple, rc);
        }
        Ok(out)
    }

    /// Dense |E| × n² materialization, row c = vec(A_c) (row-major vec).
    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.tuples.len(), self.n * self.n);
        for (row, &tuple) in self.tuples.iter().enumerate() {
            let a = ConstraintMatrix::for_tuple(tuple, self.n).to_dense();
            for r in 0..self.n {
                for c in 0..self.n {
                    out[(row, r * self.n + c)] = a[(r, c)];
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn quad(i: u32, j: u32, l: u32, k: u32) -> Annotation {
        Annotation::Quadruple { i, j, l, k }
    }

    fn triple(i: u32, j: u32, k: u32) -> Annotation {
        Annotation::Triple { i, j, k }
    }

    fn random_sym(n: usize, rng: &mut impl Rng) -> DMatrix<f64> {
        let m = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        (&m + m.transpose()) * 0.5
    }

    #[test]
    fn ingest_merges_votes_and_keeps_both_directions() {
        let anns = vec![
            quad(1, 2, 3, 4),
            quad(1, 2, 3, 4),
            quad(1, 2, 3, 4),
            quad(3, 4, 1, 2),
        ];
        let g = ComparisonGraph::ingest(&anns, None).unwrap();
        assert_eq!(g.num_edges(), 2);
        assert_eq!(g.edges()[0].weight, 3);
        assert_eq!(g.edges()[0].source, Pair(1, 2));
        assert_eq!(g.edges()[0].target_pair, Pair(3, 4));
        assert_eq!(g.edges()[1].weight, 1);
        assert_eq!(g.edges()[1].source, Pair(3, 4));
        assert_eq!(g.n(), 5);
    }

    #[test]
    fn ingest_empty_list() {
        let g = ComparisonGraph::ingest(&[], None).unwrap();
        assert_eq!(g.num_edges(), 0);
        assert_eq!(g.n(), 0);
        let g = ComparisonGraph::ingest(&[], Some(7)).unwrap();
        assert_eq!(g.n(), 7);
    }

    #[test]
    fn ingest_merges_pair_order_variants() {
        // (2,1,3,4) is the same directed comparison as (1,2,3,4).
        let g = ComparisonGraph::ingest(&[quad(1, 2, 3, 4), quad(2, 1, 4, 3)], None).unwrap();
        assert_eq!(g.num_edges(), 1);
        assert_eq!(g.edges()[0].weight, 2);
    }

    #[test]
    fn ingest_rejects_bad_records() {
        let err = ComparisonGraph::ingest(&[quad(0, 1, 2, 5)], Some(4)).unwrap_err();
        match err {
            GraphError::IndexOutOfRange { record, found, .. } => {
                assert_eq!(record, 0);
                assert_eq!(found, 5);
            }
            other => panic!("unexpected error {other:?}"),
        }
        for bad in [
            quad(1, 1, 2, 3),
            quad(0, 1, 2, 2),
            quad(0, 1, 1, 0),
            triple(0, 1, 1),
            triple(2, 1, 2),
        ] {
            let err = ComparisonGraph::ingest(&[quad(0, 1, 2, 3), bad], None).unwrap_err();
            match err {
                GraphError::Degenerate { record, .. } => assert_eq!(record, 1),
                other => panic!("unexpected error {other:?}"),
            }
        }
    }

    #[test]
    fn ingest_is_permutation_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut anns: Vec<Annotation> = Vec::new();
        for _ in 0..200 {
            let i = rng.gen_range(0..6u32);
            let j = (i + rng.gen_range(1..6u32)) % 6;
            let l = rng.gen_range(0..6u32);
            let k = (l + rng.gen_range(1..6u32)) % 6;
            if Pair::new(i, j) != Pair::new(l, k) {
                anns.push(quad(i, j, l, k));
            }
        }
        let reference = ComparisonGraph::ingest(&anns, Some(6)).unwrap();
        let mut key: Vec<_> = reference
            .edges()
            .iter()
            .map(|e| (e.source, e.target_pair, e.weight))
            .collect();
        key.sort();
        for _ in 0..5 {
            anns.shuffle(&mut rng);
            let g = ComparisonGraph::ingest(&anns, Some(6)).unwrap();
            let mut k2: Vec<_> = g
                .edges()
                .iter()
                .map(|e| (e.source, e.target_pair, e.weight))
                .collect();
            k2.sort();
            assert_eq!(key, k2);
        }
    }

    #[test]
    fn quadruple_constraint_matrix_pattern() {
        let a = ConstraintMatrix::for_annotation(&quad(0, 1, 2, 3), 4).to_dense();
        let expected = DMatrix::from_row_slice(
            4,
            4,
            &[
                1.0, -1.0, 0.0, 0.0, //
                -1.0, 1.0, 0.0, 0.0, //
                0.0, 0.0, -1.0, 1.0, //
                0.0, 0.0, 1.0, -1.0,
            ],
        );
        assert_eq!(a, expected);
    }

    #[test]
    fn triple_constraint_matrix_pattern() {
        let a = ConstraintMatrix::for_annotation(&triple(0, 1, 2), 3).to_dense();
        let expected = DMatrix::from_row_slice(
            3,
            3,
            &[
                0.0, -1.0, 1.0, //
                -1.0, 1.0, 0.0, //
                1.0, 0.0, -1.0,
            ],
        );
        assert_eq!(a, expected);
        // Ingesting the triple produces an edge with the same pattern.
        let g = ComparisonGraph::ingest(&[triple(0, 1, 2)], Some(3)).unwrap();
        assert_eq!(ConstraintMatrix::for_edge(&g.edges()[0], 3).to_dense(), expected);
    }

    #[test]
    fn constraint_inner_product_is_distance_difference() {
        // Independent route: expand d_ab = g_aa - 2 g_ab + g_bb by hand.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = DMatrix::from_fn(5, 5, |_, _| rng.gen_range(-1.0..1.0));
        let g = x.transpose() * &x; // random PSD 5x5
        for ann in [quad(0, 1, 2, 3), quad(1, 4, 0, 2), triple(2, 0, 4), quad(0, 3, 1, 3)] {
            let a = ConstraintMatrix::for_annotation(&ann, 5);
            let [i, j, l, k] = ann.indices().map(|v| v as usize);
            let expected = (g[(i, i)] - 2.0 * g[(i, j)] + g[(j, j)])
                - (g[(l, l)] - 2.0 * g[(l, k)] + g[(k, k)]);
            assert_relative_eq!(a.inner(&g), expected, max_relative = 1e-12);
        }
    }

    #[test]
    fn constraint_matrices_are_symmetric_with_zero_row_sums() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let i = rng.gen_range(0..7u32);
            let j = (i + rng.gen_range(1..7u32)) % 7;
            let l = rng.gen_range(0..7u32);
            let k = (l + rng.gen_range(1..7u32)) % 7;
            if Pair::new(i, j) == Pair::new(l, k) {
                continue;
            }
            let dense = ConstraintMatrix::for_annotation(&quad(i, j, l, k), 7).to_dense();
            assert_eq!(dense, dense.transpose());
            for r in 0..7 {
                assert_relative_eq!(dense.row(r).sum(), 0.0);
            }
        }
    }

    #[test]
    fn reversed_tuple_negates_constraint_matrix() {
        for ann in [quad(0, 1, 2, 3), triple(1, 0, 3), quad(2, 4, 1, 4)] {
            let a = ConstraintMatrix::for_annotation(&ann, 5).to_dense();
            let b = ConstraintMatrix::for_annotation(&ann.reversed(), 5).to_dense();
            assert_eq!(a, -b);
        }
    }

    #[test]
    fn apply_design_trivial_cases() {
        let g = ComparisonGraph::ingest(&[quad(0, 1, 2, 3)], Some(4)).unwrap();
        let zero = DMatrix::zeros(4, 4);
        assert_eq!(g.apply_design(&zero).unwrap(), DVector::zeros(1));
        let id = DMatrix::identity(4, 4);
        assert_relative_eq!(g.apply_design(&id).unwrap()[0], 0.0);
    }

    #[test]
    fn apply_design_matches_dense_vec_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        for n in [4usize, 6, 8] {
            let mut anns = Vec::new();
            while anns.len() < 12 {
                let i = rng.gen_range(0..n as u32);
                let j = (i + rng.gen_range(1..n as u32)) % n as u32;
                let l = rng.gen_range(0..n as u32);
                let k = (l + rng.gen_range(1..n as u32)) % n as u32;
                if Pair::new(i, j) != Pair::new(l, k) {
                    anns.push(quad(i, j, l, k));
                }
            }
            let graph = ComparisonGraph::ingest(&anns, Some(n)).unwrap();
            let gram = random_sym(n, &mut rng);
            let design = graph.design_matrix();
            let fast = design.apply(&gram).unwrap();
            // Dense oracle: Z · vec(G) with explicit row-major vectorization.
            let z = design.to_dense();
            let gvec = DVector::from_iterator(
                n * n,
                (0..n).flat_map(|r| (0..n).map(move |c| (r, c))).map(|(r, c)| gram[(r, c)]),
            );
            let slow = z * gvec;
            assert_relative_eq!(fast, slow, max_relative = 1e-12);
        }
    }

    #[test]
    fn adjoint_trivial_cases() {
        let g =
            ComparisonGraph::ingest(&[quad(0, 1, 2, 3), triple(1, 2, 0)], Some(4)).unwrap();
        let zero = g.apply_design_adjoint(&DVector::zeros(2)).unwrap();
        assert_eq!(zero, DMatrix::zeros(4, 4));
        let one_hot = DVector::from_vec(vec![0.0, 1.0]);
        let a = g.apply_design_adjoint(&one_hot).unwrap();
        assert_eq!(a, ConstraintMatrix::for_edge(&g.edges()[1], 4).to_dense());
    }

    #[test]
    fn adjoint_identity_holds() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let n = 6;
        let mut anns = Vec::new();
        while anns.len() < 15 {
            let i = rng.gen_range(0..n as u32);
            let j = (i + rng.gen_range(1..n as u32)) % n as u32;
            let l = rng.gen_range(0..n as u32);
            let k = (l + rng.gen_range(1..n as u32)) % n as u32;
            if Pair::new(i, j) != Pair::new(l, k) {
                anns.push(quad(i, j, l, k));
            }
        }
        let graph = ComparisonGraph::ingest(&anns, Some(n)).unwrap();
        for _ in 0..20 {
            let gram = random_sym(n, &mut rng);
            let r = DVector::from_fn(graph.num_edges(), |_, _| rng.gen_range(-1.0..1.0));
            let lhs = graph.apply_design(&gram).unwrap().dot(&r);
            let rhs = (graph.apply_design_adjoint(&r).unwrap().transpose() * &gram).trace();
            assert_relative_eq!(lhs, rhs, max_relative = 1e-12);
        }
    }

    #[test]
    fn dimension_mismatches_are_rejected() {
        let g = ComparisonGraph::ingest(&[quad(0, 1, 2, 3)], Some(4)).unwrap();
        assert!(g.apply_design(&DMatrix::zeros(3, 3)).is_err());
        assert!(g.apply_design_adjoint(&DVector::zeros(2)).is_err());
    }
}
