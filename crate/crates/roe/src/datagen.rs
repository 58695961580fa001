//! Synthetic experiment protocol: Gaussian point cloud, uniform triplet
//! sampling, vote augmentation and outlier injection, with train /
//! validation / test splits. All stages draw from stage-specific streams of
//! one counter-based generator, so a single 64-bit seed reproduces a
//! dataset bit for bit.

use nalgebra::DMatrix;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{Annotation, ComparisonGraph, Pair};

const STREAM_POINTS: u64 = 1;
const STREAM_TRIPLETS: u64 = 2;
const STREAM_VOTES: u64 = 3;
const STREAM_FLIPS: u64 = 4;

fn stage_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Error)]
pub enum DatagenError {
    #[error("requested {requested} triplets but only {available} exist for n = {n}")]
    TooManyTriplets {
        requested: usize,
        available: usize,
        n: usize,
    },
    #[error("invalid spec: {0}")]
    BadSpec(String),
}

/// How outlier flips are distributed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlipMode {
    /// Flip individual votes uniformly; flips may concentrate on a triplet
    /// and outvote its correct direction.
    Vote,
    /// Flip whole triplets: every vote of a chosen triplet reverses.
    Triplet,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    /// Number of objects.
    pub n: usize,
    /// Ambient dimension of the ground-truth points.
    pub dim: usize,
    /// Per-coordinate Gaussian variance.
    pub variance: f64,
    pub train_size: usize,
    pub validation_size: usize,
    /// Vote-count range per training triplet (inclusive).
    pub votes_min: u32,
    pub votes_max: u32,
    /// Fraction q of votes flipped into outliers.
    pub outlier_ratio: f64,
    pub flip_mode: FlipMode,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            n: 100,
            dim: 10,
            variance: 1.0 / 20.0,
            train_size: 10_000,
            validation_size: 10_000,
            votes_min: 15,
            votes_max: 50,
            outlier_ratio: 0.0,
            flip_mode: FlipMode::Vote,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<(), DatagenError> {
        if self.n < 3 {
            return Err(DatagenError::BadSpec("need at least 3 objects".into()));
        }
        if self.dim == 0 {
            return Err(DatagenError::BadSpec("ambient dimension must be positive".into()));
        }
        if !(self.variance > 0.0) {
            return Err(DatagenError::BadSpec("variance must be positive".into()));
        }
        if self.votes_min < 1 || self.votes_min > self.votes_max {
            return Err(DatagenError::BadSpec(format!(
                "bad vote range [{}, {}]",
                self.votes_min, self.votes_max
            )));
        }
        if !(0.0..=1.0).contains(&self.outlier_ratio) {
            return Err(DatagenError::BadSpec(format!(
                "outlier ratio {} outside [0, 1]",
                self.outlier_ratio
            )));
        }
        let available = total_triples(self.n);
        let requested = self.train_size + self.validation_size;
        if requested > available {
            return Err(DatagenError::TooManyTriplets {
                requested,
                available,
                n: self.n,
            });
        }
        Ok(())
    }
}

/// Number of distinct (head, {closer, farther}) triples over n objects.
pub fn total_triples(n: usize) -> usize {
    if n < 3 {
        0
    } else {
        n * (n - 1) * (n - 2) / 2
    }
}

/// A comparison "j is closer to i than k is", oriented so it holds in the
/// generating geometry at creation time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Triplet {
    pub i: u32,
    pub j: u32,
    pub k: u32,
}

impl Triplet {
    pub fn flipped(&self) -> Triplet {
        Triplet {
            i: self.i,
            j: self.k,
            k: self.j,
        }
    }
}

impl From<Triplet> for Annotation {
    fn from(t: Triplet) -> Annotation {
        Annotation::Triple {
            i: t.i,
            j: t.j,
            k: t.k,
        }
    }
}

/// Triplets with per-triplet vote counts and planted-outlier bookkeeping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledTripletSet {
    pub triplets: Vec<Triplet>,
    /// Total votes s_t per triplet.
    pub votes: Vec<u32>,
    /// Votes flipped to the reversed orientation, <= votes elementwise.
    pub flips: Vec<u32>,
}

impl LabeledTripletSet {
    fn unit(triplets: Vec<Triplet>) -> Self {
        let votes = vec![1; triplets.len()];
        let flips = vec![0; triplets.len()];
        LabeledTripletSet {
            triplets,
            votes,
            flips,
        }
    }

    pub fn len(&self) -> usize {
        self.triplets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triplets.is_empty()
    }

    pub fn total_votes(&self) -> u64 {
        self.votes.iter().map(|&v| v as u64).sum()
    }

    pub fn total_flips(&self) -> u64 {
        self.flips.iter().map(|&v| v as u64).sum()
    }

    /// Counted annotations: one record per surviving direction.
    pub fn to_annotations(&self) -> Vec<(Annotation, u32)> {
        let mut out = Vec::with_capacity(self.len() * 2);
        for idx in 0..self.len() {
            let t = self.triplets[idx];
            let kept = self.votes[idx] - self.flips[idx];
            if kept > 0 {
                out.push((t.into(), kept));
            }
            if self.flips[idx] > 0 {
                out.push((t.flipped().into(), self.flips[idx]));
            }
        }
        out
    }

    pub fn to_graph(&self, n: usize) -> ComparisonGraph {
        ComparisonGraph::ingest_counted(self.to_annotations(), Some(n))
            .expect("generated annotations are valid")
    }

    /// Edge keys (source pair, target pair) of the planted outlier
    /// directions.
    pub fn planted_edge_keys(&self) -> Vec<(Pair, Pair)> {
        self.triplets
            .iter()
            .zip(&self.flips)
            .filter(|(_, &f)| f > 0)
            .map(|(t, _)| {
                let r = t.flipped();
                (Pair::new(r.i, r.j), Pair::new(r.i, r.k))
            })
            .collect()
    }

    /// Indices of planted outlier edges in an ingested graph.
    pub fn planted_edge_indices(&self, graph: &ComparisonGraph) -> Vec<usize> {
        self.planted_edge_keys()
            .into_iter()
            .filter_map(|(s, t)| graph.edge_index(s, t))
            .collect()
    }
}

/// I.i.d. Gaussian ground-truth points, one column per object.
pub fn generate_points(spec: &SyntheticSpec) -> DMatrix<f64> {
    let mut rng = stage_rng(spec.seed, STREAM_POINTS);
    let sd = spec.variance.sqrt();
    let mut points = DMatrix::zeros(spec.dim, spec.n);
    for c in 0..spec.n {
        for r in 0..spec.dim {
            points[(r, c)] = sd * rng.sample::<f64, _>(StandardNormal);
        }
    }
    points
}

fn sq_dist(points: &DMatrix<f64>, a: usize, b: usize) -> f64 {
    (points.column(a) - points.column(b)).norm_squared()
}

/// Decode a flat index in [0, total_triples(n)) to (head, {a, b}).
fn decode_triple(n: usize, idx: usize) -> (usize, usize, usize) {
    let per_head = (n - 1) * (n - 2) / 2;
    let head = idx / per_head;
    let mut rem = idx % per_head;
    // Pair (a < b) over n-1 slots: rem = b(b-1)/2 + a.
    let mut b = 1;
    while (b + 1) * b / 2 <= rem {
        b += 1;
    }
    let a = rem - b * (b - 1) / 2;
    rem = 0;
    let _ = rem;
    let lift = |x: usize| if x >= head { x + 1 } else { x };
    (head, lift(a), lift(b))
}

fn orient(points: &DMatrix<f64>, head: usize, a: usize, b: usize) -> Triplet {
    let (j, k) = if sq_dist(points, head, a) < sq_dist(points, head, b) {
        (a, b)
    } else {
        (b, a)
    };
    Triplet {
        i: head as u32,
        j: j as u32,
        k: k as u32,
    }
}

/// Uniform sample of `count` distinct triples, each emitted in its correct
/// orientation, single vote each.
pub fn sample_triplets(
    points: &DMatrix<f64>,
    count: usize,
    seed: u64,
) -> Result<LabeledTripletSet, DatagenError> {
    let n = points.ncols();
    let available = total_triples(n);
    if count > available {
        return Err(DatagenError::TooManyTriplets {
            requested: count,
            available,
            n,
        });
    }
    let mut rng = stage_rng(seed, STREAM_TRIPLETS);
    let picks = rand::seq::index::sample(&mut rng, available, count);
    let triplets = picks
        .iter()
        .map(|idx| {
            let (i, a, b) = decode_triple(n, idx);
            orient(points, i, a, b)
        })
        .collect();
    Ok(LabeledTripletSet::unit(triplets))
}

/// Duplicate each triplet's vote s ~ Uniform{s_min..=s_max}.
pub fn augment_votes(
    set: &LabeledTripletSet,
    s_min: u32,
    s_max: u32,
    seed: u64,
) -> Result<LabeledTripletSet, DatagenError> {
    if s_min < 1 || s_min > s_max {
        return Err(DatagenError::BadSpec(format!(
            "bad vote range [{s_min}, {s_max}]"
        )));
    }
    let mut rng = stage_rng(seed, STREAM_VOTES);
    let mut out = set.clone();
    for (votes, flips) in out.votes.iter_mut().zip(out.flips.iter_mut()) {
        *votes = rng.gen_range(s_min..=s_max);
        *flips = (*flips).min(*votes);
    }
    Ok(out)
}

/// Reverse exactly ⌊q · total votes⌋ votes (or ⌊q · triplets⌋ whole
/// triplets), chosen uniformly without replacement, and record the flags.
pub fn inject_outliers(
    set: &LabeledTripletSet,
    q: f64,
    mode: FlipMode,
    seed: u64,
) -> Result<LabeledTripletSet, DatagenError> {
    if !(0.0..=1.0).contains(&q) {
        return Err(DatagenError::BadSpec(format!("outlier ratio {q} outside [0, 1]")));
    }
    let mut rng = stage_rng(seed, STREAM_FLIPS);
    let mut out = set.clone();
    out.flips.iter_mut().for_each(|f| *f = 0);
    match mode {
        FlipMode::Vote => {
            let total: u64 = out.total_votes();
            let want = (q * total as f64).floor() as usize;
            if want == 0 {
                return Ok(out);
            }
            // Prefix sums map a flat vote slot back to its triplet.
            let mut prefix = Vec::with_capacity(out.len() + 1);
            let mut acc = 0u64;
            prefix.push(0u64);
            for &v in &out.votes {
                acc += v as u64;
                prefix.push(acc);
            }
            let picks = rand::seq::index::sample(&mut rng, total as usize, want);
            for slot in picks.iter() {
                let slot = slot as u64;
                let t = prefix.partition_point(|&p| p <= slot) - 1;
                out.flips[t] += 1;
            }
        }
        FlipMode::Triplet => {
            let want = (q * out.len() as f64).floor() as usize;
            let picks = rand::seq::index::sample(&mut rng, out.len(), want);
            for t in picks.iter() {
                out.flips[t] = out.votes[t];
            }
        }
    }
    debug_assert!(out
        .votes
        .iter()
        .zip(&out.flips)
        .all(|(v, f)| f <= v));
    Ok(out)
}

/// A full synthetic dataset: ground truth plus contaminated train set and
/// clean validation/test splits.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub spec: SyntheticSpec,
    /// Ground-truth coordinates, dim × n.
    pub points: DMatrix<f64>,
    pub train: LabeledTripletSet,
    pub validation: Vec<Triplet>,
    pub test: Vec<Triplet>,
}

impl Dataset {
    pub fn train_graph(&self) -> ComparisonGraph {
        self.train.to_graph(self.spec.n)
    }

    pub fn true_gram(&self) -> DMatrix<f64> {
        self.points.transpose() * &self.points
    }
}

/// Run the whole protocol for one seed: points, disjoint splits (test is
/// the remainder of all valid triples), vote augmentation, outlier
/// injection on the train votes.
pub fn generate_dataset(spec: &SyntheticSpec) -> Result<Dataset, DatagenError> {
    spec.validate()?;
    let points = generate_points(spec);
    let n = spec.n;
    let available = total_triples(n);
    let sampled = spec.train_size + spec.validation_size;

    let mut rng = stage_rng(spec.seed, STREAM_TRIPLETS);
    let picks = rand::seq::index::sample(&mut rng, available, sampled);
    let mut taken = vec![false; available];
    let mut train_triplets = Vec::with_capacity(spec.train_size);
    let mut validation = Vec::with_capacity(spec.validation_size);
    for (pos, idx) in picks.iter().enumerate() {
        taken[idx] = true;
        let (i, a, b) = decode_triple(n, idx);
        let t = orient(&points, i, a, b);
        if pos < spec.train_size {
            train_triplets.push(t);
        } else {
            validation.push(t);
        }
    }
    let mut test = Vec::with_capacity(available - sampled);
    for (idx, already) in taken.iter().enumerate() {
        if !already {
            let (i, a, b) = decode_triple(n, idx);
            test.push(orient(&points, i, a, b));
        }
    }

    let train = LabeledTripletSet::unit(train_triplets);
    let train = augment_votes(&train, spec.votes_min, spec.votes_max, spec.seed)?;
    let train = inject_outliers(&train, spec.outlier_ratio, spec.flip_mode, spec.seed)?;

    Ok(Dataset {
        spec: spec.clone(),
        points,
        train,
        validation,
        test,
    })
}
