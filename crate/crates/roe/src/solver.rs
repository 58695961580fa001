//! Joint embedding/outlier solver: accelerated proximal gradient (FISTA)
//! with backtracking over β = (G, γ), PSD projection on the Gram block,
//! weighted soft thresholding on the outlier block, and scheduled
//! semidefinite rank reduction.

use nalgebra::{DMatrix, DVector};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gram::{self, factorize, numerical_rank, psd_project, Embedding};
use crate::graph::ComparisonGraph;
use crate::rank_reduction::{self, RankReductionOutcome};

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("comparison graph has no edges")]
    EmptyGraph,
    #[error("target rank {p} out of range 1..={n}")]
    BadRank { p: usize, n: usize },
    #[error("lambda must be non-negative, got {0}")]
    BadLambda(f64),
    #[error("margin must be positive, got {0}")]
    BadMargin(f64),
    #[error("backtracking exhausted {max} step-size increases at iteration {iteration}")]
    BacktrackingStalled { iteration: usize, max: u32 },
    #[error("objective became non-finite at iteration {iteration}")]
    Diverged { iteration: usize },
    #[error(transparent)]
    Gram(#[from] gram::GramError),
}

/// Problem instance: the comparison graph plus the regression knobs.
#[derive(Debug, Clone)]
pub struct RoeProblem {
    pub graph: ComparisonGraph,
    /// Weight of the sparsity penalty on γ.
    pub lambda: f64,
    /// Target embedding rank.
    pub p: usize,
    /// Scale of the direction target: the fit pushes d_ij - d_lk toward
    /// -margin on every stored edge.
    pub margin: f64,
}

impl RoeProblem {
    pub fn new(graph: ComparisonGraph, lambda: f64, p: usize) -> Result<Self, SolverError> {
        Self::with_margin(graph, lambda, p, 1.0)
    }

    pub fn with_margin(
        graph: ComparisonGraph,
        lambda: f64,
        p: usize,
        margin: f64,
    ) -> Result<Self, SolverError> {
        if !(lambda >= 0.0) {
            return Err(SolverError::BadLambda(lambda));
        }
        if !(margin > 0.0) {
            return Err(SolverError::BadMargin(margin));
        }
        if p == 0 || p > graph.n() {
            return Err(SolverError::BadRank { p, n: graph.n() });
        }
        Ok(RoeProblem {
            graph,
            lambda,
            p,
            margin,
        })
    }

    /// Whether the rank-reduction existence bound p(p+1)/2 <= |E| applies.
    pub fn rank_bound_applies(&self) -> bool {
        self.p * (self.p + 1) / 2 <= self.graph.num_edges()
    }

    /// Margin-scaled direction targets.
    pub fn scaled_targets(&self) -> DVector<f64> {
        self.graph.targets() * self.margin
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RankMode {
    /// Rank-reduce the momentum iterate every `rank_period` iterations.
    PerIteration,
    /// Run to convergence first, then one rank-reduction pass.
    PostHoc,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Initial Lipschitz estimate L_0.
    pub l0: f64,
    /// Backtracking growth factor (> 1).
    pub eta: f64,
    pub max_iter: usize,
    /// Relative objective-change tolerance.
    pub tol_obj: f64,
    /// Consecutive small-change iterations required to stop.
    pub tol_obj_patience: usize,
    /// Relative iterate-change tolerance.
    pub tol_iter: f64,
    pub rank_mode: RankMode,
    /// Apply in-loop rank reduction when k % rank_period == 0.
    pub rank_period: usize,
    /// Skip a rank-reduction call whose estimated flop count exceeds this.
    pub rank_cost_budget: f64,
    /// Seed for the random initial factor.
    pub seed: u64,
    /// Outlier support cutoff as a fraction of the margin.
    pub support_threshold_factor: f64,
    /// Hard cap on backtracking growth steps per iteration.
    pub max_backtracks: u32,
    /// Verify PSD feasibility of every accepted iterate (tests only; costs
    /// one extra eigendecomposition per iteration).
    pub debug_checks: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            l0: 1.0,
            eta: 2.0,
            max_iter: 2000,
            tol_obj: 1e-7,
            tol_obj_patience: 5,
            tol_iter: 1e-8,
            rank_mode: RankMode::PerIteration,
            rank_period: 10,
            rank_cost_budget: 2e9,
            seed: 0,
            support_threshold_factor: 0.5,
            max_backtracks: 64,
            debug_checks: false,
        }
    }
}

/// FISTA bookkeeping for one run.
#[derive(Debug, Clone)]
pub struct SolverState {
    /// Accepted iterate G_k.
    pub gram: DMatrix<f64>,
    /// Accepted iterate γ_k.
    pub gamma: DVector<f64>,
    /// Previous accepted iterate (for the momentum extrapolation).
    pub prev_gram: DMatrix<f64>,
    pub prev_gamma: DVector<f64>,
    /// Momentum/base point β̃ the next proximal step starts from.
    pub base_gram: DMatrix<f64>,
    pub base_gamma: DVector<f64>,
    /// Current Lipschitz estimate; only ever grows within a run.
    pub l: f64,
    /// Backtracking growth factor.
    pub eta: f64,
    /// Hard cap on growth steps per backtracking call.
    pub max_backtracks: u32,
    /// Momentum scalar t_k.
    pub t: f64,
    /// Iteration counter.
    pub k: usize,
    /// F(β_k) of accepted iterates, starting with the initial point.
    pub objective_history: Vec<f64>,
}

impl SolverState {
    /// Random rank-p seed with unit-variance entries; X'X is already PSD,
    /// the projection only strips factorization round-off. γ starts at zero
    /// so the data is explained by geometry before outliers.
    pub fn init(problem: &RoeProblem, config: &SolverConfig) -> Self {
        let n = problem.graph.n();
        let m = problem.graph.num_edges();
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let x = DMatrix::from_fn(problem.p, n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let gram0 = psd_project(&(x.transpose() * &x)).expect("finite random seed matrix");
        let gamma0 = DVector::zeros(m);
        SolverState {
            prev_gram: gram0.clone(),
            prev_gamma: gamma0.clone(),
            base_gram: gram0.clone(),
            base_gamma: gamma0.clone(),
            gram: gram0,
            gamma: gamma0,
            l: config.l0,
            eta: config.eta,
            max_backtracks: config.max_backtracks,
            t: 1.0,
            k: 1,
            objective_history: Vec::new(),
        }
    }
}

/// One in-loop rank-reduction event.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RankEvent {
    pub iteration: usize,
    pub initial_rank: usize,
    pub final_rank: usize,
    pub reductions: usize,
    /// True when the call was skipped because its cost estimate exceeded
    /// the configured budget.
    pub skipped: bool,
}

#[derive(Debug, Clone)]
pub struct RoeSolution {
    pub gram: DMatrix<f64>,
    pub gamma: DVector<f64>,
    pub embedding: Embedding,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Numerical rank of the returned Gram matrix (always <= p).
    pub rank: usize,
    /// True when the constraint-preserving reduction alone reached rank
    /// <= p; false when spectral truncation closed the remaining gap.
    pub exact_rank_reached: bool,
    /// Edge indices whose |γ| exceeds the support threshold.
    pub outlier_support: Vec<usize>,
    pub objective_trace: Vec<f64>,
    /// Iterations at which the momentum was restarted.
    pub restarts: Vec<usize>,
    pub rank_events: Vec<RankEvent>,
    pub lipschitz: f64,
    /// False when p(p+1)/2 > |E|: the existence bound for a rank-p solution
    /// does not apply and the achieved rank is reported as-is.
    pub rank_bound_applies: bool,
}

impl RoeSolution {
    /// Rank-p Gram matrix of the returned embedding.
    pub fn embedded_gram(&self) -> DMatrix<f64> {
        self.embedding.gram()
    }
}

/// Full objective F = 1/2 Σ_c w_c²(m·y_c - γ_c - ⟨G, A_c⟩)² + λ Σ_c w_c|γ_c|.
pub fn objective(problem: &RoeProblem, gram: &DMatrix<f64>, gamma: &DVector<f64>) -> f64 {
    quadratic_loss(problem, gram, gamma) + penalty(problem, gamma)
}

/// The smooth part f alone.
pub fn quadratic_loss(problem: &RoeProblem, gram: &DMatrix<f64>, gamma: &DVector<f64>) -> f64 {
    let pred = problem
        .graph
        .apply_design(gram)
        .expect("problem and gram dimensions agree");
    let y = problem.scaled_targets();
    let w = problem.graph.weights();
    let mut acc = 0.0;
    for c in 0..pred.len() {
        let rho = y[c] - gamma[c] - pred[c];
        acc += w[c] * w[c] * rho * rho;
    }
    0.5 * acc
}

/// The weighted ℓ1 penalty λ Σ_c w_c |γ_c|.
pub fn penalty(problem: &RoeProblem, gamma: &DVector<f64>) -> f64 {
    let w = problem.graph.weights();
    problem.lambda * gamma.zip_map(&w, |g, w| w * g.abs()).sum()
}

/// Gradient of f: with ρ = w²∘(⟨G,A⟩ + γ - m·y), returns (Σ_c ρ_c A_c, ρ).
pub fn gradient_f(
    problem: &RoeProblem,
    gram: &DMatrix<f64>,
    gamma: &DVector<f64>,
) -> (DMatrix<f64>, DVector<f64>) {
    let pred = problem
        .graph
        .apply_design(gram)
        .expect("problem and gram dimensions agree");
    let y = problem.scaled_targets();
    let w = problem.graph.weights();
    let rho = DVector::from_fn(pred.len(), |c, _| {
        w[c] * w[c] * (pred[c] + gamma[c] - y[c])
    });
    let grad_gram = problem
        .graph
        .apply_design_adjoint(&rho)
        .expect("residual length matches edge count");
    (grad_gram, rho)
}

/// Componentwise soft thresholding: max(|v_i| - μ_i, 0) · sign(v_i).
pub fn shrink(v: &DVector<f64>, mu: &DVector<f64>) -> DVector<f64> {
    v.zip_map(mu, |x, m| {
        let mag = x.abs() - m;
        if mag > 0.0 {
            mag * x.signum()
        } else {
            0.0
        }
    })
}

/// One proximal step from the state's base point at its current L:
/// PSD projection on the Gram block, weighted shrinkage on γ.
pub fn prox_step(
    problem: &RoeProblem,
    state: &SolverState,
) -> Result<(DMatrix<f64>, DVector<f64>), SolverError> {
    let (grad_gram, grad_gamma) = gradient_f(problem, &state.base_gram, &state.base_gamma);
    prox_from_gradient(problem, state, &grad_gram, &grad_gamma)
}

fn prox_from_gradient(
    problem: &RoeProblem,
    state: &SolverState,
    grad_gram: &DMatrix<f64>,
    grad_gamma: &DVector<f64>,
) -> Result<(DMatrix<f64>, DVector<f64>), SolverError> {
    let step = 1.0 / state.l;
    let gram_next = psd_project(&(&state.base_gram - grad_gram * step))?;
    let mu = problem.graph.weights() * (problem.lambda / state.l);
    let gamma_next = shrink(&(&state.base_gamma - grad_gamma * step), &mu);
    Ok((gram_next, gamma_next))
}

pub struct BacktrackOutcome {
    pub gram: DMatrix<f64>,
    pub gamma: DVector<f64>,
    /// f at the accepted candidate (reused by the caller).
    pub loss: f64,
    /// Number of η growth steps taken this call.
    pub growth_steps: u32,
}

/// Find the smallest L = η^i · L_prev whose proximal candidate satisfies the
/// quadratic majorization f(P_L(β̃)) <= Q_L(P_L(β̃), β̃); updates state.l.
pub fn backtrack(
    problem: &RoeProblem,
    state: &mut SolverState,
) -> Result<BacktrackOutcome, SolverError> {
    let (grad_gram, grad_gamma) = gradient_f(problem, &state.base_gram, &state.base_gamma);
    let f_base = quadratic_loss(problem, &state.base_gram, &state.base_gamma);
    let mut growth_steps = 0u32;
    loop {
        let (cand_gram, cand_gamma) = prox_from_gradient(problem, state, &grad_gram, &grad_gamma)?;
        let dg = &cand_gram - &state.base_gram;
        let dgamma = &cand_gamma - &state.base_gamma;
        let sq = dg.norm_squared() + dgamma.norm_squared();
        let linear = dg.dot(&grad_gram) + dgamma.dot(&grad_gamma);
        let majorizer = f_base + linear + 0.5 * state.l * sq;
        let f_cand = quadratic_loss(problem, &cand_gram, &cand_gamma);
        if !f_cand.is_finite() {
            return Err(SolverError::Diverged { iteration: state.k });
        }
        // Tiny relative slack: at convergence both sides agree to roundoff.
        if f_cand <= majorizer + 1e-12 * (1.0 + majorizer.abs()) {
            return Ok(BacktrackOutcome {
                gram: cand_gram,
                gamma: cand_gamma,
                loss: f_cand,
                growth_steps,
            });
        }
        growth_steps += 1;
        if growth_steps > state.max_backtracks {
            return Err(SolverError::BacktrackingStalled {
                iteration: state.k,
                max: state.max_backtracks,
            });
        }
        state.l *= state.eta;
    }
}

/// Run the full loop: backtrack, proximal step, momentum update with
/// restart on objective increase, scheduled rank reduction, stopping rules;
/// factorize the result into a p-dimensional embedding.
pub fn solve(problem: &RoeProblem, config: &SolverConfig) -> Result<RoeSolution, SolverError> {
    if problem.graph.is_empty() {
        return Err(SolverError::EmptyGraph);
    }
    let mut state = SolverState::init(problem, config);
    let mut restarts = Vec::new();
    let mut rank_events = Vec::new();

    let mut f_prev = objective(problem, &state.gram, &state.gamma);
    state.objective_history.push(f_prev);
    let mut small_change_streak = 0usize;
    let mut converged = false;

    while state.k <= config.max_iter {
        if config.rank_mode == RankMode::PerIteration
            && config.rank_period > 0
            && state.k % config.rank_period == 0
        {
            rank_events.push(reduce_base_rank(problem, config, &mut state));
        }

        let accepted = backtrack(problem, &mut state)?;
        let f_new = accepted.loss + penalty(problem, &accepted.gamma);
        if !f_new.is_finite() {
            return Err(SolverError::Diverged { iteration: state.k });
        }
        if config.debug_checks {
            let lmin = gram::min_eigenvalue(&accepted.gram)?;
            assert!(
                lmin >= -gram::PSD_TOL,
                "accepted iterate left the PSD cone: min eigenvalue {lmin}"
            );
        }

        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * state.t * state.t).sqrt());
        if f_new > f_prev {
            // Momentum overshoot: accept the point, drop the momentum.
            restarts.push(state.k);
            state.t = 1.0;
            state.base_gram = accepted.gram.clone();
            state.base_gamma = accepted.gamma.clone();
        } else {
            let beta = (state.t - 1.0) / t_next;
            state.base_gram = &accepted.gram + (&accepted.gram - &state.gram) * beta;
            state.base_gamma = &accepted.gamma + (&accepted.gamma - &state.gamma) * beta;
            state.t = t_next;
        }

        state.prev_gram = std::mem::replace(&mut state.gram, accepted.gram);
        state.prev_gamma = std::mem::replace(&mut state.gamma, accepted.gamma);
        state.objective_history.push(f_new);

        let rel_obj = (f_new - f_prev).abs() / f_prev.abs().max(1.0);
        if rel_obj < config.tol_obj {
            small_change_streak += 1;
        } else {
            small_change_streak = 0;
        }
        let dist = ((&state.gram - &state.prev_gram).norm_squared()
            + (&state.gamma - &state.prev_gamma).norm_squared())
        .sqrt();
        let scale = (state.prev_gram.norm_squared() + state.prev_gamma.norm_squared())
            .sqrt()
            .max(1.0);
        let rel_iter = dist / scale;

        f_prev = f_new;
        state.k += 1;
        if small_change_streak >= config.tol_obj_patience || rel_iter < config.tol_iter {
            converged = true;
            break;
        }
    }

    let iterations = state.k - 1;

    // Final rank pass regardless of mode: reduce within the
    // constraint-preserving slice as far as the null space allows, then
    // close any remaining gap to rank p by spectral truncation, flagged.
    let mut reduced_gram = state.gram.clone();
    rank_events.push(match guarded_rank_reduce(problem, config, &reduced_gram) {
        Some(outcome) => {
            let event = RankEvent {
                iteration: iterations,
                initial_rank: outcome.initial_rank,
                final_rank: outcome.final_rank,
                reductions: outcome.reductions,
                skipped: false,
            };
            reduced_gram = outcome.gram;
            event
        }
        None => RankEvent {
            iteration: iterations,
            initial_rank: 0,
            final_rank: 0,
            reductions: 0,
            skipped: true,
        },
    });
    let exact_rank_reached = numerical_rank(&reduced_gram)? <= problem.p;
    let embedding = factorize(&reduced_gram, problem.p)?;
    let final_gram = if exact_rank_reached {
        reduced_gram
    } else {
        embedding.gram()
    };

    let threshold = config.support_threshold_factor * problem.margin;
    let outlier_support: Vec<usize> = state
        .gamma
        .iter()
        .enumerate()
        .filter(|(_, g)| g.abs() > threshold)
        .map(|(i, _)| i)
        .collect();
    let rank = numerical_rank(&final_gram)?;
    let objective_final = objective(problem, &final_gram, &state.gamma);

    Ok(RoeSolution {
        rank,
        embedding,
        objective: objective_final,
        iterations,
        converged,
        exact_rank_reached,
        outlier_support,
        objective_trace: state.objective_history,
        restarts,
        rank_events,
        lipschitz: state.l,
        rank_bound_applies: problem.rank_bound_applies(),
        gram: final_gram,
        gamma: state.gamma,
    })
}

/// Rank-reduce the base (momentum) point in place, within the cost budget.
/// Reduction moves preserve every ⟨G, A_c⟩ and hence f exactly; factoring a
/// slightly indefinite momentum iterate additionally projects it onto the
/// PSD cone.
fn reduce_base_rank(
    problem: &RoeProblem,
    config: &SolverConfig,
    state: &mut SolverState,
) -> RankEvent {
    match guarded_rank_reduce(problem, config, &state.base_gram) {
        Some(outcome) => {
            let event = RankEvent {
                iteration: state.k,
                initial_rank: outcome.initial_rank,
                final_rank: outcome.final_rank,
                reductions: outcome.reductions,
                skipped: false,
            };
            state.base_gram = outcome.gram;
            event
        }
        None => RankEvent {
            iteration: state.k,
            initial_rank: 0,
            final_rank: 0,
            reductions: 0,
            skipped: true,
        },
    }
}

fn guarded_rank_reduce(
    problem: &RoeProblem,
    config: &SolverConfig,
    gram: &DMatrix<f64>,
) -> Option<RankReductionOutcome> {
    let r = numerical_rank(gram).ok()?;
    let edges = problem.graph.num_edges() as f64;
    let m = (r * (r + 1) / 2) as f64;
    // Reduced-constraint assembly plus the null-space SVD.
    let cost = edges * 2.0 * (r * r) as f64 + edges.max(m) * m * m;
    if cost > config.rank_cost_budget {
        return None;
    }
    rank_reduction::rank_reduce(gram, &problem.graph, problem.p).ok()
}
