//! Brute-force lattice oracle for small instances.
//!
//! Exhaustive evaluation of the expected-profit objective over a uniform
//! lattice spanning the attribute box, with optional local refinement
//! around the incumbent, serves as ground truth that is computed without
//! any of the reformulation or solver machinery. Whatever the conic
//! pipeline claims can be checked against the lattice: the solver optimum
//! must dominate every lattice point, and must exceed the lattice optimum
//! by no more than a Lipschitz-bound times the final grid resolution.

use crate::conic::{SolveStatus, SolverConfig};
use crate::error::{Error, Result};
use crate::feasibility;
use crate::model::ChoiceInstance;
use crate::recover::{recover, RecoveredSolution};
use crate::reform::{self, ResourceConstraints};

/// Maximum lattice evaluations per round.
const GRID_BUDGET: f64 = 1e8;

/// Maximum attribute dimensions (products × attributes) the oracle will
/// enumerate.
const MAX_DIMS: usize = 6;

/// Slack applied when filtering lattice points through linear share
/// requirements, so boundary points are not spuriously excluded.
const RESOURCE_SLACK: f64 = 1e-9;

/// Lattice shape: `points_per_dim` evaluations per attribute (both box
/// endpoints included) and `refine_rounds` local re-griddings around the
/// incumbent, each shrinking the window tenfold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub points_per_dim: usize,
    pub refine_rounds: usize,
}

/// Outcome of a lattice search.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    /// Best attribute matrix found (lexicographically smallest among
    /// exact objective ties).
    pub best_x: Vec<Vec<f64>>,
    /// Objective at `best_x`, as evaluated by the model.
    pub best_objective: f64,
    /// Total number of objective evaluations.
    pub evaluations: u64,
    /// Largest per-dimension grid spacing in the final round.
    pub final_resolution: f64,
}

/// Effective per-product margins of any model (nested-logit nests
/// broadcast their shared margins to every member product).
fn margins_of(inst: &ChoiceInstance) -> Vec<Vec<f64>> {
    match inst {
        ChoiceInstance::Mnl(m) => m.phi.clone(),
        ChoiceInstance::Mc(m) => m.phi.clone(),
        ChoiceInstance::Nl(m) => m.implied_margins(),
    }
}

/// A Lipschitz bound on the expected profit over the box, used to convert
/// grid resolution into an objective tolerance.
///
/// With `m_j(x) = Σₖφ_jk·x_jk − ψ_j` the objective is `Σ_j d_j·m_j`, so
/// `|∂Π/∂x_jk| ≤ |φ_jk| + Σ_j'|m_j'|·|∂d_j'/∂x_jk|`. Share partials per
/// utility are at most `2·d_j ≤ 2` for the softmax family, giving
/// `L ≤ ‖φ‖₁ + 2·dims·max|m|`. Markov-chain shares scale with visits
/// (which also vary with `x`), and nest dissimilarities divide the inner
/// softmax's utilities, so those models inflate the bound by `(1+v_max)²`
/// and `1/γ_min` respectively. Deliberately generous — only validity
/// matters; refinement shrinks `h` instead.
pub fn lipschitz_bound(inst: &ChoiceInstance) -> Result<f64> {
    let margins = margins_of(inst);
    let (lower, upper) = inst.flat_box();
    let phi_l1: f64 = margins.iter().flatten().map(|p| p.abs()).sum();
    let dims: usize = margins.iter().map(Vec::len).sum();
    let psi: Vec<f64> = match inst {
        ChoiceInstance::Mnl(m) => m.psi.clone(),
        ChoiceInstance::Mc(m) => m.psi.clone(),
        ChoiceInstance::Nl(m) => m.flat_psi(),
    };
    let max_margin: f64 = margins
        .iter()
        .zip(lower.iter().zip(&upper))
        .zip(&psi)
        .map(|((phi_row, (lo, hi)), &psi_j)| {
            let reach: f64 = phi_row
                .iter()
                .zip(lo.iter().zip(hi))
                .map(|(&p, (&l, &u))| (p * l).abs().max((p * u).abs()))
                .sum();
            reach + psi_j.abs()
        })
        .fold(0.0, f64::max);
    let scale = match inst {
        ChoiceInstance::Mnl(_) => 1.0,
        ChoiceInstance::Mc(m) => {
            let visits = feasibility::require_unique_positive(&m.lambda, &m.rho)?;
            let vmax = visits.iter().cloned().fold(0.0, f64::max);
            (1.0 + vmax) * (1.0 + vmax)
        }
        ChoiceInstance::Nl(m) => {
            let gamma_min = m
                .nests
                .iter()
                .map(|n| n.gamma)
                .fold(f64::INFINITY, f64::min);
            1.0 / gamma_min
        }
    };
    Ok(scale * (phi_l1 + 2.0 * dims as f64 * max_margin))
}

fn lex_less(a: &[Vec<f64>], b: &[Vec<f64>]) -> bool {
    for (ra, rb) in a.iter().zip(b) {
        for (&va, &vb) in ra.iter().zip(rb) {
            if va < vb {
                return true;
            }
            if va > vb {
                return false;
            }
        }
    }
    false
}

fn passes_resources(
    inst: &ChoiceInstance,
    rc: Option<&ResourceConstraints>,
    x: &[Vec<f64>],
) -> Option<bool> {
    let Some(rc) = rc else { return Some(true) };
    let shares = inst.shares(x).ok()?;
    Some(rc.gamma.iter().zip(&rc.gamma_rhs).all(|(row, &rhs)| {
        let lhs: f64 = row.iter().zip(&shares.product).map(|(&g, &d)| g * d).sum();
        lhs >= rhs - RESOURCE_SLACK
    }))
}

/// Exhaustive lattice search over the attribute box with local
/// refinement; [`grid_search_with_resources`] with no requirements.
pub fn grid_search(inst: &ChoiceInstance, grid: &GridSpec) -> Result<OracleResult> {
    grid_search_with_resources(inst, grid, None)
}

/// Exhaustive lattice search, keeping only points whose shares satisfy
/// every linear requirement. Ties on the objective break toward the
/// lexicographically smallest attribute matrix; refinement rounds
/// re-grid a tenfold-smaller window centered on the incumbent.
pub fn grid_search_with_resources(
    inst: &ChoiceInstance,
    grid: &GridSpec,
    rc: Option<&ResourceConstraints>,
) -> Result<OracleResult> {
    let (lower, upper) = inst.flat_box();
    grid_search_over(&lower, &upper, grid, &mut |x| match (
        passes_resources(inst, rc, x),
        inst.expected_profit(x),
    ) {
        (Some(true), Ok(obj)) => Ok(Some(obj)),
        _ => Ok(None),
    })
}

/// Exhaustive lattice search over an explicit box with a caller-supplied
/// objective: the general engine behind [`grid_search`], usable for any
/// objective on a box — e.g. evaluating a nested-logit model in its
/// original per-product coordinates while the conic pipeline works on the
/// split instance. `Ok(None)` from the evaluator skips the point
/// (infeasible or unevaluable); `Err` aborts the search.
pub fn grid_search_over(
    lower: &[Vec<f64>],
    upper: &[Vec<f64>],
    grid: &GridSpec,
    eval: &mut dyn FnMut(&[Vec<f64>]) -> Result<Option<f64>>,
) -> Result<OracleResult> {
    let dims: usize = lower.iter().map(Vec::len).sum();
    let points = vec![grid.points_per_dim; dims];
    grid_search_anisotropic(lower, upper, &points, grid.refine_rounds, eval)
}

/// [`grid_search_over`] with a separate point count per flattened
/// dimension, so wide dimensions (an effectively unbounded attribute
/// searched over a window) can be sampled densely without inflating the
/// lattice across every narrow one.
pub fn grid_search_anisotropic(
    lower: &[Vec<f64>],
    upper: &[Vec<f64>],
    points: &[usize],
    refine_rounds: usize,
    eval: &mut dyn FnMut(&[Vec<f64>]) -> Result<Option<f64>>,
) -> Result<OracleResult> {
    let dims: usize = lower.iter().map(Vec::len).sum();
    if points.len() != dims {
        return Err(Error::dims("points per dimension", dims, points.len()));
    }
    if points.iter().any(|&p| p < 2) {
        return Err(Error::invariant(
            "points_per_dim",
            "the lattice needs at least both box endpoints",
        ));
    }
    if dims > MAX_DIMS {
        return Err(Error::TooManyDims {
            dims,
            limit: MAX_DIMS,
        });
    }
    let per_round = points.iter().map(|&p| p as f64).product::<f64>();
    if per_round > GRID_BUDGET {
        return Err(Error::GridBudgetExceeded {
            evaluations: per_round,
            limit: GRID_BUDGET,
        });
    }

    // Flatten the box; keep (row, col) to rebuild matrices.
    let shape: Vec<usize> = lower.iter().map(Vec::len).collect();
    let mut lo: Vec<f64> = lower.iter().flatten().copied().collect();
    let mut hi: Vec<f64> = upper.iter().flatten().copied().collect();
    let orig_lo = lo.clone();
    let orig_hi = hi.clone();

    let mut best: Option<(f64, Vec<Vec<f64>>)> = None;
    let mut evaluations: u64 = 0;
    let mut final_resolution = 0.0;

    for round in 0..=refine_rounds {
        if round > 0 {
            // Shrink each dimension's window tenfold around the incumbent,
            // clipped into the original box.
            let center: Vec<f64> = best
                .as_ref()
                .map(|(_, x)| x.iter().flatten().copied().collect())
                .ok_or(Error::OracleInfeasible)?;
            for t in 0..dims {
                let span = (hi[t] - lo[t]) / 10.0;
                let mut l = center[t] - span / 2.0;
                l = l.max(orig_lo[t]).min(orig_hi[t] - span);
                lo[t] = l.max(orig_lo[t]);
                hi[t] = (lo[t] + span).min(orig_hi[t]);
            }
        }
        final_resolution = (0..dims)
            .map(|t| (hi[t] - lo[t]) / (points[t] - 1) as f64)
            .fold(0.0, f64::max);

        let mut idx = vec![0usize; dims];
        loop {
            let mut x: Vec<Vec<f64>> = Vec::with_capacity(shape.len());
            let mut t = 0;
            for &width in &shape {
                let mut row = Vec::with_capacity(width);
                for _ in 0..width {
                    let frac = idx[t] as f64 / (points[t] - 1) as f64;
                    row.push(lo[t] + frac * (hi[t] - lo[t]));
                    t += 1;
                }
                x.push(row);
            }
            evaluations += 1;
            if let Some(obj) = eval(&x)? {
                let better = match &best {
                    None => true,
                    Some((b, bx)) => obj > *b || (obj == *b && lex_less(&x, bx)),
                };
                if better {
                    best = Some((obj, x));
                }
            }
            // Mixed-radix increment, last dimension fastest.
            let mut carry = dims;
            while carry > 0 {
                idx[carry - 1] += 1;
                if idx[carry - 1] < points[carry - 1] {
                    break;
                }
                idx[carry - 1] = 0;
                carry -= 1;
            }
            if carry == 0 {
                break;
            }
        }
    }

    let (best_objective, best_x) = best.ok_or(Error::OracleInfeasible)?;
    Ok(OracleResult {
        best_x,
        best_objective,
        evaluations,
        final_resolution,
    })
}

/// Agreement report between the conic pipeline and the lattice oracle.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport {
    pub solver_objective: f64,
    pub oracle_objective: f64,
    /// `|solver − oracle|`.
    pub objective_difference: f64,
    /// Worst attribute disagreement after pooling box-equal-margin
    /// groups: within each product, attributes sharing the same margin
    /// only pin down their sum, so sums are compared per group.
    pub x_difference: f64,
    /// Objectives agree within the acceptance tolerance (1e-3).
    pub objective_agrees: bool,
    pub oracle: OracleResult,
    pub recovered: RecoveredSolution,
}

/// Outcome of running the conic pipeline and the oracle side by side.
#[derive(Debug, Clone, PartialEq)]
pub enum Comparison {
    /// Both found an optimum.
    BothOptimal(ComparisonReport),
    /// The solver certified infeasibility and no lattice point passed
    /// the requirements.
    BothInfeasible,
    /// One side solved and the other did not — the disagreement the
    /// oracle exists to expose.
    Disagreement {
        solver_status: SolveStatus,
        oracle_error: Option<String>,
    },
}

/// Objective agreement tolerance for [`compare`].
pub const COMPARE_TOL: f64 = 1e-3;

fn grouped_x_difference(margins: &[Vec<f64>], a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    let mut worst: f64 = 0.0;
    for (phi_row, (ra, rb)) in margins.iter().zip(a.iter().zip(b)) {
        // Pool by exact margin equality.
        let mut groups: Vec<(f64, f64, f64)> = Vec::new();
        for (k, &phi) in phi_row.iter().enumerate() {
            match groups.iter_mut().find(|(g, _, _)| *g == phi) {
                Some(entry) => {
                    entry.1 += ra[k];
                    entry.2 += rb[k];
                }
                None => groups.push((phi, ra[k], rb[k])),
            }
        }
        for (_, sa, sb) in groups {
            worst = worst.max((sa - sb).abs());
        }
    }
    worst
}

/// Run build → solve → recover and the lattice oracle on the same
/// instance and report how they compare.
pub fn compare(
    inst: &ChoiceInstance,
    rc: Option<&ResourceConstraints>,
    cfg: &SolverConfig,
    grid: &GridSpec,
) -> Result<Comparison> {
    let base = match inst {
        ChoiceInstance::Mnl(m) => reform::build_mnl(m)?,
        ChoiceInstance::Mc(m) => reform::build_mc(m)?,
        ChoiceInstance::Nl(m) => reform::build_nl(m)?,
    };
    let prog = match rc {
        Some(rc) => reform::with_resources(&base, rc)?,
        None => base,
    };
    let sol = crate::conic::solve(&prog.to_conic()?, cfg);
    let oracle_run = grid_search_with_resources(inst, grid, rc);

    match (sol.status, oracle_run) {
        (SolveStatus::Optimal, Ok(oracle)) => {
            let recovered = recover(inst, &prog, &sol)?;
            let objective_difference = (recovered.objective - oracle.best_objective).abs();
            let x_difference =
                grouped_x_difference(&margins_of(inst), &recovered.x, &oracle.best_x);
            Ok(Comparison::BothOptimal(ComparisonReport {
                solver_objective: recovered.objective,
                oracle_objective: oracle.best_objective,
                objective_difference,
                x_difference,
                objective_agrees: objective_difference <= COMPARE_TOL,
                oracle,
                recovered,
            }))
        }
        (SolveStatus::Infeasible, Err(Error::OracleInfeasible)) => Ok(Comparison::BothInfeasible),
        (status, oracle_run) => Ok(Comparison::Disagreement {
            solver_status: status,
            oracle_error: oracle_run.err().map(|e| e.to_string()),
        }),
    }
}
