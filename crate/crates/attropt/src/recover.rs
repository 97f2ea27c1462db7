//! Attribute recovery from conic solutions, with round-trip verification.
//!
//! The conic programs optimize over shares `d` and attribute mass
//! `u = x∘d`; recovery divides the mass back out (`x = u/d`). For the
//! nested-logit program the mass variables are per-(nest, attribute)
//! totals, so a per-product disaggregation system is solved first: row
//! sums pinned by the share logarithms, column sums pinned by the totals,
//! boxes scaled by the shares. Instances produced by the attribute
//! splitter admit a closed-form disaggregation (every column has one free
//! product); anything else goes through a small feasibility program on
//! the same conic solver.
//!
//! [`roundtrip_check`] closes the loop: the recovered attributes are fed
//! back through the model's own share evaluator and compared against the
//! program's shares, the share-log tightness identities, the box, and the
//! objective.

use crate::conic::{ConeSpec, ConicProgram, PrimalDualSolution, SolveStatus, SolverConfig};
use crate::error::{Error, Result};
use crate::model::{
    ChoiceInstance, MarketShares, McInstance, MnlInstance, NlInstance, SplitColumn,
};
use crate::reform::ReformProgram;
use nalgebra::{DMatrix, DVector};

/// Shares at or below this are degenerate: dividing by them is
/// meaningless and contradicts the strict-positivity guarantees that hold
/// at true optima.
const SHARE_FLOOR: f64 = 1e-10;

/// Recovered values within this distance of a box bound snap onto it;
/// anything further out is reported as a violation.
const CLAMP_BAND: f64 = 1e-9;

/// Worst allowed constraint violation for the generic disaggregation
/// feasibility solve.
const DISAGGREGATION_TOL: f64 = 1e-8;

/// An original-space solution recovered from a conic solution.
#[derive(Debug, Clone, PartialEq)]
pub struct RecoveredSolution {
    /// Recovered attribute matrix, product-major (flat rows for
    /// nested-logit instances).
    pub x: Vec<Vec<f64>>,
    /// Shares as reported by the conic program (not re-evaluated).
    pub shares: MarketShares,
    /// Program objective value.
    pub objective: f64,
    /// Per-product share-log tightness residuals
    /// `|d_j·ln(d_j/·) + Σₖu_jk|`.
    pub tightness_residuals: Vec<f64>,
    /// Worst distance of any recovered attribute outside its box, after
    /// clamping.
    pub box_violation: f64,
}

/// Residual summary of feeding a recovered solution back through the
/// model evaluators. All four entries must pass [`RoundtripReport::TOLERANCE`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoundtripReport {
    /// `‖shares(inst, x) − program shares‖∞` across product, outside,
    /// visit, and nest entries (infinite when the evaluator fails).
    pub share_residual: f64,
    /// Worst per-product share-log tightness residual.
    pub tightness_residual: f64,
    /// Worst box violation of the recovered attributes.
    pub box_violation: f64,
    /// `|expected_profit(inst, x) − program objective|`.
    pub objective_mismatch: f64,
}

impl RoundtripReport {
    /// Acceptance threshold applied to every entry.
    pub const TOLERANCE: f64 = 1e-6;

    /// Largest of the four residuals.
    pub fn worst(&self) -> f64 {
        self.share_residual
            .max(self.tightness_residual)
            .max(self.box_violation)
            .max(self.objective_mismatch)
    }

    /// All residuals within [`Self::TOLERANCE`].
    pub fn passed(&self) -> bool {
        self.worst() <= Self::TOLERANCE
    }
}

fn require_positive(value: f64, index: usize) -> Result<f64> {
    if value > SHARE_FLOOR {
        Ok(value)
    } else {
        Err(Error::DegenerateShare { index, value })
    }
}

/// Divide mass by share and snap near-bound values onto the box;
/// returns the (possibly clamped) value and its residual violation.
fn clamp_divide(u: f64, d: f64, lo: f64, hi: f64) -> (f64, f64) {
    let raw = u / d;
    let x = if raw < lo && raw >= lo - CLAMP_BAND {
        lo
    } else if raw > hi && raw <= hi + CLAMP_BAND {
        hi
    } else {
        raw
    };
    let violation = (lo - x).max(x - hi).max(0.0);
    (x, violation)
}

fn require_optimal(sol: &PrimalDualSolution) -> Result<()> {
    if sol.status == SolveStatus::Optimal {
        Ok(())
    } else {
        Err(Error::invariant(
            "solution.status",
            format!(
                "recovery requires an optimal solution, got {:?}",
                sol.status
            ),
        ))
    }
}

/// Recover attributes from a solved multinomial-logit program:
/// `x_jk = u_jk/d_j` with near-bound clamping, tightness
/// `|d_j·ln(d_j/d₀) + Σₖu_jk|`.
pub fn recover_mnl(
    inst: &MnlInstance,
    prog: &ReformProgram,
    sol: &PrimalDualSolution,
) -> Result<RecoveredSolution> {
    require_optimal(sol)?;
    let vm = &prog.variable_map;
    let j_count = inst.product_count();
    let k_count = inst.attr_count();
    let outside_idx = vm
        .outside
        .expect("multinomial program has an outside share");
    let d0 = require_positive(sol.x[outside_idx], outside_idx)?;

    let mut x = Vec::with_capacity(j_count);
    let mut box_violation: f64 = 0.0;
    let mut tightness = Vec::with_capacity(j_count);
    let mut product = Vec::with_capacity(j_count);
    for j in 0..j_count {
        let dj = require_positive(sol.x[vm.d[j]], vm.d[j])?;
        product.push(dj);
        let mut row = Vec::with_capacity(k_count);
        let mut mass = 0.0;
        for k in 0..k_count {
            let u = sol.x[vm.u[j][k]];
            mass += u;
            let (xv, viol) = clamp_divide(u, dj, inst.x_lower[j][k], inst.x_upper[j][k]);
            row.push(xv);
            box_violation = box_violation.max(viol);
        }
        tightness.push((dj * (dj / d0).ln() + mass).abs());
        x.push(row);
    }
    Ok(RecoveredSolution {
        x,
        shares: MarketShares {
            product,
            outside: Some(d0),
            visits: None,
            nest: None,
        },
        objective: sol.primal_objective,
        tightness_residuals: tightness,
        box_violation,
    })
}

/// Recover attributes from a solved Markov-chain program: identical to
/// the multinomial recovery with the visit rate `v_j` in the outside
/// share's role.
pub fn recover_mc(
    inst: &McInstance,
    prog: &ReformProgram,
    sol: &PrimalDualSolution,
) -> Result<RecoveredSolution> {
    require_optimal(sol)?;
    let vm = &prog.variable_map;
    let j_count = inst.product_count();
    let k_count = inst.attr_count();

    let mut x = Vec::with_capacity(j_count);
    let mut box_violation: f64 = 0.0;
    let mut tightness = Vec::with_capacity(j_count);
    let mut product = Vec::with_capacity(j_count);
    let mut visits = Vec::with_capacity(j_count);
    for j in 0..j_count {
        let dj = require_positive(sol.x[vm.d[j]], vm.d[j])?;
        let vj = require_positive(sol.x[vm.visits[j]], vm.visits[j])?;
        product.push(dj);
        visits.push(vj);
        let mut row = Vec::with_capacity(k_count);
        let mut mass = 0.0;
        for k in 0..k_count {
            let u = sol.x[vm.u[j][k]];
            mass += u;
            let (xv, viol) = clamp_divide(u, dj, inst.x_lower[j][k], inst.x_upper[j][k]);
            row.push(xv);
            box_violation = box_violation.max(viol);
        }
        tightness.push((dj * (dj / vj).ln() + mass).abs());
        x.push(row);
    }
    Ok(RecoveredSolution {
        x,
        shares: MarketShares {
            product,
            outside: None,
            visits: Some(visits),
            nest: None,
        },
        objective: sol.primal_objective,
        tightness_residuals: tightness,
        box_violation,
    })
}

/// Per-product attribute-mass targets of the nested-logit disaggregation:
/// `T_j = −(γ·d_j·ln(d_j/p⁰) + (1−γ)·d_j·ln(p_i/p⁰))`.
fn nl_row_targets(inst: &NlInstance, d: &[f64], p0: f64, nest_shares: &[f64]) -> Vec<Vec<f64>> {
    inst.nests
        .iter()
        .enumerate()
        .map(|(i, nest)| {
            (0..nest.product_count())
                .map(|j| {
                    let dj = d[inst.flat_index(i, j)];
                    let pi = nest_shares[i];
                    -(nest.gamma * dj * (dj / p0).ln() + (1.0 - nest.gamma) * dj * (pi / p0).ln())
                })
                .collect()
        })
        .collect()
}

/// Closed-form disaggregation for instances built by the attribute
/// splitter: pinned columns carry zero, each private column's mass goes
/// to its owning product, and the shared column absorbs each product's
/// remaining row target.
fn disaggregate_split(
    inst: &NlInstance,
    i: usize,
    v_totals: &[f64],
    row_targets: &[f64],
) -> Vec<Vec<f64>> {
    let layout = &inst.split.as_ref().expect("split layout present").nests[i];
    let j_count = inst.nests[i].product_count();
    let k_count = v_totals.len();
    let mut u = vec![vec![0.0; k_count]; j_count];
    for (k, col) in layout.iter().enumerate() {
        match col {
            SplitColumn::Private { product, .. } => u[*product][k] = v_totals[k],
            SplitColumn::Padding => {}
            SplitColumn::Shared { .. } => {
                for (j, row) in u.iter_mut().enumerate() {
                    let other: f64 = row.iter().take(k).sum();
                    row[k] = row_targets[j] - other;
                }
            }
        }
    }
    u
}

/// Generic disaggregation: a feasibility program minimizing total
/// row/column slack subject to the share-scaled boxes, solved on the same
/// conic solver. Succeeds when the residual is at most
/// [`DISAGGREGATION_TOL`].
fn disaggregate_generic(
    inst: &NlInstance,
    i: usize,
    d: &[f64],
    v_totals: &[f64],
    row_targets: &[f64],
) -> Result<Vec<Vec<f64>>> {
    let nest = &inst.nests[i];
    let j_count = nest.product_count();
    let k_count = v_totals.len();
    let u = |j: usize, k: usize| j * k_count + k;
    let slack_base = j_count * k_count;
    // One (+,−) slack pair per row target and per column total.
    let n = j_count * k_count + 2 * (j_count + k_count);

    let mut c = DVector::zeros(n);
    for idx in slack_base..n {
        c[idx] = 1.0;
    }
    let p = j_count + k_count;
    let mut a = DMatrix::zeros(p, n);
    let mut b = DVector::zeros(p);
    for j in 0..j_count {
        for k in 0..k_count {
            a[(j, u(j, k))] = 1.0;
        }
        a[(j, slack_base + 2 * j)] = 1.0;
        a[(j, slack_base + 2 * j + 1)] = -1.0;
        b[j] = row_targets[j];
    }
    for k in 0..k_count {
        for j in 0..j_count {
            a[(j_count + k, u(j, k))] = 1.0;
        }
        a[(j_count + k, slack_base + 2 * j_count + 2 * k)] = 1.0;
        a[(j_count + k, slack_base + 2 * j_count + 2 * k + 1)] = -1.0;
        b[j_count + k] = v_totals[k];
    }
    let m = 2 * j_count * k_count + 2 * (j_count + k_count);
    let mut g = DMatrix::zeros(m, n);
    let mut h = DVector::zeros(m);
    let mut row = 0;
    for j in 0..j_count {
        let dj = d[inst.flat_index(i, j)];
        for k in 0..k_count {
            g[(row, u(j, k))] = -1.0;
            h[row] = -nest.x_lower[j][k] * dj;
            g[(row + 1, u(j, k))] = 1.0;
            h[row + 1] = nest.x_upper[j][k] * dj;
            row += 2;
        }
    }
    for idx in slack_base..n {
        g[(row, idx)] = -1.0;
        row += 1;
    }
    let prog = ConicProgram::new(c, a, b, g, h, ConeSpec { lin: m, exp: 0 }, false)?;
    let sol = crate::conic::solve(&prog, &SolverConfig::default());
    if sol.status != SolveStatus::Optimal {
        return Err(Error::NumericalFailure(format!(
            "disaggregation solve for nest {i} ended {:?}",
            sol.status
        )));
    }
    if sol.primal_objective > DISAGGREGATION_TOL {
        return Err(Error::DisaggregationInfeasible {
            nest: i,
            residual: sol.primal_objective,
        });
    }
    Ok((0..j_count)
        .map(|j| (0..k_count).map(|k| sol.x[u(j, k)]).collect())
        .collect())
}

/// Recover attributes from a solved nested-logit program: disaggregate
/// each nest's attribute totals into per-product mass (closed form for
/// split-built instances, feasibility solve otherwise), then `x = u/d`
/// with near-bound clamping. Tightness is the γ-weighted share-log
/// identity per product.
pub fn recover_nl(
    inst: &NlInstance,
    prog: &ReformProgram,
    sol: &PrimalDualSolution,
) -> Result<RecoveredSolution> {
    require_optimal(sol)?;
    let vm = &prog.variable_map;
    let n_flat = inst.product_count();
    let outside_idx = vm
        .outside
        .expect("nested-logit program has an outside share");
    let p0 = require_positive(sol.x[outside_idx], outside_idx)?;
    let d: Vec<f64> = (0..n_flat)
        .map(|flat| require_positive(sol.x[vm.d[flat]], vm.d[flat]))
        .collect::<Result<_>>()?;
    let nest_shares: Vec<f64> = vm
        .nest_share
        .iter()
        .map(|&idx| require_positive(sol.x[idx], idx))
        .collect::<Result<_>>()?;

    let row_targets = nl_row_targets(inst, &d, p0, &nest_shares);
    let mut x = vec![Vec::new(); n_flat];
    let mut box_violation: f64 = 0.0;
    let mut tightness = vec![0.0; n_flat];
    for (i, nest) in inst.nests.iter().enumerate() {
        let v_totals: Vec<f64> = vm.nest_attr[i].iter().map(|&idx| sol.x[idx]).collect();
        let u = if inst.split.is_some() {
            disaggregate_split(inst, i, &v_totals, &row_targets[i])
        } else {
            disaggregate_generic(inst, i, &d, &v_totals, &row_targets[i])?
        };
        for j in 0..nest.product_count() {
            let flat = inst.flat_index(i, j);
            let dj = d[flat];
            let mass: f64 = u[j].iter().sum();
            tightness[flat] = (mass - row_targets[i][j]).abs();
            let mut row = Vec::with_capacity(v_totals.len());
            for k in 0..v_totals.len() {
                let (xv, viol) = clamp_divide(u[j][k], dj, nest.x_lower[j][k], nest.x_upper[j][k]);
                row.push(xv);
                box_violation = box_violation.max(viol);
            }
            x[flat] = row;
        }
    }
    Ok(RecoveredSolution {
        x,
        shares: MarketShares {
            product: d,
            outside: Some(p0),
            visits: None,
            nest: Some(nest_shares),
        },
        objective: sol.primal_objective,
        tightness_residuals: tightness,
        box_violation,
    })
}

/// Model-dispatching recovery; `prog` must be the program built from
/// `inst`.
pub fn recover(
    inst: &ChoiceInstance,
    prog: &ReformProgram,
    sol: &PrimalDualSolution,
) -> Result<RecoveredSolution> {
    match inst {
        ChoiceInstance::Mnl(m) => recover_mnl(m, prog, sol),
        ChoiceInstance::Mc(m) => recover_mc(m, prog, sol),
        ChoiceInstance::Nl(m) => recover_nl(m, prog, sol),
    }
}

fn shares_residual(program: &MarketShares, evaluated: &MarketShares) -> f64 {
    let mut worst: f64 = 0.0;
    for (a, b) in program.product.iter().zip(&evaluated.product) {
        worst = worst.max((a - b).abs());
    }
    if let (Some(a), Some(b)) = (program.outside, evaluated.outside) {
        worst = worst.max((a - b).abs());
    }
    if let (Some(a), Some(b)) = (&program.visits, &evaluated.visits) {
        for (x, y) in a.iter().zip(b) {
            worst = worst.max((x - y).abs());
        }
    }
    if let (Some(a), Some(b)) = (&program.nest, &evaluated.nest) {
        for (x, y) in a.iter().zip(b) {
            worst = worst.max((x - y).abs());
        }
    }
    worst
}

/// Feed the recovered attributes back through the model evaluators and
/// report all four residual families. Evaluator failures surface as an
/// infinite share residual rather than an error.
pub fn roundtrip_check(inst: &ChoiceInstance, rec: &RecoveredSolution) -> RoundtripReport {
    let (share_residual, objective_mismatch) =
        match (inst.shares(&rec.x), inst.expected_profit(&rec.x)) {
            (Ok(shares), Ok(profit)) => (
                shares_residual(&rec.shares, &shares),
                (profit - rec.objective).abs(),
            ),
            _ => (f64::INFINITY, f64::INFINITY),
        };
    RoundtripReport {
        share_residual,
        tightness_residual: rec.tightness_residuals.iter().cloned().fold(0.0, f64::max),
        box_violation: rec.box_violation,
        objective_mismatch,
    }
}

/// `d·ln(d/base)`, or infinity when either quantity is nonpositive.
fn share_log(d: f64, base: f64) -> f64 {
    if d > 0.0 && base > 0.0 {
        d * (d / base).ln()
    } else {
        f64::INFINITY
    }
}

/// Tightness residuals recomputed from claimed shares and per-product
/// attribute masses alone, with no access to the conic solution — the
/// check applied when re-verifying a stored solution. Only the row sums
/// `Σₖu_jk` enter, so `u` may be expressed in any attribute coordinates
/// whose per-product sums match the model's (the attribute splitter
/// preserves them). Missing or nonpositive shares give infinite
/// residuals.
pub fn tightness_from_shares(
    inst: &ChoiceInstance,
    shares: &MarketShares,
    u: &[Vec<f64>],
) -> Vec<f64> {
    let sums: Vec<f64> = u.iter().map(|row| row.iter().sum()).collect();
    match inst {
        ChoiceInstance::Mnl(_) => {
            let outside = shares.outside.unwrap_or(-1.0);
            shares
                .product
                .iter()
                .zip(&sums)
                .map(|(&d, &su)| (share_log(d, outside) + su).abs())
                .collect()
        }
        ChoiceInstance::Mc(_) => {
            let empty = Vec::new();
            let visits = shares.visits.as_ref().unwrap_or(&empty);
            shares
                .product
                .iter()
                .enumerate()
                .zip(&sums)
                .map(|((j, &d), &su)| {
                    let v = visits.get(j).copied().unwrap_or(-1.0);
                    (share_log(d, v) + su).abs()
                })
                .collect()
        }
        ChoiceInstance::Nl(m) => {
            let outside = shares.outside.unwrap_or(-1.0);
            let empty = Vec::new();
            let nest_shares = shares.nest.as_ref().unwrap_or(&empty);
            m.product_indices()
                .map(|(i, _, flat)| {
                    let d = shares.product.get(flat).copied().unwrap_or(-1.0);
                    let p = nest_shares.get(i).copied().unwrap_or(-1.0);
                    let gamma = m.nests[i].gamma;
                    let su = sums.get(flat).copied().unwrap_or(f64::INFINITY);
                    let cross = if d > 0.0 && p > 0.0 && outside > 0.0 {
                        d * (p / outside).ln()
                    } else {
                        f64::INFINITY
                    };
                    let resid = gamma * share_log(d, outside) + (1.0 - gamma) * cross + su;
                    // `0·∞` from a tampered share under γ = 1 must read as
                    // a failure, not drop out of a max.
                    if resid.is_nan() {
                        f64::INFINITY
                    } else {
                        resid.abs()
                    }
                })
                .collect()
        }
    }
}
