//! Conic programs over the nonnegative orthant and exponential cones, with
//! a primal-dual interior-point solver.
//!
//! A program is stored in the standard slack form
//!
//! ```text
//! minimize    cᵀw          (or maximize, see [`ConicProgram::maximize`])
//! subject to  A·w = b
//!             G·w + s = h,   s ∈ K
//! ```
//!
//! where `K` stacks `lin` nonnegative coordinates followed by `exp`
//! exponential-cone triples (three consecutive rows each). The solver in
//! [`hsde`] embeds the program in a homogeneous self-dual model, so primal
//! infeasibility and unboundedness come out as certificates instead of
//! divergence.

mod barrier;
mod hsde;

pub use barrier::{exp_dual_interior, exp_interior, EXP_INIT};
pub use hsde::solve;

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};

/// Membership test for the exponential cone
/// `{(a₁,a₂,a₃) : a₃ ≤ a₂·ln(a₁/a₂), a₁ > 0, a₂ > 0} ∪
/// {(a₁,0,a₃) : a₁ ≥ 0, a₃ ≤ 0}`, within slack `tol`.
pub fn expcone_contains(a1: f64, a2: f64, a3: f64, tol: f64) -> bool {
    if a2 > tol {
        a1 > 0.0 && a3 - a2 * (a1 / a2).ln() <= tol
    } else {
        a2 >= -tol && a1 >= -tol && a3 <= tol
    }
}

/// Membership test for the dual exponential cone
/// `{(b₁,b₂,b₃) : b₁ ≥ −b₃·e^{b₂/b₃ − 1}, b₁ > 0, b₃ < 0} ∪
/// {(b₁,b₂,0) : b₁ ≥ 0, b₂ ≥ 0}`, within slack `tol`.
pub fn expcone_dual_contains(b1: f64, b2: f64, b3: f64, tol: f64) -> bool {
    if b3 < -tol {
        b1 > 0.0 && b1 - (-b3) * (b2 / b3 - 1.0).exp() >= -tol
    } else {
        b3 <= tol && b1 >= -tol && b2 >= -tol
    }
}

/// Cone layout of the slack vector: `lin` nonnegative rows first, then
/// `exp` exponential-cone triples.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConeSpec {
    pub lin: usize,
    pub exp: usize,
}

impl ConeSpec {
    /// Total number of slack rows, `lin + 3·exp`.
    pub fn total_rows(&self) -> usize {
        self.lin + 3 * self.exp
    }

    /// Barrier parameter of the product cone.
    pub fn barrier_nu(&self) -> usize {
        self.lin + 3 * self.exp
    }

    /// Signed worst membership margin of `v` over all blocks: linear rows
    /// contribute their value, each triple contributes
    /// `min(a₂·ln(a₁/a₂) − a₃, a₁, a₂)` on the main branch (the boundary
    /// ray is scored by its closure conditions). Negative means violated.
    pub fn primal_margin(&self, v: &[f64]) -> f64 {
        let mut worst = f64::INFINITY;
        for &vi in &v[..self.lin] {
            worst = worst.min(vi);
        }
        for t in 0..self.exp {
            let a = &v[self.lin + 3 * t..self.lin + 3 * t + 3];
            let m = if a[1] > 0.0 && a[0] > 0.0 {
                barrier::exp_residual(a)
            } else {
                // Boundary ray (a₁, 0, a₃): score each closure condition.
                a[0].min(-a[2]).min(-a[1].abs())
            };
            worst = worst.min(m);
        }
        worst
    }

    /// Strict interior test for the primal cone.
    pub fn strictly_inside(&self, v: &[f64]) -> bool {
        v[..self.lin].iter().all(|&x| x > 0.0)
            && (0..self.exp)
                .all(|t| barrier::exp_interior(&v[self.lin + 3 * t..self.lin + 3 * t + 3]))
    }

    /// Strict interior test for the dual cone.
    pub fn strictly_inside_dual(&self, v: &[f64]) -> bool {
        v[..self.lin].iter().all(|&x| x > 0.0)
            && (0..self.exp)
                .all(|t| barrier::exp_dual_interior(&v[self.lin + 3 * t..self.lin + 3 * t + 3]))
    }

    /// Tolerant dual-cone membership over all blocks.
    pub fn contains_dual(&self, v: &[f64], tol: f64) -> bool {
        v[..self.lin].iter().all(|&x| x >= -tol)
            && (0..self.exp).all(|t| {
                let b = &v[self.lin + 3 * t..self.lin + 3 * t + 3];
                expcone_dual_contains(b[0], b[1], b[2], tol)
            })
    }
}

/// A conic program in standard slack form; immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct ConicProgram {
    pub c: DVector<f64>,
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub g: DMatrix<f64>,
    pub h: DVector<f64>,
    pub cone: ConeSpec,
    /// When set, [`solve`] maximizes `cᵀw` (the solver negates internally)
    /// and all reported objectives are in the maximization sense.
    pub maximize: bool,
}

impl ConicProgram {
    /// Validating constructor: all shapes must agree with `cone`.
    pub fn new(
        c: DVector<f64>,
        a: DMatrix<f64>,
        b: DVector<f64>,
        g: DMatrix<f64>,
        h: DVector<f64>,
        cone: ConeSpec,
        maximize: bool,
    ) -> Result<Self> {
        let n = c.len();
        if a.ncols() != n {
            return Err(Error::dims("A column count", n, a.ncols()));
        }
        if g.ncols() != n {
            return Err(Error::dims("G column count", n, g.ncols()));
        }
        if b.len() != a.nrows() {
            return Err(Error::dims("b length", a.nrows(), b.len()));
        }
        if h.len() != g.nrows() {
            return Err(Error::dims("h length", g.nrows(), h.len()));
        }
        if g.nrows() != cone.total_rows() {
            return Err(Error::dims("G row count", cone.total_rows(), g.nrows()));
        }
        Ok(ConicProgram {
            c,
            a,
            b,
            g,
            h,
            cone,
            maximize,
        })
    }

    /// Number of decision variables.
    pub fn var_count(&self) -> usize {
        self.c.len()
    }

    /// Objective value of `w` in the program's stated sense.
    pub fn objective(&self, w: &[f64]) -> f64 {
        self.c.dot(&DVector::from_column_slice(w))
    }
}

/// Terminal state of a solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    /// Primal/dual feasible with gap below tolerance.
    Optimal,
    /// A Farkas-type certificate of primal infeasibility was found.
    Infeasible,
    /// An improving ray (certificate of dual infeasibility) was found.
    Unbounded,
    /// Iteration limit reached without a certified outcome.
    MaxIterations,
    /// The Newton system degenerated beyond recovery.
    NumericalFailure,
}

/// Residuals of a primal-dual pair, all scaled relative to `1 + |row datum|`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualReport {
    /// Worst equality-row residual `|A·w − b|`.
    pub primal_eq: f64,
    /// Worst slack-row residual `|G·w + s − h|`.
    pub primal_ineq: f64,
    /// Signed worst cone margin of the slack (negative = violated).
    pub worst_cone: f64,
    /// Worst dual-equality residual `|Aᵀy + Gᵀz + c|`.
    pub dual: f64,
    /// Relative duality gap `|primal − dual| / (1 + |primal|)`.
    pub gap_rel: f64,
}

/// Certificate attached to an `Infeasible` or `Unbounded` outcome.
#[derive(Debug, Clone, PartialEq)]
pub enum Certificate {
    /// Multipliers with `Aᵀy + Gᵀz ≈ 0`, `z ∈ K*`, `bᵀy + hᵀz = −1`.
    PrimalInfeasible {
        y: Vec<f64>,
        z: Vec<f64>,
        residual: f64,
    },
    /// A ray with `A·x ≈ 0`, `G·x + s ≈ 0`, `s ∈ K`, objective −1
    /// (in minimization sense).
    Unbounded {
        x: Vec<f64>,
        s: Vec<f64>,
        residual: f64,
    },
}

/// Full solver output: primal values, multipliers, objectives in the
/// program's stated sense, residual report, and any certificate.
#[derive(Debug, Clone, PartialEq)]
pub struct PrimalDualSolution {
    pub status: SolveStatus,
    /// Primal variable values `w`.
    pub x: Vec<f64>,
    /// Equality multipliers.
    pub y: Vec<f64>,
    /// Cone multipliers (in the dual cone).
    pub z: Vec<f64>,
    /// Primal slack `s = h − G·w`.
    pub s: Vec<f64>,
    pub primal_objective: f64,
    pub dual_objective: f64,
    pub iterations: usize,
    pub residuals: ResidualReport,
    pub certificate: Option<Certificate>,
}

/// Solver knobs. Defaults: `tol_gap = tol_feas = 1e-8`, 200 iterations,
/// full centering, fixed-σ reference path (no adaptive predictor blend).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    /// Relative duality-gap tolerance.
    pub tol_gap: f64,
    /// Primal/dual feasibility tolerance.
    pub tol_feas: f64,
    /// Outer iteration limit.
    pub max_iter: usize,
    /// Centering strength of corrector steps (σ).
    pub centering: f64,
    /// Blend the centering parameter adaptively from the affine step
    /// length (Mehrotra-style heuristic). Off by default so the reference
    /// path is a fixed predictor/corrector alternation.
    pub adaptive_centering: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tol_gap: 1e-8,
            tol_feas: 1e-8,
            max_iter: 200,
            centering: 1.0,
            adaptive_centering: false,
        }
    }
}

/// Residuals of an arbitrary candidate point against `prog`'s rows: worst
/// equality residual, worst slack-row inconsistency, signed worst cone
/// margin of the implied slack, dual-row residual and relative gap when
/// multipliers are supplied (zero-filled otherwise).
pub fn residuals(prog: &ConicProgram, sol: &PrimalDualSolution) -> ResidualReport {
    let w = DVector::from_column_slice(&sol.x);
    let s = DVector::from_column_slice(&sol.s);
    let y = DVector::from_column_slice(&sol.y);
    let z = DVector::from_column_slice(&sol.z);

    let eq = &prog.a * &w - &prog.b;
    let primal_eq = eq
        .iter()
        .zip(prog.b.iter())
        .map(|(&r, &bi)| r.abs() / (1.0 + bi.abs()))
        .fold(0.0f64, f64::max);

    let slack_gap = &prog.g * &w + &s - &prog.h;
    let primal_ineq = slack_gap
        .iter()
        .zip(prog.h.iter())
        .map(|(&r, &hi)| r.abs() / (1.0 + hi.abs()))
        .fold(0.0f64, f64::max);

    let worst_cone = prog.cone.primal_margin(sol.s.as_slice());

    // Dual rows in minimization sense: Aᵀy + Gᵀz + c = 0.
    let sign = if prog.maximize { -1.0 } else { 1.0 };
    let dual_rows = prog.a.transpose() * &y + prog.g.transpose() * &z + sign * &prog.c;
    let dual = dual_rows
        .iter()
        .zip(prog.c.iter())
        .map(|(&r, &ci)| r.abs() / (1.0 + ci.abs()))
        .fold(0.0f64, f64::max);

    let gap_rel =
        (sol.primal_objective - sol.dual_objective).abs() / (1.0 + sol.primal_objective.abs());

    ResidualReport {
        primal_eq,
        primal_ineq,
        worst_cone,
        dual,
        gap_rel,
    }
}
