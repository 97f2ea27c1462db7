//! Explicit dual programs and independently constructed dual certificates.
//!
//! The conic dual of each reformulated program has a closed row structure:
//! one linear row per primal variable, dual-cone membership for the triple
//! multipliers, and sign constraints for the box multipliers. This module
//! assembles those duals explicitly ([`dualize_mc`], [`dualize_nl`]),
//! builds strictly interior dual points by direct construction — not by
//! running the solver — ([`strict_dual_point_mc`], [`strict_dual_point_nl`]),
//! and extracts dual points from solver output
//! ([`solver_dual_point_mc`], [`solver_dual_point_nl`]).
//!
//! A strictly feasible dual point proves the primal optimum is attained
//! (the primal is feasible and its dual is bounded below and strictly
//! feasible), and any dual-feasible objective value upper-bounds every
//! primal-feasible profit, so the pair yields a solver-independent
//! optimality gap ([`duality_gap`]).

use crate::conic::PrimalDualSolution;
use crate::error::{Error, Result};
use crate::model::{McInstance, NlInstance};
use crate::reform::{LinearExpr, ResourceConstraints};
use nalgebra::{DMatrix, DVector};

/// Scaled row-residual acceptance threshold for constructed dual points.
const ROW_TOL: f64 = 1e-9;

/// Perturbation sizes tried, in order, when pushing the slack cone family
/// of the Markov-chain dual strictly interior.
const EPS_GRID: [f64; 8] = [1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7, 1e-8];

/// Variable roles of a Markov-chain dual program.
#[derive(Debug, Clone, PartialEq)]
pub struct McDualLayout {
    /// Visit-balance multipliers `z_j`.
    pub z: Vec<usize>,
    /// Lower box multipliers `b_jk ≥ 0`.
    pub b: Vec<Vec<usize>>,
    /// Upper box multipliers `q_jk ≥ 0`.
    pub q: Vec<Vec<usize>>,
    /// First cone family `(r¹, s¹, t¹)_j`.
    pub r1: Vec<usize>,
    pub s1: Vec<usize>,
    pub t1: Vec<usize>,
    /// Second cone family `(r², s², t²)_j`.
    pub r2: Vec<usize>,
    pub s2: Vec<usize>,
    pub t2: Vec<usize>,
    /// Resource-row multipliers `μ_l ≥ 0`.
    pub resource: Vec<usize>,
}

/// Variable roles of a nested-logit dual program.
#[derive(Debug, Clone, PartialEq)]
pub struct NlDualLayout {
    /// Simplex multiplier `z₀` (the dual objective).
    pub z0: usize,
    /// Nest-total multipliers `z_i`.
    pub z: Vec<usize>,
    /// Nest-aggregation multipliers `w_i`.
    pub w: Vec<usize>,
    /// Per-product multipliers `c_j`, flat order.
    pub c: Vec<usize>,
    /// Lower box multipliers `b_k ≥ 0` per (nest, attribute).
    pub b: Vec<Vec<usize>>,
    /// Upper box multipliers `q_k ≥ 0` per (nest, attribute).
    pub q: Vec<Vec<usize>>,
    /// Cone slots, flat per product (families 1 and 2) and per nest
    /// (families 3 and 4); the third slot of each triple is structural
    /// (`γw`, `γc`, `(1−γ)w`, `(1−γ)Σc`).
    pub r1: Vec<usize>,
    pub s1: Vec<usize>,
    pub r2: Vec<usize>,
    pub s2: Vec<usize>,
    pub r3: Vec<usize>,
    pub s3: Vec<usize>,
    pub r4: Vec<usize>,
    pub s4: Vec<usize>,
    /// Resource-row multipliers `μ_l ≥ 0`.
    pub resource: Vec<usize>,
}

/// Role map of a dual program.
#[derive(Debug, Clone, PartialEq)]
pub enum DualLayout {
    Mc(McDualLayout),
    Nl(NlDualLayout),
}

/// An explicit dual program: minimize `objective·v` subject to equality
/// `rows`, `v_i ≥ 0` for `i ∈ nonneg`, and each triple of `cones` in the
/// dual exponential cone.
#[derive(Debug, Clone, PartialEq)]
pub struct DualProgram {
    pub n_vars: usize,
    pub objective: Vec<f64>,
    pub rows: Vec<(Vec<(usize, f64)>, f64)>,
    pub nonneg: Vec<usize>,
    pub cones: Vec<[LinearExpr; 3]>,
    pub layout: DualLayout,
}

/// A concrete assignment of all dual variables, with its recorded
/// interior margin (minimum signed dual-cone slack across triples).
#[derive(Debug, Clone, PartialEq)]
pub struct DualPoint {
    pub values: Vec<f64>,
    pub interior_margin: f64,
}

/// Signed dual-cone slack of a triple: positive iff strictly inside the
/// main branch, or strictly inside the relative interior of the
/// `third = 0` face (which the structurally degenerate unit-dissimilarity
/// triples live on).
pub fn expcone_dual_margin(b: &[f64; 3]) -> f64 {
    if b[2] < 0.0 {
        let main = b[0] - (-b[2]) * (b[1] / b[2] - 1.0).exp();
        main.min(-b[2])
    } else if b[2] == 0.0 {
        b[0].min(b[1])
    } else {
        -b[2]
    }
}

impl DualProgram {
    /// Dual objective (minimized) at `v`.
    pub fn objective_value(&self, v: &[f64]) -> f64 {
        self.objective.iter().zip(v).map(|(&c, &x)| c * x).sum()
    }

    /// Worst equality residual, scaled by row magnitude:
    /// `max |a·v − rhs| / (1 + |rhs|)`.
    pub fn max_row_residual(&self, v: &[f64]) -> f64 {
        self.rows
            .iter()
            .map(|(row, rhs)| {
                let lhs: f64 = row.iter().map(|&(i, c)| c * v[i]).sum();
                (lhs - rhs).abs() / (1.0 + rhs.abs())
            })
            .fold(0.0, f64::max)
    }

    /// Worst violation of the sign constraints `v_i ≥ 0`.
    pub fn nonneg_violation(&self, v: &[f64]) -> f64 {
        self.nonneg
            .iter()
            .map(|&i| (-v[i]).max(0.0))
            .fold(0.0, f64::max)
    }

    /// Signed dual-cone slack of every triple at `v`.
    pub fn cone_margins(&self, v: &[f64]) -> Vec<f64> {
        self.cones
            .iter()
            .map(|t| expcone_dual_margin(&[t[0].eval(v), t[1].eval(v), t[2].eval(v)]))
            .collect()
    }

    /// Minimum signed dual-cone slack at `v`.
    pub fn min_cone_margin(&self, v: &[f64]) -> f64 {
        self.cone_margins(v)
            .into_iter()
            .fold(f64::INFINITY, f64::min)
    }
}

/// Assemble the explicit dual of the Markov-chain program, with one row
/// block per primal variable family:
/// per product `r¹_j + s²_j − t²_j·Σₖx̄_jk − z_j + Σ_i ρ_ji z_i = 0`
/// (visit column), per product
/// `s¹_j + r²_j + Σₖx̄_jk q_jk − Σₖx_lower_jk b_jk − Σ_i ρ_ji z_i
/// [+ Σ_l Γ_lj μ_l] = ψ_j` (share column), and per (product, attribute)
/// `t¹_j + b_jk − q_jk = −φ_jk` (attribute-mass column). Objective
/// `Σ λ_j z_j [− Σ γ_l μ_l]`, minimized.
pub fn dualize_mc(inst: &McInstance, rc: Option<&ResourceConstraints>) -> DualProgram {
    let j_count = inst.product_count();
    let k_count = inst.attr_count();
    let l_count = rc.map_or(0, ResourceConstraints::row_count);

    let z = |j: usize| j;
    let b = |j: usize, k: usize| j_count + j * k_count + k;
    let q = |j: usize, k: usize| j_count + j_count * k_count + j * k_count + k;
    let fam = |f: usize, j: usize| j_count + 2 * j_count * k_count + f * j_count + j;
    let (r1, s1, t1) = (|j| fam(0, j), |j| fam(1, j), |j| fam(2, j));
    let (r2, s2, t2) = (|j| fam(3, j), |j| fam(4, j), |j| fam(5, j));
    let mu = |l: usize| j_count + 2 * j_count * k_count + 6 * j_count + l;
    let n_vars = j_count + 2 * j_count * k_count + 6 * j_count + l_count;

    let mut objective = vec![0.0; n_vars];
    for j in 0..j_count {
        objective[z(j)] = inst.lambda[j];
    }
    if let Some(rc) = rc {
        for l in 0..l_count {
            objective[mu(l)] = -rc.gamma_rhs[l];
        }
    }

    let mut rows = Vec::with_capacity(2 * j_count + j_count * k_count);
    // Visit columns.
    for j in 0..j_count {
        let xbar_sum: f64 = inst.x_upper[j].iter().sum();
        let mut row = vec![(r1(j), 1.0), (s2(j), 1.0), (t2(j), -xbar_sum), (z(j), -1.0)];
        for i in 0..j_count {
            if inst.rho[j][i] != 0.0 {
                row.push((z(i), inst.rho[j][i]));
            }
        }
        rows.push((row, 0.0));
    }
    // Share columns.
    for j in 0..j_count {
        let mut row = vec![(s1(j), 1.0), (r2(j), 1.0)];
        for k in 0..k_count {
            row.push((q(j, k), inst.x_upper[j][k]));
            row.push((b(j, k), -inst.x_lower[j][k]));
        }
        for i in 0..j_count {
            if inst.rho[j][i] != 0.0 {
                row.push((z(i), -inst.rho[j][i]));
            }
        }
        if let Some(rc) = rc {
            for l in 0..l_count {
                if rc.gamma[l][j] != 0.0 {
                    row.push((mu(l), rc.gamma[l][j]));
                }
            }
        }
        rows.push((row, inst.psi[j]));
    }
    // Attribute-mass columns.
    for j in 0..j_count {
        for k in 0..k_count {
            rows.push((
                vec![(t1(j), 1.0), (b(j, k), 1.0), (q(j, k), -1.0)],
                -inst.phi[j][k],
            ));
        }
    }

    let mut nonneg: Vec<usize> = (0..j_count)
        .flat_map(|j| (0..k_count).map(move |k| b(j, k)))
        .chain((0..j_count).flat_map(|j| (0..k_count).map(move |k| q(j, k))))
        .collect();
    nonneg.extend((0..l_count).map(mu));

    let cones = (0..j_count)
        .flat_map(|j| {
            [
                [
                    LinearExpr {
                        coeffs: vec![(r1(j), 1.0)],
                        constant: 0.0,
                    },
                    LinearExpr {
                        coeffs: vec![(s1(j), 1.0)],
                        constant: 0.0,
                    },
                    LinearExpr {
                        coeffs: vec![(t1(j), 1.0)],
                        constant: 0.0,
                    },
                ],
                [
                    LinearExpr {
                        coeffs: vec![(r2(j), 1.0)],
                        constant: 0.0,
                    },
                    LinearExpr {
                        coeffs: vec![(s2(j), 1.0)],
                        constant: 0.0,
                    },
                    LinearExpr {
                        coeffs: vec![(t2(j), 1.0)],
                        constant: 0.0,
                    },
                ],
            ]
        })
        .collect();

    DualProgram {
        n_vars,
        objective,
        rows,
        nonneg,
        cones,
        layout: DualLayout::Mc(McDualLayout {
            z: (0..j_count).map(z).collect(),
            b: (0..j_count)
                .map(|j| (0..k_count).map(|k| b(j, k)).collect())
                .collect(),
            q: (0..j_count)
                .map(|j| (0..k_count).map(|k| q(j, k)).collect())
                .collect(),
            r1: (0..j_count).map(r1).collect(),
            s1: (0..j_count).map(s1).collect(),
            t1: (0..j_count).map(t1).collect(),
            r2: (0..j_count).map(r2).collect(),
            s2: (0..j_count).map(s2).collect(),
            t2: (0..j_count).map(t2).collect(),
            resource: (0..l_count).map(mu).collect(),
        }),
    }
}

/// Assemble the explicit dual of the nested-logit program:
/// the outside-share column
/// `Σ_{ij}r¹ + Σ_{ij}s² + Σ_i r³ + Σ_i s⁴ = z₀ + Σ_{ij}Σₖx̄_jk c_j`,
/// per nest `s³_i + r⁴_i + z_i = z₀` (nest-share column), per product
/// `s¹_j + r²_j + Σₖx̄_jk q_k − Σₖx_lower_jk b_k [+ Σ_l Γ_lj μ_l]
/// = ψ_j + z_i` (share column), per (nest, attribute)
/// `w_i + b_k − q_k = −ρ_k` (attribute-total column); triples
/// `(r¹,s¹,γw)`, `(r²,s²,γc)` per product and `(r³,s³,(1−γ)w)`,
/// `(r⁴,s⁴,(1−γ)Σc)` per nest. Objective `z₀ [− Σ γ_l μ_l]`, minimized.
pub fn dualize_nl(inst: &NlInstance, rc: Option<&ResourceConstraints>) -> DualProgram {
    let i_count = inst.nest_count();
    let k_count = inst.attr_count();
    let n_flat = inst.product_count();
    let l_count = rc.map_or(0, ResourceConstraints::row_count);

    let z0 = 0;
    let z = |i: usize| 1 + i;
    let w = |i: usize| 1 + i_count + i;
    let c = |flat: usize| 1 + 2 * i_count + flat;
    let b = |i: usize, k: usize| 1 + 2 * i_count + n_flat + i * k_count + k;
    let q = |i: usize, k: usize| 1 + 2 * i_count + n_flat + i_count * k_count + i * k_count + k;
    let base_rs = 1 + 2 * i_count + n_flat + 2 * i_count * k_count;
    let r1 = |flat: usize| base_rs + flat;
    let s1 = |flat: usize| base_rs + n_flat + flat;
    let r2 = |flat: usize| base_rs + 2 * n_flat + flat;
    let s2 = |flat: usize| base_rs + 3 * n_flat + flat;
    let r3 = |i: usize| base_rs + 4 * n_flat + i;
    let s3 = |i: usize| base_rs + 4 * n_flat + i_count + i;
    let r4 = |i: usize| base_rs + 4 * n_flat + 2 * i_count + i;
    let s4 = |i: usize| base_rs + 4 * n_flat + 3 * i_count + i;
    let mu = |l: usize| base_rs + 4 * n_flat + 4 * i_count + l;
    let n_vars = base_rs + 4 * n_flat + 4 * i_count + l_count;

    let mut objective = vec![0.0; n_vars];
    objective[z0] = 1.0;
    if let Some(rc) = rc {
        for l in 0..l_count {
            objective[mu(l)] = -rc.gamma_rhs[l];
        }
    }

    let mut rows = Vec::new();
    // Outside-share column.
    {
        let mut row: Vec<(usize, f64)> = Vec::new();
        for (_, _, flat) in inst.product_indices() {
            row.push((r1(flat), 1.0));
            row.push((s2(flat), 1.0));
        }
        for i in 0..i_count {
            row.push((r3(i), 1.0));
            row.push((s4(i), 1.0));
        }
        row.push((z0, -1.0));
        for (i, j, flat) in inst.product_indices() {
            let xbar_sum: f64 = inst.nests[i].x_upper[j].iter().sum();
            row.push((c(flat), -xbar_sum));
        }
        rows.push((row, 0.0));
    }
    // Nest-share columns.
    for i in 0..i_count {
        rows.push((
            vec![(s3(i), 1.0), (r4(i), 1.0), (z(i), 1.0), (z0, -1.0)],
            0.0,
        ));
    }
    // Share columns.
    for (i, j, flat) in inst.product_indices() {
        let nest = &inst.nests[i];
        let mut row = vec![(s1(flat), 1.0), (r2(flat), 1.0)];
        for k in 0..k_count {
            row.push((q(i, k), nest.x_upper[j][k]));
            row.push((b(i, k), -nest.x_lower[j][k]));
        }
        row.push((z(i), -1.0));
        if let Some(rc) = rc {
            for l in 0..l_count {
                if rc.gamma[l][flat] != 0.0 {
                    row.push((mu(l), rc.gamma[l][flat]));
                }
            }
        }
        rows.push((row, nest.psi[j]));
    }
    // Attribute-total columns.
    for i in 0..i_count {
        for k in 0..k_count {
            rows.push((
                vec![(w(i), 1.0), (b(i, k), 1.0), (q(i, k), -1.0)],
                -inst.rho_shared[i][k],
            ));
        }
    }

    let mut nonneg: Vec<usize> = (0..i_count)
        .flat_map(|i| (0..k_count).map(move |k| b(i, k)))
        .chain((0..i_count).flat_map(|i| (0..k_count).map(move |k| q(i, k))))
        .collect();
    nonneg.extend((0..l_count).map(mu));

    let mut cones = Vec::new();
    for (i, nest) in inst.nests.iter().enumerate() {
        let gamma = nest.gamma;
        for j in 0..nest.product_count() {
            let flat = inst.flat_index(i, j);
            cones.push([
                LinearExpr {
                    coeffs: vec![(r1(flat), 1.0)],
                    constant: 0.0,
                },
                LinearExpr {
                    coeffs: vec![(s1(flat), 1.0)],
                    constant: 0.0,
                },
                LinearExpr {
                    coeffs: vec![(w(i), gamma)],
                    constant: 0.0,
                },
            ]);
            cones.push([
                LinearExpr {
                    coeffs: vec![(r2(flat), 1.0)],
                    constant: 0.0,
                },
                LinearExpr {
                    coeffs: vec![(s2(flat), 1.0)],
                    constant: 0.0,
                },
                LinearExpr {
                    coeffs: vec![(c(flat), gamma)],
                    constant: 0.0,
                },
            ]);
        }
        cones.push([
            LinearExpr {
                coeffs: vec![(r3(i), 1.0)],
                constant: 0.0,
            },
            LinearExpr {
                coeffs: vec![(s3(i), 1.0)],
                constant: 0.0,
            },
            LinearExpr {
                coeffs: vec![(w(i), 1.0 - gamma)],
                constant: 0.0,
            },
        ]);
        cones.push([
            LinearExpr {
                coeffs: vec![(r4(i), 1.0)],
                constant: 0.0,
            },
            LinearExpr {
                coeffs: vec![(s4(i), 1.0)],
                constant: 0.0,
            },
            LinearExpr {
                coeffs: (0..nest.product_count())
                    .map(|j| (c(inst.flat_index(i, j)), 1.0 - gamma))
                    .collect(),
                constant: 0.0,
            },
        ]);
    }

    DualProgram {
        n_vars,
        objective,
        rows,
        nonneg,
        cones,
        layout: DualLayout::Nl(NlDualLayout {
            z0,
            z: (0..i_count).map(z).collect(),
            w: (0..i_count).map(w).collect(),
            c: (0..n_flat).map(c).collect(),
            b: (0..i_count)
                .map(|i| (0..k_count).map(|k| b(i, k)).collect())
                .collect(),
            q: (0..i_count)
                .map(|i| (0..k_count).map(|k| q(i, k)).collect())
                .collect(),
            r1: (0..n_flat).map(r1).collect(),
            s1: (0..n_flat).map(s1).collect(),
            r2: (0..n_flat).map(r2).collect(),
            s2: (0..n_flat).map(s2).collect(),
            r3: (0..i_count).map(r3).collect(),
            s3: (0..i_count).map(s3).collect(),
            r4: (0..i_count).map(r4).collect(),
            s4: (0..i_count).map(s4).collect(),
            resource: (0..l_count).map(mu).collect(),
        }),
    }
}

/// Accept the candidate if rows, signs, and strict cone margins all hold.
fn accept(prog: &DualProgram, v: Vec<f64>) -> Option<DualPoint> {
    if prog.max_row_residual(&v) > ROW_TOL || prog.nonneg_violation(&v) > 0.0 {
        return None;
    }
    let margin = prog.min_cone_margin(&v);
    if margin > 0.0 {
        Some(DualPoint {
            values: v,
            interior_margin: margin,
        })
    } else {
        None
    }
}

/// Markov-chain dual candidate for a given perturbation size `eps`
/// (`eps = 0` gives the unperturbed base construction, whose second cone
/// family sits at the origin of the dual cone).
fn mc_candidate(
    inst: &McInstance,
    prog: &DualProgram,
    eps: f64,
) -> std::result::Result<Vec<f64>, String> {
    let DualLayout::Mc(layout) = &prog.layout else {
        unreachable!("markov-chain candidate on a markov-chain layout");
    };
    let j_count = inst.product_count();
    let k_count = inst.attr_count();
    let mut v = vec![0.0; prog.n_vars];

    // Attribute-mass rows: offset b so one t¹ per product fits all k.
    let mut phimax = vec![0.0; j_count];
    for j in 0..j_count {
        phimax[j] = inst.phi[j]
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max);
        for k in 0..k_count {
            v[layout.b[j][k]] = phimax[j] - inst.phi[j][k];
        }
        v[layout.t1[j]] = -phimax[j];
    }

    // First cone family: r¹ from the margin-weighted exponential bound at
    // the b-augmented cost, then visits-column rows pin z via (I − ρ).
    let mut r1_base = DVector::zeros(j_count);
    for j in 0..j_count {
        let shat: f64 = inst.psi[j]
            + (0..k_count)
                .map(|k| inst.x_lower[j][k] * v[layout.b[j][k]])
                .sum::<f64>();
        r1_base[j] = 1.0 + phimax[j] * (-shat / phimax[j] - 1.0).exp();
    }
    let eye_minus_rho = DMatrix::from_fn(j_count, j_count, |j, i| {
        let delta = if i == j { 1.0 } else { 0.0 };
        delta - inst.rho[j][i]
    });
    let zvec = eye_minus_rho
        .lu()
        .solve(&r1_base)
        .ok_or_else(|| "transition system is singular".to_string())?;
    for j in 0..j_count {
        v[layout.z[j]] = zvec[j];
    }

    for j in 0..j_count {
        let rho_z: f64 = (0..j_count).map(|i| inst.rho[j][i] * zvec[i]).sum();
        let blower: f64 = (0..k_count)
            .map(|k| inst.x_lower[j][k] * v[layout.b[j][k]])
            .sum();
        let xbar_sum: f64 = inst.x_upper[j].iter().sum();
        v[layout.r1[j]] = r1_base[j] - eps * (1.0 + xbar_sum);
        v[layout.s1[j]] = inst.psi[j] + rho_z + blower - eps;
        v[layout.r2[j]] = eps;
        v[layout.s2[j]] = eps;
        v[layout.t2[j]] = -eps;
    }
    Ok(v)
}

/// Construct a strictly interior feasible point of the Markov-chain dual
/// without solving anything: base point from the closed-form recipe, then
/// the smallest-working perturbation from a fixed grid pushes the second
/// cone family off the origin. Resource multipliers, when present, stay
/// at zero. Fails with [`Error::ConstructionFailed`] when the transition
/// system is singular or no grid perturbation yields a positive margin.
pub fn strict_dual_point_mc(
    inst: &McInstance,
    rc: Option<&ResourceConstraints>,
) -> Result<DualPoint> {
    let prog = dualize_mc(inst, rc);
    let mut last_err = String::new();
    for &eps in &EPS_GRID {
        match mc_candidate(inst, &prog, eps) {
            Ok(v) => {
                if let Some(point) = accept(&prog, v) {
                    return Ok(point);
                }
                last_err = format!("no positive interior margin at perturbation {eps:e}");
            }
            Err(e) => return Err(Error::ConstructionFailed(e)),
        }
    }
    Err(Error::ConstructionFailed(last_err))
}

/// Construct a strictly interior feasible point of the nested-logit dual:
/// unit attribute multipliers (`w = c = −1`, `b = 1`, `q = ρ`), a large
/// shift `δ` on the nest multipliers (`z = δ`, `z₀ = 2δ`), and the
/// remaining cone slots split evenly across their rows. Resource
/// multipliers, when present, stay at zero.
pub fn strict_dual_point_nl(
    inst: &NlInstance,
    rc: Option<&ResourceConstraints>,
) -> Result<DualPoint> {
    let prog = dualize_nl(inst, rc);
    let DualLayout::Nl(layout) = &prog.layout else {
        unreachable!("nested-logit dual has a nested-logit layout");
    };
    let i_count = inst.nest_count();
    let k_count = inst.attr_count();
    let n_flat = inst.product_count();

    // δ large enough that both aggregate rows keep positive slack for the
    // evenly split cone slots.
    let sum_xbar_all: f64 = inst
        .product_indices()
        .map(|(i, j, _)| inst.nests[i].x_upper[j].iter().sum::<f64>())
        .sum();
    let worst_share_row: f64 = inst
        .product_indices()
        .map(|(i, j, _)| {
            let nest = &inst.nests[i];
            let xbar_rho: f64 = (0..k_count)
                .map(|k| nest.x_upper[j][k] * inst.rho_shared[i][k])
                .sum();
            let xlower_sum: f64 = nest.x_lower[j].iter().sum();
            xbar_rho - nest.psi[j] - xlower_sum
        })
        .fold(0.0, f64::max);
    let delta = 1e3_f64
        .max((sum_xbar_all + 1e3) / 2.0)
        .max(1e3 + worst_share_row);

    let mut v = vec![0.0; prog.n_vars];
    v[layout.z0] = 2.0 * delta;
    for i in 0..i_count {
        v[layout.z[i]] = delta;
        v[layout.w[i]] = -1.0;
        for k in 0..k_count {
            v[layout.b[i][k]] = 1.0;
            v[layout.q[i][k]] = inst.rho_shared[i][k];
        }
        v[layout.s3[i]] = delta / 2.0;
        v[layout.r4[i]] = delta / 2.0;
    }
    for (i, j, flat) in inst.product_indices() {
        v[layout.c[flat]] = -1.0;
        let nest = &inst.nests[i];
        let xbar_q: f64 = (0..k_count)
            .map(|k| nest.x_upper[j][k] * inst.rho_shared[i][k])
            .sum();
        let xlower_b: f64 = nest.x_lower[j].iter().sum();
        let half = (nest.psi[j] + delta + xlower_b - xbar_q) / 2.0;
        v[layout.s1[flat]] = half;
        v[layout.r2[flat]] = half;
    }
    // Outside-share column: split the remaining mass evenly over the
    // 2·(products) + 2·(nests) free slots.
    let rhs1 = 2.0 * delta - sum_xbar_all;
    let share = rhs1 / (2.0 * n_flat as f64 + 2.0 * i_count as f64);
    for flat in 0..n_flat {
        v[layout.r1[flat]] = share;
        v[layout.s2[flat]] = share;
    }
    for i in 0..i_count {
        v[layout.r3[i]] = share;
        v[layout.s4[i]] = share;
    }

    accept(&prog, v).ok_or_else(|| {
        Error::ConstructionFailed(format!(
            "nested-logit dual point rejected at shift {delta:e}"
        ))
    })
}

/// Map a solver solution of the Markov-chain primal program (built by
/// [`crate::reform::build_mc`], optionally with resource rows) onto the
/// explicit dual's variables: equality multipliers become `z`, the linear
/// block becomes `b`/`q`/`μ`, the exponential block the cone slots.
pub fn solver_dual_point_mc(
    inst: &McInstance,
    rc: Option<&ResourceConstraints>,
    sol: &PrimalDualSolution,
) -> DualPoint {
    let prog = dualize_mc(inst, rc);
    let DualLayout::Mc(layout) = &prog.layout else {
        unreachable!("markov-chain dual has a markov-chain layout");
    };
    let j_count = inst.product_count();
    let k_count = inst.attr_count();
    let lin = 2 * j_count * k_count + layout.resource.len();

    let mut v = vec![0.0; prog.n_vars];
    for j in 0..j_count {
        v[layout.z[j]] = sol.y[j];
        for k in 0..k_count {
            v[layout.b[j][k]] = sol.z[2 * (j * k_count + k)];
            v[layout.q[j][k]] = sol.z[2 * (j * k_count + k) + 1];
        }
        let t1_rows = lin + 6 * j;
        v[layout.r1[j]] = sol.z[t1_rows];
        v[layout.s1[j]] = sol.z[t1_rows + 1];
        v[layout.t1[j]] = sol.z[t1_rows + 2];
        v[layout.r2[j]] = sol.z[t1_rows + 3];
        v[layout.s2[j]] = sol.z[t1_rows + 4];
        v[layout.t2[j]] = sol.z[t1_rows + 5];
    }
    for (l, &idx) in layout.resource.iter().enumerate() {
        v[idx] = sol.z[2 * j_count * k_count + l];
    }
    let margin = prog.min_cone_margin(&v);
    DualPoint {
        values: v,
        interior_margin: margin,
    }
}

/// Map a solver solution of the nested-logit primal program (built by
/// [`crate::reform::build_nl`], optionally with resource rows) onto the
/// explicit dual's variables. The structural third slots (`γw`, `γc`,
/// `(1−γ)w`, `(1−γ)Σc`) are implied, so only the `r`/`s` slots are read
/// from the exponential block.
pub fn solver_dual_point_nl(
    inst: &NlInstance,
    rc: Option<&ResourceConstraints>,
    sol: &PrimalDualSolution,
) -> DualPoint {
    let prog = dualize_nl(inst, rc);
    let DualLayout::Nl(layout) = &prog.layout else {
        unreachable!("nested-logit dual has a nested-logit layout");
    };
    let i_count = inst.nest_count();
    let k_count = inst.attr_count();
    let n_flat = inst.product_count();
    let lin = 2 * i_count * k_count + layout.resource.len();

    let mut v = vec![0.0; prog.n_vars];
    // Equality multipliers, in the primal builder's row order: nest
    // aggregation rows, per-product rows, nest-share rows, simplex.
    for i in 0..i_count {
        v[layout.w[i]] = sol.y[i];
        v[layout.z[i]] = sol.y[i_count + n_flat + i];
    }
    for flat in 0..n_flat {
        v[layout.c[flat]] = sol.y[i_count + flat];
    }
    v[layout.z0] = sol.y[i_count + n_flat + i_count];
    for i in 0..i_count {
        for k in 0..k_count {
            v[layout.b[i][k]] = sol.z[2 * (i * k_count + k)];
            v[layout.q[i][k]] = sol.z[2 * (i * k_count + k) + 1];
        }
    }
    for (l, &idx) in layout.resource.iter().enumerate() {
        v[idx] = sol.z[2 * i_count * k_count + l];
    }
    // Exponential block, in the primal builder's cone order.
    let mut row = lin;
    for (i, nest) in inst.nests.iter().enumerate() {
        for j in 0..nest.product_count() {
            let flat = inst.flat_index(i, j);
            v[layout.r1[flat]] = sol.z[row];
            v[layout.s1[flat]] = sol.z[row + 1];
            v[layout.r2[flat]] = sol.z[row + 3];
            v[layout.s2[flat]] = sol.z[row + 4];
            row += 6;
        }
        v[layout.r3[i]] = sol.z[row];
        v[layout.s3[i]] = sol.z[row + 1];
        v[layout.r4[i]] = sol.z[row + 3];
        v[layout.s4[i]] = sol.z[row + 4];
        row += 6;
    }
    let margin = prog.min_cone_margin(&v);
    DualPoint {
        values: v,
        interior_margin: margin,
    }
}

/// Dual objective minus primal objective. Nonnegative (up to numerical
/// tolerance) for any primal-feasible / dual-feasible pair; near zero at
/// a solver-optimal pair.
pub fn duality_gap(primal_objective: f64, dual_objective: f64) -> f64 {
    dual_objective - primal_objective
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Nest;
    use crate::reform;
    use approx::assert_abs_diff_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn mc_1x1() -> McInstance {
        McInstance::new(
            vec![vec![1.0]],
            vec![0.0],
            vec![vec![0.0]],
            vec![vec![5.0]],
            vec![1.0],
            vec![vec![0.0]],
        )
        .unwrap()
    }

    fn mc_2x2() -> McInstance {
        McInstance::new(
            vec![vec![0.8, 1.2], vec![1.5, 0.6]],
            vec![0.3, 0.1],
            vec![vec![0.0, 0.2], vec![0.1, 0.0]],
            vec![vec![2.0, 1.5], vec![1.0, 2.5]],
            vec![0.6, 0.4],
            vec![vec![0.0, 0.5], vec![0.3, 0.0]],
        )
        .unwrap()
    }

    fn nl_two_nests() -> NlInstance {
        NlInstance::new(
            vec![
                Nest {
                    gamma: 0.6,
                    psi: vec![0.1, 0.3],
                    x_lower: vec![vec![0.0, 0.1], vec![0.2, 0.0]],
                    x_upper: vec![vec![1.5, 2.0], vec![1.0, 1.8]],
                },
                Nest {
                    gamma: 1.0,
                    psi: vec![0.0],
                    x_lower: vec![vec![0.0, 0.0]],
                    x_upper: vec![vec![2.0, 1.0]],
                },
            ],
            vec![vec![1.0, 0.8], vec![1.2, 0.5]],
        )
        .unwrap()
    }

    #[test]
    fn mc_dual_counting() {
        let prog = dualize_mc(&mc_1x1(), None);
        let DualLayout::Mc(layout) = &prog.layout else {
            panic!("wrong layout");
        };
        assert_eq!(layout.z.len(), 1);
        assert_eq!(layout.b.len(), 1);
        assert_eq!(layout.b[0].len(), 1);
        assert_eq!(layout.q[0].len(), 1);
        assert_eq!(prog.cones.len(), 2);
        assert_eq!(prog.rows.len(), 3);
        assert_eq!(prog.n_vars, 9);
    }

    #[test]
    fn zero_transitions_leave_no_cross_terms() {
        let prog = dualize_mc(&mc_1x1(), None);
        let DualLayout::Mc(layout) = &prog.layout else {
            panic!("wrong layout");
        };
        // Visit row: only the product's own z appears, with coefficient −1.
        let (row, _) = &prog.rows[0];
        let z_terms: Vec<_> = row.iter().filter(|(i, _)| *i == layout.z[0]).collect();
        assert_eq!(z_terms.len(), 1);
        assert_abs_diff_eq!(z_terms[0].1, -1.0);
        // Share row: no z terms at all.
        let (row, _) = &prog.rows[1];
        assert!(row.iter().all(|(i, _)| *i != layout.z[0]));
    }

    #[test]
    fn nl_dual_counting() {
        let inst = NlInstance::new(
            vec![Nest {
                gamma: 0.5,
                psi: vec![0.2],
                x_lower: vec![vec![0.0]],
                x_upper: vec![vec![2.0]],
            }],
            vec![vec![1.0]],
        )
        .unwrap();
        let prog = dualize_nl(&inst, None);
        let DualLayout::Nl(layout) = &prog.layout else {
            panic!("wrong layout");
        };
        assert_eq!(layout.z.len(), 1);
        assert_eq!(layout.w.len(), 1);
        assert_eq!(layout.c.len(), 1);
        assert_eq!(layout.b[0].len(), 1);
        assert_eq!(layout.q[0].len(), 1);
        assert_eq!(prog.cones.len(), 4);
        assert_eq!(prog.rows.len(), 4);
    }

    #[test]
    fn mc_base_construction_matches_the_closed_form() {
        // φ=1, ψ=0, ρ=0: t¹ = −1, r¹ = 1 + e^{−1}, and the cone
        // inequality r¹ > −t¹·e^{s¹/t¹−1} = e^{−1} holds strictly.
        let inst = mc_1x1();
        let prog = dualize_mc(&inst, None);
        let v = mc_candidate(&inst, &prog, 0.0).unwrap();
        let DualLayout::Mc(layout) = &prog.layout else {
            panic!("wrong layout");
        };
        assert_abs_diff_eq!(v[layout.t1[0]], -1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(v[layout.r1[0]], 1.0 + (-1.0_f64).exp(), epsilon = 1e-12);
        let bound = -v[layout.t1[0]] * (v[layout.s1[0]] / v[layout.t1[0]] - 1.0).exp();
        assert_abs_diff_eq!(bound, (-1.0_f64).exp(), epsilon = 1e-12);
        assert!(v[layout.r1[0]] > bound);
        // The unperturbed second family sits at the cone's origin.
        assert_eq!(
            (v[layout.r2[0]], v[layout.s2[0]], v[layout.t2[0]]),
            (0.0, 0.0, 0.0)
        );
        assert!(prog.max_row_residual(&v) <= 1e-12);
    }

    #[test]
    fn mc_strict_points_are_strictly_interior() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..25 {
            let j_count = rng.random_range(1..4);
            let k_count = rng.random_range(1..3);
            let phi: Vec<Vec<f64>> = (0..j_count)
                .map(|_| (0..k_count).map(|_| 0.2 + rng.random::<f64>()).collect())
                .collect();
            let psi: Vec<f64> = (0..j_count).map(|_| rng.random::<f64>()).collect();
            let x_lower: Vec<Vec<f64>> = (0..j_count)
                .map(|_| (0..k_count).map(|_| 0.5 * rng.random::<f64>()).collect())
                .collect();
            let x_upper: Vec<Vec<f64>> = x_lower
                .iter()
                .map(|row| row.iter().map(|&l| l + 0.5 + rng.random::<f64>()).collect())
                .collect();
            let lambda: Vec<f64> = (0..j_count).map(|_| 0.1 + rng.random::<f64>()).collect();
            let rho: Vec<Vec<f64>> = (0..j_count)
                .map(|i| {
                    (0..j_count)
                        .map(|j| {
                            if i == j {
                                0.0
                            } else {
                                0.3 * rng.random::<f64>() / j_count as f64
                            }
                        })
                        .collect()
                })
                .collect();
            let inst = McInstance::new(phi, psi, x_lower, x_upper, lambda, rho).unwrap();
            let prog = dualize_mc(&inst, None);
            let point = strict_dual_point_mc(&inst, None).unwrap();
            assert!(point.interior_margin > 0.0);
            assert!(prog.max_row_residual(&point.values) <= 1e-9);
            // Every triple is strictly inside the dual cone.
            for t in &prog.cones {
                let a = [
                    t[0].eval(&point.values),
                    t[1].eval(&point.values),
                    t[2].eval(&point.values),
                ];
                assert!(crate::conic::expcone_dual_contains(a[0], a[1], a[2], 0.0));
                assert!(expcone_dual_margin(&a) > 0.0);
            }
            // Recorded margin equals the recomputed slack.
            assert_abs_diff_eq!(
                point.interior_margin,
                prog.min_cone_margin(&point.values),
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn nl_strict_point_satisfies_rows_tightly() {
        let inst = nl_two_nests();
        let prog = dualize_nl(&inst, None);
        let point = strict_dual_point_nl(&inst, None).unwrap();
        assert!(point.interior_margin > 0.0);
        assert!(prog.max_row_residual(&point.values) <= 1e-9);
        // Small instance, base shift 10³: absolute residuals also tiny.
        for (row, rhs) in &prog.rows {
            let lhs: f64 = row.iter().map(|&(i, c)| c * point.values[i]).sum();
            assert!((lhs - rhs).abs() <= 1e-9);
        }
        // The unit-dissimilarity nest's degenerate triples sit on the
        // third-slot face and still earn a positive face margin.
        let margins = prog.cone_margins(&point.values);
        assert!(margins.iter().all(|&m| m > 0.0));
    }

    #[test]
    fn weak_duality_against_feasible_primal_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let inst = mc_2x2();
        let point = strict_dual_point_mc(&inst, None).unwrap();
        let prog = dualize_mc(&inst, None);
        let dual_obj = prog.objective_value(&point.values);
        for _ in 0..50 {
            let x: Vec<Vec<f64>> = inst
                .x_lower
                .iter()
                .zip(&inst.x_upper)
                .map(|(lo, hi)| {
                    lo.iter()
                        .zip(hi)
                        .map(|(&l, &u)| l + (u - l) * rng.random::<f64>())
                        .collect()
                })
                .collect();
            let profit = inst.expected_profit(&x).unwrap();
            assert!(duality_gap(profit, dual_obj) >= -1e-9);
        }

        let nl = nl_two_nests();
        let nl_point = strict_dual_point_nl(&nl, None).unwrap();
        let nl_prog = dualize_nl(&nl, None);
        let nl_dual_obj = nl_prog.objective_value(&nl_point.values);
        let (lower, upper) = nl.flat_box();
        for _ in 0..50 {
            let x: Vec<Vec<f64>> = lower
                .iter()
                .zip(&upper)
                .map(|(lo, hi)| {
                    lo.iter()
                        .zip(hi)
                        .map(|(&l, &u)| l + (u - l) * rng.random::<f64>())
                        .collect()
                })
                .collect();
            assert!(duality_gap(nl.expected_profit(&x), nl_dual_obj) >= -1e-9);
        }
    }

    #[test]
    fn solver_duals_satisfy_the_explicit_rows_with_tiny_gap() {
        let cfg = crate::conic::SolverConfig::default();

        let inst = mc_2x2();
        let sol = crate::conic::solve(&reform::build_mc(&inst).unwrap().to_conic().unwrap(), &cfg);
        assert_eq!(sol.status, crate::conic::SolveStatus::Optimal);
        let point = solver_dual_point_mc(&inst, None, &sol);
        let prog = dualize_mc(&inst, None);
        assert!(prog.max_row_residual(&point.values) <= 1e-6);
        assert!(prog.nonneg_violation(&point.values) <= 1e-9);
        let gap = duality_gap(sol.primal_objective, prog.objective_value(&point.values));
        assert!(gap.abs() <= 1e-6 * (1.0 + sol.primal_objective.abs()));

        let nl = nl_two_nests();
        let sol = crate::conic::solve(&reform::build_nl(&nl).unwrap().to_conic().unwrap(), &cfg);
        assert_eq!(sol.status, crate::conic::SolveStatus::Optimal);
        let point = solver_dual_point_nl(&nl, None, &sol);
        let prog = dualize_nl(&nl, None);
        assert!(prog.max_row_residual(&point.values) <= 1e-6);
        let gap = duality_gap(sol.primal_objective, prog.objective_value(&point.values));
        assert!(gap.abs() <= 1e-6 * (1.0 + sol.primal_objective.abs()));
    }

    #[test]
    fn resource_rows_extend_the_dual_without_breaking_construction() {
        let inst = mc_2x2();
        let rc = ResourceConstraints {
            gamma: vec![vec![1.0, 1.0]],
            gamma_rhs: vec![0.2],
        };
        let plain = dualize_mc(&inst, None);
        let with = dualize_mc(&inst, Some(&rc));
        let DualLayout::Mc(layout) = &with.layout else {
            panic!("wrong layout");
        };
        assert_eq!(with.n_vars, plain.n_vars + 1);
        assert_eq!(layout.resource.len(), 1);
        assert_abs_diff_eq!(with.objective[layout.resource[0]], -0.2);
        // Share rows gained the multiplier term.
        let (row, _) = &with.rows[2];
        assert!(row
            .iter()
            .any(|&(i, c)| i == layout.resource[0] && c == 1.0));

        let point = strict_dual_point_mc(&inst, Some(&rc)).unwrap();
        assert!(point.interior_margin > 0.0);
        assert_abs_diff_eq!(point.values[layout.resource[0]], 0.0);

        let nl = nl_two_nests();
        let rc3 = ResourceConstraints {
            gamma: vec![vec![1.0, 0.0, 1.0]],
            gamma_rhs: vec![0.1],
        };
        let point = strict_dual_point_nl(&nl, Some(&rc3)).unwrap();
        assert!(point.interior_margin > 0.0);
    }

    #[test]
    fn dual_margin_branches() {
        // Main branch, comfortably interior.
        assert!(expcone_dual_margin(&[2.0, 0.5, -1.0]) > 0.0);
        // Main branch, violated.
        assert!(expcone_dual_margin(&[0.1, 0.0, -1.0]) < 0.0);
        // Face: positive entries give a positive face margin.
        assert!(expcone_dual_margin(&[0.3, 0.7, 0.0]) > 0.0);
        // Face with a negative entry is outside.
        assert!(expcone_dual_margin(&[-0.1, 0.7, 0.0]) < 0.0);
        // Positive third slot is always outside.
        assert!(expcone_dual_margin(&[5.0, 5.0, 0.2]) < 0.0);
    }
}
