//! Conic reformulation builders.
//!
//! Each choice model's profit-maximization problem becomes a conic program
//! over shares and attribute-mass variables `u_jk = x_jk·d_j`: the share
//! equations turn into exponential-cone rows, the box constraints into
//! linear rows, and the (bilinear-looking) objective into a linear one.
//! Solving the built program and dividing `u` by `d` recovers an optimal
//! attribute matrix (module [`crate::recover`]).
//!
//! Programs are assembled in a role-aware form ([`ReformProgram`]) that
//! keeps a [`VariableMap`] from model roles to variable indices, then
//! lowered to the solver's standard slack form with
//! [`ReformProgram::to_conic`]. Variable ordering is fixed (shares first,
//! then outside/nest shares, then attribute-mass blocks) so repeated
//! builds are identical and solver output is reproducible bit-for-bit.

use crate::conic::{ConeSpec, ConicProgram};
use crate::error::{Error, Result};
use crate::feasibility;
use crate::model::{McInstance, MnlInstance, NlInstance};
use nalgebra::{DMatrix, DVector};

/// A sparse affine expression `Σ coeffs·w + constant`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearExpr {
    pub coeffs: Vec<(usize, f64)>,
    pub constant: f64,
}

impl LinearExpr {
    fn var(i: usize) -> Self {
        LinearExpr {
            coeffs: vec![(i, 1.0)],
            constant: 0.0,
        }
    }

    fn sum(indices: impl IntoIterator<Item = usize>) -> Self {
        LinearExpr {
            coeffs: indices.into_iter().map(|i| (i, 1.0)).collect(),
            constant: 0.0,
        }
    }

    /// Evaluate at `w`.
    pub fn eval(&self, w: &[f64]) -> f64 {
        self.constant + self.coeffs.iter().map(|&(i, c)| c * w[i]).sum::<f64>()
    }
}

/// Model roles of the program variables. Lists are empty when the role
/// does not occur in the model; all indices are disjoint and below
/// [`ReformProgram::n_vars`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct VariableMap {
    /// Product shares `d_j`, flat product order.
    pub d: Vec<usize>,
    /// Outside share (`d₀` or `p⁰`).
    pub outside: Option<usize>,
    /// Attribute mass `u_jk` per product (multinomial and Markov-chain).
    pub u: Vec<Vec<usize>>,
    /// Visit rates `v_j` (Markov-chain).
    pub visits: Vec<usize>,
    /// Nest shares `p_i` (nested-logit).
    pub nest_share: Vec<usize>,
    /// Nest attribute totals `v_k` per nest (nested-logit).
    pub nest_attr: Vec<Vec<usize>>,
    /// Per-product epigraph variables `e_j` (nested-logit), flat order.
    pub e: Vec<usize>,
    /// Per-product epigraph variables `f_j` (nested-logit), flat order.
    pub f: Vec<usize>,
    /// Per-nest epigraph variables `g_i` (nested-logit).
    pub g: Vec<usize>,
    /// Per-nest epigraph variables `h_i` (nested-logit).
    pub h: Vec<usize>,
}

/// A conic program in role-aware form: maximize `objective·w` subject to
/// linear equalities, `a·w ≤ b` inequalities, and exponential-cone triples
/// of affine expressions.
#[derive(Debug, Clone, PartialEq)]
pub struct ReformProgram {
    pub n_vars: usize,
    pub objective: Vec<f64>,
    pub equalities: Vec<(Vec<(usize, f64)>, f64)>,
    pub inequalities: Vec<(Vec<(usize, f64)>, f64)>,
    pub cones: Vec<[LinearExpr; 3]>,
    pub variable_map: VariableMap,
}

/// Linear market-share requirements `Σ_j Γ_lj·d_j ≥ γ_l`.
#[derive(Debug, Clone, PartialEq)]
pub struct ResourceConstraints {
    pub gamma: Vec<Vec<f64>>,
    pub gamma_rhs: Vec<f64>,
}

impl ResourceConstraints {
    /// Number of rows.
    pub fn row_count(&self) -> usize {
        self.gamma_rhs.len()
    }
}

impl ReformProgram {
    /// Objective value at `w`.
    pub fn objective_value(&self, w: &[f64]) -> f64 {
        self.objective.iter().zip(w).map(|(&c, &v)| c * v).sum()
    }

    /// Worst equality residual `max |a·w − b|`.
    pub fn equality_residual(&self, w: &[f64]) -> f64 {
        self.equalities
            .iter()
            .map(|(row, b)| (eval_row(row, w) - b).abs())
            .fold(0.0, f64::max)
    }

    /// Worst inequality violation `max (a·w − b)₊`.
    pub fn inequality_violation(&self, w: &[f64]) -> f64 {
        self.inequalities
            .iter()
            .map(|(row, b)| (eval_row(row, w) - b).max(0.0))
            .fold(0.0, f64::max)
    }

    /// Signed worst exponential-cone margin over all triples at `w`
    /// (negative = violated).
    pub fn worst_cone_margin(&self, w: &[f64]) -> f64 {
        self.cones
            .iter()
            .map(|triple| {
                let a = [triple[0].eval(w), triple[1].eval(w), triple[2].eval(w)];
                if a[0] > 0.0 && a[1] > 0.0 {
                    a[1] * (a[0] / a[1]).ln() - a[2]
                } else {
                    a[0].min(-a[2]).min(-a[1].abs())
                }
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// Lower to the solver's standard slack form (`maximize` set; box and
    /// resource rows become the linear cone, each triple three slack rows).
    pub fn to_conic(&self) -> Result<ConicProgram> {
        let n = self.n_vars;
        let p = self.equalities.len();
        let lin = self.inequalities.len();
        let exp = self.cones.len();
        let m = lin + 3 * exp;

        let c = DVector::from_column_slice(&self.objective);
        let mut a = DMatrix::<f64>::zeros(p, n);
        let mut b = DVector::<f64>::zeros(p);
        for (r, (row, rhs)) in self.equalities.iter().enumerate() {
            for &(i, v) in row {
                a[(r, i)] += v;
            }
            b[r] = *rhs;
        }
        let mut g = DMatrix::<f64>::zeros(m, n);
        let mut h = DVector::<f64>::zeros(m);
        for (r, (row, rhs)) in self.inequalities.iter().enumerate() {
            for &(i, v) in row {
                g[(r, i)] += v;
            }
            h[r] = *rhs;
        }
        for (t, triple) in self.cones.iter().enumerate() {
            for (c_idx, expr) in triple.iter().enumerate() {
                let r = lin + 3 * t + c_idx;
                for &(i, v) in &expr.coeffs {
                    g[(r, i)] -= v;
                }
                h[r] = expr.constant;
            }
        }
        ConicProgram::new(c, a, b, g, h, ConeSpec { lin, exp }, true)
    }
}

fn eval_row(row: &[(usize, f64)], w: &[f64]) -> f64 {
    row.iter().map(|&(i, c)| c * w[i]).sum()
}

/// Build the multinomial-logit conic program.
///
/// Variables `[d (J) | d₀ | u (J·K)]`; objective
/// `Σ_j(Σₖ φ_jk·u_jk − ψ_j·d_j)`; simplex equality `d₀ + Σd = 1`; per
/// product the share cone `(d₀, d_j, Σₖu_jk)` and the floor cone
/// `(d_j, d₀, −Σₖx̄_jk·d₀)`; box rows `x_lower_jk·d_j ≤ u_jk ≤ x̄_jk·d_j`.
pub fn build_mnl(inst: &MnlInstance) -> Result<ReformProgram> {
    inst.validate()?;
    let j_count = inst.product_count();
    let k_count = inst.attr_count();
    let d = |j: usize| j;
    let d0 = j_count;
    let u = |j: usize, k: usize| j_count + 1 + j * k_count + k;
    let n_vars = j_count + 1 + j_count * k_count;

    let mut objective = vec![0.0; n_vars];
    for j in 0..j_count {
        objective[d(j)] = -inst.psi[j];
        for k in 0..k_count {
            objective[u(j, k)] = inst.phi[j][k];
        }
    }

    let mut simplex: Vec<(usize, f64)> = (0..j_count).map(|j| (d(j), 1.0)).collect();
    simplex.push((d0, 1.0));
    let equalities = vec![(simplex, 1.0)];

    let mut inequalities = Vec::with_capacity(2 * j_count * k_count);
    let mut cones = Vec::with_capacity(2 * j_count);
    for j in 0..j_count {
        for k in 0..k_count {
            inequalities.push((vec![(d(j), inst.x_lower[j][k]), (u(j, k), -1.0)], 0.0));
            inequalities.push((vec![(u(j, k), 1.0), (d(j), -inst.x_upper[j][k])], 0.0));
        }
        let xbar_sum: f64 = inst.x_upper[j].iter().sum();
        cones.push([
            LinearExpr::var(d0),
            LinearExpr::var(d(j)),
            LinearExpr::sum((0..k_count).map(|k| u(j, k))),
        ]);
        cones.push([
            LinearExpr::var(d(j)),
            LinearExpr::var(d0),
            LinearExpr {
                coeffs: vec![(d0, -xbar_sum)],
                constant: 0.0,
            },
        ]);
    }

    Ok(ReformProgram {
        n_vars,
        objective,
        equalities,
        inequalities,
        cones,
        variable_map: VariableMap {
            d: (0..j_count).collect(),
            outside: Some(d0),
            u: (0..j_count)
                .map(|j| (0..k_count).map(|k| u(j, k)).collect())
                .collect(),
            ..VariableMap::default()
        },
    })
}

/// Build the Markov-chain conic program.
///
/// Variables `[d (J) | v (J) | u (J·K)]`; objective as in the
/// multinomial build; visit balance equalities
/// `v_j − Σ_i ρ_ij(v_i − d_i) = λ_j`; per product the cones
/// `(v_j, d_j, Σₖu_jk)` and `(d_j, v_j, −Σₖx̄_jk·v_j)`; the same box rows.
/// Requires the visit system to be uniquely solvable with positive visits.
pub fn build_mc(inst: &McInstance) -> Result<ReformProgram> {
    inst.validate()?;
    feasibility::require_unique_positive(&inst.lambda, &inst.rho)?;
    let j_count = inst.product_count();
    let k_count = inst.attr_count();
    let d = |j: usize| j;
    let v = |j: usize| j_count + j;
    let u = |j: usize, k: usize| 2 * j_count + j * k_count + k;
    let n_vars = 2 * j_count + j_count * k_count;

    let mut objective = vec![0.0; n_vars];
    for j in 0..j_count {
        objective[d(j)] = -inst.psi[j];
        for k in 0..k_count {
            objective[u(j, k)] = inst.phi[j][k];
        }
    }

    let mut equalities = Vec::with_capacity(j_count);
    for j in 0..j_count {
        let mut row: Vec<(usize, f64)> = Vec::with_capacity(2 * j_count + 1);
        row.push((v(j), 1.0));
        for i in 0..j_count {
            let r = inst.rho[i][j];
            if r != 0.0 {
                row.push((v(i), -r));
                row.push((d(i), r));
            }
        }
        equalities.push((row, inst.lambda[j]));
    }

    let mut inequalities = Vec::with_capacity(2 * j_count * k_count);
    let mut cones = Vec::with_capacity(2 * j_count);
    for j in 0..j_count {
        for k in 0..k_count {
            inequalities.push((vec![(d(j), inst.x_lower[j][k]), (u(j, k), -1.0)], 0.0));
            inequalities.push((vec![(u(j, k), 1.0), (d(j), -inst.x_upper[j][k])], 0.0));
        }
        let xbar_sum: f64 = inst.x_upper[j].iter().sum();
        cones.push([
            LinearExpr::var(v(j)),
            LinearExpr::var(d(j)),
            LinearExpr::sum((0..k_count).map(|k| u(j, k))),
        ]);
        cones.push([
            LinearExpr::var(d(j)),
            LinearExpr::var(v(j)),
            LinearExpr {
                coeffs: vec![(v(j), -xbar_sum)],
                constant: 0.0,
            },
        ]);
    }

    Ok(ReformProgram {
        n_vars,
        objective,
        equalities,
        inequalities,
        cones,
        variable_map: VariableMap {
            d: (0..j_count).collect(),
            u: (0..j_count)
                .map(|j| (0..k_count).map(|k| u(j, k)).collect())
                .collect(),
            visits: (0..j_count).map(v).collect(),
            ..VariableMap::default()
        },
    })
}

/// Build the nested-logit conic program.
///
/// Variables `[d (flat) | p⁰ | p (I) | v_k (I·K) | e (flat) | f (flat) |
/// g (I) | h (I)]`; objective `Σ_{i,k} ρ_k·v_k − Σ_j ψ_j·d_j`;
/// equalities: per nest `γΣ_j e_j + (1−γ)g = Σₖv_k`, per product
/// `γf_j + (1−γ)h_i = −p⁰Σₖx̄_jk`, per nest `Σ_j d_j = p_i`, and the
/// simplex `p⁰ + Σp = 1`; per (nest, attribute) the total-mass box rows
/// `Σ_j x_lower·d_j ≤ v_k ≤ Σ_j x̄·d_j`; cones `(p⁰,d_j,e_j)`,
/// `(d_j,p⁰,f_j)` per product and `(p⁰,p_i,g_i)`, `(p_i,p⁰,h_i)` per nest.
pub fn build_nl(inst: &NlInstance) -> Result<ReformProgram> {
    inst.validate()?;
    let i_count = inst.nest_count();
    let k_count = inst.attr_count();
    let n_flat = inst.product_count();
    let d = |flat: usize| flat;
    let p0 = n_flat;
    let p = |i: usize| n_flat + 1 + i;
    let base_v = n_flat + 1 + i_count;
    let vk = |i: usize, k: usize| base_v + i * k_count + k;
    let base_e = base_v + i_count * k_count;
    let e = |flat: usize| base_e + flat;
    let base_f = base_e + n_flat;
    let f = |flat: usize| base_f + flat;
    let base_g = base_f + n_flat;
    let g = |i: usize| base_g + i;
    let base_h = base_g + i_count;
    let h = |i: usize| base_h + i;
    let n_vars = base_h + i_count;

    let mut objective = vec![0.0; n_vars];
    for (i, j, flat) in inst.product_indices() {
        objective[d(flat)] = -inst.nests[i].psi[j];
    }
    for i in 0..i_count {
        for k in 0..k_count {
            objective[vk(i, k)] = inst.rho_shared[i][k];
        }
    }

    let mut equalities = Vec::new();
    // Per nest: γ·Σ_j e_j + (1−γ)·g_i − Σₖ v_k = 0.
    for (i, nest) in inst.nests.iter().enumerate() {
        let mut row: Vec<(usize, f64)> = (0..nest.product_count())
            .map(|j| (e(inst.flat_index(i, j)), nest.gamma))
            .collect();
        row.push((g(i), 1.0 - nest.gamma));
        for k in 0..k_count {
            row.push((vk(i, k), -1.0));
        }
        equalities.push((row, 0.0));
    }
    // Per product: γ·f_j + (1−γ)·h_i + Σₖx̄_jk·p⁰ = 0.
    for (i, j, flat) in inst.product_indices() {
        let nest = &inst.nests[i];
        let xbar_sum: f64 = nest.x_upper[j].iter().sum();
        equalities.push((
            vec![
                (f(flat), nest.gamma),
                (h(i), 1.0 - nest.gamma),
                (p0, xbar_sum),
            ],
            0.0,
        ));
    }
    // Per nest: Σ_j d_j − p_i = 0.
    for (i, nest) in inst.nests.iter().enumerate() {
        let mut row: Vec<(usize, f64)> = (0..nest.product_count())
            .map(|j| (d(inst.flat_index(i, j)), 1.0))
            .collect();
        row.push((p(i), -1.0));
        equalities.push((row, 0.0));
    }
    // Simplex: p⁰ + Σ p_i = 1.
    {
        let mut row: Vec<(usize, f64)> = vec![(p0, 1.0)];
        row.extend((0..i_count).map(|i| (p(i), 1.0)));
        equalities.push((row, 1.0));
    }

    let mut inequalities = Vec::new();
    for (i, nest) in inst.nests.iter().enumerate() {
        for k in 0..k_count {
            let mut lo: Vec<(usize, f64)> = (0..nest.product_count())
                .map(|j| (d(inst.flat_index(i, j)), nest.x_lower[j][k]))
                .collect();
            lo.push((vk(i, k), -1.0));
            inequalities.push((lo, 0.0));
            let mut hi: Vec<(usize, f64)> = vec![(vk(i, k), 1.0)];
            hi.extend(
                (0..nest.product_count()).map(|j| (d(inst.flat_index(i, j)), -nest.x_upper[j][k])),
            );
            inequalities.push((hi, 0.0));
        }
    }

    let mut cones = Vec::new();
    for (i, nest) in inst.nests.iter().enumerate() {
        for j in 0..nest.product_count() {
            let flat = inst.flat_index(i, j);
            cones.push([
                LinearExpr::var(p0),
                LinearExpr::var(d(flat)),
                LinearExpr::var(e(flat)),
            ]);
            cones.push([
                LinearExpr::var(d(flat)),
                LinearExpr::var(p0),
                LinearExpr::var(f(flat)),
            ]);
        }
        cones.push([
            LinearExpr::var(p0),
            LinearExpr::var(p(i)),
            LinearExpr::var(g(i)),
        ]);
        cones.push([
            LinearExpr::var(p(i)),
            LinearExpr::var(p0),
            LinearExpr::var(h(i)),
        ]);
    }

    Ok(ReformProgram {
        n_vars,
        objective,
        equalities,
        inequalities,
        cones,
        variable_map: VariableMap {
            d: (0..n_flat).collect(),
            outside: Some(p0),
            nest_share: (0..i_count).map(p).collect(),
            nest_attr: (0..i_count)
                .map(|i| (0..k_count).map(|k| vk(i, k)).collect())
                .collect(),
            e: (0..n_flat).map(e).collect(),
            f: (0..n_flat).map(f).collect(),
            g: (0..i_count).map(g).collect(),
            h: (0..i_count).map(h).collect(),
            ..VariableMap::default()
        },
    })
}

/// Append resource rows `Σ_j Γ_lj·d_j ≥ γ_l` (stored as
/// `−Σ Γ·d ≤ −γ_l`); objective and cones untouched.
pub fn with_resources(prog: &ReformProgram, rc: &ResourceConstraints) -> Result<ReformProgram> {
    let j_count = prog.variable_map.d.len();
    if rc.gamma.len() != rc.gamma_rhs.len() {
        return Err(Error::dims(
            "gamma rows",
            rc.gamma_rhs.len(),
            rc.gamma.len(),
        ));
    }
    let mut out = prog.clone();
    for (l, row) in rc.gamma.iter().enumerate() {
        if row.len() != j_count {
            return Err(Error::dims(format!("gamma[{l}]"), j_count, row.len()));
        }
        let coeffs: Vec<(usize, f64)> = row
            .iter()
            .enumerate()
            .filter(|(_, &c)| c != 0.0)
            .map(|(j, &c)| (prog.variable_map.d[j], -c))
            .collect();
        out.inequalities.push((coeffs, -rc.gamma_rhs[l]));
    }
    Ok(out)
}

/// Program-variable values for a feasible attribute matrix of a
/// multinomial instance: shares from the evaluator and `u = x∘d`.
pub fn mnl_mapped_point(inst: &MnlInstance, x: &[Vec<f64>]) -> Vec<f64> {
    let shares = inst.shares(x);
    let j_count = inst.product_count();
    let k_count = inst.attr_count();
    let mut w = vec![0.0; j_count + 1 + j_count * k_count];
    for j in 0..j_count {
        w[j] = shares.product[j];
        for k in 0..k_count {
            w[j_count + 1 + j * k_count + k] = x[j][k] * shares.product[j];
        }
    }
    w[j_count] = shares.outside.unwrap_or(0.0);
    w
}

/// Program-variable values for a feasible attribute matrix of a
/// Markov-chain instance.
pub fn mc_mapped_point(inst: &McInstance, x: &[Vec<f64>]) -> Result<Vec<f64>> {
    let shares = inst.shares(x)?;
    let visits = shares.visits.as_ref().expect("mc shares carry visits");
    let j_count = inst.product_count();
    let k_count = inst.attr_count();
    let mut w = vec![0.0; 2 * j_count + j_count * k_count];
    for j in 0..j_count {
        w[j] = shares.product[j];
        w[j_count + j] = visits[j];
        for k in 0..k_count {
            w[2 * j_count + j * k_count + k] = x[j][k] * shares.product[j];
        }
    }
    Ok(w)
}

/// Program-variable values for a feasible attribute matrix of a
/// nested-logit instance: the epigraph variables sit on their cone
/// boundaries except `f`, which is pinned by its equality row.
pub fn nl_mapped_point(inst: &NlInstance, x: &[Vec<f64>]) -> Vec<f64> {
    let shares = inst.shares(x);
    let prog_dims = {
        let i_count = inst.nest_count();
        let n_flat = inst.product_count();
        let k_count = inst.attr_count();
        (i_count, n_flat, k_count)
    };
    let (i_count, n_flat, k_count) = prog_dims;
    let p0_val = shares.outside.unwrap_or(0.0);
    let nest_shares = shares.nest.as_ref().expect("nl shares carry nest shares");

    let base_v = n_flat + 1 + i_count;
    let base_e = base_v + i_count * k_count;
    let base_f = base_e + n_flat;
    let base_g = base_f + n_flat;
    let base_h = base_g + i_count;
    let mut w = vec![0.0; base_h + i_count];

    for (i, j, flat) in inst.product_indices() {
        let dj = shares.product[flat];
        w[flat] = dj;
        let gamma = inst.nests[i].gamma;
        let pi = nest_shares[i];
        // e_j = d_j·ln(p⁰/d_j) (cone-tight).
        w[base_e + flat] = dj * (p0_val / dj).ln();
        // f_j from its equality row: γf = −p⁰Σₖx̄ − (1−γ)h_i.
        let xbar_sum: f64 = inst.nests[i].x_upper[j].iter().sum();
        let h_i = p0_val * (pi / p0_val).ln();
        w[base_f + flat] = (-p0_val * xbar_sum - (1.0 - gamma) * h_i) / gamma;
    }
    w[n_flat] = p0_val;
    for i in 0..i_count {
        let pi = nest_shares[i];
        w[n_flat + 1 + i] = pi;
        w[base_g + i] = pi * (p0_val / pi).ln();
        w[base_h + i] = p0_val * (pi / p0_val).ln();
        for k in 0..k_count {
            let total: f64 = (0..inst.nests[i].product_count())
                .map(|j| {
                    let flat = inst.flat_index(i, j);
                    x[flat][k] * shares.product[flat]
                })
                .sum();
            w[base_v + i * k_count + k] = total;
        }
    }
    w
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Nest;
    use approx::assert_abs_diff_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn mnl_2x1() -> MnlInstance {
        MnlInstance::new(
            vec![vec![1.0], vec![0.7]],
            vec![0.2, 0.1],
            vec![vec![0.0], vec![0.5]],
            vec![vec![3.0], vec![2.0]],
        )
        .unwrap()
    }

    #[test]
    fn mnl_program_counts() {
        let prog = build_mnl(&mnl_2x1()).unwrap();
        assert_eq!(prog.n_vars, 5);
        assert_eq!(prog.cones.len(), 4);
        assert_eq!(prog.equalities.len(), 1);
        assert_eq!(prog.inequalities.len(), 4);

        let wide = MnlInstance::new(
            vec![vec![1.0, 1.0, 1.0]],
            vec![0.0],
            vec![vec![0.0; 3]],
            vec![vec![1.0; 3]],
        )
        .unwrap();
        let prog = build_mnl(&wide).unwrap();
        assert_eq!(prog.n_vars, 5);
        assert_eq!(prog.cones.len(), 2);
        assert_eq!(prog.inequalities.len(), 6);
    }

    #[test]
    fn mnl_objective_carries_margins() {
        let prog = build_mnl(&mnl_2x1()).unwrap();
        let u11 = prog.variable_map.u[0][0];
        assert_abs_diff_eq!(prog.objective[u11], 1.0);
        assert_abs_diff_eq!(prog.objective[prog.variable_map.d[0]], -0.2);
    }

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

    #[test]
    fn mc_program_counts() {
        let prog = build_mc(&mc_1x1()).unwrap();
        assert_eq!(prog.n_vars, 3);
        assert_eq!(prog.equalities.len(), 1);
        assert_eq!(prog.cones.len(), 2);
        assert_eq!(prog.inequalities.len(), 2);

        let big = McInstance::new(
            vec![vec![1.0, 1.0], vec![1.0, 1.0]],
            vec![0.0, 0.0],
            vec![vec![0.0, 0.0], vec![0.0, 0.0]],
            vec![vec![2.0, 2.0], vec![2.0, 2.0]],
            vec![0.5, 0.5],
            vec![vec![0.0, 0.3], vec![0.2, 0.0]],
        )
        .unwrap();
        let prog = build_mc(&big).unwrap();
        assert_eq!(prog.n_vars, 8);
        assert_eq!(prog.equalities.len(), 2);
        assert_eq!(prog.cones.len(), 4);
        assert_eq!(prog.inequalities.len(), 8);
    }

    #[test]
    fn mc_equality_row_without_transitions_is_the_arrival_row() {
        let prog = build_mc(&mc_1x1()).unwrap();
        let (row, rhs) = &prog.equalities[0];
        assert_eq!(row.as_slice(), &[(prog.variable_map.visits[0], 1.0)]);
        assert_abs_diff_eq!(*rhs, 1.0);
    }

    #[test]
    fn mc_build_requires_positive_visits() {
        let degenerate = McInstance::new(
            vec![vec![1.0]],
            vec![0.0],
            vec![vec![0.0]],
            vec![vec![5.0]],
            vec![0.0],
            vec![vec![0.0]],
        )
        .unwrap();
        assert!(matches!(
            build_mc(&degenerate),
            Err(crate::Error::McBaseSystemDegenerate(_))
        ));
    }

    fn nl_one_nest_two_products() -> NlInstance {
        NlInstance::new(
            vec![Nest {
                gamma: 0.5,
                psi: vec![0.1, 0.2],
                x_lower: vec![vec![0.0], vec![0.0]],
                x_upper: vec![vec![2.0], vec![3.0]],
            }],
            vec![vec![1.3]],
        )
        .unwrap()
    }

    #[test]
    fn nl_program_counts() {
        let prog = build_nl(&nl_one_nest_two_products()).unwrap();
        assert_eq!(prog.n_vars, 11);

        let two_singletons = NlInstance::new(
            vec![
                Nest {
                    gamma: 1.0,
                    psi: vec![0.0],
                    x_lower: vec![vec![0.0]],
                    x_upper: vec![vec![1.0]],
                },
                Nest {
                    gamma: 1.0,
                    psi: vec![0.0],
                    x_lower: vec![vec![0.0]],
                    x_upper: vec![vec![1.0]],
                },
            ],
            vec![vec![1.0], vec![1.0]],
        )
        .unwrap();
        let prog = build_nl(&two_singletons).unwrap();
        assert_eq!(prog.cones.len(), 8);
    }

    #[test]
    fn nl_gamma_one_degenerates_the_nest_rows() {
        let inst = NlInstance::new(
            vec![Nest {
                gamma: 1.0,
                psi: vec![0.0],
                x_lower: vec![vec![0.0]],
                x_upper: vec![vec![1.0]],
            }],
            vec![vec![1.0]],
        )
        .unwrap();
        let prog = build_nl(&inst).unwrap();
        // First equality is the nest e/g row: γ=1 zeroes the g coefficient.
        let (row, _) = &prog.equalities[0];
        let g_idx = prog.variable_map.g[0];
        let g_coef = row
            .iter()
            .find(|(i, _)| *i == g_idx)
            .map(|(_, c)| *c)
            .unwrap();
        assert_abs_diff_eq!(g_coef, 0.0);
    }

    #[test]
    fn variable_map_roles_are_disjoint_and_in_range() {
        for prog in [
            build_mnl(&mnl_2x1()).unwrap(),
            build_mc(&mc_1x1()).unwrap(),
            build_nl(&nl_one_nest_two_products()).unwrap(),
        ] {
            let vm = &prog.variable_map;
            let mut seen = vec![false; prog.n_vars];
            let mut claim = |i: usize| {
                assert!(i < prog.n_vars, "index {i} out of range");
                assert!(!seen[i], "index {i} claimed twice");
                seen[i] = true;
            };
            vm.d.iter().for_each(|&i| claim(i));
            if let Some(o) = vm.outside {
                claim(o);
            }
            vm.u.iter().flatten().for_each(|&i| claim(i));
            vm.visits.iter().for_each(|&i| claim(i));
            vm.nest_share.iter().for_each(|&i| claim(i));
            vm.nest_attr.iter().flatten().for_each(|&i| claim(i));
            vm.e.iter().for_each(|&i| claim(i));
            vm.f.iter().for_each(|&i| claim(i));
            vm.g.iter().for_each(|&i| claim(i));
            vm.h.iter().for_each(|&i| claim(i));
            assert!(seen.iter().all(|&s| s), "every variable must have a role");
        }
    }

    #[test]
    fn resource_rows_append_without_touching_the_rest() {
        let prog = build_mnl(&mnl_2x1()).unwrap();
        let none = with_resources(
            &prog,
            &ResourceConstraints {
                gamma: vec![],
                gamma_rhs: vec![],
            },
        )
        .unwrap();
        assert_eq!(none, prog);

        let one = with_resources(
            &prog,
            &ResourceConstraints {
                gamma: vec![vec![1.0, 1.0]],
                gamma_rhs: vec![0.5],
            },
        )
        .unwrap();
        assert_eq!(one.inequalities.len(), prog.inequalities.len() + 1);
        assert_eq!(one.cones, prog.cones);
        assert_eq!(one.objective, prog.objective);
        let (row, rhs) = one.inequalities.last().unwrap();
        assert_eq!(row.as_slice(), &[(0, -1.0), (1, -1.0)]);
        assert_abs_diff_eq!(*rhs, -0.5);
    }

    #[test]
    fn resource_rows_reject_wrong_width() {
        let prog = build_mnl(&mnl_2x1()).unwrap();
        assert!(with_resources(
            &prog,
            &ResourceConstraints {
                gamma: vec![vec![1.0]],
                gamma_rhs: vec![0.5],
            },
        )
        .is_err());
    }

    fn random_box_point<R: Rng>(
        rng: &mut R,
        lower: &[Vec<f64>],
        upper: &[Vec<f64>],
    ) -> Vec<Vec<f64>> {
        lower
            .iter()
            .zip(upper)
            .map(|(lo, hi)| {
                lo.iter()
                    .zip(hi)
                    .map(|(&l, &u)| l + (u - l) * rng.random::<f64>())
                    .collect()
            })
            .collect()
    }

    #[test]
    fn mnl_mapped_points_are_feasible_with_matching_objective() {
        let inst = mnl_2x1();
        let prog = build_mnl(&inst).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let x = random_box_point(&mut rng, &inst.x_lower, &inst.x_upper);
            let w = mnl_mapped_point(&inst, &x);
            assert!(prog.equality_residual(&w) <= 1e-9);
            assert!(prog.inequality_violation(&w) <= 1e-9);
            assert!(prog.worst_cone_margin(&w) >= -1e-9);
            assert_abs_diff_eq!(
                prog.objective_value(&w),
                inst.expected_profit(&x),
                epsilon = 1e-10
            );
        }
    }

    #[test]
    fn mc_mapped_points_are_feasible_with_matching_objective() {
        let inst = McInstance::new(
            vec![vec![0.8, 1.2], vec![1.5, 0.6]],
            vec![0.3, 0.1],
            vec![vec![0.0, 0.2], vec![0.1, 0.0]],
            vec![vec![2.0, 1.5], vec![1.0, 2.5]],
            vec![0.6, 0.4],
            vec![vec![0.0, 0.5], vec![0.3, 0.0]],
        )
        .unwrap();
        let prog = build_mc(&inst).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..100 {
            let x = random_box_point(&mut rng, &inst.x_lower, &inst.x_upper);
            let w = mc_mapped_point(&inst, &x).unwrap();
            assert!(prog.equality_residual(&w) <= 1e-9);
            assert!(prog.inequality_violation(&w) <= 1e-9);
            assert!(prog.worst_cone_margin(&w) >= -1e-9);
            assert_abs_diff_eq!(
                prog.objective_value(&w),
                inst.expected_profit(&x).unwrap(),
                epsilon = 1e-10
            );
        }
    }

    #[test]
    fn nl_mapped_points_are_feasible_with_matching_objective() {
        let inst = NlInstance::new(
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
        .unwrap();
        let prog = build_nl(&inst).unwrap();
        let (lower, upper) = inst.flat_box();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..100 {
            let x = random_box_point(&mut rng, &lower, &upper);
            let w = nl_mapped_point(&inst, &x);
            assert!(prog.equality_residual(&w) <= 1e-9);
            assert!(prog.inequality_violation(&w) <= 1e-9);
            assert!(prog.worst_cone_margin(&w) >= -1e-9);
            assert_abs_diff_eq!(
                prog.objective_value(&w),
                inst.expected_profit(&x),
                epsilon = 1e-10
            );
        }
    }

    #[test]
    fn lowered_program_matches_the_role_form_on_random_points() {
        let prog = build_nl(&nl_one_nest_two_products()).unwrap();
        let conic = prog.to_conic().unwrap();
        assert_eq!(conic.cone.lin, prog.inequalities.len());
        assert_eq!(conic.cone.exp, prog.cones.len());
        assert!(conic.maximize);
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        for _ in 0..20 {
            let w: Vec<f64> = (0..prog.n_vars)
                .map(|_| rng.random::<f64>() - 0.3)
                .collect();
            // Equalities agree.
            let wv = DVector::from_column_slice(&w);
            let eq = &conic.a * &wv - &conic.b;
            let role_eq: Vec<f64> = prog
                .equalities
                .iter()
                .map(|(row, b)| eval_row(row, &w) - b)
                .collect();
            for (a, b) in eq.iter().zip(&role_eq) {
                assert_abs_diff_eq!(*a, *b, epsilon = 1e-12);
            }
            // Slack rows reproduce inequality values and cone expressions.
            let s = &conic.h - &conic.g * &wv;
            for (r, (row, b)) in prog.inequalities.iter().enumerate() {
                assert_abs_diff_eq!(s[r], b - eval_row(row, &w), epsilon = 1e-12);
            }
            for (t, triple) in prog.cones.iter().enumerate() {
                for c in 0..3 {
                    assert_abs_diff_eq!(
                        s[prog.inequalities.len() + 3 * t + c],
                        triple[c].eval(&w),
                        epsilon = 1e-12
                    );
                }
            }
            // Objective agrees.
            assert_abs_diff_eq!(
                conic.objective(&w),
                prog.objective_value(&w),
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn singleton_gamma_one_nests_solve_like_the_multinomial_build() {
        let phi = [1.0, 0.7];
        let psi = [0.2, 0.1];
        let lower = [0.0, 0.5];
        let upper = [3.0, 2.0];
        let mnl = MnlInstance::new(
            vec![vec![phi[0]], vec![phi[1]]],
            psi.to_vec(),
            vec![vec![lower[0]], vec![lower[1]]],
            vec![vec![upper[0]], vec![upper[1]]],
        )
        .unwrap();
        let nl = NlInstance::new(
            (0..2)
                .map(|j| Nest {
                    gamma: 1.0,
                    psi: vec![psi[j]],
                    x_lower: vec![vec![lower[j]]],
                    x_upper: vec![vec![upper[j]]],
                })
                .collect(),
            vec![vec![phi[0]], vec![phi[1]]],
        )
        .unwrap();
        let cfg = crate::conic::SolverConfig::default();
        let sol_mnl = crate::conic::solve(&build_mnl(&mnl).unwrap().to_conic().unwrap(), &cfg);
        let sol_nl = crate::conic::solve(&build_nl(&nl).unwrap().to_conic().unwrap(), &cfg);
        assert_eq!(sol_mnl.status, crate::conic::SolveStatus::Optimal);
        assert_eq!(sol_nl.status, crate::conic::SolveStatus::Optimal);
        assert_abs_diff_eq!(
            sol_mnl.primal_objective,
            sol_nl.primal_objective,
            epsilon = 1e-6
        );
    }
}
