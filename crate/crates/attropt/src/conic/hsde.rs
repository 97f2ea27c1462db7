//! Homogeneous self-dual interior-point solver.
//!
//! The program `min cᵀx, Ax = b, Gx + s = h, s ∈ K` is embedded in the
//! homogeneous model over `(x, y, z, s, τ, κ)`:
//!
//! ```text
//! Aᵀy + Gᵀz + c·τ = 0        −Ax + b·τ = 0
//! −Gx + h·τ − s  = 0        −cᵀx − bᵀy − hᵀz − κ = 0
//! s ∈ K, z ∈ K*, τ ≥ 0, κ ≥ 0
//! ```
//!
//! Any strictly complementary solution either has `τ > 0` (divide through
//! by `τ` for an optimal primal-dual pair) or `κ > 0` (the iterate is a
//! certificate of primal or dual infeasibility). Iterates follow the
//! central path `z = −μ·∇f(s), τκ = μ` with a predictor (σ = 0) that
//! shrinks residuals and complementarity together, then centering
//! correctors (σ = 1) that restore proximity to the path. Search
//! directions come from one dense Newton system per step with the slack
//! and κ rows eliminated; all linear algebra is deterministic, so repeated
//! solves produce bit-identical iterates.

use super::barrier;
use super::{
    Certificate, ConeSpec, ConicProgram, PrimalDualSolution, ResidualReport, SolveStatus,
    SolverConfig,
};
use nalgebra::{DMatrix, DVector};

/// Proximity radius accepted after correction (close neighborhood).
const PROX_NARROW: f64 = 0.3;
/// Proximity radius tolerated right after a predictor step.
const PROX_WIDE: f64 = 0.8;
/// Smallest usable line-search step.
const MIN_STEP: f64 = 1e-13;
/// Correction steps attempted per outer iteration.
const MAX_CORRECTORS: usize = 8;

struct State {
    x: DVector<f64>,
    y: DVector<f64>,
    z: DVector<f64>,
    s: DVector<f64>,
    tau: f64,
    kappa: f64,
}

struct Direction {
    dx: DVector<f64>,
    dy: DVector<f64>,
    dz: DVector<f64>,
    ds: DVector<f64>,
    dtau: f64,
    dkappa: f64,
}

/// Solve `prog` to the tolerances in `cfg`.
pub fn solve(prog: &ConicProgram, cfg: &SolverConfig) -> PrimalDualSolution {
    let n = prog.var_count();
    let p = prog.a.nrows();
    let m = prog.g.nrows();
    let cone = prog.cone;
    let nu = cone.barrier_nu() as f64;
    let c_int = if prog.maximize {
        -prog.c.clone()
    } else {
        prog.c.clone()
    };

    let mut st = State {
        x: DVector::zeros(n),
        y: DVector::zeros(p),
        z: DVector::zeros(m),
        s: DVector::zeros(m),
        tau: 1.0,
        kappa: 1.0,
    };
    for i in 0..cone.lin {
        st.s[i] = 1.0;
        st.z[i] = 1.0;
    }
    for t in 0..cone.exp {
        for r in 0..3 {
            st.s[cone.lin + 3 * t + r] = barrier::EXP_INIT[r];
            st.z[cone.lin + 3 * t + r] = barrier::EXP_INIT[r];
        }
    }

    let mut status = SolveStatus::MaxIterations;
    let mut certificate = None;
    let mut iterations = cfg.max_iter;
    let mut stalled = 0usize;

    for iter in 0..cfg.max_iter {
        match assess(prog, &c_int, &st, cfg) {
            Assessment::Optimal => {
                status = SolveStatus::Optimal;
                iterations = iter;
                break;
            }
            Assessment::Infeasible(cert) | Assessment::Unbounded(cert) => {
                status = if matches!(cert, Certificate::PrimalInfeasible { .. }) {
                    SolveStatus::Infeasible
                } else {
                    SolveStatus::Unbounded
                };
                certificate = Some(cert);
                iterations = iter;
                break;
            }
            Assessment::Continue => {}
        }

        let mu = (st.s.dot(&st.z) + st.tau * st.kappa) / (nu + 1.0);
        if !mu.is_finite() || mu <= 0.0 {
            status = SolveStatus::NumericalFailure;
            iterations = iter;
            break;
        }

        // Predictor: drive residuals and complementarity toward zero.
        let mut sigma = 0.0;
        if cfg.adaptive_centering {
            // Mehrotra-style heuristic: probe how far the pure affine
            // direction can go and center by (1 − α)³.
            if let Some(dir) = newton(prog, &c_int, &st, cone, mu, 0.0) {
                let alpha = boundary_step(cone, &st, &dir);
                sigma = (1.0 - alpha).powi(3).clamp(1e-4, 0.9);
            }
        }
        let step_taken = match newton(prog, &c_int, &st, cone, mu, sigma) {
            Some(dir) => line_search(cone, &mut st, &dir, nu, PROX_WIDE, None),
            None => {
                status = SolveStatus::NumericalFailure;
                iterations = iter;
                break;
            }
        };
        if std::env::var_os("ATTROPT_TRACE").is_some() {
            eprintln!(
                "iter {iter}: mu={mu:.3e} tau={:.3e} kappa={:.3e} step={} prox={:.3e}",
                st.tau,
                st.kappa,
                step_taken,
                proximity(cone, &st.s, &st.z, st.tau, st.kappa, nu)
            );
        }
        if !step_taken {
            stalled += 1;
            if stalled >= 3 {
                status = SolveStatus::NumericalFailure;
                iterations = iter;
                break;
            }
        } else {
            stalled = 0;
        }

        // Correctors: pull the iterate back into the narrow neighborhood.
        for _ in 0..MAX_CORRECTORS {
            let mu_c = (st.s.dot(&st.z) + st.tau * st.kappa) / (nu + 1.0);
            if !mu_c.is_finite() || mu_c <= 0.0 {
                break;
            }
            let current = proximity(cone, &st.s, &st.z, st.tau, st.kappa, nu);
            if current <= PROX_NARROW {
                break;
            }
            let Some(dir) = newton(prog, &c_int, &st, cone, mu_c, cfg.centering) else {
                break;
            };
            if !line_search(cone, &mut st, &dir, nu, PROX_NARROW, Some(current)) {
                break;
            }
        }
    }

    package(prog, &c_int, &st, status, certificate, iterations)
}

enum Assessment {
    Optimal,
    Infeasible(Certificate),
    Unbounded(Certificate),
    Continue,
}

/// Check the unscaled candidate `x/τ …` against the optimality
/// tolerances, and the raw iterate against the two certificate tests.
fn assess(prog: &ConicProgram, c_int: &DVector<f64>, st: &State, cfg: &SolverConfig) -> Assessment {
    let tau = st.tau;
    let xt = &st.x / tau;
    let yt = &st.y / tau;
    let zt = &st.z / tau;
    let s_t = &st.s / tau;

    let pres_eq = scaled_inf_norm(&(&prog.a * &xt - &prog.b), &prog.b);
    let pres_in = scaled_inf_norm(&(&prog.g * &xt + &s_t - &prog.h), &prog.h);
    let dres = scaled_inf_norm(
        &(prog.a.transpose() * &yt + prog.g.transpose() * &zt + c_int),
        c_int,
    );
    let pobj = c_int.dot(&xt);
    let dobj = -prog.b.dot(&yt) - prog.h.dot(&zt);
    let gap_rel = (pobj - dobj).abs() / (1.0 + pobj.abs());

    if pres_eq <= cfg.tol_feas
        && pres_in <= cfg.tol_feas
        && dres <= cfg.tol_feas
        && gap_rel <= cfg.tol_gap
    {
        return Assessment::Optimal;
    }

    // Infeasibility certificate: multipliers with negative dual gap value.
    let e = -(prog.b.dot(&st.y) + prog.h.dot(&st.z));
    let scale = 1.0 + st.y.amax_or_zero() + st.z.amax_or_zero();
    if e > f64::EPSILON * scale {
        let yh = &st.y / e;
        let zh = &st.z / e;
        let res = (prog.a.transpose() * &yh + prog.g.transpose() * &zh).amax_or_zero();
        if res <= cfg.tol_feas && prog.cone.contains_dual(zh.as_slice(), cfg.tol_feas) {
            return Assessment::Infeasible(Certificate::PrimalInfeasible {
                y: yh.iter().copied().collect(),
                z: zh.iter().copied().collect(),
                residual: res,
            });
        }
    }

    // Unboundedness certificate: an improving ray.
    let e2 = -c_int.dot(&st.x);
    if e2 > f64::EPSILON * (1.0 + st.x.amax_or_zero()) {
        let xh = &st.x / e2;
        let sh = &st.s / e2;
        let res = (&prog.a * &xh)
            .amax_or_zero()
            .max((&prog.g * &xh + &sh).amax_or_zero());
        if res <= cfg.tol_feas {
            return Assessment::Unbounded(Certificate::Unbounded {
                x: xh.iter().copied().collect(),
                s: sh.iter().copied().collect(),
                residual: res,
            });
        }
    }

    Assessment::Continue
}

/// Newton direction for centering parameter `sigma` at barrier weight `mu`.
fn newton(
    prog: &ConicProgram,
    c_int: &DVector<f64>,
    st: &State,
    cone: ConeSpec,
    mu: f64,
    sigma: f64,
) -> Option<Direction> {
    let n = prog.var_count();
    let p = prog.a.nrows();
    let m = prog.g.nrows();
    let big = n + p + m + 1;

    let hmat = hess_blocks(cone, &st.s)?;
    let g_s = barrier_grad(cone, &st.s);

    let rx = prog.a.transpose() * &st.y + prog.g.transpose() * &st.z + c_int * st.tau;
    let ry = -(&prog.a * &st.x) + &prog.b * st.tau;
    let rz = -(&prog.g * &st.x) + &prog.h * st.tau - &st.s;
    let rt = -c_int.dot(&st.x) - prog.b.dot(&st.y) - prog.h.dot(&st.z) - st.kappa;
    let rc = -(&st.z + sigma * mu * &g_s);

    // The slack row `−G·dx + (1/μ)H⁻¹·dz + h·dτ = …` is scaled through by
    // μH so the system never needs H⁻¹; ds is then recovered from the
    // original linear row, which involves no barrier quantities at all.
    let mut k = DMatrix::<f64>::zeros(big, big);
    k.view_mut((0, n), (n, p)).copy_from(&prog.a.transpose());
    k.view_mut((0, n + p), (n, m))
        .copy_from(&prog.g.transpose());
    k.view_mut((0, big - 1), (n, 1)).copy_from(c_int);
    k.view_mut((n, 0), (p, n)).copy_from(&(-&prog.a));
    k.view_mut((n, big - 1), (p, 1)).copy_from(&prog.b);
    k.view_mut((n + p, 0), (m, n))
        .copy_from(&(-mu * &hmat * &prog.g));
    for i in 0..m {
        k[(n + p + i, n + p + i)] = 1.0;
    }
    k.view_mut((n + p, big - 1), (m, 1))
        .copy_from(&(mu * &hmat * &prog.h));
    k.view_mut((big - 1, 0), (1, n))
        .copy_from(&(-c_int.transpose()));
    k.view_mut((big - 1, n), (1, p))
        .copy_from(&(-prog.b.transpose()));
    k.view_mut((big - 1, n + p), (1, m))
        .copy_from(&(-prog.h.transpose()));
    k[(big - 1, big - 1)] = st.kappa / st.tau;

    let one_minus_sigma = 1.0 - sigma;
    let mut rhs = DVector::<f64>::zeros(big);
    rhs.rows_mut(0, n).copy_from(&(-one_minus_sigma * &rx));
    rhs.rows_mut(n, p).copy_from(&(-one_minus_sigma * &ry));
    rhs.rows_mut(n + p, m)
        .copy_from(&(-one_minus_sigma * mu * (&hmat * &rz) + &rc));
    rhs[big - 1] = -one_minus_sigma * rt - st.kappa + sigma * mu / st.tau;

    let d = solve_equilibrated(&k, &rhs)?;
    if d.iter().any(|v| !v.is_finite()) {
        return None;
    }

    let dx = d.rows(0, n).into_owned();
    let dy = d.rows(n, p).into_owned();
    let dz = d.rows(n + p, m).into_owned();
    let dtau = d[big - 1];
    let ds = -(&prog.g * &dx) + &prog.h * dtau + one_minus_sigma * &rz;
    let dkappa = -st.kappa + sigma * mu / st.tau - st.kappa / st.tau * dtau;
    if !dtau.is_finite() || !dkappa.is_finite() || ds.iter().any(|v| !v.is_finite()) {
        return None;
    }
    Some(Direction {
        dx,
        dy,
        dz,
        ds,
        dtau,
        dkappa,
    })
}

/// Solve `K·d = rhs` with power-of-two row/column equilibration (exact in
/// floating point, so it costs no extra rounding), full-pivot LU, and
/// iterative refinement. The late-iteration KKT matrix mixes O(1) blocks
/// with `H⁻¹/μ` entries spanning ~12 orders of magnitude; without
/// equilibration the factorization loses the direction entirely.
fn solve_equilibrated(k: &DMatrix<f64>, rhs: &DVector<f64>) -> Option<DVector<f64>> {
    let n = k.nrows();
    let pow2 = |v: f64| -> f64 {
        if v <= 0.0 || !v.is_finite() {
            1.0
        } else {
            // Nearest power of two below 1/v, clamped to a sane exponent.
            let e = (-v.log2()).round().clamp(-500.0, 500.0) as i32;
            (2.0f64).powi(e)
        }
    };
    let mut row_scale = DVector::<f64>::from_element(n, 1.0);
    for i in 0..n {
        let m = (0..n).map(|j| k[(i, j)].abs()).fold(0.0f64, f64::max);
        row_scale[i] = pow2(m);
    }
    let mut ks = k.clone();
    for i in 0..n {
        for j in 0..n {
            ks[(i, j)] *= row_scale[i];
        }
    }
    let mut col_scale = DVector::<f64>::from_element(n, 1.0);
    for j in 0..n {
        let m = (0..n).map(|i| ks[(i, j)].abs()).fold(0.0f64, f64::max);
        col_scale[j] = pow2(m);
    }
    for i in 0..n {
        for j in 0..n {
            ks[(i, j)] *= col_scale[j];
        }
    }
    let rhs_s = rhs.component_mul(&row_scale);
    let lu = ks.clone().full_piv_lu();
    let mut u = lu.solve(&rhs_s)?;
    for _ in 0..2 {
        let resid = &rhs_s - &ks * &u;
        let Some(correction) = lu.solve(&resid) else {
            break;
        };
        u += correction;
    }
    Some(u.component_mul(&col_scale))
}

/// Largest step keeping all strictly-positive scalars and cone blocks
/// strictly feasible, found by backtracking from the linear-part bound.
fn boundary_step(cone: ConeSpec, st: &State, dir: &Direction) -> f64 {
    let mut alpha = 1.0f64;
    alpha = alpha.min(0.99 * positive_ratio(st.tau, dir.dtau));
    alpha = alpha.min(0.99 * positive_ratio(st.kappa, dir.dkappa));
    for i in 0..cone.lin {
        alpha = alpha.min(0.99 * positive_ratio(st.s[i], dir.ds[i]));
        alpha = alpha.min(0.99 * positive_ratio(st.z[i], dir.dz[i]));
    }
    for _ in 0..200 {
        if alpha < MIN_STEP {
            return 0.0;
        }
        let s_new = &st.s + alpha * &dir.ds;
        let z_new = &st.z + alpha * &dir.dz;
        if cone.strictly_inside(s_new.as_slice()) && cone.strictly_inside_dual(z_new.as_slice()) {
            return alpha;
        }
        alpha *= 0.8;
    }
    0.0
}

/// Backtracking line search: accept the longest step whose endpoint is
/// strictly inside both cones and whose proximity either falls below
/// `prox_limit` or (when `must_beat` is given) strictly improves on it.
/// On success the state is advanced and `true` returned.
fn line_search(
    cone: ConeSpec,
    st: &mut State,
    dir: &Direction,
    nu: f64,
    prox_limit: f64,
    must_beat: Option<f64>,
) -> bool {
    let mut alpha = 1.0f64;
    alpha = alpha.min(0.99 * positive_ratio(st.tau, dir.dtau));
    alpha = alpha.min(0.99 * positive_ratio(st.kappa, dir.dkappa));
    for i in 0..cone.lin {
        alpha = alpha.min(0.99 * positive_ratio(st.s[i], dir.ds[i]));
        alpha = alpha.min(0.99 * positive_ratio(st.z[i], dir.dz[i]));
    }
    for _ in 0..200 {
        if alpha < MIN_STEP {
            return false;
        }
        let tau = st.tau + alpha * dir.dtau;
        let kappa = st.kappa + alpha * dir.dkappa;
        if tau > 0.0 && kappa > 0.0 {
            let s_new = &st.s + alpha * &dir.ds;
            let z_new = &st.z + alpha * &dir.dz;
            if cone.strictly_inside(s_new.as_slice()) && cone.strictly_inside_dual(z_new.as_slice())
            {
                let prox = proximity(cone, &s_new, &z_new, tau, kappa, nu);
                let ok = prox <= prox_limit || must_beat.is_some_and(|cur| prox < cur);
                if ok {
                    st.x += alpha * &dir.dx;
                    st.y += alpha * &dir.dy;
                    st.z = z_new;
                    st.s = s_new;
                    st.tau = tau;
                    st.kappa = kappa;
                    return true;
                }
            }
        }
        alpha *= 0.8;
    }
    false
}

/// Central-path proximity `‖z + μ∇f(s)‖_{H(s)⁻¹} ⊕ |τκ − μ|, scaled by μ`.
/// Values below 1 certify the pair is compatible with the cone interior.
fn proximity(
    cone: ConeSpec,
    s: &DVector<f64>,
    z: &DVector<f64>,
    tau: f64,
    kappa: f64,
    nu: f64,
) -> f64 {
    let mu = (s.dot(z) + tau * kappa) / (nu + 1.0);
    if !(mu > 0.0) {
        return f64::INFINITY;
    }
    let mut total = 0.0f64;
    for i in 0..cone.lin {
        let r = s[i] * z[i] - mu;
        total += r * r;
    }
    for t in 0..cone.exp {
        let at = cone.lin + 3 * t;
        let sb = [s[at], s[at + 1], s[at + 2]];
        let g = barrier::exp_grad(&sb);
        let psi = nalgebra::Vector3::new(
            z[at] + mu * g[0],
            z[at + 1] + mu * g[1],
            z[at + 2] + mu * g[2],
        );
        // ψᵀH⁻¹ψ via a 3×3 Cholesky solve (H is SPD inside the cone).
        let Some(chol) = barrier::exp_hess(&sb).cholesky() else {
            return f64::INFINITY;
        };
        total += chol.solve(&psi).dot(&psi);
    }
    let rt = tau * kappa - mu;
    total += rt * rt;
    total.sqrt() / mu
}

/// Block-diagonal barrier Hessian at `s` (LP rows: `1/s_i²`).
fn hess_blocks(cone: ConeSpec, s: &DVector<f64>) -> Option<DMatrix<f64>> {
    let m = cone.total_rows();
    let mut h = DMatrix::<f64>::zeros(m, m);
    for i in 0..cone.lin {
        h[(i, i)] = 1.0 / (s[i] * s[i]);
    }
    for t in 0..cone.exp {
        let at = cone.lin + 3 * t;
        let sb = [s[at], s[at + 1], s[at + 2]];
        let block = barrier::exp_hess(&sb);
        if block.iter().any(|v| !v.is_finite()) {
            return None;
        }
        for r in 0..3 {
            for c in 0..3 {
                h[(at + r, at + c)] = block[(r, c)];
            }
        }
    }
    Some(h)
}

/// Stacked barrier gradient at `s` (LP rows: `−1/s_i`).
fn barrier_grad(cone: ConeSpec, s: &DVector<f64>) -> DVector<f64> {
    let m = cone.total_rows();
    let mut g = DVector::<f64>::zeros(m);
    for i in 0..cone.lin {
        g[i] = -1.0 / s[i];
    }
    for t in 0..cone.exp {
        let at = cone.lin + 3 * t;
        let gb = barrier::exp_grad(&[s[at], s[at + 1], s[at + 2]]);
        g[at] = gb[0];
        g[at + 1] = gb[1];
        g[at + 2] = gb[2];
    }
    g
}

/// `min over d_i < 0 of −v_i/d_i` (∞ when the direction never decreases).
fn positive_ratio(v: f64, d: f64) -> f64 {
    if d < 0.0 {
        -v / d
    } else {
        f64::INFINITY
    }
}

fn scaled_inf_norm(residual: &DVector<f64>, data: &DVector<f64>) -> f64 {
    residual
        .iter()
        .zip(data.iter())
        .map(|(&r, &d)| r.abs() / (1.0 + d.abs()))
        .fold(0.0f64, f64::max)
}

trait AmaxOrZero {
    fn amax_or_zero(&self) -> f64;
}

impl AmaxOrZero for DVector<f64> {
    fn amax_or_zero(&self) -> f64 {
        self.iter().fold(0.0f64, |a, &b| a.max(b.abs()))
    }
}

/// Assemble the reported solution from the final iterate.
fn package(
    prog: &ConicProgram,
    c_int: &DVector<f64>,
    st: &State,
    status: SolveStatus,
    certificate: Option<Certificate>,
    iterations: usize,
) -> PrimalDualSolution {
    let tau = if st.tau > 0.0 { st.tau } else { 1.0 };
    let xt = &st.x / tau;
    let yt = &st.y / tau;
    let zt = &st.z / tau;
    let s_t = &st.s / tau;

    let pres_eq = scaled_inf_norm(&(&prog.a * &xt - &prog.b), &prog.b);
    let pres_in = scaled_inf_norm(&(&prog.g * &xt + &s_t - &prog.h), &prog.h);
    let dres = scaled_inf_norm(
        &(prog.a.transpose() * &yt + prog.g.transpose() * &zt + c_int),
        c_int,
    );
    let pobj_int = c_int.dot(&xt);
    let dobj_int = -prog.b.dot(&yt) - prog.h.dot(&zt);
    let gap_rel = (pobj_int - dobj_int).abs() / (1.0 + pobj_int.abs());
    let worst_cone = prog.cone.primal_margin(s_t.as_slice());

    let (primal_objective, dual_objective) = if prog.maximize {
        (-pobj_int, -dobj_int)
    } else {
        (pobj_int, dobj_int)
    };

    PrimalDualSolution {
        status,
        x: xt.iter().copied().collect(),
        y: yt.iter().copied().collect(),
        z: zt.iter().copied().collect(),
        s: s_t.iter().copied().collect(),
        primal_objective,
        dual_objective,
        iterations,
        residuals: ResidualReport {
            primal_eq: pres_eq,
            primal_ineq: pres_in,
            worst_cone,
            dual: dres,
            gap_rel,
        },
        certificate,
    }
}
