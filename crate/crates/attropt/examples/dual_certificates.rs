//! Trust, but verify: duality as an independent audit of the solver.
//!
//! Every claim the primal solver makes can be cross-examined:
//!  * a hand-built strictly interior dual point proves the dual is
//!    feasible, which (by conic duality) proves the primal optimum is
//!    attained;
//!  * any dual-feasible point upper-bounds every primal-feasible value
//!    (weak duality);
//!  * the solver's own multipliers, mapped into the explicit dual
//!    program, must land dual-feasible with matching objective
//!    (strong duality);
//!  * and when share requirements are unsatisfiable, the solver returns
//!    a certificate ray instead of an answer.
//!
//! Run with `cargo run --example dual_certificates`.

use attropt::conic::{self, Certificate, SolveStatus, SolverConfig};
use attropt::dualcert;
use attropt::model::McInstance;
use attropt::reform::{self, ResourceConstraints};

fn main() -> attropt::Result<()> {
    let inst = McInstance::new(
        vec![vec![1.0], vec![0.9]],
        vec![0.25, 0.2],
        vec![vec![0.0], vec![0.0]],
        vec![vec![4.0], vec![4.0]],
        vec![0.7, 0.3],
        vec![vec![0.0, 0.5], vec![0.4, 0.0]],
    )?;

    // 1. Existence: a strictly interior dual point, built in closed form
    //    from the instance data alone — no solving involved.
    let dual = dualcert::dualize_mc(&inst, None);
    let strict = dualcert::strict_dual_point_mc(&inst, None)?;
    println!(
        "strict dual point: interior margin {:.4e} (> 0 proves attainment)",
        strict.interior_margin
    );

    // 2. Weak duality: its value dominates any feasible profit.
    let dual_value = dual.objective_value(&strict.values);
    for x in [
        vec![vec![0.5], vec![0.5]],
        vec![vec![2.0], vec![1.5]],
        vec![vec![4.0], vec![4.0]],
    ] {
        let profit = inst.expected_profit(&x)?;
        println!(
            "  profit at x = {:?}: {profit:.4}  ≤  dual bound {dual_value:.4}",
            x.iter().flatten().collect::<Vec<_>>()
        );
    }

    // 3. Strong duality: solve, then map the solver's multipliers into
    //    the same dual program and compare objectives.
    let prog = reform::build_mc(&inst)?;
    let sol = conic::solve(&prog.to_conic()?, &SolverConfig::default());
    assert_eq!(sol.status, SolveStatus::Optimal);
    let mapped = dualcert::solver_dual_point_mc(&inst, None, &sol);
    println!(
        "\noptimal profit {:.6}; solver duals in the explicit dual program:",
        sol.primal_objective
    );
    println!(
        "  worst row residual {:.2e}, objective {:.6} (gap {:.2e})",
        dual.max_row_residual(&mapped.values),
        dual.objective_value(&mapped.values),
        dual.objective_value(&mapped.values) - sol.primal_objective
    );

    // 4. Infeasibility: demand 90% market share for product 1 when its
    //    box caps the share far lower - the solver must refuse with a
    //    certificate, not return a "best effort" answer.
    let rc = ResourceConstraints {
        gamma: vec![vec![1.0, 0.0]],
        gamma_rhs: vec![0.9],
    };
    let constrained = reform::with_resources(&prog, &rc)?;
    let bad = conic::solve(&constrained.to_conic()?, &SolverConfig::default());
    match (&bad.status, &bad.certificate) {
        (SolveStatus::Infeasible, Some(Certificate::PrimalInfeasible { residual, .. })) => {
            println!("\nimpossible share floor: Infeasible, certificate residual {residual:.2e}");
        }
        other => println!("\nunexpected outcome: {other:?}"),
    }
    Ok(())
}
