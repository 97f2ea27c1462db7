//! The second opinion: brute-force lattice search against the solver.
//!
//! The lattice oracle evaluates the raw objective on a refined grid over
//! the attribute box, using none of the reformulation or solver
//! machinery. On small instances, solver and oracle must agree — a
//! disagreement means a bug on one of two completely independent paths.
//!
//! Run with `cargo run --example oracle_check`.

use attropt::conic::SolverConfig;
use attropt::model::{ChoiceInstance, MnlInstance};
use attropt::oracle::{self, Comparison, GridSpec};

fn main() -> attropt::Result<()> {
    let inst = ChoiceInstance::Mnl(MnlInstance::new(
        vec![vec![1.0, 0.5], vec![0.7, 0.9]],
        vec![0.2, 0.3],
        vec![vec![0.0, 0.0], vec![0.0, 0.0]],
        vec![vec![3.0, 2.0], vec![3.0, 2.0]],
    )?);

    let grid = GridSpec {
        points_per_dim: 41,
        refine_rounds: 3,
    };
    match oracle::compare(&inst, None, &SolverConfig::default(), &grid)? {
        Comparison::BothOptimal(report) => {
            println!("solver objective: {:.8}", report.solver_objective);
            println!("oracle objective: {:.8}", report.oracle_objective);
            println!("difference:       {:.2e}", report.objective_difference);
            println!("attribute diff:   {:.2e}", report.x_difference);
            println!(
                "oracle work:      {} evaluations, final resolution {:.2e}",
                report.oracle.evaluations, report.oracle.final_resolution
            );
            println!(
                "agreement within tolerance: {}",
                if report.objective_agrees { "yes" } else { "NO" }
            );
        }
        other => println!("unexpected outcome: {other:?}"),
    }

    // The oracle also honors share requirements, so constrained optima
    // can be cross-checked the same way; and a Lipschitz bound turns the
    // final grid resolution into a rigorous objective gap.
    let bound = oracle::lipschitz_bound(&inst)?;
    println!("\nLipschitz bound on the profit over the box: {bound:.2}");
    Ok(())
}
