//! From per-product margins to shared-margin form, automatically.
//!
//! The nested-logit program requires every product in a nest to carry
//! the same margin per attribute. Real product lines rarely look like
//! that — each product has its own quality lever with its own margin.
//! The splitter makes such models admissible: each private attribute
//! becomes its own column (other products pinned to a [0,0] box there),
//! and one designated shared attribute — typically price, with a
//! tier-wide margin and no bounds — absorbs the remaining freedom. The
//! split instance is provably equivalent to the original.
//!
//! Run with `cargo run --example attribute_splitting`.

use attropt::conic::{self, SolverConfig};
use attropt::feasibility::{self, PerProductNest, PerProductNlModel};
use attropt::model::ChoiceInstance;
use attropt::recover;
use attropt::reform;

fn main() -> attropt::Result<()> {
    let model = PerProductNlModel {
        nests: vec![
            PerProductNest {
                gamma: 0.7,
                // Attribute 0 = quality (margins differ by product),
                // attribute 1 = price (tier-wide margin 1.0).
                phi: vec![vec![0.3, 1.0], vec![0.5, 1.0]],
                psi: vec![0.2, 0.25],
                x_lower: vec![
                    vec![0.0, -feasibility::UNBOUNDED_BOX],
                    vec![0.0, -feasibility::UNBOUNDED_BOX],
                ],
                x_upper: vec![
                    vec![1.5, feasibility::UNBOUNDED_BOX],
                    vec![1.5, feasibility::UNBOUNDED_BOX],
                ],
            },
            PerProductNest {
                gamma: 0.9,
                phi: vec![vec![0.8, 1.3]],
                psi: vec![0.5],
                x_lower: vec![vec![0.2, -feasibility::UNBOUNDED_BOX]],
                x_upper: vec![vec![2.0, feasibility::UNBOUNDED_BOX]],
            },
        ],
        shared_attr: 1,
    };

    let inst = feasibility::split_attributes(&model)?;
    println!(
        "split: {} per-product attributes became {} shared-margin columns",
        2,
        inst.attr_count()
    );
    for (i, margins) in inst.rho_shared.iter().enumerate() {
        println!("  nest {} margins after split: {margins:?}", i + 1);
    }

    let prog = reform::build_nl(&inst)?;
    let sol = conic::solve(&prog.to_conic()?, &SolverConfig::default());
    println!(
        "solver: {:?} after {} iterations",
        sol.status, sol.iterations
    );
    let choice = ChoiceInstance::Nl(inst.clone());
    let rec = recover::recover(&choice, &prog, &sol)?;

    // Read the answer back in the coordinates the model was stated in.
    let x_user = feasibility::unsplit_point(&model, &inst, &rec.x);
    println!("\nexpected profit per customer: {:.6}", rec.objective);
    println!("\nproduct   share    quality   price");
    for (flat, row) in x_user.iter().enumerate() {
        println!(
            "{:>7}   {:.4}    {:.3}    {:.3}",
            flat + 1,
            rec.shares.product[flat],
            row[0],
            row[1]
        );
    }

    // Equivalence in action: evaluating the split instance at the split
    // image of the user-coordinate answer reproduces the objective.
    let profit = inst.expected_profit(&feasibility::split_point(&model, &inst, &x_user));
    println!("\nprofit re-evaluated from user coordinates: {profit:.6}");
    Ok(())
}
