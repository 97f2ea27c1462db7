//! Optimize a product line when demand follows a Markov-chain choice
//! model: customers arrive at a product, and if they don't buy they
//! transition to a substitute with attenuated intensity.
//!
//! The visit balance system `(I − ρ′ᵀ)v = λ` determines how much traffic
//! each product sees, where ρ′ already includes the attenuation caused by
//! purchase probabilities; here the solver works with shares and visit
//! rates jointly. Run with `cargo run --example markov_visits`.

use attropt::conic::{self, SolverConfig};
use attropt::feasibility;
use attropt::model::{ChoiceInstance, McInstance};
use attropt::recover;
use attropt::reform;

fn main() -> attropt::Result<()> {
    // Two products. 70% of customers start at product 1. A customer who
    // passes on product 1 considers product 2 with probability 0.5, and
    // vice versa with probability 0.4.
    let inst = McInstance::new(
        vec![vec![1.0], vec![0.9]],
        vec![0.25, 0.2],
        vec![vec![0.0], vec![0.0]],
        vec![vec![4.0], vec![4.0]],
        vec![0.7, 0.3],
        vec![vec![0.0, 0.5], vec![0.4, 0.0]],
    )?;

    // Before solving anything: is the visit system well posed? The
    // transition matrix must keep total traffic finite.
    let visits = feasibility::require_unique_positive(&inst.lambda, &inst.rho)?;
    println!(
        "nominal visit rates (nobody ever buys): [{:.4}, {:.4}]",
        visits[0], visits[1]
    );

    let prog = reform::build_mc(&inst)?;
    let sol = conic::solve(&prog.to_conic()?, &SolverConfig::default());
    println!(
        "solver: {:?} after {} iterations",
        sol.status, sol.iterations
    );

    let choice = ChoiceInstance::Mc(inst);
    let rec = recover::recover(&choice, &prog, &sol)?;

    println!("\nexpected profit per customer: {:.6}", rec.objective);
    println!("\nproduct   visits    share    buy-rate   x");
    let v = rec.shares.visits.as_ref().unwrap();
    for j in 0..2 {
        println!(
            "{:>7}   {:.4}   {:.4}    {:.4}    {:.3}",
            j + 1,
            v[j],
            rec.shares.product[j],
            rec.shares.product[j] / v[j],
            rec.x[j][0]
        );
    }
    println!(
        "\nnote how optimized attributes throttle conversion: shares stay\n\
         below visit rates, and unconverted traffic spills to the rival."
    );

    let rt = recover::roundtrip_check(&choice, &rec);
    println!(
        "round trip: share residual {:.2e}, objective mismatch {:.2e}",
        rt.share_residual, rt.objective_mismatch
    );
    Ok(())
}
