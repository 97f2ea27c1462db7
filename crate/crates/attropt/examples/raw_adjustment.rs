//! From business units to solver units and back.
//!
//! Market data comes as raw attributes y (dollars, service tiers) with
//! baseline attractiveness α and sensitivities β; the optimizer works in
//! adjusted units x = β·y − α/K, which fold the baselines into the
//! utilities so the choice model takes its canonical form. The affine
//! map is invertible, so results travel back to business units exactly.
//!
//! Run with `cargo run --example raw_adjustment`.

use attropt::conic::{self, SolverConfig};
use attropt::model::{ChoiceInstance, RawAttributeModel};
use attropt::recover;
use attropt::reform;

fn main() -> attropt::Result<()> {
    let raw = RawAttributeModel {
        // Product 2 is better known (higher baseline attractiveness).
        alpha: vec![0.4, 1.0],
        // Customers are twice as price-sensitive to product 1.
        beta: vec![vec![2.0], vec![1.0]],
        // A dollar of price carries a dollar of margin.
        margin_raw: vec![vec![1.0], vec![1.0]],
        cost_raw: vec![0.25, 0.4],
        y_lower: vec![vec![0.5], vec![0.5]],
        y_upper: vec![vec![5.0], vec![5.0]],
    };

    let (inst, map) = raw.adjust()?;
    println!("adjusted margins φ = β·margin: {:?}", inst.phi);
    println!(
        "adjusted box for product 1: [{:.2}, {:.2}]",
        inst.x_lower[0][0], inst.x_upper[0][0]
    );
    println!(
        "adjusted box for product 2: [{:.2}, {:.2}]",
        inst.x_lower[1][0], inst.x_upper[1][0]
    );

    let prog = reform::build_mnl(&inst)?;
    let sol = conic::solve(&prog.to_conic()?, &SolverConfig::default());
    let choice = ChoiceInstance::Mnl(inst);
    let rec = recover::recover(&choice, &prog, &sol)?;

    let y = map.raw_from_adjusted(&rec.x);
    println!("\nexpected profit per customer: {:.6}", rec.objective);
    println!("\nproduct   share     x (adjusted)   y (raw price)");
    for j in 0..2 {
        println!(
            "{:>7}   {:.4}      {:.4}         {:.4}",
            j + 1,
            rec.shares.product[j],
            rec.x[j][0],
            y[j][0]
        );
    }
    println!(
        "\nsame sticker price can mean different adjusted attributes:\n\
         sensitivity and baseline attractiveness shift each product's\n\
         effective position in utility space."
    );

    // The map inverts exactly.
    let x_back = map.adjusted_from_raw(&y);
    let worst = rec
        .x
        .iter()
        .flatten()
        .zip(x_back.iter().flatten())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);
    println!("round-trip through raw units, worst error: {worst:.2e}");
    Ok(())
}
