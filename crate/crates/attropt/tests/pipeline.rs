//! End-to-end library scenarios: each test walks one realistic workflow
//! through the public API the way an application would, crossing module
//! boundaries (modeling → reformulation → solver → recovery → duals).

use attropt::conic::{self, SolveStatus, SolverConfig};
use attropt::dualcert;
use attropt::feasibility::{self, PerProductNest, PerProductNlModel};
use attropt::model::{ChoiceInstance, McInstance, RawAttributeModel};
use attropt::recover;
use attropt::reform::{self, ResourceConstraints};

/// A three-product line under a Markov-chain demand model with
/// substitution spillovers, plus a floor on the flagship's market share.
/// The optimum is recovered, round-tripped through the model evaluator,
/// and cross-checked against the dual program built from the same data —
/// two independent routes that must meet at the same value.
#[test]
fn markov_chain_line_with_share_floor() {
    // Flagship, mid-range, and entry products; one controllable
    // attribute each (say, a price-like lever in adjusted units).
    // Customers who pass on the flagship mostly look at the mid-range;
    // entry-product shoppers rarely trade up.
    let inst = McInstance::new(
        vec![vec![1.2], vec![1.0], vec![0.8]], // margins
        vec![0.3, 0.2, 0.1],                   // unit costs
        vec![vec![0.0], vec![0.0], vec![0.0]], // lower bounds
        vec![vec![3.0], vec![3.0], vec![3.0]], // upper bounds
        vec![0.5, 0.3, 0.2],                   // first visits
        vec![
            vec![0.0, 0.6, 0.1],
            vec![0.3, 0.0, 0.3],
            vec![0.1, 0.2, 0.0],
        ],
    )
    .unwrap();
    // Keep the flagship visible: at least 8% of customers must buy it.
    let rc = ResourceConstraints {
        gamma: vec![vec![1.0, 0.0, 0.0]],
        gamma_rhs: vec![0.08],
    };

    let base = reform::build_mc(&inst).unwrap();
    let prog = reform::with_resources(&base, &rc).unwrap();
    let sol = conic::solve(&prog.to_conic().unwrap(), &SolverConfig::default());
    assert_eq!(sol.status, SolveStatus::Optimal);

    let choice = ChoiceInstance::Mc(inst.clone());
    let rec = recover::recover(&choice, &prog, &sol).unwrap();

    // The requirement binds or holds with slack, but is never violated.
    assert!(rec.shares.product[0] >= 0.08 - 1e-7);

    // Re-evaluating the recovered attributes reproduces the program's
    // shares and objective.
    let rt = recover::roundtrip_check(&choice, &rec);
    assert!(rt.worst() <= 1e-6, "round trip failed: {rt:?}");

    // Dual route: map the solver's multipliers into the explicit dual
    // program; they must be feasible there and report the same value.
    let dual = dualcert::dualize_mc(&inst, Some(&rc));
    let point = dualcert::solver_dual_point_mc(&inst, Some(&rc), &sol);
    assert!(dual.max_row_residual(&point.values) <= 1e-6);
    let gap = dual.objective_value(&point.values) - sol.primal_objective;
    assert!(gap.abs() <= 1e-6, "strong-duality gap {gap}");

    // And the hand-built strict dual point brackets the optimum from
    // above, as any dual-feasible point must.
    let strict = dualcert::strict_dual_point_mc(&inst, Some(&rc)).unwrap();
    assert!(strict.interior_margin > 0.0);
    assert!(dual.objective_value(&strict.values) >= sol.primal_objective - 1e-9);
}

/// A product manager's raw data — dollar prices with heterogeneous
/// sensitivities — adjusted into solver units, optimized, and mapped
/// back. The raw-coordinate answer must respect the raw bounds and
/// reproduce the same market shares the solver reported.
#[test]
fn raw_units_adjusted_solved_and_mapped_back() {
    let raw = RawAttributeModel {
        alpha: vec![1.0, 0.4],
        beta: vec![vec![2.0], vec![1.5]],
        margin_raw: vec![vec![0.9], vec![1.1]],
        cost_raw: vec![0.2, 0.3],
        y_lower: vec![vec![0.5], vec![0.5]],
        y_upper: vec![vec![4.0], vec![4.0]],
    };
    let (inst, map) = raw.adjust().unwrap();

    let prog = reform::build_mnl(&inst).unwrap();
    let sol = conic::solve(&prog.to_conic().unwrap(), &SolverConfig::default());
    assert_eq!(sol.status, SolveStatus::Optimal);
    let choice = ChoiceInstance::Mnl(inst.clone());
    let rec = recover::recover(&choice, &prog, &sol).unwrap();

    // Back to dollars: the optimum lies inside the original price box.
    let y = map.raw_from_adjusted(&rec.x);
    for (j, row) in y.iter().enumerate() {
        for (k, &v) in row.iter().enumerate() {
            assert!(
                v >= raw.y_lower[j][k] - 1e-9 && v <= raw.y_upper[j][k] + 1e-9,
                "y[{j}][{k}] = {v} outside the raw box"
            );
        }
    }

    // The affine map is exact both ways, so shares computed from the
    // round-tripped attributes match the recovered ones.
    let x_again = map.adjusted_from_raw(&y);
    let shares = inst.shares(&x_again);
    for (a, b) in shares.product.iter().zip(&rec.shares.product) {
        assert!((a - b).abs() <= 1e-9);
    }
}

/// A two-tier assortment in the per-product nested-logit form: every
/// product has its own quality attribute and margin, plus a price with a
/// tier-wide margin. The model is validated, split into shared-margin
/// form, solved, and the answer is read back in the original
/// coordinates.
#[test]
fn nested_tiers_split_solved_and_unsplit() {
    let economy = PerProductNest {
        gamma: 0.7,
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
    };
    let premium = PerProductNest {
        gamma: 0.9,
        phi: vec![vec![0.8, 1.3]],
        psi: vec![0.5],
        x_lower: vec![vec![0.2, -feasibility::UNBOUNDED_BOX]],
        x_upper: vec![vec![2.0, feasibility::UNBOUNDED_BOX]],
    };
    let model = PerProductNlModel {
        nests: vec![economy, premium],
        shared_attr: 1,
    };

    // The tier-wide price margin is the shared attribute; per-product
    // quality margins may differ, which is exactly what splitting makes
    // admissible.
    let inst = feasibility::split_attributes(&model).unwrap();
    let prog = reform::build_nl(&inst).unwrap();
    let sol = conic::solve(&prog.to_conic().unwrap(), &SolverConfig::default());
    assert_eq!(sol.status, SolveStatus::Optimal);
    let choice = ChoiceInstance::Nl(inst.clone());
    let rec = recover::recover(&choice, &prog, &sol).unwrap();
    assert!(rec.box_violation <= 1e-7);
    let rt = recover::roundtrip_check(&choice, &rec);
    assert!(rt.worst() <= 1e-6, "round trip failed: {rt:?}");

    // Original coordinates: three products, two attributes each.
    let x_user = feasibility::unsplit_point(&model, &inst, &rec.x);
    assert_eq!(x_user.len(), 3);
    assert!(x_user.iter().all(|row| row.len() == 2));
    for (flat, (nest, j)) in [(0usize, (0usize, 0usize)), (1, (0, 1)), (2, (1, 0))] {
        let q = x_user[flat][0];
        assert!(
            q >= model.nests[nest].x_lower[j][0] - 1e-7
                && q <= model.nests[nest].x_upper[j][0] + 1e-7,
            "quality attribute {flat} out of range: {q}"
        );
    }

    // The split instance's profit at the split point equals the
    // per-product profit of the original model at the unsplit point.
    let resplit = feasibility::split_point(&model, &inst, &x_user);
    let direct = inst.expected_profit(&resplit);
    assert!((direct - rec.objective).abs() <= 1e-6);
}
