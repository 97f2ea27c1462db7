//! Feasibility analysis and the attribute-splitting construction.
//!
//! Three concerns live here:
//!
//! 1. [`classify_visit_system`] decides whether the Markov-chain visit
//!    balance system `v = λ + ρᵀv` has a unique, no, or infinitely many
//!    solutions — the feasibility gate for the Markov-chain pipeline.
//! 2. [`validate_shared_margins`] checks the nested-logit requirement that
//!    within every nest each attribute carries one margin shared by all
//!    products.
//! 3. [`split_attributes`] rewrites a nested-logit model with per-product
//!    margins into an equivalent one that satisfies the shared-margin
//!    requirement, by giving every product its own private copy of each
//!    bounded attribute and keeping a single unbounded attribute shared.

use crate::error::{Error, Result};
use crate::model::{ChoiceInstance, MarketShares, Nest, NlInstance, SplitColumn, SplitLayout};
use nalgebra::{DMatrix, DVector};

/// Default stand-in for "unbounded" attribute boxes, in adjusted units.
/// Kept finite so every conic program stays bounded; large enough to exceed
/// any realistic optimum.
pub const UNBOUNDED_BOX: f64 = 1e6;

/// Outcome of classifying the visit balance system `(I − ρᵀ)v = λ`.
#[derive(Debug, Clone, PartialEq)]
pub enum VisitSystemClassification {
    /// `I − ρᵀ` is nonsingular; `visits` is the unique solution and
    /// `strictly_positive` reports whether every entry exceeds zero.
    Unique {
        visits: Vec<f64>,
        strictly_positive: bool,
    },
    /// Singular matrix with `λ` outside its range.
    NoSolution,
    /// Singular matrix with `λ` in its range.
    InfinitelyMany,
}

impl VisitSystemClassification {
    /// True for the `Unique` variant.
    pub fn is_unique(&self) -> bool {
        matches!(self, VisitSystemClassification::Unique { .. })
    }

    /// True for `Unique` with all visits strictly positive.
    pub fn is_unique_positive(&self) -> bool {
        matches!(
            self,
            VisitSystemClassification::Unique {
                strictly_positive: true,
                ..
            }
        )
    }
}

/// Classify the visit balance system `v_j = λ_j + Σ_i ρ_ij·v_i`.
///
/// Rank decisions use a full-pivot LU with pivot tolerance
/// `1e-12·max(1, max|ρ_ij|)`; for a singular matrix, `λ` counts as in-range
/// when the least-squares residual is at most `1e-9`.
pub fn classify_visit_system(lambda: &[f64], rho: &[Vec<f64>]) -> VisitSystemClassification {
    let n = lambda.len();
    let mat = DMatrix::from_fn(n, n, |j, i| {
        let r = rho[i][j];
        if i == j {
            1.0 - r
        } else {
            -r
        }
    });
    let rhs = DVector::from_column_slice(lambda);
    let rho_max = rho
        .iter()
        .flat_map(|row| row.iter())
        .fold(0.0f64, |a, &b| a.max(b.abs()));
    let pivot_tol = 1e-12 * rho_max.max(1.0);

    let lu = mat.clone().full_piv_lu();
    let rank = lu
        .u()
        .diagonal()
        .iter()
        .filter(|p| p.abs() > pivot_tol)
        .count();
    if rank == n {
        let visits = lu.solve(&rhs).expect("full-rank system must be solvable");
        let strictly_positive = visits.iter().all(|&v| v > 0.0);
        return VisitSystemClassification::Unique {
            visits: visits.iter().copied().collect(),
            strictly_positive,
        };
    }
    // Singular: decide range membership by least squares.
    let svd = mat.clone().svd(true, true);
    let v_ls = svd
        .solve(&rhs, pivot_tol)
        .unwrap_or_else(|_| DVector::zeros(n));
    let residual = (&mat * &v_ls - &rhs).amax();
    if residual <= 1e-9 {
        VisitSystemClassification::InfinitelyMany
    } else {
        VisitSystemClassification::NoSolution
    }
}

/// Require the visit balance system to have a unique, strictly positive
/// solution; returns the visits or [`Error::McBaseSystemDegenerate`].
pub fn require_unique_positive(lambda: &[f64], rho: &[Vec<f64>]) -> Result<Vec<f64>> {
    match classify_visit_system(lambda, rho) {
        VisitSystemClassification::Unique {
            visits,
            strictly_positive: true,
        } => Ok(visits),
        VisitSystemClassification::Unique { .. } => Err(Error::McBaseSystemDegenerate(
            "visit system solution is not strictly positive".into(),
        )),
        VisitSystemClassification::NoSolution => Err(Error::McBaseSystemDegenerate(
            "visit system has no solution".into(),
        )),
        VisitSystemClassification::InfinitelyMany => Err(Error::McBaseSystemDegenerate(
            "visit system has infinitely many solutions".into(),
        )),
    }
}

/// The attribute matrix pinned to its lower bounds, together with the
/// shares the matching evaluator reports there. This point is always
/// feasible for the original problem; for the Markov-chain model the visit
/// system must first classify as `Unique` with strictly positive visits
/// ([`Error::McBaseSystemDegenerate`] otherwise).
pub fn default_point(inst: &ChoiceInstance) -> Result<(Vec<Vec<f64>>, MarketShares)> {
    if let ChoiceInstance::Mc(mc) = inst {
        require_unique_positive(&mc.lambda, &mc.rho)?;
    }
    let (x, _) = inst.flat_box();
    let shares = inst.shares(&x)?;
    Ok((x, shares))
}

/// One nest of a nested-logit model whose margins are still per-product.
#[derive(Debug, Clone, PartialEq)]
pub struct PerProductNest {
    pub gamma: f64,
    /// `phi[j][k]`: margin of attribute `k` for product `j` in this nest.
    pub phi: Vec<Vec<f64>>,
    pub psi: Vec<f64>,
    pub x_lower: Vec<Vec<f64>>,
    pub x_upper: Vec<Vec<f64>>,
}

/// A nested-logit model in per-product-margin form, before splitting.
#[derive(Debug, Clone, PartialEq)]
pub struct PerProductNlModel {
    pub nests: Vec<PerProductNest>,
    /// Index of the attribute shared by all products of a nest (equal
    /// margin, unbounded box); every other attribute gets split.
    pub shared_attr: usize,
}

/// Result of checking the shared-margin requirement: within every nest,
/// each attribute's margin must be identical across products (within
/// `1e-12` absolute — margins are user inputs, not computed quantities)
/// and strictly positive.
#[derive(Debug, Clone, PartialEq)]
pub struct SharedMarginReport {
    /// `(nest, attribute)` pairs violating equality or positivity.
    pub offenders: Vec<(usize, usize)>,
    /// The common margin per nest and attribute; present iff no offenders.
    pub rho_shared: Option<Vec<Vec<f64>>>,
}

impl SharedMarginReport {
    /// True when every nest/attribute pair satisfies the requirement.
    pub fn passed(&self) -> bool {
        self.offenders.is_empty()
    }

    /// Convert to a hard error carrying the offending pairs.
    pub fn into_result(self) -> Result<Vec<Vec<f64>>> {
        match self.rho_shared {
            Some(r) if self.offenders.is_empty() => Ok(r),
            _ => Err(Error::SharedMarginViolated {
                offenders: self.offenders,
            }),
        }
    }
}

/// Check that within every nest each attribute carries one strictly
/// positive margin shared by all products.
pub fn validate_shared_margins(nests: &[PerProductNest]) -> SharedMarginReport {
    let mut offenders = Vec::new();
    let mut rho_shared = Vec::with_capacity(nests.len());
    for (i, nest) in nests.iter().enumerate() {
        let k_count = nest.phi.first().map_or(0, Vec::len);
        let mut nest_margins = Vec::with_capacity(k_count);
        for k in 0..k_count {
            let first = nest.phi[0][k];
            let equal = nest.phi.iter().all(|row| (row[k] - first).abs() <= 1e-12);
            if !equal || !(first > 0.0) {
                offenders.push((i, k));
            }
            nest_margins.push(first);
        }
        rho_shared.push(nest_margins);
    }
    let passed = offenders.is_empty();
    SharedMarginReport {
        offenders,
        rho_shared: passed.then_some(rho_shared),
    }
}

/// Rewrite a per-product-margin nested-logit model into shared-margin form.
///
/// Within a nest of `J` products and `K′` original attributes, every
/// non-shared attribute `k′` becomes `J` private columns — column `(k′,j)`
/// keeps product `j`'s bounds and margin and pins every other product to a
/// `[0,0]` box — and the designated shared attribute is appended last with
/// a `±`[`UNBOUNDED_BOX`] box. That yields `J·(K′−1)+1` columns per nest;
/// nests with fewer columns than the widest one are padded with dead
/// `[0,0]` columns (margin 1). Because each column's box is degenerate for
/// all but its originating product, the shared-margin requirement holds by
/// construction, and optimizing the split instance is equivalent to
/// optimizing the original.
pub fn split_attributes(model: &PerProductNlModel) -> Result<NlInstance> {
    split_attributes_with_big(model, UNBOUNDED_BOX)
}

/// [`split_attributes`] with an explicit stand-in for the unbounded box.
pub fn split_attributes_with_big(model: &PerProductNlModel, big: f64) -> Result<NlInstance> {
    let shared = model.shared_attr;
    // The designated shared attribute must already have a common margin
    // within every nest.
    for (i, nest) in model.nests.iter().enumerate() {
        let k_count = nest.phi.first().map_or(0, Vec::len);
        if shared >= k_count {
            return Err(Error::dims(
                format!("shared_attr (nest {i})"),
                k_count,
                shared,
            ));
        }
        let first = nest.phi[0][shared];
        if !(first > 0.0)
            || nest
                .phi
                .iter()
                .any(|row| (row[shared] - first).abs() > 1e-12)
        {
            return Err(Error::NoSharedAttribute {
                nest: i,
                attr: shared,
            });
        }
    }

    let k_split: Vec<usize> = model
        .nests
        .iter()
        .map(|nest| {
            let kp = nest.phi.first().map_or(0, Vec::len);
            nest.psi.len() * (kp - 1) + 1
        })
        .collect();
    let k_total = k_split.iter().copied().max().unwrap_or(1);

    let mut nests = Vec::with_capacity(model.nests.len());
    let mut rho_shared = Vec::with_capacity(model.nests.len());
    let mut layout = Vec::with_capacity(model.nests.len());
    for nest in &model.nests {
        let j_count = nest.psi.len();
        let kp = nest.phi.first().map_or(0, Vec::len);
        let mut columns = Vec::with_capacity(k_total);
        let mut margins = Vec::with_capacity(k_total);
        let mut lower = vec![Vec::with_capacity(k_total); j_count];
        let mut upper = vec![Vec::with_capacity(k_total); j_count];
        // Private blocks: original attribute major, owning product minor.
        for kp_idx in (0..kp).filter(|&k| k != shared) {
            for owner in 0..j_count {
                columns.push(SplitColumn::Private {
                    product: owner,
                    original_attr: kp_idx,
                });
                margins.push(nest.phi[owner][kp_idx]);
                for j in 0..j_count {
                    if j == owner {
                        lower[j].push(nest.x_lower[j][kp_idx]);
                        upper[j].push(nest.x_upper[j][kp_idx]);
                    } else {
                        lower[j].push(0.0);
                        upper[j].push(0.0);
                    }
                }
            }
        }
        // Dead columns so every nest reaches the same attribute count.
        while columns.len() < k_total - 1 {
            columns.push(SplitColumn::Padding);
            margins.push(1.0);
            for j in 0..j_count {
                lower[j].push(0.0);
                upper[j].push(0.0);
            }
        }
        // The shared attribute goes last, unbounded.
        columns.push(SplitColumn::Shared {
            original_attr: shared,
        });
        margins.push(nest.phi[0][shared]);
        for j in 0..j_count {
            lower[j].push(-big);
            upper[j].push(big);
        }
        nests.push(Nest {
            gamma: nest.gamma,
            psi: nest.psi.clone(),
            x_lower: lower,
            x_upper: upper,
        });
        rho_shared.push(margins);
        layout.push(columns);
    }
    let mut inst = NlInstance::new(nests, rho_shared)?;
    inst.split = Some(SplitLayout { nests: layout });
    Ok(inst)
}

/// Map an attribute matrix of the original per-product model to the split
/// instance's coordinates: each private column carries its owner's value,
/// dead columns are zero, and the shared column carries the shared
/// attribute's value.
pub fn split_point(model: &PerProductNlModel, inst: &NlInstance, x: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let layout = inst
        .split
        .as_ref()
        .expect("instance must carry a split layout");
    let mut out = Vec::with_capacity(inst.product_count());
    let mut flat = 0usize;
    for (i, nest) in model.nests.iter().enumerate() {
        for j in 0..nest.psi.len() {
            let row: Vec<f64> = layout.nests[i]
                .iter()
                .map(|col| match col {
                    SplitColumn::Private {
                        product,
                        original_attr,
                    } if *product == j => x[flat][*original_attr],
                    SplitColumn::Shared { original_attr } => x[flat][*original_attr],
                    _ => 0.0,
                })
                .collect();
            out.push(row);
            flat += 1;
        }
    }
    out
}

/// Reverse of [`split_point`]: collapse a split attribute matrix back into
/// per-product original coordinates.
pub fn unsplit_point(
    model: &PerProductNlModel,
    inst: &NlInstance,
    x_split: &[Vec<f64>],
) -> Vec<Vec<f64>> {
    let layout = inst
        .split
        .as_ref()
        .expect("instance must carry a split layout");
    let mut out = Vec::new();
    let mut flat = 0usize;
    for (i, nest) in model.nests.iter().enumerate() {
        let kp = nest.phi.first().map_or(0, Vec::len);
        for j in 0..nest.psi.len() {
            let mut row = vec![0.0; kp];
            for (c, col) in layout.nests[i].iter().enumerate() {
                match col {
                    SplitColumn::Private {
                        product,
                        original_attr,
                    } if *product == j => row[*original_attr] = x_split[flat][c],
                    SplitColumn::Shared { original_attr } => row[*original_attr] = x_split[flat][c],
                    _ => {}
                }
            }
            out.push(row);
            flat += 1;
        }
    }
    out
}
