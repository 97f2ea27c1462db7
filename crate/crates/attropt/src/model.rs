//! Choice-model instances and share/profit evaluators.
//!
//! An instance stores *adjusted* quantities: a per-attribute profit margin
//! matrix `phi`, per-item costs `psi`, and an attribute box
//! `x_lower ≤ x ≤ x_upper`. Adjusted attributes enter utilities negatively,
//! so the MNL choice weight of product `j` at attribute matrix `x` is
//! `e^{−Σₖ x_jk}` and the no-purchase alternative has weight 1. Raw
//! attributes `y` (with baseline attractiveness `alpha` and sensitivities
//! `beta`) map to adjusted ones through the affine transform
//! `x_jk = beta_jk·y_jk − alpha_j/K`; see [`RawAttributeModel::adjust`].
//!
//! All evaluators are pure functions of immutable instances and are safe to
//! call concurrently.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};

/// A product-attribute model in raw units, before the affine adjustment.
///
/// `margin_raw[j][k]` is the profit earned per unit of raw attribute
/// `y_jk`; `cost_raw[j]` is the per-item cost. Customers see utilities
/// `alpha_j − Σₖ beta_jk·y_jk`.
#[derive(Debug, Clone, PartialEq)]
pub struct RawAttributeModel {
    pub alpha: Vec<f64>,
    pub beta: Vec<Vec<f64>>,
    pub margin_raw: Vec<Vec<f64>>,
    pub cost_raw: Vec<f64>,
    pub y_lower: Vec<Vec<f64>>,
    pub y_upper: Vec<Vec<f64>>,
}

/// The affine raw→adjusted attribute map `x_jk = beta_jk·y_jk − alpha_j/K`,
/// returned by [`RawAttributeModel::adjust`] so callers can move points in
/// either direction.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineMap {
    pub alpha: Vec<f64>,
    pub beta: Vec<Vec<f64>>,
}

impl AffineMap {
    /// Number of attributes per product.
    fn attr_count(&self) -> usize {
        self.beta.first().map_or(0, Vec::len)
    }

    /// Map a raw attribute matrix `y` to adjusted attributes `x`.
    pub fn adjusted_from_raw(&self, y: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let k_count = self.attr_count() as f64;
        y.iter()
            .enumerate()
            .map(|(j, row)| {
                row.iter()
                    .enumerate()
                    .map(|(k, &yjk)| self.beta[j][k] * yjk - self.alpha[j] / k_count)
                    .collect()
            })
            .collect()
    }

    /// Invert the map: recover raw attributes `y = (x + alpha/K)/beta`.
    pub fn raw_from_adjusted(&self, x: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let k_count = self.attr_count() as f64;
        x.iter()
            .enumerate()
            .map(|(j, row)| {
                row.iter()
                    .enumerate()
                    .map(|(k, &xjk)| (xjk + self.alpha[j] / k_count) / self.beta[j][k])
                    .collect()
            })
            .collect()
    }
}

impl RawAttributeModel {
    /// Number of products.
    pub fn product_count(&self) -> usize {
        self.alpha.len()
    }

    /// Number of attributes per product.
    pub fn attr_count(&self) -> usize {
        self.beta.first().map_or(0, Vec::len)
    }

    /// Check shape consistency, `beta > 0`, and bound ordering.
    pub fn validate(&self) -> Result<()> {
        let j_count = self.product_count();
        let k_count = self.attr_count();
        check_matrix("beta", &self.beta, j_count, k_count)?;
        check_matrix("margin_raw", &self.margin_raw, j_count, k_count)?;
        check_matrix("y_lower", &self.y_lower, j_count, k_count)?;
        check_matrix("y_upper", &self.y_upper, j_count, k_count)?;
        if self.cost_raw.len() != j_count {
            return Err(Error::dims("cost_raw", j_count, self.cost_raw.len()));
        }
        for (j, row) in self.beta.iter().enumerate() {
            for (k, &b) in row.iter().enumerate() {
                if !(b > 0.0) {
                    return Err(Error::NonPositiveBeta { j, k, value: b });
                }
            }
        }
        for j in 0..j_count {
            for k in 0..k_count {
                if self.y_lower[j][k] > self.y_upper[j][k] {
                    return Err(Error::invariant(
                        format!("y_lower[{j}][{k}]"),
                        "exceeds y_upper",
                    ));
                }
            }
        }
        Ok(())
    }

    /// Apply the adjustment: `x_jk = beta_jk·y_jk − alpha_j/K`, adjusted
    /// margins `phi = beta·margin_raw`, adjusted costs
    /// `psi_j = cost_raw_j + (alpha_j/K)·Σₖ margin_raw_jk`. Because
    /// `beta > 0` the bound images keep their order, so the adjusted box is
    /// simply the image of the raw box.
    pub fn adjust(&self) -> Result<(MnlInstance, AffineMap)> {
        self.validate()?;
        let k_count = self.attr_count() as f64;
        let phi: Vec<Vec<f64>> = self
            .beta
            .iter()
            .zip(&self.margin_raw)
            .map(|(b, m)| b.iter().zip(m).map(|(&b, &m)| b * m).collect())
            .collect();
        let psi: Vec<f64> = self
            .cost_raw
            .iter()
            .enumerate()
            .map(|(j, &c)| c + self.alpha[j] / k_count * self.margin_raw[j].iter().sum::<f64>())
            .collect();
        let map = AffineMap {
            alpha: self.alpha.clone(),
            beta: self.beta.clone(),
        };
        let inst = MnlInstance::new(
            phi,
            psi,
            map.adjusted_from_raw(&self.y_lower),
            map.adjusted_from_raw(&self.y_upper),
        )?;
        Ok((inst, map))
    }

    /// Invert the adjustment for a point: `y_jk = (x_jk + alpha_j/K)/beta_jk`.
    pub fn unadjust(&self, x: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        self.validate()?;
        let map = AffineMap {
            alpha: self.alpha.clone(),
            beta: self.beta.clone(),
        };
        Ok(map.raw_from_adjusted(x))
    }
}

/// An adjusted multinomial-logit instance: strictly positive margins `phi`,
/// costs `psi`, and the attribute box.
#[derive(Debug, Clone, PartialEq)]
pub struct MnlInstance {
    pub phi: Vec<Vec<f64>>,
    pub psi: Vec<f64>,
    pub x_lower: Vec<Vec<f64>>,
    pub x_upper: Vec<Vec<f64>>,
}

impl MnlInstance {
    /// Validating constructor; rejects shape mismatches, non-positive
    /// margins, and disordered boxes.
    pub fn new(
        phi: Vec<Vec<f64>>,
        psi: Vec<f64>,
        x_lower: Vec<Vec<f64>>,
        x_upper: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let inst = MnlInstance {
            phi,
            psi,
            x_lower,
            x_upper,
        };
        inst.validate()?;
        Ok(inst)
    }

    /// Number of products.
    pub fn product_count(&self) -> usize {
        self.psi.len()
    }

    /// Number of attributes per product.
    pub fn attr_count(&self) -> usize {
        self.phi.first().map_or(0, Vec::len)
    }

    pub(crate) fn validate(&self) -> Result<()> {
        let j_count = self.product_count();
        let k_count = self.attr_count();
        check_matrix("phi", &self.phi, j_count, k_count)?;
        check_matrix("x_lower", &self.x_lower, j_count, k_count)?;
        check_matrix("x_upper", &self.x_upper, j_count, k_count)?;
        check_positive_margins(&self.phi)?;
        check_box(&self.x_lower, &self.x_upper)?;
        Ok(())
    }

    /// MNL market shares at attribute matrix `x`. Total function of finite
    /// inputs: evaluation is max-shifted so exponents up to ±1e4 are safe.
    pub fn shares(&self, x: &[Vec<f64>]) -> MarketShares {
        let weights_log: Vec<f64> = x.iter().map(|row| -row.iter().sum::<f64>()).collect();
        let (product, outside) = softmax_with_outside(&weights_log);
        MarketShares {
            product,
            outside: Some(outside),
            visits: None,
            nest: None,
        }
    }

    /// Expected profit `Σ_j (Σₖ phi_jk·x_jk − psi_j)·d_j(x)`.
    pub fn expected_profit(&self, x: &[Vec<f64>]) -> f64 {
        let shares = self.shares(x);
        profit_from_margins(&self.phi, &self.psi, x, &shares.product)
    }
}

/// A Markov-chain choice-model instance: MNL data plus arrival mass
/// `lambda` and transition weights `rho` (`rho[i][j]` = weight of moving
/// from product `i` to product `j` when `i` is unattractive). Adjusted
/// attributes must be nonnegative here, so choice weights `e^{−Σx} ≤ 1`
/// can be read as switch-off probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct McInstance {
    pub phi: Vec<Vec<f64>>,
    pub psi: Vec<f64>,
    pub x_lower: Vec<Vec<f64>>,
    pub x_upper: Vec<Vec<f64>>,
    pub lambda: Vec<f64>,
    pub rho: Vec<Vec<f64>>,
}

impl McInstance {
    /// Validating constructor.
    pub fn new(
        phi: Vec<Vec<f64>>,
        psi: Vec<f64>,
        x_lower: Vec<Vec<f64>>,
        x_upper: Vec<Vec<f64>>,
        lambda: Vec<f64>,
        rho: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let inst = McInstance {
            phi,
            psi,
            x_lower,
            x_upper,
            lambda,
            rho,
        };
        inst.validate()?;
        Ok(inst)
    }

    /// Number of products.
    pub fn product_count(&self) -> usize {
        self.psi.len()
    }

    /// Number of attributes per product.
    pub fn attr_count(&self) -> usize {
        self.phi.first().map_or(0, Vec::len)
    }

    pub(crate) fn validate(&self) -> Result<()> {
        let j_count = self.product_count();
        let k_count = self.attr_count();
        check_matrix("phi", &self.phi, j_count, k_count)?;
        check_matrix("x_lower", &self.x_lower, j_count, k_count)?;
        check_matrix("x_upper", &self.x_upper, j_count, k_count)?;
        check_matrix("rho", &self.rho, j_count, j_count)?;
        check_positive_margins(&self.phi)?;
        check_box(&self.x_lower, &self.x_upper)?;
        if self.lambda.len() != j_count {
            return Err(Error::dims("lambda", j_count, self.lambda.len()));
        }
        for (j, &l) in self.lambda.iter().enumerate() {
            if !(l >= 0.0) {
                return Err(Error::invariant(format!("lambda[{j}]"), "must be >= 0"));
            }
        }
        for (i, row) in self.rho.iter().enumerate() {
            for (j, &r) in row.iter().enumerate() {
                if !(r >= 0.0) {
                    return Err(Error::invariant(format!("rho[{i}][{j}]"), "must be >= 0"));
                }
            }
        }
        for (j, row) in self.x_lower.iter().enumerate() {
            for (k, &lo) in row.iter().enumerate() {
                if !(lo >= 0.0) {
                    return Err(Error::invariant(
                        format!("x_lower[{j}][{k}]"),
                        "must be >= 0 for the Markov-chain model",
                    ));
                }
            }
        }
        Ok(())
    }

    /// Markov-chain market shares at `x ≥ 0`.
    ///
    /// Solves the visit balance system `v_j = lambda_j + Σ_i rho'_ij·v_i`
    /// with effective transition weights
    /// `rho'_ij = (1 − e^{−Σₖ x_ik})·rho_ij`, then reports shares
    /// `d_j = e^{−Σₖ x_jk}·v_j`.
    pub fn shares(&self, x: &[Vec<f64>]) -> Result<MarketShares> {
        let j_count = self.product_count();
        let off: Vec<f64> = x
            .iter()
            .map(|row| (-row.iter().sum::<f64>()).exp())
            .collect();
        // (I − rho'^T) v = lambda, with rho'_ij read as flow i → j.
        let mat = DMatrix::from_fn(j_count, j_count, |j, i| {
            let eff = (1.0 - off[i]) * self.rho[i][j];
            if i == j {
                1.0 - eff
            } else {
                -eff
            }
        });
        let rhs = DVector::from_column_slice(&self.lambda);
        let visits = mat.lu().solve(&rhs).ok_or(Error::SingularSystem)?;
        let product: Vec<f64> = (0..j_count).map(|j| off[j] * visits[j]).collect();
        Ok(MarketShares {
            product,
            outside: None,
            visits: Some(visits.iter().copied().collect()),
            nest: None,
        })
    }

    /// Expected profit `Σ_j (Σₖ phi_jk·x_jk − psi_j)·d_j(x)`.
    pub fn expected_profit(&self, x: &[Vec<f64>]) -> Result<f64> {
        let shares = self.shares(x)?;
        Ok(profit_from_margins(
            &self.phi,
            &self.psi,
            x,
            &shares.product,
        ))
    }
}

/// One nest of a nested-logit instance: dissimilarity `gamma ∈ (0,1]`,
/// per-product costs, and per-product attribute boxes.
#[derive(Debug, Clone, PartialEq)]
pub struct Nest {
    pub gamma: f64,
    pub psi: Vec<f64>,
    pub x_lower: Vec<Vec<f64>>,
    pub x_upper: Vec<Vec<f64>>,
}

impl Nest {
    /// Number of products in this nest.
    pub fn product_count(&self) -> usize {
        self.psi.len()
    }
}

/// Where one attribute column of a split instance came from; see
/// [`crate::feasibility::split_attributes`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitColumn {
    /// Column carries original attribute `original_attr` of one product;
    /// every other product's box is pinned to `[0, 0]`.
    Private {
        product: usize,
        original_attr: usize,
    },
    /// The nest-shared unbounded attribute, appended last.
    Shared { original_attr: usize },
    /// Dead column added to equalize attribute counts across nests
    /// (box `[0, 0]` for every product in the nest).
    Padding,
}

/// Split-construction metadata attached to instances produced by
/// [`crate::feasibility::split_attributes`]; recovery uses it to
/// disaggregate nest totals in closed form.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitLayout {
    /// Per nest: the provenance of each attribute column.
    pub nests: Vec<Vec<SplitColumn>>,
}

/// A two-level nested-logit instance. Within every nest, each attribute
/// has one margin shared by all products (`rho_shared[i][k] > 0`); this is
/// what makes the profit objective expressible in nest-level attribute
/// totals.
#[derive(Debug, Clone, PartialEq)]
pub struct NlInstance {
    pub nests: Vec<Nest>,
    pub rho_shared: Vec<Vec<f64>>,
    /// Present iff the instance came out of the splitting construction.
    pub split: Option<SplitLayout>,
}

impl NlInstance {
    /// Validating constructor.
    pub fn new(nests: Vec<Nest>, rho_shared: Vec<Vec<f64>>) -> Result<Self> {
        let inst = NlInstance {
            nests,
            rho_shared,
            split: None,
        };
        inst.validate()?;
        Ok(inst)
    }

    /// Number of nests.
    pub fn nest_count(&self) -> usize {
        self.nests.len()
    }

    /// Total number of products across nests.
    pub fn product_count(&self) -> usize {
        self.nests.iter().map(Nest::product_count).sum()
    }

    /// Number of attributes per product (identical across nests).
    pub fn attr_count(&self) -> usize {
        self.rho_shared.first().map_or(0, Vec::len)
    }

    /// Flat product index of product `j` within nest `i`; products are
    /// numbered nest by nest.
    pub fn flat_index(&self, i: usize, j: usize) -> usize {
        self.nests[..i]
            .iter()
            .map(Nest::product_count)
            .sum::<usize>()
            + j
    }

    /// Iterate `(nest, within-nest index, flat index)` over all products.
    pub fn product_indices(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        self.nests.iter().enumerate().flat_map(move |(i, nest)| {
            (0..nest.product_count()).map(move |j| (i, j, self.flat_index(i, j)))
        })
    }

    /// Per-product profit margins implied by the nest-shared ones
    /// (`phi[flat j][k] = rho_shared[i][k]`).
    pub fn implied_margins(&self) -> Vec<Vec<f64>> {
        let mut phi = Vec::with_capacity(self.product_count());
        for (i, nest) in self.nests.iter().enumerate() {
            for _ in 0..nest.product_count() {
                phi.push(self.rho_shared[i].clone());
            }
        }
        phi
    }

    /// Per-product costs in flat order.
    pub fn flat_psi(&self) -> Vec<f64> {
        self.nests
            .iter()
            .flat_map(|n| n.psi.iter().copied())
            .collect()
    }

    /// Attribute boxes in flat order: (lower, upper).
    pub fn flat_box(&self) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let lower = self
            .nests
            .iter()
            .flat_map(|n| n.x_lower.iter().cloned())
            .collect();
        let upper = self
            .nests
            .iter()
            .flat_map(|n| n.x_upper.iter().cloned())
            .collect();
        (lower, upper)
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if self.nests.is_empty() {
            return Err(Error::invariant("nests", "must contain at least one nest"));
        }
        let k_count = self.attr_count();
        if self.rho_shared.len() != self.nest_count() {
            return Err(Error::dims(
                "rho_shared",
                self.nest_count(),
                self.rho_shared.len(),
            ));
        }
        for (i, nest) in self.nests.iter().enumerate() {
            if !(nest.gamma > 0.0 && nest.gamma <= 1.0) {
                return Err(Error::invariant(
                    format!("nests[{i}].gamma"),
                    "must lie in (0, 1]",
                ));
            }
            let j_count = nest.product_count();
            if j_count == 0 {
                return Err(Error::invariant(
                    format!("nests[{i}]"),
                    "must contain at least one product",
                ));
            }
            check_matrix(
                &format!("nests[{i}].x_lower"),
                &nest.x_lower,
                j_count,
                k_count,
            )?;
            check_matrix(
                &format!("nests[{i}].x_upper"),
                &nest.x_upper,
                j_count,
                k_count,
            )?;
            check_box(&nest.x_lower, &nest.x_upper)?;
            if self.rho_shared[i].len() != k_count {
                return Err(Error::dims(
                    format!("rho_shared[{i}]"),
                    k_count,
                    self.rho_shared[i].len(),
                ));
            }
            for (k, &m) in self.rho_shared[i].iter().enumerate() {
                if !(m > 0.0) {
                    return Err(Error::invariant(
                        format!("rho_shared[{i}][{k}]"),
                        "must be > 0",
                    ));
                }
            }
        }
        Ok(())
    }

    /// Nested-logit market shares at attribute matrix `x` (flat product
    /// order). Log-domain evaluation throughout, so large attribute sums
    /// and small `gamma` do not overflow.
    pub fn shares(&self, x: &[Vec<f64>]) -> MarketShares {
        // Per nest: log W_i = logsumexp_j(−Σₖ x_jk / γ_i), then the nest
        // weight in the top-level logit is W_i^γ_i = e^{γ_i·log W_i}.
        let mut log_w = Vec::with_capacity(self.nest_count());
        let mut member_logits: Vec<Vec<f64>> = Vec::with_capacity(self.nest_count());
        for (i, nest) in self.nests.iter().enumerate() {
            let logits: Vec<f64> = (0..nest.product_count())
                .map(|j| -x[self.flat_index(i, j)].iter().sum::<f64>() / nest.gamma)
                .collect();
            log_w.push(log_sum_exp(&logits));
            member_logits.push(logits);
        }
        let top: Vec<f64> = self
            .nests
            .iter()
            .zip(&log_w)
            .map(|(nest, &lw)| nest.gamma * lw)
            .collect();
        let (nest_shares, outside) = softmax_with_outside(&top);
        let mut product = Vec::with_capacity(self.product_count());
        for (i, logits) in member_logits.iter().enumerate() {
            for &lj in logits {
                product.push(nest_shares[i] * (lj - log_w[i]).exp());
            }
        }
        MarketShares {
            product,
            outside: Some(outside),
            visits: None,
            nest: Some(nest_shares),
        }
    }

    /// Expected profit with per-product margins implied by the shared ones.
    pub fn expected_profit(&self, x: &[Vec<f64>]) -> f64 {
        let shares = self.shares(x);
        profit_from_margins(
            &self.implied_margins(),
            &self.flat_psi(),
            x,
            &shares.product,
        )
    }
}

/// Any of the three supported instances.
#[derive(Debug, Clone, PartialEq)]
pub enum ChoiceInstance {
    Mnl(MnlInstance),
    Mc(McInstance),
    Nl(NlInstance),
}

impl ChoiceInstance {
    /// Total product count (flat across nests for NL).
    pub fn product_count(&self) -> usize {
        match self {
            ChoiceInstance::Mnl(m) => m.product_count(),
            ChoiceInstance::Mc(m) => m.product_count(),
            ChoiceInstance::Nl(n) => n.product_count(),
        }
    }

    /// Attributes per product.
    pub fn attr_count(&self) -> usize {
        match self {
            ChoiceInstance::Mnl(m) => m.attr_count(),
            ChoiceInstance::Mc(m) => m.attr_count(),
            ChoiceInstance::Nl(n) => n.attr_count(),
        }
    }

    /// Attribute box in flat product order: (lower, upper).
    pub fn flat_box(&self) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        match self {
            ChoiceInstance::Mnl(m) => (m.x_lower.clone(), m.x_upper.clone()),
            ChoiceInstance::Mc(m) => (m.x_lower.clone(), m.x_upper.clone()),
            ChoiceInstance::Nl(n) => n.flat_box(),
        }
    }

    /// Market shares at `x` via the matching evaluator.
    pub fn shares(&self, x: &[Vec<f64>]) -> Result<MarketShares> {
        match self {
            ChoiceInstance::Mnl(m) => Ok(m.shares(x)),
            ChoiceInstance::Mc(m) => m.shares(x),
            ChoiceInstance::Nl(n) => Ok(n.shares(x)),
        }
    }

    /// Expected profit at `x` via the matching evaluator.
    pub fn expected_profit(&self, x: &[Vec<f64>]) -> Result<f64> {
        match self {
            ChoiceInstance::Mnl(m) => Ok(m.expected_profit(x)),
            ChoiceInstance::Mc(m) => m.expected_profit(x),
            ChoiceInstance::Nl(n) => Ok(n.expected_profit(x)),
        }
    }
}

/// Market shares produced by the evaluators. `product` is flat product
/// order; the optional fields are model-specific (outside share for
/// MNL/NL, visit rates for MC, nest shares for NL).
#[derive(Debug, Clone, PartialEq)]
pub struct MarketShares {
    pub product: Vec<f64>,
    pub outside: Option<f64>,
    pub visits: Option<Vec<f64>>,
    pub nest: Option<Vec<f64>>,
}

/// `Σ_j (Σₖ phi_jk·x_jk − psi_j)·share_j`.
fn profit_from_margins(phi: &[Vec<f64>], psi: &[f64], x: &[Vec<f64>], shares: &[f64]) -> f64 {
    shares
        .iter()
        .enumerate()
        .map(|(j, &d)| {
            let margin: f64 = phi[j]
                .iter()
                .zip(&x[j])
                .map(|(&p, &xv)| p * xv)
                .sum::<f64>()
                - psi[j];
            margin * d
        })
        .sum()
}

/// Stable `log Σ e^{a_i}`.
fn log_sum_exp(a: &[f64]) -> f64 {
    let m = a.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + a.iter().map(|&v| (v - m).exp()).sum::<f64>().ln()
}

/// Softmax over `{0} ∪ logits` (the implicit 0 is the outside option's
/// logit). Returns (per-logit shares, outside share); everything sums to 1.
fn softmax_with_outside(logits: &[f64]) -> (Vec<f64>, f64) {
    let m = logits.iter().copied().fold(0.0f64, f64::max);
    let outside_w = (-m).exp();
    let weights: Vec<f64> = logits.iter().map(|&l| (l - m).exp()).collect();
    let denom = outside_w + weights.iter().sum::<f64>();
    (
        weights.iter().map(|&w| w / denom).collect(),
        outside_w / denom,
    )
}

fn check_matrix(name: &str, m: &[Vec<f64>], rows: usize, cols: usize) -> Result<()> {
    if m.len() != rows {
        return Err(Error::dims(name, rows, m.len()));
    }
    for (r, row) in m.iter().enumerate() {
        if row.len() != cols {
            return Err(Error::dims(format!("{name}[{r}]"), cols, row.len()));
        }
        for (c, v) in row.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::invariant(
                    format!("{name}[{r}][{c}]"),
                    "must be finite",
                ));
            }
        }
    }
    Ok(())
}

fn check_positive_margins(phi: &[Vec<f64>]) -> Result<()> {
    for (j, row) in phi.iter().enumerate() {
        for (k, &p) in row.iter().enumerate() {
            if !(p > 0.0) {
                return Err(Error::invariant(format!("phi[{j}][{k}]"), "must be > 0"));
            }
        }
    }
    Ok(())
}

fn check_box(lower: &[Vec<f64>], upper: &[Vec<f64>]) -> Result<()> {
    for (j, (lo_row, hi_row)) in lower.iter().zip(upper).enumerate() {
        for (k, (&lo, &hi)) in lo_row.iter().zip(hi_row).enumerate() {
            if lo > hi {
                return Err(Error::invariant(
                    format!("x_lower[{j}][{k}]"),
                    "exceeds x_upper",
                ));
            }
        }
    }
    Ok(())
}
