//! JSON file formats and the command-line front end.
//!
//! Two file kinds exist: instance files (the problem) and solution files
//! (what `solve` writes and `verify` re-checks). Both are schema-versioned
//! JSON with unknown fields rejected, serialized canonically (sorted keys,
//! full round-trip float precision) so that writing and re-reading a file
//! is value-identical.
//!
//! Commands and exit codes:
//!
//! * `solve <instance> [--tol T] [--max-iter N] [--out FILE]` — solve and
//!   write a solution file (stdout without `--out`).
//! * `verify <instance> <solution>` — re-evaluate a stored solution
//!   against its instance; exit 0 iff every residual is ≤ 1e-6.
//! * `oracle <instance> [--grid N] [--refine R]` — compare the conic
//!   pipeline against the brute-force lattice.
//! * `adjust <instance> [--out FILE]` — rewrite a raw-form instance in
//!   adjusted form (adjusted input is canonicalized unchanged).
//! * `dual <instance>` — summarize the explicit dual program and its
//!   strictly feasible point.
//!
//! Exit codes: 0 success/optimal · 1 verification failed · 2 infeasible ·
//! 3 unbounded · 4 input error · 5 numerical failure. Diagnostics go to
//! stderr, results to stdout or `--out`.

use crate::conic::{self, Certificate, PrimalDualSolution, SolveStatus, SolverConfig};
use crate::dualcert::{self, DualPoint, DualProgram};
use crate::error::{Error, Result};
use crate::feasibility::{self, PerProductNest, PerProductNlModel};
use crate::model::{
    AffineMap, ChoiceInstance, MarketShares, McInstance, MnlInstance, Nest, NlInstance,
    RawAttributeModel,
};
use crate::oracle::{self, Comparison, GridSpec};
use crate::recover::{self, RecoveredSolution, RoundtripReport};
use crate::reform::{self, ReformProgram, ResourceConstraints};
use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

/// The one schema version this build reads and writes.
pub const SCHEMA_VERSION: u32 = 1;

// ---------------------------------------------------------------------------
// File formats
// ---------------------------------------------------------------------------

/// Model discriminator in instance files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelTag {
    Mnl,
    Mc,
    Nl,
}

/// Attribute-form discriminator in instance files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FormTag {
    Raw,
    Adjusted,
}

/// One nest of a nested-logit instance file. Exactly one of `rho_shared`
/// (margins already shared within the nest) or `phi` (per-product margins,
/// requiring the top-level `shared_attr` for automatic splitting) must be
/// present, and all nests of a file must use the same one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NestFile {
    pub gamma: f64,
    pub psi: Vec<f64>,
    pub x_lower: Vec<Vec<f64>>,
    pub x_upper: Vec<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rho_shared: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phi: Option<Vec<Vec<f64>>>,
}

/// Optional linear share requirements `Γ·d ≥ γ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResourceFile {
    #[serde(rename = "Gamma")]
    pub gamma: Vec<Vec<f64>>,
    pub gamma_rhs: Vec<f64>,
}

/// An instance file. Which optional fields must be present depends on
/// `model` and `form`; [`parse_instance`] enforces the combinations and
/// rejects stray fields from other models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceFile {
    pub schema_version: u32,
    pub model: ModelTag,
    pub form: FormTag,
    // Adjusted form (mnl, mc).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phi: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub psi: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x_lower: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x_upper: Option<Vec<Vec<f64>>>,
    // Raw form (mnl, mc).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub margin_raw: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cost_raw: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub y_lower: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub y_upper: Option<Vec<Vec<f64>>>,
    // Markov-chain extras.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rho: Option<Vec<Vec<f64>>>,
    // Nested-logit.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nests: Option<Vec<NestFile>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub shared_attr: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub resources: Option<ResourceFile>,
}

/// Shares block of a solution file; mirrors [`MarketShares`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SharesFile {
    pub product: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub outside: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub visits: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nest: Option<Vec<f64>>,
}

impl From<&MarketShares> for SharesFile {
    fn from(s: &MarketShares) -> Self {
        SharesFile {
            product: s.product.clone(),
            outside: s.outside,
            visits: s.visits.clone(),
            nest: s.nest.clone(),
        }
    }
}

impl From<&SharesFile> for MarketShares {
    fn from(s: &SharesFile) -> Self {
        MarketShares {
            product: s.product.clone(),
            outside: s.outside,
            visits: s.visits.clone(),
            nest: s.nest.clone(),
        }
    }
}

/// Solver statistics recorded with a solution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverStats {
    pub iterations: usize,
    pub primal_eq: f64,
    pub primal_ineq: f64,
    pub worst_cone: f64,
    pub dual: f64,
    pub gap_rel: f64,
}

/// Tool and configuration provenance recorded with a solution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Provenance {
    pub tool: String,
    pub tol_gap: f64,
    pub tol_feas: f64,
    pub max_iter: usize,
}

/// A solution file: everything needed to re-verify the claim without
/// re-solving. `x` (and the attribute mass `u = x∘d`) are stated in the
/// coordinates the instance file used — raw-form instances additionally
/// get `y_raw`, and auto-split nested-logit instances are mapped back to
/// their original per-product attributes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolutionFile {
    pub schema_version: u32,
    /// "optimal", "infeasible", or "unbounded".
    pub status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub objective: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub y_raw: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub shares: Option<SharesFile>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub u: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tightness_residuals: Option<Vec<f64>>,
    /// Residual of the infeasibility/unboundedness certificate, when the
    /// status is not "optimal".
    #[serde(skip_serializing_if = "Option::is_none")]
    pub certificate_residual: Option<f64>,
    pub solver: SolverStats,
    pub provenance: Provenance,
}

/// Report printed by `verify`: the four round-trip residuals plus an
/// informational consistency check of the stored attribute masses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyReport {
    pub share_residual: f64,
    pub tightness_residual: f64,
    pub box_violation: f64,
    pub objective_mismatch: f64,
    /// `max |u_jk − x_jk·weight_j|` with re-evaluated weights; not part of
    /// the pass/fail decision.
    pub u_residual: f64,
    pub passed: bool,
}

// ---------------------------------------------------------------------------
// Canonical JSON
// ---------------------------------------------------------------------------

/// Serialize any file struct canonically: keys sorted, floats at full
/// round-trip precision, trailing newline.
pub fn to_canonical_json<T: Serialize>(value: &T) -> Result<String> {
    // Passing through `serde_json::Value` sorts object keys (its map is a
    // BTreeMap); the float formatter is shortest-round-trip, so re-reading
    // reproduces every bit.
    let v = serde_json::to_value(value).map_err(|e| Error::Schema {
        path: "$".into(),
        message: e.to_string(),
    })?;
    let mut s = serde_json::to_string_pretty(&v).map_err(|e| Error::Schema {
        path: "$".into(),
        message: e.to_string(),
    })?;
    s.push('\n');
    Ok(s)
}

/// Deserialize with field-path diagnostics on failure.
fn from_json<'de, T: Deserialize<'de>>(text: &'de str) -> Result<T> {
    let mut de = serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(&mut de).map_err(|e| Error::Schema {
        path: e.path().to_string(),
        message: e.inner().to_string(),
    })
}

fn schema_err(path: &str, message: impl Into<String>) -> Error {
    Error::Schema {
        path: path.into(),
        message: message.into(),
    }
}

// ---------------------------------------------------------------------------
// Instance parsing
// ---------------------------------------------------------------------------

/// A fully validated instance, plus the mappings needed to express results
/// in the coordinates the file used.
#[derive(Debug, Clone)]
pub struct ParsedInstance {
    pub instance: ChoiceInstance,
    pub resources: Option<ResourceConstraints>,
    /// Present when the file was in raw form: maps adjusted attributes
    /// back to raw ones for reporting.
    pub raw_map: Option<AffineMap>,
    /// Present when a nested-logit file used per-product margins: the
    /// original model, for mapping split attributes back.
    pub per_product: Option<PerProductNlModel>,
    /// The file as parsed, for canonical re-emission.
    pub file: InstanceFile,
}

fn require<T>(field: Option<T>, path: &str) -> Result<T> {
    field.ok_or_else(|| schema_err(path, "field is required for this model/form combination"))
}

fn forbid<T>(field: &Option<T>, path: &str, why: &str) -> Result<()> {
    if field.is_some() {
        return Err(schema_err(path, why));
    }
    Ok(())
}

/// Parse and validate an instance file. Raw-form attributes are adjusted,
/// per-product nested-logit margins are split, and every model invariant
/// is re-checked by the constructors.
pub fn parse_instance(text: &str) -> Result<ParsedInstance> {
    let file: InstanceFile = from_json(text)?;
    if file.schema_version != SCHEMA_VERSION {
        return Err(schema_err(
            "schema_version",
            format!(
                "unsupported version {} (this build reads {SCHEMA_VERSION})",
                file.schema_version
            ),
        ));
    }

    let is_mc = file.model == ModelTag::Mc;
    let (instance, raw_map, per_product) = match (file.model, file.form) {
        (ModelTag::Nl, FormTag::Raw) => {
            return Err(schema_err(
                "form",
                "raw form is not defined for nested-logit instances",
            ));
        }
        (ModelTag::Mnl | ModelTag::Mc, form) => {
            forbid(&file.nests, "nests", "only valid for model \"nl\"")?;
            forbid(
                &file.shared_attr,
                "shared_attr",
                "only valid for model \"nl\"",
            )?;
            if !is_mc {
                forbid(&file.lambda, "lambda", "only valid for model \"mc\"")?;
                forbid(&file.rho, "rho", "only valid for model \"mc\"")?;
            }
            let (mnl, map) = match form {
                FormTag::Adjusted => {
                    for (f, p) in [
                        (file.alpha.is_some(), "alpha"),
                        (file.beta.is_some(), "beta"),
                        (file.margin_raw.is_some(), "margin_raw"),
                        (file.cost_raw.is_some(), "cost_raw"),
                        (file.y_lower.is_some(), "y_lower"),
                        (file.y_upper.is_some(), "y_upper"),
                    ] {
                        if f {
                            return Err(schema_err(p, "raw-form field in an adjusted-form file"));
                        }
                    }
                    let mnl = MnlInstance::new(
                        require(file.phi.clone(), "phi")?,
                        require(file.psi.clone(), "psi")?,
                        require(file.x_lower.clone(), "x_lower")?,
                        require(file.x_upper.clone(), "x_upper")?,
                    )?;
                    (mnl, None)
                }
                FormTag::Raw => {
                    for (f, p) in [
                        (file.phi.is_some(), "phi"),
                        (file.psi.is_some(), "psi"),
                        (file.x_lower.is_some(), "x_lower"),
                        (file.x_upper.is_some(), "x_upper"),
                    ] {
                        if f {
                            return Err(schema_err(p, "adjusted-form field in a raw-form file"));
                        }
                    }
                    let raw = RawAttributeModel {
                        alpha: require(file.alpha.clone(), "alpha")?,
                        beta: require(file.beta.clone(), "beta")?,
                        margin_raw: require(file.margin_raw.clone(), "margin_raw")?,
                        cost_raw: require(file.cost_raw.clone(), "cost_raw")?,
                        y_lower: require(file.y_lower.clone(), "y_lower")?,
                        y_upper: require(file.y_upper.clone(), "y_upper")?,
                    };
                    let (mnl, map) = raw.adjust()?;
                    (mnl, Some(map))
                }
            };
            let instance = if is_mc {
                ChoiceInstance::Mc(McInstance::new(
                    mnl.phi,
                    mnl.psi,
                    mnl.x_lower,
                    mnl.x_upper,
                    require(file.lambda.clone(), "lambda")?,
                    require(file.rho.clone(), "rho")?,
                )?)
            } else {
                ChoiceInstance::Mnl(mnl)
            };
            (instance, map, None)
        }
        (ModelTag::Nl, FormTag::Adjusted) => {
            for (f, p) in [
                (file.phi.is_some(), "phi"),
                (file.psi.is_some(), "psi"),
                (file.x_lower.is_some(), "x_lower"),
                (file.x_upper.is_some(), "x_upper"),
                (file.alpha.is_some(), "alpha"),
                (file.beta.is_some(), "beta"),
                (file.margin_raw.is_some(), "margin_raw"),
                (file.cost_raw.is_some(), "cost_raw"),
                (file.y_lower.is_some(), "y_lower"),
                (file.y_upper.is_some(), "y_upper"),
                (file.lambda.is_some(), "lambda"),
                (file.rho.is_some(), "rho"),
            ] {
                if f {
                    return Err(schema_err(p, "not valid at top level for model \"nl\""));
                }
            }
            let nests = require(file.nests.clone(), "nests")?;
            if nests.is_empty() {
                return Err(schema_err("nests", "at least one nest is required"));
            }
            let shared_form = nests
                .iter()
                .all(|n| n.rho_shared.is_some() && n.phi.is_none());
            let split_form = nests
                .iter()
                .all(|n| n.phi.is_some() && n.rho_shared.is_none());
            if !shared_form && !split_form {
                return Err(schema_err(
                    "nests",
                    "every nest needs exactly one of rho_shared or phi, consistently",
                ));
            }
            if shared_form {
                forbid(
                    &file.shared_attr,
                    "shared_attr",
                    "only valid with per-product (phi) nests",
                )?;
                let rho_shared: Vec<Vec<f64>> = nests
                    .iter()
                    .map(|n| n.rho_shared.clone().unwrap())
                    .collect();
                let nest_models: Vec<Nest> = nests
                    .iter()
                    .map(|n| Nest {
                        gamma: n.gamma,
                        psi: n.psi.clone(),
                        x_lower: n.x_lower.clone(),
                        x_upper: n.x_upper.clone(),
                    })
                    .collect();
                (
                    ChoiceInstance::Nl(NlInstance::new(nest_models, rho_shared)?),
                    None,
                    None,
                )
            } else {
                let shared_attr = require(file.shared_attr, "shared_attr")?;
                let model = PerProductNlModel {
                    nests: nests
                        .iter()
                        .map(|n| PerProductNest {
                            gamma: n.gamma,
                            phi: n.phi.clone().unwrap(),
                            psi: n.psi.clone(),
                            x_lower: n.x_lower.clone(),
                            x_upper: n.x_upper.clone(),
                        })
                        .collect(),
                    shared_attr,
                };
                let split = feasibility::split_attributes(&model)?;
                (ChoiceInstance::Nl(split), None, Some(model))
            }
        }
    };

    let resources = match &file.resources {
        Some(r) => {
            let products = instance.product_count();
            if r.gamma.len() != r.gamma_rhs.len() {
                return Err(Error::dims(
                    "resources.gamma_rhs",
                    r.gamma.len(),
                    r.gamma_rhs.len(),
                ));
            }
            for (l, row) in r.gamma.iter().enumerate() {
                if row.len() != products {
                    return Err(Error::dims(
                        format!("resources.Gamma[{l}]"),
                        products,
                        row.len(),
                    ));
                }
            }
            Some(ResourceConstraints {
                gamma: r.gamma.clone(),
                gamma_rhs: r.gamma_rhs.clone(),
            })
        }
        None => None,
    };

    Ok(ParsedInstance {
        instance,
        resources,
        raw_map,
        per_product,
        file,
    })
}

/// Parse a solution file with field-path diagnostics.
pub fn parse_solution(text: &str) -> Result<SolutionFile> {
    let file: SolutionFile = from_json(text)?;
    if file.schema_version != SCHEMA_VERSION {
        return Err(schema_err(
            "schema_version",
            format!(
                "unsupported version {} (this build reads {SCHEMA_VERSION})",
                file.schema_version
            ),
        ));
    }
    Ok(file)
}

// ---------------------------------------------------------------------------
// Pipeline helpers
// ---------------------------------------------------------------------------

/// Build the conic reformulation (with resource rows when present).
pub fn build_program(parsed: &ParsedInstance) -> Result<ReformProgram> {
    let base = match &parsed.instance {
        ChoiceInstance::Mnl(m) => reform::build_mnl(m)?,
        ChoiceInstance::Mc(m) => reform::build_mc(m)?,
        ChoiceInstance::Nl(m) => reform::build_nl(m)?,
    };
    match &parsed.resources {
        Some(rc) => reform::with_resources(&base, rc),
        None => Ok(base),
    }
}

/// Map a recovered solution's attributes into the coordinates the
/// instance file used (undo splitting).
fn user_coordinates(parsed: &ParsedInstance, x_model: &[Vec<f64>]) -> Vec<Vec<f64>> {
    match (&parsed.per_product, &parsed.instance) {
        (Some(model), ChoiceInstance::Nl(nl)) => feasibility::unsplit_point(model, nl, x_model),
        _ => x_model.to_vec(),
    }
}

/// Map user-coordinate attributes into the model's own coordinates
/// (apply splitting).
fn model_coordinates(parsed: &ParsedInstance, x_user: &[Vec<f64>]) -> Vec<Vec<f64>> {
    match (&parsed.per_product, &parsed.instance) {
        (Some(model), ChoiceInstance::Nl(nl)) => feasibility::split_point(model, nl, x_user),
        _ => x_user.to_vec(),
    }
}

// `u = x∘d` in every model: the programs weight attribute mass by product
// shares (the Markov-chain tightness base is the visit rate, but the mass
// itself multiplies `d`).

/// Expected attribute-row widths of `x`/`u` in file coordinates.
fn user_attr_dims(parsed: &ParsedInstance) -> Vec<usize> {
    match &parsed.per_product {
        Some(model) => model
            .nests
            .iter()
            .flat_map(|n| n.x_lower.iter().map(Vec::len))
            .collect(),
        None => parsed.instance.flat_box().0.iter().map(Vec::len).collect(),
    }
}

fn check_matrix_shape(name: &str, m: &[Vec<f64>], dims: &[usize]) -> Result<()> {
    if m.len() != dims.len() {
        return Err(Error::dims(name, dims.len(), m.len()));
    }
    for (j, (row, &want)) in m.iter().zip(dims).enumerate() {
        if row.len() != want {
            return Err(Error::dims(format!("{name}[{j}]"), want, row.len()));
        }
    }
    Ok(())
}

fn solver_stats(sol: &PrimalDualSolution) -> SolverStats {
    SolverStats {
        iterations: sol.iterations,
        primal_eq: sol.residuals.primal_eq,
        primal_ineq: sol.residuals.primal_ineq,
        worst_cone: sol.residuals.worst_cone,
        dual: sol.residuals.dual,
        gap_rel: sol.residuals.gap_rel,
    }
}

fn provenance(cfg: &SolverConfig) -> Provenance {
    Provenance {
        tool: format!("{} {}", env!("CARGO_PKG_NAME"), env!("CARGO_PKG_VERSION")),
        tol_gap: cfg.tol_gap,
        tol_feas: cfg.tol_feas,
        max_iter: cfg.max_iter,
    }
}

/// Assemble the solution file for an optimal solve.
pub fn solution_file(
    parsed: &ParsedInstance,
    rec: &RecoveredSolution,
    sol: &PrimalDualSolution,
    cfg: &SolverConfig,
) -> SolutionFile {
    let x_user = user_coordinates(parsed, &rec.x);
    let u: Vec<Vec<f64>> = x_user
        .iter()
        .zip(&rec.shares.product)
        .map(|(row, &d)| row.iter().map(|&v| v * d).collect())
        .collect();
    let y_raw = parsed
        .raw_map
        .as_ref()
        .map(|m| m.raw_from_adjusted(&x_user));
    SolutionFile {
        schema_version: SCHEMA_VERSION,
        status: "optimal".into(),
        objective: Some(rec.objective),
        x: Some(x_user),
        y_raw,
        shares: Some(SharesFile::from(&rec.shares)),
        u: Some(u),
        tightness_residuals: Some(rec.tightness_residuals.clone()),
        certificate_residual: None,
        solver: solver_stats(sol),
        provenance: provenance(cfg),
    }
}

/// Assemble the solution file for a certified non-optimal outcome.
fn certificate_file(status: &str, sol: &PrimalDualSolution, cfg: &SolverConfig) -> SolutionFile {
    let residual = match &sol.certificate {
        Some(Certificate::PrimalInfeasible { residual, .. })
        | Some(Certificate::Unbounded { residual, .. }) => Some(*residual),
        None => None,
    };
    SolutionFile {
        schema_version: SCHEMA_VERSION,
        status: status.into(),
        objective: None,
        x: None,
        y_raw: None,
        shares: None,
        u: None,
        tightness_residuals: None,
        certificate_residual: residual,
        solver: solver_stats(sol),
        provenance: provenance(cfg),
    }
}

/// Re-check a stored solution against its instance. Returns the report;
/// shape mismatches and missing fields are hard errors.
pub fn verify_solution(parsed: &ParsedInstance, file: &SolutionFile) -> Result<VerifyReport> {
    if file.status != "optimal" {
        return Err(Error::invariant(
            "status",
            format!(
                "only optimal solutions can be verified, got \"{}\"",
                file.status
            ),
        ));
    }
    let x_user = require(file.x.clone(), "x")?;
    let u = require(file.u.clone(), "u")?;
    let shares_file = require(file.shares.clone(), "shares")?;
    let objective = require(file.objective, "objective")?;

    let dims = user_attr_dims(parsed);
    check_matrix_shape("x", &x_user, &dims)?;
    check_matrix_shape("u", &u, &dims)?;
    let shares = MarketShares::from(&shares_file);
    if shares.product.len() != dims.len() {
        return Err(Error::dims(
            "shares.product",
            dims.len(),
            shares.product.len(),
        ));
    }

    let x_model = model_coordinates(parsed, &x_user);
    let (lower, upper) = parsed.instance.flat_box();
    let mut box_violation: f64 = 0.0;
    for (row, (lo, hi)) in x_model.iter().zip(lower.iter().zip(&upper)) {
        for (&v, (&l, &h)) in row.iter().zip(lo.iter().zip(hi)) {
            box_violation = box_violation.max(l - v).max(v - h);
        }
    }
    let box_violation = box_violation.max(0.0);

    let tightness = recover::tightness_from_shares(&parsed.instance, &shares, &u);
    let rec = RecoveredSolution {
        x: x_model,
        shares,
        objective,
        tightness_residuals: tightness,
        box_violation,
    };
    let report = roundtrip(parsed, &rec);

    // Informational: stored masses against re-evaluated shares.
    let u_residual = match parsed.instance.shares(&rec.x) {
        Ok(fresh) => x_user
            .iter()
            .zip(&u)
            .zip(&fresh.product)
            .flat_map(|((xr, ur), &d)| xr.iter().zip(ur).map(move |(&xv, &uv)| (uv - xv * d).abs()))
            .fold(0.0, f64::max),
        Err(_) => f64::INFINITY,
    };

    Ok(VerifyReport {
        share_residual: report.share_residual,
        tightness_residual: report.tightness_residual,
        box_violation: report.box_violation,
        objective_mismatch: report.objective_mismatch,
        u_residual,
        passed: report.worst() <= RoundtripReport::TOLERANCE,
    })
}

fn roundtrip(parsed: &ParsedInstance, rec: &RecoveredSolution) -> RoundtripReport {
    recover::roundtrip_check(&parsed.instance, rec)
}

/// Rebuild an adjusted-form instance file from a parsed instance
/// (pass-through for files that were already adjusted).
pub fn adjusted_file(parsed: &ParsedInstance) -> InstanceFile {
    if parsed.file.form == FormTag::Adjusted {
        return parsed.file.clone();
    }
    let mut out = InstanceFile {
        schema_version: SCHEMA_VERSION,
        model: parsed.file.model,
        form: FormTag::Adjusted,
        phi: None,
        psi: None,
        x_lower: None,
        x_upper: None,
        alpha: None,
        beta: None,
        margin_raw: None,
        cost_raw: None,
        y_lower: None,
        y_upper: None,
        lambda: None,
        rho: None,
        nests: None,
        shared_attr: None,
        resources: parsed.file.resources.clone(),
    };
    match &parsed.instance {
        ChoiceInstance::Mnl(m) => {
            out.phi = Some(m.phi.clone());
            out.psi = Some(m.psi.clone());
            out.x_lower = Some(m.x_lower.clone());
            out.x_upper = Some(m.x_upper.clone());
        }
        ChoiceInstance::Mc(m) => {
            out.phi = Some(m.phi.clone());
            out.psi = Some(m.psi.clone());
            out.x_lower = Some(m.x_lower.clone());
            out.x_upper = Some(m.x_upper.clone());
            out.lambda = Some(m.lambda.clone());
            out.rho = Some(m.rho.clone());
        }
        // Unreachable: nested-logit has no raw form, so it always takes
        // the pass-through branch above.
        ChoiceInstance::Nl(_) => {}
    }
    out
}

/// Summary printed by the `dual` command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DualSummary {
    pub model: String,
    pub variables: usize,
    pub rows: usize,
    pub cones: usize,
    pub nonnegative_variables: usize,
    /// Smallest interior cone margin of the strictly feasible point.
    pub strict_interior_margin: f64,
    /// Worst equality-row residual of the strict point.
    pub strict_row_residual: f64,
    /// Dual objective at the strict point (an upper bound on the optimum).
    pub strict_objective: f64,
}

/// Embed a logit instance as singleton nests with dissimilarity one — the
/// reduction under which the nested model reproduces plain logit — so the
/// nested dual machinery certifies logit instances too.
pub fn singleton_embedding(m: &MnlInstance) -> Result<NlInstance> {
    let nests = (0..m.product_count())
        .map(|j| Nest {
            gamma: 1.0,
            psi: vec![m.psi[j]],
            x_lower: vec![m.x_lower[j].clone()],
            x_upper: vec![m.x_upper[j].clone()],
        })
        .collect();
    NlInstance::new(nests, m.phi.clone())
}

/// Build the explicit dual program and its strictly feasible point.
pub fn dual_summary(parsed: &ParsedInstance) -> Result<DualSummary> {
    let rc = parsed.resources.as_ref();
    let (label, prog, point): (String, DualProgram, DualPoint) = match &parsed.instance {
        ChoiceInstance::Mc(m) => {
            let prog = dualcert::dualize_mc(m, rc);
            let point = dualcert::strict_dual_point_mc(m, rc)?;
            ("mc".into(), prog, point)
        }
        ChoiceInstance::Nl(m) => {
            let prog = dualcert::dualize_nl(m, rc);
            let point = dualcert::strict_dual_point_nl(m, rc)?;
            ("nl".into(), prog, point)
        }
        ChoiceInstance::Mnl(m) => {
            let nl = singleton_embedding(m)?;
            let prog = dualcert::dualize_nl(&nl, rc);
            let point = dualcert::strict_dual_point_nl(&nl, rc)?;
            ("mnl (singleton-nest embedding)".into(), prog, point)
        }
    };
    Ok(DualSummary {
        model: label,
        variables: prog.n_vars,
        rows: prog.rows.len(),
        cones: prog.cones.len(),
        nonnegative_variables: prog.nonneg.len(),
        strict_interior_margin: point.interior_margin,
        strict_row_residual: prog.max_row_residual(&point.values),
        strict_objective: prog.objective_value(&point.values),
    })
}

// ---------------------------------------------------------------------------
// Command-line front end
// ---------------------------------------------------------------------------

#[derive(Parser)]
#[command(
    name = "attropt",
    version,
    about = "Optimize product attributes under logit, Markov-chain, and nested-logit demand",
    after_help = "Exit codes: 0 success/optimal, 1 verification failed, 2 infeasible, \
                  3 unbounded, 4 input error, 5 numerical failure."
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Solve an instance and write a solution file
    Solve {
        /// Instance file (JSON)
        instance: PathBuf,
        /// Duality-gap and feasibility tolerance
        #[arg(long)]
        tol: Option<f64>,
        /// Iteration limit
        #[arg(long)]
        max_iter: Option<usize>,
        /// Write the solution here instead of stdout
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-check a stored solution against its instance
    Verify {
        instance: PathBuf,
        solution: PathBuf,
    },
    /// Compare the solver against the brute-force lattice oracle
    Oracle {
        instance: PathBuf,
        /// Lattice points per attribute dimension
        #[arg(long, default_value_t = 21)]
        grid: usize,
        /// Local refinement rounds (tenfold shrink each)
        #[arg(long, default_value_t = 2)]
        refine: usize,
    },
    /// Rewrite a raw-form instance in adjusted form
    Adjust {
        instance: PathBuf,
        /// Write the adjusted instance here instead of stdout
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Summarize the explicit dual program and its strict interior point
    Dual { instance: PathBuf },
}

/// Exit code for an error, per the contract in the module docs.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Schema { .. }
        | Error::Invariant { .. }
        | Error::NonPositiveBeta { .. }
        | Error::DimensionMismatch { .. }
        | Error::SharedMarginViolated { .. }
        | Error::NoSharedAttribute { .. }
        | Error::McBaseSystemDegenerate(_)
        | Error::Io(_)
        | Error::TooManyDims { .. }
        | Error::GridBudgetExceeded { .. } => 4,
        Error::OracleInfeasible => 2,
        Error::SingularSystem
        | Error::DegenerateShare { .. }
        | Error::DisaggregationInfeasible { .. }
        | Error::ConstructionFailed(_)
        | Error::NumericalFailure(_) => 5,
    }
}

fn read_file(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(Error::Io)
}

fn load_instance(path: &Path) -> Result<ParsedInstance> {
    parse_instance(&read_file(path)?)
}

/// Write a result to `--out` (with a stderr note) or stdout.
fn emit(
    text: &str,
    out_path: Option<&Path>,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Result<()> {
    match out_path {
        Some(p) => {
            std::fs::write(p, text).map_err(Error::Io)?;
            let _ = writeln!(err, "wrote {}", p.display());
        }
        None => {
            let _ = write!(out, "{text}");
        }
    }
    Ok(())
}

fn fail(err: &mut dyn Write, e: &Error) -> i32 {
    let _ = writeln!(err, "error: {e}");
    exit_code(e)
}

fn cmd_solve(
    instance: &Path,
    tol: Option<f64>,
    max_iter: Option<usize>,
    out_path: Option<&Path>,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> i32 {
    let run = || -> Result<(SolutionFile, i32)> {
        let parsed = load_instance(instance)?;
        let mut cfg = SolverConfig::default();
        if let Some(t) = tol {
            cfg.tol_gap = t;
            cfg.tol_feas = t;
        }
        if let Some(n) = max_iter {
            cfg.max_iter = n;
        }
        let prog = build_program(&parsed)?;
        let sol = conic::solve(&prog.to_conic()?, &cfg);
        match sol.status {
            SolveStatus::Optimal => {
                let rec = recover::recover(&parsed.instance, &prog, &sol)?;
                Ok((solution_file(&parsed, &rec, &sol, &cfg), 0))
            }
            SolveStatus::Infeasible => Ok((certificate_file("infeasible", &sol, &cfg), 2)),
            SolveStatus::Unbounded => Ok((certificate_file("unbounded", &sol, &cfg), 3)),
            SolveStatus::MaxIterations => Err(Error::NumericalFailure(format!(
                "no certified outcome within {} iterations",
                cfg.max_iter
            ))),
            SolveStatus::NumericalFailure => Err(Error::NumericalFailure(
                "the Newton system degenerated beyond recovery".into(),
            )),
        }
    };
    match run() {
        Ok((file, code)) => {
            match to_canonical_json(&file).and_then(|t| emit(&t, out_path, out, err)) {
                Ok(()) => code,
                Err(e) => fail(err, &e),
            }
        }
        Err(e) => fail(err, &e),
    }
}

fn cmd_verify(instance: &Path, solution: &Path, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let run = || -> Result<VerifyReport> {
        let parsed = load_instance(instance)?;
        let file = parse_solution(&read_file(solution)?)?;
        verify_solution(&parsed, &file)
    };
    match run() {
        Ok(report) => match to_canonical_json(&report) {
            Ok(text) => {
                let _ = write!(out, "{text}");
                if report.passed {
                    0
                } else {
                    let _ = writeln!(err, "verification failed: worst residual exceeds 1e-6");
                    1
                }
            }
            Err(e) => fail(err, &e),
        },
        Err(e) => fail(err, &e),
    }
}

/// Comparison as printed by the `oracle` command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct OracleReport {
    outcome: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    solver_objective: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    oracle_objective: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    objective_difference: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    x_difference: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    evaluations: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    final_resolution: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    detail: Option<String>,
}

fn cmd_oracle(
    instance: &Path,
    grid: usize,
    refine: usize,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> i32 {
    let run = || -> Result<Comparison> {
        let parsed = load_instance(instance)?;
        oracle::compare(
            &parsed.instance,
            parsed.resources.as_ref(),
            &SolverConfig::default(),
            &GridSpec {
                points_per_dim: grid,
                refine_rounds: refine,
            },
        )
    };
    match run() {
        Ok(Comparison::BothOptimal(r)) => {
            let report = OracleReport {
                outcome: if r.objective_agrees {
                    "agreement".into()
                } else {
                    "objective mismatch".into()
                },
                solver_objective: Some(r.solver_objective),
                oracle_objective: Some(r.oracle_objective),
                objective_difference: Some(r.objective_difference),
                x_difference: Some(r.x_difference),
                evaluations: Some(r.oracle.evaluations),
                final_resolution: Some(r.oracle.final_resolution),
                detail: None,
            };
            if let Ok(text) = to_canonical_json(&report) {
                let _ = write!(out, "{text}");
            }
            if r.objective_agrees {
                0
            } else {
                let _ = writeln!(err, "solver and oracle objectives disagree beyond 1e-3");
                5
            }
        }
        Ok(Comparison::BothInfeasible) => {
            let report = OracleReport {
                outcome: "both infeasible".into(),
                solver_objective: None,
                oracle_objective: None,
                objective_difference: None,
                x_difference: None,
                evaluations: None,
                final_resolution: None,
                detail: None,
            };
            if let Ok(text) = to_canonical_json(&report) {
                let _ = write!(out, "{text}");
            }
            2
        }
        Ok(Comparison::Disagreement {
            solver_status,
            oracle_error,
        }) => {
            let report = OracleReport {
                outcome: "disagreement".into(),
                solver_objective: None,
                oracle_objective: None,
                objective_difference: None,
                x_difference: None,
                evaluations: None,
                final_resolution: None,
                detail: Some(format!(
                    "solver status {solver_status:?}, oracle {}",
                    oracle_error.as_deref().unwrap_or("found an optimum")
                )),
            };
            if let Ok(text) = to_canonical_json(&report) {
                let _ = write!(out, "{text}");
            }
            let _ = writeln!(err, "solver and oracle disagree on feasibility");
            5
        }
        Err(e) => fail(err, &e),
    }
}

fn cmd_adjust(
    instance: &Path,
    out_path: Option<&Path>,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> i32 {
    let run = || -> Result<String> {
        let parsed = load_instance(instance)?;
        to_canonical_json(&adjusted_file(&parsed))
    };
    match run().and_then(|t| emit(&t, out_path, out, err)) {
        Ok(()) => 0,
        Err(e) => fail(err, &e),
    }
}

fn cmd_dual(instance: &Path, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let run = || -> Result<DualSummary> {
        let parsed = load_instance(instance)?;
        dual_summary(&parsed)
    };
    match run().and_then(|s| to_canonical_json(&s)) {
        Ok(text) => {
            let _ = write!(out, "{text}");
            0
        }
        Err(e) => fail(err, &e),
    }
}

/// Run the command line against explicit streams and return the exit
/// code. The binary is a thin wrapper over this, and tests drive it
/// directly.
pub fn run<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let rendered = e.render().to_string();
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(out, "{rendered}");
                return 0;
            }
            let _ = write!(err, "{rendered}");
            return 4;
        }
    };
    match cli.cmd {
        Cmd::Solve {
            instance,
            tol,
            max_iter,
            out: out_path,
        } => cmd_solve(&instance, tol, max_iter, out_path.as_deref(), out, err),
        Cmd::Verify { instance, solution } => cmd_verify(&instance, &solution, out, err),
        Cmd::Oracle {
            instance,
            grid,
            refine,
        } => cmd_oracle(&instance, grid, refine, out, err),
        Cmd::Adjust {
            instance,
            out: out_path,
        } => cmd_adjust(&instance, out_path.as_deref(), out, err),
        Cmd::Dual { instance } => cmd_dual(&instance, out, err),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn mnl_singleton_json() -> String {
        r#"{
            "schema_version": 1,
            "model": "mnl",
            "form": "adjusted",
            "phi": [[1.0]],
            "psi": [0.0],
            "x_lower": [[1.0]],
            "x_upper": [[1.0]]
        }"#
        .to_string()
    }

    #[test]
    fn minimal_adjusted_file_parses() {
        let parsed = parse_instance(&mnl_singleton_json()).unwrap();
        let ChoiceInstance::Mnl(m) = &parsed.instance else {
            panic!("wrong model");
        };
        assert_eq!(m.product_count(), 1);
        assert!(parsed.resources.is_none());
        assert!(parsed.raw_map.is_none());
    }

    #[test]
    fn negative_margin_is_an_invariant_error() {
        let text = mnl_singleton_json().replace("[[1.0]],", "[[-1.0]],");
        match parse_instance(&text) {
            Err(Error::Invariant { field, .. }) => assert!(field.contains("phi")),
            other => panic!("expected invariant error, got {other:?}"),
        }
    }

    #[test]
    fn negative_lower_bound_rejected_for_markov_chain() {
        let text = r#"{
            "schema_version": 1,
            "model": "mc",
            "form": "adjusted",
            "phi": [[1.0]],
            "psi": [0.0],
            "x_lower": [[-0.5]],
            "x_upper": [[1.0]],
            "lambda": [1.0],
            "rho": [[0.0]]
        }"#;
        match parse_instance(text) {
            Err(Error::Invariant { field, .. }) => assert!(field.contains("x_lower")),
            other => panic!("expected invariant error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_fields_carry_their_path() {
        let text = mnl_singleton_json().replace("\"phi\"", "\"bogus\": 1, \"phi\"");
        match parse_instance(&text) {
            Err(Error::Schema { message, .. }) => assert!(message.contains("bogus")),
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    #[test]
    fn wrong_schema_version_rejected() {
        let text = mnl_singleton_json().replace("\"schema_version\": 1", "\"schema_version\": 2");
        match parse_instance(&text) {
            Err(Error::Schema { path, .. }) => assert_eq!(path, "schema_version"),
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    #[test]
    fn raw_nested_logit_rejected() {
        let text = r#"{
            "schema_version": 1,
            "model": "nl",
            "form": "raw",
            "nests": []
        }"#;
        match parse_instance(text) {
            Err(Error::Schema { path, .. }) => assert_eq!(path, "form"),
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    #[test]
    fn stray_model_fields_rejected() {
        // lambda on an mnl file.
        let text = mnl_singleton_json().replace("\"phi\"", "\"lambda\": [1.0], \"phi\"");
        match parse_instance(&text) {
            Err(Error::Schema { path, .. }) => assert_eq!(path, "lambda"),
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    #[test]
    fn canonical_serialization_is_value_identical() {
        let parsed = parse_instance(&mnl_singleton_json()).unwrap();
        let once = to_canonical_json(&parsed.file).unwrap();
        let again = to_canonical_json(&parse_instance(&once).unwrap().file).unwrap();
        assert_eq!(once, again);
        // Keys are sorted.
        let f = once.find("\"form\"").unwrap();
        let m = once.find("\"model\"").unwrap();
        let s = once.find("\"schema_version\"").unwrap();
        assert!(f < m && m < s);
    }

    #[test]
    fn raw_form_adjusts_on_parse() {
        let text = r#"{
            "schema_version": 1,
            "model": "mnl",
            "form": "raw",
            "alpha": [0.5],
            "beta": [[2.0]],
            "margin_raw": [[0.5]],
            "cost_raw": [0.1],
            "y_lower": [[0.0]],
            "y_upper": [[2.0]]
        }"#;
        let parsed = parse_instance(text).unwrap();
        let ChoiceInstance::Mnl(m) = &parsed.instance else {
            panic!("wrong model");
        };
        // phi = beta·margin_raw = 1.0; x = beta·y − alpha/K ∈ [−0.5, 3.5].
        assert_abs_diff_eq!(m.phi[0][0], 1.0);
        assert_abs_diff_eq!(m.x_lower[0][0], -0.5);
        assert_abs_diff_eq!(m.x_upper[0][0], 3.5);
        assert!(parsed.raw_map.is_some());
        // And the adjusted rewrite carries the same numbers.
        let adj = adjusted_file(&parsed);
        assert_eq!(adj.form, FormTag::Adjusted);
        assert_abs_diff_eq!(adj.phi.unwrap()[0][0], 1.0);
    }

    #[test]
    fn per_product_nests_split_on_parse() {
        let text = r#"{
            "schema_version": 1,
            "model": "nl",
            "form": "adjusted",
            "shared_attr": 0,
            "nests": [
                {
                    "gamma": 0.5,
                    "phi": [[1.0, 0.7], [1.0, 1.3]],
                    "psi": [0.1, 0.2],
                    "x_lower": [[0.0, 0.0], [0.0, 0.0]],
                    "x_upper": [[2.0, 2.0], [2.0, 2.0]]
                }
            ]
        }"#;
        let parsed = parse_instance(text).unwrap();
        let ChoiceInstance::Nl(nl) = &parsed.instance else {
            panic!("wrong model");
        };
        assert!(nl.split.is_some());
        assert!(parsed.per_product.is_some());
        // Split instances widen the attribute space beyond the original 2.
        assert!(nl.attr_count() > 2);
    }

    #[test]
    fn mixed_nest_forms_rejected() {
        let text = r#"{
            "schema_version": 1,
            "model": "nl",
            "form": "adjusted",
            "nests": [
                {"gamma": 1.0, "rho_shared": [1.0], "psi": [0.0],
                 "x_lower": [[0.0]], "x_upper": [[1.0]]},
                {"gamma": 1.0, "phi": [[1.0]], "psi": [0.0],
                 "x_lower": [[0.0]], "x_upper": [[1.0]]}
            ]
        }"#;
        match parse_instance(text) {
            Err(Error::Schema { path, .. }) => assert_eq!(path, "nests"),
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    #[test]
    fn resource_rows_validated_against_product_count() {
        let text = mnl_singleton_json().replace(
            "\"phi\"",
            "\"resources\": {\"Gamma\": [[1.0, 1.0]], \"gamma_rhs\": [0.1]}, \"phi\"",
        );
        assert!(matches!(
            parse_instance(&text),
            Err(Error::DimensionMismatch { .. })
        ));
    }
}
