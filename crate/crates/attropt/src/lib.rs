//! Product-line optimization under discrete-choice demand.
//!
//! This crate solves constrained multi-attribute product-optimization
//! problems: choose attribute levels (price, quality, delivery time, …) for
//! a line of products so that expected profit is maximized, when customers
//! choose among the products according to a discrete choice model. Three
//! demand systems are supported:
//!
//! * **MNL** — the multinomial logit model,
//! * **MC** — the Markov-chain choice model (arrival mass + transition
//!   weights), and
//! * **NL** — two-level nested logit with non-overlapping nests.
//!
//! The profit-maximization problem is nonconvex as stated, but an exact
//! market-share reformulation turns each variant into an exponential-cone
//! program. The pipeline is:
//!
//! 1. [`model`] — instances and share/profit evaluators,
//! 2. [`feasibility`] — visit-system classification, default feasible
//!    points, shared-margin validation, attribute splitting,
//! 3. [`reform`] — assembly of the conic programs,
//! 4. [`conic`] — a built-in exponential-cone interior-point solver
//!    (homogeneous self-dual embedding),
//! 5. [`recover`] — mapping conic solutions back to attribute vectors,
//! 6. [`dualcert`] — explicit dual programs and strictly feasible dual
//!    points as independent optimality certificates,
//! 7. [`oracle`] — a brute-force lattice oracle for validation,
//! 8. [`cli`] — JSON file formats and the command-line front end.
//!
//! Each major capability has a runnable demonstration under `examples/`;
//! start with `cargo run --example mnl_pricing`.

pub mod cli;
pub mod conic;
pub mod dualcert;
pub mod error;
pub mod feasibility;
pub mod model;
pub mod oracle;
pub mod recover;
pub mod reform;

pub use error::{Error, Result};
