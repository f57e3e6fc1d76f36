//! Computational Lagrangian-contact (LC) geometry.
//!
//! The crate is organized around defining functions `f_ij(x, u, p)` of an LC
//! structure in adapted coordinates. From those it assembles the explicit
//! representative Fefferman metric on `M x R_s`, integrates chains and
//! null-chains as projected null-geodesics, cross-checks chains as geodesics
//! of the associated Kropina metric, and detects structures induced by
//! projective connections. A separate module does exact (rational) linear
//! algebra in the homogeneous para-Hermitian model.
//!
//! Modules:
//!
//! - [`expr`]: arithmetic expression trees with parsing, evaluation and exact
//!   symbolic differentiation; every metric coefficient is one of these.
//! - [`model`]: the para-Hermitian space `R^{n+2,n+2}`, para-complex null
//!   lines, model chains/null-chains and two-point connectivity, all over
//!   exact rationals.
//! - [`lc`]: LC structures via defining functions; frames, coframes,
//!   integrability, tangent classification, flat embedding.
//! - [`fefferman`]: metric fields and the Fefferman / Patterson-Walker /
//!   projective-Fefferman builders.
//! - [`curves`]: Christoffel symbols, adaptive null-geodesic integration,
//!   chains, null-chains, Kropina values and the dimension-3 Euler-Lagrange
//!   system with shooting.
//! - [`projective`]: the projective <-> LC dictionary (cubic defining
//!   functions and Christoffel recovery).

pub mod expr;
pub mod linalg;
pub mod model;

pub mod lc;

pub mod fefferman;

pub mod curves;

pub mod projective;

pub use expr::{Expr, ExprError, VarSet};
pub use fefferman::MetricField;
pub use curves::{IntegratorConfig, Trajectory};
pub use projective::ChristoffelField;
pub use lc::{LcStructure, PointM};



