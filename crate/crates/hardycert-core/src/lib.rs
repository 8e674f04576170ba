//! Numerical certification toolkit for weighted Hardy-type inequalities
//! ‖Σ_k a_k(x)∫₀ˣ tᵏ f(t)dt‖_{q,v} ≤ c·‖f‖_{p,u} on (0, ∞), with
//! applications to differential operators on weighted Sobolev spaces.
//!
//! The crate is organized around the pipeline
//!
//! * [`expr`] — the expression language weights are written in,
//! * [`quad`] — adaptive quadrature and weighted norms,
//! * [`criteria`] — sup-over-r constants with finite/infinite verdicts,
//! * [`extremal`] — extremal polynomials, sharp distances, flat functions,
//! * [`opnorm`] — discretized operators and norm lower bounds,
//! * [`sobolev`] — criteria for differential operators on weighted
//!   Sobolev spaces,
//! * [`report`] — serializable reports and curve dumps.

pub mod expr;
pub mod extremal;
pub mod opnorm;
pub mod criteria;
pub mod quad;
pub mod sobolev;

pub use expr::{parse, DiffError, DomainError, DomainErrorKind, Expr, ParseError, Piece};
pub use quad::{
    integrate_finite, integrate_finite_split, integrate_tail, integrate_tail_split, lq_norm,
    QuadConfig, QuadResult, QuadStatus, Region,
};
