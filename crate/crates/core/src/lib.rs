//! Private authentication over correlated keys.
//!
//! Two regimes are implemented. The finite regime hides a secret as the
//! constant term of a polynomial over GF(q^L) and hands each user one point
//! of it ([`finite`]). The asymptotic regime hides a codeword index inside a
//! random binning of typical sequences ([`binning`]). [`sim`] drives both
//! through seeded Monte Carlo experiments and [`adversary`] supplies the
//! attackers.

pub mod adversary;
pub mod binning;
pub mod field;
pub mod finite;
pub mod info;
pub mod poly;
pub mod sim;
pub mod streams;

pub use field::{make_field, FieldCtx, FieldElem};
pub use poly::EvalPoint;
