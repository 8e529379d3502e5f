//! Exact point counting on three homogeneous varieties, together with the
//! combinatorial growth predictor and the symbolic chart calculus used to
//! derive its inputs.

pub mod census;
pub mod chartforms;
pub mod clemens;
pub mod enumerators;
pub mod heights;
pub mod lattice;
pub mod weights;
