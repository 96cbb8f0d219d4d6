//! Exact arithmetic, renormalization and periodicity decisions for the
//! discretized rotations `0 <= a_{k-1} + lambda a_k + a_{k+1} < 1` with
//! quadratic `lambda`.

pub mod cases;
pub mod certify;
pub mod dynamics;
pub mod expr;
pub mod lattice;
pub mod qfield;
pub mod registry;
pub mod subst;
pub mod renorm;
pub mod sample;
