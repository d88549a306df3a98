//! Wide Area Synchronous Grids as shared failure zones for Internet
//! infrastructure.
//!
//! The crate maps located Internet components and router-level links onto
//! synchronous power grids, evaluates grid-outage scenarios, measures
//! inter-grid connectivity loss with a Gomory-Hu tree, and places
//! deployments across grid-disjoint sites with an exact 0-1 program.

// `!(x >= 0.0)` is deliberate: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cli;
pub mod connectivity;
pub mod failure;
pub mod geo;
pub mod grid_model;
pub mod ingest;
pub mod overlap;
pub mod placement;
