//! Function+Data Flow (FDF): a dataflow language for machine-learning
//! pipelines in which learned functions travel along edges like data.
//!
//! The passes run in this order: [`textfmt::parse`] → [`ir::validate_structure`]
//! → [`graph::build_graph`] / [`graph::check_well_formed`] → [`typing::propagate`]
//! → [`engine::run`]. [`check::check_source`] bundles the static passes.

// `!(x >= 0.0)` deliberately rejects NaN along with negatives.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod casestudies;
pub mod check;
pub mod cli;
pub mod diag;
pub mod dot;
pub mod engine;
pub mod graph;
pub mod ir;
pub mod library;
pub mod mlkit;
pub mod store;
pub mod textfmt;
pub mod typing;
