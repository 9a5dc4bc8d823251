#![allow(clippy::neg_cmp_op_on_partial_ord)]

//! Replicated experiments, result files and configuration parsing on top of
//! [`cdnsim_core`].

pub mod harness;
pub mod params;
pub mod report;
pub mod validate;
