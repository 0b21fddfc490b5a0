//! An SSA optimizer for a small integer IR, built around partial redundancy
//! elimination by lazy code motion over value-number-indexed bit vector
//! slots, plus the normalization passes that make the motion profitable and
//! a differential interpreter that checks behavior preservation and counts
//! eliminated work.

pub mod cfg;
pub mod dataflow;
pub mod dot;
pub mod interp;
pub mod ir;
pub mod lcm;
pub mod normalize;
pub mod pipeline;
pub mod vn;
