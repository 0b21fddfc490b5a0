//! CFG-shaping passes that surround code motion: critical-edge splitting,
//! loop rotation, stack-slot promotion, and cleanup.

mod mem2reg;
mod rotate;
mod simplify;
mod split_crit;

pub use mem2reg::mem2reg_promote;
pub use rotate::rotate_loops;
pub use simplify::simplify_cfg;
pub use split_crit::split_critical_edges;
