//! Partial redundancy elimination by lazy code motion over value numbers.
//!
//! The pass in order: split critical edges so insertion points always exist,
//! number values so lexically different but provably equal expressions share
//! an identity, clean up straight-line repeats, give bit vector slots to the
//! numbers that could gain from motion, run the bit vector analyses, then
//! rewrite: one stack slot per moved number, provider clones + stores at
//! insert points, loads at replace points.
//!
//! The value travels through a stack slot rather than SSA names because
//! inserted stores and the loads they feed often have no dominance relation
//! (a load can be reached by different stores along different paths).
//! Slot traffic is plain `alloca`/`store`/`load` in the entry block and
//! straight-line code, exactly the shape the store-to-load promotion pass
//! turns back into SSA with phis; running it after this pass leaves no trace
//! of the slots.

mod analyses;
mod transform;

pub use analyses::{
    ant_spec, avail_spec, compute_local_properties, delay_spec, earliest, iso_spec,
    run_lcm_analyses, LcmSets, LocalProps,
};
pub use transform::{apply_insert_replace, find_provider, local_cse};

use crate::cfg::{analyze_cfg, find_natural_loops, CfgInfo, LoopInfo};
use crate::dataflow::NonConvergence;
use crate::ir::{Function, Instr};
use crate::normalize::split_critical_edges;
use crate::vn::{assign_value_numbers, ValueTable, Vn};
use std::collections::BTreeMap;
use std::fmt;

/// Which value numbers own a bit vector slot. A number with a single
/// occurrence outside every loop cannot gain from motion, so it gets no
/// slot; most numbers are such, which keeps the vectors narrow.
#[derive(Debug, Clone, Default)]
pub struct SlotMap {
    slot_of: BTreeMap<Vn, usize>,
    vn_of_slot: Vec<Vn>,
}

impl SlotMap {
    pub fn width(&self) -> usize {
        self.vn_of_slot.len()
    }

    pub fn slot_of(&self, v: Vn) -> Option<usize> {
        self.slot_of.get(&v).copied()
    }

    pub fn vn_of_slot(&self, s: usize) -> Vn {
        self.vn_of_slot[s]
    }

    /// (slot, number) pairs in slot order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, Vn)> + '_ {
        self.vn_of_slot.iter().copied().enumerate()
    }
}

/// Slots for numbers with several occurrences, or with one occurrence that
/// sits inside a loop (the loop-invariant hoisting case). Slots are dense in
/// value number order.
pub fn allocate_slots(f: &Function, table: &ValueTable, loops: &LoopInfo) -> SlotMap {
    let mut sm = SlotMap::default();
    for v in table.candidate_vns() {
        let occs = table.occurrences(v);
        let worth = match occs.len() {
            0 => false,
            1 => {
                let (bi, _) = f.def_site(&occs[0]).expect("occurrence has a definition");
                loops.in_any_loop(bi)
            }
            _ => true,
        };
        if worth {
            sm.slot_of.insert(v, sm.vn_of_slot.len());
            sm.vn_of_slot.push(v);
        }
    }
    sm
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InsertPos {
    AfterPhis,
    BeforeTerminator,
}

impl fmt::Display for InsertPos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InsertPos::AfterPhis => write!(f, "after-phis"),
            InsertPos::BeforeTerminator => write!(f, "before-terminator"),
        }
    }
}

/// A computation the rewrite added: the provider clone as inserted, and
/// where. An OUT-insertion that pairs with an OUT-replacement sits directly
/// before the replaced occurrence rather than at the terminator; it is
/// reported as before-terminator, its effective position.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Insertion {
    pub block: String,
    pub pos: InsertPos,
    pub vn: Vn,
    pub provider: Instr,
}

/// An occurrence rewritten into a load, keeping its result name.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Replacement {
    pub name: String,
    pub vn: Vn,
    pub slot: String,
}

/// What one run of the pass did to one function.
#[derive(Debug, Clone, Default)]
pub struct PreReport {
    pub insertions: Vec<Insertion>,
    pub replacements: Vec<Replacement>,
    /// Numbers the analyses wanted to move but no occurrence could provide
    /// at some insertion point; left untouched.
    pub skipped_vns: Vec<Vn>,
    pub lcse_removed: usize,
    /// Slot count and the number count it was carved from.
    pub width: usize,
    pub max_vn: u32,
}

impl PreReport {
    /// Slot count over numbers handed out: how much the allocation policy
    /// compresses the vectors.
    pub fn width_ratio(&self) -> f64 {
        if self.max_vn == 0 {
            0.0
        } else {
            self.width as f64 / f64::from(self.max_vn)
        }
    }
}

/// Everything the analyses computed, kept around for dumps, statistics, and
/// the rewrite itself.
pub struct LcmAnalysis {
    pub cfg: CfgInfo,
    pub loops: LoopInfo,
    pub table: ValueTable,
    pub slots: SlotMap,
    pub sets: LcmSets,
    pub lcse_removed: usize,
    pub split_count: usize,
}

/// Prepare a function and run every analysis, stopping short of the rewrite.
/// Mutates `f`: splits critical edges, folds while numbering, removes local
/// repeats.
pub fn analyze(f: &mut Function) -> Result<LcmAnalysis, NonConvergence> {
    let split_count = split_critical_edges(f);
    let cfg = analyze_cfg(f);
    let loops = find_natural_loops(f, &cfg);
    let mut table = assign_value_numbers(f, &cfg);
    let lcse_removed = local_cse(f, &mut table);
    let slots = allocate_slots(f, &table, &loops);
    let locals = compute_local_properties(f, &table, &slots);
    let sets = run_lcm_analyses(&cfg, &locals)?;
    Ok(LcmAnalysis {
        cfg,
        loops,
        table,
        slots,
        sets,
        lcse_removed,
        split_count,
    })
}

/// The whole pass: analyses plus rewrite.
pub fn pre_pass(f: &mut Function) -> Result<(LcmAnalysis, PreReport), NonConvergence> {
    let a = analyze(f)?;
    let report = apply_insert_replace(f, &a);
    Ok((a, report))
}
