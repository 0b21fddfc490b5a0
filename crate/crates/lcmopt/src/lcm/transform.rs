//! Local CSE, provider search, and the insert/replace rewrite.
//!
//! The rewrite routes each moved value through its own stack slot: a clone
//! of some original occurrence (the provider) computes the value at every
//! insert point and stores it; every replaced occurrence becomes a load
//! keeping its old name, so its uses follow along without rewiring. A
//! surviving occurrence whose number is loaded elsewhere stores its own
//! result as well; together with the inserted stores that covers every load
//! on every path, which a must-reach check at the end asserts.
//!
//! Provider search can fail: value numbering proves two expressions equal
//! without their operand names being in scope at the chosen insert point
//! (e.g. the operand is a phi of the two branch-local copies). In that case
//! the whole number is skipped, insertions and replacements both, since a
//! load without its stores would be unsound.

use crate::cfg::CfgInfo;
use crate::dataflow::BitVector;
use crate::ir::{DefPos, FreshNames, Function, Instr, Operand};
use crate::lcm::{InsertPos, Insertion, LcmAnalysis, PreReport, Replacement};
use crate::vn::{ValueTable, Vn};
use std::collections::BTreeMap;

/// Delete within-block repeats of a value number, rewiring uses to the first
/// occurrence. Straight-line cleanup so the global analyses can assume at
/// most one occurrence per (block, number).
pub fn local_cse(f: &mut Function, table: &mut ValueTable) -> usize {
    let mut removed = 0;
    for bi in 0..f.blocks.len() {
        let mut first: BTreeMap<Vn, String> = BTreeMap::new();
        let mut i = 0;
        while i < f.blocks[bi].body.len() {
            let ins = &f.blocks[bi].body[i];
            let vn = ins
                .is_candidate()
                .then(|| ins.result().and_then(|r| table.vn_of_name(r)))
                .flatten();
            let Some(v) = vn else {
                i += 1;
                continue;
            };
            let r = ins.result().expect("candidates have results").to_string();
            match first.get(&v) {
                Some(keep) => {
                    let keep = keep.clone();
                    f.blocks[bi].body.remove(i);
                    f.replace_uses(&r, &Operand::Name(keep));
                    table.remove_occurrence(v, &r);
                    removed += 1;
                }
                None => {
                    first.insert(v, r);
                    i += 1;
                }
            }
        }
    }
    removed
}

/// The first surviving occurrence of `v` (reverse postorder) whose operands
/// are all in scope at the insertion point: literals, parameters, or names
/// whose definition precedes the point on every path.
pub fn find_provider(
    f: &Function,
    cfg: &CfgInfo,
    table: &ValueTable,
    v: Vn,
    block: usize,
    pos: InsertPos,
) -> Option<Instr> {
    table.occurrences(v).iter().find_map(|occ| {
        let (ob, op) = f.def_site(occ)?;
        let ins = f.instr_at(ob, op);
        ins.operands()
            .iter()
            .all(|x| operand_in_scope(f, cfg, x, block, pos))
            .then(|| ins.clone())
    })
}

fn operand_in_scope(
    f: &Function,
    cfg: &CfgInfo,
    x: &Operand,
    block: usize,
    pos: InsertPos,
) -> bool {
    let Operand::Name(n) = x else { return true };
    if f.is_param(n) {
        return true;
    }
    match f.def_site(n) {
        Some((db, _)) if db != block => cfg.dominates(db, block),
        // Same block: before the terminator everything precedes the point,
        // right after the phis only the phis do.
        Some((_, dp)) => match pos {
            InsertPos::AfterPhis => matches!(dp, DefPos::Phi(_)),
            InsertPos::BeforeTerminator => true,
        },
        None => false,
    }
}

/// One slot's resolved rewrite, planned entirely against the pre-rewrite
/// function.
struct SlotPlan {
    vn: Vn,
    slot_name: String,
    /// Clone + position for each insert bit; relocated entries name the
    /// occurrence they precede instead of a block position.
    inserts: Vec<(usize, InsertPos, Instr)>,
    /// Occurrence names rewritten to loads (REPLACEIN ∪ REPLACEOUT bits).
    replaced: Vec<String>,
    /// Replaced XCOMP occurrences that also carry an INSERTOUT bit: the
    /// insertion moves to just before the occurrence, which provides itself.
    local_insert_before: Vec<String>,
    /// Surviving occurrences that must store their result for loads elsewhere.
    companions: Vec<String>,
}

/// Rewrite the function per the insert/replace sets. Loads keep the replaced
/// occurrence's name; stores come from inserted provider clones and from
/// surviving occurrences of loaded numbers. Numbers with no resolvable
/// provider at some insert point are skipped wholesale.
pub fn apply_insert_replace(f: &mut Function, a: &LcmAnalysis) -> PreReport {
    let sets = &a.sets;
    let mut fresh = FreshNames::for_function(f);
    let mut report = PreReport {
        lcse_removed: a.lcse_removed,
        width: a.slots.width(),
        max_vn: a.table.max_vn(),
        ..PreReport::default()
    };

    // Plan every slot against the unmodified function.
    let mut plans: Vec<SlotPlan> = Vec::new();
    'slots: for (s, v) in a.slots.iter() {
        // The unique surviving occurrence per block, if any.
        let mut occ_in: BTreeMap<usize, &str> = BTreeMap::new();
        for occ in a.table.occurrences(v) {
            let (ob, _) = f.def_site(occ).expect("occurrence has a definition");
            let prev = occ_in.insert(ob, occ);
            debug_assert!(prev.is_none(), "local CSE left duplicate occurrences");
        }

        let mut plan = SlotPlan {
            vn: v,
            slot_name: String::new(),
            inserts: Vec::new(),
            replaced: Vec::new(),
            local_insert_before: Vec::new(),
            companions: Vec::new(),
        };
        for &b in &a.cfg.rpo {
            if sets.replacein[b].get(s) || sets.replaceout[b].get(s) {
                plan.replaced.push(occ_in[&b].to_string());
            }
            if sets.insertin[b].get(s) {
                match find_provider(f, &a.cfg, &a.table, v, b, InsertPos::AfterPhis) {
                    Some(p) => plan.inserts.push((b, InsertPos::AfterPhis, p)),
                    None => {
                        report.skipped_vns.push(v);
                        continue 'slots;
                    }
                }
            }
            if sets.insertout[b].get(s) {
                if sets.replaceout[b].get(s) {
                    // The value is wanted past an occurrence that computes it
                    // at the block's end; store right there, from itself.
                    plan.local_insert_before.push(occ_in[&b].to_string());
                } else {
                    match find_provider(f, &a.cfg, &a.table, v, b, InsertPos::BeforeTerminator) {
                        Some(p) => plan.inserts.push((b, InsertPos::BeforeTerminator, p)),
                        None => {
                            report.skipped_vns.push(v);
                            continue 'slots;
                        }
                    }
                }
            }
        }
        if plan.inserts.is_empty()
            && plan.local_insert_before.is_empty()
            && plan.replaced.is_empty()
        {
            continue;
        }
        if !plan.replaced.is_empty() {
            for occ in a.table.occurrences(v) {
                if !plan.replaced.iter().any(|r| r == occ) {
                    plan.companions.push(occ.to_string());
                }
            }
        }
        plan.slot_name = fresh.value("slot");
        plans.push(plan);
    }

    // One alloca per touched slot, ahead of everything in the entry block.
    let allocas: Vec<Instr> = plans
        .iter()
        .map(|p| Instr::Alloca {
            result: p.slot_name.clone(),
        })
        .collect();

    // Fold the plans into per-block and per-occurrence edits.
    let mut at_start: BTreeMap<usize, Vec<Instr>> = BTreeMap::new();
    let mut at_end: BTreeMap<usize, Vec<Instr>> = BTreeMap::new();
    enum OccEdit {
        Replace { slot: String },
        StoreSelfThenReplace { slot: String },
        Companion { slot: String },
    }
    let mut occ_edits: BTreeMap<String, OccEdit> = BTreeMap::new();
    for plan in &plans {
        let slot = || plan.slot_name.clone();
        for (b, pos, provider) in &plan.inserts {
            let name = fresh.value("pre");
            let mut clone = provider.clone();
            set_result(&mut clone, &name);
            report.insertions.push(Insertion {
                block: f.blocks[*b].label.clone(),
                pos: *pos,
                vn: plan.vn,
                provider: clone.clone(),
            });
            let store = Instr::Store {
                value: Operand::Name(name),
                addr: Operand::Name(slot()),
            };
            let dest = match pos {
                InsertPos::AfterPhis => at_start.entry(*b).or_default(),
                InsertPos::BeforeTerminator => at_end.entry(*b).or_default(),
            };
            dest.push(clone);
            dest.push(store);
        }
        for occ in &plan.local_insert_before {
            occ_edits.insert(occ.clone(), OccEdit::StoreSelfThenReplace { slot: slot() });
        }
        for occ in &plan.replaced {
            occ_edits
                .entry(occ.clone())
                .or_insert(OccEdit::Replace { slot: slot() });
            report.replacements.push(Replacement {
                name: occ.clone(),
                vn: plan.vn,
                slot: slot(),
            });
        }
        for occ in &plan.companions {
            occ_edits.insert(occ.clone(), OccEdit::Companion { slot: slot() });
        }
    }

    // Apply, rebuilding each body in one pass.
    for bi in 0..f.blocks.len() {
        let old = std::mem::take(&mut f.blocks[bi].body);
        let mut body = Vec::with_capacity(old.len());
        if bi == 0 {
            body.extend(allocas.iter().cloned());
        }
        body.extend(at_start.remove(&bi).unwrap_or_default());
        for ins in old {
            match ins.result().and_then(|r| occ_edits.get(r)) {
                Some(OccEdit::Replace { slot }) => body.push(Instr::Load {
                    result: ins.result().expect("occurrences have results").to_string(),
                    addr: Operand::Name(slot.clone()),
                }),
                Some(OccEdit::StoreSelfThenReplace { slot }) => {
                    let result = ins.result().expect("occurrences have results").to_string();
                    let name = fresh.value("pre");
                    let mut clone = ins.clone();
                    set_result(&mut clone, &name);
                    report.insertions.push(Insertion {
                        block: f.blocks[bi].label.clone(),
                        pos: InsertPos::BeforeTerminator,
                        vn: a.table.vn_of_name(&result).expect("occurrence is numbered"),
                        provider: clone.clone(),
                    });
                    body.push(clone);
                    body.push(Instr::Store {
                        value: Operand::Name(name),
                        addr: Operand::Name(slot.clone()),
                    });
                    body.push(Instr::Load {
                        result,
                        addr: Operand::Name(slot.clone()),
                    });
                }
                Some(OccEdit::Companion { slot }) => {
                    let result = ins.result().expect("occurrences have results").to_string();
                    body.push(ins);
                    body.push(Instr::Store {
                        value: Operand::Name(result),
                        addr: Operand::Name(slot.clone()),
                    });
                }
                None => body.push(ins),
            }
        }
        body.extend(at_end.remove(&bi).unwrap_or_default());
        f.blocks[bi].body = body;
    }

    assert_loads_covered(f, &a.cfg, &plans);
    report
}

fn set_result(ins: &mut Instr, name: &str) {
    match ins {
        Instr::Bin { result, .. } | Instr::Cmp { result, .. } => *result = name.to_string(),
        _ => unreachable!("providers are candidate instructions"),
    }
}

/// Must-reach check over the rewritten function: every load of a slot the
/// rewrite introduced sits after a store to that slot on all paths from the
/// entry. The motion analyses guarantee this; a violation is a bug here, not
/// in the input.
fn assert_loads_covered(f: &Function, cfg: &CfgInfo, plans: &[SlotPlan]) {
    let index: BTreeMap<&str, usize> = plans
        .iter()
        .enumerate()
        .map(|(i, p)| (p.slot_name.as_str(), i))
        .collect();
    let w = index.len();
    if w == 0 {
        return;
    }
    let slot_of = |addr: &Operand| addr.name().and_then(|n| index.get(n).copied());
    let stored_in = |bi: usize| {
        let mut g = BitVector::empty(w);
        for ins in &f.blocks[bi].body {
            if let Instr::Store { addr, .. } = ins {
                if let Some(s) = slot_of(addr) {
                    g.set(s);
                }
            }
        }
        g
    };

    let mut out: Vec<BitVector> = (0..f.blocks.len()).map(|_| BitVector::full(w)).collect();
    let entry_in = BitVector::empty(w);
    loop {
        let mut changed = false;
        for &b in &cfg.rpo {
            let mut in_b = if b == 0 {
                entry_in.clone()
            } else {
                cfg.preds[b]
                    .iter()
                    .fold(BitVector::full(w), |acc, &p| acc.intersect(&out[p]))
            };
            in_b = in_b.union(&stored_in(b));
            if in_b != out[b] {
                out[b] = in_b;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }

    for &b in &cfg.rpo {
        let mut have = if b == 0 {
            entry_in.clone()
        } else {
            cfg.preds[b]
                .iter()
                .fold(BitVector::full(w), |acc, &p| acc.intersect(&out[p]))
        };
        for ins in &f.blocks[b].body {
            match ins {
                Instr::Store { addr, .. } => {
                    if let Some(s) = slot_of(addr) {
                        have.set(s);
                    }
                }
                Instr::Load { addr, .. } => {
                    if let Some(s) = slot_of(addr) {
                        assert!(
                            have.get(s),
                            "load of {} in {} not covered by stores on all paths",
                            plans[s].slot_name,
                            f.blocks[b].label
                        );
                    }
                }
                _ => {}
            }
        }
    }
}
