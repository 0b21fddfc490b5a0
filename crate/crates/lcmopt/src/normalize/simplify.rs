//! CFG cleanup: drops unreachable blocks, merges straight-line block pairs,
//! folds empty forwarding blocks (the leftovers of critical-edge splitting
//! that received no insertion), and sweeps dead pure instructions.

use crate::cfg::analyze_cfg;
use crate::ir::{Function, Instr, Operand};
use std::collections::{BTreeMap, BTreeSet};

/// Runs the cleanup steps to a fixed point. Returns the number of edits.
pub fn simplify_cfg(f: &mut Function) -> usize {
    let mut edits = 0;
    loop {
        let mut changed = 0;
        changed += canonicalize_branches(f);
        changed += remove_unreachable(f);
        changed += fold_single_incoming_phis(f);
        changed += fold_forwarding_blocks(f);
        changed += merge_straight_pairs(f);
        changed += sweep_dead_values(f);
        edits += changed;
        if changed == 0 {
            return edits;
        }
    }
}

/// `br %c, x, x` is a jump in disguise; the condition may then become dead.
fn canonicalize_branches(f: &mut Function) -> usize {
    let mut n = 0;
    for b in &mut f.blocks {
        if let Some(Instr::Br {
            then_target,
            else_target,
            ..
        }) = &b.terminator
        {
            if then_target == else_target {
                let target = then_target.clone();
                b.terminator = Some(Instr::Jmp { target });
                n += 1;
            }
        }
    }
    n
}

fn remove_unreachable(f: &mut Function) -> usize {
    let cfg = analyze_cfg(f);
    if cfg.unreachable.is_empty() {
        return 0;
    }
    let dead: BTreeSet<String> = cfg
        .unreachable
        .iter()
        .map(|&bi| f.blocks[bi].label.clone())
        .collect();
    let n = dead.len();
    f.blocks.retain(|b| !dead.contains(&b.label));
    for b in &mut f.blocks {
        for phi in &mut b.phis {
            if let Instr::Phi { incomings, .. } = phi {
                incomings.retain(|(l, _)| !dead.contains(l));
            }
        }
    }
    n
}

/// A phi whose block has a single predecessor names exactly its one incoming
/// value; uses are rewired and the phi dropped.
fn fold_single_incoming_phis(f: &mut Function) -> usize {
    let mut n = 0;
    loop {
        let mut found = None;
        'scan: for (bi, b) in f.blocks.iter().enumerate() {
            for (pi, phi) in b.phis.iter().enumerate() {
                if let Instr::Phi { result, incomings } = phi {
                    if incomings.len() == 1 {
                        found = Some((bi, pi, result.clone(), incomings[0].1.clone()));
                        break 'scan;
                    }
                }
            }
        }
        match found {
            Some((bi, pi, result, val)) => {
                f.blocks[bi].phis.remove(pi);
                f.replace_uses(&result, &val);
                n += 1;
            }
            None => return n,
        }
    }
}

/// Retargets predecessors of blocks that hold nothing but a `jmp`, unless a
/// target phi would end up with two different values for one predecessor.
fn fold_forwarding_blocks(f: &mut Function) -> usize {
    let mut n = 0;
    'outer: for ji in 1..f.blocks.len() {
        let j = &f.blocks[ji];
        if !j.phis.is_empty() || !j.body.is_empty() {
            continue;
        }
        let target = match &j.terminator {
            Some(Instr::Jmp { target }) if *target != j.label => target.clone(),
            _ => continue,
        };
        let j_label = f.blocks[ji].label.clone();
        let preds: Vec<String> = f
            .blocks
            .iter()
            .filter(|b| b.successor_labels().iter().any(|s| *s == j_label))
            .map(|b| b.label.clone())
            .collect();

        // The target's phis route j's incoming to every predecessor of j. A
        // predecessor already feeding the target directly must agree on the
        // value, else folding would need an edge-local identity we don't have.
        let tb = f.block(&target).unwrap();
        let mut planned: Vec<(usize, Vec<(String, Operand)>)> = Vec::new();
        for (pi, phi) in tb.phis.iter().enumerate() {
            if let Instr::Phi { incomings, .. } = phi {
                let j_val = match incomings.iter().find(|(l, _)| *l == j_label) {
                    Some((_, v)) => v.clone(),
                    None => continue 'outer,
                };
                let mut inc: Vec<(String, Operand)> = incomings
                    .iter()
                    .filter(|(l, _)| *l != j_label)
                    .cloned()
                    .collect();
                for p in &preds {
                    match inc.iter().find(|(l, _)| l == p) {
                        Some((_, v)) if *v == j_val => {}
                        Some(_) => continue 'outer,
                        None => inc.push((p.clone(), j_val.clone())),
                    }
                }
                planned.push((pi, inc));
            }
        }

        for (pi, inc) in planned {
            if let Instr::Phi { incomings, .. } = &mut f.block_mut(&target).unwrap().phis[pi] {
                *incomings = inc;
            }
        }
        for p in preds {
            let pb = f.block_mut(&p).unwrap();
            if let Some(t) = pb.terminator.as_mut() {
                match t {
                    Instr::Jmp { target: t } if *t == j_label => *t = target.clone(),
                    Instr::Br {
                        then_target,
                        else_target,
                        ..
                    } => {
                        if *then_target == j_label {
                            *then_target = target.clone();
                        }
                        if *else_target == j_label {
                            *else_target = target.clone();
                        }
                    }
                    _ => {}
                }
            }
        }
        f.blocks.remove(ji);
        n += 1;
        break; // indices shifted; rescan from the top on the next pass
    }
    n
}

/// Merges `p -> b` when the edge is p's only exit and b's only entry and b
/// carries no phis; b's code moves into p.
fn merge_straight_pairs(f: &mut Function) -> usize {
    let mut pred_count: BTreeMap<String, usize> = BTreeMap::new();
    for b in &f.blocks {
        for s in b.successor_labels() {
            *pred_count.entry(s.to_string()).or_insert(0) += 1;
        }
    }
    for pi in 0..f.blocks.len() {
        let succs = f.blocks[pi].successor_labels();
        if succs.len() != 1 {
            continue;
        }
        let b_label = succs[0].to_string();
        if b_label == f.blocks[pi].label || pred_count[&b_label] != 1 {
            continue;
        }
        let bi = f.block_index(&b_label).unwrap();
        if !f.blocks[bi].phis.is_empty() {
            continue;
        }
        let mut b = f.blocks.remove(bi);
        let pi = if bi < pi { pi - 1 } else { pi };
        let p = &mut f.blocks[pi];
        p.body.append(&mut b.body);
        p.terminator = b.terminator;
        let p_label = p.label.clone();
        for blk in &mut f.blocks {
            for phi in &mut blk.phis {
                if let Instr::Phi { incomings, .. } = phi {
                    for (l, _) in incomings.iter_mut() {
                        if *l == b_label {
                            *l = p_label.clone();
                        }
                    }
                }
            }
        }
        return 1; // block list changed; caller loops
    }
    0
}

/// Deletes pure instructions whose results are never used. Opaque reads stay:
/// they advance the input tape.
fn sweep_dead_values(f: &mut Function) -> usize {
    let mut n = 0;
    loop {
        let mut uses: BTreeMap<String, usize> = BTreeMap::new();
        for b in &f.blocks {
            for i in b.instrs() {
                for o in i.operands() {
                    if let Some(name) = o.name() {
                        *uses.entry(name.to_string()).or_insert(0) += 1;
                    }
                }
            }
        }
        let mut removed = 0;
        for b in &mut f.blocks {
            let dead = |i: &Instr| {
                i.is_removable_value() && uses.get(i.result().unwrap()).copied().unwrap_or(0) == 0
            };
            let before = b.phis.len() + b.body.len();
            b.phis.retain(|i| !dead(i));
            b.body.retain(|i| !dead(i));
            removed += before - (b.phis.len() + b.body.len());
        }
        n += removed;
        if removed == 0 {
            return n;
        }
    }
}
