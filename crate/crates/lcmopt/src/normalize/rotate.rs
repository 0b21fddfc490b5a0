//! Loop rotation: turns a while-shaped loop (exit test in the header) into a
//! guarded do-while. The header keeps its label and becomes the guard; a
//! fresh preheader sits between guard and body, giving later code motion a
//! spot that runs only when the loop runs at least once; each latch retests
//! the condition. Bottom-test loops are already in this shape and are left
//! alone.

use crate::cfg::{analyze_cfg, find_natural_loops, CfgInfo, NaturalLoop};
use crate::ir::{Block, FreshNames, Function, Instr, Operand};
use std::collections::{BTreeMap, BTreeSet};

/// Rotates every eligible loop. Returns the number rotated plus diagnostics
/// for while-shaped loops that had to be skipped.
pub fn rotate_loops(f: &mut Function) -> (usize, Vec<String>) {
    let mut attempted: BTreeSet<String> = BTreeSet::new();
    let mut diags = Vec::new();
    let mut rotated = 0;
    let mut first_round = true;
    loop {
        let cfg = analyze_cfg(f);
        let loops = find_natural_loops(f, &cfg);
        if first_round {
            diags.extend(loops.warnings.iter().cloned());
            first_round = false;
        }
        let mut progressed = false;
        // Inner loops first (higher header RPO) so rotating an outer loop
        // never hides an unprocessed inner header behind the attempted set.
        for lp in loops.loops.iter().rev() {
            let h_label = f.blocks[lp.header].label.clone();
            if !attempted.insert(h_label.clone()) {
                continue;
            }
            match try_rotate(f, &cfg, lp) {
                Outcome::Rotated { new_header } => {
                    attempted.insert(new_header);
                    rotated += 1;
                    progressed = true;
                    break; // analyses are stale; recompute
                }
                Outcome::BottomTest => {}
                Outcome::Skip(reason) => {
                    diags.push(format!(
                        "loop-rotate: @{}: loop at {}: {}; not rotated",
                        f.name, h_label, reason
                    ));
                }
            }
        }
        if !progressed {
            return (rotated, diags);
        }
    }
}

enum Outcome {
    Rotated {
        new_header: String,
    },
    /// Exit test is not in the header; the loop already has do-while shape.
    BottomTest,
    Skip(&'static str),
}

fn apply(op: &mut Operand, map: &BTreeMap<String, Operand>) {
    let repl = match op.name() {
        Some(n) => map.get(n).cloned(),
        None => None,
    };
    if let Some(v) = repl {
        *op = v;
    }
}

fn try_rotate(f: &mut Function, cfg: &CfgInfo, lp: &NaturalLoop) -> Outcome {
    let h = lp.header;
    let h_label = f.blocks[h].label.clone();

    // The header must test the exit condition: a branch with one target in
    // the loop and one outside.
    let (cond, then_label, else_label) = match &f.blocks[h].terminator {
        Some(Instr::Br {
            cond,
            then_target,
            else_target,
        }) => (cond.clone(), then_target.clone(), else_target.clone()),
        _ => return Outcome::BottomTest,
    };
    let in_loop = |label: &str| {
        f.block_index(label)
            .map(|bi| lp.body.contains(&bi))
            .unwrap_or(false)
    };
    let (ib_label, exit_label, then_is_body) = match (in_loop(&then_label), in_loop(&else_label)) {
        (true, false) => (then_label, else_label, true),
        (false, true) => (else_label, then_label, false),
        (true, true) => return Outcome::BottomTest,
        (false, false) => unreachable!("header with no loop successor"),
    };
    if ib_label == h_label {
        // A self-loop's test sits after its body: already do-while shaped.
        return Outcome::BottomTest;
    }
    let ib = f.block_index(&ib_label).unwrap();

    let entering: Vec<usize> = cfg.preds[h]
        .iter()
        .copied()
        .filter(|p| !lp.body.contains(p))
        .collect();
    if entering.len() != 1 {
        return Outcome::Skip("multiple entering predecessors");
    }
    let p_label = f.blocks[entering[0]].label.clone();

    for &l in &lp.latches {
        if f.blocks[l].terminator
            != Some(Instr::Jmp {
                target: h_label.clone(),
            })
        {
            return Outcome::Skip("conditional latch");
        }
    }
    for &b in &lp.body {
        if b == h {
            continue;
        }
        if cfg.succs[b].iter().any(|s| !lp.body.contains(s)) {
            return Outcome::Skip("loop exits outside the header");
        }
    }
    if cfg.preds[ib].len() != 1 || !f.blocks[ib].phis.is_empty() {
        return Outcome::Skip("loop body entry is shared");
    }

    // The whole header body must be the test chain: pure instructions whose
    // results feed only later chain instructions or the branch condition.
    for instr in &f.blocks[h].body {
        if !matches!(
            instr,
            Instr::Bin { .. } | Instr::Cmp { .. } | Instr::Const { .. }
        ) {
            return Outcome::Skip("header has side effects beyond the test");
        }
    }
    let chain_names: Vec<String> = f.blocks[h]
        .body
        .iter()
        .filter_map(|i| i.result().map(str::to_string))
        .collect();
    for name in &chain_names {
        let total = f.use_count(name);
        let hb = &f.blocks[h];
        let inside: usize = hb
            .body
            .iter()
            .chain(hb.terminator.iter())
            .map(|i| {
                i.operands()
                    .iter()
                    .filter(|o| o.name() == Some(name.as_str()))
                    .count()
            })
            .sum();
        if total != inside {
            return Outcome::Skip("header computations escape the test");
        }
    }

    // Substitutions: a header phi stands for its p-incoming in the guard and
    // for its latch-incoming in that latch's retest.
    let body_labels: BTreeSet<String> = lp
        .body
        .iter()
        .map(|&bi| f.blocks[bi].label.clone())
        .collect();
    let latch_labels: Vec<String> = lp
        .latches
        .iter()
        .map(|&l| f.blocks[l].label.clone())
        .collect();
    let mut subst_p: BTreeMap<String, Operand> = BTreeMap::new();
    let mut subst_latch: BTreeMap<String, BTreeMap<String, Operand>> = BTreeMap::new();
    for l in &latch_labels {
        subst_latch.insert(l.clone(), BTreeMap::new());
    }
    for phi in &f.blocks[h].phis {
        if let Instr::Phi { result, incomings } = phi {
            for (l, v) in incomings {
                if *l == p_label {
                    subst_p.insert(result.clone(), v.clone());
                } else if let Some(m) = subst_latch.get_mut(l) {
                    m.insert(result.clone(), v.clone());
                }
            }
        }
    }
    let phi_names: Vec<String> = f.blocks[h]
        .phis
        .iter()
        .filter_map(|i| i.result().map(str::to_string))
        .collect();

    // Exit-value plan: uses of header phis outside the loop (other than the
    // exit block's own phi incomings, which are rewritten in place) need
    // merge phis in the exit block, and those only cover a private exit.
    let exit_idx = f.block_index(&exit_label).unwrap();
    let mut outside_used: Vec<String> = Vec::new();
    for name in &phi_names {
        let mut found = false;
        for (bi, b) in f.blocks.iter().enumerate() {
            if lp.body.contains(&bi) {
                continue;
            }
            for phi in &b.phis {
                if let Instr::Phi { incomings, .. } = phi {
                    for (l, v) in incomings {
                        if !body_labels.contains(l) && v.name() == Some(name.as_str()) {
                            found = true;
                        }
                    }
                }
            }
            for instr in b.body.iter().chain(b.terminator.iter()) {
                if instr
                    .operands()
                    .iter()
                    .any(|o| o.name() == Some(name.as_str()))
                {
                    found = true;
                }
            }
        }
        if found {
            outside_used.push(name.clone());
        }
    }
    if !outside_used.is_empty() && cfg.preds[exit_idx] != vec![h] {
        return Outcome::Skip("loop results used past a shared exit");
    }

    // Point of no return. Everything below works by label; block indices go
    // stale once the preheader is inserted.
    let mut fresh = FreshNames::for_function(f);
    let ph_label = fresh.label("ph");
    let original_chain = f.blocks[h].body.clone();
    let moved_phis = std::mem::take(&mut f.blocks[h].phis);

    // Header becomes the guard: phis gone, chain reads entry values, branch
    // targets the preheader instead of the body.
    for instr in &mut f.blocks[h].body {
        for op in instr.operands_mut() {
            apply(op, &subst_p);
        }
    }
    let mut guard_cond = cond.clone();
    apply(&mut guard_cond, &subst_p);
    f.blocks[h].terminator = Some(if then_is_body {
        Instr::Br {
            cond: guard_cond,
            then_target: ph_label.clone(),
            else_target: exit_label.clone(),
        }
    } else {
        Instr::Br {
            cond: guard_cond,
            then_target: exit_label.clone(),
            else_target: ph_label.clone(),
        }
    });

    let mut ph_block = Block::new(ph_label.clone());
    ph_block.terminator = Some(Instr::Jmp {
        target: ib_label.clone(),
    });
    f.blocks.insert(h + 1, ph_block);

    // The body entry inherits the phis; the entry value now arrives through
    // the preheader.
    let relocated: Vec<Instr> = moved_phis
        .into_iter()
        .map(|phi| match phi {
            Instr::Phi { result, incomings } => {
                let incomings = incomings
                    .into_iter()
                    .map(|(l, v)| {
                        if l == p_label {
                            (ph_label.clone(), v)
                        } else {
                            (l, v)
                        }
                    })
                    .collect();
                Instr::Phi { result, incomings }
            }
            other => other,
        })
        .collect();
    f.block_mut(&ib_label).unwrap().phis = relocated;

    // Each latch retests with the values its iteration just produced.
    for latch_label in &latch_labels {
        let map = &subst_latch[latch_label];
        let mut rename: BTreeMap<String, String> = BTreeMap::new();
        let mut clone = Vec::new();
        for instr in &original_chain {
            let mut ci = instr.clone();
            for op in ci.operands_mut() {
                let renamed = op.name().and_then(|n| rename.get(n)).cloned();
                match renamed {
                    Some(new) => *op = Operand::Name(new),
                    None => apply(op, map),
                }
            }
            if let Some(old) = instr.result() {
                let new = fresh.value(old);
                set_result(&mut ci, &new);
                rename.insert(old.to_string(), new);
            }
            clone.push(ci);
        }
        let mut latch_cond = cond.clone();
        let renamed = latch_cond.name().and_then(|n| rename.get(n)).cloned();
        match renamed {
            Some(new) => latch_cond = Operand::Name(new),
            None => apply(&mut latch_cond, map),
        }
        let lb = f.block_mut(latch_label).unwrap();
        lb.body.extend(clone);
        lb.terminator = Some(if then_is_body {
            Instr::Br {
                cond: latch_cond,
                then_target: ib_label.clone(),
                else_target: exit_label.clone(),
            }
        } else {
            Instr::Br {
                cond: latch_cond,
                then_target: exit_label.clone(),
                else_target: ib_label.clone(),
            }
        });
    }

    // Exit phis: the value leaving through the guard is the entry value; the
    // value leaving through a latch is that iteration's update.
    let exit_block = f.block_mut(&exit_label).unwrap();
    for phi in &mut exit_block.phis {
        if let Instr::Phi { incomings, .. } = phi {
            let mut extra = Vec::new();
            for (l, v) in incomings.iter_mut() {
                if *l == h_label {
                    for latch_label in &latch_labels {
                        let mut lv = v.clone();
                        apply(&mut lv, &subst_latch[latch_label]);
                        extra.push((latch_label.clone(), lv));
                    }
                    apply(v, &subst_p);
                }
            }
            incomings.extend(extra);
        }
    }

    // Out-of-loop uses of the relocated phis flow through fresh merge phis.
    for name in &outside_used {
        let mut incomings = vec![(h_label.clone(), subst_p[name].clone())];
        for latch_label in &latch_labels {
            let mut lv = Operand::Name(name.clone());
            apply(&mut lv, &subst_latch[latch_label]);
            incomings.push((latch_label.clone(), lv));
        }
        let merged = fresh.value(name);
        f.block_mut(&exit_label).unwrap().phis.push(Instr::Phi {
            result: merged.clone(),
            incomings,
        });
        rewrite_outside_uses(f, &body_labels, name, &merged);
    }

    Outcome::Rotated {
        new_header: ib_label,
    }
}

fn set_result(instr: &mut Instr, new: &str) {
    match instr {
        Instr::Bin { result, .. } | Instr::Cmp { result, .. } | Instr::Const { result, .. } => {
            *result = new.to_string()
        }
        _ => unreachable!("test chain holds only pure computations"),
    }
}

/// Replaces uses of `old` with `new` in blocks outside the loop. Phi
/// incomings are located at their predecessor, so only incomings arriving
/// from outside the loop are rewritten.
fn rewrite_outside_uses(f: &mut Function, body_labels: &BTreeSet<String>, old: &str, new: &str) {
    for b in &mut f.blocks {
        if body_labels.contains(&b.label) {
            continue;
        }
        for phi in &mut b.phis {
            if let Instr::Phi { incomings, .. } = phi {
                for (l, v) in incomings.iter_mut() {
                    if !body_labels.contains(l) && v.name() == Some(old) {
                        *v = Operand::Name(new.to_string());
                    }
                }
            }
        }
        for instr in b.body.iter_mut().chain(b.terminator.iter_mut()) {
            for op in instr.operands_mut() {
                if op.name() == Some(old) {
                    *op = Operand::Name(new.to_string());
                }
            }
        }
    }
}
