//! Stack-slot promotion: rewrites allocas that are only ever loaded and
//! stored whole into SSA values, inserting phis at iterated dominance
//! frontiers of the store blocks (pruned by liveness).
//!
//! A load that can execute before any store reads 0, matching the
//! interpreter's zero-initialized memory; such rewrites carry a diagnostic.

use crate::cfg::{analyze_cfg, find_natural_loops, CfgInfo};
use crate::ir::{FreshNames, Function, Instr, Operand};
use std::collections::{BTreeMap, BTreeSet};

/// Promotes every eligible alloca. Returns the number promoted and any
/// diagnostics (default-0 loads). An alloca is eligible when its name is used
/// only as a load/store address and its block runs at most once per
/// invocation (not inside a loop; re-executing an alloca makes a fresh slot,
/// which registers cannot model).
pub fn mem2reg_promote(f: &mut Function) -> (usize, Vec<String>) {
    let cfg = analyze_cfg(f);
    let loops = find_natural_loops(f, &cfg);
    let irreducible = !loops.warnings.is_empty();

    let mut promotable = Vec::new();
    for (bi, b) in f.blocks.iter().enumerate() {
        for instr in b.body.iter() {
            if let Instr::Alloca { result } = instr {
                if address_only(f, result)
                    && !loops.in_any_loop(bi)
                    && !irreducible
                    && cfg.is_reachable(bi)
                {
                    promotable.push(result.clone());
                }
            }
        }
    }

    let mut diags = Vec::new();
    for p in &promotable {
        promote_one(f, &cfg, p, &mut diags);
    }
    (promotable.len(), diags)
}

/// True when `name` appears only as the address operand of loads and stores.
fn address_only(f: &Function, name: &str) -> bool {
    for b in &f.blocks {
        for instr in b.instrs() {
            match instr {
                Instr::Load { addr, .. } => {
                    if addr.name() == Some(name) {
                        continue;
                    }
                }
                Instr::Store { value, addr } => {
                    if value.name() == Some(name) {
                        return false;
                    }
                    if addr.name() == Some(name) {
                        continue;
                    }
                }
                _ => {}
            }
            if instr.operands().iter().any(|o| o.name() == Some(name)) {
                return false;
            }
        }
    }
    true
}

fn is_store_to(instr: &Instr, p: &str) -> bool {
    matches!(instr, Instr::Store { addr, .. } if addr.name() == Some(p))
}

fn is_load_of(instr: &Instr, p: &str) -> bool {
    matches!(instr, Instr::Load { addr, .. } if addr.name() == Some(p))
}

fn promote_one(f: &mut Function, cfg: &CfgInfo, p: &str, diags: &mut Vec<String>) {
    let n = f.blocks.len();

    // Blocks that store the slot, and per-block "loads before storing" for
    // the liveness pruning.
    let mut def_blocks = Vec::new();
    let mut upward_use = vec![false; n];
    let mut has_store = vec![false; n];
    for (bi, b) in f.blocks.iter().enumerate() {
        let mut stored = false;
        for instr in &b.body {
            if is_load_of(instr, p) && !stored {
                upward_use[bi] = true;
            }
            if is_store_to(instr, p) {
                stored = true;
            }
        }
        if stored {
            has_store[bi] = true;
            def_blocks.push(bi);
        }
    }

    // live_in(b): some path from b's entry reaches a load of p with no store
    // in between. Backward boolean fixpoint.
    let mut live_in = upward_use.clone();
    let mut changed = true;
    while changed {
        changed = false;
        for bi in (0..n).rev() {
            if live_in[bi] || has_store[bi] {
                continue;
            }
            if cfg.succs[bi].iter().any(|&s| live_in[s]) {
                live_in[bi] = true;
                changed = true;
            }
        }
    }

    // Phi placement: iterated dominance frontier of the stores, pruned to
    // blocks where the slot is live on entry.
    let mut phi_blocks = BTreeSet::new();
    let mut work = def_blocks.clone();
    let mut on_work: BTreeSet<usize> = def_blocks.iter().copied().collect();
    while let Some(d) = work.pop() {
        for &y in &cfg.df[d] {
            if phi_blocks.contains(&y) || !live_in[y] {
                continue;
            }
            phi_blocks.insert(y);
            if on_work.insert(y) {
                work.push(y);
            }
        }
    }

    let mut fresh = FreshNames::for_function(f);
    let mut phi_name: BTreeMap<usize, String> = BTreeMap::new();
    for &bi in &phi_blocks {
        let name = fresh.value(p);
        let preds: BTreeSet<String> = cfg.preds[bi]
            .iter()
            .map(|&q| f.blocks[q].label.clone())
            .collect();
        let incomings = preds.into_iter().map(|l| (l, Operand::Lit(0))).collect();
        f.blocks[bi].phis.push(Instr::Phi {
            result: name.clone(),
            incomings,
        });
        phi_name.insert(bi, name);
    }

    // Rename along the dominator tree. `current` is the slot's value on the
    // path; None means no store has happened yet (reads default to 0).
    let children = cfg.dom_children();
    let mut subst: BTreeMap<String, Operand> = BTreeMap::new();
    let mut doomed: Vec<(usize, usize)> = Vec::new(); // (block, body index)
    let mut stack: Vec<(usize, Option<Operand>)> = vec![(0, None)];
    let mut fills: Vec<(usize, usize, Operand)> = Vec::new(); // (block, pred, value)
    while let Some((bi, mut current)) = stack.pop() {
        if let Some(name) = phi_name.get(&bi) {
            current = Some(Operand::Name(name.clone()));
        }
        for ii in 0..f.blocks[bi].body.len() {
            let instr = &f.blocks[bi].body[ii];
            if is_load_of(instr, p) {
                let r = instr.result().unwrap().to_string();
                let val = match &current {
                    Some(v) => v.clone(),
                    None => {
                        diags.push(format!(
                            "mem2reg: @{}: %{} reads %{} before any store; defaulting to 0",
                            f.name, r, p
                        ));
                        Operand::Lit(0)
                    }
                };
                subst.insert(r, val);
                doomed.push((bi, ii));
            } else if is_store_to(instr, p) {
                if let Instr::Store { value, .. } = instr {
                    current = Some(resolve(&subst, value));
                }
                doomed.push((bi, ii));
            } else if matches!(instr, Instr::Alloca { result } if result == p) {
                doomed.push((bi, ii));
            }
        }
        for &s in &cfg.succs[bi] {
            if phi_name.contains_key(&s) {
                let val = current.clone().unwrap_or(Operand::Lit(0));
                fills.push((s, bi, val));
            }
        }
        for &c in &children[bi] {
            stack.push((c, current.clone()));
        }
    }

    for (s, pred, val) in fills {
        let pred_label = f.blocks[pred].label.clone();
        let name = &phi_name[&s];
        if let Some(Instr::Phi { incomings, .. }) = f.blocks[s]
            .phis
            .iter_mut()
            .find(|ph| ph.result() == Some(name.as_str()))
        {
            for (l, v) in incomings.iter_mut() {
                if *l == pred_label {
                    *v = val.clone();
                }
            }
        }
    }

    // Unreachable blocks never rename; scrub their slot traffic so no use of
    // the deleted alloca survives.
    for bi in 0..n {
        if cfg.is_reachable(bi) {
            continue;
        }
        for ii in 0..f.blocks[bi].body.len() {
            let instr = &f.blocks[bi].body[ii];
            if is_load_of(instr, p) {
                subst.insert(instr.result().unwrap().to_string(), Operand::Lit(0));
                doomed.push((bi, ii));
            } else if is_store_to(instr, p) {
                doomed.push((bi, ii));
            }
        }
    }

    doomed.sort_unstable();
    doomed.dedup();
    for &(bi, ii) in doomed.iter().rev() {
        f.blocks[bi].body.remove(ii);
    }
    for (old, new) in &subst {
        f.replace_uses(old, new);
    }
}

/// Chases a substituted name so stored values are always final operands.
fn resolve(subst: &BTreeMap<String, Operand>, v: &Operand) -> Operand {
    let mut cur = v.clone();
    loop {
        let next = match &cur {
            Operand::Name(n) => subst.get(n).cloned(),
            Operand::Lit(_) => None,
        };
        match next {
            Some(nv) => cur = nv,
            None => return cur,
        }
    }
}
