//! Critical-edge splitting.
//!
//! An edge is critical when it runs from a block with multiple successors to
//! a block with multiple predecessors. Code motion wants a spot on the edge
//! itself: inserting in the source would execute on the other out-edges,
//! inserting in the target would execute on the other in-edges. Splitting
//! gives every such edge its own block.

use crate::ir::{Block, FreshNames, Function, Instr};
use std::collections::BTreeMap;

/// Splits every critical edge by routing it through a fresh block holding a
/// single `jmp`. Returns the number of edges split.
pub fn split_critical_edges(f: &mut Function) -> usize {
    // Predecessor edge counts by target label; parallel edges count twice.
    let mut pred_edges: BTreeMap<String, usize> = BTreeMap::new();
    for b in &f.blocks {
        for s in b.successor_labels() {
            *pred_edges.entry(s.to_string()).or_insert(0) += 1;
        }
    }

    let mut fresh = FreshNames::for_function(f);
    let mut new_blocks = Vec::new();
    let mut count = 0;

    for ui in 0..f.blocks.len() {
        let targets: Vec<String> = f.blocks[ui]
            .successor_labels()
            .iter()
            .map(|s| s.to_string())
            .collect();
        if targets.len() < 2 {
            continue;
        }
        for (slot, v) in targets.iter().enumerate() {
            if pred_edges[v] < 2 {
                continue;
            }
            let s_label = fresh.label("split");
            let u_label = f.blocks[ui].label.clone();
            match f.blocks[ui].terminator.as_mut() {
                Some(Instr::Br {
                    then_target,
                    else_target,
                    ..
                }) => {
                    if slot == 0 {
                        *then_target = s_label.clone();
                    } else {
                        *else_target = s_label.clone();
                    }
                }
                // Only branches have two successor slots.
                _ => unreachable!("multi-successor block without br"),
            }
            // A parallel edge u->v may remain (br with both targets equal).
            // If so the phi keeps its u incoming and gains one for the new
            // block; otherwise the u incoming is relabeled.
            let u_still_pred = f.blocks[ui].successor_labels().iter().any(|t| *t == v);
            let vb = f.block_mut(v).expect("split target exists");
            for phi in &mut vb.phis {
                if let Instr::Phi { incomings, .. } = phi {
                    if u_still_pred {
                        let val = incomings
                            .iter()
                            .find(|(l, _)| *l == u_label)
                            .expect("phi incoming for split predecessor")
                            .1
                            .clone();
                        incomings.push((s_label.clone(), val));
                    } else {
                        for (l, _) in incomings.iter_mut() {
                            if *l == u_label {
                                *l = s_label.clone();
                            }
                        }
                    }
                }
            }
            let mut nb = Block::new(s_label);
            nb.terminator = Some(Instr::Jmp { target: v.clone() });
            new_blocks.push(nb);
            count += 1;
        }
    }
    f.blocks.extend(new_blocks);
    count
}
