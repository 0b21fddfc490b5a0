//! Control flow graph facts for one function: predecessor/successor lists,
//! reverse postorder, immediate dominators, dominance frontiers, and natural
//! loops.
//!
//! Dominators are computed with the iterative RPO algorithm (two-finger
//! intersection); the entry block is its own immediate dominator. Everything
//! here is deterministic: successor order follows the terminator text, and
//! derived orders follow RPO.

use crate::ir::Function;
use std::collections::BTreeSet;

#[derive(Debug, Clone)]
pub struct CfgInfo {
    /// Edge lists by block index; parallel edges are preserved
    /// (`br %c, b, b` yields two entries).
    pub preds: Vec<Vec<usize>>,
    pub succs: Vec<Vec<usize>>,
    /// Reverse postorder over reachable blocks; `rpo[0]` is the entry.
    pub rpo: Vec<usize>,
    /// Position of each block in `rpo`; `None` for unreachable blocks.
    pub rpo_index: Vec<Option<usize>>,
    /// Immediate dominator; the entry maps to itself, unreachable to `None`.
    pub idom: Vec<Option<usize>>,
    /// Dominance frontier of each reachable block.
    pub df: Vec<BTreeSet<usize>>,
    /// Blocks not reachable from the entry, in textual order.
    pub unreachable: Vec<usize>,
}

impl CfgInfo {
    /// Reflexive dominance over reachable blocks.
    pub fn dominates(&self, a: usize, b: usize) -> bool {
        if self.rpo_index[a].is_none() || self.rpo_index[b].is_none() {
            return false;
        }
        let mut cur = b;
        loop {
            if cur == a {
                return true;
            }
            let parent = match self.idom[cur] {
                Some(p) => p,
                None => return false,
            };
            if parent == cur {
                return false; // reached the entry
            }
            cur = parent;
        }
    }

    pub fn is_reachable(&self, b: usize) -> bool {
        self.rpo_index[b].is_some()
    }

    /// Children in the dominator tree, each list in RPO order.
    pub fn dom_children(&self) -> Vec<Vec<usize>> {
        let mut children = vec![Vec::new(); self.idom.len()];
        for &b in &self.rpo {
            if let Some(d) = self.idom[b] {
                if d != b {
                    children[d].push(b);
                }
            }
        }
        children
    }
}

pub fn analyze_cfg(f: &Function) -> CfgInfo {
    let n = f.blocks.len();
    let mut succs = vec![Vec::new(); n];
    let mut preds = vec![Vec::new(); n];
    for (bi, b) in f.blocks.iter().enumerate() {
        for target in b.successor_labels() {
            let ti = f
                .block_index(target)
                .expect("terminator references a known label");
            succs[bi].push(ti);
            preds[ti].push(bi);
        }
    }

    // Iterative DFS from the entry; postorder, then reversed. Successors are
    // descended in reverse index order so that the final RPO lists siblings in
    // textual order.
    let mut postorder = Vec::new();
    let mut state = vec![0u8; n]; // 0 unvisited, 1 on stack, 2 done
    let mut stack: Vec<(usize, usize)> = vec![(0, 0)];
    state[0] = 1;
    while let Some(&mut (b, ref mut next)) = stack.last_mut() {
        if *next < succs[b].len() {
            let s = succs[b][succs[b].len() - 1 - *next];
            *next += 1;
            if state[s] == 0 {
                state[s] = 1;
                stack.push((s, 0));
            }
        } else {
            state[b] = 2;
            postorder.push(b);
            stack.pop();
        }
    }
    let rpo: Vec<usize> = postorder.into_iter().rev().collect();
    let mut rpo_index = vec![None; n];
    for (i, &b) in rpo.iter().enumerate() {
        rpo_index[b] = Some(i);
    }
    let unreachable: Vec<usize> = (0..n).filter(|&b| rpo_index[b].is_none()).collect();

    // Immediate dominators by iterating to a fixpoint in RPO.
    let mut idom: Vec<Option<usize>> = vec![None; n];
    idom[rpo[0]] = Some(rpo[0]);
    let intersect = |idom: &[Option<usize>], rpo_index: &[Option<usize>], a: usize, b: usize| {
        let (mut a, mut b) = (a, b);
        while a != b {
            while rpo_index[a].unwrap() > rpo_index[b].unwrap() {
                a = idom[a].unwrap();
            }
            while rpo_index[b].unwrap() > rpo_index[a].unwrap() {
                b = idom[b].unwrap();
            }
        }
        a
    };
    let mut changed = true;
    while changed {
        changed = false;
        for &b in rpo.iter().skip(1) {
            let mut new_idom: Option<usize> = None;
            for &p in &preds[b] {
                if idom[p].is_none() {
                    continue;
                }
                new_idom = Some(match new_idom {
                    None => p,
                    Some(cur) => intersect(&idom, &rpo_index, cur, p),
                });
            }
            if new_idom != idom[b] {
                idom[b] = new_idom;
                changed = true;
            }
        }
    }

    // Dominance frontiers via the join-point walk.
    let mut df: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
    for &b in &rpo {
        let unique_preds: BTreeSet<usize> = preds[b]
            .iter()
            .copied()
            .filter(|&p| rpo_index[p].is_some())
            .collect();
        if unique_preds.len() < 2 {
            continue;
        }
        let dom = idom[b].unwrap();
        for p in unique_preds {
            let mut runner = p;
            while runner != dom {
                df[runner].insert(b);
                runner = idom[runner].unwrap();
            }
        }
    }

    CfgInfo {
        preds,
        succs,
        rpo,
        rpo_index,
        idom,
        df,
        unreachable,
    }
}

#[derive(Debug, Clone)]
pub struct NaturalLoop {
    pub header: usize,
    /// All blocks of the loop, header included.
    pub body: BTreeSet<usize>,
    /// Sources of back edges into the header, in RPO order.
    pub latches: Vec<usize>,
    /// The unique predecessor of the header outside the loop whose only
    /// successor is the header, when such a block exists.
    pub preheader: Option<usize>,
}

#[derive(Debug, Clone, Default)]
pub struct LoopInfo {
    /// Loops sorted by header RPO position; one entry per header.
    pub loops: Vec<NaturalLoop>,
    /// Number of loops containing each block.
    pub depth: Vec<usize>,
    /// One warning per irreducible retreating edge; such edges form no loop.
    pub warnings: Vec<String>,
}

impl LoopInfo {
    pub fn in_any_loop(&self, b: usize) -> bool {
        self.depth[b] > 0
    }
}

/// Back edges are retreating edges whose target dominates their source; each
/// header's loop is the union of its back edges' natural loops. A retreating
/// edge without dominance is irreducible and reported, not modeled.
pub fn find_natural_loops(f: &Function, cfg: &CfgInfo) -> LoopInfo {
    let n = f.blocks.len();
    let mut by_header: Vec<(usize, Vec<usize>)> = Vec::new();
    let mut warnings = Vec::new();

    for &b in &cfg.rpo {
        for &s in &cfg.succs[b] {
            if !cfg.is_reachable(s) || cfg.rpo_index[s].unwrap() > cfg.rpo_index[b].unwrap() {
                continue; // forward or cross edge
            }
            if cfg.dominates(s, b) {
                match by_header.iter_mut().find(|(h, _)| *h == s) {
                    Some((_, latches)) => latches.push(b),
                    None => by_header.push((s, vec![b])),
                }
            } else {
                warnings.push(format!(
                    "irreducible edge {} -> {} in @{}: no natural loop recorded",
                    f.blocks[b].label, f.blocks[s].label, f.name
                ));
            }
        }
    }

    by_header.sort_by_key(|(h, _)| cfg.rpo_index[*h]);
    let mut loops = Vec::new();
    let mut depth = vec![0usize; n];
    for (header, mut latches) in by_header {
        latches.sort_by_key(|&l| cfg.rpo_index[l]);
        latches.dedup();
        // Everything reaching a latch without passing the header.
        let mut body: BTreeSet<usize> = BTreeSet::new();
        body.insert(header);
        let mut work: Vec<usize> = latches.clone();
        while let Some(b) = work.pop() {
            if body.insert(b) {
                for &p in &cfg.preds[b] {
                    if cfg.is_reachable(p) {
                        work.push(p);
                    }
                }
            }
        }
        let outside_preds: BTreeSet<usize> = cfg.preds[header]
            .iter()
            .copied()
            .filter(|p| !body.contains(p) && cfg.is_reachable(*p))
            .collect();
        let preheader = match outside_preds.iter().collect::<Vec<_>>().as_slice() {
            [&p] if cfg.succs[p].len() == 1 => Some(p),
            _ => None,
        };
        for &b in &body {
            depth[b] += 1;
        }
        loops.push(NaturalLoop {
            header,
            body,
            latches,
            preheader,
        });
    }

    LoopInfo {
        loops,
        depth,
        warnings,
    }
}
