//! Slot-indexed bit vectors and a generic iterative dataflow solver.
//!
//! An analysis is described by three per-block set functions plus a meet, a
//! direction, and a boundary value:
//!
//! ```text
//! forward:   IN(b)  = alpha(b) ∪ (bottom if b is the entry,
//!                                 else meet over preds p of beta(p))
//!            OUT(b) = gamma(b)
//! backward:  OUT(b) = alpha(b) ∪ (bottom if b has no successors,
//!                                 else meet over succs s of beta(s))
//!            IN(b)  = gamma(b)
//! ```
//!
//! `beta` and `gamma` read the evolving solution, so recurrences such as
//! "OUT depends on this block's own IN" are expressed directly. All interior
//! sets start at `top`; with an intersection meet and monotone plug-ins the
//! solver lands on the greatest fixpoint.

use std::fmt;

#[derive(Clone, PartialEq, Eq, Hash)]
pub struct BitVector {
    width: usize,
    words: Vec<u64>,
}

impl BitVector {
    pub fn empty(width: usize) -> BitVector {
        BitVector {
            width,
            words: vec![0; width.div_ceil(64)],
        }
    }

    pub fn full(width: usize) -> BitVector {
        let mut v = BitVector::empty(width);
        for i in 0..width {
            v.set(i);
        }
        v
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn get(&self, i: usize) -> bool {
        debug_assert!(i < self.width);
        self.words[i / 64] >> (i % 64) & 1 == 1
    }

    pub fn set(&mut self, i: usize) {
        debug_assert!(i < self.width);
        self.words[i / 64] |= 1 << (i % 64);
    }

    pub fn clear(&mut self, i: usize) {
        debug_assert!(i < self.width);
        self.words[i / 64] &= !(1 << (i % 64));
    }

    pub fn union(&self, other: &BitVector) -> BitVector {
        self.zip(other, |a, b| a | b)
    }

    pub fn intersect(&self, other: &BitVector) -> BitVector {
        self.zip(other, |a, b| a & b)
    }

    /// Bits set in `self` but not in `other`.
    pub fn minus(&self, other: &BitVector) -> BitVector {
        self.zip(other, |a, b| a & !b)
    }

    pub fn complement(&self) -> BitVector {
        let mut out = BitVector {
            width: self.width,
            words: self.words.iter().map(|w| !w).collect(),
        };
        out.mask_tail();
        out
    }

    pub fn is_subset(&self, other: &BitVector) -> bool {
        debug_assert_eq!(self.width, other.width);
        self.words
            .iter()
            .zip(&other.words)
            .all(|(a, b)| a & !b == 0)
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|w| *w == 0)
    }

    pub fn count(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn iter_ones(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.width).filter(move |&i| self.get(i))
    }

    fn zip(&self, other: &BitVector, f: impl Fn(u64, u64) -> u64) -> BitVector {
        debug_assert_eq!(self.width, other.width);
        BitVector {
            width: self.width,
            words: self
                .words
                .iter()
                .zip(&other.words)
                .map(|(a, b)| f(*a, *b))
                .collect(),
        }
    }

    fn mask_tail(&mut self) {
        let used = self.width % 64;
        if used != 0 {
            if let Some(last) = self.words.last_mut() {
                *last &= (1u64 << used) - 1;
            }
        }
    }
}

impl fmt::Debug for BitVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        let mut first = true;
        for i in self.iter_ones() {
            if !first {
                write!(f, ", ")?;
            }
            write!(f, "{i}")?;
            first = false;
        }
        write!(f, "}}")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Backward,
}

/// IN and OUT per block, indexed by block number.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Solution {
    pub in_of: Vec<BitVector>,
    pub out_of: Vec<BitVector>,
}

pub struct DataflowSpec<'a> {
    pub direction: Direction,
    /// Block-local seed, independent of the solution.
    pub alpha: Box<dyn Fn(usize) -> BitVector + 'a>,
    /// Contribution of a neighbor (pred if forward, succ if backward).
    pub beta: Box<dyn Fn(&Solution, usize) -> BitVector + 'a>,
    /// The non-meet set of the block itself (OUT if forward, IN if backward).
    pub gamma: Box<dyn Fn(&Solution, usize) -> BitVector + 'a>,
    pub meet: fn(&BitVector, &BitVector) -> BitVector,
    /// Boundary value at the entry (forward) or at exits (backward).
    pub bottom: BitVector,
    /// Initial interior value.
    pub top: BitVector,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NonConvergence {
    pub visits: usize,
}

impl fmt::Display for NonConvergence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "dataflow solver did not converge within {} block visits",
            self.visits
        )
    }
}

impl std::error::Error for NonConvergence {}

/// Cheap structural view of the CFG the solver needs. `blocks` lists the
/// reachable blocks in the order used to seed the worklist.
pub struct FlowGraph<'a> {
    pub blocks: &'a [usize],
    pub preds: &'a [Vec<usize>],
    pub succs: &'a [Vec<usize>],
    pub entry: usize,
}

/// Worklist solve, seeded in the direction's natural order (RPO for forward,
/// reverse RPO for backward when `graph.blocks` is the RPO).
pub fn solve(graph: &FlowGraph, spec: &DataflowSpec) -> Result<Solution, NonConvergence> {
    let order: Vec<usize> = match spec.direction {
        Direction::Forward => graph.blocks.to_vec(),
        Direction::Backward => graph.blocks.iter().rev().copied().collect(),
    };
    solve_with_order(graph, spec, &order)
}

/// Worklist solve with an explicit seed order. The fixpoint of a monotone
/// spec does not depend on the order; tests exercise that.
pub fn solve_with_order(
    graph: &FlowGraph,
    spec: &DataflowSpec,
    order: &[usize],
) -> Result<Solution, NonConvergence> {
    let n = graph.preds.len();
    let width = spec.top.width();
    let mut sol = Solution {
        in_of: vec![spec.top.clone(); n],
        out_of: vec![spec.top.clone(); n],
    };
    let mut queue: std::collections::VecDeque<usize> = order.iter().copied().collect();
    let mut queued = vec![false; n];
    for &b in order {
        queued[b] = true;
    }

    let budget = 4 * (width + 2) * n.max(1) * n.max(1) + 64;
    let mut visits = 0usize;
    while let Some(b) = queue.pop_front() {
        queued[b] = false;
        visits += 1;
        if visits > budget {
            return Err(NonConvergence { visits });
        }
        let changed = step(graph, spec, &mut sol, b);
        if changed {
            let dependents = match spec.direction {
                Direction::Forward => &graph.succs[b],
                Direction::Backward => &graph.preds[b],
            };
            for &d in dependents {
                if !queued[d] && graph.blocks.contains(&d) {
                    queued[d] = true;
                    queue.push_back(d);
                }
            }
        }
    }
    Ok(sol)
}

/// Recompute one block; true if either of its sets changed.
fn step(graph: &FlowGraph, spec: &DataflowSpec, sol: &mut Solution, b: usize) -> bool {
    match spec.direction {
        Direction::Forward => {
            let meet_part = if b == graph.entry {
                spec.bottom.clone()
            } else {
                reduce(spec, sol, graph.preds[b].iter().copied())
            };
            let new_in = (spec.alpha)(b).union(&meet_part);
            let in_changed = new_in != sol.in_of[b];
            sol.in_of[b] = new_in;
            let new_out = (spec.gamma)(sol, b);
            let out_changed = new_out != sol.out_of[b];
            sol.out_of[b] = new_out;
            in_changed || out_changed
        }
        Direction::Backward => {
            let meet_part = if graph.succs[b].is_empty() {
                spec.bottom.clone()
            } else {
                reduce(spec, sol, graph.succs[b].iter().copied())
            };
            let new_out = (spec.alpha)(b).union(&meet_part);
            let out_changed = new_out != sol.out_of[b];
            sol.out_of[b] = new_out;
            let new_in = (spec.gamma)(sol, b);
            let in_changed = new_in != sol.in_of[b];
            sol.in_of[b] = new_in;
            in_changed || out_changed
        }
    }
}

fn reduce(
    spec: &DataflowSpec,
    sol: &Solution,
    neighbors: impl Iterator<Item = usize>,
) -> BitVector {
    let mut acc: Option<BitVector> = None;
    for x in neighbors {
        let v = (spec.beta)(sol, x);
        acc = Some(match acc {
            None => v,
            Some(a) => (spec.meet)(&a, &v),
        });
    }
    // A non-entry block always has a predecessor; this arm covers malformed
    // graphs defensively.
    acc.unwrap_or_else(|| spec.top.clone())
}

pub fn meet_intersect(a: &BitVector, b: &BitVector) -> BitVector {
    a.intersect(b)
}
