//! Corpus loading, deterministic test-case generation, and a reference
//! dataflow solver for the integration suites.

// Each integration test target compiles this module separately and uses a
// different subset of it.
#![allow(dead_code)]

use lcmopt::dataflow::{BitVector, DataflowSpec, Direction, FlowGraph, Solution};
use lcmopt::ir::{parse_module, validate, Module};
use std::path::PathBuf;

/// Argument values handed to corpus functions, rotated per case. Chosen so
/// adjacent entries always sum positive: corpus loops that stride by the sum
/// of two arguments still terminate, and no argument is ever zero, keeping
/// divisions by arguments well-defined (tapes cover the zero cases).
pub const ARG_POOL: [i64; 8] = [2, 3, 7, 5, -4, 9, 1, 8];

/// The eight opaque-input tapes every corpus function runs under. Mixed
/// lengths exercise tape exhaustion (reads past the end produce 0) and the
/// zero-heavy tapes drive guarded and trapping divisions down both arms.
pub fn tapes() -> Vec<Vec<i64>> {
    vec![
        vec![],
        vec![0],
        vec![1],
        vec![7, 3],
        vec![0, 0, 0, 0],
        vec![5, -2, 9, 4, 1],
        vec![100, 50],
        vec![-1, -1, -1, -1, -1, -1],
    ]
}

/// Eight (args, tape) cases for a function of the given arity; the argument
/// pool rotates by one per case so every parameter position sees spread.
pub fn cases_for(arity: usize) -> Vec<(Vec<i64>, Vec<i64>)> {
    tapes()
        .into_iter()
        .enumerate()
        .map(|(k, tape)| {
            let args = (0..arity)
                .map(|i| ARG_POOL[(k + i) % ARG_POOL.len()])
                .collect();
            (args, tape)
        })
        .collect()
}

pub fn corpus_dir() -> PathBuf {
    PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/corpus"))
}

/// Every corpus module, parsed and validated, sorted by file name.
pub fn load_corpus() -> Vec<(String, Module)> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(corpus_dir())
        .expect("corpus directory")
        .map(|e| e.expect("corpus entry").path())
        .filter(|p| p.extension().is_some_and(|x| x == "ir"))
        .collect();
    files.sort();
    assert!(
        files.len() >= 25,
        "corpus holds {} programs, need at least 25",
        files.len()
    );
    files
        .into_iter()
        .map(|p| {
            let name = p.file_stem().unwrap().to_string_lossy().into_owned();
            let text = std::fs::read_to_string(&p).unwrap();
            let m = parse_module(&text).unwrap_or_else(|e| panic!("{name}: {e}"));
            assert_eq!(validate(&m), vec![], "{name} must validate");
            (name, m)
        })
        .collect()
}

/// Chaotic iteration reference solver: sweep every block in graph order
/// until nothing changes. Same equations and boundary conventions as the
/// worklist solver, entirely different scheduling; fixpoints of a monotone
/// spec must agree bitwise.
pub fn solve_round_robin(graph: &FlowGraph, spec: &DataflowSpec) -> Solution {
    let n = graph.preds.len();
    let mut sol = Solution {
        in_of: vec![spec.top.clone(); n],
        out_of: vec![spec.top.clone(); n],
    };
    // Every set descends monotonically from top, so each of the 2n rows
    // changes at most width times and every non-final sweep changes
    // something: 2*n*width + 1 sweeps suffice.
    let max_sweeps = 2 * n * spec.top.width() + 2;
    for _ in 0..max_sweeps {
        let mut changed = false;
        for &b in graph.blocks {
            match spec.direction {
                Direction::Forward => {
                    let meet_part = if b == graph.entry {
                        spec.bottom.clone()
                    } else {
                        meet_over(spec, &sol, &graph.preds[b])
                    };
                    let new_in = (spec.alpha)(b).union(&meet_part);
                    changed |= new_in != sol.in_of[b];
                    sol.in_of[b] = new_in;
                    let new_out = (spec.gamma)(&sol, b);
                    changed |= new_out != sol.out_of[b];
                    sol.out_of[b] = new_out;
                }
                Direction::Backward => {
                    let meet_part = if graph.succs[b].is_empty() {
                        spec.bottom.clone()
                    } else {
                        meet_over(spec, &sol, &graph.succs[b])
                    };
                    let new_out = (spec.alpha)(b).union(&meet_part);
                    changed |= new_out != sol.out_of[b];
                    sol.out_of[b] = new_out;
                    let new_in = (spec.gamma)(&sol, b);
                    changed |= new_in != sol.in_of[b];
                    sol.in_of[b] = new_in;
                }
            }
        }
        if !changed {
            return sol;
        }
    }
    panic!("round-robin iteration did not converge");
}

fn meet_over(spec: &DataflowSpec, sol: &Solution, xs: &[usize]) -> BitVector {
    let mut acc: Option<BitVector> = None;
    for &x in xs {
        let v = (spec.beta)(sol, x);
        acc = Some(match acc {
            None => v,
            Some(a) => (spec.meet)(&a, &v),
        });
    }
    acc.unwrap_or_else(|| spec.top.clone())
}
