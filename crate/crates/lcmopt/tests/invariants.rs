//! Corpus-wide structural properties: facts that must hold for every
//! program in the corpus regardless of its shape, checked independently of
//! the unit fixtures.

mod common;

use common::{cases_for, load_corpus};
use lcmopt::cfg::analyze_cfg;
use lcmopt::interp::{execute_checking_vns, Termination, DEFAULT_FUEL};
use lcmopt::ir::{parse_module, print_module, validate, Instr, Module};
use lcmopt::normalize::{mem2reg_promote, split_critical_edges};
use lcmopt::pipeline::{optimize_module_seq, pre_pipeline};
use lcmopt::vn::assign_value_numbers;

/// Printing and reparsing is a fixpoint: the text format loses nothing.
#[test]
fn print_parse_round_trips() {
    for (name, m) in load_corpus() {
        let text = print_module(&m);
        let again = parse_module(&text).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert_eq!(text, print_module(&again), "{name}");
    }
}

/// Dynamic soundness of the numbering: running each function under the
/// checking interpreter, two names with the same number never hold
/// different values at the same time. The checker panics on disagreement.
#[test]
fn equal_numbers_mean_equal_runtime_values() {
    for (name, m) in load_corpus() {
        for f in &m.functions {
            let mut g = f.clone();
            let cfg = analyze_cfg(&g);
            let table = assign_value_numbers(&mut g, &cfg);
            // Numbering may fold literal expressions in place, so execute
            // the folded copy the table describes.
            let probe = Module { functions: vec![g] };
            for (args, tape) in cases_for(f.params.len()) {
                execute_checking_vns(&probe, &f.name, &args, &tape, DEFAULT_FUEL, &table)
                    .unwrap_or_else(|e| panic!("{name} @{}: {e}", f.name));
            }
        }
    }
}

/// Store-to-load promotion is idempotent: a second run finds nothing left
/// to promote and changes nothing.
#[test]
fn promotion_is_idempotent() {
    for (name, m) in load_corpus() {
        for f in &m.functions {
            let mut once = f.clone();
            mem2reg_promote(&mut once);
            let frozen = print_module(&Module {
                functions: vec![once.clone()],
            });
            let (promoted, _) = mem2reg_promote(&mut once);
            assert_eq!(promoted, 0, "{name} @{}", f.name);
            let twice = print_module(&Module {
                functions: vec![once],
            });
            assert_eq!(frozen, twice, "{name} @{}", f.name);
        }
    }
}

/// Edge splitting is idempotent and leaves no critical edge: afterwards no
/// block with several successors feeds a block with several predecessors.
#[test]
fn split_edges_are_gone_and_stay_gone() {
    for (name, m) in load_corpus() {
        for f in &m.functions {
            let mut g = f.clone();
            split_critical_edges(&mut g);
            let cfg = analyze_cfg(&g);
            for b in 0..g.blocks.len() {
                if cfg.succs[b].len() < 2 {
                    continue;
                }
                for &s in &cfg.succs[b] {
                    assert!(
                        cfg.preds[s].len() < 2,
                        "{name} @{}: edge {} -> {} is critical",
                        f.name,
                        g.blocks[b].label,
                        g.blocks[s].label
                    );
                }
            }
            assert_eq!(split_critical_edges(&mut g), 0, "{name} @{}", f.name);
        }
    }
}

/// The tree-derived dominance relation agrees with the definition: v
/// dominates w exactly when deleting v cuts every entry-to-w path.
#[test]
fn dominators_match_the_path_cutting_definition() {
    for (name, m) in load_corpus() {
        for f in &m.functions {
            let cfg = analyze_cfg(f);
            let reach_without = |cut: Option<usize>| -> Vec<bool> {
                let mut seen = vec![false; f.blocks.len()];
                if cut == Some(0) {
                    return seen;
                }
                let mut stack = vec![0];
                seen[0] = true;
                while let Some(b) = stack.pop() {
                    for &s in &cfg.succs[b] {
                        if Some(s) != cut && !seen[s] {
                            seen[s] = true;
                            stack.push(s);
                        }
                    }
                }
                seen
            };
            let reachable = reach_without(None);
            for v in 0..f.blocks.len() {
                if !reachable[v] {
                    continue;
                }
                let cut = reach_without(Some(v));
                for w in 0..f.blocks.len() {
                    if !reachable[w] {
                        continue;
                    }
                    let brute = v == w || !cut[w];
                    assert_eq!(
                        cfg.dominates(v, w),
                        brute,
                        "{name} @{}: {} vs {}",
                        f.name,
                        f.blocks[v].label,
                        f.blocks[w].label
                    );
                }
            }
        }
    }
}

/// The full motion pipeline emits valid functions with no leftover slot
/// traffic: every stack slot the motion pass introduces sits in the entry
/// block, so the following promotion pass always erases it, and the corpus
/// programs own allocas promote with it.
#[test]
fn moved_programs_are_valid_and_slot_free() {
    for (name, m) in load_corpus() {
        let mut moved = m.clone();
        optimize_module_seq(&mut moved, &pre_pipeline()).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert_eq!(validate(&moved), vec![], "{name}");
        for f in &moved.functions {
            for b in &f.blocks {
                for i in &b.body {
                    assert!(
                        !matches!(
                            i,
                            Instr::Alloca { .. } | Instr::Load { .. } | Instr::Store { .. }
                        ),
                        "{name} @{}: {} keeps memory traffic",
                        f.name,
                        b.label
                    );
                }
            }
        }
    }
}

/// Termination totals: every corpus case ends by returning or by a division
/// trap, never by running out of fuel; the corpus stays cheap enough for
/// the differential harness to sweep exhaustively.
#[test]
fn every_corpus_case_terminates_within_fuel() {
    for (name, m) in load_corpus() {
        for f in &m.functions {
            let mut g = f.clone();
            let cfg = analyze_cfg(&g);
            let table = assign_value_numbers(&mut g, &cfg);
            let probe = Module { functions: vec![g] };
            for (args, tape) in cases_for(f.params.len()) {
                let p = execute_checking_vns(&probe, &f.name, &args, &tape, DEFAULT_FUEL, &table)
                    .unwrap();
                assert!(
                    !matches!(p.termination, Termination::FuelExhausted),
                    "{name} @{} args={args:?} tape={tape:?}",
                    f.name
                );
            }
        }
    }
}
