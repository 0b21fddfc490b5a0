//! DOT rendering of function control flow graphs, optionally annotated with
//! the motion analysis sets so a placement decision can be read straight off
//! the picture.
//!
//! One digraph per function: a box per block holding its label and
//! instructions, edges following the terminator (branch edges tagged T and
//! F). With an analysis attached, each block also lists the requested sets
//! as value numbers, e.g. `INSERTOUT: {v4}`.

use crate::ir::Function;
use crate::lcm::LcmAnalysis;
use std::fmt::Write;

/// Render the bare CFG.
pub fn function_to_dot(f: &Function) -> String {
    render(f, &[])
}

/// Render the CFG with the named analysis sets under each block. Names are
/// matched case-insensitively; an empty list selects all of them. The
/// analysis must have been computed on `f` as it is now (the analysis itself
/// reshapes the function by splitting critical edges, so dot the function it
/// left behind).
pub fn function_to_dot_with_sets(
    f: &Function,
    analysis: &LcmAnalysis,
    names: &[String],
) -> Result<String, String> {
    assert_eq!(
        analysis.sets.antloc.len(),
        f.blocks.len(),
        "analysis does not match this function"
    );
    let named = analysis.sets.named();
    let mut chosen = Vec::new();
    if names.is_empty() {
        chosen.extend(named.iter().map(|&(n, s)| (n, s)));
    } else {
        for want in names {
            let want = want.to_uppercase();
            match named.iter().find(|(n, _)| *n == want) {
                Some(&(n, s)) => chosen.push((n, s)),
                None => {
                    let all = named.iter().map(|(n, _)| *n).collect::<Vec<_>>().join(" ");
                    return Err(format!("unknown set: {want} (expected one of {all})"));
                }
            }
        }
    }
    let mut annotations = vec![String::new(); f.blocks.len()];
    for (b, out) in annotations.iter_mut().enumerate() {
        for (name, rows) in &chosen {
            let members = rows[b]
                .iter_ones()
                .map(|s| analysis.slots.vn_of_slot(s).to_string())
                .collect::<Vec<_>>()
                .join(" ");
            let _ = write!(out, "{name}: {{{members}}}\\l");
        }
    }
    Ok(render(f, &annotations))
}

fn render(f: &Function, annotations: &[String]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "digraph \"{}\" {{", escape(&f.name));
    let _ = writeln!(out, "  node [shape=box, fontname=\"monospace\"];");
    let _ = writeln!(out, "  label=\"@{}\";", escape(&f.name));
    for (i, b) in f.blocks.iter().enumerate() {
        let mut text = format!("{}:\\l", escape(&b.label));
        for ins in b.instrs() {
            let _ = write!(text, "  {}\\l", escape(&crate::ir::format_instr(ins)));
        }
        if let Some(extra) = annotations.get(i) {
            if !extra.is_empty() {
                text.push_str("|\\l");
                text.push_str(extra);
            }
        }
        let entry_attr = if i == 0 { ", penwidth=2" } else { "" };
        let _ = writeln!(out, "  b{i} [label=\"{text}\"{entry_attr}];");
    }
    for (i, b) in f.blocks.iter().enumerate() {
        let succs = b.successor_labels();
        let tagged = succs.len() == 2 && succs[0] != succs[1];
        for (k, s) in succs.iter().enumerate() {
            let Some(j) = f.block_index(s) else { continue };
            let tag = match (tagged, k) {
                (true, 0) => " [label=\"T\"]",
                (true, _) => " [label=\"F\"]",
                _ => "",
            };
            let _ = writeln!(out, "  b{i} -> b{j}{tag};");
        }
    }
    out.push_str("}\n");
    out
}

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}
