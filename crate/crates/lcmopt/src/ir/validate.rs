//! Structural and SSA well-formedness checks. Run after parsing and after
//! every pass; a non-empty result means the input is malformed or a pass has
//! a bug.

use super::{DefPos, Function, Instr, Module};
use crate::cfg::analyze_cfg;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub function: String,
    pub block: Option<String>,
    pub detail: String,
}

impl Diagnostic {
    fn new(function: &str, block: Option<&str>, detail: impl Into<String>) -> Diagnostic {
        Diagnostic {
            function: function.to_string(),
            block: block.map(|b| b.to_string()),
            detail: detail.into(),
        }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.block {
            Some(b) => write!(f, "@{}, block {}: {}", self.function, b, self.detail),
            None => write!(f, "@{}: {}", self.function, self.detail),
        }
    }
}

pub fn validate(m: &Module) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let mut seen = BTreeSet::new();
    for f in &m.functions {
        if !seen.insert(f.name.clone()) {
            out.push(Diagnostic::new(
                &f.name,
                None,
                "duplicate function name in module",
            ));
        }
        out.extend(validate_function(f));
    }
    out
}

pub fn validate_function(f: &Function) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    if f.blocks.is_empty() {
        out.push(Diagnostic::new(&f.name, None, "function has no blocks"));
        return out;
    }

    // Single definition per name, parameters included.
    let mut def_blocks: BTreeMap<String, String> = BTreeMap::new();
    for p in &f.params {
        if def_blocks.insert(p.clone(), "<params>".into()).is_some() {
            out.push(Diagnostic::new(
                &f.name,
                None,
                format!("duplicate definition of %{p}"),
            ));
        }
    }
    for b in &f.blocks {
        for ins in b.instrs() {
            if let Some(r) = ins.result() {
                if def_blocks.insert(r.to_string(), b.label.clone()).is_some() {
                    out.push(Diagnostic::new(
                        &f.name,
                        Some(&b.label),
                        format!("duplicate definition of %{r}"),
                    ));
                }
            }
        }
    }

    // Shape: phis up front, exactly one terminator, known labels.
    let labels = f.block_labels();
    for b in &f.blocks {
        for p in &b.phis {
            if !matches!(p, Instr::Phi { .. }) {
                out.push(Diagnostic::new(
                    &f.name,
                    Some(&b.label),
                    "non-phi instruction in phi list",
                ));
            }
        }
        for ins in &b.body {
            if matches!(ins, Instr::Phi { .. }) {
                out.push(Diagnostic::new(
                    &f.name,
                    Some(&b.label),
                    "phi after non-phi instruction",
                ));
            }
            if ins.is_terminator() {
                out.push(Diagnostic::new(
                    &f.name,
                    Some(&b.label),
                    "terminator in block body",
                ));
            }
        }
        match &b.terminator {
            None => out.push(Diagnostic::new(
                &f.name,
                Some(&b.label),
                format!("no terminator in {}", b.label),
            )),
            Some(t) if !t.is_terminator() => out.push(Diagnostic::new(
                &f.name,
                Some(&b.label),
                "last instruction is not a terminator",
            )),
            Some(t) => {
                for target in t.successors().unwrap_or_default() {
                    if !labels.contains(target) {
                        out.push(Diagnostic::new(
                            &f.name,
                            Some(&b.label),
                            format!("branch to unknown label {target}"),
                        ));
                    }
                }
            }
        }
    }
    if !out.is_empty() {
        // CFG construction below assumes structural sanity.
        return out;
    }

    let cfg = analyze_cfg(f);

    // The entry must not be a branch target.
    if !cfg.preds[0].is_empty() {
        out.push(Diagnostic::new(
            &f.name,
            Some(&f.blocks[0].label),
            "entry block has predecessors",
        ));
    }

    // Phi incoming labels must be exactly the predecessors.
    for (bi, b) in f.blocks.iter().enumerate() {
        let pred_labels: BTreeSet<&str> = cfg.preds[bi]
            .iter()
            .map(|&p| f.blocks[p].label.as_str())
            .collect();
        for phi in &b.phis {
            let Instr::Phi { result, incomings } = phi else {
                continue;
            };
            let in_labels: BTreeSet<&str> = incomings.iter().map(|(l, _)| l.as_str()).collect();
            if in_labels.len() != incomings.len() {
                out.push(Diagnostic::new(
                    &f.name,
                    Some(&b.label),
                    format!("%{result}: duplicate incoming label"),
                ));
            }
            if in_labels != pred_labels {
                out.push(Diagnostic::new(
                    &f.name,
                    Some(&b.label),
                    format!(
                        "%{result}: phi incoming labels {{{}}} do not match predecessors {{{}}}",
                        in_labels.iter().copied().collect::<Vec<_>>().join(", "),
                        pred_labels.iter().copied().collect::<Vec<_>>().join(", ")
                    ),
                ));
            }
        }
    }

    // Every use must be dominated by its definition. A phi use counts as a
    // use at the end of the incoming predecessor. Unreachable blocks are
    // checked only for the definitions above.
    for (bi, b) in f.blocks.iter().enumerate() {
        if !cfg.is_reachable(bi) {
            continue;
        }
        let check_use =
            |name: &str, use_pos: Option<DefPos>, ctx: &str, out: &mut Vec<Diagnostic>| {
                if f.is_param(name) {
                    return;
                }
                let Some((db, dpos)) = f.def_site(name) else {
                    out.push(Diagnostic::new(
                        &f.name,
                        Some(&b.label),
                        format!("{ctx}: use of undefined value %{name}"),
                    ));
                    return;
                };
                let dominated = match use_pos {
                    // Use at end of block `bi` (phi incoming path).
                    None => cfg.dominates(db, bi),
                    Some(upos) => {
                        if db != bi {
                            cfg.dominates(db, bi)
                        } else {
                            match (dpos, upos) {
                                (DefPos::Phi(_), DefPos::Body(_)) => true,
                                (DefPos::Phi(d), DefPos::Phi(u)) => d < u,
                                (DefPos::Body(d), DefPos::Body(u)) => d < u,
                                (DefPos::Body(_), DefPos::Phi(_)) => false,
                            }
                        }
                    }
                };
                if !dominated {
                    out.push(Diagnostic::new(
                        &f.name,
                        Some(&b.label),
                        format!("{ctx}: use of %{name} not dominated by its definition"),
                    ));
                }
            };

        for (pi, phi) in b.phis.iter().enumerate() {
            let Instr::Phi { result, incomings } = phi else {
                continue;
            };
            for (label, value) in incomings {
                if let Some(name) = value.name() {
                    let Some(pred) = f.block_index(label) else {
                        continue;
                    };
                    // Evaluated on the edge, i.e. at the end of the predecessor.
                    if f.is_param(name) {
                        continue;
                    }
                    let Some((db, _)) = f.def_site(name) else {
                        out.push(Diagnostic::new(
                            &f.name,
                            Some(&b.label),
                            format!("%{result}: use of undefined value %{name}"),
                        ));
                        continue;
                    };
                    if cfg.is_reachable(pred) && !cfg.dominates(db, pred) {
                        out.push(Diagnostic::new(
                            &f.name,
                            Some(&b.label),
                            format!(
                                "%{result}: incoming %{name} from {label} not dominated by its definition"
                            ),
                        ));
                    }
                    let _ = pi;
                }
            }
        }
        for (i, ins) in b.body.iter().enumerate() {
            for op in ins.operands() {
                if let Some(name) = op.name() {
                    check_use(
                        name,
                        Some(DefPos::Body(i)),
                        &format!("instruction {i}"),
                        &mut out,
                    );
                }
            }
        }
        if let Some(t) = &b.terminator {
            for op in t.operands() {
                if let Some(name) = op.name() {
                    check_use(
                        name,
                        Some(DefPos::Body(b.body.len())),
                        "terminator",
                        &mut out,
                    );
                }
            }
        }
    }

    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::parse_module;

    fn func_of(text: &str) -> Function {
        parse_module(text).unwrap().functions.remove(0)
    }

    #[test]
    fn clean_function_passes() {
        let f = func_of(
            "func @f(%a, %b) {
entry:
  %t = opaque
  br %t, l, r
l:
  %x = add %a, %b
  jmp j
r:
  jmp j
j:
  %p = phi [l: %x, r: 0]
  ret %p
}",
        );
        assert!(validate_function(&f).is_empty());
    }

    #[test]
    fn use_before_def_in_block_flagged() {
        let mut f = func_of("func @f(%a) { e: %x = add %a, 1\n %y = add %x, 1\n ret %y }");
        f.blocks[0].body.swap(0, 1);
        let diags = validate_function(&f);
        assert!(
            diags.iter().any(|d| d.detail.contains("not dominated")),
            "{diags:?}"
        );
    }

    #[test]
    fn phi_label_mismatch_flagged() {
        let mut f = func_of(
            "func @f(%c) {
e:
  br %c, a, b
a:
  jmp j
b:
  jmp j
j:
  %p = phi [a: 1, b: 2]
  ret %p
}",
        );
        if let Instr::Phi { incomings, .. } = &mut f.blocks[3].phis[0] {
            incomings.pop();
        }
        let diags = validate_function(&f);
        assert!(
            diags
                .iter()
                .any(|d| d.detail.contains("do not match predecessors")),
            "{diags:?}"
        );
    }

    #[test]
    fn missing_terminator_flagged() {
        let mut f = func_of("func @f() { e: ret 0 }");
        f.blocks[0].terminator = None;
        let diags = validate_function(&f);
        assert!(diags.iter().any(|d| d.detail.contains("no terminator")));
    }

    #[test]
    fn phi_use_across_back_edge_ok() {
        let f = func_of(
            "func @f(%n) {
entry:
  jmp h
h:
  %i = phi [entry: 0, h: %i2]
  %i2 = add %i, 1
  %c = cmp lt %i2, %n
  br %c, h, x
x:
  ret %i2
}",
        );
        assert!(validate_function(&f).is_empty());
    }

    #[test]
    fn entry_with_predecessor_flagged() {
        let f = func_of("func @f() { e: jmp e }");
        let diags = validate_function(&f);
        assert!(diags
            .iter()
            .any(|d| d.detail.contains("entry block has predecessors")));
    }

    #[test]
    fn duplicate_function_names_flagged() {
        let m = parse_module("func @a() { e: ret 0 }\nfunc @a() { e: ret 1 }").unwrap();
        let diags = validate(&m);
        assert!(diags
            .iter()
            .any(|d| d.detail.contains("duplicate function name")));
    }
}
