//! Hash-based value numbering over reverse postorder.
//!
//! Every value name gets a number; two names share one exactly when the
//! table can prove they always hold equal runtime values. Candidate
//! expressions (arithmetic, bitwise, comparisons) are keyed by opcode and
//! operand numbers, with commutative operands sorted so `a+b` and `b+a`
//! collide. Each candidate number remembers its occurrences in RPO; the
//! first one is the leader whose operands later stand in for the whole
//! class.
//!
//! Numbering folds as it goes: forced results of equal operands, all-constant
//! operations, and identity/absorption patterns are rewritten immediately and
//! the dead instruction is dropped. Sources without algebraic structure
//! (parameters, `opaque`, `load`, `alloca`, phis that merge distinct
//! numbers) receive fresh numbers.

use crate::cfg::CfgInfo;
use crate::ir::{eval_bin, eval_cmp, BinOp, CmpCc, Function, Instr, Operand};
use std::collections::{BTreeMap, HashMap};
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Vn(pub u32);

impl fmt::Display for Vn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "v{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
enum ExprKey {
    Bin(BinOp, Vn, Vn),
    Cmp(CmpCc, Vn, Vn),
}

#[derive(Debug, Clone, Default)]
pub struct ValueTable {
    /// Number of every name (parameters, results, including some deleted
    /// names; deletions do not renumber).
    vn_of_name: BTreeMap<String, Vn>,
    vn_of_lit: BTreeMap<i64, Vn>,
    exprs: HashMap<ExprKey, Vn>,
    /// Result names of surviving candidate occurrences, in RPO order.
    /// Maintained by local CSE when it deletes duplicates.
    occurrences: BTreeMap<Vn, Vec<String>>,
    next: u32,
}

impl ValueTable {
    fn fresh(&mut self) -> Vn {
        let v = Vn(self.next);
        self.next += 1;
        v
    }

    /// Total numbers handed out; numbers are dense in `0..max_vn`.
    pub fn max_vn(&self) -> u32 {
        self.next
    }

    pub fn vn_of_name(&self, name: &str) -> Option<Vn> {
        self.vn_of_name.get(name).copied()
    }

    pub fn vn_of_operand(&self, op: &Operand) -> Option<Vn> {
        match op {
            Operand::Name(n) => self.vn_of_name(n),
            Operand::Lit(v) => self.vn_of_lit.get(v).copied(),
        }
    }

    fn lit_vn(&mut self, v: i64) -> Vn {
        if let Some(&vn) = self.vn_of_lit.get(&v) {
            return vn;
        }
        let vn = self.fresh();
        self.vn_of_lit.insert(v, vn);
        vn
    }

    /// Candidate occurrences of `v` still present, first is the leader.
    pub fn occurrences(&self, v: Vn) -> &[String] {
        self.occurrences.get(&v).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn candidate_vns(&self) -> impl Iterator<Item = Vn> + '_ {
        self.occurrences.keys().copied()
    }

    pub fn leader(&self, v: Vn) -> Option<&str> {
        self.occurrences(v).first().map(String::as_str)
    }

    /// Remove one occurrence (used by local CSE). The leader survives CSE by
    /// construction: it is the first occurrence of its block in RPO.
    pub fn remove_occurrence(&mut self, v: Vn, name: &str) {
        if let Some(list) = self.occurrences.get_mut(&v) {
            list.retain(|n| n != name);
        }
        self.vn_of_name.remove(name);
    }

    pub fn names_with_vns(&self) -> impl Iterator<Item = (&str, Vn)> {
        self.vn_of_name.iter().map(|(n, v)| (n.as_str(), *v))
    }
}

fn candidate_key(table: &mut ValueTable, ins: &Instr) -> Option<ExprKey> {
    let vn_of = |table: &mut ValueTable, op: &Operand| -> Option<Vn> {
        match op {
            Operand::Name(n) => table.vn_of_name(n),
            Operand::Lit(v) => Some(table.lit_vn(*v)),
        }
    };
    match ins {
        Instr::Bin { op, lhs, rhs, .. } => {
            let (mut a, mut b) = (vn_of(table, lhs)?, vn_of(table, rhs)?);
            if op.is_commutative() && b < a {
                std::mem::swap(&mut a, &mut b);
            }
            Some(ExprKey::Bin(*op, a, b))
        }
        Instr::Cmp { cc, lhs, rhs, .. } => {
            let (mut a, mut b) = (vn_of(table, lhs)?, vn_of(table, rhs)?);
            if cc.is_commutative() && b < a {
                std::mem::swap(&mut a, &mut b);
            }
            Some(ExprKey::Cmp(*cc, a, b))
        }
        _ => None,
    }
}

/// Outcome of trying to simplify a candidate before numbering it.
enum Simplified {
    /// Replace all uses with this operand and delete the instruction.
    To(Operand),
    Keep,
}

/// Algebraic rewrites that need no table state beyond operand numbers:
/// equal-operand forcing, full constant folding, and identities with 0/1.
/// Division is folded only when the divisor is a nonzero literal so a
/// runtime trap is never optimized away.
fn simplify(table: &ValueTable, ins: &Instr) -> Simplified {
    let lit = |op: &Operand| match op {
        Operand::Lit(v) => Some(*v),
        Operand::Name(_) => None,
    };
    match ins {
        Instr::Const { value, .. } => Simplified::To(Operand::Lit(*value)),
        Instr::Bin { op, lhs, rhs, .. } => {
            if let (Some(a), Some(b)) = (lit(lhs), lit(rhs)) {
                if let Some(v) = eval_bin(*op, a, b) {
                    return Simplified::To(Operand::Lit(v));
                }
                return Simplified::Keep; // division by literal zero
            }
            // x op x for idempotent ops.
            let same = match (table.vn_of_operand(lhs), table.vn_of_operand(rhs)) {
                (Some(a), Some(b)) => a == b,
                _ => false,
            };
            if same && matches!(op, BinOp::And | BinOp::Or) {
                return Simplified::To(lhs.clone());
            }
            // Identities and absorption with a literal on either side
            // (sub and div only simplify on the right).
            let with = |side: &Operand, other: &Operand, c: i64| -> Option<Operand> {
                if lit(side) == Some(c) {
                    Some(other.clone())
                } else {
                    None
                }
            };
            let simplified = match op {
                BinOp::Add | BinOp::Xor | BinOp::Or => {
                    with(rhs, lhs, 0).or_else(|| with(lhs, rhs, 0))
                }
                BinOp::Sub => with(rhs, lhs, 0),
                BinOp::Div => with(rhs, lhs, 1),
                BinOp::Mul => with(rhs, lhs, 1).or_else(|| with(lhs, rhs, 1)).or_else(|| {
                    (lit(lhs) == Some(0) || lit(rhs) == Some(0)).then(|| Operand::Lit(0))
                }),
                BinOp::And => (lit(lhs) == Some(0) || lit(rhs) == Some(0)).then(|| Operand::Lit(0)),
            };
            match simplified {
                Some(op) => Simplified::To(op),
                None => Simplified::Keep,
            }
        }
        Instr::Cmp { cc, lhs, rhs, .. } => {
            if let (Some(a), Some(b)) = (lit(lhs), lit(rhs)) {
                return Simplified::To(Operand::Lit(eval_cmp(*cc, a, b)));
            }
            let same = match (table.vn_of_operand(lhs), table.vn_of_operand(rhs)) {
                (Some(a), Some(b)) => a == b,
                _ => false,
            };
            if same {
                match cc {
                    CmpCc::Eq => return Simplified::To(Operand::Lit(1)),
                    CmpCc::Ne => return Simplified::To(Operand::Lit(0)),
                    _ => {}
                }
            }
            Simplified::Keep
        }
        _ => Simplified::Keep,
    }
}

/// Number every value in `f`, folding and deleting trivially redundant
/// candidates along the way. Occurrence lists come back in RPO order.
pub fn assign_value_numbers(f: &mut Function, cfg: &CfgInfo) -> ValueTable {
    let mut table = ValueTable::default();
    for p in f.params.clone() {
        let v = table.fresh();
        table.vn_of_name.insert(p, v);
    }

    for &bi in &cfg.rpo {
        // Phis first: reuse the incoming number when every incoming operand
        // already carries the same one (a back-edge operand without a number
        // blocks the merge, conservatively).
        for pi in 0..f.blocks[bi].phis.len() {
            let Instr::Phi { result, incomings } = &f.blocks[bi].phis[pi] else {
                continue;
            };
            let result = result.clone();
            let mut merged: Option<Vn> = None;
            let mut all_same = true;
            for (_, value) in incomings {
                let vn = match value {
                    Operand::Name(n) => table.vn_of_name(n),
                    Operand::Lit(v) => Some(table.lit_vn(*v)),
                };
                match (vn, merged) {
                    (Some(v), None) => merged = Some(v),
                    (Some(v), Some(m)) if v == m => {}
                    _ => {
                        all_same = false;
                        break;
                    }
                }
            }
            let vn = match merged {
                Some(m) if all_same => m,
                _ => table.fresh(),
            };
            table.vn_of_name.insert(result, vn);
        }

        let mut i = 0;
        while i < f.blocks[bi].body.len() {
            let ins = f.blocks[bi].body[i].clone();
            let Some(result) = ins.result().map(str::to_string) else {
                i += 1;
                continue;
            };
            if ins.is_candidate() || matches!(ins, Instr::Const { .. }) {
                match simplify(&table, &ins) {
                    Simplified::To(rep) => {
                        let vn = match &rep {
                            Operand::Name(n) => table
                                .vn_of_name(n)
                                .expect("replacement operand is already numbered"),
                            Operand::Lit(v) => table.lit_vn(*v),
                        };
                        table.vn_of_name.insert(result.clone(), vn);
                        f.blocks[bi].body.remove(i);
                        f.replace_uses(&result, &rep);
                        continue; // same index now holds the next instruction
                    }
                    Simplified::Keep => {}
                }
            }
            if ins.is_candidate() {
                let key = candidate_key(&mut table, &ins)
                    .expect("candidate operands are numbered in RPO");
                let vn = match table.exprs.get(&key) {
                    Some(&v) => v,
                    None => {
                        let v = table.fresh();
                        table.exprs.insert(key, v);
                        v
                    }
                };
                table.vn_of_name.insert(result.clone(), vn);
                table.occurrences.entry(vn).or_default().push(result);
            } else {
                // opaque, load, alloca: a fresh, unrelatable value.
                let v = table.fresh();
                table.vn_of_name.insert(result, v);
            }
            i += 1;
        }
    }
    table
}

/// Standalone normalization pass: constant folding, identity simplification,
/// and a canonical operand order for commutative operations (literal on the
/// right, names sorted). Equal-operand forcing and phi merging stay in full
/// value numbering. Returns the number of instructions rewritten or removed.
pub fn reassociate(f: &mut Function) -> usize {
    let mut changed = 0usize;
    loop {
        let mut progress = false;
        for bi in 0..f.blocks.len() {
            let mut i = 0;
            while i < f.blocks[bi].body.len() {
                let ins = f.blocks[bi].body[i].clone();
                let Some(result) = ins.result().map(str::to_string) else {
                    i += 1;
                    continue;
                };
                // Reuse the table-free subset of `simplify` by feeding it an
                // empty table: literal folding and identities apply, the
                // equal-VN arms never fire.
                let empty = ValueTable::default();
                if ins.is_candidate() || matches!(ins, Instr::Const { .. }) {
                    if let Simplified::To(rep) = simplify(&empty, &ins) {
                        f.blocks[bi].body.remove(i);
                        f.replace_uses(&result, &rep);
                        changed += 1;
                        progress = true;
                        continue;
                    }
                }
                if let Some(reordered) = canonical_order(&ins) {
                    if reordered != ins {
                        f.blocks[bi].body[i] = reordered;
                        changed += 1;
                        progress = true;
                    }
                }
                i += 1;
            }
        }
        if !progress {
            break;
        }
    }
    changed
}

/// Commutative operands in canonical order: names before literals, names
/// sorted by spelling. `None` when not a reorderable instruction.
fn canonical_order(ins: &Instr) -> Option<Instr> {
    let ordered = |lhs: &Operand, rhs: &Operand| -> (Operand, Operand) {
        let swap = match (lhs, rhs) {
            (Operand::Lit(_), Operand::Name(_)) => true,
            (Operand::Name(a), Operand::Name(b)) => b < a,
            _ => false,
        };
        if swap {
            (rhs.clone(), lhs.clone())
        } else {
            (lhs.clone(), rhs.clone())
        }
    };
    match ins {
        Instr::Bin {
            result,
            op,
            lhs,
            rhs,
        } if op.is_commutative() => {
            let (l, r) = ordered(lhs, rhs);
            Some(Instr::Bin {
                result: result.clone(),
                op: *op,
                lhs: l,
                rhs: r,
            })
        }
        Instr::Cmp {
            result,
            cc,
            lhs,
            rhs,
        } if cc.is_commutative() => {
            let (l, r) = ordered(lhs, rhs);
            Some(Instr::Cmp {
                result: result.clone(),
                cc: *cc,
                lhs: l,
                rhs: r,
            })
        }
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cfg::analyze_cfg;
    use crate::ir::{parse_module, print_module, Module};

    fn func_of(text: &str) -> Function {
        parse_module(text).unwrap().functions.remove(0)
    }

    fn numbered(text: &str) -> (Function, ValueTable) {
        let mut f = func_of(text);
        let cfg = analyze_cfg(&f);
        let table = assign_value_numbers(&mut f, &cfg);
        (f, table)
    }

    #[test]
    fn commutative_operands_share_a_number() {
        let (_, t) = numbered(
            "func @f(%a, %b) {
e:
  %x = add %a, %b
  %y = add %b, %a
  print %x
  print %y
  ret %y
}",
        );
        let vx = t.vn_of_name("x").unwrap();
        assert_eq!(t.vn_of_name("y"), Some(vx));
        assert_eq!(t.occurrences(vx), &["x".to_string(), "y".to_string()]);
        assert_eq!(t.leader(vx), Some("x"));
    }

    #[test]
    fn sub_is_not_commutative() {
        let (_, t) = numbered(
            "func @f(%a, %b) {
e:
  %x = sub %a, %b
  %y = sub %b, %a
  print %x
  print %y
  ret %y
}",
        );
        assert_ne!(t.vn_of_name("x"), t.vn_of_name("y"));
    }

    #[test]
    fn equal_operand_cmp_forced_and_deleted() {
        let (f, t) = numbered(
            "func @f(%a) {
e:
  %t = cmp eq %a, %a
  print %t
  ret %t
}",
        );
        assert!(f.blocks[0].body.iter().all(|i| !i.is_candidate()));
        assert_eq!(
            f.blocks[0].body[0],
            Instr::Print {
                value: Operand::Lit(1)
            }
        );
        // The deleted name keeps the literal's number.
        assert_eq!(t.vn_of_name("t"), t.vn_of_operand(&Operand::Lit(1)));
    }

    #[test]
    fn and_with_self_forces_operand() {
        let (f, _) = numbered(
            "func @f(%a) {
e:
  %t = and %a, %a
  print %t
  ret %t
}",
        );
        assert_eq!(
            f.blocks[0].body[0],
            Instr::Print {
                value: Operand::Name("a".into())
            }
        );
    }

    #[test]
    fn constants_fold_through_const_chain() {
        let (f, t) = numbered(
            "func @f() {
e:
  %c2 = const 2
  %c3 = const 3
  %u = add %c2, %c3
  %v = mul %u, %u
  print %v
  ret %v
}",
        );
        assert_eq!(
            f.blocks[0].body,
            vec![Instr::Print {
                value: Operand::Lit(25)
            }]
        );
        assert_eq!(t.vn_of_name("v"), t.vn_of_operand(&Operand::Lit(25)));
    }

    #[test]
    fn division_by_literal_zero_survives() {
        let (f, _) = numbered(
            "func @f() {
e:
  %d = div 5, 0
  print %d
  ret %d
}",
        );
        assert!(matches!(
            f.blocks[0].body[0],
            Instr::Bin { op: BinOp::Div, .. }
        ));
    }

    #[test]
    fn identities_simplify() {
        let (f, _) = numbered(
            "func @f(%a) {
e:
  %p = add %a, 0
  %q = mul %p, 1
  %r = xor 0, %q
  %s = sub %r, 0
  %t = div %s, 1
  %u = mul %t, 0
  %v = or %u, 0
  %w = and %v, 0
  print %w
  ret %t
}",
        );
        // Everything collapses: %w is 0, %t is %a.
        assert_eq!(
            f.blocks[0].body[0],
            Instr::Print {
                value: Operand::Lit(0)
            }
        );
        assert_eq!(
            f.blocks[0].terminator,
            Some(Instr::Ret {
                value: Operand::Name("a".into())
            })
        );
    }

    #[test]
    fn phi_with_uniform_inputs_reuses_number() {
        let (_, t) = numbered(
            "func @f(%a, %b, %c) {
e:
  br %c, l, r
l:
  %x1 = add %a, %b
  jmp j
r:
  %x2 = add %b, %a
  jmp j
j:
  %p = phi [l: %x1, r: %x2]
  %y = add %a, %b
  print %p
  ret %y
}",
        );
        let vab = t.vn_of_name("x1").unwrap();
        assert_eq!(t.vn_of_name("x2"), Some(vab));
        assert_eq!(t.vn_of_name("p"), Some(vab));
        assert_eq!(t.vn_of_name("y"), Some(vab));
        // The phi is not an occurrence; the adds are, in RPO order.
        assert_eq!(t.occurrences(vab).len(), 3);
        assert_eq!(t.leader(vab), Some("x1"));
    }

    #[test]
    fn loop_carried_phi_gets_fresh_number() {
        let (_, t) = numbered(
            "func @f(%n) {
entry:
  jmp h
h:
  %i = phi [entry: 0, h: %i2]
  %i2 = add %i, 1
  %c = cmp lt %i2, %n
  br %c, h, x
x:
  ret %i
}",
        );
        assert_ne!(t.vn_of_name("i"), t.vn_of_name("i2"));
        assert_ne!(t.vn_of_name("i"), t.vn_of_operand(&Operand::Lit(0)));
    }

    #[test]
    fn opaque_results_never_unify() {
        let (_, t) = numbered(
            "func @f() {
e:
  %p = opaque
  %q = opaque
  print %p
  print %q
  ret 0
}",
        );
        assert_ne!(t.vn_of_name("p"), t.vn_of_name("q"));
    }

    #[test]
    fn reassociate_folds_and_orders() {
        let mut m: Module = parse_module(
            "func @f(%b, %a) {
e:
  %c = const 4
  %u = add %c, 4
  %x = add %b, %a
  %y = mul 3, %x
  print %u
  print %y
  ret %y
}",
        )
        .unwrap();
        let n = reassociate(&mut m.functions[0]);
        assert!(n >= 3);
        let text = print_module(&m);
        assert!(text.contains("print 8"), "{text}");
        assert!(text.contains("%x = add %a, %b"), "{text}");
        assert!(text.contains("%y = mul %x, 3"), "{text}");
    }

    #[test]
    fn reassociate_keeps_trapping_div() {
        let mut f = func_of("func @f() { e: %z = const 0\n %d = div 5, %z\n ret %d }");
        reassociate(&mut f);
        assert!(matches!(
            f.blocks[0].body[0],
            Instr::Bin {
                op: BinOp::Div,
                lhs: Operand::Lit(5),
                rhs: Operand::Lit(0),
                ..
            }
        ));
    }
}
