//! IR data types.
//!
//! A module is a list of functions; a function is a list of basic blocks in
//! textual order, the first block being the entry. Values are 64-bit signed
//! integers with wrapping arithmetic so that constant folding and the
//! interpreter agree exactly. All value names live in a single per-function
//! SSA namespace that also contains the parameters.

mod parse;
mod print;
mod validate;

pub use parse::{parse_module, ParseError};
pub(crate) use print::format_instr;
pub use print::print_module;
pub use validate::{validate, validate_function, Diagnostic};

use std::collections::BTreeSet;
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    And,
    Or,
    Xor,
}

impl BinOp {
    pub fn name(self) -> &'static str {
        match self {
            BinOp::Add => "add",
            BinOp::Sub => "sub",
            BinOp::Mul => "mul",
            BinOp::Div => "div",
            BinOp::And => "and",
            BinOp::Or => "or",
            BinOp::Xor => "xor",
        }
    }

    /// Operand order is irrelevant to the result.
    pub fn is_commutative(self) -> bool {
        matches!(
            self,
            BinOp::Add | BinOp::Mul | BinOp::And | BinOp::Or | BinOp::Xor
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum CmpCc {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl CmpCc {
    pub fn name(self) -> &'static str {
        match self {
            CmpCc::Eq => "eq",
            CmpCc::Ne => "ne",
            CmpCc::Lt => "lt",
            CmpCc::Le => "le",
            CmpCc::Gt => "gt",
            CmpCc::Ge => "ge",
        }
    }

    pub fn is_commutative(self) -> bool {
        matches!(self, CmpCc::Eq | CmpCc::Ne)
    }
}

/// Wrapping two's-complement evaluation. `None` means division by zero; the
/// caller decides whether that is a trap (interpreter) or a reason not to
/// fold (value numbering).
pub fn eval_bin(op: BinOp, a: i64, b: i64) -> Option<i64> {
    Some(match op {
        BinOp::Add => a.wrapping_add(b),
        BinOp::Sub => a.wrapping_sub(b),
        BinOp::Mul => a.wrapping_mul(b),
        BinOp::Div => {
            if b == 0 {
                return None;
            }
            a.wrapping_div(b)
        }
        BinOp::And => a & b,
        BinOp::Or => a | b,
        BinOp::Xor => a ^ b,
    })
}

/// Comparisons yield 0 or 1.
pub fn eval_cmp(cc: CmpCc, a: i64, b: i64) -> i64 {
    let r = match cc {
        CmpCc::Eq => a == b,
        CmpCc::Ne => a != b,
        CmpCc::Lt => a < b,
        CmpCc::Le => a <= b,
        CmpCc::Gt => a > b,
        CmpCc::Ge => a >= b,
    };
    r as i64
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Operand {
    /// Reference to an SSA name or a parameter, without the `%` sigil.
    Name(String),
    Lit(i64),
}

impl Operand {
    pub fn name(&self) -> Option<&str> {
        match self {
            Operand::Name(n) => Some(n),
            Operand::Lit(_) => None,
        }
    }
}

impl fmt::Display for Operand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Operand::Name(n) => write!(f, "%{n}"),
            Operand::Lit(v) => write!(f, "{v}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Instr {
    Bin {
        result: String,
        op: BinOp,
        lhs: Operand,
        rhs: Operand,
    },
    Cmp {
        result: String,
        cc: CmpCc,
        lhs: Operand,
        rhs: Operand,
    },
    Const {
        result: String,
        value: i64,
    },
    /// Reads the next value from the external input tape. Impure: never a
    /// motion candidate, never deleted.
    Opaque {
        result: String,
    },
    Alloca {
        result: String,
    },
    Load {
        result: String,
        addr: Operand,
    },
    Phi {
        result: String,
        incomings: Vec<(String, Operand)>,
    },
    Store {
        value: Operand,
        addr: Operand,
    },
    Print {
        value: Operand,
    },
    Jmp {
        target: String,
    },
    Br {
        cond: Operand,
        then_target: String,
        else_target: String,
    },
    Ret {
        value: Operand,
    },
}

impl Instr {
    pub fn result(&self) -> Option<&str> {
        match self {
            Instr::Bin { result, .. }
            | Instr::Cmp { result, .. }
            | Instr::Const { result, .. }
            | Instr::Opaque { result }
            | Instr::Alloca { result }
            | Instr::Load { result, .. }
            | Instr::Phi { result, .. } => Some(result),
            _ => None,
        }
    }

    pub fn operands(&self) -> Vec<&Operand> {
        match self {
            Instr::Bin { lhs, rhs, .. } | Instr::Cmp { lhs, rhs, .. } => vec![lhs, rhs],
            Instr::Load { addr, .. } => vec![addr],
            Instr::Phi { incomings, .. } => incomings.iter().map(|(_, v)| v).collect(),
            Instr::Store { value, addr } => vec![value, addr],
            Instr::Print { value } | Instr::Ret { value } => vec![value],
            Instr::Br { cond, .. } => vec![cond],
            Instr::Const { .. }
            | Instr::Opaque { .. }
            | Instr::Alloca { .. }
            | Instr::Jmp { .. } => {
                vec![]
            }
        }
    }

    pub fn operands_mut(&mut self) -> Vec<&mut Operand> {
        match self {
            Instr::Bin { lhs, rhs, .. } | Instr::Cmp { lhs, rhs, .. } => vec![lhs, rhs],
            Instr::Load { addr, .. } => vec![addr],
            Instr::Phi { incomings, .. } => incomings.iter_mut().map(|(_, v)| v).collect(),
            Instr::Store { value, addr } => vec![value, addr],
            Instr::Print { value } | Instr::Ret { value } => vec![value],
            Instr::Br { cond, .. } => vec![cond],
            Instr::Const { .. }
            | Instr::Opaque { .. }
            | Instr::Alloca { .. }
            | Instr::Jmp { .. } => {
                vec![]
            }
        }
    }

    pub fn is_terminator(&self) -> bool {
        matches!(
            self,
            Instr::Jmp { .. } | Instr::Br { .. } | Instr::Ret { .. }
        )
    }

    /// Expressions eligible for value-number-based motion.
    pub fn is_candidate(&self) -> bool {
        matches!(self, Instr::Bin { .. } | Instr::Cmp { .. })
    }

    /// Produces a value and has no side effect, so it may be deleted when the
    /// result is unused. `opaque` advances the input tape and stays.
    pub fn is_removable_value(&self) -> bool {
        matches!(
            self,
            Instr::Bin { .. }
                | Instr::Cmp { .. }
                | Instr::Const { .. }
                | Instr::Alloca { .. }
                | Instr::Load { .. }
                | Instr::Phi { .. }
        )
    }

    /// Branch targets, in textual order. `None` for non-terminators.
    pub fn successors(&self) -> Option<Vec<&str>> {
        match self {
            Instr::Jmp { target } => Some(vec![target]),
            Instr::Br {
                then_target,
                else_target,
                ..
            } => Some(vec![then_target, else_target]),
            Instr::Ret { .. } => Some(vec![]),
            _ => None,
        }
    }

    pub fn opcode_name(&self) -> &'static str {
        match self {
            Instr::Bin { op, .. } => op.name(),
            Instr::Cmp { .. } => "cmp",
            Instr::Const { .. } => "const",
            Instr::Opaque { .. } => "opaque",
            Instr::Alloca { .. } => "alloca",
            Instr::Load { .. } => "load",
            Instr::Phi { .. } => "phi",
            Instr::Store { .. } => "store",
            Instr::Print { .. } => "print",
            Instr::Jmp { .. } => "jmp",
            Instr::Br { .. } => "br",
            Instr::Ret { .. } => "ret",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Block {
    pub label: String,
    pub phis: Vec<Instr>,
    pub body: Vec<Instr>,
    /// Always `Some` for parsed input; `None` is representable so that
    /// programmatically built functions can be diagnosed by `validate`.
    pub terminator: Option<Instr>,
}

impl Block {
    pub fn new(label: impl Into<String>) -> Block {
        Block {
            label: label.into(),
            phis: Vec::new(),
            body: Vec::new(),
            terminator: None,
        }
    }

    /// Phis, body, then terminator.
    pub fn instrs(&self) -> impl Iterator<Item = &Instr> {
        self.phis
            .iter()
            .chain(self.body.iter())
            .chain(self.terminator.iter())
    }

    pub fn instrs_mut(&mut self) -> impl Iterator<Item = &mut Instr> {
        self.phis
            .iter_mut()
            .chain(self.body.iter_mut())
            .chain(self.terminator.iter_mut())
    }

    pub fn successor_labels(&self) -> Vec<&str> {
        self.terminator
            .as_ref()
            .and_then(|t| t.successors())
            .unwrap_or_default()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Function {
    pub name: String,
    pub params: Vec<String>,
    pub blocks: Vec<Block>,
}

/// Where a name is defined inside a block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DefPos {
    Phi(usize),
    Body(usize),
}

impl Function {
    pub fn entry(&self) -> &Block {
        &self.blocks[0]
    }

    pub fn block_index(&self, label: &str) -> Option<usize> {
        self.blocks.iter().position(|b| b.label == label)
    }

    pub fn block(&self, label: &str) -> Option<&Block> {
        self.blocks.iter().find(|b| b.label == label)
    }

    pub fn block_mut(&mut self, label: &str) -> Option<&mut Block> {
        self.blocks.iter_mut().find(|b| b.label == label)
    }

    /// Block index and position of the instruction defining `name`.
    /// Parameters are not in the map.
    pub fn def_site(&self, name: &str) -> Option<(usize, DefPos)> {
        for (bi, b) in self.blocks.iter().enumerate() {
            for (i, p) in b.phis.iter().enumerate() {
                if p.result() == Some(name) {
                    return Some((bi, DefPos::Phi(i)));
                }
            }
            for (i, ins) in b.body.iter().enumerate() {
                if ins.result() == Some(name) {
                    return Some((bi, DefPos::Body(i)));
                }
            }
        }
        None
    }

    /// The instruction at a position previously returned by `def_site`.
    pub fn instr_at(&self, bi: usize, pos: DefPos) -> &Instr {
        match pos {
            DefPos::Phi(i) => &self.blocks[bi].phis[i],
            DefPos::Body(i) => &self.blocks[bi].body[i],
        }
    }

    pub fn is_param(&self, name: &str) -> bool {
        self.params.iter().any(|p| p == name)
    }

    /// Every value name in use: parameters and instruction results.
    pub fn value_names(&self) -> BTreeSet<String> {
        let mut out: BTreeSet<String> = self.params.iter().cloned().collect();
        for b in &self.blocks {
            for ins in b.instrs() {
                if let Some(r) = ins.result() {
                    out.insert(r.to_string());
                }
            }
        }
        out
    }

    pub fn block_labels(&self) -> BTreeSet<String> {
        self.blocks.iter().map(|b| b.label.clone()).collect()
    }

    /// Rewrite every use of `old` (operands, phi incomings, terminator
    /// operands) to `new`. Definitions are left alone.
    pub fn replace_uses(&mut self, old: &str, new: &Operand) {
        for b in &mut self.blocks {
            for ins in b.instrs_mut() {
                for op in ins.operands_mut() {
                    if op.name() == Some(old) {
                        *op = new.clone();
                    }
                }
            }
        }
    }

    /// Count uses of `name` across the whole function.
    pub fn use_count(&self, name: &str) -> usize {
        let mut n = 0;
        for b in &self.blocks {
            for ins in b.instrs() {
                n += ins
                    .operands()
                    .iter()
                    .filter(|o| o.name() == Some(name))
                    .count();
            }
        }
        n
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Module {
    pub functions: Vec<Function>,
}

impl Module {
    pub fn function(&self, name: &str) -> Option<&Function> {
        self.functions.iter().find(|f| f.name == name)
    }
}

/// Deterministic generator for fresh value names and block labels within one
/// function. Seeded with everything already taken so renames never collide.
#[derive(Debug)]
pub struct FreshNames {
    values: BTreeSet<String>,
    labels: BTreeSet<String>,
}

impl FreshNames {
    pub fn for_function(f: &Function) -> FreshNames {
        FreshNames {
            values: f.value_names(),
            labels: f.block_labels(),
        }
    }

    pub fn value(&mut self, base: &str) -> String {
        let mut i = 0usize;
        loop {
            let cand = format!("{base}{i}");
            if self.values.insert(cand.clone()) {
                return cand;
            }
            i += 1;
        }
    }

    pub fn label(&mut self, base: &str) -> String {
        let mut i = 0usize;
        loop {
            let cand = format!("{base}{i}");
            if self.labels.insert(cand.clone()) {
                return cand;
            }
            i += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wrapping_semantics() {
        assert_eq!(eval_bin(BinOp::Add, i64::MAX, 1), Some(i64::MIN));
        assert_eq!(eval_bin(BinOp::Mul, i64::MIN, -1), Some(i64::MIN));
        assert_eq!(eval_bin(BinOp::Div, i64::MIN, -1), Some(i64::MIN));
        assert_eq!(eval_bin(BinOp::Div, 7, 0), None);
        assert_eq!(eval_cmp(CmpCc::Le, 3, 3), 1);
        assert_eq!(eval_cmp(CmpCc::Gt, 3, 3), 0);
    }

    #[test]
    fn fresh_names_avoid_existing() {
        let f = Function {
            name: "f".into(),
            params: vec!["a".into()],
            blocks: vec![{
                let mut b = Block::new("entry");
                b.body.push(Instr::Const {
                    result: "t0".into(),
                    value: 1,
                });
                b.terminator = Some(Instr::Ret {
                    value: Operand::Name("t0".into()),
                });
                b
            }],
        };
        let mut fresh = FreshNames::for_function(&f);
        assert_eq!(fresh.value("t"), "t1");
        assert_eq!(fresh.value("t"), "t2");
        assert_eq!(fresh.label("entry"), "entry0");
    }
}
