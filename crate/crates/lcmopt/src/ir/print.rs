//! Canonical text output. `parse(print(m))` reproduces `m`, and printing is
//! a fixpoint: `print(parse(print(m))) == print(m)`.

use super::{Block, Function, Instr, Module};
use std::fmt::Write;

pub fn print_module(m: &Module) -> String {
    let mut out = String::new();
    for (i, f) in m.functions.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        print_function(&mut out, f);
    }
    out
}

fn print_function(out: &mut String, f: &Function) {
    let params = f
        .params
        .iter()
        .map(|p| format!("%{p}"))
        .collect::<Vec<_>>()
        .join(", ");
    let _ = writeln!(out, "func @{}({}) {{", f.name, params);
    for b in &f.blocks {
        print_block(out, b);
    }
    out.push_str("}\n");
}

fn print_block(out: &mut String, b: &Block) {
    let _ = writeln!(out, "{}:", b.label);
    for ins in b.instrs() {
        let _ = writeln!(out, "  {}", format_instr(ins));
    }
}

pub(crate) fn format_instr(ins: &Instr) -> String {
    match ins {
        Instr::Bin {
            result,
            op,
            lhs,
            rhs,
        } => format!("%{result} = {} {lhs}, {rhs}", op.name()),
        Instr::Cmp {
            result,
            cc,
            lhs,
            rhs,
        } => format!("%{result} = cmp {} {lhs}, {rhs}", cc.name()),
        Instr::Const { result, value } => format!("%{result} = const {value}"),
        Instr::Opaque { result } => format!("%{result} = opaque"),
        Instr::Alloca { result } => format!("%{result} = alloca"),
        Instr::Load { result, addr } => format!("%{result} = load {addr}"),
        Instr::Phi { result, incomings } => {
            let args = incomings
                .iter()
                .map(|(label, v)| format!("{label}: {v}"))
                .collect::<Vec<_>>()
                .join(", ");
            format!("%{result} = phi [{args}]")
        }
        Instr::Store { value, addr } => format!("store {value}, {addr}"),
        Instr::Print { value } => format!("print {value}"),
        Instr::Jmp { target } => format!("jmp {target}"),
        Instr::Br {
            cond,
            then_target,
            else_target,
        } => format!("br {cond}, {then_target}, {else_target}"),
        Instr::Ret { value } => format!("ret {value}"),
    }
}

#[cfg(test)]
mod tests {
    use super::super::parse_module;
    use super::*;

    #[test]
    fn round_trip_is_fixpoint() {
        let text = "
func @f1(%a, %b) {
entry:
  %t = opaque
  br %t, bbT, bbF
bbT:
  %x1 = add %a, %b
  jmp join
bbF:
  %x0 = const 0
  jmp join
join:
  %x = phi [bbT: %x1, bbF: %x0]
  %y = add %a, %b
  print %x
  print %y
  ret %y
}
";
        let m = parse_module(text).unwrap();
        let once = print_module(&m);
        let twice = print_module(&parse_module(&once).unwrap());
        assert_eq!(once, twice);
        assert_eq!(parse_module(&once).unwrap(), m);
    }

    #[test]
    fn two_functions_separated_by_blank_line() {
        let m = parse_module("func @a() { e: ret 1 }\nfunc @b() { e: ret 2 }").unwrap();
        let text = print_module(&m);
        assert_eq!(
            text,
            "func @a() {\ne:\n  ret 1\n}\n\nfunc @b() {\ne:\n  ret 2\n}\n"
        );
    }
}
