//! Small-step reference interpreter. Executions are pure functions of the
//! module, entry function, arguments, opaque input tape, and fuel, which
//! makes before/after optimization runs directly comparable.
//!
//! Memory is a growable array of slots, zero by default; an `alloca` claims
//! the next slot and yields its index. Loads outside the allocated range
//! read 0 and stray stores are dropped, so a deleted alloca can never turn
//! into undefined behavior. `opaque` consumes the next tape value (0 once
//! the tape runs dry). All arithmetic wraps; only division by zero traps.

use crate::ir::{eval_bin, eval_cmp, BinOp, Function, Instr, Module, Operand};
use std::collections::BTreeMap;
use std::fmt;

pub const DEFAULT_FUEL: u64 = 10_000_000;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Termination {
    Returned(i64),
    TrappedDiv0,
    FuelExhausted,
}

impl fmt::Display for Termination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Termination::Returned(v) => write!(f, "returned {v}"),
            Termination::TrappedDiv0 => write!(f, "trapped: division by zero"),
            Termination::FuelExhausted => write!(f, "fuel exhausted"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExecProfile {
    pub printed: Vec<i64>,
    pub termination: Termination,
    /// Executed-instruction counts keyed by opcode name; comparisons are
    /// unified under "cmp".
    pub op_counts: BTreeMap<&'static str, u64>,
    pub steps: u64,
}

impl ExecProfile {
    /// The observable part of an execution: printed values, return value,
    /// and how the run ended.
    pub fn behavior(&self) -> (&[i64], &Termination) {
        (&self.printed, &self.termination)
    }

    /// Dynamic count of code-motion candidates: binary arithmetic plus
    /// comparisons.
    pub fn candidate_total(&self) -> u64 {
        ["add", "sub", "mul", "div", "and", "or", "xor", "cmp"]
            .iter()
            .map(|k| self.op_counts.get(k).copied().unwrap_or(0))
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ExecError {
    UnknownFunction(String),
    ArityMismatch {
        func: String,
        expected: usize,
        got: usize,
    },
}

impl fmt::Display for ExecError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExecError::UnknownFunction(n) => write!(f, "unknown function @{n}"),
            ExecError::ArityMismatch {
                func,
                expected,
                got,
            } => {
                write!(f, "@{func} takes {expected} arguments, got {got}")
            }
        }
    }
}

impl std::error::Error for ExecError {}

pub fn execute(
    m: &Module,
    func: &str,
    args: &[i64],
    tape: &[i64],
    fuel: u64,
) -> Result<ExecProfile, ExecError> {
    run(m, func, args, tape, fuel, None)
}

/// Like `execute`, but additionally checks a value-numbering table: every
/// run-time value produced under a given number must be equal whenever the
/// values the number depends on are unchanged. Panics on disagreement.
pub fn execute_checking_vns(
    m: &Module,
    func: &str,
    args: &[i64],
    tape: &[i64],
    fuel: u64,
    table: &crate::vn::ValueTable,
) -> Result<ExecProfile, ExecError> {
    run(m, func, args, tape, fuel, Some(table))
}

struct VnCheck {
    /// Static name -> names whose recorded numbers must be dropped when it
    /// is reassigned (transitive dependents through operand edges).
    dependents: BTreeMap<String, Vec<String>>,
    recorded: BTreeMap<u32, i64>,
    vn_of: BTreeMap<String, u32>,
}

impl VnCheck {
    fn new(f: &Function, table: &crate::vn::ValueTable) -> VnCheck {
        // Direct dependency edges: result -> operand names.
        let mut direct: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for b in &f.blocks {
            for i in b.instrs() {
                if let Some(r) = i.result() {
                    let ops: Vec<String> = i
                        .operands()
                        .iter()
                        .filter_map(|o| o.name().map(str::to_string))
                        .collect();
                    for o in ops {
                        direct.entry(o).or_default().push(r.to_string());
                    }
                }
            }
        }
        // Transitive closure per name, following use edges.
        let mut dependents = BTreeMap::new();
        for name in f.value_names() {
            let mut seen = std::collections::BTreeSet::new();
            let mut work = vec![name.clone()];
            while let Some(n) = work.pop() {
                for d in direct.get(&n).map(|v| v.as_slice()).unwrap_or(&[]) {
                    if seen.insert(d.clone()) {
                        work.push(d.clone());
                    }
                }
            }
            dependents.insert(name, seen.into_iter().collect());
        }
        let mut vn_of = BTreeMap::new();
        for (n, v) in table.names_with_vns() {
            vn_of.insert(n.to_string(), v.0);
        }
        VnCheck {
            dependents,
            recorded: BTreeMap::new(),
            vn_of,
        }
    }

    fn assigned(&mut self, name: &str, value: i64) {
        // Invalidate anything computed from this name, then check or record
        // the name's own number.
        if let Some(deps) = self.dependents.get(name) {
            let dead: Vec<u32> = deps
                .iter()
                .filter_map(|d| self.vn_of.get(d).copied())
                .collect();
            for v in dead {
                self.recorded.remove(&v);
            }
        }
        if let Some(&v) = self.vn_of.get(name) {
            match self.recorded.get(&v) {
                Some(&prev) => assert_eq!(
                    prev, value,
                    "value number v{v} produced {value} at %{name} but {prev} earlier; \
                     numbering is unsound"
                ),
                None => {
                    self.recorded.insert(v, value);
                }
            }
        }
    }
}

fn run(
    m: &Module,
    func: &str,
    args: &[i64],
    tape: &[i64],
    fuel: u64,
    check: Option<&crate::vn::ValueTable>,
) -> Result<ExecProfile, ExecError> {
    let f = m
        .function(func)
        .ok_or_else(|| ExecError::UnknownFunction(func.to_string()))?;
    if args.len() != f.params.len() {
        return Err(ExecError::ArityMismatch {
            func: func.to_string(),
            expected: f.params.len(),
            got: args.len(),
        });
    }

    let mut checker = check.map(|t| VnCheck::new(f, t));
    let mut env: BTreeMap<&str, i64> = BTreeMap::new();
    for (p, &a) in f.params.iter().zip(args) {
        env.insert(p, a);
        if let Some(c) = checker.as_mut() {
            c.assigned(p, a);
        }
    }

    let mut memory: Vec<i64> = Vec::new();
    let mut printed = Vec::new();
    let mut op_counts: BTreeMap<&'static str, u64> = BTreeMap::new();
    let mut steps = 0u64;
    let mut tape_pos = 0usize;
    let mut block = 0usize;
    let mut prev_label: Option<String> = None;

    let read = |env: &BTreeMap<&str, i64>, o: &Operand| -> i64 {
        match o {
            Operand::Lit(v) => *v,
            Operand::Name(n) => *env
                .get(n.as_str())
                .unwrap_or_else(|| panic!("read of undefined %{n}")),
        }
    };

    macro_rules! spend {
        ($i:expr) => {
            steps += 1;
            *op_counts.entry($i.opcode_name()).or_insert(0) += 1;
            if steps > fuel {
                return Ok(ExecProfile {
                    printed,
                    termination: Termination::FuelExhausted,
                    op_counts,
                    steps,
                });
            }
        };
    }

    loop {
        let b = &f.blocks[block];

        // Phis read all incoming values for the traversed edge, then write,
        // so same-block phi-to-phi references see pre-entry values.
        if !b.phis.is_empty() {
            let from = prev_label.as_deref().expect("phi in entry block");
            let mut writes: Vec<(&str, i64)> = Vec::new();
            for phi in &b.phis {
                spend!(phi);
                if let Instr::Phi { result, incomings } = phi {
                    let (_, v) = incomings
                        .iter()
                        .find(|(l, _)| l == from)
                        .unwrap_or_else(|| panic!("phi %{result} lacks incoming for {from}"));
                    writes.push((result, read(&env, v)));
                }
            }
            for (r, v) in writes {
                env.insert(r, v);
                if let Some(c) = checker.as_mut() {
                    c.assigned(r, v);
                }
            }
        }

        for instr in &b.body {
            spend!(instr);
            match instr {
                Instr::Bin {
                    result,
                    op,
                    lhs,
                    rhs,
                } => {
                    let a = read(&env, lhs);
                    let c = read(&env, rhs);
                    match eval_bin(*op, a, c) {
                        Some(v) => {
                            env.insert(result, v);
                            if let Some(ck) = checker.as_mut() {
                                ck.assigned(result, v);
                            }
                        }
                        None => {
                            debug_assert_eq!(*op, BinOp::Div);
                            return Ok(ExecProfile {
                                printed,
                                termination: Termination::TrappedDiv0,
                                op_counts,
                                steps,
                            });
                        }
                    }
                }
                Instr::Cmp {
                    result,
                    cc,
                    lhs,
                    rhs,
                } => {
                    let v = eval_cmp(*cc, read(&env, lhs), read(&env, rhs));
                    env.insert(result, v);
                    if let Some(ck) = checker.as_mut() {
                        ck.assigned(result, v);
                    }
                }
                Instr::Const { result, value } => {
                    env.insert(result, *value);
                    if let Some(ck) = checker.as_mut() {
                        ck.assigned(result, *value);
                    }
                }
                Instr::Opaque { result } => {
                    let v = tape.get(tape_pos).copied().unwrap_or(0);
                    tape_pos += 1;
                    env.insert(result, v);
                    if let Some(ck) = checker.as_mut() {
                        ck.assigned(result, v);
                    }
                }
                Instr::Alloca { result } => {
                    memory.push(0);
                    let v = (memory.len() - 1) as i64;
                    env.insert(result, v);
                    if let Some(ck) = checker.as_mut() {
                        ck.assigned(result, v);
                    }
                }
                Instr::Load { result, addr } => {
                    let a = read(&env, addr);
                    let v = usize::try_from(a)
                        .ok()
                        .and_then(|i| memory.get(i).copied())
                        .unwrap_or(0);
                    env.insert(result, v);
                    if let Some(ck) = checker.as_mut() {
                        ck.assigned(result, v);
                    }
                }
                Instr::Store { value, addr } => {
                    let a = read(&env, addr);
                    let v = read(&env, value);
                    if let Ok(i) = usize::try_from(a) {
                        if i < memory.len() {
                            memory[i] = v;
                        }
                    }
                }
                Instr::Print { value } => printed.push(read(&env, value)),
                Instr::Phi { .. } | Instr::Jmp { .. } | Instr::Br { .. } | Instr::Ret { .. } => {
                    unreachable!("control instruction in block body")
                }
            }
        }

        let term = b.terminator.as_ref().expect("validated function");
        spend!(term);
        let target = match term {
            Instr::Jmp { target } => target,
            Instr::Br {
                cond,
                then_target,
                else_target,
            } => {
                if read(&env, cond) != 0 {
                    then_target
                } else {
                    else_target
                }
            }
            Instr::Ret { value } => {
                return Ok(ExecProfile {
                    printed,
                    termination: Termination::Returned(read(&env, value)),
                    op_counts,
                    steps,
                });
            }
            _ => unreachable!("non-terminator in terminator slot"),
        };
        prev_label = Some(b.label.clone());
        block = f.block_index(target).expect("validated branch target");
    }
}

/// Per-case outcome of a before/after comparison.
#[derive(Debug, Clone)]
pub struct CaseOutcome {
    pub args: Vec<i64>,
    pub tape: Vec<i64>,
    pub behavior_equal: bool,
    pub candidates_before: u64,
    pub candidates_after: u64,
}

#[derive(Debug, Clone)]
pub struct DiffVerdict {
    pub cases: Vec<CaseOutcome>,
    /// True iff every case's observable behavior matched.
    pub pass: bool,
}

/// Runs both modules over the cases and compares observable behavior,
/// collecting dynamic candidate-operation counts along the way.
pub fn differential(
    before: &Module,
    after: &Module,
    func: &str,
    cases: &[(Vec<i64>, Vec<i64>)],
) -> Result<DiffVerdict, ExecError> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        let cases: Vec<Result<CaseOutcome, ExecError>> = cases
            .par_iter()
            .map(|(args, tape)| diff_case(before, after, func, args, tape))
            .collect();
        let cases = cases.into_iter().collect::<Result<Vec<_>, _>>()?;
        let pass = cases.iter().all(|c| c.behavior_equal);
        Ok(DiffVerdict { cases, pass })
    }
    #[cfg(not(feature = "parallel"))]
    {
        differential_seq(before, after, func, cases)
    }
}

/// Sequential twin of `differential`, for measuring the parallel speedup and
/// for builds without the dependency.
pub fn differential_seq(
    before: &Module,
    after: &Module,
    func: &str,
    cases: &[(Vec<i64>, Vec<i64>)],
) -> Result<DiffVerdict, ExecError> {
    let cases = cases
        .iter()
        .map(|(args, tape)| diff_case(before, after, func, args, tape))
        .collect::<Result<Vec<_>, _>>()?;
    let pass = cases.iter().all(|c| c.behavior_equal);
    Ok(DiffVerdict { cases, pass })
}

fn diff_case(
    before: &Module,
    after: &Module,
    func: &str,
    args: &[i64],
    tape: &[i64],
) -> Result<CaseOutcome, ExecError> {
    let a = execute(before, func, args, tape, DEFAULT_FUEL)?;
    let b = execute(after, func, args, tape, DEFAULT_FUEL)?;
    Ok(CaseOutcome {
        args: args.to_vec(),
        tape: tape.to_vec(),
        behavior_equal: a.behavior() == b.behavior(),
        candidates_before: a.candidate_total(),
        candidates_after: b.candidate_total(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::parse_module;

    const DIAMOND: &str = "func @f(%a, %b) {
entry:
  %c = opaque
  br %c, bbT, bbF
bbT:
  %x1 = add %a, %b
  print %x1
  jmp join
bbF:
  jmp join
join:
  %y = add %a, %b
  ret %y
}";

    #[test]
    fn diamond_true_path_runs_two_adds() {
        let m = parse_module(DIAMOND).unwrap();
        let p = execute(&m, "f", &[2, 3], &[1], DEFAULT_FUEL).unwrap();
        assert_eq!(p.termination, Termination::Returned(5));
        assert_eq!(p.printed, vec![5]);
        assert_eq!(p.op_counts["add"], 2);
        assert_eq!(p.candidate_total(), 2);
        let q = execute(&m, "f", &[2, 3], &[0], DEFAULT_FUEL).unwrap();
        assert_eq!(q.termination, Termination::Returned(5));
        assert_eq!(q.op_counts["add"], 1);
    }

    #[test]
    fn phi_reads_are_simultaneous() {
        // %x and %y swap through the loop; ordered phi writes would lose one.
        let m = parse_module(
            "func @swap() {
entry:
  jmp loop
loop:
  %i = phi [entry: 0, loop: %i2]
  %x = phi [entry: 1, loop: %y]
  %y = phi [entry: 2, loop: %x]
  %i2 = add %i, 1
  %c = cmp lt %i2, 3
  br %c, loop, done
done:
  print %x
  print %y
  ret 0
}",
        )
        .unwrap();
        let p = execute(&m, "swap", &[], &[], DEFAULT_FUEL).unwrap();
        // Three iterations: (1,2) -> (2,1) -> (1,2); the exit reads the
        // third iteration's values.
        assert_eq!(p.printed, vec![1, 2]);
    }

    #[test]
    fn division_by_zero_traps_with_partial_output() {
        let m = parse_module(
            "func @t(%z) {
entry:
  print 1
  %q = div 5, %z
  print %q
  ret %q
}",
        )
        .unwrap();
        let p = execute(&m, "t", &[0], &[], DEFAULT_FUEL).unwrap();
        assert_eq!(p.termination, Termination::TrappedDiv0);
        assert_eq!(p.printed, vec![1]);
        let ok = execute(&m, "t", &[2], &[], DEFAULT_FUEL).unwrap();
        assert_eq!(ok.termination, Termination::Returned(2));
        assert_eq!(ok.printed, vec![1, 2]);
    }

    #[test]
    fn fuel_runs_out_on_infinite_loop() {
        let m = parse_module(
            "func @spin() {
entry:
  jmp entry
}",
        )
        .unwrap();
        let p = execute(&m, "spin", &[], &[], 100).unwrap();
        assert_eq!(p.termination, Termination::FuelExhausted);
        assert_eq!(p.steps, 101);
    }

    #[test]
    fn tape_feeds_opaque_and_runs_dry_to_zero() {
        let m = parse_module(
            "func @o() {
entry:
  %a = opaque
  %b = opaque
  %c = opaque
  print %a
  print %b
  print %c
  ret 0
}",
        )
        .unwrap();
        let p = execute(&m, "o", &[], &[7, 8], DEFAULT_FUEL).unwrap();
        assert_eq!(p.printed, vec![7, 8, 0]);
    }

    #[test]
    fn memory_defaults_to_zero_and_stray_stores_drop() {
        let m = parse_module(
            "func @mem() {
entry:
  %p = alloca
  %v = load %p
  print %v
  store 9, %p
  %w = load %p
  print %w
  %x = load 99
  print %x
  store 5, 99
  ret 0
}",
        )
        .unwrap();
        let p = execute(&m, "mem", &[], &[], DEFAULT_FUEL).unwrap();
        assert_eq!(p.printed, vec![0, 9, 0]);
        assert_eq!(p.termination, Termination::Returned(0));
    }

    #[test]
    fn errors_on_unknown_function_and_arity() {
        let m = parse_module("func @f(%a) {\nentry:\n  ret %a\n}").unwrap();
        assert!(matches!(
            execute(&m, "g", &[], &[], DEFAULT_FUEL),
            Err(ExecError::UnknownFunction(_))
        ));
        assert!(matches!(
            execute(&m, "f", &[], &[], DEFAULT_FUEL),
            Err(ExecError::ArityMismatch { .. })
        ));
    }

    #[test]
    fn differential_flags_a_flipped_opcode() {
        let before = parse_module(DIAMOND).unwrap();
        let mut after = parse_module(DIAMOND).unwrap();
        if let Instr::Bin { op, .. } = &mut after.functions[0].block_mut("join").unwrap().body[0] {
            *op = crate::ir::BinOp::Sub;
        }
        let cases = vec![(vec![2, 3], vec![1]), (vec![2, 3], vec![0])];
        let v = differential(&before, &after, "f", &cases).unwrap();
        assert!(!v.pass);
        assert!(v.cases.iter().all(|c| !c.behavior_equal));

        let same = differential(&before, &before, "f", &cases).unwrap();
        assert!(same.pass);
        assert_eq!(
            same.cases[0].candidates_before,
            same.cases[0].candidates_after
        );
        let seq = differential_seq(&before, &before, "f", &cases).unwrap();
        assert!(seq.pass);
    }

    #[test]
    fn vn_check_accepts_sound_numbering() {
        let mut m = parse_module(DIAMOND).unwrap();
        let cfg = crate::cfg::analyze_cfg(&m.functions[0]);
        let table = crate::vn::assign_value_numbers(&mut m.functions[0], &cfg);
        let p = execute_checking_vns(&m, "f", &[2, 3], &[1], DEFAULT_FUEL, &table).unwrap();
        assert_eq!(p.termination, Termination::Returned(5));
    }
}
