//! Command line driver: optimize, execute, differential-test, summarize, and
//! draw the IR. Output IR goes to stdout (or -o); diagnostics, set dumps, and
//! stats go to stderr so pipelines stay composable. Exit code 0 means every
//! requested operation succeeded and the IR validated after each pass.

use clap::{Parser, Subcommand};
use lcmopt::dot::{function_to_dot, function_to_dot_with_sets};
use lcmopt::interp::{differential, execute, DEFAULT_FUEL};
use lcmopt::ir::{parse_module, print_module, validate, Module};
use lcmopt::lcm::{analyze, LcmAnalysis};
use lcmopt::pipeline::{optimize_module, parse_passes, FunctionReport, Pass};
use std::fmt::Write as _;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

const PRE_PASSES: &str = "mem2reg,loop-rotate,reassociate,lcm,mem2reg,simplifycfg";
const BASE_PASSES: &str = "mem2reg,loop-rotate,reassociate,mem2reg,simplifycfg";

#[derive(Parser)]
#[command(
    name = "lcmopt",
    about = "SSA optimizer built around lazy code motion, with a reference interpreter",
    version
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Apply a pass pipeline and print the transformed IR.
    Opt {
        /// Input file, or - for stdin.
        input: PathBuf,
        /// Comma-separated passes to apply, in order.
        #[arg(long, default_value = PRE_PASSES)]
        passes: String,
        /// Write the result here instead of stdout.
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Dump the motion sets per block to stderr, as the motion pass sees
        /// them (after the passes preceding the first lcm).
        #[arg(long)]
        dump_sets: bool,
        /// Dump the value-number table and slot assignment to stderr.
        #[arg(long)]
        dump_vn: bool,
        /// Print per-function pass statistics to stderr.
        #[arg(long)]
        stats: bool,
    },
    /// Execute one function and report its behavior and operation counts.
    Run {
        /// Input file, or - for stdin.
        input: PathBuf,
        /// Function to run; defaults to the first in the module.
        #[arg(long)]
        func: Option<String>,
        /// Comma-separated integer arguments, e.g. -2,3.
        #[arg(long, default_value = "", allow_hyphen_values = true)]
        args: String,
        /// Comma-separated values consumed by `opaque`, in order.
        #[arg(long, default_value = "", allow_hyphen_values = true)]
        tape: String,
        /// Step limit before execution stops with a fuel-exhausted status.
        #[arg(long, default_value_t = DEFAULT_FUEL)]
        fuel: u64,
        /// Machine-readable key=value output.
        #[arg(long)]
        kv: bool,
    },
    /// Optimize under two pipelines and compare observable behavior.
    Diff {
        /// Input file, or - for stdin.
        input: PathBuf,
        #[arg(long, default_value = BASE_PASSES)]
        passes_a: String,
        #[arg(long, default_value = PRE_PASSES)]
        passes_b: String,
        /// Function to compare; defaults to every function in the module.
        #[arg(long)]
        func: Option<String>,
        /// A test case as args@tape, e.g. 2,3@1 or -5,4@ (repeatable).
        #[arg(long = "case", required = true, allow_hyphen_values = true)]
        cases: Vec<String>,
    },
    /// Per-function motion statistics under a pipeline containing lcm.
    Stats {
        /// Input file, or - for stdin.
        input: PathBuf,
        #[arg(long, default_value = PRE_PASSES)]
        passes: String,
    },
    /// Write one DOT file per function, optionally annotated with motion sets.
    Dot {
        /// Input file, or - for stdin.
        input: PathBuf,
        /// Passes to apply before drawing.
        #[arg(long)]
        passes: Option<String>,
        /// Directory receiving <function>.dot files.
        #[arg(long)]
        out_dir: PathBuf,
        /// Comma-separated set names to annotate blocks with ("all" for
        /// every set). Runs the motion analyses, which split critical edges.
        #[arg(long)]
        sets: Option<String>,
    },
}

fn main() -> ExitCode {
    // Die quietly when a downstream pipe closes (`lcmopt run ... | head`)
    // instead of panicking on the broken pipe.
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    match real_main(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}

fn real_main(cli: Cli) -> Result<(), String> {
    match cli.cmd {
        Cmd::Opt {
            input,
            passes,
            output,
            dump_sets,
            dump_vn,
            stats,
        } => {
            let mut m = read_module(&input)?;
            let passes = parse_passes(&passes)?;
            if dump_sets || dump_vn {
                dump_analysis(&m, &passes, dump_sets, dump_vn)?;
            }
            let reports = optimize_module(&mut m, &passes).map_err(|e| e.to_string())?;
            if stats {
                for r in &reports {
                    eprintln!("{}", report_line(r));
                }
            }
            for r in &reports {
                for w in &r.warnings {
                    eprintln!("warning: @{}: {w}", r.function);
                }
            }
            let text = print_module(&m);
            match output {
                Some(path) => std::fs::write(&path, text)
                    .map_err(|e| format!("writing {}: {e}", path.display()))?,
                None => print!("{text}"),
            }
            Ok(())
        }
        Cmd::Run {
            input,
            func,
            args,
            tape,
            fuel,
            kv,
        } => {
            let m = read_module(&input)?;
            let func = pick_function(&m, func.as_deref())?;
            let args = parse_ints(&args)?;
            let tape = parse_ints(&tape)?;
            let profile = execute(&m, &func, &args, &tape, fuel).map_err(|e| e.to_string())?;
            let printed = profile
                .printed
                .iter()
                .map(i64::to_string)
                .collect::<Vec<_>>()
                .join(",");
            if kv {
                println!("func=@{func}");
                println!("printed={printed}");
                println!("termination={}", kv_termination(&profile.termination));
                println!("steps={}", profile.steps);
                for (op, n) in &profile.op_counts {
                    println!("op.{op}={n}");
                }
                println!("candidate_total={}", profile.candidate_total());
            } else {
                println!("@{func}({})", fmt_ints(&args));
                println!("printed: {printed}");
                println!("termination: {}", profile.termination);
                println!("steps: {}", profile.steps);
                let ops = profile
                    .op_counts
                    .iter()
                    .map(|(op, n)| format!("{op}={n}"))
                    .collect::<Vec<_>>()
                    .join(" ");
                println!("ops: {ops}");
                println!("candidate_total: {}", profile.candidate_total());
            }
            Ok(())
        }
        Cmd::Diff {
            input,
            passes_a,
            passes_b,
            func,
            cases,
        } => {
            let m = read_module(&input)?;
            let passes_a = parse_passes(&passes_a)?;
            let passes_b = parse_passes(&passes_b)?;
            let cases = cases
                .iter()
                .map(|c| parse_case(c))
                .collect::<Result<Vec<_>, _>>()?;
            let mut ma = m.clone();
            let mut mb = m;
            optimize_module(&mut ma, &passes_a).map_err(|e| e.to_string())?;
            optimize_module(&mut mb, &passes_b).map_err(|e| e.to_string())?;
            let funcs: Vec<String> = match func {
                Some(f) => vec![f],
                None => ma.functions.iter().map(|f| f.name.clone()).collect(),
            };
            let mut mismatches = 0usize;
            for f in &funcs {
                let verdict = differential(&ma, &mb, f, &cases).map_err(|e| e.to_string())?;
                for c in &verdict.cases {
                    let status = if c.behavior_equal {
                        "equal"
                    } else {
                        "MISMATCH"
                    };
                    println!(
                        "@{f} args=[{}] tape=[{}]: {status} candidates a={} b={}",
                        fmt_ints(&c.args),
                        fmt_ints(&c.tape),
                        c.candidates_before,
                        c.candidates_after
                    );
                }
                mismatches += verdict.cases.iter().filter(|c| !c.behavior_equal).count();
            }
            if mismatches > 0 {
                return Err(format!("behavior differs in {mismatches} case(s)"));
            }
            Ok(())
        }
        Cmd::Stats { input, passes } => {
            let mut m = read_module(&input)?;
            let passes = parse_passes(&passes)?;
            if !passes.contains(&Pass::Lcm) {
                return Err("stats needs a pipeline containing lcm".into());
            }
            let reports = optimize_module(&mut m, &passes).map_err(|e| e.to_string())?;
            for r in &reports {
                println!("{}", report_line(r));
            }
            let ratios: Vec<f64> = reports
                .iter()
                .filter_map(|r| r.pre.as_ref())
                .map(|p| p.width_ratio())
                .collect();
            let avg = if ratios.is_empty() {
                0.0
            } else {
                ratios.iter().sum::<f64>() / ratios.len() as f64
            };
            println!(
                "corpus functions={} avg_width_ratio={avg:.4}",
                reports.len()
            );
            Ok(())
        }
        Cmd::Dot {
            input,
            passes,
            out_dir,
            sets,
        } => {
            let mut m = read_module(&input)?;
            if let Some(spec) = passes {
                let passes = parse_passes(&spec)?;
                optimize_module(&mut m, &passes).map_err(|e| e.to_string())?;
            }
            std::fs::create_dir_all(&out_dir)
                .map_err(|e| format!("creating {}: {e}", out_dir.display()))?;
            let set_names: Option<Vec<String>> = sets.map(|s| {
                if s == "all" {
                    Vec::new()
                } else {
                    s.split(',').map(str::to_string).collect()
                }
            });
            for f in &mut m.functions {
                let text = match &set_names {
                    Some(names) => {
                        let a = analyze(f).map_err(|e| format!("@{}: {e}", f.name))?;
                        function_to_dot_with_sets(f, &a, names)?
                    }
                    None => function_to_dot(f),
                };
                let path = out_dir.join(format!("{}.dot", f.name));
                std::fs::write(&path, text)
                    .map_err(|e| format!("writing {}: {e}", path.display()))?;
                println!("{}", path.display());
            }
            Ok(())
        }
    }
}

fn read_module(path: &Path) -> Result<Module, String> {
    let text = if path.as_os_str() == "-" {
        let mut buf = String::new();
        std::io::stdin()
            .read_to_string(&mut buf)
            .map_err(|e| format!("reading stdin: {e}"))?;
        buf
    } else {
        std::fs::read_to_string(path).map_err(|e| format!("reading {}: {e}", path.display()))?
    };
    let m = parse_module(&text).map_err(|e| e.to_string())?;
    let diagnostics = validate(&m);
    if let Some(d) = diagnostics.first() {
        return Err(format!(
            "invalid input: @{}{}: {}",
            d.function,
            d.block
                .as_deref()
                .map(|b| format!(" {b}"))
                .unwrap_or_default(),
            d.detail
        ));
    }
    Ok(m)
}

fn pick_function(m: &Module, requested: Option<&str>) -> Result<String, String> {
    match requested {
        Some(f) => Ok(f.to_string()),
        None => m
            .functions
            .first()
            .map(|f| f.name.clone())
            .ok_or_else(|| "module has no functions".into()),
    }
}

fn parse_ints(s: &str) -> Result<Vec<i64>, String> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse::<i64>()
                .map_err(|e| format!("bad integer {t}: {e}"))
        })
        .collect()
}

fn parse_case(c: &str) -> Result<(Vec<i64>, Vec<i64>), String> {
    let (args, tape) = c.split_once('@').unwrap_or((c, ""));
    Ok((parse_ints(args)?, parse_ints(tape)?))
}

fn fmt_ints(v: &[i64]) -> String {
    v.iter().map(i64::to_string).collect::<Vec<_>>().join(",")
}

fn kv_termination(t: &lcmopt::interp::Termination) -> &'static str {
    use lcmopt::interp::Termination::*;
    match t {
        Returned(_) => "returned",
        TrappedDiv0 => "trapped-div0",
        FuelExhausted => "fuel-exhausted",
    }
}

/// One machine-readable line per function; `skipped` counts value numbers
/// whose insertion had no legal provider.
fn report_line(r: &FunctionReport) -> String {
    let mut line = format!("func=@{}", r.function);
    match &r.pre {
        Some(p) => {
            let _ = write!(
                line,
                " max_vn={} width={} width_ratio={:.4} insertions={} replacements={} \
                 lcse_removed={} skipped={}",
                p.max_vn,
                p.width,
                p.width_ratio(),
                p.insertions.len(),
                p.replacements.len(),
                p.lcse_removed,
                p.skipped_vns.len()
            );
        }
        None => line.push_str(" (no motion pass run)"),
    }
    for (pass, n) in &r.counters {
        let _ = write!(line, " {pass}={n}");
    }
    line
}

/// Re-derive and dump what the motion pass sees: apply the passes before the
/// first lcm to a scratch copy, analyze, and print the table and sets.
fn dump_analysis(
    m: &Module,
    passes: &[Pass],
    dump_sets: bool,
    dump_vn: bool,
) -> Result<(), String> {
    let prefix: Vec<Pass> = passes
        .iter()
        .take_while(|p| **p != Pass::Lcm)
        .copied()
        .collect();
    let mut probe = m.clone();
    optimize_module(&mut probe, &prefix).map_err(|e| e.to_string())?;
    for f in &mut probe.functions {
        let name = f.name.clone();
        let a = analyze(f).map_err(|e| format!("@{name}: {e}"))?;
        eprintln!("func @{name}");
        if dump_vn {
            dump_numbering(&a);
        }
        if dump_sets {
            dump_sets_of(f, &a);
        }
    }
    Ok(())
}

fn dump_numbering(a: &LcmAnalysis) {
    let mut by_vn: Vec<(u32, &str)> = a.table.names_with_vns().map(|(n, v)| (v.0, n)).collect();
    by_vn.sort();
    for (v, name) in by_vn {
        eprintln!("  %{name} -> v{v}");
    }
    for (s, v) in a.slots.iter() {
        let leader = a.table.leader(v).unwrap_or("?");
        eprintln!("  slot{s} = {v} (leader %{leader})");
    }
}

fn dump_sets_of(f: &lcmopt::ir::Function, a: &LcmAnalysis) {
    for (b, block) in f.blocks.iter().enumerate() {
        eprintln!("  block {}:", block.label);
        for (name, rows) in a.sets.named() {
            let members = rows[b]
                .iter_ones()
                .map(|s| a.slots.vn_of_slot(s).to_string())
                .collect::<Vec<_>>()
                .join(" ");
            eprintln!("    {name:<10} {{{members}}}");
        }
    }
}
