//! End-to-end checks of the binary: each test drives the compiled `lcmopt`
//! against corpus programs and asserts on exit status, stdout, and stderr.

use lcmopt::ir::{parse_module, validate};
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_lcmopt"))
}

fn corpus(file: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../lcmopt/corpus")
        .join(file)
}

fn scratch(test: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("lcmopt-cli-{test}-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn run(cmd: &mut Command) -> (Output, String, String) {
    let out = cmd.output().expect("binary runs");
    let stdout = String::from_utf8(out.stdout.clone()).unwrap();
    let stderr = String::from_utf8(out.stderr.clone()).unwrap();
    (out, stdout, stderr)
}

#[test]
fn opt_emits_valid_ir_with_the_motion_applied() {
    let (out, stdout, _) = run(bin().arg("opt").arg(corpus("f01_diamond.ir")));
    assert!(out.status.success());
    let m = parse_module(&stdout).expect("output parses");
    assert_eq!(validate(&m), vec![]);
    assert!(stdout.contains("%pre0 = add %a, %b"), "{stdout}");
    assert!(
        !stdout.contains("alloca"),
        "slots are promoted away: {stdout}"
    );
}

#[test]
fn opt_stats_and_dumps_stay_on_stderr() {
    let (out, stdout, stderr) = run(bin()
        .arg("opt")
        .arg(corpus("f01_diamond.ir"))
        .args(["--stats", "--dump-vn"]));
    assert!(out.status.success());
    assert!(parse_module(&stdout).is_ok(), "stdout is still pure IR");
    assert!(stderr.contains("func=@diamond"), "{stderr}");
    assert!(stderr.contains("insertions=2"), "{stderr}");
    assert!(stderr.contains("slot0 = v"), "{stderr}");
}

#[test]
fn opt_writes_to_the_output_file() {
    let dir = scratch("opt-output");
    let path = dir.join("out.ir");
    let (out, stdout, _) = run(bin()
        .arg("opt")
        .arg(corpus("f02_while_licm.ir"))
        .arg("-o")
        .arg(&path));
    assert!(out.status.success());
    assert_eq!(stdout, "");
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(parse_module(&text).is_ok());
}

#[test]
fn run_kv_reports_the_profile() {
    let (out, stdout, _) = run(bin()
        .arg("run")
        .arg(corpus("f01_diamond.ir"))
        .args(["--args", "2,5", "--kv"]));
    assert!(out.status.success());
    for want in [
        "func=@diamond",
        "printed=7,7",
        "termination=returned",
        "op.add=2",
        "candidate_total=3",
    ] {
        assert!(
            stdout.lines().any(|l| l == want),
            "missing {want}: {stdout}"
        );
    }
}

#[test]
fn run_reads_stdin_and_reports_a_trap() {
    let mut child = bin()
        .arg("run")
        .arg("-")
        .args(["--args", "5", "--tape", "0"])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    child
        .stdin
        .take()
        .unwrap()
        .write_all(
            std::fs::read_to_string(corpus("f20_trap.ir"))
                .unwrap()
                .as_bytes(),
        )
        .unwrap();
    let out = child.wait_with_output().unwrap();
    assert!(
        out.status.success(),
        "a trap is a reported outcome, not an error"
    );
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("printed: 5"), "{stdout}");
    assert!(
        stdout.contains("termination: trapped: division by zero"),
        "{stdout}"
    );
}

#[test]
fn diff_equal_cases_exit_zero() {
    let (out, stdout, _) = run(bin()
        .arg("diff")
        .arg(corpus("f02_while_licm.ir"))
        .args(["--case", "2,3,10@", "--case", "2,3,0", "--case", "5,-4,3@1"]));
    assert!(out.status.success());
    let lines: Vec<&str> = stdout.lines().collect();
    assert_eq!(lines.len(), 3, "{stdout}");
    for l in &lines {
        assert!(l.starts_with("@licm "), "{l}");
        assert!(l.contains(": equal"), "{l}");
    }
    // The moved program does strictly less candidate work on a taken loop.
    assert!(lines[0].contains("candidates a=41 b=32"), "{}", lines[0]);
}

#[test]
fn diff_sweeps_every_function_and_names_arity_mismatches() {
    // A case that fits only the two-parameter functions: both get compared
    // and printed, then the sweep stops with an error naming the third.
    let (out, stdout, stderr) = run(bin()
        .arg("diff")
        .arg(corpus("f28_multifunc.ir"))
        .args(["--case", "2,3@"]));
    assert!(!out.status.success());
    for f in ["@alpha", "@beta"] {
        assert!(
            stdout
                .lines()
                .any(|l| l.starts_with(f) && l.contains(": equal")),
            "{stdout}"
        );
    }
    assert!(
        stderr.contains("@gamma takes 0 arguments, got 2"),
        "{stderr}"
    );

    // Targeting the no-argument function with an empty case works.
    let (out, stdout, _) = run(bin()
        .arg("diff")
        .arg(corpus("f28_multifunc.ir"))
        .args(["--func", "gamma", "--case", "@"]));
    assert!(out.status.success());
    assert!(
        stdout.starts_with("@gamma args=[] tape=[]: equal"),
        "{stdout}"
    );
}

#[test]
fn stats_prints_per_function_lines_and_the_average() {
    let (out, stdout, _) = run(bin().arg("stats").arg(corpus("f24_many_singletons.ir")));
    assert!(out.status.success());
    assert!(stdout.contains("func=@wide"), "{stdout}");
    assert!(stdout.contains("width=1"), "{stdout}");
    assert!(
        stdout.contains("corpus functions=1 avg_width_ratio=0.0714"),
        "{stdout}"
    );
}

#[test]
fn stats_requires_a_motion_pass() {
    let (out, _, stderr) = run(bin()
        .arg("stats")
        .arg(corpus("f24_many_singletons.ir"))
        .args(["--passes", "mem2reg,simplifycfg"]));
    assert!(!out.status.success());
    assert!(stderr.contains("pipeline containing lcm"), "{stderr}");
}

#[test]
fn dot_writes_one_annotated_file_per_function() {
    let dir = scratch("dot");
    let (out, stdout, _) = run(bin()
        .arg("dot")
        .arg(corpus("f28_multifunc.ir"))
        .arg("--out-dir")
        .arg(&dir));
    assert!(out.status.success());
    assert_eq!(stdout.lines().count(), 3);
    for f in ["alpha", "beta", "gamma"] {
        let text = std::fs::read_to_string(dir.join(format!("{f}.dot"))).unwrap();
        assert!(text.starts_with(&format!("digraph \"{f}\"")), "{text}");
    }

    let (out, _, _) = run(bin()
        .arg("dot")
        .arg(corpus("f01_diamond.ir"))
        .arg("--out-dir")
        .arg(&dir)
        .args(["--sets", "INSERTOUT,REPLACEIN"]));
    assert!(out.status.success());
    let text = std::fs::read_to_string(dir.join("diamond.dot")).unwrap();
    assert!(text.contains("INSERTOUT"), "{text}");
    assert!(text.contains("REPLACEIN"), "{text}");
}

#[test]
fn values_starting_with_a_minus_are_accepted() {
    let (out, stdout, _) = run(bin()
        .arg("run")
        .arg(corpus("f01_diamond.ir"))
        .args(["--args", "-4,9", "--kv"]));
    assert!(out.status.success());
    assert!(stdout.contains("printed=5,5"), "{stdout}");

    let (out, _, _) = run(bin()
        .arg("diff")
        .arg(corpus("f01_diamond.ir"))
        .args(["--case", "-4,9@"]));
    assert!(out.status.success());
}

#[cfg(unix)]
#[test]
fn a_closed_pipe_ends_the_process_quietly() {
    let script = format!(
        "{} run {} --args 2,5 | head -n 1",
        env!("CARGO_BIN_EXE_lcmopt"),
        corpus("f01_diamond.ir").display()
    );
    let out = Command::new("sh").arg("-c").arg(script).output().unwrap();
    assert!(out.status.success());
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(!stderr.contains("panicked"), "{stderr}");
}

#[test]
fn unknown_pass_names_are_rejected() {
    let (out, _, stderr) = run(bin()
        .arg("opt")
        .arg(corpus("f01_diamond.ir"))
        .args(["--passes", "mem2reg,frobnicate"]));
    assert!(!out.status.success());
    assert_eq!(stderr.trim(), "error: unknown pass: frobnicate");
}

#[test]
fn invalid_input_names_the_offender() {
    let dir = scratch("invalid");
    let path = dir.join("bad.ir");
    std::fs::write(&path, "func @f(%a) {\ne:\n  print %undef\n  ret 0\n}\n").unwrap();
    let (out, _, stderr) = run(bin().arg("run").arg(&path));
    assert!(!out.status.success());
    assert!(stderr.starts_with("error: invalid input: @f"), "{stderr}");
}
