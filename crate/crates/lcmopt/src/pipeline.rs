//! Pass scheduling over whole modules.
//!
//! A pipeline is an ordered list of named passes applied per function, with
//! the IR validated after every step so a pass that corrupts its output is
//! caught at the pass boundary rather than downstream. Functions are
//! independent, so module-level driving is data parallel when the `parallel`
//! feature is on; the sequential variant stays available for comparison and
//! for minimal builds.
//!
//! Two presets mirror the measurement configurations: the baseline cleans up
//! and canonicalizes without code motion, and the motion pipeline adds the
//! lazy-code-motion pass, followed by promotion so the slots it introduces
//! become SSA registers again.

use crate::interp;
use crate::ir::{validate_function, Function, Module};
use crate::lcm::{pre_pass, PreReport};
use crate::normalize::{mem2reg_promote, rotate_loops, simplify_cfg, split_critical_edges};
use crate::vn::reassociate;
use std::fmt;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// One schedulable pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pass {
    Mem2Reg,
    LoopRotate,
    SplitCrit,
    Lcm,
    SimplifyCfg,
    Reassociate,
}

impl Pass {
    pub const ALL: [Pass; 6] = [
        Pass::Mem2Reg,
        Pass::LoopRotate,
        Pass::SplitCrit,
        Pass::Lcm,
        Pass::SimplifyCfg,
        Pass::Reassociate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Pass::Mem2Reg => "mem2reg",
            Pass::LoopRotate => "loop-rotate",
            Pass::SplitCrit => "split-crit",
            Pass::Lcm => "lcm",
            Pass::SimplifyCfg => "simplifycfg",
            Pass::Reassociate => "reassociate",
        }
    }

    pub fn from_name(name: &str) -> Option<Pass> {
        Pass::ALL.iter().copied().find(|p| p.name() == name)
    }
}

impl fmt::Display for Pass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Parse a comma-separated pass list. Empty input is the empty pipeline.
pub fn parse_passes(spec: &str) -> Result<Vec<Pass>, String> {
    spec.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| Pass::from_name(s).ok_or_else(|| format!("unknown pass: {s}")))
        .collect()
}

/// Cleanup and canonicalization without code motion.
pub fn baseline_pipeline() -> Vec<Pass> {
    vec![
        Pass::Mem2Reg,
        Pass::LoopRotate,
        Pass::Reassociate,
        Pass::Mem2Reg,
        Pass::SimplifyCfg,
    ]
}

/// The baseline plus lazy code motion; the following promotion turns the
/// slots the motion introduced back into SSA registers.
pub fn pre_pipeline() -> Vec<Pass> {
    vec![
        Pass::Mem2Reg,
        Pass::LoopRotate,
        Pass::Reassociate,
        Pass::Lcm,
        Pass::Mem2Reg,
        Pass::SimplifyCfg,
    ]
}

/// What one pipeline did to one function.
#[derive(Debug, Clone, Default)]
pub struct FunctionReport {
    pub function: String,
    /// One `(pass name, count)` entry per applied pass, in order. The count
    /// is the pass's own unit: promotions, rotations, edits, splits,
    /// reassociations, or replacements for the motion pass.
    pub counters: Vec<(&'static str, usize)>,
    pub warnings: Vec<String>,
    /// Report of the last motion pass, if one ran.
    pub pre: Option<PreReport>,
}

/// A pass failure: either the motion analyses did not converge or the IR
/// failed validation right after a pass.
#[derive(Debug, Clone)]
pub struct PipelineError {
    pub function: String,
    pub pass: &'static str,
    pub detail: String,
}

impl fmt::Display for PipelineError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} on @{}: {}", self.pass, self.function, self.detail)
    }
}

impl std::error::Error for PipelineError {}

/// Apply the passes to one function in order, validating after each.
pub fn run_function_pipeline(
    f: &mut Function,
    passes: &[Pass],
) -> Result<FunctionReport, PipelineError> {
    let mut report = FunctionReport {
        function: f.name.clone(),
        ..FunctionReport::default()
    };
    for &pass in passes {
        let count = match pass {
            Pass::Mem2Reg => {
                let (promoted, warnings) = mem2reg_promote(f);
                report.warnings.extend(warnings);
                promoted
            }
            Pass::LoopRotate => {
                let (rotated, warnings) = rotate_loops(f);
                report.warnings.extend(warnings);
                rotated
            }
            Pass::SplitCrit => split_critical_edges(f),
            Pass::SimplifyCfg => simplify_cfg(f),
            Pass::Reassociate => reassociate(f),
            Pass::Lcm => {
                let (_, pre) = pre_pass(f).map_err(|e| PipelineError {
                    function: f.name.clone(),
                    pass: pass.name(),
                    detail: e.to_string(),
                })?;
                let replaced = pre.replacements.len();
                report.pre = Some(pre);
                replaced
            }
        };
        report.counters.push((pass.name(), count));
        let diagnostics = validate_function(f);
        if let Some(d) = diagnostics.first() {
            return Err(PipelineError {
                function: f.name.clone(),
                pass: pass.name(),
                detail: match &d.block {
                    Some(b) => format!("invalid output at {b}: {}", d.detail),
                    None => format!("invalid output: {}", d.detail),
                },
            });
        }
    }
    Ok(report)
}

/// Apply the passes to every function, in parallel when built with the
/// `parallel` feature. Reports come back in input order either way.
#[cfg(feature = "parallel")]
pub fn optimize_module(
    m: &mut Module,
    passes: &[Pass],
) -> Result<Vec<FunctionReport>, PipelineError> {
    m.functions
        .par_iter_mut()
        .map(|f| run_function_pipeline(f, passes))
        .collect()
}

#[cfg(not(feature = "parallel"))]
pub fn optimize_module(
    m: &mut Module,
    passes: &[Pass],
) -> Result<Vec<FunctionReport>, PipelineError> {
    optimize_module_seq(m, passes)
}

/// Sequential reference driver; the parallel one must match it exactly.
pub fn optimize_module_seq(
    m: &mut Module,
    passes: &[Pass],
) -> Result<Vec<FunctionReport>, PipelineError> {
    m.functions
        .iter_mut()
        .map(|f| run_function_pipeline(f, passes))
        .collect()
}

/// Dynamic candidate-operation counts for one function under both pipelines
/// on one input, as `(baseline, with motion)`. Panics on interpreter errors;
/// meant for tests and the stats command where inputs are known-valid.
pub fn compare_candidate_counts(
    original: &Module,
    func: &str,
    args: &[i64],
    tape: &[i64],
) -> (u64, u64) {
    let mut base = original.clone();
    let mut moved = original.clone();
    optimize_module_seq(&mut base, &baseline_pipeline()).expect("baseline pipeline failed");
    optimize_module_seq(&mut moved, &pre_pipeline()).expect("motion pipeline failed");
    let pb = interp::execute(&base, func, args, tape, interp::DEFAULT_FUEL)
        .expect("baseline execution failed");
    let pm = interp::execute(&moved, func, args, tape, interp::DEFAULT_FUEL)
        .expect("motion execution failed");
    assert_eq!(
        pb.behavior(),
        pm.behavior(),
        "pipelines disagree on @{func} with args {args:?}"
    );
    (pb.candidate_total(), pm.candidate_total())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::{parse_module, print_module};

    const DIAMOND: &str = "func @f(%a, %b) {
entry:
  %c = cmp lt %a, %b
  br %c, bbT, bbF
bbT:
  %x1 = add %a, %b
  print %x1
  jmp join
bbF:
  print 0
  jmp join
join:
  %y = add %a, %b
  print %y
  ret %y
}";

    #[test]
    fn pass_names_round_trip() {
        for p in Pass::ALL {
            assert_eq!(Pass::from_name(p.name()), Some(p));
        }
        assert_eq!(
            parse_passes("mem2reg, lcm,simplifycfg").unwrap(),
            vec![Pass::Mem2Reg, Pass::Lcm, Pass::SimplifyCfg]
        );
        assert_eq!(parse_passes("").unwrap(), vec![]);
        assert!(parse_passes("mem2reg,licm").unwrap_err().contains("licm"));
    }

    #[test]
    fn presets_match_the_measurement_configurations() {
        let names = |ps: &[Pass]| ps.iter().map(|p| p.name()).collect::<Vec<_>>();
        assert_eq!(
            names(&baseline_pipeline()),
            [
                "mem2reg",
                "loop-rotate",
                "reassociate",
                "mem2reg",
                "simplifycfg"
            ]
        );
        assert_eq!(
            names(&pre_pipeline()),
            [
                "mem2reg",
                "loop-rotate",
                "reassociate",
                "lcm",
                "mem2reg",
                "simplifycfg"
            ]
        );
    }

    #[test]
    fn empty_pipeline_changes_nothing() {
        let mut m = parse_module(DIAMOND).unwrap();
        let before = print_module(&m);
        let reports = optimize_module_seq(&mut m, &[]).unwrap();
        assert_eq!(print_module(&m), before);
        assert!(reports[0].counters.is_empty());
        assert!(reports[0].pre.is_none());
    }

    #[test]
    fn motion_pipeline_halves_the_diamond_true_path() {
        let m = parse_module(DIAMOND).unwrap();
        assert_eq!(compare_candidate_counts(&m, "f", &[2, 3], &[]), (3, 2));
        assert_eq!(compare_candidate_counts(&m, "f", &[5, 2], &[]), (2, 2));
    }

    #[test]
    fn motion_report_survives_the_pipeline() {
        let mut m = parse_module(DIAMOND).unwrap();
        let reports = optimize_module_seq(&mut m, &pre_pipeline()).unwrap();
        let pre = reports[0].pre.as_ref().expect("lcm ran");
        assert_eq!(pre.insertions.len(), 2);
        assert_eq!(pre.replacements.len(), 2);
        assert_eq!(pre.width, 1);
        // Promotion after motion leaves no slot traffic behind.
        let text = print_module(&m);
        assert!(!text.contains("alloca"), "{text}");
        assert!(!text.contains("load"), "{text}");
    }

    #[test]
    fn reports_come_back_in_input_order() {
        let two = format!("{DIAMOND}\n\nfunc @g(%n) {{\ne:\n  print %n\n  ret %n\n}}");
        let mut m = parse_module(&two).unwrap();
        let reports = optimize_module_seq(&mut m, &pre_pipeline()).unwrap();
        assert_eq!(reports.len(), 2);
        assert_eq!(reports[0].function, "f");
        assert_eq!(reports[1].function, "g");
        assert!(reports[1].pre.as_ref().unwrap().replacements.is_empty());
    }

    #[cfg(feature = "parallel")]
    #[test]
    fn parallel_driver_matches_sequential() {
        let two =
            format!("{DIAMOND}\n\nfunc @g(%n) {{\ne:\n  %d = mul %n, %n\n  print %d\n  ret %d\n}}");
        let mut a = parse_module(&two).unwrap();
        let mut b = parse_module(&two).unwrap();
        let ra = optimize_module(&mut a, &pre_pipeline()).unwrap();
        let rb = optimize_module_seq(&mut b, &pre_pipeline()).unwrap();
        assert_eq!(print_module(&a), print_module(&b));
        assert_eq!(ra.len(), rb.len());
        for (x, y) in ra.iter().zip(&rb) {
            assert_eq!(x.function, y.function);
            assert_eq!(x.counters, y.counters);
        }
    }
}
