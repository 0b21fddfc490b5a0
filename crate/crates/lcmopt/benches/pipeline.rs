//! Parallel driver against its sequential twin, on both sides of the
//! workload: the pass pipeline (parallel over functions) and the
//! differential harness (parallel over cases). Run with
//! `cargo bench -p lcmopt`.

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use lcmopt::interp::{differential, differential_seq};
use lcmopt::ir::{parse_module, Module};
use lcmopt::pipeline::{baseline_pipeline, optimize_module, optimize_module_seq, pre_pipeline};

/// Every corpus program, replicated with renamed functions until the module
/// is wide enough for the function-level parallelism to matter.
fn replicated_corpus(copies: usize) -> Module {
    let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/corpus");
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .expect("corpus directory")
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "ir"))
        .collect();
    files.sort();
    let mut m = Module { functions: vec![] };
    for path in files {
        let text = std::fs::read_to_string(&path).unwrap();
        let parsed = parse_module(&text).unwrap();
        for copy in 0..copies {
            for f in &parsed.functions {
                let mut f = f.clone();
                f.name = format!("{}_{copy}", f.name);
                m.functions.push(f);
            }
        }
    }
    m
}

fn bench_pipeline(c: &mut Criterion) {
    let module = replicated_corpus(6);
    let passes = pre_pipeline();
    let mut g = c.benchmark_group("optimize_module");
    g.bench_function("parallel", |b| {
        b.iter_batched(
            || module.clone(),
            |mut m| optimize_module(&mut m, &passes).unwrap(),
            BatchSize::LargeInput,
        )
    });
    g.bench_function("sequential", |b| {
        b.iter_batched(
            || module.clone(),
            |mut m| optimize_module_seq(&mut m, &passes).unwrap(),
            BatchSize::LargeInput,
        )
    });
    g.finish();
}

fn bench_differential(c: &mut Criterion) {
    // One loop-heavy function under many cases, so each case carries real
    // interpretation work.
    let text = std::fs::read_to_string(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/corpus/f02_while_licm.ir"
    ))
    .unwrap();
    let original = parse_module(&text).unwrap();
    let mut base = original.clone();
    let mut moved = original.clone();
    optimize_module_seq(&mut base, &baseline_pipeline()).unwrap();
    optimize_module_seq(&mut moved, &pre_pipeline()).unwrap();
    let cases: Vec<(Vec<i64>, Vec<i64>)> = (0..256)
        .map(|k| (vec![2 + k % 7, 3, 400 + k], vec![]))
        .collect();

    let mut g = c.benchmark_group("differential");
    g.bench_function("parallel", |b| {
        b.iter(|| differential(&base, &moved, "licm", &cases).unwrap())
    });
    g.bench_function("sequential", |b| {
        b.iter(|| differential_seq(&base, &moved, "licm", &cases).unwrap())
    });
    g.finish();
}

criterion_group!(benches, bench_pipeline, bench_differential);
criterion_main!(benches);
