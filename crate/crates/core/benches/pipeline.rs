use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use ocqa_core::exec::Execution;
use ocqa_core::gen::{gen_mon2sat, Mon2Cnf};
use ocqa_core::opsem::{brute_numerator, Options, Semantics};
use ocqa_core::pipeline::{run_many, ProgramKind};
use ocqa_core::random::{random_case, rng, InstanceShape};

fn oracle_sweep(c: &mut Criterion) {
    let phi = Mon2Cnf::parse("a|b,b|c,c|d,d|e,e|f,a|f").expect("formula");
    let inst = gen_mon2sat(&phi, 1).expect("instance").instance();
    let mut group = c.benchmark_group("brute_repairs");
    group.sample_size(10);
    for execution in [Execution::Sequential, Execution::Parallel] {
        let opts = Options {
            execution,
            ..Options::default()
        };
        group.bench_function(BenchmarkId::from_parameter(format!("{execution:?}")), |b| {
            b.iter(|| {
                brute_numerator(
                    &inst.db,
                    &inst.keys,
                    &inst.query,
                    &[],
                    Semantics::Repairs,
                    &opts,
                )
                .expect("within guards")
            })
        });
    }
    group.finish();
}

fn pipeline_batch(c: &mut Criterion) {
    let shape = InstanceShape {
        max_answer_vars: 1,
        ..InstanceShape::default()
    };
    let case = (0..)
        .map(|s| random_case(&mut rng(s), &shape))
        .find(|c| c.instance.query.answer_vars().len() == 1 && c.instance.db.len() >= 10)
        .expect("a unary query");
    let tuples: Vec<Vec<String>> = case
        .instance
        .db
        .adom()
        .into_iter()
        .map(|v| vec![v])
        .collect();
    let mut group = c.benchmark_group("run_many_repairs");
    group.sample_size(10);
    for execution in [Execution::Sequential, Execution::Parallel] {
        let opts = Options {
            execution,
            ..Options::default()
        };
        group.bench_function(BenchmarkId::from_parameter(format!("{execution:?}")), |b| {
            b.iter(|| {
                run_many(
                    black_box(&case.instance),
                    &tuples,
                    ProgramKind::Repairs,
                    &opts,
                )
            })
        });
    }
    group.finish();
}

criterion_group!(benches, oracle_sweep, pipeline_batch);
criterion_main!(benches);
