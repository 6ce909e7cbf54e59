//! Oracle-versus-pipeline sweep over seeded random instances.

use std::process::ExitCode;

use num_bigint::BigUint;

use ocqa_core::cqeval::answers;
use ocqa_core::guards::Guards;
use ocqa_core::opsem::{brute_numerator, Options, Semantics};
use ocqa_core::pipeline::{run, ProgramKind};
use ocqa_core::random::{random_case, random_sequence_case, rng, InstanceShape};
use ocqa_core::Result;

#[derive(Default)]
struct Tally {
    matched: u64,
    mismatched: u64,
    errors: u64,
}

impl Tally {
    fn record(&mut self, pipeline: Result<BigUint>, oracle: Result<BigUint>) {
        match (pipeline, oracle) {
            (Ok(a), Ok(b)) if a == b => self.matched += 1,
            (Ok(_), Ok(_)) => self.mismatched += 1,
            _ => self.errors += 1,
        }
    }
}

const ROWS: [&str; 6] = [
    "repairs",
    "sequences",
    "seq-bits",
    "subset",
    "ur",
    "answers",
];

fn sweep(seed: u64, instances: u64, guards: Guards) -> [Tally; 6] {
    let opts = Options {
        guards,
        ..Options::default()
    };
    let bitpath = Options {
        bitpath: true,
        ..opts
    };
    let mut r = rng(seed);
    let shape = InstanceShape::default();
    let covering = InstanceShape {
        cover_answers: true,
        ..shape
    };
    let mut tallies: [Tally; 6] = Default::default();
    for _ in 0..instances {
        let c = random_case(&mut r, &shape);
        let (inst, t) = (&c.instance, &c.tuple);
        for (row, kind, sem) in [
            (0, ProgramKind::Repairs, Semantics::Repairs),
            (3, ProgramKind::Subset, Semantics::Subset),
            (4, ProgramKind::Ur, Semantics::Ur),
        ] {
            tallies[row].record(
                run(inst, t, kind, &opts).map(|x| x.count),
                brute_numerator(&inst.db, &inst.keys, &inst.query, t, sem, &opts),
            );
        }

        let c = random_sequence_case(&mut r, 7);
        let (inst, t) = (&c.instance, &c.tuple);
        let oracle = brute_numerator(
            &inst.db,
            &inst.keys,
            &inst.query,
            t,
            Semantics::Sequences,
            &opts,
        );
        for (row, o) in [(1, &opts), (2, &bitpath)] {
            tallies[row].record(
                run(inst, t, ProgramKind::Sequences, o).map(|x| x.count),
                oracle.clone(),
            );
        }

        let c = random_case(&mut r, &covering);
        let inst = &c.instance;
        tallies[5].record(
            run(inst, &[], ProgramKind::Answers, &opts).map(|x| x.count),
            answers(&inst.query, &inst.db)
                .map(|a| BigUint::from(a.len()))
                .map_err(Into::into),
        );
    }
    tallies
}

pub fn report(seed: u64, instances: u64, guards: Guards) -> anyhow::Result<ExitCode> {
    let tallies = sweep(seed, instances, guards);
    println!("seed {seed}, {instances} instances per pipeline");
    println!(
        "{:<10} {:>8} {:>8} {:>8}  verdict",
        "pipeline", "match", "mismatch", "error"
    );
    let mut ok = true;
    for (name, t) in ROWS.iter().zip(&tallies) {
        let pass = t.mismatched == 0 && t.errors == 0;
        ok &= pass;
        println!(
            "{name:<10} {:>8} {:>8} {:>8}  {}",
            t.matched,
            t.mismatched,
            t.errors,
            if pass { "PASS" } else { "FAIL" }
        );
    }
    Ok(if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}
