//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs as a plain binary (`harness = false`) so the lines show up in the
//! output of `cargo test`; the process exits non-zero if any criterion fails.

use std::cell::RefCell;
use std::collections::BTreeSet;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use num_bigint::BigUint;
use num_traits::{One, Zero};

use ocqa_core::ato::{cubic_guard, Symbol};
use ocqa_core::cqeval::{answers, entails, ConjunctiveQuery};
use ocqa_core::gen::{gen_mon2sat, hom_count_via_rf, Graph};
use ocqa_core::ghw::{is_2_uniform, is_strongly_complete, validate, Ghd};
use ocqa_core::model::{Database, KeySpec, Operation};
use ocqa_core::nfta::{
    count_by_size, determinize_bottom_up, enumerate_accepted, LabeledTree, Nfta, SizeCounter,
};
use ocqa_core::opsem::{
    brute_numerator, count_repairs, count_sequences, count_subset_repairs, enumerate_repairs,
    enumerate_sequences, enumerate_sequences_to, enumerate_subset_repairs, rf, Engine, Instance,
    Options, Semantics,
};
use ocqa_core::pipeline::{instance_size, prepare, run, run_sequences_to, ProgramKind};
use ocqa_core::random::{
    random_case, random_connected_graph, random_mon2cnf, random_nfta, random_sequence_case, rng,
    InstanceShape, RandomCase,
};
use ocqa_core::Result;

/// Instances for the oracle-equivalence criterion.
const ORACLE_INSTANCES: u64 = 100;
/// Instances for the sequence criterion.
const SEQUENCE_INSTANCES: u64 = 50;
/// Operations allowed in a sequence instance.
const MAX_SEQUENCE_OPS: usize = 7;
/// Wall-clock budget for the oracle-equivalence sweep.
const ORACLE_BUDGET: Duration = Duration::from_secs(60);
/// Seeded graphs for the H-colouring cross-check.
const GRAPHS: u64 = 30;
const FORMULAS: u64 = 20;
const AUTOMATA: u64 = 100;
/// Largest tree size for the automaton membership and enumeration checks.
const TREE_BOUND: usize = 5;
const ANSWER_INSTANCES: u64 = 50;

type Verdict = std::result::Result<String, String>;
type Criterion = (&'static str, fn(&Suite) -> Verdict);

struct Suite {
    oracle: Vec<RandomCase>,
    sequence: Vec<RandomCase>,
    answers: Vec<RandomCase>,
    opts: Options,
}

impl Suite {
    fn new() -> Self {
        let shape = InstanceShape::default();
        let oracle = (0..ORACLE_INSTANCES)
            .map(|s| random_case(&mut rng(s), &shape))
            .collect();
        let sequence = (0..SEQUENCE_INSTANCES)
            .map(|s| random_sequence_case(&mut rng(1_000 + s), MAX_SEQUENCE_OPS))
            .collect();
        let covering = InstanceShape {
            cover_answers: true,
            ..shape
        };
        let answers = (0..ANSWER_INSTANCES)
            .map(|s| random_case(&mut rng(2_000 + s), &covering))
            .collect();
        Suite {
            oracle,
            sequence,
            answers,
            opts: Options::default(),
        }
    }
}

fn check(ok: bool, what: impl FnOnce() -> String) -> std::result::Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(what())
    }
}

fn fail<E: std::fmt::Display>(ctx: &str) -> impl FnOnce(E) -> String + '_ {
    move |e| format!("{ctx}: {e}")
}

fn apply(d: &Database, seq: &[Operation]) -> Database {
    let removed: BTreeSet<_> = seq.iter().flat_map(|op| op.removed().iter()).collect();
    d.restrict(d.iter().filter(|f| !removed.contains(f)))
}

fn oracle_equivalence(s: &Suite) -> Verdict {
    let start = Instant::now();
    let mut entailed = 0usize;
    let mut facts = 0usize;
    for (i, case) in s.oracle.iter().enumerate() {
        let inst = &case.instance;
        let want = brute_numerator(
            &inst.db,
            &inst.keys,
            &inst.query,
            &case.tuple,
            Semantics::Repairs,
            &s.opts,
        )
        .map_err(fail(&format!("instance {i} brute")))?;
        let got = run(inst, &case.tuple, ProgramKind::Repairs, &s.opts)
            .map_err(fail(&format!("instance {i} pipeline")))?
            .count;
        check(got == want, || {
            format!("instance {i}: pipeline {got}, oracle {want}")
        })?;
        entailed += usize::from(!want.is_zero());
        facts += inst.db.len();
    }
    let elapsed = start.elapsed();
    check(elapsed < ORACLE_BUDGET, || {
        format!("took {elapsed:.1?}, budget {ORACLE_BUDGET:?}")
    })?;
    Ok(format!(
        "{} instances ({facts} facts, {entailed} with a non-zero numerator) in {elapsed:.2?}",
        s.oracle.len()
    ))
}

fn sequence_pipeline(s: &Suite) -> Verdict {
    let bitpath = Options {
        bitpath: true,
        ..s.opts
    };
    for (i, case) in s.sequence.iter().enumerate() {
        let inst = &case.instance;
        let seqs = enumerate_sequences(&inst.db, &inst.keys, &s.opts.guards)
            .map_err(fail(&format!("instance {i} enumeration")))?;
        let mut want = 0usize;
        for seq in &seqs {
            if entails(&inst.query, &apply(&inst.db, seq), &case.tuple).map_err(fail("entails"))? {
                want += 1;
            }
        }
        let want = BigUint::from(want);
        for (mode, opts) in [("compact", &s.opts), ("bitpath", &bitpath)] {
            let got = run(inst, &case.tuple, ProgramKind::Sequences, opts)
                .map_err(fail(&format!("instance {i} {mode}")))?
                .count;
            check(got == want, || {
                format!("instance {i} {mode}: pipeline {got}, oracle {want}")
            })?;
        }
    }
    Ok(format!(
        "{} instances, compact and bitpath",
        s.sequence.len()
    ))
}

fn example_instance() -> (Instance, Database) {
    let db = Database::parse(
        "P(a1,b).\nP(a1,c).\nP(a2,b).\nP(a2,c).\nP(a2,d).\nS(c,d).\nS(c,e).\nT(d,a1).\n\
         U(c,f).\nU(c,g).\nU(h,i).\nU(h,j).\nU(h,k).\n",
    )
    .expect("example database");
    let keys = KeySpec::parse("key P = 1;\nkey S = 1;\nkey T = 1;\nkey U = 1;\n").expect("keys");
    let q = ConjunctiveQuery::parse("Ans() :- P(x,y), S(y,z), T(z,x), U(y,w).").expect("query");
    let mut h = Ghd::new(["x", "y", "z"], [0, 1]);
    h.add_child(0, ["z", "x"], [2]);
    h.add_child(0, ["y", "w"], [3]);
    let target =
        Database::parse("P(a1,c).\nS(c,d).\nT(d,a1).\nU(c,f).\nU(h,i).\n").expect("target");
    (Instance::new(db, keys, q, Some(h)), target)
}

fn denominators(s: &Suite) -> Verdict {
    let g = &s.opts.guards;
    for (i, case) in s.oracle.iter().chain(&s.sequence).enumerate() {
        let (d, k) = (&case.instance.db, &case.instance.keys);
        let repairs = enumerate_repairs(d, k, g).map_err(fail("repairs"))?.len();
        check(count_repairs(d, k) == BigUint::from(repairs), || {
            format!(
                "instance {i}: repair count {} vs {repairs}",
                count_repairs(d, k)
            )
        })?;
        let subset = enumerate_subset_repairs(d, k, g)
            .map_err(fail("subset"))?
            .len();
        check(count_subset_repairs(d, k) == BigUint::from(subset), || {
            format!("instance {i}: subset count mismatch")
        })?;
        if let Ok(seqs) = enumerate_sequences(d, k, g) {
            check(count_sequences(d, k) == BigUint::from(seqs.len()), || {
                format!(
                    "instance {i}: sequence count {} vs {}",
                    count_sequences(d, k),
                    seqs.len()
                )
            })?;
        }
    }
    let (ex, _) = example_instance();
    let n = count_repairs(&ex.db, &ex.keys);
    check(n == BigUint::from(432u32), || {
        format!("example has {n} repairs, expected 432")
    })?;
    Ok("closed forms match enumeration; example has 432 repairs".to_string())
}

fn example_reproduction(s: &Suite) -> Verdict {
    let (inst, target) = example_instance();
    let want = BigUint::from(7_560u32 + 1_080);
    let brute = enumerate_sequences_to(&inst.db, &inst.keys, &target, &s.opts.guards)
        .map_err(fail("brute"))?
        .len();
    check(BigUint::from(brute) == want, || {
        format!("brute force gives {brute}")
    })?;
    for bitpath in [false, true] {
        let opts = Options { bitpath, ..s.opts };
        let got = run_sequences_to(&inst, &[], &target, &opts)
            .map_err(fail("pipeline"))?
            .count;
        check(got == want, || {
            format!("pipeline (bitpath={bitpath}) gives {got}")
        })?;
    }
    Ok("restricted span 8640 = brute force".to_string())
}

fn hcolouring(s: &Suite) -> Verdict {
    let h = ocqa_core::gen::target_graph();
    let edge = hom_count_via_rf(&Graph::edge(), 1, Engine::Nfta, &s.opts).map_err(fail("edge"))?;
    check(edge == BigUint::from(16u32), || {
        format!("single edge gives {edge}")
    })?;
    let mut seen = BTreeSet::new();
    for seed in 0..GRAPHS {
        let g = random_connected_graph(&mut rng(3_000 + seed), 5);
        let want = g.hom_count(&h);
        for engine in [Engine::Brute, Engine::Nfta] {
            let got = hom_count_via_rf(&g, 1, engine, &s.opts).map_err(fail(&format!("{g}")))?;
            check(got == want, || {
                format!("graph {g} ({engine:?}): {got} vs {want}")
            })?;
        }
        seen.insert(g.to_string());
    }
    Ok(format!(
        "{GRAPHS} graphs ({} distinct), single edge = 16",
        seen.len()
    ))
}

fn mon2sat(s: &Suite) -> Verdict {
    for seed in 0..FORMULAS {
        let phi = random_mon2cnf(&mut rng(4_000 + seed), 6);
        let n = phi.variables().len() as u32;
        let inst = gen_mon2sat(&phi, 1).map_err(fail("generator"))?.instance();
        let r = rf(&inst, &[], Semantics::Repairs, Engine::Brute, &s.opts).map_err(fail("rf"))?;
        let models = phi.count_models();
        check(r.denominator == BigUint::from(3u32).pow(n), || {
            format!("{phi}: denominator {}", r.denominator)
        })?;
        check(r.numerator == models, || {
            format!("{phi}: numerator {} vs #models {models}", r.numerator)
        })?;
    }
    Ok(format!("{FORMULAS} formulas, RF = #models / 3^n"))
}

fn normal_form(s: &Suite) -> Verdict {
    for (i, case) in s.oracle.iter().enumerate() {
        let inst = &case.instance;
        let h = inst
            .ghd
            .as_ref()
            .expect("random instances carry a decomposition");
        let k = validate(h, &inst.query).map_err(fail("input ghd"))?.width;
        let nf = prepare(inst, ProgramKind::Repairs).map_err(fail(&format!("instance {i}")))?;
        let w = validate(&nf.ghd, &nf.query)
            .map_err(fail(&format!("instance {i} normal form")))?
            .width;
        check(w <= k + 1, || format!("instance {i}: width {w} > {k} + 1"))?;
        check(is_strongly_complete(&nf.ghd, &nf.query), || {
            format!("instance {i}: not strongly complete")
        })?;
        check(is_2_uniform(&nf.ghd), || {
            format!("instance {i}: not 2-uniform")
        })?;
        for sem in [Semantics::Repairs, Semantics::Sequences] {
            let before =
                brute_numerator(&inst.db, &inst.keys, &inst.query, &case.tuple, sem, &s.opts)
                    .map_err(fail("before"))?;
            let after = brute_numerator(&nf.db, &inst.keys, &nf.query, &case.tuple, sem, &s.opts)
                .map_err(fail("after"))?;
            check(before == after, || {
                format!("instance {i} {}: numerator {before} -> {after}", sem.name())
            })?;
        }
        check(
            count_repairs(&inst.db, &inst.keys) == count_repairs(&nf.db, &inst.keys),
            || format!("instance {i}: repair count changed"),
        )?;
        check(
            count_sequences(&inst.db, &inst.keys) == count_sequences(&nf.db, &inst.keys),
            || format!("instance {i}: sequence count changed"),
        )?;
    }
    Ok(format!("{} instances", s.oracle.len()))
}

/// All trees over `labels` with at most two children per node and exactly
/// `size` nodes.
fn trees_of_size(labels: &[Symbol], size: usize) -> Vec<LabeledTree> {
    if size == 0 {
        return Vec::new();
    }
    let mut forests: Vec<Vec<LabeledTree>> = Vec::new();
    let rest = size - 1;
    if rest == 0 {
        forests.push(Vec::new());
    } else {
        forests.extend(trees_of_size(labels, rest).into_iter().map(|t| vec![t]));
        for left in 1..rest {
            for a in trees_of_size(labels, left) {
                for b in trees_of_size(labels, rest - left) {
                    forests.push(vec![a.clone(), b]);
                }
            }
        }
    }
    let mut out = Vec::new();
    for label in labels {
        for children in &forests {
            out.push(LabeledTree {
                label: label.clone(),
                children: children.clone(),
            });
        }
    }
    out
}

struct Spy {
    calls: RefCell<Vec<(usize, f64)>>,
}

impl SizeCounter for Spy {
    fn count(&self, _a: &Nfta, size: usize, _eps: f64, delta: f64) -> Result<BigUint> {
        self.calls.borrow_mut().push((size, delta));
        Ok(BigUint::one())
    }
}

fn automaton_layer(_s: &Suite) -> Verdict {
    let limit = 1_000_000;
    let mut checked_trees = 0usize;
    for seed in 0..AUTOMATA {
        let a = random_nfta(&mut rng(5_000 + seed), 8, 2);
        let dfta = determinize_bottom_up(&a, limit).map_err(fail("determinize"))?;
        let labels: Vec<Symbol> = ["a", "b", "c"]
            .iter()
            .map(|v| Symbol::Answer {
                var: "l".into(),
                value: v.to_string(),
            })
            .collect();
        for size in 1..=TREE_BOUND {
            for t in trees_of_size(&labels, size) {
                check(a.accepts(&t) == dfta.accepts(&t), || {
                    format!("automaton {seed}: membership differs on {}", t.to_json())
                })?;
                checked_trees += 1;
            }
        }
        let counted: BigUint = count_by_size(&a, TREE_BOUND + 1, limit)
            .map_err(fail("count"))?
            .into_iter()
            .sum();
        let listed = enumerate_accepted(&a, TREE_BOUND + 1, limit)
            .map_err(fail("enumerate"))?
            .len();
        check(counted == BigUint::from(listed), || {
            format!("automaton {seed}: counted {counted}, enumerated {listed}")
        })?;
    }
    let spy = Spy {
        calls: RefCell::new(Vec::new()),
    };
    let a = random_nfta(&mut rng(6_000), 4, 2);
    let (n, delta) = (7usize, 0.25);
    spy.count_up_to(&a, n, 0.1, delta).map_err(fail("spy"))?;
    let calls = spy.calls.into_inner();
    let per = delta / (2.0 * (n as f64 + 1.0));
    check(calls.len() == n + 1, || {
        format!("spy saw {} calls", calls.len())
    })?;
    check(
        calls
            .iter()
            .enumerate()
            .all(|(i, &(size, d))| size == i && d == per),
        || format!("spy saw {calls:?}"),
    )?;
    Ok(format!(
        "{AUTOMATA} automata, {checked_trees} membership checks, spy saw {} calls",
        n + 1
    ))
}

fn well_behaved(s: &Suite) -> Verdict {
    let mut runs = 0usize;
    let mut largest = 0.0f64;
    let kinds = [
        ProgramKind::Repairs,
        ProgramKind::Sequences,
        ProgramKind::Subset,
        ProgramKind::Ur,
        ProgramKind::Answers,
    ];
    for (i, case) in s
        .oracle
        .iter()
        .chain(&s.sequence)
        .chain(&s.answers)
        .enumerate()
    {
        for kind in kinds {
            let covers = case
                .instance
                .ghd
                .as_ref()
                .is_some_and(Ghd::covers_answer_vars);
            if kind == ProgramKind::Answers && !covers && !case.instance.query.is_boolean() {
                continue;
            }
            let tuple: &[String] = if kind == ProgramKind::Answers {
                &[]
            } else {
                &case.tuple
            };
            let r = run(&case.instance, tuple, kind, &s.opts)
                .map_err(fail(&format!("instance {i} {}", kind.name())))?;
            let guard = cubic_guard(instance_size(&r.normal_form));
            check(r.well_behaved.passed(), || {
                format!(
                    "instance {i} {}: {} universal steps, {} nodes (guard {guard})",
                    kind.name(),
                    r.well_behaved.max_universal,
                    r.dag.len()
                )
            })?;
            largest = largest.max(r.dag.len() as f64 / guard as f64);
            runs += 1;
        }
    }
    Ok(format!(
        "{runs} runs, largest DAG at {:.2}% of the cubic guard",
        100.0 * largest
    ))
}

fn answers_and_ur(s: &Suite) -> Verdict {
    for (i, case) in s.answers.iter().enumerate() {
        let inst = &case.instance;
        let want = answers(&inst.query, &inst.db)
            .map_err(fail("answers"))?
            .len();
        let got = run(inst, &[], ProgramKind::Answers, &s.opts)
            .map_err(fail(&format!("instance {i} answers")))?
            .count;
        check(got == BigUint::from(want), || {
            format!("instance {i}: {got} answers vs {want}")
        })?;
    }
    for (i, case) in s.oracle.iter().take(ANSWER_INSTANCES as usize).enumerate() {
        let inst = &case.instance;
        let want = brute_numerator(
            &inst.db,
            &inst.keys,
            &inst.query,
            &case.tuple,
            Semantics::Ur,
            &s.opts,
        )
        .map_err(fail("subset oracle"))?;
        let got = run(inst, &case.tuple, ProgramKind::Ur, &s.opts)
            .map_err(fail(&format!("instance {i} ur")))?
            .count;
        check(got == want, || format!("instance {i}: ur {got} vs {want}"))?;
    }
    let nonzero = s
        .answers
        .iter()
        .filter(|c| answers(&c.instance.query, &c.instance.db).is_ok_and(|a| !a.is_empty()))
        .count();
    check(nonzero > 0, || {
        "every answer instance was empty".to_string()
    })?;
    Ok(format!(
        "{ANSWER_INSTANCES} answer instances ({nonzero} non-empty), {ANSWER_INSTANCES} ur instances"
    ))
}

fn main() -> ExitCode {
    let suite = Suite::new();
    let criteria: [Criterion; 10] = [
        ("oracle equivalence (repairs)", oracle_equivalence),
        ("sequence pipeline", sequence_pipeline),
        ("denominators", denominators),
        ("worked example 8640", example_reproduction),
        ("h-colouring cross-check", hcolouring),
        ("mon2sat frequencies", mon2sat),
        ("normal form", normal_form),
        ("automaton layer", automaton_layer),
        ("well-behavedness", well_behaved),
        ("answers and ur", answers_and_ur),
    ];
    let mut failed = 0;
    for (n, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let verdict = f(&suite);
        let secs = start.elapsed().as_secs_f64();
        match verdict {
            Ok(detail) => println!("PASS [{:>2}] {name}: {detail} ({secs:.2}s)", n + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL [{:>2}] {name}: {why} ({secs:.2}s)", n + 1);
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
