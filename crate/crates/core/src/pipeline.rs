//! End-to-end counting: normal form, alternating procedure, computation
//! DAG, tree automaton and exact tree counting.

use std::collections::BTreeSet;

use num_bigint::BigUint;

use crate::ato::{
    build_dag, check_well_behaved, cubic_guard, ghwcq_program, rep_program, seq_program,
    ur_program, BranchingProgram, ComputationDag, WellBehavedReport,
};
use crate::cqeval::ConjunctiveQuery;
use crate::error::{Error, Result};
use crate::ghw::{gyo_join_tree, make_complete, normal_form, Ghd, NormalForm};
use crate::model::{blocks, Database, KeySpec};
use crate::nfta::{build_nfta, count_by_size, Nfta};
use crate::opsem::{Instance, Options, Semantics};

/// Which alternating procedure to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ProgramKind {
    Repairs,
    Sequences,
    Subset,
    Ur,
    /// Answers of the query itself (no answer tuple is fixed).
    Answers,
}

impl From<Semantics> for ProgramKind {
    fn from(s: Semantics) -> Self {
        match s {
            Semantics::Repairs => ProgramKind::Repairs,
            Semantics::Sequences => ProgramKind::Sequences,
            Semantics::Subset => ProgramKind::Subset,
            Semantics::Ur => ProgramKind::Ur,
        }
    }
}

impl ProgramKind {
    pub fn name(self) -> &'static str {
        match self {
            ProgramKind::Repairs => "repairs",
            ProgramKind::Sequences => "sequences",
            ProgramKind::Subset => "subset",
            ProgramKind::Ur => "ur",
            ProgramKind::Answers => "answers",
        }
    }
}

/// Everything produced by one pipeline run.
#[derive(Debug, Clone)]
pub struct PipelineRun {
    /// Number of distinct accepted trees of size at most `size_bound`.
    pub count: BigUint,
    pub normal_form: NormalForm,
    pub dag: ComputationDag,
    pub nfta: Nfta,
    /// Upper bound on the size of any valid output tree.
    pub size_bound: usize,
    pub well_behaved: WellBehavedReport,
}

/// The decomposition used for an instance: the supplied one, or a join
/// tree when the query is acyclic.
pub fn decomposition(inst: &Instance, kind: ProgramKind) -> Result<Ghd> {
    match &inst.ghd {
        Some(h) => Ok(h.clone()),
        None => gyo_join_tree(&inst.query, kind == ProgramKind::Answers).map_err(|e| {
            Error::Invalid(format!(
                "no decomposition supplied and none could be derived ({e})"
            ))
        }),
    }
}

/// Brings the instance into normal form.
pub fn prepare(inst: &Instance, kind: ProgramKind) -> Result<NormalForm> {
    inst.keys.validate(&inst.db)?;
    inst.query.check_schema(&inst.db)?;
    let h = decomposition(inst, kind)?;
    let h = make_complete(&h, &inst.query)?;
    Ok(normal_form(&inst.db, &inst.query, &h)?)
}

/// Size of a normal-form instance: facts, atoms and decomposition nodes.
pub fn instance_size(nf: &NormalForm) -> usize {
    nf.db.len() + nf.query.atoms().len() + nf.ghd.len()
}

/// Upper bound on the size of a valid output of the chosen procedure.
pub fn size_bound(nf: &NormalForm, keys: &KeySpec, kind: ProgramKind, bitpath: bool) -> usize {
    let n = nf.db.len();
    let b = blocks(&nf.db, keys).len();
    match kind {
        ProgramKind::Repairs | ProgramKind::Subset => 1 + b,
        ProgramKind::Sequences if bitpath => 1 + n + b * (n + 1),
        ProgramKind::Sequences => 1 + n + b,
        ProgramKind::Ur => 1 + n,
        ProgramKind::Answers => answers_size_bound(&nf.query, &nf.ghd),
    }
}

fn answers_size_bound(q: &ConjunctiveQuery, h: &Ghd) -> usize {
    1 + h
        .nodes()
        .iter()
        .map(|n| {
            q.answer_vars()
                .iter()
                .filter(|x| n.chi.contains(*x))
                .collect::<BTreeSet<_>>()
                .len()
                .max(1)
        })
        .sum::<usize>()
}

fn finish<P: BranchingProgram>(
    program: &P,
    nf: NormalForm,
    bound: usize,
    opts: &Options,
) -> Result<PipelineRun> {
    let dag = build_dag(program, opts.guards.max_dag_nodes)?;
    let well_behaved = check_well_behaved(&dag, 1, Some(cubic_guard(instance_size(&nf))));
    let nfta = build_nfta(&dag, opts.guards.max_dag_nodes)?;
    let count = count_by_size(&nfta, bound, opts.guards.max_dag_nodes)?
        .into_iter()
        .sum();
    Ok(PipelineRun {
        count,
        normal_form: nf,
        dag,
        nfta,
        size_bound: bound,
        well_behaved,
    })
}

/// Runs the procedure of `kind` for `tuple` and counts its valid outputs.
pub fn run(
    inst: &Instance,
    tuple: &[String],
    kind: ProgramKind,
    opts: &Options,
) -> Result<PipelineRun> {
    let nf = prepare(inst, kind)?;
    let keys = &inst.keys;
    let bound = size_bound(&nf, keys, kind, opts.bitpath);
    match kind {
        ProgramKind::Repairs | ProgramKind::Subset => {
            let subset = kind == ProgramKind::Subset;
            let p = rep_program(&nf.db, keys, &nf.query, &nf.ghd, tuple, subset)?;
            finish(&p, nf, bound, opts)
        }
        ProgramKind::Sequences => {
            let p = seq_program(&nf.db, keys, &nf.query, &nf.ghd, tuple, opts.bitpath)?;
            finish(&p, nf, bound, opts)
        }
        ProgramKind::Ur => {
            let p = ur_program(&nf.db, &nf.query, &nf.ghd, tuple)?;
            finish(&p, nf, bound, opts)
        }
        ProgramKind::Answers => {
            let p = ghwcq_program(&nf.db, &nf.query, &nf.ghd)?;
            finish(&p, nf, bound, opts)
        }
    }
}

/// Sequence procedure restricted to sequences whose result is `target`.
pub fn run_sequences_to(
    inst: &Instance,
    tuple: &[String],
    target: &Database,
    opts: &Options,
) -> Result<PipelineRun> {
    if !target.is_subset(&inst.db) {
        return Err(Error::Invalid(
            "target repair is not a subset of the database".to_string(),
        ));
    }
    let nf = prepare(inst, ProgramKind::Sequences)?;
    // Facts added by the normal form are singleton blocks and always kept.
    let mut full_target = target.clone();
    for f in nf.db.iter().filter(|f| !inst.db.contains(f)) {
        full_target.insert(f.clone())?;
    }
    let bound = size_bound(&nf, &inst.keys, ProgramKind::Sequences, opts.bitpath);
    let p = seq_program(&nf.db, &inst.keys, &nf.query, &nf.ghd, tuple, opts.bitpath)?
        .restricted_to(&full_target);
    finish(&p, nf, bound, opts)
}

/// Counts for many tuples, using the configured execution strategy.
pub fn run_many(
    inst: &Instance,
    tuples: &[Vec<String>],
    kind: ProgramKind,
    opts: &Options,
) -> Vec<Result<BigUint>> {
    opts.execution
        .map(tuples, |t| run(inst, t, kind, opts).map(|r| r.count))
}

/// Number of answers of the query over `db`, via the answer procedure.
pub fn count_answers(
    db: &Database,
    q: &ConjunctiveQuery,
    ghd: Option<Ghd>,
    opts: &Options,
) -> Result<BigUint> {
    let inst = Instance::new(db.clone(), KeySpec::new(), q.clone(), ghd);
    Ok(run(&inst, &[], ProgramKind::Answers, opts)?.count)
}
