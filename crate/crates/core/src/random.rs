//! Seeded random instances for the cross-validation suites.

use std::collections::BTreeSet;

use num_traits::ToPrimitive;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ato::Symbol;
use crate::cqeval::{answers, Atom, ConjunctiveQuery};
use crate::gen::{Graph, Mon2Cnf};
use crate::ghw::{validate, Ghd};
use crate::model::{blocks, Database, Fact, KeySpec, Term};
use crate::nfta::{Nfta, Transition};
use crate::opsem::{count_sequences, Instance};

/// Deterministic generator for a given seed.
pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Shape limits for random instances.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InstanceShape {
    pub max_facts: usize,
    pub max_atoms: usize,
    pub max_arity: usize,
    pub domain: usize,
    pub max_answer_vars: usize,
    /// Let the decomposition bags contain answer variables.
    pub cover_answers: bool,
}

impl Default for InstanceShape {
    fn default() -> Self {
        InstanceShape {
            max_facts: 12,
            max_atoms: 4,
            max_arity: 3,
            domain: 3,
            max_answer_vars: 2,
            cover_answers: false,
        }
    }
}

/// A random instance together with a candidate answer tuple.
#[derive(Debug, Clone)]
pub struct RandomCase {
    pub instance: Instance,
    pub tuple: Vec<String>,
}

/// Random self-join-free query with a width ≤ 2 decomposition, random
/// keys, a database of at most `max_facts` facts, and a tuple that is an
/// answer over the full database about half of the time.
pub fn random_case(rng: &mut ChaCha8Rng, shape: &InstanceShape) -> RandomCase {
    loop {
        if let Some(case) = try_case(rng, shape) {
            return case;
        }
    }
}

fn try_case(rng: &mut ChaCha8Rng, shape: &InstanceShape) -> Option<RandomCase> {
    let n_atoms = rng.gen_range(1..=shape.max_atoms);
    let pool: Vec<String> = (0..3).map(|i| format!("x{i}")).collect();
    let constants: Vec<String> = (0..shape.domain).map(|i| format!("c{i}")).collect();
    let mut atoms = Vec::new();
    let mut arities = Vec::new();
    for r in 0..n_atoms {
        let arity = rng.gen_range(1..=shape.max_arity);
        let terms: Vec<Term> = (0..arity)
            .map(|_| {
                if rng.gen_bool(0.1) {
                    Term::constant(constants.choose(rng).expect("non-empty domain").clone())
                } else {
                    Term::var(pool.choose(rng).expect("non-empty pool").clone())
                }
            })
            .collect();
        atoms.push(Atom::new(format!("R{r}"), terms));
        arities.push(arity);
    }
    let vars: Vec<String> = atoms
        .iter()
        .flat_map(|a| a.variables().map(str::to_string))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let n_answer = rng.gen_range(0..=shape.max_answer_vars.min(vars.len()));
    let mut answer: Vec<String> = vars.choose_multiple(rng, n_answer).cloned().collect();
    answer.sort();
    let query = ConjunctiveQuery::new(answer, atoms).ok()?;

    let ghd = random_ghd(rng, &query, shape.cover_answers)?;

    let mut keys = KeySpec::new();
    let mut db = Database::new();
    for (r, &arity) in arities.iter().enumerate() {
        let rel = format!("R{r}");
        db.declare(&rel, arity).ok()?;
        if arity > 1 && rng.gen_bool(0.8) {
            let k = rng.gen_range(1..arity);
            let mut positions: Vec<usize> = (1..=arity).collect();
            positions.shuffle(rng);
            keys.add_key(&rel, positions.into_iter().take(k)).ok()?;
        }
    }
    let n_facts = rng.gen_range(shape.max_facts.div_ceil(2)..=shape.max_facts);
    for _ in 0..n_facts {
        let r = rng.gen_range(0..n_atoms);
        let args: Vec<String> = (0..arities[r])
            .map(|_| constants.choose(rng).expect("non-empty domain").clone())
            .collect();
        db.insert(Fact::new(format!("R{r}"), args)).ok()?;
    }

    let tuple = random_tuple(rng, &query, &db, &constants);
    Some(RandomCase {
        instance: Instance::new(db, keys, query, Some(ghd)),
        tuple,
    })
}

fn random_tuple(
    rng: &mut ChaCha8Rng,
    q: &ConjunctiveQuery,
    db: &Database,
    constants: &[String],
) -> Vec<String> {
    let found: Vec<Vec<String>> = answers(q, db)
        .map(|a| a.into_iter().collect())
        .unwrap_or_default();
    if !found.is_empty() && rng.gen_bool(0.6) {
        return found.choose(rng).expect("non-empty").clone();
    }
    q.answer_vars()
        .iter()
        .map(|_| constants.choose(rng).expect("non-empty domain").clone())
        .collect()
}

/// Random decomposition with at most two atoms per node, bags equal to the
/// guard variables (minus answer variables unless `cover_answers`).
pub fn random_ghd(rng: &mut ChaCha8Rng, q: &ConjunctiveQuery, cover_answers: bool) -> Option<Ghd> {
    let n = q.atoms().len();
    for _ in 0..20 {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(rng);
        let mut groups: Vec<Vec<usize>> = Vec::new();
        let mut i = 0;
        while i < n {
            let take = if i + 1 < n && rng.gen_bool(0.5) { 2 } else { 1 };
            groups.push(order[i..i + take].to_vec());
            i += take;
        }
        let bag = |g: &[usize]| -> BTreeSet<String> {
            g.iter()
                .flat_map(|&a| q.atoms()[a].variables().map(str::to_string))
                .filter(|v| cover_answers || !q.is_answer_var(v))
                .collect()
        };
        let mut h =
            Ghd::new(bag(&groups[0]), groups[0].clone()).with_answer_coverage(cover_answers);
        for (j, g) in groups.iter().enumerate().skip(1) {
            let parent = rng.gen_range(0..j);
            h.add_child(parent, bag(g), g.clone());
        }
        if validate(&h, q).is_ok_and(|r| r.width <= 2) {
            return Some(h);
        }
    }
    None
}

/// Random instance whose sequence count stays small enough to enumerate.
pub fn random_sequence_case(rng: &mut ChaCha8Rng, max_ops: usize) -> RandomCase {
    let shape = InstanceShape {
        max_facts: 9,
        ..InstanceShape::default()
    };
    loop {
        let case = random_case(rng, &shape);
        let inst = &case.instance;
        let conflicting: usize = blocks(&inst.db, &inst.keys)
            .iter()
            .filter(|b| !b.is_singleton())
            .map(|b| b.len())
            .sum();
        let total = count_sequences(&inst.db, &inst.keys)
            .to_usize()
            .unwrap_or(usize::MAX);
        if conflicting <= max_ops && total <= 20_000 {
            return case;
        }
    }
}

/// Random automaton over the alphabet `{a, b, c}`.
pub fn random_nfta(rng: &mut ChaCha8Rng, max_states: usize, max_arity: usize) -> Nfta {
    let n = rng.gen_range(1..=max_states);
    let states: Vec<String> = (0..n).map(|i| format!("q{i}")).collect();
    let labels = ["a", "b", "c"];
    let n_trans = rng.gen_range(1..=2 * n + 2);
    let mut transitions = BTreeSet::new();
    for _ in 0..n_trans {
        let arity = rng.gen_range(0..=max_arity);
        transitions.insert(Transition {
            state: rng.gen_range(0..n),
            symbol: Symbol::Answer {
                var: "l".to_string(),
                value: labels.choose(rng).expect("labels").to_string(),
            },
            children: (0..arity).map(|_| rng.gen_range(0..n)).collect(),
        });
    }
    Nfta::new(states, 0, transitions.into_iter().collect()).expect("states in range")
}

/// Random connected graph with `1..=max_vertices` vertices.
pub fn random_connected_graph(rng: &mut ChaCha8Rng, max_vertices: usize) -> Graph {
    loop {
        let n = rng.gen_range(1..=max_vertices);
        let p = rng.gen_range(0.3..0.9);
        let edges: Vec<(usize, usize)> = (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .filter(|_| rng.gen_bool(p))
            .collect();
        let g = Graph::new(n, edges).expect("edges in range");
        if g.is_connected() {
            return g;
        }
    }
}

/// Random monotone 2-CNF over at most `max_vars` variables.
pub fn random_mon2cnf(rng: &mut ChaCha8Rng, max_vars: usize) -> Mon2Cnf {
    let n = rng.gen_range(2..=max_vars.max(2));
    let names: Vec<String> = (0..n).map(|i| format!("p{i}")).collect();
    let m = rng.gen_range(1..=n + 1);
    let clauses: Vec<(String, String)> = (0..m)
        .map(|_| {
            let pair: Vec<&String> = names.choose_multiple(rng, 2).collect();
            (pair[0].clone(), pair[1].clone())
        })
        .collect();
    Mon2Cnf::new(clauses).expect("generated clauses are well-formed")
}
