//! Operational repair semantics: exhaustive oracles, closed-form
//! denominators and exact relative frequencies.
//!
//! The oracles explore the space of intermediate databases reachable by
//! justified deletions, exactly as the definitions describe; the closed
//! forms are validated against them in the test suite.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use num_bigint::BigUint;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};

use crate::cqeval::{entails, ConjunctiveQuery};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::ghw::Ghd;
use crate::guards::Guards;
use crate::model::{blocks, Database, Fact, KeySpec, Operation};

/// Which population a relative frequency is taken over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Semantics {
    /// Operational repairs.
    Repairs,
    /// Complete repairing sequences.
    Sequences,
    /// Classical subset repairs: exactly one fact kept per block.
    Subset,
    /// Arbitrary subsets of the database.
    Ur,
}

impl Semantics {
    pub const ALL: [Semantics; 4] = [
        Semantics::Repairs,
        Semantics::Sequences,
        Semantics::Subset,
        Semantics::Ur,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Semantics::Repairs => "repairs",
            Semantics::Sequences => "sequences",
            Semantics::Subset => "subset",
            Semantics::Ur => "ur",
        }
    }
}

/// How the numerator is computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Engine {
    /// Exhaustive enumeration.
    Brute,
    /// Alternating procedure → tree automaton → distinct-tree counting.
    Nfta,
}

/// Options shared by the counting entry points.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Options {
    pub guards: Guards,
    pub execution: Execution,
    /// Emit interleaving identifiers bit by bit in the sequence procedure.
    pub bitpath: bool,
}

/// A database with keys, a query and an optional decomposition.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Instance {
    pub db: Database,
    pub keys: KeySpec,
    pub query: ConjunctiveQuery,
    pub ghd: Option<Ghd>,
}

impl Instance {
    pub fn new(db: Database, keys: KeySpec, query: ConjunctiveQuery, ghd: Option<Ghd>) -> Self {
        Instance {
            db,
            keys,
            query,
            ghd,
        }
    }
}

/// An unreduced count pair; [`Frequency::ratio`] gives the reduced value.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frequency {
    pub numerator: BigUint,
    pub denominator: BigUint,
}

impl Frequency {
    pub fn new(numerator: BigUint, denominator: BigUint) -> Self {
        assert!(!denominator.is_zero(), "denominator must be positive");
        Frequency {
            numerator,
            denominator,
        }
    }

    pub fn ratio(&self) -> BigRational {
        BigRational::new(
            self.numerator.clone().into(),
            self.denominator.clone().into(),
        )
    }

    /// Decimal expansion rounded half-up to `places` digits.
    pub fn decimal(&self, places: usize) -> String {
        let scale = BigUint::from(10u32).pow(places as u32);
        let scaled = &self.numerator * &scale * 2u32 + &self.denominator;
        let rounded = scaled / (&self.denominator * 2u32);
        let (int, frac) = rounded.div_rem(&scale);
        if places == 0 {
            return int.to_string();
        }
        format!("{int}.{:0>width$}", frac.to_string(), width = places)
    }
}

impl fmt::Display for Frequency {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let g = self.numerator.gcd(&self.denominator);
        let (n, d) = (&self.numerator / &g, &self.denominator / &g);
        if d.is_one() {
            write!(f, "{n}")
        } else {
            write!(f, "{n}/{d}")
        }
    }
}

/// The reachable state space of a database under justified deletions.
/// Facts in singleton blocks can never be removed; the remaining facts are
/// tracked by a bit mask.
struct StateSpace {
    fixed: Vec<Fact>,
    conflict: Vec<Fact>,
    groups: Vec<u64>,
    template: Database,
}

impl StateSpace {
    fn new(d: &Database, keys: &KeySpec, guards: &Guards) -> Result<Self> {
        let mut fixed = Vec::new();
        let mut conflict = Vec::new();
        let mut groups = Vec::new();
        for b in blocks(d, keys) {
            if b.is_singleton() {
                fixed.extend(b.facts);
            } else {
                let start = conflict.len();
                conflict.extend(b.facts);
                let mask = (start..conflict.len()).fold(0u64, |m, i| m | (1 << i));
                groups.push(mask);
            }
        }
        guards.check(
            "facts in non-singleton blocks",
            guards.max_facts.min(63),
            conflict.len(),
        )?;
        Ok(StateSpace {
            fixed,
            conflict,
            groups,
            template: d.restrict(std::iter::empty()),
        })
    }

    fn full(&self) -> u64 {
        self.groups.iter().fold(0, |m, g| m | g)
    }

    fn is_terminal(&self, s: u64) -> bool {
        self.groups.iter().all(|g| (s & g).count_ones() <= 1)
    }

    /// Removal masks of all distinct justified operations in state `s`.
    fn operations(&self, s: u64) -> Vec<u64> {
        let mut ops = Vec::new();
        for g in &self.groups {
            let present: Vec<u64> = (0..64)
                .map(|i| 1u64 << i)
                .filter(|bit| s & g & bit != 0)
                .collect();
            if present.len() < 2 {
                continue;
            }
            for (i, a) in present.iter().enumerate() {
                ops.push(*a);
                for b in &present[i + 1..] {
                    ops.push(a | b);
                }
            }
        }
        ops
    }

    fn database(&self, s: u64) -> Database {
        let mut facts: Vec<&Fact> = self.fixed.iter().collect();
        facts.extend(
            self.conflict
                .iter()
                .enumerate()
                .filter(|(i, _)| s & (1 << i) != 0)
                .map(|(_, f)| f),
        );
        self.template.restrict(facts)
    }

    fn mask_of(&self, db: &Database) -> u64 {
        self.conflict
            .iter()
            .enumerate()
            .filter(|(_, f)| db.contains(f))
            .fold(0, |m, (i, _)| m | (1 << i))
    }

    fn operation(&self, mask: u64) -> Operation {
        let facts: Vec<Fact> = self
            .conflict
            .iter()
            .enumerate()
            .filter(|(i, _)| mask & (1 << i) != 0)
            .map(|(_, f)| f.clone())
            .collect();
        Operation::new(facts)
    }

    /// Terminal states reachable from the full database.
    fn terminal_states(&self) -> BTreeSet<u64> {
        let mut seen = BTreeSet::new();
        let mut terminals = BTreeSet::new();
        let mut stack = vec![self.full()];
        while let Some(s) = stack.pop() {
            if !seen.insert(s) {
                continue;
            }
            if self.is_terminal(s) {
                terminals.insert(s);
            }
            for op in self.operations(s) {
                stack.push(s & !op);
            }
        }
        terminals
    }

    /// Number of distinct complete sequences ending in each terminal state,
    /// by forward path counting over the state graph.
    fn sequences_per_terminal(&self) -> BTreeMap<u64, BigUint> {
        let mut levels: BTreeMap<u32, BTreeMap<u64, BigUint>> = BTreeMap::new();
        let full = self.full();
        levels
            .entry(full.count_ones())
            .or_default()
            .insert(full, BigUint::one());
        let mut out = BTreeMap::new();
        while let Some((_, level)) = levels.pop_last() {
            for (s, ways) in level {
                if self.is_terminal(s) {
                    *out.entry(s).or_insert_with(BigUint::zero) += &ways;
                    continue;
                }
                for op in self.operations(s) {
                    let next = s & !op;
                    *levels
                        .entry(next.count_ones())
                        .or_default()
                        .entry(next)
                        .or_insert_with(BigUint::zero) += &ways;
                }
            }
        }
        out
    }
}

/// All operational repairs, found by exploring justified deletions.
pub fn enumerate_repairs(d: &Database, keys: &KeySpec, guards: &Guards) -> Result<Vec<Database>> {
    let space = StateSpace::new(d, keys, guards)?;
    let expected = count_repairs(d, keys);
    guards.check(
        "operational repairs",
        guards.max_trees,
        expected.to_usize().unwrap_or(usize::MAX),
    )?;
    Ok(space
        .terminal_states()
        .into_iter()
        .map(|s| space.database(s))
        .collect())
}

/// Number of operational repairs: the product over blocks of 1 for a
/// singleton block and `|B|+1` otherwise.
pub fn count_repairs(d: &Database, keys: &KeySpec) -> BigUint {
    blocks(d, keys)
        .iter()
        .map(|b| {
            if b.is_singleton() {
                BigUint::one()
            } else {
                BigUint::from(b.len() + 1)
            }
        })
        .product()
}

/// Number of complete operation sequences on one block of `n` facts, split
/// by length: `f(n, l) = n·f(n−1, l−1) + C(n,2)·f(n−2, l−1)` with
/// `f(0,0) = f(1,0) = 1`.
pub fn block_sequence_counts(n: usize) -> Vec<BigUint> {
    let mut table: Vec<Vec<BigUint>> = Vec::with_capacity(n + 1);
    for m in 0..=n {
        let mut row = vec![BigUint::zero(); m + 1];
        if m <= 1 {
            row[0] = BigUint::one();
        } else {
            let pairs = BigUint::from(m * (m - 1) / 2);
            for (l, slot) in row.iter_mut().enumerate().skip(1) {
                if let Some(prev) = table[m - 1].get(l - 1) {
                    *slot += prev * BigUint::from(m);
                }
                if let Some(prev) = table[m - 2].get(l - 1) {
                    *slot += prev * &pairs;
                }
            }
        }
        table.push(row);
    }
    table.pop().unwrap_or_default()
}

pub(crate) fn binomial(n: usize, k: usize) -> BigUint {
    if k > n {
        return BigUint::zero();
    }
    let k = k.min(n - k);
    let mut acc = BigUint::one();
    for i in 0..k {
        acc = acc * BigUint::from(n - i) / BigUint::from(i + 1);
    }
    acc
}

/// Number of complete repairing sequences: per-block length distributions
/// combined by binomial interleaving.
pub fn count_sequences(d: &Database, keys: &KeySpec) -> BigUint {
    let mut acc: Vec<BigUint> = vec![BigUint::one()];
    for b in blocks(d, keys) {
        let per = block_sequence_counts(b.len());
        let mut next = vec![BigUint::zero(); acc.len() + per.len() - 1];
        for (total, ways) in acc.iter().enumerate() {
            if ways.is_zero() {
                continue;
            }
            for (l, f) in per.iter().enumerate() {
                if f.is_zero() {
                    continue;
                }
                next[total + l] += ways * f * binomial(total + l, l);
            }
        }
        acc = next;
    }
    acc.into_iter().sum()
}

/// All complete repairing sequences, by depth-first exploration.
pub fn enumerate_sequences(
    d: &Database,
    keys: &KeySpec,
    guards: &Guards,
) -> Result<Vec<Vec<Operation>>> {
    let space = StateSpace::new(d, keys, guards)?;
    let expected = count_sequences(d, keys);
    guards.check(
        "complete repairing sequences",
        guards.max_trees,
        expected.to_usize().unwrap_or(usize::MAX),
    )?;
    let mut out = Vec::new();
    let mut prefix = Vec::new();
    collect_sequences(&space, space.full(), None, &mut prefix, &mut out);
    Ok(out)
}

/// All complete repairing sequences `s` with `s(D) = target`.
pub fn enumerate_sequences_to(
    d: &Database,
    keys: &KeySpec,
    target: &Database,
    guards: &Guards,
) -> Result<Vec<Vec<Operation>>> {
    let space = StateSpace::new(d, keys, guards)?;
    let goal = space.mask_of(target);
    let mut out = Vec::new();
    let mut prefix = Vec::new();
    collect_sequences(&space, space.full(), Some(goal), &mut prefix, &mut out);
    guards.check("complete repairing sequences", guards.max_trees, out.len())?;
    Ok(out)
}

fn collect_sequences(
    space: &StateSpace,
    s: u64,
    goal: Option<u64>,
    prefix: &mut Vec<u64>,
    out: &mut Vec<Vec<Operation>>,
) {
    if space.is_terminal(s) {
        if goal.is_none_or(|g| g == s) {
            out.push(prefix.iter().map(|&m| space.operation(m)).collect());
        }
        return;
    }
    for op in space.operations(s) {
        if goal.is_some_and(|g| g & op != 0) {
            continue;
        }
        prefix.push(op);
        collect_sequences(space, s & !op, goal, prefix, out);
        prefix.pop();
    }
}

/// Classical subset repairs: one fact kept from every block.
pub fn enumerate_subset_repairs(
    d: &Database,
    keys: &KeySpec,
    guards: &Guards,
) -> Result<Vec<Database>> {
    let bs = blocks(d, keys);
    let total = count_subset_repairs(d, keys);
    guards.check(
        "subset repairs",
        guards.max_trees,
        total.to_usize().unwrap_or(usize::MAX),
    )?;
    let mut out: Vec<Vec<&Fact>> = vec![Vec::new()];
    for b in &bs {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                b.facts.iter().map(move |f| {
                    let mut next = prefix.clone();
                    next.push(f);
                    next
                })
            })
            .collect();
    }
    Ok(out.into_iter().map(|facts| d.restrict(facts)).collect())
}

pub fn count_subset_repairs(d: &Database, keys: &KeySpec) -> BigUint {
    blocks(d, keys)
        .iter()
        .map(|b| BigUint::from(b.len()))
        .product()
}

/// Every subset of the database.
pub fn enumerate_subsets(d: &Database, guards: &Guards) -> Result<Vec<Database>> {
    guards.check(
        "facts for subset enumeration",
        guards.max_facts.min(30),
        d.len(),
    )?;
    let facts: Vec<&Fact> = d.iter().collect();
    Ok((0u64..(1u64 << facts.len()))
        .map(|mask| {
            d.restrict(
                facts
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| mask & (1 << i) != 0)
                    .map(|(_, f)| *f),
            )
        })
        .collect())
}

/// Size of the population each semantics draws from.
pub fn denominator(d: &Database, keys: &KeySpec, semantics: Semantics) -> BigUint {
    match semantics {
        Semantics::Repairs => count_repairs(d, keys),
        Semantics::Sequences => count_sequences(d, keys),
        Semantics::Subset => count_subset_repairs(d, keys),
        Semantics::Ur => BigUint::one() << d.len(),
    }
}

fn count_entailing(
    candidates: &[Database],
    q: &ConjunctiveQuery,
    tuple: &[String],
    exec: Execution,
) -> Result<BigUint> {
    let flags = exec.map(candidates, |db| entails(q, db, tuple));
    let mut n = 0usize;
    for f in flags {
        if f? {
            n += 1;
        }
    }
    Ok(BigUint::from(n))
}

/// Numerator by exhaustive enumeration of the chosen population.
pub fn brute_numerator(
    d: &Database,
    keys: &KeySpec,
    q: &ConjunctiveQuery,
    tuple: &[String],
    semantics: Semantics,
    opts: &Options,
) -> Result<BigUint> {
    q.check_schema(d)?;
    match semantics {
        Semantics::Repairs => {
            let repairs = enumerate_repairs(d, keys, &opts.guards)?;
            count_entailing(&repairs, q, tuple, opts.execution)
        }
        Semantics::Sequences => {
            let space = StateSpace::new(d, keys, &opts.guards)?;
            let per = space.sequences_per_terminal();
            let states: Vec<(u64, BigUint)> = per.into_iter().collect();
            let flags = opts
                .execution
                .map(&states, |(s, _)| entails(q, &space.database(*s), tuple));
            let mut total = BigUint::zero();
            for ((_, ways), flag) in states.iter().zip(flags) {
                if flag? {
                    total += ways;
                }
            }
            Ok(total)
        }
        Semantics::Subset => {
            let repairs = enumerate_subset_repairs(d, keys, &opts.guards)?;
            count_entailing(&repairs, q, tuple, opts.execution)
        }
        Semantics::Ur => {
            let subsets = enumerate_subsets(d, &opts.guards)?;
            count_entailing(&subsets, q, tuple, opts.execution)
        }
    }
}

/// Relative frequency of `tuple` under the chosen semantics and engine.
pub fn rf(
    inst: &Instance,
    tuple: &[String],
    semantics: Semantics,
    engine: Engine,
    opts: &Options,
) -> Result<Frequency> {
    if tuple.len() != inst.query.answer_vars().len() {
        return Err(Error::Invalid(format!(
            "tuple has {} values but the query has {} answer variables",
            tuple.len(),
            inst.query.answer_vars().len()
        )));
    }
    inst.keys.validate(&inst.db)?;
    let numerator = match engine {
        Engine::Brute => {
            brute_numerator(&inst.db, &inst.keys, &inst.query, tuple, semantics, opts)?
        }
        Engine::Nfta => crate::pipeline::run(inst, tuple, semantics.into(), opts)?.count,
    };
    Ok(Frequency::new(
        numerator,
        denominator(&inst.db, &inst.keys, semantics),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> (Database, KeySpec) {
        (
            Database::parse("R(1,a).\nR(1,b).\n").unwrap(),
            KeySpec::parse("key R = 1;").unwrap(),
        )
    }

    pub(crate) fn example_db() -> Database {
        Database::parse(
            "P(a1,b).\nP(a1,c).\nP(a2,b).\nP(a2,c).\nP(a2,d).\nS(c,d).\nS(c,e).\nT(d,a1).\n\
             U(c,f).\nU(c,g).\nU(h,i).\nU(h,j).\nU(h,k).\n",
        )
        .unwrap()
    }

    pub(crate) fn example_keys() -> KeySpec {
        KeySpec::parse("key P = 1;\nkey S = 1;\nkey T = 1;\nkey U = 1;\n").unwrap()
    }

    #[test]
    fn toy_repairs() {
        let (d, k) = toy();
        let reps = enumerate_repairs(&d, &k, &Guards::default()).unwrap();
        assert_eq!(reps.len(), 3);
        assert!(reps.iter().any(Database::is_empty));
        assert_eq!(count_repairs(&d, &k), BigUint::from(3u32));
    }

    #[test]
    fn example_database_has_432_repairs() {
        let d = example_db();
        let k = example_keys();
        let sizes: Vec<usize> = blocks(&d, &k).iter().map(|b| b.len()).collect();
        assert_eq!(sizes, vec![2, 3, 2, 1, 2, 3]);
        assert_eq!(count_repairs(&d, &k), BigUint::from(432u32));
        let reps = enumerate_repairs(&d, &k, &Guards::default()).unwrap();
        assert_eq!(reps.len(), 432);
    }

    #[test]
    fn sequence_counts_small() {
        assert_eq!(
            block_sequence_counts(3).iter().sum::<BigUint>(),
            BigUint::from(12u32)
        );
        let (d, k) = toy();
        assert_eq!(count_sequences(&d, &k), BigUint::from(3u32));
        assert_eq!(
            enumerate_sequences(&d, &k, &Guards::default())
                .unwrap()
                .len(),
            3
        );
        let d2 = Database::parse("R(1,a).\nR(1,b).\nR(2,a).\nR(2,b).\n").unwrap();
        assert_eq!(count_sequences(&d2, &k), BigUint::from(18u32));
        assert_eq!(
            enumerate_sequences(&d2, &k, &Guards::default())
                .unwrap()
                .len(),
            18
        );
        let consistent = Database::parse("R(1,a).\n").unwrap();
        let seqs = enumerate_sequences(&consistent, &k, &Guards::default()).unwrap();
        assert_eq!(seqs, vec![Vec::<Operation>::new()]);
    }

    #[test]
    fn toy_frequencies() {
        let (d, k) = toy();
        let q = ConjunctiveQuery::parse("Ans() :- R(x,y).").unwrap();
        let inst = Instance::new(d, k, q, None);
        let opts = Options::default();
        let r = rf(&inst, &[], Semantics::Repairs, Engine::Brute, &opts).unwrap();
        assert_eq!(r.to_string(), "2/3");
        let s = rf(&inst, &[], Semantics::Sequences, Engine::Brute, &opts).unwrap();
        assert_eq!(s.to_string(), "2/3");
        assert_eq!(s.decimal(12), "0.666666666667");
        let sub = rf(&inst, &[], Semantics::Subset, Engine::Brute, &opts).unwrap();
        assert_eq!(sub.to_string(), "1");
    }

    #[test]
    fn subset_semantics_counts() {
        let d = Database::parse("R(a).\n").unwrap();
        let q = ConjunctiveQuery::parse("Ans() :- R(x).").unwrap();
        let opts = Options::default();
        let n = brute_numerator(&d, &KeySpec::new(), &q, &[], Semantics::Ur, &opts).unwrap();
        assert_eq!(n, BigUint::one());
        assert_eq!(
            denominator(&d, &KeySpec::new(), Semantics::Ur),
            BigUint::from(2u32)
        );
        let d = Database::parse("R(a).\nS(b).\n").unwrap();
        let n = brute_numerator(&d, &KeySpec::new(), &q, &[], Semantics::Ur, &opts).unwrap();
        assert_eq!(n, BigUint::from(2u32));
        let (d, k) = toy();
        assert_eq!(
            enumerate_subset_repairs(&d, &k, &Guards::default())
                .unwrap()
                .len(),
            2
        );
    }

    #[test]
    fn decimal_rounding() {
        let f = Frequency::new(BigUint::from(1u32), BigUint::from(3u32));
        assert_eq!(f.decimal(12), "0.333333333333");
        let f = Frequency::new(BigUint::from(1u32), BigUint::from(1u32));
        assert_eq!(f.decimal(12), "1.000000000000");
        assert_eq!(f.to_string(), "1");
        let f = Frequency::new(BigUint::zero(), BigUint::from(9u32));
        assert_eq!(f.to_string(), "0");
    }

    #[test]
    fn guard_trips_on_large_blocks() {
        let text: String = (0..20).map(|i| format!("R(1,v{i}).\n")).collect();
        let d = Database::parse(&text).unwrap();
        let k = KeySpec::parse("key R = 1;").unwrap();
        let err = enumerate_repairs(&d, &k, &Guards::default()).unwrap_err();
        assert!(err.is_guard());
    }
}
