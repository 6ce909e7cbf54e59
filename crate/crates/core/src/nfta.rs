//! Nondeterministic finite tree automata built from computation DAGs, and
//! exact counting of the distinct trees they accept.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::rc::Rc;

use num_bigint::BigUint;
use num_traits::Zero;
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::ato::{ComputationDag, Quantifier, Symbol, Terminal};
use crate::error::{Error, Result};

pub use crate::ato::OutputTree as LabeledTree;

/// A top-down transition `(state, symbol) → (child states)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Transition {
    pub state: usize,
    pub symbol: Symbol,
    pub children: Vec<usize>,
}

/// A tree automaton with a single initial (root) state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Nfta {
    states: Vec<String>,
    initial: usize,
    transitions: Vec<Transition>,
}

/// Concatenates every tuple of `a` with every tuple of `b`.
pub fn tensor(a: &BTreeSet<Vec<usize>>, b: &BTreeSet<Vec<usize>>) -> BTreeSet<Vec<usize>> {
    let mut out = BTreeSet::new();
    for x in a {
        for y in b {
            let mut t = x.clone();
            t.extend_from_slice(y);
            out.insert(t);
        }
    }
    out
}

/// Translates a computation DAG into a tree automaton whose language is
/// the set of valid outputs. States are the labeling configurations.
pub fn build_nfta(dag: &ComputationDag, max_transitions: usize) -> Result<Nfta> {
    let mut state_of: HashMap<usize, usize> = HashMap::new();
    let mut names: Vec<String> = Vec::new();
    let mut seen_ids: HashMap<&str, usize> = HashMap::new();
    for (i, node) in dag.nodes().iter().enumerate() {
        if node.label.is_none() {
            continue;
        }
        let id = node
            .id
            .as_deref()
            .ok_or_else(|| Error::Internal(format!("labeling node {i} has no identifier")))?;
        if let Some(prev) = seen_ids.insert(id, i) {
            return Err(Error::Internal(format!(
                "state identifier collision between nodes {prev} and {i}"
            )));
        }
        state_of.insert(i, names.len());
        names.push(id.to_string());
    }
    let initial = *state_of
        .get(&dag.root())
        .ok_or_else(|| Error::Internal("initial configuration is not labeling".to_string()))?;

    let mut results: Vec<Option<BTreeSet<Vec<usize>>>> = vec![None; dag.len()];
    let mut transitions: BTreeSet<Transition> = BTreeSet::new();
    for &i in dag.topological_order().iter().rev() {
        let node = dag.node(i);
        let body = match node.terminal {
            Some(Terminal::Accept) => BTreeSet::from([Vec::new()]),
            Some(Terminal::Reject) => BTreeSet::new(),
            None => {
                let mut parts = node
                    .children
                    .iter()
                    .map(|&c| results[c].as_ref().expect("successor processed"));
                match node.quantifier {
                    Quantifier::Existential => parts.flat_map(|p| p.iter().cloned()).collect(),
                    Quantifier::Universal => {
                        let first = parts.next().cloned().unwrap_or_default();
                        let mut acc = first;
                        for p in parts {
                            acc = tensor(&acc, p);
                            if acc.len() > max_transitions {
                                return Err(Error::guard(
                                    "automaton transitions",
                                    max_transitions,
                                    acc.len(),
                                ));
                            }
                        }
                        acc
                    }
                }
            }
        };
        let result = match &node.label {
            Some(symbol) => {
                let s = state_of[&i];
                for children in body {
                    transitions.insert(Transition {
                        state: s,
                        symbol: symbol.clone(),
                        children,
                    });
                }
                if transitions.len() > max_transitions {
                    return Err(Error::guard(
                        "automaton transitions",
                        max_transitions,
                        transitions.len(),
                    ));
                }
                BTreeSet::from([vec![s]])
            }
            None => body,
        };
        results[i] = Some(result);
    }
    Ok(Nfta {
        states: names,
        initial,
        transitions: transitions.into_iter().collect(),
    }
    .trimmed())
}

impl Nfta {
    /// Builds an automaton directly; `states` are display names.
    pub fn new(states: Vec<String>, initial: usize, transitions: Vec<Transition>) -> Result<Self> {
        if initial >= states.len() {
            return Err(Error::Invalid("initial state out of range".to_string()));
        }
        if transitions
            .iter()
            .any(|t| t.state >= states.len() || t.children.iter().any(|&c| c >= states.len()))
        {
            return Err(Error::Invalid(
                "transition refers to unknown state".to_string(),
            ));
        }
        Ok(Nfta {
            states,
            initial,
            transitions,
        })
    }

    pub fn states(&self) -> &[String] {
        &self.states
    }

    pub fn initial(&self) -> usize {
        self.initial
    }

    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }

    pub fn alphabet(&self) -> BTreeSet<Symbol> {
        self.transitions.iter().map(|t| t.symbol.clone()).collect()
    }

    /// `|states| + Σ (1 + arity)` over transitions.
    pub fn size(&self) -> usize {
        self.states.len()
            + self
                .transitions
                .iter()
                .map(|t| 1 + t.children.len())
                .sum::<usize>()
    }

    /// Removes states that accept no tree or are unreachable from the
    /// initial state, renumbering the rest.
    pub fn trimmed(&self) -> Nfta {
        let n = self.states.len();
        let mut productive = vec![false; n];
        loop {
            let mut changed = false;
            for t in &self.transitions {
                if !productive[t.state] && t.children.iter().all(|&c| productive[c]) {
                    productive[t.state] = true;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        let useful: Vec<&Transition> = self
            .transitions
            .iter()
            .filter(|t| productive[t.state] && t.children.iter().all(|&c| productive[c]))
            .collect();
        let mut reachable = vec![false; n];
        reachable[self.initial] = true;
        let mut stack = vec![self.initial];
        let mut by_state: HashMap<usize, Vec<&Transition>> = HashMap::new();
        for t in &useful {
            by_state.entry(t.state).or_default().push(t);
        }
        while let Some(s) = stack.pop() {
            for t in by_state.get(&s).into_iter().flatten() {
                for &c in &t.children {
                    if !reachable[c] {
                        reachable[c] = true;
                        stack.push(c);
                    }
                }
            }
        }
        let mut renumber = vec![usize::MAX; n];
        let mut states = Vec::new();
        for s in 0..n {
            if s == self.initial || (reachable[s] && productive[s]) {
                renumber[s] = states.len();
                states.push(self.states[s].clone());
            }
        }
        let transitions = useful
            .into_iter()
            .filter(|t| reachable[t.state])
            .map(|t| Transition {
                state: renumber[t.state],
                symbol: t.symbol.clone(),
                children: t.children.iter().map(|&c| renumber[c]).collect(),
            })
            .collect();
        Nfta {
            states,
            initial: renumber[self.initial],
            transitions,
        }
    }

    /// True iff some run labels the root with the initial state.
    pub fn accepts(&self, tree: &LabeledTree) -> bool {
        let mut index: HashMap<(usize, &Symbol, usize), Vec<&Transition>> = HashMap::new();
        for t in &self.transitions {
            index
                .entry((t.state, &t.symbol, t.children.len()))
                .or_default()
                .push(t);
        }
        fn run(
            index: &HashMap<(usize, &Symbol, usize), Vec<&Transition>>,
            state: usize,
            tree: &LabeledTree,
        ) -> bool {
            index
                .get(&(state, &tree.label, tree.children.len()))
                .into_iter()
                .flatten()
                .any(|t| {
                    t.children
                        .iter()
                        .zip(&tree.children)
                        .all(|(&s, c)| run(index, s, c))
                })
        }
        run(&index, self.initial, tree)
    }

    /// Stable content identifier of the automaton.
    pub fn content_id(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.initial.to_le_bytes());
        for s in &self.states {
            h.update(s.as_bytes());
            h.update([0]);
        }
        for t in &self.transitions {
            h.update(format!("{}|{}|{:?};", t.state, t.symbol, t.children).as_bytes());
        }
        h.finalize()
            .iter()
            .take(16)
            .fold(String::new(), |mut s, b| {
                let _ = write!(s, "{b:02x}");
                s
            })
    }

    pub fn to_json(&self) -> String {
        let value = json!({
            "id": self.content_id(),
            "initial": self.states[self.initial],
            "states": self.states,
            "alphabet": self.alphabet().iter().map(|s| s.to_string()).collect::<Vec<_>>(),
            "transitions": self.transitions.iter().map(|t| json!({
                "from": self.states[t.state],
                "symbol": t.symbol.to_string(),
                "to": t.children.iter().map(|&c| self.states[c].clone()).collect::<Vec<_>>(),
            })).collect::<Vec<_>>(),
        });
        serde_json::to_string_pretty(&value).expect("JSON values serialize")
    }

    /// Parses the JSON produced by [`Nfta::to_json`].
    pub fn from_json(text: &str) -> Result<Nfta> {
        let bad = |m: &str| Error::Invalid(format!("malformed automaton JSON: {m}"));
        let v: serde_json::Value = serde_json::from_str(text).map_err(|e| bad(&e.to_string()))?;
        let states: Vec<String> = v["states"]
            .as_array()
            .ok_or_else(|| bad("missing states"))?
            .iter()
            .map(|s| {
                s.as_str()
                    .map(str::to_string)
                    .ok_or_else(|| bad("state name"))
            })
            .collect::<Result<_>>()?;
        let index: HashMap<&str, usize> = states
            .iter()
            .enumerate()
            .map(|(i, s)| (s.as_str(), i))
            .collect();
        let lookup = |s: &serde_json::Value| -> Result<usize> {
            s.as_str()
                .and_then(|s| index.get(s).copied())
                .ok_or_else(|| bad("unknown state"))
        };
        let initial = lookup(&v["initial"])?;
        let mut transitions = Vec::new();
        for t in v["transitions"]
            .as_array()
            .ok_or_else(|| bad("missing transitions"))?
        {
            let symbol = Symbol::parse(t["symbol"].as_str().ok_or_else(|| bad("symbol"))?)?;
            let children = t["to"]
                .as_array()
                .ok_or_else(|| bad("missing targets"))?
                .iter()
                .map(&lookup)
                .collect::<Result<_>>()?;
            transitions.push(Transition {
                state: lookup(&t["from"])?,
                symbol,
                children,
            });
        }
        Nfta::new(states, initial, transitions)
    }

    /// DOT rendering: states as circles, transitions as labeled boxes.
    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph nfta {\n  rankdir=TB;\n");
        for (i, s) in self.states.iter().enumerate() {
            let shape = if i == self.initial {
                "doublecircle"
            } else {
                "circle"
            };
            let _ = writeln!(out, "  q{i} [shape={shape}, label=\"{s}\"];");
        }
        for (k, t) in self.transitions.iter().enumerate() {
            let _ = writeln!(
                out,
                "  t{k} [shape=box, label=\"{}\"];\n  q{} -> t{k};",
                escape(&t.symbol.to_string()),
                t.state
            );
            for (j, c) in t.children.iter().enumerate() {
                let _ = writeln!(out, "  t{k} -> q{c} [label=\"{}\"];", j + 1);
            }
        }
        out.push_str("}\n");
        out
    }
}

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

impl LabeledTree {
    pub fn to_json_value(&self) -> serde_json::Value {
        json!({
            "label": self.label.to_string(),
            "children": self.children.iter().map(LabeledTree::to_json_value).collect::<Vec<_>>(),
        })
    }

    pub fn from_json_value(v: &serde_json::Value) -> Result<LabeledTree> {
        let label = v["label"]
            .as_str()
            .ok_or_else(|| Error::Invalid("tree node without label".to_string()))?;
        let children = match v.get("children") {
            None => Vec::new(),
            Some(c) => c
                .as_array()
                .ok_or_else(|| Error::Invalid("tree children must be a list".to_string()))?
                .iter()
                .map(LabeledTree::from_json_value)
                .collect::<Result<_>>()?,
        };
        Ok(LabeledTree {
            label: Symbol::parse(label)?,
            children,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_json_value()).expect("JSON values serialize")
    }

    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph tree {\n");
        let mut next = 0;
        self.dot_into(&mut out, &mut next);
        out.push_str("}\n");
        out
    }

    fn dot_into(&self, out: &mut String, next: &mut usize) -> usize {
        let me = *next;
        *next += 1;
        let _ = writeln!(
            out,
            "  t{me} [label=\"{}\"];",
            escape(&self.label.to_string())
        );
        for c in &self.children {
            let child = c.dot_into(out, next);
            let _ = writeln!(out, "  t{me} -> t{child};");
        }
        me
    }
}

/// A set of NFTA states as a bitset.
type StateSet = Vec<u64>;

fn set_contains(set: &StateSet, s: usize) -> bool {
    set[s / 64] >> (s % 64) & 1 == 1
}

/// Bottom-up deterministic automaton obtained by subset construction. Each
/// state is the set of NFTA states from which the evaluated subtree is
/// accepted; trees evaluating to the empty set are left undefined.
#[derive(Debug, Clone)]
pub struct BottomUpDfta {
    sets: Vec<StateSet>,
    accepting: Vec<bool>,
    delta: HashMap<(Symbol, Vec<usize>), usize>,
}

/// Subset construction over the reversed transition relation, exploring
/// only state sets reachable bottom-up.
pub fn determinize_bottom_up(a: &Nfta, limit: usize) -> Result<BottomUpDfta> {
    let words = a.states.len().div_ceil(64).max(1);
    let mut grouped: BTreeMap<(Symbol, usize), Vec<&Transition>> = BTreeMap::new();
    for t in &a.transitions {
        grouped
            .entry((t.symbol.clone(), t.children.len()))
            .or_default()
            .push(t);
    }
    let mut sets: Vec<StateSet> = Vec::new();
    let mut index: HashMap<StateSet, usize> = HashMap::new();
    let mut delta: HashMap<(Symbol, Vec<usize>), usize> = HashMap::new();

    let mut intern = |set: StateSet, sets: &mut Vec<StateSet>| -> Result<usize> {
        if let Some(&i) = index.get(&set) {
            return Ok(i);
        }
        if sets.len() >= limit {
            return Err(Error::guard("determinized states", limit, sets.len() + 1));
        }
        index.insert(set.clone(), sets.len());
        sets.push(set);
        Ok(sets.len() - 1)
    };
    let target = |live: &[&Transition]| -> StateSet {
        let mut set = vec![0u64; words];
        for t in live {
            set[t.state / 64] |= 1 << (t.state % 64);
        }
        set
    };

    for ((symbol, arity), ts) in &grouped {
        if *arity == 0 {
            let id = intern(target(ts), &mut sets)?;
            delta.insert((symbol.clone(), Vec::new()), id);
        }
    }
    // Semi-naive closure: when state `i` is processed, visit exactly the
    // tuples over states `0..=i` that contain `i`.
    let mut i = 0;
    while i < sets.len() {
        for ((symbol, arity), ts) in &grouped {
            for first in 0..*arity {
                let mut found = Vec::new();
                tuples_with(
                    &sets,
                    i,
                    first,
                    *arity,
                    ts.clone(),
                    &mut Vec::new(),
                    &mut found,
                );
                for (tuple, live) in found {
                    let id = intern(target(&live), &mut sets)?;
                    delta.insert((symbol.clone(), tuple), id);
                }
            }
        }
        i += 1;
    }
    let accepting = sets.iter().map(|s| set_contains(s, a.initial)).collect();
    Ok(BottomUpDfta {
        sets,
        accepting,
        delta,
    })
}

/// Tuples whose first occurrence of state `i` is at position `first`, with
/// earlier positions below `i` and later ones at most `i`; only tuples that
/// keep at least one transition alive are reported.
fn tuples_with<'a>(
    sets: &[StateSet],
    i: usize,
    first: usize,
    arity: usize,
    live: Vec<&'a Transition>,
    tuple: &mut Vec<usize>,
    out: &mut Vec<(Vec<usize>, Vec<&'a Transition>)>,
) {
    let pos = tuple.len();
    if pos == arity {
        out.push((tuple.clone(), live));
        return;
    }
    let range = if pos < first {
        0..i
    } else if pos == first {
        i..i + 1
    } else {
        0..i + 1
    };
    for q in range {
        let next: Vec<&Transition> = live
            .iter()
            .copied()
            .filter(|t| set_contains(&sets[q], t.children[pos]))
            .collect();
        if next.is_empty() {
            continue;
        }
        tuple.push(q);
        tuples_with(sets, i, first, arity, next, tuple, out);
        tuple.pop();
    }
}

impl BottomUpDfta {
    pub fn len(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }

    pub fn transition_count(&self) -> usize {
        self.delta.len()
    }

    /// The unique state a tree evaluates to, if defined.
    pub fn evaluate(&self, tree: &LabeledTree) -> Option<usize> {
        let kids = tree
            .children
            .iter()
            .map(|c| self.evaluate(c))
            .collect::<Option<Vec<usize>>>()?;
        self.delta.get(&(tree.label.clone(), kids)).copied()
    }

    pub fn accepts(&self, tree: &LabeledTree) -> bool {
        self.evaluate(tree).is_some_and(|q| self.accepting[q])
    }

    /// Number of accepted trees of each size `0..=max_size`.
    pub fn count_by_size(&self, max_size: usize) -> Vec<BigUint> {
        let n_states = self.sets.len();
        let mut cnt: Vec<Vec<BigUint>> = vec![vec![BigUint::zero(); n_states]; max_size + 1];
        let mut totals = vec![BigUint::zero(); max_size + 1];
        for n in 1..=max_size {
            let mut level = vec![BigUint::zero(); n_states];
            for ((_, kids), &q) in &self.delta {
                let ways = compositions(&cnt, kids, n - 1);
                if !ways.is_zero() {
                    level[q] += ways;
                }
            }
            totals[n] = level
                .iter()
                .zip(&self.accepting)
                .filter(|(_, acc)| **acc)
                .map(|(c, _)| c)
                .sum();
            cnt[n] = level;
        }
        totals
    }
}

/// Σ over splittings of `budget` into positive child sizes of the product
/// of per-child counts.
fn compositions(cnt: &[Vec<BigUint>], kids: &[usize], budget: usize) -> BigUint {
    match kids {
        [] => {
            if budget == 0 {
                BigUint::from(1u32)
            } else {
                BigUint::zero()
            }
        }
        [q] => cnt
            .get(budget)
            .map_or_else(BigUint::zero, |row| row[*q].clone()),
        [q, rest @ ..] => {
            let mut total = BigUint::zero();
            for size in 1..=budget.saturating_sub(rest.len()) {
                let here = &cnt[size][*q];
                if here.is_zero() {
                    continue;
                }
                let tail = compositions(cnt, rest, budget - size);
                if !tail.is_zero() {
                    total += here * tail;
                }
            }
            total
        }
    }
}

/// Number of distinct accepted trees of each size `0..=max_size`.
pub fn count_by_size(a: &Nfta, max_size: usize, limit: usize) -> Result<Vec<BigUint>> {
    Ok(determinize_bottom_up(a, limit)?.count_by_size(max_size))
}

/// Accepted trees of size at most `max_size`, by memoized top-down
/// expansion of the NFTA (independent of the subset construction).
pub fn enumerate_accepted(
    a: &Nfta,
    max_size: usize,
    limit: usize,
) -> Result<BTreeSet<LabeledTree>> {
    let mut by_state: Vec<Vec<&Transition>> = vec![Vec::new(); a.states.len()];
    for t in &a.transitions {
        by_state[t.state].push(t);
    }
    let mut memo: HashMap<(usize, usize), Rc<BTreeSet<LabeledTree>>> = HashMap::new();
    let mut stored = 0usize;
    let mut out = BTreeSet::new();
    for size in 1..=max_size {
        let trees = trees_from(&by_state, a.initial, size, &mut memo, &mut stored, limit)?;
        out.extend(trees.iter().cloned());
    }
    Ok(out)
}

fn trees_from(
    by_state: &[Vec<&Transition>],
    state: usize,
    size: usize,
    memo: &mut HashMap<(usize, usize), Rc<BTreeSet<LabeledTree>>>,
    stored: &mut usize,
    limit: usize,
) -> Result<Rc<BTreeSet<LabeledTree>>> {
    if let Some(t) = memo.get(&(state, size)) {
        return Ok(t.clone());
    }
    let mut result = BTreeSet::new();
    for t in &by_state[state] {
        let k = t.children.len();
        if (k == 0) != (size == 1) || size < 1 + k {
            continue;
        }
        let mut forests: Vec<(Vec<LabeledTree>, usize)> = vec![(Vec::new(), size - 1)];
        for (pos, &child) in t.children.iter().enumerate() {
            let later = k - pos - 1;
            let mut next = Vec::new();
            for (forest, left) in &forests {
                let sizes = if later == 0 {
                    *left..=*left
                } else {
                    1..=left - later
                };
                for s in sizes {
                    let subs = trees_from(by_state, child, s, memo, stored, limit)?;
                    for sub in subs.iter() {
                        let mut f = forest.clone();
                        f.push(sub.clone());
                        next.push((f, left - s));
                    }
                }
            }
            forests = next;
            if forests.len() > limit {
                return Err(Error::guard("enumerated trees", limit, forests.len()));
            }
        }
        for (children, _) in forests {
            result.insert(LabeledTree {
                label: t.symbol.clone(),
                children,
            });
        }
    }
    *stored += result.len();
    if *stored > limit {
        return Err(Error::guard("enumerated trees", limit, *stored));
    }
    let result = Rc::new(result);
    memo.insert((state, size), result.clone());
    Ok(result)
}

/// Interface of a counter for the trees of one size accepted by an NFTA.
/// Exact counters ignore the accuracy parameters.
pub trait SizeCounter {
    fn count(&self, a: &Nfta, size: usize, eps: f64, delta: f64) -> Result<BigUint>;

    /// Trees of size at most `max_size`; each size is counted with failure
    /// probability `delta / (2 (max_size + 1))`.
    fn count_up_to(&self, a: &Nfta, max_size: usize, eps: f64, delta: f64) -> Result<BigUint> {
        let per = delta / (2.0 * (max_size as f64 + 1.0));
        let mut total = BigUint::zero();
        for size in 0..=max_size {
            total += self.count(a, size, eps, per)?;
        }
        Ok(total)
    }
}

/// Exact counting by bottom-up subset construction.
#[derive(Debug, Clone, Copy)]
pub struct ExactCounter {
    pub limit: usize,
}

impl Default for ExactCounter {
    fn default() -> Self {
        ExactCounter { limit: 1_000_000 }
    }
}

impl SizeCounter for ExactCounter {
    fn count(&self, a: &Nfta, size: usize, _eps: f64, _delta: f64) -> Result<BigUint> {
        Ok(count_by_size(a, size, self.limit)?.swap_remove(size))
    }

    fn count_up_to(&self, a: &Nfta, max_size: usize, _eps: f64, _delta: f64) -> Result<BigUint> {
        Ok(count_by_size(a, max_size, self.limit)?.into_iter().sum())
    }
}
