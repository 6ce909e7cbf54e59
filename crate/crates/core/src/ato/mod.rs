//! Alternating procedures with output.
//!
//! A [`BranchingProgram`] describes configurations and their successors;
//! [`build_dag`] explores them into a [`ComputationDag`], merging identical
//! configurations. Labeling configurations emit tree nodes, and the valid
//! outputs of a program are the label trees of its accepting computations.

mod programs;

use std::collections::{BTreeSet, HashMap};
use std::fmt::{self, Debug, Write as _};
use std::hash::Hash;

use num_bigint::BigUint;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::Fact;

pub use programs::{
    ghwcq_program, rep_program, seq_program, ur_program, GhwcqProgram, GhwcqState, OpsState,
    RepMode, RepProgram, RepState, SeqProgram, SeqState, UrProgram,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Quantifier {
    Existential,
    Universal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Terminal {
    Accept,
    Reject,
}

/// Output alphabet shared by the shipped programs.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Symbol {
    /// The empty label of the initial configuration.
    Root,
    /// A kept fact.
    Fact(Fact),
    /// No fact kept (`⊥`).
    Bottom,
    /// An operation template `(−size, id)`.
    Op { size: u8, id: u64 },
    /// Final block state with an interleaving identifier `(α, p)`.
    Interleave { alpha: Option<Fact>, id: BigUint },
    /// One bit of an interleaving identifier, most significant first.
    InterleaveBit { alpha: Option<Fact>, bit: bool },
    /// An answer-variable assignment `x = c`.
    Answer { var: String, value: String },
    /// Marks a decomposition node that assigns no answer variable.
    NodeMarker(usize),
}

fn alpha_text(alpha: &Option<Fact>) -> String {
    match alpha {
        Some(f) => f.to_string(),
        None => "⊥".to_string(),
    }
}

impl fmt::Display for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Symbol::Root => write!(f, "ε"),
            Symbol::Fact(x) => write!(f, "{x}"),
            Symbol::Bottom => write!(f, "⊥"),
            Symbol::Op { size, id } => write!(f, "(-{size},{id})"),
            Symbol::Interleave { alpha, id } => write!(f, "({},{id})", alpha_text(alpha)),
            Symbol::InterleaveBit { alpha, bit } => {
                write!(f, "({},b{})", alpha_text(alpha), u8::from(*bit))
            }
            Symbol::Answer { var, value } => write!(f, "{var}={value}"),
            Symbol::NodeMarker(v) => write!(f, "#{v}"),
        }
    }
}

impl Symbol {
    /// Inverse of the `Display` rendering.
    pub fn parse(text: &str) -> Result<Symbol> {
        let bad = || Error::Invalid(format!("unrecognised symbol {text:?}"));
        let alpha = |a: &str| -> Result<Option<Fact>> {
            if a == "⊥" {
                Ok(None)
            } else {
                Ok(Some(Fact::parse(a)?))
            }
        };
        match text {
            "ε" => return Ok(Symbol::Root),
            "⊥" => return Ok(Symbol::Bottom),
            _ => {}
        }
        if let Some(v) = text.strip_prefix('#') {
            return v.parse().map(Symbol::NodeMarker).map_err(|_| bad());
        }
        if let Some(inner) = text.strip_prefix("(-").and_then(|t| t.strip_suffix(')')) {
            let (size, id) = inner.split_once(',').ok_or_else(bad)?;
            return Ok(Symbol::Op {
                size: size.parse().map_err(|_| bad())?,
                id: id.parse().map_err(|_| bad())?,
            });
        }
        if let Some(inner) = text.strip_prefix('(').and_then(|t| t.strip_suffix(')')) {
            let (a, id) = inner.rsplit_once(',').ok_or_else(bad)?;
            let alpha = alpha(a)?;
            return match id {
                "b0" | "b1" => Ok(Symbol::InterleaveBit {
                    alpha,
                    bit: id == "b1",
                }),
                _ => Ok(Symbol::Interleave {
                    alpha,
                    id: id.parse().map_err(|_| bad())?,
                }),
            };
        }
        if text.ends_with(')') {
            return Ok(Symbol::Fact(Fact::parse(text)?));
        }
        let (var, value) = text.split_once('=').ok_or_else(bad)?;
        Ok(Symbol::Answer {
            var: var.to_string(),
            value: value.to_string(),
        })
    }
}

/// A configuration: program state plus its branching attributes.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Configuration<S> {
    pub state: S,
    pub quantifier: Quantifier,
    pub label: Option<Symbol>,
    pub terminal: Option<Terminal>,
}

impl<S> Configuration<S> {
    pub fn existential(state: S) -> Self {
        Configuration {
            state,
            quantifier: Quantifier::Existential,
            label: None,
            terminal: None,
        }
    }

    pub fn universal(state: S) -> Self {
        Configuration {
            state,
            quantifier: Quantifier::Universal,
            label: None,
            terminal: None,
        }
    }

    pub fn labeled(state: S, label: Symbol) -> Self {
        Configuration {
            state,
            quantifier: Quantifier::Existential,
            label: Some(label),
            terminal: None,
        }
    }

    pub fn accept(state: S) -> Self {
        Configuration {
            state,
            quantifier: Quantifier::Existential,
            label: None,
            terminal: Some(Terminal::Accept),
        }
    }

    pub fn reject(state: S) -> Self {
        Configuration {
            state,
            quantifier: Quantifier::Existential,
            label: None,
            terminal: Some(Terminal::Reject),
        }
    }

    pub fn is_labeling(&self) -> bool {
        self.label.is_some()
    }
}

/// An alternating procedure given by its initial configuration and a
/// deterministic successor function.
pub trait BranchingProgram {
    type State: Clone + Eq + Hash + Debug;

    fn initial(&self) -> Configuration<Self::State>;

    /// Ordered successors; terminal configurations have none.
    fn expand(&self, c: &Configuration<Self::State>) -> Vec<Configuration<Self::State>>;
}

/// A node of a computation DAG with the program state erased.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DagNode {
    pub quantifier: Quantifier,
    pub label: Option<Symbol>,
    pub terminal: Option<Terminal>,
    pub children: Vec<usize>,
    /// Content hash of the source configuration (labeling nodes only).
    pub id: Option<String>,
}

/// Reachable configurations of a program with shared sub-configurations
/// merged; node 0 is the initial configuration.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComputationDag {
    nodes: Vec<DagNode>,
}

impl ComputationDag {
    pub fn root(&self) -> usize {
        0
    }

    pub fn nodes(&self) -> &[DagNode] {
        &self.nodes
    }

    pub fn node(&self, i: usize) -> &DagNode {
        &self.nodes[i]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Builds a DAG directly from nodes (used for hand-made programs).
    pub fn from_nodes(nodes: Vec<DagNode>) -> Result<Self> {
        let dag = ComputationDag { nodes };
        dag.check_structure()?;
        Ok(dag)
    }

    fn check_structure(&self) -> Result<()> {
        if self.nodes.is_empty() {
            return Err(Error::Invalid("empty computation DAG".to_string()));
        }
        for (i, n) in self.nodes.iter().enumerate() {
            if n.terminal.is_some() && !n.children.is_empty() {
                return Err(Error::Invalid(format!("terminal node {i} has successors")));
            }
            if n.terminal.is_none() && n.children.is_empty() {
                return Err(Error::Invalid(format!("non-terminal node {i} is a leaf")));
            }
            if let Some(&c) = n
                .children
                .iter()
                .find(|&&c| c >= self.nodes.len() || c == 0)
            {
                return Err(Error::Invalid(format!(
                    "node {i} has invalid successor {c}"
                )));
            }
        }
        if topological_order(self).is_none() {
            return Err(Error::Invalid("computation graph has a cycle".to_string()));
        }
        Ok(())
    }

    /// Node indices such that every node precedes its successors.
    pub fn topological_order(&self) -> Vec<usize> {
        topological_order(self).expect("computation DAGs are acyclic")
    }

    /// DOT rendering: boxes for labeling nodes, diamonds for universal ones.
    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph computation {\n");
        for (i, n) in self.nodes.iter().enumerate() {
            let (shape, text) = match (&n.label, n.terminal, n.quantifier) {
                (Some(l), _, _) => ("box", l.to_string()),
                (None, Some(Terminal::Accept), _) => ("doublecircle", "accept".to_string()),
                (None, Some(Terminal::Reject), _) => ("octagon", "reject".to_string()),
                (None, None, Quantifier::Universal) => ("diamond", "∀".to_string()),
                (None, None, Quantifier::Existential) => ("ellipse", "∃".to_string()),
            };
            let _ = writeln!(
                out,
                "  n{i} [shape={shape}, label=\"{}\"];",
                text.replace('"', "\\\"")
            );
        }
        for (i, n) in self.nodes.iter().enumerate() {
            for c in &n.children {
                let _ = writeln!(out, "  n{i} -> n{c};");
            }
        }
        out.push_str("}\n");
        out
    }
}

fn topological_order(dag: &ComputationDag) -> Option<Vec<usize>> {
    let n = dag.nodes.len();
    let mut indegree = vec![0usize; n];
    for node in &dag.nodes {
        for &c in &node.children {
            indegree[c] += 1;
        }
    }
    let mut ready: Vec<usize> = (0..n).filter(|&i| indegree[i] == 0).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(i) = ready.pop() {
        order.push(i);
        for &c in &dag.nodes[i].children {
            indegree[c] -= 1;
            if indegree[c] == 0 {
                ready.push(c);
            }
        }
    }
    (order.len() == n).then_some(order)
}

fn content_hash<S: Debug>(c: &Configuration<S>) -> String {
    let digest = Sha256::digest(format!("{c:?}").as_bytes());
    digest
        .iter()
        .take(8)
        .fold(String::with_capacity(16), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
}

/// Explores every configuration reachable from the initial one.
pub fn build_dag<P: BranchingProgram>(program: &P, max_nodes: usize) -> Result<ComputationDag> {
    let mut index: HashMap<Configuration<P::State>, usize> = HashMap::new();
    let mut configs: Vec<Configuration<P::State>> = Vec::new();
    let mut nodes: Vec<DagNode> = Vec::new();
    let mut on_stack: Vec<bool> = Vec::new();

    let mut intern = |c: Configuration<P::State>,
                      configs: &mut Vec<Configuration<P::State>>,
                      nodes: &mut Vec<DagNode>,
                      on_stack: &mut Vec<bool>|
     -> Result<(usize, bool)> {
        if let Some(&i) = index.get(&c) {
            return Ok((i, false));
        }
        let i = nodes.len();
        if i >= max_nodes {
            return Err(Error::guard("computation DAG nodes", max_nodes, i + 1));
        }
        nodes.push(DagNode {
            quantifier: c.quantifier,
            label: c.label.clone(),
            terminal: c.terminal,
            children: Vec::new(),
            id: c.label.as_ref().map(|_| content_hash(&c)),
        });
        on_stack.push(false);
        index.insert(c.clone(), i);
        configs.push(c);
        Ok((i, true))
    };

    let (root, _) = intern(program.initial(), &mut configs, &mut nodes, &mut on_stack)?;
    // Depth-first expansion; each frame holds a node and its pending successors.
    type Frame<S> = (usize, Vec<Configuration<S>>, usize);
    let mut stack: Vec<Frame<P::State>> = Vec::new();
    let succ = program.expand(&configs[root]);
    on_stack[root] = true;
    stack.push((root, succ, 0));
    while let Some((node, succ, pos)) = stack.last_mut() {
        if *pos == succ.len() {
            on_stack[*node] = false;
            stack.pop();
            continue;
        }
        let child = succ[*pos].clone();
        *pos += 1;
        let node = *node;
        let (ci, fresh) = intern(child, &mut configs, &mut nodes, &mut on_stack)?;
        if on_stack[ci] {
            return Err(Error::Internal(
                "program revisits an active configuration".to_string(),
            ));
        }
        nodes[node].children.push(ci);
        if fresh {
            let c = &configs[ci];
            if c.terminal.is_some() {
                continue;
            }
            let next = program.expand(c);
            if next.is_empty() {
                return Err(Error::Internal(format!(
                    "non-terminal configuration without successors: {c:?}"
                )));
            }
            on_stack[ci] = true;
            stack.push((ci, next, 0));
        }
    }
    Ok(ComputationDag { nodes })
}

/// A node-labeled ordered tree emitted by an accepting computation.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct OutputTree {
    pub label: Symbol,
    pub children: Vec<OutputTree>,
}

impl OutputTree {
    pub fn size(&self) -> usize {
        1 + self.children.iter().map(OutputTree::size).sum::<usize>()
    }
}

type Forests = BTreeSet<Vec<OutputTree>>;

/// All distinct outputs of accepting computations.
pub fn valid_outputs(dag: &ComputationDag, max_outputs: usize) -> Result<BTreeSet<OutputTree>> {
    let mut memo: Vec<Option<Forests>> = vec![None; dag.len()];
    for &i in dag.topological_order().iter().rev() {
        let node = &dag.nodes[i];
        let body: Forests = match node.terminal {
            Some(Terminal::Accept) => BTreeSet::from([Vec::new()]),
            Some(Terminal::Reject) => BTreeSet::new(),
            None => {
                let parts = node
                    .children
                    .iter()
                    .map(|&c| memo[c].as_ref().expect("successor processed"));
                match node.quantifier {
                    Quantifier::Existential => parts.flat_map(|p| p.iter().cloned()).collect(),
                    Quantifier::Universal => {
                        let mut acc: Forests = BTreeSet::from([Vec::new()]);
                        for p in parts {
                            let mut next = BTreeSet::new();
                            for a in &acc {
                                for b in p {
                                    let mut f = a.clone();
                                    f.extend(b.iter().cloned());
                                    next.insert(f);
                                }
                            }
                            acc = next;
                            if acc.len() > max_outputs {
                                return Err(Error::guard("output forests", max_outputs, acc.len()));
                            }
                        }
                        acc
                    }
                }
            }
        };
        if body.len() > max_outputs {
            return Err(Error::guard("output forests", max_outputs, body.len()));
        }
        let result = match &node.label {
            Some(label) => body
                .into_iter()
                .map(|children| {
                    vec![OutputTree {
                        label: label.clone(),
                        children,
                    }]
                })
                .collect(),
            None => body,
        };
        memo[i] = Some(result);
    }
    let root = memo[dag.root()].take().expect("root processed");
    let mut out = BTreeSet::new();
    for forest in root {
        if forest.len() != 1 {
            return Err(Error::Internal(
                "root output is not a single tree".to_string(),
            ));
        }
        out.extend(forest);
    }
    Ok(out)
}

/// Number of distinct valid outputs.
pub fn span(dag: &ComputationDag, max_outputs: usize) -> Result<usize> {
    Ok(valid_outputs(dag, max_outputs)?.len())
}

/// Outcome of [`check_well_behaved`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WellBehavedReport {
    /// Largest number of universal non-labeling configurations on a
    /// labeled-free path.
    pub max_universal: usize,
    /// Nodes starting a labeled-free path that exceeds the bound.
    pub violations: Vec<usize>,
    pub dag_nodes: usize,
    pub size_limit: Option<usize>,
}

impl WellBehavedReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty() && self.size_limit.is_none_or(|l| self.dag_nodes <= l)
    }
}

/// Checks that every labeled-free path carries at most `universal_bound`
/// universal non-labeling configurations, and optionally that the DAG has
/// at most `size_limit` nodes.
pub fn check_well_behaved(
    dag: &ComputationDag,
    universal_bound: usize,
    size_limit: Option<usize>,
) -> WellBehavedReport {
    let mut longest = vec![0usize; dag.len()];
    for &i in dag.topological_order().iter().rev() {
        let node = &dag.nodes[i];
        if node.label.is_some() {
            continue;
        }
        let own = usize::from(node.terminal.is_none() && node.quantifier == Quantifier::Universal);
        let below = node
            .children
            .iter()
            .filter(|&&c| dag.nodes[c].label.is_none())
            .map(|&c| longest[c])
            .max()
            .unwrap_or(0);
        longest[i] = own + below;
    }
    let mut violations = BTreeSet::new();
    let mut max_universal = 0;
    for node in &dag.nodes {
        if node.label.is_none() {
            continue;
        }
        for &c in &node.children {
            if dag.nodes[c].label.is_none() {
                max_universal = max_universal.max(longest[c]);
                if longest[c] > universal_bound {
                    violations.insert(c);
                }
            }
        }
    }
    WellBehavedReport {
        max_universal,
        violations: violations.into_iter().collect(),
        dag_nodes: dag.len(),
        size_limit,
    }
}

/// Constant `c` of the polynomial size guard `c · size³` on DAG nodes.
pub const DAG_GUARD_CONSTANT: usize = 64;

/// The polynomial size guard for an instance of the given size.
pub fn cubic_guard(instance_size: usize) -> usize {
    DAG_GUARD_CONSTANT.saturating_mul(instance_size.max(1).pow(3))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// A toy program: root emits ε, then a universal split into two
    /// existential choices between labels `a` and `b`.
    struct Toy {
        double_universal: bool,
    }

    #[derive(Debug, Clone, PartialEq, Eq, Hash)]
    enum ToyState {
        Start,
        Split(u8),
        Pick(u8),
        Leaf(u8, bool),
        Done,
    }

    impl BranchingProgram for Toy {
        type State = ToyState;

        fn initial(&self) -> Configuration<ToyState> {
            Configuration::labeled(ToyState::Start, Symbol::Root)
        }

        fn expand(&self, c: &Configuration<ToyState>) -> Vec<Configuration<ToyState>> {
            match &c.state {
                ToyState::Start => vec![Configuration::universal(ToyState::Split(0))],
                ToyState::Split(0) if self.double_universal => {
                    vec![Configuration::universal(ToyState::Split(1))]
                }
                ToyState::Split(_) => vec![
                    Configuration::existential(ToyState::Pick(0)),
                    Configuration::existential(ToyState::Pick(1)),
                ],
                ToyState::Pick(i) => vec![
                    Configuration::labeled(
                        ToyState::Leaf(*i, false),
                        Symbol::Answer {
                            var: format!("x{i}"),
                            value: "a".into(),
                        },
                    ),
                    Configuration::labeled(
                        ToyState::Leaf(*i, true),
                        Symbol::Answer {
                            var: format!("x{i}"),
                            value: "b".into(),
                        },
                    ),
                ],
                ToyState::Leaf(..) => vec![Configuration::accept(ToyState::Done)],
                ToyState::Done => vec![],
            }
        }
    }

    #[test]
    fn toy_program_outputs() {
        let dag = build_dag(
            &Toy {
                double_universal: false,
            },
            100,
        )
        .unwrap();
        assert_eq!(span(&dag, 100).unwrap(), 4);
        let report = check_well_behaved(&dag, 1, None);
        assert!(report.passed());
        assert_eq!(report.max_universal, 1);
    }

    #[test]
    fn two_consecutive_universals_violate_bound_one() {
        let dag = build_dag(
            &Toy {
                double_universal: true,
            },
            100,
        )
        .unwrap();
        let report = check_well_behaved(&dag, 1, None);
        assert!(!report.passed());
        assert_eq!(report.max_universal, 2);
        assert!(check_well_behaved(&dag, 2, None).passed());
    }

    #[test]
    fn node_guard_trips() {
        let err = build_dag(
            &Toy {
                double_universal: false,
            },
            3,
        )
        .unwrap_err();
        assert!(err.is_guard());
    }

    #[test]
    fn all_rejecting_program_has_empty_span() {
        let dag = ComputationDag::from_nodes(vec![
            DagNode {
                quantifier: Quantifier::Existential,
                label: Some(Symbol::Root),
                terminal: None,
                children: vec![1],
                id: Some("r".into()),
            },
            DagNode {
                quantifier: Quantifier::Existential,
                label: None,
                terminal: Some(Terminal::Reject),
                children: vec![],
                id: None,
            },
        ])
        .unwrap();
        assert_eq!(span(&dag, 10).unwrap(), 0);
    }

    #[test]
    fn symbols_render_distinctly() {
        let f = Fact::new("R", ["a"]);
        let syms = [
            Symbol::Root,
            Symbol::Fact(f.clone()),
            Symbol::Bottom,
            Symbol::Op { size: 1, id: 1 },
            Symbol::Interleave {
                alpha: Some(f.clone()),
                id: BigUint::from(1u32),
            },
            Symbol::Interleave {
                alpha: None,
                id: BigUint::from(1u32),
            },
            Symbol::InterleaveBit {
                alpha: Some(f),
                bit: true,
            },
            Symbol::Answer {
                var: "x".into(),
                value: "a".into(),
            },
            Symbol::NodeMarker(0),
        ];
        let texts: BTreeSet<String> = syms.iter().map(|s| s.to_string()).collect();
        assert_eq!(texts.len(), syms.len());
        for s in &syms {
            assert_eq!(&Symbol::parse(&s.to_string()).unwrap(), s);
        }
    }
}
