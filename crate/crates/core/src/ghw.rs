//! Generalized hypertree decompositions: validation, the depth-major node
//! order, covering vertices, completion, the normal-form transformation and
//! GYO join trees for acyclic queries.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cqeval::{is_self_join_free, Atom, ConjunctiveQuery};
use crate::model::{Binding, Database, Fact, Term};

/// Constant used by the normal form for its auxiliary facts. It must not
/// occur in the input database or query.
pub const SENTINEL: &str = "_nf";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GhdError {
    #[error("malformed decomposition: {0}")]
    Malformed(String),
    #[error("node {node}: atom index {index} out of range")]
    BadAtomIndex { node: usize, index: usize },
    #[error("node {node}: variable {var} does not occur in the query")]
    UnknownVariable { node: usize, var: String },
    #[error("node {node}: variable {var} is not covered by the atoms of lambda")]
    NotGuarded { node: usize, var: String },
    #[error("variable {var} violates connectedness")]
    Disconnected { var: String },
    #[error("atom {atom} has no node whose chi contains its variables")]
    Uncovered { atom: usize },
    #[error("atom {atom} has no covering vertex")]
    NoCoveringVertex { atom: usize },
    #[error("query is not acyclic")]
    NotAcyclic,
    #[error("query is not self-join-free")]
    NotSelfJoinFree,
    #[error("reserved constant {0} occurs in the input")]
    ReservedConstant(String),
    #[error("not in normal form: {0}")]
    NotNormalForm(String),
}

/// One node of a decomposition.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct GhdNode {
    pub chi: BTreeSet<String>,
    pub lambda: BTreeSet<usize>,
    parent: Option<usize>,
    children: Vec<usize>,
}

impl GhdNode {
    pub fn parent(&self) -> Option<usize> {
        self.parent
    }

    pub fn children(&self) -> &[usize] {
        &self.children
    }

    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }
}

/// A rooted decomposition `(T, χ, λ)`; `λ` stores atom indices of a query.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Ghd {
    nodes: Vec<GhdNode>,
    root: usize,
    covers_answer_vars: bool,
}

impl Ghd {
    /// A decomposition consisting only of a root node.
    pub fn new<C, L>(chi: C, lambda: L) -> Self
    where
        C: IntoIterator,
        C::Item: Into<String>,
        L: IntoIterator<Item = usize>,
    {
        Ghd {
            nodes: vec![GhdNode {
                chi: chi.into_iter().map(Into::into).collect(),
                lambda: lambda.into_iter().collect(),
                parent: None,
                children: Vec::new(),
            }],
            root: 0,
            covers_answer_vars: false,
        }
    }

    /// Sets whether coverage must include answer variables.
    pub fn with_answer_coverage(mut self, covers: bool) -> Self {
        self.covers_answer_vars = covers;
        self
    }

    /// Appends a child as the last child of `parent`; returns its index.
    pub fn add_child<C, L>(&mut self, parent: usize, chi: C, lambda: L) -> usize
    where
        C: IntoIterator,
        C::Item: Into<String>,
        L: IntoIterator<Item = usize>,
    {
        let id = self.nodes.len();
        self.nodes.push(GhdNode {
            chi: chi.into_iter().map(Into::into).collect(),
            lambda: lambda.into_iter().collect(),
            parent: Some(parent),
            children: Vec::new(),
        });
        self.nodes[parent].children.push(id);
        id
    }

    /// The single-node decomposition with every atom in `λ`.
    pub fn single_node(q: &ConjunctiveQuery, covers_answer_vars: bool) -> Self {
        let chi: Vec<String> = q
            .variables()
            .into_iter()
            .filter(|v| covers_answer_vars || !q.is_answer_var(v))
            .collect();
        Ghd::new(chi, 0..q.atoms().len()).with_answer_coverage(covers_answer_vars)
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn node(&self, v: usize) -> &GhdNode {
        &self.nodes[v]
    }

    pub fn nodes(&self) -> &[GhdNode] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn covers_answer_vars(&self) -> bool {
        self.covers_answer_vars
    }

    /// Maximum size of `λ(v)`.
    pub fn width(&self) -> usize {
        self.nodes.iter().map(|n| n.lambda.len()).max().unwrap_or(0)
    }

    pub fn depth(&self, mut v: usize) -> usize {
        let mut d = 0;
        while let Some(p) = self.nodes[v].parent {
            v = p;
            d += 1;
        }
        d
    }

    /// Child positions on the path from the root to `v`.
    fn address(&self, mut v: usize) -> Vec<usize> {
        let mut path = Vec::new();
        while let Some(p) = self.nodes[v].parent {
            let pos = self.nodes[p]
                .children
                .iter()
                .position(|&c| c == v)
                .expect("child registered with parent");
            path.push(pos);
            v = p;
        }
        path.reverse();
        path
    }

    /// Serializes to the canonical JSON format.
    pub fn to_json(&self) -> String {
        let file = GhdFile {
            covers_answer_vars: self.covers_answer_vars,
            nodes: self
                .preorder()
                .into_iter()
                .map(|v| NodeRecord {
                    id: v,
                    parent: self.nodes[v].parent,
                    chi: self.nodes[v].chi.iter().cloned().collect(),
                    lambda: self.nodes[v].lambda.iter().copied().collect(),
                })
                .collect(),
        };
        serde_json::to_string_pretty(&file).expect("decomposition serializes")
    }

    /// Parses the JSON format; sibling order is the order of appearance.
    pub fn from_json(text: &str) -> Result<Self, GhdError> {
        let file: GhdFile =
            serde_json::from_str(text).map_err(|e| GhdError::Malformed(e.to_string()))?;
        let mut index = BTreeMap::new();
        for (i, rec) in file.nodes.iter().enumerate() {
            if index.insert(rec.id, i).is_some() {
                return Err(GhdError::Malformed(format!("duplicate node id {}", rec.id)));
            }
        }
        let mut nodes: Vec<GhdNode> = file
            .nodes
            .iter()
            .map(|rec| GhdNode {
                chi: rec.chi.iter().cloned().collect(),
                lambda: rec.lambda.iter().copied().collect(),
                parent: None,
                children: Vec::new(),
            })
            .collect();
        let mut roots = Vec::new();
        for (i, rec) in file.nodes.iter().enumerate() {
            match rec.parent {
                None => roots.push(i),
                Some(pid) => {
                    let p = *index.get(&pid).ok_or_else(|| {
                        GhdError::Malformed(format!("node {} has unknown parent {pid}", rec.id))
                    })?;
                    nodes[i].parent = Some(p);
                    nodes[p].children.push(i);
                }
            }
        }
        if roots.len() != 1 {
            return Err(GhdError::Malformed(format!(
                "expected exactly one root, found {}",
                roots.len()
            )));
        }
        let ghd = Ghd {
            nodes,
            root: roots[0],
            covers_answer_vars: file.covers_answer_vars,
        };
        if ghd.preorder().len() != ghd.nodes.len() {
            return Err(GhdError::Malformed(
                "parent links contain a cycle".to_string(),
            ));
        }
        Ok(ghd.renumbered())
    }

    /// Nodes in depth-first preorder (children in sibling order).
    pub fn preorder(&self) -> Vec<usize> {
        let mut out = Vec::new();
        let mut stack = vec![self.root];
        while let Some(v) = stack.pop() {
            out.push(v);
            stack.extend(self.nodes[v].children.iter().rev());
        }
        out
    }

    /// Re-indexes nodes in preorder so that serialization is canonical.
    fn renumbered(&self) -> Ghd {
        let order = self.preorder();
        let mut new_index = vec![0; self.nodes.len()];
        for (i, &v) in order.iter().enumerate() {
            new_index[v] = i;
        }
        let nodes = order
            .iter()
            .map(|&v| {
                let n = &self.nodes[v];
                GhdNode {
                    chi: n.chi.clone(),
                    lambda: n.lambda.clone(),
                    parent: n.parent.map(|p| new_index[p]),
                    children: n.children.iter().map(|&c| new_index[c]).collect(),
                }
            })
            .collect();
        Ghd {
            nodes,
            root: 0,
            covers_answer_vars: self.covers_answer_vars,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct GhdFile {
    #[serde(default)]
    covers_answer_vars: bool,
    nodes: Vec<NodeRecord>,
}

#[derive(Serialize, Deserialize)]
struct NodeRecord {
    id: usize,
    parent: Option<usize>,
    chi: Vec<String>,
    lambda: Vec<usize>,
}

/// Result of a successful validation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidationReport {
    pub width: usize,
    pub nodes: usize,
}

/// Variables of atom `i` that a covering bag must contain.
fn required_vars(h: &Ghd, q: &ConjunctiveQuery, i: usize) -> BTreeSet<String> {
    q.atoms()[i]
        .variables()
        .filter(|v| h.covers_answer_vars || !q.is_answer_var(v))
        .map(str::to_string)
        .collect()
}

/// Checks the tree, connectedness, coverage and guardedness conditions.
pub fn validate(h: &Ghd, q: &ConjunctiveQuery) -> Result<ValidationReport, GhdError> {
    let qvars = q.variables();
    for (v, n) in h.nodes.iter().enumerate() {
        if let Some(&index) = n.lambda.iter().find(|&&i| i >= q.atoms().len()) {
            return Err(GhdError::BadAtomIndex { node: v, index });
        }
        let guard: BTreeSet<&str> = n
            .lambda
            .iter()
            .flat_map(|&i| q.atoms()[i].variables())
            .collect();
        for x in &n.chi {
            if !qvars.contains(x) {
                return Err(GhdError::UnknownVariable {
                    node: v,
                    var: x.clone(),
                });
            }
            if !guard.contains(x.as_str()) {
                return Err(GhdError::NotGuarded {
                    node: v,
                    var: x.clone(),
                });
            }
        }
    }
    for x in &qvars {
        let tops = h
            .nodes
            .iter()
            .filter(|n| n.chi.contains(x))
            .filter(|n| n.parent.is_none_or(|p| !h.nodes[p].chi.contains(x)))
            .count();
        if tops > 1 {
            return Err(GhdError::Disconnected { var: x.clone() });
        }
    }
    for i in 0..q.atoms().len() {
        let req = required_vars(h, q, i);
        if !h.nodes.iter().any(|n| req.is_subset(&n.chi)) {
            return Err(GhdError::Uncovered { atom: i });
        }
    }
    Ok(ValidationReport {
        width: h.width(),
        nodes: h.len(),
    })
}

/// Nodes sorted by `≺_T`: depth first, then lexicographically by address.
pub fn node_order(h: &Ghd) -> Vec<usize> {
    let mut keyed: Vec<(usize, Vec<usize>, usize)> = (0..h.len())
        .map(|v| (h.depth(v), h.address(v), v))
        .collect();
    keyed.sort();
    keyed.into_iter().map(|(_, _, v)| v).collect()
}

/// True iff `v` is a covering vertex for atom `i`.
pub fn is_covering_vertex(h: &Ghd, q: &ConjunctiveQuery, i: usize, v: usize) -> bool {
    h.nodes[v].lambda.contains(&i) && required_vars(h, q, i).is_subset(&h.nodes[v].chi)
}

/// The `≺_T`-least covering vertex of atom `i`.
pub fn min_covering_vertex(h: &Ghd, q: &ConjunctiveQuery, i: usize) -> Result<usize, GhdError> {
    node_order(h)
        .into_iter()
        .find(|&v| is_covering_vertex(h, q, i, v))
        .ok_or(GhdError::NoCoveringVertex { atom: i })
}

/// For each atom, its minimal covering vertex (if any).
pub fn min_covering_vertices(h: &Ghd, q: &ConjunctiveQuery) -> Vec<Option<usize>> {
    let order = node_order(h);
    (0..q.atoms().len())
        .map(|i| {
            order
                .iter()
                .copied()
                .find(|&v| is_covering_vertex(h, q, i, v))
        })
        .collect()
}

pub fn is_complete(h: &Ghd, q: &ConjunctiveQuery) -> bool {
    min_covering_vertices(h, q).iter().all(Option::is_some)
}

/// Complete, and every node is the minimal covering vertex of some atom.
pub fn is_strongly_complete(h: &Ghd, q: &ConjunctiveQuery) -> bool {
    let mins = min_covering_vertices(h, q);
    if mins.iter().any(Option::is_none) {
        return false;
    }
    let used: BTreeSet<usize> = mins.into_iter().flatten().collect();
    used.len() == h.len()
}

/// Every non-leaf node has exactly two children.
pub fn is_2_uniform(h: &Ghd) -> bool {
    h.nodes
        .iter()
        .all(|n| n.children.is_empty() || n.children.len() == 2)
}

/// Adds, for every atom without a covering vertex, a fresh child holding
/// only that atom under the first node whose bag contains its variables.
pub fn make_complete(h: &Ghd, q: &ConjunctiveQuery) -> Result<Ghd, GhdError> {
    let mut out = h.clone();
    let order = node_order(h);
    for i in 0..q.atoms().len() {
        if order.iter().any(|&v| is_covering_vertex(h, q, i, v)) {
            continue;
        }
        let req = required_vars(h, q, i);
        let host = order
            .iter()
            .copied()
            .find(|&v| req.is_subset(&h.nodes[v].chi))
            .ok_or(GhdError::Uncovered { atom: i })?;
        out.add_child(host, req, [i]);
    }
    Ok(out)
}

/// Output of the normal-form transformation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NormalForm {
    pub db: Database,
    pub query: ConjunctiveQuery,
    pub ghd: Ghd,
}

struct FreshNames {
    relations: BTreeSet<String>,
    variables: BTreeSet<String>,
}

impl FreshNames {
    fn fresh(taken: &mut BTreeSet<String>, base: String) -> String {
        let mut name = base;
        while taken.contains(&name) {
            name.push('_');
        }
        taken.insert(name.clone());
        name
    }

    fn relation(&mut self, base: String) -> String {
        Self::fresh(&mut self.relations, base)
    }

    fn variable(&mut self, base: String) -> String {
        Self::fresh(&mut self.variables, base)
    }
}

/// Transforms a complete decomposition of a self-join-free query into an
/// equivalent instance whose decomposition is strongly complete and
/// 2-uniform, with width at most one more than the input.
///
/// Each node `v` with children `u1..uh` becomes a chain `v(1)..v(h+1)` where
/// `v(i)` has children `u_i(1)` and `v(i+1)`, and `v(i)` receives a fresh
/// unary atom over a fresh variable. Every relation of the database absent
/// from the query gets an atom over fresh variables plus a companion unary
/// atom, arranged as a chain above the old root. Besides the unary
/// companion facts, each such relation receives one all-sentinel fact: it
/// forms its own singleton block, so repair and sequence counts are
/// unchanged while the new atom stays satisfiable in every repair.
pub fn normal_form(d: &Database, q: &ConjunctiveQuery, h: &Ghd) -> Result<NormalForm, GhdError> {
    if !is_self_join_free(q) {
        return Err(GhdError::NotSelfJoinFree);
    }
    if d.adom().contains(SENTINEL) || q.constants().contains(SENTINEL) {
        return Err(GhdError::ReservedConstant(SENTINEL.to_string()));
    }
    if let Some(i) = min_covering_vertices(h, q).iter().position(Option::is_none) {
        return Err(GhdError::NoCoveringVertex { atom: i });
    }
    let mut names = FreshNames {
        relations: d.schema().keys().cloned().chain(q.relations()).collect(),
        variables: q.variables(),
    };
    let mut db = d.clone();
    let mut atoms: Vec<Atom> = q.atoms().to_vec();
    let mut nodes: Vec<GhdNode> = Vec::new();

    fn push(nodes: &mut Vec<GhdNode>, chi: BTreeSet<String>, lambda: BTreeSet<usize>) -> usize {
        nodes.push(GhdNode {
            chi,
            lambda,
            parent: None,
            children: Vec::new(),
        });
        nodes.len() - 1
    }

    fn link(nodes: &mut [GhdNode], parent: usize, child: usize) {
        nodes[parent].children.push(child);
        nodes[child].parent = Some(parent);
    }

    fn add_unary(
        names: &mut FreshNames,
        label: String,
        db: &mut Database,
        atoms: &mut Vec<Atom>,
    ) -> (usize, String) {
        let rel = names.relation(label.clone());
        let var = names.variable(format!("_{}", label.to_lowercase()));
        db.insert(Fact::new(rel.clone(), [SENTINEL]))
            .expect("fresh unary relation");
        atoms.push(Atom::new(rel, vec![Term::var(var.clone())]));
        (atoms.len() - 1, var)
    }

    // Copy the tree bottom-up so each v(1) is known before its parent chain.
    let order = h.preorder();
    let mut first_copy = vec![usize::MAX; h.len()];
    for &v in order.iter().rev() {
        let src = &h.nodes[v];
        let copies: Vec<usize> = (1..=src.children.len() + 1)
            .map(|i| {
                let (atom, var) = add_unary(&mut names, format!("S{v}_{i}"), &mut db, &mut atoms);
                let mut chi = src.chi.clone();
                chi.insert(var);
                let mut lambda = src.lambda.clone();
                lambda.insert(atom);
                push(&mut nodes, chi, lambda)
            })
            .collect();
        for (i, &u) in src.children.iter().enumerate() {
            link(&mut nodes, copies[i], first_copy[u]);
            link(&mut nodes, copies[i], copies[i + 1]);
        }
        first_copy[v] = copies[0];
    }
    let mut root = first_copy[h.root];

    let query_relations = q.relations();
    let extra: Vec<(String, usize)> = d
        .schema()
        .iter()
        .filter(|(r, _)| !query_relations.contains(*r))
        .map(|(r, &a)| (r.clone(), a))
        .collect();
    let mut chain = Vec::new();
    for (rel, arity) in &extra {
        let vars: Vec<String> = (0..*arity)
            .map(|j| names.variable(format!("_z_{}_{j}", rel.to_lowercase())))
            .collect();
        atoms.push(Atom::new(
            rel.clone(),
            vars.iter().map(|v| Term::var(v.clone())).collect(),
        ));
        let main_atom = atoms.len() - 1;
        db.insert(Fact::new(rel.clone(), vec![SENTINEL; *arity]))
            .expect("schema arity respected");
        let (companion, cvar) = add_unary(&mut names, format!("{rel}_nf"), &mut db, &mut atoms);
        let main = push(
            &mut nodes,
            vars.into_iter().collect(),
            BTreeSet::from([main_atom]),
        );
        let side = push(
            &mut nodes,
            BTreeSet::from([cvar]),
            BTreeSet::from([companion]),
        );
        chain.push((main, side));
    }
    for (idx, &(main, side)) in chain.iter().enumerate().rev() {
        link(&mut nodes, main, side);
        let next = if idx + 1 < chain.len() {
            chain[idx + 1].0
        } else {
            first_copy[h.root]
        };
        link(&mut nodes, main, next);
        root = main;
    }
    let ghd = Ghd {
        nodes,
        root,
        covers_answer_vars: h.covers_answer_vars,
    }
    .renumbered();
    let query = ConjunctiveQuery::new(q.answer_vars().to_vec(), atoms)
        .expect("answer variables still occur");
    Ok(NormalForm { db, query, ghd })
}

/// Checks the preconditions of the alternating procedures: complete,
/// strongly complete, 2-uniform, and every database relation in the query.
pub fn check_normal_form(d: &Database, q: &ConjunctiveQuery, h: &Ghd) -> Result<(), GhdError> {
    validate(h, q)?;
    if !is_strongly_complete(h, q) {
        return Err(GhdError::NotNormalForm(
            "decomposition is not strongly complete".to_string(),
        ));
    }
    if !is_2_uniform(h) {
        return Err(GhdError::NotNormalForm(
            "decomposition is not 2-uniform".to_string(),
        ));
    }
    let rels = q.relations();
    if let Some(r) = d.schema().keys().find(|r| !rels.contains(*r)) {
        return Err(GhdError::NotNormalForm(format!(
            "relation {r} occurs in the database but not in the query"
        )));
    }
    Ok(())
}

/// Builds a width-1 join tree with one atom per node by GYO ear removal.
pub fn gyo_join_tree(q: &ConjunctiveQuery, covers_answer_vars: bool) -> Result<Ghd, GhdError> {
    let n = q.atoms().len();
    if n == 0 {
        return Err(GhdError::Malformed("query has no atoms".to_string()));
    }
    let vars: Vec<BTreeSet<&str>> = q.atoms().iter().map(|a| a.variables().collect()).collect();
    let mut alive: BTreeSet<usize> = (0..n).collect();
    let mut parent: Vec<Option<usize>> = vec![None; n];
    while alive.len() > 1 {
        let mut removed = None;
        'search: for &e in &alive {
            let shared: BTreeSet<&str> = vars[e]
                .iter()
                .copied()
                .filter(|x| alive.iter().any(|&o| o != e && vars[o].contains(x)))
                .collect();
            for &f in &alive {
                if f != e && shared.is_subset(&vars[f]) {
                    removed = Some((e, f));
                    break 'search;
                }
            }
        }
        let (e, f) = removed.ok_or(GhdError::NotAcyclic)?;
        parent[e] = Some(f);
        alive.remove(&e);
    }
    let root_atom = *alive.iter().next().expect("one atom remains");
    let bag = |i: usize| -> Vec<String> {
        vars[i]
            .iter()
            .filter(|v| covers_answer_vars || !q.is_answer_var(v))
            .map(|v| v.to_string())
            .collect()
    };
    let mut ghd = Ghd::new(bag(root_atom), [root_atom]).with_answer_coverage(covers_answer_vars);
    let mut node_of = vec![usize::MAX; n];
    node_of[root_atom] = ghd.root();
    let mut queue = VecDeque::from([root_atom]);
    while let Some(a) = queue.pop_front() {
        for c in (0..n).filter(|&c| parent[c] == Some(a)) {
            node_of[c] = ghd.add_child(node_of[a], bag(c), [c]);
            queue.push_back(c);
        }
    }
    Ok(ghd.renumbered())
}

/// Evaluates `q` bottom-up over a join tree with one atom per node, keeping
/// at each node only the variables shared with its parent plus answer
/// variables. Used as an independent cross-check of [`crate::cqeval::answers`].
pub fn join_tree_answers(
    q: &ConjunctiveQuery,
    tree: &Ghd,
    db: &Database,
) -> Result<BTreeSet<Vec<String>>, GhdError> {
    for n in tree.nodes() {
        if n.lambda.len() != 1 {
            return Err(GhdError::Malformed(
                "join-tree evaluation needs one atom per node".to_string(),
            ));
        }
    }
    let atom_vars = |v: usize| -> BTreeSet<String> {
        let i = *tree.nodes[v].lambda.iter().next().expect("one atom");
        q.atoms()[i].variables().map(str::to_string).collect()
    };
    let mut results: Vec<Option<BTreeSet<Binding>>> = vec![None; tree.len()];
    let mut subtree_vars: Vec<BTreeSet<String>> = vec![BTreeSet::new(); tree.len()];
    for &v in tree.preorder().iter().rev() {
        let i = *tree.nodes[v].lambda.iter().next().expect("one atom");
        let atom = &q.atoms()[i];
        let mut rel: BTreeSet<Binding> = db
            .relation(&atom.predicate)
            .filter_map(|f| {
                let mut b = Binding::new();
                crate::model::extend_binding(&mut b, &atom.terms, &f.args).then_some(b)
            })
            .collect();
        let mut seen = atom_vars(v);
        for &c in tree.nodes[v].children() {
            let child = results[c].take().expect("children processed first");
            rel = rel
                .iter()
                .flat_map(|b| {
                    child.iter().filter_map(move |cb| {
                        let mut merged = b.clone();
                        cb.iter()
                            .all(|(k, val)| match merged.get(k) {
                                Some(prev) => prev == val,
                                None => {
                                    merged.insert(k.clone(), val.clone());
                                    true
                                }
                            })
                            .then_some(merged)
                    })
                })
                .collect();
            seen.extend(subtree_vars[c].iter().cloned());
        }
        let keep: BTreeSet<String> = match tree.nodes[v].parent {
            Some(p) => atom_vars(p)
                .intersection(&atom_vars(v))
                .cloned()
                .chain(seen.iter().filter(|x| q.is_answer_var(x)).cloned())
                .collect(),
            None => q.answer_vars().iter().cloned().collect(),
        };
        let projected = rel
            .into_iter()
            .map(|b| b.into_iter().filter(|(k, _)| keep.contains(k)).collect())
            .collect();
        subtree_vars[v] = seen;
        results[v] = Some(projected);
    }
    let root = results[tree.root()].take().expect("root processed");
    Ok(root
        .into_iter()
        .map(|b| q.answer_vars().iter().map(|x| b[x].clone()).collect())
        .collect())
}
