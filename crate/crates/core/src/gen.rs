//! Instance generators from the hardness constructions, used as end-to-end
//! cross-checks: H-colouring, monotone 2-CNF model counting and graph
//! 3-colourability.

use std::collections::{BTreeSet, VecDeque};
use std::fmt;

use num_bigint::BigUint;
use num_integer::Integer;
use num_traits::Zero;

use crate::cqeval::{Atom, ConjunctiveQuery};
use crate::error::{Error, Result};
use crate::ghw::Ghd;
use crate::model::{Database, Fact, KeySpec};
use crate::opsem::{rf, Engine, Instance, Options, Semantics};

/// A simple undirected graph on vertices `0..n`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Graph {
    n: usize,
    edges: BTreeSet<(usize, usize)>,
}

impl Graph {
    /// Builds a graph; edges are normalised to `(min, max)`.
    pub fn new<I: IntoIterator<Item = (usize, usize)>>(n: usize, edges: I) -> Result<Graph> {
        let mut set = BTreeSet::new();
        for (u, v) in edges {
            if u >= n || v >= n {
                return Err(Error::Invalid(format!(
                    "edge {u}-{v} leaves the vertex range 0..{n}"
                )));
            }
            if u == v {
                return Err(Error::Invalid(format!("self-loop on vertex {u}")));
            }
            set.insert((u.min(v), u.max(v)));
        }
        Ok(Graph { n, edges: set })
    }

    pub fn single_vertex() -> Graph {
        Graph {
            n: 1,
            edges: BTreeSet::new(),
        }
    }

    pub fn edge() -> Graph {
        Graph::path(2)
    }

    pub fn path(n: usize) -> Graph {
        Graph::new(n, (1..n).map(|i| (i - 1, i))).expect("path edges are in range")
    }

    pub fn cycle(n: usize) -> Graph {
        Graph::new(n, (0..n).map(|i| (i, (i + 1) % n))).expect("cycle edges are in range")
    }

    pub fn complete(n: usize) -> Graph {
        Graph::new(n, (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))))
            .expect("clique edges are in range")
    }

    pub fn triangle() -> Graph {
        Graph::complete(3)
    }

    /// Parses `N: u-v u-v ...` (edges separated by spaces or commas).
    pub fn parse(text: &str) -> Result<Graph> {
        let bad = || Error::Invalid(format!("graph must look like `3: 0-1 1-2`, got {text:?}"));
        let (n, rest) = text.split_once(':').ok_or_else(bad)?;
        let n: usize = n.trim().parse().map_err(|_| bad())?;
        let mut edges = Vec::new();
        for e in rest.split([' ', ',']).filter(|e| !e.is_empty()) {
            let (u, v) = e.split_once('-').ok_or_else(bad)?;
            edges.push((u.parse().map_err(|_| bad())?, v.parse().map_err(|_| bad())?));
        }
        Graph::new(n, edges)
    }

    pub fn vertex_count(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &BTreeSet<(usize, usize)> {
        &self.edges
    }

    fn neighbours(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.n];
        for &(u, v) in &self.edges {
            adj[u].push(v);
            adj[v].push(u);
        }
        adj
    }

    pub fn is_connected(&self) -> bool {
        if self.n == 0 {
            return true;
        }
        let adj = self.neighbours();
        let mut seen = vec![false; self.n];
        seen[0] = true;
        let mut queue = VecDeque::from([0]);
        while let Some(u) = queue.pop_front() {
            for &v in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    queue.push_back(v);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    /// Two-colouring by breadth-first search with the lowest vertex of each
    /// component on the left (`false`); `None` if the graph has an odd cycle.
    pub fn bipartition(&self) -> Option<Vec<bool>> {
        let adj = self.neighbours();
        let mut side: Vec<Option<bool>> = vec![None; self.n];
        for start in 0..self.n {
            if side[start].is_some() {
                continue;
            }
            side[start] = Some(false);
            let mut queue = VecDeque::from([start]);
            while let Some(u) = queue.pop_front() {
                let su = side[u].expect("queued vertices are coloured");
                for &v in &adj[u] {
                    match side[v] {
                        None => {
                            side[v] = Some(!su);
                            queue.push_back(v);
                        }
                        Some(sv) if sv == su => return None,
                        Some(_) => {}
                    }
                }
            }
        }
        Some(side.into_iter().map(|s| s.expect("all coloured")).collect())
    }

    /// Number of homomorphisms into `h`, by exhaustive search.
    pub fn hom_count(&self, h: &Graph) -> BigUint {
        let adj_h: BTreeSet<(usize, usize)> = h
            .edges
            .iter()
            .flat_map(|&(a, b)| [(a, b), (b, a)])
            .collect();
        let mut image = vec![0usize; self.n];
        let mut count = BigUint::zero();
        fn go(
            g: &Graph,
            h: &Graph,
            adj_h: &BTreeSet<(usize, usize)>,
            u: usize,
            image: &mut Vec<usize>,
            count: &mut BigUint,
        ) {
            if u == g.n {
                *count += 1u32;
                return;
            }
            for c in 0..h.n {
                let ok = g
                    .edges
                    .iter()
                    .filter(|&&(a, b)| b == u && a < u)
                    .all(|&(a, _)| adj_h.contains(&(image[a], c)));
                if ok {
                    image[u] = c;
                    go(g, h, adj_h, u + 1, image, count);
                }
            }
        }
        go(self, h, &adj_h, 0, &mut image, &mut count);
        count
    }

    /// True iff the graph has a proper 3-colouring.
    pub fn is_3_colourable(&self) -> bool {
        !self.hom_count(&Graph::triangle()).is_zero()
    }
}

impl fmt::Display for Graph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:", self.n)?;
        for (u, v) in &self.edges {
            write!(f, " {u}-{v}")?;
        }
        Ok(())
    }
}

/// The fixed six-vertex target graph: vertices `1_L, 0_L, ?_L` (0, 1, 2)
/// and `1_R, 0_R, ?_R` (3, 4, 5), complete bipartite minus `{1_L, 1_R}`.
pub fn target_graph() -> Graph {
    let edges = (0..3)
        .flat_map(|l| (3..6).map(move |r| (l, r)))
        .filter(|&e| e != (0, 3));
    Graph::new(6, edges).expect("target graph edges are in range")
}

/// A generated instance with the decomposition its construction provides.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Generated {
    pub db: Database,
    pub keys: KeySpec,
    pub query: ConjunctiveQuery,
    pub ghd: Option<Ghd>,
}

impl Generated {
    pub fn instance(&self) -> Instance {
        Instance::new(
            self.db.clone(),
            self.keys.clone(),
            self.query.clone(),
            self.ghd.clone(),
        )
    }
}

fn fact(rel: &str, args: &[&str]) -> Fact {
    Fact::new(rel, args.iter().copied())
}

fn insert(db: &mut Database, f: Fact) {
    db.insert(f).expect("generated facts are well-formed");
}

/// Clique relations `C_i_j(i,j)` with atoms `C_i_j(w_i,w_j)` over
/// `k + 1` fresh variables; returns `(i, j, atom index)` per clique atom.
fn clique_part(
    prefix: &str,
    k: usize,
    db: &mut Database,
    atoms: &mut Vec<Atom>,
) -> Vec<(usize, usize, usize)> {
    let mut out = Vec::new();
    for i in 1..=k + 1 {
        for j in i + 1..=k + 1 {
            let rel = format!("{prefix}_{i}_{j}");
            insert(db, fact(&rel, &[&i.to_string(), &j.to_string()]));
            out.push((i, j, atoms.len()));
            atoms.push(Atom::vars(rel, &[&format!("w{i}"), &format!("w{j}")]));
        }
    }
    out
}

/// Adds the clique decomposition: one node whose guard is an edge cover of
/// the clique variables, with one child per remaining clique atom.
fn clique_ghd(
    h: &mut Option<Ghd>,
    parent: Option<usize>,
    k: usize,
    clique: &[(usize, usize, usize)],
) {
    if clique.is_empty() {
        return;
    }
    let chi: Vec<String> = (1..=k + 1).map(|i| format!("w{i}")).collect();
    let mut cover: BTreeSet<usize> = BTreeSet::new();
    let mut covered: BTreeSet<usize> = BTreeSet::new();
    for i in (1..=k + 1).step_by(2) {
        let j = if i < k + 1 { i + 1 } else { i - 1 };
        let (a, b) = (i.min(j), i.max(j));
        let idx = clique
            .iter()
            .find(|&&(x, y, _)| x == a && y == b)
            .map(|&(_, _, idx)| idx)
            .expect("clique atom exists");
        cover.insert(idx);
        covered.insert(idx);
    }
    let node = match (h.as_mut(), parent) {
        (Some(g), Some(p)) => g.add_child(p, chi, cover),
        _ => {
            *h = Some(Ghd::new(chi, cover));
            0
        }
    };
    let g = h.as_mut().expect("decomposition exists");
    for &(i, j, idx) in clique {
        if !covered.contains(&idx) {
            g.add_child(node, [format!("w{i}"), format!("w{j}")], [idx]);
        }
    }
}

/// The H-colouring encoding of a connected bipartite graph with `k + 1`
/// clique variables.
pub fn gen_hcoloring(g: &Graph, k: usize) -> Result<Generated> {
    if k == 0 {
        return Err(Error::Invalid(
            "clique parameter k must be positive".to_string(),
        ));
    }
    if !g.is_connected() {
        return Err(Error::Invalid("graph must be connected".to_string()));
    }
    let side = g
        .bipartition()
        .ok_or_else(|| Error::Invalid("graph must be bipartite".to_string()))?;
    let name = |u: usize| format!("v{u}");
    let mut db = Database::new();
    for (rel, arity) in [("VL", 2), ("VR", 2), ("E", 2), ("T", 1), ("Tp", 1)] {
        db.declare(rel, arity)?;
    }
    for (u, &right) in side.iter().enumerate() {
        let rel = if right { "VR" } else { "VL" };
        insert(&mut db, fact(rel, &[&name(u), "0"]));
        insert(&mut db, fact(rel, &[&name(u), "1"]));
    }
    for &(u, v) in g.edges() {
        let (l, r) = if side[u] { (v, u) } else { (u, v) };
        insert(&mut db, fact("E", &[&name(l), &name(r)]));
    }
    insert(&mut db, fact("T", &["1"]));
    insert(&mut db, fact("Tp", &["1"]));
    let mut atoms = vec![
        Atom::vars("E", &["x", "y"]),
        Atom::vars("VL", &["x", "z"]),
        Atom::vars("VR", &["y", "zp"]),
        Atom::vars("T", &["z"]),
        Atom::vars("Tp", &["zp"]),
    ];
    let clique = clique_part("C", k, &mut db, &mut atoms);
    let query = ConjunctiveQuery::new(Vec::new(), atoms)?;
    let keys = KeySpec::new().with_key("VL", [1])?.with_key("VR", [1])?;

    let mut h = Ghd::new(["x", "y"], [0]);
    let vl = h.add_child(0, ["x", "z"], [1]);
    h.add_child(vl, ["z"], [3]);
    let vr = h.add_child(0, ["y", "zp"], [2]);
    h.add_child(vr, ["zp"], [4]);
    let mut ghd = Some(h);
    clique_ghd(&mut ghd, Some(0), k, &clique);
    Ok(Generated {
        db,
        keys,
        query,
        ghd,
    })
}

/// `|hom(G, H)|` computed from one relative-frequency query.
pub fn hom_count_via_rf(g: &Graph, k: usize, engine: Engine, opts: &Options) -> Result<BigUint> {
    if g.vertex_count() == 1 && g.edges().is_empty() {
        return Ok(BigUint::from(6u32));
    }
    if g.bipartition().is_none() {
        return Ok(BigUint::zero());
    }
    let inst = gen_hcoloring(g, k)?.instance();
    let r = rf(&inst, &[], Semantics::Repairs, engine, opts)?;
    // 2 · 3^|V| · (1 − num/den)
    let scale = BigUint::from(2u32) * BigUint::from(3u32).pow(g.vertex_count() as u32);
    let (q, rem) = (scale * (&r.denominator - &r.numerator)).div_rem(&r.denominator);
    if !rem.is_zero() {
        return Err(Error::Internal(format!(
            "homomorphism count is not integral (relative frequency {r})"
        )));
    }
    Ok(q)
}

/// A monotone 2-CNF formula: a conjunction of clauses `x ∨ y`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Mon2Cnf {
    clauses: Vec<(String, String)>,
}

impl Mon2Cnf {
    pub fn new<I, S>(clauses: I) -> Result<Mon2Cnf>
    where
        I: IntoIterator<Item = (S, S)>,
        S: Into<String>,
    {
        let clauses: Vec<(String, String)> = clauses
            .into_iter()
            .map(|(a, b)| (a.into(), b.into()))
            .collect();
        if clauses.is_empty() {
            return Err(Error::Invalid("formula has no clauses".to_string()));
        }
        for (a, b) in &clauses {
            for v in [a, b] {
                if v.is_empty() || !v.chars().all(|c| c.is_ascii_alphanumeric()) {
                    return Err(Error::Invalid(format!("invalid variable name {v:?}")));
                }
            }
        }
        Ok(Mon2Cnf { clauses })
    }

    /// Parses `x|y, y|z` (clauses separated by `,` or `&`).
    pub fn parse(text: &str) -> Result<Mon2Cnf> {
        let mut clauses = Vec::new();
        for c in text
            .split([',', '&'])
            .map(str::trim)
            .filter(|c| !c.is_empty())
        {
            let c = c.trim_start_matches('(').trim_end_matches(')');
            let (a, b) = c
                .split_once('|')
                .ok_or_else(|| Error::Invalid(format!("clause {c:?} must be `x|y`")))?;
            clauses.push((a.trim().to_string(), b.trim().to_string()));
        }
        Mon2Cnf::new(clauses)
    }

    pub fn clauses(&self) -> &[(String, String)] {
        &self.clauses
    }

    pub fn variables(&self) -> BTreeSet<String> {
        self.clauses
            .iter()
            .flat_map(|(a, b)| [a.clone(), b.clone()])
            .collect()
    }

    /// Number of satisfying assignments, by truth table.
    pub fn count_models(&self) -> BigUint {
        let vars: Vec<String> = self.variables().into_iter().collect();
        let pos = |v: &str| vars.iter().position(|x| x == v).expect("known variable");
        let clauses: Vec<(usize, usize)> =
            self.clauses.iter().map(|(a, b)| (pos(a), pos(b))).collect();
        let n = vars.len();
        let count = (0u64..1 << n)
            .filter(|m| {
                clauses
                    .iter()
                    .all(|&(a, b)| m >> a & 1 == 1 || m >> b & 1 == 1)
            })
            .count();
        BigUint::from(count)
    }
}

impl fmt::Display for Mon2Cnf {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .clauses
            .iter()
            .map(|(a, b)| format!("{a}|{b}"))
            .collect();
        write!(f, "{}", parts.join(","))
    }
}

/// The monotone 2-CNF encoding; its query repeats relation `V`, so only
/// the enumeration engine applies.
pub fn gen_mon2sat(phi: &Mon2Cnf, k: usize) -> Result<Generated> {
    if k == 0 {
        return Err(Error::Invalid(
            "clique parameter k must be positive".to_string(),
        ));
    }
    let mut db = Database::new();
    db.declare("V", 2)?;
    let mut atoms = Vec::new();
    let mut h = None;
    let mut clause_nodes = Vec::new();
    for (i, (a, b)) in phi.clauses().iter().enumerate() {
        let rel = format!("C{}", i + 1);
        insert(&mut db, fact(&rel, &[a, "1"]));
        insert(&mut db, fact(&rel, &[b, "1"]));
        let (x, y) = (format!("x{}", i + 1), format!("y{}", i + 1));
        clause_nodes.push((atoms.len(), x.clone(), y.clone()));
        atoms.push(Atom::vars(rel, &[&x, &y]));
        atoms.push(Atom::vars("V", &[&x, &y]));
    }
    let mut var_nodes = Vec::new();
    for v in phi.variables() {
        let rel = format!("Var_{v}");
        insert(&mut db, fact(&rel, &[&v]));
        insert(&mut db, fact("V", &[&v, "0"]));
        insert(&mut db, fact("V", &[&v, "1"]));
        let (z, u) = (format!("z_{v}"), format!("u_{v}"));
        var_nodes.push((atoms.len(), z.clone(), u.clone()));
        atoms.push(Atom::vars(rel, &[&z]));
        atoms.push(Atom::vars("V", &[&z, &u]));
    }
    let mut e_atoms = Vec::new();
    for i in 1..=k + 1 {
        for j in i + 1..=k + 1 {
            insert(&mut db, fact("E", &[&i.to_string(), &j.to_string()]));
            e_atoms.push((i, j, atoms.len()));
            atoms.push(Atom::vars("E", &[&format!("w{i}"), &format!("w{j}")]));
        }
    }
    let query = ConjunctiveQuery::new(Vec::new(), atoms)?;
    let keys = KeySpec::new().with_key("V", [1])?;

    clique_ghd(&mut h, None, k, &e_atoms);
    let mut g = h.expect("the clique part is non-empty for k > 0");
    for (idx, x, y) in clause_nodes {
        let c = g.add_child(0, [x.clone(), y.clone()], [idx]);
        g.add_child(c, [x, y], [idx + 1]);
    }
    for (idx, z, u) in var_nodes {
        let c = g.add_child(0, [z.clone()], [idx]);
        g.add_child(c, [z, u], [idx + 1]);
    }
    Ok(Generated {
        db,
        keys,
        query,
        ghd: Some(g),
    })
}

/// The 3-colourability encoding: no keys, one relation per oriented edge
/// holding all pairs of distinct colours.
pub fn gen_3col(g: &Graph) -> Result<Generated> {
    let mut db = Database::new();
    let mut atoms = Vec::new();
    let var = |u: usize| format!("x{u}");
    for &(u, v) in g.edges() {
        for (a, b) in [(u, v), (v, u)] {
            let rel = format!("C_{a}_{b}");
            db.declare(&rel, 2)?;
            for i in 1..=3u8 {
                for j in 1..=3u8 {
                    if i != j {
                        insert(&mut db, fact(&rel, &[&i.to_string(), &j.to_string()]));
                    }
                }
            }
            atoms.push(Atom::vars(rel, &[&var(a), &var(b)]));
        }
    }
    let query = ConjunctiveQuery::new(Vec::new(), atoms)?;
    let ghd = (!query.atoms().is_empty()).then(|| Ghd::single_node(&query, false));
    Ok(Generated {
        db,
        keys: KeySpec::new(),
        query,
        ghd,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cqeval::is_self_join_free;
    use crate::ghw::validate;
    use crate::opsem::{count_repairs, Frequency};

    #[test]
    fn target_graph_shape() {
        let h = target_graph();
        assert_eq!(h.edges().len(), 8);
        assert!(h.bipartition().is_some());
        assert_eq!(Graph::single_vertex().hom_count(&h), BigUint::from(6u32));
        assert_eq!(Graph::edge().hom_count(&h), BigUint::from(16u32));
    }

    #[test]
    fn single_edge_instance() {
        let gen = gen_hcoloring(&Graph::edge(), 1).unwrap();
        assert!(is_self_join_free(&gen.query));
        let report = validate(gen.ghd.as_ref().unwrap(), &gen.query).unwrap();
        assert_eq!(report.width, 1);
        assert_eq!(count_repairs(&gen.db, &gen.keys), BigUint::from(9u32));
        let opts = Options::default();
        let r = rf(
            &gen.instance(),
            &[],
            Semantics::Repairs,
            Engine::Brute,
            &opts,
        )
        .unwrap();
        assert_eq!(r.ratio(), Frequency::new(1u32.into(), 9u32.into()).ratio());
        for engine in [Engine::Brute, Engine::Nfta] {
            let n = hom_count_via_rf(&Graph::edge(), 1, engine, &opts).unwrap();
            assert_eq!(n, BigUint::from(16u32));
        }
    }

    #[test]
    fn hom_special_cases() {
        let opts = Options::default();
        let h = target_graph();
        for g in [Graph::single_vertex(), Graph::triangle(), Graph::path(3)] {
            assert_eq!(
                hom_count_via_rf(&g, 1, Engine::Brute, &opts).unwrap(),
                g.hom_count(&h),
                "{g}"
            );
        }
    }

    #[test]
    fn larger_clique_widths() {
        for k in 1..=4 {
            let gen = gen_hcoloring(&Graph::path(3), k).unwrap();
            let w = validate(gen.ghd.as_ref().unwrap(), &gen.query)
                .unwrap()
                .width;
            assert_eq!(w, (k + 2) / 2, "k={k}");
        }
    }

    #[test]
    fn mon2sat_frequencies() {
        let opts = Options::default();
        for (text, models, n) in [("x|y", 3u32, 2u32), ("x|y,y|z", 5, 3)] {
            let phi = Mon2Cnf::parse(text).unwrap();
            assert_eq!(phi.count_models(), BigUint::from(models));
            let gen = gen_mon2sat(&phi, 1).unwrap();
            validate(gen.ghd.as_ref().unwrap(), &gen.query).unwrap();
            let r = rf(
                &gen.instance(),
                &[],
                Semantics::Repairs,
                Engine::Brute,
                &opts,
            )
            .unwrap();
            assert_eq!(r.denominator, BigUint::from(3u32).pow(n));
            assert_eq!(r.numerator, BigUint::from(models));
        }
    }

    #[test]
    fn three_colouring() {
        let opts = Options::default();
        for (g, want) in [
            (Graph::triangle(), true),
            (Graph::complete(4), false),
            (Graph::single_vertex(), true),
        ] {
            assert_eq!(g.is_3_colourable(), want);
            let gen = gen_3col(&g).unwrap();
            let r = rf(
                &gen.instance(),
                &[],
                Semantics::Repairs,
                Engine::Brute,
                &opts,
            )
            .unwrap();
            assert_eq!(r.numerator == r.denominator, want, "{g}");
        }
        let gen = gen_3col(&Graph::triangle()).unwrap();
        let r = rf(
            &gen.instance(),
            &[],
            Semantics::Repairs,
            Engine::Nfta,
            &opts,
        )
        .unwrap();
        assert_eq!(r.to_string(), "1");
    }

    #[test]
    fn graph_text_round_trip() {
        let g = Graph::parse("4: 0-1 1-2,2-3").unwrap();
        assert_eq!(g, Graph::path(4));
        assert_eq!(Graph::parse(&g.to_string()).unwrap(), g);
        assert!(Graph::parse("2: 0-0").is_err());
        assert!(!Graph::new(3, [(0, 1)]).unwrap().is_connected());
    }
}
