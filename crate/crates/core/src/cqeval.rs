//! Conjunctive queries and their exact evaluation by homomorphism search.
//!
//! The evaluator is deliberately independent of decompositions: it is the
//! semantic ground truth that the automaton pipelines are checked against.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{extend_binding, is_valid_constant, is_valid_relation, Binding, Database, Term};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum QueryError {
    #[error("query parse error: {0}")]
    Parse(String),
    #[error("answer variable {0} does not occur in the body")]
    UnboundAnswerVariable(String),
    #[error("atom {relation} has {found} terms but the database declares arity {declared}")]
    Schema {
        relation: String,
        declared: usize,
        found: usize,
    },
    #[error("tuple has length {found}, query has {expected} answer variables")]
    TupleLength { expected: usize, found: usize },
}

/// A relational atom `R(t1,...,tn)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Atom {
    pub predicate: String,
    pub terms: Vec<Term>,
}

impl Atom {
    pub fn new(predicate: impl Into<String>, terms: Vec<Term>) -> Self {
        Atom {
            predicate: predicate.into(),
            terms,
        }
    }

    /// Convenience constructor where every term is a variable.
    pub fn vars(predicate: impl Into<String>, vars: &[&str]) -> Self {
        Atom::new(predicate, vars.iter().map(|v| Term::var(*v)).collect())
    }

    pub fn variables(&self) -> impl Iterator<Item = &str> {
        self.terms.iter().filter_map(Term::as_var)
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let terms: Vec<String> = self.terms.iter().map(|t| t.to_string()).collect();
        write!(f, "{}({})", self.predicate, terms.join(","))
    }
}

/// `Ans(x̄) :- R1(ȳ1), ..., Rn(ȳn)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ConjunctiveQuery {
    answer_vars: Vec<String>,
    atoms: Vec<Atom>,
}

impl ConjunctiveQuery {
    /// Builds a query, checking that every answer variable occurs in the body.
    pub fn new(answer_vars: Vec<String>, atoms: Vec<Atom>) -> Result<Self, QueryError> {
        for x in &answer_vars {
            if !atoms.iter().any(|a| a.variables().any(|v| v == x)) {
                return Err(QueryError::UnboundAnswerVariable(x.clone()));
            }
        }
        Ok(ConjunctiveQuery { answer_vars, atoms })
    }

    pub fn boolean(atoms: Vec<Atom>) -> Self {
        ConjunctiveQuery {
            answer_vars: Vec::new(),
            atoms,
        }
    }

    pub fn answer_vars(&self) -> &[String] {
        &self.answer_vars
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn is_boolean(&self) -> bool {
        self.answer_vars.is_empty()
    }

    pub fn is_answer_var(&self, v: &str) -> bool {
        self.answer_vars.iter().any(|x| x == v)
    }

    /// All variables of the body, sorted.
    pub fn variables(&self) -> BTreeSet<String> {
        self.atoms
            .iter()
            .flat_map(|a| a.variables().map(str::to_string))
            .collect()
    }

    /// All constants of the body, sorted.
    pub fn constants(&self) -> BTreeSet<String> {
        self.atoms
            .iter()
            .flat_map(|a| a.terms.iter())
            .filter_map(|t| match t {
                Term::Const(c) => Some(c.clone()),
                Term::Var(_) => None,
            })
            .collect()
    }

    /// Relation names used in the body.
    pub fn relations(&self) -> BTreeSet<String> {
        self.atoms.iter().map(|a| a.predicate.clone()).collect()
    }

    /// Index of the (first) atom over `relation`.
    pub fn atom_index(&self, relation: &str) -> Option<usize> {
        self.atoms.iter().position(|a| a.predicate == relation)
    }

    /// Checks every atom's arity against the database schema.
    pub fn check_schema(&self, db: &Database) -> Result<(), QueryError> {
        for a in &self.atoms {
            if let Some(declared) = db.arity(&a.predicate) {
                if declared != a.terms.len() {
                    return Err(QueryError::Schema {
                        relation: a.predicate.clone(),
                        declared,
                        found: a.terms.len(),
                    });
                }
            }
        }
        Ok(())
    }

    /// Parses `Ans(x,z) :- R(x,y), S(y,z,"c").`; quoted tokens are
    /// constants and bare tokens are variables.
    pub fn parse(text: &str) -> Result<Self, QueryError> {
        let cleaned: String = text
            .lines()
            .map(|l| match l.find('#') {
                Some(i) if !l[..i].contains('"') => &l[..i],
                _ => l,
            })
            .collect::<Vec<_>>()
            .join(" ");
        let body = cleaned.trim();
        let body = body.strip_suffix('.').unwrap_or(body);
        let (head, rest) = body
            .split_once(":-")
            .ok_or_else(|| QueryError::Parse("missing `:-`".to_string()))?;
        let head = parse_atom(head.trim())?;
        let mut answer_vars = Vec::new();
        for t in head.terms {
            match t {
                Term::Var(v) => answer_vars.push(v),
                Term::Const(c) => {
                    return Err(QueryError::Parse(format!(
                        "constant {c:?} in the head is not supported"
                    )))
                }
            }
        }
        let atoms = split_top_level(rest)?
            .into_iter()
            .map(|s| parse_atom(s.trim()))
            .collect::<Result<Vec<_>, _>>()?;
        if atoms.is_empty() {
            return Err(QueryError::Parse("empty query body".to_string()));
        }
        ConjunctiveQuery::new(answer_vars, atoms)
    }
}

impl fmt::Display for ConjunctiveQuery {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let body: Vec<String> = self.atoms.iter().map(|a| a.to_string()).collect();
        write!(
            f,
            "Ans({}) :- {}.",
            self.answer_vars.join(","),
            body.join(", ")
        )
    }
}

fn split_top_level(text: &str) -> Result<Vec<&str>, QueryError> {
    let mut parts = Vec::new();
    let mut depth = 0i32;
    let mut in_quote = false;
    let mut start = 0;
    for (i, ch) in text.char_indices() {
        match ch {
            '"' => in_quote = !in_quote,
            '(' if !in_quote => depth += 1,
            ')' if !in_quote => {
                depth -= 1;
                if depth < 0 {
                    return Err(QueryError::Parse("unbalanced parentheses".to_string()));
                }
            }
            ',' if !in_quote && depth == 0 => {
                parts.push(&text[start..i]);
                start = i + 1;
            }
            _ => {}
        }
    }
    if depth != 0 || in_quote {
        return Err(QueryError::Parse(
            "unbalanced parentheses or quotes".to_string(),
        ));
    }
    if !text[start..].trim().is_empty() {
        parts.push(&text[start..]);
    }
    Ok(parts)
}

fn parse_atom(text: &str) -> Result<Atom, QueryError> {
    let open = text
        .find('(')
        .ok_or_else(|| QueryError::Parse(format!("expected atom, found {text:?}")))?;
    let predicate = text[..open].trim();
    if !is_valid_relation(predicate) {
        return Err(QueryError::Parse(format!(
            "invalid relation name {predicate:?}"
        )));
    }
    let inner = text[open + 1..]
        .trim_end()
        .strip_suffix(')')
        .ok_or_else(|| QueryError::Parse(format!("missing `)` in {text:?}")))?;
    let mut terms = Vec::new();
    if !inner.trim().is_empty() {
        for raw in split_top_level(inner)? {
            let tok = raw.trim();
            if let Some(c) = tok.strip_prefix('"').and_then(|t| t.strip_suffix('"')) {
                if !is_valid_constant(c) {
                    return Err(QueryError::Parse(format!("invalid constant {c:?}")));
                }
                terms.push(Term::constant(c));
            } else if is_valid_relation(tok) {
                terms.push(Term::var(tok));
            } else {
                return Err(QueryError::Parse(format!("invalid term {tok:?}")));
            }
        }
    }
    Ok(Atom::new(predicate, terms))
}

/// True iff no relation name occurs in two atoms.
pub fn is_self_join_free(q: &ConjunctiveQuery) -> bool {
    let mut seen = BTreeSet::new();
    q.atoms().iter().all(|a| seen.insert(a.predicate.as_str()))
}

struct Search<'a> {
    order: Vec<&'a Atom>,
    facts: Vec<Vec<&'a [String]>>,
}

impl<'a> Search<'a> {
    fn new(q: &'a ConjunctiveQuery, db: &'a Database) -> Result<Self, QueryError> {
        q.check_schema(db)?;
        let mut by_relation: BTreeMap<&str, Vec<&[String]>> = BTreeMap::new();
        for f in db.iter() {
            by_relation
                .entry(f.predicate.as_str())
                .or_default()
                .push(f.args.as_slice());
        }
        let mut order: Vec<&Atom> = q.atoms().iter().collect();
        order.sort_by_key(|a| by_relation.get(a.predicate.as_str()).map_or(0, Vec::len));
        let facts = order
            .iter()
            .map(|a| {
                by_relation
                    .get(a.predicate.as_str())
                    .cloned()
                    .unwrap_or_default()
            })
            .collect();
        Ok(Search { order, facts })
    }

    /// Visits every homomorphism extending `binding`; the visitor returns
    /// false to stop the search early.
    fn run<F: FnMut(&Binding) -> bool>(
        &self,
        depth: usize,
        binding: &Binding,
        visit: &mut F,
    ) -> bool {
        if depth == self.order.len() {
            return visit(binding);
        }
        let atom = self.order[depth];
        for args in &self.facts[depth] {
            let mut next = binding.clone();
            if extend_binding(&mut next, &atom.terms, args) && !self.run(depth + 1, &next, visit) {
                return false;
            }
        }
        true
    }
}

/// All answers `h(x̄)` for homomorphisms `h` from the query body into `db`.
pub fn answers(q: &ConjunctiveQuery, db: &Database) -> Result<BTreeSet<Vec<String>>, QueryError> {
    let search = Search::new(q, db)?;
    let mut out = BTreeSet::new();
    search.run(0, &Binding::new(), &mut |b| {
        out.insert(q.answer_vars().iter().map(|x| b[x].clone()).collect());
        true
    });
    Ok(out)
}

/// True iff `tuple` is an answer to `q` over `db`.
pub fn entails(q: &ConjunctiveQuery, db: &Database, tuple: &[String]) -> Result<bool, QueryError> {
    if tuple.len() != q.answer_vars().len() {
        return Err(QueryError::TupleLength {
            expected: q.answer_vars().len(),
            found: tuple.len(),
        });
    }
    let mut start = Binding::new();
    for (x, c) in q.answer_vars().iter().zip(tuple) {
        match start.get(x) {
            Some(prev) if prev != c => return Ok(false),
            _ => {
                start.insert(x.clone(), c.clone());
            }
        }
    }
    let search = Search::new(q, db)?;
    let mut found = false;
    search.run(0, &start, &mut |_| {
        found = true;
        false
    });
    Ok(found)
}
