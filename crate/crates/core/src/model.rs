//! Ground relational data: facts, databases, primary keys, key values,
//! blocks, justified deletions and tuple-mapping coherence.
//!
//! Every collection here is kept in a canonical order (constants compare
//! lexicographically, facts by predicate then argument tuple, blocks by
//! predicate then key tuple). All downstream procedures rely on these
//! orders being identical everywhere.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors raised while building or parsing databases and key specifications.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("relation {relation} used with arity {found}, declared arity is {declared}")]
    ArityMismatch {
        relation: String,
        declared: usize,
        found: usize,
    },
    #[error("invalid relation name {0:?}")]
    InvalidRelation(String),
    #[error("invalid constant {0:?}")]
    InvalidConstant(String),
    #[error("relation {0} has more than one key")]
    DuplicateKey(String),
    #[error("key position {position} out of range for {relation}/{arity}")]
    KeyPosition {
        relation: String,
        position: usize,
        arity: usize,
    },
}

/// Returns true if `name` may be used as a relation name.
pub fn is_valid_relation(name: &str) -> bool {
    let mut chars = name.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// Returns true if `c` may be used as a constant in the text formats.
pub fn is_valid_constant(c: &str) -> bool {
    !c.is_empty()
        && !c
            .chars()
            .any(|ch| ch.is_whitespace() || matches!(ch, '(' | ')' | ',' | '"' | '#' | ';'))
}

/// A ground atom `R(c1,...,cn)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Fact {
    pub predicate: String,
    pub args: Vec<String>,
}

impl Fact {
    pub fn new<P, I, S>(predicate: P, args: I) -> Self
    where
        P: Into<String>,
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Fact {
            predicate: predicate.into(),
            args: args.into_iter().map(Into::into).collect(),
        }
    }

    pub fn arity(&self) -> usize {
        self.args.len()
    }

    /// Parses a single fact such as `R(a,b)` (a trailing `.` is accepted).
    pub fn parse(text: &str) -> Result<Fact, ModelError> {
        parse_fact_line(text.trim(), 1)
    }
}

impl fmt::Display for Fact {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({})", self.predicate, self.args.join(","))
    }
}

fn parse_fact_line(line: &str, lineno: usize) -> Result<Fact, ModelError> {
    let err = |message: String| ModelError::Parse {
        line: lineno,
        message,
    };
    let body = line.strip_suffix('.').unwrap_or(line).trim_end();
    let open = body
        .find('(')
        .ok_or_else(|| err(format!("expected `R(...)`, found {body:?}")))?;
    let predicate = body[..open].trim();
    if !is_valid_relation(predicate) {
        return Err(err(format!("invalid relation name {predicate:?}")));
    }
    let rest = &body[open + 1..];
    let inner = rest
        .strip_suffix(')')
        .ok_or_else(|| err("missing closing parenthesis".to_string()))?;
    let args: Vec<String> = if inner.trim().is_empty() {
        Vec::new()
    } else {
        inner.split(',').map(|a| a.trim().to_string()).collect()
    };
    for a in &args {
        if !is_valid_constant(a) {
            return Err(err(format!("invalid constant {a:?}")));
        }
    }
    Ok(Fact {
        predicate: predicate.to_string(),
        args,
    })
}

fn strip_comment(line: &str) -> &str {
    match line.find('#') {
        Some(i) => &line[..i],
        None => line,
    }
}

/// A finite set of facts together with the arity of every relation it uses.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Database {
    facts: BTreeSet<Fact>,
    schema: BTreeMap<String, usize>,
}

impl Database {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a database, checking that each relation is used with one arity.
    pub fn from_facts<I: IntoIterator<Item = Fact>>(facts: I) -> Result<Self, ModelError> {
        let mut db = Database::new();
        for f in facts {
            db.insert(f)?;
        }
        Ok(db)
    }

    /// Declares a relation without adding facts to it.
    pub fn declare(&mut self, relation: &str, arity: usize) -> Result<(), ModelError> {
        if !is_valid_relation(relation) {
            return Err(ModelError::InvalidRelation(relation.to_string()));
        }
        match self.schema.get(relation) {
            Some(&declared) if declared != arity => Err(ModelError::ArityMismatch {
                relation: relation.to_string(),
                declared,
                found: arity,
            }),
            _ => {
                self.schema.insert(relation.to_string(), arity);
                Ok(())
            }
        }
    }

    /// Inserts a fact; returns false if it was already present.
    pub fn insert(&mut self, fact: Fact) -> Result<bool, ModelError> {
        self.declare(&fact.predicate, fact.arity())?;
        if let Some(c) = fact.args.iter().find(|c| !is_valid_constant(c)) {
            return Err(ModelError::InvalidConstant(c.clone()));
        }
        Ok(self.facts.insert(fact))
    }

    pub fn facts(&self) -> &BTreeSet<Fact> {
        &self.facts
    }

    pub fn iter(&self) -> impl Iterator<Item = &Fact> {
        self.facts.iter()
    }

    pub fn len(&self) -> usize {
        self.facts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.facts.is_empty()
    }

    pub fn contains(&self, fact: &Fact) -> bool {
        self.facts.contains(fact)
    }

    pub fn schema(&self) -> &BTreeMap<String, usize> {
        &self.schema
    }

    pub fn arity(&self, relation: &str) -> Option<usize> {
        self.schema.get(relation).copied()
    }

    /// The active domain: every constant occurring in some fact.
    pub fn adom(&self) -> BTreeSet<String> {
        self.facts
            .iter()
            .flat_map(|f| f.args.iter().cloned())
            .collect()
    }

    /// Facts of one relation, in canonical order.
    pub fn relation(&self, relation: &str) -> impl Iterator<Item = &Fact> {
        let relation = relation.to_string();
        self.facts.iter().filter(move |f| f.predicate == relation)
    }

    /// The sub-database made of the given facts, keeping this schema.
    pub fn restrict<'a, I: IntoIterator<Item = &'a Fact>>(&self, facts: I) -> Database {
        Database {
            facts: facts.into_iter().cloned().collect(),
            schema: self.schema.clone(),
        }
    }

    /// Returns true if every fact of `self` is a fact of `other`.
    pub fn is_subset(&self, other: &Database) -> bool {
        self.facts.is_subset(&other.facts)
    }

    /// Parses the line-oriented text format (`R(a,b).` per line, `#` comments).
    pub fn parse(text: &str) -> Result<Database, ModelError> {
        let mut db = Database::new();
        for (i, raw) in text.lines().enumerate() {
            let line = strip_comment(raw).trim();
            if line.is_empty() {
                continue;
            }
            if !line.ends_with('.') {
                return Err(ModelError::Parse {
                    line: i + 1,
                    message: "fact must end with `.`".to_string(),
                });
            }
            let fact = parse_fact_line(line, i + 1)?;
            db.insert(fact).map_err(|e| ModelError::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
        }
        Ok(db)
    }
}

impl fmt::Display for Database {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for fact in &self.facts {
            writeln!(f, "{fact}.")?;
        }
        Ok(())
    }
}

/// At most one primary key per relation, as a set of 1-based positions.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct KeySpec {
    keys: BTreeMap<String, BTreeSet<usize>>,
}

impl KeySpec {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds `key(relation) = positions`; a relation may receive one key only.
    pub fn add_key<I: IntoIterator<Item = usize>>(
        &mut self,
        relation: &str,
        positions: I,
    ) -> Result<(), ModelError> {
        if !is_valid_relation(relation) {
            return Err(ModelError::InvalidRelation(relation.to_string()));
        }
        if self.keys.contains_key(relation) {
            return Err(ModelError::DuplicateKey(relation.to_string()));
        }
        let positions: BTreeSet<usize> = positions.into_iter().collect();
        if let Some(&p) = positions.iter().find(|&&p| p == 0) {
            return Err(ModelError::KeyPosition {
                relation: relation.to_string(),
                position: p,
                arity: 0,
            });
        }
        self.keys.insert(relation.to_string(), positions);
        Ok(())
    }

    /// Builder-style variant of [`KeySpec::add_key`].
    pub fn with_key<I: IntoIterator<Item = usize>>(
        mut self,
        relation: &str,
        positions: I,
    ) -> Result<Self, ModelError> {
        self.add_key(relation, positions)?;
        Ok(self)
    }

    pub fn key(&self, relation: &str) -> Option<&BTreeSet<usize>> {
        self.keys.get(relation)
    }

    pub fn keys(&self) -> &BTreeMap<String, BTreeSet<usize>> {
        &self.keys
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    /// Checks every key position against the database schema.
    pub fn validate(&self, db: &Database) -> Result<(), ModelError> {
        for (rel, positions) in &self.keys {
            if let Some(arity) = db.arity(rel) {
                if let Some(&p) = positions.iter().find(|&&p| p > arity) {
                    return Err(ModelError::KeyPosition {
                        relation: rel.clone(),
                        position: p,
                        arity,
                    });
                }
            }
        }
        Ok(())
    }

    /// Parses lines of the form `key R = 1,2;` (`#` comments allowed).
    pub fn parse(text: &str) -> Result<KeySpec, ModelError> {
        let mut spec = KeySpec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = strip_comment(raw).trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| ModelError::Parse {
                line: i + 1,
                message,
            };
            let body = line
                .strip_suffix(';')
                .ok_or_else(|| err("key declaration must end with `;`".to_string()))?;
            let body = body
                .trim()
                .strip_prefix("key")
                .filter(|rest| rest.starts_with(char::is_whitespace))
                .ok_or_else(|| err("expected `key R = i,j;`".to_string()))?;
            let (rel, positions) = body
                .split_once('=')
                .ok_or_else(|| err("missing `=`".to_string()))?;
            let rel = rel.trim();
            let positions = positions
                .split(',')
                .map(|p| p.trim())
                .filter(|p| !p.is_empty())
                .map(|p| {
                    p.parse::<usize>()
                        .map_err(|_| err(format!("invalid key position {p:?}")))
                })
                .collect::<Result<Vec<_>, _>>()?;
            spec.add_key(rel, positions)
                .map_err(|e| err(e.to_string()))?;
        }
        Ok(spec)
    }
}

impl fmt::Display for KeySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (rel, positions) in &self.keys {
            let list: Vec<String> = positions.iter().map(|p| p.to_string()).collect();
            writeln!(f, "key {rel} = {};", list.join(","))?;
        }
        Ok(())
    }
}

/// The projection of a fact onto the key positions of its relation.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct KeyValue {
    pub predicate: String,
    pub projection: Vec<String>,
}

impl fmt::Display for KeyValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "<{},({})>", self.predicate, self.projection.join(","))
    }
}

/// Key value of `fact`: its key projection, or the whole tuple if keyless.
pub fn key_value(fact: &Fact, keys: &KeySpec) -> KeyValue {
    let projection = match keys.key(&fact.predicate) {
        Some(positions) => positions
            .iter()
            .filter_map(|&p| fact.args.get(p - 1).cloned())
            .collect(),
        None => fact.args.clone(),
    };
    KeyValue {
        predicate: fact.predicate.clone(),
        projection,
    }
}

/// A maximal set of facts sharing a key value, sorted canonically.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Block {
    pub key: KeyValue,
    pub facts: Vec<Fact>,
}

impl Block {
    pub fn len(&self) -> usize {
        self.facts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.facts.is_empty()
    }

    pub fn is_singleton(&self) -> bool {
        self.facts.len() == 1
    }

    pub fn contains(&self, fact: &Fact) -> bool {
        self.facts.binary_search(fact).is_ok()
    }
}

/// Partitions the database into blocks ordered by (predicate, key tuple).
pub fn blocks(db: &Database, keys: &KeySpec) -> Vec<Block> {
    let mut grouped: BTreeMap<KeyValue, Vec<Fact>> = BTreeMap::new();
    for f in db.iter() {
        grouped
            .entry(key_value(f, keys))
            .or_default()
            .push(f.clone());
    }
    grouped
        .into_iter()
        .map(|(key, facts)| Block { key, facts })
        .collect()
}

/// Blocks of a single relation, in canonical order.
pub fn relation_blocks(db: &Database, keys: &KeySpec, relation: &str) -> Vec<Block> {
    let mut grouped: BTreeMap<KeyValue, Vec<Fact>> = BTreeMap::new();
    for f in db.relation(relation) {
        grouped
            .entry(key_value(f, keys))
            .or_default()
            .push(f.clone());
    }
    grouped
        .into_iter()
        .map(|(key, facts)| Block { key, facts })
        .collect()
}

/// True iff no two distinct facts share a key value.
pub fn is_consistent(db: &Database, keys: &KeySpec) -> bool {
    let mut seen = BTreeSet::new();
    db.iter().all(|f| seen.insert(key_value(f, keys)))
}

/// A deletion `-F`, represented by the removed set `F` (one or two facts).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Operation {
    removed: Vec<Fact>,
}

impl Operation {
    /// Builds an operation from one or two facts (stored sorted).
    pub fn new(mut removed: Vec<Fact>) -> Self {
        removed.sort();
        removed.dedup();
        assert!(
            matches!(removed.len(), 1 | 2),
            "an operation removes one or two facts"
        );
        Operation { removed }
    }

    pub fn single(f: Fact) -> Self {
        Operation { removed: vec![f] }
    }

    pub fn pair(f: Fact, g: Fact) -> Self {
        Operation::new(vec![f, g])
    }

    pub fn removed(&self) -> &[Fact] {
        &self.removed
    }

    pub fn len(&self) -> usize {
        self.removed.len()
    }

    pub fn is_empty(&self) -> bool {
        self.removed.is_empty()
    }
}

impl fmt::Display for Operation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.removed.iter().map(|x| x.to_string()).collect();
        write!(f, "-{{{}}}", parts.join(", "))
    }
}

/// All operations justified in `db`: for each key-violating pair `{f,g}`,
/// the deletions `-{f}`, `-{g}` and `-{f,g}`.
pub fn justified_operations(db: &Database, keys: &KeySpec) -> BTreeSet<Operation> {
    let mut ops = BTreeSet::new();
    for block in blocks(db, keys) {
        for (i, f) in block.facts.iter().enumerate() {
            for g in &block.facts[i + 1..] {
                ops.insert(Operation::single(f.clone()));
                ops.insert(Operation::single(g.clone()));
                ops.insert(Operation::pair(f.clone(), g.clone()));
            }
        }
    }
    ops
}

/// A query term: a variable or a constant.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Term {
    Var(String),
    Const(String),
}

impl Term {
    pub fn var(name: impl Into<String>) -> Self {
        Term::Var(name.into())
    }

    pub fn constant(value: impl Into<String>) -> Self {
        Term::Const(value.into())
    }

    pub fn as_var(&self) -> Option<&str> {
        match self {
            Term::Var(v) => Some(v),
            Term::Const(_) => None,
        }
    }

    pub fn is_var(&self) -> bool {
        matches!(self, Term::Var(_))
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Var(v) => write!(f, "{v}"),
            Term::Const(c) => write!(f, "\"{c}\""),
        }
    }
}

/// A pair `x̄ ↦ t̄` of equal-length term and constant tuples.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TupleMapping {
    pub terms: Vec<Term>,
    pub values: Vec<String>,
}

impl TupleMapping {
    pub fn new(terms: Vec<Term>, values: Vec<String>) -> Self {
        assert_eq!(terms.len(), values.len(), "tuple mapping length mismatch");
        TupleMapping { terms, values }
    }
}

/// A variable assignment accumulated while checking coherence.
pub type Binding = BTreeMap<String, String>;

/// Extends `binding` with `terms ↦ values`; returns false (leaving the
/// binding partially extended) if a constant is not mapped to itself or a
/// variable would receive two values.
pub fn extend_binding(binding: &mut Binding, terms: &[Term], values: &[String]) -> bool {
    if terms.len() != values.len() {
        return false;
    }
    for (t, c) in terms.iter().zip(values) {
        match t {
            Term::Const(k) => {
                if k != c {
                    return false;
                }
            }
            Term::Var(x) => match binding.get(x) {
                Some(prev) if prev != c => return false,
                Some(_) => {}
                None => {
                    binding.insert(x.clone(), c.clone());
                }
            },
        }
    }
    true
}

/// Coherence of a set of tuple mappings: constants map to themselves and
/// every shared term receives the same value in all pairs.
pub fn coherent(mappings: &[TupleMapping]) -> bool {
    let mut binding = Binding::new();
    mappings
        .iter()
        .all(|m| extend_binding(&mut binding, &m.terms, &m.values))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn f(p: &str, args: &[&str]) -> Fact {
        Fact::new(p, args.iter().copied())
    }

    fn example_db() -> Database {
        Database::parse("P(a1,b).\nP(a1,c).\nP(a2,b). # trailing comment\nP(a2,c).\nP(a2,d).\n")
            .unwrap()
    }

    #[test]
    fn key_value_projects_onto_key_positions() {
        let keys = KeySpec::new().with_key("R", [1]).unwrap();
        let kv = key_value(&f("R", &["a", "b"]), &keys);
        assert_eq!(kv.projection, vec!["a".to_string()]);
        let kv = key_value(&f("S", &["a", "b"]), &keys);
        assert_eq!(kv.projection, vec!["a".to_string(), "b".to_string()]);
        let keys = KeySpec::new().with_key("R", [1, 2]).unwrap();
        let kv = key_value(&f("R", &["a", "b"]), &keys);
        assert_eq!(kv.projection, vec!["a".to_string(), "b".to_string()]);
    }

    #[test]
    fn blocks_group_by_key_value() {
        let keys = KeySpec::new().with_key("R", [1]).unwrap();
        let db = Database::from_facts([f("R", &["1", "a"]), f("R", &["1", "b"])]).unwrap();
        let bs = blocks(&db, &keys);
        assert_eq!(bs.len(), 1);
        assert_eq!(bs[0].len(), 2);
        assert!(!is_consistent(&db, &keys));
        let db = Database::from_facts([f("R", &["1", "a"]), f("R", &["2", "a"])]).unwrap();
        assert!(is_consistent(&db, &keys));
        assert!(blocks(&db, &keys).iter().all(Block::is_singleton));
        assert!(is_consistent(&Database::new(), &keys));
    }

    #[test]
    fn justified_operations_per_violating_pair() {
        let keys = KeySpec::new().with_key("R", [1]).unwrap();
        let db = Database::from_facts([f("R", &["1", "a"]), f("R", &["1", "b"])]).unwrap();
        let ops = justified_operations(&db, &keys);
        assert_eq!(ops.len(), 3);
        assert!(ops.contains(&Operation::single(f("R", &["1", "a"]))));
        assert!(ops.contains(&Operation::pair(f("R", &["1", "a"]), f("R", &["1", "b"]))));
        let db = Database::from_facts([
            f("R", &["1", "a"]),
            f("R", &["1", "b"]),
            f("R", &["1", "c"]),
        ])
        .unwrap();
        assert_eq!(justified_operations(&db, &keys).len(), 6);
        let db = Database::from_facts([f("R", &["1", "a"])]).unwrap();
        assert!(justified_operations(&db, &keys).is_empty());
    }

    #[test]
    fn coherence_examples() {
        let m = |ts: &[Term], vs: &[&str]| {
            TupleMapping::new(ts.to_vec(), vs.iter().map(|s| s.to_string()).collect())
        };
        let (x, y, z) = (Term::var("x"), Term::var("y"), Term::var("z"));
        assert!(coherent(&[
            m(&[x.clone(), y.clone()], &["a", "b"]),
            m(&[y.clone(), z.clone()], &["b", "c"]),
        ]));
        assert!(!coherent(&[
            m(&[x.clone(), y.clone()], &["a", "b"]),
            m(&[y.clone(), z.clone()], &["c", "d"]),
        ]));
        let k = Term::constant("k");
        assert!(coherent(&[m(&[x.clone(), k.clone()], &["a", "k"])]));
        assert!(!coherent(&[m(&[x, k], &["a", "m"])]));
    }

    #[test]
    fn text_round_trip() {
        let db = example_db();
        assert_eq!(db.len(), 5);
        let printed = db.to_string();
        assert_eq!(Database::parse(&printed).unwrap(), db);
        let keys = KeySpec::parse("# keys\nkey P = 1;\nkey S = 1,2;\n").unwrap();
        assert_eq!(KeySpec::parse(&keys.to_string()).unwrap(), keys);
        assert!(KeySpec::parse("key P = 1;\nkey P = 2;").is_err());
        assert!(Database::parse("R(a,b).\nR(a).").is_err());
        assert!(Database::parse("R(a,b)").is_err());
    }

    #[test]
    fn key_positions_validated_against_schema() {
        let db = Database::from_facts([f("R", &["a"])]).unwrap();
        let keys = KeySpec::new().with_key("R", [2]).unwrap();
        assert!(keys.validate(&db).is_err());
    }
}
