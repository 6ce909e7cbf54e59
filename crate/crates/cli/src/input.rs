//! Reading instance files and resolving guard settings.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::Args;

use ocqa_core::cqeval::ConjunctiveQuery;
use ocqa_core::ghw::Ghd;
use ocqa_core::guards::Guards;
use ocqa_core::model::{Database, KeySpec};
use ocqa_core::opsem::Instance;

/// Environment variable holding guard overrides (`facts=N,dag=N,trees=N`).
pub const GUARD_ENV: &str = "OCQA_GUARDS";

/// A malformed or missing command-line input.
#[derive(Debug)]
pub struct InputError(pub String);

impl fmt::Display for InputError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for InputError {}

#[derive(Args, Clone, Default)]
pub struct InstanceArgs {
    /// Database file, one fact `R(a,b).` per line.
    #[arg(long)]
    pub db: Option<PathBuf>,
    /// Key file, one `key R = 1,2;` per line; omitted means no keys.
    #[arg(long)]
    pub keys: Option<PathBuf>,
    /// Query file, e.g. `Ans(x) :- R(x,y), S(y).`
    #[arg(long)]
    pub query: Option<PathBuf>,
    /// Decomposition JSON; omitted means a join tree of an acyclic query.
    #[arg(long)]
    pub ghd: Option<PathBuf>,
}

impl InstanceArgs {
    pub fn load(&self) -> anyhow::Result<Instance> {
        let db = database(required(&self.db, "--db")?)?;
        let keys = match &self.keys {
            Some(p) => KeySpec::parse(&read(p)?).with_context(|| format!("in {}", p.display()))?,
            None => KeySpec::new(),
        };
        let q = query(required(&self.query, "--query")?)?;
        let h = self.ghd.as_deref().map(ghd).transpose()?;
        Ok(Instance::new(db, keys, q, h))
    }
}

fn required<'a>(p: &'a Option<PathBuf>, flag: &str) -> anyhow::Result<&'a Path> {
    p.as_deref()
        .ok_or_else(|| InputError(format!("{flag} is required")).into())
}

#[derive(Args, Clone, Default)]
pub struct GuardArgs {
    /// Largest number of conflicting facts an enumeration oracle may explore.
    #[arg(long)]
    pub guard_facts: Option<usize>,
    /// Largest computation DAG (and automaton) to build.
    #[arg(long)]
    pub guard_dag: Option<usize>,
    /// Largest number of trees, repairs or sequences to materialize.
    #[arg(long)]
    pub guard_trees: Option<usize>,
}

impl GuardArgs {
    /// Defaults, then `OCQA_GUARDS`, then flags.
    pub fn resolve(&self) -> anyhow::Result<Guards> {
        let mut g = Guards::default();
        if let Ok(spec) = std::env::var(GUARD_ENV) {
            g = g
                .with_overrides(&spec)
                .with_context(|| format!("in {GUARD_ENV}"))?;
        }
        if let Some(n) = self.guard_facts {
            g.max_facts = n;
        }
        if let Some(n) = self.guard_dag {
            g.max_dag_nodes = n;
        }
        if let Some(n) = self.guard_trees {
            g.max_trees = n;
        }
        Ok(g)
    }
}

pub fn read(path: &Path) -> anyhow::Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

pub fn database(path: &Path) -> anyhow::Result<Database> {
    Database::parse(&read(path)?).with_context(|| format!("in {}", path.display()))
}

pub fn query(path: &Path) -> anyhow::Result<ConjunctiveQuery> {
    ConjunctiveQuery::parse(&read(path)?).with_context(|| format!("in {}", path.display()))
}

pub fn ghd(path: &Path) -> anyhow::Result<Ghd> {
    Ghd::from_json(&read(path)?).with_context(|| format!("in {}", path.display()))
}
