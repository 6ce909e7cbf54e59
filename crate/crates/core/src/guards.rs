//! Resource guards for enumeration oracles and automaton construction.

use crate::error::{Error, Result};

/// Limits that keep exhaustive procedures at desk scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Guards {
    /// Maximum number of facts in non-singleton blocks (or total facts for
    /// subset enumeration) that an enumeration oracle may explore.
    pub max_facts: usize,
    /// Maximum number of configurations in a computation DAG.
    pub max_dag_nodes: usize,
    /// Maximum number of trees, repairs or sequences materialized at once.
    pub max_trees: usize,
}

impl Default for Guards {
    fn default() -> Self {
        Guards {
            max_facts: 16,
            max_dag_nodes: 1_000_000,
            max_trees: 100_000,
        }
    }
}

impl Guards {
    /// Applies overrides written as `facts=N,dag=N,trees=N` (any subset).
    pub fn with_overrides(mut self, spec: &str) -> Result<Self> {
        for part in spec.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (key, value) = part
                .split_once('=')
                .ok_or_else(|| Error::Invalid(format!("guard override {part:?} lacks `=`")))?;
            let value: usize = value
                .trim()
                .parse()
                .map_err(|_| Error::Invalid(format!("guard value {value:?} is not a number")))?;
            match key.trim() {
                "facts" => self.max_facts = value,
                "dag" => self.max_dag_nodes = value,
                "trees" => self.max_trees = value,
                other => return Err(Error::Invalid(format!("unknown guard {other:?}"))),
            }
        }
        Ok(self)
    }

    pub(crate) fn check(&self, what: &'static str, limit: usize, found: usize) -> Result<()> {
        if found > limit {
            Err(Error::guard(what, limit, found))
        } else {
            Ok(())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_parse() {
        let g = Guards::default()
            .with_overrides("facts=8, trees=5")
            .unwrap();
        assert_eq!(g.max_facts, 8);
        assert_eq!(g.max_trees, 5);
        assert_eq!(g.max_dag_nodes, 1_000_000);
        assert!(Guards::default().with_overrides("bogus=1").is_err());
        assert!(Guards::default().with_overrides("facts").is_err());
    }
}
