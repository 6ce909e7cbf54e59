//! The four shipped alternating procedures: repairs (and classical subset
//! repairs), repairing sequences, answers of a conjunctive query, and
//! arbitrary subsets.
//!
//! All of them walk a complete, strongly complete, 2-uniform decomposition
//! top-down. At each node they guess an image for every atom of the guard
//! set (coherent with the parent's guess), then emit one label block per
//! database block of every atom whose minimal covering vertex is the node,
//! and finally split universally into the two children.

use std::collections::{BTreeSet, HashMap};

use num_bigint::BigUint;
use num_traits::ToPrimitive;

use super::{BranchingProgram, Configuration, Symbol};
use crate::cqeval::{is_self_join_free, ConjunctiveQuery};
use crate::error::{Error, Result};
use crate::ghw::{check_normal_form, min_covering_vertices, Ghd, GhdError};
use crate::model::{extend_binding, relation_blocks, Binding, Database, Fact, KeySpec};
use crate::opsem::binomial;

/// One guess of images for the guard atoms of a node.
#[derive(Debug, Clone)]
struct Choice {
    /// Fact index per position of `lambda[node]`.
    facts: Vec<usize>,
    binding: Binding,
}

/// A label block emitted at a node: the facts among which one is kept.
#[derive(Debug, Clone)]
struct Task {
    /// Position within `lambda[node]` of the atom owning the block.
    atom_pos: usize,
    members: Vec<usize>,
}

/// Decomposition-derived tables shared by all programs.
#[derive(Debug, Clone)]
struct Context {
    facts: Vec<Fact>,
    root: usize,
    lambda: Vec<Vec<usize>>,
    children: Vec<Vec<usize>>,
    /// Variables of the node's guard atoms that also occur in the parent's.
    shared: Vec<Vec<String>>,
    choices: Vec<Vec<Choice>>,
    /// Atom positions whose minimal covering vertex is the node.
    owned: Vec<Vec<usize>>,
    /// Answer variables in the node's bag, in answer order.
    answer_vars: Vec<Vec<String>>,
}

impl Context {
    fn new(
        d: &Database,
        q: &ConjunctiveQuery,
        h: &Ghd,
        tuple: Option<&[String]>,
    ) -> Result<Context> {
        check_normal_form(d, q, h)?;
        if !is_self_join_free(q) {
            return Err(GhdError::NotSelfJoinFree.into());
        }
        let facts: Vec<Fact> = d.iter().cloned().collect();
        let index: HashMap<&Fact, usize> = facts.iter().enumerate().map(|(i, f)| (f, i)).collect();
        let mut start = Binding::new();
        let mut tuple_ok = true;
        if let Some(t) = tuple {
            if t.len() != q.answer_vars().len() {
                return Err(Error::Invalid(format!(
                    "tuple has {} values but the query has {} answer variables",
                    t.len(),
                    q.answer_vars().len()
                )));
            }
            for (x, c) in q.answer_vars().iter().zip(t) {
                match start.get(x) {
                    Some(prev) if prev != c => tuple_ok = false,
                    _ => {
                        start.insert(x.clone(), c.clone());
                    }
                }
            }
        }
        let mins = min_covering_vertices(h, q);
        let n = h.len();
        let mut ctx = Context {
            facts: Vec::new(),
            root: h.root(),
            lambda: Vec::with_capacity(n),
            children: Vec::with_capacity(n),
            shared: Vec::with_capacity(n),
            choices: Vec::with_capacity(n),
            owned: Vec::with_capacity(n),
            answer_vars: Vec::with_capacity(n),
        };
        let atom_vars = |i: usize| -> BTreeSet<String> {
            q.atoms()[i].variables().map(str::to_string).collect()
        };
        for v in 0..n {
            let node = h.node(v);
            let lambda: Vec<usize> = node.lambda.iter().copied().collect();
            let vars: BTreeSet<String> = lambda.iter().flat_map(|&i| atom_vars(i)).collect();
            let shared = match node.parent() {
                Some(p) => {
                    let pvars: BTreeSet<String> = h
                        .node(p)
                        .lambda
                        .iter()
                        .flat_map(|&i| atom_vars(i))
                        .collect();
                    vars.intersection(&pvars).cloned().collect()
                }
                None => Vec::new(),
            };
            let choices = if tuple_ok {
                guess_images(q, d, &index, &lambda, &start)
            } else {
                Vec::new()
            };
            let owned = (0..lambda.len())
                .filter(|&j| mins[lambda[j]] == Some(v))
                .collect();
            let mut answer_vars = Vec::new();
            for x in q.answer_vars() {
                if node.chi.contains(x) && !answer_vars.contains(x) {
                    answer_vars.push(x.clone());
                }
            }
            ctx.lambda.push(lambda);
            ctx.children.push(node.children().to_vec());
            ctx.shared.push(shared);
            ctx.choices.push(choices);
            ctx.owned.push(owned);
            ctx.answer_vars.push(answer_vars);
        }
        ctx.facts = facts;
        Ok(ctx)
    }

    fn matching(&self, node: usize, ctx: &[String]) -> Vec<usize> {
        self.choices[node]
            .iter()
            .enumerate()
            .filter(|(_, c)| {
                self.shared[node]
                    .iter()
                    .zip(ctx)
                    .all(|(x, val)| c.binding.get(x) == Some(val))
            })
            .map(|(i, _)| i)
            .collect()
    }

    /// Values of the child's shared variables under the parent's guess.
    fn project(&self, child: usize, parent: usize, choice: usize) -> Vec<String> {
        let b = &self.choices[parent][choice].binding;
        self.shared[child]
            .iter()
            .map(|x| b.get(x).cloned().expect("shared variable bound by parent"))
            .collect()
    }

    fn pinned(&self, node: usize, choice: usize, task: &Task) -> usize {
        self.choices[node][choice].facts[task.atom_pos]
    }

    fn fact_symbol(&self, pick: Option<usize>) -> Symbol {
        match pick {
            Some(i) => Symbol::Fact(self.facts[i].clone()),
            None => Symbol::Bottom,
        }
    }

    fn alpha(&self, pick: Option<usize>) -> Option<Fact> {
        pick.map(|i| self.facts[i].clone())
    }

    /// Blocks of every owned atom, in (atom position, block) order.
    fn block_tasks(&self, d: &Database, keys: &KeySpec, q: &ConjunctiveQuery) -> Vec<Vec<Task>> {
        let index: HashMap<&Fact, usize> =
            self.facts.iter().enumerate().map(|(i, f)| (f, i)).collect();
        (0..self.lambda.len())
            .map(|v| {
                let mut tasks = Vec::new();
                for &j in &self.owned[v] {
                    let rel = &q.atoms()[self.lambda[v][j]].predicate;
                    for b in relation_blocks(d, keys, rel) {
                        tasks.push(Task {
                            atom_pos: j,
                            members: b.facts.iter().map(|f| index[f]).collect(),
                        });
                    }
                }
                tasks
            })
            .collect()
    }

    /// One single-fact task per fact of every owned atom.
    fn fact_tasks(&self, q: &ConjunctiveQuery) -> Vec<Vec<Task>> {
        (0..self.lambda.len())
            .map(|v| {
                let mut tasks = Vec::new();
                for &j in &self.owned[v] {
                    let rel = &q.atoms()[self.lambda[v][j]].predicate;
                    for (i, f) in self.facts.iter().enumerate() {
                        if &f.predicate == rel {
                            tasks.push(Task {
                                atom_pos: j,
                                members: vec![i],
                            });
                        }
                    }
                }
                tasks
            })
            .collect()
    }
}

fn guess_images(
    q: &ConjunctiveQuery,
    d: &Database,
    index: &HashMap<&Fact, usize>,
    lambda: &[usize],
    start: &Binding,
) -> Vec<Choice> {
    let mut out = Vec::new();
    let mut picked = Vec::with_capacity(lambda.len());
    extend_choices(q, d, index, lambda, start, &mut picked, &mut out);
    out
}

fn extend_choices(
    q: &ConjunctiveQuery,
    d: &Database,
    index: &HashMap<&Fact, usize>,
    lambda: &[usize],
    binding: &Binding,
    picked: &mut Vec<usize>,
    out: &mut Vec<Choice>,
) {
    let Some(&atom) = lambda.get(picked.len()) else {
        out.push(Choice {
            facts: picked.clone(),
            binding: binding.clone(),
        });
        return;
    };
    let a = &q.atoms()[atom];
    for f in d.relation(&a.predicate) {
        let mut b = binding.clone();
        if extend_binding(&mut b, &a.terms, &f.args) {
            picked.push(index[f]);
            extend_choices(q, d, index, lambda, &b, picked, out);
            picked.pop();
        }
    }
}

/// What population the repair-style program ranges over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RepMode {
    /// Operational repairs: one fact or none per conflicting block.
    Repairs,
    /// Classical subset repairs: exactly one fact per block.
    Subset,
    /// Arbitrary subsets: every fact kept or dropped independently.
    Ur,
}

/// Procedure whose valid outputs encode the repairs (or subsets) that
/// entail the fixed answer tuple.
#[derive(Debug, Clone)]
pub struct RepProgram {
    ctx: Context,
    tasks: Vec<Vec<Task>>,
    mode: RepMode,
}

pub type UrProgram = RepProgram;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum RepState {
    Start,
    Guess {
        node: usize,
        ctx: Vec<String>,
    },
    Choose {
        node: usize,
        choice: usize,
        step: usize,
    },
    Emit {
        node: usize,
        choice: usize,
        step: usize,
        pick: Option<usize>,
    },
    Split {
        node: usize,
        choice: usize,
    },
    Done,
    Dead,
}

/// Builds the repair program (`subset_mode` restricts to subset repairs).
pub fn rep_program(
    d: &Database,
    keys: &KeySpec,
    q: &ConjunctiveQuery,
    h: &Ghd,
    tuple: &[String],
    subset_mode: bool,
) -> Result<RepProgram> {
    keys.validate(d)?;
    let ctx = Context::new(d, q, h, Some(tuple))?;
    let tasks = ctx.block_tasks(d, keys, q);
    let mode = if subset_mode {
        RepMode::Subset
    } else {
        RepMode::Repairs
    };
    Ok(RepProgram { ctx, tasks, mode })
}

/// Builds the program over arbitrary subsets of the database.
pub fn ur_program(
    d: &Database,
    q: &ConjunctiveQuery,
    h: &Ghd,
    tuple: &[String],
) -> Result<UrProgram> {
    let ctx = Context::new(d, q, h, Some(tuple))?;
    let tasks = ctx.fact_tasks(q);
    Ok(RepProgram {
        ctx,
        tasks,
        mode: RepMode::Ur,
    })
}

impl RepProgram {
    pub fn mode(&self) -> RepMode {
        self.mode
    }

    fn options(&self, node: usize, choice: usize, task: &Task) -> Vec<Option<usize>> {
        let pinned = self.ctx.pinned(node, choice, task);
        match self.mode {
            RepMode::Ur => {
                let f = task.members[0];
                if f == pinned {
                    vec![Some(f)]
                } else {
                    vec![Some(f), None]
                }
            }
            RepMode::Repairs | RepMode::Subset => {
                if task.members.len() == 1 {
                    vec![Some(task.members[0])]
                } else if task.members.contains(&pinned) {
                    vec![Some(pinned)]
                } else {
                    let mut opts: Vec<Option<usize>> =
                        task.members.iter().copied().map(Some).collect();
                    if self.mode == RepMode::Repairs {
                        opts.push(None);
                    }
                    opts
                }
            }
        }
    }

    fn next(&self, node: usize, choice: usize, step: usize) -> Configuration<RepState> {
        if step < self.tasks[node].len() {
            Configuration::existential(RepState::Choose { node, choice, step })
        } else if self.ctx.children[node].is_empty() {
            Configuration::accept(RepState::Done)
        } else {
            Configuration::universal(RepState::Split { node, choice })
        }
    }
}

impl BranchingProgram for RepProgram {
    type State = RepState;

    fn initial(&self) -> Configuration<RepState> {
        Configuration::labeled(RepState::Start, Symbol::Root)
    }

    fn expand(&self, c: &Configuration<RepState>) -> Vec<Configuration<RepState>> {
        match &c.state {
            RepState::Start => vec![Configuration::existential(RepState::Guess {
                node: self.ctx.root,
                ctx: Vec::new(),
            })],
            RepState::Guess { node, ctx } => {
                let m = self.ctx.matching(*node, ctx);
                if m.is_empty() {
                    return vec![Configuration::reject(RepState::Dead)];
                }
                m.into_iter().map(|ch| self.next(*node, ch, 0)).collect()
            }
            &RepState::Choose { node, choice, step } => self
                .options(node, choice, &self.tasks[node][step])
                .into_iter()
                .map(|pick| {
                    Configuration::labeled(
                        RepState::Emit {
                            node,
                            choice,
                            step,
                            pick,
                        },
                        self.ctx.fact_symbol(pick),
                    )
                })
                .collect(),
            &RepState::Emit {
                node, choice, step, ..
            } => vec![self.next(node, choice, step + 1)],
            &RepState::Split { node, choice } => self.ctx.children[node]
                .iter()
                .map(|&u| {
                    Configuration::existential(RepState::Guess {
                        node: u,
                        ctx: self.ctx.project(u, node, choice),
                    })
                })
                .collect(),
            RepState::Done | RepState::Dead => Vec::new(),
        }
    }
}

/// Procedure whose valid outputs encode the complete repairing sequences
/// whose result entails the fixed answer tuple.
#[derive(Debug, Clone)]
pub struct SeqProgram {
    ctx: Context,
    tasks: Vec<Vec<Task>>,
    bitpath: bool,
    total_facts: usize,
    /// When set, only sequences ending in exactly this set of facts.
    target: Option<Vec<bool>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum SeqState {
    Start,
    Guess {
        node: usize,
        ctx: Vec<String>,
        left: usize,
        before: usize,
    },
    Choose {
        node: usize,
        choice: usize,
        step: usize,
        left: usize,
        before: usize,
    },
    Ops(OpsState),
    EmitOp {
        at: OpsState,
        size: u8,
        id: u64,
    },
    EmitInterleave {
        at: OpsState,
        id: BigUint,
    },
    EmitBit {
        at: OpsState,
        pos: u64,
        bit: bool,
        tight: bool,
        nonzero: bool,
    },
    SplitGuess {
        node: usize,
        choice: usize,
        left: usize,
        before: usize,
    },
    Split {
        node: usize,
        choice: usize,
        left: usize,
        before: usize,
        first: usize,
    },
    Done,
    Dead,
}

/// Position inside the per-block operation loop.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct OpsState {
    node: usize,
    choice: usize,
    step: usize,
    alpha: Option<usize>,
    /// Facts of the block still to delete.
    remaining: usize,
    /// Operations still to be performed overall in this subtree.
    left: usize,
    /// Operations performed before this point.
    before: usize,
    /// Value of `before` when the block started.
    start: usize,
}

/// Builds the sequence program. With `bitpath`, interleaving identifiers
/// are emitted one bit per label, which keeps the DAG polynomial.
pub fn seq_program(
    d: &Database,
    keys: &KeySpec,
    q: &ConjunctiveQuery,
    h: &Ghd,
    tuple: &[String],
    bitpath: bool,
) -> Result<SeqProgram> {
    keys.validate(d)?;
    let ctx = Context::new(d, q, h, Some(tuple))?;
    let tasks = ctx.block_tasks(d, keys, q);
    Ok(SeqProgram {
        total_facts: d.len(),
        ctx,
        tasks,
        bitpath,
        target: None,
    })
}

impl SeqProgram {
    /// Restricts the program to sequences whose result is `target`.
    pub fn restricted_to(mut self, target: &Database) -> Self {
        self.target = Some(self.ctx.facts.iter().map(|f| target.contains(f)).collect());
        self
    }

    fn options(&self, node: usize, choice: usize, task: &Task) -> Vec<Option<usize>> {
        let pinned = self.ctx.pinned(node, choice, task);
        let base: Vec<Option<usize>> = if task.members.len() == 1 {
            vec![Some(task.members[0])]
        } else if task.members.contains(&pinned) {
            vec![Some(pinned)]
        } else {
            task.members
                .iter()
                .copied()
                .map(Some)
                .chain(std::iter::once(None))
                .collect()
        };
        match &self.target {
            None => base,
            Some(t) => base
                .into_iter()
                .filter(|pick| match pick {
                    Some(f) => t[*f],
                    None => task.members.iter().all(|&f| !t[f]),
                })
                .collect(),
        }
    }

    fn next(
        &self,
        node: usize,
        choice: usize,
        step: usize,
        left: usize,
        before: usize,
    ) -> Configuration<SeqState> {
        if step < self.tasks[node].len() {
            Configuration::existential(SeqState::Choose {
                node,
                choice,
                step,
                left,
                before,
            })
        } else if self.ctx.children[node].is_empty() {
            if left == 0 {
                Configuration::accept(SeqState::Done)
            } else {
                Configuration::reject(SeqState::Dead)
            }
        } else {
            Configuration::existential(SeqState::SplitGuess {
                node,
                choice,
                left,
                before,
            })
        }
    }

    fn alpha_symbol(&self, at: &OpsState) -> Option<Fact> {
        self.ctx.alpha(at.alpha)
    }

    /// Successors of a point in the operation loop.
    fn ops(&self, at: &OpsState) -> Vec<Configuration<SeqState>> {
        let n = at.remaining;
        if n > 0 {
            let sizes: &[u8] = if n > 1 {
                &[1, 2]
            } else if at.alpha.is_some() {
                &[1]
            } else {
                &[]
            };
            if sizes.is_empty() || at.left == 0 {
                return vec![Configuration::reject(SeqState::Dead)];
            }
            let mut out = Vec::new();
            for &g in sizes {
                let ways = if g == 1 { n } else { n * (n - 1) / 2 };
                for p in 1..=ways as u64 {
                    out.push(Configuration::labeled(
                        SeqState::EmitOp {
                            at: at.clone(),
                            size: g,
                            id: p,
                        },
                        Symbol::Op { size: g, id: p },
                    ));
                }
            }
            return out;
        }
        let ways = binomial(at.before, at.before - at.start);
        if self.bitpath {
            self.bits(at, 0, true, false, &ways)
        } else {
            let count = ways.to_u64().expect("interleaving count fits in u64");
            (1..=count)
                .map(|p| {
                    let id = BigUint::from(p);
                    Configuration::labeled(
                        SeqState::EmitInterleave {
                            at: at.clone(),
                            id: id.clone(),
                        },
                        Symbol::Interleave {
                            alpha: self.alpha_symbol(at),
                            id,
                        },
                    )
                })
                .collect()
        }
    }

    /// Bit labels at position `pos` of a fixed-width binary number in
    /// `[1, ways]`, most significant bit first.
    fn bits(
        &self,
        at: &OpsState,
        pos: u64,
        tight: bool,
        nonzero: bool,
        ways: &BigUint,
    ) -> Vec<Configuration<SeqState>> {
        let width = ways.bits();
        let limit_bit = ways.bit(width - 1 - pos);
        let last = pos + 1 == width;
        let mut out = Vec::new();
        for bit in [false, true] {
            if tight && bit && !limit_bit {
                continue;
            }
            let nz = nonzero || bit;
            if last && !nz {
                continue;
            }
            out.push(Configuration::labeled(
                SeqState::EmitBit {
                    at: at.clone(),
                    pos,
                    bit,
                    tight: tight && bit == limit_bit,
                    nonzero: nz,
                },
                Symbol::InterleaveBit {
                    alpha: self.alpha_symbol(at),
                    bit,
                },
            ));
        }
        out
    }

    fn after_block(&self, at: &OpsState) -> Configuration<SeqState> {
        self.next(at.node, at.choice, at.step + 1, at.left, at.before)
    }
}

impl BranchingProgram for SeqProgram {
    type State = SeqState;

    fn initial(&self) -> Configuration<SeqState> {
        Configuration::labeled(SeqState::Start, Symbol::Root)
    }

    fn expand(&self, c: &Configuration<SeqState>) -> Vec<Configuration<SeqState>> {
        match &c.state {
            SeqState::Start => (0..=self.total_facts)
                .map(|left| {
                    Configuration::existential(SeqState::Guess {
                        node: self.ctx.root,
                        ctx: Vec::new(),
                        left,
                        before: 0,
                    })
                })
                .collect(),
            SeqState::Guess {
                node,
                ctx,
                left,
                before,
            } => {
                let m = self.ctx.matching(*node, ctx);
                if m.is_empty() {
                    return vec![Configuration::reject(SeqState::Dead)];
                }
                m.into_iter()
                    .map(|ch| self.next(*node, ch, 0, *left, *before))
                    .collect()
            }
            &SeqState::Choose {
                node,
                choice,
                step,
                left,
                before,
            } => {
                let task = &self.tasks[node][step];
                let opts = self.options(node, choice, task);
                if opts.is_empty() {
                    return vec![Configuration::reject(SeqState::Dead)];
                }
                opts.into_iter()
                    .map(|alpha| {
                        let remaining = task.members.len() - usize::from(alpha.is_some());
                        Configuration::existential(SeqState::Ops(OpsState {
                            node,
                            choice,
                            step,
                            alpha,
                            remaining,
                            left,
                            before,
                            start: before,
                        }))
                    })
                    .collect()
            }
            SeqState::Ops(at) => self.ops(at),
            SeqState::EmitOp { at, size, .. } => {
                let mut next = at.clone();
                next.remaining -= usize::from(*size);
                next.left -= 1;
                next.before += 1;
                vec![Configuration::existential(SeqState::Ops(next))]
            }
            SeqState::EmitInterleave { at, .. } => vec![self.after_block(at)],
            SeqState::EmitBit {
                at,
                pos,
                tight,
                nonzero,
                ..
            } => {
                let ways = binomial(at.before, at.before - at.start);
                if pos + 1 == ways.bits() {
                    vec![self.after_block(at)]
                } else {
                    self.bits(at, pos + 1, *tight, *nonzero, &ways)
                }
            }
            &SeqState::SplitGuess {
                node,
                choice,
                left,
                before,
            } => (0..=left)
                .map(|first| {
                    Configuration::universal(SeqState::Split {
                        node,
                        choice,
                        left,
                        before,
                        first,
                    })
                })
                .collect(),
            &SeqState::Split {
                node,
                choice,
                left,
                before,
                first,
            } => {
                let kids = &self.ctx.children[node];
                let (u1, u2) = (kids[0], kids[1]);
                vec![
                    Configuration::existential(SeqState::Guess {
                        node: u1,
                        ctx: self.ctx.project(u1, node, choice),
                        left: first,
                        before,
                    }),
                    Configuration::existential(SeqState::Guess {
                        node: u2,
                        ctx: self.ctx.project(u2, node, choice),
                        left: left - first,
                        before: before + first,
                    }),
                ]
            }
            SeqState::Done | SeqState::Dead => Vec::new(),
        }
    }
}

/// Procedure whose valid outputs encode the answers of a query.
#[derive(Debug, Clone)]
pub struct GhwcqProgram {
    ctx: Context,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum GhwcqState {
    Start,
    Guess {
        node: usize,
        ctx: Vec<String>,
    },
    Emit {
        node: usize,
        choice: usize,
        index: usize,
    },
    Split {
        node: usize,
        choice: usize,
    },
    Done,
    Dead,
}

/// Builds the answer program; the decomposition must cover the answer
/// variables.
pub fn ghwcq_program(d: &Database, q: &ConjunctiveQuery, h: &Ghd) -> Result<GhwcqProgram> {
    if !h.covers_answer_vars() && !q.is_boolean() {
        return Err(Error::Invalid(
            "answer enumeration needs a decomposition covering the answer variables".to_string(),
        ));
    }
    Ok(GhwcqProgram {
        ctx: Context::new(d, q, h, None)?,
    })
}

impl GhwcqProgram {
    fn label(&self, node: usize, choice: usize, index: usize) -> Symbol {
        match self.ctx.answer_vars[node].get(index) {
            Some(x) => Symbol::Answer {
                var: x.clone(),
                value: self.ctx.choices[node][choice].binding[x].clone(),
            },
            None => Symbol::NodeMarker(node),
        }
    }

    fn emit(&self, node: usize, choice: usize, index: usize) -> Configuration<GhwcqState> {
        Configuration::labeled(
            GhwcqState::Emit {
                node,
                choice,
                index,
            },
            self.label(node, choice, index),
        )
    }
}

impl BranchingProgram for GhwcqProgram {
    type State = GhwcqState;

    fn initial(&self) -> Configuration<GhwcqState> {
        Configuration::labeled(GhwcqState::Start, Symbol::Root)
    }

    fn expand(&self, c: &Configuration<GhwcqState>) -> Vec<Configuration<GhwcqState>> {
        match &c.state {
            GhwcqState::Start => vec![Configuration::existential(GhwcqState::Guess {
                node: self.ctx.root,
                ctx: Vec::new(),
            })],
            GhwcqState::Guess { node, ctx } => {
                let m = self.ctx.matching(*node, ctx);
                if m.is_empty() {
                    return vec![Configuration::reject(GhwcqState::Dead)];
                }
                m.into_iter().map(|ch| self.emit(*node, ch, 0)).collect()
            }
            &GhwcqState::Emit {
                node,
                choice,
                index,
            } => {
                let labels = self.ctx.answer_vars[node].len().max(1);
                if index + 1 < labels {
                    vec![self.emit(node, choice, index + 1)]
                } else if self.ctx.children[node].is_empty() {
                    vec![Configuration::accept(GhwcqState::Done)]
                } else {
                    vec![Configuration::universal(GhwcqState::Split { node, choice })]
                }
            }
            &GhwcqState::Split { node, choice } => self.ctx.children[node]
                .iter()
                .map(|&u| {
                    Configuration::existential(GhwcqState::Guess {
                        node: u,
                        ctx: self.ctx.project(u, node, choice),
                    })
                })
                .collect(),
            GhwcqState::Done | GhwcqState::Dead => Vec::new(),
        }
    }
}
