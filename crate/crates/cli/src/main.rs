//! `ocqa`: relative frequencies of query answers over operational repairs.

mod input;
mod selftest;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use num_bigint::BigUint;

use ocqa_core::ghw::{
    gyo_join_tree, is_2_uniform, is_strongly_complete, make_complete, normal_form, validate,
};
use ocqa_core::nfta::{count_by_size, enumerate_accepted, LabeledTree, Nfta};
use ocqa_core::opsem::{denominator, rf, Engine, Options, Semantics};
use ocqa_core::pipeline::{run, PipelineRun, ProgramKind};
use ocqa_core::Error;

use input::{GuardArgs, InstanceArgs};

#[derive(Parser)]
#[command(
    name = "ocqa",
    version,
    about = "Operational consistent query answering under primary keys"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Relative frequency of a tuple as an exact ratio and a decimal.
    Rf(JobArgs),
    /// Numerator and denominator of the relative frequency.
    Count(JobArgs),
    /// Build, count or enumerate the tree automaton of an instance.
    Nfta {
        #[command(subcommand)]
        action: NftaAction,
    },
    /// Decomposition utilities.
    Ghd {
        #[command(subcommand)]
        action: GhdAction,
    },
    /// Write reduction instances.
    Gen {
        #[command(subcommand)]
        action: GenAction,
    },
    /// Cross-check every pipeline against its enumeration oracle on random instances.
    Selftest {
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        instances: u64,
        #[command(flatten)]
        guards: GuardArgs,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SemanticsArg {
    Repairs,
    Sequences,
    Subset,
    Ur,
    Answers,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum EngineArg {
    Brute,
    Nfta,
}

#[derive(Args)]
struct JobArgs {
    #[command(flatten)]
    instance: InstanceArgs,
    /// Candidate answer, comma separated; empty for a Boolean query.
    #[arg(long, default_value = "")]
    tuple: String,
    #[arg(long, value_enum, default_value = "repairs")]
    semantics: SemanticsArg,
    #[arg(long, value_enum, default_value = "nfta")]
    engine: EngineArg,
    /// Emit interleaving identifiers bit by bit in the sequence procedure.
    #[arg(long)]
    bitpath: bool,
    /// Artifacts to write; the kind follows the file name
    /// (`*nfta.json`, `*nfta.dot`, `*trees.json`, `*trees.dot`, `*dag.dot`).
    #[arg(long)]
    emit: Vec<PathBuf>,
    #[command(flatten)]
    guards: GuardArgs,
}

#[derive(Subcommand)]
enum NftaAction {
    /// Write the automaton as canonical JSON.
    Build {
        #[command(flatten)]
        job: JobArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Per-size table of accepted trees and their total.
    Count {
        #[command(flatten)]
        source: NftaSource,
    },
    /// Write the accepted trees as JSON or DOT (by extension).
    Enumerate {
        #[command(flatten)]
        source: NftaSource,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct NftaSource {
    /// Read an automaton from JSON instead of building one.
    #[arg(long, requires = "max_size")]
    nfta: Option<PathBuf>,
    /// Largest tree size (defaults to the instance's output bound).
    #[arg(long)]
    max_size: Option<usize>,
    #[command(flatten)]
    job: JobArgs,
}

#[derive(Subcommand)]
enum GhdAction {
    /// Check a decomposition and print its width.
    Validate {
        #[arg(long)]
        query: PathBuf,
        #[arg(long)]
        ghd: PathBuf,
    },
    /// Add covering vertices for atoms that lack one.
    Complete {
        #[arg(long)]
        query: PathBuf,
        #[arg(long)]
        ghd: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Normal form of an instance; writes db.txt, query.txt and ghd.json.
    Normalize {
        #[arg(long)]
        db: PathBuf,
        #[arg(long)]
        query: PathBuf,
        #[arg(long)]
        ghd: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Join tree of an acyclic query.
    Jointree {
        #[arg(long)]
        query: PathBuf,
        /// Keep answer variables in the bags.
        #[arg(long)]
        answers: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum GenAction {
    /// H-colouring instance of a connected graph.
    Hcoloring {
        #[command(flatten)]
        graph: GraphArg,
        #[arg(long, default_value_t = 1)]
        k: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Monotone 2-SAT instance, e.g. `--formula "x|y,y|z"`.
    Mon2sat {
        #[arg(long)]
        formula: String,
        #[arg(long, default_value_t = 1)]
        k: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// 3-colourability instance.
    #[command(name = "3col")]
    ThreeCol {
        #[command(flatten)]
        graph: GraphArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct GraphArg {
    /// Graph as `N: u-v u-v ...` over vertices 0..N.
    #[arg(long)]
    graph: Option<String>,
    /// The single-edge graph.
    #[arg(long)]
    edge: bool,
    /// The triangle.
    #[arg(long)]
    triangle: bool,
}

impl GraphArg {
    fn resolve(&self) -> anyhow::Result<ocqa_core::gen::Graph> {
        use ocqa_core::gen::Graph;
        Ok(match (&self.graph, self.edge, self.triangle) {
            (Some(text), _, _) => Graph::parse(text)?,
            (None, true, _) => Graph::edge(),
            _ => Graph::triangle(),
        })
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

/// 3 for exceeded guards, 2 for invalid input, 1 otherwise.
fn exit_code(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if let Some(err) = cause.downcast_ref::<Error>() {
            return match err {
                Error::Guard { .. } => 3,
                Error::Internal(_) => 1,
                _ => 2,
            };
        }
        if cause.downcast_ref::<input::InputError>().is_some()
            || cause.downcast_ref::<ocqa_core::ghw::GhdError>().is_some()
            || cause
                .downcast_ref::<ocqa_core::model::ModelError>()
                .is_some()
            || cause
                .downcast_ref::<ocqa_core::cqeval::QueryError>()
                .is_some()
            || cause.downcast_ref::<std::io::Error>().is_some()
        {
            return 2;
        }
    }
    1
}

fn dispatch(command: Command) -> anyhow::Result<ExitCode> {
    match command {
        Command::Rf(job) => cmd_rf(&job),
        Command::Count(job) => cmd_count(&job),
        Command::Nfta { action } => cmd_nfta(action),
        Command::Ghd { action } => cmd_ghd(action),
        Command::Gen { action } => cmd_gen(action),
        Command::Selftest {
            seed,
            instances,
            guards,
        } => selftest::report(seed, instances, guards.resolve()?),
    }
}

fn options(job: &JobArgs) -> anyhow::Result<Options> {
    Ok(Options {
        guards: job.guards.resolve()?,
        bitpath: job.bitpath,
        ..Options::default()
    })
}

fn semantics(job: &JobArgs) -> Option<Semantics> {
    match job.semantics {
        SemanticsArg::Repairs => Some(Semantics::Repairs),
        SemanticsArg::Sequences => Some(Semantics::Sequences),
        SemanticsArg::Subset => Some(Semantics::Subset),
        SemanticsArg::Ur => Some(Semantics::Ur),
        SemanticsArg::Answers => None,
    }
}

fn kind(job: &JobArgs) -> ProgramKind {
    semantics(job).map_or(ProgramKind::Answers, ProgramKind::from)
}

fn parse_tuple(text: &str) -> Vec<String> {
    if text.trim().is_empty() {
        Vec::new()
    } else {
        text.split(',').map(|s| s.trim().to_string()).collect()
    }
}

/// Numerator and denominator of a job, writing any requested artifacts.
fn frequency(job: &JobArgs) -> anyhow::Result<(BigUint, BigUint)> {
    let inst = job.instance.load()?;
    let opts = options(job)?;
    let tuple = parse_tuple(&job.tuple);
    if !job.emit.is_empty() && job.engine != EngineArg::Nfta {
        bail!(input::InputError("--emit needs --engine nfta".to_string()));
    }
    let Some(sem) = semantics(job) else {
        let n = match job.engine {
            EngineArg::Nfta => {
                let r = run(&inst, &[], ProgramKind::Answers, &opts)?;
                emit(&job.emit, &r, &opts)?;
                r.count
            }
            EngineArg::Brute => {
                BigUint::from(ocqa_core::cqeval::answers(&inst.query, &inst.db)?.len())
            }
        };
        return Ok((n, BigUint::from(1u32)));
    };
    let freq = match job.engine {
        EngineArg::Brute => rf(&inst, &tuple, sem, Engine::Brute, &opts)?,
        EngineArg::Nfta => {
            let r = rf(&inst, &tuple, sem, Engine::Nfta, &opts)?;
            if !job.emit.is_empty() {
                let run = run(&inst, &tuple, sem.into(), &opts)?;
                emit(&job.emit, &run, &opts)?;
            }
            r
        }
    };
    debug_assert_eq!(freq.denominator, denominator(&inst.db, &inst.keys, sem));
    Ok((freq.numerator, freq.denominator))
}

fn cmd_rf(job: &JobArgs) -> anyhow::Result<ExitCode> {
    if job.semantics == SemanticsArg::Answers {
        bail!(input::InputError(
            "answers has no relative frequency; use `ocqa count --semantics answers`".to_string()
        ));
    }
    let (num, den) = frequency(job)?;
    let f = ocqa_core::opsem::Frequency::new(num, den);
    println!("numerator   {}", f.numerator);
    println!("denominator {}", f.denominator);
    println!("rf          {f}");
    println!("decimal     {}", f.decimal(12));
    Ok(ExitCode::SUCCESS)
}

fn cmd_count(job: &JobArgs) -> anyhow::Result<ExitCode> {
    let (num, den) = frequency(job)?;
    if job.semantics == SemanticsArg::Answers {
        println!("answers     {num}");
    } else {
        println!("numerator   {num}");
        println!("denominator {den}");
    }
    Ok(ExitCode::SUCCESS)
}

fn write_or_print(out: Option<&Path>, text: &str) -> anyhow::Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn trees_json(trees: &[LabeledTree]) -> String {
    let values: Vec<serde_json::Value> = trees.iter().map(LabeledTree::to_json_value).collect();
    let mut s = serde_json::to_string_pretty(&values).expect("trees serialize");
    s.push('\n');
    s
}

fn trees_dot(trees: &[LabeledTree]) -> String {
    trees.iter().map(LabeledTree::to_dot).collect()
}

fn emit(targets: &[PathBuf], run: &PipelineRun, opts: &Options) -> anyhow::Result<()> {
    for path in targets {
        let name = path
            .file_name()
            .and_then(|n| n.to_str())
            .unwrap_or_default()
            .to_ascii_lowercase();
        let text = if name.ends_with("nfta.json") {
            run.nfta.to_json()
        } else if name.ends_with("nfta.dot") {
            run.nfta.to_dot()
        } else if name.ends_with("dag.dot") {
            run.dag.to_dot()
        } else if name.ends_with("trees.json") || name.ends_with("trees.dot") {
            let trees: Vec<LabeledTree> =
                enumerate_accepted(&run.nfta, run.size_bound, opts.guards.max_trees)?
                    .into_iter()
                    .collect();
            if name.ends_with(".json") {
                trees_json(&trees)
            } else {
                trees_dot(&trees)
            }
        } else {
            bail!(input::InputError(format!(
                "cannot tell what to emit from {}; use a name ending in nfta.json, nfta.dot, \
                 trees.json, trees.dot or dag.dot",
                path.display()
            )));
        };
        fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

/// The automaton and size bound named by `source`.
fn automaton(source: &NftaSource) -> anyhow::Result<(Nfta, usize, Options)> {
    let opts = options(&source.job)?;
    if let Some(path) = &source.nfta {
        let text = input::read(path)?;
        let a = Nfta::from_json(&text)?;
        let bound = source
            .max_size
            .expect("clap requires --max-size with --nfta");
        return Ok((a, bound, opts));
    }
    let r = build(&source.job, &opts)?;
    Ok((r.nfta, source.max_size.unwrap_or(r.size_bound), opts))
}

fn build(job: &JobArgs, opts: &Options) -> anyhow::Result<PipelineRun> {
    let inst = job.instance.load()?;
    let tuple = parse_tuple(&job.tuple);
    let r = run(&inst, &tuple, kind(job), opts)?;
    emit(&job.emit, &r, opts)?;
    Ok(r)
}

fn cmd_nfta(action: NftaAction) -> anyhow::Result<ExitCode> {
    match action {
        NftaAction::Build { job, out } => {
            let r = build(&job, &options(&job)?)?;
            write_or_print(out.as_deref(), &r.nfta.to_json())?;
        }
        NftaAction::Count { source } => {
            let (a, bound, opts) = automaton(&source)?;
            let table = count_by_size(&a, bound, opts.guards.max_dag_nodes)?;
            println!("size count");
            for (size, n) in table.iter().enumerate().skip(1) {
                println!("{size:>4} {n}");
            }
            println!("total {}", table.iter().sum::<BigUint>());
        }
        NftaAction::Enumerate { source, out } => {
            let (a, bound, opts) = automaton(&source)?;
            let trees: Vec<LabeledTree> = enumerate_accepted(&a, bound, opts.guards.max_trees)?
                .into_iter()
                .collect();
            let dot = out
                .as_deref()
                .and_then(Path::extension)
                .is_some_and(|e| e.eq_ignore_ascii_case("dot"));
            let text = if dot {
                trees_dot(&trees)
            } else {
                trees_json(&trees)
            };
            match out {
                Some(p) => {
                    fs::write(&p, text).with_context(|| format!("writing {}", p.display()))?;
                    println!("trees {}", trees.len());
                }
                None => print!("{text}"),
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_ghd(action: GhdAction) -> anyhow::Result<ExitCode> {
    match action {
        GhdAction::Validate { query, ghd } => {
            let q = input::query(&query)?;
            let h = input::ghd(&ghd)?;
            let report = validate(&h, &q)?;
            println!("valid");
            println!("width {}", report.width);
            println!("nodes {}", report.nodes);
        }
        GhdAction::Complete { query, ghd, out } => {
            let q = input::query(&query)?;
            let h = make_complete(&input::ghd(&ghd)?, &q)?;
            write_or_print(out.as_deref(), &format!("{}\n", h.to_json()))?;
        }
        GhdAction::Normalize {
            db,
            query,
            ghd,
            out,
        } => {
            let d = input::database(&db)?;
            let q = input::query(&query)?;
            let h = input::ghd(&ghd)?;
            let k = validate(&h, &q)?.width;
            let nf = normal_form(&d, &q, &make_complete(&h, &q)?)?;
            let report = validate(&nf.ghd, &nf.query)?;
            let complete = is_strongly_complete(&nf.ghd, &nf.query);
            let uniform = is_2_uniform(&nf.ghd);
            println!("strongly complete {complete}");
            println!("2-uniform {uniform}");
            println!("width {} (input {k})", report.width);
            if let Some(dir) = out {
                fs::create_dir_all(&dir)?;
                fs::write(dir.join("db.txt"), nf.db.to_string())?;
                fs::write(dir.join("query.txt"), format!("{}\n", nf.query))?;
                fs::write(dir.join("ghd.json"), format!("{}\n", nf.ghd.to_json()))?;
            }
            if !(complete && uniform && report.width <= k + 1) {
                return Err(Error::Internal("normal form checks failed".to_string()).into());
            }
        }
        GhdAction::Jointree {
            query,
            answers,
            out,
        } => {
            let q = input::query(&query)?;
            let tree = gyo_join_tree(&q, answers)?;
            write_or_print(out.as_deref(), &format!("{}\n", tree.to_json()))?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn write_generated(gen: &ocqa_core::gen::Generated, out: Option<&Path>) -> anyhow::Result<()> {
    let ghd = gen.ghd.as_ref().map(|h| format!("{}\n", h.to_json()));
    match out {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            fs::write(dir.join("db.txt"), gen.db.to_string())?;
            fs::write(dir.join("keys.txt"), gen.keys.to_string())?;
            fs::write(dir.join("query.txt"), format!("{}\n", gen.query))?;
            if let Some(ghd) = &ghd {
                fs::write(dir.join("ghd.json"), ghd)?;
            }
            println!("wrote {}", dir.display());
        }
        None => {
            println!("# db\n{}", gen.db);
            println!("# keys\n{}", gen.keys);
            println!("# query\n{}\n", gen.query);
            if let Some(ghd) = &ghd {
                print!("# ghd\n{ghd}");
            }
        }
    }
    Ok(())
}

fn cmd_gen(action: GenAction) -> anyhow::Result<ExitCode> {
    use ocqa_core::gen::{gen_3col, gen_hcoloring, gen_mon2sat, Mon2Cnf};
    match action {
        GenAction::Hcoloring { graph, k, out } => {
            write_generated(&gen_hcoloring(&graph.resolve()?, k)?, out.as_deref())?
        }
        GenAction::Mon2sat { formula, k, out } => {
            write_generated(&gen_mon2sat(&Mon2Cnf::parse(&formula)?, k)?, out.as_deref())?
        }
        GenAction::ThreeCol { graph, out } => {
            write_generated(&gen_3col(&graph.resolve()?)?, out.as_deref())?
        }
    }
    Ok(ExitCode::SUCCESS)
}
