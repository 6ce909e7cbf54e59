use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn ocqa(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ocqa"))
        .args(args)
        .env_remove("OCQA_GUARDS")
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn line<'a>(text: &'a str, key: &str) -> &'a str {
    text.lines()
        .find_map(|l| l.strip_prefix(key))
        .unwrap_or_else(|| panic!("no {key:?} line in {text}"))
        .trim()
}

struct Toy {
    dir: TempDir,
}

impl Toy {
    fn new() -> Self {
        let dir = TempDir::new().unwrap();
        fs::write(dir.path().join("db.txt"), "R(1,a).\nR(1,b).\n").unwrap();
        fs::write(dir.path().join("keys.txt"), "key R = 1;\n").unwrap();
        fs::write(dir.path().join("query.txt"), "Ans() :- R(x,y).\n").unwrap();
        Toy { dir }
    }

    fn path(&self, name: &str) -> String {
        self.dir.path().join(name).to_string_lossy().into_owned()
    }

    fn args(&self) -> Vec<String> {
        vec![
            "--db".into(),
            self.path("db.txt"),
            "--keys".into(),
            self.path("keys.txt"),
            "--query".into(),
            self.path("query.txt"),
        ]
    }
}

fn with<'a>(head: &[&'a str], tail: &'a [String]) -> Vec<&'a str> {
    head.iter()
        .copied()
        .chain(tail.iter().map(String::as_str))
        .collect()
}

fn generated(dir: &Path) -> Vec<String> {
    let mut args = Vec::new();
    for (flag, file) in [
        ("--db", "db.txt"),
        ("--keys", "keys.txt"),
        ("--query", "query.txt"),
        ("--ghd", "ghd.json"),
    ] {
        let p: PathBuf = dir.join(file);
        if p.exists() {
            args.push(flag.to_string());
            args.push(p.to_string_lossy().into_owned());
        }
    }
    args
}

#[test]
fn rf_on_the_toy_instance_is_two_thirds() {
    let toy = Toy::new();
    let args = toy.args();
    for sem in ["repairs", "sequences"] {
        for engine in ["brute", "nfta"] {
            let out = ocqa(&with(
                &["rf", "--semantics", sem, "--engine", engine],
                &args,
            ));
            assert!(
                out.status.success(),
                "{}",
                String::from_utf8_lossy(&out.stderr)
            );
            let text = stdout(&out);
            assert_eq!(line(&text, "rf"), "2/3", "{sem} {engine}");
            assert_eq!(line(&text, "decimal"), "0.666666666667");
        }
    }
}

#[test]
fn count_prints_numerator_and_denominator() {
    let toy = Toy::new();
    let out = ocqa(&with(&["count", "--semantics", "ur"], &toy.args()));
    let text = stdout(&out);
    assert_eq!(line(&text, "numerator"), "3");
    assert_eq!(line(&text, "denominator"), "4");
}

#[test]
fn consistent_entailed_instance_has_frequency_one() {
    let toy = Toy::new();
    fs::write(toy.path("db.txt"), "R(1,a).\nR(2,b).\n").unwrap();
    let out = ocqa(&with(&["rf"], &toy.args()));
    assert_eq!(line(&stdout(&out), "rf"), "1");
}

#[test]
fn generated_instances_give_the_expected_frequencies() {
    let tmp = TempDir::new().unwrap();
    let cases: [(&[&str], &str, &str); 3] = [
        (&["gen", "hcoloring", "--edge"], "nfta", "1/9"),
        (&["gen", "3col", "--triangle"], "brute", "1"),
        (&["gen", "mon2sat", "--formula", "x|y"], "brute", "1/3"),
    ];
    for (i, (gen, engine, want)) in cases.iter().enumerate() {
        let dir = tmp.path().join(i.to_string());
        let mut args: Vec<&str> = gen.to_vec();
        let dir_s = dir.to_string_lossy().into_owned();
        args.extend(["--out", &dir_s]);
        assert!(ocqa(&args).status.success());
        let files = generated(&dir);
        let out = ocqa(&with(&["rf", "--engine", engine], &files));
        assert!(
            out.status.success(),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
        assert_eq!(line(&stdout(&out), "rf"), *want, "{gen:?}");
    }
}

#[test]
fn nfta_build_count_and_enumerate_agree() {
    let toy = Toy::new();
    let a = toy.path("a.nfta.json");
    let out = ocqa(&with(
        &["nfta", "build", "--semantics", "sequences", "--out", &a],
        &toy.args(),
    ));
    assert!(out.status.success());
    let json = fs::read_to_string(&a).unwrap();
    let parsed = ocqa_core::nfta::Nfta::from_json(&json).unwrap();
    assert_eq!(parsed.to_json(), json);

    let out = ocqa(&with(
        &["nfta", "count", "--semantics", "sequences"],
        &toy.args(),
    ));
    let text = stdout(&out);
    let total: u64 = line(&text, "total").parse().unwrap();
    let rows: u64 = text
        .lines()
        .skip(1)
        .filter(|l| !l.starts_with("total"))
        .map(|l| l.split_whitespace().nth(1).unwrap().parse::<u64>().unwrap())
        .sum();
    assert_eq!(rows, total);
    assert_eq!(total, 2);

    let trees = toy.path("trees.json");
    let out = ocqa(&[
        "nfta",
        "enumerate",
        "--nfta",
        &a,
        "--max-size",
        "12",
        "--out",
        &trees,
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert_eq!(line(&stdout(&out), "trees"), total.to_string());
    let listed: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&trees).unwrap()).unwrap();
    assert_eq!(listed.as_array().unwrap().len() as u64, total);
}

#[test]
fn emit_writes_artifacts_named_by_kind() {
    let toy = Toy::new();
    let (n, t, d) = (
        toy.path("x.nfta.json"),
        toy.path("x.trees.dot"),
        toy.path("x.dag.dot"),
    );
    let out = ocqa(&with(
        &["rf", "--emit", &n, "--emit", &t, "--emit", &d],
        &toy.args(),
    ));
    assert!(out.status.success());
    assert!(fs::read_to_string(&n).unwrap().contains("\"transitions\""));
    assert!(fs::read_to_string(&t).unwrap().starts_with("digraph tree"));
    assert!(fs::read_to_string(&d).unwrap().starts_with("digraph"));
    let bad = toy.path("x.txt");
    assert_eq!(
        ocqa(&with(&["rf", "--emit", &bad], &toy.args()))
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn ghd_commands() {
    let tmp = TempDir::new().unwrap();
    let q = tmp.path().join("q.txt");
    fs::write(&q, "Ans() :- P(x,y), S(y,z), T(z,x), U(y,w).\n").unwrap();
    let h = tmp.path().join("h.json");
    let mut g = ocqa_core::ghw::Ghd::new(["x", "y", "z"], [0, 1]);
    g.add_child(0, ["z", "x"], [2]);
    g.add_child(0, ["y", "w"], [3]);
    fs::write(&h, g.to_json()).unwrap();
    let (qs, hs) = (q.to_string_lossy(), h.to_string_lossy());
    let out = ocqa(&["ghd", "validate", "--query", &qs, "--ghd", &hs]);
    assert_eq!(line(&stdout(&out), "width"), "2");

    let db = tmp.path().join("db.txt");
    fs::write(&db, "P(a,b).\nS(b,c).\nT(c,a).\nU(b,d).\n").unwrap();
    let nf = tmp.path().join("nf");
    let out = ocqa(&[
        "ghd",
        "normalize",
        "--db",
        &db.to_string_lossy(),
        "--query",
        &qs,
        "--ghd",
        &hs,
        "--out",
        &nf.to_string_lossy(),
    ]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert_eq!(line(&text, "strongly complete"), "true");
    assert_eq!(line(&text, "2-uniform"), "true");
    assert!(nf.join("ghd.json").exists());

    let out = ocqa(&["ghd", "jointree", "--query", &qs]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn exit_codes_distinguish_bad_input_from_guards() {
    let toy = Toy::new();
    fs::write(toy.path("query.txt"), "Ans() :- R(x,y\n").unwrap();
    assert_eq!(ocqa(&with(&["rf"], &toy.args())).status.code(), Some(2));
    let toy = Toy::new();
    let out = ocqa(&with(
        &["rf", "--engine", "brute", "--guard-facts", "1"],
        &toy.args(),
    ));
    assert_eq!(out.status.code(), Some(3));
    let out = Command::new(env!("CARGO_BIN_EXE_ocqa"))
        .args(with(&["rf"], &toy.args()))
        .env("OCQA_GUARDS", "dag=2")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn selftest_passes_and_is_deterministic() {
    let a = ocqa(&["selftest", "--seed", "1", "--instances", "25"]);
    assert!(a.status.success(), "{}", stdout(&a));
    assert!(!stdout(&a).contains("FAIL"));
    let b = ocqa(&["selftest", "--seed", "1", "--instances", "25"]);
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn repeated_runs_are_byte_identical() {
    let toy = Toy::new();
    let run = || {
        let p = toy.path("r.nfta.json");
        let out = ocqa(&with(
            &["rf", "--semantics", "sequences", "--bitpath", "--emit", &p],
            &toy.args(),
        ));
        (out.stdout, fs::read(&p).unwrap())
    };
    assert_eq!(run(), run());
}
