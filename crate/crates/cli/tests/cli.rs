use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const CENSUS: &str = "S,N,M\n{185|785},Smith,{1|2}\n{185|186},Brown,{1|2|3|4}\n";
const KEY: &str = "# social security numbers are unique\nFORALL t, u IN R (t != u) : t.S = u.S -> FALSE\n";

fn wsdb(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wsdb")).current_dir(dir).args(args).output().unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = wsdb(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn census(dir: &Path) {
    fs::write(dir.join("R.csv"), CENSUS).unwrap();
    fs::write(dir.join("key.txt"), KEY).unwrap();
    ok(dir, &["load", "R.csv"]);
}

#[test]
fn load_chase_and_ask() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    census(dir);
    assert_eq!(ok(dir, &["stats"]), "n_comp,n_comp_gt1,c_rows,template_rows\n4,0,10,2\n");
    assert_eq!(ok(dir, &["worlds"]).matches("world ").count(), 32);
    ok(dir, &["chase", "key.txt"]);
    assert_eq!(ok(dir, &["worlds"]).matches("world ").count(), 24);
    assert_eq!(ok(dir, &["stats"]).lines().nth(1), Some("3,1,12,2"));

    let possible = ok(dir, &["possible", "project(R, [S])"]);
    let lines: Vec<&str> = possible.lines().collect();
    assert_eq!(lines[0], "S,p");
    assert_eq!(lines.len(), 4);
    let p: f64 = ok(dir, &["conf", "project(R, [S])", "(185)"]).trim().parse().unwrap();
    assert!((p - 2.0 / 3.0).abs() < 1e-12);
    let q: f64 = ok(dir, &["query", "conf(project(R, [S]), (185))"]).trim().parse().unwrap();
    assert_eq!(p, q);
}

#[test]
fn query_adds_a_relation() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    census(dir);
    let line = ok(dir, &["query", "select(R, M = 1)"]);
    let name = line.split(':').next().unwrap();
    assert!(dir.join("db").join(format!("{name}.template.csv")).exists());
    assert_eq!(ok(dir, &["stats", name]).lines().nth(1).unwrap().split(',').last(), Some("2"));
}

#[test]
fn save_and_noise_write_elsewhere() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    fs::write(dir.join("T.csv"), (0..200).fold("A,B\n".to_string(), |s, i| s + &format!("{},{}\n", i % 7, i % 5)))
        .unwrap();
    ok(dir, &["load", "T.csv"]);
    ok(dir, &["save", "--out", "copy"]);
    assert_eq!(fs::read(dir.join("db/T.template.csv")).unwrap(), fs::read(dir.join("copy/T.template.csv")).unwrap());
    for d in ["n1", "n2"] {
        ok(dir, &["noise", "--density", "0.1", "--seed", "5", "--out", d]);
    }
    let n1 = fs::read(dir.join("n1/c.csv")).unwrap();
    assert_eq!(n1, fs::read(dir.join("n2/c.csv")).unwrap());
    assert!(n1.len() > 100);
    assert_eq!(ok(dir, &["stats"]).lines().nth(1), Some("0,0,0,200"));
}

#[test]
fn bench_report() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    fs::write(
        dir.join("b.toml"),
        "sizes = [200]\ndensities = [0.01]\nseed = 1\nrepeats = 1\nqueries = [\"Q1\", \"Q2\"]\n",
    )
    .unwrap();
    let report = ok(dir, &["bench", "b.toml"]);
    let lines: Vec<&str> = report.lines().collect();
    assert_eq!(lines[0], "size,density,query,ms,n_comp,n_comp_gt1,c_rows,template_rows");
    assert_eq!(lines.len(), 1 + 2 * 2);
    assert!(lines.iter().any(|l| l.starts_with("200,0,Q1,")));
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    assert_eq!(wsdb(dir, &["frob"]).status.code(), Some(1));
    assert_eq!(wsdb(dir, &["--help"]).status.code(), Some(0));
    assert_eq!(wsdb(dir, &["stats"]).status.code(), Some(2));
    census(dir);
    assert_eq!(wsdb(dir, &["possible", "select(R,)"]).status.code(), Some(2));
    assert_eq!(wsdb(dir, &["worlds", "--cap", "5"]).status.code(), Some(3));
    fs::write(dir.join("smith.txt"), "FORALL t IN R : t.N = 'Smith' -> FALSE\n").unwrap();
    let out = wsdb(dir, &["chase", "smith.txt"]);
    assert_eq!(out.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&out.stderr).contains("inconsistent"));
    assert_eq!(ok(dir, &["worlds"]).matches("world ").count(), 32);
}
