use std::collections::HashMap;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bnpp(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bnpp"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("run bnpp")
}

fn ok(args: &[&str], dir: &Path) -> String {
    let out = bnpp(args, dir);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(args: &[&str], dir: &Path) -> i32 {
    bnpp(args, dir).status.code().expect("exit code")
}

fn json(text: &str) -> serde_json::Value {
    serde_json::from_str(text).unwrap()
}

const CHAIN: &str = r#"{"nodes":["A","B","C"],"edges":[["A","B"],["B","C"]]}"#;
const EMPTY: &str = r#"{"nodes":["A","B","C"],"edges":[]}"#;

fn network(dir: &Path, nodes: usize, seed: u64) {
    ok(
        &["generate-network", "--nodes", &nodes.to_string(), "--seed", &seed.to_string(), "--out", "net.json"],
        dir,
    );
}

#[test]
fn simulate_is_seeded() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    network(d, 6, 3);
    for (seed, out) in [("5", "a.csv"), ("5", "b.csv"), ("6", "c.csv")] {
        ok(&["simulate", "--network", "net.json", "--rows", "300", "--seed", seed, "--out", out], d);
    }
    let read = |f: &str| fs::read_to_string(d.join(f)).unwrap();
    assert_eq!(read("a.csv"), read("b.csv"));
    assert_ne!(read("a.csv"), read("c.csv"));
    assert_eq!(read("a.csv").lines().count(), 301);
    assert!(d.join("a.arities.json").exists());
}

#[test]
fn zero_rows_gives_header_only() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    network(d, 4, 0);
    ok(&["simulate", "--network", "net.json", "--rows", "0", "--out", "z.csv"], d);
    let text = fs::read_to_string(d.join("z.csv")).unwrap();
    assert_eq!(text.lines().collect::<Vec<_>>(), ["V0,V1,V2,V3"]);
}

#[test]
fn sample_dags_is_uniform_on_three_nodes() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    ok(&["sample-dags", "--nodes", "3", "--count", "100000", "--seed", "11", "--out", "s.jsonl"], d);
    let mut counts: HashMap<String, u32> = HashMap::new();
    for line in fs::read_to_string(d.join("s.jsonl")).unwrap().lines() {
        *counts.entry(line.to_string()).or_default() += 1;
    }
    assert_eq!(counts.len(), 25);
    for (g, c) in counts {
        assert!((3700..=4300).contains(&c), "{g}: {c}");
    }
}

#[test]
fn evaluate_counts_differences() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    fs::write(d.join("chain.json"), CHAIN).unwrap();
    fs::write(d.join("empty.json"), EMPTY).unwrap();
    let same = json(&ok(&["evaluate", "--graph", "chain.json", "--truth", "chain.json"], d));
    assert_eq!(same["shd"], 0);
    let e = json(&ok(&["evaluate", "--graph", "empty.json", "--truth", "chain.json"], d));
    assert_eq!(e["shd"], 2);
    assert_eq!(e["missing"], 2);
    assert_eq!(e["extra"], 0);
    fs::write(d.join("other.json"), r#"{"nodes":["A","B","D"],"edges":[]}"#).unwrap();
    assert_eq!(code(&["evaluate", "--graph", "other.json", "--truth", "chain.json"], d), 3);
}

#[test]
fn evaluate_reads_network_truth() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    network(d, 5, 1);
    let net = json(&fs::read_to_string(d.join("net.json")).unwrap());
    let mut edges = Vec::new();
    for v in net["variables"].as_array().unwrap() {
        for p in v["parents"].as_array().unwrap() {
            edges.push(serde_json::json!([p, v["name"]]));
        }
    }
    let names: Vec<_> = net["variables"].as_array().unwrap().iter().map(|v| v["name"].clone()).collect();
    let graph = serde_json::json!({"nodes": names, "edges": edges});
    fs::write(d.join("g.json"), graph.to_string()).unwrap();
    let e = json(&ok(&["evaluate", "--graph", "g.json", "--truth", "net.json"], d));
    assert_eq!(e["shd"], 0);
}

fn learn_setup(d: &Path) {
    network(d, 5, 2);
    ok(&["simulate", "--network", "net.json", "--rows", "500", "--seed", "1", "--out", "d.csv"], d);
    fs::write(
        d.join("b.json"),
        r#"{"beliefs":[{"from":"V0","to":"V1","statement":"causes","p":0.9},
            {"from":"V2","to":"V3","dist":{"forward":0.1,"backward":0.7,"confounded":0.1,"none":0.1}}]}"#,
    )
    .unwrap();
}

#[test]
fn learn_writes_outputs_deterministically() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    learn_setup(d);
    for out in ["o1", "o2"] {
        ok(
            &["learn", "--data", "d.csv", "--beliefs", "b.json", "--samples", "20000", "--seed", "4", "--operator", "swap", "--out", out],
            d,
        );
    }
    for f in ["graph.json", "pdag.json", "trace.jsonl", "prior.json", "provenance.json"] {
        let a = fs::read_to_string(d.join("o1").join(f)).unwrap();
        let b = fs::read_to_string(d.join("o2").join(f)).unwrap();
        assert_eq!(a, b, "{f}");
    }
    let trace = fs::read_to_string(d.join("o1/trace.jsonl")).unwrap();
    let mut last = f64::NEG_INFINITY;
    for line in trace.lines() {
        let t = json(line);
        let total = t["data_score"].as_f64().unwrap() + t["prior_score"].as_f64().unwrap();
        assert!(total >= last);
        last = total;
    }
}

#[test]
fn uniform_prior_ignores_beliefs() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    learn_setup(d);
    fs::write(d.join("other.json"), r#"{"beliefs":[{"from":"V4","to":"V0","statement":"causes","p":0.99}]}"#).unwrap();
    ok(&["learn", "--data", "d.csv", "--uniform-prior", "--beliefs", "b.json", "--out", "u1"], d);
    ok(&["learn", "--data", "d.csv", "--uniform-prior", "--beliefs", "other.json", "--out", "u2"], d);
    ok(&["learn", "--data", "d.csv", "--out", "u3"], d);
    let g = |o: &str| fs::read_to_string(d.join(o).join("graph.json")).unwrap();
    assert_eq!(g("u1"), g("u2"));
    assert_eq!(g("u1"), g("u3"));
}

#[test]
fn score_matches_learned_trace() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    learn_setup(d);
    let args = ["--data", "d.csv", "--beliefs", "b.json", "--samples", "20000", "--seed", "4"];
    let mut learn = vec!["learn", "--out", "o"];
    learn.extend(args);
    ok(&learn, d);
    let mut score = vec!["score", "--graph", "o/graph.json"];
    score.extend(args);
    let s = json(&ok(&score, d));
    let trace = fs::read_to_string(d.join("o/trace.jsonl")).unwrap();
    let last = json(trace.lines().last().unwrap());
    assert!((s["data_score"].as_f64().unwrap() - last["data_score"].as_f64().unwrap()).abs() < 1e-6);
    assert!((s["prior_score"].as_f64().unwrap() - last["prior_score"].as_f64().unwrap()).abs() < 1e-9);
    assert_eq!(s["configuration"], last["configuration"]);
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    learn_setup(d);
    assert_eq!(code(&["learn", "--data", "missing.csv", "--out", "o"], d), 2);
    assert_eq!(code(&["learn", "--bogus"], d), 2);
    fs::write(d.join("bad.json"), r#"{"beliefs":[{"from":"V0","to":"V1","statement":"causes","p":1.5}]}"#).unwrap();
    assert_eq!(code(&["priors", "--beliefs", "bad.json", "--nodes", "4", "--out", "p"], d), 2);
    fs::write(d.join("far.json"), r#"{"beliefs":[{"from":"V0","to":"Q","statement":"causes","p":0.5}]}"#).unwrap();
    assert_eq!(code(&["learn", "--data", "d.csv", "--beliefs", "far.json", "--out", "o"], d), 3);
    fs::write(d.join("big.json"), CHAIN).unwrap();
    assert_eq!(code(&["score", "--data", "d.csv", "--graph", "big.json", "--uniform-prior"], d), 3);
    assert_eq!(code(&["experiment", "large", "--out", "x"], d), 2);
}

#[test]
fn priors_reports_adjusted_marginals() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    fs::write(
        d.join("t.json"),
        r#"{"beliefs":[
        {"from":"X","to":"Y","dist":{"forward":0.8,"backward":0.132,"confounded":0.028,"none":0.04}},
        {"from":"Y","to":"Z","dist":{"forward":0.9,"backward":0.066,"confounded":0.014,"none":0.02}},
        {"from":"X","to":"Z","dist":{"forward":0.6,"backward":0.264,"confounded":0.056,"none":0.08}}]}"#,
    )
    .unwrap();
    let r = json(&ok(&["priors", "--beliefs", "t.json", "--nodes", "5", "--method", "exact", "--out", "p"], d));
    assert_eq!(r["nodes"], serde_json::json!(["X", "Y", "Z", "V0", "V1"]));
    assert_eq!(r["parts"][0]["coherent"], false);
    let xy = r["variables"][0]["adjusted"][0].as_f64().unwrap();
    assert!((xy - 0.764).abs() < 0.02, "{xy}");
    assert!(d.join("p/prior.json").exists());
    assert!(d.join("p/coherence.json").exists());
}

#[test]
fn experiment_writes_reports() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    ok(&["experiment", "chain", "--reps", "5", "--sizes", "20,40", "--seed", "1", "--out", "e"], d);
    let report = fs::read_to_string(d.join("e/chain_report.csv")).unwrap();
    assert!(report.starts_with("experiment,arm,nodes,size,metric,mean,std,n"));
    assert!(d.join("e/chain_records.csv").exists());
    let prov = json(&fs::read_to_string(d.join("e/chain_provenance.json")).unwrap());
    assert_eq!(prov["seed"], 1);
}

const CHAIN_NET: &str = r#"{"variables":[
{"name":"X","states":["a","b"],"parents":[],"cpt":[[0.3,0.7]]},
{"name":"Y","states":["a","b"],"parents":["X"],"cpt":[[0.9,0.1],[0.2,0.8]]},
{"name":"Z","states":["a","b"],"parents":["Y"],"cpt":[[0.15,0.85],[0.75,0.25]]}]}"#;

#[test]
fn exhaustive_agrees_with_swap_search_on_chain() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    fs::write(d.join("chain.json"), CHAIN_NET).unwrap();
    fs::write(d.join("b.json"), r#"{"beliefs":[{"from":"X","to":"Z","statement":"causes","p":0.9}]}"#).unwrap();
    for seed in 0..5 {
        let s = seed.to_string();
        ok(&["simulate", "--network", "chain.json", "--rows", "200", "--seed", &s, "--out", "c.csv"], d);
        let common = ["--data", "c.csv", "--beliefs", "b.json", "--method", "exact"];
        let mut ex = vec!["learn", "--exhaustive", "--out", "ex"];
        ex.extend(common);
        let mut sw = vec!["learn", "--operator", "swap", "--out", "sw"];
        sw.extend(common);
        ok(&ex, d);
        ok(&sw, d);
        let g = |o: &str| fs::read_to_string(d.join(o).join("graph.json")).unwrap();
        assert_eq!(g("ex"), g("sw"), "seed {seed}");
    }
}
