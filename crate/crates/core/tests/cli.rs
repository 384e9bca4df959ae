use std::path::Path;
use std::process::{Command, Output};

use kmip::cli::{APPROX_HEADER, BENCH_HEADER, KSWEEP_HEADER, OOM_MARKER};
use kmip::gps::LOG_HEADER;
use kmip::graph::Graph;

fn kmip(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kmip")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = kmip(args);
    assert_eq!(out.status.code(), Some(0), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

/// Header and records of a CSV file or buffer.
fn read_csv(text: &[u8]) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_reader(text);
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r.records().map(|rec| rec.unwrap().iter().map(String::from).collect()).collect();
    (header, rows)
}

fn num(s: &str) -> f64 {
    s.parse().unwrap_or_else(|_| panic!("not a number: {s}"))
}

fn write_pair(dir: &Path) -> (String, String) {
    let a = dir.join("two_c3.json");
    let b = dir.join("c6.json");
    Graph::cycle(3).disjoint_union(&Graph::cycle(3)).unwrap().save(&a).unwrap();
    Graph::cycle(6).save(&b).unwrap();
    (a.display().to_string(), b.display().to_string())
}

#[test]
fn bench_schema_and_values() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("bench.csv");
    let o = out.to_str().unwrap();
    ok(&["--threads", "1", "--out", o, "bench", "--n", "64,128", "--repeats", "2"]);
    let (header, rows) = read_csv(&std::fs::read(&out).unwrap());
    assert_eq!(header, BENCH_HEADER);
    assert_eq!(rows.len(), 2 * 2 * 3);
    for r in &rows {
        for c in 5..11 {
            assert!(num(&r[c]) >= 0.0);
        }
        assert!(num(&r[11]) > 0.0);
        assert_eq!(r[12], "2");
        if r[4] == "inference" {
            assert_eq!(num(&r[7]), 0.0);
        } else {
            assert!(num(&r[7]) > 0.0);
        }
    }
    let meta: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("bench.meta.json")).unwrap()).unwrap();
    assert_eq!(meta["threads"], 1);
}

#[test]
fn bench_reports_simulated_oom() {
    let out = ok(&["bench", "--n", "131072", "--methods", "full", "--settings", "inference"]);
    let (_, rows) = read_csv(&out.stdout);
    assert_eq!(rows.len(), 1);
    assert!(rows[0][5..11].iter().all(|c| c == OOM_MARKER));
    let n = 131072f64;
    assert!(num(&rows[0][11]) >= n * n * 8.0);
}

#[test]
fn approx_schema_and_limits() {
    let out = ok(&["--seed", "3", "approx", "--n", "100", "--instances", "2"]);
    let (header, rows) = read_csv(&out.stdout);
    assert_eq!(header, APPROX_HEADER);
    let ks: Vec<usize> = rows.iter().map(|r| r[0].parse().unwrap()).collect();
    assert_eq!(ks, vec![1, 2, 4, 8, 16, 32, 64, 100]);
    let last = rows.last().unwrap();
    assert!(num(&last[1]) < 1e-12);
    assert_eq!(num(&last[3]), 1.0);
    assert_eq!(num(&last[4]), 0.0);
    let again = ok(&["--seed", "3", "approx", "--n", "100", "--instances", "2"]);
    assert_eq!(out.stdout, again.stdout);
}

#[test]
fn gen_is_deterministic_with_knn_in_degree() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for d in [&a, &b] {
        ok(&["--seed", "9", "--out", d.to_str().unwrap(), "gen", "--n", "60", "--num-graphs", "3", "--knn-k", "4", "--kind", "rings"]);
    }
    for i in 0..3 {
        let name = format!("graph_{i:03}.json");
        let (ta, tb) = (std::fs::read(a.join(&name)).unwrap(), std::fs::read(b.join(&name)).unwrap());
        assert_eq!(ta, tb);
        let g = Graph::load(a.join(&name)).unwrap();
        let mut deg = vec![0; g.num_nodes()];
        for &(_, d) in g.edges() {
            deg[d] += 1;
        }
        assert!(deg.iter().all(|&d| d == 4));
        assert!(g.node_labels().unwrap().iter().all(|&l| l < 4));
    }
}

#[test]
fn train_and_ksweep_logs() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    ok(&["--out", data.to_str().unwrap(), "gen", "--n", "40", "--num-graphs", "5", "--knn-k", "3"]);
    let d = data.to_str().unwrap();

    let log = dir.path().join("empty.csv");
    ok(&["--out", log.to_str().unwrap(), "train", "--data", d, "--epochs", "0"]);
    let text = std::fs::read_to_string(&log).unwrap();
    assert_eq!(text.trim_end(), LOG_HEADER.join(","));

    let cfg = dir.path().join("cfg.txt");
    std::fs::write(&cfg, "layers = 1\nhidden = 4\n# comment\nk = 3\n").unwrap();
    let log = dir.path().join("log.csv");
    ok(&["--out", log.to_str().unwrap(), "train", "--data", d, "--config", cfg.to_str().unwrap(), "--epochs", "2", "--set", "attention=full"]);
    let (header, rows) = read_csv(&std::fs::read(&log).unwrap());
    assert_eq!(header, LOG_HEADER);
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| num(&r[2]) >= 0.0 && num(&r[4]) > 0.0));

    let out = ok(&["ksweep", "--data", d, "--k-list", "1,4", "--seeds", "0", "--epochs", "1", "--set", "layers=1"]);
    let (header, rows) = read_csv(&out.stdout);
    assert_eq!(header, KSWEEP_HEADER);
    assert_eq!(rows.len(), 2);
    assert_eq!((rows[0][0].as_str(), rows[1][0].as_str()), ("1", "4"));
}

#[test]
fn wl_reports() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = write_pair(dir.path());
    let v: serde_json::Value = serde_json::from_slice(&ok(&["wl", &a, &b, "--scheme", "constant"]).stdout).unwrap();
    assert_eq!(v["distinguished"], false);
    let v: serde_json::Value = serde_json::from_slice(&ok(&["wl", &a, &b, "--scheme", "lap_pe"]).stdout).unwrap();
    assert_eq!(v["distinguished"], true);
    assert_eq!(v["iteration"], 0);
    let v: serde_json::Value = serde_json::from_slice(&ok(&["wl", &a, &b, "--scheme", "wl1"]).stdout).unwrap();
    assert_eq!(v["distinguished"], false);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = write_pair(dir.path());
    assert_eq!(kmip(&["wl", &a, &b, "--scheme", "nope"]).status.code(), Some(2));
    assert_eq!(kmip(&["wl", &a, "/no/such/file.json"]).status.code(), Some(2));
    assert_eq!(kmip(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(kmip(&["bench", "--n", "0"]).status.code(), Some(2));
    assert_eq!(kmip(&["bench", "--methods", "fast"]).status.code(), Some(2));
    assert_eq!(kmip(&["gen", "--n", "10"]).status.code(), Some(2));
    assert_eq!(kmip(&["--help"]).status.code(), Some(0));

    let data = dir.path().join("data");
    ok(&["--out", data.to_str().unwrap(), "gen", "--n", "20", "--num-graphs", "2", "--knn-k", "3"]);
    let d = data.to_str().unwrap();
    assert_eq!(kmip(&["train", "--data", d, "--set", "heads=3"]).status.code(), Some(2));
    assert_eq!(kmip(&["train", "--data", d, "--set", "colour=blue"]).status.code(), Some(2));
    // a diverging run is an internal failure, not a usage error
    let o = kmip(&["train", "--data", d, "--epochs", "5", "--set", "lr=1e300", "--set", "warmup_epochs=0"]);
    assert_eq!(o.status.code(), Some(1), "{}", String::from_utf8_lossy(&o.stderr));
}
