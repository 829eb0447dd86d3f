use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn sivf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sivf"))
        .args(args)
        .env_remove("SIVF_THREADS")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

/// Generates a small dataset once per test directory.
fn small_data(dir: &Path) -> PathBuf {
    let out = dir.join("synth");
    let o = sivf(&[
        "gen",
        "--n",
        "400",
        "--dim",
        "2000",
        "--k-true",
        "8",
        "--avg-nnz",
        "30",
        "--seed",
        "3",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    out.join("data.txt")
}

fn fixture(dir: &Path) -> PathBuf {
    let out = dir.join("fixture");
    let o = sivf(&["gen", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    out.join("data.txt")
}

fn only_subdir(dir: &Path) -> PathBuf {
    let entries: Vec<_> = fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
    assert_eq!(entries.len(), 1, "{entries:?}");
    entries.into_iter().next().unwrap()
}

/// Drops the wall-clock column from a metrics CSV.
fn strip_elapsed_csv(text: &str) -> String {
    let header: Vec<&str> = text.lines().next().unwrap().split(',').collect();
    let col = header.iter().position(|h| *h == "elapsed_ns").unwrap();
    text.lines()
        .map(|l| {
            let mut f: Vec<&str> = l.split(',').collect();
            f.remove(col);
            f.join(",")
        })
        .collect::<Vec<_>>()
        .join("\n")
}

fn strip_elapsed_json(text: &str) -> serde_json::Value {
    fn walk(v: &mut serde_json::Value) {
        match v {
            serde_json::Value::Object(m) => {
                m.remove("elapsed_ns");
                m.remove("metadata");
                m.values_mut().for_each(walk);
            }
            serde_json::Value::Array(a) => a.iter_mut().for_each(walk),
            _ => {}
        }
    }
    let mut v: serde_json::Value = serde_json::from_str(text).unwrap();
    walk(&mut v);
    v
}

#[test]
fn cluster_twice_gives_identical_outputs() {
    let tmp = TempDir::new().unwrap();
    let data = small_data(tmp.path());
    let mut dirs = Vec::new();
    for (run, threads) in [("a", "1"), ("b", "4")] {
        let out = tmp.path().join(run);
        let o = sivf(&[
            "cluster",
            "--data",
            data.to_str().unwrap(),
            "--k",
            "12",
            "--backend",
            "sivf",
            "--seed",
            "7",
            "--threads",
            threads,
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        let stdout = String::from_utf8(o.stdout).unwrap();
        assert!(stdout.contains("iterations=") && stdout.contains("cos_sum=") && stdout.contains("elapsed="));
        dirs.push(only_subdir(&out));
    }
    // run id depends on flags and seed, not on the thread count
    assert_eq!(dirs[0].file_name(), dirs[1].file_name());
    for f in ["assignments.txt", "means.txt"] {
        assert_eq!(fs::read(dirs[0].join(f)).unwrap(), fs::read(dirs[1].join(f)).unwrap(), "{f}");
    }
    let read = |d: &PathBuf, f: &str| fs::read_to_string(d.join(f)).unwrap();
    assert_eq!(strip_elapsed_csv(&read(&dirs[0], "metrics.csv")), strip_elapsed_csv(&read(&dirs[1], "metrics.csv")));
    for f in ["metrics.json", "summary.json"] {
        assert_eq!(strip_elapsed_json(&read(&dirs[0], f)), strip_elapsed_json(&read(&dirs[1], f)), "{f}");
    }
    let assignments = read(&dirs[0], "assignments.txt");
    assert_eq!(assignments.lines().count(), 400);
    assert!(assignments.lines().all(|l| (1..=12).contains(&l.parse::<u32>().unwrap())));
}

#[test]
fn k_zero_is_a_usage_error() {
    let tmp = TempDir::new().unwrap();
    let data = small_data(tmp.path());
    let o = sivf(&["cluster", "--data", data.to_str().unwrap(), "--k", "0"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn k_above_n_is_a_config_error() {
    let tmp = TempDir::new().unwrap();
    let data = small_data(tmp.path());
    let out = tmp.path().join("out");
    let o = sivf(&["cluster", "--data", data.to_str().unwrap(), "--k", "401", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("exceeds"));
}

#[test]
fn malformed_input_is_a_config_error() {
    let tmp = TempDir::new().unwrap();
    let bad = tmp.path().join("bad.txt");
    fs::write(&bad, "0 3:1 2:1\n").unwrap();
    let o = sivf(&["cluster", "--data", bad.to_str().unwrap(), "--k", "1"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("ascending"));
}

#[test]
fn sivf_and_ivf_write_identical_assignments() {
    let tmp = TempDir::new().unwrap();
    let data = small_data(tmp.path());
    let mut files = Vec::new();
    for backend in ["sivf", "ivf", "lloyd"] {
        let out = tmp.path().join(backend);
        let o = sivf(&[
            "cluster",
            "--data",
            data.to_str().unwrap(),
            "--k",
            "15",
            "--backend",
            backend,
            "--seed",
            "5",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(code(&o), 0);
        files.push(fs::read(only_subdir(&out).join("assignments.txt")).unwrap());
    }
    assert_eq!(files[0], files[1]);
    assert_eq!(files[0], files[2]);
}

#[test]
fn bench_grid_rows_and_counter_relations() {
    let tmp = TempDir::new().unwrap();
    let data = small_data(tmp.path());
    let out = tmp.path().join("bench");
    let o = sivf(&[
        "bench",
        "--data",
        data.to_str().unwrap(),
        "--k-list",
        "10,20,50",
        "--backends",
        "ivf,sivf",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let dir = only_subdir(&out);
    let agg = fs::read_to_string(dir.join("aggregate.csv")).unwrap();
    let header: Vec<&str> = agg.lines().next().unwrap().split(',').collect();
    let col = |name: &str| header.iter().position(|h| *h == name).unwrap();
    let rows: Vec<Vec<&str>> = agg.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 6);
    for r in rows.iter().filter(|r| r[0] == "ivf") {
        assert_eq!(r[col("avg_norm_pair_evals")].parse::<f64>().unwrap(), 1.0);
    }
    // one per-iteration CSV per cell
    assert_eq!(fs::read_dir(&dir).unwrap().count(), 7);
}

#[test]
fn bench_sivf_and_cbicp_pair_evals_match() {
    let tmp = TempDir::new().unwrap();
    let data = small_data(tmp.path());
    let out = tmp.path().join("bench");
    let o = sivf(&[
        "bench",
        "--data",
        data.to_str().unwrap(),
        "--k",
        "10",
        "--n-list",
        "200,400",
        "--backends",
        "ivf-cbicp,sivf",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0);
    let agg = fs::read_to_string(only_subdir(&out).join("aggregate.csv")).unwrap();
    let rows: Vec<Vec<String>> =
        agg.lines().skip(1).map(|l| l.split(',').map(str::to_string).collect()).collect();
    assert_eq!(rows.len(), 4);
    for pair in rows.chunks(2) {
        assert_eq!(pair[0][0], "ivf-cbicp");
        assert_eq!(pair[1][0], "sivf");
        assert_eq!(pair[0][9], pair[1][9], "total_pair_evals");
    }
}

#[test]
fn bench_records_failed_cells_and_continues() {
    let tmp = TempDir::new().unwrap();
    let data = small_data(tmp.path());
    let out = tmp.path().join("bench");
    let o = sivf(&[
        "bench",
        "--data",
        data.to_str().unwrap(),
        "--k-list",
        "5,1000",
        "--backends",
        "sivf",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 1);
    let agg = fs::read_to_string(only_subdir(&out).join("aggregate.csv")).unwrap();
    let rows: Vec<&str> = agg.lines().skip(1).collect();
    assert_eq!(rows.len(), 2);
    assert!(rows[0].contains(",ok,"));
    assert!(rows[1].contains("error"));
}

#[test]
fn compare_all_backends_on_fixture() {
    let tmp = TempDir::new().unwrap();
    let data = fixture(tmp.path());
    let o = sivf(&[
        "compare",
        "--data",
        data.to_str().unwrap(),
        "--k",
        "50",
        "--seed",
        "42",
        "--backends",
        "lloyd,lloyd-icp,ivf,ivf-cbicp,sivf",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn compare_reports_corrupted_boundaries() {
    let tmp = TempDir::new().unwrap();
    let data = fixture(tmp.path());
    let o = sivf(&[
        "compare",
        "--data",
        data.to_str().unwrap(),
        "--k",
        "50",
        "--seed",
        "1",
        "--backends",
        "ivf,sivf",
        "--inject-fault",
        "zero-front-boundary",
    ]);
    assert_eq!(code(&o), 1);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("iteration") && err.contains("object"), "{err}");
}

#[test]
fn compare_single_backend_is_a_usage_error() {
    let tmp = TempDir::new().unwrap();
    let data = small_data(tmp.path());
    let o = sivf(&["compare", "--data", data.to_str().unwrap(), "--k", "5", "--backends", "sivf"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn gen_defaults_and_determinism() {
    let tmp = TempDir::new().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    for d in [&a, &b] {
        let o = sivf(&["gen", "--seed", "1", "--avg-nnz", "59", "--out", d.to_str().unwrap()]);
        assert_eq!(code(&o), 0);
    }
    for f in ["data.txt", "labels.txt"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap());
    }
    let text = fs::read_to_string(a.join("data.txt")).unwrap();
    assert_eq!(text.lines().next().unwrap(), "#2000 10000");
    assert_eq!(fs::read_to_string(a.join("labels.txt")).unwrap().lines().count(), 2000);
    let nnz: usize = text.lines().skip(1).map(|l| l.split_whitespace().count() - 1).sum();
    let avg = nnz as f64 / 2000.0;
    assert!((avg - 59.0).abs() <= 5.9, "realized avg nnz {avg}");
}

#[test]
fn gen_invalid_spec_exits_2() {
    let tmp = TempDir::new().unwrap();
    let o = sivf(&["gen", "--k-true", "0", "--out", tmp.path().join("x").to_str().unwrap()]);
    assert_eq!(code(&o), 2);
}

#[test]
fn tfidf_flag_accepts_count_input() {
    let tmp = TempDir::new().unwrap();
    let counts = tmp.path().join("counts.txt");
    fs::write(&counts, "1 1:2 2:1\n1 1:3 3:1\n2 2:4 4:2\n2 3:1 4:5\n").unwrap();
    let out = tmp.path().join("out");
    let o = sivf(&[
        "cluster",
        "--data",
        counts.to_str().unwrap(),
        "--tfidf",
        "--k",
        "2",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
}
