//! `sivf` command-line front end: clustering runs, sweeps, backend
//! comparison and synthetic data generation.
//!
//! Exit codes: 0 success, 1 comparison or assertion failure, 2 usage or
//! configuration error.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use sha2::{Digest, Sha256};
use sivf::ingest::{save_dataset, save_labels, write_sparse_text};
use sivf::kmeans::Fault;
use sivf::metrics::write_csv;
use sivf::{
    generate_synthetic, load_sparse_text, pair_eval_count, tfidf_normalize, Backend, Engine, Init, IterationMetrics,
    RunConfig, SparseDataset, SynthSpec,
};

#[derive(Parser)]
#[command(name = "sivf", version, about = "Sparse spherical k-means with inverted-file mean sets")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Cluster one dataset with one backend.
    Cluster(ClusterArgs),
    /// Sweep k and/or N over several backends.
    Bench(BenchArgs),
    /// Run backends in lockstep and check they agree.
    Compare(CompareArgs),
    /// Write a synthetic dataset and its generating labels.
    Gen(GenArgs),
}

#[derive(Args, Clone)]
struct RunArgs {
    /// Number of clusters.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    k: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u64).range(1..))]
    max_iter: u64,
    /// random-sample or kmeanspp.
    #[arg(long, default_value = "random-sample", value_parser = parse_init)]
    init: Init,
    /// Worker threads; results do not depend on it.
    #[arg(long, env = "SIVF_THREADS", value_parser = clap::value_parser!(u64).range(1..))]
    threads: Option<u64>,
}

#[derive(Args, Clone)]
struct DataArgs {
    /// Sparse text input (`label t:v ...`, 1-based term ids).
    #[arg(long)]
    data: PathBuf,
    /// Treat values as term counts and apply tf-idf weighting.
    #[arg(long)]
    tfidf: bool,
}

#[derive(Args)]
struct ClusterArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    run: RunArgs,
    #[arg(long, default_value = "sivf", value_parser = parse_backend)]
    backend: Backend,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    /// Dataset; the default synthetic fixture is generated when omitted.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long, requires = "data")]
    tfidf: bool,
    /// Comma-separated cluster counts.
    #[arg(long, value_delimiter = ',', required_unless_present = "k")]
    k_list: Vec<usize>,
    /// Comma-separated object counts (prefixes of the dataset).
    #[arg(long, value_delimiter = ',')]
    n_list: Vec<usize>,
    /// Fixed k for an N sweep.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, value_delimiter = ',', default_value = "ivf,sivf", value_parser = parse_backend)]
    backends: Vec<Backend>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 100)]
    max_iter: usize,
    #[arg(long, default_value = "random-sample", value_parser = parse_init)]
    init: Init,
    #[arg(long, env = "SIVF_THREADS")]
    threads: Option<usize>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    run: RunArgs,
    /// At least two backends, comma separated.
    #[arg(long, value_delimiter = ',', required = true, value_parser = parse_backend)]
    backends: Vec<Backend>,
    #[arg(long, hide = true)]
    inject_fault: Option<String>,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, default_value_t = 2000)]
    n: usize,
    #[arg(long, default_value_t = 10_000)]
    dim: usize,
    #[arg(long, default_value_t = 20)]
    k_true: usize,
    #[arg(long, default_value_t = 59.0)]
    avg_nnz: f64,
    #[arg(long, default_value_t = 1.0)]
    zipf_exponent: f64,
    #[arg(long, default_value_t = 0.8)]
    cluster_separation: f64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Output directory for data.txt and labels.txt.
    #[arg(long, default_value = "synth")]
    out: PathBuf,
}

fn parse_backend(s: &str) -> Result<Backend, String> {
    s.parse().map_err(|e: sivf::Error| e.to_string())
}

fn parse_init(s: &str) -> Result<Init, String> {
    s.parse().map_err(|e: sivf::Error| e.to_string())
}

/// Failure classes mapped onto exit codes.
enum Failure {
    Mismatch(String),
    Config(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Config(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Config(e.into())
    }
}

impl From<sivf::Error> for Failure {
    fn from(e: sivf::Error) -> Self {
        Failure::Config(e.into())
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Cluster(a) => cmd_cluster(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Compare(a) => cmd_compare(a),
        Command::Gen(a) => cmd_gen(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Mismatch(msg)) => {
            eprintln!("{msg}");
            ExitCode::from(1)
        }
        Err(Failure::Config(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn default_threads() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn load(data: &DataArgs) -> anyhow::Result<SparseDataset> {
    let text = load_sparse_text(&data.data).with_context(|| format!("reading {}", data.data.display()))?;
    if data.tfidf {
        let out = tfidf_normalize(&text.into_counts()?)?;
        if !out.removed.is_empty() {
            log::warn!("{} objects dropped after tf-idf weighting", out.removed.len());
        }
        Ok(out.dataset)
    } else {
        Ok(text.into_dataset()?.normalized()?)
    }
}

fn run_config(run: &RunArgs, backend: Backend) -> RunConfig {
    RunConfig {
        max_iter: run.max_iter as usize,
        seed: run.seed,
        threads: run.threads.map_or_else(default_threads, |t| t as usize),
        init: run.init,
        ..RunConfig::new(run.k as usize, backend)
    }
}

/// Short hex digest of a canonical description of a run.
fn run_id(parts: &[String]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p.as_bytes());
        h.update([0]);
    }
    hex::encode(&h.finalize()[..8])
}

fn file_digest(path: &Path) -> anyhow::Result<String> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

#[derive(Serialize)]
struct Summary<'a> {
    run_id: &'a str,
    backend: String,
    k: usize,
    seed: u64,
    init: String,
    max_iter: usize,
    n: usize,
    dim: usize,
    iterations: usize,
    converged: bool,
    cos_sum: f64,
    sse: f64,
    total_pair_evals: u64,
    total_madds: u64,
    /// Wall-clock values; excluded from reproducibility comparisons.
    metadata: Metadata,
}

#[derive(Serialize)]
struct Metadata {
    elapsed_ns: u64,
    threads: usize,
}

fn write_lines<T: std::fmt::Display>(path: &Path, items: impl IntoIterator<Item = T>) -> anyhow::Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    for x in items {
        writeln!(out, "{x}")?;
    }
    out.flush()?;
    Ok(())
}

fn write_metrics(dir: &Path, rows: &[IterationMetrics]) -> anyhow::Result<()> {
    write_csv(BufWriter::new(fs::File::create(dir.join("metrics.csv"))?), rows)?;
    fs::write(dir.join("metrics.json"), serde_json::to_string_pretty(rows)? + "\n")?;
    Ok(())
}

fn cmd_cluster(a: ClusterArgs) -> Result<(), Failure> {
    let data = load(&a.data)?;
    let cfg = run_config(&a.run, a.backend);
    cfg.validate(data.len())?;
    let id = run_id(&[
        "cluster".into(),
        file_digest(&a.data.data)?,
        format!("tfidf={}", a.data.tfidf),
        format!("k={}", cfg.k),
        format!("backend={}", cfg.backend),
        format!("seed={}", cfg.seed),
        format!("max_iter={}", cfg.max_iter),
        format!("init={}", cfg.init),
    ]);
    let dir = a.out.join(&id);
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;

    let start = Instant::now();
    let result = sivf::run(&data, &cfg)?;
    let elapsed = start.elapsed();

    write_lines(&dir.join("assignments.txt"), result.assign.iter().map(|a| a + 1))?;
    let labels: Vec<i64> = (1..=cfg.k as i64).collect();
    let means = BufWriter::new(fs::File::create(dir.join("means.txt"))?);
    write_sparse_text(means, &result.unit_means, Some(&labels), data.dim())?;
    write_metrics(&dir, &result.metrics)?;

    let last = result.metrics.last().expect("at least one iteration");
    let summary = Summary {
        run_id: &id,
        backend: cfg.backend.to_string(),
        k: cfg.k,
        seed: cfg.seed,
        init: cfg.init.to_string(),
        max_iter: cfg.max_iter,
        n: data.len(),
        dim: data.dim(),
        iterations: result.iterations,
        converged: result.converged,
        cos_sum: last.cos_sum,
        sse: last.sse,
        total_pair_evals: result.metrics.iter().map(|m| m.pair_evals).sum(),
        total_madds: result.metrics.iter().map(|m| m.madds).sum(),
        metadata: Metadata { elapsed_ns: elapsed.as_nanos() as u64, threads: cfg.threads },
    };
    fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&summary).map_err(anyhow::Error::from)? + "\n")?;
    println!(
        "{} k={} iterations={} converged={} cos_sum={} elapsed={:.3}s out={}",
        cfg.backend,
        cfg.k,
        result.iterations,
        result.converged,
        last.cos_sum,
        elapsed.as_secs_f64(),
        dir.display()
    );
    Ok(())
}

const AGGREGATE_HEADER: &str =
    "backend,k,n,status,iterations,converged,avg_elapsed_ns_per_iter,max_mem_estimate_bytes,avg_norm_pair_evals,total_pair_evals,total_madds";

fn bench_cell(data: &SparseDataset, cfg: &RunConfig, path: &Path) -> anyhow::Result<String> {
    let n = data.len();
    let result = sivf::run(data, cfg)?;
    write_csv(BufWriter::new(fs::File::create(path)?), &result.metrics)?;
    let m = &result.metrics;
    let iters = m.len() as f64;
    Ok(format!(
        "{},{},{n},ok,{},{},{},{},{},{},{}",
        cfg.backend,
        cfg.k,
        result.iterations,
        result.converged,
        m.iter().map(|x| x.elapsed_ns).sum::<u64>() as f64 / iters,
        m.iter().map(|x| x.mem_estimate_bytes).max().unwrap_or(0),
        m.iter().map(|x| x.norm_pair_evals).sum::<f64>() / iters,
        m.iter().map(|x| x.pair_evals).sum::<u64>(),
        m.iter().map(|x| x.madds).sum::<u64>(),
    ))
}

fn cmd_bench(a: BenchArgs) -> Result<(), Failure> {
    let (full, source) = match &a.data {
        Some(path) => (load(&DataArgs { data: path.clone(), tfidf: a.tfidf })?, file_digest(path)?),
        None => (generate_synthetic(&SynthSpec::default())?.0, "synthetic-default".to_string()),
    };
    let k_list = if a.k_list.is_empty() { vec![a.k.unwrap()] } else { a.k_list.clone() };
    let n_list = if a.n_list.is_empty() { vec![full.len()] } else { a.n_list.clone() };
    if a.backends.is_empty() || k_list.is_empty() {
        return Err(Failure::Config(anyhow::anyhow!("sweep lists must be nonempty")));
    }
    let threads = match a.threads {
        Some(0) => return Err(Failure::Config(anyhow::anyhow!("--threads must be at least 1"))),
        Some(t) => t,
        None => default_threads(),
    };
    let fmt_list = |v: &[usize]| v.iter().map(ToString::to_string).collect::<Vec<_>>().join(",");
    let id = run_id(&[
        "bench".into(),
        source,
        format!("tfidf={}", a.tfidf),
        format!("k_list={}", fmt_list(&k_list)),
        format!("n_list={}", fmt_list(&n_list)),
        format!("backends={}", a.backends.iter().map(|b| b.name()).collect::<Vec<_>>().join(",")),
        format!("seed={}", a.seed),
        format!("max_iter={}", a.max_iter),
        format!("init={}", a.init),
    ]);
    let dir = a.out.join(format!("bench-{id}"));
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;

    let mut rows = vec![AGGREGATE_HEADER.to_string()];
    let mut failed = 0usize;
    for &n in &n_list {
        let data = match full.truncated(n) {
            Ok(d) => d,
            Err(e) => {
                for &k in &k_list {
                    for b in &a.backends {
                        rows.push(format!("{b},{k},{n},\"error: {e}\",,,,,,,"));
                        failed += 1;
                    }
                }
                continue;
            }
        };
        for &k in &k_list {
            for &backend in &a.backends {
                let cfg = RunConfig { max_iter: a.max_iter, seed: a.seed, threads, init: a.init, ..RunConfig::new(k, backend) };
                let path = dir.join(format!("{backend}-k{k}-n{}.csv", data.len()));
                match bench_cell(&data, &cfg, &path) {
                    Ok(row) => {
                        log::info!("{row}");
                        rows.push(row);
                    }
                    Err(e) => {
                        log::warn!("cell {backend} k={k} n={n} failed: {e:#}");
                        rows.push(format!("{backend},{k},{},\"error: {e}\",,,,,,,", data.len()));
                        failed += 1;
                    }
                }
            }
        }
    }
    write_lines(&dir.join("aggregate.csv"), &rows)?;
    println!("{} cells, {failed} failed, out={}", rows.len() - 1, dir.display());
    if failed > 0 {
        return Err(Failure::Mismatch(format!("{failed} bench cells failed")));
    }
    Ok(())
}

fn cmd_compare(a: CompareArgs) -> Result<(), Failure> {
    if a.backends.len() < 2 {
        return Err(Failure::Config(anyhow::anyhow!("compare needs at least two backends")));
    }
    let fault = match a.inject_fault.as_deref() {
        None => None,
        Some("zero-front-boundary") => Some(Fault::ZeroFrontBoundary),
        Some(other) => return Err(Failure::Config(anyhow::anyhow!("unknown fault `{other}`"))),
    };
    let data = load(&a.data)?;
    let base = run_config(&a.run, a.backends[0]);
    base.validate(data.len())?;
    let n = data.len();
    let k = base.k;

    let mut engines = Vec::with_capacity(a.backends.len());
    for &b in &a.backends {
        let mut e = Engine::new(&data, RunConfig { backend: b, ..base.clone() })?;
        if let (Some(f), Backend::Sivf) = (fault, b) {
            e.inject_fault(f);
        }
        engines.push(e);
    }

    let mut r = 0;
    while r < base.max_iter && !engines.iter().all(|e| e.converged()) {
        let lambda = engines[0].state().lambda.clone();
        let prev = engines[0].state().assign.clone();
        let expected_filtered = if r == 0 { (n * k) as u64 } else { pair_eval_count(&lambda, &prev, k) };
        for e in engines.iter_mut() {
            e.step()?;
        }
        r += 1;
        let reference = &engines[0];
        let want = &reference.state().assign;
        for e in &engines[1..] {
            let got = &e.state().assign;
            if let Some(i) = (0..n).find(|&i| got[i] != want[i]) {
                return Err(Failure::Mismatch(format!(
                    "assignment mismatch at iteration {r}, object {}: {} -> cluster {}, {} -> cluster {}",
                    i + 1,
                    reference.config().backend,
                    want[i] + 1,
                    e.config().backend,
                    got[i] + 1
                )));
            }
        }
        for e in &engines {
            let m = e.metrics().last().unwrap();
            let backend = e.config().backend;
            let expected = if backend.uses_filter() { expected_filtered } else { (n * k) as u64 };
            if m.pair_evals != expected {
                return Err(Failure::Mismatch(format!(
                    "counter mismatch at iteration {r}: {backend} pair_evals {} != {expected}",
                    m.pair_evals
                )));
            }
            if backend == Backend::Sivf && m.branch_evals != 0 {
                return Err(Failure::Mismatch(format!(
                    "counter mismatch at iteration {r}: sivf branch_evals {}",
                    m.branch_evals
                )));
            }
        }
    }
    let converged = engines.iter().all(|e| e.converged());
    println!(
        "{} backends agree over {r} iterations (converged={converged})",
        a.backends.iter().map(|b| b.name()).collect::<Vec<_>>().join(",")
    );
    Ok(())
}

fn cmd_gen(a: GenArgs) -> Result<(), Failure> {
    let spec = SynthSpec {
        n: a.n,
        dim: a.dim,
        k_true: a.k_true,
        avg_nnz: a.avg_nnz,
        zipf_exponent: a.zipf_exponent,
        cluster_separation: a.cluster_separation,
        seed: a.seed,
    };
    let (data, labels) = generate_synthetic(&spec)?;
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let data_path = a.out.join("data.txt");
    save_dataset(&data_path, &data)?;
    save_labels(a.out.join("labels.txt"), &labels)?;
    let stats = data.stats();
    println!(
        "n={} dim={} avg_nnz={:.2} max_nnz={} out={}",
        data.len(),
        data.dim(),
        stats.avg_nnz,
        stats.max_nnz,
        data_path.display()
    );
    Ok(())
}
