mod common;

use common::{config, random_instance};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sivf::ingest::{read_sparse_text, write_sparse_text, SynthSpec};
use sivf::kmeans::FilterState;
use sivf::oracle::{first_real_disagreement, oracle_objective};
use sivf::{
    build_ivf, generate_synthetic, ivf_assign, ivf_cbicp_assign, normalize_l2, sivf_assign, Backend, Engine, Error,
    Executor, Init, RunConfig, SparseVector, StructuredInvertedMeanFile,
};

fn random_unit_vectors(rng: &mut ChaCha8Rng, count: usize, dim: u32, max_nnz: usize) -> Vec<SparseVector> {
    (0..count)
        .map(|_| {
            let nnz = rng.gen_range(1..=max_nnz);
            let pairs: Vec<(u32, f64)> = (0..nnz).map(|_| (rng.gen_range(1..=dim), rng.gen_range(0.01..1.0))).collect();
            normalize_l2(&SparseVector::from_unsorted(pairs).unwrap()).unwrap()
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    /// Every backend's assignment at every iteration is the exact argmax over
    /// the means it started the iteration with.
    #[test]
    fn every_step_matches_oracle(seed in 0u64..1000, k in 2usize..9) {
        let data = random_instance(60, 300, 4, seed);
        for backend in Backend::ALL {
            let mut e = Engine::new(&data, config(k, backend, seed, 1)).unwrap();
            while !e.converged() && e.state().r < 50 {
                let means = e.unit_means();
                e.step().unwrap();
                let bad = first_real_disagreement(data.vectors(), &means, &e.state().assign);
                prop_assert!(bad.is_none(), "{backend} r={} object {:?}", e.state().r, bad);
            }
            prop_assert!(e.converged());
        }
    }

    #[test]
    fn backends_share_one_trajectory(seed in 0u64..1000, k in 2usize..12) {
        let data = random_instance(80, 400, 5, seed);
        let runs: Vec<_> = Backend::ALL
            .iter()
            .map(|&b| sivf::run(&data, &config(k, b, seed, 1)).unwrap())
            .collect();
        for r in &runs[1..] {
            prop_assert_eq!(&r.assign, &runs[0].assign);
            prop_assert_eq!(r.iterations, runs[0].iterations);
            for (a, b) in r.metrics.iter().zip(&runs[0].metrics) {
                prop_assert_eq!(a.cos_sum.to_bits(), b.cos_sum.to_bits());
                prop_assert_eq!(a.invariant_clusters, b.invariant_clusters);
            }
        }
    }

    #[test]
    fn cos_sum_never_decreases(seed in 0u64..1000, k in 2usize..10) {
        let data = random_instance(70, 300, 4, seed);
        let res = sivf::run(&data, &config(k, Backend::Sivf, seed, 1)).unwrap();
        for w in res.metrics.windows(2) {
            prop_assert!(w[1].cos_sum >= w[0].cos_sum - 1e-9);
        }
        let last = res.metrics.last().unwrap();
        let (sse, cos) = oracle_objective(data.vectors(), &res.assign, &res.raw_means, data.dim());
        prop_assert!((cos - last.cos_sum).abs() <= 1e-10 * cos.abs().max(1.0));
        prop_assert!((sse - last.sse).abs() <= 1e-10 * sse.abs().max(1.0));
    }

    /// Random means and a random invariance vector: the structured file is a
    /// valid partition and strips back to the plain inverted file.
    #[test]
    fn structured_file_partitions_postings(seed in 0u64..10_000, k in 1usize..30) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let means = random_unit_vectors(&mut rng, k, 50, 12);
        let lambda: Vec<bool> = (0..k).map(|_| rng.gen_bool(0.5)).collect();
        let s = StructuredInvertedMeanFile::build(&means, &lambda, 50);
        prop_assert!(s.validate().is_ok());
        prop_assert!(s.strip().same_multisets(&build_ivf(&means, 50)));
        let parsed = StructuredInvertedMeanFile::parse_dump(&s.dump(), &lambda).unwrap();
        prop_assert_eq!(parsed.dump(), s.dump());
        for t in 1..=50u32 {
            let (ids, _) = s.file().postings(t);
            let front = s.front_len(t);
            prop_assert!(ids[..front].iter().all(|&c| !lambda[c as usize]));
            prop_assert!(ids[front..].iter().all(|&c| lambda[c as usize]));
        }
    }

    #[test]
    fn sparse_text_round_trips_bitwise(seed in 0u64..10_000, n in 1usize..20) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows = random_unit_vectors(&mut rng, n, 200, 15);
        let labels: Vec<i64> = (0..n).map(|_| rng.gen_range(-3..50)).collect();
        let mut buf = Vec::new();
        write_sparse_text(&mut buf, &rows, Some(&labels), 200).unwrap();
        let back = read_sparse_text(buf.as_slice()).unwrap();
        prop_assert_eq!(back.rows, rows);
        prop_assert_eq!(back.labels, labels);
        prop_assert_eq!(back.dim, 200);
    }
}

#[test]
fn cbicp_without_history_is_plain_ivf() {
    let data = random_instance(100, 500, 5, 9);
    let means = random_unit_vectors(&mut ChaCha8Rng::seed_from_u64(1), 7, 500, 40);
    let ivf = build_ivf(&means, 500);
    let lambda = vec![false; 7];
    let cached = vec![0.0; 100];
    let exec = Executor::sequential();
    let plain = ivf_assign(&exec, &data, &ivf);
    let filtered = ivf_cbicp_assign(&exec, &data, &ivf, &FilterState::initial(&lambda, &cached));
    assert_eq!(plain.assign, filtered.assign);
    assert_eq!(plain.counters.pair_evals, filtered.counters.pair_evals);
    assert_eq!(plain.counters.madds, filtered.counters.madds);
}

#[test]
fn structure_built_for_other_lambda_is_rejected() {
    let data = random_instance(30, 200, 3, 2);
    let means = random_unit_vectors(&mut ChaCha8Rng::seed_from_u64(4), 3, 200, 20);
    let s = StructuredInvertedMeanFile::build(&means, &[true, false, false], 200);
    let lambda = [false, false, false];
    let cached = vec![0.0; 30];
    let err = sivf_assign(&Executor::sequential(), &data, &s, &FilterState::initial(&lambda, &cached)).unwrap_err();
    assert!(matches!(err, Error::StructureMismatch));
}

#[test]
fn kmeanspp_recovers_well_separated_clusters() {
    let spec = SynthSpec { n: 200, dim: 2000, k_true: 2, avg_nnz: 30.0, cluster_separation: 1.0, seed: 11, ..SynthSpec::default() };
    let (data, labels) = generate_synthetic(&spec).unwrap();
    let cfg = RunConfig { init: Init::Kmeanspp, seed: 3, ..RunConfig::new(2, Backend::Sivf) };
    let res = sivf::run(&data, &cfg).unwrap();
    assert!(res.converged);
    // purity up to label permutation
    let agree = res.assign.iter().zip(&labels).filter(|(a, l)| **a as i64 == **l).count();
    let purity = agree.max(200 - agree) as f64 / 200.0;
    assert!(purity >= 0.95, "purity {purity}");
}

#[test]
fn caching_invariant_means_changes_nothing() {
    let data = random_instance(300, 1500, 8, 21);
    for backend in Backend::ALL {
        let plain = sivf::run(&data, &config(16, backend, 4, 1)).unwrap();
        let cached = sivf::run(&data, &RunConfig { cache_invariant_means: true, ..config(16, backend, 4, 1) }).unwrap();
        assert_eq!(plain.assign, cached.assign, "{backend}");
        assert_eq!(plain.unit_means, cached.unit_means, "{backend}");
        assert_eq!(plain.iterations, cached.iterations);
    }
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let data = random_instance(500, 2000, 10, 8);
    for backend in Backend::ALL {
        let one = sivf::run(&data, &config(25, backend, 6, 1)).unwrap();
        let many = sivf::run(&data, &config(25, backend, 6, 5)).unwrap();
        assert_eq!(one.assign, many.assign);
        let strip = |r: &sivf::RunResult| r.metrics.iter().map(|m| m.without_timing()).collect::<Vec<_>>();
        assert_eq!(strip(&one), strip(&many), "{backend}");
    }
}

#[test]
fn duplicate_objects_leave_empty_clusters_stable() {
    // many duplicate objects force empty clusters
    let x = normalize_l2(&SparseVector::from_pairs([(1, 1.0), (2, 1.0)]).unwrap()).unwrap();
    let y = normalize_l2(&SparseVector::from_pairs([(3, 1.0)]).unwrap()).unwrap();
    let mut rows = vec![x.clone(); 5];
    rows.extend(vec![y; 5]);
    rows.push(x);
    let data = sivf::SparseDataset::new(rows, 3).unwrap();
    let runs: Vec<_> = Backend::ALL.iter().map(|&b| sivf::run(&data, &config(4, b, 0, 1)).unwrap()).collect();
    for r in &runs {
        assert!(r.converged);
        assert_eq!(r.assign, runs[0].assign);
        assert_eq!(r.unit_means, runs[0].unit_means);
    }
}
