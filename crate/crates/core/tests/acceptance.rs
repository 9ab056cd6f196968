//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any fails.

mod common;

use std::process::ExitCode;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::Rng;

use tlcsp::bench::{run_benchmark, summarize, write_results, BenchConfig, ResultTable, Strategy};
use tlcsp::csp::compute_csp;
use tlcsp::data::{epoch_covariance, LabeledEpoch, SpatialCovariance, SubjectDataset, SynthConfig, SyntheticCorpus};
use tlcsp::pipeline::{train_csp_lda, Sample};
use tlcsp::transfer::{
    cm1_affinities, cm2_lambda, ensemble_predict, kl_divergence_gaussian, kmm_weights, optimize_weights,
    train_source_models, weighted_fused_training, EnsembleWeights, InstanceWeights, KmmConfig, RAND_ACC,
};

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn csp_correctness() -> Outcome {
    let mut r = common::rng(1);
    let (mut worst_off, mut worst_ev) = (0.0f64, 0.0f64);
    for _ in 0..50 {
        let (a, b) = (common::random_spd(6, 0.1, &mut r), common::random_spd(6, 0.1, &mut r));
        let s0 = SpatialCovariance::new(a.clone(), false).unwrap();
        let s1 = SpatialCovariance::new(b.clone(), false).unwrap();
        let bank = compute_csp(&s0, &s1, 2).map_err(|e| e.to_string())?;
        let w = bank.filters();
        for m in [w.transpose() * &a * w, w.transpose() * &b * w] {
            worst_off = worst_off.max(common::relative_off_diagonal(&m));
        }
        let all = common::brute_force_eigenvalues(&a, &b);
        let want = [all[0], all[1], all[5], all[4]];
        for (got, want) in bank.eigenvalues().iter().zip(want) {
            worst_ev = worst_ev.max((got - want).abs() / want.abs().max(1.0));
        }
    }
    ensure(worst_off <= 1e-8, || format!("off-diagonal {worst_off:.2e}"))?;
    ensure(worst_ev <= 1e-10, || format!("eigenvalue error {worst_ev:.2e}"))?;
    Ok(format!("off-diagonal {worst_off:.1e}, eigenvalue error {worst_ev:.1e}"))
}

fn filter_recovery() -> Outcome {
    let mut hits = 0;
    let mut lowest = f64::INFINITY;
    for seed in 1..=30 {
        let corpus = SyntheticCorpus::generate(&SynthConfig {
            num_subjects: 1,
            channels: 8,
            samples: 250,
            epochs_per_class: 100,
            sigma_hi: 4.0,
            sigma_lo: 1.0,
            divergence: 0.2,
            noise_floor: 0.1,
            seed,
        })
        .map_err(|e| e.to_string())?;
        let bank = train_source_models(&corpus.subjects, 3).map_err(|e| e.to_string())?;
        let w = bank.models()[0].model.bank.filters().column(0).into_owned();
        let (truth, _) = corpus.discriminative_filters(0);
        let cos = (w.dot(&truth) / (w.norm() * truth.norm())).abs();
        lowest = lowest.min(cos);
        if cos >= 0.95 {
            hits += 1;
        }
    }
    ensure(hits >= 28, || format!("{hits}/30 seeds with |cos| >= 0.95"))?;
    Ok(format!("{hits}/30 seeds, lowest |cos| {lowest:.4}"))
}

fn unit_identities() -> Outcome {
    let mut r = common::rng(3);
    for _ in 0..20 {
        let s = common::spd_cov(5, 0.05, &mut r);
        let kl = kl_divergence_gaussian(&s, &s).map_err(|e| e.to_string())?;
        ensure(kl.abs() <= 1e-10, || format!("KL(S, S) = {kl:e}"))?;
    }
    let i2 = SpatialCovariance::identity(2);
    let two = SpatialCovariance::diagonal(&[2.0, 2.0]).unwrap();
    let kl = kl_divergence_gaussian(&i2, &two).map_err(|e| e.to_string())?;
    ensure((kl - 0.19315).abs() <= 1e-4, || format!("KL(I, 2I) = {kl}"))?;
    for z in 1..8 {
        let sources: Vec<_> = (0..z).map(|_| common::spd_cov(4, 0.1, &mut r)).collect();
        let target = common::spd_cov(4, 0.1, &mut r);
        let alpha = cm1_affinities(&sources, &target).map_err(|e| e.to_string())?.alpha;
        let sum: f64 = alpha.iter().sum();
        ensure((sum - 1.0).abs() <= 1e-12, || format!("alpha sums to {sum}"))?;
    }
    let first = cm2_lambda(0.4, 0.7, RAND_ACC).unwrap();
    let second = cm2_lambda(0.9, 0.8, RAND_ACC).unwrap();
    let third = cm2_lambda(0.6, 0.8, RAND_ACC).unwrap();
    ensure(first == 1.0 && second == 0.0, || format!("lambda cases gave {first}, {second}"))?;
    // The third case is compared with the same expression evaluated in f64,
    // since 0.8 − 0.6 is not representable exactly.
    ensure(third == (0.8 - 0.6) / (1.0 - 0.5) && (third - 0.4).abs() <= 4.0 * f64::EPSILON, || {
        format!("third lambda case gave {third}")
    })?;
    Ok(format!("KL(I, 2I) = {kl:.6}, lambda = {first}, {second}, {third}"))
}

fn qp_oracles() -> Outcome {
    let mut r = common::rng(4);
    let mut ma_gap = f64::NEG_INFINITY;
    let mut ia_gap = f64::NEG_INFINITY;
    for trial in 0..30 {
        let z = 1 + trial % 3;
        let m = 4 + trial % 11;
        let y: Vec<f64> = (0..m).map(|j| if j % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let p = DMatrix::from_fn(m, z, |j, _| if r.random::<f64>() < 0.7 { y[j] } else { -y[j] });
        let w = optimize_weights(&p, &y).map_err(|e| e.to_string())?;
        ma_gap = ma_gap.max(w.objective - common::ma_grid_objective(&p, &y, 0.05));
    }
    let cfg = KmmConfig::default();
    for trial in 0..9 {
        let n = 1 + trial % 3;
        let src: Vec<Vec<f64>> = (0..n).map(|_| (0..2).map(|_| r.random::<f64>() * 2.0).collect()).collect();
        let tgt: Vec<Vec<f64>> = (0..1 + trial % 4).map(|_| (0..2).map(|_| r.random::<f64>()).collect()).collect();
        let w = kmm_weights(&src, &tgt, &cfg).map_err(|e| e.to_string())?;
        let (kk, kappa, scale) = common::kmm_terms(&src, &tgt, w.bandwidth);
        let grid = common::kmm_grid_objective(&kk, &kappa, scale, cfg.upper_bound, cfg.epsilon_for(n), 0.01);
        ia_gap = ia_gap.max(common::kmm_objective(&kk, &kappa, scale, w.as_slice()) - grid);
    }
    ensure(ma_gap <= 1e-6, || format!("MA objective exceeds the grid by {ma_gap:e}"))?;
    ensure(ia_gap <= 1e-6, || format!("IA objective exceeds the grid by {ia_gap:e}"))?;

    let mut violation = 0.0f64;
    for trial in 0..100 {
        let (m, z) = (2 + trial % 30, 1 + trial % 9);
        let y: Vec<f64> = (0..m).map(|_| if r.random::<bool>() { 1.0 } else { -1.0 }).collect();
        let p = DMatrix::from_fn(m, z, |j, _| if r.random::<f64>() < 0.6 { y[j] } else { -y[j] });
        let w = optimize_weights(&p, &y).map_err(|e| e.to_string())?;
        let w = w.as_slice();
        violation = violation.max((w.iter().sum::<f64>() - 1.0).abs());
        violation = violation.max(w.iter().map(|v| -v).fold(0.0, f64::max));

        let n = 1 + trial % 40;
        let d = 1 + trial % 5;
        let src: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| r.random::<f64>()).collect()).collect();
        let tgt: Vec<Vec<f64>> = (0..1 + trial % 13).map(|_| (0..d).map(|_| r.random::<f64>() + 0.3).collect()).collect();
        let beta = kmm_weights(&src, &tgt, &cfg).map_err(|e| e.to_string())?;
        let eps = cfg.epsilon_for(n);
        let sum: f64 = beta.as_slice().iter().sum();
        for b in beta.as_slice() {
            violation = violation.max(-b).max(b - cfg.upper_bound);
        }
        violation = violation.max(n as f64 * (1.0 - eps) - sum).max(sum - n as f64 * (1.0 + eps));
    }
    ensure(violation <= 1e-6, || format!("constraint violation {violation:e}"))?;
    Ok(format!("grid gaps MA {ma_gap:.1e}, IA {ia_gap:.1e}; worst violation {violation:.1e}"))
}

fn path_equivalences() -> Outcome {
    let corpus = SyntheticCorpus::generate(&SynthConfig {
        num_subjects: 4,
        channels: 8,
        samples: 100,
        epochs_per_class: 30,
        ..SynthConfig::default()
    })
    .map_err(|e| e.to_string())?;
    let target = corpus.subjects[0].epochs();
    let (labeled, test) = target.split_at(10);
    let source: Vec<LabeledEpoch> = corpus.subjects[1..].iter().flat_map(|s| s.epochs().iter().cloned()).collect();

    let (bank, lda) = weighted_fused_training(labeled, &source, &InstanceWeights::uniform(source.len()), 3)
        .map_err(|e| e.to_string())?;
    let fused: Vec<LabeledEpoch> = labeled.iter().chain(&source).cloned().collect();
    let covs: Vec<SpatialCovariance> = fused.iter().map(|e| epoch_covariance(&e.epoch, true).unwrap()).collect();
    let samples: Vec<Sample<'_>> = covs.iter().zip(&fused).map(|(c, e)| Sample::new(c, e.label)).collect();
    let bl3 = train_csp_lda(&samples, 3).map_err(|e| e.to_string())?;
    ensure(bank == bl3.bank && lda == bl3.lda, || "IA with unit weights trained a different model".into())?;
    let ia = tlcsp::pipeline::CspLda { bank, lda };
    let test_covs: Vec<SpatialCovariance> = test.iter().map(|e| epoch_covariance(&e.epoch, true).unwrap()).collect();
    let test_samples: Vec<Sample<'_>> = test_covs.iter().zip(test).map(|(c, e)| Sample::new(c, e.label)).collect();
    let (acc_ia, acc_bl3) = (ia.accuracy(&test_samples).unwrap(), bl3.accuracy(&test_samples).unwrap());
    ensure(acc_ia.to_bits() == acc_bl3.to_bits(), || format!("accuracy {acc_ia} vs {acc_bl3}"))?;

    let models = train_source_models(&corpus.subjects[1..], 3).map_err(|e| e.to_string())?;
    let mut checked = 0;
    for z in 0..models.len() {
        let w = EnsembleWeights::vertex(z, models.len());
        for e in test {
            let want = models.models()[z].model.predict_epoch(&e.epoch).unwrap().0;
            let got = ensemble_predict(&models, &w, &e.epoch).unwrap().0;
            ensure(got == want, || format!("vertex {z} disagrees with its source model"))?;
            checked += 1;
        }
    }
    Ok(format!("IA = BL3 at accuracy {acc_ia:.4}; {checked} vertex predictions match"))
}

fn trend_corpus() -> Vec<SubjectDataset> {
    SyntheticCorpus::generate(&SynthConfig {
        samples: 50,
        sigma_hi: 1.5,
        epochs_per_class: 40,
        ..SynthConfig::default()
    })
    .expect("valid corpus config")
    .subjects
}

fn trend_config(workers: usize) -> BenchConfig {
    BenchConfig {
        repetitions: 10,
        workers: Some(workers),
        ..BenchConfig::default()
    }
}

fn csv_bytes(table: &ResultTable) -> Vec<u8> {
    let mut out = Vec::new();
    write_results(table, &mut out).expect("writing to memory");
    out
}

static SERIAL_RUN: OnceLock<Result<(Vec<u8>, ResultTable), String>> = OnceLock::new();

fn serial_run(corpus: &[SubjectDataset]) -> Result<&'static (Vec<u8>, ResultTable), String> {
    SERIAL_RUN
        .get_or_init(|| {
            let table = run_benchmark(corpus, &trend_config(1)).map_err(|e| e.to_string())?;
            Ok((csv_bytes(&table), table))
        })
        .as_ref()
        .map_err(Clone::clone)
}

/// Average ranks, ties sharing the mean rank.
fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut out = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        for &k in &idx[i..=j] {
            out[k] = (i + j) as f64 / 2.0;
        }
        i = j + 1;
    }
    out
}

fn spearman(a: &[f64], b: &[f64]) -> f64 {
    let (ra, rb) = (ranks(a), ranks(b));
    let n = ra.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

fn protocol_trend(corpus: &[SubjectDataset]) -> Outcome {
    let (_, table) = serial_run(corpus)?;
    let summary = summarize(table);
    let mean = |s: Strategy, m: usize| {
        summary
            .iter()
            .find(|r| r.strategy == s && r.m == m)
            .map(|r| r.mean)
            .expect("every cell summarized")
    };
    let mut failures = Vec::new();
    let mut worst_margin = f64::INFINITY;
    for s in Strategy::ALL.into_iter().filter(|s| s.is_transfer()) {
        for m in [2, 4] {
            let margin = mean(s, m) - mean(Strategy::Bl1, m);
            worst_margin = worst_margin.min(margin);
            if margin < 0.05 {
                failures.push(format!("{s} at m={m} beats BL1 by only {margin:.3}"));
            }
        }
    }
    let bl2_gap = mean(Strategy::Bl2, 2) - mean(Strategy::Bl1, 2);
    if !(bl2_gap > 0.0) {
        failures.push(format!("BL2 at m=2 trails BL1 by {:.3}", -bl2_gap));
    }
    let ms: Vec<f64> = trend_config(1).m_values().iter().map(|&m| m as f64).collect();
    let curve: Vec<f64> = trend_config(1).m_values().iter().map(|&m| mean(Strategy::Bl1, m)).collect();
    let rho = spearman(&ms, &curve);
    if !(rho > 0.8) {
        failures.push(format!("BL1 Spearman rho {rho:.3}"));
    }
    if failures.is_empty() {
        Ok(format!("min TL margin {worst_margin:.3}, BL2-BL1 at m=2 {bl2_gap:.3}, BL1 rho {rho:.3}"))
    } else {
        Err(failures.join("; "))
    }
}

fn determinism(corpus: &[SubjectDataset]) -> Outcome {
    let (serial, _) = serial_run(corpus)?;
    let workers = std::thread::available_parallelism().map_or(4, |n| n.get()).max(2);
    let parallel = run_benchmark(corpus, &trend_config(workers)).map_err(|e| e.to_string())?;
    let bytes = csv_bytes(&parallel);
    ensure(*serial == bytes, || format!("CSV differs between 1 and {workers} workers"))?;
    Ok(format!("{} bytes identical for 1 and {workers} workers", bytes.len()))
}

fn report(id: &str, name: &str, limit: Option<Duration>, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let outcome = f();
    let took = start.elapsed();
    let outcome = match (outcome, limit) {
        (Ok(_), Some(limit)) if took > limit => Err(format!("took {took:.1?}, limit {limit:?}")),
        (o, _) => o,
    };
    let (tag, detail) = match &outcome {
        Ok(d) => ("PASS", d),
        Err(d) => ("FAIL", d),
    };
    println!("{tag} criterion {id} ({name}) [{took:.2?}]: {detail}");
    outcome.is_ok()
}

fn main() -> ExitCode {
    let secs = Duration::from_secs;
    let corpus = trend_corpus();
    let results = [
        report("1", "CSP correctness", Some(secs(5)), csp_correctness),
        report("2", "filter recovery", Some(secs(30)), filter_recovery),
        report("3", "unit identities", None, unit_identities),
        report("4", "QP oracles", Some(secs(60)), qp_oracles),
        report("5", "path equivalences", None, path_equivalences),
        report("6", "protocol trend", Some(secs(600)), || protocol_trend(&corpus)),
        report("7", "determinism", None, || determinism(&corpus)),
    ];
    let passed = results.iter().filter(|ok| **ok).count();
    println!("{passed}/{} criteria passed", results.len());
    if passed == results.len() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
