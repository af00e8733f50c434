//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each,
//! and exits non-zero if any criterion fails.

mod common;

use std::collections::HashMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use gatecast::data::{self, CandidateSource, PlantedCorpus, PlantedRole, PlantedSpec};
use gatecast::decompose;
use gatecast::model::FittedModel;
use gatecast::pipeline::{self, OutputPaths, PipelineConfig};
use gatecast::rank::{self, Component, RankedList, TargetComponents, TermScore};
use gatecast::regress;
use gatecast::select::{self, SelectConfig};
use gatecast::series::{self, RateSeries};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const RECONSTRUCTION_REL_TOL: f64 = 1e-9;
const RECONSTRUCTION_LIMIT: Duration = Duration::from_secs(5);
const RIDGE_TOL: f64 = 1e-8;
const RIDGE_LIMIT: Duration = Duration::from_secs(10);
const GREEDY_LIMIT: Duration = Duration::from_secs(60);
const NOWCAST_MIN_PEARSON: f64 = 0.9;
const NOWCAST_MAX_SMAPE: f64 = 30.0;
const NOWCAST_MIN_RELEVANCE: f64 = 0.8;
const NOWCAST_LIMIT: Duration = Duration::from_secs(120);
const GATE_MAX_SEASONAL: f64 = 0.2;
const SCALE_CANDIDATES: usize = 100_000;
const SCALE_LIMIT: Duration = Duration::from_secs(300);
const SCALE_MAX_RSS: u64 = 2 * 1024 * 1024 * 1024;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(cond: bool, pass: String, fail: String) -> Outcome {
    if cond {
        Ok(pass)
    } else {
        Err(fail)
    }
}

fn pool(threads: usize) -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .expect("thread pool")
}

fn reconstruction() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for k in 0..100 {
        let values: Vec<f64> = (0..416)
            .map(|_| {
                if rng.random_bool(0.02) {
                    0.0
                } else {
                    rng.random_range(1e-4..0.5)
                }
            })
            .collect();
        let s = RateSeries::new(format!("r{k}"), rng.random_range(0..100), values).unwrap();
        let d = decompose::decompose(&s, 52).map_err(|e| e.to_string())?;
        let floor = s.values().iter().copied().filter(|v| *v > 0.0).fold(f64::MAX, f64::min);
        for w in d.first_week()..d.end_week() {
            let raw = s.at(w).unwrap();
            let v = if raw == 0.0 { floor } else { raw };
            let expect = (v / (1.0 - v)).ln();
            let got = d.reconstruct(w).unwrap();
            worst = worst.max((got - expect).abs() / expect.abs());
        }
    }
    let took = start.elapsed();
    check(
        worst <= RECONSTRUCTION_REL_TOL && took < RECONSTRUCTION_LIMIT,
        format!("max relative error {worst:.3e} in {took:.2?}"),
        format!("max relative error {worst:.3e} (tol {RECONSTRUCTION_REL_TOL:e}) in {took:.2?}"),
    )
}

fn ridge_oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for _ in 0..1000 {
        let p = rng.random_range(0..=8usize);
        let n = rng.random_range((p + 2).max(10)..=50);
        let lambda = [0.0, 0.1, 10.0][rng.random_range(0..3)];
        let columns: Vec<Vec<f64>> = (0..p)
            .map(|_| {
                let shift = rng.random_range(-5.0..5.0);
                let spread = rng.random_range(0.1..10.0);
                (0..n).map(|_| shift + spread * rng.random_range(-1.0..1.0)).collect()
            })
            .collect();
        let truth: Vec<f64> = (0..p).map(|_| rng.random_range(-3.0..3.0)).collect();
        let y: Vec<f64> = (0..n)
            .map(|i| {
                1.5 + (0..p).map(|j| truth[j] * columns[j][i]).sum::<f64>()
                    + rng.random_range(-0.5..0.5)
            })
            .collect();
        let x = DMatrix::from_fn(n, p, |r, c| columns[c][r]);
        let fit = regress::fit(&x, &y, lambda).map_err(|e| e.to_string())?;
        let oracle = common::ridge_oracle(&columns, &y, lambda).ok_or("oracle failed")?;
        let mut err = (fit.intercept - oracle.intercept).abs() / oracle.intercept.abs().max(1.0);
        for (a, b) in fit.coefficients.iter().zip(&oracle.beta) {
            err = err.max((a - b).abs() / b.abs().max(1.0));
        }
        worst = worst.max(err);
        count += 1;
    }
    let took = start.elapsed();
    check(
        worst <= RIDGE_TOL && took < RIDGE_LIMIT,
        format!("{count} instances, max coefficient error {worst:.3e} in {took:.2?}"),
        format!("max coefficient error {worst:.3e} (tol {RIDGE_TOL:e}) in {took:.2?}"),
    )
}

fn greedy_oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut accepted_total = 0;
    for case in 0..200 {
        let n = rng.random_range(60..=120usize);
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let m = rng.random_range(1..=8usize);
        let mut order: Vec<(String, Vec<f64>)> = Vec::new();
        for k in 0..m {
            let kind = rng.random_range(0..5);
            let col: Vec<f64> = match kind {
                0 => {
                    let noise = rng.random_range(0.1..2.0);
                    y.iter().map(|v| v + noise * rng.random_range(-1.0..1.0)).collect()
                }
                1 => vec![rng.random_range(-1.0..1.0); n],
                2 if k > 0 => order[rng.random_range(0..k)].1.iter().map(|v| 3.0 * v - 1.0).collect(),
                _ => (0..n).map(|_| rng.random_range(-1.0..1.0)).collect(),
            };
            order.push((format!("c{case}_{k}"), col));
        }
        let patience = rng.random_range(0..=5usize);
        let max_candidates = rng.random_range(1..=9usize);
        let lambda = [0.0, 0.1, 1.0][rng.random_range(0..3)];
        let oracle = common::greedy_oracle(&order, &y, lambda, 5, patience, max_candidates);

        let ranked = RankedList {
            component: Component::Irregular,
            phi: 0,
            entries: order
                .iter()
                .map(|(id, _)| TermScore {
                    id: id.clone(),
                    score_s: 1.0,
                    score_t: 0.0,
                    score_i: 0.0,
                    best_epsilon: 1,
                })
                .collect(),
        };
        let columns: HashMap<String, Vec<f64>> = order.iter().cloned().collect();
        let cfg = SelectConfig {
            lambda,
            max_candidates,
            patience,
            folds: 5,
        };
        let got = select::forward_select(&ranked, &columns, &y, &cfg).map_err(|e| e.to_string())?;
        let got_steps: Vec<(String, bool)> = got
            .trace
            .iter()
            .map(|e| (e.candidate_id.clone(), e.accepted))
            .collect();
        let want_steps: Vec<(String, bool)> = oracle
            .steps
            .iter()
            .map(|s| (s.id.clone(), s.accepted))
            .collect();
        if got_steps != want_steps
            || got.selected_ids != oracle.selected
            || got.stop_reason.as_str() != oracle.stop
        {
            return Err(format!(
                "case {case}: trace {got_steps:?} stop {:?} vs oracle {want_steps:?} stop {}",
                got.stop_reason, oracle.stop
            ));
        }
        accepted_total += oracle.selected.len();
    }
    let took = start.elapsed();
    check(
        took < GREEDY_LIMIT,
        format!("200 lists match the oracle ({accepted_total} acceptances) in {took:.2?}"),
        format!("all lists match but took {took:.2?}"),
    )
}

fn planted_nowcast() -> Outcome {
    let start = Instant::now();
    let planted = PlantedCorpus::new(PlantedSpec::default()).map_err(|e| e.to_string())?;
    let labels = planted.ground_truth().labels();
    let corpus = planted.materialize().map_err(|e| e.to_string())?;
    let run = pipeline::run(&corpus.target, &corpus, &PipelineConfig::default(), Some(&labels))
        .map_err(|e| e.to_string())?;
    let took = start.elapsed();
    let r = &run.report;
    let rel = r.relevance_all.ok_or("no candidate selected")?;
    let detail = format!(
        "pearson {:.4} smape {:.2} related {}/{} ({:.3}) in {took:.2?}",
        r.pearson, r.smape, rel.related, rel.total, rel.ratio
    );
    check(
        r.pearson >= NOWCAST_MIN_PEARSON
            && r.smape <= NOWCAST_MAX_SMAPE
            && rel.ratio >= NOWCAST_MIN_RELEVANCE
            && took < NOWCAST_LIMIT,
        detail.clone(),
        format!(
            "{detail}; needs pearson >= {NOWCAST_MIN_PEARSON}, smape <= {NOWCAST_MAX_SMAPE}, \
             related share >= {NOWCAST_MIN_RELEVANCE}"
        ),
    )
}

fn planted_forecast() -> Outcome {
    let spec = PlantedSpec {
        lead_weeks: 2,
        ..Default::default()
    };
    let planted = PlantedCorpus::new(spec).map_err(|e| e.to_string())?;
    let truth = planted.ground_truth();
    let corpus = planted.materialize().map_err(|e| e.to_string())?;
    let lagged = PipelineConfig {
        phi: 2,
        ..Default::default()
    };
    let run2 = pipeline::run(&corpus.target, &corpus, &lagged, None).map_err(|e| e.to_string())?;
    let worst_related = truth
        .ids_with(PlantedRole::Related)
        .iter()
        .map(|id| run2.ranked_i.position(id).unwrap())
        .max()
        .unwrap();
    let best_noise = truth
        .ids_with(PlantedRole::Noise)
        .iter()
        .map(|id| run2.ranked_i.position(id).unwrap())
        .min()
        .unwrap();

    let run0 = pipeline::run(&corpus.target, &corpus, &PipelineConfig::default(), None)
        .map_err(|e| e.to_string())?;
    let (b, e) = (run0.ranges.boundary, run0.ranges.end);
    let mut naive = Vec::new();
    let mut actual = Vec::new();
    for u in b..e {
        let p = run0.model.predict_week(&corpus, u - 2).map_err(|e| e.to_string())?;
        naive.push(p.rate);
        actual.push(corpus.target.at(u).unwrap());
    }
    let naive_pearson = series::pearson(&naive, &actual).map_err(|e| e.to_string())?;
    let detail = format!(
        "worst related rank {} < best noise rank {}; pearson lag-2 model {:.4} vs shifted nowcast {:.4}",
        worst_related + 1,
        best_noise + 1,
        run2.report.pearson,
        naive_pearson
    );
    check(
        worst_related < best_noise && run2.report.pearson > naive_pearson,
        detail.clone(),
        detail,
    )
}

fn seasonal_gate() -> Outcome {
    let spec = PlantedSpec {
        n_gate_decoy: 10,
        ..Default::default()
    };
    let planted = PlantedCorpus::new(spec).map_err(|e| e.to_string())?;
    let truth = planted.ground_truth();
    let ranges = data::split_ranges(planted.target(), &Default::default()).map_err(|e| e.to_string())?;
    let train_target = ranges.train_target(planted.target());
    let tc = TargetComponents::new(&train_target, 52, 0).map_err(|e| e.to_string())?;
    let outcome = rank::score_corpus(&tc, &ranges.train_view(&planted)).map_err(|e| e.to_string())?;
    let score: HashMap<&str, f64> = outcome.scores.iter().map(|s| (s.id.as_str(), s.score_i)).collect();
    let target = decompose::decompose(&train_target, 52).map_err(|e| e.to_string())?;

    // ungated correlations, computed from the decompositions directly
    let raw = |id: &str| -> (f64, f64) {
        let c = planted.window(id, ranges.first, ranges.boundary).unwrap();
        let d = decompose::decompose(&c, 52).unwrap();
        let seasonal = common::pearson(target.seasonal.values(), d.seasonal.values());
        let first = target.irregular.start_week.max(d.irregular.start_week);
        let end = target.irregular.end_week().min(d.irregular.end_week());
        let irregular = common::pearson(
            target.irregular.slice(first, end).unwrap(),
            d.irregular.slice(first, end).unwrap(),
        );
        (seasonal, irregular)
    };
    let related = truth.ids_with(PlantedRole::Related);
    let weakest_irregular = related.iter().map(|id| raw(id).1).fold(f64::MAX, f64::min);
    let lowest_related_score = related.iter().map(|id| score[id.as_str()]).fold(f64::MAX, f64::min);
    let gated: Vec<(String, f64)> = truth
        .ids_with(PlantedRole::GateDecoy)
        .into_iter()
        .filter(|id| {
            let (s, i) = raw(id);
            s < GATE_MAX_SEASONAL && i > weakest_irregular
        })
        .map(|id| {
            let s = score[id.as_str()];
            (id, s)
        })
        .collect();
    if gated.is_empty() {
        return Err("no gate decoy meets the premise".into());
    }
    let highest = gated.iter().map(|g| g.1).fold(f64::MIN, f64::max);
    let detail = format!(
        "{} decoys with seasonal corr < {GATE_MAX_SEASONAL} and irregular corr > {weakest_irregular:.4}; \
         max decoy score {highest:.4} < min related score {lowest_related_score:.4}",
        gated.len()
    );
    check(gated.iter().all(|g| g.1 < lowest_related_score), detail.clone(), detail)
}

fn scale_smoke() -> Outcome {
    let spec = PlantedSpec {
        n_noise: SCALE_CANDIDATES - 25,
        ..Default::default()
    };
    let planted = PlantedCorpus::new(spec).map_err(|e| e.to_string())?;
    let tc = TargetComponents::new(planted.target(), 52, 0).map_err(|e| e.to_string())?;
    let start = Instant::now();
    let wide = pool(8)
        .install(|| rank::score_corpus(&tc, &planted))
        .map_err(|e| e.to_string())?;
    let took = start.elapsed();
    let start1 = Instant::now();
    let narrow = pool(1)
        .install(|| rank::score_corpus(&tc, &planted))
        .map_err(|e| e.to_string())?;
    let took1 = start1.elapsed();
    let rss = common::peak_rss_bytes().ok_or("VmHWM unavailable")?;
    let same = wide.scores == narrow.scores
        && wide.skipped == narrow.skipped
        && wide.ranked(Component::Irregular).entries == narrow.ranked(Component::Irregular).entries;
    let detail = format!(
        "{} scored, {} skipped; 8 threads {took:.2?}, 1 thread {took1:.2?}; peak rss {} MiB; identical {same}",
        wide.scores.len(),
        wide.skipped.len(),
        rss / (1024 * 1024)
    );
    check(
        same && took < SCALE_LIMIT && rss < SCALE_MAX_RSS && wide.scores.len() + wide.skipped.len() == SCALE_CANDIDATES,
        detail.clone(),
        detail,
    )
}

fn read_dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

fn determinism() -> Outcome {
    let planted = PlantedCorpus::new(PlantedSpec::default()).map_err(|e| e.to_string())?;
    let labels = planted.ground_truth().labels();
    let corpus = planted.materialize().map_err(|e| e.to_string())?;
    let cfg = PipelineConfig::default();
    let mut dirs = Vec::new();
    let mut runs = Vec::new();
    for threads in [1, 8] {
        let run = pool(threads)
            .install(|| pipeline::run(&corpus.target, &corpus, &cfg, Some(&labels)))
            .map_err(|e| e.to_string())?;
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        pipeline::write_outputs(&run, &corpus.target, &OutputPaths::in_dir(dir.path()), None, true)
            .map_err(|e| e.to_string())?;
        dirs.push(dir);
        runs.push(run);
    }
    let a = read_dir_bytes(dirs[0].path());
    let b = read_dir_bytes(dirs[1].path());
    let identical = a == b;
    let loaded = FittedModel::load(&OutputPaths::in_dir(dirs[0].path()).model).map_err(|e| e.to_string())?;
    let again = loaded
        .predict(&corpus, runs[0].ranges.boundary..runs[0].ranges.end)
        .map_err(|e| e.to_string())?;
    let bit_exact = again.len() == runs[0].predictions.len()
        && again
            .iter()
            .zip(&runs[0].predictions)
            .all(|(x, y)| x.week == y.week && x.rate.to_bits() == y.rate.to_bits());
    let detail = format!(
        "{} output files identical across reruns: {identical}; reloaded predictions bit-exact: {bit_exact}",
        a.len()
    );
    check(identical && bit_exact && loaded == runs[0].model, detail.clone(), detail)
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("decomposition reconstruction", reconstruction),
        ("ridge oracle equivalence", ridge_oracle_equivalence),
        ("greedy selection oracle", greedy_oracle_equivalence),
        ("planted nowcast", planted_nowcast),
        ("planted forecast", planted_forecast),
        ("seasonal gate", seasonal_gate),
        ("scale smoke test", scale_smoke),
        ("determinism and persistence", determinism),
    ];
    let mut failed = 0;
    for (k, (name, f)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(d) => println!("criterion {} {name}: PASS ({d})", k + 1),
            Err(d) => {
                failed += 1;
                println!("criterion {} {name}: FAIL ({d})", k + 1);
            }
        }
    }
    println!("acceptance: {}/{} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
