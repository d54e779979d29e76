//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits nonzero if any failed. Reference values come from brute-force
//! oracles written here, independent of the library code paths.

use std::collections::{BTreeSet, HashMap};
use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde_json::Value;

use negminer_core::baselines::{self, Bm25Index, Bm25Params};
use negminer_core::corpus::{Document, DocumentSet, QrelPair, QrelSet, Query, QuerySet};
use negminer_core::embed::{EmbeddingStore, Ensemble, VectorTable};
use negminer_core::eval::{self, MissingPolicy, RunScores, ScoreEntry};
use negminer_core::fixture::{self, FixtureConfig};
use negminer_core::miner::{self, MiningConfig};
use negminer_core::objective;
use negminer_core::pca::{self, PcaModel, THRESHOLD_SLACK, VARIANCE_SWEEP};
use negminer_core::triplets::{self, NO_CANDIDATE};

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn negminer(args: &[&str]) -> Result<String, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_negminer"))
        .args(args)
        .env_remove("NEGMINER_PROVIDER_URL")
        .output()
        .map_err(|e| format!("cannot run negminer: {e}"))?;
    if !out.status.success() {
        return Err(format!(
            "negminer {} failed: {}",
            args.join(" "),
            String::from_utf8_lossy(&out.stderr).trim()
        ));
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

fn last_json(stdout: &str) -> Result<Value, String> {
    let line = stdout.lines().last().ok_or("empty stdout")?;
    serde_json::from_str(line).map_err(|e| format!("bad json {line:?}: {e}"))
}

fn p(path: &Path) -> &str {
    path.to_str().expect("utf-8 temp path")
}

fn randn(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

// ---------------------------------------------------------------- oracles

fn oracle_cos_dist(a: &[f64], b: &[f64]) -> f64 {
    let (mut ab, mut aa, mut bb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        ab += x * y;
        aa += x * x;
        bb += y * y;
    }
    1.0 - ab / (aa.sqrt() * bb.sqrt())
}

/// Filter every candidate by both criteria, then sort by (d(Q,D), id).
fn oracle_mine(
    q: &[f64],
    pd: &[f64],
    cands: &[(String, Vec<f64>)],
    k: usize,
    eps: f64,
) -> Vec<(String, f64, f64)> {
    let d_q_pd = oracle_cos_dist(q, pd);
    let mut kept: Vec<(String, f64, f64)> = Vec::new();
    for (id, d) in cands {
        let d_q_d = oracle_cos_dist(q, d);
        let d_pd_d = oracle_cos_dist(pd, d);
        if d_q_d + eps < d_q_pd && d_q_d + eps < d_pd_d {
            kept.push((id.clone(), d_q_d, d_pd_d));
        }
    }
    kept.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(&b.0)));
    kept.truncate(k);
    kept
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix. Returns
/// eigenvalues and unit eigenvectors, unsorted.
fn jacobi_eigen(mut a: Vec<Vec<f64>>) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = a.len();
    let mut v: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| f64::from(i == j)).collect()).collect();
    let scale: f64 = a.iter().flatten().map(|x| x * x).sum::<f64>().max(f64::MIN_POSITIVE);
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum();
        if off <= 1e-30 * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for row in v.iter_mut() {
                    let (vkp, vkq) = (row[p], row[q]);
                    row[p] = c * vkp - s * vkq;
                    row[q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let values = (0..n).map(|i| a[i][i]).collect();
    let vectors = (0..n).map(|j| (0..n).map(|i| v[i][j]).collect()).collect();
    (values, vectors)
}

/// Sample covariance by the textbook double loop, then Jacobi. Sorted
/// descending, eigenvalues clamped at zero.
fn oracle_pca(data: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = data.len();
    let d = data[0].len();
    let mean: Vec<f64> = (0..d).map(|j| data.iter().map(|r| r[j]).sum::<f64>() / n as f64).collect();
    let mut cov = vec![vec![0.0; d]; d];
    for (j, row) in cov.iter_mut().enumerate() {
        for (k, c) in row.iter_mut().enumerate() {
            *c = data.iter().map(|r| (r[j] - mean[j]) * (r[k] - mean[k])).sum::<f64>() / (n as f64 - 1.0);
        }
    }
    let (vals, vecs) = jacobi_eigen(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| vals[b].partial_cmp(&vals[a]).unwrap());
    (
        order.iter().map(|&i| vals[i].max(0.0)).collect(),
        order.iter().map(|&i| vecs[i].clone()).collect(),
    )
}

/// Mean over judged queries (qrels order) of 1/rank of the first positive
/// within the top k of the score-desc, id-asc ranking.
fn oracle_mrr(
    entries: &[(String, String, f64)],
    qrels: &[(String, String)],
    k: usize,
) -> f64 {
    let mut queries: Vec<&str> = Vec::new();
    for (q, _) in qrels {
        if !queries.contains(&q.as_str()) {
            queries.push(q);
        }
    }
    let mut total = 0.0;
    for q in &queries {
        let mut docs: Vec<(&str, f64)> = entries
            .iter()
            .filter(|e| e.0 == *q)
            .map(|e| (e.1.as_str(), e.2))
            .collect();
        docs.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(b.0)));
        let mut rr = 0.0;
        for (i, (d, _)) in docs.iter().enumerate().take(k) {
            if qrels.iter().any(|(qq, dd)| qq == q && dd == d) {
                rr = 1.0 / (i + 1) as f64;
                break;
            }
        }
        total += rr;
    }
    total / queries.len() as f64
}

fn oracle_bm25(
    docs: &[(String, String)],
    query: &str,
    k1: f64,
    b: f64,
) -> Vec<(String, f64)> {
    let toks: Vec<Vec<&str>> = docs.iter().map(|(_, t)| t.split_whitespace().collect()).collect();
    let n = docs.len() as f64;
    let avg = toks.iter().map(Vec::len).sum::<usize>() as f64 / n;
    docs.iter()
        .zip(&toks)
        .map(|((id, _), dt)| {
            let mut s = 0.0;
            for term in query.split_whitespace() {
                let tf = dt.iter().filter(|t| **t == term).count() as f64;
                if tf == 0.0 {
                    continue;
                }
                let df = toks.iter().filter(|d| d.contains(&term)).count() as f64;
                let idf = ((n - df + 0.5) / (df + 0.5) + 1.0).ln();
                s += idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * dt.len() as f64 / avg));
            }
            (id.clone(), s)
        })
        .collect()
}

// ---------------------------------------------------------------- criteria

/// Fixture written by the CLI and mined single-threaded, then verified.
fn criterion_1() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let fx = dir.path().join("fx");
    let ens = dir.path().join("ens");
    let trip = dir.path().join("triplets.jsonl");
    let start = Instant::now();
    negminer(&["--threads", "1", "fixture", "--out", p(&fx), "--docs", "4000", "--queries", "200", "--clusters", "8"])?;
    negminer(&[
        "--threads", "1", "embed",
        "--corpus", p(&fx.join(fixture::CORPUS_FILE)),
        "--queries", p(&fx.join(fixture::QUERIES_FILE)),
        "--precomputed", p(&fx.join(fixture::STORES_DIR)),
        "--out", p(&ens),
    ])?;
    let qrels = fx.join(fixture::QRELS_FILE);
    negminer(&["--threads", "1", "mine", "--stores", p(&ens), "--qrels", p(&qrels), "--out", p(&trip), "-k", "5"])?;
    let report = last_json(&negminer(&[
        "--threads", "1", "verify", "--triplets", p(&trip), "--stores", p(&ens), "--qrels", p(&qrels),
    ])?)?;
    let elapsed = start.elapsed();
    let negatives = report["negatives"].as_u64().unwrap_or(0);
    check(report["triplets"] == 200, || format!("expected 200 triplets, report {report}"))?;
    check(negatives > 0, || "no negatives mined".into())?;
    check(report["violations"] == 0 && report["drift"] == 0 && report["passed"] == true, || {
        format!("verify report {report}")
    })?;
    check(elapsed < Duration::from_secs(30), || format!("took {elapsed:?}"))?;
    Ok(format!(
        "{negatives} negatives over 200 pairs, 0 violations, max drift {:e}, {:.2}s single-threaded",
        report["max_drift"].as_f64().unwrap_or(f64::NAN),
        elapsed.as_secs_f64()
    ))
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2002);
    let mut total_selected = 0;
    let mut with_ties = 0;
    let mut max_err: f64 = 0.0;
    for inst in 0..50 {
        let dim = rng.random_range(2..=16);
        let n = if inst % 10 == 0 { 10_000 } else { rng.random_range(1..=10_000) };
        let k = rng.random_range(1..=25);
        let eps = [0.0, 0.0, 1e-3, 0.02][rng.random_range(0..4)];
        let q: Vec<f64> = (0..dim).map(|_| randn(&mut rng)).collect();
        let pd: Vec<f64> = q.iter().map(|x| x + 0.6 * randn(&mut rng)).collect();
        let mut ids: Vec<usize> = (0..n).collect();
        ids.shuffle(&mut rng);
        let mut cands: Vec<(String, Vec<f64>)> = Vec::with_capacity(n);
        for (i, id) in ids.iter().enumerate() {
            let v: Vec<f64> = match i {
                0 => pd.clone(),
                _ if i % 37 == 0 => cands[rng.random_range(0..i)].1.clone(),
                _ => q.iter().map(|x| x * rng.random_range(0.0..1.5) + randn(&mut rng)).collect(),
            };
            cands.push((format!("c{id:05}"), v));
        }
        let refs: Vec<(&str, &[f64])> = cands.iter().map(|(i, v)| (i.as_str(), v.as_slice())).collect();
        let config = MiningConfig { k_negatives: k, epsilon: eps, ..Default::default() };
        let got = miner::mine_for_pair(("q", &q), ("pd", &pd), &refs, &config).map_err(|e| e.to_string())?;
        let want = oracle_mine(&q, &pd, &cands, k, eps);
        let got_ids: Vec<&str> = got.negative_ids().collect();
        let want_ids: Vec<&str> = want.iter().map(|w| w.0.as_str()).collect();
        check(got_ids == want_ids, || format!("instance {inst}: ids {got_ids:?} != oracle {want_ids:?}"))?;
        let d_q_pd = oracle_cos_dist(&q, &pd);
        max_err = max_err.max((got.d_q_pd.unwrap() - d_q_pd).abs());
        for (g, w) in got.negatives.iter().zip(&want) {
            max_err = max_err.max((g.d_q_d.unwrap() - w.1).abs()).max((g.d_pd_d.unwrap() - w.2).abs());
        }
        check(max_err <= 1e-12, || format!("instance {inst}: distance error {max_err:e}"))?;
        check(got.negatives.is_empty() == (got.no_negative.as_deref() == Some(NO_CANDIDATE)), || {
            format!("instance {inst}: reason field inconsistent")
        })?;
        if want.windows(2).any(|w| w[0].1 == w[1].1) {
            with_ties += 1;
        }
        total_selected += want.len();
    }
    Ok(format!(
        "50 instances, {total_selected} negatives, {with_ties} with exact distance ties, max distance error {max_err:e}"
    ))
}

struct PcaCase {
    data: Vec<Vec<f64>>,
    flat: Vec<f64>,
    d: usize,
}

fn pca_cases() -> Vec<PcaCase> {
    let mut rng = ChaCha8Rng::seed_from_u64(3003);
    (0..100)
        .map(|_| {
            let n = rng.random_range(2..=20);
            let d = rng.random_range(1..=20);
            let scales: Vec<f64> = (0..d).map(|_| randn(&mut rng).exp()).collect();
            let data: Vec<Vec<f64>> = (0..n)
                .map(|_| scales.iter().map(|s| s * randn(&mut rng) + 0.5).collect())
                .collect();
            let flat = data.iter().flatten().copied().collect();
            PcaCase { data, flat, d }
        })
        .collect()
}

fn criterion_3() -> Outcome {
    let mut max_eig_err: f64 = 0.0;
    let mut max_axis_err: f64 = 0.0;
    let mut max_ortho: f64 = 0.0;
    let mut axes_compared = 0;
    let mut gram_route = 0;
    for (c, case) in pca_cases().iter().enumerate() {
        let spec = pca::spectrum(&case.flat, case.d).map_err(|e| e.to_string())?;
        let (vals, vecs) = oracle_pca(&case.data);
        if case.d > case.data.len() {
            gram_route += 1;
        }
        for (a, b) in spec.eigenvalues.iter().zip(&vals) {
            max_eig_err = max_eig_err.max((a - b).abs());
        }
        check(max_eig_err <= 1e-8, || format!("case {c}: eigenvalue error {max_eig_err:e}"))?;
        let top = vals[0].max(f64::MIN_POSITIVE);
        for (i, axis) in spec.axes.iter().enumerate() {
            let gap_lo = if i + 1 < vals.len() { vals[i] - vals[i + 1] } else { f64::INFINITY };
            let gap_hi = if i > 0 { vals[i - 1] - vals[i] } else { f64::INFINITY };
            // eigenvectors are only defined up to rotation inside clusters
            if vals[i] <= 1e-9 * top || gap_lo.min(gap_hi) <= 1e-3 * top {
                continue;
            }
            let plus = axis.iter().zip(&vecs[i]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            let minus = axis.iter().zip(&vecs[i]).map(|(a, b)| (a + b).abs()).fold(0.0, f64::max);
            max_axis_err = max_axis_err.max(plus.min(minus));
            axes_compared += 1;
        }
        check(max_axis_err <= 1e-6, || format!("case {c}: axis error {max_axis_err:e}"))?;

        let total: f64 = vals.iter().sum();
        for &t in &VARIANCE_SWEEP {
            let model = PcaModel::fit(&case.flat, case.d, t).map_err(|e| e.to_string())?;
            let comps: Vec<&[f64]> = model.components().collect();
            for (i, a) in comps.iter().enumerate() {
                for (j, b) in comps.iter().enumerate() {
                    let dot: f64 = a.iter().zip(*b).map(|(x, y)| x * y).sum();
                    max_ortho = max_ortho.max((dot - f64::from(i == j)).abs());
                }
            }
            let m = model.n_components();
            let cum = |m: usize| vals[..m].iter().sum::<f64>() / total;
            check(cum(m) >= t - THRESHOLD_SLACK, || format!("case {c}: {m} components reach only {} < {t}", cum(m)))?;
            check(m == 1 || cum(m - 1) < t - THRESHOLD_SLACK, || {
                format!("case {c}: {m} components not minimal at {t}, {} already suffice", m - 1)
            })?;
        }
        check(max_ortho <= 1e-6, || format!("case {c}: orthonormality defect {max_ortho:e}"))?;
    }
    Ok(format!(
        "100 matrices ({gram_route} via Gram route), eigenvalue error {max_eig_err:e}, {axes_compared} axes with max error {max_axis_err:e}, orthonormality defect {max_ortho:e}, minimal at all 5 thresholds"
    ))
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4004);
    let mut fits = 0;
    let mut min_margin = f64::INFINITY;
    for (c, case) in pca_cases().iter().enumerate() {
        let spec = pca::spectrum(&case.flat, case.d).map_err(|e| e.to_string())?;
        let mut ts: Vec<f64> = VARIANCE_SWEEP.to_vec();
        ts.extend((0..20).map(|_| rng.random_range(0.01..1.0)));
        ts.extend([1.0, 0.5, 1e-6]);
        ts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut prev = 0;
        for &t in &ts {
            let model = PcaModel::from_spectrum(&spec, t);
            let direct = PcaModel::fit(&case.flat, case.d, t).map_err(|e| e.to_string())?;
            check(direct.n_components() == model.n_components(), || format!("case {c}: fit and spectrum disagree"))?;
            let cum = model.cumulative_variance();
            min_margin = min_margin.min(cum - t);
            check(cum >= t - THRESHOLD_SLACK, || format!("case {c}: cumulative {cum} below {t}"))?;
            check(model.n_components() >= prev, || format!("case {c}: n_components drops at {t}"))?;
            prev = model.n_components();
            fits += 1;
        }
    }

    // same property through the CLI on fixture stores
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let fx = dir.path().join("fx");
    negminer(&["fixture", "--out", p(&fx), "--docs", "800", "--queries", "40"])?;
    let stores = fx.join(fixture::STORES_DIR);
    let mut counts = Vec::new();
    for t in ["0.70", "0.80", "0.90", "0.95", "0.99"] {
        let out = dir.path().join(format!("pca-{t}"));
        let r = last_json(&negminer(&["pca", "fit", "--stores", p(&stores), "--out", p(&out), "--variance", t])?)?;
        let cum = r["cumulative_variance"].as_f64().ok_or("no cumulative_variance")?;
        check(cum >= t.parse::<f64>().unwrap(), || format!("cli fit at {t}: cumulative {cum}"))?;
        counts.push(r["n_components"].as_u64().ok_or("no n_components")?);
    }
    check(counts.windows(2).all(|w| w[0] <= w[1]), || format!("cli n_components not monotone: {counts:?}"))?;
    Ok(format!(
        "{fits} library fits reach the threshold within {THRESHOLD_SLACK:e} float slack (smallest surplus {min_margin:e}); CLI sweep 0.70..0.99 keeps {counts:?} components"
    ))
}

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5005);
    let ks = [1, 3, 5, 10, 20];
    let mut checked = 0;
    for run_no in 0..200 {
        let n_queries = rng.random_range(1..=30);
        let n_docs = rng.random_range(1..=60);
        let zero_policy = run_no % 2 == 1;
        let mut qrels = Vec::new();
        let mut entries = Vec::new();
        for qi in 0..n_queries {
            let q = format!("q{qi:02}");
            let mut docs: Vec<usize> = (0..n_docs).collect();
            docs.shuffle(&mut rng);
            let n_pos = rng.random_range(1..=3).min(n_docs);
            for &d in &docs[..n_pos] {
                qrels.push((q.clone(), format!("d{d:02}")));
            }
            if zero_policy && rng.random_bool(0.15) {
                continue;
            }
            docs.shuffle(&mut rng);
            let depth = rng.random_range(1..=n_docs);
            let coarse = rng.random_bool(0.5);
            for &d in &docs[..depth] {
                let score = if coarse { f64::from(rng.random_range(0..4u8)) } else { randn(&mut rng) };
                entries.push((q.clone(), format!("d{d:02}"), score));
            }
        }
        qrels.shuffle(&mut rng);
        let set = QrelSet::from_pairs(
            qrels
                .iter()
                .map(|(q, d)| QrelPair { query_id: q.clone(), doc_id: d.clone(), grade: 1 })
                .collect(),
        )
        .map_err(|e| e.to_string())?;
        let run = RunScores::new(
            entries
                .iter()
                .map(|(q, d, s)| ScoreEntry { query_id: q.clone(), doc_id: d.clone(), score: *s })
                .collect(),
        )
        .map_err(|e| e.to_string())?;
        let policy = if zero_policy { MissingPolicy::Zero } else { MissingPolicy::Error };
        let mut at = HashMap::new();
        for &k in &ks {
            let got = eval::mrr_at_k(&run, &set, k, policy).map_err(|e| e.to_string())?.mrr;
            let want = oracle_mrr(&entries, &qrels, k);
            check(got == want, || format!("run {run_no} k={k}: {got} != oracle {want}"))?;
            at.insert(k, got);
            checked += 1;
        }
        check(at[&10] >= at[&3], || format!("run {run_no}: MRR@10 {} < MRR@3 {}", at[&10], at[&3]))?;
        let docs = DocumentSet::from_records(
            (0..n_docs)
                .map(|d| Document { id: format!("d{d:02}"), text: "x".into(), meta: None })
                .collect(),
        )
        .map_err(|e| e.to_string())?;
        let report = eval::eval_report(&run, &set, &docs, &[3, 10], 1024, policy).map_err(|e| e.to_string())?;
        check(report.mrr[&3] == at[&3] && report.mrr[&10] == at[&10], || format!("run {run_no}: report differs"))?;
    }
    Ok(format!("200 runs, {checked} MRR@k values equal to the oracle bit for bit, MRR@10 >= MRR@3 on all"))
}

fn criterion_6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6006);
    let h = 1e-5;
    let m = objective::DEFAULT_MARGIN;
    let loss_at = |q: &[f64], p: &[f64], n: &[f64]| {
        objective::triplet_loss(oracle_cos_dist(q, p), oracle_cos_dist(q, n), m)
    };
    let mut active = 0;
    let mut inactive = 0;
    let mut max_rel: f64 = 0.0;
    let mut max_scale: f64 = 0.0;
    while active < 150 || inactive < 50 {
        let v = |rng: &mut ChaCha8Rng| (0..8).map(|_| randn(rng)).collect::<Vec<f64>>();
        let (q, pd, hn) = (v(&mut rng), v(&mut rng), v(&mut rng));
        let l = loss_at(&q, &pd, &hn);
        let g = objective::triplet_loss_grad(&q, &pd, &hn, m).map_err(|e| e.to_string())?;
        if l == 0.0 {
            if inactive < 50 {
                check(g.loss == 0.0, || format!("inactive triple has loss {}", g.loss))?;
                check(g.query.iter().chain(&g.positive).chain(&g.negative).all(|&x| x == 0.0), || {
                    "inactive triple has nonzero gradient".into()
                })?;
                inactive += 1;
            }
            continue;
        }
        // keep finite differences away from the kink
        if l < 1e-3 || active >= 150 {
            continue;
        }
        active += 1;
        check((g.loss - l).abs() <= 1e-12, || format!("loss {} vs {l}", g.loss))?;
        let inputs = [&q, &pd, &hn];
        let grads = [&g.query, &g.positive, &g.negative];
        for which in 0..3 {
            for i in 0..8 {
                let mut plus: Vec<Vec<f64>> = inputs.iter().map(|v| v.to_vec()).collect();
                let mut minus = plus.clone();
                plus[which][i] += h;
                minus[which][i] -= h;
                let fd = (loss_at(&plus[0], &plus[1], &plus[2]) - loss_at(&minus[0], &minus[1], &minus[2])) / (2.0 * h);
                let an = grads[which][i];
                let rel = (an - fd).abs() / an.abs().max(fd.abs()).max(1e-6);
                max_rel = max_rel.max(rel);
            }
            // scale invariance: derivative along the input itself vanishes
            let along: f64 = grads[which].iter().zip(inputs[which].iter()).map(|(a, b)| a * b).sum();
            max_scale = max_scale.max(along.abs());
        }
    }
    check(max_rel <= 1e-4, || format!("max relative error {max_rel:e}"))?;
    check(max_scale <= 1e-8, || format!("directional derivative along input {max_scale:e}"))?;
    Ok(format!(
        "{active} active triples in R^8, max relative error {max_rel:e} (h=1e-5); {inactive} inactive triples exactly zero; scale-direction derivative {max_scale:e}"
    ))
}

fn criterion_7() -> Outcome {
    // single document "a a b", query "a": N=1, df=1, tf=2, len=avglen=3
    // idf = ln((1-1+0.5)/(1+0.5) + 1) = ln(4/3) = 0.2876820724517809
    // tf part = 2 * 2.2 / (2 + 1.2) = 1.375
    let hand = 0.395_562_849_621_198_7;
    let index = Bm25Index::build([("d", "a a b")]).map_err(|e| e.to_string())?;
    let got = baselines::bm25_score(&index, &Bm25Params::default(), &["a".to_string()], "d")
        .map_err(|e| e.to_string())?;
    check((got - hand).abs() <= 1e-6, || format!("hand check {got} vs {hand}"))?;

    let vocab = [
        "river", "bank", "loan", "water", "money", "fish", "stream", "credit", "boat", "rate", "flow", "deposit",
        "shore", "interest", "mortgage",
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(7007);
    let mut compared = 0;
    let mut short_lists = 0;
    for corpus_no in 0..40 {
        let docs: Vec<(String, String)> = (0..20)
            .map(|i| {
                let len = rng.random_range(1..=15);
                let words: Vec<&str> = (0..len).map(|_| vocab[rng.random_range(0..vocab.len())]).collect();
                (format!("doc{i:02}"), words.join(" "))
            })
            .collect();
        let queries: Vec<(String, String)> = (0..8)
            .map(|i| {
                let len = rng.random_range(1..=5);
                let words: Vec<&str> = (0..len).map(|_| vocab[rng.random_range(0..vocab.len())]).collect();
                (format!("q{i}"), words.join(" "))
            })
            .collect();
        let pairs: Vec<QrelPair> = queries
            .iter()
            .map(|(q, _)| QrelPair { query_id: q.clone(), doc_id: format!("doc{:02}", rng.random_range(0..20)), grade: 1 })
            .collect();
        let qrels = QrelSet::from_pairs(pairs.clone()).map_err(|e| e.to_string())?;
        let doc_set = DocumentSet::from_records(
            docs.iter().map(|(id, t)| Document { id: id.clone(), text: t.clone(), meta: None }).collect(),
        )
        .map_err(|e| e.to_string())?;
        let query_set = QuerySet::from_records(
            queries.iter().map(|(id, t)| Query { id: id.clone(), text: t.clone() }).collect(),
        )
        .map_err(|e| e.to_string())?;
        let params = if corpus_no % 2 == 0 {
            Bm25Params::default()
        } else {
            Bm25Params { k1: rng.random_range(0.0..2.0), b: rng.random_range(0.0..=1.0) }
        };
        let k = rng.random_range(1..=10);
        let index = baselines::build_bm25_index(&doc_set).map_err(|e| e.to_string())?;
        let got = baselines::sample_bm25(&qrels, &query_set, &index, &params, k).map_err(|e| e.to_string())?;
        for (rec, (qid, qtext)) in got.iter().zip(&queries) {
            check(&rec.query_id == qid, || "record order differs from qrels".into())?;
            let positive = &pairs.iter().find(|p| &p.query_id == qid).unwrap().doc_id;
            let mut scored: Vec<(String, f64)> = oracle_bm25(&docs, qtext, params.k1, params.b)
                .into_iter()
                .filter(|(id, s)| *s > 0.0 && id != positive)
                .collect();
            scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
            scored.truncate(k);
            let want: Vec<&str> = scored.iter().map(|s| s.0.as_str()).collect();
            let have: Vec<&str> = rec.negative_ids().collect();
            check(have == want, || format!("corpus {corpus_no} {qid}: {have:?} != oracle {want:?}"))?;
            check(rec.no_negative.is_some() == (want.len() < k), || format!("corpus {corpus_no} {qid}: reason field"))?;
            short_lists += usize::from(want.len() < k);
            compared += 1;
        }
    }
    Ok(format!(
        "hand value {got:.10} (|err| {:e}); {compared} queries over 40 random 20-doc corpora equal the exhaustive oracle ({short_lists} short lists)",
        (got - hand).abs()
    ))
}

fn criterion_8() -> Outcome {
    let start = Instant::now();
    let fx = fixture::generate(&FixtureConfig::default());
    let (docs, queries) = fx.ensemble.concat_tables().map_err(|e| e.to_string())?;
    let mut union = docs.data().to_vec();
    union.extend_from_slice(queries.data());
    let model = PcaModel::fit(&union, docs.dim(), pca::DEFAULT_VARIANCE_THRESHOLD).map_err(|e| e.to_string())?;
    let (pq, pdocs) = (
        model.transform_table(&queries).map_err(|e| e.to_string())?,
        model.transform_table(&docs).map_err(|e| e.to_string())?,
    );
    let mined = miner::mine_all(&fx.qrels, &pq, &pdocs, &MiningConfig::default()).map_err(|e| e.to_string())?;
    let random = baselines::sample_random(&fx.qrels, docs.ids(), 1, 8).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();

    let dist = |t: &VectorTable, q: &str, u: &VectorTable, d: &str| oracle_cos_dist(t.get(q).unwrap(), u.get(d).unwrap());
    let (mut sum_hn, mut sum_rand, mut wins, mut same_hn, mut same_rand, mut n_hn) = (0.0, 0.0, 0, 0, 0, 0);
    for (m, r) in mined.iter().zip(&random) {
        let label = fx.labels[&m.query_id];
        let d_rand = dist(&pq, &r.query_id, &pdocs, &r.negatives[0].doc_id);
        sum_rand += d_rand;
        same_rand += usize::from(fx.labels[&r.negatives[0].doc_id] == label);
        if let Some(hn) = m.negatives.first() {
            let d_hn = dist(&pq, &m.query_id, &pdocs, &hn.doc_id);
            sum_hn += d_hn;
            n_hn += 1;
            wins += usize::from(d_hn < d_rand);
            same_hn += usize::from(fx.labels[&hn.doc_id] == label);
        }
    }
    let n = mined.len() as f64;
    let mean_hn = sum_hn / n_hn.max(1) as f64;
    let mean_rand = sum_rand / n;
    let win_rate = wins as f64 / n;
    let hn_share = same_hn as f64 / n_hn.max(1) as f64;
    let rand_share = same_rand as f64 / n;
    let summary = format!(
        "mean d(Q,HN) {mean_hn:.4} vs random {mean_rand:.4}; {:.1}% of queries closer; same topic {:.1}% mined vs {:.1}% random; {:.2}s",
        100.0 * win_rate,
        100.0 * hn_share,
        100.0 * rand_share,
        elapsed.as_secs_f64()
    );
    check(mean_hn < mean_rand, || summary.clone())?;
    check(win_rate >= 0.99, || summary.clone())?;
    check(hn_share >= 0.90, || summary.clone())?;
    check((0.05..=0.25).contains(&rand_share), || summary.clone())?;
    check(elapsed < Duration::from_secs(60), || summary.clone())?;
    Ok(summary)
}

fn pipeline(root: &Path, threads: &str) -> Result<(), String> {
    let fx = root.join("fx");
    let out = root.join("out");
    negminer(&["fixture", "--out", p(&fx), "--docs", "1500", "--queries", "120", "--seed", "9"])?;
    let cfg = root.join("pipeline.toml");
    let toml = format!(
        r#"
[paths]
corpus = "{fx}/corpus.jsonl"
queries = "{fx}/queries.jsonl"
qrels = "{fx}/qrels.tsv"
run = "{fx}/run.tsv"
stores = "{out}/ens"
pca_model = "{out}/pca.nmpc"
output_dir = "{out}"

[pca]
variance = 0.95

[mining]
k_negatives = 3

[sampler]
seed = 11
k = 3

[eval]
ks = [3, 10]
"#,
        fx = p(&fx),
        out = p(&out)
    );
    std::fs::create_dir_all(&out).map_err(|e| e.to_string())?;
    std::fs::write(&cfg, toml).map_err(|e| e.to_string())?;
    let c = p(&cfg);
    negminer(&["--config", c, "--threads", threads, "embed", "--precomputed", p(&fx.join(fixture::STORES_DIR))])?;
    negminer(&["--config", c, "--threads", threads, "pca", "fit"])?;
    negminer(&["--config", c, "--threads", threads, "mine"])?;
    negminer(&["--config", c, "--threads", threads, "sample", "--method", "random"])?;
    negminer(&["--config", c, "--threads", threads, "eval"])?;
    Ok(())
}

fn tree_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let path = e.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                out.push((rel, std::fs::read(&path).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn criterion_9() -> Outcome {
    let a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let b = tempfile::tempdir().map_err(|e| e.to_string())?;
    let c = tempfile::tempdir().map_err(|e| e.to_string())?;
    pipeline(a.path(), "4")?;
    pipeline(b.path(), "4")?;
    pipeline(c.path(), "1")?;
    let fa = tree_files(&a.path().join("out"));
    let names: BTreeSet<&str> = fa.iter().map(|f| f.0.as_str()).collect();
    for required in ["triplets.jsonl", "triplets.jsonl.meta.json", "random.jsonl", "report.json", "pca.nmpc"] {
        check(names.contains(required), || format!("pipeline did not write {required}"))?;
    }
    for (other, label) in [(&b, "second run"), (&c, "single-threaded run")] {
        let fo = tree_files(&other.path().join("out"));
        check(fa.len() == fo.len(), || format!("{label}: different file sets"))?;
        for (x, y) in fa.iter().zip(&fo) {
            check(x == y, || format!("{label}: {} differs", x.0))?;
        }
    }
    let bytes: usize = fa.iter().map(|f| f.1.len()).sum();
    Ok(format!(
        "{} artifacts ({bytes} bytes incl. triplets and report) byte-identical across two runs and a single-threaded rerun",
        fa.len()
    ))
}

fn criterion_10() -> Outcome {
    // PD at (1, 1); its duplicate; two candidates farther from Q than PD
    let docs = [
        ("pd", [1.0f32, 1.0, 0.0]),
        ("dup", [1.0, 1.0, 0.0]),
        ("far1", [-1.0, 0.5, 0.2]),
        ("far2", [0.0, -1.0, 0.3]),
    ];
    let q = [1.0f32, 0.2, 0.0];
    let qv: Vec<f64> = q.iter().map(|&x| f64::from(x)).collect();
    let cands: Vec<(String, Vec<f64>)> = docs[1..]
        .iter()
        .map(|(id, v)| (id.to_string(), v.iter().map(|&x| f64::from(x)).collect()))
        .collect();
    let refs: Vec<(&str, &[f64])> = cands.iter().map(|(i, v)| (i.as_str(), v.as_slice())).collect();
    let pdv: Vec<f64> = docs[0].1.iter().map(|&x| f64::from(x)).collect();
    let rec = miner::mine_for_pair(("q", &qv), ("pd", &pdv), &refs, &MiningConfig { k_negatives: 3, ..Default::default() })
        .map_err(|e| e.to_string())?;
    check(rec.negatives.is_empty(), || format!("library selected {:?}", rec.negative_ids().collect::<Vec<_>>()))?;
    check(rec.no_negative.as_deref() == Some(NO_CANDIDATE), || format!("reason {:?}", rec.no_negative))?;

    // and end to end through the CLI, in both spaces, next to a pair that does get a negative
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut doc_rows: Vec<(&str, [f32; 3])> = docs.to_vec();
    doc_rows.push(("pd2", [0.0, 0.0, 1.0]));
    doc_rows.push(("near2", [0.25, 0.0, 1.0]));
    let doc_store = EmbeddingStore::new(
        "m",
        3,
        doc_rows.iter().map(|(i, _)| i.to_string()).collect(),
        doc_rows.iter().flat_map(|(_, v)| *v).collect(),
        false,
    )
    .map_err(|e| e.to_string())?;
    let query_store = EmbeddingStore::new(
        "m",
        3,
        vec!["q".into(), "q2".into()],
        q.iter().copied().chain([0.2, 0.0, 1.0]).collect(),
        false,
    )
    .map_err(|e| e.to_string())?;
    let ens_dir = dir.path().join("ens");
    Ensemble::new(vec![doc_store], vec![query_store], true)
        .and_then(|e| e.write(&ens_dir))
        .map_err(|e| e.to_string())?;
    let qrels = dir.path().join("qrels.tsv");
    std::fs::write(&qrels, "q\tpd\nq2\tpd2\n").map_err(|e| e.to_string())?;
    let mut detail = Vec::new();
    for space in ["concat", "pca"] {
        let out = dir.path().join(format!("{space}.jsonl"));
        negminer(&[
            "mine", "--stores", p(&ens_dir), "--qrels", p(&qrels), "--out", p(&out), "--space", space,
            "--variance", "1.0", "-k", "3",
        ])?;
        let recs = triplets::read_triplets(&out).map_err(|e| e.to_string())?;
        check(recs[0].negatives.is_empty() && recs[0].no_negative.as_deref() == Some(NO_CANDIDATE), || {
            format!("{space}: pair (q, pd) got {:?}", recs[0])
        })?;
        check(recs[1].negative_ids().collect::<Vec<_>>() == ["near2"], || format!("{space}: control pair got {:?}", recs[1]))?;
        check(recs.iter().all(|r| r.negative_ids().all(|d| d != "dup")), || format!("{space}: duplicate selected"))?;
        detail.push(space);
    }
    Ok(format!(
        "duplicate of PD never selected; pair recorded as {NO_CANDIDATE:?} in the library and via the CLI in {} space",
        detail.join(" and ")
    ))
}

fn main() {
    // honor `cargo test -- --list` and name filters loosely: run everything
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let criteria: [(u32, &str, fn() -> Outcome); 10] = [
        (1, "criteria soundness", criterion_1),
        (2, "miner oracle equivalence", criterion_2),
        (3, "PCA oracle", criterion_3),
        (4, "variance threshold contract", criterion_4),
        (5, "MRR oracle", criterion_5),
        (6, "loss gradient check", criterion_6),
        (7, "BM25 hand-check and oracle", criterion_7),
        (8, "semantic-hardness separation", criterion_8),
        (9, "determinism", criterion_9),
        (10, "duplicate-positive guard", criterion_10),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (n, name, f) in criteria {
        let outcome = panic::catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("PASS criterion {n} ({name}): {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL criterion {n} ({name}): {detail}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
