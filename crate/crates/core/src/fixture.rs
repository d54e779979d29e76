//! Synthetic clustered corpus for offline runs and tests.
//!
//! Topics are Gaussian clusters in a shared latent space. Every simulated
//! embedding model sees the latent vectors through its own random linear map
//! plus a little model-specific noise, so the ensemble agrees on topic
//! structure without the models being identical. Queries sit close to their
//! topic center; each query's positive is an ordinary member of its topic.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::atomic;
use crate::corpus::{self, Document, DocumentSet, QrelPair, QrelSet, Query, QuerySet};
use crate::embed::{EmbeddingStore, Ensemble};
use crate::eval::{RunScores, ScoreEntry};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureConfig {
    pub n_docs: usize,
    pub n_queries: usize,
    pub n_clusters: usize,
    pub latent_dim: usize,
    /// `(model name, output dimension)` per simulated model.
    pub models: Vec<(String, usize)>,
    pub center_scale: f64,
    pub doc_spread: f64,
    pub query_spread: f64,
    pub model_noise: f64,
    /// Fraction of documents generated with at least 1024 tokens.
    pub long_fraction: f64,
    /// Scored documents per query in the bundled run file.
    pub run_depth: usize,
    pub seed: u64,
}

impl Default for FixtureConfig {
    fn default() -> Self {
        Self {
            n_docs: 4000,
            n_queries: 200,
            n_clusters: 8,
            latent_dim: 16,
            models: vec![
                ("sim-encoder-a".into(), 24),
                ("sim-encoder-b".into(), 16),
                ("sim-encoder-c".into(), 12),
            ],
            center_scale: 3.0,
            doc_spread: 1.0,
            query_spread: 0.3,
            model_noise: 0.05,
            long_fraction: 0.02,
            run_depth: 100,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Fixture {
    pub config: FixtureConfig,
    pub docs: DocumentSet,
    pub queries: QuerySet,
    pub qrels: QrelSet,
    /// Topic label of every document and query id.
    pub labels: HashMap<String, usize>,
    pub ensemble: Ensemble,
    pub run: RunScores,
}

fn gaussian(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            scale * z
        })
        .collect()
}

fn text_for(rng: &mut ChaCha8Rng, topic: usize, len: usize) -> String {
    let mut s = String::with_capacity(len * 8);
    for i in 0..len {
        if i > 0 {
            s.push(' ');
        }
        // mostly topic vocabulary, some shared words
        if rng.random_bool(0.7) {
            let _ = write!(s, "t{topic}w{}", rng.random_range(0..40));
        } else {
            let _ = write!(s, "common{}", rng.random_range(0..60));
        }
    }
    s
}

/// Generates a fixture deterministically from `config.seed`.
pub fn generate(config: &FixtureConfig) -> Fixture {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let l = config.latent_dim;
    let centers: Vec<Vec<f64>> = (0..config.n_clusters)
        .map(|_| gaussian(&mut rng, l, config.center_scale))
        .collect();

    let mut labels = HashMap::new();
    let mut doc_latent = Vec::with_capacity(config.n_docs);
    let mut docs = Vec::with_capacity(config.n_docs);
    for i in 0..config.n_docs {
        let topic = i % config.n_clusters;
        let noise = gaussian(&mut rng, l, config.doc_spread);
        doc_latent.push(centers[topic].iter().zip(noise).map(|(c, n)| c + n).collect::<Vec<_>>());
        let len = if rng.random_bool(config.long_fraction) {
            rng.random_range(1024..1300)
        } else {
            rng.random_range(20..200)
        };
        let id = format!("doc-{i:05}");
        labels.insert(id.clone(), topic);
        docs.push(Document {
            id,
            text: text_for(&mut rng, topic, len),
            meta: Some([("topic".to_string(), topic.to_string())].into()),
        });
    }

    // positives: distinct members of each query's topic
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); config.n_clusters];
    for i in 0..config.n_docs {
        members[i % config.n_clusters].push(i);
    }
    for m in &mut members {
        m.shuffle(&mut rng);
    }

    let mut query_latent = Vec::with_capacity(config.n_queries);
    let mut queries = Vec::with_capacity(config.n_queries);
    let mut pairs = Vec::with_capacity(config.n_queries);
    for qi in 0..config.n_queries {
        let topic = qi % config.n_clusters;
        let noise = gaussian(&mut rng, l, config.query_spread);
        query_latent.push(centers[topic].iter().zip(noise).map(|(c, n)| c + n).collect::<Vec<_>>());
        let id = format!("query-{qi:04}");
        labels.insert(id.clone(), topic);
        let len = rng.random_range(4..12);
        queries.push(Query {
            id: id.clone(),
            text: text_for(&mut rng, topic, len),
        });
        let pool = &members[topic];
        let pos = pool[(qi / config.n_clusters) % pool.len()];
        pairs.push(QrelPair {
            query_id: id,
            doc_id: docs[pos].id.clone(),
            grade: 1,
        });
    }

    let noise = Normal::new(0.0, config.model_noise.max(0.0)).expect("valid std-dev");
    let mut doc_stores = Vec::new();
    let mut query_stores = Vec::new();
    for (name, dim) in &config.models {
        let map: Vec<Vec<f64>> = (0..*dim)
            .map(|_| gaussian(&mut rng, l, 1.0 / (l as f64).sqrt()))
            .collect();
        let mut project = |latent: &[Vec<f64>]| -> Vec<f32> {
            latent
                .iter()
                .flat_map(|x| {
                    map.iter()
                        .map(|row| {
                            let v: f64 = row.iter().zip(x).map(|(a, b)| a * b).sum();
                            (v + noise.sample(&mut rng)) as f32
                        })
                        .collect::<Vec<_>>()
                })
                .collect()
        };
        let dm = project(&doc_latent);
        let qm = project(&query_latent);
        doc_stores.push(
            EmbeddingStore::new(name, *dim, docs.iter().map(|d| d.id.clone()).collect(), dm, false)
                .expect("fixture store is valid"),
        );
        query_stores.push(
            EmbeddingStore::new(name, *dim, queries.iter().map(|q| q.id.clone()).collect(), qm, false)
                .expect("fixture store is valid"),
        );
    }

    let run = bi_encoder_run(&doc_latent, &query_latent, &docs, &queries, &pairs, config.run_depth, &mut rng);

    Fixture {
        config: config.clone(),
        docs: DocumentSet::from_records(docs).expect("unique ids"),
        queries: QuerySet::from_records(queries).expect("unique ids"),
        qrels: QrelSet::from_pairs(pairs).expect("unique pairs"),
        labels,
        ensemble: Ensemble::new(doc_stores, query_stores, true).expect("consistent stores"),
        run,
    }
}

/// A noisy first-stage run: cosine similarity in latent space plus jitter,
/// top `depth` documents per query, with the positive always present. The
/// positive gets a random relevance bonus so the run ranks it well above its
/// topic average but not always first.
fn bi_encoder_run(
    doc_latent: &[Vec<f64>],
    query_latent: &[Vec<f64>],
    docs: &[Document],
    queries: &[Query],
    pairs: &[QrelPair],
    depth: usize,
    rng: &mut ChaCha8Rng,
) -> RunScores {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let doc_norms: Vec<f64> = doc_latent.iter().map(|d| norm(d)).collect();
    let positive: HashMap<&str, &str> = pairs
        .iter()
        .map(|p| (p.query_id.as_str(), p.doc_id.as_str()))
        .collect();
    let mut entries = Vec::new();
    for (q, ql) in queries.iter().zip(query_latent) {
        let qn = norm(ql);
        let mut scored: Vec<(f64, usize)> = doc_latent
            .iter()
            .zip(&doc_norms)
            .enumerate()
            .map(|(i, (d, dn))| {
                let cos: f64 = d.iter().zip(ql).map(|(a, b)| a * b).sum::<f64>() / (dn * qn);
                let mut s = cos + rng.random_range(-0.05..0.05);
                if docs[i].id == positive[q.id.as_str()] {
                    s += rng.random_range(0.0..0.1);
                }
                (s, i)
            })
            .collect();
        scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        let pos = positive[q.id.as_str()];
        let mut have_pos = false;
        for &(s, i) in scored.iter().take(depth) {
            have_pos |= docs[i].id == pos;
            entries.push(ScoreEntry {
                query_id: q.id.clone(),
                doc_id: docs[i].id.clone(),
                score: round6(s),
            });
        }
        if !have_pos {
            let (s, i) = scored.iter().find(|(_, i)| docs[*i].id == pos).copied().unwrap();
            entries.push(ScoreEntry {
                query_id: q.id.clone(),
                doc_id: docs[i].id.clone(),
                score: round6(s),
            });
        }
    }
    RunScores::new(entries).expect("fixture run is valid")
}

fn round6(x: f64) -> f64 {
    (x * 1e6).round() / 1e6
}

pub const CORPUS_FILE: &str = "corpus.jsonl";
pub const QUERIES_FILE: &str = "queries.jsonl";
pub const QRELS_FILE: &str = "qrels.tsv";
pub const LABELS_FILE: &str = "labels.tsv";
pub const RUN_FILE: &str = "run.tsv";
pub const STORES_DIR: &str = "stores";

impl Fixture {
    /// Writes corpus, queries, qrels, topic labels, the run file and the
    /// precomputed per-model stores under `dir`.
    pub fn write(&self, dir: &Path) -> io::Result<()> {
        fs::create_dir_all(dir)?;
        atomic::write_file(&dir.join(CORPUS_FILE), |w| corpus::write_jsonl(self.docs.records(), w))?;
        atomic::write_file(&dir.join(QUERIES_FILE), |w| {
            corpus::write_jsonl(self.queries.records(), w)
        })?;
        atomic::write_file(&dir.join(QRELS_FILE), |w| {
            for p in self.qrels.pairs() {
                writeln!(w, "{}\t{}\t{}", p.query_id, p.doc_id, p.grade)?;
            }
            Ok(())
        })?;
        atomic::write_file(&dir.join(LABELS_FILE), |w| {
            for d in &self.docs {
                writeln!(w, "{}\t{}", d.id, self.labels[&d.id])?;
            }
            for q in &self.queries {
                writeln!(w, "{}\t{}", q.id, self.labels[&q.id])?;
            }
            Ok(())
        })?;
        atomic::write_file(&dir.join(RUN_FILE), |w| {
            for e in self.run.entries() {
                writeln!(w, "{}\t{}\t{}", e.query_id, e.doc_id, e.score)?;
            }
            Ok(())
        })?;
        self.ensemble
            .write(&dir.join(STORES_DIR))
            .map_err(|e| io::Error::other(e.to_string()))
    }
}

/// Reads a `id<TAB>label` file written by [`Fixture::write`].
pub fn read_labels(path: &Path) -> io::Result<HashMap<String, usize>> {
    fs::read_to_string(path)?
        .lines()
        .filter(|l| !l.is_empty())
        .map(|l| {
            let (id, label) = l
                .split_once('\t')
                .ok_or_else(|| io::Error::other(format!("bad label line {l:?}")))?;
            let label = label.parse().map_err(|_| io::Error::other(format!("bad label {label:?}")))?;
            Ok((id.to_string(), label))
        })
        .collect()
}
