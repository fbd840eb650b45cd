//! Local features, the max-margin candidate classifier and the end-to-end
//! annotator.
//!
//! Raw feature columns, in order:
//!
//! | column | value |
//! |---|---|
//! | 0 | `−log p(phrase)` under the unigram model |
//! | 1 | `log r(e)`, PageRank of the candidate (floored) |
//! | 2 | number of statements |
//! | 3 | number of sitelinks |
//! | 4 | constant 1 |
//!
//! Columns are min-max scaled with statistics frozen at training time, then
//! propagated along the mention graph as `F, M·F, …, M^k·F`. The stacked
//! row is what the linear model scores.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::{self, Counts, GoldDocument, Prediction};
use crate::exec::Exec;
use crate::ingest::{ItemRecord, RecordAccess, RecordStore};
use crate::item::{qid_string, ItemId};
use crate::language_model::UnigramLm;
use crate::pagerank::PageRankVector;
use crate::persist::Format;
use crate::semantics::{propagate, FeatureMatrix, MentionGraph, SimilarityParams};
use crate::surface::{Spot, SurfaceDictionary};

pub const FEATURE_NAMES: [&str; 5] = [
    "neg_log_phrase_prob",
    "log_popularity",
    "n_statements",
    "n_sitelinks",
    "bias",
];
pub const LOCAL_FEATURES: usize = FEATURE_NAMES.len();

pub(crate) const MODEL_FORMAT: Format = Format {
    kind: "classifier model",
    magic: *b"NELMODEL",
    version: 1,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalFeatures {
    pub neg_log_phrase_prob: f64,
    pub log_popularity: f64,
    pub n_statements: f64,
    pub n_sitelinks: f64,
    pub bias: f64,
}

impl LocalFeatures {
    pub fn to_array(self) -> [f64; LOCAL_FEATURES] {
        [
            self.neg_log_phrase_prob,
            self.log_popularity,
            self.n_statements,
            self.n_sitelinks,
            self.bias,
        ]
    }
}

pub fn local_features(
    spot: &Spot,
    candidate: ItemId,
    lm: &UnigramLm,
    pagerank: &PageRankVector,
    record: Option<&ItemRecord>,
) -> LocalFeatures {
    let rank = pagerank.lookup_rank(candidate).max(f64::MIN_POSITIVE);
    LocalFeatures {
        neg_log_phrase_prob: -lm.phrase_log_prob(&spot.phrase),
        log_popularity: rank.ln(),
        n_statements: record.map_or(0.0, |r| f64::from(r.n_statements)),
        n_sitelinks: record.map_or(0.0, |r| f64::from(r.n_sitelinks)),
        bias: 1.0,
    }
}

/// Per-column min-max scaling into the unit interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub ranges: Vec<(f64, f64)>,
}

impl Scaler {
    pub fn fit(matrix: &FeatureMatrix) -> Result<Scaler> {
        Self::fit_many(std::iter::once(matrix))
    }

    pub fn fit_many<'a>(matrices: impl IntoIterator<Item = &'a FeatureMatrix>) -> Result<Scaler> {
        let mut ranges: Option<Vec<(f64, f64)>> = None;
        for m in matrices {
            let r = ranges.get_or_insert_with(|| vec![(f64::INFINITY, f64::NEG_INFINITY); m.cols()]);
            if r.len() != m.cols() {
                return Err(Error::DimensionMismatch {
                    expected: r.len(),
                    found: m.cols(),
                });
            }
            for row in m.iter_rows() {
                for (c, &x) in row.iter().enumerate() {
                    r[c].0 = r[c].0.min(x);
                    r[c].1 = r[c].1.max(x);
                }
            }
        }
        match ranges {
            Some(r) if r.iter().all(|(lo, hi)| lo <= hi) => Ok(Scaler { ranges: r }),
            _ => Err(Error::EmptyMatrix),
        }
    }

    /// Maps into [0,1]; constant columns map to 0.5, unseen values clamp.
    pub fn scale(&self, column: usize, x: f64) -> f64 {
        let (lo, hi) = self.ranges[column];
        if hi > lo {
            ((x - lo) / (hi - lo)).clamp(0.0, 1.0)
        } else {
            0.5
        }
    }

    pub fn transform(&self, m: &FeatureMatrix) -> Result<FeatureMatrix> {
        if m.cols() != self.ranges.len() {
            return Err(Error::DimensionMismatch {
                expected: self.ranges.len(),
                found: m.cols(),
            });
        }
        let mut out = m.clone();
        for i in 0..m.rows() {
            for (c, v) in out.row_mut(i).iter_mut().enumerate() {
                *v = self.scale(c, *v);
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub similarity: SimilarityParams,
    /// Propagation depth.
    pub k: usize,
    /// L2 regularization strength.
    pub lambda: f64,
    pub epochs: usize,
    pub seed: u64,
    /// A candidate is a match when its score exceeds this.
    pub threshold: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        ModelParams {
            similarity: SimilarityParams::default(),
            k: 2,
            lambda: 1e-4,
            epochs: 40,
            seed: 0,
            threshold: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    /// One weight per stacked column, `(k+1) × 5` in total.
    pub weights: Vec<f64>,
    pub bias: f64,
    pub scaler: Scaler,
    pub params: ModelParams,
}

impl LinearModel {
    pub fn dimension(&self) -> usize {
        self.weights.len()
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        MODEL_FORMAT.to_bytes(self)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        MODEL_FORMAT.save(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let m: LinearModel = MODEL_FORMAT.load(path)?;
        m.check()?;
        Ok(m)
    }

    fn check(&self) -> Result<()> {
        let want = (self.params.k + 1) * LOCAL_FEATURES;
        if self.weights.len() != want {
            return Err(Error::DimensionMismatch {
                expected: want,
                found: self.weights.len(),
            });
        }
        if self.scaler.ranges.len() != LOCAL_FEATURES {
            return Err(Error::DimensionMismatch {
                expected: LOCAL_FEATURES,
                found: self.scaler.ranges.len(),
            });
        }
        Ok(())
    }
}

/// Row-wise `w·x + b`.
pub fn score(model: &LinearModel, stacked: &FeatureMatrix) -> Result<Vec<f64>> {
    if stacked.cols() != model.weights.len() {
        return Err(Error::DimensionMismatch {
            expected: model.weights.len(),
            found: stacked.cols(),
        });
    }
    Ok((0..stacked.rows())
        .map(|i| dot(&model.weights, stacked.row(i)) + model.bias)
        .collect())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Selection {
    pub spot: usize,
    pub item: ItemId,
    pub score: f64,
}

/// Picks, per spot, the best candidate scoring above `threshold`.
///
/// `scores` follow vertex order: spots in order, candidates in order within
/// each spot. Equal scores go to the smaller id.
pub fn select(spots: &[Spot], scores: &[f64], threshold: f64) -> Result<Vec<Selection>> {
    let n: usize = spots.iter().map(|s| s.candidates.len()).sum();
    if scores.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: scores.len(),
        });
    }
    let mut out = Vec::new();
    let mut v = 0;
    for (s, spot) in spots.iter().enumerate() {
        let mut best: Option<Selection> = None;
        for &item in &spot.candidates {
            let sc = scores[v];
            v += 1;
            if !(sc > threshold) {
                continue;
            }
            let better = match best {
                None => true,
                Some(b) => sc > b.score || (sc == b.score && item < b.item),
            };
            if better {
                best = Some(Selection { spot: s, item, score: sc });
            }
        }
        out.extend(best);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Max-margin training

/// Minimizes `λ/2·|w|² + mean(max(0, 1 − y(w·x + b)))` by stochastic
/// subgradient steps of size `1/(λt)`, visiting rows in a seeded random
/// order each epoch. The bias is learned as the weight of an extra constant
/// input and is regularized with the rest. Iterates from the second half of
/// the epochs are averaged.
pub fn train_svm(rows: &[&[f64]], labels: &[bool], lambda: f64, epochs: usize, seed: u64) -> Result<(Vec<f64>, f64)> {
    if rows.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: rows.len(),
            found: labels.len(),
        });
    }
    if !labels.iter().any(|&y| y) || labels.iter().all(|&y| y) {
        return Err(Error::DegenerateLabels);
    }
    if !(lambda > 0.0) {
        return Err(Error::InvalidParameter(format!("lambda must be positive, got {lambda}")));
    }
    let dim = rows[0].len();
    if let Some(bad) = rows.iter().find(|r| r.len() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: bad.len(),
        });
    }

    let epochs = epochs.max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..rows.len()).collect();
    let mut w = vec![0.0; dim + 1];
    let mut avg = vec![0.0; dim + 1];
    let mut averaged = 0u64;
    let mut t = 0u64;
    let average_from = epochs / 2;
    for epoch in 0..epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            t += 1;
            let step = 1.0 / (lambda * t as f64);
            let x = rows[i];
            let y = if labels[i] { 1.0 } else { -1.0 };
            let margin = y * (dot(&w[..dim], x) + w[dim]);
            let shrink = 1.0 - step * lambda;
            for wi in w.iter_mut() {
                *wi *= shrink;
            }
            if margin < 1.0 {
                for (wi, xi) in w[..dim].iter_mut().zip(x) {
                    *wi += step * y * xi;
                }
                w[dim] += step * y;
            }
            if epoch >= average_from {
                for (a, wi) in avg.iter_mut().zip(&w) {
                    *a += wi;
                }
                averaged += 1;
            }
        }
    }
    for a in avg.iter_mut() {
        *a /= averaged as f64;
    }
    let bias = avg.pop().unwrap_or(0.0);
    Ok((avg, bias))
}

// ---------------------------------------------------------------------------
// Pipeline

/// Everything the annotator reads, loaded once and shared read-only.
#[derive(Debug)]
pub struct Resources {
    pub dict: SurfaceDictionary,
    pub lm: UnigramLm,
    pub pagerank: PageRankVector,
    pub records: RecordStore,
}

/// Per-document state that does not depend on the model.
#[derive(Debug, Clone)]
pub struct DocumentFeatures {
    pub spots: Vec<Spot>,
    pub raw: FeatureMatrix,
}

impl DocumentFeatures {
    pub fn extract(text: &str, res: &Resources) -> DocumentFeatures {
        let spots = res.dict.spot(text);
        let rows: Vec<Vec<f64>> = spots
            .iter()
            .flat_map(|s| {
                s.candidates.iter().map(move |&c| {
                    local_features(s, c, &res.lm, &res.pagerank, res.records.record(c))
                        .to_array()
                        .to_vec()
                })
            })
            .collect();
        let raw = FeatureMatrix::from_rows(&rows, LOCAL_FEATURES).expect("fixed width rows");
        DocumentFeatures { spots, raw }
    }

    pub fn graph<R: RecordAccess + ?Sized>(&self, records: &R, params: &SimilarityParams) -> MentionGraph {
        MentionGraph::build(&self.spots, records, params)
    }

    /// Vertex labels from gold: positive iff an in-KB gold annotation with
    /// the same entity overlaps the spot.
    pub fn labels(&self, gold: &GoldDocument) -> Vec<bool> {
        self.spots
            .iter()
            .flat_map(|s| {
                s.candidates.iter().map(move |&c| {
                    gold.gold.iter().any(|g| {
                        g.qid == Some(c) && evaluation::spans_overlap((s.start, s.end), (g.start, g.end))
                    })
                })
            })
            .collect()
    }

    /// In-KB gold annotations no vertex can reproduce.
    pub fn unreachable(&self, gold: &GoldDocument) -> usize {
        gold.gold
            .iter()
            .filter(|g| {
                g.qid.is_some_and(|qid| {
                    !self.spots.iter().any(|s| {
                        s.candidates.contains(&qid) && evaluation::spans_overlap((s.start, s.end), (g.start, g.end))
                    })
                })
            })
            .count()
    }
}

fn stacked_features(doc: &DocumentFeatures, graph: &MentionGraph, scaler: &Scaler, k: usize) -> Result<FeatureMatrix> {
    let scaled = scaler.transform(&doc.raw)?;
    propagate(graph, &scaled, k)
}

/// Scores every vertex of one document.
fn score_document(doc: &DocumentFeatures, graph: &MentionGraph, model: &LinearModel) -> Result<Vec<f64>> {
    let stacked = stacked_features(doc, graph, &model.scaler, model.params.k)?;
    score(model, &stacked)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub ks: Vec<usize>,
    pub lambdas: Vec<f64>,
    pub betas: Vec<f64>,
    pub etas: Vec<f64>,
    pub max_distances: Vec<usize>,
}

impl Default for Grid {
    fn default() -> Self {
        Grid {
            ks: vec![0, 1, 2, 3],
            lambdas: vec![1e-3, 1e-4],
            betas: vec![0.5, 0.85],
            etas: vec![0.01, 0.1],
            max_distances: vec![200],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub params: ModelParams,
    /// Cross-validated grid search; the best point is retrained on all data.
    pub grid: Option<Grid>,
    pub folds: usize,
    pub exec: Exec,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            params: ModelParams::default(),
            grid: None,
            folds: 5,
            exec: Exec::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridPoint {
    pub params: ModelParams,
    pub cv_micro_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainReport {
    pub documents: usize,
    pub vertices: usize,
    pub positives: usize,
    pub gold_in_kb: usize,
    /// Gold annotations no spot/candidate pair covers.
    pub unreachable: usize,
    pub grid: Vec<GridPoint>,
}

struct Prepared<'a> {
    docs: Vec<DocumentFeatures>,
    labels: Vec<Vec<bool>>,
    gold: &'a [GoldDocument],
}

fn fit_model(prepared: &Prepared, graphs: &[MentionGraph], subset: &[usize], params: ModelParams) -> Result<LinearModel> {
    let scaler = Scaler::fit_many(subset.iter().map(|&d| &prepared.docs[d].raw).filter(|m| m.rows() > 0))?;
    let mut stacked = Vec::with_capacity(subset.len());
    let mut labels = Vec::new();
    for &d in subset {
        stacked.push(stacked_features(&prepared.docs[d], &graphs[d], &scaler, params.k)?);
        labels.extend_from_slice(&prepared.labels[d]);
    }
    let rows: Vec<&[f64]> = stacked.iter().flat_map(|m| m.iter_rows()).collect();
    if rows.is_empty() {
        return Err(Error::DegenerateLabels);
    }
    let (weights, bias) = train_svm(&rows, &labels, params.lambda, params.epochs, params.seed)?;
    Ok(LinearModel {
        weights,
        bias,
        scaler,
        params,
    })
}

fn predict_document(doc: &DocumentFeatures, graph: &MentionGraph, model: &LinearModel) -> Result<Vec<Prediction>> {
    let scores = score_document(doc, graph, model)?;
    Ok(select(&doc.spots, &scores, model.params.threshold)?
        .into_iter()
        .map(|s| {
            let spot = &doc.spots[s.spot];
            Prediction {
                start: spot.start,
                end: spot.end,
                qid: s.item,
            }
        })
        .collect())
}

fn cross_validate(
    prepared: &Prepared,
    res: &Resources,
    grid: &Grid,
    base: ModelParams,
    folds: usize,
    exec: Exec,
) -> Result<Vec<GridPoint>> {
    let n = prepared.docs.len();
    let folds = folds.clamp(2, n.max(2));
    let mut points = Vec::new();
    for &beta in &grid.betas {
        for &eta in &grid.etas {
            for &max_distance in &grid.max_distances {
                let similarity = SimilarityParams { beta, eta, max_distance };
                similarity.validate()?;
                let graphs = exec.map(&prepared.docs, |d| d.graph(&res.records, &similarity));
                let mut jobs = Vec::new();
                for &k in &grid.ks {
                    for &lambda in &grid.lambdas {
                        let params = ModelParams { similarity, k, lambda, ..base };
                        for fold in 0..folds {
                            jobs.push((params, fold));
                        }
                    }
                }
                let counts = exec.map(&jobs, |&(params, fold)| -> Result<Counts> {
                    let train: Vec<usize> = (0..n).filter(|d| d % folds != fold).collect();
                    let model = match fit_model(prepared, &graphs, &train, params) {
                        Ok(m) => m,
                        // a fold without both classes cannot be fit; count its gold as missed
                        Err(Error::DegenerateLabels) | Err(Error::EmptyMatrix) => {
                            let missed = (0..n)
                                .filter(|d| d % folds == fold)
                                .map(|d| evaluation::match_document(&[], &prepared.gold[d].gold))
                                .sum();
                            return Ok(missed);
                        }
                        Err(e) => return Err(e),
                    };
                    let mut total = Counts::default();
                    for d in (0..n).filter(|d| d % folds == fold) {
                        let preds = predict_document(&prepared.docs[d], &graphs[d], &model)?;
                        total += evaluation::match_document(&preds, &prepared.gold[d].gold);
                    }
                    Ok(total)
                });
                let counts = counts.into_iter().collect::<Result<Vec<_>>>()?;
                for (chunk, job) in counts.chunks(folds).zip(jobs.chunks(folds)) {
                    let total: Counts = chunk.iter().copied().sum();
                    points.push(GridPoint {
                        params: job[0].0,
                        cv_micro_f1: total.f1(),
                    });
                }
            }
        }
    }
    Ok(points)
}

/// Trains the classifier on annotated documents.
///
/// Feature extraction runs under `config.exec`; the optimizer itself is
/// sequential and seeded, so equal inputs give bit-identical models.
pub fn train(dataset: &[GoldDocument], res: &Resources, config: &TrainConfig) -> Result<(LinearModel, TrainReport)> {
    config.params.similarity.validate()?;
    let exec = config.exec;
    let docs = exec.map(dataset, |g| DocumentFeatures::extract(&g.text, res));
    let labels: Vec<Vec<bool>> = docs.iter().zip(dataset).map(|(d, g)| d.labels(g)).collect();
    let prepared = Prepared {
        docs,
        labels,
        gold: dataset,
    };

    let mut report = TrainReport {
        documents: dataset.len(),
        vertices: prepared.labels.iter().map(Vec::len).sum(),
        positives: prepared.labels.iter().flatten().filter(|&&y| y).count(),
        gold_in_kb: dataset.iter().flat_map(|g| &g.gold).filter(|g| g.qid.is_some()).count(),
        unreachable: prepared.docs.iter().zip(dataset).map(|(d, g)| d.unreachable(g)).sum(),
        grid: Vec::new(),
    };
    if report.positives == 0 || report.positives == report.vertices {
        return Err(Error::DegenerateLabels);
    }

    let mut params = config.params;
    if let Some(grid) = &config.grid {
        report.grid = cross_validate(&prepared, res, grid, config.params, config.folds, exec)?;
        let mut best: Option<&GridPoint> = None;
        for p in &report.grid {
            if best.is_none_or(|b| p.cv_micro_f1 > b.cv_micro_f1) {
                best = Some(p);
            }
        }
        if let Some(b) = best {
            log::info!("best grid point {:?} with CV micro F1 {:.4}", b.params, b.cv_micro_f1);
            params = b.params;
        }
    }

    let graphs = exec.map(&prepared.docs, |d| d.graph(&res.records, &params.similarity));
    let all: Vec<usize> = (0..prepared.docs.len()).collect();
    let model = fit_model(&prepared, &graphs, &all, params)?;
    Ok((model, report))
}

// ---------------------------------------------------------------------------
// Annotation

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredCandidate {
    #[serde(with = "qid_string")]
    pub qid: ItemId,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub start: usize,
    pub end: usize,
    #[serde(with = "qid_string")]
    pub qid: ItemId,
    pub score: f64,
    /// Candidates of the spot by decreasing score.
    pub candidates: Vec<ScoredCandidate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotatedDocument {
    pub text: String,
    pub annotations: Vec<Annotation>,
}

/// Loaded resources plus a trained model.
#[derive(Debug)]
pub struct Linker {
    pub resources: Resources,
    pub model: LinearModel,
    /// Cap on `candidates` per annotation.
    pub max_candidates: usize,
}

impl Linker {
    pub fn new(resources: Resources, model: LinearModel) -> Self {
        Linker {
            resources,
            model,
            max_candidates: 5,
        }
    }

    /// spot → local features → scale → mention graph → propagate → score →
    /// select
    pub fn annotate(&self, text: &str) -> Result<Vec<Annotation>> {
        let doc = DocumentFeatures::extract(text, &self.resources);
        if doc.spots.is_empty() {
            return Ok(Vec::new());
        }
        let graph = doc.graph(&self.resources.records, &self.model.params.similarity);
        let scores = score_document(&doc, &graph, &self.model)?;
        let chosen = select(&doc.spots, &scores, self.model.params.threshold)?;

        let mut first_vertex = Vec::with_capacity(doc.spots.len());
        let mut v = 0;
        for s in &doc.spots {
            first_vertex.push(v);
            v += s.candidates.len();
        }
        Ok(chosen
            .into_iter()
            .map(|sel| {
                let spot = &doc.spots[sel.spot];
                let base = first_vertex[sel.spot];
                let mut candidates: Vec<ScoredCandidate> = spot
                    .candidates
                    .iter()
                    .enumerate()
                    .map(|(i, &qid)| ScoredCandidate {
                        qid,
                        score: scores[base + i],
                    })
                    .collect();
                candidates.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.qid.cmp(&b.qid)));
                candidates.truncate(self.max_candidates);
                Annotation {
                    start: spot.start,
                    end: spot.end,
                    qid: sel.item,
                    score: sel.score,
                    candidates,
                }
            })
            .collect())
    }

    pub fn annotate_document(&self, text: &str) -> Result<AnnotatedDocument> {
        Ok(AnnotatedDocument {
            text: text.to_string(),
            annotations: self.annotate(text)?,
        })
    }

    /// The single JSON rendering shared by every front end.
    pub fn annotate_json(&self, text: &str) -> Result<String> {
        Ok(serde_json::to_string(&self.annotate_document(text)?)?)
    }

    pub fn annotate_batch<S: AsRef<str> + Sync>(&self, texts: &[S], exec: Exec) -> Result<Vec<Vec<Annotation>>> {
        exec.map(texts, |t| self.annotate(t.as_ref())).into_iter().collect()
    }
}

impl evaluation::Annotator for Linker {
    fn predict(&self, text: &str) -> Result<Vec<Prediction>> {
        Ok(self
            .annotate(text)?
            .into_iter()
            .map(|a| Prediction {
                start: a.start,
                end: a.end,
                qid: a.qid,
            })
            .collect())
    }
}
