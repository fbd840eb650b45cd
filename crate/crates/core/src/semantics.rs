//! Entity similarity, per-document mention graphs and feature propagation.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::RecordAccess;
use crate::item::ItemId;
use crate::surface::Spot;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimilarityParams {
    /// Probability that a one-step walk stays on its start item.
    pub beta: f64,
    /// Added to every similarity before distance discounting.
    pub eta: f64,
    /// Maximum character gap between linked spots.
    pub max_distance: usize,
}

impl Default for SimilarityParams {
    fn default() -> Self {
        SimilarityParams {
            beta: 0.85,
            eta: 0.1,
            max_distance: 200,
        }
    }
}

impl SimilarityParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.beta) {
            return Err(Error::InvalidParameter(format!("beta must lie in [0,1], got {}", self.beta)));
        }
        if !(self.eta >= 0.0) {
            return Err(Error::InvalidParameter(format!("eta must be non-negative, got {}", self.eta)));
        }
        if self.max_distance == 0 {
            return Err(Error::InvalidParameter("max_distance must be positive".into()));
        }
        Ok(())
    }
}

/// Probability that a one-step walk from `id` ends on `x`.
///
/// The walk stays with probability `beta` and otherwise moves to a uniformly
/// chosen linked item; an item without links always stays.
fn step_probability(id: ItemId, links: &[ItemId], beta: f64, x: ItemId) -> f64 {
    if links.is_empty() {
        return if x == id { 1.0 } else { 0.0 };
    }
    let stay = if x == id { beta } else { 0.0 };
    let moved = if links.binary_search(&x).is_ok() {
        (1.0 - beta) / links.len() as f64
    } else {
        0.0
    };
    stay + moved
}

/// Probability that independent one-step walks from `e` and `f` meet.
///
/// Link sets must be sorted and duplicate-free. Without self-links this is
///
/// ```text
/// β²·[e=f] + β(1−β)·([e∈l(f)]/|l(f)| + [f∈l(e)]/|l(e)|) + (1−β)²·|l(e)∩l(f)|/(|l(e)||l(f)|)
/// ```
///
/// and with self-links the extra landing mass is accounted for exactly. The
/// sum runs over the common support in ascending id order, which makes the
/// result bit-for-bit symmetric.
pub fn similarity(e_links: &[ItemId], e: ItemId, f_links: &[ItemId], f: ItemId, beta: f64) -> f64 {
    debug_assert!(e_links.windows(2).all(|w| w[0] < w[1]));
    debug_assert!(f_links.windows(2).all(|w| w[0] < w[1]));

    let support = |id: ItemId, links: &[ItemId]| -> Vec<ItemId> {
        let mut s = Vec::with_capacity(links.len() + 1);
        s.extend_from_slice(links);
        if let Err(pos) = s.binary_search(&id) {
            s.insert(pos, id);
        }
        s
    };
    let se = support(e, e_links);
    let sf = support(f, f_links);

    let (mut i, mut j) = (0, 0);
    let mut total = 0.0;
    while i < se.len() && j < sf.len() {
        match se[i].cmp(&sf[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                let x = se[i];
                total += step_probability(e, e_links, beta, x) * step_probability(f, f_links, beta, x);
                i += 1;
                j += 1;
            }
        }
    }
    total.clamp(0.0, 1.0)
}

fn intersection_size(a: &[ItemId], b: &[ItemId]) -> usize {
    let (mut i, mut j, mut n) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                n += 1;
                i += 1;
                j += 1;
            }
        }
    }
    n
}

/// Link-overlap relatedness of two items, the classic Wikipedia baseline.
///
/// Inputs are sorted duplicate-free link sets. Returns 0 for empty sets or
/// an empty intersection and clamps negative values to 0.
pub fn milne_witten(links_a: &[ItemId], links_b: &[ItemId], kb_size: usize) -> f64 {
    let (na, nb) = (links_a.len(), links_b.len());
    if na == 0 || nb == 0 {
        return 0.0;
    }
    let common = intersection_size(links_a, links_b);
    if common == 0 {
        return 0.0;
    }
    let (big, small) = (na.max(nb) as f64, na.min(nb) as f64);
    let num = big.ln() - (common as f64).ln();
    if num <= 0.0 {
        return 1.0;
    }
    let den = (kb_size as f64).ln() - small.ln();
    if den <= 0.0 {
        return 0.0;
    }
    (1.0 - num / den).clamp(0.0, 1.0)
}

/// Dense row-major matrix of per-vertex features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl FeatureMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        FeatureMatrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>], cols: usize) -> Result<Self> {
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(Error::DimensionMismatch {
                    expected: cols,
                    found: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Ok(FeatureMatrix {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        // chunks_exact(0) panics; zero-width matrices have no row data
        let cols = self.cols.max(1);
        self.data.chunks_exact(cols).take(if self.cols == 0 { 0 } else { self.rows })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vertex {
    pub spot: usize,
    pub item: ItemId,
}

/// Weighted graph over `(spot, candidate)` vertices and its column-stochastic
/// transition matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct MentionGraph {
    pub vertices: Vec<Vertex>,
    /// Symmetric adjacency lists sorted by neighbor.
    weights: Vec<Vec<(usize, f64)>>,
    /// Row `i` holds `(j, M[i][j])` sorted by `j`.
    transition: Vec<Vec<(usize, f64)>>,
}

impl MentionGraph {
    /// Vertices are every `(spot, candidate)` pair in document order. Two
    /// vertices of different spots whose character gap is at most `D` are
    /// joined with weight `(η + s(e,e′))·(D − gap)/D`.
    pub fn build<R: RecordAccess + ?Sized>(spots: &[Spot], records: &R, params: &SimilarityParams) -> MentionGraph {
        let mut vertices = Vec::new();
        let mut first_vertex = Vec::with_capacity(spots.len() + 1);
        for (s, spot) in spots.iter().enumerate() {
            first_vertex.push(vertices.len());
            vertices.extend(spot.candidates.iter().map(|&item| Vertex { spot: s, item }));
        }
        first_vertex.push(vertices.len());

        let n = vertices.len();
        let mut weights: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        let mut sims: HashMap<(ItemId, ItemId), f64> = HashMap::new();
        let d = params.max_distance as f64;
        for a in 0..spots.len() {
            for b in a + 1..spots.len() {
                let gap = spots[a].char_gap(&spots[b]);
                if gap > params.max_distance {
                    // spots are sorted and disjoint, so gaps only grow
                    break;
                }
                let discount = (d - gap as f64) / d;
                for i in first_vertex[a]..first_vertex[a + 1] {
                    for j in first_vertex[b]..first_vertex[b + 1] {
                        let (e, f) = (vertices[i].item, vertices[j].item);
                        let key = if e <= f { (e, f) } else { (f, e) };
                        let s = *sims.entry(key).or_insert_with(|| {
                            similarity(records.links(e), e, records.links(f), f, params.beta)
                        });
                        let w = (params.eta + s) * discount;
                        if w > 0.0 {
                            weights[i].push((j, w));
                            weights[j].push((i, w));
                        }
                    }
                }
            }
        }
        for adj in &mut weights {
            adj.sort_by_key(|&(j, _)| j);
        }
        Self::from_weights(vertices, weights)
    }

    fn from_weights(vertices: Vec<Vertex>, weights: Vec<Vec<(usize, f64)>>) -> MentionGraph {
        let n = vertices.len();
        let mut transition: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for (j, column) in weights.iter().enumerate() {
            let sum: f64 = column.iter().map(|&(_, w)| w).sum();
            if sum > 0.0 {
                for &(i, w) in column {
                    transition[i].push((j, w / sum));
                }
            } else {
                transition[j].push((j, 1.0));
            }
        }
        for row in &mut transition {
            row.sort_by_key(|&(j, _)| j);
        }
        MentionGraph {
            vertices,
            weights,
            transition,
        }
    }

    /// Graph from an explicit symmetric weight matrix; used by tests and
    /// benchmarks. Entries must be non-negative.
    pub fn from_dense_weights(vertices: Vec<Vertex>, w: &[Vec<f64>]) -> Result<MentionGraph> {
        let n = vertices.len();
        if w.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: w.len(),
            });
        }
        let mut weights = vec![Vec::new(); n];
        for (i, row) in w.iter().enumerate() {
            if row.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: row.len(),
                });
            }
            for (j, &x) in row.iter().enumerate() {
                if x < 0.0 || !x.is_finite() {
                    return Err(Error::InvalidParameter(format!("weight ({i},{j}) = {x}")));
                }
                if x > 0.0 {
                    weights[i].push((j, x));
                }
            }
        }
        Ok(Self::from_weights(vertices, weights))
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn edge_count(&self) -> usize {
        self.weights.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.weights[i]
            .binary_search_by_key(&j, |&(k, _)| k)
            .map(|p| self.weights[i][p].1)
            .unwrap_or(0.0)
    }

    pub fn transition_dense(&self) -> Vec<Vec<f64>> {
        let n = self.len();
        let mut m = vec![vec![0.0; n]; n];
        for (i, row) in self.transition.iter().enumerate() {
            for &(j, v) in row {
                m[i][j] = v;
            }
        }
        m
    }

    pub fn column_sums(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.len()];
        for row in &self.transition {
            for &(j, v) in row {
                sums[j] += v;
            }
        }
        sums
    }

    /// `M · x`
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.transition
            .iter()
            .map(|row| row.iter().map(|&(j, v)| v * x[j]).sum())
            .collect()
    }

    fn apply_columns(&self, src: &FeatureMatrix, src_offset: usize, dst: &mut FeatureMatrix, dst_offset: usize, width: usize) {
        for (i, row) in self.transition.iter().enumerate() {
            for c in 0..width {
                let v: f64 = row.iter().map(|&(j, m)| m * src.get(j, src_offset + c)).sum();
                dst.set(i, dst_offset + c, v);
            }
        }
    }
}

/// Stacks `F, M·F, …, M^k·F` horizontally.
pub fn propagate(graph: &MentionGraph, features: &FeatureMatrix, k: usize) -> Result<FeatureMatrix> {
    if features.rows() != graph.len() {
        return Err(Error::DimensionMismatch {
            expected: graph.len(),
            found: features.rows(),
        });
    }
    let c = features.cols();
    let mut out = FeatureMatrix::zeros(features.rows(), c * (k + 1));
    for i in 0..features.rows() {
        out.row_mut(i)[..c].copy_from_slice(features.row(i));
    }
    for block in 1..=k {
        let mut next = FeatureMatrix::zeros(features.rows(), c);
        graph.apply_columns(&out, (block - 1) * c, &mut next, 0, c);
        for i in 0..features.rows() {
            out.row_mut(i)[block * c..(block + 1) * c].copy_from_slice(next.row(i));
        }
    }
    Ok(out)
}

/// `(αI + (1−α)M)^k · scores`, the single-score propagation baseline.
pub fn han_propagate(graph: &MentionGraph, scores: &[f64], alpha: f64, k: usize) -> Result<Vec<f64>> {
    if scores.len() != graph.len() {
        return Err(Error::DimensionMismatch {
            expected: graph.len(),
            found: scores.len(),
        });
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidParameter(format!("alpha must lie in [0,1], got {alpha}")));
    }
    let mut x = scores.to_vec();
    for _ in 0..k {
        let mx = graph.apply(&x);
        x = x.iter().zip(&mx).map(|(a, b)| alpha * a + (1.0 - alpha) * b).collect();
    }
    Ok(x)
}
