//! PageRank over the item link graph.
//!
//! Edges are the deduplicated statement and qualifier values of each item.
//! Items without outgoing links teleport uniformly, so the chain stays
//! stochastic and scores sum to one after every sweep. Each sweep pulls
//! contributions along in-links, which parallelizes over target nodes
//! without synchronization.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::item::ItemId;
use crate::persist::Format;

pub(crate) const FORMAT: Format = Format {
    kind: "pagerank table",
    magic: *b"NELPRNK\0",
    version: 1,
};

/// Fixed chunk for float reductions, independent of thread count.
const REDUCE_CHUNK: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PageRankParams {
    pub damping: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for PageRankParams {
    fn default() -> Self {
        PageRankParams {
            damping: 0.85,
            tol: 1e-10,
            max_iter: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PageRankVector {
    ids: Vec<ItemId>,
    scores: Vec<f64>,
    pub damping: f64,
    pub iterations_run: usize,
    /// L1 change of the final sweep.
    pub residual: f64,
    floor: f64,
    /// Record-store generation the graph was read from, when known.
    pub source_generation: Option<u64>,
}

impl PageRankVector {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn get(&self, id: ItemId) -> Option<f64> {
        self.ids.binary_search(&id).ok().map(|i| self.scores[i])
    }

    /// r(id), or the smallest positive score when the id was not ranked.
    pub fn lookup_rank(&self, id: ItemId) -> f64 {
        self.get(id).unwrap_or(self.floor)
    }

    pub fn floor(&self) -> f64 {
        self.floor
    }

    pub fn iter(&self) -> impl Iterator<Item = (ItemId, f64)> + '_ {
        self.ids.iter().copied().zip(self.scores.iter().copied())
    }

    pub fn total(&self) -> f64 {
        self.scores.iter().sum()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        FORMAT.save(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        FORMAT.load(path)
    }
}

/// Compressed in-link graph with out-degree inverses.
struct Transposed {
    ids: Vec<ItemId>,
    in_ptr: Vec<usize>,
    in_src: Vec<u32>,
    inv_out: Vec<f64>,
}

impl Transposed {
    fn build<'a, I>(adjacency: I) -> Transposed
    where
        I: IntoIterator<Item = (ItemId, &'a [ItemId])>,
    {
        let mut out: HashMap<ItemId, Vec<ItemId>> = HashMap::new();
        for (id, links) in adjacency {
            out.entry(id).or_default().extend_from_slice(links);
        }
        let mut ids: Vec<ItemId> = out.keys().copied().collect();
        ids.extend(out.values().flatten().copied());
        ids.sort_unstable();
        ids.dedup();
        let index = |id: ItemId| ids.binary_search(&id).expect("node collected") as u32;

        let n = ids.len();
        let mut edges: Vec<(u32, u32)> = Vec::new();
        let mut out_deg = vec![0usize; n];
        for (src, mut targets) in out {
            targets.sort_unstable();
            targets.dedup();
            let s = index(src);
            out_deg[s as usize] = targets.len();
            edges.extend(targets.into_iter().map(|t| (index(t), s)));
        }
        edges.sort_unstable();

        let mut in_ptr = vec![0usize; n + 1];
        for &(t, _) in &edges {
            in_ptr[t as usize + 1] += 1;
        }
        for i in 0..n {
            in_ptr[i + 1] += in_ptr[i];
        }
        let in_src = edges.into_iter().map(|(_, s)| s).collect();
        let inv_out = out_deg
            .into_iter()
            .map(|d| if d == 0 { 0.0 } else { 1.0 / d as f64 })
            .collect();
        Transposed {
            ids,
            in_ptr,
            in_src,
            inv_out,
        }
    }
}

fn chunked_sum(exec: Exec, xs: &[f64]) -> f64 {
    exec.map_chunks(xs, REDUCE_CHUNK, |c| c.iter().sum::<f64>())
        .into_iter()
        .sum()
}

/// Power iteration from the uniform vector. `adjacency` yields each item with
/// its outgoing links; link targets that never appear as sources become
/// dangling nodes.
pub fn compute_pagerank<'a, I>(adjacency: I, params: PageRankParams, exec: Exec) -> Result<PageRankVector>
where
    I: IntoIterator<Item = (ItemId, &'a [ItemId])>,
{
    if !(params.damping > 0.0 && params.damping < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "damping must lie in (0,1), got {}",
            params.damping
        )));
    }
    if !(params.tol > 0.0) {
        return Err(Error::InvalidParameter(format!("tol must be positive, got {}", params.tol)));
    }
    let g = Transposed::build(adjacency);
    let n = g.ids.len();
    if n == 0 {
        return Err(Error::EmptyGraph);
    }

    let d = params.damping;
    let nf = n as f64;
    let mut rank = vec![1.0 / nf; n];
    let mut next = vec![0.0; n];
    let mut contrib = vec![0.0; n];
    let mut delta = vec![0.0; n];
    let mut residual = f64::INFINITY;
    let mut iterations = 0;

    while iterations < params.max_iter {
        exec.fill(&mut contrib, |u| rank[u] * g.inv_out[u]);
        exec.fill(&mut delta, |u| if g.inv_out[u] == 0.0 { rank[u] } else { 0.0 });
        let dangling = chunked_sum(exec, &delta);
        let base = (1.0 - d) / nf + d * dangling / nf;
        exec.fill(&mut next, |v| {
            let incoming: f64 = g.in_src[g.in_ptr[v]..g.in_ptr[v + 1]]
                .iter()
                .map(|&u| contrib[u as usize])
                .sum();
            base + d * incoming
        });
        exec.fill(&mut delta, |i| (next[i] - rank[i]).abs());
        residual = chunked_sum(exec, &delta);
        std::mem::swap(&mut rank, &mut next);
        iterations += 1;
        if residual < params.tol {
            break;
        }
    }

    let floor = rank
        .iter()
        .copied()
        .filter(|&x| x > 0.0)
        .fold(f64::INFINITY, f64::min);
    Ok(PageRankVector {
        ids: g.ids,
        scores: rank,
        damping: d,
        iterations_run: iterations,
        residual,
        floor: if floor.is_finite() { floor } else { 0.0 },
        source_generation: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn q(n: u64) -> ItemId {
        ItemId::from_raw(n)
    }

    fn run(adj: &[(u64, Vec<u64>)], exec: Exec) -> PageRankVector {
        let adj: Vec<(ItemId, Vec<ItemId>)> = adj
            .iter()
            .map(|(s, ts)| (q(*s), ts.iter().map(|&t| q(t)).collect()))
            .collect();
        compute_pagerank(adj.iter().map(|(s, t)| (*s, t.as_slice())), PageRankParams::default(), exec).unwrap()
    }

    /// Dense power iteration over the full Google matrix.
    fn dense_oracle(n: usize, edges: &[(usize, usize)], d: f64) -> Vec<f64> {
        let mut out: Vec<Vec<usize>> = vec![Vec::new(); n];
        for &(s, t) in edges {
            if !out[s].contains(&t) {
                out[s].push(t);
            }
        }
        let mut g = vec![vec![0.0; n]; n];
        for s in 0..n {
            for t in 0..n {
                let walk = if out[s].is_empty() {
                    1.0 / n as f64
                } else if out[s].contains(&t) {
                    1.0 / out[s].len() as f64
                } else {
                    0.0
                };
                g[t][s] = d * walk + (1.0 - d) / n as f64;
            }
        }
        let mut x = vec![1.0 / n as f64; n];
        for _ in 0..10_000 {
            let y: Vec<f64> = (0..n).map(|i| (0..n).map(|j| g[i][j] * x[j]).sum()).collect();
            let change: f64 = y.iter().zip(&x).map(|(a, b)| (a - b).abs()).sum();
            x = y;
            if change < 1e-15 {
                break;
            }
        }
        x
    }

    #[test]
    fn two_cycle_is_uniform() {
        let pr = run(&[(1, vec![2]), (2, vec![1])], Exec::Sequential);
        assert!((pr.lookup_rank(q(1)) - 0.5).abs() < 1e-12);
        assert!((pr.lookup_rank(q(2)) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn single_node() {
        let pr = run(&[(7, vec![])], Exec::Sequential);
        assert!((pr.lookup_rank(q(7)) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn empty_graph_is_an_error() {
        let r = compute_pagerank(std::iter::empty(), PageRankParams::default(), Exec::Sequential);
        assert!(matches!(r, Err(Error::EmptyGraph)));
    }

    #[test]
    fn bad_parameters() {
        let adj = [(q(1), vec![q(2)])];
        for (damping, tol) in [(0.0, 1e-9), (1.0, 1e-9), (0.5, 0.0)] {
            let p = PageRankParams { damping, tol, max_iter: 10 };
            assert!(compute_pagerank(adj.iter().map(|(s, t)| (*s, t.as_slice())), p, Exec::Sequential).is_err());
        }
    }

    #[test]
    fn triangle_with_chord_matches_dense_oracle() {
        // A=1 -> B=2, B -> C=3, C -> A, A -> C
        let pr = run(&[(1, vec![2, 3]), (2, vec![3]), (3, vec![1])], Exec::Sequential);
        let oracle = dense_oracle(3, &[(0, 1), (1, 2), (2, 0), (0, 2)], 0.85);
        for (i, want) in oracle.iter().enumerate() {
            assert!((pr.lookup_rank(q(i as u64 + 1)) - want).abs() < 1e-8);
        }
    }

    #[test]
    fn lookup_floor() {
        let pr = run(&[(1, vec![2]), (2, vec![]), (3, vec![2])], Exec::Sequential);
        let floor = pr.lookup_rank(q(999));
        assert_eq!(floor, pr.floor());
        assert!(pr.iter().all(|(_, s)| floor <= s));
        assert_eq!(pr.lookup_rank(q(2)), pr.get(q(2)).unwrap());
    }

    #[test]
    fn link_targets_become_nodes() {
        let pr = run(&[(1, vec![2, 2, 3])], Exec::Sequential);
        assert_eq!(pr.len(), 3);
        assert!((pr.total() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn saves_and_loads() {
        let pr = run(&[(1, vec![2]), (2, vec![1, 3])], Exec::Sequential);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pr.bin");
        pr.save(&path).unwrap();
        assert_eq!(PageRankVector::load(&path).unwrap(), pr);
    }

    fn arb_graph() -> impl Strategy<Value = (usize, Vec<(usize, usize)>)> {
        (1usize..=20).prop_flat_map(|n| (Just(n), prop::collection::vec((0..n, 0..n), 0..(3 * n))))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn matches_dense_oracle((n, edges) in arb_graph()) {
            let mut adj: Vec<(u64, Vec<u64>)> = (0..n).map(|i| (i as u64 + 1, Vec::new())).collect();
            for &(s, t) in &edges {
                adj[s].1.push(t as u64 + 1);
            }
            let pr = run(&adj, Exec::Parallel);
            let oracle = dense_oracle(n, &edges, 0.85);
            prop_assert!((pr.total() - 1.0).abs() < 1e-9);
            for i in 0..n {
                prop_assert!((pr.lookup_rank(q(i as u64 + 1)) - oracle[i]).abs() < 1e-8);
            }
        }

        #[test]
        fn relabeling_permutes_scores((n, edges) in arb_graph(), offset in 1u64..1000) {
            let mut adj: Vec<(u64, Vec<u64>)> = (0..n).map(|i| (i as u64 + 1, Vec::new())).collect();
            for &(s, t) in &edges {
                adj[s].1.push(t as u64 + 1);
            }
            // reverse order plus an offset changes the sorted node order
            let relabel = |x: u64| offset + (n as u64 + 1 - x) * 3;
            let moved: Vec<(u64, Vec<u64>)> = adj
                .iter()
                .map(|(s, ts)| (relabel(*s), ts.iter().map(|&t| relabel(t)).collect()))
                .collect();
            let a = run(&adj, Exec::Sequential);
            let b = run(&moved, Exec::Sequential);
            for i in 1..=n as u64 {
                prop_assert!((a.lookup_rank(q(i)) - b.lookup_rank(q(relabel(i)))).abs() < 1e-12);
            }
        }

        #[test]
        fn policies_are_bit_identical((n, edges) in arb_graph()) {
            let mut adj: Vec<(u64, Vec<u64>)> = (0..n).map(|i| (i as u64 + 1, Vec::new())).collect();
            for &(s, t) in &edges {
                adj[s].1.push(t as u64 + 1);
            }
            prop_assert_eq!(run(&adj, Exec::Sequential), run(&adj, Exec::Parallel));
        }
    }
}
