//! Closeness, betweenness, and eigenvector centrality on weighted graphs,
//! plus tape-differentiable variants for the topology loss.
//!
//! Shortest paths use the connectomics distance transform `distance = 1/w`;
//! a zero weight means the edge is absent. Nodes that cannot reach every
//! other node get closeness 0 (infinite distance sum), with a warning.
//!
//! Betweenness is piecewise constant in the weights, so its differentiable
//! use is forward-only: values are correct, gradients are zero.

use std::fmt;
use std::rc::Rc;
use std::str::FromStr;

use crate::error::{validation, Error, Result};
use crate::population::{devectorize, feature_len, upper_index, vectorize, BrainGraph};
use crate::tensor::{NodeId, PathStructure, Tape, Tensor};

/// Centrality metric selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Closeness,
    Betweenness,
    Eigenvector,
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Metric::Closeness => write!(f, "CC"),
            Metric::Betweenness => write!(f, "BC"),
            Metric::Eigenvector => write!(f, "EC"),
        }
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "CC" | "cc" => Ok(Metric::Closeness),
            "BC" | "bc" => Ok(Metric::Betweenness),
            "EC" | "ec" => Ok(Metric::Eigenvector),
            other => Err(validation(format!("unknown centrality metric '{other}'"))),
        }
    }
}

/// Per-node centrality scores for a population: `n x r`.
#[derive(Debug, Clone)]
pub struct CentralityMatrix {
    pub scores: Tensor,
    pub metric: Metric,
    /// Negative feature entries clamped to zero while devectorizing.
    pub clamped_entries: usize,
}

// Distance-tie tolerance shared by Dijkstra and Brandes.
fn dist_eq(a: f64, b: f64) -> bool {
    if !a.is_finite() || !b.is_finite() {
        return false;
    }
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0)
}

/// Single-source shortest paths over `distance = 1/w`, with a unique
/// predecessor per node (ties broken toward the lowest predecessor index).
/// Returns (distances, predecessors, settle order).
fn dijkstra_single_pred(weights: &Tensor, source: usize) -> (Vec<f64>, Vec<usize>, Vec<usize>) {
    let r = weights.rows();
    let mut dist = vec![f64::INFINITY; r];
    let mut pred = vec![usize::MAX; r];
    let mut visited = vec![false; r];
    let mut order = Vec::with_capacity(r);
    dist[source] = 0.0;
    for _ in 0..r {
        let mut u = usize::MAX;
        let mut best = f64::INFINITY;
        for v in 0..r {
            if !visited[v] && dist[v] < best {
                best = dist[v];
                u = v;
            }
        }
        if u == usize::MAX {
            break;
        }
        visited[u] = true;
        order.push(u);
        for x in 0..r {
            let w = weights.get(u, x);
            if visited[x] || w <= 0.0 {
                continue;
            }
            let nd = dist[u] + 1.0 / w;
            if dist_eq(nd, dist[x]) {
                if u < pred[x] {
                    pred[x] = u;
                }
            } else if nd < dist[x] {
                dist[x] = nd;
                pred[x] = u;
            }
        }
    }
    (dist, pred, order)
}

/// Fixes the shortest-path edge sets of a feature row's graph.
///
/// `paths[v]` holds, per reachable target (ascending), the feature indices of
/// the path's edges walking back from the target; `None` marks a node that
/// cannot reach every other node.
pub fn path_structure_for_row(values: &[f64], r: usize) -> Result<PathStructure> {
    if values.len() != feature_len(r) {
        return Err(validation(format!(
            "feature row length {} does not match r={}",
            values.len(),
            r
        )));
    }
    let (graph, _) = devectorize(values, r)?;
    let weights = graph.weights();
    let mut paths = Vec::with_capacity(r);
    for v in 0..r {
        let (dist, pred, _) = dijkstra_single_pred(weights, v);
        if dist.iter().any(|d| !d.is_finite()) {
            paths.push(None);
            continue;
        }
        let mut per_target = Vec::with_capacity(r - 1);
        for b in 0..r {
            if b == v {
                continue;
            }
            let mut edges = Vec::new();
            let mut cur = b;
            while cur != v {
                let p = pred[cur];
                let (lo, hi) = if p < cur { (p, cur) } else { (cur, p) };
                edges.push(upper_index(lo, hi, r));
                cur = p;
            }
            per_target.push(edges);
        }
        paths.push(Some(per_target));
    }
    Ok(PathStructure { r, paths })
}

fn closeness_from_structure(values: &[f64], structure: &PathStructure) -> Vec<f64> {
    let r = structure.r;
    let mut out = vec![0.0; r];
    for (v, paths) in structure.paths.iter().enumerate() {
        let Some(paths) = paths else { continue };
        let mut total = 0.0;
        for path in paths {
            let mut d = 0.0;
            for &k in path {
                d += 1.0 / values[k];
            }
            total += d;
        }
        out[v] = (r as f64 - 1.0) / total;
    }
    out
}

/// Closeness centrality `CC(v) = (V-1) / sum of shortest-path distances`.
pub fn closeness(g: &BrainGraph) -> Result<Vec<f64>> {
    let r = g.regions();
    if r < 2 {
        return Err(validation("closeness needs at least 2 regions"));
    }
    let values = vectorize(g);
    let structure = path_structure_for_row(&values, r)?;
    let disconnected = structure.paths.iter().filter(|p| p.is_none()).count();
    if disconnected > 0 {
        log::warn!("closeness: {disconnected} node(s) cannot reach the whole graph; their score is 0");
    }
    Ok(closeness_from_structure(&values, &structure))
}

/// Betweenness centrality via Brandes' accumulation over weighted shortest
/// paths, normalized by `2 / ((V-1)(V-2))` over unordered pairs.
pub fn betweenness(g: &BrainGraph) -> Result<Vec<f64>> {
    let r = g.regions();
    if r < 3 {
        return Err(validation("betweenness needs at least 3 regions"));
    }
    let weights = g.weights();
    let mut bc = vec![0.0; r];
    for s in 0..r {
        let mut dist = vec![f64::INFINITY; r];
        let mut sigma = vec![0.0; r];
        let mut preds: Vec<Vec<usize>> = vec![Vec::new(); r];
        let mut visited = vec![false; r];
        let mut order = Vec::with_capacity(r);
        dist[s] = 0.0;
        sigma[s] = 1.0;
        for _ in 0..r {
            let mut u = usize::MAX;
            let mut best = f64::INFINITY;
            for v in 0..r {
                if !visited[v] && dist[v] < best {
                    best = dist[v];
                    u = v;
                }
            }
            if u == usize::MAX {
                break;
            }
            visited[u] = true;
            order.push(u);
            for x in 0..r {
                let w = weights.get(u, x);
                if visited[x] || w <= 0.0 {
                    continue;
                }
                let nd = dist[u] + 1.0 / w;
                if dist_eq(nd, dist[x]) {
                    sigma[x] += sigma[u];
                    preds[x].push(u);
                } else if nd < dist[x] {
                    dist[x] = nd;
                    sigma[x] = sigma[u];
                    preds[x] = vec![u];
                }
            }
        }
        let mut delta = vec![0.0; r];
        for &w in order.iter().rev() {
            for &v in &preds[w] {
                delta[v] += sigma[v] / sigma[w] * (1.0 + delta[w]);
            }
            if w != s {
                bc[w] += delta[w];
            }
        }
    }
    // Ordered-pair accumulation counts each unordered pair twice.
    let norm = ((r - 1) * (r - 2)) as f64;
    for v in &mut bc {
        *v /= norm;
    }
    Ok(bc)
}

/// Eigenvector centrality: the Perron vector of the adjacency matrix, via
/// shifted power iteration from the uniform positive vector. Output is
/// non-negative with unit Euclidean norm.
pub fn eigenvector(g: &BrainGraph, max_iter: usize, tol: f64) -> Result<Vec<f64>> {
    let r = g.regions();
    let weights = g.weights();
    let shift = max_row_sum(weights);
    if shift == 0.0 {
        return Err(Error::Degenerate(
            "eigenvector centrality of an empty graph".into(),
        ));
    }
    let mut x = vec![1.0 / (r as f64).sqrt(); r];
    let mut residual = f64::INFINITY;
    for _ in 0..max_iter {
        let y = shifted_apply(weights, shift, &x);
        let norm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::Numerical("power iteration produced a zero iterate".into()));
        }
        let next: Vec<f64> = y.iter().map(|v| v / norm).collect();
        residual = next
            .iter()
            .zip(&x)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        x = next;
        if residual < tol {
            return Ok(x);
        }
    }
    Err(Error::Numerical(format!(
        "power iteration did not converge in {max_iter} iterations (residual {residual:.3e})"
    )))
}

fn max_row_sum(weights: &Tensor) -> f64 {
    let r = weights.rows();
    (0..r)
        .map(|i| weights.row(i).iter().sum::<f64>())
        .fold(0.0, f64::max)
}

fn shifted_apply(weights: &Tensor, shift: f64, x: &[f64]) -> Vec<f64> {
    let r = weights.rows();
    let mut y = vec![0.0; r];
    for i in 0..r {
        let mut acc = 0.0;
        for (j, &xj) in x.iter().enumerate() {
            acc += weights.get(i, j) * xj;
        }
        y[i] = acc + shift * x[i];
    }
    y
}

/// Row-wise centrality of a feature matrix: `n x f -> n x r`.
pub fn centrality_matrix(features: &Tensor, r: usize, metric: Metric) -> Result<CentralityMatrix> {
    let n = features.rows();
    if features.cols() != feature_len(r) {
        return Err(validation(format!(
            "feature matrix has {} columns, expected {} for r={r}",
            features.cols(),
            feature_len(r)
        )));
    }
    let mut scores = Tensor::zeros(n, r);
    let mut clamped_total = 0;
    for i in 0..n {
        let (graph, clamped) = devectorize(features.row(i), r)?;
        clamped_total += clamped;
        let row = match metric {
            Metric::Closeness => closeness(&graph)?,
            Metric::Betweenness => betweenness(&graph)?,
            Metric::Eigenvector => eigenvector(&graph, 1000, 1e-10)?,
        };
        for (j, &v) in row.iter().enumerate() {
            scores.set(i, j, v);
        }
    }
    if clamped_total > 0 {
        log::debug!("centrality_matrix({metric}): clamped {clamped_total} negative weights");
    }
    Ok(CentralityMatrix {
        scores,
        metric,
        clamped_entries: clamped_total,
    })
}

pub const EC_UNROLL_STEPS: usize = 50;

/// Eigenvector centrality of a feature row, unrolled on the tape so
/// gradients flow from scores to edge weights. Output is `1 x r`.
pub fn differentiable_ec(
    tape: &mut Tape,
    row: NodeId,
    r: usize,
    unroll_steps: usize,
) -> Result<NodeId> {
    let values = tape.value(row).data().to_vec();
    let clamped: Vec<f64> = values.iter().map(|&v| v.max(0.0)).collect();
    let (graph, _) = devectorize(&clamped, r)?;
    let shift = max_row_sum(graph.weights());
    if shift == 0.0 {
        return Err(Error::Degenerate(
            "differentiable eigenvector centrality of an empty graph".into(),
        ));
    }
    let adjacency = tape.devectorize_row(row, r)?;
    let shift_node = tape.constant(Tensor::identity(r).scale(shift));
    let shifted = tape.add(adjacency, shift_node)?;
    let mut x = tape.constant(Tensor::filled(r, 1, 1.0 / (r as f64).sqrt()));
    for _ in 0..unroll_steps {
        let y = tape.matmul(shifted, x)?;
        x = tape.normalize_unit(y)?;
    }
    tape.transpose(x)
}

/// Closeness centrality of a feature row with the shortest-path edge sets
/// fixed from the row's current (detached) values. Output is `1 x r`;
/// gradients are exact wherever shortest paths are unique.
pub fn differentiable_cc(tape: &mut Tape, row: NodeId, r: usize) -> Result<NodeId> {
    let values = tape.value(row).data().to_vec();
    let structure = path_structure_for_row(&values, r)?;
    tape.closeness_fixed_paths(row, Rc::new(structure))
}
