//! Dense reference implementations.
//!
//! Graphs follow the kernel convention: entry `(d, s)` of the adjacency
//! matrix is an edge `s -> d` whose value is its integer weight.

use std::collections::{BinaryHeap, VecDeque};
use std::cmp::Reverse;

use crate::formats::SparseMatrix;

pub fn dense_i32(m: &SparseMatrix) -> Vec<Vec<i32>> {
    m.to_dense()
        .into_iter()
        .map(|row| row.into_iter().map(|x| x as i32).collect())
        .collect()
}

pub fn dense_f64(m: &SparseMatrix) -> Vec<Vec<f64>> {
    m.to_dense()
        .into_iter()
        .map(|row| row.into_iter().map(|x| f32::from_bits(x) as f64).collect())
        .collect()
}

/// Integer mat-vec with wrapping arithmetic.
pub fn spmv(m: &SparseMatrix, v: &[i32]) -> Vec<i32> {
    dense_i32(m)
        .iter()
        .map(|row| row.iter().zip(v).fold(0i32, |acc, (&a, &x)| acc.wrapping_add(a.wrapping_mul(x))))
        .collect()
}

/// Float mat-vec in double precision.
pub fn spmv_f64(m: &SparseMatrix, v: &[f32]) -> Vec<f64> {
    dense_f64(m)
        .iter()
        .map(|row| row.iter().zip(v).map(|(&a, &x)| a * x as f64).sum())
        .collect()
}

/// Largest error no more than `tol` times the largest reference magnitude.
pub fn within_relative(got: &[f32], want: &[f64], tol: f64) -> bool {
    if got.len() != want.len() {
        return false;
    }
    let scale = want.iter().fold(0f64, |m, x| m.max(x.abs())).max(f64::MIN_POSITIVE);
    got.iter()
        .zip(want)
        .all(|(&g, &w)| ((g as f64) - w).abs() <= tol * scale)
}

fn out_edges(g: &SparseMatrix) -> Vec<Vec<(usize, i64)>> {
    let mut adj = vec![Vec::new(); g.cols()];
    for (d, s, w) in g.to_triples() {
        adj[s as usize].push((d as usize, w as i32 as i64));
    }
    adj
}

/// Damped power iteration from the uniform vector.
pub fn pagerank(g: &SparseMatrix, damping: f64, iterations: usize) -> Vec<f64> {
    let n = g.rows();
    let adj = out_edges(g);
    let mut r = vec![1.0 / n as f64; n];
    for _ in 0..iterations {
        let mut next = vec![(1.0 - damping) / n as f64; n];
        for (s, es) in adj.iter().enumerate() {
            for &(d, _) in es {
                next[d] += damping * r[s] / es.len() as f64;
            }
        }
        r = next;
    }
    r
}

/// Hop count from `source`, `None` when unreachable.
pub fn bfs_depths(g: &SparseMatrix, source: usize) -> Vec<Option<u32>> {
    let adj = out_edges(g);
    let mut depth = vec![None; g.rows()];
    depth[source] = Some(0);
    let mut q = VecDeque::from([source]);
    while let Some(s) = q.pop_front() {
        let ds = depth[s].unwrap();
        for &(d, _) in &adj[s] {
            if depth[d].is_none() {
                depth[d] = Some(ds + 1);
                q.push_back(d);
            }
        }
    }
    depth
}

pub fn bellman_ford(g: &SparseMatrix, source: usize) -> Vec<Option<i64>> {
    let edges = g.to_triples();
    let mut dist = vec![None; g.rows()];
    dist[source] = Some(0i64);
    for _ in 0..g.rows() {
        let mut changed = false;
        for &(d, s, w) in &edges {
            if let Some(ds) = dist[s as usize] {
                let nd = ds + w as i32 as i64;
                if dist[d as usize].is_none_or(|x| nd < x) {
                    dist[d as usize] = Some(nd);
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    dist
}

pub fn dijkstra(g: &SparseMatrix, source: usize) -> Vec<Option<i64>> {
    let adj = out_edges(g);
    let mut dist: Vec<Option<i64>> = vec![None; g.rows()];
    let mut heap = BinaryHeap::from([Reverse((0i64, source))]);
    while let Some(Reverse((ds, s))) = heap.pop() {
        if dist[s].is_some() {
            continue;
        }
        dist[s] = Some(ds);
        for &(d, w) in &adj[s] {
            if dist[d].is_none() {
                heap.push(Reverse((ds + w, d)));
            }
        }
    }
    dist
}

pub fn dense_add(a: &SparseMatrix, b: &SparseMatrix) -> Vec<Vec<i32>> {
    let (a, b) = (dense_i32(a), dense_i32(b));
    a.iter()
        .zip(&b)
        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| p.wrapping_add(*q)).collect())
        .collect()
}

pub fn dense_matmul(a: &SparseMatrix, b: &SparseMatrix) -> Vec<Vec<i32>> {
    let (a, b) = (dense_i32(a), dense_i32(b));
    let n = b.first().map_or(0, Vec::len);
    a.iter()
        .map(|row| {
            (0..n)
                .map(|k| {
                    row.iter()
                        .zip(&b)
                        .fold(0i32, |acc, (&x, brow)| acc.wrapping_add(x.wrapping_mul(brow[k])))
                })
                .collect()
        })
        .collect()
}

pub fn dense_matmul_f64(a: &SparseMatrix, b: &SparseMatrix) -> Vec<Vec<f64>> {
    let (a, b) = (dense_f64(a), dense_f64(b));
    let n = b.first().map_or(0, Vec::len);
    a.iter()
        .map(|row| (0..n).map(|k| row.iter().zip(&b).map(|(x, br)| x * br[k]).sum()).collect())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn triangle() -> SparseMatrix {
        // 0->1 (5), 1->2 (1), 0->2 (9)
        SparseMatrix::from_triples(3, 3, vec![(1, 0, 5), (2, 1, 1), (2, 0, 9)]).unwrap()
    }

    #[test]
    fn shortest_paths_agree() {
        let g = triangle();
        assert_eq!(bellman_ford(&g, 0), vec![Some(0), Some(5), Some(6)]);
        assert_eq!(dijkstra(&g, 0), bellman_ford(&g, 0));
        assert_eq!(bfs_depths(&g, 0), vec![Some(0), Some(1), Some(1)]);
        assert_eq!(bfs_depths(&g, 2), vec![None, None, Some(0)]);
    }

    #[test]
    fn pagerank_two_cycle_is_uniform() {
        let g = SparseMatrix::from_triples(2, 2, vec![(0, 1, 1), (1, 0, 1)]).unwrap();
        assert_eq!(pagerank(&g, 0.85, 7), vec![0.5, 0.5]);
    }

    #[test]
    fn matmul_by_identity() {
        let b = triangle();
        assert_eq!(dense_matmul(&SparseMatrix::identity(3, 1), &b), dense_i32(&b));
    }
}
