#![allow(dead_code)]

use cinn::graph::CausalDag;
use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// Random DAG over `d` vertices: a shuffled causal order, each forward pair
/// joined with probability `p`.
pub fn random_dag<R: Rng>(rng: &mut R, d: usize, p: f64) -> CausalDag {
    let mut order: Vec<usize> = (0..d).collect();
    order.shuffle(rng);
    let mut edges = Vec::new();
    for a in 0..d {
        for b in a + 1..d {
            if rng.random_bool(p) {
                edges.push((order[a], order[b]));
            }
        }
    }
    CausalDag::with_indices(d, edges).expect("forward edges are acyclic")
}

/// Linear SEM on `dag`: edge weights with |w| drawn uniformly from
/// [0.5, 2] and random sign, unit Gaussian noise.
pub fn linear_sem<R: Rng>(rng: &mut R, dag: &CausalDag, n: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    let d = dag.n_vertices();
    let mut w = DMatrix::zeros(d, d);
    for (i, j) in dag.edges() {
        let mag = rng.random_range(0.5..=2.0);
        w[(i, j)] = if rng.random_bool(0.5) { mag } else { -mag };
    }
    let order = dag.topological_order().expect("acyclic");
    let mut x = DMatrix::zeros(n, d);
    for r in 0..n {
        for &j in &order {
            let mut v: f64 = StandardNormal.sample(rng);
            for i in dag.parents(j) {
                v += w[(i, j)] * x[(r, i)];
            }
            x[(r, j)] = v;
        }
    }
    (w, x)
}

/// Cycle detection by colored depth-first search on a dense 0/1 matrix.
pub fn dfs_has_cycle(adj: &DMatrix<f64>) -> bool {
    fn visit(adj: &DMatrix<f64>, u: usize, color: &mut [u8]) -> bool {
        color[u] = 1;
        for v in 0..adj.ncols() {
            if adj[(u, v)] != 0.0 {
                if color[v] == 1 || (color[v] == 0 && visit(adj, v, color)) {
                    return true;
                }
            }
        }
        color[u] = 2;
        false
    }
    let mut color = vec![0u8; adj.nrows()];
    (0..adj.nrows()).any(|u| color[u] == 0 && visit(adj, u, &mut color))
}

/// Layer of every vertex as its longest-path distance from a source.
pub fn longest_path_depth(dag: &CausalDag) -> Vec<usize> {
    let order = dag.topological_order().expect("acyclic");
    let mut depth = vec![0usize; dag.n_vertices()];
    for &v in &order {
        for c in dag.children(v) {
            depth[c] = depth[c].max(depth[v] + 1);
        }
    }
    depth
}
