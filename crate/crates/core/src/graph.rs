//! Weighted undirected communication graph, its Laplacian, and the spectral
//! quantities (algebraic connectivity, largest eigenvalue) that enter the
//! convergence condition and the runtime monitors.

use nalgebra::{DMatrix, DVector};

use crate::error::{CoreError, Result};

/// Spectral connectivity threshold; paired with a union-find cross-check
/// because the eigenvalue test alone is tolerance-sensitive.
const LAMBDA2_TOL: f64 = 1e-10;

/// An undirected, connected, weighted communication graph over `N` agents.
#[derive(Debug, Clone)]
pub struct CommGraph {
    n_agents: usize,
    adjacency: DMatrix<f64>,
    laplacian: DMatrix<f64>,
    /// Per-node weighted degree, `L[i][i]`.
    degrees: Vec<f64>,
    /// Neighbor lists `(j, w_ij)` for Laplacian application without the
    /// Kronecker product ever being materialized.
    neighbors: Vec<Vec<(usize, f64)>>,
    lambda2: f64,
    lambda_max: f64,
}

impl CommGraph {
    /// Build a graph from 1-based `(i, j, w)` edges and verify connectivity.
    pub fn from_edges(n_agents: usize, edges: &[(usize, usize, f64)]) -> Result<Self> {
        if n_agents < 2 {
            return Err(CoreError::InvalidGraph(format!(
                "need at least 2 agents, got {n_agents}"
            )));
        }
        let mut adjacency = DMatrix::zeros(n_agents, n_agents);
        for &(i, j, w) in edges {
            if i < 1 || j < 1 || i > n_agents || j > n_agents {
                return Err(CoreError::InvalidGraph(format!(
                    "edge ({i}, {j}) out of range 1..={n_agents}"
                )));
            }
            if i == j {
                return Err(CoreError::InvalidGraph(format!("self-loop at node {i}")));
            }
            if !(w > 0.0) {
                return Err(CoreError::InvalidGraph(format!(
                    "edge ({i}, {j}) has nonpositive weight {w}"
                )));
            }
            let (a, b) = (i - 1, j - 1);
            if adjacency[(a, b)] != 0.0 {
                return Err(CoreError::InvalidGraph(format!("duplicate edge ({i}, {j})")));
            }
            adjacency[(a, b)] = w;
            adjacency[(b, a)] = w;
        }

        // Union-find connectivity check, independent of the spectral one.
        let mut parent: Vec<usize> = (0..n_agents).collect();
        fn find(parent: &mut Vec<usize>, mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        for &(i, j, _) in edges {
            let (ra, rb) = (find(&mut parent, i - 1), find(&mut parent, j - 1));
            parent[ra] = rb;
        }
        let root = find(&mut parent, 0);
        if (0..n_agents).any(|k| find(&mut parent, k) != root) {
            return Err(CoreError::Disconnected);
        }

        let degrees: Vec<f64> = (0..n_agents).map(|i| adjacency.row(i).sum()).collect();
        let mut laplacian = -adjacency.clone();
        for i in 0..n_agents {
            laplacian[(i, i)] = degrees[i];
        }

        let mut eigs: Vec<f64> = laplacian
            .clone()
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .cloned()
            .collect();
        eigs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let lambda2 = eigs[1];
        let lambda_max = eigs[n_agents - 1];
        if lambda2 <= LAMBDA2_TOL {
            return Err(CoreError::Disconnected);
        }

        let neighbors = (0..n_agents)
            .map(|i| {
                (0..n_agents)
                    .filter(|&j| adjacency[(i, j)] != 0.0)
                    .map(|j| (j, adjacency[(i, j)]))
                    .collect()
            })
            .collect();

        Ok(Self {
            n_agents,
            adjacency,
            laplacian,
            degrees,
            neighbors,
            lambda2,
            lambda_max,
        })
    }

    pub fn n_agents(&self) -> usize {
        self.n_agents
    }

    pub fn adjacency(&self) -> &DMatrix<f64> {
        &self.adjacency
    }

    pub fn laplacian(&self) -> &DMatrix<f64> {
        &self.laplacian
    }

    /// Algebraic connectivity, the second-smallest Laplacian eigenvalue.
    pub fn lambda2(&self) -> f64 {
        self.lambda2
    }

    pub fn lambda_max(&self) -> f64 {
        self.lambda_max
    }

    /// 1-based `(i, j, w)` edge list, each undirected edge reported once.
    pub fn edge_list(&self) -> Vec<(usize, usize, f64)> {
        let mut edges = Vec::new();
        for i in 0..self.n_agents {
            for &(j, w) in &self.neighbors[i] {
                if j > i {
                    edges.push((i + 1, j + 1, w));
                }
            }
        }
        edges
    }

    /// Apply `L (x) I_q` to a stacked vector of `N` blocks of size `q`.
    pub fn laplacian_apply(&self, q: usize, y: &DVector<f64>) -> Result<DVector<f64>> {
        if y.len() != self.n_agents * q {
            return Err(CoreError::DimensionMismatch {
                context: "laplacian_apply",
                expected: self.n_agents * q,
                got: y.len(),
            });
        }
        let mut out = DVector::zeros(y.len());
        self.laplacian_apply_into(q, y.as_slice(), out.as_mut_slice());
        Ok(out)
    }

    /// Blockwise `(L (x) I_q) y` writing into a caller-provided buffer.
    pub fn laplacian_apply_into(&self, q: usize, y: &[f64], out: &mut [f64]) {
        debug_assert_eq!(y.len(), self.n_agents * q);
        debug_assert_eq!(out.len(), y.len());
        for i in 0..self.n_agents {
            let oi = i * q;
            let deg = self.degrees[i];
            for k in 0..q {
                out[oi + k] = deg * y[oi + k];
            }
            for &(j, w) in &self.neighbors[i] {
                let oj = j * q;
                for k in 0..q {
                    out[oi + k] -= w * y[oj + k];
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn two_node_laplacian() {
        let g = CommGraph::from_edges(2, &[(1, 2, 1.0)]).unwrap();
        assert_eq!(g.laplacian(), &DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]));
        assert_abs_diff_eq!(g.lambda2(), 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(g.lambda_max(), 2.0, epsilon = 1e-12);
    }

    #[test]
    fn five_cycle_algebraic_connectivity() {
        // Circulant closed form: eigenvalues 2 - 2 cos(2 pi k / 5).
        let expected: f64 = (1..5)
            .map(|k| 2.0 - 2.0 * (2.0 * std::f64::consts::PI * k as f64 / 5.0).cos())
            .fold(f64::INFINITY, f64::min);
        let edges: Vec<_> = (1..=5).map(|i| (i, i % 5 + 1, 1.0)).collect();
        let g = CommGraph::from_edges(5, &edges).unwrap();
        assert_abs_diff_eq!(g.lambda2(), expected, epsilon = 1e-10);
        assert_abs_diff_eq!(g.lambda2(), 1.3819660112501051, epsilon = 1e-10);
    }

    #[test]
    fn isolated_node_is_rejected() {
        assert!(matches!(
            CommGraph::from_edges(3, &[(1, 2, 1.0)]),
            Err(CoreError::Disconnected)
        ));
    }

    #[test]
    fn self_loops_and_bad_weights_are_rejected() {
        assert!(CommGraph::from_edges(2, &[(1, 1, 1.0)]).is_err());
        assert!(CommGraph::from_edges(2, &[(1, 2, 0.0)]).is_err());
        assert!(CommGraph::from_edges(2, &[(1, 2, -2.0)]).is_err());
    }

    #[test]
    fn laplacian_apply_matches_direct_multiplication() {
        let g = CommGraph::from_edges(2, &[(1, 2, 1.0)]).unwrap();
        let y = DVector::from_row_slice(&[1.0, 0.0]);
        assert_eq!(
            g.laplacian_apply(1, &y).unwrap(),
            DVector::from_row_slice(&[1.0, -1.0])
        );
    }

    #[test]
    fn laplacian_apply_annihilates_consensus() {
        let g = CommGraph::from_edges(3, &[(1, 2, 0.7), (2, 3, 1.3)]).unwrap();
        let v = DVector::from_row_slice(&[2.5, -1.0]);
        let mut y = DVector::zeros(6);
        for i in 0..3 {
            y.rows_mut(2 * i, 2).copy_from(&v);
        }
        assert!(g.laplacian_apply(2, &y).unwrap().norm() <= 1e-12);
    }

    /// Random connected graph: a random path plus extra random edges.
    fn arb_graph() -> impl Strategy<Value = CommGraph> {
        (2usize..7)
            .prop_flat_map(|n| {
                let path = proptest::collection::vec(0.5f64..2.0, n - 1);
                let extra = proptest::collection::vec(
                    ((0usize..10), (0usize..10), 0.5f64..2.0),
                    0..4,
                );
                (Just(n), path, extra)
            })
            .prop_map(|(n, path, extra)| {
                let mut edges: Vec<(usize, usize, f64)> =
                    path.iter().enumerate().map(|(i, &w)| (i + 1, i + 2, w)).collect();
                for (a, b, w) in extra {
                    let (i, j) = (a % n + 1, b % n + 1);
                    if i != j && !edges.iter().any(|e| {
                        (e.0, e.1) == (i, j) || (e.0, e.1) == (j, i)
                    }) {
                        edges.push((i, j, w));
                    }
                }
                CommGraph::from_edges(n, &edges).unwrap()
            })
    }

    proptest! {
        #[test]
        fn consensus_vectors_span_the_nullspace(g in arb_graph(), v in proptest::array::uniform3(-5.0f64..5.0)) {
            let q = 3;
            let mut y = DVector::zeros(g.n_agents() * q);
            for i in 0..g.n_agents() {
                for k in 0..q {
                    y[i * q + k] = v[k];
                }
            }
            prop_assert!(g.laplacian_apply(q, &y).unwrap().norm() <= 1e-12);
        }

        #[test]
        fn quadratic_form_dominates_scaled_image_norm(
            g in arb_graph(),
            raw in proptest::collection::vec(-5.0f64..5.0, 21),
        ) {
            let q = 3;
            let y = DVector::from_iterator(g.n_agents() * q, raw.into_iter().take(g.n_agents() * q));
            let ly = g.laplacian_apply(q, &y).unwrap();
            let quad = y.dot(&ly);
            let bound = ly.norm_squared() / g.lambda_max();
            prop_assert!(quad >= bound - 1e-9 * (1.0 + bound.abs()));
        }

        #[test]
        fn constructed_graphs_are_connected(g in arb_graph()) {
            prop_assert!(g.lambda2() > 0.0);
        }

        #[test]
        fn image_is_orthogonal_to_consensus(
            g in arb_graph(),
            raw in proptest::collection::vec(-5.0f64..5.0, 14),
        ) {
            let q = 2;
            let y = DVector::from_iterator(g.n_agents() * q, raw.into_iter().take(g.n_agents() * q));
            let ly = g.laplacian_apply(q, &y).unwrap();
            for k in 0..q {
                let s: f64 = (0..g.n_agents()).map(|i| ly[i * q + k]).sum();
                prop_assert!(s.abs() <= 1e-10);
            }
        }
    }
}
