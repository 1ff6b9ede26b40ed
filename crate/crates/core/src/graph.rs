//! City graph over tessellation cells and the masked 1-hop graph convolution.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Symmetric 0/1 adjacency with an empty diagonal, stored densely.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdjacencyMatrix {
    n: usize,
    a: Vec<bool>,
}

impl AdjacencyMatrix {
    pub fn empty(n: usize) -> Self {
        Self {
            n,
            a: vec![false; n * n],
        }
    }

    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut adj = Self::empty(n);
        for &(i, j) in edges {
            if i >= n || j >= n {
                return Err(Error::invalid(format!("edge ({i}, {j}) out of range for {n} nodes")));
            }
            if i == j {
                return Err(Error::invalid(format!("self-loop on node {i}")));
            }
            adj.connect(i, j);
        }
        Ok(adj)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn connect(&mut self, i: usize, j: usize) {
        assert!(i != j, "adjacency diagonal must stay zero");
        self.a[i * self.n + j] = true;
        self.a[j * self.n + i] = true;
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> bool {
        self.a[i * self.n + j]
    }

    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.n).filter(move |&j| self.get(i, j))
    }

    pub fn degree(&self, i: usize) -> usize {
        self.neighbors(i).count()
    }

    pub fn degrees(&self) -> Vec<usize> {
        (0..self.n).map(|i| self.degree(i)).collect()
    }

    /// Sorted `(i, j)` pairs with `i < j`.
    pub fn edge_list(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for i in 0..self.n {
            for j in i + 1..self.n {
                if self.get(i, j) {
                    out.push((i, j));
                }
            }
        }
        out
    }

    /// `Ã = A + I`.
    pub fn augment(&self) -> AugmentedAdjacency {
        let mut a = self.a.clone();
        for i in 0..self.n {
            a[i * self.n + i] = true;
        }
        AugmentedAdjacency { n: self.n, a }
    }
}

/// Adjacency with self-loops, used as the support mask of the graph weights.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AugmentedAdjacency {
    n: usize,
    a: Vec<bool>,
}

impl AugmentedAdjacency {
    pub fn identity(n: usize) -> Self {
        AdjacencyMatrix::empty(n).augment()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> bool {
        self.a[i * self.n + j]
    }

    /// Row-major support mask.
    pub fn mask(&self) -> &[bool] {
        &self.a
    }

    pub fn support_size(&self) -> usize {
        self.a.iter().filter(|&&b| b).count()
    }

    /// The underlying adjacency with the diagonal cleared.
    pub fn without_self_loops(&self) -> AdjacencyMatrix {
        let mut a = self.a.clone();
        for i in 0..self.n {
            a[i * self.n + i] = false;
        }
        AdjacencyMatrix { n: self.n, a }
    }
}

/// `GC = (W_gc ∘ Ã) · x`.
pub fn graph_convolution<T: Scalar>(w_gc: &[T], support: &AugmentedAdjacency, x: &[T]) -> Result<Vec<T>> {
    let n = support.n();
    if w_gc.len() != n * n || x.len() != n {
        return Err(Error::invalid(format!(
            "graph convolution shapes: weights {} (want {}), signal {} (want {n})",
            w_gc.len(),
            n * n,
            x.len()
        )));
    }
    Ok(masked_matvec(w_gc, support.mask(), x))
}

/// Row-major masked matrix-vector product; only masked-in entries are read.
pub(crate) fn masked_matvec<T: Scalar>(w: &[T], mask: &[bool], x: &[T]) -> Vec<T> {
    let n = x.len();
    (0..n)
        .map(|i| {
            let row = i * n;
            (0..n).fold(T::zero(), |acc, j| {
                if mask[row + j] {
                    acc + w[row + j] * x[j]
                } else {
                    acc
                }
            })
        })
        .collect()
}

/// Nodes reachable within `k` hops, self included.
pub fn k_hop_reach(a: &AdjacencyMatrix, k: usize) -> Result<AugmentedAdjacency> {
    if k == 0 {
        return Err(Error::invalid("k_hop_reach needs k >= 1"));
    }
    let n = a.n();
    let step = a.augment();
    let mut reach = step.clone();
    for _ in 1..k {
        let mut next = reach.a.clone();
        for i in 0..n {
            for j in 0..n {
                if !reach.get(i, j) {
                    continue;
                }
                for m in 0..n {
                    if step.get(j, m) {
                        next[i * n + m] = true;
                    }
                }
            }
        }
        if next == reach.a {
            break;
        }
        reach.a = next;
    }
    Ok(reach)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn k3() -> AdjacencyMatrix {
        AdjacencyMatrix::from_edges(3, &[(0, 1), (1, 2), (0, 2)]).unwrap()
    }

    fn path3() -> AdjacencyMatrix {
        AdjacencyMatrix::from_edges(3, &[(0, 1), (1, 2)]).unwrap()
    }

    #[test]
    fn augment_examples() {
        let z = AdjacencyMatrix::empty(3).augment();
        assert_eq!(z, AugmentedAdjacency::identity(3));
        assert!(k3().augment().mask().iter().all(|&b| b));
        let a = path3();
        assert_eq!(a.augment().without_self_loops().augment(), a.augment());
    }

    #[test]
    fn from_edges_rejects_bad_edges() {
        assert!(AdjacencyMatrix::from_edges(2, &[(0, 2)]).is_err());
        assert!(AdjacencyMatrix::from_edges(2, &[(1, 1)]).is_err());
    }

    #[test]
    fn convolution_examples() {
        let ones = vec![1.0f64; 9];
        let x = [2.0, -1.0, 5.0];
        assert_eq!(graph_convolution(&ones, &AugmentedAdjacency::identity(3), &x).unwrap(), x.to_vec());
        // all-ones weights on K3 + I: every node sees 2 - 1 + 5
        assert_eq!(graph_convolution(&ones, &k3().augment(), &x).unwrap(), vec![6.0, 6.0, 6.0]);
        assert!(graph_convolution(&ones, &k3().augment(), &[1.0, 2.0]).is_err());
    }

    #[test]
    fn non_neighbors_do_not_leak() {
        let w: Vec<f64> = (0..9).map(|v| v as f64 * 0.3 + 0.1).collect();
        let s = path3().augment();
        let a = graph_convolution(&w, &s, &[1.0, 2.0, 3.0]).unwrap();
        let b = graph_convolution(&w, &s, &[1.0, 2.0, 300.0]).unwrap();
        assert_eq!(a[0], b[0]);
        assert_ne!(a[1], b[1]);
    }

    #[test]
    fn k_hop_examples() {
        let a = path3();
        let r1 = k_hop_reach(&a, 1).unwrap();
        assert_eq!(r1, a.augment());
        assert!(!r1.get(0, 2));
        let r2 = k_hop_reach(&a, 2).unwrap();
        assert!(r2.mask().iter().all(|&b| b));
        assert!(k_hop_reach(&a, 0).is_err());
        let ring = AdjacencyMatrix::from_edges(6, &[(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (5, 0)]).unwrap();
        assert!(k_hop_reach(&ring, 3).unwrap().mask().iter().all(|&b| b));
        assert!(k_hop_reach(&ring, 10).unwrap().mask().iter().all(|&b| b));
    }

    fn arb_graph() -> impl Strategy<Value = (AdjacencyMatrix, Vec<f64>, Vec<f64>, Vec<f64>, f64)> {
        (2usize..8).prop_flat_map(|n| {
            (
                proptest::collection::vec(any::<bool>(), n * n),
                proptest::collection::vec(-2.0f64..2.0, n * n),
                proptest::collection::vec(-5.0f64..5.0, n),
                proptest::collection::vec(-5.0f64..5.0, n),
                -3.0f64..3.0,
            )
                .prop_map(move |(bits, w, x, y, alpha)| {
                    let mut a = AdjacencyMatrix::empty(n);
                    for i in 0..n {
                        for j in i + 1..n {
                            if bits[i * n + j] {
                                a.connect(i, j);
                            }
                        }
                    }
                    (a, w, x, y, alpha)
                })
        })
    }

    proptest! {
        #[test]
        fn convolution_is_linear((a, w, x, y, alpha) in arb_graph()) {
            let s = a.augment();
            let mix: Vec<f64> = x.iter().zip(&y).map(|(xi, yi)| alpha * xi + yi).collect();
            let lhs = graph_convolution(&w, &s, &mix).unwrap();
            let gx = graph_convolution(&w, &s, &x).unwrap();
            let gy = graph_convolution(&w, &s, &y).unwrap();
            for i in 0..lhs.len() {
                prop_assert!((lhs[i] - (alpha * gx[i] + gy[i])).abs() < 1e-9);
            }
        }

        #[test]
        fn zeroing_off_support_is_bit_identical((a, w, x, _y, _alpha) in arb_graph()) {
            let s = a.augment();
            let masked: Vec<f64> = w.iter().zip(s.mask()).map(|(&v, &m)| if m { v } else { 0.0 }).collect();
            prop_assert_eq!(graph_convolution(&w, &s, &x).unwrap(), graph_convolution(&masked, &s, &x).unwrap());
        }

        #[test]
        fn reach_is_monotone((a, _w, _x, _y, _alpha) in arb_graph(), k in 1usize..4) {
            let lo = k_hop_reach(&a, k).unwrap();
            let hi = k_hop_reach(&a, k + 1).unwrap();
            for (l, h) in lo.mask().iter().zip(hi.mask()) {
                prop_assert!(!l || *h);
            }
        }
    }
}
