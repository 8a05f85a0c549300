//! User–item bipartite graph in CSR form and symmetric-normalized
//! propagation with layer averaging.

use rayon::prelude::*;

use crate::corpus::DatasetSplit;
use crate::error::{Error, Result};
use crate::linalg::{Matrix, Scalar};

#[derive(Debug, Clone, PartialEq)]
pub struct BipartiteGraph {
    user_offsets: Vec<usize>,
    user_items: Vec<usize>,
    item_offsets: Vec<usize>,
    item_users: Vec<usize>,
    user_degree: Vec<usize>,
    item_degree: Vec<usize>,
}

fn csr(n_rows: usize, edges: &[(usize, usize)]) -> (Vec<usize>, Vec<usize>) {
    let mut offsets = vec![0usize; n_rows + 1];
    for &(r, _) in edges {
        offsets[r + 1] += 1;
    }
    for k in 0..n_rows {
        offsets[k + 1] += offsets[k];
    }
    let mut cursor = offsets.clone();
    let mut cols = vec![0usize; edges.len()];
    for &(r, c) in edges {
        cols[cursor[r]] = c;
        cursor[r] += 1;
    }
    for r in 0..n_rows {
        cols[offsets[r]..offsets[r + 1]].sort_unstable();
    }
    (offsets, cols)
}

impl BipartiteGraph {
    /// Builds from an edge list; duplicate edges are collapsed.
    pub fn from_edges(n_users: usize, n_items: usize, edges: &[(usize, usize)]) -> Result<Self> {
        if let Some(&(u, i)) = edges.iter().find(|&&(u, i)| u >= n_users || i >= n_items) {
            return Err(Error::Shape(format!(
                "edge ({u}, {i}) outside a {n_users}x{n_items} graph"
            )));
        }
        let mut edges = edges.to_vec();
        edges.sort_unstable();
        edges.dedup();
        let (user_offsets, user_items) = csr(n_users, &edges);
        let flipped: Vec<(usize, usize)> = edges.iter().map(|&(u, i)| (i, u)).collect();
        let (item_offsets, item_users) = csr(n_items, &flipped);
        let user_degree = user_offsets.windows(2).map(|w| w[1] - w[0]).collect();
        let item_degree = item_offsets.windows(2).map(|w| w[1] - w[0]).collect();
        Ok(BipartiteGraph {
            user_offsets,
            user_items,
            item_offsets,
            item_users,
            user_degree,
            item_degree,
        })
    }

    pub fn n_users(&self) -> usize {
        self.user_degree.len()
    }

    pub fn n_items(&self) -> usize {
        self.item_degree.len()
    }

    pub fn n_edges(&self) -> usize {
        self.user_items.len()
    }

    pub fn user_items(&self, u: usize) -> &[usize] {
        &self.user_items[self.user_offsets[u]..self.user_offsets[u + 1]]
    }

    pub fn item_users(&self, i: usize) -> &[usize] {
        &self.item_users[self.item_offsets[i]..self.item_offsets[i + 1]]
    }

    pub fn user_degree(&self) -> &[usize] {
        &self.user_degree
    }

    pub fn item_degree(&self) -> &[usize] {
        &self.item_degree
    }

    pub fn has_edge(&self, u: usize, i: usize) -> bool {
        self.user_items(u).binary_search(&i).is_ok()
    }

    fn weight<T: Scalar>(&self, u: usize, i: usize) -> T {
        let du = self.user_degree[u] as f64;
        let di = self.item_degree[i] as f64;
        T::of(1.0 / (du.sqrt() * di.sqrt()))
    }
}

/// Graph over the training interactions of a split.
pub fn build_graph(split: &DatasetSplit) -> BipartiteGraph {
    let edges: Vec<(usize, usize)> = split
        .train
        .iter()
        .enumerate()
        .flat_map(|(u, items)| items.iter().map(move |&i| (u, i)))
        .collect();
    BipartiteGraph::from_edges(split.n_users(), split.n_items(), &edges)
        .expect("split indices lie inside its id maps")
}

fn check_dims<T: Scalar>(g: &BipartiteGraph, users: &Matrix<T>, items: &Matrix<T>) -> Result<()> {
    if users.rows() != g.n_users() || items.rows() != g.n_items() || users.cols() != items.cols() {
        return Err(Error::Shape(format!(
            "propagation over a {}x{} graph given user {:?} and item {:?} matrices",
            g.n_users(),
            g.n_items(),
            users.shape(),
            items.shape()
        )));
    }
    Ok(())
}

/// One propagation step. Both outputs read only the layer-k inputs; each
/// row reduces over its neighbours in ascending index order. Nodes without
/// neighbours receive the zero vector.
pub fn propagate<T: Scalar>(
    g: &BipartiteGraph,
    users: &Matrix<T>,
    items: &Matrix<T>,
) -> Result<(Matrix<T>, Matrix<T>)> {
    check_dims(g, users, items)?;
    let d = users.cols();
    let mut next_users = Matrix::zeros(g.n_users(), d);
    let mut next_items = Matrix::zeros(g.n_items(), d);
    if d == 0 {
        return Ok((next_users, next_items));
    }
    next_users
        .as_mut_slice()
        .par_chunks_mut(d)
        .enumerate()
        .for_each(|(u, out)| {
            for &i in g.user_items(u) {
                let w: T = g.weight(u, i);
                for (o, &x) in out.iter_mut().zip(items.row(i)) {
                    *o += w * x;
                }
            }
        });
    next_items
        .as_mut_slice()
        .par_chunks_mut(d)
        .enumerate()
        .for_each(|(i, out)| {
            for &u in g.item_users(i) {
                let w: T = g.weight(u, i);
                for (o, &x) in out.iter_mut().zip(users.row(u)) {
                    *o += w * x;
                }
            }
        });
    Ok((next_users, next_items))
}

/// All layers `0..=K` of user and item representations.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerStack<T> {
    pub users: Vec<Matrix<T>>,
    pub items: Vec<Matrix<T>>,
}

impl<T: Scalar> LayerStack<T> {
    pub fn n_layers(&self) -> usize {
        self.users.len() - 1
    }

    /// Mean over layers, summed in layer order.
    pub fn mean(&self) -> (Matrix<T>, Matrix<T>) {
        (layer_mean(&self.users), layer_mean(&self.items))
    }
}

pub(crate) fn layer_mean<T: Scalar>(layers: &[Matrix<T>]) -> Matrix<T> {
    let mut acc = layers[0].clone();
    for m in &layers[1..] {
        acc.axpy(T::one(), m);
    }
    let n = T::of(layers.len() as f64);
    acc.map(|v| v / n)
}

pub fn propagate_layers<T: Scalar>(
    g: &BipartiteGraph,
    users: Matrix<T>,
    items: Matrix<T>,
    layers: usize,
) -> Result<LayerStack<T>> {
    check_dims(g, &users, &items)?;
    let mut stack = LayerStack {
        users: vec![users],
        items: vec![items],
    };
    for k in 0..layers {
        let (u, i) = propagate(g, &stack.users[k], &stack.items[k])?;
        stack.users.push(u);
        stack.items.push(i);
    }
    Ok(stack)
}

/// Layer-averaged representations after `layers` propagation steps.
pub fn multi_layer<T: Scalar>(
    g: &BipartiteGraph,
    users: &Matrix<T>,
    items: &Matrix<T>,
    layers: usize,
) -> Result<(Matrix<T>, Matrix<T>)> {
    Ok(propagate_layers(g, users.clone(), items.clone(), layers)?.mean())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_edge_degrees_and_identity_weight() {
        let g = BipartiteGraph::from_edges(1, 1, &[(0, 0)]).unwrap();
        assert_eq!(g.user_degree(), &[1]);
        assert_eq!(g.item_degree(), &[1]);
        let eu = Matrix::<f32>::from_rows(&[vec![9.0, 9.0]]).unwrap();
        let ei = Matrix::<f32>::from_rows(&[vec![1.5, -2.0]]).unwrap();
        let (u1, i1) = propagate(&g, &eu, &ei).unwrap();
        assert_eq!(u1, ei);
        assert_eq!(i1, eu);
    }

    #[test]
    fn transpose_degrees() {
        let g = BipartiteGraph::from_edges(2, 2, &[(0, 0), (0, 1), (1, 1), (1, 1)]).unwrap();
        assert_eq!(g.item_degree(), &[1, 2]);
        assert_eq!(g.item_users(1), &[0, 1]);
        assert_eq!(g.n_edges(), 3);
        assert!(g.has_edge(1, 1) && !g.has_edge(1, 0));
    }

    #[test]
    fn two_leaf_items_sum_over_sqrt2() {
        let g = BipartiteGraph::from_edges(1, 2, &[(0, 0), (0, 1)]).unwrap();
        let eu = Matrix::<f64>::zeros(1, 2);
        let ei = Matrix::<f64>::from_rows(&[vec![1.0, 2.0], vec![3.0, -1.0]]).unwrap();
        let (u1, _) = propagate(&g, &eu, &ei).unwrap();
        let s = 2f64.sqrt();
        assert!((u1[(0, 0)] - 4.0 / s).abs() < 1e-15);
        assert!((u1[(0, 1)] - 1.0 / s).abs() < 1e-15);
    }

    #[test]
    fn zero_layers_is_identity_and_one_layer_halves() {
        let g = BipartiteGraph::from_edges(1, 1, &[(0, 0)]).unwrap();
        let a = Matrix::<f64>::from_rows(&[vec![1.0, 3.0]]).unwrap();
        let b = Matrix::<f64>::from_rows(&[vec![5.0, -1.0]]).unwrap();
        assert_eq!(multi_layer(&g, &a, &b, 0).unwrap(), (a.clone(), b.clone()));
        let (u, i) = multi_layer(&g, &a, &b, 1).unwrap();
        let half = Matrix::from_rows(&[vec![3.0, 1.0]]).unwrap();
        assert_eq!(u, half);
        assert_eq!(i, half);
    }

    #[test]
    fn isolated_items_get_zero_messages() {
        let g = BipartiteGraph::from_edges(1, 2, &[(0, 0)]).unwrap();
        let eu = Matrix::<f32>::from_rows(&[vec![1.0]]).unwrap();
        let ei = Matrix::<f32>::from_rows(&[vec![2.0], vec![4.0]]).unwrap();
        let (_, i1) = propagate(&g, &eu, &ei).unwrap();
        assert_eq!(i1.row(1), &[0.0]);
        let (_, mean) = multi_layer(&g, &eu, &ei, 2).unwrap();
        assert!((mean[(1, 0)] - 4.0 / 3.0).abs() < 1e-6);
    }

    #[test]
    fn dimension_mismatch_errors() {
        let g = BipartiteGraph::from_edges(1, 1, &[(0, 0)]).unwrap();
        let eu = Matrix::<f32>::zeros(1, 2);
        let ei = Matrix::<f32>::zeros(1, 3);
        assert!(propagate(&g, &eu, &ei).is_err());
        assert!(BipartiteGraph::from_edges(1, 1, &[(0, 1)]).is_err());
    }
}
