//! Exact gradients of the batch objective through cosine scoring, layer
//! averaging, graph propagation, user averaging and the projection.
//!
//! The batch objective is the mean per-positive loss. Propagation is a
//! symmetric block operator, so its adjoint is another propagation step
//! applied to the gradients.

use crate::error::{Error, Result};
use crate::graph::{propagate, BipartiteGraph};
use crate::linalg::{dot, norm, Matrix, Scalar};
use crate::model::{full_forward, Model, ModelParams};

use super::loss::{bpr_group, infonce_group, GroupLoss, LossKind};

/// Norms below this are clamped when scoring during training.
pub const NORM_EPS: f64 = 1e-12;

/// Positive pairs with their sampled negatives.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TrainBatch {
    pub positives: Vec<(usize, usize)>,
    pub negatives: Vec<Vec<usize>>,
}

impl TrainBatch {
    pub fn len(&self) -> usize {
        self.positives.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positives.is_empty()
    }

    fn check(&self, loss: LossKind, g: &BipartiteGraph) -> Result<()> {
        if self.positives.is_empty() {
            return Err(Error::Empty("training batch has no positives".into()));
        }
        if self.negatives.len() != self.positives.len() {
            return Err(Error::Shape("one negative list per positive required".into()));
        }
        for (k, (&(u, i), negs)) in self.positives.iter().zip(&self.negatives).enumerate() {
            if u >= g.n_users() || i >= g.n_items() || negs.iter().any(|&j| j >= g.n_items()) {
                return Err(Error::Invalid(format!("batch entry {k} indexes outside the graph")));
            }
            if negs.is_empty() || (loss == LossKind::Bpr && negs.len() != 1) {
                return Err(Error::Invalid(format!(
                    "batch entry {k} has {} negatives for {loss} loss",
                    negs.len()
                )));
            }
        }
        Ok(())
    }

    /// Entry order with groups sorted by content, so the result of a batch
    /// does not depend on how its entries were listed.
    fn canonical_order(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.sort_by(|&a, &b| {
            (self.positives[a], &self.negatives[a]).cmp(&(self.positives[b], &self.negatives[b]))
        });
        order
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Objective {
    pub loss: LossKind,
    pub temperature: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossAndGrad<T> {
    /// Mean loss over the batch positives.
    pub loss: T,
    pub grads: ModelParams<T>,
}

fn group_loss<T: Scalar>(obj: &Objective, positive: T, negatives: &[T]) -> GroupLoss<T> {
    match obj.loss {
        LossKind::InfoNce => infonce_group(positive, negatives, T::of(obj.temperature)),
        LossKind::Bpr => bpr_group(positive, negatives[0]),
    }
}

fn clamped_norm<T: Scalar>(v: &[T]) -> T {
    norm(v).max(T::of(NORM_EPS))
}

fn row_norms<T: Scalar>(m: &Matrix<T>) -> Vec<T> {
    m.row_iter().map(clamped_norm).collect()
}

fn similarities<T: Scalar>(users: &Matrix<T>, items: &Matrix<T>, item_norms: &[T], u: usize, list: &[usize]) -> Vec<T> {
    let eu = users.row(u);
    let nu = clamped_norm(eu);
    list.iter()
        .map(|&x| dot(eu, items.row(x)) / (nu * item_norms[x]))
        .collect()
}

fn check_objective(obj: &Objective) -> Result<()> {
    if obj.loss == LossKind::InfoNce && !(obj.temperature > 0.0) {
        return Err(Error::Invalid(format!("temperature must be positive, got {}", obj.temperature)));
    }
    Ok(())
}

/// Mean batch loss from a plain forward pass.
pub fn batch_loss<T: Scalar>(
    model: &Model<T>,
    features: Option<&Matrix<T>>,
    g: &BipartiteGraph,
    batch: &TrainBatch,
    obj: &Objective,
) -> Result<T> {
    check_objective(obj)?;
    batch.check(obj.loss, g)?;
    let out = full_forward(model, features, g)?;
    let norms = row_norms(&out.items);
    let mut total = T::zero();
    for k in batch.canonical_order() {
        let (u, i) = batch.positives[k];
        let sims = similarities(&out.users, &out.items, &norms, u, &[i]);
        let negs = similarities(&out.users, &out.items, &norms, u, &batch.negatives[k]);
        total += group_loss(obj, sims[0], &negs).loss;
    }
    Ok(total / T::of(batch.len() as f64))
}

/// Analytic gradients of the mean batch loss for every trainable tensor.
pub fn compute_gradients<T: Scalar>(
    model: &Model<T>,
    features: Option<&Matrix<T>>,
    g: &BipartiteGraph,
    batch: &TrainBatch,
    obj: &Objective,
) -> Result<LossAndGrad<T>> {
    check_objective(obj)?;
    batch.check(obj.loss, g)?;
    let (users0, items0, cache) = model.layer0(features, g)?;
    let layers = crate::graph::propagate_layers(g, users0, items0, model.layers)?;
    let (users, items) = layers.mean();
    let d = users.cols();

    let scale = T::one() / T::of(batch.len() as f64);
    let mut grad_users = Matrix::<T>::zeros(users.rows(), d);
    let mut grad_items = Matrix::<T>::zeros(items.rows(), d);
    let mut total = T::zero();
    let item_norms = row_norms(&items);
    let mut list = Vec::new();
    for k in batch.canonical_order() {
        let (u, i) = batch.positives[k];
        list.clear();
        list.push(i);
        list.extend_from_slice(&batch.negatives[k]);
        let sims = similarities(&users, &items, &item_norms, u, &list);
        let gl = group_loss(obj, sims[0], &sims[1..]);
        total += gl.loss;

        let eu = users.row(u);
        let nu = clamped_norm(eu);
        let coeffs = std::iter::once(gl.d_positive).chain(gl.d_negatives.iter().copied());
        for ((&x, &s), c) in list.iter().zip(&sims).zip(coeffs) {
            let c = c * scale;
            let ex = items.row(x);
            let nx = item_norms[x];
            let cross = c / (nu * nx);
            let self_u = c * s / (nu * nu);
            let self_x = c * s / (nx * nx);
            {
                let gu = grad_users.row_mut(u);
                for ((o, &a), &b) in gu.iter_mut().zip(eu).zip(ex) {
                    *o += cross * b - self_u * a;
                }
            }
            let gx = grad_items.row_mut(x);
            for ((o, &a), &b) in gx.iter_mut().zip(eu).zip(ex) {
                *o += cross * a - self_x * b;
            }
        }
    }

    // adjoint of layer averaging and propagation
    let avg = T::one() / T::of((model.layers + 1) as f64);
    grad_users.scale(avg);
    grad_items.scale(avg);
    let mut acc_users = grad_users.clone();
    let mut acc_items = grad_items.clone();
    for _ in 0..model.layers {
        let (pu, pi) = propagate(g, &acc_users, &acc_items)?;
        acc_users = pu;
        acc_users.axpy(T::one(), &grad_users);
        acc_items = pi;
        acc_items.axpy(T::one(), &grad_items);
    }

    let grads = match &model.params {
        ModelParams::Id(_) => ModelParams::Id(crate::model::IdEmbeddingParams {
            users: acc_users,
            items: acc_items,
        }),
        params => {
            // adjoint of the user mean: spread each user's gradient over their items
            for u in 0..g.n_users() {
                let nbrs = g.user_items(u);
                let w = T::one() / T::of(nbrs.len() as f64);
                let gu: Vec<T> = acc_users.row(u).iter().map(|&v| v * w).collect();
                for &i in nbrs {
                    for (o, &v) in acc_items.row_mut(i).iter_mut().zip(&gu) {
                        *o += v;
                    }
                }
            }
            let x = features.expect("checked by layer0");
            match params {
                ModelParams::Probe(_) => ModelParams::Probe(crate::model::ProbeParams {
                    weight: x.t_matmul(&acc_items)?,
                }),
                ModelParams::AlphaRec(p) => {
                    let cache = cache.expect("MLP forward keeps its cache");
                    let w2 = cache.act.t_matmul(&acc_items)?;
                    let b2 = acc_items.col_sums();
                    let mut d_act = acc_items.matmul_t(&p.w2)?;
                    let slope = p.leaky_slope;
                    for (da, &z) in d_act.as_mut_slice().iter_mut().zip(cache.pre.as_slice()) {
                        if z < T::zero() {
                            *da *= slope;
                        }
                    }
                    let w1 = x.t_matmul(&d_act)?;
                    let b1 = d_act.col_sums();
                    ModelParams::AlphaRec(crate::model::AlphaRecParams {
                        w1,
                        b1: Matrix::from_vec(1, b1.len(), b1)?,
                        w2,
                        b2: Matrix::from_vec(1, b2.len(), b2)?,
                        leaky_slope: slope,
                    })
                }
                ModelParams::Id(_) => unreachable!(),
            }
        }
    };
    Ok(LossAndGrad {
        loss: total * scale,
        grads,
    })
}
