//! InfoNCE and BPR over precomputed similarities, with their derivatives.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    #[default]
    InfoNce,
    Bpr,
}

impl std::fmt::Display for LossKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            LossKind::InfoNce => "infonce",
            LossKind::Bpr => "bpr",
        })
    }
}

/// Similarities for one positive pair: the positive score and its negatives.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreGroup<T> {
    pub positive: T,
    pub negatives: Vec<T>,
}

/// Loss of one group and its derivative with respect to each similarity.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupLoss<T> {
    pub loss: T,
    pub d_positive: T,
    pub d_negatives: Vec<T>,
}

/// `-log softmax` of the positive among `{positive} ∪ negatives`, at temperature `tau`.
///
/// Logits are shifted by their maximum; the remainder term goes through
/// `ln_1p` so that saturated groups keep their tiny loss instead of rounding to 0.
pub fn infonce_group<T: Scalar>(positive: T, negatives: &[T], tau: T) -> GroupLoss<T> {
    let z0 = positive / tau;
    let mut max = z0;
    let mut arg = usize::MAX;
    for (j, &s) in negatives.iter().enumerate() {
        let z = s / tau;
        if z > max {
            max = z;
            arg = j;
        }
    }
    // sum of exp(z - max) over every logit except the one attaining the max
    let mut rest = if arg == usize::MAX { T::zero() } else { (z0 - max).exp() };
    for (j, &s) in negatives.iter().enumerate() {
        if j != arg {
            rest += (s / tau - max).exp();
        }
    }
    let lse_minus_max = rest.ln_1p();
    let loss = (max - z0) + lse_minus_max;
    let denom = T::one() + rest;
    let p0 = (z0 - max).exp() / denom;
    let d_negatives = negatives
        .iter()
        .map(|&s| (s / tau - max).exp() / denom / tau)
        .collect();
    GroupLoss {
        loss,
        d_positive: (p0 - T::one()) / tau,
        d_negatives,
    }
}

/// Sum of InfoNCE over groups.
pub fn infonce_loss<T: Scalar>(groups: &[ScoreGroup<T>], tau: T) -> Result<T> {
    if tau.partial_cmp(&T::zero()) != Some(std::cmp::Ordering::Greater) {
        return Err(Error::Invalid(format!("temperature must be positive, got {tau}")));
    }
    Ok(groups
        .iter()
        .map(|g| infonce_group(g.positive, &g.negatives, tau).loss)
        .sum())
}

fn softplus<T: Scalar>(x: T) -> T {
    if x > T::zero() {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// `-log σ(positive - negative)` computed as `softplus(negative - positive)`.
pub fn bpr_group<T: Scalar>(positive: T, negative: T) -> GroupLoss<T> {
    let diff = positive - negative;
    let g = sigmoid(-diff);
    GroupLoss {
        loss: softplus(-diff),
        d_positive: -g,
        d_negatives: vec![g],
    }
}

/// Sum of BPR over groups; each group must carry exactly one negative.
pub fn bpr_loss<T: Scalar>(groups: &[ScoreGroup<T>]) -> Result<T> {
    let mut total = T::zero();
    for (k, g) in groups.iter().enumerate() {
        if g.negatives.len() != 1 {
            return Err(Error::Invalid(format!(
                "BPR group {k} has {} negatives, expected exactly 1",
                g.negatives.len()
            )));
        }
        total += bpr_group(g.positive, g.negatives[0]).loss;
    }
    Ok(total)
}
