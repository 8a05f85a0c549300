//! Representation learners (linear probe, two-layer MLP, ID tables), the
//! full forward pass through graph convolution, cosine scoring, and the
//! `.ckpt` checkpoint format.

use std::fs;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{propagate_layers, BipartiteGraph, LayerStack};
use crate::linalg::{dot, norm, Matrix, Scalar};
use crate::seed::rng_for;

pub const DEFAULT_HIDDEN_DIM: usize = 1536;
pub const DEFAULT_OUT_DIM: usize = 64;
pub const DEFAULT_LEAKY_SLOPE: f64 = 0.01;
pub const DEFAULT_LAYERS: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    /// Single linear map from language space.
    Probe,
    /// Two-layer LeakyReLU MLP from language space.
    AlphaRec,
    /// Trainable user and item tables (MF with no layers, LightGCN with layers).
    Id,
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ModelKind::Probe => "probe",
            ModelKind::AlphaRec => "alpharec",
            ModelKind::Id => "id",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeParams<T> {
    /// `dim_lang × d_out`; a row vector `x` maps to `x · weight`.
    pub weight: Matrix<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlphaRecParams<T> {
    pub w1: Matrix<T>,
    pub b1: Matrix<T>,
    pub w2: Matrix<T>,
    pub b2: Matrix<T>,
    pub leaky_slope: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdEmbeddingParams<T> {
    pub users: Matrix<T>,
    pub items: Matrix<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelParams<T> {
    Probe(ProbeParams<T>),
    AlphaRec(AlphaRecParams<T>),
    Id(IdEmbeddingParams<T>),
}

fn xavier<T: Scalar>(rows: usize, cols: usize, rng: &mut impl Rng) -> Matrix<T> {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    Matrix::from_fn(rows, cols, |_, _| T::of(rng.random_range(-bound..=bound)))
}

impl<T: Scalar> ProbeParams<T> {
    pub fn init(dim_lang: usize, d_out: usize, seed: u64) -> Self {
        ProbeParams {
            weight: xavier(dim_lang, d_out, &mut rng_for(seed, "init/probe")),
        }
    }
}

impl<T: Scalar> AlphaRecParams<T> {
    pub fn init(dim_lang: usize, hidden: usize, d_out: usize, leaky_slope: f64, seed: u64) -> Self {
        let mut rng = rng_for(seed, "init/mlp");
        AlphaRecParams {
            w1: xavier(dim_lang, hidden, &mut rng),
            b1: Matrix::zeros(1, hidden),
            w2: xavier(hidden, d_out, &mut rng),
            b2: Matrix::zeros(1, d_out),
            leaky_slope: T::of(leaky_slope),
        }
    }

    fn check(&self) -> Result<()> {
        let h = self.w1.cols();
        if self.b1.shape() != (1, h) || self.w2.rows() != h || self.b2.shape() != (1, self.w2.cols()) {
            return Err(Error::Shape(format!(
                "inconsistent MLP shapes w1 {:?} b1 {:?} w2 {:?} b2 {:?}",
                self.w1.shape(),
                self.b1.shape(),
                self.w2.shape(),
                self.b2.shape()
            )));
        }
        Ok(())
    }
}

impl<T: Scalar> IdEmbeddingParams<T> {
    pub fn init(n_users: usize, n_items: usize, d_out: usize, seed: u64) -> Self {
        let mut rng = rng_for(seed, "init/id");
        IdEmbeddingParams {
            users: xavier(n_users, d_out, &mut rng),
            items: xavier(n_items, d_out, &mut rng),
        }
    }
}

impl<T: Scalar> ModelParams<T> {
    pub fn kind(&self) -> ModelKind {
        match self {
            ModelParams::Probe(_) => ModelKind::Probe,
            ModelParams::AlphaRec(_) => ModelKind::AlphaRec,
            ModelParams::Id(_) => ModelKind::Id,
        }
    }

    /// Trainable tensors in a fixed order, with their checkpoint names.
    pub fn tensors(&self) -> Vec<(&'static str, &Matrix<T>)> {
        match self {
            ModelParams::Probe(p) => vec![("weight", &p.weight)],
            ModelParams::AlphaRec(p) => vec![("w1", &p.w1), ("b1", &p.b1), ("w2", &p.w2), ("b2", &p.b2)],
            ModelParams::Id(p) => vec![("user_table", &p.users), ("item_table", &p.items)],
        }
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Matrix<T>> {
        match self {
            ModelParams::Probe(p) => vec![&mut p.weight],
            ModelParams::AlphaRec(p) => vec![&mut p.w1, &mut p.b1, &mut p.w2, &mut p.b2],
            ModelParams::Id(p) => vec![&mut p.users, &mut p.items],
        }
    }

    pub fn zeros_like(&self) -> Self {
        let z = |m: &Matrix<T>| Matrix::zeros(m.rows(), m.cols());
        match self {
            ModelParams::Probe(p) => ModelParams::Probe(ProbeParams { weight: z(&p.weight) }),
            ModelParams::AlphaRec(p) => ModelParams::AlphaRec(AlphaRecParams {
                w1: z(&p.w1),
                b1: z(&p.b1),
                w2: z(&p.w2),
                b2: z(&p.b2),
                leaky_slope: p.leaky_slope,
            }),
            ModelParams::Id(p) => ModelParams::Id(IdEmbeddingParams {
                users: z(&p.users),
                items: z(&p.items),
            }),
        }
    }

    pub fn cast<U: Scalar>(&self) -> ModelParams<U> {
        match self {
            ModelParams::Probe(p) => ModelParams::Probe(ProbeParams { weight: p.weight.cast() }),
            ModelParams::AlphaRec(p) => ModelParams::AlphaRec(AlphaRecParams {
                w1: p.w1.cast(),
                b1: p.b1.cast(),
                w2: p.w2.cast(),
                b2: p.b2.cast(),
                leaky_slope: U::of(p.leaky_slope.f64()),
            }),
            ModelParams::Id(p) => ModelParams::Id(IdEmbeddingParams {
                users: p.users.cast(),
                items: p.items.cast(),
            }),
        }
    }

    /// Language feature dimension the model consumes, if any.
    pub fn input_dim(&self) -> Option<usize> {
        match self {
            ModelParams::Probe(p) => Some(p.weight.rows()),
            ModelParams::AlphaRec(p) => Some(p.w1.rows()),
            ModelParams::Id(_) => None,
        }
    }

    pub fn output_dim(&self) -> usize {
        match self {
            ModelParams::Probe(p) => p.weight.cols(),
            ModelParams::AlphaRec(p) => p.w2.cols(),
            ModelParams::Id(p) => p.items.cols(),
        }
    }
}

/// Parameters plus the number of propagation layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Model<T> {
    pub params: ModelParams<T>,
    pub layers: usize,
}

/// Final user/item representations and every intermediate layer.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelOutput<T> {
    pub users: Matrix<T>,
    pub items: Matrix<T>,
    pub layers: LayerStack<T>,
}

impl<T: Scalar> ModelOutput<T> {
    pub fn user_layer0(&self) -> &Matrix<T> {
        &self.layers.users[0]
    }

    pub fn item_layer0(&self) -> &Matrix<T> {
        &self.layers.items[0]
    }
}

pub fn probe_forward<T: Scalar>(p: &ProbeParams<T>, x: &Matrix<T>) -> Result<Matrix<T>> {
    if x.cols() != p.weight.rows() {
        return Err(Error::Shape(format!(
            "probe expects {}-dim input, got {}",
            p.weight.rows(),
            x.cols()
        )));
    }
    x.matmul(&p.weight)
}

pub(crate) fn leaky<T: Scalar>(z: T, slope: T) -> T {
    if z >= T::zero() {
        z
    } else {
        slope * z
    }
}

/// Pre-activations and activations of the hidden layer, kept for backprop.
pub(crate) type Layer0<T> = (Matrix<T>, Matrix<T>, Option<MlpCache<T>>);

#[derive(Debug, Clone)]
pub(crate) struct MlpCache<T> {
    pub pre: Matrix<T>,
    pub act: Matrix<T>,
}

pub(crate) fn mlp_forward_cached<T: Scalar>(
    p: &AlphaRecParams<T>,
    x: &Matrix<T>,
) -> Result<(Matrix<T>, MlpCache<T>)> {
    p.check()?;
    if x.cols() != p.w1.rows() {
        return Err(Error::Shape(format!(
            "MLP expects {}-dim input, got {}",
            p.w1.rows(),
            x.cols()
        )));
    }
    let mut pre = x.matmul(&p.w1)?;
    pre.add_row_vector(p.b1.as_slice())?;
    let slope = p.leaky_slope;
    let act = pre.map(|z| leaky(z, slope));
    let mut out = act.matmul(&p.w2)?;
    out.add_row_vector(p.b2.as_slice())?;
    Ok((out, MlpCache { pre, act }))
}

/// `LeakyReLU(x·W1 + b1)·W2 + b2` applied to every row of `x`.
pub fn mlp_forward<T: Scalar>(p: &AlphaRecParams<T>, x: &Matrix<T>) -> Result<Matrix<T>> {
    Ok(mlp_forward_cached(p, x)?.0)
}

/// Mean of each user's neighbour rows in `items`.
pub(crate) fn user_mean<T: Scalar>(g: &BipartiteGraph, items: &Matrix<T>) -> Result<Matrix<T>> {
    let d = items.cols();
    let mut out = Matrix::zeros(g.n_users(), d);
    for u in 0..g.n_users() {
        let nbrs = g.user_items(u);
        if nbrs.is_empty() {
            return Err(Error::Invalid(format!("user {u} has no training interactions")));
        }
        let row = out.row_mut(u);
        for &i in nbrs {
            for (o, &x) in row.iter_mut().zip(items.row(i)) {
                *o += x;
            }
        }
        let n = T::of(nbrs.len() as f64);
        row.iter_mut().for_each(|o| *o = *o / n);
    }
    Ok(out)
}

impl<T: Scalar> Model<T> {
    pub fn kind(&self) -> ModelKind {
        self.params.kind()
    }

    /// Maps language-space rows to layer-0 representations. ID models have
    /// no language input and reject this call.
    pub fn project(&self, x: &Matrix<T>) -> Result<Matrix<T>> {
        match &self.params {
            ModelParams::Probe(p) => probe_forward(p, x),
            ModelParams::AlphaRec(p) => mlp_forward(p, x),
            ModelParams::Id(_) => Err(Error::Invalid("ID models do not consume language features".into())),
        }
    }

    pub(crate) fn layer0(
        &self,
        features: Option<&Matrix<T>>,
        g: &BipartiteGraph,
    ) -> Result<Layer0<T>> {
        let need_features = || {
            features.ok_or_else(|| Error::Invalid(format!("{} model needs item features", self.kind())))
        };
        let check_rows = |x: &Matrix<T>| {
            if x.rows() != g.n_items() {
                return Err(Error::Shape(format!(
                    "{} feature rows for {} items",
                    x.rows(),
                    g.n_items()
                )));
            }
            Ok(())
        };
        let (items, cache) = match &self.params {
            ModelParams::Probe(p) => {
                let x = need_features()?;
                check_rows(x)?;
                (probe_forward(p, x)?, None)
            }
            ModelParams::AlphaRec(p) => {
                let x = need_features()?;
                check_rows(x)?;
                let (out, cache) = mlp_forward_cached(p, x)?;
                (out, Some(cache))
            }
            ModelParams::Id(p) => {
                if p.users.rows() != g.n_users() || p.items.rows() != g.n_items() {
                    return Err(Error::Shape(format!(
                        "ID tables {}x{} for a {}x{} graph",
                        p.users.rows(),
                        p.items.rows(),
                        g.n_users(),
                        g.n_items()
                    )));
                }
                return Ok((p.users.clone(), p.items.clone(), None));
            }
        };
        let users = user_mean(g, &items)?;
        Ok((users, items, cache))
    }
}

/// Layer-0 projection, user averaging and `model.layers` propagation steps
/// followed by layer averaging.
pub fn full_forward<T: Scalar>(
    model: &Model<T>,
    features: Option<&Matrix<T>>,
    g: &BipartiteGraph,
) -> Result<ModelOutput<T>> {
    let (users0, items0, _) = model.layer0(features, g)?;
    let layers = propagate_layers(g, users0, items0, model.layers)?;
    let (users, items) = layers.mean();
    Ok(ModelOutput { users, items, layers })
}

/// Cosine similarity; zero-norm inputs are an error.
pub fn cosine_score<T: Scalar>(a: &[T], b: &[T]) -> Result<T> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!("cosine of {}- and {}-dim vectors", a.len(), b.len())));
    }
    let (na, nb) = (norm(a), norm(b));
    if na == T::zero() || nb == T::zero() {
        return Err(Error::Invalid("cosine similarity of a zero vector".into()));
    }
    let s = dot(a, b) / (na * nb);
    Ok(s.max(-T::one()).min(T::one()))
}

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"ARCK";
pub const CHECKPOINT_VERSION: u32 = 1;
const META_TENSOR: &str = "__meta__";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CheckpointMeta {
    kind: ModelKind,
    layers: usize,
    leaky_slope: Option<f64>,
}

/// Serializes a model in `f32`. A leading `__meta__` tensor stores the JSON
/// metadata one byte per element.
pub fn checkpoint_bytes<T: Scalar>(model: &Model<T>) -> Vec<u8> {
    let meta = CheckpointMeta {
        kind: model.kind(),
        layers: model.layers,
        leaky_slope: match &model.params {
            ModelParams::AlphaRec(p) => Some(p.leaky_slope.f64()),
            _ => None,
        },
    };
    let meta_json = serde_json::to_vec(&meta).expect("metadata serializes");
    let meta_tensor = Matrix::<f32>::from_vec(1, meta_json.len(), meta_json.iter().map(|&b| b as f32).collect())
        .expect("row vector");

    let params32 = model.params.cast::<f32>();
    let mut tensors: Vec<(&str, &Matrix<f32>)> = vec![(META_TENSOR, &meta_tensor)];
    tensors.extend(params32.tensors());

    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for (name, m) in tensors {
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(m.rows() as u64).to_le_bytes());
        out.extend_from_slice(&(m.cols() as u64).to_le_bytes());
        for v in m.as_slice() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn save_checkpoint<T: Scalar>(model: &Model<T>, path: &Path) -> Result<()> {
    fs::write(path, checkpoint_bytes(model)).map_err(|e| Error::io(path, e))
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let s = self.bytes.get(self.pos..self.pos.checked_add(n)?)?;
        self.pos += n;
        Some(s)
    }
    fn u16(&mut self) -> Option<u16> {
        Some(u16::from_le_bytes(self.take(2)?.try_into().ok()?))
    }
    fn u32(&mut self) -> Option<u32> {
        Some(u32::from_le_bytes(self.take(4)?.try_into().ok()?))
    }
    fn u64(&mut self) -> Option<u64> {
        Some(u64::from_le_bytes(self.take(8)?.try_into().ok()?))
    }
}

pub fn load_checkpoint(path: &Path) -> Result<Model<f32>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_checkpoint(&bytes).map_err(|message| Error::Checkpoint {
        path: path.to_path_buf(),
        message,
    })
}

fn parse_checkpoint(bytes: &[u8]) -> std::result::Result<Model<f32>, String> {
    let mut r = Reader { bytes, pos: 0 };
    let truncated = || "truncated".to_string();
    if r.take(4).ok_or_else(truncated)? != CHECKPOINT_MAGIC {
        return Err("bad magic".into());
    }
    let version = r.u32().ok_or_else(truncated)?;
    if version != CHECKPOINT_VERSION {
        return Err(format!("unsupported version {version}"));
    }
    let count = r.u32().ok_or_else(truncated)?;
    let mut tensors = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let name_len = r.u16().ok_or_else(truncated)? as usize;
        let name = std::str::from_utf8(r.take(name_len).ok_or_else(truncated)?)
            .map_err(|e| format!("tensor name: {e}"))?
            .to_string();
        let rows = r.u64().ok_or_else(truncated)? as usize;
        let cols = r.u64().ok_or_else(truncated)? as usize;
        let n = rows.checked_mul(cols).ok_or("tensor size overflows")?;
        let raw = r.take(n.checked_mul(4).ok_or("tensor size overflows")?).ok_or_else(truncated)?;
        let data: Vec<f32> = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
        if data.iter().any(|v| !v.is_finite()) {
            return Err(format!("tensor {name} has non-finite entries"));
        }
        tensors.push((name, Matrix::from_vec(rows, cols, data).map_err(|e| e.to_string())?));
    }
    if r.pos != bytes.len() {
        return Err(format!("{} trailing bytes", bytes.len() - r.pos));
    }
    let mut it = tensors.into_iter();
    let (meta_name, meta_tensor) = it.next().ok_or("no tensors")?;
    if meta_name != META_TENSOR {
        return Err(format!("first tensor is {meta_name:?}, expected {META_TENSOR:?}"));
    }
    let meta_bytes: Vec<u8> = meta_tensor.as_slice().iter().map(|&v| v as u8).collect();
    let meta: CheckpointMeta = serde_json::from_slice(&meta_bytes).map_err(|e| format!("metadata: {e}"))?;
    let mut next = |want: &str| -> std::result::Result<Matrix<f32>, String> {
        match it.next() {
            Some((name, m)) if name == want => Ok(m),
            Some((name, _)) => Err(format!("expected tensor {want:?}, found {name:?}")),
            None => Err(format!("missing tensor {want:?}")),
        }
    };
    let params = match meta.kind {
        ModelKind::Probe => ModelParams::Probe(ProbeParams { weight: next("weight")? }),
        ModelKind::AlphaRec => {
            let p = AlphaRecParams {
                w1: next("w1")?,
                b1: next("b1")?,
                w2: next("w2")?,
                b2: next("b2")?,
                leaky_slope: meta.leaky_slope.unwrap_or(DEFAULT_LEAKY_SLOPE) as f32,
            };
            p.check().map_err(|e| e.to_string())?;
            ModelParams::AlphaRec(p)
        }
        ModelKind::Id => ModelParams::Id(IdEmbeddingParams {
            users: next("user_table")?,
            items: next("item_table")?,
        }),
    };
    if let Some((name, _)) = it.next() {
        return Err(format!("unexpected tensor {name:?}"));
    }
    Ok(Model {
        params,
        layers: meta.layers,
    })
}
