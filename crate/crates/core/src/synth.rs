//! Synthetic datasets whose observed item features are a fixed linear (or
//! cubic-then-linear) image of the latent factors that drive preferences.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::corpus::{Interaction, RawInteractions};
use crate::embed::{write_matrix, EmbeddingMatrix};
use crate::error::{Error, Result};
use crate::linalg::{dot, Matrix};
use crate::seed::{derive_seed, rng_for};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_users: usize,
    pub n_items: usize,
    pub d_latent: usize,
    pub d_lang: usize,
    pub interactions_per_user: usize,
    pub noise_sigma: f64,
    /// Apply `z + 0.5 z^3` elementwise before the linear map.
    pub nonlinear: bool,
    /// Softmax temperature over user-item latent cosine.
    pub gen_temperature: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_users: 500,
            n_items: 300,
            d_latent: 8,
            d_lang: 64,
            interactions_per_user: 30,
            noise_sigma: 0.1,
            nonlinear: false,
            gen_temperature: 0.1,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_users == 0 || self.n_items == 0 || self.d_latent == 0 {
            return Err(Error::Invalid("synthetic sizes must be positive".into()));
        }
        if self.d_lang < self.d_latent {
            return Err(Error::Invalid(format!(
                "observed dim {} below latent dim {}",
                self.d_lang, self.d_latent
            )));
        }
        if self.interactions_per_user >= self.n_items {
            return Err(Error::Invalid(format!(
                "{} interactions per user need more than {} items",
                self.interactions_per_user, self.n_items
            )));
        }
        if !(self.noise_sigma >= 0.0) || !(self.gen_temperature > 0.0) {
            return Err(Error::Invalid("noise must be >= 0 and temperature > 0".into()));
        }
        Ok(())
    }
}

/// Ground truth behind a generated dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthTruth {
    pub user_latents: Matrix<f64>,
    pub item_latents: Matrix<f64>,
    /// `d_lang x d_latent` with orthonormal columns.
    pub mixing: Matrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthDataset {
    pub config: SynthConfig,
    pub interactions: RawInteractions,
    /// Item features with row ids set to the item external ids.
    pub features: EmbeddingMatrix,
    pub truth: SynthTruth,
}

/// Seeded `rows x cols` matrix with orthonormal columns (thin QR of a
/// Gaussian matrix).
pub fn orthonormal_columns(rows: usize, cols: usize, seed: u64) -> Matrix<f64> {
    let mut rng = rng_for(seed, "synth/mixing");
    let g = DMatrix::<f64>::from_fn(rows, cols, |_, _| rng.sample(StandardNormal));
    let q = g.qr().q();
    Matrix::from_fn(rows, cols, |r, c| q[(r, c)])
}

fn unit_normal_rows(n: usize, d: usize, rng: &mut impl Rng) -> Matrix<f64> {
    let mut m: Matrix<f64> = Matrix::from_fn(n, d, |_, _| rng.sample(StandardNormal));
    for r in 0..n {
        let row = m.row_mut(r);
        let len = dot(row, row).sqrt();
        if len > 0.0 {
            row.iter_mut().for_each(|v| *v /= len);
        }
    }
    m
}

/// Draws `n` distinct indices from `softmax(logits)` one at a time,
/// renormalizing over the items not yet drawn.
fn sample_without_replacement(logits: &[f64], n: usize, rng: &mut impl Rng) -> Result<Vec<usize>> {
    let mut taken = vec![false; logits.len()];
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let top = logits
            .iter()
            .zip(&taken)
            .filter(|(_, &t)| !t)
            .map(|(&l, _)| l)
            .fold(f64::NEG_INFINITY, f64::max);
        let weights: Vec<f64> = logits
            .iter()
            .zip(&taken)
            .map(|(&l, &t)| if t { 0.0 } else { (l - top).exp() })
            .collect();
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(Error::Invalid("no items left to draw".into()));
        }
        let mut target = rng.random::<f64>() * total;
        let mut pick = None;
        for (i, &w) in weights.iter().enumerate() {
            if w > 0.0 {
                pick = Some(i);
                if target < w {
                    break;
                }
                target -= w;
            }
        }
        let i = pick.expect("positive total implies a candidate");
        taken[i] = true;
        out.push(i);
    }
    Ok(out)
}

fn observe(z: &Matrix<f64>, mixing: &Matrix<f64>, cfg: &SynthConfig, rng: &mut impl Rng) -> Result<Matrix<f64>> {
    let pre = if cfg.nonlinear { z.map(|v| v + 0.5 * v * v * v) } else { z.clone() };
    let mut x = pre.matmul_t(mixing)?;
    if cfg.noise_sigma > 0.0 {
        for v in x.as_mut_slice() {
            let e: f64 = rng.sample(StandardNormal);
            *v += cfg.noise_sigma * e;
        }
    }
    Ok(x)
}

fn generate_domain(cfg: &SynthConfig, mixing: Matrix<f64>, seed: u64, prefix: &str) -> Result<SynthDataset> {
    cfg.validate()?;
    let mut latent_rng = rng_for(seed, "synth/latents");
    let item_latents = unit_normal_rows(cfg.n_items, cfg.d_latent, &mut latent_rng);
    let user_latents = unit_normal_rows(cfg.n_users, cfg.d_latent, &mut latent_rng);

    let mut draw_rng = rng_for(seed, "synth/interactions");
    let mut records = Vec::with_capacity(cfg.n_users * cfg.interactions_per_user);
    for u in 0..cfg.n_users {
        let logits: Vec<f64> = (0..cfg.n_items)
            .map(|i| dot(user_latents.row(u), item_latents.row(i)) / cfg.gen_temperature)
            .collect();
        for (t, i) in sample_without_replacement(&logits, cfg.interactions_per_user, &mut draw_rng)?
            .into_iter()
            .enumerate()
        {
            records.push(Interaction {
                user: format!("{prefix}u{u}"),
                item: format!("{prefix}i{i}"),
                timestamp: Some(t as i64),
            });
        }
    }
    let interactions = RawInteractions::new(records)?;

    let x = observe(&item_latents, &mixing, cfg, &mut rng_for(seed, "synth/noise"))?;
    let features = EmbeddingMatrix::new(x.cast())?
        .with_row_ids((0..cfg.n_items).map(|i| format!("{prefix}i{i}")).collect())?;
    Ok(SynthDataset {
        config: *cfg,
        interactions,
        features,
        truth: SynthTruth {
            user_latents,
            item_latents,
            mixing,
        },
    })
}

pub fn generate(cfg: &SynthConfig) -> Result<SynthDataset> {
    cfg.validate()?;
    let mixing = orthonormal_columns(cfg.d_lang, cfg.d_latent, cfg.seed);
    generate_domain(cfg, mixing, cfg.seed, "")
}

/// Two datasets sharing the mixing matrix (from `cfg.seed`) and generator
/// settings, with independent latents and disjoint ids (`a:` / `b:`).
pub fn make_domain_pair(cfg: &SynthConfig, seed_a: u64, seed_b: u64) -> Result<(SynthDataset, SynthDataset)> {
    cfg.validate()?;
    let mixing = orthonormal_columns(cfg.d_lang, cfg.d_latent, cfg.seed);
    let a = generate_domain(
        &SynthConfig { seed: seed_a, ..*cfg },
        mixing.clone(),
        derive_seed(seed_a, "synth/domain/a"),
        "a:",
    )?;
    let b = generate_domain(
        &SynthConfig { seed: seed_b, ..*cfg },
        mixing,
        derive_seed(seed_b, "synth/domain/b"),
        "b:",
    )?;
    Ok((a, b))
}

#[derive(Serialize)]
struct TruthFile<'a> {
    config: &'a SynthConfig,
    user_latents: Vec<&'a [f64]>,
    item_latents: Vec<&'a [f64]>,
}

impl SynthDataset {
    /// Writes `interactions.tsv`, `items.arec` (+ ids sidecar) and `truth.json`.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let tsv = dir.join("interactions.tsv");
        fs::write(&tsv, self.interactions.to_tsv()).map_err(|e| Error::io(&tsv, e))?;
        write_matrix(&self.features, &dir.join("items.arec"))?;
        let truth = TruthFile {
            config: &self.config,
            user_latents: self.truth.user_latents.row_iter().collect(),
            item_latents: self.truth.item_latents.row_iter().collect(),
        };
        let path = dir.join("truth.json");
        let text = serde_json::to_string_pretty(&truth).map_err(|e| Error::Invalid(e.to_string()))?;
        fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))
    }
}
