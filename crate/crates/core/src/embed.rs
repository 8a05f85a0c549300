//! Dense language-embedding matrices: `.arec` storage, user feature
//! averaging and the shuffled-rows control.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;

use crate::corpus::{DatasetSplit, IdMap};
use crate::error::{Error, Result};
use crate::linalg::{Matrix, Scalar};
use crate::seed::rng_for;

pub const MATRIX_MAGIC: &[u8; 4] = b"AREC";
pub const MATRIX_VERSION: u32 = 1;
const HEADER_LEN: u64 = 4 + 4 + 8 + 8;

/// Row-major `f32` matrix of language features, optionally labelled with
/// one external item id (and title) per row.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    values: Matrix<f32>,
    row_ids: Option<Vec<String>>,
    titles: Option<Vec<String>>,
}

impl EmbeddingMatrix {
    pub fn new(values: Matrix<f32>) -> Result<Self> {
        if let Some(pos) = values.as_slice().iter().position(|v| !v.is_finite()) {
            return Err(Error::Invalid(format!(
                "non-finite value at row {}, column {}",
                pos / values.cols().max(1),
                pos % values.cols().max(1)
            )));
        }
        Ok(EmbeddingMatrix {
            values,
            row_ids: None,
            titles: None,
        })
    }

    pub fn with_row_ids(mut self, ids: Vec<String>) -> Result<Self> {
        if ids.len() != self.rows() {
            return Err(Error::Shape(format!("{} row ids for {} rows", ids.len(), self.rows())));
        }
        // rejects duplicates
        IdMap::from_ids(ids.clone())?;
        self.row_ids = Some(ids);
        Ok(self)
    }

    pub fn with_titles(mut self, titles: Vec<String>) -> Result<Self> {
        if titles.len() != self.rows() {
            return Err(Error::Shape(format!("{} titles for {} rows", titles.len(), self.rows())));
        }
        self.titles = Some(titles);
        Ok(self)
    }

    pub fn rows(&self) -> usize {
        self.values.rows()
    }

    pub fn dim(&self) -> usize {
        self.values.cols()
    }

    pub fn values(&self) -> &Matrix<f32> {
        &self.values
    }

    pub fn row(&self, r: usize) -> &[f32] {
        self.values.row(r)
    }

    pub fn row_ids(&self) -> Option<&[String]> {
        self.row_ids.as_deref()
    }

    pub fn to_matrix<T: Scalar>(&self) -> Matrix<T> {
        self.values.cast()
    }

    /// Reorders rows so that row `k` holds the features of item index `k`.
    /// Without row ids the matrix must already be in item-index order.
    pub fn align_to(&self, items: &IdMap) -> Result<Self> {
        let Some(ids) = &self.row_ids else {
            if self.rows() < items.len() {
                return Err(Error::Shape(format!(
                    "{} feature rows for {} items and no ids to align by",
                    self.rows(),
                    items.len()
                )));
            }
            let idx: Vec<usize> = (0..items.len()).collect();
            return Ok(EmbeddingMatrix {
                values: self.values.select_rows(&idx),
                row_ids: None,
                titles: self.titles.as_ref().map(|t| t[..items.len()].to_vec()),
            });
        };
        let by_id = IdMap::from_ids(ids.clone())?;
        let idx = items
            .ids()
            .iter()
            .map(|id| {
                by_id
                    .index_of(id)
                    .ok_or_else(|| Error::Invalid(format!("no feature row for item {id:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(EmbeddingMatrix {
            values: self.values.select_rows(&idx),
            row_ids: Some(items.ids().to_vec()),
            titles: self.titles.as_ref().map(|t| idx.iter().map(|&i| t[i].clone()).collect()),
        })
    }

    pub fn concat(parts: &[&EmbeddingMatrix]) -> Result<Self> {
        let values = Matrix::vstack(&parts.iter().map(|p| &p.values).collect::<Vec<_>>())?;
        let row_ids = if parts.iter().all(|p| p.row_ids.is_some()) {
            Some(parts.iter().flat_map(|p| p.row_ids.clone().unwrap()).collect())
        } else {
            None
        };
        Ok(EmbeddingMatrix {
            values,
            row_ids,
            titles: None,
        })
    }
}

/// Sidecar path for a matrix file: `items.arec` → `items.ids.tsv`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("ids.tsv")
}

pub fn write_matrix(m: &EmbeddingMatrix, path: &Path) -> Result<()> {
    let mut bytes = Vec::with_capacity(HEADER_LEN as usize + 4 * m.values.as_slice().len());
    bytes.extend_from_slice(MATRIX_MAGIC);
    bytes.extend_from_slice(&MATRIX_VERSION.to_le_bytes());
    bytes.extend_from_slice(&(m.rows() as u64).to_le_bytes());
    bytes.extend_from_slice(&(m.dim() as u64).to_le_bytes());
    for v in m.values.as_slice() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))?;
    if let Some(ids) = &m.row_ids {
        let mut out = String::new();
        for (r, id) in ids.iter().enumerate() {
            let title = m.titles.as_ref().map_or("", |t| t[r].as_str());
            writeln!(out, "{r}\t{id}\t{title}").expect("write to string");
        }
        let side = sidecar_path(path);
        fs::write(&side, out).map_err(|e| Error::io(&side, e))?;
    }
    Ok(())
}

pub fn load_matrix(path: &Path) -> Result<EmbeddingMatrix> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let values = decode_matrix(&bytes, path)?;
    let mut m = EmbeddingMatrix {
        values,
        row_ids: None,
        titles: None,
    };
    let side = sidecar_path(path);
    if side.exists() {
        let (ids, titles) = read_sidecar(&side, m.rows())?;
        m = m.with_row_ids(ids)?.with_titles(titles)?;
    }
    Ok(m)
}

fn decode_matrix(bytes: &[u8], path: &Path) -> Result<Matrix<f32>> {
    let err = |offset: u64, message: String| Error::MatrixFormat {
        path: path.to_path_buf(),
        offset,
        message,
    };
    if bytes.len() < HEADER_LEN as usize {
        return Err(err(bytes.len() as u64, format!("file shorter than the {HEADER_LEN}-byte header")));
    }
    if &bytes[..4] != MATRIX_MAGIC {
        return Err(err(0, format!("bad magic {:?}", &bytes[..4])));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != MATRIX_VERSION {
        return Err(err(4, format!("unsupported version {version}")));
    }
    let rows = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
    let cols = u64::from_le_bytes(bytes[16..24].try_into().unwrap());
    let expected = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| err(8, format!("header size {rows}x{cols} overflows")))?;
    let payload = bytes.len() as u64 - HEADER_LEN;
    if payload != expected {
        return Err(err(
            HEADER_LEN + payload.min(expected),
            format!("header declares {rows}x{cols} ({expected} bytes) but payload has {payload} bytes"),
        ));
    }
    let mut data = Vec::with_capacity((rows * cols) as usize);
    for (k, chunk) in bytes[HEADER_LEN as usize..].chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes(chunk.try_into().unwrap());
        if !v.is_finite() {
            return Err(err(HEADER_LEN + 4 * k as u64, format!("non-finite value {v}")));
        }
        data.push(v);
    }
    Matrix::from_vec(rows as usize, cols as usize, data)
}

fn read_sidecar(path: &Path, rows: usize) -> Result<(Vec<String>, Vec<String>)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut ids = Vec::with_capacity(rows);
    let mut titles = Vec::with_capacity(rows);
    for (no, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: no + 1,
            message,
        };
        let mut cols = line.splitn(3, '\t');
        let r: usize = cols
            .next()
            .unwrap_or_default()
            .parse()
            .map_err(|e| err(format!("bad row index: {e}")))?;
        if r != ids.len() {
            return Err(err(format!("row index {r} out of order")));
        }
        let id = cols.next().ok_or_else(|| err("missing item id".into()))?;
        ids.push(id.to_string());
        titles.push(cols.next().unwrap_or("").to_string());
    }
    if ids.len() != rows {
        return Err(Error::Shape(format!(
            "{}: {} sidecar rows for a {rows}-row matrix",
            path.display(),
            ids.len()
        )));
    }
    Ok((ids, titles))
}

/// Row `u` of the result is the mean of the rows listed in `lists[u]`.
/// Sums run in list order in `f64`.
pub fn mean_rows<T: Scalar>(lists: &[Vec<usize>], m: &Matrix<T>) -> Result<Matrix<T>> {
    let mut out = Matrix::zeros(lists.len(), m.cols());
    let mut acc = vec![0.0f64; m.cols()];
    for (u, list) in lists.iter().enumerate() {
        if list.is_empty() {
            return Err(Error::Invalid(format!("row {u} averages an empty list")));
        }
        acc.iter_mut().for_each(|a| *a = 0.0);
        for &i in list {
            if i >= m.rows() {
                return Err(Error::Shape(format!("index {i} beyond {} rows", m.rows())));
            }
            for (a, &x) in acc.iter_mut().zip(m.row(i)) {
                *a += x.f64();
            }
        }
        let n = list.len() as f64;
        for (o, a) in out.row_mut(u).iter_mut().zip(&acc) {
            *o = T::of(a / n);
        }
    }
    Ok(out)
}

/// User language features: the mean of each user's training item features.
pub fn user_language_features(split: &DatasetSplit, items: &EmbeddingMatrix) -> Result<EmbeddingMatrix> {
    if items.rows() < split.n_items() {
        return Err(Error::Shape(format!(
            "{} feature rows for {} items",
            items.rows(),
            split.n_items()
        )));
    }
    let values = mean_rows(&split.train, &items.values).map_err(|e| match e {
        Error::Invalid(m) => Error::Invalid(format!("user features: {m}")),
        other => other,
    })?;
    EmbeddingMatrix::new(values)
}

/// Returns the permuted matrix and the permutation `perm`, where output row
/// `r` is input row `perm[r]`. Row ids stay attached to their positions, so
/// each item receives another item's features.
pub fn shuffle_rows_with_permutation(m: &EmbeddingMatrix, seed: u64) -> (EmbeddingMatrix, Vec<usize>) {
    let mut perm: Vec<usize> = (0..m.rows()).collect();
    perm.shuffle(&mut rng_for(seed, "shuffle-rows"));
    let shuffled = EmbeddingMatrix {
        values: m.values.select_rows(&perm),
        row_ids: m.row_ids.clone(),
        titles: m.titles.clone(),
    };
    (shuffled, perm)
}

pub fn shuffle_rows(m: &EmbeddingMatrix, seed: u64) -> EmbeddingMatrix {
    shuffle_rows_with_permutation(m, seed).0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::IdMaps;

    fn mat(rows: &[Vec<f32>]) -> EmbeddingMatrix {
        EmbeddingMatrix::new(Matrix::from_rows(rows).unwrap()).unwrap()
    }

    #[test]
    fn round_trip_small() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.arec");
        let m = mat(&[vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]])
            .with_row_ids(vec!["a".into(), "b".into()])
            .unwrap();
        write_matrix(&m, &path).unwrap();
        let back = load_matrix(&path).unwrap();
        assert_eq!(back.values(), m.values());
        assert_eq!(back.row_ids(), m.row_ids());
    }

    #[test]
    fn truncated_payload_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.arec");
        let mut bytes = Vec::new();
        bytes.extend_from_slice(MATRIX_MAGIC);
        bytes.extend_from_slice(&1u32.to_le_bytes());
        bytes.extend_from_slice(&2u64.to_le_bytes());
        bytes.extend_from_slice(&3u64.to_le_bytes());
        for v in [1.0f32, 2.0, 3.0, 4.0, 5.0] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        fs::write(&path, &bytes).unwrap();
        assert!(matches!(load_matrix(&path), Err(Error::MatrixFormat { .. })));

        bytes[0] = b'X';
        fs::write(&path, &bytes).unwrap();
        assert!(matches!(load_matrix(&path), Err(Error::MatrixFormat { offset: 0, .. })));
    }

    #[test]
    fn non_finite_value_reports_offset() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nan.arec");
        let mut bytes = Vec::new();
        bytes.extend_from_slice(MATRIX_MAGIC);
        bytes.extend_from_slice(&1u32.to_le_bytes());
        bytes.extend_from_slice(&1u64.to_le_bytes());
        bytes.extend_from_slice(&2u64.to_le_bytes());
        bytes.extend_from_slice(&1.0f32.to_le_bytes());
        bytes.extend_from_slice(&f32::NAN.to_le_bytes());
        fs::write(&path, &bytes).unwrap();
        match load_matrix(&path) {
            Err(Error::MatrixFormat { offset, .. }) => assert_eq!(offset, 28),
            other => panic!("expected format error, got {other:?}"),
        }
    }

    fn tiny_split(train: Vec<Vec<usize>>, n_items: usize) -> DatasetSplit {
        let n = train.len();
        DatasetSplit {
            train,
            validation: vec![Vec::new(); n],
            test: vec![Vec::new(); n],
            id_maps: IdMaps {
                users: IdMap::from_ids((0..n).map(|u| format!("u{u}")).collect()).unwrap(),
                items: IdMap::from_ids((0..n_items).map(|i| format!("i{i}")).collect()).unwrap(),
            },
            dataset_tag: 0,
        }
    }

    #[test]
    fn user_features_are_means() {
        let items = mat(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![3.0, 7.0]]);
        let split = tiny_split(vec![vec![2], vec![0, 1]], 3);
        let f = user_language_features(&split, &items).unwrap();
        assert_eq!(f.row(0), &[3.0, 7.0]);
        assert_eq!(f.row(1), &[0.5, 0.5]);

        let bad = tiny_split(vec![vec![0], vec![]], 3);
        assert!(user_language_features(&bad, &items).is_err());
    }

    #[test]
    fn align_reorders_by_id() {
        let m = mat(&[vec![1.0], vec![2.0]])
            .with_row_ids(vec!["x".into(), "y".into()])
            .unwrap();
        let items = IdMap::from_ids(vec!["y".into(), "x".into()]).unwrap();
        assert_eq!(m.align_to(&items).unwrap().values().as_slice(), &[2.0, 1.0]);
        let missing = IdMap::from_ids(vec!["z".into()]).unwrap();
        assert!(m.align_to(&missing).is_err());
    }

    #[test]
    fn duplicate_row_ids_rejected() {
        let m = mat(&[vec![1.0], vec![2.0]]);
        assert!(m.with_row_ids(vec!["a".into(), "a".into()]).is_err());
    }

    #[test]
    fn shuffle_is_a_seeded_permutation() {
        let m = mat(&(0..10).map(|r| vec![r as f32, -(r as f32)]).collect::<Vec<_>>());
        let (a, perm) = shuffle_rows_with_permutation(&m, 3);
        assert_eq!(shuffle_rows(&m, 3), a);
        let mut sorted = perm.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..10).collect::<Vec<_>>());
        let mut inverse = vec![0; perm.len()];
        for (r, &p) in perm.iter().enumerate() {
            inverse[p] = r;
        }
        assert_eq!(a.values().select_rows(&inverse), *m.values());
    }
}
