//! Interaction ingestion, user filtering, dense indexing, per-user 4:3:3
//! splitting and multi-dataset merging.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::ops::Range;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::rng_for;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Interaction {
    pub user: String,
    pub item: String,
    pub timestamp: Option<i64>,
}

/// Deduplicated implicit-feedback log in file order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawInteractions {
    records: Vec<Interaction>,
}

impl RawInteractions {
    /// Collapses repeated (user, item) pairs onto the first occurrence, keeping
    /// the earliest timestamp seen for the pair.
    pub fn new(records: impl IntoIterator<Item = Interaction>) -> Result<Self> {
        let mut seen: HashMap<(String, String), usize> = HashMap::new();
        let mut out: Vec<Interaction> = Vec::new();
        for rec in records {
            if rec.user.is_empty() || rec.item.is_empty() {
                return Err(Error::Invalid("interaction with empty user or item id".into()));
            }
            match seen.get(&(rec.user.clone(), rec.item.clone())) {
                Some(&at) => {
                    let kept = &mut out[at];
                    kept.timestamp = match (kept.timestamp, rec.timestamp) {
                        (Some(a), Some(b)) => Some(a.min(b)),
                        (a, b) => a.or(b),
                    };
                }
                None => {
                    seen.insert((rec.user.clone(), rec.item.clone()), out.len());
                    out.push(rec);
                }
            }
        }
        Ok(RawInteractions { records: out })
    }

    pub fn records(&self) -> &[Interaction] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            match r.timestamp {
                Some(ts) => writeln!(out, "{}\t{}\t{}", r.user, r.item, ts),
                None => writeln!(out, "{}\t{}", r.user, r.item),
            }
            .expect("write to string");
        }
        out
    }
}

/// Reads `user<TAB>item[<TAB>timestamp]` lines; `#` lines and blank lines are skipped.
pub fn parse_interactions(path: &Path) -> Result<RawInteractions> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_interactions_str(&text, path)
}

pub fn parse_interactions_str(text: &str, path: &Path) -> Result<RawInteractions> {
    let mut records = Vec::new();
    for (no, line) in text.lines().enumerate() {
        let line_no = no + 1;
        let parse_err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: line_no,
            message,
        };
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 2 && cols.len() != 3 {
            return Err(parse_err(format!("expected 2 or 3 columns, found {}", cols.len())));
        }
        let (user, item) = (cols[0].trim(), cols[1].trim());
        if user.is_empty() || item.is_empty() {
            return Err(parse_err("empty user or item id".into()));
        }
        let timestamp = match cols.get(2) {
            Some(ts) => Some(
                ts.trim()
                    .parse::<i64>()
                    .map_err(|e| parse_err(format!("bad timestamp {ts:?}: {e}")))?,
            ),
            None => None,
        };
        records.push(Interaction {
            user: user.to_string(),
            item: item.to_string(),
            timestamp,
        });
    }
    if records.is_empty() {
        return Err(Error::Empty(format!("{}: no interactions", path.display())));
    }
    RawInteractions::new(records)
}

/// Bijection between external string ids and contiguous indices `0..len`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IdMap {
    ids: Vec<String>,
    lookup: HashMap<String, usize>,
}

impl IdMap {
    pub fn from_ids(ids: Vec<String>) -> Result<Self> {
        let mut lookup = HashMap::with_capacity(ids.len());
        for (i, id) in ids.iter().enumerate() {
            if lookup.insert(id.clone(), i).is_some() {
                return Err(Error::Invalid(format!("duplicate id {id:?}")));
            }
        }
        Ok(IdMap { ids, lookup })
    }

    fn intern(&mut self, id: &str) -> usize {
        if let Some(&i) = self.lookup.get(id) {
            return i;
        }
        let i = self.ids.len();
        self.ids.push(id.to_string());
        self.lookup.insert(id.to_string(), i);
        i
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.lookup.get(id).copied()
    }

    pub fn id_of(&self, index: usize) -> Option<&str> {
        self.ids.get(index).map(String::as_str)
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    fn to_tsv(&self) -> String {
        let mut out = String::new();
        for (i, id) in self.ids.iter().enumerate() {
            writeln!(out, "{i}\t{id}").expect("write to string");
        }
        out
    }

    fn read_tsv(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut ids = Vec::new();
        for (no, line) in text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let err = |message: String| Error::Parse {
                path: path.to_path_buf(),
                line: no + 1,
                message,
            };
            let (idx, id) = line
                .split_once('\t')
                .ok_or_else(|| err("expected index<TAB>id".into()))?;
            let idx: usize = idx.parse().map_err(|e| err(format!("bad index: {e}")))?;
            if idx != ids.len() {
                return Err(err(format!("index {idx} out of order, expected {}", ids.len())));
            }
            ids.push(id.to_string());
        }
        Self::from_ids(ids)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IdMaps {
    pub users: IdMap,
    pub items: IdMap,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IndexedInteraction {
    pub user: usize,
    pub item: usize,
    pub timestamp: Option<i64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IndexedInteractions {
    pub records: Vec<IndexedInteraction>,
    pub id_maps: IdMaps,
}

impl IndexedInteractions {
    pub fn n_users(&self) -> usize {
        self.id_maps.users.len()
    }

    pub fn n_items(&self) -> usize {
        self.id_maps.items.len()
    }

    pub fn write_tsv(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut out = String::new();
        for r in &self.records {
            match r.timestamp {
                Some(ts) => writeln!(out, "{}\t{}\t{}", r.user, r.item, ts),
                None => writeln!(out, "{}\t{}", r.user, r.item),
            }
            .expect("write to string");
        }
        write_file(&dir.join("indexed.tsv"), &out)?;
        write_file(&dir.join("idmap.users.tsv"), &self.id_maps.users.to_tsv())?;
        write_file(&dir.join("idmap.items.tsv"), &self.id_maps.items.to_tsv())
    }
}

/// Drops users with fewer than `min_interactions` records, in a single pass,
/// and assigns dense indices in order of first appearance.
pub fn filter_and_index(raw: &RawInteractions, min_interactions: usize) -> Result<IndexedInteractions> {
    if min_interactions == 0 {
        return Err(Error::Invalid("min_interactions must be at least 1".into()));
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for r in raw.records() {
        *counts.entry(r.user.as_str()).or_default() += 1;
    }
    let mut id_maps = IdMaps::default();
    let mut records = Vec::new();
    for r in raw.records() {
        if counts[r.user.as_str()] < min_interactions {
            continue;
        }
        records.push(IndexedInteraction {
            user: id_maps.users.intern(&r.user),
            item: id_maps.items.intern(&r.item),
            timestamp: r.timestamp,
        });
    }
    if id_maps.users.is_empty() {
        return Err(Error::Empty(format!(
            "no user has at least {min_interactions} interactions"
        )));
    }
    Ok(IndexedInteractions { records, id_maps })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitOrder {
    /// Seeded per-user shuffle.
    #[default]
    Random,
    /// Earliest interactions to train; records without timestamps keep file order.
    Chronological,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitConfig {
    pub ratios: [f64; 3],
    pub seed: u64,
    pub order: SplitOrder,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            ratios: [0.4, 0.3, 0.3],
            seed: 0,
            order: SplitOrder::Random,
        }
    }
}

/// Train/validation/test item lists per user, each sorted ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit {
    pub train: Vec<Vec<usize>>,
    pub validation: Vec<Vec<usize>>,
    pub test: Vec<Vec<usize>>,
    pub id_maps: IdMaps,
    pub dataset_tag: usize,
}

/// Round-half-up share counts `(train, validation, test)` for `n` records.
pub fn split_counts(n: usize, ratios: [f64; 3]) -> (usize, usize, usize) {
    if n < 3 {
        return (n, 0, 0);
    }
    // the epsilon keeps exact halves from rounding down through representation error
    let round = |x: f64| (x + 0.5 + 1e-9).floor() as usize;
    let n_train = round(ratios[0] * n as f64).clamp(1, n);
    let n_val = round(ratios[1] * n as f64).min(n - n_train);
    (n_train, n_val, n - n_train - n_val)
}

pub fn split_dataset(data: &IndexedInteractions, cfg: &SplitConfig) -> Result<DatasetSplit> {
    let sum: f64 = cfg.ratios.iter().sum();
    if (sum - 1.0).abs() > 1e-9 || cfg.ratios.iter().any(|&r| r < 0.0) {
        return Err(Error::Invalid(format!("split ratios {:?} must be non-negative and sum to 1", cfg.ratios)));
    }
    let n_users = data.n_users();
    let mut per_user: Vec<Vec<IndexedInteraction>> = vec![Vec::new(); n_users];
    for r in &data.records {
        per_user[r.user].push(*r);
    }

    let mut train = vec![Vec::new(); n_users];
    let mut validation = vec![Vec::new(); n_users];
    let mut test = vec![Vec::new(); n_users];
    for (u, recs) in per_user.iter_mut().enumerate() {
        match cfg.order {
            SplitOrder::Random => recs.shuffle(&mut rng_for(cfg.seed, &format!("split/user/{u}"))),
            SplitOrder::Chronological => recs.sort_by_key(|r| r.timestamp.unwrap_or(i64::MAX)),
        }
        let (n_train, n_val, _) = split_counts(recs.len(), cfg.ratios);
        let items = recs.iter().map(|r| r.item);
        train[u] = items.clone().take(n_train).collect();
        validation[u] = items.clone().skip(n_train).take(n_val).collect();
        test[u] = items.skip(n_train + n_val).collect();
    }

    let mut in_train = vec![false; data.n_items()];
    for &i in train.iter().flatten() {
        in_train[i] = true;
    }
    for list in validation.iter_mut().chain(test.iter_mut()) {
        list.retain(|&i| in_train[i]);
    }
    for list in train.iter_mut().chain(validation.iter_mut()).chain(test.iter_mut()) {
        list.sort_unstable();
    }
    Ok(DatasetSplit {
        train,
        validation,
        test,
        id_maps: data.id_maps.clone(),
        dataset_tag: 0,
    })
}

impl DatasetSplit {
    pub fn n_users(&self) -> usize {
        self.train.len()
    }

    pub fn n_items(&self) -> usize {
        self.id_maps.items.len()
    }

    pub fn n_train_interactions(&self) -> usize {
        self.train.iter().map(Vec::len).sum()
    }

    pub fn with_tag(mut self, tag: usize) -> Self {
        self.dataset_tag = tag;
        self
    }

    /// Checks the structural invariants: disjointness, train coverage of
    /// held-out items, and index ranges.
    pub fn validate(&self) -> Result<()> {
        let n_items = self.n_items();
        if self.validation.len() != self.n_users() || self.test.len() != self.n_users() {
            return Err(Error::Invalid("train/validation/test user counts differ".into()));
        }
        if self.id_maps.users.len() != self.n_users() {
            return Err(Error::Invalid("user id map does not match split".into()));
        }
        let mut in_train = vec![false; n_items];
        for (u, list) in self.train.iter().enumerate() {
            if list.is_empty() {
                return Err(Error::Invalid(format!("user {u} has no training interactions")));
            }
            for &i in list {
                if i >= n_items {
                    return Err(Error::Invalid(format!("item index {i} out of range")));
                }
                in_train[i] = true;
            }
        }
        for u in 0..self.n_users() {
            let train: HashSet<usize> = self.train[u].iter().copied().collect();
            let val: HashSet<usize> = self.validation[u].iter().copied().collect();
            for &i in self.validation[u].iter().chain(&self.test[u]) {
                if i >= n_items || !in_train[i] {
                    return Err(Error::Invalid(format!("held-out item {i} of user {u} is absent from train")));
                }
                if train.contains(&i) {
                    return Err(Error::Invalid(format!("item {i} of user {u} is in train and held out")));
                }
            }
            if self.test[u].iter().any(|i| val.contains(i)) {
                return Err(Error::Invalid(format!("user {u} has overlapping validation and test")));
            }
        }
        Ok(())
    }

    /// Writes `train.tsv`, `val.tsv`, `test.tsv` and the two id maps.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (name, lists) in [("train.tsv", &self.train), ("val.tsv", &self.validation), ("test.tsv", &self.test)] {
            let mut out = String::new();
            for (u, items) in lists.iter().enumerate() {
                for i in items {
                    writeln!(out, "{u}\t{i}").expect("write to string");
                }
            }
            write_file(&dir.join(name), &out)?;
        }
        write_file(&dir.join("idmap.users.tsv"), &self.id_maps.users.to_tsv())?;
        write_file(&dir.join("idmap.items.tsv"), &self.id_maps.items.to_tsv())
    }

    pub fn read_dir(dir: &Path) -> Result<Self> {
        let users = IdMap::read_tsv(&dir.join("idmap.users.tsv"))?;
        let items = IdMap::read_tsv(&dir.join("idmap.items.tsv"))?;
        let read = |name: &str| -> Result<Vec<Vec<usize>>> {
            let path = dir.join(name);
            let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            let mut lists = vec![Vec::new(); users.len()];
            for (no, line) in text.lines().enumerate() {
                if line.is_empty() {
                    continue;
                }
                let err = |message: String| Error::Parse {
                    path: path.clone(),
                    line: no + 1,
                    message,
                };
                let (u, i) = line
                    .split_once('\t')
                    .ok_or_else(|| err("expected user_index<TAB>item_index".into()))?;
                let u: usize = u.parse().map_err(|e| err(format!("bad user index: {e}")))?;
                let i: usize = i.parse().map_err(|e| err(format!("bad item index: {e}")))?;
                if u >= users.len() || i >= items.len() {
                    return Err(err(format!("index ({u}, {i}) outside id maps")));
                }
                lists[u].push(i);
            }
            for l in &mut lists {
                l.sort_unstable();
            }
            Ok(lists)
        };
        let split = DatasetSplit {
            train: read("train.tsv")?,
            validation: read("val.tsv")?,
            test: read("test.tsv")?,
            id_maps: IdMaps { users, items },
            dataset_tag: 0,
        };
        split.validate()?;
        Ok(split)
    }
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Several splits laid out in one global index space, block by block.
#[derive(Debug, Clone, PartialEq)]
pub struct MixedDataset {
    pub splits: Vec<DatasetSplit>,
    pub user_offsets: Vec<usize>,
    pub item_offsets: Vec<usize>,
}

pub fn merge_datasets(splits: Vec<DatasetSplit>) -> Result<MixedDataset> {
    if splits.is_empty() {
        return Err(Error::Empty("no datasets to merge".into()));
    }
    let mut tags = HashSet::new();
    for s in &splits {
        if !tags.insert(s.dataset_tag) {
            return Err(Error::Invalid(format!("dataset tag {} used twice", s.dataset_tag)));
        }
    }
    let mut user_offsets = Vec::with_capacity(splits.len());
    let mut item_offsets = Vec::with_capacity(splits.len());
    let (mut uo, mut io) = (0, 0);
    for s in &splits {
        user_offsets.push(uo);
        item_offsets.push(io);
        uo += s.n_users();
        io += s.n_items();
    }
    Ok(MixedDataset {
        splits,
        user_offsets,
        item_offsets,
    })
}

impl MixedDataset {
    pub fn n_users(&self) -> usize {
        self.splits.iter().map(DatasetSplit::n_users).sum()
    }

    pub fn n_items(&self) -> usize {
        self.splits.iter().map(DatasetSplit::n_items).sum()
    }

    /// Global item range owned by the `k`-th dataset in merge order.
    pub fn item_range(&self, k: usize) -> Range<usize> {
        self.item_offsets[k]..self.item_offsets[k] + self.splits[k].n_items()
    }

    pub fn user_range(&self, k: usize) -> Range<usize> {
        self.user_offsets[k]..self.user_offsets[k] + self.splits[k].n_users()
    }

    /// Position in merge order of the dataset owning a global item index.
    pub fn dataset_of_item(&self, item: usize) -> Option<usize> {
        if item >= self.n_items() {
            return None;
        }
        Some(self.item_offsets.partition_point(|&o| o <= item) - 1)
    }

    pub fn tag_of_item(&self, item: usize) -> Option<usize> {
        self.dataset_of_item(item).map(|k| self.splits[k].dataset_tag)
    }

    /// One split over the global index space. External ids are prefixed
    /// with `<tag>:` so the union id maps stay bijective.
    pub fn union_split(&self) -> DatasetSplit {
        let shift = |lists: &[Vec<usize>], off: usize| -> Vec<Vec<usize>> {
            lists.iter().map(|l| l.iter().map(|&i| i + off).collect()).collect()
        };
        let mut train = Vec::new();
        let mut validation = Vec::new();
        let mut test = Vec::new();
        let mut users = Vec::new();
        let mut items = Vec::new();
        for (k, s) in self.splits.iter().enumerate() {
            let off = self.item_offsets[k];
            train.extend(shift(&s.train, off));
            validation.extend(shift(&s.validation, off));
            test.extend(shift(&s.test, off));
            users.extend(s.id_maps.users.ids().iter().map(|id| format!("{}:{id}", s.dataset_tag)));
            items.extend(s.id_maps.items.ids().iter().map(|id| format!("{}:{id}", s.dataset_tag)));
        }
        DatasetSplit {
            train,
            validation,
            test,
            id_maps: IdMaps {
                users: IdMap::from_ids(users).expect("prefixed ids are unique"),
                items: IdMap::from_ids(items).expect("prefixed ids are unique"),
            },
            dataset_tag: self.splits[0].dataset_tag,
        }
    }

    /// Recovers the per-dataset splits from a union split laid out by this merge.
    pub fn unmerge(&self, union: &DatasetSplit) -> Vec<DatasetSplit> {
        let unshift = |lists: &[Vec<usize>], users: Range<usize>, off: usize| -> Vec<Vec<usize>> {
            lists[users].iter().map(|l| l.iter().map(|&i| i - off).collect()).collect()
        };
        self.splits
            .iter()
            .enumerate()
            .map(|(k, s)| {
                let off = self.item_offsets[k];
                DatasetSplit {
                    train: unshift(&union.train, self.user_range(k), off),
                    validation: unshift(&union.validation, self.user_range(k), off),
                    test: unshift(&union.test, self.user_range(k), off),
                    id_maps: s.id_maps.clone(),
                    dataset_tag: s.dataset_tag,
                }
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raw(lines: &str) -> Result<RawInteractions> {
        parse_interactions_str(lines, Path::new("mem.tsv"))
    }

    fn user_with(n: usize, user: &str) -> Vec<Interaction> {
        (0..n)
            .map(|i| Interaction {
                user: user.into(),
                item: format!("i{i}"),
                timestamp: Some(i as i64),
            })
            .collect()
    }

    #[test]
    fn parse_dedups_and_skips_comments() {
        assert_eq!(raw("u1\ti1\nu1\ti1\nu2\ti3\n").unwrap().len(), 2);
        assert_eq!(raw("# comment\nu1\ti1\n").unwrap().len(), 1);
    }

    #[test]
    fn parse_rejects_malformed_and_empty() {
        match raw("u1\n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 1),
            other => panic!("expected parse error, got {other:?}"),
        }
        match raw("u1\ti1\nu2\ti2\textra\tcol\n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
        assert!(matches!(raw(""), Err(Error::Empty(_))));
        assert!(matches!(raw("# only\n"), Err(Error::Empty(_))));
    }

    #[test]
    fn dedup_keeps_earliest_timestamp() {
        let r = raw("u\ti\t50\nu\ti\t10\nu\tj\n").unwrap();
        assert_eq!(r.records()[0].timestamp, Some(10));
    }

    #[test]
    fn filter_boundary_is_inclusive() {
        let mut recs = user_with(25, "a");
        recs.extend(user_with(20, "b"));
        recs.extend(user_with(19, "c"));
        let raw = RawInteractions::new(recs).unwrap();
        assert_eq!(filter_and_index(&raw, 20).unwrap().n_users(), 2);
        assert_eq!(filter_and_index(&raw, 1).unwrap().n_users(), 3);
        assert!(matches!(filter_and_index(&raw, 26), Err(Error::Empty(_))));
        assert!(filter_and_index(&raw, 0).is_err());
    }

    #[test]
    fn split_counts_follow_round_half_up() {
        assert_eq!(split_counts(10, [0.4, 0.3, 0.3]), (4, 3, 3));
        assert_eq!(split_counts(20, [0.4, 0.3, 0.3]), (8, 6, 6));
        assert_eq!(split_counts(5, [0.4, 0.3, 0.3]), (2, 2, 1));
        assert_eq!(split_counts(2, [0.4, 0.3, 0.3]), (2, 0, 0));
        assert_eq!(split_counts(3, [0.4, 0.3, 0.3]), (1, 1, 1));
    }

    #[test]
    fn cold_items_are_pruned_from_held_out_sets() {
        // item "solo" appears once, so at most one of train/val/test holds it
        let mut recs = user_with(10, "a");
        recs.push(Interaction {
            user: "a".into(),
            item: "solo".into(),
            timestamp: None,
        });
        let raw = RawInteractions::new(recs).unwrap();
        let idx = filter_and_index(&raw, 1).unwrap();
        let solo = idx.id_maps.items.index_of("solo").unwrap();
        for seed in 0..20 {
            let s = split_dataset(&idx, &SplitConfig { seed, ..Default::default() }).unwrap();
            s.validate().unwrap();
            if !s.train[0].contains(&solo) {
                assert!(!s.validation[0].contains(&solo) && !s.test[0].contains(&solo));
            }
            // single user: held-out sets only keep items the user also trained on, which is none
            assert!(s.validation[0].is_empty() && s.test[0].is_empty());
        }
    }

    #[test]
    fn chronological_split_puts_earliest_in_train() {
        let raw = RawInteractions::new(user_with(10, "a")).unwrap();
        let idx = filter_and_index(&raw, 1).unwrap();
        let s = split_dataset(
            &idx,
            &SplitConfig {
                order: SplitOrder::Chronological,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(s.train[0], vec![0, 1, 2, 3]);
    }

    #[test]
    fn merge_offsets_and_tags() {
        let mk = |users: usize, items: usize, tag: usize| DatasetSplit {
            train: (0..users).map(|u| vec![u % items]).collect(),
            validation: vec![Vec::new(); users],
            test: vec![Vec::new(); users],
            id_maps: IdMaps {
                users: IdMap::from_ids((0..users).map(|u| format!("u{u}")).collect()).unwrap(),
                items: IdMap::from_ids((0..items).map(|i| format!("i{i}")).collect()).unwrap(),
            },
            dataset_tag: tag,
        };
        let one = merge_datasets(vec![mk(3, 2, 0)]).unwrap();
        assert_eq!((one.user_offsets[0], one.item_offsets[0]), (0, 0));
        assert_eq!(one.union_split().train, one.splits[0].train);

        let two = merge_datasets(vec![mk(10, 5, 0), mk(4, 7, 1)]).unwrap();
        assert_eq!(two.user_range(1), 10..14);
        assert_eq!(two.item_range(1), 5..12);
        assert_eq!(two.tag_of_item(4), Some(0));
        assert_eq!(two.tag_of_item(5), Some(1));
        assert_eq!(two.tag_of_item(12), None);
        let union = two.union_split();
        assert_eq!(two.unmerge(&union), two.splits);

        assert!(merge_datasets(Vec::new()).is_err());
        assert!(merge_datasets(vec![mk(1, 1, 3), mk(1, 1, 3)]).is_err());
    }
}
