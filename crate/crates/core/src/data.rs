//! Sparse rating storage.
//!
//! Ratings are kept twice: row-wise per user and column-wise per item, both
//! sorted by the opposite handle. Unrated cells are simply absent; there is no
//! sentinel value, so a stored `0.0` is a real rating when the scale allows it.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct UserId(pub u32);

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ItemId(pub u32);

impl UserId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl ItemId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for UserId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "u#{}", self.0)
    }
}

impl fmt::Display for ItemId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "i#{}", self.0)
    }
}

/// Bijection between external string labels and dense handles, in
/// first-appearance order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Catalog {
    labels: Vec<String>,
    handles: HashMap<String, u32>,
}

impl Catalog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_labels<I, S>(labels: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut catalog = Catalog::new();
        for label in labels {
            let label = label.into();
            if catalog.handles.contains_key(&label) {
                return Err(Error::Config(format!("duplicate label {label}")));
            }
            catalog.intern(&label);
        }
        Ok(catalog)
    }

    /// Returns the handle for `label`, assigning the next free one if unseen.
    pub fn intern(&mut self, label: &str) -> u32 {
        if let Some(&h) = self.handles.get(label) {
            return h;
        }
        let h = self.labels.len() as u32;
        self.labels.push(label.to_string());
        self.handles.insert(label.to_string(), h);
        h
    }

    pub fn get(&self, label: &str) -> Option<u32> {
        self.handles.get(label).copied()
    }

    pub fn label(&self, handle: u32) -> Option<&str> {
        self.labels.get(handle as usize).map(String::as_str)
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Closed rating interval `[min, max]`.
#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scale {
    pub min: f64,
    pub max: f64,
}

impl Scale {
    pub fn new(min: f64, max: f64) -> Result<Self> {
        if !(min.is_finite() && max.is_finite() && min < max) {
            return Err(Error::InvalidScale { min, max });
        }
        Ok(Scale { min, max })
    }

    pub fn contains(&self, value: f64) -> bool {
        value >= self.min && value <= self.max
    }

    pub fn clamp(&self, value: f64) -> f64 {
        value.clamp(self.min, self.max)
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.min + self.max)
    }
}

impl Default for Scale {
    fn default() -> Self {
        Scale { min: 0.0, max: 10.0 }
    }
}

impl fmt::Display for Scale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{}", self.min, self.max)
    }
}

impl FromStr for Scale {
    type Err = Error;

    /// `min,max`
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("invalid scale `{s}` (expected min,max)"));
        let (min, max) = s.split_once(',').ok_or_else(bad)?;
        let min: f64 = min.trim().parse().map_err(|_| bad())?;
        let max: f64 = max.trim().parse().map_err(|_| bad())?;
        Scale::new(min, max)
    }
}

/// One labelled rating as it appears in an input file.
#[derive(Clone, Debug, PartialEq)]
pub struct Triple {
    pub user: String,
    pub item: String,
    pub rating: f64,
}

impl Triple {
    pub fn new(user: impl Into<String>, item: impl Into<String>, rating: f64) -> Self {
        Triple {
            user: user.into(),
            item: item.into(),
            rating,
        }
    }
}

/// What to do when the same (user, item) pair appears more than once.
#[derive(Copy, Clone, Debug, Default, PartialEq, Eq)]
pub enum DuplicatePolicy {
    /// Keep the last rating seen and count the overwrite.
    #[default]
    LastWins,
    Strict,
}

impl FromStr for DuplicatePolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "last-wins" => Ok(DuplicatePolicy::LastWins),
            "strict" => Ok(DuplicatePolicy::Strict),
            other => Err(Error::Config(format!(
                "unknown duplicate policy `{other}` (expected last-wins|strict)"
            ))),
        }
    }
}

impl fmt::Display for DuplicatePolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DuplicatePolicy::LastWins => "last-wins",
            DuplicatePolicy::Strict => "strict",
        })
    }
}

/// Sparse vector of `(index, value)` pairs with strictly increasing indices.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RatingVector {
    entries: Vec<(u32, f64)>,
}

impl RatingVector {
    /// Sorts `entries` by index. Fails on repeated indices.
    pub fn new(mut entries: Vec<(u32, f64)>) -> Result<Self> {
        entries.sort_by_key(|&(idx, _)| idx);
        if entries.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::Config("repeated index in rating vector".into()));
        }
        Ok(RatingVector { entries })
    }

    /// Builds a vector from a dense row, treating `None` as unrated.
    pub fn from_dense(values: &[Option<f64>]) -> Self {
        let entries = values
            .iter()
            .enumerate()
            .filter_map(|(idx, v)| v.map(|v| (idx as u32, v)))
            .collect();
        RatingVector { entries }
    }

    pub fn entries(&self) -> &[(u32, f64)] {
        &self.entries
    }

    pub fn get(&self, index: u32) -> Option<f64> {
        lookup(&self.entries, index)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, f64)> + '_ {
        self.entries.iter().copied()
    }
}

pub(crate) fn lookup(entries: &[(u32, f64)], index: u32) -> Option<f64> {
    entries
        .binary_search_by_key(&index, |&(idx, _)| idx)
        .ok()
        .map(|pos| entries[pos].1)
}

/// Counts reported after building a matrix.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct BuildSummary {
    pub users: usize,
    pub items: usize,
    pub entries: usize,
    pub duplicates: usize,
}

impl BuildSummary {
    pub fn density(&self) -> f64 {
        if self.users == 0 || self.items == 0 {
            0.0
        } else {
            self.entries as f64 / (self.users as f64 * self.items as f64)
        }
    }
}

impl fmt::Display for BuildSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} users, {} items, {} ratings",
            self.users, self.items, self.entries
        )
    }
}

/// Immutable sparse user x item rating matrix.
#[derive(Clone, Debug)]
pub struct RatingMatrix {
    scale: Scale,
    users: Catalog,
    items: Catalog,
    by_user: Vec<Vec<(u32, f64)>>,
    by_item: Vec<Vec<(u32, f64)>>,
    user_means: Vec<Option<f64>>,
    global_mean: Option<f64>,
    num_entries: usize,
    duplicates: usize,
}

impl RatingMatrix {
    /// Ingests labelled triples; handles are assigned in first-appearance order.
    pub fn from_triples<I>(triples: I, scale: Scale, policy: DuplicatePolicy) -> Result<Self>
    where
        I: IntoIterator<Item = Triple>,
    {
        let scale = Scale::new(scale.min, scale.max)?;
        let mut users = Catalog::new();
        let mut items = Catalog::new();
        let mut slots: HashMap<(u32, u32), usize> = HashMap::new();
        let mut entries: Vec<(u32, u32, f64)> = Vec::new();
        let mut duplicates = 0;

        for t in triples {
            if !(t.rating.is_finite() && scale.contains(t.rating)) {
                return Err(Error::RatingOutOfScale {
                    user: t.user,
                    item: t.item,
                    rating: t.rating,
                    min: scale.min,
                    max: scale.max,
                });
            }
            let u = users.intern(&t.user);
            let i = items.intern(&t.item);
            match slots.get(&(u, i)) {
                Some(&slot) => {
                    if policy == DuplicatePolicy::Strict {
                        return Err(Error::DuplicateRating {
                            user: t.user,
                            item: t.item,
                        });
                    }
                    duplicates += 1;
                    entries[slot].2 = t.rating;
                }
                None => {
                    slots.insert((u, i), entries.len());
                    entries.push((u, i, t.rating));
                }
            }
        }

        let mut matrix = Self::assemble(scale, users, items, entries);
        matrix.duplicates = duplicates;
        Ok(matrix)
    }

    /// Builds a matrix over existing catalogs, e.g. the training half of a
    /// split. Handles must be in range and pairs unique.
    pub fn from_parts(
        users: Catalog,
        items: Catalog,
        scale: Scale,
        entries: Vec<(UserId, ItemId, f64)>,
    ) -> Result<Self> {
        let scale = Scale::new(scale.min, scale.max)?;
        let mut seen = std::collections::HashSet::with_capacity(entries.len());
        let mut raw = Vec::with_capacity(entries.len());
        for (u, i, r) in entries {
            let (Some(ul), Some(il)) = (users.label(u.0), items.label(i.0)) else {
                return Err(Error::Config(format!("handle ({u}, {i}) outside catalogs")));
            };
            if !(r.is_finite() && scale.contains(r)) {
                return Err(Error::RatingOutOfScale {
                    user: ul.to_string(),
                    item: il.to_string(),
                    rating: r,
                    min: scale.min,
                    max: scale.max,
                });
            }
            if !seen.insert((u, i)) {
                return Err(Error::DuplicateRating {
                    user: ul.to_string(),
                    item: il.to_string(),
                });
            }
            raw.push((u.0, i.0, r));
        }
        Ok(Self::assemble(scale, users, items, raw))
    }

    fn assemble(scale: Scale, users: Catalog, items: Catalog, entries: Vec<(u32, u32, f64)>) -> Self {
        let mut by_user = vec![Vec::new(); users.len()];
        let mut by_item = vec![Vec::new(); items.len()];
        for &(u, i, r) in &entries {
            by_user[u as usize].push((i, r));
            by_item[i as usize].push((u, r));
        }
        for row in by_user.iter_mut().chain(by_item.iter_mut()) {
            row.sort_by_key(|&(idx, _)| idx);
        }
        let user_means = by_user.iter().map(|row| mean_of(row)).collect();
        let global_mean = mean_of(&entries.iter().map(|&(_, i, r)| (i, r)).collect::<Vec<_>>());
        RatingMatrix {
            scale,
            users,
            items,
            by_user,
            by_item,
            user_means,
            global_mean,
            num_entries: entries.len(),
            duplicates: 0,
        }
    }

    pub fn scale(&self) -> Scale {
        self.scale
    }

    pub fn users(&self) -> &Catalog {
        &self.users
    }

    pub fn items(&self) -> &Catalog {
        &self.items
    }

    pub fn num_users(&self) -> usize {
        self.users.len()
    }

    pub fn num_items(&self) -> usize {
        self.items.len()
    }

    pub fn num_entries(&self) -> usize {
        self.num_entries
    }

    pub fn summary(&self) -> BuildSummary {
        BuildSummary {
            users: self.num_users(),
            items: self.num_items(),
            entries: self.num_entries,
            duplicates: self.duplicates,
        }
    }

    pub fn user_handle(&self, label: &str) -> Result<UserId> {
        self.users
            .get(label)
            .map(UserId)
            .ok_or_else(|| Error::UnknownUser(label.to_string()))
    }

    pub fn item_handle(&self, label: &str) -> Result<ItemId> {
        self.items
            .get(label)
            .map(ItemId)
            .ok_or_else(|| Error::UnknownItem(label.to_string()))
    }

    pub fn user_label(&self, u: UserId) -> &str {
        self.users.label(u.0).unwrap_or("?")
    }

    pub fn item_label(&self, i: ItemId) -> &str {
        self.items.label(i.0).unwrap_or("?")
    }

    pub fn check_user(&self, u: UserId) -> Result<()> {
        if u.index() < self.num_users() {
            Ok(())
        } else {
            Err(Error::UnknownUser(u.to_string()))
        }
    }

    pub fn check_item(&self, i: ItemId) -> Result<()> {
        if i.index() < self.num_items() {
            Ok(())
        } else {
            Err(Error::UnknownItem(i.to_string()))
        }
    }

    pub fn user_row(&self, u: UserId) -> Result<RatingVector> {
        self.check_user(u)?;
        Ok(RatingVector {
            entries: self.by_user[u.index()].clone(),
        })
    }

    pub fn item_column(&self, i: ItemId) -> Result<RatingVector> {
        self.check_item(i)?;
        Ok(RatingVector {
            entries: self.by_item[i.index()].clone(),
        })
    }

    /// Borrowed row of `(item, rating)`; empty for out-of-range handles.
    pub fn user_entries(&self, u: UserId) -> &[(u32, f64)] {
        self.by_user.get(u.index()).map_or(&[], Vec::as_slice)
    }

    /// Borrowed column of `(user, rating)`; empty for out-of-range handles.
    pub fn item_entries(&self, i: ItemId) -> &[(u32, f64)] {
        self.by_item.get(i.index()).map_or(&[], Vec::as_slice)
    }

    pub fn rating(&self, u: UserId, i: ItemId) -> Option<f64> {
        lookup(self.user_entries(u), i.0)
    }

    /// Mean over the user's rated values only.
    pub fn user_mean(&self, u: UserId) -> Result<f64> {
        self.check_user(u)?;
        self.user_means[u.index()].ok_or_else(|| Error::NoRatings(self.user_label(u).to_string()))
    }

    pub(crate) fn cached_user_mean(&self, u: u32) -> Option<f64> {
        self.user_means.get(u as usize).copied().flatten()
    }

    pub fn global_mean(&self) -> Option<f64> {
        self.global_mean
    }

    /// All entries in user-major, item-ascending order.
    pub fn triples(&self) -> impl Iterator<Item = (UserId, ItemId, f64)> + '_ {
        self.by_user
            .iter()
            .enumerate()
            .flat_map(|(u, row)| row.iter().map(move |&(i, r)| (UserId(u as u32), ItemId(i), r)))
    }

    /// Same entries flattened from the per-item index (item-major order).
    pub fn triples_by_item(&self) -> impl Iterator<Item = (UserId, ItemId, f64)> + '_ {
        self.by_item
            .iter()
            .enumerate()
            .flat_map(|(i, col)| col.iter().map(move |&(u, r)| (UserId(u), ItemId(i as u32), r)))
    }
}

/// Shifted mean: exact for constant rows.
fn mean_of(entries: &[(u32, f64)]) -> Option<f64> {
    let &(_, pivot) = entries.first()?;
    let shift: f64 = entries.iter().map(|&(_, r)| r - pivot).sum();
    Some(pivot + shift / entries.len() as f64)
}


#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;

    #[test]
    fn table1_counts() {
        let m = table1();
        let s = m.summary();
        assert_eq!((s.users, s.items, s.entries), (4, 5, 11));
    }

    #[test]
    fn empty_input() {
        let m = RatingMatrix::from_triples(Vec::new(), Scale::default(), DuplicatePolicy::LastWins).unwrap();
        assert_eq!(m.summary().to_string(), "0 users, 0 items, 0 ratings");
        assert_eq!(m.global_mean(), None);
    }

    #[test]
    fn rejects_out_of_scale() {
        let err = RatingMatrix::from_triples(
            vec![Triple::new("A", "x", 6.0)],
            Scale::new(0.0, 5.0).unwrap(),
            DuplicatePolicy::LastWins,
        )
        .unwrap_err();
        match err {
            Error::RatingOutOfScale { user, item, rating, .. } => {
                assert_eq!((user.as_str(), item.as_str(), rating), ("A", "x", 6.0));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicate_policies() {
        let triples = vec![Triple::new("A", "x", 1.0), Triple::new("A", "x", 2.0)];
        let m = RatingMatrix::from_triples(triples.clone(), Scale::default(), DuplicatePolicy::LastWins).unwrap();
        assert_eq!(m.num_entries(), 1);
        assert_eq!(m.summary().duplicates, 1);
        assert_eq!(m.rating(UserId(0), ItemId(0)), Some(2.0));

        let err = RatingMatrix::from_triples(triples, Scale::default(), DuplicatePolicy::Strict).unwrap_err();
        assert!(matches!(err, Error::DuplicateRating { .. }));
    }

    #[test]
    fn rows_and_columns() {
        let m = table1();
        let a = m.user_handle("A").unwrap();
        let row: Vec<_> = m
            .user_row(a)
            .unwrap()
            .iter()
            .map(|(i, r)| (m.item_label(ItemId(i)).to_string(), r))
            .collect();
        assert_eq!(
            row,
            vec![
                ("type1".to_string(), 3.0),
                ("type2".to_string(), 4.0),
                ("type4".to_string(), 3.5)
            ]
        );

        let c = m.user_handle("C").unwrap();
        let row: Vec<_> = m.user_row(c).unwrap().iter().collect();
        let t2 = m.item_handle("type2").unwrap().0;
        let t5 = m.item_handle("type5").unwrap().0;
        assert_eq!(row, vec![(t2, 3.5), (t5, 3.0)]);

        let col: Vec<_> = m
            .item_column(ItemId(t2))
            .unwrap()
            .iter()
            .map(|(u, r)| (m.user_label(UserId(u)).to_string(), r))
            .collect();
        assert_eq!(col, vec![("A".into(), 4.0), ("C".into(), 3.5), ("D".into(), 4.0)]);

        let t3 = m.item_handle("type3").unwrap();
        let col: Vec<_> = m.item_column(t3).unwrap().iter().collect();
        assert_eq!(col, vec![(m.user_handle("B").unwrap().0, 4.5)]);

        assert!(matches!(m.item_column(ItemId(99)), Err(Error::UnknownItem(_))));
        assert!(matches!(m.user_row(UserId(99)), Err(Error::UnknownUser(_))));
    }

    #[test]
    fn user_without_ratings_has_empty_row() {
        let users = Catalog::from_labels(["A", "B"]).unwrap();
        let items = Catalog::from_labels(["x"]).unwrap();
        let m = RatingMatrix::from_parts(users, items, Scale::default(), vec![(UserId(0), ItemId(0), 4.0)]).unwrap();
        assert!(m.user_row(UserId(1)).unwrap().is_empty());
        assert!(matches!(m.user_mean(UserId(1)), Err(Error::NoRatings(_))));
    }

    #[test]
    fn means() {
        let m = table1();
        assert_eq!(
            m.user_mean(m.user_handle("A").unwrap()).unwrap(),
            (3.0 + 4.0 + 3.5) / 3.0
        );
        assert_eq!(m.user_mean(m.user_handle("A").unwrap()).unwrap(), 3.5);
        assert_eq!(m.user_mean(m.user_handle("C").unwrap()).unwrap(), 3.25);

        let single = RatingMatrix::from_triples(
            vec![Triple::new("u", "i", 4.0)],
            Scale::default(),
            DuplicatePolicy::Strict,
        )
        .unwrap();
        assert_eq!(single.user_mean(UserId(0)).unwrap(), 4.0);
    }

    #[test]
    fn handles_follow_first_appearance() {
        let m = table1();
        assert_eq!(m.users().labels(), &["A", "B", "C", "D"]);
        assert_eq!(m.items().labels(), &["type1", "type2", "type4", "type3", "type5"]);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn arb_triples() -> impl Strategy<Value = Vec<Triple>> {
            prop::collection::vec((0u8..12, 0u8..12, 0u8..=20), 0..80).prop_map(|v| {
                v.into_iter()
                    .map(|(u, i, r)| Triple::new(format!("u{u}"), format!("i{i}"), r as f64 * 0.5))
                    .collect()
            })
        }

        proptest! {
            #[test]
            fn indices_agree(triples in arb_triples()) {
                let m = RatingMatrix::from_triples(triples, Scale::default(), DuplicatePolicy::LastWins).unwrap();
                let mut a: Vec<_> = m.triples().map(|(u, i, r)| (u.0, i.0, r.to_bits())).collect();
                let mut b: Vec<_> = m.triples_by_item().map(|(u, i, r)| (u.0, i.0, r.to_bits())).collect();
                a.sort();
                b.sort();
                prop_assert_eq!(a.len(), m.num_entries());
                prop_assert_eq!(a, b);
            }

            #[test]
            fn mean_of_constant_row_is_exact(v in 0.0f64..10.0, n in 1usize..40) {
                let triples = (0..n).map(|i| Triple::new("u", format!("i{i}"), v));
                let m = RatingMatrix::from_triples(triples, Scale::default(), DuplicatePolicy::Strict).unwrap();
                prop_assert_eq!(m.user_mean(UserId(0)).unwrap(), v);
            }
        }
    }
}
