use std::collections::HashMap;

use crate::data::{ItemId, RatingMatrix};

/// Symmetric item x item counts of users who rated both items. The diagonal
/// is never stored and reads as zero.
#[derive(Clone, Debug, PartialEq)]
pub struct CooccurrenceMatrix {
    rows: Vec<Vec<(u32, u32)>>,
}

impl CooccurrenceMatrix {
    /// Every unordered pair in a user's item list adds one to `C[i][j]` and `C[j][i]`.
    pub fn build(m: &RatingMatrix) -> Self {
        let mut acc: Vec<HashMap<u32, u32>> = vec![HashMap::new(); m.num_items()];
        for u in 0..m.num_users() {
            let row = m.user_entries(crate::data::UserId(u as u32));
            for (pos, &(i, _)) in row.iter().enumerate() {
                for &(j, _) in &row[pos + 1..] {
                    *acc[i as usize].entry(j).or_insert(0) += 1;
                    *acc[j as usize].entry(i).or_insert(0) += 1;
                }
            }
        }
        let rows = acc
            .into_iter()
            .map(|map| {
                let mut row: Vec<_> = map.into_iter().collect();
                row.sort_unstable();
                row
            })
            .collect();
        CooccurrenceMatrix { rows }
    }

    pub fn num_items(&self) -> usize {
        self.rows.len()
    }

    pub fn get(&self, i: ItemId, j: ItemId) -> u32 {
        if i == j {
            return 0;
        }
        self.rows
            .get(i.index())
            .and_then(|row| row.binary_search_by_key(&j.0, |&(k, _)| k).ok().map(|p| row[p].1))
            .unwrap_or(0)
    }

    /// Nonzero off-diagonal counts for item `i`, ascending by partner.
    pub fn row(&self, i: ItemId) -> &[(u32, u32)] {
        self.rows.get(i.index()).map_or(&[], Vec::as_slice)
    }

    /// Number of stored unordered pairs.
    pub fn num_pairs(&self) -> usize {
        self.rows.iter().map(Vec::len).sum::<usize>() / 2
    }
}

pub fn build_cooccurrence(m: &RatingMatrix) -> CooccurrenceMatrix {
    CooccurrenceMatrix::build(m)
}
