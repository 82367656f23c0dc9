use alloc::collections::BTreeMap;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Items by raters matrix of category labels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RatingTable {
    ratings: Vec<Vec<u32>>,
}

impl RatingTable {
    pub fn new(ratings: Vec<Vec<u32>>) -> Result<Self> {
        let raters = ratings.first().map_or(0, Vec::len);
        if ratings.is_empty() {
            return Err(Error::Config("rating table has no items".into()));
        }
        if raters < 2 {
            return Err(Error::Config("rating table needs at least two raters".into()));
        }
        if ratings.iter().any(|r| r.len() != raters) {
            return Err(Error::Config("every item needs the same number of raters".into()));
        }
        Ok(RatingTable { ratings })
    }

    pub fn items(&self) -> &[Vec<u32>] {
        &self.ratings
    }

    pub fn raters(&self) -> usize {
        self.ratings[0].len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Kappa {
    pub value: f64,
    /// Set when every rating falls in one category and chance agreement is 1.
    pub degenerate: bool,
}

pub fn fleiss_kappa(table: &RatingTable) -> Kappa {
    let n = table.raters() as f64;
    let items = table.items().len() as f64;
    let mut totals: BTreeMap<u32, f64> = BTreeMap::new();
    let mut p_bar = 0.0;
    for item in table.items() {
        let mut counts: BTreeMap<u32, f64> = BTreeMap::new();
        for &r in item {
            *counts.entry(r).or_default() += 1.0;
            *totals.entry(r).or_default() += 1.0;
        }
        let agree: f64 = counts.values().map(|c| c * (c - 1.0)).sum();
        p_bar += agree / (n * (n - 1.0));
    }
    p_bar /= items;
    let total = items * n;
    let p_e: f64 = totals.values().map(|c| (c / total) * (c / total)).sum();
    if (1.0 - p_e).abs() < 1e-12 {
        return Kappa {
            value: 1.0,
            degenerate: true,
        };
    }
    Kappa {
        value: (p_bar - p_e) / (1.0 - p_e),
        degenerate: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    #[test]
    fn hand_example() {
        let t = RatingTable::new(vec![vec![0, 0], vec![0, 1]]).unwrap();
        let k = fleiss_kappa(&t);
        assert!((k.value + 1.0 / 3.0).abs() < 1e-12);
        assert!(!k.degenerate);
    }

    #[test]
    fn full_agreement() {
        let t = RatingTable::new(vec![vec![2, 2, 2], vec![0, 0, 0], vec![1, 1, 1]]).unwrap();
        let k = fleiss_kappa(&t);
        assert!((k.value - 1.0).abs() < 1e-12);
        assert!(!k.degenerate);
        let one = RatingTable::new(vec![vec![1, 1], vec![1, 1]]).unwrap();
        assert_eq!(
            fleiss_kappa(&one),
            Kappa {
                value: 1.0,
                degenerate: true
            }
        );
    }

    #[test]
    fn rejects_malformed_tables() {
        assert!(RatingTable::new(vec![]).is_err());
        assert!(RatingTable::new(vec![vec![0]]).is_err());
        assert!(RatingTable::new(vec![vec![0, 1], vec![0]]).is_err());
    }

    fn table() -> impl Strategy<Value = Vec<Vec<u32>>> {
        (2usize..5, 1usize..8).prop_flat_map(|(raters, items)| {
            proptest::collection::vec(proptest::collection::vec(0u32..3, raters), items)
        })
    }

    proptest! {
        #[test]
        fn invariant_under_relabel_and_permutation(rows in table(), perm in 0usize..6, shift in 0usize..8) {
            let base = fleiss_kappa(&RatingTable::new(rows.clone()).unwrap());
            prop_assert!(base.value <= 1.0 + 1e-12 && base.value >= -1.0 - 1e-12);
            let maps = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
            let map = maps[perm];
            let items = rows.len();
            let mut changed: Vec<Vec<u32>> = (0..items)
                .map(|i| {
                    let mut r: Vec<u32> = rows[(i + shift) % items].iter().map(|&c| map[c as usize] + 7).collect();
                    let k = shift % r.len();
                    r.rotate_left(k);
                    r
                })
                .collect();
            changed.reverse();
            let other = fleiss_kappa(&RatingTable::new(changed).unwrap());
            prop_assert_eq!(base.degenerate, other.degenerate);
            prop_assert!((base.value - other.value).abs() < 1e-9);
        }
    }
}
