//! Finite unions of dyadic intervals in canonical form.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::dyadic::{DyadicInterval, MAX_DEPTH};
use crate::rational::{dyadic, Rational};

/// A finite union of dyadic intervals, stored as the sorted list of its
/// maximal dyadic pieces. Two sets are equal as point sets iff their pieces
/// are equal.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "Vec<DyadicInterval>", into = "Vec<DyadicInterval>")]
pub struct DyadicSet {
    pieces: Vec<DyadicInterval>,
}

/// Left endpoint in units of `2^{-MAX_DEPTH}`.
fn start_units(i: DyadicInterval) -> u64 {
    i.k << (MAX_DEPTH - i.n)
}

fn len_units(i: DyadicInterval) -> u64 {
    1u64 << (MAX_DEPTH - i.n)
}

fn end_units(i: DyadicInterval) -> u64 {
    start_units(i) + len_units(i)
}

impl DyadicSet {
    pub fn empty() -> Self {
        DyadicSet::default()
    }

    pub fn interval(i: DyadicInterval) -> Self {
        DyadicSet { pieces: vec![i] }
    }

    pub fn from_intervals<I: IntoIterator<Item = DyadicInterval>>(intervals: I) -> Self {
        let mut all: Vec<_> = intervals.into_iter().collect();
        all.sort_by_key(|&i| (start_units(i), i.n));
        let mut stack: Vec<DyadicInterval> = Vec::with_capacity(all.len());
        let mut covered_to = 0u64;
        for interval in all {
            if end_units(interval) <= covered_to {
                continue;
            }
            covered_to = end_units(interval);
            stack.push(interval);
            while stack.len() >= 2 {
                let b = stack[stack.len() - 1];
                let a = stack[stack.len() - 2];
                if a.n == b.n && a.n > 0 && a.parent() == b.parent() {
                    stack.truncate(stack.len() - 2);
                    stack.push(a.parent().expect("nonzero generation"));
                } else {
                    break;
                }
            }
        }
        DyadicSet { pieces: stack }
    }

    pub fn pieces(&self) -> &[DyadicInterval] {
        &self.pieces
    }

    pub fn is_empty(&self) -> bool {
        self.pieces.is_empty()
    }

    /// Measure in units of `2^{-62}`; exact and at most `2^62`.
    pub fn measure_units(&self) -> u64 {
        self.pieces.iter().map(|&i| len_units(i)).sum()
    }

    pub fn measure(&self) -> Rational {
        Rational::from_integer(self.measure_units().into()) * dyadic(MAX_DEPTH)
    }

    pub fn union(&self, other: &DyadicSet) -> DyadicSet {
        DyadicSet::from_intervals(self.pieces.iter().chain(&other.pieces).copied())
    }

    pub fn intersection(&self, other: &DyadicSet) -> DyadicSet {
        let (a, b) = (&self.pieces, &other.pieces);
        let (mut i, mut j) = (0, 0);
        let mut out = Vec::new();
        while i < a.len() && j < b.len() {
            let (x, y) = (a[i], b[j]);
            if x.contains(y) {
                out.push(y);
                j += 1;
            } else if y.contains(x) {
                out.push(x);
                i += 1;
            } else if end_units(x) <= start_units(y) {
                i += 1;
            } else {
                j += 1;
            }
        }
        DyadicSet::from_intervals(out)
    }

    pub fn intersection_units(&self, other: &DyadicSet) -> u64 {
        self.intersection(other).measure_units()
    }

    /// Measure of `self ∩ interval`, in units of `2^{-62}`.
    pub fn intersection_units_with(&self, interval: DyadicInterval) -> u64 {
        let lo = start_units(interval);
        let hi = end_units(interval);
        let first = self.pieces.partition_point(|&p| end_units(p) <= lo);
        let mut total = 0;
        for &p in &self.pieces[first..] {
            if start_units(p) >= hi {
                break;
            }
            total += if interval.contains(p) {
                len_units(p)
            } else {
                len_units(interval)
            };
        }
        total
    }

    pub fn contains_interval(&self, interval: DyadicInterval) -> bool {
        self.intersection_units_with(interval) == len_units(interval)
    }

    pub fn is_subset(&self, other: &DyadicSet) -> bool {
        self.pieces.iter().all(|&p| other.contains_interval(p))
    }

    pub fn is_disjoint(&self, other: &DyadicSet) -> bool {
        self.intersection(other).is_empty()
    }

    /// Disjoint or one contains the other.
    pub fn is_nested_with(&self, other: &DyadicSet) -> bool {
        let common = self.intersection(other);
        common.is_empty() || common == *self || common == *other
    }
}

impl From<Vec<DyadicInterval>> for DyadicSet {
    fn from(intervals: Vec<DyadicInterval>) -> Self {
        DyadicSet::from_intervals(intervals)
    }
}

impl From<DyadicSet> for Vec<DyadicInterval> {
    fn from(set: DyadicSet) -> Self {
        set.pieces
    }
}

impl fmt::Display for DyadicSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.pieces.is_empty() {
            return write!(f, "∅");
        }
        for (idx, piece) in self.pieces.iter().enumerate() {
            if idx > 0 {
                write!(f, " ∪ ")?;
            }
            write!(f, "{piece}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::rat;

    fn iv(n: u32, k: u64) -> DyadicInterval {
        DyadicInterval::new(n, k).unwrap()
    }

    #[test]
    fn siblings_merge_and_contained_pieces_vanish() {
        let set = DyadicSet::from_intervals([iv(2, 1), iv(2, 0), iv(1, 1), iv(3, 7)]);
        assert_eq!(set.pieces(), &[iv(0, 0)]);
        let set = DyadicSet::from_intervals([iv(2, 0), iv(2, 2)]);
        assert_eq!(set.pieces(), &[iv(2, 0), iv(2, 2)]);
        assert_eq!(set.measure(), rat(1, 2));
    }

    #[test]
    fn set_algebra() {
        let a = DyadicSet::from_intervals([iv(1, 0)]);
        let b = DyadicSet::from_intervals([iv(2, 1), iv(2, 2)]);
        assert_eq!(a.intersection(&b).pieces(), &[iv(2, 1)]);
        assert_eq!(a.union(&b).measure(), rat(3, 4));
        assert!(!a.is_disjoint(&b));
        assert!(!a.is_nested_with(&b));
        assert!(DyadicSet::interval(iv(2, 1)).is_subset(&a));
        assert_eq!(b.intersection_units_with(iv(0, 0)), b.measure_units());
        assert_eq!(b.intersection_units_with(iv(3, 2)), 1 << 59);
        assert!(!b.contains_interval(iv(1, 1)));
        assert!(b.contains_interval(iv(3, 4)));
    }

    #[test]
    fn serde_canonicalizes() {
        let set: DyadicSet =
            serde_json::from_str(r#"[{"n":1,"k":1},{"n":1,"k":0}]"#).unwrap();
        assert_eq!(set.pieces(), &[iv(0, 0)]);
        assert_eq!(serde_json::to_string(&set).unwrap(), r#"[{"n":0,"k":0}]"#);
    }
}
