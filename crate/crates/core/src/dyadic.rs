//! Dyadic subintervals of `[0, 1)`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rational::{dyadic, Rational};

/// Deepest generation representable: positions and ordering numbers must fit
/// in a `u64`.
pub const MAX_DEPTH: u32 = 62;

/// The half-open interval `[k 2^{-n}, (k+1) 2^{-n})`.
///
/// The derived order compares `(n, k)` lexicographically, which is exactly
/// the breadth-first ordering number.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "RawInterval")]
pub struct DyadicInterval {
    pub n: u32,
    pub k: u64,
}

#[derive(Deserialize)]
struct RawInterval {
    n: u32,
    k: u64,
}

impl TryFrom<RawInterval> for DyadicInterval {
    type Error = Error;

    fn try_from(raw: RawInterval) -> Result<Self> {
        DyadicInterval::new(raw.n, raw.k)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Relation {
    Equal,
    Subset,
    Superset,
    Disjoint,
}

impl DyadicInterval {
    pub const UNIT: DyadicInterval = DyadicInterval { n: 0, k: 0 };

    pub fn new(n: u32, k: u64) -> Result<Self> {
        if n > MAX_DEPTH || k >= 1u64 << n {
            return Err(Error::InvalidInterval { n, k });
        }
        Ok(DyadicInterval { n, k })
    }

    /// Breadth-first number `2^n - 1 + k`.
    pub fn ordering(self) -> u64 {
        (1u64 << self.n) - 1 + self.k
    }

    pub fn from_ordering(i: u64) -> Self {
        let n = 63 - (i + 1).leading_zeros();
        DyadicInterval {
            n,
            k: i + 1 - (1u64 << n),
        }
    }

    pub fn left(self) -> Self {
        DyadicInterval {
            n: self.n + 1,
            k: 2 * self.k,
        }
    }

    pub fn right(self) -> Self {
        DyadicInterval {
            n: self.n + 1,
            k: 2 * self.k + 1,
        }
    }

    pub fn halves(self) -> (Self, Self) {
        (self.left(), self.right())
    }

    pub fn parent(self) -> Option<Self> {
        (self.n > 0).then(|| DyadicInterval {
            n: self.n - 1,
            k: self.k / 2,
        })
    }

    pub fn is_left_child(self) -> bool {
        self.n > 0 && self.k % 2 == 0
    }

    /// The ancestor at generation `m <= n`.
    pub fn ancestor(self, m: u32) -> Self {
        assert!(m <= self.n);
        DyadicInterval {
            n: m,
            k: self.k >> (self.n - m),
        }
    }

    pub fn contains(self, other: Self) -> bool {
        other.n >= self.n && other.k >> (other.n - self.n) == self.k
    }

    pub fn relation(self, other: Self) -> Relation {
        if self == other {
            Relation::Equal
        } else if other.contains(self) {
            Relation::Subset
        } else if self.contains(other) {
            Relation::Superset
        } else {
            Relation::Disjoint
        }
    }

    pub fn measure(self) -> Rational {
        dyadic(self.n)
    }

    /// Left endpoint as a numerator over `2^n`.
    pub fn start(self) -> Rational {
        Rational::from_integer(self.k.into()) * dyadic(self.n)
    }

    pub fn end(self) -> Rational {
        Rational::from_integer((self.k + 1).into()) * dyadic(self.n)
    }

    /// `start()` as a float; exact for `n <= 52`.
    pub fn start_f64(self) -> f64 {
        self.k as f64 * self.measure_f64()
    }

    pub fn measure_f64(self) -> f64 {
        (-(self.n as f64)).exp2()
    }

    /// Descendants at generation `m >= n`, in position order.
    pub fn descendants(self, m: u32) -> impl Iterator<Item = DyadicInterval> {
        assert!(m >= self.n);
        let shift = m - self.n;
        let first = self.k << shift;
        (first..first + (1u64 << shift)).map(move |k| DyadicInterval { n: m, k })
    }

    /// The Haar function of this interval, evaluated on the leaf `leaf`
    /// (a finer or equal interval): `+1`, `-1` or `0`.
    pub fn haar_sign_on(self, leaf: Self) -> i8 {
        if leaf.n <= self.n || !self.contains(leaf) {
            return 0;
        }
        if self.left().contains(leaf) {
            1
        } else {
            -1
        }
    }
}

impl fmt::Display for DyadicInterval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let den = 1u128 << self.n;
        let a = fraction(self.k as u128, den);
        let b = fraction(self.k as u128 + 1, den);
        write!(f, "[{a}, {b})")
    }
}

fn fraction(num: u128, den: u128) -> String {
    if num == 0 {
        return "0".into();
    }
    let shift = num.trailing_zeros().min(den.trailing_zeros());
    let (num, den) = (num >> shift, den >> shift);
    if den == 1 {
        format!("{num}")
    } else {
        format!("{num}/{den}")
    }
}

/// All `2^m` intervals of generation `m`, in position order.
pub fn level_grid(m: u32, budget: u32) -> Result<Vec<DyadicInterval>> {
    if m > budget || m > MAX_DEPTH {
        return Err(Error::DepthBudget { n: m, budget });
    }
    Ok(DyadicInterval::UNIT.descendants(m).collect())
}

/// Every interval of `𝒟^N` (generations `0..=depth`) in ordering order.
pub fn tree(depth: u32) -> impl Iterator<Item = DyadicInterval> {
    (0..(1u64 << (depth + 1)) - 1).map(DyadicInterval::from_ordering)
}

/// Intervals of `𝒟^max_depth` inside `[1 - 2^{-k}, 1 - 2^{-k-1})`.
///
/// The collections for `k = 0, 1, ...` sit on pairwise disjoint pieces of
/// `[0, 1)`, each a rescaled copy of the whole tree.
pub fn pelczynski_collection(k: u32, max_depth: u32) -> Vec<DyadicInterval> {
    if k + 1 > max_depth {
        return Vec::new();
    }
    // The piece is the dyadic interval of generation k+1 at position 2^{k+1} - 2.
    let root = DyadicInterval {
        n: k + 1,
        k: (1u64 << (k + 1)) - 2,
    };
    (root.n..=max_depth)
        .flat_map(|m| root.descendants(m))
        .collect()
}

/// Serde helper for maps keyed by intervals: keys are written as ordering
/// numbers, since JSON object keys must be strings.
pub mod ordering_keys {
    use std::collections::BTreeMap;

    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use super::DyadicInterval;

    pub fn serialize<S: Serializer, V: Serialize>(
        map: &BTreeMap<DyadicInterval, V>,
        serializer: S,
    ) -> Result<S::Ok, S::Error> {
        map.iter()
            .map(|(i, v)| (i.ordering(), v))
            .collect::<BTreeMap<_, _>>()
            .serialize(serializer)
    }

    pub fn deserialize<'de, D: Deserializer<'de>, V: Deserialize<'de>>(
        deserializer: D,
    ) -> Result<BTreeMap<DyadicInterval, V>, D::Error> {
        Ok(BTreeMap::<u64, V>::deserialize(deserializer)?
            .into_iter()
            .map(|(o, v)| (DyadicInterval::from_ordering(o), v))
            .collect())
    }
}
