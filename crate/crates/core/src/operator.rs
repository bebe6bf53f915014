//! Sparse rational operator matrices on `𝒟^N`.

use std::collections::BTreeMap;

use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::block::{Sign, SignAssignment};
use crate::dyadic::DyadicInterval;
use crate::error::{Error, Result};
use crate::haar::HaarVector;
use crate::rational::{dyadic, int, serde_rational, sqrt_bounds, Rational};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormBoundSource {
    #[default]
    Supplied,
    Estimated,
}

/// `T h_I = Σ_J t_{J,I} h_J` for `I, J ∈ 𝒟^N`, stored column by column.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "OperatorJson", into = "OperatorJson")]
pub struct OperatorMatrix {
    depth: u32,
    norm_bound: Rational,
    norm_bound_source: NormBoundSource,
    columns: BTreeMap<DyadicInterval, BTreeMap<DyadicInterval, Rational>>,
}

#[derive(Serialize, Deserialize)]
struct OperatorJson {
    depth: u32,
    #[serde(with = "serde_rational")]
    norm_bound: Rational,
    #[serde(default)]
    norm_bound_source: NormBoundSource,
    entries: Vec<EntryJson>,
}

#[derive(Serialize, Deserialize)]
struct EntryJson {
    row: DyadicInterval,
    col: DyadicInterval,
    #[serde(with = "serde_rational")]
    value: Rational,
}

impl TryFrom<OperatorJson> for OperatorMatrix {
    type Error = Error;

    fn try_from(json: OperatorJson) -> Result<Self> {
        let mut t = OperatorMatrix::zero(json.depth);
        if json.norm_bound.is_negative() {
            return Err(Error::Parse("norm_bound must be nonnegative".into()));
        }
        t.norm_bound = json.norm_bound;
        t.norm_bound_source = json.norm_bound_source;
        for e in json.entries {
            t.add_entry(e.row, e.col, &e.value)?;
        }
        Ok(t)
    }
}

impl From<OperatorMatrix> for OperatorJson {
    fn from(t: OperatorMatrix) -> Self {
        let mut entries = Vec::new();
        for (col, rows) in t.columns {
            for (row, value) in rows {
                entries.push(EntryJson { row, col, value });
            }
        }
        OperatorJson {
            depth: t.depth,
            norm_bound: t.norm_bound,
            norm_bound_source: t.norm_bound_source,
            entries,
        }
    }
}

impl OperatorMatrix {
    pub fn zero(depth: u32) -> Self {
        OperatorMatrix {
            depth,
            norm_bound: Rational::zero(),
            norm_bound_source: NormBoundSource::Estimated,
            columns: BTreeMap::new(),
        }
    }

    pub fn identity(depth: u32) -> Self {
        OperatorMatrix::scaled_identity(depth, &Rational::one())
    }

    pub fn scaled_identity(depth: u32, scale: &Rational) -> Self {
        let mut t = OperatorMatrix::zero(depth);
        for i in crate::dyadic::tree(depth) {
            t.set(i, i, scale.clone()).expect("inside the tree");
        }
        t.norm_bound = scale.abs();
        t
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("operator serializes")
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn norm_bound(&self) -> &Rational {
        &self.norm_bound
    }

    pub fn norm_bound_source(&self) -> NormBoundSource {
        self.norm_bound_source
    }

    pub fn set_norm_bound(&mut self, bound: Rational, source: NormBoundSource) {
        self.norm_bound = bound;
        self.norm_bound_source = source;
    }

    fn check(&self, interval: DyadicInterval) -> Result<()> {
        if interval.n > self.depth {
            return Err(Error::DepthBudget {
                n: interval.n,
                budget: self.depth,
            });
        }
        Ok(())
    }

    pub fn set(&mut self, row: DyadicInterval, col: DyadicInterval, value: Rational) -> Result<()> {
        self.check(row)?;
        self.check(col)?;
        let column = self.columns.entry(col).or_default();
        if value.is_zero() {
            column.remove(&row);
            if column.is_empty() {
                self.columns.remove(&col);
            }
        } else {
            column.insert(row, value);
        }
        Ok(())
    }

    pub fn add_entry(&mut self, row: DyadicInterval, col: DyadicInterval, value: &Rational) -> Result<()> {
        let current = self.get(row, col);
        self.set(row, col, current + value)
    }

    /// `t_{row, col}`.
    pub fn get(&self, row: DyadicInterval, col: DyadicInterval) -> Rational {
        self.columns
            .get(&col)
            .and_then(|c| c.get(&row))
            .cloned()
            .unwrap_or_else(Rational::zero)
    }

    pub fn diagonal(&self, interval: DyadicInterval) -> Rational {
        self.get(interval, interval)
    }

    /// Nonzero entries `(row, value)` of the column of `col`.
    pub fn column(&self, col: DyadicInterval) -> impl Iterator<Item = (DyadicInterval, &Rational)> + '_ {
        self.columns
            .get(&col)
            .into_iter()
            .flat_map(|c| c.iter().map(|(&r, v)| (r, v)))
    }

    pub fn entries(&self) -> impl Iterator<Item = (DyadicInterval, DyadicInterval, &Rational)> + '_ {
        self.columns
            .iter()
            .flat_map(|(&col, rows)| rows.iter().map(move |(&row, v)| (row, col, v)))
    }

    pub fn entry_count(&self) -> usize {
        self.columns.values().map(BTreeMap::len).sum()
    }

    pub fn is_diagonal(&self) -> bool {
        self.entries().all(|(r, c, _)| r == c)
    }

    /// `T h_col` as a Haar vector.
    pub fn column_vector(&self, col: DyadicInterval) -> HaarVector {
        HaarVector::from_pairs(self.column(col).map(|(r, v)| (r, v.clone())))
    }

    /// `T f`; coefficients of `f` beyond the depth are ignored.
    pub fn apply(&self, f: &HaarVector) -> HaarVector {
        let mut out = HaarVector::zero();
        for (col, a) in f.iter() {
            if let Some(rows) = self.columns.get(&col) {
                for (&row, t) in rows {
                    out.add_to(row, &(t * a));
                }
            }
        }
        out
    }

    /// `c_I = ⟨T h_I, b⟩ / |I|`, so that `⟨T f, b⟩ = ⟨f, c⟩`.
    pub fn adjoint_apply(&self, b: &HaarVector) -> HaarVector {
        let mut out = HaarVector::zero();
        for (&col, rows) in &self.columns {
            let mut pairing = Rational::zero();
            for (&row, t) in rows {
                if let Some(bj) = b.get(row) {
                    pairing += t * bj * dyadic(row.n);
                }
            }
            if !pairing.is_zero() {
                out.set(col, pairing / dyadic(col.n));
            }
        }
        out
    }

    /// `t'_{J,I} = σ_J t_{J,I} σ_I`; unassigned intervals count as `+`.
    pub fn conjugate_by_signs(&self, signs: &SignAssignment) -> OperatorMatrix {
        let mut out = OperatorMatrix {
            depth: self.depth,
            norm_bound: self.norm_bound.clone(),
            norm_bound_source: self.norm_bound_source,
            columns: BTreeMap::new(),
        };
        for (&col, rows) in &self.columns {
            let sc = signs.sign_or_plus(col);
            let column = rows
                .iter()
                .map(|(&row, v)| {
                    let s = signs.sign_or_plus(row) * sc;
                    (row, if s == Sign::Plus { v.clone() } else { -v })
                })
                .collect();
            out.columns.insert(col, column);
        }
        out
    }

    /// `t'_{J,I} = t_{J,I} σ_I`, that is `T Σ`.
    pub fn flip_columns(&self, signs: &SignAssignment) -> OperatorMatrix {
        let mut out = self.clone();
        for (col, rows) in out.columns.iter_mut() {
            if !signs.sign_or_plus(*col).is_plus() {
                for v in rows.values_mut() {
                    *v = -v.clone();
                }
            }
        }
        out
    }

    /// `Id - T`.
    pub fn complement(&self) -> OperatorMatrix {
        let mut out = OperatorMatrix::identity(self.depth);
        for (row, col, v) in self.entries() {
            out.add_entry(row, col, &-v).expect("same depth");
        }
        out.norm_bound = &self.norm_bound + int(1);
        out.norm_bound_source = self.norm_bound_source;
        out
    }

    /// A rigorous bound on the `SL∞` operator norm on `𝒟^N`.
    ///
    /// For a diagonal matrix this is `max |t_{I,I}|`. Otherwise the
    /// off-diagonal part `E` is bounded through `|a_I| <= ‖f‖`: each output
    /// coefficient is at most `‖f‖` times a row `ℓ¹` sum, and at most `N+1`
    /// of them stack over a point, so `‖E‖ <= sqrt(N+1) max_J Σ_I |e_{J,I}|`.
    pub fn estimate_norm_bound(&self) -> Rational {
        let mut diag = Rational::zero();
        let mut rows: BTreeMap<DyadicInterval, Rational> = BTreeMap::new();
        for (row, col, v) in self.entries() {
            if row == col {
                if v.abs() > diag {
                    diag = v.abs();
                }
            } else {
                *rows.entry(row).or_insert_with(Rational::zero) += v.abs();
            }
        }
        let off = rows.into_values().max().unwrap_or_else(Rational::zero);
        if off.is_zero() {
            return diag;
        }
        let (_, root) = sqrt_bounds(&int(self.depth as i64 + 1));
        diag + off * root
    }

    pub fn with_estimated_norm_bound(mut self) -> Self {
        self.norm_bound = self.estimate_norm_bound();
        self.norm_bound_source = NormBoundSource::Estimated;
        self
    }

    /// SHA-256 of the canonical JSON form.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.to_json().as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::haar::inner_product;
    use crate::rational::rat;

    fn iv(n: u32, k: u64) -> DyadicInterval {
        DyadicInterval::new(n, k).unwrap()
    }

    #[test]
    fn identity_applies_trivially() {
        let t = OperatorMatrix::identity(3);
        assert_eq!(t.entry_count(), 15);
        let f = HaarVector::from_pairs([(iv(0, 0), rat(1, 3)), (iv(3, 5), int(2))]);
        assert_eq!(t.apply(&f), f);
        assert_eq!(t.adjoint_apply(&f), f);
        assert_eq!(t.estimate_norm_bound(), int(1));
    }

    #[test]
    fn adjoint_pairing_identity() {
        let mut t = OperatorMatrix::identity(2);
        t.set(iv(2, 1), iv(0, 0), rat(1, 4)).unwrap();
        t.set(iv(0, 0), iv(1, 1), rat(-3, 5)).unwrap();
        let f = HaarVector::from_pairs([(iv(0, 0), int(2)), (iv(1, 1), rat(1, 7))]);
        let b = HaarVector::from_pairs([(iv(0, 0), int(-1)), (iv(2, 1), int(3))]);
        assert_eq!(inner_product(&t.apply(&f), &b), inner_product(&f, &t.adjoint_apply(&b)));
    }

    #[test]
    fn conjugation_flips_entries() {
        let mut t = OperatorMatrix::zero(1);
        t.set(iv(0, 0), iv(0, 0), int(-1)).unwrap();
        t.set(iv(1, 0), iv(0, 0), int(2)).unwrap();
        let mut signs = SignAssignment::new();
        signs.insert(iv(0, 0), Sign::Minus);
        let c = t.conjugate_by_signs(&signs);
        assert_eq!(c.diagonal(iv(0, 0)), int(-1));
        assert_eq!(c.get(iv(1, 0), iv(0, 0)), int(-2));
    }

    #[test]
    fn out_of_depth_entries_are_rejected() {
        let mut t = OperatorMatrix::zero(1);
        assert!(t.set(iv(2, 0), iv(0, 0), int(1)).is_err());
        let text = r#"{"depth":1,"norm_bound":"1","entries":[{"row":{"n":2,"k":0},"col":{"n":0,"k":0},"value":"1"}]}"#;
        assert!(OperatorMatrix::from_json(text).is_err());
    }

    #[test]
    fn json_round_trip_and_digest() {
        let mut t = OperatorMatrix::identity(1);
        t.set(iv(1, 1), iv(0, 0), rat(1, 3)).unwrap();
        let t = t.with_estimated_norm_bound();
        let back = OperatorMatrix::from_json(&t.to_json()).unwrap();
        assert_eq!(back, t);
        assert_eq!(back.digest(), t.digest());
        assert_eq!(t.digest().len(), 64);
        let supplied = r#"{"depth":0,"norm_bound":"2","entries":[]}"#;
        assert_eq!(
            OperatorMatrix::from_json(supplied).unwrap().norm_bound_source(),
            NormBoundSource::Supplied
        );
    }

    #[test]
    fn complement_of_identity_is_zero() {
        let c = OperatorMatrix::identity(2).complement();
        assert_eq!(c.entry_count(), 0);
    }
}
