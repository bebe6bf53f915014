//! Block bases `b_I = Σ_{K ∈ 𝓑_I} ε_K h_K` and the operators `B`, `Q`, `P = BQ`.

use std::collections::BTreeMap;
use std::fmt;

use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use crate::dyadic::DyadicInterval;
use crate::error::{Error, Result};
use crate::haar::{inner_product, HaarVector};
use crate::jones::{check_jones, IntervalFamily};
use crate::rational::{dyadic, Rational};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub enum Sign {
    #[default]
    Plus,
    Minus,
}

impl Sign {
    pub fn from_bool(positive: bool) -> Self {
        if positive {
            Sign::Plus
        } else {
            Sign::Minus
        }
    }

    pub fn is_plus(self) -> bool {
        self == Sign::Plus
    }

    pub fn to_rational(self) -> Rational {
        match self {
            Sign::Plus => Rational::one(),
            Sign::Minus => -Rational::one(),
        }
    }

    pub fn to_i8(self) -> i8 {
        match self {
            Sign::Plus => 1,
            Sign::Minus => -1,
        }
    }

    pub fn flip(self) -> Self {
        match self {
            Sign::Plus => Sign::Minus,
            Sign::Minus => Sign::Plus,
        }
    }
}

impl std::ops::Mul for Sign {
    type Output = Sign;

    fn mul(self, rhs: Sign) -> Sign {
        Sign::from_bool(self == rhs)
    }
}

impl fmt::Display for Sign {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(if self.is_plus() { "+" } else { "-" })
    }
}

impl Serialize for Sign {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_i8(self.to_i8())
    }
}

impl<'de> Deserialize<'de> for Sign {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        match i8::deserialize(deserializer)? {
            1 => Ok(Sign::Plus),
            -1 => Ok(Sign::Minus),
            other => Err(serde::de::Error::custom(format!("sign must be 1 or -1, got {other}"))),
        }
    }
}

/// `ε_K` for the member intervals of a family. Serialized as a map from
/// ordering number to `1` / `-1`.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "BTreeMap<u64, Sign>", into = "BTreeMap<u64, Sign>")]
pub struct SignAssignment {
    signs: BTreeMap<DyadicInterval, Sign>,
}

impl From<BTreeMap<u64, Sign>> for SignAssignment {
    fn from(map: BTreeMap<u64, Sign>) -> Self {
        SignAssignment {
            signs: map
                .into_iter()
                .map(|(o, s)| (DyadicInterval::from_ordering(o), s))
                .collect(),
        }
    }
}

impl From<SignAssignment> for BTreeMap<u64, Sign> {
    fn from(a: SignAssignment) -> Self {
        a.signs.into_iter().map(|(i, s)| (i.ordering(), s)).collect()
    }
}

impl SignAssignment {
    pub fn new() -> Self {
        SignAssignment::default()
    }

    pub fn all_plus(intervals: impl IntoIterator<Item = DyadicInterval>) -> Self {
        SignAssignment {
            signs: intervals.into_iter().map(|i| (i, Sign::Plus)).collect(),
        }
    }

    pub fn get(&self, interval: DyadicInterval) -> Option<Sign> {
        self.signs.get(&interval).copied()
    }

    /// Sign of `interval`, `+` when unassigned.
    pub fn sign_or_plus(&self, interval: DyadicInterval) -> Sign {
        self.get(interval).unwrap_or(Sign::Plus)
    }

    pub fn insert(&mut self, interval: DyadicInterval, sign: Sign) {
        self.signs.insert(interval, sign);
    }

    pub fn extend(&mut self, other: &SignAssignment) {
        self.signs.extend(other.signs.iter().map(|(&i, &s)| (i, s)));
    }

    pub fn iter(&self) -> impl Iterator<Item = (DyadicInterval, Sign)> + '_ {
        self.signs.iter().map(|(&i, &s)| (i, s))
    }

    pub fn len(&self) -> usize {
        self.signs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.signs.is_empty()
    }

    /// Intervals carrying a minus sign.
    pub fn minus_set(&self) -> Vec<DyadicInterval> {
        self.iter().filter(|(_, s)| !s.is_plus()).map(|(i, _)| i).collect()
    }
}

/// A family together with signs and the materialized block vectors.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "BlockBasisJson", into = "BlockBasisJson")]
pub struct BlockBasis {
    family: IntervalFamily,
    signs: SignAssignment,
    vectors: BTreeMap<DyadicInterval, HaarVector>,
    norms_sq: BTreeMap<DyadicInterval, Rational>,
}

#[derive(Serialize, Deserialize)]
struct BlockBasisJson {
    family: IntervalFamily,
    signs: SignAssignment,
    #[serde(with = "norms_json")]
    norms_sq: BTreeMap<DyadicInterval, Rational>,
}

mod norms_json {
    use std::collections::BTreeMap;

    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use crate::dyadic::DyadicInterval;
    use crate::rational::{format_rational, parse_rational, Rational};

    pub fn serialize<S: Serializer>(
        map: &BTreeMap<DyadicInterval, Rational>,
        serializer: S,
    ) -> Result<S::Ok, S::Error> {
        map.iter()
            .map(|(i, v)| (i.ordering(), format_rational(v)))
            .collect::<BTreeMap<_, _>>()
            .serialize(serializer)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        deserializer: D,
    ) -> Result<BTreeMap<DyadicInterval, Rational>, D::Error> {
        BTreeMap::<u64, String>::deserialize(deserializer)?
            .into_iter()
            .map(|(o, v)| {
                parse_rational(&v)
                    .map(|r| (DyadicInterval::from_ordering(o), r))
                    .map_err(serde::de::Error::custom)
            })
            .collect()
    }
}

impl TryFrom<BlockBasisJson> for BlockBasis {
    type Error = Error;

    fn try_from(json: BlockBasisJson) -> Result<Self> {
        let basis = build_block_basis(&json.family, &json.signs)?;
        if basis.norms_sq != json.norms_sq {
            return Err(Error::VerificationFailed(
                "stored block norms disagree with the family".into(),
            ));
        }
        Ok(basis)
    }
}

impl From<BlockBasis> for BlockBasisJson {
    fn from(basis: BlockBasis) -> Self {
        BlockBasisJson {
            family: basis.family,
            signs: basis.signs,
            norms_sq: basis.norms_sq,
        }
    }
}

impl BlockBasis {
    /// Assembles the vectors without re-running the Jones check.
    pub(crate) fn assemble(family: IntervalFamily, signs: SignAssignment) -> Result<Self> {
        let mut vectors = BTreeMap::new();
        let mut norms_sq = BTreeMap::new();
        for (index, members) in family.iter() {
            let mut b = HaarVector::zero();
            let mut norm = Rational::zero();
            for &k in members {
                let sign = signs.get(k).ok_or(Error::MissingSign(k))?;
                b.set(k, sign.to_rational());
                norm += dyadic(k.n);
            }
            vectors.insert(index, b);
            norms_sq.insert(index, norm);
        }
        Ok(BlockBasis {
            family,
            signs,
            vectors,
            norms_sq,
        })
    }

    pub fn family(&self) -> &IntervalFamily {
        &self.family
    }

    pub fn signs(&self) -> &SignAssignment {
        &self.signs
    }

    pub fn indices(&self) -> &[DyadicInterval] {
        self.family.indices()
    }

    pub fn vector(&self, index: DyadicInterval) -> &HaarVector {
        &self.vectors[&index]
    }

    pub fn norm_sq(&self, index: DyadicInterval) -> &Rational {
        &self.norms_sq[&index]
    }

    pub fn vectors(&self) -> impl Iterator<Item = (DyadicInterval, &HaarVector)> + '_ {
        self.vectors.iter().map(|(&i, v)| (i, v))
    }
}

/// Materializes `b_I^{(ε)}` and `‖b_I‖₂²` for a family satisfying (J1)–(J4).
pub fn build_block_basis(family: &IntervalFamily, signs: &SignAssignment) -> Result<BlockBasis> {
    let report = check_jones(family);
    if !report.satisfied {
        let first = &report.violations[0];
        return Err(Error::JonesViolation(format!(
            "{:?} at {:?}: {}",
            first.condition,
            first.indices.iter().map(ToString::to_string).collect::<Vec<_>>(),
            first.detail
        )));
    }
    BlockBasis::assemble(family.clone(), signs.clone())
}

/// `B f = Σ_{I ∈ 𝓘} a_I b_I`.
pub fn embed_b(f: &HaarVector, basis: &BlockBasis) -> HaarVector {
    let mut out = HaarVector::zero();
    for (interval, a) in f.iter() {
        if let Some(b) = basis.vectors.get(&interval) {
            out.add_scaled(b, a);
        }
    }
    out
}

/// `Q f = Σ_{I ∈ 𝓘} ⟨f, b_I⟩ / ‖b_I‖₂² h_I`.
pub fn project_q(f: &HaarVector, basis: &BlockBasis) -> HaarVector {
    HaarVector::from_pairs(basis.vectors.iter().map(|(&index, b)| {
        (index, inner_product(f, b) / &basis.norms_sq[&index])
    }))
}

/// `P = B Q`, the projection onto the span of the block basis.
pub fn projection_p(f: &HaarVector, basis: &BlockBasis) -> HaarVector {
    embed_b(&project_q(f, basis), basis)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dyadic::tree;
    use crate::haar::sl_inf_norm_sq;
    use crate::rational::{int, rat};

    fn iv(n: u32, k: u64) -> DyadicInterval {
        DyadicInterval::new(n, k).unwrap()
    }

    fn split_root() -> BlockBasis {
        let family = IntervalFamily::new(vec![iv(0, 0)], [(iv(0, 0), vec![iv(1, 0), iv(1, 1)])]).unwrap();
        let mut signs = SignAssignment::new();
        signs.insert(iv(1, 0), Sign::Plus);
        signs.insert(iv(1, 1), Sign::Minus);
        build_block_basis(&family, &signs).unwrap()
    }

    #[test]
    fn identity_basis_is_the_haar_system() {
        let family = IntervalFamily::identity(tree(2));
        let basis = build_block_basis(&family, &SignAssignment::all_plus(tree(2))).unwrap();
        for i in tree(2) {
            assert_eq!(basis.vector(i), &HaarVector::basis(i));
            assert_eq!(basis.norm_sq(i), &i.measure());
        }
        let f = HaarVector::from_pairs([(iv(0, 0), int(3)), (iv(3, 1), int(1))]);
        assert_eq!(embed_b(&f, &basis), HaarVector::basis(iv(0, 0)).scaled(&int(3)));
        assert_eq!(project_q(&f, &basis), embed_b(&f, &basis));
    }

    #[test]
    fn signed_split_of_the_root() {
        let basis = split_root();
        let b = basis.vector(iv(0, 0));
        assert_eq!(b, &HaarVector::basis(iv(1, 0)).sub(&HaarVector::basis(iv(1, 1))));
        assert_eq!(basis.norm_sq(iv(0, 0)), &int(1));
        assert_eq!(project_q(b, &basis), HaarVector::basis(iv(0, 0)));
        assert_eq!(projection_p(b, &basis), *b);
        let orthogonal = HaarVector::basis(iv(2, 1));
        assert!(project_q(&orthogonal, &basis).is_zero());
    }

    #[test]
    fn embedding_of_the_root_function() {
        let family = IntervalFamily::new(vec![iv(0, 0)], [(iv(0, 0), vec![iv(1, 0), iv(1, 1)])]).unwrap();
        let basis = build_block_basis(&family, &SignAssignment::all_plus([iv(1, 0), iv(1, 1)])).unwrap();
        let image = embed_b(&HaarVector::basis(iv(0, 0)), &basis);
        assert_eq!(image, HaarVector::basis(iv(1, 0)).add(&HaarVector::basis(iv(1, 1))));
        assert!(embed_b(&HaarVector::zero(), &basis).is_zero());
        let f = HaarVector::from_pairs([(iv(0, 0), rat(-2, 3))]);
        assert!(sl_inf_norm_sq(&embed_b(&f, &basis)) <= sl_inf_norm_sq(&f));
    }

    #[test]
    fn missing_signs_and_bad_families_are_errors() {
        let family = IntervalFamily::new(vec![iv(0, 0)], [(iv(0, 0), vec![iv(1, 0), iv(1, 1)])]).unwrap();
        assert!(matches!(
            build_block_basis(&family, &SignAssignment::all_plus([iv(1, 0)])),
            Err(Error::MissingSign(_))
        ));
        let broken = IntervalFamily::new(
            vec![iv(1, 0), iv(1, 1)],
            [(iv(1, 0), vec![iv(0, 0)]), (iv(1, 1), vec![iv(0, 0)])],
        )
        .unwrap();
        assert!(matches!(
            build_block_basis(&broken, &SignAssignment::all_plus([iv(0, 0)])),
            Err(Error::JonesViolation(_))
        ));
    }

    #[test]
    fn json_round_trip_recomputes_vectors() {
        let basis = split_root();
        let text = serde_json::to_string(&basis).unwrap();
        assert!(text.contains(r#""signs":{"1":1,"2":-1}"#), "{text}");
        let back: BlockBasis = serde_json::from_str(&text).unwrap();
        assert_eq!(back, basis);
    }
}
