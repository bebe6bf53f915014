//! Families `(𝓑_I : I ∈ 𝓘)` of interval collections and Jones' conditions
//! (J1)–(J4).

use std::collections::{BTreeMap, BTreeSet, HashMap};

use num_bigint::BigInt;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dyadic::{DyadicInterval, Relation};
use crate::error::{Error, Result};
use crate::rational::{serde_rational_opt, Rational};
use crate::sets::DyadicSet;

/// A family of finite collections of dyadic intervals indexed by dyadic
/// intervals.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "FamilyJson", into = "FamilyJson")]
pub struct IntervalFamily {
    indices: Vec<DyadicInterval>,
    blocks: BTreeMap<DyadicInterval, Vec<DyadicInterval>>,
}

#[derive(Serialize, Deserialize)]
struct FamilyJson {
    indices: Vec<DyadicInterval>,
    /// Keyed by the ordering number of the index.
    blocks: BTreeMap<u64, Vec<DyadicInterval>>,
}

impl TryFrom<FamilyJson> for IntervalFamily {
    type Error = Error;

    fn try_from(json: FamilyJson) -> Result<Self> {
        IntervalFamily::new(
            json.indices,
            json.blocks
                .into_iter()
                .map(|(ordering, members)| (DyadicInterval::from_ordering(ordering), members)),
        )
    }
}

impl From<IntervalFamily> for FamilyJson {
    fn from(family: IntervalFamily) -> Self {
        FamilyJson {
            indices: family.indices,
            blocks: family
                .blocks
                .into_iter()
                .map(|(index, members)| (index.ordering(), members))
                .collect(),
        }
    }
}

impl IntervalFamily {
    /// Builds a family; every index needs a non-empty collection and every
    /// collection an index.
    pub fn new<I>(indices: Vec<DyadicInterval>, blocks: I) -> Result<Self>
    where
        I: IntoIterator<Item = (DyadicInterval, Vec<DyadicInterval>)>,
    {
        let index_set: BTreeSet<_> = indices.into_iter().collect();
        let mut map = BTreeMap::new();
        for (index, mut members) in blocks {
            if !index_set.contains(&index) {
                return Err(Error::Parse(format!("blocks given for {index}, which is not an index")));
            }
            members.sort();
            members.dedup();
            map.insert(index, members);
        }
        for index in &index_set {
            if map.get(index).is_none_or(|m: &Vec<_>| m.is_empty()) {
                return Err(Error::JonesViolation(format!("(J2) the collection of {index} is empty")));
            }
        }
        Ok(IntervalFamily {
            indices: index_set.into_iter().collect(),
            blocks: map,
        })
    }

    /// `𝓑_I = {I}` for every `I` in `indices`.
    pub fn identity(indices: impl IntoIterator<Item = DyadicInterval>) -> Self {
        let indices: Vec<_> = indices.into_iter().collect();
        let blocks = indices.iter().map(|&i| (i, vec![i]));
        IntervalFamily::new(indices.clone(), blocks).expect("identity family is well formed")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Indices in ordering order.
    pub fn indices(&self) -> &[DyadicInterval] {
        &self.indices
    }

    pub fn blocks(&self, index: DyadicInterval) -> &[DyadicInterval] {
        self.blocks.get(&index).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn iter(&self) -> impl Iterator<Item = (DyadicInterval, &[DyadicInterval])> + '_ {
        self.blocks.iter().map(|(&i, m)| (i, m.as_slice()))
    }

    /// `B_I`, the union of the collection of `index`.
    pub fn union_set(&self, index: DyadicInterval) -> DyadicSet {
        DyadicSet::from_intervals(self.blocks(index).iter().copied())
    }

    pub fn member_count(&self) -> usize {
        self.blocks.values().map(Vec::len).sum()
    }

    /// All member intervals across every collection.
    pub fn members(&self) -> impl Iterator<Item = DyadicInterval> + '_ {
        self.blocks.values().flatten().copied()
    }

    fn as_set_family(&self) -> SetFamily {
        SetFamily {
            indices: self.indices.clone(),
            blocks: self
                .blocks
                .iter()
                .map(|(&i, m)| (i, m.iter().map(|&n| DyadicSet::interval(n)).collect()))
                .collect(),
        }
    }
}

/// A family whose members are arbitrary finite unions of dyadic intervals,
/// as produced when a family is indexed by the sets `A_I` of another.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SetFamily {
    pub indices: Vec<DyadicInterval>,
    pub blocks: BTreeMap<DyadicInterval, Vec<DyadicSet>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Condition {
    J1,
    J2,
    J3,
    J4,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub condition: Condition,
    pub indices: Vec<DyadicInterval>,
    pub members: Vec<DyadicSet>,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct JonesReport {
    pub satisfied: bool,
    /// Smallest admissible constant in (J4); absent when some (J4) ratio is
    /// unbounded or (J1)–(J3) fail.
    #[serde(with = "serde_rational_opt")]
    pub kappa: Option<Rational>,
    pub violations: Vec<Violation>,
    pub scope: String,
}

const SCOPE_NOTE: &str = "(J4) is tested over pairs I0 ⊆ I with both I0 and I in the index set";

/// Checks (J1)–(J4) for a family of dyadic intervals.
pub fn check_jones(family: &IntervalFamily) -> JonesReport {
    check_set_family(&family.as_set_family())
}

/// Checks (J1)–(J4) for a family of finite unions of dyadic intervals.
pub fn check_set_family(family: &SetFamily) -> JonesReport {
    let mut violations = Vec::new();
    let indices = &family.indices;
    let empty = Vec::new();
    let members_of = |i: &DyadicInterval| family.blocks.get(i).unwrap_or(&empty);

    // (J1): every pair of members across the whole family is nested.
    let all: Vec<(DyadicInterval, &DyadicSet)> = indices
        .iter()
        .flat_map(|i| members_of(i).iter().map(move |m| (*i, m)))
        .collect();
    for (pos, (i, a)) in all.iter().enumerate() {
        if a.is_empty() {
            violations.push(Violation {
                condition: Condition::J1,
                indices: vec![*i],
                members: vec![(*a).clone()],
                detail: "member has measure zero".into(),
            });
            continue;
        }
        if a.pieces().len() == 1 {
            continue;
        }
        // Single dyadic intervals are always nested with each other, so only
        // pairs involving a multi-piece member need a check.
        for (j, b) in all.iter().skip(pos + 1).chain(all.iter().take(pos)) {
            if !a.is_nested_with(b) {
                violations.push(Violation {
                    condition: Condition::J1,
                    indices: vec![*i, *j],
                    members: vec![(*a).clone(), (*b).clone()],
                    detail: "members are neither disjoint nor comparable".into(),
                });
                break;
            }
        }
    }

    // (J2): non-empty, pairwise disjoint, no member shared between indices.
    let mut owner: HashMap<&DyadicSet, DyadicInterval> = HashMap::new();
    for i in indices {
        let members = members_of(i);
        if members.is_empty() {
            violations.push(Violation {
                condition: Condition::J2,
                indices: vec![*i],
                members: vec![],
                detail: "collection is empty".into(),
            });
        }
        let union = DyadicSet::from_intervals(members.iter().flat_map(|m| m.pieces().iter().copied()));
        let total: u64 = members.iter().map(DyadicSet::measure_units).sum();
        if total != union.measure_units() {
            let witness = first_overlap(members);
            violations.push(Violation {
                condition: Condition::J2,
                indices: vec![*i],
                members: witness,
                detail: "members of one collection overlap".into(),
            });
        }
        for m in members {
            if let Some(&other) = owner.get(m) {
                if other != *i {
                    violations.push(Violation {
                        condition: Condition::J2,
                        indices: vec![other, *i],
                        members: vec![m.clone()],
                        detail: "member shared by two collections".into(),
                    });
                }
            } else {
                owner.insert(m, *i);
            }
        }
    }

    // (J3): disjoint indices have disjoint unions; nested indices nested unions.
    let unions: BTreeMap<DyadicInterval, DyadicSet> = indices
        .iter()
        .map(|&i| {
            (
                i,
                DyadicSet::from_intervals(
                    members_of(&i).iter().flat_map(|m| m.pieces().iter().copied()),
                ),
            )
        })
        .collect();
    for (a_pos, &a) in indices.iter().enumerate() {
        for &b in &indices[a_pos + 1..] {
            let (ua, ub) = (&unions[&a], &unions[&b]);
            match a.relation(b) {
                Relation::Disjoint => {
                    if !ua.is_disjoint(ub) {
                        violations.push(Violation {
                            condition: Condition::J3,
                            indices: vec![a, b],
                            members: vec![ua.clone(), ub.clone()],
                            detail: "disjoint indices with intersecting unions".into(),
                        });
                    }
                }
                Relation::Subset if !ua.is_subset(ub) => violations.push(Violation {
                    condition: Condition::J3,
                    indices: vec![a, b],
                    members: vec![ua.clone(), ub.clone()],
                    detail: "union of the smaller index is not inside the larger".into(),
                }),
                Relation::Superset if !ub.is_subset(ua) => violations.push(Violation {
                    condition: Condition::J3,
                    indices: vec![b, a],
                    members: vec![ub.clone(), ua.clone()],
                    detail: "union of the smaller index is not inside the larger".into(),
                }),
                _ => {}
            }
        }
    }

    // (J4): κ = max |B_{I0}| |N| / (|N ∩ B_{I0}| |B_I|).
    let j4: Vec<(Option<Rational>, Vec<Violation>)> = indices
        .par_iter()
        .map(|&i| {
            let mut worst: Option<(BigInt, BigInt)> = None;
            let mut found = Vec::new();
            let b_i = unions[&i].measure_units();
            for &i0 in indices.iter().filter(|i0| i.contains(**i0)) {
                let set0 = &unions[&i0];
                let b_i0 = set0.measure_units();
                for n in members_of(&i) {
                    let meet = if n.pieces().len() == 1 {
                        set0.intersection_units_with(n.pieces()[0])
                    } else {
                        set0.intersection_units(n)
                    };
                    if meet == 0 {
                        found.push(Violation {
                            condition: Condition::J4,
                            indices: vec![i0, i],
                            members: vec![n.clone()],
                            detail: "member misses the union of a sub-index entirely".into(),
                        });
                        continue;
                    }
                    let num = BigInt::from(b_i0) * BigInt::from(n.measure_units());
                    let den = BigInt::from(meet) * BigInt::from(b_i);
                    let bigger = match &worst {
                        Some((wn, wd)) => &num * wd > wn * &den,
                        None => true,
                    };
                    if bigger {
                        worst = Some((num, den));
                    }
                }
            }
            (worst.map(|(n, d)| Rational::new(n, d)), found)
        })
        .collect();
    let mut kappa: Option<Rational> = None;
    for (k, found) in j4 {
        violations.extend(found);
        if let Some(k) = k {
            kappa = Some(match kappa {
                Some(current) if current >= k => current,
                _ => k,
            });
        }
    }
    let satisfied = violations.is_empty();
    if !satisfied {
        kappa = None;
    }
    JonesReport {
        satisfied,
        kappa,
        violations,
        scope: SCOPE_NOTE.into(),
    }
}

fn first_overlap(members: &[DyadicSet]) -> Vec<DyadicSet> {
    for (pos, a) in members.iter().enumerate() {
        for b in &members[pos + 1..] {
            if !a.is_disjoint(b) {
                return vec![a.clone(), b.clone()];
            }
        }
    }
    Vec::new()
}

/// Every non-root index has its sibling in the index set.
pub fn is_sibling_closed(indices: &[DyadicInterval]) -> bool {
    let set: BTreeSet<_> = indices.iter().copied().collect();
    indices.iter().all(|i| match i.parent() {
        None => true,
        Some(p) => {
            let (l, r) = p.halves();
            set.contains(&l) && set.contains(&r)
        }
    })
}

/// Checks the three structural consequences of (J1)–(J4): the unions `B_I`
/// are nested, `B_{I0} ⊆ B_I ⇔ I0 ⊆ I`, and each member of `𝓑_{I0}` lies
/// inside a member of `𝓑_I` whenever `I0 ⊆ I`.
///
/// Requires a satisfying family on a sibling-closed index set; on other
/// finite index sets the second and third statements can genuinely fail.
pub fn verify_nesting_consequences(family: &IntervalFamily) -> Result<bool> {
    let report = check_jones(family);
    if !report.satisfied {
        return Err(Error::Precondition("family does not satisfy (J1)-(J4)".into()));
    }
    if !is_sibling_closed(family.indices()) {
        return Err(Error::Precondition(
            "index set is not closed under taking siblings".into(),
        ));
    }
    let unions: BTreeMap<_, _> = family
        .indices()
        .iter()
        .map(|&i| (i, family.union_set(i)))
        .collect();
    for &a in family.indices() {
        for &b in family.indices() {
            let (ua, ub) = (&unions[&a], &unions[&b]);
            if ua.measure_units() == 0 || !ua.is_nested_with(ub) {
                return Ok(false);
            }
            if ua.is_subset(ub) != b.contains(a) {
                return Ok(false);
            }
            if b.contains(a) {
                let inside = family
                    .blocks(a)
                    .iter()
                    .all(|&n0| family.blocks(b).iter().any(|n| n.contains(n0)));
                if !inside {
                    return Ok(false);
                }
            }
        }
    }
    Ok(true)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reiteration {
    pub family: IntervalFamily,
    #[serde(with = "crate::rational::serde_rational")]
    pub kappa_a: Rational,
    #[serde(with = "crate::rational::serde_rational")]
    pub kappa_b: Rational,
}

/// The selector family read as a family of the sets `A_I`.
pub fn selector_as_sets(a: &IntervalFamily, selector: &IntervalFamily) -> Result<SetFamily> {
    let a_indices: BTreeSet<_> = a.indices().iter().copied().collect();
    let mut blocks = BTreeMap::new();
    for (j, chosen) in selector.iter() {
        let mut sets = Vec::with_capacity(chosen.len());
        for &i in chosen {
            if !a_indices.contains(&i) {
                return Err(Error::Precondition(format!(
                    "selector member {i} is not an index of the inner family"
                )));
            }
            sets.push(a.union_set(i));
        }
        blocks.insert(j, sets);
    }
    Ok(SetFamily {
        indices: selector.indices().to_vec(),
        blocks,
    })
}

/// Composes `𝓒_J = ∪ { 𝓐_I : A_I ∈ 𝓑_J }`.
///
/// `selector` is indexed by `J` and its members name indices `I` of `a`.
pub fn reiterate(a: &IntervalFamily, selector: &IntervalFamily) -> Result<Reiteration> {
    let report_a = check_jones(a);
    if !report_a.satisfied {
        return Err(Error::Precondition(format!(
            "inner family violates {:?}",
            report_a.violations.first().map(|v| v.condition)
        )));
    }
    let report_b = check_set_family(&selector_as_sets(a, selector)?);
    if !report_b.satisfied {
        return Err(Error::Precondition(format!(
            "selector family violates {:?}",
            report_b.violations.first().map(|v| v.condition)
        )));
    }
    let blocks = selector.iter().map(|(j, chosen)| {
        let members: Vec<DyadicInterval> = chosen
            .iter()
            .flat_map(|&i| a.blocks(i).iter().copied())
            .collect();
        (j, members)
    });
    let family = IntervalFamily::new(selector.indices().to_vec(), blocks)?;
    Ok(Reiteration {
        family,
        kappa_a: report_a.kappa.expect("satisfied family has a constant"),
        kappa_b: report_b.kappa.expect("satisfied family has a constant"),
    })
}
