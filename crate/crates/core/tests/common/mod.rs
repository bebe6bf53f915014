//! Random inputs shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;

use haar_factor::block::{Sign, SignAssignment};
use haar_factor::dyadic::{tree, DyadicInterval};
use haar_factor::haar::HaarVector;
use haar_factor::jones::IntervalFamily;
use haar_factor::operator::OperatorMatrix;
use haar_factor::rational::{rat, Rational};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub use rand::SeedableRng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn iv(n: u32, k: u64) -> DyadicInterval {
    DyadicInterval::new(n, k).unwrap()
}

pub fn small_rational(rng: &mut ChaCha8Rng) -> Rational {
    let den = [1i64, 2, 3, 4, 5, 8][rng.random_range(0..6)];
    rat(rng.random_range(-12..=12), den)
}

/// Sparse random vector on `𝒟^depth`; each coefficient is present with
/// probability `density`.
pub fn random_vector(rng: &mut ChaCha8Rng, depth: u32, density: f64) -> HaarVector {
    let mut pairs = Vec::new();
    for i in tree(depth) {
        if rng.random_bool(density) {
            pairs.push((i, small_rational(rng)));
        }
    }
    HaarVector::from_pairs(pairs)
}

/// Random vector supported on the given intervals.
pub fn random_vector_on(rng: &mut ChaCha8Rng, support: &[DyadicInterval]) -> HaarVector {
    HaarVector::from_pairs(support.iter().map(|&i| (i, small_rational(rng))))
}

pub fn random_operator(rng: &mut ChaCha8Rng, depth: u32, entries: usize) -> OperatorMatrix {
    let count = (1u64 << (depth + 1)) - 1;
    let mut t = OperatorMatrix::zero(depth);
    for _ in 0..entries {
        let row = DyadicInterval::from_ordering(rng.random_range(0..count));
        let col = DyadicInterval::from_ordering(rng.random_range(0..count));
        t.add_entry(row, col, &small_rational(rng)).unwrap();
    }
    t.with_estimated_norm_bound()
}

/// A family over `𝒟^index_depth` that satisfies (J1)–(J4).
///
/// Each member of a parent collection is refined one or two generations
/// down; at least one piece goes to each child and the rest is dealt at
/// random, possibly dropped, so the constant is usually above one.
pub fn random_family(rng: &mut ChaCha8Rng, index_depth: u32, uneven: bool) -> IntervalFamily {
    let root_level = rng.random_range(0..=1u32);
    let mut root: Vec<DyadicInterval> = DyadicInterval::UNIT.descendants(root_level).collect();
    root.shuffle(rng);
    root.truncate(rng.random_range(1..=root.len()));
    let mut blocks: BTreeMap<DyadicInterval, Vec<DyadicInterval>> = BTreeMap::new();
    blocks.insert(DyadicInterval::UNIT, root);
    for index in tree(index_depth) {
        if index.n == index_depth {
            continue;
        }
        let mut left = Vec::new();
        let mut right = Vec::new();
        for &member in &blocks[&index] {
            let step = if uneven { rng.random_range(1..=2) } else { 1 };
            let mut pieces: Vec<DyadicInterval> = member.descendants(member.n + step).collect();
            pieces.shuffle(rng);
            left.push(pieces[0]);
            right.push(pieces[1]);
            for &p in &pieces[2..] {
                match rng.random_range(0..3) {
                    0 => left.push(p),
                    1 => right.push(p),
                    _ => {}
                }
            }
        }
        blocks.insert(index.left(), left);
        blocks.insert(index.right(), right);
    }
    IntervalFamily::new(tree(index_depth).collect(), blocks).unwrap()
}

/// A selector over `𝒟^selector_depth` whose members are indices of a family
/// over `𝒟^inner_depth`.
pub fn random_selector(rng: &mut ChaCha8Rng, inner_depth: u32, selector_depth: u32) -> IntervalFamily {
    assert!(selector_depth <= inner_depth);
    let slack = inner_depth - selector_depth;
    let root_level = rng.random_range(0..=slack);
    let mut root: Vec<DyadicInterval> = DyadicInterval::UNIT.descendants(root_level).collect();
    root.shuffle(rng);
    root.truncate(rng.random_range(1..=root.len()));
    let mut blocks: BTreeMap<DyadicInterval, Vec<DyadicInterval>> = BTreeMap::new();
    blocks.insert(DyadicInterval::UNIT, root);
    for index in tree(selector_depth) {
        if index.n == selector_depth {
            continue;
        }
        let height = selector_depth - index.n;
        let mut left = Vec::new();
        let mut right = Vec::new();
        for &member in &blocks[&index] {
            for (half, out) in [(member.left(), &mut left), (member.right(), &mut right)] {
                // Split the half once more when the inner tree leaves room.
                if half.n + height <= inner_depth && rng.random_bool(0.3) {
                    out.push(half.left());
                    out.push(half.right());
                } else {
                    out.push(half);
                }
            }
        }
        blocks.insert(index.left(), left);
        blocks.insert(index.right(), right);
    }
    IntervalFamily::new(tree(selector_depth).collect(), blocks).unwrap()
}

pub fn random_signs(rng: &mut ChaCha8Rng, family: &IntervalFamily) -> SignAssignment {
    let mut signs = SignAssignment::new();
    for member in family.members() {
        signs.insert(member, Sign::from_bool(rng.random_bool(0.5)));
    }
    signs
}

/// All `2^n` vectors with coefficients ±1 on `support`.
pub fn sign_patterns(support: &[DyadicInterval]) -> Vec<HaarVector> {
    let n = support.len();
    assert!(n <= 16);
    (0u32..1 << n)
        .map(|mask| {
            HaarVector::from_pairs(
                support
                    .iter()
                    .enumerate()
                    .map(|(p, &i)| (i, if mask >> p & 1 == 1 { rat(-1, 1) } else { rat(1, 1) })),
            )
        })
        .collect()
}

pub fn total_intervals(families: &[&IntervalFamily]) -> usize {
    families.iter().map(|f| f.member_count()).sum()
}
