//! Almost-diagonalization of a large-diagonal operator by a Gamlen-Gaudet
//! block basis, at a finite Haar depth.
//!
//! Index `i` runs over `𝒟^{index_depth}` in ordering order. Step `i` picks a
//! level `m_i`, the cover `𝓕_{m_i}` of the left or right halves of the
//! parent's blocks, signs on the cover, and a level set `Λ_{i+1}` reserved
//! for later steps. Every inequality is recorded in a certificate that
//! [`verify_diagonalization`] re-derives from the operator alone.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use num_traits::{One, Signed, Zero};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::block::{BlockBasis, Sign, SignAssignment};
use crate::dyadic::DyadicInterval;
use crate::error::{Error, InfeasibleReport, Result};
use crate::haar::{h1_norm, inner_product, project_levels, H1Estimate, HaarVector};
use crate::jones::{check_jones, IntervalFamily};
use crate::operator::{NormBoundSource, OperatorMatrix};
use crate::rational::{ceil_to_u64, dyadic, serde_rational, Rational};
use crate::sets::DyadicSet;
use crate::verify::{Check, VerificationReport};

/// `T h_I = α_I h_I + r_I`.
pub fn decompose_column(t: &OperatorMatrix, interval: DyadicInterval) -> Result<(Rational, HaarVector)> {
    if interval.n > t.depth() {
        return Err(Error::DepthBudget {
            n: interval.n,
            budget: t.depth(),
        });
    }
    let alpha = t.diagonal(interval);
    let mut remainder = t.column_vector(interval);
    remainder.set(interval, Rational::zero());
    Ok((alpha, remainder))
}

/// Returns `T Σ` and `Σ`, where the diagonal signs `Σ` make every diagonal
/// entry nonnegative, after checking `|t_{I,I}| >= δ` on all of `𝒟^N`.
/// A factorization `Id = S (T Σ) R` of the result gives `Id = S T (Σ R)`.
pub fn normalize_diagonal_signs(t: &OperatorMatrix, delta: &Rational) -> Result<(OperatorMatrix, SignAssignment)> {
    let mut sigma = SignAssignment::new();
    for interval in crate::dyadic::tree(t.depth()) {
        let d = t.diagonal(interval);
        if delta.is_positive() && d.is_zero() {
            return Err(Error::ZeroDiagonal(interval));
        }
        if &d.abs() < delta {
            return Err(Error::Precondition(format!(
                "|t_(I,I)| = {} < delta = {delta} at {interval}",
                d.abs()
            )));
        }
        if d.is_negative() {
            sigma.insert(interval, Sign::Minus);
        }
    }
    Ok((t.flip_columns(&sigma), sigma))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub fn of(interval: DyadicInterval) -> Side {
        if interval.is_left_child() {
            Side::Left
        } else {
            Side::Right
        }
    }
}

/// `𝓕_m`: the generation-`m` intervals covering the chosen halves of the
/// parent blocks.
pub fn gamlen_gaudet_children(parent_blocks: &[DyadicInterval], side: Side, m: u32) -> Result<Vec<DyadicInterval>> {
    let parents = DyadicSet::from_intervals(parent_blocks.iter().copied());
    let total: u64 = parent_blocks.iter().map(|p| DyadicSet::interval(*p).measure_units()).sum();
    if total != parents.measure_units() {
        return Err(Error::Precondition("parent blocks overlap".into()));
    }
    let mut cover = Vec::new();
    for &block in parent_blocks {
        let half = match side {
            Side::Left => block.left(),
            Side::Right => block.right(),
        };
        if m < half.n {
            return Err(Error::CoverTooCoarse { m, required: half.n });
        }
        cover.extend(half.descendants(m));
    }
    cover.sort();
    Ok(cover)
}

/// Symmetrized off-diagonal couplings `w_{ab} = t_{b,a}|b| + t_{a,b}|a|`
/// among the members of `cover`, keyed by position.
fn couplings(t: &OperatorMatrix, cover: &[DyadicInterval]) -> BTreeMap<(usize, usize), Rational> {
    let position: HashMap<DyadicInterval, usize> = cover.iter().enumerate().map(|(p, &k)| (k, p)).collect();
    let mut weights: BTreeMap<(usize, usize), Rational> = BTreeMap::new();
    for (a, &col) in cover.iter().enumerate() {
        for (row, value) in t.column(col) {
            if row == col {
                continue;
            }
            if let Some(&b) = position.get(&row) {
                let key = (a.min(b), a.max(b));
                *weights.entry(key).or_insert_with(Rational::zero) += value * dyadic(row.n);
            }
        }
    }
    weights
}

/// `X(ε) = Σ_{K0 ≠ K1} ε_{K0} ε_{K1} ⟨r_{K0}, h_{K1}⟩` for signs on `cover`.
pub fn sign_interaction(t: &OperatorMatrix, cover: &[DyadicInterval], signs: &SignAssignment) -> Rational {
    couplings(t, cover)
        .into_iter()
        .map(|((a, b), w)| {
            let s = signs.sign_or_plus(cover[a]) * signs.sign_or_plus(cover[b]);
            if s.is_plus() {
                w
            } else {
                -w
            }
        })
        .sum()
}

/// Derandomized signs with `X(ε) >= 0`.
///
/// Signs are fixed in ordering order; each keeps the conditional average of
/// `X`, which is the sum of the already-decided pair terms, as large as
/// possible. Ties pick `+`. Returns the signs and the achieved `X(ε)`.
pub fn choose_signs(t: &OperatorMatrix, cover: &[DyadicInterval]) -> (SignAssignment, Rational) {
    let mut sorted = cover.to_vec();
    sorted.sort();
    let weights = couplings(t, &sorted);
    let mut later: Vec<Vec<(usize, &Rational)>> = vec![Vec::new(); sorted.len()];
    for ((a, b), w) in &weights {
        later[*a].push((*b, w));
    }
    let mut pull = vec![Rational::zero(); sorted.len()];
    let mut signs = SignAssignment::new();
    let mut gain = Rational::zero();
    for (k, &interval) in sorted.iter().enumerate() {
        let sign = Sign::from_bool(!pull[k].is_negative());
        gain += pull[k].abs();
        signs.insert(interval, sign);
        for &(b, w) in &later[k] {
            if sign.is_plus() {
                pull[b] += w;
            } else {
                pull[b] -= w;
            }
        }
    }
    (signs, gain)
}

/// Outcome of [`select_frequency`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FrequencyChoice {
    pub level: u32,
    pub cover: Vec<DyadicInterval>,
    /// `Σ_j Σ_{K ∈ 𝓕_m} |⟨T b_j, h_K⟩|`, which dominates the interaction for every sign choice.
    pub majorant: Rational,
}

/// Smallest candidate level whose cover is nonempty and whose sign-uniform
/// interaction with the earlier images `T b_j` fits in `budget`.
pub fn select_frequency(
    prior_images: &[HaarVector],
    candidates: &BTreeSet<u32>,
    parent_blocks: &[DyadicInterval],
    side: Side,
    budget: &Rational,
    depth: u32,
) -> Result<FrequencyChoice> {
    let halves = DyadicSet::from_intervals(parent_blocks.iter().map(|&b| match side {
        Side::Left => b.left(),
        Side::Right => b.right(),
    }));
    let min_level = halves.pieces().iter().map(|p| p.n).max().unwrap_or(0);
    let usable: Vec<u32> = candidates.iter().copied().filter(|&m| m >= min_level && m <= depth).collect();
    if usable.is_empty() {
        return Err(Error::infeasible(InfeasibleReport {
            stage: "select_frequency".into(),
            index: None,
            achieved: None,
            budget: Some(budget.to_string()),
            depth,
            suggested_depth: Some(depth + 1),
            achievable_index_depth: None,
            detail: "no admissible level is left for this index".into(),
        }));
    }
    // Majorants for every usable level in one pass over the images.
    let mut majorants: BTreeMap<u32, Rational> = usable.iter().map(|&m| (m, Rational::zero())).collect();
    for image in prior_images {
        for (k, value) in image.iter() {
            if let Some(slot) = majorants.get_mut(&k.n) {
                if halves.contains_interval(k) {
                    *slot += value.abs() * dyadic(k.n);
                }
            }
        }
    }
    let mut best: Option<Rational> = None;
    for (&m, majorant) in &majorants {
        if majorant <= budget {
            let cover = gamlen_gaudet_children(parent_blocks, side, m)?;
            return Ok(FrequencyChoice {
                level: m,
                cover,
                majorant: majorant.clone(),
            });
        }
        if best.as_ref().is_none_or(|b| majorant < b) {
            best = Some(majorant.clone());
        }
    }
    Err(Error::infeasible(InfeasibleReport {
        stage: "select_frequency".into(),
        index: None,
        achieved: best.map(|b| b.to_string()),
        budget: Some(budget.to_string()),
        depth,
        suggested_depth: Some(depth + 1),
        achievable_index_depth: None,
        detail: "every admissible level interacts too strongly with earlier blocks".into(),
    }))
}

/// Outcome of [`sieve_select`].
#[derive(Clone, Debug, PartialEq)]
pub struct SieveOutcome {
    pub levels: BTreeSet<u32>,
    /// `‖P_Λ T* b‖_{H¹}`, which bounds `sup_{‖f‖<=1} |⟨T P_Λ f, b⟩|`.
    pub certified: H1Estimate,
    pub used_fallback: bool,
}

/// Chooses `Λ ⊆ available` with `‖P_Λ (T* b)‖_{H¹} <= budget`.
///
/// Levels are admitted greedily in increasing order of their own `H¹`
/// contribution. If not even one level fits, the available levels are
/// dealt round-robin into `k = ⌈‖T‖² / η_b²⌉` groups, `η_b = budget / ‖b‖_{H¹}`,
/// and the first group that certifies is taken.
pub fn sieve_select(
    t: &OperatorMatrix,
    b: &HaarVector,
    available: &BTreeSet<u32>,
    budget: &Rational,
) -> Result<SieveOutcome> {
    if available.is_empty() {
        return Err(Error::Precondition("sieve needs at least one available level".into()));
    }
    let c = t.adjoint_apply(b);
    let c_avail = project_levels(&c, available);
    if c_avail.is_zero() {
        return Ok(SieveOutcome {
            levels: available.clone(),
            certified: H1Estimate::zero(),
            used_fallback: false,
        });
    }
    let mut per_level: Vec<(Rational, u32)> = available
        .par_iter()
        .map(|&n| (h1_norm(&project_levels(&c_avail, &[n].into())).upper, n))
        .collect();
    per_level.sort();
    let mut levels = BTreeSet::new();
    let mut certified = H1Estimate::zero();
    for (alone, n) in &per_level {
        if alone > budget {
            break;
        }
        let mut trial = levels.clone();
        trial.insert(*n);
        let estimate = h1_norm(&project_levels(&c_avail, &trial));
        if &estimate.upper <= budget {
            levels = trial;
            certified = estimate;
        }
    }
    if !levels.is_empty() {
        return Ok(SieveOutcome {
            levels,
            certified,
            used_fallback: false,
        });
    }
    // Pigeonhole over disjoint groups of levels.
    let b_h1 = h1_norm(b).lower;
    let mut best = per_level[0].0.clone();
    if b_h1.is_positive() {
        let eta_b = budget / &b_h1;
        let groups = if eta_b.is_positive() {
            ceil_to_u64(&(t.norm_bound() * t.norm_bound() / (&eta_b * &eta_b))).unwrap_or(u64::MAX)
        } else {
            u64::MAX
        };
        let groups = groups.clamp(1, available.len() as u64) as usize;
        for g in 0..groups {
            let group: BTreeSet<u32> = available.iter().copied().skip(g).step_by(groups).collect();
            let estimate = h1_norm(&project_levels(&c_avail, &group));
            if &estimate.upper <= budget {
                return Ok(SieveOutcome {
                    levels: group,
                    certified: estimate,
                    used_fallback: true,
                });
            }
            if estimate.upper < best {
                best = estimate.upper;
            }
        }
    }
    Err(Error::infeasible(InfeasibleReport {
        stage: "sieve_select".into(),
        index: None,
        achieved: Some(best.to_string()),
        budget: Some(budget.to_string()),
        depth: t.depth(),
        suggested_depth: None,
        achievable_index_depth: None,
        detail: "no nonempty level set certifies the future bound".into(),
    }))
}

/// Everything recorded about step `i`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub index: DyadicInterval,
    pub ordering: u64,
    pub frequency: u32,
    pub cover_size: usize,
    #[serde(with = "serde_rational")]
    pub norm_sq: Rational,
    /// `Σ_{j<i} |⟨T b_j, b_i⟩|`.
    #[serde(with = "serde_rational")]
    pub interaction: Rational,
    #[serde(with = "serde_rational")]
    pub interaction_majorant: Rational,
    /// `η 4^{-i} ‖b_i‖₂²`, shared by the interaction and the future bound.
    #[serde(with = "serde_rational")]
    pub budget: Rational,
    /// `⟨T b_i, b_i⟩`.
    #[serde(with = "serde_rational")]
    pub diagonal: Rational,
    /// `δ ‖b_i‖₂²`.
    #[serde(with = "serde_rational")]
    pub diagonal_floor: Rational,
    /// `X(ε)` achieved by the sign choice.
    #[serde(with = "serde_rational")]
    pub sign_gain: Rational,
    /// Certified upper end of `‖P_{Λ_{i+1}} T* b_i‖_{H¹}`.
    #[serde(with = "serde_rational")]
    pub future: Rational,
    pub future_estimate: f64,
    pub future_error: f64,
    pub future_fallback: bool,
    /// `Σ_{j>i} |⟨T b_j, b_i⟩|`, the expanded form of the future term.
    #[serde(with = "serde_rational")]
    pub future_expanded: Rational,
    #[serde(with = "serde_rational")]
    pub future_max_single: Rational,
}

pub const FUTURE_SCOPE_NOTE: &str = "the future bound covers vectors supported on the reserved levels up to the Haar depth; \
     the infinite span of later blocks is replaced by this finite truncation";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagonalizationCertificate {
    #[serde(with = "serde_rational")]
    pub eta: Rational,
    /// Diagonal floor; `None` skips the sign normalization and the floor.
    #[serde(with = "crate::rational::serde_rational_opt")]
    pub delta: Option<Rational>,
    pub depth: u32,
    pub index_count: usize,
    #[serde(with = "serde_rational")]
    pub norm_bound: Rational,
    pub norm_bound_source: NormBoundSource,
    pub operator_digest: String,
    /// Intervals `I` with `σ_I = -1`; the basis diagonalizes `T Σ`.
    pub flipped: Vec<DyadicInterval>,
    pub steps: Vec<StepRecord>,
    /// `lambda_sets[i] = Λ_{i+1}`.
    pub lambda_sets: Vec<Vec<u32>>,
    #[serde(with = "crate::rational::serde_rational")]
    pub kappa: Rational,
    pub feasible: bool,
    pub scope: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Diagonalization {
    pub basis: BlockBasis,
    pub certificate: DiagonalizationCertificate,
}

/// Runs the construction over `𝒟^{index_depth}` for `T Σ`, where `Σ`
/// normalizes the diagonal signs; see [`normalize_diagonal_signs`].
pub fn quasi_diagonalize(t: &OperatorMatrix, delta: &Rational, eta: &Rational, index_depth: u32) -> Result<Diagonalization> {
    if index_depth > t.depth() || index_depth >= 40 {
        return Err(Error::DepthBudget {
            n: index_depth,
            budget: t.depth(),
        });
    }
    quasi_diagonalize_prefix(t, Some(delta), eta, (1usize << (index_depth + 1)) - 1)
}

/// Runs the construction over the first `count` intervals in ordering order.
///
/// With `delta = None` the operator is used as given and no lower bound on
/// `⟨T b_i, b_i⟩` is enforced.
pub fn quasi_diagonalize_prefix(
    t: &OperatorMatrix,
    delta: Option<&Rational>,
    eta: &Rational,
    count: usize,
) -> Result<Diagonalization> {
    if !eta.is_positive() || delta.is_some_and(|d| d.is_negative()) {
        return Err(Error::Precondition("need eta > 0 and delta >= 0".into()));
    }
    if count == 0 {
        return Err(Error::Precondition("at least one index is required".into()));
    }
    let depth = t.depth();
    let last_index = DyadicInterval::from_ordering(count as u64 - 1);
    if last_index.n > depth {
        return Err(Error::DepthBudget {
            n: last_index.n,
            budget: depth,
        });
    }
    let (normalized, sigma) = match delta {
        Some(d) => normalize_diagonal_signs(t, d)?,
        None => (t.clone(), SignAssignment::new()),
    };
    let floor_factor = delta.cloned().unwrap_or_else(Rational::zero);

    let mut blocks: BTreeMap<DyadicInterval, Vec<DyadicInterval>> = BTreeMap::new();
    let mut eps = SignAssignment::new();
    let mut vectors: Vec<HaarVector> = Vec::with_capacity(count);
    let mut images: Vec<HaarVector> = Vec::with_capacity(count);
    let mut frequencies: BTreeMap<DyadicInterval, u32> = BTreeMap::new();
    let mut steps: Vec<StepRecord> = Vec::with_capacity(count);
    let mut lambda_sets: Vec<Vec<u32>> = Vec::with_capacity(count);
    let mut lambda: BTreeSet<u32> = (1..=depth).collect();
    let mut previous_level = 0u32;

    // `usable` counts indices that would stand if the run stopped here.
    let with_index = |err: Error, index: DyadicInterval, usable: usize| -> Error {
        match err {
            Error::Infeasible(mut report) => {
                report.index = Some(index);
                report.achievable_index_depth = achievable_depth(usable);
                if report.suggested_depth.is_none() {
                    report.suggested_depth = Some(depth + 1);
                }
                Error::Infeasible(report)
            }
            other => other,
        }
    };

    for i in 0..count {
        let index = DyadicInterval::from_ordering(i as u64);
        let budget = eta * dyadic(2 * i as u32) * index.measure();
        let (level, cover, majorant) = if i == 0 {
            (0, vec![DyadicInterval::UNIT], Rational::zero())
        } else {
            let parent = index.parent().expect("non-root index");
            let parent_level = frequencies[&parent];
            let candidates: BTreeSet<u32> = lambda
                .iter()
                .copied()
                .filter(|&m| m > previous_level && m > parent_level)
                .collect();
            let choice = select_frequency(&images, &candidates, &blocks[&parent], Side::of(index), &budget, depth)
                .map_err(|e| with_index(e, index, i))?;
            (choice.level, choice.cover, choice.majorant)
        };

        let (signs, gain) = if i == 0 {
            (SignAssignment::all_plus([DyadicInterval::UNIT]), Rational::zero())
        } else {
            choose_signs(&normalized, &cover)
        };
        let b = HaarVector::from_pairs(cover.iter().map(|&k| (k, signs.sign_or_plus(k).to_rational())));
        let image = normalized.apply(&b);
        let norm_sq = index.measure();
        let diagonal = inner_product(&image, &b);
        let diagonal_floor = &floor_factor * &norm_sq;
        if delta.is_some() && diagonal < diagonal_floor {
            return Err(Error::VerificationFailed(format!(
                "diagonal {diagonal} below {diagonal_floor} at {index} despite the sign choice"
            )));
        }
        let interaction: Rational = images.iter().map(|img| inner_product(img, &b).abs()).sum();

        let remaining: BTreeSet<u32> = lambda.iter().copied().filter(|&n| n > level).collect();
        let sieve = if i + 1 == count {
            SieveOutcome {
                levels: BTreeSet::new(),
                certified: H1Estimate::zero(),
                used_fallback: false,
            }
        } else if remaining.is_empty() {
            return Err(with_index(
                Error::infeasible(InfeasibleReport {
                    stage: "sieve_select".into(),
                    index: None,
                    achieved: None,
                    budget: Some(budget.to_string()),
                    depth,
                    suggested_depth: Some(depth + (count - i - 1) as u32),
                    achievable_index_depth: None,
                    detail: "no levels remain above the chosen frequency".into(),
                }),
                index,
                i + 1,
            ));
        } else {
            // The last index needs no reservation, so index i itself still stands.
            sieve_select(&normalized, &b, &remaining, &budget).map_err(|e| with_index(e, index, i + 1))?
        };

        eps.extend(&signs);
        blocks.insert(index, cover.clone());
        frequencies.insert(index, level);
        steps.push(StepRecord {
            index,
            ordering: i as u64,
            frequency: level,
            cover_size: cover.len(),
            norm_sq,
            interaction,
            interaction_majorant: majorant,
            budget,
            diagonal,
            diagonal_floor,
            sign_gain: gain,
            future: sieve.certified.upper.clone(),
            future_estimate: sieve.certified.value,
            future_error: sieve.certified.error,
            future_fallback: sieve.used_fallback,
            future_expanded: Rational::zero(),
            future_max_single: Rational::zero(),
        });
        lambda_sets.push(sieve.levels.iter().copied().collect());
        lambda = sieve.levels;
        previous_level = level;
        vectors.push(b);
        images.push(image);
    }

    // Expanded future terms, now that every block exists.
    let expanded: Vec<(Rational, Rational)> = (0..count)
        .into_par_iter()
        .map(|i| {
            let mut total = Rational::zero();
            let mut single = Rational::zero();
            for image in &images[i + 1..] {
                let v = inner_product(image, &vectors[i]).abs();
                if v > single {
                    single = v.clone();
                }
                total += v;
            }
            (total, single)
        })
        .collect();
    for (step, (total, single)) in steps.iter_mut().zip(expanded) {
        step.future_expanded = total;
        step.future_max_single = single;
    }

    let indices: Vec<DyadicInterval> = blocks.keys().copied().collect();
    let family = IntervalFamily::new(indices, blocks)?;
    let report = check_jones(&family);
    let kappa = report
        .kappa
        .clone()
        .ok_or_else(|| Error::JonesViolation(format!("{:?}", report.violations.first())))?;
    let basis = BlockBasis::assemble(family, eps)?;
    let certificate = DiagonalizationCertificate {
        eta: eta.clone(),
        delta: delta.cloned(),
        depth,
        index_count: count,
        norm_bound: t.norm_bound().clone(),
        norm_bound_source: t.norm_bound_source(),
        operator_digest: t.digest(),
        flipped: sigma.minus_set(),
        steps,
        lambda_sets,
        feasible: kappa.is_one(),
        kappa,
        scope: FUTURE_SCOPE_NOTE.into(),
    };
    Ok(Diagonalization { basis, certificate })
}

/// Largest `d` with `𝒟^d` inside the first `completed` indices.
fn achievable_depth(completed: usize) -> Option<u32> {
    let mut d = None;
    let mut size = 1usize;
    let mut level = 0u32;
    while size <= completed {
        d = Some(level);
        level += 1;
        size = (1usize << (level + 1)) - 1;
    }
    d
}

/// Re-derives every recorded inequality from `t` and the stored basis.
///
/// Nothing computed during the construction is trusted: images are
/// recomputed with `t.apply`, the family is re-checked, and the cover
/// structure is rebuilt from the parent blocks.
pub fn verify_diagonalization(t: &OperatorMatrix, diag: &Diagonalization) -> VerificationReport {
    let cert = &diag.certificate;
    let basis = &diag.basis;
    let mut checks = Vec::new();
    let sigma: SignAssignment = {
        let mut s = SignAssignment::new();
        for &i in &cert.flipped {
            s.insert(i, Sign::Minus);
        }
        s
    };
    let negative: Vec<DyadicInterval> = crate::dyadic::tree(t.depth())
        .filter(|&i| t.diagonal(i).is_negative())
        .collect();
    checks.push(Check::new(
        "sign normalization",
        if cert.delta.is_some() { negative == cert.flipped } else { cert.flipped.is_empty() },
        format!("{} flipped columns", cert.flipped.len()),
    ));
    let digest = t.digest();
    let t = &t.flip_columns(&sigma);

    checks.push(Check::new(
        "operator digest",
        digest == cert.operator_digest,
        format!("certificate {}", cert.operator_digest),
    ));
    let indices = basis.indices();
    let expected: Vec<DyadicInterval> = (0..cert.index_count as u64).map(DyadicInterval::from_ordering).collect();
    checks.push(Check::new(
        "index set",
        indices == expected.as_slice() && cert.steps.len() == cert.index_count,
        format!("{} indices", indices.len()),
    ));
    if indices != expected.as_slice() || cert.steps.len() != cert.index_count {
        return VerificationReport::from_checks(checks);
    }

    let report = check_jones(basis.family());
    checks.push(Check::new(
        "jones conditions with kappa = 1",
        report.satisfied && report.kappa.as_ref().is_some_and(|k| k.is_one()) && cert.kappa.is_one(),
        format!("kappa = {:?}", report.kappa.map(|k| k.to_string())),
    ));

    // Cover structure and frequencies.
    let mut structure_ok = true;
    let mut structure_detail = String::from("covers match the parent halves");
    let mut previous = None;
    for (i, &index) in indices.iter().enumerate() {
        let step = &cert.steps[i];
        let members = basis.family().blocks(index);
        let level = members.first().map(|k| k.n).unwrap_or(0);
        let rebuilt = match index.parent() {
            None => Ok(vec![DyadicInterval::UNIT]),
            Some(parent) => gamlen_gaudet_children(basis.family().blocks(parent), Side::of(index), level),
        };
        let matches = rebuilt.as_deref().is_ok_and(|cover| cover == members)
            && step.frequency == level
            && step.index == index
            && previous.is_none_or(|p| level > p)
            && basis.norm_sq(index) == &index.measure()
            && step.norm_sq == index.measure();
        if !matches && structure_ok {
            structure_ok = false;
            structure_detail = format!("cover or frequency mismatch at {index}");
        }
        previous = Some(level);
    }
    checks.push(Check::new("gamlen-gaudet covers", structure_ok, structure_detail));

    // Level sets: nested, and m_i ∈ Λ_i \ Λ_{i+1}.
    let mut lambda_ok = cert.lambda_sets.len() == cert.index_count;
    if lambda_ok {
        for i in 0..cert.index_count {
            let next: BTreeSet<u32> = cert.lambda_sets[i].iter().copied().collect();
            let m = cert.steps[i].frequency;
            lambda_ok &= !next.contains(&m) && next.iter().all(|&n| n > m && n <= cert.depth);
            if i > 0 {
                let current: BTreeSet<u32> = cert.lambda_sets[i - 1].iter().copied().collect();
                lambda_ok &= current.contains(&m) && next.is_subset(&current);
            }
        }
    }
    checks.push(Check::new("nested level sets", lambda_ok, "m_i in Λ_i \\ Λ_(i+1)".to_string()));

    // The numeric inequalities.
    let vectors: Vec<&HaarVector> = indices.iter().map(|&i| basis.vector(i)).collect();
    let images: Vec<HaarVector> = vectors.par_iter().map(|b| t.apply(b)).collect();
    let per_step: Vec<Vec<Check>> = (0..indices.len())
        .into_par_iter()
        .map(|i| {
            let step = &cert.steps[i];
            let index = indices[i];
            let b = vectors[i];
            let mut out = Vec::new();
            let budget = &cert.eta * dyadic(2 * i as u32) * index.measure();
            let interaction: Rational = images[..i].iter().map(|img| inner_product(img, b).abs()).sum();
            out.push(Check::new(
                format!("interaction at {index}"),
                budget == step.budget && interaction == step.interaction && interaction <= budget,
                format!("{interaction} <= {budget}"),
            ));
            let diagonal = inner_product(&images[i], b);
            let floor = cert.delta.clone().unwrap_or_else(Rational::zero) * index.measure();
            out.push(Check::new(
                format!("diagonal at {index}"),
                diagonal == step.diagonal && floor == step.diagonal_floor && (cert.delta.is_none() || diagonal >= floor),
                format!("{diagonal} >= {floor}"),
            ));
            let levels: BTreeSet<u32> = cert.lambda_sets[i].iter().copied().collect();
            let future = if levels.is_empty() {
                Rational::zero()
            } else {
                h1_norm(&project_levels(&t.adjoint_apply(b), &levels)).upper
            };
            out.push(Check::new(
                format!("future at {index}"),
                future == step.future && future <= budget,
                format!("{future} <= {budget}"),
            ));
            let mut expanded = Rational::zero();
            let mut single = Rational::zero();
            for img in &images[i + 1..] {
                let v = inner_product(img, b).abs();
                if v > single {
                    single = v.clone();
                }
                expanded += v;
            }
            out.push(Check::new(
                format!("expanded future at {index}"),
                expanded == step.future_expanded && single == step.future_max_single && single <= future,
                format!("max single {single} <= {future}"),
            ));
            out
        })
        .collect();
    checks.extend(per_step.into_iter().flatten());
    checks.push(Check::new(
        "recorded feasibility",
        cert.feasible,
        "certificate declares feasible".to_string(),
    ));
    VerificationReport::from_checks(checks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::{generate, GeneratorKind, GeneratorSpec};
    use crate::rational::{int, rat};

    fn iv(n: u32, k: u64) -> DyadicInterval {
        DyadicInterval::new(n, k).unwrap()
    }

    #[test]
    fn decompose_identity_and_perturbation() {
        let mut t = OperatorMatrix::identity(3);
        let (alpha, rest) = decompose_column(&t, iv(1, 0)).unwrap();
        assert_eq!((alpha, rest.is_zero()), (int(1), true));
        t.set(iv(2, 3), iv(1, 0), rat(1, 4)).unwrap();
        let (alpha, rest) = decompose_column(&t, iv(1, 0)).unwrap();
        assert_eq!(alpha, int(1));
        assert_eq!(rest, HaarVector::basis(iv(2, 3)).scaled(&rat(1, 4)));
        assert!(decompose_column(&t, iv(4, 0)).is_err());
    }

    #[test]
    fn normalization_makes_the_diagonal_positive() {
        let t = OperatorMatrix::scaled_identity(2, &int(-1));
        let (n, sigma) = normalize_diagonal_signs(&t, &int(1)).unwrap();
        assert!(crate::dyadic::tree(2).all(|i| n.diagonal(i) == int(1)));
        assert_eq!(sigma.len(), 7);
        let id = OperatorMatrix::identity(2);
        let (same, sigma) = normalize_diagonal_signs(&id, &int(1)).unwrap();
        assert_eq!((same, sigma.is_empty()), (id, true));
        let mut mixed = OperatorMatrix::identity(1);
        mixed.set(iv(1, 1), iv(1, 1), rat(-3, 2)).unwrap();
        mixed.set(iv(0, 0), iv(1, 1), rat(1, 5)).unwrap();
        let (n, _) = normalize_diagonal_signs(&mixed, &rat(1, 2)).unwrap();
        assert_eq!(n.diagonal(iv(1, 1)), rat(3, 2));
        assert_eq!(n.get(iv(0, 0), iv(1, 1)), rat(-1, 5));
        let zero = OperatorMatrix::zero(1);
        assert!(matches!(normalize_diagonal_signs(&zero, &rat(1, 2)), Err(Error::ZeroDiagonal(_))));
        assert!(normalize_diagonal_signs(&zero, &int(0)).is_ok());
    }

    #[test]
    fn covers() {
        assert_eq!(
            gamlen_gaudet_children(&[iv(0, 0)], Side::Left, 2).unwrap(),
            vec![iv(2, 0), iv(2, 1)]
        );
        assert_eq!(gamlen_gaudet_children(&[iv(0, 0)], Side::Right, 1).unwrap(), vec![iv(1, 1)]);
        let cover = gamlen_gaudet_children(&[iv(1, 0), iv(1, 1)], Side::Left, 3).unwrap();
        assert_eq!(cover, vec![iv(3, 0), iv(3, 1), iv(3, 4), iv(3, 5)]);
        assert!(matches!(
            gamlen_gaudet_children(&[iv(1, 0)], Side::Left, 1),
            Err(Error::CoverTooCoarse { .. })
        ));
    }

    #[test]
    fn sign_choice_follows_the_coupling() {
        let cover = [iv(2, 0), iv(2, 1)];
        let id = OperatorMatrix::identity(2);
        let (signs, gain) = choose_signs(&id, &cover);
        assert!(signs.iter().all(|(_, s)| s.is_plus()) && gain.is_zero());

        let mut t = OperatorMatrix::identity(2);
        t.set(iv(2, 0), iv(2, 1), rat(1, 2)).unwrap();
        t.set(iv(2, 1), iv(2, 0), rat(1, 2)).unwrap();
        let (signs, gain) = choose_signs(&t, &cover);
        assert_eq!(signs.get(iv(2, 0)), signs.get(iv(2, 1)));
        assert_eq!(gain, sign_interaction(&t, &cover, &signs));
        assert!(gain.is_positive());

        t.set(iv(2, 0), iv(2, 1), rat(-1, 2)).unwrap();
        t.set(iv(2, 1), iv(2, 0), rat(-1, 2)).unwrap();
        let (signs, gain) = choose_signs(&t, &cover);
        assert_ne!(signs.get(iv(2, 0)), signs.get(iv(2, 1)));
        assert!(gain.is_positive());
    }

    #[test]
    fn frequency_is_the_smallest_admissible_level() {
        let candidates: BTreeSet<u32> = (1..=5).collect();
        let choice = select_frequency(&[], &candidates, &[iv(0, 0)], Side::Left, &int(0), 5).unwrap();
        assert_eq!(choice.level, 1);
        assert_eq!(choice.cover, vec![iv(1, 0)]);
        let images = vec![HaarVector::basis(iv(1, 0))];
        let choice = select_frequency(&images, &candidates, &[iv(0, 0)], Side::Left, &int(0), 5).unwrap();
        assert_eq!(choice.level, 2);
        let err = select_frequency(&images, &[1].into(), &[iv(0, 0)], Side::Left, &int(0), 5).unwrap_err();
        assert!(matches!(err, Error::Infeasible(ref r) if r.achieved.as_deref() == Some("1/2")));
    }

    #[test]
    fn sieve_trivial_cases() {
        let levels: BTreeSet<u32> = (1..=4).collect();
        let id = OperatorMatrix::identity(4);
        let b = HaarVector::basis(iv(0, 0));
        let out = sieve_select(&id, &b, &levels, &int(0)).unwrap();
        assert_eq!(out.levels, levels);
        let zero = OperatorMatrix::zero(4);
        assert_eq!(sieve_select(&zero, &b, &levels, &int(0)).unwrap().levels, levels);
        let b2 = HaarVector::basis(iv(2, 1));
        let out = sieve_select(&id, &b2, &levels, &int(0)).unwrap();
        assert_eq!(out.levels, [1, 3, 4].into());
    }

    #[test]
    fn identity_diagonalizes_exactly() {
        let t = OperatorMatrix::identity(6);
        let diag = quasi_diagonalize(&t, &int(1), &rat(1, 4), 2).unwrap();
        let cert = &diag.certificate;
        assert!(cert.feasible);
        for (i, step) in cert.steps.iter().enumerate() {
            assert_eq!(step.frequency, i as u32);
            assert!(step.interaction.is_zero() && step.future.is_zero());
            assert_eq!(step.diagonal, step.norm_sq);
        }
        assert!(verify_diagonalization(&t, &diag).passed);
    }

    #[test]
    fn noisy_identity_diagonalizes_with_margin() {
        let spec = GeneratorSpec::new(GeneratorKind::RandomLargeDiagonal, 12)
            .delta(int(1))
            .mass(rat(1, 1_000_000))
            .seed(11);
        let t = generate(&spec).unwrap();
        let diag = quasi_diagonalize(&t, &int(1), &rat(1, 4), 2).unwrap();
        assert_eq!(diag.certificate.kappa, int(1));
        let report = verify_diagonalization(&t, &diag);
        assert!(report.passed, "{:?}", report.failures());
        for step in &diag.certificate.steps {
            assert!(step.interaction <= step.budget && step.future <= step.budget);
            assert!(step.diagonal >= step.diagonal_floor);
        }
    }

    #[test]
    fn negative_diagonals_are_absorbed_into_the_signs() {
        let t = OperatorMatrix::scaled_identity(4, &int(-2));
        let diag = quasi_diagonalize(&t, &int(1), &rat(1, 2), 1).unwrap();
        assert_eq!(diag.certificate.flipped.len(), 31);
        assert!(verify_diagonalization(&t, &diag).passed);
        for step in &diag.certificate.steps {
            assert_eq!(step.diagonal, &step.norm_sq * int(2));
        }
    }

    #[test]
    fn too_shallow_operators_are_reported() {
        let t = OperatorMatrix::identity(4);
        let err = quasi_diagonalize(&t, &int(1), &rat(1, 4), 3).unwrap_err();
        match err {
            Error::Infeasible(report) => {
                assert_eq!(report.achievable_index_depth, Some(1));
                assert!(report.index.is_some());
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn tampering_is_detected() {
        let t = OperatorMatrix::identity(4);
        let mut diag = quasi_diagonalize(&t, &int(1), &rat(1, 4), 1).unwrap();
        diag.certificate.steps[1].diagonal = int(7);
        assert!(!verify_diagonalization(&t, &diag).passed);
        let other = OperatorMatrix::scaled_identity(4, &int(2));
        let clean = quasi_diagonalize(&t, &int(1), &rat(1, 4), 1).unwrap();
        assert!(!verify_diagonalization(&other, &clean).passed);
    }
}
