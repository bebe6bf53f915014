//! Factoring the identity through `T` or `Id - T`.
//!
//! A `δ = 0` almost-diagonalization of `T` gives outer blocks `b_K`. Each
//! block is colored by whether `⟨T b_K, b_K⟩` or `⟨(Id-T) b_K, b_K⟩` carries
//! at least half of `‖b_K‖₂²`. Inside one color a Gamlen-Gaudet style
//! selection builds collections `𝓒_I` of outer indices, and
//! `c_I = Σ_{K ∈ 𝓒_I} b_K` is factored through `H = T` or `H = Id - T`.

use std::collections::BTreeMap;

use num_traits::{One, Signed};
use serde::{Deserialize, Serialize};

use crate::block::{BlockBasis, SignAssignment};
use crate::dyadic::DyadicInterval;
use crate::error::{Error, InfeasibleReport, Result};
use crate::factorization::{assemble, default_tol, BlockMatrix, WitnessSummary};
use crate::haar::{inner_product, HaarVector};
use crate::jones::{check_jones, reiterate, IntervalFamily};
use crate::operator::OperatorMatrix;
use crate::quasi_diag::{quasi_diagonalize_prefix, verify_diagonalization, Diagonalization};
use crate::rational::{serde_rational, Rational};
use crate::verify::{Check, VerificationReport};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Color {
    TLarge,
    CLarge,
}

impl Color {
    pub fn other(self) -> Color {
        match self {
            Color::TLarge => Color::CLarge,
            Color::CLarge => Color::TLarge,
        }
    }

    pub fn choice(self) -> Choice {
        match self {
            Color::TLarge => Choice::T,
            Color::CLarge => Choice::IdMinusT,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Choice {
    #[serde(rename = "T")]
    T,
    #[serde(rename = "Id_minus_T")]
    IdMinusT,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColoredBlocks {
    pub basis: BlockBasis,
    #[serde(with = "crate::dyadic::ordering_keys")]
    pub colors: BTreeMap<DyadicInterval, Color>,
    /// Color with the larger total index measure; ties go to `TLarge`.
    pub chosen: Color,
}

impl ColoredBlocks {
    pub fn measure(&self, color: Color) -> Rational {
        self.colors
            .iter()
            .filter(|(_, c)| **c == color)
            .map(|(i, _)| i.measure())
            .sum()
    }
}

/// `T_large` iff `⟨T b_K, b_K⟩ >= ‖b_K‖₂²/2`.
pub fn color_blocks(t: &OperatorMatrix, basis: &BlockBasis) -> ColoredBlocks {
    let half = Rational::new(1.into(), 2.into());
    let colors: BTreeMap<DyadicInterval, Color> = basis
        .vectors()
        .map(|(index, b)| {
            let value = inner_product(&t.apply(b), b);
            let color = if value >= basis.norm_sq(index) * &half {
                Color::TLarge
            } else {
                Color::CLarge
            };
            (index, color)
        })
        .collect();
    let mut colored = ColoredBlocks {
        basis: basis.clone(),
        colors,
        chosen: Color::TLarge,
    };
    if colored.measure(Color::CLarge) > colored.measure(Color::TLarge) {
        colored.chosen = Color::CLarge;
    }
    colored
}

/// A one-color family of outer indices over `𝒟^{index_depth}`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Selection {
    pub color: Color,
    pub family: IntervalFamily,
}

struct Selector<'a> {
    colors: &'a BTreeMap<DyadicInterval, Color>,
    color: Color,
}

impl Selector<'_> {
    fn has(&self, p: DyadicInterval) -> bool {
        self.colors.contains_key(&p)
    }

    /// Both halves of `p` can be tiled at height `h - 1`.
    fn ok(&self, p: DyadicInterval, h: u32) -> bool {
        h == 0 || (self.tile(p.left(), h - 1).is_some() && self.tile(p.right(), h - 1).is_some())
    }

    /// Outer indices of the selected color, all `ok` at height `h`, whose
    /// intervals partition `p`.
    fn tile(&self, p: DyadicInterval, h: u32) -> Option<Vec<DyadicInterval>> {
        if !self.has(p) {
            return None;
        }
        if self.colors[&p] == self.color && self.ok(p, h) {
            return Some(vec![p]);
        }
        let (l, r) = p.halves();
        if !(self.has(l) && self.has(r)) {
            return None;
        }
        let mut out = self.tile(l, h)?;
        out.extend(self.tile(r, h)?);
        Some(out)
    }

    /// Topmost indices of the selected color that are `ok` at height `h`.
    fn roots(&self, p: DyadicInterval, h: u32, out: &mut Vec<DyadicInterval>) {
        if !self.has(p) {
            return;
        }
        if self.colors[&p] == self.color && self.ok(p, h) {
            out.push(p);
            return;
        }
        let (l, r) = p.halves();
        self.roots(l, h, out);
        self.roots(r, h, out);
    }

    fn select(&self, index_depth: u32) -> Option<IntervalFamily> {
        let mut roots = Vec::new();
        self.roots(DyadicInterval::UNIT, index_depth, &mut roots);
        if roots.is_empty() {
            return None;
        }
        let mut blocks: BTreeMap<DyadicInterval, Vec<DyadicInterval>> = BTreeMap::new();
        blocks.insert(DyadicInterval::UNIT, roots);
        for index in crate::dyadic::tree(index_depth) {
            if index.n == index_depth {
                continue;
            }
            let h = index_depth - index.n;
            let parents = blocks[&index].clone();
            let mut left = Vec::new();
            let mut right = Vec::new();
            for p in parents {
                left.extend(self.tile(p.left(), h - 1)?);
                right.extend(self.tile(p.right(), h - 1)?);
            }
            blocks.insert(index.left(), left);
            blocks.insert(index.right(), right);
        }
        IntervalFamily::new(crate::dyadic::tree(index_depth).collect(), blocks).ok()
    }
}

/// Largest index depth the color supports, if any.
pub fn achievable_depth(colored: &ColoredBlocks, color: Color) -> Option<u32> {
    let selector = Selector {
        colors: &colored.colors,
        color,
    };
    let max = colored.colors.keys().map(|k| k.n).max().unwrap_or(0);
    (0..=max).rev().find(|&d| selector.select(d).is_some())
}

/// Tries the majority color first, then the other one.
pub fn gg_select(colored: &ColoredBlocks, index_depth: u32) -> Result<Selection> {
    for color in [colored.chosen, colored.chosen.other()] {
        let selector = Selector {
            colors: &colored.colors,
            color,
        };
        if let Some(family) = selector.select(index_depth) {
            return Ok(Selection { color, family });
        }
    }
    let achievable = [Color::TLarge, Color::CLarge]
        .into_iter()
        .filter_map(|c| achievable_depth(colored, c))
        .max();
    Err(Error::infeasible(InfeasibleReport {
        stage: "gg_select".into(),
        index: None,
        achieved: None,
        budget: None,
        depth: colored.colors.keys().map(|k| k.n).max().unwrap_or(0),
        suggested_depth: None,
        achievable_index_depth: achievable,
        detail: format!(
            "neither color supports a dyadic subtree of depth {index_depth} among {} outer blocks",
            colored.colors.len()
        ),
    }))
}

/// `η / (8 (2 + η))`, the interaction budget of the outer diagonalization.
pub fn outer_eta(eta: &Rational) -> Rational {
    let two = Rational::from_integer(2.into());
    eta / (Rational::from_integer(8.into()) * (two + eta))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrimarityResult {
    pub choice: Choice,
    #[serde(with = "serde_rational")]
    pub eta: Rational,
    pub index_depth: u32,
    pub outer: Diagonalization,
    #[serde(with = "crate::dyadic::ordering_keys")]
    pub colors: BTreeMap<DyadicInterval, Color>,
    pub selection: Selection,
    /// `c_I = Σ_{K ∈ 𝓒_I} b_K` as a block basis of the Haar system.
    pub composed: BlockBasis,
    #[serde(with = "serde_rational")]
    pub kappa: Rational,
    /// `min_I ⟨H c_I, c_I⟩ / ‖c_I‖₂²`.
    #[serde(with = "serde_rational")]
    pub delta_eff: Rational,
    /// `Σ_{I≠J} |⟨H c_J, c_I⟩| / ⟨H c_I, c_I⟩`.
    #[serde(with = "serde_rational")]
    pub contraction: Rational,
    /// `1 / ((1 - contraction) δ_eff)`.
    #[serde(with = "serde_rational")]
    pub norm_product_bound: Rational,
    #[serde(with = "serde_rational")]
    pub residual: Rational,
    #[serde(with = "serde_rational")]
    pub tol: Rational,
    pub neumann_terms: u32,
    pub precision_bits: u32,
    #[serde(with = "serde_rational")]
    pub inverse_entrywise_error: Rational,
    pub witness: WitnessSummary,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<OperatorMatrix>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s: Option<OperatorMatrix>,
}

impl PrimarityResult {
    pub fn without_matrices(mut self) -> Self {
        self.r = None;
        self.s = None;
        self
    }
}

pub fn factor_primary(t: &OperatorMatrix, eta: &Rational, index_depth: u32) -> Result<PrimarityResult> {
    factor_primary_with_tol(t, eta, index_depth, &default_tol())
}

/// Outer diagonalization over as many ordering-prefix indices as the depth
/// allows, falling back to shorter prefixes when a step is infeasible.
fn outer_diagonalization(t: &OperatorMatrix, eta: &Rational, index_depth: u32) -> Result<Diagonalization> {
    let needed = (1usize << (index_depth + 1)) - 1;
    let most = (t.depth() as usize + 1).max(needed);
    let mut last = None;
    for count in (needed..=most).rev() {
        match quasi_diagonalize_prefix(t, None, &outer_eta(eta), count) {
            Ok(d) => return Ok(d),
            Err(err @ Error::Infeasible(_)) | Err(err @ Error::DepthBudget { .. }) => last = Some(err),
            Err(err) => return Err(err),
        }
    }
    Err(last.expect("at least one attempt"))
}

/// Composed family `C_I = ∪_{K ∈ 𝓒_I} 𝓑_K` and its basis.
fn compose(outer: &Diagonalization, selection: &Selection) -> Result<(BlockBasis, Rational)> {
    let reiteration = reiterate(outer.basis.family(), &selection.family)?;
    let composed = reiteration.family;
    let report = check_jones(&composed);
    let kappa = report
        .kappa
        .ok_or_else(|| Error::JonesViolation("composed family fails the Jones conditions".into()))?;
    let mut signs = SignAssignment::new();
    for member in composed.members() {
        signs.insert(member, outer.basis.signs().sign_or_plus(member));
    }
    Ok((BlockBasis::assemble(composed, signs)?, kappa))
}

struct Core {
    delta_eff: Rational,
    contraction: Rational,
    m: BlockMatrix,
    u: crate::factorization::AlmostInverse,
}

fn core(h: &OperatorMatrix, composed: &BlockBasis) -> Result<Core> {
    let u = crate::factorization::build_u(h, composed)?;
    let delta_eff = u
        .diagonal
        .iter()
        .zip(&u.norms_sq)
        .map(|(d, n)| d / n)
        .min()
        .ok_or_else(|| Error::Precondition("empty composed family".into()))?;
    let m = u.block_matrix(h);
    let contraction = m.off_diagonal_sum();
    Ok(Core {
        delta_eff,
        contraction,
        m,
        u,
    })
}

fn target_operator(t: &OperatorMatrix, choice: Choice) -> OperatorMatrix {
    match choice {
        Choice::T => t.clone(),
        Choice::IdMinusT => t.complement(),
    }
}

pub fn factor_primary_with_tol(t: &OperatorMatrix, eta: &Rational, index_depth: u32, tol: &Rational) -> Result<PrimarityResult> {
    if !eta.is_positive() {
        return Err(Error::Precondition("need eta > 0".into()));
    }
    let outer = outer_diagonalization(t, eta, index_depth)?;
    let colored = color_blocks(t, &outer.basis);
    let selection = gg_select(&colored, index_depth)?;
    let (composed, kappa) = compose(&outer, &selection)?;
    if !kappa.is_one() {
        return Err(Error::VerificationFailed(format!("composed family has kappa {kappa}")));
    }
    let choice = selection.color.choice();
    let h = target_operator(t, choice);
    let core = core(&h, &composed)?;
    if core.contraction >= Rational::one() {
        return Err(Error::NotContractive(core.contraction.to_string()));
    }
    let norm_product_bound = Rational::one() / ((Rational::one() - &core.contraction) * &core.delta_eff);
    let ceiling = Rational::from_integer(2.into()) + eta;
    if norm_product_bound > ceiling {
        return Err(Error::VerificationFailed(format!(
            "norm product bound {norm_product_bound} exceeds {ceiling}"
        )));
    }
    let assembled = assemble(&h, &SignAssignment::new(), &core.u, &core.m, &core.contraction, tol)?;
    if assembled.residual > tol * tol {
        return Err(Error::VerificationFailed(format!("residual {} exceeds tol²", assembled.residual)));
    }
    Ok(PrimarityResult {
        choice,
        eta: eta.clone(),
        index_depth,
        colors: colored.colors,
        outer,
        selection,
        composed,
        kappa,
        delta_eff: core.delta_eff,
        contraction: core.contraction,
        norm_product_bound,
        residual: assembled.residual,
        tol: tol.clone(),
        neumann_terms: assembled.neumann.terms,
        precision_bits: assembled.neumann.precision_bits,
        inverse_entrywise_error: assembled.neumann.entrywise_error,
        witness: assembled.witness,
        r: Some(assembled.r),
        s: Some(assembled.s),
    })
}

/// Re-derives every stage from `t` and checks it against the stored result.
pub fn verify_primarity(t: &OperatorMatrix, result: &PrimarityResult) -> VerificationReport {
    let mut report = verify_diagonalization(t, &result.outer);
    let mut checks = Vec::new();
    checks.push(Check::new(
        "outer budget",
        result.outer.certificate.eta == outer_eta(&result.eta) && result.outer.certificate.delta.is_none(),
        result.outer.certificate.eta.to_string(),
    ));
    let colored = color_blocks(t, &result.outer.basis);
    checks.push(Check::new(
        "colors",
        colored.colors == result.colors,
        format!("{} outer blocks", colored.colors.len()),
    ));
    let pigeonhole = result.outer.basis.vectors().all(|(index, b)| {
        let tb = inner_product(&t.apply(b), b);
        let cb = inner_product(&t.complement().apply(b), b);
        &(tb + cb) == result.outer.basis.norm_sq(index)
    });
    checks.push(Check::new("pigeonhole identity", pigeonhole, "both diagonals sum to the block norm"));
    let selection = gg_select(&colored, result.index_depth);
    checks.push(Check::new(
        "selection",
        selection.as_ref().is_ok_and(|s| s == &result.selection) && result.selection.color.choice() == result.choice,
        format!("{:?}", result.choice),
    ));
    let composed = compose(&result.outer, &result.selection);
    let composed_ok = composed
        .as_ref()
        .is_ok_and(|(basis, kappa)| basis == &result.composed && kappa.is_one() && *kappa == result.kappa);
    checks.push(Check::new("composed family, kappa = 1", composed_ok, result.kappa.to_string()));
    let disjoint = {
        let mut seen = std::collections::BTreeSet::new();
        result.composed.vectors().all(|(_, c)| c.support().all(|k| seen.insert(k)))
    };
    checks.push(Check::new("disjoint supports", disjoint, "distinct c_I share no Haar interval"));

    let h = target_operator(t, result.choice);
    match core(&h, &result.composed) {
        Ok(core) => {
            checks.push(Check::new(
                "effective diagonal",
                core.delta_eff == result.delta_eff && core.delta_eff.is_positive(),
                result.delta_eff.to_string(),
            ));
            let ceiling = Rational::from_integer(2.into()) + &result.eta;
            let bound_ok = core.contraction == result.contraction
                && result.contraction < Rational::one()
                && Rational::one() / ((Rational::one() - &result.contraction) * &result.delta_eff) == result.norm_product_bound
                && result.norm_product_bound <= ceiling;
            checks.push(Check::new(
                "norm product bound",
                bound_ok,
                format!("{} <= {ceiling}", result.norm_product_bound),
            ));
            match assemble(&h, &SignAssignment::new(), &core.u, &core.m, &result.contraction, &result.tol) {
                Ok(assembled) => {
                    checks.push(Check::new(
                        "witness suite",
                        assembled.witness == result.witness,
                        format!("{} witnesses", assembled.witness.count),
                    ));
                    checks.push(Check::new(
                        "neumann series",
                        assembled.neumann.terms == result.neumann_terms
                            && assembled.neumann.entrywise_error == result.inverse_entrywise_error
                            && assembled.neumann.precision_bits == result.precision_bits,
                        format!("K = {}", assembled.neumann.terms),
                    ));
                    let matrices_match = result.r.as_ref().is_none_or(|r| r == &assembled.r)
                        && result.s.as_ref().is_none_or(|s| s == &assembled.s);
                    checks.push(Check::new("stored R and S", matrices_match, "rebuilt from the certificate"));
                    let tol_sq = &result.tol * &result.tol;
                    checks.push(Check::new(
                        "diagram residual",
                        assembled.residual == result.residual && assembled.residual <= tol_sq,
                        format!("{} <= {tol_sq}", assembled.residual),
                    ));
                }
                Err(err) => checks.push(Check::new("rebuild", false, err.to_string())),
            }
        }
        Err(err) => checks.push(Check::new("effective diagonal", false, err.to_string())),
    }
    report = report.merge(VerificationReport::from_checks(checks));
    report
}

/// `Σ_{K ∈ 𝓒_I} b_K` for a stored result, for inspection.
pub fn composed_vector(result: &PrimarityResult, index: DyadicInterval) -> Option<HaarVector> {
    result
        .composed
        .indices()
        .contains(&index)
        .then(|| result.composed.vector(index).clone())
}
