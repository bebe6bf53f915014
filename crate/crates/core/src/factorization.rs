//! `Id = S T R` from an almost-diagonalizing block basis.
//!
//! With `d_i = ⟨T b_i, b_i⟩` the almost-inverse is `U f = Σ ⟨f, b_i⟩/d_i · b_i`.
//! On block coefficients `U T` acts as the matrix `M_ij = ⟨T b_j, b_i⟩ / d_i`,
//! which is within `ρ < 1` of the identity. A truncated Neumann series `N`
//! approximates `M^{-1}`, and
//!
//! - `R h_I = Σ b_I` (the column signs `Σ` from the diagonal normalization),
//! - `S f = Σ_I (N U f)_I h_I`.

use num_traits::{One, Signed, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::block::{BlockBasis, Sign, SignAssignment};
use crate::dyadic::DyadicInterval;
use crate::error::{Error, Result};
use crate::haar::{inner_product, sl_inf_norm_sq, HaarVector};
use crate::operator::{NormBoundSource, OperatorMatrix};
use crate::quasi_diag::{quasi_diagonalize, verify_diagonalization, Diagonalization};
use crate::rational::{bits_for, dyadic, round_dyadic, serde_rational, Rational};
use crate::verify::{Check, VerificationReport};

/// Default Neumann tolerance, `2^-40`.
pub fn default_tol() -> Rational {
    dyadic(40)
}

/// `η' = δη / (4(1+η))`, so that `4η'/δ = η/(1+η)`.
///
/// This is the largest value of the form `δη/(4(1+η)) · 2^-j` and already
/// meets both `4η'/δ < 1` and `1/(1 - 4η'/δ) <= 1 + η`.
pub fn choose_eta_prime(delta: &Rational, eta: &Rational) -> Result<Rational> {
    if !delta.is_positive() || !eta.is_positive() {
        return Err(Error::Precondition("need delta > 0 and eta > 0".into()));
    }
    let candidate = delta * eta / (Rational::from_integer(4.into()) * (Rational::one() + eta));
    let rho = Rational::from_integer(4.into()) * &candidate / delta;
    debug_assert!(rho < Rational::one() && Rational::one() / (Rational::one() - &rho) <= Rational::one() + eta);
    Ok(candidate)
}

/// Dense square matrix over the block indices.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BlockMatrix {
    n: usize,
    data: Vec<Rational>,
}

impl BlockMatrix {
    pub fn zeros(n: usize) -> Self {
        BlockMatrix {
            n,
            data: vec![Rational::zero(); n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.set(i, i, Rational::one());
        }
        m
    }

    pub fn from_fn(n: usize, f: impl Fn(usize, usize) -> Rational) -> Self {
        BlockMatrix {
            n,
            data: (0..n * n).map(|p| f(p / n, p % n)).collect(),
        }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> &Rational {
        &self.data[i * self.n + j]
    }

    pub fn set(&mut self, i: usize, j: usize, value: Rational) {
        self.data[i * self.n + j] = value;
    }

    pub fn mul(&self, other: &BlockMatrix) -> BlockMatrix {
        let n = self.n;
        let data = (0..n * n)
            .into_par_iter()
            .map(|p| {
                let (i, j) = (p / n, p % n);
                (0..n)
                    .filter(|&k| !self.get(i, k).is_zero() && !other.get(k, j).is_zero())
                    .map(|k| self.get(i, k) * other.get(k, j))
                    .sum()
            })
            .collect();
        BlockMatrix { n, data }
    }

    pub fn sub(&self, other: &BlockMatrix) -> BlockMatrix {
        BlockMatrix {
            n: self.n,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        }
    }

    pub fn add(&self, other: &BlockMatrix) -> BlockMatrix {
        BlockMatrix {
            n: self.n,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn apply(&self, v: &[Rational]) -> Vec<Rational> {
        (0..self.n)
            .map(|i| (0..self.n).map(|j| self.get(i, j) * &v[j]).sum())
            .collect()
    }

    pub fn rounded(&self, bits: u32) -> BlockMatrix {
        BlockMatrix {
            n: self.n,
            data: self.data.iter().map(|v| round_dyadic(v, bits)).collect(),
        }
    }

    /// `Σ_{i≠j} |m_ij|`.
    pub fn off_diagonal_sum(&self) -> Rational {
        let mut total = Rational::zero();
        for i in 0..self.n {
            for j in 0..self.n {
                if i != j {
                    total += self.get(i, j).abs();
                }
            }
        }
        total
    }

    /// `Σ_{i,j} |m_ij|`.
    pub fn entry_sum(&self) -> Rational {
        self.data.iter().map(|v| v.abs()).sum()
    }
}

/// `U`, stored as the pairs `(b_i, d_i)`.
#[derive(Clone, Debug)]
pub struct AlmostInverse {
    pub indices: Vec<DyadicInterval>,
    pub vectors: Vec<HaarVector>,
    pub diagonal: Vec<Rational>,
    pub norms_sq: Vec<Rational>,
}

impl AlmostInverse {
    /// Block coefficients `⟨f, b_i⟩ / d_i` of `U f`.
    pub fn coefficients(&self, f: &HaarVector) -> Vec<Rational> {
        self.vectors
            .iter()
            .zip(&self.diagonal)
            .map(|(b, d)| inner_product(f, b) / d)
            .collect()
    }

    /// `‖b_i‖₂² / d_i`: how `U` rescales the orthogonal block projection.
    pub fn weights(&self) -> Vec<Rational> {
        self.norms_sq.iter().zip(&self.diagonal).map(|(n, d)| n / d).collect()
    }

    /// `M_ij = ⟨T b_j, b_i⟩ / d_i` for the operator the diagonal was taken from.
    pub fn block_matrix(&self, t: &OperatorMatrix) -> BlockMatrix {
        let images: Vec<HaarVector> = self.vectors.par_iter().map(|b| t.apply(b)).collect();
        let n = self.vectors.len();
        let entries: Vec<Rational> = (0..n * n)
            .into_par_iter()
            .map(|p| {
                let (i, j) = (p / n, p % n);
                inner_product(&images[j], &self.vectors[i]) / &self.diagonal[i]
            })
            .collect();
        BlockMatrix { n, data: entries }
    }
}

/// Builds `U` for `t` along `basis`; `t` is the operator that was diagonalized.
pub fn build_u(t: &OperatorMatrix, basis: &BlockBasis) -> Result<AlmostInverse> {
    let indices = basis.indices().to_vec();
    let vectors: Vec<HaarVector> = indices.iter().map(|&i| basis.vector(i).clone()).collect();
    let norms_sq = indices.iter().map(|&i| basis.norm_sq(i).clone()).collect();
    almost_inverse(t, indices, vectors, norms_sq)
}

fn almost_inverse(
    t: &OperatorMatrix,
    indices: Vec<DyadicInterval>,
    vectors: Vec<HaarVector>,
    norms_sq: Vec<Rational>,
) -> Result<AlmostInverse> {
    let diagonal: Vec<Rational> = vectors.par_iter().map(|b| inner_product(&t.apply(b), b)).collect();
    if let Some(p) = diagonal.iter().position(|d| !d.is_positive()) {
        return Err(Error::ZeroDiagonal(indices[p]));
    }
    Ok(AlmostInverse {
        indices,
        vectors,
        diagonal,
        norms_sq,
    })
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NeumannInverse {
    pub inverse: BlockMatrix,
    /// `K` in `Σ_{k<=K} (Id - M)^k`.
    pub terms: u32,
    /// Entries are rounded to multiples of `2^-precision_bits` after each step.
    pub precision_bits: u32,
    /// `Σ_{ij} |(N M - Id)_ij|`, exact.
    pub entrywise_error: Rational,
}

/// Smallest `K` with `ρ^{K+1} / (1-ρ) <= tol`.
pub fn neumann_terms(contraction: &Rational, tol: &Rational) -> Result<u32> {
    if contraction >= &Rational::one() || contraction.is_negative() {
        return Err(Error::NotContractive(contraction.to_string()));
    }
    if !tol.is_positive() {
        return Err(Error::Precondition("tolerance must be positive".into()));
    }
    if contraction.is_zero() {
        return Ok(0);
    }
    let scale = Rational::one() / (Rational::one() - contraction);
    let mut power = contraction.clone();
    let mut k = 0u32;
    while &power * &scale > *tol {
        power *= contraction;
        k += 1;
        if k > 100_000 {
            return Err(Error::NotContractive(format!("{contraction} needs more than 100000 terms")));
        }
    }
    Ok(k)
}

/// `Σ_{k=0}^{K} (Id - M)^k` by Horner's rule with dyadic rounding.
pub fn neumann_invert(m: &BlockMatrix, contraction: &Rational, tol: &Rational) -> Result<NeumannInverse> {
    let terms = neumann_terms(contraction, tol)?;
    let precision_bits = bits_for(tol) + 32;
    let id = BlockMatrix::identity(m.size());
    let e = id.sub(m);
    let mut n = id.clone();
    for _ in 0..terms {
        n = id.add(&e.mul(&n)).rounded(precision_bits);
    }
    let entrywise_error = n.mul(m).sub(&id).entry_sum();
    Ok(NeumannInverse {
        inverse: n,
        terms,
        precision_bits,
        entrywise_error,
    })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WitnessSummary {
    pub count: usize,
    pub exhaustive: bool,
    /// Largest observed `‖UTg - g‖² / ‖g‖²`.
    #[serde(with = "serde_rational")]
    pub max_ratio_sq: Rational,
    /// `ρ²`, the allowed ratio.
    #[serde(with = "serde_rational")]
    pub bound_sq: Rational,
    pub passed: bool,
}

/// Number of random ±1 and rational witnesses used beyond the exhaustive range.
pub const RANDOM_WITNESSES: usize = 2048;
const EXHAUSTIVE_LIMIT: usize = 12;

/// Checks `‖UTg - g‖ <= ρ ‖g‖` on `g = Σ a_i b_i` for every ±1 pattern `a`
/// when there are at most twelve blocks, and on seeded random patterns and
/// rational vectors otherwise.
pub fn witness_suite(vectors: &[HaarVector], m: &BlockMatrix, contraction: &Rational, seed: u64) -> WitnessSummary {
    let n = vectors.len();
    let exhaustive = n <= EXHAUSTIVE_LIMIT;
    let patterns: Vec<Vec<Rational>> = if exhaustive {
        (0u64..1 << n)
            .map(|mask| {
                (0..n)
                    .map(|i| if mask >> i & 1 == 1 { -Rational::one() } else { Rational::one() })
                    .collect()
            })
            .collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..RANDOM_WITNESSES)
            .map(|w| {
                (0..n)
                    .map(|_| {
                        if w % 2 == 0 {
                            if rng.random_bool(0.5) {
                                Rational::one()
                            } else {
                                -Rational::one()
                            }
                        } else {
                            Rational::new(rng.random_range(-64i64..=64).into(), 64.into())
                        }
                    })
                    .collect()
            })
            .collect()
    };
    let id = BlockMatrix::identity(n);
    let e = m.sub(&id);
    let combine = |coeffs: &[Rational]| {
        let mut g = HaarVector::zero();
        for (c, b) in coeffs.iter().zip(vectors) {
            if !c.is_zero() {
                g.add_scaled(b, c);
            }
        }
        g
    };
    let bound_sq = contraction * contraction;
    let max_ratio_sq = patterns
        .par_iter()
        .map(|a| {
            let g_norm = sl_inf_norm_sq(&combine(a));
            if g_norm.is_zero() {
                return Rational::zero();
            }
            sl_inf_norm_sq(&combine(&e.apply(a))) / g_norm
        })
        .reduce(Rational::zero, |x, y| if x > y { x } else { y });
    WitnessSummary {
        count: patterns.len(),
        exhaustive,
        passed: max_ratio_sq <= bound_sq,
        max_ratio_sq,
        bound_sq,
    }
}

/// Output of [`assemble`], shared with the primarity path.
#[derive(Clone, Debug)]
pub(crate) struct Assembled {
    pub r: OperatorMatrix,
    pub s: OperatorMatrix,
    pub neumann: NeumannInverse,
    pub witness: WitnessSummary,
    pub residual: Rational,
}

/// Builds `R`, `S` from `U` and the contraction, and measures
/// `max_I ‖S H R h_I - h_I‖²` for the operator `h` with `H = t Σ`.
pub(crate) fn assemble(
    t: &OperatorMatrix,
    sigma: &SignAssignment,
    u: &AlmostInverse,
    m: &BlockMatrix,
    contraction: &Rational,
    tol: &Rational,
) -> Result<Assembled> {
    let witness = witness_suite(&u.vectors, m, contraction, 0x5eed);
    if !witness.passed {
        return Err(Error::WitnessViolation(format!(
            "ratio² {} exceeds {}",
            witness.max_ratio_sq, witness.bound_sq
        )));
    }
    let neumann = neumann_invert(m, contraction, tol)?;
    let depth = t.depth();

    let mut r = OperatorMatrix::zero(depth);
    for (&index, b) in u.indices.iter().zip(&u.vectors) {
        for (k, value) in b.iter() {
            let v = if sigma.sign_or_plus(k) == Sign::Minus { -value.clone() } else { value.clone() };
            r.set(k, index, v)?;
        }
    }
    r.set_norm_bound(Rational::one(), NormBoundSource::Estimated);

    let mut s = OperatorMatrix::zero(depth);
    for (p, (b, d)) in u.vectors.iter().zip(&u.diagonal).enumerate() {
        for (l, value) in b.iter() {
            let scale = value * dyadic(l.n) / d;
            for (q, &row) in u.indices.iter().enumerate() {
                let entry = neumann.inverse.get(q, p);
                if !entry.is_zero() {
                    s.add_entry(row, l, &(entry * &scale))?;
                }
            }
        }
    }
    let min_weight = u
        .diagonal
        .iter()
        .zip(&u.norms_sq)
        .map(|(d, n)| d / n)
        .min()
        .unwrap_or_else(Rational::one);
    s.set_norm_bound(
        Rational::one() / ((Rational::one() - contraction) * min_weight),
        NormBoundSource::Estimated,
    );

    let residual = diagram_residual(t, &r, &s, &u.indices);
    Ok(Assembled {
        r,
        s,
        neumann,
        witness,
        residual,
    })
}

/// `max_I sl_inf_norm_sq(S T R h_I - h_I)` over the given indices.
pub fn diagram_residual(t: &OperatorMatrix, r: &OperatorMatrix, s: &OperatorMatrix, indices: &[DyadicInterval]) -> Rational {
    indices
        .par_iter()
        .map(|&index| {
            let h = HaarVector::basis(index);
            let out = s.apply(&t.apply(&r.apply(&h)));
            sl_inf_norm_sq(&out.sub(&h))
        })
        .reduce(Rational::zero, |a, b| if a > b { a } else { b })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FactorizationResult {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<OperatorMatrix>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s: Option<OperatorMatrix>,
    #[serde(with = "serde_rational")]
    pub delta: Rational,
    #[serde(with = "serde_rational")]
    pub eta: Rational,
    pub index_depth: u32,
    #[serde(with = "serde_rational")]
    pub eta_prime: Rational,
    /// `Σ_i (Σ_{j<i} |⟨T b_j, b_i⟩| + ‖P_{Λ_{i+1}} T* b_i‖_{H¹}) / d_i`.
    #[serde(with = "serde_rational")]
    pub contraction: Rational,
    /// `4η'/δ`.
    #[serde(with = "serde_rational")]
    pub contraction_target: Rational,
    /// `Σ_{i≠j} |M_ij|`, the same quantity with the future term expanded.
    #[serde(with = "serde_rational")]
    pub contraction_expanded: Rational,
    /// `1 / ((1 - contraction) δ)`.
    #[serde(with = "serde_rational")]
    pub norm_product_bound: Rational,
    /// `max_I sl_inf_norm_sq(S T R h_I - h_I)` over `𝒟^{index_depth}`.
    #[serde(with = "serde_rational")]
    pub residual: Rational,
    #[serde(with = "serde_rational")]
    pub tol: Rational,
    pub neumann_terms: u32,
    pub precision_bits: u32,
    #[serde(with = "serde_rational")]
    pub inverse_entrywise_error: Rational,
    pub witness: WitnessSummary,
    pub diagonalization: Diagonalization,
}

impl FactorizationResult {
    /// Drops `R` and `S`, keeping the bounds and the certificate.
    pub fn without_matrices(mut self) -> Self {
        self.r = None;
        self.s = None;
        self
    }
}

pub fn factor_identity(t: &OperatorMatrix, delta: &Rational, eta: &Rational, index_depth: u32) -> Result<FactorizationResult> {
    factor_identity_with_tol(t, delta, eta, index_depth, &default_tol())
}

/// Sum of the certified per-block error budgets divided by the diagonal.
pub fn direct_contraction(diag: &Diagonalization) -> Result<Rational> {
    let mut total = Rational::zero();
    for step in &diag.certificate.steps {
        if !step.diagonal.is_positive() {
            return Err(Error::ZeroDiagonal(step.index));
        }
        total += (&step.interaction + &step.future) / &step.diagonal;
    }
    Ok(total)
}

pub fn factor_identity_with_tol(
    t: &OperatorMatrix,
    delta: &Rational,
    eta: &Rational,
    index_depth: u32,
    tol: &Rational,
) -> Result<FactorizationResult> {
    let eta_prime = choose_eta_prime(delta, eta)?;
    let diagonalization = quasi_diagonalize(t, delta, &eta_prime, index_depth)?;
    let sigma = flipped_signs(&diagonalization);
    let normalized = t.flip_columns(&sigma);
    let u = build_u(&normalized, &diagonalization.basis)?;
    let contraction = direct_contraction(&diagonalization)?;
    let target = Rational::from_integer(4.into()) * &eta_prime / delta;
    if contraction > target {
        return Err(Error::NotContractive(format!("{contraction} exceeds the target {target}")));
    }
    let m = u.block_matrix(&normalized);
    let assembled = assemble(t, &sigma, &u, &m, &contraction, tol)?;
    let norm_product_bound = Rational::one() / ((Rational::one() - &contraction) * delta);
    if assembled.residual > tol * tol {
        return Err(Error::VerificationFailed(format!(
            "residual {} exceeds tol² {}",
            assembled.residual,
            tol * tol
        )));
    }
    Ok(FactorizationResult {
        r: Some(assembled.r),
        s: Some(assembled.s),
        delta: delta.clone(),
        eta: eta.clone(),
        index_depth,
        eta_prime,
        contraction,
        contraction_target: target,
        contraction_expanded: m.off_diagonal_sum(),
        norm_product_bound,
        residual: assembled.residual,
        tol: tol.clone(),
        neumann_terms: assembled.neumann.terms,
        precision_bits: assembled.neumann.precision_bits,
        inverse_entrywise_error: assembled.neumann.entrywise_error,
        witness: assembled.witness,
        diagonalization,
    })
}

pub(crate) fn flipped_signs(diag: &Diagonalization) -> SignAssignment {
    let mut sigma = SignAssignment::new();
    for &i in &diag.certificate.flipped {
        sigma.insert(i, Sign::Minus);
    }
    sigma
}

/// Re-derives the factorization from `t` and the stored certificate.
///
/// `R` and `S` are rebuilt deterministically and, when stored, compared
/// entry by entry; the diagram residual is recomputed by matrix algebra.
pub fn verify_factorization(t: &OperatorMatrix, result: &FactorizationResult) -> VerificationReport {
    let mut report = verify_diagonalization(t, &result.diagonalization);
    let mut checks = Vec::new();
    let eta_prime = choose_eta_prime(&result.delta, &result.eta).ok();
    checks.push(Check::new(
        "eta prime",
        eta_prime.as_ref() == Some(&result.eta_prime) && result.diagonalization.certificate.eta == result.eta_prime,
        result.eta_prime.to_string(),
    ));
    checks.push(Check::new(
        "diagonal floor",
        result.diagonalization.certificate.delta.as_ref() == Some(&result.delta),
        result.delta.to_string(),
    ));
    let target = Rational::from_integer(4.into()) * &result.eta_prime / &result.delta;
    let contraction = direct_contraction(&result.diagonalization).ok();
    checks.push(Check::new(
        "contraction",
        contraction.as_ref() == Some(&result.contraction)
            && result.contraction <= target
            && target == result.contraction_target
            && result.contraction < Rational::one(),
        format!("{} <= {target}", result.contraction),
    ));
    let bound = if result.contraction < Rational::one() {
        Rational::one() / ((Rational::one() - &result.contraction) * &result.delta)
    } else {
        Rational::zero()
    };
    let ceiling = (Rational::one() + &result.eta) / &result.delta;
    checks.push(Check::new(
        "norm product bound",
        bound == result.norm_product_bound && bound.is_positive() && bound <= ceiling,
        format!("{} <= {ceiling}", result.norm_product_bound),
    ));

    let rebuilt = (|| -> Result<Assembled> {
        let sigma = flipped_signs(&result.diagonalization);
        let normalized = t.flip_columns(&sigma);
        let u = build_u(&normalized, &result.diagonalization.basis)?;
        let m = u.block_matrix(&normalized);
        let assembled = assemble(t, &sigma, &u, &m, &result.contraction, &result.tol)?;
        let expanded_ok = m.off_diagonal_sum() == result.contraction_expanded;
        if !expanded_ok {
            return Err(Error::VerificationFailed("expanded contraction differs".into()));
        }
        Ok(assembled)
    })();
    match rebuilt {
        Ok(assembled) => {
            checks.push(Check::new(
                "witness suite",
                assembled.witness == result.witness && assembled.witness.passed,
                format!("{} witnesses", assembled.witness.count),
            ));
            checks.push(Check::new(
                "neumann series",
                assembled.neumann.terms == result.neumann_terms
                    && assembled.neumann.precision_bits == result.precision_bits
                    && assembled.neumann.entrywise_error == result.inverse_entrywise_error,
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
    report = report.merge(VerificationReport::from_checks(checks));
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::{generate, GeneratorKind, GeneratorSpec};
    use crate::rational::{int, rat};

    #[test]
    fn eta_prime_examples() {
        assert_eq!(choose_eta_prime(&int(1), &int(1)).unwrap(), rat(1, 8));
        assert_eq!(choose_eta_prime(&rat(1, 2), &int(1)).unwrap(), rat(1, 16));
        assert!(choose_eta_prime(&int(0), &int(1)).is_err());
    }

    #[test]
    fn neumann_examples() {
        let id = BlockMatrix::identity(3);
        let out = neumann_invert(&id, &int(0), &dyadic(20)).unwrap();
        assert_eq!((out.terms, &out.inverse), (0, &id));
        let half = BlockMatrix::from_fn(3, |i, j| if i == j { rat(1, 2) } else { int(0) });
        let out = neumann_invert(&half, &rat(1, 2), &dyadic(20)).unwrap();
        assert_eq!(out.terms, 20);
        assert_eq!(out.inverse.get(1, 1), &(int(2) - dyadic(20)));
        assert!(out.entrywise_error <= int(3) * dyadic(20));
        assert!(matches!(neumann_invert(&half, &int(1), &dyadic(20)), Err(Error::NotContractive(_))));
    }

    #[test]
    fn weights_of_a_doubled_identity() {
        let t = OperatorMatrix::scaled_identity(4, &int(2));
        let diag = quasi_diagonalize(&t, &int(2), &rat(1, 4), 1).unwrap();
        let u = build_u(&t, &diag.basis).unwrap();
        assert!(u.weights().iter().all(|w| w == &rat(1, 2)));
        let image = t.apply(diag.basis.vector(DyadicInterval::UNIT));
        assert_eq!(u.coefficients(&image)[0], int(1));
    }

    #[test]
    fn identity_factors_exactly() {
        let t = OperatorMatrix::identity(6);
        let result = factor_identity(&t, &int(1), &int(1), 2).unwrap();
        assert!(result.residual.is_zero() && result.contraction.is_zero());
        assert_eq!(result.norm_product_bound, int(1));
        assert!(verify_factorization(&t, &result).passed);
    }

    #[test]
    fn doubled_identity_carries_one_half() {
        let t = OperatorMatrix::scaled_identity(4, &int(2));
        let result = factor_identity(&t, &int(2), &int(1), 1).unwrap();
        assert!(result.residual.is_zero());
        let s = result.s.as_ref().unwrap();
        assert_eq!(s.get(DyadicInterval::UNIT, DyadicInterval::UNIT), rat(1, 2));
    }

    #[test]
    fn negative_diagonal_goes_through_r() {
        let t = OperatorMatrix::scaled_identity(4, &int(-1));
        let result = factor_identity(&t, &int(1), &int(1), 1).unwrap();
        assert!(result.residual.is_zero());
        assert_eq!(result.r.as_ref().unwrap().get(DyadicInterval::UNIT, DyadicInterval::UNIT), int(-1));
        assert!(verify_factorization(&t, &result).passed);
    }

    #[test]
    fn small_perturbation_of_identity() {
        let spec = GeneratorSpec::new(GeneratorKind::RandomLargeDiagonal, 8)
            .delta(int(1) - rat(1, 1000))
            .mass(rat(1, 1_000_000))
            .seed(5);
        let mut t = generate(&spec).unwrap();
        for i in crate::dyadic::tree(8) {
            t.set(i, i, int(1)).unwrap();
        }
        let delta = int(1) - rat(1, 1000);
        let result = factor_identity(&t, &delta, &int(1), 1).unwrap();
        assert!(result.residual <= rat(1, 10_000));
        assert!(result.norm_product_bound <= int(2) / &delta);
        assert!(result.witness.passed);
        let report = verify_factorization(&t, &result);
        assert!(report.passed, "{:?}", report.failures());
        let light = result.clone().without_matrices();
        assert!(verify_factorization(&t, &light).passed);
    }
}
