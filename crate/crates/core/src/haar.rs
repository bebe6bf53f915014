//! Finitely supported Haar expansions and the square-function norms.
//!
//! `h_I` is the L∞-normalized Haar function: `+1` on the left half of `I`,
//! `-1` on the right half. Its squared `L²` norm is `|I|`.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use num_traits::{Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::dyadic::DyadicInterval;
use crate::error::{Error, Result};
use crate::rational::{dyadic, from_f64, serde_rational, sqrt_bounds, to_f64, Rational};

/// `Σ a_I h_I` with finitely many nonzero `a_I`. Zeros are never stored.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "HaarVectorJson", into = "HaarVectorJson")]
pub struct HaarVector {
    coeffs: BTreeMap<DyadicInterval, Rational>,
}

#[derive(Serialize, Deserialize)]
struct HaarVectorJson {
    coeffs: Vec<CoeffJson>,
}

#[derive(Serialize, Deserialize)]
struct CoeffJson {
    n: u32,
    k: u64,
    #[serde(with = "serde_rational")]
    value: Rational,
}

impl From<HaarVector> for HaarVectorJson {
    fn from(v: HaarVector) -> Self {
        HaarVectorJson {
            coeffs: v
                .coeffs
                .into_iter()
                .map(|(i, value)| CoeffJson { n: i.n, k: i.k, value })
                .collect(),
        }
    }
}

impl TryFrom<HaarVectorJson> for HaarVector {
    type Error = Error;

    fn try_from(json: HaarVectorJson) -> Result<Self> {
        let mut v = HaarVector::zero();
        for c in json.coeffs {
            v.add_to(DyadicInterval::new(c.n, c.k)?, &c.value);
        }
        Ok(v)
    }
}

impl HaarVector {
    pub fn zero() -> Self {
        HaarVector::default()
    }

    /// The single Haar function `h_I`.
    pub fn basis(interval: DyadicInterval) -> Self {
        let mut v = HaarVector::zero();
        v.set(interval, Rational::from_integer(1.into()));
        v
    }

    pub fn from_pairs<I: IntoIterator<Item = (DyadicInterval, Rational)>>(pairs: I) -> Self {
        let mut v = HaarVector::zero();
        for (interval, value) in pairs {
            v.add_to(interval, &value);
        }
        v
    }

    /// Parses the JSON form; malformed intervals are rejected.
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn get(&self, interval: DyadicInterval) -> Option<&Rational> {
        self.coeffs.get(&interval)
    }

    pub fn coeff(&self, interval: DyadicInterval) -> Rational {
        self.coeffs.get(&interval).cloned().unwrap_or_else(Rational::zero)
    }

    pub fn set(&mut self, interval: DyadicInterval, value: Rational) {
        if value.is_zero() {
            self.coeffs.remove(&interval);
        } else {
            self.coeffs.insert(interval, value);
        }
    }

    pub fn add_to(&mut self, interval: DyadicInterval, value: &Rational) {
        if value.is_zero() {
            return;
        }
        match self.coeffs.get_mut(&interval) {
            Some(slot) => {
                *slot += value;
                if slot.is_zero() {
                    self.coeffs.remove(&interval);
                }
            }
            None => {
                self.coeffs.insert(interval, value.clone());
            }
        }
    }

    /// `self += scale * other`.
    pub fn add_scaled(&mut self, other: &HaarVector, scale: &Rational) {
        if scale.is_zero() {
            return;
        }
        for (&interval, value) in &other.coeffs {
            self.add_to(interval, &(value * scale));
        }
    }

    pub fn scaled(&self, scale: &Rational) -> HaarVector {
        if scale.is_zero() {
            return HaarVector::zero();
        }
        HaarVector {
            coeffs: self
                .coeffs
                .iter()
                .map(|(&i, v)| (i, v * scale))
                .collect(),
        }
    }

    pub fn sub(&self, other: &HaarVector) -> HaarVector {
        let mut out = self.clone();
        out.add_scaled(other, &Rational::from_integer((-1).into()));
        out
    }

    pub fn add(&self, other: &HaarVector) -> HaarVector {
        let mut out = self.clone();
        out.add_scaled(other, &Rational::from_integer(1.into()));
        out
    }

    pub fn iter(&self) -> impl Iterator<Item = (DyadicInterval, &Rational)> + '_ {
        self.coeffs.iter().map(|(&i, v)| (i, v))
    }

    pub fn support(&self) -> impl Iterator<Item = DyadicInterval> + '_ {
        self.coeffs.keys().copied()
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Largest generation carrying a nonzero coefficient (0 for the zero vector).
    pub fn depth(&self) -> u32 {
        self.coeffs.keys().map(|i| i.n).max().unwrap_or(0)
    }

    /// Coefficient-wise absolute values.
    pub fn abs(&self) -> HaarVector {
        HaarVector {
            coeffs: self.coeffs.iter().map(|(&i, v)| (i, v.abs())).collect(),
        }
    }

    /// Multiplies `a_I` by `signs(I)`.
    pub fn with_signs(&self, signs: impl Fn(DyadicInterval) -> bool) -> HaarVector {
        HaarVector {
            coeffs: self
                .coeffs
                .iter()
                .map(|(&i, v)| (i, if signs(i) { v.clone() } else { -v }))
                .collect(),
        }
    }
}

/// `⟨f, g⟩ = Σ a_I b_I |I|`.
pub fn inner_product(f: &HaarVector, g: &HaarVector) -> Rational {
    let (small, large) = if f.len() <= g.len() { (f, g) } else { (g, f) };
    let mut total = Rational::zero();
    for (interval, a) in small.iter() {
        if let Some(b) = large.get(interval) {
            total += a * b * dyadic(interval.n);
        }
    }
    total
}

/// Squared square-function values `Σ_{I ⊇ leaf} a_I²` on every generation-`N` leaf.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LeafProfile {
    pub depth: u32,
    #[serde(with = "crate::rational::serde_rational_vec")]
    pub values: Vec<Rational>,
}

impl LeafProfile {
    pub fn max(&self) -> Rational {
        self.values.iter().max().cloned().unwrap_or_else(Rational::zero)
    }
}

pub fn leaf_profile(f: &HaarVector, depth: u32) -> Result<LeafProfile> {
    if depth < f.depth() {
        return Err(Error::DepthBudget {
            n: f.depth(),
            budget: depth,
        });
    }
    if depth > 24 {
        return Err(Error::DepthBudget { n: depth, budget: 24 });
    }
    let mut values = vec![Rational::zero(); 1usize << depth];
    for (interval, a) in f.iter() {
        // h_I² = 1 on all of I, including the last generation.
        let square = a * a;
        for leaf in interval.descendants(depth) {
            values[leaf.k as usize] += &square;
        }
    }
    Ok(LeafProfile { depth, values })
}

/// The partition of `[0,1)` into maximal pieces on which the square function
/// of `f` is constant, with its squared value on each piece.
pub fn square_function_pieces(f: &HaarVector) -> Vec<(DyadicInterval, Rational)> {
    let mut closure: HashSet<DyadicInterval> = HashSet::with_capacity(f.len() * 4);
    for interval in f.support() {
        let mut node = Some(interval);
        while let Some(current) = node {
            if !closure.insert(current) {
                break;
            }
            node = current.parent();
        }
    }
    let mut pieces = Vec::new();
    let mut stack = vec![(DyadicInterval::UNIT, Rational::zero())];
    while let Some((node, acc)) = stack.pop() {
        if !closure.contains(&node) {
            pieces.push((node, acc));
            continue;
        }
        let mut acc = acc;
        if let Some(a) = f.get(node) {
            acc += a * a;
        }
        let (left, right) = node.halves();
        if closure.contains(&left) || closure.contains(&right) {
            stack.push((right, acc.clone()));
            stack.push((left, acc));
        } else {
            pieces.push((node, acc));
        }
    }
    pieces
}

/// `‖f‖²_{SL∞} = sup_x Σ a_I² h_I²(x)`, exactly.
pub fn sl_inf_norm_sq(f: &HaarVector) -> Rational {
    square_function_pieces(f)
        .into_iter()
        .map(|(_, v)| v)
        .max()
        .unwrap_or_else(Rational::zero)
}

/// Floating estimate of `‖f‖_{H¹}` with a rigorous enclosure.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct H1Estimate {
    pub value: f64,
    /// `|value - ‖f‖_{H¹}| <= error`.
    pub error: f64,
    #[serde(with = "serde_rational")]
    pub lower: Rational,
    #[serde(with = "serde_rational")]
    pub upper: Rational,
}

impl H1Estimate {
    pub fn zero() -> Self {
        H1Estimate {
            value: 0.0,
            error: 0.0,
            lower: Rational::zero(),
            upper: Rational::zero(),
        }
    }
}

/// `‖f‖_{H¹} = ∫ (Σ a_I² h_I²)^{1/2}`.
pub fn h1_norm(f: &HaarVector) -> H1Estimate {
    let mut value = 0.0f64;
    let mut lower = Rational::zero();
    let mut upper = Rational::zero();
    // Group equal values so each square root is taken once.
    let mut grouped: BTreeMap<Rational, Rational> = BTreeMap::new();
    for (piece, v) in square_function_pieces(f) {
        if v.is_zero() {
            continue;
        }
        *grouped.entry(v).or_insert_with(Rational::zero) += piece.measure();
    }
    for (v, measure) in grouped {
        value += to_f64(&measure) * to_f64(&v).sqrt();
        let (lo, hi) = sqrt_bounds(&v);
        lower += &measure * lo;
        upper += &measure * hi;
    }
    let exact_value = from_f64(value);
    let spread = to_f64(&(&upper - &exact_value))
        .max(to_f64(&(&exact_value - &lower)))
        .max(0.0);
    H1Estimate {
        value,
        error: spread.next_up(),
        lower,
        upper,
    }
}

/// `Σ_{I ∈ 𝒟_m} c_I h_I`.
pub fn rademacher_vector(m: u32, c: &BTreeMap<DyadicInterval, Rational>) -> Result<HaarVector> {
    let mut v = HaarVector::zero();
    for (&interval, value) in c {
        if interval.n != m {
            return Err(Error::WrongLevel {
                interval,
                expected: m,
            });
        }
        v.set(interval, value.clone());
    }
    Ok(v)
}

/// `Σ_{I ∈ 𝒟_m} |a_I| |I|`, the pairing of `f` with the best-signed
/// Rademacher function of generation `m`.
pub fn rademacher_pairing(f: &HaarVector, m: u32) -> Rational {
    f.iter()
        .filter(|(i, _)| i.n == m)
        .map(|(_, a)| a.abs())
        .sum::<Rational>()
        * dyadic(m)
}

/// `P_Λ f`: keep only coefficients at generations in `levels`.
pub fn project_levels(f: &HaarVector, levels: &BTreeSet<u32>) -> HaarVector {
    HaarVector {
        coeffs: f
            .coeffs
            .iter()
            .filter(|(i, _)| levels.contains(&i.n))
            .map(|(&i, v)| (i, v.clone()))
            .collect(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairingMethod {
    H1Bound,
    ConvexAscent,
}

/// Result of [`sup_pairing_over_ball`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairingEstimate {
    pub method: PairingMethod,
    pub value: f64,
    pub error: f64,
}

/// Estimates `sup { |⟨f, c⟩| : ‖f‖_{SL∞} <= 1 }`.
///
/// `H1Bound` is a certified upper bound; `ConvexAscent` a feasible lower bound.
pub fn sup_pairing_over_ball(c: &HaarVector, method: PairingMethod) -> PairingEstimate {
    match method {
        PairingMethod::H1Bound => {
            let h1 = h1_norm(c);
            PairingEstimate {
                method,
                value: h1.value,
                error: h1.error,
            }
        }
        PairingMethod::ConvexAscent => {
            let result = convex_ascent(c, DEFAULT_ASCENT_ITERATIONS);
            PairingEstimate {
                method,
                value: result.lower,
                error: 0.0,
            }
        }
    }
}

pub const DEFAULT_ASCENT_ITERATIONS: usize = 500;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AscentResult {
    /// Value of `⟨f, c⟩` at a feasible point of the unit ball.
    pub lower: f64,
    /// Dual value `sqrt(Φ(μ))` at the final weights; an upper bound up to rounding.
    pub upper: f64,
    pub iterations: usize,
}

/// Conditional-gradient ascent for the pairing against `c` over the `SL∞`
/// unit ball.
///
/// The dual variable is a probability vector `μ` on the pieces of the square
/// function of `c`; for each `μ`, `Φ(μ) = Σ_I w_I² / μ(I)` with `w_I = c_I |I|`
/// bounds the squared supremum. Frank-Wolfe steps on `μ` decrease `Φ`; the
/// primal point `a_I ∝ w_I / μ(I)`, scaled onto the ball, is the returned
/// lower bound.
pub fn convex_ascent(c: &HaarVector, max_iterations: usize) -> AscentResult {
    if c.is_zero() {
        return AscentResult {
            lower: 0.0,
            upper: 0.0,
            iterations: 0,
        };
    }
    let atoms: Vec<DyadicInterval> = square_function_pieces(c).into_iter().map(|(p, _)| p).collect();
    let terms: Vec<(f64, Vec<usize>)> = c
        .iter()
        .map(|(interval, value)| {
            let w = to_f64(value) * to_f64(&interval.measure());
            let members = atoms
                .iter()
                .enumerate()
                .filter(|(_, atom)| interval.contains(**atom))
                .map(|(idx, _)| idx)
                .collect();
            (w, members)
        })
        .collect();
    let mut mu: Vec<f64> = atoms.iter().map(|a| to_f64(&a.measure())).collect();

    let masses = |mu: &[f64]| -> Vec<f64> {
        terms
            .iter()
            .map(|(_, members)| members.iter().map(|&j| mu[j]).sum())
            .collect()
    };
    let primal = |mu: &[f64]| -> f64 {
        let m = masses(mu);
        let a: Vec<f64> = terms.iter().zip(&m).map(|((w, _), &mi)| w / mi).collect();
        let mut profile = vec![0.0f64; atoms.len()];
        for ((_, members), ai) in terms.iter().zip(&a) {
            for &j in members {
                profile[j] += ai * ai;
            }
        }
        let peak = profile.iter().cloned().fold(0.0, f64::max);
        if peak <= 0.0 || !peak.is_finite() {
            return 0.0;
        }
        let pairing: f64 = terms.iter().zip(&a).map(|((w, _), ai)| w * ai).sum();
        (pairing / peak.sqrt()) * (1.0 - 1e-12)
    };

    let mut best_lower = primal(&mu);
    let mut best_upper = f64::INFINITY;
    let mut iterations = 0;
    for t in 0..max_iterations {
        iterations = t + 1;
        let m = masses(&mu);
        let phi: f64 = terms.iter().zip(&m).map(|((w, _), mi)| w * w / mi).sum();
        best_upper = best_upper.min(phi.sqrt());
        // ∂Φ/∂μ_j = -Σ_{I ∋ atom j} w_I² / μ(I)²; move toward the steepest vertex.
        let mut grad = vec![0.0f64; atoms.len()];
        for ((w, members), mi) in terms.iter().zip(&m) {
            let g = w * w / (mi * mi);
            for &j in members {
                grad[j] -= g;
            }
        }
        let (vertex, _) = grad
            .iter()
            .enumerate()
            .fold((0, f64::INFINITY), |acc, (j, &g)| if g < acc.1 { (j, g) } else { acc });
        let step = 2.0 / (t as f64 + 2.0);
        for (j, weight) in mu.iter_mut().enumerate() {
            *weight *= 1.0 - step;
            if j == vertex {
                *weight += step;
            }
        }
        best_lower = best_lower.max(primal(&mu));
    }
    AscentResult {
        lower: best_lower,
        upper: best_upper,
        iterations,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{int, rat};

    fn iv(n: u32, k: u64) -> DyadicInterval {
        DyadicInterval::new(n, k).unwrap()
    }

    fn h(n: u32, k: u64) -> HaarVector {
        HaarVector::basis(iv(n, k))
    }

    #[test]
    fn inner_product_examples() {
        assert_eq!(inner_product(&h(0, 0), &h(0, 0)), int(1));
        assert_eq!(inner_product(&h(1, 0), &h(1, 1)), int(0));
        let f = HaarVector::from_pairs([(iv(0, 0), int(1)), (iv(1, 0), int(2))]);
        assert_eq!(inner_product(&f, &h(1, 0)), int(1));
    }

    #[test]
    fn profile_examples() {
        assert_eq!(leaf_profile(&h(0, 0), 1).unwrap().values, vec![int(1), int(1)]);
        let f = h(0, 0).add(&h(1, 0));
        assert_eq!(
            leaf_profile(&f, 2).unwrap().values,
            vec![int(2), int(2), int(1), int(1)]
        );
        assert_eq!(leaf_profile(&HaarVector::zero(), 0).unwrap().values, vec![int(0)]);
        assert!(leaf_profile(&f, 0).is_err());
    }

    #[test]
    fn norm_examples() {
        assert_eq!(sl_inf_norm_sq(&h(0, 0)), int(1));
        let f = h(0, 0).add(&h(1, 0));
        assert_eq!(sl_inf_norm_sq(&f), int(2));
        let level: HaarVector = HaarVector::from_pairs((0..8).map(|k| (iv(3, k), int(1))));
        assert_eq!(sl_inf_norm_sq(&level), int(1));
        assert_eq!(sl_inf_norm_sq(&HaarVector::zero()), int(0));
    }

    #[test]
    fn h1_examples() {
        let one = h1_norm(&h(0, 0));
        assert_eq!((one.lower.clone(), one.upper.clone()), (int(1), int(1)));
        assert_eq!(one.value, 1.0);
        let f = h(0, 0).add(&h(1, 0));
        let est = h1_norm(&f);
        let expected = (2f64.sqrt() + 1.0) / 2.0;
        assert!((est.value - expected).abs() <= est.error + 1e-15);
        assert!(to_f64(&est.lower) <= expected && expected <= to_f64(&est.upper));
        assert_eq!(h1_norm(&HaarVector::zero()).value, 0.0);
    }

    #[test]
    fn rademacher_examples() {
        let ones: BTreeMap<_, _> = [(iv(1, 0), int(1)), (iv(1, 1), int(1))].into();
        let r = rademacher_vector(1, &ones).unwrap();
        assert_eq!(r, h(1, 0).add(&h(1, 1)));
        assert_eq!(sl_inf_norm_sq(&r), int(1));
        let alt: BTreeMap<_, _> = (0..4)
            .map(|k| (iv(2, k), if k % 2 == 0 { int(1) } else { int(-1) }))
            .collect();
        assert_eq!(sl_inf_norm_sq(&rademacher_vector(2, &alt).unwrap()), int(1));
        assert!(rademacher_vector(0, &ones).is_err());
        assert_eq!(rademacher_pairing(&r, 1), int(1));
    }

    #[test]
    fn projection_examples() {
        let f = h(0, 0).add(&h(1, 0));
        assert_eq!(project_levels(&f, &[0].into()), h(0, 0));
        assert_eq!(project_levels(&f, &[0, 1].into()), f);
        assert!(project_levels(&f, &BTreeSet::new()).is_zero());
    }

    #[test]
    fn pairing_examples() {
        for method in [PairingMethod::H1Bound, PairingMethod::ConvexAscent] {
            let est = sup_pairing_over_ball(&h(2, 1), method);
            assert!((est.value - 0.25).abs() < 1e-9, "{method:?}: {}", est.value);
            assert_eq!(sup_pairing_over_ball(&HaarVector::zero(), method).value, 0.0);
            let c = h(1, 0).add(&h(1, 1));
            assert!((sup_pairing_over_ball(&c, method).value - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn ascent_stays_below_h1() {
        let c = HaarVector::from_pairs([
            (iv(0, 0), rat(1, 3)),
            (iv(1, 0), int(-2)),
            (iv(2, 3), rat(5, 7)),
            (iv(3, 1), int(1)),
        ]);
        let h1 = h1_norm(&c);
        let ascent = convex_ascent(&c, 500);
        assert!(ascent.lower <= h1.value + h1.error + 1e-9);
        assert!(ascent.upper >= ascent.lower - 1e-9);
    }

    #[test]
    fn json_round_trip() {
        let f = HaarVector::from_pairs([(iv(0, 0), rat(1, 3)), (iv(2, 1), int(-2))]);
        let text = serde_json::to_string(&f).unwrap();
        assert_eq!(
            text,
            r#"{"coeffs":[{"n":0,"k":0,"value":"1/3"},{"n":2,"k":1,"value":"-2"}]}"#
        );
        assert_eq!(HaarVector::from_json(&text).unwrap(), f);
        assert!(HaarVector::from_json(r#"{"coeffs":[{"n":1,"k":5,"value":"1"}]}"#).is_err());
    }
}
