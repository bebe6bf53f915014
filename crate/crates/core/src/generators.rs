//! Reproducible test operators.

use num_traits::{One, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dyadic::{tree, DyadicInterval};
use crate::error::{Error, Result};
use crate::haar::HaarVector;
use crate::operator::{NormBoundSource, OperatorMatrix};
use crate::rational::{int, rat, serde_rational, Rational};

pub const MAX_GENERATOR_DEPTH: u32 = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorKind {
    /// `T = Id`.
    Identity,
    /// `T = delta · Id`.
    ScaledDiagonal,
    /// Diagonal in `[delta, delta + 1]`, plus at most three off-diagonal
    /// entries per column of total absolute mass at most `off_diagonal_mass`.
    RandomLargeDiagonal,
    /// `t_{I,I} = ±(delta + j_n/256)` depending only on the generation `n`.
    HaarMultiplier,
    /// `delta` on the diagonal and `off_diagonal_mass` from `h_I` to `h_{I_left}`.
    LevelShift,
    /// Random 0/1 diagonal.
    ProjectionMask,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub kind: GeneratorKind,
    pub depth: u32,
    #[serde(default = "one", with = "serde_rational")]
    pub delta: Rational,
    #[serde(default = "Rational::zero", with = "serde_rational")]
    pub off_diagonal_mass: Rational,
    #[serde(default)]
    pub seed: u64,
}

fn one() -> Rational {
    Rational::one()
}

impl GeneratorSpec {
    pub fn new(kind: GeneratorKind, depth: u32) -> Self {
        GeneratorSpec {
            kind,
            depth,
            delta: Rational::one(),
            off_diagonal_mass: Rational::zero(),
            seed: 0,
        }
    }

    pub fn delta(mut self, delta: Rational) -> Self {
        self.delta = delta;
        self
    }

    pub fn mass(mut self, mass: Rational) -> Self {
        self.off_diagonal_mass = mass;
        self
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

/// Builds the operator described by `spec`; identical specs give identical
/// matrices. The norm bound is [`OperatorMatrix::estimate_norm_bound`].
pub fn generate(spec: &GeneratorSpec) -> Result<OperatorMatrix> {
    if spec.depth > MAX_GENERATOR_DEPTH {
        return Err(Error::DepthBudget {
            n: spec.depth,
            budget: MAX_GENERATOR_DEPTH,
        });
    }
    if spec.delta < Rational::zero() || spec.off_diagonal_mass < Rational::zero() {
        return Err(Error::Parse("delta and off_diagonal_mass must be nonnegative".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let depth = spec.depth;
    let mut t = OperatorMatrix::zero(depth);
    match spec.kind {
        GeneratorKind::Identity => t = OperatorMatrix::identity(depth),
        GeneratorKind::ScaledDiagonal => t = OperatorMatrix::scaled_identity(depth, &spec.delta),
        GeneratorKind::RandomLargeDiagonal => {
            let count = (1u64 << (depth + 1)) - 1;
            for col in tree(depth) {
                let j: i64 = rng.random_range(0..=256);
                t.set(col, col, &spec.delta + rat(j, 256))?;
                let entries: usize = if count > 1 { rng.random_range(0..=3) } else { 0 };
                let weights: Vec<i64> = (0..entries).map(|_| rng.random_range(1..=8)).collect();
                let total: i64 = weights.iter().sum();
                let scale: i64 = rng.random_range(0..=8);
                for w in weights {
                    let row = loop {
                        let candidate = DyadicInterval::from_ordering(rng.random_range(0..count));
                        if candidate != col {
                            break candidate;
                        }
                    };
                    let sign = if rng.random_bool(0.5) { 1 } else { -1 };
                    let value = &spec.off_diagonal_mass * rat(sign * scale * w, 8 * total);
                    t.add_entry(row, col, &value)?;
                }
            }
        }
        GeneratorKind::HaarMultiplier => {
            for n in 0..=depth {
                let j: i64 = rng.random_range(0..=256);
                let magnitude = &spec.delta + rat(j, 256);
                let value = if rng.random_bool(0.5) { magnitude } else { -magnitude };
                for col in DyadicInterval::UNIT.descendants(n) {
                    t.set(col, col, value.clone())?;
                }
            }
        }
        GeneratorKind::LevelShift => {
            for col in tree(depth) {
                t.set(col, col, spec.delta.clone())?;
                if col.n < depth {
                    t.set(col.left(), col, spec.off_diagonal_mass.clone())?;
                }
            }
        }
        GeneratorKind::ProjectionMask => {
            for col in tree(depth) {
                if rng.random_bool(0.5) {
                    t.set(col, col, int(1))?;
                }
            }
        }
    }
    let bound = t.estimate_norm_bound();
    t.set_norm_bound(bound, NormBoundSource::Estimated);
    Ok(t)
}

/// `c_I = ⟨T h_I, b⟩ / |I|`, the vector with `⟨T f, b⟩ = ⟨f, c⟩`.
pub fn adjoint_column(t: &OperatorMatrix, b: &HaarVector) -> HaarVector {
    t.adjoint_apply(b)
}
