//! Piecewise-linear paths on dyadic grids.
//!
//! A [`DyadicPath`] stores the values of a path at the knots `j / 2^n` of a
//! dyadic grid and interpolates linearly in between. Coarsening to level `m`
//! (`project`) keeps the values at the coarser knots; refining is exact
//! because the path is already piecewise linear. Brownian paths are sampled
//! by cumulating independent Gaussian increments over the grid cells.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Name of the Gaussian sampling scheme, recorded in experiment metadata so
/// seeds stay reproducible across platforms.
pub const GAUSSIAN_SAMPLER: &str = "chacha8 rng + marsaglia polar transform";

/// A path on `[0, 1]` starting at the origin, stored at dyadic resolution.
///
/// `knots[j]` holds the value at `t = j / 2^level`; evaluation is linear
/// between knots.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDyadicPath<T>")]
pub struct DyadicPath<T: Scalar> {
    level: u32,
    knots: Vec<T>,
}

#[derive(Deserialize)]
struct RawDyadicPath<T> {
    level: u32,
    knots: Vec<T>,
}

impl<T: Scalar> TryFrom<RawDyadicPath<T>> for DyadicPath<T> {
    type Error = Error;
    fn try_from(raw: RawDyadicPath<T>) -> Result<Self> {
        DyadicPath::new(raw.level, raw.knots)
    }
}

impl<T: Scalar> DyadicPath<T> {
    /// Builds a path from its knot values, checking the grid invariants:
    /// `2^level + 1` finite knots with `knots[0] = 0`.
    pub fn new(level: u32, knots: Vec<T>) -> Result<Self> {
        if level > 24 {
            return Err(Error::InvalidPath(format!(
                "level {level} too fine (max 24)"
            )));
        }
        let expected = (1usize << level) + 1;
        if knots.len() != expected {
            return Err(Error::InvalidPath(format!(
                "level {} needs {} knots, got {}",
                level,
                expected,
                knots.len()
            )));
        }
        if knots[0] != T::zero() {
            return Err(Error::InvalidPath("paths start at the origin".into()));
        }
        if knots.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidPath("all knot values must be finite".into()));
        }
        Ok(Self { level, knots })
    }

    /// The zero path at the given level.
    pub fn zero(level: u32) -> Self {
        Self {
            level,
            knots: vec![T::zero(); (1usize << level) + 1],
        }
    }

    /// The identity path `w(t) = t` at the given level.
    pub fn ramp(level: u32) -> Self {
        let n = 1usize << level;
        let knots = (0..=n).map(|j| T::cast(j as f64 / n as f64)).collect();
        Self { level, knots }
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn knots(&self) -> &[T] {
        &self.knots
    }

    /// Number of grid cells, `2^level`.
    pub fn cells(&self) -> usize {
        1usize << self.level
    }

    /// Piecewise-linear evaluation at `t` in `[0, 1]`.
    pub fn eval(&self, t: T) -> Result<T> {
        if !(t >= T::zero() && t <= T::one()) {
            return Err(Error::OutOfRange(format!(
                "path evaluation needs t in [0, 1], got {t}"
            )));
        }
        Ok(self.eval_clamped(t))
    }

    /// Evaluation without the range check; callers guarantee `t` in `[0, 1]`.
    pub(crate) fn eval_clamped(&self, t: T) -> T {
        let n = self.cells();
        let scaled = t * T::cast(n as f64);
        let mut cell = scaled.widen().floor() as usize;
        if cell >= n {
            cell = n - 1; // t == 1 lands on the last cell
        }
        let frac = scaled - T::cast(cell as f64);
        let a = self.knots[cell];
        let b = self.knots[cell + 1];
        a + (b - a) * frac
    }

    /// The projection onto level `m`: keeps the values at the knots
    /// `j / 2^m`. For `m <= level` the knots are subsampled exactly; for
    /// `m > level` the path is refined, which is also exact because it is
    /// piecewise linear.
    pub fn project(&self, m: u32) -> DyadicPath<T> {
        if m <= self.level {
            let stride = 1usize << (self.level - m);
            let knots = self.knots.iter().step_by(stride).copied().collect();
            DyadicPath { level: m, knots }
        } else {
            let shift = m - self.level;
            let sub = 1usize << shift;
            let nm = 1usize << m;
            let knots = (0..=nm)
                .map(|j| {
                    let cell = j >> shift;
                    let rem = j & (sub - 1);
                    if rem == 0 {
                        self.knots[cell]
                    } else {
                        let a = self.knots[cell];
                        let b = self.knots[cell + 1];
                        a + (b - a) * T::cast(rem as f64 / sub as f64)
                    }
                })
                .collect();
            DyadicPath { level: m, knots }
        }
    }

    /// `|w|_H = (int |w'(t)|^2 dt)^{1/2}`, exact for piecewise-linear paths:
    /// the squared increments summed against the grid scale.
    pub fn cameron_martin_norm(&self) -> T {
        let n = T::cast(self.cells() as f64);
        let sum: T = self
            .knots
            .windows(2)
            .map(|w| {
                let d = w[1] - w[0];
                d * d
            })
            .sum();
        (sum * n).sqrt()
    }

    /// `|w|_inf`; a piecewise-linear path attains its maximum at a knot.
    pub fn sup_norm(&self) -> T {
        self.knots
            .iter()
            .map(|x| x.abs())
            .fold(T::zero(), T::max)
    }

    /// Cell slopes `2^level * (knots[j+1] - knots[j])`.
    pub fn slopes(&self) -> Vec<T> {
        let n = T::cast(self.cells() as f64);
        self.knots.windows(2).map(|w| (w[1] - w[0]) * n).collect()
    }

    /// Pointwise sum, lifting both paths to the finer of the two levels.
    pub fn add(&self, other: &Self) -> Self {
        self.zip_with(other, |a, b| a + b)
    }

    /// Pointwise difference, lifting both paths to the finer level.
    pub fn sub(&self, other: &Self) -> Self {
        self.zip_with(other, |a, b| a - b)
    }

    /// Scalar multiple.
    pub fn scale(&self, alpha: T) -> Self {
        DyadicPath {
            level: self.level,
            knots: self.knots.iter().map(|&x| x * alpha).collect(),
        }
    }

    fn zip_with(&self, other: &Self, f: impl Fn(T, T) -> T) -> Self {
        let level = self.level.max(other.level);
        let a = self.project(level);
        let b = other.project(level);
        DyadicPath {
            level,
            knots: a
                .knots
                .iter()
                .zip(&b.knots)
                .map(|(&x, &y)| f(x, y))
                .collect(),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.knots.iter().all(|x| *x == T::zero())
    }
}

/// Samples the level-`n` piecewise-linear skeleton of a Brownian path:
/// independent centered Gaussian increments of variance `2^-level` over the
/// grid cells, cumulated from the origin. Deterministic in `(level, seed)`.
///
/// Gaussian variates come from the Marsaglia polar transform driven by a
/// ChaCha8 stream, so identical seeds reproduce bit-for-bit across platforms
/// (see [`GAUSSIAN_SAMPLER`]).
pub fn sample_brownian<T: Scalar>(level: u32, seed: u64) -> DyadicPath<T> {
    let n = 1usize << level;
    let sigma = (0.5f64).powi(level as i32).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut knots = Vec::with_capacity(n + 1);
    let mut acc = 0.0f64;
    knots.push(T::zero());
    let mut spare: Option<f64> = None;
    for _ in 0..n {
        let z = match spare.take() {
            Some(z) => z,
            None => {
                let (z0, z1) = polar_pair(&mut rng);
                spare = Some(z1);
                z0
            }
        };
        acc += sigma * z;
        knots.push(T::cast(acc));
    }
    DyadicPath { level, knots }
}

/// One rejection round of the Marsaglia polar method: two independent
/// standard normals from two uniforms conditioned into the unit disc.
fn polar_pair(rng: &mut ChaCha8Rng) -> (f64, f64) {
    loop {
        let u = 2.0 * rng.random::<f64>() - 1.0;
        let v = 2.0 * rng.random::<f64>() - 1.0;
        let s = u * u + v * v;
        if s > 0.0 && s < 1.0 {
            let f = (-2.0 * s.ln() / s).sqrt();
            return (u * f, v * f);
        }
    }
}
