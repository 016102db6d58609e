//! Locally Lipschitz scalar potentials and their Clarke subdifferentials.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Closed interval `[lo, hi]`; the one-dimensional Clarke subdifferential.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        debug_assert!(lo <= hi, "empty interval [{lo}, {hi}]");
        Self { lo, hi }
    }

    pub fn point(v: f64) -> Self {
        Self { lo: v, hi: v }
    }

    pub fn project(&self, v: f64) -> f64 {
        v.clamp(self.lo, self.hi)
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lo <= v && v <= self.hi
    }

    pub fn hull(&self, other: &Interval) -> Interval {
        Interval::new(self.lo.min(other.lo), self.hi.max(other.hi))
    }

    pub fn scaled(&self, w: f64) -> Interval {
        if w >= 0.0 {
            Interval::new(w * self.lo, w * self.hi)
        } else {
            Interval::new(w * self.hi, w * self.lo)
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.lo.abs().max(self.hi.abs())
    }
}

/// A locally Lipschitz function `j: R -> R` with growth constant `c_J`
/// (`|zeta| <= c_J (1 + |r|)` on `dj(r)`) and relaxed-monotonicity constant
/// `m_J` (`(zeta1 - zeta2)(r1 - r2) >= -m_J |r1 - r2|^2`).
///
/// Between consecutive [`breakpoints`](Self::breakpoints) the selection must be
/// single valued, continuous and monotone (either direction); kinks and
/// changes of monotonicity only occur at breakpoints.
pub trait LipschitzPotential: Send + Sync + fmt::Debug {
    fn value(&self, r: f64) -> f64;

    fn subgradient(&self, r: f64) -> Interval;

    fn growth_constant(&self) -> f64;

    fn relaxation_constant(&self) -> f64;

    /// Clarke directional derivative `j°(r; v) = max { zeta v : zeta in dj(r) }`.
    fn clarke_derivative(&self, r: f64, v: f64) -> f64 {
        let s = self.subgradient(r);
        if v > 0.0 {
            v * s.hi
        } else if v < 0.0 {
            v * s.lo
        } else {
            0.0
        }
    }

    fn breakpoints(&self) -> Vec<f64> {
        Vec::new()
    }

    /// `(intercept, slope)` when the selection is affine on the open interval `(lo, hi)`.
    fn affine_piece(&self, _lo: f64, _hi: f64) -> Option<(f64, f64)> {
        None
    }

    /// Convex hull of all subgradients over `[lo, hi]`.
    fn subgradient_hull(&self, lo: f64, hi: f64) -> Interval {
        let mut h = self.subgradient(lo).hull(&self.subgradient(hi));
        for b in self.breakpoints() {
            if lo < b && b < hi {
                h = h.hull(&self.subgradient(b));
            }
        }
        h
    }
}

pub type SharedPotential = Arc<dyn LipschitzPotential>;

/// `j = 0`.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroPotential;

impl LipschitzPotential for ZeroPotential {
    fn value(&self, _r: f64) -> f64 {
        0.0
    }
    fn subgradient(&self, _r: f64) -> Interval {
        Interval::point(0.0)
    }
    fn growth_constant(&self) -> f64 {
        1.0
    }
    fn relaxation_constant(&self) -> f64 {
        0.0
    }
    fn affine_piece(&self, _lo: f64, _hi: f64) -> Option<(f64, f64)> {
        Some((0.0, 0.0))
    }
}

/// `j(r) = c r^2 / 2` on the whole line.
#[derive(Debug, Clone, Copy)]
pub struct HalfSquare {
    pub stiffness: f64,
}

impl LipschitzPotential for HalfSquare {
    fn value(&self, r: f64) -> f64 {
        0.5 * self.stiffness * r * r
    }
    fn subgradient(&self, r: f64) -> Interval {
        Interval::point(self.stiffness * r)
    }
    fn growth_constant(&self) -> f64 {
        self.stiffness
    }
    fn relaxation_constant(&self) -> f64 {
        0.0
    }
    fn affine_piece(&self, _lo: f64, _hi: f64) -> Option<(f64, f64)> {
        Some((0.0, self.stiffness))
    }
}

/// Normal compliance `j(r) = c r_+^2 / 2`, i.e. `p(r) = c r_+`.
#[derive(Debug, Clone, Copy)]
pub struct QuadraticCompliance {
    pub stiffness: f64,
}

impl LipschitzPotential for QuadraticCompliance {
    fn value(&self, r: f64) -> f64 {
        0.5 * self.stiffness * r.max(0.0).powi(2)
    }
    fn subgradient(&self, r: f64) -> Interval {
        Interval::point(self.stiffness * r.max(0.0))
    }
    fn growth_constant(&self) -> f64 {
        self.stiffness
    }
    fn relaxation_constant(&self) -> f64 {
        0.0
    }
    fn breakpoints(&self) -> Vec<f64> {
        vec![0.0]
    }
    fn affine_piece(&self, lo: f64, hi: f64) -> Option<(f64, f64)> {
        if hi <= 0.0 {
            Some((0.0, 0.0))
        } else if lo >= 0.0 {
            Some((0.0, self.stiffness))
        } else {
            None
        }
    }
}

/// `j(r) = c |r|`.
#[derive(Debug, Clone, Copy)]
pub struct AbsPotential {
    pub weight: f64,
}

impl LipschitzPotential for AbsPotential {
    fn value(&self, r: f64) -> f64 {
        self.weight * r.abs()
    }
    fn subgradient(&self, r: f64) -> Interval {
        let c = self.weight;
        if r > 0.0 {
            Interval::point(c)
        } else if r < 0.0 {
            Interval::point(-c)
        } else {
            Interval::new(-c, c)
        }
    }
    fn growth_constant(&self) -> f64 {
        self.weight
    }
    fn relaxation_constant(&self) -> f64 {
        0.0
    }
    fn breakpoints(&self) -> Vec<f64> {
        vec![0.0]
    }
    fn affine_piece(&self, lo: f64, hi: f64) -> Option<(f64, f64)> {
        if hi <= 0.0 {
            Some((-self.weight, 0.0))
        } else if lo >= 0.0 {
            Some((self.weight, 0.0))
        } else {
            None
        }
    }
}

/// Nonmonotone normal compliance with softening beyond `r0`:
///
/// ```text
/// p(r) = 0                                         r < 0
///        c r                                       0 <= r <= r0
///        c r0 (beta + (1 - beta) exp(-(r - r0)/r0)) r > r0
/// ```
///
/// `p` is continuous, so `j(r) = int_0^r p` is C^1 and `dj(r) = {p(r)}`.
/// The steepest descent of `p` is `-c (1 - beta)`, attained at `r0`.
#[derive(Debug, Clone, Copy)]
pub struct NonmonotoneDrop {
    pub stiffness: f64,
    pub r0: f64,
    pub beta: f64,
}

impl NonmonotoneDrop {
    pub fn new(stiffness: f64, r0: f64, beta: f64) -> Self {
        assert!(stiffness > 0.0 && r0 > 0.0 && (0.0..1.0).contains(&beta) && beta > 0.0);
        Self { stiffness, r0, beta }
    }

    fn selection(&self, r: f64) -> f64 {
        let (c, r0, b) = (self.stiffness, self.r0, self.beta);
        if r <= 0.0 {
            0.0
        } else if r <= r0 {
            c * r
        } else {
            c * r0 * (b + (1.0 - b) * (-(r - r0) / r0).exp())
        }
    }
}

impl LipschitzPotential for NonmonotoneDrop {
    fn value(&self, r: f64) -> f64 {
        let (c, r0, b) = (self.stiffness, self.r0, self.beta);
        if r <= 0.0 {
            0.0
        } else if r <= r0 {
            0.5 * c * r * r
        } else {
            let s = r - r0;
            0.5 * c * r0 * r0 + c * r0 * (b * s + (1.0 - b) * r0 * (1.0 - (-s / r0).exp()))
        }
    }
    fn subgradient(&self, r: f64) -> Interval {
        Interval::point(self.selection(r))
    }
    fn growth_constant(&self) -> f64 {
        self.stiffness
    }
    fn relaxation_constant(&self) -> f64 {
        self.stiffness * (1.0 - self.beta)
    }
    fn breakpoints(&self) -> Vec<f64> {
        vec![0.0, self.r0]
    }
    fn affine_piece(&self, lo: f64, hi: f64) -> Option<(f64, f64)> {
        if hi <= 0.0 {
            Some((0.0, 0.0))
        } else if lo >= 0.0 && hi <= self.r0 {
            Some((0.0, self.stiffness))
        } else {
            None
        }
    }
}

/// `w * j`, used for nodal quadrature weights on the contact boundary.
#[derive(Debug, Clone)]
pub struct Scaled {
    pub inner: SharedPotential,
    pub weight: f64,
}

impl LipschitzPotential for Scaled {
    fn value(&self, r: f64) -> f64 {
        self.weight * self.inner.value(r)
    }
    fn subgradient(&self, r: f64) -> Interval {
        self.inner.subgradient(r).scaled(self.weight)
    }
    fn growth_constant(&self) -> f64 {
        self.weight * self.inner.growth_constant()
    }
    fn relaxation_constant(&self) -> f64 {
        self.weight * self.inner.relaxation_constant()
    }
    fn clarke_derivative(&self, r: f64, v: f64) -> f64 {
        self.weight * self.inner.clarke_derivative(r, v)
    }
    fn breakpoints(&self) -> Vec<f64> {
        self.inner.breakpoints()
    }
    fn affine_piece(&self, lo: f64, hi: f64) -> Option<(f64, f64)> {
        self.inner
            .affine_piece(lo, hi)
            .map(|(a, b)| (self.weight * a, self.weight * b))
    }
    fn subgradient_hull(&self, lo: f64, hi: f64) -> Interval {
        self.inner.subgradient_hull(lo, hi).scaled(self.weight)
    }
}

/// A potential with user-declared constants, which may only be more
/// pessimistic than the ones of `inner`.
#[derive(Debug, Clone)]
pub struct Declared {
    pub inner: SharedPotential,
    growth: f64,
    relaxation: f64,
}

impl Declared {
    pub fn new(inner: SharedPotential, growth: Option<f64>, relaxation: Option<f64>) -> crate::Result<Self> {
        let growth = growth.unwrap_or(inner.growth_constant());
        let relaxation = relaxation.unwrap_or(inner.relaxation_constant());
        if growth < inner.growth_constant() || relaxation < inner.relaxation_constant() {
            return Err(crate::HviError::InvalidArgument(format!(
                "declared constants (c = {growth}, m = {relaxation}) are below the actual ones (c = {}, m = {})",
                inner.growth_constant(),
                inner.relaxation_constant()
            )));
        }
        Ok(Self {
            inner,
            growth,
            relaxation,
        })
    }
}

impl LipschitzPotential for Declared {
    fn value(&self, r: f64) -> f64 {
        self.inner.value(r)
    }
    fn subgradient(&self, r: f64) -> Interval {
        self.inner.subgradient(r)
    }
    fn growth_constant(&self) -> f64 {
        self.growth
    }
    fn relaxation_constant(&self) -> f64 {
        self.relaxation
    }
    fn clarke_derivative(&self, r: f64, v: f64) -> f64 {
        self.inner.clarke_derivative(r, v)
    }
    fn breakpoints(&self) -> Vec<f64> {
        self.inner.breakpoints()
    }
    fn affine_piece(&self, lo: f64, hi: f64) -> Option<(f64, f64)> {
        self.inner.affine_piece(lo, hi)
    }
    fn subgradient_hull(&self, lo: f64, hi: f64) -> Interval {
        self.inner.subgradient_hull(lo, hi)
    }
}

/// Worst-case slacks found by sampling the hypotheses on a potential.
///
/// Negative or zero slacks mean the declared constants were respected.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PotentialAudit {
    /// `max (|zeta| - c_J (1 + |r|))` over sampled subgradients.
    pub growth_excess: f64,
    /// `max (j°(u; v-u) + j°(v; u-v) - m_J (u-v)^2)` over sampled pairs.
    pub monotonicity_excess: f64,
    /// Largest mismatch between `j°(u; v)` and the interval representation.
    pub consistency_error: f64,
}

impl PotentialAudit {
    pub fn passes(&self, slack: f64) -> bool {
        self.growth_excess <= slack && self.monotonicity_excess <= slack && self.consistency_error <= slack
    }
}

/// Samples growth, relaxed monotonicity and the `j°`/interval consistency
/// on `[-range, range]`, always including the breakpoints.
pub fn audit_potential(j: &dyn LipschitzPotential, samples: usize, range: f64, seed: u64) -> PotentialAudit {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c = j.growth_constant();
    let m = j.relaxation_constant();
    let mut points: Vec<f64> = (0..samples).map(|_| rng.gen_range(-range..range)).collect();
    for b in j.breakpoints() {
        points.extend([b, b - 1e-9, b + 1e-9]);
    }

    let mut growth_excess = f64::NEG_INFINITY;
    let mut consistency_error: f64 = 0.0;
    for &u in &points {
        let s = j.subgradient(u);
        growth_excess = growth_excess.max(s.max_abs() - c * (1.0 + u.abs()));
        for v in [-1.7, 0.0, 2.3] {
            let expected = if v > 0.0 {
                v * s.hi
            } else if v < 0.0 {
                v * s.lo
            } else {
                0.0
            };
            consistency_error = consistency_error.max((j.clarke_derivative(u, v) - expected).abs());
        }
    }

    let mut monotonicity_excess = f64::NEG_INFINITY;
    for i in 0..samples {
        let u = points[i];
        // Mix far pairs with close pairs so that steep local descent is seen.
        let v = if i % 2 == 0 {
            rng.gen_range(-range..range)
        } else {
            u + rng.gen_range(-0.05..0.05) * range
        };
        let lhs = j.clarke_derivative(u, v - u) + j.clarke_derivative(v, u - v);
        monotonicity_excess = monotonicity_excess.max(lhs - m * (u - v) * (u - v));
    }
    for b in j.breakpoints() {
        for d in [1e-6, 1e-3, 0.1] {
            for (u, v) in [(b, b + d), (b - d, b), (b - d, b + d)] {
                let lhs = j.clarke_derivative(u, v - u) + j.clarke_derivative(v, u - v);
                monotonicity_excess = monotonicity_excess.max(lhs - m * (u - v) * (u - v));
            }
        }
    }

    PotentialAudit {
        growth_excess,
        monotonicity_excess,
        consistency_error,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn abs_subgradient_is_interval_at_kink() {
        let j = AbsPotential { weight: 2.0 };
        assert_eq!(j.subgradient(0.0), Interval::new(-2.0, 2.0));
        assert_eq!(j.clarke_derivative(0.0, -1.0), 2.0);
        assert_eq!(j.clarke_derivative(0.0, 1.0), 2.0);
    }

    #[test]
    fn quadratic_compliance_smooth_point() {
        let j = QuadraticCompliance { stiffness: 1.0 };
        assert_eq!(j.subgradient(1.0), Interval::point(1.0));
        assert_eq!(j.clarke_derivative(1.0, 0.7), 0.7);
        assert_eq!(j.subgradient(-3.0), Interval::point(0.0));
    }

    #[test]
    fn drop_is_continuous_and_declares_its_descent() {
        let j = NonmonotoneDrop::new(1.0, 1.0, 0.5);
        let left = j.subgradient(1.0 - 1e-12).lo;
        let right = j.subgradient(1.0 + 1e-12).lo;
        assert!((left - right).abs() < 1e-10);
        assert!((j.relaxation_constant() - 0.5).abs() < 1e-15);
        // steepest secant slope just right of r0
        let d = 1e-7;
        let slope = (j.subgradient(1.0 + d).lo - j.subgradient(1.0).lo) / d;
        assert!((slope + 0.5).abs() < 1e-6, "{slope}");
    }

    #[test]
    fn drop_value_is_antiderivative() {
        let j = NonmonotoneDrop::new(2.0, 0.5, 0.3);
        for r in [-1.0, 0.2, 0.5, 0.9, 3.0] {
            let h = 1e-6;
            let fd = (j.value(r + h) - j.value(r - h)) / (2.0 * h);
            assert!((fd - j.subgradient(r).lo).abs() < 1e-6, "r={r}");
        }
    }

    #[test]
    fn hull_covers_nonmonotone_peak() {
        let j = NonmonotoneDrop::new(1.0, 1.0, 0.5);
        let h = j.subgradient_hull(0.5, 3.0);
        assert_eq!(h.hi, 1.0);
        assert!((h.lo - 0.5).abs() < 1e-12);
    }

    #[test]
    fn scaled_potential_scales_everything() {
        let j = Scaled {
            inner: Arc::new(AbsPotential { weight: 1.0 }),
            weight: 0.25,
        };
        assert_eq!(j.subgradient(0.0), Interval::new(-0.25, 0.25));
        assert_eq!(j.growth_constant(), 0.25);
        assert_eq!(j.value(-4.0), 1.0);
    }
}
