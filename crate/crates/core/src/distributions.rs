//! Piecewise-constant valuation densities on `[0,1]`.
//!
//! Every law used by the simulator is exactly piecewise constant, so the CDF
//! is piecewise linear and its running integral piecewise quadratic. All of
//! these are evaluated in closed form.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

/// Absolute tolerance for normalization and mean agreement.
pub const DENSITY_TOL: f64 = 1e-12;

#[derive(Clone, Debug, Serialize, Deserialize)]
struct DensityRepr {
    breakpoints: Vec<f64>,
    heights: Vec<f64>,
}

/// Density `f(x) = heights[k]` for `x` in `[breakpoints[k], breakpoints[k+1])`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DensityRepr", into = "DensityRepr")]
pub struct BoundedDensity {
    breakpoints: Vec<f64>,
    heights: Vec<f64>,
    /// CDF at each breakpoint.
    cdf_at: Vec<f64>,
    /// `int_0^{b_k} F` at each breakpoint.
    cdf_integral_at: Vec<f64>,
    /// `1 - F` at each breakpoint, summed from the right so that it is
    /// exactly zero above the support.
    survival_at: Vec<f64>,
    /// `int_{b_k}^1 (1 - F)` at each breakpoint, also summed from the right.
    tail_at: Vec<f64>,
    mean: f64,
    bound: f64,
}

impl TryFrom<DensityRepr> for BoundedDensity {
    type Error = Error;

    fn try_from(repr: DensityRepr) -> Result<Self> {
        Self::new(repr.breakpoints, repr.heights)
    }
}

impl From<BoundedDensity> for DensityRepr {
    fn from(d: BoundedDensity) -> Self {
        Self { breakpoints: d.breakpoints, heights: d.heights }
    }
}

impl BoundedDensity {
    /// Builds a density from `m + 1` breakpoints `0 = b_0 < ... < b_m = 1`
    /// and `m` non-negative heights integrating to one.
    pub fn new(breakpoints: Vec<f64>, heights: Vec<f64>) -> Result<Self> {
        if breakpoints.len() < 2 || heights.len() + 1 != breakpoints.len() {
            return domain(format!(
                "need m + 1 breakpoints for m heights, got {} and {}",
                breakpoints.len(),
                heights.len()
            ));
        }
        if breakpoints[0] != 0.0 || *breakpoints.last().unwrap() != 1.0 {
            return domain("breakpoints must start at 0 and end at 1");
        }
        if breakpoints.windows(2).any(|w| !(w[0] < w[1])) {
            return domain("breakpoints must be strictly increasing");
        }
        if heights.iter().any(|h| !h.is_finite() || *h < 0.0) {
            return domain("heights must be finite and non-negative");
        }

        let m = heights.len();
        let mut cdf_at = Vec::with_capacity(m + 1);
        let mut cdf_integral_at = Vec::with_capacity(m + 1);
        cdf_at.push(0.0);
        cdf_integral_at.push(0.0);
        let mut mean = 0.0;
        for k in 0..m {
            let (a, b, h) = (breakpoints[k], breakpoints[k + 1], heights[k]);
            let w = b - a;
            let c = cdf_at[k];
            cdf_at.push(c + h * w);
            cdf_integral_at.push(cdf_integral_at[k] + c * w + 0.5 * h * w * w);
            mean += 0.5 * h * (b - a) * (b + a);
        }
        let total = cdf_at[m];
        if (total - 1.0).abs() > DENSITY_TOL {
            return domain(format!("density integrates to {total}, not 1"));
        }
        // Remove the residual so that F(1) = 1 exactly.
        cdf_at[m] = 1.0;
        let mut survival_at = vec![0.0; m + 1];
        let mut tail_at = vec![0.0; m + 1];
        for k in (0..m).rev() {
            let (w, h) = (breakpoints[k + 1] - breakpoints[k], heights[k]);
            survival_at[k] = survival_at[k + 1] + h * w;
            tail_at[k] = tail_at[k + 1] + survival_at[k + 1] * w + 0.5 * h * w * w;
        }
        let bound = heights.iter().copied().fold(0.0, f64::max);
        Ok(Self { breakpoints, heights, cdf_at, cdf_integral_at, survival_at, tail_at, mean, bound })
    }

    /// The uniform density on `[0,1]`.
    pub fn uniform() -> Self {
        Self::new(vec![0.0, 1.0], vec![1.0]).expect("uniform density is valid")
    }

    /// Uniform density on `[lo, hi]` inside `[0,1]`.
    pub fn uniform_on(lo: f64, hi: f64) -> Result<Self> {
        if !(0.0 <= lo && lo < hi && hi <= 1.0) {
            return domain(format!("[{lo}, {hi}] is not a non-degenerate subinterval of [0, 1]"));
        }
        let h = 1.0 / (hi - lo);
        let mut b = vec![0.0];
        let mut heights = Vec::new();
        if lo > 0.0 {
            b.push(lo);
            heights.push(0.0);
        }
        heights.push(h);
        b.push(hi);
        if hi < 1.0 {
            heights.push(0.0);
            b.push(1.0);
        }
        Self::new(b, heights)
    }

    /// Density made of disjoint constant blocks `(lo, hi, height)` listed in
    /// increasing order; gaps between blocks get zero density.
    pub fn from_blocks(blocks: &[(f64, f64, f64)]) -> Result<Self> {
        let snap = 1e-15;
        let mut b = vec![0.0];
        let mut h = Vec::new();
        for &(lo, hi, height) in blocks {
            let last = *b.last().unwrap();
            if lo < last - snap || !(hi > lo) {
                return domain(format!("block [{lo}, {hi}] overlaps or is empty"));
            }
            if lo > last + snap {
                b.push(lo);
                h.push(0.0);
            }
            let end = if hi > 1.0 - snap { 1.0 } else { hi };
            b.push(end);
            h.push(height);
        }
        if *b.last().unwrap() < 1.0 {
            b.push(1.0);
            h.push(0.0);
        }
        Self::new(b, h)
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn heights(&self) -> &[f64] {
        &self.heights
    }

    /// `int x f(x) dx`.
    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// `max f`, the density bound `M`.
    pub fn bound(&self) -> f64 {
        self.bound
    }

    /// `int_0^1 f`, recomputed from the pieces.
    pub fn total_mass(&self) -> f64 {
        self.heights.iter().zip(self.breakpoints.windows(2)).map(|(h, w)| h * (w[1] - w[0])).sum()
    }

    /// Index of the piece `[b_k, b_{k+1})` holding `x`; `x = 1` maps to the last piece.
    #[inline]
    fn piece(&self, x: f64) -> usize {
        let k = self.breakpoints.partition_point(|&b| b <= x);
        k.saturating_sub(1).min(self.heights.len() - 1)
    }

    #[inline]
    pub(crate) fn cdf_unchecked(&self, x: f64) -> f64 {
        if x >= 1.0 {
            return 1.0;
        }
        let k = self.piece(x);
        (self.cdf_at[k] + self.heights[k] * (x - self.breakpoints[k])).clamp(0.0, 1.0)
    }

    #[inline]
    pub(crate) fn cdf_integral_unchecked(&self, x: f64) -> f64 {
        let k = self.piece(x);
        let dx = x - self.breakpoints[k];
        self.cdf_integral_at[k] + self.cdf_at[k] * dx + 0.5 * self.heights[k] * dx * dx
    }

    #[inline]
    pub(crate) fn survival_unchecked(&self, x: f64) -> f64 {
        if x >= 1.0 {
            return 0.0;
        }
        let k = self.piece(x);
        (self.survival_at[k + 1] + self.heights[k] * (self.breakpoints[k + 1] - x)).clamp(0.0, 1.0)
    }

    /// `E[(X - x)^+] = int_x^1 (1 - F)`.
    #[inline]
    pub(crate) fn upper_partial_mean_unchecked(&self, x: f64) -> f64 {
        let k = self.piece(x);
        let d = (self.breakpoints[k + 1] - x).max(0.0);
        self.tail_at[k + 1] + self.survival_at[k + 1] * d + 0.5 * self.heights[k] * d * d
    }

    /// `F(x) = P(X <= x)`.
    pub fn cdf(&self, x: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&x) {
            return domain(format!("cdf argument {x} is outside [0, 1]"));
        }
        Ok(self.cdf_unchecked(x))
    }

    /// `int_0^x F(s) ds`.
    pub fn cdf_integral(&self, x: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&x) {
            return domain(format!("argument {x} is outside [0, 1]"));
        }
        Ok(self.cdf_integral_unchecked(x))
    }

    /// Density value at `x` (right-continuous).
    pub fn density(&self, x: f64) -> f64 {
        if !(0.0..=1.0).contains(&x) {
            return 0.0;
        }
        self.heights[self.piece(x)]
    }

    /// Generalized inverse `inf { x : F(x) > u }` for `u` in `[0, 1)`.
    ///
    /// Flat stretches of the CDF are skipped, so a `u` sitting exactly on a
    /// plateau maps to the right end of that plateau.
    pub fn quantile(&self, u: f64) -> f64 {
        let u = u.clamp(0.0, 1.0);
        let k = self.cdf_at.partition_point(|&c| c <= u).saturating_sub(1).min(self.heights.len() - 1);
        let (a, b) = (self.breakpoints[k], self.breakpoints[k + 1]);
        let h = self.heights[k];
        if h <= 0.0 {
            return b;
        }
        (a + (u - self.cdf_at[k]) / h).clamp(a, b)
    }

    /// Inverse-CDF draw.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.quantile(rng.random::<f64>())
    }

    /// Pushes the law forward through `x -> offset + scale * x`, padding with
    /// zero-density pieces so the support stays `[0,1]`. The image of `[0,1]`
    /// must lie in `[0,1]`.
    pub fn affine_image(&self, offset: f64, scale: f64) -> Result<Self> {
        if !(scale > 0.0) {
            return domain("scale must be positive");
        }
        let lo = offset;
        let hi = offset + scale;
        let snap = 1e-14;
        if lo < -snap || hi > 1.0 + snap {
            return domain(format!("affine image [{lo}, {hi}] leaves [0, 1]"));
        }
        let mut b: Vec<f64> = self.breakpoints.iter().map(|x| offset + scale * x).collect();
        let mut h: Vec<f64> = self.heights.iter().map(|x| x / scale).collect();
        let m = b.len() - 1;
        if b[0] < snap {
            b[0] = 0.0;
        } else {
            b.insert(0, 0.0);
            h.insert(0, 0.0);
        }
        let last = b.len() - 1;
        if b[last] > 1.0 - snap {
            b[last] = 1.0;
        } else {
            b.push(1.0);
            h.push(0.0);
        }
        debug_assert!(b.len() > m);
        Self::new(b, h)
    }
}

/// Valuation laws of the two traders of one round.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValuationPair {
    left: BoundedDensity,
    right: BoundedDensity,
    common_mean: f64,
}

impl ValuationPair {
    /// Pairs two densities whose means agree within [`DENSITY_TOL`].
    pub fn new(left: BoundedDensity, right: BoundedDensity) -> Result<Self> {
        let gap = (left.mean() - right.mean()).abs();
        if gap > DENSITY_TOL {
            return domain(format!("means differ by {gap}: {} vs {}", left.mean(), right.mean()));
        }
        let common_mean = left.mean();
        Ok(Self { left, right, common_mean })
    }

    /// Both traders share one law.
    pub fn symmetric(density: BoundedDensity) -> Self {
        let common_mean = density.mean();
        Self { left: density.clone(), right: density, common_mean }
    }

    pub fn left(&self) -> &BoundedDensity {
        &self.left
    }

    pub fn right(&self) -> &BoundedDensity {
        &self.right
    }

    /// The market value `mu`.
    pub fn common_mean(&self) -> f64 {
        self.common_mean
    }

    /// `M = max(sup f, sup g)`.
    pub fn density_bound(&self) -> f64 {
        self.left.bound().max(self.right.bound())
    }

    /// Draws `(V, W)`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (f64, f64) {
        let v = self.left.sample(rng);
        let w = self.right.sample(rng);
        (v, w)
    }
}

/// Sign of the perturbation in the lower-bound densities.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sign {
    #[serde(rename = "+")]
    Plus,
    #[serde(rename = "-")]
    Minus,
}

impl Sign {
    pub fn value(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }

    pub fn from_i8(v: i8) -> Result<Self> {
        match v {
            1 => Ok(Sign::Plus),
            -1 => Ok(Sign::Minus),
            other => domain(format!("sign must be +1 or -1, got {other}")),
        }
    }

    pub fn as_i8(self) -> i8 {
        match self {
            Sign::Plus => 1,
            Sign::Minus => -1,
        }
    }
}

/// The two-law pair on which posting the mean earns `1/4` while the
/// first-best earns `(1 - delta) / 2`.
///
/// Left: density `1/(2 delta)` on `[0, delta] U [1 - delta, 1]`.
/// Right: density `1/(2 delta)` on `[1/2 - delta, 1/2 + delta]`.
pub fn make_tightness_pair(delta: f64) -> Result<ValuationPair> {
    if !(delta > 0.0 && delta < 1.0 / 6.0) {
        return domain(format!("delta = {delta} is outside (0, 1/6)"));
    }
    // Heights use the represented widths so each law has unit mass to rounding.
    let (lo, hi) = (1.0 - delta, 0.5 - delta);
    let h_left = 1.0 / (delta + (1.0 - lo));
    let h_right = 1.0 / ((0.5 + delta) - hi);
    let left = BoundedDensity::new(vec![0.0, delta, lo, 1.0], vec![h_left, 0.0, h_left])?;
    let right = BoundedDensity::new(vec![0.0, hi, 0.5 + delta, 1.0], vec![0.0, h_right, 0.0])?;
    ValuationPair::new(left, right)
}

/// `f = 1 -/+ eps` on `[1/7, 3/14]`, `1 +/- eps` on `(3/14, 2/7]`, `1` elsewhere.
/// Its mean is `1/2 +/- eps/196` and it is bounded by `1 + eps`.
pub fn make_lowerbound_density(sign: Sign, epsilon: f64) -> Result<BoundedDensity> {
    if !(0.0..=1.0).contains(&epsilon) {
        return domain(format!("epsilon = {epsilon} is outside [0, 1]"));
    }
    let s = sign.value() * epsilon;
    BoundedDensity::new(vec![0.0, 1.0 / 7.0, 3.0 / 14.0, 2.0 / 7.0, 1.0], vec![1.0, 1.0 - s, 1.0 + s, 1.0])
}

/// Market value of [`make_lowerbound_density`]: `1/2 + sign * eps / 196`.
pub fn lowerbound_mean(sign: Sign, epsilon: f64) -> f64 {
    0.5 + sign.value() * epsilon / 196.0
}

const RANDOM_PAIR_RETRIES: usize = 256;

fn random_density<R: Rng + ?Sized>(rng: &mut R, pieces: usize, density_cap: f64) -> Option<BoundedDensity> {
    let mut b: Vec<f64> = (0..pieces - 1).map(|_| rng.random::<f64>()).collect();
    b.push(0.0);
    b.push(1.0);
    b.sort_by(f64::total_cmp);
    b.dedup();
    if b.len() != pieces + 1 || b.windows(2).any(|w| w[1] - w[0] < 1e-6) {
        return None;
    }
    // Some pieces are left empty so that flat CDF stretches get exercised.
    let mut h: Vec<f64> = (0..pieces)
        .map(|_| if pieces > 1 && rng.random::<f64>() < 0.2 { 0.0 } else { rng.random::<f64>() + 0.05 })
        .collect();
    let mass: f64 = h.iter().zip(b.windows(2)).map(|(h, w)| h * (w[1] - w[0])).sum();
    if mass <= 0.0 {
        return None;
    }
    h.iter_mut().for_each(|x| *x /= mass);
    // Fold the rounding residue into the widest non-empty piece.
    let residue = 1.0 - h.iter().zip(b.windows(2)).map(|(h, w)| h * (w[1] - w[0])).sum::<f64>();
    let widest =
        (0..pieces).filter(|&k| h[k] > 0.0).max_by(|&i, &j| (b[i + 1] - b[i]).total_cmp(&(b[j + 1] - b[j])))?;
    h[widest] += residue / (b[widest + 1] - b[widest]);
    if h.iter().copied().fold(0.0, f64::max) > density_cap {
        return None;
    }
    BoundedDensity::new(b, h).ok()
}

/// Two independent random piecewise-constant densities with `pieces`
/// pieces each, the second re-centred on the first's mean by the affine
/// contraction `x -> mu_1 + s (x - mu_2)` (largest `s <= 1` keeping the
/// support in `[0,1]`). Both bounds stay below `density_cap`.
pub fn make_random_pair<R: Rng + ?Sized>(rng: &mut R, pieces: usize, density_cap: f64) -> Result<ValuationPair> {
    if pieces == 0 {
        return domain("pieces must be at least 1");
    }
    if !(density_cap > 1.0) {
        return domain(format!("density cap {density_cap} must exceed 1"));
    }
    for _ in 0..RANDOM_PAIR_RETRIES {
        let Some(left) = random_density(rng, pieces, density_cap) else { continue };
        let Some(right) = random_density(rng, pieces, density_cap) else { continue };
        let (target, mu2) = (left.mean(), right.mean());
        let mut scale: f64 = 1.0;
        if mu2 > 0.0 {
            scale = scale.min(target / mu2);
        }
        if mu2 < 1.0 {
            scale = scale.min((1.0 - target) / (1.0 - mu2));
        }
        if !(scale > 0.0) {
            continue;
        }
        let Ok(shifted) = right.affine_image(target - scale * mu2, scale) else { continue };
        if shifted.bound() > density_cap {
            continue;
        }
        if let Ok(pair) = ValuationPair::new(left, shifted) {
            return Ok(pair);
        }
    }
    Err(Error::Generation(format!(
        "no mean-matched pair with {pieces} pieces under cap {density_cap} after {RANDOM_PAIR_RETRIES} attempts"
    )))
}
