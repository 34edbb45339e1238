//! Gain from trade: realized, expected at a posted price, and first-best.
//!
//! For traders with CDFs `F`, `G` and common mean `mu`, the expected gain at
//! price `p` is
//!
//! ```text
//! E g(p) = int_0^p (F + G) + (mu - p) (F + G)(p)
//! ```
//!
//! which is maximized at `p = mu`, with `0 <= E g(mu) - E g(p) <= M (mu - p)^2`.
//! Each law's share `int_0^p F + (mu - p) F(p)` is evaluated as
//! `(1 - F(p)) E[(p - V)^+] + F(p) E[(V - p)^+]`, a sum of non-negative terms
//! that is exactly zero for prices outside the support.
//! The first-best value is `E|V - W| = int F (1 - G) + int G (1 - F)`.

use serde::{Deserialize, Serialize};

use crate::distributions::{BoundedDensity, ValuationPair};
use crate::error::{domain, Error, Result};

/// Slack allowed on the analytic regret bounds.
pub const REGRET_TOL: f64 = 1e-10;
/// Grid step of the brute-force maximizer check.
pub const BEST_PRICE_GRID_STEP: f64 = 1e-4;
/// Allowed excess of any grid price over the value at the mean.
pub const BEST_PRICE_TOL: f64 = 1e-9;

/// Expected gain and regret of one price against one pair.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GftQuote {
    pub price: f64,
    pub expected_gft: f64,
    pub instantaneous_regret: f64,
}

/// `g(p, v, w)` without range checks.
#[inline]
pub fn gain(p: f64, v: f64, w: f64) -> f64 {
    let (lo, hi) = if v <= w { (v, w) } else { (w, v) };
    if lo <= p && p <= hi {
        hi - lo
    } else {
        0.0
    }
}

/// Gain from trade at price `p` for valuations `v`, `w`: the gap between
/// them when the price lies between them (inclusive), zero otherwise.
pub fn realized_gft(p: f64, v: f64, w: f64) -> Result<f64> {
    for (name, x) in [("price", p), ("v", v), ("w", w)] {
        if !(0.0..=1.0).contains(&x) {
            return domain(format!("{name} = {x} is outside [0, 1]"));
        }
    }
    Ok(gain(p, v, w))
}

#[inline]
pub(crate) fn expected_gft_unchecked(pair: &ValuationPair, p: f64) -> f64 {
    let share = |d: &BoundedDensity| {
        d.survival_unchecked(p) * d.cdf_integral_unchecked(p) + d.cdf_unchecked(p) * d.upper_partial_mean_unchecked(p)
    };
    share(pair.left()) + share(pair.right())
}

/// Expected gain from trade when posting `p`, evaluated in closed form.
pub fn expected_gft(pair: &ValuationPair, p: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return domain(format!("price {p} is outside [0, 1]"));
    }
    Ok(expected_gft_unchecked(pair, p))
}

/// Expected gain at `p` together with its regret against posting the mean.
pub fn quote(pair: &ValuationPair, p: f64) -> Result<GftQuote> {
    let value = expected_gft(pair, p)?;
    let best = expected_gft_unchecked(pair, pair.common_mean());
    Ok(GftQuote { price: p, expected_gft: value, instantaneous_regret: best - value })
}

/// `int_0^1 F G` by Simpson's rule on each interval of the merged
/// breakpoints, where the integrand is an exact quadratic.
fn cdf_product_integral(f: &BoundedDensity, g: &BoundedDensity) -> f64 {
    let mut grid: Vec<f64> = f.breakpoints().iter().chain(g.breakpoints()).copied().collect();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    grid.windows(2)
        .map(|w| {
            let (a, b) = (w[0], w[1]);
            let m = 0.5 * (a + b);
            let fa = f.cdf_unchecked(a) * g.cdf_unchecked(a);
            let fb = f.cdf_unchecked(b) * g.cdf_unchecked(b);
            let fm = f.cdf_unchecked(m) * g.cdf_unchecked(m);
            (b - a) / 6.0 * (fa + 4.0 * fm + fb)
        })
        .sum()
}

/// First-best value `E|V - W| = int F (1 - G) + int G (1 - F)`.
pub fn first_best(pair: &ValuationPair) -> f64 {
    let (f, g) = (pair.left(), pair.right());
    // int_0^1 F = 1 - E[V].
    let int_f = 1.0 - f.mean();
    let int_g = 1.0 - g.mean();
    (int_f + int_g - 2.0 * cdf_product_integral(f, g)).max(0.0)
}

/// `E|V - W|` by direct double integration over every pair of pieces.
///
/// On a rectangle `[a, b] x [c, d]` with unit density,
/// `int int |v - w| = -(H(b - d) - H(b - c) - H(a - d) + H(a - c))` with
/// `H(x) = |x|^3 / 6`. This route never touches the CDFs and serves as an
/// independent check of [`first_best`].
pub fn mean_absolute_gap_direct(pair: &ValuationPair) -> f64 {
    let h = |x: f64| x.abs().powi(3) / 6.0;
    let (f, g) = (pair.left(), pair.right());
    let mut total = 0.0;
    for (i, fi) in f.heights().iter().enumerate() {
        if *fi == 0.0 {
            continue;
        }
        let (a, b) = (f.breakpoints()[i], f.breakpoints()[i + 1]);
        for (j, gj) in g.heights().iter().enumerate() {
            if *gj == 0.0 {
                continue;
            }
            let (c, d) = (g.breakpoints()[j], g.breakpoints()[j + 1]);
            let rect = -(h(b - d) - h(b - c) - h(a - d) + h(a - c));
            total += fi * gj * rect;
        }
    }
    total
}

/// `E g(mu) / E|V - W|`, at least `1/2` for every valid pair.
pub fn approx_ratio(pair: &ValuationPair) -> Result<f64> {
    let fb = first_best(pair);
    if !(fb > 1e-15) {
        return Err(Error::UndefinedRatio(fb));
    }
    Ok(expected_gft_unchecked(pair, pair.common_mean()) / fb)
}

/// Largest amount by which any price on a grid of step `step` beats posting the mean.
pub fn max_grid_excess(pair: &ValuationPair, step: f64) -> f64 {
    let best = expected_gft_unchecked(pair, pair.common_mean());
    let n = (1.0 / step).round() as usize;
    (0..=n).map(|k| expected_gft_unchecked(pair, (k as f64 * step).min(1.0)) - best).fold(f64::NEG_INFINITY, f64::max)
}

/// The best fixed price, which is the common mean.
///
/// The claim is checked by brute force on a `1e-4` price grid; a grid price
/// beating the mean by more than `1e-9` is reported as an invariant failure.
pub fn best_fixed_price(pair: &ValuationPair) -> Result<f64> {
    let excess = max_grid_excess(pair, BEST_PRICE_GRID_STEP);
    if excess > BEST_PRICE_TOL {
        return Err(Error::Invariant(format!("a grid price beats the mean by {excess:e}")));
    }
    Ok(pair.common_mean())
}
