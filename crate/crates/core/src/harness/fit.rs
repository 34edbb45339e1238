//! Log-log slope fits of regret against horizon.

use rand::Rng;
use serde::{Deserialize, Serialize};

/// Mean regrets at or below this are treated as zero and make a fit degenerate.
pub const DEGENERATE_REGRET: f64 = 1e-9;
/// Bootstrap replicates used for the slope interval.
pub const BOOTSTRAP_REPLICATES: usize = 1000;
/// Two-sided coverage of the bootstrap interval.
pub const BOOTSTRAP_LEVEL: f64 = 0.95;

/// Ordinary least-squares line `y = intercept + slope * x`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub residuals: Vec<f64>,
}

/// Least squares on at least two points with distinct `x`.
pub fn ols(x: &[f64], y: &[f64]) -> Option<LineFit> {
    let n = x.len();
    if n < 2 || y.len() != n {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    if !(sxx > 0.0) {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residuals: Vec<f64> = x.iter().zip(y).map(|(a, b)| b - intercept - slope * a).collect();
    let ss_res: f64 = residuals.iter().map(|r| r * r).sum();
    let ss_tot: f64 = y.iter().map(|b| (b - my) * (b - my)).sum();
    let r_squared = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    Some(LineFit { slope, intercept, r_squared, residuals })
}

/// Slope of `ln mean R` on `ln T`, with a seed bootstrap interval and a
/// median-of-seeds variant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub fit: LineFit,
    pub ci_low: f64,
    pub ci_high: f64,
    /// Slope fitted to the per-horizon medians instead of means.
    pub robust_slope: Option<f64>,
    pub replicates: usize,
}

/// Outcome of a slope fit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum FitOutcome {
    Fitted(SlopeFit),
    Degenerate { reason: String },
}

impl FitOutcome {
    pub fn slope(&self) -> Option<f64> {
        match self {
            FitOutcome::Fitted(s) => Some(s.fit.slope),
            FitOutcome::Degenerate { .. } => None,
        }
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

pub(crate) fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

/// `q`-quantile by linear interpolation between order statistics.
pub(crate) fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Fits the scaling exponent from per-seed final regrets at each horizon.
///
/// `horizons[k]` is the number of rounds actually played at grid point `k`
/// and `per_seed[k]` holds one cumulative regret per seed. Bootstrap
/// replicates resample seeds with replacement independently per horizon.
pub fn fit_slope<R: Rng + ?Sized>(
    horizons: &[u64],
    per_seed: &[Vec<f64>],
    replicates: usize,
    rng: &mut R,
) -> FitOutcome {
    if horizons.len() < 2 {
        return FitOutcome::Degenerate { reason: "a fit needs at least two horizons".into() };
    }
    if per_seed.iter().any(|s| s.is_empty()) {
        return FitOutcome::Degenerate { reason: "a horizon has no seeds".into() };
    }
    let means: Vec<f64> = per_seed.iter().map(|s| mean(s)).collect();
    if let Some(m) = means.iter().find(|&&m| !(m > DEGENERATE_REGRET)) {
        return FitOutcome::Degenerate { reason: format!("mean regret {m:e} is not above {DEGENERATE_REGRET:e}") };
    }
    let x: Vec<f64> = horizons.iter().map(|&t| (t as f64).ln()).collect();
    let y: Vec<f64> = means.iter().map(|m| m.ln()).collect();
    let Some(fit) = ols(&x, &y) else {
        return FitOutcome::Degenerate { reason: "horizons are not distinct".into() };
    };

    let medians: Vec<f64> = per_seed.iter().map(|s| median(s)).collect();
    let robust_slope = if medians.iter().all(|&m| m > DEGENERATE_REGRET) {
        ols(&x, &medians.iter().map(|m| m.ln()).collect::<Vec<_>>()).map(|f| f.slope)
    } else {
        None
    };

    let mut slopes = Vec::with_capacity(replicates);
    let mut ys = vec![0.0; y.len()];
    for _ in 0..replicates {
        let mut ok = true;
        for (k, seeds) in per_seed.iter().enumerate() {
            let m = (0..seeds.len()).map(|_| seeds[rng.random_range(0..seeds.len())]).sum::<f64>() / seeds.len() as f64;
            ok &= m > DEGENERATE_REGRET;
            ys[k] = m.ln();
        }
        if ok {
            if let Some(f) = ols(&x, &ys) {
                slopes.push(f.slope);
            }
        }
    }
    slopes.sort_by(f64::total_cmp);
    let tail = 0.5 * (1.0 - BOOTSTRAP_LEVEL);
    let (ci_low, ci_high) =
        if slopes.is_empty() { (f64::NAN, f64::NAN) } else { (quantile(&slopes, tail), quantile(&slopes, 1.0 - tail)) };
    FitOutcome::Fitted(SlopeFit { fit, ci_low, ci_high, robust_slope, replicates: slopes.len() })
}
