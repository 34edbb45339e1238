//! One-shot checks of the analytic identities and inequalities.

use rand::Rng;
use serde::Serialize;

use crate::distributions::{
    make_lowerbound_density, make_random_pair, make_tightness_pair, BoundedDensity, Sign, ValuationPair,
};
use crate::dyadic::pow2_saturating;
use crate::error::Result;
use crate::gft::{
    approx_ratio, expected_gft_unchecked, first_best, max_grid_excess, mean_absolute_gap_direct, BEST_PRICE_GRID_STEP,
    BEST_PRICE_TOL, REGRET_TOL,
};
use crate::learners::{BiAve, ExBis, Feedback, Learner, RoundView};
use crate::rng::{stream, Role};

/// Slack on the half-of-first-best inequality.
pub const HALF_RATIO_TOL: f64 = 1e-9;
/// Slack on the exact tightness ratios.
pub const TIGHTNESS_TOL: f64 = 1e-9;
/// Agreement required between the two first-best routes.
pub const FIRST_BEST_TOL: f64 = 1e-10;
/// Perturbation sizes of the tightness check.
pub const TIGHTNESS_EPSILONS: [f64; 3] = [0.01, 0.05, 0.09];
/// Largest number of pieces of a random test density.
pub const MAX_PIECES: usize = 8;
/// Density cap of random test pairs.
pub const RANDOM_DENSITY_CAP: f64 = 12.0;

/// Outcome of one family of checks. Margins are slacks: non-negative when a case passes.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckReport {
    pub name: String,
    pub cases: usize,
    pub failures: usize,
    pub worst_margin: f64,
    pub first_failure: Option<String>,
}

impl CheckReport {
    fn new(name: &str) -> Self {
        Self { name: name.into(), cases: 0, failures: 0, worst_margin: f64::INFINITY, first_failure: None }
    }

    fn record(&mut self, margin: f64, describe: impl FnOnce() -> String) {
        self.cases += 1;
        if margin.is_nan() || margin < self.worst_margin {
            self.worst_margin = margin;
        }
        if !(margin >= 0.0) {
            self.failures += 1;
            if self.first_failure.is_none() {
                self.first_failure = Some(describe());
            }
        }
    }

    pub fn passed(&self) -> bool {
        self.cases > 0 && self.failures == 0
    }

    pub fn summary(&self) -> String {
        let mut s = format!("{} cases, {} failures, worst margin {:e}", self.cases, self.failures, self.worst_margin);
        if let Some(f) = &self.first_failure {
            s.push_str("; first failure: ");
            s.push_str(f);
        }
        s
    }
}

/// A random mean-matched pair with between 1 and [`MAX_PIECES`] pieces per law.
pub fn random_pair<R: Rng + ?Sized>(rng: &mut R) -> Result<ValuationPair> {
    let pieces = rng.random_range(1..=MAX_PIECES);
    make_random_pair(rng, pieces, RANDOM_DENSITY_CAP)
}

pub fn random_pairs<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<Vec<ValuationPair>> {
    (0..n).map(|_| random_pair(rng)).collect()
}

/// Ratio checks: half of first-best on random pairs, exact ratios on the
/// tightness family, and the uniform pair.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ApproxReport {
    pub half_ratio: CheckReport,
    pub tightness: CheckReport,
    pub uniform: CheckReport,
}

impl ApproxReport {
    pub fn checks(&self) -> [&CheckReport; 3] {
        [&self.half_ratio, &self.tightness, &self.uniform]
    }
}

pub fn approx_suite<R: Rng + ?Sized>(n_pairs: usize, rng: &mut R) -> Result<ApproxReport> {
    let mut half = CheckReport::new("half of first-best");
    for (k, pair) in random_pairs(n_pairs, rng)?.iter().enumerate() {
        let mu_value = expected_gft_unchecked(pair, pair.common_mean());
        let fb = first_best(pair);
        half.record(mu_value - 0.5 * fb + HALF_RATIO_TOL, || {
            format!("pair {k}: E g(mu) = {mu_value}, first-best = {fb}")
        });
    }

    let mut tight = CheckReport::new("tightness ratios");
    for eps in TIGHTNESS_EPSILONS {
        let delta = 2.0 * eps / (1.0 + 2.0 * eps);
        let ratio = approx_ratio(&make_tightness_pair(delta)?)?;
        tight.record(TIGHTNESS_TOL - (ratio - (0.5 + eps)).abs(), || {
            format!("eps = {eps}: ratio {ratio}, expected {}", 0.5 + eps)
        });
    }

    let mut uniform = CheckReport::new("uniform ratio 3/4");
    let ratio = approx_ratio(&ValuationPair::symmetric(BoundedDensity::uniform()))?;
    uniform.record(TIGHTNESS_TOL - (ratio - 0.75).abs(), || format!("ratio {ratio}"));

    Ok(ApproxReport { half_ratio: half, tightness: tight, uniform })
}

/// `-tol <= E g(mu) - E g(p) <= M (mu - p)^2 + tol` on `grid` equispaced
/// prices, with `E g` supplied by `eval`.
pub fn quadratic_bound_sweep_with<F>(pairs: &[ValuationPair], grid: usize, eval: F) -> CheckReport
where
    F: Fn(&ValuationPair, f64) -> f64,
{
    let mut report = CheckReport::new("quadratic regret bound");
    for (k, pair) in pairs.iter().enumerate() {
        let mu = pair.common_mean();
        let m = pair.density_bound();
        let best = eval(pair, mu);
        for i in 0..grid {
            let p = i as f64 / (grid - 1) as f64;
            let regret = best - eval(pair, p);
            let upper = m * (mu - p) * (mu - p);
            let margin = (regret + REGRET_TOL).min(upper + REGRET_TOL - regret);
            report.record(margin, || format!("pair {k}, p = {p}: regret {regret:e}, bound {upper:e}"));
        }
    }
    report
}

pub fn quadratic_bound_sweep(pairs: &[ValuationPair], grid: usize) -> CheckReport {
    quadratic_bound_sweep_with(pairs, grid, expected_gft_unchecked)
}

/// First-best from the CDF formula against direct double integration, and
/// the mean as the best price on a fine grid.
pub fn best_price_identity(pairs: &[ValuationPair]) -> CheckReport {
    let mut report = CheckReport::new("first-best identity and best price");
    for (k, pair) in pairs.iter().enumerate() {
        let (a, b) = (first_best(pair), mean_absolute_gap_direct(pair));
        let excess = max_grid_excess(pair, BEST_PRICE_GRID_STEP);
        let margin = (FIRST_BEST_TOL - (a - b).abs()).min(BEST_PRICE_TOL - excess);
        report.record(margin, || format!("pair {k}: cdf route {a}, direct {b}, grid excess {excess:e}"));
    }
    report
}

/// For the lower-bound laws, `E g(mu) - E g(p) = (mu - p)^2` for `p` in `[2/7, 1]`.
pub fn lowerbound_identity(epsilon: f64, prices: usize) -> Result<CheckReport> {
    let mut report = CheckReport::new("lower-bound quadratic identity");
    for sign in [Sign::Plus, Sign::Minus] {
        let pair = ValuationPair::symmetric(make_lowerbound_density(sign, epsilon)?);
        let mu = pair.common_mean();
        let best = expected_gft_unchecked(&pair, mu);
        for i in 0..prices {
            let p = 2.0 / 7.0 + (5.0 / 7.0) * i as f64 / (prices - 1) as f64;
            let gap = best - expected_gft_unchecked(&pair, p) - (mu - p) * (mu - p);
            report.record(REGRET_TOL - gap.abs(), || format!("{sign:?}, p = {p}: off by {gap:e}"));
        }
    }
    Ok(report)
}

/// Drives both partition learners on random contexts for `rounds` rounds
/// in dimensions 1 to 3, then checks that the terminal cells tile the cube
/// and that every split exploration cell held exactly `4^level` samples.
pub fn partition_invariants(rounds: u64, seed: u64) -> Result<CheckReport> {
    let mut report = CheckReport::new("partition invariants");
    for dim in 1..=3usize {
        let mut contexts = stream(seed, &[dim as u64], Role::Fuzz);
        let mut biave = BiAve::new(dim)?;
        let mut exbis = ExBis::new(dim, stream(seed, &[dim as u64], Role::Learner))?;
        for t in 1..=rounds {
            let x: Vec<f64> = (0..dim).map(|_| contexts.random::<f64>()).collect();
            let (v, w) = (contexts.random::<f64>(), contexts.random::<f64>());
            let view = RoundView { t, context: &x, market_value: 0.5 };
            biave.decide(&view)?;
            biave.observe(&Feedback::Full { v, w })?;
            let p = exbis.decide(&view)?.price;
            exbis.observe(&Feedback::Limited { v_ind: p <= v, w_ind: p <= w })?;
        }
        for (name, learner) in [("biave", &biave as &dyn Learner), ("exbis", &exbis as &dyn Learner)] {
            let ok = learner.tree().is_some_and(|t| t.partition_check());
            report.record(if ok { 0.0 } else { -1.0 }, || {
                format!("{name}, d = {dim}: terminal cells do not tile the cube")
            });
        }
        for ev in exbis.bisections() {
            let want = pow2_saturating(2 * ev.cell.level());
            let gap = ev.samples as f64 - want as f64;
            report.record(-gap.abs(), || {
                format!("d = {dim}: cell {} split with {} samples, expected {want}", ev.cell, ev.samples)
            });
        }
    }
    Ok(report)
}

/// Settings of [`verify_suite`].
#[derive(Clone, Copy, Debug)]
pub struct VerifyOptions {
    pub pairs: usize,
    pub grid: usize,
    pub partition_rounds: u64,
    pub seed: u64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self { pairs: 200, grid: 101, partition_rounds: 20_000, seed: 0 }
    }
}

/// Every check, with `eval` standing in for the expected gain in the
/// quadratic-bound sweep.
pub fn verify_suite_with<F>(opts: VerifyOptions, eval: F) -> Result<Vec<CheckReport>>
where
    F: Fn(&ValuationPair, f64) -> f64,
{
    let mut rng = stream(opts.seed, &[], Role::Fuzz);
    let approx = approx_suite(opts.pairs, &mut rng)?;
    let pairs = random_pairs(opts.pairs, &mut rng)?;
    let mut out: Vec<CheckReport> = approx.checks().into_iter().cloned().collect();
    out.push(quadratic_bound_sweep_with(&pairs, opts.grid, eval));
    out.push(best_price_identity(&pairs));
    out.push(lowerbound_identity(0.1, 50)?);
    out.push(partition_invariants(opts.partition_rounds, opts.seed)?);
    Ok(out)
}

pub fn verify_suite(opts: VerifyOptions) -> Result<Vec<CheckReport>> {
    verify_suite_with(opts, expected_gft_unchecked)
}
