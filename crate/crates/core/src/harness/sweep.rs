//! Horizon-by-seed experiment grids.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instances::InstanceSpec;
use crate::learners::{BiAve, ExBis, FeedbackKind, FixedPrice, Learner, OraclePrice, UniformPrice};
use crate::rng::{derive_key, stream, Role};

use super::episode::{run_episode_with, EpisodeFault};
use super::fit::{fit_slope, median, FitOutcome, BOOTSTRAP_REPLICATES};

/// Log-spaced checkpoints stored per episode, besides the horizon grid.
pub const LOG_CHECKPOINTS: usize = 64;

/// Which pricing rule to run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "lowercase")]
pub enum AlgoSpec {
    Biave,
    Exbis,
    Oracle,
    Fixed { price: f64 },
    Uniform,
}

impl AlgoSpec {
    pub fn name(&self) -> &'static str {
        match self {
            AlgoSpec::Biave => "biave",
            AlgoSpec::Exbis => "exbis",
            AlgoSpec::Oracle => "oracle",
            AlgoSpec::Fixed { .. } => "fixed",
            AlgoSpec::Uniform => "uniform",
        }
    }

    /// Feedback model the rule insists on, if any.
    pub fn required_feedback(&self) -> Option<FeedbackKind> {
        match self {
            AlgoSpec::Biave => Some(FeedbackKind::Full),
            AlgoSpec::Exbis => Some(FeedbackKind::Limited),
            _ => None,
        }
    }

    /// Exponent of the known regret rate in dimension `dim`.
    pub fn theory_slope(&self, dim: usize) -> Option<f64> {
        let d = dim as f64;
        match self {
            AlgoSpec::Biave => Some(d / (d + 2.0)),
            AlgoSpec::Exbis => Some((d + 2.0) / (d + 4.0)),
            _ => None,
        }
    }

    /// A fresh learner; `seed` keys its private random stream.
    pub fn build(&self, dim: usize, master: u64, path: &[u64]) -> Result<Box<dyn Learner>> {
        let rng = stream(master, path, Role::Learner);
        Ok(match *self {
            AlgoSpec::Biave => Box::new(BiAve::new(dim)?),
            AlgoSpec::Exbis => Box::new(ExBis::new(dim, rng)?),
            AlgoSpec::Oracle => Box::new(OraclePrice::new()),
            AlgoSpec::Fixed { price } => Box::new(FixedPrice::new(price)?),
            AlgoSpec::Uniform => Box::new(UniformPrice::new(rng)),
        })
    }
}

impl fmt::Display for AlgoSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub algo: AlgoSpec,
    pub feedback: FeedbackKind,
    pub dim: usize,
    pub horizons: Vec<u64>,
    pub seeds: u64,
    pub instance: InstanceSpec,
    pub master_seed: u64,
    pub workers: usize,
}

impl SweepConfig {
    pub fn check(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if let Some(kind) = self.algo.required_feedback() {
            if kind != self.feedback {
                return bad(format!("{} requires {kind} feedback", self.algo));
            }
        }
        if self.dim == 0 {
            return bad("dim must be at least 1".into());
        }
        if self.horizons.is_empty() {
            return bad("horizons must not be empty".into());
        }
        if self.horizons.windows(2).any(|w| w[0] >= w[1]) {
            return bad(format!("horizons must be strictly increasing, got {:?}", self.horizons));
        }
        if self.horizons[0] == 0 {
            return bad("horizons must be positive".into());
        }
        if self.seeds == 0 {
            return bad("seeds must be at least 1".into());
        }
        if self.workers == 0 {
            return bad("workers must be at least 1".into());
        }
        if let AlgoSpec::Fixed { price } = self.algo {
            if !(0.0..=1.0).contains(&price) {
                return bad(format!("fixed price {price} is outside [0, 1]"));
            }
        }
        Ok(())
    }
}

/// Cumulative regret of one episode at its checkpoints.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub horizon: u64,
    pub seed: u64,
    pub effective_horizon: u64,
    pub checkpoints: Vec<u64>,
    pub cum_regret_analytic: Vec<f64>,
    pub cum_regret_realized: Vec<f64>,
}

impl Trajectory {
    pub fn final_analytic(&self) -> f64 {
        self.cum_regret_analytic.last().copied().unwrap_or(0.0)
    }
}

/// Regret statistics across seeds at one horizon.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HorizonStats {
    pub horizon: u64,
    /// Rounds actually played (equal for every seed).
    pub effective_horizon: u64,
    pub mean_regret: f64,
    pub std_error: f64,
    pub median_regret: f64,
    pub max_regret: f64,
    pub mean_realized_regret: f64,
    /// `mean_regret / T^s` with `s` the known rate exponent, when there is one.
    pub empirical_constant: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub config: SweepConfig,
    pub theory_slope: Option<f64>,
    pub horizons: Vec<HorizonStats>,
    pub fit: FitOutcome,
    #[serde(skip)]
    pub trajectories: Vec<Trajectory>,
}

#[derive(Debug, thiserror::Error)]
pub enum SweepError {
    #[error(transparent)]
    Setup(#[from] Error),
    #[error("horizon {horizon}, seed {seed}: {fault}")]
    Episode { horizon: u64, seed: u64, fault: Box<EpisodeFault> },
}

/// Checkpoint rounds for an episode of `rounds` rounds: 64 log-spaced
/// points, the grid horizons it reaches, and its last round.
pub fn checkpoints(rounds: u64, grid: &[u64]) -> Vec<u64> {
    let ln = (rounds as f64).ln();
    let mut out: Vec<u64> = (1..=LOG_CHECKPOINTS)
        .map(|k| ((k as f64 * ln / LOG_CHECKPOINTS as f64).exp().round() as u64).clamp(1, rounds))
        .chain(grid.iter().copied().filter(|&h| h <= rounds))
        .chain(std::iter::once(rounds))
        .collect();
    out.sort_unstable();
    out.dedup();
    out
}

/// Runs one (horizon, seed) cell of a sweep.
pub fn run_cell(config: &SweepConfig, horizon: u64, seed: u64) -> Result<Trajectory, SweepError> {
    let path = [horizon, seed];
    let episode_err = |fault| SweepError::Episode { horizon, seed, fault: Box::new(fault) };
    let instance = config.instance.build(horizon, config.dim, derive_key(config.master_seed, &path))?;
    if let Some(v) = instance.validate().first() {
        return Err(Error::Invariant(format!("instance for horizon {horizon}, seed {seed} is invalid: {v}")).into());
    }
    let mut learner = config.algo.build(config.dim, config.master_seed, &path)?;
    let mut valuations = stream(config.master_seed, &path, Role::Valuations);

    let rounds = instance.effective_horizon();
    let marks = checkpoints(rounds, &config.horizons);
    let mut analytic = Vec::with_capacity(marks.len());
    let mut realized = Vec::with_capacity(marks.len());
    let (mut cum_a, mut cum_r) = (0.0, 0.0);
    let mut next = 0;
    run_episode_with(learner.as_mut(), &instance, config.feedback, &mut valuations, |r| {
        cum_a += r.instantaneous_regret;
        cum_r += r.realized_regret;
        if marks[next] == r.t {
            analytic.push(cum_a);
            realized.push(cum_r);
            next += 1;
        }
    })
    .map_err(episode_err)?;
    Ok(Trajectory {
        horizon,
        seed,
        effective_horizon: rounds,
        checkpoints: marks,
        cum_regret_analytic: analytic,
        cum_regret_realized: realized,
    })
}

/// Runs every (horizon, seed) episode on `config.workers` threads and
/// aggregates in grid order, so the result does not depend on scheduling.
pub fn sweep(config: &SweepConfig) -> Result<ExperimentResult, SweepError> {
    config.check()?;
    let jobs: Vec<(u64, u64)> = config.horizons.iter().flat_map(|&h| (0..config.seeds).map(move |s| (h, s))).collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot start {} workers: {e}", config.workers)))?;
    let outcomes: Vec<Result<Trajectory, SweepError>> =
        pool.install(|| jobs.par_iter().map(|&(h, s)| run_cell(config, h, s)).collect());
    let trajectories = outcomes.into_iter().collect::<Result<Vec<_>, _>>()?;
    Ok(aggregate(config.clone(), trajectories))
}

/// Summarizes trajectories listed horizon-major, seed-minor.
pub fn aggregate(config: SweepConfig, trajectories: Vec<Trajectory>) -> ExperimentResult {
    let theory_slope = config.algo.theory_slope(config.dim);
    let n = config.seeds as usize;
    let mut horizons = Vec::new();
    let mut per_seed = Vec::new();
    let mut effective = Vec::new();
    for group in trajectories.chunks(n) {
        let finals: Vec<f64> = group.iter().map(Trajectory::final_analytic).collect();
        let realized: Vec<f64> = group.iter().map(|t| t.cum_regret_realized.last().copied().unwrap_or(0.0)).collect();
        let mean = finals.iter().sum::<f64>() / n as f64;
        let var = if n > 1 { finals.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64 } else { 0.0 };
        let t_eff = group[0].effective_horizon;
        horizons.push(HorizonStats {
            horizon: group[0].horizon,
            effective_horizon: t_eff,
            mean_regret: mean,
            std_error: (var / n as f64).sqrt(),
            median_regret: median(&finals),
            max_regret: finals.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            mean_realized_regret: realized.iter().sum::<f64>() / n as f64,
            empirical_constant: theory_slope.map(|s| mean / (t_eff as f64).powf(s)),
        });
        effective.push(t_eff);
        per_seed.push(finals);
    }
    let mut rng = stream(config.master_seed, &[], Role::Bootstrap);
    let fit = fit_slope(&effective, &per_seed, BOOTSTRAP_REPLICATES, &mut rng);
    ExperimentResult { config, theory_slope, horizons, fit, trajectories }
}
