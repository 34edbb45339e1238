//! Episodes, sweeps, slope fits, persistence and verification suites.

mod episode;
pub mod fit;
pub mod output;
mod sweep;
pub mod verify;

pub use episode::{
    run_episode, run_episode_with, EpisodeFault, EpisodeTotals, RoundRecord, TranscriptLine, TRANSCRIPT_TAIL,
};
pub use fit::{fit_slope, ols, FitOutcome, LineFit, SlopeFit};
pub use sweep::{
    aggregate, checkpoints, run_cell, sweep, AlgoSpec, ExperimentResult, HorizonStats, SweepConfig, SweepError,
    Trajectory, LOG_CHECKPOINTS,
};
pub use verify::{approx_suite, ApproxReport, CheckReport};
