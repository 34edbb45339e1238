//! One run of the brokerage protocol.

use std::collections::VecDeque;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gft::{expected_gft_unchecked, gain, REGRET_TOL};
use crate::instances::BrokerageInstance;
use crate::learners::{Branch, Feedback, FeedbackKind, Learner, RoundView};
use crate::rng::{stream, Role};

/// Number of trailing rounds kept for the diagnostic transcript of a fault.
pub const TRANSCRIPT_TAIL: usize = 10_000;

/// Everything that happened in one round.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub t: u64,
    pub context: Vec<f64>,
    pub price: f64,
    pub branch: Branch,
    pub level: Option<u32>,
    pub v: f64,
    pub w: f64,
    pub feedback: Feedback,
    pub realized_gft: f64,
    /// `E g(P_t)` under the round's laws.
    pub expected_gft: f64,
    /// `E g(mu_t) - E g(P_t)`.
    pub instantaneous_regret: f64,
    /// `g(mu_t, V_t, W_t) - g(P_t, V_t, W_t)`.
    pub realized_regret: f64,
}

/// Compact line of a diagnostic transcript.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TranscriptLine {
    pub t: u64,
    pub level: Option<u32>,
    pub branch: Branch,
    pub price: f64,
}

/// An episode that had to stop, with the rounds leading up to it.
#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeFault {
    pub t: u64,
    pub error: Error,
    pub transcript: Vec<TranscriptLine>,
}

impl std::fmt::Display for EpisodeFault {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "episode stopped at round {}: {}", self.t, self.error)
    }
}

impl std::error::Error for EpisodeFault {}

/// Cumulative totals of a finished episode.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EpisodeTotals {
    pub rounds: u64,
    pub cum_regret_analytic: f64,
    pub cum_regret_realized: f64,
    pub cum_gft_realized: f64,
}

/// Runs every round of `instance`, handing each record to `on_round`.
///
/// Valuations are drawn from `valuations`; the learner owns its own
/// randomness. Feedback is revealed according to `feedback`, which must
/// match what the learner expects.
pub fn run_episode_with<L, F>(
    learner: &mut L,
    instance: &BrokerageInstance,
    feedback: FeedbackKind,
    valuations: &mut ChaCha8Rng,
    mut on_round: F,
) -> Result<EpisodeTotals, EpisodeFault>
where
    L: Learner + ?Sized,
    F: FnMut(&RoundRecord),
{
    let mut tail: VecDeque<TranscriptLine> = VecDeque::new();
    let fault = |t: u64, error: Error, tail: &VecDeque<TranscriptLine>| EpisodeFault {
        t,
        error,
        transcript: tail.iter().copied().collect(),
    };

    if let Some(kind) = learner.feedback_kind() {
        if kind != feedback {
            let msg = format!("{} requires {kind} feedback", learner.name());
            return Err(fault(0, Error::Protocol(msg), &tail));
        }
    }

    let mut totals = EpisodeTotals::default();
    for t in 1..=instance.effective_horizon() {
        let context = instance.context(t);
        let mu = instance.market_value(t);
        let priced = instance.pair(t);
        let decision = learner.decide(&RoundView { t, context, market_value: mu }).map_err(|e| fault(t, e, &tail))?;
        let p = decision.price;
        if tail.len() == TRANSCRIPT_TAIL {
            tail.pop_front();
        }
        tail.push_back(TranscriptLine { t, level: decision.level, branch: decision.branch, price: p });
        if !(0.0..=1.0).contains(&p) {
            return Err(fault(t, Error::LearnerFault { t, price: p }, &tail));
        }

        let (v, w) = priced.pair.sample(valuations);
        let expected = expected_gft_unchecked(&priced.pair, p);
        let regret = priced.best_gft - expected;
        let bound = priced.pair.density_bound() * (mu - p) * (mu - p);
        if !(regret >= -REGRET_TOL && regret <= bound + REGRET_TOL) {
            let msg = format!("round {t}: regret {regret:e} at price {p} outside [0, {bound:e}]");
            return Err(fault(t, Error::Invariant(msg), &tail));
        }
        let realized = gain(p, v, w);
        let revealed = Feedback::reveal(feedback, p, v, w);
        let record = RoundRecord {
            t,
            context: context.to_vec(),
            price: p,
            branch: decision.branch,
            level: decision.level,
            v,
            w,
            feedback: revealed,
            realized_gft: realized,
            expected_gft: expected,
            instantaneous_regret: regret,
            realized_regret: gain(mu, v, w) - realized,
        };
        on_round(&record);
        learner.observe(&revealed).map_err(|e| fault(t, e, &tail))?;

        totals.rounds = t;
        totals.cum_regret_analytic += regret;
        totals.cum_regret_realized += record.realized_regret;
        totals.cum_gft_realized += realized;
    }
    Ok(totals)
}

/// Runs an episode with valuations drawn from the stream keyed by `seed`
/// and returns every round.
pub fn run_episode<L: Learner + ?Sized>(
    learner: &mut L,
    instance: &BrokerageInstance,
    feedback: FeedbackKind,
    seed: u64,
) -> Result<Vec<RoundRecord>, EpisodeFault> {
    let mut rng = stream(seed, &[], Role::Valuations);
    let mut records = Vec::with_capacity(instance.effective_horizon() as usize);
    run_episode_with(learner, instance, feedback, &mut rng, |r| records.push(r.clone()))?;
    Ok(records)
}
