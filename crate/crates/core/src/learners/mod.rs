//! Online pricing learners driven by the brokerage protocol.
//!
//! Each round the harness calls [`Learner::decide`] with the context, posts
//! the returned price, then hands the feedback to [`Learner::observe`].

mod baselines;
mod biave;
mod exbis;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use baselines::{FixedPrice, OraclePrice, UniformPrice};
pub use biave::BiAve;
pub use exbis::ExBis;

use crate::dyadic::{CellTree, DyadicCell};
use crate::error::Result;

/// What the learner gets to see after posting a price.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeedbackKind {
    /// Both valuations are revealed.
    Full,
    /// Only `1{P <= V}` and `1{P <= W}` are revealed.
    Limited,
}

impl fmt::Display for FeedbackKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FeedbackKind::Full => "full",
            FeedbackKind::Limited => "limited",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Feedback {
    Full { v: f64, w: f64 },
    Limited { v_ind: bool, w_ind: bool },
}

impl Feedback {
    /// Feedback of the given kind for price `p` and valuations `(v, w)`.
    pub fn reveal(kind: FeedbackKind, p: f64, v: f64, w: f64) -> Self {
        match kind {
            FeedbackKind::Full => Feedback::Full { v, w },
            FeedbackKind::Limited => Feedback::Limited { v_ind: p <= v, w_ind: p <= w },
        }
    }

    pub fn kind(&self) -> FeedbackKind {
        match self {
            Feedback::Full { .. } => FeedbackKind::Full,
            Feedback::Limited { .. } => FeedbackKind::Limited,
        }
    }
}

/// What the environment shows the learner at the start of a round.
///
/// `market_value` is the round's `mu_t`; only [`OraclePrice`] reads it.
#[derive(Clone, Copy, Debug)]
pub struct RoundView<'a> {
    pub t: u64,
    pub context: &'a [f64],
    pub market_value: f64,
}

/// Rule that produced a posted price.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Branch {
    /// First round, before any data.
    Initial,
    /// Average of the observations attached to the terminal cell.
    CellAverage,
    /// Average frozen when the parent cell was bisected.
    ParentAverage,
    /// No data anywhere: the midpoint prior.
    Fallback,
    /// Uniformly random exploration price.
    Explore,
    /// A baseline's fixed rule.
    Baseline,
}

impl Branch {
    pub fn label(self) -> &'static str {
        match self {
            Branch::Initial => "initial",
            Branch::CellAverage => "cell-average",
            Branch::ParentAverage => "parent-average",
            Branch::Fallback => "fallback",
            Branch::Explore => "explore",
            Branch::Baseline => "baseline",
        }
    }

    /// Whether an exploit/explore learner counts the round as exploitation.
    pub fn is_exploit(self) -> bool {
        matches!(self, Branch::CellAverage | Branch::ParentAverage | Branch::Fallback)
    }
}

impl fmt::Display for Branch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// A posted price and how it was chosen.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Decision {
    pub price: f64,
    pub branch: Branch,
    /// Level of the terminal cell used, for partition-based learners.
    pub level: Option<u32>,
}

/// A bisection performed by a learner.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BisectionEvent {
    pub t: u64,
    pub cell: DyadicCell,
    /// Exploration samples attached to the cell when it was split (limited feedback only).
    pub samples: u64,
}

pub trait Learner: Send {
    fn name(&self) -> &'static str;

    /// Required feedback model, or `None` if the learner accepts either.
    fn feedback_kind(&self) -> Option<FeedbackKind>;

    fn decide(&mut self, round: &RoundView<'_>) -> Result<Decision>;

    fn observe(&mut self, feedback: &Feedback) -> Result<()>;

    /// The learner's partition, if it keeps one.
    fn tree(&self) -> Option<&CellTree> {
        None
    }

    /// Every bisection so far, in order.
    fn bisections(&self) -> &[BisectionEvent] {
        &[]
    }
}
