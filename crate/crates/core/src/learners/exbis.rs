//! Exploit/explore/bisect learner for limited feedback.
//!
//! A level-`i` terminal cell first spends `16^i` rounds exploiting: it posts
//! half the average of the indicator pairs collected in exploration rounds
//! whose contexts lie in the cell (or the parent's frozen average while the
//! cell has fewer such rounds than the parent had). After that every round
//! in the cell explores with a uniform price, and the cell is split in the
//! exploration round that brings its exploration samples to `4^i`.
//!
//! For a uniform price `U`, `P(U <= V | V) = V`, so each indicator is an
//! unbiased draw of the market value.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::dyadic::{pow2_saturating, CellTree, NodeId};
use crate::error::{Error, Result};

use super::{BisectionEvent, Branch, Decision, Feedback, FeedbackKind, Learner, RoundView};

#[derive(Debug)]
struct Pending {
    node: NodeId,
    context: Vec<f64>,
    explore: bool,
    bisect: bool,
}

#[derive(Debug)]
pub struct ExBis {
    tree: CellTree,
    rng: ChaCha8Rng,
    t: u64,
    pending: Option<Pending>,
    log: Vec<BisectionEvent>,
}

impl ExBis {
    /// `rng` drives the exploration prices only and must be independent of valuations.
    pub fn new(dim: usize, rng: ChaCha8Rng) -> Result<Self> {
        Ok(Self { tree: CellTree::new(dim)?, rng, t: 0, pending: None, log: Vec::new() })
    }

    pub fn rounds(&self) -> u64 {
        self.t
    }
}

impl Learner for ExBis {
    fn name(&self) -> &'static str {
        "exbis"
    }

    fn feedback_kind(&self) -> Option<FeedbackKind> {
        Some(FeedbackKind::Limited)
    }

    fn decide(&mut self, round: &RoundView<'_>) -> Result<Decision> {
        if self.pending.is_some() {
            return Err(Error::Protocol("decide called twice without feedback".into()));
        }
        let node = self.tree.locate(round.context)?;
        self.t += 1;
        let level = self.tree.cell(node).level();
        let context = round.context.to_vec();

        if self.t == 1 {
            // Uniform price, and the root is split right after this round.
            let price = self.rng.random::<f64>();
            self.pending = Some(Pending { node, context, explore: true, bisect: true });
            return Ok(Decision { price, branch: Branch::Explore, level: Some(level) });
        }

        let stats = self.tree.stats(node);
        let exploits = stats.exploit_count;
        if exploits < pow2_saturating(4 * level) {
            let n = stats.sample_count;
            let sum = stats.valuation_sum;
            let (n_parent, sum_parent) =
                if level == 0 { (n, sum) } else { (stats.frozen_parent_count, stats.frozen_parent_sum) };
            let (price, branch) = if n >= n_parent {
                if n == 0 {
                    (0.5, Branch::Fallback)
                } else {
                    (sum / (2.0 * n as f64), Branch::CellAverage)
                }
            } else {
                (sum_parent / (2.0 * n_parent as f64), Branch::ParentAverage)
            };
            self.pending = Some(Pending { node, context, explore: false, bisect: false });
            Ok(Decision { price: price.clamp(0.0, 1.0), branch, level: Some(level) })
        } else {
            let price = self.rng.random::<f64>();
            let bisect = stats.sample_count + 1 >= pow2_saturating(2 * level);
            self.pending = Some(Pending { node, context, explore: true, bisect });
            Ok(Decision { price, branch: Branch::Explore, level: Some(level) })
        }
    }

    fn observe(&mut self, feedback: &Feedback) -> Result<()> {
        let &Feedback::Limited { v_ind, w_ind } = feedback else {
            return Err(Error::Protocol("exbis requires limited feedback".into()));
        };
        let pending = self
            .pending
            .take()
            .ok_or_else(|| Error::Protocol("feedback delivered before a price was posted".into()))?;

        let stats = self.tree.stats_mut(pending.node);
        stats.count += 1;
        if !pending.explore {
            stats.exploit_count += 1;
            return Ok(());
        }
        stats.explore_count += 1;
        let value = f64::from(u8::from(v_ind) + u8::from(w_ind));
        self.tree.push_sample(pending.node, pending.context, value)?;
        if pending.bisect {
            let samples = self.tree.stats(pending.node).sample_count;
            self.tree.bisect(pending.node)?;
            self.log.push(BisectionEvent { t: self.t, cell: self.tree.cell(pending.node).clone(), samples });
        }
        Ok(())
    }

    fn tree(&self) -> Option<&CellTree> {
        Some(&self.tree)
    }

    fn bisections(&self) -> &[BisectionEvent] {
        &self.log
    }
}
