//! Bisect-and-average learner for full feedback.
//!
//! Each terminal cell averages the valuations seen while it was terminal.
//! While a cell has fewer observations than its parent had when it was
//! split, the parent's frozen average is posted instead. A level-`i` cell is
//! split once it has seen `4^i` contexts (`sqrt(n) >= 2^i`).

use crate::dyadic::{pow2_saturating, CellTree, NodeId};
use crate::error::{Error, Result};

use super::{BisectionEvent, Branch, Decision, Feedback, FeedbackKind, Learner, RoundView};

#[derive(Debug)]
struct Pending {
    node: NodeId,
    context: Vec<f64>,
    bisect: bool,
}

#[derive(Debug)]
pub struct BiAve {
    tree: CellTree,
    t: u64,
    pending: Option<Pending>,
    log: Vec<BisectionEvent>,
}

impl BiAve {
    pub fn new(dim: usize) -> Result<Self> {
        Ok(Self { tree: CellTree::new(dim)?, t: 0, pending: None, log: Vec::new() })
    }

    pub fn rounds(&self) -> u64 {
        self.t
    }
}

impl Learner for BiAve {
    fn name(&self) -> &'static str {
        "biave"
    }

    fn feedback_kind(&self) -> Option<FeedbackKind> {
        Some(FeedbackKind::Full)
    }

    fn decide(&mut self, round: &RoundView<'_>) -> Result<Decision> {
        if self.pending.is_some() {
            return Err(Error::Protocol("decide called twice without feedback".into()));
        }
        let node = self.tree.locate(round.context)?;
        self.t += 1;
        let level = self.tree.cell(node).level();

        if self.t == 1 {
            self.pending = Some(Pending { node, context: round.context.to_vec(), bisect: false });
            return Ok(Decision { price: 0.5, branch: Branch::Initial, level: Some(level) });
        }

        let stats = self.tree.stats(node);
        let n = stats.count;
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

        // sqrt(n) >= 2^i  <=>  n >= 4^i, with n counted before this round.
        let bisect = n >= pow2_saturating(2 * level);
        self.pending = Some(Pending { node, context: round.context.to_vec(), bisect });
        Ok(Decision { price: price.clamp(0.0, 1.0), branch, level: Some(level) })
    }

    fn observe(&mut self, feedback: &Feedback) -> Result<()> {
        let &Feedback::Full { v, w } = feedback else {
            return Err(Error::Protocol("biave requires full feedback".into()));
        };
        let pending = self
            .pending
            .take()
            .ok_or_else(|| Error::Protocol("feedback delivered before a price was posted".into()))?;

        let stats = self.tree.stats_mut(pending.node);
        stats.count += 1;
        stats.sample_count += 1;
        stats.valuation_sum += v + w;

        if pending.bisect {
            // The snapshot taken here covers every round up to and including
            // the bisection round; that round's context also seeds its child.
            self.tree.bisect(pending.node)?;
            self.log.push(BisectionEvent {
                t: self.t,
                cell: self.tree.cell(pending.node).clone(),
                samples: self.tree.stats(pending.node).sample_count,
            });
            let child = self.tree.locate(&pending.context)?;
            let stats = self.tree.stats_mut(child);
            stats.count += 1;
            stats.sample_count += 1;
            stats.valuation_sum += v + w;
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

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dyadic::DyadicCell;

    fn step(l: &mut BiAve, x: f64, v: f64, w: f64) -> Decision {
        let ctx = [x];
        let d = l.decide(&RoundView { t: l.rounds() + 1, context: &ctx, market_value: 0.5 }).unwrap();
        l.observe(&Feedback::Full { v, w }).unwrap();
        d
    }

    #[test]
    fn first_price_is_one_half() {
        let mut l = BiAve::new(1).unwrap();
        let d = step(&mut l, 0.3, 0.4, 0.6);
        assert_eq!(d.price, 0.5);
        assert_eq!(d.branch, Branch::Initial);
    }

    #[test]
    fn second_price_averages_first_round() {
        let mut l = BiAve::new(1).unwrap();
        step(&mut l, 0.3, 0.4, 0.6);
        let d = step(&mut l, 0.3, 0.1, 0.1);
        assert_eq!(d.price, 0.5);
        assert_eq!(d.branch, Branch::CellAverage);
        // The root had one context before round 2, so it splits there.
        assert_eq!(l.bisections().len(), 1);
        assert_eq!(l.bisections()[0].t, 2);
        assert!(l.bisections()[0].cell.is_root());
    }

    #[test]
    fn level_one_cells_split_after_four_contexts() {
        let mut l = BiAve::new(1).unwrap();
        for _ in 0..2 {
            step(&mut l, 0.3, 0.5, 0.5);
        }
        // Child [0, 1/2) now holds round 2's context; it splits in the round
        // where its count before the round is 4.
        let mut split_round = None;
        for _ in 0..10 {
            step(&mut l, 0.3, 0.5, 0.5);
            if l.bisections().len() == 2 && split_round.is_none() {
                split_round = Some(l.rounds());
            }
        }
        let ev = &l.bisections()[1];
        assert_eq!(ev.cell, DyadicCell::new(1, vec![0]).unwrap());
        // Count reaches 4 after rounds 2..=5, so the check fires in round 6.
        assert_eq!(split_round, Some(6));
        assert_eq!(ev.samples, 5);
    }

    #[test]
    fn fresh_child_uses_parent_average() {
        let mut l = BiAve::new(1).unwrap();
        step(&mut l, 0.3, 0.2, 0.4);
        step(&mut l, 0.3, 0.6, 0.8);
        // Upper child [1/2, 1) is empty; parent snapshot holds both rounds.
        let d = step(&mut l, 0.9, 0.0, 0.0);
        assert_eq!(d.branch, Branch::ParentAverage);
        assert!((d.price - 0.5).abs() < 1e-15);
    }

    #[test]
    fn limited_feedback_is_rejected() {
        let mut l = BiAve::new(1).unwrap();
        l.decide(&RoundView { t: 1, context: &[0.1], market_value: 0.5 }).unwrap();
        assert!(matches!(l.observe(&Feedback::Limited { v_ind: true, w_ind: false }), Err(Error::Protocol(_))));
    }

    #[test]
    fn protocol_order_is_enforced() {
        let mut l = BiAve::new(1).unwrap();
        assert!(l.observe(&Feedback::Full { v: 0.1, w: 0.2 }).is_err());
        l.decide(&RoundView { t: 1, context: &[0.1], market_value: 0.5 }).unwrap();
        assert!(l.decide(&RoundView { t: 1, context: &[0.1], market_value: 0.5 }).is_err());
    }
}
