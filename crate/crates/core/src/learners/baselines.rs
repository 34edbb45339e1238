//! Reference pricing rules.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{domain, Error, Result};

use super::{Branch, Decision, Feedback, FeedbackKind, Learner, RoundView};

/// Posts the round's market value, the best price for every round.
#[derive(Debug, Default)]
pub struct OraclePrice {
    awaiting: bool,
}

impl OraclePrice {
    pub fn new() -> Self {
        Self::default()
    }
}

impl Learner for OraclePrice {
    fn name(&self) -> &'static str {
        "oracle"
    }

    fn feedback_kind(&self) -> Option<FeedbackKind> {
        None
    }

    fn decide(&mut self, round: &RoundView<'_>) -> Result<Decision> {
        if std::mem::replace(&mut self.awaiting, true) {
            return Err(Error::Protocol("decide called twice without feedback".into()));
        }
        Ok(Decision { price: round.market_value, branch: Branch::Baseline, level: None })
    }

    fn observe(&mut self, _feedback: &Feedback) -> Result<()> {
        if !std::mem::replace(&mut self.awaiting, false) {
            return Err(Error::Protocol("feedback delivered before a price was posted".into()));
        }
        Ok(())
    }
}

/// Posts the same price every round.
#[derive(Debug)]
pub struct FixedPrice {
    price: f64,
    awaiting: bool,
}

impl FixedPrice {
    pub fn new(price: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&price) {
            return domain(format!("fixed price {price} is outside [0, 1]"));
        }
        Ok(Self { price, awaiting: false })
    }
}

impl Learner for FixedPrice {
    fn name(&self) -> &'static str {
        "fixed"
    }

    fn feedback_kind(&self) -> Option<FeedbackKind> {
        None
    }

    fn decide(&mut self, _round: &RoundView<'_>) -> Result<Decision> {
        if std::mem::replace(&mut self.awaiting, true) {
            return Err(Error::Protocol("decide called twice without feedback".into()));
        }
        Ok(Decision { price: self.price, branch: Branch::Baseline, level: None })
    }

    fn observe(&mut self, _feedback: &Feedback) -> Result<()> {
        if !std::mem::replace(&mut self.awaiting, false) {
            return Err(Error::Protocol("feedback delivered before a price was posted".into()));
        }
        Ok(())
    }
}

/// Posts a fresh uniform price every round.
#[derive(Debug)]
pub struct UniformPrice {
    rng: ChaCha8Rng,
    awaiting: bool,
}

impl UniformPrice {
    pub fn new(rng: ChaCha8Rng) -> Self {
        Self { rng, awaiting: false }
    }
}

impl Learner for UniformPrice {
    fn name(&self) -> &'static str {
        "uniform"
    }

    fn feedback_kind(&self) -> Option<FeedbackKind> {
        None
    }

    fn decide(&mut self, _round: &RoundView<'_>) -> Result<Decision> {
        if std::mem::replace(&mut self.awaiting, true) {
            return Err(Error::Protocol("decide called twice without feedback".into()));
        }
        Ok(Decision { price: self.rng.random::<f64>(), branch: Branch::Explore, level: None })
    }

    fn observe(&mut self, _feedback: &Feedback) -> Result<()> {
        if !std::mem::replace(&mut self.awaiting, false) {
            return Err(Error::Protocol("feedback delivered before a price was posted".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixed_price_domain() {
        assert!(FixedPrice::new(-0.01).is_err());
        assert!(FixedPrice::new(1.5).is_err());
        assert!(FixedPrice::new(0.0).is_ok());
    }

    #[test]
    fn oracle_posts_market_value() {
        let mut o = OraclePrice::new();
        let d = o.decide(&RoundView { t: 1, context: &[0.2], market_value: 0.37 }).unwrap();
        assert_eq!(d.price, 0.37);
        o.observe(&Feedback::Limited { v_ind: true, w_ind: true }).unwrap();
    }
}
