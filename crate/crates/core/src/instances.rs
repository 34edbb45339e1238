//! Brokerage environments and validation against the model assumptions.
//!
//! An instance fixes, for every round, a context in `[0,1)^d`, a market value
//! and a pair of valuation laws sharing that value as their mean. Market
//! values must be 1-Lipschitz in the context under the sup-norm.
//!
//! Two families are provided: lattice instances, whose contexts sit on an
//! equispaced grid with market values `1/2 +/- eps/196`, and smooth random
//! instances for sanity runs.

use std::collections::HashMap;
use std::fmt;

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::distributions::{
    lowerbound_mean, make_lowerbound_density, BoundedDensity, Sign, ValuationPair, DENSITY_TOL,
};
use crate::error::{domain, Error, Result};
use crate::gft::expected_gft_unchecked;
use crate::rng::{stream, Role};

/// Lipschitz constant of the market values, normalized to one.
pub const LIPSCHITZ: f64 = 1.0;
/// Slack on the Lipschitz and mean checks.
pub const VALIDATION_TOL: f64 = 1e-12;
/// Up to this many distinct points the Lipschitz check compares every pair.
pub const EXHAUSTIVE_LIMIT: usize = 4096;
/// Number of random point pairs compared beyond [`EXHAUSTIVE_LIMIT`].
pub const SAMPLED_PAIRS: usize = 100_000;
const MAX_REPORTED_ROUNDS: usize = 8;

/// A round's valuation law with its cached optimum.
#[derive(Clone, Debug, PartialEq)]
pub struct PricedPair {
    pub pair: ValuationPair,
    /// `E g(mu)`.
    pub best_gft: f64,
}

impl PricedPair {
    pub fn new(pair: ValuationPair) -> Self {
        let best_gft = expected_gft_unchecked(&pair, pair.common_mean());
        Self { pair, best_gft }
    }
}

/// Shape of a lattice instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatticeLayout {
    /// Points per axis, `K`.
    pub side: u64,
    /// Consecutive rounds per lattice point, `n`.
    pub repeats: u64,
    pub epsilon: f64,
    /// One sign per block, in block order.
    pub signs: Vec<Sign>,
}

impl LatticeLayout {
    pub fn blocks(&self) -> u64 {
        self.signs.len() as u64
    }
}

#[derive(Clone, Debug)]
pub struct BrokerageInstance {
    dim: usize,
    horizon: u64,
    contexts: Vec<f64>,
    market_values: Vec<f64>,
    pairs: Vec<PricedPair>,
    pair_of_round: Vec<u32>,
    lattice: Option<LatticeLayout>,
}

impl BrokerageInstance {
    /// Assembles an instance from flat row-major contexts (`d` per round),
    /// market values, a table of pairs and the pair index of each round.
    ///
    /// Only shapes are checked here; the model assumptions are checked by
    /// [`BrokerageInstance::validate`].
    pub fn from_parts(
        dim: usize,
        horizon: u64,
        contexts: Vec<f64>,
        market_values: Vec<f64>,
        pairs: Vec<ValuationPair>,
        pair_of_round: Vec<u32>,
    ) -> Result<Self> {
        if dim == 0 {
            return domain("dimension must be at least 1");
        }
        let rounds = market_values.len();
        if rounds == 0 {
            return domain("an instance needs at least one round");
        }
        if contexts.len() != rounds * dim || pair_of_round.len() != rounds {
            return domain(format!(
                "{} context coordinates and {} pair indices for {rounds} rounds in dimension {dim}",
                contexts.len(),
                pair_of_round.len()
            ));
        }
        if horizon < rounds as u64 {
            return domain(format!("horizon {horizon} is shorter than the {rounds} rounds supplied"));
        }
        if let Some(bad) = pair_of_round.iter().find(|&&k| k as usize >= pairs.len()) {
            return domain(format!("pair index {bad} out of range for {} pairs", pairs.len()));
        }
        Ok(Self {
            dim,
            horizon,
            contexts,
            market_values,
            pairs: pairs.into_iter().map(PricedPair::new).collect(),
            pair_of_round,
            lattice: None,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// The horizon that was asked for.
    pub fn horizon(&self) -> u64 {
        self.horizon
    }

    /// The number of rounds actually played.
    pub fn effective_horizon(&self) -> u64 {
        self.market_values.len() as u64
    }

    pub fn lipschitz_constant(&self) -> f64 {
        LIPSCHITZ
    }

    /// Context of round `t` (1-based).
    pub fn context(&self, t: u64) -> &[f64] {
        let i = (t - 1) as usize * self.dim;
        &self.contexts[i..i + self.dim]
    }

    pub fn market_value(&self, t: u64) -> f64 {
        self.market_values[(t - 1) as usize]
    }

    pub fn pair(&self, t: u64) -> &PricedPair {
        &self.pairs[self.pair_of_round[(t - 1) as usize] as usize]
    }

    pub fn contexts(&self) -> &[f64] {
        &self.contexts
    }

    pub fn market_values(&self) -> &[f64] {
        &self.market_values
    }

    pub fn pairs(&self) -> impl Iterator<Item = &ValuationPair> {
        self.pairs.iter().map(|p| &p.pair)
    }

    pub fn pair_of_round(&self) -> &[u32] {
        &self.pair_of_round
    }

    /// Largest density bound over all rounds.
    pub fn density_bound(&self) -> f64 {
        self.pairs.iter().map(|p| p.pair.density_bound()).fold(0.0, f64::max)
    }

    pub fn lattice(&self) -> Option<&LatticeLayout> {
        self.lattice.as_ref()
    }

    /// Checks the three model assumptions; an empty list means all hold.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        self.check_contexts(&mut out);
        self.check_lipschitz(&mut out);
        self.check_pairs(&mut out);
        out
    }

    fn check_contexts(&self, out: &mut Vec<Violation>) {
        let mut rounds = Vec::new();
        let mut margin: f64 = 0.0;
        for t in 1..=self.effective_horizon() {
            let worst = self
                .context(t)
                .iter()
                .map(|&x| {
                    if x.is_nan() {
                        f64::INFINITY
                    } else if x < 0.0 {
                        -x
                    } else if x >= 1.0 {
                        x - 1.0 + f64::EPSILON
                    } else {
                        0.0
                    }
                })
                .fold(0.0, f64::max);
            if worst > 0.0 {
                rounds.push(t);
                margin = margin.max(worst);
            }
        }
        if !rounds.is_empty() {
            out.push(Violation::new(ModelItem::ContextDomain, rounds, margin));
        }
    }

    fn check_lipschitz(&self, out: &mut Vec<Violation>) {
        // Distinct (context, market value) points, each with its first round.
        let mut seen = HashMap::new();
        let mut points: Vec<u64> = Vec::new();
        for t in 1..=self.effective_horizon() {
            let key: Vec<u64> =
                self.context(t).iter().chain(std::iter::once(&self.market_value(t))).map(|x| x.to_bits()).collect();
            seen.entry(key).or_insert_with(|| {
                points.push(t);
            });
        }

        let mut worst: Option<(u64, u64, f64)> = None;
        let mut check = |s: u64, t: u64| {
            let dist = self.context(s).iter().zip(self.context(t)).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            let excess = (self.market_value(s) - self.market_value(t)).abs() - LIPSCHITZ * dist;
            if excess > VALIDATION_TOL && worst.is_none_or(|w| excess > w.2) {
                worst = Some((s, t, excess));
            }
        };
        if points.len() <= EXHAUSTIVE_LIMIT {
            for (i, &s) in points.iter().enumerate() {
                for &t in &points[i + 1..] {
                    check(s, t);
                }
            }
        } else {
            let mut rng = stream(self.effective_horizon(), &[self.dim as u64], Role::Fuzz);
            for _ in 0..SAMPLED_PAIRS {
                let i = rng.random_range(0..points.len());
                let j = rng.random_range(0..points.len());
                check(points[i], points[j]);
            }
        }
        if let Some((s, t, excess)) = worst {
            out.push(Violation::new(ModelItem::Lipschitz, vec![s, t], excess));
        }
    }

    fn check_pairs(&self, out: &mut Vec<Violation>) {
        let mut rounds = Vec::new();
        let mut margin: f64 = 0.0;
        let pair_ok: Vec<f64> = self
            .pairs
            .iter()
            .map(|p| {
                let (f, g) = (p.pair.left(), p.pair.right());
                let mut bad = (f.mean() - g.mean()).abs() - DENSITY_TOL;
                for d in [f, g] {
                    if !d.bound().is_finite() {
                        bad = f64::INFINITY;
                    }
                    bad = bad.max((d.total_mass() - 1.0).abs() - DENSITY_TOL);
                }
                bad
            })
            .collect();
        for t in 1..=self.effective_horizon() {
            let k = self.pair_of_round[(t - 1) as usize] as usize;
            let mu = self.market_value(t);
            let gap = if (0.0..=1.0).contains(&mu) {
                (self.pairs[k].pair.common_mean() - mu).abs() - VALIDATION_TOL
            } else {
                f64::INFINITY
            };
            let bad = gap.max(pair_ok[k]);
            if bad > 0.0 {
                rounds.push(t);
                margin = margin.max(bad);
            }
        }
        if !rounds.is_empty() {
            out.push(Violation::new(ModelItem::ValuationLaw, rounds, margin));
        }
    }
}

/// The model assumption a violation refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelItem {
    /// Contexts lie in `[0,1)^d`.
    ContextDomain,
    /// Market values are Lipschitz in the context.
    Lipschitz,
    /// Each round's laws have bounded densities and mean equal to the market value.
    ValuationLaw,
}

impl fmt::Display for ModelItem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelItem::ContextDomain => "context domain",
            ModelItem::Lipschitz => "lipschitz market values",
            ModelItem::ValuationLaw => "valuation laws",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub item: ModelItem,
    /// Offending rounds (1-based), truncated to the first few.
    pub rounds: Vec<u64>,
    /// Total number of offending rounds (or pairs, for the Lipschitz check).
    pub count: usize,
    /// Worst amount by which the assumption fails.
    pub margin: f64,
}

impl Violation {
    fn new(item: ModelItem, mut rounds: Vec<u64>, margin: f64) -> Self {
        let count = if item == ModelItem::Lipschitz { 1 } else { rounds.len() };
        rounds.truncate(MAX_REPORTED_ROUNDS);
        Self { item, rounds, count, margin }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: rounds {:?} ({} total), margin {:e}", self.item, self.rounds, self.count, self.margin)
    }
}

/// Where the block signs of a lattice instance come from.
pub enum SignSource<'a> {
    Given(Vec<Sign>),
    Random(&'a mut dyn RngCore),
}

fn lattice_side(horizon: u64, dim: usize, extra: u32) -> Result<(u64, u64)> {
    let min = 1u64.checked_shl(dim as u32 + extra).unwrap_or(u64::MAX);
    if dim == 0 || horizon < min {
        return domain(format!("horizon {horizon} is below 2^(d+{extra}) = {min} for d = {dim}"));
    }
    let root = (horizon as f64).powf(1.0 / (dim as f64 + f64::from(extra))).round() as u64;
    let mut side = root.max(2);
    let blocks = |k: u64| k.checked_pow(dim as u32).unwrap_or(u64::MAX);
    while blocks(side) > horizon {
        side -= 1;
    }
    Ok((side, horizon / blocks(side)))
}

fn make_lattice(horizon: u64, dim: usize, extra: u32, signs: SignSource<'_>) -> Result<BrokerageInstance> {
    let (side, repeats) = lattice_side(horizon, dim, extra)?;
    let blocks = side.pow(dim as u32);
    let epsilon = (repeats as f64).powf(-1.0 / f64::from(extra));
    let signs = match signs {
        SignSource::Given(v) => {
            if v.len() as u64 != blocks {
                return domain(format!("{} signs given for {blocks} blocks", v.len()));
            }
            v
        }
        SignSource::Random(rng) => {
            (0..blocks).map(|_| if rng.random::<bool>() { Sign::Plus } else { Sign::Minus }).collect()
        }
    };

    let plus = ValuationPair::symmetric(make_lowerbound_density(Sign::Plus, epsilon)?);
    let minus = ValuationPair::symmetric(make_lowerbound_density(Sign::Minus, epsilon)?);
    let rounds = (blocks * repeats) as usize;
    let mut contexts = Vec::with_capacity(rounds * dim);
    let mut market_values = Vec::with_capacity(rounds);
    let mut pair_of_round = Vec::with_capacity(rounds);
    let mut point = vec![0.0; dim];
    for (b, &sign) in signs.iter().enumerate() {
        // Block order is lexicographic with the last axis fastest.
        let mut rest = b as u64;
        for j in (0..dim).rev() {
            point[j] = (rest % side) as f64 / side as f64;
            rest /= side;
        }
        let mu = lowerbound_mean(sign, epsilon);
        let k = u32::from(sign == Sign::Minus);
        for _ in 0..repeats {
            contexts.extend_from_slice(&point);
            market_values.push(mu);
            pair_of_round.push(k);
        }
    }
    let mut instance =
        BrokerageInstance::from_parts(dim, horizon, contexts, market_values, vec![plus, minus], pair_of_round)?;
    instance.lattice = Some(LatticeLayout { side, repeats, epsilon, signs });
    Ok(instance)
}

/// Lower-bound lattice for full feedback: `K = round(T^(1/(d+2)))`,
/// `n = floor(T / K^d)` rounds per point and `eps = n^(-1/2)`.
///
/// Only `n K^d` rounds are generated; the remainder of the horizon is dropped.
pub fn make_lattice_instance_full(horizon: u64, dim: usize, signs: SignSource<'_>) -> Result<BrokerageInstance> {
    make_lattice(horizon, dim, 2, signs)
}

/// Lower-bound lattice for limited feedback: `K = round(T^(1/(d+4)))`,
/// `n = floor(T / K^d)` and `eps = n^(-1/4)`.
pub fn make_lattice_instance_limited(horizon: u64, dim: usize, signs: SignSource<'_>) -> Result<BrokerageInstance> {
    make_lattice(horizon, dim, 4, signs)
}

/// Valuation laws of a smooth instance, as functions of the market value.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PairFamily {
    /// Both traders uniform on `[mu - h, mu + h]`.
    UniformWindow { half_width: f64 },
    /// Left trader uniform on `[mu - h, mu + h]`; right trader uniform on the
    /// two end blocks of width `block` of that window.
    SplitWindow { half_width: f64, block: f64 },
}

impl Default for PairFamily {
    fn default() -> Self {
        PairFamily::UniformWindow { half_width: 0.2 }
    }
}

impl PairFamily {
    fn check(&self) -> Result<()> {
        match *self {
            PairFamily::UniformWindow { half_width } if half_width > 0.0 && half_width <= 0.2 => Ok(()),
            PairFamily::SplitWindow { half_width, block }
                if half_width > 0.0 && half_width <= 0.2 && block > 0.0 && block < half_width =>
            {
                Ok(())
            }
            other => domain(format!("invalid pair family {other:?}: need 0 < block < half_width <= 0.2")),
        }
    }

    /// The pair with market value `mu` in `[0.2, 0.8]`.
    pub fn pair(&self, mu: f64) -> Result<ValuationPair> {
        self.check()?;
        match *self {
            PairFamily::UniformWindow { half_width } => {
                Ok(ValuationPair::symmetric(BoundedDensity::uniform_on(mu - half_width, mu + half_width)?))
            }
            PairFamily::SplitWindow { half_width, block } => {
                let (lo, hi) = (mu - half_width, mu + half_width);
                let left = BoundedDensity::uniform_on(lo, hi)?;
                let h = 0.5 / block;
                let right = BoundedDensity::from_blocks(&[(lo, lo + block, h), (hi - block, hi, h)])?;
                ValuationPair::new(left, right)
            }
        }
    }
}

const BUMPS: usize = 8;
const MU_RANGE: (f64, f64) = (0.2, 0.8);

/// Random benign instance: i.i.d. uniform contexts and market value
/// `clip(1/2 + roughness * sum_k a_k max(0, r_k - |x - c_k|_inf), 0.2, 0.8)`
/// with `sum |a_k| = 1`, which is `roughness`-Lipschitz.
pub fn make_smooth_instance<R: Rng + ?Sized>(
    horizon: u64,
    dim: usize,
    rng: &mut R,
    roughness: f64,
    family: PairFamily,
) -> Result<BrokerageInstance> {
    if !(0.0..=1.0).contains(&roughness) {
        return domain(format!("roughness {roughness} is outside [0, 1]"));
    }
    if dim == 0 || horizon == 0 {
        return domain("dimension and horizon must be positive");
    }
    family.check()?;

    let centers: Vec<Vec<f64>> = (0..BUMPS).map(|_| (0..dim).map(|_| rng.random::<f64>()).collect()).collect();
    let radii: Vec<f64> = (0..BUMPS).map(|_| rng.random_range(0.1..0.5)).collect();
    let mut weights: Vec<f64> = (0..BUMPS).map(|_| rng.random_range(-1.0..1.0)).collect();
    let total: f64 = weights.iter().map(|a| a.abs()).sum();
    weights.iter_mut().for_each(|a| *a /= total);
    let mu_of = |x: &[f64]| {
        let bump: f64 = (0..BUMPS)
            .map(|k| {
                let dist = x.iter().zip(&centers[k]).map(|(a, c)| (a - c).abs()).fold(0.0, f64::max);
                weights[k] * (radii[k] - dist).max(0.0)
            })
            .sum();
        (0.5 + roughness * bump).clamp(MU_RANGE.0, MU_RANGE.1)
    };

    let rounds = horizon as usize;
    let mut contexts = Vec::with_capacity(rounds * dim);
    let mut market_values = Vec::with_capacity(rounds);
    let mut pair_of_round = Vec::with_capacity(rounds);
    let mut pairs = Vec::new();
    let mut index: HashMap<u64, u32> = HashMap::new();
    let mut x = vec![0.0; dim];
    for _ in 0..rounds {
        x.iter_mut().for_each(|c| *c = rng.random::<f64>());
        let mu = mu_of(&x);
        let k = match index.get(&mu.to_bits()) {
            Some(&k) => k,
            None => {
                let pair = family.pair(mu)?;
                let k = pairs.len() as u32;
                pairs.push(pair);
                index.insert(mu.to_bits(), k);
                k
            }
        };
        contexts.extend_from_slice(&x);
        market_values.push(mu);
        pair_of_round.push(k);
    }
    BrokerageInstance::from_parts(dim, horizon, contexts, market_values, pairs, pair_of_round)
}

fn default_roughness() -> f64 {
    1.0
}

/// Serializable recipe for an instance family.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "constructor", content = "params", rename_all = "kebab-case")]
pub enum InstanceSpec {
    LatticeFull {
        /// Block signs as `+1`/`-1`; random when absent.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        signs: Option<Vec<i8>>,
    },
    LatticeLimited {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        signs: Option<Vec<i8>>,
    },
    Smooth {
        #[serde(default = "default_roughness")]
        roughness: f64,
        #[serde(default)]
        family: PairFamily,
    },
}

impl InstanceSpec {
    /// Parses a constructor name with default parameters.
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "lattice-full" => Ok(InstanceSpec::LatticeFull { signs: None }),
            "lattice-limited" => Ok(InstanceSpec::LatticeLimited { signs: None }),
            "smooth" => Ok(InstanceSpec::Smooth { roughness: default_roughness(), family: PairFamily::default() }),
            other => Err(Error::Config(format!(
                "unknown instance constructor '{other}' (expected lattice-full, lattice-limited or smooth)"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            InstanceSpec::LatticeFull { .. } => "lattice-full",
            InstanceSpec::LatticeLimited { .. } => "lattice-limited",
            InstanceSpec::Smooth { .. } => "smooth",
        }
    }

    /// Builds the instance; the seed feeds the sign and instance streams only.
    pub fn build(&self, horizon: u64, dim: usize, seed: u64) -> Result<BrokerageInstance> {
        let given = |signs: &Option<Vec<i8>>| -> Result<Option<Vec<Sign>>> {
            signs.as_ref().map(|v| v.iter().map(|&s| Sign::from_i8(s)).collect()).transpose()
        };
        match self {
            InstanceSpec::LatticeFull { signs } | InstanceSpec::LatticeLimited { signs } => {
                let mut rng = stream(seed, &[], Role::InstanceSigns);
                let source = match given(signs)? {
                    Some(v) => SignSource::Given(v),
                    None => SignSource::Random(&mut rng),
                };
                if matches!(self, InstanceSpec::LatticeFull { .. }) {
                    make_lattice_instance_full(horizon, dim, source)
                } else {
                    make_lattice_instance_limited(horizon, dim, source)
                }
            }
            InstanceSpec::Smooth { roughness, family } => {
                let mut rng = stream(seed, &[], Role::Instance);
                make_smooth_instance(horizon, dim, &mut rng, *roughness, *family)
            }
        }
    }
}

/// Every round of an instance written out explicitly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaterializedRounds {
    pub contexts: Vec<Vec<f64>>,
    pub market_values: Vec<f64>,
    pub pairs: Vec<ValuationPair>,
    pub pair_of_round: Vec<u32>,
}

/// On-disk description of an instance. Large instances are regenerated from
/// the constructor, its parameters and the seed; small ones may also carry
/// their rounds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceFile {
    #[serde(flatten)]
    pub spec: InstanceSpec,
    pub seed: u64,
    pub dim: usize,
    pub horizon: u64,
    pub effective_horizon: u64,
    #[serde(default)]
    pub materialized: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rounds: Option<MaterializedRounds>,
}

impl InstanceFile {
    pub fn describe(spec: &InstanceSpec, instance: &BrokerageInstance, seed: u64, materialize: bool) -> Self {
        let rounds = materialize.then(|| MaterializedRounds {
            contexts: instance.contexts.chunks(instance.dim).map(<[f64]>::to_vec).collect(),
            market_values: instance.market_values.clone(),
            pairs: instance.pairs().cloned().collect(),
            pair_of_round: instance.pair_of_round.clone(),
        });
        Self {
            spec: spec.clone(),
            seed,
            dim: instance.dim,
            horizon: instance.horizon,
            effective_horizon: instance.effective_horizon(),
            materialized: materialize,
            rounds,
        }
    }

    /// Rebuilds the instance, from the stored rounds when present.
    pub fn instantiate(&self) -> Result<BrokerageInstance> {
        let instance = match &self.rounds {
            Some(r) => {
                if r.contexts.iter().any(|c| c.len() != self.dim) {
                    return domain(format!("stored contexts do not all have dimension {}", self.dim));
                }
                BrokerageInstance::from_parts(
                    self.dim,
                    self.horizon,
                    r.contexts.concat(),
                    r.market_values.clone(),
                    r.pairs.clone(),
                    r.pair_of_round.clone(),
                )?
            }
            None => self.spec.build(self.horizon, self.dim, self.seed)?,
        };
        if instance.effective_horizon() != self.effective_horizon {
            return domain(format!(
                "file records {} rounds but the instance has {}",
                self.effective_horizon,
                instance.effective_horizon()
            ));
        }
        Ok(instance)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn constant_uniform(horizon: usize) -> BrokerageInstance {
        let contexts = (0..horizon).map(|t| t as f64 / horizon as f64).collect();
        BrokerageInstance::from_parts(
            1,
            horizon as u64,
            contexts,
            vec![0.5; horizon],
            vec![ValuationPair::symmetric(BoundedDensity::uniform())],
            vec![0; horizon],
        )
        .unwrap()
    }

    #[test]
    fn constant_uniform_instance_is_valid() {
        assert!(constant_uniform(100).validate().is_empty());
    }

    #[test]
    fn market_value_jump_at_same_context_is_flagged() {
        let pairs = vec![
            ValuationPair::symmetric(BoundedDensity::uniform_on(0.0, 0.5).unwrap()),
            ValuationPair::symmetric(BoundedDensity::uniform_on(0.25, 1.0).unwrap()),
        ];
        let inst = BrokerageInstance::from_parts(1, 2, vec![0.3, 0.3], vec![0.25, 0.625], pairs, vec![0, 1]).unwrap();
        let v = inst.validate();
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].item, ModelItem::Lipschitz);
        assert_eq!(v[0].rounds, vec![1, 2]);
        assert_abs_diff_eq!(v[0].margin, 0.375, epsilon = 1e-15);
    }

    #[test]
    fn context_outside_unit_cube_is_flagged() {
        let inst = BrokerageInstance::from_parts(
            1,
            2,
            vec![0.2, 1.0],
            vec![0.5, 0.5],
            vec![ValuationPair::symmetric(BoundedDensity::uniform())],
            vec![0, 0],
        )
        .unwrap();
        let v = inst.validate();
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].item, ModelItem::ContextDomain);
        assert_eq!(v[0].rounds, vec![2]);
    }

    #[test]
    fn wrong_market_value_is_flagged() {
        let inst = BrokerageInstance::from_parts(
            1,
            1,
            vec![0.2],
            vec![0.4],
            vec![ValuationPair::symmetric(BoundedDensity::uniform())],
            vec![0],
        )
        .unwrap();
        let v = inst.validate();
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].item, ModelItem::ValuationLaw);
    }

    #[test]
    fn full_lattice_layout() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let inst = make_lattice_instance_full(4096, 1, SignSource::Random(&mut rng)).unwrap();
        let l = inst.lattice().unwrap();
        assert_eq!((l.side, l.repeats, l.blocks()), (16, 256, 16));
        assert_eq!(l.epsilon, 1.0 / 16.0);
        assert_eq!(inst.effective_horizon(), 4096);
        assert_eq!(inst.context(1), &[0.0]);
        assert_eq!(inst.context(256), &[0.0]);
        assert_eq!(inst.context(257), &[1.0 / 16.0]);
        assert!(inst.validate().is_empty());
    }

    #[test]
    fn limited_lattice_layout() {
        let inst = make_lattice_instance_limited(3125, 1, SignSource::Given(vec![Sign::Plus; 5])).unwrap();
        let l = inst.lattice().unwrap();
        assert_eq!((l.side, l.repeats), (5, 625));
        assert_abs_diff_eq!(l.epsilon, 0.2, epsilon = 1e-15);
        assert_abs_diff_eq!(inst.market_value(1), 0.5 + 0.2 / 196.0, epsilon = 1e-15);
        assert!(inst.validate().is_empty());
    }

    #[test]
    fn lattice_blocks_are_lexicographic_with_last_axis_fastest() {
        // 32^(1/4) rounds to 2, so there are 4 blocks of 8 rounds and eps = 8^(-1/2).
        let inst = make_lattice_instance_full(32, 2, SignSource::Given(vec![Sign::Minus; 4])).unwrap();
        let l = inst.lattice().unwrap();
        assert_eq!((l.side, l.repeats), (2, 8));
        assert_eq!(inst.context(1), &[0.0, 0.0]);
        assert_eq!(inst.context(9), &[0.0, 0.5]);
        assert_eq!(inst.context(17), &[0.5, 0.0]);
        assert_eq!(inst.context(32), &[0.5, 0.5]);
        assert_abs_diff_eq!(inst.pair(1).pair.left().heights()[1], 1.0 + 8f64.sqrt().recip(), epsilon = 1e-15);
        assert!(inst.validate().is_empty());
    }

    #[test]
    fn lattice_rejects_short_horizons_and_wrong_sign_counts() {
        assert!(make_lattice_instance_full(7, 1, SignSource::Given(vec![])).is_err());
        assert!(make_lattice_instance_limited(31, 1, SignSource::Given(vec![])).is_err());
        assert!(make_lattice_instance_full(4096, 1, SignSource::Given(vec![Sign::Plus; 3])).is_err());
    }

    #[test]
    fn smooth_instances_validate() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let flat = make_smooth_instance(500, 2, &mut rng, 0.0, PairFamily::default()).unwrap();
        assert!(flat.market_values().iter().all(|&m| m == 0.5));
        assert!(flat.validate().is_empty());
        let split = PairFamily::SplitWindow { half_width: 0.15, block: 0.05 };
        let rough = make_smooth_instance(500, 3, &mut rng, 1.0, split).unwrap();
        assert!(rough.validate().is_empty());
        assert!(rough.market_values().iter().all(|m| (0.2..=0.8).contains(m)));
    }

    #[test]
    fn spec_round_trips_through_json() {
        let spec = InstanceSpec::Smooth { roughness: 0.5, family: PairFamily::default() };
        let json = serde_json::to_string(&spec).unwrap();
        assert_eq!(
            json,
            r#"{"constructor":"smooth","params":{"roughness":0.5,"family":{"kind":"uniform-window","half_width":0.2}}}"#
        );
        assert_eq!(serde_json::from_str::<InstanceSpec>(&json).unwrap(), spec);
        let bare: InstanceSpec = serde_json::from_str(r#"{"constructor":"lattice-full","params":{}}"#).unwrap();
        assert_eq!(bare, InstanceSpec::LatticeFull { signs: None });
    }

    #[test]
    fn instance_file_regenerates_and_materializes() {
        let spec = InstanceSpec::LatticeFull { signs: None };
        let inst = spec.build(256, 1, 9).unwrap();
        for materialize in [false, true] {
            let file = InstanceFile::describe(&spec, &inst, 9, materialize);
            let json = serde_json::to_string(&file).unwrap();
            let back: InstanceFile = serde_json::from_str(&json).unwrap();
            let again = back.instantiate().unwrap();
            assert_eq!(again.market_values(), inst.market_values());
            assert_eq!(again.contexts(), inst.contexts());
        }
    }

    #[test]
    fn same_seed_gives_identical_instances() {
        let spec = InstanceSpec::Smooth { roughness: 1.0, family: PairFamily::default() };
        let a = spec.build(300, 2, 4).unwrap();
        let b = spec.build(300, 2, 4).unwrap();
        let fa = serde_json::to_string(&InstanceFile::describe(&spec, &a, 4, true)).unwrap();
        let fb = serde_json::to_string(&InstanceFile::describe(&spec, &b, 4, true)).unwrap();
        assert_eq!(fa, fb);
    }
}
