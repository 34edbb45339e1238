//! Dyadic hypercube cells of `[0,1)^d` and the adaptive family of cells
//! grown by bisection.
//!
//! Cells are identified by `(level, coords)`; membership of a point is
//! decided with `floor(x_j * 2^level)`, which is exact in double precision
//! for every level up to [`MAX_LEVEL`].

use std::collections::HashMap;
use std::fmt;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{domain, Error, Result};

/// Deepest level a cell may have. Beyond it `floor(x * 2^level)` stops being injective.
pub const MAX_LEVEL: u32 = 52;

/// `2^bits`, saturating at `u64::MAX`.
pub(crate) fn pow2_saturating(bits: u32) -> u64 {
    if bits >= 64 {
        u64::MAX
    } else {
        1u64 << bits
    }
}

/// Index of the level-`level` dyadic interval containing `x`.
#[inline]
fn dyadic_index(x: f64, level: u32) -> u64 {
    // Scaling by a power of two is exact, so the floor never misclassifies
    // dyadic rationals such as 0.5.
    (x * (1u64 << level) as f64).floor() as u64
}

fn check_point(x: &[f64], dim: usize) -> Result<()> {
    if x.len() != dim {
        return domain(format!("point has dimension {} but the partition has dimension {dim}", x.len()));
    }
    if let Some(v) = x.iter().find(|v| !(0.0..1.0).contains(*v)) {
        return domain(format!("coordinate {v} is outside [0, 1)"));
    }
    Ok(())
}

/// The cell `prod_j [k_j 2^-i, (k_j + 1) 2^-i)` of level `i`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DyadicCell {
    level: u32,
    coords: Vec<u64>,
}

impl DyadicCell {
    /// The whole space `[0,1)^dim`.
    pub fn root(dim: usize) -> Self {
        assert!(dim >= 1, "dimension must be positive");
        Self { level: 0, coords: vec![0; dim] }
    }

    pub fn new(level: u32, coords: Vec<u64>) -> Result<Self> {
        if coords.is_empty() {
            return domain("a cell needs at least one coordinate");
        }
        if level > MAX_LEVEL {
            return Err(Error::DepthExceeded { level, max: MAX_LEVEL });
        }
        let side = 1u64 << level;
        if let Some(k) = coords.iter().find(|&&k| k >= side) {
            return domain(format!("coordinate index {k} is out of range for level {level}"));
        }
        Ok(Self { level, coords })
    }

    /// The level-`level` cell containing `x`.
    pub fn containing(x: &[f64], level: u32) -> Result<Self> {
        if level > MAX_LEVEL {
            return Err(Error::DepthExceeded { level, max: MAX_LEVEL });
        }
        check_point(x, x.len())?;
        if x.is_empty() {
            return domain("a point needs at least one coordinate");
        }
        Ok(Self { level, coords: x.iter().map(|&v| dyadic_index(v, level)).collect() })
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn coords(&self) -> &[u64] {
        &self.coords
    }

    pub fn is_root(&self) -> bool {
        self.level == 0
    }

    /// Side length `2^-level`.
    pub fn side(&self) -> f64 {
        (-(self.level as f64)).exp2()
    }

    /// The unique level `i - 1` cell containing this one; the root is its own parent.
    pub fn parent(&self) -> Self {
        if self.level == 0 {
            return self.clone();
        }
        Self { level: self.level - 1, coords: self.coords.iter().map(|k| k / 2).collect() }
    }

    /// The `2^d` children, ordered so that bit `j` of the position selects
    /// the upper half along axis `j`.
    pub fn children(&self) -> Result<Vec<Self>> {
        let level = self.level + 1;
        if level > MAX_LEVEL {
            return Err(Error::DepthExceeded { level, max: MAX_LEVEL });
        }
        let d = self.dim();
        Ok((0..1usize << d)
            .map(|mask| Self {
                level,
                coords: self.coords.iter().enumerate().map(|(j, k)| 2 * k + ((mask >> j) & 1) as u64).collect(),
            })
            .collect())
    }

    /// Integer-arithmetic membership test.
    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter().all(|v| (0.0..1.0).contains(v))
            && x.iter().zip(&self.coords).all(|(&v, &k)| dyadic_index(v, self.level) == k)
    }

    /// Whether `other` is this cell or lies inside it.
    pub fn encloses(&self, other: &DyadicCell) -> bool {
        if other.level < self.level || other.dim() != self.dim() {
            return false;
        }
        let shift = other.level - self.level;
        other.coords.iter().zip(&self.coords).all(|(o, s)| o >> shift == *s)
    }

    /// Half-open interval `[lo, hi)` of the cell along `axis`.
    pub fn interval(&self, axis: usize) -> (f64, f64) {
        let side = self.side();
        let k = self.coords[axis] as f64;
        (k * side, (k + 1.0) * side)
    }
}

impl fmt::Display for DyadicCell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "L{}(", self.level)?;
        for (j, k) in self.coords.iter().enumerate() {
            if j > 0 {
                f.write_str(",")?;
            }
            write!(f, "{k}")?;
        }
        f.write_str(")")
    }
}

/// Running statistics attached to a cell.
///
/// `count` is the number of contexts that landed in the cell while it was
/// terminal. `sample_count`/`valuation_sum` describe the observations the
/// cell's estimator averages: every round for full feedback, exploration
/// rounds (including those handed down from the parent) for limited
/// feedback. The `frozen_parent_*` pair is the parent's estimator state at
/// the instant the parent was bisected.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CellStats {
    pub count: u64,
    pub sample_count: u64,
    pub valuation_sum: f64,
    pub exploit_count: u64,
    pub explore_count: u64,
    pub frozen_parent_count: u64,
    pub frozen_parent_sum: f64,
}

/// Handle to a node of a [`CellTree`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub const ROOT: NodeId = NodeId(0);

    pub fn index(self) -> usize {
        self.0
    }
}

/// One observation retained by a terminal cell so that it can be handed
/// down to the child containing it when the cell is bisected.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub point: Vec<f64>,
    pub value: f64,
}

#[derive(Clone, Debug)]
struct Node {
    cell: DyadicCell,
    stats: CellStats,
    first_child: Option<NodeId>,
    samples: Vec<Sample>,
    removed: bool,
}

/// The growing family of dyadic cells. Terminal cells always partition `[0,1)^d`.
#[derive(Clone, Debug)]
pub struct CellTree {
    dim: usize,
    nodes: Vec<Node>,
    index: HashMap<DyadicCell, NodeId>,
}

impl CellTree {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return domain("dimension must be at least 1");
        }
        let root = DyadicCell::root(dim);
        let mut index = HashMap::new();
        index.insert(root.clone(), NodeId::ROOT);
        Ok(Self {
            dim,
            nodes: vec![Node {
                cell: root,
                stats: CellStats::default(),
                first_child: None,
                samples: Vec::new(),
                removed: false,
            }],
            index,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of cells ever created, terminal or internal.
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn get(&self, cell: &DyadicCell) -> Option<NodeId> {
        self.index.get(cell).copied().filter(|id| !self.nodes[id.0].removed)
    }

    pub fn cell(&self, id: NodeId) -> &DyadicCell {
        &self.nodes[id.0].cell
    }

    pub fn stats(&self, id: NodeId) -> &CellStats {
        &self.nodes[id.0].stats
    }

    pub fn stats_mut(&mut self, id: NodeId) -> &mut CellStats {
        &mut self.nodes[id.0].stats
    }

    pub fn is_terminal(&self, id: NodeId) -> bool {
        let node = &self.nodes[id.0];
        !node.removed && node.first_child.is_none()
    }

    /// Ids of the current terminal cells, in creation order.
    pub fn terminals(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.nodes.len()).map(NodeId).filter(|&id| self.is_terminal(id))
    }

    /// Children of an internal node.
    pub fn children(&self, id: NodeId) -> Option<impl Iterator<Item = NodeId>> {
        let width = 1usize << self.dim;
        self.nodes[id.0].first_child.map(|first| (first.0..first.0 + width).map(NodeId))
    }

    /// Terminal cell containing `x`.
    pub fn locate_terminal(&self, x: &[f64]) -> Result<&DyadicCell> {
        self.locate(x).map(|id| self.cell(id))
    }

    /// Id of the terminal cell containing `x`, found by descending from the
    /// root with integer child selection.
    pub fn locate(&self, x: &[f64]) -> Result<NodeId> {
        check_point(x, self.dim)?;
        let mut id = NodeId::ROOT;
        while let Some(first) = self.nodes[id.0].first_child {
            let level = self.nodes[id.0].cell.level + 1;
            let offset =
                x.iter().enumerate().fold(0usize, |acc, (j, &v)| acc | (((dyadic_index(v, level) & 1) as usize) << j));
            id = NodeId(first.0 + offset);
        }
        if self.nodes[id.0].removed {
            return Err(Error::Invariant(format!("no terminal cell contains {x:?}")));
        }
        Ok(id)
    }

    /// Appends an observation to a terminal cell's estimator and keeps it
    /// for hand-down at bisection.
    pub fn push_sample(&mut self, id: NodeId, point: Vec<f64>, value: f64) -> Result<()> {
        if !self.is_terminal(id) {
            return Err(Error::NotTerminal(self.cell(id).clone()));
        }
        let node = &mut self.nodes[id.0];
        node.stats.sample_count += 1;
        node.stats.valuation_sum += value;
        node.samples.push(Sample { point, value });
        Ok(())
    }

    /// Samples currently retained by a terminal cell.
    pub fn samples(&self, id: NodeId) -> &[Sample] {
        &self.nodes[id.0].samples
    }

    /// Replaces a terminal cell by its `2^d` children.
    ///
    /// Children start with zero running counters; each records the parent's
    /// `(sample_count, valuation_sum)` as its frozen snapshot, and retained
    /// samples move to the child containing them.
    pub fn bisect(&mut self, id: NodeId) -> Result<Vec<NodeId>> {
        if !self.is_terminal(id) {
            return Err(Error::NotTerminal(self.cell(id).clone()));
        }
        let children = self.nodes[id.0].cell.children()?;
        let parent_stats = self.nodes[id.0].stats.clone();
        let first = NodeId(self.nodes.len());
        for child in children {
            self.index.insert(child.clone(), NodeId(self.nodes.len()));
            self.nodes.push(Node {
                cell: child,
                stats: CellStats {
                    frozen_parent_count: parent_stats.sample_count,
                    frozen_parent_sum: parent_stats.valuation_sum,
                    ..CellStats::default()
                },
                first_child: None,
                samples: Vec::new(),
                removed: false,
            });
        }
        self.nodes[id.0].first_child = Some(first);
        let samples = std::mem::take(&mut self.nodes[id.0].samples);
        for sample in samples {
            let target = self.locate(&sample.point)?;
            let node = &mut self.nodes[target.0];
            node.stats.sample_count += 1;
            node.stats.valuation_sum += sample.value;
            node.samples.push(sample);
        }
        let width = 1usize << self.dim;
        Ok((first.0..first.0 + width).map(NodeId).collect())
    }

    /// Bisects the terminal node holding `cell`.
    pub fn bisect_cell(&mut self, cell: &DyadicCell) -> Result<Vec<DyadicCell>> {
        let id = self.get(cell).ok_or_else(|| Error::NotTerminal(cell.clone()))?;
        let kids = self.bisect(id)?;
        Ok(kids.into_iter().map(|k| self.cell(k).clone()).collect())
    }

    /// Checks that the terminal cells tile `[0,1)^d`.
    ///
    /// The volume identity `sum 2^(-d * level) = 1` is evaluated exactly by
    /// carrying whole groups of `2^d` siblings up one level at a time; then
    /// 256 seeded random points (and each terminal cell's lower corner) must
    /// each fall into exactly one terminal cell.
    pub fn partition_check(&self) -> bool {
        let terminals: Vec<&DyadicCell> = self.terminals().map(|id| self.cell(id)).collect();
        if terminals.is_empty() {
            return false;
        }
        let max_level = terminals.iter().map(|c| c.level).max().unwrap_or(0);
        let mut per_level = vec![0u64; max_level as usize + 1];
        for c in &terminals {
            per_level[c.level as usize] += 1;
        }
        let group = 1u64 << self.dim;
        let mut carry = 0u64;
        for level in (1..=max_level as usize).rev() {
            let total = per_level[level] + carry;
            if !total.is_multiple_of(group) {
                return false;
            }
            carry = total / group;
        }
        if per_level[0] + carry != 1 {
            return false;
        }

        let mut rng = ChaCha8Rng::seed_from_u64(0x5EED_CE11);
        let mut probes: Vec<Vec<f64>> =
            (0..256).map(|_| (0..self.dim).map(|_| rng.random::<f64>()).collect()).collect();
        probes.extend(terminals.iter().take(256).map(|c| (0..self.dim).map(|j| c.interval(j).0).collect()));
        probes.iter().all(|x| {
            let hits = terminals.iter().filter(|c| c.contains(x)).count();
            hits == 1 && self.locate(x).map(|id| self.cell(id).contains(x)).unwrap_or(false)
        })
    }

    /// Line-oriented text dump, one cell per line sorted by `(level, coords)`:
    ///
    /// `level coords kind count sample_count valuation_sum exploit explore frozen_count frozen_sum`
    pub fn dump(&self) -> String {
        let mut ids: Vec<NodeId> = (0..self.nodes.len()).map(NodeId).filter(|id| !self.nodes[id.0].removed).collect();
        ids.sort_by(|a, b| self.cell(*a).cmp(self.cell(*b)));
        let mut out = String::new();
        for id in ids {
            let node = &self.nodes[id.0];
            let s = &node.stats;
            let coords: Vec<String> = node.cell.coords.iter().map(u64::to_string).collect();
            let kind = if node.first_child.is_none() { "terminal" } else { "internal" };
            let _ = writeln!(
                out,
                "{} {} {} {} {} {} {} {} {} {}",
                node.cell.level,
                coords.join(","),
                kind,
                s.count,
                s.sample_count,
                s.valuation_sum,
                s.exploit_count,
                s.explore_count,
                s.frozen_parent_count,
                s.frozen_parent_sum
            );
        }
        out
    }

    #[cfg(test)]
    fn forget_terminal(&mut self, cell: &DyadicCell) -> bool {
        match self.get(cell) {
            Some(id) if self.is_terminal(id) => {
                self.nodes[id.0].removed = true;
                true
            }
            _ => false,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cell(level: u32, coords: &[u64]) -> DyadicCell {
        DyadicCell::new(level, coords.to_vec()).unwrap()
    }

    #[test]
    fn fresh_tree_locates_root() {
        let tree = CellTree::new(1).unwrap();
        assert_eq!(tree.locate_terminal(&[0.7]).unwrap(), &DyadicCell::root(1));
        assert!(tree.partition_check());
    }

    #[test]
    fn midpoint_goes_to_upper_child() {
        let mut tree = CellTree::new(1).unwrap();
        tree.bisect(NodeId::ROOT).unwrap();
        assert_eq!(tree.locate_terminal(&[0.5]).unwrap(), &cell(1, &[1]));
        assert_eq!(tree.locate_terminal(&[0.499_999_999_999_999_9]).unwrap(), &cell(1, &[0]));
    }

    #[test]
    fn quadrant_identification() {
        let mut tree = CellTree::new(2).unwrap();
        let kids = tree.bisect_cell(&DyadicCell::root(2)).unwrap();
        assert_eq!(kids.len(), 4);
        assert_eq!(tree.locate_terminal(&[0.25, 0.75]).unwrap(), &cell(1, &[0, 1]));
        assert!(tree.partition_check());
    }

    #[test]
    fn bisect_root_in_one_dimension() {
        let mut tree = CellTree::new(1).unwrap();
        let kids = tree.bisect_cell(&DyadicCell::root(1)).unwrap();
        assert_eq!(kids, vec![cell(1, &[0]), cell(1, &[1])]);
        assert_eq!(kids[0].interval(0), (0.0, 0.5));
        assert_eq!(kids[1].interval(0), (0.5, 1.0));
    }

    #[test]
    fn bisect_snapshots_parent_statistics() {
        let mut tree = CellTree::new(1).unwrap();
        tree.bisect(NodeId::ROOT).unwrap();
        let upper = tree.get(&cell(1, &[1])).unwrap();
        {
            let s = tree.stats_mut(upper);
            s.count = 4;
            s.sample_count = 4;
            s.valuation_sum = 3.2;
        }
        let kids = tree.bisect(upper).unwrap();
        for k in kids {
            let s = tree.stats(k);
            assert_eq!(s.frozen_parent_count, 4);
            assert_eq!(s.frozen_parent_sum, 3.2);
            assert_eq!(s.count, 0);
            assert_eq!(s.sample_count, 0);
        }
    }

    #[test]
    fn bisecting_internal_cell_is_an_error() {
        let mut tree = CellTree::new(1).unwrap();
        tree.bisect(NodeId::ROOT).unwrap();
        assert!(matches!(tree.bisect(NodeId::ROOT), Err(Error::NotTerminal(_))));
    }

    #[test]
    fn out_of_range_points_are_rejected() {
        let tree = CellTree::new(2).unwrap();
        assert!(matches!(tree.locate(&[1.0, 0.2]), Err(Error::Domain(_))));
        assert!(matches!(tree.locate(&[-0.1, 0.2]), Err(Error::Domain(_))));
        assert!(matches!(tree.locate(&[0.1]), Err(Error::Domain(_))));
        assert!(matches!(tree.locate(&[f64::NAN, 0.1]), Err(Error::Domain(_))));
    }

    #[test]
    fn depth_cap_is_enforced() {
        assert!(matches!(DyadicCell::new(53, vec![0]), Err(Error::DepthExceeded { .. })));
        let mut tree = CellTree::new(1).unwrap();
        let x = [0.3];
        for _ in 0..MAX_LEVEL {
            let id = tree.locate(&x).unwrap();
            tree.bisect(id).unwrap();
        }
        let id = tree.locate(&x).unwrap();
        assert_eq!(tree.cell(id).level(), MAX_LEVEL);
        assert!(tree.cell(id).contains(&x));
        assert!(matches!(tree.bisect(id), Err(Error::DepthExceeded { level: 53, .. })));
    }

    #[test]
    fn deleted_terminal_breaks_partition() {
        let mut tree = CellTree::new(2).unwrap();
        tree.bisect(NodeId::ROOT).unwrap();
        assert!(tree.partition_check());
        assert!(tree.forget_terminal(&cell(1, &[1, 0])));
        assert!(!tree.partition_check());
    }

    #[test]
    fn samples_follow_geometry_at_bisection() {
        let mut tree = CellTree::new(1).unwrap();
        tree.push_sample(NodeId::ROOT, vec![0.1], 1.0).unwrap();
        tree.push_sample(NodeId::ROOT, vec![0.6], 2.0).unwrap();
        tree.push_sample(NodeId::ROOT, vec![0.7], 0.0).unwrap();
        let kids = tree.bisect(NodeId::ROOT).unwrap();
        assert_eq!(tree.stats(kids[0]).sample_count, 1);
        assert_eq!(tree.stats(kids[0]).valuation_sum, 1.0);
        assert_eq!(tree.stats(kids[1]).sample_count, 2);
        assert_eq!(tree.stats(kids[1]).valuation_sum, 2.0);
        assert_eq!(tree.stats(kids[1]).frozen_parent_count, 3);
        assert!(tree.samples(NodeId::ROOT).is_empty());
    }

    #[test]
    fn parent_and_encloses() {
        let c = cell(3, &[5, 2]);
        assert_eq!(c.parent(), cell(2, &[2, 1]));
        assert_eq!(DyadicCell::root(2).parent(), DyadicCell::root(2));
        assert!(cell(1, &[1, 0]).encloses(&c));
        assert!(!cell(1, &[0, 0]).encloses(&c));
        assert_eq!(c.side(), 0.125);
    }

    #[test]
    fn dump_lists_every_cell() {
        let mut tree = CellTree::new(1).unwrap();
        tree.bisect(NodeId::ROOT).unwrap();
        let dump = tree.dump();
        let lines: Vec<&str> = dump.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[0], "0 0 internal 0 0 0 0 0 0 0");
        assert_eq!(lines[2], "1 1 terminal 0 0 0 0 0 0 0");
    }
}
