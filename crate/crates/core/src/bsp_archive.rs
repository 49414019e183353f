//! Binary space partitioning archive of the whole search history.
//!
//! Every evaluated solution owns one leaf cell of an axis-aligned partition of
//! the domain. Inserting a new solution splits the cell it lands in along the
//! dimension where it differs most from the cell's current owner, halfway
//! between the two. The tree therefore doubles as
//!
//! - a revisit detector (a candidate identical to its cell owner is a revisit),
//! - a source of adaptive mutation regions (the revisited cell),
//! - a density map: deep leaves mark densely sampled regions of interest.
//!
//! Internal nodes keep the solution they held before splitting (the "virtual"
//! holder); it is only used for debugging output.

use std::fmt::Write as _;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One evaluated solution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchPoint {
    pub coords: Vec<f64>,
    pub fitness: f64,
    /// Global evaluation counter (1-based) at insertion time.
    pub eval_index: u64,
}

/// Axis-aligned box `[lower, upper]` with strictly positive extent per dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl Region {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.is_empty() || lower.len() != upper.len() {
            return Err(Error::Parameter(format!(
                "region bounds must be non-empty and of equal length (got {} and {})",
                lower.len(),
                upper.len()
            )));
        }
        for (d, (lo, hi)) in lower.iter().zip(&upper).enumerate() {
            if !lo.is_finite() || !hi.is_finite() || lo >= hi {
                return Err(Error::Parameter(format!(
                    "region needs finite lower < upper, dimension {d} has [{lo}, {hi}]"
                )));
            }
        }
        Ok(Region { lower, upper })
    }

    /// The cube `[lo, hi]^dim`.
    pub fn cube(dim: usize, lo: f64, hi: f64) -> Result<Self> {
        Region::new(vec![lo; dim], vec![hi; dim])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn side(&self, d: usize) -> f64 {
        self.upper[d] - self.lower[d]
    }

    pub fn max_side(&self) -> f64 {
        (0..self.dim()).map(|d| self.side(d)).fold(0.0, f64::max)
    }

    /// Inclusive membership test. Dimension mismatches are never contained.
    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (lo, hi))| *lo <= *v && *v <= *hi)
    }

    /// Natural log of the volume. Used instead of the volume itself so that
    /// small cells in 30 dimensions do not underflow.
    pub fn log_volume(&self) -> f64 {
        (0..self.dim()).map(|d| self.side(d).ln()).sum()
    }

    pub fn volume(&self) -> f64 {
        self.log_volume().exp()
    }

    pub fn center(&self) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(lo, hi)| 0.5 * (lo + hi))
            .collect()
    }

    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(lo, hi)| {
                let u: f64 = rng.random();
                (lo + u * (hi - lo)).min(*hi)
            })
            .collect()
    }

    pub fn clamp(&self, x: &mut [f64]) {
        for (v, (lo, hi)) in x.iter_mut().zip(self.lower.iter().zip(&self.upper)) {
            *v = v.clamp(*lo, *hi);
        }
    }
}

/// Handle to a node of a [`BspArchive`]. Handles of pruned nodes are
/// invalidated and may be reused by later inserts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NodeId(usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Side {
    Below = 0,
    Above = 1,
}

#[derive(Debug, Clone)]
struct Split {
    dim: usize,
    value: f64,
    children: [NodeId; 2],
}

#[derive(Debug, Clone)]
struct Node {
    parent: Option<(NodeId, Side)>,
    depth: u32,
    point: SearchPoint,
    split: Option<Split>,
    blocked: bool,
    last_touch: u64,
    alive: bool,
}

/// Result of [`BspArchive::insert`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InsertOutcome {
    /// The point was stored in a fresh leaf at `depth`. Its fitness is pending
    /// until [`BspArchive::set_fitness`] is called.
    NewLeaf { leaf: NodeId, depth: u32 },
    /// The point duplicates the owner of `leaf`; nothing was stored.
    Revisit { leaf: NodeId },
    /// The point falls under a blocked node; nothing was stored.
    Blocked,
}

/// A densely sampled cell suggested as a CMA-ES restart region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoiSuggestion {
    pub subroot: NodeId,
    pub region: Region,
    /// All leaf solutions under the sub-root.
    pub seeds: Vec<SearchPoint>,
    pub subroot_depth: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct RoiDepths {
    lv: u32,
    k: u32,
}

/// The on-line search history tree.
#[derive(Debug, Clone)]
pub struct BspArchive {
    nodes: Vec<Node>,
    free: Vec<usize>,
    root: Option<NodeId>,
    domain: Region,
    n_points: usize,
    revisit_epsilon: f64,
    roi: Option<RoiDepths>,
}

impl BspArchive {
    pub fn new(domain: Region) -> Self {
        BspArchive {
            nodes: Vec::new(),
            free: Vec::new(),
            root: None,
            domain,
            n_points: 0,
            revisit_epsilon: 0.0,
            roi: None,
        }
    }

    /// Enables [`roi_trigger`](Self::roi_trigger): a leaf reaching depth
    /// `lv + k` suggests its depth-`lv` ancestor as a region of interest.
    pub fn with_roi_depths(mut self, lv: u32, k: u32) -> Self {
        self.roi = Some(RoiDepths { lv, k });
        self
    }

    /// Max-abs coordinate difference at or below which an insert is a revisit.
    pub fn with_revisit_epsilon(mut self, eps: f64) -> Result<Self> {
        if !(eps >= 0.0 && eps.is_finite()) {
            return Err(Error::Parameter(format!("revisit epsilon must be finite and >= 0, got {eps}")));
        }
        self.revisit_epsilon = eps;
        Ok(self)
    }

    pub fn domain(&self) -> &Region {
        &self.domain
    }

    pub fn root(&self) -> Option<NodeId> {
        self.root
    }

    /// Number of stored solutions (equal to the number of leaves).
    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn roi_depths(&self) -> Option<(u32, u32)> {
        self.roi.map(|r| (r.lv, r.k))
    }

    fn node(&self, id: NodeId) -> Result<&Node> {
        match self.nodes.get(id.0) {
            Some(n) if n.alive => Ok(n),
            _ => Err(Error::Structural(format!("node {} is not part of the archive", id.0))),
        }
    }

    pub fn contains_node(&self, id: NodeId) -> bool {
        self.node(id).is_ok()
    }

    /// Depth of a node. A lone solution sits at depth 1 under a contentless
    /// root, so a root that is itself a leaf reports depth 1.
    pub fn depth(&self, id: NodeId) -> Result<u32> {
        let n = self.node(id)?;
        Ok(if n.parent.is_none() && n.split.is_none() { 1 } else { n.depth })
    }

    pub fn is_leaf(&self, id: NodeId) -> Result<bool> {
        Ok(self.node(id)?.split.is_none())
    }

    pub fn is_blocked(&self, id: NodeId) -> Result<bool> {
        Ok(self.node(id)?.blocked)
    }

    pub fn last_touch(&self, id: NodeId) -> Result<u64> {
        Ok(self.node(id)?.last_touch)
    }

    /// Solution held by a node (the cell owner for leaves, the pre-split
    /// owner for internal nodes).
    pub fn point(&self, id: NodeId) -> Result<&SearchPoint> {
        Ok(&self.node(id)?.point)
    }

    /// `(split_dim, split_value)` of an internal node.
    pub fn split(&self, id: NodeId) -> Result<Option<(usize, f64)>> {
        Ok(self.node(id)?.split.as_ref().map(|s| (s.dim, s.value)))
    }

    /// `(below, above)` children of an internal node.
    pub fn children(&self, id: NodeId) -> Result<Option<(NodeId, NodeId)>> {
        Ok(self
            .node(id)?
            .split
            .as_ref()
            .map(|s| (s.children[0], s.children[1])))
    }

    pub fn parent(&self, id: NodeId) -> Result<Option<NodeId>> {
        Ok(self.node(id)?.parent.map(|(p, _)| p))
    }

    /// Records the evaluated fitness of a freshly inserted leaf.
    pub fn set_fitness(&mut self, leaf: NodeId, fitness: f64) -> Result<()> {
        if !fitness.is_finite() {
            return Err(Error::Input(format!("fitness must be finite, got {fitness}")));
        }
        self.node(leaf)?;
        self.nodes[leaf.0].point.fitness = fitness;
        Ok(())
    }

    fn alloc(&mut self, node: Node) -> NodeId {
        match self.free.pop() {
            Some(i) => {
                self.nodes[i] = node;
                NodeId(i)
            }
            None => {
                self.nodes.push(node);
                NodeId(self.nodes.len() - 1)
            }
        }
    }

    fn release(&mut self, id: NodeId) {
        let n = &mut self.nodes[id.0];
        n.alive = false;
        n.split = None;
        n.point.coords = Vec::new();
        self.free.push(id.0);
    }

    fn validate_coords(&self, coords: &[f64]) -> Result<()> {
        if coords.len() != self.domain.dim() {
            return Err(Error::Input(format!(
                "expected {} coordinates, got {}",
                self.domain.dim(),
                coords.len()
            )));
        }
        if let Some(v) = coords.iter().find(|v| !v.is_finite()) {
            return Err(Error::Input(format!("non-finite coordinate {v}")));
        }
        if !self.domain.contains(coords) {
            return Err(Error::DomainViolation(format!("{coords:?}")));
        }
        Ok(())
    }

    fn child_for(split: &Split, coords: &[f64]) -> NodeId {
        if coords[split.dim] < split.value {
            split.children[Side::Below as usize]
        } else {
            split.children[Side::Above as usize]
        }
    }

    /// Routes `coords` through the tree. Every node on the traversal path gets
    /// `last_touch = eval_index`, whatever the outcome.
    pub fn insert(&mut self, coords: &[f64], eval_index: u64) -> Result<InsertOutcome> {
        self.validate_coords(coords)?;
        let Some(mut id) = self.root else {
            let root = self.alloc(Node {
                parent: None,
                depth: 0,
                point: SearchPoint { coords: coords.to_vec(), fitness: f64::NAN, eval_index },
                split: None,
                blocked: false,
                last_touch: eval_index,
                alive: true,
            });
            self.root = Some(root);
            self.n_points = 1;
            return Ok(InsertOutcome::NewLeaf { leaf: root, depth: 1 });
        };

        loop {
            let node = &mut self.nodes[id.0];
            node.last_touch = eval_index;
            if node.blocked {
                return Ok(InsertOutcome::Blocked);
            }
            match &node.split {
                Some(split) => id = Self::child_for(split, coords),
                None => break,
            }
        }

        let leaf = &self.nodes[id.0];
        let mut split_dim = 0;
        let mut max_diff = -1.0;
        for (d, (a, b)) in leaf.point.coords.iter().zip(coords).enumerate() {
            let diff = (a - b).abs();
            if diff > max_diff {
                max_diff = diff;
                split_dim = d;
            }
        }
        if max_diff <= self.revisit_epsilon {
            return Ok(InsertOutcome::Revisit { leaf: id });
        }

        let old = leaf.point.clone();
        let depth = leaf.depth + 1;
        let (lo, hi) = {
            let (a, b) = (old.coords[split_dim], coords[split_dim]);
            if a < b { (a, b) } else { (b, a) }
        };
        // The midpoint of two adjacent floats may round down onto the lower
        // one; the upper one is then the only value that separates them.
        let mut split_value = 0.5 * (lo + hi);
        if split_value <= lo {
            split_value = hi;
        }

        let new_point = SearchPoint { coords: coords.to_vec(), fitness: f64::NAN, eval_index };
        let old_below = old.coords[split_dim] < split_value;
        let make = |point: SearchPoint, side: Side| Node {
            parent: Some((id, side)),
            depth,
            point,
            split: None,
            blocked: false,
            last_touch: eval_index,
            alive: true,
        };
        let (below, above, new_leaf);
        if old_below {
            below = self.alloc(make(old, Side::Below));
            above = self.alloc(make(new_point, Side::Above));
            new_leaf = above;
        } else {
            below = self.alloc(make(new_point, Side::Below));
            above = self.alloc(make(old, Side::Above));
            new_leaf = below;
        }
        self.nodes[id.0].split = Some(Split { dim: split_dim, value: split_value, children: [below, above] });
        self.n_points += 1;
        Ok(InsertOutcome::NewLeaf { leaf: new_leaf, depth })
    }

    /// Leaf whose cell contains `coords`, without touching recency metadata.
    pub fn locate(&self, coords: &[f64]) -> Result<Option<NodeId>> {
        self.validate_coords(coords)?;
        let Some(mut id) = self.root else { return Ok(None) };
        while let Some(split) = &self.nodes[id.0].split {
            id = Self::child_for(split, coords);
        }
        Ok(Some(id))
    }

    /// True when the traversal for `coords` passes through a blocked node.
    pub fn is_blocked_at(&self, coords: &[f64]) -> Result<bool> {
        self.validate_coords(coords)?;
        let Some(mut id) = self.root else { return Ok(false) };
        loop {
            let node = &self.nodes[id.0];
            if node.blocked {
                return Ok(true);
            }
            match &node.split {
                Some(split) => id = Self::child_for(split, coords),
                None => return Ok(false),
            }
        }
    }

    /// Cell of a node: the domain clipped by every ancestor split.
    pub fn region_of(&self, id: NodeId) -> Result<Region> {
        self.node(id)?;
        let mut lower = self.domain.lower.clone();
        let mut upper = self.domain.upper.clone();
        let mut cur = id;
        while let Some((parent, side)) = self.nodes[cur.0].parent {
            let split = self.nodes[parent.0]
                .split
                .as_ref()
                .expect("parent of a live node is internal");
            match side {
                Side::Below => upper[split.dim] = upper[split.dim].min(split.value),
                Side::Above => lower[split.dim] = lower[split.dim].max(split.value),
            }
            cur = parent;
        }
        Ok(Region { lower, upper })
    }

    /// Region used for adaptive mutation after a revisit: the revisited
    /// leaf's own cell.
    pub fn mutation_region(&self, revisited_leaf: NodeId) -> Result<Region> {
        if !self.is_leaf(revisited_leaf)? {
            return Err(Error::Structural(format!("node {} is not a leaf", revisited_leaf.0)));
        }
        self.region_of(revisited_leaf)
    }

    /// Checks whether `new_leaf` is deep enough to suggest a region of
    /// interest. Returns its depth-`lv` ancestor together with every leaf
    /// solution underneath when `depth(new_leaf) >= lv + k`.
    pub fn roi_trigger(&self, new_leaf: NodeId) -> Result<Option<RoiSuggestion>> {
        let Some(RoiDepths { lv, k }) = self.roi else { return Ok(None) };
        let depth = self.depth(new_leaf)?;
        if depth < lv.saturating_add(k) {
            return Ok(None);
        }
        let mut subroot = new_leaf;
        while self.nodes[subroot.0].depth > lv {
            subroot = self.nodes[subroot.0].parent.expect("non-root node has a parent").0;
        }
        let seeds = self
            .leaves_under(subroot)
            .into_iter()
            .map(|leaf| self.nodes[leaf.0].point.clone())
            .collect();
        Ok(Some(RoiSuggestion {
            subroot,
            region: self.region_of(subroot)?,
            seeds,
            subroot_depth: self.nodes[subroot.0].depth,
        }))
    }

    /// Forbids further insertion anywhere under `subroot`.
    pub fn block(&mut self, subroot: NodeId) -> Result<()> {
        self.node(subroot)?;
        self.nodes[subroot.0].blocked = true;
        Ok(())
    }

    /// Leaves in pre-order (below child before above child).
    pub fn leaves(&self) -> Vec<NodeId> {
        match self.root {
            Some(root) => self.leaves_under(root),
            None => Vec::new(),
        }
    }

    fn leaves_under(&self, start: NodeId) -> Vec<NodeId> {
        let mut out = Vec::new();
        let mut stack = vec![start];
        while let Some(id) = stack.pop() {
            match &self.nodes[id.0].split {
                Some(split) => {
                    stack.push(split.children[1]);
                    stack.push(split.children[0]);
                }
                None => out.push(id),
            }
        }
        out
    }

    pub fn max_depth(&self) -> u32 {
        self.leaves()
            .into_iter()
            .map(|l| self.depth(l).unwrap_or(0))
            .max()
            .unwrap_or(0)
    }

    /// Removes the `floor(fraction * n_leaves)` least recently touched leaves.
    /// Ties on `last_touch` go to the older stored solution. The sibling of a
    /// removed leaf takes over its parent's place and cell, so the partition
    /// keeps tiling the domain. Returns the number of leaves removed.
    pub fn prune_lru(&mut self, fraction: f64) -> Result<usize> {
        if !(fraction > 0.0 && fraction < 1.0) {
            return Err(Error::Parameter(format!("prune fraction must lie in (0, 1), got {fraction}")));
        }
        if self.root.is_none() {
            return Err(Error::Structural("cannot prune an empty archive".into()));
        }
        let mut leaves = self.leaves();
        let count = (fraction * leaves.len() as f64).floor() as usize;
        leaves.sort_by_key(|&l| {
            let n = &self.nodes[l.0];
            (n.last_touch, n.point.eval_index, l)
        });
        for &victim in &leaves[..count] {
            self.remove_leaf(victim);
        }
        Ok(count)
    }

    fn remove_leaf(&mut self, leaf: NodeId) {
        let (parent, side) = self.nodes[leaf.0]
            .parent
            .expect("pruning never removes the last leaf");
        let sibling = self.nodes[parent.0]
            .split
            .as_ref()
            .expect("parent is internal")
            .children[1 - side as usize];

        let grand = self.nodes[parent.0].parent;
        let parent_blocked = self.nodes[parent.0].blocked;
        {
            let s = &mut self.nodes[sibling.0];
            s.parent = grand;
            s.blocked |= parent_blocked;
        }
        match grand {
            Some((g, gside)) => {
                self.nodes[g.0].split.as_mut().expect("grandparent is internal").children[gside as usize] =
                    sibling;
            }
            None => self.root = Some(sibling),
        }

        let mut stack = vec![sibling];
        while let Some(id) = stack.pop() {
            let n = &mut self.nodes[id.0];
            n.depth -= 1;
            if let Some(split) = &n.split {
                stack.extend(split.children);
            }
        }

        self.release(leaf);
        self.release(parent);
        self.n_points -= 1;
    }

    /// Line-oriented pre-order dump, one node per line:
    /// `depth kind split_dim split_value blocked coords...`, with `-` for the
    /// split fields of leaves and `0`/`1` for the blocked flag.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        let Some(root) = self.root else { return out };
        let mut stack = vec![root];
        while let Some(id) = stack.pop() {
            let n = &self.nodes[id.0];
            let depth = self.depth(id).expect("live node");
            match &n.split {
                Some(s) => {
                    let _ = write!(out, "{depth} internal {} {:?} {}", s.dim, s.value, u8::from(n.blocked));
                    stack.push(s.children[1]);
                    stack.push(s.children[0]);
                }
                None => {
                    let _ = write!(out, "{depth} leaf - - {}", u8::from(n.blocked));
                }
            }
            for c in &n.point.coords {
                let _ = write!(out, " {c:?}");
            }
            out.push('\n');
        }
        out
    }
}
