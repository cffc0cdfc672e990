//! Infinite tree models and the lazily materialized node store.
//!
//! Three models are supported:
//!
//! * `sparse:<d>`: the rarely splitting tree. Vertices at levels `1, 2, 4, 8, ...`
//!   have `d` children, every other vertex (the root included) has one.
//! * `weighted:<arity>:<p/q>`: the regular `arity`-ary tree whose edge with
//!   deeper endpoint at level `L` has conductance `(p/q)^L`.
//! * `halfline`: the integer half-line.
//!
//! Edges are identified with their deeper endpoint, so the "crossed" state of
//! the walk is a single flag per vertex.

use std::fmt;
use std::str::FromStr;

use num_bigint::BigUint;
use num_rational::Ratio;
use num_traits::{One, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{domain, Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum TreeModel {
    Sparse { d: u32 },
    WeightedKAry { arity: u32, decay: Ratio<u64> },
    HalfLine,
}

impl TreeModel {
    pub fn sparse(d: u32) -> Result<Self> {
        if d == 0 {
            return Err(Error::Config("sparse tree needs d >= 1".into()));
        }
        Ok(TreeModel::Sparse { d })
    }

    pub fn weighted(arity: u32, decay: Ratio<u64>) -> Result<Self> {
        if arity < 2 {
            return Err(Error::Config("weighted tree needs arity >= 2".into()));
        }
        if decay.is_zero() || decay >= Ratio::one() {
            return Err(Error::Config(format!("decay {decay} not in (0, 1)")));
        }
        Ok(TreeModel::WeightedKAry { arity, decay })
    }

    /// The weighted ternary tree with conductance `2^-L`.
    pub fn ternary_halving() -> Self {
        TreeModel::WeightedKAry {
            arity: 3,
            decay: Ratio::new(1, 2),
        }
    }

    /// Number of children of any vertex at `level`.
    pub fn child_count(&self, level: u64) -> u32 {
        match *self {
            TreeModel::Sparse { d } => {
                if level.is_power_of_two() {
                    d
                } else {
                    1
                }
            }
            TreeModel::WeightedKAry { arity, .. } => arity,
            TreeModel::HalfLine => 1,
        }
    }

    /// Conductance of the edge whose deeper endpoint sits at `child_level`.
    pub fn base_conductance<T: Scalar>(&self, child_level: u64) -> Result<T> {
        if child_level == 0 {
            return domain("the root is not the deeper endpoint of any edge");
        }
        Ok(match self {
            TreeModel::Sparse { .. } | TreeModel::HalfLine => T::one(),
            TreeModel::WeightedKAry { decay, .. } => {
                let base = T::from_u64(*decay.numer()).unwrap() / T::from_u64(*decay.denom()).unwrap();
                match i32::try_from(child_level) {
                    Ok(e) => base.powi(e),
                    Err(_) => T::zero(),
                }
            }
        })
    }

    /// Exact rational conductance of the edge whose deeper endpoint sits at
    /// `child_level`.
    pub fn base_conductance_exact(&self, child_level: u64) -> Result<Ratio<BigUint>> {
        if child_level == 0 {
            return domain("the root is not the deeper endpoint of any edge");
        }
        Ok(match self {
            TreeModel::Sparse { .. } | TreeModel::HalfLine => Ratio::one(),
            TreeModel::WeightedKAry { decay, .. } => {
                let e = usize::try_from(child_level).map_err(|_| Error::Overflow(format!("exponent {child_level}")))?;
                let num = num_traits::pow(BigUint::from(*decay.numer()), e);
                let den = num_traits::pow(BigUint::from(*decay.denom()), e);
                Ratio::new(num, den)
            }
        })
    }

    /// Ratio between the conductance of a child edge and that of the parent
    /// edge at the same vertex. Constant in the level for every model.
    pub fn conductance_ratio<T: Scalar>(&self) -> T {
        match self {
            TreeModel::Sparse { .. } | TreeModel::HalfLine => T::one(),
            TreeModel::WeightedKAry { decay, .. } => {
                T::from_u64(*decay.numer()).unwrap() / T::from_u64(*decay.denom()).unwrap()
            }
        }
    }

    /// `|L_{2^m}| = d^m` for the sparse tree.
    pub fn level_population(&self, m: u32) -> Result<u64> {
        match *self {
            TreeModel::Sparse { d } => u64::from(d)
                .checked_pow(m)
                .ok_or_else(|| Error::Overflow(format!("{d}^{m} vertices at level 2^{m}"))),
            TreeModel::HalfLine => Ok(1),
            TreeModel::WeightedKAry { .. } => domain("level_population is defined for sparse trees"),
        }
    }

    /// Branching parameter `d` (1 for the half-line).
    pub fn sparse_d(&self) -> Option<u32> {
        match *self {
            TreeModel::Sparse { d } => Some(d),
            TreeModel::HalfLine => Some(1),
            TreeModel::WeightedKAry { .. } => None,
        }
    }
}

impl fmt::Display for TreeModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TreeModel::Sparse { d } => write!(f, "sparse:{d}"),
            TreeModel::WeightedKAry { arity, decay } => {
                write!(f, "weighted:{arity}:{}/{}", decay.numer(), decay.denom())
            }
            TreeModel::HalfLine => f.write_str("halfline"),
        }
    }
}

impl FromStr for TreeModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("bad model designation {s:?}"));
        let parts: Vec<&str> = s.trim().split(':').collect();
        match parts.as_slice() {
            ["halfline"] => Ok(TreeModel::HalfLine),
            ["sparse", d] => TreeModel::sparse(d.parse().map_err(|_| bad())?),
            ["weighted", arity, decay] => {
                let arity = arity.parse().map_err(|_| bad())?;
                let decay = match decay.split_once('/') {
                    Some((p, q)) => {
                        let p: u64 = p.parse().map_err(|_| bad())?;
                        let q: u64 = q.parse().map_err(|_| bad())?;
                        if q == 0 {
                            return Err(bad());
                        }
                        Ratio::new(p, q)
                    }
                    None => return Err(bad()),
                };
                TreeModel::weighted(arity, decay)
            }
            _ => Err(bad()),
        }
    }
}

impl Serialize for TreeModel {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for TreeModel {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Dense index into a [`NodeStore`]. Id 0 is the root.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VertexId(u32);

impl VertexId {
    pub const ROOT: VertexId = VertexId(0);

    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for VertexId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "v{}", self.0)
    }
}

const NONE: u32 = u32::MAX;

#[derive(Clone, Debug)]
struct Node {
    level: u64,
    parent: u32,
    first_child: u32,
    child_count: u32,
    parent_edge_crossed: bool,
}

/// Children of an expanded vertex. Siblings are contiguous in the store.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Children {
    next: u32,
    end: u32,
}

impl Children {
    pub fn get(&self, i: usize) -> Option<VertexId> {
        let id = self.next as usize + i;
        (id < self.end as usize).then_some(VertexId(id as u32))
    }
}

impl Iterator for Children {
    type Item = VertexId;

    fn next(&mut self) -> Option<VertexId> {
        (self.next < self.end).then(|| {
            self.next += 1;
            VertexId(self.next - 1)
        })
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let n = (self.end - self.next) as usize;
        (n, Some(n))
    }
}

impl ExactSizeIterator for Children {}

/// Append-only arena of materialized vertices.
#[derive(Clone, Debug)]
pub struct NodeStore {
    nodes: Vec<Node>,
}

impl Default for NodeStore {
    fn default() -> Self {
        Self::new()
    }
}

impl NodeStore {
    /// A store holding only the (unexpanded) root.
    pub fn new() -> Self {
        NodeStore {
            nodes: vec![Node {
                level: 0,
                parent: NONE,
                first_child: NONE,
                child_count: 0,
                parent_edge_crossed: false,
            }],
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, v: VertexId) -> bool {
        v.index() < self.nodes.len()
    }

    pub fn level(&self, v: VertexId) -> u64 {
        self.nodes[v.index()].level
    }

    pub fn parent(&self, v: VertexId) -> Option<VertexId> {
        let p = self.nodes[v.index()].parent;
        (p != NONE).then_some(VertexId(p))
    }

    pub fn is_expanded(&self, v: VertexId) -> bool {
        self.nodes[v.index()].first_child != NONE
    }

    /// Children of `v`, or `None` while `v` is unexpanded.
    pub fn children(&self, v: VertexId) -> Option<Children> {
        let n = &self.nodes[v.index()];
        (n.first_child != NONE).then(|| Children {
            next: n.first_child,
            end: n.first_child + n.child_count,
        })
    }

    /// Materializes the children of `v` on first call; later calls return
    /// the same children.
    ///
    /// Panics if the arena would exceed `u32::MAX - 1` vertices.
    pub fn expand(&mut self, v: VertexId, model: &TreeModel) -> Children {
        if let Some(c) = self.children(v) {
            return c;
        }
        let level = self.level(v);
        let count = model.child_count(level);
        let first = self.nodes.len();
        assert!(
            first + (count as usize) < NONE as usize,
            "node store exhausted the u32 id space"
        );
        self.nodes.extend((0..count).map(|_| Node {
            level: level + 1,
            parent: v.0,
            first_child: NONE,
            child_count: 0,
            parent_edge_crossed: false,
        }));
        let node = &mut self.nodes[v.index()];
        node.first_child = first as u32;
        node.child_count = count;
        Children {
            next: first as u32,
            end: first as u32 + count,
        }
    }

    pub fn parent_edge_crossed(&self, v: VertexId) -> bool {
        self.nodes[v.index()].parent_edge_crossed
    }

    /// Marks the edge between `v` and its parent as crossed. No-op on the
    /// root. Flags are never cleared.
    pub fn mark_parent_edge_crossed(&mut self, v: VertexId) {
        if v != VertexId::ROOT {
            self.nodes[v.index()].parent_edge_crossed = true;
        }
    }

    /// Marks every edge on the root-to-`v` path as crossed.
    pub fn mark_path_crossed(&mut self, v: VertexId) {
        let mut cur = v;
        while let Some(p) = self.parent(cur) {
            self.nodes[cur.index()].parent_edge_crossed = true;
            cur = p;
        }
    }

    pub fn crossed_edge_count(&self) -> usize {
        self.nodes.iter().filter(|n| n.parent_edge_crossed).count()
    }

    /// The vertex at `target_level` on the root-to-`v` path.
    pub fn ancestor_at_level(&self, v: VertexId, target_level: u64) -> Result<VertexId> {
        let level = self.level(v);
        if target_level > level {
            return domain(format!("ancestor level {target_level} exceeds vertex level {level}"));
        }
        let mut cur = v;
        for _ in target_level..level {
            cur = VertexId(self.nodes[cur.index()].parent);
        }
        Ok(cur)
    }

    /// Follows first children from `v` down to `level`, expanding as needed.
    pub fn first_descendant_at_level(&mut self, v: VertexId, level: u64, model: &TreeModel) -> Result<VertexId> {
        if level < self.level(v) {
            return domain(format!("level {level} lies above {v}"));
        }
        let mut cur = v;
        while self.level(cur) < level {
            cur = self.expand(cur, model).next().expect("every vertex has a child");
        }
        Ok(cur)
    }

    /// Expands the whole subtree below `v` down to `level` and returns the
    /// descendants of `v` at that level, in store order.
    pub fn descendants_at_level(&mut self, v: VertexId, level: u64, model: &TreeModel) -> Result<Vec<VertexId>> {
        if level < self.level(v) {
            return domain(format!("level {level} lies above {v}"));
        }
        let mut frontier = vec![v];
        for _ in self.level(v)..level {
            let mut next = Vec::with_capacity(frontier.len());
            for &u in &frontier {
                next.extend(self.expand(u, model));
            }
            frontier = next;
        }
        Ok(frontier)
    }
}
