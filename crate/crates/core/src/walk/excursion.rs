//! The finite block `T(x)` and the reflected excursion walk on it.
//!
//! For `x` at level `2^(k n0)` of the sparse tree, `T(x)` is the union of the
//! paths from `x_-1` (the ancestor of `x` at level `2^(k n0 - 1)`) down to the
//! `d^n0` descendants `x_i` of `x` at level `2^((k+1) n0)`. Reflection at the
//! `x_i` comes for free from truncation: a boundary vertex keeps only its
//! parent as neighbour.

use rand::RngCore;

use super::sample_index;
use crate::error::{domain, Error, Result};
use crate::scalar::Scalar;
use crate::tree::{NodeStore, TreeModel, VertexId};

const NO_SLOT: u32 = u32::MAX;
/// Materializing `T(x)` beyond this many vertices is refused.
const MAX_SUBTREE_VERTICES: u64 = 1 << 24;

/// A finite rooted tree with unit conductances and local indices.
///
/// Local vertex 0 is `x_-1`; the path down to `x` follows, then the subtree
/// below `x` in breadth-first order.
#[derive(Clone, Debug)]
pub struct FiniteTree {
    parent: Vec<u32>,
    child_start: Vec<u32>,
    child_list: Vec<u32>,
    target_slot: Vec<u32>,
    targets: Vec<u32>,
    center: u32,
}

impl FiniteTree {
    pub fn len(&self) -> usize {
        self.parent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parent.is_empty()
    }

    /// Local index of `x_-1`.
    pub fn lower(&self) -> usize {
        0
    }

    /// Local index of `x`.
    pub fn center(&self) -> usize {
        self.center as usize
    }

    /// Local indices of the upper boundary `x_1, ..., x_{d^n0}`.
    pub fn targets(&self) -> impl Iterator<Item = usize> + '_ {
        self.targets.iter().map(|&t| t as usize)
    }

    pub fn parent(&self, v: usize) -> Option<usize> {
        let p = self.parent[v];
        (p != NO_SLOT).then_some(p as usize)
    }

    pub fn children(&self, v: usize) -> impl Iterator<Item = usize> + Clone + '_ {
        let (s, e) = (self.child_start[v] as usize, self.child_start[v + 1] as usize);
        self.child_list[s..e].iter().map(|&c| c as usize)
    }

    pub fn neighbors(&self, v: usize) -> impl Iterator<Item = usize> + '_ {
        self.parent(v).into_iter().chain(self.children(v))
    }

    /// Vertices on the `x_-1` to `x` path, `x_-1` excluded (the deeper
    /// endpoints of the pre-reinforced edges).
    pub fn spine(&self) -> impl Iterator<Item = usize> {
        1..=self.center as usize
    }

    pub fn target_index(&self, v: usize) -> Option<usize> {
        let s = self.target_slot[v];
        (s != NO_SLOT).then_some(s as usize)
    }
}

/// The block `T(x)` with its boundary, materialized in a [`NodeStore`].
#[derive(Clone, Debug)]
pub struct SubtreeSpec {
    pub x: VertexId,
    pub lower: VertexId,
    pub upper: Vec<VertexId>,
    pub k: u32,
    pub n0: u32,
    pub d: u32,
    tree: FiniteTree,
}

impl SubtreeSpec {
    pub fn tree(&self) -> &FiniteTree {
        &self.tree
    }

    /// Builds `T(x)` for the first-child vertex `x` at level `2^(k n0)` of a
    /// fresh sparse tree.
    pub fn fresh(d: u32, k: u32, n0: u32) -> Result<Self> {
        let model = TreeModel::sparse(d)?;
        let (center, lower_level, upper_level) = block_levels(k, n0)?;
        check_block_size(&model, n0, center, lower_level, upper_level)?;
        let mut store = NodeStore::new();
        let x = store.first_descendant_at_level(VertexId::ROOT, center, &model)?;
        build_subtree(&mut store, x, k, n0, &model)
    }
}

/// `(level(x), level(x_-1), level(x_i))` for block `k`.
pub(crate) fn block_levels(k: u32, n0: u32) -> Result<(u64, u64, u64)> {
    if k == 0 || n0 == 0 {
        return domain("k and n0 must be positive");
    }
    let (kn, top) = (u64::from(k) * u64::from(n0), (u64::from(k) + 1) * u64::from(n0));
    if top > 62 {
        return Err(Error::Overflow(format!("level 2^{top} exceeds 64 bits")));
    }
    Ok((1 << kn, 1 << (kn - 1), 1 << top))
}

/// Returns `d^n0` after checking that `T(x)` is small enough to materialize.
fn check_block_size(model: &TreeModel, n0: u32, center: u64, lower: u64, upper: u64) -> Result<u64> {
    let leaves = model.level_population(n0)?;
    let approx = leaves.saturating_mul(upper - center).saturating_add(center - lower);
    if approx > MAX_SUBTREE_VERTICES {
        return domain(format!("T(x) has about {approx} vertices; use the compressed sampler"));
    }
    Ok(leaves)
}

/// Materializes `T(x)` in `store` and returns its description.
pub fn build_subtree(store: &mut NodeStore, x: VertexId, k: u32, n0: u32, model: &TreeModel) -> Result<SubtreeSpec> {
    let d = match *model {
        TreeModel::Sparse { d } => d,
        _ => return domain("T(x) is defined on the sparse tree"),
    };
    let (center, lower_level, upper_level) = block_levels(k, n0)?;
    if store.level(x) != center {
        return domain(format!(
            "x at level {} but block {k} with n0 = {n0} needs level {center}",
            store.level(x)
        ));
    }
    let leaves = check_block_size(model, n0, center, lower_level, upper_level)?;
    let lower = store.ancestor_at_level(x, lower_level)?;
    let upper = store.descendants_at_level(x, upper_level, model)?;
    debug_assert_eq!(upper.len() as u64, leaves);

    // local numbering: spine from lower to x, then BFS below x
    let mut order = Vec::new();
    let mut cur = x;
    while cur != lower {
        order.push(cur);
        cur = store.parent(cur).expect("lower is an ancestor of x");
    }
    order.push(lower);
    order.reverse();
    let center_local = order.len() - 1;
    let mut head = center_local;
    while head < order.len() {
        let v = order[head];
        if store.level(v) < upper_level {
            order.extend(store.children(v).expect("expanded by descendants_at_level"));
        }
        head += 1;
    }
    let n = order.len();
    let mut local = std::collections::HashMap::with_capacity(n);
    for (i, &v) in order.iter().enumerate() {
        local.insert(v, i as u32);
    }
    let mut parent = vec![NO_SLOT; n];
    let mut child_start = Vec::with_capacity(n + 1);
    let mut child_list = Vec::new();
    for (i, &v) in order.iter().enumerate() {
        if i > 0 {
            parent[i] = local[&store.parent(v).unwrap()];
        }
        child_start.push(child_list.len() as u32);
        if i < center_local {
            child_list.push(i as u32 + 1);
        } else if store.level(v) < upper_level {
            child_list.extend(store.children(v).unwrap().map(|c| local[&c]));
        }
    }
    child_start.push(child_list.len() as u32);
    let mut target_slot = vec![NO_SLOT; n];
    let targets: Vec<u32> = upper.iter().map(|v| local[v]).collect();
    for (slot, &t) in targets.iter().enumerate() {
        target_slot[t as usize] = slot as u32;
    }
    let tree = FiniteTree {
        parent,
        child_start,
        child_list,
        target_slot,
        targets,
        center: center_local as u32,
    };
    Ok(SubtreeSpec {
        x,
        lower,
        upper,
        k,
        n0,
        d,
        tree,
    })
}

/// Result of one reflected excursion.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExcursionOutcome {
    /// Distinct upper-boundary vertices visited before absorption at `x_-1`.
    pub z: u32,
    /// Indices (into the upper boundary) of the visited targets, in order of
    /// first visit.
    pub hit_set: Vec<u32>,
    /// Lattice steps for [`excursion`]; skeleton moves for the compressed
    /// sampler.
    pub steps: u64,
    /// The step cap was reached before absorption.
    pub truncated: bool,
}

/// Runs the once-reinforced walk on `T(x)` from `x`, with the `x_-1`–`x`
/// path pre-reinforced, until its first visit to `x_-1` or `step_cap` steps.
pub fn excursion<T: Scalar, R: RngCore>(
    spec: &SubtreeSpec,
    a: T,
    rng: &mut R,
    step_cap: u64,
) -> Result<ExcursionOutcome> {
    run_on_tree(&spec.tree, a, rng, step_cap)
}

pub(crate) fn run_on_tree<T: Scalar, R: RngCore>(
    tree: &FiniteTree,
    a: T,
    rng: &mut R,
    step_cap: u64,
) -> Result<ExcursionOutcome> {
    if !(a > T::zero()) || !a.is_finite() {
        return domain(format!("reinforcement a = {a} must be positive"));
    }
    let mut crossed = vec![false; tree.len()];
    for v in tree.spine() {
        crossed[v] = true;
    }
    let mut hit = vec![false; tree.targets.len()];
    let mut hit_set = Vec::new();
    let mut pos = tree.center();
    let mut steps = 0u64;
    let weight = |c: bool| if c { a } else { T::one() };
    while steps < step_cap {
        let parent = tree.parent(pos).expect("walk never rests on x_-1");
        let children = tree.children(pos);
        let ws = std::iter::once(weight(crossed[pos])).chain(children.clone().map(|c| weight(crossed[c])));
        let i = sample_index(rng, ws);
        let next = if i == 0 {
            parent
        } else {
            children.clone().nth(i - 1).unwrap()
        };
        if i == 0 {
            crossed[pos] = true;
        } else {
            crossed[next] = true;
        }
        steps += 1;
        pos = next;
        if pos == tree.lower() {
            return Ok(ExcursionOutcome {
                z: hit_set.len() as u32,
                hit_set,
                steps,
                truncated: false,
            });
        }
        if let Some(slot) = tree.target_index(pos) {
            if !hit[slot] {
                hit[slot] = true;
                hit_set.push(slot as u32);
            }
        }
    }
    Ok(ExcursionOutcome {
        z: hit_set.len() as u32,
        hit_set,
        steps,
        truncated: true,
    })
}
