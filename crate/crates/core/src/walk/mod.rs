//! The once-reinforced walk on a lazily materialized tree.
//!
//! An edge has weight `base conductance × (a if crossed else 1)`; the walk
//! jumps to a neighbour with probability proportional to the weight of the
//! connecting edge. Crossings are non-oriented and recorded on the deeper
//! endpoint of the edge.

mod excursion;
mod skeleton;

pub use excursion::{build_subtree, excursion, ExcursionOutcome, FiniteTree, SubtreeSpec};
pub use skeleton::CompressedSubtree;

use std::fmt;
use std::str::FromStr;

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::rng::StreamRng;
use crate::scalar::Scalar;
use crate::tree::{NodeStore, TreeModel, VertexId};

/// Default per-excursion step cap.
pub const DEFAULT_STEP_CAP: u64 = 100_000_000;

/// Draws an index with probability proportional to `weights`.
pub(crate) fn sample_index<T: Scalar, R: RngCore>(rng: &mut R, weights: impl Iterator<Item = T> + Clone) -> usize {
    let total = weights.clone().fold(T::zero(), |s, w| s + w);
    let u = T::lit(rng.random::<f64>()) * total;
    let mut acc = T::zero();
    let mut last = 0;
    for (i, w) in weights.enumerate() {
        acc = acc + w;
        if u < acc {
            return i;
        }
        last = i;
    }
    last
}

/// How `T(x)` excursions are drawn.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kernel {
    /// Step by step on the materialized block.
    Lattice,
    /// Segment jumps on the block skeleton; same law for the hit set.
    #[default]
    Skeleton,
}

impl Kernel {
    pub fn name(self) -> &'static str {
        match self {
            Kernel::Lattice => "lattice",
            Kernel::Skeleton => "skeleton",
        }
    }
}

impl fmt::Display for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Kernel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lattice" => Ok(Kernel::Lattice),
            "skeleton" => Ok(Kernel::Skeleton),
            _ => Err(Error::Config(format!("unknown kernel {s:?} (lattice|skeleton)"))),
        }
    }
}

/// A prepared block for repeated excursions.
#[derive(Clone, Debug)]
pub enum ExcursionSampler {
    Lattice(SubtreeSpec),
    Skeleton(CompressedSubtree),
}

impl ExcursionSampler {
    /// Block `k` of the sparse tree with parameter `d`.
    pub fn new(kernel: Kernel, d: u32, k: u32, n0: u32) -> Result<Self> {
        Ok(match kernel {
            Kernel::Lattice => ExcursionSampler::Lattice(SubtreeSpec::fresh(d, k, n0)?),
            Kernel::Skeleton => ExcursionSampler::Skeleton(CompressedSubtree::new(d, k, n0)?),
        })
    }

    pub fn target_count(&self) -> usize {
        match self {
            ExcursionSampler::Lattice(s) => s.tree().targets().count(),
            ExcursionSampler::Skeleton(c) => c.target_count(),
        }
    }

    /// One excursion; `cap` bounds lattice steps or skeleton moves.
    pub fn sample<T: Scalar, R: RngCore>(&self, a: T, rng: &mut R, cap: u64) -> Result<ExcursionOutcome> {
        match self {
            ExcursionSampler::Lattice(s) => excursion(s, a, rng, cap),
            ExcursionSampler::Skeleton(c) => c.sample(a, rng, cap),
        }
    }
}

/// Walker position, crossed-edge flags and random stream of one run.
#[derive(Clone, Debug)]
pub struct WalkState<T, R = StreamRng> {
    model: TreeModel,
    store: NodeStore,
    position: VertexId,
    a: T,
    steps: u64,
    rng: R,
    child_ratio: T,
    scratch: Vec<(VertexId, T)>,
}

impl<T: Scalar, R: RngCore> WalkState<T, R> {
    /// Fresh walk at the root with no crossed edges.
    pub fn new(model: TreeModel, a: T, rng: R) -> Result<Self> {
        if !(a > T::zero()) || !a.is_finite() {
            return domain(format!("reinforcement a = {a} must be positive"));
        }
        let mut store = NodeStore::new();
        store.expand(VertexId::ROOT, &model);
        let child_ratio = model.conductance_ratio();
        Ok(WalkState {
            model,
            store,
            position: VertexId::ROOT,
            a,
            steps: 0,
            rng,
            child_ratio,
            scratch: Vec::new(),
        })
    }

    /// Fresh walk placed at the first-child vertex of `level` with every edge
    /// between it and the root already crossed. Pre-crossing is not counted
    /// as steps.
    pub fn with_crossed_spine(model: TreeModel, a: T, rng: R, level: u64) -> Result<Self> {
        let mut w = Self::new(model, a, rng)?;
        let v = w.store.first_descendant_at_level(VertexId::ROOT, level, &w.model)?;
        w.store.mark_path_crossed(v);
        w.store.expand(v, &w.model);
        w.position = v;
        Ok(w)
    }

    pub fn model(&self) -> &TreeModel {
        &self.model
    }

    pub fn store(&self) -> &NodeStore {
        &self.store
    }

    pub fn position(&self) -> VertexId {
        self.position
    }

    pub fn level(&self) -> u64 {
        self.store.level(self.position)
    }

    pub fn a(&self) -> T {
        self.a
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn rng_mut(&mut self) -> &mut R {
        &mut self.rng
    }

    fn fill_weights(&mut self) {
        let pos = self.position;
        let (a, ratio) = (self.a, self.child_ratio);
        let reinforce = |crossed: bool| if crossed { a } else { T::one() };
        self.scratch.clear();
        if let Some(p) = self.store.parent(pos) {
            self.scratch.push((p, reinforce(self.store.parent_edge_crossed(pos))));
        }
        let children = self.store.children(pos).expect("walker sits on an expanded vertex");
        for c in children {
            self.scratch
                .push((c, ratio * reinforce(self.store.parent_edge_crossed(c))));
        }
    }

    /// Neighbours of the current position with their current edge weights.
    ///
    /// Weights are reported relative to the base conductance of the edge to
    /// the parent (a common factor, so the step law is unchanged); this keeps
    /// them representable arbitrarily deep in decaying weighted trees.
    pub fn transition_weights(&mut self) -> Vec<(VertexId, T)> {
        self.fill_weights();
        self.scratch.clone()
    }

    /// One step of the walk; returns the new position.
    pub fn step(&mut self) -> VertexId {
        self.fill_weights();
        let i = sample_index(&mut self.rng, self.scratch.iter().map(|&(_, w)| w));
        let next = self.scratch[i].0;
        if self.store.parent(self.position) == Some(next) {
            self.store.mark_parent_edge_crossed(self.position);
        } else {
            self.store.mark_parent_edge_crossed(next);
        }
        self.steps += 1;
        self.store.expand(next, &self.model);
        self.position = next;
        next
    }

    /// Steps until a condition fires. Conditions are checked after every
    /// step (never at the starting position); `StepBudget` counts the steps
    /// taken within this call.
    pub fn run_until(&mut self, stop: &StoppingCondition) -> Result<RunOutcome> {
        stop.validate()?;
        let start = self.steps;
        loop {
            self.step();
            if let Some(trigger) = stop.fired(&self.store, self.position, self.steps - start) {
                return Ok(RunOutcome {
                    trigger,
                    position: self.position,
                    steps: self.steps - start,
                });
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum StoppingCondition {
    HitVertex(Vec<VertexId>),
    /// First visit to any vertex at this level.
    HitLevel(u64),
    ReturnToRoot,
    StepBudget(u64),
    /// Fires with the first member (in list order) that fires.
    FirstOf(Vec<StoppingCondition>),
}

impl StoppingCondition {
    pub fn validate(&self) -> Result<()> {
        match self {
            StoppingCondition::HitVertex(v) if v.is_empty() => domain("empty target set"),
            StoppingCondition::StepBudget(0) => domain("step budget must be positive"),
            StoppingCondition::FirstOf(list) => {
                if list.is_empty() {
                    return domain("empty condition list");
                }
                list.iter().try_for_each(StoppingCondition::validate)
            }
            _ => Ok(()),
        }
    }

    fn fired(&self, store: &NodeStore, pos: VertexId, steps: u64) -> Option<Trigger> {
        match self {
            StoppingCondition::HitVertex(targets) => targets.contains(&pos).then_some(Trigger::HitVertex(pos)),
            StoppingCondition::HitLevel(l) => (store.level(pos) == *l).then_some(Trigger::HitLevel(*l)),
            StoppingCondition::ReturnToRoot => (pos == VertexId::ROOT).then_some(Trigger::ReturnToRoot),
            StoppingCondition::StepBudget(b) => (steps >= *b).then_some(Trigger::StepBudget),
            StoppingCondition::FirstOf(list) => list.iter().find_map(|c| c.fired(store, pos, steps)),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Trigger {
    HitVertex(VertexId),
    HitLevel(u64),
    ReturnToRoot,
    StepBudget,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RunOutcome {
    pub trigger: Trigger,
    pub position: VertexId,
    pub steps: u64,
}
