//! Replicated Monte Carlo estimators checked against the closed forms.
//!
//! Replica `i` of a run with master seed `s` draws from `rng::stream(s, i)`
//! (sub-experiments mix a salt into `s` first). Replicas run on the current
//! rayon pool and are collected in index order, so output never depends on
//! scheduling.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytic::{self, IndexConvention};
use crate::branching::{self, BranchingConfig};
use crate::error::{domain, Result};
use crate::rng::{mix64, stream, StreamRng};
use crate::stats::{z_score, Proportion, Quartiles, Tally};
use crate::tree::{TreeModel, VertexId};
use crate::walk::{ExcursionSampler, Kernel, StoppingCondition, Trigger, WalkState, DEFAULT_STEP_CAP};

/// z used for reported Wilson intervals.
pub const INTERVAL_Z: f64 = 1.96;

/// A parameter value attached to a record.
#[derive(Clone, Debug, PartialEq)]
pub enum Value {
    Int(i64),
    Real(f64),
    Text(String),
}

impl From<u64> for Value {
    fn from(v: u64) -> Self {
        Value::Int(v as i64)
    }
}

impl From<u32> for Value {
    fn from(v: u32) -> Self {
        Value::Int(v.into())
    }
}

impl From<f64> for Value {
    fn from(v: f64) -> Self {
        Value::Real(v)
    }
}

impl From<&str> for Value {
    fn from(v: &str) -> Self {
        Value::Text(v.to_owned())
    }
}

impl From<String> for Value {
    fn from(v: String) -> Self {
        Value::Text(v)
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(v) => write!(f, "{v}"),
            Value::Real(v) => write!(f, "{}", crate::output::fmt_real(*v)),
            Value::Text(v) => f.write_str(v),
        }
    }
}

/// One estimate with its uncertainty and, when known, the exact value it
/// should match or respect.
#[derive(Clone, Debug, PartialEq)]
pub struct EstimateRecord {
    pub experiment: String,
    pub params: Vec<(String, Value)>,
    pub estimate: f64,
    pub stderr: Option<f64>,
    /// Completed replicas behind the estimate.
    pub n: u64,
    pub reference: Option<f64>,
    pub z: Option<f64>,
    /// Replicas cut off by a step budget; excluded from `estimate`.
    pub truncated: u64,
    /// Wilson score interval for frequency estimates.
    pub interval: Option<(f64, f64)>,
}

impl EstimateRecord {
    pub fn new(experiment: impl Into<String>, estimate: f64, n: u64) -> Self {
        EstimateRecord {
            experiment: experiment.into(),
            params: Vec::new(),
            estimate,
            stderr: None,
            n,
            reference: None,
            z: None,
            truncated: 0,
            interval: None,
        }
    }

    /// Frequency estimate with binomial error and Wilson interval.
    pub fn frequency(experiment: impl Into<String>, p: Proportion) -> Self {
        let mut r = Self::new(experiment, p.estimate(), p.n);
        r.stderr = Some(p.stderr());
        r.interval = Some(p.wilson(INTERVAL_Z));
        r
    }

    /// Sample mean with its standard error.
    pub fn mean(experiment: impl Into<String>, t: &Tally) -> Self {
        let mut r = Self::new(experiment, t.mean(), t.n);
        r.stderr = Some(t.stderr());
        r
    }

    pub fn param(mut self, name: &str, value: impl Into<Value>) -> Self {
        self.params.push((name.to_owned(), value.into()));
        self
    }

    /// Sets the reference and the z-score against it.
    pub fn against(mut self, reference: Option<f64>) -> Self {
        self.reference = reference;
        self.z = reference.map(|r| z_score(self.estimate, r, self.stderr.unwrap_or(0.0)));
        self
    }

    pub fn truncated(mut self, count: u64) -> Self {
        self.truncated = count;
        self
    }

    pub fn get(&self, name: &str) -> Option<&Value> {
        self.params.iter().find(|(n, _)| n == name).map(|(_, v)| v)
    }
}

/// Which estimator to run, with its own parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Experiment {
    Escape { m: u64, big_m: u64 },
    Excursion { d: u32, k: u32, n0: u32, kernel: Kernel },
    Probe { model: TreeModel, k: u32, levels: u32 },
    Sweep { model: TreeModel, a_grid: Vec<f64> },
    Branching(BranchingConfig),
}

/// Everything that determines the records of a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub experiment: Experiment,
    /// Reinforcement; ignored by the sweep, which uses its grid.
    pub a: f64,
    pub replicas: u64,
    /// Per-replica step budget (excursion: step cap).
    pub budget: u64,
    pub seed: u64,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.replicas == 0 {
            return domain("replicas must be at least 1");
        }
        if self.budget == 0 {
            return domain("budget must be positive");
        }
        Ok(())
    }
}

/// Runs the configured experiment on the current rayon pool.
pub fn run(config: &RunConfig) -> Result<Vec<EstimateRecord>> {
    config.validate()?;
    let RunConfig {
        a,
        replicas,
        budget,
        seed,
        ..
    } = *config;
    match &config.experiment {
        Experiment::Escape { m, big_m } => Ok(vec![halfline_escape(*m, *big_m, a, replicas, seed, budget)?]),
        Experiment::Excursion { d, k, n0, kernel } => {
            Ok(excursion_stats(*d, *k, *n0, a, replicas, seed, *kernel, budget)?.records())
        }
        Experiment::Probe { model, k, levels } => {
            Ok(vec![root_return_probe(model, a, *k, *levels, replicas, budget, seed)?])
        }
        Experiment::Sweep { model, a_grid } => {
            let rows = phase_sweep(model, a_grid, budget, replicas, seed)?;
            Ok(rows.iter().flat_map(|r| r.records(model, budget)).collect())
        }
        Experiment::Branching(cfg) => {
            let mut cfg = cfg.clone();
            cfg.a = a;
            Ok(branching::survival_estimate(&cfg, replicas, seed)?.records())
        }
    }
}

/// Results of `f(i, rng_i)` for `i < replicas`, in index order.
pub fn replicate<O, F>(replicas: u64, seed: u64, f: F) -> Result<Vec<O>>
where
    O: Send,
    F: Fn(u64, &mut StreamRng) -> Result<O> + Sync,
{
    (0..replicas)
        .into_par_iter()
        .map(|i| f(i, &mut stream(seed, i)))
        .collect()
}

/// Frequency of reaching `big_m` before 0 on the half-line, starting at `m`
/// with the edges below `m` already crossed.
pub fn halfline_escape(m: u64, big_m: u64, a: f64, replicas: u64, seed: u64, budget: u64) -> Result<EstimateRecord> {
    if m < 1 || m >= big_m {
        return domain(format!("need 1 <= m < M, got m={m}, M={big_m}"));
    }
    let stop = StoppingCondition::FirstOf(vec![
        StoppingCondition::HitLevel(big_m),
        StoppingCondition::ReturnToRoot,
        StoppingCondition::StepBudget(budget),
    ]);
    let outcomes = replicate(replicas, seed, |_, rng| {
        let mut w = WalkState::with_crossed_spine(TreeModel::HalfLine, a, rng.clone(), m)?;
        Ok(w.run_until(&stop)?.trigger)
    })?;
    let escaped = outcomes.iter().filter(|t| matches!(t, Trigger::HitLevel(_))).count() as u64;
    let truncated = outcomes.iter().filter(|t| **t == Trigger::StepBudget).count() as u64;
    let reference = analytic::escape_product(m, big_m, a)?;
    Ok(
        EstimateRecord::frequency("escape", Proportion::new(escaped, replicas - truncated))
            .param("m", m)
            .param("M", big_m)
            .param("a", a)
            .against(Some(reference))
            .truncated(truncated),
    )
}

/// Summary of `T(x)` excursions.
#[derive(Clone, Debug)]
pub struct ExcursionStats {
    pub d: u32,
    pub k: u32,
    pub n0: u32,
    pub a: f64,
    pub kernel: Kernel,
    /// Hits of the leftmost target.
    pub target_hit: Proportion,
    pub z: Tally,
    pub z_sq: Tally,
    pub truncated: u64,
}

impl ExcursionStats {
    /// Target-hit frequency, `E[Z]` under both index conventions and `E[Z^2]`
    /// against its cap.
    pub fn records(&self) -> Vec<EstimateRecord> {
        let (d, k, n0, a) = (self.d, self.k, self.n0, self.a);
        let with_params = |r: EstimateRecord| {
            r.param("d", d)
                .param("k", k)
                .param("n0", n0)
                .param("a", a)
                .param("kernel", self.kernel.name())
        };
        let hit_reference = analytic::escape_range(k, n0, IndexConvention::GraphDistance)
            .and_then(|(m, big_m)| analytic::escape_product(m, big_m, a))
            .ok();
        let mut out = vec![
            with_params(EstimateRecord::frequency("excursion.target_hit", self.target_hit))
                .param("convention", IndexConvention::GraphDistance.name())
                .against(hit_reference)
                .truncated(self.truncated),
        ];
        for conv in [IndexConvention::GraphDistance, IndexConvention::LevelPowers] {
            let reference = analytic::offspring_mean(k, n0, a, d, conv).ok();
            out.push(
                with_params(EstimateRecord::mean("excursion.mean_z", &self.z))
                    .param("convention", conv.name())
                    .against(reference)
                    .truncated(self.truncated),
            );
        }
        out.push(
            with_params(EstimateRecord::mean("excursion.second_moment_z", &self.z_sq))
                .param("convention", "cap")
                .against(Some(analytic::offspring_second_moment_cap(n0, d)))
                .truncated(self.truncated),
        );
        out
    }
}

/// Excursions of the walk on `T(x)` for block `k`; `cap` bounds each one.
#[allow(clippy::too_many_arguments)]
pub fn excursion_stats(
    d: u32,
    k: u32,
    n0: u32,
    a: f64,
    replicas: u64,
    seed: u64,
    kernel: Kernel,
    cap: u64,
) -> Result<ExcursionStats> {
    let sampler = ExcursionSampler::new(kernel, d, k, n0)?;
    let outcomes = replicate(replicas, seed, |_, rng| sampler.sample(a, rng, cap))?;
    let mut stats = ExcursionStats {
        d,
        k,
        n0,
        a,
        kernel,
        target_hit: Proportion::default(),
        z: Tally::default(),
        z_sq: Tally::default(),
        truncated: 0,
    };
    let mut hits = 0;
    for o in &outcomes {
        if o.truncated {
            stats.truncated += 1;
            continue;
        }
        hits += u64::from(o.hit_set.contains(&0));
        let z = f64::from(o.z);
        stats.z.push(z);
        stats.z_sq.push(z * z);
    }
    stats.target_hit = Proportion::new(hits, stats.z.n);
    Ok(stats)
}

/// From a fresh walk run to level `2^k`, the frequency of reaching level
/// `2^(k+levels)` before the next visit to the root. `budget` caps the steps
/// of each replica over both phases.
pub fn root_return_probe(
    model: &TreeModel,
    a: f64,
    k: u32,
    levels: u32,
    replicas: u64,
    budget: u64,
    seed: u64,
) -> Result<EstimateRecord> {
    let top = u64::from(k) + u64::from(levels);
    if top > 62 {
        return domain(format!("level 2^{top} is out of range"));
    }
    let (start, target) = (1u64 << k, 1u64 << top);
    let outcomes = replicate(replicas, seed, |_, rng| {
        let mut w = WalkState::new(model.clone(), a, rng.clone())?;
        let first = StoppingCondition::FirstOf(vec![
            StoppingCondition::HitLevel(start),
            StoppingCondition::StepBudget(budget),
        ]);
        if w.run_until(&first)?.trigger == Trigger::StepBudget {
            return Ok(Trigger::StepBudget);
        }
        let remaining = budget - w.steps();
        if remaining == 0 {
            return Ok(Trigger::StepBudget);
        }
        let second = StoppingCondition::FirstOf(vec![
            StoppingCondition::HitLevel(target),
            StoppingCondition::ReturnToRoot,
            StoppingCondition::StepBudget(remaining),
        ]);
        Ok(w.run_until(&second)?.trigger)
    })?;
    let escaped = outcomes.iter().filter(|t| matches!(t, Trigger::HitLevel(_))).count() as u64;
    let truncated = outcomes.iter().filter(|t| **t == Trigger::StepBudget).count() as u64;
    let reference = match model.sparse_d() {
        Some(d) => analytic::escape_bound(k, levels, a, d).ok(),
        None => None,
    };
    Ok(
        EstimateRecord::frequency("probe", Proportion::new(escaped, replicas - truncated))
            .param("model", model.to_string())
            .param("a", a)
            .param("k", k)
            .param("n_levels", levels)
            .param("budget", budget)
            .against(reference)
            .truncated(truncated),
    )
}

/// Per-replica statistics of a fixed-length walk from the root.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SweepSample {
    pub returns_to_root: u64,
    pub max_level: u64,
    pub final_level: u64,
}

/// Replica summaries for one value of `a`.
#[derive(Clone, Debug)]
pub struct SweepRow {
    pub a: f64,
    pub samples: Vec<SweepSample>,
}

impl SweepRow {
    fn column(&self, f: impl Fn(&SweepSample) -> u64) -> Vec<f64> {
        self.samples.iter().map(|s| f(s) as f64).collect()
    }

    pub fn returns_to_root(&self) -> Vec<f64> {
        self.column(|s| s.returns_to_root)
    }

    pub fn max_level(&self) -> Vec<f64> {
        self.column(|s| s.max_level)
    }

    pub fn final_level(&self) -> Vec<f64> {
        self.column(|s| s.final_level)
    }

    /// Quartiles and mean of each statistic, one record per summary.
    pub fn records(&self, model: &TreeModel, budget: u64) -> Vec<EstimateRecord> {
        let n = self.samples.len() as u64;
        let mut out = Vec::new();
        for (name, values) in [
            ("returns_to_root", self.returns_to_root()),
            ("max_level", self.max_level()),
            ("final_level", self.final_level()),
        ] {
            let base = |r: EstimateRecord, summary: &str| {
                r.param("model", model.to_string())
                    .param("a", self.a)
                    .param("budget", budget)
                    .param("statistic", name)
                    .param("summary", summary)
            };
            if let Some(q) = Quartiles::of(&values) {
                for (summary, v) in [("q1", q.q1), ("median", q.median), ("q3", q.q3)] {
                    out.push(base(EstimateRecord::new("sweep", v, n), summary));
                }
            }
            let t: Tally = values.into_iter().collect();
            out.push(base(EstimateRecord::mean("sweep", &t), "mean"));
        }
        out
    }
}

/// For each `a` in the grid, walks of `budget` steps from the root.
pub fn phase_sweep(model: &TreeModel, a_grid: &[f64], budget: u64, replicas: u64, seed: u64) -> Result<Vec<SweepRow>> {
    if a_grid.is_empty() {
        return domain("empty a grid");
    }
    a_grid
        .iter()
        .enumerate()
        .map(|(j, &a)| {
            let samples = replicate(replicas, mix64(seed, j as u64), |_, rng| {
                let mut w = WalkState::new(model.clone(), a, rng.clone())?;
                let mut s = SweepSample {
                    returns_to_root: 0,
                    max_level: 0,
                    final_level: 0,
                };
                for _ in 0..budget {
                    let v = w.step();
                    if v == VertexId::ROOT {
                        s.returns_to_root += 1;
                    }
                    s.max_level = s.max_level.max(w.level());
                }
                s.final_level = w.level();
                Ok(s)
            })?;
            Ok(SweepRow { a, samples })
        })
        .collect()
}

/// Default step cap for one excursion or escape replica.
pub const DEFAULT_BUDGET: u64 = DEFAULT_STEP_CAP;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn escape_telescoping() {
        let r = halfline_escape(4, 8, 1.0, 20_000, 3, DEFAULT_BUDGET).unwrap();
        assert_eq!(r.reference, Some(0.5));
        assert!(r.z.unwrap().abs() < 4.0, "{r:?}");
        assert_eq!(r.truncated, 0);
        assert!(halfline_escape(8, 8, 1.0, 1, 0, 10).is_err());
    }

    #[test]
    fn escape_budget_truncates() {
        let r = halfline_escape(4, 1000, 1.0, 50, 3, 2).unwrap();
        assert_eq!(r.truncated, 50);
        assert_eq!(r.n, 0);
    }

    #[test]
    fn excursion_small_block() {
        let s = excursion_stats(2, 1, 1, 1.0, 20_000, 5, Kernel::Lattice, DEFAULT_BUDGET).unwrap();
        let recs = s.records();
        assert_eq!(recs.len(), 4);
        assert!((recs[0].reference.unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert!(recs[0].z.unwrap().abs() < 4.0, "{:?}", recs[0]);
        assert!(recs[3].estimate <= 4.0);
    }

    #[test]
    fn probe_on_a_line() {
        // d = 1: the tree is a line, fresh walk to level 4, then 4 -> 8 vs 0
        let model = TreeModel::Sparse { d: 1 };
        let r = root_return_probe(&model, 1.0, 2, 1, 20_000, 1_000_000, 9).unwrap();
        assert!(r.reference.is_none());
        assert!(((r.estimate - 0.5) / r.stderr.unwrap()).abs() < 4.0, "{r:?}");
    }

    #[test]
    fn sweep_on_a_line_returns() {
        let model = TreeModel::Sparse { d: 1 };
        let short = phase_sweep(&model, &[1.0], 1_000, 40, 2).unwrap();
        let long = phase_sweep(&model, &[1.0], 16_000, 40, 2).unwrap();
        let med = |r: &SweepRow| Quartiles::of(&r.returns_to_root()).unwrap().median;
        assert!(med(&long[0]) > med(&short[0]));
        assert_eq!(short[0].records(&model, 1_000).len(), 12);
    }

    #[test]
    fn replicate_is_schedule_free() {
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let go = || halfline_escape(3, 9, 1.5, 2_000, 77, DEFAULT_BUDGET).unwrap();
        assert_eq!(one.install(go), four.install(go));
    }
}
