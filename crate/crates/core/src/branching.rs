//! The inhomogeneous branching process whose generation-`i` offspring count
//! has the law of `Z_(k0+i)`, the number of block targets visited by one
//! excursion.

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::analytic::{self, IndexConvention, MomentSequence};
use crate::error::{domain, Result};
use crate::experiments::{replicate, EstimateRecord};
use crate::rng::mix64;
use crate::stats::{Proportion, Tally};
use crate::walk::{ExcursionSampler, Kernel, DEFAULT_STEP_CAP};

pub const DEFAULT_POPULATION_CAP: u64 = 100_000;
pub const DEFAULT_GENERATIONS: u32 = 20;
/// Salt for the streams that fill empirical histograms.
const HISTOGRAM_SALT: u64 = 0x4849_5354;

/// Offspring counts over `0..=max` with their sample sizes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Histogram {
    counts: Vec<u64>,
    cumulative: Vec<u64>,
}

impl Histogram {
    pub fn new(counts: Vec<u64>) -> Result<Self> {
        let cumulative: Vec<u64> = counts
            .iter()
            .scan(0u64, |acc, &c| {
                *acc += c;
                Some(*acc)
            })
            .collect();
        if cumulative.last().copied().unwrap_or(0) == 0 {
            return domain("histogram has no mass");
        }
        Ok(Histogram { counts, cumulative })
    }

    /// All mass on `value`.
    pub fn point(value: u32) -> Self {
        let mut counts = vec![0; value as usize + 1];
        counts[value as usize] = 1;
        Histogram::new(counts).unwrap()
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        *self.cumulative.last().unwrap()
    }

    pub fn probabilities(&self) -> Vec<f64> {
        let t = self.total() as f64;
        self.counts.iter().map(|&c| c as f64 / t).collect()
    }

    pub fn mean(&self) -> f64 {
        self.moment(1)
    }

    pub fn second_moment(&self) -> f64 {
        self.moment(2)
    }

    fn moment(&self, p: i32) -> f64 {
        let t = self.total() as f64;
        self.counts
            .iter()
            .enumerate()
            .map(|(v, &c)| (v as f64).powi(p) * c as f64)
            .sum::<f64>()
            / t
    }

    pub fn sample<R: RngCore>(&self, rng: &mut R) -> u32 {
        let u = rng.random_range(0..self.total());
        self.cumulative.partition_point(|&c| c <= u) as u32
    }
}

/// How generation `i` draws its offspring counts.
#[derive(Clone, Debug)]
pub enum OffspringLaw {
    /// One histogram per generation; later generations reuse the last.
    Empirical(Vec<Histogram>),
    /// A fresh excursion on block `k0 + i` per individual.
    Sampler {
        samplers: Vec<ExcursionSampler>,
        a: f64,
        cap: u64,
    },
}

impl OffspringLaw {
    /// Excursion samplers for blocks `k0 .. k0 + generations`.
    pub fn sampler(kernel: Kernel, d: u32, k0: u32, n0: u32, a: f64, generations: u32) -> Result<Self> {
        let samplers = (0..generations)
            .map(|i| ExcursionSampler::new(kernel, d, k0 + i, n0))
            .collect::<Result<_>>()?;
        Ok(OffspringLaw::Sampler {
            samplers,
            a,
            cap: DEFAULT_STEP_CAP,
        })
    }

    /// Histograms of `samples` excursions per generation.
    #[allow(clippy::too_many_arguments)]
    pub fn empirical(
        kernel: Kernel,
        d: u32,
        k0: u32,
        n0: u32,
        a: f64,
        generations: u32,
        samples: u64,
        seed: u64,
    ) -> Result<Self> {
        let histograms = (0..generations)
            .map(|i| {
                let sampler = ExcursionSampler::new(kernel, d, k0 + i, n0)?;
                let zs = replicate(samples, mix64(mix64(seed, HISTOGRAM_SALT), i.into()), |_, rng| {
                    Ok(sampler.sample(a, rng, DEFAULT_STEP_CAP)?.z)
                })?;
                let mut counts = vec![0u64; sampler.target_count() + 1];
                zs.into_iter().for_each(|z| counts[z as usize] += 1);
                Histogram::new(counts)
            })
            .collect::<Result<_>>()?;
        Ok(OffspringLaw::Empirical(histograms))
    }

    fn draw<R: RngCore>(&self, generation: usize, rng: &mut R) -> Result<u32> {
        match self {
            OffspringLaw::Empirical(h) => {
                let h = h.get(generation).or(h.last()).expect("at least one histogram");
                Ok(h.sample(rng))
            }
            OffspringLaw::Sampler { samplers, a, cap } => {
                let s = samplers
                    .get(generation)
                    .ok_or_else(|| crate::Error::Domain(format!("no sampler prepared for generation {generation}")))?;
                Ok(s.sample(*a, rng, *cap)?.z)
            }
        }
    }
}

/// Population sizes `B_0 = 1, B_1, ...` of one run.
#[derive(Clone, Debug, PartialEq)]
pub struct BranchingTrajectory {
    pub populations: Vec<u64>,
    /// First generation with no individuals.
    pub extinct_at: Option<usize>,
    /// The population passed the cap; the run stopped and counts as alive.
    pub capped: bool,
    /// Offspring counts drawn in each generation.
    pub draws: Vec<Tally>,
}

impl BranchingTrajectory {
    /// `B_i > 0`, treating a capped run as alive from then on.
    pub fn alive_at(&self, generation: usize) -> bool {
        match self.extinct_at {
            Some(e) => generation < e,
            None => true,
        }
    }
}

/// One run of up to `generations` generations.
pub fn simulate<R: RngCore>(
    law: &OffspringLaw,
    generations: u32,
    population_cap: u64,
    rng: &mut R,
) -> Result<BranchingTrajectory> {
    let mut t = BranchingTrajectory {
        populations: vec![1],
        extinct_at: None,
        capped: false,
        draws: Vec::new(),
    };
    for i in 0..generations as usize {
        let current = t.populations[i];
        let mut tally = Tally::default();
        let mut next = 0u64;
        for _ in 0..current {
            let z = law.draw(i, rng)?;
            tally.push(f64::from(z));
            next += u64::from(z);
        }
        t.draws.push(tally);
        t.populations.push(next);
        if next == 0 {
            t.extinct_at = Some(i + 1);
            break;
        }
        if next > population_cap {
            t.capped = true;
            break;
        }
    }
    Ok(t)
}

/// Offspring law choice for a survival run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum LawMode {
    Sampler,
    Empirical { samples: u64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BranchingConfig {
    pub d: u32,
    pub n0: u32,
    pub k0: u32,
    pub a: f64,
    pub generations: u32,
    pub law: LawMode,
    pub kernel: Kernel,
    pub population_cap: u64,
}

impl BranchingConfig {
    pub fn new(d: u32, n0: u32, k0: u32, a: f64) -> Self {
        BranchingConfig {
            d,
            n0,
            k0,
            a,
            generations: DEFAULT_GENERATIONS,
            law: LawMode::Sampler,
            kernel: Kernel::Skeleton,
            population_cap: DEFAULT_POPULATION_CAP,
        }
    }

    pub fn law(&self, seed: u64) -> Result<OffspringLaw> {
        let BranchingConfig {
            d,
            n0,
            k0,
            a,
            generations,
            kernel,
            ..
        } = *self;
        if k0 == 0 || n0 == 0 || generations == 0 {
            return domain("k0, n0 and generations must be positive");
        }
        match self.law {
            LawMode::Sampler => OffspringLaw::sampler(kernel, d, k0, n0, a, generations),
            LawMode::Empirical { samples } => OffspringLaw::empirical(kernel, d, k0, n0, a, generations, samples, seed),
        }
    }
}

/// Survival frequency at the horizon with the bounds it should respect.
#[derive(Clone, Debug)]
pub struct SurvivalEstimate {
    pub config: BranchingConfig,
    /// Runs alive at generation `config.generations`.
    pub survival: Proportion,
    /// Runs stopped by the population cap.
    pub capped: u64,
    /// Pooled offspring draws per generation.
    pub draws: Vec<Tally>,
    pub delta: f64,
    /// Lower bound fed with the empirical moments; `None` when some
    /// generation was never reached or had zero mean.
    pub moment_bound: Option<f64>,
}

impl SurvivalEstimate {
    /// Survival against the moment bound and against `δ`, then the empirical
    /// offspring mean of every generation.
    pub fn records(&self) -> Vec<EstimateRecord> {
        let c = &self.config;
        let base = |r: EstimateRecord| {
            r.param("d", c.d)
                .param("n0", c.n0)
                .param("k0", c.k0)
                .param("a", c.a)
                .param("generations", c.generations)
                .param("law", law_name(&c.law))
                .param("kernel", c.kernel.name())
        };
        let mut out = vec![
            base(EstimateRecord::frequency("branching.survival", self.survival))
                .param("reference_kind", "moment_bound")
                .against(self.moment_bound)
                .truncated(self.capped),
            base(EstimateRecord::frequency("branching.survival", self.survival))
                .param("reference_kind", "delta")
                .against(Some(self.delta))
                .truncated(self.capped),
        ];
        for (i, t) in self.draws.iter().enumerate() {
            let k = c.k0 + i as u32;
            let reference = analytic::offspring_mean(k, c.n0, c.a, c.d, IndexConvention::GraphDistance).ok();
            out.push(
                base(EstimateRecord::mean("branching.offspring_mean", t))
                    .param("generation", i as u64)
                    .against(reference),
            );
        }
        out
    }
}

fn law_name(law: &LawMode) -> String {
    match law {
        LawMode::Sampler => "sampler".into(),
        LawMode::Empirical { samples } => format!("empirical:{samples}"),
    }
}

/// `replicas` independent runs; run `r` draws from `rng::stream(seed, r)`.
pub fn survival_estimate(config: &BranchingConfig, replicas: u64, seed: u64) -> Result<SurvivalEstimate> {
    if replicas == 0 {
        return domain("replicas must be at least 1");
    }
    let law = config.law(seed)?;
    let horizon = config.generations as usize;
    let runs = replicate(replicas, seed, |_, rng| {
        simulate(&law, config.generations, config.population_cap, rng)
    })?;
    let alive = runs.iter().filter(|t| t.alive_at(horizon)).count() as u64;
    let capped = runs.iter().filter(|t| t.capped).count() as u64;
    let mut draws = vec![Tally::default(); horizon];
    for t in &runs {
        for (acc, d) in draws.iter_mut().zip(&t.draws) {
            *acc = acc.merge(*d);
        }
    }
    let reached: Vec<&Tally> = draws.iter().take_while(|t| t.n > 0).collect();
    let moment_bound = if reached.len() == horizon {
        let means = reached.iter().map(|t| t.mean()).collect();
        let seconds = reached.iter().map(|t| t.sum_sq / t.n as f64).collect();
        MomentSequence::new(means, seconds)
            .and_then(|ms| analytic::survival_lower_bound(&ms, horizon))
            .ok()
    } else {
        None
    };
    Ok(SurvivalEstimate {
        config: config.clone(),
        survival: Proportion::new(alive, replicas),
        capped,
        draws,
        delta: analytic::delta(config.d, config.n0)?,
        moment_bound,
    })
}
