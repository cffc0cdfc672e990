//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any
//! failure. Criterion 10 re-runs the stochastic criteria with the same seed
//! and with another seed.

mod common;

use std::time::Instant;

use orrw::analytic::{self, IndexConvention, ResistanceClass};
use orrw::branching::{survival_estimate, BranchingConfig, LawMode};
use orrw::experiments::{
    excursion_stats, halfline_escape, phase_sweep, root_return_probe, EstimateRecord, DEFAULT_BUDGET,
};
use orrw::output::write_csv;
use orrw::special::ln_rising_product;
use orrw::stats::z_score;
use orrw::walk::{Kernel, SubtreeSpec};
use orrw::TreeModel;

const SEED: u64 = 20_240_917;
const OTHER_SEED: u64 = 977_131;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

/// Records of one stochastic criterion and the time they took.
struct Block {
    criterion: u32,
    records: Vec<EstimateRecord>,
    seconds: f64,
}

impl Block {
    fn csv(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        write_csv(&self.records, &mut buf).unwrap();
        buf
    }

    fn find(&self, experiment: &str, key: &str, value: &str) -> &EstimateRecord {
        self.records
            .iter()
            .find(|r| r.experiment == experiment && r.get(key).map(|v| v.to_string()).as_deref() == Some(value))
            .unwrap_or_else(|| panic!("no {experiment} record with {key}={value}"))
    }
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let t = Instant::now();
    let v = f();
    (v, t.elapsed().as_secs_f64())
}

fn criterion_1() -> Verdict {
    let sum = |d, terms| analytic::effective_resistance::<f64>(&TreeModel::Sparse { d }, terms).unwrap();
    let r3 = sum(3, 70);
    let r4 = sum(4, 70);
    let ok3 = r3.class == ResistanceClass::Finite { limit: 2.0 } && (r3.partial_sum - 2.0).abs() <= 1e-9;
    let ok4 = r4.class == ResistanceClass::Finite { limit: 1.5 } && (r4.partial_sum - 1.5).abs() <= 1e-9;
    let ok2 = (1..=500u32).all(|k| {
        let r = sum(2, k);
        r.class == ResistanceClass::Divergent && r.partial_sum == 1.0 + f64::from(k) / 2.0
    });
    verdict(
        ok3 && ok4 && ok2,
        format!(
            "sparse:3 limit 2 (|S_70 - 2| = {:.1e}), sparse:4 limit 1.5 (|S_70 - 1.5| = {:.1e}), sparse:2 S_K = 1 + K/2 for K <= 500: {ok2}",
            (r3.partial_sum - 2.0).abs(),
            (r4.partial_sum - 1.5).abs()
        ),
    )
}

fn criterion_2() -> Verdict {
    let mut worst = 0.0f64;
    for big_m in 2..=10_000u64 {
        for m in 1..big_m {
            let p: f64 = analytic::escape_product(m, big_m, 1.0).unwrap();
            let exact = m as f64 / big_m as f64;
            worst = worst.max((p - exact).abs() / exact);
        }
    }
    verdict(
        worst <= 1e-14,
        format!("max relative error over 1 <= m < M <= 10^4 is {worst:.2e}"),
    )
}

fn criterion_5() -> Verdict {
    let n0 = analytic::find_n0(1.0f64, 4, 64).unwrap();
    let literal_ok = (1..=30u32)
        .all(|k| analytic::offspring_mean::<f64>(k, 2, 1.0, 4, IndexConvention::LevelPowers).unwrap() == 2.0);
    let delta: f64 = analytic::delta(4, 2).unwrap();
    verdict(
        n0.n0 == 2 && literal_ok && delta == 1.0 / 256.0,
        format!(
            "find_n0 = {}, literal mean = 2 for k = 1..30: {literal_ok}, delta = {delta:?}",
            n0.n0
        ),
    )
}

fn analytic_block() -> Block {
    let (records, seconds) = timed(|| {
        let n0 = analytic::find_n0(1.0f64, 4, 64).unwrap();
        vec![
            EstimateRecord::new("analytic.n0", f64::from(n0.n0), 0)
                .param("d", 4u32)
                .param("a", 1.0),
            EstimateRecord::new(
                "analytic.mean_level_powers",
                analytic::offspring_mean(1, 2, 1.0, 4, IndexConvention::LevelPowers).unwrap(),
                0,
            ),
            EstimateRecord::new("analytic.delta", analytic::delta(4, 2).unwrap(), 0),
        ]
    });
    Block {
        criterion: 5,
        records,
        seconds,
    }
}

/// Records for criteria 3 to 9 from one master seed.
fn stochastic_blocks(seed: u64) -> Vec<Block> {
    let mut blocks = Vec::new();
    let (records, seconds) = timed(|| {
        vec![
            halfline_escape(4, 8, 2.0, 200_000, seed, DEFAULT_BUDGET).unwrap(),
            halfline_escape(8, 16, 3.0, 200_000, seed ^ 1, DEFAULT_BUDGET).unwrap(),
        ]
    });
    blocks.push(Block {
        criterion: 3,
        records,
        seconds,
    });

    let (records, seconds) = timed(|| {
        excursion_stats(2, 1, 1, 1.0, 100_000, seed, Kernel::Lattice, DEFAULT_BUDGET)
            .unwrap()
            .records()
    });
    blocks.push(Block {
        criterion: 4,
        records,
        seconds,
    });

    blocks.push(analytic_block());

    let (records, seconds) = timed(|| {
        excursion_stats(4, 1, 2, 1.0, 50_000, seed, Kernel::Lattice, DEFAULT_BUDGET)
            .unwrap()
            .records()
    });
    blocks.push(Block {
        criterion: 6,
        records,
        seconds,
    });

    let (records, seconds) = timed(|| {
        let mut cfg = BranchingConfig::new(4, 2, 1, 1.0);
        cfg.generations = 12;
        cfg.law = LawMode::Sampler;
        cfg.kernel = Kernel::Skeleton;
        cfg.population_cap = 100_000;
        survival_estimate(&cfg, 2000, seed).unwrap().records()
    });
    blocks.push(Block {
        criterion: 7,
        records,
        seconds,
    });

    let (records, seconds) =
        timed(|| vec![root_return_probe(&TreeModel::Sparse { d: 3 }, 2.0, 3, 4, 10_000, 10_000_000, seed).unwrap()]);
    blocks.push(Block {
        criterion: 8,
        records,
        seconds,
    });

    let (records, seconds) = timed(|| {
        let model = TreeModel::Sparse { d: 4 };
        let rows = phase_sweep(&model, &[1.2, 2.0, 3.0], 1_000_000, 100, seed).unwrap();
        rows.iter().flat_map(|r| r.records(&model, 1_000_000)).collect()
    });
    blocks.push(Block {
        criterion: 9,
        records,
        seconds,
    });
    blocks
}

fn within(seconds: f64, limit: f64) -> (bool, String) {
    (seconds < limit, format!("{seconds:.1} s of {limit:.0} s"))
}

fn check(block: &Block) -> Verdict {
    match block.criterion {
        3 => {
            let (a, b) = (&block.records[0], &block.records[1]);
            let za = z_score(a.estimate, 5.0 / 18.0, a.stderr.unwrap());
            let lg = ln_rising_product(8.0f64, 16.0, 3.0).exp();
            let zb = z_score(b.estimate, lg, b.stderr.unwrap());
            let (t_ok, t) = within(block.seconds, 30.0);
            verdict(
                za.abs() < 4.0 && zb.abs() < 4.0 && t_ok,
                format!(
                    "(4,8,a=2) {:.5} vs 5/18 z={za:.2}; (8,16,a=3) {:.5} vs log-gamma {lg:.6} z={zb:.2}; {t}",
                    a.estimate, b.estimate
                ),
            )
        }
        4 => {
            let spec = SubtreeSpec::fresh(2, 1, 1).unwrap();
            let target = spec.tree().targets().next().unwrap();
            let oracle = common::harmonic_hit_probability(spec.tree(), target);
            let r = &block.records[0];
            let z = z_score(r.estimate, oracle, r.stderr.unwrap());
            let (m, big_m) = analytic::escape_range(1, 1, IndexConvention::GraphDistance).unwrap();
            let exact: f64 = analytic::escape_product(m, big_m, 1.0).unwrap();
            let (lm, lbig) = analytic::escape_range(1, 1, IndexConvention::LevelPowers).unwrap();
            let literal: f64 = analytic::escape_product(lm, lbig, 1.0).unwrap();
            let convention_ok = (exact - oracle).abs() < 1e-12 && (literal - oracle).abs() > 1e-3;
            let (t_ok, t) = within(block.seconds, 60.0);
            verdict(
                z.abs() < 4.0 && convention_ok && t_ok && r.n == 100_000,
                format!(
                    "hit frequency {:.5} vs harmonic {oracle:.6} z={z:.2}; graph-distance product {exact:.6}, literal {literal:.6}; {t}",
                    r.estimate
                ),
            )
        }
        5 => verdict(
            block.records[0].estimate == 2.0
                && block.records[1].estimate == 2.0
                && block.records[2].estimate == 1.0 / 256.0,
            "records n0 = 2, literal mean = 2, delta = 1/256".into(),
        ),
        6 => {
            let mean = block.find("excursion.mean_z", "convention", "graph_distance");
            let second = block.find("excursion.second_moment_z", "convention", "cap");
            let z = z_score(mean.estimate, 16.0 / 7.0, mean.stderr.unwrap());
            let reference_ok = (mean.reference.unwrap() - 16.0 / 7.0).abs() < 1e-12;
            let (t_ok, t) = within(block.seconds, 120.0);
            verdict(
                z.abs() < 4.0 && reference_ok && second.estimate <= 256.0 && t_ok,
                format!(
                    "E[Z] {:.4} vs 16/7 z={z:.2}; E[Z^2] {:.3} <= 256; {t}",
                    mean.estimate, second.estimate
                ),
            )
        }
        7 => {
            let vs_bound = block.find("branching.survival", "reference_kind", "moment_bound");
            let vs_delta = block.find("branching.survival", "reference_kind", "delta");
            let se = vs_delta.stderr.unwrap();
            let z_delta = z_score(vs_delta.estimate, 1.0 / 256.0, se);
            let bound = vs_bound.reference.unwrap_or(f64::NAN);
            let z_bound = z_score(vs_bound.estimate, bound, se);
            let (t_ok, t) = within(block.seconds, 120.0);
            verdict(
                z_delta > -3.0 && z_bound > -3.0 && t_ok,
                format!(
                    "survival {:.4} (se {se:.4}, {} capped) vs delta 1/256 z={z_delta:.1}, vs moment bound {bound:.4} z={z_bound:.1}; {t}",
                    vs_delta.estimate, vs_delta.truncated
                ),
            )
        }
        8 => {
            let r = &block.records[0];
            let bound: f64 = analytic::escape_bound(3, 4, 2.0, 3).unwrap();
            let z = z_score(r.estimate, bound, r.stderr.unwrap());
            let (t_ok, t) = within(block.seconds, 120.0);
            verdict(
                z < 3.0 && r.reference == Some(bound) && t_ok,
                format!(
                    "frequency {:.4} <= bound {bound:.4} + 3 se (z={z:.1}); budget exhausted in {} of 10000; {t}",
                    r.estimate, r.truncated
                ),
            )
        }
        9 => {
            let median = |stat: &str, a: f64| {
                block
                    .records
                    .iter()
                    .find(|r| {
                        r.get("statistic").unwrap().to_string() == stat
                            && r.get("summary").unwrap().to_string() == "median"
                            && r.get("a") == Some(&orrw::experiments::Value::Real(a))
                    })
                    .unwrap()
                    .estimate
            };
            let grid = [1.2, 2.0, 3.0];
            let levels: Vec<f64> = grid.iter().map(|&a| median("max_level", a)).collect();
            let returns: Vec<f64> = grid.iter().map(|&a| median("returns_to_root", a)).collect();
            let dec = levels.windows(2).all(|w| w[0] > w[1]);
            let inc = returns.windows(2).all(|w| w[0] < w[1]);
            let (t_ok, t) = within(block.seconds, 180.0);
            verdict(
                dec && inc && t_ok,
                format!("median max level {levels:?}, median returns {returns:?}; {t}"),
            )
        }
        _ => unreachable!(),
    }
}

fn criterion_10(first: &[Block], second: &[Block], other: &[Block]) -> Verdict {
    let identical = first.iter().zip(second).all(|(a, b)| a.csv() == b.csv());
    let mut compared = 0;
    let mut worst = 0.0f64;
    let mut ok = true;
    for (a, b) in first.iter().zip(other) {
        for (ra, rb) in a.records.iter().zip(&b.records) {
            match (ra.stderr, rb.stderr) {
                (Some(sa), Some(sb)) => {
                    let se = (sa * sa + sb * sb).sqrt();
                    let z = z_score(ra.estimate, rb.estimate, se).abs();
                    compared += 1;
                    worst = worst.max(z);
                    ok &= z < 5.0;
                }
                _ if a.criterion == 5 => ok &= ra.estimate == rb.estimate,
                _ => {}
            }
        }
    }
    verdict(
        identical && ok,
        format!(
            "same seed byte-identical CSV: {identical}; other seed: {compared} estimates compared, max |diff| = {worst:.2} se"
        ),
    )
}

fn main() {
    let mut lines: Vec<(u32, Verdict, f64)> = Vec::new();
    for (id, f) in [(1, criterion_1 as fn() -> Verdict), (2, criterion_2), (5, criterion_5)] {
        let (v, s) = timed(f);
        lines.push((id, v, s));
    }
    let first = stochastic_blocks(SEED);
    for b in &first {
        if b.criterion != 5 {
            lines.push((b.criterion, check(b), b.seconds));
        }
    }
    let (v, s) = timed(|| {
        let second = stochastic_blocks(SEED);
        let other = stochastic_blocks(OTHER_SEED);
        criterion_10(&first, &second, &other)
    });
    lines.push((10, v, s));
    lines.sort_by_key(|l| l.0);

    let mut failed = 0;
    for (id, v, secs) in &lines {
        let tag = if v.pass { "PASS" } else { "FAIL" };
        failed += usize::from(!v.pass);
        println!("criterion {id:>2}: {tag}  {}  [{secs:.1} s]", v.detail);
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all acceptance criteria passed");
}
