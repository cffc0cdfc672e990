//! Exact-in-law sampler for the excursion on `T(x)` that never walks along
//! the long unbranched segments of the block.
//!
//! `T(x)` is a complete `d`-ary tree of depth `n0` (the skeleton: `x`, the
//! split vertices and the `x_i`) whose edges are paths. The segment entering
//! skeleton layer `t` has length `2^(k n0 + t - 1)`; the segment from `x_-1`
//! to `x` has length `2^(k n0 - 1)` and starts reinforced.
//!
//! Since a segment is always entered first from its upper end, its crossed
//! edges form a prefix `[0, f)`. Between visits to skeleton vertices the walk
//! on a segment is a gambler's ruin:
//!
//! * on a fully crossed segment of length `L`, a walker one step in reaches
//!   the far end before coming back with probability `1 / L`;
//! * entering a segment with frontier `f`, the walker reaches the frontier
//!   before coming back with probability `1 / f`, and from the frontier it
//!   reaches `g >= f` before coming back with probability
//!   `prod_{j=f}^{g-1} j / (j + a)`.
//!
//! Attempts that come straight back without moving a frontier change
//! nothing, so the sampler skips them and draws only the attempts that do
//! something; its cost grows with the logarithm of the segment lengths.
//! It reproduces the law of the visited set of targets; the number of
//! lattice steps is not tracked.

use rand::{Rng, RngCore};

use super::excursion::{block_levels, ExcursionOutcome};
use super::sample_index;
use crate::error::{domain, Result};
use crate::scalar::Scalar;
use crate::special::ln_gamma_ratio;

const MAX_SKELETON_LEAVES: u64 = 1 << 22;
/// Integer reinforcement up to this value uses the telescoped product.
const TELESCOPE_MAX: u32 = 8;

/// Skeleton of `T(x)` for block `k` of the sparse tree with parameter `d`.
#[derive(Clone, Debug)]
pub struct CompressedSubtree {
    d: u32,
    k: u32,
    n0: u32,
    /// Segment length entering each skeleton layer; index 0 is `x_-1`–`x`.
    seg_len: Vec<u64>,
    /// First skeleton index of each layer, plus the total count.
    layer_start: Vec<usize>,
}

impl CompressedSubtree {
    pub fn new(d: u32, k: u32, n0: u32) -> Result<Self> {
        if d == 0 {
            return domain("d must be positive");
        }
        let (center, lower, _) = block_levels(k, n0)?;
        let leaves = u64::from(d).checked_pow(n0).filter(|&n| n <= MAX_SKELETON_LEAVES);
        if leaves.is_none() {
            return domain(format!("d^n0 = {d}^{n0} targets is too many"));
        }
        let kn = u64::from(k) * u64::from(n0);
        let mut seg_len = vec![center - lower];
        seg_len.extend((1..=u64::from(n0)).map(|t| 1u64 << (kn + t - 1)));
        let mut layer_start = vec![0usize];
        let mut width = 1usize;
        for _ in 0..=n0 {
            let last = *layer_start.last().unwrap();
            layer_start.push(last + width);
            width *= d as usize;
        }
        Ok(CompressedSubtree {
            d,
            k,
            n0,
            seg_len,
            layer_start,
        })
    }

    pub fn d(&self) -> u32 {
        self.d
    }

    pub fn k(&self) -> u32 {
        self.k
    }

    pub fn n0(&self) -> u32 {
        self.n0
    }

    pub fn target_count(&self) -> usize {
        self.layer_start[self.n0 as usize + 1] - self.layer_start[self.n0 as usize]
    }

    fn skeleton_len(&self) -> usize {
        *self.layer_start.last().unwrap()
    }

    fn layer(&self, v: usize) -> usize {
        self.layer_start.partition_point(|&s| s <= v) - 1
    }

    /// Samples one excursion. Outcome targets are numbered left to right.
    pub fn sample<T: Scalar, R: RngCore>(&self, a: T, rng: &mut R, move_cap: u64) -> Result<ExcursionOutcome> {
        if !(a > T::zero()) || !a.is_finite() {
            return domain(format!("reinforcement a = {a} must be positive"));
        }
        let n = self.skeleton_len();
        let d = self.d as usize;
        let leaf_layer = self.n0 as usize;
        let leaf_start = self.layer_start[leaf_layer];
        // frontier[v]: crossed prefix of the segment entering v
        let mut frontier = vec![0u64; n];
        if a == T::one() {
            // crossing changes no weight: every segment behaves as crossed
            for (v, f) in frontier.iter_mut().enumerate() {
                *f = self.seg_len[self.layer(v)];
            }
        }
        frontier[0] = self.seg_len[0];
        let mut hit = vec![false; self.target_count()];
        let mut hit_set = Vec::new();
        let ruin = RuinSampler::new(a);

        let mut pos = 0usize;
        let mut moves = 0u64;
        while moves < move_cap {
            moves += 1;
            let layer = self.layer(pos);
            if layer == leaf_layer {
                // reflected: the walk bounces until it exits at the parent
                pos = (pos - 1) / d;
                continue;
            }
            // Attempts that return to `pos` without changing any frontier
            // are skipped: pick the edge whose attempt does something, with
            // probability proportional to weight × P(something happens).
            let first_child = d * pos + 1;
            let parent_len = self.seg_len[layer];
            let child_len = self.seg_len[layer + 1];
            let effective = |f: u64| -> T {
                match f {
                    0 => T::one(),
                    f if f == child_len => a / T::from_count(child_len),
                    f => a / T::from_count(f),
                }
            };
            let ws = std::iter::once(a / T::from_count(parent_len))
                .chain((0..d).map(|i| effective(frontier[first_child + i])));
            let choice = sample_index(rng, ws);
            if choice == 0 {
                if pos == 0 {
                    return Ok(ExcursionOutcome {
                        z: hit_set.len() as u32,
                        hit_set,
                        steps: moves,
                        truncated: false,
                    });
                }
                pos = (pos - 1) / d;
                continue;
            }
            let child = first_child + choice - 1;
            let f = frontier[child];
            let arrived = if f == child_len {
                true
            } else {
                // the walker stands on the frontier
                let g = ruin.max_frontier(rng, f.max(1), child_len);
                frontier[child] = g;
                g == child_len
            };
            if arrived {
                pos = child;
                if pos >= leaf_start {
                    let slot = pos - leaf_start;
                    if !hit[slot] {
                        hit[slot] = true;
                        hit_set.push(slot as u32);
                    }
                }
            }
        }
        Ok(ExcursionOutcome {
            z: hit_set.len() as u32,
            hit_set,
            steps: moves,
            truncated: true,
        })
    }
}

/// Draws the furthest frontier reached before returning to the segment top.
struct RuinSampler<T> {
    a: T,
    integer: Option<u32>,
}

impl<T: Scalar> RuinSampler<T> {
    fn new(a: T) -> Self {
        let integer = (a.fract() == T::zero())
            .then(|| a.to_u32())
            .flatten()
            .filter(|&n| (1..=TELESCOPE_MAX).contains(&n));
        RuinSampler { a, integer }
    }

    /// `ln prod_{j=f}^{g-1} j / (j + a)`.
    fn ln_escape(&self, f: u64, g: u64) -> T {
        match self.integer {
            Some(n) => (0..u64::from(n))
                .map(|i| (T::from_count(f + i) / T::from_count(g + i)).ln())
                .fold(T::zero(), |s, x| s + x),
            None => ln_gamma_ratio(T::from_count(f), self.a) - ln_gamma_ratio(T::from_count(g), self.a),
        }
    }

    /// Largest `g` in `[f, len]` with `P(reach g before the top) > U`.
    fn max_frontier<R: RngCore>(&self, rng: &mut R, f: u64, len: u64) -> u64 {
        let threshold = T::lit(1.0 - rng.random::<f64>()).ln();
        let above = |g: u64| self.ln_escape(f, g) > threshold;
        if above(len) {
            return len;
        }
        // the product behaves like (f / g)^a; start next to that guess
        let guess = (T::from_count(f) * (-threshold / self.a).exp())
            .to_f64()
            .unwrap_or(f64::MAX);
        let guess = (guess as u64).clamp(f, len - 1);
        let (mut lo, mut hi);
        if above(guess) {
            lo = guess;
            let mut span = 1u64;
            loop {
                hi = lo.saturating_add(span).min(len);
                if !above(hi) {
                    break;
                }
                lo = hi;
                span *= 2;
            }
        } else {
            hi = guess;
            let mut span = 1u64;
            loop {
                lo = hi.saturating_sub(span).max(f);
                if lo == f || above(lo) {
                    break;
                }
                hi = lo;
                span *= 2;
            }
        }
        // invariant: above(lo) or lo == f, and !above(hi)
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            if above(mid) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    }
}
