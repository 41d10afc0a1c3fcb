//! Shapley allocation of arbitrary subset cost functions, exactly by
//! enumeration or by Monte Carlo permutation sampling.
//!
//! Random streams: every sampler splits its work into a fixed number of
//! chunks, chunk `i` drawing from ChaCha8 seeded with `seed` on stream `i`.
//! Chunks are merged in index order, so results depend only on
//! `(seed, samples)` and never on the thread count.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::stats::Moments;

/// Largest unit count accepted by [`exact_shapley`].
pub const DEFAULT_ENUMERATION_CAP: usize = 10;

/// Number of independent random substreams a sampler is split into.
pub const SUBSTREAMS: u64 = 64;

/// A cost `c(S)` over subsets of units `0..len()`, with `c(∅) = 0`.
///
/// Implementations must be deterministic and reentrant.
pub trait SetCost: Sync {
    fn len(&self) -> usize;

    fn cost(&self, members: &[usize]) -> f64;

    /// Writes `c(order[..=j])` into `out[j]` for every prefix of `order`.
    ///
    /// Override when the cost can be updated incrementally.
    fn prefix_costs(&self, order: &[usize], out: &mut [f64]) {
        for j in 0..order.len() {
            out[j] = self.cost(&order[..=j]);
        }
    }
}

/// Adapts a closure over member lists into a [`SetCost`].
pub struct FnCost<F> {
    n: usize,
    f: F,
}

impl<F> FnCost<F>
where
    F: Fn(&[usize]) -> f64 + Sync,
{
    pub fn new(n: usize, f: F) -> Self {
        FnCost { n, f }
    }
}

impl<F> SetCost for FnCost<F>
where
    F: Fn(&[usize]) -> f64 + Sync,
{
    fn len(&self) -> usize {
        self.n
    }

    fn cost(&self, members: &[usize]) -> f64 {
        if members.is_empty() {
            return 0.0;
        }
        (self.f)(members)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AllocationEstimate {
    pub values: Vec<f64>,
    /// Per-unit standard error; all zero for exact results.
    pub stderr: Vec<f64>,
    /// Permutations sampled, or `n!` for exact enumeration.
    pub samples: u64,
}

impl AllocationEstimate {
    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn max_stderr(&self) -> f64 {
        self.stderr.iter().cloned().fold(0.0, f64::max)
    }
}

fn check_empty_cost(cost: &dyn SetCost) -> Result<()> {
    let empty = cost.cost(&[]);
    if empty != 0.0 {
        return Err(Error::validation(format!(
            "cost of the empty set must be 0 (got {empty})"
        )));
    }
    Ok(())
}

/// Exact Shapley allocation with the default enumeration cap.
pub fn exact_shapley(cost: &dyn SetCost) -> Result<AllocationEstimate> {
    exact_shapley_capped(cost, DEFAULT_ENUMERATION_CAP)
}

/// Exact Shapley allocation by enumeration of all `2^n` coalitions.
///
/// Every permutation in which `k` follows exactly the coalition `S` yields
/// the same increment, and there are `|S|! (n-|S|-1)!` of them, so the
/// permutation average is evaluated as a weighted sum over subsets.
pub fn exact_shapley_capped(cost: &dyn SetCost, cap: usize) -> Result<AllocationEstimate> {
    let n = cost.len();
    if n == 0 {
        return Err(Error::validation("cannot allocate over zero units"));
    }
    if n > cap {
        return Err(Error::EnumerationCap { n, cap });
    }
    if n > 30 {
        return Err(Error::EnumerationCap { n, cap: 30 });
    }
    check_empty_cost(cost)?;

    let full = 1usize << n;
    let mut members = Vec::with_capacity(n);
    let costs: Vec<f64> = (0..full)
        .map(|mask| {
            members.clear();
            members.extend((0..n).filter(|i| mask >> i & 1 == 1));
            cost.cost(&members)
        })
        .collect();

    // weight[s] = s! (n-s-1)! / n! = 1 / (n * C(n-1, s))
    let mut weight = vec![0.0; n];
    let mut binom = 1.0f64;
    for (s, w) in weight.iter_mut().enumerate() {
        *w = 1.0 / (n as f64 * binom);
        binom = binom * (n - 1 - s) as f64 / (s + 1) as f64;
    }

    let mut values = vec![0.0; n];
    for (k, value) in values.iter_mut().enumerate() {
        let bit = 1usize << k;
        let mut acc = 0.0;
        for mask in 0..full {
            if mask & bit != 0 {
                continue;
            }
            let s = mask.count_ones() as usize;
            acc += weight[s] * (costs[mask | bit] - costs[mask]);
        }
        *value = acc;
    }

    let samples = (1..=n as u64).product();
    Ok(AllocationEstimate {
        values,
        stderr: vec![0.0; n],
        samples,
    })
}

/// Random generator for substream `stream` of `seed`.
pub fn substream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Runs `samples` draws split over [`SUBSTREAMS`] chunks in parallel and
/// returns the per-chunk results in chunk order.
pub(crate) fn run_substreams<T, F>(samples: u64, seed: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(&mut ChaCha8Rng, u64) -> T + Sync,
{
    let chunks = SUBSTREAMS.min(samples.max(1));
    let base = samples / chunks;
    let extra = samples % chunks;
    (0..chunks)
        .into_par_iter()
        .map(|i| {
            let count = base + u64::from(i < extra);
            let mut rng = substream_rng(seed, i);
            f(&mut rng, count)
        })
        .collect()
}

/// Shuffles `order` into a uniform random permutation and draws a uniform
/// cut, returning the prefix length. With `include_empty` the cut ranges
/// over `0..=n`, otherwise over `1..=n`.
pub fn random_prefix<R: Rng + ?Sized>(rng: &mut R, order: &mut [usize], include_empty: bool) -> usize {
    order.shuffle(rng);
    let lo = usize::from(!include_empty);
    rng.random_range(lo..=order.len())
}

/// Monte Carlo Shapley allocation.
///
/// Each draw is one uniform random permutation contributing all `n`
/// incremental costs. Standard errors come from the sample variance of the
/// increments.
pub fn mc_shapley(cost: &dyn SetCost, samples: u64, seed: u64) -> Result<AllocationEstimate> {
    let n = cost.len();
    if n == 0 {
        return Err(Error::validation("cannot allocate over zero units"));
    }
    if samples == 0 {
        return Err(Error::validation("Monte Carlo allocation needs at least one sample"));
    }
    check_empty_cost(cost)?;

    let chunks = run_substreams(samples, seed, |rng, count| {
        let mut acc = vec![Moments::default(); n];
        let mut order: Vec<usize> = (0..n).collect();
        let mut prefix = vec![0.0; n];
        for _ in 0..count {
            order.shuffle(rng);
            cost.prefix_costs(&order, &mut prefix);
            let mut prev = 0.0;
            for (j, &k) in order.iter().enumerate() {
                acc[k].push(prefix[j] - prev);
                prev = prefix[j];
            }
        }
        acc
    });

    let mut merged = vec![Moments::default(); n];
    for chunk in &chunks {
        for (m, c) in merged.iter_mut().zip(chunk) {
            m.merge(c);
        }
    }
    Ok(AllocationEstimate {
        values: merged.iter().map(|m| m.mean).collect(),
        stderr: merged.iter().map(|m| m.std_error()).collect(),
        samples,
    })
}

/// Moments of the "unit `i` is in a random prefix" indicators.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IndicatorMoments {
    pub mean: f64,
    pub pair_second_moment: f64,
    pub pair_covariance: f64,
    pub pair_correlation: f64,
}

/// Closed-form indicator moments for a uniform cut over a uniform permutation.
///
/// `E[1_i] = 1/2` and `E[1_i 1_j] = (n+1)^-1 sum_m m(m-1)/(n(n-1)) = 1/3`,
/// independent of `n`; hence covariance `1/12` and correlation `1/3`.
pub fn indicator_moments(n: usize) -> Result<IndicatorMoments> {
    if n < 2 {
        return Err(Error::validation(format!(
            "pair moments need at least 2 units (got {n})"
        )));
    }
    Ok(IndicatorMoments {
        mean: 0.5,
        pair_second_moment: 1.0 / 3.0,
        pair_covariance: 1.0 / 12.0,
        pair_correlation: 1.0 / 3.0,
    })
}

#[derive(Debug, Clone, Copy)]
pub struct SampledIndicatorMoments {
    pub estimate: IndicatorMoments,
    pub stderr: IndicatorMoments,
    pub samples: u64,
}

/// Empirical indicator moments for units 0 and 1 from random
/// (permutation, cut in `0..=n`) draws.
pub fn sample_indicator_moments(n: usize, samples: u64, seed: u64) -> Result<SampledIndicatorMoments> {
    indicator_moments(n)?;
    if samples < 2 {
        return Err(Error::validation("need at least two samples"));
    }
    let chunks = run_substreams(samples, seed, |rng, count| {
        let mut order: Vec<usize> = (0..n).collect();
        let mut draws = Vec::with_capacity(count as usize);
        for _ in 0..count {
            let cut = random_prefix(rng, &mut order, true);
            let x = order[..cut].contains(&0);
            let y = order[..cut].contains(&1);
            draws.push((f64::from(u8::from(x)), f64::from(u8::from(y))));
        }
        draws
    });
    let draws: Vec<(f64, f64)> = chunks.into_iter().flatten().collect();
    let big_n = draws.len() as f64;

    let mut mx = Moments::default();
    let mut my = Moments::default();
    let mut mxy = Moments::default();
    for &(x, y) in &draws {
        mx.push(x);
        my.push(y);
        mxy.push(x * y);
    }
    let cov = mxy.mean - mx.mean * my.mean;
    // Influence-function standard error for the covariance.
    let mut infl = Moments::default();
    for &(x, y) in &draws {
        infl.push((x - mx.mean) * (y - my.mean) - cov);
    }
    let var_x = mx.m2 / big_n;
    let var_y = my.m2 / big_n;
    let corr = cov / (var_x * var_y).sqrt();

    Ok(SampledIndicatorMoments {
        estimate: IndicatorMoments {
            mean: mx.mean,
            pair_second_moment: mxy.mean,
            pair_covariance: cov,
            pair_correlation: corr,
        },
        stderr: IndicatorMoments {
            mean: mx.std_error(),
            pair_second_moment: mxy.std_error(),
            pair_covariance: infl.std_error(),
            pair_correlation: (1.0 - corr * corr) / big_n.sqrt(),
        },
        samples,
    })
}
