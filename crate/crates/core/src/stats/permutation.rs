//! Permutation p-values with smoothed counting, `(count + 1) / (B + 1)`.
//!
//! Two routes compute the same numbers. [`permutation_test`] rebuilds the
//! sample sets and calls an arbitrary statistic per permutation.
//! [`pairwise_permutation_test`] handles the pairwise statistics (MMD²,
//! energy) in `O(min(m, n)²)` per permutation: row sums of the pooled pair
//! matrix are computed once, after which one within-block sum fixes the
//! other two.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::derive_seed;

use super::kernel::{median_heuristic, squared_distance};
use super::sample::{subsample, SampleSet};

/// Pooled sizes up to this keep the whole pair matrix in memory.
const GRAM_LIMIT: usize = 2048;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Statistic {
    #[default]
    Mmd2,
    Energy,
}

impl std::str::FromStr for Statistic {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mmd2" => Ok(Self::Mmd2),
            "energy" => Ok(Self::Energy),
            _ => Err(format!("unknown statistic {s:?} (expected mmd2 or energy)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestConfig {
    pub permutations: usize,
    pub alpha: f64,
    pub sample_cap: usize,
    pub statistic: Statistic,
    pub seed: u64,
}

impl Default for TestConfig {
    fn default() -> Self {
        Self {
            permutations: 199,
            alpha: 0.05,
            sample_cap: 4000,
            statistic: Statistic::Mmd2,
            seed: 0,
        }
    }
}

impl TestConfig {
    pub fn validate(&self) -> Result<()> {
        if self.permutations < 19 {
            return Err(Error::InvalidConfig(format!(
                "permutations must be at least 19, got {}",
                self.permutations
            )));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidConfig(format!("alpha {} outside (0, 1)", self.alpha)));
        }
        if self.sample_cap < 2 {
            return Err(Error::InvalidConfig(format!(
                "sample cap must be at least 2, got {}",
                self.sample_cap
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PermutationResult {
    pub observed: f64,
    pub exceedances: usize,
    pub permutations: usize,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestOutcome {
    pub statistic: Statistic,
    pub statistic_observed: f64,
    pub p_value: f64,
    pub bandwidth_sigma: f64,
    pub exceedances: usize,
    pub permutations: usize,
    pub m: usize,
    pub n: usize,
    pub bh_kept: bool,
}

/// `perm >= observed`, forgiving summation-order rounding so that a
/// relabelling producing the same multisets counts as a tie.
#[inline]
fn at_least(perm: f64, observed: f64) -> bool {
    perm >= observed - (1e-12 + 1e-9 * observed.abs().max(perm.abs()))
}

fn smoothed(exceedances: usize, permutations: usize) -> f64 {
    (exceedances + 1) as f64 / (permutations + 1) as f64
}

/// Generic permutation test: the pooled sample is shuffled `permutations`
/// times and split into sizes `(m, n)`.
pub fn permutation_test<F>(
    x: &SampleSet,
    y: &SampleSet,
    statistic: F,
    permutations: usize,
    seed: u64,
) -> Result<PermutationResult>
where
    F: Fn(&SampleSet, &SampleSet) -> Result<f64>,
{
    if permutations == 0 {
        return Err(Error::InvalidConfig("at least one permutation is required".into()));
    }
    let pooled = x.pooled(y)?;
    let observed = statistic(x, y)?;
    let m = x.len();
    let mut idx: Vec<usize> = (0..pooled.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut exceedances = 0;
    for _ in 0..permutations {
        let (chosen, rest) = idx.partial_shuffle(&mut rng, m);
        let px = pooled.select(chosen);
        let py = pooled.select(rest);
        if at_least(statistic(&px, &py)?, observed) {
            exceedances += 1;
        }
    }
    Ok(PermutationResult {
        observed,
        exceedances,
        permutations,
        p_value: smoothed(exceedances, permutations),
    })
}

#[derive(Clone, Copy)]
enum PairFn {
    Gaussian { inv_two_sigma_sq: f64 },
    Distance,
}

impl PairFn {
    #[inline]
    fn eval(self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            PairFn::Gaussian { inv_two_sigma_sq } => (-squared_distance(a, b) * inv_two_sigma_sq).exp(),
            PairFn::Distance => squared_distance(a, b).sqrt(),
        }
    }
}

struct PairMatrix<'a> {
    pooled: &'a SampleSet,
    h: PairFn,
    gram: Option<Vec<f64>>,
    /// Sum over `j != i` of `h(i, j)`.
    row_sums: Vec<f64>,
    /// Sum over ordered pairs `i != j`.
    total: f64,
}

impl<'a> PairMatrix<'a> {
    fn new(pooled: &'a SampleSet, h: PairFn) -> Self {
        let n = pooled.len();
        let mut row_sums = vec![0.0; n];
        let mut gram = (n <= GRAM_LIMIT).then(|| vec![0.0; n * n]);
        for i in 0..n {
            for j in (i + 1)..n {
                let v = h.eval(pooled.point(i), pooled.point(j));
                row_sums[i] += v;
                row_sums[j] += v;
                if let Some(g) = gram.as_mut() {
                    g[i * n + j] = v;
                    g[j * n + i] = v;
                }
            }
        }
        let total = row_sums.iter().sum();
        Self {
            pooled,
            h,
            gram,
            row_sums,
            total,
        }
    }

    /// Ordered-pair sum within `block`.
    fn within(&self, block: &[usize]) -> f64 {
        let mut acc = 0.0;
        match &self.gram {
            Some(g) => {
                let n = self.pooled.len();
                for (a, &i) in block.iter().enumerate() {
                    let row = &g[i * n..(i + 1) * n];
                    for &j in &block[a + 1..] {
                        acc += row[j];
                    }
                }
            }
            None => {
                for (a, &i) in block.iter().enumerate() {
                    let pi = self.pooled.point(i);
                    for &j in &block[a + 1..] {
                        acc += self.h.eval(pi, self.pooled.point(j));
                    }
                }
            }
        }
        2.0 * acc
    }

    /// `(xx, yy, xy)` ordered-pair sums for the split `x_idx | y_idx`.
    fn split_sums(&self, x_idx: &[usize], y_idx: &[usize]) -> (f64, f64, f64) {
        let rx: f64 = x_idx.iter().map(|&i| self.row_sums[i]).sum();
        if x_idx.len() <= y_idx.len() {
            let xx = self.within(x_idx);
            let xy = rx - xx;
            (xx, self.total - xx - 2.0 * xy, xy)
        } else {
            let yy = self.within(y_idx);
            let ry = self.total - rx;
            let xy = ry - yy;
            (self.total - yy - 2.0 * xy, yy, xy)
        }
    }
}

fn combine(statistic: Statistic, (xx, yy, xy): (f64, f64, f64), m: usize, n: usize) -> f64 {
    let (m, n) = (m as f64, n as f64);
    let within = |s: f64, k: f64| if k > 1.0 { s / (k * (k - 1.0)) } else { 0.0 };
    match statistic {
        Statistic::Mmd2 => within(xx, m) + within(yy, n) - 2.0 * xy / (m * n),
        Statistic::Energy => 2.0 * xy / (m * n) - within(xx, m) - within(yy, n),
    }
}

/// Permutation test for MMD² (Gaussian kernel of width `sigma`) or the
/// energy distance. Uses the same shuffles as [`permutation_test`] for a
/// given seed.
pub fn pairwise_permutation_test(
    x: &SampleSet,
    y: &SampleSet,
    statistic: Statistic,
    sigma: f64,
    permutations: usize,
    seed: u64,
) -> Result<PermutationResult> {
    if permutations == 0 {
        return Err(Error::InvalidConfig("at least one permutation is required".into()));
    }
    let min = match statistic {
        Statistic::Mmd2 => 2,
        Statistic::Energy => 1,
    };
    for s in [x, y] {
        if s.len() < min {
            return Err(Error::SampleTooSmall {
                what: "permutation test",
                needed: min,
                got: s.len(),
            });
        }
    }
    if statistic == Statistic::Mmd2 && !(sigma.is_finite() && sigma > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "kernel bandwidth must be positive, got {sigma}"
        )));
    }
    let h = match statistic {
        Statistic::Mmd2 => PairFn::Gaussian {
            inv_two_sigma_sq: 1.0 / (2.0 * sigma * sigma),
        },
        Statistic::Energy => PairFn::Distance,
    };
    let pooled = x.pooled(y)?;
    let (m, n) = (x.len(), y.len());
    let pm = PairMatrix::new(&pooled, h);

    let mut idx: Vec<usize> = (0..m + n).collect();
    let observed = combine(statistic, pm.split_sums(&idx[..m], &idx[m..]), m, n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut exceedances = 0;
    for _ in 0..permutations {
        let (chosen, rest) = idx.partial_shuffle(&mut rng, m);
        let stat = combine(statistic, pm.split_sums(chosen, rest), m, n);
        if at_least(stat, observed) {
            exceedances += 1;
        }
    }
    Ok(PermutationResult {
        observed,
        exceedances,
        permutations,
        p_value: smoothed(exceedances, permutations),
    })
}

/// Full two-sample test: cap both sets, fix the bandwidth on the observed
/// pooled sample, then permute.
pub fn two_sample_test(x: &SampleSet, y: &SampleSet, cfg: &TestConfig, seed: u64) -> Result<TestOutcome> {
    let x = subsample(x, cfg.sample_cap, derive_seed(seed, &["subsample-x"]))?;
    let y = subsample(y, cfg.sample_cap, derive_seed(seed, &["subsample-y"]))?;
    let pooled = x.pooled(&y)?;
    let sigma = median_heuristic(&pooled, derive_seed(seed, &["bandwidth"]))?;
    let r = pairwise_permutation_test(
        &x,
        &y,
        cfg.statistic,
        sigma,
        cfg.permutations,
        derive_seed(seed, &["permutations"]),
    )?;
    Ok(TestOutcome {
        statistic: cfg.statistic,
        statistic_observed: r.observed,
        p_value: r.p_value,
        bandwidth_sigma: sigma,
        exceedances: r.exceedances,
        permutations: r.permutations,
        m: x.len(),
        n: y.len(),
        bh_kept: false,
    })
}

/// Observed MMD² with the Gaussian kernel, reusing the pair-matrix route
/// (handy for cross-checking against [`super::kernel::mmd2_unbiased`]).
pub fn mmd2_via_pair_sums(x: &SampleSet, y: &SampleSet, sigma: f64) -> Result<f64> {
    let pooled = x.pooled(y)?;
    let pm = PairMatrix::new(
        &pooled,
        PairFn::Gaussian {
            inv_two_sigma_sq: 1.0 / (2.0 * sigma * sigma),
        },
    );
    let idx: Vec<usize> = (0..pooled.len()).collect();
    let (m, n) = (x.len(), y.len());
    Ok(combine(Statistic::Mmd2, pm.split_sums(&idx[..m], &idx[m..]), m, n))
}
