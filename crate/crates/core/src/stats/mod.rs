//! Two-sample testing: kernel and energy statistics, permutation p-values,
//! Benjamini–Hochberg selection and the KS test.

mod fdr;
mod kernel;
mod ks;
mod permutation;
mod sample;

pub use fdr::bh_fdr;
pub use kernel::{
    energy_distance, gaussian_kernel, median_heuristic, mmd2_unbiased, squared_distance, MEDIAN_HEURISTIC_CAP,
};
pub use ks::{kolmogorov_survival, ks_statistic, ks_two_sample, KsOutcome};
pub use permutation::{
    mmd2_via_pair_sums, pairwise_permutation_test, permutation_test, two_sample_test, PermutationResult, Statistic,
    TestConfig, TestOutcome,
};
pub use sample::{subsample, SampleSet};
