//! Pairwise two-sample statistics: unbiased MMD² with a Gaussian kernel and
//! the energy distance.

use crate::error::{Error, Result};

use super::sample::{subsample, SampleSet};

/// Pooled samples larger than this are subsampled before the median
/// heuristic.
pub const MEDIAN_HEURISTIC_CAP: usize = 2000;

#[inline]
pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[inline]
pub fn gaussian_kernel(a: &[f64], b: &[f64], sigma: f64) -> f64 {
    (-squared_distance(a, b) / (2.0 * sigma * sigma)).exp()
}

/// Median of all pairwise Euclidean distances in `pooled` (mean of the two
/// middle values for an even count). Returns 1 when the median is 0.
pub fn median_heuristic(pooled: &SampleSet, seed: u64) -> Result<f64> {
    if pooled.len() < 2 {
        return Err(Error::SampleTooSmall {
            what: "median heuristic",
            needed: 2,
            got: pooled.len(),
        });
    }
    let pts = subsample(pooled, MEDIAN_HEURISTIC_CAP, seed)?;
    let n = pts.len();
    let mut d = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            d.push(squared_distance(pts.point(i), pts.point(j)).sqrt());
        }
    }
    let k = d.len();
    let upper = *d.select_nth_unstable_by(k / 2, f64::total_cmp).1;
    let median = if k % 2 == 1 {
        upper
    } else {
        // The lower middle is the max of the left partition.
        let lower = d[..k / 2].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lower + upper)
    };
    Ok(if median > 0.0 { median } else { 1.0 })
}

fn check_sizes(x: &SampleSet, y: &SampleSet, min: usize, what: &'static str) -> Result<()> {
    if x.dim() != y.dim() {
        return Err(Error::FeatureDimension(x.dim(), y.dim()));
    }
    for s in [x, y] {
        if s.len() < min {
            return Err(Error::SampleTooSmall {
                what,
                needed: min,
                got: s.len(),
            });
        }
    }
    Ok(())
}

fn pair_sums(x: &SampleSet, y: &SampleSet, h: impl Fn(&[f64], &[f64]) -> f64) -> (f64, f64, f64) {
    let within = |s: &SampleSet| {
        let mut acc = 0.0;
        for i in 0..s.len() {
            for j in (i + 1)..s.len() {
                acc += h(s.point(i), s.point(j));
            }
        }
        2.0 * acc
    };
    let mut cross = 0.0;
    for a in x.points() {
        for b in y.points() {
            cross += h(a, b);
        }
    }
    (within(x), within(y), cross)
}

/// Unbiased MMD² U-statistic; may be negative.
pub fn mmd2_unbiased(x: &SampleSet, y: &SampleSet, sigma: f64) -> Result<f64> {
    check_sizes(x, y, 2, "unbiased MMD²")?;
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "kernel bandwidth must be positive, got {sigma}"
        )));
    }
    let (xx, yy, xy) = pair_sums(x, y, |a, b| gaussian_kernel(a, b, sigma));
    let (m, n) = (x.len() as f64, y.len() as f64);
    Ok(xx / (m * (m - 1.0)) + yy / (n * (n - 1.0)) - 2.0 * xy / (m * n))
}

/// Two-sample energy statistic
/// `2 E|X-Y| - E|X-X'| - E|Y-Y'|`, within-sample means over distinct
/// ordered pairs (zero for a singleton).
pub fn energy_distance(x: &SampleSet, y: &SampleSet) -> Result<f64> {
    check_sizes(x, y, 1, "energy distance")?;
    let (xx, yy, xy) = pair_sums(x, y, |a, b| squared_distance(a, b).sqrt());
    let (m, n) = (x.len() as f64, y.len() as f64);
    let within = |s: f64, k: f64| if k > 1.0 { s / (k * (k - 1.0)) } else { 0.0 };
    Ok(2.0 * xy / (m * n) - within(xx, m) - within(yy, n))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn s(v: &[f64]) -> SampleSet {
        SampleSet::scalar(v.to_vec()).unwrap()
    }

    #[test]
    fn median_heuristic_fixtures() {
        assert_eq!(median_heuristic(&s(&[0.0, 2.0]), 0).unwrap(), 2.0);
        assert_eq!(median_heuristic(&s(&[0.0, 1.0, 3.0]), 0).unwrap(), 2.0);
        assert_eq!(median_heuristic(&s(&[4.0, 4.0, 4.0]), 0).unwrap(), 1.0);
        // Distances {1, 2, 3, 1, 2, 1} -> sorted 1 1 1 2 2 3 -> (1 + 2) / 2.
        assert_eq!(median_heuristic(&s(&[0.0, 1.0, 2.0, 3.0]), 0).unwrap(), 1.5);
        assert!(median_heuristic(&s(&[1.0]), 0).is_err());
        let v = SampleSet::new(2, vec![0.0, 0.0, 3.0, 4.0]).unwrap();
        assert_eq!(median_heuristic(&v, 0).unwrap(), 5.0);
    }

    #[test]
    fn mmd_identical_degenerate_is_zero() {
        for sigma in [0.1, 1.0, 7.0] {
            assert_eq!(mmd2_unbiased(&s(&[0.0, 0.0]), &s(&[0.0, 0.0]), sigma).unwrap(), 0.0);
        }
    }

    #[test]
    fn mmd_closed_form() {
        // c^2 / (2 sigma^2) = ln 2, so the cross kernel is exactly 1/2.
        let sigma = 1.3;
        let c = (2.0 * sigma * sigma * std::f64::consts::LN_2).sqrt();
        let v = mmd2_unbiased(&s(&[0.0, 0.0]), &s(&[c, c]), sigma).unwrap();
        assert!((v - 1.0).abs() < 1e-12, "{v}");
    }

    #[test]
    fn mmd_size_errors() {
        assert!(mmd2_unbiased(&s(&[0.0]), &s(&[0.0, 1.0]), 1.0).is_err());
        assert!(mmd2_unbiased(&s(&[0.0, 1.0]), &s(&[0.0, 1.0]), 0.0).is_err());
    }

    #[test]
    fn energy_fixtures() {
        assert_eq!(energy_distance(&s(&[0.0, 0.0]), &s(&[0.0, 0.0])).unwrap(), 0.0);
        assert_eq!(energy_distance(&s(&[0.0]), &s(&[2.0])).unwrap(), 4.0);
        assert!(energy_distance(&s(&[]), &s(&[1.0])).is_err());
    }

    #[test]
    fn energy_grows_with_shift() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = Normal::new(0.0, 1.0).unwrap();
        let x: Vec<f64> = (0..100).map(|_| n.sample(&mut rng)).collect();
        let y: Vec<f64> = (0..100).map(|_| n.sample(&mut rng)).collect();
        let shifted: Vec<f64> = y.iter().map(|v| v + 1.5).collect();
        let base = energy_distance(&s(&x), &s(&y)).unwrap();
        let moved = energy_distance(&s(&x), &s(&shifted)).unwrap();
        assert!(moved > base, "{moved} <= {base}");
    }

    #[test]
    fn mmd_is_unbiased_under_null() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let n = Normal::new(0.0, 1.0).unwrap();
        let trials = 200;
        let vals: Vec<f64> = (0..trials)
            .map(|_| {
                let x: Vec<f64> = (0..200).map(|_| n.sample(&mut rng)).collect();
                let y: Vec<f64> = (0..200).map(|_| n.sample(&mut rng)).collect();
                mmd2_unbiased(&s(&x), &s(&y), 1.0).unwrap()
            })
            .collect();
        let mean = vals.iter().sum::<f64>() / trials as f64;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (trials - 1) as f64;
        let se = (var / trials as f64).sqrt();
        assert!(mean.abs() <= 3.0 * se, "mean {mean} se {se}");
    }
}
