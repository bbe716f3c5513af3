//! Two-sample Kolmogorov–Smirnov test with the asymptotic p-value.

use crate::error::{Error, Result};

const TERMS: usize = 20;
/// Below this λ the theta-function form of the Kolmogorov CDF converges
/// faster than the alternating survival series.
const SMALL_LAMBDA: f64 = 1.18;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KsOutcome {
    pub statistic: f64,
    pub p_value: f64,
}

/// `sup_t |F_x(t) - F_y(t)|`, evaluated after every distinct value.
pub fn ks_statistic(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.is_empty() || y.is_empty() {
        return Err(Error::SampleTooSmall {
            what: "KS test",
            needed: 1,
            got: 0,
        });
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::InvalidGrid("KS sample contains non-finite values".into()));
    }
    let mut a = x.to_vec();
    let mut b = y.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (m, n) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let t = a[i].min(b[j]);
        while i < a.len() && a[i] <= t {
            i += 1;
        }
        while j < b.len() && b[j] <= t {
            j += 1;
        }
        d = d.max((i as f64 / m - j as f64 / n).abs());
    }
    // One side exhausted: the other ECDF only rises toward 1, so the gap
    // can only shrink from here.
    Ok(d)
}

/// `P(K > lambda)` for the Kolmogorov distribution.
pub fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda.is_nan() || lambda <= 0.0 {
        return 1.0;
    }
    if lambda < SMALL_LAMBDA {
        let c = std::f64::consts::PI * std::f64::consts::PI / (8.0 * lambda * lambda);
        let cdf: f64 = (1..=TERMS)
            .map(|k| {
                let o = (2 * k - 1) as f64;
                (-o * o * c).exp()
            })
            .sum::<f64>()
            * (2.0 * std::f64::consts::PI).sqrt()
            / lambda;
        (1.0 - cdf).clamp(0.0, 1.0)
    } else {
        let s: f64 = (1..=TERMS)
            .map(|k| {
                let kf = k as f64;
                let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
                sign * (-2.0 * kf * kf * lambda * lambda).exp()
            })
            .sum();
        (2.0 * s).clamp(0.0, 1.0)
    }
}

/// Asymptotic two-sample test with effective size `mn / (m + n)`. The
/// p-value is clamped into `(0, 1]`.
pub fn ks_two_sample(x: &[f64], y: &[f64]) -> Result<KsOutcome> {
    let d = ks_statistic(x, y)?;
    let (m, n) = (x.len() as f64, y.len() as f64);
    let lambda = (m * n / (m + n)).sqrt() * d;
    let p = kolmogorov_survival(lambda).max(f64::MIN_POSITIVE);
    Ok(KsOutcome {
        statistic: d,
        p_value: p,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn identical_and_disjoint() {
        let x = [0.3, 0.1, 0.2, 0.2];
        let r = ks_two_sample(&x, &[0.2, 0.1, 0.2, 0.3]).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.p_value, 1.0);
        assert_eq!(ks_statistic(&[0.0, 0.0, 0.0], &[1.0, 1.0, 1.0]).unwrap(), 1.0);
        assert!(ks_two_sample(&[], &[1.0]).is_err());
    }

    #[test]
    fn statistic_matches_grid_oracle() {
        // Direct evaluation of both ECDFs at every sample value.
        let x = [0.1, 0.5, 0.5, 0.9, 1.3];
        let y = [0.2, 0.5, 0.7, 0.7];
        let ecdf = |s: &[f64], t: f64| s.iter().filter(|&&v| v <= t).count() as f64 / s.len() as f64;
        let oracle = x
            .iter()
            .chain(&y)
            .map(|&t| (ecdf(&x, t) - ecdf(&y, t)).abs())
            .fold(0.0, f64::max);
        assert_eq!(ks_statistic(&x, &y).unwrap(), oracle);
    }

    #[test]
    fn survival_reference_values() {
        // Tabulated Kolmogorov distribution quantiles.
        for (lambda, p) in [(1.3581, 0.05), (1.6276, 0.01), (1.2239, 0.10), (0.8276, 0.50)] {
            let q = kolmogorov_survival(lambda);
            assert!((q - p).abs() < 2e-4, "lambda {lambda}: {q} vs {p}");
        }
        // Both series forms agree where they overlap.
        for lambda in [0.9, 1.0, 1.1, 1.18, 1.3, 1.5] {
            let c = std::f64::consts::PI.powi(2) / (8.0 * lambda * lambda);
            let theta = 1.0
                - (1..=40).map(|k| (-((2 * k - 1) as f64).powi(2) * c).exp()).sum::<f64>()
                    * (2.0 * std::f64::consts::PI).sqrt()
                    / lambda;
            let alt = 2.0
                * (1..=40)
                    .map(|k| (-1f64).powi(k - 1) * (-2.0 * (k * k) as f64 * lambda * lambda).exp())
                    .sum::<f64>();
            assert!((theta - alt).abs() < 1e-10);
            assert!((kolmogorov_survival(lambda) - alt).abs() < 1e-10);
        }
        assert_eq!(kolmogorov_survival(0.0), 1.0);
        assert!(kolmogorov_survival(0.05) <= 1.0);
        assert!(kolmogorov_survival(10.0) >= 0.0);
    }

    #[test]
    fn separated_samples_give_tiny_p() {
        let x: Vec<f64> = (0..500).map(|i| i as f64).collect();
        let y: Vec<f64> = (0..500).map(|i| 1000.0 + i as f64).collect();
        let r = ks_two_sample(&x, &y).unwrap();
        assert_eq!(r.statistic, 1.0);
        assert!(r.p_value > 0.0 && r.p_value < 1e-100);
    }

    /// The statistic lives on a lattice of step 1/100 at m = n = 100, so the
    /// null p-values are discrete; they must not be anti-conservative.
    #[test]
    fn null_p_values_are_super_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let nd = Normal::new(0.0, 1.0).unwrap();
        let trials = 500;
        let ps: Vec<f64> = (0..trials)
            .map(|_| {
                let x: Vec<f64> = (0..100).map(|_| nd.sample(&mut rng)).collect();
                let y: Vec<f64> = (0..100).map(|_| nd.sample(&mut rng)).collect();
                ks_two_sample(&x, &y).unwrap().p_value
            })
            .collect();
        let band = 2.5 * (0.25f64 / trials as f64).sqrt();
        for t in [0.01, 0.05, 0.1, 0.2, 0.3, 0.5, 0.7, 0.9] {
            let frac = ps.iter().filter(|&&p| p <= t).count() as f64 / trials as f64;
            assert!(frac <= t + band, "P(p <= {t}) = {frac}");
        }
        let mean = ps.iter().sum::<f64>() / trials as f64;
        assert!((0.45..0.65).contains(&mean), "mean p {mean}");
    }
}
