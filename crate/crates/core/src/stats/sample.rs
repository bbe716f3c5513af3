use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Points of a fixed feature dimension, stored flat.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    dim: usize,
    data: Vec<f64>,
}

impl SampleSet {
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidGrid("feature dimension must be at least 1".into()));
        }
        if !data.len().is_multiple_of(dim) {
            return Err(Error::InvalidGrid(format!(
                "{} values do not form points of dimension {dim}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidGrid("sample contains non-finite values".into()));
        }
        Ok(Self { dim, data })
    }

    /// One-dimensional samples.
    pub fn scalar(values: Vec<f64>) -> Result<Self> {
        Self::new(1, values)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn point(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    /// Concatenation `self ∪ other`, with `self` first.
    pub fn pooled(&self, other: &SampleSet) -> Result<SampleSet> {
        if self.dim != other.dim {
            return Err(Error::FeatureDimension(self.dim, other.dim));
        }
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        Ok(SampleSet { dim: self.dim, data })
    }

    pub fn select(&self, indices: &[usize]) -> SampleSet {
        let mut data = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            data.extend_from_slice(self.point(i));
        }
        SampleSet { dim: self.dim, data }
    }
}

/// Uniform draw of `cap` points without replacement when the set is larger;
/// the set itself otherwise. Selected points keep their original order.
pub fn subsample(set: &SampleSet, cap: usize, seed: u64) -> Result<SampleSet> {
    if cap < 2 {
        return Err(Error::InvalidConfig(format!(
            "sample cap must be at least 2, got {cap}"
        )));
    }
    if set.len() <= cap {
        return Ok(set.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = index::sample(&mut rng, set.len(), cap).into_vec();
    picked.sort_unstable();
    Ok(set.select(&picked))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn under_cap_is_identity() {
        let s = SampleSet::scalar((0..100).map(f64::from).collect()).unwrap();
        assert_eq!(subsample(&s, 4000, 1).unwrap(), s);
    }

    #[test]
    fn over_cap_draws_distinct_members() {
        let s = SampleSet::scalar((0..10_000).map(f64::from).collect()).unwrap();
        let sub = subsample(&s, 4000, 42).unwrap();
        assert_eq!(sub.len(), 4000);
        let distinct: HashSet<u64> = sub.as_flat().iter().map(|v| v.to_bits()).collect();
        assert_eq!(distinct.len(), 4000);
        assert!(sub
            .as_flat()
            .iter()
            .all(|&v| (0.0..10_000.0).contains(&v) && v.fract() == 0.0));
        assert_eq!(sub, subsample(&s, 4000, 42).unwrap());
        assert_ne!(sub, subsample(&s, 4000, 43).unwrap());
    }

    #[test]
    fn vector_points() {
        let s = SampleSet::new(2, vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        assert_eq!(s.len(), 3);
        assert_eq!(s.point(1), &[2.0, 3.0]);
        let sub = subsample(&s, 2, 0).unwrap();
        assert_eq!(sub.dim(), 2);
        assert_eq!(sub.len(), 2);
        assert!(SampleSet::new(2, vec![1.0; 3]).is_err());
        assert!(SampleSet::scalar(vec![f64::INFINITY]).is_err());
        assert!(subsample(&s, 1, 0).is_err());
        let other = SampleSet::scalar(vec![1.0]).unwrap();
        assert!(s.pooled(&other).is_err());
    }
}
