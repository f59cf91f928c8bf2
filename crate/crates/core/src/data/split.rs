use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};

/// Tolerance on `train + val + test = 1`.
pub const FRACTION_SUM_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSpec {
    pub train: f64,
    pub val: f64,
    pub test: f64,
    #[serde(default)]
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self::new(0.8, 0.1, 0.1, 0)
    }
}

impl SplitSpec {
    pub const fn new(train: f64, val: f64, test: f64, seed: u64) -> Self {
        Self { train, val, test, seed }
    }

    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, f) in [("train", self.train), ("val", self.val), ("test", self.test)] {
            if !(f > 0.0) || !f.is_finite() {
                return Err(Error::invalid(format!("{name} fraction must be positive, got {f}")));
            }
        }
        let s = self.train + self.val + self.test;
        if (s - 1.0).abs() > FRACTION_SUM_TOLERANCE {
            return Err(Error::invalid(format!("split fractions sum to {s}, not 1")));
        }
        Ok(())
    }

    /// Split sizes for `n` samples. Train and val are rounded and kept at
    /// least 1; test takes the remainder and is also at least 1.
    pub fn sizes(&self, n: usize) -> Result<(usize, usize, usize)> {
        self.validate()?;
        if n < 3 {
            return Err(Error::invalid(format!("splitting needs at least 3 samples, got {n}")));
        }
        let tr = ((self.train * n as f64).round() as usize).clamp(1, n - 2);
        let va = ((self.val * n as f64).round() as usize).clamp(1, n - 1 - tr);
        Ok((tr, va, n - tr - va))
    }

    /// Seeded permutation cut into contiguous train/val/test index blocks.
    pub fn indices(&self, n: usize) -> Result<(Vec<usize>, Vec<usize>, Vec<usize>)> {
        let (tr, va, _) = self.sizes(n)?;
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(self.seed));
        let test = idx.split_off(tr + va);
        let val = idx.split_off(tr);
        Ok((idx, val, test))
    }
}

pub fn split(data: &Dataset, spec: &SplitSpec) -> Result<(Dataset, Dataset, Dataset)> {
    let (a, b, c) = spec.indices(data.len())?;
    Ok((data.subset(&a), data.subset(&b), data.subset(&c)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn eighty_ten_ten() {
        assert_eq!(SplitSpec::default().sizes(10).unwrap(), (8, 1, 1));
        assert_eq!(SplitSpec::new(0.98, 0.01, 0.01, 0).sizes(3).unwrap(), (1, 1, 1));
        assert!(SplitSpec::default().sizes(2).is_err());
        assert!(SplitSpec::new(0.8, 0.1, 0.2, 0).validate().is_err());
        assert!(SplitSpec::new(1.0, 0.0, 0.0, 0).validate().is_err());
    }

    #[test]
    fn reproducible() {
        let d = Dataset::from_scalars(&(0..20).map(f64::from).collect::<Vec<_>>(), &[0.0; 20]).unwrap();
        let s = SplitSpec::default().with_seed(7);
        let (a, _, _) = split(&d, &s).unwrap();
        let (b, _, _) = split(&d, &s).unwrap();
        assert_eq!(a, b);
        let (c, _, _) = split(&d, &s.with_seed(8)).unwrap();
        assert_ne!(a.features, c.features);
    }

    proptest! {
        #[test]
        fn split_is_a_bijection(n in 3usize..300, seed in any::<u64>(), t in 0.05f64..0.9, v in 0.01f64..0.5) {
            prop_assume!(t + v < 0.99);
            let spec = SplitSpec::new(t, v, 1.0 - t - v, seed);
            let (a, b, c) = spec.indices(n).unwrap();
            prop_assert!(!a.is_empty() && !b.is_empty() && !c.is_empty());
            let mut all: Vec<usize> = a.into_iter().chain(b).chain(c).collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        }
    }
}
