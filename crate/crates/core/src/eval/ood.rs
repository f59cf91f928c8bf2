use crate::data::Dataset;
use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct OodSplit {
    /// Samples whose feature is strictly greater than the threshold.
    pub in_domain: Dataset,
    pub out_of_domain: Dataset,
}

impl OodSplit {
    pub fn counts(&self) -> (usize, usize) {
        (self.in_domain.len(), self.out_of_domain.len())
    }
}

/// Partitions by `feature > threshold` on the (already standardized)
/// feature column. Empty partitions are logged, not rejected.
pub fn ood_split(data: &Dataset, feature: usize, threshold: f64) -> Result<OodSplit> {
    if feature >= data.n_features() {
        return Err(Error::invalid(format!(
            "feature index {feature} out of range for {} features",
            data.n_features()
        )));
    }
    if data.standardization.is_none() {
        log::warn!("ood_split on a dataset without recorded standardization");
    }
    let (inside, outside): (Vec<usize>, Vec<usize>) = (0..data.len()).partition(|&i| data.x(i)[feature] > threshold);
    let split = OodSplit {
        in_domain: data.subset(&inside),
        out_of_domain: data.subset(&outside),
    };
    let (a, b) = split.counts();
    if a == 0 || b == 0 {
        log::warn!("ood_split: empty partition ({a} in-domain, {b} out-of-domain)");
    }
    Ok(split)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_partition() {
        let d = Dataset::from_scalars(&[-1.0, 0.5, 0.0, 2.0], &[1.0, 2.0, 3.0, 4.0]).unwrap();
        let s = ood_split(&d, 0, 0.0).unwrap();
        assert_eq!(s.in_domain.targets, vec![2.0, 4.0]);
        assert_eq!(s.out_of_domain.targets, vec![1.0, 3.0]);
        let all = ood_split(&d, 0, -5.0).unwrap();
        assert_eq!(all.counts(), (4, 0));
        assert!(ood_split(&d, 1, 0.0).is_err());
    }
}
