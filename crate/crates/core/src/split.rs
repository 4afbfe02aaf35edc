//! Deterministic stratified train/test split.
//!
//! Per class, sample ids are shuffled by a ChaCha8-driven Fisher–Yates
//! permutation keyed on `(seed, class index)`, and the first
//! `round_half_up(fraction * n_c)` go to the training side. The fraction is
//! kept as an exact rational: `0.7` of 5 samples is exactly 3.5 and must
//! round up to 4, which binary floating point gets wrong.

use crate::domain::{Dataset, GradeLabel};
use crate::rng::{fisher_yates, seed_rng};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SplitError {
    #[error("cannot split an empty dataset")]
    EmptyDataset,
    #[error("invalid train fraction {0:?}: must be a decimal in (0, 1]")]
    InvalidFraction(String),
}

/// An exact train fraction in (0, 1], written as a decimal string.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrainFraction {
    numerator: u64,
    denominator: u64,
}

impl TrainFraction {
    pub fn from_ratio(numerator: u64, denominator: u64) -> Result<Self, SplitError> {
        if denominator == 0 || numerator == 0 || numerator > denominator {
            return Err(SplitError::InvalidFraction(format!("{numerator}/{denominator}")));
        }
        Ok(TrainFraction { numerator, denominator })
    }

    /// Number of training samples out of `n`, rounding halves up.
    pub fn train_count(&self, n: usize) -> usize {
        // round_half_up(p*n/q) = floor((2*p*n + q) / (2*q))
        let p = self.numerator as u128;
        let q = self.denominator as u128;
        ((2 * p * n as u128 + q) / (2 * q)) as usize
    }

    pub fn as_f64(&self) -> f64 {
        self.numerator as f64 / self.denominator as f64
    }
}

impl FromStr for TrainFraction {
    type Err = SplitError;

    /// Parse a plain decimal such as "0.7", ".35", or "1".
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || SplitError::InvalidFraction(s.to_string());
        let s = s.trim();
        let (int_part, frac_part) = match s.split_once('.') {
            Some((i, f)) => (i, f),
            None => (s, ""),
        };
        if int_part.is_empty() && frac_part.is_empty() {
            return Err(bad());
        }
        if !int_part.chars().all(|c| c.is_ascii_digit())
            || !frac_part.chars().all(|c| c.is_ascii_digit())
            || frac_part.len() > 18
        {
            return Err(bad());
        }
        let int_val: u64 = if int_part.is_empty() { 0 } else { int_part.parse().map_err(|_| bad())? };
        let frac_val: u64 = if frac_part.is_empty() { 0 } else { frac_part.parse().map_err(|_| bad())? };
        let denominator = 10u64.pow(frac_part.len() as u32);
        let numerator = int_val
            .checked_mul(denominator)
            .and_then(|v| v.checked_add(frac_val))
            .ok_or_else(bad)?;
        TrainFraction::from_ratio(numerator, denominator)
    }
}

impl fmt::Display for TrainFraction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.numerator, self.denominator)
    }
}

impl Serialize for TrainFraction {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&format!("{}/{}", self.numerator, self.denominator))
    }
}

impl<'de> Deserialize<'de> for TrainFraction {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        if let Some((p, q)) = s.split_once('/') {
            let p: u64 = p.trim().parse().map_err(serde::de::Error::custom)?;
            let q: u64 = q.trim().parse().map_err(serde::de::Error::custom)?;
            TrainFraction::from_ratio(p, q).map_err(serde::de::Error::custom)
        } else {
            s.parse().map_err(serde::de::Error::custom)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: TrainFraction,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct SplitResult {
    pub train: Dataset,
    pub test: Dataset,
}

/// Stratified split: the id partition depends only on `(dataset, spec)`.
/// All views of a sample stay on one side.
pub fn stratified_split(dataset: &Dataset, spec: &SplitSpec) -> Result<SplitResult, SplitError> {
    if dataset.is_empty() {
        return Err(SplitError::EmptyDataset);
    }
    let mut train = Vec::new();
    let mut test = Vec::new();
    for class in GradeLabel::ALL {
        let mut indices: Vec<usize> = dataset
            .samples()
            .iter()
            .enumerate()
            .filter(|(_, s)| s.label == class)
            .map(|(i, _)| i)
            .collect();
        let mut rng = seed_rng(spec.seed, "stratified_split", class.index() as u64);
        fisher_yates(&mut indices, &mut rng);
        let k = spec.train_fraction.train_count(indices.len());
        for (pos, &idx) in indices.iter().enumerate() {
            let sample = dataset.samples()[idx].clone();
            if pos < k {
                train.push(sample);
            } else {
                test.push(sample);
            }
        }
    }
    Ok(SplitResult {
        train: Dataset::new(train).expect("ids unique in source"),
        test: Dataset::new(test).expect("ids unique in source"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{OrangeSample, ViewImage};
    use num::{BigRational, FromPrimitive, ToPrimitive};
    use proptest::prelude::*;
    use std::collections::HashSet;

    fn dataset_with_counts(good: usize, bad: usize, undefined: usize) -> Dataset {
        let v = ViewImage::filled(1, 1, [1, 2, 3]);
        let mut samples = Vec::new();
        for (count, label) in
            [(good, GradeLabel::Good), (bad, GradeLabel::Bad), (undefined, GradeLabel::Undefined)]
        {
            for i in 0..count {
                samples.push(
                    OrangeSample::new(format!("{}_{i}", label.canonical_name()), vec![v.clone()], label)
                        .unwrap(),
                );
            }
        }
        Dataset::new(samples).unwrap()
    }

    fn spec(fraction: &str, seed: u64) -> SplitSpec {
        SplitSpec { train_fraction: fraction.parse().unwrap(), seed }
    }

    #[test]
    fn reproduces_reference_counts_at_70_percent() {
        // 111/294/47 split 0.7 -> train 78/206/33 (317), test 33/88/14 (135).
        let ds = dataset_with_counts(111, 294, 47);
        let result = stratified_split(&ds, &spec("0.7", 42)).unwrap();
        assert_eq!(result.train.class_counts().as_array(), [78, 206, 33]);
        assert_eq!(result.test.class_counts().as_array(), [33, 88, 14]);
        assert_eq!(result.train.len(), 317);
        assert_eq!(result.test.len(), 135);
    }

    #[test]
    fn fraction_one_keeps_everything_in_train() {
        let ds = dataset_with_counts(3, 2, 1);
        let result = stratified_split(&ds, &spec("1.0", 0)).unwrap();
        assert_eq!(result.train.len(), 6);
        assert!(result.test.is_empty());
    }

    #[test]
    fn round_half_up_on_small_classes() {
        // 5*0.7 = 3.5 -> 4, 3*0.7 = 2.1 -> 2, 2*0.7 = 1.4 -> 1.
        let ds = dataset_with_counts(5, 3, 2);
        let result = stratified_split(&ds, &spec("0.7", 9)).unwrap();
        assert_eq!(result.train.class_counts().as_array(), [4, 2, 1]);
        assert_eq!(result.train.len(), 7);
        assert_eq!(result.test.len(), 3);
    }

    #[test]
    fn empty_dataset_is_an_error() {
        assert!(matches!(
            stratified_split(&Dataset::empty(), &spec("0.7", 1)),
            Err(SplitError::EmptyDataset)
        ));
    }

    #[test]
    fn split_is_deterministic() {
        let ds = dataset_with_counts(20, 30, 10);
        let a = stratified_split(&ds, &spec("0.7", 1234)).unwrap();
        let b = stratified_split(&ds, &spec("0.7", 1234)).unwrap();
        let ids = |d: &Dataset| d.samples().iter().map(|s| s.id.clone()).collect::<Vec<_>>();
        assert_eq!(ids(&a.train), ids(&b.train));
        assert_eq!(ids(&a.test), ids(&b.test));
    }

    #[test]
    fn seed_changes_membership_but_not_counts() {
        let ds = dataset_with_counts(40, 60, 20);
        let a = stratified_split(&ds, &spec("0.7", 1)).unwrap();
        let b = stratified_split(&ds, &spec("0.7", 2)).unwrap();
        assert_eq!(a.train.class_counts(), b.train.class_counts());
        let ids = |d: &Dataset| d.samples().iter().map(|s| s.id.clone()).collect::<HashSet<_>>();
        assert_ne!(ids(&a.train), ids(&b.train));
    }

    #[test]
    fn fraction_parsing_accepts_decimals_only() {
        assert_eq!("0.7".parse::<TrainFraction>().unwrap(), TrainFraction::from_ratio(7, 10).unwrap());
        assert_eq!("0.70".parse::<TrainFraction>().unwrap(), TrainFraction::from_ratio(70, 100).unwrap());
        assert_eq!("1".parse::<TrainFraction>().unwrap(), TrainFraction::from_ratio(1, 1).unwrap());
        assert_eq!(".5".parse::<TrainFraction>().unwrap(), TrainFraction::from_ratio(5, 10).unwrap());
        for bad in ["0", "1.1", "-0.5", "0.7e0", "abc", "", "."] {
            assert!(bad.parse::<TrainFraction>().is_err(), "{bad:?}");
        }
    }

    #[test]
    fn equivalent_fractions_give_equal_counts() {
        let a: TrainFraction = "0.7".parse().unwrap();
        let b: TrainFraction = "0.700".parse().unwrap();
        for n in 0..200 {
            assert_eq!(a.train_count(n), b.train_count(n));
        }
    }

    /// Independent arithmetic oracle: round_half_up via exact rationals.
    fn oracle_train_count(num: u64, den: u64, n: usize) -> usize {
        let f = BigRational::new(num.into(), den.into());
        let x = f * BigRational::from_usize(n).unwrap();
        let half = BigRational::new(1.into(), 2.into());
        (x + half).floor().to_usize().unwrap()
    }

    proptest! {
        #[test]
        fn train_count_matches_rational_oracle(
            num in 1u64..1000,
            den_extra in 0u64..1000,
            n in 0usize..5000,
        ) {
            let den = num + den_extra;
            let f = TrainFraction::from_ratio(num, den).unwrap();
            prop_assert_eq!(f.train_count(n), oracle_train_count(num, den, n));
        }

        #[test]
        fn split_is_disjoint_and_covering(
            good in 1usize..25,
            bad in 0usize..25,
            undefined in 0usize..25,
            seed in any::<u64>(),
            num in 1u64..10,
        ) {
            let ds = dataset_with_counts(good, bad, undefined);
            let f = TrainFraction::from_ratio(num, 10).unwrap();
            let result = stratified_split(&ds, &SplitSpec { train_fraction: f, seed }).unwrap();
            let train_ids: HashSet<String> =
                result.train.samples().iter().map(|s| s.id.clone()).collect();
            let test_ids: HashSet<String> =
                result.test.samples().iter().map(|s| s.id.clone()).collect();
            prop_assert!(train_ids.is_disjoint(&test_ids));
            let all_ids: HashSet<String> = ds.samples().iter().map(|s| s.id.clone()).collect();
            let union: HashSet<String> = train_ids.union(&test_ids).cloned().collect();
            prop_assert_eq!(union, all_ids);
            // per-class formula
            for class in GradeLabel::ALL {
                let n_c = ds.class_counts().get(class);
                prop_assert_eq!(result.train.class_counts().get(class), f.train_count(n_c));
            }
        }
    }
}
