use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{DatasetIndex, SampleRef};
use crate::class::{Class, NUM_CLASSES};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SplitOptions {
    pub seed: u64,
    /// Keep every image of a patient inside one split.
    pub group_by_patient: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Splits {
    pub train: Vec<SampleRef>,
    pub validation: Vec<SampleRef>,
    pub test: Vec<SampleRef>,
    pub seed: u64,
}

impl Splits {
    /// Per-class `(train, validation, test)` sizes.
    pub fn class_counts(&self) -> [(usize, usize, usize); NUM_CLASSES] {
        let mut out = [(0, 0, 0); NUM_CLASSES];
        for s in &self.train {
            out[s.label.index()].0 += 1;
        }
        for s in &self.validation {
            out[s.label.index()].1 += 1;
        }
        for s in &self.test {
            out[s.label.index()].2 += 1;
        }
        out
    }
}

/// Split sizes for a class of `n` samples: validation and test get
/// `floor(n/5)` each, train keeps the rest.
pub fn split_counts(n: usize) -> (usize, usize, usize) {
    let holdout = n / 5;
    (n - 2 * holdout, holdout, holdout)
}

fn class_seed(seed: u64, class: Class) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(class.index() as u64 + 1)
}

/// Shuffles each class with the seeded generator, then takes validation and
/// test from the front and leaves the remainder for training.
pub fn split_dataset(index: &DatasetIndex, options: SplitOptions) -> Result<Splits> {
    for class in Class::ALL {
        let n = index.counts[class.index()];
        if n < 3 {
            return Err(Error::Split {
                class: class.name(),
                count: n,
            });
        }
    }
    if options.group_by_patient {
        return split_by_patient(index, options.seed);
    }
    let mut splits = Splits {
        seed: options.seed,
        ..Default::default()
    };
    for class in Class::ALL {
        let mut members: Vec<&SampleRef> = index.samples.iter().filter(|s| s.label == class).collect();
        members.shuffle(&mut ChaCha8Rng::seed_from_u64(class_seed(options.seed, class)));
        let (_, n_val, n_test) = split_counts(members.len());
        splits.validation.extend(members[..n_val].iter().map(|&s| s.clone()));
        splits.test.extend(members[n_val..n_val + n_test].iter().map(|&s| s.clone()));
        splits.train.extend(members[n_val + n_test..].iter().map(|&s| s.clone()));
    }
    Ok(splits)
}

/// Patient-grouped variant: patients are shuffled and assigned whole to
/// validation, then test, until each holds `floor(n/5)` images.
fn split_by_patient(index: &DatasetIndex, seed: u64) -> Result<Splits> {
    let mut patients: BTreeMap<&str, Vec<&SampleRef>> = BTreeMap::new();
    for s in &index.samples {
        patients.entry(s.patient_id.as_str()).or_default().push(s);
    }
    let mut groups: Vec<Vec<&SampleRef>> = patients.into_values().collect();
    groups.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (_, target, _) = split_counts(index.len());
    let mut splits = Splits {
        seed,
        ..Default::default()
    };
    for group in groups {
        let dest = if splits.validation.len() < target {
            &mut splits.validation
        } else if splits.test.len() < target {
            &mut splits.test
        } else {
            &mut splits.train
        };
        dest.extend(group.into_iter().cloned());
    }
    Ok(splits)
}

/// Writes `path<TAB>label<TAB>split` lines, train then validation then test.
pub fn write_manifest(splits: &Splits, path: impl AsRef<Path>) -> Result<()> {
    let mut out = String::new();
    for (name, list) in [
        ("train", &splits.train),
        ("validation", &splits.validation),
        ("test", &splits.test),
    ] {
        for s in list {
            let _ = writeln!(out, "{}\t{}\t{}", s.path.display(), s.label.name(), name);
        }
    }
    let path = path.as_ref();
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}
