//! Directory-driven dataset catalog, deterministic splitting, image
//! preprocessing and the streaming batch generator.

pub mod image;
pub mod split;
pub mod stream;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::class::{Class, NUM_CLASSES};
use crate::error::{Error, Result};

pub use self::image::{load_and_preprocess, preprocess_bytes, resize_bilinear, IMAGE_SIDE};
pub use split::{split_counts, split_dataset, write_manifest, SplitOptions, Splits};
pub use stream::{batches, Batch, BatchStream, Residency, StreamOptions};

const IMAGE_EXTENSIONS: [&str; 3] = ["jpeg", "jpg", "png"];

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SampleRef {
    pub path: PathBuf,
    pub label: Class,
    /// Randomised patient id from a `CLASS-ID-N` filename, or the bare stem.
    pub patient_id: String,
    pub image_number: Option<u32>,
}

impl SampleRef {
    /// Parses `(disease)-(patient id)-(image number)` from the file stem.
    pub fn from_path(path: PathBuf, label: Class) -> Self {
        let stem = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        let parts: Vec<&str> = stem.splitn(3, '-').collect();
        let parsed = match parts[..] {
            [disease, id, n] if disease.eq_ignore_ascii_case(label.name()) && !id.is_empty() => {
                n.parse::<u32>().ok().map(|n| (id.to_string(), n))
            }
            _ => None,
        };
        let (patient_id, image_number) = match parsed {
            Some((id, n)) => (id, Some(n)),
            None => (stem, None),
        };
        Self {
            path,
            label,
            patient_id,
            image_number,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct DatasetIndex {
    pub samples: Vec<SampleRef>,
    pub counts: [usize; NUM_CLASSES],
    /// Non-fatal findings from the scan (empty class folders, stray entries).
    pub warnings: Vec<String>,
}

impl DatasetIndex {
    pub fn from_samples(mut samples: Vec<SampleRef>) -> Self {
        samples.sort_by(|a, b| a.path.cmp(&b.path));
        let mut counts = [0; NUM_CLASSES];
        for s in &samples {
            counts[s.label.index()] += 1;
        }
        Self {
            samples,
            counts,
            warnings: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

fn is_image(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .map(|e| IMAGE_EXTENSIONS.iter().any(|x| x.eq_ignore_ascii_case(e)))
        .unwrap_or(false)
}

fn warn(warnings: &mut Vec<String>, msg: String) {
    log::warn!("{msg}");
    warnings.push(msg);
}

/// Catalogs `root/{CNV,DME,DRUSEN,NORMAL}/*.{jpeg,jpg,png}`, labelling each
/// image by its folder.
pub fn scan_dataset(root: impl AsRef<Path>) -> Result<DatasetIndex> {
    let root = root.as_ref();
    let entries = std::fs::read_dir(root).map_err(|e| Error::io(root, e))?;
    let mut warnings = Vec::new();
    let mut class_dirs: [Option<PathBuf>; NUM_CLASSES] = Default::default();
    let mut names: Vec<(String, PathBuf)> = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(root, e))?;
        names.push((entry.file_name().to_string_lossy().into_owned(), entry.path()));
    }
    names.sort();
    for (name, path) in names {
        match name.parse::<Class>() {
            Ok(class) if path.is_dir() && name == class.name() => class_dirs[class.index()] = Some(path),
            _ => warn(&mut warnings, format!("skipping unrecognised entry {}", path.display())),
        }
    }

    let mut samples = Vec::new();
    for class in Class::ALL {
        let Some(dir) = &class_dirs[class.index()] else {
            warn(&mut warnings, format!("class folder {} is missing", class.name()));
            continue;
        };
        let mut files = Vec::new();
        for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
            let path = entry.map_err(|e| Error::io(dir, e))?.path();
            if path.is_file() && is_image(&path) {
                files.push(path);
            } else {
                warn(&mut warnings, format!("skipping non-image entry {}", path.display()));
            }
        }
        if files.is_empty() {
            warn(&mut warnings, format!("class folder {} has no images", class.name()));
        }
        samples.extend(files.into_iter().map(|p| SampleRef::from_path(p, class)));
    }
    if samples.is_empty() {
        return Err(Error::EmptyDataset(root.to_path_buf()));
    }
    let mut index = DatasetIndex::from_samples(samples);
    index.warnings = warnings;
    Ok(index)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_dataset_filenames() {
        let s = SampleRef::from_path("data/CNV/CNV-1016042-12.jpeg".into(), Class::Cnv);
        assert_eq!(s.patient_id, "1016042");
        assert_eq!(s.image_number, Some(12));

        let s = SampleRef::from_path("data/DME/scan_a.png".into(), Class::Dme);
        assert_eq!(s.patient_id, "scan_a");
        assert_eq!(s.image_number, None);

        // Prefix disagreeing with the folder falls back to the stem.
        let s = SampleRef::from_path("data/DME/CNV-1-2.png".into(), Class::Dme);
        assert_eq!(s.patient_id, "CNV-1-2");
    }

    #[test]
    fn missing_root_is_io_error() {
        let err = scan_dataset("/nonexistent/octx/root").unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }
}
