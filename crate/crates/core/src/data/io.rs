//! Manifest format: a JSON description plus raw little-endian sidecar
//! arrays (`f32` features and attributes, `i32` labels). Sidecar paths are
//! relative to the manifest.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{parse_hierarchy, Dataset, Splits};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub name: String,
    pub n: usize,
    pub b_in: usize,
    pub m: usize,
    pub c: usize,
    pub feature_file: String,
    pub attribute_file: String,
    pub label_file: String,
    pub seen: Vec<usize>,
    pub unseen: Vec<usize>,
    pub splits: Splits,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hierarchy_file: Option<String>,
    /// `[h, w]` when each sample is a grid of `B_in`-vectors.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spatial: Option<[usize; 2]>,
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn read_f32(path: &Path, what: &str, count: usize, unit: usize) -> Result<Vec<f64>> {
    let bytes = read_bytes(path)?;
    check_len(&bytes, what, count, unit)?;
    Ok(bytes
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
        .collect())
}

/// `count` records of `unit` 4-byte values each.
fn check_len(bytes: &[u8], what: &str, count: usize, unit: usize) -> Result<()> {
    let record = 4 * unit;
    if bytes.len() != count * record {
        let held = if record > 0 && bytes.len().is_multiple_of(record) {
            format!("{} records", bytes.len() / record)
        } else {
            format!("{} bytes", bytes.len())
        };
        return Err(Error::Data(format!(
            "{what} file holds {held} but the manifest declares {count} records of {unit} values"
        )));
    }
    Ok(())
}

pub fn load_dataset(manifest_path: &Path) -> Result<Dataset> {
    let text = fs::read_to_string(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| Error::json(manifest_path, e))?;
    let dir = manifest_path.parent().unwrap_or(Path::new("."));
    let (h, w) = manifest.spatial.map_or((1, 1), |[h, w]| (h, w));

    let unit = h * w * manifest.b_in;
    let features = read_f32(&dir.join(&manifest.feature_file), "feature", manifest.n, unit)?;
    let shape = match manifest.spatial {
        Some(_) => vec![manifest.n, h, w, manifest.b_in],
        None => vec![manifest.n, manifest.b_in],
    };
    let features = Tensor::new(shape, features)?;

    let attributes = read_f32(&dir.join(&manifest.attribute_file), "attribute", manifest.m, manifest.c)?;
    let attributes = Tensor::new(vec![manifest.m, manifest.c], attributes)?;

    let label_path = dir.join(&manifest.label_file);
    let bytes = read_bytes(&label_path)?;
    check_len(&bytes, "label", manifest.n, 1)?;
    let labels = bytes
        .chunks_exact(4)
        .enumerate()
        .map(|(i, b)| {
            let l = i32::from_le_bytes([b[0], b[1], b[2], b[3]]);
            if l < 0 || l as usize >= manifest.c {
                Err(Error::Data(format!(
                    "label {l} of sample {i} out of range for {} classes",
                    manifest.c
                )))
            } else {
                Ok(l as usize)
            }
        })
        .collect::<Result<Vec<_>>>()?;

    let hierarchy = match &manifest.hierarchy_file {
        Some(file) => {
            let path = dir.join(file);
            let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            Some(parse_hierarchy(&text, manifest.c)?)
        }
        None => None,
    };

    let dataset = Dataset {
        name: manifest.name,
        features,
        labels,
        attributes,
        seen: manifest.seen,
        unseen: manifest.unseen,
        splits: manifest.splits,
        hierarchy,
    };
    dataset.validate()?;
    Ok(dataset)
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn f32_bytes(t: &Tensor) -> Vec<u8> {
    t.data().iter().flat_map(|&x| (x as f32).to_le_bytes()).collect()
}

/// Writes the manifest and its sidecar files next to it. Values are stored
/// at 32-bit precision.
pub fn save_dataset(dataset: &Dataset, manifest_path: &Path) -> Result<()> {
    dataset.validate()?;
    let dir = manifest_path.parent().unwrap_or(Path::new("."));
    if !dir.as_os_str().is_empty() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let stem = manifest_path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("dataset")
        .to_string();
    let sidecar = |ext: &str| -> (String, PathBuf) {
        let file = format!("{stem}.{ext}");
        let path = dir.join(&file);
        (file, path)
    };

    let (feature_file, path) = sidecar("features.f32");
    write(&path, &f32_bytes(&dataset.features))?;
    let (attribute_file, path) = sidecar("attributes.f32");
    write(&path, &f32_bytes(&dataset.attributes))?;
    let (label_file, path) = sidecar("labels.i32");
    let labels: Vec<u8> = dataset.labels.iter().flat_map(|&l| (l as i32).to_le_bytes()).collect();
    write(&path, &labels)?;
    let hierarchy_file = match &dataset.hierarchy {
        Some(h) => {
            let (file, path) = sidecar("hierarchy.json");
            let text = serde_json::to_string_pretty(&h.to_json()).expect("JSON values serialize");
            write(&path, text.as_bytes())?;
            Some(file)
        }
        None => None,
    };

    let manifest = Manifest {
        name: dataset.name.clone(),
        n: dataset.len(),
        b_in: dataset.input_dim(),
        m: dataset.attribute_dim(),
        c: dataset.class_count(),
        feature_file,
        attribute_file,
        label_file,
        seen: dataset.seen.clone(),
        unseen: dataset.unseen.clone(),
        splits: dataset.splits.clone(),
        hierarchy_file,
        spatial: dataset.spatial().map(|(h, w)| [h, w]),
    };
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    write(manifest_path, text.as_bytes())
}
