//! Labeled image collections and their on-disk manifest format.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::ImageTensor;
use crate::io::{load_image, save_image};
use crate::rng::SeededRng;

/// One dataset entry: an image plus its class label and a unique id.
#[derive(Clone, Debug)]
pub struct DatasetItem {
    pub image: ImageTensor,
    pub label: String,
    pub id: String,
}

/// An ordered, homogeneous collection of labeled images.
#[derive(Clone, Debug, Default)]
pub struct Dataset {
    items: Vec<DatasetItem>,
}

/// Manifest row as stored in `manifest.json` (order significant).
#[derive(Serialize, Deserialize)]
struct ManifestEntry {
    id: String,
    relative_path: String,
    label: String,
}

impl Dataset {
    pub fn new() -> Self {
        Self { items: Vec::new() }
    }

    /// Push an item, enforcing unique ids and a homogeneous shape.
    pub fn push(&mut self, item: DatasetItem) -> Result<()> {
        if self.items.iter().any(|it| it.id == item.id) {
            return Err(Error::DuplicateId(item.id));
        }
        if let Some(first) = self.items.first() {
            if !first.image.same_shape(&item.image) {
                return Err(first.image.shape_error(&item.image));
            }
        }
        self.items.push(item);
        Ok(())
    }

    pub fn from_items(items: Vec<DatasetItem>) -> Result<Self> {
        let mut d = Dataset::new();
        for item in items {
            d.push(item)?;
        }
        Ok(d)
    }

    pub fn items(&self) -> &[DatasetItem] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, DatasetItem> {
        self.items.iter()
    }

    /// Map every image through `f`, keeping ids and labels.
    pub fn map_images(&self, mut f: impl FnMut(&ImageTensor) -> ImageTensor) -> Dataset {
        Dataset {
            items: self
                .items
                .iter()
                .map(|it| DatasetItem {
                    image: f(&it.image),
                    label: it.label.clone(),
                    id: it.id.clone(),
                })
                .collect(),
        }
    }

    /// Write images as PNGs plus a `manifest.json` into `dir`.
    pub fn save_dir(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut manifest = Vec::with_capacity(self.items.len());
        for item in &self.items {
            let rel = format!("{}.png", item.id);
            save_image(&item.image, dir.join(&rel))?;
            manifest.push(ManifestEntry {
                id: item.id.clone(),
                relative_path: rel,
                label: item.label.clone(),
            });
        }
        let json = serde_json::to_string_pretty(&manifest)
            .expect("manifest entries are serializable");
        fs::write(dir.join("manifest.json"), json + "\n")
            .map_err(|e| Error::io(dir.join("manifest.json"), e))
    }

    /// Load a dataset directory written by [`Dataset::save_dir`].
    pub fn load_dir(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let manifest_path = dir.join("manifest.json");
        let json = fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
        let entries: Vec<ManifestEntry> = serde_json::from_str(&json).map_err(|e| {
            Error::CorruptImage {
                path: manifest_path.clone(),
                detail: format!("bad manifest: {e}"),
            }
        })?;
        let mut dataset = Dataset::new();
        for entry in entries {
            let image = load_image(dir.join(&entry.relative_path))?;
            dataset.push(DatasetItem {
                image,
                label: entry.label,
                id: entry.id,
            })?;
        }
        Ok(dataset)
    }
}

/// Shuffled disjoint partition. The first part gets `round(fraction * len)`
/// items; the parts are disjoint and jointly exhaustive.
pub fn split_dataset(
    dataset: &Dataset,
    fraction: f64,
    rng: &mut SeededRng,
) -> Result<(Dataset, Dataset)> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::InvalidArgument(format!(
            "fraction must lie in [0, 1], got {fraction}"
        )));
    }
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    rng.shuffle(&mut order);
    let first_len = (fraction * dataset.len() as f64).round() as usize;
    let mut first = Dataset::new();
    let mut second = Dataset::new();
    for (rank, &idx) in order.iter().enumerate() {
        let item = dataset.items()[idx].clone();
        if rank < first_len {
            first.push(item)?;
        } else {
            second.push(item)?;
        }
    }
    Ok((first, second))
}
