//! Files on disk: dataset manifests, matrix and label CSVs, run configs.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

mod config;
mod csv;
mod dataset;
mod manifest;

pub use config::{FieldConfig, RunConfig};
pub use csv::{
    labels_to_csv, matrix_to_csv, parse_labels_csv, parse_matrix_csv, read_matrix_csv, write_matrix_csv, LabelSeries,
};
pub use dataset::TimeSeriesDataset;
pub use manifest::{load_dataset, save_dataset, DatasetManifest, MANIFEST_FILE, MANIFEST_VERSION};
/// Writes `bytes` to a sibling temp file, then renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::Config(format!("{} has no file name", path.display())))?;
    let tmp = path.with_file_name(format!(".{}.tmp", file_name.to_string_lossy()));
    {
        let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
        f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    }
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}
