//! Dataset manifest: `key = value` lines naming one matrix CSV per snapshot.
//!
//! ```text
//! format_version = 1
//! d = 30
//! n = 105
//! t = 3
//! timestamps = 1, 3, 6
//! time_scale = 6
//! files = x_000.csv, x_001.csv, x_002.csv
//! labels = labels.csv
//! provenance.seed = 0
//! ```
//!
//! Timestamps are divided by `time_scale` (default 1) and must land in
//! [0, 1]. Relative file names resolve against the manifest's directory.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::field::format_f64;

use super::csv::{labels_to_csv, parse_labels_csv, parse_matrix_csv, write_matrix_csv};
use super::{write_atomic, TimeSeriesDataset};

pub const MANIFEST_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.txt";

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub d: usize,
    pub n: usize,
    pub t: usize,
    /// As written in the file, before `time_scale`.
    pub timestamps: Vec<f64>,
    pub time_scale: f64,
    pub files: Vec<String>,
    pub labels: Option<String>,
    pub provenance: BTreeMap<String, String>,
}

impl DatasetManifest {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("format_version = {}\n", self.format_version));
        out.push_str(&format!("d = {}\nn = {}\nt = {}\n", self.d, self.n, self.t));
        let ts: Vec<String> = self.timestamps.iter().map(|&t| format_f64(t)).collect();
        out.push_str(&format!("timestamps = {}\n", ts.join(", ")));
        if self.time_scale != 1.0 {
            out.push_str(&format!("time_scale = {}\n", format_f64(self.time_scale)));
        }
        out.push_str(&format!("files = {}\n", self.files.join(", ")));
        if let Some(l) = &self.labels {
            out.push_str(&format!("labels = {l}\n"));
        }
        for (k, v) in &self.provenance {
            out.push_str(&format!("provenance.{k} = {v}\n"));
        }
        out
    }

    pub fn parse(text: &str, origin: &Path) -> Result<DatasetManifest> {
        let fail = |field: &str, msg: String| Error::Load {
            path: origin.to_path_buf(),
            field: field.to_string(),
            msg,
        };
        let mut kv: BTreeMap<String, String> = BTreeMap::new();
        let mut provenance = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| fail(&format!("line {}", lineno + 1), format!("expected `key = value`, got `{line}`")))?;
            let (k, v) = (k.trim().to_string(), v.trim().to_string());
            if let Some(p) = k.strip_prefix("provenance.") {
                provenance.insert(p.to_string(), v);
                continue;
            }
            if !["format_version", "d", "n", "t", "timestamps", "time_scale", "files", "labels"].contains(&k.as_str()) {
                return Err(fail(&k, "unknown manifest key".into()));
            }
            if kv.insert(k.clone(), v).is_some() {
                return Err(fail(&k, "key given twice".into()));
            }
        }
        let get = |k: &str| kv.get(k).ok_or_else(|| fail(k, "missing".into()));
        let int = |k: &str| -> Result<usize> {
            get(k)?.parse().map_err(|_| fail(k, format!("`{}` is not a nonnegative integer", kv[k])))
        };
        let format_version = int("format_version")? as u32;
        if format_version != MANIFEST_VERSION {
            return Err(fail("format_version", format!("unsupported version {format_version}")));
        }
        let (d, n, t) = (int("d")?, int("n")?, int("t")?);
        let timestamps = get("timestamps")?
            .split(',')
            .map(|s| s.trim().parse::<f64>().map_err(|_| fail("timestamps", format!("`{}` is not a number", s.trim()))))
            .collect::<Result<Vec<f64>>>()?;
        let time_scale = match kv.get("time_scale") {
            Some(s) => s.parse::<f64>().map_err(|_| fail("time_scale", format!("`{s}` is not a number")))?,
            None => 1.0,
        };
        if !(time_scale > 0.0 && time_scale.is_finite()) {
            return Err(fail("time_scale", format!("must be positive, got {time_scale}")));
        }
        let files: Vec<String> = get("files")?.split(',').map(|s| s.trim().to_string()).collect();
        if timestamps.len() != t {
            return Err(fail("timestamps", format!("{} values for t = {t}", timestamps.len())));
        }
        if files.len() != t {
            return Err(fail("files", format!("{} files for t = {t}", files.len())));
        }
        if let Some(w) = timestamps.windows(2).find(|w| !(w[0] < w[1])) {
            return Err(fail("timestamps", format!("not strictly increasing ({} then {})", w[0], w[1])));
        }
        if let Some(&x) = timestamps.iter().find(|&&x| !(0.0..=1.0).contains(&(x / time_scale))) {
            return Err(fail("timestamps", format!("{x} / {time_scale} falls outside [0, 1]")));
        }
        Ok(DatasetManifest {
            format_version,
            d,
            n,
            t,
            timestamps,
            time_scale,
            files,
            labels: kv.get("labels").cloned(),
            provenance,
        })
    }

    pub fn normalized_timestamps(&self) -> Vec<f64> {
        self.timestamps.iter().map(|&t| t / self.time_scale).collect()
    }
}

fn resolve(base: &Path, name: &str) -> PathBuf {
    let p = Path::new(name);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// Reads a manifest and every file it names. Nothing is returned unless the
/// whole dataset validates.
pub fn load_dataset(manifest_path: &Path) -> Result<TimeSeriesDataset> {
    let text = fs::read_to_string(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
    let m = DatasetManifest::parse(&text, manifest_path)?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let fail = |field: String, msg: String| Error::Load {
        path: manifest_path.to_path_buf(),
        field,
        msg,
    };
    let mut snapshots = Vec::with_capacity(m.t);
    for (i, name) in m.files.iter().enumerate() {
        let path = resolve(base, name);
        let field = format!("files[{i}]");
        let text = fs::read_to_string(&path).map_err(|e| fail(field.clone(), format!("cannot read {}: {e}", path.display())))?;
        let x = parse_matrix_csv(&text, &path, &field)?;
        if x.shape() != (m.d, m.n) {
            return Err(fail(field, format!("{} is {:?}, manifest says {}x{}", name, x.shape(), m.d, m.n)));
        }
        snapshots.push(x);
    }
    let labels = match &m.labels {
        None => None,
        Some(name) => {
            let path = resolve(base, name);
            let text = fs::read_to_string(&path)
                .map_err(|e| fail("labels".into(), format!("cannot read {}: {e}", path.display())))?;
            let l = parse_labels_csv(&text, &path)?;
            if l.len() != m.n {
                return Err(fail("labels".into(), format!("{} labels, manifest says n = {}", l.len(), m.n)));
            }
            Some(l)
        }
    };
    let mut data = TimeSeriesDataset::new(m.normalized_timestamps(), snapshots, labels)
        .map_err(|e| fail("dataset".into(), e.to_string()))?;
    data.provenance = m.provenance;
    Ok(data)
}

/// Writes `x_000.csv`…, `labels.csv` (when present) and `manifest.txt`
/// into `dir`, creating it if needed; returns the manifest path.
pub fn save_dataset(dir: &Path, data: &TimeSeriesDataset) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let files: Vec<String> = (0..data.len()).map(|i| format!("x_{i:03}.csv")).collect();
    for (name, x) in files.iter().zip(data.snapshots()) {
        write_matrix_csv(&dir.join(name), x)?;
    }
    let labels = match data.labels() {
        Some(l) => {
            write_atomic(&dir.join("labels.csv"), labels_to_csv(l).as_bytes())?;
            Some("labels.csv".to_string())
        }
        None => None,
    };
    for (k, v) in &data.provenance {
        if k.contains('=') || k.contains('\n') || v.contains('\n') || k.trim() != k || v.trim() != v {
            return Err(Error::Contract(format!("provenance entry `{k}` cannot be written to a manifest")));
        }
    }
    let m = DatasetManifest {
        format_version: MANIFEST_VERSION,
        d: data.features(),
        n: data.points(),
        t: data.len(),
        timestamps: data.timestamps().to_vec(),
        time_scale: 1.0,
        files,
        labels,
        provenance: data.provenance.clone(),
    };
    let path = dir.join(MANIFEST_FILE);
    write_atomic(&path, m.to_text().as_bytes())?;
    Ok(path)
}
