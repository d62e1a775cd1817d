use std::collections::BTreeMap;

use crate::cluster::Labels;
use crate::error::{Error, Result};
use crate::numcore::Matrix;
use crate::odesolve::ControlPath;

/// Snapshots `X_{t_j}` (D×N each) at strictly increasing times in [0, 1].
#[derive(Clone, Debug, PartialEq)]
pub struct TimeSeriesDataset {
    timestamps: Vec<f64>,
    snapshots: Vec<Matrix>,
    labels: Option<Labels>,
    /// Free-form `key = value` notes carried through the manifest.
    pub provenance: BTreeMap<String, String>,
}

impl TimeSeriesDataset {
    pub fn new(timestamps: Vec<f64>, snapshots: Vec<Matrix>, labels: Option<Labels>) -> Result<Self> {
        if timestamps.is_empty() || timestamps.len() != snapshots.len() {
            return Err(Error::Contract(format!(
                "dataset needs one timestamp per snapshot ({} vs {})",
                timestamps.len(),
                snapshots.len()
            )));
        }
        if let Some(&t) = timestamps.iter().find(|t| !(0.0..=1.0).contains(*t)) {
            return Err(Error::Contract(format!("timestamp {t} outside [0, 1]")));
        }
        if let Some(w) = timestamps.windows(2).find(|w| !(w[0] < w[1])) {
            return Err(Error::Contract(format!(
                "timestamps must be strictly increasing ({} then {})",
                w[0], w[1]
            )));
        }
        let shape = snapshots[0].shape();
        if let Some((j, s)) = snapshots.iter().enumerate().find(|(_, s)| s.shape() != shape) {
            return Err(Error::shape(
                "TimeSeriesDataset::new",
                format!("snapshot {j} is {:?}, snapshot 0 is {shape:?}", s.shape()),
            ));
        }
        if let Some(l) = &labels {
            if l.len() != shape.1 {
                return Err(Error::shape(
                    "TimeSeriesDataset::new",
                    format!("{} labels for {} points", l.len(), shape.1),
                ));
            }
        }
        if snapshots.iter().any(|s| !s.is_finite()) {
            return Err(Error::Contract("snapshots must be finite".into()));
        }
        Ok(TimeSeriesDataset {
            timestamps,
            snapshots,
            labels,
            provenance: BTreeMap::new(),
        })
    }

    pub fn timestamps(&self) -> &[f64] {
        &self.timestamps
    }

    pub fn snapshots(&self) -> &[Matrix] {
        &self.snapshots
    }

    pub fn labels(&self) -> Option<&Labels> {
        self.labels.as_ref()
    }

    /// Rows per snapshot (D).
    pub fn features(&self) -> usize {
        self.snapshots[0].rows()
    }

    /// Columns per snapshot (N).
    pub fn points(&self) -> usize {
        self.snapshots[0].cols()
    }

    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }

    pub fn control_path(&self) -> ControlPath {
        ControlPath::new(self.timestamps.clone(), self.snapshots.clone()).expect("validated on construction")
    }

    /// The snapshots at the given indices (ascending), labels and provenance kept.
    pub fn subset(&self, indices: &[usize]) -> Result<TimeSeriesDataset> {
        if let Some(&i) = indices.iter().find(|&&i| i >= self.len()) {
            return Err(Error::Contract(format!("snapshot index {i} out of range")));
        }
        let mut d = TimeSeriesDataset::new(
            indices.iter().map(|&i| self.timestamps[i]).collect(),
            indices.iter().map(|&i| self.snapshots[i].clone()).collect(),
            self.labels.clone(),
        )?;
        d.provenance = self.provenance.clone();
        Ok(d)
    }
}
