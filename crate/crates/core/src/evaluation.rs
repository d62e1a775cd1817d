//! Clustering accuracy under the best one-to-one label matching.

use serde::{Deserialize, Serialize};

use crate::cluster::Labels;
use crate::error::{Error, Result};

/// Largest label count searched by brute-force permutation.
pub const EXHAUSTIVE_MAX_K: usize = 8;

/// Confusion counts `m[p][t]` = points predicted `p` with truth `t`,
/// padded to a square of side max(k_pred, k_truth).
fn confusion(pred: &Labels, truth: &Labels) -> Vec<Vec<usize>> {
    let k = pred.k().max(truth.k());
    let mut m = vec![vec![0usize; k]; k];
    for (&p, &t) in pred.as_slice().iter().zip(truth.as_slice()) {
        m[p][t] += 1;
    }
    m
}

fn check_lengths(pred: &Labels, truth: &Labels) -> Result<()> {
    if pred.len() != truth.len() {
        return Err(Error::Contract(format!(
            "label vectors differ in length ({} vs {})",
            pred.len(),
            truth.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::Contract("cannot score empty labelings".into()));
    }
    Ok(())
}

/// Best matching by trying every permutation (Heap's algorithm).
pub fn best_matching_exhaustive(pred: &Labels, truth: &Labels) -> Result<(usize, Vec<usize>)> {
    check_lengths(pred, truth)?;
    let m = confusion(pred, truth);
    let k = m.len();
    if k > EXHAUSTIVE_MAX_K {
        return Err(Error::Contract(format!("exhaustive matching limited to k <= {EXHAUSTIVE_MAX_K}")));
    }
    let mut perm: Vec<usize> = (0..k).collect();
    let score = |p: &[usize]| p.iter().enumerate().map(|(i, &j)| m[i][j]).sum::<usize>();
    let mut best = (score(&perm), perm.clone());
    let mut c = vec![0usize; k];
    let mut i = 0;
    while i < k {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            let s = score(&perm);
            if s > best.0 {
                best = (s, perm.clone());
            }
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    Ok(best)
}

/// Best matching via the Hungarian method on the confusion matrix.
pub fn best_matching_hungarian(pred: &Labels, truth: &Labels) -> Result<(usize, Vec<usize>)> {
    check_lengths(pred, truth)?;
    let m = confusion(pred, truth);
    let k = m.len();
    let max = m.iter().flatten().copied().max().unwrap_or(0) as i64;
    let cost: Vec<Vec<i64>> = m
        .iter()
        .map(|row| row.iter().map(|&c| max - c as i64).collect())
        .collect();
    let assign = hungarian_min(&cost);
    let total = assign.iter().enumerate().map(|(i, &j)| m[i][j]).sum();
    debug_assert_eq!(assign.len(), k);
    Ok((total, assign))
}

/// Minimum-cost perfect assignment on a square matrix; returns the column
/// for each row. Shortest augmenting paths with row/column potentials.
fn hungarian_min(cost: &[Vec<i64>]) -> Vec<usize> {
    let n = cost.len();
    const INF: i64 = i64::MAX / 4;
    // 1-based internal arrays; index 0 is the virtual root.
    let mut u = vec![0i64; n + 1];
    let mut v = vec![0i64; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![INF; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = INF;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assign = vec![0usize; n];
    for j in 1..=n {
        if p[j] > 0 {
            assign[p[j] - 1] = j - 1;
        }
    }
    assign
}

/// Best matching; `mapping[p]` is the truth label assigned to predicted `p`.
pub fn best_matching(pred: &Labels, truth: &Labels) -> Result<(usize, Vec<usize>)> {
    if pred.k().max(truth.k()) <= EXHAUSTIVE_MAX_K {
        best_matching_exhaustive(pred, truth)
    } else {
        best_matching_hungarian(pred, truth)
    }
}

/// Fraction of points correctly labeled under the best matching.
pub fn clustering_accuracy(pred: &Labels, truth: &Labels) -> Result<f64> {
    let (hits, _) = best_matching(pred, truth)?;
    Ok(hits as f64 / pred.len() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepScore {
    pub time: f64,
    pub accuracy: f64,
    pub misclassification: f64,
    /// Truth label for each predicted label.
    pub matching: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub method: String,
    pub steps: Vec<StepScore>,
    pub mean_accuracy: f64,
    pub mean_misclassification: f64,
}

pub fn accuracy_curve(method: &str, times: &[f64], preds: &[Labels], truths: &[Labels]) -> Result<EvalReport> {
    if preds.len() != truths.len() || preds.len() != times.len() {
        return Err(Error::Contract(format!(
            "accuracy_curve needs aligned inputs ({} times, {} predictions, {} truths)",
            times.len(),
            preds.len(),
            truths.len()
        )));
    }
    let mut steps = Vec::with_capacity(preds.len());
    for ((&time, p), t) in times.iter().zip(preds).zip(truths) {
        let (hits, matching) = best_matching(p, t)?;
        let accuracy = hits as f64 / p.len() as f64;
        steps.push(StepScore {
            time,
            accuracy,
            misclassification: 1.0 - accuracy,
            matching,
        });
    }
    let n = steps.len().max(1) as f64;
    let mean_accuracy = steps.iter().map(|s| s.accuracy).sum::<f64>() / n;
    Ok(EvalReport {
        method: method.to_string(),
        mean_accuracy,
        mean_misclassification: 1.0 - mean_accuracy,
        steps,
    })
}

impl EvalReport {
    /// Mean accuracy over steps whose time satisfies `keep`.
    pub fn mean_accuracy_where(&self, keep: impl Fn(f64) -> bool) -> Option<f64> {
        let picked: Vec<f64> = self.steps.iter().filter(|s| keep(s.time)).map(|s| s.accuracy).collect();
        (!picked.is_empty()).then(|| picked.iter().sum::<f64>() / picked.len() as f64)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("time,accuracy,misclassification\n");
        for s in &self.steps {
            out.push_str(&format!(
                "{},{},{}\n",
                crate::field::format_f64(s.time),
                crate::field::format_f64(s.accuracy),
                crate::field::format_f64(s.misclassification)
            ));
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}
