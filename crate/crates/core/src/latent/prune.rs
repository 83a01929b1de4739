use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::centroids::{Centroid, CentroidSet};
use super::vectors::{common_dimension, LatentVector};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptedCentroid {
    /// Index in the merged set.
    pub id: usize,
    pub before: Vec<f64>,
    pub after: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruneStep {
    pub iteration: usize,
    /// Merged-set index of the removed centroid; `None` for the initial state.
    pub removed: Option<usize>,
    pub adapted: Vec<AdaptedCentroid>,
    pub accuracy: f64,
    /// Merged-set indices still present after this step.
    pub remaining: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruneTrace {
    /// The initial state followed by every accepted removal.
    pub steps: Vec<PruneStep>,
    /// The best removal that failed to improve accuracy, if the loop stopped
    /// for that reason rather than by reaching one centroid per class.
    pub rejected: Option<PruneStep>,
}

impl PruneTrace {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn initial_accuracy(&self) -> f64 {
        self.steps[0].accuracy
    }

    pub fn final_accuracy(&self) -> f64 {
        self.steps.last().expect("initial step").accuracy
    }

    pub fn removed(&self) -> Vec<usize> {
        self.steps.iter().filter_map(|s| s.removed).collect()
    }

    /// Merged-set indices adapted at least once and still present.
    pub fn adapted(&self) -> BTreeSet<usize> {
        let kept: BTreeSet<usize> = self
            .steps
            .last()
            .expect("initial step")
            .remaining
            .iter()
            .copied()
            .collect();
        self.steps
            .iter()
            .flat_map(|s| s.adapted.iter().map(|a| a.id))
            .filter(|id| kept.contains(id))
            .collect()
    }

    /// `iteration,removed_id,accuracy,status` with status `initial`,
    /// `accepted` or `rejected`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("iteration,removed_id,accuracy,status\n");
        let rows = self
            .steps
            .iter()
            .map(|s| (s, if s.removed.is_none() { "initial" } else { "accepted" }))
            .chain(self.rejected.iter().map(|s| (s, "rejected")));
        for (step, status) in rows {
            let removed = step.removed.map(|r| r.to_string()).unwrap_or_default();
            let _ = writeln!(out, "{},{removed},{},{status}", step.iteration, step.accuracy);
        }
        out
    }

    /// Coordinates of every merged centroid for external plotting:
    /// `id,label,origin,state,x0..`. Excluded centroids keep their merged
    /// coordinates; the others show their final position.
    pub fn centroid_csv(&self, merged: &CentroidSet, result: &CentroidSet) -> String {
        let mut out = String::from("id,label,origin,state");
        for k in 0..merged.dimension() {
            let _ = write!(out, ",x{k}");
        }
        out.push('\n');
        let last = self.steps.last().expect("initial step");
        let adapted = self.adapted();
        for (id, c) in merged.centroids().iter().enumerate() {
            let (state, values) = match last.remaining.iter().position(|&r| r == id) {
                None => ("excluded", &c.values),
                Some(pos) if adapted.contains(&id) => ("adapted", &result.get(pos).values),
                Some(pos) => ("constant", &result.get(pos).values),
            };
            let _ = write!(out, "{id},{},{},{state}", c.label, c.origin);
            for v in values {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        out
    }
}

/// Reassigns `validation` to its nearest centroids and moves every centroid
/// with members to their mean. Returns the changed centroids.
fn adapt(set: &mut [Centroid], ids: &[usize], validation: &[LatentVector]) -> Result<Vec<AdaptedCentroid>> {
    let lookup = CentroidSet::new(set.to_vec())?;
    let d = lookup.dimension();
    let mut sums = vec![vec![0.0; d]; set.len()];
    let mut counts = vec![0usize; set.len()];
    for v in validation {
        let j = lookup.nearest(&v.values);
        counts[j] += 1;
        for (s, x) in sums[j].iter_mut().zip(&v.values) {
            *s += x;
        }
    }
    let mut changed = Vec::new();
    for (j, c) in set.iter_mut().enumerate() {
        if counts[j] == 0 {
            continue;
        }
        let mean: Vec<f64> = sums[j].iter().map(|s| s / counts[j] as f64).collect();
        if mean != c.values {
            changed.push(AdaptedCentroid {
                id: ids[j],
                before: std::mem::replace(&mut c.values, mean.clone()),
                after: mean,
            });
        }
    }
    Ok(changed)
}

/// Fraction of each centroid's validation members that share its label;
/// zero for centroids without members.
fn purities(set: &CentroidSet, validation: &[LatentVector]) -> Vec<f64> {
    let mut hits = vec![0usize; set.len()];
    let mut counts = vec![0usize; set.len()];
    for v in validation {
        let j = set.nearest(&v.values);
        counts[j] += 1;
        if set.get(j).label == v.label {
            hits[j] += 1;
        }
    }
    hits.iter()
        .zip(&counts)
        .map(|(&h, &c)| if c == 0 { 0.0 } else { h as f64 / c as f64 })
        .collect()
}

/// Greedy centroid pruning with adaptation.
///
/// Each round tries removing every centroid in turn, adapts the rest to the
/// validation vectors, and keeps the removal with the highest resulting
/// accuracy (lowest member purity, then lowest index, on ties). The removal
/// is accepted only if accuracy strictly improves. The loop stops at the
/// first rejected removal or when one centroid per class remains.
pub fn prune_adapt(merged: &CentroidSet, validation: &[LatentVector]) -> Result<(CentroidSet, PruneTrace)> {
    let d = common_dimension(validation)?;
    if d != merged.dimension() {
        return Err(Error::shape(format!(
            "validation vectors have dimension {d}, centroids {}",
            merged.dimension()
        )));
    }
    let present: BTreeSet<usize> = validation.iter().map(|v| v.label).collect();
    if let Some(missing) = merged.labels().into_iter().find(|l| !present.contains(l)) {
        return Err(Error::InsufficientData(format!(
            "validation set has no example of class {missing}"
        )));
    }
    let num_classes = merged.labels().len();

    let mut current = merged.clone();
    let mut ids: Vec<usize> = (0..merged.len()).collect();
    let mut accuracy = current.accuracy(validation)?;
    let mut trace = PruneTrace {
        steps: vec![PruneStep {
            iteration: 0,
            removed: None,
            adapted: Vec::new(),
            accuracy,
            remaining: ids.clone(),
        }],
        rejected: None,
    };

    while current.len() > num_classes {
        let purity = purities(&current, validation);
        let mut best: Option<(f64, f64, usize, CentroidSet, Vec<AdaptedCentroid>)> = None;
        for i in 0..current.len() {
            let mut candidate: Vec<Centroid> = current.centroids().to_vec();
            candidate.remove(i);
            let mut candidate_ids = ids.clone();
            candidate_ids.remove(i);
            let adapted = adapt(&mut candidate, &candidate_ids, validation)?;
            let set = CentroidSet::new(candidate)?;
            let acc = set.accuracy(validation)?;
            let better = match &best {
                None => true,
                Some((b_acc, b_pur, ..)) => acc > *b_acc || (acc == *b_acc && purity[i] < *b_pur),
            };
            if better {
                best = Some((acc, purity[i], i, set, adapted));
            }
        }
        let (acc, _, i, set, adapted) = best.expect("at least one candidate");
        let removed = ids.remove(i);
        let step = PruneStep {
            iteration: trace.steps.len(),
            removed: Some(removed),
            adapted,
            accuracy: acc,
            remaining: ids.clone(),
        };
        if acc > accuracy {
            accuracy = acc;
            current = set;
            trace.steps.push(step);
        } else {
            trace.rejected = Some(step);
            break;
        }
    }
    Ok((current, trace))
}
