use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default fraction shaved off every predicted safe-off duration before
/// comparing it with the event length.
pub const DEFAULT_SAFETY_MARGIN: f64 = 0.1;

/// Eligible counts up to this size are solved exactly.
pub const EXACT_LIMIT: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FleetCandidate {
    pub fridge_id: String,
    pub predicted_safe_off_s: f64,
    pub power_kw: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SelectionMethod {
    Exact,
    Greedy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FleetPlan {
    pub selected: Vec<String>,
    /// Predicted safe-off duration of each selected fridge, aligned with
    /// `selected`.
    pub predicted_safe_off_s: Vec<f64>,
    pub total_power_kw: f64,
    pub required_kw: f64,
    pub event_duration_s: f64,
    pub method: SelectionMethod,
}

impl FleetPlan {
    pub fn len(&self) -> usize {
        self.selected.len()
    }

    pub fn is_empty(&self) -> bool {
        self.selected.is_empty()
    }

    /// `fridge_id,predicted_safe_off_s,selected` for every candidate.
    pub fn write_csv<W: Write>(&self, candidates: &[FleetCandidate], writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["fridge_id", "predicted_safe_off_s", "selected"])?;
        for c in candidates {
            let chosen = self.selected.contains(&c.fridge_id);
            w.write_record([
                c.fridge_id.as_str(),
                &c.predicted_safe_off_s.to_string(),
                if chosen { "true" } else { "false" },
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Fridges whose margin-discounted prediction covers the event.
pub fn eligible<'a>(candidates: &'a [FleetCandidate], event_duration_s: f64, margin: f64) -> Vec<&'a FleetCandidate> {
    candidates
        .iter()
        .filter(|c| c.predicted_safe_off_s * (1.0 - margin) >= event_duration_s)
        .collect()
}

/// Picks the fewest eligible fridges whose combined power meets
/// `required_kw`.
///
/// With at most [`EXACT_LIMIT`] eligible fridges every subset of the
/// minimum size is searched and the one with the smallest surplus wins
/// (then the lexicographically smallest sorted id list). Larger pools take
/// fridges in order of descending power, which reaches the same minimum
/// size but not necessarily the smallest surplus.
pub fn select_fleet(
    candidates: &[FleetCandidate],
    required_kw: f64,
    event_duration_s: f64,
    margin: f64,
) -> Result<FleetPlan> {
    select(candidates, required_kw, event_duration_s, margin, EXACT_LIMIT)
}

pub(crate) fn select(
    candidates: &[FleetCandidate],
    required_kw: f64,
    event_duration_s: f64,
    margin: f64,
    exact_limit: usize,
) -> Result<FleetPlan> {
    if !(required_kw >= 0.0 && required_kw.is_finite()) {
        return Err(Error::invalid(
            "required reduction must be a finite, non-negative number of kW",
        ));
    }
    if !(event_duration_s >= 0.0 && event_duration_s.is_finite()) || !(0.0..1.0).contains(&margin) {
        return Err(Error::invalid(
            "event duration must be non-negative and the margin in [0, 1)",
        ));
    }
    if let Some(c) = candidates
        .iter()
        .find(|c| !(c.power_kw >= 0.0 && c.power_kw.is_finite()) || c.predicted_safe_off_s.is_nan())
    {
        return Err(Error::invalid(format!(
            "fridge {} has an invalid power or prediction",
            c.fridge_id
        )));
    }
    let mut ids: Vec<&str> = candidates.iter().map(|c| c.fridge_id.as_str()).collect();
    ids.sort_unstable();
    if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
        return Err(Error::DuplicateId(w[0].to_string()));
    }

    let mut pool = eligible(candidates, event_duration_s, margin);
    pool.sort_by(|a, b| {
        b.power_kw
            .total_cmp(&a.power_kw)
            .then_with(|| a.fridge_id.cmp(&b.fridge_id))
    });
    let method = if pool.len() <= exact_limit {
        SelectionMethod::Exact
    } else {
        SelectionMethod::Greedy
    };
    let plan = |chosen: Vec<&FleetCandidate>| FleetPlan {
        total_power_kw: chosen.iter().map(|c| c.power_kw).sum(),
        selected: chosen.iter().map(|c| c.fridge_id.clone()).collect(),
        predicted_safe_off_s: chosen.iter().map(|c| c.predicted_safe_off_s).collect(),
        required_kw,
        event_duration_s,
        method,
    };
    if required_kw == 0.0 {
        return Ok(plan(Vec::new()));
    }
    let achievable: f64 = pool.iter().map(|c| c.power_kw).fold(0.0, |a, p| a + p);
    // Descending power: the shortest feasible prefix has the minimum size.
    let mut running = 0.0;
    let Some(size) = pool.iter().position(|c| {
        running += c.power_kw;
        running >= required_kw
    }) else {
        return Err(Error::Infeasible {
            required_kw,
            achievable_kw: achievable,
        });
    };
    let size = size + 1;
    if method == SelectionMethod::Greedy {
        let mut chosen = pool[..size].to_vec();
        chosen.sort_by(|a, b| a.fridge_id.cmp(&b.fridge_id));
        return Ok(plan(chosen));
    }

    let mut best: Option<(f64, Vec<&str>, Vec<usize>)> = None;
    let mut combo: Vec<usize> = (0..size).collect();
    loop {
        let power: f64 = combo.iter().map(|&i| pool[i].power_kw).sum();
        if power >= required_kw {
            let mut names: Vec<&str> = combo.iter().map(|&i| pool[i].fridge_id.as_str()).collect();
            names.sort_unstable();
            let better = best
                .as_ref()
                .is_none_or(|(p, n, _)| power.total_cmp(p).then_with(|| names.cmp(n)) == std::cmp::Ordering::Less);
            if better {
                best = Some((power, names, combo.clone()));
            }
        }
        if !next_combination(&mut combo, pool.len()) {
            break;
        }
    }
    let (_, _, indices) = best.expect("the greedy prefix is feasible");
    let mut chosen: Vec<&FleetCandidate> = indices.iter().map(|&i| pool[i]).collect();
    chosen.sort_by(|a, b| a.fridge_id.cmp(&b.fridge_id));
    Ok(plan(chosen))
}

/// Advances `combo` to the next k-subset of `0..n` in lexicographic order.
fn next_combination(combo: &mut [usize], n: usize) -> bool {
    let k = combo.len();
    for i in (0..k).rev() {
        if combo[i] < n - k + i {
            combo[i] += 1;
            for j in i + 1..k {
                combo[j] = combo[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

#[derive(Debug, Deserialize)]
struct FleetRow {
    fridge_id: String,
    power_kw: f64,
    #[serde(default)]
    predicted_safe_off_s: Option<f64>,
}

/// One row of a fleet spec: power and, optionally, a precomputed
/// prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct FleetSpecRow {
    pub fridge_id: String,
    pub power_kw: f64,
    pub predicted_safe_off_s: Option<f64>,
}

/// Reads `fridge_id,power_kw[,predicted_safe_off_s]`.
pub fn read_fleet_csv<R: Read>(reader: R) -> Result<Vec<FleetSpecRow>> {
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    r.deserialize::<FleetRow>()
        .map(|row| {
            let row = row?;
            Ok(FleetSpecRow {
                fridge_id: row.fridge_id,
                power_kw: row.power_kw,
                predicted_safe_off_s: row.predicted_safe_off_s,
            })
        })
        .collect()
}

pub fn read_fleet_file(path: &Path) -> Result<Vec<FleetSpecRow>> {
    read_fleet_csv(std::fs::File::open(path)?)
}
