use std::collections::BTreeMap;

use chrono::{NaiveDate, NaiveDateTime};

use super::TimeSeriesFrame;
use crate::error::{Error, Result};

/// Aligns weekly yield with hourly climate at daily resolution.
///
/// Yield is linearly interpolated onto every midnight from the first to the
/// last yield date; each climate channel becomes its mean over that day.
pub fn resample_yield(env_hourly: &TimeSeriesFrame, yield_weekly: &TimeSeriesFrame) -> Result<TimeSeriesFrame> {
    let ys = yield_weekly.timestamps();
    if ys.len() < 2 {
        return Err(Error::InsufficientData(
            "yield interpolation needs at least two measurements".into(),
        ));
    }
    if env_hourly.is_empty() {
        return Err(Error::InsufficientData("empty climate series".into()));
    }
    let env_first = env_hourly.timestamps()[0].date();
    let env_last = env_hourly.timestamps()[env_hourly.len() - 1].date();
    let first_day = ys[0].date();
    let last_day = ys[ys.len() - 1].date();
    if first_day < env_first || last_day > env_last {
        return Err(Error::invalid(format!(
            "yield span {first_day}..{last_day} exceeds climate span {env_first}..{env_last}"
        )));
    }

    // per-day sums over the climate channels
    let mut daily: BTreeMap<NaiveDate, (usize, Vec<f64>)> = BTreeMap::new();
    for (t, ts) in env_hourly.timestamps().iter().enumerate() {
        let entry = daily
            .entry(ts.date())
            .or_insert_with(|| (0, vec![0.0; env_hourly.num_channels()]));
        entry.0 += 1;
        for (acc, col) in entry.1.iter_mut().zip(env_hourly.channels()) {
            *acc += col[t];
        }
    }

    let yv = yield_weekly.target();
    let secs = |t: &NaiveDateTime| t.and_utc().timestamp() as f64;
    let mut timestamps = Vec::new();
    let mut channels = vec![Vec::new(); env_hourly.num_channels()];
    let mut target = Vec::new();
    let mut seg = 0;
    for day in first_day.iter_days().take_while(|d| *d <= last_day) {
        let at = day.and_hms_opt(0, 0, 0).expect("midnight exists");
        let (count, sums) = daily
            .get(&day)
            .ok_or_else(|| Error::InsufficientData(format!("no climate samples on {day}")))?;
        timestamps.push(at);
        for (dst, s) in channels.iter_mut().zip(sums) {
            dst.push(s / *count as f64);
        }
        while seg + 2 < ys.len() && at >= ys[seg + 1] {
            seg += 1;
        }
        let (t0, t1) = (secs(&ys[seg]), secs(&ys[seg + 1]));
        let w = ((secs(&at) - t0) / (t1 - t0)).clamp(0.0, 1.0);
        target.push(yv[seg] + w * (yv[seg + 1] - yv[seg]));
    }
    TimeSeriesFrame::new(
        timestamps,
        env_hourly.channel_names().to_vec(),
        channels,
        yield_weekly.target_name(),
        target,
    )
}
