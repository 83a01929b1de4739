use std::path::Path;

use chrono::{DateTime, NaiveDate, NaiveDateTime};

use crate::error::{Error, Result};

pub const TIMESTAMP_FORMAT: &str = "%Y-%m-%dT%H:%M:%S";

/// Timestamped multivariate series: environmental channels plus one target.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesFrame {
    timestamps: Vec<NaiveDateTime>,
    channel_names: Vec<String>,
    channels: Vec<Vec<f64>>,
    target_name: String,
    target: Vec<f64>,
}

impl TimeSeriesFrame {
    pub fn new(
        timestamps: Vec<NaiveDateTime>,
        channel_names: Vec<String>,
        channels: Vec<Vec<f64>>,
        target_name: impl Into<String>,
        target: Vec<f64>,
    ) -> Result<Self> {
        if channel_names.len() != channels.len() {
            return Err(Error::shape(format!(
                "{} channel names for {} channels",
                channel_names.len(),
                channels.len()
            )));
        }
        let n = timestamps.len();
        if target.len() != n || channels.iter().any(|c| c.len() != n) {
            return Err(Error::shape("all columns must match the timestamp count"));
        }
        if let Some(i) = timestamps.windows(2).position(|w| w[0] >= w[1]) {
            return Err(Error::invalid(format!(
                "timestamps not strictly increasing at row {}",
                i + 1
            )));
        }
        let all_finite = target.iter().chain(channels.iter().flatten()).all(|v| v.is_finite());
        if !all_finite {
            return Err(Error::invalid("frame contains non-finite values"));
        }
        Ok(Self {
            timestamps,
            channel_names,
            channels,
            target_name: target_name.into(),
            target,
        })
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn timestamps(&self) -> &[NaiveDateTime] {
        &self.timestamps
    }

    pub fn channel_names(&self) -> &[String] {
        &self.channel_names
    }

    pub fn num_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn channel(&self, i: usize) -> &[f64] {
        &self.channels[i]
    }

    pub fn channels(&self) -> &[Vec<f64>] {
        &self.channels
    }

    pub fn target_name(&self) -> &str {
        &self.target_name
    }

    pub fn target(&self) -> &[f64] {
        &self.target
    }

    /// Number of model input features per time step: every channel plus the
    /// past target.
    pub fn num_features(&self) -> usize {
        self.channels.len() + 1
    }

    /// Feature `j` at row `t`; the target is the last feature.
    #[inline]
    pub fn feature(&self, t: usize, j: usize) -> f64 {
        if j < self.channels.len() {
            self.channels[j][t]
        } else {
            self.target[t]
        }
    }

    pub fn slice(&self, range: std::ops::Range<usize>) -> TimeSeriesFrame {
        TimeSeriesFrame {
            timestamps: self.timestamps[range.clone()].to_vec(),
            channel_names: self.channel_names.clone(),
            channels: self.channels.iter().map(|c| c[range.clone()].to_vec()).collect(),
            target_name: self.target_name.clone(),
            target: self.target[range].to_vec(),
        }
    }

    pub(crate) fn with_values(&self, channels: Vec<Vec<f64>>, target: Vec<f64>) -> Self {
        debug_assert_eq!(channels.len(), self.channels.len());
        TimeSeriesFrame {
            timestamps: self.timestamps.clone(),
            channel_names: self.channel_names.clone(),
            channels,
            target_name: self.target_name.clone(),
            target,
        }
    }

    /// Reads a CSV whose first column is an ISO-8601 timestamp. The target is
    /// the column named `target`, or the last column when `None`.
    pub fn read_csv(path: &Path, target: Option<&str>) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::from_reader(file, path, target)
    }

    pub fn from_reader<R: std::io::Read>(reader: R, path: &Path, target: Option<&str>) -> Result<Self> {
        let parse_err = |line: usize, message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
        if headers.len() < 2 {
            return Err(parse_err(
                1,
                "need a timestamp column and at least one value column".into(),
            ));
        }
        let target_col = match target {
            Some(name) => headers[1..]
                .iter()
                .position(|h| h == name)
                .map(|p| p + 1)
                .ok_or_else(|| parse_err(1, format!("no column named `{name}`")))?,
            None => headers.len() - 1,
        };
        let value_cols: Vec<usize> = (1..headers.len()).filter(|&c| c != target_col).collect();

        let mut timestamps = Vec::new();
        let mut channels = vec![Vec::new(); value_cols.len()];
        let mut target_values = Vec::new();
        for record in rdr.records() {
            let record = record?;
            let line = record.position().map_or(0, |p| p.line() as usize);
            if record.len() != headers.len() {
                return Err(parse_err(
                    line,
                    format!("expected {} fields, found {}", headers.len(), record.len()),
                ));
            }
            let ts = parse_timestamp(&record[0])
                .ok_or_else(|| parse_err(line, format!("unparseable timestamp `{}`", &record[0])))?;
            if let Some(prev) = timestamps.last() {
                if ts <= *prev {
                    return Err(parse_err(line, "timestamps must be strictly increasing".into()));
                }
            }
            timestamps.push(ts);
            let parse_value = |col: usize| -> Result<f64> {
                let raw = &record[col];
                match raw.parse::<f64>() {
                    Ok(v) if v.is_finite() => Ok(v),
                    _ => Err(parse_err(line, format!("column `{}`: bad value `{raw}`", headers[col]))),
                }
            };
            for (dst, &col) in channels.iter_mut().zip(&value_cols) {
                dst.push(parse_value(col)?);
            }
            target_values.push(parse_value(target_col)?);
        }
        let names = value_cols.iter().map(|&c| headers[c].clone()).collect();
        Self::new(timestamps, names, channels, headers[target_col].clone(), target_values)
    }

    /// Writes `timestamp,<channels...>,<target>`.
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["timestamp".to_owned()];
        header.extend(self.channel_names.iter().cloned());
        header.push(self.target_name.clone());
        w.write_record(&header)?;
        for t in 0..self.len() {
            let mut row = vec![self.timestamps[t].format(TIMESTAMP_FORMAT).to_string()];
            row.extend(self.channels.iter().map(|c| c[t].to_string()));
            row.push(self.target[t].to_string());
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn parse_timestamp(s: &str) -> Option<NaiveDateTime> {
    const FORMATS: [&str; 4] = [
        "%Y-%m-%dT%H:%M:%S",
        "%Y-%m-%d %H:%M:%S",
        "%Y-%m-%dT%H:%M",
        "%Y-%m-%d %H:%M",
    ];
    FORMATS
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(s, f).ok())
        .or_else(|| DateTime::parse_from_rfc3339(s).ok().map(|d| d.naive_utc()))
        .or_else(|| {
            NaiveDate::parse_from_str(s, "%Y-%m-%d")
                .ok()
                .and_then(|d| d.and_hms_opt(0, 0, 0))
        })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn csv_frame(text: &str) -> Result<TimeSeriesFrame> {
        TimeSeriesFrame::from_reader(text.as_bytes(), Path::new("mem.csv"), None)
    }

    #[test]
    fn parses_header_and_target_column() {
        let f = csv_frame("timestamp,co2,stem\n2024-01-01T00:00:00,400,0.1\n2024-01-01 01:00:00,410,0.2\n").unwrap();
        assert_eq!(f.channel_names(), &["co2".to_owned()]);
        assert_eq!(f.target_name(), "stem");
        assert_eq!(f.target(), &[0.1, 0.2]);

        let g = TimeSeriesFrame::from_reader(
            "timestamp,co2,stem\n2024-01-01,400,0.1\n2024-01-02,410,0.2\n".as_bytes(),
            Path::new("mem.csv"),
            Some("co2"),
        )
        .unwrap();
        assert_eq!(g.target(), &[400.0, 410.0]);
        assert_eq!(g.channel_names(), &["stem".to_owned()]);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let err = csv_frame("timestamp,a\n2024-01-01T00:00:00,1\nnot-a-time,2\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
        let err = csv_frame("timestamp,a\n2024-01-01T00:00:00,1\n2024-01-01T01:00:00,x\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
        let err = csv_frame("timestamp,a\n2024-01-01T01:00:00,1\n2024-01-01T00:00:00,2\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
        let err = csv_frame("timestamp,a\n2024-01-01T01:00:00,NaN\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
    }

    #[test]
    fn write_then_read_is_identity() {
        let f = csv_frame("timestamp,a,b,y\n2024-01-01T00:00:00,1.5,2,0.25\n2024-01-01T01:00:00,-3,4e-3,1\n").unwrap();
        let mut buf = Vec::new();
        f.write_csv(&mut buf).unwrap();
        let back = TimeSeriesFrame::from_reader(buf.as_slice(), Path::new("mem"), None).unwrap();
        assert_eq!(back, f);
    }
}
