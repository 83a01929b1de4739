//! Artifact writing, run manifests and SVG plots.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use fsc_core::numerics::tensor_io::{hex_digest, write_atomic};

use crate::config::Settings;
use crate::error::CliError;

fn quoted(s: &str) -> String {
    toml::Value::String(s.to_string()).to_string()
}

/// One subcommand invocation: collects input and artifact digests and
/// writes `manifest.toml` on completion.
pub struct Run {
    pub out: PathBuf,
    subcommand: &'static str,
    settings: Settings,
    options: Vec<(String, String)>,
    inputs: Vec<(String, String)>,
    artifacts: Vec<(String, String)>,
}

impl Run {
    pub fn new(out: &Path, subcommand: &'static str, settings: &Settings) -> Result<Self, CliError> {
        std::fs::create_dir_all(out)?;
        Ok(Self {
            out: out.to_path_buf(),
            subcommand,
            settings: settings.clone(),
            options: Vec::new(),
            inputs: Vec::new(),
            artifacts: Vec::new(),
        })
    }

    /// Records a subcommand flag that is not a configuration key.
    pub fn option(&mut self, name: &str, value: impl ToString) {
        self.options.push((name.to_string(), value.to_string()));
    }

    /// Records the digest of an input file (or of every file below a
    /// directory, in sorted order).
    pub fn input(&mut self, path: &Path) -> Result<(), CliError> {
        if !path.exists() {
            return Err(CliError::Input(format!("{} does not exist", path.display())));
        }
        if path.is_dir() {
            let mut files = Vec::new();
            collect_files(path, &mut files)?;
            files.sort();
            for f in files {
                self.input(&f)?;
            }
        } else {
            let bytes = std::fs::read(path)?;
            self.inputs.push((path.display().to_string(), hex_digest(&bytes)));
        }
        Ok(())
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
        let path = self.out.join(name);
        write_atomic(&path, bytes)?;
        self.artifacts.push((name.to_string(), hex_digest(bytes)));
        Ok(path)
    }

    pub fn write_json<T: serde::Serialize>(&mut self, name: &str, value: &T) -> Result<PathBuf, CliError> {
        let mut text = serde_json::to_string_pretty(value).map_err(fsc_core::Error::from)?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    pub fn fingerprint(&self) -> String {
        hex_digest(self.settings.to_toml().as_bytes())
    }

    /// Writes the manifest: run metadata, input and artifact digests, and
    /// the full resolved configuration in config-file form, so that
    /// `--config manifest.toml` reproduces the run.
    pub fn finish(self) -> Result<PathBuf, CliError> {
        let mut m = String::from("[manifest]\n");
        let _ = writeln!(m, "subcommand = {}", quoted(self.subcommand));
        let _ = writeln!(m, "profile = {}", quoted(self.settings.profile.name()));
        let _ = writeln!(m, "seed = {}", quoted(self.settings.raw("run.seed")));
        let _ = writeln!(m, "config_fingerprint = {}", quoted(&self.fingerprint()));
        let _ = writeln!(m, "fsc_version = {}", quoted(env!("CARGO_PKG_VERSION")));
        let _ = writeln!(m, "fsc_core_version = {}", quoted(fsc_core::VERSION));
        m.push_str("\n[manifest.options]\n");
        for (name, value) in &self.options {
            let _ = writeln!(m, "{} = {}", quoted(name), quoted(value));
        }
        m.push_str("\n[manifest.inputs]\n");
        for (path, digest) in &self.inputs {
            let _ = writeln!(m, "{} = {}", quoted(path), quoted(digest));
        }
        m.push_str("\n[manifest.artifacts]\n");
        for (name, digest) in &self.artifacts {
            let _ = writeln!(m, "{} = {}", quoted(name), quoted(digest));
        }
        m.push('\n');
        m.push_str(&self.settings.to_toml());
        let path = self.out.join("manifest.toml");
        write_atomic(&path, m.as_bytes())?;
        Ok(path)
    }
}

fn collect_files(dir: &Path, out: &mut Vec<PathBuf>) -> Result<(), CliError> {
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_dir() {
            collect_files(&path, out)?;
        } else {
            out.push(path);
        }
    }
    Ok(())
}

const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

/// Line chart of several series against a shared x axis.
pub fn line_chart(title: &str, x_label: &str, x: &[f64], series: &[(&str, &[f64])]) -> String {
    let (w, h, margin) = (800.0, 400.0, 50.0);
    let finite = |v: &&f64| v.is_finite();
    let ys = series.iter().flat_map(|(_, s)| s.iter()).filter(finite);
    let (y_lo, y_hi) = ys.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
        (lo.min(v), hi.max(v))
    });
    let (x_lo, x_hi) = x
        .iter()
        .filter(finite)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let span = |lo: f64, hi: f64| if hi > lo { hi - lo } else { 1.0 };
    let px = |v: f64| margin + (v - x_lo) / span(x_lo, x_hi) * (w - 2.0 * margin);
    let py = |v: f64| h - margin - (v - y_lo) / span(y_lo, y_hi) * (h - 2.0 * margin);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="20" text-anchor="middle">{}</text>"#,
        w / 2.0,
        escape(title)
    );
    let _ = writeln!(
        svg,
        r##"<path d="M{m} {m} V{b} H{r}" fill="none" stroke="#444"/>"##,
        m = margin,
        b = h - margin,
        r = w - margin
    );
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        w / 2.0,
        h - 12.0,
        escape(x_label)
    );
    if y_lo.is_finite() {
        let _ = writeln!(svg, r#"<text x="4" y="{:.2}">{:.4}</text>"#, py(y_hi) + 4.0, y_hi);
        let _ = writeln!(svg, r#"<text x="4" y="{:.2}">{:.4}</text>"#, py(y_lo), y_lo);
    }
    for (i, (name, ys)) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let mut d = String::new();
        let mut pen_down = false;
        for (&xv, &yv) in x.iter().zip(ys.iter()) {
            if !(xv.is_finite() && yv.is_finite()) {
                pen_down = false;
                continue;
            }
            let _ = write!(d, "{}{:.2} {:.2} ", if pen_down { "L" } else { "M" }, px(xv), py(yv));
            pen_down = true;
        }
        let _ = writeln!(
            svg,
            r#"<path d="{}" fill="none" stroke="{color}" stroke-width="1.2"/>"#,
            d.trim_end()
        );
        let ly = 36.0 + 16.0 * i as f64;
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{ly}" fill="{color}">{}</text>"#,
            w - margin - 150.0,
            escape(name)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
