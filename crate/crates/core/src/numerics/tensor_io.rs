//! Named-tensor text format shared by model checkpoints, centroid sets and
//! the model registry.
//!
//! ```text
//! fsc-tensors 1
//! meta <key> <value...>
//! tensor <name> <rows> <cols>
//! <row 0 values, space separated>
//! ...
//! checksum sha256 <hex digest of every byte above this line>
//! ```
//!
//! Values are written with Rust's shortest round-trip float formatting, so a
//! save/load cycle is bit-exact.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use super::{Matrix, ParamSet};
use crate::error::{Error, Result};

const MAGIC: &str = "fsc-tensors";
const VERSION: u32 = 1;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TensorFile {
    pub meta: Vec<(String, String)>,
    pub tensors: Vec<(String, Matrix)>,
}

impl TensorFile {
    pub fn meta(&self, key: &str) -> Option<&str> {
        self.meta.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn tensor(&self, name: &str) -> Option<&Matrix> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, m)| m)
    }

    pub fn push_meta(&mut self, key: impl Into<String>, value: impl ToString) {
        self.meta.push((key.into(), value.to_string()));
    }

    pub fn to_text(&self) -> String {
        let mut body = format!("{MAGIC} {VERSION}\n");
        for (k, v) in &self.meta {
            debug_assert!(!k.contains(char::is_whitespace) && !v.contains('\n'));
            writeln!(body, "meta {k} {v}").unwrap();
        }
        for (name, m) in &self.tensors {
            debug_assert!(!name.contains(char::is_whitespace));
            writeln!(body, "tensor {name} {} {}", m.rows(), m.cols()).unwrap();
            for row in m.iter_rows() {
                let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
                body.push_str(&line.join(" "));
                body.push('\n');
            }
        }
        let digest = hex_digest(body.as_bytes());
        writeln!(body, "checksum sha256 {digest}").unwrap();
        body
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let err = |line: usize, message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        let Some(checksum_start) = text.rfind("checksum sha256 ") else {
            return Err(err(0, "missing checksum line".into()));
        };
        let (body, trailer) = text.split_at(checksum_start);
        let expected = trailer["checksum sha256 ".len()..].trim();
        if hex_digest(body.as_bytes()) != expected {
            return Err(Error::Checksum(path.to_path_buf()));
        }

        let mut lines = body.lines().enumerate().map(|(i, l)| (i + 1, l));
        match lines.next() {
            Some((_, header)) if header == format!("{MAGIC} {VERSION}") => {}
            Some((n, header)) => return Err(err(n, format!("unsupported header `{header}`"))),
            None => return Err(err(1, "empty file".into())),
        }

        let mut out = TensorFile::default();
        while let Some((n, line)) = lines.next() {
            let mut parts = line.splitn(3, ' ');
            match parts.next() {
                Some("meta") => {
                    let key = parts.next().ok_or_else(|| err(n, "meta without key".into()))?;
                    out.meta.push((key.to_owned(), parts.next().unwrap_or("").to_owned()));
                }
                Some("tensor") => {
                    let fields: Vec<&str> = line.split_whitespace().collect();
                    if fields.len() != 4 {
                        return Err(err(n, "expected `tensor <name> <rows> <cols>`".into()));
                    }
                    let rows: usize = fields[2]
                        .parse()
                        .map_err(|_| err(n, format!("bad row count `{}`", fields[2])))?;
                    let cols: usize = fields[3]
                        .parse()
                        .map_err(|_| err(n, format!("bad column count `{}`", fields[3])))?;
                    let mut data = Vec::with_capacity(rows * cols);
                    for _ in 0..rows {
                        let (rn, row) = lines
                            .next()
                            .ok_or_else(|| err(n, format!("tensor `{}` truncated", fields[1])))?;
                        let before = data.len();
                        for tok in row.split_whitespace() {
                            let v: f64 = tok.parse().map_err(|_| err(rn, format!("bad value `{tok}`")))?;
                            data.push(v);
                        }
                        if data.len() - before != cols {
                            return Err(err(rn, format!("expected {cols} values")));
                        }
                    }
                    let m = Matrix::from_vec(rows, cols, data).map_err(|e| err(n, e.to_string()))?;
                    out.tensors.push((fields[1].to_owned(), m));
                }
                _ => return Err(err(n, format!("unexpected line `{line}`"))),
            }
        }
        Ok(out)
    }

    /// Writes via a sibling temp file and a rename, so readers never observe
    /// a partially written file.
    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_text().as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::parse(&text, path)
    }
}

impl ParamSet {
    pub fn to_tensor_file(&self) -> TensorFile {
        let mut file = TensorFile::default();
        file.push_meta("step", self.step());
        file.tensors = self.named_values().map(|(n, m)| (n.to_owned(), m.clone())).collect();
        file
    }

    /// Loads values into an already constructed set with the same layout.
    pub fn load_values(&mut self, file: &TensorFile) -> Result<()> {
        if file.tensors.len() != self.len() {
            return Err(Error::shape(format!(
                "file has {} tensors, model has {}",
                file.tensors.len(),
                self.len()
            )));
        }
        for ((name, m), id) in file.tensors.iter().zip(self.ids().collect::<Vec<_>>()) {
            if name != self.name(id) || m.shape() != self.values()[id].shape() {
                return Err(Error::shape(format!(
                    "tensor `{name}` {:?} does not match `{}` {:?}",
                    m.shape(),
                    self.name(id),
                    self.values()[id].shape()
                )));
            }
            self.values_mut()[id].data_mut().copy_from_slice(m.data());
        }
        if let Some(step) = file.meta("step") {
            self.set_step(step.parse().map_err(|_| Error::invalid("bad step meta"))?);
        }
        Ok(())
    }
}

pub fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .fold(String::with_capacity(64), |mut s, b| {
            write!(s, "{b:02x}").unwrap();
            s
        })
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    if let Some(dir) = dir {
        fs::create_dir_all(dir)?;
    }
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::invalid(format!("not a file path: {}", path.display())))?
        .to_string_lossy();
    let tmp: PathBuf = path.with_file_name(format!(
        ".{file_name}.tmp-{}-{:?}",
        std::process::id(),
        std::thread::current().id()
    ));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}
