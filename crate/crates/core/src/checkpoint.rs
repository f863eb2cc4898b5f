//! Versioned text checkpoints.
//!
//! ```text
//! ocv1 <env> <n_options> <feature_kind> <n_features> <n_actions> <agent>
//! meta <key> <value>
//! array <name> <dim> <dim> ...
//! <values, whitespace separated>
//! ```
//!
//! Floats use Rust's shortest round-trip formatting, so loading restores
//! every value bit for bit.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

pub const VERSION: &str = "ocv1";

#[derive(Debug, Clone, PartialEq)]
pub struct Array {
    pub name: String,
    pub dims: Vec<usize>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub env: String,
    pub n_options: usize,
    pub feature_kind: String,
    pub n_features: usize,
    pub n_actions: usize,
    pub agent: String,
    pub meta: Vec<(String, String)>,
    pub arrays: Vec<Array>,
}

impl Checkpoint {
    pub fn meta(&self, key: &str) -> Option<&str> {
        self.meta.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn meta_parse<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let raw = self
            .meta(key)
            .ok_or_else(|| Error::Checkpoint(format!("missing meta `{key}`")))?;
        raw.parse()
            .map_err(|_| Error::Checkpoint(format!("meta `{key}` has bad value `{raw}`")))
    }

    pub fn push_meta(&mut self, key: &str, value: impl ToString) {
        self.meta.push((key.to_string(), value.to_string()));
    }

    pub fn push_array(&mut self, name: &str, dims: &[usize], values: &[f64]) {
        assert_eq!(dims.iter().product::<usize>(), values.len(), "array `{name}` shape");
        self.arrays.push(Array {
            name: name.to_string(),
            dims: dims.to_vec(),
            values: values.to_vec(),
        });
    }

    /// The named array, which must have exactly the expected shape.
    pub fn array(&self, name: &str, dims: &[usize]) -> Result<&[f64]> {
        let arr = self
            .arrays
            .iter()
            .find(|a| a.name == name)
            .ok_or_else(|| Error::Checkpoint(format!("missing array `{name}`")))?;
        if arr.dims != dims {
            return Err(Error::Checkpoint(format!(
                "array `{name}` has shape {:?}, expected {:?}",
                arr.dims, dims
            )));
        }
        Ok(&arr.values)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{VERSION} {} {} {} {} {} {}",
            self.env, self.n_options, self.feature_kind, self.n_features, self.n_actions, self.agent
        );
        for (k, v) in &self.meta {
            let _ = writeln!(out, "meta {k} {v}");
        }
        for arr in &self.arrays {
            let _ = write!(out, "array {}", arr.name);
            for d in &arr.dims {
                let _ = write!(out, " {d}");
            }
            out.push('\n');
            for (i, v) in arr.values.iter().enumerate() {
                if i > 0 {
                    out.push(if i % 8 == 0 { '\n' } else { ' ' });
                }
                let _ = write!(out, "{v}");
            }
            if !arr.values.is_empty() {
                out.push('\n');
            }
        }
        out.push_str("end\n");
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let bad = |m: String| Error::Checkpoint(m);
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| bad("empty file".into()))?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.first() != Some(&VERSION) {
            return Err(bad(format!(
                "unsupported version `{}` (expected {VERSION})",
                fields.first().unwrap_or(&"")
            )));
        }
        if fields.len() != 7 {
            return Err(bad("malformed header".into()));
        }
        let count = |s: &str| s.parse::<usize>().map_err(|_| bad(format!("bad count `{s}` in header")));
        let mut ckpt = Checkpoint {
            env: fields[1].to_string(),
            n_options: count(fields[2])?,
            feature_kind: fields[3].to_string(),
            n_features: count(fields[4])?,
            n_actions: count(fields[5])?,
            agent: fields[6].to_string(),
            meta: Vec::new(),
            arrays: Vec::new(),
        };

        // Values may wrap across lines, so consume tokens after each array
        // header until the declared size is reached.
        let mut pending: Option<Array> = None;
        let mut ended = false;
        for line in lines {
            if ended {
                if line.trim().is_empty() {
                    continue;
                }
                return Err(bad("content after end marker".into()));
            }
            if let Some(arr) = pending.as_mut() {
                for tok in line.split_whitespace() {
                    let v: f64 = tok.parse().map_err(|_| bad(format!("bad value `{tok}` in `{}`", arr.name)))?;
                    arr.values.push(v);
                }
                let want: usize = arr.dims.iter().product();
                if arr.values.len() > want {
                    return Err(bad(format!("array `{}` has too many values", arr.name)));
                }
                if arr.values.len() == want {
                    ckpt.arrays.push(pending.take().expect("pending array"));
                }
                continue;
            }
            let mut parts = line.split_whitespace();
            match parts.next() {
                Some("meta") => {
                    let key = parts.next().ok_or_else(|| bad("meta without key".into()))?;
                    let value = parts.collect::<Vec<_>>().join(" ");
                    ckpt.meta.push((key.to_string(), value));
                }
                Some("array") => {
                    let name = parts.next().ok_or_else(|| bad("array without name".into()))?;
                    let dims = parts.map(count).collect::<Result<Vec<_>>>()?;
                    let arr = Array {
                        name: name.to_string(),
                        dims,
                        values: Vec::new(),
                    };
                    if arr.dims.iter().product::<usize>() == 0 {
                        ckpt.arrays.push(arr);
                    } else {
                        pending = Some(arr);
                    }
                }
                Some("end") => ended = true,
                None => {}
                Some(other) => return Err(bad(format!("unexpected line starting with `{other}`"))),
            }
        }
        if let Some(arr) = pending {
            return Err(bad(format!("truncated: array `{}` is incomplete", arr.name)));
        }
        if !ended {
            return Err(bad("truncated: missing end marker".into()));
        }
        Ok(ckpt)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| match e {
            Error::Checkpoint(m) => Error::Checkpoint(format!("{}: {m}", path.display())),
            other => other,
        })
    }
}
