//! Binary sample files: little-endian, 32-bit floats.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"PDN1";

/// Load-direction group a sample belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LoadLabel {
    Vertical,
    Horizontal,
    Diagonal,
}

impl LoadLabel {
    pub const ALL: [LoadLabel; 3] = [LoadLabel::Vertical, LoadLabel::Horizontal, LoadLabel::Diagonal];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.get(code as usize).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            LoadLabel::Vertical => "vertical",
            LoadLabel::Horizontal => "horizontal",
            LoadLabel::Diagonal => "diagonal",
        }
    }

    /// Nominal unit direction of the group.
    pub fn direction(self) -> [f64; 3] {
        match self {
            LoadLabel::Vertical => [0.0, 0.0, 1.0],
            LoadLabel::Horizontal => [1.0, 0.0, 0.0],
            LoadLabel::Diagonal => [std::f64::consts::FRAC_1_SQRT_2, 0.0, std::f64::consts::FRAC_1_SQRT_2],
        }
    }
}

impl std::str::FromStr for LoadLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|l| l.name() == s)
            .ok_or_else(|| Error::Invalid(format!("unknown load label `{s}`")))
    }
}

/// One case: nodes, their signed distances and fields, and the load condition.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleRecord {
    pub coords: Vec<[f32; 3]>,
    pub sdf: Vec<f32>,
    /// `(m, f, d_x, d_y, d_z)`
    pub condition: [f32; 5],
    /// `(u_x, u_y, u_z, von_mises)` per node.
    pub targets: Vec<[f32; 4]>,
    pub label: LoadLabel,
}

impl SampleRecord {
    pub fn nodes(&self) -> usize {
        self.coords.len()
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.coords.len();
        if m == 0 {
            return Err(Error::Invalid("sample has no nodes".into()));
        }
        if self.sdf.len() != m || self.targets.len() != m {
            return Err(Error::LengthMismatch(m, self.sdf.len().min(self.targets.len())));
        }
        let finite = self.coords.iter().flatten().all(|v| v.is_finite())
            && self.sdf.iter().all(|v| v.is_finite())
            && self.condition.iter().all(|v| v.is_finite())
            && self.targets.iter().flatten().all(|v| v.is_finite());
        if !finite {
            return Err(Error::Invalid("sample contains non-finite values".into()));
        }
        let d = &self.condition[2..];
        let n = d.iter().map(|&v| (v as f64).powi(2)).sum::<f64>().sqrt();
        if (n - 1.0).abs() > 1e-6 {
            return Err(Error::Invalid(format!("load direction is not unit length (|d| = {n})")));
        }
        Ok(())
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        self.validate()?;
        let m = self.nodes();
        let mut out = Vec::with_capacity(4 + 4 + 4 * (8 * m + 5) + 1);
        out.extend_from_slice(MAGIC);
        let m32 = u32::try_from(m).map_err(|_| Error::Invalid(format!("{m} nodes exceed u32")))?;
        out.extend_from_slice(&m32.to_le_bytes());
        let mut put = |v: f32| out.extend_from_slice(&v.to_le_bytes());
        self.coords.iter().flatten().for_each(|&v| put(v));
        self.sdf.iter().for_each(|&v| put(v));
        self.condition.iter().for_each(|&v| put(v));
        self.targets.iter().flatten().for_each(|&v| put(v));
        out.push(self.label.code());
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4, "magic")? != MAGIC {
            return Err(Error::Format {
                offset: 0,
                msg: "bad magic, expected \"PDN1\"".into(),
            });
        }
        let m = u32::from_le_bytes(r.take(4, "node count")?.try_into().unwrap()) as usize;
        if m == 0 {
            return Err(Error::Format {
                offset: 4,
                msg: "node count is 0".into(),
            });
        }
        let expected = 8 + 4 * (8 * m + 5) + 1;
        if bytes.len() < expected {
            return Err(Error::Format {
                offset: bytes.len() as u64,
                msg: format!("truncated: expected {expected} bytes for {m} nodes, file has {}", bytes.len()),
            });
        }
        let coords = r.floats(3 * m, "coords")?;
        let sdf = r.floats(m, "sdf")?;
        let condition = r.floats(5, "condition")?;
        let targets = r.floats(4 * m, "targets")?;
        let label_at = r.pos;
        let code = r.take(1, "label")?[0];
        let label = LoadLabel::from_code(code).ok_or(Error::Format {
            offset: label_at as u64,
            msg: format!("unknown label code {code}"),
        })?;
        if r.pos != bytes.len() {
            return Err(Error::Format {
                offset: r.pos as u64,
                msg: format!("{} trailing bytes", bytes.len() - r.pos),
            });
        }
        let rec = SampleRecord {
            coords: coords.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect(),
            sdf,
            condition: condition.try_into().unwrap(),
            targets: targets.chunks_exact(4).map(|c| [c[0], c[1], c[2], c[3]]).collect(),
            label,
        };
        rec.validate().map_err(|e| Error::Format {
            offset: 8,
            msg: e.to_string(),
        })?;
        Ok(rec)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize, what: &str) -> Result<&[u8]> {
        let end = self.pos + n;
        if end > self.bytes.len() {
            return Err(Error::Format {
                offset: self.pos as u64,
                msg: format!(
                    "truncated {what}: expected {n} bytes, {} available",
                    self.bytes.len() - self.pos
                ),
            });
        }
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn floats(&mut self, n: usize, what: &str) -> Result<Vec<f32>> {
        let start = self.pos;
        let raw = self.take(4 * n, what)?;
        let vals: Vec<f32> = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        if let Some(i) = vals.iter().position(|v| !v.is_finite()) {
            return Err(Error::Format {
                offset: (start + 4 * i) as u64,
                msg: format!("non-finite value in {what}"),
            });
        }
        Ok(vals)
    }
}

pub fn write_sample(record: &SampleRecord, path: &Path) -> Result<()> {
    let bytes = record.encode()?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_sample(path: &Path) -> Result<SampleRecord> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    SampleRecord::decode(&bytes)
}
