//! Binary and text sidecars for frame-level features.
//!
//! ```text
//! magic ("MELF" | "F0F0") | version u32 | frames u32 | dims u32 | f64 LE payload
//! ```

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const SIDECAR_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SidecarKind {
    Mel,
    F0,
}

impl SidecarKind {
    pub fn magic(self) -> &'static [u8; 4] {
        match self {
            SidecarKind::Mel => b"MELF",
            SidecarKind::F0 => b"F0F0",
        }
    }
}

/// A `frames × dims` matrix tagged with its feature kind.
#[derive(Clone, Debug, PartialEq)]
pub struct Sidecar {
    pub kind: SidecarKind,
    pub frames: usize,
    pub dims: usize,
    pub values: Vec<f64>,
}

impl Sidecar {
    pub fn new(kind: SidecarKind, frames: usize, dims: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != frames * dims {
            return Err(Error::Format(format!(
                "{} values for {frames}x{dims} sidecar",
                values.len()
            )));
        }
        Ok(Self {
            kind,
            frames,
            dims,
            values,
        })
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + self.values.len() * 8);
        out.extend_from_slice(self.kind.magic());
        for v in [SIDECAR_VERSION, self.frames as u32, self.dims as u32] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 16 {
            return Err(Error::Format("sidecar shorter than its header".into()));
        }
        let kind = match &bytes[..4] {
            b"MELF" => SidecarKind::Mel,
            b"F0F0" => SidecarKind::F0,
            _ => return Err(Error::Format("unknown sidecar magic".into())),
        };
        let word =
            |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().expect("4 bytes")) as usize;
        if word(4) != SIDECAR_VERSION as usize {
            return Err(Error::Format(format!(
                "unsupported sidecar version {}",
                word(4)
            )));
        }
        let (frames, dims) = (word(8), word(12));
        let payload = &bytes[16..];
        if payload.len() != frames * dims * 8 {
            return Err(Error::Format(format!(
                "sidecar payload is {} bytes, expected {}",
                payload.len(),
                frames * dims * 8
            )));
        }
        let values = payload
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
            .collect();
        Sidecar::new(kind, frames, dims, values)
    }

    /// One frame per line, values space-separated.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for t in 0..self.frames {
            let row = &self.values[t * self.dims..(t + 1) * self.dims];
            for (i, v) in row.iter().enumerate() {
                if i > 0 {
                    s.push(' ');
                }
                write!(s, "{v}").expect("string write");
            }
            s.push('\n');
        }
        s
    }

    pub fn from_text(kind: SidecarKind, text: &str) -> Result<Self> {
        let mut dims = None;
        let mut values = Vec::new();
        let mut frames = 0;
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let row = line
                .split_whitespace()
                .map(|t| {
                    t.parse::<f64>()
                        .map_err(|_| Error::Format(format!("bad number `{t}`")))
                })
                .collect::<Result<Vec<_>>>()?;
            match dims {
                None => dims = Some(row.len()),
                Some(d) if d != row.len() => {
                    return Err(Error::Format(format!(
                        "row {frames} has {} values, expected {d}",
                        row.len()
                    )))
                }
                _ => {}
            }
            values.extend(row);
            frames += 1;
        }
        Sidecar::new(kind, frames, dims.unwrap_or(1), values)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.encode())?;
        Ok(())
    }

    pub fn save_text(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text())?;
        Ok(())
    }

    /// Reads a binary sidecar, or a text one when the file lacks a known magic.
    pub fn load(path: &Path, kind: SidecarKind) -> Result<Self> {
        let bytes = fs::read(path).map_err(|_| Error::Missing(path.to_path_buf()))?;
        let s = if bytes.starts_with(b"MELF") || bytes.starts_with(b"F0F0") {
            Sidecar::decode(&bytes)?
        } else {
            let text = std::str::from_utf8(&bytes)
                .map_err(|_| Error::Format("sidecar is neither binary nor text".into()))?;
            Sidecar::from_text(kind, text)?
        };
        if s.kind != kind {
            return Err(Error::Format(format!(
                "expected {kind:?} sidecar, found {:?}",
                s.kind
            )));
        }
        Ok(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn binary_round_trip(frames in 1usize..20, dims in 1usize..5, seed in 0u64..100) {
            let values: Vec<f64> = (0..frames * dims).map(|i| (i as f64 + seed as f64).sin()).collect();
            let s = Sidecar::new(SidecarKind::Mel, frames, dims, values).unwrap();
            prop_assert_eq!(Sidecar::decode(&s.encode()).unwrap(), s.clone());
            prop_assert_eq!(Sidecar::from_text(SidecarKind::Mel, &s.to_text()).unwrap(), s);
        }
    }

    #[test]
    fn rejects_truncation() {
        let s = Sidecar::new(SidecarKind::F0, 3, 1, vec![100.0, 0.0, 120.5]).unwrap();
        let b = s.encode();
        assert_eq!(&b[..4], b"F0F0");
        assert!(Sidecar::decode(&b[..b.len() - 1]).is_err());
        assert_eq!(s.to_text(), "100\n0\n120.5\n");
    }
}
