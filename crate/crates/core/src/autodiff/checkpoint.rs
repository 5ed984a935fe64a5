//! Binary parameter checkpoints.
//!
//! Layout (all integers little-endian `u32`):
//!
//! ```text
//! "DSPG" | version | header_len | header (UTF-8 key=value lines) | count
//! per record: name_len | name | rank | extents... | f64 LE payload
//! ```

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use super::params::ParamStore;
use super::tensor::Tensor;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"DSPG";
pub const VERSION: u32 = 1;

/// Ordered `key=value` configuration block stored in a checkpoint header.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Header {
    entries: Vec<(String, String)>,
}

impl Header {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        let value = value.to_string();
        match self.entries.iter_mut().find(|(k, _)| k == key) {
            Some(e) => e.1 = value,
            None => self.entries.push((key.to_string(), value)),
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn parse_value<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let raw = self
            .get(key)
            .ok_or_else(|| Error::Checkpoint(format!("header lacks `{key}`")))?;
        raw.parse()
            .map_err(|_| Error::Checkpoint(format!("header `{key}` = `{raw}` is malformed")))
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }

    fn encode(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.entries {
            s.push_str(k);
            s.push('=');
            s.push_str(v);
            s.push('\n');
        }
        s
    }

    fn decode(text: &str) -> Result<Self> {
        let mut h = Header::new();
        for line in text.lines().filter(|l| !l.is_empty()) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Checkpoint(format!("bad header line `{line}`")))?;
            h.entries.push((k.to_string(), v.to_string()));
        }
        Ok(h)
    }
}

fn put_u32(out: &mut Vec<u8>, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::Checkpoint(format!("{v} exceeds u32")))?;
    out.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

pub fn encode(header: &Header, store: &ParamStore) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    let h = header.encode();
    put_u32(&mut out, h.len())?;
    out.extend_from_slice(h.as_bytes());
    put_u32(&mut out, store.len())?;
    for p in store.iter() {
        put_u32(&mut out, p.name.len())?;
        out.extend_from_slice(p.name.as_bytes());
        put_u32(&mut out, p.value.rank())?;
        for &d in p.value.shape() {
            put_u32(&mut out, d)?;
        }
        for v in p.value.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Checkpoint(format!(
                "truncated checkpoint at byte {} (need {n} more)",
                self.pos
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize)
    }
}

pub fn decode(bytes: &[u8]) -> Result<(Header, ParamStore)> {
    let mut c = Cursor { buf: bytes, pos: 0 };
    if c.take(4)? != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = c.u32()?;
    if version != VERSION as usize {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let hlen = c.u32()?;
    let text = std::str::from_utf8(c.take(hlen)?)
        .map_err(|_| Error::Checkpoint("header is not UTF-8".into()))?;
    let header = Header::decode(text)?;
    let count = c.u32()?;
    let mut store = ParamStore::new();
    for _ in 0..count {
        let nlen = c.u32()?;
        let name = std::str::from_utf8(c.take(nlen)?)
            .map_err(|_| Error::Checkpoint("parameter name is not UTF-8".into()))?
            .to_string();
        let rank = c.u32()?;
        let shape = (0..rank).map(|_| c.u32()).collect::<Result<Vec<_>>>()?;
        let n: usize = shape.iter().product();
        let raw = c.take(n * 8)?;
        let data = raw
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().expect("8-byte chunk")))
            .collect();
        store.add(name, Tensor::new(&shape, data)?);
    }
    if c.pos != bytes.len() {
        return Err(Error::Checkpoint("trailing bytes after last record".into()));
    }
    Ok((header, store))
}

pub fn save(path: &Path, header: &Header, store: &ParamStore) -> Result<()> {
    let bytes = encode(header, store)?;
    let mut f = fs::File::create(path)?;
    f.write_all(&bytes)?;
    Ok(())
}

pub fn load(path: &Path) -> Result<(Header, ParamStore)> {
    let mut bytes = Vec::new();
    fs::File::open(path)
        .map_err(|_| Error::Missing(path.to_path_buf()))?
        .read_to_end(&mut bytes)?;
    decode(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(
            values in prop::collection::vec(prop::num::f64::ANY, 1..40),
            name in "[a-z.]{1,12}",
        ) {
            let mut store = ParamStore::new();
            store.add(name.clone(), Tensor::from_vec(values.clone()));
            store.add("b", Tensor::new(&[1, 2], vec![1.0, -0.0]).unwrap());
            let mut h = Header::new();
            h.set("cepstrum_len", 222);
            let bytes = encode(&h, &store).unwrap();
            let (h2, s2) = decode(&bytes).unwrap();
            prop_assert_eq!(&h2, &h);
            let got: Vec<u64> = s2.iter().next().unwrap().value.data().iter().map(|v| v.to_bits()).collect();
            let want: Vec<u64> = values.iter().map(|v| v.to_bits()).collect();
            prop_assert_eq!(got, want);
            prop_assert_eq!(encode(&h2, &s2).unwrap(), bytes);
        }
    }

    #[test]
    fn rejects_bad_magic_and_truncation() {
        let mut store = ParamStore::new();
        store.add("w", Tensor::from_vec(vec![1.0, 2.0]));
        let bytes = encode(&Header::new(), &store).unwrap();
        assert!(decode(&bytes[..bytes.len() - 3]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode(&bad).is_err());
        assert_eq!(&bytes[..4], b"DSPG");
    }
}
