//! Binary tensor archive used for checkpoints and pretrained weights.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic     8 bytes  "PGZCKPT\0"
//! version   u32      1
//! hlen      u64      length of the JSON header
//! header    hlen     {"meta": any, "tensors": [{"group","name","shape","offset","len"}]}
//! data      8 * n    f64 values, tensors stored back to back in header order
//! checksum  u64      FNV-1a 64 of every preceding byte
//! ```
//!
//! `offset` and `len` count f64 values. Decoding rejects anything that is
//! not exactly this shape: overlapping or gapped tensors, trailing bytes,
//! shape/length disagreements and checksum mismatches.

use std::io::{Cursor, Read};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use privgaze_nn::Tensor;
use serde::{Deserialize, Serialize};

use crate::error::{Result, TrainError};

pub const MAGIC: &[u8; 8] = b"PGZCKPT\0";
pub const ARCHIVE_VERSION: u32 = 1;
/// Header size cap; keeps hostile length fields from forcing huge reads.
pub const MAX_HEADER_BYTES: u64 = 64 << 20;

#[derive(Clone, Debug, PartialEq)]
pub struct ArchiveEntry {
    pub group: String,
    pub name: String,
    pub tensor: Tensor,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Archive {
    pub meta: serde_json::Value,
    pub entries: Vec<ArchiveEntry>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    meta: serde_json::Value,
    tensors: Vec<HeaderEntry>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct HeaderEntry {
    group: String,
    name: String,
    shape: Vec<usize>,
    offset: u64,
    len: u64,
}

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn bad(msg: impl Into<String>) -> TrainError {
    TrainError::Checkpoint(msg.into())
}

impl Archive {
    pub fn new(meta: serde_json::Value) -> Self {
        Self {
            meta,
            entries: Vec::new(),
        }
    }

    pub fn push(&mut self, group: &str, name: &str, tensor: Tensor) {
        self.entries.push(ArchiveEntry {
            group: group.to_string(),
            name: name.to_string(),
            tensor,
        });
    }

    pub fn group<'a>(&'a self, group: &'a str) -> impl Iterator<Item = &'a ArchiveEntry> + 'a {
        self.entries.iter().filter(move |e| e.group == group)
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut offset = 0u64;
        let tensors = self
            .entries
            .iter()
            .map(|e| {
                let len = e.tensor.numel() as u64;
                let h = HeaderEntry {
                    group: e.group.clone(),
                    name: e.name.clone(),
                    shape: e.tensor.shape().to_vec(),
                    offset,
                    len,
                };
                offset += len;
                h
            })
            .collect();
        let header = serde_json::to_vec(&Header {
            meta: self.meta.clone(),
            tensors,
        })
        .expect("header serializes");
        let mut out = Vec::with_capacity(28 + header.len() + 8 * offset as usize);
        out.extend_from_slice(MAGIC);
        out.write_u32::<LittleEndian>(ARCHIVE_VERSION).unwrap();
        out.write_u64::<LittleEndian>(header.len() as u64).unwrap();
        out.extend_from_slice(&header);
        for e in &self.entries {
            for &v in e.tensor.data() {
                out.write_f64::<LittleEndian>(v).unwrap();
            }
        }
        let sum = fnv1a64(&out);
        out.write_u64::<LittleEndian>(sum).unwrap();
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 8 + 4 + 8 + 8 {
            return Err(bad(format!("archive truncated: {} bytes", bytes.len())));
        }
        let (body, tail) = bytes.split_at(bytes.len() - 8);
        if &body[..8] != MAGIC {
            return Err(bad("not a privgaze archive (bad magic)"));
        }
        let stored = u64::from_le_bytes(tail.try_into().unwrap());
        if stored != fnv1a64(body) {
            return Err(bad("checksum mismatch"));
        }
        let mut cur = Cursor::new(&body[8..]);
        let version = cur.read_u32::<LittleEndian>().map_err(|_| bad("truncated version"))?;
        if version != ARCHIVE_VERSION {
            return Err(bad(format!("unsupported archive version {version}")));
        }
        let hlen = cur.read_u64::<LittleEndian>().map_err(|_| bad("truncated header length"))?;
        let remaining = (body.len() - 20) as u64;
        if hlen > MAX_HEADER_BYTES || hlen > remaining {
            return Err(bad(format!("header length {hlen} exceeds the archive")));
        }
        let mut header = vec![0u8; hlen as usize];
        cur.read_exact(&mut header).map_err(|_| bad("truncated header"))?;
        let header: Header = serde_json::from_slice(&header).map_err(|e| bad(format!("header: {e}")))?;
        let data = &body[20 + hlen as usize..];
        if data.len() % 8 != 0 {
            return Err(bad("data section is not a whole number of f64 values"));
        }
        let total = (data.len() / 8) as u64;
        let mut expect = 0u64;
        let mut entries = Vec::with_capacity(header.tensors.len().min(1 << 16));
        for h in header.tensors {
            let numel = h
                .shape
                .iter()
                .try_fold(1u64, |acc, &d| acc.checked_mul(d as u64))
                .ok_or_else(|| bad(format!("{}: shape overflows", h.name)))?;
            if numel != h.len {
                return Err(bad(format!("{}: shape {:?} holds {numel} values, header says {}", h.name, h.shape, h.len)));
            }
            if h.offset != expect {
                return Err(bad(format!("{}: offset {} breaks contiguity (expected {expect})", h.name, h.offset)));
            }
            let end = expect.checked_add(h.len).filter(|&e| e <= total).ok_or_else(|| bad(format!("{}: data out of range", h.name)))?;
            let raw = &data[expect as usize * 8..end as usize * 8];
            let values = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
            let tensor = Tensor::new(h.shape, values).map_err(|e| bad(format!("{}: {e}", h.name)))?;
            entries.push(ArchiveEntry {
                group: h.group,
                name: h.name,
                tensor,
            });
            expect = end;
        }
        if expect != total {
            return Err(bad(format!("{} trailing values after the last tensor", total - expect)));
        }
        Ok(Self {
            meta: header.meta,
            entries,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Archive {
        let mut a = Archive::new(serde_json::json!({"kind": "test", "x": 0.1}));
        a.push("param", "w", Tensor::new(vec![2, 2], vec![1.0, -0.0, f64::MIN_POSITIVE, 1e300]).unwrap());
        a.push("buffer", "s", Tensor::scalar(std::f64::consts::PI));
        a.push("param", "empty", Tensor::zeros(vec![0, 3]));
        a
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let a = sample();
        let b = Archive::decode(&a.encode()).unwrap();
        assert_eq!(a.meta, b.meta);
        assert_eq!(a.entries.len(), b.entries.len());
        for (x, y) in a.entries.iter().zip(&b.entries) {
            assert_eq!((&x.group, &x.name, x.tensor.shape()), (&y.group, &y.name, y.tensor.shape()));
            let xb: Vec<u64> = x.tensor.data().iter().map(|v| v.to_bits()).collect();
            let yb: Vec<u64> = y.tensor.data().iter().map(|v| v.to_bits()).collect();
            assert_eq!(xb, yb);
        }
        assert_eq!(a.encode(), b.encode());
    }

    #[test]
    fn corruption_is_detected() {
        let bytes = sample().encode();
        for i in [0, 9, 15, 30, bytes.len() - 20, bytes.len() - 1] {
            let mut b = bytes.clone();
            b[i] ^= 0x40;
            assert!(Archive::decode(&b).is_err(), "flip at {i}");
        }
        for n in [0, 10, 27, bytes.len() - 1] {
            assert!(Archive::decode(&bytes[..n]).is_err());
        }
    }

    #[test]
    fn inconsistent_headers_are_rejected_even_with_valid_checksum() {
        let forge = |header: &str, values: usize| {
            let mut out = Vec::new();
            out.extend_from_slice(MAGIC);
            out.write_u32::<LittleEndian>(ARCHIVE_VERSION).unwrap();
            out.write_u64::<LittleEndian>(header.len() as u64).unwrap();
            out.extend_from_slice(header.as_bytes());
            for _ in 0..values {
                out.write_f64::<LittleEndian>(1.0).unwrap();
            }
            let s = fnv1a64(&out);
            out.write_u64::<LittleEndian>(s).unwrap();
            out
        };
        let ok = r#"{"meta":null,"tensors":[{"group":"p","name":"a","shape":[2],"offset":0,"len":2}]}"#;
        assert!(Archive::decode(&forge(ok, 2)).is_ok());
        assert!(Archive::decode(&forge(ok, 3)).is_err());
        assert!(Archive::decode(&forge(ok, 1)).is_err());
        let gap = r#"{"meta":null,"tensors":[{"group":"p","name":"a","shape":[2],"offset":1,"len":2}]}"#;
        assert!(Archive::decode(&forge(gap, 3)).is_err());
        let lie = r#"{"meta":null,"tensors":[{"group":"p","name":"a","shape":[3],"offset":0,"len":2}]}"#;
        assert!(Archive::decode(&forge(lie, 2)).is_err());
        let huge = r#"{"meta":null,"tensors":[{"group":"p","name":"a","shape":[4294967296,4294967296,16],"offset":0,"len":0}]}"#;
        assert!(Archive::decode(&forge(huge, 0)).is_err());
    }
}
