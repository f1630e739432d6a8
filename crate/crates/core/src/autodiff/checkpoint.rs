//! `SBMC` checkpoint files: an ordered list of named tensors.
//!
//! Little-endian layout:
//!
//! ```text
//! magic   "SBMC"
//! version u16 (= 1)
//! count   u32
//! count x (name_len: u16, name: UTF-8, rank: u8, dims: rank x u32, data: f32 row-major)
//! ```
//!
//! Values are stored as `f32`; loading widens them back to `f64`.

use super::Tensor;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use thiserror::Error;

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"SBMC";
pub const CHECKPOINT_VERSION: u16 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("unrecognized format: expected magic {expected:?}, found {found:?}")]
    UnrecognizedFormat { expected: [u8; 4], found: [u8; 4] },
    #[error("unsupported checkpoint version {0}")]
    UnsupportedVersion(u16),
    #[error("truncated checkpoint: {0}")]
    Truncated(String),
    #[error("tensor name is not valid UTF-8")]
    InvalidName,
    #[error("cannot encode tensor '{name}': {reason}")]
    Unencodable { name: String, reason: String },
    #[error("checkpoint has no tensor named '{0}'")]
    Missing(String),
    #[error("tensor '{name}' has shape {found:?}, expected {expected:?}")]
    Shape {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("checkpoint mismatch: {0}")]
    Mismatch(String),
    #[error("trailing bytes after final tensor")]
    TrailingBytes,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type CheckpointResult<T> = std::result::Result<T, CheckpointError>;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Checkpoint {
    tensors: Vec<(String, Tensor)>,
}

impl Checkpoint {
    pub fn new() -> Self {
        Self::default()
    }

    /// Insert or replace a tensor, keeping first-insertion order.
    pub fn insert(&mut self, name: impl Into<String>, t: Tensor) {
        let name = name.into();
        match self.tensors.iter_mut().find(|(n, _)| *n == name) {
            Some(slot) => slot.1 = t,
            None => self.tensors.push((name, t)),
        }
    }

    pub fn get(&self, name: &str) -> CheckpointResult<&Tensor> {
        self.tensors
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
            .ok_or_else(|| CheckpointError::Missing(name.to_string()))
    }

    pub fn get_shaped(&self, name: &str, shape: &[usize]) -> CheckpointResult<&Tensor> {
        let t = self.get(name)?;
        if t.shape() != shape {
            return Err(CheckpointError::Shape {
                name: name.into(),
                expected: shape.to_vec(),
                found: t.shape().to_vec(),
            });
        }
        Ok(t)
    }

    /// Scalar metadata stored as a one-element tensor.
    pub fn get_scalar(&self, name: &str) -> CheckpointResult<f64> {
        let t = self.get(name)?;
        if t.len() != 1 {
            return Err(CheckpointError::Shape {
                name: name.into(),
                expected: vec![1],
                found: t.shape().to_vec(),
            });
        }
        Ok(t.data()[0])
    }

    pub fn set_scalar(&mut self, name: impl Into<String>, v: f64) {
        self.insert(name, Tensor::new(vec![1], vec![v]).expect("scalar"));
    }

    pub fn contains(&self, name: &str) -> bool {
        self.tensors.iter().any(|(n, _)| n == name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.iter().map(|(n, _)| n.as_str())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.tensors.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> CheckpointResult<()> {
        w.write_all(&CHECKPOINT_MAGIC)?;
        w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
        w.write_all(&(self.tensors.len() as u32).to_le_bytes())?;
        for (name, t) in &self.tensors {
            let unencodable = |reason: &str| CheckpointError::Unencodable {
                name: name.clone(),
                reason: reason.into(),
            };
            let len = u16::try_from(name.len()).map_err(|_| unencodable("name too long"))?;
            let rank = u8::try_from(t.rank()).map_err(|_| unencodable("rank above 255"))?;
            w.write_all(&len.to_le_bytes())?;
            w.write_all(name.as_bytes())?;
            w.write_all(&[rank])?;
            for &d in t.shape() {
                let d = u32::try_from(d).map_err(|_| unencodable("dimension above u32"))?;
                w.write_all(&d.to_le_bytes())?;
            }
            for &v in t.data() {
                w.write_all(&(v as f32).to_le_bytes())?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> CheckpointResult<Self> {
        fn exact<R: Read>(r: &mut R, buf: &mut [u8], what: &str) -> CheckpointResult<()> {
            r.read_exact(buf).map_err(|e| match e.kind() {
                std::io::ErrorKind::UnexpectedEof => {
                    CheckpointError::Truncated(format!("missing {what}"))
                }
                _ => CheckpointError::Io(e),
            })
        }
        let mut magic = [0u8; 4];
        exact(&mut r, &mut magic, "magic")?;
        if magic != CHECKPOINT_MAGIC {
            return Err(CheckpointError::UnrecognizedFormat {
                expected: CHECKPOINT_MAGIC,
                found: magic,
            });
        }
        let mut b2 = [0u8; 2];
        let mut b4 = [0u8; 4];
        exact(&mut r, &mut b2, "version")?;
        let version = u16::from_le_bytes(b2);
        if version != CHECKPOINT_VERSION {
            return Err(CheckpointError::UnsupportedVersion(version));
        }
        exact(&mut r, &mut b4, "tensor count")?;
        let count = u32::from_le_bytes(b4);
        let mut ckpt = Checkpoint::new();
        for i in 0..count {
            exact(&mut r, &mut b2, &format!("name length of tensor {i}"))?;
            let mut name = vec![0u8; u16::from_le_bytes(b2) as usize];
            exact(&mut r, &mut name, &format!("name of tensor {i}"))?;
            let name = String::from_utf8(name).map_err(|_| CheckpointError::InvalidName)?;
            let mut rank = [0u8; 1];
            exact(&mut r, &mut rank, &format!("rank of '{name}'"))?;
            let mut shape = Vec::with_capacity(rank[0] as usize);
            for _ in 0..rank[0] {
                exact(&mut r, &mut b4, &format!("dims of '{name}'"))?;
                shape.push(u32::from_le_bytes(b4) as usize);
            }
            let numel: usize = shape.iter().product();
            let mut raw = vec![0u8; numel * 4];
            exact(&mut r, &mut raw, &format!("data of '{name}'"))?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
                .collect();
            let t = Tensor::new(shape, data).expect("numel matches");
            ckpt.insert(name, t);
        }
        let mut probe = [0u8; 1];
        if r.read(&mut probe)? != 0 {
            return Err(CheckpointError::TrailingBytes);
        }
        Ok(ckpt)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> CheckpointResult<()> {
        self.write_to(BufWriter::new(File::create(path)?))
    }

    pub fn load(path: impl AsRef<Path>) -> CheckpointResult<Self> {
        Self::read_from(BufReader::new(File::open(path)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample() -> Checkpoint {
        let mut c = Checkpoint::new();
        c.insert(
            "enc.0.w",
            Tensor::matrix(2, 3, vec![1.0, -2.0, 0.5, 0.25, 3.0, 4.0]).unwrap(),
        );
        c.insert(
            "enc.0.b",
            Tensor::new(vec![3], vec![0.0, 1.0, -1.0]).unwrap(),
        );
        c.insert("scalar", Tensor::scalar(7.0));
        c.set_scalar("meta.z_dim", 4.0);
        c
    }

    fn bytes(c: &Checkpoint) -> Vec<u8> {
        let mut v = Vec::new();
        c.write_to(&mut v).unwrap();
        v
    }

    #[test]
    fn layout_matches_format() {
        let mut c = Checkpoint::new();
        c.insert("ab", Tensor::matrix(1, 2, vec![1.0, 2.0]).unwrap());
        let b = bytes(&c);
        let mut expect = b"SBMC".to_vec();
        expect.extend(1u16.to_le_bytes());
        expect.extend(1u32.to_le_bytes());
        expect.extend(2u16.to_le_bytes());
        expect.extend(b"ab");
        expect.push(2);
        expect.extend(1u32.to_le_bytes());
        expect.extend(2u32.to_le_bytes());
        expect.extend(1.0f32.to_le_bytes());
        expect.extend(2.0f32.to_le_bytes());
        assert_eq!(b, expect);
    }

    #[test]
    fn round_trip_exact_for_f32_values() {
        let c = sample();
        assert_eq!(Checkpoint::read_from(&bytes(&c)[..]).unwrap(), c);
    }

    #[test]
    fn errors_are_distinct() {
        let good = bytes(&sample());
        let mut bad = good.clone();
        bad[1] = b'X';
        assert!(matches!(
            Checkpoint::read_from(&bad[..]),
            Err(CheckpointError::UnrecognizedFormat { .. })
        ));
        let mut bad = good.clone();
        bad[4] = 9;
        assert!(matches!(
            Checkpoint::read_from(&bad[..]),
            Err(CheckpointError::UnsupportedVersion(9))
        ));
        for cut in [2, 7, 12, good.len() - 1] {
            assert!(matches!(
                Checkpoint::read_from(&good[..cut]),
                Err(CheckpointError::Truncated(_))
            ));
        }
        let mut bad = good;
        bad.extend([1, 2]);
        assert!(matches!(
            Checkpoint::read_from(&bad[..]),
            Err(CheckpointError::TrailingBytes)
        ));
    }

    #[test]
    fn lookups() {
        let c = sample();
        assert_eq!(c.get_scalar("meta.z_dim").unwrap(), 4.0);
        assert!(matches!(c.get("nope"), Err(CheckpointError::Missing(_))));
        assert!(matches!(
            c.get_shaped("enc.0.w", &[3, 2]),
            Err(CheckpointError::Shape { .. })
        ));
        assert_eq!(
            c.names().collect::<Vec<_>>(),
            ["enc.0.w", "enc.0.b", "scalar", "meta.z_dim"]
        );
    }

    proptest! {
        #[test]
        fn round_trip_preserves_f32_rounding(
            vals in proptest::collection::vec(-1e6f64..1e6, 1..50),
        ) {
            let mut c = Checkpoint::new();
            c.insert("t", Tensor::new(vec![vals.len()], vals.clone()).unwrap());
            let back = Checkpoint::read_from(&bytes(&c)[..]).unwrap();
            for (a, b) in vals.iter().zip(back.get("t").unwrap().data()) {
                prop_assert_eq!(*a as f32 as f64, *b);
            }
        }
    }
}
