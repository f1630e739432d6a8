//! `SBDT` transition files.
//!
//! Little-endian layout:
//!
//! ```text
//! magic   "SBDT"
//! version u16 (= 1)
//! N       u16
//! B       u16
//! r       f32
//! seed    u64
//! count   u64
//! count x (x: u16, y: u16, action: u8, nx: u16, ny: u16)
//! ```
//!
//! Observations are not stored; they are re-rendered from states.

use super::{MoveAction, Result, Transition, TransitionDataset, WorldError, WorldSpec};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

pub const DATASET_MAGIC: [u8; 4] = *b"SBDT";
pub const DATASET_VERSION: u16 = 1;
const RECORD_BYTES: usize = 9;

pub fn write_dataset<W: Write>(d: &TransitionDataset, mut w: W) -> Result<()> {
    if d.records.is_empty() {
        return Err(WorldError::EmptyDataset);
    }
    w.write_all(&DATASET_MAGIC)?;
    w.write_all(&DATASET_VERSION.to_le_bytes())?;
    w.write_all(&(d.spec.grid_size() as u16).to_le_bytes())?;
    w.write_all(&(d.spec.image_size() as u16).to_le_bytes())?;
    w.write_all(&d.spec.agent_radius().to_le_bytes())?;
    w.write_all(&d.seed.to_le_bytes())?;
    w.write_all(&(d.records.len() as u64).to_le_bytes())?;
    let mut buf = [0u8; RECORD_BYTES];
    for t in &d.records {
        buf[0..2].copy_from_slice(&(t.state.x as u16).to_le_bytes());
        buf[2..4].copy_from_slice(&(t.state.y as u16).to_le_bytes());
        buf[4] = t.action.code();
        buf[5..7].copy_from_slice(&(t.next_state.x as u16).to_le_bytes());
        buf[7..9].copy_from_slice(&(t.next_state.y as u16).to_le_bytes());
        w.write_all(&buf)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_dataset(d: &TransitionDataset, path: impl AsRef<Path>) -> Result<()> {
    let f = File::create(path)?;
    write_dataset(d, BufWriter::new(f))
}

fn read_exact_or<R: Read>(r: &mut R, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => WorldError::Truncated(format!("missing {what}")),
        _ => WorldError::Io(e),
    })
}

macro_rules! read_le {
    ($r:expr, $t:ty, $what:expr) => {{
        let mut b = [0u8; std::mem::size_of::<$t>()];
        read_exact_or($r, &mut b, $what)?;
        <$t>::from_le_bytes(b)
    }};
}

pub fn read_dataset<R: Read>(mut r: R) -> Result<TransitionDataset> {
    let mut magic = [0u8; 4];
    read_exact_or(&mut r, &mut magic, "magic")?;
    if magic != DATASET_MAGIC {
        return Err(WorldError::UnrecognizedFormat {
            expected: DATASET_MAGIC,
            found: magic,
        });
    }
    let version = read_le!(&mut r, u16, "version");
    if version != DATASET_VERSION {
        return Err(WorldError::UnsupportedVersion(version));
    }
    let n = read_le!(&mut r, u16, "grid size") as usize;
    let b = read_le!(&mut r, u16, "image size") as usize;
    let radius = read_le!(&mut r, f32, "agent radius");
    let seed = read_le!(&mut r, u64, "seed");
    let count = read_le!(&mut r, u64, "record count");
    let spec = WorldSpec::new(n, b, radius)?;
    if count == 0 {
        return Err(WorldError::EmptyDataset);
    }

    let mut records = Vec::with_capacity(count.min(1 << 24) as usize);
    let mut buf = [0u8; RECORD_BYTES];
    for index in 0..count as usize {
        read_exact_or(&mut r, &mut buf, &format!("record {index} of {count}"))?;
        let u16_at = |i: usize| u16::from_le_bytes([buf[i], buf[i + 1]]) as usize;
        let corrupt = |reason: String| WorldError::CorruptRecord { index, reason };
        let state = spec
            .state(u16_at(0), u16_at(2))
            .map_err(|e| corrupt(e.to_string()))?;
        let action = MoveAction::from_code(buf[4]).map_err(|e| corrupt(e.to_string()))?;
        let next_state = spec
            .state(u16_at(5), u16_at(7))
            .map_err(|e| corrupt(e.to_string()))?;
        if spec.step(state, action) != next_state {
            return Err(corrupt(format!(
                "{action} from {state} does not reach {next_state}"
            )));
        }
        records.push(Transition {
            state,
            action,
            next_state,
        });
    }
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing)? != 0 {
        return Err(WorldError::CorruptRecord {
            index: count as usize,
            reason: "trailing bytes after final record".into(),
        });
    }
    Ok(TransitionDataset {
        spec,
        records,
        seed,
    })
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<TransitionDataset> {
    let f = File::open(path)?;
    read_dataset(BufReader::new(f))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::random_walk;
    use proptest::prelude::*;

    fn bytes_of(d: &TransitionDataset) -> Vec<u8> {
        let mut v = Vec::new();
        write_dataset(d, &mut v).unwrap();
        v
    }

    #[test]
    fn header_layout() {
        let d = random_walk(&WorldSpec::default(), 3, 9).unwrap();
        let b = bytes_of(&d);
        assert_eq!(&b[0..4], b"SBDT");
        assert_eq!(u16::from_le_bytes([b[4], b[5]]), 1);
        assert_eq!(u16::from_le_bytes([b[6], b[7]]), 10);
        assert_eq!(u16::from_le_bytes([b[8], b[9]]), 32);
        assert_eq!(f32::from_le_bytes([b[10], b[11], b[12], b[13]]), 4.0);
        assert_eq!(u64::from_le_bytes(b[14..22].try_into().unwrap()), 9);
        assert_eq!(u64::from_le_bytes(b[22..30].try_into().unwrap()), 3);
        assert_eq!(b.len(), 30 + 3 * 9);
    }

    #[test]
    fn same_seed_same_bytes() {
        let spec = WorldSpec::default();
        let a = bytes_of(&random_walk(&spec, 1000, 7).unwrap());
        let b = bytes_of(&random_walk(&spec, 1000, 7).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn truncation_is_an_error() {
        let d = random_walk(&WorldSpec::default(), 20, 1).unwrap();
        let b = bytes_of(&d);
        for cut in [0, 3, 5, 17, 29, 30, b.len() - 1] {
            let err = read_dataset(&b[..cut]).unwrap_err();
            assert!(matches!(err, WorldError::Truncated(_)), "cut {cut}: {err}");
        }
    }

    #[test]
    fn bad_magic_is_unrecognized() {
        let d = random_walk(&WorldSpec::default(), 5, 1).unwrap();
        let mut b = bytes_of(&d);
        b[0] = b'X';
        let err = read_dataset(&b[..]).unwrap_err();
        assert!(matches!(err, WorldError::UnrecognizedFormat { .. }));
        assert!(err.to_string().contains("unrecognized format"));
    }

    #[test]
    fn bad_version_and_records() {
        let d = random_walk(&WorldSpec::default(), 5, 1).unwrap();
        let good = bytes_of(&d);

        let mut b = good.clone();
        b[4] = 2;
        assert!(matches!(
            read_dataset(&b[..]),
            Err(WorldError::UnsupportedVersion(2))
        ));

        let mut b = good.clone();
        b[30 + 4] = 9;
        assert!(matches!(
            read_dataset(&b[..]),
            Err(WorldError::CorruptRecord { index: 0, .. })
        ));

        let mut b = good.clone();
        b[30] = 200;
        assert!(matches!(
            read_dataset(&b[..]),
            Err(WorldError::CorruptRecord { index: 0, .. })
        ));

        let mut b = good;
        b.push(0);
        assert!(matches!(
            read_dataset(&b[..]),
            Err(WorldError::CorruptRecord { .. })
        ));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("walk.sbdt");
        let d = random_walk(&WorldSpec::default(), 250, 42).unwrap();
        save_dataset(&d, &path).unwrap();
        assert_eq!(load_dataset(&path).unwrap(), d);
    }

    proptest! {
        #[test]
        fn round_trip_random_datasets(
            n in 2usize..40,
            b in 4usize..64,
            rfrac in 0.01f32..0.99,
            steps in 1usize..300,
            seed in any::<u64>(),
        ) {
            let spec = WorldSpec::new(n, b, rfrac * b as f32 / 2.0).unwrap();
            let d = random_walk(&spec, steps, seed).unwrap();
            prop_assert_eq!(read_dataset(&bytes_of(&d)[..]).unwrap(), d);
        }
    }
}
