//! Binary checkpoint of a [`ParamVector`].
//!
//! Little-endian layout:
//!
//! | offset | size  | field                                  |
//! |--------|-------|----------------------------------------|
//! | 0      | 8     | magic `SSLFCKPT`                       |
//! | 8      | 4     | format version (`u32`, currently 1)    |
//! | 12     | 8     | `n_users` (`u64`)                      |
//! | 20     | 8     | `n_items` (`u64`)                      |
//! | 28     | 8     | `f` (`u64`)                            |
//! | 36     | 8 × p | values (`f64`), user block then items  |

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::ParamVector;

pub const MAGIC: &[u8; 8] = b"SSLFCKPT";
pub const VERSION: u32 = 1;

pub fn write_checkpoint<W: Write>(mut w: W, params: &ParamVector) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    for n in [params.n_users(), params.n_items(), params.f()] {
        w.write_all(&(n as u64).to_le_bytes())?;
    }
    for v in params.values() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<ParamVector> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let mut word = [0u8; 4];
    r.read_exact(&mut word)?;
    let version = u32::from_le_bytes(word);
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let mut dims = [0usize; 3];
    for d in &mut dims {
        let mut buf = [0u8; 8];
        r.read_exact(&mut buf)?;
        *d = usize::try_from(u64::from_le_bytes(buf))
            .map_err(|_| Error::Checkpoint("dimension overflows usize".into()))?;
    }
    let [n_users, n_items, f] = dims;
    let p = n_users
        .checked_add(n_items)
        .and_then(|n| n.checked_mul(f))
        .ok_or_else(|| Error::Checkpoint("dimensions overflow".into()))?;

    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() != p * 8 {
        return Err(Error::Checkpoint(format!(
            "expected {} value bytes, found {}",
            p * 8,
            bytes.len()
        )));
    }
    let values = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    ParamVector::from_values(n_users, n_items, f, values)
}

pub fn save(path: impl AsRef<Path>, params: &ParamVector) -> Result<()> {
    write_checkpoint(BufWriter::new(File::create(path)?), params)
}

pub fn load(path: impl AsRef<Path>) -> Result<ParamVector> {
    read_checkpoint(BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_preserves_bits() {
        let p = ParamVector::from_values(2, 1, 2, vec![0.1, -0.0, f64::MIN_POSITIVE, 3.5, 1e300, -2.25])
            .unwrap();
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &p).unwrap();
        assert_eq!(buf.len(), 36 + 6 * 8);
        assert_eq!(&buf[..8], MAGIC);
        let q = read_checkpoint(&buf[..]).unwrap();
        let bits = |v: &ParamVector| v.values().iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&p), bits(&q));
        assert_eq!((q.n_users(), q.n_items(), q.f()), (2, 1, 2));
    }

    #[test]
    fn rejects_corruption() {
        let p = ParamVector::zeros(1, 1, 1);
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &p).unwrap();

        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(read_checkpoint(&bad[..]), Err(Error::Checkpoint(_))));

        let mut bad = buf.clone();
        bad[8] = 9;
        assert!(matches!(read_checkpoint(&bad[..]), Err(Error::Checkpoint(_))));

        assert!(matches!(
            read_checkpoint(&buf[..buf.len() - 1]),
            Err(Error::Checkpoint(_))
        ));
    }
}
