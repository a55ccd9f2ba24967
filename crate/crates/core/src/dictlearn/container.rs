//! Binary container for learned dictionaries.
//!
//! Layout, all little-endian:
//!
//! | bytes        | content                               |
//! |--------------|---------------------------------------|
//! | 4            | magic `LASR`                          |
//! | 2            | version (`u16`, currently 1)          |
//! | 4 x 4        | `n`, `p`, `d`, `L` as `u32`           |
//! | 8 n          | column mean, `f64`                    |
//! | 8 n p        | atoms, column-major `f64`             |

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::dictionary::Dictionary;
use crate::error::{Error, Result};
use crate::tree::TreeTopology;

pub const MAGIC: &[u8; 4] = b"LASR";
pub const VERSION: u16 = 1;

/// A dictionary together with the mean that was removed before learning.
#[derive(Debug, Clone)]
pub struct StoredDictionary {
    pub dictionary: Dictionary,
    pub mean: Vec<f64>,
}

fn u32_field(name: &str, v: usize) -> Result<[u8; 4]> {
    u32::try_from(v)
        .map(|x| x.to_le_bytes())
        .map_err(|_| Error::Container(format!("{name}={v} does not fit in u32")))
}

pub fn write_dictionary<W: Write>(mut w: W, dict: &Dictionary, mean: &[f64]) -> Result<()> {
    if mean.len() != dict.n() {
        return Err(Error::DimensionMismatch {
            expected: dict.n(),
            found: mean.len(),
        });
    }
    let io = |e| Error::Container(format!("write failed: {e}"));
    let tree = dict.tree();
    let mut header = Vec::with_capacity(22);
    header.extend_from_slice(MAGIC);
    header.extend_from_slice(&VERSION.to_le_bytes());
    header.extend_from_slice(&u32_field("n", dict.n())?);
    header.extend_from_slice(&u32_field("p", dict.p())?);
    header.extend_from_slice(&u32_field("d", tree.degree())?);
    header.extend_from_slice(&u32_field("L", tree.depth())?);
    w.write_all(&header).map_err(io)?;
    for v in mean {
        w.write_all(&v.to_le_bytes()).map_err(io)?;
    }
    // nalgebra storage is column-major already
    for v in dict.atoms().as_slice() {
        w.write_all(&v.to_le_bytes()).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn read_dictionary<R: Read>(mut r: R) -> Result<StoredDictionary> {
    let mut header = [0u8; 22];
    r.read_exact(&mut header)
        .map_err(|e| Error::Container(format!("truncated header: {e}")))?;
    if &header[0..4] != MAGIC {
        return Err(Error::Container("bad magic bytes".into()));
    }
    let version = u16::from_le_bytes([header[4], header[5]]);
    if version != VERSION {
        return Err(Error::Container(format!("unsupported version {version}")));
    }
    let field = |at: usize| u32::from_le_bytes(header[at..at + 4].try_into().unwrap()) as usize;
    let (n, p, d, l) = (field(6), field(10), field(14), field(18));
    let tree = TreeTopology::new(d, l).map_err(|e| Error::Container(e.to_string()))?;
    if tree.len() != p {
        return Err(Error::Container(format!("p={p} but a (d={d}, L={l}) tree has {} nodes", tree.len())));
    }
    let mut read_f64s = |count: usize, what: &str| -> Result<Vec<f64>> {
        let mut buf = vec![0u8; count * 8];
        r.read_exact(&mut buf).map_err(|e| Error::Container(format!("truncated {what}: {e}")))?;
        Ok(buf.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
    };
    let mean = read_f64s(n, "mean")?;
    let atoms = read_f64s(n * p, "atoms")?;
    let dictionary = Dictionary::new(DMatrix::from_vec(n, p, atoms), tree)?;
    Ok(StoredDictionary { dictionary, mean })
}

pub fn save_dictionary(path: &Path, dict: &Dictionary, mean: &[f64]) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    write_dictionary(BufWriter::new(f), dict, mean)
}

pub fn load_dictionary(path: &Path) -> Result<StoredDictionary> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    read_dictionary(BufReader::new(f))
}
