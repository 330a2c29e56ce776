//! Spectrogram dataset file, little-endian throughout:
//!
//! ```text
//! b"BDSD"  u32 version  u64 count  u32 rank  rank × u32 item extents
//! count × prod(extents) f32 values
//! count × u32 labels
//! ```

use std::fs;
use std::path::Path;

use crate::diffcore::Array;
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"BDSD";
const VERSION: u32 = 1;

/// Writes `items` (`[count, ...]`) with one label per item. Values are
/// narrowed to f32.
pub fn write_dataset_file(path: &Path, items: &Array, labels: &[u32]) -> Result<()> {
    let e = items.extents();
    if e.is_empty() || e[0] != labels.len() {
        return Err(Error::shape(format!(
            "{} labels for items of extents {e:?}",
            labels.len()
        )));
    }
    let mut buf = Vec::with_capacity(24 + 4 * (items.len() + labels.len()));
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(e[0] as u64).to_le_bytes());
    buf.extend_from_slice(&((e.len() - 1) as u32).to_le_bytes());
    for &d in &e[1..] {
        buf.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for &v in items.data() {
        buf.extend_from_slice(&(v as f32).to_le_bytes());
    }
    for &l in labels {
        buf.extend_from_slice(&l.to_le_bytes());
    }
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn read_dataset_file(path: &Path) -> Result<(Array, Vec<u32>)> {
    if !path.exists() {
        return Err(Error::MissingArtifact(path.to_path_buf()));
    }
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let bad = |why: &str| Error::format(path, why.to_string());
    let mut pos = 0usize;
    let mut take = |n: usize| -> Result<&[u8]> {
        let s = bytes.get(pos..pos + n).ok_or_else(|| bad("truncated file"))?;
        pos += n;
        Ok(s)
    };
    if take(4)? != MAGIC {
        return Err(bad("not a dataset file (magic mismatch)"));
    }
    let u32_at = |s: &[u8]| u32::from_le_bytes(s.try_into().expect("4 bytes"));
    let version = u32_at(take(4)?);
    if version != VERSION {
        return Err(bad(&format!("unsupported dataset version {version}")));
    }
    let count = u64::from_le_bytes(take(8)?.try_into().expect("8 bytes")) as usize;
    let rank = u32_at(take(4)?) as usize;
    if rank > 8 {
        return Err(bad("implausible rank"));
    }
    let mut extents = vec![count];
    for _ in 0..rank {
        extents.push(u32_at(take(4)?) as usize);
    }
    let n: usize = extents.iter().product();
    let values = take(n.checked_mul(4).ok_or_else(|| bad("size overflow"))?)?
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
        .collect();
    let labels = take(4 * count)?.chunks_exact(4).map(u32_at).collect();
    if pos != bytes.len() {
        return Err(bad("trailing bytes"));
    }
    Ok((Array::new(extents, values)?, labels))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_corruption() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.sds");
        let items = Array::new(vec![2, 2, 3, 1], (0..12).map(|i| i as f64 / 16.0 - 0.5).collect()).unwrap();
        write_dataset_file(&p, &items, &[3, 0]).unwrap();
        let (back, labels) = read_dataset_file(&p).unwrap();
        assert_eq!(back, items);
        assert_eq!(labels, vec![3, 0]);

        let bytes = fs::read(&p).unwrap();
        fs::write(&p, &bytes[..bytes.len() - 1]).unwrap();
        assert!(matches!(read_dataset_file(&p), Err(Error::Format { .. })));
        assert!(write_dataset_file(&p, &items, &[1]).is_err());
    }
}
