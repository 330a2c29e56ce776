//! Binary checkpoint format, little-endian throughout:
//!
//! ```text
//! b"PBCNNCKP"  u32 version
//! u32 header_len, header_len bytes of JSON {spec, prior, trained}
//! per trainable layer: w_mu, w_rho, b_mu, b_rho, each u64 count + f64s
//! ```
//!
//! Values are stored as raw IEEE bits, so a load reproduces the saved
//! parameters exactly.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::network::{NetworkSpec, Pbcnn, VariationalLayer};
use super::variational::{GaussianVariational, PriorSpec};
use crate::diffcore::Array;
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"PBCNNCKP";
const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    spec: NetworkSpec,
    prior: PriorSpec,
    trained: bool,
}

fn put_array(buf: &mut Vec<u8>, a: &Array) {
    buf.extend_from_slice(&(a.len() as u64).to_le_bytes());
    for v in a.data() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
}

pub fn checkpoint_bytes(model: &Pbcnn) -> Result<Vec<u8>> {
    let header = serde_json::to_vec(&Header {
        spec: model.spec().clone(),
        prior: *model.prior(),
        trained: model.is_trained(),
    })?;
    let mut buf = Vec::with_capacity(16 + header.len() + 8 * model.variational_param_count());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(header.len() as u32).to_le_bytes());
    buf.extend_from_slice(&header);
    for l in model.layers() {
        for a in [&l.weight.mu, &l.weight.rho, &l.bias.mu, &l.bias.rho] {
            put_array(&mut buf, a);
        }
    }
    Ok(buf)
}

pub fn save_checkpoint(model: &Pbcnn, path: &Path) -> Result<()> {
    let bytes = checkpoint_bytes(model)?;
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let end = self.pos.checked_add(n)?;
        let s = self.bytes.get(self.pos..end)?;
        self.pos = end;
        Some(s)
    }

    fn u32(&mut self) -> Option<u32> {
        Some(u32::from_le_bytes(self.take(4)?.try_into().ok()?))
    }

    fn u64(&mut self) -> Option<u64> {
        Some(u64::from_le_bytes(self.take(8)?.try_into().ok()?))
    }

    fn array(&mut self, extents: Vec<usize>) -> Option<Array> {
        let n = usize::try_from(self.u64()?).ok()?;
        if n != extents.iter().product::<usize>() {
            return None;
        }
        let raw = self.take(n.checked_mul(8)?)?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        Array::new(extents, data).ok()
    }
}

pub fn checkpoint_from_bytes(bytes: &[u8], path: &Path) -> Result<Pbcnn> {
    let bad = |reason: &str| Error::format(path, reason);
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8) != Some(MAGIC.as_slice()) {
        return Err(bad("not a checkpoint (magic mismatch)"));
    }
    match r.u32() {
        Some(VERSION) => {}
        Some(v) => return Err(bad(&format!("unsupported checkpoint version {v}"))),
        None => return Err(bad("truncated header")),
    }
    let hlen = r.u32().ok_or_else(|| bad("truncated header"))? as usize;
    let hbytes = r.take(hlen).ok_or_else(|| bad("truncated header"))?;
    let header: Header =
        serde_json::from_slice(hbytes).map_err(|e| bad(&format!("bad header: {e}")))?;
    let kinds = header.spec.trainable_layers()?;
    let mut layers = Vec::with_capacity(kinds.len());
    for kind in kinds {
        let wext = kind.weight_extents();
        let c = kind.out_channels();
        let mut next = |ext: Vec<usize>| r.array(ext).ok_or_else(|| bad("truncated or inconsistent tensor"));
        let (wm, wr, bm, br) = (next(wext.clone())?, next(wext)?, next(vec![c])?, next(vec![c])?);
        layers.push(VariationalLayer {
            kind,
            weight: GaussianVariational::new(wm, wr)?,
            bias: GaussianVariational::new(bm, br)?,
        });
    }
    if r.pos != bytes.len() {
        return Err(bad("trailing bytes after last tensor"));
    }
    Pbcnn::from_parts(header.spec, header.prior, layers, header.trained)
}

pub fn load_checkpoint(path: &Path) -> Result<Pbcnn> {
    if !path.exists() {
        return Err(Error::MissingArtifact(path.to_path_buf()));
    }
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    checkpoint_from_bytes(&bytes, path)
}
