//! On-disk cache of branch-kernel blocks keyed by content.
//!
//! A block is addressed by `sha256(id_a, id_b, block_hash)` with the two
//! tree ids in sorted order; lookups with the ids swapped return the
//! transpose. Files are written to a temporary name and renamed into place
//! so concurrent writers never expose a partial block.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};

use nalgebra::DMatrix;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug)]
pub struct BlockCache {
    dir: PathBuf,
    hits: AtomicUsize,
    misses: AtomicUsize,
}

impl BlockCache {
    pub fn open(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(&dir)?;
        Ok(Self {
            dir,
            hits: AtomicUsize::new(0),
            misses: AtomicUsize::new(0),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn hits(&self) -> usize {
        self.hits.load(Ordering::Relaxed)
    }

    pub fn misses(&self) -> usize {
        self.misses.load(Ordering::Relaxed)
    }

    fn file_for(&self, lo: &str, hi: &str, block_hash: &str) -> PathBuf {
        let mut h = Sha256::new();
        for part in [lo, hi, block_hash] {
            h.update(part.as_bytes());
            h.update([0u8]);
        }
        let key = hex::encode(h.finalize());
        self.dir.join(&key[..2]).join(format!("{key}.blk"))
    }

    pub fn get(&self, id_a: &str, id_b: &str, block_hash: &str) -> Option<DMatrix<f64>> {
        let swapped = id_a > id_b;
        let (lo, hi) = if swapped { (id_b, id_a) } else { (id_a, id_b) };
        let found = fs::read(self.file_for(lo, hi, block_hash)).ok().and_then(|b| decode(&b).ok());
        match found {
            Some(m) => {
                self.hits.fetch_add(1, Ordering::Relaxed);
                Some(if swapped { m.transpose() } else { m })
            }
            None => {
                self.misses.fetch_add(1, Ordering::Relaxed);
                None
            }
        }
    }

    pub fn put(&self, id_a: &str, id_b: &str, block_hash: &str, block: &DMatrix<f64>) -> Result<()> {
        let swapped = id_a > id_b;
        let (lo, hi) = if swapped { (id_b, id_a) } else { (id_a, id_b) };
        let stored = if swapped { block.transpose() } else { block.clone() };
        let path = self.file_for(lo, hi, block_hash);
        let parent = path.parent().expect("cache files live in a shard directory");
        fs::create_dir_all(parent)?;
        let mut tmp = tempfile::NamedTempFile::new_in(parent)?;
        tmp.write_all(&encode(&stored))?;
        tmp.persist(&path).map_err(|e| Error::Io(e.error))?;
        Ok(())
    }
}

fn encode(m: &DMatrix<f64>) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + 8 * m.len());
    out.extend_from_slice(&(m.nrows() as u64).to_le_bytes());
    out.extend_from_slice(&(m.ncols() as u64).to_le_bytes());
    // column-major, as stored
    for v in m.iter() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

fn decode(bytes: &[u8]) -> Result<DMatrix<f64>> {
    let bad = || Error::Format("corrupt cache block".into());
    if bytes.len() < 16 {
        return Err(bad());
    }
    let rows = u64::from_le_bytes(bytes[0..8].try_into().unwrap()) as usize;
    let cols = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let body = &bytes[16..];
    if rows.checked_mul(cols).and_then(|n| n.checked_mul(8)) != Some(body.len()) {
        return Err(bad());
    }
    let values = body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap()));
    Ok(DMatrix::from_iterator(rows, cols, values))
}
