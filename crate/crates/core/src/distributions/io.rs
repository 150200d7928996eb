//! Sample batch persistence.
//!
//! Binary layout (all integers and floats little-endian):
//!
//! ```text
//! b"LCSB"  u32 version=1  u64 n  u64 count  u64 seed
//! u64 spec_len  spec_len bytes of DistributionSpec JSON
//! count·n f64, row-major
//! ```
//!
//! CSV layout: header `x1,…,xn`, then one row per sample in the same
//! coordinate order. CSV carries no provenance; the reader is handed the spec
//! and seed.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{DistributionSpec, SampleBatch};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"LCSB";
const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BatchFormat {
    Binary,
    Csv,
}

pub fn write_batch(batch: &SampleBatch, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let spec = serde_json::to_vec(batch.spec())?;
    let mut put = |bytes: &[u8]| w.write_all(bytes).map_err(|e| Error::io(path, e));
    put(MAGIC)?;
    put(&VERSION.to_le_bytes())?;
    put(&(batch.dimension() as u64).to_le_bytes())?;
    put(&(batch.count() as u64).to_le_bytes())?;
    put(&batch.seed().to_le_bytes())?;
    put(&(spec.len() as u64).to_le_bytes())?;
    put(&spec)?;
    for v in batch.data() {
        put(&v.to_le_bytes())?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_batch(path: &Path) -> Result<SampleBatch> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let mut take = |len: usize| -> Result<Vec<u8>> {
        let mut buf = vec![0u8; len];
        r.read_exact(&mut buf).map_err(|e| Error::io(path, e))?;
        Ok(buf)
    };
    if take(4)? != MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let u32_at = |b: Vec<u8>| u32::from_le_bytes(b.try_into().expect("4 bytes"));
    let u64_at = |b: Vec<u8>| u64::from_le_bytes(b.try_into().expect("8 bytes"));
    let version = u32_at(take(4)?);
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let n = u64_at(take(8)?) as usize;
    let count = u64_at(take(8)?) as usize;
    let seed = u64_at(take(8)?);
    let spec_len = u64_at(take(8)?) as usize;
    let spec: DistributionSpec = serde_json::from_slice(&take(spec_len)?)?;
    if spec.dimension() != n {
        return Err(Error::Format(format!(
            "header says n = {n}, spec says {}",
            spec.dimension()
        )));
    }
    let raw = take(count * n * 8)?;
    let data = raw
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    SampleBatch::from_parts(spec, seed, data)
}

pub fn write_batch_csv(batch: &SampleBatch, out: &mut dyn Write) -> std::io::Result<()> {
    let header: Vec<String> = (1..=batch.dimension()).map(|j| format!("x{j}")).collect();
    writeln!(out, "{}", header.join(","))?;
    for row in batch.rows() {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
        writeln!(out, "{}", cells.join(","))?;
    }
    Ok(())
}

pub fn read_batch_csv(path: &Path, spec: DistributionSpec, seed: u64) -> Result<SampleBatch> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut data = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if i == 0 || line.trim().is_empty() {
            continue;
        }
        for cell in line.split(',') {
            let v: f64 = cell
                .trim()
                .parse()
                .map_err(|_| Error::Format(format!("line {}: bad number {cell:?}", i + 1)))?;
            data.push(v);
        }
    }
    SampleBatch::from_parts(spec, seed, data)
}
