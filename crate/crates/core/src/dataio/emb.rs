use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::numkit::DenseMatrix;
use crate::Scalar;

pub const EMB1_MAGIC: &[u8; 4] = b"EMB1";

/// Appends one EMB1 record (`"EMB1"`, u32 rows, u32 cols, f32 row-major, little-endian).
pub fn write_emb1_record<T: Scalar>(out: &mut Vec<u8>, m: &DenseMatrix<T>) -> Result<()> {
    let rows = u32::try_from(m.rows()).map_err(|_| Error::Format("too many rows for EMB1".into()))?;
    let cols = u32::try_from(m.cols()).map_err(|_| Error::Format("too many cols for EMB1".into()))?;
    out.reserve(12 + 4 * m.len());
    out.extend_from_slice(EMB1_MAGIC);
    out.extend_from_slice(&rows.to_le_bytes());
    out.extend_from_slice(&cols.to_le_bytes());
    for &v in m.data() {
        out.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
    }
    Ok(())
}

/// Parses one EMB1 record from the start of `bytes`, returning it and the bytes consumed.
pub fn read_emb1_record<T: Scalar>(bytes: &[u8]) -> Result<(DenseMatrix<T>, usize)> {
    if bytes.len() < 12 || &bytes[..4] != EMB1_MAGIC {
        return Err(Error::Format("missing EMB1 magic".into()));
    }
    let rows = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let count = rows
        .checked_mul(cols)
        .ok_or_else(|| Error::Format("EMB1 shape overflows".into()))?;
    let end = 12 + 4 * count;
    if bytes.len() < end {
        return Err(Error::Format(format!(
            "EMB1 header declares {rows}x{cols} but only {} payload bytes follow",
            bytes.len() - 12
        )));
    }
    let mut data = Vec::with_capacity(count);
    for chunk in bytes[12..end].chunks_exact(4) {
        let v = f32::from_le_bytes(chunk.try_into().unwrap());
        if !v.is_finite() {
            return Err(Error::Data("non-finite value in EMB1 payload".into()));
        }
        data.push(T::of(v as f64));
    }
    Ok((DenseMatrix::new(rows, cols, data)?, end))
}

pub fn write_emb1<T: Scalar>(path: impl AsRef<Path>, m: &DenseMatrix<T>) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    write_emb1_record(&mut buf, m)?;
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&buf).map_err(|e| Error::io(path, e))
}

/// Reads a file holding exactly one EMB1 record.
pub fn read_emb1<T: Scalar>(path: impl AsRef<Path>) -> Result<DenseMatrix<T>> {
    let bytes = read_all(path.as_ref())?;
    let (m, used) = read_emb1_record(&bytes)?;
    if used != bytes.len() {
        return Err(Error::Format(format!(
            "{} trailing bytes after EMB1 payload",
            bytes.len() - used
        )));
    }
    Ok(m)
}

/// Loads an `N × l` semantic embedding matrix from EMB1 or headerless CSV.
pub fn load_embedding_matrix<T: Scalar>(path: impl AsRef<Path>) -> Result<DenseMatrix<T>> {
    let path = path.as_ref();
    let bytes = read_all(path)?;
    if bytes.starts_with(EMB1_MAGIC) {
        return read_emb1(path);
    }
    let text = String::from_utf8(bytes).map_err(|_| Error::Format("neither EMB1 nor UTF-8 CSV".into()))?;
    parse_csv(&text)
}

fn parse_csv<T: Scalar>(text: &str) -> Result<DenseMatrix<T>> {
    let mut rows: Vec<Vec<T>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut row = Vec::new();
        for cell in line.split(',') {
            let v: f64 = cell.trim().parse().map_err(|_| Error::Parse {
                line: lineno + 1,
                msg: format!("not a number: {cell:?}"),
            })?;
            if !v.is_finite() {
                return Err(Error::Data(format!("non-finite cell on line {}", lineno + 1)));
            }
            row.push(T::of(v));
        }
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::Format(format!(
                    "line {} has {} cells, expected {}",
                    lineno + 1,
                    row.len(),
                    first.len()
                )));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Format("empty embedding file".into()));
    }
    DenseMatrix::from_rows(&rows)
}

fn read_all(path: &Path) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut buf))
        .map_err(|e| Error::io(path, e))?;
    Ok(buf)
}
