//! Binary field checkpoints.
//!
//! Layout (little-endian): `b"FNLS"`, `u32` version, `u8` dimension, one `u64`
//! point count per axis, one `f64` half-period per axis, `f64` time, `f64` s,
//! `f64` a, then the physical samples as interleaved `(re, im)` `f64` pairs in
//! row-major order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::spectral::{ComplexField, Grid, Space};

pub const MAGIC: &[u8; 4] = b"FNLS";
pub const VERSION: u32 = 1;

/// Scalars stored next to the samples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CheckpointMeta {
    pub time: f64,
    pub s: f64,
    pub a: f64,
}

pub fn write_checkpoint<W: Write>(mut w: W, field: &ComplexField, meta: CheckpointMeta) -> Result<()> {
    let phys = field.to_physical();
    let grid = phys.grid();
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&[grid.dim() as u8])?;
    for &n in grid.n() {
        w.write_all(&(n as u64).to_le_bytes())?;
    }
    for &l in grid.half_len() {
        w.write_all(&l.to_le_bytes())?;
    }
    for v in [meta.time, meta.s, meta.a] {
        w.write_all(&v.to_le_bytes())?;
    }
    for v in phys.values() {
        w.write_all(&v.re.to_le_bytes())?;
        w.write_all(&v.im.to_le_bytes())?;
    }
    Ok(())
}

fn read_array<const N: usize, R: Read>(r: &mut R) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::Format("checkpoint truncated".into()),
        _ => Error::Io(e),
    })?;
    Ok(buf)
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    Ok(f64::from_le_bytes(read_array::<8, _>(r)?))
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<(ComplexField, CheckpointMeta)> {
    if &read_array::<4, _>(&mut r)? != MAGIC {
        return Err(Error::Format("bad magic bytes".into()));
    }
    let version = u32::from_le_bytes(read_array::<4, _>(&mut r)?);
    if version != VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    let dim = read_array::<1, _>(&mut r)?[0] as usize;
    if dim == 0 || dim > crate::spectral::MAX_DIM {
        return Err(Error::Format(format!("bad dimension {dim}")));
    }
    let mut n = Vec::with_capacity(dim);
    for _ in 0..dim {
        let na = u64::from_le_bytes(read_array::<8, _>(&mut r)?);
        n.push(usize::try_from(na).map_err(|_| Error::Format("axis size overflows".into()))?);
    }
    let mut half_len = Vec::with_capacity(dim);
    for _ in 0..dim {
        half_len.push(read_f64(&mut r)?);
    }
    let grid = Grid::new(&n, &half_len).map_err(|e| Error::Format(format!("bad grid header: {e}")))?;
    let meta = CheckpointMeta { time: read_f64(&mut r)?, s: read_f64(&mut r)?, a: read_f64(&mut r)? };
    let mut values = Vec::with_capacity(grid.point_count());
    for _ in 0..grid.point_count() {
        let re = read_f64(&mut r)?;
        let im = read_f64(&mut r)?;
        values.push(Complex64::new(re, im));
    }
    let mut probe = [0u8; 1];
    if r.read(&mut probe)? != 0 {
        return Err(Error::Format("trailing bytes after checkpoint payload".into()));
    }
    Ok((ComplexField::new(&grid, values, Space::Physical)?, meta))
}

pub fn save_checkpoint(path: &Path, field: &ComplexField, meta: CheckpointMeta) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_checkpoint(&mut w, field, meta)?;
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<(ComplexField, CheckpointMeta)> {
    read_checkpoint(BufReader::new(File::open(path)?))
}

/// File name used for periodic run checkpoints, `run_<tag>_t<time>.fnls`.
pub fn checkpoint_file_name(tag: &str, time: f64) -> String {
    format!("run_{tag}_t{time:.6}.fnls")
}
