//! Binary snapshot dumps: a small header (dim, cells per axis, n_vars,
//! time) followed by the cell-major values as little-endian f64, plus a
//! plain-text index file listing dump times.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotData {
    pub dim: usize,
    pub cells: Vec<usize>,
    pub n_vars: usize,
    pub time: f64,
    pub values: Vec<f64>,
}

pub fn write_snapshot(path: &Path, snap: &SnapshotData) -> io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&(snap.dim as u32).to_le_bytes())?;
    for &n in &snap.cells {
        w.write_all(&(n as u32).to_le_bytes())?;
    }
    w.write_all(&(snap.n_vars as u32).to_le_bytes())?;
    w.write_all(&snap.time.to_le_bytes())?;
    for v in &snap.values {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()
}

pub fn read_snapshot(path: &Path) -> io::Result<SnapshotData> {
    let mut r = BufReader::new(File::open(path)?);
    let dim = read_u32(&mut r)? as usize;
    if dim == 0 || dim > 2 {
        return Err(io::Error::new(
            io::ErrorKind::InvalidData,
            format!("bad snapshot dimension {dim}"),
        ));
    }
    let mut cells = Vec::with_capacity(dim);
    for _ in 0..dim {
        cells.push(read_u32(&mut r)? as usize);
    }
    let n_vars = read_u32(&mut r)? as usize;
    let time = read_f64(&mut r)?;
    let n_cells: usize = cells.iter().product();
    let mut values = vec![0.0; n_cells * n_vars];
    for v in values.iter_mut() {
        *v = read_f64(&mut r)?;
    }
    Ok(SnapshotData {
        dim,
        cells,
        n_vars,
        time,
        values,
    })
}

fn read_u32<R: Read>(r: &mut R) -> io::Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_f64<R: Read>(r: &mut R) -> io::Result<f64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(f64::from_le_bytes(buf))
}

/// Plain-text index of dumped snapshots: one `step time filename` line each.
pub struct SnapshotIndex {
    w: BufWriter<File>,
}

impl SnapshotIndex {
    pub fn create(path: &Path) -> io::Result<Self> {
        Ok(SnapshotIndex {
            w: BufWriter::new(File::create(path)?),
        })
    }

    pub fn record(&mut self, step: usize, time: f64, file: &Path) -> io::Result<()> {
        writeln!(
            self.w,
            "{} {:.17e} {}",
            step,
            time,
            file.file_name().unwrap_or_default().to_string_lossy()
        )
    }

    pub fn finish(mut self) -> io::Result<()> {
        self.w.flush()
    }
}

/// Parses an index file back into `(step, time, filename)` rows.
pub fn read_index(path: &Path) -> io::Result<Vec<(usize, f64, PathBuf)>> {
    let r = BufReader::new(File::open(path)?);
    let mut rows = Vec::new();
    for line in r.lines() {
        let line = line?;
        let mut it = line.split_whitespace();
        let (Some(k), Some(t), Some(f)) = (it.next(), it.next(), it.next()) else {
            continue;
        };
        let k: usize = k
            .parse()
            .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
        let t: f64 = t
            .parse()
            .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
        rows.push((k, t, PathBuf::from(f)));
    }
    Ok(rows)
}
