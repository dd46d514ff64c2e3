//! Binary field snapshots and trajectory directories.
//!
//! A snapshot is a 32-byte header followed by `m^d` little-endian `(re, im)`
//! pairs in row-major order:
//!
//! | bytes  | content                      |
//! |--------|------------------------------|
//! | 0..4   | magic `DLAB`                 |
//! | 4..8   | version (u32)                |
//! | 8..12  | dimension (u32)              |
//! | 12..16 | points per axis (u32)        |
//! | 16..24 | box length (f64)             |
//! | 24..28 | domain, 0 physical 1 spectral |
//! | 28..32 | reserved, zero               |
//!
//! A trajectory directory holds `frame_NNNNN.dlab` files plus `manifest.json`.

use crate::error::{DlabError, Result};
use crate::grid::{Domain, Field, FrameSource, SpectralGrid, Trajectory};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::fs;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

pub const MAGIC: &[u8; 4] = b"DLAB";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 32;
pub const MANIFEST: &str = "manifest.json";

fn format_err(msg: impl Into<String>) -> DlabError {
    DlabError::SnapshotFormat(msg.into())
}

pub fn write_field<W: Write>(field: &Field, mut w: W) -> Result<()> {
    let g = field.grid();
    if g.has_carrier() {
        return Err(format_err("carrier grids cannot be stored in a snapshot"));
    }
    let mut header = [0u8; HEADER_LEN];
    header[0..4].copy_from_slice(MAGIC);
    header[4..8].copy_from_slice(&VERSION.to_le_bytes());
    header[8..12].copy_from_slice(&(g.dim() as u32).to_le_bytes());
    header[12..16].copy_from_slice(&(g.points() as u32).to_le_bytes());
    header[16..24].copy_from_slice(&g.length().to_le_bytes());
    let tag: u32 = match field.domain() {
        Domain::Physical => 0,
        Domain::Frequency => 1,
    };
    header[24..28].copy_from_slice(&tag.to_le_bytes());
    w.write_all(&header)?;
    let mut buf = Vec::with_capacity(16 * 4096);
    for chunk in field.data().chunks(4096) {
        buf.clear();
        for z in chunk {
            buf.extend_from_slice(&z.re.to_le_bytes());
            buf.extend_from_slice(&z.im.to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    w.flush()?;
    Ok(())
}

fn u32_at(h: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(h[at..at + 4].try_into().expect("4 bytes"))
}

pub fn read_field<R: Read>(mut r: R) -> Result<Field> {
    let mut header = [0u8; HEADER_LEN];
    r.read_exact(&mut header).map_err(|e| format_err(format!("short header: {e}")))?;
    if &header[0..4] != MAGIC {
        return Err(format_err("bad magic"));
    }
    let version = u32_at(&header, 4);
    if version != VERSION {
        return Err(format_err(format!("unsupported version {version}")));
    }
    let dim = u32_at(&header, 8) as usize;
    let points = u32_at(&header, 12) as usize;
    let length = f64::from_le_bytes(header[16..24].try_into().expect("8 bytes"));
    let domain = match u32_at(&header, 24) {
        0 => Domain::Physical,
        1 => Domain::Frequency,
        t => return Err(format_err(format!("unknown domain tag {t}"))),
    };
    let grid = SpectralGrid::new(dim, points, length).map_err(|e| format_err(format!("header grid: {e}")))?;
    let mut bytes = vec![0u8; grid.len() * 16];
    r.read_exact(&mut bytes).map_err(|e| format_err(format!("short payload: {e}")))?;
    let mut extra = [0u8; 1];
    if r.read(&mut extra)? != 0 {
        return Err(format_err("trailing bytes after payload"));
    }
    let data = bytes
        .chunks_exact(16)
        .map(|c| {
            Complex64::new(
                f64::from_le_bytes(c[0..8].try_into().expect("8 bytes")),
                f64::from_le_bytes(c[8..16].try_into().expect("8 bytes")),
            )
        })
        .collect();
    Field::from_vec(grid, domain, data)
}

pub fn save_field(field: &Field, path: &Path) -> Result<()> {
    write_field(field, BufWriter::new(fs::File::create(path)?))
}

pub fn load_field(path: &Path) -> Result<Field> {
    read_field(BufReader::new(fs::File::open(path)?))
}

/// Sidecar describing a trajectory directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectoryManifest {
    pub grid: SpectralGrid,
    pub t0: f64,
    pub dt: f64,
    pub frames: Vec<String>,
    /// Free-form producer metadata (config, diagnostics).
    #[serde(default)]
    pub meta: serde_json::Value,
}

pub fn frame_name(i: usize) -> String {
    format!("frame_{i:05}.dlab")
}

pub fn save_trajectory(tr: &Trajectory, dir: &Path, meta: serde_json::Value) -> Result<TrajectoryManifest> {
    fs::create_dir_all(dir)?;
    let mut names = Vec::with_capacity(tr.frames().len());
    for (i, f) in tr.frames().iter().enumerate() {
        let name = frame_name(i);
        save_field(f, &dir.join(&name))?;
        names.push(name);
    }
    let manifest = TrajectoryManifest { grid: *tr.grid(), t0: tr.t0(), dt: tr.dt(), frames: names, meta };
    fs::write(dir.join(MANIFEST), serde_json::to_string_pretty(&manifest)?)?;
    Ok(manifest)
}

pub fn load_trajectory(dir: &Path) -> Result<(Trajectory, TrajectoryManifest)> {
    let manifest: TrajectoryManifest = serde_json::from_slice(&fs::read(dir.join(MANIFEST))?)?;
    let mut frames = Vec::with_capacity(manifest.frames.len());
    for name in &manifest.frames {
        let f = load_field(&dir.join(name))?;
        manifest.grid.ensure_same(f.grid())?;
        frames.push(if f.domain() == Domain::Physical { f } else { f.into_physical()? });
    }
    Ok((Trajectory::new(manifest.t0, manifest.dt, frames)?, manifest))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Field {
        let g = SpectralGrid::new(2, 8, 3.0).unwrap();
        Field::from_physical_fn(g, |x| Complex64::new(x[0].sin(), x[1] * 0.5))
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let f = sample();
        let mut buf = Vec::new();
        write_field(&f, &mut buf).unwrap();
        assert_eq!(buf.len(), HEADER_LEN + 64 * 16);
        assert_eq!(&buf[0..4], b"DLAB");
        let back = read_field(buf.as_slice()).unwrap();
        assert_eq!(back, f);
        let hat = f.to_frequency().unwrap();
        let mut buf = Vec::new();
        write_field(&hat, &mut buf).unwrap();
        assert_eq!(read_field(buf.as_slice()).unwrap(), hat);
    }

    #[test]
    fn corrupt_input_rejected() {
        let mut buf = Vec::new();
        write_field(&sample(), &mut buf).unwrap();
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(read_field(bad.as_slice()), Err(DlabError::SnapshotFormat(_))));
        assert!(read_field(&buf[..buf.len() - 1]).is_err());
        let mut long = buf.clone();
        long.push(0);
        assert!(read_field(long.as_slice()).is_err());
        let mut tag = buf;
        tag[24] = 7;
        assert!(read_field(tag.as_slice()).is_err());
    }

    #[test]
    fn carrier_grid_refused() {
        let g = SpectralGrid::new(2, 8, 3.0).unwrap().with_carrier([1.0, 0.0, 0.0, 0.0]).unwrap();
        let f = Field::zeros(g, Domain::Physical);
        assert!(write_field(&f, Vec::new()).is_err());
    }

    #[test]
    fn trajectory_directory_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let f = sample();
        let tr = Trajectory::new(0.5, 0.25, vec![f.clone(), f.clone(), f]).unwrap();
        save_trajectory(&tr, dir.path(), serde_json::json!({"note": "x"})).unwrap();
        let (back, manifest) = load_trajectory(dir.path()).unwrap();
        assert_eq!(back.frames(), tr.frames());
        assert_eq!(back.t0(), 0.5);
        assert_eq!(manifest.meta["note"], "x");
    }
}
