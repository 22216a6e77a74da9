//! PCLD binary point-cloud format: `b"PCLD"`, little-endian `u32` point
//! count, then `count × 3` little-endian `f32` coordinates.

use std::fs;
use std::path::Path;

use super::pointcloud::{Point, PointCloud};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"PCLD";

pub fn encode(points: &[Point]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + points.len() * 12);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(points.len() as u32).to_le_bytes());
    for p in points {
        for c in p {
            out.extend_from_slice(&c.to_le_bytes());
        }
    }
    out
}

pub fn decode(bytes: &[u8]) -> Result<Vec<Point>> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(Error::BadMagic);
    }
    if bytes.len() < 8 {
        return Err(Error::Truncated {
            expected: 0,
            available: 0,
        });
    }
    let count = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes")) as usize;
    let payload = &bytes[8..];
    let needed = count * 12;
    if payload.len() < needed {
        return Err(Error::Truncated {
            expected: count,
            available: payload.len(),
        });
    }
    if payload.len() > needed {
        return Err(Error::Parse(format!(
            "{} trailing bytes after {count} points",
            payload.len() - needed
        )));
    }
    let mut points = Vec::with_capacity(count);
    for (i, chunk) in payload.chunks_exact(12).enumerate() {
        let f = |k: usize| f32::from_le_bytes(chunk[4 * k..4 * k + 4].try_into().expect("4 bytes"));
        let p = [f(0), f(1), f(2)];
        if !p.iter().all(|c| c.is_finite()) {
            return Err(Error::NonFinite { index: i });
        }
        points.push(p);
    }
    Ok(points)
}

/// Reads an unlabeled cloud; the id is the file stem.
pub fn read_pointcloud_file(path: impl AsRef<Path>) -> Result<PointCloud> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let points = decode(&bytes)?;
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Ok(PointCloud::new(id, None, points))
}

pub fn write_pointcloud_file(path: impl AsRef<Path>, points: &[Point]) -> Result<()> {
    let path = path.as_ref();
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, encode(points)).map_err(|e| Error::io(path, e))
}
