//! Flat binary format for grid functions, JSON sidecars and atomic writes.
//!
//! Layout (little endian): magic `SPLB`, u32 version, u32 d, u32 flags
//! (bit 0: frequency space), f64 L, u64 N, f64 h, u8 distribution tag
//! (0 = none), u64 seed, then N^d complex64 values as (f32 re, f32 im).

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{BoxGrid, GridFunction, Space, C64};
use crate::potentials::{Distribution, RandomPotential};

const MAGIC: &[u8; 4] = b"SPLB";
const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub d: usize,
    pub l: f64,
    pub n: usize,
    pub space: Space,
    pub h: f64,
    pub distribution: Option<Distribution>,
    pub seed: u64,
}

impl Header {
    pub fn plain(f: &GridFunction) -> Self {
        let g = f.grid();
        Header { d: g.d, l: g.l, n: g.n, space: f.space(), h: 0.0, distribution: None, seed: 0 }
    }

    pub fn for_potential(p: &RandomPotential) -> Self {
        Header {
            h: p.scheme.h,
            distribution: Some(p.scheme.distribution),
            seed: p.scheme.seed,
            ..Header::plain(&p.realized)
        }
    }
}

pub fn encode(f: &GridFunction, header: &Header) -> Vec<u8> {
    let mut out = Vec::with_capacity(45 + 8 * f.values().len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(header.d as u32).to_le_bytes());
    let flags: u32 = if header.space == Space::Frequency { 1 } else { 0 };
    out.extend_from_slice(&flags.to_le_bytes());
    out.extend_from_slice(&header.l.to_le_bytes());
    out.extend_from_slice(&(header.n as u64).to_le_bytes());
    out.extend_from_slice(&header.h.to_le_bytes());
    out.push(header.distribution.map_or(0, |d| d.tag()));
    out.extend_from_slice(&header.seed.to_le_bytes());
    for v in f.values() {
        out.extend_from_slice(&(v.re as f32).to_le_bytes());
        out.extend_from_slice(&(v.im as f32).to_le_bytes());
    }
    out
}

fn take<const K: usize>(bytes: &[u8], pos: &mut usize) -> Result<[u8; K]> {
    let end = *pos + K;
    let chunk = bytes
        .get(*pos..end)
        .ok_or_else(|| Error::Config("truncated grid-function file".into()))?;
    *pos = end;
    Ok(chunk.try_into().expect("slice length"))
}

pub fn decode(bytes: &[u8]) -> Result<(Header, GridFunction)> {
    let mut pos = 0;
    if &take::<4>(bytes, &mut pos)? != MAGIC {
        return Err(Error::Config("not a grid-function file".into()));
    }
    let version = u32::from_le_bytes(take(bytes, &mut pos)?);
    if version != VERSION {
        return Err(Error::Config(format!("unsupported format version {version}")));
    }
    let d = u32::from_le_bytes(take(bytes, &mut pos)?) as usize;
    let flags = u32::from_le_bytes(take(bytes, &mut pos)?);
    let l = f64::from_le_bytes(take(bytes, &mut pos)?);
    let n = u64::from_le_bytes(take(bytes, &mut pos)?) as usize;
    let h = f64::from_le_bytes(take(bytes, &mut pos)?);
    let tag = take::<1>(bytes, &mut pos)?[0];
    let seed = u64::from_le_bytes(take(bytes, &mut pos)?);
    let grid = BoxGrid::new(d, l, n)?;
    let space = if flags & 1 == 1 { Space::Frequency } else { Space::Position };
    let mut values = Vec::with_capacity(grid.len());
    for _ in 0..grid.len() {
        let re = f32::from_le_bytes(take(bytes, &mut pos)?);
        let im = f32::from_le_bytes(take(bytes, &mut pos)?);
        values.push(C64::new(re as f64, im as f64));
    }
    if pos != bytes.len() {
        return Err(Error::Config("trailing bytes in grid-function file".into()));
    }
    let header = Header { d, l, n, space, h, distribution: Distribution::from_tag(tag), seed };
    Ok((header, GridFunction::from_values(grid, space, values)?))
}

/// Writes `path` and its `.json` sidecar.
pub fn write_grid_function(path: &Path, f: &GridFunction, header: &Header) -> Result<()> {
    write_atomic(path, &encode(f, header))?;
    let mut sidecar = serde_json::to_value(header)?;
    sidecar["dx"] = serde_json::json!(f.grid().dx);
    sidecar["count"] = serde_json::json!(f.values().len());
    sidecar["format"] = serde_json::json!("splb-1 complex64 little-endian");
    let text = serde_json::to_string_pretty(&sidecar)?;
    write_atomic(&sidecar_path(path), text.as_bytes())
}

pub fn read_grid_function(path: &Path) -> Result<(Header, GridFunction)> {
    decode(&fs::read(path)?)
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// Temp file in the same directory, then rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let name = path
        .file_name()
        .ok_or_else(|| Error::Config(format!("invalid output path {}", path.display())))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(name);
    tmp_name.push(format!(".tmp{}", std::process::id()));
    let tmp = dir.join(tmp_name);
    {
        let mut file = fs::File::create(&tmp)?;
        file.write_all(bytes)?;
        file.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_grid;

    #[test]
    fn roundtrip() {
        let g = make_grid(2, 8.0, 8).unwrap();
        let f = GridFunction::from_fn(g, Space::Frequency, |x| C64::new(x[0], -x[1]));
        let header = Header {
            h: 0.5,
            distribution: Some(Distribution::GaussianStandard),
            seed: 9,
            ..Header::plain(&f)
        };
        let bytes = encode(&f, &header);
        let (h2, f2) = decode(&bytes).unwrap();
        assert_eq!(h2, header);
        assert_eq!(f2.space(), Space::Frequency);
        for (a, b) in f.values().iter().zip(f2.values()) {
            assert!((a - b).norm() < 1e-6);
        }
        assert!(decode(&bytes[..bytes.len() - 1]).is_err());
    }

    #[test]
    fn files_and_sidecar() {
        let dir = std::env::temp_dir().join(format!("splb-test-{}", std::process::id()));
        let path = dir.join("v.splb");
        let g = make_grid(1, 4.0, 8).unwrap();
        let f = GridFunction::from_real_fn(g, Space::Position, |x| x[0]);
        write_grid_function(&path, &f, &Header::plain(&f)).unwrap();
        let (_, back) = read_grid_function(&path).unwrap();
        assert_eq!(back.values(), f.values());
        let side: serde_json::Value =
            serde_json::from_slice(&fs::read(sidecar_path(&path)).unwrap()).unwrap();
        assert_eq!(side["n"], 8);
        fs::remove_dir_all(dir).unwrap();
    }
}
