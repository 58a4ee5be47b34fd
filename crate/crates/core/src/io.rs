//! Volume files and tabular outputs.
//!
//! A volume is a JSON header next to a raw little-endian data file:
//!
//! ```json
//! {"dims":[nx,ny,nz],"spacing_um":[sx,sy,sz],"dtype":"u16","data":"vol.raw","order":"x-fastest"}
//! ```
//!
//! `data` is resolved relative to the header's directory. Values are stored
//! x-fastest (`i + nx*(j + ny*k)`). Masks use `u8` with values {0, 1}.
//! Derived maps use `f32` and mark voxels outside their mask with `-1`.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::volume::{BinaryMask, Grid, Volume3D};

pub const INDEX_ORDER: &str = "x-fastest";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DType {
    U8,
    U16,
    F32,
}

impl DType {
    pub fn size(self) -> usize {
        match self {
            DType::U8 => 1,
            DType::U16 => 2,
            DType::F32 => 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolumeHeader {
    pub dims: [usize; 3],
    pub spacing_um: [f64; 3],
    pub dtype: String,
    pub data: String,
    #[serde(default = "default_order")]
    pub order: String,
    /// Value marking voxels outside the mapped mask, for derived maps.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sentinel: Option<f32>,
}

fn default_order() -> String {
    INDEX_ORDER.to_string()
}

fn parse_dtype(s: &str) -> Result<DType> {
    match s {
        "u8" => Ok(DType::U8),
        "u16" => Ok(DType::U16),
        "f32" => Ok(DType::F32),
        other => Err(Error::UnsupportedFormat(format!("unknown dtype `{other}`"))),
    }
}

fn dtype_name(d: DType) -> &'static str {
    match d {
        DType::U8 => "u8",
        DType::U16 => "u16",
        DType::F32 => "f32",
    }
}

/// Write `bytes` to `path` through a temporary sibling and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut tmp_name = path.file_name().unwrap_or_default().to_os_string();
    tmp_name.push(".tmp");
    let tmp = dir.join(tmp_name);
    {
        let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
    }
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Header path and raw path for a base name: `base.json` + `base.raw`.
pub fn volume_paths(base: &Path) -> (PathBuf, PathBuf) {
    (base.with_extension("json"), base.with_extension("raw"))
}

pub fn read_header(path: &Path) -> Result<VolumeHeader> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let header: VolumeHeader =
        serde_json::from_str(&text).map_err(|e| Error::InvalidHeader { path: path.into(), reason: e.to_string() })?;
    if header.dims.contains(&0) {
        return Err(Error::InvalidHeader {
            path: path.into(),
            reason: format!("zero extent in dims {:?}", header.dims),
        });
    }
    if header.order != INDEX_ORDER {
        return Err(Error::UnsupportedFormat(format!("index order `{}`", header.order)));
    }
    Ok(header)
}

pub fn data_path(header_path: &Path, header: &VolumeHeader) -> PathBuf {
    header_path.parent().unwrap_or(Path::new(".")).join(&header.data)
}

/// Read a volume from its JSON header.
pub fn read_volume(path: &Path) -> Result<Volume3D> {
    let header = read_header(path)?;
    let dtype = parse_dtype(&header.dtype)?;
    let grid = Grid::new(header.dims, header.spacing_um)
        .map_err(|e| Error::InvalidHeader { path: path.into(), reason: e.to_string() })?;
    let raw_path = data_path(path, &header);
    let bytes = fs::read(&raw_path).map_err(|e| Error::io(&raw_path, e))?;
    let expected = grid.len() * dtype.size();
    if bytes.len() != expected {
        return Err(Error::CorruptData {
            path: raw_path,
            reason: format!("expected {expected} bytes, found {}", bytes.len()),
        });
    }
    let values: Vec<f32> = match dtype {
        DType::U8 => bytes.iter().map(|&b| b as f32).collect(),
        DType::U16 => bytes.chunks_exact(2).map(|c| u16::from_le_bytes([c[0], c[1]]) as f32).collect(),
        DType::F32 => bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect(),
    };
    Volume3D::new(grid, values)
}

/// Write `vol` as `<base>.json` + `<base>.raw`. Returns the header path.
///
/// Integer dtypes require every value to be an integer in range.
pub fn write_volume(vol: &Volume3D, base: &Path, dtype: DType) -> Result<PathBuf> {
    write_volume_with(vol, base, dtype, None)
}

pub fn write_volume_with(vol: &Volume3D, base: &Path, dtype: DType, sentinel: Option<f32>) -> Result<PathBuf> {
    let (json_path, raw_path) = volume_paths(base);
    let check = |v: f32, max: f32| -> Result<()> {
        if v.fract() != 0.0 || v < 0.0 || v > max {
            return Err(Error::InvalidParameter(format!("value {v} does not fit dtype {}", dtype_name(dtype))));
        }
        Ok(())
    };
    let mut bytes = Vec::with_capacity(vol.values().len() * dtype.size());
    match dtype {
        DType::U8 => {
            for &v in vol.values() {
                check(v, u8::MAX as f32)?;
                bytes.push(v as u8);
            }
        }
        DType::U16 => {
            for &v in vol.values() {
                check(v, u16::MAX as f32)?;
                bytes.extend_from_slice(&(v as u16).to_le_bytes());
            }
        }
        DType::F32 => {
            for &v in vol.values() {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    let header = VolumeHeader {
        dims: vol.grid().dims(),
        spacing_um: vol.grid().spacing(),
        dtype: dtype_name(dtype).to_string(),
        data: raw_path.file_name().unwrap_or_default().to_string_lossy().into_owned(),
        order: INDEX_ORDER.to_string(),
        sentinel,
    };
    write_atomic(&raw_path, &bytes)?;
    write_atomic(&json_path, &serde_json::to_vec_pretty(&header)?)?;
    Ok(json_path)
}

pub fn read_mask(path: &Path) -> Result<BinaryMask> {
    Ok(BinaryMask::from_volume(&read_volume(path)?))
}

pub fn write_mask(mask: &BinaryMask, base: &Path) -> Result<PathBuf> {
    write_volume(&mask.to_volume(), base, DType::U8)
}

/// Hex SHA-256 of a file's contents.
pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Serialize rows to CSV with a header line.
pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::io(path, e.into_error()))?;
    write_atomic(path, &bytes)
}

pub fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| match e.kind() {
        csv::ErrorKind::Io(_) => Error::io(path, std::io::Error::other(e.to_string())),
        _ => Error::Csv(e),
    })?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}
