//! Dense real fields on regular grids and the FGRD on-disk format.
//!
//! An FGRD file is the 8 ASCII bytes `FGRD0001`, a little-endian `u32` rank,
//! `rank` little-endian `u32` axis lengths, then the values as little-endian
//! IEEE-754 `f64` in row-major order (last axis fastest).

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

pub const FGRD_MAGIC: &[u8; 8] = b"FGRD0001";

/// Semantic label of one axis of a [`Field`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum AxisTag {
    Frame,
    Row,
    Col,
    Space,
    Time,
    Channel,
    Any,
}

/// A real-valued tensor on a regular grid.
///
/// Values are finite and stored row-major; the value count always equals the
/// product of `dims`.
#[derive(Clone, Debug)]
pub struct Field {
    dims: Vec<usize>,
    values: Vec<f64>,
    tags: Vec<AxisTag>,
}

impl PartialEq for Field {
    fn eq(&self, other: &Self) -> bool {
        self.dims == other.dims && self.values == other.values
    }
}

fn check_dims(dims: &[usize]) -> Result<usize> {
    if dims.is_empty() {
        return Err(Error::EmptyDims);
    }
    if dims.iter().any(|&d| d == 0) {
        return Err(Error::InvalidField(format!("zero-length axis in {dims:?}")));
    }
    Ok(dims.iter().product())
}

impl Field {
    pub fn new(dims: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        let len = check_dims(&dims)?;
        if len != values.len() {
            return Err(Error::InvalidField(format!(
                "dims {dims:?} need {len} values, got {}",
                values.len()
            )));
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        let tags = vec![AxisTag::Any; dims.len()];
        Ok(Self { dims, values, tags })
    }

    pub fn zeros(dims: Vec<usize>) -> Result<Self> {
        let len = check_dims(&dims)?;
        Self::new(dims, vec![0.0; len])
    }

    pub fn filled(dims: Vec<usize>, value: f64) -> Result<Self> {
        let len = check_dims(&dims)?;
        Self::new(dims, vec![value; len])
    }

    pub fn from_fn(dims: Vec<usize>, mut f: impl FnMut(&[usize]) -> f64) -> Result<Self> {
        let len = check_dims(&dims)?;
        let mut idx = vec![0usize; dims.len()];
        let mut values = Vec::with_capacity(len);
        for _ in 0..len {
            values.push(f(&idx));
            for axis in (0..dims.len()).rev() {
                idx[axis] += 1;
                if idx[axis] < dims[axis] {
                    break;
                }
                idx[axis] = 0;
            }
        }
        Self::new(dims, values)
    }

    pub fn with_tags(mut self, tags: &[AxisTag]) -> Self {
        assert_eq!(tags.len(), self.dims.len(), "one tag per axis");
        self.tags = tags.to_vec();
        self
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn tags(&self) -> &[AxisTag] {
        &self.tags
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn rank(&self) -> usize {
        self.dims.len()
    }

    /// Row-major flat offset of a multi-index.
    pub fn offset(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.dims.len());
        idx.iter()
            .zip(&self.dims)
            .fold(0, |acc, (&i, &d)| acc * d + i)
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        self.values[self.offset(idx)]
    }

    /// Same dims and tags, new values.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        let mut f = Self::new(self.dims.clone(), values)?;
        f.tags = self.tags.clone();
        Ok(f)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        self.with_values(self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn zip_map(&self, other: &Field, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.ensure_same_dims(other)?;
        self.with_values(
            self.values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        )
    }

    pub fn reshape(&self, dims: Vec<usize>) -> Result<Self> {
        Self::new(dims, self.values.clone())
    }

    pub fn ensure_same_dims(&self, other: &Field) -> Result<()> {
        if self.dims != other.dims {
            return Err(Error::ShapeMismatch {
                expected: self.dims.clone(),
                got: other.dims.clone(),
            });
        }
        Ok(())
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn std(&self) -> f64 {
        let m = self.mean();
        (self.values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / self.values.len() as f64).sqrt()
    }

    pub fn l2_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Slice of the leading axis, e.g. one frame of a `[frame, row, col]` field.
    pub fn frame(&self, index: usize) -> Result<Field> {
        if self.rank() < 2 || index >= self.dims[0] {
            return Err(Error::InvalidArgument(format!(
                "frame {index} out of range for dims {:?}",
                self.dims
            )));
        }
        let size: usize = self.dims[1..].iter().product();
        let mut f = Field::new(
            self.dims[1..].to_vec(),
            self.values[index * size..(index + 1) * size].to_vec(),
        )?;
        f.tags = self.tags[1..].to_vec();
        Ok(f)
    }

    /// Encode to FGRD bytes.
    pub fn to_fgrd_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(12 + 4 * self.dims.len() + 8 * self.values.len());
        out.extend_from_slice(FGRD_MAGIC);
        out.extend_from_slice(&(self.dims.len() as u32).to_le_bytes());
        for &d in &self.dims {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_fgrd_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        if bytes.len() < 8 || &bytes[..8] != FGRD_MAGIC {
            return Err(Error::BadMagic {
                path: path.to_path_buf(),
            });
        }
        let mismatch = |expected: u64| Error::SizeMismatch {
            path: path.to_path_buf(),
            expected,
            found: bytes.len() as u64,
        };
        if bytes.len() < 12 {
            return Err(mismatch(12));
        }
        let rank = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let header = 12 + 4 * rank;
        if bytes.len() < header {
            return Err(mismatch(header as u64));
        }
        let dims: Vec<usize> = (0..rank)
            .map(|a| u32::from_le_bytes(bytes[12 + 4 * a..16 + 4 * a].try_into().unwrap()) as usize)
            .collect();
        let count: u64 = dims.iter().map(|&d| d as u64).product();
        let expected = header as u64 + 8 * count;
        if bytes.len() as u64 != expected {
            return Err(mismatch(expected));
        }
        let values = bytes[header..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Field::new(dims, values)
    }
}

/// Write `field` to `path` in FGRD format (atomically, via a temp file).
pub fn field_write(field: &Field, path: &Path) -> Result<()> {
    // Fields are validated on construction, but guard the writer anyway since
    // the format has no way to represent a rejection.
    if let Some(index) = field.values.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { index });
    }
    write_atomic(path, &field.to_fgrd_bytes())
}

pub fn field_read(path: &Path) -> Result<Field> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Field::from_fgrd_bytes(&bytes, path)
}

/// Write bytes to a sibling temp file, then rename over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    let mut tmp_name = path.file_name().unwrap_or_default().to_os_string();
    tmp_name.push(".tmp");
    let tmp = path.with_file_name(tmp_name);
    {
        let mut file = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        file.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
        file.sync_all().map_err(|e| Error::io(&tmp, e))?;
    }
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}
