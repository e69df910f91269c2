//! Dense real-valued grids and the CEO1 container.
//!
//! CEO1 layout: the four magic bytes `CEO1`, then `rows` and `cols` as
//! little-endian `u32`, then `rows * cols` little-endian `f32` values in
//! row-major order. Metadata (units, optical constants, type tags) lives in a
//! sidecar text file next to the grid, `<path>.meta`, as `key=value` lines.

use std::collections::BTreeMap;
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

pub const CEO1_MAGIC: &[u8; 4] = b"CEO1";

#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Image {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Image {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Image {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::InvalidInput(format!(
                "{} values cannot fill a {rows}x{cols} grid",
                data.len()
            )));
        }
        Ok(Image { rows, cols, data })
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn sum(&self) -> f64 {
        crate::reduce::pairwise_sum(&self.data)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Index of the largest value as (row, col).
    pub fn argmax(&self) -> (usize, usize) {
        let mut best = 0;
        for (i, v) in self.data.iter().enumerate() {
            if *v > self.data[best] {
                best = i;
            }
        }
        (best / self.cols, best % self.cols)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Image {
        Image {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn scaled(&self, k: f64) -> Image {
        self.map(|v| v * k)
    }

    pub fn check_same_shape(&self, other: &Image) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::ShapeMismatch {
                expected: self.shape(),
                got: other.shape(),
            });
        }
        Ok(())
    }

    /// Cyclic translation: output(r, c) = input(r - dr, c - dc).
    pub fn roll(&self, dr: isize, dc: isize) -> Image {
        let mut out = Image::zeros(self.rows, self.cols);
        let (rows, cols) = (self.rows as isize, self.cols as isize);
        for r in 0..self.rows {
            let rr = (r as isize + dr).rem_euclid(rows) as usize;
            for c in 0..self.cols {
                let cc = (c as isize + dc).rem_euclid(cols) as usize;
                out.data[rr * self.cols + cc] = self.data[r * self.cols + c];
            }
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn write_ceo1(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut buf = Vec::with_capacity(12 + 4 * self.data.len());
        buf.extend_from_slice(CEO1_MAGIC);
        buf.extend_from_slice(&(self.rows as u32).to_le_bytes());
        buf.extend_from_slice(&(self.cols as u32).to_le_bytes());
        for v in &self.data {
            buf.extend_from_slice(&(*v as f32).to_le_bytes());
        }
        let mut f = fs::File::create(path.as_ref())?;
        f.write_all(&buf)?;
        Ok(())
    }

    pub fn read_ceo1(path: impl AsRef<Path>) -> Result<Image> {
        let path = path.as_ref();
        let mut bytes = Vec::new();
        fs::File::open(path)?.read_to_end(&mut bytes)?;
        Self::decode_ceo1(&bytes).map_err(|reason| Error::Format {
            path: path.to_path_buf(),
            reason,
        })
    }

    pub fn decode_ceo1(bytes: &[u8]) -> std::result::Result<Image, String> {
        if bytes.len() < 12 {
            return Err("truncated header".into());
        }
        if &bytes[..4] != CEO1_MAGIC {
            return Err("missing CEO1 magic".into());
        }
        let rows = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        let cols = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let body = &bytes[12..];
        if body.len() != rows * cols * 4 {
            return Err(format!(
                "expected {} payload bytes for {rows}x{cols}, found {}",
                rows * cols * 4,
                body.len()
            ));
        }
        let data = body
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect();
        Ok(Image { rows, cols, data })
    }
}

/// `key=value` metadata stored next to a CEO1 grid.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Meta(pub BTreeMap<String, String>);

impl Meta {
    pub fn new() -> Self {
        Meta::default()
    }

    pub fn with(mut self, key: &str, value: impl ToString) -> Self {
        self.0.insert(key.to_string(), value.to_string());
        self
    }

    pub fn insert(&mut self, key: &str, value: impl ToString) {
        self.0.insert(key.to_string(), value.to_string());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(String::as_str)
    }

    pub fn sidecar_path(grid_path: &Path) -> PathBuf {
        let mut s = grid_path.as_os_str().to_owned();
        s.push(".meta");
        PathBuf::from(s)
    }

    pub fn write(&self, grid_path: &Path) -> Result<()> {
        let mut text = String::new();
        for (k, v) in &self.0 {
            text.push_str(k);
            text.push('=');
            text.push_str(v);
            text.push('\n');
        }
        fs::write(Self::sidecar_path(grid_path), text)?;
        Ok(())
    }

    /// Reads the sidecar of `grid_path`; a missing sidecar yields empty metadata.
    pub fn read(grid_path: &Path) -> Result<Meta> {
        let path = Self::sidecar_path(grid_path);
        if !path.exists() {
            return Ok(Meta::default());
        }
        Self::parse(&fs::read_to_string(&path)?).map_err(|reason| Error::Format { path, reason })
    }

    pub fn parse(text: &str) -> std::result::Result<Meta, String> {
        let mut map = BTreeMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| format!("line {}: expected key=value", lineno + 1))?;
            map.insert(k.trim().to_string(), v.trim().to_string());
        }
        Ok(Meta(map))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_layout_is_bit_exact() {
        let img = Image::from_vec(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, -0.5]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.ceo1");
        img.write_ceo1(&p).unwrap();
        let bytes = fs::read(&p).unwrap();
        assert_eq!(&bytes[..4], b"CEO1");
        assert_eq!(&bytes[4..8], &2u32.to_le_bytes());
        assert_eq!(&bytes[8..12], &3u32.to_le_bytes());
        assert_eq!(&bytes[12..16], &1.0f32.to_le_bytes());
        assert_eq!(&bytes[32..36], &(-0.5f32).to_le_bytes());
        assert_eq!(bytes.len(), 12 + 6 * 4);
    }

    #[test]
    fn rejects_bad_magic_and_truncation() {
        assert!(Image::decode_ceo1(b"CEO2\0\0\0\0\0\0\0\0").is_err());
        let mut ok = b"CEO1".to_vec();
        ok.extend_from_slice(&1u32.to_le_bytes());
        ok.extend_from_slice(&2u32.to_le_bytes());
        ok.extend_from_slice(&1.0f32.to_le_bytes());
        assert!(Image::decode_ceo1(&ok).is_err());
    }

    #[test]
    fn meta_sidecar_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.ceo1");
        let meta = Meta::new().with("units", "rad").with("na", 1.4);
        meta.write(&p).unwrap();
        assert_eq!(Meta::read(&p).unwrap(), meta);
        assert!(Meta::parse("novalue").is_err());
    }

    #[test]
    fn roll_is_cyclic() {
        let img = Image::from_vec(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let r = img.roll(0, 1);
        assert_eq!(r.data, vec![2.0, 1.0, 4.0, 3.0]);
        assert_eq!(img.roll(-3, 5), img.roll(1, 1));
    }

    proptest! {
        #[test]
        fn ceo1_roundtrip_is_f32_exact(rows in 1usize..6, cols in 1usize..6, seed in any::<u64>()) {
            let data: Vec<f64> = (0..rows * cols)
                .map(|i| ((seed.wrapping_mul(i as u64 + 1) % 10007) as f32 / 7.0) as f64)
                .collect();
            let img = Image::from_vec(rows, cols, data).unwrap();
            let dir = tempfile::tempdir().unwrap();
            let p = dir.path().join("x.ceo1");
            img.write_ceo1(&p).unwrap();
            prop_assert_eq!(Image::read_ceo1(&p).unwrap(), img);
        }
    }
}
