use std::io::Read;
use std::path::Path;

use crate::error::{Error, Result};

const DEPTH_MAGIC: &[u8; 4] = b"DPTH";

/// Raster of metric depths, row-major. 0 marks an invalid pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthImage {
    pub width: u32,
    pub height: u32,
    pub data: Vec<f32>,
}

impl DepthImage {
    pub fn new(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            data: vec![0.0; (width * height) as usize],
        }
    }

    pub fn from_data(width: u32, height: u32, data: Vec<f32>) -> Result<Self> {
        if data.len() != (width * height) as usize {
            return Err(Error::domain(format!(
                "depth data length {} != {}x{}",
                data.len(),
                width,
                height
            )));
        }
        if data.iter().any(|d| !d.is_finite() || *d < 0.0) {
            return Err(Error::domain("depth values must be finite and >= 0"));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    #[inline]
    pub fn at(&self, x: u32, y: u32) -> f32 {
        self.data[(y * self.width + x) as usize]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, d: f32) {
        self.data[(y * self.width + x) as usize] = d;
    }

    #[inline]
    pub fn is_valid(&self, x: u32, y: u32) -> bool {
        self.at(x, y) > 0.0
    }

    pub fn valid_count(&self) -> usize {
        self.data.iter().filter(|d| **d > 0.0).count()
    }

    /// Writes the bit-exact raster format: "DPTH", LE u32 width, LE u32
    /// height, then width*height LE f32 depths in meters, row-major.
    pub fn write(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::with_capacity(12 + self.data.len() * 4);
        buf.extend_from_slice(DEPTH_MAGIC);
        buf.extend_from_slice(&self.width.to_le_bytes());
        buf.extend_from_slice(&self.height.to_le_bytes());
        for d in &self.data {
            buf.extend_from_slice(&d.to_le_bytes());
        }
        std::fs::write(path, buf).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let mut file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut header = [0u8; 12];
        file.read_exact(&mut header).map_err(|e| Error::io(path, e))?;
        if &header[0..4] != DEPTH_MAGIC {
            return Err(Error::format(path, "bad magic, expected DPTH"));
        }
        let width = u32::from_le_bytes(header[4..8].try_into().unwrap());
        let height = u32::from_le_bytes(header[8..12].try_into().unwrap());
        let n = (width as usize) * (height as usize);
        let mut raw = vec![0u8; n * 4];
        file.read_exact(&mut raw).map_err(|e| Error::io(path, e))?;
        let data: Vec<f32> = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Self::from_data(width, height, data)
            .map_err(|e| Error::format(path, e.to_string()))
    }
}

/// Normalized network input: a single [0,1] channel replicated three times.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkInput {
    pub width: u32,
    pub height: u32,
    /// One channel; consumers replicate it x3 (channels are bit-identical
    /// by construction, so only one copy is stored).
    pub channel: Vec<f64>,
}

impl NetworkInput {
    /// Maps valid depths through clamp((d - d_min)/(d_max - d_min), 0, 1);
    /// invalid pixels map to 0.
    pub fn normalize_depth(depth: &DepthImage, d_min: f64, d_max: f64) -> Result<Self> {
        if d_max <= d_min {
            return Err(Error::domain(format!(
                "d_max ({d_max}) must exceed d_min ({d_min})"
            )));
        }
        let span = d_max - d_min;
        let channel = depth
            .data
            .iter()
            .map(|&d| {
                if d > 0.0 {
                    ((d as f64 - d_min) / span).clamp(0.0, 1.0)
                } else {
                    0.0
                }
            })
            .collect();
        Ok(Self {
            width: depth.width,
            height: depth.height,
            channel,
        })
    }
}
