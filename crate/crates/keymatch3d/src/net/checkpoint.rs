//! Checkpoint file: magic "KMNP", u32 format version, config echo
//! (d, B, P, stride, t), u32 blob count, then per blob a u32 rank, the
//! dims as u32s, and little-endian f32 values. Parameter blobs come in
//! the fixed [`ModelParams::buffers`] order; a file may carry a second
//! round of shape-identical blobs holding optimizer momentum.

use std::io::Read;
use std::path::Path;

use crate::error::{Error, Result};
use crate::net::model::{ModelParams, NetConfig, CHANNELS, FEATURE_STRIDE};

const MAGIC: &[u8; 4] = b"KMNP";
const VERSION: u32 = 1;

fn blob_shapes(params: &ModelParams) -> Vec<Vec<u32>> {
    let mut shapes = Vec::new();
    for l in params.conv.iter() {
        shapes.push(vec![l.out_c as u32, l.in_c as u32, l.k as u32, l.k as u32]);
        shapes.push(vec![l.out_c as u32]);
    }
    shapes.push(vec![
        params.score.out_c as u32,
        params.score.in_c as u32,
        1,
        1,
    ]);
    shapes.push(vec![params.score.out_c as u32]);
    shapes.push(vec![params.fc.out_dim as u32, params.fc.in_dim as u32]);
    shapes.push(vec![params.fc.out_dim as u32]);
    shapes
}

/// Writes params (and optionally the momentum buffers, in the same order)
/// to `path`. Values are stored as f32.
pub fn save_checkpoint(
    path: &Path,
    params: &ModelParams,
    momentum: Option<&[Vec<f64>]>,
) -> Result<()> {
    let shapes = blob_shapes(params);
    let param_bufs = params.buffers();
    let mut blobs: Vec<(&Vec<u32>, &Vec<f64>)> =
        shapes.iter().zip(param_bufs.iter().copied()).collect();
    if let Some(m) = momentum {
        if m.len() != param_bufs.len() {
            return Err(Error::domain("momentum buffer count mismatch"));
        }
        blobs.extend(shapes.iter().zip(m.iter()));
    }

    let mut out: Vec<u8> = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    for v in [
        params.cfg.descriptor_dim as u32,
        params.cfg.roi_size,
        params.cfg.pool_size,
        FEATURE_STRIDE as u32,
        params.cfg.keypoints_per_image,
    ] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&(blobs.len() as u32).to_le_bytes());
    for (shape, buf) in blobs {
        let count: usize = shape.iter().map(|&d| d as usize).product();
        if count != buf.len() {
            return Err(Error::domain("blob shape does not match buffer length"));
        }
        out.extend_from_slice(&(shape.len() as u32).to_le_bytes());
        for &d in shape {
            out.extend_from_slice(&d.to_le_bytes());
        }
        for &v in buf {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

struct Reader<'a> {
    path: &'a Path,
    buf: Vec<u8>,
    pos: usize,
}

impl<'a> Reader<'a> {
    fn u32(&mut self) -> Result<u32> {
        if self.pos + 4 > self.buf.len() {
            return Err(Error::format(self.path, "truncated file"));
        }
        let v = u32::from_le_bytes(self.buf[self.pos..self.pos + 4].try_into().unwrap());
        self.pos += 4;
        Ok(v)
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f64>> {
        if self.pos + 4 * n > self.buf.len() {
            return Err(Error::format(self.path, "truncated blob"));
        }
        let out = self.buf[self.pos..self.pos + 4 * n]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect();
        self.pos += 4 * n;
        Ok(out)
    }
}

/// Loads a checkpoint. Returns the params and, when present, the momentum
/// buffers in [`ModelParams::buffers`] order.
pub fn load_checkpoint(path: &Path) -> Result<(ModelParams, Option<Vec<Vec<f64>>>)> {
    let mut file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut buf = Vec::new();
    file.read_to_end(&mut buf).map_err(|e| Error::io(path, e))?;
    if buf.len() < 4 || &buf[0..4] != MAGIC {
        return Err(Error::format(path, "bad magic, expected KMNP"));
    }
    let mut r = Reader { path, buf, pos: 4 };
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::format(
            path,
            format!("unsupported version {version}"),
        ));
    }
    let d = r.u32()? as usize;
    let roi_size = r.u32()?;
    let pool_size = r.u32()?;
    let stride = r.u32()? as usize;
    let t = r.u32()?;
    if stride != FEATURE_STRIDE {
        return Err(Error::format(
            path,
            format!("feature stride {stride} unsupported (built for {FEATURE_STRIDE})"),
        ));
    }
    let cfg = NetConfig {
        descriptor_dim: d,
        roi_size,
        pool_size,
        keypoints_per_image: t,
    };
    let mut params = ModelParams::init(cfg, 0);
    let expected_shapes = blob_shapes(&params);
    let n_params = expected_shapes.len();

    let blob_count = r.u32()? as usize;
    if blob_count != n_params && blob_count != 2 * n_params {
        return Err(Error::format(
            path,
            format!("blob count {blob_count}, expected {n_params} or {}", 2 * n_params),
        ));
    }
    let read_blob = |r: &mut Reader, expect: &[u32]| -> Result<Vec<f64>> {
        let rank = r.u32()? as usize;
        if rank != expect.len() {
            return Err(Error::format(path, format!("blob rank {rank} != {}", expect.len())));
        }
        let mut count = 1usize;
        for &e in expect {
            let d = r.u32()?;
            if d != e {
                return Err(Error::format(path, format!("blob dim {d} != expected {e}")));
            }
            count *= d as usize;
        }
        r.f32s(count)
    };

    {
        let bufs = params.buffers_mut();
        for (buf, shape) in bufs.into_iter().zip(&expected_shapes) {
            *buf = read_blob(&mut r, shape)?;
        }
    }
    // backbone channel plan is baked into the binary; dims were verified
    debug_assert_eq!(params.conv[0].in_c, CHANNELS[0]);

    let momentum = if blob_count == 2 * n_params {
        let mut m = Vec::with_capacity(n_params);
        for shape in &expected_shapes {
            m.push(read_blob(&mut r, shape)?);
        }
        Some(m)
    } else {
        None
    };
    if r.pos != r.buf.len() {
        return Err(Error::format(path, "trailing bytes after blobs"));
    }
    Ok((params, momentum))
}
