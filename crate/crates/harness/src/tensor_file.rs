//! Little-endian binary tensor container.
//!
//! ```text
//! offset 0   magic "LKVT"
//!        4   format version, u16
//!        6   dtype code, u8 (0 = float32)
//!        7   ndim, u8
//!        8   dims, u32 × ndim
//!        8+4n payload, row-major values
//! ```

use std::path::Path;

use layerkv::{LatentGrid, LatentVideo, Video};

use crate::error::{FormatError, HarnessError, Result};

pub const MAGIC: &[u8; 4] = b"LKVT";
pub const VERSION: u16 = 1;
pub const DTYPE_F32: u8 = 0;
const HEADER: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub dims: Vec<usize>,
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn new(dims: Vec<usize>, data: Vec<f32>) -> std::result::Result<Self, FormatError> {
        let n = element_count(&dims).ok_or_else(|| FormatError {
            offset: HEADER,
            message: format!("dims {dims:?} overflow"),
        })?;
        if n != data.len() {
            return Err(FormatError {
                offset: 0,
                message: format!("dims {dims:?} need {n} values, got {}", data.len()),
            });
        }
        Ok(Self { dims, data })
    }

    pub fn from_video(video: &Video) -> Self {
        let (f, h, w) = video.dims();
        Self {
            dims: vec![f, h, w, 3],
            data: video.data().to_vec(),
        }
    }

    pub fn from_latent(latent: &LatentVideo) -> Self {
        let g = latent.grid();
        Self {
            dims: vec![g.frames, g.height, g.width, g.channels],
            data: latent.data().to_vec(),
        }
    }

    pub fn into_video(self) -> layerkv::Result<Video> {
        match self.dims[..] {
            [f, h, w, 3] => Video::new(f, h, w, self.data),
            _ => Err(layerkv::Error::shape(format!("tensor {:?} is not a [F, H, W, 3] video", self.dims))),
        }
    }

    pub fn into_latent(self) -> layerkv::Result<LatentVideo> {
        match self.dims[..] {
            [f, h, w, c] => LatentVideo::new(LatentGrid::new(f, h, w, c), self.data),
            _ => Err(layerkv::Error::shape(format!("tensor {:?} is not a latent grid", self.dims))),
        }
    }
}

fn element_count(dims: &[usize]) -> Option<usize> {
    dims.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d))
}

pub fn encode(t: &Tensor) -> std::result::Result<Vec<u8>, FormatError> {
    if t.dims.len() > u8::MAX as usize {
        return Err(FormatError {
            offset: 7,
            message: format!("{} dims exceed the u8 limit", t.dims.len()),
        });
    }
    let mut out = Vec::with_capacity(HEADER + 4 * t.dims.len() + 4 * t.data.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(DTYPE_F32);
    out.push(t.dims.len() as u8);
    for (i, &d) in t.dims.iter().enumerate() {
        let d = u32::try_from(d).map_err(|_| FormatError {
            offset: HEADER + 4 * i,
            message: format!("dim {d} exceeds u32"),
        })?;
        out.extend_from_slice(&d.to_le_bytes());
    }
    for v in &t.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn decode(bytes: &[u8]) -> std::result::Result<Tensor, FormatError> {
    let err = |offset: usize, message: String| FormatError { offset, message };
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(err(0, "bad magic, expected \"LKVT\"".into()));
    }
    if bytes.len() < HEADER {
        return Err(err(bytes.len(), format!("header truncated after {} bytes", bytes.len())));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != VERSION {
        return Err(err(4, format!("unsupported version {version}")));
    }
    if bytes[6] != DTYPE_F32 {
        return Err(err(6, format!("unsupported dtype code {}", bytes[6])));
    }
    let ndim = bytes[7] as usize;
    let payload_at = HEADER + 4 * ndim;
    if bytes.len() < payload_at {
        return Err(err(bytes.len(), format!("dims truncated: need {payload_at} header bytes")));
    }
    let dims: Vec<usize> = bytes[HEADER..payload_at]
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]) as usize)
        .collect();
    let n = element_count(&dims)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| err(HEADER, format!("dims {dims:?} overflow")))?;
    let payload = &bytes[payload_at..];
    if payload.len() != n {
        let at = payload_at + payload.len().min(n);
        return Err(err(
            at,
            format!("payload has {} bytes, dims {dims:?} need {n}", payload.len()),
        ));
    }
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Ok(Tensor { dims, data })
}

pub fn write(path: &Path, t: &Tensor) -> Result<()> {
    let bytes = encode(t).map_err(|e| HarnessError::format(path, e))?;
    crate::fsutil::write_bytes(path, &bytes)
}

pub fn read(path: &Path) -> Result<Tensor> {
    let bytes = std::fs::read(path).map_err(|e| HarnessError::io(path, e))?;
    decode(&bytes).map_err(|e| HarnessError::format(path, e))
}
