//! PNG frame dumps.

use std::path::{Path, PathBuf};

use image::{ImageFormat, RgbImage};
use layerkv::Video;

use crate::error::{HarnessError, Result};

/// `0000.png`, `0001.png`, ...
pub fn frame_name(index: usize) -> String {
    format!("{index:04}.png")
}

fn to_u8(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn frame_image(video: &Video, f: usize) -> RgbImage {
    let (_, h, w) = video.dims();
    let raw: Vec<u8> = video.frame(f).iter().map(|&v| to_u8(v)).collect();
    RgbImage::from_raw(w as u32, h as u32, raw).expect("frame buffer matches dims")
}

pub fn save_png(img: &RgbImage, path: &Path) -> Result<()> {
    let mut buf = std::io::Cursor::new(Vec::new());
    img.write_to(&mut buf, ImageFormat::Png)
        .map_err(|e| HarnessError::io(path, std::io::Error::other(e)))?;
    crate::fsutil::write_bytes(path, buf.get_ref())
}

/// Writes every frame into `dir` and returns the paths in frame order.
pub fn dump_frames(video: &Video, dir: &Path) -> Result<Vec<PathBuf>> {
    (0..video.frames())
        .map(|f| {
            let path = dir.join(frame_name(f));
            save_png(&frame_image(video, f), &path)?;
            Ok(path)
        })
        .collect()
}
