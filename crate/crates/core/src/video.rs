//! Latent and pixel video containers.

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::config::LatentGrid;
use crate::error::{Error, Result};

/// Visual latents, row-major `[frames, height, width, channels]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentVideo {
    grid: LatentGrid,
    data: Vec<f32>,
}

impl LatentVideo {
    pub fn new(grid: LatentGrid, data: Vec<f32>) -> Result<Self> {
        if data.len() != grid.len() {
            return Err(Error::shape(format!(
                "latent grid {:?} needs {} values, got {}",
                grid,
                grid.len(),
                data.len()
            )));
        }
        Ok(Self { grid, data })
    }

    pub fn zeros(grid: LatentGrid) -> Self {
        Self {
            grid,
            data: vec![0.0; grid.len()],
        }
    }

    pub fn grid(&self) -> LatentGrid {
        self.grid
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    /// `[cells × channels]` view in token order.
    pub fn tokens(&self) -> ArrayView2<'_, f32> {
        ArrayView2::from_shape((self.grid.cells(), self.grid.channels), &self.data)
            .expect("grid-sized buffer")
    }

    pub fn from_tokens(grid: LatentGrid, tokens: Array2<f32>) -> Result<Self> {
        if tokens.dim() != (grid.cells(), grid.channels) {
            return Err(Error::shape(format!(
                "token matrix {:?} does not match grid {:?}",
                tokens.dim(),
                grid
            )));
        }
        let data = if tokens.is_standard_layout() {
            tokens.into_raw_vec_and_offset().0
        } else {
            tokens.iter().copied().collect()
        };
        Self::new(grid, data)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn l2_distance(&self, other: &LatentVideo) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| ((*a - *b) as f64).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    pub fn norm(&self) -> f64 {
        self.data
            .iter()
            .map(|v| (*v as f64).powi(2))
            .sum::<f64>()
            .sqrt()
    }
}

/// RGB frames with values in `[0, 1]`, row-major `[frames, height, width, 3]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Video {
    frames: usize,
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl Video {
    pub fn new(frames: usize, height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != frames * height * width * 3 {
            return Err(Error::shape(format!(
                "video {frames}x{height}x{width}x3 needs {} values, got {}",
                frames * height * width * 3,
                data.len()
            )));
        }
        Ok(Self {
            frames,
            height,
            width,
            data,
        })
    }

    pub fn filled(frames: usize, height: usize, width: usize, rgb: [f32; 3]) -> Self {
        let mut data = Vec::with_capacity(frames * height * width * 3);
        for _ in 0..frames * height * width {
            data.extend_from_slice(&rgb);
        }
        Self {
            frames,
            height,
            width,
            data,
        }
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.frames, self.height, self.width)
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn frame_len(&self) -> usize {
        self.height * self.width * 3
    }

    pub fn frame(&self, f: usize) -> &[f32] {
        let n = self.frame_len();
        &self.data[f * n..(f + 1) * n]
    }

    pub fn frame_mut(&mut self, f: usize) -> &mut [f32] {
        let n = self.frame_len();
        &mut self.data[f * n..(f + 1) * n]
    }

    pub fn pixel(&self, f: usize, y: usize, x: usize) -> [f32; 3] {
        let i = ((f * self.height + y) * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn set_pixel(&mut self, f: usize, y: usize, x: usize, rgb: [f32; 3]) {
        let i = ((f * self.height + y) * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    /// Per-pixel Rec. 601 luma of one frame.
    pub fn luminance(&self, f: usize) -> Vec<f32> {
        self.frame(f)
            .chunks_exact(3)
            .map(|p| 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2])
            .collect()
    }

    pub fn same_shape(&self, other: &Video) -> bool {
        self.dims() == other.dims()
    }
}
