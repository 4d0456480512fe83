//! Toy latent↔pixel codec.
//!
//! Each latent cell maps to a `temporal × patch × patch × 3` pixel block
//! through a seeded matrix with orthonormal columns, so `encode ∘ decode` is
//! the identity on latents whose pixels stay inside `[0, 1]`. The default
//! scale guarantees that for every latent with components in `[-1, 1]`.

use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::config::LatentGrid;
use crate::error::{Error, Result};
use crate::video::{LatentVideo, Video};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DecoderConfig {
    /// Spatial patch edge in pixels.
    pub patch: usize,
    /// Pixel frames per latent frame.
    pub temporal: usize,
    pub seed: u64,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        Self {
            patch: 4,
            temporal: 1,
            seed: 0x5eed_dec0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Decoder {
    grid: LatentGrid,
    config: DecoderConfig,
    /// `[block_len × channels]`, orthonormal columns.
    basis: Array2<f32>,
    scale: f32,
}

impl Decoder {
    pub fn new(grid: LatentGrid, config: DecoderConfig) -> Result<Self> {
        if config.patch == 0 || config.temporal == 0 {
            return Err(Error::config("decoder patch and temporal factor must be positive"));
        }
        let block = config.temporal * config.patch * config.patch * 3;
        let c = grid.channels;
        if block < c {
            return Err(Error::config(format!(
                "decoder block of {block} pixels cannot hold {c} latent channels"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let raw: Vec<f64> = (0..block * c).map(|_| StandardNormal.sample(&mut rng)).collect();
        let basis = orthonormal_columns(raw, block, c);
        Ok(Self {
            grid,
            config,
            basis,
            scale: 0.5 / (c as f32).sqrt(),
        })
    }

    pub fn grid(&self) -> LatentGrid {
        self.grid
    }

    pub fn config(&self) -> DecoderConfig {
        self.config
    }

    /// `(frames, height, width)` of decoded videos.
    pub fn video_dims(&self) -> (usize, usize, usize) {
        (
            self.grid.frames * self.config.temporal,
            self.grid.height * self.config.patch,
            self.grid.width * self.config.patch,
        )
    }

    fn block_offsets(&self, t: usize, h: usize, w: usize) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        let (p, tf) = (self.config.patch, self.config.temporal);
        (0..tf).flat_map(move |dt| {
            (0..p).flat_map(move |dy| (0..p).map(move |dx| (t * tf + dt, h * p + dy, w * p + dx)))
        })
    }

    pub fn decode(&self, latents: &LatentVideo) -> Result<Video> {
        if latents.grid() != self.grid {
            return Err(Error::shape(format!(
                "decoder expects grid {:?}, got {:?}",
                self.grid,
                latents.grid()
            )));
        }
        let (f, hh, ww) = self.video_dims();
        let mut video = Video::filled(f, hh, ww, [0.0; 3]);
        let tokens = latents.tokens();
        for pos in self.grid.positions() {
            let cell = self.grid.cell_index(pos.t, pos.h, pos.w);
            let block: Array1<f32> = self.basis.dot(&tokens.row(cell));
            let mut vals = block.iter();
            for (ft, y, x) in self.block_offsets(pos.t, pos.h, pos.w) {
                let mut rgb = [0f32; 3];
                for c in &mut rgb {
                    *c = (0.5 + self.scale * vals.next().expect("block sized")).clamp(0.0, 1.0);
                }
                video.set_pixel(ft, y, x, rgb);
            }
        }
        Ok(video)
    }

    /// Least-squares inverse of [`decode`](Self::decode).
    pub fn encode(&self, video: &Video) -> Result<LatentVideo> {
        if video.dims() != self.video_dims() {
            return Err(Error::shape(format!(
                "encoder expects video {:?}, got {:?}",
                self.video_dims(),
                video.dims()
            )));
        }
        let block_len = self.basis.nrows();
        let mut tokens = Array2::zeros((self.grid.cells(), self.grid.channels));
        let mut block = Array1::<f32>::zeros(block_len);
        for pos in self.grid.positions() {
            let mut i = 0;
            for (ft, y, x) in self.block_offsets(pos.t, pos.h, pos.w) {
                for c in video.pixel(ft, y, x) {
                    block[i] = (c - 0.5) / self.scale;
                    i += 1;
                }
            }
            let cell = self.grid.cell_index(pos.t, pos.h, pos.w);
            tokens.row_mut(cell).assign(&self.basis.t().dot(&block));
        }
        LatentVideo::from_tokens(self.grid, tokens)
    }
}

/// Modified Gram-Schmidt on the columns of a row-major `rows × cols` matrix.
fn orthonormal_columns(mut m: Vec<f64>, rows: usize, cols: usize) -> Array2<f32> {
    let at = |r: usize, c: usize| r * cols + c;
    for c in 0..cols {
        for prev in 0..c {
            let dot: f64 = (0..rows).map(|r| m[at(r, c)] * m[at(r, prev)]).sum();
            for r in 0..rows {
                m[at(r, c)] -= dot * m[at(r, prev)];
            }
        }
        let norm = (0..rows).map(|r| m[at(r, c)].powi(2)).sum::<f64>().sqrt();
        for r in 0..rows {
            m[at(r, c)] /= norm;
        }
    }
    Array2::from_shape_vec((rows, cols), m.into_iter().map(|v| v as f32).collect())
        .expect("rows*cols values")
}
