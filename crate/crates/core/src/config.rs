//! Model dimensions and the latent grid.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Size of the visual latent grid: frames × height × width, plus channels per cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LatentGrid {
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

impl LatentGrid {
    pub fn new(frames: usize, height: usize, width: usize, channels: usize) -> Self {
        Self {
            frames,
            height,
            width,
            channels,
        }
    }

    /// Number of visual tokens (one per latent cell).
    pub fn cells(&self) -> usize {
        self.frames * self.height * self.width
    }

    pub fn len(&self) -> usize {
        self.cells() * self.channels
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Row-major (frame, height, width) index of a cell.
    pub fn cell_index(&self, t: usize, h: usize, w: usize) -> usize {
        (t * self.height + h) * self.width + w
    }

    /// Positions in canonical token order.
    pub fn positions(&self) -> Vec<Position> {
        let mut out = Vec::with_capacity(self.cells());
        for t in 0..self.frames {
            for h in 0..self.height {
                for w in 0..self.width {
                    out.push(Position { t, h, w });
                }
            }
        }
        out
    }
}

/// Spatio-temporal position of a visual token.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Position {
    pub t: usize,
    pub h: usize,
    pub w: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub num_layers: usize,
    pub num_heads: usize,
    pub head_dim: usize,
    pub text_len: usize,
    pub latent_frames: usize,
    pub latent_height: usize,
    pub latent_width: usize,
    /// Latent channels per grid cell.
    pub channel_dim: usize,
    pub init_seed: u64,
    /// Base of the rotary frequency ladder.
    pub rope_base: f32,
    /// Layers built without rotary embeddings (content-only attention).
    pub planted_rope_free: BTreeSet<usize>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            num_layers: 8,
            num_heads: 4,
            head_dim: 16,
            text_len: 16,
            latent_frames: 5,
            latent_height: 8,
            latent_width: 8,
            channel_dim: 4,
            init_seed: 0,
            rope_base: 10_000.0,
            planted_rope_free: BTreeSet::new(),
        }
    }
}

impl ModelConfig {
    pub fn model_dim(&self) -> usize {
        self.num_heads * self.head_dim
    }

    pub fn grid(&self) -> LatentGrid {
        LatentGrid::new(
            self.latent_frames,
            self.latent_height,
            self.latent_width,
            self.channel_dim,
        )
    }

    pub fn visual_len(&self) -> usize {
        self.grid().cells()
    }

    pub fn total_tokens(&self) -> usize {
        self.text_len + self.visual_len()
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("num_layers", self.num_layers),
            ("num_heads", self.num_heads),
            ("head_dim", self.head_dim),
            ("text_len", self.text_len),
            ("latent_frames", self.latent_frames),
            ("latent_height", self.latent_height),
            ("latent_width", self.latent_width),
            ("channel_dim", self.channel_dim),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::config(format!("{name} must be positive")));
            }
        }
        if self.head_dim % 2 != 0 {
            return Err(Error::config(format!(
                "head_dim must be even for rotary embeddings, got {}",
                self.head_dim
            )));
        }
        if !(self.rope_base.is_finite() && self.rope_base > 1.0) {
            return Err(Error::config(format!(
                "rope_base must be finite and > 1, got {}",
                self.rope_base
            )));
        }
        if let Some(&l) = self.planted_rope_free.iter().find(|&&l| l >= self.num_layers) {
            return Err(Error::config(format!(
                "planted RoPE-free layer {l} out of range for {} layers",
                self.num_layers
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid_and_sized() {
        let c = ModelConfig::default();
        c.validate().unwrap();
        assert_eq!(c.model_dim(), 64);
        assert_eq!(c.total_tokens(), 16 + 5 * 8 * 8);
    }

    #[test]
    fn odd_head_dim_rejected() {
        let c = ModelConfig {
            head_dim: 15,
            ..Default::default()
        };
        assert!(matches!(c.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn positions_are_row_major_and_unique() {
        let g = LatentGrid::new(2, 3, 4, 1);
        let p = g.positions();
        assert_eq!(p.len(), 24);
        for (i, pos) in p.iter().enumerate() {
            assert_eq!(g.cell_index(pos.t, pos.h, pos.w), i);
        }
        let set: BTreeSet<_> = p.iter().collect();
        assert_eq!(set.len(), 24);
    }
}
