//! Axis-partitioned 3D rotary position embedding for visual tokens.
//!
//! The head dimension is split into rotation pairs, and the pairs are divided
//! between the frame, height and width axes as evenly as possible. Leftover
//! pairs go to the frame axis. Pair `(2i, 2i+1)` of a head is rotated by
//! `pos_axis * base^(-j / pairs_axis)`, where `j` is the pair's index inside
//! its axis segment.

use ndarray::{Array2, Array3, ArrayView3, ArrayViewMut2, Axis};

use crate::config::Position;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Rope {
    head_dim: usize,
    /// (axis, frequency) for each rotation pair, in pair order.
    pairs: Vec<(usize, f32)>,
}

/// Precomputed cos/sin per (token, pair).
#[derive(Debug, Clone)]
pub struct RopeTable {
    pub cos: Array2<f32>,
    pub sin: Array2<f32>,
}

impl Rope {
    pub fn new(head_dim: usize, base: f32) -> Result<Self> {
        if head_dim == 0 || head_dim % 2 != 0 {
            return Err(Error::config(format!(
                "rotary embedding needs a positive even head_dim, got {head_dim}"
            )));
        }
        let (f, h, w) = Self::axis_pairs(head_dim);
        let mut pairs = Vec::with_capacity(head_dim / 2);
        for (axis, n) in [(0usize, f), (1, h), (2, w)] {
            for j in 0..n {
                let freq = base.powf(-(j as f32) / n as f32);
                pairs.push((axis, freq));
            }
        }
        Ok(Self { head_dim, pairs })
    }

    /// Number of rotation pairs given to the (frame, height, width) axes.
    pub fn axis_pairs(head_dim: usize) -> (usize, usize, usize) {
        let pairs = head_dim / 2;
        let base = pairs / 3;
        (base + pairs % 3, base, base)
    }

    pub fn head_dim(&self) -> usize {
        self.head_dim
    }

    pub fn table(&self, positions: &[Position]) -> RopeTable {
        let n = self.pairs.len();
        let mut cos = Array2::zeros((positions.len(), n));
        let mut sin = Array2::zeros((positions.len(), n));
        for (i, p) in positions.iter().enumerate() {
            let coords = [p.t as f32, p.h as f32, p.w as f32];
            for (j, &(axis, freq)) in self.pairs.iter().enumerate() {
                let angle = coords[axis] * freq;
                cos[[i, j]] = angle.cos();
                sin[[i, j]] = angle.sin();
            }
        }
        RopeTable { cos, sin }
    }

    /// Rotate a `[tokens × heads × head_dim]` tensor.
    pub fn apply(&self, x: ArrayView3<f32>, positions: &[Position]) -> Result<Array3<f32>> {
        let (tokens, heads, dim) = x.dim();
        if dim != self.head_dim {
            return Err(Error::shape(format!(
                "rope expects head_dim {}, got {dim}",
                self.head_dim
            )));
        }
        if positions.len() != tokens {
            return Err(Error::shape(format!(
                "{} positions for {tokens} tokens",
                positions.len()
            )));
        }
        let table = self.table(positions);
        let mut flat = x
            .to_owned()
            .into_shape_with_order((tokens, heads * dim))
            .map_err(|e| Error::shape(e.to_string()))?;
        self.apply_rows(flat.view_mut(), heads, &table);
        flat.into_shape_with_order((tokens, heads, dim))
            .map_err(|e| Error::shape(e.to_string()))
    }

    /// In-place rotation of rows laid out as `heads` consecutive head vectors.
    pub(crate) fn apply_rows(&self, mut rows: ArrayViewMut2<f32>, heads: usize, table: &RopeTable) {
        debug_assert_eq!(rows.ncols(), heads * self.head_dim);
        for (mut row, (cos, sin)) in rows
            .axis_iter_mut(Axis(0))
            .zip(table.cos.outer_iter().zip(table.sin.outer_iter()))
        {
            let row = row.as_slice_mut().expect("standard layout");
            for head in row.chunks_exact_mut(self.head_dim).take(heads) {
                for (j, pair) in head.chunks_exact_mut(2).enumerate() {
                    let (c, s) = (cos[j], sin[j]);
                    let (a, b) = (pair[0], pair[1]);
                    pair[0] = a * c - b * s;
                    pair[1] = a * s + b * c;
                }
            }
        }
    }
}
