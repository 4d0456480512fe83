//! Object mask extraction from delta-token attention.

use std::collections::BTreeMap;
use std::sync::Arc;

use ndarray::{Array2, ArrayView2, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hooks::AttentionMap;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MaskPipelineConfig {
    pub k: f64,
    pub c_k: f64,
    pub blur_kernel: usize,
    pub blur_sigma: f64,
    /// Binarisation threshold `t_mask`.
    pub threshold: f64,
    /// Number of steps before `T_i` whose attention is accumulated.
    pub window: usize,
}

impl Default for MaskPipelineConfig {
    fn default() -> Self {
        Self {
            k: 10.0,
            c_k: 0.1,
            blur_kernel: 3,
            blur_sigma: 1.0,
            threshold: 0.8,
            window: 3,
        }
    }
}

impl MaskPipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.k > 0.0 && self.c_k > 0.0) {
            return Err(Error::config(format!("k and c_k must be positive, got {} and {}", self.k, self.c_k)));
        }
        if self.blur_kernel % 2 == 0 {
            return Err(Error::config(format!("blur kernel {} must be odd", self.blur_kernel)));
        }
        if !(self.blur_sigma > 0.0) {
            return Err(Error::config("blur sigma must be positive"));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::config(format!("t_mask {} must lie in (0, 1)", self.threshold)));
        }
        if self.window == 0 {
            return Err(Error::config("accumulation window must cover at least one step"));
        }
        Ok(())
    }
}

/// Accumulated delta-token attention over the latent grid, scaled to `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawMap {
    /// `(frames, height, width)`.
    pub dims: (usize, usize, usize),
    pub values: Vec<f64>,
    /// Set when the map was constant and normalisation produced all zeros.
    pub degenerate: bool,
}

impl RawMap {
    pub fn new(dims: (usize, usize, usize), values: Vec<f64>) -> Result<Self> {
        if values.len() != dims.0 * dims.1 * dims.2 {
            return Err(Error::shape(format!("{} values for map {dims:?}", values.len())));
        }
        Ok(Self {
            dims,
            values,
            degenerate: false,
        })
    }
}

/// Binary object mask over visual tokens, in visual token order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EditMask {
    pub dims: (usize, usize, usize),
    pub mask: Vec<bool>,
    /// The normalised map the mask was extracted from.
    pub raw: Vec<f64>,
    pub layer: Option<usize>,
    pub steps: Vec<usize>,
}

impl EditMask {
    /// Mask with every token set to `value`, not derived from attention.
    pub fn constant(dims: (usize, usize, usize), value: bool) -> Self {
        let n = dims.0 * dims.1 * dims.2;
        Self {
            dims,
            mask: vec![value; n],
            raw: vec![if value { 1.0 } else { 0.0 }; n],
            layer: None,
            steps: vec![],
        }
    }

    pub fn from_bools(dims: (usize, usize, usize), mask: Vec<bool>) -> Result<Self> {
        if mask.len() != dims.0 * dims.1 * dims.2 {
            return Err(Error::shape(format!("{} mask values for {dims:?}", mask.len())));
        }
        let raw = mask.iter().map(|&m| if m { 1.0 } else { 0.0 }).collect();
        Ok(Self {
            dims,
            mask,
            raw,
            layer: None,
            steps: vec![],
        })
    }

    pub fn len(&self) -> usize {
        self.mask.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mask.is_empty()
    }

    pub fn count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    /// No token selected: injection keeps the whole source.
    pub fn is_blank(&self) -> bool {
        self.count() == 0
    }

    /// Per-token weight of the target's own keys/values.
    pub fn weights(&self) -> Arc<Vec<f32>> {
        Arc::new(self.mask.iter().map(|&m| if m { 1.0 } else { 0.0 }).collect())
    }

    pub fn iou(&self, other: &[bool]) -> f64 {
        let inter = self.mask.iter().zip(other).filter(|(a, b)| **a && **b).count();
        let union = self.mask.iter().zip(other).filter(|(a, b)| **a || **b).count();
        if union == 0 {
            1.0
        } else {
            inter as f64 / union as f64
        }
    }
}

/// `y = min(1, ln(k·x + 1) / ln(c_k·k + 1))`.
pub fn rescale_attention(x: f64, k: f64, c_k: f64) -> Result<f64> {
    let denom = (c_k * k + 1.0).ln();
    if !(denom > 0.0) {
        return Err(Error::config(format!("c_k·k + 1 = {} must exceed 1", c_k * k + 1.0)));
    }
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::Domain(format!("attention value {x} outside [0, 1]")));
    }
    Ok(((k * x + 1.0).ln() / denom).min(1.0))
}

/// Normalised 1-D Gaussian taps.
pub fn gaussian_kernel(size: usize, sigma: f64) -> Vec<f64> {
    let r = (size / 2) as f64;
    let taps: Vec<f64> = (0..size)
        .map(|i| {
            let x = i as f64 - r;
            (-x * x / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let sum: f64 = taps.iter().sum();
    taps.into_iter().map(|v| v / sum).collect()
}

/// Mirror index without repeating the edge sample (`-1 → 1`).
fn reflect(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let mut i = i.rem_euclid(period);
    if i >= n as isize {
        i = period - i;
    }
    i as usize
}

/// Separable spatial blur applied to each frame independently.
pub fn blur_frames(values: &[f64], dims: (usize, usize, usize), kernel: &[f64]) -> Vec<f64> {
    let (f, h, w) = dims;
    let r = (kernel.len() / 2) as isize;
    let mut tmp = vec![0.0; values.len()];
    let mut out = vec![0.0; values.len()];
    for t in 0..f {
        let base = t * h * w;
        for y in 0..h {
            for x in 0..w {
                tmp[base + y * w + x] = kernel
                    .iter()
                    .enumerate()
                    .map(|(i, kv)| kv * values[base + y * w + reflect(x as isize + i as isize - r, w)])
                    .sum();
            }
        }
        for y in 0..h {
            for x in 0..w {
                out[base + y * w + x] = kernel
                    .iter()
                    .enumerate()
                    .map(|(i, kv)| kv * tmp[base + reflect(y as isize + i as isize - r, h) * w + x])
                    .sum();
            }
        }
    }
    out
}

/// Min-max scaling to `[0, 1]`; a constant input maps to zeros and is flagged.
pub fn normalize_map(values: &[f64]) -> (Vec<f64>, bool) {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return (vec![0.0; values.len()], true);
    }
    (values.iter().map(|v| (v - lo) / (hi - lo)).collect(), false)
}

/// Sums, over `steps`, the mean attention visual queries pay to the delta
/// tokens at `layer`, then normalises to `[0, 1]`.
pub fn accumulate_delta_attention(
    maps: &BTreeMap<(usize, usize), AttentionMap>,
    layer: usize,
    delta: &[usize],
    steps: &[usize],
    dims: (usize, usize, usize),
) -> Result<RawMap> {
    if delta.is_empty() {
        return Err(Error::NoEdit("no delta tokens to accumulate attention for".into()));
    }
    let vis = dims.0 * dims.1 * dims.2;
    let mut acc = vec![0f64; vis];
    for &step in steps {
        let map = maps.get(&(layer, step)).ok_or_else(|| {
            Error::Missing(format!("no attention capture for layer {layer} at step {step}"))
        })?;
        let (rows, cols) = map.weights.dim();
        if rows != map.text_len + vis || cols != rows {
            return Err(Error::shape(format!(
                "attention map {rows}x{cols} does not hold {} text and {vis} visual tokens",
                map.text_len
            )));
        }
        if let Some(&bad) = delta.iter().find(|&&i| i >= map.text_len) {
            return Err(Error::shape(format!(
                "delta token {bad} beyond text length {}",
                map.text_len
            )));
        }
        for (q, a) in acc.iter_mut().enumerate() {
            let row = map.weights.row(map.text_len + q);
            *a += delta.iter().map(|&i| row[i] as f64).sum::<f64>() / delta.len() as f64;
        }
    }
    let (values, degenerate) = normalize_map(&acc);
    if degenerate {
        log::warn!("delta attention is constant over the grid; the extracted mask will be empty");
    }
    Ok(RawMap {
        dims,
        values,
        degenerate,
    })
}

/// Rescale, blur per frame, and binarise.
pub fn preprocess_mask(raw: &RawMap, config: &MaskPipelineConfig) -> Result<EditMask> {
    config.validate()?;
    let rescaled = raw
        .values
        .iter()
        .map(|&x| rescale_attention(x, config.k, config.c_k))
        .collect::<Result<Vec<_>>>()?;
    let blurred = blur_frames(&rescaled, raw.dims, &gaussian_kernel(config.blur_kernel, config.blur_sigma));
    let mask: Vec<bool> = blurred.iter().map(|&v| v > config.threshold).collect();
    if !mask.iter().any(|&m| m) {
        log::warn!("extracted edit mask is empty; the target will follow the source everywhere");
    }
    Ok(EditMask {
        dims: raw.dims,
        mask,
        raw: raw.values.clone(),
        layer: None,
        steps: vec![],
    })
}

/// `K_mix = M·K_trg + (1−M)·K_src`, and the same for values; `mask` holds
/// one weight per token row.
pub fn mix_kv(
    k_src: ArrayView2<f32>,
    v_src: ArrayView2<f32>,
    k_trg: ArrayView2<f32>,
    v_trg: ArrayView2<f32>,
    mask: &[f32],
) -> Result<(Array2<f32>, Array2<f32>)> {
    let dim = k_src.dim();
    if v_src.dim() != dim || k_trg.dim() != dim || v_trg.dim() != dim {
        return Err(Error::shape(format!(
            "mix_kv shapes {:?} {:?} {:?} {:?}",
            dim,
            v_src.dim(),
            k_trg.dim(),
            v_trg.dim()
        )));
    }
    if mask.len() != dim.0 {
        return Err(Error::shape(format!("mask of {} for {} tokens", mask.len(), dim.0)));
    }
    let mix = |src: ArrayView2<f32>, trg: ArrayView2<f32>| {
        let mut out = src.to_owned();
        for ((mut row, t), &m) in out.rows_mut().into_iter().zip(trg.rows()).zip(mask) {
            if m == 1.0 {
                row.assign(&t);
            } else if m != 0.0 {
                Zip::from(&mut row).and(&t).for_each(|o, &t| *o = m * t + (1.0 - m) * *o);
            }
        }
        out
    };
    Ok((mix(k_src, k_trg), mix(v_src, v_trg)))
}
