//! Foreground/background sensitivity of each layer to RoPE removal.
//!
//! Probe videos from the RoPE sweep are compared with their originals inside
//! and outside the foreground. A prominent layer changes the foreground while
//! leaving the background intact.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::video::Video;

/// PSNR reported for regions with zero error.
pub const PSNR_CAP_DB: f64 = 100.0;
/// Default sharpness constant of the similarity mapping.
pub const DEFAULT_C: f64 = 400.0;
/// Prominent layer of the 42-layer backbone.
pub const BACKBONE_PROMINENT_LAYER: usize = 11;
/// Prominent layer of the default toy model, frozen from a measured probe
/// (10 prompts, T = 25, luminance-threshold masks). It lies in the vital set.
pub const TOY_PROMINENT_LAYER: usize = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Region {
    Foreground,
    Background,
}

/// Per-pixel foreground flags, `[F × H × W]` row-major.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegionMask {
    frames: usize,
    height: usize,
    width: usize,
    fg: Vec<bool>,
}

impl RegionMask {
    pub fn new(frames: usize, height: usize, width: usize, fg: Vec<bool>) -> Result<Self> {
        if fg.len() != frames * height * width {
            return Err(Error::shape(format!(
                "mask of {} values for {frames}x{height}x{width}",
                fg.len()
            )));
        }
        Ok(Self {
            frames,
            height,
            width,
            fg,
        })
    }

    pub fn from_fn(frames: usize, height: usize, width: usize, f: impl Fn(usize, usize, usize) -> bool) -> Self {
        let mut fg = Vec::with_capacity(frames * height * width);
        for t in 0..frames {
            for y in 0..height {
                for x in 0..width {
                    fg.push(f(t, y, x));
                }
            }
        }
        Self {
            frames,
            height,
            width,
            fg,
        }
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.frames, self.height, self.width)
    }

    pub fn get(&self, t: usize, y: usize, x: usize) -> bool {
        self.fg[(t * self.height + y) * self.width + x]
    }

    pub fn values(&self) -> &[bool] {
        &self.fg
    }

    pub fn complement(&self) -> Self {
        Self {
            fg: self.fg.iter().map(|v| !v).collect(),
            ..self.clone()
        }
    }

    pub fn count(&self, region: Region) -> usize {
        let fg = self.fg.iter().filter(|&&v| v).count();
        match region {
            Region::Foreground => fg,
            Region::Background => self.fg.len() - fg,
        }
    }

    /// A mask is usable when both regions are non-empty.
    pub fn is_degenerate(&self) -> bool {
        self.count(Region::Foreground) == 0 || self.count(Region::Background) == 0
    }

    /// Mean foreground position `(y, x)` in frame `t`.
    pub fn centroid(&self, t: usize) -> Option<(f64, f64)> {
        let (mut sy, mut sx, mut n) = (0.0, 0.0, 0usize);
        for y in 0..self.height {
            for x in 0..self.width {
                if self.get(t, y, x) {
                    sy += y as f64;
                    sx += x as f64;
                    n += 1;
                }
            }
        }
        (n > 0).then(|| (sy / n as f64, sx / n as f64))
    }
}

fn db(mse: f64) -> f64 {
    if mse <= 0.0 {
        PSNR_CAP_DB
    } else {
        (-10.0 * mse.log10()).min(PSNR_CAP_DB)
    }
}

/// Whole-video PSNR with peak 1.0.
pub fn psnr(a: &Video, b: &Video) -> Result<f64> {
    if !a.same_shape(b) {
        return Err(Error::shape(format!("psnr on {:?} and {:?}", a.dims(), b.dims())));
    }
    let mse = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| ((x - y) as f64).powi(2))
        .sum::<f64>()
        / a.data().len().max(1) as f64;
    Ok(db(mse))
}

/// PSNR over one region, with MSE pooled over every masked pixel and channel
/// before the dB conversion.
pub fn psnr_region(a: &Video, b: &Video, mask: &RegionMask, region: Region) -> Result<f64> {
    if !a.same_shape(b) || a.dims() != mask.dims() {
        return Err(Error::shape(format!(
            "psnr_region on {:?}, {:?} with mask {:?}",
            a.dims(),
            b.dims(),
            mask.dims()
        )));
    }
    let want = region == Region::Foreground;
    let (mut sum, mut n) = (0f64, 0usize);
    for (i, &fg) in mask.values().iter().enumerate() {
        if fg == want {
            for c in 0..3 {
                let d = (a.data()[i * 3 + c] - b.data()[i * 3 + c]) as f64;
                sum += d * d;
            }
            n += 3;
        }
    }
    if n == 0 {
        return Err(Error::DegenerateRegion(format!("{region:?} region is empty")));
    }
    Ok(db(sum / n as f64))
}

/// `S = 1 − 10^(−(psnr − psnr_min)·psnr_max / C)`.
pub fn normalized_similarity(psnr: f64, psnr_min: f64, psnr_max: f64, c: f64) -> Result<f64> {
    if !(c > 0.0) {
        return Err(Error::Domain(format!("C must be positive, got {c}")));
    }
    if !(psnr >= psnr_min) {
        return Err(Error::Domain(format!("psnr {psnr} below psnr_min {psnr_min}")));
    }
    Ok(1.0 - 10f64.powf(-(psnr - psnr_min) * (psnr_max / c)))
}

/// `P = S_bg · (1 − S_fg)`.
pub fn prominence(s_fg: f64, s_bg: f64) -> Result<f64> {
    for (name, v) in [("S_fg", s_fg), ("S_bg", s_bg)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::Domain(format!("{name} = {v} outside [0, 1]")));
        }
    }
    Ok(s_bg * (1.0 - s_fg))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Normalization {
    /// One PSNR range over all layers, regions and prompts.
    #[default]
    Global,
    /// A PSNR range per prompt; similarities are averaged over prompts.
    PerPrompt,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProminenceReport {
    pub c: f64,
    pub normalization: Normalization,
    /// Region PSNRs per (prompt, layer); `None` where the cell was unusable.
    pub psnr_fg_cells: Vec<Vec<Option<f64>>>,
    pub psnr_bg_cells: Vec<Vec<Option<f64>>>,
    /// Prompt-averaged region PSNRs per layer; `None` for excluded layers.
    pub psnr_fg: Vec<Option<f64>>,
    pub psnr_bg: Vec<Option<f64>>,
    pub psnr_min: f64,
    pub psnr_max: f64,
    pub s_fg: Vec<Option<f64>>,
    pub s_bg: Vec<Option<f64>>,
    pub p: Vec<Option<f64>>,
    pub prominent_layer: usize,
    /// Why layers or prompts were left out.
    pub excluded: BTreeMap<String, String>,
}

fn mean(v: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| s / n as f64)
}

fn range(vals: impl Iterator<Item = f64>) -> Option<(f64, f64)> {
    vals.fold(None, |acc, v| match acc {
        None => Some((v, v)),
        Some((lo, hi)) => Some((lo.min(v), hi.max(v))),
    })
}

impl ProminenceReport {
    pub fn num_layers(&self) -> usize {
        self.psnr_fg.len()
    }

    /// Similarity and prominence curves recomputed from the stored PSNRs.
    #[allow(clippy::type_complexity)]
    pub fn recompute(&self) -> Result<(Vec<Option<f64>>, Vec<Option<f64>>, Vec<Option<f64>>)> {
        let n = self.num_layers();
        let (mut s_fg, mut s_bg, mut p) = (vec![None; n], vec![None; n], vec![None; n]);
        for l in 0..n {
            let (Some(fg), Some(bg)) = (self.psnr_fg[l], self.psnr_bg[l]) else {
                continue;
            };
            let (sf, sb) = match self.normalization {
                Normalization::Global => (
                    normalized_similarity(fg, self.psnr_min, self.psnr_max, self.c)?,
                    normalized_similarity(bg, self.psnr_min, self.psnr_max, self.c)?,
                ),
                Normalization::PerPrompt => {
                    let mut sf = Vec::new();
                    let mut sb = Vec::new();
                    for (pf, pb) in self.psnr_fg_cells.iter().zip(&self.psnr_bg_cells) {
                        let Some((lo, hi)) = range(pf.iter().chain(pb).flatten().copied()) else {
                            continue;
                        };
                        if let (Some(f), Some(b)) = (pf[l], pb[l]) {
                            sf.push(normalized_similarity(f, lo, hi, self.c)?);
                            sb.push(normalized_similarity(b, lo, hi, self.c)?);
                        }
                    }
                    match (mean(sf.into_iter()), mean(sb.into_iter())) {
                        (Some(a), Some(b)) => (a, b),
                        _ => continue,
                    }
                }
            };
            s_fg[l] = Some(sf);
            s_bg[l] = Some(sb);
            p[l] = Some(prominence(sf, sb)?);
        }
        Ok((s_fg, s_bg, p))
    }

    /// Whether the stored curves equal a fresh recomputation bit for bit.
    pub fn is_self_consistent(&self) -> bool {
        let bits = |v: &[Option<f64>]| v.iter().map(|x| x.map(f64::to_bits)).collect::<Vec<_>>();
        match self.recompute() {
            Ok((sf, sb, p)) => {
                bits(&sf) == bits(&self.s_fg) && bits(&sb) == bits(&self.s_bg) && bits(&p) == bits(&self.p)
            }
            Err(_) => false,
        }
    }
}

/// Assembles the report from RoPE-sweep videos.
///
/// `probes` is keyed by (prompt index, layer). Prompts with degenerate masks
/// and layers without any usable cell are excluded and listed in the report.
pub fn build_prominence_report(
    originals: &[Video],
    probes: &BTreeMap<(usize, usize), Video>,
    masks: &[RegionMask],
    num_layers: usize,
    c: f64,
    normalization: Normalization,
) -> Result<ProminenceReport> {
    if masks.len() != originals.len() {
        return Err(Error::config(format!(
            "{} masks for {} original videos",
            masks.len(),
            originals.len()
        )));
    }
    if !(c > 0.0) {
        return Err(Error::Domain(format!("C must be positive, got {c}")));
    }
    let mut excluded = BTreeMap::new();
    let np = originals.len();
    let mut fg_cells = vec![vec![None; num_layers]; np];
    let mut bg_cells = vec![vec![None; num_layers]; np];
    for (p, (orig, mask)) in originals.iter().zip(masks).enumerate() {
        if mask.is_degenerate() {
            excluded.insert(format!("prompt {p}"), "degenerate foreground mask".into());
            continue;
        }
        for l in 0..num_layers {
            let Some(probe) = probes.get(&(p, l)) else {
                continue;
            };
            fg_cells[p][l] = Some(psnr_region(orig, probe, mask, Region::Foreground)?);
            bg_cells[p][l] = Some(psnr_region(orig, probe, mask, Region::Background)?);
        }
    }
    let psnr_fg: Vec<Option<f64>> = (0..num_layers)
        .map(|l| mean(fg_cells.iter().filter_map(|row| row[l])))
        .collect();
    let psnr_bg: Vec<Option<f64>> = (0..num_layers)
        .map(|l| mean(bg_cells.iter().filter_map(|row| row[l])))
        .collect();
    for l in 0..num_layers {
        if psnr_fg[l].is_none() {
            excluded.insert(format!("layer {l}"), "no usable probe video".into());
        }
    }
    let (psnr_min, psnr_max) = range(psnr_fg.iter().chain(&psnr_bg).flatten().copied())
        .ok_or_else(|| Error::DegenerateRegion("no layer has a usable foreground mask".into()))?;
    let mut report = ProminenceReport {
        c,
        normalization,
        psnr_fg_cells: fg_cells,
        psnr_bg_cells: bg_cells,
        psnr_fg,
        psnr_bg,
        psnr_min,
        psnr_max,
        s_fg: vec![],
        s_bg: vec![],
        p: vec![],
        prominent_layer: 0,
        excluded,
    };
    let (s_fg, s_bg, p) = report.recompute()?;
    report.prominent_layer = argmax(&p).ok_or_else(|| Error::DegenerateRegion("no prominence values".into()))?;
    report.s_fg = s_fg;
    report.s_bg = s_bg;
    report.p = p;
    Ok(report)
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[Option<f64>]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, v) in values.iter().enumerate() {
        if let Some(v) = *v {
            if best.is_none_or(|(_, b)| v > b) {
                best = Some((i, v));
            }
        }
    }
    best.map(|(i, _)| i)
}

/// Supplies foreground masks for a generated video.
pub trait ForegroundProvider: Sync {
    fn masks(&self, prompt: &str, referent: Option<&str>, video: &Video) -> Result<RegionMask>;
    fn tag(&self) -> String;
}

/// Returns known masks, e.g. ground truth from [`synthesize_scene`].
#[derive(Debug, Clone, Default)]
pub struct FixedMasks {
    pub by_prompt: BTreeMap<String, RegionMask>,
}

impl ForegroundProvider for FixedMasks {
    fn masks(&self, prompt: &str, _referent: Option<&str>, video: &Video) -> Result<RegionMask> {
        let m = self
            .by_prompt
            .get(prompt)
            .ok_or_else(|| Error::Missing(format!("no mask for prompt {prompt:?}")))?;
        if m.dims() != video.dims() {
            return Err(Error::shape(format!("mask {:?} for video {:?}", m.dims(), video.dims())));
        }
        Ok(m.clone())
    }

    fn tag(&self) -> String {
        "fixed-masks".into()
    }
}

/// Foreground = pixels whose luminance departs from the frame mean by more
/// than `threshold`. A crude saliency heuristic for untrained toy videos.
#[derive(Debug, Clone, Copy)]
pub struct LuminanceThreshold {
    pub threshold: f32,
}

impl Default for LuminanceThreshold {
    fn default() -> Self {
        Self { threshold: 0.1 }
    }
}

impl ForegroundProvider for LuminanceThreshold {
    fn masks(&self, _prompt: &str, _referent: Option<&str>, video: &Video) -> Result<RegionMask> {
        let (f, h, w) = video.dims();
        let mut fg = Vec::with_capacity(f * h * w);
        for t in 0..f {
            let luma = video.luminance(t);
            let m = luma.iter().sum::<f32>() / luma.len().max(1) as f32;
            fg.extend(luma.iter().map(|&v| (v - m).abs() > self.threshold));
        }
        RegionMask::new(f, h, w, fg)
    }

    fn tag(&self) -> String {
        format!("luminance-threshold-{}", self.threshold)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Shape {
    Square { size: usize },
    Disk { radius: f64 },
}

/// A moving foreground shape over a noise-textured background.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    pub shape: Shape,
    /// Top-left corner (square) or centre (disk) in frame 0, `(y, x)`.
    pub start: (f64, f64),
    /// Displacement per frame, `(dy, dx)`.
    pub velocity: (f64, f64),
    pub color: [f32; 3],
    pub background: [f32; 3],
    /// Amplitude of the per-pixel background texture.
    pub texture: f32,
}

/// Deterministic video plus exact per-frame foreground masks.
pub fn synthesize_scene(spec: &SceneSpec, seed: u64) -> Result<(Video, RegionMask)> {
    let SceneSpec {
        frames,
        height,
        width,
        shape,
        start,
        velocity,
        color,
        background,
        texture,
    } = *spec;
    if frames == 0 || height == 0 || width == 0 {
        return Err(Error::Scene("scene dimensions must be positive".into()));
    }
    let (hf, wf) = (height as f64, width as f64);
    for t in [0, frames - 1] {
        let (y, x) = (start.0 + velocity.0 * t as f64, start.1 + velocity.1 * t as f64);
        let inside = match shape {
            Shape::Square { size } => {
                size > 0 && y >= 0.0 && x >= 0.0 && y + size as f64 <= hf && x + size as f64 <= wf
            }
            Shape::Disk { radius } => {
                radius > 0.0 && y - radius >= 0.0 && x - radius >= 0.0 && y + radius <= hf && x + radius <= wf
            }
        };
        if !inside {
            return Err(Error::Scene(format!("shape leaves the {height}x{width} frame at frame {t}")));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tex: Vec<f32> = (0..height * width).map(|_| rng.random_range(-1.0f32..1.0) * texture).collect();
    let mask = RegionMask::from_fn(frames, height, width, |t, py, px| {
        let (y, x) = (start.0 + velocity.0 * t as f64, start.1 + velocity.1 * t as f64);
        let (py, px) = (py as f64, px as f64);
        match shape {
            Shape::Square { size } => {
                let (y0, x0) = (y.round(), x.round());
                py >= y0 && py < y0 + size as f64 && px >= x0 && px < x0 + size as f64
            }
            Shape::Disk { radius } => (py + 0.5 - y).powi(2) + (px + 0.5 - x).powi(2) <= radius * radius,
        }
    });
    let mut video = Video::filled(frames, height, width, background);
    for t in 0..frames {
        for y in 0..height {
            for x in 0..width {
                let rgb = if mask.get(t, y, x) {
                    color
                } else {
                    let n = tex[y * width + x];
                    background.map(|c| (c + n).clamp(0.0, 1.0))
                };
                video.set_pixel(t, y, x, rgb);
            }
        }
    }
    Ok((video, mask))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scene() -> SceneSpec {
        SceneSpec {
            frames: 3,
            height: 16,
            width: 16,
            shape: Shape::Square { size: 4 },
            start: (2.0, 2.0),
            velocity: (1.0, 2.0),
            color: [0.9, 0.1, 0.1],
            background: [0.3, 0.5, 0.3],
            texture: 0.05,
        }
    }

    #[test]
    fn similarity_examples() {
        assert_eq!(normalized_similarity(12.5, 12.5, 40.0, 400.0).unwrap(), 0.0);
        assert!((normalized_similarity(20.0, 10.0, 40.0, 400.0).unwrap() - 0.9).abs() < 1e-9);
        assert!((normalized_similarity(50.0, 10.0, 40.0, 400.0).unwrap() - 0.9999).abs() < 1e-12);
        assert!(matches!(normalized_similarity(9.0, 10.0, 40.0, 400.0), Err(Error::Domain(_))));
        assert!(matches!(normalized_similarity(20.0, 10.0, 40.0, 0.0), Err(Error::Domain(_))));
    }

    #[test]
    fn prominence_examples() {
        assert_eq!(prominence(0.0, 1.0).unwrap(), 1.0);
        assert!((prominence(0.2, 0.9).unwrap() - 0.72).abs() < 1e-12);
        assert_eq!(prominence(1.0, 0.37).unwrap(), 0.0);
        assert!(matches!(prominence(1.1, 0.5), Err(Error::Domain(_))));
    }

    #[test]
    fn region_psnr_examples() {
        let (v, m) = synthesize_scene(&scene(), 1).unwrap();
        assert_eq!(psnr_region(&v, &v, &m, Region::Foreground).unwrap(), PSNR_CAP_DB);
        let mut w = v.clone();
        for (i, &fg) in m.values().iter().enumerate() {
            if fg {
                for c in 0..3 {
                    w.data_mut()[i * 3 + c] -= 0.1;
                }
            }
        }
        let fg = psnr_region(&v, &w, &m, Region::Foreground).unwrap();
        assert!((fg - 20.0).abs() < 1e-4, "{fg}");
        assert_eq!(psnr_region(&v, &w, &m, Region::Background).unwrap(), PSNR_CAP_DB);
        assert_eq!(psnr_region(&w, &v, &m.complement(), Region::Background).unwrap(), fg);
        let empty = RegionMask::from_fn(3, 16, 16, |_, _, _| false);
        assert!(matches!(
            psnr_region(&v, &w, &empty, Region::Foreground),
            Err(Error::DegenerateRegion(_))
        ));
    }

    #[test]
    fn scenes_are_deterministic_and_move() {
        let (a, ma) = synthesize_scene(&scene(), 7).unwrap();
        let (b, mb) = synthesize_scene(&scene(), 7).unwrap();
        assert_eq!((a, ma.clone()), (b, mb));
        let c: Vec<_> = (0..3).map(|t| ma.centroid(t).unwrap()).collect();
        assert_eq!(c[1].0 - c[0].0, c[2].0 - c[1].0);
        assert_eq!(c[1].1 - c[0].1, 2.0);
        let still = SceneSpec { velocity: (0.0, 0.0), ..scene() };
        let (_, m) = synthesize_scene(&still, 0).unwrap();
        assert!((1..3).all(|t| (0..16).all(|y| (0..16).all(|x| m.get(t, y, x) == m.get(0, y, x)))));
        let off = SceneSpec { velocity: (0.0, 8.0), ..scene() };
        assert!(matches!(synthesize_scene(&off, 0), Err(Error::Scene(_))));
        let disk = SceneSpec { shape: Shape::Disk { radius: 3.0 }, start: (8.0, 8.0), velocity: (0.0, 0.0), ..scene() };
        let (_, m) = synthesize_scene(&disk, 0).unwrap();
        assert!(m.count(Region::Foreground) > 20 && m.count(Region::Foreground) < 36 * 3);
    }

    #[test]
    fn foreground_only_probe_is_most_prominent() {
        let (v, m) = synthesize_scene(&scene(), 3).unwrap();
        let perturb = |fg_amt: f32, bg_amt: f32| {
            let mut w = v.clone();
            for (i, &fg) in m.values().iter().enumerate() {
                let d = if fg { fg_amt } else { bg_amt };
                w.data_mut()[i * 3] = (w.data()[i * 3] - d).clamp(0.0, 1.0);
            }
            w
        };
        let mut probes = BTreeMap::new();
        probes.insert((0, 0), perturb(0.05, 0.05));
        probes.insert((0, 1), perturb(0.3, 0.0));
        probes.insert((0, 2), perturb(0.3, 0.3));
        let r = build_prominence_report(&[v], &probes, &[m], 3, DEFAULT_C, Normalization::Global).unwrap();
        assert_eq!(r.prominent_layer, 1);
        assert!(r.is_self_consistent());
        assert_eq!(r.psnr_max, PSNR_CAP_DB);
    }

    #[test]
    fn identical_probes_tie_to_layer_zero_and_degenerate_excluded() {
        let (v, m) = synthesize_scene(&scene(), 3).unwrap();
        let probes: BTreeMap<_, _> = (0..4).map(|l| ((0, l), v.clone())).collect();
        let r = build_prominence_report(&[v.clone()], &probes, &[m.clone()], 4, DEFAULT_C, Normalization::Global)
            .unwrap();
        assert_eq!(r.prominent_layer, 0);
        assert!(r.p.iter().all(|p| *p == r.p[0]));
        let all = RegionMask::from_fn(3, 16, 16, |_, _, _| true);
        let mut p2 = probes.clone();
        p2.extend((0..4).map(|l| ((1, l), v.clone())));
        let r = build_prominence_report(&[v.clone(), v], &p2, &[m, all], 4, DEFAULT_C, Normalization::PerPrompt)
            .unwrap();
        assert!(r.excluded.contains_key("prompt 1"));
        assert!(r.is_self_consistent());
    }

    #[test]
    fn tampered_report_is_inconsistent() {
        let (v, m) = synthesize_scene(&scene(), 3).unwrap();
        let mut w = v.clone();
        w.data_mut()[0] = 0.0;
        let probes: BTreeMap<_, _> = [((0, 0), w), ((0, 1), v.clone())].into_iter().collect();
        let mut r = build_prominence_report(&[v], &probes, &[m], 2, DEFAULT_C, Normalization::Global).unwrap();
        assert!(r.is_self_consistent());
        r.p[0] = r.p[0].map(|p| p + 1e-15);
        assert!(!r.is_self_consistent());
    }

    proptest::proptest! {
        #[test]
        fn similarity_monotone(min in 0.0f64..50.0, a in 0.0f64..50.0, b in 0.0f64..50.0, max in 1.0f64..100.0) {
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            let s1 = normalized_similarity(min + lo, min, max, 400.0).unwrap();
            let s2 = normalized_similarity(min + hi, min, max, 400.0).unwrap();
            proptest::prop_assert!(s1 <= s2 && (0.0..1.0).contains(&s1));
        }
    }
}
