//! Layer vitality probing.
//!
//! For every prompt the unmodified video is generated once, then one probing
//! video per layer with that layer bypassed (or with rotary embeddings removed
//! from its visual keys) at every step, holding prompt and seed fixed. The
//! vitality of a layer is one minus the mean perceptual cosine similarity
//! between the original and its probing videos.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hooks::{HookPlan, LayerHooks};
use crate::sampler::{no_hooks, Sampler};
use crate::video::Video;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProbeMode {
    Bypass,
    RopeDrop,
}

impl ProbeMode {
    pub fn hook(self) -> HookPlan {
        match self {
            ProbeMode::Bypass => HookPlan::bypass(),
            ProbeMode::RopeDrop => HookPlan::rope_drop(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ProbeMode::Bypass => "bypass",
            ProbeMode::RopeDrop => "rope-drop",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptSet {
    prompts: Vec<String>,
    seeds: Vec<u64>,
}

impl PromptSet {
    /// Prompts must be unique; order is kept.
    pub fn new(prompts: Vec<String>, seeds: Vec<u64>) -> Result<Self> {
        if prompts.is_empty() {
            return Err(Error::config("prompt set is empty"));
        }
        if prompts.len() != seeds.len() {
            return Err(Error::config(format!(
                "{} prompts but {} seeds",
                prompts.len(),
                seeds.len()
            )));
        }
        let unique: BTreeSet<_> = prompts.iter().collect();
        if unique.len() != prompts.len() {
            return Err(Error::config("prompts in a prompt set must be unique"));
        }
        Ok(Self { prompts, seeds })
    }

    /// Seeds `base_seed, base_seed + 1, …` in prompt order.
    pub fn with_base_seed<S: Into<String>>(prompts: impl IntoIterator<Item = S>, base_seed: u64) -> Result<Self> {
        let prompts: Vec<String> = prompts.into_iter().map(Into::into).collect();
        let seeds = (0..prompts.len() as u64).map(|i| base_seed.wrapping_add(i)).collect();
        Self::new(prompts, seeds)
    }

    pub fn len(&self) -> usize {
        self.prompts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prompts.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, u64)> {
        self.prompts.iter().map(String::as_str).zip(self.seeds.iter().copied())
    }

    pub fn prompts(&self) -> &[String] {
        &self.prompts
    }
}

/// Video → unit feature vector. Implementations must be deterministic.
pub trait PerceptualEmbedder: Sync {
    fn embed(&self, video: &Video) -> Vec<f64>;
    fn tag(&self) -> String;
}

/// Dependency-free perceptual features: per frame an `grid × grid` luminance
/// thumbnail plus per-channel means, centred on mid-grey, averaged over
/// frames and L2-normalised.
#[derive(Debug, Clone, Copy)]
pub struct ThumbnailEmbedder {
    pub grid: usize,
}

impl Default for ThumbnailEmbedder {
    fn default() -> Self {
        Self { grid: 8 }
    }
}

impl ThumbnailEmbedder {
    fn frame_features(&self, video: &Video, f: usize) -> Vec<f64> {
        let (_, h, w) = video.dims();
        let g = self.grid;
        let luma = video.luminance(f);
        let mut feats = vec![0f64; g * g + 3];
        let mut counts = vec![0usize; g * g];
        for y in 0..h {
            for x in 0..w {
                let cell = (y * g / h) * g + x * g / w;
                feats[cell] += luma[y * w + x] as f64 - 0.5;
                counts[cell] += 1;
            }
        }
        for (v, &n) in feats.iter_mut().zip(&counts) {
            if n > 0 {
                *v /= n as f64;
            }
        }
        let frame = video.frame(f);
        let n = (h * w) as f64;
        for c in 0..3 {
            feats[g * g + c] = frame.iter().skip(c).step_by(3).map(|&v| v as f64 - 0.5).sum::<f64>() / n;
        }
        feats
    }
}

impl PerceptualEmbedder for ThumbnailEmbedder {
    fn embed(&self, video: &Video) -> Vec<f64> {
        let dim = self.grid * self.grid + 3;
        let mut acc = vec![0f64; dim];
        for f in 0..video.frames() {
            for (a, v) in acc.iter_mut().zip(self.frame_features(video, f)) {
                *a += v;
            }
        }
        for a in &mut acc {
            *a /= video.frames().max(1) as f64;
        }
        normalize(acc)
    }

    fn tag(&self) -> String {
        format!("thumbnail-{}x{}+rgb-mean/v1", self.grid, self.grid)
    }
}

/// L2-normalises; the zero vector maps to the first basis vector.
pub fn normalize(mut v: Vec<f64>) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 && n.is_finite() {
        v.iter_mut().for_each(|x| *x /= n);
    } else if !v.is_empty() {
        v.iter_mut().for_each(|x| *x = 0.0);
        v[0] = 1.0;
    }
    v
}

/// Cosine similarity; bitwise-equal inputs give exactly 1.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    if a == b && a.iter().any(|&x| x != 0.0) {
        return 1.0;
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot / (na * nb)).clamp(-1.0, 1.0)
}

/// Result of one sweep over prompts × layers.
#[derive(Debug, Clone)]
pub struct ProbeSweep {
    pub mode: ProbeMode,
    pub num_layers: usize,
    pub prompts: PromptSet,
    /// One unmodified video per prompt.
    pub originals: Vec<Video>,
    /// Probing videos keyed by (prompt index, layer).
    pub probes: BTreeMap<(usize, usize), Video>,
    /// Cells that failed, with the error text.
    pub failures: BTreeMap<(usize, usize), String>,
}

impl ProbeSweep {
    pub fn probe(&self, prompt: usize, layer: usize) -> Option<&Video> {
        self.probes.get(&(prompt, layer))
    }
}

/// Generates originals once per prompt, then one probing video per layer.
/// Cells run in parallel; a failing cell is recorded and the sweep continues.
pub fn run_probe_sweep(sampler: &Sampler<'_>, mode: ProbeMode, prompts: &PromptSet) -> Result<ProbeSweep> {
    let originals = generate_originals(sampler, prompts)?;
    run_probe_sweep_with(sampler, mode, prompts, originals)
}

pub fn generate_originals(sampler: &Sampler<'_>, prompts: &PromptSet) -> Result<Vec<Video>> {
    let list: Vec<(&str, u64)> = prompts.iter().collect();
    list.par_iter()
        .map(|(p, s)| sampler.sample(p, *s, &no_hooks).map(|o| o.video))
        .collect()
}

/// Sweep reusing already generated originals (e.g. shared between modes).
pub fn run_probe_sweep_with(
    sampler: &Sampler<'_>,
    mode: ProbeMode,
    prompts: &PromptSet,
    originals: Vec<Video>,
) -> Result<ProbeSweep> {
    if originals.len() != prompts.len() {
        return Err(Error::config(format!(
            "{} originals for {} prompts",
            originals.len(),
            prompts.len()
        )));
    }
    let num_layers = sampler.model.num_layers();
    let list: Vec<(&str, u64)> = prompts.iter().collect();
    let cells: Vec<(usize, usize)> = (0..list.len())
        .flat_map(|p| (0..num_layers).map(move |l| (p, l)))
        .collect();
    let results: Vec<((usize, usize), Result<Video>)> = cells
        .par_iter()
        .map(|&(p, l)| {
            let hooks: LayerHooks = [(l, mode.hook())].into_iter().collect();
            let (prompt, seed) = list[p];
            let video = sampler.sample(prompt, seed, &|_| hooks.clone()).map(|o| o.video);
            ((p, l), video)
        })
        .collect();
    let mut probes = BTreeMap::new();
    let mut failures = BTreeMap::new();
    for (cell, r) in results {
        match r {
            Ok(v) => {
                probes.insert(cell, v);
            }
            Err(e) => {
                log::warn!("probe cell {cell:?} ({}) failed: {e}", mode.name());
                failures.insert(cell, e.to_string());
            }
        }
    }
    Ok(ProbeSweep {
        mode,
        num_layers,
        prompts: prompts.clone(),
        originals,
        probes,
        failures,
    })
}

/// Per-layer `1 − mean_s cos(embed(V_o), embed(V_l))`.
pub fn vitality_score(
    originals: &[Video],
    probes: &BTreeMap<(usize, usize), Video>,
    num_layers: usize,
    embedder: &dyn PerceptualEmbedder,
) -> Result<Vec<f64>> {
    if originals.is_empty() {
        return Err(Error::Missing("no original videos".into()));
    }
    let missing: Vec<(usize, usize)> = (0..originals.len())
        .flat_map(|p| (0..num_layers).map(move |l| (p, l)))
        .filter(|cell| !probes.contains_key(cell))
        .collect();
    if !missing.is_empty() {
        return Err(Error::Missing(format!(
            "probe videos missing for (prompt, layer) pairs {missing:?}"
        )));
    }
    let base: Vec<Vec<f64>> = originals.iter().map(|v| embedder.embed(v)).collect();
    let n = originals.len() as f64;
    Ok((0..num_layers)
        .map(|l| {
            let mean_sim = base
                .iter()
                .enumerate()
                .map(|(p, e)| cosine(e, &embedder.embed(&probes[&(p, l)])))
                .sum::<f64>()
                / n;
            (1.0 - mean_sim).clamp(0.0, 2.0)
        })
        .collect())
}

/// Sample Pearson correlation.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::shape(format!("pearson on lengths {} and {}", x.len(), y.len())));
    }
    if x.len() < 2 {
        return Err(Error::UndefinedCorrelation(format!("need at least 2 points, got {}", x.len())));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedCorrelation("zero variance".into()));
    }
    // One square root keeps exactly collinear inputs at exactly ±1.
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VitalityReport {
    pub vitality_layer: Vec<f64>,
    pub vitality_rope: Vec<f64>,
    /// `None` when either curve has zero variance.
    pub pearson_r: Option<f64>,
    pub num_prompts: usize,
    pub embedder: String,
}

impl VitalityReport {
    pub fn new(vitality_layer: Vec<f64>, vitality_rope: Vec<f64>, num_prompts: usize, embedder: String) -> Result<Self> {
        if vitality_layer.len() != vitality_rope.len() {
            return Err(Error::shape("vitality curves differ in length"));
        }
        let pearson_r = match pearson(&vitality_layer, &vitality_rope) {
            Ok(r) => Some(r),
            Err(Error::UndefinedCorrelation(_)) => None,
            Err(e) => return Err(e),
        };
        Ok(Self {
            vitality_layer,
            vitality_rope,
            pearson_r,
            num_prompts,
            embedder,
        })
    }

    pub fn num_layers(&self) -> usize {
        self.vitality_rope.len()
    }
}

/// Runs both sweeps (sharing originals) and reduces them to a report.
pub fn vitality_analysis(
    sampler: &Sampler<'_>,
    prompts: &PromptSet,
    embedder: &dyn PerceptualEmbedder,
) -> Result<(VitalityReport, ProbeSweep, ProbeSweep)> {
    let originals = generate_originals(sampler, prompts)?;
    let bypass = run_probe_sweep_with(sampler, ProbeMode::Bypass, prompts, originals.clone())?;
    let rope = run_probe_sweep_with(sampler, ProbeMode::RopeDrop, prompts, originals)?;
    let n = sampler.model.num_layers();
    let vl = vitality_score(&bypass.originals, &bypass.probes, n, embedder)?;
    let vr = vitality_score(&rope.originals, &rope.probes, n, embedder)?;
    let report = VitalityReport::new(vl, vr, prompts.len(), embedder.tag())?;
    Ok((report, bypass, rope))
}

/// The backbone's vital layers (42-layer configuration).
pub const BACKBONE_VITAL_LAYERS: [usize; 10] = [0, 1, 10, 11, 12, 14, 15, 17, 19, 23];
/// The backbone's non-vital layers (42-layer configuration).
pub const BACKBONE_NON_VITAL_LAYERS: [usize; 18] =
    [16, 24, 25, 27, 28, 29, 30, 31, 32, 33, 34, 35, 36, 37, 38, 39, 40, 41];
pub const BACKBONE_NUM_LAYERS: usize = 42;

/// Vital layers of the default toy model: the top 2 of 8 by RoPE-drop
/// vitality (10 prompts, T = 25), keeping the backbone's 10/42 ratio.
pub const TOY_VITAL_LAYERS: [usize; 2] = [0, 1];
/// Non-vital layers of the default toy model: the bottom 3 of 8, keeping the
/// backbone's 18/42 ratio.
pub const TOY_NON_VITAL_LAYERS: [usize; 3] = [5, 6, 7];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "strategy")]
pub enum LayerSelection {
    Explicit { layers: Vec<usize> },
    /// The `k` layers with the highest RoPE vitality.
    TopK { k: usize },
    /// The `k` layers with the lowest RoPE vitality.
    BottomK { k: usize },
    /// Layers with RoPE vitality at or above the threshold.
    Threshold { min: f64 },
}

/// Sorted layer set chosen from a vitality report. Ties prefer lower layers.
pub fn select_vital_layers(report: &VitalityReport, strategy: &LayerSelection) -> Result<Vec<usize>> {
    let n = report.num_layers();
    let ranked = |descending: bool| {
        let mut idx: Vec<usize> = (0..n).collect();
        idx.sort_by(|&a, &b| {
            let (va, vb) = (report.vitality_rope[a], report.vitality_rope[b]);
            let ord = if descending { vb.total_cmp(&va) } else { va.total_cmp(&vb) };
            ord.then(a.cmp(&b))
        });
        idx
    };
    let mut out = match strategy {
        LayerSelection::Explicit { layers } => {
            if let Some(&l) = layers.iter().find(|&&l| l >= n) {
                return Err(Error::config(format!("layer {l} out of range for {n} layers")));
            }
            layers.clone()
        }
        LayerSelection::TopK { k } | LayerSelection::BottomK { k } => {
            if *k > n {
                return Err(Error::config(format!("k = {k} exceeds {n} layers")));
            }
            let desc = matches!(strategy, LayerSelection::TopK { .. });
            ranked(desc).into_iter().take(*k).collect()
        }
        LayerSelection::Threshold { min } => (0..n).filter(|&l| report.vitality_rope[l] >= *min).collect(),
    };
    out.sort_unstable();
    out.dedup();
    Ok(out)
}

/// Default strategy: the explicit backbone lists for 42-layer models,
/// otherwise top-k (vital) or bottom-k (non-vital) by RoPE vitality.
pub fn default_selection(num_layers: usize, vital: bool, k: usize) -> LayerSelection {
    match (num_layers == BACKBONE_NUM_LAYERS, vital) {
        (true, true) => LayerSelection::Explicit {
            layers: BACKBONE_VITAL_LAYERS.to_vec(),
        },
        (true, false) => LayerSelection::Explicit {
            layers: BACKBONE_NON_VITAL_LAYERS.to_vec(),
        },
        (false, true) => LayerSelection::TopK { k },
        (false, false) => LayerSelection::BottomK { k },
    }
}
