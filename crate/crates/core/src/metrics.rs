//! Edit-quality metrics: directional and image similarity under a pluggable
//! embedder, temporal-consistency proxies, and the multiplicative overall
//! score.

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::probe::{cosine, normalize};
use crate::prominence::RegionMask;
use crate::text::{stable_hash, tokenize};
use crate::video::Video;

/// Joint image/text embedding onto a shared unit sphere.
pub trait Embedder: Sync {
    fn dim(&self) -> usize;
    fn embed_frame(&self, video: &Video, frame: usize) -> Vec<f64>;
    fn embed_text(&self, text: &str) -> Vec<f64>;
    fn tag(&self) -> String;
}

/// Random projection of an 8×8 RGB thumbnail for frames; a bag of hashed
/// token vectors for text. Both land on the same unit sphere.
#[derive(Debug, Clone)]
pub struct ToyEmbedder {
    seed: u64,
    grid: usize,
    projection: Array2<f64>,
}

impl ToyEmbedder {
    pub fn new(dim: usize, seed: u64) -> Self {
        let grid = 8;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inputs = grid * grid * 3;
        let projection = Array2::from_shape_simple_fn((dim, inputs), || StandardNormal.sample(&mut rng));
        Self { seed, grid, projection }
    }

    fn thumbnail(&self, video: &Video, f: usize) -> Vec<f64> {
        let (_, h, w) = video.dims();
        let g = self.grid;
        let mut acc = vec![0f64; g * g * 3];
        let mut counts = vec![0usize; g * g];
        for y in 0..h {
            for x in 0..w {
                let cell = (y * g / h) * g + x * g / w;
                let p = video.pixel(f, y, x);
                for c in 0..3 {
                    acc[cell * 3 + c] += p[c] as f64 - 0.5;
                }
                counts[cell] += 1;
            }
        }
        for (i, v) in acc.iter_mut().enumerate() {
            let n = counts[i / 3];
            if n > 0 {
                *v /= n as f64;
            }
        }
        acc
    }
}

impl Default for ToyEmbedder {
    fn default() -> Self {
        Self::new(64, 0xc11b)
    }
}

impl Embedder for ToyEmbedder {
    fn dim(&self) -> usize {
        self.projection.nrows()
    }

    fn embed_frame(&self, video: &Video, frame: usize) -> Vec<f64> {
        let t = ndarray::Array1::from(self.thumbnail(video, frame));
        normalize(self.projection.dot(&t).to_vec())
    }

    fn embed_text(&self, text: &str) -> Vec<f64> {
        let mut acc = vec![0f64; self.dim()];
        for tok in tokenize(text) {
            let mut rng = ChaCha8Rng::seed_from_u64(stable_hash(tok.as_bytes()) ^ self.seed);
            for a in &mut acc {
                let v: f64 = StandardNormal.sample(&mut rng);
                *a += v;
            }
        }
        normalize(acc)
    }

    fn tag(&self) -> String {
        format!("toy-projection-{}d/v1", self.dim())
    }
}

fn check_dim(v: &[f64], dim: usize, what: &str) -> Result<()> {
    if v.len() != dim {
        return Err(Error::shape(format!("{what} embedding has {} dims, expected {dim}", v.len())));
    }
    Ok(())
}

fn mean_frame_embedding(video: &Video, emb: &dyn Embedder) -> Result<Vec<f64>> {
    let mut acc = vec![0f64; emb.dim()];
    for f in 0..video.frames() {
        let e = emb.embed_frame(video, f);
        check_dim(&e, emb.dim(), "frame")?;
        acc.iter_mut().zip(e).for_each(|(a, v)| *a += v);
    }
    let n = video.frames() as f64;
    Ok(acc.into_iter().map(|v| v / n).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClipDir {
    pub value: f64,
    /// A direction had zero length; `value` is then 0.
    pub degenerate: bool,
}

const ZERO_DIRECTION: f64 = 1e-12;

/// Cosine between two directions; zero-length directions score 0 and are flagged.
pub fn direction_cosine(a: &[f64], b: &[f64]) -> Result<ClipDir> {
    if a.len() != b.len() {
        return Err(Error::shape(format!("directions of {} and {} dims", a.len(), b.len())));
    }
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na <= ZERO_DIRECTION || nb <= ZERO_DIRECTION {
        return Ok(ClipDir {
            value: 0.0,
            degenerate: true,
        });
    }
    Ok(ClipDir {
        value: cosine(a, b),
        degenerate: false,
    })
}

/// Cosine between the text change and the mean-frame embedding change.
pub fn clip_dir(
    source: &Video,
    target: &Video,
    source_text: &str,
    target_text: &str,
    emb: &dyn Embedder,
) -> Result<ClipDir> {
    if source.frames() == 0 || target.frames() == 0 {
        return Err(Error::shape("clip_dir needs non-empty videos"));
    }
    let (ts, tt) = (emb.embed_text(source_text), emb.embed_text(target_text));
    check_dim(&ts, emb.dim(), "text")?;
    check_dim(&tt, emb.dim(), "text")?;
    let (is, it) = (mean_frame_embedding(source, emb)?, mean_frame_embedding(target, emb)?);
    let text_dir: Vec<f64> = tt.iter().zip(&ts).map(|(a, b)| a - b).collect();
    let img_dir: Vec<f64> = it.iter().zip(&is).map(|(a, b)| a - b).collect();
    direction_cosine(&text_dir, &img_dir)
}

/// Mean framewise cosine between source and target frames.
pub fn clip_img(source: &Video, target: &Video, emb: &dyn Embedder) -> Result<f64> {
    if source.frames() != target.frames() {
        return Err(Error::shape(format!(
            "clip_img on {} and {} frames",
            source.frames(),
            target.frames()
        )));
    }
    if source.frames() == 0 {
        return Err(Error::shape("clip_img needs non-empty videos"));
    }
    let mut sum = 0.0;
    for f in 0..source.frames() {
        let (a, b) = (emb.embed_frame(source, f), emb.embed_frame(target, f));
        check_dim(&a, emb.dim(), "frame")?;
        check_dim(&b, emb.dim(), "frame")?;
        sum += cosine(&a, &b);
    }
    Ok(sum / source.frames() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Temporal {
    /// `1 − mean |V_{t+1} − V_t|`.
    pub tf: f64,
    /// `1 − mean |V_{t+1} − 2V_t + V_{t−1}| / 2`.
    pub ms: f64,
    /// Mean clipped cosine of consecutive foreground embeddings.
    pub sc: f64,
    /// Mean clipped cosine of consecutive background embeddings.
    pub bc: f64,
}

pub const TEMPORAL_PROXY_TAG: &str = "tf=abs-diff,ms=second-diff,sc/bc=region-embedding-cosine/v1";

/// Frame copy with pixels outside the chosen region set to mid-grey.
fn region_frame(video: &Video, f: usize, mask: &RegionMask, fg: bool) -> Video {
    let (_, h, w) = video.dims();
    let mut out = Video::filled(1, h, w, [0.5; 3]);
    for y in 0..h {
        for x in 0..w {
            if mask.get(f, y, x) == fg {
                out.set_pixel(0, y, x, video.pixel(f, y, x));
            }
        }
    }
    out
}

fn consistency(video: &Video, emb: &dyn Embedder, mask: Option<(&RegionMask, bool)>) -> f64 {
    let embed = |f: usize| match mask {
        Some((m, fg)) => emb.embed_frame(&region_frame(video, f, m, fg), 0),
        None => emb.embed_frame(video, f),
    };
    let embs: Vec<Vec<f64>> = (0..video.frames()).map(embed).collect();
    let n = embs.len() - 1;
    embs.windows(2).map(|w| cosine(&w[0], &w[1]).max(0.0)).sum::<f64>() / n as f64
}

/// Temporal proxies; without a mask both consistency terms use whole frames.
pub fn temporal_metrics(video: &Video, regions: Option<&RegionMask>, emb: &dyn Embedder) -> Result<Temporal> {
    let f = video.frames();
    if f < 3 {
        return Err(Error::shape(format!("temporal metrics need at least 3 frames, got {f}")));
    }
    if let Some(m) = regions {
        if m.dims() != video.dims() {
            return Err(Error::shape(format!("region mask {:?} for video {:?}", m.dims(), video.dims())));
        }
    }
    let len = video.frame_len();
    let frame = |t: usize| video.frame(t);
    let mut d1 = 0.0;
    for t in 0..f - 1 {
        d1 += frame(t + 1).iter().zip(frame(t)).map(|(a, b)| (a - b).abs() as f64).sum::<f64>();
    }
    let mut d2 = 0.0;
    for t in 1..f - 1 {
        d2 += frame(t + 1)
            .iter()
            .zip(frame(t))
            .zip(frame(t - 1))
            .map(|((a, b), c)| (*a as f64 - 2.0 * *b as f64 + *c as f64).abs())
            .sum::<f64>();
    }
    let tf = 1.0 - d1 / ((f - 1) * len) as f64;
    let ms = 1.0 - d2 / (2.0 * ((f - 2) * len) as f64);
    let (sc, bc) = match regions {
        Some(m) => (consistency(video, emb, Some((m, true))), consistency(video, emb, Some((m, false)))),
        None => {
            let c = consistency(video, emb, None);
            (c, c)
        }
    };
    Ok(Temporal {
        tf: tf.clamp(0.0, 1.0),
        ms: ms.clamp(0.0, 1.0),
        sc: sc.clamp(0.0, 1.0),
        bc: bc.clamp(0.0, 1.0),
    })
}

/// `clip_all · tf · ms · sc · bc`.
pub fn overall_score(clip_all: f64, tf: f64, ms: f64, sc: f64, bc: f64) -> f64 {
    clip_all * tf * ms * sc * bc
}

/// Overall score from named fields; every one must be present.
pub fn overall_from_fields(fields: &std::collections::BTreeMap<String, f64>) -> Result<f64> {
    let get = |k: &str| {
        fields
            .get(k)
            .copied()
            .ok_or_else(|| Error::Missing(format!("metric field {k} is missing")))
    };
    Ok(overall_score(get("clip_all")?, get("tf")?, get("ms")?, get("sc")?, get("bc")?))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleMetrics {
    pub clip_dir: f64,
    pub clip_dir_degenerate: bool,
    pub clip_img: f64,
    pub clip_all: f64,
    pub tf: f64,
    pub ms: f64,
    pub sc: f64,
    pub bc: f64,
    pub overall: f64,
}

/// Metrics of one source/target pair; temporal terms are measured on the target.
pub fn evaluate_run(
    source: &Video,
    target: &Video,
    source_prompt: &str,
    target_prompt: &str,
    emb: &dyn Embedder,
    regions: Option<&RegionMask>,
) -> Result<SampleMetrics> {
    let dir = clip_dir(source, target, source_prompt, target_prompt, emb)?;
    let img = clip_img(source, target, emb)?;
    let t = temporal_metrics(target, regions, emb)?;
    let clip_all = dir.value * img;
    Ok(SampleMetrics {
        clip_dir: dir.value,
        clip_dir_degenerate: dir.degenerate,
        clip_img: img,
        clip_all,
        tf: t.tf,
        ms: t.ms,
        sc: t.sc,
        bc: t.bc,
        overall: overall_score(clip_all, t.tf, t.ms, t.sc, t.bc),
    })
}

/// How batch `clip_all` combines the two similarities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClipAllOrder {
    /// `mean(clip_dir) · mean(clip_img)`.
    #[default]
    ProductOfMeans,
    /// `mean(clip_dir · clip_img)`.
    MeanOfProducts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub clip_dir: f64,
    pub clip_img: f64,
    pub clip_all: f64,
    pub clip_all_mean_of_products: f64,
    pub clip_all_order: ClipAllOrder,
    pub tf: f64,
    pub ms: f64,
    pub sc: f64,
    pub bc: f64,
    pub overall: f64,
    pub degenerate_clip_dir: usize,
    pub samples: Vec<SampleMetrics>,
    pub embedder: String,
    pub temporal_proxy: String,
}

impl MetricReport {
    pub fn from_samples(samples: Vec<SampleMetrics>, order: ClipAllOrder, embedder: String) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Missing("no samples to aggregate".into()));
        }
        let n = samples.len() as f64;
        let mean = |f: fn(&SampleMetrics) -> f64| samples.iter().map(f).sum::<f64>() / n;
        let clip_dir = mean(|s| s.clip_dir);
        let clip_img = mean(|s| s.clip_img);
        let mop = mean(|s| s.clip_all);
        let clip_all = match order {
            ClipAllOrder::ProductOfMeans => clip_dir * clip_img,
            ClipAllOrder::MeanOfProducts => mop,
        };
        let (tf, ms, sc, bc) = (mean(|s| s.tf), mean(|s| s.ms), mean(|s| s.sc), mean(|s| s.bc));
        Ok(Self {
            clip_dir,
            clip_img,
            clip_all,
            clip_all_mean_of_products: mop,
            clip_all_order: order,
            tf,
            ms,
            sc,
            bc,
            overall: overall_score(clip_all, tf, ms, sc, bc),
            degenerate_clip_dir: samples.iter().filter(|s| s.clip_dir_degenerate).count(),
            samples,
            embedder,
            temporal_proxy: TEMPORAL_PROXY_TAG.into(),
        })
    }
}

/// One evaluation input: source and target videos with their prompts.
#[derive(Debug, Clone, Copy)]
pub struct EvalPair<'a> {
    pub source: &'a Video,
    pub target: &'a Video,
    pub source_prompt: &'a str,
    pub target_prompt: &'a str,
    pub regions: Option<&'a RegionMask>,
}

pub fn evaluate_batch(pairs: &[EvalPair<'_>], emb: &dyn Embedder, order: ClipAllOrder) -> Result<MetricReport> {
    use rayon::prelude::*;
    let samples = pairs
        .par_iter()
        .map(|p| evaluate_run(p.source, p.target, p.source_prompt, p.target_prompt, emb, p.regions))
        .collect::<Result<Vec<_>>>()?;
    MetricReport::from_samples(samples, order, emb.tag())
}

/// A published comparison row: similarity columns, temporal columns and overall.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReferenceRow {
    pub task: &'static str,
    pub method: &'static str,
    pub clip_dir: f64,
    pub clip_img: f64,
    pub clip_all: f64,
    pub tf: f64,
    pub ms: f64,
    pub sc: f64,
    pub bc: f64,
    pub overall: f64,
}

const fn row(
    task: &'static str,
    method: &'static str,
    v: [f64; 8],
) -> ReferenceRow {
    ReferenceRow {
        task,
        method,
        clip_dir: v[0],
        clip_img: v[1],
        clip_all: v[2],
        tf: v[3],
        ms: v[4],
        sc: v[5],
        bc: v[6],
        overall: v[7],
    }
}

/// The reference comparison table for object addition and non-rigid editing.
/// "proposed" rows are the injection method of this crate; the suffixed rows
/// are its ablations with non-prominent-layer masks and vital-layer injection.
pub const REFERENCE_TABLE: [ReferenceRow; 14] = [
    row("object-addition", "BIVDiff", [0.0940, 0.7734, 0.2425, 0.8980, 0.9120, 0.8060, 0.9330, 0.1494]),
    row("object-addition", "RAVE", [0.0456, 0.8407, 0.2406, 0.9560, 0.9700, 0.9400, 0.9710, 0.2036]),
    row("object-addition", "CogInv", [0.0262, 0.9421, 0.2491, 0.9790, 0.9870, 0.9420, 0.9510, 0.2156]),
    row("object-addition", "VidToMe", [0.1130, 0.8392, 0.2559, 0.9600, 0.9720, 0.9190, 0.9540, 0.2093]),
    row("object-addition", "CogV2V", [0.1167, 0.9042, 0.2658, 0.9720, 0.9850, 0.9390, 0.9530, 0.2277]),
    row("object-addition", "proposed (non-prominent mask)", [0.0534, 0.9361, 0.2549, 0.9664, 0.9808, 0.9336, 0.9507, 0.2145]),
    row("object-addition", "proposed", [0.1258, 0.9294, 0.2715, 0.9660, 0.9810, 0.9340, 0.9450, 0.2286]),
    row("non-rigid", "BIVDiff", [0.0213, 0.8282, 0.2334, 0.9150, 0.9250, 0.8700, 0.9550, 0.1641]),
    row("non-rigid", "RAVE", [0.0007, 0.8759, 0.2347, 0.9620, 0.9730, 0.9670, 0.9830, 0.2088]),
    row("non-rigid", "CogInv", [-0.0064, 0.9561, 0.2429, 0.9830, 0.9900, 0.9670, 0.9620, 0.2199]),
    row("non-rigid", "VidToMe", [0.0585, 0.8868, 0.2496, 0.9720, 0.9810, 0.9570, 0.9670, 0.2203]),
    row("non-rigid", "CogV2V", [0.0284, 0.9280, 0.2478, 0.9790, 0.9880, 0.9660, 0.9670, 0.2239]),
    row("non-rigid", "proposed (vital layers)", [0.0113, 0.9681, 0.2488, 0.9758, 0.9865, 0.9688, 0.9694, 0.2249]),
    row("non-rigid", "proposed", [0.0821, 0.9015, 0.2572, 0.9750, 0.9850, 0.9540, 0.9570, 0.2255]),
];
