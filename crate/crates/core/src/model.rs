//! Deterministic hookable toy diffusion transformer.
//!
//! Text and visual tokens are concatenated and processed by joint
//! self-attention. Visual queries and keys carry 3D rotary position
//! embeddings; text tokens carry none. Each layer is a pre-norm residual
//! block (attention, then a GELU MLP) so that bypassing a layer forwards the
//! previous layer's output unchanged.
//!
//! The output head predicts a bounded clean-latent estimate `x̂₀ = tanh(·)`,
//! which is converted to a noise prediction for the current noise level:
//! `ε = (z − √ᾱ·x̂₀) / √(1 − ᾱ)`.

use std::sync::Arc;

use ndarray::{s, Array1, Array2, ArrayView2, Axis, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::config::{ModelConfig, Position};
use crate::error::{Error, Result};
use crate::hooks::{AttentionMap, HookPlan, KvPack, LayerHooks, Records};
use crate::rope::{Rope, RopeTable};
use crate::text::{stable_hash, TextEncoder};
use crate::video::LatentVideo;

/// Where in the denoising trajectory a forward pass runs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Step {
    /// Sampler step index, used to key captured records.
    pub index: usize,
    /// Training-scale timestep fed to the timestep embedding.
    pub timestep: f32,
    /// Cumulative signal level ᾱ of the latent this pass sees.
    pub alpha_bar: f32,
}

/// Concatenated text and visual hidden states.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenSequence {
    /// `[text_len + visual_len, model_dim]`, text rows first.
    pub hidden: Array2<f32>,
    pub text_len: usize,
    pub positions: Arc<Vec<Position>>,
}

impl TokenSequence {
    pub fn text_tokens(&self) -> ArrayView2<'_, f32> {
        self.hidden.slice(s![..self.text_len, ..])
    }

    pub fn visual_tokens(&self) -> ArrayView2<'_, f32> {
        self.hidden.slice(s![self.text_len.., ..])
    }
}

/// Result of one attention layer.
#[derive(Debug, Clone)]
pub struct LayerOutput {
    pub tokens: TokenSequence,
    pub kv: Option<KvPack>,
    pub attention: Option<AttentionMap>,
}

#[derive(Debug, Clone)]
struct Layer {
    wq: Array2<f32>,
    wk: Array2<f32>,
    wv: Array2<f32>,
    wo: Array2<f32>,
    w1: Array2<f32>,
    w2: Array2<f32>,
    attn_gain: f32,
    mlp_gain: f32,
    rope: bool,
}

#[derive(Debug, Clone)]
pub struct Model {
    config: ModelConfig,
    rope: Rope,
    rope_table: RopeTable,
    positions: Arc<Vec<Position>>,
    text: TextEncoder,
    w_in: Array2<f32>,
    w_time: Array2<f32>,
    layers: Vec<Layer>,
    w_out: Array2<f32>,
}

const LN_EPS: f32 = 1e-5;

fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize, std: f32) -> Array2<f32> {
    let normal = Normal::new(0.0f32, std).expect("positive std");
    Array2::from_shape_simple_fn((rows, cols), || normal.sample(rng))
}

fn layer_norm(x: ArrayView2<f32>) -> Array2<f32> {
    let mut out = x.to_owned();
    let d = x.ncols() as f32;
    for mut row in out.axis_iter_mut(Axis(0)) {
        let mean = row.sum() / d;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f32>() / d;
        let inv = 1.0 / (var + LN_EPS).sqrt();
        row.mapv_inplace(|v| (v - mean) * inv);
    }
    out
}

fn gelu(x: f32) -> f32 {
    const C: f32 = 0.797_884_6; // sqrt(2/pi)
    0.5 * x * (1.0 + (C * (x + 0.044_715 * x * x * x)).tanh())
}

/// Row-wise softmax with max subtraction. Rows that are entirely `-inf` are
/// never produced by the model (text keys are always visible).
fn softmax_rows(logits: &mut Array2<f32>) {
    for mut row in logits.axis_iter_mut(Axis(0)) {
        let max = row.fold(f32::NEG_INFINITY, |m, &v| m.max(v));
        let mut sum = 0.0f32;
        row.mapv_inplace(|v| {
            let e = (v - max).exp();
            sum += e;
            e
        });
        let inv = 1.0 / sum;
        row.mapv_inplace(|v| v * inv);
    }
}

fn timestep_embedding(timestep: f32, dim: usize) -> Array1<f32> {
    let half = dim / 2;
    let mut out = Array1::zeros(dim);
    for k in 0..half {
        let freq = (-(10_000f32.ln()) * k as f32 / half as f32).exp();
        out[k] = (timestep * freq).sin();
        out[half + k] = (timestep * freq).cos();
    }
    out
}

impl Model {
    /// Builds the weight set from `config.init_seed`. Equal configs give
    /// bit-identical weights.
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let d = config.model_dim();
        let c = config.channel_dim;
        let mut rng = ChaCha8Rng::seed_from_u64(config.init_seed);
        let w_in = gaussian(&mut rng, c, d, 1.0 / (c as f32).sqrt());
        let w_time = gaussian(&mut rng, d, d, 1.0 / (d as f32).sqrt());
        let std = 1.0 / (d as f32).sqrt();
        let layers = (0..config.num_layers)
            .map(|l| Layer {
                wq: gaussian(&mut rng, d, d, 2.0 * std),
                wk: gaussian(&mut rng, d, d, 2.0 * std),
                wv: gaussian(&mut rng, d, d, std),
                wo: gaussian(&mut rng, d, d, std),
                w1: gaussian(&mut rng, d, 2 * d, std),
                w2: gaussian(&mut rng, 2 * d, d, 1.0 / (2.0 * d as f32).sqrt()),
                attn_gain: rng.random_range(0.5f32..1.5),
                mlp_gain: rng.random_range(0.25f32..0.75),
                rope: !config.planted_rope_free.contains(&l),
            })
            .collect();
        let w_out = gaussian(&mut rng, d, c, std);
        let rope = Rope::new(config.head_dim, config.rope_base)?;
        let positions = Arc::new(config.grid().positions());
        let rope_table = rope.table(&positions);
        let text = TextEncoder::new(config.init_seed, d, config.text_len);
        Ok(Self {
            config,
            rope,
            rope_table,
            positions,
            text,
            w_in,
            w_time,
            layers,
            w_out,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn num_layers(&self) -> usize {
        self.config.num_layers
    }

    pub fn rope(&self) -> &Rope {
        &self.rope
    }

    /// Whether layer `l` applies rotary embeddings at all.
    pub fn layer_uses_rope(&self, l: usize) -> bool {
        self.layers.get(l).is_some_and(|layer| layer.rope)
    }

    /// Stable fingerprint of every weight.
    pub fn checksum(&self) -> u64 {
        let mut bytes = Vec::new();
        let mut push = |a: &Array2<f32>| {
            for v in a.iter() {
                bytes.extend_from_slice(&v.to_bits().to_le_bytes());
            }
        };
        push(&self.w_in);
        push(&self.w_time);
        for l in &self.layers {
            for w in [&l.wq, &l.wk, &l.wv, &l.wo, &l.w1, &l.w2] {
                push(w);
            }
        }
        push(&self.w_out);
        for l in &self.layers {
            bytes.extend_from_slice(&l.attn_gain.to_bits().to_le_bytes());
            bytes.extend_from_slice(&l.mlp_gain.to_bits().to_le_bytes());
            bytes.push(l.rope as u8);
        }
        stable_hash(&bytes)
    }

    pub fn text_encoder(&self) -> &TextEncoder {
        &self.text
    }

    /// `[text_len × model_dim]` prompt embedding.
    pub fn encode_prompt(&self, prompt: &str) -> Array2<f32> {
        self.text.encode(prompt)
    }

    /// Input projection: latent cells plus timestep embedding, prepended by the
    /// prompt embedding.
    pub fn embed(
        &self,
        latents: &LatentVideo,
        prompt_embed: ArrayView2<f32>,
        step: &Step,
    ) -> Result<TokenSequence> {
        let d = self.config.model_dim();
        if latents.grid() != self.config.grid() {
            return Err(Error::shape(format!(
                "latent grid {:?} does not match model grid {:?}",
                latents.grid(),
                self.config.grid()
            )));
        }
        if prompt_embed.dim() != (self.config.text_len, d) {
            return Err(Error::shape(format!(
                "prompt embedding {:?}, expected {:?}",
                prompt_embed.dim(),
                (self.config.text_len, d)
            )));
        }
        let temb = timestep_embedding(step.timestep, d).dot(&self.w_time);
        let mut visual = latents.tokens().dot(&self.w_in);
        visual += &temb;
        let mut hidden = Array2::zeros((self.config.total_tokens(), d));
        hidden
            .slice_mut(s![..self.config.text_len, ..])
            .assign(&prompt_embed);
        hidden
            .slice_mut(s![self.config.text_len.., ..])
            .assign(&visual);
        Ok(TokenSequence {
            hidden,
            text_len: self.config.text_len,
            positions: Arc::clone(&self.positions),
        })
    }

    /// Joint text/visual self-attention block `layer` with its hooks applied.
    pub fn attention_forward(
        &self,
        tokens: &TokenSequence,
        layer: usize,
        hooks: &HookPlan,
        timestep: usize,
    ) -> Result<LayerOutput> {
        let lw = self.layers.get(layer).ok_or_else(|| {
            Error::config(format!(
                "layer {layer} out of range for {} layers",
                self.config.num_layers
            ))
        })?;
        hooks.validate(layer)?;
        if hooks.bypass {
            return Ok(LayerOutput {
                tokens: tokens.clone(),
                kv: None,
                attention: None,
            });
        }
        let cfg = &self.config;
        let (heads, hd, text_len) = (cfg.num_heads, cfg.head_dim, cfg.text_len);
        let total = cfg.total_tokens();
        let vis = cfg.visual_len();

        let normed = layer_norm(tokens.hidden.view());
        let mut q = normed.dot(&lw.wq);
        let mut k = normed.dot(&lw.wk);
        let mut v = normed.dot(&lw.wv);
        if lw.rope {
            self.rope
                .apply_rows(q.slice_mut(s![text_len.., ..]), heads, &self.rope_table);
            if !hooks.rope_drop_key {
                self.rope
                    .apply_rows(k.slice_mut(s![text_len.., ..]), heads, &self.rope_table);
            }
        }

        let kv = hooks.capture_kv.then(|| KvPack {
            keys: k.slice(s![text_len.., ..]).to_owned(),
            values: v.slice(s![text_len.., ..]).to_owned(),
            num_heads: heads,
            layer,
            timestep,
        });

        if let Some(inj) = &hooks.inject_kv {
            let expected = [vis, heads, hd];
            let actual = inj.source.shape();
            if actual != expected || inj.source.values.dim() != inj.source.keys.dim() {
                return Err(Error::Injection {
                    layer,
                    expected: expected.to_vec(),
                    actual: actual.to_vec(),
                });
            }
            let mut k_vis = k.slice_mut(s![text_len.., ..]);
            let mut v_vis = v.slice_mut(s![text_len.., ..]);
            match &inj.mask {
                None => {
                    k_vis.assign(&inj.source.keys);
                    v_vis.assign(&inj.source.values);
                }
                Some(mask) => {
                    if mask.len() != vis {
                        return Err(Error::Injection {
                            layer,
                            expected: vec![vis],
                            actual: vec![mask.len()],
                        });
                    }
                    mix_rows(k_vis.view_mut(), inj.source.keys.view(), mask);
                    mix_rows(v_vis.view_mut(), inj.source.values.view(), mask);
                }
            }
        }

        let scale = 1.0 / (hd as f32).sqrt();
        let mut attn_out = Array2::<f32>::zeros((total, heads * hd));
        let mut avg = hooks
            .capture_attention
            .then(|| Array2::<f32>::zeros((total, total)));
        for h in 0..heads {
            let cols = s![.., h * hd..(h + 1) * hd];
            let mut logits = q.slice(cols).dot(&k.slice(cols).t());
            logits.mapv_inplace(|x| x * scale);
            if hooks.block_text_to_visual {
                logits
                    .slice_mut(s![..text_len, text_len..])
                    .fill(f32::NEG_INFINITY);
            }
            softmax_rows(&mut logits);
            if let Some(a) = avg.as_mut() {
                *a += &logits;
            }
            attn_out.slice_mut(cols).assign(&logits.dot(&v.slice(cols)));
        }

        let mut hidden = tokens.hidden.clone();
        let proj = attn_out.dot(&lw.wo);
        hidden.scaled_add(lw.attn_gain, &proj);
        let mut mid = layer_norm(hidden.view()).dot(&lw.w1);
        mid.mapv_inplace(gelu);
        hidden.scaled_add(lw.mlp_gain, &mid.dot(&lw.w2));

        let attention = avg.map(|mut a| {
            a.mapv_inplace(|x| x / heads as f32);
            AttentionMap {
                weights: a,
                text_len,
                layer,
                timestep,
            }
        });
        Ok(LayerOutput {
            tokens: TokenSequence {
                hidden,
                text_len,
                positions: Arc::clone(&tokens.positions),
            },
            kv,
            attention,
        })
    }

    /// Clean-latent estimate from final visual hidden states.
    fn head(&self, visual: ArrayView2<f32>) -> Array2<f32> {
        let mut x0 = layer_norm(visual).dot(&self.w_out);
        x0.mapv_inplace(f32::tanh);
        x0
    }

    /// One denoiser evaluation: all layers in order with their hooks.
    /// Returns the noise prediction and everything the hooks captured.
    pub fn forward(
        &self,
        latents: &LatentVideo,
        prompt_embed: ArrayView2<f32>,
        step: &Step,
        hooks: &LayerHooks,
    ) -> Result<(LatentVideo, Records)> {
        if let Some((&l, _)) = hooks.range(self.config.num_layers..).next() {
            return Err(Error::config(format!(
                "hook plan references layer {l} but the model has {} layers",
                self.config.num_layers
            )));
        }
        if !(step.alpha_bar > 0.0 && step.alpha_bar < 1.0) {
            return Err(Error::config(format!(
                "model evaluated at alpha_bar {} outside (0, 1)",
                step.alpha_bar
            )));
        }
        let mut tokens = self.embed(latents, prompt_embed, step)?;
        let mut records = Records::default();
        let idle = HookPlan::default();
        for l in 0..self.config.num_layers {
            let plan = hooks.get(&l).unwrap_or(&idle);
            let out = self.attention_forward(&tokens, l, plan, step.index)?;
            if let Some(kv) = out.kv {
                records.kv.insert((l, step.index), kv);
            }
            if let Some(a) = out.attention {
                records.attention.insert((l, step.index), a);
            }
            tokens = out.tokens;
        }
        let x0 = self.head(tokens.visual_tokens());
        let eps = x0_to_eps(latents.tokens(), x0.view(), step.alpha_bar);
        Ok((LatentVideo::from_tokens(latents.grid(), eps)?, records))
    }
}

fn x0_to_eps(z: ArrayView2<f32>, x0: ArrayView2<f32>, alpha_bar: f32) -> Array2<f32> {
    let sa = alpha_bar.sqrt();
    let inv = 1.0 / (1.0 - alpha_bar).sqrt();
    Zip::from(z).and(x0).map_collect(|&z, &x| (z - sa * x) * inv)
}

/// `own ← m·own + (1−m)·source`, row-wise.
fn mix_rows(mut own: ndarray::ArrayViewMut2<f32>, source: ArrayView2<f32>, mask: &[f32]) {
    for ((mut row, src), &m) in own
        .axis_iter_mut(Axis(0))
        .zip(source.axis_iter(Axis(0)))
        .zip(mask)
    {
        if m == 0.0 {
            row.assign(&src);
        } else if m != 1.0 {
            Zip::from(&mut row)
                .and(&src)
                .for_each(|o, &s| *o = m * *o + (1.0 - m) * s);
        }
    }
}
