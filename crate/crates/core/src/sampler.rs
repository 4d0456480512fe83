//! Denoising loops: single-stream sampling, paired source/target sampling with
//! key/value coupling, and DDIM inversion.

use std::ops::Range;
use std::sync::Arc;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::decoder::Decoder;
use crate::error::{Error, Result};
use crate::hooks::{HookPlan, LayerHooks, Records};
use crate::model::Model;
use crate::schedule::DenoiseSchedule;
use crate::video::{LatentVideo, Video};

/// Minimum invert→re-sample pixel PSNR measured by
/// `examples/calibrate_inversion.rs` on the first ten probe prompts (seed =
/// prompt index) with the default model, decoder and 50-step schedule.
/// Regression runs must stay within 0.5 dB of it.
pub const INVERSION_PSNR_FLOOR_DB: f64 = 24.982;

/// Output of one sampling run.
#[derive(Debug, Clone)]
pub struct SampleOutput {
    pub video: Video,
    pub latent: LatentVideo,
    pub records: Records,
}

/// Output of a paired run.
#[derive(Debug, Clone)]
pub struct PairedOutput {
    pub source: Video,
    pub target: Video,
    pub source_latent: LatentVideo,
    pub target_latent: LatentVideo,
    /// Captures from the target stream that the coupling did not consume.
    pub records: Records,
    /// L2 distance between the source and target latents after each step.
    pub divergence: Vec<f64>,
}

/// Couples the target stream of a paired run to its source stream.
///
/// At each step the source pass runs first with [`source_hooks`]; whatever it
/// captured is handed to [`target_hooks`], which builds the target plan.
///
/// [`source_hooks`]: Coupling::source_hooks
/// [`target_hooks`]: Coupling::target_hooks
pub trait Coupling {
    fn validate(&self, _total_steps: usize) -> Result<()> {
        Ok(())
    }

    fn source_hooks(&mut self, step: usize) -> Result<LayerHooks>;

    fn target_hooks(&mut self, step: usize, source: &mut Records) -> Result<LayerHooks>;

    /// Sees the target captures of `step`. Records left in `target` are kept
    /// in [`PairedOutput::records`].
    fn after_target(&mut self, _step: usize, _target: &mut Records) -> Result<()> {
        Ok(())
    }
}

/// Two independent streams.
#[derive(Debug, Default, Clone, Copy)]
pub struct NoCoupling;

impl Coupling for NoCoupling {
    fn source_hooks(&mut self, _step: usize) -> Result<LayerHooks> {
        Ok(LayerHooks::new())
    }

    fn target_hooks(&mut self, _step: usize, _source: &mut Records) -> Result<LayerHooks> {
        Ok(LayerHooks::new())
    }
}

/// Source keys/values injected into the target at fixed layers over a step
/// window, optionally mask-blended and with text→visual attention blocked in
/// the injected target layers.
#[derive(Debug, Clone)]
pub struct KvInjection {
    pub layers: Vec<usize>,
    pub steps: Range<usize>,
    pub mask: Option<Arc<Vec<f32>>>,
    pub block_text_to_visual: bool,
}

impl Coupling for KvInjection {
    fn validate(&self, total_steps: usize) -> Result<()> {
        if self.steps.end > total_steps || self.steps.start > self.steps.end {
            return Err(Error::config(format!(
                "injection window {:?} does not fit in {total_steps} steps",
                self.steps
            )));
        }
        Ok(())
    }

    fn source_hooks(&mut self, step: usize) -> Result<LayerHooks> {
        Ok(if self.steps.contains(&step) {
            self.layers.iter().map(|&l| (l, HookPlan::capture_kv())).collect()
        } else {
            LayerHooks::new()
        })
    }

    fn target_hooks(&mut self, step: usize, source: &mut Records) -> Result<LayerHooks> {
        if !self.steps.contains(&step) {
            return Ok(LayerHooks::new());
        }
        inject_from(source, &self.layers, step, self.mask.clone(), self.block_text_to_visual)
    }
}

/// Builds target plans that inject each layer's captured source pack.
pub fn inject_from(
    source: &mut Records,
    layers: &[usize],
    step: usize,
    mask: Option<Arc<Vec<f32>>>,
    block_text_to_visual: bool,
) -> Result<LayerHooks> {
    layers
        .iter()
        .map(|&l| {
            let pack = source.take_kv(l, step).ok_or_else(|| {
                Error::Missing(format!("no source key/value capture for layer {l} at step {step}"))
            })?;
            let mut plan = HookPlan::inject(pack, mask.clone());
            plan.block_text_to_visual = block_text_to_visual;
            Ok((l, plan))
        })
        .collect()
}

/// Empty hook plans at every step.
pub fn no_hooks(_step: usize) -> LayerHooks {
    LayerHooks::new()
}

#[derive(Debug, Clone, Copy)]
pub struct Sampler<'a> {
    pub model: &'a Model,
    pub decoder: &'a Decoder,
    pub schedule: &'a DenoiseSchedule,
}

impl<'a> Sampler<'a> {
    pub fn new(model: &'a Model, decoder: &'a Decoder, schedule: &'a DenoiseSchedule) -> Result<Self> {
        if decoder.grid() != model.config().grid() {
            return Err(Error::config(format!(
                "decoder grid {:?} does not match model grid {:?}",
                decoder.grid(),
                model.config().grid()
            )));
        }
        Ok(Self {
            model,
            decoder,
            schedule,
        })
    }

    /// Seeded unit Gaussian starting latent.
    pub fn initial_noise(&self, seed: u64) -> LatentVideo {
        let grid = self.model.config().grid();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..grid.len()).map(|_| StandardNormal.sample(&mut rng)).collect();
        LatentVideo::new(grid, data).expect("grid-sized noise")
    }

    /// One DDIM update from level `i` to level `i + 1`.
    pub fn denoise_step(
        &self,
        z: &LatentVideo,
        prompt_embed: &Array2<f32>,
        i: usize,
        hooks: &LayerHooks,
    ) -> Result<(LatentVideo, Records)> {
        let step = self.schedule.step(i);
        let (eps, records) = self.model.forward(z, prompt_embed.view(), &step, hooks)?;
        let next = ddim_move(z, &eps, step.alpha_bar, self.schedule.level(i + 1));
        if !next.is_finite() {
            return Err(Error::Numerical {
                step: i,
                what: "non-finite latent after denoising update".into(),
            });
        }
        Ok((next, records))
    }

    pub fn sample(
        &self,
        prompt: &str,
        seed: u64,
        hooks: &dyn Fn(usize) -> LayerHooks,
    ) -> Result<SampleOutput> {
        self.sample_from(self.initial_noise(seed), prompt, hooks)
    }

    pub fn sample_from(
        &self,
        z0: LatentVideo,
        prompt: &str,
        hooks: &dyn Fn(usize) -> LayerHooks,
    ) -> Result<SampleOutput> {
        let embed = self.model.encode_prompt(prompt);
        let mut z = z0;
        let mut records = Records::default();
        for i in 0..self.schedule.steps() {
            let (next, rec) = self.denoise_step(&z, &embed, i, &hooks(i))?;
            records.extend(rec);
            z = next;
        }
        Ok(SampleOutput {
            video: self.decoder.decode(&z)?,
            latent: z,
            records,
        })
    }

    /// Source and target streams in lockstep from the same seeded noise.
    pub fn paired_sample(
        &self,
        source_prompt: &str,
        target_prompt: &str,
        seed: u64,
        coupling: &mut dyn Coupling,
    ) -> Result<PairedOutput> {
        self.paired_sample_from(self.initial_noise(seed), source_prompt, target_prompt, coupling)
    }

    pub fn paired_sample_from(
        &self,
        z0: LatentVideo,
        source_prompt: &str,
        target_prompt: &str,
        coupling: &mut dyn Coupling,
    ) -> Result<PairedOutput> {
        coupling.validate(self.schedule.steps())?;
        let src_embed = self.model.encode_prompt(source_prompt);
        let trg_embed = self.model.encode_prompt(target_prompt);
        let mut z_src = z0.clone();
        let mut z_trg = z0;
        let mut records = Records::default();
        let mut divergence = Vec::with_capacity(self.schedule.steps());
        for i in 0..self.schedule.steps() {
            let src_hooks = coupling.source_hooks(i)?;
            let (next_src, mut src_rec) = self.denoise_step(&z_src, &src_embed, i, &src_hooks)?;
            let trg_hooks = coupling.target_hooks(i, &mut src_rec)?;
            let (next_trg, mut trg_rec) = self.denoise_step(&z_trg, &trg_embed, i, &trg_hooks)?;
            coupling.after_target(i, &mut trg_rec)?;
            records.extend(trg_rec);
            z_src = next_src;
            z_trg = next_trg;
            divergence.push(z_src.l2_distance(&z_trg));
        }
        Ok(PairedOutput {
            source: self.decoder.decode(&z_src)?,
            target: self.decoder.decode(&z_trg)?,
            source_latent: z_src,
            target_latent: z_trg,
            records,
            divergence,
        })
    }

    /// Deterministic reverse DDIM: walks a clean latent back to an
    /// initial-noise estimate using the model's noise predictions.
    pub fn ddim_invert(&self, clean: &LatentVideo, prompt: &str) -> Result<LatentVideo> {
        if clean.grid() != self.model.config().grid() {
            return Err(Error::config(format!(
                "cannot invert latent grid {:?} with model grid {:?}",
                clean.grid(),
                self.model.config().grid()
            )));
        }
        let embed = self.model.encode_prompt(prompt);
        let idle = LayerHooks::new();
        let mut z = clean.clone();
        for i in (0..self.schedule.steps()).rev() {
            let step = self.schedule.step(i);
            let (eps, _) = self.model.forward(&z, embed.view(), &step, &idle)?;
            z = ddim_move(&z, &eps, self.schedule.level(i + 1), step.alpha_bar);
            if !z.is_finite() {
                return Err(Error::Numerical {
                    step: i,
                    what: "non-finite latent during inversion".into(),
                });
            }
        }
        Ok(z)
    }

    /// Encodes a pixel video and inverts it.
    pub fn invert_video(&self, video: &Video, prompt: &str) -> Result<LatentVideo> {
        let clean = self.decoder.encode(video)?;
        self.ddim_invert(&clean, prompt)
    }
}

/// Moves a latent at level `from` to level `to` along the predicted noise:
/// `x̂₀ = (z − √(1−ᾱ_from)·ε)/√ᾱ_from`, `z' = √ᾱ_to·x̂₀ + √(1−ᾱ_to)·ε`.
fn ddim_move(z: &LatentVideo, eps: &LatentVideo, from: f32, to: f32) -> LatentVideo {
    let (sa_from, sn_from) = (from.sqrt(), (1.0 - from).sqrt());
    let (sa_to, sn_to) = (to.sqrt(), (1.0 - to).sqrt());
    let data = z
        .data()
        .iter()
        .zip(eps.data())
        .map(|(&z, &e)| {
            let x0 = (z - sn_from * e) / sa_from;
            sa_to * x0 + sn_to * e
        })
        .collect();
    LatentVideo::new(z.grid(), data).expect("same grid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ModelConfig;
    use crate::decoder::DecoderConfig;
    use crate::schedule::ScheduleConfig;

    struct Fixture {
        model: Model,
        decoder: Decoder,
        schedule: DenoiseSchedule,
    }

    impl Fixture {
        fn new(steps: usize) -> Self {
            let cfg = ModelConfig {
                num_layers: 3,
                num_heads: 2,
                head_dim: 8,
                text_len: 6,
                latent_frames: 3,
                latent_height: 4,
                latent_width: 4,
                ..Default::default()
            };
            let model = Model::new(cfg).unwrap();
            let decoder = Decoder::new(model.config().grid(), DecoderConfig::default()).unwrap();
            let schedule = DenoiseSchedule::new(ScheduleConfig {
                steps,
                ..Default::default()
            })
            .unwrap();
            Self {
                model,
                decoder,
                schedule,
            }
        }

        fn sampler(&self) -> Sampler<'_> {
            Sampler::new(&self.model, &self.decoder, &self.schedule).unwrap()
        }
    }

    #[test]
    fn sampling_is_deterministic_and_seeded() {
        let fx = Fixture::new(8);
        let s = fx.sampler();
        let a = s.sample("a red fox in snow", 1, &no_hooks).unwrap();
        let b = s.sample("a red fox in snow", 1, &no_hooks).unwrap();
        assert_eq!(a.video, b.video);
        let c = s.sample("a red fox in snow", 2, &no_hooks).unwrap();
        assert!(a.latent.l2_distance(&c.latent) > 0.0);
    }

    #[test]
    fn capture_only_hooks_leave_video_unchanged() {
        let fx = Fixture::new(6);
        let s = fx.sampler();
        let plain = s.sample("a boat", 3, &no_hooks).unwrap();
        let captured = s
            .sample("a boat", 3, &|_| {
                [
                    (0, HookPlan::capture_kv()),
                    (2, HookPlan::capture_attention()),
                ]
                .into_iter()
                .collect()
            })
            .unwrap();
        assert_eq!(plain.video, captured.video);
        assert_eq!(captured.records.kv.len(), 6);
        assert_eq!(captured.records.attention.len(), 6);
    }

    #[test]
    fn uncoupled_pair_equals_independent_samples() {
        let fx = Fixture::new(6);
        let s = fx.sampler();
        let pair = s
            .paired_sample("a boat", "a red boat", 5, &mut NoCoupling)
            .unwrap();
        assert_eq!(pair.source, s.sample("a boat", 5, &no_hooks).unwrap().video);
        assert_eq!(pair.target, s.sample("a red boat", 5, &no_hooks).unwrap().video);
    }

    #[test]
    fn identical_prompts_with_full_injection_match() {
        let fx = Fixture::new(6);
        let s = fx.sampler();
        let mut inj = KvInjection {
            layers: vec![0, 1, 2],
            steps: 0..6,
            mask: None,
            block_text_to_visual: false,
        };
        let pair = s.paired_sample("a boat", "a boat", 5, &mut inj).unwrap();
        assert_eq!(pair.source, pair.target);
        assert!(pair.divergence.iter().all(|&d| d == 0.0));
    }

    #[test]
    fn window_past_end_is_config_error() {
        let fx = Fixture::new(4);
        let s = fx.sampler();
        let mut inj = KvInjection {
            layers: vec![0],
            steps: 0..5,
            mask: None,
            block_text_to_visual: false,
        };
        assert!(matches!(
            s.paired_sample("a", "b", 0, &mut inj),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn inverting_zero_latent_stays_finite() {
        let fx = Fixture::new(10);
        let s = fx.sampler();
        let z = s
            .ddim_invert(&LatentVideo::zeros(fx.model.config().grid()), "a boat")
            .unwrap();
        assert!(z.is_finite());
    }

    #[test]
    fn inversion_rejects_wrong_grid() {
        let fx = Fixture::new(4);
        let s = fx.sampler();
        let other = LatentVideo::zeros(crate::config::LatentGrid::new(1, 1, 1, 4));
        assert!(matches!(s.ddim_invert(&other, "x"), Err(Error::Config(_))));
    }
}
