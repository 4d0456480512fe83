//! Paired source/target editing runs.

use std::collections::BTreeMap;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::edit::delta::{find_delta_tokens, DeltaTokens};
use crate::edit::mask::{accumulate_delta_attention, preprocess_mask, EditMask, MaskPipelineConfig};
use crate::error::{Error, Result};
use crate::hooks::{AttentionMap, HookPlan, LayerHooks, Records};
use crate::sampler::{inject_from, Coupling, KvInjection, Sampler};
use crate::video::{LatentVideo, Video};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EditMode {
    ObjectAddition,
    NonRigid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InjectionPlan {
    pub mode: EditMode,
    pub vital_layers: Vec<usize>,
    pub non_vital_layers: Vec<usize>,
    /// Layer whose attention yields the object mask.
    pub prominent_layer: Option<usize>,
    /// End of full injection (object addition).
    pub t_i: usize,
    /// End of all injection.
    pub t_e: usize,
    /// Block text→visual attention in injected target layers (object addition).
    pub preserve_prompt: bool,
    /// Non-rigid ablation: inject into the vital layers instead.
    pub non_rigid_use_vital: bool,
    pub mask: MaskPipelineConfig,
}

impl InjectionPlan {
    pub fn object_addition(vital_layers: Vec<usize>, prominent_layer: usize) -> Self {
        Self {
            mode: EditMode::ObjectAddition,
            vital_layers,
            non_vital_layers: vec![],
            prominent_layer: Some(prominent_layer),
            t_i: 10,
            t_e: 25,
            preserve_prompt: true,
            non_rigid_use_vital: false,
            mask: MaskPipelineConfig::default(),
        }
    }

    pub fn non_rigid(non_vital_layers: Vec<usize>) -> Self {
        Self {
            mode: EditMode::NonRigid,
            vital_layers: vec![],
            non_vital_layers,
            prominent_layer: None,
            t_i: 10,
            t_e: 25,
            preserve_prompt: false,
            non_rigid_use_vital: false,
            mask: MaskPipelineConfig::default(),
        }
    }

    /// Layers receiving source keys/values in this plan's mode.
    pub fn injected_layers(&self) -> &[usize] {
        match self.mode {
            EditMode::ObjectAddition => &self.vital_layers,
            EditMode::NonRigid if self.non_rigid_use_vital => &self.vital_layers,
            EditMode::NonRigid => &self.non_vital_layers,
        }
    }

    pub fn validate(&self, total_steps: usize, num_layers: usize) -> Result<()> {
        if self.t_e > total_steps {
            return Err(Error::config(format!("T_e = {} exceeds T = {total_steps}", self.t_e)));
        }
        let layers = self.injected_layers();
        if layers.is_empty() {
            return Err(Error::config(format!("{:?} plan injects into no layers", self.mode)));
        }
        if let Some(&l) = layers.iter().chain(&self.prominent_layer).find(|&&l| l >= num_layers) {
            return Err(Error::config(format!("layer {l} out of range for {num_layers} layers")));
        }
        if self.mode == EditMode::ObjectAddition {
            self.mask.validate()?;
            if self.t_i == 0 || self.t_i > self.t_e {
                return Err(Error::config(format!(
                    "need 0 < T_i ≤ T_e, got T_i = {}, T_e = {}",
                    self.t_i, self.t_e
                )));
            }
            if self.t_i < self.mask.window {
                return Err(Error::config(format!(
                    "T_i = {} leaves no room for a {}-step mask window",
                    self.t_i, self.mask.window
                )));
            }
        }
        Ok(())
    }

    /// Steps whose attention is accumulated into the mask.
    pub fn window(&self) -> Range<usize> {
        self.t_i.saturating_sub(self.mask.window)..self.t_i
    }
}

/// Object addition as a paired-run coupling.
///
/// Steps `[0, T_i)` inject source keys/values into the vital layers and
/// capture target attention at the prominent layer over the mask window; the
/// mask is extracted after step `T_i − 1`. Steps `[T_i, T_e)` blend source and
/// target keys/values through the mask. Later steps run free.
#[derive(Debug, Clone)]
pub struct ObjectAddition {
    plan: InjectionPlan,
    delta: DeltaTokens,
    dims: (usize, usize, usize),
    mask_override: Option<EditMask>,
    attention: BTreeMap<(usize, usize), AttentionMap>,
    mask: Option<EditMask>,
    warnings: Vec<String>,
}

impl ObjectAddition {
    /// `mask_override` skips extraction and uses the given mask instead.
    pub fn new(
        plan: InjectionPlan,
        delta: DeltaTokens,
        dims: (usize, usize, usize),
        mask_override: Option<EditMask>,
    ) -> Result<Self> {
        if plan.mode != EditMode::ObjectAddition {
            return Err(Error::config("object addition needs an object-addition plan"));
        }
        match &mask_override {
            Some(m) if m.dims != dims => {
                return Err(Error::shape(format!("mask {:?} for grid {dims:?}", m.dims)));
            }
            Some(_) => {}
            None => {
                if plan.prominent_layer.is_none() {
                    return Err(Error::config("object addition needs a prominent layer"));
                }
                delta.require_non_empty()?;
            }
        }
        Ok(Self {
            plan,
            delta,
            dims,
            mask_override,
            attention: BTreeMap::new(),
            mask: None,
            warnings: vec![],
        })
    }

    pub fn mask(&self) -> Option<&EditMask> {
        self.mask.as_ref()
    }

    fn capture_step(&self, step: usize) -> bool {
        self.mask_override.is_none() && self.plan.window().contains(&step)
    }

    fn extract(&mut self) -> Result<EditMask> {
        if let Some(m) = &self.mask_override {
            return Ok(m.clone());
        }
        let layer = self.plan.prominent_layer.expect("checked in new");
        let steps: Vec<usize> = self.plan.window().collect();
        let raw = accumulate_delta_attention(&self.attention, layer, &self.delta.indices, &steps, self.dims)?;
        if raw.degenerate {
            self.warnings
                .push("delta attention was constant; mask is empty".to_string());
        }
        let mut mask = preprocess_mask(&raw, &self.plan.mask)?;
        if mask.is_blank() {
            self.warnings
                .push("extracted mask is empty; target follows the source".to_string());
        }
        mask.layer = Some(layer);
        mask.steps = steps;
        Ok(mask)
    }
}

impl Coupling for ObjectAddition {
    fn validate(&self, total_steps: usize) -> Result<()> {
        if self.plan.t_e > total_steps {
            return Err(Error::config(format!("T_e = {} exceeds T = {total_steps}", self.plan.t_e)));
        }
        Ok(())
    }

    fn source_hooks(&mut self, step: usize) -> Result<LayerHooks> {
        if step >= self.plan.t_e {
            return Ok(LayerHooks::new());
        }
        Ok(self
            .plan
            .vital_layers
            .iter()
            .map(|&l| (l, HookPlan::capture_kv()))
            .collect())
    }

    fn target_hooks(&mut self, step: usize, source: &mut Records) -> Result<LayerHooks> {
        if step >= self.plan.t_e {
            return Ok(LayerHooks::new());
        }
        let weights = if step < self.plan.t_i {
            None
        } else {
            let mask = self
                .mask
                .as_ref()
                .ok_or_else(|| Error::Missing(format!("no edit mask at step {step}")))?;
            Some(mask.weights())
        };
        let mut hooks = inject_from(
            source,
            &self.plan.vital_layers,
            step,
            weights,
            self.plan.preserve_prompt,
        )?;
        if self.capture_step(step) {
            let layer = self.plan.prominent_layer.expect("checked in new");
            hooks.entry(layer).or_default().capture_attention = true;
        }
        Ok(hooks)
    }

    fn after_target(&mut self, step: usize, target: &mut Records) -> Result<()> {
        if self.capture_step(step) {
            let layer = self.plan.prominent_layer.expect("checked in new");
            let map = target.attention.remove(&(layer, step)).ok_or_else(|| {
                Error::Missing(format!("no attention capture for layer {layer} at step {step}"))
            })?;
            self.attention.insert((layer, step), map);
        }
        if step + 1 == self.plan.t_i {
            self.mask = Some(self.extract()?);
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct EditOutput {
    pub source: Video,
    pub target: Video,
    pub source_latent: LatentVideo,
    pub target_latent: LatentVideo,
    pub mask: Option<EditMask>,
    pub delta: DeltaTokens,
    /// Prominent-layer attention captured for the mask, keyed by (layer, step).
    pub attention: BTreeMap<(usize, usize), AttentionMap>,
    /// Latent L2 distance between the streams after each step.
    pub divergence: Vec<f64>,
    pub warnings: Vec<String>,
}

fn grid_dims(sampler: &Sampler<'_>) -> (usize, usize, usize) {
    let g = sampler.model.config().grid();
    (g.frames, g.height, g.width)
}

/// Object addition from seeded noise.
pub fn object_addition(
    sampler: &Sampler<'_>,
    source_prompt: &str,
    target_prompt: &str,
    seed: u64,
    plan: &InjectionPlan,
    mask_override: Option<EditMask>,
) -> Result<EditOutput> {
    object_addition_from(sampler, sampler.initial_noise(seed), source_prompt, target_prompt, plan, mask_override)
}

pub fn object_addition_from(
    sampler: &Sampler<'_>,
    z0: LatentVideo,
    source_prompt: &str,
    target_prompt: &str,
    plan: &InjectionPlan,
    mask_override: Option<EditMask>,
) -> Result<EditOutput> {
    plan.validate(sampler.schedule.steps(), sampler.model.num_layers())?;
    let text_len = sampler.model.config().text_len;
    let full = find_delta_tokens(source_prompt, target_prompt)?;
    let delta = full.truncated(text_len);
    let mut warnings = vec![];
    if delta.indices.len() < full.indices.len() {
        warnings.push(format!(
            "{} delta tokens lie beyond the {text_len}-token text window",
            full.indices.len() - delta.indices.len()
        ));
    }
    let mut coupling = ObjectAddition::new(plan.clone(), delta.clone(), grid_dims(sampler), mask_override)?;
    let out = sampler.paired_sample_from(z0, source_prompt, target_prompt, &mut coupling)?;
    warnings.append(&mut coupling.warnings);
    for w in &warnings {
        log::warn!("{w}");
    }
    Ok(EditOutput {
        source: out.source,
        target: out.target,
        source_latent: out.source_latent,
        target_latent: out.target_latent,
        mask: coupling.mask,
        delta,
        attention: coupling.attention,
        divergence: out.divergence,
        warnings,
    })
}

/// Non-rigid edit from seeded noise.
pub fn non_rigid_edit(
    sampler: &Sampler<'_>,
    source_prompt: &str,
    target_prompt: &str,
    seed: u64,
    plan: &InjectionPlan,
) -> Result<EditOutput> {
    non_rigid_edit_from(sampler, sampler.initial_noise(seed), source_prompt, target_prompt, plan)
}

/// Unmasked injection into the plan's layers for steps `[0, T_e)`.
pub fn non_rigid_edit_from(
    sampler: &Sampler<'_>,
    z0: LatentVideo,
    source_prompt: &str,
    target_prompt: &str,
    plan: &InjectionPlan,
) -> Result<EditOutput> {
    if plan.mode != EditMode::NonRigid {
        return Err(Error::config("non-rigid editing needs a non-rigid plan"));
    }
    plan.validate(sampler.schedule.steps(), sampler.model.num_layers())?;
    let mut coupling = KvInjection {
        layers: plan.injected_layers().to_vec(),
        steps: 0..plan.t_e,
        mask: None,
        block_text_to_visual: plan.preserve_prompt,
    };
    let out = sampler.paired_sample_from(z0, source_prompt, target_prompt, &mut coupling)?;
    Ok(EditOutput {
        source: out.source,
        target: out.target,
        source_latent: out.source_latent,
        target_latent: out.target_latent,
        mask: None,
        delta: DeltaTokens::default(),
        attention: BTreeMap::new(),
        divergence: out.divergence,
        warnings: vec![],
    })
}

/// Dispatches on the plan's mode.
pub fn run_edit_from(
    sampler: &Sampler<'_>,
    z0: LatentVideo,
    source_prompt: &str,
    target_prompt: &str,
    plan: &InjectionPlan,
) -> Result<EditOutput> {
    match plan.mode {
        EditMode::ObjectAddition => object_addition_from(sampler, z0, source_prompt, target_prompt, plan, None),
        EditMode::NonRigid => non_rigid_edit_from(sampler, z0, source_prompt, target_prompt, plan),
    }
}

/// Inverts `video` under the source prompt and edits from the recovered
/// noise. The source stream of the result is the reconstruction.
pub fn edit_real_video(
    sampler: &Sampler<'_>,
    video: &Video,
    source_prompt: &str,
    target_prompt: &str,
    plan: &InjectionPlan,
) -> Result<EditOutput> {
    let z0 = sampler.invert_video(video, source_prompt)?;
    run_edit_from(sampler, z0, source_prompt, target_prompt, plan)
}
