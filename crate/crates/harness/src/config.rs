//! Experiment configuration: a TOML file plus command-line overrides.

use std::path::Path;

use layerkv::edit::{EditMode, InjectionPlan, MaskPipelineConfig};
use layerkv::metrics::{ClipAllOrder, ToyEmbedder};
use layerkv::probe::{TOY_NON_VITAL_LAYERS, TOY_VITAL_LAYERS};
use layerkv::prominence::{Normalization, DEFAULT_C, TOY_PROMINENT_LAYER};
use layerkv::{Decoder, DecoderConfig, DenoiseSchedule, Error, Model, ModelConfig, ScheduleConfig};
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProbeConfig {
    /// Number of bundled probe prompts N_p.
    pub n_p: usize,
    /// Prompt `i` is sampled with seed `base_seed + i`.
    pub base_seed: u64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self { n_p: 40, base_seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProminenceConfig {
    /// Scaling constant C.
    pub c: f64,
    pub normalization: Normalization,
    /// Luminance deviation marking foreground pixels.
    pub fg_threshold: f32,
}

impl Default for ProminenceConfig {
    fn default() -> Self {
        Self {
            c: DEFAULT_C,
            normalization: Normalization::Global,
            fg_threshold: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EditConfig {
    pub t_i: usize,
    pub t_e: usize,
    pub t_mask: f64,
    pub k: f64,
    pub c_k: f64,
    pub blur_kernel: usize,
    pub blur_sigma: f64,
    pub window: usize,
    pub preserve_prompt: bool,
    pub vital_layers: Vec<usize>,
    pub non_vital_layers: Vec<usize>,
    pub prominent_layer: usize,
}

impl Default for EditConfig {
    fn default() -> Self {
        let m = MaskPipelineConfig::default();
        Self {
            t_i: 10,
            t_e: 25,
            t_mask: m.threshold,
            k: m.k,
            c_k: m.c_k,
            blur_kernel: m.blur_kernel,
            blur_sigma: m.blur_sigma,
            window: m.window,
            preserve_prompt: true,
            vital_layers: TOY_VITAL_LAYERS.to_vec(),
            non_vital_layers: TOY_NON_VITAL_LAYERS.to_vec(),
            prominent_layer: TOY_PROMINENT_LAYER,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricsConfig {
    pub clip_all_order: ClipAllOrder,
    pub embedder_dim: usize,
    pub embedder_seed: u64,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            clip_all_order: ClipAllOrder::ProductOfMeans,
            embedder_dim: 64,
            embedder_seed: 0xc11b,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    /// Concurrent sweep sub-runs and probe cells.
    pub workers: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self { seed: 0, workers: 1 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    pub schedule: ScheduleConfig,
    pub decoder: DecoderConfig,
    pub probe: ProbeConfig,
    pub prominence: ProminenceConfig,
    pub edit: EditConfig,
    pub metrics: MetricsConfig,
    pub run: RunConfig,
}

/// Command-line values that replace config keys.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub t_i: Option<usize>,
    pub t_e: Option<usize>,
    pub t_mask: Option<f64>,
    /// Replaces the layer set the edit injects into.
    pub layers: Option<Vec<usize>>,
    pub workers: Option<usize>,
}

/// Model, decoder and schedule built from a config.
pub struct Runtime {
    pub model: Model,
    pub decoder: Decoder,
    pub schedule: DenoiseSchedule,
}

impl Runtime {
    pub fn sampler(&self) -> layerkv::Result<layerkv::Sampler<'_>> {
        layerkv::Sampler::new(&self.model, &self.decoder, &self.schedule)
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> std::result::Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::from_toml(&text).map_err(|e| HarnessError::ConfigFile {
            path: path.to_path_buf(),
            message: e.message().to_string(),
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes to TOML")
    }

    /// Applies overrides; `use_vital` routes `layers` for non-rigid edits.
    pub fn apply(&mut self, o: &Overrides, mode: Option<EditMode>, use_vital: bool) {
        if let Some(s) = o.seed {
            self.run.seed = s;
        }
        if let Some(v) = o.t_i {
            self.edit.t_i = v;
        }
        if let Some(v) = o.t_e {
            self.edit.t_e = v;
        }
        if let Some(v) = o.t_mask {
            self.edit.t_mask = v;
        }
        if let Some(w) = o.workers {
            self.run.workers = w;
        }
        if let Some(layers) = &o.layers {
            match mode {
                Some(EditMode::NonRigid) if !use_vital => self.edit.non_vital_layers = layers.clone(),
                _ => self.edit.vital_layers = layers.clone(),
            }
        }
    }

    pub fn mask_config(&self) -> MaskPipelineConfig {
        MaskPipelineConfig {
            k: self.edit.k,
            c_k: self.edit.c_k,
            blur_kernel: self.edit.blur_kernel,
            blur_sigma: self.edit.blur_sigma,
            threshold: self.edit.t_mask,
            window: self.edit.window,
        }
    }

    pub fn plan(&self, mode: EditMode, use_vital: bool) -> InjectionPlan {
        let mut plan = match mode {
            EditMode::ObjectAddition => {
                let mut p = InjectionPlan::object_addition(self.edit.vital_layers.clone(), self.edit.prominent_layer);
                p.preserve_prompt = self.edit.preserve_prompt;
                p
            }
            EditMode::NonRigid => {
                let mut p = InjectionPlan::non_rigid(self.edit.non_vital_layers.clone());
                p.vital_layers = self.edit.vital_layers.clone();
                p.non_rigid_use_vital = use_vital;
                p
            }
        };
        plan.t_i = self.edit.t_i;
        plan.t_e = self.edit.t_e;
        plan.mask = self.mask_config();
        plan
    }

    pub fn embedder(&self) -> ToyEmbedder {
        ToyEmbedder::new(self.metrics.embedder_dim, self.metrics.embedder_seed)
    }

    /// Checks every section; edit keys only when `mode` is given.
    pub fn validate(&self, mode: Option<EditMode>, use_vital: bool) -> layerkv::Result<()> {
        self.model.validate()?;
        DenoiseSchedule::new(self.schedule)?;
        Decoder::new(self.model.grid(), self.decoder)?;
        if self.probe.n_p == 0 {
            return Err(Error::config("n_p must be positive"));
        }
        if !(self.prominence.c > 0.0) {
            return Err(Error::config(format!("C = {} must be positive", self.prominence.c)));
        }
        if self.run.workers == 0 {
            return Err(Error::config("workers must be positive"));
        }
        if self.metrics.embedder_dim == 0 {
            return Err(Error::config("embedder_dim must be positive"));
        }
        if let Some(mode) = mode {
            self.plan(mode, use_vital)
                .validate(self.schedule.steps, self.model.num_layers)?;
        }
        Ok(())
    }

    pub fn runtime(&self) -> layerkv::Result<Runtime> {
        Ok(Runtime {
            model: Model::new(self.model.clone())?,
            decoder: Decoder::new(self.model.grid(), self.decoder)?,
            schedule: DenoiseSchedule::new(self.schedule)?,
        })
    }
}

/// Parses `"0,1,4-6"` into `[0, 1, 4, 5, 6]` (sorted, deduplicated).
pub fn parse_layer_list(s: &str) -> layerkv::Result<Vec<usize>> {
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim) {
        if part.is_empty() {
            return Err(Error::config(format!("empty entry in layer list {s:?}")));
        }
        match part.split_once('-') {
            Some((a, b)) => {
                let (a, b) = (parse_index(a, s)?, parse_index(b, s)?);
                if a > b {
                    return Err(Error::config(format!("descending range {part:?} in {s:?}")));
                }
                if b - a > 1 << 16 {
                    return Err(Error::config(format!("range {part:?} is too long")));
                }
                out.extend(a..=b);
            }
            None => out.push(parse_index(part, s)?),
        }
    }
    out.sort_unstable();
    out.dedup();
    Ok(out)
}

/// Parses `"0,5,10"` keeping order; used for sweep axes.
pub fn parse_value_list(s: &str) -> layerkv::Result<Vec<usize>> {
    s.split(',').map(|p| parse_index(p.trim(), s)).collect()
}

fn parse_index(p: &str, whole: &str) -> layerkv::Result<usize> {
    p.trim()
        .parse()
        .map_err(|_| Error::config(format!("invalid integer {p:?} in {whole:?}")))
}
