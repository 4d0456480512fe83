//! Per-layer control surface of the toy transformer.
//!
//! A [`HookPlan`] switches individual interventions on for one layer during
//! one forward pass: bypassing the layer, dropping rotary embeddings from the
//! visual keys, recording or replacing visual keys/values, capturing the
//! head-averaged attention map, and blocking text queries from visual keys.

use std::collections::BTreeMap;
use std::sync::Arc;

use ndarray::{Array2, ArrayView3};

use crate::error::{Error, Result};

/// Visual-token keys and values of one layer at one step.
///
/// Rows are visual tokens in canonical order; columns are `heads × head_dim`
/// with heads laid out consecutively. Keys are stored after any rotary
/// embedding was applied.
#[derive(Debug, Clone, PartialEq)]
pub struct KvPack {
    pub keys: Array2<f32>,
    pub values: Array2<f32>,
    pub num_heads: usize,
    pub layer: usize,
    pub timestep: usize,
}

impl KvPack {
    /// `[tokens_vis, num_heads, head_dim]`
    pub fn shape(&self) -> [usize; 3] {
        let (t, c) = self.keys.dim();
        [t, self.num_heads, c / self.num_heads.max(1)]
    }

    pub fn keys_3d(&self) -> ArrayView3<'_, f32> {
        let [t, h, d] = self.shape();
        self.keys
            .view()
            .into_shape_with_order((t, h, d))
            .expect("contiguous keys")
    }

    pub fn values_3d(&self) -> ArrayView3<'_, f32> {
        let [t, h, d] = self.shape();
        self.values
            .view()
            .into_shape_with_order((t, h, d))
            .expect("contiguous values")
    }
}

/// Keys/values to inject into a layer, optionally blended by a per-token mask.
///
/// With a mask `m`, the layer uses `m·own + (1−m)·source` for each visual
/// token; without one, the source replaces its own keys/values entirely.
#[derive(Debug, Clone)]
pub struct Injection {
    pub source: KvPack,
    pub mask: Option<Arc<Vec<f32>>>,
}

#[derive(Debug, Clone, Default)]
pub struct HookPlan {
    pub bypass: bool,
    pub rope_drop_key: bool,
    pub capture_kv: bool,
    pub inject_kv: Option<Injection>,
    pub capture_attention: bool,
    pub block_text_to_visual: bool,
}

impl HookPlan {
    pub fn bypass() -> Self {
        Self {
            bypass: true,
            ..Default::default()
        }
    }

    pub fn rope_drop() -> Self {
        Self {
            rope_drop_key: true,
            ..Default::default()
        }
    }

    pub fn capture_kv() -> Self {
        Self {
            capture_kv: true,
            ..Default::default()
        }
    }

    pub fn capture_attention() -> Self {
        Self {
            capture_attention: true,
            ..Default::default()
        }
    }

    pub fn inject(source: KvPack, mask: Option<Arc<Vec<f32>>>) -> Self {
        Self {
            inject_kv: Some(Injection { source, mask }),
            ..Default::default()
        }
    }

    /// True when the plan can alter the numerical output.
    pub fn is_active(&self) -> bool {
        self.bypass || self.rope_drop_key || self.inject_kv.is_some() || self.block_text_to_visual
    }

    pub fn validate(&self, layer: usize) -> Result<()> {
        if self.bypass && self.inject_kv.is_some() {
            return Err(Error::config(format!(
                "layer {layer}: bypass and inject_kv are mutually exclusive"
            )));
        }
        Ok(())
    }
}

/// Hook plans keyed by layer for a single forward pass.
pub type LayerHooks = BTreeMap<usize, HookPlan>;

/// Head-averaged attention weights over all tokens (text first, then visual).
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionMap {
    /// `[total_tokens × total_tokens]`, rows are queries.
    pub weights: Array2<f32>,
    pub text_len: usize,
    pub layer: usize,
    pub timestep: usize,
}

/// Everything captured during one or more forward passes, keyed by (layer, step).
#[derive(Debug, Clone, Default)]
pub struct Records {
    pub kv: BTreeMap<(usize, usize), KvPack>,
    pub attention: BTreeMap<(usize, usize), AttentionMap>,
}

impl Records {
    pub fn is_empty(&self) -> bool {
        self.kv.is_empty() && self.attention.is_empty()
    }

    pub fn extend(&mut self, other: Records) {
        self.kv.extend(other.kv);
        self.attention.extend(other.attention);
    }

    pub fn take_kv(&mut self, layer: usize, step: usize) -> Option<KvPack> {
        self.kv.remove(&(layer, step))
    }
}
