//! Layer-informed key/value injection for training-free video editing.

pub mod config;
pub mod decoder;
pub mod edit;
pub mod error;
pub mod hooks;
pub mod metrics;
pub mod model;
pub mod probe;
pub mod prominence;
pub mod prompts;
pub mod rope;
pub mod sampler;
pub mod schedule;
pub mod text;
pub mod video;

pub use config::{LatentGrid, ModelConfig, Position};
pub use error::{Error, Result};
pub use hooks::{AttentionMap, HookPlan, Injection, KvPack, LayerHooks, Records};
pub use model::{Model, Step, TokenSequence};
pub use video::{LatentVideo, Video};
pub use decoder::{Decoder, DecoderConfig};
pub use sampler::{Coupling, KvInjection, NoCoupling, PairedOutput, SampleOutput, Sampler};
pub use schedule::{DenoiseSchedule, ScheduleConfig};
