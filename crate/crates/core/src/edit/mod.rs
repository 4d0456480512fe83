//! Key/value injection editing: delta tokens, mask extraction, and the
//! object-addition and non-rigid pipelines.

pub mod delta;
pub mod mask;
pub mod pipeline;

pub use delta::{find_delta_tokens, DeltaTokens};
pub use mask::{
    accumulate_delta_attention, blur_frames, gaussian_kernel, mix_kv, normalize_map, preprocess_mask,
    rescale_attention, EditMask, MaskPipelineConfig, RawMap,
};
pub use pipeline::{
    edit_real_video, non_rigid_edit, non_rigid_edit_from, object_addition, object_addition_from, run_edit_from,
    EditMode, EditOutput, InjectionPlan, ObjectAddition,
};
