//! Heterogeneous graph transformer layers over a [`HeteroGraph`](crate::graph::HeteroGraph).

mod checkpoint;
mod gradcheck;
mod init;
mod layer;
mod params;

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, read_checkpoint, write_checkpoint, Checkpoint,
    CheckpointHeader, TensorInfo, CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use gradcheck::grad_check;
pub use init::{init_vertex_states, InitPlan};
pub use layer::{
    hgt_layer_forward, hgt_stack_forward, layer_on_tape, layer_with_attention, register_stack,
    stack_on_tape, GraphContext, LayerTrace, LayerVars,
};
pub use params::{check_dims, HgtLayerParams, HgtStack, LabelTable, UNKNOWN_LABEL};
