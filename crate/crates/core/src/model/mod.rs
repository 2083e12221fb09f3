//! Model zoo: the transformer-style map encoder (solution 1), the video-cube
//! encoder with spatiotemporal sampling (solution 2), the parameter tensor
//! plumbing they share, and the `RPPG` checkpoint format. Both models carry
//! manual reverse-mode gradients — every forward has a taped backward that is
//! finite-difference checked in the tests.

mod checkpoint;
mod encoder;
mod stencoder;
mod stformer;
mod tensor;

pub use checkpoint::{read_checkpoint, write_checkpoint, ModelCheckpoint};
pub use encoder::{encoder_backward, encoder_forward, EncoderParams, EncoderTape, LN_EPS};
pub use stencoder::{
    sample_st_rppg, spatial_average, st_encoder_backward, st_encoder_forward,
    st_encoder_forward_with_tape, STBlock, StEncoderConfig, StEncoderParams, StEncoderTape,
    StRppgSample, StageParams,
};
pub use stformer::{
    spatial_encoder_forward, st_former_backward, st_former_forward, st_former_forward_with_tape,
    temporal_encoder_forward, LoopParams, StFormerConfig, StFormerParams, StFormerTape,
};
pub use tensor::{ParamTensors, Tensor};
