//! Time/frequency transforms and the encoder/separator/decoder contract.

mod pipeline;
mod transform;
mod waveform;

pub use pipeline::{
    run_pipeline, Decoder, Encoder, IdentitySeparator, MaskSeparator, Separator, StftDecoder,
    StftEncoder,
};
pub use transform::{istft, stft, ComplexSpectrogram, StftConfig, WindowKind, WINDOW_SUM_FLOOR};
pub use waveform::Waveform;
