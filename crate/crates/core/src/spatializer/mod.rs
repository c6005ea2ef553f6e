//! Spatialized noisy-reverberant corpus simulation.

mod corpus;
mod diffuse;
mod mixture;
mod rir;
mod scene;

pub use rir::{calibrate_absorption, energy_decay_curve, schroeder_t60, simulate_rir, Rir, RirOptions, FRAC_DELAY_TAPS, RIR_HIGHPASS_HZ,
    RIR_LATENCY,
};
pub use scene::{
    absorption_from_t60, distance, AbsorptionModel, sample_scene, ArrayGeometry, Point, RoomSpec, SceneConstraints, SceneSpec,
    SPEED_OF_SOUND,
};
pub use diffuse::{diffuse_coherence, gen_diffuse, sinc, spatial_coherence, DIFFUSE_HOP, DIFFUSE_N_FFT};
pub use mixture::{
    build_mixture, fit_length, snr_gain, ClipUse, MixtureRecord, NoiseBank, NoiseClip, LOOP_CROSSFADE_SECS,
    REFERENCE_MIC,
};
pub use corpus::{
    spatialize_corpus, CorpusOutput, CorpusRequest, MetadataRecord, ALT_DIR, MANIFEST_FILE, METADATA_FILE,
    MIXTURE_COLUMNS,
};
