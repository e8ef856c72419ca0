//! Deterministic synthetic paired datasets: scores, additive renderings and
//! the per-task (input, target) spectrogram images.

mod dataset;
mod score;
mod store;
mod synth;

pub use dataset::{
    degrade_bandwidth, derive_seed, generate_dataset, generate_scores, make_task_dataset, score_task,
    split_dataset, window_starts, DatasetConfig, Pair, PairAudio, PairedDataset, Task,
};
pub use score::{format_score, make_monophonic, parse_score, random_score, NoteEvent, Rhythm, MAX_PITCH, MIN_PITCH};
pub use store::{load_dataset, manifest_dir, read_f32, save_dataset, write_f32, ImageInfo, Manifest, PairEntry, MANIFEST_FILE};
pub use synth::{render_blueprint, render_instrument, TimbreConfig, BLUEPRINT_RAMP_MS, RENDER_PEAK};
