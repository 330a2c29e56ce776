//! Vibration signals: synthetic generation, segmentation, spectrogram
//! images, sensor-fault injection and file formats.

mod dataset_file;
mod faults;
mod record;
mod spectrogram;
mod synth;

pub use dataset_file::{read_dataset_file, write_dataset_file};
pub use faults::{inject_fault, FaultKind, FaultSpec};
pub use record::{
    read_signal_csv, read_signal_raw, sidecar_path, write_signal_csv, write_signal_raw, SignalRecord,
    DEFAULT_SAMPLE_RATE,
};
pub use spectrogram::{peak_to_peak, scale_to_unit_range, segment_signal, stft_image, Spectrogram, SpectrogramConfig};
pub use synth::{
    condition_name, fault_order, fault_resonance, generate_synthetic_fleet, generate_uniform_images,
    generate_uniform_ood,
};
