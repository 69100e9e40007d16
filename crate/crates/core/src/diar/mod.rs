//! Speaker diarization: voice activity detection, embedding clustering,
//! scoring, and segment refinement.

pub mod cluster;
pub mod der;
pub mod refine;
pub mod rttm;
pub mod vad;

pub use cluster::{spectral_cluster, EmbeddingSet};
pub use der::{der, DerReport};
pub use refine::{refine_rttm, union_intervals};
pub use rttm::{parse_rttm, read_rttm, serialize_rttm, write_rttm, RttmSegment, RttmSegmentList};
pub use vad::{energy_vad, VadConfig};
