//! Side-band markers: blob detection, belt encoder and contact estimation.

pub mod contact;
pub mod detect;
pub mod matching;

pub use contact::{
    contact_metrics, default_contact_train_config, extract_contact_features, generate_contact_dataset, predict_contact,
    synthesize_deflection, test_split_metrics, train_contact_model, ContactFeatures, ContactGrid, ContactMetrics,
    ContactModel, ContactSample, ContactState, CubicSpline, DeflectionParams,
};
pub use detect::{detect_band, detect_markers, DetectorConfig, MarkerObservation};
pub use matching::{encode_frames, encode_observations, frame_displacement, match_displacement, EncoderStep, MatchConfig, MatchResult};
