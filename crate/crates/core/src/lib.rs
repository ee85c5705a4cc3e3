//! Auditing and removing subgroup bias in joint image-text embedding spaces.
//!
//! The crate is organized around the debiasing pipeline:
//!
//! 1. [`embedset`] loads labeled embeddings (`EMB1` binary + labels CSV).
//! 2. [`biasdir`] trains a logistic probe and extracts a unit bias direction.
//! 3. [`inlp`] iterates probe training and nullspace projection until the
//!    probe is at chance level.
//! 4. [`slerpcomp`] doses the projection with spherical interpolation and
//!    restores alignment with a target concept.
//! 5. [`metrics`] and [`report`] measure group dispersion, top-K retrieval
//!    skew (Jensen-Shannon divergence vs uniform) and zero-shot accuracy.
//!
//! [`synth`] generates embedding sets with planted bias so every stage can be
//! checked against known ground truth, and [`curation`] holds the dataset
//! curation logic (SPARQL templates, image quality filters, crop geometry).

pub mod biasdir;
pub mod curation;
pub mod embedset;
mod error;
pub mod inlp;
pub mod linalg;
pub mod metrics;
pub mod pipeline;
pub mod prompts;
pub mod report;
pub mod rng;
pub mod slerpcomp;
pub mod synth;

pub use biasdir::{classify_accuracy, train_classifier, BiasDirection, ClassifierConfig};
pub use embedset::{
    load_embeddings, normalize_rows, save_embeddings, ConceptVector, EmbeddingFileHeader,
    EmbeddingSet, Gender, RowLabel,
};
pub use error::{Error, Result};
pub use inlp::{apply_transform, fit_inlp, project, DebiasTransform, InlpConfig, Strategy};
pub use metrics::{
    cosine_sim, delta_sigma_pct, group_mean_similarity, normalized_jsd, top_k_retrieval,
    zero_shot_binary, GroupSimilarityTable, TopKHistogram,
};
pub use report::FairnessReport;
pub use slerpcomp::{compensate, slerp_blend, CompensationMode, CompensationResult, SlerpParams};
pub use synth::{generate, planted_recovery_angle, SynthData, SynthSpec};
