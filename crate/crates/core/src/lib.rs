//! Homogeneous note graphs from symbolic scores and the Stochastic
//! GraphSMOTE node classifier for cadence detection.
//!
//! Pipeline: parse scores (Note-Table TSV or a **kern subset), build the
//! temporal edge sets over note/rest nodes, attach engineered node features
//! and arrival-beat labels, then train and evaluate an imbalance-aware
//! GraphSAGE classifier with predictions at note, onset, and beat level.

pub mod error;
pub mod features;
pub mod graph;
pub mod kern;
pub mod metrics;
pub mod model;
pub mod note_table;
pub mod rational;
pub mod sampling;
pub mod score;
pub mod split;
pub mod synthetic;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use rational::Rational;
pub use score::{CadenceClass, LabelScheme, NoteEvent, Score};

use graph::ScoreGraph;

/// End-to-end per-piece graph construction: edges, features, labels, groups.
pub fn score_to_graph(
    score: &Score,
    scheme: &LabelScheme,
    feature_set: features::FeatureSet,
) -> Result<(ScoreGraph, Vec<String>)> {
    score.validate()?;
    let edges = graph::build_edges(score);
    let adj = graph::Adjacency::from_edges(score.notes.len(), &edges)?;
    let (feats, manifest) = features::compute_features(score, &adj, feature_set)?;
    let labeling = score::assign_labels(score, scheme)?;
    let g = graph::to_graph(score, &edges, feats, manifest, labeling.labels)?;
    Ok((g, labeling.warnings))
}
