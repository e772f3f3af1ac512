//! Python bindings: parse scores, build note graphs, train, evaluate, and
//! predict from Python. Thin wrappers over the core crate; heavy state stays
//! on the Rust side.

use std::path::PathBuf;
use std::str::FromStr;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use sgsm_core::features::FeatureSet;
use sgsm_core::graph::{disjoint_union, MergedCorpus, ScoreGraph};
use sgsm_core::metrics::Level;
use sgsm_core::model::{load_checkpoint, save_checkpoint, CheckpointHeader, ModelParams};
use sgsm_core::score::LabelScheme;
use sgsm_core::train::{self, TrainConfig};

fn err(e: sgsm_core::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// A parsed symbolic score.
#[pyclass]
struct Score {
    inner: sgsm_core::Score,
}

#[pymethods]
impl Score {
    /// Parse a **kern document.
    #[staticmethod]
    fn from_kern(text: &str, piece_id: &str) -> PyResult<Self> {
        Ok(Score {
            inner: sgsm_core::kern::parse_kern(text, piece_id).map_err(err)?,
        })
    }

    /// Parse a Note-Table TSV plus its JSON sidecar.
    #[staticmethod]
    fn from_note_table(tsv: &str, meta_json: &str, piece_id: &str) -> PyResult<Self> {
        Ok(Score {
            inner: sgsm_core::note_table::parse_note_table(tsv, meta_json, piece_id)
                .map_err(err)?,
        })
    }

    #[getter]
    fn piece_id(&self) -> String {
        self.inner.piece_id.clone()
    }

    #[getter]
    fn num_notes(&self) -> usize {
        self.inner.notes.len()
    }

    /// Serialize back to canonical (tsv, meta_json) strings.
    fn note_table(&self) -> (String, String) {
        sgsm_core::note_table::serialize_note_table(&self.inner)
    }

    /// `(onset, duration, midi_pitch, voice, is_rest)` per note, onsets and
    /// durations as exact rational strings.
    fn notes(&self) -> Vec<(String, String, Option<u8>, u32, bool)> {
        self.inner
            .notes
            .iter()
            .map(|n| {
                (
                    n.onset.to_string(),
                    n.duration.to_string(),
                    n.midi_pitch,
                    n.voice,
                    n.is_rest,
                )
            })
            .collect()
    }

    fn __repr__(&self) -> String {
        format!("Score(piece_id={:?}, notes={})", self.inner.piece_id, self.inner.notes.len())
    }
}

/// Synthetic corpus with a planted cadence-like motif.
#[pyfunction]
#[pyo3(signature = (n_pieces, measures, rate=0.02, seed=0))]
fn motif_corpus(n_pieces: usize, measures: usize, rate: f64, seed: u64) -> Vec<Score> {
    sgsm_core::synthetic::motif_corpus(n_pieces, measures, rate, seed)
        .into_iter()
        .map(|inner| Score { inner })
        .collect()
}

/// Synthetic corpus whose pattern is visible only from neighboring onsets.
#[pyfunction]
#[pyo3(signature = (n_pieces, beats_per_piece, seed=0))]
fn context_corpus(n_pieces: usize, beats_per_piece: usize, seed: u64) -> Vec<Score> {
    sgsm_core::synthetic::context_corpus(n_pieces, beats_per_piece, seed)
        .into_iter()
        .map(|inner| Score { inner })
        .collect()
}

/// A per-piece note graph with features and labels.
#[pyclass]
struct Graph {
    inner: ScoreGraph,
}

#[pymethods]
impl Graph {
    /// Build edges, features, and labels from a score.
    #[staticmethod]
    #[pyo3(signature = (score, scheme="binary", feature_set="all"))]
    fn build(score: &Score, scheme: &str, feature_set: &str) -> PyResult<Self> {
        let scheme = LabelScheme::from_str(scheme).map_err(err)?;
        let fs = FeatureSet::from_str(feature_set).map_err(err)?;
        let (inner, _warnings) =
            sgsm_core::score_to_graph(&score.inner, &scheme, fs).map_err(err)?;
        Ok(Graph { inner })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Graph {
            inner: ScoreGraph::load(&path).map_err(err)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(&path).map_err(err)
    }

    #[getter]
    fn piece_id(&self) -> String {
        self.inner.piece_id.clone()
    }

    #[getter]
    fn num_nodes(&self) -> usize {
        self.inner.adj.n
    }

    #[getter]
    fn num_edges(&self) -> usize {
        self.inner.adj.num_edges()
    }

    #[getter]
    fn feature_width(&self) -> usize {
        self.inner.d
    }

    #[getter]
    fn labels(&self) -> Vec<u8> {
        self.inner.labels.clone()
    }

    #[getter]
    fn manifest_hash(&self) -> String {
        self.inner.manifest.hash()
    }

    fn neighbors(&self, node: usize) -> PyResult<Vec<u32>> {
        if node >= self.inner.adj.n {
            return Err(PyValueError::new_err(format!("node {node} out of range")));
        }
        Ok(self.inner.adj.neighbors_of(node).to_vec())
    }

    /// Feature row of one node.
    fn features_of(&self, node: usize) -> PyResult<Vec<f32>> {
        if node >= self.inner.adj.n {
            return Err(PyValueError::new_err(format!("node {node} out of range")));
        }
        let d = self.inner.d;
        Ok(self.inner.features[node * d..(node + 1) * d].to_vec())
    }

    fn __repr__(&self) -> String {
        format!(
            "Graph(piece_id={:?}, nodes={}, edges={}, d={})",
            self.inner.piece_id,
            self.inner.adj.n,
            self.inner.adj.num_edges(),
            self.inner.d
        )
    }
}

fn merge(graphs: &[PyRef<'_, Graph>]) -> PyResult<(MergedCorpus, String)> {
    if graphs.is_empty() {
        return Err(PyValueError::new_err("no graphs given"));
    }
    let hash = graphs[0].inner.manifest.hash();
    for g in graphs {
        if g.inner.manifest.hash() != hash {
            return Err(PyValueError::new_err(format!(
                "piece {:?} was built with a different feature manifest",
                g.inner.piece_id
            )));
        }
    }
    let refs: Vec<&ScoreGraph> = graphs.iter().map(|g| &g.inner).collect();
    Ok((disjoint_union(&refs).map_err(err)?, hash))
}

/// A trained model plus its training log.
#[pyclass]
struct Model {
    params: ModelParams,
    manifest_hash: String,
    log: Vec<train::EpochRecord>,
    best_epoch: usize,
}

#[pymethods]
impl Model {
    /// Train on the given graphs. `config_json` holds TrainConfig fields
    /// (missing fields take the documented defaults).
    #[staticmethod]
    #[pyo3(signature = (graphs, train_pieces, val_pieces=vec![], config_json=None))]
    fn train(
        graphs: Vec<PyRef<'_, Graph>>,
        train_pieces: Vec<String>,
        val_pieces: Vec<String>,
        config_json: Option<&str>,
    ) -> PyResult<Self> {
        let (corpus, manifest_hash) = merge(&graphs)?;
        let mut cfg: TrainConfig = serde_json::from_str(config_json.unwrap_or("{}"))
            .map_err(|e| PyValueError::new_err(format!("bad config: {e}")))?;
        let label_classes = corpus.labels.iter().copied().max().unwrap_or(0) as usize + 1;
        cfg.num_classes = cfg.num_classes.max(label_classes);
        let out = train::train(&corpus, &train_pieces, &val_pieces, &cfg, None).map_err(err)?;
        Ok(Model {
            params: out.params,
            manifest_hash,
            log: out.log,
            best_epoch: out.best_epoch,
        })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let (params, header) = load_checkpoint(&path).map_err(err)?;
        Ok(Model {
            params,
            manifest_hash: header.feature_manifest_hash,
            log: Vec::new(),
            best_epoch: 0,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        let header = CheckpointHeader {
            dims: self.params.dims.clone(),
            feature_manifest_hash: self.manifest_hash.clone(),
            extra: serde_json::json!({ "best_epoch": self.best_epoch }),
        };
        save_checkpoint(&self.params, &header, &path).map_err(err)
    }

    #[getter]
    fn best_epoch(&self) -> usize {
        self.best_epoch
    }

    /// Per-epoch log records as JSON strings (one per epoch).
    #[getter]
    fn log(&self) -> Vec<String> {
        self.log
            .iter()
            .map(|r| serde_json::to_string(r).expect("serialize record"))
            .collect()
    }

    /// Class probabilities for every node of the given graphs, in order.
    fn predict(&self, graphs: Vec<PyRef<'_, Graph>>) -> PyResult<Vec<Vec<f64>>> {
        check_manifest(&self.manifest_hash, &graphs)?;
        let (corpus, _) = merge(&graphs)?;
        let nodes: Vec<u32> = (0..corpus.adj.n as u32).collect();
        let probs = train::predict_nodes(&self.params, &corpus, &nodes).map_err(err)?;
        Ok((0..probs.rows).map(|i| probs.row(i).to_vec()).collect())
    }

    /// Metrics report (JSON string) on the given pieces at the given levels.
    #[pyo3(signature = (graphs, pieces, levels=vec!["note".into(), "onset".into(), "beat".into()]))]
    fn evaluate(
        &self,
        graphs: Vec<PyRef<'_, Graph>>,
        pieces: Vec<String>,
        levels: Vec<String>,
    ) -> PyResult<String> {
        check_manifest(&self.manifest_hash, &graphs)?;
        let (corpus, _) = merge(&graphs)?;
        let levels: Vec<Level> = levels
            .iter()
            .map(|s| Level::from_str(s))
            .collect::<sgsm_core::Result<_>>()
            .map_err(err)?;
        let report = train::evaluate(&self.params, &corpus, &pieces, &levels).map_err(err)?;
        serde_json::to_string_pretty(&report).map_err(|e| PyValueError::new_err(e.to_string()))
    }

    fn __repr__(&self) -> String {
        format!(
            "Model(input_dim={}, hidden={}, layers={}, classes={})",
            self.params.dims.input_dim,
            self.params.dims.hidden_dim,
            self.params.dims.layers,
            self.params.dims.classes
        )
    }
}

fn check_manifest(expected: &str, graphs: &[PyRef<'_, Graph>]) -> PyResult<()> {
    for g in graphs {
        if g.inner.manifest.hash() != expected {
            return Err(PyValueError::new_err(format!(
                "graph {:?} does not match the model's feature manifest",
                g.inner.piece_id
            )));
        }
    }
    Ok(())
}

#[pymodule]
fn sgsm_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Score>()?;
    m.add_class::<Graph>()?;
    m.add_class::<Model>()?;
    m.add_function(wrap_pyfunction!(motif_corpus, m)?)?;
    m.add_function(wrap_pyfunction!(context_corpus, m)?)?;
    Ok(())
}
