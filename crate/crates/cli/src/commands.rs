//! Subcommand implementations.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;

use sgsm_core::features::FeatureSet;
use sgsm_core::graph::{disjoint_union, MergedCorpus, ScoreGraph};
use sgsm_core::metrics::Level;
use sgsm_core::model::{load_checkpoint, save_checkpoint, CheckpointHeader, ModelParams};
use sgsm_core::score::{LabelScheme, Score};
use sgsm_core::split::Split;
use sgsm_core::train::{self, TrainConfig};
use sgsm_core::{kern, note_table, Error, Result};

/// Worker cap from `SGSM_THREADS`; defaults to 1 (fully sequential).
fn max_threads() -> usize {
    std::env::var("SGSM_THREADS")
        .ok()
        .and_then(|v| v.parse().ok())
        .filter(|&n| n >= 1)
        .unwrap_or(1)
}

fn read_to_string(path: &Path) -> Result<String> {
    std::fs::read_to_string(path)
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))
}

fn stem_of(path: &Path) -> Result<String> {
    path.file_stem()
        .and_then(|s| s.to_str())
        .map(str::to_string)
        .ok_or_else(|| Error::Data(format!("{}: unusable file name", path.display())))
}

/// Load one score from a .krn file or a .tsv/.meta.json pair.
fn load_score(path: &Path) -> Result<Score> {
    let piece_id = stem_of(path)?;
    match path.extension().and_then(|e| e.to_str()) {
        Some("krn") => kern::parse_kern(&read_to_string(path)?, &piece_id),
        Some("tsv") => {
            let meta_path = path.with_extension("meta.json");
            note_table::parse_note_table(
                &read_to_string(path)?,
                &read_to_string(&meta_path)?,
                &piece_id,
            )
        }
        _ => Err(Error::Data(format!(
            "{}: expected a .krn or .tsv input",
            path.display()
        ))),
    }
}

/// Sorted .tsv paths in a canonical score directory.
fn score_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::Data(format!("{}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().and_then(|e| e.to_str()) == Some("tsv"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::Data(format!("{}: no .tsv scores found", dir.display())));
    }
    Ok(files)
}

fn graph_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::Data(format!("{}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().and_then(|e| e.to_str()) == Some("sgraph"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::Data(format!("{}: no .sgraph files found", dir.display())));
    }
    Ok(files)
}

fn load_corpus(dir: &Path) -> Result<(MergedCorpus, String)> {
    let graphs: Vec<ScoreGraph> = graph_files(dir)?
        .iter()
        .map(|p| ScoreGraph::load(p))
        .collect::<Result<_>>()?;
    let hash = graphs[0].manifest.hash();
    for g in &graphs {
        if g.manifest.hash() != hash {
            return Err(Error::Data(format!(
                "piece {:?} was built with a different feature manifest",
                g.piece_id
            )));
        }
    }
    let refs: Vec<&ScoreGraph> = graphs.iter().collect();
    Ok((disjoint_union(&refs)?, hash))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    std::fs::write(path, s)?;
    Ok(())
}

fn parse_csv_list(s: &str) -> Vec<String> {
    s.split(',').map(|p| p.trim().to_string()).filter(|p| !p.is_empty()).collect()
}

/// Run `f` over items with at most `SGSM_THREADS` workers, preserving order.
fn parallel_map<T, U, F>(items: Vec<T>, f: F) -> Vec<U>
where
    T: Send,
    U: Send,
    F: Fn(T) -> U + Sync,
{
    let threads = max_threads().min(items.len().max(1));
    if threads <= 1 {
        return items.into_iter().map(f).collect();
    }
    let items: Vec<(usize, T)> = items.into_iter().enumerate().collect();
    let queue = std::sync::Mutex::new(items);
    let results = std::sync::Mutex::new(Vec::new());
    std::thread::scope(|scope| {
        for _ in 0..threads {
            scope.spawn(|| loop {
                let item = queue.lock().unwrap().pop();
                match item {
                    Some((i, t)) => {
                        let u = f(t);
                        results.lock().unwrap().push((i, u));
                    }
                    None => break,
                }
            });
        }
    });
    let mut out = results.into_inner().unwrap();
    out.sort_by_key(|(i, _)| *i);
    out.into_iter().map(|(_, u)| u).collect()
}

pub fn ingest(inputs: &[PathBuf], out: &Path) -> Result<()> {
    std::fs::create_dir_all(out)?;
    let results = parallel_map(inputs.to_vec(), |path| (path.clone(), load_score(&path)));
    let mut failures = 0usize;
    let (mut pieces, mut notes, mut labeled) = (0usize, 0usize, 0usize);
    for (path, result) in results {
        match result {
            Ok(score) => {
                let labeling = sgsm_core::score::assign_labels(
                    &score,
                    &LabelScheme::Binary { target: None },
                )?;
                for w in &labeling.warnings {
                    eprintln!("warning: {}: {w}", score.piece_id);
                }
                let (tsv, meta) = note_table::serialize_note_table(&score);
                std::fs::write(out.join(format!("{}.tsv", score.piece_id)), tsv)?;
                std::fs::write(out.join(format!("{}.meta.json", score.piece_id)), meta)?;
                pieces += 1;
                notes += score.notes.len();
                labeled += labeling.labels.iter().filter(|&&l| l != 0).count();
            }
            Err(e) => {
                eprintln!("error: {}: {e}", path.display());
                failures += 1;
            }
        }
    }
    let rate = if notes == 0 { 0.0 } else { labeled as f64 / notes as f64 };
    println!(
        "ingested {pieces} piece(s), {notes} note(s), label rate {:.2}%",
        rate * 100.0
    );
    if rate > 0.02 {
        println!("note: label rate above 2%; cadence corpora are usually sparser");
    }
    if failures > 0 {
        return Err(Error::Data(format!("{failures} input(s) failed to ingest")));
    }
    Ok(())
}

#[derive(Serialize)]
struct BuildRunConfig<'a> {
    command: &'a str,
    scores: &'a Path,
    out: &'a Path,
    feature_set: &'a str,
    scheme: &'a str,
}

pub fn build(scores: &Path, out: &Path, feature_set: &str, scheme: &str) -> Result<()> {
    let fs = FeatureSet::from_str(feature_set)?;
    let scheme_parsed = LabelScheme::from_str(scheme)?;
    std::fs::create_dir_all(out)?;
    let files = score_files(scores)?;
    let results = parallel_map(files, |path| -> Result<(String, usize, usize)> {
        let score = load_score(&path)?;
        let (graph, warnings) = sgsm_core::score_to_graph(&score, &scheme_parsed, fs)?;
        for w in &warnings {
            eprintln!("warning: {}: {w}", score.piece_id);
        }
        graph.save(&out.join(format!("{}.sgraph", score.piece_id)))?;
        Ok((score.piece_id, graph.adj.n, graph.d))
    });
    let mut d_seen = None;
    let mut total_nodes = 0usize;
    let mut count = 0usize;
    for r in results {
        let (piece, n, d) = r?;
        d_seen.get_or_insert(d);
        total_nodes += n;
        count += 1;
        println!("built {piece}: {n} node(s)");
    }
    write_json(
        &out.join("resolved_config.json"),
        &BuildRunConfig {
            command: "build",
            scores,
            out,
            feature_set,
            scheme,
        },
    )?;
    println!(
        "built {count} graph(s), {total_nodes} node(s), feature width {}",
        d_seen.unwrap_or(0)
    );
    Ok(())
}

pub struct TrainArgs {
    pub graphs: PathBuf,
    pub out: PathBuf,
    pub config: Option<PathBuf>,
    pub hidden_dim: Option<usize>,
    pub layers: Option<usize>,
    pub fanouts: Option<String>,
    pub lr: Option<f64>,
    pub weight_decay: Option<f64>,
    pub batch_size: Option<usize>,
    pub smote_k: Option<usize>,
    pub gamma: Option<f64>,
    pub tau: Option<f64>,
    pub epochs: Option<usize>,
    pub seed: Option<u64>,
    pub num_classes: Option<usize>,
    pub train_pieces: Option<String>,
    pub val_pieces: Option<String>,
    pub split_file: Option<PathBuf>,
    pub pretrained: Option<PathBuf>,
}

#[derive(Serialize)]
struct TrainRunConfig<'a> {
    command: &'a str,
    graphs: &'a Path,
    out: &'a Path,
    pretrained: Option<&'a Path>,
    split: &'a Split,
    train_config: &'a TrainConfig,
    feature_manifest_hash: &'a str,
}

impl TrainArgs {
    /// File config, then flag overrides, then label-derived class count.
    fn resolve_config(&self, corpus: &MergedCorpus) -> Result<TrainConfig> {
        let mut cfg: TrainConfig = match &self.config {
            Some(path) => serde_json::from_str(&read_to_string(path)?)?,
            None => TrainConfig::default(),
        };
        if let Some(v) = self.hidden_dim {
            cfg.hidden_dim = v;
        }
        if let Some(v) = self.layers {
            cfg.layers = v;
            if self.fanouts.is_none() && self.config.is_none() {
                cfg.fanouts = match v {
                    0 => Vec::new(),
                    n => {
                        let mut f = vec![10; n];
                        *f.last_mut().unwrap() = 25;
                        f
                    }
                };
            }
        }
        if let Some(v) = &self.fanouts {
            cfg.fanouts = v
                .split(',')
                .map(|s| s.trim().parse::<usize>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Data(format!("bad --fanouts: {e}")))?;
        }
        if let Some(v) = self.lr {
            cfg.lr = v;
        }
        if let Some(v) = self.weight_decay {
            cfg.weight_decay = v;
        }
        if let Some(v) = self.batch_size {
            cfg.batch_size = v;
        }
        if let Some(v) = self.smote_k {
            cfg.smote_k = v;
        }
        if let Some(v) = self.gamma {
            cfg.gamma = v;
        }
        if let Some(v) = self.tau {
            cfg.tau = v;
        }
        if let Some(v) = self.epochs {
            cfg.epochs = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        let label_classes = corpus.labels.iter().copied().max().unwrap_or(0) as usize + 1;
        cfg.num_classes = match self.num_classes {
            Some(v) => v,
            None => cfg.num_classes.max(label_classes),
        };
        if label_classes > cfg.num_classes {
            return Err(Error::Data(format!(
                "labels use {label_classes} classes but num_classes is {}",
                cfg.num_classes
            )));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn resolve_split(&self, corpus: &MergedCorpus) -> Result<Split> {
        if let Some(path) = &self.split_file {
            let split: Split = serde_json::from_str(&read_to_string(path)?)?;
            return Ok(split);
        }
        match (&self.train_pieces, &self.val_pieces) {
            (Some(tr), val) => Ok(Split {
                train: parse_csv_list(tr),
                val: val.as_deref().map(parse_csv_list).unwrap_or_default(),
                test: Vec::new(),
            }),
            (None, _) => {
                // default protocol: seeded random half/half, no validation
                let split = sgsm_core::split::random_half(
                    &corpus.piece_ids,
                    self.seed.unwrap_or(0),
                )?;
                Ok(split)
            }
        }
    }
}

pub fn train(args: TrainArgs) -> Result<()> {
    std::fs::create_dir_all(&args.out)?;
    let (corpus, manifest_hash) = load_corpus(&args.graphs)?;
    let cfg = args.resolve_config(&corpus)?;
    let split = args.resolve_split(&corpus)?;
    let init = match &args.pretrained {
        Some(path) => {
            let (params, header) = load_checkpoint(path)?;
            if header.feature_manifest_hash != manifest_hash {
                return Err(Error::Data(format!(
                    "pretrained checkpoint {} was built against a different feature manifest",
                    path.display()
                )));
            }
            Some(params)
        }
        None => None,
    };
    write_json(
        &args.out.join("resolved_config.json"),
        &TrainRunConfig {
            command: "train",
            graphs: &args.graphs,
            out: &args.out,
            pretrained: args.pretrained.as_deref(),
            split: &split,
            train_config: &cfg,
            feature_manifest_hash: &manifest_hash,
        },
    )?;
    let output = train::train(&corpus, &split.train, &split.val, &cfg, init)?;
    let mut log = std::io::BufWriter::new(std::fs::File::create(args.out.join("train_log.jsonl"))?);
    for record in &output.log {
        serde_json::to_writer(&mut log, record)?;
        log.write_all(b"\n")?;
    }
    log.flush()?;
    let header = CheckpointHeader {
        dims: output.params.dims.clone(),
        feature_manifest_hash: manifest_hash,
        extra: serde_json::json!({ "best_epoch": output.best_epoch }),
    };
    save_checkpoint(&output.params, &header, &args.out.join("checkpoint.sgsm"))?;
    println!(
        "trained {} epoch(s); kept epoch {}; checkpoint written to {}",
        cfg.epochs,
        output.best_epoch,
        args.out.join("checkpoint.sgsm").display()
    );
    Ok(())
}

fn load_checked(
    checkpoint: &Path,
    graphs: &Path,
) -> Result<(ModelParams, CheckpointHeader, MergedCorpus)> {
    let (params, header) = load_checkpoint(checkpoint)?;
    let (corpus, hash) = load_corpus(graphs)?;
    if header.feature_manifest_hash != hash {
        return Err(Error::Data(format!(
            "checkpoint {} was trained against a different feature manifest",
            checkpoint.display()
        )));
    }
    if params.dims.input_dim != corpus.d {
        return Err(Error::Dimension(format!(
            "checkpoint expects {} features, graphs carry {}",
            params.dims.input_dim, corpus.d
        )));
    }
    Ok((params, header, corpus))
}

pub fn eval(
    checkpoint: &Path,
    graphs: &Path,
    pieces: Option<&str>,
    split_file: Option<&Path>,
    levels: &str,
    out: Option<&Path>,
) -> Result<()> {
    let (params, _, corpus) = load_checked(checkpoint, graphs)?;
    let piece_list: Vec<String> = match (pieces, split_file) {
        (Some(csv), _) => parse_csv_list(csv),
        (None, Some(path)) => serde_json::from_str::<Split>(&read_to_string(path)?)?.test,
        (None, None) => corpus.piece_ids.clone(),
    };
    let levels: Vec<Level> = levels
        .split(',')
        .map(|s| Level::from_str(s))
        .collect::<Result<_>>()?;
    let report = train::evaluate(&params, &corpus, &piece_list, &levels)?;
    let json = serde_json::to_string_pretty(&report)?;
    println!("{json}");
    if let Some(path) = out {
        std::fs::write(path, format!("{json}\n"))?;
    }
    Ok(())
}

pub fn predict(checkpoint: &Path, graphs: &Path, scores: &Path, out: &Path) -> Result<()> {
    let (params, _, corpus) = load_checked(checkpoint, graphs)?;
    // onsets come from the canonical scores, matched by piece id
    let mut onsets: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for path in score_files(scores)? {
        let score = load_score(&path)?;
        onsets.insert(
            score.piece_id.clone(),
            score.notes.iter().map(|n| n.onset.to_string()).collect(),
        );
    }
    let nodes: Vec<u32> = (0..corpus.adj.n as u32).collect();
    let probs = train::predict_nodes(&params, &corpus, &nodes)?;
    let preds = sgsm_core::metrics::argmax_preds(&probs);
    let mut w = std::io::BufWriter::new(std::fs::File::create(out)?);
    writeln!(w, "node_id\tpiece\tonset\tclass\tprobability")?;
    for (i, &node) in nodes.iter().enumerate() {
        let pi = corpus.piece_of[node as usize] as usize;
        let piece = &corpus.piece_ids[pi];
        let local = node as usize - corpus.node_offsets[pi];
        let onset = onsets
            .get(piece)
            .and_then(|v| v.get(local))
            .ok_or_else(|| {
                Error::Data(format!("piece {piece:?} missing from score directory"))
            })?;
        let class = preds[i];
        writeln!(
            w,
            "{node}\t{piece}\t{onset}\t{class}\t{:.6}",
            probs.get(i, class as usize)
        )?;
    }
    w.flush()?;
    println!("wrote {} prediction(s) to {}", nodes.len(), out.display());
    Ok(())
}
