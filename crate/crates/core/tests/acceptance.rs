//! Acceptance harness: one test per criterion, each printing PASS on
//! success (run with `--nocapture` to see the lines).

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use sgsm_core::features::spectral;
use sgsm_core::features::FeatureSet;
use sgsm_core::graph::{build_edges, disjoint_union, Adjacency, EdgeList, EdgeTag, ScoreGraph};
use sgsm_core::metrics::Level;
use sgsm_core::model::net::{self, BatchData};
use sgsm_core::model::{smote, ModelDims, ModelParams};
use sgsm_core::rational::Rational;
use sgsm_core::sampling::sample_neighbors;
use sgsm_core::score::{
    LabelScheme, NoteEvent, Score, SignatureEvent, SignatureKind, TimeSignature,
};
use sgsm_core::synthetic;
use sgsm_core::tensor::Tensor2;
use sgsm_core::train::{self, TrainConfig};

fn random_adjacency<R: Rng>(n: usize, extra_edges: usize, rng: &mut R) -> Adjacency {
    let mut pairs = Vec::new();
    // spanning chain keeps most of the graph connected
    for i in 1..n as u32 {
        pairs.push((i - 1, i, EdgeTag::Cons));
    }
    for _ in 0..extra_edges {
        let a = rng.gen_range(0..n as u32);
        let b = rng.gen_range(0..n as u32);
        if a != b {
            pairs.push((a.min(b), a.max(b), EdgeTag::Dur));
        }
    }
    Adjacency::from_edges(n, &EdgeList { pairs }).unwrap()
}

// ---------------------------------------------------------------------------
// 1. Gradient correctness on random toy graphs
// ---------------------------------------------------------------------------

#[test]
fn criterion_1_gradient_correctness() {
    let started = std::time::Instant::now();
    for seed in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 30;
        let adj = random_adjacency(n, 25, &mut rng);
        let dims = ModelDims {
            input_dim: 10,
            hidden_dim: 8,
            layers: 2,
            classes: 2,
        };
        let params = ModelParams::init(dims, &mut rng);
        let seeds: Vec<u32> = (0..n as u32).filter(|_| rng.gen_bool(0.4)).collect();
        let seeds = if seeds.len() < 4 { vec![0, 5, 10, 15] } else { seeds };
        let blocks = sample_neighbors(&adj, &seeds, &[3, 4], &mut rng);
        let n_in = blocks.input_ids().len();
        let x = Tensor2::from_vec(
            n_in,
            10,
            (0..n_in * 10).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        );
        let labels: Vec<u8> = seeds.iter().map(|_| u8::from(rng.gen_bool(0.25))).collect();
        let m0 = seeds.len();
        let mut a_b = Tensor2::zeros(m0, m0);
        for i in 0..m0 {
            for j in 0..m0 {
                if i != j && adj.neighbors_of(seeds[i] as usize).contains(&seeds[j]) {
                    a_b.set(i, j, 1.0);
                }
            }
        }
        let batch = BatchData {
            blocks,
            x,
            labels: labels.clone(),
            a_b,
        };
        let (gamma, tau) = (0.5, 0.5);
        let (h_enc, _) = net::encode(&params, &batch.blocks, &batch.x).unwrap();
        let plan = smote::make_plan(&h_enc, &labels, 3, &mut rng);
        let (_, cache) =
            net::train_forward(&params, &batch, |_, _| plan.clone(), gamma, tau).unwrap();
        let grads = net::train_backward(&params, &batch, &cache, gamma, tau).unwrap();
        let h = 1e-5;
        let n_mats = params.matrices().len();
        for mi in 0..n_mats {
            for idx in 0..params.matrices()[mi].data.len() {
                let mut pp = params.clone();
                pp.matrices_mut()[mi].data[idx] += h;
                let (lp, _) =
                    net::train_forward(&pp, &batch, |_, _| plan.clone(), gamma, tau).unwrap();
                let mut pm = params.clone();
                pm.matrices_mut()[mi].data[idx] -= h;
                let (lm, _) =
                    net::train_forward(&pm, &batch, |_, _| plan.clone(), gamma, tau).unwrap();
                let fd = (lp.total - lm.total) / (2.0 * h);
                let an = grads.matrices()[mi].data[idx];
                let abs = (fd - an).abs();
                let rel = abs / fd.abs().max(an.abs()).max(1e-12);
                assert!(
                    abs <= 1e-8 || rel <= 1e-4,
                    "seed {seed} matrix {mi} entry {idx}: fd={fd} analytic={an}"
                );
            }
        }
    }
    assert!(started.elapsed().as_secs() < 120, "criterion 1 exceeded 2 min");
    println!("criterion 1 (gradient correctness, 10 graphs): PASS");
}

// ---------------------------------------------------------------------------
// 2. Edge builder equals the O(n^2) predicate oracle
// ---------------------------------------------------------------------------

fn random_score<R: Rng>(rng: &mut R, piece: usize) -> Score {
    let n = rng.gen_range(2..=50);
    let mut notes = Vec::with_capacity(n);
    for _ in 0..n {
        let den = *[1i64, 2, 4].get(rng.gen_range(0..3)).unwrap();
        let onset = Rational::new(rng.gen_range(0..32), den);
        let dden = *[1i64, 2, 4].get(rng.gen_range(0..3)).unwrap();
        let duration = Rational::new(rng.gen_range(1..=8), dden);
        let is_rest = rng.gen_bool(0.1);
        notes.push(NoteEvent {
            id: 0,
            onset,
            duration,
            midi_pitch: if is_rest { None } else { Some(rng.gen_range(30..100)) },
            voice: rng.gen_range(0..4),
            is_rest,
        });
    }
    let mut score = Score {
        piece_id: format!("rand{piece}"),
        notes,
        signatures: vec![SignatureEvent {
            onset: Rational::int(0),
            kind: SignatureKind::Time(TimeSignature { num: 4, den: 4 }),
        }],
        annotations: Vec::new(),
    };
    score.normalize();
    score
}

fn oracle_edges(score: &Score) -> Vec<(u32, u32, EdgeTag)> {
    let notes = &score.notes;
    let mut out = Vec::new();
    for i in 0..notes.len() {
        for j in i + 1..notes.len() {
            let (a, b) = (&notes[i], &notes[j]);
            let tag = if a.onset == b.onset {
                Some(EdgeTag::On)
            } else if a.onset + a.duration == b.onset || b.onset + b.duration == a.onset {
                Some(EdgeTag::Cons)
            } else if (a.onset < b.onset && b.onset < a.onset + a.duration)
                || (b.onset < a.onset && a.onset < b.onset + b.duration)
            {
                Some(EdgeTag::Dur)
            } else {
                None
            };
            if let Some(t) = tag {
                out.push((i as u32, j as u32, t));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn criterion_2_edge_oracle_equivalence() {
    let started = std::time::Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    for case in 0..200 {
        let score = random_score(&mut rng, case);
        let mut built: Vec<(u32, u32, EdgeTag)> = build_edges(&score)
            .pairs
            .iter()
            .map(|&(i, j, t)| (i.min(j), i.max(j), t))
            .collect();
        built.sort();
        let expected = oracle_edges(&score);
        assert_eq!(built, expected, "case {case} ({} notes)", score.notes.len());
    }
    assert!(started.elapsed().as_secs() < 10, "criterion 2 exceeded 10 s");
    println!("criterion 2 (edge oracle, 200 scores): PASS");
}

// ---------------------------------------------------------------------------
// 3. SMOTE invariants
// ---------------------------------------------------------------------------

#[test]
fn criterion_3_smote_invariants() {
    let mut rng = ChaCha8Rng::seed_from_u64(30);
    for case in 0..100 {
        let rows = rng.gen_range(4..=40);
        let cols = rng.gen_range(2..=8);
        let classes = rng.gen_range(2..=3u8);
        let h = Tensor2::from_vec(
            rows,
            cols,
            (0..rows * cols).map(|_| rng.gen_range(-2.0..2.0)).collect(),
        );
        let labels: Vec<u8> = (0..rows).map(|_| rng.gen_range(0..classes)).collect();
        let out = smote::upsample(&h, &labels, 3, &mut rng);
        // balanced counts for every class with at least 2 members
        let mut counts = vec![0usize; classes as usize];
        for &l in &labels {
            counts[l as usize] += 1;
        }
        let mu_max = *counts.iter().max().unwrap();
        let mut aug_counts = vec![0usize; classes as usize];
        for &l in &out.labels_aug {
            aug_counts[l as usize] += 1;
        }
        for c in 0..classes as usize {
            if counts[c] >= 2 {
                assert_eq!(aug_counts[c], mu_max, "case {case} class {c}");
            } else {
                assert_eq!(aug_counts[c], counts[c], "case {case} skipped class {c}");
            }
        }
        // every synthetic row is the recorded convex combination
        for (si, s) in out.plan.rows.iter().enumerate() {
            assert_eq!(labels[s.anchor], s.label);
            assert_eq!(labels[s.neighbor], s.label);
            assert!((0.0..=1.0).contains(&s.lambda));
            let row = out.h.row(rows + si);
            for c in 0..cols {
                let a = h.get(s.anchor, c);
                let b = h.get(s.neighbor, c);
                let expect = a + s.lambda * (b - a);
                assert!((row[c] - expect).abs() < 1e-12);
                assert!(row[c] >= a.min(b) - 1e-12 && row[c] <= a.max(b) + 1e-12);
            }
        }
    }
    println!("criterion 3 (SMOTE invariants, 100 batches): PASS");
}

// ---------------------------------------------------------------------------
// 4. Spectral features: eigenpair residuals, orthonormality, padding
// ---------------------------------------------------------------------------

#[test]
fn criterion_4_spectral_features() {
    let mut rng = ChaCha8Rng::seed_from_u64(40);
    for case in 0..50 {
        let n = rng.gen_range(2..=200);
        let adj = random_adjacency(n, n / 2, &mut rng);
        let k = 20;
        let feats = spectral::spectral_features(&adj, k, "acceptance").unwrap();
        assert_eq!(feats.len(), n * k);
        let lap = spectral::normalized_laplacian(&adj);
        let col = |j: usize| -> Vec<f64> { (0..n).map(|i| feats[i * k + j]).collect() };
        let m = n.min(k);
        for j in 0..m {
            let v = col(j);
            // Rayleigh quotient as the eigenvalue estimate
            let lv: Vec<f64> = (0..n)
                .map(|i| (0..n).map(|jj| lap[(i, jj)] * v[jj]).sum())
                .collect();
            let lambda: f64 = v.iter().zip(&lv).map(|(a, b)| a * b).sum();
            let resid: f64 = lv
                .iter()
                .zip(&v)
                .map(|(a, b)| (a - lambda * b).powi(2))
                .sum::<f64>()
                .sqrt();
            assert!(resid <= 1e-6, "case {case} n={n} col {j}: residual {resid}");
            for j2 in 0..j {
                let dot: f64 = v.iter().zip(col(j2)).map(|(a, b)| a * b).sum();
                assert!(dot.abs() <= 1e-6, "case {case} cols {j2},{j}: dot {dot}");
            }
            let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() <= 1e-6, "case {case} col {j}: norm {norm}");
        }
        // zero padding beyond the spectrum
        for j in m..k {
            assert!(col(j).iter().all(|&x| x == 0.0), "case {case} pad col {j}");
        }
    }
    println!("criterion 4 (spectral features, 50 graphs): PASS");
}

// ---------------------------------------------------------------------------
// 5. Synthetic learnability
// ---------------------------------------------------------------------------

fn build_corpus(scores: &[Score], fs: FeatureSet) -> sgsm_core::graph::MergedCorpus {
    let scheme = LabelScheme::Binary { target: None };
    let graphs: Vec<ScoreGraph> = scores
        .iter()
        .map(|s| sgsm_core::score_to_graph(s, &scheme, fs).unwrap().0)
        .collect();
    let refs: Vec<&ScoreGraph> = graphs.iter().collect();
    disjoint_union(&refs).unwrap()
}

fn note_f1(
    params: &ModelParams,
    corpus: &sgsm_core::graph::MergedCorpus,
    pieces: &[String],
) -> f64 {
    train::evaluate(params, corpus, pieces, &[Level::Note]).unwrap().levels["note"].positive_f1()
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

#[test]
fn criterion_5_synthetic_learnability() {
    let started = std::time::Instant::now();
    let scores = synthetic::motif_corpus(25, 16, 0.02, 42);
    let corpus = build_corpus(&scores, FeatureSet::All);
    let train_pieces: Vec<String> = corpus.piece_ids[..20].to_vec();
    let test_pieces: Vec<String> = corpus.piece_ids[20..].to_vec();
    let mut train_f1 = Vec::new();
    let mut test_f1 = Vec::new();
    for seed in [1u64, 2, 3] {
        let cfg = TrainConfig {
            hidden_dim: 64,
            batch_size: 256,
            epochs: 25,
            seed,
            ..TrainConfig::default()
        };
        let out = train::train(&corpus, &train_pieces, &[], &cfg, None).unwrap();
        // training loss decreases over the first epochs
        let losses: Vec<f64> = out.log.iter().take(5).map(|r| r.loss_total).collect();
        assert!(
            losses.windows(2).filter(|w| w[1] < w[0]).count() >= 3,
            "seed {seed}: loss not trending down: {losses:?}"
        );
        train_f1.push(note_f1(&out.params, &corpus, &train_pieces));
        test_f1.push(note_f1(&out.params, &corpus, &test_pieces));
    }
    let (tr, te) = (median(train_f1.clone()), median(test_f1.clone()));
    assert!(tr >= 0.90, "median train F1 {tr} < 0.90 ({train_f1:?})");
    assert!(te >= 0.70, "median held-out F1 {te} < 0.70 ({test_f1:?})");
    assert!(started.elapsed().as_secs() < 600, "criterion 5 exceeded 10 min");
    println!("criterion 5 (synthetic learnability): PASS (train F1 {tr:.3}, test F1 {te:.3})");
}

// ---------------------------------------------------------------------------
// 6. Depth-ablation trend
// ---------------------------------------------------------------------------

#[test]
fn criterion_6_depth_ablation() {
    let scores = synthetic::context_corpus(15, 64, 9);
    let corpus = build_corpus(&scores, FeatureSet::General);
    let train_pieces: Vec<String> = corpus.piece_ids[..12].to_vec();
    let test_pieces: Vec<String> = corpus.piece_ids[12..].to_vec();
    let run = |layers: usize, fanouts: Vec<usize>, seed: u64| -> f64 {
        let cfg = TrainConfig {
            hidden_dim: 64,
            layers,
            fanouts,
            batch_size: 256,
            epochs: 25,
            seed,
            ..TrainConfig::default()
        };
        let out = train::train(&corpus, &train_pieces, &[], &cfg, None).unwrap();
        note_f1(&out.params, &corpus, &test_pieces)
    };
    let mut margins = Vec::new();
    for seed in [3u64, 4, 5] {
        let two_hop = run(2, vec![10, 25], seed);
        let no_conv = run(0, Vec::new(), seed);
        margins.push(two_hop - no_conv);
    }
    let m = median(margins.clone());
    assert!(m >= 0.05, "median 2-hop advantage {m} < 0.05 ({margins:?})");
    println!("criterion 6 (depth ablation): PASS (median margin {m:.3})");
}

// ---------------------------------------------------------------------------
// 7. Determinism: byte-identical checkpoints and metrics
// ---------------------------------------------------------------------------

#[test]
fn criterion_7_determinism() {
    let scores = synthetic::motif_corpus(6, 8, 0.03, 7);
    let corpus = build_corpus(&scores, FeatureSet::All);
    let train_pieces: Vec<String> = corpus.piece_ids[..4].to_vec();
    let val_pieces: Vec<String> = corpus.piece_ids[4..5].to_vec();
    let test_pieces: Vec<String> = corpus.piece_ids[5..].to_vec();
    let cfg = TrainConfig {
        hidden_dim: 16,
        batch_size: 128,
        epochs: 4,
        seed: 99,
        ..TrainConfig::default()
    };
    let dir = tempfile::tempdir().unwrap();
    let mut artifacts = Vec::new();
    for run in 0..2 {
        let out = train::train(&corpus, &train_pieces, &val_pieces, &cfg, None).unwrap();
        let path = dir.path().join(format!("run{run}.sgsm"));
        let header = sgsm_core::model::CheckpointHeader {
            dims: out.params.dims.clone(),
            feature_manifest_hash: "determinism".into(),
            extra: serde_json::Value::Null,
        };
        sgsm_core::model::save_checkpoint(&out.params, &header, &path).unwrap();
        let report = train::evaluate(
            &out.params,
            &corpus,
            &test_pieces,
            &[Level::Note, Level::Onset, Level::Beat],
        )
        .unwrap();
        artifacts.push((std::fs::read(&path).unwrap(), serde_json::to_vec(&report).unwrap()));
    }
    assert_eq!(artifacts[0].0, artifacts[1].0, "checkpoints differ byte-wise");
    assert_eq!(artifacts[0].1, artifacts[1].1, "metrics differ byte-wise");
    println!("criterion 7 (determinism): PASS");
}

// ---------------------------------------------------------------------------
// 8. Optional corpus statistics (network/dataset dependent)
// ---------------------------------------------------------------------------

#[test]
fn criterion_8_bach_corpus_statistics() {
    let dir = match std::env::var("SGSM_BACH_KERN_DIR") {
        Ok(d) if !d.is_empty() => std::path::PathBuf::from(d),
        _ => {
            println!("criterion 8 (corpus statistics): SKIP (set SGSM_BACH_KERN_DIR to run)");
            return;
        }
    };
    let mut files: Vec<_> = std::fs::read_dir(&dir)
        .expect("read corpus dir")
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().and_then(|e| e.to_str()) == Some("krn"))
        .collect();
    files.sort();
    let (mut nodes, mut edges, mut skipped) = (0usize, 0usize, Vec::new());
    for path in &files {
        let text = std::fs::read_to_string(path).unwrap();
        match sgsm_core::kern::parse_kern(&text, path.file_stem().unwrap().to_str().unwrap()) {
            Ok(score) => {
                let n = score.notes.len();
                let e = build_edges(&score).pairs.len();
                nodes += n;
                edges += e;
            }
            Err(err) => skipped.push(format!("{}: {err}", path.display())),
        }
    }
    for s in &skipped {
        println!("criterion 8: skipped piece ({s})");
    }
    println!(
        "criterion 8: {} piece(s), {nodes} node(s), {edges} edge(s)",
        files.len() - skipped.len()
    );
    let node_dev = (nodes as f64 - 24_567.0).abs() / 24_567.0;
    let edge_dev = (edges as f64 - 229_107.0).abs() / 229_107.0;
    assert!(node_dev <= 0.10, "node count deviates {:.1}%", node_dev * 100.0);
    assert!(edge_dev <= 0.15, "edge count deviates {:.1}%", edge_dev * 100.0);
    println!("criterion 8 (corpus statistics): PASS");
}
