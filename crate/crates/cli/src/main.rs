//! `sgsm`: ingest scores, build note graphs, train, evaluate, and predict.

mod commands;

use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "sgsm", version, about = "Cadence detection on note graphs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Convert .krn or Note-Table scores into canonical Note-Table files.
    Ingest {
        /// Input files (.krn, or .tsv with a sibling .meta.json).
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build graph files from a directory of canonical Note-Table scores.
    Build {
        #[arg(long)]
        scores: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// `all` (83 features) or `general` (71 features).
        #[arg(long, default_value = "all")]
        feature_set: String,
        /// `binary`, `binary:<pac|riac|hc>`, or `multiclass`.
        #[arg(long, default_value = "binary")]
        scheme: String,
    },
    /// Train a model on graph files.
    Train {
        #[arg(long)]
        graphs: PathBuf,
        /// Run directory: checkpoint, log, and resolved config land here.
        #[arg(long)]
        out: PathBuf,
        /// JSON file with TrainConfig fields; flags override it.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        hidden_dim: Option<usize>,
        #[arg(long)]
        layers: Option<usize>,
        /// Comma-separated per-layer fanouts, outermost hop first.
        #[arg(long)]
        fanouts: Option<String>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        weight_decay: Option<f64>,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long)]
        smote_k: Option<usize>,
        #[arg(long)]
        gamma: Option<f64>,
        #[arg(long)]
        tau: Option<f64>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        num_classes: Option<usize>,
        /// Comma-separated training piece ids.
        #[arg(long)]
        train_pieces: Option<String>,
        /// Comma-separated validation piece ids.
        #[arg(long)]
        val_pieces: Option<String>,
        /// JSON file with {"train": [...], "val": [...], "test": [...]}.
        #[arg(long)]
        split_file: Option<PathBuf>,
        /// Checkpoint to fine-tune from.
        #[arg(long)]
        pretrained: Option<PathBuf>,
    },
    /// Evaluate a checkpoint on graph files.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        graphs: PathBuf,
        /// Comma-separated piece ids (default: the split file's test list,
        /// or every piece).
        #[arg(long)]
        pieces: Option<String>,
        #[arg(long)]
        split_file: Option<PathBuf>,
        /// Comma-separated granularities.
        #[arg(long, default_value = "note,onset,beat")]
        levels: String,
        /// Also write the JSON report here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Dump per-node predictions as TSV.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        graphs: PathBuf,
        /// Canonical score directory (for onset values in the dump).
        #[arg(long)]
        scores: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn exit_code_for(err: &sgsm_core::Error) -> u8 {
    match err {
        sgsm_core::Error::Numeric(_) | sgsm_core::Error::Dimension(_) => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.command {
        Command::Ingest { inputs, out } => commands::ingest(&inputs, &out),
        Command::Build {
            scores,
            out,
            feature_set,
            scheme,
        } => commands::build(&scores, &out, &feature_set, &scheme),
        Command::Train {
            graphs,
            out,
            config,
            hidden_dim,
            layers,
            fanouts,
            lr,
            weight_decay,
            batch_size,
            smote_k,
            gamma,
            tau,
            epochs,
            seed,
            num_classes,
            train_pieces,
            val_pieces,
            split_file,
            pretrained,
        } => commands::train(commands::TrainArgs {
            graphs,
            out,
            config,
            hidden_dim,
            layers,
            fanouts,
            lr,
            weight_decay,
            batch_size,
            smote_k,
            gamma,
            tau,
            epochs,
            seed,
            num_classes,
            train_pieces,
            val_pieces,
            split_file,
            pretrained,
        }),
        Command::Eval {
            checkpoint,
            graphs,
            pieces,
            split_file,
            levels,
            out,
        } => commands::eval(&checkpoint, &graphs, pieces.as_deref(), split_file.as_deref(), &levels, out.as_deref()),
        Command::Predict {
            checkpoint,
            graphs,
            scores,
            out,
        } => commands::predict(&checkpoint, &graphs, &scores, &out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}
