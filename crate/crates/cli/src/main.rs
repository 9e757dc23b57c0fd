//! `cpm` — construction progress monitoring pipeline.
//!
//! Subcommands: validate, augment, split, eval, progress, reconcile, report.
//! Exit codes: 0 success, 1 validation or domain failure, 2 usage error.

mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use config::Config;

#[derive(Debug, Parser)]
#[command(
    name = "cpm",
    version,
    about = "Window-installation progress monitoring pipeline"
)]
struct Cli {
    /// Path to a JSON config file (or set CPM_CONFIG).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Validate,
    Ingest,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum WindowTypeArg {
    SingleLayer,
    DoubleLayer,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Scan a dataset and validate every label file.
    Validate {
        /// Dataset root (images/ + labels/).
        #[arg(long)]
        root: PathBuf,
        /// Out-of-bounds box handling.
        #[arg(long, value_enum, default_value = "validate")]
        mode: ModeArg,
        /// Class map file (JSON array of names); bounds accepted class ids.
        #[arg(long)]
        class_map: Option<PathBuf>,
    },
    /// Expand a dataset with the augmentation plan.
    Augment {
        #[arg(long)]
        root: PathBuf,
        /// Output dataset root.
        #[arg(long)]
        out: PathBuf,
        /// Augmentation plan (JSON list of operation descriptors).
        #[arg(long)]
        plan: PathBuf,
    },
    /// Assign every item to train/val/test deterministically.
    Split {
        #[arg(long)]
        root: PathBuf,
        /// Assignment file to write.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0.88)]
        train: f64,
        #[arg(long, default_value_t = 0.06)]
        val: f64,
        #[arg(long, default_value_t = 0.06)]
        test: f64,
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
    /// Evaluate predictions against dataset labels (mAP50, mAP50-95).
    Eval {
        /// Ground-truth dataset root.
        #[arg(long)]
        root: PathBuf,
        /// Predictions file (JSON list of {image, class_id, box, confidence}).
        #[arg(long)]
        predictions: PathBuf,
        /// Summary file to write.
        #[arg(long)]
        out: PathBuf,
        /// Confidence cutoff for the summary precision/recall/F1.
        #[arg(long)]
        min_confidence: Option<f64>,
    },
    /// Infer per-window installation timelines from detector events.
    Progress {
        /// Events file (JSON list of {window_id, timestamp, checkpoint_class,
        /// confidence}).
        #[arg(long)]
        events: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Events below this confidence are ignored.
        #[arg(long)]
        min_confidence: Option<f64>,
        #[arg(long, value_enum, default_value = "double-layer")]
        window_type: WindowTypeArg,
    },
    /// Reconcile QR observations against the BIM target list.
    Reconcile {
        /// Target list (JSON list of {window_id, position, normal}).
        #[arg(long)]
        targets: PathBuf,
        /// Coordinate markers (JSON list of {marker_id, scene, building}).
        #[arg(long)]
        markers: PathBuf,
        /// QR observations (JSON list of {window_id, scene, image,
        /// decode_quality}).
        #[arg(long)]
        observations: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Directory of site images (PGM) for the quality gate.
        #[arg(long)]
        images: Option<PathBuf>,
        /// Image -> covered windows map (JSON object).
        #[arg(long)]
        coverage: Option<PathBuf>,
        /// Position tolerance in meters.
        #[arg(long)]
        pos_tol: Option<f64>,
        #[arg(long)]
        min_sharpness: Option<f64>,
        #[arg(long)]
        min_contrast: Option<f64>,
        #[arg(long)]
        max_clip_fraction: Option<f64>,
    },
    /// Merge a progress report and a reconciliation report per window.
    Report {
        /// Progress report written by `cpm progress`.
        #[arg(long)]
        progress: PathBuf,
        /// Reconciliation report written by `cpm reconcile`.
        #[arg(long)]
        reconcile: PathBuf,
        /// Combined JSON report to write.
        #[arg(long)]
        out: PathBuf,
        /// Optional human-readable table.
        #[arg(long)]
        text: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let config = match Config::load(cli.config.as_deref()) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(1);
        }
    };

    let outcome = match cli.command {
        Command::Validate {
            root,
            mode,
            class_map,
        } => commands::validate::run(&root, mode, class_map.as_deref(), &config),
        Command::Augment { root, out, plan } => commands::augment::run(&root, &out, &plan),
        Command::Split {
            root,
            out,
            train,
            val,
            test,
            seed,
        } => commands::split::run(&root, &out, train, val, test, seed),
        Command::Eval {
            root,
            predictions,
            out,
            min_confidence,
        } => commands::eval::run(&root, &predictions, &out, min_confidence, &config),
        Command::Progress {
            events,
            out,
            min_confidence,
            window_type,
        } => commands::progress::run(&events, &out, min_confidence, window_type, &config),
        Command::Reconcile {
            targets,
            markers,
            observations,
            out,
            images,
            coverage,
            pos_tol,
            min_sharpness,
            min_contrast,
            max_clip_fraction,
        } => commands::reconcile::run(commands::reconcile::Args {
            targets,
            markers,
            observations,
            out,
            images,
            coverage,
            pos_tol,
            min_sharpness,
            min_contrast,
            max_clip_fraction,
            config: &config,
        }),
        Command::Report {
            progress,
            reconcile,
            out,
            text,
        } => commands::report::run(&progress, &reconcile, &out, text.as_deref()),
    };

    match outcome {
        Ok(commands::Outcome::Clean) => ExitCode::SUCCESS,
        Ok(commands::Outcome::Findings) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
