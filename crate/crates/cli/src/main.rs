use std::net::SocketAddr;
use std::path::PathBuf;

use anyhow::Result;
use clap::{Parser, Subcommand, ValueEnum};
use triage_core::active_learning::ExportFormat;
use triage_core::scoring::QualityLabel;

mod commands;
mod evaluate;
mod output;

#[derive(Debug, Parser)]
#[command(
    name = "triage",
    version,
    about = "Lung ultrasound triage: scoring, reports, evaluation and relabelling"
)]
struct Cli {
    /// Pipeline config (JSON). Falls back to $TRIAGE_CONFIG, then defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Score every frame and video of a study.
    Score {
        #[arg(long)]
        manifest: PathBuf,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Copy a video's summary frames into a directory and list them.
    Summarize {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        video: String,
        #[arg(long)]
        out: PathBuf,
        /// Keep only frames at or above this quality label.
        #[arg(long, value_parser = parse_quality)]
        quality_min: Option<QualityLabel>,
    },
    /// Build the 14-point scan report.
    Report {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        svg: Option<PathBuf>,
    },
    /// Evaluate detections against ground truth.
    Evaluate {
        #[arg(long)]
        gt_manifest: PathBuf,
        #[arg(long)]
        pred_manifest: PathBuf,
        /// A single IoU threshold, or `sweep` for 0.50:0.95 in steps of 0.05.
        #[arg(long, default_value = "0.5")]
        iou: IouArg,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write precision/recall/F1 curves as CSV.
        #[arg(long)]
        curves: Option<PathBuf>,
    },
    /// Accuracy, sensitivity and specificity from a confusion matrix.
    Metrics {
        /// Matrix JSON: {"rows", "columns", "counts"}.
        #[arg(long)]
        confusion: Option<PathBuf>,
        /// Columns left out of the one-vs-rest counts.
        #[arg(long)]
        exclude: Vec<String>,
        /// Video-level matrix, rows Abnormal/Normal by columns Abnormal/Normal/Undetected.
        #[arg(long)]
        binary_video: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Show the relabel queue, adding newly selected frames.
    Queue {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, value_enum, default_value_t = StatusFilter::Open)]
        status: StatusFilter,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Record a clinician override for one frame.
    Override {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        frame: String,
        #[arg(long)]
        author: String,
        /// JSON array of {"class", "bbox": [x_min, y_min, x_max, y_max]}.
        #[arg(long)]
        annotations: PathBuf,
        #[arg(long)]
        note: Option<String>,
    },
    /// Export reviewed frames as a retraining set.
    Export {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, value_parser = parse_format, default_value = "label-text")]
        format: ExportFormat,
        #[arg(long)]
        out: PathBuf,
    },
    /// Serve the HTTP API over every study under a root directory.
    Serve {
        #[arg(long)]
        root: PathBuf,
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
    },
}

#[derive(Debug, Clone, Copy)]
enum IouArg {
    Single(f64),
    Sweep,
}

impl std::str::FromStr for IouArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "sweep" {
            return Ok(IouArg::Sweep);
        }
        match s.parse::<f64>() {
            Ok(v) if (0.0..=1.0).contains(&v) => Ok(IouArg::Single(v)),
            _ => Err(format!("expected a threshold in [0, 1] or `sweep`, got {s:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum StatusFilter {
    /// Pending and Reviewed.
    Open,
    Pending,
    Reviewed,
    Exported,
    All,
}

fn parse_quality(s: &str) -> Result<QualityLabel, String> {
    s.parse()
}

fn parse_format(s: &str) -> Result<ExportFormat, String> {
    s.parse()
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "warn".into()))
        .with_writer(std::io::stderr)
        .init();

    let config = triage_core::PipelineConfig::resolve(cli.config.as_deref())?;
    match cli.command {
        Command::Score { manifest, out } => commands::score(&config, &manifest, out.as_deref()),
        Command::Summarize {
            manifest,
            video,
            out,
            quality_min,
        } => commands::summarize(&config, &manifest, &video, &out, quality_min),
        Command::Report { manifest, out, svg } => commands::report(&config, &manifest, out.as_deref(), svg.as_deref()),
        Command::Evaluate {
            gt_manifest,
            pred_manifest,
            iou,
            out,
            curves,
        } => {
            let thresholds = match iou {
                IouArg::Single(t) => vec![t],
                IouArg::Sweep => triage_core::evaluation::coco_iou_thresholds(),
            };
            evaluate::run(
                &config,
                &gt_manifest,
                &pred_manifest,
                &thresholds,
                out.as_deref(),
                curves.as_deref(),
            )
        }
        Command::Metrics {
            confusion,
            exclude,
            binary_video,
            out,
        } => commands::metrics(confusion.as_deref(), &exclude, binary_video.as_deref(), out.as_deref()),
        Command::Queue { manifest, status, out } => commands::queue(&config, &manifest, status, out.as_deref()),
        Command::Override {
            manifest,
            frame,
            author,
            annotations,
            note,
        } => commands::add_override(&config, &manifest, frame, author, &annotations, note),
        Command::Export { manifest, format, out } => commands::export(&config, &manifest, format, &out),
        Command::Serve { root, addr } => commands::serve(config, &root, addr),
    }
}
