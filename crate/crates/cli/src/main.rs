//! Command-line runner for the video anomaly event pipeline.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use vad_core::pipeline::scenario::SynthSpec;
use vad_core::pipeline::{
    config::BackendKind, generate_scenario, run_dataset, run_sweep, Manifest, ManifestVideo,
    PipelineConfig, Report,
};

#[derive(Parser)]
#[command(
    name = "vad",
    about = "Context-aware video anomaly scoring, interval aggregation, and event explanation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendArg {
    Http,
    Scripted,
}

#[derive(Subcommand)]
enum Command {
    /// Run the pipeline over a dataset manifest.
    Run {
        /// TOML config; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// JSON manifest listing videos and annotations.
        #[arg(long)]
        manifest: PathBuf,
        /// Override the configured model backend.
        #[arg(long, value_enum)]
        backend: Option<BackendArg>,
        /// Output directory for traces, report, and cache.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a flat parameter grid, one report per cell.
    Sweep {
        /// TOML file mapping config keys to value lists.
        #[arg(long)]
        grid: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, value_enum)]
        backend: Option<BackendArg>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate scripted scenarios (and a manifest) from synth specs.
    Synth {
        /// JSON file holding one spec or an array of specs.
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Summarize the report of a finished run.
    Report {
        /// Run directory containing report.json.
        #[arg(long = "in")]
        input: PathBuf,
    },
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Run {
            config,
            manifest,
            backend,
            out,
        } => {
            let config = load_config(config.as_deref(), backend)?;
            let manifest = Manifest::load(&manifest)?;
            let artifact = run_dataset(&manifest, &config, &out)?;
            print_report(&artifact.report);
            println!("artifacts written to {}", out.display());
            Ok(())
        }
        Command::Sweep {
            grid,
            config,
            manifest,
            backend,
            out,
        } => {
            let config = load_config(config.as_deref(), backend)?;
            let manifest = Manifest::load(&manifest)?;
            let grid = load_grid(&grid)?;
            let cells = run_sweep(&manifest, &config, &grid, &out)?;
            for (dir, report) in &cells {
                println!(
                    "{}: auc={} ap={} miou={} events/video={}",
                    dir.display(),
                    fmt_opt(report.auc),
                    fmt_opt(report.ap),
                    fmt_opt(report.miou),
                    fmt_opt(report.events_per_video),
                );
            }
            println!("grid summary: {}", out.join("grid.csv").display());
            Ok(())
        }
        Command::Synth { spec, out } => synth(&spec, &out),
        Command::Report { input } => {
            let path = input.join("report.json");
            let text = fs::read_to_string(&path)
                .with_context(|| format!("reading {}", path.display()))?;
            let value: serde_json::Value = serde_json::from_str(&text)?;
            let report: Report = serde_json::from_value(
                value
                    .get("report")
                    .cloned()
                    .unwrap_or_else(|| value.clone()),
            )?;
            print_report(&report);
            Ok(())
        }
    }
}

fn load_config(path: Option<&Path>, backend: Option<BackendArg>) -> Result<PipelineConfig> {
    let mut config = PipelineConfig::load(path)?;
    if let Some(backend) = backend {
        config.backend = match backend {
            BackendArg::Http => BackendKind::Http,
            BackendArg::Scripted => BackendKind::Scripted,
        };
    }
    config.validate()?;
    Ok(config)
}

fn load_grid(path: &Path) -> Result<BTreeMap<String, Vec<toml::Value>>> {
    let text =
        fs::read_to_string(path).with_context(|| format!("reading grid {}", path.display()))?;
    let table: toml::Table = toml::from_str(&text)?;
    let mut grid = BTreeMap::new();
    for (key, value) in table {
        match value {
            toml::Value::Array(values) => {
                grid.insert(key, values);
            }
            other => bail!("grid key {key} must map to an array, got {other}"),
        }
    }
    if grid.is_empty() {
        bail!("sweep grid is empty");
    }
    Ok(grid)
}

fn synth(spec_path: &Path, out: &Path) -> Result<()> {
    let text = fs::read_to_string(spec_path)
        .with_context(|| format!("reading spec {}", spec_path.display()))?;
    let specs: Vec<SynthSpec> = if text.trim_start().starts_with('[') {
        serde_json::from_str(&text)?
    } else {
        vec![serde_json::from_str(&text)?]
    };
    fs::create_dir_all(out)?;
    let mut videos = Vec::with_capacity(specs.len());
    for spec in &specs {
        let bundle = generate_scenario(spec)?;
        let path = out.join(format!("{}.scenario.json", bundle.id));
        bundle.save(&path)?;
        println!(
            "{}: {} segments, {} gold event(s), {} noise spike(s)",
            bundle.id,
            bundle.segments,
            bundle.gold.segment_intervals.len(),
            bundle.noise_segments.len(),
        );
        videos.push(ManifestVideo {
            id: bundle.id.clone(),
            frames_dir: None,
            scenario: Some(path),
            annotation: None,
        });
    }
    let manifest = Manifest {
        annotations: None,
        videos,
    };
    let manifest_path = out.join("manifest.json");
    fs::write(&manifest_path, serde_json::to_string_pretty(&manifest)?)?;
    println!("manifest: {}", manifest_path.display());
    Ok(())
}

fn fmt_opt(value: Option<f64>) -> String {
    value
        .map(|v| format!("{v:.4}"))
        .unwrap_or_else(|| "n/a".to_string())
}

fn print_report(report: &Report) {
    println!("videos run:        {}", report.videos_run);
    println!("auc:               {}", fmt_opt(report.auc));
    println!("ap:                {}", fmt_opt(report.ap));
    println!("miou:              {}", fmt_opt(report.miou));
    println!("events/video:      {}", fmt_opt(report.events_per_video));
    println!(
        "raw flag runs:     {}",
        fmt_opt(report.raw_flag_runs_per_video)
    );
    if !report.judge_accuracy_by_variant.is_empty() {
        println!("judge accuracy by explanation variant:");
        for (variant, accuracy) in &report.judge_accuracy_by_variant {
            let tokens = report
                .judge_token_length_by_variant
                .get(variant)
                .copied()
                .unwrap_or(0.0);
            println!("  {variant:<16} acc={accuracy:.3} tokens={tokens:.1}");
        }
    }
    for note in &report.metric_notes {
        println!("note: {note}");
    }
    if !report.missing_videos.is_empty() {
        println!("missing videos:");
        for missing in &report.missing_videos {
            println!("  {missing}");
        }
    }
    if !report.video_errors.is_empty() {
        println!("video errors: {}", report.video_errors.len());
    }
}
