use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use aot_cli::commands;
use aot_cli::config::CliConfig;
use aot_cli::CliResult;
use clap::{Parser, Subcommand};

/// Learn, score and explain AND-OR photography templates.
#[derive(Debug, Parser)]
#[command(name = "aot", version)]
struct Cli {
    /// Global configuration file (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides every seed in the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Learn object and scene templates of a theme from a manifest.
    Learn {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        theme: String,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Matching score of an image against a template.
    Score {
        #[arg(long)]
        template: PathBuf,
        #[arg(long)]
        image: PathBuf,
    },
    /// Label manifest images with the best-matching scene template.
    Classify {
        /// Directory holding `*.scene.json` templates.
        #[arg(long)]
        template: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
    },
    /// Write a guidance report for an image.
    Guide {
        #[arg(long)]
        template: PathBuf,
        #[arg(long)]
        image: PathBuf,
        /// Rule corpus (JSON); the shipped corpus when absent.
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Render the mean template as PNG.
    Render {
        #[arg(long)]
        template: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a synthetic corpus with ground-truth manifests.
    Synth {
        /// Generator spec (JSON), e.g. {"kind": "two-class"}.
        spec: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> CliResult<serde_json::Value> {
    let cfg = CliConfig::load(cli.config.as_deref())?.with_seed(cli.seed);
    match cli.command {
        Command::Learn { manifest, theme, out } => commands::learn(&manifest, &theme, &cfg, &out),
        Command::Score { template, image } => commands::score(&template, &image),
        Command::Classify { template, manifest } => commands::classify_manifest(&template, &manifest),
        Command::Guide { template, image, corpus, out } => commands::guide(&template, &image, corpus.as_deref(), &cfg, &out),
        Command::Render { template, out } => commands::render(&template, &out),
        Command::Synth { spec, out } => commands::synth(&spec, &out, cfg.seed()),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(value) => {
            // A closed stdout is the reader's choice, not a failure.
            let _ = writeln!(std::io::stdout(), "{}", serde_json::to_string_pretty(&value).expect("JSON values serialize"));
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
