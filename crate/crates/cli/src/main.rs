use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand};
use glancevad::bench::{BenchConfig, Study};
use glancevad::dataio::{read_json, DatasetManifest};
use glancevad::mining::MiningConfig;
use glancevad::splatting::KernelFamily;
use glancevad::trainer::TrainConfig;
use glancevad::types::RngSeed;
use glancevad::{Error, Result};
use glancevad_cli::commands::{self, EvalArgs, RenderArgs, TrainArgs};
use glancevad_cli::server::{self, AppState};

#[derive(Parser)]
#[command(name = "glancevad", version, about = "Glance-supervised video anomaly detection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset with ground truth and sampled glances.
    Synth {
        /// JSON synthetic-data configuration; defaults apply to missing keys.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Render pseudo-label tracks from glances, optionally after mining.
    Render {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        glances: PathBuf,
        /// JSON object mapping video ids to snippet scores.
        #[arg(long)]
        scores: Option<PathBuf>,
        #[arg(long, default_value_t = 0.9)]
        alpha: f64,
        /// Compare scores against alpha itself instead of alpha times the
        /// glance score.
        #[arg(long)]
        no_dynamic_threshold: bool,
        #[arg(long = "r-g", default_value_t = 0.1)]
        r_g: f64,
        #[arg(long, default_value = "normal")]
        family: KernelFamily,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a scorer and write a checkpoint plus a JSON-lines log.
    Train {
        #[arg(long)]
        manifest: PathBuf,
        /// Required unless --weak is given.
        #[arg(long)]
        glances: Option<PathBuf>,
        /// JSON training configuration; defaults apply to missing keys.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Training log; defaults to the checkpoint path with `.log.jsonl`.
        #[arg(long)]
        log: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long = "r-g")]
        r_g: Option<f64>,
        #[arg(long)]
        family: Option<KernelFamily>,
        /// Supervise with the glance kernels only.
        #[arg(long)]
        no_mining: bool,
        #[arg(long)]
        no_dynamic_threshold: bool,
        /// Use the 0/1 indicator of glances and mined snippets as targets.
        #[arg(long)]
        binary_labels: bool,
        /// Ignore glances and train with video labels only.
        #[arg(long)]
        weak: bool,
    },
    /// Evaluate a checkpoint on the test split.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also export frame-level score tracks of every test video.
        #[arg(long)]
        tracks: Option<PathBuf>,
    },
    /// Run an ablation study on synthetic data across seeds.
    Ablate {
        #[arg(long)]
        study: Study,
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated seeds.
        #[arg(long, value_delimiter = ',', default_values_t = [0u64, 1, 2])]
        seeds: Vec<u64>,
        /// JSON object with optional `synth` and `train` sections.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Serve the annotation API and UI.
    Annotate {
        #[arg(long)]
        manifest: PathBuf,
        /// Directory holding `<video_id>.<ext>` media files.
        #[arg(long)]
        videos: PathBuf,
        /// Glance file, created on the first edit if missing.
        #[arg(long)]
        glances: PathBuf,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        /// Built UI assets to serve at `/`.
        #[arg(long)]
        assets: Option<PathBuf>,
        /// Recorded on glances that do not name an annotator.
        #[arg(long)]
        annotator: Option<String>,
    },
}

fn print_json<T: serde::Serialize>(value: &T) {
    println!("{}", serde_json::to_string_pretty(value).expect("output serializes"));
}

fn bench_config(path: Option<&PathBuf>, seeds: Vec<u64>, epochs: Option<usize>) -> Result<BenchConfig> {
    let mut cfg = BenchConfig::default();
    if let Some(p) = path {
        let v: serde_json::Value = read_json(p)?;
        let section = |key: &str| v.get(key).cloned();
        if let Some(s) = section("synth") {
            cfg.synth = serde_json::from_value(s).map_err(|e| Error::Config(format!("synth section: {e}")))?;
        }
        if let Some(t) = section("train") {
            cfg.train = serde_json::from_value(t).map_err(|e| Error::Config(format!("train section: {e}")))?;
        }
    }
    cfg.seeds = seeds;
    if let Some(e) = epochs {
        cfg.train.epochs = e;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth { config, out, seed } => {
            let summary = commands::synth(config.as_deref(), &out, seed)?;
            print_json(&summary);
        }
        Command::Render {
            manifest,
            glances,
            scores,
            alpha,
            no_dynamic_threshold,
            r_g,
            family,
            out,
        } => {
            let mining = MiningConfig {
                alpha,
                dynamic: !no_dynamic_threshold,
            };
            mining.validate()?;
            let tracks = commands::render(&RenderArgs {
                manifest: &manifest,
                glances: &glances,
                scores: scores.as_deref(),
                mining,
                r_g,
                family,
                out: &out,
            })?;
            println!("rendered {} tracks to {}", tracks.len(), out.display());
        }
        Command::Train {
            manifest,
            glances,
            config,
            out,
            log,
            seed,
            epochs,
            lr,
            alpha,
            r_g,
            family,
            no_mining,
            no_dynamic_threshold,
            binary_labels,
            weak,
        } => {
            let mut cfg: TrainConfig = match &config {
                Some(p) => read_json(p)?,
                None => TrainConfig::default(),
            };
            if let Some(s) = seed {
                cfg.seed = RngSeed(s);
            }
            if let Some(e) = epochs {
                cfg.epochs = e;
            }
            if let Some(v) = lr {
                cfg.lr = v;
            }
            if let Some(v) = alpha {
                cfg.alpha = v;
            }
            if let Some(v) = r_g {
                cfg.r_g = v;
            }
            if let Some(f) = family {
                cfg.kernel_family = f;
            }
            cfg.pseudo_labels.mining &= !no_mining;
            cfg.pseudo_labels.dynamic_threshold &= !no_dynamic_threshold;
            cfg.pseudo_labels.gaussian &= !binary_labels;
            cfg.weak_only |= weak;
            let last = commands::train(&TrainArgs {
                manifest: &manifest,
                glances: glances.as_deref(),
                config: cfg,
                out: &out,
                log: log.as_deref(),
            })?;
            println!(
                "final epoch loss {:.4} (mil {:.4} abn {:.4} nor {:.4}); checkpoint {}",
                last.losses.l_total,
                last.losses.l_mil,
                last.losses.l_abn,
                last.losses.l_nor,
                out.display()
            );
        }
        Command::Eval {
            checkpoint,
            manifest,
            out,
            tracks,
        } => {
            let report = commands::eval(&EvalArgs {
                checkpoint: &checkpoint,
                manifest: &manifest,
                out: &out,
                tracks: tracks.as_deref(),
            })?;
            print_json(&report);
        }
        Command::Ablate {
            study,
            out,
            seeds,
            config,
            epochs,
        } => {
            let cfg = bench_config(config.as_ref(), seeds, epochs)?;
            let result = commands::ablate(study, &cfg, &out)?;
            print!("{}", result.to_table());
        }
        Command::Annotate {
            manifest,
            videos,
            glances,
            port,
            host,
            assets,
            annotator,
        } => {
            let manifest = DatasetManifest::load(&manifest)?;
            let state = Arc::new(AppState::new(manifest, videos, glances, annotator)?);
            let runtime = tokio::runtime::Runtime::new().map_err(|e| Error::Config(format!("runtime: {e}")))?;
            runtime
                .block_on(server::serve(state, assets, &host, port))
                .map_err(|e| Error::Config(format!("cannot serve on {host}:{port}: {e}")))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("GLANCEVAD_LOG", "warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
