//! Pipeline commands: synthesize, render pseudo-labels, train, evaluate and
//! run ablation studies.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use glancevad::bench::{run_study, BenchConfig, Study};
use glancevad::dataio::{
    generate_synthetic, read_json, sample_glances, write_atomic, write_json, DatasetManifest, GlanceFile, Split,
    SynthConfig,
};
use glancevad::metrics::{evaluate, EvalReport, LabeledVideo};
use glancevad::mining::{mine, MiningConfig};
use glancevad::scorer::{load_checkpoint, store_checkpoint};
use glancevad::splatting::{init_kernels, render as splat, update_kernels, KernelFamily};
use glancevad::trainer::{TrainConfig, TrainSet, Trainer};
use glancevad::types::{snippet_to_frame_scores, RngSeed, ScoreTrack};
use glancevad::{Error, Result};
use serde::Serialize;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const GLANCE_FILE: &str = "glances.json";

/// Directory that manifest-relative feature paths resolve against.
pub fn manifest_dir(manifest: &Path) -> PathBuf {
    manifest
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .map_or_else(|| PathBuf::from("."), Path::to_path_buf)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SynthSummary {
    pub train_normal: usize,
    pub train_abnormal: usize,
    pub test_normal: usize,
    pub test_abnormal: usize,
    pub mean_snippets: f64,
    pub anomalous_frame_fraction: f64,
    pub mean_glances_per_video: f64,
}

pub fn synth(config: Option<&Path>, out: &Path, seed: Option<u64>) -> Result<SynthSummary> {
    let mut cfg: SynthConfig = match config {
        Some(p) => read_json(p)?,
        None => SynthConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = RngSeed(s);
    }
    let ds = generate_synthetic(&cfg)?;
    ds.write(out)?;
    let glances = sample_glances(&ds.manifest, cfg.seed)?;
    glances.store(&out.join(GLANCE_FILE))?;

    let count = |split, abnormal: bool| {
        ds.manifest
            .split(split)
            .filter(|e| e.label.is_abnormal() == abnormal)
            .count()
    };
    let videos = ds.manifest.videos.len().max(1) as f64;
    let (mut frames, mut anomalous) = (0usize, 0usize);
    for e in &ds.manifest.videos {
        let labels = e.frame_labels();
        frames += labels.len();
        anomalous += labels.iter().filter(|&&l| l).count();
    }
    let annotated = glances.videos.len().max(1) as f64;
    let total_glances: usize = glances.videos.iter().map(|v| v.glances.len()).sum();
    Ok(SynthSummary {
        train_normal: count(Split::Train, false),
        train_abnormal: count(Split::Train, true),
        test_normal: count(Split::Test, false),
        test_abnormal: count(Split::Test, true),
        mean_snippets: ds.features.iter().map(|f| f.len()).sum::<usize>() as f64 / videos,
        anomalous_frame_fraction: anomalous as f64 / frames.max(1) as f64,
        mean_glances_per_video: total_glances as f64 / annotated,
    })
}

pub struct RenderArgs<'a> {
    pub manifest: &'a Path,
    pub glances: &'a Path,
    pub scores: Option<&'a Path>,
    pub mining: MiningConfig,
    pub r_g: f64,
    pub family: KernelFamily,
    pub out: &'a Path,
}

/// Pseudo-label track of every annotated video, keyed by id. With a score
/// file (`{video_id: [snippet scores]}`) kernels are mined and updated first.
pub fn render(args: &RenderArgs<'_>) -> Result<BTreeMap<String, Vec<f64>>> {
    let manifest = DatasetManifest::load(args.manifest)?;
    let sets = GlanceFile::load(args.glances)?.validate(&manifest)?;
    let scores: Option<BTreeMap<String, Vec<f64>>> = args.scores.map(read_json).transpose()?;
    let mut out = BTreeMap::new();
    for (id, glances) in &sets {
        if glances.is_empty() {
            continue;
        }
        let entry = manifest.get(id).expect("validated against manifest");
        let len = entry.num_snippets();
        let init = init_kernels(glances, len, args.r_g, args.family)?;
        let kernels = match &scores {
            Some(all) => {
                let track = all
                    .get(id)
                    .ok_or_else(|| Error::Validation(format!("no scores for video {id}")))?;
                if track.len() != len {
                    return Err(Error::Shape(format!(
                        "video {id}: {} scores for {len} snippets",
                        track.len()
                    )));
                }
                let mined = mine(&ScoreTrack::new(track.clone())?, glances, &args.mining)?;
                update_kernels(&init, &mined, glances)
            }
            None => init,
        };
        out.insert(id.clone(), splat(&kernels)?.into_inner());
    }
    write_json(args.out, &out)?;
    Ok(out)
}

/// One JSON object per line: the epoch record plus pseudo-label counters.
#[derive(Serialize)]
struct LogLine<'a> {
    #[serde(flatten)]
    record: &'a glancevad::trainer::EpochRecord,
    pairs: usize,
    mined: usize,
    mined_beyond_glances: usize,
}

pub struct TrainArgs<'a> {
    pub manifest: &'a Path,
    pub glances: Option<&'a Path>,
    pub config: TrainConfig,
    pub out: &'a Path,
    pub log: Option<&'a Path>,
}

pub fn default_log_path(checkpoint: &Path) -> PathBuf {
    checkpoint.with_extension("log.jsonl")
}

pub fn train(args: &TrainArgs<'_>) -> Result<glancevad::trainer::EpochStats> {
    let manifest = DatasetManifest::load(args.manifest)?;
    let sets = match args.glances {
        Some(p) => GlanceFile::load(p)?.validate(&manifest)?,
        None if args.config.weak_only => BTreeMap::new(),
        None => {
            return Err(Error::Config(
                "a glance file is required unless training with video labels only".into(),
            ))
        }
    };
    let data = TrainSet::from_manifest(&manifest, &manifest_dir(args.manifest), &sets)?;
    let mut trainer = Trainer::new(args.config.clone(), data.input_dim()?)?;

    let log_path = args.log.map_or_else(|| default_log_path(args.out), Path::to_path_buf);
    let file = File::create(&log_path).map_err(|e| Error::io(&log_path, e))?;
    let mut log = BufWriter::new(file);
    let mut write_err = None;
    let history = trainer.fit(&data, |record, stats| {
        log::info!(
            "epoch {} loss {:.4} (mil {:.4} abn {:.4} nor {:.4}) mined {}",
            record.epoch,
            record.l_total,
            record.l_mil,
            record.l_abn,
            record.l_nor,
            stats.mined
        );
        let line = LogLine {
            record,
            pairs: stats.pairs,
            mined: stats.mined,
            mined_beyond_glances: stats.mined_beyond_glances,
        };
        let json = serde_json::to_string(&line).expect("log line serializes");
        if let Err(e) = writeln!(log, "{json}") {
            write_err.get_or_insert(e);
        }
    })?;
    if let Some(e) = write_err {
        return Err(Error::io(&log_path, e));
    }
    log.flush().map_err(|e| Error::io(&log_path, e))?;
    store_checkpoint(args.out, &trainer.checkpoint())?;
    Ok(history.last().copied().unwrap_or_default())
}

pub struct EvalArgs<'a> {
    pub checkpoint: &'a Path,
    pub manifest: &'a Path,
    pub out: &'a Path,
    /// Optional frame-level score tracks of every test video.
    pub tracks: Option<&'a Path>,
}

pub fn eval(args: &EvalArgs<'_>) -> Result<EvalReport> {
    let ckpt = load_checkpoint(args.checkpoint)?;
    let manifest = DatasetManifest::load(args.manifest)?;
    let base = manifest_dir(args.manifest);
    let entries: Vec<_> = manifest.split(Split::Test).collect();
    if entries.is_empty() {
        return Err(Error::Validation("manifest has no test videos".into()));
    }
    let mut features = Vec::with_capacity(entries.len());
    let mut labels = Vec::with_capacity(entries.len());
    for e in &entries {
        if !e.has_ground_truth() && e.label.is_abnormal() {
            return Err(Error::Validation(format!("test video {} has no ground truth", e.video_id)));
        }
        features.push(manifest.load_features(&base, e)?);
        labels.push(e.frame_labels());
    }
    let videos: Vec<LabeledVideo<'_>> = entries
        .iter()
        .zip(&features)
        .zip(&labels)
        .map(|((e, f), l)| LabeledVideo {
            features: f,
            label: e.label,
            frame_labels: l,
        })
        .collect();
    let mut report = evaluate(&ckpt.model, &videos)?;
    report.config_hash = Some(ckpt.header.config_hash.clone());
    write_json(args.out, &report)?;

    if let Some(path) = args.tracks {
        let mut tracks = BTreeMap::new();
        for (e, f) in entries.iter().zip(&features) {
            let scores = ckpt.model.forward(f)?;
            tracks.insert(
                e.video_id.clone(),
                snippet_to_frame_scores(&scores, f.frames_per_snippet(), f.total_frames())?,
            );
        }
        write_json(path, &tracks)?;
    }
    Ok(report)
}

pub fn ablate(study: Study, config: &BenchConfig, out: &Path) -> Result<glancevad::bench::StudyResult> {
    let result = run_study(study, config)?;
    let name = serde_json::to_value(study).expect("study serializes");
    let name = name.as_str().expect("study is a string");
    write_atomic(&out.join(format!("{name}.csv")), result.to_csv().as_bytes())?;
    write_json(&out.join(format!("{name}.json")), &result)?;
    Ok(result)
}
