use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use anyhow::{Context, Result};
use rayon::prelude::*;
use serde::Serialize;
use synopsis::corpus::store::to_jsonl;
use synopsis::corpus::{
    generate_synthetic, read_corpus, read_references, write_corpus, Corpus, SyntheticSpec, Video,
};
use synopsis::metrics::Scores;
use synopsis::pipeline::{
    build_vocabulary, config_hash, evaluate, train_model, EvalReport, Model, PretrainEpoch,
    ShotScore, Synopsis, TrainConfig,
};

use crate::run_config::{self, RunConfig};
use crate::{EvalArgs, InferArgs, InspectArgs, SynthArgs, TrainArgs};

pub const SYNOPSES_FILE: &str = "synopses.json";
pub const PRETRAIN_LOG: &str = "pretrain_log.jsonl";
pub const JOINT_LOG: &str = "joint_log.jsonl";

/// A bad request from the caller, reported with exit code 2.
#[derive(Debug)]
pub struct Usage(pub String);

impl fmt::Display for Usage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

pub fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<Usage>().is_some() {
        return 2;
    }
    match err.downcast_ref::<synopsis::Error>() {
        Some(e) if e.is_usage() => 2,
        _ => 1,
    }
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn pretty<T: Serialize>(value: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)? + "\n")
}

fn load_corpus(dir: &Path) -> Result<Corpus> {
    read_corpus(dir).with_context(|| format!("reading corpus {}", dir.display()))
}

fn thread_pool(workers: usize) -> Result<rayon::ThreadPool> {
    if workers == 0 {
        return Err(Usage("--workers must be at least 1".into()).into());
    }
    Ok(rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()?)
}

pub fn synth(args: &SynthArgs) -> Result<()> {
    let mut spec = match &args.config {
        Some(path) => SyntheticSpec::from_json(&read_text(path)?)
            .with_context(|| format!("invalid spec {}", path.display()))?,
        None => SyntheticSpec::new(0),
    };
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    spec.validate()?;
    let corpus = generate_synthetic(&spec)?;
    write_corpus(&args.out, &corpus, Some(&spec))?;
    let mut rc = RunConfig::new("synth");
    rc.seed = Some(spec.seed);
    rc.synthetic = Some(spec);
    if let Some(path) = &args.config {
        rc = rc.input("config", path);
    }
    rc.write(&args.out)?;
    eprintln!(
        "wrote {} videos, {} shots to {}",
        corpus.videos.len(),
        corpus.shot_count(),
        args.out.display()
    );
    Ok(())
}

fn train_config(args: &TrainArgs) -> Result<TrainConfig> {
    let mut config = match &args.config {
        Some(path) => TrainConfig::from_json(&read_text(path)?)
            .with_context(|| format!("invalid config {}", path.display()))?,
        None => TrainConfig::default(),
    };
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(l) = args.lambda1 {
        config.lambda1 = l;
    }
    if let Some(l) = args.lambda2 {
        config.lambda2 = l;
    }
    config.disable_vlcmu |= args.disable_vlcmu;
    config.disable_eta_loss |= args.disable_eta_loss;
    config.disable_purport |= args.disable_purport;
    config.validate()?;
    Ok(config)
}

pub fn train(args: &TrainArgs) -> Result<()> {
    let config = train_config(args)?;
    let corpus = load_corpus(&args.corpus)?;
    create_dir(&args.out)?;
    let trained = train_model(&corpus, &config)?;

    let mut pretrain = vec![PretrainEpoch {
        epoch: 0,
        train_loss: trained.pretrain.initial_train_loss,
        validation_loss: trained.pretrain.initial_validation_loss,
    }];
    pretrain.extend(trained.pretrain.epochs.iter().cloned());
    write(&args.out.join(PRETRAIN_LOG), to_jsonl(&pretrain)?)?;
    write(&args.out.join(JOINT_LOG), to_jsonl(&trained.joint)?)?;
    trained.model.save(&args.out)?;

    let mut rc = RunConfig::new("train").input("corpus", &args.corpus);
    if let Some(path) = &args.config {
        rc = rc.input("config", path);
    }
    rc.seed = Some(config.seed);
    rc.model = Some(trained.model.config.clone());
    rc.write(&args.out)?;
    eprintln!(
        "caption loss {:.4} -> {:.4} (best epoch {}), {} joint epochs",
        trained.pretrain.initial_train_loss,
        trained.pretrain.final_train_loss(),
        trained.pretrain.best_epoch,
        trained.joint.len()
    );
    Ok(())
}

#[derive(Serialize)]
struct ScoreRow<'a> {
    video: &'a str,
    #[serde(flatten)]
    score: &'a ShotScore,
}

fn selected_videos<'a>(corpus: &'a Corpus, ids: &[String]) -> Result<Vec<&'a Video>> {
    if ids.is_empty() {
        return Ok(corpus.videos.iter().collect());
    }
    ids.iter()
        .map(|id| {
            corpus
                .video(id)
                .ok_or_else(|| Usage(format!("unknown video id {id}")).into())
        })
        .collect()
}

pub fn infer(args: &InferArgs) -> Result<()> {
    if args.passes == 0 {
        return Err(Usage("--passes must be at least 1".into()).into());
    }
    let pool = thread_pool(args.workers)?;
    let model = Model::load(&args.model)
        .with_context(|| format!("loading model {}", args.model.display()))?;
    let corpus = load_corpus(&args.corpus)?;
    let videos = selected_videos(&corpus, &args.videos)?;
    let mut results = pool.install(|| {
        videos
            .par_iter()
            .map(|v| {
                model
                    .synopsis(v, args.passes)
                    .with_context(|| format!("video {}", v.id))
            })
            .collect::<Result<Vec<_>>>()
    })?;
    results.sort_by(|a, b| a.0.video.cmp(&b.0.video));
    results.dedup_by(|a, b| a.0.video == b.0.video);

    create_dir(&args.out)?;
    for (synopsis, scores) in &results {
        let base = args.out.join(&synopsis.video);
        write(&base.with_extension("synopsis.json"), pretty(synopsis)?)?;
        write(&base.with_extension("synopsis.txt"), synopsis.text())?;
        let rows: Vec<ScoreRow> = scores
            .iter()
            .map(|score| ScoreRow {
                video: &synopsis.video,
                score,
            })
            .collect();
        write(&base.with_extension("scores.jsonl"), to_jsonl(&rows)?)?;
    }
    let synopses: Vec<&Synopsis> = results.iter().map(|(s, _)| s).collect();
    write(&args.out.join(SYNOPSES_FILE), pretty(&synopses)?)?;

    let mut rc = RunConfig::new("infer")
        .input("model", &args.model)
        .input("corpus", &args.corpus);
    rc.seed = Some(model.config.train.seed);
    rc.model = Some(model.config.clone());
    rc.passes = Some(args.passes);
    rc.workers = Some(args.workers);
    rc.write(&args.out)?;
    for (s, _) in &results {
        eprintln!("{}: {} sentences", s.video, s.entries.len());
    }
    Ok(())
}

pub fn eval(args: &EvalArgs) -> Result<()> {
    let pool = thread_pool(args.workers)?;
    let synopses: Vec<Synopsis> =
        serde_json::from_str(&read_text(&args.synopses.join(SYNOPSES_FILE))?)
            .context("parsing synopses")?;
    let references = read_references(&args.references)
        .with_context(|| format!("reading references {}", args.references.display()))?;
    let mut videos = pool.install(|| {
        synopses
            .par_iter()
            .map(|s| {
                Ok(evaluate(std::slice::from_ref(s), &references)?
                    .videos
                    .remove(0))
            })
            .collect::<Result<Vec<_>>>()
    })?;
    videos.sort_by(|a, b| a.video.cmp(&b.video));
    let all: Vec<Scores> = videos.iter().map(|v| v.scores).collect();

    let provenance = args.synopses.join(run_config::FILE);
    let (seed, hash) = match std::fs::read(&provenance) {
        Ok(bytes) => {
            let rc: RunConfig = serde_json::from_slice(&bytes)
                .with_context(|| format!("parsing {}", provenance.display()))?;
            (rc.seed, Some(config_hash(&bytes)))
        }
        Err(_) => (None, None),
    };
    let report = EvalReport {
        seed,
        config_hash: hash,
        macro_average: Scores::mean(&all),
        videos,
    };
    let text = pretty(&report)?;
    if let Some(out) = &args.out {
        if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
            create_dir(dir)?;
            let mut rc = RunConfig::new("eval")
                .input("synopses", &args.synopses)
                .input("references", &args.references);
            rc.seed = seed;
            rc.workers = Some(args.workers);
            rc.write(dir)?;
        }
        write(out, &text)?;
    }
    print!("{text}");
    Ok(())
}

#[derive(Serialize)]
struct Stats {
    videos: usize,
    shots: usize,
    min_shots: usize,
    max_shots: usize,
    frames_per_shot: usize,
    feature_dim: usize,
    vocabulary: usize,
    important_fraction: f64,
    injected_fraction: f64,
    events_per_video: f64,
    references: BTreeMap<String, usize>,
}

pub fn inspect(args: &InspectArgs) -> Result<()> {
    let corpus = load_corpus(&args.corpus)?;
    let all: Vec<&Video> = corpus.videos.iter().collect();
    let shots = corpus.shot_count() as f64;
    let count = |f: &dyn Fn(&synopsis::corpus::Shot) -> bool| {
        corpus.shots().filter(|s| f(s)).count() as f64
    };
    let stats = Stats {
        videos: corpus.videos.len(),
        shots: corpus.shot_count(),
        min_shots: all.iter().map(|v| v.len()).min().unwrap_or(0),
        max_shots: all.iter().map(|v| v.len()).max().unwrap_or(0),
        frames_per_shot: corpus.frames,
        feature_dim: corpus.feature_dim,
        vocabulary: build_vocabulary(&all, 1)?.len(),
        important_fraction: count(&|s| s.important) / shots,
        injected_fraction: count(&|s| s.injected.is_some()) / shots,
        events_per_video: all.iter().map(|v| v.segments().len()).sum::<usize>() as f64
            / all.len() as f64,
        references: all
            .iter()
            .map(|v| (v.id.clone(), v.references.len()))
            .collect(),
    };
    print!("{}", pretty(&stats)?);
    Ok(())
}
