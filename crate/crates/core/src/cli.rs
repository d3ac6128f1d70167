//! Command-line front end. `run` never exits the process so it can be
//! driven from tests; the binary maps its return value to the exit status.

use std::collections::HashMap;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::checkpoint::Checkpoint;
use crate::error::{Error, Result};
use crate::eval::eval_all_tasks;
use crate::lang::{Signal, Vocab};
use crate::model::{ModelConfig, Pgae};
use crate::numerics::{Precision, Scalar};
use crate::pipeline::{episodes_from_disk, gradcheck_signals, micro_set, training_word_weights};
use crate::synth::dataset::{
    features_file, load_dataset, read_matrix_csv, sample_dir, write_dataset, write_matrix_csv,
    Manifest, SampleMeta,
};
use crate::synth::grammar::Description;
use crate::synth::trajectory::HOME;
use crate::synth::{build_dataset, Dataset, DatasetConfig, FrameSize, Viewpoint};
use crate::task::{build_task_io, train, Episode, TrainConfig};
use crate::vision::{cae_train, training_frames, CaeTrainConfig, FeatureBank};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

const GRADCHECK_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Parser)]
#[command(name = "pgae", version, about = "Bidirectional translation between robot actions and language")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Synthetic dataset generation.
    #[command(subcommand)]
    Dataset(DatasetCommand),
    /// Channel-separated convolutional autoencoder.
    #[command(subcommand)]
    Cae(CaeCommand),
    /// Train the translator on extracted features.
    Train(TrainArgs),
    /// Score a checkpoint on all four inference tasks.
    Eval(EvalArgs),
    /// Translate a single input.
    Translate(TranslateArgs),
    /// Compare analytic and finite-difference gradients for every signal.
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Subcommand)]
enum DatasetCommand {
    /// Write the corpus, its split and (optionally) rendered frames.
    Gen(GenArgs),
}

#[derive(Debug, Subcommand)]
enum CaeCommand {
    /// Train the three channel autoencoders.
    Train(CaeTrainArgs),
    /// Write per-frame features next to every sample.
    Encode(CaeEncodeArgs),
}

#[derive(Debug, Args)]
struct GenArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0)]
    split_seed: u64,
    /// Also write every frame of both viewpoints as PPM.
    #[arg(long)]
    frames: bool,
    #[arg(long, default_value_t = FrameSize::DESK.height)]
    height: usize,
    #[arg(long, default_value_t = FrameSize::DESK.width)]
    width: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Subset {
    Train,
    Test,
    All,
    /// One training sample per motor action.
    Micro,
}

#[derive(Debug, Args)]
struct CaeTrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = Subset::Train)]
    samples: Subset,
    #[arg(long, default_value_t = CaeTrainConfig::default().epochs)]
    epochs: usize,
    #[arg(long, default_value_t = CaeTrainConfig::default().batch_size)]
    batch_size: usize,
    #[arg(long, default_value_t = CaeTrainConfig::default().lr)]
    lr: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = CaeTrainConfig::default().stride)]
    stride: usize,
    /// Spread of each feature dimension after standardisation.
    #[arg(long, default_value_t = CaeTrainConfig::default().feature_std)]
    feature_std: f64,
}

#[derive(Debug, Args)]
struct CaeEncodeArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    cae: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum PrecisionArg {
    F32,
    F64,
}

impl From<PrecisionArg> for Precision {
    fn from(p: PrecisionArg) -> Self {
        match p {
            PrecisionArg::F32 => Precision::F32,
            PrecisionArg::F64 => Precision::F64,
        }
    }
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Per-epoch loss curve.
    #[arg(long)]
    history: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Subset::Train)]
    samples: Subset,
    #[arg(long, default_value_t = TrainConfig::default().epochs)]
    epochs: usize,
    #[arg(long, default_value_t = TrainConfig::default().batch_size)]
    batch_size: usize,
    #[arg(long, default_value_t = TrainConfig::default().lr)]
    lr: f64,
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    #[arg(long, default_value_t = 1.0)]
    beta: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = TrainConfig::default().hidden)]
    hidden: usize,
    #[arg(long, value_enum, default_value_t = PrecisionArg::F64)]
    precision: PrecisionArg,
    /// Train on the robot's own view only.
    #[arg(long)]
    single_view: bool,
    /// Print a progress line every this many epochs (0 disables).
    #[arg(long, default_value_t = 100)]
    log_every: usize,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long, value_enum, default_value_t = Subset::Test)]
    samples: Subset,
    /// Where to write eval.json.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum ViewArg {
    #[value(name = "self")]
    Own,
    Opposite,
}

#[derive(Debug, Args)]
struct TranslateArgs {
    /// describe, execute, repeat-action or repeat-language.
    #[arg(long)]
    signal: String,
    #[arg(long)]
    checkpoint: PathBuf,
    /// Sample directory holding joints.csv and features (action input).
    #[arg(long)]
    sample_dir: Option<PathBuf>,
    /// Description (language input).
    #[arg(long)]
    text: Option<String>,
    /// Viewpoint of the action input for describe and repeat-action.
    #[arg(long, value_enum, default_value_t = ViewArg::Own)]
    view: ViewArg,
    /// Trajectory CSV destination; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 500)]
    probes: usize,
    #[arg(long, default_value_t = 8)]
    hidden: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

/// Parses `argv` (including the program name) and runs the command.
pub fn run<I, S>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() { err.write_all(text.as_bytes()) } else { out.write_all(text.as_bytes()) };
            return code;
        }
    };
    let result = match cli.command {
        Command::Dataset(DatasetCommand::Gen(a)) => dataset_gen(a, out),
        Command::Cae(CaeCommand::Train(a)) => cae_train_cmd(a, out),
        Command::Cae(CaeCommand::Encode(a)) => cae_encode(a, out),
        Command::Train(a) => train_cmd(a, out, err),
        Command::Eval(a) => eval_cmd(a, out),
        Command::Translate(a) => translate(a, out),
        Command::Gradcheck(a) => gradcheck(a, out),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let code = match e {
                Error::TrainingOnlySignal(_) | Error::Usage(_) => EXIT_USAGE,
                _ => EXIT_RUNTIME,
            };
            let _ = writeln!(err, "error: {e}");
            code
        }
    }
}

fn io_err(e: std::io::Error) -> Error {
    Error::Io {
        path: PathBuf::from("<stdout>"),
        source: e,
    }
}

fn dataset_gen(a: GenArgs, out: &mut dyn Write) -> Result<i32> {
    let frame = FrameSize {
        height: a.height,
        width: a.width,
    };
    frame.validate()?;
    let ds = build_dataset(DatasetConfig { seed: a.seed, frame })?;
    let m = write_dataset(&ds, &a.out, a.split_seed, a.frames)?;
    writeln!(
        out,
        "wrote {} samples ({} patterns, {} descriptions): {} train, {} test",
        m.samples.len(),
        m.patterns,
        ds.distinct_descriptions(),
        m.train.len(),
        m.test.len()
    )
    .map_err(io_err)?;
    Ok(EXIT_OK)
}

fn subset(ds: &Dataset, m: &Manifest, which: Subset) -> Vec<usize> {
    let by_id: HashMap<String, usize> = ds.samples.iter().enumerate().map(|(i, s)| (s.id(), i)).collect();
    let ids = |v: &[String]| v.iter().filter_map(|id| by_id.get(id).copied()).collect::<Vec<_>>();
    match which {
        Subset::Train => ids(&m.train),
        Subset::Test => ids(&m.test),
        Subset::All => (0..ds.samples.len()).collect(),
        Subset::Micro => {
            let train: std::collections::HashSet<usize> = ids(&m.train).into_iter().collect();
            micro_set(ds).into_iter().filter(|i| train.contains(i)).collect()
        }
    }
}

fn cae_train_cmd(a: CaeTrainArgs, out: &mut dyn Write) -> Result<i32> {
    let (ds, m) = load_dataset(&a.data)?;
    let cfg = CaeTrainConfig {
        epochs: a.epochs,
        batch_size: a.batch_size,
        lr: a.lr,
        seed: a.seed,
        stride: a.stride,
        feature_std: a.feature_std,
    };
    let frames = training_frames(&ds, cfg.stride, Some(&subset(&ds, &m, a.samples)));
    let (cae, report) = cae_train(&frames, &cfg)?;
    Checkpoint::from_cae(&cae, Some(cfg)).save(&a.out)?;
    writeln!(out, "trained on {} frames", frames.len()).map_err(io_err)?;
    for (c, name) in crate::vision::CHANNEL_NAMES.iter().enumerate() {
        writeln!(
            out,
            "{name}: mse {:.6} -> {:.6}",
            report.mse_init[c], report.mse_final[c]
        )
        .map_err(io_err)?;
    }
    Ok(EXIT_OK)
}

fn cae_encode(a: CaeEncodeArgs, out: &mut dyn Write) -> Result<i32> {
    let (ds, _) = load_dataset(&a.data)?;
    let cae = Checkpoint::load(&a.cae)?.to_cae()?;
    if cae.size() != ds.config.frame {
        return Err(Error::Config(format!(
            "CAE expects {:?} frames but the dataset has {:?}",
            cae.size(),
            ds.config.frame
        )));
    }
    let bank = FeatureBank::encode(&cae, &ds, None)?;
    for s in &ds.samples {
        for view in [Viewpoint::Own, Viewpoint::Opposite] {
            let f = bank.get(s, view).expect("every pattern is encoded");
            write_matrix_csv(&sample_dir(&a.data, &s.id()).join(features_file(view)), &f)?;
        }
    }
    writeln!(out, "encoded {} samples in both viewpoints", ds.samples.len()).map_err(io_err)?;
    Ok(EXIT_OK)
}

fn train_cmd(a: TrainArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    let (ds, m) = load_dataset(&a.data)?;
    let episodes = episodes_from_disk(&a.data, &ds, &subset(&ds, &m, a.samples))?;
    let vis_dim = episodes
        .first()
        .and_then(|e| e.vis_self.first())
        .map(Vec::len)
        .ok_or_else(|| Error::Config("no training samples".into()))?;
    let config = TrainConfig {
        epochs: a.epochs,
        batch_size: a.batch_size,
        lr: a.lr,
        alpha: a.alpha,
        beta: a.beta,
        seed: a.seed,
        hidden: a.hidden,
        precision: a.precision.into(),
        mixed_viewpoints: !a.single_view,
    };
    config.validate()?;
    let vocab = Vocab::default();
    let weights = training_word_weights(&vocab, &episodes)?;
    let model_config = ModelConfig {
        hidden: a.hidden,
        vis_dim,
        ..ModelConfig::default()
    };
    let model = Pgae::<f64>::init(model_config, a.seed);
    let log_every = a.log_every;
    let mut log = |s: &crate::task::EpochStats| {
        if log_every > 0 && (s.epoch % log_every == 0 || s.epoch == 1) {
            let _ = writeln!(
                err,
                "epoch {:>5}  loss {:.5}  lang {:.5}  act {:.5}  coverage {:.3}",
                s.epoch, s.mean_total, s.mean_lang, s.mean_act, s.grad_coverage
            );
        }
    };
    let (ckpt, history) = match config.precision {
        Precision::F64 => {
            let (trained, h) = train(model, &episodes, &vocab, weights.clone(), &config, &mut log)?;
            (Checkpoint::from_model(&trained, &vocab, &weights, Some(config.clone())), h)
        }
        Precision::F32 => {
            let (trained, h) = train(model.cast::<f32>(), &episodes, &vocab, weights.clone(), &config, &mut log)?;
            (Checkpoint::from_model(&trained, &vocab, &weights, Some(config.clone())), h)
        }
    };
    ckpt.save(&a.out)?;
    if let Some(path) = &a.history {
        history.write_csv(path)?;
    }
    let last = history.epochs.last().expect("at least one epoch");
    writeln!(
        out,
        "trained {} epochs on {} samples: final loss {:.6}",
        config.epochs,
        episodes.len(),
        last.mean_total
    )
    .map_err(io_err)?;
    Ok(EXIT_OK)
}

fn eval_cmd(a: EvalArgs, out: &mut dyn Write) -> Result<i32> {
    let (ds, m) = load_dataset(&a.data)?;
    let episodes = episodes_from_disk(&a.data, &ds, &subset(&ds, &m, a.samples))?;
    let ckpt = Checkpoint::load(&a.checkpoint)?;
    let vocab = ckpt.vocab()?;
    let report = match ckpt.header.precision {
        Precision::F64 => eval_all_tasks(&ckpt.to_model::<f64>()?, &episodes, &vocab)?,
        Precision::F32 => eval_all_tasks(&ckpt.to_model::<f32>()?, &episodes, &vocab)?,
    };
    out.write_all(report.table().as_bytes()).map_err(io_err)?;
    if let Some(path) = &a.out {
        report.write_json(path)?;
    }
    Ok(EXIT_OK)
}

/// Builds the episode a translation runs on. A sample directory supplies
/// joints and features; otherwise the arm starts at the home pose with
/// blank visual input and a length set by the speed word.
fn translation_episode(a: &TranslateArgs, signal: Signal, vis_dim: usize) -> Result<Episode> {
    if let Some(dir) = &a.sample_dir {
        let meta_path = dir.join("meta.json");
        let meta: SampleMeta = std::fs::read_to_string(&meta_path)
            .map_err(|e| Error::io(&meta_path, e))
            .and_then(|t| serde_json::from_str(&t).map_err(|e| Error::format(&meta_path, e)))?;
        let features = |view| -> Result<Option<Vec<Vec<f64>>>> {
            let path = dir.join(features_file(view));
            if path.exists() {
                read_matrix_csv(&path).map(Some)
            } else {
                Ok(None)
            }
        };
        let vis_self = features(Viewpoint::Own)?
            .ok_or_else(|| Error::Config(format!("{} has no features; run `cae encode`", dir.display())))?;
        return Ok(Episode {
            id: meta.id,
            description: a.text.clone().unwrap_or(meta.description),
            joints: read_matrix_csv(&dir.join("joints.csv"))?,
            vis_self,
            vis_opposite: features(Viewpoint::Opposite)?,
        });
    }
    let text = match (&a.text, signal) {
        (Some(t), Signal::Execute | Signal::RepeatLanguage) => t.clone(),
        (_, Signal::Describe | Signal::RepeatAction) => {
            return Err(Error::Usage(format!("`{}` needs --sample-dir", signal.name())))
        }
        _ => return Err(Error::Usage(format!("`{}` needs --text or --sample-dir", signal.name()))),
    };
    let m = Description::parse(&text)?.meaning.speed.steps();
    Ok(Episode {
        id: "text".into(),
        description: text,
        joints: vec![HOME.to_vec(); m],
        vis_self: vec![vec![0.0; vis_dim]; m],
        vis_opposite: None,
    })
}

fn translate(a: TranslateArgs, out: &mut dyn Write) -> Result<i32> {
    let signal = Signal::parse(&a.signal).ok_or_else(|| {
        Error::Usage(format!(
            "unknown signal `{}`; expected describe, execute, repeat-action or repeat-language",
            a.signal
        ))
    })?;
    if signal == Signal::RepeatBoth {
        return Err(Error::TrainingOnlySignal(signal.name()));
    }
    let ckpt = Checkpoint::load(&a.checkpoint)?;
    let vocab = ckpt.vocab()?;
    match ckpt.header.precision {
        Precision::F64 => translate_with(&ckpt.to_model::<f64>()?, &vocab, &a, signal, out),
        Precision::F32 => translate_with(&ckpt.to_model::<f32>()?, &vocab, &a, signal, out),
    }
}

fn translate_with<F: Scalar>(
    model: &Pgae<F>,
    vocab: &Vocab,
    a: &TranslateArgs,
    signal: Signal,
    out: &mut dyn Write,
) -> Result<i32> {
    let ep = translation_episode(a, signal, model.config.vis_dim)?;
    let view = match a.view {
        ViewArg::Own => Viewpoint::Own,
        ViewArg::Opposite => Viewpoint::Opposite,
    };
    let io = build_task_io::<F>(vocab, &ep, signal, view)?;
    let result = model.translate(&io, vocab.eos())?;
    match signal {
        Signal::Describe | Signal::RepeatLanguage => {
            writeln!(out, "{}", vocab.detokenize(&result.tokens)).map_err(io_err)?;
        }
        _ => {
            let mut rows = vec![ep.joints[0].clone()];
            rows.extend(
                result
                    .rollout
                    .predicted()
                    .iter()
                    .map(|r| r.iter().map(|v| v.as_f64()).collect::<Vec<_>>()),
            );
            match &a.out {
                Some(path) => {
                    write_matrix_csv(path, &rows)?;
                    writeln!(out, "wrote {} rows to {}", rows.len(), path.display()).map_err(io_err)?;
                }
                None => out
                    .write_all(crate::synth::dataset::matrix_to_csv(&rows).as_bytes())
                    .map_err(io_err)?,
            }
        }
    }
    Ok(EXIT_OK)
}

fn gradcheck(a: GradcheckArgs, out: &mut dyn Write) -> Result<i32> {
    let ds = build_dataset(DatasetConfig::default())?;
    let checks = gradcheck_signals(&ds, a.hidden, a.probes, a.seed)?;
    let mut ok = true;
    for c in &checks {
        let pass = c.report.max_rel_error < GRADCHECK_TOLERANCE;
        ok &= pass;
        writeln!(
            out,
            "{:<16} max rel error {:.3e} over {} probes  {}",
            c.signal.name(),
            c.report.max_rel_error,
            c.report.probes,
            if pass { "ok" } else { "FAIL" }
        )
        .map_err(io_err)?;
    }
    Ok(if ok { EXIT_OK } else { EXIT_RUNTIME })
}
