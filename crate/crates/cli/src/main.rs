//! `listenhead`: speaker audio to listener head-motion coefficients.
//!
//! Exit codes: 0 success, 1 usage/config error, 2 data error,
//! 3 numerical failure. Diagnostics go to stderr as one-line JSON;
//! machine-readable results go to stdout or to files.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use listenhead_core::audio;
use listenhead_core::data;
use listenhead_core::error::Error;
use listenhead_core::eval;
use listenhead_core::model::{CoeffDims, ListenerHeadModel};
use listenhead_core::train;

use listenhead_core::runconfig::{resolve_seed, ConfigBag};

#[derive(Parser)]
#[command(
    name = "listenhead",
    version,
    about = "Map speaker audio to listener head-motion coefficients"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Shared config-loading flags.
#[derive(Args, Clone, Default)]
struct ConfigArgs {
    /// JSON config file with flat dotted keys (e.g. "model.lstm_hidden").
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one config key, e.g. --set model.lstm_hidden=16
    /// (repeatable; takes precedence over the config file).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl ConfigArgs {
    fn bag(&self) -> Result<ConfigBag, Error> {
        let mut bag = match &self.config {
            Some(path) => ConfigBag::load(path)?,
            None => ConfigBag::default(),
        };
        for pair in &self.set {
            bag.set_kv(pair)?;
        }
        Ok(bag)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Extract the 45-column acoustic feature CSV from a WAV file.
    Features {
        #[arg(long)]
        audio: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Generate a deterministic synthetic dataset (audio + coefficients).
    SynthData {
        #[arg(long)]
        out: PathBuf,
        /// Generation seed (falls back to LISTENHEAD_SEED, then 0).
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 4)]
        clips: usize,
        /// Clip duration in seconds.
        #[arg(long, default_value_t = 2.0)]
        duration: f64,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Train on a manifest; prints one JSON line of losses per epoch.
    Train {
        /// Manifest CSV (id,audio,coeffs,ref_frame,attitude,split).
        #[arg(long)]
        data: PathBuf,
        /// Checkpoint output path (written after every epoch).
        #[arg(long)]
        out: PathBuf,
        /// Resume from an existing checkpoint instead of initializing.
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Training seed override.
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Predict listener coefficients for a WAV file.
    Infer {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        audio: PathBuf,
        /// Coefficient CSV supplying the reference listener frame.
        #[arg(long = "ref-coeffs")]
        ref_coeffs: PathBuf,
        /// Row of the reference file to use as the reference frame.
        #[arg(long = "ref-frame", default_value_t = 0)]
        ref_frame: usize,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Compare predicted and ground-truth coefficients (and optionally
    /// rendered frames); prints the metric report as JSON.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long = "frames-pred")]
        frames_pred: Option<PathBuf>,
        #[arg(long = "frames-gt")]
        frames_gt: Option<PathBuf>,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Check model gradients against central finite differences.
    GradCheck {
        #[arg(long)]
        seed: Option<u64>,
        /// Probe clip length in frames.
        #[arg(long, default_value_t = 3)]
        frames: usize,
        #[arg(long, default_value_t = 3e-4)]
        epsilon: f64,
        #[arg(long, default_value_t = 1e-4)]
        tolerance: f64,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            let line = e.to_string().lines().next().unwrap_or("bad usage").to_string();
            eprintln!("{}", json!({"kind": "usage", "error": line}));
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let (kind, code) = match &err {
                Error::Config(_) | Error::Contract(_) => ("config", 1),
                Error::Data(_) | Error::Io(_) => ("data", 2),
                Error::Numeric(_) => ("numeric", 3),
            };
            eprintln!("{}", json!({"kind": kind, "error": err.to_string()}));
            ExitCode::from(code)
        }
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Features { audio, out, cfg } => {
            let bag = cfg.bag()?;
            let frontend = bag.frontend_config()?;
            let features = audio::extract_features_from_file(&audio, &frontend)?;
            std::fs::write(&out, features.to_csv())
                .map_err(|e| Error::data(format!("cannot write {}: {e}", out.display())))?;
            eprintln!(
                "{}",
                json!({"event": "features", "frames": features.len(), "out": out.display().to_string()})
            );
            Ok(())
        }
        Command::SynthData {
            out,
            seed,
            clips,
            duration,
            cfg,
        } => {
            let bag = cfg.bag()?;
            let model_cfg = bag.model_config()?;
            let seed = resolve_seed(seed, bag.rng_seed);
            let manifest =
                data::synthetic::generate_synthetic(&out, seed, clips, duration, &model_cfg.coeff_dims)?;
            eprintln!(
                "{}",
                json!({"event": "synth-data", "clips": clips, "manifest": manifest.display().to_string()})
            );
            Ok(())
        }
        Command::Train {
            data: manifest,
            out,
            resume,
            seed,
            cfg,
        } => {
            let bag = cfg.bag()?;
            let model_cfg = bag.model_config()?;
            let mut train_cfg = bag.train_config()?;
            train_cfg.seed = resolve_seed(seed, bag.train_seed);
            train_cfg.checkpoint_path = Some(out);

            let frontend = bag.frontend_config()?;
            let loaded = data::load_clips(
                &manifest,
                &frontend,
                &model_cfg.coeff_dims,
                Some(data::Split::Train),
            )?;
            let clips: Vec<_> = loaded.into_iter().map(|l| l.clip).collect();

            let mut state = match resume {
                Some(path) => train::TrainState::from_checkpoint(train::load_checkpoint(&path)?),
                None => {
                    let model = ListenerHeadModel::init(model_cfg)?;
                    train::TrainState::new(model, &train_cfg)
                }
            };
            let report = train::train(&mut state, &clips, &train_cfg)?;
            for epoch in &report.epochs {
                println!("{}", serde_json::to_string(epoch).expect("stats serialize"));
            }
            Ok(())
        }
        Command::Infer {
            ckpt,
            audio: audio_path,
            ref_coeffs,
            ref_frame,
            out,
            cfg,
        } => {
            let bag = cfg.bag()?;
            let frontend = bag.frontend_config()?;
            let checkpoint = train::load_checkpoint(&ckpt)?;
            let model = checkpoint.model;
            let refs = data::load_coeffs(&ref_coeffs, &model.config.coeff_dims)?;
            if ref_frame >= refs.len() {
                return Err(Error::data(format!(
                    "reference frame {ref_frame} out of range ({} rows in {})",
                    refs.len(),
                    ref_coeffs.display()
                )));
            }
            let features = audio::extract_features_from_file(&audio_path, &frontend)?;
            let coeffs = model.predict(&features, refs.frame(ref_frame))?;
            data::save_coeffs(&coeffs, &out)?;
            eprintln!(
                "{}",
                json!({"event": "infer", "frames": coeffs.len(), "out": out.display().to_string()})
            );
            Ok(())
        }
        Command::Eval {
            pred,
            gt,
            frames_pred,
            frames_gt,
            cfg,
        } => {
            let bag = cfg.bag()?;
            let dims = eval_dims(&bag, &gt)?;
            let gt_seq = data::load_coeffs(&gt, &dims)?;
            let pred_seq = data::load_coeffs(&pred, &dims)?;
            if pred_seq.len() != gt_seq.len() {
                return Err(Error::data(format!(
                    "row count mismatch: {} predicted vs {} ground truth",
                    pred_seq.len(),
                    gt_seq.len()
                )));
            }
            let feature = eval::feature_distance(&pred_seq, &gt_seq)?;
            let report = match (frames_pred, frames_gt) {
                (Some(fp), Some(fg)) => {
                    let (ssim, psnr, cpbd) = eval::evaluate_frame_dirs(&fp, &fg)?;
                    eval::EvalReport {
                        feature,
                        ssim: Some(ssim),
                        psnr: Some(psnr),
                        cpbd: Some(cpbd),
                    }
                }
                (None, None) => eval::EvalReport {
                    feature,
                    ssim: None,
                    psnr: None,
                    cpbd: None,
                },
                _ => {
                    return Err(Error::config(
                        "--frames-pred and --frames-gt must be supplied together".to_string(),
                    ))
                }
            };
            println!("{}", report.to_json());
            Ok(())
        }
        Command::GradCheck {
            seed,
            frames,
            epsilon,
            tolerance,
            cfg,
        } => {
            let bag = cfg.bag()?;
            let model_cfg = bag.model_config()?;
            let seed = resolve_seed(seed, bag.rng_seed);
            let model = ListenerHeadModel::init(model_cfg)?;
            let report = train::grad_check_model(&model, frames, seed, epsilon, tolerance)?;
            println!(
                "{}",
                json!({
                    "max_relative_error": report.max_relative_error,
                    "tolerance": tolerance,
                    "pass": report.pass,
                    "params": model.param_count(),
                })
            );
            if report.pass {
                Ok(())
            } else {
                Err(Error::numeric(format!(
                    "gradient check failed: max relative error {} >= {tolerance}",
                    report.max_relative_error
                )))
            }
        }
    }
}

/// Coefficient dims for `eval`: explicit config wins; otherwise the
/// expression width is inferred from the ground-truth column count.
fn eval_dims(bag: &ConfigBag, gt_path: &std::path::Path) -> Result<CoeffDims, Error> {
    if let Some(expression) = bag.expression_dim_explicit() {
        return Ok(CoeffDims {
            angle: 3,
            translation: 3,
            expression,
        });
    }
    let text = std::fs::read_to_string(gt_path)
        .map_err(|e| Error::data(format!("cannot read {}: {e}", gt_path.display())))?;
    let first = text
        .lines()
        .find(|l| !l.trim().is_empty())
        .ok_or_else(|| Error::data(format!("{} is empty", gt_path.display())))?;
    let cols = first.split(',').count();
    if cols <= 6 {
        return Err(Error::data(format!(
            "{}: expected more than 6 columns, got {cols}",
            gt_path.display()
        )));
    }
    Ok(CoeffDims {
        angle: 3,
        translation: 3,
        expression: cols - 6,
    })
}
