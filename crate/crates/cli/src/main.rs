use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use candle_core::DType;
use clap::{Parser, Subcommand, ValueEnum};
use declutter_core::mask::MaskFilter;
use declutter_core::segmentation::SegmenterBackend;
use declutter_core::{BinaryMask, Category, ImageTensor, OverrideLedger};
use declutter_models::{InpaintModel, InpaintModelConfig, ScoreModel, ScoreModelConfig};
use declutter_service::{Pipeline, ServiceConfig, Session};
use declutter_train::{
    ingest_score_dataset, train_inpaint_model, train_score_model, InpaintTrainingOptions, ScoreSample, TrainingConfig,
};
use figment::providers::{Env, Format, Serialized, Yaml};
use figment::Figment;
use serde::{Deserialize, Serialize};

#[derive(Parser)]
#[command(name = "declutter", version, about = "Find and remove clutter in photos")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Segment a photo and report each element's contribution.
    Analyze {
        image: PathBuf,
        /// Print the full session payload as JSON.
        #[arg(long)]
        json: bool,
        /// Service configuration (checkpoints, segmentation backend).
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Remove the clutter from a photo.
    Clean {
        image: PathBuf,
        /// Force a category, e.g. `--override 2=normal`. Repeatable.
        #[arg(long = "override", value_name = "INDEX=CATEGORY")]
        overrides: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write the last confidence map here.
        #[arg(long)]
        confidence_out: Option<PathBuf>,
        #[arg(long)]
        max_iter: Option<usize>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Train the score model from a CSV manifest.
    TrainScore {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Where checkpoints and logs go.
        #[arg(long, default_value = "runs/score")]
        output: PathBuf,
    },
    /// Train the inpainting model on a directory of images.
    TrainInpaint {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "runs/inpaint")]
        output: PathBuf,
        #[arg(long)]
        max_steps: Option<usize>,
    },
    /// Run the HTTP service.
    Serve {
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
enum ModelSize {
    Tiny,
    #[default]
    Reference,
}

/// Keys of a training YAML file besides the [`TrainingConfig`] fields.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
struct TrainingExtras {
    model: ModelSize,
    /// Provides masks for manifest images.
    segmentation: SegmenterBackend,
    mask_filter: MaskFilter,
}

fn training_figment(path: Option<&Path>) -> Result<Figment> {
    let mut figment = Figment::from(Serialized::defaults(TrainingConfig::default()));
    if let Some(path) = path {
        if !path.exists() {
            bail!("{} does not exist", path.display());
        }
        figment = figment.merge(Yaml::file(path));
    }
    Ok(figment.merge(Env::prefixed("DECLUTTER_").split("__")))
}

fn load_training(path: Option<&Path>) -> Result<(TrainingConfig, TrainingExtras)> {
    let figment = training_figment(path)?;
    let config: TrainingConfig = figment.extract().context("reading the training configuration")?;
    let extras: TrainingExtras = figment.extract().context("reading the training configuration")?;
    config.validate()?;
    Ok((config, extras))
}

fn parse_override(text: &str) -> Result<(usize, Category)> {
    let (index, category) = text.split_once('=').with_context(|| format!("expected INDEX=CATEGORY, got {text:?}"))?;
    let index: usize = index.trim().parse().with_context(|| format!("bad element index in {text:?}"))?;
    let category = match category.trim() {
        "clutter" => Category::Clutter,
        "normal" => Category::Normal,
        other => bail!("unknown category {other:?}; use clutter or normal"),
    };
    Ok((index, category))
}

fn open_image(path: &Path, pipeline: &Pipeline) -> Result<ImageTensor> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(pipeline.decode_image(&bytes)?)
}

fn analyze(image_path: &Path, json: bool, config: Option<&Path>) -> Result<()> {
    let config = ServiceConfig::load(config)?;
    let pipeline = Pipeline::from_config(&config)?;
    let image = open_image(image_path, &pipeline)?;
    let analysis = pipeline.analyze(&image)?;
    let id = image_path.file_stem().map_or("image".into(), |s| s.to_string_lossy().into_owned());
    let view = Session::new(id, image, analysis).view()?;
    if json {
        println!("{}", serde_json::to_string_pretty(&view)?);
        return Ok(());
    }
    match view.overall {
        Some(o) => println!("{} elements; aesthetics {:.4}, content {:.4}", view.k, o.aes, o.content),
        None => println!("no elements found"),
    }
    for e in &view.elements {
        println!(
            "  #{:<2} {:<22} q = {:+.5}  {:<7}  area {:.1}%",
            e.index,
            e.label_name.as_deref().unwrap_or("?"),
            e.q,
            format!("{:?}", e.category).to_lowercase(),
            100.0 * e.area_fraction
        );
    }
    Ok(())
}

fn clean(
    image_path: &Path,
    overrides: &[String],
    out: Option<PathBuf>,
    confidence_out: Option<PathBuf>,
    max_iter: Option<usize>,
    config: Option<&Path>,
) -> Result<()> {
    let mut config = ServiceConfig::load(config)?;
    if let Some(n) = max_iter {
        config.max_iterations = n;
        config.validate()?;
    }
    let pipeline = Pipeline::from_config(&config)?;
    let image = open_image(image_path, &pipeline)?;
    let analysis = pipeline.analyze(&image)?;
    let mut ledger = OverrideLedger::new();
    for text in overrides {
        let (index, category) = parse_override(text)?;
        if index == 0 || index > analysis.masks.len() {
            bail!("element index {index} out of range 1..={}", analysis.masks.len());
        }
        ledger.record(index, category);
    }
    let outcome = pipeline.clean(&image, &analysis, &ledger)?;
    let out = out.unwrap_or_else(|| image_path.with_extension("clean.png"));
    outcome.image.save(&out).with_context(|| format!("writing {}", out.display()))?;
    if outcome.removed.is_empty() {
        println!("nothing to remove; wrote the original to {}", out.display());
    } else {
        println!(
            "removed elements {:?} in {} iteration(s); wrote {}",
            outcome.removed,
            outcome.iterations_used,
            out.display()
        );
    }
    if let (Some(path), Some(map)) = (confidence_out, &outcome.confidence) {
        std::fs::write(&path, map.encode_png()?)?;
    }
    Ok(())
}

fn train_score(manifest: &Path, config: Option<&Path>, output: &Path) -> Result<()> {
    let (config, extras) = load_training(config)?;
    let report = ingest_score_dataset(manifest)?;
    for err in &report.io_errors {
        log::warn!("line {}: {}: {}", err.line, err.path.display(), err.message);
    }
    let samples: Vec<ScoreSample> = report.records.iter().map(ScoreSample::load).collect::<Result<_, _>>()?;
    let model_config = match extras.model {
        ModelSize::Tiny => ScoreModelConfig::tiny(),
        ModelSize::Reference => ScoreModelConfig::reference(),
    };
    let model = ScoreModel::new(model_config, DType::F32)?;
    let segmenter = extras.segmentation.build(extras.mask_filter);
    let outcome = train_score_model(model, &samples, segmenter.as_ref(), &config, Some(output))?;
    println!(
        "trained {} epochs (best {}, early stop: {}); {} samples without elements skipped; checkpoints in {}",
        outcome.epochs.len(),
        outcome.best_epoch,
        outcome.stopped_early,
        outcome.skipped_scenes,
        output.join("checkpoints/score").display()
    );
    Ok(())
}

fn is_image(path: &Path) -> bool {
    matches!(
        path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref(),
        Some("png" | "jpg" | "jpeg")
    )
}

fn image_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for entry in std::fs::read_dir(dir).with_context(|| format!("reading {}", dir.display()))? {
        let path = entry?.path();
        if path.is_file() && is_image(&path) {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

/// Images directly in `corpus`; object masks (single-channel PNG) from an
/// optional `masks/` subdirectory.
fn train_inpaint(corpus: &Path, config: Option<&Path>, output: &Path, max_steps: Option<usize>) -> Result<()> {
    let (config, extras) = load_training(config)?;
    let images = image_files(corpus)?
        .iter()
        .map(|p| ImageTensor::open(p).with_context(|| format!("reading {}", p.display())))
        .collect::<Result<Vec<_>>>()?;
    if images.is_empty() {
        bail!("no PNG or JPEG images in {}", corpus.display());
    }
    let mask_dir = corpus.join("masks");
    let masks = if mask_dir.is_dir() {
        image_files(&mask_dir)?.iter().map(BinaryMask::open).collect::<Result<Vec<_>, _>>()?
    } else {
        Vec::new()
    };
    let model_config = match extras.model {
        ModelSize::Tiny => InpaintModelConfig::tiny(),
        ModelSize::Reference => InpaintModelConfig::reference(),
    };
    let model = InpaintModel::new(model_config, DType::F32)?;
    let options = InpaintTrainingOptions { max_steps, ..Default::default() };
    let outcome = train_inpaint_model(model, &images, &masks, &config, &options, Some(output))?;
    println!(
        "ran {} steps over {} epoch(s) on {} images and {} object masks; checkpoints in {}",
        outcome.steps.len(),
        outcome.epochs_run,
        images.len(),
        masks.len(),
        output.join("checkpoints/inpaint").display()
    );
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Analyze { image, json, config } => analyze(&image, json, config.as_deref()),
        Command::Clean { image, overrides, out, confidence_out, max_iter, config } => {
            clean(&image, &overrides, out, confidence_out, max_iter, config.as_deref())
        }
        Command::TrainScore { manifest, config, output } => train_score(&manifest, config.as_deref(), &output),
        Command::TrainInpaint { corpus, config, output, max_steps } => {
            train_inpaint(&corpus, config.as_deref(), &output, max_steps)
        }
        Command::Serve { config } => {
            let config = ServiceConfig::load(config.as_deref())?;
            tokio::runtime::Runtime::new()?.block_on(declutter_service::serve(config))?;
            Ok(())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn override_syntax() {
        assert_eq!(parse_override("2=clutter").unwrap(), (2, Category::Clutter));
        assert_eq!(parse_override(" 1 = normal ").unwrap(), (1, Category::Normal));
        assert!(parse_override("2").is_err());
        assert!(parse_override("x=normal").is_err());
        assert!(parse_override("1=maybe").is_err());
    }

    #[test]
    fn training_yaml_carries_model_and_segmentation() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("train.yaml");
        std::fs::write(&path, "model: tiny\ninput_resolution: 64\nepochs: 3\nsegmentation:\n  kind: synthetic\n  mode: seeded\n  seed: 4\n  count: 2\n").unwrap();
        let (config, extras) = load_training(Some(&path)).unwrap();
        assert_eq!(config.epochs, 3);
        assert_eq!(config.input_resolution, 64);
        assert_eq!(extras.model, ModelSize::Tiny);
        assert!(matches!(extras.segmentation, SegmenterBackend::Synthetic(_)));
    }
}
