use candle_core::DType;
use declutter_core::segmentation::SyntheticSegmenter;
use declutter_models::{ScoreModel, ScoreModelConfig};
use declutter_train::log::read_json_lines;
use declutter_train::synthetic::{contribution_scenes, SceneRecipe};
use declutter_train::{dataset_loss, prepare_scenes, train_score_model, ScoreSample, TrainingConfig};

fn samples(n: usize, seed: u64) -> Vec<ScoreSample> {
    contribution_scenes(n, seed, &SceneRecipe::default())
        .unwrap()
        .into_iter()
        .map(|s| s.sample)
        .collect()
}

fn config(epochs: usize) -> TrainingConfig {
    TrainingConfig { epochs, input_resolution: 64, batch_size_score: 4, ..Default::default() }
}

fn no_segmenter() -> SyntheticSegmenter {
    SyntheticSegmenter::planted(vec![])
}

#[test]
fn a_single_sample_is_overfit() {
    let data = samples(1, 3);
    let model = ScoreModel::new(ScoreModelConfig::tiny(), DType::F32).unwrap();
    let cfg = TrainingConfig { lr_score: 2e-3, validation_fraction: 0.0, ..config(200) };
    let out = train_score_model(model, &data, &no_segmenter(), &cfg, None).unwrap();
    let losses = out.train_losses();
    assert!(losses[0] > 1e-2, "initial loss {}", losses[0]);
    assert!(*losses.last().unwrap() < 1e-4, "final loss {}", losses.last().unwrap());
}

#[test]
fn fixed_seed_runs_are_bit_identical() {
    let data = samples(12, 5);
    let run = || {
        let model = ScoreModel::new(ScoreModelConfig::tiny(), DType::F32).unwrap();
        train_score_model(model, &data, &no_segmenter(), &config(3), None).unwrap()
    };
    let (a, b) = (run(), run());
    let bits = |o: &declutter_train::ScoreTrainingOutcome| {
        o.epochs
            .iter()
            .flat_map(|e| [e.train_loss.to_bits(), e.val_loss.map_or(0, f64::to_bits)])
            .collect::<Vec<_>>()
    };
    assert_eq!(bits(&a), bits(&b));
    assert_eq!(a.model.to_checkpoint().to_bytes().unwrap(), b.model.to_checkpoint().to_bytes().unwrap());
}

#[test]
fn reloaded_checkpoint_reproduces_logged_validation_loss() {
    let dir = tempfile::tempdir().unwrap();
    let data = samples(20, 8);
    let model = ScoreModel::new(ScoreModelConfig::tiny(), DType::F32).unwrap();
    let cfg = TrainingConfig { validation_fraction: 0.2, ..config(3) };
    let out = train_score_model(model, &data, &no_segmenter(), &cfg, Some(dir.path())).unwrap();
    assert_eq!(out.validation_indices.len(), 4);

    let ckpt_dir = dir.path().join("checkpoints/score");
    for epoch in 1..=3 {
        assert!(ckpt_dir.join(format!("{epoch}.ckpt")).exists());
    }
    assert!(ckpt_dir.join("best.ckpt").exists());

    let reloaded = ScoreModel::load(ckpt_dir.join("2.ckpt")).unwrap();
    let val: Vec<ScoreSample> = out.validation_indices.iter().map(|&i| data[i].clone()).collect();
    let (scenes, _) = prepare_scenes(&reloaded, &val, &no_segmenter()).unwrap();
    let recomputed = dataset_loss(&reloaded, &scenes, cfg.lambda_aes).unwrap();

    let log = read_json_lines(dir.path().join("logs/score.jsonl")).unwrap();
    let logged = log
        .iter()
        .find(|r| r["epoch"] == 2 && r.get("val_loss").is_some())
        .and_then(|r| r["val_loss"].as_f64())
        .unwrap();
    assert!((recomputed - logged).abs() < 1e-6, "{recomputed} vs {logged}");
    assert_eq!(out.epochs[1].val_loss, Some(logged));
}

#[test]
fn mismatched_resolution_is_rejected() {
    let model = ScoreModel::new(ScoreModelConfig::tiny(), DType::F32).unwrap();
    let cfg = TrainingConfig { input_resolution: 256, ..config(1) };
    assert!(train_score_model(model, &samples(2, 1), &no_segmenter(), &cfg, None).is_err());
}

#[test]
fn samples_without_elements_are_skipped() {
    let mut data = samples(3, 2);
    data[1].masks = Some(declutter_core::MaskSet::empty((64, 64)));
    let model = ScoreModel::new(ScoreModelConfig::tiny(), DType::F32).unwrap();
    let out = train_score_model(model, &data, &no_segmenter(), &config(1), None).unwrap();
    assert_eq!(out.skipped_scenes, 1);
}
