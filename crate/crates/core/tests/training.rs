mod common;

use common::{rng, ScalarAdam};
use pyramid_count::density::{generate_fixed, DensityMap, PointAnnotations};
use pyramid_count::network::{load_weights_with, FusionMode, PyramidModel};
use pyramid_count::tensor::{ConvParams, Tensor4};
use pyramid_count::training::{
    compute_gradients, continue_training, decode_optimizer_state, generate_synthetic_dataset,
    train, Adam, AdamHyper, Optimizer, Sample, Sgd, SyntheticSceneSpec, TrainConfig, TrainLog,
    TrainOptions, Trainer, CHECKPOINT_OPTIMIZER, CHECKPOINT_WEIGHTS, TRAIN_LOG,
};
use pyramid_count::Error;
use rand::Rng;

fn small_model(mode: FusionMode, seed: u64) -> PyramidModel {
    let scales: &[f32] = if mode == FusionMode::Single {
        &[1.0]
    } else {
        &[1.0, 0.5]
    };
    PyramidModel::preset("FCN-5c-small", scales, mode, seed).unwrap()
}

fn dataset(n: usize, seed: u64) -> Vec<Sample> {
    let spec = SyntheticSceneSpec {
        seed,
        count_min: 3,
        count_max: 8,
        ..SyntheticSceneSpec::with_perspective(48, 48, 4.0, 9.0)
    };
    generate_synthetic_dataset(&spec, n)
        .unwrap()
        .into_iter()
        .map(|s| {
            let ann = PointAnnotations::new(s.points.clone(), 48, 48).unwrap();
            let d = generate_fixed(&ann, 2.0).unwrap();
            Sample::new(s.name, s.image, d, s.points.len() as f64).unwrap()
        })
        .collect()
}

fn quick_config() -> TrainConfig {
    TrainConfig {
        patch_size: 32,
        target_size: 8,
        epochs: 4,
        adam_warm_epochs: 1,
        lr_decay_every: 2,
        batch_size: 2,
        seed: 3,
        ..TrainConfig::default()
    }
}

fn batch(seed: u64, n: usize) -> (Tensor4, Tensor4) {
    let mut r = rng(seed);
    let x = Tensor4::from_fn([n, 1, 32, 32], |_| r.random_range(0.0..1.0));
    let t = Tensor4::from_fn([n, 1, 8, 8], |_| r.random_range(0.0..3.0));
    (x, t)
}

fn slice_batch(t: &Tensor4, i: usize) -> Tensor4 {
    let [_, c, h, w] = t.dims();
    let len = c * h * w;
    Tensor4::new([1, c, h, w], t.data()[i * len..(i + 1) * len].to_vec()).unwrap()
}

fn flat(ps: &[ConvParams]) -> Vec<f32> {
    ps.iter()
        .flat_map(|p| p.weights.data().iter().chain(&p.bias).copied())
        .collect()
}

#[test]
fn batch_gradient_is_mean_of_per_sample_gradients() {
    let model = small_model(FusionMode::Adaptive, 11);
    let (x, t) = batch(1, 4);
    let (loss, g) = compute_gradients(&model, &x, &t).unwrap();
    let mut mean_loss = 0.0;
    let mut mean = vec![0.0f64; flat(&g).len()];
    for i in 0..4 {
        let (l, gi) = compute_gradients(&model, &slice_batch(&x, i), &slice_batch(&t, i)).unwrap();
        mean_loss += l / 4.0;
        for (m, v) in mean.iter_mut().zip(flat(&gi)) {
            *m += v as f64 / 4.0;
        }
    }
    assert!((loss - mean_loss).abs() <= 1e-9 * loss.max(1.0));
    let scale = mean.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    for (a, b) in flat(&g).iter().zip(&mean) {
        assert!((*a as f64 - b).abs() <= 1e-4 * scale, "{a} vs {b}");
    }
}

#[test]
fn gradient_reaches_every_parameter_group() {
    for mode in [
        FusionMode::Adaptive,
        FusionMode::Fixed,
        FusionMode::Sum,
        FusionMode::NoSoftmax,
    ] {
        let model = small_model(mode, 5);
        let (x, t) = batch(2, 2);
        let (_, g) = compute_gradients(&model, &x, &t).unwrap();
        assert_eq!(g.len(), model.params().len());
        for (name, p) in model.param_names().iter().zip(&g) {
            let norm: f64 = p.weights.data().iter().map(|v| (*v as f64).powi(2)).sum();
            assert!(norm > 0.0, "{mode}: no gradient reached {name}");
        }
    }
}

#[test]
fn zero_learning_rate_leaves_parameters_unchanged() {
    let model = small_model(FusionMode::Adaptive, 4);
    let (x, t) = batch(3, 2);
    let (_, g) = compute_gradients(&model, &x, &t).unwrap();
    let names = model.param_names();
    for mut opt in [
        Optimizer::Sgd(Sgd::new(model.params(), 0.9, 0.0)),
        Optimizer::Adam(Adam::new(model.params(), AdamHyper::default())),
    ] {
        let mut params = model.params().to_vec();
        for _ in 0..3 {
            opt.step(&mut params, &g, 0.0, &names).unwrap();
        }
        assert_eq!(params, model.params());
    }
}

#[test]
fn adam_matches_scalar_reference() {
    let mut r = rng(8);
    let mut p = ConvParams::zeros(2, 3, 3, 3);
    for v in p.weights.data_mut() {
        *v = r.random_range(-1.0..1.0);
    }
    let mut params = vec![p];
    let n = params[0].weights.len() + params[0].bias.len();
    let mut refs: Vec<(f64, ScalarAdam)> = flat(&params)
        .iter()
        .map(|&w| (w as f64, ScalarAdam::new()))
        .collect();
    let mut adam = Adam::new(&params, AdamHyper::default());
    let names = vec!["c".to_string()];
    for _ in 0..10 {
        let mut g = params[0].zeros_like();
        for v in g.weights.data_mut() {
            *v = r.random_range(-2.0..2.0);
        }
        for v in g.bias.iter_mut() {
            *v = r.random_range(-2.0..2.0);
        }
        adam.step(&mut params, std::slice::from_ref(&g), 1e-2, &names)
            .unwrap();
        let gf = flat(std::slice::from_ref(&g));
        for ((w, s), gi) in refs.iter_mut().zip(gf) {
            *w = s.step(*w, gi as f64, 1e-2);
        }
    }
    let got = flat(&params);
    assert_eq!(got.len(), n);
    for (a, (b, _)) in got.iter().zip(&refs) {
        assert!((*a as f64 - b).abs() <= 1e-6, "{a} vs {b}");
    }
}

#[test]
fn training_reduces_loss_on_tiny_set() {
    let data = dataset(4, 21);
    let mut model = small_model(FusionMode::Adaptive, 2);
    let cfg = TrainConfig {
        epochs: 40,
        adam_warm_epochs: 40,
        lr_decay_every: 100,
        lr_initial: 5e-3,
        batch_size: 1,
        patches_per_image: 2,
        ..quick_config()
    };
    let log = train(&mut model, &data, &cfg, &TrainOptions::default()).unwrap();
    let l = log.losses();
    let head = l[..3].iter().sum::<f64>() / 3.0;
    let tail = l[l.len() - 3..].iter().sum::<f64>() / 3.0;
    assert!(tail < head * 0.8, "loss {head} -> {tail}");
}

#[test]
fn resumed_run_matches_uninterrupted_run() {
    let data = dataset(3, 22);
    let cfg = quick_config();

    let mut straight = small_model(FusionMode::Adaptive, 9);
    let full_log = train(&mut straight, &data, &cfg, &TrainOptions::default()).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let mut first = small_model(FusionMode::Adaptive, 9);
    let opts = TrainOptions {
        checkpoint_dir: Some(dir.path().to_path_buf()),
        ..Default::default()
    };
    train(
        &mut first,
        &data,
        &TrainConfig {
            epochs: 2,
            ..cfg.clone()
        },
        &opts,
    )
    .unwrap();

    let template = small_model(FusionMode::Adaptive, 999);
    let (mut resumed, mut trainer) = Trainer::resume(dir.path(), cfg.clone(), &template).unwrap();
    assert_eq!(trainer.next_epoch, 2);
    assert!(matches!(trainer.optimizer, Optimizer::Sgd(_)));
    continue_training(&mut trainer, &mut resumed, &data, &opts).unwrap();

    assert_eq!(resumed.params(), straight.params());
    assert_eq!(trainer.log.losses(), full_log.losses());
    let on_disk =
        TrainLog::from_csv(&std::fs::read_to_string(dir.path().join(TRAIN_LOG)).unwrap()).unwrap();
    assert_eq!(on_disk.records.len(), 4);
}

#[test]
fn divergence_keeps_last_good_checkpoint() {
    let mut data = dataset(2, 23);
    let bad = DensityMap {
        data: vec![f64::NAN; 48 * 48],
        ..data[1].density.clone()
    };
    data.push(Sample::new("bad", data[1].image.clone(), bad, 1.0).unwrap());
    let dir = tempfile::tempdir().unwrap();
    let mut model = small_model(FusionMode::Adaptive, 1);
    let initial = model.clone();
    let opts = TrainOptions {
        checkpoint_dir: Some(dir.path().to_path_buf()),
        ..Default::default()
    };
    let err = train(&mut model, &data, &quick_config(), &opts).unwrap_err();
    assert!(matches!(err, Error::Diverged(_)), "{err}");

    let saved = load_weights_with(
        dir.path().join(CHECKPOINT_WEIGHTS),
        initial.config(),
        Some(vec![1.0, 0.5]),
    )
    .unwrap();
    assert_eq!(saved.params(), initial.params());
    let bytes = std::fs::read(dir.path().join(CHECKPOINT_OPTIMIZER)).unwrap();
    let state = decode_optimizer_state(&bytes, saved.params(), 0.9, 1e-4).unwrap();
    assert_eq!(state.next_epoch, 0);
}

#[test]
fn resume_rejects_mode_mismatch() {
    let data = dataset(2, 24);
    let dir = tempfile::tempdir().unwrap();
    let mut model = small_model(FusionMode::Adaptive, 1);
    let opts = TrainOptions {
        checkpoint_dir: Some(dir.path().to_path_buf()),
        ..Default::default()
    };
    train(
        &mut model,
        &data,
        &TrainConfig {
            epochs: 1,
            ..quick_config()
        },
        &opts,
    )
    .unwrap();
    let err = Trainer::resume(
        dir.path(),
        quick_config(),
        &small_model(FusionMode::Fixed, 1),
    )
    .unwrap_err();
    assert!(matches!(err, Error::Load(_)), "{err}");
}
