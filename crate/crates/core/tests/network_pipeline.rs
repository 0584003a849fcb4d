mod common;

use common::*;
use drddl::hsidata::{extract_spectral_pixels, split_fraction, synth_scene};
use drddl::layers::{encode_dense, normalize_atoms};
use drddl::network::*;
use drddl::solvers::IrlsConfig;
use drddl::{ActivationKind, Error, IstaConfig, Mat, TrainSpec, Vector};

fn blobs(n: usize, seed: u64) -> (Mat, Vec<usize>) {
    let noise = random_mat(2, n, seed) * 0.3;
    let mut x = Mat::zeros(2, n);
    let mut labels = Vec::new();
    for j in 0..n {
        let c = j % 2;
        let center = if c == 0 { [2.0, -1.0] } else { [-1.0, 3.0] };
        x[(0, j)] = center[0] + noise[(0, j)];
        x[(1, j)] = center[1] + noise[(1, j)];
        labels.push(c + 1);
    }
    (x, labels)
}

fn single_layer_spec() -> TrainSpec {
    TrainSpec {
        arch: vec![2],
        ..Default::default()
    }
}

#[test]
fn single_layer_separates_blobs() {
    let (x, labels) = blobs(40, 0);
    let model = train(&x, &labels, &single_layer_spec()).unwrap();
    let cfg = EncodeConfig::default();
    let pred = predict_batch(&model, &x, &cfg).unwrap();
    assert_eq!(pred, labels);

    // single encodes agree with the batch path, and classify reproduces it
    let codes = encode_batch(&model, &x, &cfg).unwrap();
    for j in 0..x.ncols() {
        let z = encode(&model, &x.column(j).into_owned(), &cfg).unwrap();
        assert_eq!(z, codes.column(j).into_owned());
        assert_eq!(classify(&model, &z).unwrap().0, pred[j]);
        assert_eq!(classify(&model, &(z * 3.5)).unwrap().0, pred[j]);
    }
}

#[test]
fn model_round_trips_through_disk() {
    let (x, labels) = blobs(40, 1);
    let model = train(&x, &labels, &single_layer_spec()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("toy.drddl");
    save_model(&model, &path).unwrap();
    let back = load_model(&path).unwrap();
    assert_eq!(back, model);
    assert_eq!(model_to_bytes(&back).unwrap(), std::fs::read(&path).unwrap());

    let bytes = std::fs::read(&path).unwrap();
    std::fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
    assert!(matches!(load_model(&path), Err(Error::Format(_))));
    assert!(matches!(load_model(dir.path().join("missing")), Err(Error::Io(_))));
}

#[test]
fn mismatched_chain_names_the_layer() {
    let x = synth_scene(10, 10, 8, 2, 0).unwrap();
    let (cube, raster) = x;
    let split = split_fraction(&raster, 0.5, 0).unwrap();
    let data = extract_spectral_pixels(&cube, &split.train).unwrap();
    let spec = TrainSpec {
        arch: vec![6, 4, 2],
        ..Default::default()
    };
    let model = train(&data, &split.labels_of(&raster, true), &spec).unwrap();
    let mut bytes = model_to_bytes(&model).unwrap();
    // second layer shape lives after magic(6) + 3 u32 + u8 + 3 f64 + 1 shape
    let rows_of_layer2 = 6 + 12 + 1 + 24 + 8;
    bytes[rows_of_layer2..rows_of_layer2 + 4].copy_from_slice(&5u32.to_le_bytes());
    let err = model_from_bytes(&bytes).unwrap_err();
    assert!(matches!(err.root(), Error::Format(_)));
    assert!(err.to_string().contains("layer 2"), "{err}");
}

#[test]
fn training_is_deterministic() {
    let (cube, raster) = synth_scene(12, 12, 10, 3, 4).unwrap();
    let split = split_fraction(&raster, 0.3, 4).unwrap();
    let data = extract_spectral_pixels(&cube, &split.train).unwrap();
    let labels = split.labels_of(&raster, true);
    let spec = TrainSpec {
        arch: vec![8, 6, 4],
        seed: 7,
        ..Default::default()
    };
    let a = model_to_bytes(&train(&data, &labels, &spec).unwrap()).unwrap();
    let b = model_to_bytes(&train(&data, &labels, &spec).unwrap()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn three_layer_network_classifies_synthetic_scene() {
    let (cube, raster) = synth_scene(20, 20, 40, 4, 2).unwrap();
    let split = split_fraction(&raster, 0.3, 2).unwrap();
    let train_x = extract_spectral_pixels(&cube, &split.train).unwrap();
    let test_x = extract_spectral_pixels(&cube, &split.test).unwrap();
    let spec = TrainSpec {
        arch: vec![8, 6, 4],
        activation: ActivationKind::Identity,
        ..Default::default()
    };
    let (model, report) = train_with_report(&train_x, &split.labels_of(&raster, true), &spec).unwrap();
    assert_eq!(model.arch(), vec![8, 6, 4]);
    assert_eq!(report.layers.len(), 3);

    let pred = predict_batch(&model, &test_x, &EncodeConfig::default()).unwrap();
    let truth = split.labels_of(&raster, false);
    let cm = drddl::metrics::confusion(&truth, &pred, 4).unwrap();
    assert!(cm.oa().unwrap() > 0.95, "oa {}", cm.oa().unwrap());
}

#[test]
fn inner_layers_carry_the_model_activation() {
    let (cube, raster) = synth_scene(10, 10, 12, 2, 1).unwrap();
    let split = split_fraction(&raster, 0.5, 1).unwrap();
    let x = extract_spectral_pixels(&cube, &split.train).unwrap();
    let spec = TrainSpec {
        arch: vec![6, 4, 3],
        activation: ActivationKind::Sigmoid,
        ..Default::default()
    };
    let model = train(&x, &split.labels_of(&raster, true), &spec).unwrap();
    let kinds: Vec<_> = model.layers.iter().map(|l| l.activation.kind).collect();
    assert_eq!(
        kinds,
        [ActivationKind::Identity, ActivationKind::Sigmoid, ActivationKind::Sigmoid]
    );
    assert_eq!(model.activation.kind, ActivationKind::Sigmoid);
}

#[test]
fn linear_two_layer_encoding_is_composed_least_squares() {
    let x = random_mat(10, 60, 0);
    let labels: Vec<usize> = (0..60).map(|j| j % 3 + 1).collect();
    let exact_ista = IstaConfig {
        lambda: 0.0,
        max_iters: 20_000,
        tol: 0.0,
    };
    let spec = TrainSpec {
        arch: vec![5, 3],
        lambda: 0.0,
        mu_cls: 1e-12,
        activation: ActivationKind::Identity,
        ista: IstaConfig {
            max_iters: 2000,
            tol: 1e-12,
            ..Default::default()
        },
        ..Default::default()
    };
    let model = train(&x, &labels, &spec).unwrap();
    let d1 = &model.layers[0].dictionary;
    let d2 = &model.layers[1].dictionary;
    let product = d1 * d2;

    let c = random_mat(3, 8, 1);
    let scaled = &product * &c;
    let raw = model.scaling.unapply(&scaled);
    let cfg = EncodeConfig {
        irls: IrlsConfig::default(),
        ista: exact_ista,
    };
    let codes = encode_batch(&model, &raw, &cfg).unwrap();

    let oracle = normal_equations(&product, &scaled);
    assert!((&codes - &oracle).amax() < 1e-6, "{}", (&codes - &oracle).amax());
    for j in 0..c.ncols() {
        let s: Vector = scaled.column(j).into_owned();
        let z1 = encode_dense(&model.layers[0], &s).unwrap();
        let z2 = encode_dense(&model.layers[1], &z1).unwrap();
        assert!((&z2 - codes.column(j)).amax() < 1e-6);
    }
}

#[test]
fn identity_single_layer_model_returns_its_input() {
    let mut d = Mat::identity(3, 3);
    let mut z = Mat::identity(3, 3);
    normalize_atoms(&mut d, &mut z);
    let layer = drddl::Layer::new(d, drddl::Activation::identity()).unwrap();
    let model = DrddlModel::new(
        vec![layer],
        Mat::identity(3, 3),
        0.0,
        1.0,
        drddl::Activation::identity(),
        FeatureScaling::identity(3),
    )
    .unwrap();
    let x = Vector::from_column_slice(&[0.3, -1.2, 4.0]);
    let cfg = EncodeConfig {
        ista: IstaConfig {
            lambda: 0.0,
            max_iters: 200,
            tol: 0.0,
        },
        ..Default::default()
    };
    assert!((encode(&model, &x, &cfg).unwrap() - &x).amax() < 1e-12);
}
