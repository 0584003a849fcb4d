mod common;

use common::*;
use drddl::hsidata::synth_mixed_noise;
use drddl::layers::*;
use drddl::solvers::IrlsConfig;
use drddl::{Activation, IstaConfig, Mat, Vector};

fn factorized(m: usize, k: usize, n: usize, seed: u64) -> (Mat, Mat) {
    (random_mat(m, k, seed), random_mat(k, n, seed + 1))
}

fn atoms_capped(d: &Mat) -> bool {
    d.column_iter().all(|c| c.norm() <= ATOM_NORM_CAP + 1e-9)
}

#[test]
fn robust_layer_recovers_exact_factorization() {
    let (d, z) = factorized(20, 5, 100, 0);
    let x = &d * &z;
    let fit = train_robust_layer(&x, 5, &RobustTrainConfig::default(), 0).unwrap();
    let recon = &fit.layer.dictionary * &fit.codes;
    assert!(rel_l1(&recon, &x) < 1e-3);
    assert!(atoms_capped(&fit.layer.dictionary));
}

#[test]
fn robust_layer_proxy_finds_the_spikes() {
    let (d, z) = factorized(20, 5, 100, 0);
    let mut x = &d * &z;
    let total = x.len();
    let spikes = total / 100;
    // every 97th entry, alternating sign, replaced outright
    let positions: Vec<usize> = (0..spikes).map(|i| (i * 97 + 13) % total).collect();
    for (i, &p) in positions.iter().enumerate() {
        x.as_mut_slice()[p] = if i % 2 == 0 { 10.0 } else { -10.0 };
    }
    let cfg = RobustTrainConfig {
        outer_iters: 500,
        ..Default::default()
    };
    let fit = train_robust_layer(&x, 5, &cfg, 0).unwrap();
    let p = fit.outliers.unwrap();
    let mut order: Vec<usize> = (0..total).collect();
    order.sort_by(|&a, &b| p.as_slice()[b].abs().partial_cmp(&p.as_slice()[a].abs()).unwrap());
    let top: std::collections::HashSet<usize> = order[..spikes].iter().copied().collect();
    let hits = positions.iter().filter(|p| top.contains(p)).count();
    assert!(hits * 10 >= spikes * 9, "{hits} of {spikes}");
}

#[test]
fn robust_layer_split_residual_below_tol_when_converged() {
    for seed in 0..3 {
        let (d, z) = factorized(20, 5, 100, 10 + seed);
        let s = synth_mixed_noise(&d, &z, 0.01, 0.01, 10.0, seed).unwrap();
        let cfg = RobustTrainConfig {
            outer_iters: 1000,
            ..Default::default()
        };
        let fit = train_robust_layer(&s.noisy, 5, &cfg, seed).unwrap();
        assert!(fit.report.converged);
        assert!(fit.primal_residual < cfg.tol);
    }
}

#[test]
fn robust_layer_beats_dense_on_mixed_noise() {
    let mut wins = 0;
    for seed in 0..10 {
        let (d, z) = factorized(20, 5, 100, 100 + seed);
        let s = synth_mixed_noise(&d, &z, 0.01, 0.01, 10.0, seed).unwrap();
        let robust = train_robust_layer(&s.noisy, 5, &RobustTrainConfig::default(), seed).unwrap();
        let dense = train_dense_layer(&s.noisy, 5, 50, Activation::identity(), seed).unwrap();
        let err_r = (&s.clean - &robust.layer.dictionary * &robust.codes).norm();
        let err_d = (&s.clean - &dense.layer.dictionary * &dense.codes).norm();
        wins += (err_r < err_d) as usize;
    }
    assert!(wins >= 9, "robust won {wins}/10");
}

#[test]
fn dense_layer_fits_low_rank_data() {
    let (d, z) = factorized(15, 4, 80, 0);
    let y = &d * &z;
    let fit = train_dense_layer(&y, 4, 200, Activation::identity(), 0).unwrap();
    let rel = (&y - &fit.layer.dictionary * &fit.codes).norm() / y.norm();
    assert!(rel < 1e-4, "{rel}");
    assert!(atoms_capped(&fit.layer.dictionary));
    for w in fit.report.objective_trace.windows(2) {
        assert!(w[1] <= w[0] + 1e-8 * w[0].max(1.0));
    }
}

#[test]
fn dense_layer_reaches_truncated_svd_error() {
    let y = random_mat(12, 30, 9);
    let fit = train_dense_layer(&y, 3, 2000, Activation::identity(), 1).unwrap();
    let got = (&y - &fit.layer.dictionary * &fit.codes).norm_squared();
    let best = truncated_svd_residual(&y, 3);
    assert!(got >= best - 1e-9);
    assert!((got - best) / best < 1e-3, "{got} vs {best}");
}

fn clusters(n_per: usize, m: usize, classes: usize, seed: u64) -> (Mat, Vec<usize>) {
    let centers = random_mat(m, classes, seed) * 3.0;
    let noise = random_mat(m, n_per * classes, seed + 1) * 0.1;
    let mut y = Mat::zeros(m, n_per * classes);
    let mut labels = Vec::new();
    for j in 0..n_per * classes {
        let c = j % classes;
        y.set_column(j, &(centers.column(c) + noise.column(j)));
        labels.push(c + 1);
    }
    (y, labels)
}

#[test]
fn final_layer_separates_clusters() {
    let (y, labels) = clusters(20, 10, 3, 0);
    let t = drddl::network::one_hot(&labels, 3).unwrap();
    let fit = train_final_layer(&y, 6, &t, &FinalTrainConfig::default(), Activation::identity(), 0)
        .unwrap();
    let scores = &fit.classifier * &fit.codes;
    for (j, col) in scores.column_iter().enumerate() {
        assert_eq!(col.argmax().0 + 1, labels[j], "sample {j}");
    }
    assert!(atoms_capped(&fit.layer.dictionary));
    for w in fit.block_trace.windows(2) {
        assert!(w[1] <= w[0] + 1e-8, "{} -> {}", w[0], w[1]);
    }
}

#[test]
fn final_layer_objective_is_monotone_across_settings() {
    for (seed, lambda, mu) in [(1, 0.0, 1.0), (2, 0.5, 0.1), (3, 2.0, 10.0)] {
        let (y, labels) = clusters(10, 8, 4, seed);
        let t = drddl::network::one_hot(&labels, 4).unwrap();
        let cfg = FinalTrainConfig {
            lambda,
            mu_cls: mu,
            iters: 15,
            ista: IstaConfig::default(),
        };
        let fit = train_final_layer(&y, 5, &t, &cfg, Activation::identity(), seed).unwrap();
        for w in fit.block_trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-8, "{} -> {}", w[0], w[1]);
        }
    }
}

#[test]
fn final_layer_without_penalties_behaves_like_dense() {
    let (d, z) = factorized(10, 4, 40, 21);
    let y = &d * &z + random_mat(10, 40, 23) * 0.01;
    let labels: Vec<usize> = (0..40).map(|j| j % 2 + 1).collect();
    let t = drddl::network::one_hot(&labels, 2).unwrap();
    let cfg = FinalTrainConfig {
        lambda: 0.0,
        mu_cls: 1e-12,
        iters: 200,
        ista: IstaConfig {
            lambda: 0.0,
            max_iters: 5000,
            tol: 1e-15,
        },
    };
    let fin = train_final_layer(&y, 4, &t, &cfg, Activation::identity(), 0).unwrap();
    let dense = train_dense_layer(&y, 4, 500, Activation::identity(), 0).unwrap();
    let r_fin = (&y - &fin.layer.dictionary * &fin.codes).norm() / y.norm();
    let r_dense = (&y - &dense.layer.dictionary * &dense.codes).norm() / y.norm();
    let r_best = truncated_svd_residual(&y, 4).sqrt() / y.norm();
    assert!((r_fin - r_dense).abs() < 1e-6, "{r_fin} vs {r_dense}");
    assert!((r_dense - r_best).abs() < 1e-6);
}

#[test]
fn robust_encoder_resists_a_spike() {
    let d = random_mat(20, 4, 31);
    let (mut dict, mut dummy) = (d.clone(), Mat::identity(4, 4));
    normalize_atoms(&mut dict, &mut dummy);
    let layer = Layer::new(dict.clone(), Activation::identity()).unwrap();
    let z_star = Vector::from_column_slice(&[1.0, -2.0, 0.5, 0.75]);
    let noise = random_mat(20, 1, 32).column(0) * 0.01;
    let clean = &dict * &z_star + noise;
    let mut spiked = clean.clone();
    spiked[7] += 10.0 * clean.amax();

    let cfg = IrlsConfig::default();
    let base_err = (encode_robust(&layer, &clean, &cfg).unwrap() - &z_star).norm();
    let robust_err = (encode_robust(&layer, &spiked, &cfg).unwrap() - &z_star).norm();
    let ls_err = (encode_dense(&layer, &spiked).unwrap() - &z_star).norm();
    assert!(robust_err < 10.0 * base_err, "{robust_err} vs {base_err}");
    assert!(robust_err < ls_err);

    let exact = &dict * &z_star;
    let back = encode_robust(&layer, &exact, &cfg).unwrap();
    assert!((back - &z_star).amax() < 1e-6);
}

#[test]
fn dense_encoder_matches_normal_equations() {
    let mut d = random_mat(9, 4, 41);
    let mut z = Mat::identity(4, 4);
    normalize_atoms(&mut d, &mut z);
    let layer = Layer::new(d.clone(), Activation::identity()).unwrap();
    let y = random_mat(9, 5, 42);
    let got = encode_dense_batch(&layer, &y).unwrap();
    assert!((got - normal_equations(&d, &y)).amax() < 1e-8);
}

#[test]
fn sparse_encoder_matches_ista_cases() {
    let mut d = random_mat(8, 5, 0);
    let mut z = Mat::identity(5, 5);
    normalize_atoms(&mut d, &mut z);
    let layer = Layer::new(d.clone(), Activation::identity()).unwrap();
    let y = random_mat(8, 1, 100);
    let cfg = IstaConfig {
        lambda: 0.0,
        max_iters: 50_000,
        tol: 1e-15,
    };
    let got = encode_sparse(&layer, &y.column(0).into_owned(), 0.5, &cfg).unwrap();
    let oracle = cd_lasso(&d, &y, 0.5);
    let gz = Mat::from_column_slice(5, 1, got.as_slice());
    assert!((lasso_objective(&d, &y, &gz, 0.5) - lasso_objective(&d, &y, &oracle, 0.5)).abs() < 1e-4);

    let ls = encode_sparse(&layer, &y.column(0).into_owned(), 0.0, &cfg).unwrap();
    assert!((Mat::from_column_slice(5, 1, ls.as_slice()) - normal_equations(&d, &y)).amax() < 1e-6);

    let eye = Layer::new(Mat::identity(3, 3), Activation::identity()).unwrap();
    let v = Vector::from_column_slice(&[1.0, -0.05, 0.3]);
    let exact = IstaConfig {
        tol: 0.0,
        max_iters: 200,
        ..cfg
    };
    let s = encode_sparse(&eye, &v, 0.2, &exact).unwrap();
    let want = Vector::from_column_slice(&[0.9, 0.0, 0.2]);
    assert!((s - want).amax() < 1e-9);
}

#[test]
fn training_is_reproducible() {
    let (d, z) = factorized(12, 3, 40, 5);
    let x = &d * &z;
    let a = train_robust_layer(&x, 3, &RobustTrainConfig::default(), 9).unwrap();
    let b = train_robust_layer(&x, 3, &RobustTrainConfig::default(), 9).unwrap();
    assert_eq!(a.layer, b.layer);
    assert_eq!(a.codes, b.codes);
}
