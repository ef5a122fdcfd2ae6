use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::checkpoint;
use super::*;
use crate::datagen::{gen_tvsem, TimeSeriesDataset};
use crate::diffcore::gradcheck::max_relative_error;
use crate::diffcore::{Tape, Tensor};

fn small_config(n: usize) -> ModelConfig {
    let mut cfg = ModelConfig::new(n);
    cfg.channels = 3;
    cfg.kernel_size = 2;
    cfg.num_blocks = 2;
    cfg.recon_epochs = 3;
    cfg.joint_epochs = 4;
    cfg.seed = 17;
    cfg
}

fn random_series(n: usize, t: usize, seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::new(vec![n, t], (0..n * t).map(|_| rng.gen_range(-1.5..1.5)).collect()).unwrap()
}

fn model(cfg: ModelConfig) -> UncleModel {
    let n = cfg.num_vars;
    UncleModel::new(cfg, Normalization::identity(n)).unwrap()
}

fn zero_tcn(m: &mut UncleModel, which: &str) {
    let tcn = if which == "unc" { &mut m.uncoupler } else { &mut m.recoupler };
    for p in tcn.params_mut() {
        p.values_mut().fill(0.0);
    }
}

/// Changes every series at time index `t0` and later.
fn perturb_after(x: &Tensor, t0: usize) -> Tensor {
    let t = x.shape()[x.shape().len() - 1];
    let mut y = x.clone();
    for (k, v) in y.values_mut().iter_mut().enumerate() {
        if k % t >= t0 {
            *v = *v * -3.0 + 0.7;
        }
    }
    y
}

fn prefix_equal(a: &Tensor, b: &Tensor, upto: usize) -> bool {
    let t = a.shape()[a.shape().len() - 1];
    a.values().chunks(t).zip(b.values().chunks(t)).all(|(ra, rb)| ra[..upto] == rb[..upto])
}

#[test]
fn uncouple_and_recouple_are_causal() {
    let m = model(small_config(3));
    let x = random_series(3, 40, 1);
    let t0 = 22;
    let z = m.uncouple(&x).unwrap();
    let z2 = m.uncouple(&perturb_after(&x, t0 + 5)).unwrap();
    assert_eq!(z.shape(), &[3, 3, 40]);
    assert!(prefix_equal(&z, &z2, t0 + 5));
    assert!(!prefix_equal(&z, &z2, 40));

    let r = m.recouple(&z).unwrap();
    let r2 = m.recouple(&perturb_after(&z, t0)).unwrap();
    assert_eq!(r.shape(), &[3, 40]);
    assert!(prefix_equal(&r, &r2, t0));
    assert!(r.is_finite());
}

#[test]
fn predict_next_is_causal() {
    for lag in [1, 3] {
        let mut cfg = small_config(3);
        cfg.lag = lag;
        let m = model(cfg);
        let x = random_series(3, 30, 2);
        let t0 = 17;
        let p = m.predict_next(&x).unwrap();
        let p2 = m.predict_next(&perturb_after(&x, t0)).unwrap();
        assert_eq!(p.shape(), &[3, 30 - lag]);
        // Position s forecasts index s + lag from inputs up to s + lag - 1.
        let safe = t0 + 1 - lag;
        assert!(prefix_equal(&p, &p2, safe));
        assert!(!prefix_equal(&p, &p2, safe + 1));
    }
}

#[test]
fn zero_networks_give_zero_outputs() {
    let mut m = model(small_config(2));
    let x = random_series(2, 20, 3);
    zero_tcn(&mut m, "unc");
    assert!(m.uncouple(&x).unwrap().values().iter().all(|&v| v == 0.0));

    let mut m = model(small_config(2));
    m.dependencies_mut().unwrap().values_mut().fill(0.0);
    zero_tcn(&mut m, "rec");
    assert!(m.predict_next(&x).unwrap().values().iter().all(|&v| v == 0.0));
    let z = m.uncouple(&x).unwrap();
    assert!(m.recouple(&z).unwrap().values().iter().all(|&v| v == 0.0));
}

#[test]
fn shared_parameters_are_permutation_equivariant() {
    let m = model(small_config(4));
    let x = random_series(4, 25, 4);
    let perm = [2, 0, 3, 1];
    let mut px = Vec::new();
    for &p in &perm {
        px.extend_from_slice(&x.values()[p * 25..(p + 1) * 25]);
    }
    let px = Tensor::new(vec![4, 25], px).unwrap();
    let z = m.uncouple(&x).unwrap();
    let pz = m.uncouple(&px).unwrap();
    let block = 3 * 25;
    for (row, &p) in perm.iter().enumerate() {
        assert_eq!(&pz.values()[row * block..(row + 1) * block], &z.values()[p * block..(p + 1) * block]);
    }
    let r = m.recouple(&z).unwrap();
    let pr = m.recouple(&pz).unwrap();
    for (row, &p) in perm.iter().enumerate() {
        assert_eq!(&pr.values()[row * 25..(row + 1) * 25], &r.values()[p * 25..(p + 1) * 25]);
    }
}

#[test]
fn predict_latent_cases() {
    let mut m = model(small_config(3));
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let z = Tensor::new(vec![3, 3, 12], (0..108).map(|_| rng.gen_range(0.0..2.0)).collect()).unwrap();

    m.dependencies_mut().unwrap().values_mut().fill(0.0);
    let zh = m.predict_latent(&z).unwrap();
    assert_eq!(zh.shape(), &[3, 3, 11]);
    assert!(zh.values().iter().all(|&v| v == 0.0));

    // Channel isolation: only channel 1 of the input changes.
    let mut psi_rng = ChaCha8Rng::seed_from_u64(6);
    for v in m.dependencies_mut().unwrap().values_mut() {
        *v = psi_rng.gen_range(-1.0..1.0);
    }
    let base = m.predict_latent(&z).unwrap();
    let mut z2 = z.clone();
    for i in 0..3 {
        for t in 0..12 {
            z2.values_mut()[(i * 3 + 1) * 12 + t] += 5.0;
        }
    }
    let moved = m.predict_latent(&z2).unwrap();
    for i in 0..3 {
        for c in [0, 2] {
            let r = (i * 3 + c) * 11..(i * 3 + c + 1) * 11;
            assert_eq!(&base.values()[r.clone()], &moved.values()[r]);
        }
    }

    let mut cfg = small_config(3);
    cfg.channels = 1;
    let mut one = model(cfg);
    let psi = one.dependencies_mut().unwrap();
    psi.values_mut().fill(0.0);
    for i in 0..3 {
        psi.values_mut()[i * 3 + i] = 1.0;
    }
    let z1 = Tensor::new(vec![3, 1, 12], (0..36).map(|k| (k % 7) as f64).collect()).unwrap();
    let shifted = one.predict_latent(&z1).unwrap();
    for i in 0..3 {
        assert_eq!(&shifted.values()[i * 11..(i + 1) * 11], &z1.values()[i * 12..i * 12 + 11]);
    }
    assert!(one.predict_latent(&Tensor::zeros(vec![3, 1, 1])).is_err());
}

#[test]
fn shape_contracts() {
    let m = model(small_config(3));
    assert!(m.uncouple(&random_series(2, 10, 0)).is_err());
    assert!(m.recouple(&Tensor::zeros(vec![3, 2, 10])).is_err());
    assert!(m.predict_next(&random_series(3, 1, 0)).is_err());
}

#[test]
fn loss_components_recompose() {
    let mut cfg = small_config(3);
    cfg.alpha = 0.7;
    cfg.lambda1 = 0.03;
    let m = model(cfg.clone());
    let x = random_series(3, 30, 7);
    let terms = m.total_loss(&x).unwrap();

    // Independent recomputation of each component.
    let recon_out = m.recouple(&m.uncouple(&x).unwrap()).unwrap();
    let recon = recon_out.values().iter().zip(x.values()).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / 90.0;
    let pred_out = m.predict_next(&x).unwrap();
    let mut pred = 0.0;
    for i in 0..3 {
        for s in 0..29 {
            pred += (pred_out.values()[i * 29 + s] - x.values()[i * 30 + s + 1]).powi(2);
        }
    }
    pred /= 87.0;
    let l1 = cfg.lambda1 * m.dependencies().unwrap().values().iter().map(|v| v.abs()).sum::<f64>();
    assert!((terms.recon - recon).abs() < 1e-12);
    assert!((terms.pred - pred).abs() < 1e-12);
    assert!((terms.l1 - l1).abs() < 1e-12);
    assert!((terms.total - (recon + cfg.alpha * pred + l1)).abs() < 1e-12);
    assert!((terms.total - (terms.recon + cfg.alpha * terms.pred + terms.l1)).abs() < 1e-12);
}

#[test]
fn loss_special_cases() {
    let mut cfg = small_config(2);
    cfg.alpha = 0.0;
    cfg.lambda1 = 0.0;
    let x = random_series(2, 20, 8);
    let t = model(cfg.clone()).total_loss(&x).unwrap();
    assert_eq!(t.total, t.recon);

    cfg.alpha = 1.0;
    cfg.lambda1 = 0.25;
    cfg.channels = 2;
    let mut m = model(cfg);
    let psi = m.dependencies_mut().unwrap();
    psi.values_mut().fill(0.0);
    psi.values_mut()[1] = 1.0;
    psi.values_mut()[2] = -1.0;
    assert_eq!(m.total_loss(&x).unwrap().l1, 0.5);
}

#[test]
fn full_loss_gradients_match_finite_differences() {
    for share in [true, false] {
        let mut cfg = small_config(2);
        cfg.channels = 2;
        cfg.lag = 2;
        cfg.share_params = share;
        cfg.alpha = 0.8;
        cfg.lambda1 = 0.05;
        let m = model(cfg.clone());
        let x = random_series(2, 12, 9);
        let params: Vec<Tensor> = m.params().into_iter().cloned().collect();
        let err = max_relative_error(&params, 1e-5, |tape: &mut Tape, vars| m.record_total_loss(tape, vars, &x)).unwrap();
        assert!(err <= 1e-4, "share={share}: relative error {err}");
    }
}

#[test]
fn zero_epochs_return_the_initial_model() {
    let (data, _) = gen_tvsem(400, 0).unwrap();
    let mut cfg = small_config(2);
    cfg.recon_epochs = 0;
    cfg.joint_epochs = 0;
    let (trained, hist) = train(&data, &cfg).unwrap();
    assert!(hist.is_empty());
    assert_eq!(trained, UncleModel::new(cfg, Normalization::fit(&data)).unwrap());
}

#[test]
fn training_is_seed_deterministic_and_lowers_reconstruction() {
    let (data, _) = gen_tvsem(400, 1).unwrap();
    let mut cfg = small_config(2);
    cfg.recon_epochs = 30;
    cfg.joint_epochs = 10;
    cfg.lr = 1e-2;
    let (a, ha) = train(&data, &cfg).unwrap();
    let (b, hb) = train(&data, &cfg).unwrap();
    assert_eq!(a.dependencies(), b.dependencies());
    assert_eq!(a, b);
    assert_eq!(ha, hb);
    assert_eq!(ha.len(), 40);
    assert!(ha[29].recon < ha[0].recon);
    assert!(ha[0].pred.is_none() && ha[30].pred.is_some());
    let last = ha.last().unwrap();
    assert!((last.total - (last.recon + cfg.alpha * last.pred.unwrap() + last.l1.unwrap())).abs() < 1e-12);
    cfg.seed += 1;
    let (c, _) = train(&data, &cfg).unwrap();
    assert_ne!(a.dependencies(), c.dependencies());
}

#[test]
fn pretraining_leaves_dependencies_untouched() {
    let (data, _) = gen_tvsem(400, 2).unwrap();
    let mut cfg = small_config(2);
    cfg.recon_epochs = 5;
    cfg.joint_epochs = 0;
    let init = UncleModel::new(cfg.clone(), Normalization::fit(&data)).unwrap();
    let (trained, _) = train(&data, &cfg).unwrap();
    assert_eq!(trained.dependencies(), init.dependencies());
    assert_ne!(trained.uncoupler(), init.uncoupler());
}

#[test]
fn shared_parameter_count_is_independent_of_n() {
    let count = |n: usize, share: bool| {
        let mut cfg = small_config(n);
        cfg.share_params = share;
        model(cfg).tcn_param_count()
    };
    assert_eq!(count(2, true), count(11, true));
    assert_eq!(count(4, false), 2 * count(2, false));
    assert_eq!(count(3, false), 3 * count(1, true));
}

#[test]
fn disabled_dependencies_predict_by_shifting() {
    let mut cfg = small_config(3);
    cfg.disable_dependency_matrices = true;
    let m = model(cfg);
    assert!(m.dependencies().is_none());
    let x = random_series(3, 15, 10);
    let z = m.uncouple(&x).unwrap();
    let zh = m.predict_latent(&z).unwrap();
    for row in 0..9 {
        assert_eq!(&zh.values()[row * 14..(row + 1) * 14], &z.values()[row * 15..row * 15 + 14]);
    }
    assert_eq!(m.total_loss(&x).unwrap().l1, 0.0);
}

#[test]
fn nonfinite_loss_aborts_training() {
    let (data, _) = gen_tvsem(400, 3).unwrap();
    let mut cfg = small_config(2);
    cfg.lr = 1e300;
    cfg.recon_epochs = 5;
    let err = train(&data, &cfg).unwrap_err();
    assert!(matches!(err, crate::UncleError::NonFiniteLoss { .. }), "{err}");
}

#[test]
fn checkpoint_round_trip() {
    let (data, _) = gen_tvsem(400, 4).unwrap();
    for share in [true, false] {
        let mut cfg = small_config(2);
        cfg.share_params = share;
        cfg.recon_epochs = 2;
        cfg.joint_epochs = 2;
        let (m, _) = train(&data, &cfg).unwrap();
        let bytes = checkpoint::encode(&m);
        assert!(bytes.starts_with(b"UNCL1\n"));
        let back = checkpoint::decode(&bytes, "mem".as_ref()).unwrap();
        assert_eq!(back, m);
        assert_eq!(checkpoint::encode(&back), bytes);

        assert!(checkpoint::decode(&bytes[..bytes.len() - 3], "mem".as_ref()).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(checkpoint::decode(&extra, "mem".as_ref()).is_err());
        assert!(checkpoint::decode(b"UNCL2\n", "mem".as_ref()).is_err());
    }
    let mut cfg = small_config(2);
    cfg.disable_dependency_matrices = true;
    let m = model(cfg);
    assert_eq!(checkpoint::decode(&checkpoint::encode(&m), "mem".as_ref()).unwrap(), m);
}

#[test]
fn checkpoint_files() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    let data = TimeSeriesDataset::from_rows(vec![vec![1.0, 2.0, 4.0, 3.0, 5.0], vec![0.0, 1.0, 0.0, 1.0, 0.5]]).unwrap();
    let mut cfg = small_config(2);
    cfg.recon_epochs = 1;
    cfg.joint_epochs = 1;
    let (m, _) = train(&data, &cfg).unwrap();
    checkpoint::save(&m, &path).unwrap();
    assert_eq!(checkpoint::load(&path).unwrap(), m);
    assert!(checkpoint::load(&dir.path().join("none.ckpt")).is_err());
}
