use super::*;
use crate::features::FrameMatrix;
use crate::numerics::mse;

fn tiny_cfg(seed: u32) -> SeaConfig {
    gradcheck::tiny_config(seed)
}

fn random_chunk(rows: usize, cols: usize, seed: u64) -> Matrix<f64> {
    gradcheck::random_chunk(rows, cols, seed)
}

fn gradient_check(seed: u32, mode: Mode, stop_gradient: bool) -> f64 {
    gradcheck::gradient_check(seed, mode, stop_gradient).max_rel_error
}

#[test]
fn gradients_match_finite_differences_sea() {
    for seed in 0..3 {
        let err = gradient_check(seed, Mode::Sea, false);
        assert!(err < 1e-4, "seed {seed}: relative error {err}");
    }
}

#[test]
fn gradients_match_finite_differences_pretrain() {
    for seed in 0..3 {
        let err = gradient_check(seed, Mode::Pretrain, false);
        assert!(err < 1e-4, "seed {seed}: relative error {err}");
    }
}

#[test]
fn gradients_match_finite_differences_stop_gradient() {
    let err = gradient_check(7, Mode::Sea, true);
    assert!(err < 1e-4, "relative error {err}");
}

#[test]
fn init_is_deterministic_and_shaped() {
    let cfg = SeaConfig::default();
    let a = init_model(&cfg).unwrap();
    let b = init_model(&cfg).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.enc1.weight.shape(), (13, 256));
    assert_eq!(a.dec1.weight.shape(), (128, 256));
    assert_eq!(a.dec3.weight.shape(), (256, 13));
    for layer in [&a.enc1, &a.enc2, &a.label, &a.nonlabel, &a.dec1, &a.dec2, &a.dec3] {
        assert!(layer.bias.as_slice().iter().all(|&v| v == 0.0));
        let (fi, fo) = layer.weight.shape();
        let limit = (6.0 / (fi + fo) as f64).sqrt() as f32;
        assert!(layer.weight.as_slice().iter().all(|v| v.abs() <= limit));
    }
    let other = init_model(&SeaConfig { rng_seed: 1, ..cfg }).unwrap();
    assert_ne!(a, other);
}

#[test]
fn forward_shapes_and_losses() {
    let cfg = SeaConfig {
        input_dim: 6,
        hidden_dim: 10,
        embed_dim: 8,
        chunk_frames: 12,
        ..SeaConfig::default()
    };
    let p = init_model(&cfg).unwrap();
    let x: Matrix<f32> = random_chunk(12, 6, 1).cast();
    let t = forward(&p, &x, Mode::Sea).unwrap();
    assert_eq!(t.x_hat().shape(), (12, 6));
    assert_eq!(t.x_bar_hat().unwrap().shape(), (12, 6));
    assert_eq!(t.affinity.shape(), (12, 12));
    assert_eq!(t.b.shape(), (1, 8));
    assert!(t.z.as_slice().iter().all(|&v| v >= 0.0));
    assert!(t.b.as_slice().iter().all(|&v| v >= 0.0));
    let direct = mse(&x, t.x_hat()).unwrap();
    let expressed = mse(&x, t.x_bar_hat().unwrap()).unwrap();
    assert!((direct + expressed - t.loss_total).abs() < 1e-6);
    assert_eq!(t.loss_total, t.loss_direct + t.loss_self);

    let t = forward(&p, &x, Mode::Pretrain).unwrap();
    assert_eq!(t.loss_self, 0.0);
    assert_eq!(t.loss_total, t.loss_direct);
    assert!(t.x_bar_hat().is_none());

    assert!(matches!(
        forward(&p, &Matrix::zeros(12, 5), Mode::Sea),
        Err(Error::ShapeMismatch(_))
    ));
    assert!(forward(&p, &Matrix::zeros(1, 6), Mode::Sea).is_err());
}

#[test]
fn decoder_is_shared_between_branches() {
    let cfg = tiny_cfg(4);
    let p = init_model(&cfg).unwrap();
    let x: Matrix<f32> = random_chunk(12, 6, 2).cast();
    let before = forward(&p, &x, Mode::Sea).unwrap();
    let mut q = p.clone();
    q.dec3.bias.as_mut_slice()[0] += 0.5;
    q.dec1.weight.as_mut_slice()[3] += 0.25;
    let after = forward(&q, &x, Mode::Sea).unwrap();
    assert_ne!(before.x_hat(), after.x_hat());
    assert_ne!(before.x_bar_hat(), after.x_bar_hat());
}

#[test]
fn perfect_reconstruction_has_zero_gradient() {
    // With every decoder weight at zero the output is the decoder bias; a
    // chunk whose rows all equal that bias is reconstructed exactly.
    let cfg = tiny_cfg(5);
    let mut p: ModelParams<f64> = init_model(&cfg).unwrap().cast();
    for t in [&mut p.dec1.weight, &mut p.dec2.weight, &mut p.dec3.weight] {
        t.as_mut_slice().iter_mut().for_each(|v| *v = 0.0);
    }
    let target = [0.5, -1.0, 2.0, 0.0, 0.25, 3.0];
    p.dec3.bias = Matrix::from_rows(&[target]);
    let x = Matrix::from_rows(&vec![target; 12]);
    let t = forward(&p, &x, Mode::Sea).unwrap();
    assert_eq!(t.loss_total, 0.0);
    let g = backward(&p, &t, Mode::Sea, false).unwrap();
    assert!(g.to_flat().iter().all(|&v| v == 0.0));
}

#[test]
fn sgd_examples() {
    let cfg = tiny_cfg(0);
    let mut p = init_model(&cfg).unwrap();
    let orig = p.clone();
    let mut ones = p.zeros_like();
    for t in ones.tensors_mut() {
        t.as_mut_slice().iter_mut().for_each(|v| *v = 1.0);
    }
    let mut v = p.zeros_like();
    sgd_step(&mut p, &ones, &mut v, 1.0, 0.0);
    for (a, b) in p.to_flat().iter().zip(orig.to_flat()) {
        assert!((a - (b - 1.0)).abs() < 1e-6);
    }

    let mut p = orig.clone();
    let zero = p.zeros_like();
    let mut v = p.zeros_like();
    sgd_step(&mut p, &zero, &mut v, 0.1, 0.9);
    assert_eq!(p, orig);

    // scalar trajectory with momentum 0.9
    let mut p = orig.zeros_like();
    let mut v = p.zeros_like();
    sgd_step(&mut p, &ones, &mut v, 1.0, 0.9);
    assert_eq!(p.enc1.bias.as_slice()[0], -1.0);
    sgd_step(&mut p, &ones, &mut v, 1.0, 0.9);
    assert!((p.enc1.bias.as_slice()[0] + 2.9).abs() < 1e-6);
}

fn frame_matrix(m: Matrix<f64>, id: &str) -> FrameMatrix {
    FrameMatrix::new(m.cast(), 0.01, id).unwrap()
}

#[test]
fn zero_learning_rate_leaves_params() {
    let cfg = SeaConfig {
        learning_rate: 0.0,
        pretrain_epochs: 3,
        ..tiny_cfg(3)
    };
    let corpus = vec![frame_matrix(random_chunk(12, 6, 9), "u")];
    let report = pretrain_autoencoder(&corpus, &cfg).unwrap();
    assert_eq!(report.params, init_model(&cfg).unwrap());
    assert_eq!(report.num_chunks, 1);
}

#[test]
fn sea_epochs_zero_returns_input() {
    let cfg = SeaConfig {
        sea_epochs: 0,
        ..tiny_cfg(3)
    };
    let corpus = vec![frame_matrix(random_chunk(24, 6, 9), "u")];
    let p = init_model(&cfg).unwrap();
    let report = train_sea(p.clone(), &corpus, &cfg).unwrap();
    assert_eq!(report.params, p);
    assert!(report.epochs.is_empty());
}

#[test]
fn empty_corpus_and_short_utterances() {
    let cfg = tiny_cfg(0);
    let short = vec![frame_matrix(random_chunk(5, 6, 1), "s")];
    assert!(matches!(
        pretrain_autoencoder(&short, &cfg),
        Err(Error::EmptyCorpus)
    ));
    let mixed = vec![
        frame_matrix(random_chunk(5, 6, 1), "s"),
        frame_matrix(random_chunk(30, 6, 2), "l"),
    ];
    let cfg = SeaConfig {
        pretrain_epochs: 1,
        ..cfg
    };
    let report = pretrain_autoencoder(&mixed, &cfg).unwrap();
    assert_eq!(report.skipped_utterances, 1);
    assert_eq!(report.num_chunks, 2);
}

#[test]
fn training_is_deterministic() {
    let cfg = SeaConfig {
        pretrain_epochs: 2,
        sea_epochs: 2,
        learning_rate: 1e-2,
        ..tiny_cfg(11)
    };
    let corpus: Vec<_> = (0..3)
        .map(|i| frame_matrix(random_chunk(40, 6, i), &format!("u{i}")))
        .collect();
    let run = || {
        let pre = pretrain_autoencoder(&corpus, &cfg).unwrap();
        let sea = train_sea(pre.params.clone(), &corpus, &cfg).unwrap();
        (pre.epochs, sea.epochs, sea.params)
    };
    let (a, b) = (run(), run());
    assert_eq!(a.0, b.0);
    assert_eq!(a.1, b.1);
    assert_eq!(a.2, b.2);
    assert!(a.1.iter().all(|e| e.total.is_finite()));
}

#[test]
fn whole_utterance_embedding_matches_chunks() {
    let cfg = tiny_cfg(2);
    let p = init_model(&cfg).unwrap();
    let x: Matrix<f32> = random_chunk(36, 6, 4).cast();
    let whole = embed_utterance(&p, &x).unwrap();
    let parts: Vec<_> = (0..3)
        .map(|c| forward(&p, &x.slice_rows(c * 12, (c + 1) * 12), Mode::Sea).unwrap().z)
        .collect();
    assert_eq!(whole, Matrix::vstack(&parts).unwrap());
    assert!(whole.as_slice().iter().all(|&v| v >= 0.0));

    let one = embed_utterance(&p, &x.slice_rows(0, 1)).unwrap();
    assert_eq!(one.shape(), (1, 8));
    assert!(embed_utterance(&p, &Matrix::zeros(3, 4)).is_err());
}

#[test]
fn checkpoint_roundtrip_and_errors() {
    let cfg = SeaConfig {
        learning_rate: 0.0125,
        stop_gradient: true,
        ..tiny_cfg(8)
    };
    let p = init_model(&cfg).unwrap();
    let bytes = encode_checkpoint(&p, &cfg);
    let (q, c) = decode_checkpoint(&bytes).unwrap();
    assert_eq!(q, p);
    assert_eq!(c, cfg);

    let truncated = &bytes[..bytes.len() - 3];
    assert!(matches!(decode_checkpoint(truncated), Err(Error::Io(_))));
    assert!(matches!(decode_checkpoint(&bytes[..2]), Err(Error::Io(_))));

    let mut bad = bytes.clone();
    bad[..4].copy_from_slice(b"SEAX");
    assert!(matches!(decode_checkpoint(&bad), Err(Error::BadMagic { .. })));

    let mut bad = bytes;
    bad[4] = 2;
    assert!(matches!(
        decode_checkpoint(&bad),
        Err(Error::VersionMismatch { found: 2, .. })
    ));
}

