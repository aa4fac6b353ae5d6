use super::*;
use crate::data::{split, Split};
use crate::equilibrium::solve_direct;
use crate::linalg::max_abs_diff;
use rand::{Rng, SeedableRng};

fn identity_model(dim: usize, laplacian: ModelLaplacian) -> Dignn {
    Dignn {
        preprocess: vec![DenseLayer::identity(dim)],
        preprocess_mode: PreprocessMode::Mlp,
        norm: None,
        laplacian,
        mu: 2.5,
        tol: 1e-13,
        max_iter: 10_000,
        dropout: 0.0,
        output: vec![DenseLayer::identity(dim)],
        readout: Readout::None,
    }
}

fn small_config(kind: LaplacianChoice) -> ModelConfig {
    ModelConfig {
        input_dim: 4,
        hidden: 6,
        num_classes: 3,
        mu: 3.0,
        tol: 1e-10,
        max_iter: 1000,
        dropout: 0.0,
        laplacian: kind,
        geometry_hidden: 4,
        ..ModelConfig::default()
    }
}

fn ring_with_chords(n: usize, rng: &mut ChaCha8Rng) -> Graph {
    let mut pairs: Vec<(usize, usize)> = (0..n).map(|i| (i, (i + 1) % n)).collect();
    for _ in 0..n / 2 {
        let (a, b) = (rng.random_range(0..n), rng.random_range(0..n));
        pairs.push((a, b));
    }
    Graph::from_pairs(n, &pairs).unwrap()
}

#[test]
fn zero_output_layer_gives_zero_logits() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut m = Dignn::new(&small_config(LaplacianChoice::RandomWalk), &mut rng).unwrap();
    for l in &mut m.output {
        l.weights.fill(0.0);
        l.bias.fill(0.0);
    }
    let g = ring_with_chords(8, &mut rng);
    let x = Matrix::from_fn(8, 4, |_, _| rng.random_range(-1.0..1.0));
    let (logits, _) = m.forward(&g, &x, Mode::Eval).unwrap();
    assert!(logits.iter().all(|&v| v == 0.0));
}

#[test]
fn empty_graph_passes_features_through() {
    let x = Matrix::from_row_slice(3, 2, &[1., 2., -3., 0.5, 0., 7.]);
    let g = Graph::empty(3);
    let (logits, _) = identity_model(2, ModelLaplacian::RandomWalk).forward(&g, &x, Mode::Eval).unwrap();
    assert_eq!(logits, x);
    let p = GeometryParams::new(Matrix::identity(2, 2), Matrix::identity(2, 2), Matrix::identity(2, 2)).unwrap();
    let m = identity_model(2, ModelLaplacian::Parameterized(p));
    let (logits, _) = m.forward(&g, &x, Mode::Eval).unwrap();
    assert_eq!(logits, x);
}

#[test]
fn k2_equilibrium_logits() {
    let g = Graph::from_pairs(2, &[(0, 1)]).unwrap();
    let x = Matrix::from_column_slice(2, 1, &[1., 0.]);
    let (logits, _) = identity_model(1, ModelLaplacian::RandomWalk).forward(&g, &x, Mode::Eval).unwrap();
    assert!((logits[(0, 0)] - 7. / 9.).abs() < 1e-12);
    assert!((logits[(1, 0)] - 2. / 9.).abs() < 1e-12);
}

#[test]
fn cross_entropy_examples() {
    let uniform = Matrix::from_element(4, 3, 0.7);
    let l = loss_cross_entropy(&uniform, &[0, 1, 2, 0], &[true; 4]).unwrap();
    assert!((l - 3f64.ln()).abs() < 1e-15);
    let sharp = Matrix::from_row_slice(2, 2, &[1000., 0., 0., 1000.]);
    assert!(loss_cross_entropy(&sharp, &[0, 1], &[true, true]).unwrap() < 1e-300);
    let two = Matrix::from_row_slice(2, 2, &[1., 0., 0., 1.]);
    let l = loss_cross_entropy(&two, &[0, 1], &[true, true]).unwrap();
    assert!((l - (1.0 + (-1f64).exp()).ln()).abs() < 1e-15);
    assert!((l - 0.3133).abs() < 1e-4);
    assert!(matches!(loss_cross_entropy(&two, &[0, 1], &[false, false]), Err(Error::EmptyMask)));
}

#[test]
fn cross_entropy_gradient_closed_form() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let logits = Matrix::from_fn(6, 4, |_, _| rng.random_range(-3.0..3.0));
    let labels = [0, 3, 1, 2, 2, 0];
    let mask = [true, false, true, true, false, true];
    let (_, grad) = cross_entropy_with_grad(&logits, &labels, &mask).unwrap();
    for i in 0..6 {
        let z: f64 = logits.row(i).iter().map(|v| v.exp()).sum();
        for c in 0..4 {
            let expected = if mask[i] {
                (logits[(i, c)].exp() / z - if labels[i] == c { 1.0 } else { 0.0 }) / 4.0
            } else {
                0.0
            };
            assert!((grad[(i, c)] - expected).abs() < 1e-12);
        }
    }
}

#[test]
fn adjoint_on_empty_graph_is_the_upstream_gradient() {
    let op = LaplacianOperator::random_walk_allowing_isolated(&Graph::empty(4));
    let g = Matrix::from_fn(4, 2, |i, c| (i * 2 + c) as f64 - 3.5);
    let adj = implicit_adjoint(&op, &g, 2.5, 1e-12, 100).unwrap();
    assert_eq!(adj.v, g);
    assert!(adj.converged);
}

#[test]
fn k2_adjoint_matches_finite_differences() {
    // l = 1/2 |Z*|^2, so dl/dZ* = Z* and dl/dX = (I + Delta/mu)^{-T} Z*
    let g = Graph::from_pairs(2, &[(0, 1)]).unwrap();
    let op = LaplacianOperator::random_walk_allowing_isolated(&g);
    let mu = 2.5;
    let x = Matrix::from_column_slice(2, 1, &[1., 0.]);
    let loss = |x: &Matrix| 0.5 * solve_direct(&op, x, mu).unwrap().norm_squared();
    let z = solve_direct(&op, &x, mu).unwrap();
    let v = implicit_adjoint(&op, &z, mu, 1e-15, 10_000).unwrap().v;
    let h = 1e-5;
    for idx in 0..2 {
        let (mut p, mut m) = (x.clone(), x.clone());
        p[idx] += h;
        m[idx] -= h;
        let fd = (loss(&p) - loss(&m)) / (2.0 * h);
        assert!((fd - v[idx]).abs() / fd.abs() < 1e-7, "{fd} vs {}", v[idx]);
    }
}

#[test]
fn adjoint_divergence_is_an_error() {
    let g = Graph::from_pairs(2, &[(0, 1)]).unwrap();
    let op = LaplacianOperator::random_walk_allowing_isolated(&g);
    let up = Matrix::from_column_slice(2, 1, &[1., 0.]);
    assert!(matches!(
        implicit_adjoint(&op, &up, 0.5, 1e-12, 50),
        Err(Error::AdjointNoConvergence { .. })
    ));
    let short = implicit_adjoint(&op, &up, 2.5, 1e-12, 3).unwrap();
    assert!(!short.converged);
}

fn grad_check_instance(kind: LaplacianChoice, seed: u64) -> GradCheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = Dignn::new(&small_config(kind), &mut rng).unwrap();
    let g = ring_with_chords(10, &mut rng);
    let x = Matrix::from_fn(10, 4, |_, _| rng.random_range(-1.0..1.0));
    let labels: Vec<usize> = (0..10).map(|i| i % 3).collect();
    let mask: Vec<bool> = (0..10).map(|i| i % 4 != 0).collect();
    grad_check(&m, &g, &x, &labels, &mask, 1e-5).unwrap()
}

#[test]
fn gradients_match_finite_differences() {
    let rw = grad_check_instance(LaplacianChoice::RandomWalk, 1);
    assert!(rw.passes(1e-4), "{rw:?}");
    assert!(!rw.max_rel_error.contains_key("theta_chi"));
    let p = grad_check_instance(LaplacianChoice::Parameterized, 1);
    assert!(p.passes(1e-4), "{p:?}");
    assert_eq!(p.max_rel_error.len(), 6);
}

#[test]
fn large_step_grad_check_does_not_crash() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let m = Dignn::new(&small_config(LaplacianChoice::Parameterized), &mut rng).unwrap();
    let g = ring_with_chords(10, &mut rng);
    let x = Matrix::from_fn(10, 4, |_, _| rng.random_range(-1.0..1.0));
    let labels: Vec<usize> = (0..10).map(|i| i % 3).collect();
    let r = grad_check(&m, &g, &x, &labels, &[true; 10], 1e-1).unwrap();
    assert!(r.worst() > 1e-4);
}

fn unrolled_gap(kind: LaplacianChoice, steps: &[usize]) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut cfg = small_config(kind);
    cfg.mu = 5.0;
    cfg.tol = 1e-14;
    cfg.max_iter = 100_000;
    let m = Dignn::new(&cfg, &mut rng).unwrap();
    let g = ring_with_chords(10, &mut rng);
    let x = Matrix::from_fn(10, 4, |_, _| rng.random_range(-1.0..1.0));
    let labels: Vec<usize> = (0..10).map(|i| i % 3).collect();
    let mask = [true; 10];
    let (_, cache) = m.forward(&g, &x, Mode::Eval).unwrap();
    let implicit = m.backward(&cache, &labels, &mask).unwrap();
    steps
        .iter()
        .map(|&k| {
            let (_, c) = m.forward_unrolled(&g, &x, Mode::Eval, k).unwrap();
            let unrolled = m.backward(&c, &labels, &mask).unwrap();
            implicit
                .entries
                .iter()
                .zip(&unrolled.entries)
                .map(|((_, a), (_, b))| max_abs_diff(a, b))
                .fold(0.0, f64::max)
        })
        .collect()
}

#[test]
fn unrolled_gradients_approach_implicit_ones() {
    let gaps = unrolled_gap(LaplacianChoice::RandomWalk, &[2, 4, 8, 16, 60]);
    for w in gaps.windows(2) {
        assert!(w[1] < w[0], "{gaps:?}");
    }
    assert!(gaps[4] < 1e-10, "{gaps:?}");
    let gaps = unrolled_gap(LaplacianChoice::Parameterized, &[60]);
    assert!(gaps[0] < 1e-10, "{gaps:?}");
}

#[test]
fn monitor_bounds_examples() {
    let z = Matrix::zeros(2, 2);
    let m = identity_model(2, ModelLaplacian::Parameterized(GeometryParams::new(z.clone(), z.clone(), z).unwrap()));
    let b = m.monitor_bounds(&Matrix::from_element(3, 2, 1.0)).unwrap();
    assert_eq!(b.bound, 0.0);
    assert!(b.ok);

    let unit = Matrix::from_row_slice(2, 2, &[1., 0., 0., 0.5]);
    let p = GeometryParams::new(unit.clone(), unit.clone(), unit).unwrap();
    let m = identity_model(2, ModelLaplacian::Parameterized(p));
    let x_tilde = Matrix::from_row_slice(2, 2, &[0.6, 0.8, 0.1, 0.0]);
    let b = m.monitor_bounds(&x_tilde).unwrap();
    assert!((b.theta_chi_norm - 1.0).abs() < 1e-12);
    assert!((b.beta_hat - 1.0).abs() < 1e-15);
    assert!((b.bound - 3.0862).abs() < 1e-4);
    assert!(!b.ok);

    assert!(identity_model(2, ModelLaplacian::RandomWalk).monitor_bounds(&x_tilde).is_err());
}

#[test]
fn argmax_ties_go_to_lowest_index() {
    let l = Matrix::from_row_slice(3, 3, &[1., 1., 0., 0., 2., 2., 5., 5., 5.]);
    assert_eq!(argmax_rows(&l), vec![0, 1, 0]);
}

fn toy_dataset() -> Dataset {
    // five nodes, labels 0 1 0 1 1, no edges
    let x = Matrix::from_row_slice(5, 2, &[1., 0., 0., 1., 1., 0., 0., 1., 1., 0.]);
    let mut ds = Dataset::new(Graph::empty(5), x, vec![0, 1, 0, 1, 1], 2).unwrap();
    ds.nodes.train_mask = vec![true, true, false, false, false];
    ds.nodes.val_mask = vec![false, false, true, false, false];
    ds.nodes.test_mask = vec![false, false, false, true, true];
    ds
}

#[test]
fn evaluate_counts_correct_predictions() {
    let ds = toy_dataset();
    let m = identity_model(2, ModelLaplacian::RandomWalk);
    // logits = features: node 4 has features (1, 0) but label 1
    assert_eq!(evaluate(&m, &ds, Split::Train).unwrap(), 1.0);
    assert_eq!(evaluate(&m, &ds, Split::Test).unwrap(), 0.5);
    let mut flat = m.clone();
    flat.output[0].weights.fill(0.0);
    assert_eq!(predict(&flat, &ds).unwrap(), vec![0; 5]);
    let mut empty = ds.clone();
    empty.nodes.val_mask = vec![false; 5];
    assert!(matches!(evaluate(&m, &empty, Split::Val), Err(Error::EmptySplit(_))));
}

#[test]
fn zero_epochs_return_the_initial_model() {
    let ds = toy_dataset();
    let m = identity_model(2, ModelLaplacian::RandomWalk);
    let r = train(m.clone(), &ds, &TrainConfig { epochs: 0, ..TrainConfig::default() }).unwrap();
    assert_eq!(r.model, m);
    assert!(r.metrics.is_empty());
    assert_eq!(r.best_epoch, None);
}

#[test]
fn separable_features_are_learned_without_edges() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = 60;
    let labels: Vec<usize> = (0..n).map(|i| i % 2).collect();
    let x = Matrix::from_fn(n, 2, |i, c| {
        let sign = if labels[i] == 0 { -1.0 } else { 1.0 };
        if c == 0 { sign * rng.random_range(0.5..1.5) } else { rng.random_range(-1.0..1.0) }
    });
    let ds = Dataset::new(Graph::empty(n), x, labels, 2).unwrap();
    let ds = split(&ds, (0.6, 0.2, 0.2), 1).unwrap();
    let cfg = ModelConfig { input_dim: 2, hidden: 8, dropout: 0.0, ..ModelConfig::default() };
    let m = Dignn::new(&cfg, &mut rng).unwrap();
    let tc = TrainConfig { epochs: 200, lr: 0.01, ..TrainConfig::default() };
    let r = train(m, &ds, &tc).unwrap();
    assert_eq!(r.metrics.len(), 200);
    assert_eq!(evaluate(&r.model, &ds, Split::Train).unwrap(), 1.0);
}

#[test]
fn training_is_deterministic_and_checkpoints_round_trip() {
    let ds = crate::data::synth_sbm(40, 2, 0.3, 0.03, 4, 1.0, 2).unwrap();
    let cfg = ModelConfig { input_dim: 4, hidden: 8, laplacian: LaplacianChoice::Parameterized, ..ModelConfig::default() };
    let tc = TrainConfig { epochs: 5, ..TrainConfig::default() };
    let run = || {
        let mut rng = ChaCha8Rng::seed_from_u64(tc.seed);
        train(Dignn::new(&cfg, &mut rng).unwrap(), &ds, &tc).unwrap()
    };
    let a = run();
    assert_eq!(a, run());
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ck.json");
    Checkpoint::new(a.model.clone(), Some(tc.clone()), Some(a.rng.clone())).save(&path).unwrap();
    let back = Checkpoint::load(&path).unwrap();
    assert_eq!(back.model, a.model);
    assert_eq!(predict(&back.model, &ds).unwrap(), predict(&a.model, &ds).unwrap());
    let (la, _) = a.model.forward_dataset(&ds, Mode::Eval).unwrap();
    let (lb, _) = back.model.forward_dataset(&ds, Mode::Eval).unwrap();
    assert_eq!(la, lb);
    assert!(metrics_jsonl(&a.metrics).unwrap().lines().next().unwrap().starts_with("{\"epoch\":1,"));
}

#[test]
fn graph_level_mean_readout() {
    let tri = Graph::from_pairs(3, &[(0, 1), (1, 2), (0, 2)]).unwrap();
    let pair = Graph::from_pairs(2, &[(0, 1)]).unwrap();
    let (g, membership) = Graph::block_diagonal(&[tri, pair]);
    let x = Matrix::from_column_slice(5, 1, &[1., 2., 3., 4., 6.]);
    let mut m = identity_model(1, ModelLaplacian::RandomWalk);
    m.readout = Readout::Mean;
    let (logits, cache) = m.forward_pooled(&g, &x, Some(&membership), Mode::Eval).unwrap();
    // diffusion preserves the degree-weighted mean, which is the plain mean on regular graphs
    assert!((logits[(0, 0)] - 2.0).abs() < 1e-10);
    assert!((logits[(1, 0)] - 5.0).abs() < 1e-10);
    let grads = m.backward(&cache, &[0, 0], &[true, true]).unwrap();
    assert_eq!(grads.groups(), vec![ParamGroup::Preprocess, ParamGroup::Output]);
}
