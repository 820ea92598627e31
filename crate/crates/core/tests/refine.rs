use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use rffpsr::datagen::{simulate_lds, ActionDist, Split, Trajectory};
use rffpsr::filter::filter_update;
use rffpsr::numerics::{kron, ridge_solve, Mat};
use rffpsr::oracles::Lds;
use rffpsr::refine::{bptt_gradients, mean_loss, random_init, refine, Gradients, RefineConfig};
use rffpsr::two_stage::{learn_rff_psr, FutureSpec, Hyperparams, RffPsrModel};

fn small_lds() -> Lds {
    Lds::new(
        Mat::from_rows(&[&[0.8, 0.2], &[-0.2, 0.7]]),
        Mat::from_rows(&[&[1.0], &[0.5]]),
        Mat::from_rows(&[&[1.0, 0.3]]),
        Mat::identity(2).scale(0.01),
        Mat::identity(1).scale(0.01),
    )
    .unwrap()
}

fn small_model(seed: u64) -> (RffPsrModel, Vec<Trajectory>) {
    let ds = simulate_lds(&small_lds(), 12, 40, ActionDist::Uniform { low: -1.0, high: 1.0 }, seed).unwrap();
    let hyper = Hyperparams {
        num_freq: 60,
        p: 5,
        lambda1: 1e-1,
        lambda2: 1e-2,
        seed,
        ..Hyperparams::default()
    };
    let train = ds.split(Split::Train);
    let m = learn_rff_psr(&train, FutureSpec::new(2, 3).unwrap(), &hyper).unwrap();
    (m, ds.trajectories)
}

fn loss(m: &RffPsrModel, traj: &Trajectory) -> f64 {
    bptt_gradients(m, traj, m.lambda_filter).unwrap().loss
}

fn shift(m: &RffPsrModel, dir: &Gradients, h: f64) -> RffPsrModel {
    let mut out = m.clone();
    out.w_xi.axpy(h, &dir.w_xi);
    out.w_o.axpy(h, &dir.w_o);
    out.w_pred.axpy(h, &dir.w_pred);
    for (q, d) in out.q0.iter_mut().zip(&dir.q0) {
        *q += h * d;
    }
    out
}

fn dot_grads(a: &Gradients, b: &Gradients) -> f64 {
    let f = |x: &Mat, y: &Mat| x.as_slice().iter().zip(y.as_slice()).map(|(u, v)| u * v).sum::<f64>();
    f(&a.w_xi, &b.w_xi)
        + f(&a.w_o, &b.w_o)
        + f(&a.w_pred, &b.w_pred)
        + a.q0.iter().zip(&b.q0).map(|(u, v)| u * v).sum::<f64>()
}

/// Random direction restricted to the blocks selected by `mask`
/// (w_xi, w_o, w_pred, q0), normalized per block to unit Frobenius norm.
fn direction(m: &RffPsrModel, mask: [bool; 4], rng: &mut ChaCha8Rng) -> Gradients {
    let mut g = Gradients::zeros(m);
    let mut fill = |x: &mut [f64], on: bool| {
        if !on {
            return;
        }
        let mut n = 0.0;
        for v in x.iter_mut() {
            *v = StandardNormal.sample(&mut *rng);
            n += *v * *v;
        }
        let n = n.sqrt();
        x.iter_mut().for_each(|v| *v /= n);
    };
    fill(g.w_xi.as_mut_slice(), mask[0]);
    fill(g.w_o.as_mut_slice(), mask[1]);
    fill(g.w_pred.as_mut_slice(), mask[2]);
    fill(&mut g.q0, mask[3]);
    g
}

#[test]
fn gradient_matches_central_differences() {
    let h = 1e-5;
    let masks = [
        [true, false, false, false],
        [false, true, false, false],
        [false, false, true, false],
        [false, false, false, true],
        [true, true, true, true],
    ];
    for seed in 0..20u64 {
        let (mut m, trajs) = small_model(seed);
        // Alternate between the clipped and unclipped covariance paths.
        m.clip_obs_cov = seed % 2 == 0;
        let traj = trajs[11].clone();
        let traj = Trajectory::new(
            Mat::from_fn(1, 10, |i, j| traj.observations[(i, j)]),
            Mat::from_fn(1, 10, |i, j| traj.actions[(i, j)]),
        )
        .unwrap();
        let g = bptt_gradients(&m, &traj, m.lambda_filter).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        for mask in masks {
            let d = direction(&m, mask, &mut rng);
            let fd = (loss(&shift(&m, &d, h), &traj) - loss(&shift(&m, &d, -h), &traj)) / (2.0 * h);
            let an = dot_grads(&g, &d);
            let rel = (fd - an).abs() / an.abs().max(fd.abs()).max(1e-12);
            assert!(rel <= 1e-4, "seed {seed} mask {mask:?}: analytic {an:e} fd {fd:e} rel {rel:e}");
        }
    }
}

#[test]
fn single_window_prediction_gradient() {
    let (m, trajs) = small_model(3);
    let k = m.spec.k;
    let t = &trajs[0];
    let traj = Trajectory::new(
        Mat::from_fn(1, k, |i, j| t.observations[(i, j)]),
        Mat::from_fn(1, k, |i, j| t.actions[(i, j)]),
    )
    .unwrap();
    let g = bptt_gradients(&m, &traj, m.lambda_filter).unwrap();
    let psi_a = m.future_act.apply(&traj.act_window(0, k)).unwrap();
    let mut x = kron(&m.q0, &psi_a);
    x.push(1.0);
    let pred = m.w_pred.matvec(&x).unwrap();
    let target = traj.obs_window(0, k);
    for i in 0..pred.len() {
        for j in 0..x.len() {
            let want = 2.0 * (pred[i] - target[i]) * x[j];
            assert!((g.w_pred[(i, j)] - want).abs() <= 1e-12 * (1.0 + want.abs()));
        }
    }
    assert_eq!(g.count, k);
    assert_eq!(g.w_xi.frobenius_norm(), 0.0);
    assert_eq!(g.w_o.frobenius_norm(), 0.0);
}

#[test]
fn zero_error_gives_zero_gradient() {
    let (mut m, trajs) = small_model(4);
    let t = &trajs[0];
    // With W_pred = 0 the model predicts zero; make the targets zero too.
    m.w_pred = Mat::zeros(m.w_pred.rows(), m.w_pred.cols());
    let traj = Trajectory::new(Mat::zeros(1, t.len()), t.actions.clone()).unwrap();
    let g = bptt_gradients(&m, &traj, m.lambda_filter).unwrap();
    assert_eq!(g.loss, 0.0);
    assert_eq!(g.norm_sq(), 0.0);
}

#[test]
fn gradients_add_over_trajectories() {
    let (m, trajs) = small_model(5);
    let a = bptt_gradients(&m, &trajs[0], m.lambda_filter).unwrap();
    let b = bptt_gradients(&m, &trajs[1], m.lambda_filter).unwrap();
    let mut sum = a.clone();
    sum.add(&b);
    let batch = rffpsr::refine::batch_gradients(&m, &[&trajs[0], &trajs[1]]).unwrap();
    let n = (a.count + b.count) as f64;
    assert_eq!(batch.count, a.count + b.count);
    assert!((batch.loss - sum.loss / n).abs() <= 1e-12 * sum.loss);
    let diff = batch.w_pred.sub(&sum.w_pred.scale(1.0 / n)).unwrap().frobenius_norm();
    assert!(diff <= 1e-12 * (1.0 + batch.w_pred.frobenius_norm()));
}

#[test]
fn stops_immediately_when_step_below_threshold() {
    let (m, trajs) = small_model(6);
    let train: Vec<&Trajectory> = trajs[..6].iter().collect();
    let val: Vec<&Trajectory> = trajs[6..9].iter().collect();
    let cfg = RefineConfig {
        initial_step: Some(0.9e-5),
        ..RefineConfig::default()
    };
    let (out, log) = refine(&m, &train, &val, &cfg).unwrap();
    assert!(log.is_empty());
    assert_eq!(out.w_pred, m.w_pred);
    assert_eq!(out.clip_obs_cov, m.clip_obs_cov);

    // Exactly at the threshold one step is attempted.
    let cfg = RefineConfig {
        initial_step: Some(1e-5),
        max_epochs: 1,
        ..RefineConfig::default()
    };
    let (_, log) = refine(&m, &train, &val, &cfg).unwrap();
    assert_eq!(log.len(), 1);
}

#[test]
fn validation_loss_never_increases() {
    for seed in 7..10 {
        let (m, trajs) = small_model(seed);
        let train: Vec<&Trajectory> = trajs[..6].iter().collect();
        let val: Vec<&Trajectory> = trajs[6..9].iter().collect();
        let v0 = mean_loss(&m, &val);
        let cfg = RefineConfig {
            max_epochs: 40,
            ..RefineConfig::default()
        };
        let (out, log) = refine(&m, &train, &val, &cfg).unwrap();
        let mut best = v0;
        for e in &log {
            if e.accepted {
                assert!(e.val_loss <= best);
                best = e.val_loss;
            }
        }
        assert!((mean_loss(&out, &val) - best).abs() <= 1e-12 * best);
        // Step size halves after each rejection.
        for w in log.windows(2) {
            if !w[0].accepted {
                assert_eq!(w[1].step_size, w[0].step_size / 2.0);
            }
        }
    }
}

#[test]
fn feature_maps_are_frozen() {
    let (m, trajs) = small_model(10);
    let train: Vec<&Trajectory> = trajs[..6].iter().collect();
    let val: Vec<&Trajectory> = trajs[6..9].iter().collect();
    let cfg = RefineConfig {
        max_epochs: 10,
        ..RefineConfig::default()
    };
    let (out, _) = refine(&m, &train, &val, &cfg).unwrap();
    assert_eq!(out.obs, m.obs);
    assert_eq!(out.act, m.act);
    assert_eq!(out.future_obs, m.future_obs);
    assert_eq!(out.future_act, m.future_act);
    assert_eq!(out.u_q, m.u_q);
    assert_eq!(out.u_xi_obs, m.u_xi_obs);
    assert_eq!(out.u_oo, m.u_oo);
}

/// Least-squares W_pred for the model's own filter states.
fn optimal_w_pred(m: &RffPsrModel, trajs: &[&Trajectory]) -> Mat {
    let k = m.spec.k;
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for t in trajs {
        let mut q = m.q0.clone();
        let n = t.len() + 1 - k;
        for s in 0..n {
            let psi_a = m.future_act.apply(&t.act_window(s as isize, k)).unwrap();
            let mut x = kron(&q, &psi_a);
            x.push(1.0);
            xs.push(x);
            ys.push(t.obs_window(s as isize, k));
            if s + 1 < n {
                q = filter_update(m, &q, &t.obs(s), &t.act(s), m.lambda_filter).unwrap();
            }
        }
    }
    let x = Mat::from_columns(&xs).unwrap();
    let y = Mat::from_columns(&ys).unwrap();
    ridge_solve(&x, &y, 1e-10).unwrap()
}

#[test]
fn recovers_perturbed_prediction_weights() {
    for seed in [11, 12, 13] {
        let (mut m, trajs) = small_model(seed);
        let train: Vec<&Trajectory> = trajs[..9].iter().collect();
        m.w_pred = optimal_w_pred(&m, &train);
        let l_star = mean_loss(&m, &train);

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut start = m.clone();
        let scale = 0.1 * m.w_pred.frobenius_norm() / (m.w_pred.as_slice().len() as f64).sqrt();
        let noise = Mat::from_fn(m.w_pred.rows(), m.w_pred.cols(), |_, _| {
            let z: f64 = StandardNormal.sample(&mut rng);
            scale * z
        });
        start.w_pred.axpy(1.0, &noise);
        let l0 = mean_loss(&start, &train);
        assert!(l0 > l_star);

        let (out, _) = refine(&start, &train, &train, &RefineConfig::default()).unwrap();
        let l1 = mean_loss(&out, &train);
        let recovered = (l0 - l1) / (l0 - l_star);
        assert!(recovered >= 0.9, "seed {seed}: recovered {recovered:.3} of the gap");
    }
}

#[test]
fn random_init_keeps_feature_maps() {
    let (m, _) = small_model(14);
    let r = random_init(&m, 0.1, 3);
    assert_eq!(r.obs, m.obs);
    assert_eq!(r.u_q, m.u_q);
    assert_eq!(r.w_xi.shape(), m.w_xi.shape());
    assert_ne!(r.w_xi, m.w_xi);
    assert_eq!(r, random_init(&m, 0.1, 3));
}

