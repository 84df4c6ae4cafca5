use canopy::nn::Tensor;
use canopy::train::{adam_step, AdamConfig, AdamState};

/// Scalar Adam written out longhand.
fn reference(start: [f64; 2], grad: impl Fn([f64; 2]) -> [f64; 2], cfg: AdamConfig, steps: usize) -> [f64; 2] {
    let mut w = start;
    let (mut m, mut v) = ([0.0; 2], [0.0; 2]);
    for t in 1..=steps {
        let g = grad(w);
        for i in 0..2 {
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
            let mh = m[i] / (1.0 - cfg.beta1.powi(t as i32));
            let vh = v[i] / (1.0 - cfg.beta2.powi(t as i32));
            w[i] -= cfg.lr * mh / (vh.sqrt() + cfg.eps);
        }
    }
    w
}

#[test]
fn hundred_steps_on_a_bowl_match_scalar_adam() {
    // f(x, y) = 3x² + 0.5y², minimum at the origin.
    let grad = |w: [f64; 2]| [6.0 * w[0], w[1]];
    let cfg = AdamConfig::with_lr(0.05);
    let start = [1.5, -2.0];
    let mut params = vec![Tensor::from_vec(&[2], start.to_vec()).unwrap()];
    let mut state = AdamState::new(cfg, &params).unwrap();
    let names = vec!["w".to_string()];
    for _ in 0..100 {
        let d = params[0].data();
        let g = grad([d[0], d[1]]);
        let grads = vec![Tensor::from_vec(&[2], g.to_vec()).unwrap()];
        adam_step(&mut params, &grads, &mut state, &names).unwrap();
    }
    let want = reference(start, grad, cfg, 100);
    let got = params[0].data();
    for i in 0..2 {
        assert!((got[i] - want[i]).abs() <= 1e-10, "{got:?} vs {want:?}");
    }
    assert_eq!(state.t, 100);
    assert!(got[0].abs() < 0.1 && got[1].abs() < 1.0);
}

#[test]
fn zero_learning_rate_leaves_parameters_alone() {
    let mut params = vec![Tensor::from_vec(&[3], vec![0.25f32, -1.0, 7.0]).unwrap()];
    let before = params.clone();
    let mut state = AdamState::new(AdamConfig::with_lr(0.0), &params).unwrap();
    let grads = vec![Tensor::from_vec(&[3], vec![1.0f32, -2.0, 0.5]).unwrap()];
    for _ in 0..5 {
        adam_step(&mut params, &grads, &mut state, &["p".to_string()]).unwrap();
    }
    assert_eq!(params, before);
}
