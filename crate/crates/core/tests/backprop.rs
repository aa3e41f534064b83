use symloss::gradcheck::rel_err;
use symloss::losses::{LossContext, LossSpec};
use symloss::numerics::{softmax, Matrix, RngStream};
use symloss::trainer::MlpModel;

fn batch_loss(model: &MlpModel, x: &Matrix, y: &[usize], loss: &LossSpec) -> f64 {
    let z = model.predict(x).unwrap();
    let total: f64 = y
        .iter()
        .enumerate()
        .map(|(i, &l)| loss.evaluate(z.row(i), &LossContext::new(l)).unwrap().value)
        .sum();
    total / y.len() as f64
}

fn grad_logits(model: &mut MlpModel, x: &Matrix, y: &[usize], loss: &LossSpec) -> Matrix {
    let z = model.forward(x).unwrap();
    let mut g = Matrix::zeros(z.rows(), z.cols());
    for (i, &l) in y.iter().enumerate() {
        let r = loss.evaluate(z.row(i), &LossContext::new(l)).unwrap();
        g.row_mut(i).copy_from_slice(&r.grad_logits);
    }
    g
}

#[test]
fn full_model_matches_finite_differences() {
    let mut rng = RngStream::new(31, 0);
    let mut model = MlpModel::init(&[5, 7, 6, 4], &mut rng).unwrap();
    for l in 0..3 {
        for b in model.bias_mut(l) {
            *b = 0.1 * rng.normal();
        }
    }
    let x = Matrix::from_fn(6, 5, |_, _| rng.normal());
    let y: Vec<usize> = (0..6).map(|_| rng.below(4)).collect();
    for loss in [LossSpec::ce(), LossSpec::sl(0.1, 1.0, -6.0), LossSpec::gce(0.7)] {
        let g = grad_logits(&mut model, &x, &y, &loss);
        let grads = model.backward(&g).unwrap();
        let h = 1e-6;
        let mut worst: f64 = 0.0;
        for l in 0..3 {
            let n = model.weights()[l].as_slice().len();
            for idx in 0..n {
                let orig = model.weights()[l].as_slice()[idx];
                model.weight_mut(l).as_mut_slice()[idx] = orig + h;
                let up = batch_loss(&model, &x, &y, &loss);
                model.weight_mut(l).as_mut_slice()[idx] = orig - h;
                let down = batch_loss(&model, &x, &y, &loss);
                model.weight_mut(l).as_mut_slice()[idx] = orig;
                worst = worst.max(rel_err(grads.weights[l].as_slice()[idx], (up - down) / (2.0 * h)));
            }
            for idx in 0..model.biases()[l].len() {
                let orig = model.biases()[l][idx];
                model.bias_mut(l)[idx] = orig + h;
                let up = batch_loss(&model, &x, &y, &loss);
                model.bias_mut(l)[idx] = orig - h;
                let down = batch_loss(&model, &x, &y, &loss);
                model.bias_mut(l)[idx] = orig;
                worst = worst.max(rel_err(grads.biases[l][idx], (up - down) / (2.0 * h)));
            }
        }
        assert!(worst < 1e-5, "{:?}: {worst}", loss.kind);
    }
}

#[test]
fn softmax_regression_gradient_is_outer_product() {
    let w = Matrix::from_fn(3, 4, |i, j| 0.1 * (i as f64) - 0.2 * (j as f64));
    let b = vec![0.05, -0.1, 0.0, 0.2];
    let mut model = MlpModel::from_parameters(vec![w], vec![b]).unwrap();
    let x = Matrix::new(1, 3, vec![0.5, -1.0, 2.0]).unwrap();
    let y = 2;
    let g = grad_logits(&mut model, &x, &[y], &LossSpec::ce());
    let grads = model.backward(&g).unwrap();
    let p = softmax(model.predict(&x).unwrap().row(0)).unwrap();
    for i in 0..3 {
        for j in 0..4 {
            let q = if j == y { 1.0 } else { 0.0 };
            let want = x.get(0, i) * (p[j] - q);
            assert!((grads.weights[0].get(i, j) - want).abs() < 1e-15);
        }
    }
    for j in 0..4 {
        let q = if j == y { 1.0 } else { 0.0 };
        assert!((grads.biases[0][j] - (p[j] - q)).abs() < 1e-15);
    }
}

#[test]
fn batch_gradient_is_mean_of_single_sample_gradients() {
    let mut rng = RngStream::new(32, 0);
    let mut model = MlpModel::init(&[3, 5, 2], &mut rng).unwrap();
    let x = Matrix::from_fn(4, 3, |_, _| rng.normal());
    let y = [0, 1, 1, 0];
    let loss = LossSpec::ce();
    let g = grad_logits(&mut model, &x, &y, &loss);
    let full = model.backward(&g).unwrap();
    let mut acc = vec![0.0; full.weights[0].as_slice().len()];
    for i in 0..4 {
        let xi = x.select_rows(&[i]);
        let gi = grad_logits(&mut model, &xi, &y[i..=i], &loss);
        let one = model.backward(&gi).unwrap();
        for (a, v) in acc.iter_mut().zip(one.weights[0].as_slice()) {
            *a += v / 4.0;
        }
    }
    for (a, b) in acc.iter().zip(full.weights[0].as_slice()) {
        assert!((a - b).abs() < 1e-14);
    }
}
