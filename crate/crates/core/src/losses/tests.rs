use super::*;
use crate::noise::{symmetric_matrix, NoiseModel};
use crate::numerics::{softmax, Matrix, RngStream};
use proptest::prelude::*;

/// Central differences of `f` around `z`, step `h`.
fn fd_grad(z: &[f64], h: f64, f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
    (0..z.len())
        .map(|j| {
            let mut up = z.to_vec();
            let mut dn = z.to_vec();
            up[j] += h;
            dn[j] -= h;
            (f(&up) - f(&dn)) / (2.0 * h)
        })
        .collect()
}

fn max_rel_err(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(1e-3))
        .fold(0.0, f64::max)
}

/// Logits whose softmax puts probability `py` on class `y` and spreads the
/// rest evenly.
fn logits_with(k: usize, y: usize, py: f64) -> Vec<f64> {
    let rest = (1.0 - py) / (k - 1) as f64;
    (0..k).map(|j| if j == y { py.ln() } else { rest.ln() }).collect()
}

fn onehot(k: usize, y: usize) -> TargetDist {
    TargetDist::one_hot(k, y).unwrap()
}

#[test]
fn ce_examples() {
    let u = vec![0.0; 10];
    let r = ce_loss(&u, &onehot(10, 4)).unwrap();
    assert!((r.value - 10f64.ln()).abs() < 1e-12);

    let r = ce_loss(&[50.0, -50.0, -50.0], &onehot(3, 0)).unwrap();
    assert!(r.value.abs() < 1e-40);

    let z = [2.0, 0.0, 0.0];
    let r = ce_loss(&z, &onehot(3, 0)).unwrap();
    assert!((r.value - 0.239_544_766_221_884_5).abs() < 1e-12);
    assert!((r.grad_logits[0] + 0.213_013_957_838_401_5).abs() < 1e-12);
    let fd = fd_grad(&z, 1e-5, |z| ce_loss(z, &onehot(3, 0)).unwrap().value);
    assert!(max_rel_err(&r.grad_logits, &fd) < 1e-8);

    assert!(matches!(ce_loss(&z, &onehot(2, 0)), Err(Error::InvalidInput(_))));
}

#[test]
fn rce_examples() {
    let r = rce_loss(&[40.0, -40.0, -40.0], &onehot(3, 0), -4.0).unwrap();
    assert!(r.value.abs() < 1e-15);

    // full-sum oracle against the closed form -A(1 - p_y)
    let z = logits_with(4, 1, 0.25);
    let p = softmax(&z).unwrap();
    let full: f64 = -(0..4)
        .map(|k| p[k] * crate::numerics::clamped_log(if k == 1 { 1.0 } else { 0.0 }, -4.0).unwrap())
        .sum::<f64>();
    let closed = 4.0 * (1.0 - p[1]);
    assert!((full - 3.0).abs() < 1e-12 && (closed - 3.0).abs() < 1e-12);
    let r = rce_loss(&z, &onehot(4, 1), -4.0).unwrap();
    assert!((r.value - 3.0).abs() < 1e-12);

    let r2 = rce_loss(&z, &onehot(4, 1), -2.0).unwrap();
    let m = mae_loss(&z, &onehot(4, 1)).unwrap();
    assert!((r2.value - 1.5).abs() < 1e-12);
    assert!((r2.value - m.value).abs() < 1e-12);

    assert!(matches!(rce_loss(&z, &onehot(4, 1), 0.0), Err(Error::InvalidParameter(_))));
    assert!(matches!(rce_loss(&z, &onehot(4, 1), 2.0), Err(Error::InvalidParameter(_))));
}

#[test]
fn sl_examples() {
    let r = sl_loss(&[60.0, -60.0], &onehot(2, 0), 0.3, 2.0, -6.0).unwrap();
    assert!(r.value.abs() < 1e-20);

    let r = sl_loss(&[0.0; 10], &onehot(10, 0), 1.0, 1.0, -4.0).unwrap();
    assert!((r.value - 5.902_585_092_994_046).abs() < 1e-12);

    let z = [0.0, 0.0];
    let r = sl_loss(&z, &onehot(2, 0), 1.0, 1.0, -6.0).unwrap();
    let fd = fd_grad(&z, 1e-5, |z| sl_loss(z, &onehot(2, 0), 1.0, 1.0, -6.0).unwrap().value);
    assert!((fd[0] + 2.0).abs() < 1e-8);
    assert!((r.grad_logits[0] + 2.0).abs() < 1e-12);

    assert!(sl_loss(&z, &onehot(2, 0), -1.0, 1.0, -6.0).is_err());
    assert!(sl_loss(&z, &onehot(2, 0), 1.0, f64::NAN, -6.0).is_err());
}

#[test]
fn mae_examples() {
    assert!(mae_loss(&[50.0, -50.0], &onehot(2, 0)).unwrap().value < 1e-20);
    let z = logits_with(5, 2, 0.25);
    assert!((mae_loss(&z, &onehot(5, 2)).unwrap().value - 1.5).abs() < 1e-12);
    assert!((mae_loss(&[0.0; 10], &onehot(10, 9)).unwrap().value - 1.8).abs() < 1e-12);
    assert!(mae_loss(&z, &onehot(4, 2)).is_err());
}

#[test]
fn gce_examples() {
    for q in [0.1, 0.5, 1.0] {
        assert!(gce_loss(&[40.0, -40.0], 0, q).unwrap().value.abs() < 1e-15);
    }
    let z = logits_with(3, 0, 0.3);
    let r = gce_loss(&z, 0, 1.0).unwrap();
    assert!((r.value - 0.7).abs() < 1e-12);
    assert!((r.value - mae_loss(&z, &onehot(3, 0)).unwrap().value / 2.0).abs() < 1e-12);

    let z = logits_with(4, 1, 0.5);
    let g = gce_loss(&z, 1, 1e-6).unwrap();
    let ce = ce_loss(&z, &onehot(4, 1)).unwrap();
    assert!((g.value - ce.value).abs() < 1e-5);
    assert!((g.value - 2f64.ln()).abs() < 1e-5);

    assert!(matches!(gce_loss(&z, 1, 0.0), Err(Error::InvalidParameter(_))));
    assert!(matches!(gce_loss(&z, 1, 1.5), Err(Error::InvalidParameter(_))));
    assert!(gce_loss(&z, 4, 0.5).is_err());
}

#[test]
fn forward_examples() {
    let z = [0.3, -1.2, 2.0, 0.1];
    let id = NoiseModel::identity(4);
    for y in 0..4 {
        let f = forward_loss(&z, y, &id).unwrap();
        let c = ce_loss(&z, &onehot(4, y)).unwrap();
        assert!((f.value - c.value).abs() < 1e-14);
        for (a, b) in f.grad_logits.iter().zip(&c.grad_logits) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    let t = NoiseModel::from_matrix(Matrix::new(2, 2, vec![0.6, 0.4, 0.4, 0.6]).unwrap(), 0.4).unwrap();
    let z = [3f64.ln(), 0.0]; // p = [0.75, 0.25]
    let r = forward_loss(&z, 0, &t).unwrap();
    assert!((r.value - 0.597_837_000_755_620_4).abs() < 1e-12);
    let fd = fd_grad(&z, 1e-5, |z| forward_loss(z, 0, &t).unwrap().value);
    assert!(max_rel_err(&r.grad_logits, &fd) < 1e-8);

    // near point mass on class 1: value tends to -ln T[1][label]
    let t3 = symmetric_matrix(3, 0.3).unwrap();
    let r = forward_loss(&[-40.0, 40.0, -40.0], 2, &t3).unwrap();
    assert!((r.value + (0.15f64).ln()).abs() < 1e-12);

    assert!(matches!(forward_loss(&z, 0, &t3), Err(Error::InvalidParameter(_))));
}

#[test]
fn forward_unreachable_label_is_clamped() {
    // column 1 of a permutation-free matrix with no mass reaching class 1
    let t = NoiseModel::from_matrix(Matrix::new(2, 2, vec![1.0, 0.0, 1.0, 0.0]).unwrap(), 0.5).unwrap();
    let r = forward_loss(&[0.2, 0.1], 1, &t).unwrap();
    assert!(r.value.is_finite() && r.value > 0.0);
    assert!(r.grad_logits.iter().all(|g| *g == 0.0));
}

#[test]
fn composite_examples() {
    let z = [0.4, -0.3, 1.1];
    let ctx = LossContext::new(1);
    let a = LossSpec::sl(0.5, 2.0, -3.0);
    let b = LossSpec::mae();
    let c = composite_loss(&a, 1.0, &b, 0.0, &z, &ctx).unwrap();
    assert_eq!(c, a.evaluate(&z, &ctx).unwrap());

    let fwd_rce = composite_loss(
        &LossSpec::forward(TransitionRef::Identity),
        1.0,
        &LossSpec::rce(-4.0),
        1.0,
        &z,
        &ctx,
    )
    .unwrap();
    let sl = sl_loss(&z, &onehot(3, 1), 1.0, 1.0, -4.0).unwrap();
    assert!((fwd_rce.value - sl.value).abs() < 1e-12);
    for (x, y) in fwd_rce.grad_logits.iter().zip(&sl.grad_logits) {
        assert!((x - y).abs() < 1e-12);
    }

    let five_ce = composite_loss(&LossSpec::ce(), 5.0, &LossSpec::rce(-4.0), 0.0, &z, &ctx).unwrap();
    let ce = ce_loss(&z, &onehot(3, 1)).unwrap();
    assert!((five_ce.value - 5.0 * ce.value).abs() < 1e-12);

    assert!(composite_loss(&a, -1.0, &b, 1.0, &z, &ctx).is_err());
}

#[test]
fn spec_validation() {
    assert!(LossSpec::sl(0.01, 1.0, -4.0).validate().is_ok());
    assert!(LossSpec::rce(0.0).validate().is_err());
    assert!(LossSpec::gce(0.0).validate().is_err());
    assert!(LossSpec::lsr(1.2).validate().is_err());
    // irrelevant parameters are still range-checked
    let mut ce = LossSpec::ce();
    ce.clamp = 1.0;
    assert!(ce.validate().is_err());
    let mut bad = LossSpec::ce();
    bad.kind = LossKind::Composite;
    assert!(bad.validate().is_err());
    let mut fwd = LossSpec::forward(TransitionRef::Noise);
    assert!(fwd.validate().is_ok());
    fwd.transition = None;
    assert!(fwd.validate().is_err());
    let nested = LossSpec::composite(LossSpec::ce(), 1.0, LossSpec::rce(-4.0), f64::INFINITY);
    assert!(nested.validate().is_err());
}

#[test]
fn forward_noise_reference_needs_model() {
    let spec = LossSpec::forward(TransitionRef::Noise);
    assert!(matches!(
        spec.evaluate(&[0.1, 0.2], &LossContext::new(0)),
        Err(Error::InvalidState(_))
    ));
    let t = symmetric_matrix(2, 0.2).unwrap();
    let direct = forward_loss(&[0.1, 0.2], 0, &t).unwrap();
    assert_eq!(spec.evaluate(&[0.1, 0.2], &LossContext::with_noise(0, &t)).unwrap(), direct);
    assert!(spec.uses_noise_matrix());
    assert!(!LossSpec::forward(TransitionRef::Identity).uses_noise_matrix());
}

#[test]
fn value_from_probs_matches_logit_path() {
    let z = [0.3, -0.2, 1.0, 0.0];
    let p = softmax(&z).unwrap();
    for spec in [
        LossSpec::ce(),
        LossSpec::rce(-4.0),
        LossSpec::sl(0.1, 1.0, -6.0),
        LossSpec::mae(),
        LossSpec::gce(0.7),
        LossSpec::lsr(0.1),
        LossSpec::composite(LossSpec::ce(), 2.0, LossSpec::mae(), 0.5),
    ] {
        let a = spec.value_from_probs(&p, 2).unwrap();
        let b = spec.evaluate(&z, &LossContext::new(2)).unwrap().value;
        assert!((a - b).abs() < 1e-12, "{spec:?}");
    }
    let fwd = LossSpec::forward(TransitionRef::Identity);
    assert!(matches!(fwd.value_from_probs(&p, 0), Err(Error::UnsupportedLoss(_))));
    let nested = LossSpec::composite(LossSpec::ce(), 1.0, fwd, 1.0);
    assert!(matches!(nested.value_from_probs(&p, 0), Err(Error::UnsupportedLoss(_))));
}

#[test]
fn bootstrap_targets_are_frozen() {
    let spec = LossSpec::bootstrap(BootstrapMode::Soft, 0.8);
    let z = [0.5, -0.5, 0.1];
    let p = softmax(&z).unwrap();
    let ctx = LossContext::new(0);
    let r = spec.evaluate(&z, &ctx).unwrap();
    let fd = fd_grad(&z, 1e-5, |zz| {
        spec.evaluate_with_prediction(zz, &ctx, p.as_slice()).unwrap().value
    });
    assert!(max_rel_err(&r.grad_logits, &fd) < 1e-7);
    let q = bootstrap_target(0, &p, 0.8, BootstrapMode::Soft).unwrap();
    let direct = ce_loss(&z, &q).unwrap();
    assert_eq!(r.value, direct.value);
    for (a, b) in r.grad_logits.iter().zip(&direct.grad_logits) {
        assert!((a - b).abs() < 1e-15);
    }
}

fn random_logits(rng: &mut RngStream, k: usize, scale: f64) -> Vec<f64> {
    (0..k).map(|_| scale * rng.normal()).collect()
}

fn random_target(rng: &mut RngStream, k: usize) -> TargetDist {
    let w: Vec<f64> = (0..k).map(|_| rng.uniform() + 1e-3).collect();
    let s: f64 = w.iter().sum();
    TargetDist::new(w.iter().map(|x| x / s).collect()).unwrap()
}

#[test]
fn kl_identity_holds() {
    let mut rng = RngStream::new(21, 0);
    for _ in 0..500 {
        let k = 2 + rng.below(9);
        let z = random_logits(&mut rng, k, 2.0);
        let q = random_target(&mut rng, k);
        let p = softmax(&z).unwrap();
        let kl: f64 = q.as_slice().iter().zip(p.as_slice()).map(|(q, p)| q * (q / p).ln()).sum();
        let h: f64 = -q.as_slice().iter().map(|q| q * q.ln()).sum::<f64>();
        let ce = ce_loss(&z, &q).unwrap().value;
        assert!((ce - (kl + h)).abs() < 1e-10);
    }
}

proptest! {
    #[test]
    fn sl_is_ce_plus_rce(z in prop::collection::vec(-8.0f64..8.0, 2..11), y in 0usize..10, a in -8.0f64..-0.5) {
        let k = z.len();
        let t = onehot(k, y % k);
        let sl = sl_loss(&z, &t, 1.0, 1.0, a).unwrap();
        let ce = ce_loss(&z, &t).unwrap();
        let rce = rce_loss(&z, &t, a).unwrap();
        prop_assert!((sl.value - (ce.value + rce.value)).abs() < 1e-12);
    }

    #[test]
    fn rce_at_minus_two_is_mae(z in prop::collection::vec(-10.0f64..10.0, 2..11), y in 0usize..10) {
        let k = z.len();
        let t = onehot(k, y % k);
        let r = rce_loss(&z, &t, -2.0).unwrap().value;
        let m = mae_loss(&z, &t).unwrap().value;
        prop_assert!((r - m).abs() < 1e-12);
    }

    #[test]
    fn rce_sums_to_constant(z in prop::collection::vec(-10.0f64..10.0, 2..11), a in -6.0f64..-1.0) {
        let k = z.len();
        let total: f64 = (0..k).map(|y| rce_loss(&z, &onehot(k, y), a).unwrap().value).sum();
        prop_assert!((total + (k as f64 - 1.0) * a).abs() < 1e-10);
    }

    #[test]
    fn sl_gradient_closed_form(z in prop::collection::vec(-8.0f64..8.0, 2..11), y in 0usize..10, a in -8.0f64..-0.5) {
        let k = z.len();
        let y = y % k;
        let p = softmax(&z).unwrap();
        let g = sl_loss(&z, &onehot(k, y), 1.0, 1.0, a).unwrap().grad_logits;
        for j in 0..k {
            let want = if j == y {
                (p[j] - 1.0) - (a * p[j] * p[j] - a * p[j])
            } else {
                p[j] - a * p[j] * p[y]
            };
            prop_assert!((g[j] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn losses_non_negative(z in prop::collection::vec(-20.0f64..20.0, 2..11), y in 0usize..10, eps in 0.0f64..1.0) {
        let k = z.len();
        let y = y % k;
        let t = smoothed_target(y, eps, k).unwrap();
        prop_assert!(ce_loss(&z, &t).unwrap().value >= 0.0);
        prop_assert!(rce_loss(&z, &t, -4.0).unwrap().value >= 0.0);
        prop_assert!(mae_loss(&z, &t).unwrap().value >= 0.0);
        prop_assert!(gce_loss(&z, y, 0.7).unwrap().value >= 0.0);
        let tm = symmetric_matrix(k, 0.3).unwrap();
        prop_assert!(forward_loss(&z, y, &tm).unwrap().value >= 0.0);
    }
}
