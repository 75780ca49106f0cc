use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use svsgan::autodiff::{backward, backward_with, GradOptions, Tensor};
use svsgan::networks::ParamStore;
use svsgan::objectives::*;
use svsgan::trainer::{AdamW, AdamWParams};

type T = Tensor<f64>;

fn t(data: &[f64], shape: &[usize]) -> T {
    Tensor::new(data.to_vec(), shape).unwrap()
}

fn random(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect()
}

fn val(x: &T) -> f64 {
    x.item().unwrap()
}

#[test]
fn duration_loss_oracles() {
    let d = t(&[3.0, 5.0, 1.0], &[3]);
    assert_eq!(val(&duration_loss(&d, &d).unwrap()), 0.0);
    assert_eq!(val(&duration_loss(&t(&[2.0], &[1]), &t(&[4.0], &[1])).unwrap()), 4.0);

    let a = random(17, 1);
    let b = random(17, 2);
    let want = a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / 17.0;
    let got = val(&duration_loss(&t(&a, &[17]), &t(&b, &[17])).unwrap());
    assert!((got - want).abs() < 1e-12);
}

#[test]
fn duration_loss_batch_ignores_padding() {
    let targets = vec![vec![2, 3], vec![4, 1, 1]];
    let pred = t(&[2.0, 5.0, 99.0, 4.0, 0.0, 3.0], &[2, 3]);
    let first = (0.0 + 4.0) / 2.0;
    let second = (0.0 + 1.0 + 4.0) / 3.0;
    let got = val(&duration_loss_batch(&targets, &pred).unwrap());
    assert!((got - (first + second) / 2.0).abs() < 1e-12);
    assert!(duration_loss_batch(&[vec![1; 4]], &t(&[0.0; 3], &[1, 3])).is_err());
}

#[test]
fn recon_loss_oracles() {
    let x = random(24, 3);
    let xt = t(&x, &[2, 3, 4]);
    assert_eq!(val(&recon_loss(&xt, &xt).unwrap()), 0.0);
    let plus: Vec<f64> = x.iter().map(|v| v + 1.0).collect();
    assert!((val(&recon_loss(&xt, &t(&plus, &[2, 3, 4])).unwrap()) - 1.0).abs() < 1e-12);

    let y = random(24, 4);
    let want = x.iter().zip(&y).map(|(a, b)| (a - b).abs()).sum::<f64>() / 24.0;
    let got = val(&recon_loss(&xt, &t(&y, &[2, 3, 4])).unwrap());
    assert!((got - want).abs() < 1e-12);
    assert!(recon_loss(&xt, &t(&y[..12], &[12])).is_err());
}

#[test]
fn masked_recon_matches_unpadded_items() {
    // Item 0 has 2 real frames out of 3, item 1 has all 3.
    let x = random(12, 5);
    let y = random(12, 6);
    let mask = t(&[1.0, 1.0, 0.0, 1.0, 1.0, 1.0], &[2, 1, 3]);
    let got = val(&recon_loss_masked(&t(&x, &[2, 2, 3]), &t(&y, &[2, 2, 3]), &mask).unwrap());
    let item = |b: usize, frames: usize| {
        let mut s = 0.0;
        for m in 0..2 {
            for f in 0..frames {
                let i = b * 6 + m * 3 + f;
                s += (x[i] - y[i]).abs();
            }
        }
        s / (2 * frames) as f64
    };
    assert!((got - (item(0, 2) + item(1, 3)) / 2.0).abs() < 1e-12);
}

#[test]
fn wasserstein_oracles() {
    let c = t(&[0.7, 0.7, 0.7], &[3]);
    assert_eq!(val(&wasserstein_loss(&c, &c).unwrap()), 0.0);
    assert_eq!(val(&wasserstein_loss(&t(&[1.0], &[1]), &t(&[0.0], &[1])).unwrap()), -1.0);

    let r = random(8, 7);
    let f = random(8, 8);
    let per: f64 = r.iter().zip(&f).map(|(a, b)| b - a).sum::<f64>() / 8.0;
    let got = val(&wasserstein_loss(&t(&r, &[8]), &t(&f, &[8])).unwrap());
    assert!((got - per).abs() < 1e-12);
}

#[test]
fn interpolation_endpoints() {
    let real = t(&[0.0, 0.0, 1.0, 1.0], &[2, 2]);
    let fake = t(&[2.0, 2.0, 3.0, 3.0], &[2, 2]);
    let x = interpolate_pair(&real, &fake, &[1.0, 0.0]).unwrap();
    assert_eq!(x.data(), &[0.0, 0.0, 3.0, 3.0]);
    let mid = interpolate_pair(&real, &fake, &[0.5, 0.5]).unwrap();
    assert_eq!(&mid.data()[..2], &[1.0, 1.0]);
    let same = interpolate_pair(&real, &real, &[0.3, 0.9]).unwrap();
    for (a, b) in same.data().iter().zip(real.data()) {
        assert!((a - b).abs() < 1e-15);
    }
    assert!(interpolate_pair(&real, &fake, &[0.5]).is_err());
}

fn unit_w(d: usize, seed: u64) -> T {
    let w = random(d, seed);
    let n = w.iter().map(|v| v * v).sum::<f64>().sqrt();
    t(&w.iter().map(|v| v / n).collect::<Vec<_>>(), &[d, 1])
}

#[test]
fn gradient_penalty_linear_critics() {
    let w = unit_w(6, 9);
    let x = t(&random(18, 10), &[3, 6]);
    let gp = val(&gradient_penalty(|x| x.matmul(&w)?.reshape(&[3]), &x).unwrap());
    assert!(gp <= 1e-10, "unit-norm linear critic gave {gp}");

    let w2 = w.scale(2.0).unwrap();
    let gp = val(&gradient_penalty(|x| x.matmul(&w2)?.reshape(&[3]), &x).unwrap());
    assert!((gp - 1.0).abs() < 1e-10);

    // The norm's epsilon keeps the constant case at 1 to within 1e-9.
    let gp = val(&gradient_penalty(|x| Ok(x.scale(0.0)?.sum_axes(&[1], false)?.shift(3.0)?), &x).unwrap());
    assert!((gp - 1.0).abs() < 1e-9);
}

#[test]
fn gradient_penalty_rejects_non_batch_scores() {
    let x = t(&random(6, 11), &[3, 2]);
    assert!(gradient_penalty(|x| x.sum(), &x).is_err());
}

fn tanh_critic(x: &T, w: &T) -> svsgan::Result<T> {
    let b = x.shape()[0];
    x.matmul(w)?.tanh()?.sum_axes(&[1], false)?.reshape(&[b])
}

#[test]
fn gradient_penalty_is_differentiable_in_critic_params() {
    let w = Tensor::param(random(12, 12), &[4, 3]).unwrap();
    let x = t(&random(8, 13), &[2, 4]);
    let gp = gradient_penalty(|x| tanh_critic(x, &w), &x).unwrap();
    let g = backward(&gp).unwrap().wrt(&w);
    assert!(g.data().iter().any(|v| v.abs() > 1e-8));
    assert!(g.data().iter().all(|v| v.is_finite()));
}

#[test]
fn generator_adv_sign_and_mean() {
    let c = t(&[2.5, 2.5], &[2]);
    assert_eq!(val(&generator_adv_loss(&c, AdvSign::Wgan).unwrap()), -2.5);
    assert_eq!(val(&generator_adv_loss(&c, AdvSign::Printed).unwrap()), 2.5);

    let f = t(&[1.0, 4.0], &[2]);
    assert_eq!(val(&generator_adv_loss(&f, AdvSign::Printed).unwrap()), 2.5);
    let zero = t(&[0.0, 0.0], &[2]);
    let fake_term = val(&wasserstein_loss(&zero, &f).unwrap());
    assert_eq!(val(&generator_adv_loss(&f, AdvSign::Wgan).unwrap()), -fake_term);
}

#[test]
fn total_losses_oracles() {
    let zero = total_losses(LossParts::default(), LossWeights::default());
    assert_eq!(zero.l_g_total, 0.0);
    assert_eq!(zero.l_d_total, 0.0);

    let parts = LossParts {
        l_dur: 0.3,
        l_recon: 1.7,
        l_adv: -0.4,
        l_wd: -2.0,
        l_gp: 0.05,
    };
    let w = LossWeights {
        recon: 0.5,
        adv: 2.0,
        gp: 10.0,
    };
    let b = total_losses(parts, w);
    assert!((b.l_g_total - (0.3 + 0.5 * 1.7 - 0.8)).abs() < 1e-12);
    assert!((b.l_d_total - (-2.0 + 0.5)).abs() < 1e-12);

    let no_recon = LossWeights { recon: 0.0, ..w };
    let a = total_losses(parts, no_recon);
    let c = total_losses(LossParts { l_recon: 99.0, ..parts }, no_recon);
    assert_eq!(a.l_g_total, c.l_g_total);
    assert_eq!(LossWeights::default(), LossWeights { recon: 1.0, adv: 1.0, gp: 10.0 });
}

#[test]
fn zero_recon_weight_leaves_gradient_unchanged() {
    let p = Tensor::param(random(6, 14), &[6]).unwrap();
    let target = t(&random(6, 15), &[6]);
    let l_dur = p.sub(&target).unwrap().square().unwrap().mean().unwrap();
    let l_recon = p.sub(&target).unwrap().abs().unwrap().mean().unwrap();
    let l_adv = generator_adv_loss(&p.tanh().unwrap(), AdvSign::Wgan).unwrap();
    let w = LossWeights { recon: 0.0, ..LossWeights::default() };

    let with = generator_objective(&l_dur, Some(&l_recon), Some(&l_adv), w).unwrap();
    let without = l_dur.add(&l_adv).unwrap();
    let g1 = backward_with(&with, GradOptions::retain()).unwrap().wrt(&p);
    let g2 = backward(&without).unwrap().wrt(&p);
    assert_eq!(g1.data(), g2.data());
}

#[test]
fn check_finite_names_term() {
    let mut b = total_losses(LossParts::default(), LossWeights::default());
    assert!(check_finite(&b).is_ok());
    b.l_gp = f64::NAN;
    let err = check_finite(&b).unwrap_err().to_string();
    assert!(err.contains("l_gp"), "{err}");
}

/// Trains a 1-D affine critic between point masses at `a` (real) and `b`
/// (fake) and returns the score gap `D(a) − D(b)`.
fn two_dirac_gap(a: f64, b: f64, steps: usize) -> f64 {
    let mut params = ParamStore::<f64>::new();
    params.insert("w", Tensor::param(vec![0.0], &[1, 1]).unwrap());
    params.insert("b", Tensor::param(vec![0.0], &[1]).unwrap());
    let mut opt = AdamW::new(AdamWParams {
        lr: 1e-2,
        beta1: 0.5,
        beta2: 0.9,
        eps: 1e-8,
        weight_decay: 0.0,
    });
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let n = 8;
    let real = t(&vec![a; n], &[n, 1]);
    let fake = t(&vec![b; n], &[n, 1]);
    for _ in 0..steps {
        let w = params.get("w").unwrap().clone();
        let bias = params.get("b").unwrap().clone();
        let critic = |x: &T| x.matmul(&w)?.add(&bias)?.reshape(&[n]);
        let alpha: Vec<f64> = (0..n).map(|_| rng.gen()).collect();
        let x_tilde = interpolate_pair(&real, &fake, &alpha).unwrap();
        let l_wd = wasserstein_loss(&critic(&real).unwrap(), &critic(&fake).unwrap()).unwrap();
        let gp = gradient_penalty(critic, &x_tilde).unwrap();
        let loss = l_wd.add(&gp.scale(10.0).unwrap()).unwrap();
        let grads = backward(&loss).unwrap();
        opt.step(&mut params, &grads, 1e-2).unwrap();
    }
    let w = params.get("w").unwrap().data()[0];
    w * (a - b)
}

#[test]
fn two_dirac_critic_recovers_w1() {
    for (a, b) in [(0.5, -0.5), (2.0, 1.0), (-1.0, 0.0)] {
        let gap = two_dirac_gap(a, b, 1500);
        let w1 = (a - b).abs();
        assert!((gap - w1).abs() <= 0.1 * w1, "gap {gap} vs W1 {w1}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn penalty_invariant_to_batch_order(seed in 0u64..1000, shift in 1usize..4) {
        let w = t(&random(12, seed), &[4, 3]);
        let x = random(16, seed + 1);
        let mut rows: Vec<&[f64]> = x.chunks(4).collect();
        rows.rotate_left(shift);
        let permuted: Vec<f64> = rows.concat();
        let a = val(&gradient_penalty(|x| tanh_critic(x, &w), &t(&x, &[4, 4])).unwrap());
        let b = val(&gradient_penalty(|x| tanh_critic(x, &w), &t(&permuted, &[4, 4])).unwrap());
        prop_assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn losses_and_gradients_finite(x in prop::collection::vec(-1e3f64..1e3, 8), y in prop::collection::vec(-1e3f64..1e3, 8)) {
        let p = Tensor::param(x.clone(), &[2, 4]).unwrap();
        let q = t(&y, &[2, 4]);
        let terms = [
            duration_loss(&q, &p).unwrap(),
            recon_loss(&q, &p).unwrap(),
            wasserstein_loss(&q.reshape(&[8]).unwrap(), &p.reshape(&[8]).unwrap()).unwrap(),
            generator_adv_loss(&p, AdvSign::Wgan).unwrap(),
        ];
        for l in terms {
            prop_assert!(val(&l).is_finite());
            let g = backward(&l).unwrap().wrt(&p);
            prop_assert!(g.data().iter().all(|v| v.is_finite()));
        }
        let w = t(&[0.5, -0.5, 0.5, -0.5], &[4, 1]);
        let gp = gradient_penalty(|x| x.matmul(&w)?.tanh()?.reshape(&[2]), &p).unwrap();
        prop_assert!(val(&gp).is_finite());
    }
}
