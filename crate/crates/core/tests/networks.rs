use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use svsgan::autodiff::backward;
use svsgan::networks::{
    crop_frames, interpolation_matrix, lbmod_apply, lbmod_project, length_regulate, length_regulator_map,
    Checkpoint, DecoderKind, Discriminator, DiscriminatorConfig, Generator, GeneratorConfig, MusicalScore,
    ParamStore, ScoreVocab,
};
use svsgan::objectives::{duration_loss_batch, generator_adv_loss, recon_loss, AdvSign};
use svsgan::Tensor;

const VOCAB: ScoreVocab = ScoreVocab { phones: 8, pitches: 128, singers: 2 };
const M: usize = 16;

fn gen_config() -> GeneratorConfig {
    GeneratorConfig {
        hidden: 16,
        ffn_dim: 32,
        residual_blocks: 3,
        residual_channels: 8,
        time_embed_dim: 16,
        ..GeneratorConfig::desk(VOCAB, M)
    }
}

fn disc_config() -> DiscriminatorConfig {
    DiscriminatorConfig {
        score_channels: 8,
        singer_channels: 4,
        base_channels: 4,
        blocks: 3,
        time_embed_dim: 8,
        ..DiscriminatorConfig::desk(VOCAB, M)
    }
}

fn score(phones: Vec<usize>, singer: usize) -> MusicalScore {
    let n = phones.len();
    MusicalScore {
        phones,
        note_lengths: vec![6; n],
        pitches: (0..n).map(|i| 60 + i % 5).collect(),
        singer,
    }
}

fn randn(shape: &[usize], seed: u64) -> Tensor {
    svsgan::diffusion::standard_normal(shape, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
}

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
}

#[test]
fn unit_durations_are_the_identity() {
    let tokens = randn(&[1, 5, 3], 1);
    let out = length_regulate(&tokens, &[vec![1; 5]]).unwrap();
    assert_eq!(out.shape(), tokens.shape());
    assert_eq!(out.data(), tokens.data());
}

#[test]
fn expansion_repeats_tokens() {
    let (idx, lf) = length_regulator_map(&[vec![2, 3]], 2).unwrap();
    assert_eq!(lf, 5);
    assert_eq!(idx, vec![0, 0, 1, 1, 1]);
    assert!(length_regulator_map(&[vec![0, 0]], 2).is_err());
}

proptest! {
    #[test]
    fn regulator_frame_count_is_duration_sum(durs in prop::collection::vec(prop::collection::vec(0usize..5, 1..6), 1..4)) {
        prop_assume!(durs.iter().all(|d| d.iter().sum::<usize>() > 0));
        let lp = durs.iter().map(|d| d.len()).max().unwrap();
        let tokens = randn(&[durs.len(), lp, 2], 3);
        let out = length_regulate(&tokens, &durs).unwrap();
        let longest = durs.iter().map(|d| d.iter().sum::<usize>()).max().unwrap();
        prop_assert_eq!(out.shape()[1], longest);
        let g = Generator::<f64>::new(gen_config(), 0).unwrap();
        let scores: Vec<_> = durs.iter().map(|d| score(vec![1; d.len()], 0)).collect();
        let enc = g.encode_score(&scores, Some(&durs)).unwrap();
        let sums: Vec<usize> = durs.iter().map(|d| d.iter().sum()).collect();
        prop_assert_eq!(enc.frame_lengths, sums);
    }

    #[test]
    fn lbmod_rows_share_modulation(seed in 0u64..1000, h in 1usize..5, w in 1usize..5) {
        let c = 2;
        let y = randn(&[1, c, h, w], seed);
        let s = randn(&[1, 2 * c, w], seed + 1);
        let out = lbmod_apply(&y, &s).unwrap();
        for ci in 0..c {
            for wi in 0..w {
                let (a, b) = (s.data()[ci * w + wi], s.data()[(c + ci) * w + wi]);
                for hi in 0..h {
                    let k = ((ci * h) + hi) * w + wi;
                    prop_assert!((out.data()[k] - (a * y.data()[k] + b)).abs() < 1e-12);
                }
            }
        }
    }
}

#[test]
fn phone_identity_changes_ms() {
    let g = Generator::<f64>::new(gen_config(), 4).unwrap();
    let d = vec![vec![3, 3, 3]];
    let a = g.encode_score(&[score(vec![1, 2, 5], 0)], Some(&d)).unwrap();
    let mut s = score(vec![1, 2, 5], 0);
    s.phones.swap(0, 1);
    s.pitches = vec![60, 60, 60];
    let mut s0 = score(vec![1, 2, 5], 0);
    s0.pitches = vec![60, 60, 60];
    let a0 = g.encode_score(&[s0], Some(&d)).unwrap();
    let b = g.encode_score(&[s], Some(&d)).unwrap();
    assert_eq!(a.ms.shape(), &[1, 16, 9]);
    assert!(!close(a0.ms.data(), b.ms.data(), 1e-9));
}

#[test]
fn encode_errors() {
    let g = Generator::<f64>::new(gen_config(), 4).unwrap();
    assert!(g.encode_score(&[score(vec![], 0)], None).is_err());
    assert!(g.encode_score(&[score(vec![1, 2], 0)], Some(&[vec![0, 0]])).is_err());
    assert!(g.encode_score(&[score(vec![1, 9], 0)], Some(&[vec![1, 1]])).is_err());
    assert!(g.encode_score(&[score(vec![1, 2], 0)], Some(&[vec![1]])).is_err());
}

#[test]
fn predicted_durations_are_rounded_and_positive() {
    let g = Generator::<f64>::new(gen_config(), 4).unwrap();
    let enc = g.encode_score(&[score(vec![1, 4, 2, 6], 1)], None).unwrap();
    assert_eq!(enc.durations[0].len(), 4);
    assert!(enc.durations[0].iter().all(|&d| d >= 1));
    assert_eq!(enc.ms.shape()[2], enc.durations[0].iter().sum::<usize>());
}

#[test]
fn decoder_shape_and_time_sensitivity() {
    let g = Generator::<f64>::new(gen_config(), 5).unwrap();
    let enc = g.encode_score(&[score(vec![1, 4, 2], 0), score(vec![3, 5], 1)], Some(&[vec![4, 4, 4], vec![6, 6]])).unwrap();
    let x = randn(&[2, M, 12], 9);
    let mut outs = Vec::new();
    for t in 1..=4 {
        let y = g.diffusion_decoder(&x, &[t], &enc.ms).unwrap();
        assert_eq!(y.shape(), x.shape());
        assert!(y.data().iter().all(|v| v.is_finite()));
        outs.push(y.to_vec());
    }
    for i in 0..4 {
        for j in i + 1..4 {
            assert!(!close(&outs[i], &outs[j], 1e-9), "t={} and t={} agree", i + 1, j + 1);
        }
    }
    let short = randn(&[2, M, 11], 9);
    assert!(g.diffusion_decoder(&short, &[1], &enc.ms).is_err());
}

#[test]
fn zero_initialized_projection_outputs_zero() {
    let g = Generator::<f64>::new(GeneratorConfig { zero_init_output: true, ..gen_config() }, 5).unwrap();
    let enc = g.encode_score(&[score(vec![1, 4], 0)], Some(&[vec![5, 3]])).unwrap();
    let y = g.diffusion_decoder(&randn(&[1, M, 8], 1), &[3], &enc.ms).unwrap();
    assert!(y.data().iter().all(|&v| v == 0.0));
}

#[test]
fn feed_forward_decoder_shape() {
    let g = Generator::<f64>::new(GeneratorConfig { decoder: DecoderKind::FeedForward, ..gen_config() }, 5).unwrap();
    let enc = g.encode_score(&[score(vec![1, 4], 0)], Some(&[vec![5, 3]])).unwrap();
    assert_eq!(g.decode(None, &[1], &enc.ms).unwrap().shape(), &[1, M, 8]);
    assert!(g.diffusion_decoder(&randn(&[1, M, 8], 1), &[1], &enc.ms).is_err());
}

fn lb_fixture(seed: u64) -> (Tensor, Tensor, Tensor, Tensor) {
    (randn(&[1, 3, 5], seed), randn(&[1, 2], seed + 1), randn(&[3, 4], seed + 2), randn(&[2, 4], seed + 3))
}

#[test]
fn lbmod_projection_structure() {
    let (ms, v, wm, wi) = lb_fixture(10);
    let zero_v = Tensor::zeros(&[1, 2]);
    let s1 = lbmod_project(&ms, &zero_v, &wm, None, &wi, None).unwrap();
    let s2 = lbmod_project(&ms, &zero_v, &wm, None, &randn(&[2, 4], 99), None).unwrap();
    assert_eq!(s1.shape(), &[1, 4, 5]);
    assert_eq!(s1.data(), s2.data());

    let s = lbmod_project(&Tensor::zeros(&[1, 3, 5]), &v, &wm, None, &wi, None).unwrap();
    for row in s.data().chunks(5) {
        assert!(row.iter().all(|&x| (x - row[0]).abs() < 1e-15));
    }

    let scaled = lbmod_project(&ms.scale(2.5).unwrap(), &zero_v, &wm, None, &wi, None).unwrap();
    let expect: Vec<f64> = s1.data().iter().map(|x| 2.5 * x).collect();
    assert!(close(scaled.data(), &expect, 1e-12));
    assert!(lbmod_project(&ms, &v, &wm, None, &randn(&[2, 6], 1), None).is_err());
}

#[test]
fn lbmod_neutral_and_zero_input() {
    let y = randn(&[1, 2, 3, 4], 2);
    let mut s = vec![1.0; 8];
    s.extend(vec![0.0; 8]);
    let s = Tensor::new(s, &[1, 4, 4]).unwrap();
    assert_eq!(lbmod_apply(&y, &s).unwrap().data(), y.data());

    let s = randn(&[1, 4, 4], 3);
    let out = lbmod_apply(&Tensor::zeros(&[1, 2, 3, 4]), &s).unwrap();
    for c in 0..2 {
        for h in 0..3 {
            for w in 0..4 {
                assert_eq!(out.data()[(c * 3 + h) * 4 + w], s.data()[(2 + c) * 4 + w]);
            }
        }
    }
    assert!(lbmod_apply(&y, &randn(&[1, 4, 5], 1)).is_err());
}

#[test]
fn interpolation_rows_are_convex() {
    for (l, w) in [(32, 4), (10, 3), (5, 5), (3, 7)] {
        let m = interpolation_matrix(l, w);
        for j in 0..w {
            let col: f64 = (0..l).map(|i| m[i * w + j]).sum();
            assert!((col - 1.0).abs() < 1e-12);
        }
    }
    let m = interpolation_matrix(4, 4);
    for i in 0..4 {
        for j in 0..4 {
            assert_eq!(m[i * 4 + j], if i == j { 1.0 } else { 0.0 });
        }
    }
}

struct CriticFixture {
    d: Discriminator<f64>,
    ms: Tensor,
    x_prev: Tensor,
    x_t: Tensor,
}

fn critic_fixture(cfg: DiscriminatorConfig) -> CriticFixture {
    let d = Discriminator::new(cfg, 11).unwrap();
    let scores = [score(vec![1, 4, 2, 6], 0), score(vec![3, 5, 7], 1)];
    let ms = d.encode_score(&scores, &[vec![4, 4, 4, 4], vec![6, 5, 5]]).unwrap();
    CriticFixture { d, ms, x_prev: randn(&[2, M, 16], 20), x_t: randn(&[2, M, 16], 21) }
}

#[test]
fn critic_scores_are_finite_scalars() {
    let f = critic_fixture(disc_config());
    for t in 1..=4 {
        let s = f.d.forward(&f.x_prev, &f.x_t, &[t], &f.ms, &[0, 1]).unwrap();
        assert_eq!(s.shape(), &[2]);
        assert!(s.data().iter().all(|v| v.is_finite()));
    }
    let z = critic_fixture(DiscriminatorConfig { zero_init_head: true, ..disc_config() });
    let s = z.d.forward(&z.x_prev, &z.x_t, &[2, 3], &z.ms, &[0, 1]).unwrap();
    assert_eq!(s.data(), &[0.0, 0.0]);
}

#[test]
fn critic_sees_singer_identity() {
    let f = critic_fixture(disc_config());
    let a = f.d.forward(&f.x_prev, &f.x_t, &[2], &f.ms, &[0, 1]).unwrap();
    let b = f.d.forward(&f.x_prev, &f.x_t, &[2], &f.ms, &[1, 0]).unwrap();
    assert!((a.data()[0] - b.data()[0]).abs() > 1e-9);
    assert!((a.data()[1] - b.data()[1]).abs() > 1e-9);
}

#[test]
fn critic_head_is_affine() {
    let f = critic_fixture(disc_config());
    let base = f.d.forward(&f.x_prev, &f.x_t, &[1], &f.ms, &[0, 1]).unwrap();
    let mut d2 = f.d.clone();
    for name in ["head.w", "head.b"] {
        let t = d2.params.get(name).unwrap().scale(-3.0).unwrap().detach();
        d2.params.set(name, t).unwrap();
    }
    let scaled = d2.forward(&f.x_prev, &f.x_t, &[1], &f.ms, &[0, 1]).unwrap();
    let expect: Vec<f64> = base.data().iter().map(|v| -3.0 * v).collect();
    assert!(close(scaled.data(), &expect, 1e-10));
    // Large positive and negative scores are both reachable: no squashing.
    let big = d2.params.get("head.b").unwrap().shift(1e3).unwrap().detach();
    d2.params.set("head.b", big).unwrap();
    assert!(d2.forward(&f.x_prev, &f.x_t, &[1], &f.ms, &[0, 1]).unwrap().data()[0] > 100.0);
}

#[test]
fn critic_rejects_small_inputs() {
    let f = critic_fixture(disc_config());
    let ms = crop_frames(&f.ms, &[0, 0], 4).unwrap();
    let x = randn(&[2, M, 4], 1);
    assert!(f.d.forward(&x, &x, &[1], &ms, &[0, 1]).is_err());
}

#[test]
fn every_generator_group_gets_gradient() {
    let g = Generator::<f64>::new(gen_config(), 30).unwrap();
    let d = Discriminator::new(disc_config(), 31).unwrap().frozen();
    let scores = [score(vec![1, 4, 2, 6], 0), score(vec![3, 5, 7, 0], 1)];
    let durs = [vec![4, 4, 4, 4], vec![3, 5, 4, 4]];
    let enc = g.encode_score(&scores, Some(&durs)).unwrap();
    let x0 = randn(&[2, M, 16], 40);
    let x_t = randn(&[2, M, 16], 41);
    let x0_hat = g.diffusion_decoder(&x_t, &[2, 3], &enc.ms).unwrap();
    let ms_d = d.encode_score(&scores, &durs).unwrap();
    let adv = generator_adv_loss(&d.forward(&x0_hat, &x_t, &[2, 3], &ms_d, &[0, 1]).unwrap(), AdvSign::Wgan).unwrap();
    let loss = duration_loss_batch(&durs, &enc.durations_pred)
        .unwrap()
        .add(&recon_loss(&x0, &x0_hat).unwrap())
        .unwrap()
        .add(&adv)
        .unwrap();
    let grads = backward(&loss).unwrap();
    for (name, p) in g.params.iter() {
        let gsum: f64 = grads.wrt(p).data().iter().map(|v| v.abs()).sum();
        assert!(gsum > 0.0, "no gradient reaches {name}");
    }
    for (_, p) in d.params.iter() {
        assert!(grads.get(p).is_none());
    }
}

#[test]
fn checkpoint_round_trip() {
    let g = Generator::<f64>::new(gen_config(), 1).unwrap();
    let d = Discriminator::<f64>::new(disc_config(), 2).unwrap();
    let mut ck = Checkpoint::new("preset = diff-wgan\n".into());
    ck.add_params("generator", &g.params);
    ck.add_params("discriminator", &d.params);
    let bytes = ck.encode();
    assert_eq!(&bytes[..8], b"SVSCKPT\0");
    let back = Checkpoint::decode(&bytes).unwrap();
    assert_eq!(back, {
        let mut sorted = ck.clone();
        sorted.tensors.sort_by(|a, b| a.0.cmp(&b.0));
        sorted
    });
    assert_eq!(back.encode(), bytes);
    let g2 = Generator::<f64>::from_params(gen_config(), back.params("generator").unwrap()).unwrap();
    for (name, t) in g.params.iter() {
        assert_eq!(g2.params.get(name).unwrap().data(), t.data());
    }
    let wrong = GeneratorConfig { hidden: 32, ..gen_config() };
    assert!(Generator::<f64>::from_params(wrong, back.params("generator").unwrap()).is_err());
    assert!(Generator::<f64>::from_params(gen_config(), ParamStore::new()).is_err());

    let mut corrupt = bytes.clone();
    corrupt[20] ^= 1;
    assert!(Checkpoint::decode(&corrupt).is_err());
    assert!(Checkpoint::decode(&bytes[..bytes.len() - 3]).is_err());
}

#[test]
fn single_precision_network_runs() {
    let cfg = gen_config();
    let g = Generator::<f32>::new(cfg, 3).unwrap();
    let enc = g.encode_score(&[score(vec![1, 4], 0)], Some(&[vec![4, 4]])).unwrap();
    let x = svsgan::autodiff::Tensor::<f32>::new(
        (0..M * 8).map(|_| ChaCha8Rng::seed_from_u64(0).gen_range(-1.0..1.0)).collect(),
        &[1, M, 8],
    )
    .unwrap();
    let y = g.diffusion_decoder(&x, &[2], &enc.ms).unwrap();
    assert!(y.data().iter().all(|v| v.is_finite()));
}
