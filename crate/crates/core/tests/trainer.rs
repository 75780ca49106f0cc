use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use svsgan::corpus::{render_utterance, ToyCorpusSpec, Utterance};
use svsgan::networks::Checkpoint;
use svsgan::trainer::*;

fn toy(n: usize) -> (ToyCorpusSpec, Vec<Utterance>) {
    let spec = ToyCorpusSpec::default();
    let data = (0..n).map(|k| render_utterance(&spec, (k % 2) as usize, k / 2).unwrap()).collect();
    (spec, data)
}

fn trainer(cfg: TrainConfig, n: usize) -> Trainer<f64> {
    let (spec, data) = toy(n);
    Trainer::new(cfg, data, spec.mel, spec.singers, spec.phone_vocab()).unwrap()
}

fn no_decay() -> AdamWParams {
    AdamWParams {
        lr: 1e-3,
        weight_decay: 0.0,
        ..AdamWParams::default()
    }
}

#[test]
fn adamw_zero_gradient_no_decay_is_identity() {
    let mut p = vec![0.3, -1.2, 4.0];
    let before = p.clone();
    let mut st = Moments::default();
    for step in 1..=5 {
        adamw_step(&mut p, &[0.0; 3], &mut st, step, 1e-3, &no_decay());
    }
    assert_eq!(p, before);
}

#[test]
fn adamw_decay_shrinks_geometrically() {
    let hp = AdamWParams {
        weight_decay: 0.1,
        ..no_decay()
    };
    let mut p = vec![2.0, -3.0];
    let mut st = Moments::default();
    for step in 1..=4 {
        adamw_step(&mut p, &[0.0; 2], &mut st, step, 0.01, &hp);
    }
    let f = (1.0f64 - 0.01 * 0.1).powi(4);
    assert!((p[0] - 2.0 * f).abs() < 1e-14);
    assert!((p[1] + 3.0 * f).abs() < 1e-14);
}

#[test]
fn adamw_first_step_moves_by_lr() {
    for g in [0.5, -7.0, 1e-3] {
        let mut p = vec![1.0];
        let mut st = Moments::default();
        adamw_step(&mut p, &[g], &mut st, 1, 1e-3, &no_decay());
        let moved = p[0] - 1.0;
        assert!((moved + 1e-3 * g.signum()).abs() < 1e-8, "g {g} moved {moved}");
    }
}

#[test]
fn replace_probability_values() {
    assert_eq!(replace_probability(1, 4).unwrap(), 1.0);
    assert_eq!(replace_probability(4, 4).unwrap(), 1.0 / 16.0);
    assert_eq!(replace_probability(3, 4).unwrap(), 0.25);
    assert!(replace_probability(0, 4).is_err());
    assert!(replace_probability(5, 4).is_err());
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    assert!((0..100).all(|_| finetune_mix_sampler(1, 4, &mut rng).unwrap()));
}

#[test]
fn mixing_sampler_frequencies() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = 10_000;
    for t in 1..=4 {
        let p = replace_probability(t, 4).unwrap();
        let hits = (0..n).filter(|_| finetune_mix_sampler(t, 4, &mut rng).unwrap()).count();
        let freq = hits as f64 / n as f64;
        let sigma = (p * (1.0 - p) / n as f64).sqrt();
        assert!((freq - p).abs() <= 3.0 * sigma + 1e-12, "t {t}: {freq} vs {p}");
    }
}

#[test]
fn config_parse_and_round_trip() {
    let c = TrainConfig::parse("# run\npreset = diff-wgan\nsteps = 10\nseed = 9\n").unwrap();
    assert_eq!(c.preset, Preset::DiffWgan);
    assert_eq!((c.steps, c.seed), (10, 9));
    assert_eq!(c.weights.recon, 0.0);
    assert_eq!(c.weights.gp, 10.0);
    assert_eq!(c.d_updates_per_g, 2);
    assert_eq!(TrainConfig::parse(&c.render()).unwrap(), c);

    let l1 = TrainConfig::parse("preset = diff-l1").unwrap();
    assert_eq!(l1.lr_decay, 0.999);
    assert_eq!((l1.weights.recon, l1.weights.adv), (1.0, 0.0));
    let mixed = TrainConfig::parse("preset = diff-mixed").unwrap();
    assert_eq!((mixed.weights.recon, mixed.weights.adv), (1.0, 1.0));
}

#[test]
fn config_rejects_bad_input() {
    for text in [
        "preset = diff-l1\nlearning_rate = 1",
        "steps = 3",
        "preset = gan",
        "preset = diff-wgan\nd_updates_per_g = 0",
        "preset = fft\nsteps = 1\nsteps = 2",
        "preset = fft\nmel_min = -3",
        "preset = fft\nadv_sign = up",
    ] {
        assert!(TrainConfig::parse(text).is_err(), "accepted {text:?}");
    }
}

#[test]
fn critic_takes_two_steps_per_generator_step() {
    let mut tr = trainer(TrainConfig::preset(Preset::DiffWgan), 4);
    let batch = tr.next_batch().unwrap();
    tr.train_step(&batch).unwrap();
    assert_eq!(tr.opt_d.as_ref().unwrap().steps(), 2);
    assert_eq!(tr.opt_g.steps(), 1);
    assert_eq!(tr.step_count(), 1);
}

#[test]
fn wgan_preset_excludes_recon_from_total() {
    let mut tr = trainer(TrainConfig::preset(Preset::DiffWgan), 4);
    let batch = tr.next_batch().unwrap();
    let b = tr.train_step(&batch).unwrap();
    assert!(b.l_recon > 0.0);
    assert_eq!(b.lambda_recon, 0.0);
    assert_eq!(b.l_g_total, b.l_dur + b.l_adv);
    assert_eq!(b.l_d_total, b.l_wd + 10.0 * b.l_gp);
}

#[test]
fn gan_step_records_one_mix_event_per_item() {
    let mut cfg = TrainConfig::preset(Preset::DiffMixed);
    cfg.batch_size = 3;
    let mut tr = trainer(cfg, 4);
    let batch = tr.next_batch().unwrap();
    tr.train_step(&batch).unwrap();
    assert_eq!(tr.mix_events.len(), 3);
    assert_eq!(tr.log[0].ts, tr.mix_events.iter().map(|e| e.t).collect::<Vec<_>>());
}

#[test]
fn fixed_seed_is_bit_identical() {
    let run = || {
        let mut tr = trainer(TrainConfig::preset(Preset::DiffMixed), 4);
        let mut out = Vec::new();
        for _ in 0..2 {
            let batch = tr.next_batch().unwrap();
            out.push(tr.train_step(&batch).unwrap());
        }
        (out, tr.checkpoint().encode())
    };
    let (a, ca) = run();
    let (b, cb) = run();
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(format!("{x:?}"), format!("{y:?}"));
    }
    assert_eq!(ca, cb);
}

#[test]
fn fft_preset_has_no_critic() {
    let mut tr = trainer(TrainConfig::preset(Preset::Fft), 4);
    assert!(tr.discriminator.is_none());
    assert!(tr.opt_d.is_none());
    let batch = tr.next_batch().unwrap();
    let b = tr.train_step(&batch).unwrap();
    assert_eq!((b.l_wd, b.l_gp, b.l_adv), (0.0, 0.0, 0.0));
    assert!(tr.mix_events.is_empty());
    assert!(!tr.checkpoint().has_prefix("discriminator"));
    assert!(tr.train_step_gan(&batch).is_err());
}

#[test]
fn learning_rate_decays_per_epoch() {
    let mut tr = trainer(TrainConfig::preset(Preset::DiffL1), 4);
    assert_eq!(tr.steps_per_epoch(), 1);
    for _ in 0..11 {
        let batch = tr.next_batch().unwrap();
        tr.train_step(&batch).unwrap();
    }
    assert_eq!(tr.log[0].lr_g, 1e-4);
    assert!((tr.log[10].lr_g - 1e-4 * 0.999f64.powi(10)).abs() < 1e-18);
}

#[test]
fn epochs_round_up() {
    let mut cfg = TrainConfig::preset(Preset::Fft);
    cfg.batch_size = 3;
    let tr = trainer(cfg, 4);
    assert_eq!(tr.steps_per_epoch(), 2);
}

#[test]
fn checkpoint_round_trips_into_synthesizer() {
    let cfg = TrainConfig::preset(Preset::DiffL1);
    let mut tr = trainer(cfg.clone(), 4);
    let batch = tr.next_batch().unwrap();
    tr.train_step(&batch).unwrap();
    let bytes = tr.checkpoint().encode();
    let ck = Checkpoint::decode(&bytes).unwrap();
    let syn = Synthesizer::<f64>::from_checkpoint(&ck).unwrap();
    syn.check_config(&cfg).unwrap();

    let mut other = cfg.clone();
    other.seed = 2;
    let err = syn.check_config(&other).unwrap_err().to_string();
    assert!(err.contains("checkpoint/config mismatch"), "{err}");

    let (_, data) = toy(1);
    let u = &data[0];
    let mel = syn.synthesize(&u.score, Some(&u.durations), 5).unwrap();
    assert_eq!(mel.frames(), u.durations.iter().sum::<usize>());
    assert!(mel.data().iter().all(|v| v.is_finite()));
    let again = syn.synthesize(&u.score, Some(&u.durations), 5).unwrap();
    assert_eq!(mel.data(), again.data());
    let predicted = syn.synthesize(&u.score, None, 5).unwrap();
    assert!(predicted.frames() >= u.score.len());
}

#[test]
fn run_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = TrainConfig::preset(Preset::DiffMixed);
    cfg.steps = 3;
    cfg.checkpoint_every = 2;
    cfg.out_dir = dir.path().to_path_buf();
    let mut tr = trainer(cfg, 4);
    let mut seen = Vec::new();
    tr.run(|s, _| seen.push(s)).unwrap();
    assert_eq!(seen, vec![1, 2, 3]);
    for f in ["final.ckpt", "step_000002.ckpt", "train_log.csv", "finetune_mix.csv"] {
        assert!(dir.path().join(f).exists(), "{f} missing");
    }
    let log = std::fs::read_to_string(dir.path().join("train_log.csv")).unwrap();
    assert_eq!(log.lines().next().unwrap(), LOG_HEADER);
    assert_eq!(log.lines().count(), 4);
    let ck = Checkpoint::read(&dir.path().join("final.ckpt")).unwrap();
    assert!(ck.has_prefix("discriminator"));
}
