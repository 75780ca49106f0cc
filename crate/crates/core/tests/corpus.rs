use std::fs;
use std::path::Path;

use svsgan::corpus::{generate_corpus, load_batch, midi_to_hz, render_utterance, Dataset, Split, ToyCorpusSpec, Utterance};
use svsgan::objectives::{recon_loss, recon_loss_masked};
use svsgan::signal::{extract_f0, F0Config, MelSpectrogram};
use svsgan::Tensor;

fn small_spec() -> ToyCorpusSpec {
    ToyCorpusSpec {
        songs_per_singer: 3,
        min_seconds: 1.0,
        max_seconds: 1.5,
        ..ToyCorpusSpec::default()
    }
}

fn files(root: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in fs::read_dir(&dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(root).unwrap().display().to_string();
                out.push((rel, fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn same_seed_gives_identical_bytes() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    generate_corpus(&small_spec(), a.path()).unwrap();
    generate_corpus(&small_spec(), b.path()).unwrap();
    let (fa, fb) = (files(a.path()), files(b.path()));
    assert_eq!(fa.len(), 1 + 2 * 3 * 3);
    assert_eq!(fa, fb);

    let c = tempfile::tempdir().unwrap();
    generate_corpus(&ToyCorpusSpec { seed: 8, ..small_spec() }, c.path()).unwrap();
    assert_ne!(files(c.path()), fa);
}

#[test]
fn held_out_split_has_two_per_singer() {
    let dir = tempfile::tempdir().unwrap();
    let spec = small_spec();
    generate_corpus(&spec, dir.path()).unwrap();
    let ds = Dataset::open(dir.path()).unwrap();
    assert_eq!(ds.spec(), &spec);
    for s in 0..spec.singers {
        let held = ds.indices(Split::HeldOut).into_iter().filter(|&i| ds.entries()[i].singer == s).count();
        let train = ds.indices(Split::Train).into_iter().filter(|&i| ds.entries()[i].singer == s).count();
        assert_eq!(held, 2);
        assert_eq!(train, 1);
    }
    let train: Vec<_> = ds.indices(Split::Train).iter().map(|&i| ds.entries()[i].stem.clone()).collect();
    assert!(ds.indices(Split::HeldOut).iter().all(|&i| !train.contains(&ds.entries()[i].stem)));
}

#[test]
fn stored_utterances_match_the_renderer() {
    let dir = tempfile::tempdir().unwrap();
    let spec = small_spec();
    generate_corpus(&spec, dir.path()).unwrap();
    let ds = Dataset::open(dir.path()).unwrap();
    for i in 0..ds.entries().len() {
        let u = ds.load(i).unwrap();
        let e = &ds.entries()[i];
        let song: usize = e.stem.rsplit('_').next().unwrap().parse().unwrap();
        let fresh = render_utterance(&spec, e.singer, song).unwrap();
        assert_eq!(u.score, fresh.score);
        assert_eq!(u.durations, fresh.durations);
        assert_eq!(u.durations.iter().sum::<usize>(), u.frames());
        for (a, b) in u.mel.data().iter().zip(fresh.mel.data()) {
            assert!((a - b).abs() <= 1e-6 * b.abs().max(1.0));
        }
        let wav = ds.load_wav(i).unwrap();
        assert_eq!(wav, fresh.wav.unwrap());
        assert_eq!(wav.len(), u.frames() * spec.mel.hop - spec.mel.hop / 2);
    }
}

#[test]
fn vowel_pitch_matches_the_score() {
    let spec = ToyCorpusSpec::default();
    let f0cfg = F0Config {
        sample_rate: spec.mel.sample_rate,
        hop: spec.mel.hop,
        ..F0Config::default()
    };
    let mut checked = 0;
    for singer in 0..spec.singers {
        for song in 0..2 {
            let u = render_utterance(&spec, singer, song).unwrap();
            let track = extract_f0(u.wav.as_deref().unwrap(), &f0cfg).unwrap();
            assert_eq!(track.len(), u.frames());
            let mut start = 0;
            for (j, &d) in u.durations.iter().enumerate() {
                let span = start..start + d;
                start += d;
                if !spec.is_vowel(u.score.phones[j]) || d < 8 {
                    continue;
                }
                let mut f: Vec<f64> = track.hz[span.start + 3..span.end - 3].to_vec();
                assert!(f.iter().all(|&v| v > 0.0), "unvoiced frame inside a vowel");
                f.sort_by(|a, b| a.partial_cmp(b).unwrap());
                let median = f[f.len() / 2];
                let want = midi_to_hz(u.score.pitches[j] as f64);
                let semis = 12.0 * (median / want).log2();
                assert!(semis.abs() < 0.5, "vowel {j}: {median} Hz vs {want} Hz");
                checked += 1;
            }
        }
    }
    assert!(checked > 20);
}

#[test]
fn spec_validation() {
    let mut s = ToyCorpusSpec { min_seconds: 3.0, max_seconds: 2.0, ..ToyCorpusSpec::default() };
    assert!(s.validate().is_err());
    s = ToyCorpusSpec { max_seconds: 0.05, min_seconds: 0.01, ..ToyCorpusSpec::default() };
    assert!(s.validate().is_err());
    s = ToyCorpusSpec { held_out_per_singer: 1, ..ToyCorpusSpec::default() };
    assert!(s.validate().is_err());
    s = ToyCorpusSpec { vowels: 0, ..ToyCorpusSpec::default() };
    assert!(s.validate().is_err());
    assert!(ToyCorpusSpec::default().validate().is_ok());
    assert!(Dataset::open(Path::new("/nonexistent/corpus")).is_err());
}

fn utterance_of_len(base: &Utterance, len: usize) -> Utterance {
    let mel = base.mel.crop(0, len).unwrap();
    Utterance {
        name: format!("crop{len}"),
        score: base.score.clone(),
        durations: vec![len],
        mel,
        wav: None,
    }
}

#[test]
fn batches_pad_and_mask() {
    let base = render_utterance(&ToyCorpusSpec::default(), 0, 0).unwrap();
    let utts = vec![utterance_of_len(&base, 10), utterance_of_len(&base, 7)];

    let one = load_batch::<f64>(&utts, &[1], -11.5).unwrap();
    assert_eq!(one.frames(), 7);
    assert!(one.mask[0].iter().all(|&m| m));

    let two = load_batch::<f64>(&utts, &[0, 1], -11.5).unwrap();
    assert_eq!(two.frames(), 10);
    assert_eq!(two.mask[1].iter().filter(|&&m| !m).count(), 3);
    assert!(two.mask[0].iter().all(|&m| m));
    assert_eq!(two.lengths, vec![10, 7]);
    let m = two.bins();
    assert_eq!(two.mel.data()[(m + 3) * 10 + 8], -11.5);
    assert!(load_batch::<f64>(&utts, &[], 0.0).is_err());
    assert!(load_batch::<f64>(&utts, &[5], 0.0).is_err());
}

#[test]
fn padded_loss_equals_mean_of_item_losses() {
    let base = render_utterance(&ToyCorpusSpec::default(), 1, 0).unwrap();
    let utts = vec![utterance_of_len(&base, 10), utterance_of_len(&base, 7), utterance_of_len(&base, 4)];
    let batch = load_batch::<f64>(&utts, &[0, 1, 2], 0.0).unwrap();
    // A prediction that is wrong everywhere, including on padding.
    let pred_data: Vec<f64> = batch.mel.data().iter().enumerate().map(|(i, v)| v + ((i * 37) % 11) as f64 * 0.1 + 0.05).collect();
    let pred = Tensor::new(pred_data.clone(), batch.mel.shape()).unwrap();
    let padded = recon_loss_masked(&batch.mel, &pred, &batch.frame_mask).unwrap().item().unwrap();

    let (m, l) = (batch.bins(), batch.frames());
    let mut per_item = Vec::new();
    for (b, u) in utts.iter().enumerate() {
        let n = u.frames();
        let mut p = Vec::new();
        for bin in 0..m {
            p.extend_from_slice(&pred_data[(b * m + bin) * l..][..n]);
        }
        let pred_u = MelSpectrogram::new(*u.mel.config(), n, p).unwrap().to_tensor();
        per_item.push(recon_loss(&u.mel.to_tensor(), &pred_u).unwrap().item().unwrap());
    }
    let mean = per_item.iter().sum::<f64>() / per_item.len() as f64;
    assert!((padded - mean).abs() < 1e-12, "{padded} vs {mean}");
}
