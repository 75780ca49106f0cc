use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use svsgan::metrics::*;
use svsgan::signal::{idct_ii, write_mel, write_wav, F0Track, MelConfig, MelSpectrogram, LOG_FLOOR};

fn frames(n: usize, dim: usize, seed: u64, scale: f64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| (0..dim).map(|_| rng.gen_range(-scale..scale)).collect()).collect()
}

/// Builds a spectrogram from frame vectors (each of length `M`).
fn mel_from_frames(fr: &[Vec<f64>]) -> MelSpectrogram<f64> {
    let m = fr[0].len();
    let mut data = Vec::with_capacity(m * fr.len());
    for b in 0..m {
        data.extend(fr.iter().map(|f| f[b]));
    }
    MelSpectrogram::new(MelConfig::with_mels(m), fr.len(), data).unwrap()
}

fn random_mel(m: usize, l: usize, seed: u64) -> MelSpectrogram<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fr: Vec<Vec<f64>> = (0..l)
        .map(|i| (0..m).map(|b| (0.3 * i as f64 + 0.2 * b as f64).sin() * 3.0 + rng.gen_range(-0.5..0.5)).collect())
        .collect();
    mel_from_frames(&fr)
}

/// Minimum path cost over every monotone path, by exhaustive recursion.
fn brute_force(cost: &dyn Fn(usize, usize) -> f64, i: usize, j: usize, n: usize, m: usize) -> f64 {
    let here = cost(i, j);
    if (i, j) == (n - 1, m - 1) {
        return here;
    }
    let mut best = f64::INFINITY;
    if i + 1 < n {
        best = best.min(brute_force(cost, i + 1, j, n, m));
    }
    if j + 1 < m {
        best = best.min(brute_force(cost, i, j + 1, n, m));
    }
    if i + 1 < n && j + 1 < m {
        best = best.min(brute_force(cost, i + 1, j + 1, n, m));
    }
    here + best
}

fn check_path(al: &Alignment, n: usize, m: usize) {
    assert_eq!(al.path[0], (0, 0));
    assert_eq!(*al.path.last().unwrap(), (n - 1, m - 1));
    for w in al.path.windows(2) {
        let (di, dj) = (w[1].0 - w[0].0, w[1].1 - w[0].1);
        assert!(di <= 1 && dj <= 1 && di + dj >= 1, "bad step {w:?}");
    }
}

#[test]
fn dtw_identical_is_diagonal() {
    let a = frames(7, 3, 1, 1.0);
    let al = dtw_align(&a, &a).unwrap();
    assert_eq!(al.cost, 0.0);
    assert_eq!(al.path, (0..7).map(|i| (i, i)).collect::<Vec<_>>());
}

#[test]
fn dtw_absorbs_repeated_frame() {
    let a = frames(6, 3, 2, 1.0);
    let mut b = a.clone();
    b.insert(3, a[3].clone());
    let al = dtw_align(&a, &b).unwrap();
    assert_eq!(al.cost, 0.0);
    check_path(&al, 6, 7);
    assert!(al.path.contains(&(3, 3)) && al.path.contains(&(3, 4)));
}

#[test]
fn dtw_rejects_empty_and_ragged() {
    let a = frames(3, 2, 3, 1.0);
    assert!(dtw_align(&a, &[]).is_err());
    assert!(dtw_align(&a, &frames(3, 4, 4, 1.0)).is_err());
}

#[test]
fn mcd_fixed_points() {
    let x = random_mel(32, 40, 5);
    assert_eq!(mcd(&x, &x).unwrap(), 0.0);
    let c = mcd_constant();
    assert!((c - 10.0 / 10f64.ln() * 2f64.sqrt()).abs() < 1e-15);
}

#[test]
fn mcd_constant_cepstral_offset() {
    // Frames far apart relative to the offset keep the path diagonal.
    let a = frames(12, 13, 6, 5.0);
    let dir = frames(1, 13, 7, 1.0).remove(0);
    let n = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
    let r = 0.05;
    let b: Vec<Vec<f64>> = a
        .iter()
        .map(|f| f.iter().zip(&dir).map(|(x, d)| x + r * d / n).collect())
        .collect();
    let got = mcd_cepstra(&a, &b).unwrap();
    assert!((got - mcd_constant() * r).abs() < 1e-12, "{got}");
}

#[test]
fn mcd_constant_offset_through_mels() {
    // Adding the inverse DCT of an offset (c₀ = 0) to every frame shifts
    // every kept cepstral coefficient by that offset.
    let m = 32;
    let a: Vec<Vec<f64>> = frames(10, m, 8, 6.0);
    let mut delta = vec![0.0; m];
    delta[1] = 0.03;
    delta[4] = -0.04;
    let shift = idct_ii(&delta);
    let b: Vec<Vec<f64>> = a.iter().map(|f| f.iter().zip(&shift).map(|(x, s)| x + s).collect()).collect();
    let got = mcd(&mel_from_frames(&a), &mel_from_frames(&b)).unwrap();
    assert!((got - mcd_constant() * 0.05).abs() < 1e-9, "{got}");
}

#[test]
fn mcd_ignores_shared_leading_silence() {
    let a = random_mel(32, 30, 9);
    let b = random_mel(32, 28, 10);
    let floor = vec![LOG_FLOOR.ln(); 32];
    let base = mcd(&a, &b).unwrap();
    let padded = mcd(&a.prepend_frame(&floor, 1).unwrap(), &b.prepend_frame(&floor, 1).unwrap()).unwrap();
    assert!((base - padded).abs() < 1e-12, "{base} vs {padded}");
}

#[test]
fn ms_ssim_fixed_points() {
    let a = random_mel(64, 96, 11);
    let s = ms_ssim(&a, &a).unwrap();
    assert!((s.value - 1.0).abs() < 1e-12);
    assert_eq!(s.scales, 3);
    assert!(s.reduced());

    let neg = MelSpectrogram::new(*a.config(), a.frames(), a.data().iter().map(|v| -v).collect()).unwrap();
    assert!(ms_ssim(&a, &neg).unwrap().value < 0.5);

    let b = random_mel(64, 96, 12);
    assert_eq!(ms_ssim(&a, &b).unwrap(), ms_ssim(&b, &a).unwrap());
}

#[test]
fn ms_ssim_scale_count() {
    let big = random_mel(176, 180, 13);
    assert_eq!(ms_ssim(&big, &big).unwrap().scales, 5);
    let toy = random_mel(32, 100, 14);
    assert_eq!(ms_ssim(&toy, &toy).unwrap().scales, 2);
    let tiny = random_mel(8, 100, 15);
    assert!(ms_ssim(&tiny, &tiny).is_err());
    assert!(ms_ssim(&toy, &random_mel(32, 90, 16)).is_err());
}

fn track(hz: &[f64]) -> F0Track {
    F0Track { hz: hz.to_vec(), hop: 256 }
}

fn diag(n: usize) -> Vec<(usize, usize)> {
    (0..n).map(|i| (i, i)).collect()
}

#[test]
fn f0_fixed_points() {
    let hz = [0.0, 220.0, 230.0, 250.0, 0.0, 300.0, 180.0];
    let r = track(&hz);
    let same = f0_metrics(&r, &r, &diag(7)).unwrap();
    assert_eq!(same.rmse_semitones, 0.0);
    assert!((same.corr.unwrap() - 1.0).abs() < 1e-12);

    let up = track(&hz.map(|f| 2.0 * f));
    let oct = f0_metrics(&r, &up, &diag(7)).unwrap();
    assert!((oct.rmse_semitones - 12.0).abs() < 1e-6);
    assert_eq!(semitones(55.0), 0.0);
    assert_eq!(semitones(110.0), 12.0);
}

#[test]
fn f0_needs_two_voiced_pairs() {
    let a = track(&[0.0, 200.0, 210.0, 0.0]);
    let b = track(&[100.0, 0.0, 220.0, 0.0]);
    assert!(f0_metrics(&a, &b, &diag(4)).is_none());
    let short = track(&[200.0]);
    assert!(f0_metrics(&short, &short, &diag(3)).is_none());
}

#[test]
fn report_mean_and_csv() {
    let row = |f: &str, s: f64, m: f64, r: Option<f64>| EvalRow {
        file: f.into(),
        ms_ssim: s,
        ms_ssim_scales: 2,
        mcd_db: m,
        f0_rmse: r,
        f0_corr: None,
    };
    let rep = EvalReport {
        rows: vec![row("a", 0.5, 4.0, Some(1.0)), row("b", 0.7, 6.0, None), row("c", 0.9, 2.0, Some(3.0))],
    };
    let mean = rep.mean();
    assert!((mean.ms_ssim - 0.7).abs() < 1e-12);
    assert!((mean.mcd_db - 4.0).abs() < 1e-12);
    assert_eq!(mean.f0_rmse, Some(2.0));
    assert_eq!(mean.f0_corr, None);
    let csv = rep.to_csv();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], REPORT_HEADER);
    assert_eq!(lines.len(), 5);
    assert!(lines[2].starts_with("b,0.700000,6.000000,,,2"), "{}", lines[2]);
    assert!(lines[4].starts_with("mean,"));
}

#[test]
fn evaluate_dirs_pairs_by_name() {
    let root = tempfile::tempdir().unwrap();
    let (r, s) = (root.path().join("ref"), root.path().join("syn"));
    for d in [&r, &s] {
        std::fs::create_dir_all(d.join("singer_0")).unwrap();
    }
    let cfg = MelConfig::with_mels(32);
    for (k, name) in ["song_001", "song_000"].iter().enumerate() {
        let a = random_mel(32, 40, 20 + k as u64);
        let b = random_mel(32, 44, 30 + k as u64);
        write_mel(&r.join(format!("singer_0/{name}.mel")), &a).unwrap();
        write_mel(&s.join(format!("singer_0/{name}.mel")), &b).unwrap();
        let tone: Vec<f64> = (0..40 * 256)
            .map(|i| 0.3 * (2.0 * std::f64::consts::PI * 220.0 * i as f64 / 22050.0).sin())
            .collect();
        write_wav(&r.join(format!("singer_0/{name}.wav")), &tone, cfg.sample_rate).unwrap();
        write_wav(&s.join(format!("singer_0/{name}.wav")), &tone, cfg.sample_rate).unwrap();
    }
    let rep = evaluate_dirs(&r, &s).unwrap();
    assert_eq!(rep.rows.len(), 2);
    assert_eq!(rep.rows[0].file, "singer_0/song_000");
    for row in &rep.rows {
        assert!(row.mcd_db > 0.0 && row.ms_ssim <= 1.0);
        assert!(row.f0_rmse.unwrap() < 0.1, "{:?}", row.f0_rmse);
    }
    assert_eq!(rep, evaluate_dirs(&r, &s).unwrap());

    std::fs::remove_file(r.join("singer_0/song_000.mel")).unwrap();
    assert!(evaluate_dirs(&r, &s).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn dtw_matches_exhaustive_paths(n in 1usize..=6, m in 1usize..=6, seed in 0u64..10_000) {
        let a = frames(n, 2, seed, 1.0);
        let b = frames(m, 2, seed + 77, 1.0);
        let al = dtw_align(&a, &b).unwrap();
        let cost = |i: usize, j: usize| euclidean(&a[i], &b[j]);
        let want = brute_force(&cost, 0, 0, n, m);
        prop_assert!((al.cost - want).abs() < 1e-12);
        check_path(&al, n, m);
        let along: f64 = al.path.iter().map(|&(i, j)| cost(i, j)).sum();
        prop_assert!((along - al.cost).abs() < 1e-12);
    }

    #[test]
    fn mcd_nonnegative_and_ssim_bounded(seed in 0u64..10_000, la in 12usize..30, lb in 12usize..30) {
        let a = random_mel(16, la, seed);
        let b = random_mel(16, lb, seed + 1);
        prop_assert!(mcd(&a, &b).unwrap() >= 0.0);
        let c = random_mel(16, la, seed + 2);
        let s = ms_ssim(&a, &c).unwrap().value;
        prop_assert!(s <= 1.0 + 1e-12 && s >= -1.0);
    }

    #[test]
    fn pearson_affine_invariant(seed in 0u64..10_000, scale in 0.1f64..10.0, offset in -20f64..20.0) {
        let x: Vec<f64> = frames(1, 12, seed, 5.0).remove(0);
        let y: Vec<f64> = frames(1, 12, seed + 3, 5.0).remove(0);
        let z: Vec<f64> = y.iter().map(|v| scale * v + offset).collect();
        let (p, q) = (pearson(&x, &y).unwrap(), pearson(&x, &z).unwrap());
        prop_assert!((p - q).abs() < 1e-9);
    }
}
