use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::{f0_metrics, mcd_with_alignment, ms_ssim};
use crate::error::{Error, Result};
use crate::signal::{extract_f0, read_mel, read_wav, F0Config, MelConfig, MelSpectrogram};

pub const REPORT_HEADER: &str = "file,ms_ssim,mcd,f0_rmse,f0_corr,ms_ssim_scales";

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub file: String,
    pub ms_ssim: f64,
    pub ms_ssim_scales: usize,
    pub mcd_db: f64,
    pub f0_rmse: Option<f64>,
    pub f0_corr: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
}

fn mean_of(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = values.flatten().collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

impl EvalReport {
    /// Arithmetic mean of every column; optional columns average the
    /// files where the value is present.
    pub fn mean(&self) -> EvalRow {
        let rows = &self.rows;
        EvalRow {
            file: "mean".into(),
            ms_ssim: mean_of(rows.iter().map(|r| Some(r.ms_ssim))).unwrap_or(f64::NAN),
            ms_ssim_scales: rows.iter().map(|r| r.ms_ssim_scales).min().unwrap_or(0),
            mcd_db: mean_of(rows.iter().map(|r| Some(r.mcd_db))).unwrap_or(f64::NAN),
            f0_rmse: mean_of(rows.iter().map(|r| r.f0_rmse)),
            f0_corr: mean_of(rows.iter().map(|r| r.f0_corr)),
        }
    }

    /// One line per file in name order, then the mean row. Absent values
    /// are empty cells.
    pub fn to_csv(&self) -> String {
        let mut s = format!("{REPORT_HEADER}\n");
        for r in self.rows.iter().chain(std::iter::once(&self.mean())) {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                r.file,
                cell(Some(r.ms_ssim)),
                cell(Some(r.mcd_db)),
                cell(r.f0_rmse),
                cell(r.f0_corr),
                r.ms_ssim_scales
            );
        }
        s
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

fn f0_config(mel: &MelConfig) -> F0Config {
    F0Config {
        sample_rate: mel.sample_rate,
        hop: mel.hop,
        frame_length: mel.n_fft,
        ..F0Config::default()
    }
}

/// Scores one file pair. The synthesized mel is mapped onto the
/// reference's time axis along the cepstral DTW path before MS-SSIM, and
/// the same path pairs the F0 frames.
pub fn evaluate_pair(
    file: &str,
    reference: &MelSpectrogram<f64>,
    synth: &MelSpectrogram<f64>,
    wavs: Option<(&[f64], &[f64])>,
) -> Result<EvalRow> {
    let m = mcd_with_alignment(reference, synth)?;
    let mut pick = vec![usize::MAX; reference.frames()];
    for &(i, j) in &m.alignment.path {
        if pick[i] == usize::MAX {
            pick[i] = j;
        }
    }
    let mut data = Vec::with_capacity(reference.bins() * reference.frames());
    for b in 0..synth.bins() {
        data.extend(pick.iter().map(|&j| synth.get(b, j)));
    }
    let warped = MelSpectrogram::new(*synth.config(), reference.frames(), data)?;
    let s = ms_ssim(reference, &warped)?;
    let f0 = match wavs {
        Some((wa, wb)) => {
            let cfg = f0_config(reference.config());
            f0_metrics(&extract_f0(wa, &cfg)?, &extract_f0(wb, &cfg)?, &m.alignment.path)
        }
        None => None,
    };
    Ok(EvalRow {
        file: file.to_string(),
        ms_ssim: s.value,
        ms_ssim_scales: s.scales,
        mcd_db: m.db,
        f0_rmse: f0.map(|f| f.rmse_semitones),
        f0_corr: f0.and_then(|f| f.corr),
    })
}

fn collect_mels(root: &Path, dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_dir() {
            collect_mels(root, &path, out)?;
        } else if path.extension().is_some_and(|e| e == "mel") {
            out.push(path.strip_prefix(root).expect("walk stays under root").to_path_buf());
        }
    }
    Ok(())
}

fn evaluate_file(ref_dir: &Path, syn_dir: &Path, rel: &Path) -> Result<EvalRow> {
    let ref_path = ref_dir.join(rel);
    if !ref_path.exists() {
        return Err(Error::Format(format!("no reference for {}", rel.display())));
    }
    let reference = read_mel::<f64>(&ref_path)?;
    let synth = read_mel::<f64>(&syn_dir.join(rel))?;
    let (wa, wb) = (ref_dir.join(rel.with_extension("wav")), syn_dir.join(rel.with_extension("wav")));
    let wavs = if wa.exists() && wb.exists() {
        Some((read_wav::<f64>(&wa)?.0, read_wav::<f64>(&wb)?.0))
    } else {
        None
    };
    let name = rel.with_extension("").to_string_lossy().replace('\\', "/");
    evaluate_pair(&name, &reference, &synth, wavs.as_ref().map(|(a, b)| (a.as_slice(), b.as_slice())))
}

/// Scores every `.mel` under `syn_dir` against the file at the same
/// relative path under `ref_dir`. F0 metrics need `.wav` files next to
/// both mels. Rows come back sorted by name.
pub fn evaluate_dirs(ref_dir: &Path, syn_dir: &Path) -> Result<EvalReport> {
    let mut files = Vec::new();
    collect_mels(syn_dir, syn_dir, &mut files)?;
    files.sort();
    if files.is_empty() {
        return Err(Error::Format(format!("no .mel files under {}", syn_dir.display())));
    }
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(files.len());
    let chunk = files.len().div_ceil(workers);
    let results: Vec<Result<EvalRow>> = std::thread::scope(|scope| {
        let handles: Vec<_> = files
            .chunks(chunk)
            .map(|part| scope.spawn(move || part.iter().map(|rel| evaluate_file(ref_dir, syn_dir, rel)).collect::<Vec<_>>()))
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("evaluation worker panicked"))
            .collect()
    });
    Ok(EvalReport {
        rows: results.into_iter().collect::<Result<_>>()?,
    })
}
