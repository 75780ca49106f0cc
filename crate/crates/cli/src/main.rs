use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand};
use svsgan::autodiff::gradcheck::{faulty_fixture_case, primitive_cases, run_suite, CheckResult};
use svsgan::corpus::{generate_corpus, ToyCorpusSpec};
use svsgan::metrics::evaluate_dirs;
use svsgan::networks::{Checkpoint, ScoreFile};
use svsgan::signal::{griffin_lim, write_mel, write_wav, MelConfig};
use svsgan::trainer::{Synthesizer, TrainConfig, Trainer};
use svsgan::DiffusionSchedule;

/// Few-step diffusion singing-voice acoustic model with a score-conditioned
/// Wasserstein critic.
///
/// Exit status: 0 success, 2 usage error, 3 data or config error,
/// 4 numerical failure.
#[derive(Parser)]
#[command(name = "svsgan", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the variance schedule as CSV (t, beta, alpha, alpha_bar, beta_tilde).
    Schedule {
        /// Number of diffusion steps T.
        #[arg(long, default_value_t = 4)]
        steps: usize,
        #[arg(long, default_value_t = 0.1)]
        beta_min: f64,
        #[arg(long, default_value_t = 20.0)]
        beta_max: f64,
        /// Write to this file instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render the synthetic toy corpus (scores, WAVs, mels, manifest).
    GenCorpus {
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Corpus seed.
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value_t = 2)]
        singers: usize,
        #[arg(long, default_value_t = 8)]
        songs_per_singer: usize,
        /// Songs per singer kept out of training.
        #[arg(long, default_value_t = 2)]
        held_out: usize,
        /// Mel bins.
        #[arg(long, default_value_t = 32)]
        mels: usize,
    },
    /// Train a model from a key-value config file.
    Train {
        /// Config file (`key = value` lines; `preset` is required).
        #[arg(long)]
        config: PathBuf,
        /// Suppress per-step progress on stderr.
        #[arg(long)]
        quiet: bool,
    },
    /// Synthesize a mel-spectrogram (and optionally a Griffin-Lim WAV) from a score.
    Synth {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Score file.
        #[arg(long)]
        score: PathBuf,
        #[arg(long)]
        out_mel: PathBuf,
        /// Griffin-Lim preview.
        #[arg(long)]
        out_wav: Option<PathBuf>,
        /// Sampling seed.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Use the durations stored in the score file instead of predicted ones.
        #[arg(long)]
        gt_durations: bool,
        /// Training config the checkpoint must have been produced with.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Griffin-Lim iterations.
        #[arg(long, default_value_t = 32)]
        gl_iters: usize,
    },
    /// Score synthesized mels (and WAVs) against references; writes a CSV report.
    Eval {
        /// Reference directory.
        #[arg(long = "ref")]
        reference: PathBuf,
        /// Directory of synthesized files, same relative names as the references.
        #[arg(long)]
        syn: PathBuf,
        /// Output CSV.
        #[arg(long)]
        report: PathBuf,
    },
    /// Finite-difference check of first- and second-order gradients.
    Gradcheck {
        /// Check only the named primitive.
        #[arg(long)]
        only: Option<String>,
        /// Add a deliberately broken backward rule as a negative control.
        #[arg(long)]
        with_faulty_fixture: bool,
    },
}

/// A numerical check that ran but did not pass.
#[derive(Debug)]
struct CheckFailed(String);

impl std::fmt::Display for CheckFailed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for CheckFailed {}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let numerical = e.downcast_ref::<CheckFailed>().is_some()
                || e.chain().any(|c| c.downcast_ref::<svsgan::Error>().is_some_and(|s| s.is_numerical()));
            let kind = if numerical { "numerical" } else { "data" };
            let mut msg = String::new();
            for cause in e.chain().map(|c| c.to_string()) {
                if !msg.contains(&cause) {
                    if !msg.is_empty() {
                        msg.push_str(": ");
                    }
                    msg.push_str(&cause);
                }
            }
            let msg = msg.replace('\n', " ");
            eprintln!("error: {kind}: {msg}");
            ExitCode::from(if numerical { 4 } else { 3 })
        }
    }
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Schedule {
            steps,
            beta_min,
            beta_max,
            out,
        } => {
            let csv = DiffusionSchedule::vp(steps, beta_min, beta_max)?.to_csv();
            match out {
                Some(p) => fs::write(&p, csv).with_context(|| format!("writing {}", p.display()))?,
                None => print!("{csv}"),
            }
        }
        Command::GenCorpus {
            out,
            seed,
            singers,
            songs_per_singer,
            held_out,
            mels,
        } => {
            let spec = ToyCorpusSpec {
                seed,
                singers,
                songs_per_singer,
                held_out_per_singer: held_out,
                mel: MelConfig::with_mels(mels),
                ..ToyCorpusSpec::default()
            };
            let ds = generate_corpus(&spec, &out)?;
            println!("wrote {} utterances to {}", ds.entries().len(), out.display());
        }
        Command::Train { config, quiet } => train(&config, quiet)?,
        Command::Synth {
            checkpoint,
            score,
            out_mel,
            out_wav,
            seed,
            gt_durations,
            config,
            gl_iters,
        } => {
            let ck = Checkpoint::read(&checkpoint)?;
            let syn = Synthesizer::<f64>::from_checkpoint(&ck)?;
            if let Some(path) = config {
                syn.check_config(&read_config(&path)?)?;
            }
            let file = ScoreFile::read(&score)?;
            let durations = match (gt_durations, &file.durations) {
                (false, _) => None,
                (true, Some(d)) => Some(d.as_slice()),
                (true, None) => bail!("{} has no durations for --gt-durations", score.display()),
            };
            let mel = syn.synthesize(&file.score, durations, seed)?;
            create_parent(&out_mel)?;
            write_mel(&out_mel, &mel)?;
            if let Some(wav) = out_wav {
                create_parent(&wav)?;
                let samples = griffin_lim(&mel, gl_iters)?;
                write_wav(&wav, &samples, mel.config().sample_rate)?;
            }
            println!("{} frames -> {}", mel.frames(), out_mel.display());
        }
        Command::Eval { reference, syn, report } => {
            let rep = evaluate_dirs(&reference, &syn)?;
            create_parent(&report)?;
            rep.write(&report)?;
            let m = rep.mean();
            let opt = |v: Option<f64>| v.map_or("n/a".to_string(), |x| format!("{x:.4}"));
            println!(
                "{} files: ms_ssim {:.4} mcd {:.4} dB f0_rmse {} f0_corr {}",
                rep.rows.len(),
                m.ms_ssim,
                m.mcd_db,
                opt(m.f0_rmse),
                opt(m.f0_corr)
            );
        }
        Command::Gradcheck {
            only,
            with_faulty_fixture,
        } => gradcheck(only.as_deref(), with_faulty_fixture)?,
    }
    Ok(())
}

fn create_parent(path: &Path) -> Result<()> {
    match path.parent().filter(|p| !p.as_os_str().is_empty()) {
        Some(dir) => fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display())),
        None => Ok(()),
    }
}

fn read_config(path: &Path) -> Result<TrainConfig> {
    let text = fs::read_to_string(path).with_context(|| format!("config not found: {}", path.display()))?;
    TrainConfig::parse(&text).with_context(|| format!("in {}", path.display()))
}

fn train(path: &Path, quiet: bool) -> Result<()> {
    let cfg = read_config(path)?;
    let total = cfg.steps;
    let out = cfg.out_dir.clone();
    let every = (total / 20).max(1);
    let mut tr = Trainer::<f64>::from_corpus(cfg)?;
    tr.run(|step, l| {
        if !quiet && (step % every == 0 || step == total) {
            eprintln!(
                "step {step}/{total} l_dur {:.4} l_recon {:.4} l_adv {:.4} l_wd {:.4} l_gp {:.4}",
                l.l_dur, l.l_recon, l.l_adv, l.l_wd, l.l_gp
            );
        }
    })?;
    println!("wrote {}", out.join("final.ckpt").display());
    Ok(())
}

fn gradcheck(only: Option<&str>, faulty: bool) -> Result<()> {
    let mut cases = primitive_cases(0);
    if faulty {
        cases.push(faulty_fixture_case());
    }
    if let Some(name) = only {
        if !cases.iter().any(|c| c.name == name) {
            let known: Vec<&str> = cases.iter().map(|c| c.name.as_str()).collect();
            return Err(anyhow!("unknown primitive `{name}` (known: {})", known.join(", ")));
        }
    }
    let results = run_suite(&cases, only)?;
    println!("{:<18} {:>5} {:>12} {:>10}  status", "primitive", "order", "max_rel_err", "tol");
    for r in &results {
        println!(
            "{:<18} {:>5} {:>12.3e} {:>10.0e}  {}",
            r.name,
            r.order,
            r.max_err,
            r.tolerance,
            if r.passed() { "ok" } else { "FAIL" }
        );
    }
    let failed: Vec<&CheckResult> = results.iter().filter(|r| !r.passed()).collect();
    if !failed.is_empty() {
        let mut names: Vec<&str> = failed.iter().map(|r| r.name.as_str()).collect();
        names.dedup();
        return Err(CheckFailed(format!("gradcheck failed for {}", names.join(", "))).into());
    }
    Ok(())
}
