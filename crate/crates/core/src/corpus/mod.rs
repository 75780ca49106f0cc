//! Synthetic singing corpus: random note sequences rendered as harmonic
//! vowels and noise-burst consonants, stored one directory per singer.
//!
//! Layout under the corpus root:
//!
//! ```text
//! manifest.txt              key = value spec echo plus one
//!                           `utterance = <split> <singer> <stem>` line each
//! singer_<s>/song_<k>.score  phones, note lengths, pitches, durations
//! singer_<s>/song_<k>.wav    16-bit mono
//! singer_<s>/song_<k>.mel    binary mel file
//! ```

mod batch;
mod render;

use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use batch::{load_batch, Batch};
pub use render::midi_to_hz;

use crate::error::{Error, Result};
use crate::kv::KvDoc;
use crate::networks::{MusicalScore, ScoreFile, ScoreVocab};
use crate::signal::{read_mel, read_wav, stft_mel, write_mel, write_wav, MelConfig, MelSpectrogram};

/// MIDI pitch vocabulary size shared by every model.
pub const PITCH_VOCAB: usize = 128;

#[derive(Debug, Clone, PartialEq)]
pub struct ToyCorpusSpec {
    pub singers: usize,
    /// Noise-like phones get ids `0..consonants`, harmonic ones follow.
    pub consonants: usize,
    pub vowels: usize,
    pub songs_per_singer: usize,
    pub held_out_per_singer: usize,
    pub min_seconds: f64,
    pub max_seconds: f64,
    /// Inclusive note length bounds in frames.
    pub note_frames: (usize, usize),
    /// Inclusive MIDI pitch bounds.
    pub pitch_range: (usize, usize),
    pub mel: MelConfig,
    pub seed: u64,
}

impl Default for ToyCorpusSpec {
    fn default() -> Self {
        Self {
            singers: 2,
            consonants: 3,
            vowels: 5,
            songs_per_singer: 8,
            held_out_per_singer: 2,
            min_seconds: 2.0,
            max_seconds: 4.0,
            note_frames: (12, 36),
            pitch_range: (55, 72),
            mel: MelConfig::with_mels(32),
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Split {
    Train,
    HeldOut,
}

impl Split {
    fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::HeldOut => "heldout",
        }
    }

    fn parse(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "heldout" => Ok(Split::HeldOut),
            _ => Err(Error::Format(format!("unknown split `{s}`"))),
        }
    }
}

impl ToyCorpusSpec {
    pub fn phone_vocab(&self) -> usize {
        self.consonants + self.vowels
    }

    pub fn vocab(&self) -> ScoreVocab {
        ScoreVocab {
            phones: self.phone_vocab(),
            pitches: PITCH_VOCAB,
            singers: self.singers,
        }
    }

    pub fn is_vowel(&self, phone: usize) -> bool {
        phone >= self.consonants && phone < self.phone_vocab()
    }

    pub fn validate(&self) -> Result<()> {
        self.mel.validate()?;
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.singers == 0 {
            return bad("corpus needs at least one singer".into());
        }
        if self.consonants == 0 || self.vowels == 0 {
            return bad("corpus needs both consonant-like and vowel-like phones".into());
        }
        if self.held_out_per_singer < 2 || self.songs_per_singer <= self.held_out_per_singer {
            return bad(format!(
                "{} songs per singer cannot hold {} held-out segments plus training data (need at least 2 held out)",
                self.songs_per_singer, self.held_out_per_singer
            ));
        }
        let (a, b) = self.note_frames;
        if a < 2 || a > b {
            return bad(format!("note length bounds {a}..{b} frames"));
        }
        let (lo, hi) = self.pitch_range;
        if lo > hi || hi >= PITCH_VOCAB {
            return bad(format!("pitch range {lo}..{hi}"));
        }
        let fps = render::frames_per_second(self);
        if !(self.min_seconds > 0.0 && self.min_seconds <= self.max_seconds)
            || ((self.max_seconds * fps).floor() as usize) < a
            || (self.min_seconds * fps).ceil() > (self.max_seconds * fps).floor()
        {
            return bad(format!(
                "unsatisfiable segment duration bounds {}..{} s",
                self.min_seconds, self.max_seconds
            ));
        }
        Ok(())
    }

    fn to_kv(&self) -> KvDoc {
        let mut d = KvDoc::default();
        d.push("singers", self.singers);
        d.push("consonants", self.consonants);
        d.push("vowels", self.vowels);
        d.push("songs_per_singer", self.songs_per_singer);
        d.push("held_out_per_singer", self.held_out_per_singer);
        d.push("min_seconds", self.min_seconds);
        d.push("max_seconds", self.max_seconds);
        d.push("note_frames", format!("{} {}", self.note_frames.0, self.note_frames.1));
        d.push("pitch_range", format!("{} {}", self.pitch_range.0, self.pitch_range.1));
        d.push("sample_rate", self.mel.sample_rate);
        d.push("n_fft", self.mel.n_fft);
        d.push("hop", self.mel.hop);
        d.push("n_mels", self.mel.n_mels);
        d.push("fmin", self.mel.fmin);
        d.push("fmax", self.mel.fmax);
        d.push("seed", self.seed);
        d
    }

    fn from_kv(d: &KvDoc) -> Result<Self> {
        let pair = |k: &str| -> Result<(usize, usize)> {
            match d.list::<usize>(k)?.as_slice() {
                [a, b] => Ok((*a, *b)),
                _ => Err(Error::Format(format!("`{k}` needs two values"))),
            }
        };
        Ok(Self {
            singers: d.require("singers")?,
            consonants: d.require("consonants")?,
            vowels: d.require("vowels")?,
            songs_per_singer: d.require("songs_per_singer")?,
            held_out_per_singer: d.require("held_out_per_singer")?,
            min_seconds: d.require("min_seconds")?,
            max_seconds: d.require("max_seconds")?,
            note_frames: pair("note_frames")?,
            pitch_range: pair("pitch_range")?,
            mel: MelConfig {
                sample_rate: d.require("sample_rate")?,
                n_fft: d.require("n_fft")?,
                hop: d.require("hop")?,
                n_mels: d.require("n_mels")?,
                fmin: d.require("fmin")?,
                fmax: d.require("fmax")?,
            },
            seed: d.require("seed")?,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Utterance {
    /// Path stem relative to the corpus root, e.g. `singer_0/song_003`.
    pub name: String,
    pub score: MusicalScore,
    /// Ground-truth frames per phone.
    pub durations: Vec<usize>,
    pub mel: MelSpectrogram<f64>,
    pub wav: Option<Vec<f64>>,
}

impl Utterance {
    pub fn frames(&self) -> usize {
        self.mel.frames()
    }
}

/// Renders one utterance in memory. Each (singer, song) pair draws from its
/// own random stream, so results do not depend on generation order.
pub fn render_utterance(spec: &ToyCorpusSpec, singer: usize, song: usize) -> Result<Utterance> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream((singer * spec.songs_per_singer + song) as u64);
    let layout = render::sample_layout(spec, singer, &mut rng)?;
    let mut wav = render::render(spec, &layout, &mut rng);
    render::quantize(&mut wav);
    let mel = stft_mel(&wav, &spec.mel)?;
    debug_assert_eq!(mel.frames(), layout.durations.iter().sum::<usize>());
    Ok(Utterance {
        name: format!("singer_{singer}/song_{song:03}"),
        score: layout.score,
        durations: layout.durations,
        mel,
        wav: Some(wav),
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Entry {
    pub split: Split,
    pub singer: usize,
    pub stem: String,
}

/// A corpus on disk, opened through its manifest.
#[derive(Debug, Clone)]
pub struct Dataset {
    root: PathBuf,
    spec: ToyCorpusSpec,
    entries: Vec<Entry>,
}

pub const MANIFEST: &str = "manifest.txt";

pub fn generate_corpus(spec: &ToyCorpusSpec, root: &Path) -> Result<Dataset> {
    spec.validate()?;
    let mut entries = Vec::new();
    for singer in 0..spec.singers {
        let dir = root.join(format!("singer_{singer}"));
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        for song in 0..spec.songs_per_singer {
            let utt = render_utterance(spec, singer, song)?;
            let base = root.join(&utt.name);
            ScoreFile {
                score: utt.score.clone(),
                durations: Some(utt.durations.clone()),
            }
            .write(&base.with_extension("score"))?;
            write_wav(&base.with_extension("wav"), utt.wav.as_deref().unwrap_or(&[]), spec.mel.sample_rate)?;
            write_mel(&base.with_extension("mel"), &utt.mel)?;
            let split = if song >= spec.songs_per_singer - spec.held_out_per_singer {
                Split::HeldOut
            } else {
                Split::Train
            };
            entries.push(Entry { split, singer, stem: utt.name });
        }
    }
    let mut doc = spec.to_kv();
    for e in &entries {
        doc.push("utterance", format!("{} {} {}", e.split.as_str(), e.singer, e.stem));
    }
    let path = root.join(MANIFEST);
    fs::write(&path, format!("# svsgan toy corpus v1\n{}", doc.render())).map_err(|e| Error::io(&path, e))?;
    Ok(Dataset {
        root: root.to_path_buf(),
        spec: spec.clone(),
        entries,
    })
}

impl Dataset {
    pub fn open(root: &Path) -> Result<Self> {
        let path = root.join(MANIFEST);
        if !path.exists() {
            return Err(Error::Format(format!("corpus manifest not found: {}", path.display())));
        }
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let doc = KvDoc::parse(&text)?;
        let spec = ToyCorpusSpec::from_kv(&doc)?;
        let entries = doc
            .get_all("utterance")
            .map(|line| {
                let parts: Vec<&str> = line.split_whitespace().collect();
                match parts.as_slice() {
                    [split, singer, stem] => Ok(Entry {
                        split: Split::parse(split)?,
                        singer: singer
                            .parse()
                            .map_err(|_| Error::Format(format!("bad singer in `{line}`")))?,
                        stem: stem.to_string(),
                    }),
                    _ => Err(Error::Format(format!("bad manifest line `{line}`"))),
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            root: root.to_path_buf(),
            spec,
            entries,
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn spec(&self) -> &ToyCorpusSpec {
        &self.spec
    }

    pub fn entries(&self) -> &[Entry] {
        &self.entries
    }

    pub fn indices(&self, split: Split) -> Vec<usize> {
        (0..self.entries.len())
            .filter(|&i| self.entries[i].split == split)
            .collect()
    }

    pub fn path(&self, i: usize, ext: &str) -> PathBuf {
        self.root.join(&self.entries[i].stem).with_extension(ext)
    }

    /// Score, durations and mel of entry `i` (the waveform is not read).
    pub fn load(&self, i: usize) -> Result<Utterance> {
        let entry = self
            .entries
            .get(i)
            .ok_or_else(|| Error::InvalidParameter(format!("utterance {i} out of range")))?;
        let sf = ScoreFile::read(&self.path(i, "score"))?;
        let durations = sf
            .durations
            .ok_or_else(|| Error::Format(format!("{}: score lacks durations", entry.stem)))?;
        let mel: MelSpectrogram<f64> = read_mel(&self.path(i, "mel"))?;
        if durations.iter().sum::<usize>() != mel.frames() {
            return Err(Error::Format(format!(
                "{}: durations sum to {} but mel has {} frames",
                entry.stem,
                durations.iter().sum::<usize>(),
                mel.frames()
            )));
        }
        sf.score.validate(&self.spec.vocab())?;
        Ok(Utterance {
            name: entry.stem.clone(),
            score: sf.score,
            durations,
            mel,
            wav: None,
        })
    }

    pub fn load_wav(&self, i: usize) -> Result<Vec<f64>> {
        Ok(read_wav(&self.path(i, "wav"))?.0)
    }

    pub fn load_split(&self, split: Split) -> Result<Vec<Utterance>> {
        self.indices(split).into_iter().map(|i| self.load(i)).collect()
    }
}
