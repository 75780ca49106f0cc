use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::kv::KvDoc;

/// Phone, note-length and note-pitch sequences of one utterance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MusicalScore {
    pub phones: Vec<usize>,
    /// Length of the note each phone belongs to, in frames.
    pub note_lengths: Vec<usize>,
    /// MIDI note number per phone.
    pub pitches: Vec<usize>,
    pub singer: usize,
}

/// Limits a score must respect to be fed to a model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScoreVocab {
    pub phones: usize,
    pub pitches: usize,
    pub singers: usize,
}

impl MusicalScore {
    pub fn len(&self) -> usize {
        self.phones.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phones.is_empty()
    }

    pub fn validate(&self, vocab: &ScoreVocab) -> Result<()> {
        if self.phones.is_empty() {
            return Err(Error::InvalidParameter("score has no phones".into()));
        }
        if self.note_lengths.len() != self.phones.len() || self.pitches.len() != self.phones.len() {
            return Err(Error::InvalidParameter(format!(
                "score sequences differ in length: {} phones, {} note lengths, {} pitches",
                self.phones.len(),
                self.note_lengths.len(),
                self.pitches.len()
            )));
        }
        if let Some(p) = self.phones.iter().find(|&&p| p >= vocab.phones) {
            return Err(Error::InvalidParameter(format!(
                "phone id {p} outside vocabulary of {}",
                vocab.phones
            )));
        }
        if let Some(p) = self.pitches.iter().find(|&&p| p >= vocab.pitches) {
            return Err(Error::InvalidParameter(format!(
                "pitch {p} outside vocabulary of {}",
                vocab.pitches
            )));
        }
        if self.singer >= vocab.singers {
            return Err(Error::InvalidParameter(format!(
                "singer {} outside 0..{}",
                self.singer, vocab.singers
            )));
        }
        Ok(())
    }
}

/// A score together with optional ground-truth phone durations (frames).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScoreFile {
    pub score: MusicalScore,
    pub durations: Option<Vec<usize>>,
}

impl ScoreFile {
    pub fn parse(text: &str) -> Result<Self> {
        let doc = KvDoc::parse(text)?;
        doc.reject_unknown(&["singer", "phones", "note_lengths", "pitches", "durations"])?;
        let score = MusicalScore {
            phones: doc.list("phones")?,
            note_lengths: doc.list("note_lengths")?,
            pitches: doc.list("pitches")?,
            singer: doc.require("singer")?,
        };
        let durations = match doc.get("durations") {
            Some(_) => Some(doc.list::<usize>("durations")?),
            None => None,
        };
        if let Some(d) = &durations {
            if d.len() != score.phones.len() {
                return Err(Error::Format(format!(
                    "{} durations for {} phones",
                    d.len(),
                    score.phones.len()
                )));
            }
        }
        Ok(Self { score, durations })
    }

    pub fn render(&self) -> String {
        let join = |v: &[usize]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ");
        let mut doc = KvDoc::default();
        doc.push("singer", self.score.singer);
        doc.push("phones", join(&self.score.phones));
        doc.push("note_lengths", join(&self.score.note_lengths));
        doc.push("pitches", join(&self.score.pitches));
        if let Some(d) = &self.durations {
            doc.push("durations", join(d));
        }
        format!("# svsgan score v1\n{}", doc.render())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.render()).map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn render_parse_round_trip() {
        let f = ScoreFile {
            score: MusicalScore {
                phones: vec![1, 4, 2],
                note_lengths: vec![10, 10, 7],
                pitches: vec![60, 60, 62],
                singer: 1,
            },
            durations: Some(vec![3, 7, 7]),
        };
        assert_eq!(ScoreFile::parse(&f.render()).unwrap(), f);
    }

    #[test]
    fn validation_catches_mismatch() {
        let vocab = ScoreVocab { phones: 4, pitches: 128, singers: 2 };
        let mut s = MusicalScore { phones: vec![1, 2], note_lengths: vec![3, 3], pitches: vec![60, 60], singer: 0 };
        assert!(s.validate(&vocab).is_ok());
        s.pitches.pop();
        assert!(s.validate(&vocab).is_err());
        let empty = MusicalScore { phones: vec![], note_lengths: vec![], pitches: vec![], singer: 0 };
        assert!(empty.validate(&vocab).is_err());
        assert!(ScoreFile::parse("singer = 0\nphones = 1\nnote_lengths = 2\npitches = 60\ndurations = 1 2").is_err());
    }
}
