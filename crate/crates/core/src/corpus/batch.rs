use super::Utterance;
use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::networks::MusicalScore;
use crate::scalar::Scalar;

/// Utterances padded to a common frame count.
#[derive(Debug, Clone)]
pub struct Batch<S: Scalar> {
    /// `[B, M, L]` log-mel, padded with the requested value.
    pub mel: Tensor<S>,
    /// `[B, 1, L]` with 1 on real frames and 0 on padding.
    pub frame_mask: Tensor<S>,
    pub mask: Vec<Vec<bool>>,
    pub lengths: Vec<usize>,
    pub scores: Vec<MusicalScore>,
    pub durations: Vec<Vec<usize>>,
}

impl<S: Scalar> Batch<S> {
    pub fn len(&self) -> usize {
        self.lengths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lengths.is_empty()
    }

    pub fn frames(&self) -> usize {
        self.mel.shape()[2]
    }

    pub fn bins(&self) -> usize {
        self.mel.shape()[1]
    }
}

pub fn load_batch<S: Scalar>(utts: &[Utterance], indices: &[usize], pad: f64) -> Result<Batch<S>> {
    if indices.is_empty() {
        return Err(Error::InvalidParameter("empty batch".into()));
    }
    let picked = indices
        .iter()
        .map(|&i| {
            utts.get(i)
                .ok_or_else(|| Error::InvalidParameter(format!("utterance {i} out of range")))
        })
        .collect::<Result<Vec<_>>>()?;
    let m = picked[0].mel.bins();
    if let Some(u) = picked.iter().find(|u| u.mel.bins() != m) {
        return Err(Error::InvalidShape {
            op: "load_batch",
            msg: format!("{} has {} bins, expected {m}", u.name, u.mel.bins()),
        });
    }
    let lengths: Vec<usize> = picked.iter().map(|u| u.frames()).collect();
    let l = *lengths.iter().max().unwrap();
    let b = picked.len();
    let mut mel = vec![S::lit(pad); b * m * l];
    let mut fm = vec![S::zero(); b * l];
    let mut mask = Vec::with_capacity(b);
    for (bi, u) in picked.iter().enumerate() {
        let n = u.frames();
        for bin in 0..m {
            let row = &mut mel[(bi * m + bin) * l..][..n];
            for (f, v) in row.iter_mut().enumerate() {
                *v = S::lit(u.mel.get(bin, f));
            }
        }
        for v in &mut fm[bi * l..bi * l + n] {
            *v = S::one();
        }
        mask.push((0..l).map(|f| f < n).collect());
    }
    Ok(Batch {
        mel: Tensor::new(mel, &[b, m, l])?,
        frame_mask: Tensor::new(fm, &[b, 1, l])?,
        mask,
        lengths,
        scores: picked.iter().map(|u| u.score.clone()).collect(),
        durations: picked.iter().map(|u| u.durations.clone()).collect(),
    })
}
