use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Minimal-cost monotone path from `(0, 0)` to `(n − 1, m − 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Alignment {
    pub path: Vec<(usize, usize)>,
    pub cost: f64,
}

pub fn euclidean<S: Scalar>(a: &[S], b: &[S]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = x.as_f64() - y.as_f64();
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

/// Exact DTW over an `n × m` grid with unit steps right, down and
/// diagonal. Ties prefer the diagonal.
pub fn dtw_with(n: usize, m: usize, cost: impl Fn(usize, usize) -> f64) -> Result<Alignment> {
    if n == 0 || m == 0 {
        return Err(Error::InvalidParameter(format!("cannot align sequences of length {n} and {m}")));
    }
    let mut acc = vec![f64::INFINITY; n * m];
    for i in 0..n {
        for j in 0..m {
            let c = cost(i, j);
            if !c.is_finite() {
                return Err(Error::NonFinite {
                    op: format!("dtw cost at ({i}, {j})"),
                });
            }
            let best = if i == 0 && j == 0 {
                0.0
            } else {
                let diag = if i > 0 && j > 0 { acc[(i - 1) * m + j - 1] } else { f64::INFINITY };
                let up = if i > 0 { acc[(i - 1) * m + j] } else { f64::INFINITY };
                let left = if j > 0 { acc[i * m + j - 1] } else { f64::INFINITY };
                diag.min(up).min(left)
            };
            acc[i * m + j] = best + c;
        }
    }
    let (mut i, mut j) = (n - 1, m - 1);
    let mut path = vec![(i, j)];
    while (i, j) != (0, 0) {
        let at = |a: usize, b: usize| acc[a * m + b];
        (i, j) = if i == 0 {
            (0, j - 1)
        } else if j == 0 {
            (i - 1, 0)
        } else {
            let diag = at(i - 1, j - 1);
            let up = at(i - 1, j);
            let left = at(i, j - 1);
            if diag <= up && diag <= left {
                (i - 1, j - 1)
            } else if up <= left {
                (i - 1, j)
            } else {
                (i, j - 1)
            }
        };
        path.push((i, j));
    }
    path.reverse();
    Ok(Alignment {
        path,
        cost: acc[n * m - 1],
    })
}

/// DTW between frame sequences under Euclidean frame distance.
pub fn dtw_align<S: Scalar>(a: &[Vec<S>], b: &[Vec<S>]) -> Result<Alignment> {
    if let (Some(x), Some(y)) = (a.first(), b.first()) {
        if a.iter().chain(b).any(|f| f.len() != x.len()) || x.len() != y.len() {
            return Err(Error::InvalidParameter("frames differ in dimension".into()));
        }
    }
    dtw_with(a.len(), b.len(), |i, j| euclidean(&a[i], &b[j]))
}
