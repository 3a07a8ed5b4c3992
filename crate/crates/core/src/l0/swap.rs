use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gram::Gram;
use crate::linalg::{residuals, Dataset};
use crate::par;

use super::{improves, noise_floor, SparsitySolution};

/// Relative decrease a move must achieve to count as an improvement.
pub(crate) const IMPROVEMENT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwapOutcome {
    pub solution: SparsitySolution,
    /// `false` means the input is swap-inescapable of the requested order and
    /// is returned unchanged.
    pub improved: bool,
    /// Number of exchanges enumerated.
    pub candidates: usize,
}

fn choose2(n: usize) -> usize {
    n * n.saturating_sub(1) / 2
}

/// Number of exchanges `(I \ S1) ∪ S2` with `S1 ⊆ I`, `S2 ⊆ O` and
/// `|S1| <= |S2| <= l`, excluding the empty move.
pub fn swap_candidate_count(n_inliers: usize, n_outliers: usize, l: usize) -> usize {
    let mut total = n_outliers * (1 + n_inliers);
    if l >= 2 {
        total += choose2(n_outliers) * (1 + n_inliers + choose2(n_inliers));
    }
    total
}

#[derive(Clone, Copy)]
struct Best {
    rss: f64,
    key: (usize, usize, usize),
}

impl Best {
    fn better(&self, other: &Best) -> bool {
        self.rss < other.rss || (self.rss == other.rss && self.key < other.key)
    }
}

fn combine(a: (Option<Best>, usize), b: (Option<Best>, usize)) -> (Option<Best>, usize) {
    let best = match (a.0, b.0) {
        (Some(x), Some(y)) => Some(if y.better(&x) { y } else { x }),
        (x, None) => x,
        (None, y) => y,
    };
    (best, a.1 + b.1)
}

/// Best exchange of up to `l` rows between the inlier and outlier sets.
///
/// Every candidate support is scored through rank updates of the inlier
/// normal equations; the winning support is refit with QR before it is
/// compared against the input. Supports that leave too few rows or a
/// singular design are skipped.
pub fn local_swap_search(data: &Dataset, sol: &SparsitySolution, l: usize) -> Result<SwapOutcome> {
    if !(1..=2).contains(&l) {
        return Err(Error::InvalidInput(format!("local exactness level must be 1 or 2, got {l}")));
    }
    if sol.alpha.len() != data.n() || sol.beta.len() != data.width() {
        return Err(Error::Dimension("solution does not match dataset".into()));
    }
    let unchanged = |candidates| SwapOutcome { solution: sol.clone(), improved: false, candidates };
    let inl = &sol.inliers;
    let out = &sol.outliers;
    if out.is_empty() {
        return Ok(unchanged(0));
    }
    let t = residuals(data, &sol.beta)?;
    let base = Gram::from_rows(data, &t, inl.iter().copied());

    let mut moves_in: Vec<(usize, Option<usize>)> = out.iter().map(|&o| (o, None)).collect();
    if l >= 2 {
        for (a, &o1) in out.iter().enumerate() {
            for &o2 in &out[a + 1..] {
                moves_in.push((o1, Some(o2)));
            }
        }
    }
    let stride = 1 + inl.len();
    let width = data.width();

    let (best, candidates) = par::map_reduce_with(
        moves_in.len() * stride,
        || (Gram::new(width), Gram::new(width), Vec::<f64>::new()),
        |(g, g2, scratch), task| {
            let (m, j) = (task / stride, task % stride);
            let (o1, o2) = moves_in[m];
            g.clone_from(&base);
            g.add(data.design_row(o1), t[o1]);
            if let Some(o2) = o2 {
                g.add(data.design_row(o2), t[o2]);
            }
            let mut best: Option<Best> = None;
            let mut count = 0;
            let mut consider = |rss: Option<f64>, key, best: &mut Option<Best>| {
                count += 1;
                if let Some(rss) = rss {
                    let cand = Best { rss, key };
                    if best.as_ref().is_none_or(|b| cand.better(b)) {
                        *best = Some(cand);
                    }
                }
            };
            if j == 0 {
                consider(g.rss(scratch), (m, 0, 0), &mut best);
                return (best, count);
            }
            let i1 = inl[j - 1];
            g.remove(data.design_row(i1), t[i1]);
            consider(g.rss(scratch), (m, j, 0), &mut best);
            if o2.is_some() {
                for (q, &i2) in inl.iter().enumerate().skip(j) {
                    g2.clone_from(g);
                    g2.remove(data.design_row(i2), t[i2]);
                    consider(g2.rss(scratch), (m, j, q + 1), &mut best);
                }
            }
            (best, count)
        },
        || (None, 0),
        combine,
    );
    debug_assert_eq!(candidates, swap_candidate_count(inl.len(), out.len(), l));

    let floor = noise_floor(data);
    let Some(best) = best else {
        return Ok(unchanged(candidates));
    };
    if !improves(0.5 * best.rss, sol.objective, floor) {
        return Ok(unchanged(candidates));
    }
    let (m, j, q) = best.key;
    let (o1, o2) = moves_in[m];
    let mut new_out: Vec<usize> = out.iter().copied().filter(|&o| o != o1 && Some(o) != o2).collect();
    if j > 0 {
        new_out.push(inl[j - 1]);
    }
    if q > 0 {
        new_out.push(inl[q - 1]);
    }
    let refit = match SparsitySolution::from_outliers(data, sol.k, new_out) {
        Ok(s) => s,
        Err(Error::RankDeficient) | Err(Error::TooFewInliers { .. }) => return Ok(unchanged(candidates)),
        Err(e) => return Err(e),
    };
    if improves(refit.objective, sol.objective, floor) {
        Ok(SwapOutcome { solution: refit, improved: true, candidates })
    } else {
        Ok(unchanged(candidates))
    }
}
