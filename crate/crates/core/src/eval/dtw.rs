use crate::error::{Error, Result};
use crate::midi_io::PianoRoll;

/// Monotone alignment from `(0, 0)` to `(n_perf - 1, n_score - 1)` as
/// `(performance_frame, score_frame)` pairs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WarpingPath {
    pub pairs: Vec<(usize, usize)>,
    /// Summed column cost along the path.
    pub cost: u64,
}

impl WarpingPath {
    pub fn n_perf(&self) -> usize {
        self.pairs.last().map_or(0, |p| p.0 + 1)
    }

    pub fn n_score(&self) -> usize {
        self.pairs.last().map_or(0, |p| p.1 + 1)
    }

    /// Checks the boundary and unit-step conditions.
    pub fn is_valid(&self) -> bool {
        let Some(&first) = self.pairs.first() else {
            return false;
        };
        first == (0, 0)
            && self.pairs.windows(2).all(|s| {
                let (di, dj) = (s[1].0.wrapping_sub(s[0].0), s[1].1.wrapping_sub(s[0].1));
                matches!((di, dj), (1, 1) | (1, 0) | (0, 1))
            })
    }
}

/// Hamming distance between every performance column and every score
/// column, row-major by performance frame.
pub fn hamming_cost_matrix(perf: &PianoRoll, score: &PianoRoll) -> Vec<u32> {
    let pm = perf.column_masks();
    let sm = score.column_masks();
    pm.iter()
        .flat_map(|&a| sm.iter().map(move |&b| (a ^ b).count_ones()))
        .collect()
}

const DIAG: u8 = 0;
const UP: u8 = 1;
const LEFT: u8 = 2;

/// Unconstrained DTW under Hamming column cost. Ties prefer the diagonal
/// step, then a performance-only step, then a score-only step.
pub fn dtw_align(perf: &PianoRoll, score: &PianoRoll) -> Result<WarpingPath> {
    let (n, m) = (perf.n_frames(), score.n_frames());
    if n == 0 || m == 0 {
        return Err(Error::Empty("roll passed to DTW"));
    }
    let pm = perf.column_masks();
    let sm = score.column_masks();
    let mut dirs = vec![DIAG; n * m];
    let mut prev = vec![0u64; m];
    let mut cur = vec![0u64; m];
    for i in 0..n {
        for j in 0..m {
            let cost = u64::from((pm[i] ^ sm[j]).count_ones());
            let (best, dir) = match (i, j) {
                (0, 0) => (0, DIAG),
                (0, _) => (cur[j - 1], LEFT),
                (_, 0) => (prev[0], UP),
                _ => {
                    let mut pick = (prev[j - 1], DIAG);
                    if prev[j] < pick.0 {
                        pick = (prev[j], UP);
                    }
                    if cur[j - 1] < pick.0 {
                        pick = (cur[j - 1], LEFT);
                    }
                    pick
                }
            };
            cur[j] = best + cost;
            dirs[i * m + j] = dir;
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    let cost = prev[m - 1];

    let mut pairs = Vec::with_capacity(n + m);
    let (mut i, mut j) = (n - 1, m - 1);
    pairs.push((i, j));
    while (i, j) != (0, 0) {
        match dirs[i * m + j] {
            DIAG => {
                i -= 1;
                j -= 1;
            }
            UP => i -= 1,
            _ => j -= 1,
        }
        pairs.push((i, j));
    }
    pairs.reverse();
    Ok(WarpingPath { pairs, cost })
}
