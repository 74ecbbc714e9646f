//! Dynamic time warping: endpoint-anchored alignment for template fusion
//! and free-endpoint subsequence search (SDTW) for keyword localization.
//!
//! Step set is {(1,0),(0,1),(1,1)} with unit weights and Euclidean frame
//! distance. `dtw_align` anchors both endpoints; `sdtw_search` leaves start
//! and end free on the content axis and reports the matched span, which
//! downstream stages treat as the keyword timestamps.

use serde::{Deserialize, Serialize};

use crate::audio::FeatureMatrix;
use crate::error::{Error, Result};

const STEP_START: u8 = 0;
const STEP_DIAG: u8 = 1;
const STEP_LEFT: u8 = 2; // advance content only
const STEP_UP: u8 = 3; // advance query only

/// Warping path as ordered (query_frame, content_frame) pairs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AlignmentPath {
    pub pairs: Vec<(usize, usize)>,
}

impl AlignmentPath {
    /// Check the structural invariants: starts at query frame 0, ends at
    /// `query_frames - 1`, and every step is one of the admissible three.
    pub fn validate(&self, query_frames: usize) -> Result<()> {
        let first = self.pairs.first().ok_or(Error::EmptyInput("path"))?;
        let last = self.pairs.last().unwrap();
        if first.0 != 0 || last.0 != query_frames - 1 {
            return Err(Error::invalid("path must span all query frames"));
        }
        for w in self.pairs.windows(2) {
            let di = w[1].0 as isize - w[0].0 as isize;
            let dj = w[1].1 as isize - w[0].1 as isize;
            if !matches!((di, dj), (1, 0) | (0, 1) | (1, 1)) {
                return Err(Error::invalid(format!(
                    "inadmissible step {:?} -> {:?}",
                    w[0], w[1]
                )));
            }
        }
        Ok(())
    }
}

/// Best subsequence match found by [`sdtw_search`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SdtwResult {
    /// Accumulated distance divided by the query length.
    pub cost: f64,
    /// First matched content frame.
    pub start_frame: usize,
    /// Last matched content frame (inclusive).
    pub end_frame: usize,
    #[serde(skip)]
    pub path: AlignmentPath,
}

impl Default for AlignmentPath {
    fn default() -> Self {
        AlignmentPath { pairs: Vec::new() }
    }
}

/// Euclidean distance between two equal-dimension frames.
pub fn frame_distance(u: &[f32], v: &[f32]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::DimensionMismatch {
            left: u.len(),
            right: v.len(),
        });
    }
    Ok(euclidean(u, v))
}

#[inline]
fn euclidean(u: &[f32], v: &[f32]) -> f64 {
    let mut acc = 0.0f64;
    for (a, b) in u.iter().zip(v) {
        let d = *a as f64 - *b as f64;
        acc += d * d;
    }
    acc.sqrt()
}

fn check_inputs(a: &FeatureMatrix, b: &FeatureMatrix) -> Result<()> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyInput("dtw input"));
    }
    if a.dims() != b.dims() {
        return Err(Error::DimensionMismatch {
            left: a.dims(),
            right: b.dims(),
        });
    }
    Ok(())
}

/// Endpoint-anchored DTW.
///
/// Returns the minimal accumulated frame distance over admissible paths
/// from (0,0) to (Ta-1, Tb-1) and one realizing path. Exact cost ties
/// during backtrace prefer (1,1) over (0,1) over (1,0).
pub fn dtw_align(a: &FeatureMatrix, b: &FeatureMatrix) -> Result<(f64, AlignmentPath)> {
    check_inputs(a, b)?;
    let (ta, tb) = (a.frames(), b.frames());
    let mut cost = vec![0.0f64; ta * tb];
    let mut step = vec![STEP_START; ta * tb];
    let idx = |i: usize, j: usize| i * tb + j;

    cost[idx(0, 0)] = euclidean(a.row(0), b.row(0));
    for j in 1..tb {
        cost[idx(0, j)] = cost[idx(0, j - 1)] + euclidean(a.row(0), b.row(j));
        step[idx(0, j)] = STEP_LEFT;
    }
    for i in 1..ta {
        cost[idx(i, 0)] = cost[idx(i - 1, 0)] + euclidean(a.row(i), b.row(0));
        step[idx(i, 0)] = STEP_UP;

        let row_a = a.row(i);
        for j in 1..tb {
            let d = euclidean(row_a, b.row(j));
            let mut best = cost[idx(i - 1, j - 1)];
            let mut chosen = STEP_DIAG;
            let left = cost[idx(i, j - 1)];
            if left < best {
                best = left;
                chosen = STEP_LEFT;
            }
            let up = cost[idx(i - 1, j)];
            if up < best {
                best = up;
                chosen = STEP_UP;
            }
            cost[idx(i, j)] = best + d;
            step[idx(i, j)] = chosen;
        }
    }

    let path = backtrace(&step, tb, ta - 1, tb - 1);
    Ok((cost[idx(ta - 1, tb - 1)], path))
}

/// Subsequence DTW: locate the content span that best matches the query.
///
/// The first query frame may start at any content frame without penalty
/// and the match ends wherever the last query row's accumulated cost is
/// minimal. Cost is normalized by query length. Exact cost ties resolve
/// to the earliest start frame, then the longest span, so an exactly
/// embedded query maps to its full occurrence.
pub fn sdtw_search(query: &FeatureMatrix, content: &FeatureMatrix) -> Result<SdtwResult> {
    check_inputs(query, content)?;
    let (tq, tc) = (query.frames(), content.frames());
    let mut cost = vec![0.0f64; tq * tc];
    let mut start = vec![0u32; tq * tc];
    let mut step = vec![STEP_START; tq * tc];
    let idx = |i: usize, j: usize| i * tc + j;

    let row_q = query.row(0);
    for j in 0..tc {
        cost[idx(0, j)] = euclidean(row_q, content.row(j));
        start[idx(0, j)] = j as u32;
    }
    for i in 1..tq {
        let row_q = query.row(i);

        let d0 = euclidean(row_q, content.row(0));
        cost[idx(i, 0)] = cost[idx(i - 1, 0)] + d0;
        step[idx(i, 0)] = STEP_UP;

        for j in 1..tc {
            let d = euclidean(row_q, content.row(j));
            // Preference order on exact ties of (cost, start): diag, left, up.
            let mut best = cost[idx(i - 1, j - 1)];
            let mut best_start = start[idx(i - 1, j - 1)];
            let mut chosen = STEP_DIAG;

            let (c, s) = (cost[idx(i, j - 1)], start[idx(i, j - 1)]);
            if c < best || (c == best && s < best_start) {
                best = c;
                best_start = s;
                chosen = STEP_LEFT;
            }
            let (c, s) = (cost[idx(i - 1, j)], start[idx(i - 1, j)]);
            if c < best || (c == best && s < best_start) {
                best = c;
                best_start = s;
                chosen = STEP_UP;
            }
            cost[idx(i, j)] = best + d;
            start[idx(i, j)] = best_start;
            step[idx(i, j)] = chosen;
        }
    }

    let last = tq - 1;
    let mut end = 0usize;
    let mut best = cost[idx(last, 0)];
    let mut best_start = start[idx(last, 0)];
    for j in 1..tc {
        let (c, s) = (cost[idx(last, j)], start[idx(last, j)]);
        // Strictly better cost, or same cost from an earlier (or equal)
        // start; the equal-start case keeps the later end = longer span.
        if c < best || (c == best && s <= best_start) {
            best = c;
            best_start = s;
            end = j;
        }
    }

    let path = backtrace(&step, tc, last, end);
    Ok(SdtwResult {
        cost: best / tq as f64,
        start_frame: best_start as usize,
        end_frame: end,
        path,
    })
}

fn backtrace(step: &[u8], width: usize, mut i: usize, mut j: usize) -> AlignmentPath {
    let mut pairs = vec![(i, j)];
    loop {
        match step[i * width + j] {
            STEP_DIAG => {
                i -= 1;
                j -= 1;
            }
            STEP_LEFT => j -= 1,
            STEP_UP => i -= 1,
            _ => break,
        }
        pairs.push((i, j));
    }
    pairs.reverse();
    AlignmentPath { pairs }
}
