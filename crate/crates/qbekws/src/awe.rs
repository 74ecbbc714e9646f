//! Second-stage matching over acoustic word embeddings: cut the content
//! into fixed-length windows, embed each window, score every window by
//! cosine cost against the keyword's embedding template, and smooth the
//! resulting series with a simple moving average.

use std::collections::HashMap;

use crate::audio::FeatureMatrix;
use crate::error::{Error, Result};

/// Fixed-dimension real vector: an acoustic word embedding or a speaker
/// embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    values: Vec<f32>,
}

impl Embedding {
    pub fn new(values: Vec<f32>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyInput("embedding"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("embedding entries must be finite"));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn l2_norm(&self) -> f64 {
        self.values
            .iter()
            .map(|v| (*v as f64) * (*v as f64))
            .sum::<f64>()
            .sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }
}

/// Cosine similarity in f64. Errors on zero-norm inputs.
pub fn cosine(a: &Embedding, b: &Embedding) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            left: a.dim(),
            right: b.dim(),
        });
    }
    let mut dot = 0.0f64;
    let mut na = 0.0f64;
    let mut nb = 0.0f64;
    for (x, y) in a.values.iter().zip(&b.values) {
        let (x, y) = (*x as f64, *y as f64);
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroVector("cosine input"));
    }
    Ok(dot / (na.sqrt() * nb.sqrt()))
}

/// Maps a fixed-length feature window to an embedding. `start_frame` is the
/// window's first frame within the matrix being segmented, so that
/// file-backed embedders can look windows up by position.
pub trait Embedder: Sync {
    fn embed(&self, start_frame: usize, segment: &FeatureMatrix) -> Result<Embedding>;
}

/// Deterministic stand-in for a trained embedding network: per-dimension
/// mean and standard deviation over time, concatenated and L2-normalized.
/// Output dimension is twice the feature dimension.
#[derive(Debug, Clone, Copy, Default)]
pub struct ReferenceEmbedder;

impl Embedder for ReferenceEmbedder {
    fn embed(&self, _start_frame: usize, segment: &FeatureMatrix) -> Result<Embedding> {
        if segment.is_empty() {
            return Err(Error::EmptyInput("segment"));
        }
        let (t, d) = (segment.frames(), segment.dims());
        let mut mean = vec![0.0f64; d];
        for row in segment.rows() {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += *v as f64;
            }
        }
        for m in &mut mean {
            *m /= t as f64;
        }
        let mut var = vec![0.0f64; d];
        for row in segment.rows() {
            for ((va, v), m) in var.iter_mut().zip(row).zip(&mean) {
                let diff = *v as f64 - m;
                *va += diff * diff;
            }
        }
        let mut values: Vec<f64> = mean;
        values.extend(var.into_iter().map(|v| (v / t as f64).sqrt()));

        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        // An all-zero window embeds to the zero vector; scoring it is the
        // caller's error, not ours.
        let scale = if norm > 0.0 { 1.0 / norm } else { 1.0 };
        Embedding::new(values.into_iter().map(|v| (v * scale) as f32).collect())
    }
}

/// Precomputed embeddings keyed by window start frame, as ingested from
/// an external embedding network's dump.
#[derive(Debug, Clone, Default)]
pub struct ExternalEmbedder {
    by_start: HashMap<usize, Embedding>,
}

impl ExternalEmbedder {
    pub fn new(by_start: HashMap<usize, Embedding>) -> Self {
        Self { by_start }
    }

    pub fn insert(&mut self, start_frame: usize, embedding: Embedding) {
        self.by_start.insert(start_frame, embedding);
    }
}

impl Embedder for ExternalEmbedder {
    fn embed(&self, start_frame: usize, _segment: &FeatureMatrix) -> Result<Embedding> {
        self.by_start
            .get(&start_frame)
            .cloned()
            .ok_or(Error::MissingWindowEmbedding(start_frame))
    }
}

/// Force a matrix to exactly `target_frames`: center-clip when longer,
/// zero-pad evenly (extra frame after) when shorter.
pub fn pad_or_clip(features: &FeatureMatrix, target_frames: usize) -> Result<FeatureMatrix> {
    if target_frames == 0 {
        return Err(Error::invalid("target_frames must be positive"));
    }
    if features.is_empty() {
        return Err(Error::EmptyInput("pad_or_clip input"));
    }
    let t = features.frames();
    if t == target_frames {
        return Ok(features.clone());
    }
    if t > target_frames {
        let start = (t - target_frames) / 2;
        return features.slice_frames(start, start + target_frames - 1);
    }
    let missing = target_frames - t;
    let before = missing / 2;
    let after = missing - before;
    let dims = features.dims();
    let mut data = vec![0.0f32; before * dims];
    data.extend_from_slice(features.data());
    data.extend(std::iter::repeat(0.0f32).take(after * dims));
    FeatureMatrix::new(
        target_frames,
        dims,
        data,
        features.shift_ms,
        features.window_ms,
        features.kind,
    )
}

/// One embedded window of the content.
#[derive(Debug, Clone)]
pub struct Segment {
    pub start_frame: usize,
    pub end_frame: usize,
    pub embedding: Embedding,
}

/// Uniform fixed-length windows over the content, embedded.
#[derive(Debug, Clone)]
pub struct SegmentSequence {
    pub segments: Vec<Segment>,
    pub window_frames: usize,
    pub hop_frames: usize,
    pub hop_ms: f32,
}

/// Slide a `window_s` window at `hop_s` stride over the content and embed
/// every window. Content shorter than one window becomes a single
/// zero-padded segment.
pub fn segment_content(
    content: &FeatureMatrix,
    window_s: f64,
    hop_s: f64,
    embedder: &dyn Embedder,
) -> Result<SegmentSequence> {
    if content.is_empty() {
        return Err(Error::EmptyInput("segment_content input"));
    }
    let window_frames = content.frames_for_duration(window_s).max(1);
    let hop_frames = content.frames_for_duration(hop_s).max(1);
    let hop_ms = hop_frames as f32 * content.shift_ms;

    let embed_at = |start: usize, end: usize| -> Result<Segment> {
        let window = content.slice_frames(start, end)?;
        let padded = pad_or_clip(&window, window_frames)?;
        let embedding = embedder.embed(start, &padded).map_err(|e| Error::Embedder {
            window: start,
            source: Box::new(e),
        })?;
        Ok(Segment {
            start_frame: start,
            end_frame: end,
            embedding,
        })
    };

    let t = content.frames();
    let mut segments = Vec::new();
    if t < window_frames {
        segments.push(embed_at(0, t - 1)?);
    } else {
        let mut start = 0;
        while start + window_frames <= t {
            segments.push(embed_at(start, start + window_frames - 1)?);
            start += hop_frames;
        }
    }
    Ok(SegmentSequence {
        segments,
        window_frames,
        hop_frames,
        hop_ms,
    })
}

/// Per-window cosine costs `1 - cos(template, window)` and their minimum.
pub fn awe_cost(template: &Embedding, segments: &SegmentSequence) -> Result<(Vec<f64>, f64)> {
    if segments.segments.is_empty() {
        return Err(Error::EmptyInput("segments"));
    }
    let mut raw = Vec::with_capacity(segments.segments.len());
    for seg in &segments.segments {
        raw.push(1.0 - cosine(template, &seg.embedding)?);
    }
    let best = raw.iter().copied().fold(f64::INFINITY, f64::min);
    Ok((raw, best))
}

/// Sliding mean of `k` consecutive scores; output length `n - k + 1`.
/// When `k` exceeds the series length the series collapses to its single
/// global mean.
pub fn moving_average(raw: &[f64], k: usize) -> Result<Vec<f64>> {
    if k == 0 {
        return Err(Error::invalid("moving average window must be >= 1"));
    }
    if raw.is_empty() {
        return Err(Error::EmptyInput("moving average input"));
    }
    if k > raw.len() {
        return Ok(vec![raw.iter().sum::<f64>() / raw.len() as f64]);
    }
    Ok(raw
        .windows(k)
        .map(|w| w.iter().sum::<f64>() / k as f64)
        .collect())
}

/// Raw and smoothed per-window cost series.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreSeries {
    pub raw: Vec<f64>,
    pub smoothed: Vec<f64>,
    pub hop_ms: f32,
}

/// Score all windows against the template and smooth. Returns the series
/// and the detection statistic: the minimum of the smoothed costs.
pub fn score_segments(
    template: &Embedding,
    segments: &SegmentSequence,
    smooth_k: usize,
) -> Result<(ScoreSeries, f64)> {
    let (raw, _) = awe_cost(template, segments)?;
    let smoothed = moving_average(&raw, smooth_k)?;
    let best = smoothed.iter().copied().fold(f64::INFINITY, f64::min);
    Ok((
        ScoreSeries {
            raw,
            smoothed,
            hop_ms: segments.hop_ms,
        },
        best,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::FeatureKind;
    use proptest::prelude::*;

    fn matrix(frames: usize, dims: usize, fill: impl Fn(usize, usize) -> f32) -> FeatureMatrix {
        let mut data = Vec::with_capacity(frames * dims);
        for t in 0..frames {
            for d in 0..dims {
                data.push(fill(t, d));
            }
        }
        FeatureMatrix::new(frames, dims, data, 10.0, 25.0, FeatureKind::External).unwrap()
    }

    #[test]
    fn pad_or_clip_cases() {
        let m = matrix(100, 2, |t, _| t as f32);
        let clipped = pad_or_clip(&m, 80).unwrap();
        assert_eq!(clipped.frames(), 80);
        assert_eq!(clipped.row(0)[0], 10.0);
        assert_eq!(clipped.row(79)[0], 89.0);

        let short = matrix(60, 2, |t, _| t as f32 + 1.0);
        let padded = pad_or_clip(&short, 80).unwrap();
        assert_eq!(padded.frames(), 80);
        assert!(padded.row(9).iter().all(|&v| v == 0.0));
        assert_eq!(padded.row(10)[0], 1.0);
        assert_eq!(padded.row(69)[0], 60.0);
        assert!(padded.row(70).iter().all(|&v| v == 0.0));

        let same = pad_or_clip(&m, 100).unwrap();
        assert_eq!(same, m);

        assert!(pad_or_clip(&m, 0).is_err());
    }

    #[test]
    fn segment_count_follows_stride_arithmetic() {
        let embedder = ReferenceEmbedder;
        // 100 frames at 10 ms shift = 1.0 s; 0.8 s window, 0.1 s hop.
        let content = matrix(100, 3, |t, d| (t * 3 + d) as f32);
        let segs = segment_content(&content, 0.8, 0.1, &embedder).unwrap();
        assert_eq!(segs.window_frames, 80);
        assert_eq!(segs.hop_frames, 10);
        assert_eq!(segs.segments.len(), 3);
        assert_eq!(
            segs.segments.iter().map(|s| s.start_frame).collect::<Vec<_>>(),
            vec![0, 10, 20]
        );

        // Exactly one window long.
        let content = matrix(80, 3, |t, _| t as f32);
        let segs = segment_content(&content, 0.8, 0.1, &embedder).unwrap();
        assert_eq!(segs.segments.len(), 1);

        // Shorter than a window: single padded segment.
        let content = matrix(30, 3, |t, _| t as f32 + 1.0);
        let segs = segment_content(&content, 0.8, 0.1, &embedder).unwrap();
        assert_eq!(segs.segments.len(), 1);
        assert_eq!((segs.segments[0].start_frame, segs.segments[0].end_frame), (0, 29));
    }

    #[test]
    fn reference_embedder_pools_mean_and_std() {
        let constant = matrix(10, 2, |_, d| if d == 0 { 3.0 } else { -1.0 });
        let emb = ReferenceEmbedder.embed(0, &constant).unwrap();
        assert_eq!(emb.dim(), 4);
        // std half is zero for a constant segment
        assert_eq!(emd_round(emb.values()[2]), 0.0);
        assert_eq!(emd_round(emb.values()[3]), 0.0);
        assert!((emb.l2_norm() - 1.0).abs() < 1e-6);

        // order invariance
        let fwd = matrix(8, 2, |t, d| (t * 2 + d) as f32);
        let rev = matrix(8, 2, |t, d| ((7 - t) * 2 + d) as f32);
        let ef = ReferenceEmbedder.embed(0, &fwd).unwrap();
        let er = ReferenceEmbedder.embed(0, &rev).unwrap();
        for (a, b) in ef.values().iter().zip(er.values()) {
            assert!((a - b).abs() < 1e-6);
        }

        // determinism
        let e2 = ReferenceEmbedder.embed(0, &fwd).unwrap();
        assert_eq!(ef.values(), e2.values());
    }

    fn emd_round(v: f32) -> f32 {
        if v.abs() < 1e-12 {
            0.0
        } else {
            v
        }
    }

    #[test]
    fn awe_cost_identical_orthogonal_opposite() {
        let t = Embedding::new(vec![1.0, 0.0]).unwrap();
        let segs = SegmentSequence {
            segments: vec![
                Segment {
                    start_frame: 0,
                    end_frame: 9,
                    embedding: Embedding::new(vec![2.0, 0.0]).unwrap(),
                },
                Segment {
                    start_frame: 10,
                    end_frame: 19,
                    embedding: Embedding::new(vec![0.0, 1.0]).unwrap(),
                },
                Segment {
                    start_frame: 20,
                    end_frame: 29,
                    embedding: Embedding::new(vec![-3.0, 0.0]).unwrap(),
                },
            ],
            window_frames: 10,
            hop_frames: 10,
            hop_ms: 100.0,
        };
        let (raw, best) = awe_cost(&t, &segs).unwrap();
        assert!((raw[0] - 0.0).abs() < 1e-12);
        assert!((raw[1] - 1.0).abs() < 1e-12);
        assert!((raw[2] - 2.0).abs() < 1e-12);
        assert_eq!(best, raw[0]);
    }

    #[test]
    fn zero_norm_embedding_is_rejected() {
        let t = Embedding::new(vec![1.0, 0.0]).unwrap();
        let zero = Embedding::new(vec![0.0, 0.0]).unwrap();
        assert!(matches!(cosine(&t, &zero), Err(Error::ZeroVector(_))));
    }

    #[test]
    fn moving_average_cases() {
        assert_eq!(
            moving_average(&[0.0, 1.0, 2.0], 1).unwrap(),
            vec![0.0, 1.0, 2.0]
        );
        assert_eq!(moving_average(&[0.0, 1.0, 2.0], 2).unwrap(), vec![0.5, 1.5]);
        assert_eq!(moving_average(&[3.0; 5], 4).unwrap(), vec![3.0, 3.0]);
        // k beyond length falls back to the global mean
        assert_eq!(moving_average(&[1.0, 3.0], 5).unwrap(), vec![2.0]);
        assert!(moving_average(&[1.0], 0).is_err());
    }

    #[test]
    fn planted_window_scores_zero() {
        let keyword = matrix(80, 4, |t, d| ((t + 1) * (d + 2)) as f32 * 0.01);
        let embedder = ReferenceEmbedder;
        let template = embedder.embed(0, &keyword).unwrap();

        let filler = matrix(40, 4, |t, d| ((t * 7 + d * 3) % 11) as f32 * 0.1 + 0.5);
        let content = FeatureMatrix::concat(&[&filler, &keyword, &filler]).unwrap();
        let segs = segment_content(&content, 0.8, 0.1, &embedder).unwrap();
        let (_, best) = awe_cost(&template, &segs).unwrap();
        assert!(best < 1e-9, "best cost {best}");
    }

    proptest! {
        #[test]
        fn costs_stay_in_range_and_scale_invariant(
            tvals in proptest::collection::vec(-3.0f32..3.0, 4),
            svals in proptest::collection::vec(
                proptest::collection::vec(-3.0f32..3.0, 4), 1..6),
            scale in 0.01f32..100.0,
        ) {
            prop_assume!(tvals.iter().any(|&v| v.abs() > 1e-3));
            prop_assume!(svals.iter().all(|s| s.iter().any(|&v| v.abs() > 1e-3)));
            let template = Embedding::new(tvals.clone()).unwrap();
            let mk = |vals: &[Vec<f32>], scale: f32| SegmentSequence {
                segments: vals
                    .iter()
                    .enumerate()
                    .map(|(i, v)| Segment {
                        start_frame: i * 10,
                        end_frame: i * 10 + 9,
                        embedding: Embedding::new(
                            v.iter().map(|x| x * scale).collect()).unwrap(),
                    })
                    .collect(),
                window_frames: 10,
                hop_frames: 10,
                hop_ms: 100.0,
            };
            let (raw, best) = awe_cost(&template, &mk(&svals, 1.0)).unwrap();
            prop_assert!(raw.iter().all(|&c| (0.0..=2.0 + 1e-12).contains(&c)));
            prop_assert!((best - raw.iter().cloned().fold(f64::INFINITY, f64::min)).abs() < 1e-15);

            let (scaled, _) = awe_cost(&template, &mk(&svals, scale)).unwrap();
            for (a, b) in raw.iter().zip(&scaled) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }

        #[test]
        fn smoothing_respects_raw_bounds(
            raw in proptest::collection::vec(0.0f64..2.0, 1..20),
            k in 1usize..8,
        ) {
            let smoothed = moving_average(&raw, k).unwrap();
            let (lo, hi) = raw.iter().fold((f64::INFINITY, f64::NEG_INFINITY),
                |(lo, hi), &v| (lo.min(v), hi.max(v)));
            for &s in &smoothed {
                prop_assert!(s >= lo - 1e-12 && s <= hi + 1e-12);
            }
            if k <= raw.len() {
                prop_assert_eq!(smoothed.len(), raw.len() - k + 1);
            }
        }
    }
}
