//! Template fusion: collapse several enrollment examples into one
//! representative template.
//!
//! Frame-level templates are fused by aligning every non-master template
//! onto a master with DTW and averaging the aligned frames per master
//! position. Fixed-dimension embeddings are fused by arithmetic mean.

use crate::audio::FeatureMatrix;
use crate::awe::Embedding;
use crate::dtw::dtw_align;
use crate::error::{Error, Result};

/// How aligned frames are pooled onto a master frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FusionStrategy {
    /// Average each template's aligned frames first, then average those
    /// per-template means with the master frame. A template that maps many
    /// frames onto one master position contributes one vote, not many.
    #[default]
    PerTemplate,
    /// Pool every aligned frame from every template into one flat mean
    /// together with the master frame.
    FlatPool,
}

/// Which template was the master and how well the rest aligned to it.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionReport {
    pub master_index: usize,
    /// Accumulated DTW cost of each template against the master, in input
    /// order; the master's own entry is zero.
    pub per_template_cost: Vec<f64>,
}

/// Fuse with the default per-template pooling.
pub fn fuse_frame_templates(
    templates: &[FeatureMatrix],
    master_index: usize,
) -> Result<(FeatureMatrix, FusionReport)> {
    fuse_frame_templates_with(templates, master_index, FusionStrategy::PerTemplate)
}

pub fn fuse_frame_templates_with(
    templates: &[FeatureMatrix],
    master_index: usize,
    strategy: FusionStrategy,
) -> Result<(FeatureMatrix, FusionReport)> {
    let first = templates.first().ok_or(Error::EmptyInput("templates"))?;
    if master_index >= templates.len() {
        return Err(Error::invalid(format!(
            "master index {master_index} out of range for {} templates",
            templates.len()
        )));
    }
    for t in templates {
        if t.dims() != first.dims() || t.kind != first.kind {
            return Err(Error::InconsistentFeatures(format!(
                "{} dims {} vs {} dims {}",
                t.kind.as_str(),
                t.dims(),
                first.kind.as_str(),
                first.dims()
            )));
        }
        if t.is_empty() {
            return Err(Error::EmptyInput("template"));
        }
    }

    let master = &templates[master_index];
    let (tm, dims) = (master.frames(), master.dims());

    // acc[m] accumulates one master vote plus one vote per pooled source.
    let mut acc = vec![0.0f64; tm * dims];
    let mut votes = vec![1.0f64; tm];
    for m in 0..tm {
        for (d, v) in master.row(m).iter().enumerate() {
            acc[m * dims + d] += *v as f64;
        }
    }

    let mut per_template_cost = vec![0.0f64; templates.len()];
    for (t_idx, template) in templates.iter().enumerate() {
        if t_idx == master_index {
            continue;
        }
        let (cost, path) = dtw_align(template, master)?;
        per_template_cost[t_idx] = cost;

        // Group this template's frames by the master frame they aligned to.
        let mut sums = vec![0.0f64; tm * dims];
        let mut counts = vec![0usize; tm];
        for &(i, m) in &path.pairs {
            for (d, v) in template.row(i).iter().enumerate() {
                sums[m * dims + d] += *v as f64;
            }
            counts[m] += 1;
        }
        for m in 0..tm {
            match strategy {
                FusionStrategy::PerTemplate => {
                    let n = counts[m] as f64;
                    for d in 0..dims {
                        acc[m * dims + d] += sums[m * dims + d] / n;
                    }
                    votes[m] += 1.0;
                }
                FusionStrategy::FlatPool => {
                    for d in 0..dims {
                        acc[m * dims + d] += sums[m * dims + d];
                    }
                    votes[m] += counts[m] as f64;
                }
            }
        }
    }

    let mut data = Vec::with_capacity(tm * dims);
    for m in 0..tm {
        for d in 0..dims {
            data.push((acc[m * dims + d] / votes[m]) as f32);
        }
    }
    let fused = FeatureMatrix::new(
        tm,
        dims,
        data,
        master.shift_ms,
        master.window_ms,
        master.kind,
    )?;
    Ok((
        fused,
        FusionReport {
            master_index,
            per_template_cost,
        },
    ))
}

/// Arithmetic mean of equal-dimension embeddings.
pub fn fuse_embeddings(embeddings: &[Embedding]) -> Result<Embedding> {
    let first = embeddings.first().ok_or(Error::EmptyInput("embeddings"))?;
    let dim = first.dim();
    let mut acc = vec![0.0f64; dim];
    for e in embeddings {
        if e.dim() != dim {
            return Err(Error::DimensionMismatch {
                left: e.dim(),
                right: dim,
            });
        }
        for (a, v) in acc.iter_mut().zip(e.values()) {
            *a += *v as f64;
        }
    }
    let n = embeddings.len() as f64;
    Embedding::new(acc.into_iter().map(|v| (v / n) as f32).collect())
}
