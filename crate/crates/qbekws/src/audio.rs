//! Audio ingestion and frame-level feature extraction.
//!
//! The pipeline accepts mono 16 kHz 16-bit PCM WAV only. Internal features
//! are log mel filterbank energies (Fbank) and MFCCs; externally computed
//! frame features enter through [`crate::io`] as `FeatureKind::External`.

use std::path::Path;

use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sample rate required of every pipeline input, in Hz.
pub const SAMPLE_RATE: u32 = 16_000;

/// Floor applied to mel energies before the natural log.
pub const LOG_FLOOR: f64 = 1e-10;

/// Pre-emphasis coefficient for the Fbank/MFCC chain.
pub const PRE_EMPHASIS: f64 = 0.97;

/// Mono audio, samples normalized to [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    pub samples: Vec<f32>,
    pub sample_rate: u32,
}

impl AudioBuffer {
    /// Wrap raw samples, checking the normalization and sample-rate invariants.
    pub fn new(samples: Vec<f32>, sample_rate: u32) -> Result<Self> {
        if sample_rate != SAMPLE_RATE {
            return Err(Error::SampleRate {
                found: sample_rate,
                required: SAMPLE_RATE,
            });
        }
        if samples.iter().any(|s| !s.is_finite() || s.abs() > 1.0) {
            return Err(Error::invalid("samples must be finite and within [-1, 1]"));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

/// Analysis framing and feature dimensionality.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FramingConfig {
    /// Window length in milliseconds.
    pub window_ms: f32,
    /// Frame shift in milliseconds.
    pub shift_ms: f32,
    /// Mel filter count for the Fbank path.
    pub n_mels: usize,
    /// Cepstral coefficient count for the MFCC path. The MFCC mel bank uses
    /// `max(n_mels, n_mfcc)` filters so the DCT always has enough inputs.
    pub n_mfcc: usize,
}

impl Default for FramingConfig {
    fn default() -> Self {
        Self {
            window_ms: 25.0,
            shift_ms: 10.0,
            n_mels: 64,
            n_mfcc: 40,
        }
    }
}

impl FramingConfig {
    pub fn window_samples(&self, sample_rate: u32) -> usize {
        (self.window_ms as f64 * sample_rate as f64 / 1000.0).round() as usize
    }

    pub fn shift_samples(&self, sample_rate: u32) -> usize {
        (self.shift_ms as f64 * sample_rate as f64 / 1000.0).round() as usize
    }

    fn validate(&self) -> Result<()> {
        if !(self.shift_ms > 0.0) || self.window_ms < self.shift_ms {
            return Err(Error::invalid("need window_ms >= shift_ms > 0"));
        }
        if self.n_mels == 0 || self.n_mfcc == 0 {
            return Err(Error::invalid("n_mels and n_mfcc must be positive"));
        }
        Ok(())
    }
}

/// What a feature matrix holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Fbank,
    Mfcc,
    /// Externally computed frame features (e.g. stacked neural features)
    /// ingested from file; the DSP chain never produces this kind.
    External,
}

impl FeatureKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            FeatureKind::Fbank => "fbank",
            FeatureKind::Mfcc => "mfcc",
            FeatureKind::External => "external",
        }
    }

    /// One frame of what the extractor emits for digital silence.
    ///
    /// Fbank: the log floor in every band. MFCC: the DCT of a constant
    /// log-floor row over the default 64-filter bank (only coefficient 0 is
    /// nonzero). External features have no known silence point; zeros.
    pub fn silence_row(&self, dims: usize) -> Vec<f32> {
        match self {
            FeatureKind::Fbank => vec![LOG_FLOOR.ln() as f32; dims],
            FeatureKind::Mfcc => {
                let mut row = vec![0.0; dims];
                if dims > 0 {
                    row[0] = (64.0f64.sqrt() * LOG_FLOOR.ln()) as f32;
                }
                row
            }
            FeatureKind::External => vec![0.0; dims],
        }
    }
}

impl std::str::FromStr for FeatureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fbank" => Ok(FeatureKind::Fbank),
            "mfcc" => Ok(FeatureKind::Mfcc),
            "external" => Ok(FeatureKind::External),
            other => Err(Error::invalid(format!("unknown feature kind {other:?}"))),
        }
    }
}

/// Time-major matrix of frame feature vectors plus framing metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    frames: usize,
    dims: usize,
    data: Vec<f32>,
    pub shift_ms: f32,
    pub window_ms: f32,
    pub kind: FeatureKind,
}

impl FeatureMatrix {
    pub fn new(
        frames: usize,
        dims: usize,
        data: Vec<f32>,
        shift_ms: f32,
        window_ms: f32,
        kind: FeatureKind,
    ) -> Result<Self> {
        if data.len() != frames * dims {
            return Err(Error::invalid(format!(
                "data length {} != frames {frames} * dims {dims}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("feature matrix entries must be finite"));
        }
        Ok(Self {
            frames,
            dims,
            data,
            shift_ms,
            window_ms,
            kind,
        })
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn row(&self, t: usize) -> &[f32] {
        &self.data[t * self.dims..(t + 1) * self.dims]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f32]> {
        self.data.chunks_exact(self.dims.max(1))
    }

    pub fn is_empty(&self) -> bool {
        self.frames == 0
    }

    /// Frame count covering `seconds` at this matrix's shift.
    pub fn frames_for_duration(&self, seconds: f64) -> usize {
        (seconds * 1000.0 / self.shift_ms as f64).round() as usize
    }

    /// Copy of the inclusive frame span `[start, end]`.
    pub fn slice_frames(&self, start: usize, end: usize) -> Result<Self> {
        if start > end || end >= self.frames {
            return Err(Error::InvalidSpan {
                start,
                end,
                frames: self.frames,
            });
        }
        let data = self.data[start * self.dims..(end + 1) * self.dims].to_vec();
        Ok(Self {
            frames: end - start + 1,
            dims: self.dims,
            data,
            shift_ms: self.shift_ms,
            window_ms: self.window_ms,
            kind: self.kind,
        })
    }

    /// Concatenate parts along the time axis. All parts must agree on
    /// dims, kind and framing.
    pub fn concat(parts: &[&FeatureMatrix]) -> Result<Self> {
        let first = parts.first().ok_or(Error::EmptyInput("concat"))?;
        let mut data = Vec::new();
        let mut frames = 0;
        for p in parts {
            if p.dims != first.dims || p.kind != first.kind {
                return Err(Error::InconsistentFeatures(format!(
                    "{}x{} {} vs {}x{} {}",
                    p.frames,
                    p.dims,
                    p.kind.as_str(),
                    first.frames,
                    first.dims,
                    first.kind.as_str()
                )));
            }
            data.extend_from_slice(&p.data);
            frames += p.frames;
        }
        Ok(Self {
            frames,
            dims: first.dims,
            data,
            shift_ms: first.shift_ms,
            window_ms: first.window_ms,
            kind: first.kind,
        })
    }
}

// ---------------------------------------------------------------------------
// WAV ingestion
// ---------------------------------------------------------------------------

/// Load a mono 16 kHz 16-bit PCM RIFF/WAVE file.
pub fn load_wav(path: impl AsRef<Path>) -> Result<AudioBuffer> {
    let bytes = std::fs::read(path)?;
    parse_wav(&bytes)
}

/// Parse WAV bytes. See [`load_wav`].
pub fn parse_wav(bytes: &[u8]) -> Result<AudioBuffer> {
    if bytes.len() < 12 {
        return Err(Error::TruncatedWav("shorter than the RIFF header"));
    }
    if &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(Error::NotWave);
    }

    let mut fmt: Option<(u16, u16, u32, u16)> = None; // tag, channels, rate, bits
    let mut data: Option<&[u8]> = None;
    let mut pos = 12;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32::from_le_bytes(bytes[pos + 4..pos + 8].try_into().unwrap()) as usize;
        let body_start = pos + 8;
        if body_start + size > bytes.len() {
            return Err(Error::TruncatedWav("chunk extends past end of file"));
        }
        let body = &bytes[body_start..body_start + size];
        match id {
            b"fmt " => {
                if size < 16 {
                    return Err(Error::TruncatedWav("fmt chunk shorter than 16 bytes"));
                }
                let tag = u16::from_le_bytes(body[0..2].try_into().unwrap());
                let channels = u16::from_le_bytes(body[2..4].try_into().unwrap());
                let rate = u32::from_le_bytes(body[4..8].try_into().unwrap());
                let bits = u16::from_le_bytes(body[14..16].try_into().unwrap());
                fmt = Some((tag, channels, rate, bits));
            }
            b"data" => data = Some(body),
            _ => {}
        }
        // Chunks are word-aligned; odd sizes carry one pad byte.
        pos = body_start + size + (size & 1);
    }

    let (tag, channels, rate, bits) = fmt.ok_or(Error::TruncatedWav("missing fmt chunk"))?;
    if tag != 1 {
        return Err(Error::NonPcmEncoding(tag));
    }
    if channels != 1 {
        return Err(Error::MultiChannel(channels));
    }
    if rate != SAMPLE_RATE {
        return Err(Error::SampleRate {
            found: rate,
            required: SAMPLE_RATE,
        });
    }
    if bits != 16 {
        return Err(Error::BitDepth(bits));
    }
    let data = data.ok_or(Error::TruncatedWav("missing data chunk"))?;
    if data.len() % 2 != 0 {
        return Err(Error::TruncatedWav("data chunk holds a partial sample"));
    }

    let samples = data
        .chunks_exact(2)
        .map(|b| i16::from_le_bytes([b[0], b[1]]) as f32 / 32768.0)
        .collect();
    Ok(AudioBuffer {
        samples,
        sample_rate: SAMPLE_RATE,
    })
}

/// Write a buffer as mono 16 kHz 16-bit PCM WAV. Inverse of [`load_wav`]
/// up to i16 quantization; buffers that came from `load_wav` round-trip
/// exactly.
pub fn write_wav(path: impl AsRef<Path>, audio: &AudioBuffer) -> Result<()> {
    let n = audio.samples.len();
    let data_bytes = (n * 2) as u32;
    let mut out = Vec::with_capacity(44 + n * 2);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_bytes).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes()); // PCM
    out.extend_from_slice(&1u16.to_le_bytes()); // mono
    out.extend_from_slice(&audio.sample_rate.to_le_bytes());
    out.extend_from_slice(&(audio.sample_rate * 2).to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_bytes.to_le_bytes());
    for &s in &audio.samples {
        let v = (s as f64 * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        out.extend_from_slice(&v.to_le_bytes());
    }
    std::fs::write(path, out)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Feature extraction
// ---------------------------------------------------------------------------

/// Log mel filterbank energies, `T x n_mels`.
///
/// Chain: pre-emphasis 0.97 over the whole signal, Hamming window,
/// magnitude FFT (size = next power of two >= window), triangular mel
/// filters spanning 0..8000 Hz, natural log with floor 1e-10.
pub fn log_fbank(audio: &AudioBuffer, cfg: &FramingConfig) -> Result<FeatureMatrix> {
    cfg.validate()?;
    let log_mel = log_mel_energies(audio, cfg, cfg.n_mels)?;
    let frames = log_mel.len();
    let data = log_mel
        .into_iter()
        .flat_map(|row| row.into_iter().map(|v| v as f32))
        .collect();
    FeatureMatrix::new(
        frames,
        cfg.n_mels,
        data,
        cfg.shift_ms,
        cfg.window_ms,
        FeatureKind::Fbank,
    )
}

/// MFCCs, `T x n_mfcc`: orthonormal DCT-II of the log mel energies over a
/// `max(n_mels, n_mfcc)` filter bank, keeping coefficients `0..n_mfcc`.
pub fn mfcc(audio: &AudioBuffer, cfg: &FramingConfig) -> Result<FeatureMatrix> {
    cfg.validate()?;
    let n_filters = cfg.n_mels.max(cfg.n_mfcc);
    let log_mel = log_mel_energies(audio, cfg, n_filters)?;
    let frames = log_mel.len();
    let dct = DctII::new(n_filters);
    let mut data = Vec::with_capacity(frames * cfg.n_mfcc);
    for row in &log_mel {
        let coeffs = dct.transform(row, cfg.n_mfcc);
        data.extend(coeffs.into_iter().map(|v| v as f32));
    }
    FeatureMatrix::new(
        frames,
        cfg.n_mfcc,
        data,
        cfg.shift_ms,
        cfg.window_ms,
        FeatureKind::Mfcc,
    )
}

fn log_mel_energies(
    audio: &AudioBuffer,
    cfg: &FramingConfig,
    n_filters: usize,
) -> Result<Vec<Vec<f64>>> {
    let window = cfg.window_samples(audio.sample_rate);
    let shift = cfg.shift_samples(audio.sample_rate);
    let n = audio.samples.len();
    if n < window {
        return Err(Error::AudioTooShort { samples: n, window });
    }
    let n_frames = 1 + (n - window) / shift;
    let n_fft = window.next_power_of_two();
    let n_bins = n_fft / 2 + 1;

    // Pre-emphasis over the whole signal; the first sample passes through.
    let mut emphasized = Vec::with_capacity(n);
    emphasized.push(audio.samples[0] as f64);
    for i in 1..n {
        emphasized.push(audio.samples[i] as f64 - PRE_EMPHASIS * audio.samples[i - 1] as f64);
    }

    let hamming = hamming_window(window);
    let bank = mel_filterbank(n_filters, n_fft, audio.sample_rate, 0.0, 8000.0);

    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(n_fft);
    let mut buf = vec![Complex::new(0.0, 0.0); n_fft];
    let mut magnitude = vec![0.0f64; n_bins];

    let mut out = Vec::with_capacity(n_frames);
    for t in 0..n_frames {
        let start = t * shift;
        for i in 0..n_fft {
            let v = if i < window {
                emphasized[start + i] * hamming[i]
            } else {
                0.0
            };
            buf[i] = Complex::new(v, 0.0);
        }
        fft.process(&mut buf);
        for (k, m) in magnitude.iter_mut().enumerate() {
            *m = buf[k].norm();
        }
        let row = bank
            .iter()
            .map(|filter| {
                let energy: f64 = filter
                    .iter()
                    .zip(&magnitude)
                    .map(|(w, m)| w * m)
                    .sum();
                energy.max(LOG_FLOOR).ln()
            })
            .collect();
        out.push(row);
    }
    Ok(out)
}

fn hamming_window(len: usize) -> Vec<f64> {
    let denom = (len.saturating_sub(1)).max(1) as f64;
    (0..len)
        .map(|i| 0.54 - 0.46 * (2.0 * std::f64::consts::PI * i as f64 / denom).cos())
        .collect()
}

pub(crate) fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub(crate) fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular mel filters over FFT bin frequencies, peak weight 1.
pub(crate) fn mel_filterbank(
    n_filters: usize,
    n_fft: usize,
    sample_rate: u32,
    f_lo: f64,
    f_hi: f64,
) -> Vec<Vec<f64>> {
    let n_bins = n_fft / 2 + 1;
    let mel_lo = hz_to_mel(f_lo);
    let mel_hi = hz_to_mel(f_hi);
    let edges: Vec<f64> = (0..n_filters + 2)
        .map(|i| mel_to_hz(mel_lo + (mel_hi - mel_lo) * i as f64 / (n_filters + 1) as f64))
        .collect();

    let bin_hz = sample_rate as f64 / n_fft as f64;
    (0..n_filters)
        .map(|m| {
            let (left, center, right) = (edges[m], edges[m + 1], edges[m + 2]);
            (0..n_bins)
                .map(|k| {
                    let f = k as f64 * bin_hz;
                    if f > left && f <= center && center > left {
                        (f - left) / (center - left)
                    } else if f > center && f < right && right > center {
                        (right - f) / (right - center)
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect()
}

/// Orthonormal DCT-II with precomputed basis.
struct DctII {
    n: usize,
    basis: Vec<f64>, // k-major: basis[k*n + i] = scale_k * cos(pi*k*(2i+1)/(2n))
}

impl DctII {
    fn new(n: usize) -> Self {
        let mut basis = vec![0.0; n * n];
        for k in 0..n {
            let scale = if k == 0 {
                (1.0 / n as f64).sqrt()
            } else {
                (2.0 / n as f64).sqrt()
            };
            for i in 0..n {
                basis[k * n + i] = scale
                    * (std::f64::consts::PI * k as f64 * (2 * i + 1) as f64 / (2 * n) as f64)
                        .cos();
            }
        }
        Self { n, basis }
    }

    fn transform(&self, input: &[f64], keep: usize) -> Vec<f64> {
        debug_assert_eq!(input.len(), self.n);
        (0..keep.min(self.n))
            .map(|k| {
                self.basis[k * self.n..(k + 1) * self.n]
                    .iter()
                    .zip(input)
                    .map(|(b, x)| b * x)
                    .sum()
            })
            .collect()
    }
}
