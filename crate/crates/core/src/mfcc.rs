//! Mel-frequency cepstral coefficients.
//!
//! Each frame is pre-emphasized (0.97, frame-local so that frames depend only
//! on their own samples), Hamming windowed, zero-padded to the next power of
//! two, and reduced to the magnitude spectrum. Triangular HTK-mel filters
//! spanning 0 Hz to Nyquist pool the spectrum, the pooled energies are
//! log-compressed with a floor, and an orthonormal DCT-II keeps the first
//! `num_cepstra` coefficients.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::{num_complex::Complex, Fft, FftPlanner};

use crate::audio::AudioSignal;
use crate::error::{Error, Result};
use crate::features::FrameMatrix;
use crate::numerics::Matrix;

pub const PRE_EMPHASIS: f64 = 0.97;

#[derive(Debug, Clone, PartialEq)]
pub struct MfccConfig {
    pub window_length_s: f64,
    pub hop_length_s: f64,
    pub num_mel_filters: usize,
    pub num_cepstra: usize,
    pub log_floor: f64,
}

impl Default for MfccConfig {
    fn default() -> Self {
        Self {
            window_length_s: 0.025,
            hop_length_s: 0.010,
            num_mel_filters: 26,
            num_cepstra: 13,
            log_floor: 1e-10,
        }
    }
}

impl MfccConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.window_length_s > 0.0 && self.hop_length_s > 0.0) {
            return Err(Error::Config("window and hop must be positive".into()));
        }
        if self.hop_length_s > self.window_length_s {
            return Err(Error::Config("hop_length_s exceeds window_length_s".into()));
        }
        if self.num_cepstra == 0 || self.num_cepstra > self.num_mel_filters {
            return Err(Error::Config(
                "need 1 <= num_cepstra <= num_mel_filters".into(),
            ));
        }
        if !(self.log_floor > 0.0) {
            return Err(Error::Config("log_floor must be positive".into()));
        }
        Ok(())
    }

    pub fn window_samples(&self, sample_rate: u32) -> usize {
        (self.window_length_s * sample_rate as f64).round() as usize
    }

    pub fn hop_samples(&self, sample_rate: u32) -> usize {
        (self.hop_length_s * sample_rate as f64).round() as usize
    }
}

/// `1 + floor((L - W) / H)` for `L >= W`, else 0.
pub fn frame_count(samples: usize, window: usize, hop: usize) -> usize {
    if samples < window {
        0
    } else {
        1 + (samples - window) / hop
    }
}

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Precomputed window, filterbank and DCT for one sample rate.
pub struct MfccExtractor {
    cfg: MfccConfig,
    sample_rate: u32,
    window: Vec<f64>,
    fft_len: usize,
    fft: Arc<dyn Fft<f64>>,
    /// Per filter: first bin and the weights from there on.
    filters: Vec<(usize, Vec<f64>)>,
    dct: Vec<Vec<f64>>,
}

impl MfccExtractor {
    pub fn new(cfg: &MfccConfig, sample_rate: u32) -> Result<Self> {
        cfg.validate()?;
        let win = cfg.window_samples(sample_rate);
        let hop = cfg.hop_samples(sample_rate);
        if win < 2 || hop == 0 {
            return Err(Error::Config(format!(
                "window of {win} samples and hop of {hop} samples at {sample_rate} Hz"
            )));
        }
        let window = (0..win)
            .map(|n| 0.54 - 0.46 * (2.0 * PI * n as f64 / (win - 1) as f64).cos())
            .collect();
        let fft_len = win.next_power_of_two();
        let fft = FftPlanner::new().plan_fft_forward(fft_len);

        let m = cfg.num_mel_filters;
        let top = hz_to_mel(sample_rate as f64 / 2.0);
        let edges: Vec<f64> = (0..m + 2)
            .map(|i| mel_to_hz(top * i as f64 / (m + 1) as f64))
            .collect();
        let bin_hz = sample_rate as f64 / fft_len as f64;
        let filters = edges
            .windows(3)
            .map(|e| {
                let (lo, mid, hi) = (e[0], e[1], e[2]);
                let first = (lo / bin_hz).ceil() as usize;
                let last = ((hi / bin_hz).floor() as usize).min(fft_len / 2);
                let weights = (first..=last)
                    .map(|k| {
                        let f = k as f64 * bin_hz;
                        if f <= mid {
                            (f - lo) / (mid - lo)
                        } else {
                            (hi - f) / (hi - mid)
                        }
                        .max(0.0)
                    })
                    .collect();
                (first, weights)
            })
            .collect();

        let dct = (0..cfg.num_cepstra)
            .map(|k| {
                let scale = if k == 0 {
                    (1.0 / m as f64).sqrt()
                } else {
                    (2.0 / m as f64).sqrt()
                };
                (0..m)
                    .map(|j| scale * (PI * k as f64 * (j as f64 + 0.5) / m as f64).cos())
                    .collect()
            })
            .collect();

        Ok(Self {
            cfg: cfg.clone(),
            sample_rate,
            window,
            fft_len,
            fft,
            filters,
            dct,
        })
    }

    /// Cepstra of a single frame of exactly one window of samples.
    pub fn frame(&self, samples: &[f32], buf: &mut Vec<Complex<f64>>) -> Vec<f64> {
        buf.clear();
        buf.resize(self.fft_len, Complex::new(0.0, 0.0));
        let mut prev = samples[0] as f64;
        for (n, (&s, w)) in samples.iter().zip(&self.window).enumerate() {
            let s = s as f64;
            let emphasized = if n == 0 { s } else { s - PRE_EMPHASIS * prev };
            prev = s;
            buf[n] = Complex::new(emphasized * w, 0.0);
        }
        self.fft.process(buf);
        let log_mel: Vec<f64> = self
            .filters
            .iter()
            .map(|(first, weights)| {
                let e: f64 = weights
                    .iter()
                    .enumerate()
                    .map(|(i, w)| w * buf[first + i].norm())
                    .sum();
                e.max(self.cfg.log_floor).ln()
            })
            .collect();
        self.dct
            .iter()
            .map(|row| row.iter().zip(&log_mel).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn compute(&self, signal: &AudioSignal, utt_id: &str) -> Result<FrameMatrix> {
        if signal.sample_rate != self.sample_rate {
            return Err(Error::UnsupportedFormat(format!(
                "extractor built for {} Hz, signal is {} Hz",
                self.sample_rate, signal.sample_rate
            )));
        }
        let win = self.window.len();
        let hop = self.cfg.hop_samples(self.sample_rate);
        let n = frame_count(signal.samples.len(), win, hop);
        if n == 0 {
            return Err(Error::TooShort {
                samples: signal.samples.len(),
                window: win,
            });
        }
        let mut buf = Vec::with_capacity(self.fft_len);
        let mut data = Vec::with_capacity(n * self.cfg.num_cepstra);
        for f in 0..n {
            let start = f * hop;
            let c = self.frame(&signal.samples[start..start + win], &mut buf);
            data.extend(c.into_iter().map(|v| v as f32));
        }
        FrameMatrix::new(
            Matrix::new(n, self.cfg.num_cepstra, data)?,
            hop as f64 / self.sample_rate as f64,
            utt_id,
        )
    }
}

pub fn compute_mfcc(signal: &AudioSignal, cfg: &MfccConfig, utt_id: &str) -> Result<FrameMatrix> {
    MfccExtractor::new(cfg, signal.sample_rate)?.compute(signal, utt_id)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sine(freq: f64, len: usize, rate: u32) -> AudioSignal {
        let samples = (0..len)
            .map(|n| (0.5 * (2.0 * PI * freq * n as f64 / rate as f64).sin()) as f32)
            .collect();
        AudioSignal::new(samples, rate).unwrap()
    }

    /// Straight-line MFCC with an O(n²) DFT and no precomputation.
    fn naive_mfcc_frame(x: &[f32], rate: f64, cfg: &MfccConfig) -> Vec<f64> {
        let w = x.len();
        let nfft = w.next_power_of_two();
        let mut frame = vec![0.0f64; nfft];
        for n in 0..w {
            let pre = if n == 0 {
                x[0] as f64
            } else {
                x[n] as f64 - 0.97 * x[n - 1] as f64
            };
            let ham = 0.54 - 0.46 * (2.0 * PI * n as f64 / (w as f64 - 1.0)).cos();
            frame[n] = pre * ham;
        }
        let mag: Vec<f64> = (0..=nfft / 2)
            .map(|k| {
                let (mut re, mut im) = (0.0, 0.0);
                for (n, v) in frame.iter().enumerate() {
                    let ang = -2.0 * PI * (k * n) as f64 / nfft as f64;
                    re += v * ang.cos();
                    im += v * ang.sin();
                }
                (re * re + im * im).sqrt()
            })
            .collect();
        let m = cfg.num_mel_filters;
        let mel = |f: f64| 2595.0 * (1.0 + f / 700.0).log10();
        let inv = |m: f64| 700.0 * (10f64.powf(m / 2595.0) - 1.0);
        let mut logs = Vec::new();
        for i in 0..m {
            let lo = inv(mel(rate / 2.0) * i as f64 / (m + 1) as f64);
            let c = inv(mel(rate / 2.0) * (i + 1) as f64 / (m + 1) as f64);
            let hi = inv(mel(rate / 2.0) * (i + 2) as f64 / (m + 1) as f64);
            let mut e = 0.0;
            for (k, a) in mag.iter().enumerate() {
                let f = k as f64 * rate / nfft as f64;
                let tri = if f >= lo && f <= c {
                    (f - lo) / (c - lo)
                } else if f > c && f <= hi {
                    (hi - f) / (hi - c)
                } else {
                    0.0
                };
                e += tri * a;
            }
            logs.push(e.max(cfg.log_floor).ln());
        }
        (0..cfg.num_cepstra)
            .map(|k| {
                let s: f64 = (0..m)
                    .map(|j| logs[j] * (PI * k as f64 * (2 * j + 1) as f64 / (2 * m) as f64).cos())
                    .sum();
                s * if k == 0 { (1.0 / m as f64).sqrt() } else { (2.0 / m as f64).sqrt() }
            })
            .collect()
    }

    #[test]
    fn frame_count_formula() {
        assert_eq!(frame_count(400, 400, 160), 1);
        assert_eq!(frame_count(399, 400, 160), 0);
        assert_eq!(frame_count(720, 400, 160), 3);
        let sig = sine(440.0, 400, 16000);
        let f = compute_mfcc(&sig, &MfccConfig::default(), "u").unwrap();
        assert_eq!(f.num_frames(), 1);
        assert_eq!(f.dim(), 13);
        assert!((f.frame_period_s - 0.01).abs() < 1e-12);
    }

    #[test]
    fn too_short() {
        let sig = sine(440.0, 100, 16000);
        assert!(matches!(
            compute_mfcc(&sig, &MfccConfig::default(), "u"),
            Err(Error::TooShort { samples: 100, window: 400 })
        ));
    }

    #[test]
    fn silence_gives_identical_frames() {
        let sig = AudioSignal::new(vec![0.0; 1600], 16000).unwrap();
        let f = compute_mfcc(&sig, &MfccConfig::default(), "u").unwrap();
        let first = f.values.row(0).to_vec();
        for row in f.values.row_iter() {
            assert_eq!(row, first.as_slice());
        }
        // log floor through the DCT: only c0 is non-zero
        let expected_c0 = (26f64).sqrt() * 1e-10f64.ln();
        assert!((first[0] as f64 - expected_c0).abs() < 1e-3);
    }

    #[test]
    fn sine_matches_naive_oracle() {
        let cfg = MfccConfig::default();
        let sig = sine(1000.0, 16000 / 4, 16000);
        let f = compute_mfcc(&sig, &cfg, "u").unwrap();
        for i in 1..f.num_frames() - 1 {
            let start = i * 160;
            let oracle = naive_mfcc_frame(&sig.samples[start..start + 400], 16000.0, &cfg);
            for (a, b) in f.values.row(i).iter().zip(&oracle) {
                assert!((*a as f64 - b).abs() < 1e-3, "frame {i}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn shift_by_hops_shifts_frames() {
        let cfg = MfccConfig::default();
        let sig = sine(700.0, 4000, 16000);
        let full = compute_mfcc(&sig, &cfg, "u").unwrap();
        for hops in [1usize, 3, 7] {
            let shifted = AudioSignal::new(sig.samples[hops * 160..].to_vec(), 16000).unwrap();
            let part = compute_mfcc(&shifted, &cfg, "u").unwrap();
            for i in 0..part.num_frames() {
                for (a, b) in part.values.row(i).iter().zip(full.values.row(i + hops)) {
                    assert!((a - b).abs() < 1e-5);
                }
            }
        }
    }

    #[test]
    fn config_validation() {
        let mut cfg = MfccConfig::default();
        cfg.hop_length_s = 0.05;
        assert!(cfg.validate().is_err());
        let mut cfg = MfccConfig::default();
        cfg.num_cepstra = 30;
        assert!(cfg.validate().is_err());
    }
}
