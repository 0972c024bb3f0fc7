//! Acoustic input matrices: 40-dim log-Mel filterbank with 25 ms Hamming
//! windows and 10 ms shift, per-speaker Z-normalization, an optional
//! Mel-scaled F0 channel, and direct synthesis of feature matrices for the
//! synthetic corpora.

pub mod tpf;
pub mod wav;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rustfft::{num_complex::Complex, FftPlanner};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use thiserror::Error;

use crate::ipa::IpaSymbol;

pub const NUM_MEL_CHANNELS: usize = 40;
pub const WINDOW_MS: f64 = 25.0;
pub const SHIFT_MS: f64 = 10.0;
const LOG_FLOOR: f64 = 1e-10;
const F0_MIN_HZ: f64 = 50.0;
const F0_MAX_HZ: f64 = 500.0;
const VOICING_THRESHOLD: f64 = 0.3;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("waveform too short: {samples} samples, need at least {window}")]
    TooShort { samples: usize, window: usize },
    #[error("non-finite sample at index {index}")]
    NonFiniteSample { index: usize },
    #[error("negative frequency {value}")]
    NegativeFrequency { value: f64 },
    #[error("frame count mismatch: {frames} feature frames vs {f0} pitch frames")]
    LengthMismatch { frames: usize, f0: usize },
    #[error("unsupported sample rate {rate} (expected 8000 or 16000)")]
    BadSampleRate { rate: u32 },
    #[error("no spectral template for phone `{symbol}`")]
    UnknownTemplate { symbol: String },
    #[error("{path}: {message}")]
    BadFormat { path: String, message: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

/// One utterance's T x F acoustic input.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub utt_id: String,
    pub speaker_id: String,
    pub frames: Array2<f64>,
}

impl FeatureMatrix {
    pub fn num_frames(&self) -> usize {
        self.frames.nrows()
    }

    pub fn num_channels(&self) -> usize {
        self.frames.ncols()
    }
}

/// HTK Mel scale: `2595 * log10(1 + f/700)`.
pub fn hz_to_mel(f: f64) -> Result<f64, FeatureError> {
    if f < 0.0 {
        return Err(FeatureError::NegativeFrequency { value: f });
    }
    Ok(2595.0 * (1.0 + f / 700.0).log10())
}

pub fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

fn window_samples(sample_rate: u32) -> usize {
    (sample_rate as f64 * WINDOW_MS / 1000.0).round() as usize
}

fn shift_samples(sample_rate: u32) -> usize {
    (sample_rate as f64 * SHIFT_MS / 1000.0).round() as usize
}

fn check_rate(sample_rate: u32) -> Result<(), FeatureError> {
    if sample_rate == 8000 || sample_rate == 16000 {
        Ok(())
    } else {
        Err(FeatureError::BadSampleRate { rate: sample_rate })
    }
}

/// Frame count of the 25 ms / 10 ms grid: `1 + floor((n - win) / shift)`.
pub fn frame_count(num_samples: usize, sample_rate: u32) -> Result<usize, FeatureError> {
    let win = window_samples(sample_rate);
    if num_samples < win {
        return Err(FeatureError::TooShort {
            samples: num_samples,
            window: win,
        });
    }
    Ok(1 + (num_samples - win) / shift_samples(sample_rate))
}

/// Center frequencies (Hz) of the 40 triangular filters.
pub fn filterbank_centers(sample_rate: u32) -> Vec<f64> {
    let mel_hi = hz_to_mel(sample_rate as f64 / 2.0).expect("nyquist is positive");
    (1..=NUM_MEL_CHANNELS)
        .map(|m| mel_to_hz(mel_hi * m as f64 / (NUM_MEL_CHANNELS + 1) as f64))
        .collect()
}

/// 40-dim log-Mel filterbank features on the 25 ms / 10 ms grid.
///
/// Filterbank energies are floored at a small positive constant before the
/// natural log, so silence maps to `ln(1e-10)` rather than minus infinity.
pub fn log_mel(samples: &[f64], sample_rate: u32) -> Result<Array2<f64>, FeatureError> {
    check_rate(sample_rate)?;
    if let Some(index) = samples.iter().position(|s| !s.is_finite()) {
        return Err(FeatureError::NonFiniteSample { index });
    }
    let win = window_samples(sample_rate);
    let shift = shift_samples(sample_rate);
    let frames = frame_count(samples.len(), sample_rate)?;
    let nfft = win.next_power_of_two();
    let num_bins = nfft / 2 + 1;

    let hamming: Vec<f64> = (0..win)
        .map(|n| 0.54 - 0.46 * (2.0 * std::f64::consts::PI * n as f64 / (win - 1) as f64).cos())
        .collect();

    // Triangle weights per (channel, bin) on the Mel-spaced grid.
    let mel_hi = hz_to_mel(sample_rate as f64 / 2.0)?;
    let points: Vec<f64> = (0..NUM_MEL_CHANNELS + 2)
        .map(|m| mel_to_hz(mel_hi * m as f64 / (NUM_MEL_CHANNELS + 1) as f64))
        .collect();
    let bin_hz: Vec<f64> = (0..num_bins)
        .map(|k| k as f64 * sample_rate as f64 / nfft as f64)
        .collect();
    let mut weights = Array2::<f64>::zeros((NUM_MEL_CHANNELS, num_bins));
    for ch in 0..NUM_MEL_CHANNELS {
        let (lo, mid, hi) = (points[ch], points[ch + 1], points[ch + 2]);
        for (k, &hz) in bin_hz.iter().enumerate() {
            if hz > lo && hz < hi {
                let w = if hz <= mid {
                    (hz - lo) / (mid - lo)
                } else {
                    (hi - hz) / (hi - mid)
                };
                weights[[ch, k]] = w;
            }
        }
    }

    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(nfft);
    let mut out = Array2::<f64>::zeros((frames, NUM_MEL_CHANNELS));
    let mut buf = vec![Complex::new(0.0, 0.0); nfft];
    for t in 0..frames {
        let start = t * shift;
        for (n, slot) in buf.iter_mut().enumerate() {
            let v = if n < win {
                samples[start + n] * hamming[n]
            } else {
                0.0
            };
            *slot = Complex::new(v, 0.0);
        }
        fft.process(&mut buf);
        let power: Vec<f64> = buf[..num_bins]
            .iter()
            .map(|c| c.norm_sqr() / nfft as f64)
            .collect();
        for ch in 0..NUM_MEL_CHANNELS {
            let mut energy = 0.0;
            for k in 0..num_bins {
                energy += weights[[ch, k]] * power[k];
            }
            out[[t, ch]] = energy.max(LOG_FLOOR).ln();
        }
    }
    Ok(out)
}

/// Per-frame F0 in Hz on the same frame grid as [`log_mel`], 0 for unvoiced.
///
/// Normalized autocorrelation with a 0.3 voicing threshold, search range
/// 50-500 Hz, parabolic peak refinement. Among near-equal periodic peaks the
/// smallest lag wins, so pulse trains resolve to their fundamental.
pub fn extract_f0(samples: &[f64], sample_rate: u32) -> Result<Vec<f64>, FeatureError> {
    check_rate(sample_rate)?;
    if let Some(index) = samples.iter().position(|s| !s.is_finite()) {
        return Err(FeatureError::NonFiniteSample { index });
    }
    let win = window_samples(sample_rate);
    let shift = shift_samples(sample_rate);
    let frames = frame_count(samples.len(), sample_rate)?;
    let lag_min = (sample_rate as f64 / F0_MAX_HZ).ceil() as usize;
    let lag_max = ((sample_rate as f64 / F0_MIN_HZ).floor() as usize).min(win - 1);

    let mut out = vec![0.0; frames];
    let mut r = vec![0.0; lag_max + 2];
    for t in 0..frames {
        let frame = &samples[t * shift..t * shift + win];
        let energy: f64 = frame.iter().map(|x| x * x).sum();
        if energy < 1e-8 {
            continue;
        }
        for (lag, slot) in r.iter_mut().enumerate() {
            if lag < lag_min.saturating_sub(1) || lag > lag_max + 1 || lag >= win {
                *slot = 0.0;
                continue;
            }
            let overlap = win - lag;
            let mut num = 0.0;
            let mut e0 = 0.0;
            let mut e1 = 0.0;
            for i in 0..overlap {
                num += frame[i] * frame[i + lag];
                e0 += frame[i] * frame[i];
                e1 += frame[i + lag] * frame[i + lag];
            }
            *slot = if e0 > 0.0 && e1 > 0.0 {
                num / (e0 * e1).sqrt()
            } else {
                0.0
            };
        }
        // Local maxima above threshold; near-equal peaks resolve to the
        // smallest lag (the fundamental of a periodic signal).
        let mut best: Option<(usize, f64)> = None;
        for lag in lag_min..=lag_max {
            if r[lag] >= r[lag - 1] && r[lag] >= r[lag + 1] && r[lag] > VOICING_THRESHOLD {
                match best {
                    Some((_, b)) if r[lag] <= b + 0.02 => {}
                    _ => {
                        if best.map_or(true, |(_, b)| r[lag] > b + 0.02) {
                            best = Some((lag, r[lag]));
                        }
                    }
                }
            }
        }
        if let Some((lag, _)) = best {
            let refined = if lag > lag_min && lag < lag_max {
                let (ym, y0, yp) = (r[lag - 1], r[lag], r[lag + 1]);
                let denom = ym - 2.0 * y0 + yp;
                if denom.abs() > 1e-12 {
                    lag as f64 + 0.5 * (ym - yp) / denom
                } else {
                    lag as f64
                }
            } else {
                lag as f64
            };
            out[t] = (sample_rate as f64 / refined).clamp(F0_MIN_HZ, F0_MAX_HZ);
        }
    }
    Ok(out)
}

/// Append a Mel-scaled F0 column (0 for unvoiced frames) as channel 41.
pub fn append_f0(mel: &Array2<f64>, f0_hz: &[f64]) -> Result<Array2<f64>, FeatureError> {
    if mel.nrows() != f0_hz.len() {
        return Err(FeatureError::LengthMismatch {
            frames: mel.nrows(),
            f0: f0_hz.len(),
        });
    }
    let mut out = Array2::<f64>::zeros((mel.nrows(), mel.ncols() + 1));
    for t in 0..mel.nrows() {
        for c in 0..mel.ncols() {
            out[[t, c]] = mel[[t, c]];
        }
        out[[t, mel.ncols()]] = hz_to_mel(f0_hz[t])?;
    }
    Ok(out)
}

/// Z-normalize every feature dimension to zero mean, unit variance, pooled
/// per speaker across utterances. A variance guard of 1e-8 sends constant
/// channels to zero instead of dividing by zero.
pub fn znorm_per_speaker(matrices: &mut [FeatureMatrix]) {
    let mut groups: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (idx, m) in matrices.iter().enumerate() {
        groups.entry(m.speaker_id.clone()).or_default().push(idx);
    }
    for indices in groups.values() {
        let dims = matrices[indices[0]].num_channels();
        let mut count = 0usize;
        let mut sum = vec![0.0; dims];
        let mut sum_sq = vec![0.0; dims];
        for &i in indices {
            for row in matrices[i].frames.rows() {
                for (d, &v) in row.iter().enumerate() {
                    sum[d] += v;
                    sum_sq[d] += v * v;
                }
                count += 1;
            }
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / count as f64).collect();
        let denom: Vec<f64> = sum_sq
            .iter()
            .zip(&mean)
            .map(|(sq, m)| (sq / count as f64 - m * m).max(0.0) + 1e-8)
            .map(f64::sqrt)
            .collect();
        for &i in indices {
            for mut row in matrices[i].frames.rows_mut() {
                for (d, v) in row.iter_mut().enumerate() {
                    *v = (*v - mean[d]) / denom[d];
                }
            }
        }
    }
}

/// Fixed per-phone spectral templates for the synthetic corpus, derived
/// deterministically from a seed and the phone's rendered form.
#[derive(Debug, Clone)]
pub struct TemplateBank {
    templates: BTreeMap<String, Vec<f64>>,
}

/// Channels 36-37 carry the pitch trajectory, 38 the glottal cue, 39 the
/// breathy cue; templates occupy 0-35.
const TEMPLATE_CHANNELS: usize = 36;
const PITCH_CHANNELS: [usize; 2] = [36, 37];
const GLOTTAL_CHANNEL: usize = 38;
const BREATHY_CHANNEL: usize = 39;

fn derived_seed(seed: u64, tag: &str, key: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(tag.as_bytes());
    hasher.update(key.as_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[0..8].try_into().unwrap())
}

impl TemplateBank {
    pub fn new(seed: u64, phones: impl IntoIterator<Item = String>) -> Self {
        let mut templates = BTreeMap::new();
        for phone in phones {
            let mut rng = ChaCha8Rng::seed_from_u64(derived_seed(seed, "template", &phone));
            let normal = Normal::new(0.0, 0.8).unwrap();
            let mut tmpl = vec![0.0; NUM_MEL_CHANNELS];
            for slot in tmpl.iter_mut().take(TEMPLATE_CHANNELS) {
                *slot = normal.sample(&mut rng);
            }
            templates.insert(phone, tmpl);
        }
        Self { templates }
    }

    pub fn get(&self, phone: &str) -> Result<&[f64], FeatureError> {
        self.templates
            .get(phone)
            .map(|t| t.as_slice())
            .ok_or_else(|| FeatureError::UnknownTemplate {
                symbol: phone.to_string(),
            })
    }
}

/// Per-utterance synthesis plan: phones with frame counts, grouped by
/// syllable, each vowel carrying its tone annotation.
#[derive(Debug, Clone)]
pub struct SynthPlan {
    pub utt_id: String,
    pub speaker_id: String,
    pub syllables: Vec<Vec<(IpaSymbol, usize)>>,
    pub noise_sigma: f64,
    pub with_f0: bool,
    pub seed: u64,
}

/// Piecewise-linear interpolation of tone levels over `frames` positions.
fn pitch_trajectory(levels: &[u8], frames: usize) -> Vec<f64> {
    if levels.is_empty() || frames == 0 {
        return vec![0.0; frames];
    }
    (0..frames)
        .map(|t| {
            if levels.len() == 1 || frames == 1 {
                levels[0] as f64
            } else {
                let u = t as f64 / (frames - 1) as f64 * (levels.len() - 1) as f64;
                let lo = u.floor() as usize;
                let hi = (lo + 1).min(levels.len() - 1);
                let frac = u - lo as f64;
                levels[lo] as f64 * (1.0 - frac) + levels[hi] as f64 * frac
            }
        })
        .collect()
}

/// Render a synthesis plan to features: each phone emits its template plus
/// seeded Gaussian noise; each vowel's tone writes a pitch-proxy trajectory
/// into the designated channels (and the F0 channel when present), with
/// glottal/breathy cues over the last third of the vowel.
pub fn synth_features(
    plan: &SynthPlan,
    bank: &TemplateBank,
) -> Result<FeatureMatrix, FeatureError> {
    let total: usize = plan
        .syllables
        .iter()
        .flat_map(|syl| syl.iter().map(|(_, d)| *d))
        .sum();
    let width = if plan.with_f0 {
        NUM_MEL_CHANNELS + 1
    } else {
        NUM_MEL_CHANNELS
    };
    let mut frames = Array2::<f64>::zeros((total.max(1), width));
    let mut rng = ChaCha8Rng::seed_from_u64(derived_seed(plan.seed, "utt", &plan.utt_id));
    let noise = Normal::new(0.0, 1.0).unwrap();

    let mut t0 = 0usize;
    for syl in &plan.syllables {
        for (sym, dur) in syl {
            let tmpl = bank.get(&sym.rendered_phone())?;
            for t in t0..t0 + dur {
                for c in 0..NUM_MEL_CHANNELS {
                    frames[[t, c]] =
                        tmpl[c] + plan.noise_sigma * noise.sample(&mut rng);
                }
            }
            if sym.is_vowel() {
                let levels: Vec<u8> =
                    sym.pitch_levels().iter().map(|l| l.value()).collect();
                let traj = pitch_trajectory(&levels, *dur);
                for (i, &lvl) in traj.iter().enumerate() {
                    let value = lvl / 5.0;
                    for &pc in &PITCH_CHANNELS {
                        frames[[t0 + i, pc]] += value;
                    }
                    if plan.with_f0 && lvl > 0.0 {
                        let hz = 100.0 + 30.0 * lvl;
                        frames[[t0 + i, NUM_MEL_CHANNELS]] =
                            hz_to_mel(hz).expect("positive");
                    }
                }
                let cue_from = t0 + dur - dur.div_ceil(3);
                for ev in sym.tone_targets() {
                    let channel = match ev {
                        crate::ipa::ToneEvent::Glottal => Some(GLOTTAL_CHANNEL),
                        crate::ipa::ToneEvent::Breathy => Some(BREATHY_CHANNEL),
                        _ => None,
                    };
                    if let Some(ch) = channel {
                        for t in cue_from..t0 + dur {
                            frames[[t, ch]] += 1.0;
                        }
                    }
                }
            } else {
                // Segmental glottals carry their cue over the whole segment.
                let phone = sym.rendered_phone();
                let channel = match phone.as_str() {
                    "ʔ" => Some(GLOTTAL_CHANNEL),
                    "h" => Some(BREATHY_CHANNEL),
                    _ => None,
                };
                if let Some(ch) = channel {
                    for t in t0..t0 + dur {
                        frames[[t, ch]] += 1.0;
                    }
                }
            }
            t0 += dur;
        }
    }
    Ok(FeatureMatrix {
        utt_id: plan.utt_id.clone(),
        speaker_id: plan.speaker_id.clone(),
        frames,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ipa::{SymbolCategory, ToneEvent, ToneLevel};
    use approx::assert_relative_eq;

    #[test]
    fn frame_count_matches_framing_formula() {
        assert_eq!(frame_count(16000, 16000).unwrap(), 98);
        assert_eq!(frame_count(400, 16000).unwrap(), 1);
        assert!(matches!(
            frame_count(399, 16000),
            Err(FeatureError::TooShort { .. })
        ));
    }

    #[test]
    fn silence_hits_the_log_floor() {
        let samples = vec![0.0; 1600];
        let mel = log_mel(&samples, 16000).unwrap();
        let expected = LOG_FLOOR.ln();
        for &v in mel.iter() {
            assert_eq!(v, expected);
        }
    }

    #[test]
    fn pure_tone_peaks_at_nearest_filter() {
        let sr = 16000u32;
        let hz = 1000.0;
        let samples: Vec<f64> = (0..sr as usize)
            .map(|n| (2.0 * std::f64::consts::PI * hz * n as f64 / sr as f64).sin())
            .collect();
        let mel = log_mel(&samples, sr).unwrap();
        let centers = filterbank_centers(sr);
        let expected = centers
            .iter()
            .enumerate()
            .min_by(|(_, a), (_, b)| {
                (*a - hz).abs().partial_cmp(&(*b - hz).abs()).unwrap()
            })
            .map(|(i, _)| i)
            .unwrap();
        // Mid row, away from edge effects.
        let row = mel.row(mel.nrows() / 2);
        let got = row
            .iter()
            .enumerate()
            .max_by(|(_, a), (_, b)| a.partial_cmp(b).unwrap())
            .map(|(i, _)| i)
            .unwrap();
        assert_eq!(got, expected);
    }

    #[test]
    fn mel_formula_fixture_values() {
        assert_eq!(hz_to_mel(0.0).unwrap(), 0.0);
        assert_relative_eq!(hz_to_mel(700.0).unwrap(), 781.1726, epsilon = 1e-3);
        assert_relative_eq!(hz_to_mel(1000.0).unwrap(), 999.9856, epsilon = 1e-3);
        assert!(hz_to_mel(-1.0).is_err());
    }

    #[test]
    fn mel_is_strictly_monotonic() {
        let mut prev = -1.0;
        for i in 0..=800 {
            let m = hz_to_mel(i as f64 * 10.0).unwrap();
            assert!(m > prev);
            prev = m;
        }
    }

    #[test]
    fn f0_recovers_pulse_train() {
        let sr = 16000u32;
        let period = 80usize; // 200 Hz
        let samples: Vec<f64> = (0..8000)
            .map(|n| if n % period == 0 { 1.0 } else { 0.0 })
            .collect();
        let f0 = extract_f0(&samples, sr).unwrap();
        assert_eq!(f0.len(), frame_count(8000, sr).unwrap());
        let voiced: Vec<f64> = f0.iter().copied().filter(|&v| v > 0.0).collect();
        assert!(voiced.len() > f0.len() / 2);
        for v in voiced {
            assert!((v - 200.0).abs() <= 5.0, "f0 {v}");
        }
    }

    #[test]
    fn f0_mostly_unvoiced_on_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let normal = Normal::new(0.0, 0.3).unwrap();
        let samples: Vec<f64> = (0..16000).map(|_| normal.sample(&mut rng)).collect();
        let f0 = extract_f0(&samples, 16000).unwrap();
        let unvoiced = f0.iter().filter(|&&v| v == 0.0).count();
        assert!(
            unvoiced as f64 >= 0.9 * f0.len() as f64,
            "{unvoiced}/{} unvoiced",
            f0.len()
        );
    }

    #[test]
    fn f0_silence_is_all_zero() {
        let f0 = extract_f0(&vec![0.0; 4000], 16000).unwrap();
        assert!(f0.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn append_f0_maps_hz_to_mel() {
        let mel = Array2::<f64>::zeros((3, NUM_MEL_CHANNELS));
        let widened = append_f0(&mel, &[0.0, 700.0, 0.0]).unwrap();
        assert_eq!(widened.ncols(), 41);
        assert_eq!(widened[[0, 40]], 0.0);
        assert_relative_eq!(widened[[1, 40]], 781.1726, epsilon = 1e-3);
        assert!(matches!(
            append_f0(&mel, &[0.0]),
            Err(FeatureError::LengthMismatch { .. })
        ));
    }

    fn matrix(speaker: &str, rows: Vec<Vec<f64>>) -> FeatureMatrix {
        let t = rows.len();
        let f = rows[0].len();
        FeatureMatrix {
            utt_id: format!("{speaker}-u"),
            speaker_id: speaker.to_string(),
            frames: Array2::from_shape_vec((t, f), rows.concat()).unwrap(),
        }
    }

    #[test]
    fn znorm_single_frame_and_constant_channels_go_to_zero() {
        let mut mats = vec![matrix("s1", vec![vec![3.0, -1.0]])];
        znorm_per_speaker(&mut mats);
        assert!(mats[0].frames.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn znorm_pools_across_utterances() {
        // Speaker stats pooled over two utterances: channel values 1,3 and 5,7
        // have mean 4 and variance 5.
        let mut mats = vec![
            matrix("s1", vec![vec![1.0], vec![3.0]]),
            matrix("s1", vec![vec![5.0], vec![7.0]]),
        ];
        znorm_per_speaker(&mut mats);
        let denom = (5.0f64 + 1e-8).sqrt();
        assert_relative_eq!(mats[0].frames[[0, 0]], (1.0 - 4.0) / denom);
        assert_relative_eq!(mats[1].frames[[1, 0]], (7.0 - 4.0) / denom);
    }

    #[test]
    fn znorm_is_idempotent_within_tolerance() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let normal = Normal::new(1.5, 2.0).unwrap();
        let rows: Vec<Vec<f64>> = (0..50)
            .map(|_| (0..8).map(|_| normal.sample(&mut rng)).collect())
            .collect();
        let mut mats = vec![matrix("s1", rows)];
        znorm_per_speaker(&mut mats);
        let once = mats[0].frames.clone();
        znorm_per_speaker(&mut mats);
        for (a, b) in once.iter().zip(mats[0].frames.iter()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    fn vowel_with_tone(levels: &[u8]) -> IpaSymbol {
        IpaSymbol::phone("a", SymbolCategory::Vowel).with_tone(
            levels
                .iter()
                .map(|&l| ToneEvent::Target(ToneLevel::new(l).unwrap()))
                .collect(),
        )
    }

    #[test]
    fn synth_zero_noise_repeats_template() {
        let bank = TemplateBank::new(11, ["m".to_string()]);
        let plan = SynthPlan {
            utt_id: "u1".into(),
            speaker_id: "s1".into(),
            syllables: vec![vec![(
                IpaSymbol::phone("m", SymbolCategory::Consonant),
                10,
            )]],
            noise_sigma: 0.0,
            with_f0: false,
            seed: 5,
        };
        let m = synth_features(&plan, &bank).unwrap();
        assert_eq!(m.frames.dim(), (10, 40));
        let tmpl = bank.get("m").unwrap();
        for row in m.frames.rows() {
            for (c, &v) in row.iter().enumerate() {
                assert_eq!(v, tmpl[c]);
            }
        }
    }

    #[test]
    fn synth_falling_tone_decreases_pitch_channel() {
        let bank = TemplateBank::new(11, ["a".to_string()]);
        let plan = SynthPlan {
            utt_id: "u1".into(),
            speaker_id: "s1".into(),
            syllables: vec![vec![(vowel_with_tone(&[5, 1]), 10)]],
            noise_sigma: 0.0,
            with_f0: false,
            seed: 5,
        };
        let m = synth_features(&plan, &bank).unwrap();
        let pitch: Vec<f64> = (0..10).map(|t| m.frames[[t, 36]]).collect();
        for w in pitch.windows(2) {
            assert!(w[1] < w[0], "pitch not decreasing: {pitch:?}");
        }
        assert_relative_eq!(pitch[0] - bank.get("a").unwrap()[36], 1.0);
    }

    #[test]
    fn synth_is_deterministic_under_seed() {
        let bank = TemplateBank::new(11, ["m".to_string(), "a".to_string()]);
        let plan = SynthPlan {
            utt_id: "u1".into(),
            speaker_id: "s1".into(),
            syllables: vec![vec![
                (IpaSymbol::phone("m", SymbolCategory::Consonant), 7),
                (vowel_with_tone(&[3, 5]), 9),
            ]],
            noise_sigma: 0.3,
            with_f0: true,
            seed: 42,
        };
        let a = synth_features(&plan, &bank).unwrap();
        let b = synth_features(&plan, &bank).unwrap();
        assert_eq!(a.frames, b.frames);
        assert_eq!(a.frames.ncols(), 41);
    }

    #[test]
    fn synth_unknown_template_errors() {
        let bank = TemplateBank::new(1, ["m".to_string()]);
        let plan = SynthPlan {
            utt_id: "u".into(),
            speaker_id: "s".into(),
            syllables: vec![vec![(IpaSymbol::phone("z", SymbolCategory::Consonant), 3)]],
            noise_sigma: 0.0,
            with_f0: false,
            seed: 1,
        };
        assert!(matches!(
            synth_features(&plan, &bank),
            Err(FeatureError::UnknownTemplate { .. })
        ));
    }
}
