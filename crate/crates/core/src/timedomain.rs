//! Steady-state multi-tone signals and FIR convolution.
//!
//! Branch outputs are computed per tone from the complex response, which is
//! the exact steady state of any LTI network when every tone completes an
//! integer number of cycles in the record.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use thiserror::Error;

use crate::format::sci;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TimeDomainError {
    #[error("sample rate must be positive and finite, got {0}")]
    InvalidRate(f64),
    #[error("duration {duration} s does not give an integer number of samples at {f_s} Hz")]
    InvalidDuration { duration: f64, f_s: f64 },
    #[error("tone {freq} Hz is not on-bin for a {duration} s record")]
    OffBin { freq: f64, duration: f64 },
    #[error("tone {freq} Hz aliases at f_s = {f_s} Hz")]
    Aliasing { freq: f64, f_s: f64 },
    #[error("tone {0} Hz appears twice")]
    DuplicateFrequency(f64),
    #[error("invalid tone: {0}")]
    InvalidTone(String),
    #[error("{tones} tones but {responses} responses")]
    CountMismatch { tones: usize, responses: usize },
    #[error("signals differ in length or rate")]
    Mismatch,
    #[error("input signal is identically zero")]
    ZeroInput,
    #[error("signal contains a non-finite sample at index {0}")]
    NonFinite(usize),
    #[error("signal csv line {line}: {message}")]
    Csv { line: usize, message: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Signal {
    pub samples: Vec<f64>,
    pub f_s: f64,
}

impl Signal {
    pub fn new(samples: Vec<f64>, f_s: f64) -> Result<Self, TimeDomainError> {
        if !(f_s > 0.0 && f_s.is_finite()) {
            return Err(TimeDomainError::InvalidRate(f_s));
        }
        if let Some(i) = samples.iter().position(|x| !x.is_finite()) {
            return Err(TimeDomainError::NonFinite(i));
        }
        Ok(Self { samples, f_s })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn rms(&self) -> f64 {
        rms(&self.samples)
    }

    pub fn add(&self, other: &Signal) -> Result<Signal, TimeDomainError> {
        self.check_compatible(other)?;
        Ok(Signal {
            samples: self.samples.iter().zip(&other.samples).map(|(a, b)| a + b).collect(),
            f_s: self.f_s,
        })
    }

    fn check_compatible(&self, other: &Signal) -> Result<(), TimeDomainError> {
        if self.len() != other.len() || self.f_s != other.f_s {
            Err(TimeDomainError::Mismatch)
        } else {
            Ok(())
        }
    }

    /// `# fs=<Hz>` followed by `index,value` rows.
    pub fn to_csv(&self) -> String {
        let mut out = format!("# fs={}\n", self.f_s);
        for (i, x) in self.samples.iter().enumerate() {
            out.push_str(&format!("{i},{}\n", sci(*x)));
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Signal, TimeDomainError> {
        let err = |line: usize, message: &str| TimeDomainError::Csv {
            line,
            message: message.into(),
        };
        let mut lines = text.lines().enumerate();
        let f_s = lines
            .next()
            .and_then(|(_, l)| l.trim().strip_prefix("# fs="))
            .ok_or_else(|| err(1, "expected header '# fs=<Hz>'"))?
            .trim()
            .parse::<f64>()
            .map_err(|_| err(1, "sample rate is not a number"))?;
        let mut samples = Vec::new();
        for (n, line) in lines {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let (idx, val) = line.split_once(',').ok_or_else(|| err(n + 1, "expected 'index,value'"))?;
            let idx: usize = idx.trim().parse().map_err(|_| err(n + 1, "bad index"))?;
            if idx != samples.len() {
                return Err(err(n + 1, "indices must be consecutive from 0"));
            }
            samples.push(val.trim().parse::<f64>().map_err(|_| err(n + 1, "bad value"))?);
        }
        Signal::new(samples, f_s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tone {
    pub freq: f64,
    pub amplitude: f64,
    /// Radians.
    pub phase: f64,
}

impl Tone {
    pub fn new(freq: f64, amplitude: f64) -> Self {
        Self {
            freq,
            amplitude,
            phase: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ToneSpec {
    pub tones: Vec<Tone>,
}

impl ToneSpec {
    pub fn new(tones: Vec<Tone>) -> Self {
        Self { tones }
    }

    pub fn frequencies(&self) -> Vec<f64> {
        self.tones.iter().map(|t| t.freq).collect()
    }

    /// Check the record length and every tone; returns the sample count.
    pub fn validate(&self, f_s: f64, duration: f64) -> Result<usize, TimeDomainError> {
        let n = record_length(f_s, duration)?;
        let mut seen: Vec<f64> = Vec::with_capacity(self.tones.len());
        for t in &self.tones {
            if !(t.freq > 0.0 && t.freq.is_finite() && t.amplitude.is_finite() && t.phase.is_finite()) {
                return Err(TimeDomainError::InvalidTone(format!("{t:?}")));
            }
            if t.freq >= f_s / 2.0 {
                return Err(TimeDomainError::Aliasing { freq: t.freq, f_s });
            }
            let cycles = t.freq * duration;
            if (cycles - cycles.round()).abs() > 1e-9 * cycles.max(1.0) {
                return Err(TimeDomainError::OffBin { freq: t.freq, duration });
            }
            if seen.contains(&t.freq) {
                return Err(TimeDomainError::DuplicateFrequency(t.freq));
            }
            seen.push(t.freq);
        }
        Ok(n)
    }

    /// Equal-amplitude tones on every bin from `f_min` to `f_max` with
    /// Schroeder phases (low crest factor, sharp autocorrelation).
    pub fn schroeder(f_min: f64, f_max: f64, duration: f64) -> Self {
        let bin = 1.0 / duration;
        let first = (f_min / bin).ceil() as usize;
        let last = (f_max / bin).floor() as usize;
        let count = (last + 1).saturating_sub(first).max(1) as f64;
        let tones = (first..=last)
            .enumerate()
            .map(|(k, b)| Tone {
                freq: b as f64 * bin,
                amplitude: 1.0,
                phase: -PI * (k * (k + 1)) as f64 / count,
            })
            .collect();
        Self { tones }
    }
}

fn record_length(f_s: f64, duration: f64) -> Result<usize, TimeDomainError> {
    if !(f_s > 0.0 && f_s.is_finite()) {
        return Err(TimeDomainError::InvalidRate(f_s));
    }
    let n = f_s * duration;
    if !(duration > 0.0 && n.is_finite()) || (n - n.round()).abs() > 1e-9 * n.max(1.0) {
        return Err(TimeDomainError::InvalidDuration { duration, f_s });
    }
    Ok(n.round() as usize)
}

fn synth(tones: impl Iterator<Item = Tone> + Clone, f_s: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| {
            tones
                .clone()
                .map(|t| {
                    // reduce the argument modulo one period so long records stay exact
                    let cycles = (t.freq * i as f64 / f_s).fract();
                    t.amplitude * (TAU * cycles + t.phase).cos()
                })
                .sum()
        })
        .collect()
}

/// `x[n] = Σ A·cos(2π·f·n/f_s + φ)`.
pub fn synth_multitone(spec: &ToneSpec, f_s: f64, duration: f64) -> Result<Signal, TimeDomainError> {
    let n = spec.validate(f_s, duration)?;
    Signal::new(synth(spec.tones.iter().copied(), f_s, n), f_s)
}

/// Steady-state output of a branch with response `h[i]` at tone `i`.
pub fn branch_response_time(
    spec: &ToneSpec,
    h: &[Complex64],
    f_s: f64,
    duration: f64,
) -> Result<Signal, TimeDomainError> {
    if h.len() != spec.tones.len() {
        return Err(TimeDomainError::CountMismatch {
            tones: spec.tones.len(),
            responses: h.len(),
        });
    }
    let n = spec.validate(f_s, duration)?;
    let shaped = spec.tones.iter().zip(h).map(|(t, h)| Tone {
        freq: t.freq,
        amplitude: t.amplitude * h.norm(),
        phase: t.phase + h.arg(),
    });
    Signal::new(synth(shaped, f_s, n), f_s)
}

pub fn rms(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
}

/// `rms(input − (lf + hf)) / rms(input)`.
pub fn reconstruct_error(input: &Signal, lf: &Signal, hf: &Signal) -> Result<f64, TimeDomainError> {
    input.check_compatible(lf)?;
    input.check_compatible(hf)?;
    let denom = input.rms();
    if denom == 0.0 {
        return Err(TimeDomainError::ZeroInput);
    }
    let residual: Vec<f64> = (0..input.len())
        .map(|i| input.samples[i] - (lf.samples[i] + hf.samples[i]))
        .collect();
    Ok(rms(&residual) / denom)
}

/// Direct-form convolution with zero initial state; output has the input's
/// length.
pub fn fir_filter(h: &[f64], x: &Signal) -> Signal {
    let samples = (0..x.len())
        .map(|n| {
            h.iter()
                .take(n + 1)
                .enumerate()
                .map(|(k, c)| c * x.samples[n - k])
                .sum()
        })
        .collect();
    Signal {
        samples,
        f_s: x.f_s,
    }
}

/// Lag in `0..=max_lag` maximizing `Σ x[n]·y[n+lag]` (earliest on ties).
pub fn xcorr_lag(x: &[f64], y: &[f64], max_lag: usize) -> usize {
    let score = |lag: usize| -> f64 {
        x.iter()
            .zip(y.iter().skip(lag))
            .map(|(a, b)| a * b)
            .sum()
    };
    (0..=max_lag.min(y.len().saturating_sub(1)))
        .map(|lag| (lag, score(lag)))
        .fold((0, f64::NEG_INFINITY), |best, cur| if cur.1 > best.1 { cur } else { best })
        .0
}

/// Circular cross-correlation peak of two periodic records, as a signed lag
/// in `(−N/2, N/2]` samples (positive when `y` lags `x`).
pub fn circular_xcorr_lag(x: &[f64], y: &[f64]) -> isize {
    let n = x.len();
    let score = |lag: usize| -> f64 { (0..n).map(|i| x[i] * y[(i + lag) % n]).sum() };
    let best = (0..n)
        .map(|lag| (lag, score(lag)))
        .fold((0, f64::NEG_INFINITY), |best, cur| if cur.1 > best.1 { cur } else { best })
        .0;
    if best > n / 2 {
        best as isize - n as isize
    } else {
        best as isize
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topologies::{design_fir, rtr_closed_form, FirDesign, RtrDesign};
    use proptest::prelude::*;

    const FS: f64 = 48_000.0;

    fn rtr_branches(d: &RtrDesign, spec: &ToneSpec) -> (Vec<Complex64>, Vec<Complex64>) {
        spec.tones
            .iter()
            .map(|t| rtr_closed_form(d, TAU * t.freq).unwrap())
            .unzip()
    }

    #[test]
    fn single_tone_record() {
        let s = synth_multitone(&ToneSpec::new(vec![Tone::new(1000.0, 1.0)]), FS, 0.1).unwrap();
        assert_eq!(s.len(), 4800);
        assert!(s.samples.iter().all(|x| x.abs() <= 1.0));
        assert_eq!(s.samples[0], 1.0);
        let empty = synth_multitone(&ToneSpec::default(), FS, 0.1).unwrap();
        assert!(empty.samples.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn rejects_invalid_tones() {
        let one = |f| ToneSpec::new(vec![Tone::new(f, 1.0)]);
        assert!(matches!(
            synth_multitone(&one(30_000.0), FS, 0.1),
            Err(TimeDomainError::Aliasing { .. })
        ));
        assert!(matches!(
            synth_multitone(&one(1005.0), FS, 0.1),
            Err(TimeDomainError::OffBin { .. })
        ));
        let dup = ToneSpec::new(vec![Tone::new(100.0, 1.0), Tone::new(100.0, 0.5)]);
        assert_eq!(
            synth_multitone(&dup, FS, 0.1).unwrap_err(),
            TimeDomainError::DuplicateFrequency(100.0)
        );
        assert!(synth_multitone(&one(100.0), 0.0, 0.1).is_err());
        assert!(synth_multitone(&one(100.0), FS, 0.0).is_err());
    }

    #[test]
    fn identity_and_zero_responses() {
        let spec = ToneSpec::new(vec![Tone::new(100.0, 1.0), Tone::new(3000.0, 0.5)]);
        let x = synth_multitone(&spec, FS, 0.1).unwrap();
        let one = vec![Complex64::new(1.0, 0.0); 2];
        assert_eq!(branch_response_time(&spec, &one, FS, 0.1).unwrap(), x);
        let zero = branch_response_time(&spec, &[Complex64::new(0.0, 0.0); 2], FS, 0.1).unwrap();
        assert!(zero.samples.iter().all(|&v| v == 0.0));
        assert!(matches!(
            branch_response_time(&spec, &one[..1], FS, 0.1),
            Err(TimeDomainError::CountMismatch { .. })
        ));
    }

    #[test]
    fn ideal_rtr_reconstructs_exactly() {
        let spec = ToneSpec::new(vec![Tone::new(100.0, 1.0), Tone::new(3000.0, 1.0)]);
        let d = RtrDesign::reference();
        let (lf, hf) = rtr_branches(&d, &spec);
        let x = synth_multitone(&spec, FS, 0.1).unwrap();
        let y_lf = branch_response_time(&spec, &lf, FS, 0.1).unwrap();
        let y_hf = branch_response_time(&spec, &hf, FS, 0.1).unwrap();
        assert!(reconstruct_error(&x, &y_lf, &x.add(&y_hf).unwrap().add(&y_lf).unwrap()).unwrap() > 0.1);
        let lf_alone = y_lf.samples.iter().zip(&x.samples).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(lf_alone > 0.1);
        assert!(reconstruct_error(&x, &y_lf, &y_hf).unwrap() <= 1e-12);
    }

    #[test]
    fn nonideal_error_tracks_flat_band_epsilon() {
        let spec = ToneSpec::new(vec![Tone::new(100.0, 1.0), Tone::new(8000.0, 1.0)]);
        let d = RtrDesign::reference_nonideal();
        let (lf, hf) = rtr_branches(&d, &spec);
        let x = synth_multitone(&spec, FS, 0.1).unwrap();
        let err = reconstruct_error(
            &x,
            &branch_response_time(&spec, &lf, FS, 0.1).unwrap(),
            &branch_response_time(&spec, &hf, FS, 0.1).unwrap(),
        )
        .unwrap();
        // equal-amplitude tones: error = sqrt(mean |ε_i|²)
        let eps: Vec<f64> = lf.iter().zip(&hf).map(|(a, b)| (a + b - 1.0).norm()).collect();
        let expected = (eps.iter().map(|e| e * e).sum::<f64>() / 2.0).sqrt();
        assert!(err <= 1e-2);
        assert!((err / expected - 1.0).abs() < 1e-6, "{err} vs {expected}");
        let max_eps = eps.iter().copied().fold(0.0, f64::max);
        assert!(err <= max_eps && err >= max_eps / 2.0);
    }

    #[test]
    fn trivial_split_has_no_error() {
        let spec = ToneSpec::new(vec![Tone::new(500.0, 2.0)]);
        let x = synth_multitone(&spec, FS, 0.01).unwrap();
        let zero = Signal::new(vec![0.0; x.len()], FS).unwrap();
        assert_eq!(reconstruct_error(&x, &x, &zero).unwrap(), 0.0);
        assert_eq!(reconstruct_error(&zero, &x, &zero).unwrap_err(), TimeDomainError::ZeroInput);
        let short = Signal::new(vec![0.0; 3], FS).unwrap();
        assert_eq!(reconstruct_error(&x, &short, &zero).unwrap_err(), TimeDomainError::Mismatch);
    }

    #[test]
    fn fir_filter_basics() {
        let x = Signal::new(vec![1.0, 2.0, 3.0, 4.0], FS).unwrap();
        assert_eq!(fir_filter(&[1.0], &x), x);
        assert_eq!(fir_filter(&[0.0, 1.0], &x).samples, vec![0.0, 1.0, 2.0, 3.0]);
        assert_eq!(fir_filter(&[1.0, 1.0], &x).samples, vec![1.0, 3.0, 5.0, 7.0]);
    }

    #[test]
    fn fir_pair_sum_is_delayed_input() {
        let d = FirDesign {
            n_taps: 255,
            ..FirDesign::reference()
        };
        let pair = design_fir(&d).unwrap();
        let spec = ToneSpec::new(vec![Tone::new(200.0, 1.0), Tone::new(1000.0, 0.7), Tone::new(7000.0, 0.3)]);
        let x = synth_multitone(&spec, FS, 0.1).unwrap();
        let y = fir_filter(&pair.lp, &x).add(&fir_filter(&pair.hp, &x)).unwrap();
        let delay = d.latency_samples();
        let worst = (d.n_taps..x.len())
            .map(|n| (y.samples[n] - x.samples[n - delay]).abs())
            .fold(0.0, f64::max);
        assert!(worst <= 1e-12, "{worst}");

        // impulse through the sum peaks at the delay
        let mut imp = vec![0.0; 600];
        imp[0] = 1.0;
        let imp = Signal::new(imp, FS).unwrap();
        let y = fir_filter(&pair.lp, &imp).add(&fir_filter(&pair.hp, &imp)).unwrap();
        assert_eq!(xcorr_lag(&imp.samples, &y.samples, 400), delay);
    }

    #[test]
    fn circular_lag_of_shifted_probe() {
        let spec = ToneSpec::schroeder(20.0, 20_000.0, 0.01);
        let x = synth_multitone(&spec, FS, 0.01).unwrap();
        let shift = 37;
        let h: Vec<Complex64> = spec
            .tones
            .iter()
            .map(|t| Complex64::cis(-TAU * t.freq * shift as f64 / FS))
            .collect();
        let y = branch_response_time(&spec, &h, FS, 0.01).unwrap();
        assert_eq!(circular_xcorr_lag(&x.samples, &y.samples), shift);
        assert_eq!(circular_xcorr_lag(&y.samples, &x.samples), -shift);
        assert_eq!(circular_xcorr_lag(&x.samples, &x.samples), 0);
    }

    #[test]
    fn csv_round_trip() {
        let s = Signal::new(vec![0.0, -1.5e-9, 3.25, 1.0 / 3.0], 44_100.0).unwrap();
        let text = s.to_csv();
        assert!(text.starts_with("# fs=44100\n0,0.000000000000e+00\n"));
        let back = Signal::from_csv(&text).unwrap();
        assert_eq!(back.f_s, 44_100.0);
        assert_eq!(back.samples[..3], s.samples[..3]);
        assert!((back.samples[3] - 1.0 / 3.0).abs() < 1e-12);
        assert!(Signal::from_csv("0,1\n").is_err());
        assert!(Signal::from_csv("# fs=1\n1,1\n").is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn ideal_rtr_reconstructs_any_tone_set(
            bins in prop::collection::btree_set(1usize..1200, 1..6),
            amps in prop::collection::vec(0.01f64..10.0, 6),
            phases in prop::collection::vec(-PI..PI, 6),
        ) {
            let duration = 0.05;
            // bin 50 is 1 kHz, the lossless series resonance itself
            prop_assume!(!bins.contains(&50));
            let spec = ToneSpec::new(
                bins.iter()
                    .enumerate()
                    .map(|(i, &b)| Tone { freq: b as f64 / duration, amplitude: amps[i], phase: phases[i] })
                    .collect(),
            );
            let (lf, hf) = rtr_branches(&RtrDesign::reference(), &spec);
            let x = synth_multitone(&spec, FS, duration).unwrap();
            let err = reconstruct_error(
                &x,
                &branch_response_time(&spec, &lf, FS, duration).unwrap(),
                &branch_response_time(&spec, &hf, FS, duration).unwrap(),
            ).unwrap();
            prop_assert!(err <= 1e-12, "err = {}", err);
        }

        #[test]
        fn relative_error_is_scale_invariant(scale in 0.01f64..100.0) {
            let d = RtrDesign::reference_nonideal();
            let base = ToneSpec::new(vec![Tone::new(100.0, 1.0), Tone::new(8000.0, 0.5)]);
            let scaled = ToneSpec::new(base.tones.iter().map(|t| Tone { amplitude: t.amplitude * scale, ..*t }).collect());
            let err = |spec: &ToneSpec| {
                let (lf, hf) = rtr_branches(&d, spec);
                let x = synth_multitone(spec, FS, 0.01).unwrap();
                let a = branch_response_time(spec, &lf, FS, 0.01).unwrap();
                let b = branch_response_time(spec, &hf, FS, 0.01).unwrap();
                let abs: f64 = rms(&x.samples.iter().zip(a.samples.iter().zip(&b.samples)).map(|(x, (a, b))| x - a - b).collect::<Vec<_>>());
                (reconstruct_error(&x, &a, &b).unwrap(), abs)
            };
            let (r0, a0) = err(&base);
            let (r1, a1) = err(&scaled);
            prop_assert!((r1 - r0).abs() <= 1e-9 * r0);
            prop_assert!((a1 - scale * a0).abs() <= 1e-9 * scale * a0);
        }
    }
}
