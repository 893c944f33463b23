//! Per-measurement receiver chain: demodulation, spectral division,
//! calibration or sidelink correction, and range compression.
//!
//! Demodulation evaluates the received body on the subcarrier grid with a
//! `P = fs / spacing` point transform over the first period of the body, so
//! an undistorted symbol returns its code symbols exactly for any
//! oversampling ratio `fs / B`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dsp::{cis_cycles, fft_in_place, hann, ifft_in_place, parabolic_offset};
use crate::waveform::{mix, CodeSymbols, OfdmParams};
use crate::{ComplexSignal, Error, Result, C0};

/// Stage a subcarrier vector has passed through.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataKind {
    /// Demodulated, code still applied.
    Raw,
    /// Divided by the code symbols.
    Divided,
    MonoCalibrated,
    BistaticCorrected,
}

/// One complex value per subcarrier.
#[derive(Debug, Clone, PartialEq)]
pub struct SubcarrierData {
    pub values: Vec<Complex64>,
    pub kind: DataKind,
}

/// Removes the carrier: sample `k` times `e^{-j 2 pi fc k / fs}`.
pub fn downconvert(y: &ComplexSignal, fc: f64) -> ComplexSignal {
    mix(y, -fc)
}

/// Drops the cyclic prefix of a captured segment and returns the body,
/// re-timed to start at `t = 0`.
pub fn strip_cyclic_prefix(segment: &ComplexSignal, params: &OfdmParams) -> Result<ComplexSignal> {
    let cp = params.cp_len();
    let body = params.body_len();
    if segment.len() != cp + body {
        return Err(Error::LengthMismatch {
            expected: cp + body,
            actual: segment.len(),
        });
    }
    Ok(ComplexSignal::new(
        segment.samples[cp..].to_vec(),
        segment.sample_rate,
        segment.start_time + cp as f64 / segment.sample_rate,
    ))
}

/// `D[n] = (1/P) sum_{k<P} y_b[k] e^{-j 2 pi n spacing k / fs}` for
/// `n < N`, with `P = fs / spacing` samples.
pub fn demodulate(body: &ComplexSignal, params: &OfdmParams) -> Result<SubcarrierData> {
    let len = params.body_len();
    if body.len() != len {
        return Err(Error::LengthMismatch {
            expected: len,
            actual: body.len(),
        });
    }
    let period = params.period_len()?;
    let n = params.subcarriers;
    if period > len || n > period {
        return Err(Error::InvalidParams(format!(
            "need subcarriers <= fs/spacing <= body length, got {n}, {period}, {len}"
        )));
    }
    let mut buf = body.samples[..period].to_vec();
    fft_in_place(&mut buf);
    let scale = 1.0 / period as f64;
    buf.truncate(n);
    for v in &mut buf {
        *v *= scale;
    }
    Ok(SubcarrierData {
        values: buf,
        kind: DataKind::Raw,
    })
}

/// `D[n] = D_rx[n] conj(d_n)`.
pub fn spectral_divide(d_rx: &SubcarrierData, code: &CodeSymbols) -> Result<SubcarrierData> {
    if d_rx.values.len() != code.d.len() {
        return Err(Error::LengthMismatch {
            expected: code.d.len(),
            actual: d_rx.values.len(),
        });
    }
    Ok(SubcarrierData {
        values: d_rx
            .values
            .iter()
            .zip(&code.d)
            .map(|(v, d)| v * d.conj())
            .collect(),
        kind: DataKind::Divided,
    })
}

/// Removes an internal delay of `r_cal_hat / c0`.
pub fn calibrate_mono(
    d: &SubcarrierData,
    r_cal_hat: f64,
    params: &OfdmParams,
) -> Result<SubcarrierData> {
    if !(r_cal_hat >= 0.0) {
        return Err(Error::Domain {
            what: "r_cal_hat",
            value: r_cal_hat,
            min: 0.0,
            max: f64::INFINITY,
        });
    }
    let tau = r_cal_hat / C0;
    Ok(SubcarrierData {
        values: d
            .values
            .iter()
            .enumerate()
            .map(|(n, v)| v * cis_cycles((n as f64 * params.spacing + params.fc) * tau))
            .collect(),
        kind: DataKind::MonoCalibrated,
    })
}

/// `D_bi[n] = D_rad[n] / D_sl[n]`.
///
/// Rejects the measurement when any sidelink subcarrier is at or below
/// `1e-9` times the median sidelink magnitude.
pub fn correct_bistatic(d_rad: &SubcarrierData, d_sl: &SubcarrierData) -> Result<SubcarrierData> {
    if d_rad.values.len() != d_sl.values.len() {
        return Err(Error::LengthMismatch {
            expected: d_sl.values.len(),
            actual: d_rad.values.len(),
        });
    }
    let mut mags: Vec<f64> = d_sl.values.iter().map(|v| v.norm()).collect();
    mags.sort_by(f64::total_cmp);
    let median = mags.get(mags.len() / 2).copied().unwrap_or(0.0);
    let eps = 1e-9 * median;
    let mut values = Vec::with_capacity(d_rad.values.len());
    for (n, (r, s)) in d_rad.values.iter().zip(&d_sl.values).enumerate() {
        let m = s.norm();
        if !(m > eps) {
            return Err(Error::SidelinkDropout {
                subcarrier: n,
                magnitude: m,
            });
        }
        values.push(r / s);
    }
    Ok(SubcarrierData {
        values,
        kind: DataKind::BistaticCorrected,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Window {
    #[default]
    None,
    Hann,
}

impl Window {
    pub fn weights(self, n: usize) -> Vec<f64> {
        match self {
            Window::None => vec![1.0; n],
            Window::Hann => hann(n),
        }
    }
}

/// Delay reference of a range profile.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    /// Full transmitter -> target -> receiver delay; meters are two-way.
    Absolute,
    /// Delay beyond the direct sidelink path; meters are path difference.
    SidelinkRelative,
}

impl Domain {
    pub fn code(self) -> f64 {
        match self {
            Domain::Absolute => 0.0,
            Domain::SidelinkRelative => 1.0,
        }
    }

    pub fn from_code(v: f64) -> Result<Self> {
        match v {
            0.0 => Ok(Domain::Absolute),
            1.0 => Ok(Domain::SidelinkRelative),
            _ => Err(Error::Format(format!("unknown profile domain code {v}"))),
        }
    }
}

/// Oversampled complex range profile of one measurement.
///
/// Cell `c` corresponds to delay `c / (B * oversample)`; `r[i]` holds cell
/// `first_cell + i`. Profiles may be cropped to the cells a scene can
/// reach.
#[derive(Debug, Clone, PartialEq)]
pub struct RangeProfile {
    pub r: Vec<Complex64>,
    pub first_cell: usize,
    pub oversample: usize,
    pub subcarriers: usize,
    pub bandwidth: f64,
    /// Sum of window weights; an ideal unit target peaks at this magnitude.
    pub gain: f64,
    pub domain: Domain,
    pub m: usize,
    pub t: f64,
    /// Windowed subcarrier data, kept for exact off-grid evaluation.
    pub spectrum: Option<Vec<Complex64>>,
}

/// Peak of a range profile.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Peak {
    /// Absolute cell index of the largest sample.
    pub cell: usize,
    pub value: Complex64,
    /// Sub-cell peak position in cells.
    pub refined: f64,
    /// Profile value at `refined`.
    pub refined_value: Complex64,
}

impl RangeProfile {
    /// Cells over the whole unambiguous delay `1 / spacing`.
    pub fn full_len(&self) -> usize {
        self.subcarriers * self.oversample
    }

    pub fn cell_size(&self) -> f64 {
        match self.domain {
            Domain::Absolute => C0 / (2.0 * self.bandwidth * self.oversample as f64),
            Domain::SidelinkRelative => C0 / (self.bandwidth * self.oversample as f64),
        }
    }

    /// Delay of (fractional) cell `c`.
    pub fn delay_of_cell(&self, c: f64) -> f64 {
        c / (self.bandwidth * self.oversample as f64)
    }

    /// Fractional cell of `delay`.
    pub fn cell_of_delay(&self, delay: f64) -> f64 {
        delay * self.bandwidth * self.oversample as f64
    }

    /// Keeps cells `[first, first + len)` (clamped to the profile).
    pub fn crop(&self, first: usize, len: usize) -> RangeProfile {
        let lo = first.max(self.first_cell);
        let end = (first + len).min(self.first_cell + self.r.len());
        let (a, b) = if lo < end {
            (lo - self.first_cell, end - self.first_cell)
        } else {
            (0, 0)
        };
        RangeProfile {
            r: self.r[a..b].to_vec(),
            first_cell: lo.min(end),
            ..self.clone()
        }
    }

    /// Exact profile value at fractional absolute cell `c`; falls back to
    /// linear interpolation when the spectrum was discarded.
    pub fn eval(&self, c: f64) -> Option<Complex64> {
        match &self.spectrum {
            Some(s) => {
                // Horner evaluation of sum_n s_n z^n
                let z = cis_cycles(c / self.full_len() as f64);
                Some(
                    s.iter()
                        .rev()
                        .fold(Complex64::new(0.0, 0.0), |acc, v| acc * z + v),
                )
            }
            None => crate::dsp::lerp_at(&self.r, c - self.first_cell as f64),
        }
    }
}

/// Zero-padded inverse DFT of the windowed subcarrier data.
///
/// Returns `N * oversample` cells; an ideal target at delay `dt` peaks at
/// cell `B * dt * oversample` with value `gain * e^{-j 2 pi fc dt}`.
pub fn range_compress(
    d: &SubcarrierData,
    params: &OfdmParams,
    window: Window,
    oversample: usize,
) -> Result<RangeProfile> {
    if oversample < 1 {
        return Err(Error::InvalidParams("oversample must be >= 1".into()));
    }
    let n = d.values.len();
    if n != params.subcarriers {
        return Err(Error::LengthMismatch {
            expected: params.subcarriers,
            actual: n,
        });
    }
    let w = window.weights(n);
    let spectrum: Vec<Complex64> = d.values.iter().zip(&w).map(|(v, w)| v * w).collect();
    let mut buf = vec![Complex64::new(0.0, 0.0); n * oversample];
    buf[..n].copy_from_slice(&spectrum);
    ifft_in_place(&mut buf);
    let domain = match d.kind {
        DataKind::BistaticCorrected => Domain::SidelinkRelative,
        _ => Domain::Absolute,
    };
    Ok(RangeProfile {
        r: buf,
        first_cell: 0,
        oversample,
        subcarriers: n,
        bandwidth: params.bandwidth(),
        gain: w.iter().sum(),
        domain,
        m: 0,
        t: 0.0,
        spectrum: Some(spectrum),
    })
}

/// Largest-magnitude cell (lowest index on ties) and its sub-cell
/// refinement.
///
/// The refinement starts from a parabola through the neighbouring
/// magnitudes and, when the spectrum is available, is polished on the exact
/// profile so `refined_value` carries the true peak phase.
pub fn peak_cell(profile: &RangeProfile) -> Result<Peak> {
    let r = &profile.r;
    if r.is_empty() {
        return Err(Error::ZeroInput("empty range profile"));
    }
    let mut best = 0;
    let mut best_mag = r[0].norm();
    for (i, v) in r.iter().enumerate().skip(1) {
        let m = v.norm();
        if m > best_mag {
            best = i;
            best_mag = m;
        }
    }
    if best_mag == 0.0 {
        return Err(Error::ZeroInput("all-zero range profile"));
    }
    let full = profile.r.len() == profile.full_len();
    let neighbour = |i: isize| -> Option<f64> {
        let len = r.len() as isize;
        if full {
            Some(r[i.rem_euclid(len) as usize].norm())
        } else if (0..len).contains(&i) {
            Some(r[i as usize].norm())
        } else {
            None
        }
    };
    let b = best as isize;
    let offset = match (neighbour(b - 1), neighbour(b + 1)) {
        (Some(l), Some(h)) => parabolic_offset(l, best_mag, h),
        _ => 0.0,
    };
    let cell = profile.first_cell + best;
    let mut refined = cell as f64 + offset;
    if profile.spectrum.is_some() {
        refined = golden_max(
            |c| profile.eval(c).map_or(0.0, |v| v.norm_sqr()),
            refined - 0.5,
            refined + 0.5,
        );
    }
    let refined_value = profile.eval(refined).unwrap_or(r[best]);
    Ok(Peak {
        cell,
        value: r[best],
        refined,
        refined_value,
    })
}

fn golden_max(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..60 {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
        if b - a < 1e-9 {
            break;
        }
    }
    0.5 * (a + b)
}

/// How a measurement is turned into a range profile.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Chain {
    /// Radar channel only, internal delay removed; absolute delays.
    Monostatic,
    /// Radar channel divided by the sidelink channel; relative delays.
    Sidelink,
}

/// Settings shared by every measurement of a processing run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProcessOptions {
    pub window: Window,
    pub oversample: usize,
    pub r_cal_hat: f64,
}

impl Default for ProcessOptions {
    fn default() -> Self {
        Self {
            window: Window::None,
            oversample: 8,
            r_cal_hat: 0.0,
        }
    }
}

/// Divided subcarrier data of one captured segment.
pub fn segment_data(
    segment: &ComplexSignal,
    params: &OfdmParams,
    code: &CodeSymbols,
) -> Result<SubcarrierData> {
    let body = strip_cyclic_prefix(segment, params)?;
    spectral_divide(&demodulate(&body, params)?, code)
}

/// Full chain for one measurement.
pub fn compress_measurement(
    radar: &ComplexSignal,
    sidelink: Option<&ComplexSignal>,
    chain: Chain,
    params: &OfdmParams,
    code: &CodeSymbols,
    opts: &ProcessOptions,
) -> Result<RangeProfile> {
    let d_rad = segment_data(radar, params, code)?;
    let d = match chain {
        Chain::Monostatic => calibrate_mono(&d_rad, opts.r_cal_hat, params)?,
        Chain::Sidelink => {
            let sl = sidelink.ok_or_else(|| {
                Error::InvalidParams("sidelink correction needs a sidelink channel".into())
            })?;
            correct_bistatic(&d_rad, &segment_data(sl, params, code)?)?
        }
    };
    range_compress(&d, params, opts.window, opts.oversample)
}
