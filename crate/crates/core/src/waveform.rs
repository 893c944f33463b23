//! OFDM symbol synthesis, signal frames and the timing/rate budgets.
//!
//! Baseband convention: subcarrier `n` sits at `n * spacing` for
//! `n = 0..N-1`, so the occupied band is `[0, B)` with `B = N * spacing`.
//! A symbol is periodic with period `1 / spacing`; a captured radar segment
//! spans `[-T_cp, T)` with the body starting at `t = 0`.

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dsp::{chirp_z, cis_cycles, ifft_in_place};
use crate::rng::{stream, stream_rng};
use crate::{ComplexSignal, Error, Result, C0};

/// Waveform and timing parameters; the single source of waveform truth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OfdmParams {
    /// Carrier frequency [Hz].
    pub fc: f64,
    /// Number of subcarriers.
    pub subcarriers: usize,
    /// Subcarrier spacing [Hz].
    pub spacing: f64,
    /// Symbol (body) duration [s].
    pub symbol_duration: f64,
    /// Cyclic prefix duration [s].
    pub cp_duration: f64,
    /// Converter sample rate [samples/s].
    pub sample_rate: f64,
    /// Converter resolution [bit]; only used for data-rate budgets.
    pub resolution_bits: u32,
    /// Measurement (pulse repetition) rate [Hz].
    pub prf: f64,
}

impl Default for OfdmParams {
    fn default() -> Self {
        Self::table1()
    }
}

impl OfdmParams {
    /// 1.2 GHz carrier, 4096 x 100 kHz subcarriers, 12.5 us symbol,
    /// 3.125 us prefix, 1.024 GS/s, 14 bit, 100 Hz.
    pub fn table1() -> Self {
        Self {
            fc: 1.2e9,
            subcarriers: 4096,
            spacing: 100e3,
            symbol_duration: 12.5e-6,
            cp_duration: 3.125e-6,
            sample_rate: 1.024e9,
            resolution_bits: 14,
            prf: 100.0,
        }
    }

    /// Occupied bandwidth `B = N * spacing`.
    pub fn bandwidth(&self) -> f64 {
        self.subcarriers as f64 * self.spacing
    }

    pub fn pri(&self) -> f64 {
        1.0 / self.prf
    }

    pub fn wavelength(&self) -> f64 {
        C0 / self.fc
    }

    /// Samples in the symbol body, `round(T * fs)`.
    pub fn body_len(&self) -> usize {
        (self.symbol_duration * self.sample_rate).round() as usize
    }

    /// Samples in the cyclic prefix, `round(T_cp * fs)`.
    pub fn cp_len(&self) -> usize {
        (self.cp_duration * self.sample_rate).round() as usize
    }

    /// Samples in the transmitted radar segment (prefix + body).
    pub fn segment_len(&self) -> usize {
        self.cp_len() + self.body_len()
    }

    /// Radar segment duration `T + T_cp`.
    pub fn active_duration(&self) -> f64 {
        self.symbol_duration + self.cp_duration
    }

    /// Samples in one subcarrier-orthogonal period `fs / spacing`.
    ///
    /// Demodulation needs this to be an integer.
    pub fn period_len(&self) -> Result<usize> {
        let p = self.sample_rate / self.spacing;
        let rounded = p.round();
        if (p - rounded).abs() > 1e-9 * p || rounded < 1.0 {
            return Err(Error::InvalidParams(format!(
                "sample_rate / spacing = {p} is not an integer"
            )));
        }
        Ok(rounded as usize)
    }

    /// Range of effective path delays (relative to the nominal window) for
    /// which the demodulation window sees only steady-state symbol samples.
    pub fn delay_guard(&self) -> Result<(f64, f64)> {
        let p = self.period_len()? as f64;
        let fs = self.sample_rate;
        Ok(((p - self.body_len() as f64) / fs, self.cp_len() as f64 / fs))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParams(m.to_string()));
        if self.subcarriers < 1 {
            return bad("subcarrier count must be >= 1");
        }
        if !(self.spacing > 0.0) || !self.spacing.is_finite() {
            return bad("subcarrier spacing must be positive");
        }
        if !(self.sample_rate > 0.0) || !self.sample_rate.is_finite() {
            return bad("sample rate must be positive");
        }
        if !self.fc.is_finite() {
            return bad("carrier frequency must be finite");
        }
        if !(self.symbol_duration > 0.0) {
            return bad("symbol duration must be positive");
        }
        if !(self.cp_duration >= 0.0) {
            return bad("cyclic prefix duration must be >= 0");
        }
        if !(self.prf > 0.0) {
            return bad("measurement rate must be positive");
        }
        if self.bandwidth() > self.sample_rate {
            return Err(Error::Aliasing {
                bandwidth: self.bandwidth(),
                sample_rate: self.sample_rate,
            });
        }
        if self.prf * self.active_duration() > 1.0 {
            return bad("prf * (T + T_cp) must be <= 1");
        }
        Ok(())
    }
}

/// Unit-magnitude code symbols for the subcarriers.
#[derive(Debug, Clone, PartialEq)]
pub struct CodeSymbols {
    pub d: Vec<Complex64>,
    pub seed: u64,
}

/// Pseudorandom QPSK symbols `(+-1 +- j)/sqrt(2)`, reproducible from `seed`.
pub fn generate_code(params: &OfdmParams, seed: u64) -> CodeSymbols {
    let mut rng = stream_rng(seed, &[stream::CODE]);
    let a = std::f64::consts::FRAC_1_SQRT_2;
    let d = (0..params.subcarriers)
        .map(|_| {
            let bits: u8 = rng.random_range(0..4);
            let re = if bits & 1 == 0 { a } else { -a };
            let im = if bits & 2 == 0 { a } else { -a };
            Complex64::new(re, im)
        })
        .collect();
    CodeSymbols { d, seed }
}

/// Samples `sum_n coeffs[n] e^{j 2 pi n spacing t_j}` at `t_j = t0 + j * dt`.
///
/// Uses a single inverse FFT when the grid lines up with the symbol period
/// and a chirp-z transform otherwise; both are exact up to rounding.
pub(crate) fn synthesize(
    coeffs: &[Complex64],
    params: &OfdmParams,
    t0: f64,
    dt: f64,
    len: usize,
) -> Vec<Complex64> {
    let fs = params.sample_rate;
    if let Ok(period) = params.period_len() {
        let start = t0 * fs;
        let on_grid = (dt * fs - 1.0).abs() < 1e-15 && (start - start.round()).abs() < 1e-9;
        if on_grid && coeffs.len() <= period {
            let mut buf = vec![Complex64::new(0.0, 0.0); period];
            buf[..coeffs.len()].copy_from_slice(coeffs);
            ifft_in_place(&mut buf);
            let start = start.round() as i64;
            let p = period as i64;
            return (0..len as i64)
                .map(|j| buf[(start + j).rem_euclid(p) as usize])
                .collect();
        }
    }
    let shifted: Vec<Complex64> = coeffs
        .iter()
        .enumerate()
        .map(|(n, &c)| c * cis_cycles(n as f64 * params.spacing * t0))
        .collect();
    chirp_z(&shifted, params.spacing * dt, len)
}

/// Baseband OFDM radar segment: cyclic prefix followed by the symbol body.
///
/// Body sample `k` is `sum_n d_n e^{j 2 pi n spacing k / fs}`. The prefix is
/// the periodic continuation of the body to negative time, which equals a
/// copy of the body tail whenever `T` is a whole number of symbol periods.
/// The returned signal starts at `t = -T_cp`.
pub fn generate_symbol(params: &OfdmParams, code: &CodeSymbols) -> Result<ComplexSignal> {
    if params.bandwidth() > params.sample_rate {
        return Err(Error::Aliasing {
            bandwidth: params.bandwidth(),
            sample_rate: params.sample_rate,
        });
    }
    if code.d.len() != params.subcarriers {
        return Err(Error::LengthMismatch {
            expected: params.subcarriers,
            actual: code.d.len(),
        });
    }
    let fs = params.sample_rate;
    let cp = params.cp_len();
    let t0 = -(cp as f64) / fs;
    let samples = synthesize(&code.d, params, t0, 1.0 / fs, params.segment_len());
    Ok(ComplexSignal::new(samples, fs, t0))
}

/// Shifts a baseband signal up by `fc`: sample `k` is multiplied by
/// `e^{+j 2 pi fc k / fs}`.
///
/// The shifted band `[fc, fc + bandwidth)` must stay inside `[-fs/2, fs/2]`.
pub fn upconvert(x: &ComplexSignal, fc: f64, bandwidth: f64) -> Result<ComplexSignal> {
    let half = x.sample_rate / 2.0;
    if fc < -half || fc + bandwidth > half {
        return Err(Error::Aliasing {
            bandwidth: fc + bandwidth,
            sample_rate: x.sample_rate,
        });
    }
    Ok(mix(x, fc))
}

pub(crate) fn mix(x: &ComplexSignal, f: f64) -> ComplexSignal {
    let step = f / x.sample_rate;
    let samples = x
        .samples
        .iter()
        .enumerate()
        .map(|(k, &s)| s * cis_cycles(step * k as f64))
        .collect();
    ComplexSignal::new(samples, x.sample_rate, x.start_time)
}

/// Trigger, radar and payload segments laid out in one pulse repetition
/// interval.
#[derive(Debug, Clone)]
pub struct SignalFrame {
    pub trigger: ComplexSignal,
    pub radar: ComplexSignal,
    /// Opaque payload samples; may be empty.
    pub payload: Vec<Complex64>,
    pub t_pri: f64,
    /// `[start, end)` sample ranges of trigger, radar and payload.
    pub bounds: [(usize, usize); 3],
    /// Samples per PRI, `round(t_pri * fs)`.
    pub pri_len: usize,
}

/// Lays out `trigger -> radar -> payload` back to back inside one PRI.
pub fn assemble_frame(
    trigger: ComplexSignal,
    radar: ComplexSignal,
    payload: Vec<Complex64>,
    t_pri: f64,
) -> Result<SignalFrame> {
    let fs = radar.sample_rate;
    if !trigger.is_empty() && (trigger.sample_rate - fs).abs() > 1e-9 * fs {
        return Err(Error::InvalidParams(
            "trigger and radar sample rates differ".into(),
        ));
    }
    if !(t_pri > 0.0) {
        return Err(Error::InvalidParams("PRI must be positive".into()));
    }
    let pri_len = (t_pri * fs).round() as usize;
    let t_end = trigger.len();
    let r_end = t_end + radar.len();
    let p_end = r_end + payload.len();
    if p_end > pri_len {
        return Err(Error::FrameOverflow {
            needed: p_end,
            available: pri_len,
        });
    }
    Ok(SignalFrame {
        trigger,
        radar,
        payload,
        t_pri,
        bounds: [(0, t_end), (t_end, r_end), (r_end, p_end)],
        pri_len,
    })
}

impl SignalFrame {
    pub fn sample_rate(&self) -> f64 {
        self.radar.sample_rate
    }

    /// Samples carrying signal.
    pub fn active_len(&self) -> usize {
        self.bounds[2].1
    }

    /// Fraction of the PRI occupied by signal.
    pub fn active_fraction(&self) -> f64 {
        self.active_len() as f64 / self.pri_len as f64
    }

    /// One PRI of samples, zero-padded after the last segment.
    pub fn samples(&self) -> Vec<Complex64> {
        let mut out = Vec::with_capacity(self.pri_len);
        out.extend_from_slice(&self.trigger.samples);
        out.extend_from_slice(&self.radar.samples);
        out.extend_from_slice(&self.payload);
        out.resize(self.pri_len, Complex64::new(0.0, 0.0));
        out
    }

    /// `count` back-to-back repetitions of the frame.
    pub fn repeat(&self, count: usize) -> ComplexSignal {
        let one = self.samples();
        let mut all = Vec::with_capacity(one.len() * count);
        for _ in 0..count {
            all.extend_from_slice(&one);
        }
        ComplexSignal::new(all, self.sample_rate(), 0.0)
    }

    /// Start index of the trigger segment of repetition `m`.
    pub fn trigger_start(&self, m: usize) -> usize {
        m * self.pri_len
    }
}

/// Duty cycle `t_active / t_pri`.
pub fn duty_cycle(t_active: f64, t_pri: f64) -> Result<f64> {
    if !(t_pri > 0.0) || !(t_active >= 0.0) || t_active > t_pri {
        return Err(Error::Domain {
            what: "t_active",
            value: t_active,
            min: 0.0,
            max: t_pri,
        });
    }
    Ok(t_active / t_pri)
}

/// Mean stored data rate `fs * nu * gamma * streams` [bit/s].
///
/// `streams` counts the converter values stored per sample instant; two for
/// the in-phase and quadrature parts of a complex sample.
pub fn mean_data_rate(fs: f64, nu: f64, gamma: f64, streams: u32) -> f64 {
    fs * nu * gamma * streams as f64
}

/// Usable bandwidth of a chirp of duration `t` when echoes arrive up to
/// `dt_max` late: `(t - dt_max) / t * b`.
pub fn effective_bandwidth_chirp(t: f64, dt_max: f64, b: f64) -> Result<f64> {
    if !(t > 0.0) || !(dt_max >= 0.0) || dt_max > t {
        return Err(Error::Domain {
            what: "dt_max",
            value: dt_max,
            min: 0.0,
            max: t,
        });
    }
    Ok((t - dt_max) / t * b)
}

/// Allowed timing offsets between nodes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TimingBudget {
    /// Fast-time offset a hardware-synchronized link would tolerate [s].
    pub sync: f64,
    /// Slow-time alignment needed to pair measurements across nodes [s].
    pub pri: f64,
    /// Offset that keeps motion-induced localization error in budget [s].
    pub loc: f64,
}

pub fn timing_budget(dr_max: f64, t_pri: f64, v_max: f64) -> TimingBudget {
    TimingBudget {
        sync: 2.0 * dr_max / C0,
        pri: t_pri,
        loc: 2.0 * dr_max / v_max,
    }
}

/// Largest sampling-frequency offset `(1 - delta_s) fs` that keeps the
/// sampling drift across one symbol below a range cell.
pub fn sfo_limit(params: &OfdmParams) -> f64 {
    let bt = params.bandwidth() * params.symbol_duration;
    let delta_min = 1.0 / (1.0 + 1.0 / bt);
    (1.0 - delta_min) * params.sample_rate
}

/// Largest tolerable carrier offset, a tenth of the subcarrier spacing.
pub fn cfo_limit(params: &OfdmParams) -> f64 {
    let delta_min = 1.0 - params.spacing / (10.0 * params.fc);
    (1.0 - delta_min) * params.fc
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn small() -> OfdmParams {
        OfdmParams {
            fc: 0.0,
            subcarriers: 64,
            spacing: 1e3,
            symbol_duration: 1.25e-3,
            cp_duration: 0.25e-3,
            sample_rate: 160e3,
            resolution_bits: 14,
            prf: 100.0,
        }
    }

    #[test]
    fn code_is_qpsk_and_deterministic() {
        let p = OfdmParams {
            subcarriers: 4,
            ..small()
        };
        let a = generate_code(&p, 11);
        let b = generate_code(&p, 11);
        assert_eq!(a, b);
        assert_eq!(a.d.len(), 4);
        for d in &a.d {
            assert!((d.norm() - 1.0).abs() < 1e-15);
            assert!((d.re.abs() - d.im.abs()).abs() < 1e-15);
        }
    }

    #[test]
    fn code_differs_across_seeds() {
        let p = OfdmParams::table1();
        let a = generate_code(&p, 5);
        let b = generate_code(&p, 6);
        assert!(a.d.iter().zip(&b.d).any(|(x, y)| x != y));
    }

    #[test]
    fn single_dc_subcarrier_is_constant() {
        let p = OfdmParams {
            subcarriers: 1,
            spacing: 100e3,
            sample_rate: 1e6,
            symbol_duration: 10e-6,
            cp_duration: 2e-6,
            ..small()
        };
        let code = CodeSymbols {
            d: vec![Complex64::new(1.0, 0.0)],
            seed: 0,
        };
        let x = generate_symbol(&p, &code).unwrap();
        assert_eq!(x.len(), 12);
        for s in &x.samples {
            assert!((s - Complex64::new(1.0, 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn table1_body_length() {
        let p = OfdmParams::table1();
        assert_eq!(p.body_len(), 12_800);
        assert_eq!(p.cp_len(), 3_200);
        assert_eq!(p.period_len().unwrap(), 10_240);
        let x = generate_symbol(&p, &generate_code(&p, 1)).unwrap();
        assert_eq!(x.len(), 16_000);
        assert!((x.start_time + 3.125e-6).abs() < 1e-15);
    }

    #[test]
    fn body_follows_the_subcarrier_sum() {
        let p = small();
        let code = generate_code(&p, 3);
        let x = generate_symbol(&p, &code).unwrap();
        let cp = p.cp_len();
        for k in [0usize, 1, 17, 100, 199] {
            let t = k as f64 / p.sample_rate;
            let direct: Complex64 = code
                .d
                .iter()
                .enumerate()
                .map(|(n, d)| d * cis_cycles(n as f64 * p.spacing * t))
                .sum();
            assert!((x.samples[cp + k] - direct).norm() < 1e-9);
        }
    }

    #[test]
    fn prefix_copies_body_tail_for_whole_periods() {
        let p = OfdmParams {
            symbol_duration: 1e-3,
            ..small()
        };
        let x = generate_symbol(&p, &generate_code(&p, 9)).unwrap();
        let cp = p.cp_len();
        let body = p.body_len();
        for i in 0..cp {
            assert!((x.samples[i] - x.samples[cp + body - cp + i]).norm() < 1e-9);
        }
    }

    #[test]
    fn rejects_bandwidth_above_sample_rate() {
        let p = OfdmParams {
            sample_rate: 32e3,
            ..small()
        };
        let code = generate_code(&p, 1);
        assert!(matches!(
            generate_symbol(&p, &code),
            Err(Error::Aliasing { .. })
        ));
        assert!(p.validate().is_err());
    }

    #[test]
    fn upconvert_identity_and_quarter_rate() {
        let x = ComplexSignal::new(vec![Complex64::new(1.0, 0.0); 8], 4.0, 0.0);
        assert_eq!(upconvert(&x, 0.0, 0.0).unwrap(), x);
        let y = upconvert(&x, 1.0, 0.0).unwrap();
        let expect = [
            Complex64::new(1.0, 0.0),
            Complex64::new(0.0, 1.0),
            Complex64::new(-1.0, 0.0),
            Complex64::new(0.0, -1.0),
        ];
        for (k, s) in y.samples.iter().enumerate() {
            assert!((s - expect[k % 4]).norm() < 1e-12);
        }
    }

    #[test]
    fn upconvert_rejects_aliasing() {
        let p = OfdmParams::table1();
        let x = ComplexSignal::zeros(4, p.sample_rate, 0.0);
        assert!(upconvert(&x, p.fc, p.bandwidth()).is_err());
    }

    #[test]
    fn frame_layout_and_overflow() {
        let fs = 1e6;
        let trig = ComplexSignal::new(vec![Complex64::new(1.0, 0.0); 10], fs, 0.0);
        let radar = ComplexSignal::new(vec![Complex64::new(0.0, 1.0); 20], fs, 0.0);
        let f = assemble_frame(trig.clone(), radar.clone(), vec![], 1e-4).unwrap();
        assert_eq!(f.bounds, [(0, 10), (10, 30), (30, 30)]);
        assert_eq!(f.pri_len, 100);
        assert!((f.active_fraction() - 0.3).abs() < 1e-15);
        let s = f.repeat(3);
        assert_eq!(s.len(), 300);
        assert_eq!(s.samples[f.trigger_start(2)], Complex64::new(1.0, 0.0));
        assert_eq!(s.samples[f.trigger_start(2) + 10], Complex64::new(0.0, 1.0));

        let only = assemble_frame(
            ComplexSignal::zeros(0, fs, 0.0),
            radar.clone(),
            vec![],
            1e-4,
        )
        .unwrap();
        assert_eq!(only.active_len(), 20);

        let long = ComplexSignal::zeros(11_000, fs, 0.0);
        assert!(matches!(
            assemble_frame(ComplexSignal::zeros(0, fs, 0.0), long, vec![], 10e-3),
            Err(Error::FrameOverflow { .. })
        ));
    }

    #[test]
    fn table2_frame_duty_cycle() {
        let p = OfdmParams::table1();
        let radar = ComplexSignal::zeros(p.segment_len(), p.sample_rate, 0.0);
        let f = assemble_frame(
            ComplexSignal::zeros(0, p.sample_rate, 0.0),
            radar,
            vec![],
            p.pri(),
        )
        .unwrap();
        assert!((f.active_fraction() - 0.0015625).abs() < 1e-12);
    }

    #[test]
    fn budgets() {
        assert!((duty_cycle(15.625e-6, 10e-3).unwrap() - 0.0015625).abs() < 1e-15);
        assert!((duty_cycle(15.625e-6, 50e-3).unwrap() - 0.0003125).abs() < 1e-15);
        assert_eq!(duty_cycle(1.0, 1.0).unwrap(), 1.0);
        assert!(duty_cycle(2.0, 1.0).is_err());
        assert!(duty_cycle(-1.0, 1.0).is_err());

        assert!((mean_data_rate(1.024e9, 14.0, 0.0015625, 2) - 44.8e6).abs() < 1e-3);
        assert!((mean_data_rate(1.024e9, 14.0, 0.0003125, 2) - 8.96e6).abs() < 1e-3);
        assert_eq!(mean_data_rate(1.024e9, 14.0, 0.0, 2), 0.0);

        assert_eq!(effective_bandwidth_chirp(1.0, 0.0, 5.0).unwrap(), 5.0);
        let b = effective_bandwidth_chirp(12.5e-6, 1.25e-6, 409.6e6).unwrap();
        assert!((b - 368.64e6).abs() < 1e-3);
        assert_eq!(effective_bandwidth_chirp(2.0, 2.0, 5.0).unwrap(), 0.0);
        assert!(effective_bandwidth_chirp(1.0, 1.5, 5.0).is_err());

        let tb = timing_budget(0.02, 10e-3, 10.0);
        assert!((tb.sync - 133.4e-12).abs() < 0.1e-12);
        assert_eq!(tb.pri, 10e-3);
        assert!((tb.loc - 4e-3).abs() < 1e-15);

        let p = OfdmParams::table1();
        assert!((sfo_limit(&p) - 200e3).abs() / 200e3 < 1e-3);
        assert!((cfo_limit(&p) - 10e3).abs() < 1e-6);
    }

    proptest! {
        #[test]
        fn bandwidth_identity(n in 1usize..5000, df in 1.0f64..1e6) {
            let p = OfdmParams { subcarriers: n, spacing: df, ..small() };
            prop_assert_eq!(p.bandwidth(), n as f64 * df);
        }

        #[test]
        fn period_energy_is_n(seed in any::<u64>()) {
            let p = small();
            let x = generate_symbol(&p, &generate_code(&p, seed)).unwrap();
            let period = p.period_len().unwrap();
            let cp = p.cp_len();
            let e: f64 = x.samples[cp..cp + period].iter().map(|s| s.norm_sqr()).sum::<f64>()
                / period as f64;
            prop_assert!((e - p.subcarriers as f64).abs() < 1e-9 * p.subcarriers as f64);
        }

        #[test]
        fn budgets_linear_in_range_error(dr in 1e-4f64..1.0, k in 1.0f64..10.0) {
            let a = timing_budget(dr, 1e-2, 10.0);
            let b = timing_budget(dr * k, 1e-2, 10.0);
            prop_assert!((b.sync - k * a.sync).abs() <= 1e-12 * b.sync);
            prop_assert!((b.loc - k * a.loc).abs() <= 1e-12 * b.loc);
        }
    }
}
