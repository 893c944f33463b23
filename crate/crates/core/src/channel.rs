//! Propagation of the radar segment and injection of inter-node errors.
//!
//! Delays are applied per subcarrier as the phase ramp
//! `e^{-j 2 pi (n spacing + fc) tof}`, which is exact for the periodic
//! OFDM symbol as long as the effective delay stays inside the
//! cyclic-prefix guard (see [`OfdmParams::delay_guard`]). The captured window
//! is modelled as the steady-state (cyclic) response.
//!
//! Receiver-side errors for a bistatic node:
//!
//! | error | model |
//! |-------|-------|
//! | SFO   | receiver samples at `delta_s * fs` |
//! | CFO   | residual mix by `(1 - delta_c) fc` after downconversion |
//! | CPE   | per-measurement phase, uniform in `+-cpe_max` |
//! | TO    | per-measurement window shift, uniform in `+-to_max` |
//!
//! A monostatic receiver shares the transmitter clock and sees none of them.
//! Localization errors only affect the trajectories reported for processing.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::dsp::{chirp_z, cis_cycles, fft_in_place, ifft_in_place};
use crate::rng::{derive, stream, stream_rng};
use crate::scene::{position_at, tof_bistatic, tof_sidelink, Receiver, Scene, Trajectory};
use crate::waveform::{mix, synthesize, CodeSymbols, OfdmParams};
use crate::{ComplexSignal, Error, Result, C0};

/// Error injection settings for one campaign.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorConfig {
    /// Receiver sample rate over transmitter sample rate.
    pub delta_s: f64,
    /// Receiver carrier over transmitter carrier.
    pub delta_c: f64,
    /// Maximum carrier phase error per measurement [rad].
    pub cpe_max: f64,
    /// Maximum timing offset per measurement [s].
    pub to_max: f64,
    /// Per-axis localization error standard deviation [m].
    pub loc_sigma: f64,
    /// Moving-average length applied to localization errors [samples], odd.
    pub loc_window: usize,
    /// Complex AWGN standard deviation per sample; zero disables noise.
    pub noise_std: f64,
    pub seed: u64,
}

impl Default for ErrorConfig {
    fn default() -> Self {
        Self::ideal(0)
    }
}

impl ErrorConfig {
    /// No errors at all.
    pub fn ideal(seed: u64) -> Self {
        Self {
            delta_s: 1.0,
            delta_c: 1.0,
            cpe_max: 0.0,
            to_max: 0.0,
            loc_sigma: 0.0,
            loc_window: 1,
            noise_std: 0.0,
            seed,
        }
    }

    /// Sets `delta_s` from a sampling-frequency offset `(1 - delta_s) fs`.
    pub fn with_sfo(mut self, f_sfo: f64, fs: f64) -> Self {
        self.delta_s = 1.0 - f_sfo / fs;
        self
    }

    /// Sets `delta_c` from a carrier-frequency offset `(1 - delta_c) fc`.
    pub fn with_cfo(mut self, f_cfo: f64, fc: f64) -> Self {
        self.delta_c = 1.0 - f_cfo / fc;
        self
    }

    pub fn sfo_hz(&self, params: &OfdmParams) -> f64 {
        (1.0 - self.delta_s) * params.sample_rate
    }

    pub fn cfo_hz(&self, params: &OfdmParams) -> f64 {
        (1.0 - self.delta_c) * params.fc
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParams(m.to_string()));
        if !(self.delta_s > 0.0) || !(self.delta_c > 0.0) {
            return bad("delta_s and delta_c must be positive");
        }
        if !(self.cpe_max >= 0.0) || !(self.to_max >= 0.0) || !(self.loc_sigma >= 0.0) {
            return bad("cpe_max, to_max and loc_sigma must be >= 0");
        }
        if !(self.noise_std >= 0.0) {
            return bad("noise_std must be >= 0");
        }
        if self.loc_window < 1 || self.loc_window.is_multiple_of(2) {
            return bad("loc_window must be odd and >= 1");
        }
        Ok(())
    }
}

/// Delays `x` by `tof` and scales it by `amplitude`.
///
/// `x` is treated as one period of a periodic band-limited signal whose DFT
/// bin `k` sits at `k fs / L` (the one-sided OFDM layout); every bin is
/// rotated by `e^{-j 2 pi (f_k + fc) tof}`. Exact for a whole number of
/// symbol periods, and for integer sample delays of any signal (cyclic shift).
pub fn propagate(x: &ComplexSignal, tof: f64, amplitude: Complex64, fc: f64) -> ComplexSignal {
    let len = x.len();
    if len == 0 {
        return x.clone();
    }
    let mut buf = x.samples.clone();
    fft_in_place(&mut buf);
    let bin_hz = x.sample_rate / len as f64;
    let carrier = cis_cycles(-fc * tof);
    let scale = amplitude * carrier / len as f64;
    for (k, v) in buf.iter_mut().enumerate() {
        *v *= cis_cycles(-(k as f64) * bin_hz * tof) * scale;
    }
    ifft_in_place(&mut buf);
    ComplexSignal::new(buf, x.sample_rate, x.start_time)
}

/// Echo amplitude `reflectivity / (R_tx * R_rx)` with legs in meters.
pub fn free_space_amplitude(
    tof_tx_leg: f64,
    tof_rx_leg: f64,
    reflectivity: Complex64,
) -> Result<Complex64> {
    let r_tx = C0 * tof_tx_leg;
    let r_rx = C0 * tof_rx_leg;
    if !(r_tx > 0.0) || !(r_rx > 0.0) {
        return Err(Error::Domain {
            what: "path leg",
            value: r_tx.min(r_rx),
            min: f64::MIN_POSITIVE,
            max: f64::INFINITY,
        });
    }
    Ok(reflectivity / (r_tx * r_rx))
}

/// Re-samples `y` as a receiver running at `delta_s * fs` would see it:
/// output sample `k` is `y` evaluated at `k / (delta_s fs)` after the first
/// sample. Band-limited interpolation with the same periodic model as
/// [`propagate`]; the length is preserved.
pub fn resample_sfo(y: &ComplexSignal, delta_s: f64) -> ComplexSignal {
    let len = y.len();
    if len == 0 {
        return y.clone();
    }
    let mut coeffs = y.samples.clone();
    fft_in_place(&mut coeffs);
    let inv = 1.0 / len as f64;
    for c in &mut coeffs {
        *c *= inv;
    }
    let samples = chirp_z(&coeffs, inv / delta_s, len);
    ComplexSignal::new(samples, y.sample_rate, y.start_time)
}

/// Residual carrier after downconversion: sample `k` times
/// `e^{j 2 pi f_cfo k / fs}`.
pub fn apply_cfo(y: &ComplexSignal, f_cfo: f64) -> ComplexSignal {
    mix(y, f_cfo)
}

/// Per-measurement slow-time clock errors of one receiver.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SlowTimeError {
    /// Carrier phase error [rad].
    pub cpe: f64,
    /// Timing offset `t0_tx - t0_rx` [s].
    pub to: f64,
}

/// Uniform draws in `+-cpe_max` and `+-to_max`, one stream per measurement.
pub fn draw_slow_time_errors(cfg: &ErrorConfig, count: usize) -> Vec<SlowTimeError> {
    (0..count).map(|m| slow_time_error(cfg, m)).collect()
}

fn slow_time_error(cfg: &ErrorConfig, m: usize) -> SlowTimeError {
    let mut rng = stream_rng(cfg.seed, &[stream::SLOW_TIME, m as u64]);
    let u1: f64 = rng.random();
    let u2: f64 = rng.random();
    SlowTimeError {
        cpe: (2.0 * u1 - 1.0) * cfg.cpe_max,
        to: (2.0 * u2 - 1.0) * cfg.to_max,
    }
}

/// Moves the receiver sampling window by `t_to`: the signal is advanced by
/// `t_to`, including the carrier phase `e^{+j 2 pi fc t_to}`.
///
/// `path_delays` are the channel delays already present in `y`; each
/// `delay - t_to` must stay inside the cyclic-prefix guard.
pub fn apply_timing_offset(
    y: &ComplexSignal,
    t_to: f64,
    params: &OfdmParams,
    path_delays: &[f64],
) -> Result<ComplexSignal> {
    let (min, max) = params.delay_guard()?;
    for &d in path_delays {
        check_guard(d - t_to, min, max)?;
    }
    Ok(propagate(y, -t_to, Complex64::new(1.0, 0.0), params.fc))
}

fn check_guard(delay: f64, min: f64, max: f64) -> Result<()> {
    if delay < min || delay > max {
        return Err(Error::GuardViolation { delay, min, max });
    }
    Ok(())
}

/// Adds smoothed Gaussian errors to every position of `traj`.
///
/// Draws are i.i.d. `N(0, loc_sigma)` per axis, then averaged over a centred
/// window of `loc_window` samples (truncated at the ends).
pub fn perturb_localization(
    traj: &Trajectory,
    loc_sigma: f64,
    loc_window: usize,
    seed: u64,
) -> Result<Trajectory> {
    if loc_window < 1 || loc_window.is_multiple_of(2) {
        return Err(Error::InvalidParams(
            "loc_window must be odd and >= 1".into(),
        ));
    }
    if loc_sigma == 0.0 {
        return Ok(traj.clone());
    }
    let normal =
        Normal::new(0.0, loc_sigma).map_err(|e| Error::InvalidParams(format!("loc_sigma: {e}")))?;
    let mut rng = stream_rng(seed, &[stream::LOCALIZATION]);
    let n = traj.len();
    let raw: Vec<[f64; 3]> = (0..n)
        .map(|_| {
            [
                normal.sample(&mut rng),
                normal.sample(&mut rng),
                normal.sample(&mut rng),
            ]
        })
        .collect();
    let half = loc_window / 2;
    let samples = traj
        .samples
        .iter()
        .enumerate()
        .map(|(i, &(t, p))| {
            let lo = i.saturating_sub(half);
            let hi = (i + half).min(n - 1);
            let cnt = (hi - lo + 1) as f64;
            let mut e = [0.0; 3];
            for r in &raw[lo..=hi] {
                for a in 0..3 {
                    e[a] += r[a];
                }
            }
            (t, [p[0] + e[0] / cnt, p[1] + e[1] / cnt, p[2] + e[2] / cnt])
        })
        .collect();
    Ok(Trajectory {
        node_id: traj.node_id.clone(),
        samples,
    })
}

/// Ground truth recorded with each measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct Truth {
    /// Geometric transmitter -> target -> receiver ToF per target [s].
    pub target_tofs: Vec<f64>,
    /// Geometric sidelink ToF (bistatic receivers) [s].
    pub sidelink_tof: Option<f64>,
    /// Clock errors applied to this measurement.
    pub clock: SlowTimeError,
}

/// One captured radar window (prefix + body) per receive channel.
#[derive(Debug, Clone)]
pub struct Measurement {
    pub index: usize,
    /// Slow-time instant `m / prf` [s].
    pub t: f64,
    pub rx_radar: ComplexSignal,
    /// Sidelink channel, bistatic receivers only.
    pub rx_sidelink: Option<ComplexSignal>,
    pub truth: Truth,
}

/// Everything one receiver recorded during a campaign.
#[derive(Debug, Clone)]
pub struct ReceiverRecord {
    pub receiver: usize,
    pub monostatic: bool,
    pub measurements: Vec<Measurement>,
}

/// Output of [`simulate_campaign`].
#[derive(Debug, Clone)]
pub struct Campaign {
    pub receivers: Vec<ReceiverRecord>,
    /// Transmitter trajectory as reported by its (perturbed) localization.
    pub reported_tx: Trajectory,
    /// Per receiver, the reported receive-antenna trajectory.
    pub reported_rx: Vec<Trajectory>,
}

/// Simulation context shared by all measurements of a campaign.
pub struct Simulator<'a> {
    pub scene: &'a Scene,
    pub params: &'a OfdmParams,
    pub code: &'a CodeSymbols,
    pub errors: ErrorConfig,
}

impl<'a> Simulator<'a> {
    pub fn new(
        scene: &'a Scene,
        params: &'a OfdmParams,
        code: &'a CodeSymbols,
        errors: ErrorConfig,
    ) -> Result<Self> {
        params.validate()?;
        errors.validate()?;
        params.period_len()?;
        if code.d.len() != params.subcarriers {
            return Err(Error::LengthMismatch {
                expected: params.subcarriers,
                actual: code.d.len(),
            });
        }
        Ok(Self {
            scene,
            params,
            code,
            errors,
        })
    }

    /// Error settings of receiver `r`; each bistatic node has its own
    /// random streams.
    pub fn receiver_errors(&self, r: usize) -> ErrorConfig {
        ErrorConfig {
            seed: derive(self.errors.seed, &[r as u64]),
            ..self.errors
        }
    }

    /// Simulates measurement `m` at receiver `r`.
    pub fn measurement(&self, r: usize, m: usize) -> Result<Measurement> {
        let p = self.params;
        let scene = self.scene;
        let receiver = &scene.receivers[r];
        let t = m as f64 / p.prf;
        let tx = position_at(&scene.tx, t)?;
        let rx = position_at(receiver.trajectory(&scene.tx), t)?;
        let tau_cal = scene.r_cal / C0;

        let (clock, cfg) = match receiver {
            Receiver::Monostatic => (SlowTimeError::default(), ErrorConfig::ideal(0)),
            Receiver::Bistatic(_) => {
                let cfg = self.receiver_errors(r);
                (slow_time_error(&cfg, m), cfg)
            }
        };
        let (gmin, gmax) = p.delay_guard()?;

        let mut paths = Vec::with_capacity(scene.targets.len());
        let mut target_tofs = Vec::with_capacity(scene.targets.len());
        for q in &scene.targets {
            let tof = tof_bistatic(tx, rx, q.pos);
            target_tofs.push(tof);
            let amp = if scene.propagation.path_loss {
                free_space_amplitude(
                    tof_sidelink(tx, q.pos),
                    tof_sidelink(q.pos, rx),
                    q.reflectivity,
                )?
            } else {
                q.reflectivity
            };
            let delay = tof + tau_cal - clock.to;
            check_guard(delay, gmin, gmax)?;
            paths.push((amp, delay));
        }
        let rx_radar = self.capture(&paths, clock.cpe, &cfg, r, m, 0);

        let (rx_sidelink, sidelink_tof) = match receiver {
            Receiver::Monostatic => (None, None),
            Receiver::Bistatic(_) => {
                let tof = tof_sidelink(tx, rx);
                let delay = tof + tau_cal - clock.to;
                check_guard(delay, gmin, gmax)?;
                let sl = [(scene.propagation.sidelink_gain, delay)];
                (Some(self.capture(&sl, clock.cpe, &cfg, r, m, 1)), Some(tof))
            }
        };

        Ok(Measurement {
            index: m,
            t,
            rx_radar,
            rx_sidelink,
            truth: Truth {
                target_tofs,
                sidelink_tof,
                clock,
            },
        })
    }

    /// Receiver window for a sum of delayed copies of the radar segment.
    fn capture(
        &self,
        paths: &[(Complex64, f64)],
        cpe: f64,
        cfg: &ErrorConfig,
        r: usize,
        m: usize,
        channel: u64,
    ) -> ComplexSignal {
        let p = self.params;
        let fs = p.sample_rate;
        let phase = Complex64::from_polar(1.0, cpe);
        let coeffs: Vec<Complex64> = self
            .code
            .d
            .iter()
            .enumerate()
            .map(|(n, &d)| {
                let f = n as f64 * p.spacing + p.fc;
                let h: Complex64 = paths
                    .iter()
                    .map(|&(a, delay)| a * cis_cycles(-f * delay))
                    .sum();
                d * h * phase
            })
            .collect();
        let t0 = -(p.cp_len() as f64) / fs;
        let dt = 1.0 / (cfg.delta_s * fs);
        let samples = synthesize(&coeffs, p, t0, dt, p.segment_len());
        let mut y = ComplexSignal::new(samples, fs, t0);
        if cfg.delta_c != 1.0 {
            y = apply_cfo(&y, (1.0 - cfg.delta_c) * p.fc);
        }
        if cfg.noise_std > 0.0 {
            let sigma = cfg.noise_std / std::f64::consts::SQRT_2;
            let normal = Normal::new(0.0, sigma).expect("finite sigma");
            let mut rng = stream_rng(
                self.errors.seed,
                &[stream::NOISE, r as u64, m as u64, channel],
            );
            for s in &mut y.samples {
                *s += Complex64::new(normal.sample(&mut rng), normal.sample(&mut rng));
            }
        }
        y
    }

    /// Trajectories handed to processing: truth plus localization error.
    pub fn reported_trajectories(&self) -> Result<(Trajectory, Vec<Trajectory>)> {
        let e = &self.errors;
        let perturb = |traj: &Trajectory, node: u64| {
            perturb_localization(
                traj,
                e.loc_sigma,
                e.loc_window,
                derive(e.seed, &[stream::LOCALIZATION, node]),
            )
        };
        let tx = perturb(&self.scene.tx, 0)?;
        let rx = self
            .scene
            .receivers
            .iter()
            .enumerate()
            .map(|(r, rcv)| match rcv {
                Receiver::Monostatic => Ok(tx.clone()),
                Receiver::Bistatic(t) => perturb(t, r as u64 + 1),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok((tx, rx))
    }
}

/// Runs `count` measurements at every receiver of `scene`.
///
/// Measurements are simulated in parallel; each draws from its own random
/// streams so the result does not depend on scheduling.
pub fn simulate_campaign(
    scene: &Scene,
    params: &OfdmParams,
    code: &CodeSymbols,
    cfg: &ErrorConfig,
    count: usize,
) -> Result<Campaign> {
    if count < 1 {
        return Err(Error::InvalidParams(
            "campaign needs >= 1 measurement".into(),
        ));
    }
    scene.check_coverage(params.prf, count)?;
    let sim = Simulator::new(scene, params, code, *cfg)?;
    let receivers = (0..scene.receivers.len())
        .map(|r| {
            let measurements = (0..count)
                .into_par_iter()
                .map(|m| sim.measurement(r, m))
                .collect::<Result<Vec<_>>>()?;
            Ok(ReceiverRecord {
                receiver: r,
                monostatic: scene.receivers[r].is_monostatic(),
                measurements,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let (reported_tx, reported_rx) = sim.reported_trajectories()?;
    Ok(Campaign {
        receivers,
        reported_tx,
        reported_rx,
    })
}
