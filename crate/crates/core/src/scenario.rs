//! Scenario files: one TOML document describing waveform, geometry, errors,
//! processing and outputs of a run.
//!
//! Every key is optional; omitted keys take the defaults of the reference
//! simulation (1.2 GHz, 4096 x 100 kHz, 30 m linear flight at 10 m altitude,
//! five point targets between 5 m and 25 m ground range). Unknown keys are
//! rejected. See `scenarios/table1_sim.toml` for a fully spelled-out file.

use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::ErrorConfig;
use crate::imaging::PixelGrid;
use crate::rangeproc::{ProcessOptions, Window};
use crate::scene::{linear_trajectory, tof_bistatic, PointTarget, Propagation, Receiver, Scene};
use crate::vec3::{add, scale};
use crate::waveform::OfdmParams;
use crate::{Error, Result, Vec3, C0};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Scenario {
    pub seed: u64,
    /// Number of measurements `M` along the flight path.
    pub measurements: usize,
    pub waveform: WaveformConfig,
    pub geometry: GeometryConfig,
    pub errors: ErrorsConfig,
    pub processing: ProcessingConfig,
    pub grid: GridConfig,
    pub trigger: TriggerConfig,
    pub budget: BudgetConfig,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            seed: 1,
            measurements: 3001,
            waveform: WaveformConfig::default(),
            geometry: GeometryConfig::default(),
            errors: ErrorsConfig::default(),
            processing: ProcessingConfig::default(),
            grid: GridConfig::default(),
            trigger: TriggerConfig::default(),
            budget: BudgetConfig::default(),
        }
    }
}

/// Waveform parameters; field meanings as in [`OfdmParams`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WaveformConfig {
    pub fc: f64,
    pub subcarriers: usize,
    pub spacing: f64,
    pub symbol_duration: f64,
    pub cp_duration: f64,
    pub sample_rate: f64,
    pub resolution_bits: u32,
    pub prf: f64,
    /// Converter values per sample instant used in the data-rate budget.
    pub streams: u32,
}

impl Default for WaveformConfig {
    fn default() -> Self {
        let p = OfdmParams::table1();
        Self {
            fc: p.fc,
            subcarriers: p.subcarriers,
            spacing: p.spacing,
            symbol_duration: p.symbol_duration,
            cp_duration: p.cp_duration,
            sample_rate: p.sample_rate,
            resolution_bits: p.resolution_bits,
            prf: p.prf,
            streams: 2,
        }
    }
}

impl WaveformConfig {
    pub fn params(&self) -> OfdmParams {
        OfdmParams {
            fc: self.fc,
            subcarriers: self.subcarriers,
            spacing: self.spacing,
            symbol_duration: self.symbol_duration,
            cp_duration: self.cp_duration,
            sample_rate: self.sample_rate,
            resolution_bits: self.resolution_bits,
            prf: self.prf,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReceiverKind {
    Mono,
    Bistatic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReceiverConfig {
    pub kind: ReceiverKind,
    /// Fixed offset from the transmitter [m]; bistatic only.
    #[serde(default)]
    pub offset: Vec3,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetConfig {
    pub position: Vec3,
    /// `[re, im]`.
    #[serde(default = "unit")]
    pub reflectivity: [f64; 2],
}

fn unit() -> [f64; 2] {
    [1.0, 0.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometryConfig {
    /// Transmitter position at `t = 0` [m].
    pub start: Vec3,
    /// Transmitter velocity [m/s].
    pub velocity: Vec3,
    /// Internal chain delay as range [m].
    pub r_cal: f64,
    pub path_loss: bool,
    pub sidelink_gain: [f64; 2],
    pub receivers: Vec<ReceiverConfig>,
    pub targets: Vec<TargetConfig>,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        let targets = [
            (-8.0, 5.0),
            (-4.0, 10.0),
            (0.0, 15.0),
            (4.0, 20.0),
            (8.0, 25.0),
        ]
        .iter()
        .map(|&(x, y)| TargetConfig {
            position: [x, y, 0.0],
            reflectivity: unit(),
        })
        .collect();
        Self {
            start: [-15.0, 0.0, 10.0],
            velocity: [1.0, 0.0, 0.0],
            r_cal: 0.0,
            path_loss: true,
            sidelink_gain: unit(),
            receivers: vec![ReceiverConfig {
                kind: ReceiverKind::Bistatic,
                offset: [0.0; 3],
            }],
            targets,
        }
    }
}

/// Clock and localization errors of every bistatic receiver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ErrorsConfig {
    /// Sampling-frequency offset `(1 - delta_s) fs` [Hz].
    pub sfo_hz: f64,
    /// Carrier-frequency offset `(1 - delta_c) fc` [Hz].
    pub cfo_hz: f64,
    /// Carrier phase error drawn uniformly from `[-cpe_max, cpe_max]` [rad].
    pub cpe_max: f64,
    /// Timing offset drawn uniformly from `[-to_max, to_max]` [s].
    pub to_max: f64,
    /// Per-axis localization error [m].
    pub loc_sigma: f64,
    pub loc_window: usize,
    pub noise_std: f64,
}

impl Default for ErrorsConfig {
    fn default() -> Self {
        Self {
            sfo_hz: 0.0,
            cfo_hz: 0.0,
            cpe_max: 0.0,
            to_max: 0.0,
            loc_sigma: 0.0,
            loc_window: 1,
            noise_std: 0.0,
        }
    }
}

/// Which receiver chains `process` and `image` run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Radar channel only, every receiver. For bistatic receivers this is
    /// the uncorrected result.
    Mono,
    /// Sidelink-corrected processing of bistatic receivers.
    Bistatic,
    Both,
}

impl Mode {
    pub fn mono(self) -> bool {
        matches!(self, Mode::Mono | Mode::Both)
    }

    pub fn bistatic(self) -> bool {
        matches!(self, Mode::Bistatic | Mode::Both)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProcessingConfig {
    pub window: Window,
    pub oversample: usize,
    /// Estimated internal delay removed by monostatic calibration [m].
    pub r_cal_hat: f64,
    pub mode: Mode,
}

impl Default for ProcessingConfig {
    fn default() -> Self {
        Self {
            window: Window::None,
            oversample: 8,
            r_cal_hat: 0.0,
            mode: Mode::Both,
        }
    }
}

impl ProcessingConfig {
    pub fn options(&self) -> ProcessOptions {
        ProcessOptions {
            window: self.window,
            oversample: self.oversample,
            r_cal_hat: self.r_cal_hat,
        }
    }
}

/// Ground-plane pixel grid; `x` is cross-range, `y` ground range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub x0: f64,
    pub y0: f64,
    pub dx: f64,
    pub dy: f64,
    pub nx: usize,
    pub ny: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            x0: -10.0,
            y0: 3.0,
            dx: 0.02,
            dy: 0.05,
            nx: 1001,
            ny: 481,
        }
    }
}

impl GridConfig {
    pub fn pixel_grid(&self) -> PixelGrid {
        PixelGrid::ground(self.x0, self.y0, self.dx, self.dy, self.nx, self.ny)
    }
}

/// Streaming trigger experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TriggerConfig {
    pub pn_order: u32,
    pub threshold: f64,
    /// Frames in the simulated stream.
    pub frames: usize,
    /// Frame spacing of the simulated stream [s].
    pub pri: f64,
    /// Chip-to-noise ratio [dB].
    pub snr_db: f64,
}

impl Default for TriggerConfig {
    fn default() -> Self {
        Self {
            pn_order: 10,
            threshold: 0.6,
            frames: 3,
            pri: 50e-6,
            snr_db: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BudgetConfig {
    /// Largest acceptable one-way range error [m].
    pub range_error_max: f64,
    /// Largest platform speed [m/s].
    pub v_max: f64,
}

impl Default for BudgetConfig {
    fn default() -> Self {
        Self {
            range_error_max: 0.02,
            v_max: 10.0,
        }
    }
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::Validation(msg.into())
}

impl Scenario {
    /// Reads, parses and validates a scenario file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let s: Scenario = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn params(&self) -> OfdmParams {
        self.waveform.params()
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.params();
        p.validate()
            .map_err(|e| invalid(format!("waveform: {e}")))?;
        p.period_len()
            .map_err(|e| invalid(format!("waveform: {e}")))?;
        if self.waveform.streams < 1 {
            return Err(invalid("waveform.streams must be >= 1"));
        }
        if self.measurements < 1 {
            return Err(invalid("measurements must be >= 1"));
        }
        let g = &self.geometry;
        let finite = |v: Vec3| v.iter().all(|x| x.is_finite());
        if !finite(g.start) || !finite(g.velocity) || !g.r_cal.is_finite() {
            return Err(invalid(
                "geometry: start, velocity and r_cal must be finite",
            ));
        }
        if g.r_cal < 0.0 {
            return Err(invalid("geometry.r_cal must be >= 0"));
        }
        if g.receivers.is_empty() {
            return Err(invalid("geometry: at least one receiver is required"));
        }
        for (i, r) in g.receivers.iter().enumerate() {
            if !finite(r.offset) {
                return Err(invalid(format!(
                    "geometry.receivers[{i}].offset must be finite"
                )));
            }
            if r.kind == ReceiverKind::Mono && r.offset != [0.0; 3] {
                return Err(invalid(format!(
                    "geometry.receivers[{i}]: a mono receiver has no offset"
                )));
            }
        }
        for (i, t) in g.targets.iter().enumerate() {
            if !finite(t.position) || !t.reflectivity.iter().all(|x| x.is_finite()) {
                return Err(invalid(format!("geometry.targets[{i}] must be finite")));
            }
        }
        self.error_config()
            .validate()
            .map_err(|e| invalid(format!("errors: {e}")))?;
        let o = self.processing.oversample;
        if o < 1 {
            return Err(invalid("processing.oversample must be >= 1"));
        }
        if !(self.processing.r_cal_hat >= 0.0) {
            return Err(invalid("processing.r_cal_hat must be >= 0"));
        }
        self.grid
            .pixel_grid()
            .validate()
            .map_err(|e| invalid(format!("grid: {e}")))?;
        let t = &self.trigger;
        if !(3..=20).contains(&t.pn_order) {
            return Err(invalid("trigger.pn_order must be in 3..=20"));
        }
        if !(t.threshold > 0.0 && t.threshold <= 1.0) {
            return Err(invalid("trigger.threshold must be in (0, 1]"));
        }
        if t.frames < 1 || !t.snr_db.is_finite() {
            return Err(invalid("trigger.frames must be >= 1 and snr_db finite"));
        }
        let frame = (1usize << t.pn_order) - 1 + p.segment_len();
        if ((t.pri * p.sample_rate).round() as usize) < frame {
            return Err(invalid(format!(
                "trigger.pri holds fewer than the {frame} samples of one frame"
            )));
        }
        let b = &self.budget;
        if !(b.range_error_max > 0.0 && b.v_max > 0.0) {
            return Err(invalid("budget values must be positive"));
        }
        self.check_guard()
    }

    /// Every echo and sidelink delay, shifted by the largest timing offset,
    /// must stay inside the cyclic-prefix guard.
    fn check_guard(&self) -> Result<()> {
        let p = self.params();
        let (lo, hi) = p.delay_guard()?;
        let g = &self.geometry;
        let t_end = (self.measurements - 1) as f64 / p.prf;
        let tau_cal = g.r_cal / C0;
        let slack = self.errors.to_max + 4.0 * self.errors.loc_sigma / C0;
        // Path lengths along a straight flight are convex in time, so the
        // extremes of the largest delay sit at the ends of the track.
        let mut worst: f64 = 0.0;
        let mut least = f64::INFINITY;
        for t in [0.0, t_end] {
            let tx = add(g.start, scale(g.velocity, t));
            for r in &g.receivers {
                let rx = add(tx, r.offset);
                least = least.min(crate::vec3::dist(tx, rx) / C0);
                worst = worst.max(crate::vec3::dist(tx, rx) / C0);
                for q in &g.targets {
                    worst = worst.max(tof_bistatic(tx, rx, q.position));
                }
            }
        }
        if worst + tau_cal + slack > hi || least + tau_cal - slack < lo {
            return Err(invalid(format!(
                "path delays up to {:.3e} s leave the cyclic-prefix guard [{lo:.3e}, {hi:.3e}] s",
                worst + tau_cal + slack
            )));
        }
        Ok(())
    }

    pub fn error_config(&self) -> ErrorConfig {
        let p = self.params();
        let e = &self.errors;
        ErrorConfig {
            cpe_max: e.cpe_max,
            to_max: e.to_max,
            loc_sigma: e.loc_sigma,
            loc_window: e.loc_window,
            noise_std: e.noise_std,
            ..ErrorConfig::ideal(self.seed)
                .with_sfo(e.sfo_hz, p.sample_rate)
                .with_cfo(e.cfo_hz, p.fc)
        }
    }

    /// Ground-truth scene: transmitter track, receivers and targets.
    pub fn scene(&self) -> Result<Scene> {
        let p = self.params();
        let g = &self.geometry;
        let tx = linear_trajectory("tx", g.start, g.velocity, p.prf, self.measurements)?;
        let receivers = g
            .receivers
            .iter()
            .enumerate()
            .map(|(i, r)| match r.kind {
                ReceiverKind::Mono => Receiver::Monostatic,
                ReceiverKind::Bistatic => {
                    Receiver::Bistatic(tx.translated(format!("rx{i}"), r.offset))
                }
            })
            .collect();
        let targets = g
            .targets
            .iter()
            .map(|t| {
                PointTarget::new(
                    t.position,
                    Complex64::new(t.reflectivity[0], t.reflectivity[1]),
                )
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Scene {
            tx,
            receivers,
            targets,
            r_cal: g.r_cal,
            propagation: Propagation {
                path_loss: g.path_loss,
                sidelink_gain: Complex64::new(g.sidelink_gain[0], g.sidelink_gain[1]),
            },
        })
    }

    /// Replaces the seed, e.g. from a command-line flag.
    pub fn with_seed(mut self, seed: Option<u64>) -> Self {
        if let Some(s) = seed {
            self.seed = s;
        }
        self
    }
}
