//! Stage runners shared by the command-line tool and the figure
//! reproductions.
//!
//! Each stage exists twice: a file-based form that reads and writes the
//! artifacts of [`crate::io`] in an output directory, and an in-memory form
//! used by the figure runners. Both quantize signals and profiles to
//! complex64 at the same points, so the two routes produce identical bytes.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use crate::channel::{Measurement, Simulator};
use crate::imaging::{
    backproject, combine_absolute, combine_coherent, image_cut, CutAxis, PixelGrid, Provenance,
    SarImage,
};
use crate::io::{
    self, image_to_matrix, image_to_pgm, matrix_to_image, matrix_to_profiles, measurement_meta,
    profiles_to_matrix, Elem, Kind, Matrix, MatrixWriter, MeasurementReader,
};
use crate::metrics::{
    coherence_report, local_peak, local_peak_position_error, resolution_3db, target_coherence,
    theoretical_resolution, TheoryResolution,
};
use crate::rangeproc::{compress_measurement, Chain, ProcessOptions, RangeProfile};
use crate::rng::{derive, stream, stream_rng};
use crate::scenario::{Mode, Scenario};
use crate::scene::{tof_bistatic, Receiver, Scene, Trajectory};
use crate::signal::quantize_in_place;
use crate::trigger::{extract_window, generate_pn, Detector, TriggerEvent};
use crate::waveform::{
    assemble_frame, cfo_limit, duty_cycle, effective_bandwidth_chirp, generate_code,
    mean_data_rate, sfo_limit, timing_budget, CodeSymbols, OfdmParams, TimingBudget,
};
use crate::{Complex64, Error, Result, Vec3, C0};

/// Measurements simulated or processed per parallel batch in the
/// file-based stages.
const BATCH: usize = 64;

/// Extra cells kept beyond the farthest expected echo, in resolution cells.
const MARGIN_CELLS: usize = 8;

/// Everything derived from a scenario that the stages share.
pub struct Context {
    pub scenario: Scenario,
    pub mode: Mode,
    pub params: OfdmParams,
    pub code: CodeSymbols,
    pub scene: Scene,
    pub options: ProcessOptions,
    pub grid: PixelGrid,
    /// `(first_cell, len)` of the stored range profiles.
    pub cells: (usize, usize),
}

impl Context {
    pub fn new(scenario: Scenario, mode: Mode) -> Result<Self> {
        scenario.validate()?;
        let params = scenario.params();
        let code = generate_code(&params, scenario.seed);
        let scene = scenario.scene()?;
        let options = scenario.processing.options();
        let grid = scenario.grid.pixel_grid();
        let cells = cell_window(&scenario, &scene, &grid, &params, &options);
        let ctx = Self {
            scenario,
            mode,
            params,
            code,
            scene,
            options,
            grid,
            cells,
        };
        if ctx.products().is_empty() {
            return Err(Error::Validation(format!(
                "mode {mode:?} selects no receiver chain"
            )));
        }
        Ok(ctx)
    }

    pub fn simulator(&self) -> Result<Simulator<'_>> {
        Simulator::new(
            &self.scene,
            &self.params,
            &self.code,
            self.scenario.error_config(),
        )
    }

    pub fn measurements(&self) -> usize {
        self.scenario.measurements
    }

    /// Receiver chains selected by the mode, in receiver order.
    pub fn products(&self) -> Vec<Product> {
        let mut out = Vec::new();
        for (r, rcv) in self.scene.receivers.iter().enumerate() {
            let mono = rcv.is_monostatic();
            if self.mode.mono() {
                out.push(Product {
                    receiver: r,
                    chain: Chain::Monostatic,
                    monostatic: mono,
                });
            }
            if self.mode.bistatic() && !mono {
                out.push(Product {
                    receiver: r,
                    chain: Chain::Sidelink,
                    monostatic: mono,
                });
            }
        }
        out
    }

    fn receivers_in(&self, products: &[Product]) -> Vec<usize> {
        let mut r: Vec<usize> = products.iter().map(|p| p.receiver).collect();
        r.dedup();
        r
    }
}

/// Profile cells that can hold an echo from anywhere in the grid or scene:
/// from cell 0 up to the longest path delay plus a margin.
fn cell_window(
    s: &Scenario,
    scene: &Scene,
    grid: &PixelGrid,
    params: &OfdmParams,
    opts: &ProcessOptions,
) -> (usize, usize) {
    let corners = [
        grid.point(0.0, 0.0),
        grid.point((grid.nu - 1) as f64, 0.0),
        grid.point(0.0, (grid.nv - 1) as f64),
        grid.point((grid.nu - 1) as f64, (grid.nv - 1) as f64),
    ];
    let points: Vec<Vec3> = corners
        .iter()
        .copied()
        .chain(scene.targets.iter().map(|t| t.pos))
        .collect();
    let g = &s.geometry;
    let t_end = (s.measurements - 1) as f64 / params.prf;
    let mut worst: f64 = 0.0;
    for t in [0.0, t_end] {
        let tx = crate::vec3::add(g.start, crate::vec3::scale(g.velocity, t));
        for r in &g.receivers {
            let rx = crate::vec3::add(tx, r.offset);
            for &p in &points {
                worst = worst.max(tof_bistatic(tx, rx, p));
            }
        }
    }
    let slack = s.errors.to_max + (g.r_cal - opts.r_cal_hat).max(0.0) / C0;
    let os = opts.oversample;
    let full = params.subcarriers * os;
    let len =
        ((worst + slack) * params.bandwidth() * os as f64).ceil() as usize + MARGIN_CELLS * os;
    (0, len.min(full))
}

/// One receiver processed by one chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Product {
    pub receiver: usize,
    pub chain: Chain,
    pub monostatic: bool,
}

impl Product {
    pub fn tag(&self) -> String {
        let chain = match self.chain {
            Chain::Monostatic => "mono",
            Chain::Sidelink => "sidelink",
        };
        format!("rx{}_{chain}", self.receiver)
    }

    pub fn provenance(&self) -> Provenance {
        if self.monostatic {
            Provenance::Mono
        } else {
            Provenance::Bistatic
        }
    }

    /// The chain each receiver is meant to be processed with: calibration
    /// for monostatic receivers, sidelink division for bistatic ones.
    pub fn is_native(&self) -> bool {
        self.monostatic == (self.chain == Chain::Monostatic)
    }
}

/// Range profiles of one product.
#[derive(Debug, Clone)]
pub struct ProfileSet {
    pub product: Product,
    pub profiles: Vec<RangeProfile>,
}

#[derive(Debug, Clone)]
pub struct NamedImage {
    pub name: String,
    pub image: SarImage,
}

/// Reported (error-carrying) trajectories used by image formation.
#[derive(Debug, Clone)]
pub struct Tracks {
    pub tx: Trajectory,
    pub rx: Vec<Trajectory>,
}

fn quantize_measurement(mut m: Measurement) -> Measurement {
    quantize_in_place(&mut m.rx_radar.samples);
    if let Some(s) = &mut m.rx_sidelink {
        quantize_in_place(&mut s.samples);
    }
    m
}

/// Stored profile of a (quantized) measurement.
pub fn profile_of(ctx: &Context, meas: &Measurement, chain: Chain) -> Result<RangeProfile> {
    let full = compress_measurement(
        &meas.rx_radar,
        meas.rx_sidelink.as_ref(),
        chain,
        &ctx.params,
        &ctx.code,
        &ctx.options,
    )?;
    let mut p = full.crop(ctx.cells.0, ctx.cells.1);
    p.spectrum = None;
    p.m = meas.index;
    p.t = meas.t;
    quantize_in_place(&mut p.r);
    Ok(p)
}

fn profiles_of(
    ctx: &Context,
    meas: &Measurement,
    products: &[Product],
) -> Result<Vec<RangeProfile>> {
    products
        .iter()
        .map(|p| profile_of(ctx, meas, p.chain))
        .collect()
}

fn split_sets(products: &[Product], rows: Vec<Vec<RangeProfile>>) -> Vec<ProfileSet> {
    let mut sets: Vec<ProfileSet> = products
        .iter()
        .map(|&product| ProfileSet {
            product,
            profiles: Vec::with_capacity(rows.len()),
        })
        .collect();
    for row in rows {
        for (set, p) in sets.iter_mut().zip(row) {
            set.profiles.push(p);
        }
    }
    sets
}

/// Simulates and range-compresses every selected product without touching
/// the disk.
pub fn profiles_in_memory(ctx: &Context) -> Result<Vec<ProfileSet>> {
    let sim = ctx.simulator()?;
    ctx.scene
        .check_coverage(ctx.params.prf, ctx.measurements())?;
    let products = ctx.products();
    let mut out = Vec::new();
    for r in ctx.receivers_in(&products) {
        let mine: Vec<Product> = products
            .iter()
            .copied()
            .filter(|p| p.receiver == r)
            .collect();
        let rows = (0..ctx.measurements())
            .into_par_iter()
            .map(|m| {
                let meas = quantize_measurement(sim.measurement(r, m)?);
                profiles_of(ctx, &meas, &mine)
            })
            .collect::<Result<Vec<_>>>()?;
        out.extend(split_sets(&mine, rows));
    }
    Ok(out)
}

pub fn reported_tracks(ctx: &Context) -> Result<Tracks> {
    let (tx, rx) = ctx.simulator()?.reported_trajectories()?;
    Ok(Tracks { tx, rx })
}

/// Per-product images, plus coherent and absolute combinations when at
/// least two receivers were processed with their native chain.
pub fn form_images(ctx: &Context, sets: &[ProfileSet], tracks: &Tracks) -> Result<Vec<NamedImage>> {
    let mut images = sets
        .iter()
        .map(|set| {
            let p = set.product;
            let image = backproject(
                &set.profiles,
                &tracks.tx,
                &tracks.rx[p.receiver],
                &ctx.grid,
                &ctx.params,
                p.provenance(),
            )?;
            quantized_image(image, format!("image_{}", p.tag()))
        })
        .collect::<Result<Vec<_>>>()?;
    let native: Vec<SarImage> = sets
        .iter()
        .zip(&images)
        .filter(|(s, _)| s.product.is_native())
        .map(|(_, i)| i.image.clone())
        .collect();
    if native.len() >= 2 {
        images.push(quantized_image(
            combine_coherent(&native)?,
            "image_combined_coherent".into(),
        )?);
        images.push(quantized_image(
            combine_absolute(&native)?,
            "image_combined_absolute".into(),
        )?);
    }
    Ok(images)
}

fn quantized_image(mut image: SarImage, name: String) -> Result<NamedImage> {
    quantize_in_place(&mut image.data);
    Ok(NamedImage { name, image })
}

// ---------------------------------------------------------------- metrics

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProfileMetrics {
    pub name: String,
    pub m: usize,
    /// Coherence at the strongest cell of the averaged profile.
    pub gamma_cf_cell: f64,
    pub cell: usize,
    /// Coherence of the backprojection summands at each target.
    pub gamma_cf_targets: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TargetMetrics {
    pub position: Vec3,
    /// Largest magnitude near the target.
    pub peak: f64,
    pub position_error: Option<f64>,
    pub cross_range_3db: Option<f64>,
    pub ground_range_3db: Option<f64>,
    pub theory: Option<TheoryResolution>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImageMetrics {
    pub name: String,
    pub peak: f64,
    pub skipped: u64,
    pub targets: Vec<Option<TargetMetrics>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub profiles: Vec<ProfileMetrics>,
    pub images: Vec<ImageMetrics>,
}

fn search_radius(theory: Option<TheoryResolution>) -> f64 {
    theory.map_or(1.0, |t| (2.0 * t.cross_range.max(t.ground_range)).max(0.25))
}

fn target_metrics(
    image: &SarImage,
    pos: Vec3,
    theory: Option<TheoryResolution>,
) -> Option<TargetMetrics> {
    if !image.grid.contains(pos) {
        return None;
    }
    let radius = search_radius(theory);
    let peak = local_peak(image, pos, radius);
    let position_error = local_peak_position_error(image, pos, radius).ok();
    let through = local_peak_point(image, pos, radius);
    let width = |axis| {
        image_cut(image, axis, through)
            .ok()
            .and_then(|cut| resolution_3db(&cut).ok())
    };
    Some(TargetMetrics {
        position: pos,
        peak,
        position_error,
        cross_range_3db: width(CutAxis::CrossRange),
        ground_range_3db: width(CutAxis::GroundRange),
        theory,
    })
}

/// Centre of the largest pixel within `radius` of `pos`.
fn local_peak_point(image: &SarImage, pos: Vec3, radius: f64) -> Vec3 {
    let g = &image.grid;
    let mut best = (-1.0, pos);
    for iv in 0..g.nv {
        for iu in 0..g.nu {
            let p = g.pixel(iu, iv);
            let (du, dv) = (p[0] - pos[0], p[1] - pos[1]);
            if du.hypot(dv) <= radius {
                let m = image.at(iu, iv).norm();
                if m > best.0 {
                    best = (m, p);
                }
            }
        }
    }
    best.1
}

pub fn compute_metrics(
    ctx: &Context,
    sets: &[ProfileSet],
    images: &[NamedImage],
    tracks: &Tracks,
) -> Result<MetricsReport> {
    let targets: Vec<Vec3> = ctx.scene.targets.iter().map(|t| t.pos).collect();
    let profiles = sets
        .iter()
        .map(|set| {
            let rx = &tracks.rx[set.product.receiver];
            let report = coherence_report(&set.profiles)?;
            let gamma_cf_targets = targets
                .iter()
                .map(|&q| target_coherence(&set.profiles, &tracks.tx, rx, q, &ctx.params).ok())
                .collect();
            Ok(ProfileMetrics {
                name: format!("profiles_{}", set.product.tag()),
                m: set.profiles.len(),
                gamma_cf_cell: report.gamma_cf,
                cell: report.cell,
                gamma_cf_targets,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let images = images
        .iter()
        .map(|named| {
            let image = &named.image;
            let product = sets
                .iter()
                .find(|s| format!("image_{}", s.product.tag()) == named.name)
                .map(|s| s.product);
            let targets = targets
                .iter()
                .map(|&q| {
                    let theory = product.and_then(|p| {
                        theoretical_resolution(
                            &ctx.params,
                            &ctx.scene.tx,
                            ctx.scene.receivers[p.receiver].trajectory(&ctx.scene.tx),
                            q,
                            &image.grid,
                        )
                        .ok()
                    });
                    target_metrics(image, q, theory)
                })
                .collect();
            Ok(ImageMetrics {
                name: named.name.clone(),
                peak: image.peak().0,
                skipped: image.skipped,
                targets,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MetricsReport { profiles, images })
}

// ---------------------------------------------------------------- budget

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TargetResolution {
    pub position: Vec3,
    pub ground_range: f64,
    pub cross_range: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BudgetReport {
    pub bandwidth_hz: f64,
    pub range_cell_m: f64,
    /// `T + T_cp` [s].
    pub active_duration_s: f64,
    pub duty_cycle: f64,
    pub duty_cycle_percent: f64,
    pub streams: u32,
    pub data_rate_bps: f64,
    pub sfo_limit_hz: f64,
    pub cfo_limit_hz: f64,
    pub timing: TimingBudget,
    /// Longest echo delay of the scene [s].
    pub dt_max_s: f64,
    /// Bandwidth a chirp of the same duration would keep [Hz].
    pub chirp_effective_bandwidth_hz: f64,
    pub targets: Vec<TargetResolution>,
}

pub fn budget(ctx: &Context) -> Result<BudgetReport> {
    let p = &ctx.params;
    let s = &ctx.scenario;
    let gamma = duty_cycle(p.active_duration(), p.pri())?;
    let tx = &ctx.scene.tx;
    let rx0 = ctx.scene.receivers[0].trajectory(tx);
    let mut dt_max: f64 = 0.0;
    for (i, &(_, a)) in tx.samples.iter().enumerate() {
        let b = rx0.samples[i].1;
        for q in &ctx.scene.targets {
            dt_max = dt_max.max(tof_bistatic(a, b, q.pos));
        }
    }
    let targets = ctx
        .scene
        .targets
        .iter()
        .map(|q| {
            let r = theoretical_resolution(p, tx, rx0, q.pos, &ctx.grid)?;
            Ok(TargetResolution {
                position: q.pos,
                ground_range: r.ground_range,
                cross_range: r.cross_range,
            })
        })
        .collect::<Result<Vec<_>>>()
        .unwrap_or_default();
    Ok(BudgetReport {
        bandwidth_hz: p.bandwidth(),
        range_cell_m: C0 / (2.0 * p.bandwidth()),
        active_duration_s: p.active_duration(),
        duty_cycle: gamma,
        duty_cycle_percent: 100.0 * gamma,
        streams: s.waveform.streams,
        data_rate_bps: mean_data_rate(
            p.sample_rate,
            p.resolution_bits as f64,
            gamma,
            s.waveform.streams,
        ),
        sfo_limit_hz: sfo_limit(p),
        cfo_limit_hz: cfo_limit(p),
        timing: timing_budget(s.budget.range_error_max, p.pri(), s.budget.v_max),
        dt_max_s: dt_max,
        chirp_effective_bandwidth_hz: effective_bandwidth_chirp(
            p.symbol_duration,
            dt_max.min(p.symbol_duration),
            p.bandwidth(),
        )?,
        targets,
    })
}

// ---------------------------------------------------------------- trigger

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TriggerReport {
    pub receiver: usize,
    pub channel: &'static str,
    pub pn_length: usize,
    pub stream_len: usize,
    pub expected: Vec<usize>,
    pub events: Vec<TriggerEvent>,
    pub detected: usize,
    pub missed: usize,
    pub false_triggers: usize,
    /// RMS difference between extracted windows and the noiseless capture,
    /// relative to the capture RMS.
    pub window_rel_rms_error: Option<f64>,
}

/// Simulated trigger stream: PN preamble followed by the captured radar
/// segment in every frame, in noise.
pub struct TriggerStream {
    pub samples: Vec<Complex64>,
    pub expected: Vec<usize>,
    /// Noiseless captured segments, one per frame.
    pub segments: Vec<Vec<Complex64>>,
    pub pn_len: usize,
    pub receiver: usize,
    pub sidelink: bool,
}

pub fn trigger_stream(ctx: &Context) -> Result<TriggerStream> {
    let cfg = &ctx.scenario.trigger;
    let seed = ctx.scenario.seed;
    let p = &ctx.params;
    let pn = generate_pn(cfg.pn_order, seed)?;
    let sim = ctx.simulator()?;
    let receiver = ctx
        .scene
        .receivers
        .iter()
        .position(|r| matches!(r, Receiver::Bistatic(_)))
        .unwrap_or(0);
    let sidelink = !ctx.scene.receivers[receiver].is_monostatic();
    let segments = (0..cfg.frames)
        .map(|f| {
            let meas = sim.measurement(receiver, f % ctx.measurements())?;
            Ok(match meas.rx_sidelink {
                Some(s) if sidelink => s,
                _ => meas.rx_radar,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let power = segments.iter().map(|s| s.mean_power()).sum::<f64>() / segments.len() as f64;
    let amp = if power > 0.0 { power.sqrt() } else { 1.0 };
    let pri_len = (cfg.pri * p.sample_rate).round() as usize;
    let lead = (derive(seed, &[stream::TRIGGER, 1]) % (pri_len as u64 / 2).max(1)) as usize;
    let mut samples = vec![Complex64::new(0.0, 0.0); lead];
    let mut expected = Vec::with_capacity(segments.len());
    for seg in &segments {
        let frame = assemble_frame(
            pn.to_signal(amp, p.sample_rate),
            seg.clone(),
            Vec::new(),
            cfg.pri,
        )?;
        expected.push(samples.len());
        samples.extend(frame.samples());
    }
    let sigma = amp / 10f64.powf(cfg.snr_db / 20.0) / std::f64::consts::SQRT_2;
    let normal =
        rand_distr::Normal::new(0.0, sigma).map_err(|e| Error::InvalidParams(e.to_string()))?;
    let mut rng = stream_rng(seed, &[stream::TRIGGER, 2]);
    use rand_distr::Distribution;
    for s in &mut samples {
        *s += Complex64::new(normal.sample(&mut rng), normal.sample(&mut rng));
    }
    Ok(TriggerStream {
        samples,
        expected,
        segments: segments.into_iter().map(|s| s.samples).collect(),
        pn_len: pn.len(),
        receiver,
        sidelink,
    })
}

/// Runs the streaming detector over the simulated stream in fixed blocks
/// and extracts the capture window after each event.
pub fn run_trigger(ctx: &Context) -> Result<(TriggerReport, Vec<Vec<Complex64>>)> {
    let cfg = &ctx.scenario.trigger;
    let ts = trigger_stream(ctx)?;
    let pn = generate_pn(cfg.pn_order, ctx.scenario.seed)?;
    let mut det = Detector::new(&pn, cfg.threshold)?;
    let mut events = Vec::new();
    for block in ts.samples.chunks(1 << 16) {
        events.extend(det.push(block));
    }
    events.extend(det.finish());
    let signal = crate::ComplexSignal::new(ts.samples.clone(), ctx.params.sample_rate, 0.0);
    let seg_len = ctx.params.segment_len();
    let mut windows = Vec::new();
    let (mut err, mut ref_energy) = (0.0, 0.0);
    let mut detected = 0;
    let mut false_triggers = 0;
    for ev in &events {
        match ts.expected.iter().position(|&e| e.abs_diff(ev.index) <= 1) {
            Some(f) => {
                detected += 1;
                let w = extract_window(&signal, ev, ts.pn_len, seg_len)?;
                for (a, b) in w.samples.iter().zip(&ts.segments[f]) {
                    err += (a - b).norm_sqr();
                    ref_energy += b.norm_sqr();
                }
                windows.push(w.samples);
            }
            None => false_triggers += 1,
        }
    }
    let report = TriggerReport {
        receiver: ts.receiver,
        channel: if ts.sidelink { "sidelink" } else { "radar" },
        pn_length: ts.pn_len,
        stream_len: ts.samples.len(),
        expected: ts.expected.clone(),
        detected,
        missed: ts.expected.len().saturating_sub(detected),
        false_triggers,
        window_rel_rms_error: (ref_energy > 0.0).then(|| (err / ref_energy).sqrt()),
        events,
    };
    Ok((report, windows))
}

// ---------------------------------------------------------------- files

fn path(out: &Path, name: &str) -> PathBuf {
    out.join(name)
}

fn signal_name(r: usize, sidelink: bool) -> String {
    format!(
        "signals_rx{r}_{}.bin",
        if sidelink { "sidelink" } else { "radar" }
    )
}

fn write_json<T: Serialize>(p: &Path, v: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(v).map_err(|e| Error::Format(e.to_string()))?;
    std::fs::write(p, text + "\n")?;
    Ok(())
}

/// Artifacts written by one stage.
#[derive(Debug, Clone, Serialize)]
pub struct StageSummary {
    pub stage: &'static str,
    pub artifacts: Vec<String>,
}

fn write_tracks(out: &Path, tracks: &Tracks, artifacts: &mut Vec<String>) -> Result<()> {
    io::write_trajectory_csv(&path(out, "traj_tx.csv"), &tracks.tx)?;
    artifacts.push("traj_tx.csv".into());
    for (r, t) in tracks.rx.iter().enumerate() {
        let name = format!("traj_rx{r}.csv");
        io::write_trajectory_csv(&path(out, &name), t)?;
        artifacts.push(name);
    }
    Ok(())
}

fn read_tracks(ctx: &Context, out: &Path) -> Result<Tracks> {
    let tx = io::read_trajectory_csv(&path(out, "traj_tx.csv"))?;
    let rx = (0..ctx.scene.receivers.len())
        .map(|r| io::read_trajectory_csv(&path(out, &format!("traj_rx{r}.csv"))))
        .collect::<Result<Vec<_>>>()?;
    Ok(Tracks { tx, rx })
}

/// `simulate`: signals of every receiver channel plus reported tracks.
pub fn simulate_to_dir(ctx: &Context, out: &Path) -> Result<StageSummary> {
    std::fs::create_dir_all(out)?;
    let sim = ctx.simulator()?;
    let count = ctx.measurements();
    ctx.scene.check_coverage(ctx.params.prf, count)?;
    let mut artifacts = Vec::new();
    let cols = ctx.params.segment_len();
    let width = 5 + ctx.scene.targets.len();
    let global = vec![
        ctx.params.sample_rate,
        -(ctx.params.cp_len() as f64) / ctx.params.sample_rate,
    ];
    for (r, rcv) in ctx.scene.receivers.iter().enumerate() {
        let bistatic = !rcv.is_monostatic();
        let open = |sl: bool| {
            MatrixWriter::create(
                &path(out, &signal_name(r, sl)),
                Kind::Signals,
                Elem::Complex64,
                count,
                cols,
                global.clone(),
                width,
            )
        };
        let mut radar = open(false)?;
        let mut sidelink = if bistatic { Some(open(true)?) } else { None };
        for start in (0..count).step_by(BATCH) {
            let batch = (start..(start + BATCH).min(count))
                .into_par_iter()
                .map(|m| sim.measurement(r, m))
                .collect::<Result<Vec<_>>>()?;
            for meas in &batch {
                let meta = measurement_meta(meas);
                radar.write_row(&meta, &meas.rx_radar.samples)?;
                if let (Some(w), Some(s)) = (&mut sidelink, &meas.rx_sidelink) {
                    w.write_row(&meta, &s.samples)?;
                }
            }
        }
        radar.finish()?;
        artifacts.push(signal_name(r, false));
        if let Some(w) = sidelink {
            w.finish()?;
            artifacts.push(signal_name(r, true));
        }
    }
    write_tracks(out, &reported_tracks(ctx)?, &mut artifacts)?;
    Ok(StageSummary {
        stage: "simulate",
        artifacts,
    })
}

fn profile_name(p: &Product) -> String {
    format!("profiles_{}.bin", p.tag())
}

fn image_name(name: &str) -> String {
    format!("{name}.bin")
}

fn save_profiles(out: &Path, sets: &[ProfileSet], artifacts: &mut Vec<String>) -> Result<()> {
    for set in sets {
        let name = profile_name(&set.product);
        profiles_to_matrix(&set.profiles)?.save(&path(out, &name))?;
        artifacts.push(name);
    }
    Ok(())
}

/// `process`: range profiles of every selected product.
pub fn process_dir(ctx: &Context, out: &Path) -> Result<StageSummary> {
    let products = ctx.products();
    let mut sets = Vec::new();
    for r in ctx.receivers_in(&products) {
        let mine: Vec<Product> = products
            .iter()
            .copied()
            .filter(|p| p.receiver == r)
            .collect();
        let need_sl = mine.iter().any(|p| p.chain == Chain::Sidelink);
        let sl_path = path(out, &signal_name(r, true));
        let mut reader = MeasurementReader::open(
            &path(out, &signal_name(r, false)),
            need_sl.then_some(sl_path.as_path()),
        )?;
        if reader.len() != ctx.measurements() {
            return Err(Error::Format(format!(
                "receiver {r}: {} measurements on disk, scenario has {}",
                reader.len(),
                ctx.measurements()
            )));
        }
        let mut rows = Vec::with_capacity(reader.len());
        loop {
            let mut batch = Vec::with_capacity(BATCH);
            while batch.len() < BATCH {
                match reader.read_next()? {
                    Some(m) => batch.push(m),
                    None => break,
                }
            }
            if batch.is_empty() {
                break;
            }
            rows.extend(
                batch
                    .par_iter()
                    .map(|m| profiles_of(ctx, m, &mine))
                    .collect::<Result<Vec<_>>>()?,
            );
        }
        sets.extend(split_sets(&mine, rows));
    }
    let mut artifacts = Vec::new();
    save_profiles(out, &sets, &mut artifacts)?;
    Ok(StageSummary {
        stage: "process",
        artifacts,
    })
}

fn load_sets(ctx: &Context, out: &Path) -> Result<Vec<ProfileSet>> {
    ctx.products()
        .into_iter()
        .map(|product| {
            let m = Matrix::load(&path(out, &profile_name(&product)))?;
            Ok(ProfileSet {
                product,
                profiles: matrix_to_profiles(&m)?,
            })
        })
        .collect()
}

fn save_images(out: &Path, images: &[NamedImage], artifacts: &mut Vec<String>) -> Result<()> {
    for im in images {
        let name = image_name(&im.name);
        image_to_matrix(&im.image).save(&path(out, &name))?;
        artifacts.push(name);
        let pgm = format!("{}.pgm", im.name);
        std::fs::write(path(out, &pgm), image_to_pgm(&im.image))?;
        artifacts.push(pgm);
    }
    Ok(())
}

/// `image`: backprojection of the stored profiles, combinations and PGM
/// previews.
pub fn image_dir(ctx: &Context, out: &Path) -> Result<StageSummary> {
    let sets = load_sets(ctx, out)?;
    let tracks = read_tracks(ctx, out)?;
    let images = form_images(ctx, &sets, &tracks)?;
    let mut artifacts = Vec::new();
    save_images(out, &images, &mut artifacts)?;
    Ok(StageSummary {
        stage: "image",
        artifacts,
    })
}

fn image_names(ctx: &Context) -> Vec<String> {
    let products = ctx.products();
    let mut names: Vec<String> = products
        .iter()
        .map(|p| format!("image_{}", p.tag()))
        .collect();
    if products.iter().filter(|p| p.is_native()).count() >= 2 {
        names.push("image_combined_coherent".into());
        names.push("image_combined_absolute".into());
    }
    names
}

/// `metrics`: coherence and image-quality report from stored artifacts.
pub fn metrics_dir(ctx: &Context, out: &Path) -> Result<(MetricsReport, StageSummary)> {
    let sets = load_sets(ctx, out)?;
    let tracks = read_tracks(ctx, out)?;
    let images = image_names(ctx)
        .into_iter()
        .map(|name| {
            let m = Matrix::load(&path(out, &image_name(&name)))?;
            Ok(NamedImage {
                image: matrix_to_image(&m)?,
                name,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let report = compute_metrics(ctx, &sets, &images, &tracks)?;
    write_json(&path(out, "metrics.json"), &report)?;
    Ok((
        report,
        StageSummary {
            stage: "metrics",
            artifacts: vec!["metrics.json".into()],
        },
    ))
}

pub fn budget_dir(ctx: &Context, out: &Path) -> Result<(BudgetReport, StageSummary)> {
    std::fs::create_dir_all(out)?;
    let report = budget(ctx)?;
    write_json(&path(out, "budget.json"), &report)?;
    Ok((
        report,
        StageSummary {
            stage: "budget",
            artifacts: vec!["budget.json".into()],
        },
    ))
}

pub fn trigger_dir(ctx: &Context, out: &Path) -> Result<(TriggerReport, StageSummary)> {
    std::fs::create_dir_all(out)?;
    let (report, windows) = run_trigger(ctx)?;
    io::write_jsonl(&path(out, "trigger_events.jsonl"), &report.events)?;
    write_json(&path(out, "trigger.json"), &report)?;
    let mut artifacts = vec![
        "trigger_events.jsonl".to_string(),
        "trigger.json".to_string(),
    ];
    if !windows.is_empty() {
        let cols = windows[0].len();
        let m = Matrix {
            kind: Kind::Signals,
            elem: Elem::Complex64,
            rows: windows.len(),
            cols,
            global: vec![ctx.params.sample_rate, 0.0],
            row_meta: vec![Vec::new(); windows.len()],
            data: windows.concat(),
        };
        m.save(&path(out, "trigger_windows.bin"))?;
        artifacts.push("trigger_windows.bin".into());
    }
    Ok((
        report,
        StageSummary {
            stage: "trigger",
            artifacts,
        },
    ))
}

// ---------------------------------------------------------------- figures

/// Error settings varied by a figure runner.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Sweep {
    SfoHz,
    CfoHz,
    CpeMax,
    ToMax,
    LocSigma,
}

impl Sweep {
    fn apply(self, s: &mut Scenario, v: f64) {
        let e = &mut s.errors;
        match self {
            Sweep::SfoHz => e.sfo_hz = v,
            Sweep::CfoHz => e.cfo_hz = v,
            Sweep::CpeMax => e.cpe_max = v,
            Sweep::ToMax => e.to_max = v,
            Sweep::LocSigma => e.loc_sigma = v,
        }
    }
}

/// Swept parameter and its values; the scenario itself always runs first
/// as the `baseline` case.
pub fn figure_sweep(id: u32, params: &OfdmParams) -> Result<(Sweep, Vec<f64>)> {
    let lambda = params.wavelength();
    Ok(match id {
        7 => (Sweep::SfoHz, vec![100e3, 200e3, 2e6]),
        8 => (Sweep::CfoHz, vec![10e3, 100e3]),
        9 => (Sweep::CpeMax, vec![std::f64::consts::PI]),
        10 => (Sweep::ToMax, vec![0.5e-9, 2e-9, 10e-9]),
        11 => (
            Sweep::LocSigma,
            vec![lambda / 16.0, lambda / 8.0, lambda / 4.0],
        ),
        _ => {
            return Err(Error::InvalidParams(format!(
                "unknown figure {id}; expected 7, 8, 9, 10 or 11"
            )))
        }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FigureCase {
    pub label: String,
    pub sweep: Sweep,
    pub value: Option<f64>,
    pub metrics: MetricsReport,
    /// Per image, per target: local peak relative to the baseline [dB].
    pub peak_change_db: Vec<(String, Vec<Option<f64>>)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FigureReport {
    pub figure: u32,
    pub cases: Vec<FigureCase>,
}

/// Runs one scenario in memory and writes profiles, images and metrics to
/// `dir`, exactly as `simulate`, `process`, `image` and `metrics` would.
pub fn run_case(ctx: &Context, dir: &Path) -> Result<MetricsReport> {
    std::fs::create_dir_all(dir)?;
    let sets = profiles_in_memory(ctx)?;
    let tracks = reported_tracks(ctx)?;
    let images = form_images(ctx, &sets, &tracks)?;
    let mut artifacts = Vec::new();
    write_tracks(dir, &tracks, &mut artifacts)?;
    save_profiles(dir, &sets, &mut artifacts)?;
    save_images(dir, &images, &mut artifacts)?;
    let report = compute_metrics(ctx, &sets, &images, &tracks)?;
    write_json(&path(dir, "metrics.json"), &report)?;
    Ok(report)
}

fn peaks(m: &MetricsReport) -> Vec<(String, Vec<Option<f64>>)> {
    m.images
        .iter()
        .map(|i| {
            (
                i.name.clone(),
                i.targets
                    .iter()
                    .map(|t| t.as_ref().map(|t| t.peak))
                    .collect(),
            )
        })
        .collect()
}

/// `figure <id>`: baseline plus the swept error cases, each in its own
/// subdirectory of `out/figure<id>`, and a `summary.json`.
pub fn run_figure(id: u32, scenario: &Scenario, mode: Mode, out: &Path) -> Result<FigureReport> {
    let (sweep, values) = figure_sweep(id, &scenario.params())?;
    let root = path(out, &format!("figure{id}"));
    let mut cases = Vec::new();
    let mut base_peaks = Vec::new();
    let runs = std::iter::once(None).chain(values.into_iter().map(Some));
    for value in runs {
        let mut s = scenario.clone();
        let label = match value {
            None => "baseline".to_string(),
            Some(v) => {
                sweep.apply(&mut s, v);
                format!("case{}", cases.len())
            }
        };
        let ctx = Context::new(s, mode)?;
        let metrics = run_case(&ctx, &path(&root, &label))?;
        let now = peaks(&metrics);
        if value.is_none() {
            base_peaks = now.clone();
        }
        let peak_change_db = now
            .iter()
            .map(|(name, vals)| {
                let base = base_peaks.iter().find(|(n, _)| n == name);
                let db = vals
                    .iter()
                    .enumerate()
                    .map(|(i, v)| {
                        let b = base.and_then(|(_, bv)| bv.get(i).copied().flatten())?;
                        let v = (*v)?;
                        (b > 0.0 && v > 0.0).then(|| 20.0 * (v / b).log10())
                    })
                    .collect();
                (name.clone(), db)
            })
            .collect();
        cases.push(FigureCase {
            label,
            sweep,
            value,
            metrics,
            peak_change_db,
        });
    }
    let report = FigureReport { figure: id, cases };
    write_json(&path(&root, "summary.json"), &report)?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> Scenario {
        Scenario::from_toml(
            "measurements = 9\n[geometry]\nstart = [-0.04, 0.0, 10.0]\n\
             [[geometry.targets]]\nposition = [0.0, 10.0, 0.0]\n\
             [grid]\nx0 = -0.5\ny0 = 9.5\ndx = 0.1\ndy = 0.1\nnx = 11\nny = 11\n",
        )
        .unwrap()
    }

    #[test]
    fn products_follow_mode() {
        let mut s = tiny();
        s.geometry.receivers.insert(
            0,
            crate::scenario::ReceiverConfig {
                kind: crate::scenario::ReceiverKind::Mono,
                offset: [0.0; 3],
            },
        );
        let tags = |m| {
            Context::new(s.clone(), m)
                .unwrap()
                .products()
                .iter()
                .map(|p| p.tag())
                .collect::<Vec<_>>()
        };
        assert_eq!(tags(Mode::Mono), ["rx0_mono", "rx1_mono"]);
        assert_eq!(tags(Mode::Bistatic), ["rx1_sidelink"]);
        assert_eq!(tags(Mode::Both), ["rx0_mono", "rx1_mono", "rx1_sidelink"]);
        s.geometry.receivers.truncate(1);
        assert!(Context::new(s, Mode::Bistatic).is_err());
    }

    #[test]
    fn cell_window_covers_scene() {
        let ctx = Context::new(tiny(), Mode::Both).unwrap();
        let (first, len) = ctx.cells;
        assert_eq!(first, 0);
        let far = 2.0 * (0.6f64.powi(2) + 10.5f64.powi(2) + 100.0).sqrt() / C0;
        assert!(len as f64 > far * ctx.params.bandwidth() * 8.0);
        assert!(len < ctx.params.subcarriers * 8);
    }

    #[test]
    fn file_and_memory_routes_agree() {
        let ctx = Context::new(tiny(), Mode::Both).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let files = dir.path().join("files");
        simulate_to_dir(&ctx, &files).unwrap();
        process_dir(&ctx, &files).unwrap();
        image_dir(&ctx, &files).unwrap();
        let (from_files, _) = metrics_dir(&ctx, &files).unwrap();
        let mem = dir.path().join("mem");
        let from_memory = run_case(&ctx, &mem).unwrap();
        assert_eq!(from_files, from_memory);
        for name in [
            "profiles_rx0_mono.bin",
            "profiles_rx0_sidelink.bin",
            "image_rx0_mono.bin",
            "image_rx0_sidelink.bin",
            "traj_tx.csv",
            "metrics.json",
        ] {
            assert_eq!(
                std::fs::read(files.join(name)).unwrap(),
                std::fs::read(mem.join(name)).unwrap(),
                "{name}"
            );
        }
        let t = &from_memory.images[0].targets[0].as_ref().unwrap();
        assert!(t.position_error.unwrap() < 0.1, "{t:?}");
    }

    #[test]
    fn budget_of_reference_scenario() {
        let ctx = Context::new(Scenario::default(), Mode::Both).unwrap();
        let b = budget(&ctx).unwrap();
        assert!((b.duty_cycle - 0.0015625).abs() < 1e-12);
        assert!((b.data_rate_bps - 44.8e6).abs() < 1.0);
        assert!((b.sfo_limit_hz / 200e3 - 1.0).abs() < 1e-3);
        assert!((b.cfo_limit_hz - 10e3).abs() < 1e-6);
        assert_eq!(b.targets.len(), 5);
    }

    #[test]
    fn trigger_stream_detects_every_frame() {
        let mut s = tiny();
        s.trigger.snr_db = 10.0;
        let ctx = Context::new(s, Mode::Both).unwrap();
        let (r, windows) = run_trigger(&ctx).unwrap();
        assert_eq!(r.detected, 3);
        assert_eq!(r.false_triggers, 0);
        assert_eq!(windows.len(), 3);
        assert!(r.window_rel_rms_error.unwrap() < 0.5);
        for (e, ev) in r.expected.iter().zip(&r.events) {
            assert_eq!(*e, ev.index);
        }
    }

    #[test]
    fn unknown_figure_is_rejected() {
        assert!(figure_sweep(3, &OfdmParams::table1()).is_err());
    }
}
