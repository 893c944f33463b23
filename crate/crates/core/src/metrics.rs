//! Coherence and image-quality measures.

use num_complex::Complex64;
use serde::Serialize;

use crate::dsp::{parabolic_offset, wrap_phase};
use crate::imaging::{pixel_contributions, PixelGrid, Profile1D, SarImage};
use crate::rangeproc::RangeProfile;
use crate::scene::{position_at, Trajectory};
use crate::vec3::{add, dist, dot, norm, scale, sub};
use crate::waveform::OfdmParams;
use crate::{Error, Result, Vec3, C0};

/// Full width of `|sinc|` at exactly -3 dB, in units of the inverse support
/// width.
pub const SINC_3DB_WIDTH: f64 = 0.884_486_779_252_536;

/// `|sum s_m|^2 / (M sum |s_m|^2)`.
pub fn coherence_factor(values: &[Complex64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::ZeroInput("no peak values"));
    }
    let energy: f64 = values.iter().map(|v| v.norm_sqr()).sum();
    if energy == 0.0 {
        return Err(Error::ZeroInput("all peak values are zero"));
    }
    // 1 - spread / energy: identical values give exactly 1
    let mean = values.iter().sum::<Complex64>() / values.len() as f64;
    let spread: f64 = values.iter().map(|v| (v - mean).norm_sqr()).sum();
    Ok((1.0 - spread / energy).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoherenceReport {
    pub gamma_cf: f64,
    pub m: usize,
    /// Absolute profile cell the values were read from.
    pub cell: usize,
    pub phases: Vec<f64>,
    #[serde(serialize_with = "complex_pairs")]
    pub peak_values: Vec<Complex64>,
}

fn complex_pairs<S: serde::Serializer>(v: &[Complex64], s: S) -> Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    let mut seq = s.serialize_seq(Some(v.len()))?;
    for c in v {
        seq.serialize_element(&[c.re, c.im])?;
    }
    seq.end()
}

fn value_at(p: &RangeProfile, cell: usize) -> Result<Complex64> {
    cell.checked_sub(p.first_cell)
        .and_then(|i| p.r.get(i).copied())
        .ok_or(Error::Bounds {
            start: cell,
            end: cell + 1,
            len: p.first_cell + p.r.len(),
        })
}

/// Wrapped phase of every profile at absolute cell `cell`.
pub fn phase_series(profiles: &[RangeProfile], cell: usize) -> Result<Vec<f64>> {
    profiles
        .iter()
        .map(|p| value_at(p, cell).map(|v| wrap_phase(v.arg())))
        .collect()
}

/// Peak cell of the coherently averaged profile.
pub fn averaged_peak_cell(profiles: &[RangeProfile]) -> Result<usize> {
    if profiles.is_empty() {
        return Err(Error::ZeroInput("no profiles"));
    }
    let lo = profiles.iter().map(|p| p.first_cell).max().unwrap_or(0);
    let hi = profiles
        .iter()
        .map(|p| p.first_cell + p.r.len())
        .min()
        .unwrap_or(0);
    if lo >= hi {
        return Err(Error::ZeroInput("profiles share no cells"));
    }
    let mut best = (0.0, lo);
    for c in lo..hi {
        let s: Complex64 = profiles.iter().map(|p| p.r[c - p.first_cell]).sum();
        if s.norm() > best.0 {
            best = (s.norm(), c);
        }
    }
    if best.0 == 0.0 {
        return Err(Error::ZeroInput("averaged profile is zero"));
    }
    Ok(best.1)
}

/// Coherence report at the peak of the averaged profile.
pub fn coherence_report(profiles: &[RangeProfile]) -> Result<CoherenceReport> {
    let cell = averaged_peak_cell(profiles)?;
    let peak_values = profiles
        .iter()
        .map(|p| value_at(p, cell))
        .collect::<Result<Vec<_>>>()?;
    Ok(CoherenceReport {
        gamma_cf: coherence_factor(&peak_values)?,
        m: profiles.len(),
        cell,
        phases: peak_values.iter().map(|v| wrap_phase(v.arg())).collect(),
        peak_values,
    })
}

/// Width between the -3 dB crossings around the global maximum.
pub fn resolution_3db(cut: &Profile1D) -> Result<f64> {
    let db = &cut.db;
    let x = &cut.positions;
    if db.is_empty() || db.len() != x.len() {
        return Err(Error::ZeroInput("empty cut"));
    }
    let mut peak = 0;
    for i in 1..db.len() {
        if db[i] > db[peak] {
            peak = i;
        }
    }
    let level = db[peak] - 3.0;
    let crossing = |a: usize, b: usize| {
        let f = (level - db[a]) / (db[b] - db[a]);
        x[a] + f * (x[b] - x[a])
    };
    let left = (1..=peak)
        .rev()
        .find(|&i| db[i - 1] < level)
        .map(|i| crossing(i - 1, i))
        .ok_or(Error::NoCrossing("left"))?;
    let right = (peak..db.len() - 1)
        .find(|&i| db[i + 1] < level)
        .map(|i| crossing(i + 1, i))
        .ok_or(Error::NoCrossing("right"))?;
    Ok(right - left)
}

/// Sub-pixel position of the largest pixel among those for which
/// `include(iu, iv)` holds.
fn refined_peak(image: &SarImage, include: impl Fn(usize, usize) -> bool) -> Result<Vec3> {
    let g = &image.grid;
    let mut best = (0.0, 0, 0);
    for iv in 0..g.nv {
        for iu in 0..g.nu {
            if !include(iu, iv) {
                continue;
            }
            let m = image.at(iu, iv).norm();
            if m > best.0 {
                best = (m, iu, iv);
            }
        }
    }
    let (peak, iu, iv) = best;
    if peak == 0.0 {
        return Err(Error::ZeroInput("image has no nonzero pixel"));
    }
    let mag = |u: usize, v: usize| image.at(u, v).norm();
    let du = if iu > 0 && iu + 1 < g.nu {
        parabolic_offset(mag(iu - 1, iv), peak, mag(iu + 1, iv))
    } else {
        0.0
    };
    let dv = if iv > 0 && iv + 1 < g.nv {
        parabolic_offset(mag(iu, iv - 1), peak, mag(iu, iv + 1))
    } else {
        0.0
    };
    Ok(g.point(iu as f64 + du, iv as f64 + dv))
}

/// In-plane distance between the refined image maximum and `truth`.
pub fn peak_position_error(image: &SarImage, truth: Vec3) -> Result<f64> {
    if !image.grid.contains(truth) {
        return Err(Error::OutsideGrid);
    }
    let p = refined_peak(image, |_, _| true)?;
    Ok(in_plane(image, p, truth))
}

/// As [`peak_position_error`], searching only pixels within `radius` of
/// `truth`; for images with several targets.
pub fn local_peak_position_error(image: &SarImage, truth: Vec3, radius: f64) -> Result<f64> {
    if !image.grid.contains(truth) {
        return Err(Error::OutsideGrid);
    }
    let g = image.grid;
    let (tu, tv) = g.coords(truth);
    let t = g.point(tu, tv);
    let p = refined_peak(image, |iu, iv| dist(g.pixel(iu, iv), t) <= radius)?;
    Ok(in_plane(image, p, truth))
}

/// Largest magnitude within `radius` of `point`.
pub fn local_peak(image: &SarImage, point: Vec3, radius: f64) -> f64 {
    let g = image.grid;
    let (tu, tv) = g.coords(point);
    let t = g.point(tu, tv);
    let mut best: f64 = 0.0;
    for iv in 0..g.nv {
        for iu in 0..g.nu {
            if dist(g.pixel(iu, iv), t) <= radius {
                best = best.max(image.at(iu, iv).norm());
            }
        }
    }
    best
}

fn in_plane(image: &SarImage, p: Vec3, truth: Vec3) -> f64 {
    let g = &image.grid;
    let d = sub(p, truth);
    let u = crate::vec3::dot(d, g.u_axis);
    let v = crate::vec3::dot(d, g.v_axis);
    u.hypot(v)
}

/// Coherence factor of the backprojection summands at `point`, the
/// per-measurement profile values along the expected range history after
/// phase compensation. Measurements whose lookup falls outside the stored
/// profiles are left out.
pub fn target_coherence(
    profiles: &[RangeProfile],
    tx: &Trajectory,
    rx: &Trajectory,
    point: Vec3,
    params: &OfdmParams,
) -> Result<f64> {
    let values: Vec<Complex64> = pixel_contributions(profiles, tx, rx, point, params)?
        .into_iter()
        .flatten()
        .collect();
    coherence_factor(&values)
}

/// Expected -3 dB widths of a point response along the grid axes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TheoryResolution {
    /// Along the grid `u` axis [m].
    pub cross_range: f64,
    /// Along the grid `v` axis [m].
    pub ground_range: f64,
}

/// Sum of the unit vectors from the two antennas towards `target`, the
/// gradient of the bistatic path length.
fn path_gradient(tx: Vec3, rx: Vec3, target: Vec3) -> Result<Vec3> {
    let a = sub(target, tx);
    let b = sub(target, rx);
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return Err(Error::InvalidParams("antenna on the target".into()));
    }
    Ok(add(scale(a, 1.0 / na), scale(b, 1.0 / nb)))
}

/// Theoretical resolution at `target` for the aperture sampled by the
/// trajectory time stamps.
///
/// Ground range: `w c0 / (B |g . v|)` with `g` the path-length gradient at
/// the middle of the aperture. Cross range: `w lambda_c / (max_m g_m . u -
/// min_m g_m . u)` with `lambda_c` the wavelength at the band centre
/// `fc + B/2`. `w` is [`SINC_3DB_WIDTH`].
pub fn theoretical_resolution(
    params: &OfdmParams,
    tx: &Trajectory,
    rx: &Trajectory,
    target: Vec3,
    grid: &PixelGrid,
) -> Result<TheoryResolution> {
    let grads = tx
        .samples
        .iter()
        .map(|&(t, p)| path_gradient(p, position_at(rx, t)?, target))
        .collect::<Result<Vec<_>>>()?;
    let b = params.bandwidth();
    let mid = grads[grads.len() / 2];
    let gv = dot(mid, grid.v_axis).abs();
    let (lo, hi) = grads
        .iter()
        .map(|g| dot(*g, grid.u_axis))
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| {
            (lo.min(x), hi.max(x))
        });
    if gv == 0.0 || hi <= lo {
        return Err(Error::ZeroInput(
            "aperture gives no resolution along an axis",
        ));
    }
    let lambda_c = C0 / (params.fc + b / 2.0);
    Ok(TheoryResolution {
        cross_range: SINC_3DB_WIDTH * lambda_c / (hi - lo),
        ground_range: SINC_3DB_WIDTH * C0 / (b * gv),
    })
}
