//! Time-domain backprojection, image combination and image cuts.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dsp::{cis_cycles, lerp_at};
use crate::rangeproc::{Domain, RangeProfile};
use crate::scene::{position_at, tof_sidelink, Trajectory};
use crate::vec3::{add, dist, dot, norm, scale, sub};
use crate::waveform::OfdmParams;
use crate::{Error, Result, Vec3, C0};

/// Regular pixel grid on a plane; pixel `(iu, iv)` sits at
/// `origin + iu du u_axis + iv dv v_axis`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PixelGrid {
    pub origin: Vec3,
    pub u_axis: Vec3,
    pub v_axis: Vec3,
    pub du: f64,
    pub dv: f64,
    pub nu: usize,
    pub nv: usize,
}

impl PixelGrid {
    /// Ground-plane grid with `u` along x and `v` along y.
    pub fn ground(x0: f64, y0: f64, du: f64, dv: f64, nu: usize, nv: usize) -> Self {
        Self {
            origin: [x0, y0, 0.0],
            u_axis: [1.0, 0.0, 0.0],
            v_axis: [0.0, 1.0, 0.0],
            du,
            dv,
            nu,
            nv,
        }
    }

    /// Ground-plane grid centred on `(x, y)` with odd pixel counts.
    pub fn centred(x: f64, y: f64, du: f64, dv: f64, half_u: usize, half_v: usize) -> Self {
        Self::ground(
            x - half_u as f64 * du,
            y - half_v as f64 * dv,
            du,
            dv,
            2 * half_u + 1,
            2 * half_v + 1,
        )
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParams(m.to_string()));
        if !(self.du > 0.0) || !(self.dv > 0.0) {
            return bad("pixel pitch must be positive");
        }
        if self.nu < 1 || self.nv < 1 {
            return bad("grid needs >= 1 pixel per axis");
        }
        let tol = 1e-9;
        if (norm(self.u_axis) - 1.0).abs() > tol
            || (norm(self.v_axis) - 1.0).abs() > tol
            || dot(self.u_axis, self.v_axis).abs() > tol
        {
            return bad("grid axes must be orthonormal");
        }
        if !crate::vec3::is_finite(self.origin) {
            return bad("grid origin must be finite");
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.nu * self.nv
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Position of fractional pixel coordinates.
    pub fn point(&self, fu: f64, fv: f64) -> Vec3 {
        add(
            self.origin,
            add(
                scale(self.u_axis, fu * self.du),
                scale(self.v_axis, fv * self.dv),
            ),
        )
    }

    pub fn pixel(&self, iu: usize, iv: usize) -> Vec3 {
        self.point(iu as f64, iv as f64)
    }

    /// Fractional pixel coordinates of the in-plane projection of `p`.
    pub fn coords(&self, p: Vec3) -> (f64, f64) {
        let d = sub(p, self.origin);
        (dot(d, self.u_axis) / self.du, dot(d, self.v_axis) / self.dv)
    }

    pub fn contains(&self, p: Vec3) -> bool {
        let (fu, fv) = self.coords(p);
        let eps = 1e-9;
        fu >= -eps
            && fv >= -eps
            && fu <= (self.nu - 1) as f64 + eps
            && fv <= (self.nv - 1) as f64 + eps
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Mono,
    Bistatic,
    CombinedCoherent,
    CombinedAbsolute,
}

impl Provenance {
    pub fn code(self) -> f64 {
        match self {
            Provenance::Mono => 0.0,
            Provenance::Bistatic => 1.0,
            Provenance::CombinedCoherent => 2.0,
            Provenance::CombinedAbsolute => 3.0,
        }
    }

    pub fn from_code(v: f64) -> Result<Self> {
        [
            Provenance::Mono,
            Provenance::Bistatic,
            Provenance::CombinedCoherent,
            Provenance::CombinedAbsolute,
        ]
        .into_iter()
        .find(|p| p.code() == v)
        .ok_or_else(|| Error::Format(format!("unknown image provenance code {v}")))
    }
}

/// Complex image, row-major: pixel `(iu, iv)` is `data[iv * nu + iu]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SarImage {
    pub data: Vec<Complex64>,
    pub grid: PixelGrid,
    pub provenance: Provenance,
    pub m_used: usize,
    /// Pixel-measurement pairs whose delay fell outside the stored profile.
    pub skipped: u64,
}

impl SarImage {
    pub fn at(&self, iu: usize, iv: usize) -> Complex64 {
        self.data[iv * self.grid.nu + iu]
    }

    /// Largest magnitude and its pixel `(iu, iv)`; lowest index on ties.
    pub fn peak(&self) -> (f64, usize, usize) {
        let mut best = (0.0, 0);
        for (i, v) in self.data.iter().enumerate() {
            let m = v.norm();
            if m > best.0 {
                best = (m, i);
            }
        }
        (best.0, best.1 % self.grid.nu, best.1 / self.grid.nu)
    }

    pub fn magnitudes(&self) -> Vec<f64> {
        self.data.iter().map(|v| v.norm()).collect()
    }
}

/// Per-measurement geometry used by the backprojector.
struct Pass {
    /// Profile with the linear phase of the one-sided band removed.
    centred: Vec<Complex64>,
    first_cell: f64,
    gain: f64,
    tx: Vec3,
    rx: Vec3,
    /// Delay subtracted before the profile lookup.
    reference: f64,
    cells_per_second: f64,
    centre_hz: f64,
}

impl Pass {
    /// Phase-compensated contribution of this measurement to pixel `x0`.
    fn sample(&self, x0: Vec3, fc: f64) -> Option<Complex64> {
        let delay = (dist(self.tx, x0) + dist(x0, self.rx)) / C0 - self.reference;
        let pos = delay * self.cells_per_second - self.first_cell;
        lerp_at(&self.centred, pos)
            .map(|v| v * cis_cycles((fc + self.centre_hz) * delay) / self.gain)
    }
}

fn passes(profiles: &[RangeProfile], tx: &Trajectory, rx: &Trajectory) -> Result<Vec<Pass>> {
    profiles
        .iter()
        .map(|p| {
            let tx_m = position_at(tx, p.t)?;
            let rx_m = position_at(rx, p.t)?;
            let reference = match p.domain {
                Domain::Absolute => 0.0,
                Domain::SidelinkRelative => tof_sidelink(tx_m, rx_m),
            };
            let full = p.full_len() as f64;
            let half = (p.subcarriers as f64 - 1.0) / 2.0;
            let centred =
                p.r.iter()
                    .enumerate()
                    .map(|(i, v)| v * cis_cycles(-((p.first_cell + i) as f64) * half / full))
                    .collect();
            Ok(Pass {
                centred,
                first_cell: p.first_cell as f64,
                gain: p.gain,
                tx: tx_m,
                rx: rx_m,
                reference,
                cells_per_second: p.bandwidth * p.oversample as f64,
                centre_hz: half * p.bandwidth / p.subcarriers as f64,
            })
        })
        .collect()
}

/// Per-measurement backprojection summands at `point`; `None` where the
/// hypothesised delay falls outside a stored profile.
pub fn pixel_contributions(
    profiles: &[RangeProfile],
    tx: &Trajectory,
    rx: &Trajectory,
    point: Vec3,
    params: &OfdmParams,
) -> Result<Vec<Option<Complex64>>> {
    Ok(passes(profiles, tx, rx)?
        .iter()
        .map(|pass| pass.sample(point, params.fc))
        .collect())
}

/// Backprojects `profiles` onto `grid`.
///
/// For pixel `x0` and measurement `m` the hypothesised delay is
/// `dt = (|tx_m - x0| + |x0 - rx_m|) / c0`, minus the sidelink delay
/// `|tx_m - rx_m| / c0` for sidelink-relative profiles. The profile is read
/// at that delay by linear interpolation, rotated by `e^{+j 2 pi fc delay}`,
/// scaled by `1 / gain` and summed.
///
/// Interpolation runs on the profile multiplied by `e^{-j 2 pi (B_c) delay}`,
/// with `B_c = (N - 1) spacing / 2` the band centre offset, which turns the
/// steep phase slope across the mainlobe into a nearly constant phase; the
/// factor is restored analytically.
pub fn backproject(
    profiles: &[RangeProfile],
    tx: &Trajectory,
    rx: &Trajectory,
    grid: &PixelGrid,
    params: &OfdmParams,
    provenance: Provenance,
) -> Result<SarImage> {
    grid.validate()?;
    let passes = passes(profiles, tx, rx)?;
    let fc = params.fc;
    let nu = grid.nu;
    let mut data = vec![Complex64::new(0.0, 0.0); grid.len()];
    let skipped: u64 = data
        .par_chunks_mut(nu)
        .enumerate()
        .map(|(iv, row)| {
            let mut skipped = 0u64;
            for (iu, px) in row.iter_mut().enumerate() {
                let x0 = grid.pixel(iu, iv);
                let mut acc = Complex64::new(0.0, 0.0);
                for pass in &passes {
                    match pass.sample(x0, fc) {
                        Some(v) => acc += v,
                        None => skipped += 1,
                    }
                }
                *px = acc;
            }
            skipped
        })
        .sum();
    if skipped > 0 {
        log::debug!("backprojection: {skipped} lookups outside the stored profiles");
    }
    Ok(SarImage {
        data,
        grid: *grid,
        provenance,
        m_used: profiles.len(),
        skipped,
    })
}

fn check_grids(images: &[SarImage]) -> Result<()> {
    let first = images
        .first()
        .ok_or(Error::ZeroInput("no images to combine"))?;
    if images.iter().any(|im| im.grid != first.grid) {
        return Err(Error::GridMismatch);
    }
    Ok(())
}

fn peak_scale(image: &SarImage) -> Result<f64> {
    let (peak, _, _) = image.peak();
    if peak == 0.0 {
        return Err(Error::ZeroInput("image with zero peak"));
    }
    Ok(1.0 / peak)
}

/// Complex sum of the images after scaling each to unit peak magnitude.
pub fn combine_coherent(images: &[SarImage]) -> Result<SarImage> {
    combine(images, Provenance::CombinedCoherent, |v, s| v * s)
}

/// Sum of peak-normalized magnitudes; the result is real and non-negative.
pub fn combine_absolute(images: &[SarImage]) -> Result<SarImage> {
    combine(images, Provenance::CombinedAbsolute, |v, s| {
        Complex64::new(v.norm() * s, 0.0)
    })
}

fn combine(
    images: &[SarImage],
    provenance: Provenance,
    f: impl Fn(Complex64, f64) -> Complex64,
) -> Result<SarImage> {
    check_grids(images)?;
    let mut data = vec![Complex64::new(0.0, 0.0); images[0].data.len()];
    for im in images {
        let s = peak_scale(im)?;
        for (acc, &v) in data.iter_mut().zip(&im.data) {
            *acc += f(v, s);
        }
    }
    Ok(SarImage {
        data,
        grid: images[0].grid,
        provenance,
        m_used: images.iter().map(|i| i.m_used).sum(),
        skipped: images.iter().map(|i| i.skipped).sum(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CutAxis {
    /// Along the grid `u` axis.
    CrossRange,
    /// Along the grid `v` axis.
    GroundRange,
}

/// Magnitude cut in dB relative to its own maximum.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Profile1D {
    /// Coordinate along the cut axis [m], measured from the grid origin.
    pub positions: Vec<f64>,
    pub db: Vec<f64>,
}

/// Cut through `through` along `axis`; magnitudes are interpolated
/// linearly across the perpendicular axis.
pub fn image_cut(image: &SarImage, axis: CutAxis, through: Vec3) -> Result<Profile1D> {
    let g = &image.grid;
    if !g.contains(through) {
        return Err(Error::OutsideGrid);
    }
    let (fu, fv) = g.coords(through);
    let mag = |iu: usize, iv: usize| image.at(iu, iv).norm();
    let lerp = |a: f64, b: f64, f: f64| a * (1.0 - f) + b * f;
    let (positions, values): (Vec<f64>, Vec<f64>) = match axis {
        CutAxis::CrossRange => {
            let (i0, f) = split(fv, g.nv);
            (0..g.nu)
                .map(|iu| {
                    let v = lerp(mag(iu, i0), mag(iu, (i0 + 1).min(g.nv - 1)), f);
                    (iu as f64 * g.du, v)
                })
                .unzip()
        }
        CutAxis::GroundRange => {
            let (i0, f) = split(fu, g.nu);
            (0..g.nv)
                .map(|iv| {
                    let v = lerp(mag(i0, iv), mag((i0 + 1).min(g.nu - 1), iv), f);
                    (iv as f64 * g.dv, v)
                })
                .unzip()
        }
    };
    let peak = values.iter().cloned().fold(0.0, f64::max);
    if peak == 0.0 {
        return Err(Error::ZeroInput("image cut is all zero"));
    }
    Ok(Profile1D {
        positions,
        db: values
            .iter()
            .map(|v| 20.0 * (v / peak).log10().max(-300.0 / 20.0))
            .collect(),
    })
}

fn split(f: f64, n: usize) -> (usize, f64) {
    let f = f.clamp(0.0, (n - 1) as f64);
    let i = (f.floor() as usize).min(n.saturating_sub(2));
    (i, f - i as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::cis_cycles;
    use crate::rangeproc::{range_compress, DataKind, SubcarrierData, Window};
    use crate::scene::linear_trajectory;

    fn params() -> OfdmParams {
        OfdmParams::table1()
    }

    fn ideal_profile(p: &OfdmParams, dt: f64, m: usize, domain_relative: bool) -> RangeProfile {
        ideal_profile_os(p, dt, m, domain_relative, 32)
    }

    fn ideal_profile_os(
        p: &OfdmParams,
        dt: f64,
        m: usize,
        domain_relative: bool,
        oversample: usize,
    ) -> RangeProfile {
        let d = SubcarrierData {
            values: (0..p.subcarriers)
                .map(|n| cis_cycles(-(n as f64 * p.spacing + p.fc) * dt))
                .collect(),
            kind: if domain_relative {
                DataKind::BistaticCorrected
            } else {
                DataKind::Divided
            },
        };
        let mut prof = range_compress(&d, p, Window::None, oversample).unwrap();
        prof.m = m;
        prof.t = m as f64 / p.prf;
        prof
    }

    #[test]
    fn grid_geometry() {
        let g = PixelGrid::ground(-1.0, 2.0, 0.5, 0.25, 5, 9);
        g.validate().unwrap();
        assert_eq!(g.pixel(2, 4), [0.0, 3.0, 0.0]);
        assert_eq!(g.coords([0.0, 3.0, 7.0]), (2.0, 4.0));
        assert!(g.contains([1.0, 4.0, 0.0]));
        assert!(!g.contains([1.1, 4.0, 0.0]));
        let mut bad = g;
        bad.v_axis = [1.0, 0.0, 0.0];
        assert!(bad.validate().is_err());
        bad = g;
        bad.du = 0.0;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn single_measurement_focuses_with_zero_phase() {
        let p = params();
        let tx = linear_trajectory("tx", [0.0, 0.0, 10.0], [0.0; 3], p.prf, 1).unwrap();
        let target = [0.0, 10.0, 0.0];
        let dt = 2.0 * dist(tx.samples[0].1, target) / C0;
        let prof = ideal_profile(&p, dt, 0, false);
        let grid = PixelGrid::centred(0.0, 10.0, 0.05, 0.05, 0, 0);
        let im = backproject(&[prof], &tx, &tx, &grid, &p, Provenance::Mono).unwrap();
        let v = im.data[0];
        assert!((v.norm() - 1.0).abs() < 1e-3, "{}", v.norm());
        assert!(v.arg().abs() < 1e-3);
    }

    #[test]
    fn scalloping_at_default_oversampling() {
        // linear interpolation between cells 1/16 of a resolution cell apart
        let bound = 1.0 - (std::f64::consts::PI / 16.0).sin() / (std::f64::consts::PI / 16.0);
        let p = params();
        let tx = linear_trajectory("tx", [0.0, 0.0, 10.0], [0.0; 3], p.prf, 1).unwrap();
        let mut worst: f64 = 0.0;
        for k in 0..16 {
            let y = 10.0 + k as f64 * 0.0023;
            let target = [0.0, y, 0.0];
            let dt = 2.0 * dist(tx.samples[0].1, target) / C0;
            let prof = ideal_profile_os(&p, dt, 0, false, 8);
            let grid = PixelGrid::centred(0.0, y, 0.05, 0.05, 0, 0);
            let im = backproject(&[prof], &tx, &tx, &grid, &p, Provenance::Mono).unwrap();
            worst = worst.max(1.0 - im.data[0].norm());
            assert!(im.data[0].arg().abs() < 1e-2);
        }
        assert!(worst <= bound + 1e-6, "{worst} vs {bound}");
    }

    #[test]
    fn coherent_gain_is_linear_in_m() {
        let p = params();
        let tx = linear_trajectory("tx", [-0.5, 0.0, 10.0], [1.0, 0.0, 0.0], p.prf, 50).unwrap();
        let target = [0.0, 10.0, 0.0];
        let profiles: Vec<_> = (0..50)
            .map(|m| {
                let pos = tx.samples[m].1;
                ideal_profile(&p, 2.0 * dist(pos, target) / C0, m, false)
            })
            .collect();
        let grid = PixelGrid::centred(0.0, 10.0, 0.05, 0.05, 0, 0);
        let a = |k: usize| {
            backproject(&profiles[..k], &tx, &tx, &grid, &p, Provenance::Mono)
                .unwrap()
                .data[0]
                .norm()
        };
        let (a10, a50) = (a(10), a(50));
        assert!((a50 / 50.0 - 1.0).abs() < 1e-3 && (a10 / 10.0 - 1.0).abs() < 1e-3);

        let parts = pixel_contributions(&profiles, &tx, &tx, target, &p).unwrap();
        let sum: Complex64 = parts.iter().map(|v| v.unwrap()).sum();
        let im = backproject(&profiles, &tx, &tx, &grid, &p, Provenance::Mono).unwrap();
        assert_eq!(sum, im.data[0]);
    }

    #[test]
    fn relative_profiles_use_the_sidelink_reference() {
        let p = params();
        let tx = linear_trajectory("tx", [0.0, 0.0, 10.0], [0.0; 3], p.prf, 1).unwrap();
        let rx = linear_trajectory("rx", [4.7, 0.0, 10.0], [0.0; 3], p.prf, 1).unwrap();
        let target = [1.0, 12.0, 0.0];
        let t = tx.samples[0].1;
        let r = rx.samples[0].1;
        let rel = (dist(t, target) + dist(target, r) - dist(t, r)) / C0;
        let prof = ideal_profile(&p, rel, 0, true);
        let grid = PixelGrid::centred(1.0, 12.0, 0.05, 0.05, 0, 0);
        let im = backproject(&[prof], &tx, &rx, &grid, &p, Provenance::Bistatic).unwrap();
        assert!((im.data[0].norm() - 1.0).abs() < 1e-3);
        assert!(im.data[0].arg().abs() < 1e-3);
    }

    #[test]
    fn out_of_profile_lookups_are_counted() {
        let p = params();
        let tx = linear_trajectory("tx", [0.0, 0.0, 10.0], [0.0; 3], p.prf, 1).unwrap();
        let prof = ideal_profile(&p, 1e-7, 0, false).crop(0, 100);
        let grid = PixelGrid::centred(0.0, 10.0, 0.05, 0.05, 1, 1);
        let im = backproject(&[prof], &tx, &tx, &grid, &p, Provenance::Mono).unwrap();
        assert_eq!(im.skipped, 9);
        assert!(im.data.iter().all(|v| v.norm() == 0.0));
    }

    fn toy(values: &[f64]) -> SarImage {
        SarImage {
            data: values
                .iter()
                .map(|&v| Complex64::new(v, -0.5 * v))
                .collect(),
            grid: PixelGrid::ground(0.0, 0.0, 1.0, 1.0, values.len(), 1),
            provenance: Provenance::Mono,
            m_used: 1,
            skipped: 0,
        }
    }

    #[test]
    fn combinations() {
        let x = toy(&[0.0, 1.0, 4.0, 2.0]);
        let peak = x.peak().0;
        let c = combine_coherent(&[x.clone(), x.clone()]).unwrap();
        for (a, b) in c.data.iter().zip(&x.data) {
            assert!((a - 2.0 * b / peak).norm() < 1e-12);
        }
        assert_eq!(c.peak().1, x.peak().1);
        let single = combine_coherent(std::slice::from_ref(&x)).unwrap();
        assert!((single.peak().0 - 1.0).abs() < 1e-12);

        let a = combine_absolute(&[x.clone(), x.clone()]).unwrap();
        for (v, w) in a.data.iter().zip(&x.data) {
            assert!((v.re - 2.0 * w.norm() / peak).abs() < 1e-12 && v.im == 0.0);
        }

        let mut y = toy(&[3.0, -1.0, 0.5, 2.0]);
        y.data[1] = Complex64::new(0.0, 2.5);
        let coh = combine_coherent(&[x.clone(), y.clone()]).unwrap();
        let abs = combine_absolute(&[x.clone(), y]).unwrap();
        for (c, a) in coh.data.iter().zip(&abs.data) {
            assert!(a.re + 1e-12 >= c.norm());
        }

        let mut other = x.clone();
        other.grid.du = 2.0;
        assert!(matches!(
            combine_coherent(&[x.clone(), other]),
            Err(Error::GridMismatch)
        ));
        assert!(combine_coherent(&[toy(&[0.0, 0.0])]).is_err());
    }

    #[test]
    fn cuts() {
        let mut im = toy(&[0.0; 12]);
        im.grid = PixelGrid::ground(0.0, 0.0, 0.1, 0.2, 4, 3);
        // symmetric bump around pixel (2, 1)
        for (iu, v) in [(1, 0.5), (2, 1.0), (3, 0.5)] {
            im.data[4 + iu] = Complex64::new(v, 0.0);
        }
        let cut = image_cut(&im, CutAxis::CrossRange, im.grid.pixel(2, 1)).unwrap();
        assert_eq!(cut.db.len(), 4);
        assert_eq!(cut.db[2], 0.0);
        assert!((cut.db[1] - cut.db[3]).abs() < 1e-12);
        assert!((cut.positions[3] - 0.3).abs() < 1e-12);

        let g = image_cut(&im, CutAxis::GroundRange, im.grid.pixel(2, 1)).unwrap();
        assert_eq!(g.db.len(), 3);
        assert_eq!(g.db[1], 0.0);

        // half way between rows 0 and 1
        let half = image_cut(&im, CutAxis::CrossRange, im.grid.point(2.0, 0.5)).unwrap();
        assert_eq!(half.db[2], 0.0);

        assert!(matches!(
            image_cut(&im, CutAxis::CrossRange, [5.0, 0.0, 0.0]),
            Err(Error::OutsideGrid)
        ));
        let zero = toy(&[0.0; 3]);
        assert!(image_cut(&zero, CutAxis::CrossRange, [1.0, 0.0, 0.0]).is_err());
    }
}
