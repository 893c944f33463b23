//! Artifact formats: binary complex matrices, CSV trajectories and images,
//! PGM previews and JSON-lines event logs.
//!
//! Binary layout (all little-endian):
//!
//! | bytes | field |
//! |-------|-------|
//! | 8     | magic `SARKITMX` |
//! | 2     | version, `1` |
//! | 1     | element type: `1` complex64, `2` complex128 |
//! | 1     | payload kind: `1` signals, `2` range profiles, `3` image |
//! | 8     | rows |
//! | 8     | cols |
//! | 2     | `G`, global metadata count |
//! | 2     | `K`, metadata count per row |
//! | 8 G   | global metadata, f64 |
//! | 8 K rows | row metadata, f64 |
//! | rows cols (8 or 16) | interleaved re, im |

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::Path;

use num_complex::Complex64;
use serde::Serialize;

use crate::channel::{Measurement, SlowTimeError, Truth};
use crate::imaging::{PixelGrid, Provenance, SarImage};
use crate::rangeproc::{Domain, RangeProfile};
use crate::scene::Trajectory;
use crate::{ComplexSignal, Error, Result};

pub const MAGIC: &[u8; 8] = b"SARKITMX";
pub const VERSION: u16 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Elem {
    Complex64 = 1,
    Complex128 = 2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Signals = 1,
    Profiles = 2,
    Image = 3,
}

/// In-memory form of one binary file.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub kind: Kind,
    pub elem: Elem,
    pub rows: usize,
    pub cols: usize,
    pub global: Vec<f64>,
    /// `rows` entries of equal length.
    pub row_meta: Vec<Vec<f64>>,
    /// Row-major payload.
    pub data: Vec<Complex64>,
}

fn format_err(msg: impl Into<String>) -> Error {
    Error::Format(msg.into())
}

/// Header fields and metadata preceding the payload.
#[derive(Debug, Clone, PartialEq)]
pub struct Header {
    pub kind: Kind,
    pub elem: Elem,
    pub rows: usize,
    pub cols: usize,
    pub global: Vec<f64>,
    pub row_meta: Vec<Vec<f64>>,
}

impl Header {
    fn meta_width(&self) -> Result<usize> {
        let k = self.row_meta.first().map_or(0, |r| r.len());
        if self.row_meta.len() != self.rows || self.row_meta.iter().any(|r| r.len() != k) {
            return Err(format_err("row metadata is ragged"));
        }
        Ok(k)
    }

    fn write_to(&self, w: &mut impl Write) -> Result<()> {
        let g = u16::try_from(self.global.len()).map_err(|_| format_err("too much metadata"))?;
        let k =
            u16::try_from(self.meta_width()?).map_err(|_| format_err("too much row metadata"))?;
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&[self.elem as u8, self.kind as u8])?;
        w.write_all(&(self.rows as u64).to_le_bytes())?;
        w.write_all(&(self.cols as u64).to_le_bytes())?;
        w.write_all(&g.to_le_bytes())?;
        w.write_all(&k.to_le_bytes())?;
        for v in self.global.iter().chain(self.row_meta.iter().flatten()) {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    fn read_from(r: &mut impl Read) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)
            .map_err(|_| format_err("truncated file"))?;
        if &magic != MAGIC {
            return Err(format_err("bad magic"));
        }
        let version = u16::from_le_bytes(read_n(r)?);
        if version != VERSION {
            return Err(format_err(format!("unsupported version {version}")));
        }
        let [elem, kind] = read_n::<2>(r)?;
        let elem = match elem {
            1 => Elem::Complex64,
            2 => Elem::Complex128,
            e => return Err(format_err(format!("unknown element type {e}"))),
        };
        let kind = match kind {
            1 => Kind::Signals,
            2 => Kind::Profiles,
            3 => Kind::Image,
            k => return Err(format_err(format!("unknown payload kind {k}"))),
        };
        let rows = u64::from_le_bytes(read_n(r)?) as usize;
        let cols = u64::from_le_bytes(read_n(r)?) as usize;
        rows.checked_mul(cols)
            .ok_or_else(|| format_err("dimensions overflow"))?;
        let g = u16::from_le_bytes(read_n(r)?) as usize;
        let k = u16::from_le_bytes(read_n(r)?) as usize;
        let mut f64s = |n: usize| -> Result<Vec<f64>> {
            (0..n).map(|_| Ok(f64::from_le_bytes(read_n(r)?))).collect()
        };
        let global = f64s(g)?;
        let row_meta = (0..rows).map(|_| f64s(k)).collect::<Result<Vec<_>>>()?;
        Ok(Self {
            kind,
            elem,
            rows,
            cols,
            global,
            row_meta,
        })
    }
}

fn write_values(w: &mut impl Write, elem: Elem, values: &[Complex64]) -> Result<()> {
    for v in values {
        match elem {
            Elem::Complex64 => {
                w.write_all(&(v.re as f32).to_le_bytes())?;
                w.write_all(&(v.im as f32).to_le_bytes())?;
            }
            Elem::Complex128 => {
                w.write_all(&v.re.to_le_bytes())?;
                w.write_all(&v.im.to_le_bytes())?;
            }
        }
    }
    Ok(())
}

fn read_values(
    r: &mut impl Read,
    elem: Elem,
    count: usize,
    out: &mut Vec<Complex64>,
) -> Result<()> {
    for _ in 0..count {
        out.push(match elem {
            Elem::Complex64 => Complex64::new(
                f32::from_le_bytes(read_n(r)?) as f64,
                f32::from_le_bytes(read_n(r)?) as f64,
            ),
            Elem::Complex128 => Complex64::new(
                f64::from_le_bytes(read_n(r)?),
                f64::from_le_bytes(read_n(r)?),
            ),
        });
    }
    Ok(())
}

impl Matrix {
    pub fn header(&self) -> Header {
        Header {
            kind: self.kind,
            elem: self.elem,
            rows: self.rows,
            cols: self.cols,
            global: self.global.clone(),
            row_meta: self.row_meta.clone(),
        }
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        if self.data.len() != self.rows * self.cols {
            return Err(format_err("matrix dimensions are inconsistent"));
        }
        self.header().write_to(w)?;
        write_values(w, self.elem, &self.data)
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let h = Header::read_from(r)?;
        let count = h.rows * h.cols;
        let mut data = Vec::with_capacity(count.min(1 << 28));
        read_values(r, h.elem, count, &mut data)?;
        let mut rest = [0u8; 1];
        if r.read(&mut rest)? != 0 {
            return Err(format_err("trailing bytes after payload"));
        }
        Ok(Self {
            kind: h.kind,
            elem: h.elem,
            rows: h.rows,
            cols: h.cols,
            global: h.global,
            row_meta: h.row_meta,
            data,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_from(&mut BufReader::new(File::open(path)?))
    }

    fn expect(&self, kind: Kind, min_global: usize) -> Result<()> {
        expect(kind, self.kind, &self.global, min_global)
    }
}

fn expect(want: Kind, found: Kind, global: &[f64], min_global: usize) -> Result<()> {
    if want != found {
        return Err(format_err(format!("expected {want:?}, found {found:?}")));
    }
    if global.len() < min_global {
        return Err(format_err("missing global metadata"));
    }
    Ok(())
}

/// Row-by-row writer producing the same bytes as [`Matrix::save`].
///
/// The row-metadata block is reserved up front and filled in by
/// [`MatrixWriter::finish`].
pub struct MatrixWriter {
    w: BufWriter<File>,
    header: Header,
    meta_offset: u64,
    written: usize,
}

impl MatrixWriter {
    pub fn create(
        path: &Path,
        kind: Kind,
        elem: Elem,
        rows: usize,
        cols: usize,
        global: Vec<f64>,
        meta_width: usize,
    ) -> Result<Self> {
        let header = Header {
            kind,
            elem,
            rows,
            cols,
            global,
            row_meta: vec![vec![0.0; meta_width]; rows],
        };
        let mut w = BufWriter::new(File::create(path)?);
        header.write_to(&mut w)?;
        let meta_offset = 32 + 8 * header.global.len() as u64;
        Ok(Self {
            w,
            header,
            meta_offset,
            written: 0,
        })
    }

    pub fn write_row(&mut self, meta: &[f64], data: &[Complex64]) -> Result<()> {
        let h = &mut self.header;
        if self.written >= h.rows {
            return Err(format_err("more rows than declared"));
        }
        if data.len() != h.cols {
            return Err(Error::LengthMismatch {
                expected: h.cols,
                actual: data.len(),
            });
        }
        let slot = &mut h.row_meta[self.written];
        if meta.len() != slot.len() {
            return Err(Error::LengthMismatch {
                expected: slot.len(),
                actual: meta.len(),
            });
        }
        slot.copy_from_slice(meta);
        write_values(&mut self.w, h.elem, data)?;
        self.written += 1;
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        if self.written != self.header.rows {
            return Err(format_err(format!(
                "{} of {} rows written",
                self.written, self.header.rows
            )));
        }
        self.w.seek(SeekFrom::Start(self.meta_offset))?;
        for v in self.header.row_meta.iter().flatten() {
            self.w.write_all(&v.to_le_bytes())?;
        }
        self.w.flush()?;
        Ok(())
    }
}

/// Reads the header eagerly and the payload one row at a time.
pub struct MatrixReader {
    r: BufReader<File>,
    pub header: Header,
    next: usize,
}

impl MatrixReader {
    pub fn open(path: &Path) -> Result<Self> {
        let mut r = BufReader::new(File::open(path)?);
        let header = Header::read_from(&mut r)?;
        Ok(Self { r, header, next: 0 })
    }

    /// Next payload row, or `None` after the last one.
    pub fn read_row(&mut self) -> Result<Option<Vec<Complex64>>> {
        if self.next >= self.header.rows {
            return Ok(None);
        }
        let mut row = Vec::with_capacity(self.header.cols);
        read_values(&mut self.r, self.header.elem, self.header.cols, &mut row)?;
        self.next += 1;
        Ok(Some(row))
    }
}

fn read_n<const N: usize>(r: &mut impl Read) -> Result<[u8; N]> {
    let mut b = [0u8; N];
    r.read_exact(&mut b).map_err(|e| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            format_err("truncated file")
        } else {
            Error::Io(e)
        }
    })?;
    Ok(b)
}

/// Which channel of a measurement to store.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Channel {
    Radar,
    Sidelink,
}

/// Measurements of one receiver channel, one row per measurement.
///
/// Global metadata: `[sample_rate, start_time]`. Row metadata:
/// `[m, t, cpe, to, sidelink_tof (NaN if none), target tofs...]`.
pub fn measurements_to_matrix(meas: &[Measurement], channel: Channel) -> Result<Matrix> {
    let first = meas.first().ok_or(Error::ZeroInput("no measurements"))?;
    fn pick(m: &Measurement, channel: Channel) -> Result<&ComplexSignal> {
        match channel {
            Channel::Radar => Ok(&m.rx_radar),
            Channel::Sidelink => m
                .rx_sidelink
                .as_ref()
                .ok_or_else(|| Error::InvalidParams("measurement has no sidelink channel".into())),
        }
    }
    let s0 = pick(first, channel)?;
    let cols = s0.len();
    let mut data = Vec::with_capacity(meas.len() * cols);
    let mut row_meta = Vec::with_capacity(meas.len());
    for m in meas {
        let s = pick(m, channel)?;
        if s.len() != cols {
            return Err(Error::LengthMismatch {
                expected: cols,
                actual: s.len(),
            });
        }
        data.extend_from_slice(&s.samples);
        let row = measurement_meta(m);
        row_meta.push(row);
    }
    Ok(Matrix {
        kind: Kind::Signals,
        elem: Elem::Complex64,
        rows: meas.len(),
        cols,
        global: vec![s0.sample_rate, s0.start_time],
        row_meta,
        data,
    })
}

/// Inverse of [`measurements_to_matrix`]; `sidelink` supplies the second
/// channel when present.
pub fn matrix_to_measurements(
    radar: &Matrix,
    sidelink: Option<&Matrix>,
) -> Result<Vec<Measurement>> {
    radar.expect(Kind::Signals, 2)?;
    if let Some(sl) = sidelink {
        sl.expect(Kind::Signals, 2)?;
        if sl.rows != radar.rows || sl.cols != radar.cols {
            return Err(format_err("radar and sidelink files differ in shape"));
        }
    }
    let (fs, t0) = (radar.global[0], radar.global[1]);
    (0..radar.rows)
        .map(|i| {
            let row = |m: &Matrix| m.data[i * m.cols..(i + 1) * m.cols].to_vec();
            measurement_from_row(&radar.row_meta[i], row(radar), sidelink.map(row), fs, t0)
        })
        .collect()
}

/// Row metadata stored with a measurement.
pub fn measurement_meta(m: &Measurement) -> Vec<f64> {
    let mut row = vec![
        m.index as f64,
        m.t,
        m.truth.clock.cpe,
        m.truth.clock.to,
        m.truth.sidelink_tof.unwrap_or(f64::NAN),
    ];
    row.extend_from_slice(&m.truth.target_tofs);
    row
}

fn measurement_from_row(
    meta: &[f64],
    radar: Vec<Complex64>,
    sidelink: Option<Vec<Complex64>>,
    fs: f64,
    t0: f64,
) -> Result<Measurement> {
    if meta.len() < 5 {
        return Err(format_err("signal row metadata too short"));
    }
    Ok(Measurement {
        index: meta[0] as usize,
        t: meta[1],
        rx_radar: ComplexSignal::new(radar, fs, t0),
        rx_sidelink: sidelink.map(|s| ComplexSignal::new(s, fs, t0)),
        truth: Truth {
            target_tofs: meta[5..].to_vec(),
            sidelink_tof: (!meta[4].is_nan()).then_some(meta[4]),
            clock: SlowTimeError {
                cpe: meta[2],
                to: meta[3],
            },
        },
    })
}

/// Streams measurements back from a radar file and an optional sidelink
/// file written for the same receiver.
pub struct MeasurementReader {
    radar: MatrixReader,
    sidelink: Option<MatrixReader>,
    next: usize,
}

impl MeasurementReader {
    pub fn open(radar: &Path, sidelink: Option<&Path>) -> Result<Self> {
        let radar = MatrixReader::open(radar)?;
        let h = &radar.header;
        expect(Kind::Signals, h.kind, &h.global, 2)?;
        let sidelink = sidelink.map(MatrixReader::open).transpose()?;
        if let Some(sl) = &sidelink {
            let s = &sl.header;
            expect(Kind::Signals, s.kind, &s.global, 2)?;
            if s.rows != h.rows || s.cols != h.cols {
                return Err(format_err("radar and sidelink files differ in shape"));
            }
        }
        Ok(Self {
            radar,
            sidelink,
            next: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.radar.header.rows
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn read_next(&mut self) -> Result<Option<Measurement>> {
        let Some(radar) = self.radar.read_row()? else {
            return Ok(None);
        };
        let sidelink = match &mut self.sidelink {
            Some(r) => Some(
                r.read_row()?
                    .ok_or_else(|| format_err("sidelink file too short"))?,
            ),
            None => None,
        };
        let h = &self.radar.header;
        let m = measurement_from_row(
            &h.row_meta[self.next],
            radar,
            sidelink,
            h.global[0],
            h.global[1],
        )?;
        self.next += 1;
        Ok(Some(m))
    }
}

/// Profiles sharing one cell range. Global metadata:
/// `[first_cell, oversample, subcarriers, bandwidth, gain, domain]`; row
/// metadata `[m, t]`.
pub fn profiles_to_matrix(profiles: &[RangeProfile]) -> Result<Matrix> {
    let p0 = profiles.first().ok_or(Error::ZeroInput("no profiles"))?;
    let cols = p0.r.len();
    let mut data = Vec::with_capacity(profiles.len() * cols);
    for p in profiles {
        if p.r.len() != cols
            || p.first_cell != p0.first_cell
            || p.oversample != p0.oversample
            || p.domain != p0.domain
        {
            return Err(format_err("profiles do not share one layout"));
        }
        data.extend_from_slice(&p.r);
    }
    Ok(Matrix {
        kind: Kind::Profiles,
        elem: Elem::Complex64,
        rows: profiles.len(),
        cols,
        global: vec![
            p0.first_cell as f64,
            p0.oversample as f64,
            p0.subcarriers as f64,
            p0.bandwidth,
            p0.gain,
            p0.domain.code(),
        ],
        row_meta: profiles.iter().map(|p| vec![p.m as f64, p.t]).collect(),
        data,
    })
}

/// Profiles as stored; the subcarrier spectrum is not kept on disk.
pub fn matrix_to_profiles(m: &Matrix) -> Result<Vec<RangeProfile>> {
    m.expect(Kind::Profiles, 6)?;
    let g = &m.global;
    let domain = Domain::from_code(g[5])?;
    (0..m.rows)
        .map(|i| {
            let meta = &m.row_meta[i];
            if meta.len() < 2 {
                return Err(format_err("profile row metadata too short"));
            }
            Ok(RangeProfile {
                r: m.data[i * m.cols..(i + 1) * m.cols].to_vec(),
                first_cell: g[0] as usize,
                oversample: g[1] as usize,
                subcarriers: g[2] as usize,
                bandwidth: g[3],
                gain: g[4],
                domain,
                m: meta[0] as usize,
                t: meta[1],
                spectrum: None,
            })
        })
        .collect()
}

/// Image rows are grid rows (`v`). Global metadata:
/// `[origin xyz, u_axis xyz, v_axis xyz, du, dv, provenance, m_used, skipped]`.
pub fn image_to_matrix(image: &SarImage) -> Matrix {
    let g = &image.grid;
    let mut global = Vec::with_capacity(14);
    global.extend_from_slice(&g.origin);
    global.extend_from_slice(&g.u_axis);
    global.extend_from_slice(&g.v_axis);
    global.extend_from_slice(&[
        g.du,
        g.dv,
        image.provenance.code(),
        image.m_used as f64,
        image.skipped as f64,
    ]);
    Matrix {
        kind: Kind::Image,
        elem: Elem::Complex64,
        rows: g.nv,
        cols: g.nu,
        global,
        row_meta: vec![Vec::new(); g.nv],
        data: image.data.clone(),
    }
}

pub fn matrix_to_image(m: &Matrix) -> Result<SarImage> {
    m.expect(Kind::Image, 14)?;
    let g = &m.global;
    let grid = PixelGrid {
        origin: [g[0], g[1], g[2]],
        u_axis: [g[3], g[4], g[5]],
        v_axis: [g[6], g[7], g[8]],
        du: g[9],
        dv: g[10],
        nu: m.cols,
        nv: m.rows,
    };
    Ok(SarImage {
        data: m.data.clone(),
        grid,
        provenance: Provenance::from_code(g[11])?,
        m_used: g[12] as usize,
        skipped: g[13] as u64,
    })
}

/// `t,x,y,z` rows with shortest round-trip number formatting.
pub fn write_trajectory_csv(path: &Path, traj: &Trajectory) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "# node={}", traj.node_id)?;
    writeln!(w, "t,x,y,z")?;
    for (t, p) in &traj.samples {
        writeln!(w, "{t},{},{},{}", p[0], p[1], p[2])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trajectory_csv(path: &Path) -> Result<Trajectory> {
    let r = BufReader::new(File::open(path)?);
    let mut node = String::new();
    let mut samples = Vec::new();
    for (no, line) in r.lines().enumerate() {
        let line = line?;
        if let Some(id) = line.strip_prefix("# node=") {
            node = id.to_string();
            continue;
        }
        if line.is_empty() || line.starts_with('#') || line == "t,x,y,z" {
            continue;
        }
        let v = line
            .split(',')
            .map(|f| f.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| format_err(format!("{}:{}: {e}", path.display(), no + 1)))?;
        if v.len() != 4 {
            return Err(format_err(format!(
                "{}:{}: expected 4 fields",
                path.display(),
                no + 1
            )));
        }
        samples.push((v[0], [v[1], v[2], v[3]]));
    }
    Trajectory::new(node, samples)
}

/// One line per pixel: `iu,iv,x,y,z,re,im`.
pub fn write_image_csv(path: &Path, image: &SarImage) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "iu,iv,x,y,z,re,im")?;
    let g = &image.grid;
    for iv in 0..g.nv {
        for iu in 0..g.nu {
            let p = g.pixel(iu, iv);
            let v = image.at(iu, iv);
            writeln!(w, "{iu},{iv},{},{},{},{},{}", p[0], p[1], p[2], v.re, v.im)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// 8-bit grey levels: 0 dB maps to 255, -30 dB and below to 0, linear in
/// dB. The top row of the picture is the last grid row.
pub fn image_to_pgm(image: &SarImage) -> Vec<u8> {
    let g = &image.grid;
    let peak = image.peak().0;
    let mut out = format!("P5\n{} {}\n255\n", g.nu, g.nv).into_bytes();
    for iv in (0..g.nv).rev() {
        for iu in 0..g.nu {
            let m = image.at(iu, iv).norm();
            let db = if peak > 0.0 && m > 0.0 {
                20.0 * (m / peak).log10()
            } else {
                -30.0
            };
            out.push(pgm_level(db));
        }
    }
    out
}

pub fn pgm_level(db: f64) -> u8 {
    let x = ((db.clamp(-30.0, 0.0) + 30.0) / 30.0 * 255.0).round();
    x as u8
}

/// Appends one JSON object per line.
pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut w, r).map_err(|e| format_err(e.to_string()))?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_matrix(elem: Elem) -> Matrix {
        Matrix {
            kind: Kind::Signals,
            elem,
            rows: 2,
            cols: 3,
            global: vec![1.5, -2.0],
            row_meta: vec![vec![0.0, 1.0], vec![1.0, f64::NAN]],
            data: (0..6)
                .map(|i| Complex64::new(i as f64 * 0.5, -(i as f64)))
                .collect(),
        }
    }

    #[test]
    fn header_layout() {
        let m = sample_matrix(Elem::Complex64);
        let mut buf = Vec::new();
        m.write_to(&mut buf).unwrap();
        assert_eq!(&buf[..8], b"SARKITMX");
        assert_eq!(u16::from_le_bytes([buf[8], buf[9]]), 1);
        assert_eq!(buf[10], 1);
        assert_eq!(buf[11], 1);
        assert_eq!(u64::from_le_bytes(buf[12..20].try_into().unwrap()), 2);
        assert_eq!(u64::from_le_bytes(buf[20..28].try_into().unwrap()), 3);
        assert_eq!(u16::from_le_bytes([buf[28], buf[29]]), 2);
        assert_eq!(u16::from_le_bytes([buf[30], buf[31]]), 2);
        assert_eq!(buf.len(), 32 + 8 * 2 + 8 * 4 + 6 * 8);
        assert_eq!(f64::from_le_bytes(buf[32..40].try_into().unwrap()), 1.5);
        let payload = 32 + 48;
        assert_eq!(
            f32::from_le_bytes(buf[payload + 8..payload + 12].try_into().unwrap()),
            0.5
        );
    }

    #[test]
    fn round_trips() {
        for elem in [Elem::Complex64, Elem::Complex128] {
            let m = sample_matrix(elem);
            let mut buf = Vec::new();
            m.write_to(&mut buf).unwrap();
            let back = Matrix::read_from(&mut buf.as_slice()).unwrap();
            assert_eq!(back.data, m.data);
            assert_eq!(back.global, m.global);
            assert!(back.row_meta[1][1].is_nan());
        }
    }

    #[test]
    fn rejects_corrupt_files() {
        let m = sample_matrix(Elem::Complex64);
        let mut buf = Vec::new();
        m.write_to(&mut buf).unwrap();
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(Matrix::read_from(&mut bad.as_slice()).is_err());
        assert!(Matrix::read_from(&mut &buf[..buf.len() - 3]).is_err());
        let mut extra = buf.clone();
        extra.push(0);
        assert!(Matrix::read_from(&mut extra.as_slice()).is_err());
        let mut ver = buf;
        ver[8] = 9;
        assert!(Matrix::read_from(&mut ver.as_slice()).is_err());
    }

    #[test]
    fn streaming_writer_matches_save() {
        let dir = tempfile::tempdir().unwrap();
        let m = sample_matrix(Elem::Complex64);
        let a = dir.path().join("a.bin");
        let b = dir.path().join("b.bin");
        m.save(&a).unwrap();
        let mut w =
            MatrixWriter::create(&b, m.kind, m.elem, m.rows, m.cols, m.global.clone(), 2).unwrap();
        for i in 0..m.rows {
            w.write_row(&m.row_meta[i], &m.data[i * 3..(i + 1) * 3])
                .unwrap();
        }
        w.finish().unwrap();
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());

        let mut r = MatrixReader::open(&b).unwrap();
        let first = r.read_row().unwrap().unwrap();
        assert_eq!(first, m.data[..3]);
        assert!(r.read_row().unwrap().is_some());
        assert!(r.read_row().unwrap().is_none());
    }

    #[test]
    fn writer_rejects_short_files() {
        let dir = tempfile::tempdir().unwrap();
        let mut w = MatrixWriter::create(
            &dir.path().join("c.bin"),
            Kind::Signals,
            Elem::Complex64,
            2,
            1,
            vec![],
            0,
        )
        .unwrap();
        assert!(w.write_row(&[], &[Complex64::new(0.0, 0.0); 2]).is_err());
        w.write_row(&[], &[Complex64::new(0.0, 0.0)]).unwrap();
        assert!(w.finish().is_err());
    }

    #[test]
    fn pgm_levels() {
        assert_eq!(pgm_level(0.0), 255);
        assert_eq!(pgm_level(-30.0), 0);
        assert_eq!(pgm_level(-45.0), 0);
        assert_eq!(pgm_level(-15.0), 128);
        let image = SarImage {
            data: vec![Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)],
            grid: PixelGrid::ground(0.0, 0.0, 1.0, 1.0, 2, 1),
            provenance: Provenance::Mono,
            m_used: 1,
            skipped: 0,
        };
        let pgm = image_to_pgm(&image);
        assert!(pgm.starts_with(b"P5\n2 1\n255\n"));
        assert_eq!(&pgm[pgm.len() - 2..], &[255, 0]);
    }

    #[test]
    fn trajectory_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tx.csv");
        let t =
            crate::scene::linear_trajectory("tx", [-15.0, 0.1, 10.0], [1.0, 0.0, 0.0], 100.0, 7)
                .unwrap();
        write_trajectory_csv(&path, &t).unwrap();
        assert_eq!(read_trajectory_csv(&path).unwrap(), t);
    }
}
