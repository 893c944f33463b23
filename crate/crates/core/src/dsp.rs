//! Transform and interpolation helpers shared by the signal chain.

use std::cell::RefCell;
use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::FftPlanner;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// Unnormalized forward DFT, in place: `X[k] = sum x[n] e^{-j2pi nk/L}`.
pub fn fft_in_place(buf: &mut [Complex64]) {
    if buf.is_empty() {
        return;
    }
    let fft = PLANNER.with(|p| p.borrow_mut().plan_fft_forward(buf.len()));
    fft.process(buf);
}

/// Unnormalized inverse DFT, in place: `x[n] = sum X[k] e^{+j2pi nk/L}`.
pub fn ifft_in_place(buf: &mut [Complex64]) {
    if buf.is_empty() {
        return;
    }
    let fft = PLANNER.with(|p| p.borrow_mut().plan_fft_inverse(buf.len()));
    fft.process(buf);
}

/// `e^{j 2 pi cycles}` with the integer part of `cycles` removed first.
pub fn cis_cycles(cycles: f64) -> Complex64 {
    let frac = cycles - cycles.round();
    Complex64::from_polar(1.0, 2.0 * PI * frac)
}

/// Wraps a phase to `(-pi, pi]`.
pub fn wrap_phase(phi: f64) -> f64 {
    let mut w = phi.rem_euclid(2.0 * PI);
    if w > PI {
        w -= 2.0 * PI;
    }
    w
}

/// Absolute difference of two phases on the circle, in `[0, pi]`.
pub fn phase_distance(a: f64, b: f64) -> f64 {
    wrap_phase(a - b).abs()
}

/// Chirp-z evaluation `X[j] = sum_n a[n] e^{j 2 pi r n j}` for `j < out_len`.
///
/// `r` is the per-index frequency step in cycles. Computed with Bluestein's
/// convolution, so the cost is a few FFTs of size `>= a.len() + out_len`.
pub fn chirp_z(a: &[Complex64], r: f64, out_len: usize) -> Vec<Complex64> {
    if out_len == 0 {
        return Vec::new();
    }
    if a.is_empty() {
        return vec![Complex64::new(0.0, 0.0); out_len];
    }
    let n_in = a.len();
    let size = (n_in + out_len - 1).next_power_of_two();
    // e^{j pi r k^2}, reduced in cycles for large k.
    let chirp = |k: usize| {
        let k = k as f64;
        cis_cycles(0.5 * r * k * k)
    };

    let mut g = vec![Complex64::new(0.0, 0.0); size];
    for (n, (dst, &src)) in g.iter_mut().zip(a).enumerate() {
        *dst = src * chirp(n);
    }
    let mut h = vec![Complex64::new(0.0, 0.0); size];
    for (k, dst) in h.iter_mut().enumerate().take(out_len) {
        *dst = chirp(k).conj();
    }
    for k in 1..n_in {
        h[size - k] = chirp(k).conj();
    }
    fft_in_place(&mut g);
    fft_in_place(&mut h);
    for (x, y) in g.iter_mut().zip(&h) {
        *x *= y;
    }
    ifft_in_place(&mut g);
    let scale = 1.0 / size as f64;
    (0..out_len).map(|j| g[j] * scale * chirp(j)).collect()
}

/// Symmetric Hann taper of length `n`.
pub fn hann(n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![1.0],
        _ => (0..n)
            .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / (n - 1) as f64).cos())
            .collect(),
    }
}

/// Linear interpolation of `values` at fractional index `pos`; `None` outside.
pub fn lerp_at(values: &[Complex64], pos: f64) -> Option<Complex64> {
    if !(pos >= 0.0) || values.is_empty() {
        return None;
    }
    let i = pos.floor() as usize;
    if i + 1 >= values.len() {
        if i == values.len() - 1 && pos == i as f64 {
            return Some(values[i]);
        }
        return None;
    }
    let f = pos - i as f64;
    Some(values[i] * (1.0 - f) + values[i + 1] * f)
}

/// Vertex offset in `[-0.5, 0.5]` of the parabola through three equally
/// spaced samples around a maximum.
pub fn parabolic_offset(left: f64, center: f64, right: f64) -> f64 {
    let denom = left - 2.0 * center + right;
    if denom.abs() < f64::MIN_POSITIVE || !denom.is_finite() {
        return 0.0;
    }
    (0.5 * (left - right) / denom).clamp(-0.5, 0.5)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn direct(a: &[Complex64], r: f64, out_len: usize) -> Vec<Complex64> {
        (0..out_len)
            .map(|j| {
                a.iter()
                    .enumerate()
                    .map(|(n, &v)| v * cis_cycles(r * (n * j) as f64))
                    .sum()
            })
            .collect()
    }

    #[test]
    fn chirp_z_matches_direct_sum() {
        let a: Vec<Complex64> = (0..37)
            .map(|i| Complex64::new((i as f64 * 0.37).sin(), (i as f64 * 1.3).cos()))
            .collect();
        for &r in &[0.01, 1.0 / 64.0, 0.0371, -0.2] {
            let fast = chirp_z(&a, r, 53);
            let slow = direct(&a, r, 53);
            for (f, s) in fast.iter().zip(&slow) {
                assert!((f - s).norm() < 1e-10, "r={r}: {f} vs {s}");
            }
        }
    }

    #[test]
    fn chirp_z_at_unit_grid_is_inverse_dft() {
        let mut spec: Vec<Complex64> = (0..16).map(|i| Complex64::new(i as f64, 1.0)).collect();
        let czt = chirp_z(&spec, 1.0 / 16.0, 16);
        ifft_in_place(&mut spec);
        for (a, b) in czt.iter().zip(&spec) {
            assert!((a - b).norm() < 1e-9);
        }
    }

    #[test]
    fn hann_endpoints_and_peak() {
        let w = hann(9);
        assert_eq!(w[0], 0.0);
        assert!((w[4] - 1.0).abs() < 1e-15);
        assert!((w[8]).abs() < 1e-15);
    }

    #[test]
    fn wrap_phase_range() {
        assert!((wrap_phase(3.0 * PI) - PI).abs() < 1e-12);
        assert!((wrap_phase(-PI) - PI).abs() < 1e-12);
        assert!((wrap_phase(0.5) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn lerp_edges() {
        let v = [Complex64::new(0.0, 0.0), Complex64::new(2.0, 0.0)];
        assert_eq!(lerp_at(&v, 0.5).unwrap().re, 1.0);
        assert_eq!(lerp_at(&v, 1.0).unwrap().re, 2.0);
        assert!(lerp_at(&v, 1.5).is_none());
        assert!(lerp_at(&v, -0.1).is_none());
    }

    #[test]
    fn parabola_vertex() {
        // y = -(x - 0.25)^2 sampled at -1, 0, 1
        let f = |x: f64| -(x - 0.25) * (x - 0.25);
        assert!((parabolic_offset(f(-1.0), f(0.0), f(1.0)) - 0.25).abs() < 1e-12);
    }
}
