//! Range-compresses the echo of a single point target and compares the
//! peak with the expected cell and phase.

use std::f64::consts::PI;

use sarkit::channel::{ErrorConfig, Simulator};
use sarkit::dsp::phase_distance;
use sarkit::rangeproc::{compress_measurement, peak_cell, Chain, ProcessOptions, Window};
use sarkit::scene::{linear_trajectory, PointTarget, Propagation, Receiver, Scene};
use sarkit::waveform::{generate_code, OfdmParams};
use sarkit::{Complex64, C0};

fn main() -> sarkit::Result<()> {
    let p = OfdmParams::table1();
    let code = generate_code(&p, 1);
    let range = 123.4;
    let scene = Scene {
        tx: linear_trajectory("tx", [0.0; 3], [0.0; 3], p.prf, 1)?,
        receivers: vec![Receiver::Monostatic],
        targets: vec![PointTarget::new(
            [range, 0.0, 0.0],
            Complex64::new(1.0, 0.0),
        )?],
        r_cal: 0.0,
        propagation: Propagation {
            path_loss: false,
            ..Propagation::default()
        },
    };
    let sim = Simulator::new(&scene, &p, &code, ErrorConfig::ideal(1))?;
    let meas = sim.measurement(0, 0)?;
    let tof = meas.truth.target_tofs[0];

    for window in [Window::None, Window::Hann] {
        let opts = ProcessOptions {
            window,
            ..ProcessOptions::default()
        };
        let prof = compress_measurement(&meas.rx_radar, None, Chain::Monostatic, &p, &code, &opts)?;
        let peak = peak_cell(&prof)?;
        let r = prof.delay_of_cell(peak.refined) * C0 / 2.0;
        let phase_err = phase_distance(peak.refined_value.arg(), -2.0 * PI * p.fc * tof);
        println!(
            "{window:?}: cell {} (expected {:.2}), range {r:.4} m, |peak| / gain {:.4}, phase error {phase_err:.1e} rad",
            peak.cell,
            prof.cell_of_delay(tof),
            peak.refined_value.norm() / prof.gain
        );
    }
    Ok(())
}
