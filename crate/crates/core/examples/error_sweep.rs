//! Image peak loss of the uncorrected chain for growing sampling and
//! carrier frequency offsets.

use sarkit::metrics::local_peak;
use sarkit::pipeline::{form_images, profiles_in_memory, reported_tracks, Context};
use sarkit::scenario::{Mode, Scenario};

fn peak(s: &Scenario) -> sarkit::Result<f64> {
    let ctx = Context::new(s.clone(), Mode::Mono)?;
    let sets = profiles_in_memory(&ctx)?;
    let images = form_images(&ctx, &sets, &reported_tracks(&ctx)?)?;
    Ok(local_peak(&images[0].image, [0.0, 15.0, 0.0], 0.5))
}

fn main() -> sarkit::Result<()> {
    let mut base = Scenario {
        measurements: 101,
        ..Scenario::default()
    };
    base.geometry.start = [-0.5, 0.0, 10.0];
    base.grid.x0 = -1.0;
    base.grid.y0 = 14.0;
    base.grid.dx = 0.05;
    base.grid.dy = 0.05;
    base.grid.nx = 41;
    base.grid.ny = 41;
    let reference = peak(&base)?;
    for sfo in [50e3, 100e3, 200e3, 500e3, 2e6] {
        let mut s = base.clone();
        s.errors.sfo_hz = sfo;
        println!(
            "SFO {:7.0} Hz: {:6.1} dB",
            sfo,
            20.0 * (peak(&s)? / reference).log10()
        );
    }
    for cfo in [1e3, 10e3, 30e3, 100e3] {
        let mut s = base.clone();
        s.errors.cfo_hz = cfo;
        println!(
            "CFO {:7.0} Hz: {:6.1} dB",
            cfo,
            20.0 * (peak(&s)? / reference).log10()
        );
    }
    Ok(())
}
