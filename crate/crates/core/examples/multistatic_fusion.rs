//! Monostatic and bistatic images over the two halves of the aperture,
//! fused coherently and by magnitude.

use sarkit::imaging::{
    backproject, combine_absolute, combine_coherent, image_cut, CutAxis, SarImage,
};
use sarkit::metrics::resolution_3db;
use sarkit::pipeline::{profiles_in_memory, reported_tracks, Context};
use sarkit::scenario::{Mode, ReceiverConfig, ReceiverKind, Scenario, TargetConfig};

fn width(image: &SarImage) -> sarkit::Result<f64> {
    let (_, iu, iv) = image.peak();
    resolution_3db(&image_cut(
        image,
        CutAxis::CrossRange,
        image.grid.pixel(iu, iv),
    )?)
}

fn main() -> sarkit::Result<()> {
    let mut s = Scenario {
        measurements: 301,
        ..Scenario::default()
    };
    s.geometry.start = [-1.5, 0.0, 10.0];
    s.geometry.receivers = vec![
        ReceiverConfig {
            kind: ReceiverKind::Mono,
            offset: [0.0; 3],
        },
        ReceiverConfig {
            kind: ReceiverKind::Bistatic,
            offset: [2.0, 0.0, 0.0],
        },
    ];
    s.geometry.targets = vec![TargetConfig {
        position: [0.5, 15.0, 0.0],
        reflectivity: [1.0, 0.0],
    }];
    s.grid.x0 = -3.0;
    s.grid.y0 = 14.5;
    s.grid.dx = 0.02;
    s.grid.dy = 0.05;
    s.grid.nx = 351;
    s.grid.ny = 21;

    let ctx = Context::new(s, Mode::Both)?;
    let sets = profiles_in_memory(&ctx)?;
    let tracks = reported_tracks(&ctx)?;
    let half = ctx.measurements() / 2;
    let mono = sets
        .iter()
        .find(|s| s.product.tag() == "rx0_mono")
        .expect("mono");
    let bi = sets
        .iter()
        .find(|s| s.product.tag() == "rx1_sidelink")
        .expect("bistatic");
    let a = backproject(
        &mono.profiles[..half],
        &tracks.tx,
        &tracks.rx[0],
        &ctx.grid,
        &ctx.params,
        mono.product.provenance(),
    )?;
    let b = backproject(
        &bi.profiles[half..],
        &tracks.tx,
        &tracks.rx[1],
        &ctx.grid,
        &ctx.params,
        bi.product.provenance(),
    )?;
    let coherent = combine_coherent(&[a.clone(), b.clone()])?;
    let absolute = combine_absolute(&[a.clone(), b.clone()])?;
    for (name, im) in [
        ("monostatic", &a),
        ("bistatic", &b),
        ("coherent", &coherent),
        ("absolute", &absolute),
    ] {
        println!("{name:10} cross-range 3 dB width {:.3} m", width(im)?);
    }
    Ok(())
}
