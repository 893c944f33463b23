//! Forms the five-target SAR image of the reduced reference scene and
//! writes it as `five_target_sar.pgm`.
//!
//! ```text
//! cargo run --release --example five_target_sar [OUT_DIR]
//! ```

use std::path::PathBuf;

use sarkit::io::image_to_pgm;
use sarkit::pipeline::{
    compute_metrics, form_images, profiles_in_memory, reported_tracks, Context,
};
use sarkit::scenario::{Mode, Scenario};

fn main() -> sarkit::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| ".".into()));
    let path =
        PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/table1_reduced.toml");
    let ctx = Context::new(Scenario::load(&path)?, Mode::Bistatic)?;
    let sets = profiles_in_memory(&ctx)?;
    let tracks = reported_tracks(&ctx)?;
    let images = form_images(&ctx, &sets, &tracks)?;
    let report = compute_metrics(&ctx, &sets, &images, &tracks)?;

    std::fs::create_dir_all(&out)?;
    let file = out.join("five_target_sar.pgm");
    std::fs::write(&file, image_to_pgm(&images[0].image))?;
    println!("wrote {}", file.display());
    for t in report.images[0].targets.iter().flatten() {
        let th = t.theory.expect("theory");
        println!(
            "({:5.2}, {:5.2}): error {:.3} m, cross range {:.3} m (theory {:.3}), ground range {:.3} m (theory {:.3})",
            t.position[0],
            t.position[1],
            t.position_error.unwrap_or(f64::NAN),
            t.cross_range_3db.unwrap_or(f64::NAN),
            th.cross_range,
            t.ground_range_3db.unwrap_or(f64::NAN),
            th.ground_range
        );
    }
    Ok(())
}
