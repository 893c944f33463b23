//! A bistatic receiver with random carrier phase errors and timing offsets,
//! processed with and without sidelink correction.

use sarkit::metrics::coherence_report;
use sarkit::pipeline::{profiles_in_memory, Context};
use sarkit::scenario::{Mode, Scenario};

fn main() -> sarkit::Result<()> {
    let mut s = Scenario {
        measurements: 201,
        ..Scenario::default()
    };
    s.geometry.start = [0.0, 0.0, 10.0];
    s.geometry.velocity = [0.0; 3];
    s.errors.cpe_max = std::f64::consts::PI;
    s.errors.to_max = 10e-9;
    s.grid.nx = 3;
    s.grid.ny = 3;
    let ctx = Context::new(s, Mode::Both)?;
    for set in profiles_in_memory(&ctx)? {
        let r = coherence_report(&set.profiles)?;
        println!(
            "{:14} gamma_cf {:.4} at cell {}",
            set.product.tag(),
            r.gamma_cf,
            r.cell
        );
    }
    println!("1 / M = {:.4}", 1.0 / ctx.measurements() as f64);
    Ok(())
}
