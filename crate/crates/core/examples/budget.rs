//! Prints the timing, data-rate and synchronization budgets of the
//! reference scene.

use sarkit::pipeline::{budget, Context};
use sarkit::scenario::{Mode, Scenario};

fn main() -> sarkit::Result<()> {
    let ctx = Context::new(Scenario::default(), Mode::Both)?;
    let b = budget(&ctx)?;
    println!("bandwidth           {:.1} MHz", b.bandwidth_hz / 1e6);
    println!("range cell          {:.3} m", b.range_cell_m);
    println!("duty cycle          {:.5} %", b.duty_cycle_percent);
    println!(
        "mean data rate      {:.1} Mbit/s ({} streams)",
        b.data_rate_bps / 1e6,
        b.streams
    );
    println!("max SFO             {:.0} Hz", b.sfo_limit_hz);
    println!("max CFO             {:.0} Hz", b.cfo_limit_hz);
    println!("sync offset budget  {:.2} ps", b.timing.sync * 1e12);
    println!("PRI alignment       {:.1} ms", b.timing.pri * 1e3);
    println!("localization timing {:.1} ms", b.timing.loc * 1e3);
    for t in &b.targets {
        println!(
            "target ({:5.1}, {:5.1}): ground range {:.3} m, cross range {:.3} m",
            t.position[0], t.position[1], t.ground_range, t.cross_range
        );
    }
    Ok(())
}
