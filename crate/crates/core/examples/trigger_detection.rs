//! Finds order-10 PN preambles buried in noise at 0 dB chip SNR.

use rand_distr::{Distribution, Normal};
use sarkit::rng::stream_rng;
use sarkit::trigger::{generate_pn, Detector};
use sarkit::Complex64;

fn main() -> sarkit::Result<()> {
    let pn = generate_pn(10, 1)?;
    let starts = [1_000usize, 30_000, 75_123];
    let mut stream = vec![Complex64::new(0.0, 0.0); 100_000];
    for &s in &starts {
        for (k, c) in pn.chips.iter().enumerate() {
            stream[s + k] += c;
        }
    }
    let noise = Normal::new(0.0, std::f64::consts::FRAC_1_SQRT_2).expect("sigma");
    let mut rng = stream_rng(7, &[]);
    for v in &mut stream {
        *v += Complex64::new(noise.sample(&mut rng), noise.sample(&mut rng));
    }

    let mut det = Detector::new(&pn, 0.6)?;
    let mut events = Vec::new();
    for block in stream.chunks(4096) {
        events.extend(det.push(block));
    }
    events.extend(det.finish());
    println!("inserted at {starts:?}");
    for e in &events {
        println!("event at {:6}  score {:.3}", e.index, e.score);
    }
    Ok(())
}
