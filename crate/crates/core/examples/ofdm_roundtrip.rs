//! Generates one OFDM radar segment, demodulates it and divides out the
//! code symbols.

use sarkit::rangeproc::{demodulate, spectral_divide, strip_cyclic_prefix};
use sarkit::waveform::{generate_code, generate_symbol, OfdmParams};

fn main() -> sarkit::Result<()> {
    let p = OfdmParams::table1();
    let code = generate_code(&p, 1);
    let segment = generate_symbol(&p, &code)?;
    println!(
        "{} subcarriers, {} prefix + {} body samples at {:.3} GS/s",
        p.subcarriers,
        p.cp_len(),
        p.body_len(),
        p.sample_rate / 1e9
    );

    let body = strip_cyclic_prefix(&segment, &p)?;
    let d = demodulate(&body, &p)?;
    let code_err = d
        .values
        .iter()
        .zip(&code.d)
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max);
    let divided = spectral_divide(&d, &code)?;
    let unit_err = divided
        .values
        .iter()
        .map(|v| (v - 1.0).norm())
        .fold(0.0, f64::max);
    println!("max |D - d|          {code_err:.2e}");
    println!("max |D / d - 1|      {unit_err:.2e}");
    Ok(())
}
