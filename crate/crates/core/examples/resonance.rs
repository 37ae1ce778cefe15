//! Searches two spectra for multiplicative resonances `a * b = c`.

use homoclinic::resonance::{find_resonances, normal_form_eligible};
use homoclinic::normal_form::SpectrumPair;

fn show(a: &[f64], b: &[f64]) {
    let pair = SpectrumPair::new(a.to_vec(), b.to_vec(), 1e-9).expect("hyperbolic spectra");
    let report = find_resonances(&pair);
    println!("expanding {a:?}, contracting {b:?}");
    for w in &report.mixed {
        println!("  {} * {} = {} ({:?})", w.a, w.b, w.target, w.location);
    }
    let verdict = normal_form_eligible(&pair);
    println!("  eligible: {} ({} near misses)", verdict.eligible, report.warnings.len());
}

fn main() {
    show(&[2.0, 3.0], &[0.4]);
    show(&[4.0], &[0.5, 0.125]);
    show(&[2.0], &[0.5]);
}
