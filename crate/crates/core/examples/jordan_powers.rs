//! Closed-form powers of an expanding block with a Jordan chain, checked
//! against repeated squaring.

use homoclinic::normal_form::{validate_map, MapSpec};

fn main() {
    let map = validate_map(&MapSpec {
        sigmas: vec![1],
        ..MapSpec::diagonal(&[2.0, 2.0], 0.5)
    })
    .unwrap();
    for k in [1, 5, 20] {
        let closed = map.expansion_power(k);
        let squared = map.expansion_power_by_squaring(k);
        println!("k = {k}:\n{closed}  max diff vs squaring: {:.2e}", (&closed - &squared).abs().max());
    }
    let z = map.apply(&[0.1, 0.05, 0.8]).unwrap();
    println!("one step of (0.1, 0.05, 0.8) -> {z:?}");
}
