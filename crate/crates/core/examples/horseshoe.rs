//! Builds a global map around a transverse crossing and reads off a
//! two-symbol horseshoe.

use homoclinic::gallery;
use homoclinic::horseshoe::{build_global_test_map, build_horseshoe_witness, prefix_closed};
use homoclinic::transversality::CrossingSetup;

fn main() {
    let sc = gallery::load("g1_cubic_2d").unwrap().unwrap();
    let setup = CrossingSetup::new(sc.map.unwrap(), sc.lambda.unwrap(), sc.gamma.unwrap()).unwrap();
    let gmap = build_global_test_map(&setup, 40).expect("transverse crossing");
    let crossing = gmap.crossing();
    println!("crossing at k = {}: {:?}", crossing.k, crossing.point);

    let depth = 5;
    let w = build_horseshoe_witness(&gmap, crossing, depth).unwrap();
    println!("return times m = {}, k = {}", w.m, w.k);
    for (i, b) in w.boxes.iter().enumerate() {
        println!("V{i}: centre {:?}, width {:.3e}, height {:.3e}", b.centre, b.half_width, b.half_height);
    }
    for d in 1..=depth {
        println!("depth {d}: {}/{} words realized", w.realized_count(d), 1usize << d);
    }
    println!("prefix closed: {}", prefix_closed(&w));
}
