//! Crossings of an iterated unstable graph with a cubically tangent stable
//! curve, and the determinant that certifies each is transverse.

use homoclinic::func::Field;
use homoclinic::manifold::{GraphPortion, TangentCurve};
use homoclinic::normal_form::{validate_map, MapSpec};
use homoclinic::transversality::{paper_lower_bound, scan_k, CrossingSetup};

fn main() {
    let map = validate_map(&MapSpec::diagonal(&[2.0], 0.5)).unwrap();
    let graph = GraphPortion::new(1.0, Field::zero(1), vec![(-1.5, 1.5)], None).unwrap();
    let curve = TangentCurve::new(3, vec![1.0], vec![Field::zero(1)], 1.0, 1.0).unwrap();
    let setup = CrossingSetup::new(map, graph, curve).unwrap();

    let report = scan_k(&setup, 1, 20, 0.0).unwrap();
    println!("{:>3} {:>12} {:>12} {:>14} {:>14}", "k", "t", "tau", "D", "bound");
    for row in &report.rows {
        println!(
            "{:>3} {:>12.4e} {:>12.4e} {:>14.6e} {:>14.6e}",
            row.k, row.t[0], row.tau, row.d, row.lower_bound
        );
    }
    println!("k* = {:?}", report.k_star);
    println!("bound at k = 40: {:.6e}", paper_lower_bound(&setup, 40, 0.0));
}
