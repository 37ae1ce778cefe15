//! Iterates a graph transverse to the stable direction and watches it
//! flatten onto the unstable one.

use homoclinic::func::{Field, Polynomial};
use homoclinic::lambda::{
    iterate_graph_portion, verify_singular_lambda_lemma, IterationMode, LambdaConfig,
};
use homoclinic::manifold::GraphPortion;
use homoclinic::normal_form::{validate_map, MapSpec};

fn main() {
    let map = validate_map(&MapSpec::diagonal(&[2.0], 0.5)).unwrap();
    let graph = GraphPortion::new(
        1.0,
        Field::Poly(Polynomial::univariate(&[0.0, 0.4, -0.3])),
        vec![(-1.0, 1.0)],
        None,
    )
    .unwrap();

    for k in [0, 2, 4, 8] {
        let g = iterate_graph_portion(&map, &graph, k, IterationMode::Linear).unwrap();
        let p = g.eval_at_parameter(&[0.01]).unwrap();
        println!("k = {k}: t = 0.01 lands at u = {:.4}, v = {:.3e}", p.u[0], p.v);
    }

    let v = verify_singular_lambda_lemma(&map, &graph, &LambdaConfig::new(0.01, 1e-3, 40)).unwrap();
    println!(
        "d_C1 < 1e-3 from n = {}, fitted rate {:.4} (bound {:.4})",
        v.n_min, v.fitted_rate, v.rate_bound
    );
    for s in v.decay_samples.iter().step_by(8) {
        println!("  n = {:2}  d_C0 = {:.3e}  d_C1 = {:.3e}", s.n, s.d_c0, s.d_c1);
    }
}
