//! Order of contact between planar curves and the x-axis, before and after a
//! polynomial change of coordinates.

use homoclinic::contact::{
    estimate_contact_order, verify_diffeo_invariance, Anchored, ContactConfig, GraphCurve, Window,
};
use homoclinic::func::{Field, PolyMap, Polynomial, Term};

fn term(coeff: f64, powers: &[u32]) -> Term {
    Term { coeff, powers: powers.to_vec() }
}

fn main() {
    let axis = GraphCurve::axis(2, (-1.0, 1.0));
    let cfg = ContactConfig::default();

    for (label, coeffs) in [
        ("x^2", vec![0.0, 0.0, 1.0]),
        ("x^3 - x^4", vec![0.0, 0.0, 0.0, 1.0, -1.0]),
        ("2 x^5", vec![0.0, 0.0, 0.0, 0.0, 0.0, 2.0]),
    ] {
        let g = GraphCurve::planar(Field::Poly(Polynomial::univariate(&coeffs)), (-1.0, 1.0));
        let window = if coeffs.len() > 5 { Window { h_min: 1e-2, h_max: 1e-1 } } else { Window::default() };
        match estimate_contact_order(&g, 0.0, &axis, &[0.0, 0.0], window, &cfg) {
            Ok(e) => println!(
                "{label:>10}: l = {} (raw {:.4}), ratio in [{:.4}, {:.4}]",
                e.l_hat, e.l_raw, e.m_hat, e.big_m_hat
            ),
            Err(e) => println!("{label:>10}: {e}"),
        }
    }

    // (x, y) -> (x + y, y + x^2)
    let shear = PolyMap::new(vec![
        Polynomial::new(2, vec![term(1.0, &[1, 0]), term(1.0, &[0, 1])]).unwrap(),
        Polynomial::new(2, vec![term(1.0, &[0, 1]), term(1.0, &[2, 0])]).unwrap(),
    ])
    .unwrap();
    let cubic = GraphCurve::planar(Field::Poly(Polynomial::univariate(&[0.0, 0.0, 0.0, 1.0])), (-1.0, 1.0));
    let r = verify_diffeo_invariance(
        Anchored { curve: &cubic, s0: 0.0 },
        Anchored { curve: &axis, s0: 0.0 },
        &[0.0, 0.0],
        &shear,
        Window::default(),
        &cfg,
    )
    .expect("shear keeps the contact isolated");
    println!("cubic under shear: {:.4} -> {:.4}", r.l_before, r.l_after);
}
