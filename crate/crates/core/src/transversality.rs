//! Intersections of `f^k Λ` with `Γ`, the transversality determinant at each
//! crossing, its lower bound, and the threshold `k*` past which every
//! crossing is transverse.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::manifold::{classify_sidedness, GraphPortion, Sidedness, TangentCurve};
use crate::normal_form::NormalFormMap;

/// Accepted fixed-point residual.
pub const RESIDUAL_TOL: f64 = 1e-12;
pub const MAX_FIXED_POINT_STEPS: usize = 100;
/// `|D|` relative to the product of the row norms below which a crossing
/// counts as tangential. Kept a few orders above rounding: near the
/// tangency the crossing angle itself shrinks like `τ^(l-1)`.
pub const TRANSVERSE_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TransversalityError {
    #[error("tangency of order l = {l} is one-sided; only two-sided crossings (odd l) are handled")]
    Sidedness { l: u32 },
    #[error("no root at k = {k}: {reason}")]
    NoRoot { k: u32, reason: String },
    #[error("fixed-point iteration at k = {k} stalled at residual {residual:e}")]
    NonConvergent { k: u32, residual: f64 },
    #[error("no k up to {k_max} satisfies the bound with epsilon = {epsilon} (threshold {threshold})")]
    NoGuarantee {
        epsilon: f64,
        threshold: f64,
        k_max: u32,
    },
    #[error("inconsistent crossing setup: {0}")]
    Setup(String),
}

/// Linear map plus the two manifold pieces whose crossings are studied.
#[derive(Debug, Clone)]
pub struct CrossingSetup {
    map: NormalFormMap,
    graph: GraphPortion,
    curve: TangentCurve,
}

impl CrossingSetup {
    pub fn new(
        map: NormalFormMap,
        graph: GraphPortion,
        curve: TangentCurve,
    ) -> Result<Self, TransversalityError> {
        if map.is_perturbed() {
            return Err(TransversalityError::Setup(
                "the map must be linear in the chosen coordinates".into(),
            ));
        }
        if map.m() != 1 {
            return Err(TransversalityError::Setup(format!(
                "one stable coordinate expected, got {}",
                map.m()
            )));
        }
        if graph.p() != map.p() || curve.a_point().len() != map.p() {
            return Err(TransversalityError::Setup(format!(
                "dimension mismatch: map p = {}, graph p = {}, curve p = {}",
                map.p(),
                graph.p(),
                curve.a_point().len()
            )));
        }
        Ok(Self { map, graph, curve })
    }

    pub fn map(&self) -> &NormalFormMap {
        &self.map
    }
    pub fn graph(&self) -> &GraphPortion {
        &self.graph
    }
    pub fn curve(&self) -> &TangentCurve {
        &self.curve
    }
    pub fn n(&self) -> usize {
        self.map.n()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntersectionPoint {
    pub k: u32,
    pub t: Vec<f64>,
    pub tau: f64,
    pub point: Vec<f64>,
    pub residual: f64,
    pub branch: i8,
}

/// Real `l`-th root keeping the sign (odd `l`).
fn odd_root(x: f64, l: u32) -> f64 {
    if l == 3 {
        x.cbrt()
    } else {
        x.signum() * x.abs().powf(1.0 / l as f64)
    }
}

fn residual(s: &CrossingSetup, k: u32, t: &[f64], tau: f64) -> f64 {
    let ak = s.map.expansion_power(k);
    let ck = s.map.alpha().powi(k as i32);
    let u = s.curve.u_at(tau);
    let mut r: f64 = 0.0;
    for i in 0..t.len() {
        let row: f64 = (0..t.len()).map(|j| ak[(i, j)] * t[j]).sum();
        r = r.max((row - u[i]).abs());
    }
    r.max((tau.powi(s.curve.l() as i32) - ck * s.graph.height(t)).abs())
}

fn solve_branch(
    s: &CrossingSetup,
    k: u32,
    seed: f64,
) -> Result<IntersectionPoint, TransversalityError> {
    let l = s.curve.l();
    let ck = s.map.alpha().powi(k as i32);
    let tau_max = s.curve.tau_max();
    let mut tau = seed;
    let mut damping = 1.0;
    let mut last = f64::INFINITY;
    let mut t = vec![0.0; s.map.p()];
    for _ in 0..MAX_FIXED_POINT_STEPS {
        if tau.abs() > tau_max {
            return Err(TransversalityError::NoRoot {
                k,
                reason: format!("tau = {tau} outside [-{tau_max}, {tau_max}]"),
            });
        }
        let t_new = s.map.solve_expansion_power(k, &s.curve.u_at(tau));
        t = if damping < 1.0 {
            t.iter()
                .zip(&t_new)
                .map(|(a, b)| a + damping * (b - a))
                .collect()
        } else {
            t_new
        };
        if !s.graph.contains(&t) {
            return Err(TransversalityError::NoRoot {
                k,
                reason: format!("t = {t:?} outside the graph domain"),
            });
        }
        let tau_new = odd_root(ck * s.graph.height(&t), l);
        tau += damping * (tau_new - tau);
        let res = residual(s, k, &t, tau);
        if res < RESIDUAL_TOL {
            if tau == 0.0 {
                return Err(TransversalityError::NoRoot {
                    k,
                    reason: "only the tangency point itself".into(),
                });
            }
            let mut point = s.curve.u_at(tau);
            point.push(tau.powi(l as i32));
            return Ok(IntersectionPoint {
                k,
                t,
                tau,
                point,
                residual: res,
                branch: if tau > 0.0 { 1 } else { -1 },
            });
        }
        if res > last {
            damping *= 0.5;
        }
        last = res;
    }
    Err(TransversalityError::NonConvergent { k, residual: last })
}

/// Crossings of `f^k Λ` with `Γ`, both signs of `τ` seeded and duplicates
/// merged. Sorted by `τ`.
pub fn find_intersections(
    s: &CrossingSetup,
    k: u32,
) -> Result<Vec<IntersectionPoint>, TransversalityError> {
    if classify_sidedness(&s.curve) == Sidedness::OneSided {
        return Err(TransversalityError::Sidedness { l: s.curve.l() });
    }
    let ck = s.map.alpha().powi(k as i32);
    let mag = odd_root(ck * s.graph.b(), s.curve.l()).abs();
    let mut found: Vec<IntersectionPoint> = Vec::new();
    let mut first_err = None;
    for seed in [mag, -mag] {
        match solve_branch(s, k, seed) {
            Ok(ip) => {
                let dup = found
                    .iter()
                    .any(|f| (f.tau - ip.tau).abs() <= 1e-9 * ip.tau.abs().max(1e-300));
                if !dup {
                    found.push(ip);
                }
            }
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    if found.is_empty() {
        return Err(first_err.expect("at least one seed ran"));
    }
    found.sort_by(|a, b| a.tau.total_cmp(&b.tau));
    Ok(found)
}

/// Rows: tangent vectors of `f^k Λ` (`(A^k)ᵀ` with the column `α^k ∇φ`),
/// then the tangent of `Γ`.
pub fn tangent_matrix(s: &CrossingSetup, ip: &IntersectionPoint) -> DMatrix<f64> {
    let n = s.n();
    let p = n - 1;
    let ak = s.map.expansion_power(ip.k);
    let ck = s.map.alpha().powi(ip.k as i32);
    let grad = s.graph.phi().gradient(&ip.t);
    let ap = s.curve.a_prime(ip.tau);
    let l = s.curve.l();
    DMatrix::from_fn(n, n, |i, j| match (i < p, j < p) {
        (true, true) => ak[(j, i)],
        (true, false) => ck * grad[i],
        (false, true) => ap[j],
        (false, false) => l as f64 * ip.tau.powi(l as i32 - 1),
    })
}

pub fn transversality_determinant(s: &CrossingSetup, ip: &IntersectionPoint) -> f64 {
    tangent_matrix(s, ip).determinant()
}

/// `max_j |α^k ∂φ/∂t_j(t)|` at the crossing.
pub fn gradient_sup(s: &CrossingSetup, ip: &IntersectionPoint) -> f64 {
    let ck = s.map.alpha().powi(ip.k as i32);
    s.graph
        .phi()
        .gradient(&ip.t)
        .iter()
        .fold(0.0, |m, g| m.max((ck * g).abs()))
}

/// Largest off-diagonal entry of `A^k`; zero in the diagonal case.
fn off_diagonal_sup(map: &NormalFormMap, k: u32) -> f64 {
    let ak = map.expansion_power(k);
    let mut m: f64 = 0.0;
    for i in 0..ak.nrows() {
        for j in 0..ak.ncols() {
            if i != j {
                m = m.max(ak[(i, j)].abs());
            }
        }
    }
    m
}

/// The bracketed factor of [`paper_lower_bound`]; positive means the bound
/// guarantees a transverse crossing at `k`.
pub fn bound_bracket(s: &CrossingSetup, k: u32, epsilon: f64) -> f64 {
    let l = s.curve.l() as f64;
    let b = s.graph.b().abs();
    let alpha = s.map.alpha();
    let n1 = (s.n() - 1) as f64;
    let decay = alpha.powf(k as f64 / l) * epsilon * n1 * s.map.beta_min().powi(-(k as i32));
    let mut bracket = l * (b / 2.0).powf((l - 1.0) / l) - decay * s.curve.r();
    if s.map.is_jordan() {
        bracket -= decay * off_diagonal_sup(&s.map, k);
    }
    bracket
}

pub fn paper_lower_bound(s: &CrossingSetup, k: u32, epsilon: f64) -> f64 {
    let l = s.curve.l() as f64;
    let alpha = s.map.alpha();
    let prod: f64 = s.map.betas().iter().map(|b| b.powi(k as i32)).product();
    prod * alpha.powf(k as f64 * (l - 1.0) / l) * bound_bracket(s, k, epsilon)
}

/// `l (B/2)^((l-1)/l) / (r (n-1))`.
pub fn epsilon_threshold(s: &CrossingSetup) -> f64 {
    let l = s.curve.l() as f64;
    let b = s.graph.b().abs();
    l * (b / 2.0).powf((l - 1.0) / l) / (s.curve.r() * (s.n() - 1) as f64)
}

/// Whether `k` satisfies both the bracket and the gradient condition. With
/// no crossing at `k` the gradient condition holds vacuously.
fn k_admissible(s: &CrossingSetup, k: u32, epsilon: f64) -> bool {
    if bound_bracket(s, k, epsilon) <= 0.0 {
        return false;
    }
    match find_intersections(s, k) {
        Ok(ips) => ips.iter().all(|ip| gradient_sup(s, ip) <= epsilon),
        Err(_) => true,
    }
}

/// Smallest `k` from which every `k' <= k_max` is admissible.
pub fn estimate_k_star(s: &CrossingSetup, epsilon: f64, k_max: u32) -> Result<u32, TransversalityError> {
    let mut k_star = None;
    for k in (0..=k_max).rev() {
        if k_admissible(s, k, epsilon) {
            k_star = Some(k);
        } else {
            break;
        }
    }
    k_star.ok_or(TransversalityError::NoGuarantee {
        epsilon,
        threshold: epsilon_threshold(s),
        k_max,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransversalityRow {
    pub k: u32,
    pub branch: i8,
    pub t: Vec<f64>,
    pub tau: f64,
    pub point: Vec<f64>,
    pub residual: f64,
    #[serde(rename = "D")]
    pub d: f64,
    pub sign: i8,
    pub lower_bound: f64,
    pub gradient_sup: f64,
    pub transverse: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanFailure {
    pub k: u32,
    pub error: String,
}

/// Distance of the crossings from the tangency point `(A, 0)` as `k` grows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Accumulation {
    /// `(k, max distance to (A, 0) over the crossings at k)`.
    pub distances: Vec<(u32, f64)>,
    /// Log-slope of `max |t|` against `k`; needs two scanned `k`.
    pub t_rate: Option<f64>,
    /// Log-slope of `max |τ|` against `k`.
    pub tau_rate: Option<f64>,
    pub accumulates: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransversalityReport {
    pub rows: Vec<TransversalityRow>,
    pub failures: Vec<ScanFailure>,
    pub k_star: Option<u32>,
    pub epsilon_used: f64,
    pub epsilon_threshold: f64,
    /// `|D| > lower_bound` on every row past `k*` with small gradient.
    pub lower_bound_sound: bool,
    pub all_transverse: bool,
    pub accumulation: Accumulation,
}

fn row_for(s: &CrossingSetup, ip: &IntersectionPoint, epsilon: f64) -> TransversalityRow {
    let m = tangent_matrix(s, ip);
    let d = m.determinant();
    let hadamard: f64 = m.row_iter().map(|r| r.norm()).product();
    TransversalityRow {
        k: ip.k,
        branch: ip.branch,
        t: ip.t.clone(),
        tau: ip.tau,
        point: ip.point.clone(),
        residual: ip.residual,
        d,
        sign: if d > 0.0 {
            1
        } else if d < 0.0 {
            -1
        } else {
            0
        },
        lower_bound: paper_lower_bound(s, ip.k, epsilon),
        gradient_sup: gradient_sup(s, ip),
        transverse: d.is_finite() && d.abs() > TRANSVERSE_TOL * hadamard,
    }
}

fn log_slope(pts: &[(f64, f64)]) -> Option<f64> {
    let pts: Vec<_> = pts.iter().filter(|(_, y)| *y > 0.0).collect();
    if pts.len() < 2 {
        return None;
    }
    let xs: Vec<f64> = pts.iter().map(|(x, _)| *x).collect();
    let ys: Vec<f64> = pts.iter().map(|(_, y)| y.ln()).collect();
    Some(crate::lambda::ls_slope(&xs, &ys))
}

fn accumulation(s: &CrossingSetup, rows: &[TransversalityRow]) -> Accumulation {
    let anchor = s.curve.anchor();
    let mut distances: Vec<(u32, f64)> = Vec::new();
    let mut t_pts = Vec::new();
    let mut tau_pts = Vec::new();
    for r in rows {
        let d = r
            .point
            .iter()
            .zip(&anchor)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let tn = r.t.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        match distances.last_mut() {
            Some((k, dist)) if *k == r.k => {
                *dist = dist.max(d);
                let (_, tm) = t_pts.last_mut().unwrap();
                *tm = f64::max(*tm, tn);
                let (_, um) = tau_pts.last_mut().unwrap();
                *um = f64::max(*um, r.tau.abs());
            }
            _ => {
                distances.push((r.k, d));
                t_pts.push((r.k as f64, tn));
                tau_pts.push((r.k as f64, r.tau.abs()));
            }
        }
    }
    let half = distances.len() / 2;
    let accumulates = distances.len() >= 2
        && distances[half..].windows(2).all(|w| w[1].1 <= w[0].1)
        && distances.last().unwrap().1 < distances[0].1;
    Accumulation {
        t_rate: log_slope(&t_pts),
        tau_rate: log_slope(&tau_pts),
        distances,
        accumulates,
    }
}

pub fn scan_k(
    s: &CrossingSetup,
    k_min: u32,
    k_max: u32,
    epsilon: f64,
) -> Result<TransversalityReport, TransversalityError> {
    if classify_sidedness(&s.curve) == Sidedness::OneSided {
        return Err(TransversalityError::Sidedness { l: s.curve.l() });
    }
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for k in k_min..=k_max {
        match find_intersections(s, k) {
            Ok(ips) => rows.extend(ips.iter().map(|ip| row_for(s, ip, epsilon))),
            Err(e) => failures.push(ScanFailure {
                k,
                error: e.to_string(),
            }),
        }
    }
    let k_star = estimate_k_star(s, epsilon, k_max).ok();
    let lower_bound_sound = rows
        .iter()
        .filter(|r| k_star.is_some_and(|ks| r.k > ks) && r.gradient_sup <= epsilon)
        .all(|r| r.transverse && r.d.abs() > r.lower_bound);
    let all_transverse = !rows.is_empty() && rows.iter().all(|r| r.transverse);
    let accumulation = accumulation(s, &rows);
    Ok(TransversalityReport {
        rows,
        failures,
        k_star,
        epsilon_used: epsilon,
        epsilon_threshold: epsilon_threshold(s),
        lower_bound_sound,
        all_transverse,
        accumulation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::func::{Field, Polynomial};
    use crate::normal_form::{validate_map, MapSpec};

    fn setup(l: u32, a: &[f64], phi: &[f64]) -> CrossingSetup {
        let map = validate_map(&MapSpec::diagonal(&[2.0], 0.5)).unwrap();
        let graph = GraphPortion::new(
            1.0,
            Field::Poly(Polynomial::univariate(phi)),
            vec![(-1.5, 1.5)],
            None,
        )
        .unwrap();
        let curve = TangentCurve::new(
            l,
            vec![1.0],
            vec![Field::Poly(Polynomial::univariate(a))],
            1.0,
            1.0,
        )
        .unwrap();
        CrossingSetup::new(map, graph, curve).unwrap()
    }

    #[test]
    fn closed_form_crossings() {
        let s = setup(3, &[0.0], &[0.0]);
        let ips = find_intersections(&s, 3).unwrap();
        assert_eq!(ips.len(), 1);
        let ip = &ips[0];
        assert_eq!(ip.t, vec![0.125]);
        assert_eq!(ip.tau, 0.5);
        assert_eq!(ip.point, vec![1.0, 0.125]);
        assert!(ip.residual < 1e-12);
        assert!((transversality_determinant(&s, ip) - 6.0).abs() < 1e-12);

        let ip = &find_intersections(&s, 6).unwrap()[0];
        assert_eq!(ip.t, vec![2f64.powi(-6)]);
        assert_eq!(ip.tau, 0.25);
        assert!((transversality_determinant(&s, ip) - 12.0).abs() < 1e-12);
    }

    #[test]
    fn nonlinear_variant_converges() {
        let s = setup(3, &[0.0, 0.1], &[0.0, 0.0, 1.0]);
        let ip = &find_intersections(&s, 5).unwrap()[0];
        assert!(ip.residual < 1e-12);
        let u = s.curve().u_at(ip.tau);
        assert!((32.0 * ip.t[0] - u[0]).abs() < 1e-12);
        assert!((ip.tau.powi(3) - 0.5f64.powi(5) * (ip.t[0].powi(2) + 1.0)).abs() < 1e-12);
    }

    #[test]
    fn bounds() {
        let s = setup(3, &[0.0], &[0.0]);
        let want = 6.0 * 0.5f64.powf(2.0 / 3.0);
        assert!((paper_lower_bound(&s, 3, 0.0) - want).abs() < 1e-12);
        let thr = 3.0 * 0.5f64.powf(2.0 / 3.0);
        assert!((epsilon_threshold(&s) - thr).abs() < 1e-12);
        assert!((paper_lower_bound(&s, 0, 0.0) - thr).abs() < 1e-12);
    }

    #[test]
    fn k_star_values() {
        let s = setup(3, &[0.0], &[0.0]);
        assert_eq!(estimate_k_star(&s, 0.0, 40).unwrap(), 0);
        assert_eq!(estimate_k_star(&s, 10.0, 40).unwrap(), 2);
    }

    #[test]
    fn one_sided_rejected() {
        let s = setup(2, &[0.0], &[0.0]);
        assert_eq!(
            find_intersections(&s, 3),
            Err(TransversalityError::Sidedness { l: 2 })
        );
        assert!(matches!(
            scan_k(&s, 1, 40, 0.0),
            Err(TransversalityError::Sidedness { l: 2 })
        ));
    }

    #[test]
    fn scan_closed_form() {
        let s = setup(3, &[0.0], &[0.0]);
        let rep = scan_k(&s, 1, 40, 0.0).unwrap();
        assert_eq!(rep.rows.len(), 40);
        assert!(rep.all_transverse && rep.lower_bound_sound);
        assert!(rep.accumulation.accumulates);
        assert!((rep.accumulation.t_rate.unwrap() + 2f64.ln()).abs() < 1e-9);
        assert!((rep.accumulation.tau_rate.unwrap() - 0.5f64.ln() / 3.0).abs() < 1e-9);
    }
}
