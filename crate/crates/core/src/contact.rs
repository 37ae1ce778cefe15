//! Order of contact between a curve and a curve or hypersurface at an
//! isolated intersection point, using the distance-ratio definition:
//! `l` is an order of contact when `m <= d(x, γ₂) / |x - A|^l <= M` for all
//! `x ∈ γ₁` near `A`.
//!
//! The estimator fits the slope of `log d` against `log |x - A|` over
//! geometrically spaced samples, snaps to the nearest integer when close, and
//! then measures the ratio band on a dense sample to decide whether the band
//! is bounded. Oscillating configurations, where no exponent keeps the ratio
//! in a band, are reported as [`ContactError::NonConvergent`].

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::func::{Field, PolyMap};

/// A parameterized curve in `R^n`.
pub trait Curve: Sync {
    fn dim(&self) -> usize;
    fn point(&self, s: f64) -> Vec<f64>;
    /// Parameter interval on which the curve is defined.
    fn domain(&self) -> (f64, f64);
}

/// Euclidean distance from a point to a fixed set.
pub trait DistanceOracle: Sync {
    fn distance(&self, x: &[f64]) -> f64;
}

/// Curves usable on either side of the contact relation.
pub trait ContactCurve: Curve + DistanceOracle {}
impl<T: Curve + DistanceOracle> ContactCurve for T {}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub h_min: f64,
    pub h_max: f64,
}

impl Default for Window {
    fn default() -> Self {
        Self {
            h_min: 1e-4,
            h_max: 1e-2,
        }
    }
}

/// Which side of the anchor parameter to sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    #[default]
    Positive,
    Negative,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContactConfig {
    /// Geometric samples used for the slope fit, per side.
    pub samples: usize,
    /// Dense samples used for the ratio band, per side.
    pub band_samples: usize,
    /// Cap on the RMS residual of the log-log fit.
    pub residual_cap: f64,
    /// Largest admissible `M / m`.
    pub band_limit: f64,
    /// Snap the fitted slope to an integer within this distance.
    pub snap_tol: f64,
    pub side: Side,
}

impl Default for ContactConfig {
    fn default() -> Self {
        Self {
            samples: 40,
            band_samples: 800,
            residual_cap: 0.5,
            band_limit: 1e3,
            snap_tol: 0.1,
            side: Side::Positive,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContactOrderEstimate {
    /// Reported order: the snapped integer when the raw slope is within
    /// `snap_tol` of one, the raw slope otherwise.
    pub l_hat: f64,
    pub l_raw: f64,
    pub snapped: bool,
    pub m_hat: f64,
    #[serde(rename = "M_hat")]
    pub big_m_hat: f64,
    pub residual: f64,
    /// `(|x - A|, d(x, γ₂))` pairs used for the fit.
    pub samples: Vec<(f64, f64)>,
    pub converged: bool,
}

impl ContactOrderEstimate {
    pub fn band_ratio(&self) -> f64 {
        self.big_m_hat / self.m_hat
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ContactError {
    #[error("invalid window [{h_min}, {h_max}]")]
    InvalidWindow { h_min: f64, h_max: f64 },
    #[error("curves meet again at distance {at} from the anchor")]
    NotIsolated { at: f64 },
    #[error(
        "no order of contact: slope {:.4}, residual {:.3}, ratio band {:.3e}",
        .0.l_raw, .0.residual, .0.band_ratio()
    )]
    NonConvergent(Box<ContactOrderEstimate>),
    #[error("diffeomorphism is singular at the anchor (|det| = {det:e})")]
    SingularDiffeo { det: f64 },
}

fn geometric(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![lo];
    }
    let r = (hi / lo).ln() / (count - 1) as f64;
    (0..count).map(|i| lo * (r * i as f64).exp()).collect()
}

fn norm_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

fn offsets(window: Window, count: usize, side: Side) -> Vec<f64> {
    let hs = geometric(window.h_min, window.h_max, count);
    match side {
        Side::Positive => hs,
        Side::Negative => hs.into_iter().map(|h| -h).collect(),
        Side::Both => hs.iter().map(|h| -h).chain(hs.iter().copied()).collect(),
    }
}

/// Samples `(|x - A|, d(x, γ₂))` along `γ₁` at parameter offsets from `s0`.
fn sample_pairs(
    gamma1: &dyn Curve,
    s0: f64,
    gamma2: &dyn DistanceOracle,
    anchor: &[f64],
    offs: &[f64],
) -> Result<Vec<(f64, f64)>, ContactError> {
    offs.iter()
        .map(|h| {
            let x = gamma1.point(s0 + h);
            let r = norm_diff(&x, anchor);
            let d = gamma2.distance(&x);
            if !(d > 1e-300) || !(r > 0.0) {
                return Err(ContactError::NotIsolated { at: r });
            }
            Ok((r, d))
        })
        .collect()
}

/// Least-squares slope and RMS residual of `log d` against `log r`.
fn loglog_fit(pairs: &[(f64, f64)]) -> (f64, f64) {
    let n = pairs.len() as f64;
    let xs: Vec<f64> = pairs.iter().map(|(r, _)| r.ln()).collect();
    let ys: Vec<f64> = pairs.iter().map(|(_, d)| d.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let slope = sxy / sxx;
    let rss: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| {
            let e = y - (my + slope * (x - mx));
            e * e
        })
        .sum();
    (slope, (rss / n).sqrt())
}

/// Estimates the order of contact of `gamma1` (anchored at parameter `s0`,
/// where it passes through `anchor`) with the set measured by `gamma2`.
pub fn estimate_contact_order(
    gamma1: &dyn Curve,
    s0: f64,
    gamma2: &dyn DistanceOracle,
    anchor: &[f64],
    window: Window,
    cfg: &ContactConfig,
) -> Result<ContactOrderEstimate, ContactError> {
    if !(window.h_min > 0.0 && window.h_max > window.h_min) {
        return Err(ContactError::InvalidWindow {
            h_min: window.h_min,
            h_max: window.h_max,
        });
    }
    let fit_offs = offsets(window, cfg.samples, cfg.side);
    let samples = sample_pairs(gamma1, s0, gamma2, anchor, &fit_offs)?;
    let (l_raw, residual) = loglog_fit(&samples);
    let nearest = l_raw.round();
    let snapped = (l_raw - nearest).abs() < cfg.snap_tol;
    let l_hat = if snapped { nearest } else { l_raw };

    let band_offs = offsets(window, cfg.band_samples, cfg.side);
    let band = sample_pairs(gamma1, s0, gamma2, anchor, &band_offs)?;
    let (mut m_hat, mut big_m_hat) = (f64::INFINITY, 0.0_f64);
    for (r, d) in band.iter().chain(samples.iter()) {
        let q = d / r.powf(l_hat);
        m_hat = m_hat.min(q);
        big_m_hat = big_m_hat.max(q);
    }
    let converged = residual <= cfg.residual_cap
        && m_hat > 0.0
        && big_m_hat.is_finite()
        && big_m_hat / m_hat <= cfg.band_limit;
    let est = ContactOrderEstimate {
        l_hat,
        l_raw,
        snapped,
        m_hat,
        big_m_hat,
        residual,
        samples,
        converged,
    };
    if converged {
        Ok(est)
    } else {
        Err(ContactError::NonConvergent(Box::new(est)))
    }
}

/// Outcome of one direction of a contact measurement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum DirectionOutcome {
    Converged {
        estimate: ContactOrderEstimate,
    },
    Failed {
        reason: String,
        estimate: Option<ContactOrderEstimate>,
    },
}

impl DirectionOutcome {
    pub fn l_hat(&self) -> Option<f64> {
        match self {
            DirectionOutcome::Converged { estimate } => Some(estimate.l_hat),
            DirectionOutcome::Failed { .. } => None,
        }
    }

    pub fn is_non_convergent(&self) -> bool {
        matches!(self, DirectionOutcome::Failed { estimate: Some(_), .. })
    }
}

impl From<Result<ContactOrderEstimate, ContactError>> for DirectionOutcome {
    fn from(r: Result<ContactOrderEstimate, ContactError>) -> Self {
        match r {
            Ok(estimate) => DirectionOutcome::Converged { estimate },
            Err(e) => {
                let reason = e.to_string();
                let estimate = match e {
                    ContactError::NonConvergent(est) => Some(*est),
                    _ => None,
                };
                DirectionOutcome::Failed { reason, estimate }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymmetryReport {
    pub l_12: DirectionOutcome,
    pub l_21: DirectionOutcome,
    pub symmetric: bool,
}

/// A curve together with the parameter at which it passes through the anchor.
#[derive(Clone, Copy)]
pub struct Anchored<'a> {
    pub curve: &'a dyn ContactCurve,
    pub s0: f64,
}

/// Measures the order of contact in both directions.
pub fn check_symmetry(
    gamma1: Anchored<'_>,
    gamma2: Anchored<'_>,
    anchor: &[f64],
    window: Window,
    cfg: &ContactConfig,
) -> SymmetryReport {
    let l_12: DirectionOutcome = estimate_contact_order(
        gamma1.curve,
        gamma1.s0,
        gamma2.curve,
        anchor,
        window,
        cfg,
    )
    .into();
    let l_21: DirectionOutcome = estimate_contact_order(
        gamma2.curve,
        gamma2.s0,
        gamma1.curve,
        anchor,
        window,
        cfg,
    )
    .into();
    let symmetric = match (l_12.l_hat(), l_21.l_hat()) {
        (Some(a), Some(b)) => (a - b).abs() < 0.1,
        _ => false,
    };
    SymmetryReport {
        l_12,
        l_21,
        symmetric,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffeoReport {
    pub l_before: f64,
    pub l_after: f64,
    pub det_at_anchor: f64,
}

/// Measures the order of contact before and after pushing both curves
/// through a polynomial diffeomorphism.
pub fn verify_diffeo_invariance(
    gamma1: Anchored<'_>,
    gamma2: Anchored<'_>,
    anchor: &[f64],
    diffeo: &PolyMap,
    window: Window,
    cfg: &ContactConfig,
) -> Result<DiffeoReport, ContactError> {
    let det = diffeo.jacobian(anchor).determinant();
    if !(det.abs() > 1e-9) {
        return Err(ContactError::SingularDiffeo { det });
    }
    let before = estimate_contact_order(
        gamma1.curve,
        gamma1.s0,
        gamma2.curve,
        anchor,
        window,
        cfg,
    )?;
    let mapped1 = MappedCurve::new(gamma1.curve, diffeo);
    let mapped2 = MappedCurve::new(gamma2.curve, diffeo);
    let new_anchor = diffeo.apply(anchor);
    let after = estimate_contact_order(&mapped1, gamma1.s0, &mapped2, &new_anchor, window, cfg)?;
    Ok(DiffeoReport {
        l_before: before.l_hat,
        l_after: after.l_hat,
        det_at_anchor: det,
    })
}

// ---------------------------------------------------------------------------
// Concrete curves and distance oracles.

/// Curve given as a graph over the first coordinate:
/// `s ↦ (s, f_1(s), ..., f_{n-1}(s))`.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphCurve {
    pub components: Vec<Field>,
    pub domain: (f64, f64),
}

const SEARCH_SAMPLES: usize = 1025;
const SEARCH_ROUNDS: usize = 12;

impl GraphCurve {
    pub fn new(components: Vec<Field>, domain: (f64, f64)) -> Self {
        Self { components, domain }
    }

    /// Planar graph `y = f(x)`.
    pub fn planar(f: Field, domain: (f64, f64)) -> Self {
        Self::new(vec![f], domain)
    }

    /// The first coordinate axis of `R^n`.
    pub fn axis(n: usize, domain: (f64, f64)) -> Self {
        Self::new(vec![Field::zero(1); n - 1], domain)
    }
}

impl Curve for GraphCurve {
    fn dim(&self) -> usize {
        self.components.len() + 1
    }
    fn point(&self, s: f64) -> Vec<f64> {
        std::iter::once(s)
            .chain(self.components.iter().map(|f| f.at(s)))
            .collect()
    }
    fn domain(&self) -> (f64, f64) {
        self.domain
    }
}

impl DistanceOracle for GraphCurve {
    /// The slope-corrected vertical gap is only first-order accurate and fails
    /// on oscillating graphs, so the distance is found by search. Any point of
    /// the graph closer than `d` has first coordinate within `d` of `x[0]`,
    /// which bounds the window of each round.
    fn distance(&self, x: &[f64]) -> f64 {
        let (lo, hi) = self.domain;
        let s_start = x[0].clamp(lo, hi);
        let mut best = norm_diff(x, &self.point(s_start));
        for _ in 0..SEARCH_ROUNDS {
            if best == 0.0 {
                break;
            }
            let a = (x[0] - best).max(lo);
            let b = (x[0] + best).min(hi);
            let (_, d) = scan_and_refine(self, x, a, b, SEARCH_SAMPLES);
            if d < best * (1.0 - 1e-9) {
                best = d;
            } else {
                break;
            }
        }
        best
    }
}

/// Dense scan of `[a, b]` followed by bracket zooming around the best sample.
fn scan_and_refine(c: &dyn Curve, x: &[f64], a: f64, b: f64, count: usize) -> (f64, f64) {
    if !(b > a) {
        return (a, norm_diff(x, &c.point(a)));
    }
    let step = (b - a) / (count - 1) as f64;
    let mut best_i = 0;
    let mut best = f64::INFINITY;
    for i in 0..count {
        let d = norm_diff(x, &c.point(a + step * i as f64));
        if d < best {
            best = d;
            best_i = i;
        }
    }
    let mut lo = a + step * best_i.saturating_sub(1) as f64;
    let mut hi = (a + step * (best_i + 1) as f64).min(b);
    let mut best_s = a + step * best_i as f64;
    for _ in 0..80 {
        if hi - lo <= 1e-15 * best_s.abs().max(1e-300) {
            break;
        }
        let k: usize = 32;
        let h = (hi - lo) / k as f64;
        let mut bi: usize = 0;
        let mut bd = f64::INFINITY;
        for i in 0..=k {
            let s = lo + h * i as f64;
            let d = norm_diff(x, &c.point(s));
            if d < bd {
                bd = d;
                bi = i;
            }
        }
        if bd <= best {
            best = bd;
            best_s = lo + h * bi as f64;
        }
        let nlo = lo + h * bi.saturating_sub(1) as f64;
        let nhi = (lo + h * (bi + 1) as f64).min(hi);
        lo = nlo;
        hi = nhi;
    }
    (best_s, best)
}

/// Coordinate hyperplane `{x_axis = offset}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hyperplane {
    pub axis: usize,
    pub offset: f64,
}

impl DistanceOracle for Hyperplane {
    fn distance(&self, x: &[f64]) -> f64 {
        (x[self.axis] - self.offset).abs()
    }
}

/// Image of a curve under a polynomial map; distance by dense polyline scan
/// with local refinement over the whole parameter domain.
pub struct MappedCurve<'a> {
    base: &'a dyn Curve,
    map: &'a PolyMap,
}

impl<'a> MappedCurve<'a> {
    pub fn new(base: &'a dyn Curve, map: &'a PolyMap) -> Self {
        Self { base, map }
    }
}

impl Curve for MappedCurve<'_> {
    fn dim(&self) -> usize {
        self.map.dim()
    }
    fn point(&self, s: f64) -> Vec<f64> {
        self.map.apply(&self.base.point(s))
    }
    fn domain(&self) -> (f64, f64) {
        self.base.domain()
    }
}

impl DistanceOracle for MappedCurve<'_> {
    fn distance(&self, x: &[f64]) -> f64 {
        let (lo, hi) = self.domain();
        scan_and_refine(self, x, lo, hi, 4097).1
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::func::Polynomial;

    fn monomial(c: f64, l: usize) -> Field {
        let mut coeffs = vec![0.0; l + 1];
        coeffs[l] = c;
        Field::Poly(Polynomial::univariate(&coeffs))
    }

    #[test]
    fn parabola_and_cubic_against_axis() {
        let axis = Hyperplane { axis: 1, offset: 0.0 };
        for l in [2usize, 3] {
            let g = GraphCurve::planar(monomial(1.0, l), (-1.0, 1.0));
            let est = estimate_contact_order(
                &g,
                0.0,
                &axis,
                &[0.0, 0.0],
                Window::default(),
                &ContactConfig::default(),
            )
            .unwrap();
            assert!((est.l_raw - l as f64).abs() < 0.05, "{est:?}");
            assert_eq!(est.l_hat, l as f64);
            assert!(est.snapped && est.converged);
        }
    }

    #[test]
    fn graph_distance_matches_closed_form_for_line() {
        // y = x, distance from (1, 0) is 1/sqrt(2).
        let g = GraphCurve::planar(monomial(1.0, 1), (-5.0, 5.0));
        let d = g.distance(&[1.0, 0.0]);
        assert!((d - 0.5_f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn not_isolated_is_reported() {
        // y = 0 against itself.
        let g = GraphCurve::axis(2, (-1.0, 1.0));
        let axis = Hyperplane { axis: 1, offset: 0.0 };
        let r = estimate_contact_order(
            &g,
            0.0,
            &axis,
            &[0.0, 0.0],
            Window::default(),
            &ContactConfig::default(),
        );
        assert!(matches!(r, Err(ContactError::NotIsolated { .. })));
    }

    #[test]
    fn bad_window_is_rejected() {
        let g = GraphCurve::axis(2, (-1.0, 1.0));
        let axis = Hyperplane { axis: 1, offset: 0.0 };
        let r = estimate_contact_order(
            &g,
            0.0,
            &axis,
            &[0.0, 0.0],
            Window {
                h_min: 1e-2,
                h_max: 1e-4,
            },
            &ContactConfig::default(),
        );
        assert!(matches!(r, Err(ContactError::InvalidWindow { .. })));
    }

    #[test]
    fn singular_diffeo_rejected() {
        let g = GraphCurve::planar(monomial(1.0, 2), (-1.0, 1.0));
        let axis = GraphCurve::axis(2, (-1.0, 1.0));
        // (x, y) ↦ (x^2, y) is singular at 0.
        let sq = PolyMap::new(vec![
            Polynomial::new(
                2,
                vec![crate::func::Term {
                    coeff: 1.0,
                    powers: vec![2, 0],
                }],
            )
            .unwrap(),
            Polynomial::new(
                2,
                vec![crate::func::Term {
                    coeff: 1.0,
                    powers: vec![0, 1],
                }],
            )
            .unwrap(),
        ])
        .unwrap();
        let r = verify_diffeo_invariance(
            Anchored { curve: &g, s0: 0.0 },
            Anchored {
                curve: &axis,
                s0: 0.0,
            },
            &[0.0, 0.0],
            &sq,
            Window::default(),
            &ContactConfig::default(),
        );
        assert!(matches!(r, Err(ContactError::SingularDiffeo { .. })));
    }

    #[test]
    fn both_sides_sampling_on_odd_power() {
        let g = GraphCurve::planar(monomial(-2.0, 3), (-1.0, 1.0));
        let axis = Hyperplane { axis: 1, offset: 0.0 };
        let cfg = ContactConfig {
            side: Side::Both,
            ..Default::default()
        };
        let est =
            estimate_contact_order(&g, 0.0, &axis, &[0.0, 0.0], Window::default(), &cfg).unwrap();
        assert_eq!(est.l_hat, 3.0);
        assert_eq!(est.samples.len(), 80);
        assert!((est.m_hat - 2.0).abs() < 0.2 && (est.big_m_hat - 2.0).abs() < 0.2);
    }
}
