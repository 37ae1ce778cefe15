//! Local models of the two invariant-manifold pieces near the fixed point.
//!
//! * [`TangentCurve`] `Γ`: a piece of the stable manifold touching the
//!   unstable hyperplane `{v = 0}` at `A`, parameterized as
//!   `u_j = a_j(τ) + A_j`, `v = τ^l`.
//! * [`GraphPortion`] `Λ`: a piece of the unstable manifold that is a graph
//!   over the unstable coordinates, `x = t`, `y = φ(t) + B`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::contact::Curve;
use crate::func::{Field, FunctionError, FunctionSpec};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("parameter {param:?} outside the domain")]
    OutOfDomain { param: Vec<f64> },
    #[error("invalid tangent curve: {0}")]
    InvalidCurve(String),
    #[error("invalid graph portion: {0}")]
    InvalidGraph(String),
    #[error(transparent)]
    Function(#[from] FunctionError),
}

/// Samples used to check the derivative bound `|a_j'| <= r`.
const SLOPE_CHECK_SAMPLES: usize = 201;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GammaSpec {
    pub l: u32,
    #[serde(rename = "A")]
    pub a_point: Vec<f64>,
    /// Ascending coefficients of each `a_j`.
    pub a_coeffs: Vec<Vec<f64>>,
    pub r: f64,
    pub tau_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LambdaSpec {
    #[serde(rename = "B")]
    pub b: f64,
    /// Univariate shorthand for `phi` when `p = 1`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi_coeffs: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi: Option<FunctionSpec>,
    pub t_box: Vec<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub near_tangency_exponent: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TangentCurve {
    l: u32,
    a_point: Vec<f64>,
    components: Vec<Field>,
    r: f64,
    tau_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub point: Vec<f64>,
    pub tangent: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphPoint {
    pub point: Vec<f64>,
    /// `∂/∂t_j` of the embedding, one vector per unstable coordinate.
    pub tangents: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sidedness {
    TwoSided,
    /// Newhouse-type candidate.
    OneSided,
}

impl TangentCurve {
    pub fn new(
        l: u32,
        a_point: Vec<f64>,
        components: Vec<Field>,
        r: f64,
        tau_max: f64,
    ) -> Result<Self, ModelError> {
        if l < 2 {
            return Err(ModelError::InvalidCurve(format!("l = {l} must exceed 1")));
        }
        if a_point.len() != components.len() {
            return Err(ModelError::InvalidCurve(format!(
                "{} components for {} coordinates of A",
                components.len(),
                a_point.len()
            )));
        }
        if !a_point.iter().any(|a| a.abs() > 0.0) {
            return Err(ModelError::InvalidCurve("A must be nonzero".into()));
        }
        if !(tau_max > 0.0) {
            return Err(ModelError::InvalidCurve("tau_max must be positive".into()));
        }
        for (j, a) in components.iter().enumerate() {
            if a.at(0.0) != 0.0 {
                return Err(ModelError::InvalidCurve(format!("a_{j}(0) != 0")));
            }
            for i in 0..SLOPE_CHECK_SAMPLES {
                let tau = -tau_max + 2.0 * tau_max * i as f64 / (SLOPE_CHECK_SAMPLES - 1) as f64;
                let s = a.slope_at(tau).abs();
                if s > r * (1.0 + 1e-12) {
                    return Err(ModelError::InvalidCurve(format!(
                        "|a_{j}'({tau})| = {s} exceeds r = {r}"
                    )));
                }
            }
        }
        Ok(Self {
            l,
            a_point,
            components,
            r,
            tau_max,
        })
    }

    pub fn from_spec(spec: &GammaSpec) -> Result<Self, ModelError> {
        let comps = spec
            .a_coeffs
            .iter()
            .map(|c| FunctionSpec::coeffs(c).to_field(1))
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(spec.l, spec.a_point.clone(), comps, spec.r, spec.tau_max)
    }

    pub fn l(&self) -> u32 {
        self.l
    }
    pub fn a_point(&self) -> &[f64] {
        &self.a_point
    }
    pub fn components(&self) -> &[Field] {
        &self.components
    }
    pub fn r(&self) -> f64 {
        self.r
    }
    pub fn tau_max(&self) -> f64 {
        self.tau_max
    }
    /// Ambient dimension `n`.
    pub fn n(&self) -> usize {
        self.a_point.len() + 1
    }

    /// The tangency point `(A, 0)`.
    pub fn anchor(&self) -> Vec<f64> {
        let mut v = self.a_point.clone();
        v.push(0.0);
        v
    }

    /// True when some `a_j'(0) != 0`, so that `τ ↦ Γ(τ)` is an immersion at 0.
    pub fn is_immersed(&self) -> bool {
        self.components.iter().any(|a| a.slope_at(0.0) != 0.0)
    }

    /// `u = a(τ) + A` without the domain check.
    pub fn u_at(&self, tau: f64) -> Vec<f64> {
        self.components
            .iter()
            .zip(&self.a_point)
            .map(|(a, aj)| a.at(tau) + aj)
            .collect()
    }

    pub fn a_prime(&self, tau: f64) -> Vec<f64> {
        self.components.iter().map(|a| a.slope_at(tau)).collect()
    }

    pub fn eval(&self, tau: f64) -> Result<CurvePoint, ModelError> {
        if tau.abs() > self.tau_max {
            return Err(ModelError::OutOfDomain { param: vec![tau] });
        }
        let mut point = self.u_at(tau);
        point.push(tau.powi(self.l as i32));
        let mut tangent = self.a_prime(tau);
        tangent.push(self.l as f64 * tau.powi(self.l as i32 - 1));
        Ok(CurvePoint { point, tangent })
    }
}

impl Curve for TangentCurve {
    fn dim(&self) -> usize {
        self.n()
    }
    fn point(&self, s: f64) -> Vec<f64> {
        let mut p = self.u_at(s);
        p.push(s.powi(self.l as i32));
        p
    }
    fn domain(&self) -> (f64, f64) {
        (-self.tau_max, self.tau_max)
    }
}

/// Two-sided iff `v = τ^l` changes sign across `τ = 0`, i.e. `l` is odd.
pub fn classify_sidedness(gamma: &TangentCurve) -> Sidedness {
    if gamma.l % 2 == 1 {
        Sidedness::TwoSided
    } else {
        Sidedness::OneSided
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphPortion {
    b: f64,
    phi: Field,
    t_box: Vec<(f64, f64)>,
    near_tangency_exponent: Option<f64>,
}

impl GraphPortion {
    pub fn new(
        b: f64,
        phi: Field,
        t_box: Vec<(f64, f64)>,
        near_tangency_exponent: Option<f64>,
    ) -> Result<Self, ModelError> {
        if b == 0.0 || !b.is_finite() {
            return Err(ModelError::InvalidGraph("B must be nonzero".into()));
        }
        if phi.nvars() != t_box.len() {
            return Err(ModelError::InvalidGraph(format!(
                "phi takes {} variables, t_box has {}",
                phi.nvars(),
                t_box.len()
            )));
        }
        if t_box.iter().any(|(lo, hi)| !(lo < hi)) {
            return Err(ModelError::InvalidGraph("empty t_box interval".into()));
        }
        if phi.value(&vec![0.0; t_box.len()]) != 0.0 {
            return Err(ModelError::InvalidGraph("phi(0) != 0".into()));
        }
        if let Some(e) = near_tangency_exponent {
            if !(e > 0.0 && e <= 1.0) {
                return Err(ModelError::InvalidGraph(format!(
                    "near_tangency_exponent {e} must lie in (0, 1]"
                )));
            }
        }
        Ok(Self {
            b,
            phi,
            t_box,
            near_tangency_exponent,
        })
    }

    pub fn from_spec(spec: &LambdaSpec) -> Result<Self, ModelError> {
        let p = spec.t_box.len();
        let phi = match (&spec.phi_coeffs, &spec.phi) {
            (Some(c), None) => FunctionSpec::coeffs(c).to_field(p)?,
            (None, Some(f)) => f.to_field(p)?,
            (None, None) => Field::zero(p),
            (Some(_), Some(_)) => {
                return Err(ModelError::InvalidGraph(
                    "set only one of phi_coeffs, phi".into(),
                ))
            }
        };
        Self::new(
            spec.b,
            phi,
            spec.t_box.iter().map(|iv| (iv[0], iv[1])).collect(),
            spec.near_tangency_exponent,
        )
    }

    pub fn b(&self) -> f64 {
        self.b
    }
    pub fn phi(&self) -> &Field {
        &self.phi
    }
    pub fn t_box(&self) -> &[(f64, f64)] {
        &self.t_box
    }
    pub fn near_tangency_exponent(&self) -> Option<f64> {
        self.near_tangency_exponent
    }
    pub fn p(&self) -> usize {
        self.t_box.len()
    }

    pub fn contains(&self, t: &[f64]) -> bool {
        t.iter()
            .zip(&self.t_box)
            .all(|(v, (lo, hi))| *v >= *lo && *v <= *hi)
    }

    /// `φ(t) + B`.
    pub fn height(&self, t: &[f64]) -> f64 {
        self.phi.value(t) + self.b
    }

    pub fn eval(&self, t: &[f64]) -> Result<GraphPoint, ModelError> {
        if !self.contains(t) {
            return Err(ModelError::OutOfDomain { param: t.to_vec() });
        }
        let mut point = t.to_vec();
        point.push(self.height(t));
        let grad = self.phi.gradient(t);
        let p = self.p();
        let tangents = (0..p)
            .map(|j| {
                let mut v = vec![0.0; p + 1];
                v[j] = 1.0;
                v[p] = grad[j];
                v
            })
            .collect();
        Ok(GraphPoint { point, tangents })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::func::Polynomial;

    fn gamma(a: &[f64], l: u32) -> TangentCurve {
        TangentCurve::new(
            l,
            vec![1.0],
            vec![Field::Poly(Polynomial::univariate(a))],
            1.0,
            1.0,
        )
        .unwrap()
    }

    #[test]
    fn curve_point_and_tangent() {
        let g = gamma(&[0.0], 3);
        let cp = g.eval(0.5).unwrap();
        assert_eq!(cp.point, vec![1.0, 0.125]);
        assert_eq!(cp.tangent, vec![0.0, 0.75]);
        let g = gamma(&[0.0, 0.1], 3);
        let cp = g.eval(0.5).unwrap();
        assert!((cp.point[0] - 1.05).abs() < 1e-15);
        assert_eq!(cp.point[1], 0.125);
        assert!(matches!(g.eval(1.5), Err(ModelError::OutOfDomain { .. })));
    }

    #[test]
    fn graph_point_and_tangent() {
        let lam = GraphPortion::new(1.0, Field::zero(1), vec![(-1.0, 1.0)], None).unwrap();
        let gp = lam.eval(&[0.2]).unwrap();
        assert_eq!(gp.point, vec![0.2, 1.0]);
        assert_eq!(gp.tangents, vec![vec![1.0, 0.0]]);
        assert!(lam.eval(&[2.0]).is_err());
    }

    #[test]
    fn sidedness_by_parity() {
        assert_eq!(classify_sidedness(&gamma(&[0.0], 3)), Sidedness::TwoSided);
        assert_eq!(classify_sidedness(&gamma(&[0.0], 2)), Sidedness::OneSided);
        assert_eq!(classify_sidedness(&gamma(&[0.0], 5)), Sidedness::TwoSided);
    }

    #[test]
    fn invalid_models_rejected() {
        let one = || vec![Field::Poly(Polynomial::univariate(&[0.0, 2.0]))];
        // slope 2 exceeds r = 1
        assert!(TangentCurve::new(3, vec![1.0], one(), 1.0, 1.0).is_err());
        assert!(TangentCurve::new(3, vec![0.0], one(), 5.0, 1.0).is_err());
        assert!(TangentCurve::new(1, vec![1.0], one(), 5.0, 1.0).is_err());
        let shifted = vec![Field::Poly(Polynomial::univariate(&[0.1]))];
        assert!(TangentCurve::new(3, vec![1.0], shifted, 5.0, 1.0).is_err());
        assert!(GraphPortion::new(0.0, Field::zero(1), vec![(-1.0, 1.0)], None).is_err());
        let phi = Field::Poly(Polynomial::univariate(&[0.5]));
        assert!(GraphPortion::new(1.0, phi, vec![(-1.0, 1.0)], None).is_err());
    }
}
