//! The local normal-form diffeomorphism near the hyperbolic fixed point.
//!
//! In linearized coordinates `(x, y)` with `x ∈ R^p` expanding and
//! `y ∈ R^m` contracting the map is
//!
//! ```text
//! S_1(x, y) = A x + ( Σ_i x_i U_i^1(x, y), ..., Σ_i x_i U_i^p(x, y) )
//! S_2(x, y) = α y
//! ```
//!
//! where `A` is upper bidiagonal (eigenvalues `β_j` on the diagonal, Jordan
//! flags `σ` on the superdiagonal) and `U` is an optional polynomial
//! perturbation vanishing at the origin. The stable coordinate is always
//! linear.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::func::{FunctionError, FunctionSpec, Polynomial};

/// Relative distance from 1 below which an eigenvalue modulus counts as
/// non-hyperbolic.
pub const HYPERBOLICITY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "violation", rename_all = "snake_case")]
pub enum Violation {
    Dimension { detail: String },
    NonHyperbolic { what: String, value: f64 },
    MalformedJordan { index: usize, left: f64, right: f64 },
    StableNonlinear { row: usize },
    PerturbationNotZeroAtOrigin { row: usize, col: usize },
    BadFunction { detail: String },
    BadBox { detail: String },
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Violation::Dimension { detail } => write!(f, "dimension: {detail}"),
            Violation::NonHyperbolic { what, value } => {
                write!(f, "non-hyperbolic {what} = {value}")
            }
            Violation::MalformedJordan { index, left, right } => write!(
                f,
                "Jordan flag sigma[{index}] = 1 joins unequal eigenvalues {left} and {right}"
            ),
            Violation::StableNonlinear { row } => write!(
                f,
                "perturbation row {row} targets the stable coordinate, which must stay linear"
            ),
            Violation::PerturbationNotZeroAtOrigin { row, col } => {
                write!(f, "perturbation entry U[{row}][{col}] does not vanish at 0")
            }
            Violation::BadFunction { detail } => write!(f, "function: {detail}"),
            Violation::BadBox { detail } => write!(f, "working box: {detail}"),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("invalid normal-form map: {}", .violations.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
pub struct ValidationError {
    pub violations: Vec<Violation>,
}

impl ValidationError {
    pub fn has(&self, pred: impl Fn(&Violation) -> bool) -> bool {
        self.violations.iter().any(pred)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MapError {
    #[error("point {point:?} lies outside the working box")]
    OutOfDomain { point: Vec<f64> },
}

/// Raw map description as it appears in scenario files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapSpec {
    pub n: usize,
    pub p: usize,
    pub betas: Vec<f64>,
    #[serde(default)]
    pub sigmas: Vec<u8>,
    pub alpha: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub perturbation: Option<PerturbationSpec>,
    #[serde(rename = "box", default, skip_serializing_if = "Option::is_none")]
    pub working_box: Option<Vec<[f64; 2]>>,
}

impl MapSpec {
    pub fn diagonal(betas: &[f64], alpha: f64) -> Self {
        Self {
            n: betas.len() + 1,
            p: betas.len(),
            betas: betas.to_vec(),
            sigmas: vec![0; betas.len().saturating_sub(1)],
            alpha,
            perturbation: None,
            working_box: None,
        }
    }
}

/// Perturbation `U` either by built-in name or as explicit entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbationSpec {
    /// `diag_x`: `U_i^i = scale * x_i`; `diag_xy`: `U_i^i = scale * (x_i + y_1)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entries: Option<Vec<PerturbationEntry>>,
}

/// `U_col^row` as a polynomial in all `n` coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbationEntry {
    pub row: usize,
    pub col: usize,
    pub poly: FunctionSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Perturbation {
    /// `(row j, col i, U_i^j)`.
    pub entries: Vec<(usize, usize, Polynomial)>,
}

impl Perturbation {
    /// Largest `|U_i^j|` at a point.
    fn max_abs(&self, z: &[f64]) -> f64 {
        self.entries
            .iter()
            .map(|(_, _, u)| u.eval(z).abs())
            .fold(0.0, f64::max)
    }
}

/// Expanding and contracting eigenvalue moduli.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumPair {
    pub spec_a: Vec<f64>,
    pub spec_b: Vec<f64>,
    pub tol: f64,
}

impl SpectrumPair {
    pub fn new(spec_a: Vec<f64>, spec_b: Vec<f64>, tol: f64) -> Result<Self, ValidationError> {
        let mut violations = Vec::new();
        for &a in &spec_a {
            if !(a > 1.0 + tol.max(HYPERBOLICITY_TOL)) {
                violations.push(Violation::NonHyperbolic {
                    what: "specA entry".into(),
                    value: a,
                });
            }
        }
        for &b in &spec_b {
            if !(b > 0.0 && b < 1.0 - tol.max(HYPERBOLICITY_TOL)) {
                violations.push(Violation::NonHyperbolic {
                    what: "specB entry".into(),
                    value: b,
                });
            }
        }
        if !(tol > 0.0) {
            violations.push(Violation::Dimension {
                detail: "tolerance must be positive".into(),
            });
        }
        if violations.is_empty() {
            Ok(Self {
                spec_a,
                spec_b,
                tol,
            })
        } else {
            Err(ValidationError { violations })
        }
    }
}

/// Validated local normal form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalFormMap {
    n: usize,
    p: usize,
    betas: Vec<f64>,
    sigmas: Vec<u8>,
    alpha: f64,
    lambda_bound: f64,
    perturbation: Option<Perturbation>,
    delta: f64,
    working_box: Vec<(f64, f64)>,
}

const DEFAULT_BOX_HALF_WIDTH: f64 = 2.0;
const DELTA_GRID: usize = 21;

/// Checks every invariant of a map description, collecting all violations.
pub fn validate_map(spec: &MapSpec) -> Result<NormalFormMap, ValidationError> {
    let mut v = Vec::new();
    if spec.n < 2 {
        v.push(Violation::Dimension {
            detail: format!("n = {} must be at least 2", spec.n),
        });
    }
    if spec.p == 0 || spec.p >= spec.n.max(1) {
        v.push(Violation::Dimension {
            detail: format!("p = {} must satisfy 1 <= p < n = {}", spec.p, spec.n),
        });
    }
    if spec.betas.len() != spec.p {
        v.push(Violation::Dimension {
            detail: format!("{} betas for p = {}", spec.betas.len(), spec.p),
        });
    }
    let sigmas = if spec.sigmas.is_empty() {
        vec![0; spec.p.saturating_sub(1)]
    } else {
        spec.sigmas.clone()
    };
    if sigmas.len() != spec.p.saturating_sub(1) {
        v.push(Violation::Dimension {
            detail: format!("{} sigmas for p = {}", sigmas.len(), spec.p),
        });
    }
    for (j, &b) in spec.betas.iter().enumerate() {
        if !(b > 1.0 + HYPERBOLICITY_TOL) {
            v.push(Violation::NonHyperbolic {
                what: format!("beta[{j}]"),
                value: b,
            });
        }
    }
    if !(spec.alpha > 0.0 && spec.alpha < 1.0 - HYPERBOLICITY_TOL) {
        v.push(Violation::NonHyperbolic {
            what: "alpha".into(),
            value: spec.alpha,
        });
    }
    for (i, &s) in sigmas.iter().enumerate() {
        if s > 1 {
            v.push(Violation::Dimension {
                detail: format!("sigma[{i}] = {s} must be 0 or 1"),
            });
        }
        if s == 1 && i + 1 < spec.betas.len() {
            let (l, r) = (spec.betas[i], spec.betas[i + 1]);
            if (l - r).abs() > 1e-12 * l.abs().max(r.abs()) {
                v.push(Violation::MalformedJordan {
                    index: i,
                    left: l,
                    right: r,
                });
            }
        }
    }
    let working_box: Vec<(f64, f64)> = match &spec.working_box {
        Some(b) => {
            if b.len() != spec.n {
                v.push(Violation::BadBox {
                    detail: format!("{} intervals for n = {}", b.len(), spec.n),
                });
            }
            for (i, iv) in b.iter().enumerate() {
                if !(iv[0] < 0.0 && iv[1] > 0.0) {
                    v.push(Violation::BadBox {
                        detail: format!("interval {i} = {iv:?} must contain 0 in its interior"),
                    });
                }
            }
            b.iter().map(|iv| (iv[0], iv[1])).collect()
        }
        None => vec![(-DEFAULT_BOX_HALF_WIDTH, DEFAULT_BOX_HALF_WIDTH); spec.n],
    };
    let perturbation = match &spec.perturbation {
        None => None,
        Some(ps) => match build_perturbation(ps, spec.n, spec.p) {
            Ok(p) => {
                for (row, col, u) in &p.entries {
                    if *row >= spec.p {
                        v.push(Violation::StableNonlinear { row: *row });
                    }
                    if *col >= spec.p {
                        v.push(Violation::Dimension {
                            detail: format!("perturbation column {col} >= p"),
                        });
                    }
                    if u.constant_term() != 0.0 {
                        v.push(Violation::PerturbationNotZeroAtOrigin {
                            row: *row,
                            col: *col,
                        });
                    }
                }
                Some(p)
            }
            Err(e) => {
                v.push(Violation::BadFunction {
                    detail: e.to_string(),
                });
                None
            }
        },
    };
    if !v.is_empty() {
        return Err(ValidationError { violations: v });
    }
    let lambda_bound = spec
        .betas
        .iter()
        .map(|b| 1.0 / b)
        .fold(spec.alpha, f64::max);
    let mut map = NormalFormMap {
        n: spec.n,
        p: spec.p,
        betas: spec.betas.clone(),
        sigmas,
        alpha: spec.alpha,
        lambda_bound,
        perturbation,
        delta: 0.0,
        working_box,
    };
    map.delta = map.sup_perturbation();
    Ok(map)
}

fn build_perturbation(
    ps: &PerturbationSpec,
    n: usize,
    p: usize,
) -> Result<Perturbation, FunctionError> {
    let mut entries = Vec::new();
    if let Some(list) = &ps.entries {
        for e in list {
            let f = e.poly.to_field(n)?;
            match f {
                crate::func::Field::Poly(poly) => entries.push((e.row, e.col, poly)),
                _ => return Err(FunctionError::UnknownBuiltin("non-polynomial U".into())),
            }
        }
    }
    if let Some(name) = &ps.name {
        let scale = ps.scale.unwrap_or(1.0);
        let mono = |var: usize| {
            let mut powers = vec![0; n];
            powers[var] = 1;
            crate::func::Term {
                coeff: scale,
                powers,
            }
        };
        for i in 0..p {
            let terms = match name.as_str() {
                "diag_x" => vec![mono(i)],
                "diag_xy" => vec![mono(i), mono(p)],
                other => return Err(FunctionError::UnknownBuiltin(other.into())),
            };
            entries.push((i, i, Polynomial::new(n, terms)?));
        }
    }
    Ok(Perturbation { entries })
}

impl NormalFormMap {
    pub fn n(&self) -> usize {
        self.n
    }
    pub fn p(&self) -> usize {
        self.p
    }
    pub fn m(&self) -> usize {
        self.n - self.p
    }
    pub fn betas(&self) -> &[f64] {
        &self.betas
    }
    pub fn sigmas(&self) -> &[u8] {
        &self.sigmas
    }
    pub fn alpha(&self) -> f64 {
        self.alpha
    }
    pub fn lambda_bound(&self) -> f64 {
        self.lambda_bound
    }
    pub fn delta(&self) -> f64 {
        self.delta
    }
    pub fn working_box(&self) -> &[(f64, f64)] {
        &self.working_box
    }
    pub fn is_perturbed(&self) -> bool {
        self.perturbation
            .as_ref()
            .is_some_and(|p| !p.entries.is_empty())
    }
    pub fn is_jordan(&self) -> bool {
        self.sigmas.iter().any(|&s| s == 1)
    }
    pub fn beta_min(&self) -> f64 {
        self.betas.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// The same map with the perturbation removed.
    pub fn linear_part(&self) -> NormalFormMap {
        NormalFormMap {
            perturbation: None,
            delta: 0.0,
            ..self.clone()
        }
    }

    pub fn spectrum_pair(&self, tol: f64) -> Result<SpectrumPair, ValidationError> {
        SpectrumPair::new(self.betas.clone(), vec![self.alpha; self.m()], tol)
    }

    /// The expansion block `A`.
    pub fn expansion_matrix(&self) -> DMatrix<f64> {
        let p = self.p;
        let mut a = DMatrix::zeros(p, p);
        for j in 0..p {
            a[(j, j)] = self.betas[j];
            if j + 1 < p {
                a[(j, j + 1)] = f64::from(self.sigmas[j]);
            }
        }
        a
    }

    /// `A^k` in closed form: on a Jordan block with eigenvalue `β` the entry
    /// `d` places above the diagonal is `C(k, d) β^(k-d)`.
    pub fn expansion_power(&self, k: u32) -> DMatrix<f64> {
        let p = self.p;
        let mut out = DMatrix::zeros(p, p);
        for (start, len) in self.jordan_blocks() {
            let beta = self.betas[start];
            for d in 0..len.min(k as usize + 1) {
                let entry = binomial(k, d as u32) * beta.powi(k as i32 - d as i32);
                for i in start..start + len - d {
                    out[(i, i + d)] = entry;
                }
            }
        }
        out
    }

    /// `A^k` by repeated squaring; used to cross-check [`Self::expansion_power`].
    pub fn expansion_power_by_squaring(&self, k: u32) -> DMatrix<f64> {
        let mut result = DMatrix::identity(self.p, self.p);
        let mut base = self.expansion_matrix();
        let mut e = k;
        while e > 0 {
            if e & 1 == 1 {
                result = &result * &base;
            }
            base = &base * &base;
            e >>= 1;
        }
        result
    }

    /// Solves `A^k t = b`.
    pub fn solve_expansion_power(&self, k: u32, b: &[f64]) -> Vec<f64> {
        let ak = self.expansion_power(k);
        let rhs = DVector::from_column_slice(b);
        ak.solve_upper_triangular(&rhs)
            .expect("A^k is upper triangular with nonzero diagonal")
            .iter()
            .copied()
            .collect()
    }

    /// `(start, len)` of each Jordan block of `A`.
    pub fn jordan_blocks(&self) -> Vec<(usize, usize)> {
        let mut blocks = Vec::new();
        let mut start = 0;
        for j in 0..self.p {
            let joined = j + 1 < self.p && self.sigmas[j] == 1;
            if !joined {
                blocks.push((start, j + 1 - start));
                start = j + 1;
            }
        }
        blocks
    }

    pub fn in_box(&self, z: &[f64]) -> bool {
        z.iter()
            .zip(&self.working_box)
            .all(|(v, (lo, hi))| *v >= *lo && *v <= *hi)
    }

    fn check_domain(&self, z: &[f64]) -> Result<(), MapError> {
        if self.is_perturbed() && !self.in_box(z) {
            return Err(MapError::OutOfDomain { point: z.to_vec() });
        }
        Ok(())
    }

    pub fn apply(&self, z: &[f64]) -> Result<Vec<f64>, MapError> {
        self.check_domain(z)?;
        let p = self.p;
        let mut out = vec![0.0; self.n];
        for j in 0..p {
            out[j] = self.betas[j] * z[j];
            if j + 1 < p {
                out[j] += f64::from(self.sigmas[j]) * z[j + 1];
            }
        }
        if let Some(pert) = &self.perturbation {
            for (row, col, u) in &pert.entries {
                out[*row] += z[*col] * u.eval(z);
            }
        }
        for q in p..self.n {
            out[q] = self.alpha * z[q];
        }
        Ok(out)
    }

    pub fn jacobian(&self, z: &[f64]) -> Result<DMatrix<f64>, MapError> {
        self.check_domain(z)?;
        let (n, p) = (self.n, self.p);
        let mut j = DMatrix::zeros(n, n);
        j.view_mut((0, 0), (p, p)).copy_from(&self.expansion_matrix());
        if let Some(pert) = &self.perturbation {
            for (row, col, u) in &pert.entries {
                // d/dz_c [ z_col * U(z) ] = δ_{c,col} U(z) + z_col ∂_c U(z)
                let g = u.gradient(z);
                j[(*row, *col)] += u.eval(z);
                for (c, gc) in g.iter().enumerate() {
                    j[(*row, c)] += z[*col] * gc;
                }
            }
        }
        for q in p..n {
            j[(q, q)] = self.alpha;
        }
        Ok(j)
    }

    /// Sup of `|U_i^j|` over a grid on the working box (corners included).
    fn sup_perturbation(&self) -> f64 {
        let Some(pert) = &self.perturbation else {
            return 0.0;
        };
        if pert.entries.is_empty() {
            return 0.0;
        }
        let n = self.n;
        let per_axis = if n <= 3 { DELTA_GRID } else { 7 };
        let total = per_axis.pow(n as u32);
        let mut z = vec![0.0; n];
        let mut sup: f64 = 0.0;
        for idx in 0..total {
            let mut rem = idx;
            for (c, (lo, hi)) in self.working_box.iter().enumerate() {
                let i = rem % per_axis;
                rem /= per_axis;
                z[c] = lo + (hi - lo) * i as f64 / (per_axis - 1) as f64;
            }
            sup = sup.max(pert.max_abs(&z));
        }
        sup
    }
}

/// `C(k, d)` as a float.
pub fn binomial(k: u32, d: u32) -> f64 {
    if d > k {
        return 0.0;
    }
    (0..d).fold(1.0, |acc, i| acc * (k - i) as f64 / (i + 1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn jordan2() -> NormalFormMap {
        validate_map(&MapSpec {
            n: 3,
            p: 2,
            betas: vec![2.0, 2.0],
            sigmas: vec![1],
            alpha: 0.5,
            perturbation: None,
            working_box: None,
        })
        .unwrap()
    }

    #[test]
    fn validate_accepts_simple_map() {
        let m = validate_map(&MapSpec::diagonal(&[2.0], 0.5)).unwrap();
        assert_eq!(m.n(), 2);
        assert_eq!(m.lambda_bound(), 0.5);
        assert_eq!(m.delta(), 0.0);
    }

    #[test]
    fn validate_rejects_unit_beta() {
        let err = validate_map(&MapSpec::diagonal(&[1.0], 0.5)).unwrap_err();
        assert!(err.has(|v| matches!(v, Violation::NonHyperbolic { .. })));
        let err = validate_map(&MapSpec::diagonal(&[2.0], 1.0 - 1e-12)).unwrap_err();
        assert!(err.has(|v| matches!(v, Violation::NonHyperbolic { .. })));
    }

    #[test]
    fn validate_rejects_jordan_across_unequal_eigenvalues() {
        let mut s = MapSpec::diagonal(&[2.0, 3.0], 0.5);
        s.sigmas = vec![1];
        let err = validate_map(&s).unwrap_err();
        assert!(err.has(|v| matches!(v, Violation::MalformedJordan { .. })));
    }

    #[test]
    fn validate_rejects_stable_perturbation() {
        let mut s = MapSpec::diagonal(&[2.0], 0.5);
        s.perturbation = Some(PerturbationSpec {
            name: None,
            scale: None,
            entries: Some(vec![PerturbationEntry {
                row: 1,
                col: 0,
                poly: FunctionSpec {
                    terms: Some(vec![vec![0.1, 1.0, 0.0]]),
                    ..Default::default()
                },
            }]),
        });
        let err = validate_map(&s).unwrap_err();
        assert!(err.has(|v| matches!(v, Violation::StableNonlinear { row: 1 })));
    }

    #[test]
    fn validate_collects_multiple_violations() {
        let mut s = MapSpec::diagonal(&[1.0, 3.0], 1.5);
        s.sigmas = vec![1];
        let err = validate_map(&s).unwrap_err();
        assert!(err.violations.len() >= 3, "{err}");
    }

    #[test]
    fn powers_small_cases() {
        let m = validate_map(&MapSpec::diagonal(&[2.0], 0.5)).unwrap();
        assert_eq!(m.expansion_power(3)[(0, 0)], 8.0);
        let j = jordan2();
        let a2 = j.expansion_power(2);
        assert_eq!(a2, DMatrix::from_row_slice(2, 2, &[4.0, 4.0, 0.0, 4.0]));
        assert_eq!(j.expansion_power(0), DMatrix::identity(2, 2));
    }

    #[test]
    fn closed_form_matches_squaring_for_large_k() {
        let m = validate_map(&MapSpec {
            n: 5,
            p: 4,
            betas: vec![1.5, 1.5, 1.5, 3.0],
            sigmas: vec![1, 1, 0],
            alpha: 0.3,
            perturbation: None,
            working_box: None,
        })
        .unwrap();
        for k in [0, 1, 2, 5, 17, 60] {
            let a = m.expansion_power(k);
            let b = m.expansion_power_by_squaring(k);
            for (x, y) in a.iter().zip(b.iter()) {
                assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0), "k={k}: {x} vs {y}");
            }
        }
    }

    #[test]
    fn perturbed_apply_example() {
        let mut s = MapSpec::diagonal(&[2.0], 0.5);
        s.perturbation = Some(PerturbationSpec {
            name: Some("diag_x".into()),
            scale: Some(0.1),
            entries: None,
        });
        let m = validate_map(&s).unwrap();
        let out = m.apply(&[0.1, 0.0]).unwrap();
        assert!((out[0] - 0.201).abs() < 1e-15);
        assert_eq!(out[1], 0.0);
        assert!((m.delta() - 0.2).abs() < 1e-12);
        assert!(matches!(
            m.apply(&[3.0, 0.0]),
            Err(MapError::OutOfDomain { .. })
        ));
    }

    #[test]
    fn linear_apply_and_jacobian() {
        let m = validate_map(&MapSpec::diagonal(&[2.0], 0.5)).unwrap();
        assert_eq!(m.apply(&[1.0, 1.0]).unwrap(), vec![2.0, 0.5]);
        let j = m.jacobian(&[1.0, 1.0]).unwrap();
        assert_eq!(j, DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.5]));
        // Unperturbed maps have no domain restriction.
        assert!(m.apply(&[100.0, 0.0]).is_ok());
    }

    #[test]
    fn jordan_blocks_partition() {
        let m = validate_map(&MapSpec {
            n: 5,
            p: 4,
            betas: vec![1.5, 1.5, 2.0, 3.0],
            sigmas: vec![1, 0, 0],
            alpha: 0.3,
            perturbation: None,
            working_box: None,
        })
        .unwrap();
        assert_eq!(m.jordan_blocks(), vec![(0, 2), (2, 1), (3, 1)]);
    }

    #[test]
    fn binomials() {
        assert_eq!(binomial(5, 2), 10.0);
        assert_eq!(binomial(2, 3), 0.0);
        assert_eq!(binomial(60, 0), 1.0);
    }
}
