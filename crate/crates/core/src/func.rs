//! Scalar functions used by scenario fixtures: multivariate polynomials and a
//! couple of named closed-form built-ins, all with exact gradients.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FunctionError {
    #[error("term has {got} exponents, expected {expected}")]
    Arity { expected: usize, got: usize },
    #[error("unknown built-in function `{0}`")]
    UnknownBuiltin(String),
    #[error("function spec must set exactly one of `coeffs`, `terms`, `builtin`")]
    Ambiguous,
    #[error("`coeffs` describes a univariate polynomial but {0} variables are required")]
    NotUnivariate(usize),
    #[error("built-in `{name}` is missing parameter `{param}`")]
    MissingParam { name: String, param: &'static str },
}

/// One monomial `coeff * x_0^powers[0] * ... * x_{n-1}^powers[n-1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub coeff: f64,
    pub powers: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polynomial {
    nvars: usize,
    terms: Vec<Term>,
}

impl Polynomial {
    pub fn new(nvars: usize, terms: Vec<Term>) -> Result<Self, FunctionError> {
        for t in &terms {
            if t.powers.len() != nvars {
                return Err(FunctionError::Arity {
                    expected: nvars,
                    got: t.powers.len(),
                });
            }
        }
        Ok(Self { nvars, terms })
    }

    pub fn zero(nvars: usize) -> Self {
        Self {
            nvars,
            terms: Vec::new(),
        }
    }

    /// Univariate polynomial from ascending coefficients `c0 + c1 x + ...`.
    pub fn univariate(coeffs: &[f64]) -> Self {
        let terms = coeffs
            .iter()
            .enumerate()
            .filter(|(_, c)| **c != 0.0)
            .map(|(i, c)| Term {
                coeff: *c,
                powers: vec![i as u32],
            })
            .collect();
        Self { nvars: 1, terms }
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn constant_term(&self) -> f64 {
        self.terms
            .iter()
            .filter(|t| t.powers.iter().all(|&p| p == 0))
            .map(|t| t.coeff)
            .sum()
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.nvars);
        self.terms
            .iter()
            .map(|t| {
                t.powers
                    .iter()
                    .zip(x)
                    .fold(t.coeff, |acc, (&p, &xi)| acc * xi.powi(p as i32))
            })
            .sum()
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.nvars];
        for t in &self.terms {
            for (var, gv) in g.iter_mut().enumerate() {
                let pv = t.powers[var];
                if pv == 0 {
                    continue;
                }
                let mut v = t.coeff * pv as f64;
                for (j, (&p, &xj)) in t.powers.iter().zip(x).enumerate() {
                    let e = if j == var { p - 1 } else { p };
                    v *= xj.powi(e as i32);
                }
                *gv += v;
            }
        }
        g
    }
}

/// A scalar field on `R^nvars` with exact value and gradient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Field {
    Poly(Polynomial),
    /// `coeff * sign(x_var) * |x_var|^exponent`; Hölder-type at the origin when
    /// `exponent < 1`.
    SignedRoot {
        nvars: usize,
        var: usize,
        coeff: f64,
        exponent: f64,
    },
    /// `x^2 + (1 + sin(1/x)) x`, extended by 0 at the origin. Continuous but not
    /// C¹ at 0.
    Oscillating { nvars: usize, var: usize },
}

impl Field {
    pub fn zero(nvars: usize) -> Self {
        Field::Poly(Polynomial::zero(nvars))
    }

    pub fn nvars(&self) -> usize {
        match self {
            Field::Poly(p) => p.nvars(),
            Field::SignedRoot { nvars, .. } | Field::Oscillating { nvars, .. } => *nvars,
        }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        match self {
            Field::Poly(p) => p.eval(x),
            Field::SignedRoot {
                var,
                coeff,
                exponent,
                ..
            } => {
                let s = x[*var];
                if s == 0.0 {
                    0.0
                } else {
                    coeff * s.signum() * s.abs().powf(*exponent)
                }
            }
            Field::Oscillating { var, .. } => oscillating(x[*var]),
        }
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        match self {
            Field::Poly(p) => p.gradient(x),
            Field::SignedRoot {
                nvars,
                var,
                coeff,
                exponent,
            } => {
                let mut g = vec![0.0; *nvars];
                let s = x[*var];
                g[*var] = if s == 0.0 {
                    if *exponent < 1.0 {
                        f64::INFINITY
                    } else if *exponent == 1.0 {
                        *coeff
                    } else {
                        0.0
                    }
                } else {
                    coeff * exponent * s.abs().powf(exponent - 1.0)
                };
                g
            }
            Field::Oscillating { nvars, var } => {
                let mut g = vec![0.0; *nvars];
                let s = x[*var];
                g[*var] = if s == 0.0 {
                    f64::NAN
                } else {
                    2.0 * s + 1.0 + (1.0 / s).sin() - (1.0 / s).cos() / s
                };
                g
            }
        }
    }

    /// Value of a univariate field.
    pub fn at(&self, s: f64) -> f64 {
        self.value(&[s])
    }

    /// Derivative of a univariate field.
    pub fn slope_at(&self, s: f64) -> f64 {
        self.gradient(&[s])[0]
    }

    /// True when the field is a polynomial with no terms.
    pub fn is_zero(&self) -> bool {
        matches!(self, Field::Poly(p) if p.terms().iter().all(|t| t.coeff == 0.0))
    }
}

fn oscillating(x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * x + (1.0 + (1.0 / x).sin()) * x
    }
}

/// Scenario-file form of a [`Field`]. Exactly one of `coeffs`, `terms`,
/// `builtin` is set.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FunctionSpec {
    /// Ascending coefficients of a univariate polynomial.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coeffs: Option<Vec<f64>>,
    /// Rows `[coeff, p_0, ..., p_{n-1}]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub terms: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub builtin: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coeff: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exponent: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub var: Option<usize>,
}

impl FunctionSpec {
    pub fn coeffs(c: &[f64]) -> Self {
        Self {
            coeffs: Some(c.to_vec()),
            ..Self::default()
        }
    }

    pub fn to_field(&self, nvars: usize) -> Result<Field, FunctionError> {
        let set = [
            self.coeffs.is_some(),
            self.terms.is_some(),
            self.builtin.is_some(),
        ]
        .iter()
        .filter(|b| **b)
        .count();
        if set != 1 {
            return Err(FunctionError::Ambiguous);
        }
        if let Some(c) = &self.coeffs {
            if nvars != 1 {
                return Err(FunctionError::NotUnivariate(nvars));
            }
            return Ok(Field::Poly(Polynomial::univariate(c)));
        }
        if let Some(rows) = &self.terms {
            let terms = rows
                .iter()
                .map(|row| {
                    if row.len() != nvars + 1 {
                        return Err(FunctionError::Arity {
                            expected: nvars,
                            got: row.len().saturating_sub(1),
                        });
                    }
                    Ok(Term {
                        coeff: row[0],
                        powers: row[1..].iter().map(|p| *p as u32).collect(),
                    })
                })
                .collect::<Result<Vec<_>, _>>()?;
            return Polynomial::new(nvars, terms).map(Field::Poly);
        }
        let name = self.builtin.as_deref().unwrap_or_default();
        let var = self.var.unwrap_or(0);
        match name {
            "signed_root" => Ok(Field::SignedRoot {
                nvars,
                var,
                coeff: self.coeff.ok_or(FunctionError::MissingParam {
                    name: name.into(),
                    param: "coeff",
                })?,
                exponent: self.exponent.ok_or(FunctionError::MissingParam {
                    name: name.into(),
                    param: "exponent",
                })?,
            }),
            "oscillating_counterexample" => Ok(Field::Oscillating { nvars, var }),
            other => Err(FunctionError::UnknownBuiltin(other.to_string())),
        }
    }
}

/// Polynomial self-map of `R^n`, used as a test diffeomorphism.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolyMap {
    components: Vec<Polynomial>,
}

impl PolyMap {
    pub fn new(components: Vec<Polynomial>) -> Result<Self, FunctionError> {
        let n = components.len();
        for c in &components {
            if c.nvars() != n {
                return Err(FunctionError::Arity {
                    expected: n,
                    got: c.nvars(),
                });
            }
        }
        Ok(Self { components })
    }

    pub fn identity(n: usize) -> Self {
        let components = (0..n)
            .map(|i| {
                let mut powers = vec![0; n];
                powers[i] = 1;
                Polynomial {
                    nvars: n,
                    terms: vec![Term { coeff: 1.0, powers }],
                }
            })
            .collect();
        Self { components }
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.components.iter().map(|c| c.eval(x)).collect()
    }

    pub fn jacobian(&self, x: &[f64]) -> DMatrix<f64> {
        let n = self.dim();
        let mut j = DMatrix::zeros(n, n);
        for (r, c) in self.components.iter().enumerate() {
            for (col, g) in c.gradient(x).into_iter().enumerate() {
                j[(r, col)] = g;
            }
        }
        j
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_gradient_matches_hand_derivative() {
        // 3 x^2 y - y^3 + 2
        let p = Polynomial::new(
            2,
            vec![
                Term {
                    coeff: 3.0,
                    powers: vec![2, 1],
                },
                Term {
                    coeff: -1.0,
                    powers: vec![0, 3],
                },
                Term {
                    coeff: 2.0,
                    powers: vec![0, 0],
                },
            ],
        )
        .unwrap();
        let (x, y) = (0.7, -1.3);
        assert!((p.eval(&[x, y]) - (3.0 * x * x * y - y * y * y + 2.0)).abs() < 1e-14);
        let g = p.gradient(&[x, y]);
        assert!((g[0] - 6.0 * x * y).abs() < 1e-14);
        assert!((g[1] - (3.0 * x * x - 3.0 * y * y)).abs() < 1e-14);
        assert_eq!(p.constant_term(), 2.0);
    }

    #[test]
    fn spec_forms_parse() {
        let f = FunctionSpec::coeffs(&[0.0, 0.1]).to_field(1).unwrap();
        assert!((f.at(0.5) - 0.05).abs() < 1e-15);
        let spec = FunctionSpec {
            terms: Some(vec![vec![0.5, 1.0, 1.0]]),
            ..Default::default()
        };
        let f = spec.to_field(2).unwrap();
        assert!((f.value(&[2.0, 3.0]) - 3.0).abs() < 1e-15);
        assert!(FunctionSpec::default().to_field(1).is_err());
        assert!(FunctionSpec::coeffs(&[1.0]).to_field(2).is_err());
        let bad = FunctionSpec {
            builtin: Some("nope".into()),
            ..Default::default()
        };
        assert!(matches!(
            bad.to_field(1),
            Err(FunctionError::UnknownBuiltin(_))
        ));
    }

    #[test]
    fn signed_root_is_odd_and_holder() {
        let f = Field::SignedRoot {
            nvars: 1,
            var: 0,
            coeff: 2.0,
            exponent: 1.0 / 3.0,
        };
        assert!((f.at(0.125) - 1.0).abs() < 1e-14);
        assert!((f.at(-0.125) + 1.0).abs() < 1e-14);
        assert_eq!(f.at(0.0), 0.0);
        let h = 1e-7;
        let fd = (f.at(0.3 + h) - f.at(0.3 - h)) / (2.0 * h);
        assert!((fd - f.slope_at(0.3)).abs() < 1e-6);
    }

    #[test]
    fn oscillating_stays_between_parabola_and_line() {
        let f = Field::Oscillating { nvars: 1, var: 0 };
        for i in 1..200 {
            let x = 1e-3 * i as f64;
            let v = f.at(x);
            assert!(v >= x * x - 1e-18 && v <= x * x + 2.0 * x + 1e-18);
        }
        let x = 0.05;
        let h = 1e-9;
        let fd = (f.at(x + h) - f.at(x - h)) / (2.0 * h);
        assert!((fd - f.slope_at(x)).abs() / fd.abs().max(1.0) < 1e-4);
    }

    #[test]
    fn polymap_jacobian() {
        // (x + y^2, y + x^3)
        let m = PolyMap::new(vec![
            Polynomial::new(
                2,
                vec![
                    Term {
                        coeff: 1.0,
                        powers: vec![1, 0],
                    },
                    Term {
                        coeff: 1.0,
                        powers: vec![0, 2],
                    },
                ],
            )
            .unwrap(),
            Polynomial::new(
                2,
                vec![
                    Term {
                        coeff: 1.0,
                        powers: vec![0, 1],
                    },
                    Term {
                        coeff: 1.0,
                        powers: vec![3, 0],
                    },
                ],
            )
            .unwrap(),
        ])
        .unwrap();
        let j = m.jacobian(&[0.5, 2.0]);
        assert_eq!(j[(0, 0)], 1.0);
        assert_eq!(j[(0, 1)], 4.0);
        assert_eq!(j[(1, 0)], 0.75);
        assert_eq!(j[(1, 1)], 1.0);
        assert_eq!(PolyMap::identity(3).apply(&[1.0, 2.0, 3.0]), vec![1.0, 2.0, 3.0]);
    }
}
