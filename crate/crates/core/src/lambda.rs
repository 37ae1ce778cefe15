//! Forward iterates `f^k Λ` of a graph portion and the numerical check that
//! they converge in C¹ to the local unstable plane away from the origin.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::manifold::{GraphPortion, ModelError};
use crate::normal_form::NormalFormMap;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LambdaError {
    #[error("sample at parameter {t:?} left the working box after {step} steps")]
    LeftDomain { t: Vec<f64>, step: u32 },
    #[error("region grid outside the exclusion ball is empty")]
    EmptyRegion,
    #[error("no preimage of u = {u:?} on the graph portion after {k} steps")]
    NotCovered { u: Vec<f64>, k: u32 },
    #[error("d_C1 stayed above rho = {rho} up to n_max = {n_max}")]
    NoConvergence {
        rho: f64,
        n_max: u32,
        tail: Vec<DecaySample>,
    },
    #[error("graph portion needs one stable coordinate, map has {m}")]
    StableDimension { m: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IterationMode {
    /// Closed-form powers of the linear part.
    Linear,
    /// Points and tangents pushed through `apply`/`jacobian`.
    Perturbed,
}

#[derive(Debug, Clone)]
pub struct IteratedGraph {
    k: u32,
    mode: IterationMode,
    map: NormalFormMap,
    graph: GraphPortion,
}

/// A point of `f^k Λ` with the image of the tangent basis: `du_dt` is the
/// `p × p` block, `dv_dt` the row of stable components.
#[derive(Debug, Clone, PartialEq)]
pub struct IteratedPoint {
    pub u: Vec<f64>,
    pub v: f64,
    pub du_dt: DMatrix<f64>,
    pub dv_dt: Vec<f64>,
}

/// `f^k Λ` written as a graph `v = g(u)` over the unstable coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphValue {
    pub t: Vec<f64>,
    pub v: f64,
    /// `dg/du`.
    pub slope: Vec<f64>,
    /// `dt/du`, the derivative of the inverse of the unstable component.
    pub inverse_derivative: DMatrix<f64>,
}

pub fn iterate_graph_portion(
    map: &NormalFormMap,
    graph: &GraphPortion,
    k: u32,
    mode: IterationMode,
) -> Result<IteratedGraph, LambdaError> {
    if map.m() != 1 {
        return Err(LambdaError::StableDimension { m: map.m() });
    }
    if graph.p() != map.p() {
        return Err(LambdaError::Model(ModelError::InvalidGraph(format!(
            "graph over {} coordinates, map expands {}",
            graph.p(),
            map.p()
        ))));
    }
    let map = match mode {
        IterationMode::Linear => map.linear_part(),
        IterationMode::Perturbed => map.clone(),
    };
    Ok(IteratedGraph {
        k,
        mode,
        map,
        graph: graph.clone(),
    })
}

impl IteratedGraph {
    pub fn k(&self) -> u32 {
        self.k
    }
    pub fn mode(&self) -> IterationMode {
        self.mode
    }
    pub fn graph(&self) -> &GraphPortion {
        &self.graph
    }
    pub fn map(&self) -> &NormalFormMap {
        &self.map
    }

    /// Image of `Λ(t)` under `f^k`, with tangents.
    pub fn eval_at_parameter(&self, t: &[f64]) -> Result<IteratedPoint, LambdaError> {
        let gp = self.graph.eval(t)?;
        let p = self.graph.p();
        match self.mode {
            IterationMode::Linear => {
                let ak = self.map.expansion_power(self.k);
                let u = (&ak * DVector::from_column_slice(t)).iter().copied().collect();
                let ck = self.map.alpha().powi(self.k as i32);
                let grad = self.graph.phi().gradient(t);
                Ok(IteratedPoint {
                    u,
                    v: ck * self.graph.height(t),
                    du_dt: ak,
                    dv_dt: grad.iter().map(|g| ck * g).collect(),
                })
            }
            IterationMode::Perturbed => {
                let n = p + 1;
                let mut z = gp.point;
                let mut tangents = DMatrix::from_fn(n, p, |i, j| gp.tangents[j][i]);
                for step in 0..self.k {
                    let jac = self
                        .map
                        .jacobian(&z)
                        .map_err(|_| LambdaError::LeftDomain {
                            t: t.to_vec(),
                            step,
                        })?;
                    z = self.map.apply(&z).map_err(|_| LambdaError::LeftDomain {
                        t: t.to_vec(),
                        step,
                    })?;
                    tangents = jac * tangents;
                }
                Ok(IteratedPoint {
                    u: z[..p].to_vec(),
                    v: z[p],
                    du_dt: tangents.rows(0, p).into_owned(),
                    dv_dt: tangents.row(p).iter().copied().collect(),
                })
            }
        }
    }

    /// Solves `u(t) = u` for `t` and returns the graph value and slope there.
    pub fn graph_over(&self, u: &[f64]) -> Result<GraphValue, LambdaError> {
        let not_covered = || LambdaError::NotCovered {
            u: u.to_vec(),
            k: self.k,
        };
        let mut t = self.map.solve_expansion_power(self.k, u);
        if self.mode == IterationMode::Perturbed {
            let scale = u.iter().fold(1.0f64, |s, x| s.max(x.abs()));
            let mut converged = false;
            for _ in 0..60 {
                let ip = self.eval_at_parameter(&t).map_err(|_| not_covered())?;
                let resid: Vec<f64> = ip.u.iter().zip(u).map(|(a, b)| a - b).collect();
                let rmax = resid.iter().fold(0.0f64, |s, x| s.max(x.abs()));
                if rmax <= 1e-14 * scale {
                    converged = true;
                    break;
                }
                let step = ip
                    .du_dt
                    .lu()
                    .solve(&DVector::from_vec(resid))
                    .ok_or_else(not_covered)?;
                for (ti, si) in t.iter_mut().zip(step.iter()) {
                    *ti -= si;
                }
            }
            if !converged {
                return Err(not_covered());
            }
        }
        if !self.graph.contains(&t) {
            return Err(not_covered());
        }
        let ip = self.eval_at_parameter(&t)?;
        let inverse_derivative = ip.du_dt.try_inverse().ok_or_else(not_covered)?;
        let dv = DVector::from_vec(ip.dv_dt);
        let slope = (inverse_derivative.transpose() * dv).iter().copied().collect();
        Ok(GraphValue {
            t,
            v: ip.v,
            slope,
            inverse_derivative,
        })
    }

    /// Points of `f^k Λ` over a uniform grid of the parameter box.
    pub fn sample(&self, per_axis: usize) -> Vec<Result<IteratedPoint, LambdaError>> {
        grid(self.graph.t_box(), per_axis)
            .map(|t| self.eval_at_parameter(&t))
            .collect()
    }
}

/// Iterates a uniform `per_axis^d` grid over `bounds`.
fn grid(bounds: &[(f64, f64)], per_axis: usize) -> impl Iterator<Item = Vec<f64>> + '_ {
    let d = bounds.len();
    let total = per_axis.pow(d as u32);
    (0..total).map(move |idx| {
        let mut rem = idx;
        bounds
            .iter()
            .map(|(lo, hi)| {
                let i = rem % per_axis;
                rem /= per_axis;
                if per_axis == 1 {
                    0.5 * (lo + hi)
                } else {
                    lo + (hi - lo) * i as f64 / (per_axis - 1) as f64
                }
            })
            .collect()
    })
}

/// The annulus `ε < ‖u‖ ≤ σ` in the unstable coordinates, sampled on a
/// uniform grid of `[-σ, σ]^p`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub epsilon: f64,
    pub sigma: f64,
    pub per_axis: usize,
}

impl Region {
    pub fn new(epsilon: f64, sigma: f64) -> Self {
        Self {
            epsilon,
            sigma,
            per_axis: 200,
        }
    }

    pub fn points(&self, p: usize) -> Vec<Vec<f64>> {
        let bounds = vec![(-self.sigma, self.sigma); p];
        grid(&bounds, self.per_axis)
            .filter(|u| u.iter().map(|x| x * x).sum::<f64>().sqrt() > self.epsilon)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct C1Measure {
    d_c0: f64,
    d_c1: f64,
    inverse_derivative_sup: f64,
}

fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    m.clone().svd(false, false).singular_values.max()
}

fn measure(g: &IteratedGraph, region: &Region) -> Result<C1Measure, LambdaError> {
    let pts = region.points(g.graph.p());
    if pts.is_empty() {
        return Err(LambdaError::EmptyRegion);
    }
    let mut c0: f64 = 0.0;
    let mut slope: f64 = 0.0;
    let mut inv: f64 = 0.0;
    for u in &pts {
        let gv = g.graph_over(u)?;
        c0 = c0.max(gv.v.abs());
        slope = slope.max(gv.slope.iter().map(|s| s * s).sum::<f64>().sqrt());
        inv = inv.max(spectral_norm(&gv.inverse_derivative));
    }
    Ok(C1Measure {
        d_c0: c0,
        d_c1: c0 + slope,
        inverse_derivative_sup: inv,
    })
}

/// C⁰ and C¹ distance of `f^k Λ` from the plane `{v = 0}` over `region`.
pub fn c1_distance(g: &IteratedGraph, region: &Region) -> Result<(f64, f64), LambdaError> {
    let m = measure(g, region)?;
    Ok((m.d_c0, m.d_c1))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecaySample {
    pub n: u32,
    pub d_c0: f64,
    pub d_c1: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaConfig {
    pub epsilon: f64,
    pub rho: f64,
    pub n_max: u32,
    /// Outer radius of the sampled region.
    pub sigma: f64,
    pub per_axis: usize,
}

impl LambdaConfig {
    pub fn new(epsilon: f64, rho: f64, n_max: u32) -> Self {
        Self {
            epsilon,
            rho,
            n_max,
            sigma: 0.5,
            per_axis: 200,
        }
    }
}

/// Points used for the tail fits.
pub const TAIL_POINTS: usize = 10;
/// Relative slack on the rate bounds.
pub const RATE_SLACK: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaVerdict {
    pub epsilon: f64,
    pub rho: f64,
    pub n_min: u32,
    pub decay_samples: Vec<DecaySample>,
    /// Least-squares slope of `log d_C1` against `n` over the tail.
    pub fitted_rate: f64,
    #[serde(rename = "K_fit")]
    pub k_fit: f64,
    /// `(1/l) log(λ + K_fit Δ)`.
    pub rate_bound: f64,
    pub within_rate_bound: bool,
    /// `fitted_rate <= log λ` up to the slack.
    pub within_lambda_rate: bool,
    /// `d_C1` never increases after `n_min`.
    pub monotone_tail: bool,
}

/// Least-squares slope of `ys` against `xs`.
pub fn ls_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

fn with_slack(bound: f64) -> f64 {
    bound + RATE_SLACK * bound.abs()
}

pub fn verify_singular_lambda_lemma(
    map: &NormalFormMap,
    graph: &GraphPortion,
    cfg: &LambdaConfig,
) -> Result<LambdaVerdict, LambdaError> {
    let mode = if map.is_perturbed() {
        IterationMode::Perturbed
    } else {
        IterationMode::Linear
    };
    let region = Region {
        epsilon: cfg.epsilon,
        sigma: cfg.sigma,
        per_axis: cfg.per_axis,
    };
    let mut samples = Vec::with_capacity(cfg.n_max as usize);
    let mut inverse_sups = Vec::with_capacity(cfg.n_max as usize);
    for n in 1..=cfg.n_max {
        let g = iterate_graph_portion(map, graph, n, mode)?;
        let m = measure(&g, &region)?;
        samples.push(DecaySample {
            n,
            d_c0: m.d_c0,
            d_c1: m.d_c1,
        });
        inverse_sups.push(m.inverse_derivative_sup);
    }
    let Some(n_min) = samples.iter().find(|s| s.d_c1 < cfg.rho).map(|s| s.n) else {
        let tail = samples[samples.len().saturating_sub(TAIL_POINTS)..].to_vec();
        return Err(LambdaError::NoConvergence {
            rho: cfg.rho,
            n_max: cfg.n_max,
            tail,
        });
    };

    let tail = samples.len().saturating_sub(TAIL_POINTS);
    let ns: Vec<f64> = samples[tail..].iter().map(|s| s.n as f64).collect();
    let fitted_rate = if ns.len() >= 2 {
        let logs: Vec<f64> = samples[tail..].iter().map(|s| s.d_c1.ln()).collect();
        ls_slope(&ns, &logs)
    } else {
        f64::NAN
    };

    let delta = map.delta();
    let k_fit = if delta > 0.0 && ns.len() >= 2 {
        let logs: Vec<f64> = inverse_sups[tail..].iter().map(|x| x.ln()).collect();
        let growth = ls_slope(&ns, &logs).exp();
        let a_inv = map
            .expansion_matrix()
            .try_inverse()
            .expect("expansion block is invertible");
        ((growth - spectral_norm(&a_inv)) / delta).max(0.0)
    } else {
        0.0
    };
    let l = graph.near_tangency_exponent().map_or(1.0, |e| 1.0 / e);
    let lambda = map.lambda_bound();
    let rate_bound = (lambda + k_fit * delta).ln() / l;
    let monotone_tail = samples
        .windows(2)
        .filter(|w| w[0].n >= n_min)
        .all(|w| w[1].d_c1 <= w[0].d_c1);
    Ok(LambdaVerdict {
        epsilon: cfg.epsilon,
        rho: cfg.rho,
        n_min,
        decay_samples: samples,
        fitted_rate,
        k_fit,
        rate_bound,
        within_rate_bound: fitted_rate <= with_slack(rate_bound),
        within_lambda_rate: fitted_rate <= with_slack(lambda.ln()),
        monotone_tail,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::func::{Field, Polynomial};
    use crate::normal_form::{validate_map, MapSpec};

    fn flat(b: f64) -> GraphPortion {
        GraphPortion::new(b, Field::zero(1), vec![(-1.5, 1.5)], None).unwrap()
    }

    fn map_2d() -> NormalFormMap {
        validate_map(&MapSpec::diagonal(&[2.0], 0.5)).unwrap()
    }

    #[test]
    fn linear_iterate_closed_form() {
        let g = iterate_graph_portion(&map_2d(), &flat(1.0), 3, IterationMode::Linear).unwrap();
        let ip = g.eval_at_parameter(&[0.1]).unwrap();
        assert!((ip.u[0] - 0.8).abs() < 1e-15);
        assert_eq!(ip.v, 0.125);
    }

    #[test]
    fn jordan_iterate_closed_form() {
        let spec = MapSpec {
            sigmas: vec![1],
            ..MapSpec::diagonal(&[2.0, 2.0], 0.5)
        };
        let map = validate_map(&spec).unwrap();
        let lam =
            GraphPortion::new(1.0, Field::zero(2), vec![(-1.0, 1.0), (-1.0, 1.0)], None).unwrap();
        let g = iterate_graph_portion(&map, &lam, 2, IterationMode::Linear).unwrap();
        let ip = g.eval_at_parameter(&[0.1, 0.2]).unwrap();
        assert!((ip.u[0] - 1.2).abs() < 1e-15);
        assert!((ip.u[1] - 0.8).abs() < 1e-15);
        assert_eq!(ip.v, 0.25);
    }

    #[test]
    fn flat_distances() {
        let region = Region::new(0.01, 0.5);
        for (k, want) in [(3u32, 0.125), (10, 2f64.powi(-10))] {
            let g = iterate_graph_portion(&map_2d(), &flat(1.0), k, IterationMode::Linear).unwrap();
            let (c0, c1) = c1_distance(&g, &region).unwrap();
            assert_eq!(c0, want);
            assert_eq!(c1, want);
        }
    }

    #[test]
    fn empty_region() {
        let g = iterate_graph_portion(&map_2d(), &flat(1.0), 1, IterationMode::Linear).unwrap();
        let region = Region::new(1.0, 0.5);
        assert_eq!(c1_distance(&g, &region), Err(LambdaError::EmptyRegion));
    }

    #[test]
    fn flat_n_min() {
        let cfg = LambdaConfig::new(0.01, 1e-3, 40);
        let v = verify_singular_lambda_lemma(&map_2d(), &flat(1.0), &cfg).unwrap();
        assert_eq!(v.n_min, 10);
        assert!((v.fitted_rate - 0.5f64.ln()).abs() < 1e-9);
        let cfg = LambdaConfig::new(0.01, 1e-6, 40);
        let v = verify_singular_lambda_lemma(&map_2d(), &flat(1.0), &cfg).unwrap();
        assert_eq!(v.n_min, 20);
    }

    #[test]
    fn no_convergence_reports_tail() {
        let cfg = LambdaConfig::new(0.01, 1e-6, 12);
        match verify_singular_lambda_lemma(&map_2d(), &flat(1.0), &cfg) {
            Err(LambdaError::NoConvergence { tail, .. }) => assert_eq!(tail.len(), 10),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn perturbed_graph_over_inverts_forward_map() {
        let spec = MapSpec {
            perturbation: Some(crate::normal_form::PerturbationSpec {
                name: Some("diag_xy".into()),
                scale: Some(0.05),
                entries: None,
            }),
            working_box: Some(vec![[-1.0, 1.0], [-2.0, 2.0]]),
            ..MapSpec::diagonal(&[2.5], 0.5)
        };
        let map = validate_map(&spec).unwrap();
        let lam = GraphPortion::new(
            1.0,
            Field::Poly(Polynomial::univariate(&[0.0, 0.3])),
            vec![(-1.0, 1.0)],
            None,
        )
        .unwrap();
        let g = iterate_graph_portion(&map, &lam, 6, IterationMode::Perturbed).unwrap();
        let gv = g.graph_over(&[0.3]).unwrap();
        let ip = g.eval_at_parameter(&gv.t).unwrap();
        assert!((ip.u[0] - 0.3).abs() < 1e-14);
    }
}
