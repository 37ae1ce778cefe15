//! A synthetic global map realizing the homoclinic loop of a scenario, and a
//! two-box witness of the shift on two symbols near a transverse crossing.
//!
//! The global map equals the linear normal form `L` away from two support
//! boxes on the unstable plane:
//!
//! * the *straightening* piece near `(A, 0)` sends `Γ` onto the stable axis,
//! * the *graft* piece near `(-A, 0)` sends the unstable plane onto `Λ`.
//!
//! A point of `Λ` at parameter `t` therefore has the homoclinic orbit
//! `(-A + t, 0) → Λ(t) → ... → L^k Λ(t) ∈ Γ → stable axis → 0`.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::manifold::{GraphPortion, TangentCurve};
use crate::normal_form::NormalFormMap;
use crate::transversality::{
    scan_k, tangent_matrix, CrossingSetup, IntersectionPoint, TransversalityError, TRANSVERSE_TOL,
};

pub const MAX_DEPTH: u32 = 12;
/// Number of box-boundary samples used by the crossing check.
pub const EDGE_SAMPLES: usize = 1000;
/// Boxes are halved until the checks pass or their size drops below this.
pub const SIZE_FLOOR: f64 = 1e-10;
/// Per-step residual accepted when checking an orbit against the global map.
pub const STEP_TOL: f64 = 1e-9;
const SWEEP_ITERS: usize = 200;
const MAX_TAIL: u32 = 200;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HorseshoeError {
    #[error("no transverse crossing: {0}")]
    NoTransverseCrossing(String),
    #[error("no Markov structure found: {0}")]
    NoMarkovStructure(String),
    #[error("witness invariant violated: {0}")]
    InvariantViolation(String),
    #[error("depth {depth} exceeds the maximum {MAX_DEPTH}")]
    DepthTooLarge { depth: u32 },
    #[error("point {point:?} is outside the range of the straightening chart")]
    OutsideChart { point: Vec<f64> },
    #[error(transparent)]
    Transversality(#[from] TransversalityError),
}

/// `{ |u - centre|_∞ <= half_u, |v| <= half_v }`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportBox {
    pub centre: Vec<f64>,
    pub half_u: f64,
    pub half_v: f64,
}

impl SupportBox {
    pub fn contains(&self, z: &[f64]) -> bool {
        let p = self.centre.len();
        z[p].abs() <= self.half_v
            && z[..p]
                .iter()
                .zip(&self.centre)
                .all(|(a, c)| (a - c).abs() <= self.half_u)
    }
}

/// How `Γ` is sent to the stable axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Straightening {
    /// `Γ` solved for `τ` through the component `a_axis` with `a_axis'(0) != 0`.
    Immersed { axis: usize },
    /// `Γ` written as `u = A + a(v^(1/l))`; smooth only when that is.
    Vertical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Step {
    Linear,
    Graft,
    Straighten,
}

#[derive(Debug, Clone)]
pub struct GlobalTestMap {
    setup: CrossingSetup,
    crossing: IntersectionPoint,
    straighten_support: SupportBox,
    graft_support: SupportBox,
    straightening: Straightening,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalMapSummary {
    pub betas: Vec<f64>,
    pub alpha: f64,
    pub straighten_support: SupportBox,
    pub graft_support: SupportBox,
    pub straightening: Straightening,
    pub reinjection_smooth: bool,
    pub crossing: IntersectionPoint,
}

fn odd_root(x: f64, l: u32) -> f64 {
    if l == 3 {
        x.cbrt()
    } else {
        x.signum() * x.abs().powf(1.0 / l as f64)
    }
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn inf_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

/// Solves `a(τ) = target` on `[-tau_max, tau_max]`.
fn invert_component(curve: &TangentCurve, axis: usize, target: f64) -> Option<f64> {
    let a = &curve.components()[axis];
    let tm = curve.tau_max();
    let mut tau = target / a.slope_at(0.0);
    for _ in 0..60 {
        if !tau.is_finite() || tau.abs() > tm {
            break;
        }
        let r = a.at(tau) - target;
        if r.abs() <= 1e-15 * (1.0 + target.abs()) {
            return Some(tau);
        }
        tau -= r / a.slope_at(tau);
    }
    // bisection fallback when `a` changes sign across the interval
    let (mut lo, mut hi) = (-tm, tm);
    let (flo, fhi) = (a.at(lo) - target, a.at(hi) - target);
    if flo * fhi > 0.0 {
        return None;
    }
    let increasing = fhi > flo;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let f = a.at(mid) - target;
        if (f > 0.0) == increasing {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

/// Picks the crossing used for the witness and the support sizes around it.
fn choose_layout(
    setup: &CrossingSetup,
    crossings: &[IntersectionPoint],
) -> Option<(IntersectionPoint, f64, f64)> {
    let map = setup.map();
    let a_pt = setup.curve().a_point();
    let alpha = map.alpha();
    let back = map.solve_expansion_power(1, a_pt);
    let e_u = inf_dist(&back, a_pt);
    let half_u = 0.5 * e_u;
    let layout = |ip: &IntersectionPoint| {
        let v_q = ip.point[a_pt.len()].abs();
        let half_v = 0.5 * v_q * (1.0 + 1.0 / alpha);
        (half_u, half_v)
    };
    let fits = |ip: &IntersectionPoint| {
        let shift = inf_norm(&setup.curve().u_at(ip.tau).iter().zip(a_pt).map(|(u, a)| u - a).collect::<Vec<_>>());
        shift < 0.5 * half_u && inf_norm(&ip.t) < 0.5 * half_u
    };
    let pick = crossings
        .iter()
        .find(|ip| fits(ip))
        .or_else(|| crossings.last())?;
    let (hu, hv) = layout(pick);
    Some((pick.clone(), hu, hv))
}

fn is_transverse(setup: &CrossingSetup, ip: &IntersectionPoint) -> bool {
    let m = tangent_matrix(setup, ip);
    let d = m.determinant();
    let hadamard: f64 = m.row_iter().map(|r| r.norm()).product();
    d.is_finite() && d.abs() > TRANSVERSE_TOL * hadamard
}

/// Scans `k ∈ [1, k_max]` for transverse crossings and builds the global map
/// around the first one that fits comfortably inside the supports.
pub fn build_global_test_map(
    setup: &CrossingSetup,
    k_max: u32,
) -> Result<GlobalTestMap, HorseshoeError> {
    let report = scan_k(setup, 1, k_max, 0.0)?;
    let crossings: Vec<IntersectionPoint> = report
        .rows
        .iter()
        .filter(|r| r.transverse)
        .map(|r| IntersectionPoint {
            k: r.k,
            t: r.t.clone(),
            tau: r.tau,
            point: r.point.clone(),
            residual: r.residual,
            branch: r.branch,
        })
        .collect();
    let (crossing, half_u, half_v) = choose_layout(setup, &crossings).ok_or_else(|| {
        HorseshoeError::NoTransverseCrossing(format!("none among k = 1..={k_max}"))
    })?;
    let curve = setup.curve();
    let axis = (0..curve.components().len())
        .max_by(|&i, &j| {
            curve.components()[i]
                .slope_at(0.0)
                .abs()
                .total_cmp(&curve.components()[j].slope_at(0.0).abs())
        })
        .filter(|&i| curve.components()[i].slope_at(0.0) != 0.0);
    let straightening = match axis {
        Some(axis) => Straightening::Immersed { axis },
        None => Straightening::Vertical,
    };
    let a_pt = curve.a_point().to_vec();
    Ok(GlobalTestMap {
        setup: setup.clone(),
        crossing,
        straighten_support: SupportBox {
            centre: a_pt.clone(),
            half_u,
            half_v,
        },
        graft_support: SupportBox {
            centre: a_pt.iter().map(|a| -a).collect(),
            half_u,
            half_v,
        },
        straightening,
    })
}

impl GlobalTestMap {
    pub fn setup(&self) -> &CrossingSetup {
        &self.setup
    }
    pub fn local(&self) -> &NormalFormMap {
        self.setup.map()
    }
    pub fn crossing(&self) -> &IntersectionPoint {
        &self.crossing
    }
    pub fn straighten_support(&self) -> &SupportBox {
        &self.straighten_support
    }
    pub fn graft_support(&self) -> &SupportBox {
        &self.graft_support
    }
    pub fn straightening(&self) -> Straightening {
        self.straightening
    }
    fn curve(&self) -> &TangentCurve {
        self.setup.curve()
    }
    fn graph(&self) -> &GraphPortion {
        self.setup.graph()
    }
    fn p(&self) -> usize {
        self.setup.map().p()
    }

    /// The reinjection is a diffeomorphism except for a vertical `Γ` whose
    /// components are not identically zero.
    pub fn reinjection_smooth(&self) -> bool {
        match self.straightening {
            Straightening::Immersed { .. } => true,
            Straightening::Vertical => self.curve().components().iter().all(|a| a.is_zero()),
        }
    }

    /// `(spec A, α)` at the fixed point.
    pub fn spectrum(&self) -> (Vec<f64>, f64) {
        (self.local().betas().to_vec(), self.local().alpha())
    }

    pub fn summary(&self) -> GlobalMapSummary {
        GlobalMapSummary {
            betas: self.local().betas().to_vec(),
            alpha: self.local().alpha(),
            straighten_support: self.straighten_support.clone(),
            graft_support: self.graft_support.clone(),
            straightening: self.straightening,
            reinjection_smooth: self.reinjection_smooth(),
            crossing: self.crossing.clone(),
        }
    }

    pub fn branch_at(&self, z: &[f64]) -> Step {
        if self.straighten_support.contains(z) {
            Step::Straighten
        } else if self.graft_support.contains(z) {
            Step::Graft
        } else {
            Step::Linear
        }
    }

    pub fn apply(&self, z: &[f64]) -> Result<Vec<f64>, HorseshoeError> {
        let p = self.p();
        let (x, y) = self.step_forward(self.branch_at(z), &z[..p], z[p])?;
        let mut out = x;
        out.push(y);
        Ok(out)
    }

    /// One step of a fixed branch, regardless of the supports.
    pub fn step_forward(
        &self,
        step: Step,
        u: &[f64],
        v: f64,
    ) -> Result<(Vec<f64>, f64), HorseshoeError> {
        let map = self.local();
        match step {
            Step::Linear => {
                let mut z = u.to_vec();
                z.push(v);
                let mut out = map.apply(&z).expect("linear map has no domain");
                let y = out.pop().unwrap();
                Ok((out, y))
            }
            Step::Graft => {
                let x: Vec<f64> = u
                    .iter()
                    .zip(&self.graft_support.centre)
                    .map(|(a, c)| a - c)
                    .collect();
                let y = self.graph().height(&x) + v;
                Ok((x, y))
            }
            Step::Straighten => {
                let curve = self.curve();
                let a_pt = curve.a_point();
                let l = curve.l();
                match self.straightening {
                    Straightening::Immersed { axis } => {
                        let tau = invert_component(curve, axis, u[axis] - a_pt[axis]).ok_or_else(
                            || HorseshoeError::OutsideChart {
                                point: [u, &[v]].concat(),
                            },
                        )?;
                        let x = (0..u.len())
                            .map(|j| {
                                if j == axis {
                                    v - tau.powi(l as i32)
                                } else {
                                    u[j] - a_pt[j] - curve.components()[j].at(tau)
                                }
                            })
                            .collect();
                        Ok((x, self.graph().b() + u[axis] - a_pt[axis]))
                    }
                    Straightening::Vertical => {
                        let tau = odd_root(v, l);
                        let x = (0..u.len())
                            .map(|j| u[j] - a_pt[j] - curve.components()[j].at(tau))
                            .collect();
                        Ok((x, self.graph().b() + v))
                    }
                }
            }
        }
    }

    /// The unstable coordinates before a step, given those after it and the
    /// stable coordinate before it.
    fn step_back(&self, step: Step, x_next: &[f64], v: f64) -> Vec<f64> {
        match step {
            Step::Linear => self.local().solve_expansion_power(1, x_next),
            Step::Graft => x_next
                .iter()
                .zip(&self.graft_support.centre)
                .map(|(x, c)| x + c)
                .collect(),
            Step::Straighten => {
                let curve = self.curve();
                let a_pt = curve.a_point();
                let l = curve.l();
                let comps = curve.components();
                match self.straightening {
                    Straightening::Immersed { axis } => {
                        let tau = odd_root(v - x_next[axis], l);
                        (0..x_next.len())
                            .map(|j| {
                                let base = a_pt[j] + comps[j].at(tau);
                                if j == axis {
                                    base
                                } else {
                                    base + x_next[j]
                                }
                            })
                            .collect()
                    }
                    Straightening::Vertical => {
                        let tau = odd_root(v, l);
                        (0..x_next.len())
                            .map(|j| x_next[j] + a_pt[j] + comps[j].at(tau))
                            .collect()
                    }
                }
            }
        }
    }

    /// The stable coordinate after a step.
    fn step_y(&self, step: Step, u: &[f64], v: f64, x_next: &[f64]) -> f64 {
        match step {
            Step::Linear => self.local().alpha() * v,
            Step::Graft => self.graph().height(x_next) + v,
            Step::Straighten => match self.straightening {
                Straightening::Immersed { axis } => {
                    self.graph().b() + u[axis] - self.curve().a_point()[axis]
                }
                Straightening::Vertical => self.graph().b() + v,
            },
        }
    }

    /// Orbit segment following `steps` with the stable coordinate pinned at
    /// the start and the unstable coordinates pinned at the end. Alternates
    /// backward passes in `x` with forward passes in `y`.
    pub fn sweep(&self, steps: &[Step], y0: f64, x_end: &[f64]) -> Option<Vec<Vec<f64>>> {
        let n = steps.len();
        let p = self.p();
        let mut xs = vec![vec![0.0; p]; n + 1];
        let mut ys = vec![0.0; n + 1];
        xs[n] = x_end.to_vec();
        ys[0] = y0;
        for _ in 0..SWEEP_ITERS {
            let mut change: f64 = 0.0;
            for i in (0..n).rev() {
                let x = self.step_back(steps[i], &xs[i + 1], ys[i]);
                change = change.max(inf_dist(&x, &xs[i]) / (1.0 + inf_norm(&x)));
                xs[i] = x;
            }
            for i in 0..n {
                let y = self.step_y(steps[i], &xs[i], ys[i], &xs[i + 1]);
                change = change.max((y - ys[i + 1]).abs() / (1.0 + y.abs()));
                ys[i + 1] = y;
            }
            if !change.is_finite() {
                return None;
            }
            if change <= 1e-15 {
                break;
            }
        }
        Some(
            xs.into_iter()
                .zip(ys)
                .map(|(mut x, y)| {
                    x.push(y);
                    x
                })
                .collect(),
        )
    }

    /// Largest per-step mismatch `|F(z_i) - z_{i+1}|_∞`, relative to the
    /// size of `z_{i+1}`.
    pub fn orbit_residual(&self, orbit: &[Vec<f64>]) -> f64 {
        orbit
            .windows(2)
            .map(|w| match self.apply(&w[0]) {
                Ok(img) => inf_dist(&img, &w[1]) / (1.0 + inf_norm(&w[1])),
                Err(_) => f64::INFINITY,
            })
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WitnessBox {
    /// Centre of the unstable cube; the stable range is `[-half_height, half_height]`.
    pub centre: Vec<f64>,
    pub half_width: f64,
    pub half_height: f64,
}

impl WitnessBox {
    pub fn contains(&self, z: &[f64]) -> bool {
        let p = self.centre.len();
        let slack = 1e-12;
        z[p].abs() <= self.half_height * (1.0 + slack)
            && inf_dist(&z[..p], &self.centre) <= self.half_width * (1.0 + slack)
    }

    fn contains_x(&self, x: &[f64]) -> bool {
        inf_dist(x, &self.centre) <= self.half_width
    }

    pub fn overlaps(&self, other: &WitnessBox) -> bool {
        inf_dist(&self.centre, &other.centre) < self.half_width + other.half_width
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftWitness {
    /// `V_0` near the fixed point, `V_1` on the homoclinic orbit.
    pub boxes: [WitnessBox; 2],
    /// Return time.
    pub m: u32,
    /// Steps from `V_1` to the graft support.
    pub j0: u32,
    /// Iterations from `Λ` to the crossing with `Γ`.
    pub k: u32,
    /// Steps from the stable axis back to the boxes.
    pub tail: u32,
    pub depth: u32,
    /// Bit strings, one per depth `0..=depth`; bit `i` of depth `d` is set
    /// when the itinerary with binary code `i` (first symbol most
    /// significant) is realized.
    pub realized: Vec<String>,
    /// Smallest exit distance of a sampled face image from a target cube,
    /// in units of the cube half-width; above 1 means a clean crossing.
    pub crossing_margin: f64,
    pub max_step_residual: f64,
    pub shrink_steps: u32,
    pub crossing: IntersectionPoint,
}

impl ShiftWitness {
    pub fn words(&self) -> [Vec<Step>; 2] {
        words(self.m, self.j0, self.k, self.tail)
    }

    pub fn realized_count(&self, d: u32) -> usize {
        self.realized
            .get(d as usize)
            .map_or(0, |s| s.bytes().filter(|&b| b == b'1').count())
    }

    fn is_realized(&self, d: u32, idx: usize) -> bool {
        self.realized[d as usize].as_bytes()[idx] == b'1'
    }
}

fn words(m: u32, j0: u32, k: u32, tail: u32) -> [Vec<Step>; 2] {
    let mut w1 = vec![Step::Linear; j0 as usize];
    w1.push(Step::Graft);
    w1.extend(std::iter::repeat_n(Step::Linear, k as usize));
    w1.push(Step::Straighten);
    w1.extend(std::iter::repeat_n(Step::Linear, tail as usize));
    [vec![Step::Linear; m as usize], w1]
}

/// Symbols of itinerary `idx` at depth `d`, first symbol most significant.
pub fn itinerary(idx: usize, d: u32) -> Vec<u8> {
    (0..d).rev().map(|b| ((idx >> b) & 1) as u8).collect()
}

/// Uniform samples of the boundary of a box in `R^(p+1)`, face by face;
/// the flag marks exit faces (those bounding the unstable cube).
fn boundary_samples(b: &WitnessBox, total: usize) -> Vec<(Vec<f64>, bool)> {
    let p = b.centre.len();
    let faces = 2 * p + 2;
    let per_face = total.div_ceil(faces);
    let g = (per_face as f64).powf(1.0 / p as f64).ceil().max(2.0) as usize;
    let lo: Vec<f64> = b
        .centre
        .iter()
        .map(|c| c - b.half_width)
        .chain([-b.half_height])
        .collect();
    let hi: Vec<f64> = b
        .centre
        .iter()
        .map(|c| c + b.half_width)
        .chain([b.half_height])
        .collect();
    let mut out = Vec::new();
    for fixed in 0..=p {
        for side in [0, 1] {
            let free: Vec<usize> = (0..=p).filter(|&i| i != fixed).collect();
            for idx in 0..g.pow(free.len() as u32) {
                let mut z = vec![0.0; p + 1];
                z[fixed] = if side == 0 { lo[fixed] } else { hi[fixed] };
                let mut rem = idx;
                for &i in &free {
                    let s = rem % g;
                    rem /= g;
                    z[i] = lo[i] + (hi[i] - lo[i]) * s as f64 / (g - 1) as f64;
                }
                out.push((z, fixed < p));
            }
        }
    }
    out
}

fn run_word(gmap: &GlobalTestMap, word: &[Step], z: &[f64]) -> Result<Vec<f64>, HorseshoeError> {
    let p = z.len() - 1;
    let mut x = z[..p].to_vec();
    let mut y = z[p];
    for &s in word {
        let (nx, ny) = gmap.step_forward(s, &x, y)?;
        x = nx;
        y = ny;
    }
    x.push(y);
    Ok(x)
}

struct Attempt {
    boxes: [WitnessBox; 2],
    m: u32,
    tail: u32,
    margin: f64,
}

/// Failure description or the crossing margin for one box layout.
fn check_layout(
    gmap: &GlobalTestMap,
    boxes: &[WitnessBox; 2],
    m: u32,
    j0: u32,
    k: u32,
    tail: u32,
) -> Result<f64, String> {
    let ws = words(m, j0, k, tail);
    let mut margin = f64::INFINITY;
    for (i, b) in boxes.iter().enumerate() {
        for (z, exit) in boundary_samples(b, EDGE_SAMPLES) {
            let img = run_word(gmap, &ws[i], &z).map_err(|e| format!("box {i}: {e}"))?;
            let p = b.centre.len();
            if !(img[p].abs() < boxes[0].half_height) {
                return Err(format!("box {i}: stable coordinate {} not contracted", img[p]));
            }
            if exit {
                for t in boxes {
                    let d = inf_dist(&img[..p], &t.centre) / t.half_width;
                    if d <= 1.0 {
                        return Err(format!("box {i}: exit face lands inside a target"));
                    }
                    margin = margin.min(d);
                }
            }
        }
        // pullbacks of target points: land in the box and follow the
        // global map with the intended branches
        for t in boxes {
            for y0 in [-b.half_height, 0.0, b.half_height] {
                let orbit = gmap
                    .sweep(&ws[i], y0, &t.centre)
                    .ok_or_else(|| format!("box {i}: pullback sweep diverged"))?;
                if !b.contains_x(&orbit[0][..b.centre.len()]) {
                    return Err(format!("box {i}: pullback of a target misses the box"));
                }
                let res = gmap.orbit_residual(&orbit);
                if !(res <= STEP_TOL) {
                    return Err(format!("box {i}: branch mismatch, residual {res:e}"));
                }
            }
        }
    }
    Ok(margin)
}

fn find_layout(
    gmap: &GlobalTestMap,
    crossing: &IntersectionPoint,
    j0: u32,
) -> Result<(Attempt, u32), HorseshoeError> {
    let map = gmap.local();
    let p = map.p();
    let alpha = map.alpha();
    let k = crossing.k;
    // V_1 sits j0 steps before the graft support on the homoclinic orbit
    let mut c = gmap
        .graft_support
        .centre
        .iter()
        .zip(&crossing.t)
        .map(|(a, t)| a + t)
        .collect::<Vec<_>>();
    for _ in 0..j0 {
        c = map.solve_expansion_power(1, &c);
    }
    let scale = inf_norm(&c);
    let mut w = 0.1 * scale;
    let mut h = w.min(gmap.graft_support.half_v);
    let mut last_err = String::new();
    let mut shrink = 0;
    while w >= SIZE_FLOOR && h >= SIZE_FLOOR {
        let boxes = [
            WitnessBox {
                centre: vec![0.0; p],
                half_width: w,
                half_height: h,
            },
            WitnessBox {
                centre: c.clone(),
                half_width: w,
                half_height: h,
            },
        ];
        // smallest tail bringing the stable coordinate back inside
        let reach = gmap.graph().b().abs() + crossing.point[p].abs() + gmap.straighten_support.half_u + h;
        let mut tail = 0u32;
        while alpha.powi(tail as i32) * reach > 0.5 * h && tail < MAX_TAIL {
            tail += 1;
        }
        let mut ok = None;
        for extra in 0..40 {
            let t = tail + extra;
            let m = j0 + 1 + k + 1 + t;
            match check_layout(gmap, &boxes, m, j0, k, t) {
                Ok(margin) => {
                    ok = Some((m, t, margin));
                    break;
                }
                Err(e) => {
                    let exit_problem = e.contains("exit face");
                    last_err = format!("w = {w:e}, h = {h:e}, tail = {t}: {e}");
                    if !exit_problem {
                        break;
                    }
                }
            }
        }
        if let Some((m, tail, margin)) = ok {
            return Ok((
                Attempt {
                    boxes,
                    m,
                    tail,
                    margin,
                },
                shrink,
            ));
        }
        w *= 0.5;
        h *= 0.5;
        shrink += 1;
    }
    Err(HorseshoeError::NoMarkovStructure(format!(
        "boxes shrank below {SIZE_FLOOR:e}; last failure: {last_err}"
    )))
}

/// Realizes one itinerary: the orbit visits `V_{s_j}` at times `j m` and ends
/// at the centre of `V_0`. Returns the orbit when every step matches the
/// global map and every visit lies in its box.
pub fn realize_itinerary(
    gmap: &GlobalTestMap,
    w: &ShiftWitness,
    symbols: &[u8],
) -> Option<(Vec<Vec<f64>>, f64)> {
    let ws = w.words();
    let steps: Vec<Step> = symbols
        .iter()
        .flat_map(|&s| ws[s as usize].iter().copied())
        .collect();
    let p = w.boxes[0].centre.len();
    let orbit = gmap.sweep(&steps, 0.0, &vec![0.0; p])?;
    for (j, &s) in symbols.iter().enumerate() {
        if !w.boxes[s as usize].contains(&orbit[j * w.m as usize]) {
            return None;
        }
    }
    if !w.boxes[0].contains(orbit.last()?) {
        return None;
    }
    let res = gmap.orbit_residual(&orbit);
    (res <= STEP_TOL).then_some((orbit, res))
}

pub fn build_horseshoe_witness(
    gmap: &GlobalTestMap,
    crossing: &IntersectionPoint,
    depth: u32,
) -> Result<ShiftWitness, HorseshoeError> {
    if depth > MAX_DEPTH {
        return Err(HorseshoeError::DepthTooLarge { depth });
    }
    if !is_transverse(&gmap.setup, crossing) {
        return Err(HorseshoeError::NoTransverseCrossing(format!(
            "crossing at k = {}, tau = {} is tangential",
            crossing.k, crossing.tau
        )));
    }
    if !gmap.straighten_support.contains(&crossing.point) {
        return Err(HorseshoeError::NoMarkovStructure(format!(
            "crossing {:?} lies outside the straightening support",
            crossing.point
        )));
    }
    let j0 = 1;
    let (att, shrink) = find_layout(gmap, crossing, j0)?;
    let mut w = ShiftWitness {
        boxes: att.boxes,
        m: att.m,
        j0,
        k: crossing.k,
        tail: att.tail,
        depth,
        realized: Vec::new(),
        crossing_margin: att.margin,
        max_step_residual: 0.0,
        shrink_steps: shrink,
        crossing: crossing.clone(),
    };
    let mut realized = vec!["1".to_string()];
    let mut worst: f64 = 0.0;
    for d in 1..=depth {
        let bits: String = (0..1usize << d)
            .map(|idx| match realize_itinerary(gmap, &w, &itinerary(idx, d)) {
                Some((_, res)) => {
                    worst = worst.max(res);
                    '1'
                }
                None => '0',
            })
            .collect();
        realized.push(bits);
    }
    w.realized = realized;
    w.max_step_residual = worst;
    Ok(w)
}

/// `realized(d)` projects onto `realized(d - 1)` by dropping the last symbol.
pub fn prefix_closed(w: &ShiftWitness) -> bool {
    (1..=w.depth).all(|d| {
        let mut proj = vec![false; 1 << (d - 1)];
        for idx in 0..1usize << d {
            if w.is_realized(d, idx) {
                proj[idx >> 1] = true;
            }
        }
        proj.iter()
            .enumerate()
            .all(|(i, &b)| b == w.is_realized(d - 1, i))
    })
}

/// Fraction of the `2^d` itineraries realized at depth `d`.
pub fn verify_itineraries(w: &ShiftWitness, d: u32) -> Result<f64, HorseshoeError> {
    if w.boxes[0].overlaps(&w.boxes[1]) {
        return Err(HorseshoeError::InvariantViolation(
            "boxes V_0 and V_1 overlap".into(),
        ));
    }
    if d > w.depth || w.realized.len() <= d as usize {
        return Err(HorseshoeError::DepthTooLarge { depth: d });
    }
    Ok(w.realized_count(d) as f64 / (1u64 << d) as f64)
}

/// Central-difference Jacobian determinant of the global map at `z`.
pub fn reinjection_determinant(gmap: &GlobalTestMap, z: &[f64], h: f64) -> f64 {
    let n = z.len();
    let step = gmap.branch_at(z);
    let p = n - 1;
    let f = |w: &[f64]| -> Vec<f64> {
        let (mut x, y) = gmap
            .step_forward(step, &w[..p], w[p])
            .unwrap_or((vec![f64::NAN; p], f64::NAN));
        x.push(y);
        x
    };
    let mut jac = nalgebra::DMatrix::zeros(n, n);
    for c in 0..n {
        let mut zp = z.to_vec();
        let mut zm = z.to_vec();
        zp[c] += h;
        zm[c] -= h;
        let col = DVector::from_vec(f(&zp)) - DVector::from_vec(f(&zm));
        jac.set_column(c, &(col / (2.0 * h)));
    }
    jac.determinant()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::func::{Field, Polynomial};
    use crate::normal_form::{validate_map, MapSpec};

    fn g1(l: u32) -> CrossingSetup {
        let map = validate_map(&MapSpec::diagonal(&[2.0], 0.5)).unwrap();
        let graph = GraphPortion::new(1.0, Field::zero(1), vec![(-1.5, 1.5)], None).unwrap();
        let curve = TangentCurve::new(
            l,
            vec![1.0],
            vec![Field::Poly(Polynomial::univariate(&[0.0]))],
            1.0,
            1.0,
        )
        .unwrap();
        CrossingSetup::new(map, graph, curve).unwrap()
    }

    #[test]
    fn global_map_is_local_form_off_support() {
        let g = build_global_test_map(&g1(3), 40).unwrap();
        assert_eq!(g.spectrum(), (vec![2.0], 0.5));
        let z = [0.1, 0.3];
        assert_eq!(g.apply(&z).unwrap(), vec![0.2, 0.15]);
        assert!(g.reinjection_smooth());
    }

    #[test]
    fn unstable_axis_grafts_onto_lambda() {
        let g = build_global_test_map(&g1(3), 40).unwrap();
        let z = g.apply(&[-1.0 + 0.01, 0.0]).unwrap();
        assert!((z[0] - 0.01).abs() < 1e-15 && (z[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn witness_depth_three() {
        let g = build_global_test_map(&g1(3), 40).unwrap();
        let w = build_horseshoe_witness(&g, g.crossing(), 3).unwrap();
        assert_eq!(verify_itineraries(&w, 0).unwrap(), 1.0);
        assert_eq!(verify_itineraries(&w, 1).unwrap(), 1.0);
        assert_eq!(verify_itineraries(&w, 3).unwrap(), 1.0);
        assert!(prefix_closed(&w));
    }

    #[test]
    fn tangential_input_rejected() {
        let g = build_global_test_map(&g1(3), 40).unwrap();
        let mut ip = g.crossing().clone();
        ip.tau = 0.0;
        assert!(matches!(
            build_horseshoe_witness(&g, &ip, 2),
            Err(HorseshoeError::NoTransverseCrossing(_))
        ));
    }

    #[test]
    fn overlapping_boxes_violate_invariant() {
        let g = build_global_test_map(&g1(3), 40).unwrap();
        let mut w = build_horseshoe_witness(&g, g.crossing(), 1).unwrap();
        w.boxes[1] = w.boxes[0].clone();
        assert!(matches!(
            verify_itineraries(&w, 1),
            Err(HorseshoeError::InvariantViolation(_))
        ));
    }

    #[test]
    fn one_sided_rejected() {
        assert!(matches!(
            build_global_test_map(&g1(2), 40),
            Err(HorseshoeError::Transversality(
                TransversalityError::Sidedness { l: 2 }
            ))
        ));
    }
}
