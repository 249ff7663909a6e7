//! Area-preserving twist maps of the annulus `S^1 x (a, b)` and their
//! resonant periodic orbits.

use std::f64::consts::PI;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::parallel;
use crate::transport::TrigPoly;

const TWO_PI: f64 = 2.0 * PI;
pub const NEWTON_TOL: f64 = 1e-12;
pub const NEWTON_MAX_ITER: usize = 60;
pub const MAX_HALVINGS: usize = 30;
pub const DEDUP_TOL: f64 = 1e-8;
pub const TRACE_TOL: f64 = 1e-6;

/// Rotation profile `Phi(r) = sum_i coeffs[i] r^i`, in revolutions per return.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Profile {
    pub coeffs: Vec<f64>,
}

impl Profile {
    /// `Phi(r) = r / (2 pi)`
    pub fn standard() -> Self {
        Self { coeffs: vec![0.0, 1.0 / TWO_PI] }
    }

    pub fn eval(&self, r: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, c| acc * r + c)
    }

    pub fn derivative(&self, r: f64) -> f64 {
        self.coeffs.iter().enumerate().skip(1).rev().fold(0.0, |acc, (i, c)| acc * r + i as f64 * c)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TwistSystem {
    pub profile: Profile,
    /// Open working window `(a, b)` for `r`
    pub window: (f64, f64),
    pub delta: f64,
    pub shape: TrigPoly,
}

impl TwistSystem {
    pub fn new(profile: Profile, window: (f64, f64), delta: f64, shape: TrigPoly) -> Result<Self> {
        let sys = Self { profile, window, delta, shape };
        sys.validate()?;
        Ok(sys)
    }

    /// `Phi(r) = r / (2 pi)` perturbed by `delta sin(m theta)`.
    pub fn standard(window: (f64, f64), delta: f64, harmonic: u32) -> Result<Self> {
        Self::new(Profile::standard(), window, delta, TrigPoly::sin(harmonic, 1.0))
    }

    pub fn validate(&self) -> Result<()> {
        let (a, b) = self.window;
        if !(a < b) || !a.is_finite() || !b.is_finite() {
            return Err(Error::InvalidArgument(format!("window ({a}, {b}) is not an interval")));
        }
        if !(self.delta >= 0.0) {
            return Err(Error::InvalidArgument(format!("delta must be non-negative, got {}", self.delta)));
        }
        if !self.shape.has_zero_mean() {
            return Err(Error::InvalidArgument("perturbation shape must have zero mean".into()));
        }
        let samples = 1024;
        let first = self.profile.derivative(a);
        for i in 0..=samples {
            let r = a + (b - a) * i as f64 / samples as f64;
            let d = self.profile.derivative(r);
            if d == 0.0 || d.signum() != first.signum() {
                return Err(Error::InvalidArgument(format!("twist condition fails near r = {r}")));
            }
        }
        Ok(())
    }

    fn inside(&self, r: f64) -> bool {
        r > self.window.0 && r < self.window.1
    }

    /// One lifted step: `theta` is not reduced.
    fn step(&self, theta: f64, r: f64) -> Result<(f64, f64)> {
        if !self.inside(r) {
            return Err(Error::WindowExit { r });
        }
        let r1 = r + self.delta * self.shape.eval(theta);
        if !self.inside(r1) {
            return Err(Error::WindowExit { r: r1 });
        }
        Ok((theta + TWO_PI * self.profile.eval(r1), r1))
    }

    fn step_jacobian(&self, theta: f64, r1: f64) -> [[f64; 2]; 2] {
        let s = TWO_PI * self.profile.derivative(r1);
        let dg = self.delta * self.shape.derivative(theta);
        [[1.0 + s * dg, s], [dg, 1.0]]
    }

    /// Lifted `q`-th iterate and its Jacobian.
    fn iterate(&self, x: [f64; 2], q: u32) -> Result<([f64; 2], [[f64; 2]; 2])> {
        let (mut th, mut r) = (x[0], x[1]);
        let mut m = [[1.0, 0.0], [0.0, 1.0]];
        for _ in 0..q {
            let (th1, r1) = self.step(th, r)?;
            m = matmul(&self.step_jacobian(th, r1), &m);
            th = th1;
            r = r1;
        }
        Ok(([th, r], m))
    }

    /// Radius with `Phi(r) = p / q` inside the window, if any.
    pub fn resonant_radius(&self, p: i64, q: i64) -> Option<f64> {
        let target = p as f64 / q as f64;
        let (a, b) = self.window;
        let f = |r: f64| self.profile.eval(r) - target;
        let (mut lo, mut hi) = (a, b);
        if f(lo) * f(hi) > 0.0 {
            return None;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(lo) * f(mid) <= 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let r = 0.5 * (lo + hi);
        self.inside(r).then_some(r)
    }
}

fn matmul(a: &[[f64; 2]; 2], b: &[[f64; 2]; 2]) -> [[f64; 2]; 2] {
    [
        [a[0][0] * b[0][0] + a[0][1] * b[1][0], a[0][0] * b[0][1] + a[0][1] * b[1][1]],
        [a[1][0] * b[0][0] + a[1][1] * b[1][0], a[1][0] * b[0][1] + a[1][1] * b[1][1]],
    ]
}

/// `(theta + 2 pi Phi(r'), r')` with `r' = r + delta g(theta)`, `theta'` reduced mod `2 pi`.
pub fn twist_apply(sys: &TwistSystem, x: (f64, f64)) -> Result<(f64, f64)> {
    let (th, r) = sys.step(x.0, x.1)?;
    Ok((th.rem_euclid(TWO_PI), r))
}

/// Jacobian in `(theta, r)` order.
pub fn twist_jacobian(sys: &TwistSystem, x: (f64, f64)) -> Result<[[f64; 2]; 2]> {
    let (_, r1) = sys.step(x.0, x.1)?;
    Ok(sys.step_jacobian(x.0, r1))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum OrbitClass {
    Hyperbolic,
    Elliptic,
    Parabolic,
}

impl OrbitClass {
    pub fn from_trace(trace: f64) -> Self {
        if trace.abs() > 2.0 + TRACE_TOL {
            OrbitClass::Hyperbolic
        } else if trace.abs() < 2.0 - TRACE_TOL {
            OrbitClass::Elliptic
        } else {
            OrbitClass::Parabolic
        }
    }
}

/// A fixed point of `Pi^q` (the first entry of `points`) with its cycle.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PeriodicOrbit {
    /// `[theta, r]` pairs, `theta` in `[0, 2 pi)`
    pub points: Vec<[f64; 2]>,
    pub p: i64,
    pub q: u32,
    pub class: OrbitClass,
    pub trace: f64,
    /// `|Pi^q(x) - x|` at the anchor point, `theta` lifted
    pub residual: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OrbitSearch {
    pub resonant_radius: Option<f64>,
    pub orbits: Vec<PeriodicOrbit>,
    /// Number of distinct cycles among the orbits
    pub n_cycles: usize,
    pub n_failed: usize,
}

fn residual(sys: &TwistSystem, x: [f64; 2], p: i64, q: u32) -> Result<([f64; 2], [[f64; 2]; 2])> {
    let (y, m) = sys.iterate(x, q)?;
    Ok(([y[0] - x[0] - TWO_PI * p as f64, y[1] - x[1]], m))
}

fn norm(v: [f64; 2]) -> f64 {
    v[0].hypot(v[1])
}

/// Damped Newton on `Pi^q(x) - x - (2 pi p, 0)`.
fn newton(sys: &TwistSystem, x0: [f64; 2], p: i64, q: u32) -> Option<[f64; 2]> {
    let mut x = x0;
    let (mut f, mut m) = residual(sys, x, p, q).ok()?;
    for _ in 0..NEWTON_MAX_ITER {
        if norm(f) <= NEWTON_TOL {
            return Some(x);
        }
        let a = [[m[0][0] - 1.0, m[0][1]], [m[1][0], m[1][1] - 1.0]];
        let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
        if det == 0.0 || !det.is_finite() {
            return None;
        }
        let dx = [(-f[0] * a[1][1] + f[1] * a[0][1]) / det, (-f[1] * a[0][0] + f[0] * a[1][0]) / det];
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..=MAX_HALVINGS {
            let trial = [x[0] + lambda * dx[0], x[1] + lambda * dx[1]];
            if let Ok((ft, mt)) = residual(sys, trial, p, q) {
                if norm(ft) < norm(f) {
                    x = trial;
                    f = ft;
                    m = mt;
                    accepted = true;
                    break;
                }
            }
            lambda *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    (norm(f) <= NEWTON_TOL).then_some(x)
}

fn angle_gap(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(TWO_PI);
    d.min(TWO_PI - d)
}

fn close(a: &[f64; 2], b: &[f64; 2], tol: f64) -> bool {
    angle_gap(a[0], b[0]) <= tol && (a[1] - b[1]).abs() <= tol
}

/// Seeds: `n_seeds` angles spread over three rings at `r_c` and
/// `r_c +- delta max|g| / 2`, or over the whole window when no resonant
/// circle lies inside it.
fn seeds(sys: &TwistSystem, r_c: Option<f64>, n_seeds: usize) -> Vec<[f64; 2]> {
    let (a, b) = sys.window;
    let amp = sys.shape.terms.iter().map(|t| t.cos.abs() + t.sin.abs()).sum::<f64>() * sys.delta;
    (0..n_seeds)
        .map(|j| {
            let theta = TWO_PI * (j as f64 + 0.25) / n_seeds as f64;
            let r = match r_c {
                Some(rc) => {
                    let offsets = [0.0, 0.5, -0.5];
                    (rc + offsets[j % 3] * amp).clamp(a + 0.01 * (b - a), b - 0.01 * (b - a))
                }
                None => a + (b - a) * ((j % 7) as f64 + 0.5) / 7.0,
            };
            [theta, r]
        })
        .collect()
}

/// Fixed points of `Pi^q` with rotation `p / q`, one [`PeriodicOrbit`] per
/// distinct point, sorted by `(r, theta)`.
pub fn find_periodic_orbits(sys: &TwistSystem, p: i64, q: u32, n_seeds: usize) -> Result<OrbitSearch> {
    sys.validate()?;
    if q == 0 {
        return Err(Error::InvalidArgument("period q must be positive".into()));
    }
    if sys.delta == 0.0 {
        return Err(Error::DegenerateCircle);
    }
    let r_c = sys.resonant_radius(p, q as i64);
    let starts = seeds(sys, r_c, n_seeds);
    let results = parallel::map_slice(&starts, |x0| newton(sys, *x0, p, q));
    let n_failed = results.iter().filter(|r| r.is_none()).count();
    let mut found: Vec<[f64; 2]> = results.into_iter().flatten().map(|x| [x[0].rem_euclid(TWO_PI), x[1]]).collect();
    found.sort_by(|a, b| a[1].total_cmp(&b[1]).then(a[0].total_cmp(&b[0])));

    let mut distinct: Vec<[f64; 2]> = Vec::new();
    for x in found {
        if !distinct.iter().any(|d| close(d, &x, DEDUP_TOL)) {
            distinct.push(x);
        }
    }

    let mut orbits = Vec::with_capacity(distinct.len());
    for x in &distinct {
        let (f, m) = residual(sys, *x, p, q)?;
        let trace = m[0][0] + m[1][1];
        let mut points = vec![*x];
        let mut cur = (x[0], x[1]);
        for _ in 1..q {
            cur = twist_apply(sys, cur)?;
            points.push([cur.0, cur.1]);
        }
        orbits.push(PeriodicOrbit { points, p, q, class: OrbitClass::from_trace(trace), trace, residual: norm(f) });
    }

    let mut cycle_of: Vec<Option<usize>> = vec![None; orbits.len()];
    let mut n_cycles = 0;
    for i in 0..orbits.len() {
        if cycle_of[i].is_some() {
            continue;
        }
        for j in i..orbits.len() {
            if cycle_of[j].is_none() && orbits[i].points.iter().any(|pt| close(pt, &orbits[j].points[0], 1e-7)) {
                cycle_of[j] = Some(n_cycles);
            }
        }
        n_cycles += 1;
    }

    Ok(OrbitSearch { resonant_radius: r_c, orbits, n_cycles, n_failed })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct OrbitCounts {
    pub n_hyperbolic: usize,
    pub n_elliptic: usize,
    pub n_parabolic: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BirkhoffReport {
    pub p: i64,
    pub q: u32,
    pub delta: f64,
    pub resonant_radius: Option<f64>,
    pub orbits: Vec<PeriodicOrbit>,
    pub counts: OrbitCounts,
    /// Max `|r - r_c|` over all orbit points
    pub max_dist: f64,
    pub max_residual: f64,
    pub n_cycles: usize,
    pub failed_seeds: usize,
    /// `n_hyperbolic >= q`
    pub verdict: bool,
}

pub fn birkhoff_report(sys: &TwistSystem, p: i64, q: u32, n_seeds: usize) -> Result<BirkhoffReport> {
    let search = find_periodic_orbits(sys, p, q, n_seeds)?;
    let mut counts = OrbitCounts::default();
    for o in &search.orbits {
        match o.class {
            OrbitClass::Hyperbolic => counts.n_hyperbolic += 1,
            OrbitClass::Elliptic => counts.n_elliptic += 1,
            OrbitClass::Parabolic => counts.n_parabolic += 1,
        }
    }
    let max_dist = match search.resonant_radius {
        Some(rc) => search.orbits.iter().flat_map(|o| o.points.iter()).map(|pt| (pt[1] - rc).abs()).fold(0.0, f64::max),
        None => f64::NAN,
    };
    let max_residual = search.orbits.iter().map(|o| o.residual).fold(0.0, f64::max);
    Ok(BirkhoffReport {
        p,
        q,
        delta: sys.delta,
        resonant_radius: search.resonant_radius,
        verdict: counts.n_hyperbolic >= q as usize,
        orbits: search.orbits,
        counts,
        max_dist,
        max_residual,
        n_cycles: search.n_cycles,
        failed_seeds: search.n_failed,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub delta: f64,
    pub n_hyperbolic: usize,
    pub n_elliptic: usize,
    pub max_dist: f64,
}

/// Reports for each `delta`, the rest of `sys` fixed.
pub fn delta_sweep(sys: &TwistSystem, deltas: &[f64], p: i64, q: u32, n_seeds: usize) -> Result<Vec<SweepRow>> {
    deltas
        .iter()
        .map(|&delta| {
            let s = TwistSystem { delta, ..sys.clone() };
            let r = birkhoff_report(&s, p, q, n_seeds)?;
            Ok(SweepRow {
                delta,
                n_hyperbolic: r.counts.n_hyperbolic,
                n_elliptic: r.counts.n_elliptic,
                max_dist: r.max_dist,
            })
        })
        .collect()
}

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], mut out: W) -> std::io::Result<()> {
    writeln!(out, "delta,n_hyperbolic,n_elliptic,max_dist")?;
    for r in rows {
        writeln!(out, "{:.16e},{},{},{:.16e}", r.delta, r.n_hyperbolic, r.n_elliptic, r.max_dist)?;
    }
    Ok(())
}

/// `max_dist / delta` over a sweep, the constant in `|r - r_c| <= C delta`.
pub fn closeness_constant(rows: &[SweepRow]) -> f64 {
    rows.iter().filter(|r| r.delta > 0.0).map(|r| r.max_dist / r.delta).fold(0.0, f64::max)
}
