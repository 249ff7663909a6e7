//! Trajectories, volume-preserving maps of the torus and the pushforward of
//! fields along them.

use std::f64::consts::PI;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::calculus::require_divergence_free;
use crate::error::{Error, Result};
use crate::field::{
    from_grid, node_position, FieldEvaluator, GridField, GridFlags, Mat3, SpectralField, Vec3,
};
use crate::parallel;

/// Relative mean drift below which a pushforward mean snaps back to the input mean.
pub const MEAN_SNAP_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrigTerm {
    pub harmonic: u32,
    #[serde(default)]
    pub cos: f64,
    #[serde(default)]
    pub sin: f64,
}

/// `constant + sum_m (cos_m cos(m s) + sin_m sin(m s))`
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrigPoly {
    #[serde(default)]
    pub constant: f64,
    #[serde(default)]
    pub terms: Vec<TrigTerm>,
}

impl TrigPoly {
    pub fn constant(c: f64) -> Self {
        Self { constant: c, terms: Vec::new() }
    }

    pub fn sin(harmonic: u32, amp: f64) -> Self {
        Self { constant: 0.0, terms: vec![TrigTerm { harmonic, cos: 0.0, sin: amp }] }
    }

    pub fn zero() -> Self {
        Self::default()
    }

    pub fn eval(&self, s: f64) -> f64 {
        self.terms.iter().fold(self.constant, |acc, t| {
            let (sn, cs) = (t.harmonic as f64 * s).sin_cos();
            acc + t.cos * cs + t.sin * sn
        })
    }

    pub fn derivative(&self, s: f64) -> f64 {
        self.terms.iter().fold(0.0, |acc, t| {
            let m = t.harmonic as f64;
            let (sn, cs) = (m * s).sin_cos();
            acc + m * (t.sin * cs - t.cos * sn)
        })
    }

    /// Highest harmonic present.
    pub fn band(&self) -> u32 {
        self.terms.iter().map(|t| t.harmonic).max().unwrap_or(0)
    }

    pub fn has_zero_mean(&self) -> bool {
        self.constant == 0.0 && self.terms.iter().all(|t| t.harmonic > 0 || t.cos == 0.0)
    }
}

/// Time-`t` flow of a divergence-free generator, integrated with RK4.
#[derive(Clone, Debug)]
pub struct FlowMap {
    generator: SpectralField,
    evaluator: FieldEvaluator,
    pub t: f64,
    pub dt: f64,
}

impl FlowMap {
    pub fn generator(&self) -> &SpectralField {
        &self.generator
    }
}

/// A volume-preserving diffeomorphism of the torus.
#[derive(Clone, Debug)]
pub enum VolumeDiffeo {
    /// `x + g(x_a) e_b + h(x_a) e_c` with `(a, b, c)` a cyclic permutation
    /// of the axes and `axis = a` counted from 1.
    Shear { axis: usize, g: TrigPoly, h: TrigPoly },
    FlowMap(FlowMap),
    /// Applied in order: the first map acts first.
    Composite(Vec<VolumeDiffeo>),
}

impl VolumeDiffeo {
    pub fn shear(axis: usize, g: TrigPoly, h: TrigPoly) -> Result<Self> {
        if !(1..=3).contains(&axis) {
            return Err(Error::InvalidArgument(format!("shear axis must be 1, 2 or 3, got {axis}")));
        }
        Ok(VolumeDiffeo::Shear { axis, g, h })
    }

    pub fn flow_map(generator: SpectralField, t: f64, dt: f64) -> Result<Self> {
        require_divergence_free(&generator)?;
        if !(dt > 0.0) || !t.is_finite() {
            return Err(Error::InvalidArgument(format!("flow map needs dt > 0 and finite t (t={t}, dt={dt})")));
        }
        let evaluator = generator.evaluator();
        Ok(VolumeDiffeo::FlowMap(FlowMap { generator, evaluator, t, dt }))
    }

    pub fn identity() -> Self {
        VolumeDiffeo::Composite(Vec::new())
    }

    /// Rigid translation by `d`, built from two constant shears.
    pub fn translation(d: Vec3) -> Self {
        VolumeDiffeo::Composite(vec![
            VolumeDiffeo::Shear { axis: 3, g: TrigPoly::constant(d[0]), h: TrigPoly::constant(d[1]) },
            VolumeDiffeo::Shear { axis: 1, g: TrigPoly::zero(), h: TrigPoly::constant(d[2]) },
        ])
    }

    /// `other` after `self`.
    pub fn then(self, other: VolumeDiffeo) -> Self {
        VolumeDiffeo::Composite(vec![self, other])
    }

    /// True for an empty composite, possibly nested.
    pub fn is_identity(&self) -> bool {
        match self {
            VolumeDiffeo::Composite(parts) => parts.iter().all(|p| p.is_identity()),
            _ => false,
        }
    }

    /// True when the map contains a numerically integrated flow.
    pub fn has_flow(&self) -> bool {
        match self {
            VolumeDiffeo::Shear { .. } => false,
            VolumeDiffeo::FlowMap(_) => true,
            VolumeDiffeo::Composite(parts) => parts.iter().any(|p| p.has_flow()),
        }
    }
}

fn shear_axes(axis: usize) -> (usize, usize, usize) {
    let a = axis - 1;
    (a, (a + 1) % 3, (a + 2) % 3)
}

fn rk4_point(ev: &FieldEvaluator, x0: Vec3, t: f64, dt: f64, mut visit: impl FnMut(f64, &Vec3)) -> Vec3 {
    let steps = (t.abs() / dt).ceil() as usize;
    let mut x = x0;
    visit(0.0, &x);
    if steps == 0 {
        return x;
    }
    let h = t / steps as f64;
    for s in 0..steps {
        let k1 = ev.value(&x);
        let k2 = ev.value(&(x + k1 * (0.5 * h)));
        let k3 = ev.value(&(x + k2 * (0.5 * h)));
        let k4 = ev.value(&(x + k3 * h));
        x += (k1 + (k2 + k3) * 2.0 + k4) * (h / 6.0);
        visit((s + 1) as f64 * h, &x);
    }
    x
}

/// RK4 on `x' = v(x)`, `M' = Dv(x) M` from `M(0) = I`. Negative `t`
/// integrates backward.
fn rk4_variational(ev: &FieldEvaluator, x0: Vec3, t: f64, dt: f64) -> (Vec3, Mat3) {
    let steps = (t.abs() / dt).ceil() as usize;
    let mut x = x0;
    let mut m = Mat3::identity();
    if steps == 0 {
        return (x, m);
    }
    let h = t / steps as f64;
    for _ in 0..steps {
        let (v1, g1) = ev.value_and_gradient(&x);
        let m1 = g1 * m;
        let (v2, g2) = ev.value_and_gradient(&(x + v1 * (0.5 * h)));
        let m2 = g2 * (m + m1 * (0.5 * h));
        let (v3, g3) = ev.value_and_gradient(&(x + v2 * (0.5 * h)));
        let m3 = g3 * (m + m2 * (0.5 * h));
        let (v4, g4) = ev.value_and_gradient(&(x + v3 * h));
        let m4 = g4 * (m + m3 * h);
        x += (v1 + (v2 + v3) * 2.0 + v4) * (h / 6.0);
        m += (m1 + (m2 + m3) * 2.0 + m4) * (h / 6.0);
    }
    (x, m)
}

/// A sampled path in the universal cover `R^3`.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub lift: Vec<Vec3>,
}

impl Trajectory {
    pub fn endpoint(&self) -> Vec3 {
        *self.lift.last().expect("trajectory has at least its start point")
    }

    /// `t,x1,x2,x3` rows with 17 significant digits, LF line endings.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "t,x1,x2,x3")?;
        for (t, x) in self.times.iter().zip(&self.lift) {
            writeln!(out, "{:.16e},{:.16e},{:.16e},{:.16e}", t, x[0], x[1], x[2])?;
        }
        Ok(())
    }
}

/// Integrates `x' = v(x)` from `x0` for time `t` with classical RK4.
pub fn flow_point(v: &SpectralField, x0: Vec3, t: f64, dt: f64) -> Trajectory {
    assert!(dt > 0.0, "dt must be positive");
    let ev = v.evaluator();
    let mut times = Vec::new();
    let mut lift = Vec::new();
    rk4_point(&ev, x0, t, dt, |s, x| {
        times.push(s);
        lift.push(*x);
    });
    Trajectory { times, lift }
}

pub fn apply_diffeo(phi: &VolumeDiffeo, x: Vec3) -> Vec3 {
    match phi {
        VolumeDiffeo::Shear { axis, g, h } => {
            let (a, b, c) = shear_axes(*axis);
            let mut y = x;
            y[b] += g.eval(x[a]);
            y[c] += h.eval(x[a]);
            y
        }
        VolumeDiffeo::FlowMap(f) => rk4_point(&f.evaluator, x, f.t, f.dt, |_, _| {}),
        VolumeDiffeo::Composite(parts) => parts.iter().fold(x, |p, m| apply_diffeo(m, p)),
    }
}

pub fn apply_inverse(phi: &VolumeDiffeo, y: Vec3) -> Vec3 {
    match phi {
        VolumeDiffeo::Shear { axis, g, h } => {
            let (a, b, c) = shear_axes(*axis);
            let mut x = y;
            x[b] -= g.eval(y[a]);
            x[c] -= h.eval(y[a]);
            x
        }
        VolumeDiffeo::FlowMap(f) => rk4_point(&f.evaluator, y, -f.t, f.dt, |_, _| {}),
        VolumeDiffeo::Composite(parts) => parts.iter().rev().fold(y, |p, m| apply_inverse(m, p)),
    }
}

fn shear_jacobian(axis: usize, g: &TrigPoly, h: &TrigPoly, x: &Vec3) -> Mat3 {
    let (a, b, c) = shear_axes(axis);
    let mut m = Mat3::identity();
    m[(b, a)] += g.derivative(x[a]);
    m[(c, a)] += h.derivative(x[a]);
    m
}

/// `D phi(x)`.
pub fn diffeo_jacobian(phi: &VolumeDiffeo, x: Vec3) -> Mat3 {
    match phi {
        VolumeDiffeo::Shear { axis, g, h } => shear_jacobian(*axis, g, h, &x),
        VolumeDiffeo::FlowMap(f) => rk4_variational(&f.evaluator, x, f.t, f.dt).1,
        VolumeDiffeo::Composite(parts) => {
            let mut p = x;
            let mut m = Mat3::identity();
            for part in parts {
                m = diffeo_jacobian(part, p) * m;
                p = apply_diffeo(part, p);
            }
            m
        }
    }
}

/// `(phi^-1(y), D phi(phi^-1(y)))`.
pub fn inverse_with_jacobian(phi: &VolumeDiffeo, y: Vec3) -> (Vec3, Mat3) {
    match phi {
        VolumeDiffeo::Shear { axis, g, h } => {
            let x = apply_inverse(phi, y);
            (x, shear_jacobian(*axis, g, h, &x))
        }
        VolumeDiffeo::FlowMap(f) => {
            let (x, back) = rk4_variational(&f.evaluator, y, -f.t, f.dt);
            let fwd = back.try_inverse().expect("flow Jacobian is invertible");
            (x, fwd)
        }
        VolumeDiffeo::Composite(parts) => {
            let mut p = y;
            let mut m = Mat3::identity();
            for part in parts.iter().rev() {
                let (q, jac) = inverse_with_jacobian(part, p);
                m *= jac;
                p = q;
            }
            (p, m)
        }
    }
}

/// A diffeomorphism sampled at the nodes of an `n^3` grid: the preimage of
/// each node and the forward Jacobian there. Reusable across fields.
#[derive(Clone, Debug)]
pub struct SampledDiffeo {
    n: usize,
    identity: bool,
    preimages: Vec<Vec3>,
    jacobians: Vec<Mat3>,
}

impl SampledDiffeo {
    pub fn new(phi: &VolumeDiffeo, n: usize) -> Self {
        let pairs = parallel::map_range(n * n * n, |i| inverse_with_jacobian(phi, node_position(i, n)));
        let (preimages, jacobians) = pairs.into_iter().unzip();
        Self { n, identity: phi.is_identity(), preimages, jacobians }
    }

    pub fn resolution(&self) -> usize {
        self.n
    }

    /// `max |det D phi - 1|` over the sampled nodes.
    pub fn max_volume_error(&self) -> f64 {
        self.jacobians.iter().map(|m| (m.determinant() - 1.0).abs()).fold(0.0, f64::max)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PushforwardDiagnostics {
    /// `|mean_out - mean_in|` relative to the input rms before snapping
    pub mean_drift: f64,
    /// L2 norm of the gradient part removed by the projection, relative to the output
    pub removed_gradient: f64,
    pub snapped_mean: bool,
}

/// `(phi_* w)(y) = D phi(x) w(x)` with `x = phi^-1(y)`, sampled on the
/// `n_out` grid and Leray-projected.
pub fn pushforward(w: &SpectralField, phi: &VolumeDiffeo, n_out: usize) -> Result<SpectralField> {
    require_divergence_free(w)?;
    Ok(pushforward_sampled(w, &SampledDiffeo::new(phi, n_out))?.0)
}

pub fn pushforward_sampled(
    w: &SpectralField,
    sampled: &SampledDiffeo,
) -> Result<(SpectralField, PushforwardDiagnostics)> {
    require_divergence_free(w)?;
    if sampled.identity {
        let diag = PushforwardDiagnostics { mean_drift: 0.0, removed_gradient: 0.0, snapped_mean: false };
        return Ok((w.resample(sampled.n), diag));
    }
    let ev = w.evaluator();
    let samples = parallel::map_range(sampled.preimages.len(), |i| {
        let v = sampled.jacobians[i] * ev.value(&sampled.preimages[i]);
        [v[0], v[1], v[2]]
    });
    let raw = from_grid(&GridField::new(sampled.n, samples), GridFlags::default());
    let projected = crate::calculus::leray_project(&raw);
    let removed = raw.sub(&projected)?.without_mean().l2_norm();
    let rms = (w.l2_norm_sq() / crate::field::torus_volume()).sqrt().max(f64::MIN_POSITIVE);
    let mean_in = w.mean();
    let mean_drift = (projected.mean() - mean_in).norm() / rms;
    let snapped_mean = mean_drift <= MEAN_SNAP_TOL;
    let out = if snapped_mean { projected.with_mean(mean_in) } else { projected };
    let removed_gradient = removed / out.l2_norm().max(f64::MIN_POSITIVE);
    Ok((out, PushforwardDiagnostics { mean_drift, removed_gradient, snapped_mean }))
}

/// `(lift(T) - x0) / (2 pi T)`: the homology class per unit time of the
/// trajectory closed by a straight segment.
pub fn asymptotic_cycle(v: &SpectralField, x0: Vec3, t: f64, dt: f64) -> [f64; 3] {
    asymptotic_cycles(v, &[x0], t, dt)[0]
}

/// [`asymptotic_cycle`] for many seeds, in parallel.
pub fn asymptotic_cycles(v: &SpectralField, seeds: &[Vec3], t: f64, dt: f64) -> Vec<[f64; 3]> {
    assert!(dt > 0.0 && t > 0.0, "need t > 0 and dt > 0");
    let ev = v.evaluator();
    let two_pi = 2.0 * PI;
    parallel::map_slice(seeds, |x0| {
        let base = x0.map(|c| c.rem_euclid(two_pi));
        let end = rk4_point(&ev, base, t, dt, |_, _| {});
        let d = (end - base) / (two_pi * t);
        [d[0], d[1], d[2]]
    })
}

/// Stratified uniform seeds: one jittered point per cell of an
/// `m x m x m` partition of the torus, `m^3 >= count`, truncated to `count`.
pub fn uniform_seeds(count: usize, seed: u64) -> Vec<Vec3> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = (1..).find(|m: &usize| m * m * m >= count).unwrap();
    let h = 2.0 * PI / m as f64;
    let mut pts = Vec::with_capacity(m * m * m);
    for i in 0..m * m * m {
        let cell = Vec3::new((i % m) as f64, ((i / m) % m) as f64, (i / (m * m)) as f64);
        let jitter = Vec3::new(rng.random::<f64>(), rng.random::<f64>(), rng.random::<f64>());
        pts.push((cell + jitter) * h);
    }
    pts.truncate(count);
    pts
}

/// `max |det D phi - 1|` over `n_samples` uniform random points.
pub fn volume_check(phi: &VolumeDiffeo, n_samples: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pts: Vec<Vec3> = (0..n_samples)
        .map(|_| Vec3::new(rng.random::<f64>(), rng.random::<f64>(), rng.random::<f64>()) * (2.0 * PI))
        .collect();
    parallel::map_slice(&pts, |x| (diffeo_jacobian(phi, *x).determinant() - 1.0).abs())
        .into_iter()
        .fold(0.0, f64::max)
}

/// A random shear with one harmonic per profile plus a constant offset.
/// Amplitudes are drawn from `[0, max_amplitude]`.
pub fn random_shear(seed: u64, max_amplitude: f64) -> VolumeDiffeo {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let axis = rng.random_range(1..=3usize);
    let mut profile = || {
        let amp = max_amplitude * rng.random::<f64>();
        let phase = 2.0 * PI * rng.random::<f64>();
        TrigPoly {
            constant: 2.0 * PI * rng.random::<f64>(),
            terms: vec![TrigTerm { harmonic: 1, cos: amp * phase.sin(), sin: amp * phase.cos() }],
        }
    };
    let g = profile();
    let h = profile();
    VolumeDiffeo::Shear { axis, g, h }
}
