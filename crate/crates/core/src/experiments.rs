//! Named end-to-end experiments and their machine-readable reports.
//!
//! Every experiment is a pure function of its parameters and the run seed,
//! so reports are byte-identical across runs. Wall-clock time is returned
//! beside the report rather than inside it for the same reason.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::annulus::{birkhoff_report, closeness_constant, delta_sweep, write_sweep_csv, Profile, TwistSystem};
use crate::calculus::{
    cross_dealiased, cross_helicity, curl, curl_inv, gradient_potential, helicity, l2_inner, leray_project,
    lie_bracket, magnetic_helicity, rotation_class_algebraic, GRADIENT_TOL,
};
use crate::error::{Error, Result};
use crate::field::{derive_seed, make_field, FieldSpec, SpectralField, Vec3};
use crate::paths::{connect_level_set_with_pool, verify_path, DEFAULT_POOL};
use crate::transport::{
    asymptotic_cycles, pushforward_sampled, random_shear, uniform_seeds, volume_check, SampledDiffeo, TrigPoly,
    VolumeDiffeo,
};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub name: String,
    pub parameters: Value,
    pub metrics: BTreeMap<String, f64>,
    pub verdicts: BTreeMap<String, bool>,
    pub runtime_seconds: f64,
    pub seed: u64,
    pub version: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl ExperimentReport {
    pub fn passed(&self) -> bool {
        !self.verdicts.is_empty() && self.verdicts.values().all(|v| *v)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

/// A report plus optional artifacts.
#[derive(Clone, Debug)]
pub struct Outcome {
    pub report: ExperimentReport,
    pub csv: Option<String>,
    pub detail: Option<Value>,
    pub elapsed_seconds: f64,
}

pub struct ExperimentInfo {
    pub name: &'static str,
    pub description: &'static str,
    pub anchor: &'static str,
}

/// Lexicographically ordered.
pub const CATALOG: &[ExperimentInfo] = &[
    ExperimentInfo {
        name: "birkhoff_report",
        description: "period-q orbits of a perturbed twist map at a resonant circle",
        anchor: "§twist-map-resonance",
    },
    ExperimentInfo {
        name: "casimir_invariance",
        description: "helicity drift under pushforward by a volume-preserving map",
        anchor: "§helicity-invariance",
    },
    ExperimentInfo {
        name: "coadjoint_identity",
        description: "duality of the coadjoint action and the Lie bracket under the helicity pairing",
        anchor: "§coadjoint-duality",
    },
    ExperimentInfo {
        name: "connect_level_set",
        description: "constant-helicity path between two fields of equal helicity",
        anchor: "§level-set-paths",
    },
    ExperimentInfo {
        name: "kernel_first_integral",
        description: "curl K(w) x w for the helicity kernel or a custom kernel",
        anchor: "§kernel-first-integral",
    },
    ExperimentInfo {
        name: "mhd_pair_invariance",
        description: "magnetic and cross helicity drift under a common pushforward",
        anchor: "§mhd-invariants",
    },
    ExperimentInfo {
        name: "rotation_class_consistency",
        description: "algebraic rotation class against the Monte Carlo mean of asymptotic cycles",
        anchor: "§rotation-class",
    },
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DiffeoSpec {
    Identity,
    Shear {
        axis: usize,
        #[serde(default)]
        g: TrigPoly,
        #[serde(default)]
        h: TrigPoly,
    },
    /// One harmonic plus a constant per profile, amplitudes up to `max_amplitude`.
    RandomShear {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
        #[serde(default = "default_shear_amplitude")]
        max_amplitude: f64,
    },
    FlowMap {
        generator: FieldSpec,
        t: f64,
        #[serde(default = "default_flow_dt")]
        dt: f64,
    },
    Compose {
        maps: Vec<DiffeoSpec>,
    },
}

impl DiffeoSpec {
    pub fn with_seeds(&self, base: u64, slot: &mut u64) -> DiffeoSpec {
        match self {
            DiffeoSpec::RandomShear { seed, max_amplitude } => {
                let s = seed.unwrap_or_else(|| derive_seed(base, *slot));
                *slot += 1;
                DiffeoSpec::RandomShear { seed: Some(s), max_amplitude: *max_amplitude }
            }
            DiffeoSpec::FlowMap { generator, t, dt } => {
                DiffeoSpec::FlowMap { generator: generator.with_seeds(base, slot), t: *t, dt: *dt }
            }
            DiffeoSpec::Compose { maps } => {
                DiffeoSpec::Compose { maps: maps.iter().map(|m| m.with_seeds(base, slot)).collect() }
            }
            other => other.clone(),
        }
    }

    pub fn build(&self, n: usize) -> Result<VolumeDiffeo> {
        match self {
            DiffeoSpec::Identity => Ok(VolumeDiffeo::identity()),
            DiffeoSpec::Shear { axis, g, h } => VolumeDiffeo::shear(*axis, g.clone(), h.clone()),
            DiffeoSpec::RandomShear { seed, max_amplitude } => {
                let seed = seed.ok_or_else(|| Error::InvalidSpec("random shear has no seed".into()))?;
                Ok(random_shear(seed, *max_amplitude))
            }
            DiffeoSpec::FlowMap { generator, t, dt } => VolumeDiffeo::flow_map(make_field(generator, n)?, *t, *dt),
            DiffeoSpec::Compose { maps } => {
                Ok(VolumeDiffeo::Composite(maps.iter().map(|m| m.build(n)).collect::<Result<_>>()?))
            }
        }
    }

    pub fn has_flow(&self) -> bool {
        match self {
            DiffeoSpec::FlowMap { .. } => true,
            DiffeoSpec::Compose { maps } => maps.iter().any(|m| m.has_flow()),
            _ => false,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Functional {
    #[default]
    Helicity,
    MagneticHelicity,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelSpec {
    HelicityKernel,
    CustomField { field: FieldSpec },
}

fn default_n() -> usize {
    32
}
fn default_path_n() -> usize {
    16
}
fn default_shear_amplitude() -> f64 {
    0.3
}
fn default_flow_dt() -> f64 {
    1e-3
}
fn default_volume_samples() -> usize {
    100
}
fn default_seeds() -> usize {
    64
}
fn default_horizon() -> f64 {
    1e3
}
fn default_cycle_dt() -> f64 {
    1e-2
}
fn default_path_samples() -> usize {
    41
}
fn default_pool() -> usize {
    DEFAULT_POOL
}
fn default_window() -> (f64, f64) {
    (1.5, 2.7)
}
fn default_delta() -> f64 {
    0.05
}
fn default_shape() -> TrigPoly {
    TrigPoly::sin(3, 1.0)
}
fn default_p() -> i64 {
    1
}
fn default_q() -> u32 {
    3
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CasimirParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub tol: BTreeMap<String, f64>,
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_out: Option<usize>,
    pub field: FieldSpec,
    pub diffeo: DiffeoSpec,
    #[serde(default)]
    pub functional: Functional,
    #[serde(default = "default_volume_samples")]
    pub volume_samples: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MhdParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub tol: BTreeMap<String, f64>,
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_out: Option<usize>,
    pub omega: FieldSpec,
    pub b: FieldSpec,
    pub diffeo: DiffeoSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoadjointParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub tol: BTreeMap<String, f64>,
    #[serde(default = "default_n")]
    pub n: usize,
    pub xi: FieldSpec,
    pub v: FieldSpec,
    pub w: FieldSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub tol: BTreeMap<String, f64>,
    #[serde(default = "default_n")]
    pub n: usize,
    pub w: FieldSpec,
    pub kernel: KernelSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RotationParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub tol: BTreeMap<String, f64>,
    #[serde(default = "default_n")]
    pub n: usize,
    pub field: FieldSpec,
    #[serde(default = "default_seeds")]
    pub n_seeds: usize,
    #[serde(default = "default_horizon")]
    pub t: f64,
    #[serde(default = "default_cycle_dt")]
    pub dt: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub tol: BTreeMap<String, f64>,
    #[serde(default = "default_path_n")]
    pub n: usize,
    pub w1: FieldSpec,
    pub w2: FieldSpec,
    #[serde(default = "default_path_samples")]
    pub n_samples: usize,
    #[serde(default = "default_pool")]
    pub pool: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BirkhoffParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub tol: BTreeMap<String, f64>,
    #[serde(default = "Profile::standard")]
    pub profile: Profile,
    #[serde(default = "default_window")]
    pub window: (f64, f64),
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_shape")]
    pub shape: TrigPoly,
    #[serde(default = "default_p")]
    pub p: i64,
    #[serde(default = "default_q")]
    pub q: u32,
    #[serde(default = "default_seeds")]
    pub n_seeds: usize,
    /// Extra perturbation strengths for the sweep artifact
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sweep: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "experiment", rename_all = "snake_case")]
pub enum Experiment {
    BirkhoffReport(BirkhoffParams),
    CasimirInvariance(CasimirParams),
    CoadjointIdentity(CoadjointParams),
    ConnectLevelSet(PathParams),
    KernelFirstIntegral(KernelParams),
    MhdPairInvariance(MhdParams),
    RotationClassConsistency(RotationParams),
}

/// A configuration problem tied to a named field.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfigIssue {
    pub field: String,
    pub message: String,
}

impl std::fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

fn issue(field: &str, message: impl Into<String>) -> ConfigIssue {
    ConfigIssue { field: field.to_string(), message: message.into() }
}

fn check_resolution(field: &str, n: usize) -> std::result::Result<(), ConfigIssue> {
    if n < 2 || n % 2 != 0 {
        return Err(issue(field, format!("resolution must be a positive even integer, got {n}")));
    }
    Ok(())
}

fn check_field(field: &str, spec: &FieldSpec, n: usize) -> std::result::Result<(), ConfigIssue> {
    let mut slot = 0;
    make_field(&spec.with_seeds(0, &mut slot), n).map(|_| ()).map_err(|e| issue(field, e.to_string()))
}

fn check_diffeo(field: &str, spec: &DiffeoSpec, n: usize) -> std::result::Result<(), ConfigIssue> {
    if let DiffeoSpec::FlowMap { t, dt, .. } = spec {
        if !(*dt > 0.0) {
            return Err(issue(&format!("{field}.dt"), format!("must be positive, got {dt}")));
        }
        if !t.is_finite() {
            return Err(issue(&format!("{field}.t"), "must be finite"));
        }
    }
    let mut slot = 0;
    spec.with_seeds(0, &mut slot).build(n).map(|_| ()).map_err(|e| issue(field, e.to_string()))
}

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a.abs()
    } else {
        gcd(b, a % b)
    }
}

impl Experiment {
    pub fn kind(&self) -> &'static str {
        match self {
            Experiment::BirkhoffReport(_) => "birkhoff_report",
            Experiment::CasimirInvariance(_) => "casimir_invariance",
            Experiment::CoadjointIdentity(_) => "coadjoint_identity",
            Experiment::ConnectLevelSet(_) => "connect_level_set",
            Experiment::KernelFirstIntegral(_) => "kernel_first_integral",
            Experiment::MhdPairInvariance(_) => "mhd_pair_invariance",
            Experiment::RotationClassConsistency(_) => "rotation_class_consistency",
        }
    }

    fn label_and_tol(&self) -> (&Option<String>, &BTreeMap<String, f64>) {
        match self {
            Experiment::BirkhoffReport(p) => (&p.label, &p.tol),
            Experiment::CasimirInvariance(p) => (&p.label, &p.tol),
            Experiment::CoadjointIdentity(p) => (&p.label, &p.tol),
            Experiment::ConnectLevelSet(p) => (&p.label, &p.tol),
            Experiment::KernelFirstIntegral(p) => (&p.label, &p.tol),
            Experiment::MhdPairInvariance(p) => (&p.label, &p.tol),
            Experiment::RotationClassConsistency(p) => (&p.label, &p.tol),
        }
    }

    /// Report name: the label if given, else the experiment kind.
    pub fn name(&self) -> String {
        self.label_and_tol().0.clone().unwrap_or_else(|| self.kind().to_string())
    }

    /// Named tolerances with their defaults.
    pub fn default_tolerances(&self) -> BTreeMap<String, f64> {
        let pairs: Vec<(&str, f64)> = match self {
            Experiment::BirkhoffReport(_) => vec![("residual", 1e-11), ("closeness", 10.0)],
            Experiment::CasimirInvariance(p) => {
                let d = if p.diffeo.has_flow() { 1e-4 } else { 1e-9 };
                vec![("drift", d), ("rotation_class", d), ("volume", 1e-6)]
            }
            Experiment::CoadjointIdentity(_) => vec![("duality", 1e-8)],
            Experiment::ConnectLevelSet(_) => {
                vec![("constancy", 1e-10), ("orthogonality", 1e-10), ("endpoint", 1e-14)]
            }
            Experiment::KernelFirstIntegral(_) => vec![("kernel", 1e-10), ("gradient", GRADIENT_TOL)],
            Experiment::MhdPairInvariance(p) => {
                vec![("drift", if p.diffeo.has_flow() { 1e-4 } else { 1e-9 })]
            }
            Experiment::RotationClassConsistency(_) => vec![("consistency", 5e-2)],
        };
        pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
    }

    /// Defaults, then the experiment's own `tol` table, then `overrides`
    /// for names this experiment knows.
    pub fn tolerances(&self, overrides: &BTreeMap<String, f64>) -> std::result::Result<BTreeMap<String, f64>, ConfigIssue> {
        let mut tol = self.default_tolerances();
        for (k, v) in self.label_and_tol().1 {
            match tol.get_mut(k) {
                Some(slot) => *slot = *v,
                None => {
                    let known: Vec<&str> = tol.keys().map(String::as_str).collect();
                    return Err(issue(&format!("tol.{k}"), format!("unknown tolerance (known: {})", known.join(", "))));
                }
            }
        }
        for (k, v) in overrides {
            if let Some(slot) = tol.get_mut(k) {
                *slot = *v;
            }
        }
        Ok(tol)
    }

    /// Structural checks plus a dry realization of every field at its resolution.
    pub fn validate(&self) -> std::result::Result<(), ConfigIssue> {
        self.tolerances(&BTreeMap::new())?;
        match self {
            Experiment::CasimirInvariance(p) => {
                check_resolution("n", p.n)?;
                if let Some(m) = p.n_out {
                    check_resolution("n_out", m)?;
                }
                check_field("field", &p.field, p.n)?;
                check_diffeo("diffeo", &p.diffeo, p.n)
            }
            Experiment::MhdPairInvariance(p) => {
                check_resolution("n", p.n)?;
                if let Some(m) = p.n_out {
                    check_resolution("n_out", m)?;
                }
                check_field("omega", &p.omega, p.n)?;
                check_field("b", &p.b, p.n)?;
                check_diffeo("diffeo", &p.diffeo, p.n)
            }
            Experiment::CoadjointIdentity(p) => {
                check_resolution("n", p.n)?;
                check_field("xi", &p.xi, p.n)?;
                check_field("v", &p.v, p.n)?;
                check_field("w", &p.w, p.n)
            }
            Experiment::KernelFirstIntegral(p) => {
                check_resolution("n", p.n)?;
                check_field("w", &p.w, p.n)?;
                match &p.kernel {
                    KernelSpec::HelicityKernel => Ok(()),
                    KernelSpec::CustomField { field } => check_field("kernel.field", field, p.n),
                }
            }
            Experiment::RotationClassConsistency(p) => {
                check_resolution("n", p.n)?;
                check_field("field", &p.field, p.n)?;
                if p.n_seeds == 0 {
                    return Err(issue("n_seeds", "must be at least 1"));
                }
                if !(p.t > 0.0) {
                    return Err(issue("t", format!("must be positive, got {}", p.t)));
                }
                if !(p.dt > 0.0) {
                    return Err(issue("dt", format!("must be positive, got {}", p.dt)));
                }
                Ok(())
            }
            Experiment::ConnectLevelSet(p) => {
                check_resolution("n", p.n)?;
                check_field("w1", &p.w1, p.n)?;
                check_field("w2", &p.w2, p.n)?;
                if p.n_samples < 3 {
                    return Err(issue("n_samples", format!("must be at least 3, got {}", p.n_samples)));
                }
                if p.pool == 0 {
                    return Err(issue("pool", "must be at least 1"));
                }
                Ok(())
            }
            Experiment::BirkhoffReport(p) => {
                if p.q == 0 {
                    return Err(issue("q", "must be positive"));
                }
                if gcd(p.p, p.q as i64) != 1 {
                    return Err(issue("p", format!("p = {} and q = {} must be coprime", p.p, p.q)));
                }
                if p.n_seeds == 0 {
                    return Err(issue("n_seeds", "must be at least 1"));
                }
                if let Some(d) = p.sweep.iter().find(|d| !(**d > 0.0)) {
                    return Err(issue("sweep", format!("perturbation strengths must be positive, got {d}")));
                }
                TwistSystem::new(p.profile.clone(), p.window, p.delta, p.shape.clone())
                    .map(|_| ())
                    .map_err(|e| issue("delta", e.to_string()))
            }
        }
    }

    /// Fills missing random seeds from `seed`, visiting specs in declaration order.
    pub fn with_seeds(&self, seed: u64) -> Experiment {
        let mut slot = 0;
        let s = &mut slot;
        match self {
            Experiment::CasimirInvariance(p) => Experiment::CasimirInvariance(CasimirParams {
                field: p.field.with_seeds(seed, s),
                diffeo: p.diffeo.with_seeds(seed, s),
                ..p.clone()
            }),
            Experiment::MhdPairInvariance(p) => {
                let omega = p.omega.with_seeds(seed, s);
                let b = p.b.with_seeds(seed, s);
                Experiment::MhdPairInvariance(MhdParams { omega, b, diffeo: p.diffeo.with_seeds(seed, s), ..p.clone() })
            }
            Experiment::CoadjointIdentity(p) => {
                let xi = p.xi.with_seeds(seed, s);
                let v = p.v.with_seeds(seed, s);
                Experiment::CoadjointIdentity(CoadjointParams { xi, v, w: p.w.with_seeds(seed, s), ..p.clone() })
            }
            Experiment::KernelFirstIntegral(p) => {
                let w = p.w.with_seeds(seed, s);
                let kernel = match &p.kernel {
                    KernelSpec::HelicityKernel => KernelSpec::HelicityKernel,
                    KernelSpec::CustomField { field } => KernelSpec::CustomField { field: field.with_seeds(seed, s) },
                };
                Experiment::KernelFirstIntegral(KernelParams { w, kernel, ..p.clone() })
            }
            Experiment::RotationClassConsistency(p) => {
                Experiment::RotationClassConsistency(RotationParams { field: p.field.with_seeds(seed, s), ..p.clone() })
            }
            Experiment::ConnectLevelSet(p) => {
                let w1 = p.w1.with_seeds(seed, s);
                Experiment::ConnectLevelSet(PathParams { w1, w2: p.w2.with_seeds(seed, s), ..p.clone() })
            }
            Experiment::BirkhoffReport(p) => Experiment::BirkhoffReport(p.clone()),
        }
    }
}

/// Metrics and verdicts under construction.
#[derive(Default)]
struct Recorder {
    metrics: BTreeMap<String, f64>,
    verdicts: BTreeMap<String, bool>,
    tol: BTreeMap<String, f64>,
}

impl Recorder {
    fn new(tol: BTreeMap<String, f64>) -> Self {
        let mut r = Self { tol, ..Default::default() };
        for (k, v) in r.tol.clone() {
            r.metrics.insert(format!("tol.{k}"), v);
        }
        r
    }

    fn metric(&mut self, name: &str, value: f64) {
        self.metrics.insert(name.to_string(), value);
    }

    fn tol(&self, name: &str) -> f64 {
        self.tol[name]
    }

    /// Records `metric = value` and the verdict `value <= tol.<tol_name>`.
    fn at_most(&mut self, verdict: &str, metric: &str, value: f64, tol_name: &str) {
        self.metric(metric, value);
        let ok = value <= self.tol(tol_name);
        self.verdicts.insert(verdict.to_string(), ok);
    }

    fn verdict(&mut self, name: &str, ok: bool) {
        self.verdicts.insert(name.to_string(), ok);
    }
}

fn default_n_out(n: usize) -> usize {
    let m = (3 * n).div_ceil(2);
    m + m % 2
}

fn relative(delta: f64, scale: f64) -> f64 {
    if scale > 0.0 {
        delta / scale
    } else {
        delta
    }
}

type Artifacts = (Option<String>, Option<Value>);

fn casimir(p: &CasimirParams, rec: &mut Recorder) -> Result<Artifacts> {
    let w = make_field(&p.field, p.n)?;
    let phi = p.diffeo.build(p.n)?;
    let n_out = p.n_out.unwrap_or_else(|| default_n_out(p.n));
    let sampled = SampledDiffeo::new(&phi, n_out);
    let (pushed, diag) = pushforward_sampled(&w, &sampled)?;
    let functional = |f: &SpectralField| match p.functional {
        Functional::Helicity => helicity(f),
        Functional::MagneticHelicity => magnetic_helicity(f),
    };
    let (h0, h1) = (functional(&w)?, functional(&pushed)?);
    rec.metric("h_before", h0);
    rec.metric("h_after", h1);
    rec.metric("n_out", n_out as f64);
    rec.metric("relative_drift", relative((h1 - h0).abs(), h0.abs()));
    rec.at_most("casimir", "drift", (h1 - h0).abs() / (h0.abs() + 1.0), "drift");
    let volume = if phi.has_flow() {
        sampled.max_volume_error()
    } else {
        volume_check(&phi, p.volume_samples, derive_seed(0, 0))
    };
    rec.at_most("volume", "volume_error", volume, "volume");
    let (l0, l1) = (rotation_class_algebraic(&w).lambda, rotation_class_algebraic(&pushed).lambda);
    let scale = l0.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let drift = (0..3).map(|i| (l1[i] - l0[i]).abs()).fold(0.0, f64::max) / (scale + 1.0);
    rec.at_most("rotation_class", "rotation_class_drift", drift, "rotation_class");
    rec.metric("mean_drift", diag.mean_drift);
    rec.metric("removed_gradient", diag.removed_gradient);
    Ok((None, None))
}

fn mhd(p: &MhdParams, rec: &mut Recorder) -> Result<Artifacts> {
    let omega = make_field(&p.omega, p.n)?;
    let b = make_field(&p.b, p.n)?;
    let phi = p.diffeo.build(p.n)?;
    let n_out = p.n_out.unwrap_or_else(|| default_n_out(p.n));
    let sampled = SampledDiffeo::new(&phi, n_out);
    let (omega1, _) = pushforward_sampled(&omega, &sampled)?;
    let (b1, _) = pushforward_sampled(&b, &sampled)?;
    let (m0, m1) = (magnetic_helicity(&b)?, magnetic_helicity(&b1)?);
    let (c0, c1) = (cross_helicity(&omega, &b)?, cross_helicity(&omega1, &b1)?);
    rec.metric("magnetic_helicity_before", m0);
    rec.metric("magnetic_helicity_after", m1);
    rec.metric("cross_helicity_before", c0);
    rec.metric("cross_helicity_after", c1);
    rec.metric("n_out", n_out as f64);
    rec.at_most("magnetic_helicity", "magnetic_helicity_drift", (m1 - m0).abs() / (m0.abs() + 1.0), "drift");
    rec.at_most("cross_helicity", "cross_helicity_drift", (c1 - c0).abs() / (c0.abs() + 1.0), "drift");
    Ok((None, None))
}

/// Both sides of `<curl^-1 [xi, v], w> = <curl^-1 xi, [w, v]>`.
pub fn coadjoint_sides(xi: &SpectralField, v: &SpectralField, w: &SpectralField) -> Result<(f64, f64)> {
    let lhs = l2_inner(&curl_inv(&lie_bracket(xi, v)?)?, w)?;
    let rhs = l2_inner(&curl_inv(xi)?, &lie_bracket(w, v)?)?;
    Ok((lhs, rhs))
}

fn coadjoint(p: &CoadjointParams, rec: &mut Recorder) -> Result<Artifacts> {
    let xi = make_field(&p.xi, p.n)?;
    let v = make_field(&p.v, p.n)?;
    let w = make_field(&p.w, p.n)?;
    let (lhs, rhs) = coadjoint_sides(&xi, &v, &w)?;
    let scale = lhs.abs().max(rhs.abs());
    rec.metric("lhs", lhs);
    rec.metric("rhs", rhs);
    rec.metric("antisymmetry", relative((lhs + rhs).abs(), scale));
    rec.at_most("duality", "discrepancy", relative((lhs - rhs).abs(), scale), "duality");
    Ok((None, None))
}

fn kernel(p: &KernelParams, rec: &mut Recorder) -> Result<Artifacts> {
    let w = make_field(&p.w, p.n)?;
    let k = match &p.kernel {
        KernelSpec::HelicityKernel => crate::calculus::helicity_kernel(&w)?,
        KernelSpec::CustomField { field } => make_field(field, p.n)?,
    };
    let f = cross_dealiased(&curl(&k), &w)?;
    let wsq = w.l2_norm_sq();
    rec.metric("w_norm_sq", wsq);
    let ratio = relative(f.l2_norm(), wsq);
    match &p.kernel {
        KernelSpec::HelicityKernel => rec.at_most("first_integral", "f_norm_ratio", ratio, "kernel"),
        KernelSpec::CustomField { .. } => {
            rec.metric("f_norm_ratio", ratio);
            let fraction = relative(leray_project(&f).l2_norm(), f.l2_norm());
            let is_gradient = match gradient_potential(&f) {
                Ok(_) => true,
                Err(Error::NotAGradient { .. }) => false,
                Err(e) => return Err(e),
            };
            rec.metric("is_gradient", if is_gradient { 1.0 } else { 0.0 });
            rec.at_most("first_integral", "gradient_fraction", fraction, "gradient");
        }
    }
    Ok((None, None))
}

fn rotation(p: &RotationParams, seed: u64, rec: &mut Recorder) -> Result<Artifacts> {
    let v = make_field(&p.field, p.n)?;
    crate::calculus::require_divergence_free(&v)?;
    let alg = rotation_class_algebraic(&v).lambda;
    let seeds = uniform_seeds(p.n_seeds, derive_seed(seed, u64::MAX));
    let cycles = asymptotic_cycles(&v, &seeds, p.t, p.dt);
    let mut avg = [0.0; 3];
    for c in &cycles {
        for i in 0..3 {
            avg[i] += c[i] / cycles.len() as f64;
        }
    }
    // the asymptotic cycle is measured in turns, so the mean velocity is 2 pi times it
    let geo: Vec<f64> = avg.iter().map(|a| (2.0 * PI).powi(3) * a).collect();
    let scale = alg.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let err = (0..3).map(|i| (geo[i] - alg[i]).abs()).fold(0.0, f64::max);
    for i in 0..3 {
        rec.metric(&format!("algebraic_{}", i + 1), alg[i]);
        rec.metric(&format!("geometric_{}", i + 1), geo[i]);
    }
    rec.at_most("consistency", "discrepancy", relative(err, scale), "consistency");
    if v.is_exact() {
        rec.verdict("exact_has_zero_class", alg == [0.0; 3]);
    }
    let mut csv = String::from("seed,x1,x2,x3,c1,c2,c3\n");
    for (i, (x, c)) in seeds.iter().zip(&cycles).enumerate() {
        writeln!(csv, "{i},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}", x[0], x[1], x[2], c[0], c[1], c[2]).unwrap();
    }
    Ok((Some(csv), None))
}

fn level_set(p: &PathParams, rec: &mut Recorder) -> Result<Artifacts> {
    let w1 = make_field(&p.w1, p.n)?;
    let w2 = make_field(&p.w2, p.n)?;
    let path = connect_level_set_with_pool(&w1, &w2, p.n_samples, p.pool)?;
    let report = verify_path(&path)?;
    rec.metric("level", report.level);
    rec.metric("n_samples", report.n_samples as f64);
    rec.metric("max_deviation", report.max_deviation);
    rec.metric("bridge_helicity", report.bridge_helicity);
    rec.metric("min_norm", report.min_norm);
    rec.at_most("constancy", "scaled_deviation", report.max_deviation / (report.level.abs() + 1.0), "constancy");
    rec.at_most("orthogonality", "orthogonality", report.orthogonality, "orthogonality");
    rec.at_most("endpoints", "endpoint_error", report.endpoint_error, "endpoint");
    rec.verdict("nondegenerate", report.min_norm > 0.0);
    let mut csv = String::from("t,helicity,deviation\n");
    for (t, w) in &path.samples {
        let h = helicity(w)?;
        writeln!(csv, "{t:.16e},{h:.16e},{:.16e}", (h - path.level).abs()).unwrap();
    }
    Ok((Some(csv), Some(serde_json::to_value(&report).expect("path report serializes"))))
}

fn birkhoff(p: &BirkhoffParams, rec: &mut Recorder) -> Result<Artifacts> {
    let sys = TwistSystem::new(p.profile.clone(), p.window, p.delta, p.shape.clone())?;
    let report = birkhoff_report(&sys, p.p, p.q, p.n_seeds)?;
    rec.metric("n_hyperbolic", report.counts.n_hyperbolic as f64);
    rec.metric("n_elliptic", report.counts.n_elliptic as f64);
    rec.metric("n_parabolic", report.counts.n_parabolic as f64);
    rec.metric("n_cycles", report.n_cycles as f64);
    rec.metric("failed_seeds", report.failed_seeds as f64);
    rec.verdict("fibration_destroyed", report.verdict);
    rec.verdict("elliptic_bound", report.counts.n_elliptic >= p.q as usize);
    rec.at_most("residuals", "max_residual", report.max_residual, "residual");
    let mut deltas = vec![p.delta];
    deltas.extend(p.sweep.iter().copied());
    let rows = delta_sweep(&sys, &deltas, p.p, p.q, p.n_seeds)?;
    if let Some(rc) = report.resonant_radius {
        rec.metric("resonant_radius", rc);
        rec.metric("max_dist", report.max_dist);
        rec.at_most("closeness", "closeness_constant", closeness_constant(&rows), "closeness");
    }
    let mut csv = Vec::new();
    write_sweep_csv(&rows, &mut csv)?;
    let detail = serde_json::json!({
        "p": report.p,
        "q": report.q,
        "delta": report.delta,
        "orbits": report.orbits.iter().map(|o| serde_json::json!({
            "points": o.points,
            "trace": o.trace,
            "class": o.class,
        })).collect::<Vec<_>>(),
        "counts": report.counts,
        "verdict": report.verdict,
    });
    Ok((Some(String::from_utf8(csv).expect("csv is ascii")), Some(detail)))
}

/// Runs one experiment. Failures inside the experiment become a report
/// with `completed = false` and the error message.
pub fn run_experiment(exp: &Experiment, seed: u64, overrides: &BTreeMap<String, f64>) -> Outcome {
    let start = Instant::now();
    let resolved = exp.with_seeds(seed);
    let parameters = serde_json::to_value(&resolved).expect("parameters serialize");
    let mut error = None;
    let mut artifacts: Artifacts = (None, None);
    let mut rec = Recorder::default();
    match resolved.tolerances(overrides) {
        Err(e) => error = Some(e.to_string()),
        Ok(tol) => {
            rec = Recorder::new(tol);
            let result = match &resolved {
                Experiment::CasimirInvariance(p) => casimir(p, &mut rec),
                Experiment::MhdPairInvariance(p) => mhd(p, &mut rec),
                Experiment::CoadjointIdentity(p) => coadjoint(p, &mut rec),
                Experiment::KernelFirstIntegral(p) => kernel(p, &mut rec),
                Experiment::RotationClassConsistency(p) => rotation(p, seed, &mut rec),
                Experiment::ConnectLevelSet(p) => level_set(p, &mut rec),
                Experiment::BirkhoffReport(p) => birkhoff(p, &mut rec),
            };
            match result {
                Ok(a) => artifacts = a,
                Err(e) => error = Some(e.to_string()),
            }
        }
    }
    if error.is_some() {
        rec.verdict("completed", false);
    }
    let report = ExperimentReport {
        name: resolved.name(),
        parameters,
        metrics: rec.metrics,
        verdicts: rec.verdicts,
        runtime_seconds: 0.0,
        seed,
        version: VERSION.to_string(),
        error,
    };
    Outcome { report, csv: artifacts.0, detail: artifacts.1, elapsed_seconds: start.elapsed().as_secs_f64() }
}

/// Mean seeds-averaged asymptotic cycle scaled to the algebraic normalization.
pub fn geometric_rotation_class(v: &SpectralField, seeds: &[Vec3], t: f64, dt: f64) -> [f64; 3] {
    let cycles = asymptotic_cycles(v, seeds, t, dt);
    let s = (2.0 * PI).powi(3) / cycles.len() as f64;
    let mut out = [0.0; 3];
    for c in &cycles {
        for i in 0..3 {
            out[i] += c[i] * s;
        }
    }
    out
}
