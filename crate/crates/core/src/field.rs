//! Real vector fields on the flat torus `(R / 2 pi Z)^3` in truncated Fourier form.
//!
//! A field is stored as `w(x) = sum_k c(k) e^{i k.x}` with no normalization
//! factors in the coefficients; the grid transforms carry the `1/N^3`. The
//! coefficient cube uses FFT ordering with the first axis fastest. Nyquist
//! planes (`|k_i| = N/2`) are kept at zero so that every stored mode has a
//! distinct conjugate partner and the derivative operators stay real.

use std::f64::consts::PI;
use std::io::{Read, Write};

use nalgebra::{Matrix3, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::{fft, parallel};

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;
/// Complex 3-vector: one Fourier coefficient of a vector field.
pub type CVec3 = [Complex64; 3];

pub const ZERO_C: Complex64 = Complex64::new(0.0, 0.0);
pub const ZERO_CV: CVec3 = [ZERO_C; 3];

/// Torus volume `(2 pi)^3`.
pub fn torus_volume() -> f64 {
    (2.0 * PI).powi(3)
}

/// A lattice mode of the torus.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct WaveVector {
    pub k1: i64,
    pub k2: i64,
    pub k3: i64,
}

impl WaveVector {
    pub const ZERO: WaveVector = WaveVector { k1: 0, k2: 0, k3: 0 };

    pub const fn new(k1: i64, k2: i64, k3: i64) -> Self {
        Self { k1, k2, k3 }
    }

    pub fn norm_sq(&self) -> i64 {
        self.k1 * self.k1 + self.k2 * self.k2 + self.k3 * self.k3
    }

    pub fn as_array(&self) -> [i64; 3] {
        [self.k1, self.k2, self.k3]
    }

    pub fn as_vec3(&self) -> Vec3 {
        Vec3::new(self.k1 as f64, self.k2 as f64, self.k3 as f64)
    }

    pub fn neg(&self) -> Self {
        Self::new(-self.k1, -self.k2, -self.k3)
    }

    pub fn max_abs(&self) -> i64 {
        self.k1.abs().max(self.k2.abs()).max(self.k3.abs())
    }

    /// Storable at resolution `n`: every component strictly inside the Nyquist limit.
    pub fn in_band(&self, n: usize) -> bool {
        2 * self.max_abs() < n as i64
    }

    /// Lexicographically positive: one representative of each `{k, -k}` pair.
    pub fn is_positive(&self) -> bool {
        self.k1 > 0 || (self.k1 == 0 && (self.k2 > 0 || (self.k2 == 0 && self.k3 > 0)))
    }
}

impl From<[i64; 3]> for WaveVector {
    fn from(k: [i64; 3]) -> Self {
        Self::new(k[0], k[1], k[2])
    }
}

#[inline]
pub(crate) fn wavenumber(i: usize, n: usize) -> i64 {
    if 2 * i <= n {
        i as i64
    } else {
        i as i64 - n as i64
    }
}

#[inline]
pub(crate) fn slot(k: i64, n: usize) -> usize {
    k.rem_euclid(n as i64) as usize
}

/// `sum conj(a_i) b_i`
pub(crate) fn cinner(a: &CVec3, b: &CVec3) -> Complex64 {
    a[0].conj() * b[0] + a[1].conj() * b[1] + a[2].conj() * b[2]
}

pub(crate) fn cnorm_sq(a: &CVec3) -> f64 {
    a[0].norm_sqr() + a[1].norm_sqr() + a[2].norm_sqr()
}

/// `k x c` for real `k`.
pub(crate) fn kcross(k: &Vec3, c: &CVec3) -> CVec3 {
    [
        c[2] * k[1] - c[1] * k[2],
        c[0] * k[2] - c[2] * k[0],
        c[1] * k[0] - c[0] * k[1],
    ]
}

pub(crate) fn kdot(k: &Vec3, c: &CVec3) -> Complex64 {
    c[0] * k[0] + c[1] * k[1] + c[2] * k[2]
}

pub(crate) fn cscale(c: &CVec3, s: Complex64) -> CVec3 {
    [c[0] * s, c[1] * s, c[2] * s]
}

pub(crate) fn conj3(c: &CVec3) -> CVec3 {
    [c[0].conj(), c[1].conj(), c[2].conj()]
}

/// A real vector field on the torus, stored spectrally.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralField {
    n: usize,
    coeffs: Vec<CVec3>,
    divergence_free: bool,
    exact: bool,
}

impl SpectralField {
    pub fn zeros(n: usize) -> Self {
        assert!(n >= 2 && n % 2 == 0, "resolution must be a positive even integer");
        Self { n, coeffs: vec![ZERO_CV; n * n * n], divergence_free: true, exact: true }
    }

    pub fn resolution(&self) -> usize {
        self.n
    }

    pub fn is_divergence_free(&self) -> bool {
        self.divergence_free
    }

    pub fn is_exact(&self) -> bool {
        self.exact
    }

    pub(crate) fn raw(&self) -> &[CVec3] {
        &self.coeffs
    }

    pub(crate) fn from_raw(n: usize, coeffs: Vec<CVec3>) -> Self {
        let mut f = Self { n, coeffs, divergence_free: false, exact: false };
        f.detect_flags();
        f
    }

    #[inline]
    pub(crate) fn index(&self, k: WaveVector) -> usize {
        let n = self.n;
        slot(k.k1, n) + n * (slot(k.k2, n) + n * slot(k.k3, n))
    }

    #[inline]
    pub(crate) fn wave_at(&self, idx: usize) -> WaveVector {
        wave_of_index(idx, self.n)
    }

    /// Coefficient of mode `k`; zero outside the band.
    pub fn coeff(&self, k: WaveVector) -> CVec3 {
        if k.in_band(self.n) {
            self.coeffs[self.index(k)]
        } else {
            ZERO_CV
        }
    }

    /// Sets `c(k) = c` and `c(-k) = conj(c)`. For `k = 0` only the real part is kept.
    pub fn set_mode(&mut self, k: WaveVector, c: CVec3) -> Result<()> {
        if !k.in_band(self.n) {
            return Err(Error::SpecOutOfBand { k, n: self.n });
        }
        let i = self.index(k);
        if k == WaveVector::ZERO {
            self.coeffs[i] = [c[0].re.into(), c[1].re.into(), c[2].re.into()];
        } else {
            let j = self.index(k.neg());
            self.coeffs[i] = c;
            self.coeffs[j] = conj3(&c);
        }
        self.detect_flags();
        Ok(())
    }

    /// Nonzero modes in storage order.
    pub fn modes(&self) -> impl Iterator<Item = (WaveVector, CVec3)> + '_ {
        self.coeffs
            .iter()
            .enumerate()
            .filter(|(_, c)| cnorm_sq(c) > 0.0)
            .map(|(i, c)| (self.wave_at(i), *c))
    }

    /// Modes whose coefficient is not exactly zero.
    pub fn support(&self) -> Vec<WaveVector> {
        self.modes().map(|(k, _)| k).collect()
    }

    /// Applies `f(k, c(k))` to every coefficient. `f` must commute with
    /// conjugation and `k -> -k` for the result to stay real.
    pub fn map_modes<F>(&self, f: F) -> SpectralField
    where
        F: Fn(WaveVector, &CVec3) -> CVec3 + Sync + Send,
    {
        let n = self.n;
        let coeffs = parallel::map_range(self.coeffs.len(), |i| f(wave_of_index(i, n), &self.coeffs[i]));
        Self::from_raw(n, coeffs)
    }

    pub fn scale(&self, s: f64) -> SpectralField {
        let mut out = self.clone();
        out.coeffs.iter_mut().for_each(|c| *c = cscale(c, s.into()));
        out
    }

    /// `a * self + b * other`
    pub fn combine(&self, a: f64, other: &SpectralField, b: f64) -> Result<SpectralField> {
        self.check_same(other)?;
        let coeffs = self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(x, y)| [x[0] * a + y[0] * b, x[1] * a + y[1] * b, x[2] * a + y[2] * b])
            .collect();
        let mut out = Self { n: self.n, coeffs, divergence_free: false, exact: false };
        out.detect_flags();
        Ok(out)
    }

    pub fn add(&self, other: &SpectralField) -> Result<SpectralField> {
        self.combine(1.0, other, 1.0)
    }

    pub fn sub(&self, other: &SpectralField) -> Result<SpectralField> {
        self.combine(1.0, other, -1.0)
    }

    pub(crate) fn check_same(&self, other: &SpectralField) -> Result<()> {
        if self.n != other.n {
            return Err(Error::ResolutionMismatch { left: self.n, right: other.n });
        }
        Ok(())
    }

    /// Zero-pads or truncates to resolution `n`.
    pub fn resample(&self, n: usize) -> SpectralField {
        let mut out = SpectralField::zeros(n);
        for (k, c) in self.modes() {
            if k.in_band(n) {
                let i = out.index(k);
                out.coeffs[i] = c;
            }
        }
        out.detect_flags();
        out
    }

    /// Mean value, i.e. the real part of `c(0)`.
    pub fn mean(&self) -> Vec3 {
        let c = self.coeffs[0];
        Vec3::new(c[0].re, c[1].re, c[2].re)
    }

    /// Copy with the mean mode removed.
    pub fn without_mean(&self) -> SpectralField {
        let mut out = self.clone();
        out.coeffs[0] = ZERO_CV;
        out.detect_flags();
        out
    }

    /// Copy with the mean mode replaced.
    pub fn with_mean(&self, mean: Vec3) -> SpectralField {
        let mut out = self.clone();
        out.coeffs[0] = [mean[0].into(), mean[1].into(), mean[2].into()];
        out.detect_flags();
        out
    }

    /// `||w||^2 = (2 pi)^3 sum |c(k)|^2`.
    pub fn l2_norm_sq(&self) -> f64 {
        torus_volume() * parallel::sum_range(self.coeffs.len(), |i| cnorm_sq(&self.coeffs[i]))
    }

    pub fn l2_norm(&self) -> f64 {
        self.l2_norm_sq().sqrt()
    }

    pub fn max_coeff_norm(&self) -> f64 {
        parallel::max_range(self.coeffs.len(), |i| cnorm_sq(&self.coeffs[i])).sqrt()
    }

    /// Largest per-mode coefficient difference; fields of different
    /// resolution are compared mode by mode over the union of their bands.
    pub fn max_coeff_diff(&self, other: &SpectralField) -> f64 {
        let (big, small) = if self.n >= other.n { (self, other) } else { (other, self) };
        let mut worst = 0.0_f64;
        for (i, c) in big.coeffs.iter().enumerate() {
            let k = big.wave_at(i);
            let d = small.coeff(k);
            let diff = [c[0] - d[0], c[1] - d[1], c[2] - d[2]];
            worst = worst.max(cnorm_sq(&diff).sqrt());
        }
        worst
    }

    /// `max_k |k . c(k)| / |k|`, relative to the largest coefficient.
    pub fn divergence_residual(&self) -> f64 {
        let scale = self.max_coeff_norm();
        if scale == 0.0 {
            return 0.0;
        }
        let n = self.n;
        let worst = parallel::max_range(self.coeffs.len(), |i| {
            let k = wave_of_index(i, n);
            if k == WaveVector::ZERO {
                return 0.0;
            }
            let kv = k.as_vec3();
            kdot(&kv, &self.coeffs[i]).norm() / kv.norm()
        });
        worst / scale
    }

    pub(crate) fn detect_flags(&mut self) {
        let res = self.divergence_residual();
        self.divergence_free = res <= 1e-12;
        self.exact = self.divergence_free && cnorm_sq(&self.coeffs[0]) == 0.0;
    }

    pub(crate) fn set_flags(&mut self, divergence_free: bool, exact: bool) {
        self.divergence_free = divergence_free;
        self.exact = exact;
    }

    /// Point evaluator over the nonzero modes.
    pub fn evaluator(&self) -> FieldEvaluator {
        FieldEvaluator::new(self)
    }
}

pub(crate) fn wave_of_index(idx: usize, n: usize) -> WaveVector {
    let i1 = idx % n;
    let i2 = (idx / n) % n;
    let i3 = idx / (n * n);
    WaveVector::new(wavenumber(i1, n), wavenumber(i2, n), wavenumber(i3, n))
}

/// A real scalar function on the torus, stored spectrally.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarSpectral {
    n: usize,
    coeffs: Vec<Complex64>,
}

impl ScalarSpectral {
    pub fn zeros(n: usize) -> Self {
        assert!(n >= 2 && n % 2 == 0, "resolution must be a positive even integer");
        Self { n, coeffs: vec![ZERO_C; n * n * n] }
    }

    pub(crate) fn from_raw(n: usize, coeffs: Vec<Complex64>) -> Self {
        Self { n, coeffs }
    }

    pub(crate) fn raw(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn resolution(&self) -> usize {
        self.n
    }

    pub fn coeff(&self, k: WaveVector) -> Complex64 {
        if k.in_band(self.n) {
            let n = self.n;
            self.coeffs[slot(k.k1, n) + n * (slot(k.k2, n) + n * slot(k.k3, n))]
        } else {
            ZERO_C
        }
    }

    /// Sets `c(k)` and its conjugate partner.
    pub fn set_mode(&mut self, k: WaveVector, c: Complex64) -> Result<()> {
        let n = self.n;
        if !k.in_band(n) {
            return Err(Error::SpecOutOfBand { k, n });
        }
        let at = |k: WaveVector| slot(k.k1, n) + n * (slot(k.k2, n) + n * slot(k.k3, n));
        if k == WaveVector::ZERO {
            self.coeffs[0] = c.re.into();
        } else {
            self.coeffs[at(k)] = c;
            self.coeffs[at(k.neg())] = c.conj();
        }
        Ok(())
    }

    pub fn max_coeff_norm(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    pub fn l2_norm_sq(&self) -> f64 {
        torus_volume() * self.coeffs.iter().map(|c| c.norm_sqr()).sum::<f64>()
    }

    pub fn max_coeff_diff(&self, other: &ScalarSpectral) -> f64 {
        assert_eq!(self.n, other.n);
        self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
    }

    pub fn to_grid(&self) -> GridScalar {
        let mut data = self.coeffs.clone();
        fft::inverse(&mut data, self.n);
        GridScalar { n: self.n, values: data.into_iter().map(|z| z.re).collect() }
    }

    pub fn from_grid(g: &GridScalar) -> ScalarSpectral {
        let n = g.n;
        let mut data: Vec<Complex64> = g.values.iter().map(|&v| v.into()).collect();
        fft::forward(&mut data, n);
        let s = 1.0 / (n * n * n) as f64;
        data.iter_mut().for_each(|z| *z *= s);
        let mut out = ScalarSpectral { n, coeffs: data };
        out.symmetrize();
        out
    }

    fn symmetrize(&mut self) {
        let n = self.n;
        let old = self.coeffs.clone();
        for i in 0..old.len() {
            let k = wave_of_index(i, n);
            if !k.in_band(n) {
                self.coeffs[i] = ZERO_C;
                continue;
            }
            let j = slot(-k.k1, n) + n * (slot(-k.k2, n) + n * slot(-k.k3, n));
            self.coeffs[i] = (old[i] + old[j].conj()) * 0.5;
        }
    }
}

/// Scalar samples at the `n^3` grid nodes.
#[derive(Clone, Debug, PartialEq)]
pub struct GridScalar {
    pub n: usize,
    pub values: Vec<f64>,
}

impl GridScalar {
    pub fn new(n: usize, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), n * n * n);
        Self { n, values }
    }

    pub fn from_fn<F: Fn(Vec3) -> f64 + Sync + Send>(n: usize, f: F) -> Self {
        Self { n, values: parallel::map_range(n * n * n, |i| f(node_position(i, n))) }
    }
}

/// Vector samples at the `n^3` grid nodes `(2 pi i / n, 2 pi j / n, 2 pi l / n)`,
/// first axis fastest.
#[derive(Clone, Debug, PartialEq)]
pub struct GridField {
    pub n: usize,
    pub samples: Vec<[f64; 3]>,
}

/// Position of node `idx` (first axis fastest).
pub fn node_position(idx: usize, n: usize) -> Vec3 {
    let h = 2.0 * PI / n as f64;
    Vec3::new((idx % n) as f64 * h, ((idx / n) % n) as f64 * h, (idx / (n * n)) as f64 * h)
}

const GRID_MAGIC: &[u8; 4] = b"HLXG";
const GRID_VERSION: u32 = 1;

impl GridField {
    pub fn new(n: usize, samples: Vec<[f64; 3]>) -> Self {
        assert_eq!(samples.len(), n * n * n);
        Self { n, samples }
    }

    pub fn from_fn<F: Fn(Vec3) -> Vec3 + Sync + Send>(n: usize, f: F) -> Self {
        let samples = parallel::map_range(n * n * n, |i| {
            let v = f(node_position(i, n));
            [v[0], v[1], v[2]]
        });
        Self { n, samples }
    }

    pub fn at(&self, idx: usize) -> Vec3 {
        let s = self.samples[idx];
        Vec3::new(s[0], s[1], s[2])
    }

    /// `HLXG` magic, version and `n` as little-endian u32, then `n^3`
    /// little-endian f64 triples, first axis fastest.
    pub fn write_binary<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(GRID_MAGIC)?;
        out.write_all(&GRID_VERSION.to_le_bytes())?;
        out.write_all(&(self.n as u32).to_le_bytes())?;
        let mut buf = Vec::with_capacity(self.samples.len() * 24);
        for s in &self.samples {
            for v in s {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        out.write_all(&buf)?;
        Ok(())
    }

    pub fn read_binary<R: Read>(mut input: R) -> Result<GridField> {
        let mut head = [0u8; 12];
        input.read_exact(&mut head)?;
        if &head[0..4] != GRID_MAGIC {
            return Err(Error::Format("bad magic".into()));
        }
        let version = u32::from_le_bytes(head[4..8].try_into().unwrap());
        if version != GRID_VERSION {
            return Err(Error::Format(format!("unsupported version {version}")));
        }
        let n = u32::from_le_bytes(head[8..12].try_into().unwrap()) as usize;
        if n == 0 || n % 2 != 0 {
            return Err(Error::Format(format!("resolution {n} is not a positive even integer")));
        }
        let mut body = vec![0u8; n * n * n * 24];
        input.read_exact(&mut body)?;
        let samples = body
            .chunks_exact(24)
            .map(|c| {
                let f = |j: usize| f64::from_le_bytes(c[8 * j..8 * j + 8].try_into().unwrap());
                [f(0), f(1), f(2)]
            })
            .collect();
        Ok(GridField { n, samples })
    }
}

/// Constraints `from_grid` enforces on its output.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct GridFlags {
    /// Leray-project the result.
    pub divergence_free: bool,
    /// Leray-project and remove the mean mode.
    pub exact: bool,
}

/// Samples the field at the grid nodes.
pub fn to_grid(w: &SpectralField) -> GridField {
    let n = w.n;
    let mut comps: Vec<Vec<Complex64>> =
        (0..3).map(|c| w.coeffs.iter().map(|z| z[c]).collect()).collect();
    for comp in comps.iter_mut() {
        fft::inverse(comp, n);
    }
    let samples = (0..n * n * n).map(|i| [comps[0][i].re, comps[1][i].re, comps[2][i].re]).collect();
    GridField { n, samples }
}

/// Like [`to_grid`] but also returns the largest imaginary part seen, which
/// is roundoff for Hermitian coefficient sets.
pub fn to_grid_with_imag(w: &SpectralField) -> (GridField, f64) {
    let n = w.n;
    let mut comps: Vec<Vec<Complex64>> =
        (0..3).map(|c| w.coeffs.iter().map(|z| z[c]).collect()).collect();
    for comp in comps.iter_mut() {
        fft::inverse(comp, n);
    }
    let imag = comps.iter().flat_map(|c| c.iter().map(|z| z.im.abs())).fold(0.0, f64::max);
    let samples = (0..n * n * n).map(|i| [comps[0][i].re, comps[1][i].re, comps[2][i].re]).collect();
    (GridField { n, samples }, imag)
}

/// Transforms grid samples to coefficients. Nyquist planes are dropped and
/// the coefficient set is made exactly Hermitian.
pub fn from_grid(g: &GridField, flags: GridFlags) -> SpectralField {
    let n = g.n;
    let s = 1.0 / (n * n * n) as f64;
    let mut comps: Vec<Vec<Complex64>> =
        (0..3).map(|c| g.samples.iter().map(|v| Complex64::new(v[c], 0.0)).collect()).collect();
    for comp in comps.iter_mut() {
        fft::forward(comp, n);
    }
    let coeffs: Vec<CVec3> = (0..n * n * n)
        .map(|i| {
            let k = wave_of_index(i, n);
            if !k.in_band(n) {
                return ZERO_CV;
            }
            let j = slot(-k.k1, n) + n * (slot(-k.k2, n) + n * slot(-k.k3, n));
            let mut c = ZERO_CV;
            for (d, comp) in comps.iter().enumerate() {
                c[d] = (comp[i] + comp[j].conj()) * (0.5 * s);
            }
            c
        })
        .collect();
    let mut out = SpectralField { n, coeffs, divergence_free: false, exact: false };
    if flags.divergence_free || flags.exact {
        leray_in_place(&mut out.coeffs, n);
    }
    if flags.exact {
        out.coeffs[0] = ZERO_CV;
    }
    out.detect_flags();
    out
}

pub(crate) fn leray_in_place(coeffs: &mut [CVec3], n: usize) {
    parallel::for_each_chunk_mut(coeffs, n * n, |i3, plane| {
        for (off, c) in plane.iter_mut().enumerate() {
            let k = wave_of_index(off + i3 * n * n, n);
            if k == WaveVector::ZERO {
                continue;
            }
            let kv = k.as_vec3();
            let p = kdot(&kv, c) / k.norm_sq() as f64;
            for d in 0..3 {
                c[d] -= p * kv[d];
            }
        }
    });
}

/// Exact evaluation of a field at arbitrary points, `Re sum_k c(k) e^{i k.x}`,
/// over the nonzero modes only.
#[derive(Clone, Debug)]
pub struct FieldEvaluator {
    mean: [f64; 3],
    /// (k, 2 c(k)) for the positive half of the support
    modes: Vec<([i32; 3], CVec3)>,
    kmax: [usize; 3],
}

const STACK_K: usize = 16;

impl FieldEvaluator {
    pub fn new(w: &SpectralField) -> Self {
        let mean = w.mean();
        let mut modes = Vec::new();
        let mut kmax = [0usize; 3];
        for (k, c) in w.modes() {
            if !k.is_positive() {
                continue;
            }
            let ka = k.as_array();
            for d in 0..3 {
                kmax[d] = kmax[d].max(ka[d].unsigned_abs() as usize);
            }
            modes.push(([ka[0] as i32, ka[1] as i32, ka[2] as i32], cscale(&c, 2.0.into())));
        }
        Self { mean: [mean[0], mean[1], mean[2]], modes, kmax }
    }

    pub fn mode_count(&self) -> usize {
        self.modes.len()
    }

    #[inline]
    fn with_phases<R>(&self, x: &Vec3, f: impl FnOnce(&[&[Complex64]; 3]) -> R) -> R {
        let big = self.kmax.iter().any(|&k| k > STACK_K);
        if big {
            let e: Vec<Vec<Complex64>> = (0..3).map(|d| phase_table(x[d], self.kmax[d])).collect();
            f(&[&e[0], &e[1], &e[2]])
        } else {
            let mut e = [[ZERO_C; 2 * STACK_K + 1]; 3];
            for d in 0..3 {
                fill_phases(x[d], self.kmax[d], &mut e[d]);
            }
            let s = [
                &e[0][..2 * self.kmax[0] + 1],
                &e[1][..2 * self.kmax[1] + 1],
                &e[2][..2 * self.kmax[2] + 1],
            ];
            f(&s)
        }
    }

    pub fn value(&self, x: &Vec3) -> Vec3 {
        let k0 = [self.kmax[0] as i32, self.kmax[1] as i32, self.kmax[2] as i32];
        self.with_phases(x, |e| {
            let mut v = self.mean;
            for (k, c) in &self.modes {
                let p = e[0][(k[0] + k0[0]) as usize]
                    * e[1][(k[1] + k0[1]) as usize]
                    * e[2][(k[2] + k0[2]) as usize];
                for d in 0..3 {
                    v[d] += c[d].re * p.re - c[d].im * p.im;
                }
            }
            Vec3::new(v[0], v[1], v[2])
        })
    }

    /// Value and Jacobian `J[i][j] = d w_i / d x_j`.
    pub fn value_and_gradient(&self, x: &Vec3) -> (Vec3, Mat3) {
        let k0 = [self.kmax[0] as i32, self.kmax[1] as i32, self.kmax[2] as i32];
        self.with_phases(x, |e| {
            let mut v = self.mean;
            let mut g = [[0.0; 3]; 3];
            for (k, c) in &self.modes {
                let p = e[0][(k[0] + k0[0]) as usize]
                    * e[1][(k[1] + k0[1]) as usize]
                    * e[2][(k[2] + k0[2]) as usize];
                for d in 0..3 {
                    let z = c[d] * p;
                    v[d] += z.re;
                    for j in 0..3 {
                        g[d][j] -= k[j] as f64 * z.im;
                    }
                }
            }
            (
                Vec3::new(v[0], v[1], v[2]),
                Mat3::new(
                    g[0][0], g[0][1], g[0][2], g[1][0], g[1][1], g[1][2], g[2][0], g[2][1], g[2][2],
                ),
            )
        })
    }
}

fn fill_phases(x: f64, kmax: usize, out: &mut [Complex64]) {
    let (s, c) = x.sin_cos();
    let e = Complex64::new(c, s);
    out[kmax] = Complex64::new(1.0, 0.0);
    let mut p = Complex64::new(1.0, 0.0);
    for m in 1..=kmax {
        p *= e;
        // re-anchor every few powers to keep the recurrence at full precision
        if m % 8 == 0 {
            let (s, c) = (m as f64 * x).sin_cos();
            p = Complex64::new(c, s);
        }
        out[kmax + m] = p;
        out[kmax - m] = p.conj();
    }
}

fn phase_table(x: f64, kmax: usize) -> Vec<Complex64> {
    let mut out = vec![ZERO_C; 2 * kmax + 1];
    fill_phases(x, kmax, &mut out);
    out
}

/// `Re sum_k c(k) e^{i k.x}` at one point.
pub fn evaluate_at(w: &SpectralField, x: Vec3) -> Vec3 {
    w.evaluator().value(&x)
}

/// Declarative field constructors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FieldSpec {
    /// `(A sin x3 + C cos x2, B sin x1 + A cos x3, C sin x2 + B cos x1)`
    #[serde(rename = "abc")]
    AbcPreset { a: f64, b: f64, c: f64 },
    /// `Re(amplitude e^{i k.x})`, amplitude given as `[re, im]` per component.
    SingleMode { k: [i64; 3], amplitude: [[f64; 2]; 3] },
    /// Gaussian coefficients with variance `|k|^-4` on `0 < |k| <= kmax`,
    /// Leray-projected and scaled to unit mean-square. Non-exact variants
    /// also draw a standard normal mean. A missing seed must be filled by
    /// [`FieldSpec::with_seeds`] before realization.
    #[serde(alias = "random")]
    RandomBandLimited {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
        kmax: i64,
        #[serde(default = "default_true")]
        exact: bool,
    },
    Constant { c: [f64; 3] },
    Sum { terms: Vec<FieldSpec> },
    Scaled { factor: f64, field: Box<FieldSpec> },
}

impl FieldSpec {
    pub fn abc(a: f64, b: f64, c: f64) -> Self {
        FieldSpec::AbcPreset { a, b, c }
    }

    pub fn single_mode(k: [i64; 3], amplitude: CVec3) -> Self {
        FieldSpec::SingleMode {
            k,
            amplitude: [
                [amplitude[0].re, amplitude[0].im],
                [amplitude[1].re, amplitude[1].im],
                [amplitude[2].re, amplitude[2].im],
            ],
        }
    }

    pub fn random(seed: u64, kmax: i64, exact: bool) -> Self {
        FieldSpec::RandomBandLimited { seed: Some(seed), kmax, exact }
    }

    pub fn constant(c: [f64; 3]) -> Self {
        FieldSpec::Constant { c }
    }

    pub fn scaled(self, factor: f64) -> Self {
        FieldSpec::Scaled { factor, field: Box::new(self) }
    }

    /// Fills every missing random seed with `derive_seed(base, slot)`,
    /// advancing `slot` once per random leaf in depth-first order.
    pub fn with_seeds(&self, base: u64, slot: &mut u64) -> FieldSpec {
        match self {
            FieldSpec::RandomBandLimited { seed, kmax, exact } => {
                let s = seed.unwrap_or_else(|| derive_seed(base, *slot));
                *slot += 1;
                FieldSpec::RandomBandLimited { seed: Some(s), kmax: *kmax, exact: *exact }
            }
            FieldSpec::Sum { terms } => FieldSpec::Sum { terms: terms.iter().map(|t| t.with_seeds(base, slot)).collect() },
            FieldSpec::Scaled { factor, field } => {
                FieldSpec::Scaled { factor: *factor, field: Box::new(field.with_seeds(base, slot)) }
            }
            other => other.clone(),
        }
    }
}

fn default_true() -> bool {
    true
}

/// SplitMix64 of `base + slot * golden`, so nearby slots get unrelated seeds.
pub fn derive_seed(base: u64, slot: u64) -> u64 {
    let mut z = base.wrapping_add(slot.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Realizes a spec at resolution `n`.
pub fn make_field(spec: &FieldSpec, n: usize) -> Result<SpectralField> {
    if n < 2 || n % 2 != 0 {
        return Err(Error::InvalidSpec(format!("resolution {n} must be a positive even integer")));
    }
    let mut f = match spec {
        FieldSpec::AbcPreset { a, b, c } => {
            let mut f = SpectralField::zeros(n);
            let half = |re: f64, im: f64| Complex64::new(0.5 * re, 0.5 * im);
            f.set_mode(WaveVector::new(0, 0, 1), [half(0.0, -a), half(*a, 0.0), ZERO_C])?;
            f.set_mode(WaveVector::new(0, 1, 0), [half(*c, 0.0), ZERO_C, half(0.0, -c)])?;
            f.set_mode(WaveVector::new(1, 0, 0), [ZERO_C, half(0.0, -b), half(*b, 0.0)])?;
            f
        }
        FieldSpec::SingleMode { k, amplitude } => {
            let k = WaveVector::from(*k);
            let amp: CVec3 = [
                Complex64::new(amplitude[0][0], amplitude[0][1]),
                Complex64::new(amplitude[1][0], amplitude[1][1]),
                Complex64::new(amplitude[2][0], amplitude[2][1]),
            ];
            let mut f = SpectralField::zeros(n);
            let c = if k == WaveVector::ZERO { amp } else { cscale(&amp, 0.5.into()) };
            f.set_mode(k, c)?;
            f
        }
        FieldSpec::RandomBandLimited { seed, kmax, exact } => {
            let seed = seed.ok_or_else(|| Error::InvalidSpec("random field has no seed".into()))?;
            random_field(seed, *kmax, *exact, n)?
        }
        FieldSpec::Constant { c } => {
            let mut f = SpectralField::zeros(n);
            f.set_mode(WaveVector::ZERO, [c[0].into(), c[1].into(), c[2].into()])?;
            f
        }
        FieldSpec::Sum { terms } => {
            let mut acc = SpectralField::zeros(n);
            for t in terms {
                acc = acc.add(&make_field(t, n)?)?;
            }
            acc
        }
        FieldSpec::Scaled { factor, field } => make_field(field, n)?.scale(*factor),
    };
    f.detect_flags();
    Ok(f)
}

fn random_field(seed: u64, kmax: i64, exact: bool, n: usize) -> Result<SpectralField> {
    if kmax < 1 {
        return Err(Error::InvalidSpec(format!("kmax must be at least 1, got {kmax}")));
    }
    if 3 * kmax >= n as i64 {
        return Err(Error::SpecOutOfBand { k: WaveVector::new(kmax, 0, 0), n });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut gauss = || -> f64 { StandardNormal.sample(&mut rng) };
    let mut f = SpectralField::zeros(n);
    for k1 in -kmax..=kmax {
        for k2 in -kmax..=kmax {
            for k3 in -kmax..=kmax {
                let k = WaveVector::new(k1, k2, k3);
                let ksq = k.norm_sq();
                if !k.is_positive() || ksq > kmax * kmax {
                    continue;
                }
                let amp = std::f64::consts::FRAC_1_SQRT_2 / ksq as f64;
                let mut c = ZERO_CV;
                for comp in c.iter_mut() {
                    *comp = Complex64::new(gauss(), gauss()) * amp;
                }
                let i = f.index(k);
                let j = f.index(k.neg());
                f.coeffs[i] = c;
                f.coeffs[j] = conj3(&c);
            }
        }
    }
    leray_in_place(&mut f.coeffs, n);
    let rms = (f.l2_norm_sq() / torus_volume()).sqrt();
    if rms > 0.0 {
        f = f.scale(1.0 / rms);
    }
    if !exact {
        let m = [gauss(), gauss(), gauss()];
        f.coeffs[0] = [m[0].into(), m[1].into(), m[2].into()];
    }
    f.detect_flags();
    Ok(f)
}
