//! Differential and integral operators on spectral fields: curl and its
//! inverse on exact fields, Leray projection, the Lie bracket, the helicity
//! family of quadratic forms, rotation classes and the pointwise quotient
//! of collinear fields.

use std::f64::consts::PI;

use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::field::{
    cinner, cscale, from_grid, kcross, kdot, leray_in_place, to_grid, torus_volume,
    wave_of_index, CVec3, GridField, GridFlags, GridScalar, ScalarSpectral, SpectralField, Vec3,
    WaveVector, ZERO_C, ZERO_CV,
};
use crate::parallel;

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Default relative divergence residual accepted by operators that require
/// divergence-free input.
pub const DIVERGENCE_TOL: f64 = 1e-10;
/// Default relative size of the mean mode accepted as "exact".
pub const EXACT_TOL: f64 = 1e-12;
/// Default non-gradient fraction rejected by [`gradient_potential`].
pub const GRADIENT_TOL: f64 = 1e-8;
/// Default collinearity residual rejected by [`collinearity_factor`].
pub const COLLINEARITY_TOL: f64 = 1e-6;

/// Element of `H_1(T^3, R)` in the coordinate-circle basis.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RotationClass {
    pub lambda: [f64; 3],
}

pub fn require_divergence_free(w: &SpectralField) -> Result<()> {
    let residual = w.divergence_residual();
    if residual > DIVERGENCE_TOL {
        return Err(Error::NotDivergenceFree { residual });
    }
    Ok(())
}

pub fn require_exact(w: &SpectralField) -> Result<()> {
    require_divergence_free(w)?;
    let m = w.mean();
    let scale = w.max_coeff_norm();
    if m.norm() > EXACT_TOL * scale {
        return Err(Error::NotExact { mean: [m[0], m[1], m[2]] });
    }
    Ok(())
}

/// `i k . c(k)`
pub fn divergence(w: &SpectralField) -> ScalarSpectral {
    let n = w.resolution();
    let coeffs = parallel::map_range(w.raw().len(), |i| {
        let k = wave_of_index(i, n).as_vec3();
        I * kdot(&k, &w.raw()[i])
    });
    ScalarSpectral::from_raw(n, coeffs)
}

/// `i k c(k)`
pub fn gradient(f: &ScalarSpectral) -> SpectralField {
    let n = f.resolution();
    let coeffs = parallel::map_range(f.raw().len(), |i| {
        let k = wave_of_index(i, n).as_vec3();
        let c = I * f.raw()[i];
        [c * k[0], c * k[1], c * k[2]]
    });
    SpectralField::from_raw(n, coeffs)
}

/// `i k x c(k)`
pub fn curl(w: &SpectralField) -> SpectralField {
    let mut out = w.map_modes(|k, c| cscale(&kcross(&k.as_vec3(), c), I));
    out.set_flags(true, true);
    out
}

/// Removes the gradient part of every nonzero mode.
pub fn leray_project(w: &SpectralField) -> SpectralField {
    let n = w.resolution();
    let mut coeffs = w.raw().to_vec();
    leray_in_place(&mut coeffs, n);
    SpectralField::from_raw(n, coeffs)
}

fn curl_inv_unchecked(w: &SpectralField) -> SpectralField {
    let mut out = w.map_modes(|k, c| {
        if k == WaveVector::ZERO {
            return ZERO_CV;
        }
        cscale(&kcross(&k.as_vec3(), c), I / k.norm_sq() as f64)
    });
    out.set_flags(true, true);
    out
}

/// Inverse of `curl` on exact divergence-free fields: `i k x c(k) / |k|^2`.
pub fn curl_inv(w: &SpectralField) -> Result<SpectralField> {
    require_exact(w)?;
    Ok(curl_inv_unchecked(w))
}

/// `(2 pi)^3 sum_k Re(conj(u_k) . w_k)`
pub fn l2_inner(u: &SpectralField, w: &SpectralField) -> Result<f64> {
    u.check_same(w)?;
    let (a, b) = (u.raw(), w.raw());
    Ok(torus_volume() * parallel::sum_range(a.len(), |i| cinner(&a[i], &b[i]).re))
}

/// `int u . curl^-1 w`, summed mode by mode in one pass so that every
/// member of the helicity family shares the same arithmetic.
fn helicity_pairing(u: &SpectralField, w: &SpectralField) -> Result<f64> {
    u.check_same(w)?;
    require_exact(u)?;
    require_exact(w)?;
    let n = w.resolution();
    let (a, b) = (u.raw(), w.raw());
    Ok(torus_volume()
        * parallel::sum_range(b.len(), |i| {
            if i == 0 {
                return 0.0;
            }
            let k = wave_of_index(i, n);
            let curl_b = cscale(&kcross(&k.as_vec3(), &b[i]), I);
            cinner(&a[i], &curl_b).re / k.norm_sq() as f64
        }))
}

/// `H(w) = int w . curl^-1 w`
pub fn helicity(w: &SpectralField) -> Result<f64> {
    helicity_pairing(w, w)
}

/// Polarization of the helicity: `int u . curl^-1 w`.
pub fn helicity_bilinear(u: &SpectralField, w: &SpectralField) -> Result<f64> {
    helicity_pairing(u, w)
}

/// `K(w) = 2 curl^-1 w`, the gradient of the helicity.
pub fn helicity_kernel(w: &SpectralField) -> Result<SpectralField> {
    Ok(curl_inv(w)?.scale(2.0))
}

/// `int B . curl^-1 omega`
pub fn cross_helicity(omega: &SpectralField, b: &SpectralField) -> Result<f64> {
    helicity_pairing(b, omega)
}

/// `int B . curl^-1 B`
pub fn magnetic_helicity(b: &SpectralField) -> Result<f64> {
    helicity(b)
}

/// `lambda_k = int i_v dmu ^ dx_k / (2 pi) = (2 pi)^2 mean_k(v)`.
pub fn rotation_class_algebraic(v: &SpectralField) -> RotationClass {
    let m = v.mean();
    let s = (2.0 * PI).powi(2);
    RotationClass { lambda: [s * m[0], s * m[1], s * m[2]] }
}

/// Keeps modes with `3 |k_i| < n`.
pub fn dealias(w: &SpectralField) -> SpectralField {
    let n = w.resolution() as i64;
    w.map_modes(|k, c| if 3 * k.max_abs() < n { *c } else { ZERO_CV })
}

/// Pointwise product `a x b` on the grid, truncated by the 2/3 rule.
pub fn cross_dealiased(a: &SpectralField, b: &SpectralField) -> Result<SpectralField> {
    a.check_same(b)?;
    let (ga, gb) = (to_grid(a), to_grid(b));
    let prod = GridField::new(
        ga.n,
        ga.samples
            .iter()
            .zip(&gb.samples)
            .map(|(x, y)| {
                [x[1] * y[2] - x[2] * y[1], x[2] * y[0] - x[0] * y[2], x[0] * y[1] - x[1] * y[0]]
            })
            .collect(),
    );
    Ok(dealias(&from_grid(&prod, GridFlags::default())))
}

/// `[w, v] = curl(v x w) = (w . grad) v - (v . grad) w`.
pub fn lie_bracket(w: &SpectralField, v: &SpectralField) -> Result<SpectralField> {
    require_divergence_free(w)?;
    require_divergence_free(v)?;
    Ok(curl(&cross_dealiased(v, w)?))
}

/// Scalar potential `J` with `grad J = F` for a gradient field `F`.
pub fn gradient_potential(f: &SpectralField) -> Result<ScalarSpectral> {
    let scale = f.l2_norm();
    if scale == 0.0 {
        return Ok(ScalarSpectral::zeros(f.resolution()));
    }
    let solenoidal = leray_project(f);
    let fraction = solenoidal.l2_norm() / scale;
    if fraction > GRADIENT_TOL {
        return Err(Error::NotAGradient { fraction });
    }
    let n = f.resolution();
    let c = f.raw();
    let coeffs = parallel::map_range(c.len(), |i| {
        let k = wave_of_index(i, n);
        if k == WaveVector::ZERO {
            return ZERO_C;
        }
        -I * kdot(&k.as_vec3(), &c[i]) / k.norm_sq() as f64
    });
    Ok(ScalarSpectral::from_raw(n, coeffs))
}

/// Unit helical vector `h` at mode `k` with `i k x h = sign |k| h`.
pub fn helical_vector(k: WaveVector, sign: i32) -> CVec3 {
    let kv = k.as_vec3();
    let khat = kv / kv.norm();
    // least-aligned coordinate axis
    let mut a = Vec3::zeros();
    let d = (0..3).min_by(|&i, &j| khat[i].abs().total_cmp(&khat[j].abs())).unwrap();
    a[d] = 1.0;
    let e1 = a.cross(&khat).normalize();
    let e2 = khat.cross(&e1);
    let s = if sign >= 0 { 1.0 } else { -1.0 };
    let r = std::f64::consts::FRAC_1_SQRT_2;
    [
        Complex64::new(e1[0], s * e2[0]) * r,
        Complex64::new(e1[1], s * e2[1]) * r,
        Complex64::new(e1[2], s * e2[2]) * r,
    ]
}

/// Real curl eigenfield `Re(phase h e^{i k.x})` with eigenvalue `sign |k|`.
pub fn curl_eigenfield(k: WaveVector, sign: i32, phase: Complex64, n: usize) -> Result<SpectralField> {
    let mut f = SpectralField::zeros(n);
    f.set_mode(k, cscale(&helical_vector(k, sign), phase * 0.5))?;
    Ok(f)
}

/// Splits a field into its positive- and negative-helicity parts,
/// discarding the mean and any gradient part.
pub fn helical_split(w: &SpectralField) -> (SpectralField, SpectralField) {
    let part = |s: f64| {
        w.map_modes(move |k, c| {
            if k == WaveVector::ZERO {
                return ZERO_CV;
            }
            let kv = k.as_vec3();
            let khat = kv / kv.norm();
            let along = kdot(&khat, c);
            let perp = [c[0] - along * khat[0], c[1] - along * khat[1], c[2] - along * khat[2]];
            let rot = cscale(&kcross(&khat, c), I * s);
            [(perp[0] + rot[0]) * 0.5, (perp[1] + rot[1]) * 0.5, (perp[2] + rot[2]) * 0.5]
        })
    };
    (part(1.0), part(-1.0))
}

/// Pointwise quotient `g = (v . w) / |w|^2` of two collinear fields.
#[derive(Clone, Debug)]
pub struct CollinearityFactor {
    pub g: GridScalar,
    /// `max |v x w| / (|v||w| + eps)` over retained nodes
    pub residual: f64,
    /// Nodes where `|w| > tol`
    pub retained: Vec<bool>,
}

impl CollinearityFactor {
    pub fn n_extended(&self) -> usize {
        self.retained.iter().filter(|r| !**r).count()
    }
}

pub fn collinearity_factor(v: &SpectralField, w: &SpectralField, tol: f64) -> Result<CollinearityFactor> {
    v.check_same(w)?;
    collinearity_factor_grid(&to_grid(v), &to_grid(w), tol)
}

/// Grid version of [`collinearity_factor`]. Nodes with `|w| <= tol` get the
/// inverse-square-distance average of the retained nodes in the smallest
/// periodic cube that contains any, widened by one cell.
pub fn collinearity_factor_grid(v: &GridField, w: &GridField, tol: f64) -> Result<CollinearityFactor> {
    if v.n != w.n {
        return Err(Error::ResolutionMismatch { left: v.n, right: w.n });
    }
    let n = w.n;
    let total = n * n * n;
    let wmax = (0..total).map(|i| w.at(i).norm()).fold(0.0, f64::max);
    let eps = 1e-14 * wmax * wmax;
    let retained: Vec<bool> = (0..total).map(|i| w.at(i).norm() > tol).collect();
    let mut g = vec![0.0; total];
    let mut residual = 0.0_f64;
    for i in 0..total {
        if retained[i] {
            let (a, b) = (v.at(i), w.at(i));
            g[i] = a.dot(&b) / b.norm_squared();
            residual = residual.max(a.cross(&b).norm() / (a.norm() * b.norm() + eps));
        }
    }
    if residual > COLLINEARITY_TOL {
        return Err(Error::NonCollinear { residual });
    }
    if !retained.iter().any(|&r| r) {
        return Err(Error::InvalidArgument(format!("no node has |w| > {tol}")));
    }
    let ni = n as i64;
    let at = |a: i64, b: i64, c: i64| {
        (a.rem_euclid(ni) + ni * (b.rem_euclid(ni) + ni * c.rem_euclid(ni))) as usize
    };
    let filled: Vec<(usize, f64)> = parallel::map_range(total, |i| {
        if retained[i] {
            return (i, g[i]);
        }
        let (i1, i2, i3) = ((i % n) as i64, ((i / n) % n) as i64, (i / (n * n)) as i64);
        let found = (1..=ni / 2)
            .find(|&r| {
                (-r..=r).any(|a| {
                    (-r..=r).any(|b| (-r..=r).any(|c| retained[at(i1 + a, i2 + b, i3 + c)]))
                })
            })
            .unwrap_or(ni / 2);
        let r = (found + 1).min(ni / 2);
        let (mut num, mut den) = (0.0, 0.0);
        for a in -r..=r {
            for b in -r..=r {
                for c in -r..=r {
                    let j = at(i1 + a, i2 + b, i3 + c);
                    if retained[j] {
                        let wgt = 1.0 / (a * a + b * b + c * c) as f64;
                        num += wgt * g[j];
                        den += wgt;
                    }
                }
            }
        }
        (i, num / den)
    });
    let g = GridScalar::new(n, filled.into_iter().map(|(_, x)| x).collect());
    Ok(CollinearityFactor { g, residual, retained })
}

/// Relative error of the central difference of `H` along `u` against
/// `2 int curl^-1 w . u`.
pub fn helicity_derivative_fd_check(w: &SpectralField, u: &SpectralField, eps: f64) -> Result<f64> {
    let exact = 2.0 * helicity_bilinear(u, w)?;
    let plus = helicity(&w.combine(1.0, u, eps)?)?;
    let minus = helicity(&w.combine(1.0, u, -eps)?)?;
    let fd = (plus - minus) / (2.0 * eps);
    Ok((fd - exact).abs() / (exact.abs() + 1.0))
}

/// Max per-mode distance between the two fields, relative to the largest
/// coefficient of `reference`.
pub fn relative_mode_error(field: &SpectralField, reference: &SpectralField) -> f64 {
    let scale = reference.max_coeff_norm().max(f64::MIN_POSITIVE);
    field.max_coeff_diff(reference) / scale
}
