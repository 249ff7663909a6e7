//! Paths inside a helicity level set between two exact fields.

use std::collections::HashSet;

use rustfft::num_complex::Complex64;
use serde::Serialize;

use crate::calculus::{curl_eigenfield, helicity, helicity_bilinear, require_exact};
use crate::error::{Error, Result};
use crate::field::{SpectralField, WaveVector};
use crate::parallel;

pub const DEFAULT_POOL: usize = 12;
/// Levels with `|c|` at or below this use the zero-helicity construction.
pub const ZERO_LEVEL: f64 = 1e-8;
pub const LEVEL_MATCH_TOL: f64 = 1e-8;

/// The first `size` half-space modes ordered by `|k|^2`, then lexicographically.
pub fn bridge_pool(n: usize, size: usize) -> Vec<WaveVector> {
    let r = (n / 2) as i64 - 1;
    let mut modes: Vec<WaveVector> = Vec::new();
    for k1 in -r..=r {
        for k2 in -r..=r {
            for k3 in -r..=r {
                let k = WaveVector::new(k1, k2, k3);
                if k.is_positive() && k.in_band(n) {
                    modes.push(k);
                }
            }
        }
    }
    modes.sort_by_key(|k| (k.norm_sq(), k.k1, k.k2, k.k3));
    modes.truncate(size);
    modes
}

/// [`pick_bridge_from_pool`] with the default pool.
pub fn pick_bridge(w1: &SpectralField, w2: &SpectralField, sign: i32) -> Result<SpectralField> {
    pick_bridge_from_pool(w1, w2, sign, DEFAULT_POOL)
}

/// A field `beta` built from curl eigenfields of eigenvalue `sign |k|` with
/// `H(beta) = sign` and `beta` helicity-orthogonal to `w1` and `w2`.
pub fn pick_bridge_from_pool(
    w1: &SpectralField,
    w2: &SpectralField,
    sign: i32,
    pool_size: usize,
) -> Result<SpectralField> {
    require_exact(w1)?;
    require_exact(w2)?;
    w1.check_same(w2)?;
    let n = w1.resolution();
    let sign = if sign >= 0 { 1 } else { -1 };
    let pool = bridge_pool(n, pool_size);
    let occupied: HashSet<WaveVector> = w1.support().into_iter().chain(w2.support()).collect();

    let raw = match pool.iter().find(|k| !occupied.contains(k) && !occupied.contains(&k.neg())) {
        Some(&k) => curl_eigenfield(k, sign, Complex64::new(1.0, 0.0), n)?,
        None => constrained_combination(w1, w2, sign, &pool)?,
    };
    let h = helicity(&raw)?;
    if h * sign as f64 <= 0.0 {
        return Err(Error::PoolExhausted { pool: pool_size });
    }
    Ok(raw.scale(1.0 / h.abs().sqrt()))
}

/// Gram-Schmidt inside the span of the pool eigenfields (two real phases per
/// mode) against the linear constraints `B(., w1) = B(., w2) = 0`. The pool
/// elements are mutually helicity-orthogonal with helicity of sign `sign`,
/// so any nonzero combination has the requested sign.
fn constrained_combination(
    w1: &SpectralField,
    w2: &SpectralField,
    sign: i32,
    pool: &[WaveVector],
) -> Result<SpectralField> {
    let n = w1.resolution();
    let mut basis = Vec::with_capacity(2 * pool.len());
    for &k in pool {
        for phase in [Complex64::new(1.0, 0.0), Complex64::new(0.0, 1.0)] {
            let e = curl_eigenfield(k, sign, phase, n)?;
            let norm = helicity(&e)?.abs().sqrt();
            basis.push(e.scale(1.0 / norm));
        }
    }
    let m = basis.len();
    let a: Vec<f64> = basis.iter().map(|e| helicity_bilinear(e, w1)).collect::<Result<_>>()?;
    let b: Vec<f64> = basis.iter().map(|e| helicity_bilinear(e, w2)).collect::<Result<_>>()?;

    // orthonormal basis of the constraint rows in coefficient space
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for row in [a, b] {
        let original = dot(&row, &row).sqrt();
        let mut r = row;
        for q in &rows {
            let d = dot(&r, q);
            r.iter_mut().zip(q).for_each(|(x, y)| *x -= d * y);
        }
        let norm = dot(&r, &r).sqrt();
        if norm > 1e-12 * original {
            rows.push(r.into_iter().map(|x| x / norm).collect());
        }
    }

    for j in 0..m {
        let mut x = vec![0.0; m];
        x[j] = 1.0;
        // twice for stability
        for _ in 0..2 {
            for q in &rows {
                let d = dot(&x, q);
                x.iter_mut().zip(q).for_each(|(v, y)| *v -= d * y);
            }
        }
        if dot(&x, &x).sqrt() > 1e-6 {
            let mut out = SpectralField::zeros(n);
            for (xi, e) in x.iter().zip(&basis) {
                if *xi != 0.0 {
                    out = out.combine(1.0, e, *xi)?;
                }
            }
            return Ok(out);
        }
    }
    Err(Error::PoolExhausted { pool: pool.len() })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    Nonzero,
    Zero,
}

/// A sampled two-leg path: `t` in `[0, 1]` joins the scaled bridge to `w1`,
/// `t` in `[-1, 0]` joins `w2` to it.
#[derive(Clone, Debug)]
pub struct HelicityPath {
    pub w1: SpectralField,
    pub w2: SpectralField,
    pub bridge: SpectralField,
    pub level: f64,
    pub branch: Branch,
    pub samples: Vec<(f64, SpectralField)>,
}

impl HelicityPath {
    /// The path at parameter `t`.
    pub fn at(&self, t: f64) -> Result<SpectralField> {
        let end = if t >= 0.0 { &self.w1 } else { &self.w2 };
        let s = t.abs();
        match self.branch {
            Branch::Nonzero => end.combine(s, &self.bridge, ((1.0 - s * s) * self.level.abs()).sqrt()),
            Branch::Zero => end.combine(s, &self.bridge, 1.0 - s),
        }
    }

    pub fn bridge_modes(&self) -> Vec<[i64; 3]> {
        self.bridge.support().into_iter().filter(|k| k.is_positive()).map(|k| k.as_array()).collect()
    }
}

pub fn connect_level_set(w1: &SpectralField, w2: &SpectralField, n_samples: usize) -> Result<HelicityPath> {
    connect_level_set_with_pool(w1, w2, n_samples, DEFAULT_POOL)
}

pub fn connect_level_set_with_pool(
    w1: &SpectralField,
    w2: &SpectralField,
    n_samples: usize,
    pool_size: usize,
) -> Result<HelicityPath> {
    if n_samples < 3 {
        return Err(Error::InvalidArgument(format!("a path needs at least 3 samples, got {n_samples}")));
    }
    w1.check_same(w2)?;
    let (h1, h2) = (helicity(w1)?, helicity(w2)?);
    if (h1 - h2).abs() > LEVEL_MATCH_TOL * (h1.abs() + 1.0) {
        return Err(Error::LevelMismatch { h1, h2 });
    }
    let level = h1;
    let (branch, bridge) = if level.abs() > ZERO_LEVEL {
        (Branch::Nonzero, pick_bridge_from_pool(w1, w2, if level > 0.0 { 1 } else { -1 }, pool_size)?)
    } else {
        let plus = pick_bridge_from_pool(w1, w2, 1, pool_size)?;
        let minus = pick_bridge_from_pool(w1, w2, -1, pool_size)?;
        (Branch::Zero, plus.add(&minus)?)
    };
    let mut path = HelicityPath { w1: w1.clone(), w2: w2.clone(), bridge, level, branch, samples: Vec::new() };
    let ts: Vec<f64> = (0..n_samples).map(|j| -1.0 + 2.0 * j as f64 / (n_samples - 1) as f64).collect();
    let samples = parallel::map_slice(&ts, |&t| path.at(t).map(|w| (t, w)));
    path.samples = samples.into_iter().collect::<Result<_>>()?;
    Ok(path)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PathReport {
    pub level: f64,
    pub n_samples: usize,
    pub max_deviation: f64,
    pub branch: Branch,
    pub bridge_modes: Vec<[i64; 3]>,
    /// Max coefficient error of the `t = 1` and `t = -1` samples against the endpoints
    pub endpoint_error: f64,
    /// `max_i |B(beta, w_i)| / (|beta| |w_i|)`
    pub orthogonality: f64,
    pub bridge_helicity: f64,
    pub min_norm: f64,
}

pub fn verify_path(path: &HelicityPath) -> Result<PathReport> {
    let devs = parallel::map_slice(&path.samples, |(_, w)| -> Result<(f64, f64)> {
        Ok(((helicity(w)? - path.level).abs(), w.l2_norm()))
    });
    let mut max_deviation: f64 = 0.0;
    let mut min_norm = f64::INFINITY;
    for d in devs {
        let (dev, norm) = d?;
        max_deviation = max_deviation.max(dev);
        min_norm = min_norm.min(norm);
    }
    if path.samples.is_empty() {
        min_norm = 0.0;
    }
    let mut endpoint_error: f64 = 0.0;
    for (t, w) in &path.samples {
        if *t == 1.0 {
            endpoint_error = endpoint_error.max(w.max_coeff_diff(&path.w1));
        } else if *t == -1.0 {
            endpoint_error = endpoint_error.max(w.max_coeff_diff(&path.w2));
        }
    }
    let bnorm = path.bridge.l2_norm();
    let mut orthogonality: f64 = 0.0;
    for w in [&path.w1, &path.w2] {
        let scale = bnorm * w.l2_norm();
        if scale > 0.0 {
            orthogonality = orthogonality.max(helicity_bilinear(&path.bridge, w)?.abs() / scale);
        }
    }
    Ok(PathReport {
        level: path.level,
        n_samples: path.samples.len(),
        max_deviation,
        branch: path.branch,
        bridge_modes: path.bridge_modes(),
        endpoint_error,
        orthogonality,
        bridge_helicity: helicity(&path.bridge)?,
        min_norm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calculus::curl_eigenfield;
    use crate::field::{make_field, FieldSpec};

    #[test]
    fn pool_order() {
        let q = bridge_pool(16, 12);
        assert!(q[..3].iter().all(|k| k.norm_sq() == 1));
        assert!(q[3..9].iter().all(|k| k.norm_sq() == 2));
        assert!(q[9..].iter().all(|k| k.norm_sq() == 3));
        assert!(q.windows(2).all(|w| w[0].norm_sq() <= w[1].norm_sq()));
    }

    #[test]
    fn disjoint_bridge() {
        let w1 = make_field(&FieldSpec::abc(1.0, 0.0, 0.0), 16).unwrap();
        let w2 = make_field(&FieldSpec::abc(0.0, 1.0, 0.0), 16).unwrap();
        let beta = pick_bridge(&w1, &w2, -1).unwrap();
        assert!((helicity(&beta).unwrap() + 1.0).abs() < 1e-12);
        assert_eq!(helicity_bilinear(&beta, &w1).unwrap(), 0.0);
    }

    #[test]
    fn saturated_pool_uses_gram_schmidt() {
        let n = 16;
        let pool = bridge_pool(n, 3);
        let mut w1 = SpectralField::zeros(n);
        for (j, &k) in pool.iter().enumerate() {
            let e = curl_eigenfield(k, 1, Complex64::new(1.0, 0.3 * j as f64), n).unwrap();
            w1 = w1.add(&e).unwrap();
        }
        let w2 = curl_eigenfield(pool[0], -1, Complex64::new(0.0, 1.0), n).unwrap().add(&w1).unwrap();
        let beta = pick_bridge_from_pool(&w1, &w2, 1, 3).unwrap();
        assert!((helicity(&beta).unwrap() - 1.0).abs() < 1e-12);
        assert!(helicity_bilinear(&beta, &w1).unwrap().abs() < 1e-12);
        assert!(helicity_bilinear(&beta, &w2).unwrap().abs() < 1e-12);
    }

    #[test]
    fn too_few_samples() {
        let w = make_field(&FieldSpec::abc(1.0, 0.0, 0.0), 8).unwrap();
        assert!(matches!(connect_level_set(&w, &w, 2), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn empty_path_report() {
        let w = make_field(&FieldSpec::abc(1.0, 0.0, 0.0), 8).unwrap();
        let mut path = connect_level_set(&w, &w, 3).unwrap();
        path.samples.clear();
        let r = verify_path(&path).unwrap();
        assert_eq!(r.n_samples, 0);
        assert_eq!(r.max_deviation, 0.0);
    }
}
