//! Acceptance criteria, one line each. Runs as a plain binary so the lines
//! always reach the test log. A failing criterion makes the process exit
//! non-zero only with `ACCEPTANCE_STRICT=1`, so that `cargo test` still runs
//! the test targets after this one.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::time::Instant;

use helitorus::annulus::{birkhoff_report, OrbitClass, TwistSystem};
use helitorus::calculus::{
    collinearity_factor, cross_dealiased, cross_helicity, curl, curl_eigenfield, curl_inv, helicity,
    helicity_bilinear, helicity_kernel, magnetic_helicity, relative_mode_error,
    rotation_class_algebraic,
};
use helitorus::experiments::{coadjoint_sides, geometric_rotation_class, run_experiment, Experiment};
use helitorus::field::{node_position, torus_volume};
use helitorus::parallel;
use helitorus::paths::connect_level_set;
use helitorus::transport::{
    apply_inverse, diffeo_jacobian, pushforward_sampled, random_shear, uniform_seeds, SampledDiffeo, VolumeDiffeo,
};
use helitorus::{from_grid, make_field, to_grid, FieldSpec, GridField, GridFlags, SpectralField, Vec3};
use rustfft::num_complex::Complex64;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn abc_closed(a: f64, b: f64, c: f64, x: Vec3) -> Vec3 {
    Vec3::new(a * x[2].sin() + c * x[1].cos(), b * x[0].sin() + a * x[2].cos(), c * x[1].sin() + b * x[0].cos())
}

fn random_exact(seed: u64, n: usize) -> SpectralField {
    make_field(&FieldSpec::random(seed, 4, true), n).unwrap()
}

/// Trapezoid rule on the `n^3` grid, exact for trigonometric polynomials of degree below `n`.
fn grid_integral(n: usize, f: impl Fn(Vec3) -> f64) -> f64 {
    let h = 2.0 * PI / n as f64;
    (0..n * n * n).map(|i| f(node_position(i, n))).sum::<f64>() * h * h * h
}

fn beltrami() -> Outcome {
    let n = 16;
    let mut worst: f64 = 0.0;
    for &(a, b, c) in &[(1.0, 1.0, 1.0), (2.0, 0.0, 1.0), (0.3, -1.2, 0.8)] {
        let w = make_field(&FieldSpec::abc(a, b, c), n).unwrap();
        let sampled =
            from_grid(&GridField::from_fn(n, |x| abc_closed(a, b, c, x)), GridFlags { divergence_free: true, exact: true });
        worst = worst
            .max(relative_mode_error(&w, &sampled))
            .max(relative_mode_error(&curl(&w), &sampled))
            .max(relative_mode_error(&curl_inv(&w).unwrap(), &sampled));
    }
    outcome(worst <= 1e-12, format!("max per-mode error {worst:.2e} (tol 1e-12)"))
}

fn helicity_closed_form() -> Outcome {
    let n = 16;
    let mut worst: f64 = 0.0;
    let mut worst_quad: f64 = 0.0;
    for &(a, b, c) in &[(1.0, 1.0, 1.0), (2.0, 0.0, 1.0), (0.3, 0.7, -1.1), (1.5, -0.5, 0.25), (0.0, 0.0, 3.0)] {
        let w = make_field(&FieldSpec::abc(a, b, c), n).unwrap();
        let h = helicity(&w).unwrap();
        let exact = torus_volume() * (a * a + b * b + c * c);
        // curl^-1 of a Beltrami field with eigenvalue 1 is the field itself
        let quad = grid_integral(n, |x| abc_closed(a, b, c, x).norm_squared());
        worst = worst.max((h - exact).abs() / exact);
        worst_quad = worst_quad.max((h - quad).abs() / quad);
    }
    let pass = worst <= 1e-10 && worst_quad <= 1e-10;
    outcome(pass, format!("closed form rel {worst:.2e}, quadrature rel {worst_quad:.2e} (tol 1e-10)"))
}

/// Max pointwise error of the pushed field against `D phi(x) w(x)`, relative to `max |w|`.
fn pointwise_oracle(w: &SpectralField, pushed: &SpectralField, phi: &VolumeDiffeo, n_points: usize) -> f64 {
    let pts = uniform_seeds(n_points, 99);
    let scale = (0..n_points).map(|i| helitorus::evaluate_at(w, pts[i]).norm()).fold(0.0, f64::max);
    pts.iter()
        .map(|y| {
            let x = apply_inverse(phi, *y);
            let expected = diffeo_jacobian(phi, x) * helitorus::evaluate_at(w, x);
            (helitorus::evaluate_at(pushed, *y) - expected).norm() / scale
        })
        .fold(0.0, f64::max)
}

fn casimir_invariance() -> Outcome {
    let (n, n_out) = (32, 48);
    let mut shear_drift: f64 = 0.0;
    let mut shear_point: f64 = 0.0;
    for s in 0..10u64 {
        let w = random_exact(1000 + s, n);
        let phi = random_shear(s, 0.3);
        let (p, _) = pushforward_sampled(&w, &SampledDiffeo::new(&phi, n_out)).unwrap();
        let (h0, h1) = (helicity(&w).unwrap(), helicity(&p).unwrap());
        shear_drift = shear_drift.max((h1 - h0).abs() / h0.abs());
        shear_point = shear_point.max(pointwise_oracle(&w, &p, &phi, 8));
    }
    let generator = make_field(&FieldSpec::random(77, 2, true).scaled(0.5), n).unwrap();
    let phi = VolumeDiffeo::flow_map(generator, 0.5, 1e-3).unwrap();
    let sampled = SampledDiffeo::new(&phi, n_out);
    let mut flow_drift: f64 = 0.0;
    let mut flow_point: f64 = 0.0;
    let mut moved: f64 = f64::INFINITY;
    for s in 0..5u64 {
        let w = random_exact(2000 + s, n);
        let (p, _) = pushforward_sampled(&w, &sampled).unwrap();
        let (h0, h1) = (helicity(&w).unwrap(), helicity(&p).unwrap());
        flow_drift = flow_drift.max((h1 - h0).abs() / h0.abs());
        flow_point = flow_point.max(pointwise_oracle(&w, &p, &phi, 3));
        moved = moved.min(p.resample(n).sub(&w).unwrap().l2_norm() / w.l2_norm());
    }
    let pass = shear_drift <= 1e-9 && flow_drift <= 1e-4 && shear_point <= 1e-8 && flow_point <= 1e-6;
    outcome(
        pass,
        format!(
            "shear drift {shear_drift:.2e} (tol 1e-9), flow drift {flow_drift:.2e} (tol 1e-4); \
             pointwise oracle {shear_point:.1e} / {flow_point:.1e}; min relative change of the field {moved:.2}"
        ),
    )
}

fn kernel_identity() -> Outcome {
    let n = 32;
    let mut worst: f64 = 0.0;
    let mut worst_grid: f64 = 0.0;
    for s in 0..10u64 {
        let w = random_exact(3000 + s, n);
        let k = helicity_kernel(&w).unwrap();
        let wsq = w.l2_norm_sq();
        let f = cross_dealiased(&curl(&k), &w).unwrap();
        worst = worst.max(f.l2_norm() / wsq);
        let (gc, gw) = (to_grid(&curl(&k)), to_grid(&w));
        let sq = (0..n * n * n).map(|i| gc.at(i).cross(&gw.at(i)).norm_squared()).sum::<f64>() * (2.0 * PI / n as f64).powi(3);
        worst_grid = worst_grid.max(sq.sqrt() / wsq);
    }
    outcome(worst <= 1e-10 && worst_grid <= 1e-10, format!("|curl K x w| / |w|^2 {worst:.2e}, pointwise {worst_grid:.2e} (tol 1e-10)"))
}

fn derivative_formula() -> Outcome {
    let n = 16;
    let eps = 1e-3;
    let mut worst: f64 = 0.0;
    let mut worst_quad: f64 = 0.0;
    for s in 0..10u64 {
        let w = random_exact(4000 + s, n);
        let u = random_exact(4100 + s, n);
        let exact = 2.0 * helicity_bilinear(&w, &u).unwrap();
        let fd = (helicity(&w.combine(1.0, &u, eps).unwrap()).unwrap()
            - helicity(&w.combine(1.0, &u, -eps).unwrap()).unwrap())
            / (2.0 * eps);
        worst = worst.max((fd - exact).abs() / exact.abs());
        let (gi, gu) = (to_grid(&curl_inv(&w).unwrap()), to_grid(&u));
        let h = 2.0 * PI / n as f64;
        let quad = 2.0 * (0..n * n * n).map(|i| gi.at(i).dot(&gu.at(i))).sum::<f64>() * h * h * h;
        worst_quad = worst_quad.max((quad - exact).abs() / exact.abs());
    }
    outcome(
        worst <= 1e-10 && worst_quad <= 1e-10,
        format!("central difference rel {worst:.2e}, quadrature of 2 curl^-1 w . u rel {worst_quad:.2e} (tol 1e-10)"),
    )
}

/// Sum of unit-helicity eigenfields `sign_i` on the given modes, scaled to helicity `target`.
fn eigen_combo(n: usize, parts: &[([i64; 3], i32)], target: f64) -> SpectralField {
    let mut f = SpectralField::zeros(n);
    for (k, sign) in parts {
        let e = curl_eigenfield((*k).into(), *sign, Complex64::new(0.8, 0.6), n).unwrap();
        f = f.add(&e.scale(1.0 / helicity(&e).unwrap().abs().sqrt())).unwrap();
    }
    let h = helicity(&f).unwrap();
    if target == 0.0 {
        f
    } else {
        f.scale((target / h).sqrt())
    }
}

fn path_connectedness() -> Outcome {
    let n = 16;
    let abc = |a, b, c| make_field(&FieldSpec::abc(a, b, c), n).unwrap();
    let r1 = random_exact(5001, n);
    let h1 = helicity(&r1).unwrap();
    let r2 = (5002..)
        .map(|s| random_exact(s, n))
        .find(|f| helicity(f).unwrap().signum() == h1.signum())
        .unwrap();
    let r2 = r2.scale((h1 / helicity(&r2).unwrap()).sqrt());
    let pairs = vec![
        ("abc", abc(1.0, 0.0, 0.0), abc(0.0, 1.0, 0.0)),
        ("same", abc(1.0, 1.0, 1.0), abc(1.0, 1.0, 1.0)),
        (
            "zero",
            eigen_combo(n, &[([1, 0, 0], 1), ([0, 1, 0], -1)], 0.0),
            eigen_combo(n, &[([0, 0, 1], 1), ([1, 1, 0], -1)], 0.0),
        ),
        (
            "negative",
            eigen_combo(n, &[([1, 0, 0], -1), ([0, 1, 0], -1)], -5.0),
            eigen_combo(n, &[([0, 0, 1], -1), ([1, 1, 0], -1)], -5.0),
        ),
        ("random", r1, r2),
    ];
    let mut worst_dev: f64 = 0.0;
    let mut worst_orth: f64 = 0.0;
    let mut endpoints_exact = true;
    let mut min_samples = usize::MAX;
    let mut levels = Vec::new();
    for (_, w1, w2) in &pairs {
        let path = connect_level_set(w1, w2, 41).unwrap();
        let c = path.level;
        levels.push(c);
        min_samples = min_samples.min(path.samples.len());
        for (t, w) in &path.samples {
            worst_dev = worst_dev.max((helicity(w).unwrap() - c).abs() / (c.abs() + 1.0));
            if *t == 1.0 {
                endpoints_exact &= w.max_coeff_diff(w1) == 0.0;
            }
            if *t == -1.0 {
                endpoints_exact &= w.max_coeff_diff(w2) == 0.0;
            }
        }
        let b = &path.bridge;
        for w in [w1, w2] {
            worst_orth = worst_orth.max(helicity_bilinear(b, w).unwrap().abs() / (b.l2_norm() * w.l2_norm()));
        }
    }
    let has_zero = levels.iter().any(|c| c.abs() <= 1e-8);
    let has_negative = levels.iter().any(|c| *c < -1e-8);
    let pass = worst_dev <= 1e-10 && worst_orth <= 1e-10 && endpoints_exact && min_samples >= 41 && has_zero && has_negative;
    outcome(
        pass,
        format!(
            "5 pairs x {min_samples} samples: max |H - c|/(|c|+1) {worst_dev:.2e}, bridge orthogonality {worst_orth:.2e} \
             (tol 1e-10), endpoints exact: {endpoints_exact}"
        ),
    )
}

/// Independent fixed-point scan of the cubed standard-form twist map on a
/// `res x res` grid followed by finite-difference Newton refinement.
fn brute_force_period_three(delta: f64, res: usize) -> Vec<([f64; 2], f64)> {
    let two_pi = 2.0 * PI;
    let rc = two_pi / 3.0;
    let map3 = |th: f64, r: f64| {
        let (mut t, mut s) = (th, r);
        for _ in 0..3 {
            s += delta * (3.0 * t).sin();
            t += s;
        }
        [t - th - two_pi, s - r]
    };
    let (r_lo, r_hi) = (rc - 0.5, rc + 0.5);
    let cell = |i: usize, j: usize| [two_pi * i as f64 / res as f64, r_lo + (r_hi - r_lo) * j as f64 / (res - 1) as f64];
    let val: Vec<f64> = (0..res * res)
        .map(|idx| {
            let x = cell(idx % res, idx / res);
            let f = map3(x[0], x[1]);
            f[0].hypot(f[1])
        })
        .collect();
    let mut roots: Vec<([f64; 2], f64)> = Vec::new();
    for j in 1..res - 1 {
        for i in 0..res {
            let v = val[i + res * j];
            let is_min = (-1i64..=1).all(|di| {
                (-1i64..=1).all(|dj| {
                    let ii = (i as i64 + di).rem_euclid(res as i64) as usize;
                    let jj = (j as i64 + dj) as usize;
                    (di == 0 && dj == 0) || val[ii + res * jj] >= v
                })
            });
            if !is_min || v > 0.1 {
                continue;
            }
            let mut x = cell(i, j);
            let h = 1e-7;
            for _ in 0..50 {
                let f = map3(x[0], x[1]);
                if f[0].hypot(f[1]) < 1e-13 {
                    break;
                }
                let ft = map3(x[0] + h, x[1]);
                let fr = map3(x[0], x[1] + h);
                let a = [[(ft[0] - f[0]) / h, (fr[0] - f[0]) / h], [(ft[1] - f[1]) / h, (fr[1] - f[1]) / h]];
                let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
                x[0] -= (f[0] * a[1][1] - f[1] * a[0][1]) / det;
                x[1] -= (a[0][0] * f[1] - a[1][0] * f[0]) / det;
            }
            let f = map3(x[0], x[1]);
            if f[0].hypot(f[1]) > 1e-11 {
                continue;
            }
            x[0] = x[0].rem_euclid(two_pi);
            let gap = |a: f64, b: f64| {
                let d = (a - b).rem_euclid(two_pi);
                d.min(two_pi - d)
            };
            if roots.iter().any(|(y, _)| gap(y[0], x[0]) < 1e-8 && (y[1] - x[1]).abs() < 1e-8) {
                continue;
            }
            // trace of D(Pi^3) by central differences; the identity is added back
            let hh = 1e-6;
            let fp = map3(x[0] + hh, x[1]);
            let fm = map3(x[0] - hh, x[1]);
            let gp = map3(x[0], x[1] + hh);
            let gm = map3(x[0], x[1] - hh);
            let trace = 2.0 + (fp[0] - fm[0]) / (2.0 * hh) + (gp[1] - gm[1]) / (2.0 * hh);
            roots.push((x, trace));
        }
    }
    roots
}

fn poincare_birkhoff() -> Outcome {
    let mut counts_ok = true;
    let mut worst_res: f64 = 0.0;
    let mut c_fit: f64 = 0.0;
    let mut lib_points = Vec::new();
    for &delta in &[0.01, 0.05, 0.1] {
        let sys = TwistSystem::standard((1.5, 2.7), delta, 3).unwrap();
        let r = birkhoff_report(&sys, 1, 3, 64).unwrap();
        counts_ok &= r.counts.n_hyperbolic == 3 && r.counts.n_elliptic == 3 && r.counts.n_parabolic == 0;
        worst_res = worst_res.max(r.max_residual);
        c_fit = c_fit.max(r.max_dist / delta);
        if delta == 0.05 {
            lib_points = r.orbits.iter().map(|o| (o.points[0], o.class)).collect::<Vec<_>>();
        }
    }
    let oracle = brute_force_period_three(0.05, 2048);
    let n_hyp = oracle.iter().filter(|(_, t)| t.abs() > 2.0).count();
    let n_ell = oracle.len() - n_hyp;
    let matched = lib_points.len() == oracle.len()
        && lib_points.iter().all(|(p, class)| {
            oracle.iter().any(|(q, t)| {
                let d = (p[0] - q[0]).rem_euclid(2.0 * PI);
                let same_class = (*class == OrbitClass::Hyperbolic) == (t.abs() > 2.0);
                d.min(2.0 * PI - d) < 1e-8 && (p[1] - q[1]).abs() < 1e-8 && same_class
            })
        });
    let pass = counts_ok && worst_res <= 1e-11 && c_fit <= 10.0 && matched && n_hyp == 3 && n_ell == 3;
    outcome(
        pass,
        format!(
            "3 hyperbolic + 3 elliptic at every delta: {counts_ok}; residual {worst_res:.1e} (tol 1e-11); \
             C fit {c_fit:.2e} (tol 10); 2048^2 scan finds {n_hyp}+{n_ell}, matches: {matched}"
        ),
    )
}

fn rotation_class() -> Outcome {
    let n = 16;
    let spec = FieldSpec::Sum {
        terms: vec![FieldSpec::constant([1.0, 0.0, 0.0]), FieldSpec::abc(1.0, 1.0, 1.0).scaled(0.2)],
    };
    let v = make_field(&spec, n).unwrap();
    let alg = rotation_class_algebraic(&v).lambda;
    let geo = geometric_rotation_class(&v, &uniform_seeds(64, 2024), 1e3, 1e-2);
    let scale = alg.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let err = (0..3).map(|i| (geo[i] - alg[i]).abs() / scale).fold(0.0, f64::max);
    let exact_zero = [make_field(&FieldSpec::abc(1.0, 1.0, 1.0), n).unwrap(), random_exact(8000, n)]
        .iter()
        .all(|f| rotation_class_algebraic(f).lambda == [0.0; 3]);
    outcome(
        err <= 5e-2 && exact_zero,
        format!(
            "algebraic ({:.4}, {:.4}, {:.4}) vs geometric ({:.4}, {:.4}, {:.4}): max rel {err:.2e} (tol 5e-2); \
             exact fields give zero class: {exact_zero}",
            alg[0], alg[1], alg[2], geo[0], geo[1], geo[2]
        ),
    )
}

fn coadjoint_duality() -> Outcome {
    let n = 32;
    let mut worst: f64 = 0.0;
    let mut worst_flip: f64 = 0.0;
    let mut worst_oracle: f64 = 0.0;
    for s in 0..10u64 {
        let xi = random_exact(6000 + s, n);
        let v = make_field(&FieldSpec::random(6100 + s, 4, false), n).unwrap();
        let w = random_exact(6200 + s, n);
        let (lhs, rhs) = coadjoint_sides(&xi, &v, &w).unwrap();
        let scale = lhs.abs().max(rhs.abs());
        worst = worst.max((lhs - rhs).abs() / scale);
        worst_flip = worst_flip.max((lhs + rhs).abs() / scale);
        // lhs = int (v x xi) . w and rhs = int xi . (v x w), by quadrature
        let (gx, gv, gw) = (to_grid(&xi), to_grid(&v), to_grid(&w));
        let h3 = (2.0 * PI / n as f64).powi(3);
        let ql = (0..n * n * n).map(|i| gv.at(i).cross(&gx.at(i)).dot(&gw.at(i))).sum::<f64>() * h3;
        let qr = (0..n * n * n).map(|i| gx.at(i).dot(&gv.at(i).cross(&gw.at(i)))).sum::<f64>() * h3;
        worst_oracle = worst_oracle.max((ql - lhs).abs().max((qr - rhs).abs()) / scale);
    }
    outcome(
        worst <= 1e-8,
        format!(
            "max rel discrepancy {worst:.2e} (tol 1e-8); the two sides are negatives of each other to {worst_flip:.1e}; \
             quadrature oracle agrees with each side to {worst_oracle:.1e}"
        ),
    )
}

fn mhd_pair() -> Outcome {
    let (n, n_out) = (32, 48);
    let mut worst_m: f64 = 0.0;
    let mut worst_c: f64 = 0.0;
    for s in 0..5u64 {
        let omega = random_exact(7000 + s, n);
        let b = random_exact(7100 + s, n);
        let sampled = SampledDiffeo::new(&random_shear(700 + s, 0.3), n_out);
        let (o1, _) = pushforward_sampled(&omega, &sampled).unwrap();
        let (b1, _) = pushforward_sampled(&b, &sampled).unwrap();
        let (m0, m1) = (magnetic_helicity(&b).unwrap(), magnetic_helicity(&b1).unwrap());
        let (c0, c1) = (cross_helicity(&omega, &b).unwrap(), cross_helicity(&o1, &b1).unwrap());
        worst_m = worst_m.max((m1 - m0).abs() / m0.abs());
        worst_c = worst_c.max((c1 - c0).abs() / c0.abs());
    }
    outcome(
        worst_m <= 1e-9 && worst_c <= 1e-9,
        format!("magnetic helicity drift {worst_m:.2e}, cross helicity drift {worst_c:.2e} (tol 1e-9)"),
    )
}

fn collinear_factor_recovery() -> Outcome {
    let n = 64;
    let g0 = |x: Vec3| 1.0 + 0.1 * x[0].sin();
    let w = make_field(&FieldSpec::abc(1.0, 1.0, 1.0), n).unwrap();
    let v = from_grid(&GridField::from_fn(n, |x| abc_closed(1.0, 1.0, 1.0, x) * g0(x)), GridFlags::default());
    let cf = collinearity_factor(&v, &w, 0.1).unwrap();
    let mut inner: f64 = 0.0;
    let mut extended: f64 = 0.0;
    for i in 0..n * n * n {
        let e = (cf.g.values[i] - g0(node_position(i, n))).abs();
        if cf.retained[i] {
            inner = inner.max(e);
        } else {
            extended = extended.max(e);
        }
    }
    let n_ext = cf.n_extended();
    outcome(
        inner <= 1e-8 && extended <= 2e-2 && n_ext > 0,
        format!("|g - g0| {inner:.2e} where |w| > 0.1 (tol 1e-8), {extended:.2e} on {n_ext} extended nodes (tol 2e-2)"),
    )
}

fn determinism() -> Outcome {
    let configs = [
        r#"{"experiment":"birkhoff_report","sweep":[0.01]}"#,
        r#"{"experiment":"casimir_invariance","n":16,"n_out":24,"field":{"kind":"random","kmax":3},"diffeo":{"kind":"random_shear"}}"#,
        r#"{"experiment":"casimir_invariance","label":"casimir_flow","n":16,"n_out":16,"field":{"kind":"random","kmax":3},
            "diffeo":{"kind":"flow_map","t":0.1,"dt":1e-2,"generator":{"kind":"random","kmax":2}}}"#,
        r#"{"experiment":"coadjoint_identity","n":16,"xi":{"kind":"random","kmax":3},"v":{"kind":"random","kmax":3,"exact":false},"w":{"kind":"random","kmax":3}}"#,
        r#"{"experiment":"connect_level_set","w1":{"kind":"random","kmax":3},"w2":{"kind":"random","kmax":3,"seed":5}}"#,
        r#"{"experiment":"kernel_first_integral","n":16,"w":{"kind":"random","kmax":3},"kernel":{"kind":"helicity_kernel"}}"#,
        r#"{"experiment":"mhd_pair_invariance","n":16,"omega":{"kind":"random","kmax":3},"b":{"kind":"random","kmax":3},"diffeo":{"kind":"random_shear"}}"#,
        r#"{"experiment":"rotation_class_consistency","n":8,"n_seeds":8,"t":50.0,"field":{"kind":"random","kmax":2,"exact":false}}"#,
    ];
    let none = BTreeMap::new();
    let mut identical = 0;
    let mut kinds = std::collections::BTreeSet::new();
    for text in configs {
        let exp: Experiment = serde_json::from_str(text).unwrap();
        kinds.insert(exp.kind());
        let first = run_experiment(&exp, 31, &none);
        let second = run_experiment(&exp, 31, &none);
        parallel::set_enabled(false);
        let sequential = run_experiment(&exp, 31, &none);
        parallel::set_enabled(true);
        let a = first.report.to_json();
        if a == second.report.to_json() && a == sequential.report.to_json() && first.csv == sequential.csv {
            identical += 1;
        }
    }
    outcome(
        identical == configs.len() && kinds.len() == 7,
        format!("{identical}/{} reports byte-identical across two parallel runs and one sequential run", configs.len()),
    )
}

fn main() {
    let criteria: Vec<(u32, &str, f64, fn() -> Outcome)> = vec![
        (1, "beltrami identity", 1.0, beltrami),
        (2, "helicity closed form", 5.0, helicity_closed_form),
        (3, "casimir invariance", 180.0, casimir_invariance),
        (4, "kernel identity", 30.0, kernel_identity),
        (5, "derivative formula", 30.0, derivative_formula),
        (6, "path connectedness", 60.0, path_connectedness),
        (7, "poincare-birkhoff count", 120.0, poincare_birkhoff),
        (8, "rotation class consistency", 240.0, rotation_class),
        (9, "coadjoint duality", 60.0, coadjoint_duality),
        (10, "mhd pair invariance", 60.0, mhd_pair),
        (11, "collinear factor recovery", 30.0, collinear_factor_recovery),
        (12, "determinism", f64::INFINITY, determinism),
    ];
    let filter: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = Vec::new();
    let mut ran = 0;
    for (id, name, budget, run) in criteria {
        if !filter.is_empty() && !filter.contains(&id) {
            continue;
        }
        ran += 1;
        let start = Instant::now();
        let out = run();
        let secs = start.elapsed().as_secs_f64();
        let in_time = secs <= budget;
        let pass = out.pass && in_time;
        if !pass {
            failed.push(id.to_string());
        }
        let budget_note = if budget.is_finite() { format!(" / {budget:.0} s") } else { String::new() };
        println!(
            "{} {:>2} {:<27} {}; {:.2} s{}{}",
            if pass { "PASS" } else { "FAIL" },
            id,
            name,
            out.detail,
            secs,
            budget_note,
            if in_time { "" } else { " over budget" }
        );
    }
    if failed.is_empty() {
        println!("acceptance: {ran}/{ran} criteria pass");
    } else {
        println!("acceptance: {}/{ran} criteria pass; failing: {}", ran - failed.len(), failed.join(", "));
        if std::env::var_os("ACCEPTANCE_STRICT").is_some_and(|v| v == "1") {
            std::process::exit(1);
        }
    }
}
