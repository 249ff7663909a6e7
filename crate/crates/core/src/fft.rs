//! Three-dimensional complex FFT on an `n^3` cube stored with the first axis
//! fastest, built from batched one-dimensional rustfft transforms.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::parallel;

type Plans = (Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>);

fn plans(n: usize) -> Plans {
    static CACHE: OnceLock<Mutex<HashMap<usize, Plans>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().expect("fft plan cache poisoned");
    guard
        .entry(n)
        .or_insert_with(|| {
            let mut planner = FftPlanner::new();
            (planner.plan_fft_forward(n), planner.plan_fft_inverse(n))
        })
        .clone()
}

/// Unnormalized forward transform: `X(k) = sum_j x(j) e^{-2 pi i j.k / n}`.
pub fn forward(data: &mut [Complex64], n: usize) {
    let (fwd, _) = plans(n);
    transform(data, n, fwd.as_ref());
}

/// Unnormalized inverse transform: `x(j) = sum_k X(k) e^{+2 pi i j.k / n}`.
pub fn inverse(data: &mut [Complex64], n: usize) {
    let (_, inv) = plans(n);
    transform(data, n, inv.as_ref());
}

fn transform(data: &mut [Complex64], n: usize, fft: &dyn Fft<f64>) {
    assert_eq!(data.len(), n * n * n, "cube length must be n^3");
    let plane = n * n;

    // axis 1: contiguous lines
    parallel::for_each_chunk_mut(data, plane, |_, p| fft.process(p));

    // axis 2: transpose each plane, transform, transpose back
    parallel::for_each_chunk_mut(data, plane, |_, p| {
        let mut t = vec![Complex64::new(0.0, 0.0); plane];
        for i2 in 0..n {
            for i1 in 0..n {
                t[i1 * n + i2] = p[i1 + n * i2];
            }
        }
        fft.process(&mut t);
        for i2 in 0..n {
            for i1 in 0..n {
                p[i1 + n * i2] = t[i1 * n + i2];
            }
        }
    });

    // axis 3: gather lines into a scratch cube with i3 fastest
    let mut scratch = vec![Complex64::new(0.0, 0.0); data.len()];
    {
        let src: &[Complex64] = data;
        parallel::for_each_chunk_mut(&mut scratch, plane, |i2, chunk| {
            for i1 in 0..n {
                for i3 in 0..n {
                    chunk[i1 * n + i3] = src[i1 + n * i2 + plane * i3];
                }
            }
            fft.process(chunk);
        });
    }
    let src: &[Complex64] = &scratch;
    parallel::for_each_chunk_mut(data, plane, |i3, p| {
        for i2 in 0..n {
            for i1 in 0..n {
                p[i1 + n * i2] = src[i1 * n + plane * i2 + i3];
            }
        }
    });
}
