//! Cached 2-D FFT built from rustfft row transforms.
//!
//! Plans are shared process-wide behind a mutex; `rustfft::Fft` instances are
//! Sync, so concurrent `process` calls on distinct buffers are fine.

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

type PlanPair = (Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>);

fn plans(n: usize) -> PlanPair {
    static CACHE: OnceLock<Mutex<HashMap<usize, PlanPair>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut map = cache.lock().expect("fft plan cache poisoned");
    map.entry(n)
        .or_insert_with(|| {
            let mut planner = FftPlanner::new();
            (planner.plan_fft_forward(n), planner.plan_fft_inverse(n))
        })
        .clone()
}

fn transpose_square(data: &mut [Complex64], n: usize) {
    for i in 0..n {
        for j in (i + 1)..n {
            data.swap(i * n + j, j * n + i);
        }
    }
}

/// In-place unnormalised forward 2-D transform of an n*n row-major buffer.
pub fn forward(data: &mut [Complex64], n: usize) {
    debug_assert_eq!(data.len(), n * n);
    let (fwd, _) = plans(n);
    for row in data.chunks_exact_mut(n) {
        fwd.process(row);
    }
    transpose_square(data, n);
    for row in data.chunks_exact_mut(n) {
        fwd.process(row);
    }
    transpose_square(data, n);
}

/// In-place inverse 2-D transform including the 1/n^2 normalisation.
pub fn inverse(data: &mut [Complex64], n: usize) {
    debug_assert_eq!(data.len(), n * n);
    let (_, inv) = plans(n);
    for row in data.chunks_exact_mut(n) {
        inv.process(row);
    }
    transpose_square(data, n);
    for row in data.chunks_exact_mut(n) {
        inv.process(row);
    }
    transpose_square(data, n);
    let scale = 1.0 / (n * n) as f64;
    for v in data.iter_mut() {
        *v *= scale;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_identity() {
        let n = 8;
        let mut data: Vec<Complex64> = (0..n * n)
            .map(|i| Complex64::new((i as f64 * 0.7).sin(), 0.0))
            .collect();
        let orig = data.clone();
        forward(&mut data, n);
        inverse(&mut data, n);
        for (a, b) in data.iter().zip(&orig) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn dc_component_of_constant() {
        let n = 4;
        let mut data = vec![Complex64::new(1.0, 0.0); n * n];
        forward(&mut data, n);
        assert!((data[0] - Complex64::new((n * n) as f64, 0.0)).norm() < 1e-12);
        for v in &data[1..] {
            assert!(v.norm() < 1e-12);
        }
    }
}
