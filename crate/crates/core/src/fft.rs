//! Unnormalized multi-axis FFTs over row-major arrays.

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

type Plan = Arc<dyn Fft<f64>>;

fn plan(len: usize, inverse: bool) -> Plan {
    static CACHE: OnceLock<Mutex<HashMap<(usize, bool), Plan>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().expect("fft plan cache poisoned");
    guard
        .entry((len, inverse))
        .or_insert_with(|| {
            let mut planner = FftPlanner::new();
            if inverse {
                planner.plan_fft_inverse(len)
            } else {
                planner.plan_fft_forward(len)
            }
        })
        .clone()
}

// lines per rayon task; keeps tasks coarse enough to amortize scratch allocation
const LINES_PER_TASK: usize = 64;

fn process_lines(buf: &mut [C64], len: usize, fft: &Plan) {
    let lines = buf.len() / len;
    if lines <= LINES_PER_TASK {
        let mut scratch = vec![C64::default(); fft.get_inplace_scratch_len()];
        fft.process_with_scratch(buf, &mut scratch);
        return;
    }
    buf.par_chunks_mut(len * LINES_PER_TASK).for_each(|chunk| {
        let mut scratch = vec![C64::default(); fft.get_inplace_scratch_len()];
        fft.process_with_scratch(chunk, &mut scratch);
    });
}

/// In-place unnormalized DFT along every axis of a row-major array with shape `dims`.
pub(crate) fn fft_all(data: &mut [C64], dims: &[usize], inverse: bool) {
    for axis in 0..dims.len() {
        fft_axis(data, dims, axis, inverse);
    }
}

/// In-place unnormalized DFT along the trailing `k` axes, batched over the leading ones.
pub(crate) fn fft_trailing(data: &mut [C64], dims: &[usize], k: usize, inverse: bool) {
    for axis in dims.len() - k..dims.len() {
        fft_axis(data, dims, axis, inverse);
    }
}

pub(crate) fn fft_axis(data: &mut [C64], dims: &[usize], axis: usize, inverse: bool) {
    let len = dims[axis];
    if len <= 1 {
        return;
    }
    let inner: usize = dims[axis + 1..].iter().product();
    let fft = plan(len, inverse);
    if inner == 1 {
        process_lines(data, len, &fft);
        return;
    }
    let block = len * inner;
    let mut buf = vec![C64::default(); block];
    for chunk in data.chunks_mut(block) {
        // [len][inner] -> [inner][len]
        for (i, row) in chunk.chunks(inner).enumerate() {
            for (j, v) in row.iter().enumerate() {
                buf[j * len + i] = *v;
            }
        }
        process_lines(&mut buf, len, &fft);
        for (i, row) in chunk.chunks_mut(inner).enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = buf[j * len + i];
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_dft(x: &[C64], inverse: bool) -> Vec<C64> {
        let n = x.len();
        let sign = if inverse { 1.0 } else { -1.0 };
        (0..n)
            .map(|k| {
                x.iter()
                    .enumerate()
                    .map(|(j, v)| {
                        let ang = sign * 2.0 * std::f64::consts::PI * (j * k) as f64 / n as f64;
                        v * C64::from_polar(1.0, ang)
                    })
                    .sum()
            })
            .collect()
    }

    #[test]
    fn two_axis_matches_naive() {
        let dims = [4usize, 8];
        let data: Vec<C64> = (0..32)
            .map(|i| C64::new((i as f64 * 0.37).sin(), (i as f64 * 1.3).cos()))
            .collect();
        let mut fast = data.clone();
        fft_all(&mut fast, &dims, false);

        // rows then columns, naive
        let mut slow = data.clone();
        for r in 0..4 {
            let row = naive_dft(&slow[r * 8..(r + 1) * 8], false);
            slow[r * 8..(r + 1) * 8].copy_from_slice(&row);
        }
        for c in 0..8 {
            let col: Vec<C64> = (0..4).map(|r| slow[r * 8 + c]).collect();
            let t = naive_dft(&col, false);
            for r in 0..4 {
                slow[r * 8 + c] = t[r];
            }
        }
        for (a, b) in fast.iter().zip(&slow) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn round_trip_scales_by_size() {
        let dims = [8usize, 4, 4];
        let data: Vec<C64> = (0..128).map(|i| C64::new(i as f64, -(i as f64) * 0.5)).collect();
        let mut x = data.clone();
        fft_all(&mut x, &dims, false);
        fft_all(&mut x, &dims, true);
        for (a, b) in x.iter().zip(&data) {
            assert!((a / 128.0 - b).norm() < 1e-10);
        }
    }
}
