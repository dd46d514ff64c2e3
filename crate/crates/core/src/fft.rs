//! Multi-axis complex FFT on row-major cubes of side `m`.
//!
//! The last axis is contiguous and transformed in place. Every other axis is
//! moved into contiguous position with a block transpose, transformed, and
//! moved back. Plans are cached by the global planner, so repeated calls on the
//! same grid size never re-plan.

use num_complex::Complex64;
use once_cell::sync::Lazy;
use rayon::prelude::*;
use rustfft::{Fft, FftDirection, FftPlanner};
use std::sync::{Arc, Mutex};

static PLANNER: Lazy<Mutex<FftPlanner<f64>>> = Lazy::new(|| Mutex::new(FftPlanner::new()));

fn plan(m: usize, direction: FftDirection) -> Arc<dyn Fft<f64>> {
    PLANNER
        .lock()
        .expect("fft planner poisoned")
        .plan_fft(m, direction)
}

/// Unnormalized transform over all `d` axes.
///
/// `inverse = false` uses the `e^{-2 pi i n j / m}` kernel.
pub fn fft_nd(data: &mut [Complex64], d: usize, m: usize, inverse: bool) {
    debug_assert_eq!(data.len(), m.pow(d as u32));
    let direction = if inverse {
        FftDirection::Inverse
    } else {
        FftDirection::Forward
    };
    let fft = plan(m, direction);
    for axis in 0..d {
        let stride = m.pow((d - 1 - axis) as u32);
        if stride == 1 {
            // Several rows per task keeps the scratch allocation amortized.
            let rows_per_task = (4096 / m).max(1);
            data.par_chunks_mut(m * rows_per_task).for_each_init(
                || vec![Complex64::default(); fft.get_inplace_scratch_len()],
                |scratch, chunk| fft.process_with_scratch(chunk, scratch),
            );
        } else {
            let block = m * stride;
            data.par_chunks_mut(block).for_each_init(
                || {
                    (
                        vec![Complex64::default(); block],
                        vec![Complex64::default(); fft.get_inplace_scratch_len()],
                    )
                },
                |(buf, scratch), chunk| {
                    transpose(chunk, buf, m, stride);
                    fft.process_with_scratch(buf, scratch);
                    transpose(buf, chunk, stride, m);
                },
            );
        }
    }
}

/// Row-major `rows x cols` into `cols x rows`.
fn transpose(src: &[Complex64], dst: &mut [Complex64], rows: usize, cols: usize) {
    const TILE: usize = 16;
    for r0 in (0..rows).step_by(TILE) {
        for c0 in (0..cols).step_by(TILE) {
            for r in r0..(r0 + TILE).min(rows) {
                for c in c0..(c0 + TILE).min(cols) {
                    dst[c * rows + r] = src[r * cols + c];
                }
            }
        }
    }
}
