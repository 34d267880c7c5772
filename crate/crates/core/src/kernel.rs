//! Blocked row kernels for the loop-on-positives passes.
//!
//! Rows (one per positive) are processed in blocks so each chunk of the
//! negative scores is reused from cache by every row in the block. Per-row
//! reductions run over the chunks in a fixed order, so results do not depend
//! on the block size.

use crate::model::StepFn;

pub(crate) const BLOCK_ROWS: usize = 16;
const CHUNK: usize = 1024;

#[inline(always)]
fn sum_chunk<S: StepFn>(h: S, xs: &[f64], t: f64) -> f64 {
    let mut acc = [0.0f64; 8];
    let mut lanes = xs.chunks_exact(8);
    for c in &mut lanes {
        for l in 0..8 {
            acc[l] += h.h(c[l] - t);
        }
    }
    let mut tail = 0.0;
    for &x in lanes.remainder() {
        tail += h.h(x - t);
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

/// `out[r] = sum_k H(xs[k] - ts[r])`.
pub(crate) fn step_row_sums<S: StepFn>(h: S, xs: &[f64], ts: &[f64], out: &mut [f64]) {
    debug_assert_eq!(ts.len(), out.len());
    out.fill(0.0);
    for chunk in xs.chunks(CHUNK) {
        for (o, &t) in out.iter_mut().zip(ts) {
            *o += sum_chunk(h, chunk, t);
        }
    }
}

/// `g[k] += sum_r coef[r] * H(xs[k] - ts[r])`, rows applied in order.
pub(crate) fn step_row_scatter<S: StepFn>(
    h: S,
    xs: &[f64],
    ts: &[f64],
    coef: &[f64],
    g: &mut [f64],
) {
    debug_assert_eq!(xs.len(), g.len());
    for (xc, gc) in xs.chunks(CHUNK).zip(g.chunks_mut(CHUNK)) {
        for (&t, &c) in ts.iter().zip(coef) {
            if c == 0.0 {
                continue;
            }
            for (gk, &x) in gc.iter_mut().zip(xc) {
                *gk += c * h.h(x - t);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Hard, Ramp, SmoothStep};

    #[test]
    fn row_sums_match_naive_loop() {
        let xs: Vec<f64> = (0..3000)
            .map(|k| ((k * 7919) % 1000) as f64 / 250.0 - 2.0)
            .collect();
        let ts = [-1.0, 0.0, 0.3, 1.7];
        let ramp = Ramp::from(SmoothStep::new(0.4));
        let mut out = [0.0; 4];
        step_row_sums(ramp, &xs, &ts, &mut out);
        for (r, &t) in ts.iter().enumerate() {
            let naive: f64 = xs.iter().map(|&x| ramp.h(x - t)).sum();
            assert!((out[r] - naive).abs() < 1e-9);
        }
        step_row_sums(Hard, &xs, &ts, &mut out);
        for (r, &t) in ts.iter().enumerate() {
            let naive: f64 = xs.iter().map(|&x| Hard.h(x - t)).sum();
            assert_eq!(out[r], naive);
        }
    }

    #[test]
    fn scatter_matches_naive_loop() {
        let xs: Vec<f64> = (0..2500).map(|k| (k as f64).sin() * 3.0).collect();
        let ts = [0.5, -0.25];
        let coef = [0.2, 0.0];
        let ramp = Ramp::from(SmoothStep::new(0.5));
        let mut g = vec![1.0; xs.len()];
        step_row_scatter(ramp, &xs, &ts, &coef, &mut g);
        for (k, &x) in xs.iter().enumerate() {
            assert_eq!(g[k], 1.0 + 0.2 * ramp.h(x - 0.5));
        }
    }
}
