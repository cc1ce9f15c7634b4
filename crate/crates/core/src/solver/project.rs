//! Euclidean projection onto the per-cell block `{y >= 0, sum y <= 1}`.

use rayon::prelude::*;

/// Project `y` in place. Clipping at zero is already the answer when the
/// clipped vector sums to at most one; otherwise the projection lies on
/// the face `sum y = 1` and is the usual sort-and-threshold simplex
/// projection.
pub fn project_block(y: &mut [f64]) {
    let mut sum = 0.0;
    for v in y.iter_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
        sum += *v;
    }
    if sum <= 1.0 {
        return;
    }
    let mut sorted: Vec<f64> = y.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut acc = 0.0;
    let mut theta = 0.0;
    for (k, v) in sorted.iter().enumerate() {
        acc += v;
        let t = (acc - 1.0) / (k + 1) as f64;
        if *v - t > 0.0 {
            theta = t;
        } else {
            break;
        }
    }
    for v in y.iter_mut() {
        *v = (*v - theta).max(0.0);
    }
}

/// Project every block of width `nf`.
pub fn project_all(x: &mut [f64], nf: usize) {
    x.par_chunks_mut(nf).for_each(project_block);
}
