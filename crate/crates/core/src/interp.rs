//! Cubic Lagrange interpolation on uniform grids.

/// Weights of the four-point Lagrange stencil at offsets -1, 0, 1, 2 for a fractional
/// position `t` in [0, 1].
pub fn cubic_weights(t: f64) -> [f64; 4] {
    [
        -t * (t - 1.0) * (t - 2.0) / 6.0,
        (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0,
        -(t + 1.0) * t * (t - 2.0) / 2.0,
        (t + 1.0) * t * (t - 1.0) / 6.0,
    ]
}

/// Splits a continuous grid coordinate into the stencil base index (node -1 of the
/// four-point stencil) and the fractional offset, clamping so the stencil stays in
/// `0..n`. Returns `None` when `n < 4`.
pub fn stencil(s: f64, n: usize) -> Option<(usize, f64)> {
    if n < 4 {
        return None;
    }
    let i = s.floor();
    let i = (i as isize).clamp(1, n as isize - 3);
    Some(((i - 1) as usize, s - i as f64))
}

/// Bicubic interpolation of `values` (row-major, index `i + n0 * j`) on a uniform
/// `n0 x n1` grid given continuous grid coordinates `(s0, s1)`.
pub fn bicubic(values: &[f64], n0: usize, n1: usize, s0: f64, s1: f64) -> f64 {
    let (b0, t0) = stencil(s0, n0).expect("grid too small for cubic interpolation");
    let (b1, t1) = stencil(s1, n1).expect("grid too small for cubic interpolation");
    let w0 = cubic_weights(t0);
    let w1 = cubic_weights(t1);
    let mut acc = 0.0;
    for (jj, wj) in w1.iter().enumerate() {
        let row = (b1 + jj) * n0;
        let mut r = 0.0;
        for (ii, wi) in w0.iter().enumerate() {
            r += wi * values[row + b0 + ii];
        }
        acc += wj * r;
    }
    acc
}

/// Tricubic interpolation of a multi-component field stored node-major
/// (`values[node * ncomp + c]`, node index x-fastest) on an `n[0] x n[1] x n[2]` grid.
pub fn tricubic(values: &[f64], n: [usize; 3], ncomp: usize, s: [f64; 3], out: &mut [f64]) {
    let (b0, t0) = stencil(s[0], n[0]).expect("grid too small for cubic interpolation");
    let (b1, t1) = stencil(s[1], n[1]).expect("grid too small for cubic interpolation");
    let (b2, t2) = stencil(s[2], n[2]).expect("grid too small for cubic interpolation");
    let w = [cubic_weights(t0), cubic_weights(t1), cubic_weights(t2)];
    out.iter_mut().for_each(|o| *o = 0.0);
    for (kk, wk) in w[2].iter().enumerate() {
        for (jj, wj) in w[1].iter().enumerate() {
            let wjk = wj * wk;
            for (ii, wi) in w[0].iter().enumerate() {
                let node = (b0 + ii) + n[0] * ((b1 + jj) + n[1] * (b2 + kk));
                let wt = wi * wjk;
                for c in 0..ncomp {
                    out[c] += wt * values[node * ncomp + c];
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_partition_unity_and_reproduce_cubics() {
        for &t in &[0.0, 0.2, 0.5, 0.93] {
            let w = cubic_weights(t);
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-14);
            let p = |x: f64| 1.0 - 2.0 * x + 0.5 * x * x - 0.25 * x * x * x;
            let v: f64 = (0..4).map(|k| w[k] * p(k as f64 - 1.0)).sum();
            assert!((v - p(t)).abs() < 1e-13);
        }
    }

    #[test]
    fn bicubic_exact_on_bicubic_polynomial() {
        let (n0, n1) = (7, 6);
        let f = |x: f64, y: f64| x * x * y - 0.3 * y * y * y + x;
        let vals: Vec<f64> = (0..n0 * n1).map(|k| f((k % n0) as f64, (k / n0) as f64)).collect();
        for &(x, y) in &[(0.3, 0.7), (2.5, 3.9), (5.99, 4.2), (0.0, 0.0)] {
            assert!((bicubic(&vals, n0, n1, x, y) - f(x, y)).abs() < 1e-12);
        }
    }
}
