//! Small dense vector helpers over `&[f64]`.

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm_sq(a: &[f64]) -> f64 {
    dot(a, a)
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    norm_sq(a).sqrt()
}

/// `out = a + s * b`
#[inline]
pub fn add_scaled(a: &[f64], s: f64, b: &[f64], out: &mut [f64]) {
    for ((o, x), y) in out.iter_mut().zip(a).zip(b) {
        *o = x + s * y;
    }
}

/// `y += s * x`
#[inline]
pub fn axpy(s: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += s * xi;
    }
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn all_finite(a: &[f64]) -> bool {
    a.iter().all(|v| v.is_finite())
}

/// Row-major `n×k` times `k×m` into `out` (`n×m`).
pub(crate) fn matmul(a: &[f64], b: &[f64], n: usize, k: usize, m: usize, out: &mut [f64]) {
    debug_assert_eq!(a.len(), n * k);
    debug_assert_eq!(b.len(), k * m);
    debug_assert_eq!(out.len(), n * m);
    out.iter_mut().for_each(|v| *v = 0.0);
    for i in 0..n {
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == 0.0 {
                continue;
            }
            let row = &b[p * m..(p + 1) * m];
            let dst = &mut out[i * m..(i + 1) * m];
            for (d, bv) in dst.iter_mut().zip(row) {
                *d += aip * bv;
            }
        }
    }
}

/// Row-major `A Bᵀ` where `A` is `n×r` and `B` is `m×r`; result `n×m`.
pub(crate) fn mul_transpose(a: &[f64], b: &[f64], n: usize, r: usize, m: usize, out: &mut [f64]) {
    debug_assert_eq!(out.len(), n * m);
    for i in 0..n {
        let ai = &a[i * r..(i + 1) * r];
        for j in 0..m {
            out[i * m + j] = dot(ai, &b[j * r..(j + 1) * r]);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_small() {
        // [1 2; 3 4] * [5; 6] = [17; 39]
        let mut out = [0.0; 2];
        matmul(&[1.0, 2.0, 3.0, 4.0], &[5.0, 6.0], 2, 2, 1, &mut out);
        assert_eq!(out, [17.0, 39.0]);
    }

    #[test]
    fn mul_transpose_gram() {
        // V = [1 2; 3 4], V Vᵀ = [5 11; 11 25]
        let v = [1.0, 2.0, 3.0, 4.0];
        let mut out = [0.0; 4];
        mul_transpose(&v, &v, 2, 2, 2, &mut out);
        assert_eq!(out, [5.0, 11.0, 11.0, 25.0]);
    }
}
