//! Dense complex LU factorisation with partial pivoting.

use num_complex::Complex64;

use crate::par;

/// Pivot magnitude (relative to the largest entry) below which a matrix is
/// treated as singular.
const SINGULAR_RTOL: f64 = 1e-14;

/// Columns per panel of the blocked factorisation.
const PANEL: usize = 16;

/// `y -= l0 x0 + l1 x1 + l2 x2 + l3 x3`, applied in that order per entry so
/// rounding matches four separate [`axpy_neg`] calls.
#[inline]
fn axpy4_neg(y: &mut [Complex64], l: [Complex64; 4], x: [&[Complex64]; 4]) {
    let len = y.len();
    let (x0, x1, x2, x3) = (&x[0][..len], &x[1][..len], &x[2][..len], &x[3][..len]);
    for j in 0..len {
        let mut v = y[j];
        v -= l[0] * x0[j];
        v -= l[1] * x1[j];
        v -= l[2] * x2[j];
        v -= l[3] * x3[j];
        y[j] = v;
    }
}

/// Trailing rows per parallel task.
const ROWS_PER_TASK: usize = 16;

/// `y -= l * x`, skipping exact zeros.
#[inline]
fn axpy_neg(y: &mut [Complex64], l: Complex64, x: &[Complex64]) {
    if l.re == 0.0 && l.im == 0.0 {
        return;
    }
    for (v, &u) in y.iter_mut().zip(x) {
        *v -= l * u;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SingularPivot {
    pub pivot: usize,
    pub size: usize,
}

/// LU factors of a square matrix, stored row-major in place.
#[derive(Debug, Clone)]
pub struct LuFactor {
    n: usize,
    lu: Vec<Complex64>,
    perm: Vec<usize>,
}

impl LuFactor {
    /// Factors the `n`×`n` row-major matrix `a`. Pivots are judged against
    /// the largest entry.
    pub fn factor(a: Vec<Complex64>, n: usize) -> Result<Self, SingularPivot> {
        let scale = a.iter().map(|v| v.norm()).fold(0.0, f64::max);
        Self::factor_with_scale(a, n, scale)
    }

    /// Factors `a`, treating pivots below `1e-14 * scale` as singular.
    ///
    /// Columns are processed in panels of [`PANEL`]; each trailing row then
    /// takes all of a panel's updates while it is in cache. The arithmetic is
    /// the same, in the same order, as the column-by-column algorithm.
    pub fn factor_with_scale(mut a: Vec<Complex64>, n: usize, scale: f64) -> Result<Self, SingularPivot> {
        assert_eq!(a.len(), n * n, "matrix storage does not match dimension");
        let tiny = if scale > 0.0 { scale * SINGULAR_RTOL } else { f64::MIN_POSITIVE };
        let mut perm: Vec<usize> = (0..n).collect();

        for kb in (0..n).step_by(PANEL) {
            let ke = (kb + PANEL).min(n);
            for k in kb..ke {
                let (mut p, mut best) = (k, a[k * n + k].norm());
                for i in k + 1..n {
                    let v = a[i * n + k].norm();
                    if v > best {
                        best = v;
                        p = i;
                    }
                }
                if best.is_nan() || best <= tiny {
                    return Err(SingularPivot { pivot: k, size: n });
                }
                if p != k {
                    for j in 0..n {
                        a.swap(k * n + j, p * n + j);
                    }
                    perm.swap(k, p);
                }
                let (head, tail) = a.split_at_mut((k + 1) * n);
                let pivot_row = &head[k * n..(k + 1) * n];
                let inv = pivot_row[k].inv();
                for row in tail.chunks_exact_mut(n) {
                    let l = row[k] * inv;
                    row[k] = l;
                    axpy_neg(&mut row[k + 1..ke], l, &pivot_row[k + 1..ke]);
                }
            }

            // Panel rows to the right of the panel: unit lower triangular solve.
            for k in kb + 1..ke {
                let (head, rest) = a.split_at_mut(k * n);
                let row = &mut rest[..n];
                for p in kb..k {
                    let l = row[p];
                    axpy_neg(&mut row[ke..], l, &head[p * n + ke..(p + 1) * n]);
                }
            }

            if ke < n {
                let (head, tail) = a.split_at_mut(ke * n);
                let panel = &head[kb * n..];
                par::for_each_chunk_mut(tail, n * ROWS_PER_TASK, |_, rows| {
                    for row in rows.chunks_exact_mut(n) {
                        let mut p = kb;
                        while p + 4 <= ke {
                            let l = [row[p], row[p + 1], row[p + 2], row[p + 3]];
                            let src = |q: usize| &panel[(q - kb) * n + ke..(q - kb + 1) * n];
                            axpy4_neg(&mut row[ke..], l, [src(p), src(p + 1), src(p + 2), src(p + 3)]);
                            p += 4;
                        }
                        for p in p..ke {
                            let l = row[p];
                            let src = &panel[(p - kb) * n + ke..(p - kb + 1) * n];
                            axpy_neg(&mut row[ke..], l, src);
                        }
                    }
                });
            }
        }

        Ok(Self { n, lu: a, perm })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Solves A x = b, overwriting `b` with x.
    pub fn solve_in_place(&self, b: &mut [Complex64]) {
        let n = self.n;
        assert_eq!(b.len(), n);
        let mut x: Vec<Complex64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let row = &self.lu[i * n..i * n + i];
            let mut s = x[i];
            for (l, xv) in row.iter().zip(&x[..i]) {
                s -= l * xv;
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let row = &self.lu[i * n..(i + 1) * n];
            let mut s = x[i];
            for (u, xv) in row[i + 1..].iter().zip(&x[i + 1..]) {
                s -= u * xv;
            }
            x[i] = s / row[i];
        }
        b.copy_from_slice(&x);
    }

    pub fn solve(&self, b: &[Complex64]) -> Vec<Complex64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}

/// Euclidean norm of a complex vector.
pub fn norm2(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(n: usize, seed: u64) -> Vec<Complex64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n * n)
            .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect()
    }

    fn matvec(a: &[Complex64], x: &[Complex64]) -> Vec<Complex64> {
        let n = x.len();
        (0..n)
            .map(|i| (0..n).map(|j| a[i * n + j] * x[j]).sum())
            .collect()
    }

    #[test]
    fn solves_random_system() {
        let n = 40;
        let a = random_matrix(n, 3);
        let x_true: Vec<Complex64> = (0..n).map(|i| Complex64::new(i as f64, 1.0 - i as f64)).collect();
        let b = matvec(&a, &x_true);
        let lu = LuFactor::factor(a, n).unwrap();
        let x = lu.solve(&b);
        let err: f64 = x.iter().zip(&x_true).map(|(u, v)| (u - v).norm()).fold(0.0, f64::max);
        assert!(err < 1e-10, "max error {err}");
    }

    #[test]
    fn panel_boundaries_are_exact() {
        for &n in &[1, PANEL - 1, PANEL, PANEL + 1, 2 * PANEL + 7] {
            let a = random_matrix(n, n as u64);
            let x_true: Vec<Complex64> = (0..n).map(|i| Complex64::new(1.0, i as f64 * 0.1)).collect();
            let b = matvec(&a, &x_true);
            let x = LuFactor::factor(a, n).unwrap().solve(&b);
            let err: f64 = x.iter().zip(&x_true).map(|(u, v)| (u - v).norm()).fold(0.0, f64::max);
            assert!(err < 1e-9, "n = {n}: max error {err}");
        }
    }

    #[test]
    fn needs_pivoting() {
        let z = Complex64::new(0.0, 0.0);
        let o = Complex64::new(1.0, 0.0);
        let a = vec![z, o, o, z];
        let lu = LuFactor::factor(a, 2).unwrap();
        let x = lu.solve(&[Complex64::new(2.0, 0.0), Complex64::new(3.0, 0.0)]);
        assert_eq!(x, vec![Complex64::new(3.0, 0.0), Complex64::new(2.0, 0.0)]);
    }

    #[test]
    fn detects_singular_matrix() {
        let o = Complex64::new(1.0, 0.0);
        let a = vec![o, o, o, o];
        let err = LuFactor::factor(a, 2).unwrap_err();
        assert_eq!(err, SingularPivot { pivot: 1, size: 2 });
        assert!(LuFactor::factor(vec![Complex64::new(0.0, 0.0)], 1).is_err());
    }
}
