//! Cylinder functions needed by the forward model and the series oracle.
//!
//! Real-argument Bessel functions of the first and second kind come from
//! `libm` (a port of the fdlibm routines, accurate to a few ulp away from
//! zeros). Integer-order sequences for complex arguments, needed inside lossy
//! cylinders, use Miller's backward recurrence.

use num_complex::Complex64;

pub fn j0(x: f64) -> f64 {
    libm::j0(x)
}

pub fn j1(x: f64) -> f64 {
    libm::j1(x)
}

pub fn y0(x: f64) -> f64 {
    libm::y0(x)
}

pub fn y1(x: f64) -> f64 {
    libm::y1(x)
}

pub fn jn(n: i32, x: f64) -> f64 {
    libm::jn(n, x)
}

pub fn yn(n: i32, x: f64) -> f64 {
    libm::yn(n, x)
}

/// Hankel function of the second kind, H_n^(2)(x) = J_n(x) - j Y_n(x), x > 0.
pub fn hankel2(n: i32, x: f64) -> Complex64 {
    match n {
        0 => Complex64::new(j0(x), -y0(x)),
        1 => Complex64::new(j1(x), -y1(x)),
        _ => Complex64::new(jn(n, x), -yn(n, x)),
    }
}

/// Hankel function of the first kind, H_n^(1)(x) = J_n(x) + j Y_n(x), x > 0.
pub fn hankel1(n: i32, x: f64) -> Complex64 {
    hankel2(n, x).conj()
}

/// J_0(x) .. J_nmax(x) for real x.
pub fn j_sequence(nmax: usize, x: f64) -> Vec<f64> {
    (0..=nmax as i32).map(|n| jn(n, x)).collect()
}

/// Y_0(x) .. Y_nmax(x) for real x > 0 by forward recurrence, which is stable
/// for the second kind.
pub fn y_sequence(nmax: usize, x: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(nmax + 1);
    out.push(y0(x));
    if nmax == 0 {
        return out;
    }
    out.push(y1(x));
    for n in 1..nmax {
        let next = 2.0 * n as f64 / x * out[n] - out[n - 1];
        out.push(next);
    }
    out
}

/// J_0(z) .. J_nmax(z) for complex z via Miller's algorithm, normalised with
/// J_0 + 2 Σ J_2k = 1. Intended for |Im z| of order one or less.
pub fn j_sequence_complex(nmax: usize, z: Complex64) -> Vec<Complex64> {
    let zero = Complex64::new(0.0, 0.0);
    if z.norm() == 0.0 {
        let mut out = vec![zero; nmax + 1];
        out[0] = Complex64::new(1.0, 0.0);
        return out;
    }

    let size = nmax.max(z.norm().ceil() as usize);
    let mut start = size + 20 + (40.0 * size as f64).sqrt() as usize;
    if start % 2 == 1 {
        start += 1;
    }

    let mut vals = vec![zero; start + 2];
    vals[start] = Complex64::new(1e-300, 0.0);
    let two_over_z = 2.0 / z;
    for k in (1..=start).rev() {
        let prev = two_over_z * k as f64 * vals[k] - vals[k + 1];
        vals[k - 1] = prev;
        if prev.norm() > 1e250 {
            for v in vals.iter_mut().skip(k - 1) {
                *v *= 1e-250;
            }
        }
    }

    let mut norm = vals[0];
    for k in (2..=start).step_by(2) {
        norm += 2.0 * vals[k];
    }
    // Complex division squares the divisor, so bring it to unit size first.
    let scale = norm.norm();
    let inv = (norm / scale).inv() / scale;
    vals.truncate(nmax + 1);
    for v in vals.iter_mut() {
        *v *= inv;
    }
    vals
}

/// Derivatives from a J (or H) sequence using C_n' = C_{n-1} - (n/z) C_n and
/// C_0' = -C_1. The input must hold one more order than requested.
pub fn derivative_sequence(seq: &[Complex64], z: Complex64) -> Vec<Complex64> {
    let nmax = seq.len() - 2;
    (0..=nmax)
        .map(|n| {
            if n == 0 {
                -seq[1]
            } else {
                seq[n - 1] - seq[n] * (n as f64) / z
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    // Reference values tabulated with scipy.special.
    const TABLE: &[(f64, f64, f64, f64, f64)] = &[
        (0.1, 0.99750156206604, 0.049937526036242, -1.5342386513503667, -6.458951094702027),
        (0.5, 0.938469807240813, 0.24226845767487387, -0.4445187335067066, -1.4714723926702433),
        (1.0, 0.7651976865579665, 0.44005058574493355, 0.08825696421567697, -0.7812128213002888),
        (2.5, -0.04838377646819804, 0.497094102464274, 0.498070359615232, 0.14591813796678577),
        (5.0, -0.1775967713143383, -0.3275791375914653, -0.30851762524903303, 0.14786314339122691),
        (10.0, -0.24593576445134832, 0.04347274616886141, 0.05567116728359961, 0.24901542420695388),
        (17.8, -0.05064644607111666, -0.18366346987153093, -0.18217040677675614, 0.04555318118907788),
        (40.0, 0.007366890584236951, 0.126038318037585, 0.12593641705826097, -0.005793505821549509),
        (125.7, 0.05206635968424603, -0.04830771806823517, -0.048514436672233395, -0.05225974557051098),
    ];

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    #[test]
    fn low_orders_match_table() {
        for &(x, vj0, vj1, vy0, vy1) in TABLE {
            assert!(rel(j0(x), vj0) < 1e-12, "j0({x})");
            assert!(rel(j1(x), vj1) < 1e-12, "j1({x})");
            assert!(rel(y0(x), vy0) < 1e-12, "y0({x})");
            assert!(rel(y1(x), vy1) < 1e-12, "y1({x})");
        }
    }

    #[test]
    fn integer_orders_match_table() {
        let table: &[(i32, f64, f64, f64)] = &[
            (5, 1.0, 0.00024975773021123466, -260.40586662581234),
            (10, 3.0, 1.2928351645715883e-05, -2582.6071294842986),
            (20, 125.0, 0.0709866796404656, 0.010966728811833491),
            (3, 125.0, 0.0705005309863239, 0.011138213500290619),
            (40, 10.0, 6.030895312346924e-21, -1.362803297269351e+18),
            (15, 130.0, 0.06715741408464043, -0.020490118640055257),
        ];
        for &(n, x, vj, vy) in table {
            assert!(rel(jn(n, x), vj) < 1e-12, "jn({n},{x}) = {}", jn(n, x));
            assert!(rel(yn(n, x), vy) < 1e-12, "yn({n},{x}) = {}", yn(n, x));
            let ys = y_sequence(n as usize, x);
            assert!(rel(ys[n as usize], vy) < 1e-11, "y_sequence({n},{x})");
        }
    }

    #[test]
    fn complex_sequence_matches_table() {
        type Row = (usize, (f64, f64), (f64, f64));
        let table: &[Row] = &[
            (0, (3.55, -0.2), (-0.3948806064151149, 0.023266882401719848)),
            (1, (3.55, -0.2), (0.1161862709010213, 0.08431270315681211)),
            (4, (3.55, -0.2), (0.21180461844182716, -0.030932023080246805)),
            (10, (5.0, -0.5), (0.000992774565173396, -0.0011941439825468886)),
            (0, (0.5, 0.0), (0.938469807240813, 0.0)),
            (7, (12.0, -0.1), (-0.17087588436532827, 0.014456604932243811)),
        ];
        for &(n, (zr, zi), (vr, vi)) in table {
            let seq = j_sequence_complex(n + 3, Complex64::new(zr, zi));
            let want = Complex64::new(vr, vi);
            let err = (seq[n] - want).norm() / want.norm();
            assert!(err < 1e-12, "J_{n}({zr}{zi:+}j): err {err:e}");
        }
    }

    #[test]
    fn complex_sequence_agrees_with_real_routines() {
        let x = 7.3;
        let seq = j_sequence_complex(30, Complex64::new(x, 0.0));
        for (n, v) in seq.iter().enumerate() {
            let want = jn(n as i32, x);
            assert!((v.re - want).abs() <= 1e-13 + 1e-12 * want.abs(), "n = {n}");
            assert_eq!(v.im, 0.0);
        }
    }

    #[test]
    fn derivative_matches_finite_difference() {
        let z = Complex64::new(4.1, -0.3);
        let h = 1e-6;
        let seq = j_sequence_complex(8, z);
        let d = derivative_sequence(&seq, z);
        let up = j_sequence_complex(8, z + h);
        let dn = j_sequence_complex(8, z - h);
        for n in 0..7 {
            let fd = (up[n] - dn[n]) / (2.0 * h);
            assert!((fd - d[n]).norm() < 1e-8, "n = {n}");
        }
    }

    #[test]
    fn hankel_kinds_are_conjugate() {
        for n in 0..4 {
            let h2 = hankel2(n, 3.3);
            assert_eq!(hankel1(n, 3.3), h2.conj());
            assert_eq!(h2.re, jn(n, 3.3));
        }
    }
}
