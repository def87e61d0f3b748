//! Gaussian-localized oscillation-suppressing window (GLOW) activation.
//!
//! ```text
//!   φ(x) = sign(x) · x²/2                                    |x| ≤ c
//!   φ(x) = sign(x) · [c²/2 + (σ²/2)(1 − e^{(c² − x²)/σ²})]    |x| > c
//! ```
//!
//! The constant c²/2 on the outer branch makes φ continuous at |x| = c; the
//! derivative is |x| inside and |x| e^{(c² − x²)/σ²} outside.

use serde::{Deserialize, Serialize};

/// Transition point `c` and decay scale `σ`, stored as logarithms so both
/// stay positive under unconstrained updates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GlowParams {
    pub log_c: f64,
    pub log_sigma: f64,
}

impl Default for GlowParams {
    fn default() -> Self {
        Self { log_c: 0.0, log_sigma: 0.0 }
    }
}

impl GlowParams {
    pub fn new(c: f64, sigma: f64) -> Self {
        assert!(c > 0.0 && sigma > 0.0, "GLOW parameters must be positive");
        Self {
            log_c: c.ln(),
            log_sigma: sigma.ln(),
        }
    }

    pub fn c(&self) -> f64 {
        self.log_c.exp()
    }

    pub fn sigma(&self) -> f64 {
        self.log_sigma.exp()
    }

    /// Supremum of |φ|: c²/2 + σ²/2.
    pub fn bound(&self) -> f64 {
        let (c, s) = (self.c(), self.sigma());
        0.5 * (c * c + s * s)
    }
}

pub fn glow(x: f64, p: &GlowParams) -> f64 {
    glow_cs(x, p.c(), p.sigma())
}

pub fn glow_prime(x: f64, p: &GlowParams) -> f64 {
    glow_prime_cs(x, p.c(), p.sigma())
}

/// Partial derivatives of φ(x) with respect to `c` and `σ` (not their logs).
pub fn glow_param_grads(x: f64, p: &GlowParams) -> (f64, f64) {
    glow_param_grads_cs(x, p.c(), p.sigma())
}

#[inline]
pub(crate) fn glow_cs(x: f64, c: f64, sigma: f64) -> f64 {
    let a = x.abs();
    let mag = if a <= c {
        0.5 * a * a
    } else {
        let s2 = sigma * sigma;
        0.5 * c * c + 0.5 * s2 * (1.0 - ((c * c - a * a) / s2).exp())
    };
    mag.copysign(x)
}

#[inline]
pub(crate) fn glow_prime_cs(x: f64, c: f64, sigma: f64) -> f64 {
    let a = x.abs();
    if a <= c {
        a
    } else {
        a * ((c * c - a * a) / (sigma * sigma)).exp()
    }
}

#[inline]
pub(crate) fn glow_param_grads_cs(x: f64, c: f64, sigma: f64) -> (f64, f64) {
    let a = x.abs();
    if a <= c {
        return (0.0, 0.0);
    }
    let e = (c * c - a * a) / (sigma * sigma);
    let w = e.exp();
    let dc = c * (1.0 - w);
    let ds = sigma * (1.0 - w) + sigma * e * w;
    let s = if x < 0.0 { -1.0 } else { 1.0 };
    (s * dc, s * ds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit() -> GlowParams {
        GlowParams::new(1.0, 1.0)
    }

    #[test]
    fn reference_values() {
        let p = unit();
        assert_eq!(glow(0.0, &p), 0.0);
        assert_eq!(glow(0.5, &p), 0.125);
        assert!((glow(40.0, &p) - 1.0).abs() < 1e-15);
        assert_eq!(glow_prime(0.0, &p), 0.0);
        assert_eq!(glow_prime(1.0, &p), 1.0);
        assert!((glow_prime(1.0 + 1e-12, &p) - 1.0).abs() < 1e-11);
        assert!((glow_prime(2.0, &p) - 2.0 * (-3.0f64).exp()).abs() < 1e-16);
        assert!((glow_prime(2.0, &p) - 0.09957413673572789).abs() < 1e-15);
    }

    /// One-sided limits at `c` estimated by linear extrapolation from
    /// samples at distance δ and 2δ.
    fn one_sided_jump(f: impl Fn(f64) -> f64, c: f64, d: f64) -> f64 {
        let left = 2.0 * f(c - d) - f(c - 2.0 * d);
        let right = 2.0 * f(c + d) - f(c + 2.0 * d);
        (right - left).abs()
    }

    #[test]
    fn continuous_to_first_order_at_transition() {
        for &(c, s) in &[(1.0, 1.0), (0.3, 2.0), (1.5, 0.8), (0.7, 0.7)] {
            let p = GlowParams::new(c, s);
            let d = 1e-6;
            assert!(one_sided_jump(|x| glow(x, &p), c, d) < 1e-9, "value jump c={c} s={s}");
            assert!(one_sided_jump(|x| glow_prime(x, &p), c, d) < 1e-9, "slope jump c={c} s={s}");
            assert!(one_sided_jump(|x| glow(x, &p), -c, d) < 1e-9);
        }
    }

    #[test]
    fn derivative_matches_central_difference() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let h = 1e-5;
        for _ in 0..100 {
            let p = GlowParams::new(rng.random_range(0.2..2.0), rng.random_range(0.2..2.0));
            let x: f64 = rng.random_range(-4.0..4.0);
            if (x.abs() - p.c()).abs() < 1e-3 {
                continue;
            }
            let fd = (glow(x + h, &p) - glow(x - h, &p)) / (2.0 * h);
            assert!((fd - glow_prime(x, &p)).abs() < 1e-8, "x={x} fd={fd}");
        }
    }

    #[test]
    fn parameter_partials_match_central_difference() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let h = 1e-6;
        for _ in 0..200 {
            let (c, s) = (rng.random_range(0.2..2.0), rng.random_range(0.2..2.0));
            let x: f64 = rng.random_range(-5.0..5.0);
            if (x.abs() - c).abs() < 1e-3 {
                continue;
            }
            let (dc, ds) = glow_param_grads_cs(x, c, s);
            let fdc = (glow_cs(x, c + h, s) - glow_cs(x, c - h, s)) / (2.0 * h);
            let fds = (glow_cs(x, c, s + h) - glow_cs(x, c, s - h)) / (2.0 * h);
            assert!((fdc - dc).abs() < 1e-7, "dc x={x} c={c} s={s}");
            assert!((fds - ds).abs() < 1e-7, "ds x={x} c={c} s={s}");
        }
        assert_eq!(glow_param_grads(0.0, &unit()), (0.0, 0.0));
        assert_eq!(glow_param_grads(0.7, &unit()).1, 0.0);
    }

    proptest! {
        #[test]
        fn odd(x in -10.0f64..10.0, c in 0.1f64..3.0, s in 0.1f64..3.0) {
            let p = GlowParams::new(c, s);
            prop_assert_eq!(glow(-x, &p), -glow(x, &p));
        }

        #[test]
        fn bounded(x in -1e3f64..1e3, c in 0.1f64..3.0, s in 0.1f64..3.0) {
            let p = GlowParams::new(c, s);
            prop_assert!(glow(x, &p).abs() <= p.bound());
        }

        #[test]
        fn derivative_bounded(x in -20.0f64..20.0, c in 0.1f64..3.0, s in 0.1f64..3.0) {
            // Outer-branch maximum of x e^{(c²−x²)/σ²} sits at x = σ/√2 when that exceeds c.
            let p = GlowParams::new(c, s);
            let peak = if s / 2f64.sqrt() > c {
                s / 2f64.sqrt() * (c * c / (s * s) - 0.5).exp()
            } else {
                c
            };
            let d = glow_prime(x, &p);
            prop_assert!(d >= 0.0 && d <= peak * (1.0 + 1e-12));
        }

        #[test]
        fn monotone(c in 0.1f64..3.0, s in 0.1f64..3.0, lo in -8.0f64..0.0, width in 0.1f64..16.0) {
            let p = GlowParams::new(c, s);
            let n = 10_000;
            let mut prev = glow(lo, &p);
            for k in 1..=n {
                let v = glow(lo + width * k as f64 / n as f64, &p);
                prop_assert!(v >= prev);
                prev = v;
            }
        }
    }
}
