//! Series solution for a centred homogeneous circular cylinder illuminated by
//! a line source, TM polarisation. Used to validate the discrete forward model.
//!
//! With the line source at (ρ_t, φ_t) the incident field inside the source
//! radius expands as
//!
//! ```text
//!   E_inc = -(j/4) Σ_n J_n(k0 ρ) H_n(k0 ρ_t) e^{jn(φ−φ_t)}
//! ```
//!
//! and matching E_z and ∂E_z/∂ρ at the cylinder radius R gives the exterior
//! coefficients
//!
//! ```text
//!   b_n = (k1 J_n(x0) J_n'(x1) − k0 J_n'(x0) J_n(x1))
//!       / (k0 H_n'(x0) J_n(x1) − k1 H_n(x0) J_n'(x1)),   x0 = k0 R, x1 = k1 R
//! ```
//!
//! so the scattered field at a receiver is
//! `-(j/4) Σ_n b_n H_n(k0 ρ_t) H_n(k0 ρ_r) e^{jn(φ_r−φ_t)}`.

use ndarray::Array2;
use num_complex::Complex64;

use super::maps::{MeasurementSet, Provenance};
use super::setup::Setup;
use crate::bessel::{derivative_sequence, j_sequence, j_sequence_complex, y_sequence};
use crate::error::{Error, Result};

pub const MAX_TERMS: usize = 200;
const TRUNCATION_RTOL: f64 = 1e-12;

/// Harmonic time convention. Only [`TimeConvention::Positive`] matches the
/// rest of the crate; the other exists to check conjugate symmetry.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimeConvention {
    /// e^{+jωt}: outgoing waves use H^(2), losses have Im ε < 0.
    Positive,
    /// e^{−jωt}: outgoing waves use H^(1), losses have Im ε > 0.
    Negative,
}

/// Scattered field of a disk of `radius` and permittivity `eps` centred on the
/// DOI, sampled at every (receiver, transmitter) of `setup`.
pub fn mie_cylinder_scattered(radius: f64, eps: Complex64, setup: &Setup) -> Result<MeasurementSet> {
    mie_series(radius, eps, setup, TimeConvention::Positive)
}

pub fn mie_series(radius: f64, eps: Complex64, setup: &Setup, convention: TimeConvention) -> Result<MeasurementSet> {
    setup.validate()?;
    if !(radius > 0.0 && radius < setup.doi_side_m / 2.0) {
        return Err(Error::InvalidSetup(format!(
            "cylinder radius {radius} m does not fit inside the {} m DOI",
            setup.doi_side_m
        )));
    }
    let (n_rx, n_tx) = (setup.n_rx(), setup.n_tx());
    let mut samples = Array2::<Complex64>::zeros((n_rx, n_tx));
    let out = |samples| MeasurementSet {
        samples,
        fingerprint: setup.geometry_fingerprint(),
        provenance: Provenance::Synthetic,
    };
    if eps == Complex64::new(1.0, 0.0) {
        return Ok(out(samples));
    }

    let k0 = setup.k0();
    let k1 = k0 * eps.sqrt();
    let x0 = k0 * radius;
    let x1 = k1 * radius;
    let nmax = MAX_TERMS + 1;

    // Outgoing Hankel function of the chosen kind.
    let kind = |j: f64, y: f64| match convention {
        TimeConvention::Positive => Complex64::new(j, -y),
        TimeConvention::Negative => Complex64::new(j, y),
    };
    let jv: Vec<Complex64> = j_sequence(nmax, x0).into_iter().map(|v| Complex64::new(v, 0.0)).collect();
    let hv: Vec<Complex64> = jv.iter().zip(y_sequence(nmax, x0)).map(|(j, y)| kind(j.re, y)).collect();
    let x0c = Complex64::new(x0, 0.0);
    let jd = derivative_sequence(&jv, x0c);
    let hd = derivative_sequence(&hv, x0c);
    let j1v = j_sequence_complex(nmax, x1);
    let j1d = derivative_sequence(&j1v, x1);

    let coeffs: Vec<Complex64> = (0..=MAX_TERMS)
        .map(|n| {
            let num = k1 * jv[n] * j1d[n] - k0 * jd[n] * j1v[n];
            let den = k0 * hd[n] * j1v[n] - k1 * hv[n] * j1d[n];
            // Y_n overflows for n far above x0, where b_n has long underflowed.
            if den.is_finite() && num.is_finite() { num / den } else { Complex64::new(0.0, 0.0) }
        })
        .collect();

    let polar = |p: [f64; 2]| (p[0].hypot(p[1]), p[1].atan2(p[0]));
    let hankel_at = |rho: f64| -> Vec<Complex64> {
        let x = k0 * rho;
        j_sequence(MAX_TERMS, x)
            .into_iter()
            .zip(y_sequence(MAX_TERMS, x))
            .map(|(j, y)| kind(j, y))
            .collect()
    };
    let tx: Vec<(f64, Vec<Complex64>)> = setup.tx_positions.iter().map(|&p| {
        let (r, phi) = polar(p);
        (phi, hankel_at(r))
    }).collect();
    let rx: Vec<(f64, Vec<Complex64>)> = setup.rx_positions.iter().map(|&p| {
        let (r, phi) = polar(p);
        (phi, hankel_at(r))
    }).collect();

    // Source normalisation: g = -(j/4) H^(2) for e^{+jωt}, +(j/4) H^(1) otherwise.
    let source = match convention {
        TimeConvention::Positive => Complex64::new(0.0, -0.25),
        TimeConvention::Negative => Complex64::new(0.0, 0.25),
    };

    let min_terms = (x1.norm().max(x0) as usize) + 2;
    let mut converged = false;
    for n in 0..=MAX_TERMS {
        let weight = if n == 0 { 1.0 } else { 2.0 };
        let mut largest_ratio: f64 = 0.0;
        for (r, (phi_r, h_r)) in rx.iter().enumerate() {
            for (t, (phi_t, h_t)) in tx.iter().enumerate() {
                let term = source * coeffs[n] * h_t[n] * h_r[n] * (weight * (n as f64 * (phi_r - phi_t)).cos());
                let acc = &mut samples[[r, t]];
                *acc += term;
                if acc.norm() > 0.0 {
                    largest_ratio = largest_ratio.max(term.norm() / acc.norm());
                } else if term.norm() > 0.0 {
                    largest_ratio = f64::INFINITY;
                }
            }
        }
        if n >= min_terms && largest_ratio < TRUNCATION_RTOL {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NonConvergence(MAX_TERMS));
    }
    Ok(out(samples))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup() -> Setup {
        Setup::ring(4e9, 0.15, 16, 8, 7, 1.5).unwrap()
    }

    #[test]
    fn unit_permittivity_scatters_nothing() {
        let m = mie_cylinder_scattered(0.03, Complex64::new(1.0, 0.0), &setup()).unwrap();
        assert!(m.samples.iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn conjugate_convention_gives_conjugate_field() {
        let eps = Complex64::new(2.0, -0.4);
        let a = mie_series(0.03, eps, &setup(), TimeConvention::Positive).unwrap();
        let b = mie_series(0.03, eps.conj(), &setup(), TimeConvention::Negative).unwrap();
        for (x, y) in a.samples.iter().zip(b.samples.iter()) {
            assert!((x.conj() - y).norm() < 1e-12 * x.norm());
        }
    }

    #[test]
    fn weak_small_cylinder_matches_born_estimate() {
        // Small weak cylinder: E_sca ≈ k0² χ A g(r_tx) g(r_rx), g the line-source field.
        let s = setup();
        let chi = 0.01;
        let radius = 0.002;
        let m = mie_cylinder_scattered(radius, Complex64::new(1.0 + chi, 0.0), &s).unwrap();
        let k0 = s.k0();
        let g = |p: [f64; 2]| Complex64::new(0.0, -0.25) * crate::bessel::hankel2(0, k0 * p[0].hypot(p[1]));
        let area = std::f64::consts::PI * radius * radius;
        for r in 0..s.n_rx() {
            for t in 0..s.n_tx() {
                let born = k0 * k0 * chi * area * g(s.tx_positions[t]) * g(s.rx_positions[r]);
                let rel = (m.samples[[r, t]] - born).norm() / born.norm();
                assert!(rel < 0.02, "rx {r} tx {t}: {rel}");
            }
        }
    }

    #[test]
    fn rejects_oversized_cylinder() {
        assert!(mie_cylinder_scattered(0.2, Complex64::new(2.0, 0.0), &setup()).is_err());
    }
}
