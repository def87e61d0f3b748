use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::em::{MeasurementSet, Provenance};
use crate::error::{Error, Result};

/// Adds circular complex Gaussian noise rescaled so that
/// ‖noise‖_F = `ratio` · ‖meas‖_F exactly.
pub fn add_noise(meas: &MeasurementSet, ratio: f64, seed: u64) -> Result<MeasurementSet> {
    if !(ratio >= 0.0 && ratio.is_finite()) {
        return Err(Error::Config(format!("noise ratio must be finite and non-negative, got {ratio}")));
    }
    if ratio == 0.0 {
        return Ok(meas.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise: Vec<Complex64> = (0..meas.samples.len())
        .map(|_| {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            Complex64::new(re, im)
        })
        .collect();
    let noise_norm = noise.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let scale = ratio * meas.frobenius_norm() / noise_norm;
    let mut out = meas.clone();
    for (s, n) in out.samples.iter_mut().zip(&noise) {
        *s += n * scale;
    }
    out.provenance = Provenance::SyntheticNoisy;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    fn meas() -> MeasurementSet {
        MeasurementSet {
            samples: Array2::from_shape_fn((5, 4), |(r, t)| Complex64::new(r as f64 - 1.5, 0.3 * t as f64)),
            fingerprint: "fp".into(),
            provenance: Provenance::Synthetic,
        }
    }

    #[test]
    fn zero_ratio_is_identity() {
        assert_eq!(add_noise(&meas(), 0.0, 1).unwrap(), meas());
    }

    #[test]
    fn ratio_is_exact() {
        let m = meas();
        for &ratio in &[0.1, 0.3, 0.5] {
            let n = add_noise(&m, ratio, 7).unwrap();
            let diff: f64 = n
                .samples
                .iter()
                .zip(m.samples.iter())
                .map(|(a, b)| (a - b).norm_sqr())
                .sum::<f64>()
                .sqrt();
            assert!((diff / m.frobenius_norm() - ratio).abs() < 1e-12);
            assert_eq!(n.provenance, Provenance::SyntheticNoisy);
            assert_eq!(n.samples.dim(), m.samples.dim());
        }
    }

    #[test]
    fn seeded() {
        assert_eq!(add_noise(&meas(), 0.3, 7).unwrap(), add_noise(&meas(), 0.3, 7).unwrap());
        assert_ne!(add_noise(&meas(), 0.3, 7).unwrap(), add_noise(&meas(), 0.3, 8).unwrap());
    }
}
