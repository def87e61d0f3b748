//! Loss terms and their gradients with respect to the permittivity map.

use serde::{Deserialize, Serialize};

use crate::em::{MeasurementSet, PermittivityMap};
use crate::error::{Error, Result};

/// Smoothing added under the TV root so the term is differentiable where the
/// map is flat.
pub const TV_SMOOTHING: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    /// Weight of the lower-bound penalty.
    pub alpha: f64,
    /// Weight of the total-variation term. The default suits the unit line
    /// source, whose scattered fields are small next to the TV of a map.
    pub beta: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { alpha: 2.0, beta: 1e-4 }
    }
}

impl LossWeights {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        let w = Self { alpha, beta };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.alpha.is_finite() && self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::Config(format!(
                "loss weights must be finite and non-negative, got alpha={} beta={}",
                self.alpha, self.beta
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub data: f64,
    pub bound: f64,
    pub tv: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn compose(data: f64, bound: f64, tv: f64, weights: &LossWeights) -> Self {
        Self {
            data,
            bound,
            tv,
            total: data + weights.alpha * bound + weights.beta * tv,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.is_finite() && self.bound.is_finite() && self.tv.is_finite() && self.total.is_finite()
    }
}

/// Gradient of a real loss with respect to Re ε and Im ε per cell, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct MapGradient {
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

impl MapGradient {
    pub fn zeros(n_cells: usize) -> Self {
        Self {
            re: vec![0.0; n_cells],
            im: vec![0.0; n_cells],
        }
    }

    /// self += scale · other
    pub fn add_scaled(&mut self, other: &MapGradient, scale: f64) {
        for (a, b) in self.re.iter_mut().zip(&other.re) {
            *a += scale * b;
        }
        for (a, b) in self.im.iter_mut().zip(&other.im) {
            *a += scale * b;
        }
    }
}

/// ‖meas − pred‖ over all samples (unsquared Frobenius norm).
pub fn data_loss(pred: &MeasurementSet, meas: &MeasurementSet) -> Result<f64> {
    if pred.samples.dim() != meas.samples.dim() {
        return Err(Error::Shape(format!(
            "predicted {:?} and measured {:?} samples differ in shape",
            pred.samples.dim(),
            meas.samples.dim()
        )));
    }
    Ok(pred
        .samples
        .iter()
        .zip(meas.samples.iter())
        .map(|(p, m)| (p - m).norm_sqr())
        .sum::<f64>()
        .sqrt())
}

/// Σ max(0, 1 − Re ε) over all cells.
pub fn bound_loss(eps: &PermittivityMap) -> f64 {
    eps.values.iter().map(|e| (1.0 - e.re).max(0.0)).sum()
}

/// Subgradient of [`bound_loss`]; zero at the kink Re ε = 1.
pub fn bound_gradient(eps: &PermittivityMap) -> MapGradient {
    let mut g = MapGradient::zeros(eps.n_cells());
    for (d, e) in g.re.iter_mut().zip(eps.values.iter()) {
        if e.re < 1.0 {
            *d = -1.0;
        }
    }
    g
}

/// Smoothed isotropic total variation with circular boundary, applied to the
/// real and imaginary parts separately and summed.
pub fn tv_loss(eps: &PermittivityMap) -> f64 {
    let n = eps.n_side();
    let re: Vec<f64> = eps.values.iter().map(|z| z.re).collect();
    let im: Vec<f64> = eps.values.iter().map(|z| z.im).collect();
    channel_tv(&re, n) + channel_tv(&im, n)
}

pub fn tv_gradient(eps: &PermittivityMap) -> MapGradient {
    let n = eps.n_side();
    let re: Vec<f64> = eps.values.iter().map(|z| z.re).collect();
    let im: Vec<f64> = eps.values.iter().map(|z| z.im).collect();
    MapGradient {
        re: channel_tv_gradient(&re, n),
        im: channel_tv_gradient(&im, n),
    }
}

/// Differences toward the left and lower neighbours of cell (i, j), wrapping
/// at the edges.
#[inline]
fn differences(x: &[f64], n: usize, i: usize, j: usize) -> (f64, f64) {
    let here = x[i * n + j];
    let left = x[i * n + (j + n - 1) % n];
    let below = x[((i + 1) % n) * n + j];
    (left - here, below - here)
}

/// TV of a single real channel. Each term is offset by √δ so flat maps give 0.
pub fn channel_tv(x: &[f64], n: usize) -> f64 {
    let floor = TV_SMOOTHING.sqrt();
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..n {
            let (a, b) = differences(x, n, i, j);
            total += (a * a + b * b + TV_SMOOTHING).sqrt() - floor;
        }
    }
    total
}

pub fn channel_tv_gradient(x: &[f64], n: usize) -> Vec<f64> {
    // Per-cell a/r and b/r, then each cell collects from the three terms it enters.
    let mut ar = vec![0.0; n * n];
    let mut br = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let (a, b) = differences(x, n, i, j);
            let r = (a * a + b * b + TV_SMOOTHING).sqrt();
            ar[i * n + j] = a / r;
            br[i * n + j] = b / r;
        }
    }
    let mut g = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let k = i * n + j;
            let right = i * n + (j + 1) % n;
            let above = ((i + n - 1) % n) * n + j;
            g[k] = -(ar[k] + br[k]) + ar[right] + br[above];
        }
    }
    g
}

/// All three terms and their weighted sum.
pub fn total_loss(
    eps: &PermittivityMap,
    pred: &MeasurementSet,
    meas: &MeasurementSet,
    weights: &LossWeights,
) -> Result<LossBreakdown> {
    Ok(LossBreakdown::compose(
        data_loss(pred, meas)?,
        bound_loss(eps),
        tv_loss(eps),
        weights,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use num_complex::Complex64;
    use proptest::prelude::*;

    fn real_map(rows: &[&[f64]]) -> PermittivityMap {
        let n = rows.len();
        let flat = rows.iter().flat_map(|r| r.iter().map(|&v| Complex64::new(v, 0.0))).collect();
        PermittivityMap::from_flat(n, flat).unwrap()
    }

    fn meas(values: &[Complex64], rows: usize) -> MeasurementSet {
        let cols = values.len() / rows;
        MeasurementSet {
            samples: Array2::from_shape_vec((rows, cols), values.to_vec()).unwrap(),
            fingerprint: "f".into(),
            provenance: crate::em::Provenance::Synthetic,
        }
    }

    #[test]
    fn data_loss_fixtures() {
        let z = Complex64::new(0.0, 0.0);
        let a = meas(&[z, z, Complex64::new(3.0, 4.0), z], 2);
        let b = meas(&[z; 4], 2);
        assert_eq!(data_loss(&a, &b).unwrap(), 5.0);
        assert_eq!(data_loss(&a, &a).unwrap(), 0.0);
        let alpha = Complex64::new(-1.5, 2.0);
        let mut sa = a.clone();
        let mut sb = b.clone();
        sa.samples.mapv_inplace(|v| v * alpha);
        sb.samples.mapv_inplace(|v| v * alpha);
        assert!((data_loss(&sa, &sb).unwrap() - 5.0 * alpha.norm()).abs() < 1e-12);
        assert!(data_loss(&a, &meas(&[z; 2], 1)).is_err());
    }

    #[test]
    fn bound_fixtures() {
        let mut m = PermittivityMap::background(3);
        assert_eq!(bound_loss(&m), 0.0);
        m.values[[1, 2]] = Complex64::new(0.5, -0.3);
        assert_eq!(bound_loss(&m), 0.5);
        let g = bound_gradient(&m);
        assert_eq!(g.re[5], -1.0);
        assert_eq!(g.re.iter().filter(|&&v| v != 0.0).count(), 1);
        assert!(g.im.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn tv_two_by_two_fixture() {
        let m = real_map(&[&[1.0, 1.0], &[1.0, 2.0]]);
        let want = 2.0 + 2f64.sqrt();
        assert!((tv_loss(&m) - want).abs() < 1e-5, "{}", tv_loss(&m));
        assert_eq!(tv_loss(&PermittivityMap::background(5)), 0.0);
    }

    #[test]
    fn tv_gradient_matches_finite_difference() {
        let n = 5;
        let x: Vec<f64> = (0..n * n).map(|k| ((k * 37 % 11) as f64 * 0.3).sin()).collect();
        let g = channel_tv_gradient(&x, n);
        let h = 1e-6;
        for k in 0..n * n {
            let mut up = x.clone();
            let mut dn = x.clone();
            up[k] += h;
            dn[k] -= h;
            let fd = (channel_tv(&up, n) - channel_tv(&dn, n)) / (2.0 * h);
            assert!((fd - g[k]).abs() < 1e-6, "cell {k}: fd {fd} vs {}", g[k]);
        }
    }

    #[test]
    fn breakdown_recomposes() {
        let w = LossWeights::new(2.0, 1.0).unwrap();
        let b = LossBreakdown::compose(0.7, 0.25, 1.5, &w);
        assert_eq!(b.total, 0.7 + 2.0 * 0.25 + 1.0 * 1.5);
        assert!(LossWeights::new(-1.0, 0.0).is_err());
        assert!(LossWeights::new(0.0, f64::NAN).is_err());
    }

    proptest! {
        #[test]
        fn tv_is_shift_invariant(vals in proptest::collection::vec(-3.0f64..3.0, 16), shift in -5.0f64..5.0) {
            let a = channel_tv(&vals, 4);
            let shifted: Vec<f64> = vals.iter().map(|v| v + shift).collect();
            prop_assert!((a - channel_tv(&shifted, 4)).abs() < 1e-9);
        }

        #[test]
        fn bound_is_zero_on_feasible_maps(vals in proptest::collection::vec((1.0f64..4.0, -2.0f64..0.0), 9)) {
            let flat = vals.iter().map(|&(r, i)| Complex64::new(r, i)).collect();
            let m = PermittivityMap::from_flat(3, flat).unwrap();
            prop_assert_eq!(bound_loss(&m), 0.0);
        }

        #[test]
        fn data_loss_triangle(v in proptest::collection::vec(-1.0f64..1.0, 24)) {
            let c = |o: usize| (0..4).map(|k| Complex64::new(v[o + 2 * k], v[o + 2 * k + 1])).collect::<Vec<_>>();
            let (a, b, d) = (meas(&c(0), 2), meas(&c(8), 2), meas(&c(16), 2));
            let ab = data_loss(&a, &b).unwrap();
            let bd = data_loss(&b, &d).unwrap();
            let ad = data_loss(&a, &d).unwrap();
            prop_assert!(ad <= ab + bd + 1e-12);
        }
    }
}
