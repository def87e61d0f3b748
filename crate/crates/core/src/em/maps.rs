use ndarray::Array2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Complex relative permittivity over the `n_side`×`n_side` grid, indexed
/// `[row, column]` with the same layout as [`crate::em::Grid`].
#[derive(Debug, Clone, PartialEq)]
pub struct PermittivityMap {
    pub values: Array2<Complex64>,
}

impl PermittivityMap {
    /// Free-space background, ε_r = 1 everywhere.
    pub fn background(n_side: usize) -> Self {
        Self {
            values: Array2::from_elem((n_side, n_side), Complex64::new(1.0, 0.0)),
        }
    }

    pub fn from_values(values: Array2<Complex64>) -> Result<Self> {
        if values.nrows() != values.ncols() {
            return Err(Error::Shape(format!(
                "permittivity map must be square, got {}x{}",
                values.nrows(),
                values.ncols()
            )));
        }
        Ok(Self { values })
    }

    /// Builds a map from flat row-major values.
    pub fn from_flat(n_side: usize, flat: Vec<Complex64>) -> Result<Self> {
        Array2::from_shape_vec((n_side, n_side), flat)
            .map(|values| Self { values })
            .map_err(|e| Error::Shape(e.to_string()))
    }

    pub fn n_side(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_cells(&self) -> usize {
        self.values.len()
    }

    /// Row-major flat view of the values.
    pub fn flat(&self) -> Vec<Complex64> {
        self.values.iter().copied().collect()
    }

    /// Contrast χ = ε_r − 1 per cell, row-major.
    pub fn contrast(&self) -> Vec<Complex64> {
        self.values.iter().map(|e| e - 1.0).collect()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.values.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn check_n_side(&self, n_side: usize) -> Result<()> {
        if self.n_side() != n_side {
            return Err(Error::Shape(format!(
                "permittivity map is {0}x{0}, grid is {1}x{1}",
                self.n_side(),
                n_side
            )));
        }
        Ok(())
    }
}

/// Where a measurement set came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    Synthetic,
    SyntheticNoisy,
    File,
}

/// Scattered-field samples, one complex value per (receiver, transmitter).
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSet {
    /// Receivers × transmitters.
    pub samples: Array2<Complex64>,
    /// [`crate::em::Setup::geometry_fingerprint`] of the acquiring setup.
    pub fingerprint: String,
    pub provenance: Provenance,
}

impl MeasurementSet {
    pub fn zeros(n_rx: usize, n_tx: usize, fingerprint: String) -> Self {
        Self {
            samples: Array2::zeros((n_rx, n_tx)),
            fingerprint,
            provenance: Provenance::Synthetic,
        }
    }

    pub fn n_rx(&self) -> usize {
        self.samples.nrows()
    }

    pub fn n_tx(&self) -> usize {
        self.samples.ncols()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.samples.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Column `t` (all receivers for one transmitter).
    pub fn column(&self, t: usize) -> Vec<Complex64> {
        self.samples.column(t).to_vec()
    }

    /// Keeps only the listed transmitter columns.
    pub fn select_tx(&self, indices: &[usize], fingerprint: String) -> Result<Self> {
        if let Some(&bad) = indices.iter().find(|&&k| k >= self.n_tx()) {
            return Err(Error::Shape(format!("transmitter {bad} out of range")));
        }
        Ok(Self {
            samples: self.samples.select(ndarray::Axis(1), indices),
            fingerprint,
            provenance: self.provenance,
        })
    }

    /// Checks dimensions and fingerprint against a setup.
    pub fn check_setup(&self, setup: &crate::em::Setup) -> Result<()> {
        if self.samples.dim() != (setup.n_rx(), setup.n_tx()) {
            return Err(Error::Shape(format!(
                "measurements are {}x{} (rx x tx), setup has {} receivers and {} transmitters",
                self.n_rx(),
                self.n_tx(),
                setup.n_rx(),
                setup.n_tx()
            )));
        }
        let fp = setup.geometry_fingerprint();
        if self.fingerprint != fp {
            return Err(Error::Fingerprint {
                expected: fp,
                found: self.fingerprint.clone(),
            });
        }
        if !self.samples.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
            return Err(Error::Shape("measurements contain non-finite samples".into()));
        }
        Ok(())
    }
}
