use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Current version of the setup JSON document.
pub const SETUP_VERSION: u32 = 1;

/// A 2-D point in metres, `[x, y]`.
pub type Point = [f64; 2];

/// Measurement geometry and DOI discretisation. The DOI is the square
/// `[-doi_side/2, doi_side/2]²` centred on the origin in free space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Setup {
    #[serde(default = "default_version")]
    pub version: u32,
    pub frequency_hz: f64,
    pub doi_side_m: f64,
    pub n_side: usize,
    pub tx_positions: Vec<Point>,
    pub rx_positions: Vec<Point>,
}

fn default_version() -> u32 {
    SETUP_VERSION
}

impl Setup {
    pub fn new(
        frequency_hz: f64,
        doi_side_m: f64,
        n_side: usize,
        tx_positions: Vec<Point>,
        rx_positions: Vec<Point>,
    ) -> Result<Self> {
        let setup = Self {
            version: SETUP_VERSION,
            frequency_hz,
            doi_side_m,
            n_side,
            tx_positions,
            rx_positions,
        };
        setup.validate()?;
        Ok(setup)
    }

    /// Transmitters and receivers on a ring concentric with the DOI. The
    /// first transmitter sits at angle 0; receivers are offset by half an
    /// angular step so no receiver coincides with a transmitter.
    pub fn ring(
        frequency_hz: f64,
        doi_side_m: f64,
        n_side: usize,
        n_tx: usize,
        n_rx: usize,
        radius_m: f64,
    ) -> Result<Self> {
        let tx = (0..n_tx)
            .map(|k| polar(radius_m, 2.0 * PI * k as f64 / n_tx as f64))
            .collect();
        let rx = (0..n_rx)
            .map(|k| polar(radius_m, 2.0 * PI * (k as f64 + 0.5) / n_rx as f64))
            .collect();
        Self::new(frequency_hz, doi_side_m, n_side, tx, rx)
    }

    /// The reference configuration: 4 GHz, 0.15 m DOI on a 64×64 grid, 36
    /// transmitters and 36 receivers on a ring of radius 20λ.
    pub fn reference() -> Self {
        let f = 4e9;
        let radius = 20.0 * SPEED_OF_LIGHT / f;
        Self::ring(f, 0.15, 64, 36, 36, radius).expect("reference setup is valid")
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_side < 2 {
            return Err(Error::InvalidSetup(format!("n_side must be >= 2, got {}", self.n_side)));
        }
        if !(self.frequency_hz > 0.0 && self.frequency_hz.is_finite()) {
            return Err(Error::InvalidSetup(format!("frequency must be positive, got {}", self.frequency_hz)));
        }
        if !(self.doi_side_m > 0.0 && self.doi_side_m.is_finite()) {
            return Err(Error::InvalidSetup(format!("DOI side must be positive, got {}", self.doi_side_m)));
        }
        if self.tx_positions.is_empty() || self.rx_positions.is_empty() {
            return Err(Error::InvalidSetup("need at least one transmitter and one receiver".into()));
        }
        let half = self.doi_side_m / 2.0;
        let inside = |p: &Point| p[0].abs() <= half && p[1].abs() <= half;
        for (role, list) in [("transmitter", &self.tx_positions), ("receiver", &self.rx_positions)] {
            if let Some(k) = list.iter().position(|p| !(p[0].is_finite() && p[1].is_finite()) || inside(p)) {
                return Err(Error::InvalidSetup(format!(
                    "{role} {k} at {:?} is not strictly outside the DOI",
                    list[k]
                )));
            }
        }
        Ok(())
    }

    pub fn k0(&self) -> f64 {
        2.0 * PI * self.frequency_hz / SPEED_OF_LIGHT
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.frequency_hz
    }

    pub fn n_cells(&self) -> usize {
        self.n_side * self.n_side
    }

    pub fn n_tx(&self) -> usize {
        self.tx_positions.len()
    }

    pub fn n_rx(&self) -> usize {
        self.rx_positions.len()
    }

    pub fn grid(&self) -> Grid {
        Grid::new(self.doi_side_m, self.n_side)
    }

    /// Same measurement geometry on a different grid.
    pub fn with_n_side(&self, n_side: usize) -> Result<Self> {
        let mut s = self.clone();
        s.n_side = n_side;
        s.validate()?;
        Ok(s)
    }

    /// Indices of `count` transmitters spread evenly over the current list.
    pub fn tx_subset_indices(&self, count: usize) -> Result<Vec<usize>> {
        let n = self.n_tx();
        if count == 0 || count > n {
            return Err(Error::Config(format!("transmitter subset {count} not in 1..={n}")));
        }
        Ok((0..count).map(|k| k * n / count).collect())
    }

    /// Keeps only the listed transmitters.
    pub fn select_tx(&self, indices: &[usize]) -> Result<Self> {
        let mut s = self.clone();
        s.tx_positions = indices
            .iter()
            .map(|&k| {
                self.tx_positions
                    .get(k)
                    .copied()
                    .ok_or_else(|| Error::Config(format!("transmitter index {k} out of range")))
            })
            .collect::<Result<_>>()?;
        s.validate()?;
        Ok(s)
    }

    /// Identifies the measurement geometry (frequency and antenna positions).
    pub fn geometry_fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update(b"geometry");
        h.update(self.frequency_hz.to_le_bytes());
        for p in self.tx_positions.iter().chain(&self.rx_positions) {
            h.update(p[0].to_le_bytes());
            h.update(p[1].to_le_bytes());
        }
        h.update((self.tx_positions.len() as u64).to_le_bytes());
        hex16(&h.finalize())
    }

    /// Identifies the reconstruction grid: frequency, DOI size and cell count.
    /// Network checkpoints are only transferable between equal grid fingerprints.
    pub fn grid_fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update(b"grid");
        h.update(self.frequency_hz.to_le_bytes());
        h.update(self.doi_side_m.to_le_bytes());
        h.update((self.n_side as u64).to_le_bytes());
        hex16(&h.finalize())
    }
}

fn hex16(bytes: &[u8]) -> String {
    bytes[..8].iter().map(|b| format!("{b:02x}")).collect()
}

fn polar(r: f64, theta: f64) -> Point {
    [r * theta.cos(), r * theta.sin()]
}

/// Uniform square discretisation of the DOI. Cell `(i, j)` has row `i`
/// counted from the top edge (largest y) and column `j` from the left edge;
/// its flat index is `i * n_side + j`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub n_side: usize,
    pub cell_size: f64,
    pub cell_area: f64,
    /// Radius of the disk with the same area as one cell.
    pub equivalent_radius: f64,
    pub cell_centers: Vec<Point>,
}

impl Grid {
    pub fn new(doi_side: f64, n_side: usize) -> Self {
        let cell_size = doi_side / n_side as f64;
        let cell_area = cell_size * cell_size;
        let half = doi_side / 2.0;
        let cell_centers = (0..n_side * n_side)
            .map(|k| {
                let (i, j) = (k / n_side, k % n_side);
                [
                    -half + (j as f64 + 0.5) * cell_size,
                    half - (i as f64 + 0.5) * cell_size,
                ]
            })
            .collect();
        Self {
            n_side,
            cell_size,
            cell_area,
            equivalent_radius: (cell_area / PI).sqrt(),
            cell_centers,
        }
    }

    pub fn n_cells(&self) -> usize {
        self.n_side * self.n_side
    }

    pub fn center(&self, i: usize, j: usize) -> Point {
        self.cell_centers[i * self.n_side + j]
    }
}
