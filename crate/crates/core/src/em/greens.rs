//! Discretised Green's operators (pulse basis, point matching, equal-area
//! disk cells).
//!
//! With the e^{+jωt} convention the 2-D Green's function is
//! g(ρ) = -(j/4) H_0^(2)(k0 ρ). Integrating k0² g over a disk of radius `a`
//! gives the coupling from a cell to an external point
//!
//! ```text
//!   -(j π k0 a / 2) J_1(k0 a) H_0^(2)(k0 ρ)
//! ```
//!
//! and the self term of a cell
//!
//! ```text
//!   -(j π k0 a / 2) H_1^(2)(k0 a) - 1
//! ```
//!
//! The interior operator only depends on the row/column offset between two
//! cells, so it is stored as an `n_side`×`n_side` table of offsets instead of
//! an N×N matrix; entries are materialised on demand.

use ndarray::Array2;
use num_complex::Complex64;

use super::setup::{Grid, Point, Setup};
use crate::bessel::{hankel2, j1};
use crate::error::{Error, Result};
use crate::par;

const J: Complex64 = Complex64 { re: 0.0, im: 1.0 };

#[derive(Debug, Clone)]
pub struct GreensOperators {
    n_side: usize,
    /// G_D value for offset `(|di|, |dj|)` at `di * n_side + dj`.
    kernel: Vec<Complex64>,
    /// G_S, receivers × cells.
    data: Array2<Complex64>,
    k0: f64,
    fingerprint: String,
}

impl GreensOperators {
    pub fn n_side(&self) -> usize {
        self.n_side
    }

    pub fn n_cells(&self) -> usize {
        self.n_side * self.n_side
    }

    pub fn n_rx(&self) -> usize {
        self.data.nrows()
    }

    pub fn k0(&self) -> f64 {
        self.k0
    }

    /// Geometry and grid fingerprint of the setup these operators belong to.
    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    /// G_D entry between flat cell indices `m` and `n`.
    #[inline]
    pub fn gd(&self, m: usize, n: usize) -> Complex64 {
        let (mi, mj) = (m / self.n_side, m % self.n_side);
        let (ni, nj) = (n / self.n_side, n % self.n_side);
        self.kernel[mi.abs_diff(ni) * self.n_side + mj.abs_diff(nj)]
    }

    /// Self term shared by every cell.
    pub fn gd_self(&self) -> Complex64 {
        self.kernel[0]
    }

    /// Dense N×N interior operator. Only sensible for small grids.
    pub fn gd_dense(&self) -> Array2<Complex64> {
        let n = self.n_cells();
        Array2::from_shape_fn((n, n), |(m, k)| self.gd(m, k))
    }

    /// Row-major block `G_D[rows, cols]`.
    pub fn gd_block(&self, rows: &[usize], cols: &[usize]) -> Vec<Complex64> {
        let mut out = Vec::with_capacity(rows.len() * cols.len());
        for &m in rows {
            out.extend(cols.iter().map(|&n| self.gd(m, n)));
        }
        out
    }

    /// y = G_D[:, cols] · x over all cells, where `x[k]` lives on cell `cols[k]`.
    pub fn gd_apply_from(&self, cols: &[usize], x: &[Complex64]) -> Vec<Complex64> {
        (0..self.n_cells())
            .map(|m| cols.iter().zip(x).map(|(&n, v)| self.gd(m, n) * v).sum())
            .collect()
    }

    /// G_S, receivers × cells.
    pub fn gs(&self) -> &Array2<Complex64> {
        &self.data
    }

    /// Scattered field at the receivers from currents `x[k]` on cells `cols[k]`.
    pub fn gs_apply_from(&self, cols: &[usize], x: &[Complex64]) -> Vec<Complex64> {
        self.data
            .rows()
            .into_iter()
            .map(|row| cols.iter().zip(x).map(|(&n, v)| row[n] * v).sum())
            .collect()
    }
}

/// Builds G_D and G_S for `setup` on `grid`.
pub fn assemble_greens(setup: &Setup, grid: &Grid) -> Result<GreensOperators> {
    setup.validate()?;
    if grid.n_side != setup.n_side {
        return Err(Error::Shape(format!(
            "grid has {} cells per side, setup has {}",
            grid.n_side, setup.n_side
        )));
    }
    let k0 = setup.k0();
    let a = grid.equivalent_radius;
    let ka = k0 * a;
    let half_pi_ka = std::f64::consts::FRAC_PI_2 * ka;
    let coupling = -J * half_pi_ka * j1(ka);
    let self_term = -J * half_pi_ka * hankel2(1, ka) - 1.0;

    let n = grid.n_side;
    let h = grid.cell_size;
    let kernel = par::map_indexed(n * n, |k| {
        let (di, dj) = (k / n, k % n);
        if k == 0 {
            self_term
        } else {
            let rho = h * ((di * di + dj * dj) as f64).sqrt();
            coupling * hankel2(0, k0 * rho)
        }
    });

    let rows = par::map_indexed(setup.n_rx(), |m| {
        let p = setup.rx_positions[m];
        grid.cell_centers
            .iter()
            .map(|c| coupling * hankel2(0, k0 * dist(p, *c)))
            .collect::<Vec<_>>()
    });
    let data = Array2::from_shape_vec((setup.n_rx(), grid.n_cells()), rows.concat())
        .expect("row lengths match grid");

    Ok(GreensOperators {
        n_side: n,
        kernel,
        data,
        k0,
        fingerprint: format!("{}-{}", setup.geometry_fingerprint(), setup.grid_fingerprint()),
    })
}

/// Field of a unit line source at transmitter `tx`, E = -(j/4) H_0^(2)(k0 |r − r_tx|),
/// sampled at the cell centres.
pub fn incident_field(setup: &Setup, grid: &Grid, tx: usize) -> Result<Vec<Complex64>> {
    let src = *setup
        .tx_positions
        .get(tx)
        .ok_or_else(|| Error::Shape(format!("transmitter index {tx} out of range")))?;
    let k0 = setup.k0();
    Ok(grid.cell_centers
        .iter()
        .map(|c| -0.25 * J * hankel2(0, k0 * dist(src, *c)))
        .collect())
}

/// Incident fields for every transmitter, transmitters × cells.
pub fn incident_fields(setup: &Setup, grid: &Grid) -> Array2<Complex64> {
    let rows = par::map_indexed(setup.n_tx(), |t| {
        incident_field(setup, grid, t).expect("index in range")
    });
    Array2::from_shape_vec((setup.n_tx(), grid.n_cells()), rows.concat())
        .expect("row lengths match grid")
}

fn dist(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_setup(n: usize) -> Setup {
        Setup::ring(4e9, 0.15, n, 4, 4, 1.0).unwrap()
    }

    #[test]
    fn interior_operator_is_symmetric_with_constant_diagonal() {
        let s = small_setup(8);
        let g = assemble_greens(&s, &s.grid()).unwrap();
        let d = g.gd_dense();
        for m in 0..64 {
            assert_eq!(d[[m, m]], d[[0, 0]]);
            for k in 0..64 {
                assert_eq!(d[[m, k]], d[[k, m]]);
            }
        }
    }

    #[test]
    fn self_term_against_direct_disk_quadrature() {
        // k0² ∫_disk g dA with g = -(j/4) H0(k0 ρ) by midpoint radial
        // quadrature; ρ H0(k0 ρ) is integrable at the origin.
        let s = small_setup(8);
        let grid = s.grid();
        let g = assemble_greens(&s, &grid).unwrap();
        let (k0, a) = (s.k0(), grid.equivalent_radius);
        let steps = 20000;
        let mut acc = Complex64::new(0.0, 0.0);
        for k in 0..steps {
            let r = a * (k as f64 + 0.5) / steps as f64;
            let w = 2.0 * std::f64::consts::PI * r * a / steps as f64;
            acc += hankel2(0, k0 * r) * w;
        }
        let direct = k0 * k0 * (-0.25 * J) * acc;
        assert!((direct - g.gd_self()).norm() / g.gd_self().norm() < 1e-6);
    }

    #[test]
    fn off_diagonal_depends_only_on_distance() {
        let s = small_setup(6);
        let g = assemble_greens(&s, &s.grid()).unwrap();
        // (0,0)-(1,2) and (3,3)-(4,1) are both offset (1, 2).
        assert_eq!(g.gd(0, 6 + 2), g.gd(3 * 6 + 3, 4 * 6 + 1));
        // (0,0)-(2,1) is offset (2, 1): same distance, mirrored.
        let a = g.gd(0, 2 * 6 + 1);
        let b = g.gd(0, 6 + 2);
        assert!((a - b).norm() < 1e-15 * a.norm());
    }

    #[test]
    fn rejects_receivers_inside_doi() {
        let mut s = small_setup(4);
        s.rx_positions[0] = [0.01, 0.0];
        assert!(assemble_greens(&s, &s.grid()).is_err());
    }

    #[test]
    fn incident_field_radial_symmetry_and_decay() {
        let s = Setup::new(4e9, 0.15, 8, vec![[1.0, 0.0]], vec![[0.0, 1.0]]).unwrap();
        let g = s.grid();
        let e = incident_field(&s, &g, 0).unwrap();
        // Cells mirrored about the x axis are equidistant from a source on it.
        assert_eq!(e[0], e[7 * 8]);
        // Far-zone amplitude ~ 1/sqrt(r).
        let k0 = s.k0();
        let amp = |r: f64| (0.25 * hankel2(0, k0 * r)).norm();
        let ratio = amp(4.0) / amp(2.0);
        assert!((ratio - 0.5f64.sqrt()).abs() < 1e-3, "ratio {ratio}");
        let mut last = f64::INFINITY;
        for k in 0..200 {
            let v = amp(1.0 + 0.05 * k as f64);
            assert!(v < last);
            last = v;
        }
    }
}
