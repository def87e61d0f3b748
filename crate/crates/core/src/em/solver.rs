//! State-equation solves and scattered-field synthesis.

use ndarray::Array2;
use num_complex::Complex64;

use super::greens::{assemble_greens, incident_fields, GreensOperators};
use super::maps::{MeasurementSet, PermittivityMap, Provenance};
use super::setup::{Grid, Setup};
use crate::error::{Error, Result};
use crate::linalg::{norm2, LuFactor};
use crate::par;
use crate::subregion::BinaryMask;

/// Residual bound for a state solve, relative to ‖E_inc‖.
pub const STATE_RESIDUAL_TOL: f64 = 1e-10;

/// Factorised restricted state system (I − G_D[A,A] diag(χ_A)) for an active
/// cell set A. Shared read-only by every transmitter solve.
#[derive(Debug, Clone)]
pub struct StateSystem {
    active: Vec<usize>,
    contrast: Vec<Complex64>,
    lu: LuFactor,
}

impl StateSystem {
    /// Factors the system for contrast `chi` (full grid, row-major) restricted
    /// to the active cells of `mask`.
    pub fn new(greens: &GreensOperators, chi: &[Complex64], mask: &BinaryMask) -> Result<Self> {
        if mask.n_side() != greens.n_side() || chi.len() != greens.n_cells() {
            return Err(Error::Shape(format!(
                "mask {0}x{0} / contrast {1} cells do not match the {2}x{2} operators",
                mask.n_side(),
                chi.len(),
                greens.n_side()
            )));
        }
        let active = mask.active_indices();
        if active.is_empty() {
            return Err(Error::EmptyMask);
        }
        let contrast: Vec<Complex64> = active.iter().map(|&k| chi[k]).collect();
        let c = active.len();
        let mut a = greens.gd_block(&active, &active);
        for (r, row) in a.chunks_exact_mut(c).enumerate() {
            for (v, x) in row.iter_mut().zip(&contrast) {
                *v = -*v * x;
            }
            row[r] += 1.0;
        }
        // The identity part sets the natural scale of the system.
        let scale = a.iter().map(|v| v.norm()).fold(1.0, f64::max);
        let lu = LuFactor::factor_with_scale(a, c, scale)
            .map_err(|e| Error::DegenerateContrast { pivot: e.pivot, size: e.size })?;
        Ok(Self { active, contrast, lu })
    }

    pub fn active(&self) -> &[usize] {
        &self.active
    }

    /// χ on the active cells.
    pub fn contrast(&self) -> &[Complex64] {
        &self.contrast
    }

    /// Solves the restricted system for a right-hand side given on the active cells.
    pub fn solve(&self, rhs: &[Complex64]) -> Vec<Complex64> {
        self.lu.solve(rhs)
    }

    /// Total field on the active cells for a full-grid incident field.
    pub fn total_field(&self, e_inc: &[Complex64]) -> Vec<Complex64> {
        let rhs: Vec<Complex64> = self.active.iter().map(|&k| e_inc[k]).collect();
        self.solve(&rhs)
    }
}

/// Fields for every transmitter, each stored as a row (transmitters × cells).
#[derive(Debug, Clone, PartialEq)]
pub struct FieldSet {
    pub incident: Array2<Complex64>,
    pub total: Array2<Complex64>,
    /// Induced current J = χ E_tot (zero outside the mask).
    pub current: Array2<Complex64>,
}

impl FieldSet {
    /// Largest ‖E_tot − E_inc − G_D J‖ / ‖E_inc‖ over transmitters.
    pub fn state_residual(&self, greens: &GreensOperators) -> f64 {
        let cols: Vec<usize> = (0..greens.n_cells()).collect();
        (0..self.incident.nrows())
            .map(|t| {
                let j = self.current.row(t).to_vec();
                let gj = greens.gd_apply_from(&cols, &j);
                let r: Vec<Complex64> = (0..cols.len())
                    .map(|k| self.total[[t, k]] - self.incident[[t, k]] - gj[k])
                    .collect();
                norm2(&r) / norm2(&self.incident.row(t).to_vec())
            })
            .fold(0.0, f64::max)
    }
}

/// Solves (I − G_D diag(χ)) E_tot = E_inc on the active cells of `mask`, with
/// χ = ε_r − 1 treated as zero elsewhere. Off-mask totals follow from one
/// application of G_D to the active current.
pub fn solve_state(
    eps: &PermittivityMap,
    greens: &GreensOperators,
    incident: &Array2<Complex64>,
    mask: &BinaryMask,
) -> Result<FieldSet> {
    eps.check_n_side(greens.n_side())?;
    let n = greens.n_cells();
    if incident.ncols() != n {
        return Err(Error::Shape(format!("incident fields have {} cells, grid has {n}", incident.ncols())));
    }
    let system = StateSystem::new(greens, &eps.contrast(), mask)?;
    let active = system.active();
    let mut on_mask = vec![false; n];
    for &k in active {
        on_mask[k] = true;
    }

    let rows = par::map_indexed(incident.nrows(), |t| {
        let e_inc = incident.row(t).to_vec();
        let e_act = system.total_field(&e_inc);
        let j_act: Vec<Complex64> = e_act.iter().zip(system.contrast()).map(|(e, x)| e * x).collect();
        let mut total = e_inc.clone();
        let mut current = vec![Complex64::new(0.0, 0.0); n];
        for (k, &cell) in active.iter().enumerate() {
            total[cell] = e_act[k];
            current[cell] = j_act[k];
        }
        for (m, tot) in total.iter_mut().enumerate() {
            if !on_mask[m] {
                *tot += active.iter().zip(&j_act).map(|(&c, jv)| greens.gd(m, c) * jv).sum::<Complex64>();
            }
        }
        (total, current)
    });

    let t = incident.nrows();
    let (total, current): (Vec<_>, Vec<_>) = rows.into_iter().unzip();
    Ok(FieldSet {
        incident: incident.clone(),
        total: Array2::from_shape_vec((t, n), total.concat()).expect("shape"),
        current: Array2::from_shape_vec((t, n), current.concat()).expect("shape"),
    })
}

/// Samples G_S J per transmitter.
pub fn scattered_field(fields: &FieldSet, greens: &GreensOperators, fingerprint: String) -> MeasurementSet {
    let cols: Vec<usize> = (0..greens.n_cells()).collect();
    let n_tx = fields.current.nrows();
    let per_tx = par::map_indexed(n_tx, |t| {
        let j = fields.current.row(t);
        let nz: Vec<usize> = cols.iter().copied().filter(|&k| j[k] != Complex64::new(0.0, 0.0)).collect();
        let vals: Vec<Complex64> = nz.iter().map(|&k| j[k]).collect();
        greens.gs_apply_from(&nz, &vals)
    });
    let samples = Array2::from_shape_fn((greens.n_rx(), n_tx), |(r, t)| per_tx[t][r]);
    MeasurementSet {
        samples,
        fingerprint,
        provenance: Provenance::Synthetic,
    }
}

/// Greens operators plus incident fields for a fixed setup, reused across
/// many forward solves.
#[derive(Debug, Clone)]
pub struct ForwardModel {
    pub setup: Setup,
    pub grid: Grid,
    pub greens: GreensOperators,
    /// Transmitters × cells.
    pub incident: Array2<Complex64>,
}

impl ForwardModel {
    pub fn new(setup: &Setup) -> Result<Self> {
        let grid = setup.grid();
        let greens = assemble_greens(setup, &grid)?;
        let incident = incident_fields(setup, &grid);
        Ok(Self {
            setup: setup.clone(),
            grid,
            greens,
            incident,
        })
    }

    pub fn n_tx(&self) -> usize {
        self.incident.nrows()
    }

    pub fn solve_state(&self, eps: &PermittivityMap, mask: &BinaryMask) -> Result<FieldSet> {
        solve_state(eps, &self.greens, &self.incident, mask)
    }

    pub fn forward(&self, eps: &PermittivityMap, mask: &BinaryMask) -> Result<MeasurementSet> {
        let fields = self.solve_state(eps, mask)?;
        Ok(scattered_field(&fields, &self.greens, self.setup.geometry_fingerprint()))
    }

    /// Active-cell totals per transmitter and predicted samples (receivers ×
    /// transmitters) for an already factorised system.
    pub fn simulate(&self, system: &StateSystem) -> (Vec<Vec<Complex64>>, Array2<Complex64>) {
        let active = system.active();
        let per_tx = par::map_indexed(self.n_tx(), |t| {
            let e_inc: Vec<Complex64> = active.iter().map(|&k| self.incident[[t, k]]).collect();
            let e_act = system.solve(&e_inc);
            let j_act: Vec<Complex64> = e_act.iter().zip(system.contrast()).map(|(e, x)| e * x).collect();
            let pred = self.greens.gs_apply_from(active, &j_act);
            (e_act, pred)
        });
        let pred = Array2::from_shape_fn((self.greens.n_rx(), self.n_tx()), |(r, t)| per_tx[t].1[r]);
        (per_tx.into_iter().map(|(e, _)| e).collect(), pred)
    }
}

/// Composition of Green's assembly, state solve and data synthesis. The
/// restricted system is factorised once for all transmitters.
pub fn forward(eps: &PermittivityMap, setup: &Setup, grid: &Grid, mask: &BinaryMask) -> Result<MeasurementSet> {
    if grid.n_side != setup.n_side {
        return Err(Error::Shape("grid does not match setup".into()));
    }
    let greens = assemble_greens(setup, grid)?;
    let incident = incident_fields(setup, grid);
    let fields = solve_state(eps, &greens, &incident, mask)?;
    Ok(scattered_field(&fields, &greens, setup.geometry_fingerprint()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bessel::hankel2;

    fn setup(n: usize) -> Setup {
        Setup::ring(4e9, 0.15, n, 6, 5, 1.2).unwrap()
    }

    fn blob(n: usize) -> PermittivityMap {
        let mut eps = PermittivityMap::background(n);
        for i in 3..6 {
            for j in 2..6 {
                eps.values[[i, j]] = Complex64::new(1.8, -0.3);
            }
        }
        eps
    }

    #[test]
    fn zero_contrast_leaves_incident_field() {
        let s = setup(8);
        let model = ForwardModel::new(&s).unwrap();
        let f = model.solve_state(&PermittivityMap::background(8), &BinaryMask::full(8)).unwrap();
        assert_eq!(f.total, f.incident);
        let m = model.forward(&PermittivityMap::background(8), &BinaryMask::full(8)).unwrap();
        assert!(m.samples.iter().all(|z| *z == Complex64::new(0.0, 0.0)));
    }

    #[test]
    fn single_cell_closed_form() {
        let s = setup(8);
        let model = ForwardModel::new(&s).unwrap();
        let mut eps = PermittivityMap::background(8);
        eps.values[[2, 5]] = Complex64::new(3.0, -1.0);
        let mut bits = ndarray::Array2::from_elem((8, 8), false);
        bits[[2, 5]] = true;
        let f = model.solve_state(&eps, &BinaryMask::from_bits(bits)).unwrap();
        let k = 2 * 8 + 5;
        let chi = Complex64::new(2.0, -1.0);
        for t in 0..s.n_tx() {
            let want = f.incident[[t, k]] / (1.0 - model.greens.gd_self() * chi);
            assert!((f.total[[t, k]] - want).norm() < 1e-14 * want.norm());
        }
    }

    #[test]
    fn residual_and_mask_consistency() {
        let s = setup(10);
        let model = ForwardModel::new(&s).unwrap();
        let eps = blob(10);
        let full = model.solve_state(&eps, &BinaryMask::full(10)).unwrap();
        assert!(full.state_residual(&model.greens) < STATE_RESIDUAL_TOL);

        let support = BinaryMask::support_of(&eps);
        let part = model.solve_state(&eps, &support).unwrap();
        assert!(part.state_residual(&model.greens) < STATE_RESIDUAL_TOL);
        let scale = norm2(&full.total.iter().copied().collect::<Vec<_>>());
        let diff: Vec<Complex64> = full.total.iter().zip(part.total.iter()).map(|(a, b)| a - b).collect();
        assert!(norm2(&diff) / scale < 1e-10);

        let m_full = model.forward(&eps, &BinaryMask::full(10)).unwrap();
        let m_part = model.forward(&eps, &support).unwrap();
        let d: f64 = (&m_full.samples - &m_part.samples).iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        assert!(d / m_full.frobenius_norm() < 1e-9);
    }

    #[test]
    fn data_map_is_linear_with_basis_response() {
        let s = setup(6);
        let model = ForwardModel::new(&s).unwrap();
        let n = 36;
        let mk = |scale: Complex64, cell: usize| {
            let mut current = Array2::zeros((s.n_tx(), n));
            for t in 0..s.n_tx() {
                current[[t, cell]] = scale * (t as f64 + 1.0);
            }
            FieldSet {
                incident: Array2::zeros((s.n_tx(), n)),
                total: Array2::zeros((s.n_tx(), n)),
                current,
            }
        };
        let one = scattered_field(&mk(Complex64::new(1.0, 0.0), 7), &model.greens, String::new());
        for r in 0..s.n_rx() {
            assert_eq!(one.samples[[r, 0]], model.greens.gs()[[r, 7]]);
        }
        let alpha = Complex64::new(-0.7, 2.5);
        let scaled = scattered_field(&mk(alpha, 7), &model.greens, String::new());
        for (a, b) in scaled.samples.iter().zip(one.samples.iter()) {
            assert!((a - alpha * b).norm() < 1e-14 * a.norm().max(1e-30));
        }
        let zero = scattered_field(&mk(Complex64::new(0.0, 0.0), 7), &model.greens, String::new());
        assert!(zero.samples.iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn transmitter_permutation_permutes_columns() {
        let s = setup(8);
        let eps = blob(8);
        let mask = BinaryMask::support_of(&eps);
        let base = forward(&eps, &s, &s.grid(), &mask).unwrap();
        let order = [3, 0, 5, 1, 4, 2];
        let perm = s.select_tx(&order).unwrap();
        let m = forward(&eps, &perm, &perm.grid(), &mask).unwrap();
        for (c, &t) in order.iter().enumerate() {
            for r in 0..s.n_rx() {
                assert_eq!(m.samples[[r, c]], base.samples[[r, t]]);
            }
        }
    }

    #[test]
    fn reciprocity_on_coincident_ring_points() {
        let ring: Vec<[f64; 2]> = (0..5)
            .map(|k| {
                let a = 2.0 * std::f64::consts::PI * k as f64 / 5.0;
                [0.9 * a.cos(), 0.9 * a.sin()]
            })
            .collect();
        let s = Setup::new(4e9, 0.15, 8, ring.clone(), ring).unwrap();
        let eps = blob(8);
        let m = forward(&eps, &s, &s.grid(), &BinaryMask::full(8)).unwrap();
        for a in 0..5 {
            for b in 0..5 {
                let (x, y) = (m.samples[[a, b]], m.samples[[b, a]]);
                assert!((x - y).norm() < 1e-12 * x.norm(), "{a},{b}");
            }
        }
    }

    #[test]
    fn incident_field_is_unit_line_source() {
        let s = setup(4);
        let model = ForwardModel::new(&s).unwrap();
        let c = model.grid.cell_centers[5];
        let src = s.tx_positions[2];
        let r = (c[0] - src[0]).hypot(c[1] - src[1]);
        let want = Complex64::new(0.0, -0.25) * hankel2(0, s.k0() * r);
        assert_eq!(model.incident[[2, 5]], want);
    }

    #[test]
    fn empty_mask_is_rejected() {
        let s = setup(4);
        let model = ForwardModel::new(&s).unwrap();
        let err = model.solve_state(&PermittivityMap::background(4), &BinaryMask::empty(4)).unwrap_err();
        assert!(matches!(err, Error::EmptyMask));
    }

    #[test]
    fn singular_contrast_is_reported() {
        let s = setup(4);
        let model = ForwardModel::new(&s).unwrap();
        // Choose χ so that 1 − G_self χ = 0 for a single active cell.
        let chi = 1.0 / model.greens.gd_self();
        let mut eps = PermittivityMap::background(4);
        eps.values[[1, 1]] = 1.0 + chi;
        let mask = BinaryMask::support_of(&eps);
        let err = model.solve_state(&eps, &mask).unwrap_err();
        assert!(matches!(err, Error::DegenerateContrast { .. }), "{err:?}");
    }
}
