//! Backpropagation (adjoint imaging) initial estimate.

use num_complex::Complex64;

use super::greens::{incident_fields, GreensOperators};
use super::maps::{MeasurementSet, PermittivityMap};
use super::setup::Setup;
use crate::error::{Error, Result};
use crate::par;

/// Produces an initial permittivity estimate from measurements alone.
/// Implementations can be swapped, e.g. for a learned initializer.
pub trait Initializer {
    fn initial_estimate(&self, meas: &MeasurementSet, setup: &Setup, greens: &GreensOperators) -> Result<PermittivityMap>;
}

/// The backpropagation initializer, see [`bp_initializer`].
#[derive(Debug, Clone, Copy, Default)]
pub struct Backpropagation;

impl Initializer for Backpropagation {
    fn initial_estimate(&self, meas: &MeasurementSet, setup: &Setup, greens: &GreensOperators) -> Result<PermittivityMap> {
        bp_initializer(meas, setup, greens)
    }
}

/// A fixed, externally supplied estimate (e.g. from another solver).
#[derive(Debug, Clone)]
pub struct FixedEstimate(pub PermittivityMap);

impl Initializer for FixedEstimate {
    fn initial_estimate(&self, _meas: &MeasurementSet, setup: &Setup, _greens: &GreensOperators) -> Result<PermittivityMap> {
        self.0.check_n_side(setup.n_side)?;
        Ok(self.0.clone())
    }
}

/// Backpropagated currents J = γ G_Sᴴ E_sca, one row per transmitter, with γ
/// the least-squares scale that best maps G_S G_Sᴴ E_sca back onto E_sca.
pub fn backpropagated_currents(meas: &MeasurementSet, greens: &GreensOperators) -> Vec<Vec<Complex64>> {
    let gs = greens.gs();
    let (n_rx, n) = gs.dim();
    par::map_indexed(meas.n_tx(), |t| {
        let e = meas.column(t);
        let back: Vec<Complex64> = (0..n)
            .map(|k| (0..n_rx).map(|r| gs[[r, k]].conj() * e[r]).sum())
            .collect();
        let forward: Vec<Complex64> = (0..n_rx)
            .map(|r| (0..n).map(|k| gs[[r, k]] * back[k]).sum())
            .collect();
        let num: Complex64 = forward.iter().zip(&e).map(|(f, v)| f.conj() * v).sum();
        let den: f64 = forward.iter().map(|f| f.norm_sqr()).sum();
        let gamma = if den > 0.0 { num / den } else { Complex64::new(0.0, 0.0) };
        back.into_iter().map(|b| gamma * b).collect()
    })
}

/// Initial estimate ε̂⁽⁰⁾: backpropagated currents, total fields
/// E_inc + G_D J, then a per-cell least-squares contrast over transmitters,
/// clipped to Re ε ≥ 1 and Im ε ≤ 0.
pub fn bp_initializer(meas: &MeasurementSet, setup: &Setup, greens: &GreensOperators) -> Result<PermittivityMap> {
    if meas.samples.dim() != (setup.n_rx(), setup.n_tx()) || greens.n_rx() != setup.n_rx() {
        return Err(Error::Shape(format!(
            "measurements {:?} do not match {} receivers x {} transmitters",
            meas.samples.dim(),
            setup.n_rx(),
            setup.n_tx()
        )));
    }
    if greens.n_side() != setup.n_side {
        return Err(Error::Shape("greens operators do not match the setup grid".into()));
    }
    let n = setup.n_cells();
    if meas.frobenius_norm() == 0.0 {
        log::warn!("measurements carry no energy; initial estimate is the background");
        return Ok(PermittivityMap::background(setup.n_side));
    }

    let currents = backpropagated_currents(meas, greens);
    let incident = incident_fields(setup, &setup.grid());
    let cols: Vec<usize> = (0..n).collect();
    let totals = par::map_indexed(currents.len(), |t| {
        let scattered = greens.gd_apply_from(&cols, &currents[t]);
        scattered
            .into_iter()
            .zip(incident.row(t))
            .map(|(s, i)| s + i)
            .collect::<Vec<_>>()
    });

    let values = (0..n)
        .map(|k| {
            let mut num = Complex64::new(0.0, 0.0);
            let mut den = 0.0;
            for (j, e) in currents.iter().zip(&totals) {
                num += j[k] * e[k].conj();
                den += e[k].norm_sqr();
            }
            let chi = if den > 0.0 { num / den } else { Complex64::new(0.0, 0.0) };
            let eps = 1.0 + chi;
            Complex64::new(eps.re.max(1.0), eps.im.min(0.0))
        })
        .collect();
    PermittivityMap::from_flat(setup.n_side, values)
}
