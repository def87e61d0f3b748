//! Physics loss (data misfit, lower bound, total variation), its exact
//! gradient with respect to the network parameters, and the Adam optimiser.
//!
//! The data-term gradient uses the adjoint of the restricted state system.
//! Because G_D is symmetric the transposed system is the state system
//! itself, so the adjoint fields reuse the forward LU factors.

mod adam;
mod losses;

use num_complex::Complex64;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use losses::{
    bound_gradient, bound_loss, channel_tv, channel_tv_gradient, data_loss, total_loss, tv_gradient, tv_loss,
    LossBreakdown, LossWeights, MapGradient, TV_SMOOTHING,
};

use crate::em::{ForwardModel, MeasurementSet, PermittivityMap, Provenance, StateSystem};
use crate::error::{Error, Result};
use crate::net::{forward_detailed, from_channels, Activation, Activations, NetworkParams, IMAG_SIGN};
use crate::par;
use crate::subregion::BinaryMask;

/// Residual norm below which the data term is treated as exactly fitted.
pub const ZERO_RESIDUAL: f64 = 1e-14;

/// The map the forward model sees: `raw` on active cells, background elsewhere.
pub fn effective_map(raw: &PermittivityMap, mask: &BinaryMask) -> Result<PermittivityMap> {
    raw.check_n_side(mask.n_side())?;
    let mut out = PermittivityMap::background(raw.n_side());
    for k in mask.active_indices() {
        let idx = [k / raw.n_side(), k % raw.n_side()];
        out.values[idx] = raw.values[idx];
    }
    Ok(out)
}

/// Data term of `eps` (contrast taken on the active cells of `mask`), its
/// gradient with respect to the map and the predicted samples.
pub fn data_term(
    eps: &PermittivityMap,
    model: &ForwardModel,
    mask: &BinaryMask,
    meas: &MeasurementSet,
    with_gradient: bool,
) -> Result<(f64, Option<MapGradient>, MeasurementSet)> {
    eps.check_n_side(model.setup.n_side)?;
    let chi = eps.contrast();
    let system = StateSystem::new(&model.greens, &chi, mask)?;
    let (fields, samples) = model.simulate(&system);
    let pred = MeasurementSet {
        samples,
        fingerprint: model.setup.geometry_fingerprint(),
        provenance: Provenance::Synthetic,
    };
    let loss = data_loss(&pred, meas)?;
    if !with_gradient {
        return Ok((loss, None, pred));
    }

    let mut grad = MapGradient::zeros(eps.n_cells());
    if loss < ZERO_RESIDUAL {
        return Ok((loss, Some(grad), pred));
    }
    let gs = model.greens.gs();
    let active = system.active();
    let n_rx = gs.nrows();
    let per_tx = par::map_indexed(fields.len(), |t| {
        let w: Vec<Complex64> = (0..n_rx)
            .map(|r| ((pred.samples[[r, t]] - meas.samples[[r, t]]) / loss).conj())
            .collect();
        let rhs: Vec<Complex64> = active
            .iter()
            .map(|&k| (0..n_rx).map(|r| gs[[r, k]] * w[r]).sum())
            .collect();
        let adjoint = system.solve(&rhs);
        adjoint.iter().zip(&fields[t]).map(|(mu, e)| mu * e).collect::<Vec<_>>()
    });
    let mut g = vec![Complex64::new(0.0, 0.0); active.len()];
    for contrib in &per_tx {
        for (acc, c) in g.iter_mut().zip(contrib) {
            *acc += c;
        }
    }
    // dL = Re(g · dχ) with dχ = d(Re ε) + j d(Im ε).
    for (&k, gk) in active.iter().zip(&g) {
        grad.re[k] = gk.re;
        grad.im[k] = -gk.im;
    }
    Ok((loss, Some(grad), pred))
}

/// Chains a gradient with respect to the output map back to the parameters.
pub fn backprop_map_gradient(
    params: &NetworkParams,
    acts: &Activations,
    activation: Activation,
    map_grad: &MapGradient,
) -> NetworkParams {
    let d = params.width();
    let n = d / 2;
    let glow = params.glow;
    let (c, sigma) = (glow.c(), glow.sigma());
    let mut grad = NetworkParams::zeros(params.n_side);

    let mut delta = vec![0.0; d];
    let (mut dc, mut ds) = (0.0, 0.0);
    for (i, slot) in delta.iter_mut().enumerate() {
        let dout = if i < n { map_grad.re[i] } else { IMAG_SIGN * map_grad.im[i - n] };
        let z = acts.pre[i];
        *slot = dout * activation.derivative(z, &glow);
        if activation == Activation::Glow && dout != 0.0 {
            let (pc, ps) = crate::net::glow_param_grads(z, &glow);
            dc += dout * pc;
            ds += dout * ps;
        }
    }
    grad.glow.log_c = dc * c;
    grad.glow.log_sigma = ds * sigma;
    grad.bias.copy_from_slice(&delta);
    let x = &acts.input;
    par::for_each_chunk_mut(&mut grad.weight, d, |i, row| {
        let di = delta[i];
        if di == 0.0 {
            return;
        }
        for (w, &xj) in row.iter_mut().zip(x) {
            *w = di * xj;
        }
    });
    grad
}

/// Everything computed in one loss evaluation.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub breakdown: LossBreakdown,
    /// Network output over the whole grid.
    pub raw: PermittivityMap,
    /// Network output on the mask, background elsewhere.
    pub effective: PermittivityMap,
    pub pred: MeasurementSet,
    pub gradient: Option<NetworkParams>,
}

/// The training loss for one fixed input map and measurement set.
///
/// The data term runs on the effective map; the bound and TV terms see the
/// raw output everywhere, so regularisation also acts on inactive cells.
#[derive(Debug, Clone, Copy)]
pub struct Objective<'a> {
    pub model: &'a ForwardModel,
    pub input: &'a PermittivityMap,
    pub meas: &'a MeasurementSet,
    pub weights: LossWeights,
    pub activation: Activation,
}

impl<'a> Objective<'a> {
    pub fn new(
        model: &'a ForwardModel,
        input: &'a PermittivityMap,
        meas: &'a MeasurementSet,
        weights: LossWeights,
        activation: Activation,
    ) -> Result<Self> {
        weights.validate()?;
        input.check_n_side(model.setup.n_side)?;
        if meas.samples.dim() != (model.setup.n_rx(), model.setup.n_tx()) {
            return Err(Error::Shape(format!(
                "measurements {:?} do not match {} receivers x {} transmitters",
                meas.samples.dim(),
                model.setup.n_rx(),
                model.setup.n_tx()
            )));
        }
        Ok(Self {
            model,
            input,
            meas,
            weights,
            activation,
        })
    }

    pub fn evaluate(&self, params: &NetworkParams, mask: &BinaryMask, with_gradient: bool) -> Result<Evaluation> {
        let acts = forward_detailed(params, self.activation, self.input)?;
        let raw = from_channels(params.n_side, &acts.out)?;
        let effective = effective_map(&raw, mask)?;
        let (data, data_grad, pred) = data_term(&effective, self.model, mask, self.meas, with_gradient)?;
        let breakdown = LossBreakdown::compose(data, bound_loss(&raw), tv_loss(&raw), &self.weights);
        let gradient = data_grad.map(|mut g| {
            if self.weights.alpha != 0.0 {
                g.add_scaled(&bound_gradient(&raw), self.weights.alpha);
            }
            if self.weights.beta != 0.0 {
                g.add_scaled(&tv_gradient(&raw), self.weights.beta);
            }
            backprop_map_gradient(params, &acts, self.activation, &g)
        });
        Ok(Evaluation {
            breakdown,
            raw,
            effective,
            pred,
            gradient,
        })
    }

    pub fn loss(&self, params: &NetworkParams, mask: &BinaryMask) -> Result<LossBreakdown> {
        Ok(self.evaluate(params, mask, false)?.breakdown)
    }

    pub fn loss_gradient(&self, params: &NetworkParams, mask: &BinaryMask) -> Result<(LossBreakdown, NetworkParams)> {
        let e = self.evaluate(params, mask, true)?;
        Ok((e.breakdown, e.gradient.expect("gradient requested")))
    }
}
