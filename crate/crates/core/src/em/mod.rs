//! Discretised 2-D TM forward scattering model.

mod backprop;
mod greens;
mod maps;
mod mie;
mod setup;
mod solver;

pub use backprop::{backpropagated_currents, bp_initializer, Backpropagation, FixedEstimate, Initializer};
pub use greens::{assemble_greens, incident_field, incident_fields, GreensOperators};
pub use maps::{MeasurementSet, PermittivityMap, Provenance};
pub use mie::{mie_cylinder_scattered, mie_series, TimeConvention, MAX_TERMS};
pub use setup::{Grid, Point, Setup, SETUP_VERSION, SPEED_OF_LIGHT};
pub use solver::{forward, scattered_field, solve_state, FieldSet, ForwardModel, StateSystem, STATE_RESIDUAL_TOL};
