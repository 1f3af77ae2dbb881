//! Modelling toolkit for resonant propagation of the entangled 40 keV rhodium
//! Mossbauer gammas.
//!
//! * [`constants`]: rhodium parameters and scalar estimates.
//! * [`lattice`]: tri-gamma cone geometry and the fcc Bragg condition.
//! * [`fields`]: the tri-gamma field, its cancellation on lattice sites, and boosts.
//! * [`lamb_moessbauer`]: entangled Lamb-Mossbauer factor, Monte Carlo and closed form.
//! * [`beat`]: dynamic-beat count-rate model and its pump-accumulated intensity.
//! * [`special`] and [`quadrature`]: Bessel J0 and adaptive Gauss-Kronrod integration.
//! * [`spectra`]: synthetic gamma / K-alpha count series and normalisation.
//! * [`fitting`]: recovery of beat parameters from binned counts.
//! * [`io`] and [`config`]: CSV series, JSON configuration and fit results.

pub mod beat;
pub mod config;
pub mod constants;
pub mod error;
pub mod fields;
pub mod fitting;
pub mod io;
pub mod lamb_moessbauer;
pub mod lattice;
pub mod quadrature;
pub mod spectra;
pub mod special;

pub use error::{Error, Result};
