//! Physical constants of the 40 keV rhodium-103 Mossbauer system and the
//! order-of-magnitude estimates derived from them.
//!
//! Everything is SI except photon and line energies, which are in eV.

use serde::{Deserialize, Serialize};

use crate::error::{require_non_negative, require_positive, Error, Result};

/// Reduced Planck constant, eV s (CODATA 2018, exact by definition of h and e).
pub const HBAR_EV_S: f64 = 6.582_119_569e-16;
/// Speed of light, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
/// hbar * c, eV m.
pub const HBAR_C_EV_M: f64 = HBAR_EV_S * SPEED_OF_LIGHT;

/// Mean lifetime of the 103mRh Mossbauer level, s.
pub const RH_TAU0_S: f64 = 4857.0;
/// Nominal gamma energy used throughout the model, eV.
pub const RH_GAMMA_ENERGY_EV: f64 = 40_000.0;
/// Tabulated 103mRh transition energy, eV. Alternative to the nominal value.
pub const RH_GAMMA_ENERGY_TABULATED_EV: f64 = 39_753.0;
/// Non-Borrmann photo-electric penetration depth at 40 keV, m.
pub const RH_DEPTH_PHOTOELECTRIC_M: f64 = 50e-6;
/// Non-Borrmann nuclear-scattering penetration depth, m.
pub const RH_DEPTH_NUCLEAR_M: f64 = 22e-6;
/// Linear thermal expansion coefficient at room temperature, 1/K.
pub const RH_EXPANSION_COEFF: f64 = 8.5e-6;
/// Specific heat at room temperature, J/(K kg).
pub const RH_SPECIFIC_HEAT: f64 = 244.0;
/// Density, kg/m^3 (12.4 g/cm^3).
pub const RH_DENSITY: f64 = 12_400.0;
/// fcc lattice constant of rhodium at room temperature, m.
///
/// External crystallographic data; the rest of this module does not depend on it.
pub const RH_LATTICE_CONSTANT_M: f64 = 3.8034e-10;

/// Parameters of the rhodium sample and its Mossbauer transition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RhodiumParams {
    pub tau0: f64,
    pub gamma_energy: f64,
    pub depth_photoelectric: f64,
    pub depth_nuclear: f64,
    pub expansion_coeff: f64,
    pub specific_heat: f64,
    pub density: f64,
    pub lattice_constant: f64,
    pub sample_dims: [f64; 3],
    pub stored_energy: f64,
}

impl Default for RhodiumParams {
    /// 2.5 cm x 2.5 cm x 1 mm rhodium plate holding 1 mJ in the Mossbauer state.
    fn default() -> Self {
        Self {
            tau0: RH_TAU0_S,
            gamma_energy: RH_GAMMA_ENERGY_EV,
            depth_photoelectric: RH_DEPTH_PHOTOELECTRIC_M,
            depth_nuclear: RH_DEPTH_NUCLEAR_M,
            expansion_coeff: RH_EXPANSION_COEFF,
            specific_heat: RH_SPECIFIC_HEAT,
            density: RH_DENSITY,
            lattice_constant: RH_LATTICE_CONSTANT_M,
            sample_dims: [0.025, 0.025, 0.001],
            stored_energy: 1e-3,
        }
    }
}

impl RhodiumParams {
    pub fn validate(&self) -> Result<()> {
        require_positive("tau0", self.tau0)?;
        require_positive("gamma_energy", self.gamma_energy)?;
        require_positive("depth_photoelectric", self.depth_photoelectric)?;
        require_positive("depth_nuclear", self.depth_nuclear)?;
        require_positive("expansion_coeff", self.expansion_coeff)?;
        require_positive("specific_heat", self.specific_heat)?;
        require_positive("density", self.density)?;
        require_positive("lattice_constant", self.lattice_constant)?;
        for (i, d) in self.sample_dims.iter().enumerate() {
            require_positive(&format!("sample_dims[{i}]"), *d)?;
        }
        require_positive("stored_energy", self.stored_energy)
    }

    pub fn sample_volume(&self) -> f64 {
        self.sample_dims.iter().product()
    }

    pub fn sample_mass(&self) -> f64 {
        self.density * self.sample_volume()
    }

    /// Resonant extinction coefficient used when none is given: the inverse
    /// nuclear-scattering depth.
    pub fn default_mu_nuclear(&self) -> f64 {
        1.0 / self.depth_nuclear
    }
}

/// Natural linewidth Gamma = hbar / tau0 in eV.
///
/// `tau0 = +inf` is accepted and gives zero width.
pub fn natural_linewidth(tau0: f64) -> Result<f64> {
    if tau0.is_nan() || tau0 <= 0.0 {
        return Err(Error::domain(format!("tau0 must be > 0, got {tau0}")));
    }
    Ok(HBAR_EV_S / tau0)
}

/// First-order Doppler speed that shifts the line by one natural linewidth, m/s.
pub fn doppler_speed_per_linewidth(params: &RhodiumParams) -> Result<f64> {
    params.validate()?;
    let width = natural_linewidth(params.tau0)?;
    Ok(SPEED_OF_LIGHT * width / params.gamma_energy)
}

/// Initial thermal strain rate of the sample heated by the decaying stored energy, 1/s.
///
/// The stored energy is released with time constant tau0, so the initial
/// heating power is `stored_energy / tau0`.
pub fn thermal_strain_rate(params: &RhodiumParams) -> Result<f64> {
    require_positive("tau0", params.tau0)?;
    require_non_negative("stored_energy", params.stored_energy)?;
    require_positive("expansion_coeff", params.expansion_coeff)?;
    require_positive("specific_heat", params.specific_heat)?;
    require_positive("density", params.density)?;
    let volume = params.sample_volume();
    if !(volume.is_finite() && volume > 0.0) {
        return Err(Error::domain(format!(
            "sample volume must be > 0, got {volume} m^3"
        )));
    }
    let power = params.stored_energy / params.tau0;
    let heating_rate = power / (params.sample_mass() * params.specific_heat);
    Ok(params.expansion_coeff * heating_rate)
}

/// Photon wavenumber k = E / (hbar c) in 1/m for an energy in eV.
pub fn photon_wavenumber(gamma_energy: f64) -> Result<f64> {
    require_positive("gamma_energy", gamma_energy)?;
    Ok(gamma_energy / HBAR_C_EV_M)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn linewidth_of_rhodium() {
        let width = natural_linewidth(RH_TAU0_S).unwrap();
        assert_relative_eq!(width, 1.355_18e-19, max_relative = 1e-5);
        assert_eq!(natural_linewidth(f64::INFINITY).unwrap(), 0.0);
        assert_relative_eq!(
            natural_linewidth(2.0 * RH_TAU0_S).unwrap(),
            width / 2.0,
            max_relative = 1e-15
        );
        assert!(natural_linewidth(0.0).is_err());
        assert!(natural_linewidth(-1.0).is_err());
        assert!(natural_linewidth(f64::NAN).is_err());
    }

    #[test]
    fn linewidth_round_trip() {
        let width = natural_linewidth(RH_TAU0_S).unwrap();
        assert_relative_eq!(width * RH_TAU0_S, HBAR_EV_S, max_relative = 1e-15);
    }

    #[test]
    fn doppler_speed_is_a_femtometre_per_second() {
        let v = doppler_speed_per_linewidth(&RhodiumParams::default()).unwrap();
        assert!((v - 1e-15).abs() / 1e-15 < 0.2, "v = {v}");
        let mut huge = RhodiumParams::default();
        huge.gamma_energy = 1e30;
        assert!(doppler_speed_per_linewidth(&huge).unwrap() < 1e-40);
        let mut short = RhodiumParams::default();
        short.tau0 /= 3.0;
        assert_relative_eq!(
            doppler_speed_per_linewidth(&short).unwrap(),
            3.0 * v,
            max_relative = 1e-14
        );
    }

    #[test]
    fn strain_rate_from_table_values() {
        let p = RhodiumParams::default();
        let rate = thermal_strain_rate(&p).unwrap();
        // 8.5e-6 * (1e-3 / 4857) / (12400 * 6.25e-7 * 244)
        let expected = 8.5e-6 * (1e-3 / 4857.0) / (12_400.0 * 6.25e-7 * 244.0);
        assert_relative_eq!(rate, expected, max_relative = 1e-12);
        assert_relative_eq!(rate, 9.25e-13, max_relative = 1e-2);

        let mut none = p;
        none.stored_energy = 0.0;
        assert_eq!(thermal_strain_rate(&none).unwrap(), 0.0);

        let mut flat = p;
        flat.sample_dims[2] = 0.0;
        assert!(matches!(thermal_strain_rate(&flat), Err(Error::Domain(_))));
    }

    #[test]
    fn strain_rate_homogeneity() {
        let p = RhodiumParams::default();
        let base = thermal_strain_rate(&p).unwrap();
        let mut more = p;
        more.stored_energy *= 7.0;
        assert_relative_eq!(thermal_strain_rate(&more).unwrap(), 7.0 * base, max_relative = 1e-14);
        let mut heavier = p;
        heavier.density *= 4.0;
        assert_relative_eq!(thermal_strain_rate(&heavier).unwrap(), base / 4.0, max_relative = 1e-14);
        let mut bigger = p;
        bigger.sample_dims[0] *= 2.0;
        assert_relative_eq!(thermal_strain_rate(&bigger).unwrap(), base / 2.0, max_relative = 1e-14);
    }

    #[test]
    fn wavenumber_at_40_kev() {
        let k = photon_wavenumber(40e3).unwrap();
        // hbar c = 1973.27 eV angstrom
        assert_relative_eq!(k, 40e3 / 1973.27e-10, max_relative = 1e-6);
        assert_relative_eq!(k * 1e-10, 20.27, max_relative = 1e-3);
        assert_relative_eq!(photon_wavenumber(80e3).unwrap(), 2.0 * k, max_relative = 1e-15);
        assert_relative_eq!(photon_wavenumber(HBAR_C_EV_M).unwrap(), 1.0, max_relative = 1e-15);
        assert!(photon_wavenumber(0.0).is_err());
    }

    #[test]
    fn defaults_are_valid() {
        let p = RhodiumParams::default();
        p.validate().unwrap();
        assert!(p.depth_nuclear < p.depth_photoelectric);
        let mut bad = p;
        bad.density = -1.0;
        assert!(bad.validate().is_err());
    }
}
