//! Unit conventions and resonator constants.
//!
//! Every rate and detuning inside the crate is an angular frequency in
//! rad/µs and every time is in µs. Configuration and CSV output use ordinary
//! frequencies ν = ω/2π in MHz or kHz; the constructors on
//! [`AngularFrequency`] are the only place the factor 2π enters.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
/// Reduced Planck constant, J·s.
pub const HBAR: f64 = 1.054_571_817e-34;
/// Vacuum permittivity, F/m.
pub const EPSILON_0: f64 = 8.854_187_812_8e-12;

/// Reduced dipole matrix element ⟨J=1/2‖er‖J'=3/2⟩ of the ⁸⁷Rb D2 line, C·m.
pub const RB87_D2_REDUCED_DIPOLE: f64 = 3.584_24e-29;
/// ⁸⁷Rb D2 vacuum wavelength, m.
pub const RB87_D2_WAVELENGTH: f64 = 780.241_209_686e-9;

/// Dipole moment of the σ⁻ transition |F=2, m=+2⟩ → |F'=2, m'=+1⟩ on the D2
/// line. Its relative strength is 1/12 of the reduced matrix element squared.
pub fn rb87_sigma_minus_dipole() -> f64 {
    RB87_D2_REDUCED_DIPOLE / 12f64.sqrt()
}

/// Angular frequency in rad/µs.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AngularFrequency(pub f64);

impl AngularFrequency {
    pub const ZERO: AngularFrequency = AngularFrequency(0.0);

    pub const fn from_rad_per_us(value: f64) -> Self {
        AngularFrequency(value)
    }

    /// From an ordinary frequency ν in MHz (ω = 2πν).
    pub fn from_mhz(nu: f64) -> Self {
        AngularFrequency(TAU * nu)
    }

    /// From an ordinary frequency ν in kHz.
    pub fn from_khz(nu: f64) -> Self {
        AngularFrequency(TAU * nu * 1e-3)
    }

    pub fn from_rad_per_s(value: f64) -> Self {
        AngularFrequency(value * 1e-6)
    }

    pub const fn rad_per_us(self) -> f64 {
        self.0
    }

    pub fn rad_per_s(self) -> f64 {
        self.0 * 1e6
    }

    /// Ordinary frequency ν = ω/2π in MHz.
    pub fn mhz(self) -> f64 {
        self.0 / TAU
    }

    pub fn khz(self) -> f64 {
        self.0 / TAU * 1e3
    }

    pub fn abs(self) -> Self {
        AngularFrequency(self.0.abs())
    }

    pub fn sqrt_scaled(self, factor: f64) -> Self {
        AngularFrequency(self.0 * factor.sqrt())
    }
}

impl fmt::Display for AngularFrequency {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "2π·{} MHz", self.mhz())
    }
}

impl Add for AngularFrequency {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        AngularFrequency(self.0 + rhs.0)
    }
}

impl Sub for AngularFrequency {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        AngularFrequency(self.0 - rhs.0)
    }
}

impl Neg for AngularFrequency {
    type Output = Self;
    fn neg(self) -> Self {
        AngularFrequency(-self.0)
    }
}

impl Mul<f64> for AngularFrequency {
    type Output = Self;
    fn mul(self, rhs: f64) -> Self {
        AngularFrequency(self.0 * rhs)
    }
}

impl Div<f64> for AngularFrequency {
    type Output = Self;
    fn div(self, rhs: f64) -> Self {
        AngularFrequency(self.0 / rhs)
    }
}

impl Div for AngularFrequency {
    type Output = f64;
    fn div(self, rhs: Self) -> f64 {
        self.0 / rhs.0
    }
}

/// Raw resonator and atomic inputs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CavityGeometry {
    /// Power reflectivity of the in/out-coupling mirror.
    pub mirror_reflectivity: f64,
    /// Round-trip intracavity power loss, excluding the coupler.
    pub round_trip_loss: f64,
    /// Round-trip length, m.
    pub length_m: f64,
    /// TEM00 waist, m.
    pub waist_m: f64,
    pub wavelength_m: f64,
    /// Transition dipole matrix element, C·m.
    pub dipole_moment_cm: f64,
}

impl CavityGeometry {
    /// The 88 cm ring resonator with a 86 % coupler and 11 % round-trip loss,
    /// coupled to the ⁸⁷Rb D2 σ⁻ transition.
    pub fn reference() -> Self {
        CavityGeometry {
            mirror_reflectivity: 0.86,
            round_trip_loss: 0.11,
            length_m: 0.88,
            waist_m: 69e-6,
            wavelength_m: RB87_D2_WAVELENGTH,
            dipole_moment_cm: rb87_sigma_minus_dipole(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let r = self.mirror_reflectivity;
        let l = self.round_trip_loss;
        if !(r > 0.0 && r < 1.0) {
            return Err(Error::InvalidGeometry(format!(
                "mirror reflectivity {r} outside (0, 1)"
            )));
        }
        if !(0.0..1.0).contains(&l) {
            return Err(Error::InvalidGeometry(format!("round-trip loss {l} outside [0, 1)")));
        }
        let survival = r * (1.0 - l);
        if !(survival > 0.0 && survival < 1.0) {
            return Err(Error::InvalidGeometry(format!(
                "round-trip survival R(1-L) = {survival} outside (0, 1)"
            )));
        }
        for (name, v) in [
            ("length", self.length_m),
            ("waist", self.waist_m),
            ("wavelength", self.wavelength_m),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidGeometry(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.dipole_moment_cm > 0.0 && self.dipole_moment_cm.is_finite()) {
            return Err(Error::InvalidGeometry(format!(
                "dipole moment must be positive, got {}",
                self.dipole_moment_cm
            )));
        }
        Ok(())
    }
}

/// Resonator constants derived from a [`CavityGeometry`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CavityDerived {
    pub finesse: f64,
    /// Free spectral range, Hz.
    pub fsr_hz: f64,
    /// Total cavity field decay rate κ.
    pub kappa: AngularFrequency,
    /// Field decay through the coupler κ₀.
    pub kappa0: AngularFrequency,
    pub escape_efficiency: f64,
    pub g0: AngularFrequency,
}

impl CavityDerived {
    pub fn kappa_ratio(&self) -> f64 {
        self.kappa / self.kappa0
    }
}

pub fn derive_cavity(geom: &CavityGeometry) -> Result<CavityDerived> {
    geom.validate()?;
    let r = geom.mirror_reflectivity;
    let l = geom.round_trip_loss;
    let survival = r * (1.0 - l);
    let finesse = PI * survival.powf(0.25) / (1.0 - survival.sqrt());
    let fsr_hz = SPEED_OF_LIGHT / geom.length_m;
    // κ = πΔν/F is already an angular rate (HWHM of the Airy peak).
    let kappa = AngularFrequency::from_rad_per_s(PI * fsr_hz / finesse);
    // Coupler amplitude loss per round trip over the round-trip time.
    let kappa0 = AngularFrequency::from_rad_per_s((1.0 - r) * fsr_hz / 2.0);
    let escape_efficiency = (1.0 - r) / (1.0 - r + l);
    Ok(CavityDerived {
        finesse,
        fsr_hz,
        kappa,
        kappa0,
        escape_efficiency,
        g0: coupling_g0(geom)?,
    })
}

/// Single-atom coupling g₀ = |d| √(2c / (ħ ε₀ λ l w₀²)).
pub fn coupling_g0(geom: &CavityGeometry) -> Result<AngularFrequency> {
    geom.validate()?;
    let denom = HBAR * EPSILON_0 * geom.wavelength_m * geom.length_m * geom.waist_m.powi(2);
    let g0 = geom.dipole_moment_cm.abs() * (2.0 * SPEED_OF_LIGHT / denom).sqrt();
    Ok(AngularFrequency::from_rad_per_s(g0))
}

/// Collective coupling g = g₀√N.
pub fn collective_coupling(g0: AngularFrequency, atom_number: f64) -> AngularFrequency {
    g0.sqrt_scaled(atom_number.max(0.0))
}

/// Inverse of [`collective_coupling`].
pub fn atom_number_for(g: AngularFrequency, g0: AngularFrequency) -> f64 {
    (g / g0).powi(2)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn reference_cavity_constants() {
        let d = derive_cavity(&CavityGeometry::reference()).unwrap();
        assert!(rel(d.finesse, 23.5) < 5e-3, "F = {}", d.finesse);
        assert!(rel(d.fsr_hz, 340e6) < 5e-3, "fsr = {}", d.fsr_hz);
        assert!(rel(d.kappa.mhz(), 7.25) < 5e-3, "kappa = {}", d.kappa.mhz());
        assert!((d.escape_efficiency - 0.56).abs() < 1e-12);
        assert!((d.kappa_ratio() - 1.91).abs() < 0.02, "ratio {}", d.kappa_ratio());
        assert!(d.kappa > d.kappa0 && d.kappa0.0 > 0.0);
    }

    #[test]
    fn lossless_cavity_escapes_everything() {
        let mut g = CavityGeometry::reference();
        g.round_trip_loss = 0.0;
        let d = derive_cavity(&g).unwrap();
        assert_eq!(d.escape_efficiency, 1.0);
    }

    #[test]
    fn g0_matches_reference_and_scales_with_length() {
        let geom = CavityGeometry::reference();
        let g0 = coupling_g0(&geom).unwrap();
        assert!(rel(g0.khz(), 23.0) < 0.01, "g0 = {} kHz", g0.khz());

        let mut longer = geom;
        longer.length_m *= 4.0;
        let g0_long = coupling_g0(&longer).unwrap();
        assert!(rel(g0_long.0, g0.0 / 2.0) < 1e-12);
    }

    #[test]
    fn collective_coupling_product() {
        let g = collective_coupling(AngularFrequency::from_khz(23.0), 4e5);
        assert!(rel(g.mhz(), 14.546) < 1e-3, "g = {}", g.mhz());
        assert!(rel(atom_number_for(g, AngularFrequency::from_khz(23.0)), 4e5) < 1e-12);
    }

    #[test]
    fn rejects_bad_geometry() {
        let base = CavityGeometry::reference();
        for bad in [
            CavityGeometry {
                mirror_reflectivity: 1.0,
                ..base
            },
            CavityGeometry {
                mirror_reflectivity: 0.0,
                ..base
            },
            CavityGeometry {
                round_trip_loss: 1.0,
                ..base
            },
            CavityGeometry {
                round_trip_loss: -0.1,
                ..base
            },
            CavityGeometry { length_m: 0.0, ..base },
            CavityGeometry { waist_m: -1.0, ..base },
            CavityGeometry {
                wavelength_m: 0.0,
                ..base
            },
            CavityGeometry {
                dipole_moment_cm: 0.0,
                ..base
            },
        ] {
            assert!(matches!(derive_cavity(&bad), Err(Error::InvalidGeometry(_))), "{bad:?}");
        }
    }

    #[test]
    fn mhz_round_trip() {
        for nu in [-60.0, -1.5, 0.0, 6.7e-3, 15.8, 340.0] {
            let back = AngularFrequency::from_mhz(nu).mhz();
            assert!((back - nu).abs() <= 1e-12 * nu.abs().max(1e-300));
        }
        assert!(rel(AngularFrequency::from_khz(23.0).mhz(), 0.023) < 1e-12);
        assert!(rel(AngularFrequency::from_rad_per_s(1e6).0, 1.0) < 1e-15);
    }

    proptest::proptest! {
        #[test]
        fn derived_values_are_consistent(
            r in 0.5f64..0.99,
            l in 0.0f64..0.5,
            len in 0.05f64..3.0,
        ) {
            let geom = CavityGeometry { mirror_reflectivity: r, round_trip_loss: l, length_m: len, ..CavityGeometry::reference() };
            let a = derive_cavity(&geom).unwrap();
            let b = derive_cavity(&geom).unwrap();
            proptest::prop_assert_eq!(a, b);
            proptest::prop_assert!(rel(a.escape_efficiency * (1.0 - r + l), 1.0 - r) < 1e-12);
            proptest::prop_assert_eq!(a.kappa.rad_per_s(), PI * a.fsr_hz / a.finesse * 1e-6 * 1e6);

            let lossier = CavityGeometry { round_trip_loss: l + 0.01, ..geom };
            let c = derive_cavity(&lossier).unwrap();
            proptest::prop_assert!(c.escape_efficiency < a.escape_efficiency);
            proptest::prop_assert!(c.finesse < a.finesse);

            let longer = CavityGeometry { length_m: len * 1.1, ..geom };
            let d = derive_cavity(&longer).unwrap();
            proptest::prop_assert!(d.fsr_hz < a.fsr_hz);
            proptest::prop_assert!(d.g0 < a.g0);
        }
    }
}
