//! Steady-state linear response of the atom-cavity system: dressed
//! eigenfrequencies and the weak-probe reflectance off the coupling mirror.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::units::{AngularFrequency, CavityDerived};

/// Parameters of the two-level (probe) response. Probe offsets are measured
/// from the atomic resonance ω_a.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoLevelSystemParams {
    /// Collective coupling g = g₀√N.
    pub g: AngularFrequency,
    pub kappa: AngularFrequency,
    pub kappa0: AngularFrequency,
    /// Atomic coherence decay γ = Γ/2.
    pub gamma: AngularFrequency,
    /// Atom-cavity detuning Δc = ω_a − ω_c.
    pub delta_c: AngularFrequency,
}

impl TwoLevelSystemParams {
    /// Resonant cavity built from derived resonator constants.
    pub fn from_cavity(cavity: &CavityDerived, g: AngularFrequency, gamma: AngularFrequency) -> Self {
        TwoLevelSystemParams {
            g,
            kappa: cavity.kappa,
            kappa0: cavity.kappa0,
            gamma,
            delta_c: AngularFrequency::ZERO,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.kappa0.0 > 0.0) {
            return Err(Error::param("kappa0", "must be positive"));
        }
        if self.kappa.0 < self.kappa0.0 {
            return Err(Error::param("kappa", "must be >= kappa0"));
        }
        if !(self.gamma.0 > 0.0) {
            return Err(Error::param("gamma", "must be positive"));
        }
        if !(self.g.0 >= 0.0) {
            return Err(Error::param("g", "must be non-negative"));
        }
        if !self.delta_c.0.is_finite() {
            return Err(Error::param("delta_c", "must be finite"));
        }
        Ok(())
    }
}

/// Single-excitation Jaynes/Tavis-Cummings eigenfrequencies relative to ω_a,
/// returned as (ω₊ − ω_a, ω₋ − ω_a).
pub fn eigenfrequencies_two_level(
    g: AngularFrequency,
    delta_c: AngularFrequency,
) -> (AngularFrequency, AngularFrequency) {
    let half = delta_c.0 / 2.0;
    let root = g.0.hypot(half);
    (AngularFrequency(half + root), AngularFrequency(half - root))
}

/// Probe reflectance at offset ω − ω_a.
///
/// The cavity term uses ω − ω_c = (ω − ω_a) + Δc, so Δc = 0 reproduces the
/// resonant-cavity expression exactly.
pub fn reflectance(offset: AngularFrequency, params: &TwoLevelSystemParams) -> f64 {
    let x = offset.0;
    let atomic = Complex64::new(x, params.gamma.0);
    let cavity = Complex64::new(x + params.delta_c.0, params.kappa.0);
    let g2 = params.g.0 * params.g.0;
    let denom = cavity - g2 / atomic;
    let r = Complex64::new(1.0, 0.0) - Complex64::new(0.0, 2.0 * params.kappa0.0) / denom;
    r.norm_sqr()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReflectanceCurve {
    pub probe_detunings: Vec<AngularFrequency>,
    pub reflectance: Vec<f64>,
}

impl ReflectanceCurve {
    /// Indices of strict interior local minima.
    pub fn local_minima(&self) -> Vec<usize> {
        let r = &self.reflectance;
        (1..r.len().saturating_sub(1))
            .filter(|&i| r[i] < r[i - 1] && r[i] <= r[i + 1])
            .collect()
    }
}

/// Evenly spaced probe grid including both end points.
pub fn probe_grid(lo: AngularFrequency, hi: AngularFrequency, points: usize) -> Vec<AngularFrequency> {
    match points {
        0 => Vec::new(),
        1 => vec![lo],
        n => {
            let step = (hi.0 - lo.0) / (n - 1) as f64;
            (0..n).map(|i| AngularFrequency(lo.0 + step * i as f64)).collect()
        }
    }
}

/// Default probe grid: ±2π·60 MHz in 601 points.
pub fn default_probe_grid() -> Vec<AngularFrequency> {
    probe_grid(AngularFrequency::from_mhz(-60.0), AngularFrequency::from_mhz(60.0), 601)
}

pub fn reflectance_curve(grid: &[AngularFrequency], params: &TwoLevelSystemParams) -> Result<ReflectanceCurve> {
    params.validate()?;
    let reflectance = grid.par_iter().map(|&w| reflectance(w, params)).collect();
    Ok(ReflectanceCurve {
        probe_detunings: grid.to_vec(),
        reflectance,
    })
}

/// Refines a minimum of `f` bracketed by `[lo, hi]` with golden-section search.
pub fn golden_minimum(mut lo: f64, mut hi: f64, tol: f64, f: impl Fn(f64) -> f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = hi - inv_phi * (hi - lo);
    let mut d = lo + inv_phi * (hi - lo);
    let (mut fc, mut fd) = (f(c), f(d));
    while (hi - lo).abs() > tol {
        if fc < fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - inv_phi * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + inv_phi * (hi - lo);
            fd = f(d);
        }
    }
    0.5 * (lo + hi)
}

/// Local reflectance minima located on `grid` and refined by golden-section
/// search between the neighbouring grid points.
pub fn reflectance_minima(grid: &[AngularFrequency], params: &TwoLevelSystemParams) -> Result<Vec<AngularFrequency>> {
    let curve = reflectance_curve(grid, params)?;
    Ok(curve
        .local_minima()
        .into_iter()
        .map(|i| {
            let x = golden_minimum(grid[i - 1].0, grid[i + 1].0, 1e-10, |x| {
                reflectance(AngularFrequency(x), params)
            });
            AngularFrequency(x)
        })
        .collect())
}
