//! Spin-wave read-out dynamics in the single-excitation limit.
//!
//! The cavity amplitude `a`, the collective polarization `P = σ_ge/√N` and the
//! spin wave `S = σ_gs/√N` obey, in the cavity frame,
//!
//! ```text
//! a' = −κ a + i g P
//! P' = −(γ + iΔc) P + i Ω(t) S + i g a
//! S' = −(γ_s + iδ) S + i Ω(t) P          δ = Δc − Δr
//! ```
//!
//! starting from `S(0) = 1`, `a(0) = P(0) = 0`. The coupling and detuning
//! terms conserve |a|² + |P|² + |S|², so the three loss integrals plus the
//! final norm always add up to one; the integrator carries those integrals as
//! extra state components.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ode::{self, Tolerances};
use crate::units::AngularFrequency;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThreeLevelParams {
    /// Collective coupling g = g₀√N.
    pub g: AngularFrequency,
    pub kappa: AngularFrequency,
    pub gamma: AngularFrequency,
    /// Spin-wave decoherence rate.
    pub gamma_s: AngularFrequency,
    /// Atom-cavity detuning Δc.
    pub delta_c: AngularFrequency,
    /// Read-pulse detuning Δr.
    pub delta_r: AngularFrequency,
}

impl ThreeLevelParams {
    /// Two-photon detuning δ = Δc − Δr.
    pub fn delta(&self) -> AngularFrequency {
        self.delta_c - self.delta_r
    }

    pub fn with_detunings(self, delta_c: AngularFrequency, delta_r: AngularFrequency) -> Self {
        ThreeLevelParams {
            delta_c,
            delta_r,
            ..self
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("g", self.g),
            ("kappa", self.kappa),
            ("gamma", self.gamma),
            ("gamma_s", self.gamma_s),
        ] {
            if !(v.0 >= 0.0 && v.0.is_finite()) {
                return Err(Error::param(name, format!("must be finite and >= 0, got {}", v.0)));
            }
        }
        for (name, v) in [("delta_c", self.delta_c), ("delta_r", self.delta_r)] {
            if !v.0.is_finite() {
                return Err(Error::param(name, "must be finite"));
            }
        }
        Ok(())
    }
}

/// Gaussian read pulse Ω(t) = Ω₀ exp(−(t − t₀)²/2σ²), σ = FWHM/(2√(2 ln 2)).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReadPulse {
    pub peak_rabi: AngularFrequency,
    pub center_us: f64,
    /// Full width at half maximum of the Rabi-frequency envelope.
    pub fwhm_us: f64,
}

impl ReadPulse {
    /// Pulse centred three widths after t = 0, where its amplitude is 2⁻³⁶ of the peak.
    pub fn centered(peak_rabi: AngularFrequency, fwhm_us: f64) -> Self {
        ReadPulse {
            peak_rabi,
            center_us: 3.0 * fwhm_us,
            fwhm_us,
        }
    }

    pub fn sigma_us(&self) -> f64 {
        self.fwhm_us / (2.0 * (2.0 * std::f64::consts::LN_2).sqrt())
    }

    pub fn rabi(&self, t_us: f64) -> f64 {
        let sigma = self.sigma_us();
        let x = t_us - self.center_us;
        self.peak_rabi.0 * (-x * x / (2.0 * sigma * sigma)).exp()
    }

    /// Latest time the pulse is considered on.
    pub fn support_end_us(&self) -> f64 {
        self.center_us + 3.0 * self.fwhm_us
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.peak_rabi.0 >= 0.0 && self.peak_rabi.0.is_finite()) {
            return Err(Error::param("peak_rabi", "must be finite and >= 0"));
        }
        if !(self.fwhm_us > 0.0 && self.fwhm_us.is_finite()) {
            return Err(Error::param("fwhm", "must be positive"));
        }
        if !self.center_us.is_finite() {
            return Err(Error::param("center", "must be finite"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemState {
    pub a: Complex64,
    pub p: Complex64,
    pub s: Complex64,
    pub t_us: f64,
}

impl SystemState {
    pub fn norm_sqr(&self) -> f64 {
        self.a.norm_sqr() + self.p.norm_sqr() + self.s.norm_sqr()
    }
}

/// Where the initial excitation ended up by the end of the horizon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayBudget {
    /// 2κ∫|a|², emission through the cavity mode.
    pub through_cavity: f64,
    /// 2γ∫|P|², free-space scattering.
    pub through_atom: f64,
    /// 2γ_s∫|S|², spin-wave decoherence.
    pub through_spin: f64,
    /// |a|² + |P|² + |S|² left at the horizon.
    pub residual_norm: f64,
}

impl DecayBudget {
    pub fn total(&self) -> f64 {
        self.through_cavity + self.through_atom + self.through_spin + self.residual_norm
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetrievalOptions {
    /// Relative (and absolute) integrator tolerance.
    pub tolerance: f64,
    /// Integration horizon; `None` selects t₀ + 6·FWHM + 10/κ.
    pub horizon_us: Option<f64>,
    /// Number of uniformly spaced waveform samples over [0, horizon].
    pub samples: usize,
}

impl Default for RetrievalOptions {
    fn default() -> Self {
        RetrievalOptions {
            tolerance: 1e-9,
            horizon_us: None,
            samples: 501,
        }
    }
}

impl RetrievalOptions {
    pub fn efficiency_only(self) -> Self {
        RetrievalOptions { samples: 0, ..self }
    }

    pub fn resolve_horizon(&self, params: &ThreeLevelParams, pulse: &ReadPulse) -> f64 {
        self.horizon_us.unwrap_or_else(|| default_horizon(params, pulse))
    }
}

pub fn default_horizon(params: &ThreeLevelParams, pulse: &ReadPulse) -> f64 {
    let ringdown = if params.kappa.0 > 0.0 {
        10.0 / params.kappa.0
    } else {
        0.0
    };
    pulse.center_us + 6.0 * pulse.fwhm_us + ringdown
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalResult {
    pub times: Vec<f64>,
    /// |a(t)|² at `times`.
    pub cavity_intensity: Vec<f64>,
    pub chi: f64,
    pub budget: DecayBudget,
    pub final_state: SystemState,
    pub horizon_us: f64,
    pub steps: usize,
}

/// Intrinsic conversion efficiency χ = 2κ∫|a|² of a completed integration.
pub fn conversion_efficiency(result: &RetrievalResult) -> f64 {
    result.budget.through_cavity
}

const STATE_DIM: usize = 9;
const LOCAL_TOLERANCE_FACTOR: f64 = 1e-3;

fn rhs(params: &ThreeLevelParams, pulse: &ReadPulse) -> impl Fn(f64, &[f64; STATE_DIM], &mut [f64; STATE_DIM]) {
    let kappa = params.kappa.0;
    let gamma = params.gamma.0;
    let gamma_s = params.gamma_s.0;
    let g = params.g.0;
    let dc = params.delta_c.0;
    let delta = params.delta().0;
    let pulse = *pulse;
    move |t, y, dy| {
        let om = pulse.rabi(t);
        let (ar, ai, pr, pi, sr, si) = (y[0], y[1], y[2], y[3], y[4], y[5]);
        // a' = −κa + igP
        dy[0] = -kappa * ar - g * pi;
        dy[1] = -kappa * ai + g * pr;
        // P' = −(γ + iΔc)P + iΩS + iga
        dy[2] = -gamma * pr + dc * pi - om * si - g * ai;
        dy[3] = -gamma * pi - dc * pr + om * sr + g * ar;
        // S' = −(γs + iδ)S + iΩP
        dy[4] = -gamma_s * sr + delta * si - om * pi;
        dy[5] = -gamma_s * si - delta * sr + om * pr;
        dy[6] = 2.0 * kappa * (ar * ar + ai * ai);
        dy[7] = 2.0 * gamma * (pr * pr + pi * pi);
        dy[8] = 2.0 * gamma_s * (sr * sr + si * si);
    }
}

/// Integrates the read-out from a unit spin wave and returns the emitted
/// waveform, χ and the decay budget.
pub fn integrate_retrieval(
    params: &ThreeLevelParams,
    pulse: &ReadPulse,
    options: &RetrievalOptions,
) -> Result<RetrievalResult> {
    integrate_from(params, pulse, options, Complex64::new(1.0, 0.0))
}

/// χ only, without waveform sampling.
pub fn retrieval_efficiency(params: &ThreeLevelParams, pulse: &ReadPulse, options: &RetrievalOptions) -> Result<f64> {
    integrate_from(params, pulse, &options.efficiency_only(), Complex64::new(1.0, 0.0)).map(|r| r.chi)
}

/// As [`integrate_retrieval`] with an arbitrary initial spin-wave amplitude.
pub fn integrate_from(
    params: &ThreeLevelParams,
    pulse: &ReadPulse,
    options: &RetrievalOptions,
    spin_wave: Complex64,
) -> Result<RetrievalResult> {
    params.validate()?;
    pulse.validate()?;
    let tol = options.tolerance;
    if !(1e-12..=1e-4).contains(&tol) {
        return Err(Error::param("tolerance", format!("{tol} outside [1e-12, 1e-4]")));
    }
    let horizon = options.resolve_horizon(params, pulse);
    let required = pulse.support_end_us();
    if !(horizon >= required) {
        return Err(Error::HorizonTooShort {
            horizon_us: horizon,
            required_us: required,
        });
    }

    let n = options.samples;
    let times: Vec<f64> = match n {
        0 => Vec::new(),
        1 => vec![horizon],
        _ => (0..n).map(|i| horizon * i as f64 / (n - 1) as f64).collect(),
    };
    let mut intensity = Vec::with_capacity(n);
    let mut next = 0usize;
    while next < times.len() && times[next] <= 0.0 {
        intensity.push(0.0);
        next += 1;
    }

    let mut y0 = [0.0; STATE_DIM];
    y0[4] = spin_wave.re;
    y0[5] = spin_wave.im;

    // `tolerance` bounds the accumulated error of the whole run, so each step
    // is held to a tighter local target.
    let mut tolerances = Tolerances::uniform(tol * LOCAL_TOLERANCE_FACTOR);
    // Keep the step below the pulse width so the pulse is never stepped over.
    tolerances.max_step = pulse.fwhm_us / 4.0;
    let (y, stats) = ode::integrate(rhs(params, pulse), 0.0, y0, horizon, tolerances, |step| {
        while next < times.len() && times[next] <= step.t1 {
            let t = times[next];
            let ar = step.interpolate(0, t);
            let ai = step.interpolate(1, t);
            intensity.push(ar * ar + ai * ai);
            next += 1;
        }
    })?;
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { t_us: horizon });
    }

    let final_state = SystemState {
        a: Complex64::new(y[0], y[1]),
        p: Complex64::new(y[2], y[3]),
        s: Complex64::new(y[4], y[5]),
        t_us: horizon,
    };
    let budget = DecayBudget {
        through_cavity: y[6].max(0.0),
        through_atom: y[7].max(0.0),
        through_spin: y[8].max(0.0),
        residual_norm: final_state.norm_sqr(),
    };
    Ok(RetrievalResult {
        times,
        cavity_intensity: intensity,
        chi: budget.through_cavity,
        budget,
        final_state,
        horizon_us: horizon,
        steps: stats.accepted,
    })
}

/// χ from a fixed-step fourth-order Runge–Kutta run with `steps` steps up to
/// `horizon_us`; a reference for the adaptive integrator.
pub fn retrieval_efficiency_fixed_step(
    params: &ThreeLevelParams,
    pulse: &ReadPulse,
    horizon_us: f64,
    steps: usize,
) -> Result<f64> {
    params.validate()?;
    pulse.validate()?;
    let mut y0 = [0.0; STATE_DIM];
    y0[4] = 1.0;
    let y = ode::integrate_fixed(rhs(params, pulse), 0.0, y0, horizon_us, steps);
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { t_us: horizon_us });
    }
    Ok(y[6])
}

/// Dressed-state eigenfrequencies Δ± = δ/2 ± ½√(g² + Ω² + δ²), returned as
/// (Δ₊, Δ₋).
pub fn dressed_eigenfrequencies(
    g: AngularFrequency,
    rabi: AngularFrequency,
    delta: AngularFrequency,
) -> (AngularFrequency, AngularFrequency) {
    let root = 0.5 * (g.0 * g.0 + rabi.0 * rabi.0 + delta.0 * delta.0).sqrt();
    let half = 0.5 * delta.0;
    (AngularFrequency(half + root), AngularFrequency(half - root))
}

/// Default rates: κ = 2π·7.25 MHz, γ = Γ/2 = 2π·3.035 MHz, γ_s = 2π·6.7 kHz.
pub fn reference_rates() -> (AngularFrequency, AngularFrequency, AngularFrequency) {
    (
        AngularFrequency::from_mhz(7.25),
        AngularFrequency::from_mhz(6.07 / 2.0),
        AngularFrequency::from_khz(6.7),
    )
}

/// Grey-curve parameters: g = 2π·15.8 MHz, Δc = −2π·1.5 MHz, resonant read.
pub fn reference_params() -> ThreeLevelParams {
    let (kappa, gamma, gamma_s) = reference_rates();
    ThreeLevelParams {
        g: AngularFrequency::from_mhz(15.8),
        kappa,
        gamma,
        gamma_s,
        delta_c: AngularFrequency::from_mhz(-1.5),
        delta_r: AngularFrequency::ZERO,
    }
}

/// 250 ns FWHM read pulse with Ω₀ = 2π·4.8 MHz.
pub fn reference_pulse() -> ReadPulse {
    ReadPulse::centered(AngularFrequency::from_mhz(4.8), 0.25)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mhz(x: f64) -> AngularFrequency {
        AngularFrequency::from_mhz(x)
    }

    #[test]
    fn no_read_pulse_no_emission() {
        let pulse = ReadPulse {
            peak_rabi: AngularFrequency::ZERO,
            ..reference_pulse()
        };
        let r = integrate_retrieval(&reference_params(), &pulse, &RetrievalOptions::default()).unwrap();
        assert_eq!(r.chi, 0.0);
        assert!(r.cavity_intensity.iter().all(|&v| v == 0.0));
        assert_eq!(conversion_efficiency(&r), 0.0);
    }

    #[test]
    fn no_coupling_no_cavity_channel() {
        let params = ThreeLevelParams {
            g: AngularFrequency::ZERO,
            ..reference_params()
        };
        let r = integrate_retrieval(&params, &reference_pulse(), &RetrievalOptions::default()).unwrap();
        assert_eq!(r.chi, 0.0);
        assert_eq!(r.budget.through_cavity, 0.0);
        assert!(r.budget.through_atom > 0.1);
    }

    #[test]
    fn lossless_atoms_emit_everything_eventually() {
        let params = ThreeLevelParams {
            gamma: AngularFrequency::ZERO,
            gamma_s: AngularFrequency::ZERO,
            ..reference_params()
        };
        let pulse = reference_pulse();
        let opts = RetrievalOptions {
            horizon_us: Some(pulse.support_end_us() + 20.0),
            ..RetrievalOptions::default()
        };
        let r = integrate_retrieval(&params, &pulse, &opts).unwrap();
        assert!((r.chi + r.budget.residual_norm - 1.0).abs() < 1e-7, "{:?}", r.budget);
    }

    #[test]
    fn budget_closes_for_reference_point() {
        let opts = RetrievalOptions::default();
        let r = integrate_retrieval(&reference_params(), &reference_pulse(), &opts).unwrap();
        assert!((r.budget.total() - 1.0).abs() < 10.0 * opts.tolerance, "{:?}", r.budget);
        assert!(r.chi > 0.6 && r.chi < 0.8, "chi = {}", r.chi);
        assert_eq!(r.times.len(), opts.samples);
        assert_eq!(r.cavity_intensity.len(), opts.samples);
    }

    #[test]
    fn waveform_integrates_to_chi() {
        let params = reference_params();
        let opts = RetrievalOptions {
            samples: 4001,
            ..RetrievalOptions::default()
        };
        let r = integrate_retrieval(&params, &reference_pulse(), &opts).unwrap();
        let dt = r.times[1] - r.times[0];
        let trapz: f64 = r.cavity_intensity.windows(2).map(|w| 0.5 * (w[0] + w[1]) * dt).sum();
        let chi = 2.0 * params.kappa.0 * trapz;
        assert!((chi - r.chi).abs() < 1e-4, "{chi} vs {}", r.chi);
    }

    #[test]
    fn rejects_short_horizon_and_bad_tolerance() {
        let pulse = reference_pulse();
        let short = RetrievalOptions {
            horizon_us: Some(pulse.support_end_us() - 0.01),
            ..RetrievalOptions::default()
        };
        assert!(matches!(
            integrate_retrieval(&reference_params(), &pulse, &short),
            Err(Error::HorizonTooShort { .. })
        ));
        for tol in [1e-13, 1e-3] {
            let o = RetrievalOptions {
                tolerance: tol,
                ..RetrievalOptions::default()
            };
            assert!(integrate_retrieval(&reference_params(), &pulse, &o).is_err());
        }
        let negative = ThreeLevelParams {
            gamma: mhz(-1.0),
            ..reference_params()
        };
        assert!(integrate_retrieval(&negative, &pulse, &RetrievalOptions::default()).is_err());
    }

    #[test]
    fn dressed_eigenfrequencies_examples() {
        let (up, down) = dressed_eigenfrequencies(mhz(15.8), mhz(4.8), AngularFrequency::ZERO);
        assert!((up.mhz() - 8.2566).abs() < 1e-3, "{}", up.mhz());
        assert!((down.mhz() + 8.2566).abs() < 1e-3);
        assert!(up >= down);

        let (up, down) = dressed_eigenfrequencies(mhz(3.0), mhz(4.0), AngularFrequency::ZERO);
        assert!((up.mhz() - 2.5).abs() < 1e-12 && (down.mhz() + 2.5).abs() < 1e-12);

        let big = mhz(1e5);
        let (up, down) = dressed_eigenfrequencies(mhz(15.8), mhz(4.8), big);
        assert!((up - big).abs().mhz() < 2e-3);
        assert!(down.abs().mhz() < 2e-3);
        let (up, down) = dressed_eigenfrequencies(mhz(15.8), mhz(4.8), -big);
        assert!(up.abs().mhz() < 2e-3);
        assert!((down + big).abs().mhz() < 2e-3);
    }

    #[test]
    fn two_photon_detuning_is_derived() {
        let p = reference_params().with_detunings(mhz(5.0), mhz(-2.0));
        assert!((p.delta().mhz() - 7.0).abs() < 1e-12);
    }

    #[test]
    fn fixed_step_reference_agrees() {
        let params = reference_params().with_detunings(mhz(-1.5), mhz(8.0));
        let pulse = reference_pulse();
        let r = integrate_retrieval(&params, &pulse, &RetrievalOptions::default()).unwrap();
        let fixed = retrieval_efficiency_fixed_step(&params, &pulse, r.horizon_us, 40_000).unwrap();
        assert!((fixed - r.chi).abs() < 1e-7, "{fixed} vs {}", r.chi);
    }

    #[test]
    fn pulse_shape() {
        let p = reference_pulse();
        assert!((p.rabi(p.center_us) - p.peak_rabi.0).abs() < 1e-12);
        let half = p.rabi(p.center_us + p.fwhm_us / 2.0);
        assert!((half / p.peak_rabi.0 - 0.5).abs() < 1e-12);
    }
}
