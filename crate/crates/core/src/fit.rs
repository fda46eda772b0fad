//! Weighted nonlinear least squares for efficiency and reflectance spectra.
//!
//! The optimizer is a bounded Levenberg–Marquardt loop with Marquardt
//! diagonal scaling and forward-difference Jacobians. Confidence intervals
//! come from the linearized covariance (JᵀJ)⁻¹·s² at the optimum.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::retrieval::{retrieval_efficiency, ReadPulse, RetrievalOptions, ThreeLevelParams};
use crate::spectrum::{reflectance, TwoLevelSystemParams};
use crate::units::{collective_coupling, AngularFrequency};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    /// Δr for efficiency spectra, probe offset ω − ω_a for reflectance.
    pub x: AngularFrequency,
    pub y: f64,
    pub weight: f64,
}

/// Forward model with its fixed constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FitModel {
    /// χ(Δr). Free parameters may be `g`, `rabi` (Ω₀) and `delta_c`.
    EfficiencySpectrum {
        base: ThreeLevelParams,
        pulse: ReadPulse,
        retrieval: RetrievalOptions,
    },
    /// R(ω). The only free parameter is `atom_number`, with g = g₀√N.
    ReflectanceSpectrum {
        base: TwoLevelSystemParams,
        g0: AngularFrequency,
    },
}

impl FitModel {
    fn allowed(&self) -> &'static [&'static str] {
        match self {
            FitModel::EfficiencySpectrum { .. } => &["g", "rabi", "delta_c"],
            FitModel::ReflectanceSpectrum { .. } => &["atom_number"],
        }
    }

    /// Relative noise floor of one model evaluation.
    fn noise(&self) -> f64 {
        match self {
            FitModel::EfficiencySpectrum { retrieval, .. } => 10.0 * retrieval.tolerance,
            FitModel::ReflectanceSpectrum { .. } => f64::EPSILON,
        }
    }

    /// Model values at `xs` with the named free parameters set to `values`.
    pub fn evaluate(&self, names: &[String], values: &[f64], xs: &[AngularFrequency]) -> Result<Vec<f64>> {
        match self {
            FitModel::EfficiencySpectrum { base, pulse, retrieval } => {
                let mut params = *base;
                let mut pulse = *pulse;
                for (name, &v) in names.iter().zip(values) {
                    match name.as_str() {
                        "g" => params.g = AngularFrequency(v),
                        "rabi" => pulse.peak_rabi = AngularFrequency(v),
                        "delta_c" => params.delta_c = AngularFrequency(v),
                        other => return Err(unknown(other)),
                    }
                }
                let opts = retrieval.efficiency_only();
                xs.par_iter()
                    .map(|&dr| retrieval_efficiency(&params.with_detunings(params.delta_c, dr), &pulse, &opts))
                    .collect()
            }
            FitModel::ReflectanceSpectrum { base, g0 } => {
                let mut params = *base;
                for (name, &v) in names.iter().zip(values) {
                    match name.as_str() {
                        "atom_number" => params.g = collective_coupling(*g0, v.max(0.0)),
                        other => return Err(unknown(other)),
                    }
                }
                params.validate()?;
                Ok(xs.iter().map(|&w| reflectance(w, &params)).collect())
            }
        }
    }
}

fn unknown(name: &str) -> Error {
    Error::InvalidFitProblem(format!("unknown free parameter `{name}`"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FreeParam {
    pub name: String,
    pub initial: f64,
    pub lower: f64,
    pub upper: f64,
}

impl FreeParam {
    pub fn new(name: &str, initial: f64, lower: f64, upper: f64) -> Self {
        FreeParam {
            name: name.to_string(),
            initial,
            lower,
            upper,
        }
    }

    /// Scale for finite-difference steps when the value itself is near zero.
    fn typical(&self) -> f64 {
        let span = self.upper - self.lower;
        let from_span = if span.is_finite() { 1e-3 * span } else { 0.0 };
        self.initial.abs().max(from_span).max(1e-8)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub max_iterations: usize,
    /// Stop when an accepted step lowers the cost by less than this fraction.
    pub ftol: f64,
    /// Stop when the step is smaller than this fraction of the parameter scale.
    pub xtol: f64,
    /// Stop when the scaled gradient falls below this value.
    pub gtol: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            max_iterations: 100,
            ftol: 1e-10,
            xtol: 1e-10,
            gtol: 1e-12,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitProblem {
    pub observations: Vec<Observation>,
    pub model: FitModel,
    pub free: Vec<FreeParam>,
    pub options: FitOptions,
}

impl FitProblem {
    pub fn validate(&self) -> Result<()> {
        if self.free.is_empty() {
            return Err(Error::InvalidFitProblem("no free parameters".into()));
        }
        let allowed = self.model.allowed();
        for (i, p) in self.free.iter().enumerate() {
            if !allowed.contains(&p.name.as_str()) {
                return Err(Error::InvalidFitProblem(format!(
                    "`{}` is not a free parameter of this model (allowed: {})",
                    p.name,
                    allowed.join(", ")
                )));
            }
            if self.free[..i].iter().any(|q| q.name == p.name) {
                return Err(Error::InvalidFitProblem(format!("`{}` listed twice", p.name)));
            }
            if !(p.lower <= p.initial && p.initial <= p.upper) || !p.initial.is_finite() {
                return Err(Error::InvalidFitProblem(format!(
                    "initial {} of `{}` outside bounds [{}, {}]",
                    p.initial, p.name, p.lower, p.upper
                )));
            }
        }
        let needed = 3 * self.free.len();
        if self.observations.len() < needed {
            return Err(Error::Underdetermined(format!(
                "{} observations for {} free parameters, need at least {needed}",
                self.observations.len(),
                self.free.len()
            )));
        }
        for o in &self.observations {
            if !(o.weight > 0.0 && o.weight.is_finite()) {
                return Err(Error::InvalidFitProblem(format!("non-positive weight {}", o.weight)));
            }
            if !(o.x.0.is_finite() && o.y.is_finite()) {
                return Err(Error::InvalidFitProblem("non-finite observation".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamEstimate {
    pub name: String,
    pub value: f64,
    pub std_error: f64,
    pub ci95: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub estimates: Vec<ParamEstimate>,
    /// √(Σ wᵢ rᵢ² / m).
    pub residual_rms: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Cost ½Σwᵢrᵢ² after the start and after every accepted step.
    pub cost_trace: Vec<f64>,
    pub evaluations: usize,
}

impl FitReport {
    pub fn get(&self, name: &str) -> Option<&ParamEstimate> {
        self.estimates.iter().find(|e| e.name == name)
    }
}

struct Objective<'a> {
    problem: &'a FitProblem,
    names: Vec<String>,
    xs: Vec<AngularFrequency>,
    sqrt_w: DVector<f64>,
    y: DVector<f64>,
    evaluations: std::sync::atomic::AtomicUsize,
}

impl Objective<'_> {
    fn residuals(&self, p: &[f64]) -> Result<DVector<f64>> {
        self.evaluations.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
        let model = self.problem.model.evaluate(&self.names, p, &self.xs)?;
        Ok(DVector::from_iterator(
            model.len(),
            model
                .iter()
                .zip(self.y.iter())
                .zip(self.sqrt_w.iter())
                .map(|((m, y), w)| w * (m - y)),
        ))
    }

    fn jacobian(&self, p: &[f64], r: &DVector<f64>) -> Result<DMatrix<f64>> {
        let noise = self.problem.model.noise().max(f64::EPSILON).sqrt();
        let columns: Vec<Result<DVector<f64>>> = (0..p.len())
            .into_par_iter()
            .map(|k| {
                let param = &self.problem.free[k];
                let mut h = noise * p[k].abs().max(param.typical());
                if p[k] + h > param.upper {
                    h = -h;
                }
                let mut q = p.to_vec();
                q[k] += h;
                let h = q[k] - p[k];
                Ok((self.residuals(&q)? - r) / h)
            })
            .collect();
        let mut j = DMatrix::zeros(r.len(), p.len());
        for (k, c) in columns.into_iter().enumerate() {
            j.set_column(k, &c?);
        }
        Ok(j)
    }
}

fn project(p: &mut [f64], free: &[FreeParam]) {
    for (v, s) in p.iter_mut().zip(free) {
        *v = v.clamp(s.lower, s.upper);
    }
}

/// Singular-value condition number of J with columns scaled to unit
/// parameter size; infinite when a column vanishes.
fn condition(j: &DMatrix<f64>, scales: &[f64]) -> f64 {
    let mut scaled = j.clone();
    for (k, s) in scales.iter().enumerate() {
        scaled.column_mut(k).scale_mut(*s);
    }
    let sv = scaled.singular_values();
    let max = sv.max();
    let min = sv.min();
    if max == 0.0 || min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

const MAX_CONDITION: f64 = 1e10;

/// Minimizes ½Σwᵢ(f(xᵢ) − yᵢ)² over the free parameters.
pub fn fit(problem: &FitProblem) -> Result<FitReport> {
    problem.validate()?;
    let obj = Objective {
        problem,
        names: problem.free.iter().map(|p| p.name.clone()).collect(),
        xs: problem.observations.iter().map(|o| o.x).collect(),
        sqrt_w: DVector::from_iterator(
            problem.observations.len(),
            problem.observations.iter().map(|o| o.weight.sqrt()),
        ),
        y: DVector::from_iterator(problem.observations.len(), problem.observations.iter().map(|o| o.y)),
        evaluations: Default::default(),
    };
    let opts = problem.options;
    let n = problem.free.len();
    let scales: Vec<f64> = problem.free.iter().map(|p| p.typical()).collect();

    let mut p: Vec<f64> = problem.free.iter().map(|f| f.initial).collect();
    let mut r = obj.residuals(&p)?;
    let mut cost = 0.5 * r.norm_squared();
    let mut trace = vec![cost];
    let mut lambda = 1e-3;
    let mut iterations = 0;
    let mut converged = cost == 0.0;

    while !converged && iterations < opts.max_iterations {
        iterations += 1;
        let j = obj.jacobian(&p, &r)?;
        let jtj = j.transpose() * &j;
        let grad = j.transpose() * &r;
        let scaled_grad = grad.iter().zip(&scales).map(|(g, s)| (g * s).abs()).fold(0.0, f64::max);
        if scaled_grad <= opts.gtol * cost.max(f64::MIN_POSITIVE) {
            converged = true;
            break;
        }
        if condition(&j, &scales) > MAX_CONDITION {
            return Err(Error::RankDeficient {
                condition: condition(&j, &scales),
            });
        }
        let diag: Vec<f64> = (0..n).map(|k| jtj[(k, k)].max(1e-300)).collect();

        let mut accepted = false;
        while lambda < 1e16 {
            let mut a = jtj.clone();
            for k in 0..n {
                a[(k, k)] += lambda * diag[k];
            }
            let Some(step) = a.cholesky().map(|c| c.solve(&(-&grad))) else {
                lambda *= 4.0;
                continue;
            };
            let mut trial: Vec<f64> = p.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
            project(&mut trial, &problem.free);
            let r_trial = obj.residuals(&trial)?;
            let cost_trial = 0.5 * r_trial.norm_squared();
            if cost_trial < cost {
                let small_step = trial
                    .iter()
                    .zip(&p)
                    .zip(&scales)
                    .all(|((t, q), s)| (t - q).abs() <= opts.xtol * (q.abs().max(*s)));
                let small_gain = cost - cost_trial <= opts.ftol * cost;
                p = trial;
                r = r_trial;
                cost = cost_trial;
                trace.push(cost);
                lambda = (lambda / 3.0).max(1e-12);
                accepted = true;
                converged = small_step || small_gain || cost == 0.0;
                break;
            }
            lambda *= 4.0;
        }
        if !accepted {
            // No downhill step at any damping: already at a (bounded) minimum.
            converged = true;
        }
    }

    let m = problem.observations.len();
    let j = obj.jacobian(&p, &r)?;
    let cond = condition(&j, &scales);
    if cond > MAX_CONDITION {
        return Err(Error::RankDeficient { condition: cond });
    }
    let dof = (m - n) as f64;
    let s2 = 2.0 * cost / dof;
    let cov = (j.transpose() * &j).try_inverse().ok_or(Error::RankDeficient {
        condition: f64::INFINITY,
    })? * s2;
    let t = StudentsT::new(0.0, 1.0, dof)
        .map_err(|e| Error::InvalidFitProblem(e.to_string()))?
        .inverse_cdf(0.975);
    let estimates = problem
        .free
        .iter()
        .enumerate()
        .map(|(k, f)| {
            let se = cov[(k, k)].max(0.0).sqrt();
            ParamEstimate {
                name: f.name.clone(),
                value: p[k],
                std_error: se,
                ci95: (p[k] - t * se, p[k] + t * se),
            }
        })
        .collect();

    Ok(FitReport {
        estimates,
        residual_rms: (2.0 * cost / m as f64).sqrt(),
        iterations,
        converged,
        cost_trace: trace,
        evaluations: obj.evaluations.into_inner(),
    })
}

/// Fits {Ω₀, g, Δc} (or any subset) to a χ(Δr) spectrum.
pub fn fit_efficiency_spectrum(problem: &FitProblem) -> Result<FitReport> {
    if !matches!(problem.model, FitModel::EfficiencySpectrum { .. }) {
        return Err(Error::InvalidFitProblem("expected an efficiency-spectrum model".into()));
    }
    fit(problem)
}

/// Fits the atom number N to a reflectance spectrum.
pub fn fit_reflectance_n(problem: &FitProblem) -> Result<FitReport> {
    if !matches!(problem.model, FitModel::ReflectanceSpectrum { .. }) {
        return Err(Error::InvalidFitProblem("expected a reflectance-spectrum model".into()));
    }
    fit(problem)
}

/// Weights proportional to 1/y, as for Poissonian count data; `floor` keeps
/// near-zero values from dominating.
pub fn poissonian_weights(observations: &mut [Observation], floor: f64) {
    for o in observations {
        o.weight = 1.0 / o.y.abs().max(floor);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Noise {
    None,
    /// y·(1 + σ·ξ), ξ ~ N(0, 1).
    Multiplicative {
        sigma: f64,
    },
    /// y + σ·ξ.
    Additive {
        sigma: f64,
    },
}

/// Model values at `xs` with seeded Gaussian noise and unit weights.
pub fn synthetic_observations(
    model: &FitModel,
    names: &[&str],
    truth: &[f64],
    xs: &[AngularFrequency],
    noise: Noise,
    seed: u64,
) -> Result<Vec<Observation>> {
    let names: Vec<String> = names.iter().map(|s| s.to_string()).collect();
    let clean = model.evaluate(&names, truth, xs)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    Ok(xs
        .iter()
        .zip(clean)
        .map(|(&x, y)| {
            let y = match noise {
                Noise::None => y,
                Noise::Multiplicative { sigma } => y * (1.0 + sigma * normal.sample(&mut rng)),
                Noise::Additive { sigma } => y + sigma * normal.sample(&mut rng),
            };
            Observation { x, y, weight: 1.0 }
        })
        .collect())
}
