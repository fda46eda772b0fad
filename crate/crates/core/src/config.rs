//! TOML run configuration shared by every subcommand.
//!
//! Keys carry their unit in a suffix (`_MHz`, `_kHz`, `_us`, `_ns`, `_m`,
//! `_um`, `_nm`). Frequencies given in MHz/kHz are ordinary frequencies ν and
//! are converted to angular rates 2πν on load. Unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::{FitModel, FitOptions, FreeParam};
use crate::retrieval::{ReadPulse, RetrievalOptions, ThreeLevelParams};
use crate::scan::{OdReference, OdSweepOptions};
use crate::spectrum::{probe_grid, TwoLevelSystemParams};
use crate::stats::{DetectionModel, EfficiencyChain};
use crate::units::{
    collective_coupling, derive_cavity, rb87_sigma_minus_dipole, AngularFrequency, CavityDerived, CavityGeometry,
    RB87_D2_WAVELENGTH,
};

/// Bumped whenever a key is added, renamed or reinterpreted.
pub const SCHEMA_VERSION: u32 = 1;

/// Seed used when none is configured.
pub const DEFAULT_SEED: u64 = 0x5eed_2024;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub cavity: CavitySection,
    pub system: SystemSection,
    pub pulse: PulseSection,
    pub integrator: IntegratorSection,
    pub sweep: SweepSection,
    pub fit: FitSection,
    pub stats: StatsSection,
    pub output: OutputSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CavitySection {
    pub mirror_reflectivity: f64,
    pub round_trip_loss: f64,
    pub length_m: f64,
    pub waist_um: f64,
    pub wavelength_nm: f64,
    /// Transition dipole matrix element in C·m.
    #[serde(rename = "dipole_moment_Cm")]
    pub dipole_moment_cm: f64,
}

impl Default for CavitySection {
    fn default() -> Self {
        CavitySection {
            mirror_reflectivity: 0.86,
            round_trip_loss: 0.11,
            length_m: 0.88,
            waist_um: 69.0,
            wavelength_nm: RB87_D2_WAVELENGTH * 1e9,
            dipole_moment_cm: rb87_sigma_minus_dipole(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SystemSection {
    /// Collective coupling; ignored when `atom_number` is set.
    #[serde(rename = "g_MHz")]
    pub g_mhz: f64,
    /// Atom number N, giving g = g₀√N with g₀ from the cavity section.
    pub atom_number: Option<f64>,
    /// Total cavity decay; derived from the cavity section when absent.
    #[serde(rename = "kappa_MHz")]
    pub kappa_mhz: Option<f64>,
    /// Coupler decay; derived from the cavity section when absent.
    #[serde(rename = "kappa0_MHz")]
    pub kappa0_mhz: Option<f64>,
    /// Optical coherence decay γ = Γ/2.
    #[serde(rename = "gamma_MHz")]
    pub gamma_mhz: f64,
    #[serde(rename = "gamma_s_kHz")]
    pub gamma_s_khz: f64,
    #[serde(rename = "delta_c_MHz")]
    pub delta_c_mhz: f64,
    #[serde(rename = "delta_r_MHz")]
    pub delta_r_mhz: f64,
}

impl Default for SystemSection {
    fn default() -> Self {
        SystemSection {
            g_mhz: 15.8,
            atom_number: None,
            kappa_mhz: Some(7.25),
            kappa0_mhz: None,
            gamma_mhz: 3.035,
            gamma_s_khz: 6.7,
            delta_c_mhz: -1.5,
            delta_r_mhz: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PulseSection {
    #[serde(rename = "rabi_MHz")]
    pub rabi_mhz: f64,
    pub fwhm_ns: f64,
    /// Pulse centre; three FWHM after t = 0 when absent.
    pub center_us: Option<f64>,
}

impl Default for PulseSection {
    fn default() -> Self {
        PulseSection {
            rabi_mhz: 4.8,
            fwhm_ns: 250.0,
            center_us: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IntegratorSection {
    pub tolerance: f64,
    pub horizon_us: Option<f64>,
    pub samples: usize,
}

impl Default for IntegratorSection {
    fn default() -> Self {
        IntegratorSection {
            tolerance: 1e-9,
            horizon_us: None,
            samples: 501,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    #[serde(rename = "probe_min_MHz")]
    pub probe_min_mhz: f64,
    #[serde(rename = "probe_max_MHz")]
    pub probe_max_mhz: f64,
    pub probe_points: usize,
    #[serde(rename = "dr_min_MHz")]
    pub dr_min_mhz: f64,
    #[serde(rename = "dr_max_MHz")]
    pub dr_max_mhz: f64,
    pub dr_points: usize,
    #[serde(rename = "dc_min_MHz")]
    pub dc_min_mhz: f64,
    #[serde(rename = "dc_max_MHz")]
    pub dc_max_mhz: f64,
    pub dc_points: usize,
    pub od_values: Vec<f64>,
    pub od_ref: f64,
    /// Coupling at `od_ref`.
    #[serde(rename = "g_ref_MHz")]
    pub g_ref_mhz: f64,
    pub od_dr_points: usize,
    pub od_span_factor: f64,
    /// Reuse previously computed grid points from `output.cache_dir`.
    pub cache: bool,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection {
            probe_min_mhz: -60.0,
            probe_max_mhz: 60.0,
            probe_points: 601,
            dr_min_mhz: -30.0,
            dr_max_mhz: 30.0,
            dr_points: 61,
            dc_min_mhz: -30.0,
            dc_max_mhz: 30.0,
            dc_points: 61,
            od_values: vec![2.0, 4.0, 8.0, 16.0, 32.0],
            od_ref: 1.0,
            g_ref_mhz: 22.35,
            od_dr_points: 241,
            od_span_factor: 1.5,
            cache: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitModelKind {
    Efficiency,
    Reflectance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    /// Unit weights, or the CSV weight column when present.
    Uniform,
    /// Weights ∝ 1/y.
    Poissonian,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bounds {
    pub initial: f64,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitSection {
    pub model: FitModelKind,
    /// CSV with columns `x_MHz,y[,weight]`.
    pub observations: Option<PathBuf>,
    pub weighting: Weighting,
    /// Free parameters; defaults to all parameters of the model.
    pub free: Option<Vec<String>>,
    pub max_iterations: usize,
    #[serde(rename = "g_MHz")]
    pub g_mhz: Bounds,
    #[serde(rename = "rabi_MHz")]
    pub rabi_mhz: Bounds,
    #[serde(rename = "delta_c_MHz")]
    pub delta_c_mhz: Bounds,
    pub atom_number: Bounds,
}

impl Default for FitSection {
    fn default() -> Self {
        FitSection {
            model: FitModelKind::Efficiency,
            observations: None,
            weighting: Weighting::Uniform,
            free: None,
            max_iterations: 100,
            g_mhz: Bounds {
                initial: 15.0,
                lower: 1.0,
                upper: 60.0,
            },
            rabi_mhz: Bounds {
                initial: 5.0,
                lower: 0.1,
                upper: 30.0,
            },
            delta_c_mhz: Bounds {
                initial: 0.0,
                lower: -30.0,
                upper: 30.0,
            },
            atom_number: Bounds {
                initial: 1e5,
                lower: 0.0,
                upper: 1e7,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StatsSection {
    /// Mean excitation number µ per trial.
    pub mu: f64,
    pub chi_true: f64,
    pub eta_esc: f64,
    pub eta_t: f64,
    pub eta_d: f64,
    pub write_efficiency: f64,
    pub dark_count: f64,
    pub trials: u64,
    pub background_trials: Option<u64>,
    pub seed: u64,
    /// Input of `stats`: an event file or a JSON detection record.
    pub events: Option<PathBuf>,
}

impl Default for StatsSection {
    fn default() -> Self {
        StatsSection {
            mu: 0.02,
            chi_true: 0.75,
            eta_esc: 0.56,
            eta_t: 0.53,
            eta_d: 0.45,
            write_efficiency: 0.5,
            dark_count: 1e-5,
            trials: 1_000_000,
            background_trials: None,
            seed: DEFAULT_SEED,
            events: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: PathBuf,
    /// Grid-point cache; `<dir>/cache` when absent.
    pub cache_dir: Option<PathBuf>,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            dir: PathBuf::from("out"),
            cache_dir: None,
        }
    }
}

fn mhz(v: f64) -> AngularFrequency {
    AngularFrequency::from_mhz(v)
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<AngularFrequency> {
    probe_grid(mhz(lo), mhz(hi), n)
}

impl RunConfig {
    pub fn geometry(&self) -> CavityGeometry {
        let c = &self.cavity;
        CavityGeometry {
            mirror_reflectivity: c.mirror_reflectivity,
            round_trip_loss: c.round_trip_loss,
            length_m: c.length_m,
            waist_m: c.waist_um * 1e-6,
            wavelength_m: c.wavelength_nm * 1e-9,
            dipole_moment_cm: c.dipole_moment_cm,
        }
    }

    pub fn derived(&self) -> Result<CavityDerived> {
        derive_cavity(&self.geometry())
    }

    pub fn coupling(&self) -> Result<AngularFrequency> {
        match self.system.atom_number {
            Some(n) => Ok(collective_coupling(self.derived()?.g0, n)),
            None => Ok(mhz(self.system.g_mhz)),
        }
    }

    fn rates(&self) -> Result<(AngularFrequency, AngularFrequency)> {
        let s = &self.system;
        if let (Some(k), Some(k0)) = (s.kappa_mhz, s.kappa0_mhz) {
            return Ok((mhz(k), mhz(k0)));
        }
        let d = self.derived()?;
        Ok((
            s.kappa_mhz.map(mhz).unwrap_or(d.kappa),
            s.kappa0_mhz.map(mhz).unwrap_or(d.kappa0),
        ))
    }

    pub fn two_level(&self) -> Result<TwoLevelSystemParams> {
        let (kappa, kappa0) = self.rates()?;
        let p = TwoLevelSystemParams {
            g: self.coupling()?,
            kappa,
            kappa0,
            gamma: mhz(self.system.gamma_mhz),
            delta_c: mhz(self.system.delta_c_mhz),
        };
        p.validate()?;
        Ok(p)
    }

    pub fn three_level(&self) -> Result<ThreeLevelParams> {
        let (kappa, _) = self.rates()?;
        let p = ThreeLevelParams {
            g: self.coupling()?,
            kappa,
            gamma: mhz(self.system.gamma_mhz),
            gamma_s: AngularFrequency::from_khz(self.system.gamma_s_khz),
            delta_c: mhz(self.system.delta_c_mhz),
            delta_r: mhz(self.system.delta_r_mhz),
        };
        p.validate()?;
        Ok(p)
    }

    pub fn pulse(&self) -> Result<ReadPulse> {
        let fwhm = self.pulse.fwhm_ns * 1e-3;
        let mut p = ReadPulse::centered(mhz(self.pulse.rabi_mhz), fwhm);
        if let Some(c) = self.pulse.center_us {
            p.center_us = c;
        }
        p.validate()?;
        Ok(p)
    }

    pub fn retrieval_options(&self) -> RetrievalOptions {
        RetrievalOptions {
            tolerance: self.integrator.tolerance,
            horizon_us: self.integrator.horizon_us,
            samples: self.integrator.samples,
        }
    }

    pub fn probe_grid(&self) -> Vec<AngularFrequency> {
        let s = &self.sweep;
        linspace(s.probe_min_mhz, s.probe_max_mhz, s.probe_points)
    }

    pub fn dr_grid(&self) -> Vec<AngularFrequency> {
        let s = &self.sweep;
        linspace(s.dr_min_mhz, s.dr_max_mhz, s.dr_points)
    }

    pub fn dc_grid(&self) -> Vec<AngularFrequency> {
        let s = &self.sweep;
        linspace(s.dc_min_mhz, s.dc_max_mhz, s.dc_points)
    }

    pub fn od_reference(&self) -> OdReference {
        OdReference {
            od_ref: self.sweep.od_ref,
            g_ref: mhz(self.sweep.g_ref_mhz),
        }
    }

    pub fn od_options(&self) -> OdSweepOptions {
        OdSweepOptions {
            dr_points: self.sweep.od_dr_points,
            span_factor: self.sweep.od_span_factor,
        }
    }

    pub fn cache_dir(&self) -> PathBuf {
        self.output
            .cache_dir
            .clone()
            .unwrap_or_else(|| self.output.dir.join("cache"))
    }

    pub fn chain(&self) -> Result<EfficiencyChain> {
        EfficiencyChain::new(self.stats.eta_esc, self.stats.eta_t, self.stats.eta_d)
    }

    pub fn detection_model(&self) -> Result<DetectionModel> {
        let s = &self.stats;
        let m = DetectionModel {
            mean_excitations: s.mu,
            chi_true: s.chi_true,
            chain: self.chain()?,
            write_efficiency: s.write_efficiency,
            dark_count: s.dark_count,
            background_trials: s.background_trials,
        };
        m.validate()?;
        Ok(m)
    }

    /// Forward model and free parameters (in canonical units) for `fit`.
    pub fn fit_setup(&self) -> Result<(FitModel, Vec<FreeParam>, FitOptions)> {
        let f = &self.fit;
        let (model, all): (FitModel, &[&str]) = match f.model {
            FitModelKind::Efficiency => (
                FitModel::EfficiencySpectrum {
                    base: self.three_level()?,
                    pulse: self.pulse()?,
                    retrieval: self.retrieval_options(),
                },
                &["g", "rabi", "delta_c"],
            ),
            FitModelKind::Reflectance => (
                FitModel::ReflectanceSpectrum {
                    base: self.two_level()?,
                    g0: self.derived()?.g0,
                },
                &["atom_number"],
            ),
        };
        let names: Vec<String> = match &f.free {
            Some(v) => v.clone(),
            None => all.iter().map(|s| s.to_string()).collect(),
        };
        let mut free = Vec::with_capacity(names.len());
        for name in names {
            let (b, scale) = match name.as_str() {
                "g" => (f.g_mhz, mhz(1.0).0),
                "rabi" => (f.rabi_mhz, mhz(1.0).0),
                "delta_c" => (f.delta_c_mhz, mhz(1.0).0),
                "atom_number" => (f.atom_number, 1.0),
                other => {
                    return Err(Error::Config {
                        file: PathBuf::from("<config>"),
                        line: 0,
                        key: "fit.free".into(),
                        message: format!("unknown parameter `{other}`"),
                    })
                }
            };
            free.push(FreeParam::new(
                &name,
                b.initial * scale,
                b.lower * scale,
                b.upper * scale,
            ));
        }
        let options = FitOptions {
            max_iterations: f.max_iterations,
            ..FitOptions::default()
        };
        Ok((model, free, options))
    }

    /// Effective configuration as TOML.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Loads `path` (or the defaults when `None`) and applies `section.key=value`
    /// overrides, which win over the file.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<RunConfig> {
        let (text, file) = match path {
            Some(p) => (
                std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?,
                p.to_path_buf(),
            ),
            None => (String::new(), PathBuf::from("<defaults>")),
        };
        // Parse once from text so errors can point at a line.
        toml::from_str::<RunConfig>(&text).map_err(|e| located_error(&file, &text, &e))?;
        let mut table: toml::Table = toml::from_str(&text).map_err(|e| located_error(&file, &text, &e))?;
        for ov in overrides {
            apply_override(&mut table, ov)?;
        }
        RunConfig::deserialize(toml::Value::Table(table)).map_err(|e| Error::Config {
            file: PathBuf::from("<override>"),
            line: 0,
            key: overrides.join(" "),
            message: e.message().to_string(),
        })
    }
}

fn apply_override(table: &mut toml::Table, item: &str) -> Result<()> {
    let bad = |message: &str| Error::Config {
        file: PathBuf::from("<override>"),
        line: 0,
        key: item.to_string(),
        message: message.to_string(),
    };
    let (key, raw) = item.split_once('=').ok_or_else(|| bad("expected section.key=value"))?;
    let key = key.trim();
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(bad("empty key segment"));
    }
    let value = match toml::from_str::<toml::Table>(&format!("v = {}", raw.trim())) {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.trim().to_string()),
    };
    let mut cur = table;
    for p in &parts[..parts.len() - 1] {
        cur = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(Default::default()))
            .as_table_mut()
            .ok_or_else(|| bad("not a table"))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

/// Maps a TOML error to file, 1-based line and the `section.key` it concerns.
fn located_error(file: &Path, text: &str, err: &toml::de::Error) -> Error {
    let message = err.message().to_string();
    let (line, key) = match err.span() {
        Some(span) => {
            let line = text[..span.start.min(text.len())].matches('\n').count() + 1;
            (line, key_at_line(text, line, &message))
        }
        None => (0, String::new()),
    };
    Error::Config {
        file: file.to_path_buf(),
        line,
        key,
        message,
    }
}

fn key_at_line(text: &str, line: usize, message: &str) -> String {
    let mut section = String::new();
    let mut key = String::new();
    for (i, l) in text.lines().enumerate() {
        let t = l.trim();
        if t.starts_with('[') {
            section = t.trim_matches(|c| c == '[' || c == ']').trim().to_string();
        }
        if i + 1 == line {
            if let Some((k, _)) = t.split_once('=') {
                key = k.trim().to_string();
            } else if t.starts_with('[') {
                key.clear();
            }
            break;
        }
    }
    // "unknown field `x`" names the key more precisely than the span.
    if let Some(rest) = message.strip_prefix("unknown field `") {
        if let Some(end) = rest.find('`') {
            key = rest[..end].to_string();
        }
    }
    match (section.is_empty(), key.is_empty()) {
        (true, _) => key,
        (false, true) => section,
        (false, false) => format!("{section}.{key}"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write(text: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(text.as_bytes()).unwrap();
        f
    }

    #[test]
    fn defaults_round_trip_through_toml() {
        let cfg = RunConfig::default();
        let text = cfg.to_toml();
        let back: RunConfig = toml::from_str(&text).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn unknown_key_reports_file_line_and_key() {
        let f = write("[system]\ng_MHz = 10.0\nkappa_Hz = 3.0\n");
        let err = RunConfig::load(Some(f.path()), &[]).unwrap_err();
        match err {
            Error::Config { line, key, .. } => {
                assert_eq!(line, 3);
                assert_eq!(key, "system.kappa_Hz");
            }
            other => panic!("{other}"),
        }
    }

    #[test]
    fn type_error_reports_key() {
        let f = write("[pulse]\nrabi_MHz = \"fast\"\n");
        let err = RunConfig::load(Some(f.path()), &[]).unwrap_err();
        match err {
            Error::Config { line, key, .. } => {
                assert_eq!(line, 2);
                assert_eq!(key, "pulse.rabi_MHz");
            }
            other => panic!("{other}"),
        }
    }

    #[test]
    fn overrides_win_over_file() {
        let f = write("[system]\ng_MHz = 10.0\n");
        let cfg = RunConfig::load(
            Some(f.path()),
            &["system.g_MHz=12.5".into(), "output.dir=elsewhere".into()],
        )
        .unwrap();
        assert_eq!(cfg.system.g_mhz, 12.5);
        assert_eq!(cfg.output.dir, PathBuf::from("elsewhere"));
        assert!(RunConfig::load(None, &["system.nope=1".into()]).is_err());
        assert!(RunConfig::load(None, &["novalue".into()]).is_err());
    }

    #[test]
    fn reference_derivations() {
        let cfg = RunConfig::default();
        let d = cfg.derived().unwrap();
        assert!((d.finesse - 23.5).abs() < 0.12);
        let p = cfg.three_level().unwrap();
        assert!((p.kappa.mhz() - 7.25).abs() < 1e-12);
        assert!((cfg.pulse().unwrap().fwhm_us - 0.25).abs() < 1e-15);
        let with_n = RunConfig::load(None, &["system.atom_number=4e5".into()]).unwrap();
        assert!((with_n.coupling().unwrap().mhz() - 14.6).abs() < 0.1);
    }

    #[test]
    fn fit_setup_uses_model_parameters() {
        let cfg = RunConfig::default();
        let (_, free, _) = cfg.fit_setup().unwrap();
        let names: Vec<_> = free.iter().map(|f| f.name.as_str()).collect();
        assert_eq!(names, ["g", "rabi", "delta_c"]);
        let cfg = RunConfig::load(None, &["fit.model=\"reflectance\"".into()]).unwrap();
        let (_, free, _) = cfg.fit_setup().unwrap();
        assert_eq!(free[0].name, "atom_number");
    }
}
