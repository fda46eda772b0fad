//! Command-line front end. Every subcommand reads the same [`RunConfig`],
//! writes its artifacts under `output.dir` and prints a short summary.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use crate::config::{RunConfig, Weighting, SCHEMA_VERSION};
use crate::error::{Error, Result};
use crate::fit::{fit, poissonian_weights, FitModel, FitProblem};
use crate::io::{comment_block, read_observations, read_record, write_csv, write_events, write_json};
use crate::retrieval::integrate_retrieval;
use crate::scan::{od_sweep, scan_efficiency_cached, PointCache};
use crate::spectrum::{eigenfrequencies_two_level, reflectance_curve, reflectance_minima};
use crate::stats::{simulate_trials, summarize};
use crate::units::AngularFrequency;

pub const VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), " (config schema 1)");

#[derive(Debug, Parser)]
#[command(name = "cavity-spinwave", version = VERSION, about = "Cavity-enhanced spin-wave retrieval toolkit")]
pub struct Cli {
    /// TOML run configuration; built-in defaults when omitted.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Override a config entry, e.g. `--set system.g_MHz=12`. Repeatable.
    #[arg(long = "set", global = true, value_name = "SECTION.KEY=VALUE")]
    pub overrides: Vec<String>,

    /// Worker threads for sweeps and Monte Carlo; outputs do not depend on it.
    #[arg(long, global = true, value_name = "N")]
    pub workers: Option<usize>,

    /// Print the effective configuration and exit.
    #[arg(long, global = true)]
    pub print_config: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Resonator constants and single-atom coupling from the cavity geometry.
    Derive,
    /// Probe reflectance spectrum and its minima.
    Reflectance,
    /// Read-out waveform, χ and decay budget for one parameter set.
    Retrieve(RetrieveArgs),
    /// χ over the (Δc, Δr) grid with peak loci.
    Scan,
    /// Peak splitting versus optical depth and its power-law fit.
    Odsweep,
    /// Fit an efficiency or reflectance spectrum.
    Fit {
        /// Observation CSV (`x_MHz,y[,weight]`); overrides `fit.observations`.
        #[arg(long)]
        observations: Option<PathBuf>,
    },
    /// Monte Carlo heralding/read-out click record.
    SimulateEvents {
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        trials: Option<u64>,
    },
    /// Correlators, efficiency estimate and Cauchy-Schwarz test for a record.
    Stats {
        /// Event file or JSON record; overrides `stats.events`.
        #[arg(long)]
        events: Option<PathBuf>,
    },
}

/// Flags mirroring the `[system]`, `[pulse]` and `[integrator]` entries.
#[derive(Debug, Args)]
pub struct RetrieveArgs {
    #[arg(long = "g-mhz")]
    g_mhz: Option<f64>,
    #[arg(long = "kappa-mhz")]
    kappa_mhz: Option<f64>,
    #[arg(long = "gamma-mhz")]
    gamma_mhz: Option<f64>,
    #[arg(long = "gamma-s-khz")]
    gamma_s_khz: Option<f64>,
    #[arg(long = "delta-c-mhz", allow_hyphen_values = true)]
    delta_c_mhz: Option<f64>,
    #[arg(long = "delta-r-mhz", allow_hyphen_values = true)]
    delta_r_mhz: Option<f64>,
    #[arg(long = "rabi-mhz")]
    rabi_mhz: Option<f64>,
    #[arg(long = "fwhm-ns")]
    fwhm_ns: Option<f64>,
    #[arg(long = "center-us")]
    center_us: Option<f64>,
    #[arg(long = "horizon-us")]
    horizon_us: Option<f64>,
    #[arg(long)]
    tolerance: Option<f64>,
    #[arg(long)]
    samples: Option<usize>,
}

impl RetrieveArgs {
    fn overrides(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mut push = |key: &str, v: Option<String>| {
            if let Some(v) = v {
                out.push(format!("{key}={v}"));
            }
        };
        let f = |v: Option<f64>| v.map(|x| format!("{x:?}"));
        push("system.g_MHz", f(self.g_mhz));
        push("system.kappa_MHz", f(self.kappa_mhz));
        push("system.gamma_MHz", f(self.gamma_mhz));
        push("system.gamma_s_kHz", f(self.gamma_s_khz));
        push("system.delta_c_MHz", f(self.delta_c_mhz));
        push("system.delta_r_MHz", f(self.delta_r_mhz));
        push("pulse.rabi_MHz", f(self.rabi_mhz));
        push("pulse.fwhm_ns", f(self.fwhm_ns));
        push("pulse.center_us", f(self.center_us));
        push("integrator.horizon_us", f(self.horizon_us));
        push("integrator.tolerance", f(self.tolerance));
        push("integrator.samples", self.samples.map(|s| s.to_string()));
        out
    }
}

fn path_override(key: &str, p: &Path) -> String {
    format!("{key}={}", toml::Value::String(p.display().to_string()))
}

impl Cli {
    fn effective_overrides(&self) -> Vec<String> {
        let mut out = self.overrides.clone();
        match &self.command {
            Command::Retrieve(args) => out.extend(args.overrides()),
            Command::Fit { observations: Some(p) } => out.push(path_override("fit.observations", p)),
            Command::SimulateEvents { seed, trials } => {
                if let Some(s) = seed {
                    out.push(format!("stats.seed={s}"));
                }
                if let Some(t) = trials {
                    out.push(format!("stats.trials={t}"));
                }
            }
            Command::Stats { events: Some(p) } => out.push(path_override("stats.events", p)),
            _ => {}
        }
        out
    }
}

/// Parses nothing; runs an already parsed command line.
pub fn run(cli: &Cli) -> Result<()> {
    let cfg = RunConfig::load(cli.config.as_deref(), &cli.effective_overrides())?;
    if cli.print_config {
        print!("{}", cfg.to_toml());
        return Ok(());
    }
    match cli.workers {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| Error::Config {
                    file: PathBuf::from("<flags>"),
                    line: 0,
                    key: "workers".into(),
                    message: e.to_string(),
                })?;
            pool.install(|| dispatch(&cli.command, &cfg))
        }
        None => dispatch(&cli.command, &cfg),
    }
}

fn dispatch(command: &Command, cfg: &RunConfig) -> Result<()> {
    let out = Output::new(cfg);
    match command {
        Command::Derive => derive(cfg, &out),
        Command::Reflectance => reflectance(cfg, &out),
        Command::Retrieve(_) => retrieve(cfg, &out),
        Command::Scan => scan(cfg, &out),
        Command::Odsweep => odsweep(cfg, &out),
        Command::Fit { .. } => fit_cmd(cfg, &out),
        Command::SimulateEvents { .. } => simulate(cfg, &out),
        Command::Stats { .. } => stats_cmd(cfg, &out),
    }
}

struct Output {
    dir: PathBuf,
    comments: String,
    config: Value,
}

impl Output {
    fn new(cfg: &RunConfig) -> Self {
        Output {
            dir: cfg.output.dir.clone(),
            comments: comment_block(&cfg.to_toml()),
            config: serde_json::to_value(cfg).expect("config serializes"),
        }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn json(&self, name: &str, mut body: Value) -> Result<PathBuf> {
        if let Value::Object(map) = &mut body {
            map.insert("schema_version".into(), json!(SCHEMA_VERSION));
            map.insert("config".into(), self.config.clone());
        }
        let path = self.path(name);
        write_json(&path, &body)?;
        Ok(path)
    }

    fn csv(&self, name: &str, header: &str, rows: impl IntoIterator<Item = String>) -> Result<PathBuf> {
        let path = self.path(name);
        write_csv(&path, &self.comments, header, rows)?;
        Ok(path)
    }
}

fn wrote(paths: &[PathBuf]) {
    for p in paths {
        println!("wrote {}", p.display());
    }
}

fn derive(cfg: &RunConfig, out: &Output) -> Result<()> {
    let d = cfg.derived()?;
    let g = cfg.coupling()?;
    println!("finesse F          = {:.2}", d.finesse);
    println!("free spectral range = {:.2} MHz", d.fsr_hz * 1e-6);
    println!("kappa / 2pi        = {:.3} MHz", d.kappa.mhz());
    println!("kappa0 / 2pi       = {:.3} MHz", d.kappa0.mhz());
    println!("kappa / kappa0     = {:.2}", d.kappa_ratio());
    println!("eta_esc            = {:.2}", d.escape_efficiency);
    println!("g0 / 2pi           = {:.2} kHz", d.g0.khz());
    let p = out.json(
        "derive.json",
        json!({
            "finesse": d.finesse,
            "fsr_MHz": d.fsr_hz * 1e-6,
            "kappa_MHz": d.kappa.mhz(),
            "kappa0_MHz": d.kappa0.mhz(),
            "kappa_over_kappa0": d.kappa_ratio(),
            "escape_efficiency": d.escape_efficiency,
            "g0_kHz": d.g0.khz(),
            "g_MHz": g.mhz(),
            "atom_number_for_g": crate::units::atom_number_for(g, d.g0),
        }),
    )?;
    wrote(&[p]);
    Ok(())
}

fn reflectance(cfg: &RunConfig, out: &Output) -> Result<()> {
    let params = cfg.two_level()?;
    let grid = cfg.probe_grid();
    let curve = reflectance_curve(&grid, &params)?;
    let minima = reflectance_minima(&grid, &params)?;
    let (up, down) = eigenfrequencies_two_level(params.g, params.delta_c);
    let csv = out.csv(
        "reflectance.csv",
        "probe_MHz,reflectance",
        curve
            .probe_detunings
            .iter()
            .zip(&curve.reflectance)
            .map(|(w, r)| format!("{},{}", w.mhz(), r)),
    )?;
    let json = out.json(
        "reflectance.json",
        json!({
            "minima_MHz": minima.iter().map(|m| m.mhz()).collect::<Vec<_>>(),
            "eigenfrequencies_MHz": [up.mhz(), down.mhz()],
        }),
    )?;
    println!(
        "minima at {:?} MHz; eigenfrequencies {:.3}, {:.3} MHz",
        minima.iter().map(|m| m.mhz()).collect::<Vec<_>>(),
        up.mhz(),
        down.mhz()
    );
    wrote(&[csv, json]);
    Ok(())
}

fn retrieve(cfg: &RunConfig, out: &Output) -> Result<()> {
    let params = cfg.three_level()?;
    let pulse = cfg.pulse()?;
    let r = integrate_retrieval(&params, &pulse, &cfg.retrieval_options())?;
    let csv = out.csv(
        "retrieve.csv",
        "t_us,intensity",
        r.times.iter().zip(&r.cavity_intensity).map(|(t, i)| format!("{t},{i}")),
    )?;
    let json = out.json(
        "retrieve.json",
        json!({
            "chi": r.chi,
            "budget": r.budget,
            "budget_total": r.budget.total(),
            "horizon_us": r.horizon_us,
            "steps": r.steps,
        }),
    )?;
    println!("chi = {:.6}", r.chi);
    wrote(&[csv, json]);
    Ok(())
}

fn scan(cfg: &RunConfig, out: &Output) -> Result<()> {
    let base = cfg.three_level()?;
    let pulse = cfg.pulse()?;
    let cache = cfg.sweep.cache.then(|| PointCache::new(cfg.cache_dir()));
    let grid = scan_efficiency_cached(
        &base,
        &pulse,
        &cfg.retrieval_options(),
        &cfg.dr_grid(),
        &cfg.dc_grid(),
        cache.as_ref(),
    )?;
    let rows = grid.dc_axis.iter().enumerate().flat_map(|(i, dc)| {
        let row = &grid.chi[i];
        grid.dr_axis
            .iter()
            .zip(row)
            .map(move |(dr, chi)| format!("{},{},{}", dc.mhz(), dr.mhz(), chi))
    });
    let csv = out.csv("scan.csv", "dc_MHz,dr_MHz,chi", rows)?;
    let separations: Vec<Option<f64>> = (0..grid.dc_axis.len())
        .map(|i| grid.row_splitting(i).map(|s| s.mhz()))
        .collect();
    let min_sep = separations.iter().flatten().cloned().fold(f64::INFINITY, f64::min);
    let json = out.json(
        "scan.json",
        json!({
            "dc_MHz": grid.dc_axis.iter().map(|v| v.mhz()).collect::<Vec<_>>(),
            "peak_loci_MHz": grid.peak_loci.iter().map(|row| row.iter().map(|v| v.mhz()).collect::<Vec<_>>()).collect::<Vec<_>>(),
            "peak_separation_MHz": separations,
            "eigen_overlay_MHz": grid.eigen_overlay.iter().map(|(u, d)| [u.mhz(), d.mhz()]).collect::<Vec<_>>(),
            "max_chi": grid.chi.iter().flatten().cloned().fold(0.0, f64::max),
            "min_peak_separation_MHz": min_sep.is_finite().then_some(min_sep),
        }),
    )?;
    wrote(&[csv, json]);
    Ok(())
}

fn odsweep(cfg: &RunConfig, out: &Output) -> Result<()> {
    let r = od_sweep(
        &cfg.three_level()?,
        &cfg.pulse()?,
        &cfg.retrieval_options(),
        &cfg.sweep.od_values,
        cfg.od_reference(),
        &cfg.od_options(),
    )?;
    let csv = out.csv(
        "odsweep.csv",
        "od,splitting_MHz",
        r.od_values.iter().zip(&r.splittings).map(|(od, s)| match s {
            Some(s) => format!("{od},{}", s.mhz()),
            None => format!("{od},"),
        }),
    )?;
    let f = &r.fit;
    let mhz_ci = f
        .amplitude_ci95
        .map(|(lo, hi)| [AngularFrequency(lo).mhz(), AngularFrequency(hi).mhz()]);
    let json = out.json(
        "odsweep.json",
        json!({
            "od": r.od_values,
            "g_MHz": r.couplings.iter().map(|g| g.mhz()).collect::<Vec<_>>(),
            "splitting_MHz": r.splittings.iter().map(|s| s.map(|s| s.mhz())).collect::<Vec<_>>(),
            "unresolved_od": r.unresolved(),
            "fit": {
                "amplitude_MHz": f.amplitude.mhz(),
                "amplitude_ci95_MHz": mhz_ci,
                "exponent": f.exponent,
                "exponent_ci95": f.exponent_ci95,
                "points_used": f.points_used,
            },
        }),
    )?;
    println!("splitting ~ OD^{:.3}", f.exponent);
    wrote(&[csv, json]);
    Ok(())
}

fn fit_cmd(cfg: &RunConfig, out: &Output) -> Result<()> {
    let path = cfg.fit.observations.as_ref().ok_or_else(|| Error::Config {
        file: PathBuf::from("<config>"),
        line: 0,
        key: "fit.observations".into(),
        message: "no observation file given (set it or pass --observations)".into(),
    })?;
    let mut observations = read_observations(path)?;
    if cfg.fit.weighting == Weighting::Poissonian {
        poissonian_weights(&mut observations, 1e-6);
    }
    let (model, free, options) = cfg.fit_setup()?;
    let display = |name: &str, v: f64| match name {
        "atom_number" => v,
        _ => AngularFrequency(v).mhz(),
    };
    let model_name = match model {
        FitModel::EfficiencySpectrum { .. } => "efficiency",
        FitModel::ReflectanceSpectrum { .. } => "reflectance",
    };
    let problem = FitProblem {
        observations,
        model,
        free,
        options,
    };
    let report = fit(&problem)?;
    let estimates: Vec<Value> = report
        .estimates
        .iter()
        .map(|e| {
            let unit = if e.name == "atom_number" { "" } else { "MHz" };
            println!(
                "{:<12} = {} (95% CI {} .. {}) {unit}",
                e.name,
                display(&e.name, e.value),
                display(&e.name, e.ci95.0),
                display(&e.name, e.ci95.1)
            );
            json!({
                "name": e.name,
                "unit": unit,
                "value": display(&e.name, e.value),
                "std_error": display(&e.name, e.std_error),
                "ci95": [display(&e.name, e.ci95.0), display(&e.name, e.ci95.1)],
            })
        })
        .collect();
    let json = out.json(
        "fit.json",
        json!({
            "model": model_name,
            "estimates": estimates,
            "residual_rms": report.residual_rms,
            "iterations": report.iterations,
            "converged": report.converged,
            "cost_trace": report.cost_trace,
        }),
    )?;
    wrote(&[json]);
    Ok(())
}

fn simulate(cfg: &RunConfig, out: &Output) -> Result<()> {
    let model = cfg.detection_model()?;
    let seed = cfg.stats.seed;
    let (events, record) = simulate_trials(&model, cfg.stats.trials, seed)?;
    let path = out.path("events.txt");
    write_events(&path, &out.comments, seed, &record, &events)?;
    let json = out.json("events.json", json!({ "seed": seed, "record": record }))?;
    println!(
        "seed = {seed}, trials = {}, heralds = {}",
        record.trials,
        record.heralds()
    );
    wrote(&[path, json]);
    Ok(())
}

fn stats_cmd(cfg: &RunConfig, out: &Output) -> Result<()> {
    let path = cfg
        .stats
        .events
        .clone()
        .unwrap_or_else(|| cfg.output.dir.join("events.txt"));
    let record = read_record(&path)?;
    let summary = summarize(&record, &cfg.chain()?)?;
    let chi = summary.chi_estimate.chi;
    println!("g2_wr = {:.3} +- {:.3}", summary.g2_wr.value, summary.g2_wr.error);
    println!("chi   = {:.3} +- {:.3}", chi.value, chi.error);
    match summary.cauchy_schwarz {
        Some(cs) => println!(
            "Cauchy-Schwarz bound {:.3}, nonclassical: {}",
            cs.bound, cs.nonclassical
        ),
        None => println!("Cauchy-Schwarz test undefined: no same-field pairs recorded"),
    }
    let json = out.json(
        "stats.json",
        json!({
            "input": path.display().to_string(),
            "summary": summary,
        }),
    )?;
    wrote(&[json]);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn command_line_is_well_formed() {
        Cli::command().debug_assert();
    }

    #[test]
    fn version_names_schema() {
        assert!(VERSION.contains(&format!("config schema {SCHEMA_VERSION}")));
    }

    #[test]
    fn retrieve_flags_become_overrides() {
        let cli = Cli::parse_from([
            "cavity-spinwave",
            "retrieve",
            "--g-mhz",
            "12",
            "--delta-c-mhz",
            "-3.5",
            "--set",
            "system.g_MHz=1",
        ]);
        let cfg = RunConfig::load(None, &cli.effective_overrides()).unwrap();
        assert_eq!(cfg.system.g_mhz, 12.0);
        assert_eq!(cfg.system.delta_c_mhz, -3.5);
    }

    #[test]
    fn unknown_subcommand_is_rejected() {
        assert!(Cli::try_parse_from(["cavity-spinwave", "frobnicate"]).is_err());
        assert!(Cli::try_parse_from(["cavity-spinwave"]).is_err());
    }
}
