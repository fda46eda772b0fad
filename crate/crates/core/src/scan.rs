//! Conversion-efficiency spectra over (Δc, Δr) grids, peak extraction and the
//! optical-depth scaling of the peak splitting.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::retrieval::{dressed_eigenfrequencies, retrieval_efficiency, ReadPulse, RetrievalOptions, ThreeLevelParams};
use crate::units::AngularFrequency;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumGrid {
    pub dr_axis: Vec<AngularFrequency>,
    pub dc_axis: Vec<AngularFrequency>,
    /// `chi[i][j]` is χ at (dc_axis[i], dr_axis[j]).
    pub chi: Vec<Vec<f64>>,
    /// Up to two refined efficiency maxima per Δc row, in ascending Δr.
    pub peak_loci: Vec<Vec<AngularFrequency>>,
    /// Dressed eigenfrequencies (Δ₊, Δ₋) for each Δc, using δ = Δc.
    pub eigen_overlay: Vec<(AngularFrequency, AngularFrequency)>,
}

impl SpectrumGrid {
    /// Separation of the two peak loci in row `i`, if both are resolved.
    pub fn row_splitting(&self, i: usize) -> Option<AngularFrequency> {
        match self.peak_loci[i].as_slice() {
            [lo, hi] => Some(*hi - *lo),
            _ => None,
        }
    }
}

fn check_axis(name: &str, axis: &[AngularFrequency]) -> Result<()> {
    if axis.is_empty() {
        return Err(Error::InvalidGrid(format!("{name} axis is empty")));
    }
    if axis.iter().any(|v| !v.0.is_finite()) {
        return Err(Error::InvalidGrid(format!("{name} axis has non-finite values")));
    }
    let increasing = axis.windows(2).all(|w| w[1].0 > w[0].0);
    let decreasing = axis.windows(2).all(|w| w[1].0 < w[0].0);
    if !(increasing || decreasing) {
        return Err(Error::InvalidGrid(format!("{name} axis is not strictly monotone")));
    }
    Ok(())
}

/// Disk cache of χ values keyed by a content hash of everything except the
/// two detunings, so repeated scans reuse grid points.
#[derive(Debug, Clone)]
pub struct PointCache {
    dir: PathBuf,
}

type PointKey = (u64, u64);

impl PointCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        PointCache { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn key(base: &ThreeLevelParams, pulse: &ReadPulse, options: &RetrievalOptions) -> String {
        let mut h = Sha256::new();
        let fields = [
            base.g.0,
            base.kappa.0,
            base.gamma.0,
            base.gamma_s.0,
            pulse.peak_rabi.0,
            pulse.center_us,
            pulse.fwhm_us,
            options.tolerance,
            options.horizon_us.unwrap_or(f64::NAN),
        ];
        h.update(b"chi-v1");
        for f in fields {
            h.update(f.to_bits().to_le_bytes());
        }
        hex::encode(h.finalize())
    }

    fn path(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.chi"))
    }

    fn load(&self, key: &str) -> Result<BTreeMap<PointKey, f64>> {
        let path = self.path(key);
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(BTreeMap::new()),
            Err(e) => return Err(Error::io(path, e)),
        };
        let mut map = BTreeMap::new();
        for (n, line) in text.lines().enumerate() {
            let parts: Vec<_> = line.split_whitespace().collect();
            let parsed = match parts.as_slice() {
                [dc, dr, chi] => u64::from_str_radix(dc, 16)
                    .and_then(|dc| Ok((dc, u64::from_str_radix(dr, 16)?, u64::from_str_radix(chi, 16)?))),
                _ => {
                    return Err(Error::Parse {
                        file: path.clone(),
                        line: n + 1,
                        message: "expected three hex fields".into(),
                    })
                }
            };
            let (dc, dr, chi) = parsed.map_err(|e| Error::Parse {
                file: path.clone(),
                line: n + 1,
                message: e.to_string(),
            })?;
            map.insert((dc, dr), f64::from_bits(chi));
        }
        Ok(map)
    }

    fn store(&self, key: &str, map: &BTreeMap<PointKey, f64>) -> Result<()> {
        fs::create_dir_all(&self.dir).map_err(|e| Error::io(&self.dir, e))?;
        let mut out = String::with_capacity(map.len() * 52);
        for ((dc, dr), chi) in map {
            out.push_str(&format!("{dc:016x} {dr:016x} {:016x}\n", chi.to_bits()));
        }
        let path = self.path(key);
        fs::write(&path, out).map_err(|e| Error::io(path, e))
    }
}

/// χ over the outer product `dc_grid × dr_grid`.
pub fn scan_efficiency(
    base: &ThreeLevelParams,
    pulse: &ReadPulse,
    options: &RetrievalOptions,
    dr_grid: &[AngularFrequency],
    dc_grid: &[AngularFrequency],
) -> Result<SpectrumGrid> {
    scan_efficiency_cached(base, pulse, options, dr_grid, dc_grid, None)
}

pub fn scan_efficiency_cached(
    base: &ThreeLevelParams,
    pulse: &ReadPulse,
    options: &RetrievalOptions,
    dr_grid: &[AngularFrequency],
    dc_grid: &[AngularFrequency],
    cache: Option<&PointCache>,
) -> Result<SpectrumGrid> {
    check_axis("dr", dr_grid)?;
    check_axis("dc", dc_grid)?;
    let key = PointCache::key(base, pulse, options);
    let mut known = match cache {
        Some(c) => c.load(&key)?,
        None => BTreeMap::new(),
    };

    let nr = dr_grid.len();
    let points: Vec<(usize, usize)> = (0..dc_grid.len()).flat_map(|i| (0..nr).map(move |j| (i, j))).collect();
    let values: Vec<Result<f64>> = points
        .par_iter()
        .map(|&(i, j)| {
            let (dc, dr) = (dc_grid[i], dr_grid[j]);
            if let Some(&chi) = known.get(&(dc.0.to_bits(), dr.0.to_bits())) {
                return Ok(chi);
            }
            retrieval_efficiency(&base.with_detunings(dc, dr), pulse, options).map_err(|e| Error::GridPoint {
                dc_mhz: dc.mhz(),
                dr_mhz: dr.mhz(),
                source: Box::new(e),
            })
        })
        .collect();

    let mut chi = vec![Vec::with_capacity(nr); dc_grid.len()];
    for (&(i, j), v) in points.iter().zip(values) {
        let v = v?;
        known.insert((dc_grid[i].0.to_bits(), dr_grid[j].0.to_bits()), v);
        chi[i].push(v);
    }
    if let Some(c) = cache {
        c.store(&key, &known)?;
    }

    let peak_loci = chi.iter().map(|row| peak_positions(row, dr_grid, 2)).collect();
    let eigen_overlay = dc_grid
        .iter()
        .map(|&dc| dressed_eigenfrequencies(base.g, pulse.peak_rabi, dc))
        .collect();
    Ok(SpectrumGrid {
        dr_axis: dr_grid.to_vec(),
        dc_axis: dc_grid.to_vec(),
        chi,
        peak_loci,
        eigen_overlay,
    })
}

/// Indices of interior local maxima; a flat top counts once at its left end.
fn interior_maxima(row: &[f64]) -> Vec<usize> {
    (1..row.len().saturating_sub(1))
        .filter(|&i| row[i] > row[i - 1] && row[i] >= row[i + 1])
        .collect()
}

/// Vertex of the parabola through three points.
fn parabola_vertex(x: [f64; 3], y: [f64; 3]) -> f64 {
    let (d0, d2) = (x[1] - x[0], x[1] - x[2]);
    let num = d0 * d0 * (y[1] - y[2]) - d2 * d2 * (y[1] - y[0]);
    let den = d0 * (y[1] - y[2]) - d2 * (y[1] - y[0]);
    if den == 0.0 {
        x[1]
    } else {
        (x[1] - 0.5 * num / den).clamp(x[0].min(x[2]), x[0].max(x[2]))
    }
}

/// The `max_peaks` tallest interior maxima, refined and sorted by position.
fn peak_positions(row: &[f64], axis: &[AngularFrequency], max_peaks: usize) -> Vec<AngularFrequency> {
    let mut idx = interior_maxima(row);
    idx.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b)));
    idx.truncate(max_peaks);
    let mut peaks: Vec<AngularFrequency> = idx
        .into_iter()
        .map(|i| {
            AngularFrequency(parabola_vertex(
                [axis[i - 1].0, axis[i].0, axis[i + 1].0],
                [row[i - 1], row[i], row[i + 1]],
            ))
        })
        .collect();
    peaks.sort_by(|a, b| a.0.total_cmp(&b.0));
    peaks
}

/// Separation of the two largest interior maxima of `chi_row`, each refined
/// by a three-point parabola.
pub fn extract_splitting(chi_row: &[f64], dr_axis: &[AngularFrequency]) -> Result<AngularFrequency> {
    if chi_row.len() != dr_axis.len() {
        return Err(Error::InvalidGrid(format!(
            "row has {} values but axis has {}",
            chi_row.len(),
            dr_axis.len()
        )));
    }
    if chi_row.len() < 5 {
        return Err(Error::InvalidGrid(format!(
            "need at least 5 points, got {}",
            chi_row.len()
        )));
    }
    check_axis("dr", dr_axis)?;
    let found = interior_maxima(chi_row).len();
    match peak_positions(chi_row, dr_axis, 2).as_slice() {
        [lo, hi] => Ok(*hi - *lo),
        _ => Err(Error::UnresolvedSplitting { found }),
    }
}

/// Maps optical depth to coupling: g(OD) = g_ref·√(OD/OD_ref).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OdReference {
    pub od_ref: f64,
    pub g_ref: AngularFrequency,
}

impl OdReference {
    pub fn coupling(&self, od: f64) -> AngularFrequency {
        self.g_ref.sqrt_scaled(od / self.od_ref)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OdSweepOptions {
    /// Points in the symmetric Δr row (forced odd).
    pub dr_points: usize,
    /// Row half-width = span_factor·g + 2π·10 MHz.
    pub span_factor: f64,
}

impl Default for OdSweepOptions {
    fn default() -> Self {
        OdSweepOptions {
            dr_points: 241,
            span_factor: 1.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    /// Splitting at OD = 1.
    pub amplitude: AngularFrequency,
    pub exponent: f64,
    /// 95 % interval for the amplitude, rad/µs; `None` with no residual dof.
    pub amplitude_ci95: Option<(f64, f64)>,
    pub exponent_ci95: Option<(f64, f64)>,
    pub points_used: usize,
}

/// Least-squares fit of ln y = ln A + β ln x.
pub fn fit_power_law(x: &[f64], y: &[f64]) -> Result<PowerLawFit> {
    let pts: Vec<(f64, f64)> = x
        .iter()
        .zip(y)
        .filter(|(a, b)| **a > 0.0 && **b > 0.0)
        .map(|(a, b)| (a.ln(), b.ln()))
        .collect();
    let n = pts.len();
    if n < 2 {
        return Err(Error::Underdetermined(format!(
            "power-law fit needs at least 2 resolved points, got {n}"
        )));
    }
    let nf = n as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / nf;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / nf;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx <= 0.0 {
        return Err(Error::Underdetermined("all abscissas are equal".into()));
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;

    let (amplitude_ci95, exponent_ci95) = if n > 2 {
        let dof = nf - 2.0;
        let ssr: f64 = pts.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
        let s2 = ssr / dof;
        let t = StudentsT::new(0.0, 1.0, dof)
            .map_err(|e| Error::Underdetermined(e.to_string()))?
            .inverse_cdf(0.975);
        let se_slope = (s2 / sxx).sqrt();
        let se_int = (s2 * (1.0 / nf + mx * mx / sxx)).sqrt();
        (
            Some(((intercept - t * se_int).exp(), (intercept + t * se_int).exp())),
            Some((slope - t * se_slope, slope + t * se_slope)),
        )
    } else {
        (None, None)
    };

    Ok(PowerLawFit {
        amplitude: AngularFrequency(intercept.exp()),
        exponent: slope,
        amplitude_ci95,
        exponent_ci95,
        points_used: n,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OdSweepResult {
    pub od_values: Vec<f64>,
    pub couplings: Vec<AngularFrequency>,
    /// Peak splitting at Δc = 0, `None` where the two peaks are unresolved.
    pub splittings: Vec<Option<AngularFrequency>>,
    pub fit: PowerLawFit,
}

impl OdSweepResult {
    pub fn unresolved(&self) -> Vec<f64> {
        self.od_values
            .iter()
            .zip(&self.splittings)
            .filter(|(_, s)| s.is_none())
            .map(|(od, _)| *od)
            .collect()
    }
}

/// Symmetric Δr row used for one OD value.
pub fn od_row(g: AngularFrequency, options: &OdSweepOptions) -> Vec<AngularFrequency> {
    let n = options.dr_points.max(5) | 1;
    let half = g.0 * options.span_factor + AngularFrequency::from_mhz(10.0).0;
    (0..n)
        .map(|i| AngularFrequency(-half + 2.0 * half * i as f64 / (n - 1) as f64))
        .collect()
}

/// Peak splitting at Δc = 0 for each OD and a power-law fit of splitting
/// against OD. Unresolved splittings are kept as `None` and left out of the
/// fit.
pub fn od_sweep(
    base: &ThreeLevelParams,
    pulse: &ReadPulse,
    options: &RetrievalOptions,
    od_values: &[f64],
    reference: OdReference,
    sweep: &OdSweepOptions,
) -> Result<OdSweepResult> {
    if od_values.is_empty() {
        return Err(Error::Underdetermined("no OD values".into()));
    }
    if od_values.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
        return Err(Error::InvalidGrid("OD values must be positive".into()));
    }
    if od_values.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidGrid("OD values must be strictly increasing".into()));
    }
    if !(reference.od_ref > 0.0 && reference.g_ref.0 > 0.0) {
        return Err(Error::param("od_reference", "OD_ref and g_ref must be positive"));
    }

    let couplings: Vec<AngularFrequency> = od_values.iter().map(|&od| reference.coupling(od)).collect();
    let rows: Vec<Vec<AngularFrequency>> = couplings.iter().map(|&g| od_row(g, sweep)).collect();
    let points: Vec<(usize, usize)> = rows
        .iter()
        .enumerate()
        .flat_map(|(k, row)| (0..row.len()).map(move |j| (k, j)))
        .collect();
    let values: Vec<Result<f64>> = points
        .par_iter()
        .map(|&(k, j)| {
            let params = ThreeLevelParams {
                g: couplings[k],
                ..base.with_detunings(AngularFrequency::ZERO, rows[k][j])
            };
            retrieval_efficiency(&params, pulse, options).map_err(|e| Error::GridPoint {
                dc_mhz: 0.0,
                dr_mhz: rows[k][j].mhz(),
                source: Box::new(e),
            })
        })
        .collect();
    let mut chi: Vec<Vec<f64>> = rows.iter().map(|r| Vec::with_capacity(r.len())).collect();
    for (&(k, _), v) in points.iter().zip(values) {
        chi[k].push(v?);
    }

    let mut splittings = Vec::with_capacity(od_values.len());
    for (row, axis) in chi.iter().zip(&rows) {
        match extract_splitting(row, axis) {
            Ok(s) => splittings.push(Some(s)),
            Err(Error::UnresolvedSplitting { .. }) => splittings.push(None),
            Err(e) => return Err(e),
        }
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = od_values
        .iter()
        .zip(&splittings)
        .filter_map(|(od, s)| s.map(|s| (*od, s.0)))
        .unzip();
    let fit = fit_power_law(&xs, &ys)?;
    Ok(OdSweepResult {
        od_values: od_values.to_vec(),
        couplings,
        splittings,
        fit,
    })
}
