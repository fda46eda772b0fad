//! C ABI over the `cavity_spinwave` library.
//!
//! Conventions:
//! - Frequencies cross the boundary as ordinary frequencies in MHz; times in µs.
//! - Every fallible call returns a [`CswStatus`]. On failure the message is
//!   kept per thread and read with [`csw_last_error_message`].
//! - Results that own memory are opaque handles released by their `_free`
//!   function. Passing NULL to a `_free` function is a no-op.
//! - Panics never cross the boundary; they surface as `CSW_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use cavity_spinwave::retrieval::{integrate_retrieval, ReadPulse, RetrievalOptions, RetrievalResult, ThreeLevelParams};
use cavity_spinwave::scan::scan_efficiency;
use cavity_spinwave::spectrum::{reflectance, TwoLevelSystemParams};
use cavity_spinwave::stats::{
    simulate_detection_events, summarize, DetectionModel, DetectionRecord, EfficiencyChain, Measured,
};
use cavity_spinwave::units::{derive_cavity, CavityGeometry};
use cavity_spinwave::{AngularFrequency, Error};

/// Outcome of a call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CswStatus {
    Ok = 0,
    /// A required pointer argument was NULL.
    NullArgument = 1,
    /// A parameter, grid or record failed validation.
    InvalidArgument = 2,
    /// The integrator or a linear solve failed.
    Numerical = 3,
    /// A correlator or correction has a zero or negative denominator.
    Undefined = 4,
    /// A caller-provided buffer has the wrong length.
    BufferSize = 5,
    Panic = 6,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> CswStatus {
    match err {
        Error::GridPoint { source, .. } => status_of(source),
        Error::NonFinite { .. } | Error::StepLimit { .. } | Error::RankDeficient { .. } => CswStatus::Numerical,
        Error::UndefinedCorrelator(_) | Error::NoiseDominated { .. } => CswStatus::Undefined,
        _ => CswStatus::InvalidArgument,
    }
}

fn fail(status: CswStatus, message: impl Into<String>) -> CswStatus {
    set_last_error(message.into());
    status
}

/// Runs `body`, translating errors and panics into a status.
fn guard(body: impl FnOnce() -> Result<(), CswStatus>) -> CswStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => CswStatus::Ok,
        Ok(Err(status)) => status,
        Err(panic) => {
            let msg = panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "unknown panic".into());
            fail(CswStatus::Panic, format!("panic: {msg}"))
        }
    }
}

trait IntoStatus<T> {
    fn status(self) -> Result<T, CswStatus>;
}

impl<T> IntoStatus<T> for cavity_spinwave::Result<T> {
    fn status(self) -> Result<T, CswStatus> {
        self.map_err(|e| fail(status_of(&e), e.to_string()))
    }
}

fn non_null<'a, T>(p: *const T, name: &str) -> Result<&'a T, CswStatus> {
    // SAFETY: the caller guarantees a non-NULL pointer refers to a valid `T`.
    unsafe { p.as_ref() }.ok_or_else(|| fail(CswStatus::NullArgument, format!("`{name}` is NULL")))
}

fn non_null_mut<'a, T>(p: *mut T, name: &str) -> Result<&'a mut T, CswStatus> {
    // SAFETY: as for `non_null`, with exclusive access.
    unsafe { p.as_mut() }.ok_or_else(|| fail(CswStatus::NullArgument, format!("`{name}` is NULL")))
}

fn slice<'a>(p: *const f64, len: usize, name: &str) -> Result<&'a [f64], CswStatus> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(fail(CswStatus::NullArgument, format!("`{name}` is NULL")));
    }
    // SAFETY: the caller guarantees `len` readable elements.
    Ok(unsafe { std::slice::from_raw_parts(p, len) })
}

fn slice_mut<'a, T>(p: *mut T, len: usize, name: &str) -> Result<&'a mut [T], CswStatus> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(fail(CswStatus::NullArgument, format!("`{name}` is NULL")));
    }
    // SAFETY: the caller guarantees `len` writable elements.
    Ok(unsafe { std::slice::from_raw_parts_mut(p, len) })
}

fn mhz(x: f64) -> AngularFrequency {
    AngularFrequency::from_mhz(x)
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn csw_version() -> *const c_char {
    static VERSION: &CStr = c"0.1.0";
    VERSION.as_ptr()
}

/// Copies the calling thread's last error message into `buf`, truncating to
/// `len - 1` bytes plus NUL. Returns the full message length including NUL,
/// or 0 if no error has been recorded. `buf` may be NULL to query the length.
///
/// # Safety
/// `buf` must be NULL or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn csw_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let Some(msg) = e.as_ref() else { return 0 };
        let bytes = msg.as_bytes_with_nul();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len) - 1;
            // SAFETY: `buf` holds `len > n` bytes.
            unsafe {
                ptr::copy_nonoverlapping(bytes.as_ptr().cast::<c_char>(), buf, n);
                *buf.add(n) = 0;
            }
        }
        bytes.len()
    })
}

/// Clears the calling thread's last error.
#[no_mangle]
pub extern "C" fn csw_clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

/// Resonator description.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CswCavityGeometry {
    pub mirror_reflectivity: f64,
    pub round_trip_loss: f64,
    pub length_m: f64,
    pub waist_m: f64,
    pub wavelength_m: f64,
    /// Transition dipole moment in C·m.
    pub dipole_moment_cm: f64,
}

impl From<CswCavityGeometry> for CavityGeometry {
    fn from(g: CswCavityGeometry) -> Self {
        CavityGeometry {
            mirror_reflectivity: g.mirror_reflectivity,
            round_trip_loss: g.round_trip_loss,
            length_m: g.length_m,
            waist_m: g.waist_m,
            wavelength_m: g.wavelength_m,
            dipole_moment_cm: g.dipole_moment_cm,
        }
    }
}

/// Derived resonator constants. Linewidths are half-widths in MHz.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CswCavityDerived {
    pub finesse: f64,
    pub fsr_mhz: f64,
    pub kappa_mhz: f64,
    pub kappa0_mhz: f64,
    pub escape_efficiency: f64,
}

/// Writes the reference resonator into `out`.
///
/// # Safety
/// `out` must be NULL or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn csw_cavity_reference(out: *mut CswCavityGeometry) -> CswStatus {
    guard(|| {
        let out = non_null_mut(out, "out")?;
        let g = CavityGeometry::reference();
        *out = CswCavityGeometry {
            mirror_reflectivity: g.mirror_reflectivity,
            round_trip_loss: g.round_trip_loss,
            length_m: g.length_m,
            waist_m: g.waist_m,
            wavelength_m: g.wavelength_m,
            dipole_moment_cm: g.dipole_moment_cm,
        };
        Ok(())
    })
}

/// # Safety
/// `geometry` must be NULL or valid for reads; `out` NULL or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn csw_derive_cavity(
    geometry: *const CswCavityGeometry,
    out: *mut CswCavityDerived,
) -> CswStatus {
    guard(|| {
        let geometry = *non_null(geometry, "geometry")?;
        let out = non_null_mut(out, "out")?;
        let d = derive_cavity(&geometry.into()).status()?;
        *out = CswCavityDerived {
            finesse: d.finesse,
            fsr_mhz: d.fsr_hz * 1e-6,
            kappa_mhz: d.kappa.mhz(),
            kappa0_mhz: d.kappa0.mhz(),
            escape_efficiency: d.escape_efficiency,
        };
        Ok(())
    })
}

/// Two-level probe response parameters, in MHz.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CswTwoLevelParams {
    pub g_mhz: f64,
    pub kappa_mhz: f64,
    pub kappa0_mhz: f64,
    pub gamma_mhz: f64,
    pub delta_c_mhz: f64,
}

/// Reflectance at `len` probe offsets (MHz from the atomic resonance).
///
/// # Safety
/// `probe_mhz` and `out` must each hold `len` elements; `params` must be valid.
#[no_mangle]
pub unsafe extern "C" fn csw_reflectance(
    params: *const CswTwoLevelParams,
    probe_mhz: *const f64,
    out: *mut f64,
    len: usize,
) -> CswStatus {
    guard(|| {
        let p = non_null(params, "params")?;
        let p = TwoLevelSystemParams {
            g: mhz(p.g_mhz),
            kappa: mhz(p.kappa_mhz),
            kappa0: mhz(p.kappa0_mhz),
            gamma: mhz(p.gamma_mhz),
            delta_c: mhz(p.delta_c_mhz),
        };
        p.validate().status()?;
        let probe = slice(probe_mhz, len, "probe_mhz")?;
        let out = slice_mut(out, len, "out")?;
        for (o, &x) in out.iter_mut().zip(probe) {
            *o = reflectance(mhz(x), &p);
        }
        Ok(())
    })
}

/// Three-level read-out parameters. `gamma_s_mhz` is the spin-wave decay.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CswThreeLevelParams {
    pub g_mhz: f64,
    pub kappa_mhz: f64,
    pub gamma_mhz: f64,
    pub gamma_s_mhz: f64,
    pub delta_c_mhz: f64,
    pub delta_r_mhz: f64,
}

impl From<CswThreeLevelParams> for ThreeLevelParams {
    fn from(p: CswThreeLevelParams) -> Self {
        ThreeLevelParams {
            g: mhz(p.g_mhz),
            kappa: mhz(p.kappa_mhz),
            gamma: mhz(p.gamma_mhz),
            gamma_s: mhz(p.gamma_s_mhz),
            delta_c: mhz(p.delta_c_mhz),
            delta_r: mhz(p.delta_r_mhz),
        }
    }
}

/// Gaussian read pulse.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CswReadPulse {
    pub peak_rabi_mhz: f64,
    pub center_us: f64,
    pub fwhm_us: f64,
}

impl From<CswReadPulse> for ReadPulse {
    fn from(p: CswReadPulse) -> Self {
        ReadPulse {
            peak_rabi: mhz(p.peak_rabi_mhz),
            center_us: p.center_us,
            fwhm_us: p.fwhm_us,
        }
    }
}

/// Integrator settings. A non-positive `horizon_us` selects the default.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CswRetrievalOptions {
    pub tolerance: f64,
    pub horizon_us: f64,
    pub samples: usize,
}

impl From<CswRetrievalOptions> for RetrievalOptions {
    fn from(o: CswRetrievalOptions) -> Self {
        RetrievalOptions {
            tolerance: o.tolerance,
            horizon_us: (o.horizon_us > 0.0).then_some(o.horizon_us),
            samples: o.samples,
        }
    }
}

/// # Safety
/// `out` must be NULL or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn csw_reference_params(out: *mut CswThreeLevelParams) -> CswStatus {
    guard(|| {
        let p = cavity_spinwave::retrieval::reference_params();
        *non_null_mut(out, "out")? = CswThreeLevelParams {
            g_mhz: p.g.mhz(),
            kappa_mhz: p.kappa.mhz(),
            gamma_mhz: p.gamma.mhz(),
            gamma_s_mhz: p.gamma_s.mhz(),
            delta_c_mhz: p.delta_c.mhz(),
            delta_r_mhz: p.delta_r.mhz(),
        };
        Ok(())
    })
}

/// # Safety
/// `out` must be NULL or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn csw_reference_pulse(out: *mut CswReadPulse) -> CswStatus {
    guard(|| {
        let p = cavity_spinwave::retrieval::reference_pulse();
        *non_null_mut(out, "out")? = CswReadPulse {
            peak_rabi_mhz: p.peak_rabi.mhz(),
            center_us: p.center_us,
            fwhm_us: p.fwhm_us,
        };
        Ok(())
    })
}

/// # Safety
/// `out` must be NULL or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn csw_default_retrieval_options(out: *mut CswRetrievalOptions) -> CswStatus {
    guard(|| {
        let o = RetrievalOptions::default();
        *non_null_mut(out, "out")? = CswRetrievalOptions {
            tolerance: o.tolerance,
            horizon_us: o.horizon_us.unwrap_or(0.0),
            samples: o.samples,
        };
        Ok(())
    })
}

/// Opaque result of one read-out integration.
pub struct CswRetrieval(RetrievalResult);

/// Where the unit spin-wave excitation ended up.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CswDecayBudget {
    pub through_cavity: f64,
    pub through_atom: f64,
    pub through_spin: f64,
    pub residual_norm: f64,
}

/// Integrates the read-out of a unit spin wave. On success `*out` owns a
/// handle to release with [`csw_retrieval_free`].
///
/// # Safety
/// Input pointers must be NULL or valid for reads; `out` NULL or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn csw_retrieval_run(
    params: *const CswThreeLevelParams,
    pulse: *const CswReadPulse,
    options: *const CswRetrievalOptions,
    out: *mut *mut CswRetrieval,
) -> CswStatus {
    guard(|| {
        let params: ThreeLevelParams = (*non_null(params, "params")?).into();
        let pulse: ReadPulse = (*non_null(pulse, "pulse")?).into();
        let options: RetrievalOptions = (*non_null(options, "options")?).into();
        let out = non_null_mut(out, "out")?;
        let result = integrate_retrieval(&params, &pulse, &options).status()?;
        *out = Box::into_raw(Box::new(CswRetrieval(result)));
        Ok(())
    })
}

/// Retrieval efficiency χ, or NaN for a NULL handle.
///
/// # Safety
/// `handle` must be NULL or returned by [`csw_retrieval_run`] and not freed.
#[no_mangle]
pub unsafe extern "C" fn csw_retrieval_efficiency(handle: *const CswRetrieval) -> f64 {
    // SAFETY: per the contract above.
    unsafe { handle.as_ref() }.map_or(f64::NAN, |h| h.0.chi)
}

/// # Safety
/// `handle` as for [`csw_retrieval_efficiency`]; `out` NULL or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn csw_retrieval_budget(handle: *const CswRetrieval, out: *mut CswDecayBudget) -> CswStatus {
    guard(|| {
        let b = non_null(handle, "handle")?.0.budget;
        *non_null_mut(out, "out")? = CswDecayBudget {
            through_cavity: b.through_cavity,
            through_atom: b.through_atom,
            through_spin: b.through_spin,
            residual_norm: b.residual_norm,
        };
        Ok(())
    })
}

/// Number of waveform samples held by the handle; 0 for NULL.
///
/// # Safety
/// `handle` as for [`csw_retrieval_efficiency`].
#[no_mangle]
pub unsafe extern "C" fn csw_retrieval_sample_count(handle: *const CswRetrieval) -> usize {
    // SAFETY: per the contract above.
    unsafe { handle.as_ref() }.map_or(0, |h| h.0.times.len())
}

/// Copies the sampled waveform |a(t)|². `len` must equal the sample count.
///
/// # Safety
/// `handle` as for [`csw_retrieval_efficiency`]; `times_us` and `intensity`
/// must each hold `len` writable elements.
#[no_mangle]
pub unsafe extern "C" fn csw_retrieval_samples(
    handle: *const CswRetrieval,
    times_us: *mut f64,
    intensity: *mut f64,
    len: usize,
) -> CswStatus {
    guard(|| {
        let r = &non_null(handle, "handle")?.0;
        if len != r.times.len() {
            return Err(fail(
                CswStatus::BufferSize,
                format!("buffer length {len}, waveform has {} samples", r.times.len()),
            ));
        }
        slice_mut(times_us, len, "times_us")?.copy_from_slice(&r.times);
        slice_mut(intensity, len, "intensity")?.copy_from_slice(&r.cavity_intensity);
        Ok(())
    })
}

/// # Safety
/// `handle` must be NULL or returned by [`csw_retrieval_run`] and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn csw_retrieval_free(handle: *mut CswRetrieval) {
    if !handle.is_null() {
        // SAFETY: ownership returns from the caller.
        drop(unsafe { Box::from_raw(handle) });
    }
}

/// Efficiency over a (Δc, Δr) grid, written row-major as
/// `chi_out[i_dc * dr_len + i_dr]`. Axes are strictly monotone, in MHz.
///
/// # Safety
/// Axis pointers must hold their lengths; `chi_out` must hold
/// `dr_len * dc_len` elements; the structs must be valid for reads.
#[no_mangle]
pub unsafe extern "C" fn csw_scan_efficiency(
    params: *const CswThreeLevelParams,
    pulse: *const CswReadPulse,
    options: *const CswRetrievalOptions,
    dr_mhz: *const f64,
    dr_len: usize,
    dc_mhz: *const f64,
    dc_len: usize,
    chi_out: *mut f64,
) -> CswStatus {
    guard(|| {
        let params: ThreeLevelParams = (*non_null(params, "params")?).into();
        let pulse: ReadPulse = (*non_null(pulse, "pulse")?).into();
        let options: RetrievalOptions = (*non_null(options, "options")?).into();
        let dr: Vec<_> = slice(dr_mhz, dr_len, "dr_mhz")?.iter().map(|&x| mhz(x)).collect();
        let dc: Vec<_> = slice(dc_mhz, dc_len, "dc_mhz")?.iter().map(|&x| mhz(x)).collect();
        let total = dr_len
            .checked_mul(dc_len)
            .ok_or_else(|| fail(CswStatus::BufferSize, "grid size overflows"))?;
        let out = slice_mut(chi_out, total, "chi_out")?;
        let grid = scan_efficiency(&params, &pulse, &options, &dr, &dc).status()?;
        for (dst, row) in out.chunks_mut(dr_len.max(1)).zip(&grid.chi) {
            dst.copy_from_slice(row);
        }
        Ok(())
    })
}

/// Optical efficiencies from read photon to click.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CswEfficiencyChain {
    pub escape: f64,
    pub transmission: f64,
    pub detection: f64,
}

impl From<CswEfficiencyChain> for EfficiencyChain {
    fn from(c: CswEfficiencyChain) -> Self {
        EfficiencyChain {
            escape: c.escape,
            transmission: c.transmission,
            detection: c.detection,
        }
    }
}

/// Value with a one-sigma statistical error.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CswMeasured {
    pub value: f64,
    pub error: f64,
}

impl From<Measured> for CswMeasured {
    fn from(m: Measured) -> Self {
        CswMeasured {
            value: m.value,
            error: m.error,
        }
    }
}

/// Source model for synthetic detection records.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CswDetectionModel {
    pub mean_excitations: f64,
    pub chi_true: f64,
    pub chain: CswEfficiencyChain,
    pub write_efficiency: f64,
    pub dark_count: f64,
    /// Background gates; `UINT64_MAX` matches the trial count.
    pub background_trials: u64,
}

/// Opaque accumulated detection record.
pub struct CswDetectionRecord(DetectionRecord);

/// Simulates `trials` write/read trials. Output depends only on the model,
/// `trials` and `seed`. On success `*out` owns a handle to release with
/// [`csw_detection_record_free`].
///
/// # Safety
/// `model` must be NULL or valid for reads; `out` NULL or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn csw_detection_simulate(
    model: *const CswDetectionModel,
    trials: u64,
    seed: u64,
    out: *mut *mut CswDetectionRecord,
) -> CswStatus {
    guard(|| {
        let m = *non_null(model, "model")?;
        let out = non_null_mut(out, "out")?;
        let model = DetectionModel {
            mean_excitations: m.mean_excitations,
            chi_true: m.chi_true,
            chain: m.chain.into(),
            write_efficiency: m.write_efficiency,
            dark_count: m.dark_count,
            background_trials: (m.background_trials != u64::MAX).then_some(m.background_trials),
        };
        let record = simulate_detection_events(&model, trials, seed).status()?;
        *out = Box::into_raw(Box::new(CswDetectionRecord(record)));
        Ok(())
    })
}

/// Click-count histogram as `out[write_clicks * 3 + read_clicks]` (9 entries).
///
/// # Safety
/// `handle` must be NULL or a live record handle; `out` must hold 9 elements.
#[no_mangle]
pub unsafe extern "C" fn csw_detection_histogram(handle: *const CswDetectionRecord, out: *mut u64) -> CswStatus {
    guard(|| {
        let r = &non_null(handle, "handle")?.0;
        let out = slice_mut(out, 9, "out")?;
        for (dst, src) in out.iter_mut().zip(r.histogram.iter().flatten()) {
            *dst = *src;
        }
        Ok(())
    })
}

/// Estimator chain output. The Cauchy-Schwarz fields are meaningful only when
/// `cauchy_schwarz_defined` is true.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CswStatsSummary {
    pub trials: u64,
    pub p_w: CswMeasured,
    pub p_r: CswMeasured,
    pub p_wr: CswMeasured,
    pub p_r_given_w: CswMeasured,
    pub p_b: CswMeasured,
    pub eta_tot: f64,
    pub g2_wr: CswMeasured,
    pub g2_ww: CswMeasured,
    pub g2_rr: CswMeasured,
    pub p_rw_corrected: CswMeasured,
    pub chi: CswMeasured,
    pub chi_raw: f64,
    pub chi_out_of_model: bool,
    pub cauchy_schwarz_defined: bool,
    pub cauchy_schwarz_ratio: f64,
    pub cauchy_schwarz_bound: f64,
    pub cauchy_schwarz_significance: f64,
    pub nonclassical: bool,
}

/// # Safety
/// `handle` must be NULL or a live record handle; `chain` NULL or valid for
/// reads; `out` NULL or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn csw_detection_summarize(
    handle: *const CswDetectionRecord,
    chain: *const CswEfficiencyChain,
    out: *mut CswStatsSummary,
) -> CswStatus {
    guard(|| {
        let r = &non_null(handle, "handle")?.0;
        let chain: EfficiencyChain = (*non_null(chain, "chain")?).into();
        chain.validate().status()?;
        let out = non_null_mut(out, "out")?;
        let s = summarize(r, &chain).status()?;
        let cs = s.cauchy_schwarz;
        *out = CswStatsSummary {
            trials: s.trials,
            p_w: s.p_w.into(),
            p_r: s.p_r.into(),
            p_wr: s.p_wr.into(),
            p_r_given_w: s.p_r_given_w.into(),
            p_b: s.p_b.into(),
            eta_tot: s.eta_tot,
            g2_wr: s.g2_wr.into(),
            g2_ww: s.g2_ww.into(),
            g2_rr: s.g2_rr.into(),
            p_rw_corrected: s.p_rw_corrected.into(),
            chi: s.chi_estimate.chi.into(),
            chi_raw: s.chi_estimate.raw,
            chi_out_of_model: s.chi_estimate.out_of_model,
            cauchy_schwarz_defined: cs.is_some(),
            cauchy_schwarz_ratio: cs.map_or(f64::NAN, |c| c.ratio),
            cauchy_schwarz_bound: cs.map_or(f64::NAN, |c| c.bound),
            cauchy_schwarz_significance: cs.map_or(f64::NAN, |c| c.significance),
            nonclassical: cs.is_some_and(|c| c.nonclassical),
        };
        Ok(())
    })
}

/// # Safety
/// `handle` must be NULL or returned by [`csw_detection_simulate`] and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn csw_detection_record_free(handle: *mut CswDetectionRecord) {
    if !handle.is_null() {
        // SAFETY: ownership returns from the caller.
        drop(unsafe { Box::from_raw(handle) });
    }
}
