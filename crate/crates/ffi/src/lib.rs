//! C ABI for the starksim solvers.
//!
//! Conventions: every fallible call returns a [`StarksimStatus`]; results
//! come back through out-pointers. Heap objects are exposed as opaque
//! handles created and destroyed by paired `_new`/`_free` (or
//! `_generate`/`_free`) calls, and are not thread-safe to mutate
//! concurrently. Strings are NUL-terminated UTF-8.

use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};

use starksim::error::Error;
use starksim::harness::{parse_config, RunConfig};
use starksim::lz::{effective_band_gap, lz_formula, lz_survival_estimate, LzRunSpec};
use starksim::model::bloch_scales;
use starksim::noise::{generate_path, NoiseParams, NoisePath, StartCondition};
use starksim::propagator::{run_ensemble, SurvivalSeries};

/// Result of a starksim call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StarksimStatus {
    Ok = 0,
    /// A parameter violated its documented range.
    InvalidArgument = 1,
    /// The solver failed numerically (instability, non-convergence).
    NumericalFailure = 2,
    /// A required pointer was NULL.
    NullPointer = 3,
    /// A string argument was not valid UTF-8.
    Utf8Error = 4,
    /// The callee panicked; state may be inconsistent.
    InternalError = 5,
}

fn status_of(err: &Error) -> StarksimStatus {
    match err {
        Error::InvalidParameter { .. } | Error::Config { .. } => StarksimStatus::InvalidArgument,
        _ => StarksimStatus::NumericalFailure,
    }
}

/// Opaque harmonic-noise trajectory.
pub struct StarksimNoisePath {
    inner: NoisePath,
}

/// Opaque ground-band survival series (times, means, standard errors).
pub struct StarksimSurvivalSeries {
    inner: SurvivalSeries,
}

/// Version of the underlying library, as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn starksim_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Generate a harmonic-noise trajectory started from the stationary
/// distribution.
///
/// On success writes a handle to `out`; free it with
/// `starksim_noise_path_free`.
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle pointer.
#[no_mangle]
pub unsafe extern "C" fn starksim_noise_path_generate(
    gamma: f64,
    omega0: f64,
    temperature: f64,
    t_total: f64,
    dt: f64,
    seed: u64,
    out: *mut *mut StarksimNoisePath,
) -> StarksimStatus {
    if out.is_null() {
        return StarksimStatus::NullPointer;
    }
    let result = catch_unwind(|| {
        let params = NoiseParams::new(gamma, omega0, temperature)?;
        generate_path(&params, t_total, dt, seed, StartCondition::Equilibrium)
    });
    match result {
        Ok(Ok(path)) => {
            let handle = Box::new(StarksimNoisePath { inner: path });
            unsafe { *out = Box::into_raw(handle) };
            StarksimStatus::Ok
        }
        Ok(Err(e)) => status_of(&e),
        Err(_) => StarksimStatus::InternalError,
    }
}

/// Number of samples in a trajectory; 0 for a NULL handle.
/// # Safety
/// `path` must be NULL or a handle from `starksim_noise_path_generate`.
#[no_mangle]
pub unsafe extern "C" fn starksim_noise_path_len(path: *const StarksimNoisePath) -> usize {
    if path.is_null() {
        return 0;
    }
    unsafe { &*path }.inner.len()
}

/// Read sample `index` as `(t, phi, mu)`.
/// # Safety
/// `path` must be NULL or a live handle; `t`, `phi`, `mu` must be NULL or
/// valid writable doubles.
#[no_mangle]
pub unsafe extern "C" fn starksim_noise_path_sample(
    path: *const StarksimNoisePath,
    index: usize,
    t: *mut f64,
    phi: *mut f64,
    mu: *mut f64,
) -> StarksimStatus {
    if path.is_null() || t.is_null() || phi.is_null() || mu.is_null() {
        return StarksimStatus::NullPointer;
    }
    let inner = &unsafe { &*path }.inner;
    if index >= inner.len() {
        return StarksimStatus::InvalidArgument;
    }
    let s = inner.samples[index];
    unsafe {
        *t = index as f64 * inner.dt;
        *phi = s.phi;
        *mu = s.mu;
    }
    StarksimStatus::Ok
}

/// Release a trajectory handle. NULL is a no-op.
/// # Safety
/// `path` must be NULL or a handle not freed before; the handle is invalid
/// afterwards.
#[no_mangle]
pub unsafe extern "C" fn starksim_noise_path_free(path: *mut StarksimNoisePath) {
    if !path.is_null() {
        drop(unsafe { Box::from_raw(path) });
    }
}

/// The single-lattice Landau-Zener survival `1 - exp(-pi v0^2 / (2 f0))`.
/// # Safety
/// `out` must be NULL or a valid writable double.
#[no_mangle]
pub unsafe extern "C" fn starksim_lz_formula(v0: f64, f0: f64, out: *mut f64) -> StarksimStatus {
    if out.is_null() {
        return StarksimStatus::NullPointer;
    }
    match lz_formula(v0, f0) {
        Ok(v) => {
            unsafe { *out = v };
            StarksimStatus::Ok
        }
        Err(e) => status_of(&e),
    }
}

/// Monte Carlo effective band gap `v0 <sqrt(2 (cos phi + 1))>` over
/// `phi ~ Normal(0, var_phi)`; writes the mean and the standard deviation
/// of the gap distribution.
/// # Safety
/// `mean` and `std` must be NULL or valid writable doubles.
#[no_mangle]
pub unsafe extern "C" fn starksim_effective_band_gap(
    v0: f64,
    var_phi: f64,
    n_samples: u64,
    seed: u64,
    mean: *mut f64,
    std: *mut f64,
) -> StarksimStatus {
    if mean.is_null() || std.is_null() {
        return StarksimStatus::NullPointer;
    }
    if !(v0 >= 0.0 && var_phi >= 0.0 && v0.is_finite() && var_phi.is_finite()) || n_samples == 0 {
        return StarksimStatus::InvalidArgument;
    }
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let (m, s) = effective_band_gap(v0, var_phi, n_samples as usize, &mut rng);
    unsafe {
        *mean = m;
        *std = s;
    }
    StarksimStatus::Ok
}

/// Noisy Landau-Zener survival estimate across the band edge: ensemble mean
/// and standard error of the tail-averaged survival over `n_realizations`
/// noise realizations.
/// # Safety
/// `mean` and `std` must be NULL or valid writable doubles.
#[no_mangle]
pub unsafe extern "C" fn starksim_lz_survival(
    v0: f64,
    f0: f64,
    gamma: f64,
    omega0: f64,
    temperature: f64,
    n_realizations: u32,
    seed: u64,
    mean: *mut f64,
    std: *mut f64,
) -> StarksimStatus {
    if mean.is_null() || std.is_null() {
        return StarksimStatus::NullPointer;
    }
    let result = catch_unwind(|| {
        let noise = NoiseParams::new(gamma, omega0, temperature)?;
        let mut spec = LzRunSpec::new(v0, f0, noise)?;
        spec.n_realizations = n_realizations.max(2) as usize;
        lz_survival_estimate(&spec, seed)
    });
    match result {
        Ok(Ok((m, s))) => {
            unsafe {
                *mean = m;
                *std = s;
            }
            StarksimStatus::Ok
        }
        Ok(Err(e)) => status_of(&e),
        Err(_) => StarksimStatus::InternalError,
    }
}

fn run_survival_impl(config_text: &str, seed: u64) -> Result<SurvivalSeries, Error> {
    let mut cfg: RunConfig = parse_config(config_text)?;
    cfg.seed = seed;
    let params = cfg.lattice()?;
    let noise = cfg.noise()?;
    let _ = bloch_scales(&params)?;
    let grid = cfg.grid(cfg.periods)?;
    let evolution = cfg.evolution(cfg.periods)?;
    run_ensemble(&params, &noise, grid, &evolution, cfg.realizations.max(2), cfg.seed)
}

/// Run a full noise-ensemble propagation described by a flat
/// `key = value` config string and return its survival series handle.
///
/// # Safety
/// `config_text` must point to a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn starksim_run_survival(
    config_text: *const c_char,
    seed: u64,
    out: *mut *mut StarksimSurvivalSeries,
) -> StarksimStatus {
    if config_text.is_null() || out.is_null() {
        return StarksimStatus::NullPointer;
    }
    let text = match CStr::from_ptr(config_text).to_str() {
        Ok(t) => t,
        Err(_) => return StarksimStatus::Utf8Error,
    };
    let result = catch_unwind(AssertUnwindSafe(|| run_survival_impl(text, seed)));
    match result {
        Ok(Ok(series)) => {
            let handle = Box::new(StarksimSurvivalSeries { inner: series });
            *out = Box::into_raw(handle);
            StarksimStatus::Ok
        }
        Ok(Err(e)) => status_of(&e),
        Err(_) => StarksimStatus::InternalError,
    }
}

/// Number of measurement points in a survival series; 0 for NULL.
/// # Safety
/// `series` must be NULL or a handle from `starksim_run_survival`.
#[no_mangle]
pub unsafe extern "C" fn starksim_survival_len(series: *const StarksimSurvivalSeries) -> usize {
    if series.is_null() {
        return 0;
    }
    unsafe { &*series }.inner.times.len()
}

/// Read measurement `index` as `(t, p_sur, std)`; `std` is the standard
/// error of the ensemble mean (0 when the series is a single run).
/// # Safety
/// `series` must be NULL or a live handle; `t`, `p_sur`, `std` must be NULL
/// or valid writable doubles.
#[no_mangle]
pub unsafe extern "C" fn starksim_survival_point(
    series: *const StarksimSurvivalSeries,
    index: usize,
    t: *mut f64,
    p_sur: *mut f64,
    std: *mut f64,
) -> StarksimStatus {
    if series.is_null() || t.is_null() || p_sur.is_null() || std.is_null() {
        return StarksimStatus::NullPointer;
    }
    let inner = &unsafe { &*series }.inner;
    if index >= inner.times.len() {
        return StarksimStatus::InvalidArgument;
    }
    unsafe {
        *t = inner.times[index];
        *p_sur = inner.p_sur[index];
        *std = inner.ensemble_std.as_ref().map_or(0.0, |s| s[index]);
    }
    StarksimStatus::Ok
}

/// Release a survival-series handle. NULL is a no-op.
/// # Safety
/// `series` must be NULL or a handle not freed before; the handle is
/// invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn starksim_survival_free(series: *mut StarksimSurvivalSeries) {
    if !series.is_null() {
        drop(unsafe { Box::from_raw(series) });
    }
}
