//! Run configuration, parameter sweeps and CSV output.
//!
//! Configs are flat `key = value` text with `#` comments; every key has a
//! documented default, unknown keys are rejected, and CLI overrides go
//! through the same parser. Sweep cells are evaluated concurrently with
//! per-cell seeds derived from `(master seed, axis indices)`, results are
//! reduced in deterministic index order, and a failing cell is recorded as
//! data instead of killing the batch.

use std::collections::BTreeMap;
use std::io::{self, Write};
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::lz::{lz_survival_estimate, LzRunSpec};
use crate::model::{bloch_scales, LatticeParams};
use crate::noise::NoiseParams;
use crate::propagator::{
    DEFAULT_BAND_MAP_RAMP,
    long_time_survival_rate, run_realizations, EvolutionConfig, SpatialGrid, SurvivalSeries,
};
use crate::quasistatic::{beta_sweep, default_beta_grid, quasistatic_average, BetaSweep};
use crate::stats::{derive_seed, mean_and_se};

/// Which solver evaluates a sweep cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Engine {
    /// Full 1D wavefunction propagation with noise ensembles.
    Full,
    /// Noisy Landau-Zener two-level model.
    Lz,
    /// Quasistatic moving-lattice average.
    Quasistatic,
}

impl Engine {
    fn parse(s: &str) -> Option<Engine> {
        match s {
            "full" => Some(Engine::Full),
            "lz" => Some(Engine::Lz),
            "quasistatic" => Some(Engine::Quasistatic),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AxisName {
    Omega0,
    Temperature,
    V0,
    Beta,
}

impl AxisName {
    fn parse(s: &str) -> Option<AxisName> {
        match s {
            "omega0" => Some(AxisName::Omega0),
            "temperature" => Some(AxisName::Temperature),
            "v0" => Some(AxisName::V0),
            "beta" => Some(AxisName::Beta),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AxisScale {
    Linear,
    Log,
}

/// One sweep axis: `name scale min max points`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisSpec {
    pub name: AxisName,
    pub scale: AxisScale,
    pub min: f64,
    pub max: f64,
    pub points: usize,
}

impl AxisSpec {
    pub fn value(&self, i: usize) -> f64 {
        if self.points == 1 {
            return self.min;
        }
        let frac = i as f64 / (self.points - 1) as f64;
        match self.scale {
            AxisScale::Linear => self.min + (self.max - self.min) * frac,
            AxisScale::Log => (self.min.ln() + (self.max.ln() - self.min.ln()) * frac).exp(),
        }
    }
}

/// Fully resolved run description; every field has a default so an empty
/// config is valid.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub v0: f64,
    pub f0: f64,
    pub alpha: f64,
    pub phi0: f64,
    pub gamma: f64,
    pub omega0: f64,
    pub temperature: f64,
    /// Propagator time step; `None` means `T_B / 2^14`.
    pub dt: Option<f64>,
    pub trap_omega: f64,
    pub nonlinearity_g: f64,
    pub single_lattice: bool,
    pub grid_q: Option<usize>,
    pub grid_n: Option<usize>,
    /// Bloch periods propagated (stroboscopic measurements at each).
    pub periods: usize,
    pub realizations: usize,
    pub seed: u64,
    pub tail_fraction: f64,
    pub engine: Engine,
    pub axis1: Option<AxisSpec>,
    pub axis2: Option<AxisSpec>,
    /// Fixed Var(phi) for constant-variance cuts (`T = Var * omega0^2`).
    pub variance: f64,
    /// Bloch periods used for the long-time survival rate.
    pub rate_periods: usize,
    /// Band-mapping ramp time for survival measurements (0 = bare window).
    pub band_map_ramp: f64,
    pub beta_min: f64,
    pub beta_max: f64,
    pub beta_points: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            v0: 0.125,
            f0: 0.00762,
            alpha: 1.0,
            phi0: 0.0,
            gamma: 0.00762,
            omega0: 1.0,
            temperature: 0.5,
            dt: None,
            trap_omega: 0.01,
            nonlinearity_g: 0.0,
            single_lattice: false,
            grid_q: None,
            grid_n: None,
            periods: 1,
            realizations: 20,
            seed: 0,
            tail_fraction: 0.1,
            engine: Engine::Full,
            axis1: None,
            axis2: None,
            variance: 0.5,
            rate_periods: 12,
            band_map_ramp: DEFAULT_BAND_MAP_RAMP,
            beta_min: -3.0,
            beta_max: 3.0,
            beta_points: 201,
        }
    }
}

fn config_err(line: usize, message: impl Into<String>) -> Error {
    Error::Config {
        line,
        message: message.into(),
    }
}

fn parse_f64(key: &str, value: &str, line: usize) -> Result<f64> {
    value
        .parse::<f64>()
        .map_err(|_| config_err(line, format!("key `{key}`: cannot parse `{value}` as a number")))
}

fn parse_usize(key: &str, value: &str, line: usize) -> Result<usize> {
    value
        .parse::<usize>()
        .map_err(|_| config_err(line, format!("key `{key}`: cannot parse `{value}` as an integer")))
}

fn parse_bool(key: &str, value: &str, line: usize) -> Result<bool> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(config_err(
            line,
            format!("key `{key}`: cannot parse `{value}` as a boolean"),
        )),
    }
}

fn parse_axis(key: &str, value: &str, line: usize) -> Result<AxisSpec> {
    let parts: Vec<&str> = value.split_whitespace().collect();
    if parts.len() != 5 {
        return Err(config_err(
            line,
            format!("key `{key}`: expected `<name> <linear|log> <min> <max> <points>`"),
        ));
    }
    let name = AxisName::parse(parts[0]).ok_or_else(|| {
        config_err(
            line,
            format!("key `{key}`: unknown axis `{}` (omega0|temperature|v0|beta)", parts[0]),
        )
    })?;
    let scale = match parts[1] {
        "linear" => AxisScale::Linear,
        "log" => AxisScale::Log,
        other => {
            return Err(config_err(
                line,
                format!("key `{key}`: unknown scale `{other}` (linear|log)"),
            ))
        }
    };
    let min = parse_f64(key, parts[2], line)?;
    let max = parse_f64(key, parts[3], line)?;
    let points = parse_usize(key, parts[4], line)?;
    if points < 1 {
        return Err(config_err(line, format!("key `{key}`: points must be >= 1")));
    }
    if points > 1 && min >= max {
        return Err(config_err(line, format!("key `{key}`: min must be < max")));
    }
    if scale == AxisScale::Log && min <= 0.0 {
        return Err(config_err(
            line,
            format!("key `{key}`: log axes need positive bounds"),
        ));
    }
    Ok(AxisSpec {
        name,
        scale,
        min,
        max,
        points,
    })
}

/// Apply one `key = value` assignment; `line` is 1-based for file input and
/// 0 for CLI overrides.
fn apply_pair(cfg: &mut RunConfig, key: &str, value: &str, line: usize) -> Result<()> {
    let nonneg = |v: f64, key: &str| -> Result<f64> {
        if v.is_finite() && v >= 0.0 {
            Ok(v)
        } else {
            Err(config_err(line, format!("key `{key}` must be non-negative, got {v}")))
        }
    };
    match key {
        "v0" => cfg.v0 = nonneg(parse_f64(key, value, line)?, key)?,
        "f0" => cfg.f0 = nonneg(parse_f64(key, value, line)?, key)?,
        "alpha" => {
            let a = parse_f64(key, value, line)?;
            if !(a > 0.0 && a <= 4.0) {
                return Err(config_err(line, format!("key `alpha` must lie in (0, 4], got {a}")));
            }
            cfg.alpha = a;
        }
        "phi0" => cfg.phi0 = parse_f64(key, value, line)?,
        "gamma" => cfg.gamma = nonneg(parse_f64(key, value, line)?, key)?,
        "omega0" => cfg.omega0 = nonneg(parse_f64(key, value, line)?, key)?,
        "temperature" => cfg.temperature = nonneg(parse_f64(key, value, line)?, key)?,
        "dt" => {
            let dt = parse_f64(key, value, line)?;
            if !(dt > 0.0 && dt.is_finite()) {
                return Err(config_err(line, format!("key `dt` must be positive, got {dt}")));
            }
            cfg.dt = Some(dt);
        }
        "trap_omega" => cfg.trap_omega = nonneg(parse_f64(key, value, line)?, key)?,
        "nonlinearity_g" => cfg.nonlinearity_g = nonneg(parse_f64(key, value, line)?, key)?,
        "single_lattice" => cfg.single_lattice = parse_bool(key, value, line)?,
        "grid_q" => cfg.grid_q = Some(parse_usize(key, value, line)?),
        "grid_n" => cfg.grid_n = Some(parse_usize(key, value, line)?),
        "periods" => {
            let p = parse_usize(key, value, line)?;
            if p == 0 {
                return Err(config_err(line, "key `periods` must be >= 1"));
            }
            cfg.periods = p;
        }
        "realizations" => {
            let r = parse_usize(key, value, line)?;
            if r == 0 {
                return Err(config_err(line, "key `realizations` must be >= 1"));
            }
            cfg.realizations = r;
        }
        "seed" => {
            cfg.seed = value.parse::<u64>().map_err(|_| {
                config_err(line, format!("key `seed`: cannot parse `{value}` as u64"))
            })?;
        }
        "tail_fraction" => {
            let t = parse_f64(key, value, line)?;
            if !(t > 0.0 && t <= 0.5) {
                return Err(config_err(
                    line,
                    format!("key `tail_fraction` must lie in (0, 0.5], got {t}"),
                ));
            }
            cfg.tail_fraction = t;
        }
        "engine" => {
            cfg.engine = Engine::parse(value).ok_or_else(|| {
                config_err(
                    line,
                    format!("key `engine`: unknown engine `{value}` (full|lz|quasistatic)"),
                )
            })?;
        }
        "axis1" => cfg.axis1 = Some(parse_axis(key, value, line)?),
        "axis2" => cfg.axis2 = Some(parse_axis(key, value, line)?),
        "variance" => cfg.variance = nonneg(parse_f64(key, value, line)?, key)?,
        "rate_periods" => {
            let p = parse_usize(key, value, line)?;
            if p < 10 {
                return Err(config_err(
                    line,
                    "key `rate_periods` must be >= 10 for the long-time rate",
                ));
            }
            cfg.rate_periods = p;
        }
        "band_map_ramp" => cfg.band_map_ramp = nonneg(parse_f64(key, value, line)?, key)?,
        "beta_min" => cfg.beta_min = parse_f64(key, value, line)?,
        "beta_max" => cfg.beta_max = parse_f64(key, value, line)?,
        "beta_points" => {
            let p = parse_usize(key, value, line)?;
            if p < 41 {
                return Err(config_err(line, "key `beta_points` must be >= 41"));
            }
            cfg.beta_points = p;
        }
        _ => return Err(config_err(line, format!("unknown key `{key}`"))),
    }
    Ok(())
}

/// Parse a flat `key = value` config; all keys optional, unknown keys
/// rejected with their line number.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let stripped = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        };
        let stripped = stripped.trim();
        if stripped.is_empty() {
            continue;
        }
        let Some((key, value)) = stripped.split_once('=') else {
            return Err(config_err(line, format!("expected `key = value`, got `{stripped}`")));
        };
        apply_pair(&mut cfg, key.trim(), value.trim(), line)?;
    }
    Ok(cfg)
}

/// Apply CLI `key=value` overrides on top of a parsed config.
pub fn apply_overrides(cfg: &mut RunConfig, pairs: &[String]) -> Result<()> {
    for pair in pairs {
        let Some((key, value)) = pair.split_once('=') else {
            return Err(config_err(0, format!("override `{pair}` is not `key=value`")));
        };
        apply_pair(cfg, key.trim(), value.trim(), 0)?;
    }
    Ok(())
}

impl RunConfig {
    pub fn lattice(&self) -> Result<LatticeParams> {
        LatticeParams::new(self.v0, self.f0, self.alpha, self.phi0)
    }

    pub fn noise(&self) -> Result<NoiseParams> {
        NoiseParams::new(self.gamma, self.omega0, self.temperature)
    }

    pub fn bloch_period(&self) -> Result<f64> {
        Ok(bloch_scales(&self.lattice()?)?.t_b)
    }

    /// Evolution config with stroboscopic measurements at `m T_B` for
    /// `m = 1..=periods`; `dt` defaults to `T_B / 2^14`.
    pub fn evolution(&self, periods: usize) -> Result<EvolutionConfig> {
        let t_b = self.bloch_period()?;
        let cfg = EvolutionConfig {
            dt: self.dt.unwrap_or(t_b / (1 << 14) as f64),
            nonlinearity_g: self.nonlinearity_g,
            trap_omega: self.trap_omega,
            measure_times: (1..=periods).map(|m| m as f64 * t_b).collect(),
            single_lattice: self.single_lattice,
            band_map_ramp: self.band_map_ramp,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn grid(&self, periods: usize) -> Result<SpatialGrid> {
        match (self.grid_q, self.grid_n) {
            (Some(q), Some(n)) => SpatialGrid::new(q, n),
            (Some(q), None) => {
                let auto = SpatialGrid::suggested(self.alpha, periods as f64)?;
                SpatialGrid::new(q, auto.points.max(512))
            }
            (None, Some(n)) => {
                let auto = SpatialGrid::suggested(self.alpha, periods as f64)?;
                SpatialGrid::new(auto.cells, n)
            }
            (None, None) => SpatialGrid::suggested(self.alpha, periods as f64),
        }
    }

    pub fn beta_grid(&self) -> Vec<f64> {
        default_beta_grid(self.beta_min, self.beta_max, self.beta_points)
    }
}

/// One evaluated sweep cell. `error` records a per-cell failure without
/// aborting the sweep; failed cells carry NaN statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepCell {
    pub omega0: f64,
    pub temperature: f64,
    pub gamma: f64,
    pub v0: f64,
    pub f0: f64,
    pub alpha: f64,
    pub beta: Option<f64>,
    pub seed: u64,
    pub n_realizations: usize,
    pub p_sur_mean: f64,
    pub p_sur_std: f64,
    pub wall_time: f64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub axis1: AxisSpec,
    pub axis2: Option<AxisSpec>,
    pub cells: Vec<SweepCell>,
}

impl SweepResult {
    pub fn cell(&self, i: usize, j: usize) -> &SweepCell {
        let cols = self.axis2.map_or(1, |a| a.points);
        &self.cells[i * cols + j]
    }
}

/// Per-cell parameter assignment after applying axis values.
#[derive(Debug, Clone, Copy)]
struct CellParams {
    omega0: f64,
    temperature: f64,
    v0: f64,
    beta: Option<f64>,
}

fn assign(cell: &mut CellParams, name: AxisName, value: f64) {
    match name {
        AxisName::Omega0 => cell.omega0 = value,
        AxisName::Temperature => cell.temperature = value,
        AxisName::V0 => cell.v0 = value,
        AxisName::Beta => cell.beta = Some(value),
    }
}

/// Survival mean and uncertainty for one parameter point.
fn evaluate_cell(
    base: &RunConfig,
    engine: Engine,
    cell: &CellParams,
    seed: u64,
    quasi: Option<&BTreeMap<u64, Arc<BetaSweep>>>,
) -> Result<(f64, f64)> {
    let params = LatticeParams::new(cell.v0, base.f0, base.alpha, base.phi0)?;
    // A beta axis means a deterministic moving-lattice run.
    if let Some(beta) = cell.beta {
        let grid = base.grid(1)?;
        let cfg = RunConfig {
            v0: cell.v0,
            ..base.clone()
        }
        .evolution(1)?;
        let p = crate::quasistatic::beta_survival(&params, beta, grid, &cfg)?;
        return Ok((p, 0.0));
    }
    let noise = NoiseParams::new(base.gamma, cell.omega0, cell.temperature)?;
    match engine {
        Engine::Full => {
            let grid = base.grid(1)?;
            let cfg = RunConfig {
                v0: cell.v0,
                ..base.clone()
            }
            .evolution(1)?;
            let series =
                crate::propagator::run_ensemble(&params, &noise, grid, &cfg, base.realizations, seed)?;
            let last = series.p_sur.len() - 1;
            Ok((series.p_sur[last], series.ensemble_std.as_ref().unwrap()[last]))
        }
        Engine::Lz => {
            let mut spec = LzRunSpec::new(cell.v0, base.f0, noise)?;
            spec.n_realizations = base.realizations.max(2);
            spec.tail_fraction = base.tail_fraction;
            lz_survival_estimate(&spec, seed)
        }
        Engine::Quasistatic => {
            let sweeps = quasi.ok_or_else(|| {
                Error::Numerical("quasistatic cache missing for quasistatic engine".into())
            })?;
            let sweep = sweeps.get(&cell.v0.to_bits()).ok_or_else(|| {
                Error::Numerical(format!("no precomputed beta sweep for v0 = {}", cell.v0))
            })?;
            Ok((quasistatic_average(sweep, cell.temperature)?, 0.0))
        }
    }
}

/// Precompute the beta sweeps a quasistatic grid needs (one per distinct
/// lattice depth).
fn quasistatic_cache(
    base: &RunConfig,
    v0_values: &[f64],
) -> Result<BTreeMap<u64, Arc<BetaSweep>>> {
    let mut map = BTreeMap::new();
    let grid = base.grid(1)?;
    let cfg = base.evolution(1)?;
    let betas = base.beta_grid();
    for &v0 in v0_values {
        if map.contains_key(&v0.to_bits()) {
            continue;
        }
        let params = LatticeParams::new(v0, base.f0, base.alpha, base.phi0)?;
        let sweep = beta_sweep(&params, &betas, grid, &cfg)?;
        map.insert(v0.to_bits(), Arc::new(sweep));
    }
    Ok(map)
}

/// Evaluate the configured engine over the axis grid. Cells run
/// concurrently; a failing cell records its error and NaN statistics and
/// never touches its neighbors. Per-cell seeds are
/// `derive_seed(master, i << 32 | j)`, so extending an axis keeps existing
/// cells' randomness.
pub fn run_grid_sweep(config: &RunConfig) -> Result<SweepResult> {
    let axis1 = config
        .axis1
        .ok_or_else(|| config_err(0, "missing required key `axis1` for a grid sweep"))?;
    let rows = axis1.points;
    let cols = config.axis2.map_or(1, |a| a.points);

    let mut cell_params = Vec::with_capacity(rows * cols);
    for i in 0..rows {
        for j in 0..cols {
            let mut cp = CellParams {
                omega0: config.omega0,
                temperature: config.temperature,
                v0: config.v0,
                beta: None,
            };
            assign(&mut cp, axis1.name, axis1.value(i));
            if let Some(axis2) = config.axis2 {
                assign(&mut cp, axis2.name, axis2.value(j));
            }
            cell_params.push((i, j, cp));
        }
    }

    let quasi = if config.engine == Engine::Quasistatic
        && !cell_params.iter().any(|(_, _, cp)| cp.beta.is_some())
    {
        let v0s: Vec<f64> = cell_params.iter().map(|(_, _, cp)| cp.v0).collect();
        Some(quasistatic_cache(config, &v0s)?)
    } else {
        None
    };

    let cells: Vec<SweepCell> = cell_params
        .par_iter()
        .map(|&(i, j, cp)| {
            let seed = derive_seed(config.seed, (i as u64) << 32 | j as u64);
            let start = Instant::now();
            let outcome = evaluate_cell(config, config.engine, &cp, seed, quasi.as_ref());
            let (mean, std, error) = match outcome {
                Ok((m, s)) => (m, s, None),
                Err(e) => (f64::NAN, f64::NAN, Some(e.to_string())),
            };
            SweepCell {
                omega0: cp.omega0,
                temperature: cp.temperature,
                gamma: config.gamma,
                v0: cp.v0,
                f0: config.f0,
                alpha: config.alpha,
                beta: cp.beta,
                seed,
                n_realizations: config.realizations,
                p_sur_mean: mean,
                p_sur_std: std,
                wall_time: start.elapsed().as_secs_f64(),
                error,
            }
        })
        .collect();

    Ok(SweepResult {
        axis1,
        axis2: config.axis2,
        cells,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CutKind {
    /// Scan `omega0` with the phase variance held fixed
    /// (`T = variance * omega0^2`).
    ConstantVariance,
    /// Scan `T` at fixed `omega0`; also reports the long-time survival rate.
    ConstantOmega0,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CutRow {
    pub omega0: f64,
    pub temperature: f64,
    pub p_sur_mean: f64,
    pub p_sur_std: f64,
    /// Long-time per-period survival rate (constant-omega0 cuts only).
    pub rate_mean: f64,
    pub rate_std: f64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CutTable {
    pub kind: CutKind,
    pub omega_b: f64,
    pub rows: Vec<CutRow>,
}

/// Long-time survival rate for one parameter point under the configured
/// engine. For the full system the rate is measured per realization over
/// `rate_periods` Bloch periods; the two reduced models predict per-period
/// rates directly.
fn evaluate_rate(
    base: &RunConfig,
    engine: Engine,
    cell: &CellParams,
    seed: u64,
) -> Result<(f64, f64)> {
    let params = LatticeParams::new(cell.v0, base.f0, base.alpha, base.phi0)?;
    let noise = NoiseParams::new(base.gamma, cell.omega0, cell.temperature)?;
    match engine {
        Engine::Full => {
            let t_b = bloch_scales(&params)?.t_b;
            let periods = base.rate_periods;
            let grid = base.grid(periods)?;
            let cfg = base.evolution(periods)?;
            let series = run_realizations(&params, &noise, grid, &cfg, base.realizations, seed)?;
            let rates: Vec<f64> = series
                .iter()
                .map(|s| long_time_survival_rate(s, t_b))
                .collect::<Result<_>>()?;
            Ok(mean_and_se(&rates))
        }
        Engine::Lz => {
            let mut spec = LzRunSpec::new(cell.v0, base.f0, noise)?;
            spec.n_realizations = base.realizations.max(2);
            spec.tail_fraction = base.tail_fraction;
            lz_survival_estimate(&spec, seed)
        }
        Engine::Quasistatic => {
            let cache = quasistatic_cache(base, &[cell.v0])?;
            let sweep = &cache[&cell.v0.to_bits()];
            Ok((quasistatic_average(sweep, cell.temperature)?, 0.0))
        }
    }
}

/// Run a 1D cut. `constant_variance` scans `omega0` with `T` slaved to the
/// configured variance; `constant_omega0` scans `T` and adds the long-time
/// rate columns.
pub fn run_cut(config: &RunConfig, kind: CutKind) -> Result<CutTable> {
    let scales = bloch_scales(&config.lattice()?)?;
    let axis = match (kind, config.axis1) {
        (CutKind::ConstantVariance, Some(a)) if a.name == AxisName::Omega0 => a,
        (CutKind::ConstantVariance, None) => AxisSpec {
            name: AxisName::Omega0,
            scale: AxisScale::Linear,
            min: 0.5 * scales.omega_b,
            max: 12.0 * scales.omega_b,
            points: 24,
        },
        (CutKind::ConstantOmega0, Some(a)) if a.name == AxisName::Temperature => a,
        (CutKind::ConstantOmega0, None) => AxisSpec {
            name: AxisName::Temperature,
            scale: AxisScale::Log,
            min: scales.omega_b * scales.omega_b,
            max: 1e6 * scales.omega_b * scales.omega_b,
            points: 13,
        },
        (_, Some(a)) => {
            return Err(config_err(
                0,
                format!("axis1 name {:?} does not match the requested cut", a.name),
            ))
        }
    };

    let quasi = if config.engine == Engine::Quasistatic {
        Some(quasistatic_cache(config, &[config.v0])?)
    } else {
        None
    };

    let rows: Vec<CutRow> = (0..axis.points)
        .into_par_iter()
        .map(|i| {
            let x = axis.value(i);
            let mut cp = CellParams {
                omega0: config.omega0,
                temperature: config.temperature,
                v0: config.v0,
                beta: None,
            };
            match kind {
                CutKind::ConstantVariance => {
                    cp.omega0 = x;
                    cp.temperature = config.variance * x * x;
                }
                CutKind::ConstantOmega0 => cp.temperature = x,
            }
            let seed = derive_seed(config.seed, (i as u64) << 32);
            let survival = evaluate_cell(config, config.engine, &cp, seed, quasi.as_ref());
            let rate = match kind {
                CutKind::ConstantOmega0 => {
                    evaluate_rate(config, config.engine, &cp, derive_seed(seed, 1))
                }
                CutKind::ConstantVariance => Ok((f64::NAN, f64::NAN)),
            };
            match (survival, rate) {
                (Ok((m, s)), Ok((rm, rs))) => CutRow {
                    omega0: cp.omega0,
                    temperature: cp.temperature,
                    p_sur_mean: m,
                    p_sur_std: s,
                    rate_mean: rm,
                    rate_std: rs,
                    error: None,
                },
                (survival, rate) => CutRow {
                    omega0: cp.omega0,
                    temperature: cp.temperature,
                    p_sur_mean: survival.as_ref().map_or(f64::NAN, |v| v.0),
                    p_sur_std: survival.as_ref().map_or(f64::NAN, |v| v.1),
                    rate_mean: f64::NAN,
                    rate_std: f64::NAN,
                    error: Some(
                        survival
                            .err()
                            .or(rate.err())
                            .map(|e| e.to_string())
                            .unwrap_or_default(),
                    ),
                },
            }
        })
        .collect();

    Ok(CutTable {
        kind,
        omega_b: scales.omega_b,
        rows,
    })
}

/// Full-precision float formatting: 17 significant digits, so parsing the
/// text reproduces the exact bits.
pub fn fmt_full(x: f64) -> String {
    format!("{x:.16e}")
}

/// Grid-sweep CSV: stable column order
/// `omega0,temperature,gamma,v0,f0,alpha,seed,n_real,p_sur_mean,p_sur_std`.
pub fn write_grid_csv<W: Write + ?Sized>(result: &SweepResult, w: &mut W) -> io::Result<()> {
    writeln!(w, "omega0,temperature,gamma,v0,f0,alpha,seed,n_real,p_sur_mean,p_sur_std")?;
    for c in &result.cells {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{}",
            fmt_full(c.omega0),
            fmt_full(c.temperature),
            fmt_full(c.gamma),
            fmt_full(c.v0),
            fmt_full(c.f0),
            fmt_full(c.alpha),
            c.seed,
            c.n_realizations,
            fmt_full(c.p_sur_mean),
            fmt_full(c.p_sur_std),
        )?;
    }
    Ok(())
}

pub fn write_cut_csv<W: Write + ?Sized>(table: &CutTable, w: &mut W) -> io::Result<()> {
    match table.kind {
        CutKind::ConstantVariance => {
            writeln!(w, "omega0,omega0_over_omega_b,temperature,p_sur_mean,p_sur_std")?;
            for r in &table.rows {
                writeln!(
                    w,
                    "{},{},{},{},{}",
                    fmt_full(r.omega0),
                    fmt_full(r.omega0 / table.omega_b),
                    fmt_full(r.temperature),
                    fmt_full(r.p_sur_mean),
                    fmt_full(r.p_sur_std),
                )?;
            }
        }
        CutKind::ConstantOmega0 => {
            writeln!(
                w,
                "temperature,t_over_omega_b_sq,p_sur_mean,p_sur_std,rate_mean,rate_std"
            )?;
            for r in &table.rows {
                writeln!(
                    w,
                    "{},{},{},{},{},{}",
                    fmt_full(r.temperature),
                    fmt_full(r.temperature / (table.omega_b * table.omega_b)),
                    fmt_full(r.p_sur_mean),
                    fmt_full(r.p_sur_std),
                    fmt_full(r.rate_mean),
                    fmt_full(r.rate_std),
                )?;
            }
        }
    }
    Ok(())
}

/// Survival series CSV: `t,p_sur,std`.
pub fn write_survival_csv<W: Write + ?Sized>(series: &SurvivalSeries, w: &mut W) -> io::Result<()> {
    writeln!(w, "t,p_sur,std")?;
    for (k, (&t, &p)) in series.times.iter().zip(&series.p_sur).enumerate() {
        let std = series.ensemble_std.as_ref().map_or(0.0, |s| s[k]);
        writeln!(w, "{},{},{}", fmt_full(t), fmt_full(p), fmt_full(std))?;
    }
    Ok(())
}

/// Beta-sweep CSV: `beta,p_sur`.
pub fn write_beta_csv<W: Write + ?Sized>(sweep: &BetaSweep, w: &mut W) -> io::Result<()> {
    writeln!(w, "beta,p_sur")?;
    for (&b, &p) in sweep.betas.iter().zip(&sweep.p_sur) {
        writeln!(w, "{},{}", fmt_full(b), fmt_full(p))?;
    }
    Ok(())
}

/// Averaged-curve CSV: `temperature,p_sur_avg`.
pub fn write_average_csv<W: Write + ?Sized>(rows: &[(f64, f64)], w: &mut W) -> io::Result<()> {
    writeln!(w, "temperature,p_sur_avg")?;
    for &(t, p) in rows {
        writeln!(w, "{},{}", fmt_full(t), fmt_full(p))?;
    }
    Ok(())
}

/// Omega0-scan CSV: `omega0,p_sur_mean,p_sur_std`.
pub fn write_scan_csv<W: Write + ?Sized>(rows: &[(f64, f64, f64)], w: &mut W) -> io::Result<()> {
    writeln!(w, "omega0,p_sur_mean,p_sur_std")?;
    for &(omega0, mean, std) in rows {
        writeln!(w, "{},{},{}", fmt_full(omega0), fmt_full(mean), fmt_full(std))?;
    }
    Ok(())
}
