//! Quasistatic model: the noise velocity `mu(t)` is frozen to a constant
//! `beta`, turning the second lattice into one moving at fixed relative
//! velocity. Survival after one Bloch period is computed as a function of
//! `beta` with the full propagator, and the noisy system is approximated by
//! averaging that curve over the stationary velocity distribution, a
//! Gaussian of variance `T`.
//!
//! In momentum space the moving lattice acts as a pair of Bragg barriers at
//! `beta +- alpha/2`; for `|beta|` inside [`intertwined_interval`] they
//! interleave the static pair at `+- 1/2` and reflections on the moving
//! lattice eject the state from the ground band.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{bloch_scales, LatticeParams};
use crate::propagator::{
    evolve, prepare_ground_state, EvolutionConfig, PhaseProfile, SpatialGrid, Stepper,
    WaveFunction,
};

/// Switch-on time for the moving lattice before `t = 0`: long against the
/// dressing timescales (residual excitation below 1e-3 at the reference
/// depth), and the ramp ends before the force is applied so the Bloch sweep
/// itself is untouched.
pub const MOVING_LATTICE_SWITCH_ON: f64 = 160.0;

/// Survival after one Bloch period versus relative lattice velocity.
#[derive(Debug, Clone, PartialEq)]
pub struct BetaSweep {
    pub betas: Vec<f64>,
    pub p_sur: Vec<f64>,
    pub params: LatticeParams,
}

/// Propagate with the deterministic phase `phi(t) = phi0 + beta t` and
/// return the ground-band survival at `t = T_B`.
///
/// The initial state is the single-lattice dressed ground state with the
/// moving lattice switched on adiabatically before the force starts. A
/// sudden start would dump the static bichromatic dressing onto the moving
/// lattice and shed its sideband weight as spurious band excitation, which
/// would keep large `|beta|` from recovering the single-lattice limit.
pub fn beta_survival(
    params: &LatticeParams,
    beta: f64,
    grid: SpatialGrid,
    config: &EvolutionConfig,
) -> Result<f64> {
    let ground = prepare_moving_lattice_start(params, grid, config)?;
    beta_survival_from(&ground, params, beta, config)
}

/// Single-lattice dressed ground state, shared by every `beta`; the
/// `beta`-dependent switch-on happens in [`beta_survival_from`].
fn prepare_moving_lattice_start(
    params: &LatticeParams,
    grid: SpatialGrid,
    config: &EvolutionConfig,
) -> Result<WaveFunction> {
    let mut prep = config.clone();
    prep.single_lattice = true;
    prepare_ground_state(grid, params, &prep)
}

/// Same as [`beta_survival`] but reusing a prepared single-lattice ground
/// state.
fn beta_survival_from(
    ground: &WaveFunction,
    params: &LatticeParams,
    beta: f64,
    config: &EvolutionConfig,
) -> Result<f64> {
    let t_b = bloch_scales(params)?.t_b;
    let mut cfg = config.clone();
    cfg.measure_times = vec![t_b];
    let mut start = ground.clone();
    if !config.single_lattice {
        let mut stepper =
            Stepper::new(start.grid, *params, config.nonlinearity_g, config.single_lattice);
        let ramp = MOVING_LATTICE_SWITCH_ON;
        stepper.ramp_in_second_lattice(&mut start, ramp, |tau| {
            params.phi0 + beta * (tau - ramp)
        });
        start.time = 0.0;
    }
    let profile = PhaseProfile::Linear {
        intercept: params.phi0,
        slope: beta,
    };
    let (_, series) = evolve(start, &profile, t_b, params, &cfg)?;
    Ok(series.p_sur[0])
}

/// Evaluate [`beta_survival`] on a grid of at least 41 velocities; points
/// run concurrently and share one prepared initial state.
pub fn beta_sweep(
    params: &LatticeParams,
    beta_grid: &[f64],
    grid: SpatialGrid,
    config: &EvolutionConfig,
) -> Result<BetaSweep> {
    if beta_grid.len() < 41 {
        return Err(Error::InvalidParameter {
            name: "beta_grid",
            reason: format!("sweep needs at least 41 points, got {}", beta_grid.len()),
        });
    }
    if beta_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidParameter {
            name: "beta_grid",
            reason: "beta grid must be strictly increasing".into(),
        });
    }
    let ground = prepare_moving_lattice_start(params, grid, config)?;
    let survivals: Vec<Result<f64>> = beta_grid
        .par_iter()
        .map(|&beta| beta_survival_from(&ground, params, beta, config))
        .collect();
    let mut p_sur = Vec::with_capacity(beta_grid.len());
    for s in survivals {
        p_sur.push(s?);
    }
    Ok(BetaSweep {
        betas: beta_grid.to_vec(),
        p_sur,
        params: *params,
    })
}

/// Uniform sweep grid covering the intertwined interval with margin.
pub fn default_beta_grid(min: f64, max: f64, points: usize) -> Vec<f64> {
    (0..points)
        .map(|i| min + (max - min) * i as f64 / (points - 1) as f64)
        .collect()
}

/// The `|beta|` interval `(alpha/2, 1 + alpha/2)` in which the moving pair
/// of Bragg barriers interleaves the static pair; its width is always one
/// Brillouin zone.
pub fn intertwined_interval(alpha: f64) -> Result<(f64, f64)> {
    if !(alpha > 0.0 && alpha <= 2.0) {
        return Err(Error::InvalidParameter {
            name: "alpha",
            reason: format!("interval geometry holds for alpha in (0, 2], got {alpha}"),
        });
    }
    Ok((0.5 * alpha, 1.0 + 0.5 * alpha))
}

/// Average the sweep over the stationary velocity distribution
/// `beta ~ Normal(0, variance = T)`.
///
/// Trapezoidal quadrature on the sweep grid with Gaussian weights; the mass
/// beyond the grid is bounded by assuming the boundary survival value.
/// Weights are normalized, so a constant curve averages to itself exactly.
pub fn quasistatic_average(sweep: &BetaSweep, temperature: f64) -> Result<f64> {
    if !(temperature >= 0.0 && temperature.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "temperature",
            reason: format!("must be non-negative and finite, got {temperature}"),
        });
    }
    let n = sweep.betas.len();
    if n < 2 || sweep.p_sur.len() != n {
        return Err(Error::InvalidParameter {
            name: "sweep",
            reason: "sweep needs matching beta and survival arrays of length >= 2".into(),
        });
    }
    let (lo, hi) = (sweep.betas[0], sweep.betas[n - 1]);
    if temperature == 0.0 {
        // The Gaussian collapses to a delta at beta = 0.
        if lo > 0.0 || hi < 0.0 {
            return Err(Error::Coverage { t: 0.0 });
        }
        let k = sweep.betas.partition_point(|&b| b < 0.0).min(n - 1).max(1);
        let (b0, b1) = (sweep.betas[k - 1], sweep.betas[k]);
        let frac = (0.0 - b0) / (b1 - b0);
        return Ok(sweep.p_sur[k - 1] + frac * (sweep.p_sur[k] - sweep.p_sur[k - 1]));
    }

    let sigma = temperature.sqrt();
    let cdf = |z: f64| 0.5 * (1.0 + libm::erf(z / std::f64::consts::SQRT_2));
    let pdf = |b: f64| {
        (-0.5 * (b / sigma) * (b / sigma)).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt())
    };
    // Mass beyond the grid is assigned the boundary survival values. The
    // sweep saturates to the fast-lattice plateau at large |beta|, so this
    // is exact in the broad-distribution limit; only a grid that misses
    // essentially the whole distribution is rejected.
    let mass_below = cdf(lo / sigma);
    let mass_above = 1.0 - cdf(hi / sigma);
    if mass_below + mass_above > 0.99 {
        return Err(Error::InvalidParameter {
            name: "sweep",
            reason: format!(
                "beta grid [{lo}, {hi}] covers almost none of the velocity distribution \
                 (sigma = {sigma})"
            ),
        });
    }

    let mut weighted = mass_below * sweep.p_sur[0] + mass_above * sweep.p_sur[n - 1];
    let mut total = mass_below + mass_above;
    for i in 0..n {
        let h = if i == 0 {
            0.5 * (sweep.betas[1] - sweep.betas[0])
        } else if i == n - 1 {
            0.5 * (sweep.betas[n - 1] - sweep.betas[n - 2])
        } else {
            0.5 * (sweep.betas[i + 1] - sweep.betas[i - 1])
        };
        let w = pdf(sweep.betas[i]) * h;
        weighted += w * sweep.p_sur[i];
        total += w;
    }
    Ok(weighted / total)
}

/// Mean survival of the sweep points inside and outside the intertwined
/// `|beta|` interval.
pub fn interval_contrast(sweep: &BetaSweep) -> Result<(f64, f64)> {
    let (lo, hi) = intertwined_interval(sweep.params.alpha)?;
    let mut inside = Vec::new();
    let mut outside = Vec::new();
    for (&b, &p) in sweep.betas.iter().zip(&sweep.p_sur) {
        if b.abs() > lo && b.abs() < hi {
            inside.push(p);
        } else {
            outside.push(p);
        }
    }
    if inside.is_empty() || outside.is_empty() {
        return Err(Error::InvalidParameter {
            name: "sweep",
            reason: "sweep does not sample both sides of the intertwined interval".into(),
        });
    }
    Ok((
        crate::stats::mean(&inside),
        crate::stats::mean(&outside),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::LatticeParams;
    use crate::propagator::EvolutionConfig;

    fn fig1_params(alpha: f64) -> LatticeParams {
        LatticeParams::new(0.125, 0.00762, alpha, 0.0).unwrap()
    }

    fn fast_config(f0: f64) -> EvolutionConfig {
        let mut c = EvolutionConfig::for_force(f0).unwrap();
        c.dt = (1.0 / f0) / (1 << 13) as f64;
        c
    }

    fn synthetic_sweep(betas: Vec<f64>, p_sur: Vec<f64>) -> BetaSweep {
        BetaSweep {
            betas,
            p_sur,
            params: fig1_params(0.61),
        }
    }

    #[test]
    fn interval_geometry() {
        let (lo, hi) = intertwined_interval(0.61).unwrap();
        assert!((lo - 0.305).abs() < 1e-12);
        assert!((hi - 1.305).abs() < 1e-12);
        let (lo, hi) = intertwined_interval(1.0).unwrap();
        assert_eq!((lo, hi), (0.5, 1.5));
        for alpha in [0.1, 0.5, 1.0, 1.7, 2.0] {
            let (lo, hi) = intertwined_interval(alpha).unwrap();
            assert!((hi - lo - 1.0).abs() < 1e-12, "width at alpha {alpha}");
        }
        assert!(intertwined_interval(0.0).is_err());
        assert!(intertwined_interval(2.5).is_err());
    }

    #[test]
    fn interval_endpoints_shift_linearly() {
        let (lo1, hi1) = intertwined_interval(0.6).unwrap();
        let (lo2, hi2) = intertwined_interval(0.8).unwrap();
        assert!((lo2 - lo1 - 0.1).abs() < 1e-12);
        assert!((hi2 - hi1 - 0.1).abs() < 1e-12);
    }

    #[test]
    fn averaging_constant_curve_is_exact() {
        let betas = default_beta_grid(-3.0, 3.0, 61);
        let sweep = synthetic_sweep(betas.clone(), vec![0.42; betas.len()]);
        for temperature in [0.0, 0.01, 0.3, 1.0] {
            let avg = quasistatic_average(&sweep, temperature).unwrap();
            assert!((avg - 0.42).abs() < 1e-14, "T = {temperature}: {avg}");
        }
    }

    #[test]
    fn averaging_collapses_to_center_value_at_zero_temperature() {
        let betas = default_beta_grid(-2.0, 2.0, 41);
        let p: Vec<f64> = betas.iter().map(|b| 0.5 + 0.1 * b.sin()).collect();
        let sweep = synthetic_sweep(betas, p);
        let avg = quasistatic_average(&sweep, 0.0).unwrap();
        assert!((avg - 0.5).abs() < 1e-6, "P(0) = {avg}");
    }

    #[test]
    fn averaging_is_linear_and_bounded() {
        let betas = default_beta_grid(-3.0, 3.0, 81);
        let p1: Vec<f64> = betas.iter().map(|b| 0.3 + 0.2 * (b * 1.3).cos()).collect();
        let p2: Vec<f64> = betas.iter().map(|b| 0.6 - 0.1 * (b * 0.7).sin()).collect();
        let (a, b) = (0.35, 0.65);
        let combo: Vec<f64> = p1.iter().zip(&p2).map(|(x, y)| a * x + b * y).collect();
        let t = 0.8;
        let avg1 = quasistatic_average(&synthetic_sweep(betas.clone(), p1.clone()), t).unwrap();
        let avg2 = quasistatic_average(&synthetic_sweep(betas.clone(), p2.clone()), t).unwrap();
        let avg_combo = quasistatic_average(&synthetic_sweep(betas.clone(), combo), t).unwrap();
        assert!((avg_combo - (a * avg1 + b * avg2)).abs() < 1e-12);

        let min = p1.iter().copied().fold(f64::INFINITY, f64::min);
        let max = p1.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        assert!(avg1 >= min && avg1 <= max);
    }

    #[test]
    fn averaging_rejects_hopeless_coverage() {
        let betas = default_beta_grid(-0.1, 0.1, 41);
        let sweep = synthetic_sweep(betas.clone(), vec![0.5; betas.len()]);
        // sigma = 10: the grid holds under 1% of the mass.
        assert!(quasistatic_average(&sweep, 100.0).is_err());
    }

    #[test]
    fn sweep_requires_enough_points() {
        let p = fig1_params(1.0);
        let grid = SpatialGrid::suggested(1.0, 1.0).unwrap();
        let config = fast_config(p.f0);
        let betas = default_beta_grid(-2.0, 2.0, 11);
        assert!(beta_sweep(&p, &betas, grid, &config).is_err());
    }

    #[test]
    fn static_limit_matches_two_lattice_survival() {
        // beta = 0 is the noiseless bichromatic lattice with doubled
        // coupling: survival ~ 1, and identical to the propagator's own
        // frozen-phase run.
        let p = fig1_params(1.0);
        let grid = SpatialGrid::suggested(1.0, 1.0).unwrap();
        let config = fast_config(p.f0);
        let s = beta_survival(&p, 0.0, grid, &config).unwrap();
        assert!(s > 0.99, "beta = 0 survival {s}");

        let t_b = bloch_scales(&p).unwrap().t_b;
        let mut cfg = config.clone();
        cfg.measure_times = vec![t_b];
        let ground = crate::propagator::prepare_ground_state(grid, &p, &cfg).unwrap();
        let (_, series) = crate::propagator::evolve(
            ground,
            &crate::propagator::PhaseProfile::Constant(p.phi0),
            t_b,
            &p,
            &cfg,
        )
        .unwrap();
        // The switch-on protocol builds the same dressed state the direct
        // bichromatic preparation relaxes to, up to adiabatic residue.
        assert!(
            (s - series.p_sur[0]).abs() < 5e-3,
            "ramped {s} vs direct {}",
            series.p_sur[0]
        );
    }

    #[test]
    fn fast_lattice_recovers_single_lattice_value() {
        let p = fig1_params(0.61);
        let grid = SpatialGrid::suggested(0.61, 1.0).unwrap();
        let config = fast_config(p.f0);
        let s = beta_survival(&p, 3.0, grid, &config).unwrap();
        let single = crate::lz::lz_formula(p.v0, p.f0).unwrap();
        assert!((s - single).abs() < 0.05, "beta = 3 survival {s} vs {single}");
    }

    #[test]
    fn sweep_symmetry_under_velocity_reversal() {
        // The x -> -x reflection that motivates beta -> -beta symmetry also
        // flips the Stark force, so the curve is only approximately
        // symmetric (the asymmetry peaks where the alpha = 1 gap-modulation
        // structure is violent). The Gaussian average, however, only sees
        // the even part of the curve, exactly.
        let p = fig1_params(1.0);
        let grid = SpatialGrid::suggested(1.0, 1.0).unwrap();
        let config = fast_config(p.f0);
        let betas = default_beta_grid(-2.0, 2.0, 41);
        let sweep = beta_sweep(&p, &betas, grid, &config).unwrap();
        let n = betas.len();
        let mean_asym: f64 = (0..n / 2)
            .map(|i| (sweep.p_sur[i] - sweep.p_sur[n - 1 - i]).abs())
            .sum::<f64>()
            / (n / 2) as f64;
        assert!(mean_asym < 0.05, "mean asymmetry {mean_asym}");

        let mirrored = BetaSweep {
            betas: betas.clone(),
            p_sur: sweep.p_sur.iter().rev().copied().collect(),
            params: p,
        };
        for temperature in [0.05, 0.4, 1.5] {
            let a = quasistatic_average(&sweep, temperature).unwrap();
            let b = quasistatic_average(&mirrored, temperature).unwrap();
            assert!(
                (a - b).abs() < 1e-12,
                "averaging is not velocity-reversal invariant: {a} vs {b}"
            );
        }
    }

    #[test]
    fn zero_depth_sweep_is_flat_zero() {
        let p = LatticeParams::new(0.0, 0.00762, 1.0, 0.0).unwrap();
        let grid = SpatialGrid::suggested(1.0, 1.0).unwrap();
        let config = fast_config(p.f0);
        let betas = default_beta_grid(-2.0, 2.0, 41);
        let sweep = beta_sweep(&p, &betas, grid, &config).unwrap();
        assert!(sweep.p_sur.iter().all(|&s| s < 1e-6));
    }

    #[test]
    fn averaging_quadrature_converges_under_refinement() {
        // For a resolved curve, twofold grid refinement moves the average
        // by far less than 1e-3.
        let make = |points: usize| -> BetaSweep {
            let betas = default_beta_grid(-3.0, 3.0, points);
            let p_sur = betas
                .iter()
                .map(|b| 0.55 + 0.35 * (1.7 * b).cos() * (-0.3 * b * b).exp())
                .collect();
            synthetic_sweep(betas, p_sur)
        };
        let coarse = make(101);
        let fine = make(201);
        for temperature in [0.05, 0.3, 1.0, 3.0] {
            let a = quasistatic_average(&fine, temperature).unwrap();
            let b = quasistatic_average(&coarse, temperature).unwrap();
            assert!(
                (a - b).abs() < 1e-3,
                "T = {temperature}: refined {a} vs coarse {b}"
            );
        }
    }

    #[test]
    fn averaged_curve_stable_under_grid_refinement() {
        // Twofold refinement at the default grid density on the real sweep.
        // The survival curve carries genuine interference structure with
        // beta period 2 pi / T_B ~ 0.05, below the default spacing, so the
        // averaged value is only reproducible to a ~1e-2 envelope for
        // narrow velocity distributions; broad ones average the structure
        // out.
        let p = fig1_params(0.618);
        let grid = SpatialGrid::suggested(0.618, 1.0).unwrap();
        let mut config = fast_config(p.f0);
        config.dt = (1.0 / p.f0) / (1 << 12) as f64;
        let fine = default_beta_grid(-3.0, 3.0, 201);
        let sweep_fine = beta_sweep(&p, &fine, grid, &config).unwrap();
        let coarse_idx: Vec<usize> = (0..201).step_by(2).collect();
        let sweep_coarse = BetaSweep {
            betas: coarse_idx.iter().map(|&i| fine[i]).collect(),
            p_sur: coarse_idx.iter().map(|&i| sweep_fine.p_sur[i]).collect(),
            params: p,
        };
        for (temperature, tol) in [(0.05, 1.5e-2), (0.3, 1.5e-2), (3.0, 2e-3)] {
            let a = quasistatic_average(&sweep_fine, temperature).unwrap();
            let b = quasistatic_average(&sweep_coarse, temperature).unwrap();
            assert!(
                (a - b).abs() < tol,
                "T = {temperature}: refined {a} vs coarse {b}"
            );
        }

        // The averaged survival versus temperature has a single broad
        // minimum at intermediate noise strength: narrow distributions see
        // the high survival near beta = 0, broad ones escape past the
        // intertwined region again.
        let temps: Vec<f64> = (0..14).map(|k| 1e-3 * 10f64.powf(k as f64 * 0.33)).collect();
        let curve: Vec<f64> = temps
            .iter()
            .map(|&t| quasistatic_average(&sweep_fine, t).unwrap())
            .collect();
        let (argmin, &min_v) = curve
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .unwrap();
        assert!(argmin > 0 && argmin < temps.len() - 1, "minimum at the scan edge");
        assert!(curve[0] - min_v > 0.1, "no decrease toward the minimum");
        assert!(curve[temps.len() - 1] - min_v > 0.1, "no rise after the minimum");
    }
}
