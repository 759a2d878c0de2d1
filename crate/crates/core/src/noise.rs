//! Harmonic noise: a damped harmonic oscillator driven by Gaussian white
//! noise,
//!
//! ```text
//! d phi / dt = mu
//! d mu  / dt = -2 Gamma mu - omega0^2 phi + sqrt(4 Gamma T) xi(t)
//! ```
//!
//! The stationary distribution is bivariate Gaussian with `Var(phi) =
//! T/omega0^2` and `Var(mu) = T`, and for `omega0 > sqrt(2) Gamma` the power
//! spectrum of `phi` peaks at `omega1 = sqrt(omega0^2 - 2 Gamma^2)`.
//!
//! Trajectories are integrated with a Heun stochastic predictor-corrector;
//! the step-size guard `dt * omega0 < 0.1` keeps the oscillation resolved.
//! Every path owns its RNG stream, derived deterministically from a 64-bit
//! seed, so ensembles are reproducible and can be generated concurrently.

use std::f64::consts::{PI, SQRT_2};
use std::io::{self, Write};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::stats::{mean, mean_and_se, pairwise_sum};

/// Parameters of the harmonic-noise process.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseParams {
    /// Damping coefficient `Gamma`.
    pub gamma: f64,
    /// Characteristic frequency `omega0`.
    pub omega0: f64,
    /// Noise strength `T`.
    pub temperature: f64,
}

impl NoiseParams {
    pub fn new(gamma: f64, omega0: f64, temperature: f64) -> Result<Self> {
        let check = |name: &'static str, v: f64| -> Result<()> {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(Error::InvalidParameter {
                    name,
                    reason: format!("must be finite and non-negative, got {v}"),
                })
            }
        };
        check("gamma", gamma)?;
        check("omega0", omega0)?;
        check("temperature", temperature)?;
        Ok(Self { gamma, omega0, temperature })
    }

    /// True in the oscillatory regime `omega0 > sqrt(2) Gamma`, the only
    /// regime the physics claims of this crate cover. The overdamped regime
    /// is still integrable, just flagged.
    pub fn is_oscillatory(&self) -> bool {
        self.omega0 > SQRT_2 * self.gamma
    }

    /// Spectral peak position `omega1 = sqrt(omega0^2 - 2 Gamma^2)`;
    /// undefined in the overdamped regime.
    pub fn peak_frequency(&self) -> Option<f64> {
        if self.is_oscillatory() {
            Some((self.omega0 * self.omega0 - 2.0 * self.gamma * self.gamma).sqrt())
        } else {
            None
        }
    }

    /// Stationary variance of `phi`, `T / omega0^2`.
    pub fn stationary_var_phi(&self) -> f64 {
        self.temperature / (self.omega0 * self.omega0)
    }
}

/// Instantaneous lattice phase and phase velocity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseState {
    pub phi: f64,
    pub mu: f64,
}

impl NoiseState {
    pub const ZERO: NoiseState = NoiseState { phi: 0.0, mu: 0.0 };
}

/// Initial condition for a trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StartCondition {
    /// Draw from the stationary distribution.
    Equilibrium,
    Given(NoiseState),
}

/// A sampled noise trajectory; the time axis is implied as `t_i = i * dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisePath {
    pub dt: f64,
    pub samples: Vec<NoiseState>,
    pub seed: u64,
}

impl NoisePath {
    /// Frozen-phase trajectory `phi(t) = phi`, useful for deterministic
    /// limits.
    pub fn constant(phi: f64, t_total: f64, dt: f64) -> NoisePath {
        let steps = (t_total / dt).ceil().max(1.0) as usize;
        NoisePath {
            dt,
            samples: vec![NoiseState { phi, mu: 0.0 }; steps + 1],
            seed: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Time covered by the path.
    pub fn duration(&self) -> f64 {
        self.dt * (self.samples.len().saturating_sub(1)) as f64
    }

    /// Linearly interpolated state at time `t`; errors outside the covered
    /// span (with a small tolerance for endpoint rounding).
    pub fn state_at(&self, t: f64) -> Result<NoiseState> {
        let span = self.duration();
        let tol = 1e-9 * self.dt.max(1.0);
        if t < -tol || t > span + tol {
            return Err(Error::Coverage { t });
        }
        let clamped = t.clamp(0.0, span);
        let pos = clamped / self.dt;
        let i = (pos.floor() as usize).min(self.samples.len() - 2);
        let frac = pos - i as f64;
        let a = self.samples[i];
        let b = self.samples[i + 1];
        Ok(NoiseState {
            phi: a.phi + frac * (b.phi - a.phi),
            mu: a.mu + frac * (b.mu - a.mu),
        })
    }

    pub fn phi_at(&self, t: f64) -> Result<f64> {
        Ok(self.state_at(t)?.phi)
    }

    /// Plain-text dump: header `# t phi mu`, one triple per line at 17
    /// significant digits.
    pub fn write_text<W: Write + ?Sized>(&self, w: &mut W) -> io::Result<()> {
        writeln!(w, "# t phi mu")?;
        for (i, s) in self.samples.iter().enumerate() {
            writeln!(w, "{:.16e} {:.16e} {:.16e}", i as f64 * self.dt, s.phi, s.mu)?;
        }
        Ok(())
    }
}

/// Draw one state from the stationary distribution: independent zero-mean
/// Gaussians with `Var(phi) = T/omega0^2` and `Var(mu) = T`.
pub fn sample_equilibrium<R: Rng + ?Sized>(params: &NoiseParams, rng: &mut R) -> Result<NoiseState> {
    if params.temperature == 0.0 {
        // Zero-temperature distribution collapses to the origin exactly.
        return Ok(NoiseState::ZERO);
    }
    if params.omega0 <= 0.0 {
        return Err(Error::InvalidParameter {
            name: "omega0",
            reason: "equilibrium phi distribution is degenerate at omega0 = 0 with T > 0".into(),
        });
    }
    let sigma_phi = (params.temperature).sqrt() / params.omega0;
    let sigma_mu = params.temperature.sqrt();
    let z1: f64 = rng.sample(StandardNormal);
    let z2: f64 = rng.sample(StandardNormal);
    Ok(NoiseState {
        phi: sigma_phi * z1,
        mu: sigma_mu * z2,
    })
}

fn check_step_size(params: &NoiseParams, dt: f64) -> Result<()> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::Stability(format!("dt must be positive and finite, got {dt}")));
    }
    if dt * params.omega0 >= 0.1 {
        return Err(Error::Stability(format!(
            "dt * omega0 = {} >= 0.1 leaves the noise oscillation unresolved",
            dt * params.omega0
        )));
    }
    if dt * params.gamma >= 0.1 {
        return Err(Error::Stability(format!(
            "dt * gamma = {} >= 0.1 leaves the damping unresolved",
            dt * params.gamma
        )));
    }
    Ok(())
}

/// One Heun predictor-corrector update of `(phi, mu)`.
///
/// `noise_increment` is a standard Gaussian draw; the same Wiener increment
/// `sqrt(4 Gamma T) sqrt(dt) xi` enters predictor and corrector, which gives
/// weak order 2 on the drift for this additive-noise system. Deterministic
/// given its inputs.
pub fn step(
    state: NoiseState,
    params: &NoiseParams,
    dt: f64,
    noise_increment: f64,
) -> Result<NoiseState> {
    check_step_size(params, dt)?;
    let w2 = params.omega0 * params.omega0;
    let kick = (4.0 * params.gamma * params.temperature).sqrt() * dt.sqrt() * noise_increment;

    let drift_mu = |phi: f64, mu: f64| -2.0 * params.gamma * mu - w2 * phi;

    let mu_dot0 = drift_mu(state.phi, state.mu);
    let phi_pred = state.phi + dt * state.mu;
    let mu_pred = state.mu + dt * mu_dot0 + kick;

    let mu_dot1 = drift_mu(phi_pred, mu_pred);
    Ok(NoiseState {
        phi: state.phi + 0.5 * dt * (state.mu + mu_pred),
        mu: state.mu + 0.5 * dt * (mu_dot0 + mu_dot1) + kick,
    })
}

/// Generate a full trajectory of `ceil(t_total/dt) + 1` states.
///
/// Identical `(params, dt, length, seed)` produce bit-identical paths; the
/// equilibrium start draws from the same seeded stream.
pub fn generate_path(
    params: &NoiseParams,
    t_total: f64,
    dt: f64,
    seed: u64,
    start: StartCondition,
) -> Result<NoisePath> {
    if !(t_total > 0.0 && t_total.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "t_total",
            reason: format!("must be positive and finite, got {t_total}"),
        });
    }
    check_step_size(params, dt)?;
    let steps = (t_total / dt).ceil() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = match start {
        StartCondition::Equilibrium => sample_equilibrium(params, &mut rng)?,
        StartCondition::Given(s) => s,
    };
    let mut samples = Vec::with_capacity(steps + 1);
    samples.push(state);
    for _ in 0..steps {
        let xi: f64 = rng.sample(StandardNormal);
        state = step(state, params, dt, xi)?;
        samples.push(state);
    }
    Ok(NoisePath { dt, samples, seed })
}

/// One pooled statistic with the standard error of its estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentEstimate {
    pub value: f64,
    pub std_error: f64,
}

/// First and second moments of an ensemble of paths.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathMoments {
    pub mean_phi: MomentEstimate,
    pub mean_mu: MomentEstimate,
    pub var_phi: MomentEstimate,
    pub var_mu: MomentEstimate,
    pub cov_phi_mu: MomentEstimate,
}

/// Pooled sample statistics over paths and times beyond `burn_in`.
///
/// Each path is reduced to its own time averages first; the pooled value is
/// the cross-path mean and the standard error comes from the cross-path
/// scatter, so correlations within a path never fake precision.
pub fn path_moments(paths: &[NoisePath], burn_in: f64) -> Result<PathMoments> {
    if paths.len() < 2 {
        return Err(Error::InvalidParameter {
            name: "paths",
            reason: format!("need at least 2 paths, got {}", paths.len()),
        });
    }
    let mut per_path = [const { Vec::new() }; 5];
    for path in paths {
        let skip = (burn_in / path.dt).ceil() as usize;
        if skip + 2 > path.len() {
            return Err(Error::InvalidParameter {
                name: "burn_in",
                reason: "burn-in leaves fewer than two samples in a path".into(),
            });
        }
        let tail = &path.samples[skip..];
        let n = tail.len() as f64;
        let phi = pairwise_sum(&tail.iter().map(|s| s.phi).collect::<Vec<_>>()) / n;
        let mu = pairwise_sum(&tail.iter().map(|s| s.mu).collect::<Vec<_>>()) / n;
        let phi2 = pairwise_sum(&tail.iter().map(|s| s.phi * s.phi).collect::<Vec<_>>()) / n;
        let mu2 = pairwise_sum(&tail.iter().map(|s| s.mu * s.mu).collect::<Vec<_>>()) / n;
        let phimu = pairwise_sum(&tail.iter().map(|s| s.phi * s.mu).collect::<Vec<_>>()) / n;
        // Unbiased in the iid limit; the Bessel factor uses the per-path count.
        let bessel = n / (n - 1.0);
        per_path[0].push(phi);
        per_path[1].push(mu);
        per_path[2].push((phi2 - phi * phi) * bessel);
        per_path[3].push((mu2 - mu * mu) * bessel);
        per_path[4].push((phimu - phi * mu) * bessel);
    }
    let est = |xs: &[f64]| {
        let (value, std_error) = mean_and_se(xs);
        MomentEstimate { value, std_error }
    };
    Ok(PathMoments {
        mean_phi: est(&per_path[0]),
        mean_mu: est(&per_path[1]),
        var_phi: est(&per_path[2]),
        var_mu: est(&per_path[3]),
        cov_phi_mu: est(&per_path[4]),
    })
}

/// Periodogram of the `phi` samples with the mean removed.
///
/// Returns `(angular frequency, spectral density)` for the non-negative
/// frequency bins `omega_j = 2 pi j / (n dt)`, density normalized as
/// `dt |X_j|^2 / n`. Requires at least 2^10 samples.
pub fn power_spectrum(path: &NoisePath) -> Result<Vec<(f64, f64)>> {
    let n = path.len();
    if n < (1 << 10) {
        return Err(Error::InvalidParameter {
            name: "path",
            reason: format!("periodogram needs at least 1024 samples, got {n}"),
        });
    }
    let m = mean(&path.samples.iter().map(|s| s.phi).collect::<Vec<_>>());
    let mut buf: Vec<Complex64> = path
        .samples
        .iter()
        .map(|s| Complex64::new(s.phi - m, 0.0))
        .collect();
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(n);
    fft.process(&mut buf);
    let norm = path.dt / n as f64;
    let d_omega = 2.0 * PI / (n as f64 * path.dt);
    Ok((0..=n / 2)
        .map(|j| (j as f64 * d_omega, buf[j].norm_sqr() * norm))
        .collect())
}

/// Frequency of the largest spectral density bin (DC excluded).
pub fn spectrum_peak(spectrum: &[(f64, f64)]) -> Option<f64> {
    spectrum
        .iter()
        .skip(1)
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .map(|&(w, _)| w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::{derive_seed, sample_variance};

    fn params(gamma: f64, omega0: f64, temperature: f64) -> NoiseParams {
        NoiseParams::new(gamma, omega0, temperature).unwrap()
    }

    #[test]
    fn regime_flag_and_peak() {
        let p = params(0.00762, 1.0, 0.5);
        assert!(p.is_oscillatory());
        let w1 = p.peak_frequency().unwrap();
        assert!((w1 - (1.0f64 - 2.0 * 0.00762f64.powi(2)).sqrt()).abs() < 1e-15);

        let overdamped = params(1.0, 1.0, 0.5);
        assert!(!overdamped.is_oscillatory());
        assert!(overdamped.peak_frequency().is_none());
    }

    #[test]
    fn equilibrium_variances_match_stationary_moments() {
        let p = params(0.00762, 1.0, 0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 100_000usize;
        let mut phis = Vec::with_capacity(n);
        let mut mus = Vec::with_capacity(n);
        for _ in 0..n {
            let s = sample_equilibrium(&p, &mut rng).unwrap();
            phis.push(s.phi);
            mus.push(s.mu);
        }
        let var_phi = sample_variance(&phis);
        let var_mu = sample_variance(&mus);
        // SE of a Gaussian sample variance: var * sqrt(2/(n-1)).
        let se = 0.5 * (2.0 / (n as f64 - 1.0)).sqrt();
        assert!((var_phi - 0.5).abs() < 3.0 * se, "var_phi = {var_phi}");
        assert!((var_mu - 0.5).abs() < 3.0 * se, "var_mu = {var_mu}");
    }

    #[test]
    fn equilibrium_zero_temperature_collapses() {
        let p = params(0.3, 2.0, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = sample_equilibrium(&p, &mut rng).unwrap();
        assert_eq!(s, NoiseState::ZERO);
    }

    #[test]
    fn equilibrium_direct_variance_evaluation() {
        let p = params(0.1, 2.0, 1.0);
        assert!((p.stationary_var_phi() - 0.25).abs() < 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 200_000usize;
        let phis: Vec<f64> = (0..n)
            .map(|_| sample_equilibrium(&p, &mut rng).unwrap().phi)
            .collect();
        let var = sample_variance(&phis);
        let se = 0.25 * (2.0 / (n as f64 - 1.0)).sqrt();
        assert!((var - 0.25).abs() < 3.0 * se, "var = {var}");
    }

    #[test]
    fn equilibrium_rejects_degenerate_omega0() {
        let p = params(0.1, 0.0, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(sample_equilibrium(&p, &mut rng).is_err());
    }

    #[test]
    fn step_rejects_large_dt() {
        let p = params(0.0, 1.0, 0.0);
        assert!(step(NoiseState { phi: 1.0, mu: 0.0 }, &p, 0.2, 0.0).is_err());
    }

    #[test]
    fn noise_free_limit_is_harmonic_oscillator() {
        // Gamma = T = 0, omega0 = 1: stepping to t = pi flips (phi, mu) sign.
        let p = params(0.0, 1.0, 0.0);
        let steps = 314usize * 4;
        let dt = std::f64::consts::PI / steps as f64;
        let mut s = NoiseState { phi: 1.0, mu: 0.0 };
        for _ in 0..steps {
            s = step(s, &p, dt, 0.0).unwrap();
        }
        assert!((s.phi + 1.0).abs() < 1e-4, "phi(pi) = {}", s.phi);
        assert!(s.mu.abs() < 1e-4, "mu(pi) = {}", s.mu);
    }

    #[test]
    fn deterministic_limit_conserves_energy() {
        // omega0^2 phi^2 + mu^2 conserved to relative 1e-6 over 1e4 steps at
        // dt * omega0 = 1e-3 (the Heun amplification at dt*omega0 = 1e-2
        // would be ~2.5e-5 over the same span).
        for omega0 in [0.5, 1.0, 3.0] {
            let p = params(0.0, omega0, 0.0);
            let dt = 1e-3 / omega0;
            let mut s = NoiseState { phi: 0.7, mu: -0.3 };
            let e0 = omega0 * omega0 * s.phi * s.phi + s.mu * s.mu;
            for _ in 0..10_000 {
                s = step(s, &p, dt, 0.0).unwrap();
            }
            let e1 = omega0 * omega0 * s.phi * s.phi + s.mu * s.mu;
            assert!(
                ((e1 - e0) / e0).abs() < 1e-6,
                "omega0 = {omega0}: relative drift {}",
                (e1 - e0) / e0
            );
        }
    }

    #[test]
    fn ergodic_average_matches_stationary_variance() {
        // Long-run time average of phi^2 equals T/omega0^2 within 5%.
        let p = params(0.00762, 1.0, 0.5);
        let dt = 1e-2;
        let mut rng = ChaCha8Rng::seed_from_u64(321);
        let mut s = sample_equilibrium(&p, &mut rng).unwrap();
        let burn = (1e3 / dt) as usize;
        let total = (1e5 / dt) as usize;
        let mut acc = 0.0f64;
        let mut count = 0usize;
        for i in 0..total {
            let xi: f64 = rng.sample(StandardNormal);
            s = step(s, &p, dt, xi).unwrap();
            if i >= burn {
                acc += s.phi * s.phi;
                count += 1;
            }
        }
        let avg = acc / count as f64;
        assert!((avg - 0.5).abs() < 0.05 * 0.5, "time-averaged phi^2 = {avg}");
    }

    #[test]
    fn paths_are_reproducible() {
        let p = params(0.1, 1.0, 0.5);
        let a = generate_path(&p, 10.0, 0.01, 42, StartCondition::Equilibrium).unwrap();
        let b = generate_path(&p, 10.0, 0.01, 42, StartCondition::Equilibrium).unwrap();
        assert_eq!(a, b);
        let c = generate_path(&p, 10.0, 0.01, 43, StartCondition::Equilibrium).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn zero_noise_from_origin_stays_at_origin() {
        let p = params(0.2, 1.5, 0.0);
        let path =
            generate_path(&p, 5.0, 0.01, 9, StartCondition::Given(NoiseState::ZERO)).unwrap();
        assert!(path.samples.iter().all(|s| s.phi == 0.0 && s.mu == 0.0));
        assert_eq!(path.len(), 501);
    }

    #[test]
    fn evolution_preserves_stationarity() {
        // Cross-path variance of phi at the final time stays T/omega0^2.
        let p = params(0.00762, 1.0, 0.5);
        let n_paths = 1000usize;
        let dt = 0.05;
        let finals: Vec<f64> = (0..n_paths)
            .map(|i| {
                let seed = derive_seed(1234, i as u64);
                let path =
                    generate_path(&p, 1000.0 * dt, dt, seed, StartCondition::Equilibrium).unwrap();
                path.samples.last().unwrap().phi
            })
            .collect();
        let var = sample_variance(&finals);
        let se = 0.5 * (2.0 / (n_paths as f64 - 1.0)).sqrt();
        assert!((var - 0.5).abs() < 3.0 * se, "final-time var = {var}");
    }

    #[test]
    fn moments_of_zero_paths_vanish() {
        let p = params(0.2, 1.5, 0.0);
        let paths: Vec<NoisePath> = (0..3)
            .map(|i| {
                generate_path(&p, 2.0, 0.01, i, StartCondition::Given(NoiseState::ZERO)).unwrap()
            })
            .collect();
        let m = path_moments(&paths, 0.0).unwrap();
        assert_eq!(m.mean_phi.value, 0.0);
        assert_eq!(m.mean_mu.value, 0.0);
        assert_eq!(m.var_phi.value, 0.0);
        assert_eq!(m.var_mu.value, 0.0);
        assert_eq!(m.cov_phi_mu.value, 0.0);
    }

    #[test]
    fn equilibrium_ensemble_moments() {
        let p = params(0.05, 1.0, 0.5);
        let paths: Vec<NoisePath> = (0..200)
            .map(|i| {
                let seed = derive_seed(777, i as u64);
                generate_path(&p, 200.0, 0.05, seed, StartCondition::Equilibrium).unwrap()
            })
            .collect();
        let m = path_moments(&paths, 0.0).unwrap();
        assert!(
            (m.var_phi.value - 0.5).abs() < 3.0 * m.var_phi.std_error,
            "var_phi = {} +- {}",
            m.var_phi.value,
            m.var_phi.std_error
        );
        assert!(
            (m.var_mu.value - 0.5).abs() < 3.0 * m.var_mu.std_error,
            "var_mu = {} +- {}",
            m.var_mu.value,
            m.var_mu.std_error
        );
        // Stationarity of Var(phi) forces <phi mu> = 0.
        assert!(
            m.cov_phi_mu.value.abs() < 3.0 * m.cov_phi_mu.std_error,
            "cov = {} +- {}",
            m.cov_phi_mu.value,
            m.cov_phi_mu.std_error
        );
    }

    #[test]
    fn moments_require_two_paths() {
        let p = params(0.1, 1.0, 0.5);
        let path = generate_path(&p, 2.0, 0.01, 1, StartCondition::Equilibrium).unwrap();
        assert!(path_moments(&[path], 0.0).is_err());
        assert!(path_moments(&[], 0.0).is_err());
    }

    #[test]
    fn spectrum_rejects_short_paths() {
        let p = params(0.1, 1.0, 0.5);
        let path = generate_path(&p, 5.0, 0.01, 1, StartCondition::Equilibrium).unwrap();
        assert!(path.len() < 1024);
        assert!(power_spectrum(&path).is_err());
    }

    #[test]
    fn spectrum_of_constant_path_is_zero() {
        let p = params(0.2, 1.5, 0.0);
        let path =
            generate_path(&p, 2048.0 * 0.02, 0.02, 5, StartCondition::Given(NoiseState::ZERO))
                .unwrap();
        let spec = power_spectrum(&path).unwrap();
        assert!(spec.iter().all(|&(_, s)| s == 0.0));
    }

    /// Average periodograms of independent paths and return the peak
    /// frequency and the bin width.
    fn averaged_peak(p: &NoiseParams, n_samples: usize, dt: f64, n_paths: usize) -> (f64, f64) {
        let t_total = (n_samples - 1) as f64 * dt;
        let mut avg: Vec<(f64, f64)> = Vec::new();
        for i in 0..n_paths {
            let seed = derive_seed(2024, i as u64);
            let path = generate_path(p, t_total, dt, seed, StartCondition::Equilibrium).unwrap();
            let spec = power_spectrum(&path).unwrap();
            if avg.is_empty() {
                avg = spec;
            } else {
                for (a, s) in avg.iter_mut().zip(spec) {
                    a.1 += s.1;
                }
            }
        }
        let d_omega = avg[1].0 - avg[0].0;
        (spectrum_peak(&avg).unwrap(), d_omega)
    }

    #[test]
    fn spectral_peak_sharp_noise() {
        let p = params(0.00762, 1.0, 0.5);
        let (peak, bin) = averaged_peak(&p, 8192, 0.05, 16);
        let w1 = p.peak_frequency().unwrap();
        assert!((peak - w1).abs() <= bin, "peak {peak}, expected {w1}, bin {bin}");
    }

    #[test]
    fn spectral_peak_broad_noise() {
        // omega0 = 2, Gamma = 0.5: peak at sqrt(4 - 0.5) ~ 1.871. The peak is
        // broad, so wide bins plus heavy averaging are needed for the argmax
        // to be meaningful.
        let p = params(0.5, 2.0, 1.0);
        let (peak, bin) = averaged_peak(&p, 1024, 0.03125, 400);
        let w1 = 3.5f64.sqrt();
        assert!((peak - w1).abs() <= bin, "peak {peak}, expected {w1}, bin {bin}");
    }

    #[test]
    fn stationary_samples_are_gaussian() {
        // Excess kurtosis of pooled stationary phi samples stays below 0.1
        // at 1e6 samples.
        let p = params(0.3, 1.0, 0.8);
        let dt = 0.05;
        let mut phis: Vec<f64> = Vec::with_capacity(1_000_000);
        for i in 0..4u64 {
            let path = generate_path(
                &p,
                250_000.0 * dt,
                dt,
                derive_seed(9000, i),
                StartCondition::Equilibrium,
            )
            .unwrap();
            phis.extend(path.samples.iter().map(|s| s.phi));
        }
        let n = phis.len() as f64;
        let m = mean(&phis);
        let m2 = phis.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
        let m4 = phis.iter().map(|x| (x - m).powi(4)).sum::<f64>() / n;
        let kurt = m4 / (m2 * m2) - 3.0;
        assert!(kurt.abs() < 0.1, "excess kurtosis = {kurt}");
    }

    #[test]
    fn path_dump_format() {
        let p = params(0.1, 1.0, 0.5);
        let path = generate_path(&p, 0.05, 0.01, 3, StartCondition::Equilibrium).unwrap();
        let mut out = Vec::new();
        path.write_text(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("# t phi mu"));
        let first = lines.next().unwrap();
        let cols: Vec<&str> = first.split_whitespace().collect();
        assert_eq!(cols.len(), 3);
        // Full double precision: values survive a parse round trip.
        let phi: f64 = cols[1].parse().unwrap();
        assert_eq!(phi.to_bits(), path.samples[0].phi.to_bits());
    }
}
