//! Split-operator spectral propagation of the 1D wavefunction in the
//! accelerated (gauge) frame,
//!
//! ```text
//! H = 1/2 (p + F0 t)^2 + V0 [cos(x) + cos(alpha (x - phi(t)))] + g |psi|^2
//! ```
//!
//! The Stark force enters only the kinetic phase, so the spatial grid stays
//! periodic and no absorbing boundary is needed. Ground-band survival is the
//! momentum-distribution weight inside the gauge-frame window
//! `p in [-1/2 - F0 t, 1/2 - F0 t)`, i.e. lab-frame momentum in the first
//! Brillouin zone, evaluated stroboscopically at `t = m T_B`.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::model::{potential, LatticeParams};
use crate::noise::{generate_path, NoiseParams, NoisePath, StartCondition};
use crate::stats::{derive_seed, mean_and_se, pairwise_sum};

/// Uniform periodic position grid over a box of `cells` lattice periods.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpatialGrid {
    /// Box size `L = 2 pi q`.
    pub length: f64,
    /// Number of points `N` (a power of two).
    pub points: usize,
    /// Grid spacing `dx = L / N`.
    pub spacing: f64,
    /// Number of unit lattice periods `q` in the box.
    pub cells: usize,
}

impl SpatialGrid {
    /// Box of `q >= 4` lattice periods sampled on `n >= 512` points, `n` a
    /// power of two.
    pub fn new(q: usize, n: usize) -> Result<Self> {
        if q < 4 {
            return Err(Error::InvalidParameter {
                name: "grid_q",
                reason: format!("box must span at least 4 lattice periods, got {q}"),
            });
        }
        if n < 512 || !n.is_power_of_two() {
            return Err(Error::InvalidParameter {
                name: "grid_n",
                reason: format!("point count must be a power of two >= 512, got {n}"),
            });
        }
        let length = 2.0 * PI * q as f64;
        Ok(Self {
            length,
            points: n,
            spacing: length / n as f64,
            cells: q,
        })
    }

    /// Grid sized for a run of `bloch_periods` Bloch periods at relative
    /// wavenumber `alpha`: the box is commensurate with the rational
    /// approximant of `alpha`, and the momentum span leaves room for the
    /// trapped component's downward gauge-momentum migration (one unit per
    /// period) plus Bragg-scattered escape channels.
    pub fn suggested(alpha: f64, bloch_periods: f64) -> Result<Self> {
        let (_, den) = best_rational(alpha, 64);
        let mut q = den;
        while q < 12 {
            q += den;
        }
        let span = 10.0 + bloch_periods.max(1.0);
        let mut n = 512usize;
        while (n as f64) < 2.0 * q as f64 * span {
            n *= 2;
        }
        Self::new(q, n)
    }

    pub fn position(&self, i: usize) -> f64 {
        i as f64 * self.spacing
    }

    /// Momentum of FFT bin `j`, in `[-pi/dx, pi/dx)` with spacing `2 pi / L`.
    pub fn momentum(&self, j: usize) -> f64 {
        let n = self.points;
        let signed = if j < n / 2 { j as f64 } else { j as f64 - n as f64 };
        signed * 2.0 * PI / self.length
    }
}

/// Best rational approximation `a/b` to `alpha` with `b <= max_denominator`.
pub fn best_rational(alpha: f64, max_denominator: usize) -> (usize, usize) {
    let mut best = (1usize, 1usize);
    let mut best_err = f64::INFINITY;
    for den in 1..=max_denominator {
        let num = (alpha * den as f64).round().max(1.0) as usize;
        let err = (alpha - num as f64 / den as f64).abs();
        if err < best_err - 1e-15 {
            best_err = err;
            best = (num, den);
        }
    }
    best
}

/// Complex amplitudes on a spatial grid; normalized to `sum |psi|^2 dx = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveFunction {
    pub grid: SpatialGrid,
    pub amplitudes: Vec<Complex64>,
    pub time: f64,
}

impl WaveFunction {
    pub fn norm_sqr(&self) -> f64 {
        let sq: Vec<f64> = self.amplitudes.iter().map(|a| a.norm_sqr()).collect();
        pairwise_sum(&sq) * self.grid.spacing
    }

    pub fn normalize(&mut self) {
        let norm = self.norm_sqr().sqrt();
        if norm > 0.0 {
            let inv = 1.0 / norm;
            for a in &mut self.amplitudes {
                *a *= inv;
            }
        }
    }

    /// Overlap integral `<self|other>`.
    pub fn overlap(&self, other: &WaveFunction) -> Complex64 {
        let acc: Complex64 = self
            .amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| a.conj() * b)
            .sum();
        acc * self.grid.spacing
    }

    pub fn fidelity(&self, other: &WaveFunction) -> f64 {
        self.overlap(other).norm_sqr()
    }
}

/// Knobs of a propagation run.
#[derive(Debug, Clone, PartialEq)]
pub struct EvolutionConfig {
    pub dt: f64,
    /// Quasi-1D cubic interaction strength `g` (density normalized to one).
    pub nonlinearity_g: f64,
    /// Preparation trap frequency.
    pub trap_omega: f64,
    /// Sorted measurement times.
    pub measure_times: Vec<f64>,
    /// Drop the second lattice term (single tilted lattice).
    pub single_lattice: bool,
    /// Band-mapping ramp time used by survival measurements: the lattice is
    /// adiabatically ramped off (force frozen) on a copy of the state before
    /// the momentum window is integrated, so the Bloch sidebands of the
    /// trapped component collapse into the first zone. Zero measures the
    /// bare window instead.
    pub band_map_ramp: f64,
}

impl EvolutionConfig {
    /// Defaults for one Bloch period: `dt = T_B / 2^14`, trap 0.01,
    /// a single stroboscopic measurement at `T_B`.
    pub fn for_force(f0: f64) -> Result<Self> {
        if f0 <= 0.0 {
            return Err(Error::InvalidParameter {
                name: "f0",
                reason: "default evolution config needs a positive Stark force".into(),
            });
        }
        let t_b = 1.0 / f0;
        Ok(Self {
            dt: t_b / (1 << 14) as f64,
            nonlinearity_g: 0.0,
            trap_omega: 0.01,
            measure_times: vec![t_b],
            single_lattice: false,
            band_map_ramp: DEFAULT_BAND_MAP_RAMP,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "dt",
                reason: format!("must be positive and finite, got {}", self.dt),
            });
        }
        if !(self.nonlinearity_g >= 0.0 && self.nonlinearity_g.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "nonlinearity_g",
                reason: format!("must be non-negative, got {}", self.nonlinearity_g),
            });
        }
        if !(self.trap_omega >= 0.0 && self.trap_omega.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "trap_omega",
                reason: format!("must be non-negative, got {}", self.trap_omega),
            });
        }
        if self.measure_times.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::InvalidParameter {
                name: "measure_times",
                reason: "must be sorted".into(),
            });
        }
        if !(self.band_map_ramp >= 0.0 && self.band_map_ramp.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "band_map_ramp",
                reason: format!("must be non-negative, got {}", self.band_map_ramp),
            });
        }
        Ok(())
    }
}

/// Ground-band survival versus time; revivals are allowed, so no
/// monotonicity is implied. `ensemble_std` holds the standard error of the
/// mean when the series was averaged over noise realizations.
#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalSeries {
    pub times: Vec<f64>,
    pub p_sur: Vec<f64>,
    pub ensemble_std: Option<Vec<f64>>,
}

impl SurvivalSeries {
    /// Survival at the measurement time nearest to `t`.
    pub fn at(&self, t: f64) -> Option<f64> {
        self.times
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - t).abs().total_cmp(&(b.1 - t).abs()))
            .map(|(i, _)| self.p_sur[i])
    }
}

/// Lattice phase as a function of time.
#[derive(Debug, Clone)]
pub enum PhaseProfile<'a> {
    Constant(f64),
    /// `phi(t) = intercept + slope * t` (moving lattice).
    Linear { intercept: f64, slope: f64 },
    /// Interpolated noise trajectory, shifted by a static offset.
    Path { path: &'a NoisePath, offset: f64 },
}

impl PhaseProfile<'_> {
    pub fn phi_at(&self, t: f64) -> Result<f64> {
        Ok(self.phi_and_velocity_at(t)?.0)
    }

    /// Phase and its instantaneous rate of change; the velocity drives the
    /// quasistatic phase continuation during band-mapping ramps.
    pub fn phi_and_velocity_at(&self, t: f64) -> Result<(f64, f64)> {
        match self {
            PhaseProfile::Constant(c) => Ok((*c, 0.0)),
            PhaseProfile::Linear { intercept, slope } => Ok((intercept + slope * t, *slope)),
            PhaseProfile::Path { path, offset } => {
                let s = path.state_at(t)?;
                Ok((offset + s.phi, s.mu))
            }
        }
    }
}

/// Reusable split-step engine: FFT plans plus the trigonometric tables of
/// the bichromatic potential on a fixed grid.
pub struct Stepper {
    params: LatticeParams,
    g: f64,
    single_lattice: bool,
    fft: Arc<dyn Fft<f64>>,
    ifft: Arc<dyn Fft<f64>>,
    scratch: Vec<Complex64>,
    mom_buf: Vec<Complex64>,
    cos_x: Vec<f64>,
    cos_ax: Vec<f64>,
    sin_ax: Vec<f64>,
    momenta: Vec<f64>,
}

impl Stepper {
    pub fn new(grid: SpatialGrid, params: LatticeParams, g: f64, single_lattice: bool) -> Self {
        let n = grid.points;
        let mut planner = FftPlanner::new();
        let fft = planner.plan_fft_forward(n);
        let ifft = planner.plan_fft_inverse(n);
        let scratch_len = fft
            .get_inplace_scratch_len()
            .max(ifft.get_inplace_scratch_len());
        let xs: Vec<f64> = (0..n).map(|i| grid.position(i)).collect();
        Self {
            params,
            g,
            single_lattice,
            fft,
            ifft,
            scratch: vec![Complex64::default(); scratch_len],
            mom_buf: vec![Complex64::default(); n],
            cos_x: xs.iter().map(|&x| x.cos()).collect(),
            cos_ax: xs.iter().map(|&x| (params.alpha * x).cos()).collect(),
            sin_ax: xs.iter().map(|&x| (params.alpha * x).sin()).collect(),
            momenta: (0..n).map(|j| grid.momentum(j)).collect(),
        }
    }

    /// Potential value on precomputed tables; `(ca, sa) = (cos, sin)(alpha phi)`.
    #[inline]
    fn lattice_potential(&self, i: usize, ca: f64, sa: f64) -> f64 {
        if self.single_lattice {
            self.params.v0 * self.cos_x[i]
        } else {
            self.params.v0 * (self.cos_x[i] + ca * self.cos_ax[i] + sa * self.sin_ax[i])
        }
    }

    /// Half-step of the position-space phase; `scale` multiplies the lattice
    /// part only (used by the band-mapping ramp).
    fn apply_potential_half(&self, wf: &mut WaveFunction, dt: f64, ca: f64, sa: f64, scale: f64) {
        let g = self.g;
        for (i, a) in wf.amplitudes.iter_mut().enumerate() {
            let v = scale * self.lattice_potential(i, ca, sa) + g * a.norm_sqr();
            let (s, c) = (-0.5 * dt * v).sin_cos();
            *a *= Complex64::new(c, s);
        }
    }

    /// Half-step with the static and second lattice scaled independently.
    fn apply_split_potential_half(
        &self,
        wf: &mut WaveFunction,
        dt: f64,
        ca: f64,
        sa: f64,
        s_static: f64,
        s_second: f64,
    ) {
        let g = self.g;
        let v0 = self.params.v0;
        for (i, a) in wf.amplitudes.iter_mut().enumerate() {
            let second = if self.single_lattice {
                0.0
            } else {
                ca * self.cos_ax[i] + sa * self.sin_ax[i]
            };
            let v = v0 * (s_static * self.cos_x[i] + s_second * second) + g * a.norm_sqr();
            let (s, c) = (-0.5 * dt * v).sin_cos();
            *a *= Complex64::new(c, s);
        }
    }

    /// Adiabatically switch the second lattice on over `ramp_time` with the
    /// Stark force off; `phi_of_ramp` gives the lattice phase as a function
    /// of the ramp-internal time in `[0, ramp_time]`. Used to start
    /// moving-lattice runs without dumping the static dressed state onto a
    /// detuned lattice.
    pub fn ramp_in_second_lattice(
        &mut self,
        wf: &mut WaveFunction,
        ramp_time: f64,
        phi_of_ramp: impl Fn(f64) -> f64,
    ) {
        if ramp_time <= 0.0 || self.params.v0 == 0.0 || self.single_lattice {
            return;
        }
        let n = 1024usize;
        let dt = ramp_time / n as f64;
        for k in 0..n {
            let tau = (k as f64 + 0.5) * dt;
            let s = 0.5 * (1.0 - (PI * tau / ramp_time).cos());
            let (sa, ca) = (self.params.alpha * phi_of_ramp(tau)).sin_cos();
            self.apply_split_potential_half(wf, dt, ca, sa, 1.0, s);
            self.kinetic_full(wf, dt, 0.0);
            self.apply_split_potential_half(wf, dt, ca, sa, 1.0, s);
        }
    }

    /// One Strang step at lattice phase `phi` (held fixed over the step; the
    /// caller samples it at the step midpoint). Kinetic phase uses
    /// `(p + F0 t_mid)^2 / 2`. Advances `wf.time` by `dt`.
    pub fn step(&mut self, wf: &mut WaveFunction, dt: f64, phi: f64) {
        let t_mid = wf.time + 0.5 * dt;
        let (sa, ca) = (self.params.alpha * phi).sin_cos();

        self.apply_potential_half(wf, dt, ca, sa, 1.0);
        self.kinetic_full(wf, dt, self.params.f0 * t_mid);
        self.apply_potential_half(wf, dt, ca, sa, 1.0);
        wf.time += dt;
    }

    /// Full kinetic step `exp(-i dt (p + shift)^2 / 2)` in momentum space,
    /// with the FFT round-trip normalization folded in.
    fn kinetic_full(&mut self, wf: &mut WaveFunction, dt: f64, shift: f64) {
        self.fft
            .process_with_scratch(&mut wf.amplitudes, &mut self.scratch);
        let inv_n = 1.0 / wf.grid.points as f64;
        for (a, &p) in wf.amplitudes.iter_mut().zip(&self.momenta) {
            let pk = p + shift;
            let (s, c) = (-0.5 * dt * pk * pk).sin_cos();
            *a *= Complex64::new(c * inv_n, s * inv_n);
        }
        self.ifft
            .process_with_scratch(&mut wf.amplitudes, &mut self.scratch);
    }

    /// Ground-band survival at time `t` measured after band mapping: on a
    /// copy of the state the lattice is ramped off over `ramp_time` with a
    /// half-cosine profile and the bare momentum window is integrated
    /// afterwards. This maps band populations onto Brillouin zones, so the
    /// trapped component's Bloch sidebands at lab momenta `+-1, +-alpha, ...`
    /// are counted as ground band, as they should be.
    ///
    /// During the ramp the Stark force is off (kinetic gauge shift frozen at
    /// the measurement instant) while the lattice phase continues
    /// quasistatically, `phi + mu tau`; freezing a moving lattice instead
    /// would re-dress the state it had decoupled from.
    pub fn band_mapped_survival(
        &mut self,
        wf: &WaveFunction,
        t: f64,
        phi: f64,
        mu: f64,
        ramp_time: f64,
    ) -> f64 {
        if ramp_time <= 0.0 || self.params.v0 == 0.0 {
            return self.survival(wf, t);
        }
        let n = 1024usize;
        let dt = ramp_time / n as f64;
        let shift = self.params.f0 * t;
        let mut copy = wf.clone();
        for k in 0..n {
            let tau = (k as f64 + 0.5) * dt;
            let s = 0.5 * (1.0 + (PI * tau / ramp_time).cos());
            let (sa, ca) = (self.params.alpha * (phi + mu * tau)).sin_cos();
            self.apply_potential_half(&mut copy, dt, ca, sa, s);
            self.kinetic_full(&mut copy, dt, shift);
            self.apply_potential_half(&mut copy, dt, ca, sa, s);
        }
        self.survival(&copy, t)
    }

    /// One imaginary-time step under `v_ext + g |psi|^2` (no Stark term),
    /// followed by renormalization.
    fn imaginary_step(&mut self, wf: &mut WaveFunction, dtau: f64, v_ext: &[f64]) {
        let g = self.g;
        let half = |amps: &mut [Complex64]| {
            for (a, &v) in amps.iter_mut().zip(v_ext) {
                *a *= (-0.5 * dtau * (v + g * a.norm_sqr())).exp();
            }
        };
        half(&mut wf.amplitudes);
        self.fft
            .process_with_scratch(&mut wf.amplitudes, &mut self.scratch);
        let inv_n = 1.0 / wf.grid.points as f64;
        for (a, &p) in wf.amplitudes.iter_mut().zip(&self.momenta) {
            *a *= (-0.5 * dtau * p * p).exp() * inv_n;
        }
        self.ifft
            .process_with_scratch(&mut wf.amplitudes, &mut self.scratch);
        half(&mut wf.amplitudes);
        wf.normalize();
    }

    /// Energy `<T> + <v_ext> + g/2 int |psi|^4` of a normalized state.
    fn energy(&mut self, wf: &WaveFunction, v_ext: &[f64]) -> f64 {
        self.mom_buf.copy_from_slice(&wf.amplitudes);
        self.fft
            .process_with_scratch(&mut self.mom_buf, &mut self.scratch);
        let n = wf.grid.points as f64;
        let dp_weight = wf.grid.spacing / n;
        let kin: Vec<f64> = self
            .mom_buf
            .iter()
            .zip(&self.momenta)
            .map(|(a, &p)| 0.5 * p * p * a.norm_sqr() * dp_weight)
            .collect();
        let pot: Vec<f64> = wf
            .amplitudes
            .iter()
            .zip(v_ext)
            .map(|(a, &v)| {
                let rho = a.norm_sqr();
                (v + 0.5 * self.g * rho) * rho * wf.grid.spacing
            })
            .collect();
        pairwise_sum(&kin) + pairwise_sum(&pot)
    }

    /// Momentum-window survival using this stepper's FFT plan.
    fn survival(&mut self, wf: &WaveFunction, t: f64) -> f64 {
        self.mom_buf.copy_from_slice(&wf.amplitudes);
        self.fft
            .process_with_scratch(&mut self.mom_buf, &mut self.scratch);
        let weight = wf.grid.spacing / wf.grid.points as f64;
        let lo = -0.5 - self.params.f0 * t;
        let hi = 0.5 - self.params.f0 * t;
        let mut acc = 0.0;
        for (a, &p) in self.mom_buf.iter().zip(&self.momenta) {
            if p >= lo - WINDOW_TOL && p < hi - WINDOW_TOL {
                acc += a.norm_sqr() * weight;
            }
        }
        acc.clamp(0.0, 1.0)
    }
}

/// Half-open band-window edges are compared with this absolute tolerance so
/// stroboscopic rounding cannot flip an edge bin.
const WINDOW_TOL: f64 = 1e-10;

/// Default band-mapping ramp time. Long against the inverse zone-center gap
/// (about 2 in these units), short against the Bloch period.
pub const DEFAULT_BAND_MAP_RAMP: f64 = 60.0;

/// Imaginary-time relaxation steps: a coarse stage does the physical
/// convergence, later stages shrink the Trotter bias.
const IMAG_TIME_STAGES: [f64; 3] = [0.5, 0.1, 0.02];
const IMAG_TIME_TOL: f64 = 1e-11;
const IMAG_TIME_MAX_STEPS: usize = 1_000_000;

/// Relax to the ground state of the lattice potential at phase `phi0` plus
/// the harmonic preparation trap, by imaginary-time split-operator iteration
/// with renormalization until the energy change per step falls below 1e-11.
///
/// The trap is centered in the box; the result is normalized and nodeless.
pub fn prepare_ground_state(
    grid: SpatialGrid,
    params: &LatticeParams,
    config: &EvolutionConfig,
) -> Result<WaveFunction> {
    config.validate()?;
    if config.trap_omega <= 0.0 {
        return Err(Error::InvalidParameter {
            name: "trap_omega",
            reason: "ground-state preparation needs a positive trap frequency".into(),
        });
    }
    let n = grid.points;
    let center = 0.5 * grid.length;
    let omega = config.trap_omega;
    let v_ext: Vec<f64> = (0..n)
        .map(|i| {
            let x = grid.position(i);
            let lattice = if config.single_lattice {
                params.v0 * x.cos()
            } else {
                potential(x, params.phi0, params)
            };
            lattice + 0.5 * omega * omega * (x - center) * (x - center)
        })
        .collect();

    let mut wf = WaveFunction {
        grid,
        amplitudes: (0..n)
            .map(|i| {
                let x = grid.position(i) - center;
                Complex64::new((-0.5 * omega * x * x).exp(), 0.0)
            })
            .collect(),
        time: 0.0,
    };
    wf.normalize();

    let mut stepper = Stepper::new(grid, *params, config.nonlinearity_g, config.single_lattice);
    let mut total_steps = 0usize;
    for &dtau in &IMAG_TIME_STAGES {
        let mut prev = f64::INFINITY;
        loop {
            stepper.imaginary_step(&mut wf, dtau, &v_ext);
            total_steps += 1;
            if total_steps > IMAG_TIME_MAX_STEPS {
                return Err(Error::Convergence(format!(
                    "imaginary-time relaxation did not settle within {IMAG_TIME_MAX_STEPS} steps"
                )));
            }
            let e = stepper.energy(&wf, &v_ext);
            if (e - prev).abs() < IMAG_TIME_TOL {
                break;
            }
            prev = e;
        }
    }
    wf.time = 0.0;
    Ok(wf)
}

/// Energy of `wf` under the preparation Hamiltonian (lattice at phase `phi`,
/// trap from `config`, no Stark term). Exposed for grid-convergence checks.
pub fn preparation_energy(
    wf: &WaveFunction,
    phi: f64,
    params: &LatticeParams,
    config: &EvolutionConfig,
) -> f64 {
    let grid = wf.grid;
    let center = 0.5 * grid.length;
    let omega = config.trap_omega;
    let v_ext: Vec<f64> = (0..grid.points)
        .map(|i| {
            let x = grid.position(i);
            let lattice = if config.single_lattice {
                params.v0 * x.cos()
            } else {
                potential(x, phi, params)
            };
            lattice + 0.5 * omega * omega * (x - center) * (x - center)
        })
        .collect();
    let mut stepper = Stepper::new(grid, *params, config.nonlinearity_g, config.single_lattice);
    stepper.energy(wf, &v_ext)
}

/// One public Strang step; prefer [`Stepper`] for long runs so FFT plans and
/// trig tables are reused.
pub fn split_step(wf: &mut WaveFunction, dt: f64, phi: f64, params: &LatticeParams, g: f64) {
    let mut stepper = Stepper::new(wf.grid, *params, g, false);
    stepper.step(wf, dt, phi);
}

/// Propagate to `t_final`, measuring ground-band survival at the configured
/// times (each snapped to the nearest step boundary).
pub fn evolve(
    mut wf: WaveFunction,
    profile: &PhaseProfile<'_>,
    t_final: f64,
    params: &LatticeParams,
    config: &EvolutionConfig,
) -> Result<(WaveFunction, SurvivalSeries)> {
    config.validate()?;
    if !(t_final > 0.0 && t_final.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "t_final",
            reason: format!("must be positive and finite, got {t_final}"),
        });
    }
    profile.phi_at(0.0)?;
    profile.phi_at(t_final)?;
    let dt = config.dt;
    let n_steps = ((t_final / dt) - 1e-9).ceil().max(1.0) as usize;
    let mut targets: Vec<usize> = Vec::with_capacity(config.measure_times.len());
    for &m in &config.measure_times {
        if m < -0.5 * dt || m > (n_steps as f64 + 0.5) * dt {
            return Err(Error::InvalidParameter {
                name: "measure_times",
                reason: format!("measurement at t = {m} lies outside the run span"),
            });
        }
        targets.push(((m / dt).round() as usize).min(n_steps));
    }

    let mut stepper = Stepper::new(wf.grid, *params, config.nonlinearity_g, config.single_lattice);
    let mut times = Vec::with_capacity(targets.len());
    let mut p_sur = Vec::with_capacity(targets.len());
    let mut cursor = 0usize;
    while cursor < targets.len() && targets[cursor] == 0 {
        times.push(0.0);
        let (phi_m, mu_m) = profile.phi_and_velocity_at(0.0)?;
        p_sur.push(stepper.band_mapped_survival(&wf, 0.0, phi_m, mu_m, config.band_map_ramp));
        cursor += 1;
    }
    for k in 0..n_steps {
        let t_mid = (k as f64 + 0.5) * dt;
        let phi = profile.phi_at(t_mid)?;
        stepper.step(&mut wf, dt, phi);
        // Exact product, so stroboscopic instants do not accumulate rounding.
        wf.time = (k + 1) as f64 * dt;
        while cursor < targets.len() && targets[cursor] == k + 1 {
            times.push(wf.time);
            let (phi_m, mu_m) = profile.phi_and_velocity_at(wf.time.min(t_final))?;
            p_sur.push(stepper.band_mapped_survival(&wf, wf.time, phi_m, mu_m, config.band_map_ramp));
            cursor += 1;
        }
    }
    Ok((
        wf,
        SurvivalSeries {
            times,
            p_sur,
            ensemble_std: None,
        },
    ))
}

/// Momentum distribution `(p, |psi~(p)|^2 dp)`, sorted by momentum and
/// probability-normalized.
pub fn momentum_distribution(wf: &WaveFunction) -> Vec<(f64, f64)> {
    let n = wf.grid.points;
    let mut buf = wf.amplitudes.clone();
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(n);
    fft.process(&mut buf);
    let weight = wf.grid.spacing / n as f64;
    let mut out: Vec<(f64, f64)> = (0..n)
        .map(|j| (wf.grid.momentum(j), buf[j].norm_sqr() * weight))
        .collect();
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    out
}

/// Ground-band survival probability of `wf` at time `t`: momentum weight in
/// the gauge-frame window `[-1/2 - F0 t, 1/2 - F0 t)`.
///
/// Meaningful stroboscopically (`t = m T_B`), when the escaped fraction has
/// been accelerated past the zone edge; [`is_stroboscopic`] reports whether a
/// given time qualifies.
pub fn survival_probability(wf: &WaveFunction, t: f64, params: &LatticeParams) -> f64 {
    let mut stepper = Stepper::new(wf.grid, *params, 0.0, false);
    stepper.survival(wf, t)
}

/// Whether `t` is within `tol` of a stroboscopic instant `m T_B`.
pub fn is_stroboscopic(t: f64, t_b: f64, tol: f64) -> bool {
    let m = (t / t_b).round();
    (t - m * t_b).abs() <= tol
}

/// Mean lab-frame quasimomentum, folded into `[-1/2, 1/2)`.
pub fn mean_lab_quasimomentum(wf: &WaveFunction, t: f64, params: &LatticeParams) -> f64 {
    let fold = |x: f64| x - (x + 0.5).floor();
    momentum_distribution(wf)
        .iter()
        .map(|&(p, w)| fold(p + params.f0 * t) * w)
        .sum()
}

/// Geometric mean of the per-period survival ratio `P(t + T_B) / P(t)` over
/// stroboscopic times `t > 5 T_B`.
pub fn long_time_survival_rate(series: &SurvivalSeries, t_b: f64) -> Result<f64> {
    // Measurement times are snapped to step boundaries, so accept anything
    // within a thousandth of the period of the stroboscopic comb; the
    // band-window slide over that mismatch is negligible.
    let tol = 1e-3 * t_b;
    // Map stroboscopic index m -> survival.
    let mut by_period: Vec<(u64, f64)> = Vec::new();
    for (&t, &p) in series.times.iter().zip(&series.p_sur) {
        let m = (t / t_b).round();
        if m >= 0.0 && (t - m * t_b).abs() <= tol {
            by_period.push((m as u64, p));
        }
    }
    let max_m = by_period.iter().map(|&(m, _)| m).max().unwrap_or(0);
    if max_m < 10 {
        return Err(Error::InvalidParameter {
            name: "series",
            reason: format!(
                "long-time rate needs stroboscopic samples spanning at least 10 Bloch periods, got {max_m}"
            ),
        });
    }
    let mut log_ratios = Vec::new();
    for w in by_period.windows(2) {
        let ((m0, p0), (m1, p1)) = (w[0], w[1]);
        if m1 != m0 + 1 || m0 < 6 {
            continue;
        }
        if p0 <= 0.0 || p1 <= 0.0 {
            return Err(Error::Numerical(
                "long-time rate undefined: survival reached zero".into(),
            ));
        }
        log_ratios.push((p1 / p0).ln());
    }
    if log_ratios.is_empty() {
        return Err(Error::InvalidParameter {
            name: "series",
            reason: "no stroboscopic pairs beyond t = 5 T_B".into(),
        });
    }
    Ok((pairwise_sum(&log_ratios) / log_ratios.len() as f64).exp())
}

/// Propagate `n_realizations` independent noise realizations from a shared
/// prepared ground state and return every survival series. Realizations run
/// concurrently with deterministic sub-seeding derived from `master_seed`.
pub fn run_realizations(
    params: &LatticeParams,
    noise_params: &NoiseParams,
    grid: SpatialGrid,
    config: &EvolutionConfig,
    n_realizations: usize,
    master_seed: u64,
) -> Result<Vec<SurvivalSeries>> {
    if n_realizations == 0 {
        return Err(Error::InvalidParameter {
            name: "n_realizations",
            reason: "need at least 1 realization".into(),
        });
    }
    if config.measure_times.is_empty() {
        return Err(Error::InvalidParameter {
            name: "measure_times",
            reason: "ensemble run needs at least one measurement time".into(),
        });
    }
    let t_final = *config.measure_times.last().unwrap();
    let ground = prepare_ground_state(grid, params, config)?;

    let runs: Vec<Result<SurvivalSeries>> = (0..n_realizations)
        .into_par_iter()
        .map(|i| {
            let seed = derive_seed(master_seed, i as u64);
            let path = generate_path(
                noise_params,
                t_final,
                config.dt,
                seed,
                StartCondition::Equilibrium,
            )?;
            let profile = PhaseProfile::Path {
                path: &path,
                offset: params.phi0,
            };
            let (_, series) = evolve(ground.clone(), &profile, t_final, params, config)?;
            Ok(series)
        })
        .collect();

    let mut all = Vec::with_capacity(n_realizations);
    for r in runs {
        all.push(r?);
    }
    Ok(all)
}

/// Average ground-band survival over `n_realizations` independent noise
/// trajectories. Returns the per-time ensemble mean and the standard error
/// of that mean; identical inputs give identical output regardless of the
/// worker count.
pub fn run_ensemble(
    params: &LatticeParams,
    noise_params: &NoiseParams,
    grid: SpatialGrid,
    config: &EvolutionConfig,
    n_realizations: usize,
    master_seed: u64,
) -> Result<SurvivalSeries> {
    if n_realizations < 2 {
        return Err(Error::InvalidParameter {
            name: "n_realizations",
            reason: format!("need at least 2 realizations, got {n_realizations}"),
        });
    }
    let all = run_realizations(params, noise_params, grid, config, n_realizations, master_seed)?;
    let times = all[0].times.clone();
    let mut means = Vec::with_capacity(times.len());
    let mut ses = Vec::with_capacity(times.len());
    for k in 0..times.len() {
        let column: Vec<f64> = all.iter().map(|s| s.p_sur[k]).collect();
        let (m, se) = mean_and_se(&column);
        means.push(m);
        ses.push(se);
    }
    Ok(SurvivalSeries {
        times,
        p_sur: means,
        ensemble_std: Some(ses),
    })
}
