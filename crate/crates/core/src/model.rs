//! Static system parameters, derived Bloch scales, the bichromatic lattice
//! potential, and conversions between dimensionless, SI and experimental
//! units.
//!
//! The dimensionless Hamiltonian is
//!
//! ```text
//! H = -1/2 d^2/dx^2 + V0 [cos(x) + cos(alpha (x - phi(t)))] - F0 x
//! ```
//!
//! with the lattice period fixed at 2*pi and the Brillouin zone at
//! [-1/2, 1/2). The Stark term `-F0 x` is applied by the propagator's frame
//! choice, not by [`potential`], which keeps the grid periodicity exact.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Reduced Planck constant, J s.
pub const HBAR: f64 = 1.054_571_817e-34;
/// Mass of a rubidium-87 atom, kg.
pub const RB87_MASS: f64 = 1.443_160_60e-25;
/// Lattice spacing of the reference experimental setup, m.
pub const DEFAULT_LATTICE_SPACING: f64 = 426e-9;

/// Static lattice parameters of the dimensionless Hamiltonian.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatticeParams {
    /// Lattice depth `V0` (dimensionless energy).
    pub v0: f64,
    /// Stark force `F0`.
    pub f0: f64,
    /// Relative wavenumber of the second lattice.
    pub alpha: f64,
    /// Initial phase offset of the second lattice.
    pub phi0: f64,
}

impl LatticeParams {
    /// Validated constructor. `v0` and `f0` may be zero so the free-particle
    /// and untilted limits used by the solver checks stay expressible.
    pub fn new(v0: f64, f0: f64, alpha: f64, phi0: f64) -> Result<Self> {
        let finite = v0.is_finite() && f0.is_finite() && alpha.is_finite() && phi0.is_finite();
        if !finite {
            return Err(Error::InvalidParameter {
                name: "lattice",
                reason: "all lattice parameters must be finite".into(),
            });
        }
        if v0 < 0.0 {
            return Err(Error::InvalidParameter {
                name: "v0",
                reason: format!("lattice depth must be non-negative, got {v0}"),
            });
        }
        if f0 < 0.0 {
            return Err(Error::InvalidParameter {
                name: "f0",
                reason: format!("Stark force must be non-negative, got {f0}"),
            });
        }
        if !(alpha > 0.0 && alpha <= 4.0) {
            return Err(Error::InvalidParameter {
                name: "alpha",
                reason: format!("relative wavenumber must lie in (0, 4], got {alpha}"),
            });
        }
        Ok(Self { v0, f0, alpha, phi0 })
    }
}

/// Bloch period and frequency of the tilted lattice.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlochScales {
    /// Bloch period `T_B = 1/F0`.
    pub t_b: f64,
    /// Bloch frequency `omega_B = 2 pi F0`.
    pub omega_b: f64,
}

/// Derive the Bloch scales; errors for a vanishing force where the period
/// diverges.
pub fn bloch_scales(params: &LatticeParams) -> Result<BlochScales> {
    if params.f0 <= 0.0 {
        return Err(Error::InvalidParameter {
            name: "f0",
            reason: "Bloch scales require a positive Stark force".into(),
        });
    }
    Ok(BlochScales {
        t_b: 1.0 / params.f0,
        omega_b: 2.0 * PI * params.f0,
    })
}

/// The periodic part of the potential, `V0 [cos(x) + cos(alpha (x - phi))]`.
pub fn potential(x: f64, phi: f64, params: &LatticeParams) -> f64 {
    params.v0 * ((x).cos() + (params.alpha * (x - phi)).cos())
}

/// Physical constants anchoring the dimensionless unit system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitContext {
    /// Recoil energy `E_rec = hbar^2 k_L^2 / (2 M)`, J.
    pub recoil_energy: f64,
    /// Lattice laser wavenumber `k_L`, 1/m.
    pub laser_wavenumber: f64,
    /// Atomic mass `M`, kg.
    pub atom_mass: f64,
}

impl UnitContext {
    /// Build a context from the laser wavenumber and atom mass; the recoil
    /// energy is derived so the type invariant holds by construction.
    pub fn new(laser_wavenumber: f64, atom_mass: f64) -> Result<Self> {
        if !(laser_wavenumber > 0.0 && laser_wavenumber.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "laser_wavenumber",
                reason: "must be positive and finite".into(),
            });
        }
        if !(atom_mass > 0.0 && atom_mass.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "atom_mass",
                reason: "must be positive and finite".into(),
            });
        }
        Ok(Self {
            recoil_energy: HBAR * HBAR * laser_wavenumber * laser_wavenumber / (2.0 * atom_mass),
            laser_wavenumber,
            atom_mass,
        })
    }

    /// Rubidium-87 in a 426 nm-spaced lattice (`k_L = pi / d_l`).
    pub fn rb87_426nm() -> Self {
        Self::new(PI / DEFAULT_LATTICE_SPACING, RB87_MASS)
            .expect("reference constants are valid")
    }
}

impl Default for UnitContext {
    fn default() -> Self {
        Self::rb87_426nm()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Quantity {
    Energy,
    Time,
    Space,
    Force,
    Potential,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnitSystem {
    Si,
    Dimensionless,
    Experimental,
}

/// Numeric value of one SI unit of `quantity` expressed in `system`.
fn unit_factor(quantity: Quantity, system: UnitSystem, ctx: &UnitContext) -> f64 {
    let e_rec = ctx.recoil_energy;
    let k_l = ctx.laser_wavenumber;
    match (quantity, system) {
        (_, UnitSystem::Si) => 1.0,
        (Quantity::Energy, UnitSystem::Dimensionless) => 1.0 / (8.0 * e_rec),
        (Quantity::Energy, UnitSystem::Experimental) => 1.0 / e_rec,
        (Quantity::Time, UnitSystem::Dimensionless) => 8.0 * e_rec / HBAR,
        (Quantity::Time, UnitSystem::Experimental) => 1.0,
        (Quantity::Space, UnitSystem::Dimensionless) => 2.0 * k_l,
        (Quantity::Space, UnitSystem::Experimental) => 2.0 * k_l,
        (Quantity::Force, UnitSystem::Dimensionless) => 1.0 / (16.0 * e_rec * k_l),
        (Quantity::Force, UnitSystem::Experimental) => PI / (e_rec * k_l),
        (Quantity::Potential, UnitSystem::Dimensionless) => 1.0 / (8.0 * e_rec),
        (Quantity::Potential, UnitSystem::Experimental) => 1.0 / e_rec,
    }
}

/// Convert `value` of `quantity` between unit systems.
///
/// Identity conversions return the value unchanged; round trips are exact up
/// to floating rounding.
pub fn convert(
    value: f64,
    quantity: Quantity,
    from: UnitSystem,
    to: UnitSystem,
    ctx: &UnitContext,
) -> f64 {
    if from == to {
        return value;
    }
    value * unit_factor(quantity, to, ctx) / unit_factor(quantity, from, ctx)
}
