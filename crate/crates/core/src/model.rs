//! Grid geometry, medium parameters, field and adjoint states, and the map
//! from SI quantities to the dimensionless variables used everywhere else.

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::field::{ScalarField, VectorField};
use crate::ops::{self, StencilOrder};

pub const MIN_CELLS: usize = 4;

/// Uniform periodic box with `n` cells of width `d` along each axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    pub dx: f64,
    pub dy: f64,
    pub dz: f64,
}

impl GridSpec {
    pub fn new(n: [usize; 3], d: [f64; 3]) -> Result<Self> {
        for (axis, (&cells, &width)) in n.iter().zip(&d).enumerate() {
            if cells < MIN_CELLS {
                return Err(LabError::InvalidGrid(format!(
                    "axis {axis} has {cells} cells, at least {MIN_CELLS} required"
                )));
            }
            let length = cells as f64 * width;
            if !(width > 0.0 && length.is_finite()) {
                return Err(LabError::InvalidGrid(format!(
                    "axis {axis} spacing {width} does not give a finite positive length"
                )));
            }
        }
        Ok(Self {
            nx: n[0],
            ny: n[1],
            nz: n[2],
            dx: d[0],
            dy: d[1],
            dz: d[2],
        })
    }

    /// `n`³ cells spanning a cube of side `length`.
    pub fn cube(n: usize, length: f64) -> Result<Self> {
        let d = length / n as f64;
        Self::new([n; 3], [d; 3])
    }

    pub fn dims(&self) -> [usize; 3] {
        [self.nx, self.ny, self.nz]
    }

    pub fn spacing(&self) -> [f64; 3] {
        [self.dx, self.dy, self.dz]
    }

    pub fn lengths(&self) -> [f64; 3] {
        [
            self.nx as f64 * self.dx,
            self.ny as f64 * self.dy,
            self.nz as f64 * self.dz,
        ]
    }

    pub fn min_spacing(&self) -> f64 {
        self.dx.min(self.dy).min(self.dz)
    }

    pub fn max_spacing(&self) -> f64 {
        self.dx.max(self.dy).max(self.dz)
    }

    pub fn cell_volume(&self) -> f64 {
        self.dx * self.dy * self.dz
    }

    pub fn num_points(&self) -> usize {
        self.nx * self.ny * self.nz
    }

    /// Node coordinates; node (0, 0, 0) sits at the origin.
    pub fn coords(&self, i: usize, j: usize, k: usize) -> [f64; 3] {
        [i as f64 * self.dx, j as f64 * self.dy, k as f64 * self.dz]
    }

    /// Coordinates of the node stored at flat offset `idx`.
    pub fn coords_of(&self, idx: usize) -> [f64; 3] {
        let k = idx % self.nz;
        let j = (idx / self.nz) % self.ny;
        let i = idx / (self.ny * self.nz);
        self.coords(i, j, k)
    }

    pub fn scalar(&self, f: impl Fn([f64; 3]) -> f64) -> ScalarField {
        ScalarField::from_fn(self.dims(), |i, j, k| f(self.coords(i, j, k)))
    }

    pub fn vector(&self, f: impl Fn([f64; 3]) -> [f64; 3]) -> VectorField {
        VectorField::from_fn(self.dims(), |i, j, k| f(self.coords(i, j, k)))
    }
}

/// Dimensionless electric and magnetic conductivities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MediumParams {
    pub sigma_e: f64,
    pub sigma_m: f64,
}

impl MediumParams {
    pub fn new(sigma_e: f64, sigma_m: f64) -> Result<Self> {
        for (name, v) in [("sigma_e", sigma_e), ("sigma_m", sigma_m)] {
            if !v.is_finite() || v < 0.0 {
                return Err(LabError::InvalidParameter(format!(
                    "{name} = {v} must be finite and nonnegative"
                )));
            }
        }
        Ok(Self { sigma_e, sigma_m })
    }

    pub fn equal(sigma: f64) -> Result<Self> {
        Self::new(sigma, sigma)
    }

    pub fn vacuum() -> Self {
        Self {
            sigma_e: 0.0,
            sigma_m: 0.0,
        }
    }

    pub fn sigmas_equal(&self) -> bool {
        self.sigma_e == self.sigma_m
    }
}

/// SI speed of light and vacuum permeability.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalConstants {
    pub c: f64,
    pub mu0: f64,
}

impl PhysicalConstants {
    pub const SI: PhysicalConstants = PhysicalConstants {
        c: 299_792_458.0,
        mu0: 1.256_637_062_12e-6,
    };

    pub fn new(c: f64, mu0: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite() && mu0 > 0.0 && mu0.is_finite()) {
            return Err(LabError::InvalidParameter(format!(
                "physical constants must be finite and positive (c = {c}, mu0 = {mu0})"
            )));
        }
        Ok(Self { c, mu0 })
    }
}

/// Electromagnetic state at one instant. `b` holds the rescaled field `c B`.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldState {
    pub t: f64,
    pub e: VectorField,
    pub b: VectorField,
}

impl FieldState {
    pub fn zeros(grid: &GridSpec, t: f64) -> Self {
        Self {
            t,
            e: VectorField::zeros(grid.dims()),
            b: VectorField::zeros(grid.dims()),
        }
    }

    pub fn validate(&self, grid: &GridSpec) -> Result<()> {
        self.e.ensure_dims(grid.dims())?;
        self.b.ensure_dims(grid.dims())?;
        if !(self.e.all_finite() && self.b.all_finite() && self.t.is_finite()) {
            return Err(LabError::NonFinite {
                what: format!("field state at t = {}", self.t),
            });
        }
        Ok(())
    }

    pub fn max_abs(&self) -> f64 {
        self.e.max_abs().max(self.b.max_abs())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChargeDensities {
    pub rho_e: ScalarField,
    pub rho_m: ScalarField,
}

/// Adjoint variables. `v` pairs with the Faraday equation, `w` with the
/// Ampère equation, `r_e` and `r_m` with the two Gauss constraints.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjointState {
    pub t: f64,
    pub v: VectorField,
    pub w: VectorField,
    pub r_e: ScalarField,
    pub r_m: ScalarField,
}

impl AdjointState {
    pub fn zeros(grid: &GridSpec, t: f64) -> Self {
        Self {
            t,
            v: VectorField::zeros(grid.dims()),
            w: VectorField::zeros(grid.dims()),
            r_e: ScalarField::zeros(grid.dims()),
            r_m: ScalarField::zeros(grid.dims()),
        }
    }

    /// Adjoint with vanishing multipliers for the Gauss constraints.
    pub fn from_vw(t: f64, v: VectorField, w: VectorField) -> Self {
        let dims = v.dims();
        Self {
            t,
            v,
            w,
            r_e: ScalarField::zeros(dims),
            r_m: ScalarField::zeros(dims),
        }
    }

    pub fn validate(&self, grid: &GridSpec) -> Result<()> {
        let dims = grid.dims();
        self.v.ensure_dims(dims)?;
        self.w.ensure_dims(dims)?;
        self.r_e.ensure_dims(dims)?;
        self.r_m.ensure_dims(dims)?;
        let finite = self.v.all_finite()
            && self.w.all_finite()
            && self.r_e.all_finite()
            && self.r_m.all_finite()
            && self.t.is_finite();
        if !finite {
            return Err(LabError::NonFinite {
                what: format!("adjoint state at t = {}", self.t),
            });
        }
        Ok(())
    }

    pub fn max_abs(&self) -> f64 {
        self.v
            .max_abs()
            .max(self.w.max_abs())
            .max(self.r_e.max_abs())
            .max(self.r_m.max_abs())
    }
}

/// Time, magnetic field, conductivities and charge densities in one unit
/// system. The electric field is unchanged by the rescaling and is not
/// carried here.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaledQuantities {
    pub t: f64,
    pub sigma_e: f64,
    pub sigma_m: f64,
    pub b: VectorField,
    pub rho_e: ScalarField,
    pub rho_m: ScalarField,
}

impl ScaledQuantities {
    fn check_finite(&self) -> Result<()> {
        let finite = self.t.is_finite()
            && self.sigma_e.is_finite()
            && self.sigma_m.is_finite()
            && self.b.all_finite()
            && self.rho_e.all_finite()
            && self.rho_m.all_finite();
        if finite {
            Ok(())
        } else {
            Err(LabError::NonFinite {
                what: "unit-conversion input".into(),
            })
        }
    }

    fn rescale(&self, f: [f64; 6]) -> Self {
        Self {
            t: self.t * f[0],
            b: self.b.scaled(f[1]),
            sigma_e: self.sigma_e * f[2],
            sigma_m: self.sigma_m * f[3],
            rho_e: self.rho_e.scaled(f[4]),
            rho_m: self.rho_m.scaled(f[5]),
        }
    }
}

fn scale_factors(consts: &PhysicalConstants) -> [f64; 6] {
    let PhysicalConstants { c, mu0 } = *consts;
    [c, c, c * mu0, mu0 / c, c * c * mu0, c * mu0]
}

/// SI → dimensionless: `t ↦ c t`, `B ↦ c B`, `σ_e ↦ c μ0 σ_e`,
/// `σ_m ↦ (μ0 / c) σ_m`, `ρ_e ↦ c² μ0 ρ_e`, `ρ_m ↦ c μ0 ρ_m`.
pub fn nondimensionalize(consts: &PhysicalConstants, si: &ScaledQuantities) -> Result<ScaledQuantities> {
    PhysicalConstants::new(consts.c, consts.mu0)?;
    si.check_finite()?;
    Ok(si.rescale(scale_factors(consts)))
}

/// Inverse of [`nondimensionalize`].
pub fn dimensionalize(consts: &PhysicalConstants, scaled: &ScaledQuantities) -> Result<ScaledQuantities> {
    PhysicalConstants::new(consts.c, consts.mu0)?;
    scaled.check_finite()?;
    Ok(scaled.rescale(scale_factors(consts).map(|f| 1.0 / f)))
}

/// Charge densities read off the Gauss laws: `ρ_e = div E`, `ρ_m = div B`.
pub fn gauss_charges(state: &FieldState, grid: &GridSpec, order: StencilOrder) -> Result<ChargeDensities> {
    state.e.ensure_dims(grid.dims())?;
    state.b.ensure_dims(grid.dims())?;
    Ok(ChargeDensities {
        rho_e: ops::div_h(&state.e, grid, order)?,
        rho_m: ops::div_h(&state.b, grid, order)?,
    })
}
