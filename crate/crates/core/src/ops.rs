//! Central-difference vector calculus on periodic uniform grids.
//!
//! All spatial operators are built from one collocated first-derivative
//! stencil per axis, so the operators commute and `div∘curl`, `curl∘grad`
//! vanish up to rounding.

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::field::{ScalarField, VectorField};
use crate::model::GridSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(try_from = "u8", into = "u8")]
pub enum StencilOrder {
    #[default]
    Second,
    Fourth,
}

impl StencilOrder {
    pub fn as_u8(self) -> u8 {
        match self {
            StencilOrder::Second => 2,
            StencilOrder::Fourth => 4,
        }
    }

    /// Half-width of the stencil in cells.
    pub fn reach(self) -> usize {
        match self {
            StencilOrder::Second => 1,
            StencilOrder::Fourth => 2,
        }
    }

    fn weights(self) -> &'static [f64] {
        match self {
            StencilOrder::Second => &[0.5],
            StencilOrder::Fourth => &[2.0 / 3.0, -1.0 / 12.0],
        }
    }

    /// Every axis needs at least `order + 1` cells.
    pub fn check_grid(self, grid: &GridSpec) -> Result<()> {
        let need = self.as_u8() as usize + 1;
        if grid.dims().iter().any(|&n| n < need) {
            return Err(LabError::InvalidGrid(format!(
                "order-{} stencils need at least {need} cells per axis, grid is {:?}",
                self.as_u8(),
                grid.dims()
            )));
        }
        Ok(())
    }
}

impl TryFrom<u8> for StencilOrder {
    type Error = String;

    fn try_from(v: u8) -> std::result::Result<Self, String> {
        match v {
            2 => Ok(StencilOrder::Second),
            4 => Ok(StencilOrder::Fourth),
            other => Err(format!("stencil order must be 2 or 4, got {other}")),
        }
    }
}

impl From<StencilOrder> for u8 {
    fn from(o: StencilOrder) -> u8 {
        o.as_u8()
    }
}

/// Periodic central difference `∂f/∂x_axis`.
pub fn partial(f: &ScalarField, axis: usize, grid: &GridSpec, order: StencilOrder) -> Result<ScalarField> {
    assert!(axis < 3, "axis {axis} out of range");
    order.check_grid(grid)?;
    let dims = grid.dims();
    f.ensure_dims(dims)?;
    let n = dims[axis];
    let inv_h = 1.0 / grid.spacing()[axis];
    let weights = order.weights();
    let src = f.as_slice();
    let mut out = ScalarField::zeros(dims);
    let dst = out.as_mut_slice();

    let mut idx = [0usize; 3];
    let mut pos = 0;
    for i in 0..dims[0] {
        idx[0] = i;
        for j in 0..dims[1] {
            idx[1] = j;
            for k in 0..dims[2] {
                idx[2] = k;
                let mut acc = 0.0;
                for (s, w) in weights.iter().enumerate() {
                    let s = s + 1;
                    let mut fwd = idx;
                    let mut bwd = idx;
                    fwd[axis] = (idx[axis] + s) % n;
                    bwd[axis] = (idx[axis] + n - s) % n;
                    let a = src[(fwd[0] * dims[1] + fwd[1]) * dims[2] + fwd[2]];
                    let b = src[(bwd[0] * dims[1] + bwd[1]) * dims[2] + bwd[2]];
                    acc += w * (a - b);
                }
                dst[pos] = acc * inv_h;
                pos += 1;
            }
        }
    }
    Ok(out)
}

/// `(∂_y F_3 − ∂_z F_2, ∂_z F_1 − ∂_x F_3, ∂_x F_2 − ∂_y F_1)`
pub fn curl_h(f: &VectorField, grid: &GridSpec, order: StencilOrder) -> Result<VectorField> {
    f.ensure_dims(grid.dims())?;
    let d = |c: usize, axis: usize| partial(&f.comps[c], axis, grid, order);
    Ok(VectorField {
        comps: [
            d(2, 1)?.sub(&d(1, 2)?),
            d(0, 2)?.sub(&d(2, 0)?),
            d(1, 0)?.sub(&d(0, 1)?),
        ],
    })
}

pub fn div_h(f: &VectorField, grid: &GridSpec, order: StencilOrder) -> Result<ScalarField> {
    f.ensure_dims(grid.dims())?;
    let mut out = partial(&f.comps[0], 0, grid, order)?;
    out.axpy(1.0, &partial(&f.comps[1], 1, grid, order)?);
    out.axpy(1.0, &partial(&f.comps[2], 2, grid, order)?);
    Ok(out)
}

pub fn grad_h(phi: &ScalarField, grid: &GridSpec, order: StencilOrder) -> Result<VectorField> {
    Ok(VectorField {
        comps: [
            partial(phi, 0, grid, order)?,
            partial(phi, 1, grid, order)?,
            partial(phi, 2, grid, order)?,
        ],
    })
}

/// Values that can be differenced in time.
pub trait TimeSample: Sized {
    /// `a * self + b * other`
    fn lin_comb(&self, a: f64, other: &Self, b: f64) -> Self;
}

impl TimeSample for ScalarField {
    fn lin_comb(&self, a: f64, other: &Self, b: f64) -> Self {
        self.zip_map(other, |x, y| a * x + b * y)
    }
}

impl TimeSample for VectorField {
    fn lin_comb(&self, a: f64, other: &Self, b: f64) -> Self {
        self.zip_comps(other, |x, y| x.lin_comb(a, y, b))
    }
}

impl TimeSample for f64 {
    fn lin_comb(&self, a: f64, other: &Self, b: f64) -> Self {
        a * self + b * other
    }
}

/// `(f_{k+1} − f_{k−1}) / (2 dt)` at an interior index.
pub fn ddt_centered<T: TimeSample>(snapshots: &[T], dt: f64, index: usize) -> Result<T> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(LabError::InvalidParameter(format!("time step {dt} must be positive")));
    }
    if index == 0 || index + 1 >= snapshots.len() {
        return Err(LabError::BoundaryTimeIndex {
            index,
            len: snapshots.len(),
        });
    }
    let inv = 0.5 / dt;
    Ok(snapshots[index + 1].lin_comb(inv, &snapshots[index - 1], -inv))
}

/// Second-order time derivative at any index: centered in the interior,
/// three-point one-sided at either end.
pub fn ddt_second_order<T: TimeSample>(snapshots: &[T], dt: f64, index: usize) -> Result<T> {
    let len = snapshots.len();
    if len < 3 {
        return Err(LabError::InvalidParameter(format!(
            "need at least 3 snapshots for a time derivative, got {len}"
        )));
    }
    if index >= len {
        return Err(LabError::BoundaryTimeIndex { index, len });
    }
    let inv = 0.5 / dt;
    let (a, b, c, sign) = if index == 0 {
        (0, 1, 2, 1.0)
    } else if index == len - 1 {
        (len - 1, len - 2, len - 3, -1.0)
    } else {
        return ddt_centered(snapshots, dt, index);
    };
    // ∓(3 f_a − 4 f_b + f_c) / (2 dt)
    let partial = snapshots[a].lin_comb(-3.0 * sign * inv, &snapshots[b], 4.0 * sign * inv);
    Ok(partial.lin_comb(1.0, &snapshots[c], -sign * inv))
}
