//! The formal Lagrangian of the field equations, its derivatives, the
//! symmetry generators of the system and the conserved vector
//! `C^i = L ξ^i + (η^α − ξ^j u^α_j) ∂L/∂u^α_i` they produce.
//!
//! Dependent variables are ordered `E¹ E² E³ B¹ B² B³ ρ_e ρ_m`; independent
//! variables are ordered `x y z t`.

use std::fmt;
use std::sync::Arc;

use crate::error::{LabError, Result};
use crate::field::{ScalarField, VectorField};
use crate::model::{AdjointState, ChargeDensities, FieldState, GridSpec, MediumParams};
use crate::ops::{curl_h, grad_h, partial, StencilOrder};

pub const NUM_DEPENDENT: usize = 8;
pub const NUM_INDEPENDENT: usize = 4;
pub const T_AXIS: usize = 3;
pub const RHO_E: usize = 6;
pub const RHO_M: usize = 7;

/// First partials of one vector field, indexed `[x, y, z, t]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Partials {
    pub by_axis: [VectorField; 4],
}

impl Partials {
    /// Spatial partials by the stencil, time partial supplied by the caller.
    pub fn from_field(f: &VectorField, f_t: VectorField, grid: &GridSpec, order: StencilOrder) -> Result<Self> {
        f_t.ensure_dims(grid.dims())?;
        let along = |axis: usize| -> Result<VectorField> {
            Ok(VectorField {
                comps: [
                    partial(&f.comps[0], axis, grid, order)?,
                    partial(&f.comps[1], axis, grid, order)?,
                    partial(&f.comps[2], axis, grid, order)?,
                ],
            })
        };
        Ok(Self {
            by_axis: [along(0)?, along(1)?, along(2)?, f_t],
        })
    }
}

/// All first derivatives of `E` and `B` on the grid, plus the time
/// derivatives of `V` and `W` when the adjoint Euler-Lagrange expressions are
/// wanted.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivativeBundle {
    pub e: Partials,
    pub b: Partials,
    pub adjoint_rates: Option<(VectorField, VectorField)>,
}

impl DerivativeBundle {
    pub fn new(
        state: &FieldState,
        e_t: VectorField,
        b_t: VectorField,
        grid: &GridSpec,
        order: StencilOrder,
    ) -> Result<Self> {
        state.validate(grid)?;
        Ok(Self {
            e: Partials::from_field(&state.e, e_t, grid, order)?,
            b: Partials::from_field(&state.b, b_t, grid, order)?,
            adjoint_rates: None,
        })
    }

    /// Attaches `(∂V/∂t, ∂W/∂t)`.
    pub fn with_adjoint_rates(mut self, v_t: VectorField, w_t: VectorField) -> Self {
        self.adjoint_rates = Some((v_t, w_t));
        self
    }
}

/// Jet of the field variables at one node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JetPoint {
    pub x: [f64; 3],
    pub t: f64,
    pub u: [f64; NUM_DEPENDENT],
    /// `du[α][i] = ∂u^α/∂x^i`
    pub du: [[f64; NUM_INDEPENDENT]; NUM_DEPENDENT],
}

impl JetPoint {
    pub fn e(&self) -> [f64; 3] {
        [self.u[0], self.u[1], self.u[2]]
    }

    pub fn b(&self) -> [f64; 3] {
        [self.u[3], self.u[4], self.u[5]]
    }

    /// `∂E/∂x^axis`
    pub fn e_d(&self, axis: usize) -> [f64; 3] {
        [self.du[0][axis], self.du[1][axis], self.du[2][axis]]
    }

    /// `∂B/∂x^axis`
    pub fn b_d(&self, axis: usize) -> [f64; 3] {
        [self.du[3][axis], self.du[4][axis], self.du[5][axis]]
    }

    pub fn curl_e(&self) -> [f64; 3] {
        curl_of(&self.du, 0)
    }

    pub fn curl_b(&self) -> [f64; 3] {
        curl_of(&self.du, 3)
    }

    pub fn div_e(&self) -> f64 {
        self.du[0][0] + self.du[1][1] + self.du[2][2]
    }

    pub fn div_b(&self) -> f64 {
        self.du[3][0] + self.du[4][1] + self.du[5][2]
    }
}

fn curl_of(du: &[[f64; 4]; NUM_DEPENDENT], base: usize) -> [f64; 3] {
    [
        du[base + 2][1] - du[base + 1][2],
        du[base][2] - du[base + 2][0],
        du[base + 1][0] - du[base][1],
    ]
}

/// Adjoint variables at one node.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AdjointPoint {
    pub v: [f64; 3],
    pub w: [f64; 3],
    pub r_e: f64,
    pub r_m: f64,
}

/// Borrowed grid data from which per-node jets are read.
#[derive(Debug, Clone, Copy)]
pub struct GridSnapshot<'a> {
    pub state: &'a FieldState,
    pub adjoint: &'a AdjointState,
    pub derivs: &'a DerivativeBundle,
    pub charges: &'a ChargeDensities,
    pub grid: &'a GridSpec,
}

impl<'a> GridSnapshot<'a> {
    pub fn validate(&self) -> Result<()> {
        let dims = self.grid.dims();
        self.state.validate(self.grid)?;
        self.adjoint.validate(self.grid)?;
        self.charges.rho_e.ensure_dims(dims)?;
        self.charges.rho_m.ensure_dims(dims)?;
        for p in [&self.derivs.e, &self.derivs.b] {
            for f in &p.by_axis {
                f.ensure_dims(dims)?;
            }
        }
        Ok(())
    }

    pub fn jet(&self, idx: usize) -> JetPoint {
        let mut u = [0.0; NUM_DEPENDENT];
        let mut du = [[0.0; NUM_INDEPENDENT]; NUM_DEPENDENT];
        for c in 0..3 {
            u[c] = self.state.e.comps[c][idx];
            u[c + 3] = self.state.b.comps[c][idx];
            for axis in 0..NUM_INDEPENDENT {
                du[c][axis] = self.derivs.e.by_axis[axis].comps[c][idx];
                du[c + 3][axis] = self.derivs.b.by_axis[axis].comps[c][idx];
            }
        }
        u[RHO_E] = self.charges.rho_e[idx];
        u[RHO_M] = self.charges.rho_m[idx];
        JetPoint {
            x: self.grid.coords_of(idx),
            t: self.state.t,
            u,
            du,
        }
    }

    pub fn adjoint_point(&self, idx: usize) -> AdjointPoint {
        AdjointPoint {
            v: self.adjoint.v.at(idx),
            w: self.adjoint.w.at(idx),
            r_e: self.adjoint.r_e[idx],
            r_m: self.adjoint.r_m[idx],
        }
    }

    pub fn len(&self) -> usize {
        self.grid.num_points()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Left-hand sides of the field equations at a jet, ordered
/// `[Faraday (3), Ampère (3), Gauss_e, Gauss_m]`:
///
/// ```text
/// ∇×E + B_t + σ_m B,   ∇×B − E_t − σ_e E,   div E − ρ_e,   div B − ρ_m
/// ```
pub fn field_equations(jet: &JetPoint, params: &MediumParams) -> [f64; 8] {
    let ce = jet.curl_e();
    let cb = jet.curl_b();
    let e = jet.e();
    let b = jet.b();
    let mut out = [0.0; 8];
    for a in 0..3 {
        out[a] = ce[a] + jet.du[3 + a][T_AXIS] + params.sigma_m * b[a];
        out[3 + a] = cb[a] - jet.du[a][T_AXIS] - params.sigma_e * e[a];
    }
    out[6] = jet.div_e() - jet.u[RHO_E];
    out[7] = jet.div_b() - jet.u[RHO_M];
    out
}

/// `L = V·(∇×E + B_t + σ_m B) + R_e (div E − ρ_e) + W·(∇×B − E_t − σ_e E) + R_m (div B − ρ_m)`
pub fn lagrangian_point(jet: &JetPoint, adj: &AdjointPoint, params: &MediumParams) -> f64 {
    let f = field_equations(jet, params);
    let mut l = adj.r_e * f[6] + adj.r_m * f[7];
    for a in 0..3 {
        l += adj.v[a] * f[a] + adj.w[a] * f[3 + a];
    }
    l
}

pub fn lagrangian_density(
    state: &FieldState,
    adj: &AdjointState,
    derivs: &DerivativeBundle,
    charges: &ChargeDensities,
    params: &MediumParams,
    grid: &GridSpec,
) -> Result<ScalarField> {
    let snap = GridSnapshot {
        state,
        adjoint: adj,
        derivs,
        charges,
        grid,
    };
    snap.validate()?;
    let data = (0..snap.len())
        .map(|n| lagrangian_point(&snap.jet(n), &snap.adjoint_point(n), params))
        .collect();
    ScalarField::from_vec(grid.dims(), data)
}

fn levi_civita(i: usize, j: usize, k: usize) -> f64 {
    match (i, j, k) {
        (0, 1, 2) | (1, 2, 0) | (2, 0, 1) => 1.0,
        (0, 2, 1) | (2, 1, 0) | (1, 0, 2) => -1.0,
        _ => 0.0,
    }
}

/// `table[α][i] = ∂L/∂u^α_i`. The Lagrangian is linear in the derivatives,
/// so the table depends on the adjoint variables only.
pub fn dl_dderivative(adj: &AdjointPoint) -> [[f64; NUM_INDEPENDENT]; NUM_DEPENDENT] {
    let mut table = [[0.0; NUM_INDEPENDENT]; NUM_DEPENDENT];
    // E pairs with V in the curl, R_e in the divergence and −W in time;
    // B pairs with W, R_m and +V.
    let blocks = [(0, adj.v, adj.r_e, adj.w.map(|w| -w)), (3, adj.w, adj.r_m, adj.v)];
    for (base, curl_mult, div_mult, time_mult) in blocks {
        for a in 0..3 {
            for axis in 0..3 {
                let curl: f64 = (0..3).map(|c| levi_civita(c, axis, a) * curl_mult[c]).sum();
                let div = if axis == a { div_mult } else { 0.0 };
                table[base + a][axis] = curl + div;
            }
            table[base + a][T_AXIS] = time_mult[a];
        }
    }
    table
}

/// Variational derivatives of the Lagrangian. The first group reproduces the
/// field equations, the second the adjoint equations.
#[derive(Debug, Clone, PartialEq)]
pub struct EulerLagrangeResiduals {
    pub wrt_v: VectorField,
    pub wrt_w: VectorField,
    pub wrt_r_e: ScalarField,
    pub wrt_r_m: ScalarField,
    pub wrt_e: VectorField,
    pub wrt_b: VectorField,
    pub wrt_rho_e: ScalarField,
    pub wrt_rho_m: ScalarField,
}

impl EulerLagrangeResiduals {
    /// The eight grids of the field-equation group.
    pub fn forward_group(&self) -> Vec<&ScalarField> {
        let mut out: Vec<&ScalarField> = self.wrt_v.comps.iter().chain(&self.wrt_w.comps).collect();
        out.push(&self.wrt_r_e);
        out.push(&self.wrt_r_m);
        out
    }

    /// The eight grids of the adjoint group.
    pub fn adjoint_group(&self) -> Vec<&ScalarField> {
        let mut out: Vec<&ScalarField> = self.wrt_e.comps.iter().chain(&self.wrt_b.comps).collect();
        out.push(&self.wrt_rho_e);
        out.push(&self.wrt_rho_m);
        out
    }

    pub fn all(&self) -> Vec<&ScalarField> {
        let mut out = self.forward_group();
        out.extend(self.adjoint_group());
        out
    }
}

pub fn euler_lagrange_residuals(
    state: &FieldState,
    adj: &AdjointState,
    derivs: &DerivativeBundle,
    charges: &ChargeDensities,
    params: &MediumParams,
    grid: &GridSpec,
    order: StencilOrder,
) -> Result<EulerLagrangeResiduals> {
    let snap = GridSnapshot {
        state,
        adjoint: adj,
        derivs,
        charges,
        grid,
    };
    snap.validate()?;
    let (v_t, w_t) = derivs
        .adjoint_rates
        .as_ref()
        .ok_or(LabError::MissingDerivative("time derivatives of V and W"))?;
    v_t.ensure_dims(grid.dims())?;
    w_t.ensure_dims(grid.dims())?;

    let dims = grid.dims();
    let mut forward: [ScalarField; 8] = std::array::from_fn(|_| ScalarField::zeros(dims));
    for n in 0..snap.len() {
        let f = field_equations(&snap.jet(n), params);
        for (grid_out, value) in forward.iter_mut().zip(f) {
            grid_out[n] = value;
        }
    }
    let [f0, f1, f2, f3, f4, f5, g_e, g_m] = forward;

    // δL/δE = ∇×V + W_t − σ_e W − ∇R_e
    let mut wrt_e = curl_h(&adj.v, grid, order)?.add(w_t);
    wrt_e.axpy(-params.sigma_e, &adj.w);
    let wrt_e = wrt_e.sub(&grad_h(&adj.r_e, grid, order)?);
    // δL/δB = ∇×W − V_t + σ_m V − ∇R_m
    let mut wrt_b = curl_h(&adj.w, grid, order)?.sub(v_t);
    wrt_b.axpy(params.sigma_m, &adj.v);
    let wrt_b = wrt_b.sub(&grad_h(&adj.r_m, grid, order)?);

    Ok(EulerLagrangeResiduals {
        wrt_v: VectorField { comps: [f0, f1, f2] },
        wrt_w: VectorField { comps: [f3, f4, f5] },
        wrt_r_e: g_e,
        wrt_r_m: g_m,
        wrt_e,
        wrt_b,
        wrt_rho_e: adj.r_e.scaled(-1.0),
        wrt_rho_m: adj.r_m.scaled(-1.0),
    })
}

pub type XiFn = dyn Fn(&JetPoint) -> [f64; NUM_INDEPENDENT] + Send + Sync;
pub type EtaFn = dyn Fn(&JetPoint) -> [f64; NUM_DEPENDENT] + Send + Sync;

/// Infinitesimal generator `ξ^i ∂/∂x^i + η^α ∂/∂u^α` in closed form.
#[derive(Clone)]
pub struct SymmetryGenerator {
    pub name: String,
    xi: Arc<XiFn>,
    eta: Arc<EtaFn>,
}

impl fmt::Debug for SymmetryGenerator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SymmetryGenerator").field("name", &self.name).finish()
    }
}

impl SymmetryGenerator {
    pub fn new(
        name: impl Into<String>,
        xi: impl Fn(&JetPoint) -> [f64; NUM_INDEPENDENT] + Send + Sync + 'static,
        eta: impl Fn(&JetPoint) -> [f64; NUM_DEPENDENT] + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            xi: Arc::new(xi),
            eta: Arc::new(eta),
        }
    }

    pub fn xi(&self, jet: &JetPoint) -> [f64; NUM_INDEPENDENT] {
        (self.xi)(jet)
    }

    pub fn eta(&self, jet: &JetPoint) -> [f64; NUM_DEPENDENT] {
        (self.eta)(jet)
    }

    /// `∂/∂t`
    pub fn time_translation() -> Self {
        Self::new("time_translation", |_| [0.0, 0.0, 0.0, 1.0], |_| [0.0; 8])
    }

    /// `∂/∂x^axis` for a spatial axis.
    pub fn space_translation(axis: usize) -> Self {
        assert!(axis < 3);
        let name = ["space_translation_x", "space_translation_y", "space_translation_z"][axis];
        Self::new(
            name,
            move |_| {
                let mut xi = [0.0; 4];
                xi[axis] = 1.0;
                xi
            },
            |_| [0.0; 8],
        )
    }

    /// Simultaneous rotation of `x`, `E` and `B` in the plane of axes
    /// `a < b`: `x_b ∂_{x_a} − x_a ∂_{x_b} + E^b ∂_{E^a} − E^a ∂_{E^b} + (same for B)`.
    pub fn rotation(a: usize, b: usize) -> Self {
        assert!(a < b && b < 3);
        let name = match (a, b) {
            (0, 1) => "rotation_xy",
            (0, 2) => "rotation_xz",
            _ => "rotation_yz",
        };
        Self::new(
            name,
            move |jet| {
                let mut xi = [0.0; 4];
                xi[a] = jet.x[b];
                xi[b] = -jet.x[a];
                xi
            },
            move |jet| {
                let mut eta = [0.0; 8];
                for base in [0, 3] {
                    eta[base + a] = jet.u[base + b];
                    eta[base + b] = -jet.u[base + a];
                }
                eta
            },
        )
    }

    /// Simultaneous dilation of all dependent variables.
    pub fn dilation() -> Self {
        Self::new("dilation", |_| [0.0; 4], |jet| jet.u)
    }

    /// `E·∂_B − B·∂_E + ρ_e ∂_{ρ_m} − ρ_m ∂_{ρ_e}`
    pub fn duality() -> Self {
        Self::new("duality", |_| [0.0; 4], duality_action)
    }

    /// The nine built-in generators.
    pub fn builtin() -> Vec<Self> {
        vec![
            Self::time_translation(),
            Self::space_translation(0),
            Self::space_translation(1),
            Self::space_translation(2),
            Self::rotation(0, 1),
            Self::rotation(0, 2),
            Self::rotation(1, 2),
            Self::dilation(),
            Self::duality(),
        ]
    }

    pub fn by_name(name: &str) -> Option<Self> {
        Self::builtin().into_iter().find(|g| g.name == name)
    }
}

fn duality_action(jet: &JetPoint) -> [f64; NUM_DEPENDENT] {
    [
        -jet.u[3],
        -jet.u[4],
        -jet.u[5],
        jet.u[0],
        jet.u[1],
        jet.u[2],
        -jet.u[RHO_M],
        jet.u[RHO_E],
    ]
}

/// Conserved vector at one node, `[C^x, C^y, C^z, C^t]`, with the `L ξ^i`
/// contribution reported separately.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConservedPoint {
    pub c: [f64; NUM_INDEPENDENT],
    pub lagrangian_term: [f64; NUM_INDEPENDENT],
}

pub fn conserved_vector_point(
    gen: &SymmetryGenerator,
    jet: &JetPoint,
    adj: &AdjointPoint,
    params: &MediumParams,
) -> ConservedPoint {
    let xi = gen.xi(jet);
    let eta = gen.eta(jet);
    let table = dl_dderivative(adj);
    let l = lagrangian_point(jet, adj, params);
    let mut c = [0.0; NUM_INDEPENDENT];
    let mut lagrangian_term = [0.0; NUM_INDEPENDENT];
    for i in 0..NUM_INDEPENDENT {
        lagrangian_term[i] = l * xi[i];
        let mut acc = lagrangian_term[i];
        for alpha in 0..NUM_DEPENDENT {
            let characteristic = eta[alpha] - (0..NUM_INDEPENDENT).map(|j| xi[j] * jet.du[alpha][j]).sum::<f64>();
            acc += characteristic * table[alpha][i];
        }
        c[i] = acc;
    }
    ConservedPoint { c, lagrangian_term }
}

/// Grid form of the generic conserved vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ConservedVector {
    pub tau: ScalarField,
    pub chi: VectorField,
    /// `L ξ^t`
    pub lagrangian_tau: ScalarField,
    /// `(L ξ^x, L ξ^y, L ξ^z)`
    pub lagrangian_chi: VectorField,
}

pub fn conserved_vector_generic(
    gen: &SymmetryGenerator,
    state: &FieldState,
    adj: &AdjointState,
    derivs: &DerivativeBundle,
    charges: &ChargeDensities,
    params: &MediumParams,
    grid: &GridSpec,
) -> Result<ConservedVector> {
    let snap = GridSnapshot {
        state,
        adjoint: adj,
        derivs,
        charges,
        grid,
    };
    snap.validate()?;
    let dims = grid.dims();
    let mut tau = ScalarField::zeros(dims);
    let mut chi = VectorField::zeros(dims);
    let mut lagrangian_tau = ScalarField::zeros(dims);
    let mut lagrangian_chi = VectorField::zeros(dims);
    for n in 0..snap.len() {
        let p = conserved_vector_point(gen, &snap.jet(n), &snap.adjoint_point(n), params);
        tau[n] = p.c[T_AXIS];
        lagrangian_tau[n] = p.lagrangian_term[T_AXIS];
        for a in 0..3 {
            chi.comps[a][n] = p.c[a];
            lagrangian_chi.comps[a][n] = p.lagrangian_term[a];
        }
    }
    Ok(ConservedVector {
        tau,
        chi,
        lagrangian_tau,
        lagrangian_chi,
    })
}

/// Applies the prolonged duality generator to the jet: the infinitesimal
/// action on every coordinate, including derivatives.
pub fn duality_prolongation(jet: &JetPoint) -> JetPoint {
    let mut out = *jet;
    out.u = duality_action(jet);
    for axis in 0..NUM_INDEPENDENT {
        for c in 0..3 {
            out.du[c][axis] = -jet.du[3 + c][axis];
            out.du[3 + c][axis] = jet.du[c][axis];
        }
        out.du[RHO_E][axis] = -jet.du[RHO_M][axis];
        out.du[RHO_M][axis] = jet.du[RHO_E][axis];
    }
    out
}

/// The four admittance identities at one node. Each entry is the action of
/// the prolonged duality generator on one equation, minus the equation it
/// must map onto for the generator to be admitted:
///
/// ```text
/// X(Faraday) + Ampère,  X(Ampère) − Faraday,  X(Gauss_e) + Gauss_m,  X(Gauss_m) − Gauss_e
/// ```
///
/// These reduce to `(σ_m − σ_e) E`, `(σ_e − σ_m) B`, `0`, `0`.
pub fn admittance_point(jet: &JetPoint, params: &MediumParams) -> [f64; 8] {
    // the equations are linear in the jet, so X(F) = F evaluated on the action
    let acted = field_equations(&duality_prolongation(jet), params);
    let base = field_equations(jet, params);
    let mut out = [0.0; 8];
    for a in 0..3 {
        out[a] = acted[a] + base[3 + a];
        out[3 + a] = acted[3 + a] - base[a];
    }
    out[6] = acted[6] + base[7];
    out[7] = acted[7] - base[6];
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdmittanceResiduals {
    pub faraday: VectorField,
    pub ampere: VectorField,
    pub gauss_e: ScalarField,
    pub gauss_m: ScalarField,
}

impl AdmittanceResiduals {
    /// Max-abs of each of the four identities.
    pub fn max_norms(&self) -> [f64; 4] {
        [
            self.faraday.max_abs(),
            self.ampere.max_abs(),
            self.gauss_e.max_abs(),
            self.gauss_m.max_abs(),
        ]
    }

    /// True when every identity vanishes to `tol`.
    pub fn admitted(&self, tol: f64) -> bool {
        self.max_norms().iter().all(|&m| m <= tol)
    }
}

pub fn duality_admittance_check(
    state: &FieldState,
    derivs: &DerivativeBundle,
    charges: &ChargeDensities,
    params: &MediumParams,
    grid: &GridSpec,
) -> Result<AdmittanceResiduals> {
    let adjoint = AdjointState::zeros(grid, state.t);
    let snap = GridSnapshot {
        state,
        adjoint: &adjoint,
        derivs,
        charges,
        grid,
    };
    snap.validate()?;
    let dims = grid.dims();
    let mut out = AdmittanceResiduals {
        faraday: VectorField::zeros(dims),
        ampere: VectorField::zeros(dims),
        gauss_e: ScalarField::zeros(dims),
        gauss_m: ScalarField::zeros(dims),
    };
    for n in 0..snap.len() {
        let r = admittance_point(&snap.jet(n), params);
        for a in 0..3 {
            out.faraday.comps[a][n] = r[a];
            out.ampere.comps[a][n] = r[3 + a];
        }
        out.gauss_e[n] = r[6];
        out.gauss_m[n] = r[7];
    }
    Ok(out)
}

/// Finite duality rotation by the angle `alpha`:
/// `Ē = E cos α − B sin α`, `B̄ = E sin α + B cos α`, and likewise for
/// `(ρ_e, ρ_m)`.
pub fn duality_group_action(
    state: &FieldState,
    charges: &ChargeDensities,
    alpha: f64,
) -> (FieldState, ChargeDensities) {
    let (s, c) = alpha.sin_cos();
    let rotate = |a: &ScalarField, b: &ScalarField| (a.zip_map(b, |x, y| x * c - y * s), a.zip_map(b, |x, y| x * s + y * c));
    let mut e = VectorField::zeros(state.e.dims());
    let mut b = VectorField::zeros(state.e.dims());
    for k in 0..3 {
        let (ne, nb) = rotate(&state.e.comps[k], &state.b.comps[k]);
        e.comps[k] = ne;
        b.comps[k] = nb;
    }
    let (rho_e, rho_m) = rotate(&charges.rho_e, &charges.rho_m);
    (FieldState { t: state.t, e, b }, ChargeDensities { rho_e, rho_m })
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    pub(crate) fn random_jet(rng: &mut ChaCha8Rng) -> JetPoint {
        let mut jet = JetPoint {
            x: [rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)],
            t: rng.gen_range(0.0..1.0),
            u: [0.0; 8],
            du: [[0.0; 4]; 8],
        };
        for a in 0..8 {
            jet.u[a] = rng.gen_range(-1.0..1.0);
            for i in 0..4 {
                jet.du[a][i] = if a < 6 { rng.gen_range(-1.0..1.0) } else { 0.0 };
            }
        }
        jet
    }

    fn random_adjoint(rng: &mut ChaCha8Rng, with_r: bool) -> AdjointPoint {
        AdjointPoint {
            v: [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)],
            w: [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)],
            r_e: if with_r { rng.gen_range(-1.0..1.0) } else { 0.0 },
            r_m: if with_r { rng.gen_range(-1.0..1.0) } else { 0.0 },
        }
    }

    #[test]
    fn table_matches_coordinate_lagrangian() {
        let adj = AdjointPoint {
            v: [1.0, 2.0, 3.0],
            w: [4.0, 5.0, 6.0],
            r_e: 7.0,
            r_m: 8.0,
        };
        let t = dl_dderivative(&adj);
        // ∂L/∂B_t = V, ∂L/∂E_t = −W
        assert_eq!([t[3][3], t[4][3], t[5][3]], adj.v);
        assert_eq!([t[0][3], t[1][3], t[2][3]], adj.w.map(|w| -w));
        // V¹ E³_y, −V¹ E²_z, V² E¹_z, −V² E³_x, V³ E²_x, −V³ E¹_y
        assert_eq!(t[2][1], 1.0);
        assert_eq!(t[1][2], -1.0);
        assert_eq!(t[0][2], 2.0);
        assert_eq!(t[2][0], -2.0);
        assert_eq!(t[1][0], 3.0);
        assert_eq!(t[0][1], -3.0);
        // W¹ B³_y, −W² B³_x
        assert_eq!(t[5][1], 4.0);
        assert_eq!(t[5][0], -5.0);
        // divergence slots
        assert_eq!(t[0][0], 7.0);
        assert_eq!(t[4][1], 8.0);
        // charge densities carry no derivatives
        assert_eq!(t[6], [0.0; 4]);
        assert_eq!(t[7], [0.0; 4]);
        assert_eq!(dl_dderivative(&AdjointPoint::default()), [[0.0; 4]; 8]);
    }

    #[test]
    fn table_is_the_derivative_of_lagrangian() {
        // L is affine in each derivative slot: a unit bump changes L by the table entry
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let params = MediumParams::new(0.2, 0.9).unwrap();
        for _ in 0..20 {
            let jet = random_jet(&mut rng);
            let adj = random_adjoint(&mut rng, true);
            let base = lagrangian_point(&jet, &adj, &params);
            let table = dl_dderivative(&adj);
            for a in 0..8 {
                for i in 0..4 {
                    let mut bumped = jet;
                    bumped.du[a][i] += 1.0;
                    let diff = lagrangian_point(&bumped, &adj, &params) - base;
                    assert!((diff - table[a][i]).abs() < 1e-12, "slot ({a},{i})");
                }
            }
        }
    }

    #[test]
    fn single_term_reads_off_lagrangian() {
        let mut jet = JetPoint {
            x: [0.0; 3],
            t: 0.0,
            u: [0.0; 8],
            du: [[0.0; 4]; 8],
        };
        jet.du[2][1] = 0.37;
        let adj = AdjointPoint {
            v: [1.0, 0.0, 0.0],
            ..AdjointPoint::default()
        };
        assert_eq!(lagrangian_point(&jet, &adj, &MediumParams::new(0.4, 0.6).unwrap()), 0.37);
    }

    #[test]
    fn zero_generator_gives_zero_vector() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let gen = SymmetryGenerator::new("zero", |_| [0.0; 4], |_| [0.0; 8]);
        let jet = random_jet(&mut rng);
        let adj = random_adjoint(&mut rng, true);
        let p = conserved_vector_point(&gen, &jet, &adj, &MediumParams::vacuum());
        assert_eq!(p.c, [0.0; 4]);
    }

    #[test]
    fn duality_and_dilation_vectors_in_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let params = MediumParams::equal(0.3).unwrap();
        for _ in 0..50 {
            let jet = random_jet(&mut rng);
            let adj = random_adjoint(&mut rng, false);
            let (e, b, v, w) = (jet.e(), jet.b(), adj.v, adj.w);
            let d = conserved_vector_point(&SymmetryGenerator::duality(), &jet, &adj, &params);
            let tau = crate::field::dot(e, v) + crate::field::dot(b, w);
            let ew = crate::field::cross(e, w);
            let bv = crate::field::cross(b, v);
            assert!((d.c[3] - tau).abs() < 1e-14);
            for a in 0..3 {
                assert!((d.c[a] - (ew[a] - bv[a])).abs() < 1e-14);
            }
            let g = conserved_vector_point(&SymmetryGenerator::dilation(), &jet, &adj, &params);
            let tau = crate::field::dot(b, v) - crate::field::dot(e, w);
            let ev = crate::field::cross(e, v);
            let bw = crate::field::cross(b, w);
            assert!((g.c[3] - tau).abs() < 1e-14);
            for a in 0..3 {
                assert!((g.c[a] - (ev[a] + bw[a])).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn printed_prolongation_identities_hold_for_any_sigma() {
        // X(∇×E + B_t + σ_m B) = −(∇×B − E_t − σ_m E), X(∇×B − E_t − σ_e E) = ∇×E + B_t + σ_e B
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let params = MediumParams::new(0.1, 0.5).unwrap();
        let swapped = MediumParams::new(params.sigma_m, params.sigma_e).unwrap();
        for _ in 0..50 {
            let jet = random_jet(&mut rng);
            let acted = field_equations(&duality_prolongation(&jet), &params);
            let with_swapped = field_equations(&jet, &swapped);
            for a in 0..3 {
                assert!((acted[a] + with_swapped[3 + a]).abs() < 1e-14);
                assert!((acted[3 + a] - with_swapped[a]).abs() < 1e-14);
            }
            assert!((acted[6] + with_swapped[7]).abs() < 1e-14);
            assert!((acted[7] - with_swapped[6]).abs() < 1e-14);
        }
    }

    #[test]
    fn admittance_defect_is_sigma_difference_times_field() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let params = MediumParams::new(0.1, 0.5).unwrap();
        for _ in 0..50 {
            let jet = random_jet(&mut rng);
            let r = admittance_point(&jet, &params);
            for a in 0..3 {
                assert!((r[a] - 0.4 * jet.e()[a]).abs() < 1e-14);
                assert!((r[3 + a] + 0.4 * jet.b()[a]).abs() < 1e-14);
            }
            assert!(r[6].abs() < 1e-15 && r[7].abs() < 1e-15);
            let equal = admittance_point(&jet, &MediumParams::equal(0.3).unwrap());
            assert!(equal.iter().all(|v| v.abs() < 1e-15));
        }
    }

    #[test]
    fn builtin_catalog_names() {
        let names: Vec<String> = SymmetryGenerator::builtin().into_iter().map(|g| g.name).collect();
        assert_eq!(names.len(), 9);
        assert!(SymmetryGenerator::by_name("rotation_xz").is_some());
        assert!(SymmetryGenerator::by_name("boost").is_none());
    }

    #[test]
    fn rotation_coefficients() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let jet = random_jet(&mut rng);
        let x12 = SymmetryGenerator::rotation(0, 1);
        assert_eq!(x12.xi(&jet), [jet.x[1], -jet.x[0], 0.0, 0.0]);
        let eta = x12.eta(&jet);
        assert_eq!(eta, [jet.u[1], -jet.u[0], 0.0, jet.u[4], -jet.u[3], 0.0, 0.0, 0.0]);
        let x23 = SymmetryGenerator::rotation(1, 2);
        assert_eq!(x23.xi(&jet), [0.0, jet.x[2], -jet.x[1], 0.0]);
        let eta = x23.eta(&jet);
        assert_eq!(eta, [0.0, jet.u[2], -jet.u[1], 0.0, jet.u[5], -jet.u[4], 0.0, 0.0]);
    }
}
