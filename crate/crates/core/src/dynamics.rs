//! Method-of-lines integration of the damped field equations and their
//! adjoint, closed-form solution families, and adjoint construction by time
//! reversal.
//!
//! Forward system (dimensionless):
//!
//! ```text
//! ∂E/∂t = ∇×B − σ_e E        ∂B/∂t = −∇×E − σ_m B
//! ```
//!
//! Adjoint system (with `R_e = R_m = 0`):
//!
//! ```text
//! ∂W/∂t = σ_e W − ∇×V        ∂V/∂t = ∇×W + σ_m V
//! ```

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::field::{cross, dot, ScalarField, VectorField};
use crate::model::{gauss_charges, AdjointState, FieldState, GridSpec, MediumParams};
use crate::ops::{curl_h, div_h, StencilOrder};

pub const BLOWUP_LIMIT: f64 = 1e12;

/// Uniformly spaced, time-ordered states.
#[derive(Debug, Clone)]
pub struct Trajectory<S> {
    pub states: Vec<S>,
    pub dt: f64,
    pub params: MediumParams,
    pub grid: GridSpec,
}

/// States that carry a time stamp.
pub trait Timed {
    fn time(&self) -> f64;
}

impl Timed for FieldState {
    fn time(&self) -> f64 {
        self.t
    }
}

impl Timed for AdjointState {
    fn time(&self) -> f64 {
        self.t
    }
}

impl<S: Timed> Trajectory<S> {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn times(&self) -> Vec<f64> {
        self.states.iter().map(Timed::time).collect()
    }

    pub fn t0(&self) -> f64 {
        self.states.first().map_or(0.0, Timed::time)
    }

    /// Checks `t_k = t_0 + k dt` to a relative tolerance of 1e-9 of `dt`.
    pub fn check_uniform(&self) -> Result<()> {
        let t0 = self.t0();
        for (k, s) in self.states.iter().enumerate() {
            let expect = t0 + k as f64 * self.dt;
            if (s.time() - expect).abs() > 1e-9 * self.dt.max(f64::MIN_POSITIVE) {
                return Err(LabError::Misaligned(format!(
                    "state {k} is at t = {}, expected {expect}",
                    s.time()
                )));
            }
        }
        Ok(())
    }
}

pub fn rhs_forward(
    state: &FieldState,
    params: &MediumParams,
    grid: &GridSpec,
    order: StencilOrder,
) -> Result<(VectorField, VectorField)> {
    state.validate(grid)?;
    let mut de = curl_h(&state.b, grid, order)?;
    de.axpy(-params.sigma_e, &state.e);
    let mut db = curl_h(&state.e, grid, order)?.scaled(-1.0);
    db.axpy(-params.sigma_m, &state.b);
    Ok((de, db))
}

/// Returns `(dV/dt, dW/dt)`.
pub fn rhs_adjoint(
    adj: &AdjointState,
    params: &MediumParams,
    grid: &GridSpec,
    order: StencilOrder,
) -> Result<(VectorField, VectorField)> {
    adj.validate(grid)?;
    let mut dv = curl_h(&adj.w, grid, order)?;
    dv.axpy(params.sigma_m, &adj.v);
    let mut dw = curl_h(&adj.v, grid, order)?.scaled(-1.0);
    dw.axpy(params.sigma_e, &adj.w);
    Ok((dv, dw))
}

/// A state whose evolution is a pair of vector-field rates.
pub trait Evolvable: Timed + Sized {
    fn fields(&self) -> (&VectorField, &VectorField);
    fn with_fields(&self, t: f64, a: VectorField, b: VectorField) -> Self;
    fn rates(&self, params: &MediumParams, grid: &GridSpec, order: StencilOrder) -> Result<(VectorField, VectorField)>;
}

impl Evolvable for FieldState {
    fn fields(&self) -> (&VectorField, &VectorField) {
        (&self.e, &self.b)
    }

    fn with_fields(&self, t: f64, e: VectorField, b: VectorField) -> Self {
        FieldState { t, e, b }
    }

    fn rates(&self, params: &MediumParams, grid: &GridSpec, order: StencilOrder) -> Result<(VectorField, VectorField)> {
        rhs_forward(self, params, grid, order)
    }
}

impl Evolvable for AdjointState {
    fn fields(&self) -> (&VectorField, &VectorField) {
        (&self.v, &self.w)
    }

    /// The Gauss multipliers are held at zero.
    fn with_fields(&self, t: f64, v: VectorField, w: VectorField) -> Self {
        AdjointState::from_vw(t, v, w)
    }

    fn rates(&self, params: &MediumParams, grid: &GridSpec, order: StencilOrder) -> Result<(VectorField, VectorField)> {
        rhs_adjoint(self, params, grid, order)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Backward,
}

/// Classical four-stage Runge-Kutta on the semi-discrete system.
#[derive(Debug, Clone, Copy)]
pub struct Integrator {
    pub order: StencilOrder,
    /// Reject `dt > min(dx, dy, dz)` when set.
    pub enforce_cfl: bool,
    pub blowup_limit: f64,
}

impl Default for Integrator {
    fn default() -> Self {
        Self {
            order: StencilOrder::Second,
            enforce_cfl: true,
            blowup_limit: BLOWUP_LIMIT,
        }
    }
}

impl Integrator {
    pub fn with_order(order: StencilOrder) -> Self {
        Self {
            order,
            ..Self::default()
        }
    }

    pub fn step<S: Evolvable>(
        &self,
        state: &S,
        params: &MediumParams,
        grid: &GridSpec,
        dt: f64,
        direction: Direction,
    ) -> Result<S> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(LabError::InvalidParameter(format!("time step {dt} must be positive")));
        }
        if self.enforce_cfl && dt > grid.min_spacing() {
            return Err(LabError::CflViolation {
                dt,
                bound: grid.min_spacing(),
            });
        }
        let h = match direction {
            Direction::Forward => dt,
            Direction::Backward => -dt,
        };
        let t = state.time();
        let (a0, b0) = state.fields();

        let stage = |da: &VectorField, db: &VectorField, frac: f64| {
            let mut a = a0.clone();
            a.axpy(frac * h, da);
            let mut b = b0.clone();
            b.axpy(frac * h, db);
            state.with_fields(t + frac * h, a, b)
        };

        let (ka1, kb1) = state.rates(params, grid, self.order)?;
        let (ka2, kb2) = stage(&ka1, &kb1, 0.5).rates(params, grid, self.order)?;
        let (ka3, kb3) = stage(&ka2, &kb2, 0.5).rates(params, grid, self.order)?;
        let (ka4, kb4) = stage(&ka3, &kb3, 1.0).rates(params, grid, self.order)?;

        let combine = |x0: &VectorField, k1: &VectorField, k2: &VectorField, k3: &VectorField, k4: &VectorField| {
            let mut out = x0.clone();
            out.axpy(h / 6.0, k1);
            out.axpy(h / 3.0, k2);
            out.axpy(h / 3.0, k3);
            out.axpy(h / 6.0, k4);
            out
        };
        let a = combine(a0, &ka1, &ka2, &ka3, &ka4);
        let b = combine(b0, &kb1, &kb2, &kb3, &kb4);

        let peak = a.max_abs().max(b.max_abs());
        if !(peak <= self.blowup_limit) {
            return Err(LabError::BlowUp {
                t: t + h,
                value: peak,
                limit: self.blowup_limit,
            });
        }
        Ok(state.with_fields(t + h, a, b))
    }

    /// `steps` steps from `initial`; the result holds `steps + 1` states in
    /// ascending time order whichever direction was integrated.
    pub fn integrate<S: Evolvable + Clone>(
        &self,
        initial: S,
        params: &MediumParams,
        grid: &GridSpec,
        dt: f64,
        steps: usize,
        direction: Direction,
    ) -> Result<Trajectory<S>> {
        let mut states = Vec::with_capacity(steps + 1);
        states.push(initial);
        for _ in 0..steps {
            let next = self.step(states.last().expect("nonempty"), params, grid, dt, direction)?;
            states.push(next);
        }
        if direction == Direction::Backward {
            states.reverse();
        }
        Ok(Trajectory {
            states,
            dt,
            params: *params,
            grid: *grid,
        })
    }

    /// Integrates from `initial` (at t = 0) backward to `−steps·dt` and
    /// forward to `+steps·dt`. Returns `(past, future)`, both ascending and
    /// both containing the t = 0 state.
    pub fn integrate_both_ways(
        &self,
        initial: &FieldState,
        params: &MediumParams,
        grid: &GridSpec,
        dt: f64,
        steps: usize,
    ) -> Result<(Trajectory<FieldState>, Trajectory<FieldState>)> {
        let past = self.integrate(initial.clone(), params, grid, dt, steps, Direction::Backward)?;
        let future = self.integrate(initial.clone(), params, grid, dt, steps, Direction::Forward)?;
        Ok((past, future))
    }
}

/// Spatially constant fields: `E(t) = E0 e^{−σ_e t}`, `B(t) = B0 e^{−σ_m t}`.
pub fn exact_uniform(e0: [f64; 3], b0: [f64; 3], params: &MediumParams, grid: &GridSpec, t: f64) -> FieldState {
    let fe = (-params.sigma_e * t).exp();
    let fb = (-params.sigma_m * t).exp();
    FieldState {
        t,
        e: VectorField::uniform(grid.dims(), e0.map(|v| v * fe)),
        b: VectorField::uniform(grid.dims(), b0.map(|v| v * fb)),
    }
}

/// A real trigonometric polynomial of period `period`:
/// `g(s) = Σ a_j sin(2π k_j s / period + φ_j)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodicProfile {
    pub period: f64,
    pub modes: Vec<ProfileMode>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileMode {
    pub wavenumber: u32,
    pub amplitude: f64,
    pub phase: f64,
}

impl PeriodicProfile {
    pub fn single(period: f64, wavenumber: u32, amplitude: f64, phase: f64) -> Self {
        Self {
            period,
            modes: vec![ProfileMode {
                wavenumber,
                amplitude,
                phase,
            }],
        }
    }

    fn angular(&self, m: &ProfileMode) -> f64 {
        2.0 * PI * m.wavenumber as f64 / self.period
    }

    pub fn value(&self, s: f64) -> f64 {
        self.modes
            .iter()
            .map(|m| m.amplitude * (self.angular(m) * s + m.phase).sin())
            .sum()
    }

    pub fn derivative(&self, s: f64) -> f64 {
        self.modes
            .iter()
            .map(|m| {
                let k = self.angular(m);
                m.amplitude * k * (k * s + m.phase).cos()
            })
            .sum()
    }
}

/// `E = (0, f, 0)`, `B = (0, 0, f)` with `f = e^{−σt} g(x − t)`; exact when
/// `σ_e = σ_m = σ`.
pub fn exact_damped_plane_wave(
    profile: &PeriodicProfile,
    params: &MediumParams,
    grid: &GridSpec,
    t: f64,
) -> Result<FieldState> {
    if !params.sigmas_equal() {
        return Err(LabError::LawCondition {
            law: "damped plane wave".into(),
            requirement: format!("sigma_e == sigma_m (got {} and {})", params.sigma_e, params.sigma_m),
        });
    }
    let damp = (-params.sigma_e * t).exp();
    let f = grid.scalar(|x| damp * profile.value(x[0] - t));
    let zero = ScalarField::zeros(grid.dims());
    Ok(FieldState {
        t,
        e: VectorField {
            comps: [zero.clone(), f.clone(), zero.clone()],
        },
        b: VectorField {
            comps: [zero.clone(), zero, f],
        },
    })
}

/// Analytic `(∂E/∂t, ∂B/∂t)` of [`exact_damped_plane_wave`].
pub fn damped_plane_wave_rates(
    profile: &PeriodicProfile,
    params: &MediumParams,
    grid: &GridSpec,
    t: f64,
) -> Result<(VectorField, VectorField)> {
    let state = exact_damped_plane_wave(profile, params, grid, t)?;
    let damp = (-params.sigma_e * t).exp();
    let sigma = params.sigma_e;
    // f_t = −σ f − e^{−σt} g'(x − t)
    let ft = grid
        .scalar(|x| -damp * profile.derivative(x[0] - t))
        .lin_add(-sigma, &state.e.comps[1]);
    let zero = ScalarField::zeros(grid.dims());
    Ok((
        VectorField {
            comps: [zero.clone(), ft.clone(), zero.clone()],
        },
        VectorField {
            comps: [zero.clone(), zero, ft],
        },
    ))
}

trait LinAdd {
    fn lin_add(self, factor: f64, other: &Self) -> Self;
}

impl LinAdd for ScalarField {
    fn lin_add(mut self, factor: f64, other: &Self) -> Self {
        self.axpy(factor, other);
        self
    }
}

/// One damped transverse plane wave on the periodic lattice:
/// `E = e^{−σt} a cos(k·x − |k| t + φ)`, `B = e^{−σt} (k̂ × a) cos(…)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaveMode {
    /// Integer lattice wavevector in units of `2π / L` per axis.
    pub lattice: [i32; 3],
    /// Polarization, orthogonal to the wavevector.
    pub amplitude: [f64; 3],
    pub phase: f64,
}

/// Superposition of damped transverse plane waves; an exact solution of the
/// continuum system whenever `σ_e = σ_m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaveSuperposition {
    pub lengths: [f64; 3],
    pub sigma: f64,
    pub modes: Vec<WaveMode>,
}

impl WaveSuperposition {
    /// `count` modes with lattice components in `−kmax..=kmax`.
    pub fn random(seed: u64, count: usize, kmax: i32, lengths: [f64; 3], sigma: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut modes = Vec::with_capacity(count);
        while modes.len() < count {
            let lattice = [
                rng.gen_range(-kmax..=kmax),
                rng.gen_range(-kmax..=kmax),
                rng.gen_range(-kmax..=kmax),
            ];
            if lattice == [0, 0, 0] {
                continue;
            }
            let raw = [
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            ];
            let phase = rng.gen_range(0.0..2.0 * PI);
            let k = wavevector(lattice, lengths);
            let kk = dot(k, k);
            let along = dot(raw, k) / kk;
            let amplitude = [raw[0] - along * k[0], raw[1] - along * k[1], raw[2] - along * k[2]];
            if dot(amplitude, amplitude) < 1e-6 {
                continue;
            }
            modes.push(WaveMode {
                lattice,
                amplitude,
                phase,
            });
        }
        Self { lengths, sigma, modes }
    }

    fn check_params(&self, params: &MediumParams) -> Result<()> {
        if params.sigma_e != self.sigma || params.sigma_m != self.sigma {
            return Err(LabError::LawCondition {
                law: "wave superposition".into(),
                requirement: format!(
                    "sigma_e == sigma_m == {} (got {} and {})",
                    self.sigma, params.sigma_e, params.sigma_m
                ),
            });
        }
        Ok(())
    }

    pub fn params(&self) -> MediumParams {
        MediumParams {
            sigma_e: self.sigma,
            sigma_m: self.sigma,
        }
    }

    /// Pointwise `(E, B, ∂E/∂t, ∂B/∂t)`.
    pub fn evaluate(&self, x: [f64; 3], t: f64) -> [[f64; 3]; 4] {
        let damp = (-self.sigma * t).exp();
        let mut out = [[0.0; 3]; 4];
        for m in &self.modes {
            let k = wavevector(m.lattice, self.lengths);
            let omega = dot(k, k).sqrt();
            let khat = k.map(|c| c / omega);
            let pol_b = cross(khat, m.amplitude);
            let arg = dot(k, x) - omega * t + m.phase;
            let (s, c) = arg.sin_cos();
            for a in 0..3 {
                out[0][a] += damp * m.amplitude[a] * c;
                out[1][a] += damp * pol_b[a] * c;
                // d/dt [e^{−σt} cos(k·x − ωt + φ)] = e^{−σt} (−σ cos + ω sin)
                out[2][a] += damp * m.amplitude[a] * (-self.sigma * c + omega * s);
                out[3][a] += damp * pol_b[a] * (-self.sigma * c + omega * s);
            }
        }
        out
    }

    pub fn state(&self, params: &MediumParams, grid: &GridSpec, t: f64) -> Result<FieldState> {
        self.check_params(params)?;
        Ok(FieldState {
            t,
            e: grid.vector(|x| self.evaluate(x, t)[0]),
            b: grid.vector(|x| self.evaluate(x, t)[1]),
        })
    }

    /// Analytic `(∂E/∂t, ∂B/∂t)`.
    pub fn rates(&self, grid: &GridSpec, t: f64) -> (VectorField, VectorField) {
        (
            grid.vector(|x| self.evaluate(x, t)[2]),
            grid.vector(|x| self.evaluate(x, t)[3]),
        )
    }

    /// Sum over modes of `|a| · max_axis |k_a − sin(k_a h_a)/h_a|`, the
    /// amplitude of the order-2 stencil error on one field derivative.
    pub fn second_order_truncation(&self, grid: &GridSpec) -> f64 {
        let h = grid.spacing();
        self.modes
            .iter()
            .map(|m| {
                let k = wavevector(m.lattice, self.lengths);
                let amp = dot(m.amplitude, m.amplitude).sqrt();
                let worst = (0..3)
                    .map(|a| (k[a] - (k[a] * h[a]).sin() / h[a]).abs())
                    .fold(0.0, f64::max);
                amp * worst
            })
            .sum()
    }
}

fn wavevector(lattice: [i32; 3], lengths: [f64; 3]) -> [f64; 3] {
    [
        2.0 * PI * lattice[0] as f64 / lengths[0],
        2.0 * PI * lattice[1] as f64 / lengths[1],
        2.0 * PI * lattice[2] as f64 / lengths[2],
    ]
}

/// Smooth periodic random data: every component of `E` and `B` is a sum of
/// `modes_per_component` Fourier modes with random lattice wavevector,
/// amplitude and phase. The same seed yields the same continuum function on
/// any grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomModes {
    pub lengths: [f64; 3],
    /// `[component][mode]`; components are Ex, Ey, Ez, Bx, By, Bz.
    pub components: Vec<Vec<WaveMode>>,
}

pub const MAX_RANDOM_MODES: usize = 8;

impl RandomModes {
    pub fn new(seed: u64, modes_per_component: usize, kmax: i32, lengths: [f64; 3]) -> Result<Self> {
        if modes_per_component == 0 || modes_per_component > MAX_RANDOM_MODES {
            return Err(LabError::InvalidParameter(format!(
                "modes per component must be in 1..={MAX_RANDOM_MODES}, got {modes_per_component}"
            )));
        }
        if kmax < 1 {
            return Err(LabError::InvalidParameter(format!("kmax must be at least 1, got {kmax}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let components = (0..6)
            .map(|_| {
                let mut modes = Vec::with_capacity(modes_per_component);
                while modes.len() < modes_per_component {
                    let lattice = [
                        rng.gen_range(-kmax..=kmax),
                        rng.gen_range(-kmax..=kmax),
                        rng.gen_range(-kmax..=kmax),
                    ];
                    let amplitude = rng.gen_range(-1.0..1.0);
                    let phase = rng.gen_range(0.0..2.0 * PI);
                    if lattice == [0, 0, 0] {
                        continue;
                    }
                    modes.push(WaveMode {
                        lattice,
                        amplitude: [amplitude, 0.0, 0.0],
                        phase,
                    });
                }
                modes
            })
            .collect();
        Ok(Self { lengths, components })
    }

    fn component(&self, c: usize, x: [f64; 3]) -> f64 {
        self.components[c]
            .iter()
            .map(|m| m.amplitude[0] * (dot(wavevector(m.lattice, self.lengths), x) + m.phase).sin())
            .sum()
    }

    pub fn state(&self, grid: &GridSpec, t: f64) -> FieldState {
        FieldState {
            t,
            e: grid.vector(|x| [self.component(0, x), self.component(1, x), self.component(2, x)]),
            b: grid.vector(|x| [self.component(3, x), self.component(4, x), self.component(5, x)]),
        }
    }
}

/// Spatially uniform adjoint `V = (e^{σ_m t}, 0, 0)`, `W = (e^{σ_e t}, 0, 0)`;
/// an exact solution of the adjoint system for any conductivities.
pub fn exponential_adjoint(params: &MediumParams, grid: &GridSpec, t: f64) -> AdjointState {
    AdjointState::from_vw(
        t,
        VectorField::uniform(grid.dims(), [(params.sigma_m * t).exp(), 0.0, 0.0]),
        VectorField::uniform(grid.dims(), [(params.sigma_e * t).exp(), 0.0, 0.0]),
    )
}

/// `V = W = (e^{σ t}, 0, 0)`, defined only for `σ_e = σ_m = σ`.
pub fn exponential_adjoint_equal_sigma(params: &MediumParams, grid: &GridSpec, t: f64) -> Result<AdjointState> {
    if !params.sigmas_equal() {
        return Err(LabError::LawCondition {
            law: "equal-sigma exponential adjoint".into(),
            requirement: "sigma_e == sigma_m".into(),
        });
    }
    Ok(exponential_adjoint(params, grid, t))
}

/// Analytic `(∂V/∂t, ∂W/∂t)` of [`exponential_adjoint`].
pub fn exponential_adjoint_rates(params: &MediumParams, grid: &GridSpec, t: f64) -> (VectorField, VectorField) {
    (
        VectorField::uniform(grid.dims(), [params.sigma_m * (params.sigma_m * t).exp(), 0.0, 0.0]),
        VectorField::uniform(grid.dims(), [params.sigma_e * (params.sigma_e * t).exp(), 0.0, 0.0]),
    )
}

/// Adjoint state at time `t` from a forward solution evaluated at `−t`:
/// `V = B'(−t)`, `W = E'(−t)`, `R_e = div E'(−t) − ρ'_e(−t)`,
/// `R_m = div B'(−t) − ρ'_m(−t)`.
pub fn time_reversed_adjoint(
    primed_at_minus_t: &FieldState,
    t: f64,
    grid: &GridSpec,
    order: StencilOrder,
) -> Result<AdjointState> {
    primed_at_minus_t.validate(grid)?;
    let charges = gauss_charges(primed_at_minus_t, grid, order)?;
    let r_e = div_h(&primed_at_minus_t.e, grid, order)?.sub(&charges.rho_e);
    let r_m = div_h(&primed_at_minus_t.b, grid, order)?.sub(&charges.rho_m);
    Ok(AdjointState {
        t,
        v: primed_at_minus_t.b.clone(),
        w: primed_at_minus_t.e.clone(),
        r_e,
        r_m,
    })
}

/// Builds the adjoint trajectory on `[0, T]` from a primed forward trajectory
/// stored on `[−T, 0]` in ascending order.
pub fn adjoint_from_time_reversal(
    primed: &Trajectory<FieldState>,
    target: &MediumParams,
    order: StencilOrder,
) -> Result<Trajectory<AdjointState>> {
    if primed.params != *target {
        return Err(LabError::InvalidParameter(format!(
            "primed solution has {:?}, adjoint target has {:?}",
            primed.params, target
        )));
    }
    primed.check_uniform()?;
    let last = primed
        .states
        .last()
        .ok_or_else(|| LabError::Misaligned("primed trajectory is empty".into()))?;
    if last.t.abs() > 1e-9 * primed.dt {
        return Err(LabError::Misaligned(format!(
            "primed trajectory must end at t = 0, ends at {}",
            last.t
        )));
    }
    let states = primed
        .states
        .iter()
        .rev()
        .map(|s| time_reversed_adjoint(s, -s.t, &primed.grid, order))
        .collect::<Result<Vec<_>>>()?;
    Ok(Trajectory {
        states,
        dt: primed.dt,
        params: *target,
        grid: primed.grid,
    })
}

/// Same as [`adjoint_from_time_reversal`] for a closed-form primed solution.
pub fn adjoint_from_closed_form(
    primed: impl Fn(f64) -> Result<FieldState>,
    params: &MediumParams,
    grid: &GridSpec,
    dt: f64,
    steps: usize,
    order: StencilOrder,
) -> Result<Trajectory<AdjointState>> {
    let states = (0..=steps)
        .map(|k| {
            let t = k as f64 * dt;
            time_reversed_adjoint(&primed(-t)?, t, grid, order)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Trajectory {
        states,
        dt,
        params: *params,
        grid: *grid,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn box_grid(n: usize) -> GridSpec {
        GridSpec::cube(n, 2.0 * PI).unwrap()
    }

    #[test]
    fn zero_state_has_zero_rates() {
        let g = box_grid(6);
        let p = MediumParams::new(0.2, 0.7).unwrap();
        let (de, db) = rhs_forward(&FieldState::zeros(&g, 0.0), &p, &g, StencilOrder::Second).unwrap();
        assert_eq!(de.max_abs() + db.max_abs(), 0.0);
        let (dv, dw) = rhs_adjoint(&AdjointState::zeros(&g, 0.0), &p, &g, StencilOrder::Second).unwrap();
        assert_eq!(dv.max_abs() + dw.max_abs(), 0.0);
    }

    #[test]
    fn uniform_fields_decay_at_their_own_rates() {
        let g = box_grid(4);
        let p = MediumParams::new(0.3, 0.8).unwrap();
        let s = exact_uniform([1.0, -2.0, 0.5], [0.25, 3.0, -1.0], &p, &g, 0.0);
        let (de, db) = rhs_forward(&s, &p, &g, StencilOrder::Second).unwrap();
        assert_eq!(de.at(0), [-0.3, 0.6, -0.15]);
        assert_eq!(db.at(5), [-0.2, -2.4000000000000004, 0.8]);
    }

    #[test]
    fn rhs_rejects_nonfinite() {
        let g = box_grid(4);
        let mut s = FieldState::zeros(&g, 0.0);
        s.b.comps[2][3] = f64::NAN;
        assert!(matches!(
            rhs_forward(&s, &MediumParams::vacuum(), &g, StencilOrder::Second),
            Err(LabError::NonFinite { .. })
        ));
    }

    #[test]
    fn exponential_adjoints_are_exact() {
        let g = box_grid(4);
        for p in [MediumParams::equal(0.3).unwrap(), MediumParams::new(0.1, 0.5).unwrap()] {
            let t = 0.7;
            let adj = exponential_adjoint(&p, &g, t);
            let (dv, dw) = rhs_adjoint(&adj, &p, &g, StencilOrder::Second).unwrap();
            let (ev, ew) = exponential_adjoint_rates(&p, &g, t);
            assert!(dv.sub(&ev).max_abs() < 1e-15);
            assert!(dw.sub(&ew).max_abs() < 1e-15);
        }
        let unequal = MediumParams::new(0.1, 0.5).unwrap();
        assert!(exponential_adjoint_equal_sigma(&unequal, &g, 0.0).is_err());
        let eq = MediumParams::equal(0.3).unwrap();
        let adj = exponential_adjoint_equal_sigma(&eq, &g, 1.0).unwrap();
        assert_eq!(adj.v.at(0), adj.w.at(0));
    }

    #[test]
    fn rk4_uniform_decay_matches_exponential() {
        let g = box_grid(4);
        let p = MediumParams::new(0.3, 0.5).unwrap();
        let e0 = [1.0, -0.5, 2.0];
        let b0 = [0.3, 0.0, -1.0];
        let init = exact_uniform(e0, b0, &p, &g, 0.0);
        let traj = Integrator::default()
            .integrate(init, &p, &g, 1e-3, 1000, Direction::Forward)
            .unwrap();
        let last = traj.states.last().unwrap();
        let exact = exact_uniform(e0, b0, &p, &g, 1.0);
        for c in 0..3 {
            if e0[c] != 0.0 {
                let rel = (last.e.at(0)[c] - exact.e.at(0)[c]).abs() / exact.e.at(0)[c].abs();
                assert!(rel <= 1e-10, "{rel}");
            }
        }
        assert!((last.t - 1.0).abs() < 1e-12);
        traj.check_uniform().unwrap();
    }

    #[test]
    fn zero_state_stays_zero() {
        let g = box_grid(5);
        let p = MediumParams::new(0.4, 0.1).unwrap();
        let traj = Integrator::default()
            .integrate(FieldState::zeros(&g, 0.0), &p, &g, 0.05, 10, Direction::Forward)
            .unwrap();
        assert!(traj.states.iter().all(|s| s.max_abs() == 0.0));
    }

    #[test]
    fn cfl_and_blowup_guards() {
        let g = box_grid(8);
        let p = MediumParams::vacuum();
        let s = FieldState::zeros(&g, 0.0);
        let err = Integrator::default().step(&s, &p, &g, 1.0, Direction::Forward);
        assert!(matches!(err, Err(LabError::CflViolation { .. })));
        let lax = Integrator {
            enforce_cfl: false,
            ..Integrator::default()
        };
        assert!(lax.step(&s, &p, &g, 1.0, Direction::Forward).is_ok());

        // the adjoint grows like e^{σ_m t}
        let v = VectorField::uniform(g.dims(), [0.999e12, 0.0, 0.0]);
        let adj = AdjointState::from_vw(0.0, v, VectorField::zeros(g.dims()));
        let growing = MediumParams::new(0.0, 5.0).unwrap();
        let err = Integrator::default().integrate(adj, &growing, &g, 0.1, 5, Direction::Forward);
        assert!(matches!(err, Err(LabError::BlowUp { .. })));
    }

    #[test]
    fn backward_then_forward_round_trip() {
        let g = box_grid(4);
        let p = MediumParams::new(0.2, 0.6).unwrap();
        let init = RandomModes::new(3, 4, 1, g.lengths()).unwrap().state(&g, 0.0);
        let it = Integrator::default();
        let back = it.step(&init, &p, &g, 0.01, Direction::Backward).unwrap();
        let again = it.step(&back, &p, &g, 0.01, Direction::Forward).unwrap();
        let scale = init.max_abs();
        assert!(again.e.sub(&init.e).max_abs() <= 1e-10 * scale);
        assert!(again.b.sub(&init.b).max_abs() <= 1e-10 * scale);
        assert!(again.t.abs() < 1e-15);
    }

    #[test]
    fn uniform_family_limits() {
        let g = box_grid(4);
        let p = MediumParams::new(1.0, 0.0).unwrap();
        let s0 = exact_uniform([2.0, 4.0, -6.0], [1.0, 1.0, 1.0], &p, &g, 0.0);
        assert_eq!(s0.e.at(3), [2.0, 4.0, -6.0]);
        let s = exact_uniform([2.0, 4.0, -6.0], [1.0, 1.0, 1.0], &p, &g, 2f64.ln());
        let e = s.e.at(0);
        assert!((e[0] - 1.0).abs() < 1e-15 && (e[1] - 2.0).abs() < 1e-15 && (e[2] + 3.0).abs() < 1e-15);
        assert_eq!(s.b.at(0), [1.0, 1.0, 1.0]);
    }

    #[test]
    fn plane_wave_requires_equal_sigma() {
        let g = box_grid(8);
        let prof = PeriodicProfile::single(2.0 * PI, 1, 1.0, 0.0);
        assert!(exact_damped_plane_wave(&prof, &MediumParams::new(0.1, 0.2).unwrap(), &g, 0.0).is_err());
        let s = exact_damped_plane_wave(&prof, &MediumParams::equal(0.4).unwrap(), &g, 0.0).unwrap();
        let expect = g.scalar(|x| x[0].sin());
        assert_eq!(s.e.comps[1], expect);
        assert_eq!(s.b.comps[2], expect);
        assert_eq!(s.e.comps[0].max_abs() + s.b.comps[1].max_abs(), 0.0);
    }

    #[test]
    fn superposition_modes_are_transverse_and_reproducible() {
        let l = [2.0 * PI; 3];
        let a = WaveSuperposition::random(11, 5, 2, l, 0.3);
        let b = WaveSuperposition::random(11, 5, 2, l, 0.3);
        assert_eq!(a, b);
        for m in &a.modes {
            let k = wavevector(m.lattice, l);
            assert!(dot(k, m.amplitude).abs() < 1e-12);
        }
        let g = box_grid(6);
        assert!(a.state(&MediumParams::new(0.3, 0.4).unwrap(), &g, 0.0).is_err());
    }

    #[test]
    fn random_modes_reject_bad_counts() {
        assert!(RandomModes::new(1, 0, 1, [1.0; 3]).is_err());
        assert!(RandomModes::new(1, 9, 1, [1.0; 3]).is_err());
        assert!(RandomModes::new(1, 4, 0, [1.0; 3]).is_err());
    }

    #[test]
    fn zero_primed_solution_gives_zero_adjoint() {
        let g = box_grid(5);
        let p = MediumParams::equal(0.2).unwrap();
        let adj = adjoint_from_closed_form(|t| Ok(FieldState::zeros(&g, t)), &p, &g, 0.1, 4, StencilOrder::Second)
            .unwrap();
        assert!(adj.states.iter().all(|a| a.max_abs() == 0.0));
        assert_eq!(adj.times()[4], 0.4);
    }

    #[test]
    fn time_reversal_of_uniform_solution() {
        let g = box_grid(4);
        let p = MediumParams::new(0.2, 0.6).unwrap();
        let (e0, b0) = ([1.0, 2.0, 3.0], [-1.0, 0.5, 0.25]);
        let adj = adjoint_from_closed_form(
            |t| Ok(exact_uniform(e0, b0, &p, &g, t)),
            &p,
            &g,
            0.1,
            10,
            StencilOrder::Second,
        )
        .unwrap();
        for a in &adj.states {
            let v = a.v.at(0);
            let w = a.w.at(0);
            for c in 0..3 {
                assert!((v[c] - b0[c] * (p.sigma_m * a.t).exp()).abs() < 1e-14);
                assert!((w[c] - e0[c] * (p.sigma_e * a.t).exp()).abs() < 1e-14);
            }
            assert_eq!(a.r_e.max_abs() + a.r_m.max_abs(), 0.0);
            // rates of the adjoint system equal (σ_m V, σ_e W) for uniform data
            let (dv, dw) = rhs_adjoint(a, &p, &g, StencilOrder::Second).unwrap();
            assert!(dv.sub(&a.v.scaled(p.sigma_m)).max_abs() < 1e-15);
            assert!(dw.sub(&a.w.scaled(p.sigma_e)).max_abs() < 1e-15);
        }
    }

    #[test]
    fn time_reversal_from_trajectory_checks_alignment() {
        let g = box_grid(4);
        let p = MediumParams::equal(0.3).unwrap();
        let init = RandomModes::new(5, 2, 1, g.lengths()).unwrap().state(&g, 0.0);
        let it = Integrator::default();
        let (past, _) = it.integrate_both_ways(&init, &p, &g, 0.05, 6).unwrap();
        let adj = adjoint_from_time_reversal(&past, &p, StencilOrder::Second).unwrap();
        assert_eq!(adj.len(), 7);
        assert_eq!(adj.states[0].v, init.b);
        assert_eq!(adj.states[6].w, past.states[0].e);
        assert!((adj.states[6].t - 0.3).abs() < 1e-12);

        let other = MediumParams::equal(0.4).unwrap();
        assert!(adjoint_from_time_reversal(&past, &other, StencilOrder::Second).is_err());
        let future = it.integrate(init, &p, &g, 0.05, 3, Direction::Forward).unwrap();
        assert!(matches!(
            adjoint_from_time_reversal(&future, &p, StencilOrder::Second),
            Err(LabError::Misaligned(_))
        ));
    }
}
