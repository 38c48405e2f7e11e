//! Hand-written conserved vectors `(τ, χ)`, their residual
//! `D_t τ + div χ` along paired trajectories, and global invariants.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::dynamics::{adjoint_from_time_reversal, Trajectory};
use crate::error::{LabError, Result};
use crate::field::{cross, dot, ScalarField, VectorField};
use crate::model::{gauss_charges, AdjointState, FieldState, GridSpec, MediumParams};
use crate::noether::{
    conserved_vector_point, lagrangian_point, AdjointPoint, DerivativeBundle, GridSnapshot, JetPoint, SymmetryGenerator,
    T_AXIS,
};
use crate::ops::{ddt_centered, ddt_second_order, div_h, StencilOrder};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Applicability {
    AnySigma,
    SigmaEqual,
}

impl Applicability {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::AnySigma => "any_sigma",
            Self::SigmaEqual => "sigma_equal",
        }
    }

    pub fn holds(self, params: &MediumParams) -> bool {
        match self {
            Self::AnySigma => true,
            Self::SigmaEqual => params.sigmas_equal(),
        }
    }
}

/// Everything a law may look at in one node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LawInput {
    pub jet: JetPoint,
    pub adj: AdjointPoint,
    pub params: MediumParams,
}

impl LawInput {
    fn e(&self) -> [f64; 3] {
        self.jet.e()
    }
    fn b(&self) -> [f64; 3] {
        self.jet.b()
    }
    fn v(&self) -> [f64; 3] {
        self.adj.v
    }
    fn w(&self) -> [f64; 3] {
        self.adj.w
    }
}

type DensityFn = fn(&LawInput) -> f64;
type FluxFn = fn(&LawInput) -> [f64; 3];

/// A conserved vector written out in closed form.
#[derive(Clone, Copy)]
pub struct ConservationLaw {
    pub name: &'static str,
    pub condition: Applicability,
    /// Symmetry and formula the law was derived from.
    pub provenance: &'static str,
    /// Name of the generating symmetry in [`SymmetryGenerator::builtin`].
    pub generator: Option<&'static str>,
    /// The `L ξ^i` part of the generic conserved vector is left out because
    /// it vanishes on solutions.
    pub omits_lagrangian_term: bool,
    /// Depends explicitly on the coordinates, so it is not periodic.
    pub coordinate_dependent: bool,
    tau: DensityFn,
    chi: FluxFn,
    /// Predicted value of `D_t τ + div χ` when the condition fails.
    defect: Option<DensityFn>,
}

impl fmt::Debug for ConservationLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ConservationLaw")
            .field("name", &self.name)
            .field("condition", &self.condition)
            .finish()
    }
}

impl ConservationLaw {
    pub fn tau(&self, input: &LawInput) -> f64 {
        (self.tau)(input)
    }

    pub fn chi(&self, input: &LawInput) -> [f64; 3] {
        (self.chi)(input)
    }

    pub fn defect(&self, input: &LawInput) -> Option<f64> {
        self.defect.map(|f| f(input))
    }

    pub fn has_defect(&self) -> bool {
        self.defect.is_some()
    }

    pub fn generator(&self) -> Option<SymmetryGenerator> {
        self.generator.and_then(SymmetryGenerator::by_name)
    }

    /// `(τ, χ)` with the `L ξ^i` term restored, for comparison with the
    /// generic builder.
    pub fn off_shell(&self, input: &LawInput) -> [f64; 4] {
        let chi = self.chi(input);
        let mut c = [chi[0], chi[1], chi[2], self.tau(input)];
        if self.omits_lagrangian_term {
            if let Some(gen) = self.generator() {
                let l = lagrangian_point(&input.jet, &input.adj, &input.params);
                let xi = gen.xi(&input.jet);
                for i in 0..4 {
                    c[i] += l * xi[i];
                }
            }
        }
        c
    }

    /// `(τ, χ)` on every node of a snapshot.
    pub fn evaluate(&self, snap: &GridSnapshot<'_>, params: &MediumParams) -> Result<(ScalarField, VectorField)> {
        snap.validate()?;
        let dims = snap.grid.dims();
        let mut tau = ScalarField::zeros(dims);
        let mut chi = VectorField::zeros(dims);
        for n in 0..snap.len() {
            let input = LawInput {
                jet: snap.jet(n),
                adj: snap.adjoint_point(n),
                params: *params,
            };
            tau[n] = self.tau(&input);
            let c = self.chi(&input);
            for a in 0..3 {
                chi.comps[a][n] = c[a];
            }
        }
        Ok((tau, chi))
    }
}

pub fn law_duality() -> ConservationLaw {
    ConservationLaw {
        name: "duality",
        condition: Applicability::SigmaEqual,
        provenance: "duality rotation E·∂_B − B·∂_E + ρ_e ∂_ρm − ρ_m ∂_ρe",
        generator: Some("duality"),
        omits_lagrangian_term: false,
        coordinate_dependent: false,
        tau: |p| dot(p.e(), p.v()) + dot(p.b(), p.w()),
        chi: |p| sub3(cross(p.e(), p.w()), cross(p.b(), p.v())),
        defect: Some(|p| (p.params.sigma_m - p.params.sigma_e) * (dot(p.e(), p.v()) - dot(p.b(), p.w()))),
    }
}

pub fn law_dilation() -> ConservationLaw {
    ConservationLaw {
        name: "dilation",
        condition: Applicability::AnySigma,
        provenance: "dilation of E, B, ρ_e, ρ_m",
        generator: Some("dilation"),
        omits_lagrangian_term: false,
        coordinate_dependent: false,
        tau: |p| dot(p.b(), p.v()) - dot(p.e(), p.w()),
        chi: |p| add3(cross(p.e(), p.v()), cross(p.b(), p.w())),
        defect: None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimeForm {
    /// `τ = E_t·W − B_t·V`
    Compact,
    /// `τ = W·(∇×B − σ_e E) + V·(∇×E + σ_m B)`
    Expanded,
}

fn time_translation_chi(p: &LawInput) -> [f64; 3] {
    add3(cross(p.v(), p.jet.e_d(T_AXIS)), cross(p.w(), p.jet.b_d(T_AXIS)))
}

pub fn law_time_translation(form: TimeForm) -> ConservationLaw {
    match form {
        TimeForm::Compact => ConservationLaw {
            name: "time_translation",
            condition: Applicability::AnySigma,
            provenance: "time translation ∂_t, density with L dropped",
            generator: Some("time_translation"),
            omits_lagrangian_term: true,
            coordinate_dependent: false,
            tau: |p| dot(p.jet.e_d(T_AXIS), p.w()) - dot(p.jet.b_d(T_AXIS), p.v()),
            chi: time_translation_chi,
            defect: None,
        },
        TimeForm::Expanded => ConservationLaw {
            name: "time_translation_expanded",
            condition: Applicability::AnySigma,
            provenance: "time translation ∂_t, density with L substituted",
            generator: Some("time_translation"),
            omits_lagrangian_term: false,
            coordinate_dependent: false,
            tau: |p| {
                let s = p.params;
                let e = p.e();
                let b = p.b();
                let cb = p.jet.curl_b();
                let ce = p.jet.curl_e();
                let a = [0, 1, 2].map(|k| cb[k] - s.sigma_e * e[k]);
                let c = [0, 1, 2].map(|k| ce[k] + s.sigma_m * b[k]);
                dot(p.w(), a) + dot(p.v(), c)
            },
            chi: time_translation_chi,
            defect: None,
        },
    }
}

fn translation_tau<const AXIS: usize>(p: &LawInput) -> f64 {
    dot(p.jet.e_d(AXIS), p.w()) - dot(p.jet.b_d(AXIS), p.v())
}

fn translation_chi<const AXIS: usize>(p: &LawInput) -> [f64; 3] {
    add3(cross(p.v(), p.jet.e_d(AXIS)), cross(p.w(), p.jet.b_d(AXIS)))
}

pub fn law_space_translation(axis: usize) -> Result<ConservationLaw> {
    let base = ConservationLaw {
        name: "",
        condition: Applicability::AnySigma,
        provenance: "",
        generator: None,
        omits_lagrangian_term: true,
        coordinate_dependent: false,
        tau: translation_tau::<0>,
        chi: translation_chi::<0>,
        defect: None,
    };
    Ok(match axis {
        0 => ConservationLaw {
            name: "space_translation_x",
            provenance: "space translation ∂_x, L dropped from χ¹",
            generator: Some("space_translation_x"),
            ..base
        },
        1 => ConservationLaw {
            name: "space_translation_y",
            provenance: "space translation ∂_y, L dropped from χ²",
            generator: Some("space_translation_y"),
            tau: translation_tau::<1>,
            chi: translation_chi::<1>,
            ..base
        },
        2 => ConservationLaw {
            name: "space_translation_z",
            provenance: "space translation ∂_z, L dropped from χ³",
            generator: Some("space_translation_z"),
            tau: translation_tau::<2>,
            chi: translation_chi::<2>,
            ..base
        },
        _ => return Err(LabError::InvalidParameter(format!("no spatial axis {axis}"))),
    })
}

// Component lists for the rotation laws, written term by term. Superscripts
// are 0-based here: E¹ is e[0]. `ed(k)` is ∂E/∂x^k.
struct Terms {
    x: f64,
    y: f64,
    z: f64,
    e: [f64; 3],
    b: [f64; 3],
    v: [f64; 3],
    w: [f64; 3],
    jet: JetPoint,
}

impl Terms {
    fn new(p: &LawInput) -> Self {
        Self {
            x: p.jet.x[0],
            y: p.jet.x[1],
            z: p.jet.x[2],
            e: p.e(),
            b: p.b(),
            v: p.v(),
            w: p.w(),
            jet: p.jet,
        }
    }
    fn ed(&self, axis: usize) -> [f64; 3] {
        self.jet.e_d(axis)
    }
    fn bd(&self, axis: usize) -> [f64; 3] {
        self.jet.b_d(axis)
    }
}

const X: usize = 0;
const Y: usize = 1;
const Z: usize = 2;

fn rot_xy_tau(p: &LawInput) -> f64 {
    let t = Terms::new(p);
    let (e, b, v, w) = (t.e, t.b, t.v, t.w);
    let me = sub3(scale3(t.y, t.ed(X)), scale3(t.x, t.ed(Y)));
    let mb = sub3(scale3(t.y, t.bd(X)), scale3(t.x, t.bd(Y)));
    w[1] * e[0] - w[0] * e[1] + dot(me, w) - (v[1] * b[0] - v[0] * b[1]) - dot(mb, v)
}

fn rot_xy_chi(p: &LawInput) -> [f64; 3] {
    let t = Terms::new(p);
    let (x, y) = (t.x, t.y);
    let (e, b, v, w) = (t.e, t.b, t.v, t.w);
    let (ex, ey, bx, by) = (t.ed(X), t.ed(Y), t.bd(X), t.bd(Y));
    let c1 = -v[2] * e[0] - y * (ex[1] * v[2] - ex[2] * v[1]) + x * (ey[1] * v[2] - ey[2] * v[1]) - w[2] * b[0]
        - y * (bx[1] * w[2] - bx[2] * w[1])
        + x * (by[1] * w[2] - by[2] * w[1]);
    let c2 = -v[2] * e[1] + y * (ex[0] * v[2] - ex[2] * v[0]) - x * (ey[0] * v[2] - ey[2] * v[0]) - w[2] * b[1]
        + y * (bx[0] * w[2] - bx[2] * w[0])
        - x * (by[0] * w[2] - by[2] * w[0]);
    let c3 = v[0] * e[0] + v[1] * e[1] - y * (ex[0] * v[1] - ex[1] * v[0]) + x * (ey[0] * v[1] - ey[1] * v[0])
        + w[0] * b[0]
        + w[1] * b[1]
        - y * (bx[0] * w[1] - bx[1] * w[0])
        + x * (by[0] * w[1] - by[1] * w[0]);
    [c1, c2, c3]
}

fn rot_xz_tau(p: &LawInput) -> f64 {
    let t = Terms::new(p);
    let (e, b, v, w) = (t.e, t.b, t.v, t.w);
    let me = sub3(scale3(t.z, t.ed(X)), scale3(t.x, t.ed(Z)));
    let mb = sub3(scale3(t.z, t.bd(X)), scale3(t.x, t.bd(Z)));
    w[2] * e[0] - w[0] * e[2] + dot(me, w) - (v[2] * b[0] - v[0] * b[2]) - dot(mb, v)
}

fn rot_xz_chi(p: &LawInput) -> [f64; 3] {
    let t = Terms::new(p);
    let (x, z) = (t.x, t.z);
    let (e, b, v, w) = (t.e, t.b, t.v, t.w);
    let (ex, ez, bx, bz) = (t.ed(X), t.ed(Z), t.bd(X), t.bd(Z));
    let c1 = v[1] * e[0] - z * (ex[1] * v[2] - ex[2] * v[1]) + x * (ez[1] * v[2] - ez[2] * v[1]) + w[1] * b[0]
        - z * (bx[1] * w[2] - bx[2] * w[1])
        + x * (bz[1] * w[2] - bz[2] * w[1]);
    let c2 = -v[0] * e[0] - v[2] * e[2] + z * (ex[0] * v[2] - ex[2] * v[0]) - x * (ez[0] * v[2] - ez[2] * v[0])
        - w[0] * b[0]
        - w[2] * b[2]
        + z * (bx[0] * w[2] - bx[2] * w[0])
        - x * (bz[0] * w[2] - bz[2] * w[0]);
    let c3 = v[1] * e[2] - z * (ex[0] * v[1] - ex[1] * v[0]) + x * (ez[0] * v[1] - ez[1] * v[0]) + w[1] * b[2]
        - z * (bx[0] * w[1] - bx[1] * w[0])
        + x * (bz[0] * w[1] - bz[1] * w[0]);
    [c1, c2, c3]
}

fn rot_yz_tau(p: &LawInput) -> f64 {
    let t = Terms::new(p);
    let (e, b, v, w) = (t.e, t.b, t.v, t.w);
    let me = sub3(scale3(t.z, t.ed(Y)), scale3(t.y, t.ed(Z)));
    let mb = sub3(scale3(t.z, t.bd(Y)), scale3(t.y, t.bd(Z)));
    w[2] * e[1] - w[1] * e[2] + dot(me, w) - (v[2] * b[1] - v[1] * b[2]) - dot(mb, v)
}

fn rot_yz_chi(p: &LawInput) -> [f64; 3] {
    let t = Terms::new(p);
    let (y, z) = (t.y, t.z);
    let (e, b, v, w) = (t.e, t.b, t.v, t.w);
    let (ey, ez, by, bz) = (t.ed(Y), t.ed(Z), t.bd(Y), t.bd(Z));
    let c1 = v[1] * e[1] + v[2] * e[2] - z * (ey[1] * v[2] - ey[2] * v[1]) + y * (ez[1] * v[2] - ez[2] * v[1])
        + w[1] * b[1]
        + w[2] * b[2]
        - z * (by[1] * w[2] - by[2] * w[1])
        + y * (bz[1] * w[2] - bz[2] * w[1]);
    let c2 = -v[0] * e[1] + z * (ey[0] * v[2] - ey[2] * v[0]) - y * (ez[0] * v[2] - ez[2] * v[0]) - w[0] * b[1]
        + z * (by[0] * w[2] - by[2] * w[0])
        - y * (bz[0] * w[2] - bz[2] * w[0]);
    let c3 = -v[0] * e[2] - z * (ey[0] * v[1] - ey[1] * v[0]) + y * (ez[0] * v[1] - ez[1] * v[0]) - w[0] * b[2]
        - z * (by[0] * w[1] - by[1] * w[0])
        + y * (bz[0] * w[1] - bz[1] * w[0]);
    [c1, c2, c3]
}

/// Rotation law in the plane of axes `a < b` (`xy`, `xz` or `yz`).
pub fn law_rotation(a: usize, b: usize) -> Result<ConservationLaw> {
    let (name, provenance, generator, tau, chi): (_, _, _, DensityFn, FluxFn) = match (a, b) {
        (0, 1) => (
            "rotation_xy",
            "rotation y∂_x − x∂_y with E, B rotated alike",
            "rotation_xy",
            rot_xy_tau,
            rot_xy_chi,
        ),
        (0, 2) => (
            "rotation_xz",
            "rotation z∂_x − x∂_z with E, B rotated alike",
            "rotation_xz",
            rot_xz_tau,
            rot_xz_chi,
        ),
        (1, 2) => (
            "rotation_yz",
            "rotation z∂_y − y∂_z with E, B rotated alike",
            "rotation_yz",
            rot_yz_tau,
            rot_yz_chi,
        ),
        _ => return Err(LabError::InvalidParameter(format!("no rotation plane ({a}, {b})"))),
    };
    Ok(ConservationLaw {
        name,
        condition: Applicability::AnySigma,
        provenance,
        generator: Some(generator),
        omits_lagrangian_term: true,
        coordinate_dependent: true,
        tau,
        chi,
        defect: None,
    })
}

/// `(x×∇)_k` applied to each component of a field with the given partials.
fn moment(x: [f64; 3], d: [[f64; 3]; 3], k: usize) -> [f64; 3] {
    // d[axis] is the partial along axis
    let (i, j) = match k {
        0 => (1, 2),
        1 => (2, 0),
        _ => (0, 1),
    };
    // (x×∇)_k = x_i ∂_j − x_j ∂_i
    [0, 1, 2].map(|c| x[i] * d[j][c] - x[j] * d[i][c])
}

/// Vector form of the three rotation densities:
/// `W×E + W·(x×∇)E − V×B − V·(x×∇)B`.
pub fn rotation_density_vector(p: &LawInput) -> [f64; 3] {
    let de = [p.jet.e_d(0), p.jet.e_d(1), p.jet.e_d(2)];
    let db = [p.jet.b_d(0), p.jet.b_d(1), p.jet.b_d(2)];
    let we = cross(p.w(), p.e());
    let vb = cross(p.v(), p.b());
    [0, 1, 2].map(|k| {
        we[k] + dot(p.w(), moment(p.jet.x, de, k)) - vb[k] - dot(p.v(), moment(p.jet.x, db, k))
    })
}

/// Maps the vector form onto the per-plane densities `[τ_xy, τ_xz, τ_yz]`.
pub fn rotation_planes_from_vector(v: [f64; 3]) -> [f64; 3] {
    [-v[2], v[1], -v[0]]
}

/// All single-law entries, in a fixed order.
pub fn catalog() -> Vec<ConservationLaw> {
    let mut out = vec![
        law_duality(),
        law_dilation(),
        law_time_translation(TimeForm::Compact),
        law_time_translation(TimeForm::Expanded),
    ];
    for axis in 0..3 {
        out.push(law_space_translation(axis).expect("valid axis"));
    }
    for (a, b) in [(0, 1), (0, 2), (1, 2)] {
        out.push(law_rotation(a, b).expect("valid plane"));
    }
    out
}

pub fn law_by_name(name: &str) -> Result<ConservationLaw> {
    catalog()
        .into_iter()
        .find(|l| l.name == name)
        .ok_or_else(|| LabError::UnknownLaw(name.to_string()))
}

/// Difference between the generic conserved vector and the catalog entry
/// with its dropped `L ξ^i` restored, `[x, y, z, t]`.
pub fn generic_mismatch(law: &ConservationLaw, input: &LawInput) -> Option<[f64; 4]> {
    let gen = law.generator()?;
    let generic = conserved_vector_point(&gen, &input.jet, &input.adj, &input.params);
    let mine = law.off_shell(input);
    Some([0, 1, 2, 3].map(|i| generic.c[i] - mine[i]))
}

/// Closed-form `(τ, χ)` of the duality law with `V = W = (e^{σt}, 0, 0)`.
pub fn duality_with_exponential_adjoint(e: [f64; 3], b: [f64; 3], sigma: f64, t: f64) -> (f64, [f64; 3]) {
    let s = (sigma * t).exp();
    ((e[0] + b[0]) * s, [0.0, (e[2] - b[2]) * s, (b[1] - e[1]) * s])
}

/// Closed-form `(τ, χ)` of the expanded time-translation law with
/// `V = (e^{σ_m t}, 0, 0)`, `W = (e^{σ_e t}, 0, 0)`.
pub fn time_translation_with_exponential_adjoint(jet: &JetPoint, params: &MediumParams) -> (f64, [f64; 3]) {
    let se = (params.sigma_e * jet.t).exp();
    let sm = (params.sigma_m * jet.t).exp();
    let (e, b) = (jet.e(), jet.b());
    let (ey, ez, by, bz) = (jet.e_d(1), jet.e_d(2), jet.b_d(1), jet.b_d(2));
    let (et, bt) = (jet.e_d(T_AXIS), jet.b_d(T_AXIS));
    let tau = (by[2] - bz[1] - params.sigma_e * e[0]) * se + (ey[2] - ez[1] + params.sigma_m * b[0]) * sm;
    (tau, [0.0, -et[2] * sm - bt[2] * se, et[1] * sm + bt[1] * se])
}

/// Laws written in terms of two forward solutions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TwoSolutionKind {
    Duality,
    TimeTranslation,
}

#[derive(Debug, Clone, Copy)]
pub struct TwoSolutionLaw {
    pub kind: TwoSolutionKind,
    pub law: ConservationLaw,
}

pub fn law_two_solution(kind: TwoSolutionKind) -> TwoSolutionLaw {
    let law = match kind {
        TwoSolutionKind::Duality => law_duality(),
        TwoSolutionKind::TimeTranslation => law_time_translation(TimeForm::Compact),
    };
    TwoSolutionLaw { kind, law }
}

impl TwoSolutionLaw {
    /// `(τ, χ)` directly from `E, B, E_t, B_t` at `t` and `E', B'` at `−t`.
    pub fn direct(
        &self,
        e: [f64; 3],
        b: [f64; 3],
        e_t: [f64; 3],
        b_t: [f64; 3],
        e_primed: [f64; 3],
        b_primed: [f64; 3],
    ) -> (f64, [f64; 3]) {
        match self.kind {
            TwoSolutionKind::Duality => (
                dot(e, b_primed) + dot(b, e_primed),
                sub3(cross(e, e_primed), cross(b, b_primed)),
            ),
            TwoSolutionKind::TimeTranslation => (
                dot(e_t, e_primed) - dot(b_t, b_primed),
                add3(cross(b_primed, e_t), cross(e_primed, b_t)),
            ),
        }
    }

    /// Builds the adjoint from `primed` (stored on `[−T, 0]`) by time
    /// reversal and evaluates the residual of the paired law.
    pub fn residual(
        &self,
        forward: &Trajectory<FieldState>,
        primed: &Trajectory<FieldState>,
        options: &ResidualOptions,
    ) -> Result<ResidualReport> {
        let adjoint = adjoint_from_time_reversal(primed, &forward.params, options.order)?;
        conservation_residual(&self.law, forward, &adjoint, options)
    }
}

/// Where the time derivatives of `E` and `B` come from.
#[derive(Debug, Clone, Default)]
pub enum TimeRates {
    /// Second-order differences of the stored states.
    #[default]
    Differenced,
    /// Supplied per state, e.g. from a closed form.
    Supplied(Vec<(VectorField, VectorField)>),
}

#[derive(Debug, Clone)]
pub struct ResidualOptions {
    pub order: StencilOrder,
    pub rates: TimeRates,
    /// Evaluate a law outside its condition to measure the defect.
    pub override_condition: bool,
}

impl ResidualOptions {
    pub fn new(order: StencilOrder) -> Self {
        Self {
            order,
            rates: TimeRates::Differenced,
            override_condition: false,
        }
    }

    pub fn overriding(mut self) -> Self {
        self.override_condition = true;
        self
    }

    pub fn with_rates(mut self, rates: Vec<(VectorField, VectorField)>) -> Self {
        self.rates = TimeRates::Supplied(rates);
        self
    }
}

/// Sums of `τ dV` over the box at every stored time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalInvariantSeries {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    /// `Σ |τ| dV` at the first time, the reference for relative drift.
    pub scale: f64,
}

impl GlobalInvariantSeries {
    /// `max |I(t_k) − I(t_0)|` divided by `scale` (absolute when the scale
    /// vanishes).
    pub fn drift(&self) -> f64 {
        let Some(&first) = self.values.first() else {
            return 0.0;
        };
        let worst = self.values.iter().fold(0.0f64, |m, v| m.max((v - first).abs()));
        if self.scale > 0.0 {
            worst / self.scale
        } else {
            worst
        }
    }
}

/// Residual compared with the predicted defect when the condition fails.
#[derive(Debug, Clone)]
pub struct DefectComparison {
    pub predicted: Vec<ScalarField>,
    pub l2_difference: f64,
    pub l2_predicted: f64,
    /// `‖r − f‖ / ‖f‖`
    pub relative_difference: f64,
}

#[derive(Debug, Clone)]
pub struct ResidualReport {
    pub law: &'static str,
    /// Interior times at which the residual is evaluated.
    pub times: Vec<f64>,
    pub residuals: Vec<ScalarField>,
    /// RMS over interior times and unmasked nodes.
    pub l2: f64,
    pub max: f64,
    /// `rms(D_t τ) + rms(div χ)`
    pub scale: f64,
    /// Nodes per slice that enter the norms.
    pub evaluated_points: usize,
    pub defect: Option<DefectComparison>,
    pub invariant: GlobalInvariantSeries,
}

impl ResidualReport {
    pub fn normalized(&self) -> f64 {
        if self.scale > 0.0 {
            self.l2 / self.scale
        } else {
            self.l2
        }
    }
}

fn check_aligned(forward: &Trajectory<FieldState>, adjoint: &Trajectory<AdjointState>) -> Result<()> {
    if forward.len() != adjoint.len() {
        return Err(LabError::Misaligned(format!(
            "forward has {} states, adjoint has {}",
            forward.len(),
            adjoint.len()
        )));
    }
    if forward.len() < 3 {
        return Err(LabError::Misaligned("at least three time slices are needed".into()));
    }
    if forward.grid != adjoint.grid {
        return Err(LabError::Misaligned("forward and adjoint grids differ".into()));
    }
    if (forward.dt - adjoint.dt).abs() > 1e-12 * forward.dt {
        return Err(LabError::Misaligned(format!(
            "time steps differ: {} vs {}",
            forward.dt, adjoint.dt
        )));
    }
    forward.check_uniform()?;
    adjoint.check_uniform()?;
    for (f, a) in forward.states.iter().zip(&adjoint.states) {
        if (f.t - a.t).abs() > 1e-9 * forward.dt {
            return Err(LabError::Misaligned(format!("forward at t = {}, adjoint at t = {}", f.t, a.t)));
        }
    }
    Ok(())
}

/// Order-preserving map over slices on scoped threads.
fn par_map<T: Sync, R: Send>(items: &[T], f: impl Fn(usize, &T) -> R + Sync) -> Vec<R> {
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(items.len().max(1));
    if workers <= 1 {
        return items.iter().enumerate().map(|(k, it)| f(k, it)).collect();
    }
    let chunk = items.len().div_ceil(workers);
    std::thread::scope(|s| {
        let handles: Vec<_> = items
            .chunks(chunk)
            .enumerate()
            .map(|(c, part)| {
                let f = &f;
                s.spawn(move || {
                    part.iter()
                        .enumerate()
                        .map(|(k, it)| f(c * chunk + k, it))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("worker panicked"))
            .collect()
    })
}

/// `(τ_k, χ_k, defect_k)` at every stored time.
type Slice = (ScalarField, VectorField, Option<ScalarField>);

fn law_series(
    law: &ConservationLaw,
    forward: &Trajectory<FieldState>,
    adjoint: &Trajectory<AdjointState>,
    options: &ResidualOptions,
) -> Result<Vec<Slice>> {
    check_aligned(forward, adjoint)?;
    if !options.override_condition && !law.condition.holds(&forward.params) {
        return Err(LabError::LawCondition {
            law: law.name.to_string(),
            requirement: "sigma_e == sigma_m".into(),
        });
    }
    if let TimeRates::Supplied(r) = &options.rates {
        if r.len() != forward.len() {
            return Err(LabError::Misaligned(format!(
                "{} supplied rates for {} states",
                r.len(),
                forward.len()
            )));
        }
    }
    let grid = forward.grid;
    let params = forward.params;
    let order = options.order;
    let e_series: Vec<VectorField> = forward.states.iter().map(|s| s.e.clone()).collect();
    let b_series: Vec<VectorField> = forward.states.iter().map(|s| s.b.clone()).collect();
    let slices = par_map(&forward.states, |k, state| -> Result<Slice> {
        let (e_t, b_t) = match &options.rates {
            TimeRates::Supplied(r) => r[k].clone(),
            TimeRates::Differenced => (
                ddt_second_order(&e_series, forward.dt, k)?,
                ddt_second_order(&b_series, forward.dt, k)?,
            ),
        };
        let derivs = DerivativeBundle::new(state, e_t, b_t, &grid, order)?;
        let charges = gauss_charges(state, &grid, order)?;
        let snap = GridSnapshot {
            state,
            adjoint: &adjoint.states[k],
            derivs: &derivs,
            charges: &charges,
            grid: &grid,
        };
        let (tau, chi) = law.evaluate(&snap, &params)?;
        let defect = if law.has_defect() && !law.condition.holds(&params) {
            let mut f = ScalarField::zeros(grid.dims());
            for n in 0..snap.len() {
                let input = LawInput {
                    jet: snap.jet(n),
                    adj: snap.adjoint_point(n),
                    params,
                };
                f[n] = law.defect(&input).unwrap_or(0.0);
            }
            Some(f)
        } else {
            None
        };
        Ok((tau, chi, defect))
    });
    slices.into_iter().collect()
}

fn invariant_from(taus: &[&ScalarField], times: Vec<f64>, grid: &GridSpec) -> GlobalInvariantSeries {
    let dv = grid.cell_volume();
    GlobalInvariantSeries {
        times,
        values: taus.iter().map(|t| t.sum() * dv).collect(),
        scale: taus.first().map_or(0.0, |t| t.as_slice().iter().map(|v| v.abs()).sum::<f64>() * dv),
    }
}

/// `Σ τ dV` over the box at every stored time.
pub fn global_invariant(
    law: &ConservationLaw,
    forward: &Trajectory<FieldState>,
    adjoint: &Trajectory<AdjointState>,
    options: &ResidualOptions,
) -> Result<GlobalInvariantSeries> {
    let series = law_series(law, forward, adjoint, options)?;
    let taus: Vec<&ScalarField> = series.iter().map(|s| &s.0).collect();
    Ok(invariant_from(&taus, forward.times(), &forward.grid))
}

/// Nodes whose stencil does not straddle the periodic seam.
fn seam_mask(grid: &GridSpec, reach: usize) -> Vec<bool> {
    let [nx, ny, nz] = grid.dims();
    let inside = |i: usize, n: usize| i >= reach && i + reach < n;
    let mut mask = Vec::with_capacity(grid.num_points());
    for i in 0..nx {
        for j in 0..ny {
            for k in 0..nz {
                mask.push(inside(i, nx) && inside(j, ny) && inside(k, nz));
            }
        }
    }
    mask
}

/// `r_k = ddt_centered(τ)_k + div_h(χ_k)` at interior times, with norms.
/// Interior excludes the two end slices, or four when rates are differenced.
/// Coordinate-dependent laws are measured away from the periodic seam.
pub fn conservation_residual(
    law: &ConservationLaw,
    forward: &Trajectory<FieldState>,
    adjoint: &Trajectory<AdjointState>,
    options: &ResidualOptions,
) -> Result<ResidualReport> {
    let series = law_series(law, forward, adjoint, options)?;
    let grid = forward.grid;
    let taus: Vec<ScalarField> = series.iter().map(|s| s.0.clone()).collect();
    let mask = if law.coordinate_dependent {
        seam_mask(&grid, options.order.reach())
    } else {
        vec![true; grid.num_points()]
    };
    let evaluated_points = mask.iter().filter(|m| **m).count();
    if evaluated_points == 0 {
        return Err(LabError::InvalidGrid("grid too small to leave nodes away from the seam".into()));
    }

    // With differenced rates the end states carry one-sided rate stencils;
    // a centered D_t τ next to them mixes two error constants and drops to
    // O(dt), so those times are skipped.
    let edge = match options.rates {
        TimeRates::Differenced => 2,
        TimeRates::Supplied(_) => 1,
    };
    if forward.len() < 2 * edge + 1 {
        return Err(LabError::Misaligned(format!(
            "at least {} time slices are needed with these rates",
            2 * edge + 1
        )));
    }
    let interior: Vec<usize> = (edge..forward.len() - edge).collect();
    let parts = par_map(&interior, |_, &k| -> Result<(ScalarField, ScalarField, ScalarField)> {
        let dtau = ddt_centered(&taus, forward.dt, k)?;
        let dchi = div_h(&series[k].1, &grid, options.order)?;
        Ok((dtau.add(&dchi), dtau, dchi))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    let masked_sq = |f: &ScalarField| -> f64 {
        f.as_slice()
            .iter()
            .zip(&mask)
            .filter(|(_, m)| **m)
            .map(|(v, _)| v * v)
            .sum()
    };
    let count = (evaluated_points * interior.len()) as f64;
    let rms_over = |fields: &mut dyn Iterator<Item = &ScalarField>| -> f64 {
        (fields.map(&masked_sq).sum::<f64>() / count).sqrt()
    };
    let l2 = rms_over(&mut parts.iter().map(|p| &p.0));
    let scale = rms_over(&mut parts.iter().map(|p| &p.1)) + rms_over(&mut parts.iter().map(|p| &p.2));
    let max = parts.iter().fold(0.0f64, |m, p| {
        p.0.as_slice()
            .iter()
            .zip(&mask)
            .filter(|(_, keep)| **keep)
            .fold(m, |m, (v, _)| m.max(v.abs()))
    });

    let defect = if series.iter().all(|s| s.2.is_some()) && series.first().is_some_and(|s| s.2.is_some()) {
        let predicted: Vec<ScalarField> = interior
            .iter()
            .map(|&k| series[k].2.clone().expect("checked"))
            .collect();
        let diffs: Vec<ScalarField> = parts.iter().zip(&predicted).map(|(p, f)| p.0.sub(f)).collect();
        let l2_difference = rms_over(&mut diffs.iter());
        let l2_predicted = rms_over(&mut predicted.iter());
        Some(DefectComparison {
            predicted,
            l2_difference,
            l2_predicted,
            relative_difference: if l2_predicted > 0.0 {
                l2_difference / l2_predicted
            } else {
                l2_difference
            },
        })
    } else {
        None
    };

    let tau_refs: Vec<&ScalarField> = taus.iter().collect();
    let invariant = invariant_from(&tau_refs, forward.times(), &grid);
    let times = interior.iter().map(|&k| forward.states[k].t).collect();
    Ok(ResidualReport {
        law: law.name,
        times,
        residuals: parts.into_iter().map(|p| p.0).collect(),
        l2,
        max,
        scale,
        evaluated_points,
        defect,
        invariant,
    })
}

fn add3(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

fn sub3(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn scale3(s: f64, a: [f64; 3]) -> [f64; 3] {
    [s * a[0], s * a[1], s * a[2]]
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn random_input(rng: &mut ChaCha8Rng, params: MediumParams) -> LawInput {
        let mut jet = JetPoint {
            x: [0.0; 3],
            t: rng.gen_range(0.0..1.0),
            u: [0.0; 8],
            du: [[0.0; 4]; 8],
        };
        for a in 0..3 {
            jet.x[a] = rng.gen_range(0.0..6.0);
        }
        for a in 0..6 {
            jet.u[a] = rng.gen_range(-1.0..1.0);
            for i in 0..4 {
                jet.du[a][i] = rng.gen_range(-1.0..1.0);
            }
        }
        let mut r = || [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
        LawInput {
            jet,
            adj: AdjointPoint {
                v: r(),
                w: r(),
                r_e: 0.0,
                r_m: 0.0,
            },
            params,
        }
    }

    #[test]
    fn only_duality_needs_equal_sigma() {
        for law in catalog() {
            let expected = if law.name == "duality" {
                Applicability::SigmaEqual
            } else {
                Applicability::AnySigma
            };
            assert_eq!(law.condition, expected, "{}", law.name);
        }
        assert_eq!(catalog().len(), 10);
    }

    #[test]
    fn zero_adjoint_gives_zero_law() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for law in catalog() {
            let mut input = random_input(&mut rng, MediumParams::new(0.1, 0.5).unwrap());
            input.adj = AdjointPoint::default();
            assert_eq!(law.tau(&input), 0.0, "{}", law.name);
            assert_eq!(law.chi(&input), [0.0; 3], "{}", law.name);
        }
    }

    #[test]
    fn every_law_matches_generic_builder() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for law in catalog() {
            for _ in 0..30 {
                let input = random_input(&mut rng, MediumParams::new(0.2, 0.7).unwrap());
                let diff = generic_mismatch(&law, &input).expect("generator");
                let worst = diff.iter().fold(0.0f64, |m, d| m.max(d.abs()));
                assert!(worst < 1e-13 * 40.0, "{}: {diff:?}", law.name);
            }
        }
    }

    #[test]
    fn vector_form_matches_plane_lists() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let laws = [law_rotation(0, 1).unwrap(), law_rotation(0, 2).unwrap(), law_rotation(1, 2).unwrap()];
        for _ in 0..50 {
            let input = random_input(&mut rng, MediumParams::vacuum());
            let planes = rotation_planes_from_vector(rotation_density_vector(&input));
            for (law, expected) in laws.iter().zip(planes) {
                assert!((law.tau(&input) - expected).abs() < 1e-13, "{}", law.name);
            }
        }
    }

    #[test]
    fn rotation_density_at_origin_keeps_algebraic_terms() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let mut input = random_input(&mut rng, MediumParams::vacuum());
        input.jet.x = [0.0; 3];
        let (e, b, v, w) = (input.e(), input.b(), input.v(), input.w());
        let expected = w[1] * e[0] - w[0] * e[1] - (v[1] * b[0] - v[0] * b[1]);
        assert!((law_rotation(0, 1).unwrap().tau(&input) - expected).abs() < 1e-15);
    }

    #[test]
    fn dilation_self_pairing_is_energy() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut input = random_input(&mut rng, MediumParams::vacuum());
        input.adj.v = input.b();
        input.adj.w = input.e().map(|x| -x);
        let energy = dot(input.e(), input.e()) + dot(input.b(), input.b());
        assert!((law_dilation().tau(&input) - energy).abs() < 1e-15);
        // duality with V = B, W = E has parallel cross products
        input.adj.w = input.e();
        assert_eq!(law_duality().chi(&input), [0.0; 3]);
    }

    #[test]
    fn exponential_adjoint_reductions() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..20 {
            let sigma = 0.3;
            let mut input = random_input(&mut rng, MediumParams::equal(sigma).unwrap());
            let s = (sigma * input.jet.t).exp();
            input.adj.v = [s, 0.0, 0.0];
            input.adj.w = [s, 0.0, 0.0];
            let (tau, chi) = duality_with_exponential_adjoint(input.e(), input.b(), sigma, input.jet.t);
            assert!((law_duality().tau(&input) - tau).abs() < 1e-14);
            let c = law_duality().chi(&input);
            for a in 0..3 {
                assert!((c[a] - chi[a]).abs() < 1e-14);
            }

            let p = MediumParams::new(0.1, 0.5).unwrap();
            input.params = p;
            input.adj.v = [(p.sigma_m * input.jet.t).exp(), 0.0, 0.0];
            input.adj.w = [(p.sigma_e * input.jet.t).exp(), 0.0, 0.0];
            let (tau, chi) = time_translation_with_exponential_adjoint(&input.jet, &p);
            let law = law_time_translation(TimeForm::Expanded);
            assert!((law.tau(&input) - tau).abs() < 1e-14);
            let c = law.chi(&input);
            for a in 0..3 {
                assert!((c[a] - chi[a]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn static_state_has_zero_compact_time_law() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let mut input = random_input(&mut rng, MediumParams::vacuum());
        for a in 0..6 {
            input.jet.du[a][T_AXIS] = 0.0;
        }
        let law = law_time_translation(TimeForm::Compact);
        assert_eq!(law.tau(&input), 0.0);
        assert_eq!(law.chi(&input), [0.0; 3]);
    }

    #[test]
    fn translation_axes_are_index_substitutions() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let input = random_input(&mut rng, MediumParams::vacuum());
        for axis in 0..3 {
            let law = law_space_translation(axis).unwrap();
            let expected = dot(input.jet.e_d(axis), input.w()) - dot(input.jet.b_d(axis), input.v());
            assert_eq!(law.tau(&input), expected);
        }
        assert!(law_space_translation(3).is_err());
        assert!(law_rotation(1, 0).is_err());
    }

    #[test]
    fn drift_is_relative_to_first_absolute_sum() {
        let s = GlobalInvariantSeries {
            times: vec![0.0, 1.0, 2.0],
            values: vec![2.0, 2.001, 1.998],
            scale: 4.0,
        };
        assert!((s.drift() - 0.0005).abs() < 1e-12);
    }

    #[test]
    fn unknown_law_is_an_error() {
        assert!(matches!(law_by_name("boost"), Err(LabError::UnknownLaw(_))));
        assert_eq!(law_by_name("rotation_yz").unwrap().name, "rotation_yz");
    }
}
