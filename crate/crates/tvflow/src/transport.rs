//! Rigid-rotation transport fields b(ξ) = Λξ with Λ = ω·[[0,1],[−1,0]], the
//! first-order operators B = b·∇ in skew-adjoint form, and the groups
//! (e^{sB}f)(ξ) = f(e^{sΛ}ξ) realized semi-Lagrangially.
//!
//! Everything downstream needs two exact discrete facts, both arranged here
//! by construction rather than by approximation:
//! - ⟨Bu, v⟩ = −⟨u, Bv⟩ to machine precision (B is the symmetrization
//!   ½[b·∇u + div(b u)] built from the adjoint gradient/divergence pair), so
//!   the noise term contributes exactly zero to discrete energy balances;
//! - group application preserves non-negativity (bilinear interpolation has
//!   non-negative weights) and, being a pure rotation, is an exact isometry
//!   of the plane before interpolation.
//!
//! Flows are closed-form rotations e^{sΛ} = [[cos ωs, sin ωs],
//! [−sin ωs, cos ωs]]; several rotations compose by adding angles, so a
//! multi-factor group application costs one interpolation, not N.

use std::sync::Arc;

use crate::grid::{Grid, GridError, ScalarField, VectorField2};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TransportError {
    #[error("transport matrix must be exactly skew-symmetric, got {0:?}")]
    NotSkewSymmetric([[f64; 2]; 2]),
    #[error("transport system has {expected} fields but {got} parameters were supplied")]
    DimensionMismatch { expected: usize, got: usize },
}

/// One tangent field b(ξ) = Λξ with Λ exactly skew-symmetric, i.e.
/// Λ = ω·[[0,1],[−1,0]]. Skew-symmetry makes b tangent to every circle
/// centered at the origin (⟨Λξ, ξ⟩ = 0), so the flow maps the disc onto
/// itself.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TransportFieldSpec {
    matrix: [[f64; 2]; 2],
    pub label: String,
}

impl TransportFieldSpec {
    /// The rotation field with angular velocity ω: Λ = ω·[[0,1],[−1,0]].
    pub fn rotation(omega: f64, label: impl Into<String>) -> TransportFieldSpec {
        TransportFieldSpec {
            matrix: [[0.0, omega], [-omega, 0.0]],
            label: label.into(),
        }
    }

    /// Validates exact skew-symmetry (zero diagonal, m01 = −m10).
    pub fn new(matrix: [[f64; 2]; 2], label: impl Into<String>) -> Result<Self, TransportError> {
        let finite = matrix.iter().flatten().all(|v| v.is_finite());
        if !finite || matrix[0][0] != 0.0 || matrix[1][1] != 0.0 || matrix[0][1] != -matrix[1][0] {
            return Err(TransportError::NotSkewSymmetric(matrix));
        }
        Ok(TransportFieldSpec {
            matrix,
            label: label.into(),
        })
    }

    /// Angular velocity ω with Λ = ω·[[0,1],[−1,0]].
    #[inline]
    pub fn omega(&self) -> f64 {
        self.matrix[0][1]
    }

    /// b(ξ) = Λξ.
    #[inline]
    pub fn velocity(&self, xi: [f64; 2]) -> [f64; 2] {
        let m = &self.matrix;
        [
            m[0][0] * xi[0] + m[0][1] * xi[1],
            m[1][0] * xi[0] + m[1][1] * xi[1],
        ]
    }
}

/// Ordered list of commuting transport fields. All 2×2 skew matrices are
/// multiples of the same generator, so commutation is automatic; it is
/// nevertheless asserted at construction as a guard against future
/// generalizations.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TransportSystem {
    fields: Vec<TransportFieldSpec>,
}

impl TransportSystem {
    pub fn new(fields: Vec<TransportFieldSpec>) -> TransportSystem {
        for a in &fields {
            for b in &fields {
                let (ma, mb) = (&a.matrix, &b.matrix);
                for r in 0..2 {
                    for c in 0..2 {
                        let ab = ma[r][0] * mb[0][c] + ma[r][1] * mb[1][c];
                        let ba = mb[r][0] * ma[0][c] + mb[r][1] * ma[1][c];
                        debug_assert_eq!(ab, ba, "non-commuting transport pair");
                    }
                }
            }
        }
        TransportSystem { fields }
    }

    /// One rotation field per angular velocity, labelled b1, b2, …
    pub fn from_omegas(omegas: &[f64]) -> TransportSystem {
        TransportSystem::new(
            omegas
                .iter()
                .enumerate()
                .map(|(k, &w)| TransportFieldSpec::rotation(w, format!("b{}", k + 1)))
                .collect(),
        )
    }

    pub fn fields(&self) -> &[TransportFieldSpec] {
        &self.fields
    }

    pub fn len(&self) -> usize {
        self.fields.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fields.is_empty()
    }

    /// Net rotation angle Σ ω_i·s_i of the composed map e^{s₁Λ₁}⋯e^{s_NΛ_N}.
    pub fn total_angle(&self, s: &[f64]) -> Result<f64, TransportError> {
        if s.len() != self.fields.len() {
            return Err(TransportError::DimensionMismatch {
                expected: self.fields.len(),
                got: s.len(),
            });
        }
        Ok(self
            .fields
            .iter()
            .zip(s)
            .map(|(f, &si)| f.omega() * si)
            .sum())
    }
}

/// The flow ζ(s, ξ) = e^{sΛ}ξ of dζ/ds = b(ζ), in closed form:
/// e^{sΛ} = [[cos ωs, sin ωs], [−sin ωs, cos ωs]]. An exact isometry.
#[inline]
pub fn flow_map(spec: &TransportFieldSpec, s: f64, xi: [f64; 2]) -> [f64; 2] {
    rotate_point(spec.omega() * s, xi)
}

#[inline]
fn rotate_point(theta: f64, xi: [f64; 2]) -> [f64; 2] {
    let (sin, cos) = theta.sin_cos();
    [
        cos * xi[0] + sin * xi[1],
        -sin * xi[0] + cos * xi[1],
    ]
}

/// Bilinear sample of the zero-extended field at `map(cell center)`, for
/// every mask cell. The four interpolation weights are non-negative and sum
/// to one, so non-negative fields stay non-negative and the maximum
/// principle holds cellwise.
fn semi_lagrangian(u: &ScalarField, map: impl Fn([f64; 2]) -> [f64; 2]) -> ScalarField {
    let grid = &u.grid;
    let n = grid.n() as isize;
    let d = grid.padded_dim();
    let radius = grid.spec.radius;
    let inv_h = 1.0 / grid.h;
    let mut out = ScalarField::zeros(grid);
    let read = |ii: isize, jj: isize| -> f64 {
        // the ghost ring extends direct reads one cell past the grid
        if ii < -1 || jj < -1 || ii > n || jj > n {
            0.0
        } else {
            u.values[(jj + 1) as usize * d + (ii + 1) as usize]
        }
    };
    for j in 0..grid.n() {
        for i in 0..grid.n() {
            if !grid.is_interior(i, j) {
                continue;
            }
            let p = map([grid.center(i), grid.center(j)]);
            // continuous cell-index coordinates: center of cell k sits at k
            let a = (p[0] + radius) * inv_h - 0.5;
            let b = (p[1] + radius) * inv_h - 0.5;
            let (fa, fb) = (a.floor(), b.floor());
            let (tx, ty) = (a - fa, b - fb);
            let (ia, jb) = (fa as isize, fb as isize);
            out.values[grid.idx(i, j)] = (1.0 - tx) * (1.0 - ty) * read(ia, jb)
                + tx * (1.0 - ty) * read(ia + 1, jb)
                + (1.0 - tx) * ty * read(ia, jb + 1)
                + tx * ty * read(ia + 1, jb + 1);
        }
    }
    out
}

/// Semi-Lagrangian rotation by the net angle θ; the identity is returned
/// exactly (no interpolation) when θ = 0.
fn rotate_field(u: &ScalarField, theta: f64) -> ScalarField {
    if theta == 0.0 {
        return u.clone();
    }
    semi_lagrangian(u, |xi| rotate_point(theta, xi))
}

/// (e^{sB}u)(ξ) = u(e^{sΛ}ξ): one bilinear semi-Lagrangian pass.
pub fn group_apply(u: &ScalarField, spec: &TransportFieldSpec, s: f64) -> ScalarField {
    rotate_field(u, spec.omega() * s)
}

/// e^{s₁B₁}⋯e^{s_NB_N}u through the composed map: the rotations commute and
/// compose by angle addition, so this costs a single interpolation pass
/// regardless of N (no compounding of interpolation diffusion).
pub fn group_apply_multi(
    u: &ScalarField,
    sys: &TransportSystem,
    s: &[f64],
) -> Result<ScalarField, TransportError> {
    Ok(rotate_field(u, sys.total_angle(s)?))
}

/// Skew-adjoint discretization of B = b·∇:
///   Bu := ½[b·∇u + div(b u)].
///
/// Consistent because div b = 0, and exactly antisymmetric on masked fields
/// because gradient/divergence are exact negative adjoints:
/// ⟨Bu, v⟩ = ½[⟨∇u, b v⟩ − ⟨b u, ∇v⟩] = −⟨u, Bv⟩. In particular
/// ⟨Bu, u⟩ = 0 to machine precision.
pub fn b_operator(u: &ScalarField, spec: &TransportFieldSpec) -> ScalarField {
    let grid = u.grid.clone();
    let g = grid.gradient(u);
    // flux half: p = b·u cellwise on the mask, then its divergence
    let mut p = VectorField2::zeros(&grid);
    let n = grid.n();
    for j in 0..n {
        for i in 0..n {
            if !grid.is_interior(i, j) {
                continue;
            }
            let c = grid.idx(i, j);
            let b = spec.velocity([grid.center(i), grid.center(j)]);
            p.x[c] = b[0] * u.values[c];
            p.y[c] = b[1] * u.values[c];
        }
    }
    let mut out = grid.divergence(&p);
    // advective half: b·∇u at mask cells
    for j in 0..n {
        for i in 0..n {
            if !grid.is_interior(i, j) {
                continue;
            }
            let c = grid.idx(i, j);
            let b = spec.velocity([grid.center(i), grid.center(j)]);
            out.values[c] = 0.5 * (out.values[c] + b[0] * g.x[c] + b[1] * g.y[c]);
        }
    }
    out
}

/// B²u = B(Bu). Antisymmetry of B gives ⟨u, B²u⟩ = −|Bu|₂² exactly, the
/// discrete form of B² = −B*B.
pub fn b_squared(u: &ScalarField, spec: &TransportFieldSpec) -> ScalarField {
    b_operator(&b_operator(u, spec), spec)
}

/// Measure how well the resolvent (I − ε·div∘grad)⁻¹ commutes with the
/// group e^{sB}: returns the worst relative defect
/// |J_ε(e^{sB}u) − e^{sB}(J_ε u)|₂ / |u|₂ over the trial fields. For
/// rotations on the disc the continuum commutator vanishes, so the defect
/// is pure discretization error and shrinks roughly linearly in h.
pub fn check_commutation_with_laplacian(
    spec: &TransportFieldSpec,
    eps: f64,
    s: f64,
    trials: &[ScalarField],
) -> Result<f64, GridError> {
    let mut worst: f64 = 0.0;
    for u in trials {
        let grid: &Arc<Grid> = &u.grid;
        let route_a = grid.resolvent(&group_apply(u, spec, s), eps)?;
        let route_b = group_apply(&grid.resolvent(u, eps)?, spec, s);
        let defect = route_a.axpy(-1.0, &route_b).l2_norm() / u.l2_norm();
        worst = worst.max(defect);
    }
    Ok(worst)
}
