//! Uniform Cartesian grid on the disc O = {ξ ∈ ℝ²: |ξ| < R} with Dirichlet
//! boundary handled by extension with zero, plus the discrete differential
//! operators shared by every other module.
//!
//! The one non-negotiable design constraint: `divergence` is the *exact*
//! negative adjoint of `gradient` under the h²-weighted inner product, so
//! summation by parts ⟨div p, u⟩ = −⟨p, ∇u⟩ holds to machine precision.
//! Every monotonicity and energy argument downstream rests on that identity
//! rather than on truncation-error estimates.
//!
//! Conventions:
//! - the disc is inscribed in [−R, R]², subdivided into n×n cells of size
//!   h = 2R/n; cell (i, j) has center ξ = (−R + (i+½)h, −R + (j+½)h);
//! - storage is padded by a one-cell ghost ring: flat arrays have dimension
//!   (n+2)², and `idx(i, j)` maps cell coordinates into the padded layout.
//!   The ring carries the west/south boundary fluxes of mask cells that
//!   touch the array edge (the disc is inscribed, so such cells exist);
//!   without it those faces would silently lose their Dirichlet jump;
//! - scalar fields vanish off the interior mask (centers with |ξ| < R);
//! - `gradient` takes forward differences of the zero extension, so its
//!   output also lives on the one-cell west/south halo around the mask —
//!   those halo entries carry the boundary jump to zero (the discrete trace
//!   contribution) and are summed by the TV functionals.

use std::sync::Arc;

use thiserror::Error;

/// Errors from grid construction and iterative solves on the grid.
#[derive(Debug, Error)]
pub enum GridError {
    #[error("invalid grid parameter: {0}")]
    InvalidParameter(String),
    #[error("CG iteration limit {iterations} exceeded, relative residual {residual:.3e}")]
    IterationLimit { iterations: usize, residual: f64 },
}

/// Construction parameters: the square [−R, R]² subdivided into n×n cells.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct GridSpec {
    pub radius: f64,
    pub n: usize,
}

impl GridSpec {
    pub fn cell_size(&self) -> f64 {
        2.0 * self.radius / self.n as f64
    }
}

/// The built grid: spec, cell size and interior mask.
///
/// Shared behind `Arc` by every field living on it; all operators are pure
/// functions, so one `Grid` may be used concurrently by many path solvers.
#[derive(Debug)]
pub struct Grid {
    pub spec: GridSpec,
    pub h: f64,
    /// padded array dimension, n + 2
    dim: usize,
    /// mask over the padded layout; the ghost ring is always false
    mask: Vec<bool>,
    interior_count: usize,
}

impl Grid {
    /// Build the disc mask for radius `radius` at resolution `n`.
    ///
    /// Rejects `n < 8`, odd `n` and non-positive or non-finite `radius`.
    pub fn build(radius: f64, n: usize) -> Result<Arc<Grid>, GridError> {
        if !(radius.is_finite() && radius > 0.0) {
            return Err(GridError::InvalidParameter(format!(
                "radius must be positive and finite, got {radius}"
            )));
        }
        if n < 8 || n % 2 != 0 {
            return Err(GridError::InvalidParameter(format!(
                "resolution must be even and ≥ 8, got {n}"
            )));
        }
        let spec = GridSpec { radius, n };
        let h = spec.cell_size();
        let dim = n + 2;
        let mut mask = vec![false; dim * dim];
        let mut interior_count = 0;
        for j in 0..n {
            for i in 0..n {
                let x = -radius + (i as f64 + 0.5) * h;
                let y = -radius + (j as f64 + 0.5) * h;
                if x * x + y * y < radius * radius {
                    mask[(j + 1) * dim + (i + 1)] = true;
                    interior_count += 1;
                }
            }
        }
        debug_assert!(interior_count > 0);
        Ok(Arc::new(Grid {
            spec,
            h,
            dim,
            mask,
            interior_count,
        }))
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.spec.n
    }

    /// Padded flat-array dimension; `values.len() == padded_dim()²`.
    #[inline]
    pub fn padded_dim(&self) -> usize {
        self.dim
    }

    /// Flat index of cell (i, j), 0 ≤ i, j < n, in the padded layout.
    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < self.spec.n && j < self.spec.n);
        (j + 1) * self.dim + (i + 1)
    }

    /// Cell-center coordinate along one axis.
    #[inline]
    pub fn center(&self, i: usize) -> f64 {
        -self.spec.radius + (i as f64 + 0.5) * self.h
    }

    #[inline]
    pub fn is_interior(&self, i: usize, j: usize) -> bool {
        self.mask[(j + 1) * self.dim + (i + 1)]
    }

    /// Mask over the padded layout (ghost ring entries are false).
    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn interior_count(&self) -> usize {
        self.interior_count
    }

    /// h²-weighted area of the mask (≈ πR² as n grows).
    pub fn mask_area(&self) -> f64 {
        self.h * self.h * self.interior_count as f64
    }

    /// Number of cells (padded layout) on which a forward-difference
    /// gradient of a masked field can be nonzero: the mask plus its one-cell
    /// west/south halo. This is the support the TV functionals sum over and
    /// the sharp cell count for the Moreau gap bound.
    pub fn tv_support_count(&self) -> usize {
        let d = self.dim;
        let mut count = 0;
        for j in 0..d {
            for i in 0..d {
                let c = j * d + i;
                let east = i + 1 < d && self.mask[c + 1];
                let north = j + 1 < d && self.mask[c + d];
                if self.mask[c] || east || north {
                    count += 1;
                }
            }
        }
        count
    }

    /// Forward-difference gradient of the zero-extended field.
    ///
    /// Component x at cell c is (u(east of c) − u(c))/h with u read as 0 off
    /// the mask; likewise y northward. The output is populated over the full
    /// padded layout, so the west/south halo entries carry the boundary
    /// jumps to zero.
    pub fn gradient(&self, u: &ScalarField) -> VectorField2 {
        self.check_same_grid(&u.grid);
        let d = self.dim;
        let inv_h = 1.0 / self.h;
        let mut x = vec![0.0; d * d];
        let mut y = vec![0.0; d * d];
        for j in 0..d {
            for i in 0..d {
                let c = j * d + i;
                let uc = u.values[c];
                let ue = if i + 1 < d { u.values[c + 1] } else { 0.0 };
                let un = if j + 1 < d { u.values[c + d] } else { 0.0 };
                x[c] = (ue - uc) * inv_h;
                y[c] = (un - uc) * inv_h;
            }
        }
        VectorField2 {
            grid: u.grid.clone(),
            x,
            y,
        }
    }

    /// Exact negative adjoint of `gradient`: ⟨div p, u⟩ = −⟨p, ∇u⟩ for every
    /// masked u and arbitrary p. Concretely, backward differences of p
    /// restricted to the mask.
    pub fn divergence(&self, p: &VectorField2) -> ScalarField {
        self.check_same_grid(&p.grid);
        let d = self.dim;
        let inv_h = 1.0 / self.h;
        let mut values = vec![0.0; d * d];
        for j in 1..d - 1 {
            for i in 1..d - 1 {
                let c = j * d + i;
                if !self.mask[c] {
                    continue;
                }
                // mask cells never touch the padded edge, so c−1, c−d exist
                values[c] = (p.x[c] - p.x[c - 1] + p.y[c] - p.y[c - d]) * inv_h;
            }
        }
        ScalarField {
            grid: p.grid.clone(),
            values,
        }
    }

    /// Discrete Dirichlet Laplacian: exactly `divergence(gradient(u))`
    /// (5-point stencil with zero extension), symmetric negative
    /// semi-definite by construction.
    pub fn laplacian(&self, u: &ScalarField) -> ScalarField {
        self.divergence(&self.gradient(u))
    }

    /// div(c ∇u) for a per-cell scalar coefficient c ≥ 0 — the fused stencil
    /// behind the implicit TV solves. Identical to
    /// `divergence(c ⊙ gradient(u))`; fused to avoid intermediate fields in
    /// inner CG loops.
    pub fn weighted_div_grad(&self, c: &[f64], u: &ScalarField) -> ScalarField {
        let mut out = ScalarField::zeros(&u.grid);
        self.weighted_div_grad_into(c, &u.values, &mut out.values);
        out
    }

    /// Raw-slice version of [`Grid::weighted_div_grad`] for solver hot loops.
    /// `u` is read as a masked field (entries off the mask must be 0).
    pub(crate) fn weighted_div_grad_into(&self, c: &[f64], u: &[f64], out: &mut [f64]) {
        let d = self.dim;
        debug_assert_eq!(c.len(), d * d);
        debug_assert_eq!(u.len(), d * d);
        debug_assert_eq!(out.len(), d * d);
        let inv_h2 = 1.0 / (self.h * self.h);
        for j in 0..d {
            for i in 0..d {
                let cell = j * d + i;
                if !self.mask[cell] {
                    out[cell] = 0.0;
                    continue;
                }
                let uc = u[cell];
                // mask cells never touch the padded edge
                let ue = u[cell + 1];
                let uw = u[cell - 1];
                let un = u[cell + d];
                let us = u[cell - d];
                // Flux form: c is the coefficient on the east/north face of
                // its own cell, matching c ⊙ (forward-difference gradient).
                let ce = c[cell];
                let cw = c[cell - 1];
                let cn = c[cell];
                let cs = c[cell - d];
                out[cell] =
                    (ce * (ue - uc) - cw * (uc - uw) + cn * (un - uc) - cs * (uc - us)) * inv_h2;
            }
        }
    }

    /// Resolvent J_ε = (I + εA)⁻¹ with A = −laplacian, by conjugate
    /// gradients to relative residual ≤ 1e−10 (cap 10·interior cells).
    ///
    /// Non-expansive: |J_ε u|₂ ≤ |u|₂.
    pub fn resolvent(&self, u: &ScalarField, eps: f64) -> Result<ScalarField, GridError> {
        if !(eps.is_finite() && eps > 0.0) {
            return Err(GridError::InvalidParameter(format!(
                "resolvent parameter must be positive, got {eps}"
            )));
        }
        self.check_same_grid(&u.grid);
        let len = self.dim * self.dim;
        let ones = vec![1.0; len];
        let mut lap = vec![0.0; len];
        let mut x = u.values.clone();
        let (iterations, residual) = cg_masked(
            &self.mask,
            |v, out| {
                self.weighted_div_grad_into(&ones, v, &mut lap);
                for c in 0..len {
                    out[c] = v[c] - eps * lap[c];
                }
            },
            &u.values,
            &mut x,
            1e-10,
            10 * self.interior_count,
            None,
        );
        let sol = ScalarField {
            grid: u.grid.clone(),
            values: x,
        };
        if residual > 1e-10 {
            return Err(GridError::IterationLimit {
                iterations,
                residual,
            });
        }
        Ok(sol)
    }

    fn check_same_grid(&self, other: &Arc<Grid>) {
        assert!(
            std::ptr::eq(self, Arc::as_ptr(other)) || self.spec == other.spec,
            "field belongs to a different grid ({:?} vs {:?})",
            other.spec,
            self.spec
        );
    }
}

/// Scalar field on the grid: one value per cell, identically 0 off the mask.
#[derive(Debug, Clone)]
pub struct ScalarField {
    pub grid: Arc<Grid>,
    /// Padded layout of length `padded_dim()²`; index with `grid.idx(i, j)`.
    pub values: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(grid: &Arc<Grid>) -> ScalarField {
        ScalarField {
            grid: grid.clone(),
            values: vec![0.0; grid.dim * grid.dim],
        }
    }

    /// Evaluate `f` at cell centers inside the mask, zero outside.
    pub fn from_fn(grid: &Arc<Grid>, mut f: impl FnMut(f64, f64) -> f64) -> ScalarField {
        let n = grid.n();
        let mut field = ScalarField::zeros(grid);
        for j in 0..n {
            for i in 0..n {
                if grid.is_interior(i, j) {
                    let v = f(grid.center(i), grid.center(j));
                    debug_assert!(v.is_finite());
                    field.values[grid.idx(i, j)] = v;
                }
            }
        }
        field
    }

    /// Zero out any value off the mask (restores the Dirichlet invariant
    /// after raw-buffer manipulation).
    pub fn enforce_mask(&mut self) {
        for (v, &m) in self.values.iter_mut().zip(self.grid.mask()) {
            if !m {
                *v = 0.0;
            }
        }
    }

    /// h²-weighted inner product. Panics if the grids differ — fields from
    /// different grids are a programming error, not a runtime condition.
    pub fn inner(&self, other: &ScalarField) -> f64 {
        assert!(
            self.grid.spec == other.grid.spec,
            "inner product across different grids ({:?} vs {:?})",
            self.grid.spec,
            other.grid.spec
        );
        let h2 = self.grid.h * self.grid.h;
        let mut acc = 0.0;
        for (a, b) in self.values.iter().zip(&other.values) {
            acc += a * b;
        }
        h2 * acc
    }

    pub fn l2_norm(&self) -> f64 {
        self.inner(self).sqrt()
    }

    /// Minimum over all cells (the zero exterior included, so this is ≤ 0
    /// unless the mask covers the grid).
    pub fn min_value(&self) -> f64 {
        self.values.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn max_value(&self) -> f64 {
        self.values
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// self + alpha·other, cellwise.
    pub fn axpy(&self, alpha: f64, other: &ScalarField) -> ScalarField {
        assert!(self.grid.spec == other.grid.spec, "grid mismatch in axpy");
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a + alpha * b)
            .collect();
        ScalarField {
            grid: self.grid.clone(),
            values,
        }
    }

    pub fn scale(&self, alpha: f64) -> ScalarField {
        ScalarField {
            grid: self.grid.clone(),
            values: self.values.iter().map(|v| alpha * v).collect(),
        }
    }
}

/// Two-component cell field (gradients, fluxes). Stored on the padded
/// layout; operators only ever populate the mask plus its west/south halo,
/// where the forward-difference stencil of a masked field can be nonzero.
#[derive(Debug, Clone)]
pub struct VectorField2 {
    pub grid: Arc<Grid>,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl VectorField2 {
    pub fn zeros(grid: &Arc<Grid>) -> VectorField2 {
        VectorField2 {
            grid: grid.clone(),
            x: vec![0.0; grid.dim * grid.dim],
            y: vec![0.0; grid.dim * grid.dim],
        }
    }

    /// h²-weighted inner product of vector fields.
    pub fn inner(&self, other: &VectorField2) -> f64 {
        assert!(
            self.grid.spec == other.grid.spec,
            "inner product across different grids"
        );
        let h2 = self.grid.h * self.grid.h;
        let mut acc = 0.0;
        for c in 0..self.x.len() {
            acc += self.x[c] * other.x[c] + self.y[c] * other.y[c];
        }
        h2 * acc
    }

    pub fn l2_norm(&self) -> f64 {
        self.inner(self).sqrt()
    }
}

/// Conjugate gradients for an SPD operator acting on masked vectors.
///
/// `apply` must map masked vectors to masked vectors. Iterates until the
/// residual drops below `tol_rel`·|b|₂ (ℓ² on raw values; the h² weight
/// cancels) or `max_iter` is hit; returns (iterations, final relative
/// residual). `x` holds the warm start on entry and the solution on exit.
/// Optional `precond_diag` applies Jacobi preconditioning.
pub(crate) fn cg_masked(
    mask: &[bool],
    mut apply: impl FnMut(&[f64], &mut [f64]),
    b: &[f64],
    x: &mut [f64],
    tol_rel: f64,
    max_iter: usize,
    precond_diag: Option<&[f64]>,
) -> (usize, f64) {
    let len = b.len();
    let norm_b = dot(b, b).sqrt();
    if norm_b == 0.0 {
        x.fill(0.0);
        return (0, 0.0);
    }
    let tol_abs = tol_rel * norm_b;

    let mut r = vec![0.0; len];
    let mut z = vec![0.0; len];
    let mut p = vec![0.0; len];
    let mut ap = vec![0.0; len];

    apply(x, &mut ap);
    for c in 0..len {
        r[c] = if mask[c] { b[c] - ap[c] } else { 0.0 };
    }
    let precondition = |r: &[f64], z: &mut [f64]| match precond_diag {
        Some(d) => {
            for c in 0..len {
                z[c] = if mask[c] { r[c] / d[c] } else { 0.0 };
            }
        }
        None => z.copy_from_slice(r),
    };
    precondition(&r, &mut z);
    p.copy_from_slice(&z);
    let mut rz = dot(&r, &z);
    let mut res_norm = dot(&r, &r).sqrt();

    let mut iterations = 0;
    while res_norm > tol_abs && iterations < max_iter {
        apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            break; // loss of positive-definiteness: stop, report residual
        }
        let alpha = rz / pap;
        for c in 0..len {
            x[c] += alpha * p[c];
            r[c] -= alpha * ap[c];
        }
        precondition(&r, &mut z);
        let rz_next = dot(&r, &z);
        let beta = rz_next / rz;
        rz = rz_next;
        for c in 0..len {
            p[c] = z[c] + beta * p[c];
        }
        res_norm = dot(&r, &r).sqrt();
        iterations += 1;
    }
    (iterations, res_norm / norm_b)
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = 0.0;
    for c in 0..a.len() {
        acc += a[c] * b[c];
    }
    acc
}
