//! Pathwise time integration of the regularized flow in both formulations:
//! the rescaled random PDE for Y(t) = e^{−Σβ_i(t)B_i}X(t), and the direct
//! stochastic form for X(t) itself.
//!
//! One implicit building block handles the singular diffusion in both
//! schemes: a lagged-diffusivity (Picard) solve of
//!     W⁺ = W + dt·div( c(|∇W⁺|) ∇W⁺ ),   c(g) = 1/max(g, λ) + λ,
//! where the mobility c is frozen at the previous sweep and each sweep is a
//! symmetric positive-definite M-matrix system solved by conjugate
//! gradients. The mobility form reproduces ψ̃_λ exactly on both branches
//! (c(|v|)·v = ψ̃_λ(v)), so at the fixed point the step is backward Euler
//! for dW/dt = div ψ̃_λ(∇W); the M-matrix structure gives the discrete
//! maximum principle and hence positivity.
//!
//! Scheme structure per step of size dt, with β frozen at the left endpoint:
//! - rescaled: rotate into the laboratory frame, diffuse implicitly, rotate
//!   back. Iterated, consecutive back/forward rotations merge into a single
//!   rotation by the increment angle, so the production loop evolves the
//!   laboratory state W_k = X(t_k) with one interpolation per step and
//!   materializes Y(t_k) by back-rotation only at stored snapshots.
//! - direct: diffuse implicitly, then apply the noise increment as the
//!   second-order expansion X⁺ = (I + θB + ½θ²B²)X* of the transport
//!   rotation by the increment angle θ = Σ ω_i Δβ_i. The expansion has the
//!   same mean as the Itô correction ½Σ B_i²X dt, degenerates to the
//!   deterministic scheme on the zero path, and its skew-exact B makes the
//!   stochastic contribution to the discrete energy identity cancel to
//!   fourth order in θ.
//!
//! Diagnostics (L² norm, regularized TV, dissipation integral, minimum,
//! energy residual) are always evaluated in the laboratory frame, where the
//! monotonicity/energy/extinction statements live.

use std::io::Write;
use std::sync::Arc;

use crate::grid::{cg_masked, Grid, GridError, GridSpec, ScalarField};
use crate::noise::BrownianPath;
use crate::regularization::{
    mobility, phi_lambda, psi_tilde, RegularizationError, YosidaParams,
};
use crate::transport::{
    b_operator, group_apply_multi, TransportError, TransportFieldSpec, TransportSystem,
};
use thiserror::Error;

const CG_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("invalid solver configuration: {0}")]
    Config(String),
    #[error("path incompatible with solver run: {0}")]
    PathMismatch(String),
    #[error("operation requires the {expected} scheme, config says {got}")]
    SchemeMismatch { expected: Scheme, got: Scheme },
    #[error(
        "lagged-diffusivity iteration did not reach {tol:.1e} within {} sweeps at step {step}; \
         relative-change history tail: {:?}",
        history.len(),
        &history[history.len().saturating_sub(5)..]
    )]
    InnerIteration {
        step: usize,
        tol: f64,
        history: Vec<f64>,
    },
    #[error("inner CG stalled at step {step}: relative residual {residual:.3e}")]
    LinearSolveStall { step: usize, residual: f64 },
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Regularization(#[from] RegularizationError),
    #[error(transparent)]
    Transport(#[from] TransportError),
}

/// Which formulation a solver run integrates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Rescaled,
    Ito,
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Scheme::Rescaled => "rescaled",
            Scheme::Ito => "ito",
        })
    }
}

/// Frame in which a trajectory's states are stored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Frame {
    /// Y(t): the rotating frame of the rescaled equation.
    Rotating,
    /// X(t): the laboratory frame of the original equation.
    Laboratory,
}

/// Full description of one pathwise solve.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct SolverConfig {
    pub lambda: f64,
    pub dt: f64,
    pub t_final: f64,
    pub grid: GridSpec,
    pub transport: TransportSystem,
    pub scheme: Scheme,
    /// relative-change tolerance of the lagged-diffusivity fixed point
    pub inner_tol: f64,
    /// sweep cap for the fixed point
    pub inner_max: usize,
    /// store a state snapshot every this many steps (must divide the step
    /// count so stored times stay uniform)
    pub state_stride: usize,
}

impl SolverConfig {
    pub fn new(
        lambda: f64,
        dt: f64,
        t_final: f64,
        grid: GridSpec,
        transport: TransportSystem,
        scheme: Scheme,
    ) -> SolverConfig {
        SolverConfig {
            lambda,
            dt,
            t_final,
            grid,
            transport,
            scheme,
            inner_tol: 1e-10,
            inner_max: 200,
            state_stride: 1,
        }
    }

    /// Number of time steps T/dt.
    pub fn steps(&self) -> usize {
        (self.t_final / self.dt).round() as usize
    }

    pub fn validate(&self) -> Result<(), SolverError> {
        YosidaParams::new(self.lambda)?;
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(SolverError::Config(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.t_final.is_finite() && self.t_final >= self.dt) {
            return Err(SolverError::Config(format!(
                "horizon must satisfy dt ≤ T, got T={}, dt={}",
                self.t_final, self.dt
            )));
        }
        let ratio = self.t_final / self.dt;
        if (ratio - ratio.round()).abs() > 1e-9 * ratio.max(1.0) || ratio.round() < 1.0 {
            return Err(SolverError::Config(format!(
                "horizon {} is not an integer number of steps {}",
                self.t_final, self.dt
            )));
        }
        if !(self.inner_tol > 0.0 && self.inner_tol <= 1e-8) {
            return Err(SolverError::Config(format!(
                "inner tolerance must lie in (0, 1e−8], got {}",
                self.inner_tol
            )));
        }
        if self.inner_max < 2 {
            return Err(SolverError::Config(format!(
                "inner iteration cap must be ≥ 2, got {}",
                self.inner_max
            )));
        }
        if self.state_stride == 0 || self.steps() % self.state_stride != 0 {
            return Err(SolverError::Config(format!(
                "state stride {} must divide the step count {}",
                self.state_stride,
                self.steps()
            )));
        }
        Ok(())
    }

    fn check_path(&self, path: &BrownianPath) -> Result<(), SolverError> {
        if path.dims() != self.transport.len() {
            return Err(SolverError::PathMismatch(format!(
                "path has {} components, transport system has {}",
                path.dims(),
                self.transport.len()
            )));
        }
        if (path.dt - self.dt).abs() > 1e-12 * self.dt {
            return Err(SolverError::PathMismatch(format!(
                "path step {} differs from solver step {}",
                path.dt, self.dt
            )));
        }
        if path.steps() < self.steps() {
            return Err(SolverError::PathMismatch(format!(
                "path covers {} steps, solve needs {}",
                path.steps(),
                self.steps()
            )));
        }
        Ok(())
    }

    fn check_state(&self, u: &ScalarField) -> Result<(), SolverError> {
        if u.grid.spec != self.grid {
            return Err(SolverError::Config(format!(
                "state lives on grid {:?}, config says {:?}",
                u.grid.spec, self.grid
            )));
        }
        Ok(())
    }
}

/// One pathwise solve: uniform times, per-time diagnostics in the
/// laboratory frame, and state snapshots every `state_stride` steps.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub scheme: Scheme,
    /// frame of the stored states (diagnostics are always laboratory-frame)
    pub frame: Frame,
    pub lambda: f64,
    pub transport: TransportSystem,
    pub times: Vec<f64>,
    pub l2_norm: Vec<f64>,
    pub phi_lambda: Vec<f64>,
    /// cumulative ∫₀^{t_k} ⟨ψ̃_λ(∇X), ∇X⟩ ds (right-endpoint quadrature)
    pub dissipation: Vec<f64>,
    pub min_value: Vec<f64>,
    /// ½|X(t_k)|₂² − ½|X(0)|₂² + dissipation[k]
    pub energy_residual: Vec<f64>,
    /// time indices of the stored states
    pub snapshot_indices: Vec<usize>,
    pub states: Vec<ScalarField>,
    pub warnings: Vec<String>,
}

impl Trajectory {
    fn with_capacity(cfg: &SolverConfig, frame: Frame) -> Trajectory {
        let steps = cfg.steps();
        Trajectory {
            scheme: cfg.scheme,
            frame,
            lambda: cfg.lambda,
            transport: cfg.transport.clone(),
            times: Vec::with_capacity(steps + 1),
            l2_norm: Vec::with_capacity(steps + 1),
            phi_lambda: Vec::with_capacity(steps + 1),
            dissipation: Vec::with_capacity(steps + 1),
            min_value: Vec::with_capacity(steps + 1),
            energy_residual: Vec::with_capacity(steps + 1),
            snapshot_indices: Vec::new(),
            states: Vec::new(),
            warnings: Vec::new(),
        }
    }

    fn record(&mut self, t: f64, x: &ScalarField, dissipation: f64, initial_energy: f64) {
        let l2 = x.l2_norm();
        self.times.push(t);
        self.l2_norm.push(l2);
        self.phi_lambda.push(phi_lambda(x, self.lambda));
        self.dissipation.push(dissipation);
        self.min_value.push(x.min_value());
        self.energy_residual
            .push(0.5 * l2 * l2 - initial_energy + dissipation);
    }

    /// State stored for time index k, if k is a snapshot index.
    pub fn state_at(&self, k: usize) -> Option<&ScalarField> {
        self.snapshot_indices
            .iter()
            .position(|&s| s == k)
            .map(|j| &self.states[j])
    }

    pub fn final_state(&self) -> &ScalarField {
        self.states.last().expect("trajectory stores at least t=0")
    }

    /// First recorded time at which the L² norm drops to `threshold`, by
    /// linear interpolation between bracketing samples; None if it never
    /// does within the horizon.
    pub fn first_time_below(&self, threshold: f64) -> Option<f64> {
        for k in 0..self.times.len() {
            if self.l2_norm[k] <= threshold {
                if k == 0 {
                    return Some(0.0);
                }
                let (a, b) = (self.l2_norm[k - 1], self.l2_norm[k]);
                let frac = if a > b { (a - threshold) / (a - b) } else { 1.0 };
                return Some(self.times[k - 1] + frac * (self.times[k] - self.times[k - 1]));
            }
        }
        None
    }

    /// Diagnostics as CSV: t, l2_norm, phi_lambda, dissipation, min_value,
    /// energy_residual. Floats print in shortest-roundtrip form.
    pub fn diagnostics_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        w.write_all(b"t,l2_norm,phi_lambda,dissipation,min_value,energy_residual\r\n")?;
        for k in 0..self.times.len() {
            write!(
                w,
                "{},{},{},{},{},{}",
                self.times[k],
                self.l2_norm[k],
                self.phi_lambda[k],
                self.dissipation[k],
                self.min_value[k],
                self.energy_residual[k]
            )?;
            w.write_all(b"\r\n")?;
        }
        Ok(())
    }
}

/// h²Σ ψ̃_λ(∇u)·∇u — the dissipation-rate integrand of the energy identity.
fn dissipation_rate(u: &ScalarField, lambda: f64) -> f64 {
    let g = u.grid.gradient(u);
    let h2 = u.grid.h * u.grid.h;
    let mut acc = 0.0;
    for c in 0..g.x.len() {
        let v = [g.x[c], g.y[c]];
        let p = psi_tilde(v, lambda);
        acc += p[0] * v[0] + p[1] * v[1];
    }
    h2 * acc
}

/// Backward-Euler step of dW/dt = div ψ̃_λ(∇W) by lagged diffusivity.
///
/// Returns the new state; `step` only labels errors.
fn implicit_diffusion_step(
    w: &ScalarField,
    lambda: f64,
    dt: f64,
    inner_tol: f64,
    inner_max: usize,
    step: usize,
) -> Result<ScalarField, SolverError> {
    let grid: Arc<Grid> = w.grid.clone();
    let d = grid.padded_dim();
    let len = d * d;
    let inv_h2 = 1.0 / (grid.h * grid.h);
    let mask = grid.mask();

    let mut current = w.clone(); // warm start: previous time level
    let mut c = vec![0.0; len];
    let mut diag = vec![1.0; len];
    let mut history = Vec::new();

    for _sweep in 0..inner_max {
        // freeze the mobility at the current iterate
        let g = grid.gradient(&current);
        for cell in 0..len {
            c[cell] = mobility((g.x[cell] * g.x[cell] + g.y[cell] * g.y[cell]).sqrt(), lambda);
        }
        // Jacobi diagonal of I − dt·div(c∇·)
        for cell in 0..len {
            diag[cell] = if mask[cell] {
                // mask cells never touch the padded edge
                1.0 + dt * inv_h2 * (2.0 * c[cell] + c[cell - 1] + c[cell - d])
            } else {
                1.0
            };
        }
        let mut x = current.values.clone();
        let (_iters, residual) = cg_masked(
            mask,
            |v, out| {
                grid.weighted_div_grad_into(&c, v, out);
                for cell in 0..len {
                    out[cell] = v[cell] - dt * out[cell];
                }
            },
            &w.values,
            &mut x,
            CG_TOL,
            10 * grid.interior_count(),
            Some(&diag),
        );
        if residual > CG_TOL {
            return Err(SolverError::LinearSolveStall { step, residual });
        }

        let mut diff2 = 0.0;
        let mut norm2 = 0.0;
        for cell in 0..len {
            let e = x[cell] - current.values[cell];
            diff2 += e * e;
            norm2 += x[cell] * x[cell];
        }
        current.values = x;
        let change = (diff2 / norm2.max(f64::MIN_POSITIVE)).sqrt();
        history.push(change);
        if change <= inner_tol {
            return Ok(current);
        }
    }
    Err(SolverError::InnerIteration {
        step,
        tol: inner_tol,
        history,
    })
}

/// One semi-implicit step of the rescaled equation, literally as specified:
/// rotate Y into the laboratory frame with the angles β(t), apply the
/// implicit singular-diffusion step, rotate back.
///
/// `t` must lie on the path's time grid; β is frozen at this left endpoint
/// for the whole step.
pub fn step_rescaled(
    y: &ScalarField,
    t: f64,
    dt: f64,
    path: &BrownianPath,
    cfg: &SolverConfig,
) -> Result<ScalarField, SolverError> {
    cfg.check_state(y)?;
    if path.dims() != cfg.transport.len() {
        return Err(SolverError::PathMismatch(format!(
            "path has {} components, transport system has {}",
            path.dims(),
            cfg.transport.len()
        )));
    }
    let k = (t / path.dt).round();
    if (t - k * path.dt).abs() > 1e-9 * t.abs().max(1.0) || k < 0.0 || k as usize > path.steps() {
        return Err(SolverError::PathMismatch(format!(
            "time {t} is not on the path grid (step {})",
            path.dt
        )));
    }
    let beta = path.at(k as usize);
    let w = group_apply_multi(y, &cfg.transport, &beta)?;
    let w_plus = implicit_diffusion_step(&w, cfg.lambda, dt, cfg.inner_tol, cfg.inner_max, k as usize)?;
    let neg: Vec<f64> = beta.iter().map(|b| -b).collect();
    Ok(group_apply_multi(&w_plus, &cfg.transport, &neg)?)
}

fn rotation_cfl_warning(warnings: &mut Vec<String>, theta: f64, grid: &Grid, step: usize) {
    if warnings.is_empty() && theta.abs() * grid.spec.radius / grid.h > 1.0 {
        warnings.push(format!(
            "transport increment at step {step} moves boundary cells {:.2} cell widths in one \
             step; increments this large degrade the one-step transport treatment — reduce dt \
             or the angular velocities",
            theta.abs() * grid.spec.radius / grid.h
        ));
    }
}

/// Integrate the rescaled equation from Y(0) = x0 along the given path.
///
/// Equivalent to iterating [`step_rescaled`], with consecutive back/forward
/// rotations merged: the loop carries the laboratory state W_k = X(t_k)
/// (one increment rotation per step) and back-rotates to Y(t_k) at snapshot
/// times. Diagnostics are evaluated on W_k directly.
pub fn solve_rescaled(
    x0: &ScalarField,
    path: &BrownianPath,
    cfg: &SolverConfig,
) -> Result<Trajectory, SolverError> {
    cfg.validate()?;
    if cfg.scheme != Scheme::Rescaled {
        return Err(SolverError::SchemeMismatch {
            expected: Scheme::Rescaled,
            got: cfg.scheme,
        });
    }
    cfg.check_state(x0)?;
    cfg.check_path(path)?;

    let steps = cfg.steps();
    let mut traj = Trajectory::with_capacity(cfg, Frame::Rotating);
    let initial_energy = {
        let l2 = x0.l2_norm();
        0.5 * l2 * l2
    };
    let mut w = x0.clone(); // laboratory frame: W_k = X(t_k); β(0) = 0 ⇒ W_0 = Y_0 = x0
    let mut dissipation = 0.0;
    traj.record(0.0, &w, dissipation, initial_energy);
    traj.snapshot_indices.push(0);
    traj.states.push(x0.clone());

    for k in 0..steps {
        let w_star = implicit_diffusion_step(&w, cfg.lambda, cfg.dt, cfg.inner_tol, cfg.inner_max, k)?;
        dissipation += cfg.dt * dissipation_rate(&w_star, cfg.lambda);
        let delta: Vec<f64> = (0..path.dims()).map(|i| path.increment(i, k)).collect();
        rotation_cfl_warning(
            &mut traj.warnings,
            cfg.transport.total_angle(&delta)?,
            &w.grid,
            k,
        );
        w = group_apply_multi(&w_star, &cfg.transport, &delta)?;
        traj.record((k + 1) as f64 * cfg.dt, &w, dissipation, initial_energy);
        if (k + 1) % cfg.state_stride == 0 {
            let neg: Vec<f64> = path.at(k + 1).iter().map(|b| -b).collect();
            let y = group_apply_multi(&w, &cfg.transport, &neg)?;
            traj.snapshot_indices.push(k + 1);
            traj.states.push(y);
        }
    }
    Ok(traj)
}

/// Map a rotating-frame trajectory to the laboratory frame:
/// X(t_k) = e^{Σβ_i(t_k)B_i} Y(t_k) at every stored snapshot.
///
/// Norm-like diagnostics (l2_norm, phi_lambda, min_value) are recomputed on
/// the transformed states; the dissipation integral and energy residual are
/// carried over from the source run (they are already laboratory-frame
/// quantities and cannot be re-derived from snapshots alone).
pub fn transform_to_x(traj: &Trajectory, path: &BrownianPath) -> Result<Trajectory, SolverError> {
    if traj.frame != Frame::Rotating {
        return Err(SolverError::SchemeMismatch {
            expected: Scheme::Rescaled,
            got: traj.scheme,
        });
    }
    if path.dims() != traj.transport.len() {
        return Err(SolverError::PathMismatch(format!(
            "path has {} components, transport system has {}",
            path.dims(),
            traj.transport.len()
        )));
    }
    let mut out = Trajectory {
        scheme: traj.scheme,
        frame: Frame::Laboratory,
        lambda: traj.lambda,
        transport: traj.transport.clone(),
        times: Vec::new(),
        l2_norm: Vec::new(),
        phi_lambda: Vec::new(),
        dissipation: Vec::new(),
        min_value: Vec::new(),
        energy_residual: Vec::new(),
        snapshot_indices: Vec::new(),
        states: Vec::new(),
        warnings: traj.warnings.clone(),
    };
    for (j, &k) in traj.snapshot_indices.iter().enumerate() {
        let t = traj.times[k];
        let idx = (t / path.dt).round();
        if (t - idx * path.dt).abs() > 1e-9 * t.max(1.0) || idx as usize > path.steps() {
            return Err(SolverError::PathMismatch(format!(
                "snapshot time {t} is not on the path grid (step {})",
                path.dt
            )));
        }
        let x = group_apply_multi(&traj.states[j], &traj.transport, &path.at(idx as usize))?;
        let l2 = x.l2_norm();
        out.times.push(t);
        out.l2_norm.push(l2);
        out.phi_lambda.push(phi_lambda(&x, traj.lambda));
        out.dissipation.push(traj.dissipation[k]);
        out.min_value.push(x.min_value());
        out.energy_residual.push(traj.energy_residual[k]);
        out.snapshot_indices.push(j);
        out.states.push(x);
    }
    Ok(out)
}

/// Integrate the direct stochastic form: implicit singular diffusion, then
/// the explicit transport increment (I + θB + ½θ²B²) with
/// θ_k = Σ ω_i Δβ_i(t_k).
pub fn solve_ito(
    x0: &ScalarField,
    path: &BrownianPath,
    cfg: &SolverConfig,
) -> Result<Trajectory, SolverError> {
    cfg.validate()?;
    if cfg.scheme != Scheme::Ito {
        return Err(SolverError::SchemeMismatch {
            expected: Scheme::Ito,
            got: cfg.scheme,
        });
    }
    cfg.check_state(x0)?;
    cfg.check_path(path)?;

    let steps = cfg.steps();
    let unit = TransportFieldSpec::rotation(1.0, "unit");
    let mut traj = Trajectory::with_capacity(cfg, Frame::Laboratory);
    let initial_energy = {
        let l2 = x0.l2_norm();
        0.5 * l2 * l2
    };
    let mut x = x0.clone();
    let mut dissipation = 0.0;
    traj.record(0.0, &x, dissipation, initial_energy);
    traj.snapshot_indices.push(0);
    traj.states.push(x0.clone());

    for k in 0..steps {
        let x_star = implicit_diffusion_step(&x, cfg.lambda, cfg.dt, cfg.inner_tol, cfg.inner_max, k)?;
        dissipation += cfg.dt * dissipation_rate(&x_star, cfg.lambda);
        let mut theta = 0.0;
        for (i, field) in cfg.transport.fields().iter().enumerate() {
            theta += field.omega() * path.increment(i, k);
        }
        rotation_cfl_warning(&mut traj.warnings, theta, &x.grid, k);
        x = if theta == 0.0 {
            x_star
        } else {
            let b1 = b_operator(&x_star, &unit);
            let b2 = b_operator(&b1, &unit);
            x_star.axpy(theta, &b1).axpy(0.5 * theta * theta, &b2)
        };
        traj.record((k + 1) as f64 * cfg.dt, &x, dissipation, initial_energy);
        if (k + 1) % cfg.state_stride == 0 {
            traj.snapshot_indices.push(k + 1);
            traj.states.push(x.clone());
        }
    }
    Ok(traj)
}

/// Result of a regularization sweep on one fixed path: the laboratory-frame
/// trajectory per λ and all pairwise sup-over-time L² gaps.
#[derive(Debug)]
pub struct LambdaSweep {
    pub lambdas: Vec<f64>,
    /// laboratory-frame trajectories, same order as `lambdas`
    pub trajectories: Vec<Trajectory>,
    /// gaps[i][j] = max over shared snapshot times of |X_i(t) − X_j(t)|₂
    pub gaps: Vec<Vec<f64>>,
}

/// Solve once per λ on the same path, grid and scheme, and report pairwise
/// sup-t L² distances between the laboratory-frame states — a discrete
/// Cauchy-in-λ table.
pub fn lambda_sweep(
    x0: &ScalarField,
    path: &BrownianPath,
    cfg: &SolverConfig,
    lambdas: &[f64],
) -> Result<LambdaSweep, SolverError> {
    if lambdas.is_empty() {
        return Err(SolverError::Config("empty λ list".into()));
    }
    for pair in lambdas.windows(2) {
        if pair[1] >= pair[0] {
            return Err(SolverError::Config(format!(
                "λ list must be strictly decreasing, got {lambdas:?}"
            )));
        }
    }
    let mut trajectories = Vec::with_capacity(lambdas.len());
    for &lambda in lambdas {
        YosidaParams::new(lambda)?;
        let mut cfg_l = cfg.clone();
        cfg_l.lambda = lambda;
        let traj = match cfg.scheme {
            Scheme::Rescaled => transform_to_x(&solve_rescaled(x0, path, &cfg_l)?, path)?,
            Scheme::Ito => solve_ito(x0, path, &cfg_l)?,
        };
        trajectories.push(traj);
    }
    let m = trajectories.len();
    let mut gaps = vec![vec![0.0; m]; m];
    for i in 0..m {
        for j in (i + 1)..m {
            let (a, b) = (&trajectories[i], &trajectories[j]);
            debug_assert_eq!(a.states.len(), b.states.len());
            let mut worst: f64 = 0.0;
            for (sa, sb) in a.states.iter().zip(&b.states) {
                worst = worst.max(sa.axpy(-1.0, sb).l2_norm());
            }
            gaps[i][j] = worst;
            gaps[j][i] = worst;
        }
    }
    Ok(LambdaSweep {
        lambdas: lambdas.to_vec(),
        trajectories,
        gaps,
    })
}
