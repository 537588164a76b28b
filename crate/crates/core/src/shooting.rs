//! Overdetermined shooting for standing and traveling waves.
//!
//! The unknowns are `c = (T, c_1, ..., c_n)`. Standing waves start from
//! `η̂_k = c_k` (even `k`) and `φ̂_k = c_k` (odd `k`) and are driven to rest at
//! `T/4`; traveling waves start from `η̂_k = c_{2k-1}`, `φ̂_k = i c_{2k}` and
//! must reproduce a one-node shift after `T/M`. The least-squares objective
//! `f = ½‖r‖²` is minimized by Levenberg–Marquardt with variational
//! Jacobians.

use crate::dno::DipoleSolver;
use crate::dynamics::{PhysParams, SurfaceState};
use crate::error::{Error, Result};
use crate::linalg::{least_squares, norm2, Mat};
use crate::num::{fabs, Real};
use crate::spectral::{Fourier, MeshMap, MeshSchedule};
use crate::timestep::{evolve_tangents, evolve_with, state_rate, EvolveOptions, Scheme, Trajectory};

/// Symmetry class of the initial data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Family {
    Standing,
    Traveling,
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Family::Standing => write!(f, "standing"),
            Family::Traveling => write!(f, "traveling"),
        }
    }
}

impl std::str::FromStr for Family {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "standing" => Ok(Family::Standing),
            "traveling" | "travelling" => Ok(Family::Traveling),
            other => Err(Error::Config(format!("unknown family '{other}'"))),
        }
    }
}

/// Unknowns `c_0 = T, c_1..c_n`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector<T> {
    pub c: Vec<T>,
    pub family: Family,
}

impl<T: Real> ParamVector<T> {
    pub fn new(family: Family, c: Vec<T>) -> Self {
        Self { c, family }
    }

    pub fn period(&self) -> T {
        self.c[0]
    }

    /// Number of mode coefficients `n`.
    pub fn modes(&self) -> usize {
        self.c.len().saturating_sub(1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.c.len() < 2 {
            return Err(Error::Config("need a period and at least one mode coefficient".into()));
        }
        if !(self.c[0] > T::zero()) {
            return Err(Error::Config(format!("period {} must be positive", self.c[0])));
        }
        if let Some(i) = self.c.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("coefficient c_{i}")));
        }
        Ok(())
    }

    /// Zero-pads or truncates to `n` mode coefficients.
    pub fn resized(&self, n: usize) -> Self {
        let mut c = self.c.clone();
        c.resize(n + 1, T::zero());
        Self { c, family: self.family }
    }
}

/// Extra residual row pinning `η(a, 0)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AmplitudeConstraint<T> {
    pub position: T,
    /// Target surface height at `position`, in the same convention as `η`.
    pub target: T,
    pub weight: T,
}

/// Everything needed to evaluate residuals and Jacobians.
#[derive(Debug, Clone)]
pub struct ShootingProblem<T: Real> {
    pub family: Family,
    pub params: PhysParams<T>,
    /// Discretization of the shooting horizon (`T/4` or `T/M`).
    pub schedule: MeshSchedule<T>,
    pub scheme: Scheme,
    pub constraint: Option<AmplitudeConstraint<T>>,
    pub solver: DipoleSolver,
}

impl<T: Real> ShootingProblem<T> {
    pub fn new(family: Family, params: PhysParams<T>, schedule: MeshSchedule<T>, scheme: Scheme) -> Self {
        Self { family, params, schedule, scheme, constraint: None, solver: DipoleSolver::Direct }
    }

    pub fn with_constraint(mut self, constraint: AmplitudeConstraint<T>) -> Self {
        self.constraint = Some(constraint);
        self
    }

    /// Grid size of the initial segment.
    pub fn grid(&self) -> usize {
        self.schedule.first().m
    }

    fn check(&self, c: &ParamVector<T>) -> Result<()> {
        c.validate()?;
        self.params.validate()?;
        if c.family != self.family {
            return Err(Error::Config(format!("{} parameters for a {} problem", c.family, self.family)));
        }
        let m = self.grid();
        let top = match self.family {
            Family::Standing => c.modes(),
            Family::Traveling => c.modes().div_ceil(2),
        };
        if top >= m / 2 {
            return Err(Error::Config(format!("{} modes do not fit on a {m}-point grid", c.modes())));
        }
        if self.family == Family::Traveling {
            let seg = &self.schedule;
            if seg.segments().len() != 1 || !seg.first().map.is_identity() {
                return Err(Error::Config("traveling waves require a single uniform segment".into()));
            }
        }
        Ok(())
    }

    fn horizon(&self, c: &ParamVector<T>) -> T {
        match self.family {
            Family::Standing => c.period() / T::lit(4.0),
            Family::Traveling => c.period() / T::idx(self.grid()),
        }
    }

    fn options(&self, store: bool) -> EvolveOptions {
        EvolveOptions { scheme: self.scheme, store_stages: store, solver: self.solver }
    }

    fn rows(&self) -> usize {
        let base = match self.family {
            Family::Standing => self.schedule.last().m,
            Family::Traveling => 2 * self.grid(),
        };
        base + usize::from(self.constraint.is_some())
    }

    fn constraint_row(&self, c: &ParamVector<T>) -> Option<(T, Vec<T>)> {
        let con = self.constraint?;
        let two = T::lit(2.0);
        let mut grad = vec![T::zero(); c.c.len()];
        let mut value = self.params.depth.mean_level();
        for (j, g) in grad.iter_mut().enumerate().skip(1) {
            let k = match (self.family, j % 2) {
                (Family::Standing, 0) => j,
                (Family::Traveling, 1) => j.div_ceil(2),
                _ => continue,
            };
            *g = two * (T::idx(k) * con.position).cos() * con.weight;
            value = value + two * c.c[j] * (T::idx(k) * con.position).cos();
        }
        Some(((value - con.target) * con.weight, grad))
    }

    fn assemble_residual(&self, c: &ParamVector<T>, q0: &SurfaceState<T>, traj: &Trajectory<T>) -> Vec<T> {
        let end = traj.final_state();
        let mut r = match self.family {
            Family::Standing => {
                let s = T::one() / T::idx(end.len()).sqrt();
                zero_mean(&end.phi, &traj.last().map).into_iter().map(|p| p * s).collect::<Vec<T>>()
            }
            Family::Traveling => shift_mismatch(end, q0, T::one() / T::idx(2 * end.len()).sqrt()),
        };
        if let Some((v, _)) = self.constraint_row(c) {
            r.push(v);
        }
        r
    }

    /// Residual vector and the trajectory it came from.
    pub fn evaluate(&self, c: &ParamVector<T>, store_stages: bool) -> Result<(Vec<T>, Trajectory<T>)> {
        self.check(c)?;
        let m = self.grid();
        let q0 = build_initial_state(c, m, &self.schedule.first().map, &self.params)?;
        let traj = evolve_with(&q0, self.horizon(c), &self.schedule, &self.params, self.options(store_stages))?;
        let r = self.assemble_residual(c, &q0, &traj);
        Ok((r, traj))
    }

    pub fn residual(&self, c: &ParamVector<T>) -> Result<Vec<T>> {
        Ok(self.evaluate(c, false)?.0)
    }

    /// Jacobian `∂r/∂c`, reusing a trajectory from [`Self::evaluate`].
    pub fn jacobian_from(&self, c: &ParamVector<T>, traj: &Trajectory<T>) -> Result<Mat<T>> {
        self.check(c)?;
        let m = self.grid();
        let map = self.schedule.first().map.clone();
        let n = c.modes();
        let tangents: Vec<SurfaceState<T>> = (1..=n).map(|j| unit_tangent(self.family, j, m, &map)).collect();
        let evolved = evolve_tangents(traj, &tangents, &self.params)?;
        let end = traj.final_state();
        let rate = state_rate(end, &traj.last().map, &self.params)?;
        let rows = self.rows();
        let mut jac = Mat::zeros(rows, n + 1);
        match self.family {
            Family::Standing => {
                let s = T::one() / T::idx(end.len()).sqrt();
                let map = &traj.last().map;
                let col0 = zero_mean(&rate.phi, map);
                let quarter = T::lit(0.25);
                for i in 0..end.len() {
                    jac[(i, 0)] = quarter * col0[i] * s;
                }
                for (j, t) in evolved.iter().enumerate() {
                    for (i, v) in zero_mean(&t.phi, map).into_iter().enumerate() {
                        jac[(i, j + 1)] = v * s;
                    }
                }
            }
            Family::Traveling => {
                let s = T::one() / T::idx(2 * m).sqrt();
                let inv_m = T::one() / T::idx(m);
                let zero = SurfaceState::zeros(m);
                let col0 = shift_mismatch(&rate.scale(inv_m), &zero, s);
                jac.set_column(0, &col0);
                for (j, (t, t0)) in evolved.iter().zip(&tangents).enumerate() {
                    let col = shift_mismatch(t, t0, s);
                    for (i, v) in col.into_iter().enumerate() {
                        jac[(i, j + 1)] = v;
                    }
                }
            }
        }
        if let Some((_, grad)) = self.constraint_row(c) {
            for (j, g) in grad.into_iter().enumerate() {
                jac[(rows - 1, j)] = g;
            }
        }
        Ok(jac)
    }

    pub fn jacobian(&self, c: &ParamVector<T>) -> Result<Mat<T>> {
        let (_, traj) = self.evaluate(c, true)?;
        self.jacobian_from(c, &traj)
    }
}

/// `f` minus its mean over `x`.
fn zero_mean<T: Real>(f: &[T], map: &MeshMap<T>) -> Vec<T> {
    let w = map.densities(f.len());
    let mean = f.iter().zip(&w).map(|(&a, &b)| a * b).sum::<T>() / T::idx(f.len());
    f.iter().map(|&a| a - mean).collect()
}

/// Interleaved mismatch `[η(x_j) - η0(x_{j-1}), φ(x_j) - φ0(x_{j-1})] * scale`.
fn shift_mismatch<T: Real>(end: &SurfaceState<T>, start: &SurfaceState<T>, scale: T) -> Vec<T> {
    let m = end.len();
    let mut r = Vec::with_capacity(2 * m);
    for j in 0..m {
        let p = (j + m - 1) % m;
        r.push((end.eta[j] - start.eta[p]) * scale);
        r.push((end.phi[j] - start.phi[p]) * scale);
    }
    r
}

/// `∂q0/∂c_j` on the given grid.
fn unit_tangent<T: Real>(family: Family, j: usize, m: usize, map: &MeshMap<T>) -> SurfaceState<T> {
    let x = map.nodes(m);
    let two = T::lit(2.0);
    let mut t = SurfaceState::zeros(m);
    match family {
        Family::Standing => {
            let k = T::idx(j);
            let target = if j % 2 == 0 { &mut t.eta } else { &mut t.phi };
            for (v, &xi) in target.iter_mut().zip(&x) {
                *v = two * (k * xi).cos();
            }
        }
        Family::Traveling => {
            let k = T::idx(j.div_ceil(2));
            if j % 2 == 1 {
                for (v, &xi) in t.eta.iter_mut().zip(&x) {
                    *v = two * (k * xi).cos();
                }
            } else {
                for (v, &xi) in t.phi.iter_mut().zip(&x) {
                    *v = -two * (k * xi).sin();
                }
            }
        }
    }
    t
}

/// Initial surface from the parameter vector, sampled at `ξ(α_i)`.
pub fn build_initial_state<T: Real>(
    c: &ParamVector<T>,
    m: usize,
    map: &MeshMap<T>,
    params: &PhysParams<T>,
) -> Result<SurfaceState<T>> {
    let n = c.modes();
    let top = match c.family {
        Family::Standing => n,
        Family::Traveling => n.div_ceil(2),
    };
    if top >= m / 2 {
        return Err(Error::Config(format!("{n} modes do not fit on a {m}-point grid")));
    }
    let mut q = SurfaceState::rest(m, params.depth);
    for j in 1..=n {
        let t = unit_tangent(c.family, j, m, map);
        q = q.axpy(c.c[j], &t);
    }
    Ok(q)
}

/// Standing-wave residual `r_j = φ(α_j, T/4)/√M` (plus optional amplitude row).
pub fn residual_standing<T: Real>(
    c: &ParamVector<T>,
    schedule: &MeshSchedule<T>,
    params: &PhysParams<T>,
    scheme: Scheme,
    constraint: Option<AmplitudeConstraint<T>>,
) -> Result<Vec<T>> {
    let mut p = ShootingProblem::new(Family::Standing, *params, schedule.clone(), scheme);
    p.constraint = constraint;
    p.residual(c)
}

/// Traveling-wave residual comparing `q(T/M)` with a one-node shift of `q(0)`.
pub fn residual_traveling<T: Real>(
    c: &ParamVector<T>,
    schedule: &MeshSchedule<T>,
    params: &PhysParams<T>,
    scheme: Scheme,
    constraint: Option<AmplitudeConstraint<T>>,
) -> Result<Vec<T>> {
    let mut p = ShootingProblem::new(Family::Traveling, *params, schedule.clone(), scheme);
    p.constraint = constraint;
    p.residual(c)
}

/// `½‖r‖²`.
pub fn objective<T: Real>(r: &[T]) -> T {
    T::lit(0.5) * r.iter().map(|&v| v * v).sum::<T>()
}

/// Levenberg–Marquardt settings.
#[derive(Debug, Clone, PartialEq)]
pub struct LmSettings<T> {
    pub tol_f: T,
    pub tol_step: T,
    pub max_iter: usize,
    pub lambda0: T,
    /// Coefficient index held fixed, if any.
    pub frozen: Option<usize>,
}

impl<T: Real> Default for LmSettings<T> {
    fn default() -> Self {
        Self { tol_f: T::lit(1e-26), tol_step: T::lit(1e-14), max_iter: 100, lambda0: T::lit(1e-3), frozen: None }
    }
}

/// Outcome of a minimization.
#[derive(Debug, Clone, PartialEq)]
pub struct ShootingResult<T> {
    pub param: ParamVector<T>,
    pub f: T,
    pub residual: Vec<T>,
    pub converged: bool,
    pub iterations: usize,
    pub function_evals: usize,
    pub jacobian_evals: usize,
    /// Largest `|η̂_k|`, `|φ̂_k|` over the top quarter of resolved modes at the horizon.
    pub trailing_modes: (T, T),
    /// Final state at the horizon, on the last segment grid.
    pub final_state: SurfaceState<T>,
}

fn trailing_modes<T: Real>(q: &SurfaceState<T>) -> Result<(T, T)> {
    let fo = Fourier::new(q.len())?;
    let top = fo.nyquist();
    let from = top - top / 4;
    let pick = |f: &[T]| fo.forward(f)[from..top].iter().fold(T::zero(), |m, c| m.max(c.norm()));
    Ok((pick(&q.eta), pick(&q.phi)))
}

/// Minimizes `½‖r(c)‖²` starting from `c0`.
pub fn minimize<T: Real>(
    problem: &ShootingProblem<T>,
    c0: &ParamVector<T>,
    settings: &LmSettings<T>,
) -> Result<ShootingResult<T>> {
    let mut c = c0.clone();
    let (mut r, mut traj) = problem.evaluate(&c, true)?;
    let mut f = objective(&r);
    let mut evals = 1;
    let mut jevals = 0;
    let mut iterations = 0;
    let mut lambda = settings.lambda0;
    let free: Vec<usize> = (0..c.c.len()).filter(|&j| Some(j) != settings.frozen).collect();
    let floor = T::lit(1e-12);
    let mut stalled = false;
    while f >= settings.tol_f && iterations < settings.max_iter && !stalled {
        let jac = problem.jacobian_from(&c, &traj)?;
        jevals += 1;
        let rows = jac.rows();
        let nf = free.len();
        let jf = Mat::from_fn(rows, nf, |i, j| jac[(i, free[j])]);
        let diag: Vec<T> = (0..nf).map(|j| (0..rows).map(|i| jf[(i, j)] * jf[(i, j)]).sum::<T>().max(floor)).collect();
        loop {
            iterations += 1;
            let aug = Mat::from_fn(rows + nf, nf, |i, j| {
                if i < rows {
                    jf[(i, j)]
                } else if i - rows == j {
                    (lambda * diag[j]).sqrt()
                } else {
                    T::zero()
                }
            });
            let mut rhs: Vec<T> = r.iter().map(|&v| -v).collect();
            rhs.resize(rows + nf, T::zero());
            let delta = match least_squares(&aug, &rhs) {
                Ok(d) => d,
                Err(_) => {
                    lambda = lambda * T::lit(4.0);
                    if iterations >= settings.max_iter {
                        break;
                    }
                    continue;
                }
            };
            let step_norm = norm2(&delta);
            let lin: Vec<T> = (0..rows)
                .map(|i| r[i] + (0..nf).map(|j| jf[(i, j)] * delta[j]).sum::<T>())
                .collect();
            let predicted = f - objective(&lin);
            let mut trial = c.clone();
            for (j, &d) in free.iter().zip(&delta) {
                trial.c[*j] = trial.c[*j] + d;
            }
            let outcome = if trial.c[0] > T::zero() { problem.evaluate(&trial, true).ok() } else { None };
            evals += usize::from(trial.c[0] > T::zero());
            let accepted = match outcome {
                Some((rn, tn)) => {
                    let fnew = objective(&rn);
                    let gain = if predicted > T::zero() { (f - fnew) / predicted } else { T::zero() };
                    if fnew.is_finite() && gain > T::lit(0.1) && fnew <= f {
                        c = trial;
                        r = rn;
                        traj = tn;
                        f = fnew;
                        true
                    } else {
                        false
                    }
                }
                None => false,
            };
            if accepted {
                lambda = (lambda / T::lit(4.0)).max(T::lit(1e-20));
            } else {
                lambda = lambda * T::lit(4.0);
            }
            if step_norm < settings.tol_step || lambda > T::lit(1e20) {
                stalled = true;
                break;
            }
            if accepted || iterations >= settings.max_iter {
                break;
            }
        }
    }
    let final_state = traj.final_state().clone();
    Ok(ShootingResult {
        param: c,
        converged: f < settings.tol_f,
        f,
        residual: r,
        iterations,
        function_evals: evals,
        jacobian_evals: jevals,
        trailing_modes: trailing_modes(&final_state)?,
        final_state,
    })
}

/// What the continuation parameter controls.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ContinuationTarget {
    /// Freeze `c_k` at each value.
    Coefficient(usize),
    /// Set the amplitude-constraint target at each value; nothing frozen.
    Amplitude,
}

/// Settings for [`continue_family`].
#[derive(Debug, Clone, PartialEq)]
pub struct ContinuationSettings<T> {
    pub lm: LmSettings<T>,
    /// Smallest parameter increment tried before giving up.
    pub min_step: T,
    /// Switch the frozen coefficient when `|ΔT/Δc_k|` drops below the
    /// threshold: `(threshold, new index)`.
    pub auto_switch: Option<(T, usize)>,
}

impl<T: Real> Default for ContinuationSettings<T> {
    fn default() -> Self {
        Self { lm: LmSettings::default(), min_step: T::lit(1e-6), auto_switch: None }
    }
}

/// Converged family members plus a diagnostic when the sweep stopped early.
#[derive(Debug, Clone)]
pub struct FamilyRun<T> {
    pub members: Vec<ShootingResult<T>>,
    /// Continuation value of each member.
    pub values: Vec<T>,
    /// Target in force at the end (differs from the start after a switch).
    pub target: ContinuationTarget,
    pub truncated: Option<String>,
}

fn param_value<T: Real>(target: ContinuationTarget, problem: &ShootingProblem<T>, r: &ShootingResult<T>) -> T {
    match target {
        ContinuationTarget::Coefficient(k) => r.param.c[k],
        ContinuationTarget::Amplitude => problem.constraint.map_or(T::zero(), |c| c.target),
    }
}

fn solve_at<T: Real>(
    problem: &ShootingProblem<T>,
    target: ContinuationTarget,
    value: T,
    guess: &ParamVector<T>,
    lm: &LmSettings<T>,
) -> Option<(ShootingProblem<T>, ShootingResult<T>)> {
    let mut prob = problem.clone();
    let mut start = guess.clone();
    let mut settings = lm.clone();
    match target {
        ContinuationTarget::Coefficient(k) => {
            start.c[k] = value;
            settings.frozen = Some(k);
        }
        ContinuationTarget::Amplitude => {
            let con = prob.constraint.as_mut()?;
            con.target = value;
            settings.frozen = None;
        }
    }
    let res = minimize(&prob, &start, &settings).ok()?;
    if res.converged {
        Some((prob, res))
    } else {
        None
    }
}

fn extrapolate<T: Real>(members: &[(T, ShootingResult<T>)], value: T) -> ParamVector<T> {
    let (v1, r1) = &members[members.len() - 1];
    if members.len() < 2 {
        return r1.param.clone();
    }
    let (v0, r0) = &members[members.len() - 2];
    let span = *v1 - *v0;
    if span == T::zero() {
        return r1.param.clone();
    }
    let s = (value - *v1) / span;
    let mut p = r1.param.clone();
    for (a, (&x1, &x0)) in p.c.iter_mut().zip(r1.param.c.iter().zip(&r0.param.c)) {
        *a = x1 + s * (x1 - x0);
    }
    p
}

/// Steps a converged seed through `values` of the continuation parameter.
pub fn continue_family<T: Real>(
    problem: &ShootingProblem<T>,
    seed: &ShootingResult<T>,
    target: ContinuationTarget,
    values: &[T],
    settings: &ContinuationSettings<T>,
) -> FamilyRun<T> {
    let start = [(param_value(target, problem, seed), seed.clone())];
    continue_family_with(problem, &start, target, values, settings, |_, _| {})
}

/// [`continue_family`] from several converged members `(value, result)`,
/// oldest first, reporting each new member to `on_member` as it converges.
pub fn continue_family_with<T: Real, F: FnMut(T, &ShootingResult<T>)>(
    problem: &ShootingProblem<T>,
    start: &[(T, ShootingResult<T>)],
    target: ContinuationTarget,
    values: &[T],
    settings: &ContinuationSettings<T>,
    mut on_member: F,
) -> FamilyRun<T> {
    let mut target = target;
    let mut history: Vec<(T, ShootingResult<T>)> = start.to_vec();
    let mut current = problem.clone();
    if let (ContinuationTarget::Amplitude, Some(con), Some((v, _))) = (target, current.constraint.as_mut(), start.last()) {
        con.target = *v;
    }
    let mut pending: Vec<T> = values.iter().rev().copied().collect();
    let mut truncated = None;
    while let Some(value) = pending.pop() {
        let Some((last_value, _)) = history.last() else {
            truncated = Some("continuation needs a converged starting member".into());
            break;
        };
        let last_value = *last_value;
        let guess = extrapolate(&history, value);
        match solve_at(&current, target, value, &guess, &settings.lm) {
            Some((prob, res)) => {
                current = prob;
                on_member(value, &res);
                history.push((value, res));
                if let (Some((threshold, new_index)), ContinuationTarget::Coefficient(_)) = (settings.auto_switch, target) {
                    let n = history.len();
                    if n >= 2 {
                        let (va, ra) = &history[n - 2];
                        let (vb, rb) = &history[n - 1];
                        let slope = fabs((rb.param.period() - ra.param.period()) / (*vb - *va));
                        if slope < threshold && ContinuationTarget::Coefficient(new_index) != target {
                            let (ca, cb) = (ra.param.c[new_index], rb.param.c[new_index]);
                            let remaining = pending.len();
                            pending = (1..=remaining).rev().map(|s| cb + T::idx(s) * (cb - ca)).collect();
                            target = ContinuationTarget::Coefficient(new_index);
                            for h in history.iter_mut() {
                                h.0 = h.1.param.c[new_index];
                            }
                        }
                    }
                }
            }
            None => {
                let mid = (last_value + value) / T::lit(2.0);
                if fabs(value - last_value) / T::lit(2.0) < settings.min_step {
                    truncated = Some(format!("no convergence approaching parameter value {value}"));
                    break;
                }
                pending.push(value);
                pending.push(mid);
            }
        }
    }
    let fresh = history.split_off(start.len());
    let (values, members) = fresh.into_iter().unzip();
    FamilyRun { members, values, target, truncated }
}

/// Projects uniform-grid initial data onto the `n` coefficients of a family.
///
/// Components outside the family's symmetry class are dropped.
pub fn params_from_state<T: Real>(
    family: Family,
    period: T,
    q: &SurfaceState<T>,
    n: usize,
    params: &PhysParams<T>,
) -> Result<ParamVector<T>> {
    let m = q.len();
    let fo = Fourier::new(m)?;
    let level = params.depth.mean_level();
    let eta: Vec<T> = q.eta.iter().map(|&v| v - level).collect();
    let (eh, ph) = (fo.forward(&eta), fo.forward(&q.phi));
    let top = fo.nyquist();
    let mut c = vec![T::zero(); n + 1];
    c[0] = period;
    for (j, cj) in c.iter_mut().enumerate().skip(1) {
        let (k, value) = match family {
            Family::Standing => (j, if j % 2 == 0 { eh.get(j).map(|v| v.re) } else { ph.get(j).map(|v| v.re) }),
            Family::Traveling => {
                let k = j.div_ceil(2);
                (k, if j % 2 == 1 { eh.get(k).map(|v| v.re) } else { ph.get(k).map(|v| v.im) })
            }
        };
        if k < top {
            *cj = value.unwrap_or(T::zero());
        }
    }
    Ok(ParamVector::new(family, c))
}

/// Standing-type guess for two copies of a traveling wave placed at `π/2`
/// and `3π/2` and moving towards each other.
pub fn counterpropagating_guess<T: Real>(traveling: &ParamVector<T>, n: usize) -> Result<ParamVector<T>> {
    if traveling.family != Family::Traveling {
        return Err(Error::Config("counter-propagating guess needs a traveling wave".into()));
    }
    let coef = |j: usize| traveling.c.get(j).copied().unwrap_or(T::zero());
    let two = T::lit(2.0);
    let mut c = vec![T::zero(); n + 1];
    c[0] = traveling.period();
    for (k, ck) in c.iter_mut().enumerate().skip(1) {
        *ck = match k % 4 {
            0 => two * coef(2 * k - 1),
            2 => -two * coef(2 * k - 1),
            1 => two * coef(2 * k),
            _ => -two * coef(2 * k),
        };
    }
    Ok(ParamVector::new(Family::Standing, c))
}

/// Gravity-capillary solitary-wave profiles used to seed traveling solves.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CapillaryGuess {
    /// Amplitude -0.15, decay length 6.4, speed 1.408.
    A,
    /// Amplitude -0.32, decay length 2.4, speed 1.385.
    B,
}

impl std::str::FromStr for CapillaryGuess {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "A" | "a" => Ok(CapillaryGuess::A),
            "B" | "b" => Ok(CapillaryGuess::B),
            other => Err(Error::Config(format!("unknown capillary guess '{other}'"))),
        }
    }
}

impl CapillaryGuess {
    /// `(amplitude, decay length, speed)` with unit tension and gravity.
    pub fn constants(self) -> (f64, f64, f64) {
        match self {
            CapillaryGuess::A => (-0.15, 6.4, 1.408),
            CapillaryGuess::B => (-0.32, 2.4, 1.385),
        }
    }

    /// Profile and linear-theory potential on a uniform grid over `[0, 2π)`
    /// after stretching lengths by `stretch` (amplitude `/stretch`, speed
    /// `/√stretch`), with the crest region centred at `x = 0`. Returns the
    /// state and the guessed wave speed.
    pub fn state<T: Real>(self, m: usize, stretch: T) -> Result<(SurfaceState<T>, T)> {
        let fo = Fourier::<T>::new(m)?;
        let (amp, decay, speed) = self.constants();
        let (amp, decay, speed) = (T::lit(amp) / stretch, T::lit(decay), T::lit(speed) / stretch.sqrt());
        let sech = |v: T| T::one() / v.cosh();
        let offset = sech(decay * T::PI() / T::lit(2.0));
        let eta: Vec<T> = fo
            .nodes()
            .into_iter()
            .map(|x| {
                let x = if x > T::PI() { x - T::two_pi() } else { x };
                let s = stretch * x;
                amp * (s.cos() - offset) / (T::one() - offset) * sech(s / decay)
            })
            .collect();
        let phi = fo.hilbert(&eta).into_iter().map(|v| speed * v).collect();
        Ok((SurfaceState::new(eta, phi), speed))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dno::Depth;
    use num_complex::Complex;

    fn deep_problem(m: usize, steps: usize) -> ShootingProblem<f64> {
        ShootingProblem::new(Family::Standing, PhysParams::deep(), MeshSchedule::uniform(m, steps).unwrap(), Scheme::Rk8)
    }

    #[test]
    fn standing_layout() {
        let m = 32;
        let p = PhysParams { g: 1.0, tension: 0.0, depth: Depth::Finite(2.0) };
        let c = ParamVector::new(Family::Standing, vec![6.0, 0.1]);
        let q = build_initial_state(&c, m, &MeshMap::uniform(), &p).unwrap();
        let x = Fourier::<f64>::new(m).unwrap().nodes();
        for i in 0..m {
            assert_eq!(q.eta[i], 2.0);
            assert!((q.phi[i] - 0.2 * x[i].cos()).abs() < 1e-15);
        }
        let c = ParamVector::new(Family::Standing, vec![6.0f64, 0.1, 0.05, 0.02, 0.01]);
        let q = build_initial_state(&c, m, &MeshMap::uniform(), &PhysParams::deep()).unwrap();
        for i in 0..m {
            let j = (i + m / 2) % m;
            assert!((q.eta[i] - q.eta[j]).abs() < 1e-15);
            assert!((q.phi[i] + q.phi[j]).abs() < 1e-15);
        }
        assert!(build_initial_state(&ParamVector::new(Family::Standing, vec![1.0; 18]), m, &MeshMap::uniform(), &p)
            .is_err());
    }

    #[test]
    fn traveling_layout() {
        let m = 32;
        let c = ParamVector::new(Family::Traveling, vec![6.0, 0.1, 0.3]);
        let q = build_initial_state(&c, m, &MeshMap::uniform(), &PhysParams::deep()).unwrap();
        let fo = Fourier::<f64>::new(m).unwrap();
        let eh = fo.forward(&q.eta);
        let ph = fo.forward(&q.phi);
        assert!((eh[1].re - 0.1).abs() < 1e-15 && eh[1].im.abs() < 1e-15);
        assert!(ph[1].re.abs() < 1e-15 && (ph[1].im - 0.3).abs() < 1e-15);
    }

    #[test]
    fn zero_amplitude_residual_vanishes() {
        let p = deep_problem(32, 8);
        let c = ParamVector::new(Family::Standing, vec![2.0 * std::f64::consts::PI, 0.0, 0.0, 0.0]);
        assert!(p.residual(&c).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_amplitude_first_column_is_analytic() {
        let m = 32;
        let p = deep_problem(m, 24);
        let t = 5.0;
        let c = ParamVector::new(Family::Standing, vec![t, 0.0, 0.0]);
        let j = p.jacobian(&c).unwrap();
        assert_eq!((j.rows(), j.cols()), (m, 3));
        let x = Fourier::<f64>::new(m).unwrap().nodes();
        for i in 0..m {
            let exact = (t / 4.0).cos() * 2.0 * x[i].cos() / (m as f64).sqrt();
            assert!((j[(i, 1)] - exact).abs() < 1e-12);
            let exact = -(t / 4.0 * 2f64.sqrt()).sin() / 2f64.sqrt() * 2.0 * (2.0 * x[i]).cos() / (m as f64).sqrt();
            assert!((j[(i, 2)] - exact).abs() < 1e-12);
        }
    }

    #[test]
    fn constraint_row_is_linear() {
        let p = deep_problem(32, 8).with_constraint(AmplitudeConstraint { position: 0.3, target: 0.01, weight: 0.5 });
        let c = ParamVector::new(Family::Standing, vec![6.3, 0.01, 0.002, 0.0, 0.001]);
        let (v, grad) = p.constraint_row(&c).unwrap();
        let eta0 = 2.0 * 0.002 * (2.0f64 * 0.3).cos() + 2.0 * 0.001 * (4.0f64 * 0.3).cos();
        assert!((v - (eta0 - 0.01) * 0.5).abs() < 1e-16);
        assert_eq!(grad[1], 0.0);
        assert!((grad[2] - (0.6f64).cos()).abs() < 1e-16);
    }

    #[test]
    fn traveling_jacobian_matches_differences() {
        let m = 32;
        let prob = ShootingProblem::new(
            Family::Traveling,
            PhysParams::deep(),
            MeshSchedule::uniform(m, 2).unwrap(),
            Scheme::Rk8,
        )
        .with_constraint(AmplitudeConstraint { position: 0.0, target: 0.02, weight: 1.0 });
        let c = ParamVector::new(Family::Traveling, vec![6.2, 0.01, 0.012, 0.001, 0.0005]);
        let j = prob.jacobian(&c).unwrap();
        for k in 0..c.c.len() {
            let h = 1e-6;
            let mut a = c.clone();
            a.c[k] += h;
            let mut b = c.clone();
            b.c[k] -= h;
            let ra = prob.residual(&a).unwrap();
            let rb = prob.residual(&b).unwrap();
            let fd: Vec<f64> = ra.iter().zip(&rb).map(|(x, y)| (x - y) / (2.0 * h)).collect();
            let col = j.column(k);
            let diff: Vec<f64> = fd.iter().zip(&col).map(|(x, y)| x - y).collect();
            assert!(norm2(&diff) < 1e-6 * norm2(&col), "column {k}");
        }
    }

    #[test]
    fn converged_start_takes_no_steps() {
        let p = deep_problem(32, 8);
        let c = ParamVector::new(Family::Standing, vec![2.0 * std::f64::consts::PI, 0.0, 0.0]);
        let res = minimize(&p, &c, &LmSettings { frozen: Some(1), ..LmSettings::default() }).unwrap();
        assert!(res.converged);
        assert_eq!(res.iterations, 0);
        assert_eq!(res.param, c);
    }

    #[test]
    fn small_standing_wave_converges() {
        let p = deep_problem(32, 16);
        let c = ParamVector::new(Family::Standing, vec![2.0 * std::f64::consts::PI, 0.01, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let res = minimize(&p, &c, &LmSettings { frozen: Some(1), ..LmSettings::default() }).unwrap();
        assert!(res.converged, "f = {}", res.f);
        assert_eq!(res.f, objective(&res.residual));
        let ratio = res.param.period() / (2.0 * std::f64::consts::PI) - 1.0;
        assert!(ratio > 0.0 && ratio < 1e-4);
    }

    #[test]
    fn gauge_invariance_of_residual() {
        let p = deep_problem(32, 8);
        let c = ParamVector::new(Family::Standing, vec![6.3, 0.02, 0.001, 0.0005]);
        let (r0, _) = p.evaluate(&c, false).unwrap();
        let m = 32;
        let mut q0 = build_initial_state(&c, m, &MeshMap::uniform(), &p.params).unwrap();
        q0.phi.iter_mut().for_each(|v| *v += 0.37);
        let traj = crate::timestep::evolve(&q0, c.period() / 4.0, &p.schedule, &p.params, p.scheme).unwrap();
        let r1 = p.assemble_residual(&c, &q0, &traj);
        for (a, b) in r0.iter().zip(&r1) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn projection_inverts_initial_state() {
        let p = PhysParams { g: 1.0, tension: 0.0, depth: Depth::Finite(1.5) };
        for family in [Family::Standing, Family::Traveling] {
            let c = ParamVector::new(family, vec![5.0f64, 0.1, -0.02, 0.03, 0.004, -0.001]);
            let q = build_initial_state(&c, 32, &MeshMap::uniform(), &p).unwrap();
            let back = params_from_state(family, 5.0, &q, 5, &p).unwrap();
            for (a, b) in c.c.iter().zip(&back.c) {
                assert!((a - b).abs() < 1e-15, "{family}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn counterpropagating_guess_matches_shifted_superposition() {
        let m = 64;
        let p = PhysParams::deep();
        let trav = ParamVector::new(Family::Traveling, vec![5.0, 0.1, -0.05, 0.02, 0.03, -0.01, 0.004, 0.002, 0.001]);
        let q = build_initial_state(&trav, m, &MeshMap::uniform(), &p).unwrap();
        let fo = Fourier::<f64>::new(m).unwrap();
        let (eh, ph) = (fo.forward(&q.eta), fo.forward(&q.phi));
        let shifted = |coeffs: &[Complex<f64>], s: f64, x: f64| {
            (1..m / 2).map(|k| 2.0 * (coeffs[k] * Complex::from_polar(1.0, k as f64 * (x - s))).re).sum::<f64>()
        };
        let half = std::f64::consts::FRAC_PI_2;
        let guess = counterpropagating_guess(&trav, 8).unwrap();
        let built = build_initial_state(&guess, m, &MeshMap::uniform(), &p).unwrap();
        for (i, x) in fo.nodes().into_iter().enumerate() {
            let eta = shifted(&eh, half, x) + shifted(&eh, 3.0 * half, x);
            let phi = shifted(&ph, half, x) - shifted(&ph, 3.0 * half, x);
            assert!((built.eta[i] - eta).abs() < 1e-14);
            assert!((built.phi[i] - phi).abs() < 1e-14);
        }
    }

    #[test]
    fn capillary_guess_has_zero_mean_and_moves_right() {
        let (q, speed) = CapillaryGuess::A.state::<f64>(1024, 40.0).unwrap();
        let fo = Fourier::<f64>::new(1024).unwrap();
        assert!(fo.mean(&q.eta).abs() < 1e-6 * 0.15 / 40.0);
        assert!((q.eta[0] + 0.15 / 40.0).abs() < 1e-15);
        assert!((speed - 1.408 / 40f64.sqrt()).abs() < 1e-15);
        let eh = fo.forward(&q.eta);
        let ph = fo.forward(&q.phi);
        for k in 1..200 {
            let expect = eh[k] * Complex::new(0.0, -speed);
            assert!((ph[k] - expect).norm() < 1e-15);
        }
        let (q40, s40) = CapillaryGuess::B.state::<f64>(512, 40.0).unwrap();
        assert!((q40.eta[0] + 0.32 / 40.0).abs() < 1e-12);
        assert!((s40 - 1.385 / 40f64.sqrt()).abs() < 1e-15);
    }
}
