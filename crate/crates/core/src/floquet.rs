//! Floquet multipliers of time-periodic solutions.
//!
//! The monodromy operator is represented in the real Fourier basis
//! `2cos kx, -2sin kx` for `η̇` and `φ̇`, interleaved in quadruples
//! `(η cos, η sin, φ cos, φ sin)` per wave number. Only the leading
//! `n = 4 k_max` columns are computed; the eigenvalues of the leading
//! square block are sorted by the mean wave number of their eigenvectors
//! and screened by the residual of the discarded rows.

use num_complex::Complex;

use crate::dno::DipoleSolver;
use crate::dynamics::{PhysParams, SurfaceState};
use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::num::Real;
use crate::spectral::{regrid, Fourier, MeshMap, MeshSchedule, Segment};
use crate::timestep::{evolve_coupled, state_rate, EvolveOptions, Scheme};

/// Leading `(2M-4) × 4k_max` columns of the monodromy matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct MonodromyBlock<T> {
    pub matrix: Mat<T>,
    pub m: usize,
    pub k_max: usize,
    pub period: T,
    pub params: PhysParams<T>,
    pub label: String,
}

impl<T: Real> MonodromyBlock<T> {
    pub fn columns(&self) -> usize {
        4 * self.k_max
    }

    /// `(ω_k/g)²` for `k = 1..M/2-1`, the weight of the potential entries.
    pub fn potential_weights(&self) -> Vec<f64> {
        potential_weights(&self.params, self.m / 2 - 1)
    }
}

fn potential_weights<T: Real>(params: &PhysParams<T>, k_top: usize) -> Vec<f64> {
    (1..=k_top)
        .map(|k| {
            let r = params.omega(T::idx(k)) / params.g;
            (r * r).to_f64_lossy()
        })
        .collect()
}

/// Harmonic initial tangent for column `4(k-1) + slot`.
fn basis_tangent<T: Real>(k: usize, slot: usize, m: usize, map: &MeshMap<T>) -> SurfaceState<T> {
    let two = T::lit(2.0);
    let kk = T::idx(k);
    let shape: Vec<T> = map
        .nodes(m)
        .into_iter()
        .map(|x| if slot % 2 == 0 { two * (kk * x).cos() } else { -two * (kk * x).sin() })
        .collect();
    let zero = vec![T::zero(); m];
    if slot < 2 {
        SurfaceState::new(shape, zero)
    } else {
        SurfaceState::new(zero, shape)
    }
}

fn to_uniform<T: Real>(q: &SurfaceState<T>, map: &MeshMap<T>) -> Result<SurfaceState<T>> {
    if map.is_identity() {
        return Ok(q.clone());
    }
    let id = MeshMap::uniform();
    Ok(SurfaceState::new(regrid(&q.eta, map, &id, q.len())?, regrid(&q.phi, map, &id, q.len())?))
}

/// Fourier rows `(Re η̂_j, Im η̂_j, Re φ̂_j, Im φ̂_j)` for `j = 1..M/2-1`.
fn fourier_rows<T: Real>(q: &SurfaceState<T>, fourier: &Fourier<T>) -> Vec<T> {
    let eh = fourier.forward(&q.eta);
    let ph = fourier.forward(&q.phi);
    let top = fourier.nyquist();
    let mut out = Vec::with_capacity(4 * (top - 1));
    for j in 1..top {
        out.extend_from_slice(&[eh[j].re, eh[j].im, ph[j].re, ph[j].im]);
    }
    out
}

/// Options for [`assemble_monodromy`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonodromyOptions<T> {
    pub scheme: Scheme,
    pub solver: DipoleSolver,
    /// Largest allowed `‖q(T) - q(0)‖∞` of the base orbit.
    pub periodicity_tol: T,
}

impl<T: Real> Default for MonodromyOptions<T> {
    fn default() -> Self {
        Self { scheme: Scheme::Rk8, solver: DipoleSolver::Direct, periodicity_tol: T::lit(1e-6) }
    }
}

/// Evolves the `4 k_max` basis tangents over one full period.
pub fn assemble_monodromy<T: Real>(
    q0: &SurfaceState<T>,
    period: T,
    k_max: usize,
    schedule: &MeshSchedule<T>,
    params: &PhysParams<T>,
    options: MonodromyOptions<T>,
) -> Result<MonodromyBlock<T>> {
    params.validate()?;
    let first = schedule.first();
    let last = schedule.last();
    if q0.len() != first.m {
        return Err(Error::Config(format!("state has {} nodes but the schedule starts at {}", q0.len(), first.m)));
    }
    if k_max == 0 || k_max >= first.m / 2 || 4 * k_max > 2 * last.m - 4 {
        return Err(Error::Config(format!("k_max = {k_max} does not fit grids of {} and {} points", first.m, last.m)));
    }
    if !(period > T::zero()) {
        return Err(Error::Config(format!("period {period} must be positive")));
    }
    let tangents: Vec<SurfaceState<T>> =
        (0..4 * k_max).map(|c| basis_tangent(c / 4 + 1, c % 4, first.m, &first.map)).collect();
    let evolve_options = EvolveOptions { scheme: options.scheme, store_stages: false, solver: options.solver };
    let (traj, evolved) = evolve_coupled(q0, &tangents, period, schedule, params, evolve_options)?;

    let end = traj.final_state();
    let back = SurfaceState::new(
        regrid(&end.eta, &last.map, &first.map, first.m)?,
        regrid(&end.phi, &last.map, &first.map, first.m)?,
    );
    let drift = back.max_abs_diff(q0);
    if !(drift <= options.periodicity_tol) {
        return Err(Error::Mismatch(format!("base orbit is not periodic: |q(T) - q(0)| = {drift:e}")));
    }

    let fourier = Fourier::new(last.m)?;
    let rows = 2 * last.m - 4;
    let mut matrix = Mat::zeros(rows, 4 * k_max);
    for (c, t) in evolved.iter().enumerate() {
        let col = fourier_rows(&to_uniform(t, &last.map)?, &fourier);
        matrix.set_column(c, &col);
    }
    if !matrix.is_finite() {
        return Err(Error::NonFinite("monodromy entries".into()));
    }
    Ok(MonodromyBlock { matrix, m: last.m, k_max, period, params: *params, label: String::new() })
}

/// Exact monodromy block of the flat rest state.
pub fn zero_amplitude_reference<T: Real>(k_max: usize, m: usize, params: &PhysParams<T>, period: T) -> MonodromyBlock<T> {
    let rows = 2 * m - 4;
    let mut matrix = Mat::zeros(rows, 4 * k_max);
    for k in 1..=k_max.min(m / 2 - 1) {
        let kk = T::idx(k);
        let restoring = params.g + params.tension * kk * kk;
        let omega = params.omega_capillary(kk);
        let (s, c) = (omega * period).sin_cos();
        let up = omega / restoring * s;
        let down = -restoring / omega * s;
        let b = 4 * (k - 1);
        for d in 0..4 {
            matrix.row_mut(b + d)[b + d] = c;
        }
        matrix.row_mut(b)[b + 2] = up;
        matrix.row_mut(b + 1)[b + 3] = up;
        matrix.row_mut(b + 2)[b] = down;
        matrix.row_mut(b + 3)[b + 1] = down;
    }
    MonodromyBlock { matrix, m, k_max, period, params: *params, label: "rest".into() }
}

/// `Σ k w_k / Σ w_k` with `w_k` the μ-weighted energy of quadruple `k`.
pub fn mean_wave_number(z: &[Complex<f64>], potential_weights: &[f64]) -> Result<f64> {
    let (mut num, mut den) = (0.0, 0.0);
    for (k, quad) in z.chunks(4).enumerate() {
        let wk = potential_weights.get(k).copied().unwrap_or(1.0);
        let w = quad.iter().enumerate().map(|(i, v)| v.norm_sqr() * if i < 2 { 1.0 } else { wk }).sum::<f64>();
        num += (k + 1) as f64 * w;
        den += w;
    }
    if den == 0.0 {
        return Err(Error::Config("mean wave number of a zero vector".into()));
    }
    Ok(num / den)
}

/// μ-norm of a vector in the interleaved basis.
pub fn mu_norm(z: &[Complex<f64>], potential_weights: &[f64]) -> f64 {
    z.chunks(4)
        .enumerate()
        .map(|(k, quad)| {
            let wk = potential_weights.get(k).copied().unwrap_or(1.0);
            quad.iter().enumerate().map(|(i, v)| v.norm_sqr() * if i < 2 { 1.0 } else { wk }).sum::<f64>()
        })
        .sum::<f64>()
        .sqrt()
}

/// Parity bit (1 odd, 0 even) and the ratio of minority to majority energy.
pub fn parity_of(z: &[Complex<f64>], potential_weights: &[f64]) -> (u8, f64) {
    let (mut even, mut odd) = (0.0, 0.0);
    for (k, quad) in z.chunks(4).enumerate() {
        let wk = potential_weights.get(k).copied().unwrap_or(1.0);
        for (i, v) in quad.iter().enumerate() {
            let e = v.norm_sqr() * if i < 2 { 1.0 } else { wk };
            if i % 2 == 0 {
                even += e;
            } else {
                odd += e;
            }
        }
    }
    let (hi, lo) = if odd > even { (odd, even) } else { (even, odd) };
    (u8::from(odd > even), if hi > 0.0 { lo / hi } else { 0.0 })
}

/// One multiplier with its diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct FloquetRecord {
    pub lambda: Complex<f64>,
    pub modulus: f64,
    /// Argument in `(-π, π]`.
    pub phase: f64,
    pub mean_k: f64,
    pub parity: u8,
    pub parity_mixing: f64,
    /// `‖J z - λ [z; 0]‖_μ` with `‖z‖_μ = 1`.
    pub err: f64,
    pub vector: Vec<Complex<f64>>,
    /// Member of the unit-multiplier cluster from the symmetries.
    pub jordan: bool,
}

fn record(lambda: Complex<f64>, mut z: Vec<Complex<f64>>, block: &Mat<f64>, weights: &[f64]) -> Result<FloquetRecord> {
    let n = z.len();
    let norm = mu_norm(&z, weights);
    if !(norm > 0.0) {
        return Err(Error::Eigen("zero eigenvector".into()));
    }
    z.iter_mut().for_each(|v| *v /= norm);
    let mut r = vec![Complex::new(0.0, 0.0); block.rows()];
    for (i, ri) in r.iter_mut().enumerate() {
        let row = block.row(i);
        let mut acc: Complex<f64> = (0..n).map(|j| z[j] * row[j]).sum();
        if i < n {
            acc -= lambda * z[i];
        }
        *ri = acc;
    }
    let (parity, parity_mixing) = parity_of(&z, weights);
    let phase = {
        let p = lambda.arg();
        if p <= -std::f64::consts::PI {
            std::f64::consts::PI
        } else {
            p
        }
    };
    Ok(FloquetRecord {
        lambda,
        modulus: lambda.norm(),
        phase,
        mean_k: mean_wave_number(&z, weights)?,
        parity,
        parity_mixing,
        err: mu_norm(&r, weights),
        vector: z,
        jordan: false,
    })
}

fn order(a: &FloquetRecord, b: &FloquetRecord) -> std::cmp::Ordering {
    a.mean_k
        .total_cmp(&b.mean_k)
        .then(b.parity.cmp(&a.parity))
        .then(a.phase.total_cmp(&b.phase))
        .then(a.modulus.total_cmp(&b.modulus))
}

/// Eigen-decomposition of the leading square block, sorted by mean wave
/// number and truncated to `n_keep` (one more if that splits a conjugate pair).
pub fn eigen_spectrum<T: Real>(block: &MonodromyBlock<T>, n_keep: usize) -> Result<Vec<FloquetRecord>> {
    let n = block.columns();
    if n_keep > n {
        return Err(Error::Config(format!("cannot keep {n_keep} of {n} multipliers")));
    }
    let full = Mat::from_fn(block.matrix.rows(), n, |i, j| block.matrix[(i, j)].to_f64_lossy());
    let square = faer::Mat::<f64>::from_fn(n, n, |i, j| full[(i, j)]);
    let eig = faer::linalg::solvers::Eigen::new_from_real(square.as_ref())
        .map_err(|e| Error::Eigen(format!("{e:?} (max entry {:e})", full.max_abs())))?;
    let values = eig.S().column_vector();
    let vectors = eig.U();
    let weights = block.potential_weights();
    // Each conjugate pair is rebuilt from one vector so the spectrum is
    // exactly closed under conjugation.
    let mut entries: Vec<(Complex<f64>, Vec<Complex<f64>>)> = Vec::with_capacity(n);
    let mut j = 0;
    while j < n {
        let lambda = values[j];
        let z: Vec<Complex<f64>> = (0..n).map(|i| vectors[(i, j)]).collect();
        if lambda.im != 0.0 && j + 1 < n && values[j + 1] == lambda.conj() {
            entries.push((lambda.conj(), z.iter().map(|v| v.conj()).collect()));
            entries.push((lambda, z));
            j += 2;
        } else {
            entries.push((lambda, z));
            j += 1;
        }
    }
    separate_degenerate(&mut entries, &square, &weights)?;
    let mut records = Vec::with_capacity(n);
    for (lambda, z) in entries {
        records.push(record(lambda, z, &full, &weights)?);
    }
    records.sort_by(order);
    let mut keep = n_keep;
    if keep > 0 && keep < records.len() {
        let last = &records[keep - 1];
        if last.lambda.im != 0.0 {
            let partner = last.lambda.conj();
            if !records[..keep].iter().any(|r| r.lambda == partner) {
                keep += 1;
            }
        }
    }
    records.truncate(keep);
    Ok(records)
}

/// Eigenvalues closer than this (relative) are treated as one eigenspace.
const DEGENERATE_TOL: f64 = 1e-9;

fn component_weight(i: usize, weights: &[f64]) -> f64 {
    if i % 4 < 2 {
        1.0
    } else {
        weights.get(i / 4).copied().unwrap_or(1.0)
    }
}

fn hermitian_eigen(a: &[Vec<Complex<f64>>]) -> Result<(Vec<f64>, Vec<Vec<Complex<f64>>>)> {
    let d = a.len();
    let mat = faer::Mat::<Complex<f64>>::from_fn(d, d, |i, j| a[i][j]);
    let eig = mat
        .self_adjoint_eigen(faer::Side::Lower)
        .map_err(|e| Error::Eigen(format!("{e:?} in a degenerate eigenspace of size {d}")))?;
    let values = (0..d).map(|i| eig.S().column_vector()[i].re).collect();
    let vectors = (0..d).map(|c| (0..d).map(|r| eig.U()[(r, c)]).collect()).collect();
    Ok((values, vectors))
}

/// Right singular vectors of `a - shift I` for the `d` smallest singular values.
fn null_space(a: &faer::Mat<f64>, shift: Complex<f64>, d: usize) -> Result<Vec<Vec<Complex<f64>>>> {
    let n = a.nrows();
    let shifted = faer::Mat::<Complex<f64>>::from_fn(n, n, |i, j| {
        let v = Complex::new(a[(i, j)], 0.0);
        if i == j {
            v - shift
        } else {
            v
        }
    });
    let svd = shifted.svd().map_err(|e| Error::Eigen(format!("{e:?} near multiplier {shift}")))?;
    let v = svd.V();
    Ok((n - d..n).map(|c| (0..n).map(|r| v[(r, c)]).collect()).collect())
}

/// Within each cluster of (numerically) equal eigenvalues, recomputes the
/// eigenspace as a null space (the eigensolver's vectors are unreliable
/// there) and picks the basis that diagonalizes the wave-number weighting,
/// so each vector is as concentrated in `k` as the eigenspace allows.
fn separate_degenerate(
    pairs: &mut [(Complex<f64>, Vec<Complex<f64>>)],
    square: &faer::Mat<f64>,
    weights: &[f64],
) -> Result<()> {
    let count = pairs.len();
    let mut cluster_of: Vec<usize> = (0..count).collect();
    for a in 0..count {
        for b in a + 1..count {
            let (la, lb) = (pairs[a].0, pairs[b].0);
            if (la - lb).norm() < DEGENERATE_TOL * la.norm().max(1.0) {
                let (ra, rb) = (cluster_of[a], cluster_of[b]);
                let (lo, hi) = (ra.min(rb), ra.max(rb));
                cluster_of.iter_mut().filter(|c| **c == hi).for_each(|c| *c = lo);
            }
        }
    }
    for root in 0..count {
        let members: Vec<usize> = (0..count).filter(|&i| cluster_of[i] == root).collect();
        let d = members.len();
        if d < 2 {
            continue;
        }
        let n = pairs[members[0]].1.len();
        let inner = |x: &[Complex<f64>], y: &[Complex<f64>], scale: &dyn Fn(usize) -> f64| -> Complex<f64> {
            (0..n).map(|i| x[i].conj() * y[i] * scale(i)).sum()
        };
        let w = |i: usize| component_weight(i, weights);
        let wk = |i: usize| component_weight(i, weights) * (i / 4 + 1) as f64;
        let z = null_space(square, members.iter().map(|&m| pairs[m].0).sum::<Complex<f64>>() / d as f64, d)?;
        let z: Vec<&Vec<Complex<f64>>> = z.iter().collect();
        let gram: Vec<Vec<Complex<f64>>> = (0..d).map(|a| (0..d).map(|b| inner(z[a], z[b], &w)).collect()).collect();
        let (sigma, v) = hermitian_eigen(&gram)?;
        let top = sigma.iter().copied().fold(0.0, f64::max);
        if !(sigma.iter().copied().fold(f64::INFINITY, f64::min) > 1e-12 * top) {
            // Nearly parallel vectors: a defective eigenvalue, leave as is.
            continue;
        }
        let q: Vec<Vec<Complex<f64>>> = (0..d)
            .map(|c| {
                let s = 1.0 / sigma[c].sqrt();
                (0..n).map(|i| (0..d).map(|a| z[a][i] * v[c][a]).sum::<Complex<f64>>() * s).collect()
            })
            .collect();
        let kmat: Vec<Vec<Complex<f64>>> = (0..d).map(|a| (0..d).map(|b| inner(&q[a], &q[b], &wk)).collect()).collect();
        let (_, u) = hermitian_eigen(&kmat)?;
        let mut lambdas: Vec<Complex<f64>> = members.iter().map(|&m| pairs[m].0).collect();
        lambdas.sort_by(|a, b| a.arg().total_cmp(&b.arg()).then(a.norm().total_cmp(&b.norm())));
        for (c, &m) in members.iter().enumerate() {
            let zn: Vec<Complex<f64>> = (0..n).map(|i| (0..d).map(|a| q[a][i] * u[c][a]).sum()).collect();
            pairs[m] = (lambdas[c], zn);
        }
    }
    Ok(())
}

/// How the unit multiplier split in floating point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitPattern {
    Empty,
    RealAxis,
    ConjugatePairs,
    Mixed,
}

/// Multipliers near one produced by the time- and space-translation symmetries.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterReport {
    pub members: Vec<usize>,
    /// Nearly reciprocal pairs `(i, j)` among the members.
    pub pairs: Vec<(usize, usize)>,
    /// Largest `|λ_i λ_j - 1|` over the pairs.
    pub pair_defect: f64,
    /// Largest `|λ - 1|` in the cluster.
    pub split: f64,
    pub pattern: SplitPattern,
}

/// Default cluster radius `100 √ε`.
pub fn default_cluster_radius() -> f64 {
    100.0 * f64::EPSILON.sqrt()
}

/// Finds the unit-multiplier cluster and flags its members.
pub fn unit_one_cluster(records: &mut [FloquetRecord], radius: f64) -> ClusterReport {
    let one = Complex::new(1.0, 0.0);
    let members: Vec<usize> = (0..records.len()).filter(|&i| (records[i].lambda - one).norm() < radius).collect();
    for &i in &members {
        records[i].jordan = true;
    }
    let mut free = members.clone();
    let mut pairs = Vec::new();
    let mut pair_defect: f64 = 0.0;
    while free.len() >= 2 {
        let mut best = (0, 1, f64::INFINITY);
        for a in 0..free.len() {
            for b in a + 1..free.len() {
                let d = (records[free[a]].lambda * records[free[b]].lambda - one).norm();
                if d < best.2 {
                    best = (a, b, d);
                }
            }
        }
        pairs.push((free[best.0], free[best.1]));
        pair_defect = pair_defect.max(best.2);
        free.remove(best.1);
        free.remove(best.0);
    }
    let split = members.iter().map(|&i| (records[i].lambda - one).norm()).fold(0.0, f64::max);
    let real = members.iter().filter(|&&i| records[i].lambda.im == 0.0).count();
    let pattern = match (members.len(), real) {
        (0, _) => SplitPattern::Empty,
        (n, r) if r == n => SplitPattern::RealAxis,
        (_, 0) => SplitPattern::ConjugatePairs,
        _ => SplitPattern::Mixed,
    };
    ClusterReport { members, pairs, pair_defect, split, pattern }
}

/// True when every non-cluster multiplier lies within `tol` of the unit circle.
pub fn is_stable(records: &[FloquetRecord], tol: f64) -> bool {
    records.iter().filter(|r| !r.jordan).all(|r| (r.modulus - 1.0).abs() <= tol)
}

/// Time and space derivatives of the orbit at `t = 0`, and how far each is
/// from being fixed by the monodromy operator (relative max-norm).
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetryModes<T> {
    pub time: SurfaceState<T>,
    pub space: SurfaceState<T>,
    pub time_residual: T,
    pub space_residual: T,
}

pub fn symmetry_eigenfunctions<T: Real>(
    q0: &SurfaceState<T>,
    period: T,
    schedule: &MeshSchedule<T>,
    params: &PhysParams<T>,
    scheme: Scheme,
) -> Result<SymmetryModes<T>> {
    let first = schedule.first();
    let last = schedule.last();
    let time = state_rate(q0, &first.map, params)?;
    let fourier = Fourier::new(q0.len())?;
    let dens = first.map.densities(q0.len());
    let ddx = |f: &[T]| fourier.derivative(f).into_iter().zip(&dens).map(|(d, &w)| d / w).collect::<Vec<T>>();
    let space = SurfaceState::new(ddx(&q0.eta), ddx(&q0.phi));
    let (_, out) = evolve_coupled(
        q0,
        &[time.clone(), space.clone()],
        period,
        schedule,
        params,
        EvolveOptions::new(scheme),
    )?;
    let rel = |after: &SurfaceState<T>, before: &SurfaceState<T>| -> Result<T> {
        let back = SurfaceState::new(
            regrid(&after.eta, &last.map, &first.map, first.m)?,
            regrid(&after.phi, &last.map, &first.map, first.m)?,
        );
        let scale = before.max_abs();
        Ok(if scale > T::zero() { back.max_abs_diff(before) / scale } else { T::zero() })
    };
    Ok(SymmetryModes {
        time_residual: rel(&out[0], &time)?,
        space_residual: rel(&out[1], &space)?,
        time,
        space,
    })
}

/// Settings for [`run_algorithm1`].
#[derive(Debug, Clone, PartialEq)]
pub struct FloquetSettings<T: Real> {
    pub schedule: MeshSchedule<T>,
    pub k_max: usize,
    pub n_keep: usize,
    /// Residual tolerance on the retained multipliers.
    pub tol: f64,
    pub max_refinements: usize,
    pub cluster_radius: f64,
    pub monodromy: MonodromyOptions<T>,
}

impl<T: Real> FloquetSettings<T> {
    /// `k_max ≈ n_keep/2`, `M ≈ 6 k_max`, rounded up to a multiple of 4.
    pub fn sized(n_keep: usize, steps: usize) -> Result<Self> {
        let k_max = n_keep.div_ceil(2).max(1);
        let m = (6 * k_max).div_ceil(4).max(4) * 4;
        Ok(Self {
            schedule: MeshSchedule::uniform(m.max(16), steps)?,
            k_max,
            n_keep,
            tol: 1e-8,
            max_refinements: 2,
            cluster_radius: default_cluster_radius(),
            monodromy: MonodromyOptions::default(),
        })
    }
}

/// One pass of the refinement loop.
#[derive(Debug, Clone, PartialEq)]
pub struct Attempt {
    pub m: usize,
    pub k_max: usize,
    pub steps: usize,
    pub max_err: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FloquetOutcome {
    pub records: Vec<FloquetRecord>,
    pub cluster: ClusterReport,
    pub attempts: Vec<Attempt>,
    /// Retained residuals are all below the tolerance.
    pub resolved: bool,
    pub stable: bool,
}

fn refine<T: Real>(schedule: &MeshSchedule<T>) -> Result<MeshSchedule<T>> {
    let segs = schedule
        .segments()
        .iter()
        .map(|s| Segment { theta: s.theta, steps: (3 * s.steps).div_ceil(2), m: (3 * s.m).div_ceil(4) * 2, map: s.map.clone() })
        .collect();
    MeshSchedule::new(segs)
}

/// Assembles, diagonalizes and screens the spectrum, refining the grid
/// and truncation while retained residuals exceed the tolerance.
pub fn run_algorithm1<T: Real>(
    q0: &SurfaceState<T>,
    period: T,
    params: &PhysParams<T>,
    settings: &FloquetSettings<T>,
) -> Result<FloquetOutcome> {
    let mut schedule = settings.schedule.clone();
    let mut k_max = settings.k_max;
    let mut state = q0.clone();
    let mut attempts = Vec::new();
    loop {
        let block = assemble_monodromy(&state, period, k_max, &schedule, params, settings.monodromy)?;
        let mut records = eigen_spectrum(&block, settings.n_keep.min(4 * k_max))?;
        let max_err = records.iter().map(|r| r.err).fold(0.0, f64::max);
        attempts.push(Attempt { m: schedule.first().m, k_max, steps: schedule.total_steps(), max_err });
        let resolved = max_err < settings.tol && records.len() >= settings.n_keep;
        if resolved || attempts.len() > settings.max_refinements {
            let cluster = unit_one_cluster(&mut records, settings.cluster_radius);
            let stable = is_stable(&records, 1e-5);
            return Ok(FloquetOutcome { records, cluster, attempts, resolved, stable });
        }
        let next = refine(&schedule)?;
        let map = &schedule.first().map;
        let m_new = next.first().m;
        state = SurfaceState::new(regrid(&state.eta, map, map, m_new)?, regrid(&state.phi, map, map, m_new)?);
        k_max = (3 * k_max).div_ceil(2).min(next.first().m / 2 - 1).min((2 * next.last().m - 4) / 4);
        schedule = next;
    }
}
