//! Dirichlet–Neumann operator for the periodic Laplace problem below a
//! free surface, by a double-layer boundary integral method.
//!
//! Given surface potential values `φ(ξ(α_i))`, the dipole density `μ` solves
//! `½μ + (1/M) K μ = φ`; with `γ = μ'` the operator is
//! `Gφ = [½Hγ + (1/M) G γ] / ξ'`, which is `√(1+η_x²) ∂φ/∂n`.

use num_complex::Complex;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{gmres, Lu, Mat};
use crate::num::{fabs, Real};
use crate::spectral::{Fourier, MeshMap};

/// Fluid depth below the mean surface.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Depth<T> {
    Infinite,
    /// Mean depth `h`; the bottom sits at `y = 0` and `η` stores total depth.
    Finite(T),
}

impl<T: Real> Depth<T> {
    pub fn is_finite(&self) -> bool {
        matches!(self, Depth::Finite(_))
    }

    /// `k tanh(kh)`, or `k` in deep water.
    pub fn symbol(&self, k: T) -> T {
        match *self {
            Depth::Infinite => fabs(k),
            Depth::Finite(h) => fabs(k) * (fabs(k) * h).tanh(),
        }
    }

    /// Mean surface height: `h` for finite depth, zero otherwise.
    pub fn mean_level(&self) -> T {
        match *self {
            Depth::Infinite => T::zero(),
            Depth::Finite(h) => h,
        }
    }
}

/// Dense linear solver used for the dipole density.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DipoleSolver {
    Direct,
    Krylov { tol: f64, max_iter: usize },
}

impl Default for DipoleSolver {
    fn default() -> Self {
        DipoleSolver::Direct
    }
}

impl DipoleSolver {
    pub fn krylov() -> Self {
        DipoleSolver::Krylov { tol: 1e-13, max_iter: 400 }
    }
}

/// Parametrized free surface `ζ(α) = ξ(α) + i η(ξ(α))` at the grid nodes.
#[derive(Debug, Clone)]
pub struct SurfaceGeometry<T: Real> {
    map: MeshMap<T>,
    depth: Depth<T>,
    fourier: Fourier<T>,
    eta: Vec<T>,
    xi_prime: Vec<T>,
    eta_x: Vec<T>,
    zeta: Vec<Complex<T>>,
    dzeta: Vec<Complex<T>>,
    ddzeta: Vec<Complex<T>>,
}

impl<T: Real> SurfaceGeometry<T> {
    /// Builds the geometry from surface heights sampled at `ξ(α_i)`.
    pub fn new(map: &MeshMap<T>, eta: &[T], depth: Depth<T>) -> Result<Self> {
        let fourier = Fourier::new(eta.len())?;
        Self::with_fourier(map, eta, depth, fourier)
    }

    pub fn with_fourier(map: &MeshMap<T>, eta: &[T], depth: Depth<T>, fourier: Fourier<T>) -> Result<Self> {
        let m = eta.len();
        if fourier.len() != m {
            return Err(Error::Mismatch(format!("transform size {} for {m} nodes", fourier.len())));
        }
        if let Some(i) = eta.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("surface height at node {i}")));
        }
        if let Depth::Finite(h) = depth {
            if !(h > T::zero()) {
                return Err(Error::Config(format!("depth {h} must be positive")));
            }
            if let Some(i) = eta.iter().position(|&v| v <= T::zero()) {
                return Err(Error::DegenerateGeometry { node: i });
            }
        }
        let alpha = fourier.nodes();
        let eta_a = fourier.derivative(eta);
        let eta_aa = fourier.derivative(&eta_a);
        let xi: Vec<T> = alpha.iter().map(|&a| map.xi(a)).collect();
        let xi_prime: Vec<T> = alpha.iter().map(|&a| map.density(a)).collect();
        let xi_second: Vec<T> = alpha.iter().map(|&a| map.density_derivative(a)).collect();
        let zeta = xi.iter().zip(eta).map(|(&x, &y)| Complex::new(x, y)).collect();
        let dzeta: Vec<Complex<T>> = xi_prime.iter().zip(&eta_a).map(|(&x, &y)| Complex::new(x, y)).collect();
        let ddzeta = xi_second.iter().zip(&eta_aa).map(|(&x, &y)| Complex::new(x, y)).collect();
        if let Some(i) = dzeta.iter().position(|z| !(z.norm_sqr() > T::zero()) || !z.re.is_finite()) {
            return Err(Error::DegenerateGeometry { node: i });
        }
        let eta_x = eta_a.iter().zip(&xi_prime).map(|(&d, &s)| d / s).collect();
        Ok(Self { map: map.clone(), depth, fourier, eta: eta.to_vec(), xi_prime, eta_x, zeta, dzeta, ddzeta })
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.eta.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.eta.is_empty()
    }

    pub fn map(&self) -> &MeshMap<T> {
        &self.map
    }

    pub fn depth(&self) -> Depth<T> {
        self.depth
    }

    pub fn fourier(&self) -> &Fourier<T> {
        &self.fourier
    }

    pub fn eta(&self) -> &[T] {
        &self.eta
    }

    /// `ξ'(α_i)`.
    pub fn xi_prime(&self) -> &[T] {
        &self.xi_prime
    }

    /// Surface slope `η_x` at the nodes.
    pub fn eta_x(&self) -> &[T] {
        &self.eta_x
    }

    pub fn zeta(&self) -> &[Complex<T>] {
        &self.zeta
    }

    pub fn dzeta(&self) -> &[Complex<T>] {
        &self.dzeta
    }

    /// `d/dx` of nodal data along the surface, via `(d/dα)/ξ'`.
    pub fn dx(&self, f: &[T]) -> Vec<T> {
        let d = self.fourier.derivative(f);
        d.iter().zip(&self.xi_prime).map(|(&a, &s)| a / s).collect()
    }

    /// Mean with respect to `x`, i.e. `(1/2π)∫ f dx`.
    pub fn x_mean(&self, f: &[T]) -> T {
        let s: T = f.iter().zip(&self.xi_prime).map(|(&a, &w)| a * w).sum();
        s / T::idx(self.len())
    }
}

/// Dense kernel matrices `K_ij = K(α_i, α_j)`, `G_ij = G(α_i, α_j)`.
#[derive(Debug, Clone)]
pub struct KernelPair<T: Real> {
    pub k: Mat<T>,
    pub g: Mat<T>,
}

/// `cot(d/2)` for complex `d = a + ib`.
#[inline]
fn half_cot<T: Real>(d: Complex<T>) -> Complex<T> {
    let (s, c) = d.re.sin_cos();
    let den = d.im.cosh() - c;
    Complex::new(s / den, -d.im.sinh() / den)
}

/// Quadrature refinement for the bottom-image kernels.
///
/// The image kernel has a pole at parameter distance `d ≈ 2η/|ζ'|` from the
/// real axis, so the trapezoid rule on `M` nodes errs by about `e^{-Md}`.
/// Returns the smallest factor `p` with `e^{-pMd} < e^{-36}`, at most 8.
pub fn image_oversampling<T: Real>(geom: &SurfaceGeometry<T>) -> usize {
    if !geom.depth.is_finite() {
        return 1;
    }
    let m = geom.len();
    let d = geom
        .eta
        .iter()
        .zip(&geom.dzeta)
        .map(|(&e, dz)| (T::lit(2.0) * e / dz.norm()).to_f64_lossy())
        .fold(f64::INFINITY, f64::min);
    let p = (36.0 / (m as f64 * d)).ceil();
    if p.is_finite() {
        p.clamp(1.0, 8.0) as usize
    } else {
        8
    }
}

/// Image-kernel contributions integrated on a `p`-times finer grid and
/// folded back onto the nodes through trigonometric interpolation.
fn image_kernels_refined<T: Real>(geom: &SurfaceGeometry<T>, p: usize) -> (Mat<T>, Mat<T>) {
    let m = geom.len();
    let fine = p * m;
    let fo = &geom.fourier;
    let half = T::lit(0.5);
    let eta_hat = fo.forward(&geom.eta);
    let eta_a_hat = fo.forward(&fo.derivative(&geom.eta));
    let beta: Vec<T> = (0..fine).map(|f| T::two_pi() * T::idx(f) / T::idx(fine)).collect();
    let zf: Vec<Complex<T>> =
        beta.iter().map(|&b| Complex::new(geom.map.xi(b), fo.interpolate(&eta_hat, b))).collect();
    let dzf: Vec<Complex<T>> =
        beta.iter().map(|&b| Complex::new(geom.map.density(b), fo.interpolate(&eta_a_hat, b))).collect();
    // Periodic sinc S(θ) = sin(Mθ/2) / (M tan(θ/2)).
    let alpha = fo.nodes();
    let mt = T::idx(m);
    let interp = Mat::from_fn(fine, m, |f, j| {
        if f % p == 0 {
            return if f / p == j { T::one() } else { T::zero() };
        }
        let th = beta[f] - alpha[j];
        (mt * th * half).sin() / (mt * (th * half).tan())
    });
    let rows: Vec<(Vec<T>, Vec<T>)> = (0..m)
        .into_par_iter()
        .map(|i| {
            let zi = geom.zeta[i];
            let dzi = geom.dzeta[i];
            let mut krow = vec![T::zero(); m];
            let mut grow = vec![T::zero(); m];
            let inv_p = T::one() / T::idx(p);
            for f in 0..fine {
                let cot2 = half_cot(zi - zf[f].conj());
                let kv = (dzf[f].conj() * cot2).im * half * inv_p;
                let gv = (dzi * cot2).re * half * inv_p;
                for (j, w) in interp.row(f).iter().enumerate() {
                    krow[j] = krow[j] + kv * *w;
                    grow[j] = grow[j] + gv * *w;
                }
            }
            (krow, grow)
        })
        .collect();
    let mut k = Mat::zeros(m, m);
    let mut g = Mat::zeros(m, m);
    for (i, (kr, gr)) in rows.into_iter().enumerate() {
        k.row_mut(i).copy_from_slice(&kr);
        g.row_mut(i).copy_from_slice(&gr);
    }
    (k, g)
}

/// Assembles the double-layer kernels; rows are filled in parallel.
pub fn assemble_kernels<T: Real>(geom: &SurfaceGeometry<T>) -> Result<KernelPair<T>> {
    let m = geom.len();
    let half = T::lit(0.5);
    let oversample = image_oversampling(geom);
    let refined = (oversample > 1).then(|| image_kernels_refined(geom, oversample));
    let finite = geom.depth.is_finite() && refined.is_none();
    let alpha = geom.fourier.nodes();
    let rows: Vec<(Vec<T>, Vec<T>)> = (0..m)
        .into_par_iter()
        .map(|i| {
            let zi = geom.zeta[i];
            let dzi = geom.dzeta[i];
            let mut krow = vec![T::zero(); m];
            let mut grow = vec![T::zero(); m];
            for j in 0..m {
                let dzj = geom.dzeta[j];
                let (mut kv, mut gv) = if i == j {
                    let q = geom.ddzeta[i] / (dzi * T::lit(2.0));
                    (-q.im, q.re)
                } else {
                    let cot1 = half_cot(zi - geom.zeta[j]);
                    let flat = half / ((alpha[i] - alpha[j]) * half).tan();
                    ((dzj * cot1).im * half, (dzi * cot1).re * half - flat)
                };
                if finite {
                    let cot2 = half_cot(zi - geom.zeta[j].conj());
                    kv = kv - (dzj.conj() * cot2).im * half;
                    gv = gv - (dzi * cot2).re * half;
                }
                krow[j] = kv;
                grow[j] = gv;
            }
            if let Some((k2, g2)) = &refined {
                for j in 0..m {
                    krow[j] = krow[j] - k2[(i, j)];
                    grow[j] = grow[j] - g2[(i, j)];
                }
            }
            (krow, grow)
        })
        .collect();
    let mut k = Mat::zeros(m, m);
    let mut g = Mat::zeros(m, m);
    for (i, (kr, gr)) in rows.into_iter().enumerate() {
        if let Some(j) = kr.iter().zip(&gr).position(|(a, b)| !a.is_finite() || !b.is_finite()) {
            return Err(Error::Kernel { i, j });
        }
        k.row_mut(i).copy_from_slice(&kr);
        g.row_mut(i).copy_from_slice(&gr);
    }
    Ok(KernelPair { k, g })
}

/// Factored Dirichlet–Neumann operator for one surface.
///
/// Immutable after construction and shared by reference across any number
/// of concurrent applications.
#[derive(Debug, Clone)]
pub struct Dno<T: Real> {
    geom: SurfaceGeometry<T>,
    system: Mat<T>,
    g_scaled: Mat<T>,
    lu: Option<Lu<T>>,
    solver: DipoleSolver,
}

impl<T: Real> Dno<T> {
    pub fn new(geom: SurfaceGeometry<T>) -> Result<Self> {
        Self::with_solver(geom, DipoleSolver::Direct)
    }

    pub fn with_solver(geom: SurfaceGeometry<T>, solver: DipoleSolver) -> Result<Self> {
        let kernels = assemble_kernels(&geom)?;
        Self::from_kernels(geom, &kernels, solver)
    }

    pub fn from_kernels(geom: SurfaceGeometry<T>, kernels: &KernelPair<T>, solver: DipoleSolver) -> Result<Self> {
        let m = geom.len();
        if kernels.k.rows() != m || kernels.g.rows() != m {
            return Err(Error::Mismatch(format!("kernels of size {} for {m} nodes", kernels.k.rows())));
        }
        let inv_m = T::one() / T::idx(m);
        let half = T::lit(0.5);
        let system = Mat::from_fn(m, m, |i, j| kernels.k[(i, j)] * inv_m + if i == j { half } else { T::zero() });
        let g_scaled = Mat::from_fn(m, m, |i, j| kernels.g[(i, j)] * inv_m);
        let lu = match solver {
            DipoleSolver::Direct => Some(Lu::new(system.clone()).map_err(|_| Error::Singular {
                condition: estimate_condition(&system),
            })?),
            DipoleSolver::Krylov { .. } => None,
        };
        Ok(Self { geom, system, g_scaled, lu, solver })
    }

    pub fn geometry(&self) -> &SurfaceGeometry<T> {
        &self.geom
    }

    /// Dipole density `μ` for surface potential values `φ`.
    pub fn solve_dipole(&self, phi: &[T]) -> Result<Vec<T>> {
        if phi.len() != self.geom.len() {
            return Err(Error::Mismatch(format!("{} potential values for {} nodes", phi.len(), self.geom.len())));
        }
        match (&self.lu, self.solver) {
            (Some(lu), _) => Ok(lu.solve(phi)),
            (None, DipoleSolver::Krylov { tol, max_iter }) => gmres(|v| self.system.matvec(v), phi, T::lit(tol), max_iter),
            (None, DipoleSolver::Direct) => unreachable!("direct solver always factors"),
        }
    }

    fn finish(&self, gamma: &[T], g_gamma: &[T]) -> Vec<T> {
        let h = self.geom.fourier.hilbert(gamma);
        let half = T::lit(0.5);
        h.iter()
            .zip(g_gamma)
            .zip(&self.geom.xi_prime)
            .map(|((&hv, &gv), &s)| (half * hv + gv) / fabs(s))
            .collect()
    }

    /// `Gφ` at the surface nodes.
    pub fn apply(&self, phi: &[T]) -> Result<Vec<T>> {
        let mu = self.solve_dipole(phi)?;
        let gamma = self.geom.fourier.filtered_derivative(&mu);
        let g_gamma = self.g_scaled.matvec(&gamma);
        Ok(self.finish(&gamma, &g_gamma))
    }

    /// `Gφ` for many potentials, sharing one factorization.
    pub fn apply_many(&self, phis: &[Vec<T>]) -> Result<Vec<Vec<T>>> {
        let m = self.geom.len();
        let n = phis.len();
        if n == 0 {
            return Ok(Vec::new());
        }
        let Some(lu) = &self.lu else {
            return phis.iter().map(|p| self.apply(p)).collect();
        };
        let mut rhs = Mat::zeros(m, n);
        for (j, p) in phis.iter().enumerate() {
            if p.len() != m {
                return Err(Error::Mismatch(format!("{} potential values for {m} nodes", p.len())));
            }
            rhs.set_column(j, p);
        }
        let mu = lu.solve_columns(&rhs);
        let mut gammas = Mat::zeros(m, n);
        for j in 0..n {
            gammas.set_column(j, &self.geom.fourier.filtered_derivative(&mu.column(j)));
        }
        let gg = self.g_scaled.matmul(&gammas);
        Ok((0..n).map(|j| self.finish(&gammas.column(j), &gg.column(j))).collect())
    }

    /// Surface velocities `(u, v) = (φ_x, φ_y)` from the surface potential.
    pub fn velocities(&self, phi: &[T]) -> Result<(Vec<T>, Vec<T>)> {
        let gphi = self.apply(phi)?;
        Ok(self.velocities_from(phi, &gphi))
    }

    /// Surface velocities when `Gφ` is already known.
    pub fn velocities_from(&self, phi: &[T], gphi: &[T]) -> (Vec<T>, Vec<T>) {
        let phi_x = self.geom.dx(phi);
        let mut u = Vec::with_capacity(phi.len());
        let mut v = Vec::with_capacity(phi.len());
        for ((&px, &gp), &ex) in phi_x.iter().zip(gphi).zip(&self.geom.eta_x) {
            let w = T::one() / (T::one() + ex * ex);
            u.push((px - ex * gp) * w);
            v.push((ex * px + gp) * w);
        }
        (u, v)
    }
}

fn estimate_condition<T: Real>(a: &Mat<T>) -> f64 {
    let n = a.rows();
    let mut lo = f64::INFINITY;
    let mut hi = 0.0f64;
    for i in 0..n {
        let s: f64 = a.row(i).iter().map(|x| fabs(*x).to_f64_lossy()).sum();
        lo = lo.min(s);
        hi = hi.max(s);
    }
    if lo == 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

/// Solves for the dipole density with the given kernels.
pub fn solve_dipole<T: Real>(geom: &SurfaceGeometry<T>, kernels: &KernelPair<T>, phi: &[T]) -> Result<Vec<T>> {
    Dno::from_kernels(geom.clone(), kernels, DipoleSolver::Direct)?.solve_dipole(phi)
}

/// Applies the Dirichlet–Neumann operator with the given kernels.
pub fn apply_dno<T: Real>(geom: &SurfaceGeometry<T>, kernels: &KernelPair<T>, phi: &[T]) -> Result<Vec<T>> {
    Dno::from_kernels(geom.clone(), kernels, DipoleSolver::Direct)?.apply(phi)
}

/// Surface velocities `(u, v)` for the potential `φ` on `geom`.
pub fn surface_velocities<T: Real>(geom: &SurfaceGeometry<T>, phi: &[T]) -> Result<(Vec<T>, Vec<T>)> {
    Dno::new(geom.clone())?.velocities(phi)
}

#[cfg(test)]
mod tests {
    use super::*;

    const PI: f64 = std::f64::consts::PI;

    fn flat(m: usize, depth: Depth<f64>) -> SurfaceGeometry<f64> {
        let level = depth.mean_level();
        SurfaceGeometry::new(&MeshMap::uniform(), &vec![level; m], depth).unwrap()
    }

    #[test]
    fn flat_deep_kernel_k_vanishes() {
        let geom = flat(32, Depth::Infinite);
        let kp = assemble_kernels(&geom).unwrap();
        assert!(kp.k.max_abs() < 1e-14);
        assert!(kp.g.max_abs() < 1e-12);
    }

    #[test]
    fn flat_dipole_is_twice_potential() {
        let geom = flat(32, Depth::Infinite);
        let kp = assemble_kernels(&geom).unwrap();
        let x = geom.fourier().nodes();
        let phi: Vec<f64> = x.iter().map(|t| (3.0 * t).cos()).collect();
        let mu = solve_dipole(&geom, &kp, &phi).unwrap();
        for (a, b) in mu.iter().zip(&phi) {
            assert!((a - 2.0 * b).abs() < 1e-14);
        }
    }

    #[test]
    fn diagonal_limit_matches_closed_form() {
        let m = 64;
        let fo = Fourier::<f64>::new(m).unwrap();
        let eta: Vec<f64> = fo.nodes().iter().map(|a| 0.1 * a.cos()).collect();
        let geom = SurfaceGeometry::new(&MeshMap::uniform(), &eta, Depth::Infinite).unwrap();
        let kp = assemble_kernels(&geom).unwrap();
        for (i, a) in fo.nodes().iter().enumerate() {
            let num = Complex::new(0.0, -0.1 * a.cos());
            let den = Complex::new(1.0, -0.1 * a.sin()) * 2.0;
            let q = num / den;
            assert!((kp.k[(i, i)] + q.im).abs() < 1e-13);
            assert!((kp.g[(i, i)] - q.re).abs() < 1e-13);
        }
    }

    #[test]
    fn flat_symbols() {
        let m = 64;
        for depth in [Depth::Infinite, Depth::Finite(1.0), Depth::Finite(0.3)] {
            let geom = flat(m, depth);
            let dno = Dno::new(geom.clone()).unwrap();
            let x = geom.fourier().nodes();
            for k in 1..8 {
                let kf = k as f64;
                let phi: Vec<f64> = x.iter().map(|t| (kf * t).sin()).collect();
                let g = dno.apply(&phi).unwrap();
                let s = depth.symbol(kf);
                for (gi, t) in g.iter().zip(&x) {
                    assert!((gi - s * (kf * t).sin()).abs() < 1e-12, "depth {depth:?} k {k}");
                }
            }
            let g = dno.apply(&vec![2.5; m]).unwrap();
            assert!(g.iter().all(|v| v.abs() < 1e-12));
        }
    }

    #[test]
    fn shallow_flat_symbol_uses_refined_images() {
        let m = 128;
        let depth = Depth::Finite(0.05);
        let geom = flat(m, depth);
        assert!(image_oversampling(&geom) > 1);
        assert_eq!(image_oversampling(&flat(m, Depth::Infinite)), 1);
        assert_eq!(image_oversampling(&flat(m, Depth::Finite(1.0))), 1);
        let dno = Dno::new(geom.clone()).unwrap();
        let x = geom.fourier().nodes();
        for k in [1usize, 3, 10] {
            let kf = k as f64;
            let phi: Vec<f64> = x.iter().map(|t| (kf * t).cos()).collect();
            let g = dno.apply(&phi).unwrap();
            let s = depth.symbol(kf);
            let err = g.iter().zip(&x).map(|(gi, t)| (gi - s * (kf * t).cos()).abs()).fold(0.0, f64::max);
            assert!(err < 1e-11 * s, "k {k}: {err:e}");
        }
    }

    #[test]
    fn curved_surface_exact_deep() {
        // φ = e^{ky} cos kx is harmonic and decays at depth.
        let m = 128;
        let map = MeshMap::<f64>::new(2, 0.5).unwrap();
        let x = map.nodes(m);
        let eta: Vec<f64> = x.iter().map(|t| 0.1 * t.cos() + 0.03 * (2.0 * t).sin()).collect();
        let eta_x: Vec<f64> = x.iter().map(|t| -0.1 * t.sin() + 0.06 * (2.0 * t).cos()).collect();
        let geom = SurfaceGeometry::new(&map, &eta, Depth::Infinite).unwrap();
        let dno = Dno::new(geom).unwrap();
        let k = 2.0;
        let phi: Vec<f64> = x.iter().zip(&eta).map(|(t, e)| (k * e).exp() * (k * t).cos()).collect();
        let g = dno.apply(&phi).unwrap();
        for i in 0..m {
            let (t, e, ex) = (x[i], eta[i], eta_x[i]);
            let phi_y = k * (k * e).exp() * (k * t).cos();
            let phi_x = -k * (k * e).exp() * (k * t).sin();
            let exact = phi_y - ex * phi_x;
            assert!((g[i] - exact).abs() < 1e-11, "node {i}: {} vs {exact}", g[i]);
        }
    }

    #[test]
    fn curved_surface_exact_finite() {
        // φ = cosh(ky) cos kx has zero normal derivative on y = 0.
        let m = 128;
        let map = MeshMap::<f64>::new(-2, 0.6).unwrap();
        let x = map.nodes(m);
        let eta: Vec<f64> = x.iter().map(|t| 1.0 + 0.1 * t.cos()).collect();
        let eta_x: Vec<f64> = x.iter().map(|t| -0.1 * t.sin()).collect();
        let geom = SurfaceGeometry::new(&map, &eta, Depth::Finite(1.0)).unwrap();
        let dno = Dno::new(geom).unwrap();
        let k = 1.0;
        let phi: Vec<f64> = x.iter().zip(&eta).map(|(t, e)| (k * e).cosh() * (k * t).cos()).collect();
        let g = dno.apply(&phi).unwrap();
        for i in 0..m {
            let (t, e, ex) = (x[i], eta[i], eta_x[i]);
            let phi_y = k * (k * e).sinh() * (k * t).cos();
            let phi_x = -k * (k * e).cosh() * (k * t).sin();
            let exact = phi_y - ex * phi_x;
            assert!((g[i] - exact).abs() < 1e-11, "node {i}: {} vs {exact}", g[i]);
        }
    }

    #[test]
    fn velocities_on_flat_surface() {
        let geom = flat(32, Depth::Infinite);
        let x = geom.fourier().nodes();
        let phi: Vec<f64> = x.iter().map(|t| t.cos()).collect();
        let (u, v) = surface_velocities(&geom, &phi).unwrap();
        for i in 0..32 {
            assert!((u[i] + x[i].sin()).abs() < 1e-13);
            assert!((v[i] - x[i].cos()).abs() < 1e-13);
        }
        let (u, v) = surface_velocities(&geom, &[0.0; 32]).unwrap();
        assert!(u.iter().chain(&v).all(|w| *w == 0.0));
    }

    #[test]
    fn krylov_matches_direct() {
        let m = 64;
        let fo = Fourier::<f64>::new(m).unwrap();
        let eta: Vec<f64> = fo.nodes().iter().map(|a| 0.2 * a.cos()).collect();
        let phi: Vec<f64> = fo.nodes().iter().map(|a| (2.0 * a).sin() + 0.3 * a.cos()).collect();
        let geom = SurfaceGeometry::new(&MeshMap::uniform(), &eta, Depth::Infinite).unwrap();
        let a = Dno::new(geom.clone()).unwrap().apply(&phi).unwrap();
        let b = Dno::with_solver(geom, DipoleSolver::krylov()).unwrap().apply(&phi).unwrap();
        for (u, v) in a.iter().zip(&b) {
            assert!((u - v).abs() < 1e-11);
        }
    }

    #[test]
    fn batched_matches_single() {
        let m = 48;
        let fo = Fourier::<f64>::new(m).unwrap();
        let eta: Vec<f64> = fo.nodes().iter().map(|a| 0.15 * a.cos()).collect();
        let geom = SurfaceGeometry::new(&MeshMap::uniform(), &eta, Depth::Infinite).unwrap();
        let dno = Dno::new(geom).unwrap();
        let phis: Vec<Vec<f64>> =
            (1..5).map(|k| fo.nodes().iter().map(|a| (k as f64 * a + 0.3).sin()).collect()).collect();
        let many = dno.apply_many(&phis).unwrap();
        for (p, g) in phis.iter().zip(&many) {
            let one = dno.apply(p).unwrap();
            for (u, v) in one.iter().zip(g) {
                assert!((u - v).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn finite_depth_requires_positive_surface() {
        let eta = vec![-0.1; 32];
        assert!(SurfaceGeometry::new(&MeshMap::uniform(), &eta, Depth::Finite(1.0)).is_err());
        let _ = PI;
    }
}
