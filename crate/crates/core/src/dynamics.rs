//! Right-hand sides of the free-surface evolution and its linearization,
//! plus energy, crest acceleration and wave height diagnostics.

use rayon::prelude::*;

use crate::dno::{Depth, DipoleSolver, Dno, SurfaceGeometry};
use crate::error::{Error, Result};
use crate::num::{fabs, Real};
use crate::spectral::{Fourier, MeshMap};

/// Gravity, surface tension over density, and depth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysParams<T> {
    pub g: T,
    pub tension: T,
    pub depth: Depth<T>,
}

impl<T: Real> PhysParams<T> {
    pub fn deep() -> Self {
        Self { g: T::one(), tension: T::zero(), depth: Depth::Infinite }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.g > T::zero()) {
            return Err(Error::Config(format!("gravity {} must be positive", self.g)));
        }
        if !(self.tension >= T::zero()) {
            return Err(Error::Config(format!("surface tension {} must be non-negative", self.tension)));
        }
        if let Depth::Finite(h) = self.depth {
            if !(h > T::zero()) {
                return Err(Error::Config(format!("depth {h} must be positive")));
            }
        }
        Ok(())
    }

    /// Linear dispersion relation `ω_k = √(g k tanh kh)` without tension.
    pub fn omega(&self, k: T) -> T {
        (self.g * self.depth.symbol(k)).sqrt()
    }

    /// Linear frequency including surface tension.
    pub fn omega_capillary(&self, k: T) -> T {
        ((self.g + self.tension * k * k) * self.depth.symbol(k)).sqrt()
    }
}

/// Surface elevation and surface potential at the grid nodes `ξ(α_i)`.
///
/// The same type carries tangent perturbations `(η̇, φ̇)` and rates.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceState<T> {
    pub eta: Vec<T>,
    pub phi: Vec<T>,
}

impl<T: Real> SurfaceState<T> {
    pub fn new(eta: Vec<T>, phi: Vec<T>) -> Self {
        assert_eq!(eta.len(), phi.len(), "eta and phi lengths differ");
        Self { eta, phi }
    }

    pub fn zeros(m: usize) -> Self {
        Self { eta: vec![T::zero(); m], phi: vec![T::zero(); m] }
    }

    /// Flat rest state for the given depth.
    pub fn rest(m: usize, depth: Depth<T>) -> Self {
        Self { eta: vec![depth.mean_level(); m], phi: vec![T::zero(); m] }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.eta.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.eta.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.eta.iter().chain(&self.phi).all(|v| v.is_finite())
    }

    /// `self + s * other`.
    pub fn axpy(&self, s: T, other: &Self) -> Self {
        let f = |a: &[T], b: &[T]| a.iter().zip(b).map(|(&x, &y)| x + s * y).collect();
        Self { eta: f(&self.eta, &other.eta), phi: f(&self.phi, &other.phi) }
    }

    pub fn scale(&self, s: T) -> Self {
        Self { eta: self.eta.iter().map(|&x| x * s).collect(), phi: self.phi.iter().map(|&x| x * s).collect() }
    }

    pub fn max_abs_diff(&self, other: &Self) -> T {
        self.eta
            .iter()
            .zip(&other.eta)
            .chain(self.phi.iter().zip(&other.phi))
            .fold(T::zero(), |m, (&a, &b)| m.max(fabs(a - b)))
    }

    pub fn max_abs(&self) -> T {
        self.eta.iter().chain(&self.phi).fold(T::zero(), |m, &a| m.max(fabs(a)))
    }

    /// Applies the filter to both components.
    pub fn filtered(&self, fourier: &Fourier<T>) -> Self {
        Self { eta: fourier.filter36(&self.eta), phi: fourier.filter36(&self.phi) }
    }
}

/// Base-state quantities at one instant, shared by the nonlinear and
/// linearized right-hand sides.
#[derive(Debug, Clone)]
pub struct Frame<T: Real> {
    dno: Dno<T>,
    gphi: Vec<T>,
    u: Vec<T>,
    v: Vec<T>,
}

impl<T: Real> Frame<T> {
    pub fn new(q: &SurfaceState<T>, map: &MeshMap<T>, params: &PhysParams<T>, fourier: &Fourier<T>) -> Result<Self> {
        Self::with_solver(q, map, params, fourier, DipoleSolver::Direct)
    }

    pub fn with_solver(
        q: &SurfaceState<T>,
        map: &MeshMap<T>,
        params: &PhysParams<T>,
        fourier: &Fourier<T>,
        solver: DipoleSolver,
    ) -> Result<Self> {
        let geom = SurfaceGeometry::with_fourier(map, &q.eta, params.depth, fourier.clone())?;
        let dno = Dno::with_solver(geom, solver)?;
        let gphi = dno.apply(&q.phi)?;
        let (u, v) = dno.velocities_from(&q.phi, &gphi);
        Ok(Self { dno, gphi, u, v })
    }

    pub fn geometry(&self) -> &SurfaceGeometry<T> {
        self.dno.geometry()
    }

    pub fn dno(&self) -> &Dno<T> {
        &self.dno
    }

    pub fn gphi(&self) -> &[T] {
        &self.gphi
    }

    pub fn velocities(&self) -> (&[T], &[T]) {
        (&self.u, &self.v)
    }

    fn project(&self, mut f: Vec<T>) -> Vec<T> {
        let mean = self.geometry().x_mean(&f);
        for x in f.iter_mut() {
            *x = *x - mean;
        }
        f
    }

    /// Capillary term `∂_x(η_x/√(1+η_x²))`.
    fn curvature(&self) -> Vec<T> {
        let geom = self.geometry();
        let s: Vec<T> = geom.eta_x().iter().map(|&e| e / (T::one() + e * e).sqrt()).collect();
        geom.dx(&s)
    }

    /// Nonlinear rates `(η_t, φ_t)`.
    pub fn rate(&self, params: &PhysParams<T>) -> SurfaceState<T> {
        let geom = self.geometry();
        let half = T::lit(0.5);
        let eta_t = self.gphi.clone();
        let curv = if params.tension > T::zero() { Some(self.curvature()) } else { None };
        let bracket: Vec<T> = (0..geom.len())
            .map(|i| {
                let (u, v) = (self.u[i], self.v[i]);
                let mut b = v * eta_t[i] - half * (u * u + v * v) - params.g * geom.eta()[i];
                if let Some(c) = &curv {
                    b = b + params.tension * c[i];
                }
                b
            })
            .collect();
        SurfaceState { eta: eta_t, phi: self.project(bracket) }
    }

    /// Linearized rates for a batch of tangents; columns are independent.
    pub fn linear_rates(&self, params: &PhysParams<T>, tangents: &[SurfaceState<T>]) -> Result<Vec<SurfaceState<T>>> {
        let chunk = chunk_size(tangents.len());
        let parts: Vec<Result<Vec<SurfaceState<T>>>> =
            tangents.par_chunks(chunk).map(|cols| self.linear_rates_serial(params, cols)).collect();
        let mut out = Vec::with_capacity(tangents.len());
        for p in parts {
            out.extend(p?);
        }
        Ok(out)
    }

    fn linear_rates_serial(&self, params: &PhysParams<T>, tangents: &[SurfaceState<T>]) -> Result<Vec<SurfaceState<T>>> {
        let geom = self.geometry();
        let m = geom.len();
        let psis: Vec<Vec<T>> =
            tangents.iter().map(|t| (0..m).map(|i| t.phi[i] - self.v[i] * t.eta[i]).collect()).collect();
        let gpsis = self.dno.apply_many(&psis)?;
        let stiff: Option<Vec<T>> = if params.tension > T::zero() {
            Some(geom.eta_x().iter().map(|&e| T::one() / (T::one() + e * e).powf(T::lit(1.5))).collect())
        } else {
            None
        };
        Ok(tangents
            .iter()
            .zip(psis.iter().zip(&gpsis))
            .map(|(t, (psi, gpsi))| {
                let eu: Vec<T> = (0..m).map(|i| t.eta[i] * self.u[i]).collect();
                let euv: Vec<T> = (0..m).map(|i| eu[i] * self.v[i]).collect();
                let d_eu = geom.dx(&eu);
                let d_euv = geom.dx(&euv);
                let d_psi = geom.dx(psi);
                let eta_t: Vec<T> = (0..m).map(|i| gpsi[i] - d_eu[i]).collect();
                let mut bracket: Vec<T> = (0..m)
                    .map(|i| -d_euv[i] - self.u[i] * d_psi[i] + self.v[i] * gpsi[i] - params.g * t.eta[i])
                    .collect();
                if let Some(w) = &stiff {
                    let ex = geom.dx(&t.eta);
                    let flux: Vec<T> = ex.iter().zip(w).map(|(&a, &b)| a * b).collect();
                    for (b, c) in bracket.iter_mut().zip(geom.dx(&flux)) {
                        *b = *b + params.tension * c;
                    }
                }
                SurfaceState { eta: eta_t, phi: self.project(bracket) }
            })
            .collect())
    }
}

fn chunk_size(n: usize) -> usize {
    let threads = rayon::current_num_threads().max(1);
    n.div_ceil(threads).max(1)
}

/// Nonlinear right-hand side.
pub fn rhs_nonlinear<T: Real>(q: &SurfaceState<T>, params: &PhysParams<T>, map: &MeshMap<T>) -> Result<SurfaceState<T>> {
    let fourier = Fourier::new(q.len())?;
    Ok(Frame::new(q, map, params, &fourier)?.rate(params))
}

/// Linearized right-hand side about `q` applied to one tangent.
pub fn rhs_linearized<T: Real>(
    q: &SurfaceState<T>,
    tangent: &SurfaceState<T>,
    params: &PhysParams<T>,
    map: &MeshMap<T>,
) -> Result<SurfaceState<T>> {
    let fourier = Fourier::new(q.len())?;
    let frame = Frame::new(q, map, params, &fourier)?;
    Ok(frame.linear_rates(params, std::slice::from_ref(tangent))?.remove(0))
}

/// Hamiltonian `∫ ½φGφ + ½g(η-h)² + σ(√(1+η_x²)-1) dx`.
pub fn energy<T: Real>(q: &SurfaceState<T>, params: &PhysParams<T>, map: &MeshMap<T>) -> Result<T> {
    let fourier = Fourier::new(q.len())?;
    let frame = Frame::new(q, map, params, &fourier)?;
    let geom = frame.geometry();
    let level = params.depth.mean_level();
    let half = T::lit(0.5);
    let mut acc = T::zero();
    for i in 0..q.len() {
        let e = q.eta[i] - level;
        let ex = geom.eta_x()[i];
        let density = half * q.phi[i] * frame.gphi[i]
            + half * params.g * e * e
            + params.tension * ((T::one() + ex * ex).sqrt() - T::one());
        acc = acc + density * geom.xi_prime()[i];
    }
    Ok(acc * T::two_pi() / T::idx(q.len()))
}

/// Downward crest acceleration relative to gravity for a state at rest.
pub fn crest_acceleration<T: Real>(q: &SurfaceState<T>, params: &PhysParams<T>, map: &MeshMap<T>) -> Result<T> {
    let max_phi = q.phi.iter().fold(T::zero(), |m, &p| m.max(fabs(p)));
    if max_phi > T::lit(1e-10) {
        return Err(Error::NotAtRest { max_phi: max_phi.to_f64_lossy() });
    }
    let rest = SurfaceState { eta: q.eta.clone(), phi: vec![T::zero(); q.len()] };
    let fourier = Fourier::new(q.len())?;
    let frame = Frame::new(&rest, map, params, &fourier)?;
    let phi_t = frame.rate(params).phi;
    let eta_tt = frame.dno().apply(&phi_t)?;
    let crest = argmax(&q.eta);
    Ok(-eta_tt[crest] / params.g)
}

/// Crest-to-trough height and its half.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaveHeight<T> {
    pub full: T,
    pub half: T,
}

pub fn wave_height<T: Real>(q: &SurfaceState<T>) -> WaveHeight<T> {
    let hi = q.eta.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
    let lo = q.eta.iter().fold(T::infinity(), |m, &v| m.min(v));
    WaveHeight { full: hi - lo, half: (hi - lo) / T::lit(2.0) }
}

fn argmax<T: Real>(f: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in f.iter().enumerate() {
        if v > f[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn nodes(m: usize) -> Vec<f64> {
        Fourier::<f64>::new(m).unwrap().nodes()
    }

    #[test]
    fn rest_state_is_equilibrium() {
        for depth in [Depth::Infinite, Depth::Finite(0.7)] {
            let p = PhysParams { g: 1.0, tension: 0.01, depth };
            let r = rhs_nonlinear(&SurfaceState::rest(32, depth), &p, &MeshMap::uniform()).unwrap();
            assert!(r.max_abs() < 1e-14);
        }
    }

    #[test]
    fn small_elevation_accelerates_potential() {
        let m = 32;
        let eps = 1e-6;
        let x = nodes(m);
        let q = SurfaceState::new(x.iter().map(|t| eps * t.cos()).collect(), vec![0.0; m]);
        let r = rhs_nonlinear(&q, &PhysParams::deep(), &MeshMap::uniform()).unwrap();
        for i in 0..m {
            assert!((r.phi[i] + eps * x[i].cos()).abs() < 1e-11);
            assert!(r.eta[i].abs() < 1e-11);
        }
    }

    #[test]
    fn capillary_term_leading_order() {
        let m = 256;
        let a = 1e-4;
        let sigma = 0.000625;
        let x = nodes(m);
        let q = SurfaceState::new(x.iter().map(|t| a * (40.0 * t).cos()).collect(), vec![0.0; m]);
        let p = PhysParams { g: 1.0, tension: sigma, depth: Depth::Infinite };
        let r = rhs_nonlinear(&q, &p, &MeshMap::uniform()).unwrap();
        for i in 0..m {
            let lead = -sigma * 1600.0 * a * (40.0 * x[i]).cos();
            let capillary = r.phi[i] + q.eta[i];
            assert!((capillary - lead).abs() < 1e-3 * a);
        }
    }

    #[test]
    fn linearization_about_rest() {
        let m = 32;
        let x = nodes(m);
        let p = PhysParams { g: 2.0, tension: 0.0, depth: Depth::Finite(1.0) };
        let k = 3.0;
        let tan = SurfaceState::new(x.iter().map(|t| (k * t).cos()).collect(), vec![0.0; m]);
        let r = rhs_linearized(&SurfaceState::rest(m, p.depth), &tan, &p, &MeshMap::uniform()).unwrap();
        for i in 0..m {
            assert!(r.eta[i].abs() < 1e-13);
            assert!((r.phi[i] + 2.0 * (k * x[i]).cos()).abs() < 1e-13);
        }
        let zero = rhs_linearized(&SurfaceState::rest(m, p.depth), &SurfaceState::zeros(m), &p, &MeshMap::uniform())
            .unwrap();
        assert_eq!(zero.max_abs(), 0.0);
    }

    fn check_finite_difference(params: PhysParams<f64>, map: MeshMap<f64>) {
        let m = 64;
        let x = map.nodes(m);
        let level = params.depth.mean_level();
        let q = SurfaceState::new(
            x.iter().map(|t| level + 0.08 * t.cos() + 0.02 * (2.0 * t).sin()).collect(),
            x.iter().map(|t| 0.1 * t.sin() - 0.03 * (3.0 * t).cos()).collect(),
        );
        let dq = SurfaceState::new(
            x.iter().map(|t| (2.0 * t).cos() + 0.3 * t.sin()).collect(),
            x.iter().map(|t| 0.5 * (3.0 * t).sin() - 0.2 * t.cos()).collect(),
        );
        let lin = rhs_linearized(&q, &dq, &params, &map).unwrap();
        let mut errs = Vec::new();
        for eps in [1e-3, 1e-4] {
            let plus = rhs_nonlinear(&q.axpy(eps, &dq), &params, &map).unwrap();
            let minus = rhs_nonlinear(&q.axpy(-eps, &dq), &params, &map).unwrap();
            let fd = plus.axpy(-1.0, &minus).scale(0.5 / eps);
            errs.push(fd.max_abs_diff(&lin));
        }
        let slope = (errs[0] / errs[1]).log10();
        assert!(slope >= 1.9, "errors {errs:?}");
    }

    #[test]
    fn linearization_matches_centered_differences_deep() {
        check_finite_difference(PhysParams::deep(), MeshMap::uniform());
    }

    #[test]
    fn linearization_matches_centered_differences_finite_capillary() {
        check_finite_difference(
            PhysParams { g: 1.0, tension: 0.05, depth: Depth::Finite(0.8) },
            MeshMap::new(2, 0.6).unwrap(),
        );
    }

    #[test]
    fn potential_rate_has_zero_mean_and_mass_is_conserved() {
        let m = 64;
        let map = MeshMap::<f64>::new(-2, 0.5).unwrap();
        let x = map.nodes(m);
        let q = SurfaceState::new(
            x.iter().map(|t| 0.1 * t.cos() + 0.05 * (2.0 * t).cos()).collect(),
            x.iter().map(|t| 0.2 * t.sin()).collect(),
        );
        let p = PhysParams { g: 1.0, tension: 0.01, depth: Depth::Infinite };
        let fo = Fourier::new(m).unwrap();
        let frame = Frame::new(&q, &map, &p, &fo).unwrap();
        let r = frame.rate(&p);
        assert!(frame.geometry().x_mean(&r.phi).abs() < 1e-14);
        assert!(frame.geometry().x_mean(&r.eta).abs() < 1e-11);
    }

    #[test]
    fn shift_by_half_period_commutes() {
        let m = 64;
        let x = nodes(m);
        let q = SurfaceState::new(
            x.iter().map(|t| 0.1 * t.cos() + 0.04 * (3.0 * t).sin()).collect(),
            x.iter().map(|t| 0.2 * t.sin() + 0.05 * (2.0 * t).cos()).collect(),
        );
        let shift = |s: &SurfaceState<f64>| {
            let rot = |f: &[f64]| (0..m).map(|i| f[(i + m / 2) % m]).collect::<Vec<_>>();
            SurfaceState::new(rot(&s.eta), rot(&s.phi))
        };
        let p = PhysParams::deep();
        let a = shift(&rhs_nonlinear(&q, &p, &MeshMap::uniform()).unwrap());
        let b = rhs_nonlinear(&shift(&q), &p, &MeshMap::uniform()).unwrap();
        assert!(a.max_abs_diff(&b) < 1e-12);
    }

    #[test]
    fn energy_scales_quadratically() {
        let m = 64;
        let x = nodes(m);
        let p = PhysParams::deep();
        let e = |a: f64| {
            let q = SurfaceState::new(x.iter().map(|t| a * t.cos()).collect(), vec![0.0; m]);
            energy(&q, &p, &MeshMap::uniform()).unwrap()
        };
        assert!(energy(&SurfaceState::rest(m, Depth::Infinite), &p, &MeshMap::uniform()).unwrap().abs() < 1e-300);
        assert!(e(1e-3) > 0.0);
        assert!((e(2e-4) / e(1e-4) - 4.0).abs() < 1e-10);
        assert!((e(1e-3) - std::f64::consts::PI / 2.0 * 1e-6).abs() < 1e-18);
    }

    #[test]
    fn crest_acceleration_linear_limit() {
        let m = 64;
        let x = nodes(m);
        let p = PhysParams::deep();
        assert_eq!(
            crest_acceleration(&SurfaceState::rest(m, Depth::Infinite), &p, &MeshMap::uniform()).unwrap(),
            0.0
        );
        for a in [1e-3, 1e-4] {
            let q = SurfaceState::new(x.iter().map(|t| a * t.cos()).collect(), vec![0.0; m]);
            let ac = crest_acceleration(&q, &p, &MeshMap::uniform()).unwrap();
            assert!((ac - a).abs() < 2.0 * a * a);
        }
        let moving = SurfaceState::new(vec![0.0; m], vec![1e-3; m]);
        assert!(crest_acceleration(&moving, &p, &MeshMap::uniform()).is_err());
    }

    #[test]
    fn wave_height_conventions() {
        let x = nodes(32);
        let q = SurfaceState::new(x.iter().map(|t| 0.3 * t.cos()).collect(), vec![0.0; 32]);
        let h = wave_height(&q);
        assert!((h.full - 0.6).abs() < 1e-15);
        assert!((h.half - 0.3).abs() < 1e-15);
    }
}
