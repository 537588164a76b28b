//! Periodic spectral utilities on equispaced grids over `[0, 2π)`.
//!
//! Fields are stored as nodal values `f(α_i)`, `α_i = 2πi/M`. Fourier
//! coefficients use the normalization `f̂_k = (1/M) Σ_i f(α_i) e^{-ikα_i}`,
//! so a field `2c cos(kx)` has `f̂_k = c`. Only `k = 0..=M/2` is stored.

use std::sync::Arc;

use num_complex::Complex;
use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};

use crate::error::{Error, Result};
use crate::num::{fabs, Real};

/// Cached real FFT plans for one grid size.
#[derive(Clone)]
pub struct Fourier<T: Real> {
    m: usize,
    r2c: Arc<dyn RealToComplex<T>>,
    c2r: Arc<dyn ComplexToReal<T>>,
}

impl<T: Real> std::fmt::Debug for Fourier<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Fourier").field("m", &self.m).finish()
    }
}

impl<T: Real> Fourier<T> {
    pub fn new(m: usize) -> Result<Self> {
        if m < 16 || m % 2 != 0 {
            return Err(Error::Config(format!("grid size {m} must be even and at least 16")));
        }
        let mut planner = RealFftPlanner::<T>::new();
        Ok(Self { m, r2c: planner.plan_fft_forward(m), c2r: planner.plan_fft_inverse(m) })
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.m
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.m == 0
    }

    /// Highest stored wave number, `M/2`.
    #[inline]
    pub fn nyquist(&self) -> usize {
        self.m / 2
    }

    /// Parameter nodes `α_i = 2πi/M`.
    pub fn nodes(&self) -> Vec<T> {
        (0..self.m).map(|i| T::two_pi() * T::idx(i) / T::idx(self.m)).collect()
    }

    /// Nodal values to normalized coefficients `f̂_0..=f̂_{M/2}`.
    pub fn forward(&self, f: &[T]) -> Vec<Complex<T>> {
        assert_eq!(f.len(), self.m, "field length does not match grid");
        let mut input = f.to_vec();
        let mut out = self.r2c.make_output_vec();
        self.r2c.process(&mut input, &mut out).expect("forward transform");
        let scale = T::one() / T::idx(self.m);
        for c in out.iter_mut() {
            *c = *c * scale;
        }
        let last = out.len() - 1;
        out[0].im = T::zero();
        out[last].im = T::zero();
        out
    }

    /// Normalized coefficients back to nodal values.
    pub fn inverse(&self, coeffs: &[Complex<T>]) -> Vec<T> {
        assert_eq!(coeffs.len(), self.m / 2 + 1, "coefficient length does not match grid");
        let mut input = coeffs.to_vec();
        let last = input.len() - 1;
        input[0].im = T::zero();
        input[last].im = T::zero();
        let mut out = self.c2r.make_output_vec();
        self.c2r.process(&mut input, &mut out).expect("inverse transform");
        out
    }

    /// Applies the Fourier multiplier `symbol(k)` for `k = 0..=M/2`.
    pub fn multiply<F>(&self, f: &[T], symbol: F) -> Vec<T>
    where
        F: Fn(usize) -> Complex<T>,
    {
        let mut c = self.forward(f);
        for (k, ck) in c.iter_mut().enumerate() {
            *ck = *ck * symbol(k);
        }
        self.inverse(&c)
    }

    /// Spectral `d/dα`; the Nyquist mode is dropped.
    pub fn derivative(&self, f: &[T]) -> Vec<T> {
        let nyq = self.nyquist();
        self.multiply(f, |k| if k == nyq { Complex::new(T::zero(), T::zero()) } else { Complex::new(T::zero(), T::idx(k)) })
    }

    /// Hilbert transform with symbol `-i sgn(k)`.
    pub fn hilbert(&self, f: &[T]) -> Vec<T> {
        self.multiply(f, |k| if k == 0 { Complex::new(T::zero(), T::zero()) } else { Complex::new(T::zero(), -T::one()) })
    }

    /// Filter factor `exp(-36 (k/k_max)^36)` with `k_max = M/2`.
    #[inline]
    pub fn filter_factor(&self, k: usize) -> T {
        let r = T::idx(k) / T::idx(self.nyquist());
        (-T::lit(36.0) * r.powi(36)).exp()
    }

    /// 36th-order exponential filter.
    pub fn filter36(&self, f: &[T]) -> Vec<T> {
        self.multiply(f, |k| Complex::new(self.filter_factor(k), T::zero()))
    }

    /// Filter followed by differentiation, in one transform pair.
    pub fn filtered_derivative(&self, f: &[T]) -> Vec<T> {
        let nyq = self.nyquist();
        self.multiply(f, |k| {
            if k == nyq {
                Complex::new(T::zero(), T::zero())
            } else {
                Complex::new(T::zero(), T::idx(k) * self.filter_factor(k))
            }
        })
    }

    /// Plain arithmetic mean over the nodes.
    pub fn mean(&self, f: &[T]) -> T {
        f.iter().copied().sum::<T>() / T::idx(self.m)
    }

    /// Evaluates the trigonometric interpolant of the nodal data at `beta`.
    pub fn interpolate(&self, coeffs: &[Complex<T>], beta: T) -> T {
        let nyq = self.nyquist();
        let mut acc = coeffs[0].re;
        let two = T::lit(2.0);
        for (k, c) in coeffs.iter().enumerate().take(nyq).skip(1) {
            let (s, co) = (T::idx(k) * beta).sin_cos();
            acc = acc + two * (c.re * co - c.im * s);
        }
        acc + coeffs[nyq].re * (T::idx(nyq) * beta).cos()
    }
}

/// Spectral derivative of a field (convenience wrapper that plans a transform).
pub fn derivative<T: Real>(f: &[T]) -> Result<Vec<T>> {
    Ok(Fourier::new(f.len())?.derivative(f))
}

/// Hilbert transform of a field (convenience wrapper that plans a transform).
pub fn hilbert<T: Real>(f: &[T]) -> Result<Vec<T>> {
    Ok(Fourier::new(f.len())?.hilbert(f))
}

/// 36th-order filter of a field (convenience wrapper that plans a transform).
pub fn filter36<T: Real>(f: &[T]) -> Result<Vec<T>> {
    Ok(Fourier::new(f.len())?.filter36(f))
}

/// Graded mesh map `x = ξ(α)` with density `E(α) = ξ'(α)`.
///
/// `kappa > 0` concentrates nodes near `x = π`, `kappa < 0` near `x = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct MeshMap<T: Real> {
    kappa: i32,
    rho: T,
    amp: T,
    /// Cosine coefficients of `E - 1`, scaled so `E = 1 - amp Σ b_m cos(mα)`.
    b: Vec<T>,
}

fn binomial(n: u32, k: u32) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * f64::from(n - i) / f64::from(i + 1))
}

impl<T: Real> MeshMap<T> {
    pub fn uniform() -> Self {
        Self { kappa: 0, rho: T::one(), amp: T::zero(), b: Vec::new() }
    }

    pub fn new(kappa: i32, rho: T) -> Result<Self> {
        if !(rho > T::zero() && rho <= T::one()) {
            return Err(Error::Config(format!("mesh ratio {rho} must lie in (0, 1]")));
        }
        if kappa == 0 {
            return Ok(Self::uniform());
        }
        let n = kappa.unsigned_abs();
        let quarter_pow = 0.25f64.powi(n as i32);
        let mu = binomial(2 * n, n) * quarter_pow;
        let r = rho.to_f64_lossy();
        let amp = (1.0 - r) / (1.0 - mu * (1.0 - r));
        let b = (1..=n)
            .map(|m| {
                let sign = if kappa > 0 && m % 2 == 1 { -1.0 } else { 1.0 };
                T::lit(sign * 2.0 * binomial(2 * n, n - m) * quarter_pow)
            })
            .collect();
        Ok(Self { kappa, rho, amp: T::lit(amp), b })
    }

    #[inline]
    pub fn kappa(&self) -> i32 {
        self.kappa
    }

    #[inline]
    pub fn rho(&self) -> T {
        self.rho
    }

    /// Normalization constant `μ = (2|κ|-1)!!/(2|κ|)!!`.
    pub fn mu(&self) -> T {
        let n = self.kappa.unsigned_abs();
        T::lit(binomial(2 * n, n) * 0.25f64.powi(n as i32))
    }

    /// Amplitude `A = (1-ρ)/(1-μ(1-ρ))`.
    #[inline]
    pub fn amplitude(&self) -> T {
        self.amp
    }

    #[inline]
    pub fn is_identity(&self) -> bool {
        self.kappa == 0 || self.amp == T::zero()
    }

    /// Grid density `E(α) = ξ'(α)`.
    pub fn density(&self, alpha: T) -> T {
        let mut s = T::zero();
        for (i, &bm) in self.b.iter().enumerate() {
            s = s + bm * (T::idx(i + 1) * alpha).cos();
        }
        T::one() - self.amp * s
    }

    /// `ξ''(α)`.
    pub fn density_derivative(&self, alpha: T) -> T {
        let mut s = T::zero();
        for (i, &bm) in self.b.iter().enumerate() {
            let m = T::idx(i + 1);
            s = s + bm * m * (m * alpha).sin();
        }
        self.amp * s
    }

    /// `ξ(α)` in closed form.
    pub fn xi(&self, alpha: T) -> T {
        let mut s = T::zero();
        for (i, &bm) in self.b.iter().enumerate() {
            let m = T::idx(i + 1);
            s = s + bm * (m * alpha).sin() / m;
        }
        alpha - self.amp * s
    }

    /// Physical node positions `ξ(α_i)` for an `m`-point grid.
    pub fn nodes(&self, m: usize) -> Vec<T> {
        (0..m).map(|i| self.xi(T::two_pi() * T::idx(i) / T::idx(m))).collect()
    }

    /// Densities `ξ'(α_i)` for an `m`-point grid.
    pub fn densities(&self, m: usize) -> Vec<T> {
        (0..m).map(|i| self.density(T::two_pi() * T::idx(i) / T::idx(m))).collect()
    }

    /// Solves `ξ(β) = x` for `β ∈ [0, 2π]` by safeguarded Newton iteration.
    pub fn invert(&self, x: T) -> Option<T> {
        if self.is_identity() {
            return Some(x);
        }
        let tol = T::lit(1e-14).max(T::epsilon() * T::lit(16.0));
        let (mut lo, mut hi) = (T::zero(), T::two_pi());
        let mut beta = x;
        for _ in 0..50 {
            let resid = self.xi(beta) - x;
            if fabs(resid) <= tol {
                return Some(beta);
            }
            if resid > T::zero() {
                hi = hi.min(beta);
            } else {
                lo = lo.max(beta);
            }
            let step = beta - resid / self.density(beta);
            beta = if step > lo && step < hi { step } else { (lo + hi) / T::lit(2.0) };
        }
        None
    }
}

impl<T: Real> Default for MeshMap<T> {
    fn default() -> Self {
        Self::uniform()
    }
}

/// Resamples a field from the `from` grid onto an `m_new`-point `to` grid.
pub fn regrid<T: Real>(f: &[T], from: &MeshMap<T>, to: &MeshMap<T>, m_new: usize) -> Result<Vec<T>> {
    let src = Fourier::new(f.len())?;
    if from == to && m_new == f.len() {
        return Ok(f.to_vec());
    }
    let coeffs = src.forward(f);
    let mut out = Vec::with_capacity(m_new);
    for j in 0..m_new {
        let x = to.xi(T::two_pi() * T::idx(j) / T::idx(m_new));
        let beta = from.invert(x).ok_or(Error::Regrid { node: j })?;
        out.push(src.interpolate(&coeffs, beta));
    }
    Ok(out)
}

/// One time segment of a [`MeshSchedule`].
#[derive(Debug, Clone, PartialEq)]
pub struct Segment<T: Real> {
    /// Relative duration; all segments sum to one.
    pub theta: T,
    pub steps: usize,
    pub m: usize,
    pub map: MeshMap<T>,
}

/// Piecewise space-time discretization of a time horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct MeshSchedule<T: Real> {
    segments: Vec<Segment<T>>,
}

impl<T: Real> MeshSchedule<T> {
    pub fn new(segments: Vec<Segment<T>>) -> Result<Self> {
        if segments.is_empty() {
            return Err(Error::Config("schedule has no segments".into()));
        }
        let mut total = T::zero();
        for (l, s) in segments.iter().enumerate() {
            if !(s.theta > T::zero()) {
                return Err(Error::Config(format!("segment {l}: theta must be positive")));
            }
            if s.steps == 0 {
                return Err(Error::Config(format!("segment {l}: step count must be positive")));
            }
            if s.m < 16 || s.m % 2 != 0 {
                return Err(Error::Config(format!("segment {l}: grid size {} must be even and at least 16", s.m)));
            }
            total = total + s.theta;
        }
        let tol = T::lit(1e-14).max(T::epsilon() * T::idx(4 * segments.len()));
        if fabs(total - T::one()) > tol {
            return Err(Error::Config(format!("segment durations sum to {total}, not 1")));
        }
        Ok(Self { segments })
    }

    /// Single uniform segment.
    pub fn uniform(m: usize, steps: usize) -> Result<Self> {
        Self::new(vec![Segment { theta: T::one(), steps, m, map: MeshMap::uniform() }])
    }

    #[inline]
    pub fn segments(&self) -> &[Segment<T>] {
        &self.segments
    }

    pub fn first(&self) -> &Segment<T> {
        &self.segments[0]
    }

    pub fn last(&self) -> &Segment<T> {
        &self.segments[self.segments.len() - 1]
    }

    pub fn total_steps(&self) -> usize {
        self.segments.iter().map(|s| s.steps).sum()
    }
}
