//! Fixed-step explicit Runge–Kutta integration over a mesh schedule, for
//! the nonlinear surface equations and batches of tangent perturbations.
//!
//! Tangents are advanced with the derivative of the discrete base map: each
//! stage linearizes about the base stage state, and the per-step filter
//! and segment regridding are applied to them as well.

use crate::dno::DipoleSolver;
use crate::dynamics::{Frame, PhysParams, SurfaceState};
use crate::error::{Error, Result};
use crate::num::Real;
use crate::spectral::{regrid, Fourier, MeshMap, MeshSchedule};

/// Runge–Kutta scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scheme {
    /// Dormand–Prince 5(4), propagating the fifth-order solution.
    Rk5,
    /// Dormand–Prince 8(5,3), propagating the eighth-order solution.
    Rk8,
}

impl Scheme {
    pub fn stages(self) -> usize {
        match self {
            Scheme::Rk5 => 6,
            Scheme::Rk8 => 12,
        }
    }

    pub fn order(self) -> usize {
        match self {
            Scheme::Rk5 => 5,
            Scheme::Rk8 => 8,
        }
    }

    fn a(self, i: usize, j: usize) -> f64 {
        match self {
            Scheme::Rk5 => RK5_A[i][j],
            Scheme::Rk8 => RK8_A[i][j],
        }
    }

    fn b(self, i: usize) -> f64 {
        match self {
            Scheme::Rk5 => RK5_B[i],
            Scheme::Rk8 => RK8_B[i],
        }
    }
}

impl std::str::FromStr for Scheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rk5" | "5" => Ok(Scheme::Rk5),
            "rk8" | "8" => Ok(Scheme::Rk8),
            other => Err(Error::Config(format!("unknown scheme '{other}'"))),
        }
    }
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Scheme::Rk5 => write!(f, "rk5"),
            Scheme::Rk8 => write!(f, "rk8"),
        }
    }
}

const RK5_A: [[f64; 6]; 6] = [
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
];
const RK5_B: [f64; 6] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0];

#[allow(clippy::excessive_precision)]
const RK8_A: [[f64; 12]; 12] = [
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [5.26001519587677318785587544488e-2, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [1.97250569845378994544595329183e-2, 5.91751709536136983633785987549e-2, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [2.95875854768068491816892993775e-2, 0.0, 8.87627564304205475450678981324e-2, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [2.41365134159266685502369798665e-1, 0.0, -8.84549479328286085344864962717e-1, 9.24834003261792003115737966543e-1, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.7037037037037037037037037037e-2, 0.0, 0.0, 1.70828608729473871279604482173e-1, 1.25467687566822425016691814123e-1, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.7109375e-2, 0.0, 0.0, 1.70252211019544039314978060272e-1, 6.02165389804559606850219397283e-2, -1.7578125e-2, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.70920001185047927108779319836e-2, 0.0, 0.0, 1.70383925712239993810214054705e-1, 1.07262030446373284651809199168e-1, -1.53194377486244017527936158236e-2, 8.27378916381402288758473766002e-3, 0.0, 0.0, 0.0, 0.0, 0.0],
    [6.24110958716075717114429577812e-1, 0.0, 0.0, -3.36089262944694129406857109825, -8.68219346841726006818189891453e-1, 2.75920996994467083049415600797e1, 2.01540675504778934086186788979e1, -4.34898841810699588477366255144e1, 0.0, 0.0, 0.0, 0.0],
    [4.77662536438264365890433908527e-1, 0.0, 0.0, -2.48811461997166764192642586468, -5.90290826836842996371446475743e-1, 2.12300514481811942347288949897e1, 1.52792336328824235832596922938e1, -3.32882109689848629194453265587e1, -2.03312017085086261358222928593e-2, 0.0, 0.0, 0.0],
    [-9.3714243008598732571704021658e-1, 0.0, 0.0, 5.18637242884406370830023853209, 1.09143734899672957818500254654, -8.14978701074692612513997267357, -1.85200656599969598641566180701e1, 2.27394870993505042818970056734e1, 2.49360555267965238987089396762, -3.0467644718982195003823669022, 0.0, 0.0],
    [2.27331014751653820792359768449, 0.0, 0.0, -1.05344954667372501984066689879e1, -2.00087205822486249909675718444, -1.79589318631187989172765950534e1, 2.79488845294199600508499808837e1, -2.85899827713502369474065508674, -8.87285693353062954433549289258, 1.23605671757943030647266201528e1, 6.43392746015763530355970484046e-1, 0.0],
];
#[allow(clippy::excessive_precision)]
const RK8_B: [f64; 12] = [5.42937341165687622380535766363e-2, 0.0, 0.0, 0.0, 0.0, 4.45031289275240888144113950566, 1.89151789931450038304281599044, -5.8012039600105847814672114227, 3.1116436695781989440891606237e-1, -1.52160949662516078556178806805e-1, 2.01365400804030348374776537501e-1, 4.47106157277725905176885569043e-2];

/// Integrator settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvolveOptions {
    pub scheme: Scheme,
    /// Keep every base stage state so tangents can be replayed later.
    pub store_stages: bool,
    pub solver: DipoleSolver,
}

impl EvolveOptions {
    pub fn new(scheme: Scheme) -> Self {
        Self { scheme, store_stages: false, solver: DipoleSolver::Direct }
    }
}

/// Solution at the start of a segment, or at the end of the horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint<T: Real> {
    pub t: T,
    pub state: SurfaceState<T>,
    pub map: MeshMap<T>,
}

/// Result of a nonlinear evolution.
#[derive(Debug, Clone)]
pub struct Trajectory<T: Real> {
    pub options: EvolveOptions,
    pub horizon: T,
    pub schedule: MeshSchedule<T>,
    /// One checkpoint per segment start, followed by the final state.
    pub checkpoints: Vec<Checkpoint<T>>,
    stages: Option<Vec<Vec<SurfaceState<T>>>>,
}

impl<T: Real> Trajectory<T> {
    pub fn initial(&self) -> &Checkpoint<T> {
        &self.checkpoints[0]
    }

    pub fn last(&self) -> &Checkpoint<T> {
        &self.checkpoints[self.checkpoints.len() - 1]
    }

    pub fn final_state(&self) -> &SurfaceState<T> {
        &self.last().state
    }

    pub fn has_stages(&self) -> bool {
        self.stages.is_some()
    }
}

fn combine<T: Real>(base: &SurfaceState<T>, dt: T, weights: &[(T, &SurfaceState<T>)]) -> SurfaceState<T> {
    let mut out = base.clone();
    for &(w, k) in weights {
        if w == T::zero() {
            continue;
        }
        let s = dt * w;
        for (o, &x) in out.eta.iter_mut().zip(&k.eta) {
            *o = *o + s * x;
        }
        for (o, &x) in out.phi.iter_mut().zip(&k.phi) {
            *o = *o + s * x;
        }
    }
    out
}

struct Stepper<'a, T: Real> {
    scheme: Scheme,
    params: &'a PhysParams<T>,
    solver: DipoleSolver,
}

impl<T: Real> Stepper<'_, T> {
    /// One step. With `replay`, base stage states are taken from storage and
    /// the base itself is not advanced.
    #[allow(clippy::too_many_arguments)]
    fn step(
        &self,
        y: Option<&SurfaceState<T>>,
        tangents: &mut [SurfaceState<T>],
        dt: T,
        map: &MeshMap<T>,
        fourier: &Fourier<T>,
        replay: Option<&[SurfaceState<T>]>,
        record: Option<&mut Vec<SurfaceState<T>>>,
    ) -> Result<Option<SurfaceState<T>>> {
        let s = self.scheme.stages();
        let mut k: Vec<SurfaceState<T>> = Vec::with_capacity(s);
        let mut kt: Vec<Vec<SurfaceState<T>>> = Vec::with_capacity(s);
        let mut recorded = Vec::new();
        for i in 0..s {
            let yi = match replay {
                Some(r) => r[i].clone(),
                None => {
                    let y = y.expect("base state required without replay");
                    let w: Vec<(T, &SurfaceState<T>)> =
                        (0..i).map(|j| (T::lit(self.scheme.a(i, j)), &k[j])).collect();
                    combine(y, dt, &w)
                }
            };
            let frame = Frame::with_solver(&yi, map, self.params, fourier, self.solver)?;
            if replay.is_none() {
                k.push(frame.rate(self.params));
            }
            if !tangents.is_empty() {
                let stage_tangents: Vec<SurfaceState<T>> = tangents
                    .iter()
                    .enumerate()
                    .map(|(c, t)| {
                        let w: Vec<(T, &SurfaceState<T>)> =
                            (0..i).map(|j| (T::lit(self.scheme.a(i, j)), &kt[j][c])).collect();
                        combine(t, dt, &w)
                    })
                    .collect();
                kt.push(frame.linear_rates(self.params, &stage_tangents)?);
            }
            if record.is_some() {
                recorded.push(yi);
            }
        }
        if let Some(r) = record {
            *r = recorded;
        }
        for (c, t) in tangents.iter_mut().enumerate() {
            let w: Vec<(T, &SurfaceState<T>)> = (0..s).map(|i| (T::lit(self.scheme.b(i)), &kt[i][c])).collect();
            *t = combine(t, dt, &w).filtered(fourier);
        }
        Ok(match replay {
            Some(_) => None,
            None => {
                let y = y.expect("base state required without replay");
                let w: Vec<(T, &SurfaceState<T>)> = (0..s).map(|i| (T::lit(self.scheme.b(i)), &k[i])).collect();
                Some(combine(y, dt, &w).filtered(fourier))
            }
        })
    }
}

fn regrid_state<T: Real>(q: &SurfaceState<T>, from: &MeshMap<T>, to: &MeshMap<T>, m: usize) -> Result<SurfaceState<T>> {
    Ok(SurfaceState { eta: regrid(&q.eta, from, to, m)?, phi: regrid(&q.phi, from, to, m)? })
}

fn check_finite<T: Real>(y: Option<&SurfaceState<T>>, tangents: &[SurfaceState<T>], step: usize) -> Result<()> {
    let ok = y.map_or(true, |s| s.is_finite()) && tangents.iter().all(|t| t.is_finite());
    if ok {
        Ok(())
    } else {
        Err(Error::BlowUp { step })
    }
}

fn run<T: Real>(
    q0: &SurfaceState<T>,
    tangents: &mut Vec<SurfaceState<T>>,
    horizon: T,
    schedule: &MeshSchedule<T>,
    params: &PhysParams<T>,
    options: EvolveOptions,
    replay: Option<&[Vec<SurfaceState<T>>]>,
) -> Result<Trajectory<T>> {
    params.validate()?;
    if !(horizon > T::zero()) {
        return Err(Error::Config(format!("horizon {horizon} must be positive")));
    }
    let first = schedule.first();
    if q0.len() != first.m {
        return Err(Error::Mismatch(format!("state has {} nodes, first segment expects {}", q0.len(), first.m)));
    }
    if let Some(t) = tangents.iter().find(|t| t.len() != first.m) {
        return Err(Error::Mismatch(format!("tangent has {} nodes, first segment expects {}", t.len(), first.m)));
    }
    let stepper = Stepper { scheme: options.scheme, params, solver: options.solver };
    let mut y = if replay.is_some() { None } else { Some(q0.clone()) };
    let mut stages = if options.store_stages && replay.is_none() { Some(Vec::new()) } else { None };
    let mut checkpoints = Vec::new();
    let mut t = T::zero();
    let mut step_index = 0;
    let segs = schedule.segments();
    for (l, seg) in segs.iter().enumerate() {
        let fourier = Fourier::new(seg.m)?;
        checkpoints.push(Checkpoint { t, state: y.clone().unwrap_or_else(|| q0.clone()), map: seg.map.clone() });
        let dt = seg.theta * horizon / T::idx(seg.steps);
        for n in 0..seg.steps {
            let mut record = stages.as_ref().map(|_| Vec::new());
            let rep = replay.map(|r| r[step_index].as_slice());
            let next = stepper.step(y.as_ref(), tangents, dt, &seg.map, &fourier, rep, record.as_mut())?;
            if let (Some(st), Some(rec)) = (stages.as_mut(), record) {
                st.push(rec);
            }
            if next.is_some() {
                y = next;
            }
            check_finite(y.as_ref(), tangents, step_index)?;
            step_index += 1;
            t = if l + 1 == segs.len() && n + 1 == seg.steps {
                horizon
            } else {
                t + dt
            };
        }
        if let Some(nseg) = segs.get(l + 1) {
            if nseg.map != seg.map || nseg.m != seg.m {
                if let Some(q) = y.as_ref() {
                    y = Some(regrid_state(q, &seg.map, &nseg.map, nseg.m)?);
                }
                for tan in tangents.iter_mut() {
                    *tan = regrid_state(tan, &seg.map, &nseg.map, nseg.m)?;
                }
            }
        }
    }
    let last = schedule.last();
    checkpoints.push(Checkpoint { t: horizon, state: y.unwrap_or_else(|| q0.clone()), map: last.map.clone() });
    Ok(Trajectory { options, horizon, schedule: schedule.clone(), checkpoints, stages })
}

/// Advances the nonlinear equations over `horizon` following `schedule`.
pub fn evolve<T: Real>(
    q0: &SurfaceState<T>,
    horizon: T,
    schedule: &MeshSchedule<T>,
    params: &PhysParams<T>,
    scheme: Scheme,
) -> Result<Trajectory<T>> {
    evolve_with(q0, horizon, schedule, params, EvolveOptions::new(scheme))
}

pub fn evolve_with<T: Real>(
    q0: &SurfaceState<T>,
    horizon: T,
    schedule: &MeshSchedule<T>,
    params: &PhysParams<T>,
    options: EvolveOptions,
) -> Result<Trajectory<T>> {
    run(q0, &mut Vec::new(), horizon, schedule, params, options, None)
}

/// Advances the base state and a batch of tangents together.
pub fn evolve_coupled<T: Real>(
    q0: &SurfaceState<T>,
    tangents: &[SurfaceState<T>],
    horizon: T,
    schedule: &MeshSchedule<T>,
    params: &PhysParams<T>,
    options: EvolveOptions,
) -> Result<(Trajectory<T>, Vec<SurfaceState<T>>)> {
    let mut tans = tangents.to_vec();
    let traj = run(q0, &mut tans, horizon, schedule, params, options, None)?;
    Ok((traj, tans))
}

/// Advances tangents along an existing trajectory, replaying stored stage
/// states when available and recomputing the base otherwise.
pub fn evolve_tangents<T: Real>(
    base: &Trajectory<T>,
    tangents: &[SurfaceState<T>],
    params: &PhysParams<T>,
) -> Result<Vec<SurfaceState<T>>> {
    let mut tans = tangents.to_vec();
    let q0 = &base.initial().state;
    let mut options = base.options;
    options.store_stages = false;
    run(q0, &mut tans, base.horizon, &base.schedule, params, options, base.stages.as_deref())?;
    Ok(tans)
}

/// Rate `(η_t, φ_t)` of a state on the given map.
pub fn state_rate<T: Real>(q: &SurfaceState<T>, map: &MeshMap<T>, params: &PhysParams<T>) -> Result<SurfaceState<T>> {
    let fourier = Fourier::new(q.len())?;
    Ok(Frame::new(q, map, params, &fourier)?.rate(params))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dno::Depth;
    use crate::spectral::Segment;

    fn nodes(m: usize) -> Vec<f64> {
        Fourier::<f64>::new(m).unwrap().nodes()
    }

    #[test]
    fn tableaux_are_consistent() {
        for scheme in [Scheme::Rk5, Scheme::Rk8] {
            let s = scheme.stages();
            let bsum: f64 = (0..s).map(|i| scheme.b(i)).sum();
            assert!((bsum - 1.0).abs() < 1e-14);
            let c: Vec<f64> = (0..s).map(|i| (0..i).map(|j| scheme.a(i, j)).sum()).collect();
            for p in 1..=scheme.order() {
                let q: f64 = (0..s).map(|i| scheme.b(i) * c[i].powi(p as i32 - 1)).sum();
                assert!((q - 1.0 / p as f64).abs() < 1e-13, "{scheme} order condition {p}");
            }
        }
    }

    #[test]
    fn rest_state_stays_at_rest() {
        let sched = MeshSchedule::uniform(32, 5).unwrap();
        let p = PhysParams { g: 1.0, tension: 0.0, depth: Depth::Finite(0.5) };
        let q0 = SurfaceState::rest(32, p.depth);
        let tr = evolve(&q0, 3.0, &sched, &p, Scheme::Rk5).unwrap();
        assert_eq!(tr.final_state(), &q0);
    }

    #[test]
    fn linear_standing_wave() {
        let m = 32;
        let a = 1e-6;
        let x = nodes(m);
        let p = PhysParams::deep();
        let q0 = SurfaceState::new(vec![0.0; m], x.iter().map(|t| a * t.cos()).collect());
        let t = std::f64::consts::FRAC_PI_2;
        let tr = evolve(&q0, t, &MeshSchedule::uniform(m, 40).unwrap(), &p, Scheme::Rk8).unwrap();
        for (e, xi) in tr.final_state().eta.iter().zip(&x) {
            assert!((e - a * xi.cos()).abs() < 1e-12);
        }
    }

    #[test]
    fn tangent_about_rest_follows_dispersion() {
        let m = 32;
        let x = nodes(m);
        let p = PhysParams { g: 1.0, tension: 0.0, depth: Depth::Finite(1.0) };
        let q0 = SurfaceState::rest(m, p.depth);
        let k = 2.0;
        let w = p.omega(k);
        let t = 1.3;
        let tan = SurfaceState::new(x.iter().map(|s| (k * s).cos()).collect(), vec![0.0; m]);
        let tr = evolve(&q0, t, &MeshSchedule::uniform(m, 30).unwrap(), &p, Scheme::Rk8).unwrap();
        let out = evolve_tangents(&tr, &[tan, SurfaceState::zeros(m)], &p).unwrap();
        for (i, s) in x.iter().enumerate() {
            assert!((out[0].eta[i] - (w * t).cos() * (k * s).cos()).abs() < 1e-12);
            assert!((out[0].phi[i] + (w * t).sin() / w * (k * s).cos()).abs() < 1e-12);
        }
        assert_eq!(out[1].max_abs(), 0.0);
    }

    fn moderate_wave(m: usize, map: &MeshMap<f64>) -> SurfaceState<f64> {
        let x = map.nodes(m);
        SurfaceState::new(
            x.iter().map(|t| 0.02 * (2.0 * t).cos()).collect(),
            x.iter().map(|t| 0.12 * t.cos() + 0.01 * (3.0 * t).cos()).collect(),
        )
    }

    #[test]
    fn energy_is_conserved() {
        let m = 64;
        let p = PhysParams::deep();
        let q0 = moderate_wave(m, &MeshMap::uniform());
        let e0 = crate::dynamics::energy(&q0, &p, &MeshMap::uniform()).unwrap();
        let tr = evolve(&q0, 2.0 * std::f64::consts::PI, &MeshSchedule::uniform(m, 200).unwrap(), &p, Scheme::Rk8)
            .unwrap();
        let e1 = crate::dynamics::energy(tr.final_state(), &p, &MeshMap::uniform()).unwrap();
        assert!(((e1 - e0) / e0).abs() < 1e-10, "drift {}", (e1 - e0) / e0);
    }

    #[test]
    fn observed_order_of_accuracy() {
        let m = 64;
        let p = PhysParams::deep();
        let q0 = moderate_wave(m, &MeshMap::uniform());
        let horizon = 1.5;
        for (scheme, steps, min_order) in [(Scheme::Rk5, [6, 12, 24], 4.8), (Scheme::Rk8, [4, 8, 16], 7.5)] {
            let run = |n: usize| {
                evolve(&q0, horizon, &MeshSchedule::uniform(m, n).unwrap(), &p, scheme).unwrap().final_state().clone()
            };
            let (a, b, c) = (run(steps[0]), run(steps[1]), run(steps[2]));
            let order = (a.max_abs_diff(&b) / b.max_abs_diff(&c)).log2();
            assert!(order >= min_order, "{scheme}: observed order {order}");
        }
    }

    #[test]
    fn time_reversal_recovers_initial_state() {
        let m = 64;
        let p = PhysParams::deep();
        let q0 = moderate_wave(m, &MeshMap::uniform());
        let sched = MeshSchedule::uniform(m, 60).unwrap();
        let fwd = evolve(&q0, 1.2, &sched, &p, Scheme::Rk8).unwrap();
        let mut mid = fwd.final_state().clone();
        mid.phi.iter_mut().for_each(|v| *v = -*v);
        let back = evolve(&mid, 1.2, &sched, &p, Scheme::Rk8).unwrap();
        let mut end = back.final_state().clone();
        end.phi.iter_mut().for_each(|v| *v = -*v);
        assert!(end.max_abs_diff(&q0) < 1e-11, "{}", end.max_abs_diff(&q0));
    }

    #[test]
    fn tangents_match_finite_differences() {
        let m = 32;
        let p = PhysParams::deep();
        let map = MeshMap::uniform();
        let q0 = moderate_wave(m, &map);
        let x = map.nodes(m);
        let dq = SurfaceState::new(x.iter().map(|t| (3.0 * t).cos()).collect(), x.iter().map(|t| t.sin()).collect());
        let sched = MeshSchedule::uniform(m, 12).unwrap();
        let tr = evolve(&q0, 1.0, &sched, &p, Scheme::Rk5).unwrap();
        let lin = evolve_tangents(&tr, &[dq.clone()], &p).unwrap().remove(0);
        let mut errs = Vec::new();
        for eps in [1e-3, 1e-4] {
            let a = evolve(&q0.axpy(eps, &dq), 1.0, &sched, &p, Scheme::Rk5).unwrap();
            let fd = a.final_state().axpy(-1.0, tr.final_state()).scale(1.0 / eps);
            errs.push(fd.max_abs_diff(&lin));
        }
        assert!((errs[0] / errs[1]).log10() >= 0.9, "{errs:?}");
    }

    #[test]
    fn replay_and_recompute_agree_across_segments() {
        let segs = vec![
            Segment { theta: 0.5, steps: 3, m: 32, map: MeshMap::uniform() },
            Segment { theta: 0.5, steps: 3, m: 48, map: MeshMap::new(2, 0.5).unwrap() },
        ];
        let sched = MeshSchedule::new(segs).unwrap();
        let p = PhysParams::deep();
        let q0 = moderate_wave(32, &MeshMap::uniform());
        let x = nodes(32);
        let tans: Vec<SurfaceState<f64>> = (1..4)
            .map(|k| SurfaceState::new(x.iter().map(|t| (k as f64 * t).cos()).collect(), vec![0.0; 32]))
            .collect();
        let mut opts = EvolveOptions::new(Scheme::Rk5);
        let (tr, coupled) = evolve_coupled(&q0, &tans, 0.8, &sched, &p, opts).unwrap();
        let recomputed = evolve_tangents(&tr, &tans, &p).unwrap();
        opts.store_stages = true;
        let stored = evolve_with(&q0, 0.8, &sched, &p, opts).unwrap();
        assert!(stored.has_stages());
        let replayed = evolve_tangents(&stored, &tans, &p).unwrap();
        let singly: Vec<SurfaceState<f64>> =
            tans.iter().map(|t| evolve_tangents(&tr, std::slice::from_ref(t), &p).unwrap().remove(0)).collect();
        for i in 0..3 {
            assert_eq!(coupled[i], recomputed[i]);
            assert_eq!(coupled[i], replayed[i]);
            assert!(coupled[i].max_abs_diff(&singly[i]) < 1e-13);
        }
        assert_eq!(tr.final_state().len(), 48);
        assert_eq!(tr.checkpoints.len(), 3);
    }

    #[test]
    fn blow_up_is_reported() {
        let m = 32;
        let p = PhysParams::deep();
        let x = nodes(m);
        let q0 = SurfaceState::new(vec![0.0; m], x.iter().map(|t| 50.0 * (10.0 * t).cos()).collect());
        let res = evolve(&q0, 10.0, &MeshSchedule::uniform(m, 2).unwrap(), &p, Scheme::Rk5);
        assert!(res.is_err());
    }
}
