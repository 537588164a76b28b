use std::f64::consts::PI;

use waterwave::dynamics::{PhysParams, SurfaceState};
use waterwave::floquet::{run_algorithm1, FloquetSettings};
use waterwave::shooting::{
    build_initial_state, continue_family, minimize, ContinuationSettings, ContinuationTarget, Family, LmSettings,
    ParamVector, ShootingProblem,
};
use waterwave::spectral::{MeshMap, MeshSchedule};
use waterwave::timestep::{evolve, Scheme};

fn problem() -> ShootingProblem<f64> {
    ShootingProblem::new(Family::Standing, PhysParams::deep(), MeshSchedule::uniform(32, 24).unwrap(), Scheme::Rk8)
}

fn seed(c1: f64) -> ParamVector<f64> {
    let mut c = vec![0.0; 9];
    c[0] = 2.0 * PI;
    c[1] = c1;
    ParamVector::new(Family::Standing, c)
}

#[test]
fn converged_standing_wave_is_periodic() {
    let prob = problem();
    let settings = LmSettings { frozen: Some(1), ..LmSettings::default() };
    let res = minimize(&prob, &seed(0.02), &settings).unwrap();
    assert!(res.converged, "f = {:e}", res.f);
    let p = PhysParams::deep();
    let q0 = build_initial_state(&res.param, 32, &MeshMap::uniform(), &p).unwrap();
    let traj = evolve(&q0, res.param.period(), &MeshSchedule::uniform(32, 96).unwrap(), &p, Scheme::Rk8).unwrap();
    let drift = traj.final_state().max_abs_diff(&q0);
    assert!(drift < 10.0 * (2.0 * res.f).sqrt() + 1e-9, "drift {drift:e}, f {:e}", res.f);
}

#[test]
fn continuation_lengthens_the_period() {
    let prob = problem();
    let settings = LmSettings { frozen: Some(1), ..LmSettings::default() };
    let first = minimize(&prob, &seed(0.005), &settings).unwrap();
    assert!(first.converged);
    let run = continue_family(
        &prob,
        &first,
        ContinuationTarget::Coefficient(1),
        &[0.01, 0.015],
        &ContinuationSettings::default(),
    );
    assert!(run.truncated.is_none(), "{:?}", run.truncated);
    let periods: Vec<f64> =
        std::iter::once(&first).chain(&run.members).map(|r| r.param.period()).collect();
    assert_eq!(periods.len(), 3);
    assert!(periods.windows(2).all(|w| w[1] > w[0]), "{periods:?}");
    for (r, c1) in run.members.iter().zip([0.01, 0.015]) {
        assert_eq!(r.param.c[1], c1);
        assert!(r.converged);
    }
}

#[test]
fn flat_surface_is_neutrally_stable() {
    let p = PhysParams::deep();
    let settings = FloquetSettings::<f64>::sized(16, 60).unwrap();
    let m = settings.schedule.first().m;
    let outcome = run_algorithm1(&SurfaceState::zeros(m), 2.0 * PI, &p, &settings).unwrap();
    assert!(outcome.resolved, "{:?}", outcome.attempts);
    assert!(outcome.stable);
    assert_eq!(outcome.records.len(), 16);
    for r in &outcome.records {
        assert!((r.modulus - 1.0).abs() < 1e-9);
        assert!((r.mean_k - r.mean_k.round()).abs() < 1e-9);
    }
}
