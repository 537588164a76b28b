use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use waterwave::dynamics::{crest_acceleration, energy, wave_height};
use waterwave::floquet::run_algorithm1;
use waterwave::matching::{apply_swaps, reorder, track_family, SpectrumColumn};
use waterwave::shooting::{
    build_initial_state, continue_family_with, counterpropagating_guess, minimize, objective, params_from_state,
    ContinuationTarget, Family, LmSettings, ParamVector, ShootingProblem, ShootingResult,
};
use waterwave::spectral::{MeshSchedule, Segment};

use crate::config::RunConfig;
use crate::failure::Failure;
use crate::files::{self, Solution};

/// Output directory and shared overrides.
pub struct Context {
    pub out: PathBuf,
    pub tol_f: Option<f64>,
    pub resume: bool,
}

impl Context {
    fn lm(&self, cfg: &RunConfig) -> LmSettings<f64> {
        let mut lm = cfg.lm.clone();
        if let Some(t) = self.tol_f {
            lm.tol_f = t;
        }
        lm
    }

    fn path(&self, name: &str) -> Result<PathBuf, Failure> {
        std::fs::create_dir_all(&self.out)?;
        Ok(self.out.join(name))
    }
}

fn grid_fits(family: Family, modes: usize, m: usize) -> bool {
    let top = match family {
        Family::Standing => modes,
        Family::Traveling => modes.div_ceil(2),
    };
    top < m / 2
}

fn refined(schedule: &MeshSchedule<f64>) -> Result<MeshSchedule<f64>, Failure> {
    let segs = schedule
        .segments()
        .iter()
        .map(|s| Segment { m: (3 * s.m / 2).next_multiple_of(2), steps: (3 * s.steps).div_ceil(2), ..s.clone() })
        .collect();
    Ok(MeshSchedule::new(segs)?)
}

/// Minimizes with the retry ladder: more modes, then a finer grid.
fn solve(
    problem: ShootingProblem<f64>,
    start: ParamVector<f64>,
    lm: &LmSettings<f64>,
    retries: usize,
) -> Result<(ShootingProblem<f64>, ShootingResult<f64>), Failure> {
    let mut problem = problem;
    let mut guess = start;
    let mut best: Option<(ShootingProblem<f64>, ShootingResult<f64>)> = None;
    for attempt in 0..=retries {
        let res = minimize(&problem, &guess, lm)?;
        eprintln!(
            "attempt {attempt}: f = {:e}, {} iterations, {} modes on {} points",
            res.f,
            res.iterations,
            res.param.modes(),
            problem.grid()
        );
        let next = res.param.clone();
        let done = res.converged;
        if best.as_ref().is_none_or(|(_, b)| res.f < b.f || done) {
            best = Some((problem.clone(), res));
        }
        if done {
            break;
        }
        let more = (3 * next.modes()).div_ceil(2);
        if attempt % 2 == 0 && grid_fits(problem.family, more, problem.grid()) {
            guess = next.resized(more);
        } else {
            problem.schedule = refined(&problem.schedule)?;
            guess = next;
        }
    }
    Ok(best.expect("at least one attempt"))
}

fn label_of(problem: &ShootingProblem<f64>, result: &ShootingResult<f64>, frozen: Option<usize>) -> f64 {
    match (problem.constraint, frozen) {
        (Some(c), _) => c.target - problem.params.depth.mean_level(),
        (None, Some(k)) => result.param.c[k],
        (None, None) => result.param.period(),
    }
}

fn finish(ctx: &Context, name: &str, sol: &Solution) -> Result<PathBuf, Failure> {
    let path = ctx.path(name)?;
    sol.write(&path)?;
    println!(
        "{}: {} T = {:.15} f = {:e} converged = {} ({} iterations, {} residual and {} Jacobian evaluations)",
        path.display(),
        sol.param.family,
        sol.param.period(),
        sol.f,
        sol.converged,
        sol.iterations,
        sol.function_evals,
        sol.jacobian_evals
    );
    if sol.converged {
        Ok(path)
    } else {
        Err(Failure::NotConverged(format!("best f = {:e}, written to {}", sol.f, path.display())))
    }
}

fn coefficient_guess(cfg: &RunConfig, family: Family) -> ParamVector<f64> {
    let mut c = vec![0.0; cfg.modes + 1];
    c[0] = cfg.period.unwrap_or_else(|| 2.0 * PI / cfg.params.omega_capillary(1.0));
    for &(k, v) in &cfg.coefficients {
        c[k] = v;
    }
    ParamVector::new(family, c)
}

fn restart(path: &Path, family: Family, modes: usize) -> Result<ParamVector<f64>, Failure> {
    let sol = Solution::read(path)?;
    if sol.param.family != family {
        return Err(Failure::Invalid(format!("{} holds a {} wave, expected {family}", path.display(), sol.param.family)));
    }
    Ok(sol.param.resized(modes.max(sol.param.modes())))
}

fn problem(cfg: &RunConfig, family: Family) -> ShootingProblem<f64> {
    let mut p = ShootingProblem::new(family, cfg.params, cfg.schedule.clone(), cfg.scheme);
    p.constraint = cfg.amplitude.map(|a| a.constraint(family));
    p
}

fn check_fit(cfg: &RunConfig, family: Family, modes: usize) -> Result<(), Failure> {
    if !grid_fits(family, modes, cfg.schedule.first().m) {
        return Err(Failure::Invalid(format!("{modes} modes do not fit on {} points", cfg.schedule.first().m)));
    }
    if family == Family::Traveling && cfg.schedule.segments().len() != 1 {
        return Err(Failure::Invalid("traveling waves need a single time segment".into()));
    }
    Ok(())
}

pub fn standing(cfg: &RunConfig, ctx: &Context) -> Result<(), Failure> {
    let start = match &cfg.start {
        Some(path) => restart(path, Family::Standing, cfg.modes)?,
        None => coefficient_guess(cfg, Family::Standing),
    };
    check_fit(cfg, Family::Standing, start.modes())?;
    let lm = ctx.lm(cfg);
    let (prob, res) = solve(problem(cfg, Family::Standing), start, &lm, cfg.retries)?;
    finish(ctx, "solution.txt", &Solution::new(&prob, &res, label_of(&prob, &res, lm.frozen)))?;
    Ok(())
}

pub fn travel(cfg: &RunConfig, ctx: &Context) -> Result<(), Failure> {
    let mut prob = problem(cfg, Family::Traveling);
    let start = match (&cfg.start, cfg.guess) {
        (Some(path), _) => restart(path, Family::Traveling, cfg.modes)?,
        (None, Some(guess)) => {
            let m = cfg.schedule.first().m;
            let (q, speed) = guess.state(m, cfg.stretch)?;
            if prob.constraint.is_none() {
                let amplitude = guess.constants().0 / cfg.stretch;
                prob.constraint = Some(waterwave::shooting::AmplitudeConstraint {
                    position: 0.0,
                    target: amplitude + cfg.level(),
                    weight: 1.0,
                });
            }
            let mut q = q;
            q.eta.iter_mut().for_each(|v| *v += cfg.level());
            params_from_state(Family::Traveling, cfg.period.unwrap_or(2.0 * PI / speed), &q, cfg.modes, &cfg.params)?
        }
        (None, None) => coefficient_guess(cfg, Family::Traveling),
    };
    check_fit(cfg, Family::Traveling, start.modes())?;
    let lm = LmSettings { frozen: None, ..ctx.lm(cfg) };
    let (prob, res) = solve(prob, start, &lm, cfg.retries)?;
    println!("wave speed c = 2 pi / T = {:.15}", 2.0 * PI / res.param.period());
    finish(ctx, "solution.txt", &Solution::new(&prob, &res, label_of(&prob, &res, None)))?;
    Ok(())
}

pub fn counterprop(cfg: &RunConfig, ctx: &Context) -> Result<(), Failure> {
    let path = cfg.start.as_ref().ok_or_else(|| Failure::Invalid("counterprop needs 'start' = traveling solution".into()))?;
    let trav = Solution::read(path)?;
    if trav.param.family != Family::Traveling {
        return Err(Failure::Invalid(format!("{} is not a traveling wave", path.display())));
    }
    let mut start = counterpropagating_guess(&trav.param, cfg.modes)?;
    if let Some(t) = cfg.period {
        start.c[0] = t;
    }
    check_fit(cfg, Family::Standing, cfg.modes)?;
    let mut prob = problem(cfg, Family::Standing);
    if prob.constraint.is_none() {
        let q0 = build_initial_state(&start, cfg.schedule.first().m, &cfg.schedule.first().map, &cfg.params)?;
        let x = cfg.schedule.first().map.nodes(q0.len());
        let i = x.iter().position(|&v| v >= PI / 2.0).unwrap_or(0);
        prob.constraint = Some(waterwave::shooting::AmplitudeConstraint { position: x[i], target: q0.eta[i], weight: 1.0 });
    }
    let lm = LmSettings { frozen: None, ..ctx.lm(cfg) };
    let (prob, res) = solve(prob, start, &lm, cfg.retries)?;
    finish(ctx, "solution.txt", &Solution::new(&prob, &res, label_of(&prob, &res, None)))?;
    Ok(())
}

fn member_name(i: usize) -> String {
    format!("member_{i:04}.txt")
}

fn existing_members(out: &Path) -> Vec<PathBuf> {
    (0..).map(|i| out.join(member_name(i))).take_while(|p| p.exists()).collect()
}

pub fn continuation(cfg: &RunConfig, ctx: &Context) -> Result<(), Failure> {
    let sweep = cfg.sweep.as_ref().ok_or_else(|| Failure::Invalid("continue needs continue.target and values".into()))?;
    let family = cfg.family;
    let lm = ctx.lm(cfg);
    let mut settings = sweep.settings.clone();
    settings.lm.tol_f = lm.tol_f;
    let level = cfg.level();
    let to_internal = |v: f64| if sweep.target == ContinuationTarget::Amplitude { v + level } else { v };
    let mut prob = problem(cfg, family);
    if sweep.target == ContinuationTarget::Amplitude && prob.constraint.is_none() {
        return Err(Failure::Invalid("an amplitude sweep needs 'amplitude' for the first member".into()));
    }

    let previous = if ctx.resume { existing_members(&ctx.out) } else { Vec::new() };
    let mut history: Vec<(f64, ShootingResult<f64>)> = Vec::new();
    let mut target = sweep.target;
    for path in previous.iter().rev().take(2).rev() {
        let sol = Solution::read(path)?;
        if let Some(t) = sol.target {
            target = t;
        }
        let result = ShootingResult {
            param: sol.param.clone(),
            f: sol.f,
            residual: Vec::new(),
            converged: sol.converged,
            iterations: sol.iterations,
            function_evals: sol.function_evals,
            jacobian_evals: sol.jacobian_evals,
            trailing_modes: (0.0, 0.0),
            final_state: sol.profile.clone().unwrap_or_else(|| waterwave::dynamics::SurfaceState::zeros(0)),
        };
        history.push((to_internal(sol.label), result));
    }
    let done_values = previous.len().saturating_sub(1);
    if history.is_empty() {
        let start = match &cfg.start {
            Some(path) => restart(path, family, cfg.modes)?,
            None => coefficient_guess(cfg, family),
        };
        check_fit(cfg, family, start.modes())?;
        let seed_lm = match sweep.target {
            ContinuationTarget::Coefficient(k) => LmSettings { frozen: Some(k), ..lm.clone() },
            ContinuationTarget::Amplitude => LmSettings { frozen: None, ..lm.clone() },
        };
        let (p, res) = solve(prob.clone(), start, &seed_lm, cfg.retries)?;
        prob = p;
        let value = match sweep.target {
            ContinuationTarget::Coefficient(k) => res.param.c[k],
            ContinuationTarget::Amplitude => prob.constraint.map_or(0.0, |c| c.target),
        };
        let mut sol = Solution::new(&prob, &res, value - (to_internal(0.0)));
        sol.target = Some(sweep.target);
        finish(ctx, &member_name(0), &sol)?;
        history.push((value, res));
    } else {
        println!("resuming after {} from {}", previous.len(), ctx.out.display());
        let last = Solution::read(previous.last().unwrap())?;
        prob.schedule = last.schedule.clone();
    }
    let remaining: Vec<f64> = sweep.values.iter().skip(done_values).map(|&v| to_internal(v)).collect();
    let mut index = previous.len().max(1);
    let mut written: Vec<(f64, f64, f64, bool)> = Vec::new();
    let mut failure = None;
    let run = continue_family_with(&prob, &history, target, &remaining, &settings, |value, res| {
        let label = value - to_internal(0.0);
        let mut sol = Solution::new(&prob, res, label);
        sol.target = Some(target);
        if let ContinuationTarget::Amplitude = target {
            sol.constraint = prob.constraint.map(|mut c| {
                c.target = value;
                c
            });
        }
        match ctx.path(&member_name(index)).and_then(|p| sol.write(&p)) {
            Ok(()) => written.push((label, res.param.period(), res.f, res.converged)),
            Err(e) => failure = Some(e),
        }
        index += 1;
    });
    if let Some(e) = failure {
        return Err(e);
    }
    let sweep_path = ctx.path("sweep.csv")?;
    let mut summary = match std::fs::read_to_string(&sweep_path) {
        Ok(text) if ctx.resume => text,
        _ => String::from("# waterwave sweep v1\nmember,param,period,f,converged\n"),
    };
    for (i, (label, period, f, ok)) in written.iter().enumerate() {
        summary.push_str(&format!("{},{label},{period},{f:e},{ok}\n", i + previous.len().max(1)));
    }
    std::fs::write(&sweep_path, summary)?;
    println!("{} new members written to {}", run.members.len(), ctx.out.display());
    match run.truncated {
        Some(reason) => Err(Failure::NotConverged(reason)),
        None => Ok(()),
    }
}

pub fn floquet(cfg: &RunConfig, ctx: &Context, solution: &Path) -> Result<(), Failure> {
    let sol = Solution::read(solution)?;
    if !sol.converged {
        eprintln!("warning: {} is not a converged solution (f = {:e})", solution.display(), sol.f);
    }
    let settings = cfg.floquet.settings(4 * sol.schedule.total_steps())?;
    let m = settings.schedule.first().m;
    let q0 = build_initial_state(&sol.param, m, &settings.schedule.first().map, &sol.params)?;
    let outcome = run_algorithm1(&q0, sol.param.period(), &sol.params, &settings)?;
    for a in &outcome.attempts {
        eprintln!("monodromy M = {}, k_max = {}, steps = {}: max err {:e}", a.m, a.k_max, a.steps, a.max_err);
    }
    let text = files::spectrum_text(sol.label, &outcome.records, &outcome.cluster, outcome.resolved, outcome.stable);
    let stem = solution.file_stem().and_then(|s| s.to_str()).unwrap_or("solution");
    let path = ctx.path(&format!("{stem}.spectrum.csv"))?;
    std::fs::write(&path, text)?;
    println!(
        "{}: {} multipliers, resolved = {}, stable = {}, unit cluster of {} (split {:e})",
        path.display(),
        outcome.records.len(),
        outcome.resolved,
        outcome.stable,
        outcome.cluster.members.len(),
        outcome.cluster.split
    );
    if outcome.resolved {
        Ok(())
    } else {
        Err(Failure::NotConverged("multiplier residuals above floquet.tol after refinement".into()))
    }
}

pub fn matching(ctx: &Context, spectra: &[PathBuf], swaps: Option<&Path>) -> Result<(), Failure> {
    let columns: Vec<SpectrumColumn<f64>> =
        spectra.iter().map(|p| files::read_spectrum(p).map(|(c, _)| c)).collect::<Result<_, _>>()?;
    let (table, ordered) = track_family(&columns)?;
    let (table, ordered) = match swaps {
        Some(path) => {
            let fixed = apply_swaps(&table, &files::read_swaps(path)?)?;
            let ordered = reorder(&columns, &fixed)?;
            (fixed, ordered)
        }
        None => (table, ordered),
    };
    let params: Vec<f64> = columns.iter().map(|c| c.param).collect();
    std::fs::write(ctx.path("permutation.txt")?, files::permutation_text(&table, &params))?;
    std::fs::write(ctx.path("family.csv")?, files::family_text(&ordered))?;
    std::fs::write(ctx.path("modulus.dat")?, files::curve_text("param |lambda|", &ordered, |c, r| c.modulus[r]))?;
    std::fs::write(ctx.path("phase.dat")?, files::curve_text("param sigma/pi", &ordered, |c, r| c.phase[r] / PI))?;
    std::fs::write(ctx.path("mean_k.dat")?, files::curve_text("param <k>", &ordered, |c, r| c.mean_k[r]))?;
    println!("tracked {} multipliers across {} spectra into {}", table.rows(), columns.len(), ctx.out.display());
    Ok(())
}

pub fn diag(solution: &Path) -> Result<(), Failure> {
    let sol = Solution::read(solution)?;
    let prob = sol.problem();
    let r = prob.residual(&sol.param)?;
    let f = objective(&r);
    let first = sol.schedule.first();
    let q0 = build_initial_state(&sol.param, first.m, &first.map, &sol.params)?;
    println!("family           {}", sol.param.family);
    println!("period           {:.17e}", sol.param.period());
    println!("label            {:.17e}", sol.label);
    println!("f stored         {:e}", sol.f);
    println!("f recomputed     {f:e}");
    println!("f relative diff  {:e}", if sol.f == 0.0 { f.abs() } else { ((f - sol.f) / sol.f).abs() });
    println!("energy           {:.17e}", energy(&q0, &sol.params, &first.map)?);
    let height = wave_height(&q0);
    println!("height at t=0    {:.17e}", height.full);
    if let Some(q) = &sol.profile {
        println!("height at end    {:.17e}", wave_height(q).full);
        if sol.param.family == Family::Standing {
            match crest_acceleration(q, &sol.params, &sol.schedule.last().map) {
                Ok(a) => println!("crest accel      {a:.17e}"),
                Err(e) => println!("crest accel      unavailable ({e})"),
            }
        }
    }
    Ok(())
}
