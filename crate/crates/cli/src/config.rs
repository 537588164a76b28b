//! Flat `key = value` run configuration.
//!
//! Blank lines and `#` comments are ignored. Every key may appear once,
//! except the `segment.*` keys: a repeated `segment.<field>` starts a new
//! time segment. Elevations (`amplitude`, sweep values of `amplitude`) are
//! given relative to the mean level; finite depth is converted to the
//! solver's total-depth convention here.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use waterwave::dno::Depth;
use waterwave::dynamics::PhysParams;
use waterwave::floquet::{default_cluster_radius, FloquetSettings};
use waterwave::shooting::{AmplitudeConstraint, CapillaryGuess, ContinuationSettings, ContinuationTarget, Family, LmSettings};
use waterwave::spectral::{MeshMap, MeshSchedule, Segment};
use waterwave::timestep::Scheme;

use crate::failure::Failure;

#[derive(Debug, Clone, PartialEq)]
pub struct Sweep {
    pub target: ContinuationTarget,
    /// Continuation values, in user units.
    pub values: Vec<f64>,
    pub settings: ContinuationSettings<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FloquetConfig {
    pub m: Option<usize>,
    pub steps: Option<usize>,
    pub k_max: Option<usize>,
    pub n_keep: usize,
    pub tol: f64,
    pub max_refinements: usize,
    pub cluster_radius: f64,
}

impl FloquetConfig {
    /// Settings sized from `n_keep`, with explicit grid and steps taking precedence.
    pub fn settings(&self, default_steps: usize) -> Result<FloquetSettings<f64>, Failure> {
        let mut s = FloquetSettings::sized(self.n_keep, self.steps.unwrap_or(default_steps))?;
        if let Some(k) = self.k_max {
            s.k_max = k;
        }
        let m = self.m.unwrap_or(s.schedule.first().m).max((4 * s.k_max + 4).div_ceil(2));
        s.schedule = MeshSchedule::uniform(m + m % 2, s.schedule.total_steps())?;
        if 4 * s.k_max > 2 * s.schedule.first().m - 4 || s.k_max >= s.schedule.first().m / 2 {
            return Err(Failure::Invalid(format!("floquet.k_max {} does not fit on {m} points", s.k_max)));
        }
        s.tol = self.tol;
        s.max_refinements = self.max_refinements;
        s.cluster_radius = self.cluster_radius;
        Ok(s)
    }
}

/// Elevation constraint; the position default depends on the family being solved.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Amplitude {
    pub target: f64,
    pub position: Option<f64>,
    pub weight: f64,
}

impl Amplitude {
    pub fn constraint(&self, family: Family) -> AmplitudeConstraint<f64> {
        let default = if family == Family::Standing { std::f64::consts::FRAC_PI_2 } else { 0.0 };
        AmplitudeConstraint { position: self.position.unwrap_or(default), target: self.target, weight: self.weight }
    }
}

/// Everything a command needs, validated before any computation.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub params: PhysParams<f64>,
    pub schedule: MeshSchedule<f64>,
    pub scheme: Scheme,
    pub family: Family,
    pub modes: usize,
    pub period: Option<f64>,
    pub coefficients: Vec<(usize, f64)>,
    pub frozen: Option<usize>,
    pub amplitude: Option<Amplitude>,
    pub lm: LmSettings<f64>,
    pub retries: usize,
    pub guess: Option<CapillaryGuess>,
    pub stretch: f64,
    /// Solution file to start from (restart, traveling source, or sweep seed).
    pub start: Option<PathBuf>,
    pub sweep: Option<Sweep>,
    pub floquet: FloquetConfig,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::Invalid(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    /// Parses configuration text; relative paths resolve against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self, Failure> {
        let (keys, segments) = split_entries(text)?;
        let mut table = Table { keys, used: Vec::new() };
        let cfg = build(&mut table, &segments, base)?;
        if let Some(unused) = table.keys.keys().find(|k| !table.used.contains(k)) {
            return Err(Failure::Invalid(format!("unknown key '{unused}'")));
        }
        Ok(cfg)
    }

    /// Mean surface level added to user elevations.
    pub fn level(&self) -> f64 {
        self.params.depth.mean_level()
    }
}

struct Table {
    keys: BTreeMap<String, (usize, String)>,
    used: Vec<String>,
}

impl Table {
    fn raw(&mut self, key: &str) -> Option<(usize, String)> {
        let v = self.keys.get(key).cloned();
        if v.is_some() {
            self.used.push(key.to_string());
        }
        v
    }

    fn get<V: std::str::FromStr>(&mut self, key: &str) -> Result<Option<V>, Failure>
    where
        V::Err: std::fmt::Display,
    {
        match self.raw(key) {
            None => Ok(None),
            Some((line, v)) => {
                v.parse().map(Some).map_err(|e| Failure::Invalid(format!("line {line}: {key} = {v}: {e}")))
            }
        }
    }

    fn or<V: std::str::FromStr>(&mut self, key: &str, default: V) -> Result<V, Failure>
    where
        V::Err: std::fmt::Display,
    {
        Ok(self.get(key)?.unwrap_or(default))
    }

    fn prefixed(&mut self, prefix: &str) -> Vec<(String, usize, String)> {
        let hits: Vec<(String, usize, String)> = self
            .keys
            .iter()
            .filter_map(|(k, (l, v))| k.strip_prefix(prefix).map(|rest| (rest.to_string(), *l, v.clone())))
            .collect();
        for (rest, _, _) in &hits {
            self.used.push(format!("{prefix}{rest}"));
        }
        hits
    }
}

type SegmentFields = BTreeMap<String, (usize, String)>;

fn split_entries(text: &str) -> Result<(BTreeMap<String, (usize, String)>, Vec<SegmentFields>), Failure> {
    let mut keys = BTreeMap::new();
    let mut segments: Vec<SegmentFields> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let (key, value) = body
            .split_once('=')
            .ok_or_else(|| Failure::Invalid(format!("line {line}: expected 'key = value'")))?;
        let (key, value) = (key.trim().to_string(), value.trim().to_string());
        if let Some(field) = key.strip_prefix("segment.") {
            if segments.last().is_none_or(|s| s.contains_key(field)) {
                segments.push(BTreeMap::new());
            }
            segments.last_mut().unwrap().insert(field.to_string(), (line, value));
        } else if keys.insert(key.clone(), (line, value)).is_some() {
            return Err(Failure::Invalid(format!("line {line}: duplicate key '{key}'")));
        }
    }
    Ok((keys, segments))
}

fn parse_value<V: std::str::FromStr>(field: &str, (line, v): &(usize, String)) -> Result<V, Failure>
where
    V::Err: std::fmt::Display,
{
    v.parse().map_err(|e| Failure::Invalid(format!("line {line}: segment.{field} = {v}: {e}")))
}

fn schedule(table: &mut Table, segments: &[SegmentFields]) -> Result<MeshSchedule<f64>, Failure> {
    let m: Option<usize> = table.get("m")?;
    let steps: Option<usize> = table.get("steps")?;
    if segments.is_empty() {
        let (m, steps) = (m.unwrap_or(64), steps.unwrap_or(64));
        return Ok(MeshSchedule::uniform(m, steps)?);
    }
    if m.is_some() || steps.is_some() {
        return Err(Failure::Invalid("give either m/steps or segment.* groups, not both".into()));
    }
    let count = segments.len() as f64;
    let mut out = Vec::new();
    for (l, fields) in segments.iter().enumerate() {
        for key in fields.keys() {
            if !["theta", "steps", "m", "kappa", "rho"].contains(&key.as_str()) {
                return Err(Failure::Invalid(format!("unknown key 'segment.{key}'")));
            }
        }
        let need = |f: &str| fields.get(f).ok_or_else(|| Failure::Invalid(format!("segment {l} lacks segment.{f}")));
        let theta = match fields.get("theta") {
            Some(v) => parse_value("theta", v)?,
            None => 1.0 / count,
        };
        let kappa: i32 = fields.get("kappa").map(|v| parse_value("kappa", v)).transpose()?.unwrap_or(0);
        let rho: f64 = fields.get("rho").map(|v| parse_value("rho", v)).transpose()?.unwrap_or(1.0);
        let map = MeshMap::new(kappa, rho)?;
        out.push(Segment { theta, steps: parse_value("steps", need("steps")?)?, m: parse_value("m", need("m")?)?, map });
    }
    Ok(MeshSchedule::new(out)?)
}

fn depth(table: &mut Table) -> Result<Depth<f64>, Failure> {
    match table.raw("depth") {
        None => Ok(Depth::Infinite),
        Some((_, v)) if v == "inf" || v == "infinite" => Ok(Depth::Infinite),
        Some((line, v)) => v
            .parse()
            .map(Depth::Finite)
            .map_err(|e| Failure::Invalid(format!("line {line}: depth = {v}: {e}"))),
    }
}

fn target(text: &str) -> Result<ContinuationTarget, Failure> {
    if text == "amplitude" {
        return Ok(ContinuationTarget::Amplitude);
    }
    text.strip_prefix('c')
        .and_then(|k| k.parse().ok())
        .filter(|&k: &usize| k >= 1)
        .map(ContinuationTarget::Coefficient)
        .ok_or_else(|| Failure::Invalid(format!("continuation target '{text}' is neither c<k> nor amplitude")))
}

fn list(text: &str) -> Result<Vec<f64>, Failure> {
    text.split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|e| Failure::Invalid(format!("value list '{text}': {e}"))))
        .collect()
}

fn sweep(table: &mut Table, lm: &LmSettings<f64>) -> Result<Option<Sweep>, Failure> {
    let Some(target_text) = table.get::<String>("continue.target")? else {
        return Ok(None);
    };
    let target = target(&target_text)?;
    let values = match (table.get::<String>("continue.values")?, table.get::<f64>("continue.to")?) {
        (Some(v), None) => list(&v)?,
        (None, Some(to)) => {
            let step: f64 = table.get("continue.step")?.ok_or_else(|| Failure::Invalid("continue.to needs continue.step".into()))?;
            let from: f64 = table.get("continue.from")?.ok_or_else(|| Failure::Invalid("continue.to needs continue.from".into()))?;
            if !(step != 0.0 && (to - from) / step >= 0.0) {
                return Err(Failure::Invalid(format!("continue.step {step} does not lead from {from} to {to}")));
            }
            let count = ((to - from) / step + 1e-9).floor() as usize;
            (1..=count).map(|i| from + step * i as f64).collect()
        }
        _ => return Err(Failure::Invalid("give exactly one of continue.values or continue.from/to/step".into())),
    };
    if values.is_empty() {
        return Err(Failure::Invalid("continuation has no values".into()));
    }
    let auto_switch = match table.get::<String>("continue.switch")? {
        None => None,
        Some(v) => {
            let parts = list(&v)?;
            match parts[..] {
                [threshold, index] if index >= 1.0 && index.fract() == 0.0 => Some((threshold, index as usize)),
                _ => return Err(Failure::Invalid(format!("continue.switch '{v}' should be 'threshold, index'"))),
            }
        }
    };
    let settings = ContinuationSettings { lm: lm.clone(), min_step: table.or("continue.min_step", 1e-6)?, auto_switch };
    Ok(Some(Sweep { target, values, settings }))
}

fn build(table: &mut Table, segments: &[SegmentFields], base: &Path) -> Result<RunConfig, Failure> {
    let params = PhysParams { g: table.or("g", 1.0)?, tension: table.or("tension", 0.0)?, depth: depth(table)? };
    params.validate()?;
    let schedule = schedule(table, segments)?;
    let scheme: Scheme = table.or("scheme", Scheme::Rk8)?;
    let family: Family = table.or("family", Family::Standing)?;
    let modes: usize = table.or("modes", 16)?;
    if modes == 0 {
        return Err(Failure::Invalid("modes must be positive".into()));
    }
    let period: Option<f64> = table.get("period")?;
    if period.is_some_and(|t| !(t > 0.0)) {
        return Err(Failure::Invalid("period must be positive".into()));
    }
    let mut coefficients = Vec::new();
    for (rest, line, v) in table.prefixed("c.") {
        let k: usize = rest.parse().map_err(|_| Failure::Invalid(format!("line {line}: bad coefficient key c.{rest}")))?;
        if k == 0 || k > modes {
            return Err(Failure::Invalid(format!("line {line}: c.{k} outside 1..={modes}")));
        }
        let value = v.parse().map_err(|e| Failure::Invalid(format!("line {line}: c.{k} = {v}: {e}")))?;
        coefficients.push((k, value));
    }
    coefficients.sort_by_key(|&(k, _)| k);
    let amplitude = match table.get::<f64>("amplitude")? {
        None => None,
        Some(a) => Some(Amplitude {
            position: table.get("amplitude.position")?,
            target: a + params.depth.mean_level(),
            weight: table.or("amplitude.weight", 1.0)?,
        }),
    };
    let frozen = match table.get::<String>("frozen")? {
        Some(v) if v == "none" => None,
        Some(v) => Some(v.parse::<usize>().map_err(|e| Failure::Invalid(format!("frozen = {v}: {e}")))?),
        None if amplitude.is_none() && family == Family::Standing => Some(1),
        None => None,
    };
    if frozen.is_some_and(|k| k == 0 || k > modes) {
        return Err(Failure::Invalid(format!("frozen index outside 1..={modes}")));
    }
    let defaults = LmSettings::<f64>::default();
    let lm = LmSettings {
        tol_f: table.or("tol_f", defaults.tol_f)?,
        tol_step: table.or("tol_step", defaults.tol_step)?,
        max_iter: table.or("max_iter", defaults.max_iter)?,
        lambda0: table.or("lambda0", defaults.lambda0)?,
        frozen,
    };
    let guess = table.get::<CapillaryGuess>("guess")?;
    let stretch = table.or("stretch", 1.0)?;
    if !(stretch > 0.0) {
        return Err(Failure::Invalid("stretch must be positive".into()));
    }
    let start = table.get::<String>("start")?.map(|p| base.join(p));
    let sweep = sweep(table, &lm)?;
    let floquet = FloquetConfig {
        m: table.get("floquet.m")?,
        steps: table.get("floquet.steps")?,
        k_max: table.get("floquet.k_max")?,
        n_keep: table.or("floquet.n_keep", 32)?,
        tol: table.or("floquet.tol", 1e-8)?,
        max_refinements: table.or("floquet.refinements", 2)?,
        cluster_radius: table.or("floquet.cluster_radius", default_cluster_radius())?,
    };
    if floquet.n_keep == 0 {
        return Err(Failure::Invalid("floquet.n_keep must be positive".into()));
    }
    Ok(RunConfig {
        params,
        schedule,
        scheme,
        family,
        modes,
        period,
        coefficients,
        frozen,
        amplitude,
        lm,
        retries: table.or("retries", 2)?,
        guess,
        stretch,
        start,
        sweep,
        floquet,
    })
}
