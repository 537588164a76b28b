//! On-disk formats: solution records, spectra, permutation tables, swap
//! lists and gnuplot curve files. Every format starts with a versioned
//! header line.

use std::fmt::Write as _;
use std::path::Path;

use num_complex::Complex;
use waterwave::dno::Depth;
use waterwave::dynamics::{PhysParams, SurfaceState};
use waterwave::floquet::{ClusterReport, FloquetRecord};
use waterwave::matching::{PermutationTable, SpectrumColumn, Swap};
use waterwave::shooting::{AmplitudeConstraint, ContinuationTarget, Family, ParamVector, ShootingProblem, ShootingResult};
use waterwave::spectral::{MeshMap, MeshSchedule, Segment};
use waterwave::timestep::Scheme;

use crate::failure::Failure;

pub const SOLUTION_HEADER: &str = "# waterwave solution v1";
pub const SPECTRUM_HEADER: &str = "# waterwave spectrum v1";
pub const PERMUTATION_HEADER: &str = "# waterwave permutation v1";
pub const FAMILY_HEADER: &str = "# waterwave family v1";
pub const SPECTRUM_COLUMNS: &str = "index,re,im,modulus,phase,mean_k,parity,err";

/// Exact hexadecimal rendering, e.g. `0x1.921fb54442d18p+1`.
pub fn hex(v: f64) -> String {
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let bits = v.to_bits();
    let sign = if bits >> 63 == 1 { "-" } else { "" };
    let biased = ((bits >> 52) & 0x7ff) as i32;
    let mantissa = bits & ((1u64 << 52) - 1);
    if biased == 0 && mantissa == 0 {
        return format!("{sign}0x0p+0");
    }
    let (lead, exp) = if biased == 0 { (0, -1022) } else { (1, biased - 1023) };
    let digits = format!("{mantissa:013x}");
    let digits = digits.trim_end_matches('0');
    if digits.is_empty() {
        format!("{sign}0x{lead}p{exp:+}")
    } else {
        format!("{sign}0x{lead}.{digits}p{exp:+}")
    }
}

pub fn parse_hex(text: &str) -> Result<f64, Failure> {
    match text {
        "nan" => Ok(f64::NAN),
        "inf" => Ok(f64::INFINITY),
        "-inf" => Ok(f64::NEG_INFINITY),
        _ => hexf_parse::parse_hexf64(text, false).map_err(|e| Failure::Invalid(format!("bad hex float '{text}': {e}"))),
    }
}

/// A shooting result with everything needed to re-evaluate it exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub param: ParamVector<f64>,
    pub params: PhysParams<f64>,
    pub schedule: MeshSchedule<f64>,
    pub scheme: Scheme,
    pub constraint: Option<AmplitudeConstraint<f64>>,
    pub f: f64,
    pub converged: bool,
    pub iterations: usize,
    pub function_evals: usize,
    pub jacobian_evals: usize,
    /// Value of the family parameter for this member.
    pub label: f64,
    /// Continuation target the label refers to, if produced by a sweep.
    pub target: Option<ContinuationTarget>,
    /// State at the end of the shooting horizon.
    pub profile: Option<SurfaceState<f64>>,
}

impl Solution {
    pub fn new(problem: &ShootingProblem<f64>, result: &ShootingResult<f64>, label: f64) -> Self {
        Self {
            param: result.param.clone(),
            params: problem.params,
            schedule: problem.schedule.clone(),
            scheme: problem.scheme,
            constraint: problem.constraint,
            f: result.f,
            converged: result.converged,
            iterations: result.iterations,
            function_evals: result.function_evals,
            jacobian_evals: result.jacobian_evals,
            label,
            target: None,
            profile: Some(result.final_state.clone()),
        }
    }

    pub fn problem(&self) -> ShootingProblem<f64> {
        let mut p = ShootingProblem::new(self.param.family, self.params, self.schedule.clone(), self.scheme);
        p.constraint = self.constraint;
        p
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let line = |s: &mut String, key: &str, v: f64| writeln!(s, "{key} {}  # {v:e}", hex(v)).unwrap();
        writeln!(s, "{SOLUTION_HEADER}").unwrap();
        writeln!(s, "family {}", self.param.family).unwrap();
        writeln!(s, "scheme {}", self.scheme).unwrap();
        line(&mut s, "g", self.params.g);
        line(&mut s, "tension", self.params.tension);
        match self.params.depth {
            Depth::Infinite => writeln!(s, "depth inf").unwrap(),
            Depth::Finite(h) => line(&mut s, "depth", h),
        }
        for seg in self.schedule.segments() {
            writeln!(s, "segment {} {} {} {} {}", hex(seg.theta), seg.steps, seg.m, seg.map.kappa(), hex(seg.map.rho()))
                .unwrap();
        }
        if let Some(c) = self.constraint {
            writeln!(s, "constraint {} {} {}", hex(c.position), hex(c.target), hex(c.weight)).unwrap();
        }
        match self.target {
            Some(ContinuationTarget::Coefficient(k)) => writeln!(s, "target c{k}").unwrap(),
            Some(ContinuationTarget::Amplitude) => writeln!(s, "target amplitude").unwrap(),
            None => {}
        }
        line(&mut s, "label", self.label);
        line(&mut s, "f", self.f);
        writeln!(s, "converged {}", self.converged).unwrap();
        writeln!(s, "counts {} {} {}", self.iterations, self.function_evals, self.jacobian_evals).unwrap();
        writeln!(s, "modes {}", self.param.modes()).unwrap();
        for (j, &c) in self.param.c.iter().enumerate() {
            writeln!(s, "c {j} {}  # {c:e}", hex(c)).unwrap();
        }
        if let Some(q) = &self.profile {
            let map = &self.schedule.last().map;
            writeln!(s, "profile {}", q.len()).unwrap();
            for ((x, e), p) in map.nodes(q.len()).iter().zip(&q.eta).zip(&q.phi) {
                writeln!(s, "{} {} {}  # {x:.6} {e:e} {p:e}", hex(*x), hex(*e), hex(*p)).unwrap();
            }
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self, Failure> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()));
        if text.lines().next() != Some(SOLUTION_HEADER) {
            return Err(Failure::Invalid(format!("not a solution file (expected '{SOLUTION_HEADER}')")));
        }
        let bad = |line: usize, what: &str| Failure::Invalid(format!("solution line {line}: {what}"));
        let mut family = None;
        let mut scheme = Scheme::Rk8;
        let (mut g, mut tension, mut depth) = (1.0, 0.0, Depth::Infinite);
        let mut segments = Vec::new();
        let mut constraint = None;
        let mut target = None;
        let (mut label, mut f, mut converged) = (0.0, f64::NAN, false);
        let mut counts = [0usize; 3];
        let mut coeffs: Vec<f64> = Vec::new();
        let mut profile = None;
        while let Some((n, body)) = lines.next() {
            if body.is_empty() {
                continue;
            }
            let words: Vec<&str> = body.split_whitespace().collect();
            let num = |i: usize| words.get(i).ok_or_else(|| bad(n, "missing field")).and_then(|w| parse_hex(w));
            let int = |i: usize| -> Result<usize, Failure> {
                words.get(i).and_then(|w| w.parse().ok()).ok_or_else(|| bad(n, "expected an integer"))
            };
            match words[0] {
                "family" => family = Some(words.get(1).ok_or_else(|| bad(n, "missing family"))?.parse::<Family>()?),
                "scheme" => scheme = words.get(1).ok_or_else(|| bad(n, "missing scheme"))?.parse()?,
                "g" => g = num(1)?,
                "tension" => tension = num(1)?,
                "depth" => depth = if words.get(1) == Some(&"inf") { Depth::Infinite } else { Depth::Finite(num(1)?) },
                "segment" => {
                    let kappa: i32 = words.get(4).and_then(|w| w.parse().ok()).ok_or_else(|| bad(n, "bad kappa"))?;
                    let rho = num(5)?;
                    let map = MeshMap::new(kappa, rho)?;
                    segments.push(Segment { theta: num(1)?, steps: int(2)?, m: int(3)?, map });
                }
                "constraint" => {
                    constraint = Some(AmplitudeConstraint { position: num(1)?, target: num(2)?, weight: num(3)? })
                }
                "target" => {
                    target = Some(match words.get(1) {
                        Some(&"amplitude") => ContinuationTarget::Amplitude,
                        Some(w) => ContinuationTarget::Coefficient(
                            w.strip_prefix('c').and_then(|k| k.parse().ok()).ok_or_else(|| bad(n, "bad target"))?,
                        ),
                        None => return Err(bad(n, "missing target")),
                    })
                }
                "label" => label = num(1)?,
                "f" => f = num(1)?,
                "converged" => converged = words.get(1) == Some(&"true"),
                "counts" => counts = [int(1)?, int(2)?, int(3)?],
                "modes" => coeffs = vec![f64::NAN; int(1)? + 1],
                "c" => {
                    let j = int(1)?;
                    *coeffs.get_mut(j).ok_or_else(|| bad(n, "coefficient index beyond 'modes'"))? = num(2)?;
                }
                "profile" => {
                    let m = int(1)?;
                    let (mut eta, mut phi) = (Vec::with_capacity(m), Vec::with_capacity(m));
                    for _ in 0..m {
                        let (n, body) = lines.next().ok_or_else(|| bad(n, "truncated profile"))?;
                        let w: Vec<&str> = body.split_whitespace().collect();
                        if w.len() != 3 {
                            return Err(bad(n, "profile rows need x, eta, phi"));
                        }
                        eta.push(parse_hex(w[1])?);
                        phi.push(parse_hex(w[2])?);
                    }
                    profile = Some(SurfaceState::new(eta, phi));
                }
                other => return Err(bad(n, &format!("unknown record '{other}'"))),
            }
        }
        let family = family.ok_or_else(|| Failure::Invalid("solution file lacks 'family'".into()))?;
        if coeffs.iter().any(|c| c.is_nan()) || coeffs.is_empty() {
            return Err(Failure::Invalid("solution file has missing coefficients".into()));
        }
        let param = ParamVector::new(family, coeffs);
        param.validate()?;
        let params = PhysParams { g, tension, depth };
        params.validate()?;
        Ok(Self {
            param,
            params,
            schedule: MeshSchedule::new(segments)?,
            scheme,
            constraint,
            f,
            converged,
            iterations: counts[0],
            function_evals: counts[1],
            jacobian_evals: counts[2],
            label,
            target,
            profile,
        })
    }

    pub fn read(path: &Path) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::Invalid(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| Failure::Invalid(format!("{}: {e}", path.display())))
    }

    pub fn write(&self, path: &Path) -> Result<(), Failure> {
        Ok(std::fs::write(path, self.to_text())?)
    }
}

/// Floquet spectrum with its family parameter.
pub fn spectrum_text(param: f64, records: &[FloquetRecord], cluster: &ClusterReport, resolved: bool, stable: bool) -> String {
    let mut s = String::new();
    writeln!(s, "{SPECTRUM_HEADER}").unwrap();
    writeln!(s, "# param {} {param:e}", hex(param)).unwrap();
    writeln!(
        s,
        "# cluster size {} pairs {} split {:e} pair_defect {:e} pattern {:?}",
        cluster.members.len(),
        cluster.pairs.len(),
        cluster.split,
        cluster.pair_defect,
        cluster.pattern
    )
    .unwrap();
    writeln!(s, "# resolved {resolved} stable {stable}").unwrap();
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(SPECTRUM_COLUMNS.split(',')).unwrap();
    for (i, r) in records.iter().enumerate() {
        w.serialize((i + 1, r.lambda.re, r.lambda.im, r.modulus, r.phase, r.mean_k, r.parity, r.err)).unwrap();
    }
    s.push_str(&String::from_utf8(w.into_inner().unwrap()).unwrap());
    s
}

/// Reads the columns needed for tracking; `λ` is returned for reference.
pub fn read_spectrum(path: &Path) -> Result<(SpectrumColumn<f64>, Vec<Complex<f64>>), Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::Invalid(format!("cannot read {}: {e}", path.display())))?;
    let bad = |what: String| Failure::Invalid(format!("{}: {what}", path.display()));
    if text.lines().next() != Some(SPECTRUM_HEADER) {
        return Err(bad(format!("expected '{SPECTRUM_HEADER}'")));
    }
    let param = text
        .lines()
        .find_map(|l| l.strip_prefix("# param "))
        .and_then(|rest| rest.split_whitespace().next())
        .ok_or_else(|| bad("missing '# param' line".into()))
        .and_then(parse_hex)?;
    let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    let header: Vec<String> = reader.headers().map_err(|e| bad(e.to_string()))?.iter().map(String::from).collect();
    if header.join(",") != SPECTRUM_COLUMNS {
        return Err(bad(format!("unexpected columns '{}'", header.join(","))));
    }
    let mut col = SpectrumColumn { param, modulus: vec![], phase: vec![], mean_k: vec![], parity: vec![] };
    let mut lambdas = Vec::new();
    for row in reader.deserialize::<(usize, f64, f64, f64, f64, f64, u8, f64)>() {
        let (_, re, im, modulus, phase, mean_k, parity, _) = row.map_err(|e| bad(e.to_string()))?;
        lambdas.push(Complex::new(re, im));
        col.modulus.push(modulus);
        col.phase.push(phase);
        col.mean_k.push(mean_k);
        col.parity.push(parity);
    }
    col.validate()?;
    Ok((col, lambdas))
}

/// Manual corrections, one `column a b` triple per line (1-based).
pub fn read_swaps(path: &Path) -> Result<Vec<Swap>, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::Invalid(format!("cannot read {}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let nums: Vec<usize> = body.split_whitespace().filter_map(|w| w.parse().ok()).collect();
        match nums[..] {
            [column, a, b] if column >= 1 && a >= 1 && b >= 1 && body.split_whitespace().count() == 3 => {
                out.push(Swap { column: column - 1, a: a - 1, b: b - 1 })
            }
            _ => {
                return Err(Failure::Invalid(format!(
                    "{} line {}: expected three positive integers 'column a b'",
                    path.display(),
                    i + 1
                )))
            }
        }
    }
    Ok(out)
}

pub fn permutation_text(table: &PermutationTable, params: &[f64]) -> String {
    let mut s = format!("{PERMUTATION_HEADER}\n# param followed by the 1-based raw index of each tracked row\n");
    for (p, col) in params.iter().zip(table.columns()) {
        let idx: Vec<String> = col.iter().map(|i| (i + 1).to_string()).collect();
        writeln!(s, "{} {}", hex(*p), idx.join(" ")).unwrap();
    }
    s
}

pub fn family_text(columns: &[SpectrumColumn<f64>]) -> String {
    let mut s = format!("{FAMILY_HEADER}\n");
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["column", "param", "row", "modulus", "phase", "mean_k", "parity"]).unwrap();
    for (c, col) in columns.iter().enumerate() {
        for r in 0..col.len() {
            w.serialize((c + 1, col.param, r + 1, col.modulus[r], col.phase[r], col.mean_k[r], col.parity[r])).unwrap();
        }
    }
    s.push_str(&String::from_utf8(w.into_inner().unwrap()).unwrap());
    s
}

/// Gnuplot data with one index block per tracked row: `param value` pairs
/// separated by two blank lines, so `plot 'f' index 3:7` selects rows 4-8.
pub fn curve_text(title: &str, columns: &[SpectrumColumn<f64>], value: impl Fn(&SpectrumColumn<f64>, usize) -> f64) -> String {
    let mut s = format!("# waterwave curves v1\n# {title}\n");
    let rows = columns.first().map_or(0, |c| c.len());
    for r in 0..rows {
        writeln!(s, "# row {}", r + 1).unwrap();
        for col in columns {
            writeln!(s, "{} {}", col.param, value(col, r)).unwrap();
        }
        s.push_str("\n\n");
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hex_round_trip_of_special_values() {
        for v in [0.0, -0.0, 1.0, -2.5, 0.1, f64::MAX, f64::MIN_POSITIVE, 5e-324, std::f64::consts::PI, 1e300] {
            let back = parse_hex(&hex(v)).unwrap();
            assert_eq!(back.to_bits(), v.to_bits(), "{v} -> {}", hex(v));
        }
        assert_eq!(hex(1.0), "0x1p+0");
        assert_eq!(hex(0.5), "0x1p-1");
        assert_eq!(hex(3.0), "0x1.8p+1");
        assert!(parse_hex("inf").unwrap().is_infinite());
        assert!(parse_hex("1.5").is_err());
    }

    proptest::proptest! {
        #[test]
        fn hex_round_trip(bits in proptest::prelude::any::<u64>()) {
            let v = f64::from_bits(bits);
            let back = parse_hex(&hex(v)).unwrap();
            proptest::prop_assert!(back.to_bits() == v.to_bits() || (v.is_nan() && back.is_nan()));
        }
    }

    #[test]
    fn swaps_are_one_based() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("swaps.txt");
        std::fs::write(&path, "# column a b\n3 1 2\n\n5 4 7 # late\n").unwrap();
        let sw = read_swaps(&path).unwrap();
        assert_eq!(sw, vec![Swap { column: 2, a: 0, b: 1 }, Swap { column: 4, a: 3, b: 6 }]);
        std::fs::write(&path, "0 1 2\n").unwrap();
        assert!(read_swaps(&path).is_err());
        std::fs::write(&path, "1 2\n").unwrap();
        assert!(read_swaps(&path).is_err());
    }
}
