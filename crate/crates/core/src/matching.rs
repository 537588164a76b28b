//! Tracking Floquet multipliers along a solution family.
//!
//! Adjacent spectra are paired by solving a linear assignment problem whose
//! cost rewards continuity of phase (with slope extrapolation), modulus,
//! mean wave number and parity.

use crate::error::{Error, Result};
use crate::num::{fabs, Real};

/// One spectrum, already truncated to a fixed number of multipliers.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumColumn<T> {
    pub param: T,
    pub modulus: Vec<T>,
    pub phase: Vec<T>,
    pub mean_k: Vec<T>,
    pub parity: Vec<u8>,
}

impl<T: Real> SpectrumColumn<T> {
    pub fn len(&self) -> usize {
        self.modulus.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modulus.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.len();
        if self.phase.len() != n || self.mean_k.len() != n || self.parity.len() != n {
            return Err(Error::Mismatch(format!("spectrum at {} has ragged columns", self.param)));
        }
        if self.parity.iter().any(|&p| p > 1) {
            return Err(Error::Mismatch("parity must be 0 or 1".into()));
        }
        Ok(())
    }

    /// Entries reordered so that position `i` holds source entry `order[i]`.
    pub fn permuted(&self, order: &[usize]) -> Self {
        Self {
            param: self.param,
            modulus: order.iter().map(|&i| self.modulus[i]).collect(),
            phase: order.iter().map(|&i| self.phase[i]).collect(),
            mean_k: order.iter().map(|&i| self.mean_k[i]).collect(),
            parity: order.iter().map(|&i| self.parity[i]).collect(),
        }
    }
}

/// Limits extrapolation slopes to `[-5, 5]`.
pub fn clamp<T: Real>(x: T) -> T {
    let lim = T::lit(5.0);
    x.max(-lim).min(lim)
}

/// Representative of `x` modulo `2π` in `(-π, π]`.
pub fn wrap_phase<T: Real>(x: T) -> T {
    let tau = T::two_pi();
    let pi = T::PI();
    let mut y = x - tau * (x / tau).round();
    if y <= -pi {
        y = y + tau;
    } else if y > pi {
        y = y - tau;
    }
    y
}

/// Assignment cost between spectrum `cur` and the next one.
///
/// `prev` is the (already reordered) column before `cur`, used for phase
/// extrapolation.
pub fn cost_matrix<T: Real>(
    prev: Option<&SpectrumColumn<T>>,
    cur: &SpectrumColumn<T>,
    next: &SpectrumColumn<T>,
) -> Result<Vec<Vec<T>>> {
    cur.validate()?;
    next.validate()?;
    let n = cur.len();
    if next.len() != n || prev.is_some_and(|p| p.len() != n) {
        return Err(Error::Mismatch(format!("spectra of different lengths at {} and {}", cur.param, next.param)));
    }
    let off = |v: T| fabs(v - T::one()) > T::lit(1e-6);
    let step = next.param - cur.param;
    let slopes: Vec<Option<T>> = (0..n)
        .map(|i| {
            let p = prev?;
            let span = cur.param - p.param;
            if off(cur.modulus[i]) || off(p.modulus[i]) || span == T::zero() {
                return None;
            }
            Some(clamp(wrap_phase(cur.phase[i] - p.phase[i]) / span))
        })
        .collect();
    let ten = T::lit(10.0);
    let hundred = T::lit(100.0);
    Ok((0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    let slope = match slopes[i] {
                        Some(m) if !off(next.modulus[j]) => m,
                        _ => T::zero(),
                    };
                    let dphase = wrap_phase(cur.phase[i] + slope * step - next.phase[j]);
                    ten * fabs(dphase).sqrt()
                        + fabs(cur.modulus[i] - next.modulus[j]).sqrt()
                        + fabs(cur.mean_k[i] - next.mean_k[j]).sqrt()
                        + hundred * T::idx(cur.parity[i].abs_diff(next.parity[j]) as usize)
                })
                .collect()
        })
        .collect())
}

/// Minimum-cost perfect matching; `perm[i]` is the column assigned to row `i`.
///
/// Shortest augmenting paths with dual potentials, rows inserted in order.
/// Ties go to the lowest column index, so a constant matrix yields the
/// identity.
pub fn assign<T: Real>(cost: &[Vec<T>]) -> Result<(Vec<usize>, T)> {
    let n = cost.len();
    for (i, row) in cost.iter().enumerate() {
        if row.len() != n {
            return Err(Error::Mismatch(format!("cost row {i} has length {} (expected {n})", row.len())));
        }
        if let Some(j) = row.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("cost entry ({i}, {j})")));
        }
    }
    // 1-based arrays with a virtual column 0.
    let inf = T::infinity();
    let mut u = vec![T::zero(); n + 1];
    let mut v = vec![T::zero(); n + 1];
    let mut owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let reduced = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if reduced < minv[j] {
                    minv[j] = reduced;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[owner[j]] = u[owner[j]] + delta;
                    v[j] = v[j] - delta;
                } else {
                    minv[j] = minv[j] - delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut perm = vec![0; n];
    for j in 1..=n {
        perm[owner[j] - 1] = j - 1;
    }
    let total = perm.iter().enumerate().map(|(i, &j)| cost[i][j]).sum();
    Ok((perm, total))
}

/// `table[s][i]` is the index in the raw spectrum `s` that belongs at row `i`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PermutationTable {
    columns: Vec<Vec<usize>>,
}

impl PermutationTable {
    pub fn new(columns: Vec<Vec<usize>>) -> Result<Self> {
        let t = Self { columns };
        t.validate()?;
        Ok(t)
    }

    pub fn identity(rows: usize, cols: usize) -> Self {
        Self { columns: vec![(0..rows).collect(); cols] }
    }

    pub fn columns(&self) -> &[Vec<usize>] {
        &self.columns
    }

    pub fn rows(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.rows();
        for (s, col) in self.columns.iter().enumerate() {
            let mut seen = vec![false; n];
            if col.len() != n {
                return Err(Error::Index(format!("column {s} has {} rows (expected {n})", col.len())));
            }
            for &i in col {
                if i >= n || std::mem::replace(&mut seen[i], true) {
                    return Err(Error::Index(format!("column {s} is not a permutation")));
                }
            }
        }
        Ok(())
    }
}

/// Matches every column to its predecessor, left to right.
pub fn track_family<T: Real>(
    columns: &[SpectrumColumn<T>],
) -> Result<(PermutationTable, Vec<SpectrumColumn<T>>)> {
    if columns.len() < 2 {
        return Err(Error::Config("tracking needs at least two spectra".into()));
    }
    let n = columns[0].len();
    let mut table = vec![(0..n).collect::<Vec<_>>()];
    let mut ordered = vec![columns[0].clone()];
    for s in 1..columns.len() {
        let prev = if s >= 2 { Some(&ordered[s - 2]) } else { None };
        let cost = cost_matrix(prev, &ordered[s - 1], &columns[s])?;
        let (perm, _) = assign(&cost)?;
        ordered.push(columns[s].permuted(&perm));
        table.push(perm);
    }
    Ok((PermutationTable { columns: table }, ordered))
}

/// Manual correction: exchange rows `a` and `b` from column `column` onward.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Swap {
    pub column: usize,
    pub a: usize,
    pub b: usize,
}

pub fn apply_swaps(table: &PermutationTable, swaps: &[Swap]) -> Result<PermutationTable> {
    let mut out = table.clone();
    let (n, l) = (table.rows(), table.columns.len());
    for sw in swaps {
        if sw.column >= l || sw.a >= n || sw.b >= n {
            return Err(Error::Index(format!(
                "swap (column {}, rows {} and {}) outside a {n}x{l} table",
                sw.column, sw.a, sw.b
            )));
        }
        for col in &mut out.columns[sw.column..] {
            col.swap(sw.a, sw.b);
        }
    }
    out.validate()?;
    Ok(out)
}

/// Raw spectra reordered by a table.
pub fn reorder<T: Real>(columns: &[SpectrumColumn<T>], table: &PermutationTable) -> Result<Vec<SpectrumColumn<T>>> {
    if columns.len() != table.columns.len() {
        return Err(Error::Mismatch(format!(
            "{} spectra but the table has {} columns",
            columns.len(),
            table.columns.len()
        )));
    }
    columns
        .iter()
        .zip(&table.columns)
        .map(|(c, p)| {
            if c.len() != p.len() {
                return Err(Error::Mismatch(format!("spectrum at {} has the wrong length", c.param)));
            }
            Ok(c.permuted(p))
        })
        .collect()
}
