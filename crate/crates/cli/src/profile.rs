use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use crate::error::{BenchError, Result};
use crate::record::{fmt_float, RunRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    EvalsFPlusGrad,
    Matvec,
    Iterations,
    Time,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::EvalsFPlusGrad => "evals_f_plus_grad",
            Metric::Matvec => "matvec",
            Metric::Iterations => "iterations",
            Metric::Time => "time",
        }
    }

    pub fn value(self, r: &RunRecord) -> f64 {
        match self {
            Metric::EvalsFPlusGrad => r.evals_f_plus_grad() as f64,
            Metric::Matvec => r.n_matvec as f64,
            Metric::Iterations => r.iters as f64,
            Metric::Time => r.wall_ms,
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self> {
        [Metric::EvalsFPlusGrad, Metric::Matvec, Metric::Iterations, Metric::Time]
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| {
                BenchError::config(format!("unknown metric {s:?} (evals_f_plus_grad, matvec, iterations, time)"))
            })
    }
}

/// Step function `rho(tau)`: `points` are the breakpoints `(tau, rho)` in
/// increasing `tau`, starting at `tau = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileCurve {
    pub solver: String,
    pub points: Vec<(f64, f64)>,
}

impl ProfileCurve {
    pub fn rho(&self, tau: f64) -> f64 {
        self.points
            .iter()
            .take_while(|(t, _)| *t <= tau)
            .last()
            .map_or(0.0, |&(_, r)| r)
    }

    /// Fraction of problems solved.
    pub fn solved_fraction(&self) -> f64 {
        self.points.last().map_or(0.0, |&(_, r)| r)
    }
}

/// Ratios `r_{p,s}` per solver, one entry per problem (`∞` when the solver
/// did not converge or has no record).
pub fn performance_ratios(records: &[RunRecord], metric: Metric) -> Result<BTreeMap<String, Vec<f64>>> {
    let problems: BTreeSet<&str> = records.iter().map(|r| r.problem.as_str()).collect();
    let solvers: BTreeSet<&str> = records.iter().map(|r| r.solver.as_str()).collect();
    let mut cost: BTreeMap<(&str, &str), f64> = BTreeMap::new();
    for r in records {
        let v = if r.status.converged() { metric.value(r) } else { f64::INFINITY };
        cost.entry((r.problem.as_str(), r.solver.as_str())).or_insert(v);
    }
    let mut any_solved = false;
    let mut ratios: BTreeMap<String, Vec<f64>> = solvers.iter().map(|s| (s.to_string(), Vec::new())).collect();
    for p in &problems {
        let best = solvers
            .iter()
            .filter_map(|s| cost.get(&(*p, *s)))
            .copied()
            .fold(f64::INFINITY, f64::min);
        any_solved |= best.is_finite();
        for s in &solvers {
            let v = cost.get(&(*p, *s)).copied().unwrap_or(f64::INFINITY);
            let ratio = if !v.is_finite() {
                f64::INFINITY
            } else if best == 0.0 {
                if v == 0.0 { 1.0 } else { f64::INFINITY }
            } else {
                v / best
            };
            ratios.get_mut(*s).expect("solver listed").push(ratio);
        }
    }
    if !any_solved {
        return Err(BenchError::EmptyProfile { metric: metric.to_string() });
    }
    Ok(ratios)
}

/// Dolan-Moré profiles, one curve per solver in name order.
pub fn performance_profile(records: &[RunRecord], metric: Metric) -> Result<Vec<ProfileCurve>> {
    if records.is_empty() {
        return Err(BenchError::EmptyProfile { metric: metric.to_string() });
    }
    let ratios = performance_ratios(records, metric)?;
    Ok(ratios
        .into_iter()
        .map(|(solver, mut r)| {
            let count = r.len() as f64;
            r.sort_by(f64::total_cmp);
            let mut points: Vec<(f64, f64)> = Vec::new();
            for (i, &tau) in r.iter().enumerate() {
                if !tau.is_finite() {
                    break;
                }
                let rho = (i + 1) as f64 / count;
                match points.last_mut() {
                    Some(last) if last.0 == tau => last.1 = rho,
                    _ => points.push((tau, rho)),
                }
            }
            if points.first().is_none_or(|&(t, _)| t > 1.0) {
                points.insert(0, (1.0, 0.0));
            }
            ProfileCurve { solver, points }
        })
        .collect())
}

/// `solver,tau,rho`, rows sorted by (solver, tau).
pub fn write_profile_csv<W: Write>(out: W, curves: &[ProfileCurve]) -> std::result::Result<(), csv::Error> {
    let mut rows: Vec<(&str, f64, f64)> = curves
        .iter()
        .flat_map(|c| c.points.iter().map(move |&(t, r)| (c.solver.as_str(), t, r)))
        .collect();
    rows.sort_by(|a, b| a.0.cmp(b.0).then(a.1.total_cmp(&b.1)));
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["solver", "tau", "rho"])?;
    for (s, t, r) in rows {
        w.write_record([s.to_string(), fmt_float(t), fmt_float(r)])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::record::RunStatus;

    pub(crate) fn rec(problem: &str, solver: &str, cost: u64, converged: bool) -> RunRecord {
        let mut r = RunRecord::failed(problem, solver, 0);
        r.status = if converged { RunStatus::Converged } else { RunStatus::MaxIter };
        r.n_matvec = cost;
        r.iters = cost;
        r
    }

    #[test]
    fn two_solver_example() {
        let records = [rec("p1", "A", 2, true), rec("p2", "A", 8, true), rec("p1", "B", 4, true), rec("p2", "B", 4, true)];
        let curves = performance_profile(&records, Metric::Matvec).unwrap();
        let (a, b) = (&curves[0], &curves[1]);
        assert_eq!((a.rho(1.0), b.rho(1.0)), (0.5, 0.5));
        assert_eq!((a.rho(2.0), b.rho(2.0)), (1.0, 1.0));
        assert_eq!(a.points, vec![(1.0, 0.5), (2.0, 1.0)]);
    }

    #[test]
    fn single_solver_is_its_own_best() {
        let records = [rec("p1", "A", 3, true), rec("p2", "A", 9, true)];
        let curves = performance_profile(&records, Metric::Iterations).unwrap();
        assert_eq!(curves[0].rho(1.0), 1.0);
    }

    #[test]
    fn failing_solver_stays_at_zero() {
        let records = [rec("p1", "A", 3, true), rec("p1", "B", 1, false), rec("p2", "A", 5, true), rec("p2", "B", 1, false)];
        let curves = performance_profile(&records, Metric::Matvec).unwrap();
        let b = curves.iter().find(|c| c.solver == "B").unwrap();
        for tau in [1.0, 2.0, 1e12] {
            assert_eq!(b.rho(tau), 0.0);
        }
        assert_eq!(b.solved_fraction(), 0.0);
    }

    #[test]
    fn nothing_converged_is_an_error() {
        let records = [rec("p1", "A", 3, false)];
        assert!(matches!(performance_profile(&records, Metric::Matvec), Err(BenchError::EmptyProfile { .. })));
        assert!(performance_profile(&[], Metric::Matvec).is_err());
    }

    #[test]
    fn profile_rows_are_sorted() {
        let curves = vec![
            ProfileCurve { solver: "b".into(), points: vec![(1.0, 0.5), (3.0, 1.0)] },
            ProfileCurve { solver: "a".into(), points: vec![(2.0, 1.0), (1.0, 0.0)] },
        ];
        let mut buf = Vec::new();
        write_profile_csv(&mut buf, &curves).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let keys: Vec<(String, f64)> = text
            .lines()
            .skip(1)
            .map(|l| {
                let f: Vec<&str> = l.split(',').collect();
                (f[0].to_string(), f[1].parse().unwrap())
            })
            .collect();
        assert_eq!(keys, vec![("a".into(), 1.0), ("a".into(), 2.0), ("b".into(), 1.0), ("b".into(), 3.0)]);
        assert!(text.starts_with("solver,tau,rho\n"));
    }
}
