use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use proxline::{AlmStatus, SolveStatus};
use serde::{Deserialize, Serialize};

use crate::error::{BenchError, Result};

pub const CSV_HEADER: [&str; 11] = [
    "problem", "solver", "status", "iters", "n_f", "n_grad", "n_prox", "n_matvec", "wall_ms", "resid_inf", "phi",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Converged,
    MaxIter,
    LineSearchFailed,
    Diverged,
    /// ALM stopped at its outer-iteration limit.
    NotConverged,
    /// The solver returned an error or panicked.
    Error,
}

impl RunStatus {
    const ALL: [RunStatus; 6] = [
        RunStatus::Converged,
        RunStatus::MaxIter,
        RunStatus::LineSearchFailed,
        RunStatus::Diverged,
        RunStatus::NotConverged,
        RunStatus::Error,
    ];

    pub fn name(self) -> &'static str {
        match self {
            RunStatus::Converged => "converged",
            RunStatus::MaxIter => "max_iter",
            RunStatus::LineSearchFailed => "linesearch_failed",
            RunStatus::Diverged => "diverged",
            RunStatus::NotConverged => "not_converged",
            RunStatus::Error => "error",
        }
    }

    pub fn converged(self) -> bool {
        self == RunStatus::Converged
    }
}

impl fmt::Display for RunStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RunStatus {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self> {
        RunStatus::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| BenchError::config(format!("unknown run status {s:?}")))
    }
}

impl From<SolveStatus> for RunStatus {
    fn from(s: SolveStatus) -> Self {
        match s {
            SolveStatus::Converged => RunStatus::Converged,
            SolveStatus::MaxIter => RunStatus::MaxIter,
            SolveStatus::LineSearchFailed => RunStatus::LineSearchFailed,
            SolveStatus::Diverged => RunStatus::Diverged,
        }
    }
}

impl From<AlmStatus> for RunStatus {
    fn from(s: AlmStatus) -> Self {
        match s {
            AlmStatus::Converged => RunStatus::Converged,
            AlmStatus::NotConverged => RunStatus::NotConverged,
            AlmStatus::InnerFailure(inner) => inner.into(),
        }
    }
}

/// One (problem, solver) run. Cost fields are filled in whatever the status.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRecord {
    pub problem: String,
    pub solver: String,
    pub status: RunStatus,
    pub iters: u64,
    pub n_f: u64,
    pub n_grad: u64,
    pub n_prox: u64,
    pub n_matvec: u64,
    #[serde(with = "float_text")]
    pub wall_ms: f64,
    #[serde(with = "float_text")]
    pub resid_inf: f64,
    #[serde(with = "float_text")]
    pub phi: f64,
    /// Hash of the settings that produced the run; not part of the file
    /// schemas.
    #[serde(skip)]
    pub config_hash: u64,
}

impl RunRecord {
    /// Record for a run that produced no result.
    pub fn failed(problem: &str, solver: &str, config_hash: u64) -> Self {
        Self {
            problem: problem.to_string(),
            solver: solver.to_string(),
            status: RunStatus::Error,
            iters: 0,
            n_f: 0,
            n_grad: 0,
            n_prox: 0,
            n_matvec: 0,
            wall_ms: 0.0,
            resid_inf: f64::NAN,
            phi: f64::NAN,
            config_hash,
        }
    }

    pub fn evals_f_plus_grad(&self) -> u64 {
        self.n_f + self.n_grad
    }

    /// Field-wise equality with floats compared bit for bit and the hash
    /// ignored, i.e. what survives a file round trip.
    pub fn same_fields(&self, other: &RunRecord) -> bool {
        self.problem == other.problem
            && self.solver == other.solver
            && self.status == other.status
            && (self.iters, self.n_f, self.n_grad, self.n_prox, self.n_matvec)
                == (other.iters, other.n_f, other.n_grad, other.n_prox, other.n_matvec)
            && self.wall_ms.to_bits() == other.wall_ms.to_bits()
            && self.resid_inf.to_bits() == other.resid_inf.to_bits()
            && self.phi.to_bits() == other.phi.to_bits()
    }

    fn csv_row(&self) -> [String; 11] {
        [
            self.problem.clone(),
            self.solver.clone(),
            self.status.to_string(),
            self.iters.to_string(),
            self.n_f.to_string(),
            self.n_grad.to_string(),
            self.n_prox.to_string(),
            self.n_matvec.to_string(),
            fmt_float(self.wall_ms),
            fmt_float(self.resid_inf),
            fmt_float(self.phi),
        ]
    }
}

/// Sorts by (problem, solver), the order used for every emitted file.
pub fn sort_records(records: &mut [RunRecord]) {
    records.sort_by(|a, b| (&a.problem, &a.solver).cmp(&(&b.problem, &b.solver)));
}

/// 17 significant digits: parses back to the same `f64`.
pub fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_csv<W: Write>(out: W, records: &[RunRecord]) -> std::result::Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in records {
        w.write_record(r.csv_row())?;
    }
    w.flush()?;
    Ok(())
}

/// Reads records written by [`write_csv`]; `origin` only labels errors.
pub fn read_csv<R: Read>(input: R, origin: &Path) -> Result<Vec<RunRecord>> {
    let csv_err = |source| BenchError::Csv { path: origin.to_path_buf(), source };
    let mut rd = csv::Reader::from_reader(input);
    let header = rd.headers().map_err(csv_err)?.clone();
    if header.iter().ne(CSV_HEADER) {
        return Err(BenchError::Record {
            path: origin.to_path_buf(),
            line: 1,
            msg: format!("expected header {}", CSV_HEADER.join(",")),
        });
    }
    let mut records = Vec::new();
    for row in rd.records() {
        let row = row.map_err(csv_err)?;
        let line = row.position().map_or(0, |p| p.line());
        let bad = |msg: String| BenchError::Record { path: origin.to_path_buf(), line, msg };
        let int = |i: usize| row[i].parse::<u64>().map_err(|e| bad(format!("{}: {e}", CSV_HEADER[i])));
        let float = |i: usize| row[i].parse::<f64>().map_err(|e| bad(format!("{}: {e}", CSV_HEADER[i])));
        records.push(RunRecord {
            problem: row[0].to_string(),
            solver: row[1].to_string(),
            status: row[2].parse().map_err(|e: BenchError| bad(e.to_string()))?,
            iters: int(3)?,
            n_f: int(4)?,
            n_grad: int(5)?,
            n_prox: int(6)?,
            n_matvec: int(7)?,
            wall_ms: float(8)?,
            resid_inf: float(9)?,
            phi: float(10)?,
            config_hash: 0,
        });
    }
    Ok(records)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    /// `.json` selects JSON; anything else is CSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("json") => Format::Json,
            _ => Format::Csv,
        }
    }
}

impl FromStr for Format {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(BenchError::config(format!("unknown format {other:?} (csv or json)"))),
        }
    }
}

pub fn write_records<W: Write>(out: W, records: &[RunRecord], format: Format, origin: &Path) -> Result<()> {
    match format {
        Format::Csv => write_csv(out, records).map_err(|source| BenchError::Csv { path: origin.to_path_buf(), source }),
        Format::Json => {
            let mut out = out;
            serde_json::to_writer_pretty(&mut out, records)
                .map_err(|source| BenchError::Json { path: origin.to_path_buf(), source })?;
            writeln!(out).map_err(|source| BenchError::Io { path: origin.to_path_buf(), source })
        }
    }
}

pub fn emit_records(path: &Path, records: &[RunRecord], format: Format) -> Result<()> {
    let file = File::create(path).map_err(|source| BenchError::Io { path: path.to_path_buf(), source })?;
    write_records(BufWriter::new(file), records, format, path)
}

pub fn load_records(path: &Path) -> Result<Vec<RunRecord>> {
    let file = File::open(path).map_err(|source| BenchError::Io { path: path.to_path_buf(), source })?;
    let input = BufReader::new(file);
    match Format::from_path(path) {
        Format::Csv => read_csv(input, path),
        Format::Json => {
            serde_json::from_reader(input).map_err(|source| BenchError::Json { path: path.to_path_buf(), source })
        }
    }
}

/// JSON has no NaN or infinity: those are written as the strings `"NaN"`,
/// `"inf"` and `"-inf"`.
mod float_text {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_str(&v.to_string())
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) => t.parse().map_err(serde::de::Error::custom),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(problem: &str, solver: &str) -> RunRecord {
        RunRecord {
            problem: problem.into(),
            solver: solver.into(),
            status: RunStatus::Converged,
            iters: 12,
            n_f: 30,
            n_grad: 25,
            n_prox: 31,
            n_matvec: 80,
            wall_ms: 0.1 + 0.2,
            resid_inf: 1.0 / 3.0 * 1e-7,
            phi: -std::f64::consts::PI,
            config_hash: 7,
        }
    }

    #[test]
    fn empty_list_gives_header_only() {
        let mut buf = Vec::new();
        write_csv(&mut buf, &[]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), format!("{}\n", CSV_HEADER.join(",")));
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let mut odd = sample("p,with \"quotes\"", "zerofpr");
        odd.status = RunStatus::Diverged;
        odd.resid_inf = f64::NAN;
        odd.phi = f64::INFINITY;
        let records = vec![sample("a", "panoc++"), odd];
        let mut buf = Vec::new();
        write_csv(&mut buf, &records).unwrap();
        let back = read_csv(buf.as_slice(), Path::new("mem")).unwrap();
        assert_eq!(back.len(), 2);
        for (a, b) in records.iter().zip(&back) {
            assert!(a.same_fields(b), "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn json_round_trip_keeps_non_finite_values() {
        let mut r = sample("a", "pg");
        r.resid_inf = f64::NEG_INFINITY;
        r.phi = f64::NAN;
        let text = serde_json::to_string(&vec![r.clone()]).unwrap();
        assert!(!text.contains("config_hash"));
        let back: Vec<RunRecord> = serde_json::from_str(&text).unwrap();
        assert!(r.same_fields(&back[0]));
    }

    #[test]
    fn json_fields_match_csv_header() {
        let v = serde_json::to_value(sample("a", "pg")).unwrap();
        let keys: Vec<&str> = v.as_object().unwrap().keys().map(String::as_str).collect();
        let mut expected = CSV_HEADER.to_vec();
        expected.sort_unstable();
        let mut keys = keys;
        keys.sort_unstable();
        assert_eq!(keys, expected);
    }

    #[test]
    fn wrong_header_is_rejected() {
        let text = "problem,solver\na,b\n";
        assert!(read_csv(text.as_bytes(), Path::new("x.csv")).is_err());
    }
}
