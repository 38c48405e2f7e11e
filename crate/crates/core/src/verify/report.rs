//! Report types, convergence-order fits and on-disk artifacts.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::catalog::GlobalInvariantSeries;
use crate::error::{LabError, Result};
use crate::verify::config::ExperimentConfig;

/// Fitted orders of a sequence of `(h, e)` pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceOrder {
    /// `log(e_k / e_{k+1}) / log(h_k / h_{k+1})`; `None` where a norm is
    /// not positive.
    pub pairwise: Vec<Option<f64>>,
    /// Least-squares slope of `log e` against `log h` over positive norms.
    pub aggregate: Option<f64>,
    /// Some pair had a zero or negative norm.
    pub undefined_pairs: bool,
    /// The aggregate is below 0.5: the norms sit on a floor.
    pub floor_limited: bool,
}

pub fn convergence_order(norms: &[(f64, f64)]) -> Result<ConvergenceOrder> {
    if norms.len() < 2 {
        return Err(LabError::InvalidParameter(format!(
            "an order needs at least two (h, e) pairs, got {}",
            norms.len()
        )));
    }
    for w in norms.windows(2) {
        if !(w[1].0 < w[0].0) || !(w[1].0 > 0.0) {
            return Err(LabError::InvalidParameter(format!(
                "h must be positive and strictly decreasing, got {} then {}",
                w[0].0, w[1].0
            )));
        }
    }
    let pairwise: Vec<Option<f64>> = norms
        .windows(2)
        .map(|w| {
            let ((h0, e0), (h1, e1)) = (w[0], w[1]);
            (e0 > 0.0 && e1 > 0.0).then(|| (e0 / e1).ln() / (h0 / h1).ln())
        })
        .collect();
    let undefined_pairs = pairwise.iter().any(Option::is_none);
    let pts: Vec<(f64, f64)> = norms
        .iter()
        .filter(|(_, e)| *e > 0.0)
        .map(|(h, e)| (h.ln(), e.ln()))
        .collect();
    let aggregate = (pts.len() >= 2).then(|| {
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        sxy / sxx
    });
    Ok(ConvergenceOrder {
        pairwise,
        floor_limited: aggregate.is_some_and(|p| p < 0.5),
        aggregate,
        undefined_pairs,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckCategory {
    Regression,
    Residual,
    Order,
    Drift,
    Defect,
    Admittance,
    Algebra,
}

impl CheckCategory {
    /// Process exit code when this is the first failing category.
    pub fn exit_code(self) -> i32 {
        match self {
            Self::Regression => 10,
            Self::Residual => 11,
            Self::Order => 12,
            Self::Drift => 13,
            Self::Defect => 14,
            Self::Admittance => 15,
            Self::Algebra => 16,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Comparison {
    /// `value <= tolerance`
    AtMost,
    /// `value >= tolerance`
    AtLeast,
    /// `|value − target| <= tolerance`
    Within { target: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub category: CheckCategory,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub law: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rung: Option<usize>,
    pub value: f64,
    pub comparison: Comparison,
    pub tolerance: f64,
    pub pass: bool,
}

impl Check {
    pub fn new(name: impl Into<String>, category: CheckCategory, value: f64, comparison: Comparison, tolerance: f64) -> Self {
        let pass = value.is_finite()
            && match comparison {
                Comparison::AtMost => value <= tolerance,
                Comparison::AtLeast => value >= tolerance,
                Comparison::Within { target } => (value - target).abs() <= tolerance,
            };
        Self {
            name: name.into(),
            category,
            law: None,
            rung: None,
            value,
            comparison,
            tolerance,
            pass,
        }
    }

    pub fn for_law(mut self, law: &str) -> Self {
        self.law = Some(law.to_string());
        self
    }

    pub fn at_rung(mut self, rung: usize) -> Self {
        self.rung = Some(rung);
        self
    }

    pub fn describe(&self) -> String {
        let rel = match self.comparison {
            Comparison::AtMost => format!("<= {:.3e}", self.tolerance),
            Comparison::AtLeast => format!(">= {:.3e}", self.tolerance),
            Comparison::Within { target } => format!("within {} of {}", self.tolerance, target),
        };
        format!(
            "{} {} [{:?}]: {:.6e} {}",
            if self.pass { "PASS" } else { "FAIL" },
            self.name,
            self.category,
            self.value,
            rel
        )
    }
}

/// One law on one rung.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LawRungResult {
    pub l2: f64,
    pub max: f64,
    pub normalized: Option<f64>,
    pub drift: Option<f64>,
    pub defect_relative: Option<f64>,
    pub invariant: Option<GlobalInvariantSeries>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LawStudy {
    pub law: String,
    pub condition: String,
    pub provenance: String,
    pub rungs: Vec<LawRungResult>,
    pub order: Option<ConvergenceOrder>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RungSummary {
    pub index: usize,
    pub n: usize,
    pub h: f64,
    pub dt: f64,
    pub steps: usize,
    /// Experiment-specific scalars, e.g. decay error or adjoint residual.
    pub metrics: BTreeMap<String, f64>,
}

/// Raw arrays of one field state, written when snapshots are enabled.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub name: String,
    pub shape: [usize; 3],
    pub t: f64,
    pub components: Vec<String>,
    pub data: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerificationReport {
    pub experiment: String,
    pub config: ExperimentConfig,
    pub rungs: Vec<RungSummary>,
    pub laws: Vec<LawStudy>,
    pub metric_orders: BTreeMap<String, ConvergenceOrder>,
    pub checks: Vec<Check>,
    #[serde(skip)]
    pub snapshots: Vec<Snapshot>,
}

impl VerificationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.pass)
    }

    /// 0 when every check passes, else the code of the first failing
    /// category in check order.
    pub fn exit_code(&self) -> i32 {
        self.failures().next().map_or(0, |c| c.category.exit_code())
    }

    /// Pass flag of a record: every check attached to the law, on this rung
    /// or on the whole ladder.
    fn record_pass(&self, law: &str, rung: usize) -> bool {
        self.checks
            .iter()
            .filter(|c| c.law.as_deref() == Some(law) && c.rung.is_none_or(|r| r == rung))
            .all(|c| c.pass)
    }

    /// One record per law and rung, in that nesting order.
    pub fn records(&self) -> Vec<Record> {
        let mut out = Vec::new();
        for study in &self.laws {
            for (k, r) in study.rungs.iter().enumerate() {
                let rung = &self.rungs[k];
                let order_estimate = if self.rungs.len() >= 3 && k > 0 {
                    study.order.as_ref().and_then(|o| o.pairwise[k - 1])
                } else {
                    None
                };
                out.push(Record {
                    experiment: self.experiment.clone(),
                    law: study.law.clone(),
                    rung: k,
                    n: rung.n,
                    h: rung.h,
                    dt: rung.dt,
                    l2_residual: r.l2,
                    max_residual: r.max,
                    normalized_residual: r.normalized,
                    invariant_drift: r.drift,
                    defect_relative: r.defect_relative,
                    order_estimate,
                    pass: self.record_pass(&study.law, k),
                    provenance: study.provenance.clone(),
                });
            }
        }
        out
    }

    /// Record stream without its header line.
    pub fn record_stream(&self) -> Result<String> {
        let mut s = String::new();
        for r in self.records() {
            s.push_str(&serde_json::to_string(&r).map_err(|e| LabError::Config(e.to_string()))?);
            s.push('\n');
        }
        Ok(s)
    }

    /// `law,rung,t,value` rows.
    pub fn invariant_csv(&self) -> String {
        let mut s = String::from("law,rung,t,value\n");
        for study in &self.laws {
            for (k, r) in study.rungs.iter().enumerate() {
                if let Some(inv) = &r.invariant {
                    for (t, v) in inv.times.iter().zip(&inv.values) {
                        let _ = writeln!(s, "{},{},{:e},{:e}", study.law, k, t, v);
                    }
                }
            }
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub experiment: String,
    pub law: String,
    pub rung: usize,
    pub n: usize,
    pub h: f64,
    pub dt: f64,
    pub l2_residual: f64,
    pub max_residual: f64,
    pub normalized_residual: Option<f64>,
    pub invariant_drift: Option<f64>,
    pub defect_relative: Option<f64>,
    pub order_estimate: Option<f64>,
    pub pass: bool,
    pub provenance: String,
}

pub const RECORDS_FILE: &str = "records.ndjson";
pub const INVARIANTS_FILE: &str = "invariants.csv";
pub const SUMMARY_FILE: &str = "summary.json";

/// Paths written by [`emit_report`].
#[derive(Debug, Clone, PartialEq)]
pub struct EmittedFiles {
    pub records: PathBuf,
    pub invariants: PathBuf,
    pub summary: PathBuf,
    pub snapshots: Vec<PathBuf>,
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| LabError::io(path, e))?;
    f.write_all(bytes).map_err(|e| LabError::io(path, e))
}

/// Writes the record stream, the invariant table, the summary and any
/// snapshots under `dir`. Only the first line of the record stream carries
/// a timestamp.
pub fn emit_report(report: &VerificationReport, dir: &Path) -> Result<EmittedFiles> {
    fs::create_dir_all(dir).map_err(|e| LabError::io(dir, e))?;
    let created = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
    let header = serde_json::json!({
        "header": {
            "tool": "mdlab",
            "version": env!("CARGO_PKG_VERSION"),
            "experiment": report.experiment,
            "created_unix": created,
        }
    });
    let mut stream = header.to_string();
    stream.push('\n');
    stream.push_str(&report.record_stream()?);
    let records = dir.join(RECORDS_FILE);
    write_file(&records, stream.as_bytes())?;

    let invariants = dir.join(INVARIANTS_FILE);
    write_file(&invariants, report.invariant_csv().as_bytes())?;

    let summary = dir.join(SUMMARY_FILE);
    let json = serde_json::to_string_pretty(report).map_err(|e| LabError::Config(e.to_string()))?;
    write_file(&summary, json.as_bytes())?;

    let snapshots = report
        .snapshots
        .iter()
        .map(|s| {
            let path = dir.join(format!("{}.bin", s.name));
            write_snapshot(&path, s)?;
            Ok(path)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EmittedFiles {
        records,
        invariants,
        summary,
        snapshots,
    })
}

const SNAPSHOT_MAGIC: &str = "mdlab-snapshot v1";

/// One text header line, then the components one after another as
/// little-endian `f64` in C order (z fastest).
pub fn write_snapshot(path: &Path, snap: &Snapshot) -> Result<()> {
    let [nx, ny, nz] = snap.shape;
    let header = format!(
        "{SNAPSHOT_MAGIC} shape={nx}x{ny}x{nz} components={} dtype=f64le layout=c-order t={:e}\n",
        snap.components.join(","),
        snap.t
    );
    let mut bytes = header.into_bytes();
    for comp in &snap.data {
        for v in comp {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    write_file(path, &bytes)
}

pub fn read_snapshot(path: &Path) -> Result<Snapshot> {
    let bytes = fs::read(path).map_err(|e| LabError::io(path, e))?;
    let malformed = |reason: &str| LabError::Snapshot {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    };
    let newline = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| malformed("no header line"))?;
    let header = std::str::from_utf8(&bytes[..newline]).map_err(|_| malformed("header is not UTF-8"))?;
    let rest = header
        .strip_prefix(SNAPSHOT_MAGIC)
        .ok_or_else(|| malformed("bad magic"))?;
    let mut shape = None;
    let mut components = None;
    let mut t = None;
    for field in rest.split_whitespace() {
        let (key, value) = field.split_once('=').ok_or_else(|| malformed("header field without `=`"))?;
        match key {
            "shape" => {
                let dims: Vec<usize> = value
                    .split('x')
                    .map(str::parse)
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| malformed("bad shape"))?;
                let dims: [usize; 3] = dims.try_into().map_err(|_| malformed("shape needs three sizes"))?;
                shape = Some(dims);
            }
            "components" => components = Some(value.split(',').map(String::from).collect::<Vec<_>>()),
            "dtype" if value != "f64le" => return Err(malformed("unsupported dtype")),
            "layout" if value != "c-order" => return Err(malformed("unsupported layout")),
            "t" => t = Some(value.parse::<f64>().map_err(|_| malformed("bad time"))?),
            _ => {}
        }
    }
    let shape = shape.ok_or_else(|| malformed("missing shape"))?;
    let components = components.ok_or_else(|| malformed("missing components"))?;
    let per = shape[0] * shape[1] * shape[2];
    let body = &bytes[newline + 1..];
    if body.len() != per * components.len() * 8 {
        return Err(malformed("payload length does not match header"));
    }
    let values: Vec<f64> = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    Ok(Snapshot {
        name: path.file_stem().map_or_else(String::new, |s| s.to_string_lossy().into_owned()),
        shape,
        t: t.ok_or_else(|| malformed("missing time"))?,
        components,
        data: values.chunks(per).map(<[f64]>::to_vec).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_power_laws_give_their_order() {
        for p in [2.0, 4.0] {
            let norms: Vec<(f64, f64)> = [0.4, 0.2, 0.1].iter().map(|&h: &f64| (h, 3.0 * h.powf(p))).collect();
            let o = convergence_order(&norms).unwrap();
            assert!((o.aggregate.unwrap() - p).abs() < 1e-12);
            assert!(o.pairwise.iter().all(|q| (q.unwrap() - p).abs() < 1e-12));
            assert!(!o.floor_limited);
        }
    }

    #[test]
    fn constant_error_is_floor_limited() {
        let o = convergence_order(&[(0.4, 1e-9), (0.2, 1e-9), (0.1, 1e-9)]).unwrap();
        assert_eq!(o.aggregate, Some(0.0));
        assert!(o.floor_limited);
    }

    #[test]
    fn zero_norm_is_flagged() {
        let o = convergence_order(&[(0.4, 1e-3), (0.2, 0.0), (0.1, 1e-5)]).unwrap();
        assert!(o.undefined_pairs);
        assert_eq!(o.pairwise, vec![None, None]);
        assert!(o.aggregate.is_some());
    }

    #[test]
    fn order_preconditions() {
        assert!(convergence_order(&[(0.1, 1.0)]).is_err());
        assert!(convergence_order(&[(0.1, 1.0), (0.2, 0.5)]).is_err());
    }

    #[test]
    fn check_verdicts() {
        assert!(Check::new("a", CheckCategory::Order, 2.2, Comparison::Within { target: 2.0 }, 0.3).pass);
        assert!(!Check::new("a", CheckCategory::Order, 1.6, Comparison::Within { target: 2.0 }, 0.3).pass);
        assert!(!Check::new("a", CheckCategory::Residual, f64::NAN, Comparison::AtMost, 1.0).pass);
        assert!(Check::new("a", CheckCategory::Admittance, 0.5, Comparison::AtLeast, 0.1).pass);
    }

    #[test]
    fn snapshot_round_trip_is_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let snap = Snapshot {
            name: "s".into(),
            shape: [2, 3, 4],
            t: 0.1 + 0.2,
            components: vec!["Ex".into(), "Ey".into()],
            data: vec![
                (0..24).map(|i| (i as f64).sin()).collect(),
                (0..24).map(|i| -1.0 / (i as f64 + 0.3)).collect(),
            ],
        };
        let path = dir.path().join("s.bin");
        write_snapshot(&path, &snap).unwrap();
        let back = read_snapshot(&path).unwrap();
        assert_eq!(back.shape, snap.shape);
        assert_eq!(back.components, snap.components);
        assert_eq!(back.t.to_bits(), snap.t.to_bits());
        for (a, b) in back.data.iter().zip(&snap.data) {
            assert!(a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
    }

    #[test]
    fn truncated_snapshot_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.bin");
        fs::write(&path, b"mdlab-snapshot v1 shape=2x2x2 components=Ex dtype=f64le layout=c-order t=0e0\n1234").unwrap();
        assert!(matches!(read_snapshot(&path), Err(LabError::Snapshot { .. })));
    }
}
