//! Summary rows, per-check tables and the on-disk report bundle.

use std::fmt::{self, Write as _};
use std::fs;
use std::path::Path;

use crate::error::Result;

/// Acceptance bound attached to a summary row.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Bound {
    AtMost(f64),
    AtLeast(f64),
    Within(f64, f64),
    /// Report-only value.
    None,
}

impl Bound {
    /// Normalised distance to the bound: `<= 1` passes, `> 1` fails.
    pub fn ratio(&self, v: f64) -> f64 {
        if !v.is_finite() {
            return f64::INFINITY;
        }
        match *self {
            Bound::AtMost(t) if t > 0.0 => v / t,
            Bound::AtMost(t) => {
                if v <= t {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
            Bound::AtLeast(t) => {
                if v >= t {
                    if v > 0.0 {
                        t / v
                    } else {
                        1.0
                    }
                } else {
                    1.0 + (t - v) / t.abs().max(f64::MIN_POSITIVE)
                }
            }
            Bound::Within(lo, hi) => {
                let (mid, half) = (0.5 * (lo + hi), 0.5 * (hi - lo));
                (v - mid).abs() / half
            }
            Bound::None => 0.0,
        }
    }

    pub fn holds(&self, v: f64) -> bool {
        match *self {
            Bound::AtMost(t) => v <= t,
            Bound::AtLeast(t) => v >= t,
            Bound::Within(lo, hi) => (lo..=hi).contains(&v),
            Bound::None => true,
        }
    }
}

impl fmt::Display for Bound {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Bound::AtMost(t) => write!(f, "<= {t:e}"),
            Bound::AtLeast(t) => write!(f, ">= {t:e}"),
            Bound::Within(lo, hi) => write!(f, "in [{lo:e}, {hi:e}]"),
            Bound::None => write!(f, "report"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Pass,
    Fail,
    Report,
    /// Convergence row whose residuals already sit at rounding level.
    AtFloor,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::Report => "REPORT",
            Status::AtFloor => "AT_FLOOR",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SummaryRow {
    pub check: String,
    pub value: f64,
    pub bound: Bound,
    pub status: Status,
    /// Identity or property the row measures.
    pub identity: String,
    /// Acceptance criterion this row decides, if any.
    pub criterion: Option<u8>,
}

impl SummaryRow {
    pub fn check(check: impl Into<String>, identity: impl Into<String>, value: f64, bound: Bound) -> Self {
        let status = if bound == Bound::None {
            Status::Report
        } else if bound.holds(value) {
            Status::Pass
        } else {
            Status::Fail
        };
        Self { check: check.into(), value, bound, status, identity: identity.into(), criterion: None }
    }

    pub fn report(check: impl Into<String>, identity: impl Into<String>, value: f64) -> Self {
        Self::check(check, identity, value, Bound::None)
    }

    pub fn at_floor(check: impl Into<String>, identity: impl Into<String>) -> Self {
        Self {
            check: check.into(),
            value: f64::NAN,
            bound: Bound::None,
            status: Status::AtFloor,
            identity: identity.into(),
            criterion: None,
        }
    }

    /// One row deciding criterion `id`: the worst normalised ratio of its parts, which
    /// passes exactly when every assertable part passes.
    pub fn criterion(id: u8, check: impl Into<String>, identity: impl Into<String>, parts: &[SummaryRow]) -> Self {
        let mut worst: f64 = 0.0;
        let mut failed = parts.is_empty();
        for p in parts {
            match p.status {
                Status::Fail => {
                    failed = true;
                    worst = worst.max(p.bound.ratio(p.value).max(1.0 + f64::EPSILON));
                }
                Status::Pass => worst = worst.max(p.bound.ratio(p.value)),
                Status::Report | Status::AtFloor => {}
            }
        }
        let value = if failed && !(worst > 1.0) { f64::INFINITY } else { worst };
        Self {
            check: check.into(),
            value,
            bound: Bound::AtMost(1.0),
            status: if failed { Status::Fail } else { Status::Pass },
            identity: identity.into(),
            criterion: Some(id),
        }
    }

    pub fn is_fail(&self) -> bool {
        self.status == Status::Fail
    }
}

/// Formats a float so that it round-trips exactly.
pub fn num(v: f64) -> String {
    format!("{v:e}")
}

/// A named CSV table.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: &str, header: &[&str]) -> Self {
        Self { name: name.into(), header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut s = self.header.join(",");
        s.push('\n');
        for r in &self.rows {
            s.push_str(&r.join(","));
            s.push('\n');
        }
        s
    }
}

/// Everything a scenario run produces.
#[derive(Clone, Debug, Default)]
pub struct ReportBundle {
    pub rows: Vec<SummaryRow>,
    pub tables: Vec<Table>,
    /// Key/value lines for `provenance.txt`.
    pub provenance: Vec<(String, String)>,
    /// Largest `|a − (1 + k_NN − trθ)|` over all marches of the run, if any ran.
    pub choice_max: Option<f64>,
    pub wall_time: f64,
}

impl ReportBundle {
    pub fn push(&mut self, row: SummaryRow) {
        self.rows.push(row);
    }

    pub fn extend(&mut self, rows: impl IntoIterator<Item = SummaryRow>) {
        self.rows.extend(rows);
    }

    pub fn table(&mut self, t: Table) {
        self.tables.push(t);
    }

    pub fn note_choice(&mut self, residual: f64) {
        self.choice_max = Some(self.choice_max.map_or(residual, |c| c.max(residual)));
    }

    pub fn has_failures(&self) -> bool {
        self.rows.iter().any(SummaryRow::is_fail)
    }

    pub fn criterion(&self, id: u8) -> Option<&SummaryRow> {
        self.rows.iter().find(|r| r.criterion == Some(id))
    }

    pub fn row(&self, check: &str) -> Option<&SummaryRow> {
        self.rows.iter().find(|r| r.check == check)
    }

    pub fn summary_csv(&self) -> String {
        let mut t = Table::new("summary", &["check", "value", "bound", "status", "identity", "criterion"]);
        for r in &self.rows {
            t.push(vec![
                r.check.clone(),
                num(r.value),
                r.bound.to_string(),
                r.status.to_string(),
                r.identity.clone(),
                r.criterion.map_or(String::new(), |c| c.to_string()),
            ]);
        }
        t.to_csv()
    }

    pub fn provenance_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.provenance {
            let _ = writeln!(s, "{k} = {v}");
        }
        let _ = writeln!(s, "wall_time_s = {:.3}", self.wall_time);
        s
    }

    /// Writes `summary.csv`, one CSV per table and `provenance.txt`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("summary.csv"), self.summary_csv())?;
        for t in &self.tables {
            fs::write(dir.join(format!("{}.csv", t.name)), t.to_csv())?;
        }
        fs::write(dir.join("provenance.txt"), self.provenance_text())?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bounds_and_ratios() {
        assert!(Bound::AtMost(1e-3).holds(1e-3) && !Bound::AtMost(1e-3).holds(2e-3));
        assert!(Bound::Within(1.5, 2.5).holds(2.4) && Bound::Within(1.5, 2.5).ratio(2.5) == 1.0);
        assert!(Bound::AtLeast(1.5).ratio(3.0) == 0.5 && Bound::AtLeast(1.5).ratio(1.0) > 1.0);
        assert_eq!(Bound::AtMost(0.0).ratio(0.0), 0.0);
        assert!(Bound::AtMost(1.0).ratio(f64::NAN).is_infinite());
    }

    #[test]
    fn criterion_row_follows_parts() {
        let ok = SummaryRow::check("a", "x", 0.5, Bound::AtMost(1.0));
        let bad = SummaryRow::check("b", "y", 3.0, Bound::Within(1.5, 2.5));
        let rep = SummaryRow::report("c", "z", 1e9);
        let pass = SummaryRow::criterion(1, "c1", "x", &[ok.clone(), rep.clone()]);
        assert_eq!(pass.status, Status::Pass);
        assert_eq!(pass.value, 0.5);
        let fail = SummaryRow::criterion(2, "c2", "y", &[ok, bad, rep]);
        assert_eq!(fail.status, Status::Fail);
        assert!(fail.value > 1.0);
        assert_eq!(SummaryRow::criterion(3, "c3", "none", &[]).status, Status::Fail);
    }

    #[test]
    fn bundle_writes_files() {
        let mut b = ReportBundle::default();
        b.push(SummaryRow::check("x", "id", 1.0, Bound::AtMost(2.0)));
        let mut t = Table::new("extra", &["a", "b"]);
        t.push(vec!["1".into(), num(0.1)]);
        b.table(t);
        b.provenance.push(("scenario".into(), "test".into()));
        let dir = tempfile::tempdir().unwrap();
        b.write(dir.path()).unwrap();
        let s = fs::read_to_string(dir.path().join("summary.csv")).unwrap();
        assert!(s.starts_with("check,value,bound,status,identity,criterion\nx,1e0,<= 2e0,PASS,id,\n"));
        assert_eq!(fs::read_to_string(dir.path().join("extra.csv")).unwrap(), "a,b\n1,1e-1\n");
        assert!(!b.has_failures());
    }
}
