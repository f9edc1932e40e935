//! Text dumps of leaves and structure reports.

use std::fmt::Write as _;
use std::path::Path;

use super::leaf::BaseGrid;
use super::march::{FoliationTrace, StoredLeaf};
use super::structure::StructureReport;
use crate::error::{Error, Result};

/// Writes the stored leaves: a `BASE n half_width dq theta phi` line, then per leaf a
/// `LEAF u=<val>` line followed by `n` rows of heights.
pub fn write_leaves(trace: &FoliationTrace, path: &Path) -> Result<()> {
    let g = &trace.grid;
    let mut s = format!(
        "BASE {} {:.17e} {:.17e} {:.17e} {:.17e}\n",
        g.n, g.half_width, g.dq, trace.dir.theta, trace.dir.phi
    );
    for leaf in &trace.leaves {
        let _ = writeln!(s, "LEAF u={:.17e}", leaf.u);
        for row in leaf.h.chunks(g.n) {
            let line: Vec<String> = row.iter().map(|v| format!("{v:.17e}")).collect();
            s.push_str(&line.join(" "));
            s.push('\n');
        }
    }
    std::fs::write(path, s)?;
    Ok(())
}

/// Reads a leaf dump back into `(grid, leaves)`; lapse fields are left empty.
pub fn read_leaves(path: &Path) -> Result<(BaseGrid, Vec<StoredLeaf>)> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let bad = |m: &str| Error::Format(m.to_string());
    let head: Vec<&str> = lines.next().ok_or_else(|| bad("empty leaf file"))?.split_whitespace().collect();
    if head.len() != 6 || head[0] != "BASE" {
        return Err(bad("missing BASE header"));
    }
    let num = |s: &str| s.parse::<f64>().map_err(|e| Error::Format(format!("{s}: {e}")));
    let n: usize = head[1].parse().map_err(|_| bad("bad node count"))?;
    let grid = BaseGrid { n, half_width: num(head[2])?, dq: num(head[3])? };
    let mut leaves = Vec::new();
    while let Some(line) = lines.next() {
        if line.trim().is_empty() {
            continue;
        }
        let u = num(line.strip_prefix("LEAF u=").ok_or_else(|| bad("expected LEAF line"))?)?;
        let mut h = Vec::with_capacity(n * n);
        for _ in 0..n {
            let row = lines.next().ok_or_else(|| bad("truncated leaf"))?;
            for t in row.split_whitespace() {
                h.push(num(t)?);
            }
        }
        if h.len() != n * n {
            return Err(bad("leaf row length mismatch"));
        }
        leaves.push(StoredLeaf { index: leaves.len(), u, h, a: Vec::new() });
    }
    Ok((grid, leaves))
}

/// CSV with columns `identity,max_residual,l2_residual,dx,du`.
pub fn structure_csv(report: &StructureReport) -> String {
    let mut s = String::from("identity,max_residual,l2_residual,dx,du\n");
    for (name, r) in report.rows() {
        let _ = writeln!(s, "{name},{:.17e},{:.17e},{:.17e},{:.17e}", r.max, r.l2, report.dq, report.du);
    }
    s
}
