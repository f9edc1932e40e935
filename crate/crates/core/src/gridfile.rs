//! ASCII grid files: a header `DIMS nx ny nz ORIGIN ox oy oz SPACING h` followed by one
//! row of components per node in x-fastest order. Two-dimensional data uses `nz = 1`.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

/// A uniform axis-aligned node lattice.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Lattice {
    pub n: [usize; 3],
    pub origin: [f64; 3],
    pub spacing: f64,
}

impl Lattice {
    /// Cubic lattice covering `[-half_width, half_width]^3` with the given spacing.
    pub fn cube(half_width: f64, spacing: f64) -> Self {
        let m = (2.0 * half_width / spacing).round() as usize + 1;
        Self { n: [m; 3], origin: [-half_width; 3], spacing }
    }

    pub fn len(&self) -> usize {
        self.n[0] * self.n[1] * self.n[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.n[0] * (j + self.n[1] * k)
    }

    pub fn ijk(&self, node: usize) -> [usize; 3] {
        let i = node % self.n[0];
        let j = (node / self.n[0]) % self.n[1];
        [i, j, node / (self.n[0] * self.n[1])]
    }

    pub fn point(&self, node: usize) -> [f64; 3] {
        let [i, j, k] = self.ijk(node);
        [
            self.origin[0] + i as f64 * self.spacing,
            self.origin[1] + j as f64 * self.spacing,
            self.origin[2] + k as f64 * self.spacing,
        ]
    }

    /// Continuous grid coordinates of a physical point.
    pub fn coords(&self, x: [f64; 3]) -> [f64; 3] {
        [
            (x[0] - self.origin[0]) / self.spacing,
            (x[1] - self.origin[1]) / self.spacing,
            (x[2] - self.origin[2]) / self.spacing,
        ]
    }

    /// Upper corner of the lattice.
    pub fn upper(&self) -> [f64; 3] {
        [
            self.origin[0] + (self.n[0] - 1) as f64 * self.spacing,
            self.origin[1] + (self.n[1] - 1) as f64 * self.spacing,
            self.origin[2] + (self.n[2] - 1) as f64 * self.spacing,
        ]
    }
}

/// Node-major multi-component data on a lattice.
#[derive(Clone, Debug)]
pub struct GridData {
    pub lattice: Lattice,
    pub ncomp: usize,
    pub values: Vec<f64>,
}

impl GridData {
    pub fn to_text(&self) -> String {
        let l = &self.lattice;
        let mut s = format!(
            "DIMS {} {} {} ORIGIN {:.17e} {:.17e} {:.17e} SPACING {:.17e}\n",
            l.n[0], l.n[1], l.n[2], l.origin[0], l.origin[1], l.origin[2], l.spacing
        );
        for row in self.values.chunks(self.ncomp) {
            let mut first = true;
            for v in row {
                if !first {
                    s.push(' ');
                }
                first = false;
                let _ = write!(s, "{v:.17e}");
            }
            s.push('\n');
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| Error::Format("empty file".into()))?;
        let tok: Vec<&str> = header.split_whitespace().collect();
        if tok.len() != 10 || tok[0] != "DIMS" || tok[4] != "ORIGIN" || tok[8] != "SPACING" {
            return Err(Error::Format(format!("bad header: {header}")));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|e| Error::Format(format!("{s}: {e}")));
        let int = |s: &str| s.parse::<usize>().map_err(|e| Error::Format(format!("{s}: {e}")));
        let lattice = Lattice {
            n: [int(tok[1])?, int(tok[2])?, int(tok[3])?],
            origin: [num(tok[5])?, num(tok[6])?, num(tok[7])?],
            spacing: num(tok[9])?,
        };
        if lattice.spacing <= 0.0 || lattice.is_empty() {
            return Err(Error::Format("non-positive spacing or empty lattice".into()));
        }
        let mut values = Vec::new();
        let mut ncomp = None;
        for line in lines {
            let row: Vec<f64> = line.split_whitespace().map(num).collect::<Result<_>>()?;
            match ncomp {
                None => ncomp = Some(row.len()),
                Some(c) if c != row.len() => {
                    return Err(Error::Format(format!("ragged row: expected {c} values")))
                }
                _ => {}
            }
            values.extend(row);
        }
        let ncomp = ncomp.ok_or_else(|| Error::Format("no data rows".into()))?;
        if values.len() != lattice.len() * ncomp {
            return Err(Error::Format(format!(
                "expected {} rows, found {}",
                lattice.len(),
                values.len() / ncomp
            )));
        }
        Ok(Self { lattice, ncomp, values })
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let lattice = Lattice { n: [3, 2, 2], origin: [-1.0, 0.5, 0.0], spacing: 0.1 };
        let values: Vec<f64> = (0..lattice.len() * 6).map(|k| (k as f64).sin() / 3.0).collect();
        let g = GridData { lattice, ncomp: 6, values };
        let back = GridData::parse(&g.to_text()).unwrap();
        assert_eq!(back.lattice, g.lattice);
        assert_eq!(back.values, g.values);
    }

    #[test]
    fn rejects_short_files() {
        let text = "DIMS 2 1 1 ORIGIN 0 0 0 SPACING 1\n1 2 3 4 5 6\n";
        assert!(GridData::parse(text).is_err());
    }

    #[test]
    fn lattice_points_and_coords_agree() {
        let l = Lattice::cube(3.0, 0.5);
        assert_eq!(l.n, [13, 13, 13]);
        let node = l.index(4, 7, 12);
        let x = l.point(node);
        let s = l.coords(x);
        assert_eq!([s[0].round() as usize, s[1].round() as usize, s[2].round() as usize], [4, 7, 12]);
    }
}
