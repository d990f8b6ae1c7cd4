//! Reference data: centreline velocity profiles and sensor pressure histories.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{csv_error, csv_reader, Table};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReferenceKind {
    /// Two columns: position along a centreline and a velocity component.
    Centreline,
    /// Time followed by one pressure column per sensor.
    Sensor,
}

/// Samples on strictly increasing abscissae; `values[c][j]` is column `c` at abscissa `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceProfile<T> {
    pub kind: ReferenceKind,
    pub columns: Vec<String>,
    pub abscissae: Vec<T>,
    pub values: Vec<Vec<T>>,
}

impl<T: Real> ReferenceProfile<T> {
    pub fn len(&self) -> usize {
        self.abscissae.len()
    }

    pub fn is_empty(&self) -> bool {
        self.abscissae.is_empty()
    }

    /// The first value column as `(abscissa, value)` pairs.
    pub fn samples(&self) -> impl Iterator<Item = (T, T)> + '_ {
        self.abscissae.iter().copied().zip(self.values[0].iter().copied())
    }

    /// Writes the profile as a table that [`load_reference_profile`] reads back exactly.
    pub fn write(&self, path: &Path, description: &str) -> Result<()> {
        let cols: Vec<&str> = self.columns.iter().map(String::as_str).collect();
        let mut table = Table::new(description, &cols);
        for j in 0..self.len() {
            let mut row = vec![self.abscissae[j].as_f64()];
            row.extend(self.values.iter().map(|c| c[j].as_f64()));
            table.push(row);
        }
        table.write(path)
    }
}

/// Reads a comma-separated profile. `#` lines are comments, the first other line names the
/// columns. Centreline profiles need exactly two columns, sensor files at least two. Abscissae
/// must increase strictly; every error names the offending line.
pub fn load_reference_profile<T: Real>(path: &Path, kind: ReferenceKind) -> Result<ReferenceProfile<T>> {
    let parse = |line: usize, msg: String| Error::Parse { path: path.display().to_string(), line, msg };
    let mut reader = csv_reader(path)?;
    let columns: Vec<String> = reader.headers().map_err(|e| csv_error(path, e))?.iter().map(String::from).collect();
    let ok_width = match kind {
        ReferenceKind::Centreline => columns.len() == 2,
        ReferenceKind::Sensor => columns.len() >= 2,
    };
    if !ok_width {
        return Err(parse(0, format!("{} columns do not fit a {kind:?} profile", columns.len())));
    }
    let mut abscissae: Vec<T> = Vec::new();
    let mut values = vec![Vec::new(); columns.len() - 1];
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let nums = record
            .iter()
            .map(|s| match s.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(T::lit(v)),
                _ => Err(parse(line, format!("bad number `{s}`"))),
            })
            .collect::<Result<Vec<T>>>()?;
        if let Some(&prev) = abscissae.last() {
            if !(nums[0] > prev) {
                return Err(parse(line, format!("abscissa {} does not increase (previous {prev})", nums[0])));
            }
        }
        abscissae.push(nums[0]);
        for (c, v) in values.iter_mut().zip(&nums[1..]) {
            c.push(*v);
        }
    }
    if abscissae.is_empty() {
        return Err(parse(0, "no samples".into()));
    }
    Ok(ReferenceProfile { kind, columns, abscissae, values })
}

/// Bundled reference: `u1` along `x = 0.5` for the Re = 100 cavity.
pub fn cavity_re100_u_path() -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data/cavity_re100_u_x05.csv")
}

/// Bundled reference: `u2` along `y = 0.5` for the Re = 100 cavity.
pub fn cavity_re100_v_path() -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data/cavity_re100_v_y05.csv")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn write(text: &str) -> (tempfile::TempDir, std::path::PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.csv");
        std::fs::write(&path, text).unwrap();
        (dir, path)
    }

    #[test]
    fn bundled_profiles_have_17_rows() {
        for path in [cavity_re100_u_path(), cavity_re100_v_path()] {
            let p = load_reference_profile::<f64>(&path, ReferenceKind::Centreline).unwrap();
            assert_eq!(p.len(), 17);
            assert_eq!(p.abscissae[0], 0.0);
            assert_eq!(p.abscissae[16], 1.0);
        }
        let u = load_reference_profile::<f64>(&cavity_re100_u_path(), ReferenceKind::Centreline).unwrap();
        assert_eq!(u.values[0][16], 1.0);
    }

    #[test]
    fn duplicate_abscissa_is_rejected_with_line() {
        let (_d, path) = write("# c\ny,u\n0,0\n0.5,1\n0.5,2\n");
        match load_reference_profile::<f64>(&path, ReferenceKind::Centreline) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 5),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_rows() {
        let (_d, path) = write("y,u\n0,0\n0.5,x\n");
        assert!(matches!(load_reference_profile::<f64>(&path, ReferenceKind::Centreline), Err(Error::Parse { line: 3, .. })));
        let (_d, path) = write("y,u\n0,0\n0.5\n");
        assert!(matches!(load_reference_profile::<f64>(&path, ReferenceKind::Centreline), Err(Error::Parse { line: 3, .. })));
        let (_d, path) = write("t,p1,p2\n0,0,0\n");
        assert!(load_reference_profile::<f64>(&path, ReferenceKind::Centreline).is_err());
        let p = load_reference_profile::<f64>(&path, ReferenceKind::Sensor).unwrap();
        assert_eq!(p.values.len(), 2);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn write_read_round_trip(steps in prop::collection::vec((1e-6f64..1.0, -10.0f64..10.0), 1..30)) {
            let mut x = 0.0;
            let mut abscissae = Vec::new();
            let mut vals = Vec::new();
            for (dx, v) in steps {
                x += dx;
                abscissae.push(x);
                vals.push(v / 3.0);
            }
            let p = ReferenceProfile { kind: ReferenceKind::Centreline, columns: vec!["y".into(), "u1".into()], abscissae, values: vec![vals] };
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("r.csv");
            p.write(&path, "round trip").unwrap();
            prop_assert_eq!(load_reference_profile::<f64>(&path, ReferenceKind::Centreline).unwrap(), p);
        }
    }
}
