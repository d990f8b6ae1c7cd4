//! File formats: particle snapshots (CSV and legacy VTK), numeric tables with a `#`
//! column-description line, and the JSON run-metadata sidecar.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::particles::{ParticleKind, ParticleSystem};
use crate::scalar::Real;

const AXES: [&str; 3] = ["x", "y", "z"];
const VELOCITY: [&str; 3] = ["u", "v", "w"];

/// Scientific notation with 17 significant digits, enough to round-trip any `f64`.
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| Error::io(path, e))
}

fn parse_error(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { path: path.display().to_string(), line, msg: msg.into() }
}

/// Snapshot header `id,kind,x,y[,z],u,v[,w],p,V`.
pub fn snapshot_header(dim: usize) -> String {
    let mut cols = vec!["id", "kind"];
    cols.extend(&AXES[..dim]);
    cols.extend(&VELOCITY[..dim]);
    cols.extend(["p", "V"]);
    cols.join(",")
}

pub fn write_snapshot_csv<T: Real, const D: usize>(path: &Path, system: &ParticleSystem<T, D>) -> Result<()> {
    let mut out = create(path)?;
    let mut body = || -> std::io::Result<()> {
        writeln!(out, "{}", snapshot_header(D))?;
        for i in 0..system.len() {
            write!(out, "{i},{}", system.kinds[i].as_str())?;
            for v in system.positions[i].iter().chain(&system.velocities[i]) {
                write!(out, ",{}", fmt17(v.as_f64()))?;
            }
            writeln!(out, ",{},{}", fmt17(system.pressures[i].as_f64()), fmt17(system.volumes[i].as_f64()))?;
        }
        out.flush()
    };
    body().map_err(|e| Error::io(path, e))
}

/// Reads a snapshot written by [`write_snapshot_csv`]. Rows must be in `id` order.
pub fn read_snapshot_csv<T: Real, const D: usize>(path: &Path) -> Result<ParticleSystem<T, D>> {
    let mut reader = csv_reader(path)?;
    let expected = snapshot_header(D);
    let header = reader.headers().map_err(|e| csv_error(path, e))?.iter().collect::<Vec<_>>().join(",");
    if header != expected {
        return Err(parse_error(path, 1, format!("expected header `{expected}`, found `{header}`")));
    }
    let mut system = ParticleSystem {
        positions: Vec::new(),
        velocities: Vec::new(),
        pressures: Vec::new(),
        volumes: Vec::new(),
        kinds: Vec::new(),
    };
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line_no = record.position().map_or(0, |p| p.line() as usize);
        let id: usize = record[0].parse().map_err(|_| parse_error(path, line_no, "bad particle id"))?;
        if id != system.len() {
            return Err(parse_error(path, line_no, format!("particle id {id} out of order")));
        }
        let kind = ParticleKind::parse(&record[1]).ok_or_else(|| parse_error(path, line_no, "unknown particle kind"))?;
        let nums = record
            .iter()
            .skip(2)
            .map(|s| s.parse::<f64>().map(T::lit).map_err(|_| parse_error(path, line_no, format!("bad number `{s}`"))))
            .collect::<Result<Vec<T>>>()?;
        system.positions.push(std::array::from_fn(|k| nums[k]));
        system.velocities.push(std::array::from_fn(|k| nums[D + k]));
        system.pressures.push(nums[2 * D]);
        system.volumes.push(nums[2 * D + 1]);
        system.kinds.push(kind);
    }
    system.validate()?;
    Ok(system)
}

/// Reader that skips `#` lines, trims fields and insists on a fixed field count.
pub(crate) fn csv_reader(path: &Path) -> Result<csv::Reader<BufReader<File>>> {
    Ok(csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(open(path)?))
}

pub(crate) fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        csv::ErrorKind::UnequalLengths { expected_len, len, .. } => {
            parse_error(path, line, format!("expected {expected_len} fields, found {len}"))
        }
        other => parse_error(path, line, format!("{other:?}")),
    }
}

/// Legacy ASCII VTK poly-data: one vertex per particle with velocity, pressure, volume and
/// kind (0 fluid, 1 boundary) as point data. 2-D positions get `z = 0`.
pub fn write_snapshot_vtk<T: Real, const D: usize>(path: &Path, system: &ParticleSystem<T, D>, title: &str) -> Result<()> {
    let mut out = create(path)?;
    let n = system.len();
    let pad = |v: &[T; D]| -> [f64; 3] { std::array::from_fn(|k| if k < D { v[k].as_f64() } else { 0.0 }) };
    let mut body = || -> std::io::Result<()> {
        writeln!(out, "# vtk DataFile Version 3.0")?;
        writeln!(out, "{}", title.lines().next().unwrap_or(""))?;
        writeln!(out, "ASCII\nDATASET POLYDATA\nPOINTS {n} double")?;
        for x in &system.positions {
            let [a, b, c] = pad(x);
            writeln!(out, "{} {} {}", fmt17(a), fmt17(b), fmt17(c))?;
        }
        writeln!(out, "VERTICES {n} {}", 2 * n)?;
        for i in 0..n {
            writeln!(out, "1 {i}")?;
        }
        writeln!(out, "POINT_DATA {n}\nVECTORS velocity double")?;
        for u in &system.velocities {
            let [a, b, c] = pad(u);
            writeln!(out, "{} {} {}", fmt17(a), fmt17(b), fmt17(c))?;
        }
        for (name, values) in [("pressure", &system.pressures), ("volume", &system.volumes)] {
            writeln!(out, "SCALARS {name} double 1\nLOOKUP_TABLE default")?;
            for v in values {
                writeln!(out, "{}", fmt17(v.as_f64()))?;
            }
        }
        writeln!(out, "SCALARS kind int 1\nLOOKUP_TABLE default")?;
        for k in &system.kinds {
            writeln!(out, "{}", matches!(k, ParticleKind::Boundary) as u8)?;
        }
        out.flush()
    };
    body().map_err(|e| Error::io(path, e))
}

/// Whitespace-separated tokens with their line numbers.
struct Tokens<'a> {
    path: &'a Path,
    inner: Box<dyn Iterator<Item = (usize, &'a str)> + 'a>,
    line: usize,
}

impl<'a> Tokens<'a> {
    fn new(path: &'a Path, text: &'a str, skip_lines: usize) -> Self {
        let inner = text.lines().enumerate().skip(skip_lines).flat_map(|(l, line)| line.split_whitespace().map(move |t| (l + 1, t)));
        Self { path, inner: Box::new(inner), line: skip_lines }
    }

    fn next(&mut self, what: &str) -> Result<&'a str> {
        let (line, t) = self
            .inner
            .next()
            .ok_or_else(|| parse_error(self.path, self.line, format!("unexpected end of file, expected {what}")))?;
        self.line = line;
        Ok(t)
    }

    fn expect(&mut self, words: &[&str]) -> Result<()> {
        for w in words {
            let t = self.next(w)?;
            if t != *w {
                return Err(self.error(format!("expected `{w}`, found `{t}`")));
            }
        }
        Ok(())
    }

    fn number<N: std::str::FromStr>(&mut self, what: &str) -> Result<N> {
        let t = self.next(what)?;
        t.parse().map_err(|_| self.error(format!("bad number `{t}`")))
    }

    fn error(&self, msg: String) -> Error {
        parse_error(self.path, self.line, msg)
    }

    /// `n` padded 3-vectors; components beyond `D` must be zero.
    fn vectors<T: Real, const D: usize>(&mut self, n: usize) -> Result<Vec<[T; D]>> {
        (0..n)
            .map(|_| {
                let mut v = [T::zero(); D];
                for k in 0..3 {
                    let x: f64 = self.number("a vector component")?;
                    if k < D {
                        v[k] = T::lit(x);
                    } else if x != 0.0 {
                        return Err(self.error(format!("component {k} must be 0 for {D}-D data")));
                    }
                }
                Ok(v)
            })
            .collect()
    }

    fn scalars(&mut self, n: usize, name: &str, ty: &str) -> Result<Vec<f64>> {
        self.expect(&["SCALARS", name, ty, "1", "LOOKUP_TABLE", "default"])?;
        (0..n).map(|_| self.number(name)).collect()
    }
}

/// Reads a file written by [`write_snapshot_vtk`]. Only that layout is understood.
pub fn read_snapshot_vtk<T: Real, const D: usize>(path: &Path) -> Result<ParticleSystem<T, D>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    // the version line and the title are free-form
    let mut tok = Tokens::new(path, &text, 2);
    tok.expect(&["ASCII", "DATASET", "POLYDATA", "POINTS"])?;
    let n: usize = tok.number("a point count")?;
    tok.expect(&["double"])?;
    let positions = tok.vectors(n)?;
    tok.expect(&["VERTICES"])?;
    for _ in 0..2 + 2 * n {
        tok.next("vertex data")?;
    }
    tok.expect(&["POINT_DATA"])?;
    let m: usize = tok.number("a point count")?;
    if m != n {
        return Err(tok.error(format!("POINT_DATA {m} does not match POINTS {n}")));
    }
    tok.expect(&["VECTORS", "velocity", "double"])?;
    let velocities = tok.vectors(n)?;
    let pressures = tok.scalars(n, "pressure", "double")?;
    let volumes = tok.scalars(n, "volume", "double")?;
    let kinds = tok
        .scalars(n, "kind", "int")?
        .into_iter()
        .map(|k| match k {
            0.0 => Ok(ParticleKind::Fluid),
            1.0 => Ok(ParticleKind::Boundary),
            _ => Err(tok.error(format!("unknown particle kind code {k}"))),
        })
        .collect::<Result<Vec<_>>>()?;
    ParticleSystem::new(
        positions,
        velocities,
        pressures.into_iter().map(T::lit).collect(),
        volumes.into_iter().map(T::lit).collect(),
        kinds,
    )
}

/// A numeric table: `# description` line, CSV header, rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub description: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(description: impl Into<String>, columns: &[&str]) -> Self {
        Self { description: description.into(), columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let c = self.columns.iter().position(|n| n == name)?;
        Some(self.rows.iter().map(|r| r[c]).collect())
    }

    /// Integral-valued cells are written without an exponent so index columns stay readable.
    pub fn write(&self, path: &Path) -> Result<()> {
        let mut out = create(path)?;
        let mut body = || -> std::io::Result<()> {
            writeln!(out, "# {}", self.description.replace('\n', " "))?;
            writeln!(out, "{}", self.columns.join(","))?;
            for row in &self.rows {
                let cells: Vec<String> = row
                    .iter()
                    .map(|&v| if v.fract() == 0.0 && v.abs() < 1e15 { format!("{v:.0}") } else { fmt17(v) })
                    .collect();
                writeln!(out, "{}", cells.join(","))?;
            }
            out.flush()
        };
        body().map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let mut first = String::new();
        open(path)?.read_line(&mut first).map_err(|e| Error::io(path, e))?;
        let description = first.trim().strip_prefix('#').map(|d| d.trim().to_string()).unwrap_or_default();
        let mut reader = csv_reader(path)?;
        let columns = reader.headers().map_err(|e| csv_error(path, e))?.iter().map(String::from).collect();
        let mut rows = Vec::new();
        for record in reader.records() {
            let record = record.map_err(|e| csv_error(path, e))?;
            let line_no = record.position().map_or(0, |p| p.line() as usize);
            let row = record
                .iter()
                .map(|s| s.parse::<f64>().map_err(|_| parse_error(path, line_no, format!("bad number `{s}`"))))
                .collect::<Result<Vec<f64>>>()?;
            rows.push(row);
        }
        Ok(Self { description, columns, rows })
    }
}

/// Operator constants reported in the metadata.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OperatorConstants {
    pub c_interp: f64,
    pub c_grad: f64,
    pub c_lap: f64,
}

/// JSON sidecar describing a run. Solver fields are `null` for studies that never step.
#[derive(Debug, Clone, Serialize)]
pub struct RunMetadata {
    pub experiment: String,
    pub config: serde_json::Value,
    pub particles: Option<usize>,
    pub h: Option<f64>,
    pub c0h: Option<f64>,
    pub constants: Option<OperatorConstants>,
    pub dt: Option<f64>,
    pub steps: Option<usize>,
    pub diagnostics: Option<crate::solver::Diagnostics>,
    pub runtime_seconds: f64,
    /// Experiment-specific results.
    pub results: serde_json::Value,
}

impl RunMetadata {
    pub fn new(experiment: &str, config: serde_json::Value) -> Self {
        Self {
            experiment: experiment.to_string(),
            config,
            particles: None,
            h: None,
            c0h: None,
            constants: None,
            dt: None,
            steps: None,
            diagnostics: None,
            runtime_seconds: 0.0,
            results: serde_json::Value::Null,
        }
    }

    /// Fills the solver fields from a configured solver.
    pub fn with_solver<T: Real, const D: usize>(mut self, solver: &crate::solver::Solver<T, D>, particles: usize) -> Self {
        let ops = solver.operators();
        self.particles = Some(particles);
        self.h = Some(ops.h().as_f64());
        self.c0h = Some(solver.c0h().as_f64());
        self.constants = Some(OperatorConstants {
            c_interp: ops.c_interp().as_f64(),
            c_grad: ops.c_grad().as_f64(),
            c_lap: ops.c_lap().as_f64(),
        });
        self.dt = Some(solver.config().tau.as_f64());
        self
    }
}

pub fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<()> {
    let mut out = create(path)?;
    serde_json::to_writer_pretty(&mut out, value).map_err(|e| Error::io(path, e.into()))?;
    writeln!(out).and_then(|_| out.flush()).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample() -> ParticleSystem<f64, 2> {
        ParticleSystem::new(
            vec![[0.1, 0.2], [1.0 / 3.0, -2e-300]],
            vec![[std::f64::consts::PI, 0.0], [-1.5, 1e300]],
            vec![0.0, -7.25],
            vec![0.01, 0.01],
            vec![ParticleKind::Fluid, ParticleKind::Boundary],
        )
        .unwrap()
    }

    #[test]
    fn headers() {
        assert_eq!(snapshot_header(2), "id,kind,x,y,u,v,p,V");
        assert_eq!(snapshot_header(3), "id,kind,x,y,z,u,v,w,p,V");
    }

    #[test]
    fn snapshot_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("snap.csv");
        let s = sample();
        write_snapshot_csv(&path, &s).unwrap();
        let back: ParticleSystem<f64, 2> = read_snapshot_csv(&path).unwrap();
        assert_eq!(back, s);
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.lines().nth(1).unwrap().starts_with("0,fluid,1.0000000000000001e-1,"));
    }

    #[test]
    fn snapshot_errors_carry_line_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "id,kind,x,y,u,v,p,V\n0,fluid,0,0,0,0,0,1\n1,water,0,0,0,0,0,1\n").unwrap();
        match read_snapshot_csv::<f64, 2>(&path) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn vtk_layout() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("snap.vtk");
        write_snapshot_vtk(&path, &sample(), "test").unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "# vtk DataFile Version 3.0");
        assert!(lines.contains(&"POINTS 2 double"));
        assert!(lines.contains(&"VERTICES 2 4"));
        assert!(lines.contains(&"POINT_DATA 2"));
        assert_eq!(*lines.last().unwrap(), "1");
        let back: ParticleSystem<f64, 2> = read_snapshot_vtk(&path).unwrap();
        assert_eq!(back, sample());
        std::fs::write(&path, text.replace("VECTORS velocity", "VECTORS speed")).unwrap();
        assert!(matches!(read_snapshot_vtk::<f64, 2>(&path), Err(Error::Parse { .. })));
    }

    #[test]
    fn table_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("errors.csv");
        let mut t = Table::new("k: step, t: time", &["k", "t"]);
        t.push(vec![0.0, 0.0]);
        t.push(vec![1.0, 0.1]);
        t.write(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("# k: step, t: time\nk,t\n0,0\n1,1.0000000000000001e-1\n"));
        assert_eq!(Table::read(&path).unwrap(), t);
    }

    #[test]
    fn metadata_is_json() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("meta.json");
        let mut meta = RunMetadata::new("x", serde_json::json!({"a": 1}));
        meta.constants = Some(OperatorConstants { c_interp: 1.0, c_grad: 2.0, c_lap: 3.0 });
        meta.diagnostics = Some(Default::default());
        write_json(&path, &meta).unwrap();
        let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
        assert_eq!(v["constants"]["c_lap"], 3.0);
        assert_eq!(v["diagnostics"]["collisions"], 0);
    }

    proptest! {
        #[test]
        fn fmt17_round_trips(x in any::<f64>().prop_filter("finite", |v| v.is_finite())) {
            prop_assert_eq!(fmt17(x).parse::<f64>().unwrap(), x);
        }
    }
}
