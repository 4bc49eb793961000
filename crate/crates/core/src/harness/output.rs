//! CSV and VTK output.

use std::io::Write;

use nalgebra::Point2;

use crate::error::{HdgError, Result};
use crate::field::DgField;
use crate::harness::errors::MemberErrors;
use crate::harness::study::{ConvergenceRow, ConvergenceTable};
use crate::mesh::Mesh;
use crate::polybasis::OrthoBasis;
use crate::postprocess::Postprocessor;
use crate::solver::{EnsembleSolver, EnsembleState, Observer};

pub const CONVERGENCE_HEADER: &str = "level,h_over_sqrt2,member,Eq,Eq_rate,Eu,Eu_rate,Eustar,Eustar_rate";

fn opt(v: Option<f64>) -> String {
    v.map(|r| format!("{r:.4}")).unwrap_or_default()
}

/// Members are written one-based.
pub fn write_convergence_csv(table: &ConvergenceTable, mut w: impl Write) -> Result<()> {
    writeln!(w, "{CONVERGENCE_HEADER}")?;
    for r in &table.rows {
        writeln!(
            w,
            "{},{:e},{},{:.6e},{},{:.6e},{},{:.6e},{}",
            r.level,
            r.h_over_sqrt2,
            r.member + 1,
            r.errors.flux,
            opt(r.flux_rate),
            r.errors.scalar,
            opt(r.scalar_rate),
            r.errors.postprocessed,
            opt(r.postprocessed_rate)
        )?;
    }
    Ok(())
}

pub fn read_convergence_csv(text: &str) -> Result<ConvergenceTable> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some(CONVERGENCE_HEADER) {
        return Err(HdgError::Parse("missing convergence table header".into()));
    }
    let num = |s: &str| {
        s.trim()
            .parse::<f64>()
            .map_err(|e| HdgError::Parse(format!("'{s}': {e}")))
    };
    let rate = |s: &str| {
        if s.trim().is_empty() {
            Ok(None)
        } else {
            num(s).map(Some)
        }
    };
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 9 {
            return Err(HdgError::Parse(format!(
                "row {}: expected 9 fields, found {}",
                i + 1,
                f.len()
            )));
        }
        let int = |s: &str| {
            s.trim()
                .parse::<usize>()
                .map_err(|e| HdgError::Parse(format!("'{s}': {e}")))
        };
        let member = int(f[2])?;
        if member == 0 {
            return Err(HdgError::Parse(format!("row {}: members are numbered from 1", i + 1)));
        }
        rows.push(ConvergenceRow {
            level: int(f[0])?,
            h_over_sqrt2: num(f[1])?,
            member: member - 1,
            errors: MemberErrors {
                flux: num(f[3])?,
                scalar: num(f[5])?,
                postprocessed: num(f[7])?,
            },
            flux_rate: rate(f[4])?,
            scalar_rate: rate(f[6])?,
            postprocessed_rate: rate(f[8])?,
        });
    }
    Ok(ConvergenceTable { rows })
}

/// Scalar fields of every member at one time level.
#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub step: usize,
    pub time: f64,
    pub u: Vec<DgField>,
    pub ustar: Vec<DgField>,
}

impl Snapshot {
    pub fn capture(solver: &EnsembleSolver, post: &Postprocessor, state: &EnsembleState) -> Result<Self> {
        let ustar = (0..state.u.len())
            .map(|j| {
                let c = &solver
                    .member_samples(j)
                    .ok_or(HdgError::InvalidArgument("coefficients not sampled yet".into()))?
                    .c;
                Ok(post.apply(solver.frames(), solver.reference(), &state.q[j], &state.u[j], c))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            step: state.step,
            time: state.time,
            u: state.u.clone(),
            ustar,
        })
    }
}

/// Reference coordinates of the three vertices and the centroid.
const SAMPLE_POINTS: [[f64; 2]; 4] = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0 / 3.0, 1.0 / 3.0]];

fn element_values(field: &DgField, e: usize, basis: &OrthoBasis, xi: [f64; 2], buf: &mut [f64]) -> f64 {
    basis.eval(xi, buf);
    field.component(e, 0).iter().zip(buf.iter()).map(|(c, v)| c * v).sum()
}

/// `member,element,x,y,u,ustar` at the vertices and centroid of every element.
pub fn write_snapshot_csv(mesh: &Mesh, snap: &Snapshot, mut w: impl Write) -> Result<()> {
    writeln!(w, "member,element,x,y,u,ustar")?;
    for (j, (u, us)) in snap.u.iter().zip(&snap.ustar).enumerate() {
        let bu = OrthoBasis::new(u.degree())?;
        let bs = OrthoBasis::new(us.degree())?;
        let mut buf = vec![0.0; bs.dim().max(bu.dim())];
        for e in 0..mesh.num_elements() {
            let geom = mesh.element_geometry(e)?;
            for xi in SAMPLE_POINTS {
                let p = geom.map(xi);
                let a = element_values(u, e, &bu, xi, &mut buf);
                let b = element_values(us, e, &bs, xi, &mut buf);
                writeln!(w, "{},{},{:.9e},{:.9e},{:.9e},{:.9e}", j + 1, e, p.x, p.y, a, b)?;
            }
        }
    }
    Ok(())
}

/// Legacy ASCII VTK polydata with discontinuous per-element vertices and
/// point scalars `u_j`, `ustar_j`.
pub fn write_snapshot_vtk(mesh: &Mesh, snap: &Snapshot, mut w: impl Write) -> Result<()> {
    let ne = mesh.num_elements();
    writeln!(w, "# vtk DataFile Version 3.0")?;
    writeln!(w, "ensemble HDG snapshot step {} t = {}", snap.step, snap.time)?;
    writeln!(w, "ASCII")?;
    writeln!(w, "DATASET POLYDATA")?;
    writeln!(w, "POINTS {} double", 3 * ne)?;
    for e in 0..ne {
        for v in mesh.element_geometry(e)?.vertices {
            writeln!(w, "{:.9e} {:.9e} 0", v.x, v.y)?;
        }
    }
    writeln!(w, "POLYGONS {} {}", ne, 4 * ne)?;
    for e in 0..ne {
        writeln!(w, "3 {} {} {}", 3 * e, 3 * e + 1, 3 * e + 2)?;
    }
    writeln!(w, "POINT_DATA {}", 3 * ne)?;
    let arrays = snap
        .u
        .iter()
        .enumerate()
        .map(|(j, f)| (format!("u_{}", j + 1), f))
        .chain(
            snap.ustar
                .iter()
                .enumerate()
                .map(|(j, f)| (format!("ustar_{}", j + 1), f)),
        );
    for (name, field) in arrays {
        let basis = OrthoBasis::new(field.degree())?;
        let mut buf = vec![0.0; basis.dim()];
        writeln!(w, "SCALARS {name} double 1")?;
        writeln!(w, "LOOKUP_TABLE default")?;
        for e in 0..ne {
            for xi in &SAMPLE_POINTS[..3] {
                writeln!(w, "{:.9e}", element_values(field, e, &basis, *xi, &mut buf))?;
            }
        }
    }
    Ok(())
}

/// Finds the element containing a point using a uniform bucket grid over
/// element bounding boxes.
#[derive(Clone, Debug)]
pub struct PointLocator {
    origin: Point2<f64>,
    cell: f64,
    dims: (usize, usize),
    buckets: Vec<Vec<usize>>,
}

impl PointLocator {
    pub fn new(mesh: &Mesh) -> Self {
        let vs = mesh.vertices();
        let (mut lo, mut hi) = (vs[0], vs[0]);
        for v in vs {
            lo = Point2::new(lo.x.min(v.x), lo.y.min(v.y));
            hi = Point2::new(hi.x.max(v.x), hi.y.max(v.y));
        }
        let side = (mesh.num_elements() as f64).sqrt().ceil().max(1.0) as usize;
        let cell = ((hi.x - lo.x).max(hi.y - lo.y) / side as f64).max(f64::MIN_POSITIVE);
        let dims = (side + 1, side + 1);
        let mut buckets = vec![Vec::new(); dims.0 * dims.1];
        let idx = |x: f64, o: f64, n: usize| (((x - o) / cell).floor().max(0.0) as usize).min(n - 1);
        for (e, tri) in mesh.elements().iter().enumerate() {
            let xs = tri.map(|v| vs[v].x);
            let ys = tri.map(|v| vs[v].y);
            let (x0, x1) = (
                xs.iter().cloned().fold(f64::MAX, f64::min),
                xs.iter().cloned().fold(f64::MIN, f64::max),
            );
            let (y0, y1) = (
                ys.iter().cloned().fold(f64::MAX, f64::min),
                ys.iter().cloned().fold(f64::MIN, f64::max),
            );
            for i in idx(x0, lo.x, dims.0)..=idx(x1, lo.x, dims.0) {
                for j in idx(y0, lo.y, dims.1)..=idx(y1, lo.y, dims.1) {
                    buckets[j * dims.0 + i].push(e);
                }
            }
        }
        Self {
            origin: lo,
            cell,
            dims,
            buckets,
        }
    }

    /// Element and reference coordinates of `p`, if inside the mesh.
    pub fn locate(&self, mesh: &Mesh, p: Point2<f64>) -> Option<(usize, [f64; 2])> {
        let i = ((p.x - self.origin.x) / self.cell).floor();
        let j = ((p.y - self.origin.y) / self.cell).floor();
        if i < 0.0 || j < 0.0 {
            return None;
        }
        let (i, j) = ((i as usize).min(self.dims.0 - 1), (j as usize).min(self.dims.1 - 1));
        let tol = 1e-12;
        for &e in &self.buckets[j * self.dims.0 + i] {
            let geom = mesh.element_geometry(e).ok()?;
            let d = p - geom.vertices[0];
            let inv = geom.jacobian.try_inverse()?;
            let xi = inv * d;
            if xi.x >= -tol && xi.y >= -tol && xi.x + xi.y <= 1.0 + tol {
                return Some((e, [xi.x, xi.y]));
            }
        }
        None
    }
}

/// Values of a scalar field on an `m x m` grid over the unit square, row-major
/// in `y`; `NaN` where the point is outside the mesh.
pub fn sample_grid(mesh: &Mesh, field: &DgField, m: usize) -> Result<Vec<(Point2<f64>, f64)>> {
    let basis = OrthoBasis::new(field.degree())?;
    let mut buf = vec![0.0; basis.dim()];
    let locator = PointLocator::new(mesh);
    let step = if m > 1 { 1.0 / (m - 1) as f64 } else { 0.0 };
    let mut out = Vec::with_capacity(m * m);
    for j in 0..m {
        for i in 0..m {
            let p = Point2::new(i as f64 * step, j as f64 * step);
            let v = match locator.locate(mesh, p) {
                Some((e, xi)) => element_values(field, e, &basis, xi, &mut buf),
                None => f64::NAN,
            };
            out.push((p, v));
        }
    }
    Ok(out)
}

pub fn write_grid_csv(samples: &[(Point2<f64>, f64)], mut w: impl Write) -> Result<()> {
    writeln!(w, "x,y,value")?;
    for (p, v) in samples {
        writeln!(w, "{:.9e},{:.9e},{:.9e}", p.x, p.y, v)?;
    }
    Ok(())
}

/// When snapshots are written.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SnapshotPolicy {
    None,
    Final,
    Every(usize),
}

impl std::str::FromStr for SnapshotPolicy {
    type Err = HdgError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Self::None),
            "final" => Ok(Self::Final),
            _ => s
                .strip_prefix("every=")
                .and_then(|v| v.parse::<usize>().ok())
                .filter(|m| *m > 0)
                .map(Self::Every)
                .ok_or_else(|| HdgError::Parse(format!("unknown snapshot policy '{s}'"))),
        }
    }
}

/// Writes `snapshot_<step>.csv` and `.vtk` files into a directory.
#[derive(Debug)]
pub struct SnapshotWriter {
    dir: std::path::PathBuf,
    policy: SnapshotPolicy,
    post: Option<Postprocessor>,
    pub written: Vec<std::path::PathBuf>,
}

impl SnapshotWriter {
    pub fn new(dir: impl Into<std::path::PathBuf>, policy: SnapshotPolicy) -> Self {
        Self {
            dir: dir.into(),
            policy,
            post: None,
            written: Vec::new(),
        }
    }

    fn wanted(&self, step: usize, last: usize) -> bool {
        match self.policy {
            SnapshotPolicy::None => false,
            SnapshotPolicy::Final => step == last,
            SnapshotPolicy::Every(m) => step.is_multiple_of(m) || step == last,
        }
    }
}

impl Observer for SnapshotWriter {
    fn observe(&mut self, solver: &EnsembleSolver, state: &EnsembleState) -> Result<()> {
        if !self.wanted(state.step, solver.num_steps()) {
            return Ok(());
        }
        if self.post.is_none() {
            self.post = Some(Postprocessor::new(solver.frames(), solver.reference())?);
        }
        let snap = Snapshot::capture(solver, self.post.as_ref().expect("built above"), state)?;
        std::fs::create_dir_all(&self.dir)?;
        let base = self.dir.join(format!("snapshot_{:06}", state.step));
        let csv = base.with_extension("csv");
        let vtk = base.with_extension("vtk");
        write_snapshot_csv(
            solver.mesh(),
            &snap,
            std::io::BufWriter::new(std::fs::File::create(&csv)?),
        )?;
        write_snapshot_vtk(
            solver.mesh(),
            &snap,
            std::io::BufWriter::new(std::fs::File::create(&vtk)?),
        )?;
        self.written.push(csv);
        self.written.push(vtk);
        Ok(())
    }
}
