//! Global trace system: numbering, sparse assembly and factorization.

use std::io::Write;

use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};
use faer::MatMut;

use crate::error::{HdgError, Result};
use crate::hdg_local::CondensedElement;
use crate::mesh::Mesh;
use crate::reference::ElementFrame;

/// Numbering of trace unknowns: interior faces in mesh order, modes innermost.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TraceDofMap {
    slots: Vec<Option<usize>>,
    face_modes: usize,
    num_slots: usize,
}

impl TraceDofMap {
    pub fn new(mesh: &Mesh, face_modes: usize) -> Self {
        let mut next = 0;
        let slots = (0..mesh.num_faces())
            .map(|f| {
                (!mesh.is_boundary(f)).then(|| {
                    next += 1;
                    next - 1
                })
            })
            .collect();
        Self {
            slots,
            face_modes,
            num_slots: next,
        }
    }

    pub fn len(&self) -> usize {
        self.num_slots * self.face_modes
    }

    pub fn is_empty(&self) -> bool {
        self.num_slots == 0
    }

    pub fn face_modes(&self) -> usize {
        self.face_modes
    }

    /// First dof of a face, `None` on the boundary.
    pub fn face_offset(&self, face: usize) -> Option<usize> {
        self.slots[face].map(|s| s * self.face_modes)
    }
}

/// Square sparse matrix in compressed-row form.
#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub cols: Vec<usize>,
    pub vals: Vec<f64>,
}

impl CsrMatrix {
    /// Sums duplicate entries.
    pub fn from_triplets(n: usize, mut entries: Vec<(usize, usize, f64)>) -> Self {
        entries.sort_unstable_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0; n + 1];
        let mut cols = Vec::with_capacity(entries.len());
        let mut vals: Vec<f64> = Vec::with_capacity(entries.len());
        let mut last = None;
        for (r, c, v) in entries {
            if last == Some((r, c)) {
                *vals.last_mut().unwrap() += v;
            } else {
                cols.push(c);
                vals.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        Self { n, row_ptr, cols, vals }
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let range = self.row_ptr[r]..self.row_ptr[r + 1];
        match self.cols[range.clone()].binary_search(&c) {
            Ok(i) => self.vals[range.start + i],
            Err(_) => 0.0,
        }
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for (r, yr) in y.iter_mut().enumerate().take(self.n) {
            let mut acc = 0.0;
            for i in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.vals[i] * x[self.cols[i]];
            }
            *yr = acc;
        }
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let mut d = nalgebra::DMatrix::zeros(self.n, self.n);
        for r in 0..self.n {
            for i in self.row_ptr[r]..self.row_ptr[r + 1] {
                d[(r, self.cols[i])] = self.vals[i];
            }
        }
        d
    }

    fn to_faer(&self) -> Result<SparseColMat<usize, f64>> {
        let mut trip = Vec::with_capacity(self.nnz());
        for r in 0..self.n {
            for i in self.row_ptr[r]..self.row_ptr[r + 1] {
                trip.push(Triplet::new(r, self.cols[i], self.vals[i]));
            }
        }
        SparseColMat::try_new_from_triplets(self.n, self.n, &trip)
            .map_err(|e| HdgError::SingularMatrix(format!("sparse conversion failed: {e:?}")))
    }

    /// MatrixMarket coordinate format, 1-based indices.
    pub fn write_matrix_market(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "%%MatrixMarket matrix coordinate real general")?;
        writeln!(w, "{} {} {}", self.n, self.n, self.nnz())?;
        for r in 0..self.n {
            for i in self.row_ptr[r]..self.row_ptr[r + 1] {
                writeln!(w, "{} {} {:.17e}", r + 1, self.cols[i] + 1, self.vals[i])?;
            }
        }
        Ok(())
    }
}

/// Sums the condensed element matrices into the global trace matrix.
pub fn assemble_trace_matrix(frames: &[ElementFrame], condensed: &[CondensedElement], dofs: &TraceDofMap) -> CsrMatrix {
    let m = dofs.face_modes();
    let mut entries = Vec::with_capacity(condensed.len() * 9 * m * m);
    for (frame, elem) in frames.iter().zip(condensed) {
        for fi in 0..3 {
            let Some(ri) = dofs.face_offset(frame.faces[fi]) else {
                continue;
            };
            for fj in 0..3 {
                let Some(cj) = dofs.face_offset(frame.faces[fj]) else {
                    continue;
                };
                for a in 0..m {
                    for b in 0..m {
                        entries.push((ri + a, cj + b, elem.schur[(fi * m + a, fj * m + b)]));
                    }
                }
            }
        }
    }
    CsrMatrix::from_triplets(dofs.len(), entries)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum SolverBackend {
    #[default]
    SparseLu,
    /// Restarted GMRES with an ILU(0) preconditioner.
    Gmres,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GmresSettings {
    pub restart: usize,
    pub max_iterations: usize,
    pub tolerance: f64,
}

impl Default for GmresSettings {
    fn default() -> Self {
        Self {
            restart: 60,
            max_iterations: 5000,
            tolerance: 1e-13,
        }
    }
}

enum Factor {
    Lu(Box<faer::sparse::linalg::solvers::Lu<usize, f64>>),
    Gmres { ilu: Ilu0, settings: GmresSettings },
}

/// A factorized trace matrix, tagged with the fingerprint of the data it was
/// built from.
pub struct TraceSystem {
    matrix: CsrMatrix,
    factor: Factor,
    fingerprint: u64,
}

impl std::fmt::Debug for TraceSystem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TraceSystem")
            .field("n", &self.matrix.n)
            .field("nnz", &self.matrix.nnz())
            .field("fingerprint", &self.fingerprint)
            .finish()
    }
}

impl TraceSystem {
    pub fn factorize(matrix: CsrMatrix, backend: SolverBackend, fingerprint: u64) -> Result<Self> {
        let factor = match backend {
            SolverBackend::SparseLu => {
                let lu = matrix
                    .to_faer()?
                    .sp_lu()
                    .map_err(|e| HdgError::SingularMatrix(format!("sparse LU failed: {e:?}")))?;
                Factor::Lu(Box::new(lu))
            }
            SolverBackend::Gmres => Factor::Gmres {
                ilu: Ilu0::new(&matrix)?,
                settings: GmresSettings::default(),
            },
        };
        let system = Self {
            matrix,
            factor,
            fingerprint,
        };
        system.probe()?;
        Ok(system)
    }

    /// Solves against `A 1` and checks the answer, to catch factorizations
    /// that succeed structurally but are numerically singular.
    fn probe(&self) -> Result<()> {
        let n = self.matrix.n;
        if n == 0 {
            return Ok(());
        }
        let ones = vec![1.0; n];
        let mut b = vec![0.0; n];
        self.matrix.matvec(&ones, &mut b);
        let mut x = b.clone();
        self.solve_unchecked(&mut x, 1)?;
        let err = x.iter().map(|v| (v - 1.0).abs()).fold(0.0, f64::max);
        if !err.is_finite() || err > 1e-6 {
            return Err(HdgError::SingularMatrix(format!(
                "trace matrix is numerically singular (probe error {err:.3e})"
            )));
        }
        Ok(())
    }

    pub fn fingerprint(&self) -> u64 {
        self.fingerprint
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    pub fn len(&self) -> usize {
        self.matrix.n
    }

    pub fn is_empty(&self) -> bool {
        self.matrix.n == 0
    }

    /// Overwrites `rhs` (column-major, `columns` right-hand sides) with the
    /// solutions. Refuses to run if `fingerprint` differs from the one the
    /// factorization was built with.
    pub fn solve_multi(&self, rhs: &mut [f64], columns: usize, fingerprint: u64) -> Result<()> {
        if fingerprint != self.fingerprint {
            return Err(HdgError::FingerprintMismatch {
                cached: self.fingerprint,
                current: fingerprint,
            });
        }
        self.solve_unchecked(rhs, columns)
    }

    fn solve_unchecked(&self, rhs: &mut [f64], columns: usize) -> Result<()> {
        let n = self.matrix.n;
        if rhs.len() != n * columns {
            return Err(HdgError::DimensionMismatch {
                expected: n * columns,
                found: rhs.len(),
            });
        }
        if n == 0 {
            return Ok(());
        }
        match &self.factor {
            Factor::Lu(lu) => {
                let view = MatMut::from_column_major_slice_mut(rhs, n, columns);
                lu.solve_in_place(view);
            }
            Factor::Gmres { ilu, settings } => {
                for col in rhs.chunks_mut(n) {
                    let b = col.to_vec();
                    gmres(&self.matrix, ilu, &b, col, settings)?;
                }
            }
        }
        if rhs.iter().any(|v| !v.is_finite()) {
            return Err(HdgError::SingularMatrix(
                "trace solve produced non-finite values".into(),
            ));
        }
        Ok(())
    }

    /// `max_j |A x_j - b_j| / max(|b_j|, tiny)` over the columns.
    pub fn relative_residual(&self, x: &[f64], b: &[f64]) -> f64 {
        relative_residual(&self.matrix, x, b)
    }
}

pub fn relative_residual(matrix: &CsrMatrix, x: &[f64], b: &[f64]) -> f64 {
    let n = matrix.n;
    if n == 0 {
        return 0.0;
    }
    let mut ax = vec![0.0; n];
    let mut worst: f64 = 0.0;
    for (xc, bc) in x.chunks(n).zip(b.chunks(n)) {
        matrix.matvec(xc, &mut ax);
        let r = ax.iter().zip(bc).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let s = bc.iter().map(|v| v.abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
        worst = worst.max(r / s);
    }
    worst
}

/// Incomplete LU with the sparsity pattern of the matrix.
struct Ilu0 {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
    diag: Vec<usize>,
}

impl Ilu0 {
    fn new(a: &CsrMatrix) -> Result<Self> {
        let n = a.n;
        let mut vals = a.vals.clone();
        let mut diag = vec![0; n];
        for (r, d) in diag.iter_mut().enumerate() {
            let range = a.row_ptr[r]..a.row_ptr[r + 1];
            let pos = a.cols[range.clone()]
                .binary_search(&r)
                .map_err(|_| HdgError::SingularMatrix(format!("missing diagonal in row {r}")))?;
            *d = range.start + pos;
        }
        let mut marker = vec![usize::MAX; n];
        for i in 0..n {
            for p in a.row_ptr[i]..a.row_ptr[i + 1] {
                marker[a.cols[p]] = p;
            }
            for p in a.row_ptr[i]..diag[i] {
                let k = a.cols[p];
                let pivot = vals[diag[k]];
                if pivot == 0.0 {
                    return Err(HdgError::SingularMatrix(format!("zero ILU pivot in row {k}")));
                }
                vals[p] /= pivot;
                let lik = vals[p];
                for q in diag[k] + 1..a.row_ptr[k + 1] {
                    let slot = marker[a.cols[q]];
                    if slot != usize::MAX {
                        vals[slot] -= lik * vals[q];
                    }
                }
            }
            for p in a.row_ptr[i]..a.row_ptr[i + 1] {
                marker[a.cols[p]] = usize::MAX;
            }
            if vals[diag[i]] == 0.0 {
                return Err(HdgError::SingularMatrix(format!("zero ILU pivot in row {i}")));
            }
        }
        Ok(Self {
            n,
            row_ptr: a.row_ptr.clone(),
            cols: a.cols.clone(),
            vals,
            diag,
        })
    }

    fn apply(&self, x: &mut [f64]) {
        for i in 0..self.n {
            let mut acc = x[i];
            for p in self.row_ptr[i]..self.diag[i] {
                acc -= self.vals[p] * x[self.cols[p]];
            }
            x[i] = acc;
        }
        for i in (0..self.n).rev() {
            let mut acc = x[i];
            for p in self.diag[i] + 1..self.row_ptr[i + 1] {
                acc -= self.vals[p] * x[self.cols[p]];
            }
            x[i] = acc / self.vals[self.diag[i]];
        }
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Right-preconditioned restarted GMRES; `x` holds the initial guess on entry.
fn gmres(a: &CsrMatrix, m: &Ilu0, b: &[f64], x: &mut [f64], s: &GmresSettings) -> Result<()> {
    let n = a.n;
    let bnorm = norm(b);
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(());
    }
    x.iter_mut().for_each(|v| *v = 0.0);
    let restart = s.restart.min(n).max(1);
    let mut r = vec![0.0; n];
    let mut w = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut iterations = 0;
    loop {
        a.matvec(x, &mut r);
        r.iter_mut().zip(b).for_each(|(ri, bi)| *ri = bi - *ri);
        let beta = norm(&r);
        if beta <= s.tolerance * bnorm {
            return Ok(());
        }
        let mut basis: Vec<Vec<f64>> = vec![r.iter().map(|v| v / beta).collect()];
        let mut h = vec![vec![0.0; restart]; restart + 1];
        let (mut cs, mut sn) = (vec![0.0; restart], vec![0.0; restart]);
        let mut g = vec![0.0; restart + 1];
        g[0] = beta;
        let mut used = 0;
        for j in 0..restart {
            z.copy_from_slice(&basis[j]);
            m.apply(&mut z);
            a.matvec(&z, &mut w);
            for (i, v) in basis.iter().enumerate() {
                let hij: f64 = w.iter().zip(v).map(|(a, b)| a * b).sum();
                h[i][j] = hij;
                w.iter_mut().zip(v).for_each(|(wk, vk)| *wk -= hij * vk);
            }
            let hn = norm(&w);
            h[j + 1][j] = hn;
            for i in 0..j {
                let t = cs[i] * h[i][j] + sn[i] * h[i + 1][j];
                h[i + 1][j] = -sn[i] * h[i][j] + cs[i] * h[i + 1][j];
                h[i][j] = t;
            }
            let d = h[j][j].hypot(h[j + 1][j]);
            cs[j] = h[j][j] / d;
            sn[j] = h[j + 1][j] / d;
            h[j][j] = d;
            h[j + 1][j] = 0.0;
            g[j + 1] = -sn[j] * g[j];
            g[j] *= cs[j];
            used = j + 1;
            iterations += 1;
            if g[j + 1].abs() <= s.tolerance * bnorm || hn == 0.0 {
                break;
            }
            basis.push(w.iter().map(|v| v / hn).collect());
        }
        let mut y = vec![0.0; used];
        for i in (0..used).rev() {
            let mut acc = g[i];
            for k in i + 1..used {
                acc -= h[i][k] * y[k];
            }
            y[i] = acc / h[i][i];
        }
        z.iter_mut().for_each(|v| *v = 0.0);
        for (yi, v) in y.iter().zip(&basis) {
            z.iter_mut().zip(v).for_each(|(zk, vk)| *zk += yi * vk);
        }
        m.apply(&mut z);
        x.iter_mut().zip(&z).for_each(|(xk, zk)| *xk += zk);
        if g[used].abs() <= s.tolerance * bnorm {
            return Ok(());
        }
        if iterations >= s.max_iterations {
            return Err(HdgError::SingularMatrix(format!(
                "GMRES did not converge in {iterations} iterations"
            )));
        }
    }
}
