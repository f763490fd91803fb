//! CSR matrices and preconditioned Krylov solvers (Jacobi or ILU(0)).
//!
//! Reductions are summed over fixed-size chunks in index order, so results
//! do not depend on the rayon thread count.

use crate::{Error, Result};
use rayon::prelude::*;
use std::io::{BufRead, Write};

const CHUNK: usize = 8192;

/// Square matrix in compressed sparse row form.
#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<u32>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Validated constructor: monotone offsets, sorted unique in-range columns.
    pub fn new(n: usize, row_offsets: Vec<usize>, col_indices: Vec<u32>, values: Vec<f64>) -> Result<Self> {
        if row_offsets.len() != n + 1 {
            return Err(Error::DimensionMismatch { expected: n + 1, got: row_offsets.len() });
        }
        if row_offsets[0] != 0 || row_offsets[n] != col_indices.len() || col_indices.len() != values.len() {
            return Err(Error::InvalidArgument("inconsistent CSR array lengths".into()));
        }
        for i in 0..n {
            let (a, b) = (row_offsets[i], row_offsets[i + 1]);
            if a > b {
                return Err(Error::InvalidArgument(format!("row offsets decrease at row {i}")));
            }
            let cols = &col_indices[a..b];
            if cols.windows(2).any(|w| w[0] >= w[1]) || cols.iter().any(|&c| c as usize >= n) {
                return Err(Error::InvalidArgument(format!("row {i} columns unsorted or out of range")));
            }
        }
        Ok(CsrMatrix { n, row_offsets, col_indices, values })
    }

    pub(crate) fn from_parts(n: usize, row_offsets: Vec<usize>, col_indices: Vec<u32>, values: Vec<f64>) -> Self {
        debug_assert!(CsrMatrix::new(n, row_offsets.clone(), col_indices.clone(), values.clone()).is_ok());
        CsrMatrix { n, row_offsets, col_indices, values }
    }

    pub fn identity(n: usize) -> Self {
        CsrMatrix {
            n,
            row_offsets: (0..=n).collect(),
            col_indices: (0..n as u32).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn zeros(n: usize) -> Self {
        CsrMatrix { n, row_offsets: vec![0; n + 1], col_indices: Vec::new(), values: Vec::new() }
    }

    /// Build from `(row, col, value)` triplets; duplicates are summed in input order.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let mut order: Vec<usize> = (0..triplets.len()).collect();
        if let Some(t) = triplets.iter().find(|t| t.0 >= n || t.1 >= n) {
            return Err(Error::InvalidArgument(format!("entry ({}, {}) outside {n}x{n}", t.0, t.1)));
        }
        order.sort_by_key(|&k| (triplets[k].0, triplets[k].1));
        let mut row_offsets = vec![0usize; n + 1];
        let mut col_indices = Vec::new();
        let mut values: Vec<f64> = Vec::new();
        let mut last = None;
        for k in order {
            let (i, j, v) = triplets[k];
            if last == Some((i, j)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_indices.push(j as u32);
                values.push(v);
                row_offsets[i + 1] += 1;
                last = Some((i, j));
            }
        }
        for i in 0..n {
            row_offsets[i + 1] += row_offsets[i];
        }
        Ok(CsrMatrix { n, row_offsets, col_indices, values })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn col_indices(&self) -> &[u32] {
        &self.col_indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, i: usize) -> (&[u32], &[f64]) {
        let (a, b) = (self.row_offsets[i], self.row_offsets[i + 1]);
        (&self.col_indices[a..b], &self.values[a..b])
    }

    /// Stored value at `(i, j)`, zero when absent.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        cols.binary_search(&(j as u32)).map_or(0.0, |k| vals[k])
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut y = vec![0.0; self.n];
        self.matvec_into(x, &mut y)?;
        Ok(y)
    }

    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) -> Result<()> {
        if x.len() != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, got: x.len() });
        }
        if y.len() != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, got: y.len() });
        }
        y.par_iter_mut().enumerate().with_min_len(1024).for_each(|(i, yi)| {
            let (cols, vals) = self.row(i);
            *yi = cols.iter().zip(vals).map(|(&c, &v)| v * x[c as usize]).sum();
        });
        Ok(())
    }

    pub fn transpose(&self) -> CsrMatrix {
        let mut counts = vec![0usize; self.n + 1];
        for &c in &self.col_indices {
            counts[c as usize + 1] += 1;
        }
        for i in 0..self.n {
            counts[i + 1] += counts[i];
        }
        let mut fill = counts.clone();
        let mut cols = vec![0u32; self.nnz()];
        let mut vals = vec![0.0; self.nnz()];
        for i in 0..self.n {
            let (rc, rv) = self.row(i);
            for (&c, &v) in rc.iter().zip(rv) {
                let k = fill[c as usize];
                cols[k] = i as u32;
                vals[k] = v;
                fill[c as usize] += 1;
            }
        }
        CsrMatrix { n: self.n, row_offsets: counts, col_indices: cols, values: vals }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Largest entry of `|A - A^T|`.
    pub fn symmetry_defect(&self) -> f64 {
        (0..self.n)
            .into_par_iter()
            .map(|i| {
                let (cols, vals) = self.row(i);
                cols.iter()
                    .zip(vals)
                    .map(|(&j, &v)| (v - self.get(j as usize, i)).abs())
                    .fold(0.0, f64::max)
            })
            .reduce(|| 0.0, f64::max)
    }

    /// Symmetry probe: `max |A - A^T| <= rel * max |A|`.
    pub fn is_symmetric(&self, rel: f64) -> bool {
        self.symmetry_defect() <= rel * self.max_abs()
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.n]; self.n];
        for (i, row) in d.iter_mut().enumerate() {
            let (cols, vals) = self.row(i);
            for (&c, &v) in cols.iter().zip(vals) {
                row[c as usize] = v;
            }
        }
        d
    }

    /// MatrixMarket coordinate format, 1-based indices.
    pub fn write_matrix_market<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "%%MatrixMarket matrix coordinate real general")?;
        writeln!(w, "{} {} {}", self.n, self.n, self.nnz())?;
        for i in 0..self.n {
            let (cols, vals) = self.row(i);
            for (&c, &v) in cols.iter().zip(vals) {
                writeln!(w, "{} {} {}", i + 1, c + 1, v)?;
            }
        }
        Ok(())
    }

    pub fn read_matrix_market<R: BufRead>(r: R) -> Result<CsrMatrix> {
        let mut size: Option<(usize, usize)> = None;
        let mut trip = Vec::new();
        for (n, line) in r.lines().enumerate() {
            let line = line?;
            let t = line.trim();
            if t.is_empty() || t.starts_with('%') {
                continue;
            }
            let bad = |msg: &str| Error::Parse { line: n + 1, msg: msg.to_string() };
            let f: Vec<&str> = t.split_whitespace().collect();
            if f.len() != 3 {
                return Err(bad("expected three fields"));
            }
            match size {
                None => {
                    let rows: usize = f[0].parse().map_err(|_| bad("bad size"))?;
                    let cols: usize = f[1].parse().map_err(|_| bad("bad size"))?;
                    if rows != cols {
                        return Err(bad("matrix must be square"));
                    }
                    size = Some((rows, f[2].parse().map_err(|_| bad("bad size"))?));
                }
                Some(_) => {
                    let i: usize = f[0].parse().map_err(|_| bad("bad row"))?;
                    let j: usize = f[1].parse().map_err(|_| bad("bad column"))?;
                    let v: f64 = f[2].parse().map_err(|_| bad("bad value"))?;
                    if i == 0 || j == 0 {
                        return Err(bad("indices are 1-based"));
                    }
                    trip.push((i - 1, j - 1, v));
                }
            }
        }
        let (n, nnz) = size.ok_or(Error::Parse { line: 0, msg: "missing size line".into() })?;
        if trip.len() != nnz {
            return Err(Error::Parse { line: 0, msg: format!("expected {nnz} entries, got {}", trip.len()) });
        }
        CsrMatrix::from_triplets(n, &trip)
    }
}

/// Chunked dot product with a thread-count independent summation order.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    let parts: Vec<f64> = a
        .par_chunks(CHUNK)
        .zip(b.par_chunks(CHUNK))
        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| p * q).sum::<f64>())
        .collect();
    parts.iter().sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    y.par_iter_mut().zip(x).with_min_len(CHUNK).for_each(|(yi, xi)| *yi += alpha * xi);
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    /// CG when the symmetry probe passes, BiCGStab otherwise.
    Auto,
    Cg,
    BiCgStab,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Preconditioner {
    Jacobi,
    /// Zero-fill incomplete LU; falls back to Jacobi if a pivot vanishes.
    Ilu0,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolveOptions {
    pub rel_tol: f64,
    /// Defaults to `10 n` when `None`.
    pub max_iter: Option<usize>,
    pub method: Method,
    pub preconditioner: Preconditioner,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions { rel_tol: 1e-10, max_iter: None, method: Method::Auto, preconditioner: Preconditioner::Ilu0 }
    }
}

/// Incomplete LU factors sharing the sparsity of `A`: unit lower part and
/// upper part with diagonal, stored in one value array.
struct Ilu0<'a> {
    a: &'a CsrMatrix,
    lu: Vec<f64>,
    diag_pos: Vec<usize>,
}

impl<'a> Ilu0<'a> {
    fn factor(a: &'a CsrMatrix) -> Option<Self> {
        let n = a.n;
        let mut lu = a.values.clone();
        let mut diag_pos = vec![usize::MAX; n];
        for i in 0..n {
            let (s, e) = (a.row_offsets[i], a.row_offsets[i + 1]);
            diag_pos[i] = s + a.col_indices[s..e].binary_search(&(i as u32)).ok()?;
        }
        let mut slot = vec![usize::MAX; n];
        for i in 0..n {
            let (s, e) = (a.row_offsets[i], a.row_offsets[i + 1]);
            for p in s..e {
                slot[a.col_indices[p] as usize] = p;
            }
            for p in s..diag_pos[i] {
                let k = a.col_indices[p] as usize;
                let pivot = lu[diag_pos[k]];
                lu[p] /= pivot;
                let lik = lu[p];
                for q in diag_pos[k] + 1..a.row_offsets[k + 1] {
                    let t = slot[a.col_indices[q] as usize];
                    if t != usize::MAX {
                        lu[t] -= lik * lu[q];
                    }
                }
            }
            for p in s..e {
                slot[a.col_indices[p] as usize] = usize::MAX;
            }
            let d = lu[diag_pos[i]];
            if d == 0.0 || !d.is_finite() {
                return None;
            }
        }
        Some(Ilu0 { a, lu, diag_pos })
    }

    fn apply(&self, r: &[f64]) -> Vec<f64> {
        let a = self.a;
        let mut z = r.to_vec();
        for i in 0..a.n {
            let mut acc = z[i];
            for p in a.row_offsets[i]..self.diag_pos[i] {
                acc -= self.lu[p] * z[a.col_indices[p] as usize];
            }
            z[i] = acc;
        }
        for i in (0..a.n).rev() {
            let mut acc = z[i];
            for p in self.diag_pos[i] + 1..a.row_offsets[i + 1] {
                acc -= self.lu[p] * z[a.col_indices[p] as usize];
            }
            z[i] = acc / self.lu[self.diag_pos[i]];
        }
        z
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolveReport {
    pub iterations: usize,
    /// True relative residual `|b - A x| / |b|` of the returned iterate.
    pub residual: f64,
    pub converged: bool,
    /// Method actually used.
    pub method: Method,
}

/// Solve `A x = b` from the initial guess `x0` (zero when `None`).
///
/// Non-convergence is reported, not raised; dimension errors are raised.
pub fn solve(a: &CsrMatrix, b: &[f64], x0: Option<&[f64]>, opts: &SolveOptions) -> Result<(Vec<f64>, SolveReport)> {
    let n = a.n();
    if b.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: b.len() });
    }
    let mut x = match x0 {
        Some(v) if v.len() != n => return Err(Error::DimensionMismatch { expected: n, got: v.len() }),
        Some(v) => v.to_vec(),
        None => vec![0.0; n],
    };
    let method = match opts.method {
        Method::Auto if a.is_symmetric(1e-12) => Method::Cg,
        Method::Auto => Method::BiCgStab,
        m => m,
    };
    let bnorm = norm2(b);
    if bnorm == 0.0 {
        return Ok((vec![0.0; n], SolveReport { iterations: 0, residual: 0.0, converged: true, method }));
    }
    let max_iter = opts.max_iter.unwrap_or(10 * n.max(1));
    let inv_diag: Vec<f64> = a.diagonal().iter().map(|&d| if d != 0.0 { 1.0 / d } else { 1.0 }).collect();
    let ilu = match opts.preconditioner {
        Preconditioner::Ilu0 => Ilu0::factor(a),
        Preconditioner::Jacobi => None,
    };
    let ctx = Krylov { a, b, bnorm, inv_diag: &inv_diag, ilu: ilu.as_ref(), tol: opts.rel_tol, max_iter };
    let (iterations, converged) = match method {
        Method::Cg => ctx.cg(&mut x),
        _ => ctx.bicgstab(&mut x),
    };
    let residual = ctx.true_residual(&x);
    let converged = converged && residual <= opts.rel_tol;
    Ok((x, SolveReport { iterations, residual, converged, method }))
}

struct Krylov<'a> {
    a: &'a CsrMatrix,
    b: &'a [f64],
    bnorm: f64,
    inv_diag: &'a [f64],
    ilu: Option<&'a Ilu0<'a>>,
    tol: f64,
    max_iter: usize,
}

impl Krylov<'_> {
    fn residual_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut r = self.a.matvec(x).expect("dimension checked");
        r.par_iter_mut().zip(self.b).for_each(|(ri, bi)| *ri = bi - *ri);
        r
    }

    fn true_residual(&self, x: &[f64]) -> f64 {
        norm2(&self.residual_vec(x)) / self.bnorm
    }

    fn precondition(&self, r: &[f64]) -> Vec<f64> {
        if let Some(ilu) = self.ilu {
            return ilu.apply(r);
        }
        r.par_iter().zip(self.inv_diag).map(|(ri, di)| ri * di).collect()
    }

    fn cg(&self, x: &mut [f64]) -> (usize, bool) {
        let n = x.len();
        let mut it = 0;
        let mut q = vec![0.0; n];
        // Outer loop restarts from the true residual when the recursive one drifts.
        for _ in 0..8 {
            let mut r = self.residual_vec(x);
            if norm2(&r) / self.bnorm <= self.tol {
                return (it, true);
            }
            let mut z = self.precondition(&r);
            let mut p = z.clone();
            let mut rz = dot(&r, &z);
            loop {
                if it >= self.max_iter {
                    return (it, false);
                }
                it += 1;
                self.a.matvec_into(&p, &mut q).expect("dimension checked");
                let pq = dot(&p, &q);
                if !(pq > 0.0) || !pq.is_finite() {
                    return (it, false);
                }
                let alpha = rz / pq;
                axpy(alpha, &p, x);
                axpy(-alpha, &q, &mut r);
                if norm2(&r) / self.bnorm <= self.tol {
                    break;
                }
                z = self.precondition(&r);
                let rz_new = dot(&r, &z);
                let beta = rz_new / rz;
                rz = rz_new;
                p.par_iter_mut().zip(&z).for_each(|(pi, zi)| *pi = zi + beta * *pi);
            }
            if self.true_residual(x) <= self.tol {
                return (it, true);
            }
        }
        (it, false)
    }

    fn bicgstab(&self, x: &mut [f64]) -> (usize, bool) {
        let n = x.len();
        let mut it = 0;
        let mut v = vec![0.0; n];
        let mut t = vec![0.0; n];
        for _ in 0..16 {
            let mut r = self.residual_vec(x);
            if norm2(&r) / self.bnorm <= self.tol {
                return (it, true);
            }
            let r_hat = r.clone();
            let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
            let mut p = vec![0.0; n];
            v.iter_mut().for_each(|e| *e = 0.0);
            let mut restart = false;
            while !restart {
                if it >= self.max_iter {
                    return (it, false);
                }
                it += 1;
                let rho_new = dot(&r_hat, &r);
                if rho_new == 0.0 || !rho_new.is_finite() {
                    restart = true;
                    continue;
                }
                let beta = (rho_new / rho) * (alpha / omega);
                rho = rho_new;
                p.par_iter_mut()
                    .zip(&r)
                    .zip(&v)
                    .for_each(|((pi, ri), vi)| *pi = ri + beta * (*pi - omega * vi));
                let y = self.precondition(&p);
                self.a.matvec_into(&y, &mut v).expect("dimension checked");
                let rv = dot(&r_hat, &v);
                if rv == 0.0 || !rv.is_finite() {
                    restart = true;
                    continue;
                }
                alpha = rho / rv;
                let mut s = r.clone();
                axpy(-alpha, &v, &mut s);
                if norm2(&s) / self.bnorm <= self.tol {
                    axpy(alpha, &y, x);
                    break;
                }
                let z = self.precondition(&s);
                self.a.matvec_into(&z, &mut t).expect("dimension checked");
                let tt = dot(&t, &t);
                if tt == 0.0 || !tt.is_finite() {
                    axpy(alpha, &y, x);
                    restart = true;
                    continue;
                }
                omega = dot(&t, &s) / tt;
                axpy(alpha, &y, x);
                axpy(omega, &z, x);
                r = s;
                axpy(-omega, &t, &mut r);
                if norm2(&r) / self.bnorm <= self.tol {
                    break;
                }
                if omega == 0.0 {
                    restart = true;
                }
            }
            if !restart && self.true_residual(x) <= self.tol {
                return (it, true);
            }
            if x.iter().any(|v| !v.is_finite()) {
                return (it, false);
            }
        }
        (it, false)
    }
}
