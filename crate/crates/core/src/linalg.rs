//! Sparse matrices and the linear solvers used inside Newton iterations.

use crate::error::{Error, Result};

/// Compressed sparse row matrix with sorted, duplicate-free columns.
#[derive(Clone, Debug)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl CsrMatrix {
    /// Duplicated `(row, col)` entries are summed.
    pub fn from_triplets(n: usize, mut triplets: Vec<(usize, usize, f64)>) -> Self {
        triplets.sort_unstable_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0usize; n + 1];
        let mut cols = Vec::with_capacity(triplets.len());
        let mut vals: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            if last == Some((r, c)) {
                *vals.last_mut().unwrap() += v;
                continue;
            }
            cols.push(c);
            vals.push(v);
            row_ptr[r + 1] += 1;
            last = Some((r, c));
        }
        for r in 0..n {
            row_ptr[r + 1] += row_ptr[r];
        }
        Self {
            n,
            row_ptr,
            cols,
            vals,
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        self.cols[span.clone()].iter().copied().zip(self.vals[span].iter().copied())
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.row(r).find(|&(cc, _)| cc == c).map_or(0.0, |(_, v)| v)
    }

    pub fn mul_vec(&self, x: &[f64], y: &mut [f64]) {
        for (r, yr) in y.iter_mut().enumerate() {
            *yr = self.row(r).map(|(c, v)| v * x[c]).sum();
        }
    }

    /// Largest `|row - col|` over the stored entries.
    pub fn bandwidth(&self) -> usize {
        (0..self.n)
            .flat_map(|r| self.row(r).map(move |(c, _)| r.abs_diff(c)))
            .max()
            .unwrap_or(0)
    }

    fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|r| self.get(r, r)).collect()
    }
}

#[derive(Clone, Copy, Debug)]
pub struct LinearOptions {
    pub tol: f64,
    pub max_iter: usize,
}

/// Solves `A x = b`. Tridiagonal systems are solved directly; everything
/// else goes through ILU(0)-preconditioned BiCGSTAB to relative tolerance
/// `opts.tol`.
pub fn solve(a: &CsrMatrix, b: &[f64], opts: LinearOptions) -> Result<Vec<f64>> {
    if a.dim() == 0 {
        return Ok(Vec::new());
    }
    if a.bandwidth() <= 1 {
        return solve_tridiagonal(a, b);
    }
    bicgstab(a, b, opts)
}

/// Thomas algorithm. Stable for diagonally dominant or symmetric definite
/// tridiagonal matrices, which covers every 1D system assembled here.
pub fn solve_tridiagonal(a: &CsrMatrix, b: &[f64]) -> Result<Vec<f64>> {
    let n = a.dim();
    let mut c_prime = vec![0.0; n];
    let mut d_prime = vec![0.0; n];
    for i in 0..n {
        let lower = if i > 0 { a.get(i, i - 1) } else { 0.0 };
        let upper = if i + 1 < n { a.get(i, i + 1) } else { 0.0 };
        let denom = a.get(i, i) - lower * if i > 0 { c_prime[i - 1] } else { 0.0 };
        if denom == 0.0 || !denom.is_finite() {
            return Err(Error::LinearBreakdown(format!("zero pivot in tridiagonal solve at row {i}")));
        }
        c_prime[i] = upper / denom;
        d_prime[i] = (b[i] - lower * if i > 0 { d_prime[i - 1] } else { 0.0 }) / denom;
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        x[i] = d_prime[i] - if i + 1 < n { c_prime[i] * x[i + 1] } else { 0.0 };
    }
    Ok(x)
}

/// Incomplete LU factorisation with the sparsity pattern of `A`.
struct Ilu0 {
    lu: CsrMatrix,
    diag_pos: Vec<usize>,
}

impl Ilu0 {
    fn new(a: &CsrMatrix) -> Result<Self> {
        let mut lu = a.clone();
        let n = lu.n;
        let mut diag_pos = vec![usize::MAX; n];
        for (r, pos) in diag_pos.iter_mut().enumerate() {
            for k in lu.row_ptr[r]..lu.row_ptr[r + 1] {
                if lu.cols[k] == r {
                    *pos = k;
                }
            }
            if *pos == usize::MAX {
                return Err(Error::LinearBreakdown(format!("missing diagonal in row {r}")));
            }
        }
        let mut col_pos = vec![usize::MAX; n];
        for r in 0..n {
            let span = lu.row_ptr[r]..lu.row_ptr[r + 1];
            for k in span.clone() {
                col_pos[lu.cols[k]] = k;
            }
            for k in span.clone() {
                let c = lu.cols[k];
                if c >= r {
                    break;
                }
                let pivot = lu.vals[diag_pos[c]];
                if pivot == 0.0 {
                    return Err(Error::LinearBreakdown(format!("zero ILU pivot at row {c}")));
                }
                let factor = lu.vals[k] / pivot;
                lu.vals[k] = factor;
                for kk in diag_pos[c] + 1..lu.row_ptr[c + 1] {
                    let pos = col_pos[lu.cols[kk]];
                    if pos != usize::MAX {
                        lu.vals[pos] -= factor * lu.vals[kk];
                    }
                }
            }
            for k in span {
                col_pos[lu.cols[k]] = usize::MAX;
            }
        }
        Ok(Self { lu, diag_pos })
    }

    fn apply(&self, r: &[f64], z: &mut [f64]) {
        let lu = &self.lu;
        let n = lu.n;
        for i in 0..n {
            let mut s = r[i];
            for k in lu.row_ptr[i]..self.diag_pos[i] {
                s -= lu.vals[k] * z[lu.cols[k]];
            }
            z[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = z[i];
            for k in self.diag_pos[i] + 1..lu.row_ptr[i + 1] {
                s -= lu.vals[k] * z[lu.cols[k]];
            }
            z[i] = s / lu.vals[self.diag_pos[i]];
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Right-preconditioned BiCGSTAB.
pub fn bicgstab(a: &CsrMatrix, b: &[f64], opts: LinearOptions) -> Result<Vec<f64>> {
    let n = a.dim();
    let prec = Ilu0::new(a)?;
    let b_norm = norm2(b);
    let mut x = vec![0.0; n];
    if b_norm == 0.0 {
        return Ok(x);
    }
    let mut r = b.to_vec();
    let r_hat = r.clone();
    let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut p_hat = vec![0.0; n];
    let mut s_hat = vec![0.0; n];
    let mut t = vec![0.0; n];
    for _ in 0..opts.max_iter {
        let rho_new = dot(&r_hat, &r);
        if rho_new == 0.0 || omega == 0.0 {
            return Err(Error::LinearBreakdown("BiCGSTAB: rho or omega vanished".into()));
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        prec.apply(&p, &mut p_hat);
        a.mul_vec(&p_hat, &mut v);
        let denom = dot(&r_hat, &v);
        if denom == 0.0 {
            return Err(Error::LinearBreakdown("BiCGSTAB: <r_hat, v> vanished".into()));
        }
        alpha = rho / denom;
        for i in 0..n {
            x[i] += alpha * p_hat[i];
            r[i] -= alpha * v[i];
        }
        if norm2(&r) <= opts.tol * b_norm {
            return Ok(x);
        }
        prec.apply(&r, &mut s_hat);
        a.mul_vec(&s_hat, &mut t);
        let tt = dot(&t, &t);
        if tt == 0.0 {
            return Err(Error::LinearBreakdown("BiCGSTAB: t vanished".into()));
        }
        omega = dot(&t, &r) / tt;
        for i in 0..n {
            x[i] += omega * s_hat[i];
            r[i] -= omega * t[i];
        }
        if norm2(&r) <= opts.tol * b_norm {
            return Ok(x);
        }
    }
    Err(Error::LinearBreakdown(format!(
        "BiCGSTAB did not reach tolerance {:e} in {} iterations",
        opts.tol, opts.max_iter
    )))
}

/// Jacobi-preconditioned conjugate gradients for symmetric positive definite `A`.
pub fn conjugate_gradient(a: &CsrMatrix, b: &[f64], opts: LinearOptions) -> Result<Vec<f64>> {
    let n = a.dim();
    let inv_diag: Vec<f64> = a
        .diagonal()
        .iter()
        .map(|&d| if d > 0.0 { 1.0 / d } else { 1.0 })
        .collect();
    let b_norm = norm2(b);
    let mut x = vec![0.0; n];
    if b_norm == 0.0 {
        return Ok(x);
    }
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(r, d)| r * d).collect();
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz = dot(&r, &z);
    for _ in 0..opts.max_iter {
        a.mul_vec(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            return Err(Error::LinearBreakdown("CG: matrix is not positive definite".into()));
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        if norm2(&r) <= opts.tol * b_norm {
            return Ok(x);
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::LinearBreakdown(format!(
        "CG did not reach tolerance {:e} in {} iterations",
        opts.tol, opts.max_iter
    )))
}
