//! Small linear-algebra kernels for the implicit solves: a banded LU with
//! partial pivoting (1D Jacobians), a CSR matrix with restarted GMRES and a
//! cell-block Jacobi preconditioner (2D Jacobians).

use crate::error::SolveError;

/// Banded matrix in LAPACK `gbtrf` layout: entry `(i, j)` lives at
/// `data[j * ldab + kl + ku + i - j]`, with `kl` extra superdiagonals of
/// storage for pivoting fill (`ldab = 2*kl + ku + 1`).
#[derive(Debug, Clone)]
pub struct Banded {
    n: usize,
    kl: usize,
    ku: usize,
    ldab: usize,
    data: Vec<f64>,
    ipiv: Vec<usize>,
    factored: bool,
}

impl Banded {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let ldab = 2 * kl + ku + 1;
        Banded {
            n,
            kl,
            ku,
            ldab,
            data: vec![0.0; ldab * n],
            ipiv: vec![0; n],
            factored: false,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn reset(&mut self) {
        self.data.fill(0.0);
        self.factored = false;
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < self.n && j < self.n);
        debug_assert!(j as isize - i as isize <= (self.kl + self.ku) as isize);
        debug_assert!(i as isize - j as isize <= self.kl as isize);
        j * self.ldab + self.kl + self.ku + i - j
    }

    /// Sets `(i, j)`; the entry must lie within the declared band.
    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let at = self.idx(i, j);
        self.data[at] = v;
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[self.idx(i, j)]
    }

    /// In-place LU with partial pivoting.
    pub fn factor(&mut self) -> Result<(), SolveError> {
        let n = self.n;
        let kl = self.kl;
        let kw = self.kl + self.ku; // working upper bandwidth after fill
        for j in 0..n {
            let pmax = (j + kl).min(n - 1);
            let mut ip = j;
            let mut best = self.get(j, j).abs();
            for i in (j + 1)..=pmax {
                let v = self.get(i, j).abs();
                if v > best {
                    best = v;
                    ip = i;
                }
            }
            if best == 0.0 {
                return Err(SolveError::SingularMatrix);
            }
            self.ipiv[j] = ip;
            let cmax = (j + kw).min(n - 1);
            if ip != j {
                for col in j..=cmax {
                    let a = self.idx(j, col);
                    let b = self.idx(ip, col);
                    self.data.swap(a, b);
                }
            }
            let pivot = self.get(j, j);
            for i in (j + 1)..=pmax {
                let m = self.get(i, j) / pivot;
                self.set(i, j, m);
                if m != 0.0 {
                    for col in (j + 1)..=cmax {
                        let v = self.get(i, col) - m * self.get(j, col);
                        self.set(i, col, v);
                    }
                }
            }
        }
        self.factored = true;
        Ok(())
    }

    /// Solves `A x = b` in place using the stored factorization.
    pub fn solve(&self, b: &mut [f64]) {
        assert!(self.factored, "factor() must succeed before solve()");
        let n = self.n;
        let kl = self.kl;
        let kw = self.kl + self.ku;
        for j in 0..n {
            let ip = self.ipiv[j];
            if ip != j {
                b.swap(ip, j);
            }
            let bj = b[j];
            if bj != 0.0 {
                let imax = (j + kl).min(n - 1);
                for i in (j + 1)..=imax {
                    b[i] -= self.get(i, j) * bj;
                }
            }
        }
        for j in (0..n).rev() {
            let mut s = b[j];
            let cmax = (j + kw).min(n - 1);
            for col in (j + 1)..=cmax {
                s -= self.get(j, col) * b[col];
            }
            b[j] = s / self.get(j, j);
        }
    }
}

/// Compressed sparse row matrix with a fixed pattern.
#[derive(Debug, Clone)]
pub struct Csr {
    n: usize,
    row_ptr: Vec<usize>,
    col: Vec<u32>,
    val: Vec<f64>,
}

impl Csr {
    /// Builds an empty matrix from sorted per-row column lists.
    pub fn from_pattern(rows: &[Vec<u32>]) -> Self {
        let n = rows.len();
        let mut row_ptr = Vec::with_capacity(n + 1);
        row_ptr.push(0usize);
        let mut col = Vec::new();
        for r in rows {
            debug_assert!(r.windows(2).all(|w| w[0] < w[1]), "columns must be sorted");
            col.extend_from_slice(r);
            row_ptr.push(col.len());
        }
        let nnz = col.len();
        Csr {
            n,
            row_ptr,
            col,
            val: vec![0.0; nnz],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn clear_values(&mut self) {
        self.val.fill(0.0);
    }

    /// Sets entry `(i, j)`; the position must exist in the pattern.
    #[inline]
    pub fn set(&mut self, i: usize, j: u32, v: f64) {
        let lo = self.row_ptr[i];
        let hi = self.row_ptr[i + 1];
        match self.col[lo..hi].binary_search(&j) {
            Ok(off) => self.val[lo + off] = v,
            Err(_) => panic!("entry ({i}, {j}) outside CSR pattern"),
        }
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for i in 0..self.n {
            let lo = self.row_ptr[i];
            let hi = self.row_ptr[i + 1];
            let mut s = 0.0;
            for k in lo..hi {
                s += self.val[k] * x[self.col[k] as usize];
            }
            y[i] = s;
        }
    }
}

/// Jacobi preconditioner over the `c x c` diagonal blocks of a cell-major
/// system; blocks are inverted on construction.
#[derive(Debug, Clone)]
pub struct BlockJacobi {
    c: usize,
    inv: Vec<f64>, // n_blocks * c * c, row-major per block
}

impl BlockJacobi {
    pub fn from_csr(mat: &Csr, c: usize) -> Result<Self, SolveError> {
        assert_eq!(mat.n() % c, 0);
        let n_blocks = mat.n() / c;
        let mut inv = vec![0.0; n_blocks * c * c];
        let mut block = vec![0.0; c * c];
        for b in 0..n_blocks {
            block.fill(0.0);
            for r in 0..c {
                let i = b * c + r;
                let lo = mat.row_ptr[i];
                let hi = mat.row_ptr[i + 1];
                for k in lo..hi {
                    let j = mat.col[k] as usize;
                    if j >= b * c && j < (b + 1) * c {
                        block[r * c + (j - b * c)] = mat.val[k];
                    }
                }
            }
            invert_small(&mut block, c)?;
            inv[b * c * c..(b + 1) * c * c].copy_from_slice(&block);
        }
        Ok(BlockJacobi { c, inv })
    }

    pub fn apply(&self, r: &[f64], z: &mut [f64]) {
        let c = self.c;
        for (b, rb) in r.chunks_exact(c).enumerate() {
            let m = &self.inv[b * c * c..(b + 1) * c * c];
            let zb = &mut z[b * c..(b + 1) * c];
            for i in 0..c {
                let mut s = 0.0;
                for j in 0..c {
                    s += m[i * c + j] * rb[j];
                }
                zb[i] = s;
            }
        }
    }
}

/// In-place inverse of a small row-major matrix (Gauss-Jordan, partial
/// pivoting).
pub fn invert_small(a: &mut [f64], n: usize) -> Result<(), SolveError> {
    assert_eq!(a.len(), n * n);
    let mut aug = vec![0.0; n * 2 * n];
    for i in 0..n {
        aug[i * 2 * n..i * 2 * n + n].copy_from_slice(&a[i * n..(i + 1) * n]);
        aug[i * 2 * n + n + i] = 1.0;
    }
    let w = 2 * n;
    for col in 0..n {
        let mut ip = col;
        let mut best = aug[col * w + col].abs();
        for r in (col + 1)..n {
            let v = aug[r * w + col].abs();
            if v > best {
                best = v;
                ip = r;
            }
        }
        if best == 0.0 {
            return Err(SolveError::SingularMatrix);
        }
        if ip != col {
            for k in 0..w {
                aug.swap(col * w + k, ip * w + k);
            }
        }
        let piv = aug[col * w + col];
        for k in 0..w {
            aug[col * w + k] /= piv;
        }
        for r in 0..n {
            if r == col {
                continue;
            }
            let m = aug[r * w + col];
            if m != 0.0 {
                for k in 0..w {
                    aug[r * w + k] -= m * aug[col * w + k];
                }
            }
        }
    }
    for i in 0..n {
        a[i * n..(i + 1) * n].copy_from_slice(&aug[i * w + n..i * w + 2 * n]);
    }
    Ok(())
}

#[derive(Debug, Clone, Copy)]
pub struct GmresOpts {
    pub tol_rel: f64,
    pub restart: usize,
    pub max_iter: usize,
}

impl Default for GmresOpts {
    fn default() -> Self {
        GmresOpts {
            tol_rel: 1e-6,
            restart: 60,
            max_iter: 400,
        }
    }
}

/// Right-preconditioned restarted GMRES; overwrites `x` with the solution of
/// `A x = b` starting from the zero vector.
pub fn gmres(
    mat: &Csr,
    prec: &BlockJacobi,
    b: &[f64],
    x: &mut [f64],
    opts: GmresOpts,
) -> Result<usize, SolveError> {
    let n = mat.n();
    assert_eq!(b.len(), n);
    assert_eq!(x.len(), n);
    x.fill(0.0);

    let bnorm = norm2(b);
    if bnorm == 0.0 {
        return Ok(0);
    }
    let target = opts.tol_rel * bnorm;

    let m = opts.restart;
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(m + 1);
    let mut h = vec![0.0; (m + 1) * m];
    let mut cs = vec![0.0; m];
    let mut sn = vec![0.0; m];
    let mut g = vec![0.0; m + 1];
    let mut z = vec![0.0; n];
    let mut w = vec![0.0; n];
    let mut total_iters = 0usize;
    let mut r = b.to_vec(); // x starts at zero, so r = b

    loop {
        let rnorm = norm2(&r);
        if rnorm <= target {
            return Ok(total_iters);
        }
        basis.clear();
        let mut v0 = r.clone();
        scale(&mut v0, 1.0 / rnorm);
        basis.push(v0);
        g.fill(0.0);
        g[0] = rnorm;

        let mut k_used = 0;
        for k in 0..m {
            if total_iters >= opts.max_iter {
                break;
            }
            total_iters += 1;
            prec.apply(&basis[k], &mut z);
            mat.matvec(&z, &mut w);
            // Modified Gram-Schmidt.
            for i in 0..=k {
                let hik = dot(&w, &basis[i]);
                h[i * m + k] = hik;
                axpy(&mut w, -hik, &basis[i]);
            }
            let hkk = norm2(&w);
            h[(k + 1) * m + k] = hkk;
            // Apply existing Givens rotations to the new column.
            for i in 0..k {
                let t = cs[i] * h[i * m + k] + sn[i] * h[(i + 1) * m + k];
                h[(i + 1) * m + k] = -sn[i] * h[i * m + k] + cs[i] * h[(i + 1) * m + k];
                h[i * m + k] = t;
            }
            let denom = (h[k * m + k] * h[k * m + k] + hkk * hkk).sqrt();
            if denom == 0.0 {
                k_used = k;
                break;
            }
            cs[k] = h[k * m + k] / denom;
            sn[k] = hkk / denom;
            h[k * m + k] = denom;
            g[k + 1] = -sn[k] * g[k];
            g[k] *= cs[k];
            k_used = k + 1;
            if hkk != 0.0 {
                let mut vk = w.clone();
                scale(&mut vk, 1.0 / hkk);
                basis.push(vk);
            }
            if g[k + 1].abs() <= target || hkk == 0.0 {
                break;
            }
        }

        if k_used > 0 {
            // Back-substitute for the Krylov coefficients.
            let mut y = vec![0.0; k_used];
            for i in (0..k_used).rev() {
                let mut s = g[i];
                for j in (i + 1)..k_used {
                    s -= h[i * m + j] * y[j];
                }
                y[i] = s / h[i * m + i];
            }
            // x += M^{-1} (V y)
            w.fill(0.0);
            for (i, yi) in y.iter().enumerate() {
                axpy(&mut w, *yi, &basis[i]);
            }
            prec.apply(&w, &mut z);
            for i in 0..n {
                x[i] += z[i];
            }
        }

        // True residual for the restart/convergence test.
        mat.matvec(x, &mut w);
        for i in 0..n {
            r[i] = b[i] - w[i];
        }
        let rnorm = norm2(&r);
        if rnorm <= target {
            return Ok(total_iters);
        }
        if total_iters >= opts.max_iter {
            return Err(SolveError::LinearStall {
                relative_residual: rnorm / bnorm,
            });
        }
    }
}

#[inline]
pub fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[inline]
pub fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
fn scale(v: &mut [f64], s: f64) {
    for x in v {
        *x *= s;
    }
}

#[inline]
fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// Compensated (Kahan) sum; the conservation checks need more accuracy than
/// a naive accumulation over 10^4 cells provides.
pub fn kahan_sum(values: impl Iterator<Item = f64>) -> f64 {
    let mut s = 0.0;
    let mut comp = 0.0;
    for v in values {
        let y = v - comp;
        let t = s + y;
        comp = (t - s) - y;
        s = t;
    }
    s
}
