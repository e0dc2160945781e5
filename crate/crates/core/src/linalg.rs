//! Dense complex linear algebra shared by every module: Kronecker powers,
//! permutation operators, null spaces and subspace comparisons.
//!
//! Subspaces of matrix spaces are handled as orthonormal column bases of the
//! column-major vectorization (`vec`), so a space of `rows × cols` matrices
//! lives in `C^{rows·cols}`.

use itertools::Itertools;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex;
use rand::Rng;
use rand_distr::StandardNormal;

pub type C64 = Complex<f64>;
pub type Mat = DMatrix<C64>;

/// Absolute equality tolerance on unit-normalized data.
pub const TOL: f64 = 1e-9;

/// Eigenvalue cut for Gram-matrix null spaces (singular values below ~1e-6).
const GRAM_CUT: f64 = 1e-12;

pub fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

pub fn eye(n: usize) -> Mat {
    Mat::identity(n, n)
}

pub fn kron(a: &Mat, b: &Mat) -> Mat {
    a.kronecker(b)
}

/// `a ⊗ a ⊗ … ⊗ a` (`r` factors); the empty power is the 1×1 identity.
pub fn kron_pow(a: &Mat, r: usize) -> Mat {
    let mut out = eye(1);
    for _ in 0..r {
        out = kron(&out, a);
    }
    out
}

pub fn max_abs(m: &Mat) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn diff_abs(a: &Mat, b: &Mat) -> f64 {
    assert_eq!(a.shape(), b.shape(), "shape mismatch in diff_abs");
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

/// Operator (spectral) norm.
pub fn op_norm(m: &Mat) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    let g = if m.nrows() >= m.ncols() {
        m.adjoint() * m
    } else {
        m * m.adjoint()
    };
    let eig = g.symmetric_eigenvalues();
    eig.iter().cloned().fold(0.0, f64::max).max(0.0).sqrt()
}

pub fn is_unitary(m: &Mat, tol: f64) -> bool {
    m.is_square() && diff_abs(&(m.adjoint() * m), &eye(m.nrows())) < tol
}

pub fn vec_of(m: &Mat) -> DVector<C64> {
    DVector::from_column_slice(m.as_slice())
}

pub fn unvec(v: &[C64], rows: usize, cols: usize) -> Mat {
    Mat::from_column_slice(rows, cols, v)
}

/// Hermitian eigen-decomposition, eigenvalues ascending with matching columns.
pub fn eigh(m: &Mat) -> (Vec<f64>, Mat) {
    let n = m.nrows();
    let h = (m + m.adjoint()) * c(0.5);
    let se = h.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| se.eigenvalues[i].partial_cmp(&se.eigenvalues[j]).unwrap());
    let vals = order.iter().map(|&i| se.eigenvalues[i]).collect();
    let mut vecs = Mat::zeros(n, n);
    for (k, &i) in order.iter().enumerate() {
        vecs.set_column(k, &se.eigenvectors.column(i));
    }
    (vals, vecs)
}

/// Orthonormal basis (as columns) of the range of a Hermitian projection,
/// keeping eigenvalues above one half.
pub fn projection_range(p: &Mat) -> Mat {
    let (vals, vecs) = eigh(p);
    let keep: Vec<usize> = (0..vals.len()).filter(|&i| vals[i] > 0.5).collect();
    select_columns(&vecs, &keep)
}

pub fn select_columns(m: &Mat, idx: &[usize]) -> Mat {
    let mut out = Mat::zeros(m.nrows(), idx.len());
    for (k, &i) in idx.iter().enumerate() {
        out.set_column(k, &m.column(i));
    }
    out
}

pub fn hstack(blocks: &[&Mat]) -> Mat {
    let rows = blocks.first().map(|b| b.nrows()).unwrap_or(0);
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = Mat::zeros(rows, cols);
    let mut at = 0;
    for b in blocks {
        assert_eq!(b.nrows(), rows);
        out.view_mut((0, at), (rows, b.ncols())).copy_from(*b);
        at += b.ncols();
    }
    out
}

/// Orthonormal basis of the null space of `a` (columns).
///
/// Uses the Gram matrix `a* a`; adequate here since every constraint system
/// is built from unitaries, projections and permutations.
pub fn null_space(a: &Mat) -> Mat {
    let n = a.ncols();
    if a.nrows() == 0 {
        return eye(n);
    }
    let gram = a.adjoint() * a;
    let scale = gram.diagonal().iter().map(|z| z.re).fold(1.0, f64::max);
    let (vals, vecs) = eigh(&gram);
    let keep: Vec<usize> = (0..n).filter(|&i| vals[i] < GRAM_CUT * scale).collect();
    select_columns(&vecs, &keep)
}

/// Incremental null-space computation over a stream of constraint blocks.
/// Keeps the current solution basis small so late blocks are cheap.
pub struct NullSpace {
    basis: Mat,
}

impl NullSpace {
    pub fn full(n: usize) -> Self {
        Self { basis: eye(n) }
    }

    pub fn within(basis: Mat) -> Self {
        Self { basis }
    }

    /// Imposes `block · v = 0` for `v` in the current space.
    pub fn constrain(&mut self, block: &Mat) {
        if self.basis.ncols() == 0 || block.nrows() == 0 {
            return;
        }
        let reduced = block * &self.basis;
        let k = null_space(&reduced);
        self.basis = orthonormalize(&(&self.basis * k));
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn basis(&self) -> &Mat {
        &self.basis
    }

    pub fn into_basis(self) -> Mat {
        self.basis
    }
}

/// Orthonormal basis of the column span of `m` (rank-revealing via eigh).
pub fn orthonormalize(m: &Mat) -> Mat {
    if m.ncols() == 0 {
        return Mat::zeros(m.nrows(), 0);
    }
    let gram = m.adjoint() * m;
    let scale = gram.diagonal().iter().map(|z| z.re).fold(0.0, f64::max);
    if scale <= 0.0 {
        return Mat::zeros(m.nrows(), 0);
    }
    let (vals, vecs) = eigh(&gram);
    let keep: Vec<usize> = (0..vals.len())
        .filter(|&i| vals[i] > 1e-10 * scale.max(1e-300))
        .collect();
    let mut out = Mat::zeros(m.nrows(), keep.len());
    for (k, &i) in keep.iter().enumerate() {
        let v = m * vecs.column(i);
        out.set_column(k, &(v * c(1.0 / vals[i].sqrt())));
    }
    // one re-orthonormalization pass for accuracy
    let q = out.clone().qr().q();
    q.columns(0, keep.len()).into_owned()
}

/// Span of a list of matrices of equal shape, as an orthonormal basis of vecs.
pub fn span_of(mats: &[Mat], rows: usize, cols: usize) -> Mat {
    if mats.is_empty() {
        return Mat::zeros(rows * cols, 0);
    }
    let mut m = Mat::zeros(rows * cols, mats.len());
    for (k, t) in mats.iter().enumerate() {
        assert_eq!(t.shape(), (rows, cols));
        m.set_column(k, &vec_of(t));
    }
    orthonormalize(&m)
}

/// Residual of `b`'s columns outside span(`a`) (both orthonormal).
pub fn outside_residual(a: &Mat, b: &Mat) -> f64 {
    if b.ncols() == 0 {
        return 0.0;
    }
    if a.ncols() == 0 {
        return max_abs(b);
    }
    let proj = a * (a.adjoint() * b);
    diff_abs(&proj, b)
}

/// Compares two orthonormal bases; returns (dims equal, max residual of
/// either basis outside the other's span).
pub fn compare_spans(a: &Mat, b: &Mat) -> (bool, f64) {
    let r = outside_residual(a, b).max(outside_residual(b, a));
    (a.ncols() == b.ncols(), r)
}

pub fn spans_equal(a: &Mat, b: &Mat, tol: f64) -> bool {
    let (dims, r) = compare_spans(a, b);
    dims && r < tol
}

/// Intersection of two subspaces given by orthonormal bases.
pub fn intersect(a: &Mat, b: &Mat) -> Mat {
    if a.ncols() == 0 || b.ncols() == 0 {
        return Mat::zeros(a.nrows(), 0);
    }
    let m = hstack(&[a, &(-b)]);
    let k = null_space(&m);
    let coeffs = k.rows(0, a.ncols()).into_owned();
    orthonormalize(&(a * coeffs))
}

/// Sign of a permutation given in one-line notation.
pub fn perm_sign(p: &[usize]) -> f64 {
    let mut seen = vec![false; p.len()];
    let mut sign = 1.0;
    for i in 0..p.len() {
        if seen[i] {
            continue;
        }
        let mut j = i;
        let mut len = 0;
        while !seen[j] {
            seen[j] = true;
            j = p[j];
            len += 1;
        }
        if len % 2 == 0 {
            sign = -sign;
        }
    }
    sign
}

pub fn perm_compose(p: &[usize], q: &[usize]) -> Vec<usize> {
    // (p ∘ q)(i) = p(q(i))
    q.iter().map(|&i| p[i]).collect()
}

pub fn perm_inverse(p: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; p.len()];
    for (i, &j) in p.iter().enumerate() {
        inv[j] = i;
    }
    inv
}

pub fn all_perms(r: usize) -> Vec<Vec<usize>> {
    (0..r).permutations(r).collect()
}

/// Operator on `(C^dim)^{⊗r}` moving tensor slot `i` to slot `p(i)`.
/// Slot 0 is the most significant Kronecker index. `p ↦ perm_operator(p)`
/// is a homomorphism: `perm_operator(p∘q) = perm_operator(p)·perm_operator(q)`.
pub fn perm_operator(dim: usize, p: &[usize]) -> Mat {
    let r = p.len();
    let total = dim.pow(r as u32);
    let mut out = Mat::zeros(total, total);
    let mut digits = vec![0usize; r];
    for idx in 0..total {
        let mut rem = idx;
        for k in (0..r).rev() {
            digits[k] = rem % dim;
            rem /= dim;
        }
        let mut target = vec![0usize; r];
        for i in 0..r {
            target[p[i]] = digits[i];
        }
        let j = target.iter().fold(0, |acc, &t| acc * dim + t);
        out[(j, idx)] = c(1.0);
    }
    out
}

/// Unit-norm totally antisymmetric vector in `(C^d)^{⊗d}`.
pub fn antisymmetric_unit(d: usize) -> Mat {
    let total = d.pow(d as u32);
    let mut v = Mat::zeros(total, 1);
    let mut count = 0usize;
    for p in all_perms(d) {
        let idx = p.iter().fold(0, |acc, &t| acc * d + t);
        v[(idx, 0)] += c(perm_sign(&p));
        count += 1;
    }
    v * c(1.0 / (count as f64).sqrt())
}

/// Normalized antisymmetrizer `(1/r!) Σ sign(p) θ(p)` on `(C^dim)^{⊗r}`.
pub fn antisymmetrizer(dim: usize, r: usize) -> Mat {
    let perms = all_perms(r);
    let n = perms.len() as f64;
    let total = dim.pow(r as u32);
    let mut out = Mat::zeros(total, total);
    for p in &perms {
        out += perm_operator(dim, p) * c(perm_sign(p));
    }
    out * c(1.0 / n)
}

/// Haar-random unitary via QR of a complex Gaussian matrix.
pub fn random_unitary<R: Rng>(rng: &mut R, d: usize) -> Mat {
    let mut z = Mat::zeros(d, d);
    for v in z.iter_mut() {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        *v = C64::new(re, im) * (0.5f64).sqrt();
    }
    let qr = z.qr();
    let q = qr.q();
    let r = qr.r();
    let mut out = q.clone();
    for j in 0..d {
        let rj = r[(j, j)];
        let ph = if rj.norm() > 0.0 { rj / rj.norm() } else { c(1.0) };
        for i in 0..d {
            out[(i, j)] *= ph;
        }
    }
    out
}

pub fn random_special_unitary<R: Rng>(rng: &mut R, d: usize) -> Mat {
    let u = random_unitary(rng, d);
    let det = u.determinant();
    let phase = C64::from_polar(1.0, -det.arg() / d as f64);
    u * phase
}

pub fn random_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> Mat {
    let mut z = Mat::zeros(rows, cols);
    for v in z.iter_mut() {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        *v = C64::new(re, im);
    }
    z
}
